//! Studies built on the dispatch model: single runs, mode comparisons,
//! carbon-price sweeps and Monte-Carlo checks of the reserve chance constraint.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::carbon::{CarbonLedger, PricingMode};
use crate::config::SystemConfig;
use crate::dispatch::{
    self, extract_schedule, Audit, BuildError, CostBreakdown, DispatchSchedule, ExtractError, Mode, ScheduleCsvError,
};
use crate::milp::{diagnose_infeasibility, solve, HighsBackend, SolveError, SolveLimits, SolveStatus, SolverBackend};

/// Standard errors added to `1 − alpha` before a shortfall frequency fails.
pub const DEFAULT_SIGMAS: f64 = 3.0;
/// Reporting resolution of emissions, t.
pub const TONNE_RESOLUTION: f64 = 1e-3;
/// Reporting resolution of money, ¥.
pub const MONEY_RESOLUTION: f64 = 1e-2;
/// Rows listed when explaining an infeasible model.
const DIAGNOSIS_ROWS: usize = 8;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("mode {mode}: model is infeasible; rows that must give way: {}", list_rows(.rows))]
    Infeasible { mode: Mode, rows: Vec<(String, f64)> },
    #[error("mode {mode}: solver limit reached with gap {gap:.3e}")]
    Limit { mode: Mode, gap: f64 },
    #[error("mode {mode}: solve ended {status:?}")]
    Status { mode: Mode, status: SolveStatus },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Schedule(#[from] ScheduleCsvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("price grid: {0}")]
    Grid(String),
}

impl AnalysisError {
    /// True when the model itself has no feasible point.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, AnalysisError::Infeasible { .. } | AnalysisError::Build(BuildError::Infeasible { .. }))
    }

    pub fn is_limit(&self) -> bool {
        matches!(
            self,
            AnalysisError::Limit { .. } | AnalysisError::Solve(SolveError::LimitWithoutIncumbent)
        )
    }
}

fn list_rows(rows: &[(String, f64)]) -> String {
    if rows.is_empty() {
        return "none identified".into();
    }
    rows.iter().map(|(l, s)| format!("{l} ({s:.4})")).collect::<Vec<_>>().join(", ")
}

/// Thread pool running at most `parallelism` jobs; `None` uses every core.
pub fn bounded_pool(parallelism: Option<usize>) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .expect("thread pool")
}

/// Backend for one of several concurrent solves: single-threaded, so the jobs
/// themselves carry the parallelism.
fn job_backend() -> HighsBackend {
    HighsBackend {
        threads: Some(1),
        ..HighsBackend::default()
    }
}

/// Outcome of one optimal solve, with costs and emissions recomputed from the schedule.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub objective_cny: f64,
    pub mip_gap: f64,
    pub wall_time_s: f64,
    pub binaries: usize,
    pub constraints: usize,
    pub costs: CostBreakdown,
    pub ledger: CarbonLedger,
    pub audit: Audit,
    /// Reserve the chance constraint asks for in each period, MW.
    pub required_reserve: Vec<f64>,
    #[serde(skip)]
    pub schedule: DispatchSchedule,
}

/// Runs `mode` on `config` with the default backend.
pub fn run_mode(config: &SystemConfig, mode: Mode) -> Result<RunReport, AnalysisError> {
    run_mode_with(config, mode, &HighsBackend::default())
}

/// Sequences, expectations, model, chance constraint, solve and extraction.
pub fn run_mode_with(config: &SystemConfig, mode: Mode, backend: &dyn SolverBackend) -> Result<RunReport, AnalysisError> {
    let config = config.with_mode(mode);
    let (seqs, means) = dispatch::prepare_sequences(&config).map_err(BuildError::from)?;
    let dm = dispatch::build(&config, &seqs, &means)?;
    let limits = config.solver.limits();
    let result = solve(&dm.model, backend, &limits)?;
    match result.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let mut rows = diagnose_infeasibility(&dm.model, backend, &limits)?;
            rows.truncate(DIAGNOSIS_ROWS);
            return Err(AnalysisError::Infeasible { mode, rows });
        }
        SolveStatus::Limit => return Err(AnalysisError::Limit { mode, gap: result.mip_gap }),
        status => return Err(AnalysisError::Status { mode, status }),
    }
    let ex = extract_schedule(&result, &dm, &config)?;
    let required_reserve = seqs
        .iter()
        .zip(&means)
        .map(|(c, &e)| crate::dst::min_reserve_bruteforce(c, config.alpha, e))
        .collect::<Result<_, _>>()
        .map_err(BuildError::from)?;
    Ok(RunReport {
        mode,
        objective_cny: result.objective_value,
        mip_gap: result.mip_gap,
        wall_time_s: result.wall_time.as_secs_f64(),
        binaries: dm.model.num_binaries(),
        constraints: dm.model.constraints().len(),
        audit: ex.schedule.audit(&config, mode),
        costs: ex.costs,
        ledger: ex.ledger,
        required_reserve,
        schedule: ex.schedule,
    })
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

#[derive(Serialize)]
struct CostFile<'a> {
    mode: u8,
    objective_cny: f64,
    mip_gap: f64,
    wall_time_s: f64,
    binaries: usize,
    constraints: usize,
    costs: CostBreakdown,
    audit_worst: f64,
    notes: &'a [String],
}

impl RunReport {
    /// Writes `schedule.csv`, `costs.json` and `ledger.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), AnalysisError> {
        fs::create_dir_all(dir)?;
        self.schedule.write_csv(fs::File::create(dir.join("schedule.csv"))?)?;
        self.ledger.write_csv(fs::File::create(dir.join("ledger.csv"))?)?;
        let money = |x: f64| round_to(x, MONEY_RESOLUTION);
        let c = &self.costs;
        let file = CostFile {
            mode: self.mode.number(),
            objective_cny: money(self.objective_cny),
            mip_gap: self.mip_gap,
            wall_time_s: self.wall_time_s,
            binaries: self.binaries,
            constraints: self.constraints,
            costs: CostBreakdown {
                c1: money(c.c1),
                c2: money(c.c2),
                c3: money(c.c3),
                c4: money(c.c4),
                c5: money(c.c5),
                total: money(c.total),
                c1_linearized: money(c.c1_linearized),
                c1_error_bound: money(c.c1_error_bound),
            },
            audit_worst: self.audit.worst(),
            notes: &self.audit.notes,
        };
        let mut out = fs::File::create(dir.join("costs.json"))?;
        serde_json::to_writer_pretty(&mut out, &file)?;
        writeln!(out)?;
        Ok(())
    }

    /// Plain-text summary for terminals.
    pub fn summary(&self) -> String {
        let c = &self.costs;
        let l = &self.ledger;
        format!(
            "mode {}: total {:.2} ¥ (C1 {:.2}, C2 {:.2}, C3 {:.2}, C4 {:.2}, C5 {:.2}); emissions {:.3} t, net {:.3} t at {:.2} ¥/t; gap {:.2e}, {:.2} s",
            self.mode, c.total, c.c1, c.c2, c.c3, c.c4, c.c5, l.e_r, l.e_net, l.k_applied, self.mip_gap, self.wall_time_s
        )
    }
}

/// How sweep prices enter the carbon policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepPricing {
    /// One price for every tonne.
    #[default]
    Fixed,
    /// Tiers scaled jointly so the middle tier equals the grid price.
    SteppedScale,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub price_cny_per_t: f64,
    pub emissions_t: f64,
    pub total_cost_cny: f64,
    pub tp_energy_mwh: f64,
    pub gc_energy_mwh: f64,
}

pub const SWEEP_CSV_HEADER: &str = "price_cny_per_t,emissions_t,total_cost_cny,tp_energy_mwh,gc_energy_mwh";

/// Sweep rows up to the first failing price, and that failure if any.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Full report behind each row.
    pub reports: Vec<RunReport>,
    pub failure: Option<(f64, AnalysisError)>,
}

impl SweepOutcome {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// CSV of the rows; an incomplete sweep ends with a `#` line naming the failure.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.2},{:.3},{:.2},{:.3},{:.3}",
                r.price_cny_per_t, r.emissions_t, r.total_cost_cny, r.tp_energy_mwh, r.gc_energy_mwh
            )?;
        }
        if let Some((price, e)) = &self.failure {
            writeln!(out, "# incomplete: solve at {price} ¥/t failed: {e}")?;
        }
        Ok(())
    }
}

/// Reads a sweep CSV, skipping `#` lines.
pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).unwrap_or(f64::NAN);
            Ok(SweepRow {
                price_cny_per_t: num(0),
                emissions_t: num(1),
                total_cost_cny: num(2),
                tp_energy_mwh: num(3),
                gc_energy_mwh: num(4),
            })
        })
        .collect()
}

/// `from, from + step, …` up to `to` inclusive, computed by index to avoid drift.
pub fn price_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>, AnalysisError> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(AnalysisError::Grid(format!("cannot step from {from} to {to} by {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

/// Solves `mode` once per price. Jobs run concurrently; the rows keep grid order.
pub fn sweep_carbon_price(
    config: &SystemConfig,
    mode: Mode,
    prices: &[f64],
    pricing: SweepPricing,
) -> Result<SweepOutcome, AnalysisError> {
    if prices.is_empty() {
        return Err(AnalysisError::Grid("no prices".into()));
    }
    if prices.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AnalysisError::Grid("prices must be strictly increasing".into()));
    }
    let dt = config.horizon.dt_hours;
    let k2 = config.carbon.k2;
    if pricing == SweepPricing::SteppedScale && k2 <= 0.0 {
        return Err(AnalysisError::Grid("stepped scaling needs a positive middle tier".into()));
    }
    let one = |&price: &f64| -> Result<(SweepRow, RunReport), AnalysisError> {
        let mut c = config.clone();
        c.carbon = match pricing {
            SweepPricing::Fixed => config.carbon.fixed_at(price),
            SweepPricing::SteppedScale => {
                let stepped = match config.carbon.pricing_mode {
                    PricingMode::Fixed => PricingMode::SteppedLiteral,
                    other => other,
                };
                config.carbon.with_mode(stepped).scaled(price / k2)
            }
        };
        let r = run_mode_with(&c, mode, &job_backend())?;
        let row = SweepRow {
            price_cny_per_t: price,
            emissions_t: r.ledger.e_r,
            total_cost_cny: r.costs.total,
            tp_energy_mwh: r.schedule.tp_energy(dt),
            gc_energy_mwh: r.schedule.gc_energy(dt),
        };
        Ok((row, r))
    };
    let results: Vec<_> = bounded_pool(config.solver.parallelism).install(|| prices.par_iter().map(one).collect());
    let mut out = SweepOutcome {
        rows: Vec::new(),
        reports: Vec::new(),
        failure: None,
    };
    for (&price, r) in prices.iter().zip(results) {
        match r {
            Ok((row, report)) => {
                out.rows.push(row);
                out.reports.push(report);
            }
            Err(e) => {
                out.failure = Some((price, e));
                break;
            }
        }
    }
    Ok(out)
}

/// Shape of a sweep as functions of price, judged at reporting resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepShape {
    pub emissions_nonincreasing: bool,
    /// Points at the top of the grid sharing the last emission value.
    pub plateau_points: usize,
    pub tp_nonincreasing: bool,
    pub gc_nondecreasing: bool,
    pub cost_nondecreasing: bool,
}

impl SweepShape {
    pub fn of(rows: &[SweepRow]) -> Self {
        let down = |f: fn(&SweepRow) -> f64, tol: f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]) + tol);
        let up = |f: fn(&SweepRow) -> f64, tol: f64| rows.windows(2).all(|w| f(&w[1]) >= f(&w[0]) - tol);
        let last = rows.last().map_or(0.0, |r| r.emissions_t);
        let plateau_points = rows
            .iter()
            .rev()
            .take_while(|r| (r.emissions_t - last).abs() <= TONNE_RESOLUTION)
            .count();
        Self {
            emissions_nonincreasing: down(|r| r.emissions_t, TONNE_RESOLUTION),
            plateau_points,
            tp_nonincreasing: down(|r| r.tp_energy_mwh, TONNE_RESOLUTION),
            gc_nondecreasing: up(|r| r.gc_energy_mwh, TONNE_RESOLUTION),
            cost_nondecreasing: up(|r| r.total_cost_cny, MONEY_RESOLUTION),
        }
    }

    /// All monotonicity conditions and a plateau of at least `min_plateau` points.
    pub fn holds(&self, min_plateau: usize) -> bool {
        self.emissions_nonincreasing
            && self.tp_nonincreasing
            && self.gc_nondecreasing
            && self.cost_nondecreasing
            && self.plateau_points >= min_plateau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Allowed excess over `1 − alpha`.
    pub margin: f64,
    /// Per period: fraction of samples whose shortfall exceeds the reserve.
    pub shortfall: Vec<f64>,
    pub max_shortfall: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn limit(&self) -> f64 {
        1.0 - self.alpha + self.margin
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t,shortfall_probability");
        for (t, p) in self.shortfall.iter().enumerate() {
            let _ = writeln!(s, "{},{p:.6}", t + 1);
        }
        let _ = writeln!(
            s,
            "# max {:.6} against limit {:.6} (alpha {}, {} samples, seed {}): {}",
            self.max_shortfall,
            self.limit(),
            self.alpha,
            self.samples,
            self.seed,
            if self.pass { "pass" } else { "FAIL" }
        );
        s
    }
}

/// Monte-Carlo check of the reserve chance constraint with a 3σ margin.
pub fn verify_chance(schedule: &DispatchSchedule, config: &SystemConfig, n_samples: usize, seed: u64) -> VerificationReport {
    verify_chance_with(schedule, config, n_samples, seed, DEFAULT_SIGMAS)
}

/// Samples the continuous hourly models, not their discretized sequences, and
/// counts draws with `E_t − sample > reserve_t`. Passes when every period's
/// frequency is within `1 − alpha + sigmas·√(alpha(1 − alpha)/n)`.
pub fn verify_chance_with(
    schedule: &DispatchSchedule,
    config: &SystemConfig,
    n_samples: usize,
    seed: u64,
    sigmas: f64,
) -> VerificationReport {
    let n = n_samples.max(1);
    let alpha = config.alpha;
    let reserve = schedule.total_reserve();
    let expected = schedule.expected_re();
    let shortfall: Vec<f64> = config
        .uncertainty
        .par_iter()
        .enumerate()
        .map(|(t, hour)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            // The solver's feasibility tolerance decides ties.
            let cover = reserve[t] + 1e-9;
            let misses = (0..n).filter(|_| expected[t] - hour.sample(&mut rng) > cover).count();
            misses as f64 / n as f64
        })
        .collect();
    let margin = sigmas * (alpha * (1.0 - alpha) / n as f64).sqrt();
    let max_shortfall = shortfall.iter().copied().fold(0.0, f64::max);
    VerificationReport {
        samples: n,
        seed,
        alpha,
        margin,
        pass: max_shortfall <= 1.0 - alpha + margin,
        shortfall,
        max_shortfall,
    }
}

/// One solve of a mode comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub pricing: PricingMode,
    pub report: RunReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeComparison {
    /// Stepped price of each mode, then the fixed price of each mode.
    pub rows: Vec<ComparisonRow>,
    pub fixed_price: f64,
}

pub const COMPARISON_CSV_HEADER: &str =
    "mode,pricing,c1_cny,c2_cny,c3_cny,c4_cny,c5_cny,total_cny,emissions_t,net_emissions_t,price_cny_per_t";

impl ModeComparison {
    pub fn get(&self, mode: Mode, pricing: PricingMode) -> Option<&RunReport> {
        self.rows
            .iter()
            .find(|r| r.report.mode == mode && r.pricing == pricing)
            .map(|r| &r.report)
    }

    fn stepped(&self, mode: Mode) -> Option<&RunReport> {
        self.rows
            .iter()
            .find(|r| r.report.mode == mode && r.pricing != PricingMode::Fixed)
            .map(|r| &r.report)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{COMPARISON_CSV_HEADER}")?;
        for row in &self.rows {
            let (c, l) = (&row.report.costs, &row.report.ledger);
            let pricing = serde_json::to_value(row.pricing).ok();
            writeln!(
                out,
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{:.3},{:.2}",
                row.report.mode.number(),
                pricing.as_ref().and_then(|v| v.as_str()).unwrap_or("?"),
                c.c1,
                c.c2,
                c.c3,
                c.c4,
                c.c5,
                c.total,
                l.e_r,
                l.e_net,
                l.k_applied
            )?;
        }
        Ok(())
    }

    /// Operating costs and emissions per mode, then stepped against fixed pricing.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Operating cost and emissions by mode (stepped carbon price)");
        let _ = writeln!(
            s,
            "{:<6}{:>14}{:>14}{:>12}{:>14}{:>14}{:>15}{:>13}",
            "mode", "C1 ¥", "C2 ¥", "C3 ¥", "C4 ¥", "C5 ¥", "total ¥", "CO2 t"
        );
        for mode in Mode::ALL {
            if let Some(r) = self.stepped(mode) {
                let c = &r.costs;
                let _ = writeln!(
                    s,
                    "{:<6}{:>14.2}{:>14.2}{:>12.2}{:>14.2}{:>14.2}{:>15.2}{:>13.3}",
                    mode.number(),
                    c.c1,
                    c.c2,
                    c.c3,
                    c.c4,
                    c.c5,
                    c.total,
                    r.ledger.e_r
                );
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Stepped against fixed carbon price ({:.2} ¥/t)", self.fixed_price);
        let _ = writeln!(
            s,
            "{:<6}{:>16}{:>16}{:>16}{:>16}",
            "mode", "carbon stepped", "carbon fixed", "total stepped", "total fixed"
        );
        for mode in Mode::ALL {
            if let (Some(a), Some(b)) = (self.stepped(mode), self.get(mode, PricingMode::Fixed)) {
                let _ = writeln!(
                    s,
                    "{:<6}{:>16.2}{:>16.2}{:>16.2}{:>16.2}",
                    mode.number(),
                    a.costs.c5,
                    b.costs.c5,
                    a.costs.total,
                    b.costs.total
                );
            }
        }
        if let (Some(s1), Some(s3), Some(f1), Some(f3)) = (
            self.stepped(Mode::NoNuclear),
            self.stepped(Mode::NuclearCogeneration),
            self.get(Mode::NoNuclear, PricingMode::Fixed),
            self.get(Mode::NuclearCogeneration, PricingMode::Fixed),
        ) {
            let _ = writeln!(
                s,
                "mode 3 saves {:.2} ¥ over mode 1 under stepped pricing and {:.2} ¥ under fixed pricing",
                s1.costs.total - s3.costs.total,
                f1.costs.total - f3.costs.total
            );
        }
        s
    }
}

/// Every mode under the configured stepped policy and at the fixed price.
///
/// A configuration already in fixed mode is compared against literal
/// stepped pricing.
pub fn compare_modes(config: &SystemConfig) -> Result<ModeComparison, AnalysisError> {
    let stepped = match config.carbon.pricing_mode {
        PricingMode::Fixed => PricingMode::SteppedLiteral,
        other => other,
    };
    let fixed_price = config.carbon.fixed_price();
    let jobs: Vec<(Mode, PricingMode)> = [stepped, PricingMode::Fixed]
        .into_iter()
        .flat_map(|p| Mode::ALL.into_iter().map(move |m| (m, p)))
        .collect();
    let one = |&(mode, pricing): &(Mode, PricingMode)| -> Result<ComparisonRow, AnalysisError> {
        let mut c = config.clone();
        c.carbon = if pricing == PricingMode::Fixed {
            config.carbon.fixed_at(fixed_price)
        } else {
            config.carbon.with_mode(pricing)
        };
        Ok(ComparisonRow {
            pricing,
            report: run_mode_with(&c, mode, &job_backend())?,
        })
    };
    let rows = bounded_pool(config.solver.parallelism).install(|| jobs.par_iter().map(one).collect::<Result<_, _>>())?;
    Ok(ModeComparison { rows, fixed_price })
}

/// Limits for exact solves of desk-scale instances.
pub fn exact_limits(time_limit_s: f64) -> SolveLimits {
    SolveLimits {
        time_limit_s,
        mip_gap: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> SystemConfig {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/example.json");
        crate::config::load_config(path).unwrap()
    }

    fn row(price: f64, e: f64, cost: f64, tp: f64, gc: f64) -> SweepRow {
        SweepRow {
            price_cny_per_t: price,
            emissions_t: e,
            total_cost_cny: cost,
            tp_energy_mwh: tp,
            gc_energy_mwh: gc,
        }
    }

    #[test]
    fn grid_is_inclusive_and_drift_free() {
        let g = price_grid(0.0, 300.0, 15.0).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 300.0);
        assert_eq!(price_grid(0.0, 0.3, 0.1).unwrap().len(), 4);
        assert_eq!(price_grid(5.0, 5.0, 1.0).unwrap(), vec![5.0]);
        assert!(price_grid(0.0, 1.0, 0.0).is_err());
        assert!(price_grid(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn shape_checks() {
        let good = vec![
            row(0.0, 10.0, 1.0, 5.0, 1.0),
            row(1.0, 8.0, 2.0, 4.0, 2.0),
            row(2.0, 8.0, 3.0, 4.0, 2.0),
            row(3.0, 8.0, 4.0, 4.0, 2.0),
        ];
        let s = SweepShape::of(&good);
        assert_eq!(s.plateau_points, 3);
        assert!(s.holds(3));
        assert!(!s.holds(4));
        let mut bad = good.clone();
        bad[2].emissions_t = 8.5;
        assert!(!SweepShape::of(&bad).emissions_nonincreasing);
        let mut bad = good;
        bad[3].total_cost_cny = 2.0;
        assert!(!SweepShape::of(&bad).cost_nondecreasing);
    }

    #[test]
    fn sweep_csv_round_trip_flags_failures() {
        let out = SweepOutcome {
            rows: vec![row(0.0, 1.5, 10.0, 2.0, 3.0)],
            reports: Vec::new(),
            failure: Some((15.0, AnalysisError::Grid("x".into()))),
        };
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SWEEP_CSV_HEADER));
        assert!(text.lines().last().unwrap().starts_with("# incomplete"));
        assert_eq!(read_sweep_csv(text.as_bytes()).unwrap(), out.rows);
    }

    #[test]
    fn one_point_sweep_and_bad_grids() {
        let cfg = example();
        let out = sweep_carbon_price(&cfg, Mode::NuclearCogeneration, &[120.0], SweepPricing::Fixed).unwrap();
        assert!(out.is_complete());
        assert_eq!(out.rows.len(), 1);
        assert!(sweep_carbon_price(&cfg, Mode::NoNuclear, &[], SweepPricing::Fixed).is_err());
        assert!(sweep_carbon_price(&cfg, Mode::NoNuclear, &[2.0, 1.0], SweepPricing::Fixed).is_err());
    }

    /// Schedule whose reserves are exactly `reserve` and nothing else matters.
    fn schedule_with_reserve(cfg: &SystemConfig, expected: &[f64], reserve: f64) -> DispatchSchedule {
        let n = cfg.horizon.t;
        DispatchSchedule {
            ess_res: vec![reserve; n],
            re_absorbed: expected.to_vec(),
            re_curtailed: vec![0.0; n],
            p2g: vec![0.0; n],
            ..DispatchSchedule::default()
        }
    }

    #[test]
    fn verifier_extremes() {
        let cfg = example();
        let (seqs, means) = dispatch::prepare_sequences(&cfg).unwrap();

        let full: Vec<f64> = means.clone();
        let mut s = schedule_with_reserve(&cfg, &full, 0.0);
        s.ess_res = means.clone();
        let rep = verify_chance(&s, &cfg, 5_000, 1);
        assert!(rep.shortfall.iter().all(|&p| p == 0.0));
        assert!(rep.pass);

        let none = schedule_with_reserve(&cfg, &means, 0.0);
        let n = 20_000;
        let rep = verify_chance(&none, &cfg, n, 2);
        assert!(!rep.pass);
        for (t, (&p, seq)) in rep.shortfall.iter().zip(&seqs).enumerate() {
            // P(sample < E_t) from the sequence, blurred by half a bin at E_t.
            let e = means[t];
            let below = seq.prob_below(e);
            let half_bin = seq.probs().iter().fold(0.0f64, |a, &b| a.max(b));
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
            assert!(p > 0.0);
            assert!((p - below).abs() <= half_bin + 4.0 * sigma, "t={t}: {p} vs {below}");
        }
    }

    #[test]
    fn verifier_margin_is_three_sigma() {
        let cfg = example();
        let (_, means) = dispatch::prepare_sequences(&cfg).unwrap();
        let rep = verify_chance(&schedule_with_reserve(&cfg, &means, 1e9), &cfg, 100_000, 0);
        assert!((rep.margin - 3.0 * (0.09f64 / 100_000.0).sqrt()).abs() < 1e-15);
        let strict = verify_chance_with(&schedule_with_reserve(&cfg, &means, 1e9), &cfg, 100_000, 0, 5.0);
        assert!(strict.margin > rep.margin);
    }

    #[test]
    fn flat_tiers_make_pricing_columns_identical() {
        let mut cfg = example();
        cfg.carbon.k1 = 90.0;
        cfg.carbon.k2 = 90.0;
        cfg.carbon.k3 = 90.0;
        cfg.carbon.k_fixed = Some(90.0);
        cfg.solver.mip_gap = 0.0;
        let cmp = compare_modes(&cfg).unwrap();
        assert_eq!(cmp.rows.len(), 6);
        for mode in Mode::ALL {
            let a = cmp.get(mode, PricingMode::SteppedLiteral).unwrap();
            let b = cmp.get(mode, PricingMode::Fixed).unwrap();
            assert!((a.costs.total - b.costs.total).abs() <= 1e-6 * a.costs.total.abs(), "mode {mode}");
            assert!((a.costs.c5 - b.costs.c5).abs() <= 1e-6 * a.costs.total.abs());
        }
        let text = cmp.to_text();
        assert!(text.contains("mode 3 saves"));
        let mut csv = Vec::new();
        cmp.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
    }

    #[test]
    fn run_writes_its_three_files() {
        let cfg = example();
        let rep = run_mode(&cfg, Mode::NuclearCogeneration).unwrap();
        assert!(rep.audit.passes(1e-6), "{:?}", rep.audit);
        let dir = tempfile::tempdir().unwrap();
        rep.write_outputs(dir.path()).unwrap();
        for f in ["schedule.csv", "costs.json", "ledger.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let back = DispatchSchedule::read_csv(fs::File::open(dir.path().join("schedule.csv")).unwrap()).unwrap();
        assert_eq!(back, rep.schedule);
        for (r, need) in rep.schedule.total_reserve().iter().zip(&rep.required_reserve) {
            assert!(*r >= need - 1e-6);
        }
    }

    #[test]
    fn infeasible_runs_name_rows() {
        let mut cfg = example();
        // The first hour needs 30 MW from a tank that starts empty; the rate
        // bounds alone would allow it, so only the solver can tell.
        cfg.hss.c_0 = 0.0;
        cfg.loads.heat[0] = 270.0;
        let err = run_mode(&cfg, Mode::NoNuclear).unwrap_err();
        assert!(err.is_infeasible(), "{err}");
        let AnalysisError::Infeasible { rows, .. } = err else { unreachable!() };
        assert!(rows.iter().any(|(l, _)| l == "hbal_t1" || l == "hss_dyn_t1"), "{rows:?}");
    }
}
