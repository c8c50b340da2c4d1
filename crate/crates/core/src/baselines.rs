//! Scenario-based comparison methods for the reserve chance constraint.
//!
//! The scenario approach (SA) makes the reserve cover every sampled shortfall.
//! Sample average approximation (SAA) only has to cover `⌈alpha·n⌉` of the
//! `n` samples per period, chosen by one binary per sample.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::SystemConfig;
use crate::dispatch::{self, build_base, extract_schedule, BuildError, DispatchModel, ExtractError};
use crate::milp::{solve, HighsBackend, LinExpr, ModelError, Relation, SolveError, SolveStatus};

/// Samples per period for SA when none is given.
pub const DEFAULT_SA_SCENARIOS: usize = 500;
/// Samples per period for SAA when none is given.
pub const DEFAULT_SAA_SCENARIOS: usize = 200;
/// Independent runs averaged per method.
pub const DEFAULT_RUNS: usize = 20;

/// Slack on `alpha·n` before rounding up, so `0.9·10` asks for 9 samples.
const QUOTA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub n_scenarios: usize,
    pub seed: u64,
    /// `samples[t][s]`: combined renewable output of scenario `s` in period `t`, MW.
    pub samples: Vec<Vec<f64>>,
}

impl ScenarioSet {
    /// Scenario set with given samples; every period must have the same count.
    pub fn from_samples(samples: Vec<Vec<f64>>, seed: u64) -> Self {
        let n_scenarios = samples.first().map_or(0, Vec::len);
        assert!(samples.iter().all(|s| s.len() == n_scenarios), "ragged scenario set");
        Self {
            n_scenarios,
            seed,
            samples,
        }
    }
}

/// Draws `n` scenarios per period from the continuous hourly models.
///
/// Period `t` uses stream `t` of a ChaCha8 generator keyed by `seed`, so a
/// period's draws do not depend on how many periods precede it.
pub fn sample_scenarios(config: &SystemConfig, n: usize, seed: u64) -> ScenarioSet {
    let samples = config
        .uncertainty
        .iter()
        .enumerate()
        .map(|(t, hour)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            (0..n).map(|_| hour.sample(&mut rng)).collect()
        })
        .collect();
    ScenarioSet {
        n_scenarios: n,
        seed,
        samples,
    }
}

/// Seed of run `run` in a batch keyed by `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(run as u64)
}

fn check_shape(config: &SystemConfig, expectations: &[f64], scenarios: &ScenarioSet) -> Result<(), BuildError> {
    let n = config.horizon.t;
    if expectations.len() != n {
        return Err(BuildError::Horizon(expectations.len(), n));
    }
    if scenarios.samples.len() != n {
        return Err(BuildError::Horizon(scenarios.samples.len(), n));
    }
    Ok(())
}

/// Base dispatch with `reserve_t ≥ E_t − sample` for every scenario.
///
/// Rows are labelled `sa_<t>_<s>`.
pub fn build_sa(config: &SystemConfig, expectations: &[f64], scenarios: &ScenarioSet) -> Result<DispatchModel, BuildError> {
    check_shape(config, expectations, scenarios)?;
    let mut dm = build_base(config, expectations)?;
    for (k, samples) in scenarios.samples.iter().enumerate() {
        let e_t = expectations[k];
        for (s, &x) in samples.iter().enumerate() {
            dm.model
                .add_constraint(format!("sa_{}_{s}", k + 1), dm.reserves[k].clone(), Relation::Ge, e_t - x)?;
        }
    }
    Ok(dm)
}

/// Base dispatch where each period covers at least `⌈alpha·n⌉` scenarios.
///
/// Binary `y_<t>_<s>` set to one forces `reserve_t ≥ E_t − sample`; the
/// big-M is `max(E_t − sample, 0)`, the most the row can ever ask for when
/// reserves are non-negative. Rows are `saa_link_<t>_<s>` and `saa_quota_<t>`.
pub fn build_saa(
    config: &SystemConfig,
    expectations: &[f64],
    scenarios: &ScenarioSet,
    alpha: f64,
) -> Result<DispatchModel, BuildError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(BuildError::Dst(crate::dst::DstError::Alpha(alpha)));
    }
    check_shape(config, expectations, scenarios)?;
    let mut dm = build_base(config, expectations)?;
    let need = saa_quota(alpha, scenarios.n_scenarios);
    for (k, samples) in scenarios.samples.iter().enumerate() {
        let t = k + 1;
        let e_t = expectations[k];
        let (r_min, _) = dm.model.finite_bounds(&dm.reserves[k], &format!("reserve of period {t}"))?;
        let mut quota = LinExpr::new();
        for (s, &x) in samples.iter().enumerate() {
            let y = dm.model.binary(format!("y_{t}_{s}"))?;
            let shortfall = e_t - x;
            let big_m = (shortfall - r_min).max(0.0);
            // y = 1: R ≥ shortfall; y = 0: R ≥ shortfall − big_m, which is vacuous.
            dm.model.add_constraint(
                format!("saa_link_{t}_{s}"),
                dm.reserves[k].clone() - y * big_m,
                Relation::Ge,
                shortfall - big_m,
            )?;
            quota.add_term(y, 1.0);
        }
        dm.model
            .add_constraint(format!("saa_quota_{t}"), quota, Relation::Ge, need as f64)?;
    }
    Ok(dm)
}

/// Number of scenarios SAA must cover: `⌈alpha·n⌉`.
pub fn saa_quota(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64 - QUOTA_TOL).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dst,
    Sa,
    Saa,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Dst => "dst",
            Method::Sa => "sa",
            Method::Saa => "saa",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dst" => Ok(Method::Dst),
            "sa" => Ok(Method::Sa),
            "saa" => Ok(Method::Saa),
            other => Err(format!("unknown method {other:?}; expected dst, sa or saa")),
        }
    }
}

/// One line of the comparison CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub method: Method,
    pub run: usize,
    pub objective_cny: f64,
    pub emissions_t: f64,
    pub wall_ms: f64,
}

pub const BASELINE_CSV_HEADER: &str = "method,run,objective_cny,emissions_t,wall_ms";

impl BaselineRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.2},{:.3},{:.1}",
            self.method, self.run, self.objective_cny, self.emissions_t, self.wall_ms
        )
    }
}

pub fn write_baseline_csv<W: Write>(rows: &[BaselineRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{BASELINE_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("run {run} of {method}: solve ended with status {status:?}")]
    Status { method: Method, run: usize, status: SolveStatus },
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

impl From<ModelError> for BaselineError {
    fn from(e: ModelError) -> Self {
        BaselineError::Build(BuildError::Model(e))
    }
}

/// Settings of a batch of baseline runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStudy {
    pub method: Method,
    pub scenarios: usize,
    pub runs: usize,
    pub seed: u64,
}

/// Builds and solves each run of `study`; DST runs ignore the scenario count.
///
/// Build time is included in `wall_ms`, since sampling and model size are
/// where the methods differ. Runs execute concurrently, at most
/// `config.solver.parallelism` at a time.
pub fn run_baseline(config: &SystemConfig, study: &BaselineStudy) -> Result<Vec<BaselineRow>, BaselineError> {
    let (seqs, means) = dispatch::prepare_sequences(config).map_err(BuildError::from)?;
    let one = |run: usize| -> Result<BaselineRow, BaselineError> {
        let start = Instant::now();
        let dm = match study.method {
            Method::Dst => dispatch::build(config, &seqs, &means)?,
            Method::Sa => build_sa(config, &means, &sample_scenarios(config, study.scenarios, run_seed(study.seed, run)))?,
            Method::Saa => build_saa(
                config,
                &means,
                &sample_scenarios(config, study.scenarios, run_seed(study.seed, run)),
                config.alpha,
            )?,
        };
        let result = solve(&dm.model, &HighsBackend::default(), &config.solver.limits())?;
        if !result.is_optimal() {
            return Err(BaselineError::Status {
                method: study.method,
                run,
                status: result.status,
            });
        }
        let ex = extract_schedule(&result, &dm, config)?;
        Ok(BaselineRow {
            method: study.method,
            run,
            objective_cny: result.objective_value,
            emissions_t: ex.ledger.e_r,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    };
    crate::analysis::bounded_pool(config.solver.parallelism)
        .install(|| {
            use rayon::prelude::*;
            (0..study.runs).into_par_iter().map(one).collect()
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::build;
    use crate::dst::min_reserve_bruteforce;
    use crate::milp::{SolveLimits, SolveResult};
    use crate::uncertainty::ProbSequence;

    fn example() -> SystemConfig {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/example.json");
        crate::config::load_config(path).unwrap()
    }

    fn exact() -> SolveLimits {
        SolveLimits {
            time_limit_s: 60.0,
            mip_gap: 0.0,
        }
    }

    fn reserves(dm: &DispatchModel, r: &SolveResult) -> Vec<f64> {
        dm.reserves.iter().map(|e| r.eval(e).unwrap()).collect()
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let cfg = example();
        let a = sample_scenarios(&cfg, 50, 7);
        assert_eq!(a, sample_scenarios(&cfg, 50, 7));
        assert_ne!(a, sample_scenarios(&cfg, 50, 8));
        for (hour, xs) in cfg.uncertainty.iter().zip(&a.samples) {
            assert!(xs.iter().all(|&x| (0.0..=hour.p_rated()).contains(&x)));
        }
    }

    #[test]
    fn sample_means_match_sequence_expectations() {
        let cfg = example();
        let n = 20_000;
        let set = sample_scenarios(&cfg, n, 11);
        let (seqs, _) = dispatch::prepare_sequences(&cfg).unwrap();
        for (xs, seq) in set.samples.iter().zip(&seqs) {
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            // Midpoint binning moves the mean by well under a tenth of a step.
            let tol = 3.0 * (var / n as f64).sqrt() + 0.1 * cfg.step_l;
            assert!((mean - seq.expectation()).abs() < tol, "{mean} vs {}", seq.expectation());
        }
    }

    #[test]
    fn concentrated_solar_samples_sit_at_the_mean() {
        let mut cfg = example();
        for h in &mut cfg.uncertainty {
            h.wind.p_rated = 0.0;
            h.solar.alpha_s = 1e6;
            h.solar.beta_s = 1e6;
        }
        let set = sample_scenarios(&cfg, 100, 3);
        for (h, xs) in cfg.uncertainty.iter().zip(&set.samples) {
            assert!(xs.iter().all(|x| (x - h.solar.p_rated / 2.0).abs() < 0.05 * h.solar.p_rated.max(1.0)));
        }
    }

    #[test]
    fn quota_rounds_up() {
        assert_eq!(saa_quota(0.8, 3), 3);
        assert_eq!(saa_quota(0.6, 3), 2);
        assert_eq!(saa_quota(0.9, 10), 9);
        assert_eq!(saa_quota(0.0, 10), 0);
        assert_eq!(saa_quota(1.0, 7), 7);
    }

    /// Every period carries the same equal-probability three-point distribution.
    fn three_point_instance() -> (SystemConfig, Vec<ProbSequence>, Vec<f64>, ScenarioSet) {
        let cfg = example();
        let n = cfg.horizon.t;
        let seq = ProbSequence::new(10.0, vec![1.0 / 3.0; 3]).unwrap();
        let e = seq.expectation();
        let support = vec![vec![0.0, 10.0, 20.0]; n];
        (cfg, vec![seq; n], vec![e; n], ScenarioSet::from_samples(support, 0))
    }

    #[test]
    fn saa_and_dst_agree_on_matching_support() {
        let (mut cfg, seqs, means, set) = three_point_instance();
        for alpha in [0.5, 0.8] {
            cfg.alpha = alpha;
            let want = min_reserve_bruteforce(&seqs[0], alpha, means[0]).unwrap();
            let dst = build(&cfg, &seqs, &means).unwrap();
            let saa = build_saa(&cfg, &means, &set, alpha).unwrap();
            let rd = solve(&dst.model, &HighsBackend::default(), &exact()).unwrap();
            let rs = solve(&saa.model, &HighsBackend::default(), &exact()).unwrap();
            for (a, b) in reserves(&dst, &rd).iter().zip(reserves(&saa, &rs)) {
                assert!((a - want).abs() < 1e-6 && (b - want).abs() < 1e-6, "alpha {alpha}: {a} {b} {want}");
            }
        }
    }

    #[test]
    fn sa_matches_full_coverage_and_saa_at_one() {
        let (cfg, seqs, means, set) = three_point_instance();
        let want = min_reserve_bruteforce(&seqs[0], 1.0, means[0]).unwrap();
        let sa = build_sa(&cfg, &means, &set).unwrap();
        let saa = build_saa(&cfg, &means, &set, 1.0).unwrap();
        let ra = solve(&sa.model, &HighsBackend::default(), &exact()).unwrap();
        let rs = solve(&saa.model, &HighsBackend::default(), &exact()).unwrap();
        assert!((ra.objective_value - rs.objective_value).abs() < 1e-6 * ra.objective_value.abs());
        for r in reserves(&sa, &ra) {
            assert!((r - want).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_scenario_sets() {
        let cfg = example();
        let n = cfg.horizon.t;
        let (_, means) = dispatch::prepare_sequences(&cfg).unwrap();
        let base = build_base(&cfg, &means).unwrap();
        let rb = solve(&base.model, &HighsBackend::default(), &exact()).unwrap();

        // A single scenario at the expectation asks for nothing.
        let at_mean = ScenarioSet::from_samples(means.iter().map(|&e| vec![e]).collect(), 0);
        let sa = build_sa(&cfg, &means, &at_mean).unwrap();
        let ra = solve(&sa.model, &HighsBackend::default(), &exact()).unwrap();
        assert!((ra.objective_value - rb.objective_value).abs() < 1e-6 * rb.objective_value.abs());

        // A zero-output scenario forces reserve up to the expectation.
        let with_zero = ScenarioSet::from_samples(means.iter().map(|&e| vec![e, 0.0]).collect(), 0);
        let sa = build_sa(&cfg, &means, &with_zero).unwrap();
        let ra = solve(&sa.model, &HighsBackend::default(), &exact()).unwrap();
        for (r, e) in reserves(&sa, &ra).iter().zip(&means) {
            assert!(*r >= e - 1e-6);
        }

        // alpha = 0 leaves every binary free.
        let saa = build_saa(&cfg, &means, &with_zero, 0.0).unwrap();
        assert_eq!(saa.model.num_binaries(), 2 * n + base.model.num_binaries());
        let rs = solve(&saa.model, &HighsBackend::default(), &exact()).unwrap();
        assert!((rs.objective_value - rb.objective_value).abs() < 1e-6 * rb.objective_value.abs());
    }

    #[test]
    fn csv_layout() {
        let row = BaselineRow {
            method: Method::Saa,
            run: 3,
            objective_cny: 1234.5678,
            emissions_t: 9.87654,
            wall_ms: 12.34,
        };
        let mut out = Vec::new();
        write_baseline_csv(&[row], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "method,run,objective_cny,emissions_t,wall_ms\nsaa,3,1234.57,9.877,12.3\n");
        assert_eq!("sa".parse::<Method>().unwrap(), Method::Sa);
        assert!("x".parse::<Method>().is_err());
    }
}
