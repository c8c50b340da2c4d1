use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ies_dispatch::analysis::{
    self, compare_modes, price_grid, run_mode, sweep_carbon_price, verify_chance_with, AnalysisError, SweepPricing,
};
use ies_dispatch::baselines::{self, run_baseline, BaselineError, BaselineStudy, Method};
use ies_dispatch::carbon::PricingMode;
use ies_dispatch::config::{load_config, SystemConfig};
use ies_dispatch::dispatch::{BuildError, DispatchSchedule, Mode};
use ies_dispatch::dst::min_reserve_bruteforce;
use ies_dispatch::milp::{SolveError, SolveStatus};
use ies_dispatch::uncertainty::ProbSequence;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

/// Day-ahead dispatch of an electricity, heat and gas system with nuclear
/// cogeneration, stepped carbon trading and a spinning-reserve chance constraint.
#[derive(Parser)]
#[command(name = "ies-dispatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one operating mode and write schedule.csv, costs.json and ledger.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every mode under stepped and fixed carbon pricing.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one mode over a grid of carbon prices and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        price_from: f64,
        #[arg(long)]
        price_to: f64,
        #[arg(long)]
        price_step: f64,
        #[arg(long, value_parser = parse_mode, default_value = "1")]
        mode: Mode,
        /// Scale the stepped tiers so the middle one equals the grid price,
        /// instead of charging one fixed price.
        #[arg(long)]
        stepped_scale: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of a schedule's reserves against the continuous models.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard errors of sampling slack allowed over 1 − alpha.
        #[arg(long, default_value_t = analysis::DEFAULT_SIGMAS)]
        sigmas: f64,
    },
    /// Scenario-based comparison methods; writes the comparison CSV to stdout or --out.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        /// Samples per period; 500 for sa and 200 for saa when omitted.
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long, default_value_t = baselines::DEFAULT_RUNS)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal reserve for one probability sequence, by the cumulative walk.
    DstOracle {
        #[arg(long)]
        alpha: f64,
        /// CSV with columns `index,power_mw,prob`, indices contiguous from 0.
        #[arg(long)]
        seq: PathBuf,
        /// Expected output E_t; the sequence mean when omitted.
        #[arg(long)]
        expectation: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured confidence level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the relative MIP gap.
    #[arg(long)]
    gap: Option<f64>,
    /// Override the per-solve time limit, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Most solves run at once in compare, sweep and baseline.
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<SystemConfig> {
        let mut config =
            load_config(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        for d in &config.defaults_applied {
            eprintln!("default: {d}");
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(g) = self.gap {
            config.solver.mip_gap = g;
        }
        if let Some(t) = self.time_limit {
            config.solver.time_limit_s = t;
        }
        if self.parallelism.is_some() {
            config.solver.parallelism = self.parallelism;
        }
        Ok(config)
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, mode, out } => {
            let config = common.load()?;
            let report = run_mode(&config, mode)?;
            report.write_outputs(&out)?;
            println!("{}", report.summary());
            if !report.audit.passes(1e-6) {
                eprintln!("warning: audit residual {:.3e}: {:?}", report.audit.worst(), report.audit.notes);
            }
        }
        Command::Compare { common, out } => {
            let config = common.load()?;
            let cmp = compare_modes(&config)?;
            fs::create_dir_all(&out)?;
            for row in &cmp.rows {
                let pricing = match row.pricing {
                    PricingMode::Fixed => "fixed",
                    _ => "stepped",
                };
                let dir = out.join(format!("mode{}_{pricing}", row.report.mode.number()));
                row.report.write_outputs(&dir)?;
            }
            let mut csv = Vec::new();
            cmp.write_csv(&mut csv)?;
            write_file(&out.join("comparison.csv"), &csv)?;
            let text = cmp.to_text();
            write_file(&out.join("comparison.txt"), text.as_bytes())?;
            print!("{text}");
        }
        Command::Sweep {
            common,
            price_from,
            price_to,
            price_step,
            mode,
            stepped_scale,
            out,
        } => {
            let config = common.load()?;
            let grid = price_grid(price_from, price_to, price_step)?;
            let pricing = if stepped_scale { SweepPricing::SteppedScale } else { SweepPricing::Fixed };
            let outcome = sweep_carbon_price(&config, mode, &grid, pricing)?;
            fs::create_dir_all(&out)?;
            let mut csv = Vec::new();
            outcome.write_csv(&mut csv)?;
            write_file(&out.join("sweep.csv"), &csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
            if let Some((price, err)) = outcome.failure {
                return Err(anyhow::Error::new(err).context(format!("sweep stopped at {price} ¥/t")));
            }
        }
        Command::Verify {
            common,
            schedule,
            samples,
            seed,
            sigmas,
        } => {
            let config = common.load()?;
            let file = fs::File::open(&schedule).with_context(|| format!("opening {}", schedule.display()))?;
            let sched = DispatchSchedule::read_csv(file)?;
            if sched.periods() != config.horizon.t {
                bail!("schedule has {} periods, configuration {}", sched.periods(), config.horizon.t);
            }
            let report = verify_chance_with(&sched, &config, samples, seed, sigmas);
            print!("{}", report.to_text());
            if !report.pass {
                bail!(
                    "shortfall {:.6} exceeds {:.6}",
                    report.max_shortfall,
                    report.limit()
                );
            }
        }
        Command::Baseline {
            common,
            method,
            scenarios,
            runs,
            seed,
            out,
        } => {
            let config = common.load()?;
            let scenarios = scenarios.unwrap_or(match method {
                Method::Saa => baselines::DEFAULT_SAA_SCENARIOS,
                _ => baselines::DEFAULT_SA_SCENARIOS,
            });
            let study = BaselineStudy {
                method,
                scenarios,
                runs,
                seed,
            };
            let rows = run_baseline(&config, &study)?;
            let mut csv = Vec::new();
            baselines::write_baseline_csv(&rows, &mut csv)?;
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
            let n = rows.len().max(1) as f64;
            eprintln!(
                "{method}: mean objective {:.2} ¥, emissions {:.3} t, {:.1} ms over {} runs",
                rows.iter().map(|r| r.objective_cny).sum::<f64>() / n,
                rows.iter().map(|r| r.emissions_t).sum::<f64>() / n,
                rows.iter().map(|r| r.wall_ms).sum::<f64>() / n,
                rows.len()
            );
        }
        Command::DstOracle { alpha, seq, expectation } => {
            let file = fs::File::open(&seq).with_context(|| format!("opening {}", seq.display()))?;
            let c = ProbSequence::read_csv(file)?;
            let e = expectation.unwrap_or_else(|| c.expectation());
            let r = min_reserve_bruteforce(&c, alpha, e)?;
            println!("{r}");
        }
    }
    Ok(())
}

/// Exit code for a failure: 2 when the model is infeasible, 3 on a solver limit, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            if e.is_infeasible() {
                return EXIT_INFEASIBLE;
            }
            if e.is_limit() {
                return EXIT_LIMIT;
            }
        }
        if let Some(e) = cause.downcast_ref::<BaselineError>() {
            match e {
                BaselineError::Build(BuildError::Infeasible { .. })
                | BaselineError::Status {
                    status: SolveStatus::Infeasible,
                    ..
                } => return EXIT_INFEASIBLE,
                BaselineError::Status {
                    status: SolveStatus::Limit,
                    ..
                }
                | BaselineError::Solve(SolveError::LimitWithoutIncumbent) => return EXIT_LIMIT,
                _ => {}
            }
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
