//! `twosample`: run, Monte Carlo, compare, diagnose and population reports
//! for the active two-sample test.

use std::path::PathBuf;
use std::process::ExitCode;

use active_two_sample::engine::{RunConfig, Runner, TraceLevel, TrialRng};
use active_two_sample::harness::compare::{compare_active_passive, DEFAULT_ALPHA_GRID};
use active_two_sample::harness::diagnostics::diagnose_result;
use active_two_sample::harness::{emit_report, identified_best, monte_carlo, ExperimentSpec, Format, Mode, Report};
use active_two_sample::{load_scenario, Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "twosample", version, about = "Active sequential two-sample testing by betting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Censoring horizon T_max.
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    /// Base seed; trial i uses a seed split from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exploration constant, replacing the one derived from --L.
    #[arg(long = "c-override")]
    c_override: Option<f64>,
    /// Known lower bound on the sub-optimality gap.
    #[arg(long = "L", default_value_t = 0.25)]
    gap_lower_bound: f64,
    /// ascent | descent
    #[arg(long = "ons-sign", default_value = "ascent")]
    ons_sign: String,
    /// Keep running to the horizon after the first crossing.
    #[arg(long)]
    continue_after_reject: bool,
    /// Output directory; without it the JSON report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json | csv | both
    #[arg(long, default_value = "json")]
    format: String,
    /// Omit the timestamp so identical inputs give byte-identical reports.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Clone, Args)]
struct CohortArgs {
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Worker threads; results are identical for any value.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One trial with its per-slot trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// active | passive:<k> | oracle
        #[arg(long, default_value = "active")]
        mode: String,
        /// Include the pre-update witness in every slot record.
        #[arg(long)]
        full_trace: bool,
    },
    /// Monte Carlo estimate of stop probability and stopping time.
    Mc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cohort: CohortArgs,
        /// active | passive:<k> | oracle | compare
        #[arg(long, default_value = "active")]
        mode: String,
    },
    /// Matched-seed active, passive and oracle cohorts with an α-scaling table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHA_GRID)]
        alphas: Vec<f64>,
    },
    /// Monte Carlo with per-trial selection and wealth-bound checks.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cohort: CohortArgs,
        /// active | passive:<k> | oracle
        #[arg(long, default_value = "active")]
        mode: String,
    },
    /// Population quantities only: distances, gap, Kelly bet, σ and t₀.
    Population {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            alpha: self.alpha,
            horizon: self.horizon,
            seed: self.seed,
            feature_map: None,
            gap_lower_bound: self.gap_lower_bound,
            c_override: self.c_override,
            ons_sign: self.ons_sign.parse()?,
            trace: TraceLevel::Off,
            stop_on_reject: !self.continue_after_reject,
            ..RunConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn spec(&self, trials: u64, mode: Mode, parallelism: Option<usize>) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(load_scenario(&self.scenario)?, self.config()?, trials, mode);
        spec.scenario_path = Some(self.scenario.display().to_string());
        spec.parallelism = parallelism;
        Ok(spec)
    }

    fn finish(&self, report: Report, records: Option<&[active_two_sample::harness::TrialRecord]>) -> Result<()> {
        let format: Format = self.format.parse()?;
        let report = if self.no_timestamp { report } else { report.stamped() };
        if let Some(p) = &report.population {
            p.warnings.iter().for_each(|w| log::warn!("{w}"));
        }
        match &self.out {
            Some(dir) => {
                for path in emit_report(&report, records, dir, format)? {
                    log::info!("wrote {}", path.display());
                    println!("{}", path.display());
                }
            }
            None => print!("{}", report.to_json()?),
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, mode, full_trace } => {
            let mode: Mode = mode.parse()?;
            let mut spec = common.spec(1, mode, None)?;
            spec.config.trace = if full_trace { TraceLevel::Full } else { TraceLevel::Slots };
            spec.validate()?;
            let runner = Runner::new(&spec.scenario, &spec.config)?;
            let population = runner.population()?;
            let mut rng = TrialRng::new(spec.config.seed);
            let result = match mode {
                Mode::Active => runner.run_active(&mut rng)?,
                Mode::Passive(k) => runner.run_passive(k, &mut rng)?,
                Mode::Oracle => runner.run_oracle(&runner.oracle_plan()?, &mut rng)?,
                Mode::Compare => return Err(Error::Config("run takes a single mode; use the compare command".into())),
            };
            let diag = diagnose_result(&result, identified_best(&population), mode != Mode::Oracle)?;
            log::info!(
                "stopped = {}, tau = {:?}, final log-wealth = {:.4}, wealth bound ok = {:?}",
                result.stopped,
                result.tau,
                result.final_log_wealth,
                diag.wealth_bound.and_then(|w| w.first_ok)
            );
            let mut report = Report::new("run", spec);
            report.population = Some(population);
            report.trial = Some(result);
            common.finish(report, None)
        }
        Command::Mc { common, cohort, mode } => {
            let mode: Mode = mode.parse()?;
            if mode == Mode::Compare {
                return compare(&common, &cohort, &DEFAULT_ALPHA_GRID);
            }
            let spec = common.spec(cohort.trials, mode, cohort.parallel)?;
            let out = monte_carlo(&spec)?;
            let mut report = Report::new("mc", spec);
            report.metrics = Some(out.summary);
            common.finish(report, Some(&out.records))
        }
        Command::Compare { common, cohort, alphas } => compare(&common, &cohort, &alphas),
        Command::Diagnose { common, cohort, mode } => {
            let mode: Mode = mode.parse()?;
            let mut spec = common.spec(cohort.trials, mode, cohort.parallel)?;
            spec.diagnostics = true;
            let out = monte_carlo(&spec)?;
            let mut report = Report::new("diagnose", spec);
            report.metrics = Some(out.summary);
            report.diagnostics = out.diagnostics;
            common.finish(report, Some(&out.records))
        }
        Command::Population { common } => {
            let spec = common.spec(1, Mode::Oracle, None)?;
            let runner = Runner::new(&spec.scenario, &spec.config)?;
            let population = runner.population()?;
            let mut report = Report::new("population", spec);
            report.population = Some(population);
            common.finish(report, None)
        }
    }
}

fn compare(common: &Common, cohort: &CohortArgs, alphas: &[f64]) -> Result<()> {
    let spec = common.spec(cohort.trials, Mode::Compare, cohort.parallel)?;
    let cmp = compare_active_passive(&spec, alphas)?;
    let mut report = Report::new("compare", spec);
    report.comparison = Some(cmp);
    common.finish(report, None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
