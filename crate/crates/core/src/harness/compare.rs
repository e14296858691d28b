//! Matched-seed cohorts for the active test, every pinned source and the
//! oracle, plus the growth of mean `τ` in `ln(1/α)`.

use serde::{Deserialize, Serialize};

use super::metrics::{Estimate, MetricsSummary};
use super::{run_cohort, with_pool, ExperimentSpec, Mode, TrialRecord};
use crate::analysis::PopulationSummary;
use crate::engine::{RunConfig, Runner, TraceLevel};
use crate::error::{Error, Result};
use crate::source_models::TruthLabel;

pub const DEFAULT_ALPHA_GRID: [f64; 3] = [0.1, 0.01, 0.001];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub mode: Mode,
    pub summary: MetricsSummary,
}

/// Mean of `min(τ, T_max)` in `minuend` minus `subtrahend`, trial by trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub minuend: Mode,
    pub subtrahend: Mode,
    pub difference: Estimate,
    /// Every paired difference is exactly zero.
    pub identical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaScalingRow {
    pub alpha: f64,
    pub log_inv_alpha: f64,
    /// Restricted mean `τ` of the active test.
    pub mean_tau: Estimate,
    pub censoring_rate: f64,
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl AffineFit {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || n != ys.len() {
            return None;
        }
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        Some(AffineFit {
            intercept,
            slope,
            r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub best_source: usize,
    /// Source with the smallest positive distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_informative_source: Option<usize>,
    pub cohorts: Vec<Cohort>,
    pub differences: Vec<PairedDifference>,
    pub alpha_scaling: Vec<AlphaScalingRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_fit: Option<AffineFit>,
    /// Mean `τ` strictly increases along the α grid (sorted by `ln(1/α)`).
    pub alpha_increasing: bool,
    pub population: PopulationSummary,
}

impl ComparisonReport {
    pub fn cohort(&self, mode: Mode) -> Option<&Cohort> {
        self.cohorts.iter().find(|c| c.mode == mode)
    }

    pub fn difference(&self, minuend: Mode, subtrahend: Mode) -> Option<&PairedDifference> {
        self.differences
            .iter()
            .find(|d| d.minuend == minuend && d.subtrahend == subtrahend)
    }
}

fn paired(a: (Mode, &[TrialRecord]), b: (Mode, &[TrialRecord]), horizon: u64) -> PairedDifference {
    let diffs: Vec<f64> = a
        .1
        .iter()
        .zip(b.1)
        .map(|(x, y)| {
            debug_assert_eq!(x.seed, y.seed);
            x.result.restricted_tau(horizon) as f64 - y.result.restricted_tau(horizon) as f64
        })
        .collect();
    PairedDifference {
        minuend: a.0,
        subtrahend: b.0,
        identical: diffs.iter().all(|&d| d == 0.0),
        difference: Estimate::mean_of(&diffs).expect("n ≥ 1"),
    }
}

/// Runs active, passive on every source and oracle on the same trial seeds,
/// then the active test again at each `alpha` in `alphas`.
pub fn compare_active_passive(spec: &ExperimentSpec, alphas: &[f64]) -> Result<ComparisonReport> {
    spec.validate()?;
    if spec.scenario.truth_label == TruthLabel::Null {
        return Err(Error::config("comparison needs an alternative scenario"));
    }
    let mut cfg = spec.config.clone();
    cfg.trace = TraceLevel::Off;
    let runner = Runner::new(&spec.scenario, &cfg)?;
    let population = runner.population()?;
    let k = spec.scenario.num_sources();
    let horizon = cfg.horizon;

    let mut modes = vec![Mode::Active];
    modes.extend((0..k).map(Mode::Passive));
    modes.push(Mode::Oracle);

    let (cohorts, scaling) = with_pool(spec.parallelism, || -> Result<_> {
        let cohorts = modes
            .iter()
            .map(|&m| Ok((m, run_cohort(&runner, m, spec.trials, false, None)?)))
            .collect::<Result<Vec<_>>>()?;
        let scaling = alphas
            .iter()
            .map(|&alpha| {
                let cfg = RunConfig { alpha, ..cfg.clone() };
                let runner = Runner::new(&spec.scenario, &cfg)?;
                let records = run_cohort(&runner, Mode::Active, spec.trials, false, None)?;
                let s = MetricsSummary::from_trials(records.iter().map(|r| &r.result), horizon, None);
                Ok(AlphaScalingRow {
                    alpha,
                    log_inv_alpha: -alpha.ln(),
                    mean_tau: s.restricted_mean_tau,
                    censoring_rate: s.censoring_rate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((cohorts, scaling))
    })??;

    let active = &cohorts[0].1;
    let mut differences: Vec<PairedDifference> = cohorts[1..=k]
        .iter()
        .map(|(m, recs)| paired((Mode::Active, active), (*m, recs), horizon))
        .collect();
    let oracle = &cohorts[k + 1];
    differences.push(paired((oracle.0, &oracle.1), (Mode::Active, active), horizon));

    let mut sorted = scaling.clone();
    sorted.sort_by(|a, b| a.log_inv_alpha.total_cmp(&b.log_inv_alpha));
    let xs: Vec<f64> = sorted.iter().map(|r| r.log_inv_alpha).collect();
    let ys: Vec<f64> = sorted.iter().map(|r| r.mean_tau.value).collect();

    let worst_informative_source = population
        .sources
        .iter()
        .enumerate()
        .filter(|(_, s)| s.distance > 0.0)
        .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
        .map(|(k, _)| k);

    Ok(ComparisonReport {
        best_source: population.best,
        worst_informative_source,
        cohorts: cohorts
            .iter()
            .map(|(m, recs)| Cohort {
                mode: *m,
                summary: MetricsSummary::from_trials(recs.iter().map(|r| &r.result), horizon, None),
            })
            .collect(),
        differences,
        alpha_fit: AffineFit::fit(&xs, &ys),
        alpha_increasing: ys.windows(2).all(|w| w[0] < w[1]),
        alpha_scaling: scaling,
        population,
    })
}
