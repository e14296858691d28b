//! Aggregate statistics over a cohort of trials.

use serde::{Deserialize, Serialize};

use crate::analysis::PopulationSummary;
use crate::engine::TrialResult;

/// Normal-approximation intervals are reported only from this many trials on.
pub const MIN_TRIALS_FOR_CI: u64 = 30;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Quantile levels reported for `τ`.
pub const TAU_QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
    /// 95% normal interval; absent below [`MIN_TRIALS_FOR_CI`] samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<(f64, f64)>,
}

impl Estimate {
    fn with_se(value: f64, standard_error: f64, n: u64) -> Self {
        Estimate {
            value,
            standard_error,
            ci95: (n >= MIN_TRIALS_FOR_CI).then_some((value - Z95 * standard_error, value + Z95 * standard_error)),
        }
    }

    /// Sample mean with the standard error of the mean.
    pub fn mean_of(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self::with_se(mean, se, n as u64))
    }

    /// Binomial proportion with `√(p(1−p)/n)`.
    pub fn proportion(successes: u64, n: u64) -> Self {
        let p = successes as f64 / n as f64;
        Self::with_se(p, (p * (1.0 - p) / n as f64).sqrt(), n)
    }

    pub fn covers(&self, truth: f64) -> Option<bool> {
        self.ci95.map(|(lo, hi)| lo <= truth && truth <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Share of selections per source within one time bucket, pooled over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketFrequency {
    /// First slot of the bucket (1-based, inclusive).
    pub start: u64,
    /// Last slot of the bucket (inclusive).
    pub end: u64,
    pub selections: u64,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub trials: u64,
    pub horizon: u64,
    pub stop_fraction: Estimate,
    pub censoring_rate: f64,
    /// Mean `τ` over trials that stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_tau_stopped: Option<Estimate>,
    /// Mean of `min(τ, T_max)`. With a common censoring time this is the
    /// Kaplan–Meier restricted mean.
    pub restricted_mean_tau: Estimate,
    /// Quantiles of `τ` over trials that stopped.
    pub tau_quantiles: Vec<Quantile>,
    pub mean_final_log_wealth: Estimate,
    pub selection_frequencies: Vec<BucketFrequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSummary>,
}

impl MetricsSummary {
    /// Aggregates trials. Only sums and sorted values are used, so the input
    /// order does not matter.
    pub fn from_trials<'a>(
        trials: impl IntoIterator<Item = &'a TrialResult>,
        horizon: u64,
        population: Option<PopulationSummary>,
    ) -> Self {
        let trials: Vec<&TrialResult> = trials.into_iter().collect();
        let n = trials.len() as u64;
        assert!(n > 0, "summary needs at least one trial");
        let stopped = trials.iter().filter(|t| t.stopped).count() as u64;

        let mut taus: Vec<f64> = trials.iter().filter_map(|t| t.tau).map(|t| t as f64).collect();
        taus.sort_by(f64::total_cmp);
        let restricted: Vec<f64> = trials.iter().map(|t| t.restricted_tau(horizon) as f64).collect();
        let log_wealth: Vec<f64> = trials.iter().map(|t| t.final_log_wealth).collect();
        let tau_quantiles = if taus.is_empty() {
            Vec::new()
        } else {
            TAU_QUANTILES
                .iter()
                .map(|&level| Quantile {
                    level,
                    value: quantile_sorted(&taus, level),
                })
                .collect()
        };

        MetricsSummary {
            trials: n,
            horizon,
            stop_fraction: Estimate::proportion(stopped, n),
            censoring_rate: (n - stopped) as f64 / n as f64,
            mean_tau_stopped: Estimate::mean_of(&taus),
            restricted_mean_tau: Estimate::mean_of(&restricted).expect("n > 0"),
            tau_quantiles,
            mean_final_log_wealth: Estimate::mean_of(&log_wealth).expect("n > 0"),
            selection_frequencies: bucket_frequencies(&trials),
            population,
        }
    }
}

fn bucket_frequencies(trials: &[&TrialResult]) -> Vec<BucketFrequency> {
    let first = trials[0];
    let k = first.counts.len();
    let width = first.bucket_width;
    let mut totals = vec![vec![0u64; k]; first.selection_buckets.len()];
    for t in trials {
        for (acc, bucket) in totals.iter_mut().zip(&t.selection_buckets) {
            for (a, b) in acc.iter_mut().zip(bucket) {
                *a += b;
            }
        }
    }
    totals
        .into_iter()
        .enumerate()
        .map(|(b, counts)| {
            let selections: u64 = counts.iter().sum();
            let frequencies = counts
                .iter()
                .map(|&c| if selections > 0 { c as f64 / selections as f64 } else { 0.0 })
                .collect();
            BucketFrequency {
                start: b as u64 * width + 1,
                end: (b as u64 + 1) * width,
                selections,
                frequencies,
            }
        })
        .collect()
}
