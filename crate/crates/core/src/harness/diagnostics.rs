//! Per-trace checks of the selection and wealth-growth behaviour the analysis
//! relies on: logarithmic visit growth, `O(√t)` visits to suboptimal sources,
//! argmax identification and the ONS wealth lower bound.

use serde::{Deserialize, Serialize};

use crate::betting::wealth_lower_bound;
use crate::engine::{SlotRecord, TrialResult};
use crate::error::{Error, Result};
use crate::selection::leaders;

/// `c` in the `N_k ≤ c√t` check.
pub const SQRT_VISIT_FACTOR: f64 = 5.0;

/// A trial passes the argmax check when the empirical leader is `a*` on at
/// least this share of the final half of its slots.
pub const ARGMAX_SHARE: f64 = 0.9;

/// Absolute slack in log domain for the wealth-bound comparison.
pub const WEALTH_BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitCheckpoint {
    pub t: u64,
    pub min_visits: u64,
    /// `min_k N_{k,t} ≥ ln t`.
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthBoundCheck {
    pub t: u64,
    pub log_wealth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_first: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_second: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDiagnostics {
    pub slots: u64,
    /// Visit growth at `t = 10, 100, …`.
    pub visit_growth: Vec<VisitCheckpoint>,
    /// Visit growth at the final slot.
    pub final_visits: VisitCheckpoint,
    /// `max_{k≠a*} N_{k,T} / √T`; absent without `a*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suboptimal_sqrt_ratio: Option<f64>,
    /// Share of final-half slots whose unique empirical leader is `a*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax_share: Option<f64>,
    /// Only for bettors that run ONS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth_bound: Option<WealthBoundCheck>,
}

impl TrialDiagnostics {
    pub fn final_visit_ok(&self) -> bool {
        self.final_visits.ok
    }

    pub fn sqrt_ok(&self) -> Option<bool> {
        self.suboptimal_sqrt_ratio.map(|r| r <= SQRT_VISIT_FACTOR)
    }

    pub fn argmax_ok(&self) -> Option<bool> {
        self.argmax_share.map(|s| s >= ARGMAX_SHARE)
    }
}

fn visit_checkpoint(t: u64, counts: &[u64]) -> VisitCheckpoint {
    let min_visits = *counts.iter().min().expect("K ≥ 1");
    VisitCheckpoint {
        t,
        min_visits,
        ok: t > 0 && min_visits as f64 >= (t as f64).ln(),
    }
}

/// Diagnoses one retained trace. `best` is `a*` when the scenario has one;
/// `ons` says whether the bets came from the ONS bettor.
pub fn diagnose_trace(trace: &[SlotRecord], num_sources: usize, best: Option<usize>, ons: bool) -> TrialDiagnostics {
    let slots = trace.len() as u64;
    let mut counts = vec![0u64; num_sources];
    let mut sums = vec![0.0; num_sources];
    let mut visit_growth = Vec::new();
    let mut next_checkpoint = 10u64;
    let half = slots / 2;
    let (mut leader_hits, mut leader_slots) = (0u64, 0u64);

    for rec in trace {
        counts[rec.source] += 1;
        sums[rec.source] += rec.v;
        if rec.t == next_checkpoint {
            visit_growth.push(visit_checkpoint(rec.t, &counts));
            next_checkpoint *= 10;
        }
        if let Some(a) = best {
            if rec.t > half {
                let means: Vec<Option<f64>> = counts
                    .iter()
                    .zip(&sums)
                    .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
                    .collect();
                let lead = leaders(&means);
                leader_slots += 1;
                if lead == [a] {
                    leader_hits += 1;
                }
            }
        }
    }

    let suboptimal_sqrt_ratio = best.filter(|_| num_sources > 1 && slots > 0).map(|a| {
        let worst = counts
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != a)
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0);
        worst as f64 / (slots as f64).sqrt()
    });

    let wealth_bound = (ons && slots > 0).then(|| {
        let vs: Vec<f64> = trace.iter().map(|r| r.v).collect();
        let log_wealth = trace.last().expect("non-empty").log_wealth;
        let bounds = wealth_lower_bound(&vs);
        let log_first = bounds.and_then(|b| b.log_first);
        let log_second = bounds.map(|b| b.log_second);
        WealthBoundCheck {
            t: slots,
            log_wealth,
            log_first,
            log_second,
            first_ok: log_first.map(|b| log_wealth >= b - WEALTH_BOUND_SLACK),
            second_ok: log_second.map(|b| log_wealth >= b - WEALTH_BOUND_SLACK),
        }
    });

    TrialDiagnostics {
        slots,
        visit_growth,
        final_visits: visit_checkpoint(slots, &counts),
        suboptimal_sqrt_ratio,
        argmax_share: (leader_slots > 0).then(|| leader_hits as f64 / leader_slots as f64),
        wealth_bound,
    }
}

/// Same as [`diagnose_trace`] on a finished trial; fails without a trace.
pub fn diagnose_result(result: &TrialResult, best: Option<usize>, ons: bool) -> Result<TrialDiagnostics> {
    let trace = result
        .trace
        .as_ref()
        .ok_or_else(|| Error::capability("diagnostics need a retained trace (trace level slots or full)"))?;
    Ok(diagnose_trace(trace, result.counts.len(), best, ons))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRate {
    pub t: u64,
    pub trials: u64,
    pub rate: f64,
}

/// Pass rates over a cohort. Checks that do not apply are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaChecks {
    pub trials: u64,
    pub visit_growth: Vec<CheckpointRate>,
    /// `min_k N_{k,T} ≥ ln T` at each trial's final slot.
    pub final_visit_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_visit_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_argmax_share: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth_bound_first_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth_bound_second_rate: Option<f64>,
    pub wealth_bound_failures: u64,
}

fn rate(flags: &[bool]) -> Option<f64> {
    (!flags.is_empty()).then(|| flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
}

impl LemmaChecks {
    pub fn aggregate<'a>(diags: impl IntoIterator<Item = &'a TrialDiagnostics>) -> Self {
        let diags: Vec<&TrialDiagnostics> = diags.into_iter().collect();
        let mut checkpoints: std::collections::BTreeMap<u64, (u64, u64)> = Default::default();
        for d in &diags {
            for c in &d.visit_growth {
                let e = checkpoints.entry(c.t).or_default();
                e.0 += 1;
                e.1 += c.ok as u64;
            }
        }
        let visit_growth = checkpoints
            .into_iter()
            .map(|(t, (n, ok))| CheckpointRate {
                t,
                trials: n,
                rate: ok as f64 / n as f64,
            })
            .collect();
        let finals: Vec<bool> = diags.iter().map(|d| d.final_visit_ok()).collect();
        let sqrt: Vec<bool> = diags.iter().filter_map(|d| d.sqrt_ok()).collect();
        let argmax: Vec<bool> = diags.iter().filter_map(|d| d.argmax_ok()).collect();
        let shares: Vec<f64> = diags.iter().filter_map(|d| d.argmax_share).collect();
        let first: Vec<bool> = diags.iter().filter_map(|d| d.wealth_bound.and_then(|w| w.first_ok)).collect();
        let second: Vec<bool> = diags.iter().filter_map(|d| d.wealth_bound.and_then(|w| w.second_ok)).collect();
        LemmaChecks {
            trials: diags.len() as u64,
            visit_growth,
            final_visit_rate: rate(&finals).unwrap_or(0.0),
            sqrt_visit_rate: rate(&sqrt),
            argmax_rate: rate(&argmax),
            mean_argmax_share: (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64),
            wealth_bound_first_rate: rate(&first),
            wealth_bound_second_rate: rate(&second),
            wealth_bound_failures: first.iter().filter(|&&ok| !ok).count() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_models::Point;

    fn slot(t: u64, source: usize, v: f64, log_wealth: f64) -> SlotRecord {
        SlotRecord {
            t,
            source,
            x1: Point::Real(0.0),
            x2: Point::Real(0.0),
            v,
            lambda: 0.0,
            epsilon: None,
            log_wealth,
            witness: None,
        }
    }

    #[test]
    fn visit_growth_checkpoints() {
        // 100 slots alternating over two sources; the second source earns more.
        let trace: Vec<SlotRecord> = (1..=100).map(|t| slot(t, (t % 2) as usize, if t % 2 == 1 { 0.5 } else { 0.1 }, 0.0)).collect();
        let d = diagnose_trace(&trace, 2, Some(1), false);
        assert_eq!(d.visit_growth.iter().map(|c| c.t).collect::<Vec<_>>(), vec![10, 100]);
        assert_eq!(d.visit_growth[0].min_visits, 5);
        assert!(d.final_visit_ok());
        assert_eq!(d.suboptimal_sqrt_ratio, Some(5.0));
        assert_eq!(d.sqrt_ok(), Some(true));
        assert_eq!(d.argmax_share, Some(1.0));
        assert!(d.wealth_bound.is_none());
    }

    #[test]
    fn null_skips_argmax_and_sqrt() {
        let trace: Vec<SlotRecord> = (1..=30).map(|t| slot(t, (t % 3) as usize, 0.0, 0.0)).collect();
        let d = diagnose_trace(&trace, 3, None, true);
        assert!(d.argmax_share.is_none() && d.suboptimal_sqrt_ratio.is_none());
        assert!(!d.visit_growth.is_empty());
        // all-zero increments: no bound to compare against
        let w = d.wealth_bound.unwrap();
        assert!(w.first_ok.is_none() && w.second_ok.is_none());
        let agg = LemmaChecks::aggregate([&d]);
        assert!(agg.argmax_rate.is_none() && agg.sqrt_visit_rate.is_none());
        assert_eq!(agg.wealth_bound_failures, 0);
    }

    #[test]
    fn wealth_bound_detects_shortfall() {
        let trace: Vec<SlotRecord> = (1..=50).map(|t| slot(t, 0, 0.5, 0.0)).collect();
        let d = diagnose_trace(&trace, 1, Some(0), true);
        let w = d.wealth_bound.unwrap();
        // Σv = 25, Σv² = 12.5: first bound ln = 625/150 − ln 12.5 > 0 = realized.
        assert!((w.log_first.unwrap() - (625.0 / 150.0 - 12.5f64.ln())).abs() < 1e-12);
        assert_eq!(w.first_ok, Some(false));
        assert_eq!(LemmaChecks::aggregate([&d]).wealth_bound_failures, 1);
    }

    #[test]
    fn missing_trace_is_a_capability_error() {
        let r = TrialResult {
            stopped: false,
            tau: None,
            slots: 1,
            final_log_wealth: 0.0,
            counts: vec![1],
            running_means: vec![Some(0.0)],
            regrets: vec![0.0],
            bucket_width: 1,
            selection_buckets: vec![vec![1]],
            trace: None,
        };
        assert!(matches!(diagnose_result(&r, None, true), Err(Error::Capability(_))));
    }
}
