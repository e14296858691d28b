//! Vanishing ε(t)-greedy source selection.
//!
//! At slot `t` the selector exploits the source with the largest running
//! average of earned increments with probability `1 − ε(t)` and explores
//! uniformly with probability `ε(t) = min{1, C/t}`. Both branches are folded
//! into one categorical draw from
//!
//! ```text
//! p_k = (1 − ε)·[k ∈ argmax μ̂] / |argmax μ̂| + ε / K
//! ```
//!
//! Unvisited sources rank below every visited one; ties split the exploit
//! mass uniformly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C = K(c₁ + 40K) + 4K·√(5K(c₁ + 20K))` with `c₁ = 2560 / L²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConstant {
    pub c: f64,
    pub c1: f64,
}

pub fn compute_c(k: usize, gap_lower_bound: f64) -> Result<ExplorationConstant> {
    if k == 0 {
        return Err(Error::config("number of sources must be at least 1"));
    }
    if !(gap_lower_bound > 0.0 && gap_lower_bound.is_finite()) {
        return Err(Error::config(format!(
            "gap lower bound L must be positive, got {gap_lower_bound}"
        )));
    }
    let k = k as f64;
    let c1 = 2560.0 / (gap_lower_bound * gap_lower_bound);
    let c = k * (c1 + 40.0 * k) + 4.0 * k * (5.0 * k * (c1 + 20.0 * k)).sqrt();
    Ok(ExplorationConstant { c, c1 })
}

/// `ε(t) = min{1, C/t}` for `t ≥ 1`.
pub fn epsilon_schedule(t: u64, c: f64) -> f64 {
    debug_assert!(t >= 1);
    (c / t as f64).min(1.0)
}

/// Outcome of one selection draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub source: usize,
    pub probabilities: Vec<f64>,
    pub epsilon: f64,
}

/// Running averages and counts per source.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    sums: Vec<f64>,
    counts: Vec<u64>,
    c: f64,
    slot: u64,
}

impl SelectorState {
    pub fn new(num_sources: usize, c: f64) -> Result<Self> {
        if num_sources == 0 {
            return Err(Error::config("number of sources must be at least 1"));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::config(format!("exploration constant must be finite and ≥ 0, got {c}")));
        }
        Ok(SelectorState {
            sums: vec![0.0; num_sources],
            counts: vec![0; num_sources],
            c,
            slot: 0,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.counts.len()
    }

    pub fn exploration_constant(&self) -> f64 {
        self.c
    }

    /// Completed slots.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `μ̂_k`, or `None` while source `k` is unvisited.
    pub fn running_mean(&self, k: usize) -> Option<f64> {
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    pub fn running_means(&self) -> Vec<Option<f64>> {
        (0..self.num_sources()).map(|k| self.running_mean(k)).collect()
    }

    /// The argmax set of `μ̂`; all sources when none has been visited.
    pub fn leaders(&self) -> Vec<usize> {
        leaders(&self.running_means())
    }

    /// Selection law for the next slot `t = slot + 1`.
    pub fn probabilities(&self) -> (Vec<f64>, f64) {
        let k = self.num_sources();
        let eps = epsilon_schedule(self.slot + 1, self.c);
        let leaders = self.leaders();
        let explore = eps / k as f64;
        let exploit = (1.0 - eps) / leaders.len() as f64;
        let mut p = vec![explore; k];
        for &i in &leaders {
            p[i] += exploit;
        }
        (p, eps)
    }

    pub fn select_source<R: Rng + ?Sized>(&self, rng: &mut R) -> Selection {
        let (probabilities, epsilon) = self.probabilities();
        let source = draw_categorical(&probabilities, rng);
        Selection {
            source,
            probabilities,
            epsilon,
        }
    }

    /// Adds this slot's earned increment to source `k` and advances the slot.
    pub fn record_outcome(&mut self, k: usize, v: f64) -> Result<()> {
        if k >= self.num_sources() {
            return Err(Error::contract(format!(
                "source index {k} out of range for K = {}",
                self.num_sources()
            )));
        }
        self.sums[k] += v;
        self.counts[k] += 1;
        self.slot += 1;
        Ok(())
    }
}

/// Indices of the largest visited means; unvisited entries rank lowest.
pub fn leaders(means: &[Option<f64>]) -> Vec<usize> {
    let best = means.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return (0..means.len()).collect();
    }
    means
        .iter()
        .enumerate()
        .filter(|(_, m)| **m == Some(best))
        .map(|(i, _)| i)
        .collect()
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            last = i;
        }
        acc += pi;
        if u < acc {
            return i;
        }
    }
    last
}
