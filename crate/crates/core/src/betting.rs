//! Online Newton Step bettor and the log-domain wealth process.
//!
//! Per slot the bettor holds a predictable bet `λ_t ∈ [-1/2, 1/2]`; the
//! wealth is multiplied by `1 + λ_t v_t` with `|v_t| ≤ 1`, so each factor is
//! at least `1/2` and log-wealth stays finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bets are clipped to `[-BET_LIMIT, BET_LIMIT]`.
pub const BET_LIMIT: f64 = 0.5;

/// The ONS gain `2 / (2 − ln 3)`.
pub fn ons_gain() -> f64 {
    2.0 / (2.0 - 3f64.ln())
}

/// Direction of the ONS bet update.
///
/// `z = v / (1 + λv)` is the derivative of `ln(1 + λv)` in `λ`, so `Ascent`
/// moves `λ` toward higher log-wealth. `Descent` applies the subtractive
/// form `λ − gain · z / a`; it is kept for audit runs only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnsSign {
    #[default]
    Ascent,
    #[serde(alias = "paper-literal")]
    Descent,
}

impl std::str::FromStr for OnsSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascent" => Ok(OnsSign::Ascent),
            "paper-literal" | "descent" => Ok(OnsSign::Descent),
            other => Err(Error::config(format!(
                "unknown ons sign `{other}` (expected ascent | descent)"
            ))),
        }
    }
}

fn check_increment(v: f64) -> Result<()> {
    if v.is_nan() || v.abs() > 1.0 {
        return Err(Error::contract(format!("increment {v} outside [-1, 1]")));
    }
    Ok(())
}

/// ONS state: bet `λ`, curvature `a ≥ 1`, step count.
#[derive(Debug, Clone, PartialEq)]
pub struct BettorState {
    lambda: f64,
    curvature: f64,
    steps: u64,
    sign: OnsSign,
}

impl BettorState {
    /// `λ_1 = 0`, `a_0 = 1`.
    pub fn new(sign: OnsSign) -> Self {
        BettorState {
            lambda: 0.0,
            curvature: 1.0,
            steps: 0,
            sign,
        }
    }

    /// The bet for the next slot.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One ONS step on the observed increment `v`.
    pub fn ons_step(&mut self, v: f64) -> Result<()> {
        check_increment(v)?;
        let z = v / (1.0 + v * self.lambda);
        self.curvature += z * z;
        let step = ons_gain() * z / self.curvature;
        let raw = match self.sign {
            OnsSign::Ascent => self.lambda + step,
            OnsSign::Descent => self.lambda - step,
        };
        self.lambda = clip_bet(raw);
        self.steps += 1;
        Ok(())
    }
}

pub fn clip_bet(lambda: f64) -> f64 {
    lambda.clamp(-BET_LIMIT, BET_LIMIT)
}

/// `ℓ = ln W`, with optional `(v, λ)` history.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthState {
    log_wealth: f64,
    steps: u64,
    history: Option<Vec<(f64, f64)>>,
}

impl WealthState {
    /// `W_0 = 1`. History costs 16 bytes per step and is off unless asked for.
    pub fn new(retain_history: bool) -> Self {
        WealthState {
            log_wealth: 0.0,
            steps: 0,
            history: retain_history.then(Vec::new),
        }
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn history(&self) -> Option<&[(f64, f64)]> {
        self.history.as_deref()
    }

    /// `ℓ ← ℓ + ln(1 + λv)`.
    ///
    /// Bettors keep `|λ| ≤ 1/2`; constant oracle bets may use up to `|λ| ≤ 1`
    /// as long as the factor stays positive.
    pub fn update(&mut self, lambda: f64, v: f64) -> Result<()> {
        check_increment(v)?;
        if lambda.is_nan() || lambda.abs() > 1.0 {
            return Err(Error::contract(format!("bet {lambda} outside [-1, 1]")));
        }
        let factor = 1.0 + lambda * v;
        if factor <= 0.0 {
            return Err(Error::contract(format!("wealth factor 1 + {lambda}·{v} is not positive")));
        }
        self.log_wealth += factor.ln();
        self.steps += 1;
        if let Some(h) = self.history.as_mut() {
            h.push((v, lambda));
        }
        Ok(())
    }
}

/// Lower bounds on ONS wealth as functions of the increment history, in log
/// domain to survive long runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthBounds {
    /// `ln[(1/Σv²) · exp((Σv)² / (4(Σv² + Σv)))]`, absent when `Σv² + Σv ≤ 0`.
    pub log_first: Option<f64>,
    /// `(t/8)·(mean v)² − ln t`.
    pub log_second: f64,
}

impl WealthBounds {
    pub fn first(&self) -> Option<f64> {
        self.log_first.map(f64::exp)
    }

    pub fn second(&self) -> f64 {
        self.log_second.exp()
    }
}

/// Evaluates both growth bounds; `None` when the history is empty or `Σv² = 0`.
pub fn wealth_lower_bound(vs: &[f64]) -> Option<WealthBounds> {
    let sum: f64 = vs.iter().sum();
    let sumsq: f64 = vs.iter().map(|v| v * v).sum();
    if vs.is_empty() || sumsq == 0.0 {
        return None;
    }
    let t = vs.len() as f64;
    let denom = 4.0 * (sumsq + sum);
    let log_first = (denom > 0.0).then(|| sum * sum / denom - sumsq.ln());
    let mean = sum / t;
    Some(WealthBounds {
        log_first,
        log_second: t / 8.0 * mean * mean - t.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gain_constant() {
        assert!((ons_gain() - 2.218_8).abs() < 1e-4);
    }

    #[test]
    fn no_information_step() {
        let mut b = BettorState::new(OnsSign::Ascent);
        b.ons_step(0.0).unwrap();
        assert_eq!((b.lambda(), b.curvature()), (0.0, 1.0));
    }

    #[test]
    fn positive_unit_increment_saturates_bet() {
        let mut b = BettorState::new(OnsSign::Ascent);
        b.ons_step(1.0).unwrap();
        // z = 1, a' = 2, raw step ≈ 1.1094 → clipped
        assert_eq!(b.curvature(), 2.0);
        assert!((ons_gain() * 0.5 - 1.1094).abs() < 1e-4);
        assert_eq!(b.lambda(), 0.5);

        let mut b = BettorState::new(OnsSign::Ascent);
        b.ons_step(-1.0).unwrap();
        assert_eq!(b.lambda(), -0.5);
    }

    #[test]
    fn descent_sign_mirrors_ascent() {
        let mut b = BettorState::new(OnsSign::Descent);
        b.ons_step(1.0).unwrap();
        assert_eq!(b.lambda(), -0.5);
    }

    #[test]
    fn out_of_range_increment_is_rejected() {
        let mut b = BettorState::new(OnsSign::Ascent);
        assert!(matches!(b.ons_step(1.5), Err(Error::Contract(_))));
        assert!(matches!(b.ons_step(f64::NAN), Err(Error::Contract(_))));
        let mut w = WealthState::new(false);
        assert!(w.update(0.5, -1.2).is_err());
        assert!(w.update(1.0, -1.0).is_err());
    }

    #[test]
    fn wealth_arithmetic() {
        let mut w = WealthState::new(true);
        w.update(0.5, 1.0).unwrap();
        assert!((w.log_wealth() - 1.5f64.ln()).abs() < 1e-15);
        assert_eq!(w.history().unwrap(), &[(1.0, 0.5)]);

        let mut w = WealthState::new(false);
        for _ in 0..100 {
            w.update(0.0, 0.7).unwrap();
        }
        assert_eq!(w.log_wealth(), 0.0);
        assert!(w.history().is_none());
    }

    #[test]
    fn alternating_outcomes_decay_wealth() {
        let mut w = WealthState::new(false);
        for _ in 0..10 {
            w.update(0.5, 1.0).unwrap();
            w.update(0.5, -1.0).unwrap();
        }
        assert!((w.log_wealth() - 10.0 * 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bounds_on_known_histories() {
        assert!(wealth_lower_bound(&[]).is_none());
        assert!(wealth_lower_bound(&[0.0, 0.0]).is_none());

        let b = wealth_lower_bound(&vec![0.5; 100]).unwrap();
        assert!((b.second() - 0.228).abs() < 1e-3);

        let b = wealth_lower_bound(&[1.0]).unwrap();
        assert!((b.first().unwrap() - (1.0f64 / 8.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn ascent_grows_wealth_on_positive_drift() {
        let mut b = BettorState::new(OnsSign::Ascent);
        let mut w = WealthState::new(false);
        for i in 0..400 {
            let v = if i % 4 == 0 { -0.5 } else { 0.5 };
            w.update(b.lambda(), v).unwrap();
            b.ons_step(v).unwrap();
        }
        assert!(w.log_wealth() > 10.0);
    }

    proptest! {
        #[test]
        fn bet_and_curvature_invariants(vs in prop::collection::vec(-1.0f64..=1.0, 1..200)) {
            for sign in [OnsSign::Ascent, OnsSign::Descent] {
                let mut b = BettorState::new(sign);
                let mut w = WealthState::new(false);
                let mut last_a = b.curvature();
                for &v in &vs {
                    w.update(b.lambda(), v).unwrap();
                    b.ons_step(v).unwrap();
                    prop_assert!(b.lambda().abs() <= BET_LIMIT);
                    prop_assert!(b.curvature() >= last_a && b.curvature() >= 1.0);
                    prop_assert_eq!(clip_bet(b.lambda()), b.lambda());
                    last_a = b.curvature();
                }
                prop_assert!(w.log_wealth().is_finite());
            }
        }

        #[test]
        fn clip_is_idempotent(x in -10.0f64..10.0) {
            prop_assert_eq!(clip_bet(clip_bet(x)), clip_bet(x));
        }
    }
}
