//! Linear test functions over bounded feature maps and their per-source
//! online-gradient-ascent predictors.
//!
//! The class is `G = { x ↦ ⟨w, φ(x)⟩ : ‖w‖₂ ≤ 1/2 }` with `‖φ(x)‖₂ ≤ 1`, so
//! every `g ∈ G` maps into `[-1/2, 1/2]`, `-g ∈ G` whenever `g ∈ G`, and the
//! supremum of a linear functional over `G` has a closed form. That closed
//! form makes the individual regret of each predictor exactly computable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source_models::{Point, SourceModel};

/// Radius of the witness ball.
pub const WITNESS_RADIUS: f64 = 0.5;

/// Slack allowed on `‖w‖ ≤ 1/2` after floating-point projection.
pub const NORM_TOL: f64 = 1e-12;

/// Default OGA step scale: `η_n = scale / √n`.
pub const DEFAULT_STEP_SCALE: f64 = 0.5;

/// Declarative feature-map choice, as written in scenario and run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureMapSpec {
    /// `φ(x) = x − 1/2` on `{0, 1}`.
    CenteredBinary,
    /// `φ(x) = tanh(x / scale)` on the reals (categories use their index).
    TanhScalar { scale: f64 },
    /// Indicator vector of a category.
    OneHot { dim: usize },
    /// `φ_j(x) = cos(ω_j x + b_j) / √dim` with `ω_j ~ N(0, 1/bandwidth²)`,
    /// `b_j ~ U[0, 2π)` drawn once from `seed`.
    RandomFourier { dim: usize, bandwidth: f64, seed: u64 },
}

impl FeatureMapSpec {
    /// Checks that every point `source` can emit is admissible for this map.
    pub fn check_admissible(&self, source: &SourceModel) -> Result<()> {
        let ok = match (self, source) {
            (FeatureMapSpec::CenteredBinary, SourceModel::BernoulliPair { .. }) => true,
            (FeatureMapSpec::CenteredBinary, _) => false,
            (FeatureMapSpec::OneHot { dim }, SourceModel::CategoricalPair { params_1, .. }) => {
                if *dim != params_1.probs.len() {
                    return Err(Error::capability(format!(
                        "one-hot dimension {dim} does not match alphabet size {}",
                        params_1.probs.len()
                    )));
                }
                true
            }
            (FeatureMapSpec::OneHot { .. }, _) => false,
            (FeatureMapSpec::TanhScalar { .. } | FeatureMapSpec::RandomFourier { .. }, _) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::capability(format!(
                "feature map {} does not support {} sources",
                self.kind_name(),
                source.kind_name()
            )))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeatureMapSpec::CenteredBinary => "centered-binary",
            FeatureMapSpec::TanhScalar { .. } => "tanh-scalar",
            FeatureMapSpec::OneHot { .. } => "one-hot",
            FeatureMapSpec::RandomFourier { .. } => "random-fourier",
        }
    }
}

/// A built feature map. Random-Fourier frequencies are fixed at construction,
/// so the class does not depend on the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureMapSpec,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl FeatureMap {
    pub fn new(spec: FeatureMapSpec) -> Result<Self> {
        let (frequencies, phases) = match spec {
            FeatureMapSpec::CenteredBinary => (vec![], vec![]),
            FeatureMapSpec::TanhScalar { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config(format!("tanh-scalar scale must be positive, got {scale}")));
                }
                (vec![], vec![])
            }
            FeatureMapSpec::OneHot { dim } => {
                if dim == 0 {
                    return Err(Error::config("one-hot dimension must be at least 1"));
                }
                (vec![], vec![])
            }
            FeatureMapSpec::RandomFourier { dim, bandwidth, seed } => {
                if dim == 0 {
                    return Err(Error::config("random-fourier dimension must be at least 1"));
                }
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::config(format!(
                        "random-fourier bandwidth must be positive, got {bandwidth}"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, 1.0 / bandwidth).expect("positive std");
                let freqs: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
                let phases: Vec<f64> = (0..dim)
                    .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                    .collect();
                (freqs, phases)
            }
        };
        Ok(FeatureMap {
            spec,
            frequencies,
            phases,
        })
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match self.spec {
            FeatureMapSpec::CenteredBinary | FeatureMapSpec::TanhScalar { .. } => 1,
            FeatureMapSpec::OneHot { dim } | FeatureMapSpec::RandomFourier { dim, .. } => dim,
        }
    }

    pub fn admits(&self, x: &Point) -> bool {
        match (&self.spec, x) {
            (FeatureMapSpec::CenteredBinary, Point::Real(v)) => *v == 0.0 || *v == 1.0,
            (FeatureMapSpec::CenteredBinary, Point::Category(_)) => false,
            (FeatureMapSpec::OneHot { dim }, Point::Category(i)) => i < dim,
            (FeatureMapSpec::OneHot { .. }, Point::Real(_)) => false,
            (_, Point::Real(v)) => v.is_finite(),
            (_, Point::Category(_)) => true,
        }
    }

    fn inadmissible(&self, x: &Point) -> Error {
        Error::capability(format!("point {x:?} is not admissible for {}", self.spec.kind_name()))
    }

    /// Writes `φ(x)` into `out` (length `dim`).
    pub fn features_into(&self, x: &Point, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::contract(format!(
                "feature buffer has length {}, map dimension is {}",
                out.len(),
                self.dim()
            )));
        }
        if !self.admits(x) {
            return Err(self.inadmissible(x));
        }
        match self.spec {
            FeatureMapSpec::CenteredBinary => out[0] = x.as_real() - 0.5,
            FeatureMapSpec::TanhScalar { scale } => out[0] = (x.as_real() / scale).tanh(),
            FeatureMapSpec::OneHot { .. } => {
                out.fill(0.0);
                if let Point::Category(i) = x {
                    out[*i] = 1.0;
                }
            }
            FeatureMapSpec::RandomFourier { dim, .. } => {
                let norm = 1.0 / (dim as f64).sqrt();
                let r = x.as_real();
                for (o, (w, b)) in out.iter_mut().zip(self.frequencies.iter().zip(&self.phases)) {
                    *o = norm * (w * r + b).cos();
                }
            }
        }
        Ok(())
    }

    pub fn features(&self, x: &Point) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.features_into(x, &mut out)?;
        Ok(out)
    }

    /// `⟨w, φ(x)⟩` without materializing `φ(x)`.
    pub fn dot(&self, w: &[f64], x: &Point) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::contract(format!(
                "witness dimension {} does not match feature dimension {}",
                w.len(),
                self.dim()
            )));
        }
        if !self.admits(x) {
            return Err(self.inadmissible(x));
        }
        Ok(match self.spec {
            FeatureMapSpec::CenteredBinary => w[0] * (x.as_real() - 0.5),
            FeatureMapSpec::TanhScalar { scale } => w[0] * (x.as_real() / scale).tanh(),
            FeatureMapSpec::OneHot { .. } => match x {
                Point::Category(i) => w[*i],
                Point::Real(_) => unreachable!("rejected by admits"),
            },
            FeatureMapSpec::RandomFourier { dim, .. } => {
                let r = x.as_real();
                let s: f64 = w
                    .iter()
                    .zip(self.frequencies.iter().zip(&self.phases))
                    .map(|(wj, (f, b))| wj * (f * r + b).cos())
                    .sum();
                s / (dim as f64).sqrt()
            }
        })
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A test function `g(x) = ⟨w, φ(x)⟩` with `‖w‖₂ ≤ 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub weights: Vec<f64>,
}

impl Witness {
    pub fn zero(dim: usize) -> Self {
        Witness { weights: vec![0.0; dim] }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let n = norm(&weights);
        if n.is_nan() || n > WITNESS_RADIUS + NORM_TOL {
            return Err(Error::contract(format!("witness norm {n} exceeds 1/2")));
        }
        Ok(Witness { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.weights)
    }

    /// The reflected witness `-g`, also in the class.
    pub fn negated(&self) -> Self {
        Witness {
            weights: self.weights.iter().map(|w| -w).collect(),
        }
    }

    /// `g(x) ∈ [-1/2, 1/2]`.
    pub fn evaluate(&self, fmap: &FeatureMap, x: &Point) -> Result<f64> {
        fmap.dot(&self.weights, x)
    }

    /// `v = g(x1) − g(x2) ∈ [-1, 1]`.
    pub fn increment(&self, fmap: &FeatureMap, x1: &Point, x2: &Point) -> Result<f64> {
        Ok(self.evaluate(fmap, x1)? - self.evaluate(fmap, x2)?)
    }
}

/// Closed-form `sup_{g ∈ G} ⟨w, s⟩ = ‖s‖/2` and its maximizer `s / (2‖s‖)`.
pub fn ball_supremum(s: &[f64]) -> (f64, Witness) {
    let n = norm(s);
    if n == 0.0 {
        return (0.0, Witness::zero(s.len()));
    }
    let weights = s.iter().map(|x| x * WITNESS_RADIUS / n).collect();
    (WITNESS_RADIUS * n, Witness { weights })
}

/// Online gradient ascent over the witness ball for one source.
///
/// Tracks the displacement sum `s = Σ (φ(x1) − φ(x2))` and the earned payoff
/// `e = Σ v` over the slots where this source was selected, which is all the
/// individual regret needs.
#[derive(Debug, Clone)]
pub struct PredictorState {
    witness: Witness,
    visits: u64,
    displacement: Vec<f64>,
    earned: f64,
    step_scale: f64,
    scratch: (Vec<f64>, Vec<f64>),
}

impl PredictorState {
    pub fn new(dim: usize) -> Self {
        Self::with_step_scale(dim, DEFAULT_STEP_SCALE)
    }

    pub fn with_step_scale(dim: usize, step_scale: f64) -> Self {
        PredictorState {
            witness: Witness::zero(dim),
            visits: 0,
            displacement: vec![0.0; dim],
            earned: 0.0,
            step_scale,
            scratch: (vec![0.0; dim], vec![0.0; dim]),
        }
    }

    /// The current (pre-update) witness `g_{k,t}`.
    pub fn witness(&self) -> &Witness {
        &self.witness
    }

    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    pub fn earned(&self) -> f64 {
        self.earned
    }

    /// Records a visit. `v_earned` must be the increment of the witness held
    /// *before* this call.
    pub fn oga_update(&mut self, fmap: &FeatureMap, x1: &Point, x2: &Point, v_earned: f64) -> Result<()> {
        let (p1, p2) = &mut self.scratch;
        fmap.features_into(x1, p1)?;
        fmap.features_into(x2, p2)?;
        self.visits += 1;
        self.earned += v_earned;
        let eta = self.step_scale / (self.visits as f64).sqrt();
        for j in 0..self.displacement.len() {
            let grad = p1[j] - p2[j];
            self.displacement[j] += grad;
            self.witness.weights[j] += eta * grad;
        }
        let n = self.witness.norm();
        if n > WITNESS_RADIUS {
            let shrink = WITNESS_RADIUS / n;
            self.witness.weights.iter_mut().for_each(|w| *w *= shrink);
        }
        Ok(())
    }

    pub fn best_in_hindsight(&self) -> (f64, Witness) {
        ball_supremum(&self.displacement)
    }

    /// `R = sup_g Σ v(g) − Σ v(g_s) = ‖s‖/2 − e`.
    pub fn regret(&self) -> f64 {
        self.best_in_hindsight().0 - self.earned
    }
}
