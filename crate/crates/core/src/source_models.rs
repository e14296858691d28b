//! Paired data sources and scenario documents.
//!
//! Each source `k` is a pair of distributions `(P_k1, P_k2)` over a shared
//! space. One slot of the test draws a fresh independent pair
//! `(X_k1, X_k2) ~ P_k1 × P_k2` from the selected source.
//!
//! Scenario files are JSON:
//!
//! ```json
//! {
//!   "truth_label": "alternative",
//!   "sources": [
//!     { "kind": "bernoulli-pair", "params_1": { "p": 0.9 }, "params_2": { "p": 0.1 } },
//!     { "kind": "gaussian-pair",
//!       "params_1": { "mean": 0.0, "std": 1.0 }, "params_2": { "mean": 0.0, "std": 1.0 },
//!       "feature_map": { "kind": "tanh-scalar", "scale": 1.0 } },
//!     { "kind": "categorical-pair",
//!       "params_1": { "probs": [0.5, 0.5] }, "params_2": { "probs": [0.5, 0.5] } }
//!   ]
//! }
//! ```
//!
//! Sources of different kinds may be mixed in one scenario; each source then
//! carries its own feature map (see [`default_feature_map`]).

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_class::{FeatureMap, FeatureMapSpec};

/// Tolerance on `Σ p = 1` for categorical tables.
const PROB_SUM_TOL: f64 = 1e-9;

/// Number of Gauss–Hermite nodes used for Gaussian moments.
pub const GAUSS_HERMITE_NODES: usize = 64;

/// A single observation drawn from one side of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    /// A real value (Bernoulli draws are `0.0` / `1.0`).
    Real(f64),
    /// An index into a categorical alphabet.
    Category(usize),
}

impl Point {
    /// The point as a real number; categories map to their index.
    pub fn as_real(&self) -> f64 {
        match *self {
            Point::Real(x) => x,
            Point::Category(i) => i as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliParams {
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalParams {
    pub probs: Vec<f64>,
}

/// A pair of distributions `(P_k1, P_k2)` of one built-in family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceModel {
    BernoulliPair {
        params_1: BernoulliParams,
        params_2: BernoulliParams,
    },
    GaussianPair {
        params_1: GaussianParams,
        params_2: GaussianParams,
    },
    CategoricalPair {
        params_1: CategoricalParams,
        params_2: CategoricalParams,
    },
}

/// Which side of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// One marginal, borrowed from a [`SourceModel`].
#[derive(Debug, Clone, Copy)]
pub enum Marginal<'a> {
    Bernoulli(&'a BernoulliParams),
    Gaussian(&'a GaussianParams),
    Categorical(&'a CategoricalParams),
}

impl Marginal<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Marginal::Bernoulli(b) => Point::Real(if rng.random::<f64>() < b.p { 1.0 } else { 0.0 }),
            Marginal::Gaussian(g) => {
                // std > 0 is validated on construction.
                let normal = Normal::new(g.mean, g.std).expect("validated gaussian");
                Point::Real(normal.sample(rng))
            }
            Marginal::Categorical(c) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, &p) in c.probs.iter().enumerate() {
                    if p > 0.0 {
                        last_positive = i;
                    }
                    acc += p;
                    if u < acc {
                        return Point::Category(i);
                    }
                }
                Point::Category(last_positive)
            }
        }
    }

    /// A weighted point set reproducing expectations under this marginal:
    /// exact for Bernoulli and categorical, 64-node Gauss–Hermite for Gaussian.
    pub fn quadrature(&self) -> Vec<(f64, Point)> {
        match self {
            Marginal::Bernoulli(b) => vec![(1.0 - b.p, Point::Real(0.0)), (b.p, Point::Real(1.0))],
            Marginal::Categorical(c) => c
                .probs
                .iter()
                .enumerate()
                .map(|(i, &p)| (p, Point::Category(i)))
                .collect(),
            Marginal::Gaussian(g) => {
                let rule = gauss_hermite();
                let norm = std::f64::consts::PI.sqrt();
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| {
                        (w / norm, Point::Real(g.mean + std::f64::consts::SQRT_2 * g.std * x))
                    })
                    .collect()
            }
        }
    }
}

impl SourceModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SourceModel::BernoulliPair { .. } => "bernoulli-pair",
            SourceModel::GaussianPair { .. } => "gaussian-pair",
            SourceModel::CategoricalPair { .. } => "categorical-pair",
        }
    }

    pub fn marginal(&self, side: Side) -> Marginal<'_> {
        match (self, side) {
            (SourceModel::BernoulliPair { params_1, .. }, Side::First) => Marginal::Bernoulli(params_1),
            (SourceModel::BernoulliPair { params_2, .. }, Side::Second) => Marginal::Bernoulli(params_2),
            (SourceModel::GaussianPair { params_1, .. }, Side::First) => Marginal::Gaussian(params_1),
            (SourceModel::GaussianPair { params_2, .. }, Side::Second) => Marginal::Gaussian(params_2),
            (SourceModel::CategoricalPair { params_1, .. }, Side::First) => Marginal::Categorical(params_1),
            (SourceModel::CategoricalPair { params_2, .. }, Side::Second) => Marginal::Categorical(params_2),
        }
    }

    /// True when both marginals are the same distribution.
    pub fn is_null(&self) -> bool {
        match self {
            SourceModel::BernoulliPair { params_1, params_2 } => params_1 == params_2,
            SourceModel::GaussianPair { params_1, params_2 } => params_1 == params_2,
            SourceModel::CategoricalPair { params_1, params_2 } => params_1 == params_2,
        }
    }

    /// Size of the categorical alphabet, if any.
    pub fn alphabet_size(&self) -> Option<usize> {
        match self {
            SourceModel::CategoricalPair { params_1, .. } => Some(params_1.probs.len()),
            _ => None,
        }
    }

    /// Checks parameter ranges. `path` prefixes error field names.
    pub fn validate(&self, path: &str) -> Result<()> {
        fn prob(path: String, p: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(path, format!("probability {p} outside [0, 1]")));
            }
            Ok(())
        }
        fn gauss(path: String, g: &GaussianParams) -> Result<()> {
            if !g.mean.is_finite() {
                return Err(Error::parse(format!("{path}.mean"), "mean must be finite"));
            }
            if !(g.std > 0.0 && g.std.is_finite()) {
                return Err(Error::parse(
                    format!("{path}.std"),
                    format!("standard deviation must be positive, got {}", g.std),
                ));
            }
            Ok(())
        }
        fn table(path: String, c: &CategoricalParams) -> Result<()> {
            if c.probs.is_empty() {
                return Err(Error::parse(format!("{path}.probs"), "empty probability table"));
            }
            for (i, &p) in c.probs.iter().enumerate() {
                prob(format!("{path}.probs[{i}]"), p)?;
            }
            let sum: f64 = c.probs.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::parse(
                    format!("{path}.probs"),
                    format!("probabilities sum to {sum}, expected 1"),
                ));
            }
            Ok(())
        }

        match self {
            SourceModel::BernoulliPair { params_1, params_2 } => {
                prob(format!("{path}.params_1.p"), params_1.p)?;
                prob(format!("{path}.params_2.p"), params_2.p)
            }
            SourceModel::GaussianPair { params_1, params_2 } => {
                gauss(format!("{path}.params_1"), params_1)?;
                gauss(format!("{path}.params_2"), params_2)
            }
            SourceModel::CategoricalPair { params_1, params_2 } => {
                table(format!("{path}.params_1"), params_1)?;
                table(format!("{path}.params_2"), params_2)?;
                if params_1.probs.len() != params_2.probs.len() {
                    return Err(Error::parse(
                        format!("{path}.params_2.probs"),
                        format!(
                            "alphabet size {} differs from params_1 ({})",
                            params_2.probs.len(),
                            params_1.probs.len()
                        ),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Draws one pair `(X_k1, X_k2)`. Consecutive calls are i.i.d.
pub fn sample_pair<R: Rng + ?Sized>(source: &SourceModel, rng: &mut R) -> (Point, Point) {
    let x1 = source.marginal(Side::First).sample(rng);
    let x2 = source.marginal(Side::Second).sample(rng);
    (x1, x2)
}

/// The per-kind feature map used when a source does not name one.
pub fn default_feature_map(source: &SourceModel) -> FeatureMapSpec {
    match source {
        SourceModel::BernoulliPair { .. } => FeatureMapSpec::CenteredBinary,
        SourceModel::GaussianPair { .. } => FeatureMapSpec::TanhScalar { scale: 1.0 },
        SourceModel::CategoricalPair { params_1, .. } => FeatureMapSpec::OneHot {
            dim: params_1.probs.len(),
        },
    }
}

/// Declared ground truth, used only for bookkeeping and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    Null,
    Alternative,
}

/// One entry of a scenario's `sources` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub model: SourceModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_map: Option<FeatureMapSpec>,
}

impl From<SourceModel> for SourceSpec {
    fn from(model: SourceModel) -> Self {
        SourceSpec {
            model,
            feature_map: None,
        }
    }
}

/// K paired sources plus the declared truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub truth_label: TruthLabel,
    pub sources: Vec<SourceSpec>,
}

impl Scenario {
    /// Builds and validates a scenario from models with default feature maps.
    pub fn new(truth_label: TruthLabel, models: Vec<SourceModel>) -> Result<Self> {
        let scenario = Scenario {
            truth_label,
            sources: models.into_iter().map(SourceSpec::from).collect(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source(&self, k: usize) -> &SourceModel {
        &self.sources[k].model
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::parse("sources", "at least one source is required (K = 0)"));
        }
        for (i, spec) in self.sources.iter().enumerate() {
            let path = format!("sources[{i}]");
            spec.model.validate(&path)?;
            if let Some(fm) = &spec.feature_map {
                fm.check_admissible(&spec.model)
                    .map_err(|e| Error::parse(format!("{path}.feature_map"), e.to_string()))?;
            }
        }
        let nulls = self.sources.iter().filter(|s| s.model.is_null()).count();
        match self.truth_label {
            TruthLabel::Null if nulls != self.sources.len() => {
                let k = self.sources.iter().position(|s| !s.model.is_null()).unwrap_or(0);
                Err(Error::parse(
                    "truth_label",
                    format!("truth_label inconsistent: declared null but sources[{k}] has params_1 != params_2"),
                ))
            }
            TruthLabel::Alternative if nulls == self.sources.len() => Err(Error::parse(
                "truth_label",
                "truth_label inconsistent: declared alternative but every source has params_1 == params_2",
            )),
            _ => Ok(()),
        }
    }

    /// Feature-map specification per source: `override_spec` if given,
    /// else the source's own entry, else the per-kind default.
    pub fn feature_map_specs(&self, override_spec: Option<&FeatureMapSpec>) -> Vec<FeatureMapSpec> {
        self.sources
            .iter()
            .map(|s| {
                override_spec
                    .or(s.feature_map.as_ref())
                    .cloned()
                    .unwrap_or_else(|| default_feature_map(&s.model))
            })
            .collect()
    }

    /// Builds one feature map per source, checking admissibility.
    pub fn feature_maps(&self, override_spec: Option<&FeatureMapSpec>) -> Result<Vec<FeatureMap>> {
        self.feature_map_specs(override_spec)
            .into_iter()
            .zip(&self.sources)
            .enumerate()
            .map(|(i, (spec, src))| {
                spec.check_admissible(&src.model).map_err(|e| {
                    Error::config(format!("feature map for sources[{i}]: {e}"))
                })?;
                FeatureMap::new(spec)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses and validates a JSON scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<document>".to_string() } else { path };
        Error::parse(field, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Reads and parses a scenario file. An unreadable file is a configuration error.
pub fn load_scenario(path: impl AsRef<std::path::Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// First moment and raw second-moment matrix of `φ(X)` under one marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMoments {
    pub mean: Vec<f64>,
    pub second: Vec<Vec<f64>>,
}

pub fn feature_moments(marginal: Marginal<'_>, fmap: &FeatureMap) -> Result<FeatureMoments> {
    let d = fmap.dim();
    let mut mean = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    let mut phi = vec![0.0; d];
    for (w, x) in marginal.quadrature() {
        if w == 0.0 {
            continue;
        }
        fmap.features_into(&x, &mut phi)?;
        for i in 0..d {
            mean[i] += w * phi[i];
            for j in 0..d {
                second[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    Ok(FeatureMoments { mean, second })
}

/// How a mean embedding was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMethod {
    Enumeration,
    GaussHermite,
    MonteCarlo,
}

/// `Δμ = E[φ(X_k1)] − E[φ(X_k2)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEmbedding {
    pub delta: Vec<f64>,
    pub method: EmbeddingMethod,
    /// Largest per-coordinate standard error (Monte Carlo only).
    pub standard_error: Option<f64>,
}

pub fn true_mean_embedding(source: &SourceModel, fmap: &FeatureMap) -> Result<MeanEmbedding> {
    fmap.spec().check_admissible(source)?;
    let method = match source {
        SourceModel::GaussianPair { .. } => EmbeddingMethod::GaussHermite,
        _ => EmbeddingMethod::Enumeration,
    };
    if source.is_null() {
        return Ok(MeanEmbedding {
            delta: vec![0.0; fmap.dim()],
            method,
            standard_error: None,
        });
    }
    let m1 = feature_moments(source.marginal(Side::First), fmap)?;
    let m2 = feature_moments(source.marginal(Side::Second), fmap)?;
    Ok(MeanEmbedding {
        delta: m1.mean.iter().zip(&m2.mean).map(|(a, b)| a - b).collect(),
        method,
        standard_error: None,
    })
}

/// Monte Carlo estimate of `Δμ` from `n` paired draws, with standard error.
pub fn monte_carlo_mean_embedding<R: Rng + ?Sized>(
    source: &SourceModel,
    fmap: &FeatureMap,
    n: usize,
    rng: &mut R,
) -> Result<MeanEmbedding> {
    if n < 2 {
        return Err(Error::config("Monte Carlo embedding needs at least 2 draws"));
    }
    fmap.spec().check_admissible(source)?;
    let d = fmap.dim();
    let (mut sum, mut sumsq) = (vec![0.0; d], vec![0.0; d]);
    let (mut p1, mut p2) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        let (x1, x2) = sample_pair(source, rng);
        fmap.features_into(&x1, &mut p1)?;
        fmap.features_into(&x2, &mut p2)?;
        for j in 0..d {
            let diff = p1[j] - p2[j];
            sum[j] += diff;
            sumsq[j] += diff * diff;
        }
    }
    let nf = n as f64;
    let delta: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se = (0..d)
        .map(|j| {
            let var = (sumsq[j] - nf * delta[j] * delta[j]) / (nf - 1.0);
            (var.max(0.0) / nf).sqrt()
        })
        .fold(0.0, f64::max);
    Ok(MeanEmbedding {
        delta,
        method: EmbeddingMethod::MonteCarlo,
        standard_error: Some(se),
    })
}

/// Nodes and weights for `∫ f(x) e^{-x²} dx`.
#[derive(Debug)]
pub struct GaussHermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// The 64-node rule, computed once by Newton iteration on the
/// orthonormal Hermite recurrence.
pub fn gauss_hermite() -> &'static GaussHermiteRule {
    static RULE: OnceLock<GaussHermiteRule> = OnceLock::new();
    RULE.get_or_init(|| compute_gauss_hermite(GAUSS_HERMITE_NODES))
}

fn compute_gauss_hermite(n: usize) -> GaussHermiteRule {
    // π^{-1/4}
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    GaussHermiteRule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bern(p1: f64, p2: f64) -> SourceModel {
        SourceModel::BernoulliPair {
            params_1: BernoulliParams { p: p1 },
            params_2: BernoulliParams { p: p2 },
        }
    }

    fn gauss(m1: f64, s1: f64, m2: f64, s2: f64) -> SourceModel {
        SourceModel::GaussianPair {
            params_1: GaussianParams { mean: m1, std: s1 },
            params_2: GaussianParams { mean: m2, std: s2 },
        }
    }

    #[test]
    fn degenerate_bernoulli_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = bern(1.0, 0.0);
        for _ in 0..1000 {
            assert_eq!(sample_pair(&src, &mut rng), (Point::Real(1.0), Point::Real(0.0)));
        }
    }

    #[test]
    fn fair_bernoulli_first_coordinate_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = bern(0.5, 0.5);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_pair(&src, &mut rng).0 == Point::Real(1.0))
            .count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.5).abs() <= 0.005, "mean {mean}");
    }

    #[test]
    fn gaussian_null_mean_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = gauss(0.0, 1.0, 0.0, 1.0);
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| {
                let (a, b) = sample_pair(&src, &mut rng);
                a.as_real() - b.as_real()
            })
            .sum();
        assert!((sum / n as f64).abs() <= 0.01);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = SourceModel::CategoricalPair {
            params_1: CategoricalParams { probs: vec![0.2, 0.0, 0.8] },
            params_2: CategoricalParams { probs: vec![1.0, 0.0, 0.0] },
        };
        let n = 50_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let (a, b) = sample_pair(&src, &mut rng);
            assert_eq!(b, Point::Category(0));
            if let Point::Category(i) = a {
                counts[i] += 1;
            }
        }
        assert_eq!(counts[1], 0);
        assert!((counts[2] as f64 / n as f64 - 0.8).abs() < 0.01);
    }

    #[test]
    fn sampler_is_reproducible() {
        let src = gauss(0.3, 2.0, -1.0, 0.5);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample_pair(&src, &mut rng)).collect::<Vec<_>>()
        };
        let (a, b) = (draw(9), draw(9));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0.as_real().to_bits(), y.0.as_real().to_bits());
            assert_eq!(x.1.as_real().to_bits(), y.1.as_real().to_bits());
        }
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn parse_three_identical_null_sources() {
        let doc = r#"{"truth_label":"null","sources":[
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}},
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}},
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}}]}"#;
        let s = parse_scenario(doc).unwrap();
        assert_eq!(s.num_sources(), 3);
        assert_eq!(s.truth_label, TruthLabel::Null);
    }

    #[test]
    fn parse_rejects_inconsistent_null_label() {
        let doc = r#"{"truth_label":"null","sources":[
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}},
            {"kind":"bernoulli-pair","params_1":{"p":0.6},"params_2":{"p":0.5}}]}"#;
        let err = parse_scenario(doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("truth_label inconsistent"), "{msg}");
        assert!(msg.contains("sources[1]"), "{msg}");
    }

    #[test]
    fn parse_rejects_all_null_alternative() {
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}}]}"#;
        assert!(parse_scenario(doc).unwrap_err().to_string().contains("truth_label inconsistent"));
    }

    #[test]
    fn parse_rejects_empty_sources() {
        let err = parse_scenario(r#"{"truth_label":"null","sources":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "sources"));
    }

    #[test]
    fn parse_names_offending_field() {
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}},
            {"kind":"gaussian-pair","params_1":{"mean":0.0,"std":-1.0},"params_2":{"mean":0.0,"std":1.0}}]}"#;
        match parse_scenario(doc).unwrap_err() {
            Error::Parse { field, .. } => assert_eq!(field, "sources[1].params_1.std"),
            e => panic!("unexpected {e}"),
        }
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"bernoulli-pair","params_1":{"p":"high"},"params_2":{"p":0.5}}]}"#;
        match parse_scenario(doc).unwrap_err() {
            Error::Parse { field, .. } => assert!(field.starts_with("sources[0]"), "{field}"),
            e => panic!("unexpected {e}"),
        }
        match parse_scenario("{not json").unwrap_err() {
            Error::Parse { .. } => {}
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn parse_rejects_mismatched_alphabets() {
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"categorical-pair","params_1":{"probs":[0.5,0.5]},"params_2":{"probs":[0.2,0.3,0.5]}}]}"#;
        assert!(parse_scenario(doc).unwrap_err().to_string().contains("alphabet size"));
    }

    #[test]
    fn heterogeneous_scenario_round_trips() {
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"gaussian-pair","params_1":{"mean":0.5,"std":1.0},"params_2":{"mean":0.0,"std":1.0},
             "feature_map":{"kind":"random-fourier","dim":4,"bandwidth":1.0,"seed":7}},
            {"kind":"bernoulli-pair","params_1":{"p":0.5},"params_2":{"p":0.5}}]}"#;
        let s = parse_scenario(doc).unwrap();
        assert_eq!(s.num_sources(), 2);
        let again = parse_scenario(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn inadmissible_feature_map_is_rejected() {
        let doc = r#"{"truth_label":"alternative","sources":[
            {"kind":"gaussian-pair","params_1":{"mean":0.5,"std":1.0},"params_2":{"mean":0.0,"std":1.0},
             "feature_map":{"kind":"centered-binary"}}]}"#;
        match parse_scenario(doc).unwrap_err() {
            Error::Parse { field, .. } => assert_eq!(field, "sources[0].feature_map"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn embedding_of_bernoulli_pair() {
        let fmap = FeatureMap::new(FeatureMapSpec::CenteredBinary).unwrap();
        let e = true_mean_embedding(&bern(0.9, 0.1), &fmap).unwrap();
        // (0.9 - 0.5) - (0.1 - 0.5)
        assert!((e.delta[0] - 0.8).abs() < 1e-12);
        assert_eq!(e.method, EmbeddingMethod::Enumeration);
    }

    #[test]
    fn embedding_of_null_sources_is_exactly_zero() {
        let fmap = FeatureMap::new(FeatureMapSpec::CenteredBinary).unwrap();
        assert_eq!(true_mean_embedding(&bern(0.5, 0.5), &fmap).unwrap().delta, vec![0.0]);
        let rff = FeatureMap::new(FeatureMapSpec::RandomFourier { dim: 3, bandwidth: 1.0, seed: 1 }).unwrap();
        assert_eq!(true_mean_embedding(&bern(0.3, 0.3), &rff).unwrap().delta, vec![0.0; 3]);
        let cat = SourceModel::CategoricalPair {
            params_1: CategoricalParams { probs: vec![0.1, 0.2, 0.7] },
            params_2: CategoricalParams { probs: vec![0.1, 0.2, 0.7] },
        };
        let oh = FeatureMap::new(FeatureMapSpec::OneHot { dim: 3 }).unwrap();
        assert_eq!(true_mean_embedding(&cat, &oh).unwrap().delta, vec![0.0; 3]);
    }

    #[test]
    fn unsupported_combination_is_a_capability_error() {
        let fmap = FeatureMap::new(FeatureMapSpec::CenteredBinary).unwrap();
        let err = true_mean_embedding(&gauss(0.0, 1.0, 1.0, 1.0), &fmap).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let rule = gauss_hermite();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let total: f64 = rule.weights.iter().sum();
        assert!((total - sqrt_pi).abs() < 1e-12);
        // ∫ x² e^{-x²} = √π / 2, ∫ x⁴ e^{-x²} = 3√π / 4
        let m2: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x * x).sum();
        let m4: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - sqrt_pi / 2.0).abs() < 1e-12);
        assert!((m4 - 3.0 * sqrt_pi / 4.0).abs() < 1e-11);
    }

    #[test]
    fn gaussian_embedding_matches_monte_carlo() {
        let src = gauss(0.5, 1.0, -0.2, 0.7);
        let fmap = FeatureMap::new(FeatureMapSpec::TanhScalar { scale: 1.0 }).unwrap();
        let quad = true_mean_embedding(&src, &fmap).unwrap();
        assert_eq!(quad.method, EmbeddingMethod::GaussHermite);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mc = monte_carlo_mean_embedding(&src, &fmap, 1_000_000, &mut rng).unwrap();
        let se = mc.standard_error.unwrap();
        assert!((quad.delta[0] - mc.delta[0]).abs() < 4.0 * se, "{quad:?} vs {mc:?}");
    }
}
