//! One sequential test run: the slot loop for the active test, the pinned
//! single-source baseline and the oracle test.
//!
//! Within a slot the order is fixed: select a source, sample a pair, pay off
//! with the pre-update witness, apply the pre-update bet to the wealth, then
//! update the bettor, the witness predictor and the selector. Both the bet and
//! the witness used at slot `t` therefore depend only on slots `< t`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{population, PopulationSummary};
use crate::betting::{BettorState, OnsSign, WealthState};
use crate::error::{Error, Result};
use crate::function_class::{ball_supremum, FeatureMap, FeatureMapSpec, PredictorState, Witness, DEFAULT_STEP_SCALE};
use crate::selection::{compute_c, SelectorState};
use crate::source_models::{sample_pair, Point, Scenario};

/// Number of time buckets used for selection-frequency summaries.
pub const SELECTION_BUCKETS: u64 = 10;

/// How much per-slot detail a trial keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceLevel {
    #[default]
    Off,
    /// Source, pair, increment, bet, ε and log-wealth per slot.
    Slots,
    /// As `Slots`, plus the pre-update witness weights.
    Full,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_horizon() -> u64 {
    10_000
}
fn default_gap_bound() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}
fn default_step_scale() -> f64 {
    DEFAULT_STEP_SCALE
}

/// Parameters of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Censoring bound `T_max`.
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    /// Replaces every source's feature map when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_map: Option<FeatureMapSpec>,
    /// Known lower bound `L` on the sub-optimality gap.
    #[serde(rename = "L", default = "default_gap_bound")]
    pub gap_lower_bound: f64,
    /// Replaces the exploration constant derived from `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_override: Option<f64>,
    #[serde(default)]
    pub ons_sign: OnsSign,
    #[serde(default)]
    pub trace: TraceLevel,
    /// When false the run continues to the horizon after the first crossing;
    /// `tau` still records the crossing.
    #[serde(default = "default_true")]
    pub stop_on_reject: bool,
    /// OGA step size is `oga_step_scale / √n`.
    #[serde(default = "default_step_scale")]
    pub oga_step_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: default_alpha(),
            horizon: default_horizon(),
            seed: 0,
            feature_map: None,
            gap_lower_bound: default_gap_bound(),
            c_override: None,
            ons_sign: OnsSign::Ascent,
            trace: TraceLevel::Off,
            stop_on_reject: true,
            oga_step_scale: DEFAULT_STEP_SCALE,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if let Some(c) = self.c_override {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::config(format!("C override must be finite and ≥ 0, got {c}")));
            }
        }
        if !(self.oga_step_scale > 0.0 && self.oga_step_scale.is_finite()) {
            return Err(Error::config("OGA step scale must be positive"));
        }
        Ok(())
    }

    /// `ln(1/α)`.
    pub fn log_threshold(&self) -> f64 {
        -self.alpha.ln()
    }

    /// `C_override` if given, else the constant derived from `K` and `L`.
    pub fn exploration_constant(&self, num_sources: usize) -> Result<f64> {
        match self.c_override {
            Some(c) => Ok(c),
            None => Ok(compute_c(num_sources, self.gap_lower_bound)?.c),
        }
    }
}

/// Independent random streams for one trial: data draws and source selection.
///
/// Keeping selection on its own stream means a run whose selector always
/// returns the same source consumes the data stream exactly like the pinned
/// baseline on that source.
#[derive(Debug, Clone)]
pub struct TrialRng {
    pub data: ChaCha8Rng,
    pub selection: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(seed: u64) -> Self {
        let mut data = ChaCha8Rng::seed_from_u64(seed);
        data.set_stream(0);
        let mut selection = ChaCha8Rng::seed_from_u64(seed);
        selection.set_stream(1);
        TrialRng { data, selection }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: u64,
    pub source: usize,
    pub x1: Point,
    pub x2: Point,
    pub v: f64,
    pub lambda: f64,
    /// `ε(t)`; only the active test has one.
    pub epsilon: Option<f64>,
    pub log_wealth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub stopped: bool,
    /// First slot with `ℓ ≥ ln(1/α)`; `None` means censored at the horizon.
    pub tau: Option<u64>,
    /// Slots actually executed.
    pub slots: u64,
    pub final_log_wealth: f64,
    pub counts: Vec<u64>,
    pub running_means: Vec<Option<f64>>,
    pub regrets: Vec<f64>,
    pub bucket_width: u64,
    /// `selection_buckets[b][k]`: selections of source `k` in bucket `b`.
    pub selection_buckets: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<SlotRecord>>,
}

impl TrialResult {
    /// `min(τ, T_max)`.
    pub fn restricted_tau(&self, horizon: u64) -> u64 {
        self.tau.unwrap_or(horizon)
    }
}

/// Bookkeeping shared by every loop variant.
struct Recorder {
    threshold: f64,
    stop_on_reject: bool,
    trace_level: TraceLevel,
    counts: Vec<u64>,
    sums: Vec<f64>,
    bucket_width: u64,
    buckets: Vec<Vec<u64>>,
    tau: Option<u64>,
    trace: Option<Vec<SlotRecord>>,
    slots: u64,
}

impl Recorder {
    fn new(cfg: &RunConfig, k: usize) -> Self {
        let bucket_width = cfg.horizon.div_ceil(SELECTION_BUCKETS).max(1);
        let nbuckets = cfg.horizon.div_ceil(bucket_width) as usize;
        Recorder {
            threshold: cfg.log_threshold(),
            stop_on_reject: cfg.stop_on_reject,
            trace_level: cfg.trace,
            counts: vec![0; k],
            sums: vec![0.0; k],
            bucket_width,
            buckets: vec![vec![0; k]; nbuckets],
            tau: None,
            trace: (cfg.trace != TraceLevel::Off).then(Vec::new),
            slots: 0,
        }
    }

    /// Returns true when the loop should stop.
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        t: u64,
        source: usize,
        pair: (Point, Point),
        v: f64,
        lambda: f64,
        epsilon: Option<f64>,
        log_wealth: f64,
        witness: &Witness,
    ) -> bool {
        self.slots = t;
        self.counts[source] += 1;
        self.sums[source] += v;
        self.buckets[((t - 1) / self.bucket_width) as usize][source] += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(SlotRecord {
                t,
                source,
                x1: pair.0,
                x2: pair.1,
                v,
                lambda,
                epsilon,
                log_wealth,
                witness: (self.trace_level == TraceLevel::Full).then(|| witness.weights.clone()),
            });
        }
        if self.tau.is_none() && log_wealth >= self.threshold {
            self.tau = Some(t);
        }
        self.tau.is_some() && self.stop_on_reject
    }

    fn finish(self, final_log_wealth: f64, regrets: Vec<f64>) -> TrialResult {
        let running_means = self
            .counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
            .collect();
        TrialResult {
            stopped: self.tau.is_some(),
            tau: self.tau,
            slots: self.slots,
            final_log_wealth,
            counts: self.counts,
            running_means,
            regrets,
            bucket_width: self.bucket_width,
            selection_buckets: self.buckets,
            trace: self.trace,
        }
    }
}

/// Source choice for the betting loop.
enum Policy {
    Active(SelectorState),
    Fixed(usize),
}

/// The constant-witness, constant-bet test on the best source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub source: usize,
    pub witness: Witness,
    /// `λ*` in `[-1, 1]`.
    pub bet: f64,
    pub population: PopulationSummary,
}

/// A scenario and run configuration with feature maps built once.
#[derive(Debug, Clone)]
pub struct Runner<'a> {
    scenario: &'a Scenario,
    cfg: &'a RunConfig,
    fmaps: Vec<FeatureMap>,
}

impl<'a> Runner<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &'a RunConfig) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        let fmaps = scenario.feature_maps(cfg.feature_map.as_ref())?;
        Ok(Runner { scenario, cfg, fmaps })
    }

    pub fn feature_maps(&self) -> &[FeatureMap] {
        &self.fmaps
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn config(&self) -> &RunConfig {
        self.cfg
    }

    pub fn population(&self) -> Result<PopulationSummary> {
        population(self.scenario, &self.fmaps, self.cfg.alpha)
    }

    pub fn run_active(&self, rng: &mut TrialRng) -> Result<TrialResult> {
        let k = self.scenario.num_sources();
        let c = self.cfg.exploration_constant(k)?;
        self.betting_loop(Policy::Active(SelectorState::new(k, c)?), rng)
    }

    pub fn run_passive(&self, source: usize, rng: &mut TrialRng) -> Result<TrialResult> {
        let k = self.scenario.num_sources();
        if source >= k {
            return Err(Error::config(format!("passive source {source} out of range for K = {k}")));
        }
        self.betting_loop(Policy::Fixed(source), rng)
    }

    pub fn oracle_plan(&self) -> Result<OraclePlan> {
        let population = self.population()?;
        let source = population.best;
        Ok(OraclePlan {
            source,
            witness: population.sources[source].witness.clone(),
            bet: population.kelly_bet.clamp(-1.0, 1.0),
            population,
        })
    }

    pub fn run_oracle(&self, plan: &OraclePlan, rng: &mut TrialRng) -> Result<TrialResult> {
        let k = self.scenario.num_sources();
        let a = plan.source;
        let fmap = &self.fmaps[a];
        let source = self.scenario.source(a);
        let mut rec = Recorder::new(self.cfg, k);
        let mut wealth = WealthState::new(false);
        let mut displacement = vec![0.0; fmap.dim()];
        let (mut p1, mut p2) = (vec![0.0; fmap.dim()], vec![0.0; fmap.dim()]);
        let mut earned = 0.0;
        for t in 1..=self.cfg.horizon {
            let pair = sample_pair(source, &mut rng.data);
            let v = plan.witness.increment(fmap, &pair.0, &pair.1)?;
            wealth.update(plan.bet, v)?;
            fmap.features_into(&pair.0, &mut p1)?;
            fmap.features_into(&pair.1, &mut p2)?;
            for j in 0..displacement.len() {
                displacement[j] += p1[j] - p2[j];
            }
            earned += v;
            if rec.record(t, a, pair, v, plan.bet, None, wealth.log_wealth(), &plan.witness) {
                break;
            }
        }
        let mut regrets = vec![0.0; k];
        regrets[a] = ball_supremum(&displacement).0 - earned;
        Ok(rec.finish(wealth.log_wealth(), regrets))
    }

    fn betting_loop(&self, mut policy: Policy, rng: &mut TrialRng) -> Result<TrialResult> {
        let k = self.scenario.num_sources();
        let mut rec = Recorder::new(self.cfg, k);
        let mut predictors: Vec<PredictorState> = self
            .fmaps
            .iter()
            .map(|f| PredictorState::with_step_scale(f.dim(), self.cfg.oga_step_scale))
            .collect();
        let mut bettor = BettorState::new(self.cfg.ons_sign);
        let mut wealth = WealthState::new(false);

        for t in 1..=self.cfg.horizon {
            let (src, epsilon) = match &policy {
                Policy::Active(sel) => {
                    let s = sel.select_source(&mut rng.selection);
                    (s.source, Some(s.epsilon))
                }
                Policy::Fixed(k) => (*k, None),
            };
            let fmap = &self.fmaps[src];
            let pair = sample_pair(self.scenario.source(src), &mut rng.data);
            let predictor = &mut predictors[src];
            let v = predictor.witness().increment(fmap, &pair.0, &pair.1)?;
            let lambda = bettor.lambda();
            wealth.update(lambda, v)?;
            bettor.ons_step(v)?;
            let stop = rec.record(t, src, pair, v, lambda, epsilon, wealth.log_wealth(), predictor.witness());
            predictor.oga_update(fmap, &pair.0, &pair.1, v)?;
            if let Policy::Active(sel) = &mut policy {
                sel.record_outcome(src, v)?;
            }
            if stop {
                break;
            }
        }
        let regrets = predictors.iter().map(PredictorState::regret).collect();
        Ok(rec.finish(wealth.log_wealth(), regrets))
    }
}

/// One run of the active test.
pub fn run_active(scenario: &Scenario, cfg: &RunConfig, rng: &mut TrialRng) -> Result<TrialResult> {
    Runner::new(scenario, cfg)?.run_active(rng)
}

/// The same loop pinned to `source`.
pub fn run_passive(scenario: &Scenario, source: usize, cfg: &RunConfig, rng: &mut TrialRng) -> Result<TrialResult> {
    Runner::new(scenario, cfg)?.run_passive(source, rng)
}

/// The oracle test: best source, its witness and its Kelly bet, all fixed.
pub fn run_oracle(scenario: &Scenario, cfg: &RunConfig, rng: &mut TrialRng) -> Result<TrialResult> {
    let runner = Runner::new(scenario, cfg)?;
    let plan = runner.oracle_plan()?;
    runner.run_oracle(&plan, rng)
}
