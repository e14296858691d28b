//! Active sequential two-sample testing by betting.
//!
//! Several sources each emit paired samples `(X1, X2)`. A bettor selects a
//! source every slot, predicts a witness function in a bounded linear class
//! and stakes its wealth on the witness gap. The null `P1 = P2` for every
//! source is rejected once wealth reaches `1/α`; Ville's inequality keeps the
//! type-I error below `α` at any stopping time.

pub mod analysis;
pub mod betting;
pub mod engine;
pub mod error;
pub mod function_class;
pub mod harness;
pub mod selection;
pub mod source_models;

pub use engine::{run_active, run_oracle, run_passive, RunConfig, Runner, TraceLevel, TrialResult, TrialRng};
pub use error::{Error, Result};
pub use source_models::{load_scenario, parse_scenario, Scenario};
