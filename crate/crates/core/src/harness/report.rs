//! Report files: one JSON document plus plot-ready CSV tables.
//!
//! `report.json` carries `schema_version`, the full experiment echo and
//! whichever of `population`, `metrics`, `diagnostics`, `comparison` and
//! `trial` the command produced; absent sections are omitted, never empty.
//! `trials.csv` has one row per trial: `index, seed, stopped, tau,
//! final_log_wealth, n_0 … n_{K-1}`, with `tau` blank when censored.
//! `alpha_scaling.csv` has `alpha, log_inv_alpha, mean_tau, se, censoring_rate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::compare::ComparisonReport;
use super::diagnostics::LemmaChecks;
use super::metrics::MetricsSummary;
use super::{ExperimentSpec, TrialRecord};
use crate::analysis::PopulationSummary;
use crate::engine::TrialResult;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const ALPHA_SCALING_FILE: &str = "alpha_scaling.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Both,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "both" => Ok(Format::Both),
            other => Err(Error::config(format!("unknown format `{other}` (expected json | csv | both)"))),
        }
    }
}

impl Format {
    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; omitted for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub command: String,
    pub experiment: ExperimentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<LemmaChecks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialResult>,
}

impl Report {
    pub fn new(command: impl Into<String>, experiment: ExperimentSpec) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            generated_at: None,
            command: command.into(),
            experiment,
            population: None,
            metrics: None,
            diagnostics: None,
            comparison: None,
            trial: None,
        }
    }

    /// Stamps the current time.
    pub fn stamped(mut self) -> Self {
        self.generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes the per-trial table.
pub fn write_trials_csv<W: std::io::Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = records.first().map_or(0, |r| r.result.counts.len());
    let mut header: Vec<String> = ["index", "seed", "stopped", "tau", "final_log_wealth"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|j| format!("n_{j}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            r.seed.to_string(),
            r.result.stopped.to_string(),
            r.result.tau.map(|t| t.to_string()).unwrap_or_default(),
            r.result.final_log_wealth.to_string(),
        ];
        row.extend(r.result.counts.iter().map(|n| n.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_alpha_scaling_csv<W: std::io::Write>(out: W, report: &ComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "log_inv_alpha", "mean_tau", "se", "censoring_rate"])?;
    for row in &report.alpha_scaling {
        w.write_record([
            row.alpha.to_string(),
            row.log_inv_alpha.to_string(),
            row.mean_tau.value.to_string(),
            row.mean_tau.standard_error.to_string(),
            row.censoring_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the requested files into `dir` (created if missing) and returns
/// their paths.
pub fn emit_report(report: &Report, records: Option<&[TrialRecord]>, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format.json() {
        let path = dir.join(REPORT_FILE);
        fs::write(&path, report.to_json()?)?;
        written.push(path);
    }
    if format.csv() {
        if let Some(records) = records {
            let path = dir.join(TRIALS_FILE);
            write_trials_csv(fs::File::create(&path)?, records)?;
            written.push(path);
        }
        if let Some(cmp) = &report.comparison {
            let path = dir.join(ALPHA_SCALING_FILE);
            write_alpha_scaling_csv(fs::File::create(&path)?, cmp)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RunConfig;
    use crate::harness::metrics::{BucketFrequency, Estimate, Quantile};
    use crate::harness::{monte_carlo, Mode};
    use crate::source_models::{BernoulliParams, Scenario, SourceModel, TruthLabel};
    use proptest::prelude::*;

    fn scenario() -> Scenario {
        Scenario::new(
            TruthLabel::Alternative,
            vec![SourceModel::BernoulliPair {
                params_1: BernoulliParams { p: 0.8 },
                params_2: BernoulliParams { p: 0.3 },
            }],
        )
        .unwrap()
    }

    fn spec(trials: u64) -> ExperimentSpec {
        let cfg = RunConfig {
            horizon: 500,
            c_override: Some(20.0),
            seed: 3,
            ..RunConfig::default()
        };
        ExperimentSpec::new(scenario(), cfg, trials, Mode::Active)
    }

    #[test]
    fn empty_sections_are_omitted() {
        let r = Report::new("mc", spec(1));
        let json = r.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["diagnostics", "metrics", "comparison", "population", "generated_at", "trial"] {
            assert!(value.get(key).is_none(), "{key} present");
        }
        assert!(json.contains("\"schema_version\": 1"));
        assert_eq!(Report::from_json(&json).unwrap(), r);
    }

    #[test]
    fn files_and_row_counts() {
        let dir = tempfile::tempdir().unwrap();
        let out = monte_carlo(&spec(25)).unwrap();
        let mut r = Report::new("mc", spec(25));
        r.metrics = Some(out.summary.clone());
        let files = emit_report(&r, Some(&out.records), dir.path(), Format::Both).unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(dir.path().join(TRIALS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 26);
        assert!(text.starts_with("index,seed,stopped,tau,final_log_wealth,n_0\n"));
        let back = Report::from_json(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn output_is_byte_identical_without_timestamp() {
        let render = || {
            let out = monte_carlo(&spec(20)).unwrap();
            let mut r = Report::new("mc", spec(20));
            r.metrics = Some(out.summary);
            r.to_json().unwrap()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn unknown_format() {
        assert!("xml".parse::<Format>().is_err());
        assert_eq!("both".parse::<Format>().unwrap(), Format::Both);
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1e6f64..1e6
    }

    fn estimate() -> impl Strategy<Value = Estimate> {
        (finite(), 0.0f64..10.0, prop::option::of((finite(), finite()))).prop_map(|(value, standard_error, ci95)| Estimate {
            value,
            standard_error,
            ci95,
        })
    }

    prop_compose! {
        fn summary()(
            trials in 1u64..10_000,
            horizon in 1u64..1_000_000,
            stop_fraction in estimate(),
            censoring_rate in 0.0f64..=1.0,
            mean_tau_stopped in prop::option::of(estimate()),
            restricted_mean_tau in estimate(),
            qs in prop::collection::vec((0.0f64..=1.0, finite()), 0..5),
            mean_final_log_wealth in estimate(),
            buckets in prop::collection::vec((0u64..100, prop::collection::vec(0.0f64..=1.0, 1..4)), 0..10),
        ) -> MetricsSummary {
            MetricsSummary {
                trials,
                horizon,
                stop_fraction,
                censoring_rate,
                mean_tau_stopped,
                restricted_mean_tau,
                tau_quantiles: qs.into_iter().map(|(level, value)| Quantile { level, value }).collect(),
                mean_final_log_wealth,
                selection_frequencies: buckets
                    .into_iter()
                    .enumerate()
                    .map(|(b, (selections, frequencies))| BucketFrequency {
                        start: b as u64 * 10 + 1,
                        end: b as u64 * 10 + 10,
                        selections,
                        frequencies,
                    })
                    .collect(),
                population: None,
            }
        }
    }

    proptest! {
        #[test]
        fn summaries_round_trip(s in summary()) {
            let mut r = Report::new("mc", spec(1));
            r.metrics = Some(s);
            let back = Report::from_json(&r.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
