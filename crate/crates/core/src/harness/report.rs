use super::suites;
use crate::distill::PipelineConfig;
use crate::entropy::{de_real, ser_real, Bracket};
use crate::error::{Error, Result};
use crate::fsauth::SessionConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Entropy,
    HashAudit,
    Distill,
    Fsauth,
    Bounds,
    Lemmas,
    Composition,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Entropy, Suite::HashAudit, Suite::Distill, Suite::Fsauth, Suite::Bounds, Suite::Lemmas, Suite::Composition];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Entropy => "entropy",
            Suite::HashAudit => "hash-audit",
            Suite::Distill => "distill",
            Suite::Fsauth => "fsauth",
            Suite::Bounds => "bounds",
            Suite::Lemmas => "lemmas",
            Suite::Composition => "composition",
        }
    }
}

fn default_trials() -> u64 {
    100_000
}

fn default_fuzz() -> u64 {
    10_000
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo trials per sampled record.
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Random instances per fuzzed lemma.
    #[serde(default = "default_fuzz")]
    pub fuzz: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Extra pipeline run for the distill suite.
    #[serde(default)]
    pub distill: Option<PipelineConfig>,
    /// Extra session batch for the fsauth suite.
    #[serde(default)]
    pub fsauth: Option<SessionConfig>,
    /// Adds the broken composition fixture as an ordinary claim.
    #[serde(default)]
    pub plant_broken: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suites: Vec::new(),
            seed: 0,
            trials: default_trials(),
            fuzz: default_fuzz(),
            tolerance: default_tolerance(),
            distill: None,
            fsauth: None,
            plant_broken: false,
        }
    }
}

impl ExperimentConfig {
    pub fn all(seed: u64) -> Self {
        Self { suites: Suite::ALL.to_vec(), seed, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!("tolerance {} must be finite and non-negative", self.tolerance)));
        }
        if self.trials == 0 || self.fuzz == 0 {
            return Err(Error::Config("trials and fuzz must be at least 1".into()));
        }
        if let Some(p) = &self.distill {
            p.build().map_err(|e| Error::Config(format!("distill: {e}")))?;
        }
        if let Some(s) = &self.fsauth {
            s.params().map_err(|e| Error::Config(format!("fsauth: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    Exhaustive,
    MonteCarlo { trials: u64, width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(#[serde(serialize_with = "ser_real", deserialize_with = "de_real")] f64),
    Bracket(Bracket),
}

impl Value {
    pub fn lo(&self) -> f64 {
        match self {
            Value::Real(v) => *v,
            Value::Bracket(b) => b.lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match self {
            Value::Real(v) => *v,
            Value::Bracket(b) => b.hi,
        }
    }
}

/// How `value` relates to `bound` for the record to pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub suite: Suite,
    pub metric: String,
    pub value: Value,
    pub comparison: Comparison,
    pub bound: f64,
    pub pass: bool,
    pub provenance: Provenance,
    pub seed: u64,
}

impl ReportRecord {
    /// Judged with the conservative side of the value: hi against upper
    /// bounds, lo against lower bounds.
    pub fn judged(
        id: impl Into<String>,
        suite: Suite,
        metric: impl Into<String>,
        value: Value,
        comparison: Comparison,
        bound: f64,
        tolerance: f64,
        provenance: Provenance,
        seed: u64,
    ) -> Self {
        let pass = match comparison {
            Comparison::AtMost => value.hi() <= bound + tolerance,
            Comparison::AtLeast => value.lo() >= bound - tolerance,
            Comparison::Equal => (value.lo() - bound).abs() <= tolerance && (value.hi() - bound).abs() <= tolerance,
        };
        Self { id: id.into(), suite, metric: metric.into(), value, comparison, bound, pass, provenance, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub records: Vec<ReportRecord>,
    pub determinism_hash: String,
    /// Wall-clock milliseconds per job; not covered by the hash.
    pub runtime_ms: BTreeMap<String, f64>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    /// 0 when every record passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn record(&self, id: &str) -> Option<&ReportRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// SHA-256 of the canonical JSON of (config, records).
pub fn determinism_hash(config: &ExperimentConfig, records: &[ReportRecord]) -> Result<String> {
    let bytes = serde_json::to_vec(&(config, records))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let mut suites_run = config.suites.clone();
    suites_run.sort();
    suites_run.dedup();
    let jobs: Vec<suites::Job> = suites_run.iter().flat_map(|&s| suites::jobs(s, config)).collect();
    let done: Vec<(String, Vec<ReportRecord>, f64)> = jobs
        .into_par_iter()
        .map(|job| {
            let t0 = Instant::now();
            let records = (job.run)(config)?;
            Ok((job.id, records, t0.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut runtime_ms = BTreeMap::new();
    for (id, recs, ms) in done {
        records.extend(recs);
        runtime_ms.insert(id, ms);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let determinism_hash = determinism_hash(config, &records)?;
    Ok(Report { config: config.clone(), records, determinism_hash, runtime_ms })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    suite: &'static str,
    metric: &'a str,
    lo: String,
    hi: String,
    comparison: Comparison,
    bound: f64,
    pass: bool,
    provenance: &'static str,
    trials: Option<u64>,
    width: Option<f64>,
    seed: u64,
}

fn real_text(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

/// Writes `report.json` and/or `records.csv` under `dir`.
pub fn write_report(report: &Report, dir: &Path, format: Format) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if matches!(format, Format::Json | Format::Both) {
        let f = BufWriter::new(File::create(dir.join("report.json"))?);
        serde_json::to_writer_pretty(f, report)?;
    }
    if matches!(format, Format::Csv | Format::Both) {
        let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
        for r in &report.records {
            let (provenance, trials, width) = match r.provenance {
                Provenance::Exact => ("exact", None, None),
                Provenance::Exhaustive => ("exhaustive", None, None),
                Provenance::MonteCarlo { trials, width } => ("monte-carlo", Some(trials), Some(width)),
            };
            w.serialize(CsvRow {
                id: &r.id,
                suite: r.suite.name(),
                metric: &r.metric,
                lo: real_text(r.value.lo()),
                hi: real_text(r.value.hi()),
                comparison: r.comparison,
                bound: r.bound,
                pass: r.pass,
                provenance,
                trials,
                width,
                seed: r.seed,
            })?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_passes() {
        let r = run_experiment(&ExperimentConfig::default()).unwrap();
        assert!(r.records.is_empty() && r.exit_code() == 0);
    }

    #[test]
    fn malformed_configs_are_config_errors() {
        assert!(matches!(ExperimentConfig::from_json("{\"suites\": [\"nope\"]}"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("{\"tolerance\": -1}"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("{\"extra\": 1}"), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_json("{\"suites\": [\"hash-audit\"], \"seed\": 4}").unwrap();
        assert_eq!(cfg.suites, vec![Suite::HashAudit]);
    }

    #[test]
    fn judged_uses_conservative_side() {
        let b = Bracket { lo: 0.9, hi: 1.2, method: crate::entropy::Method::Exact };
        let up = ReportRecord::judged("x", Suite::Lemmas, "m", Value::Bracket(b), Comparison::AtMost, 1.0, 0.0, Provenance::Exact, 0);
        let down = ReportRecord::judged("x", Suite::Lemmas, "m", Value::Bracket(b), Comparison::AtLeast, 0.8, 0.0, Provenance::Exact, 0);
        assert!(!up.pass && down.pass);
    }
}
