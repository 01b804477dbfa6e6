//! CSV and JSON artifacts of a run.
//!
//! Each suite writes `<suite>.csv` (columns `claim_id,k,value,slope,residual,pass`,
//! floats with 17 significant digits, no timings) and `<suite>.json`. The run
//! writes `report.json`, which carries the timings, and `summary.txt`.

use crate::cache::CacheStats;
use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "claim_id,k,value,slope,residual,pass";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
/// JSON schema that `report.json` conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub claim_id: String,
    pub k: Option<i64>,
    /// NaN marks a failed computation; JSON carries it as null.
    #[serde(with = "nan_as_null")]
    pub value: f64,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub pass: bool,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

impl Row {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.claim_id,
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            float(self.value),
            self.slope.map(float).unwrap_or_default(),
            self.residual.map(float).unwrap_or_default(),
            self.pass
        )
    }
}

/// What produced a suite's numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    /// SHA-256 of the backend descriptor.
    pub backend_hash: String,
    pub resolution: usize,
    pub ks: Vec<i64>,
    pub tol: f64,
    pub extra: usize,
    pub seed: u64,
    pub code_version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub kind: String,
    pub provenance: Provenance,
    pub rows: Vec<Row>,
    /// Failure reasons and other remarks, one per line.
    pub notes: Vec<String>,
    /// Structured detail (fits, bounds, spectra) specific to the suite kind.
    pub detail: serde_json::Value,
    pub passed: bool,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} ({}/{} rows pass)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.rows.len() - self.failed_rows(),
            self.rows.len()
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    /// Wall time of the report previously found in the same output directory.
    pub previous_wall_seconds: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub code_version: String,
    pub config: RunConfig,
    pub suites: Vec<SuiteReport>,
    pub cache: CacheStats,
    pub cache_notes: Vec<String>,
    pub timing: Timing,
    pub passed: bool,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            let _ = writeln!(s, "{}", suite.summary_line());
        }
        let failed = self.suites.iter().filter(|x| !x.passed).count();
        let _ = writeln!(
            s,
            "{}: {} of {} suites pass; cache {} hits, {} misses, {} quarantined",
            if self.passed { "PASS" } else { "FAIL" },
            self.suites.len() - failed,
            self.suites.len(),
            self.cache.hits,
            self.cache.misses,
            self.cache.quarantined
        );
        s
    }

    /// The suite flags and the overall flag agree with the row flags.
    pub fn consistent(&self) -> bool {
        self.suites.iter().all(|s| s.passed == (s.failed_rows() == 0))
            && self.passed == self.suites.iter().all(|s| s.passed)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for suite in &self.suites {
            fs::write(dir.join(format!("{}.csv", suite.name)), suite.csv())?;
            fs::write(dir.join(format!("{}.json", suite.name)), to_json(suite))?;
        }
        fs::write(dir.join(REPORT_FILE), to_json(self))?;
        fs::write(dir.join(SUMMARY_FILE), self.summary())
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Wall time recorded by an earlier run in `dir`, if any.
pub fn previous_wall_seconds(dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(dir.join(REPORT_FILE)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("timing")?.get("wall_seconds")?.as_f64()
}

/// Creates the output directory and proves it writable before any compute.
pub fn preflight(dir: &Path) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".akq-write-probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    Ok(dir.to_path_buf())
}
