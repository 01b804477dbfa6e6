//! Run configuration: a strict TOML schema with no silent physics defaults.

use akq_core::geometry::{BackendSpec, FieldExpr};
use akq_core::quantization::Scheme;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// Environment variable that overrides the configured cache directory.
pub const CACHE_ENV: &str = "AKQ_CACHE_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub solver: SolverSection,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendEntry>,
    #[serde(default, rename = "suite")]
    pub suites: Vec<SuiteEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub output: PathBuf,
    pub cache: Option<PathBuf>,
    /// Worker threads for independent (backend, k) jobs.
    pub threads: usize,
    /// Seed for random probes (Lanczos start blocks, Hermiticity probes).
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Relative residual tolerance for eigenpairs.
    pub tol: f64,
    /// Eigenpairs requested beyond dₖ.
    #[serde(default = "default_extra")]
    pub extra: usize,
}

fn default_extra() -> usize {
    3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Torus2,
    Torus4,
    Torus4Mixing,
    Sphere,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEntry {
    pub name: String,
    pub kind: BackendChoice,
    /// Sites per axis on tori, harmonic truncation on the sphere.
    pub resolution: usize,
}

impl BackendEntry {
    pub fn spec(&self) -> BackendSpec {
        match self.kind {
            BackendChoice::Torus2 => BackendSpec::torus2(self.resolution),
            BackendChoice::Torus4 => BackendSpec::torus4(self.resolution),
            BackendChoice::Torus4Mixing => BackendSpec::torus4_mixing(self.resolution),
            BackendChoice::Sphere => BackendSpec::sphere(self.resolution),
        }
    }
}

/// Either an explicit list or an inclusive range `{ from, to }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSelection {
    List(Vec<i64>),
    Range { from: i64, to: i64 },
}

impl KSelection {
    pub fn values(&self) -> Vec<i64> {
        match self {
            KSelection::List(v) => v.clone(),
            KSelection::Range { from, to } => (*from..=*to).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "RawSuite", into = "RawSuite")]
pub struct SuiteEntry {
    pub name: Option<String>,
    pub backend: String,
    pub k: KSelection,
    pub kind: SuiteKind,
    /// Half-width of the accepted slope band; each suite has its own default.
    pub slope_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SuiteKind {
    Drift,
    Gap,
    Vanishing,
    Comparison { f: String },
    Deformation { scheme: Scheme, f: String, g: String },
    Egorov { h: String, f: String, t: f64 },
    Trace { h: String, energy: f64, support: f64 },
    Bergman,
}

/// On-disk form of a suite: the tag picks the variant, every variant carries
/// the common keys, and unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawSuite {
    Drift { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64> },
    Gap { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64> },
    Vanishing { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64> },
    Comparison { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64>, f: String },
    Deformation {
        name: Option<String>,
        backend: String,
        k: KSelection,
        slope_tolerance: Option<f64>,
        scheme: Scheme,
        f: String,
        g: String,
    },
    Egorov { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64>, h: String, f: String, t: f64 },
    Trace {
        name: Option<String>,
        backend: String,
        k: KSelection,
        slope_tolerance: Option<f64>,
        h: String,
        energy: f64,
        support: f64,
    },
    Bergman { name: Option<String>, backend: String, k: KSelection, slope_tolerance: Option<f64> },
}

impl From<RawSuite> for SuiteEntry {
    fn from(raw: RawSuite) -> Self {
        use RawSuite as R;
        let (name, backend, k, slope_tolerance, kind) = match raw {
            R::Drift { name, backend, k, slope_tolerance } => (name, backend, k, slope_tolerance, SuiteKind::Drift),
            R::Gap { name, backend, k, slope_tolerance } => (name, backend, k, slope_tolerance, SuiteKind::Gap),
            R::Vanishing { name, backend, k, slope_tolerance } => (name, backend, k, slope_tolerance, SuiteKind::Vanishing),
            R::Comparison { name, backend, k, slope_tolerance, f } => {
                (name, backend, k, slope_tolerance, SuiteKind::Comparison { f })
            }
            R::Deformation { name, backend, k, slope_tolerance, scheme, f, g } => {
                (name, backend, k, slope_tolerance, SuiteKind::Deformation { scheme, f, g })
            }
            R::Egorov { name, backend, k, slope_tolerance, h, f, t } => {
                (name, backend, k, slope_tolerance, SuiteKind::Egorov { h, f, t })
            }
            R::Trace { name, backend, k, slope_tolerance, h, energy, support } => {
                (name, backend, k, slope_tolerance, SuiteKind::Trace { h, energy, support })
            }
            R::Bergman { name, backend, k, slope_tolerance } => (name, backend, k, slope_tolerance, SuiteKind::Bergman),
        };
        SuiteEntry { name, backend, k, kind, slope_tolerance }
    }
}

impl From<SuiteEntry> for RawSuite {
    fn from(s: SuiteEntry) -> Self {
        let SuiteEntry { name, backend, k, kind, slope_tolerance } = s;
        match kind {
            SuiteKind::Drift => RawSuite::Drift { name, backend, k, slope_tolerance },
            SuiteKind::Gap => RawSuite::Gap { name, backend, k, slope_tolerance },
            SuiteKind::Vanishing => RawSuite::Vanishing { name, backend, k, slope_tolerance },
            SuiteKind::Comparison { f } => RawSuite::Comparison { name, backend, k, slope_tolerance, f },
            SuiteKind::Deformation { scheme, f, g } => RawSuite::Deformation { name, backend, k, slope_tolerance, scheme, f, g },
            SuiteKind::Egorov { h, f, t } => RawSuite::Egorov { name, backend, k, slope_tolerance, h, f, t },
            SuiteKind::Trace { h, energy, support } => RawSuite::Trace { name, backend, k, slope_tolerance, h, energy, support },
            SuiteKind::Bergman => RawSuite::Bergman { name, backend, k, slope_tolerance },
        }
    }
}

impl SuiteKind {
    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Drift => "drift",
            SuiteKind::Gap => "gap",
            SuiteKind::Vanishing => "vanishing",
            SuiteKind::Comparison { .. } => "comparison",
            SuiteKind::Deformation { .. } => "deformation",
            SuiteKind::Egorov { .. } => "egorov",
            SuiteKind::Trace { .. } => "trace",
            SuiteKind::Bergman => "bergman",
        }
    }

    fn symbols(&self) -> Vec<(&'static str, &str)> {
        match self {
            SuiteKind::Comparison { f } => vec![("f", f)],
            SuiteKind::Deformation { f, g, .. } => vec![("f", f), ("g", g)],
            SuiteKind::Egorov { h, f, .. } => vec![("h", h), ("f", f)],
            SuiteKind::Trace { h, .. } => vec![("h", h)],
            _ => Vec::new(),
        }
    }
}

impl SuiteEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}_{}", self.kind.name(), self.backend))
    }
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&src)?;
        // relative paths are taken relative to the config file
        if let Some(dir) = path.parent() {
            if cfg.run.output.is_relative() {
                cfg.run.output = dir.join(&cfg.run.output);
            }
            if let Some(c) = cfg.run.cache.as_mut().filter(|c| c.is_relative()) {
                *c = dir.join(&*c);
            }
        }
        Ok(cfg)
    }

    /// Cache root: the environment override, then the configured directory.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os(CACHE_ENV).map(PathBuf::from).or_else(|| self.run.cache.clone())
    }

    pub fn backend(&self, name: &str) -> Option<&BackendEntry> {
        self.backends.iter().find(|b| b.name == name)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.run.threads == 0 {
            return Err(invalid("run.threads", "must be at least 1"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1e-3) {
            return Err(invalid("solver.tol", format!("{} is not in (0, 1e-3)", self.solver.tol)));
        }
        let mut names = BTreeSet::new();
        for (i, b) in self.backends.iter().enumerate() {
            if !names.insert(b.name.as_str()) {
                return Err(invalid(format!("backend[{i}].name"), format!("duplicate backend `{}`", b.name)));
            }
            let floor = BackendSpec::minimum_resolution(b.spec().kind, 0);
            if b.resolution < floor {
                return Err(invalid(
                    format!("backend[{i}].resolution"),
                    format!("{} is below the minimum {floor} for {:?}", b.resolution, b.kind),
                ));
            }
        }
        let mut suite_names = BTreeSet::new();
        for (i, s) in self.suites.iter().enumerate() {
            let key = |field: &str| format!("suite[{i}].{field}");
            if !suite_names.insert(s.display_name()) {
                return Err(invalid(key("name"), format!("duplicate suite name `{}`", s.display_name())));
            }
            let b = self.backend(&s.backend).ok_or_else(|| invalid(key("backend"), format!("unknown backend `{}`", s.backend)))?;
            let ks = s.k.values();
            if ks.is_empty() {
                return Err(invalid(key("k"), "empty k range"));
            }
            if ks.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid(key("k"), "k values must be strictly increasing"));
            }
            if ks[0] < 1 {
                return Err(invalid(key("k"), "k must be at least 1"));
            }
            let spec = b.spec();
            spec.check_resolution(*ks.last().unwrap() as usize)
                .map_err(|e| invalid(format!("backend[{}].resolution", s.backend), e.to_string()))?;
            for (field, src) in s.kind.symbols() {
                FieldExpr::parse(src).map_err(|e| invalid(key(field), e.to_string()))?;
            }
            if let Some(t) = s.slope_tolerance {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(invalid(key("slope_tolerance"), "must be positive"));
                }
            }
            match &s.kind {
                SuiteKind::Egorov { t, .. } if !(t.abs() <= akq_core::semiclassics::EGOROV_MAX_TIME) => {
                    return Err(invalid(key("t"), format!("|t| must not exceed {}", akq_core::semiclassics::EGOROV_MAX_TIME)));
                }
                SuiteKind::Trace { support, .. } if !(*support > 0.0) => {
                    return Err(invalid(key("support"), "must be positive"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
