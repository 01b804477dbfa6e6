//! Suite execution: per-k jobs in a worker pool, then series, fits and rows.
//!
//! A failing (backend, k) job becomes a failing `<suite>_job` row and is left
//! out of the series; sibling jobs carry on.

use crate::cache::sha256_hex;
use crate::config::{BackendEntry, RunConfig, SuiteEntry, SuiteKind};
use crate::engine::{Engine, EngineResult};
use crate::report::{previous_wall_seconds, Provenance, Row, RunReport, SuiteReport, Timing};
use akq_core::geometry::{BackendKind, FieldExpr, FlowCatalogEntry, ScalarField, SymplecticBackend};
use akq_core::quantization::{bergman_diagonal, degree_profile, integrate, QuantumSpace, Scheme};
use akq_core::semiclassics::{
    deformation_suite, egorov_defect, scheme_comparison_suite, trace_formula_check, RateExpectation, RatePoint, RateSeries,
    TestFunctionProfile,
};
use akq_core::spectral::{drift_fit, riemann_roch_dimension};
use akq_core::fit::affine_fit;
use akq_core::CODE_VERSION;
use rayon::prelude::*;
use std::sync::Arc;
use std::time::Instant;

pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.3;
/// Drift slope must be n within this relative tolerance.
pub const DRIFT_RELATIVE_TOLERANCE: f64 = 0.05;
/// Accepted slope of λ_{dₖ+1} against k on the 2-torus and the sphere.
pub const GAP_SLOPE_BAND: (f64, f64) = (1.8, 2.2);
pub const GAP_SLOPE_MIN_T4: f64 = 0.5;
pub const BAND_VARIATION_MAX: f64 = 0.5;
/// Odd-sector floor as a multiple of k, enforced from this k on.
pub const ODD_FLOOR_FACTOR: f64 = 0.5;
pub const ODD_FLOOR_FROM_K: i64 = 6;
pub const BERGMAN_TRACE_TOL: f64 = 1e-8;
pub const TRACE_DECAY_NOISE: f64 = 0.01;
pub const TRACE_FINAL_RELATIVE_MAX: f64 = 0.15;

struct Ctx<'a> {
    engine: &'a Engine,
    entry: &'a SuiteEntry,
    backend: &'a BackendEntry,
    name: String,
    rows: Vec<Row>,
    notes: Vec<String>,
    detail: serde_json::Map<String, serde_json::Value>,
}

impl Ctx<'_> {
    fn row(&mut self, claim: &str, k: Option<i64>, value: f64, pass: bool) {
        self.rows.push(Row { claim_id: claim.to_string(), k, value, slope: None, residual: None, pass });
    }

    fn fail(&mut self, claim: &str, k: Option<i64>, why: impl std::fmt::Display) {
        self.notes.push(match k {
            Some(k) => format!("{claim} at k = {k}: {why}"),
            None => format!("{claim}: {why}"),
        });
        self.row(claim, k, f64::NAN, false);
    }

    /// Rows for every point of a series; `extra` may veto a passing series.
    fn series(&mut self, s: &RateSeries, extra: Option<String>) {
        let pass = s.passed && extra.is_none();
        for p in &s.points {
            self.rows.push(Row {
                claim_id: s.claim.clone(),
                k: Some(p.k),
                value: p.value,
                slope: s.slope(),
                residual: s.max_residual_log10,
                pass,
            });
        }
        if !s.note.is_empty() {
            self.notes.push(format!("{}: {}", s.claim, s.note));
        }
        if let Some(why) = extra {
            self.notes.push(format!("{}: {why}", s.claim));
        }
    }

    fn detail(&mut self, key: &str, v: impl serde::Serialize) {
        self.detail.insert(key.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }

    fn expectation(&self) -> RateExpectation {
        RateExpectation::Slope { slope: -1.0, tolerance: self.entry.slope_tolerance.unwrap_or(DEFAULT_SLOPE_TOLERANCE) }
    }

    /// Runs `job` for every k in parallel; failures become `<suite>_job` rows.
    fn per_k<T: Send>(&mut self, job: impl Fn(i64) -> EngineResult<T> + Sync) -> Vec<(i64, T)> {
        let ks = self.entry.k.values();
        let results: Vec<(i64, EngineResult<T>)> = ks.par_iter().map(|&k| (k, job(k))).collect();
        let claim = format!("{}_job", self.entry.kind.name());
        let mut ok = Vec::new();
        for (k, r) in results {
            match r {
                Ok(v) => ok.push((k, v)),
                Err(e) => self.fail(&claim, Some(k), e),
            }
        }
        ok
    }

    fn backend(&self) -> EngineResult<Arc<SymplecticBackend>> {
        self.engine.backend(&self.backend.spec())
    }

    fn field(&self, backend: &SymplecticBackend, src: &str) -> EngineResult<(FieldExpr, ScalarField)> {
        let e = FieldExpr::parse(src)?;
        Ok((e.clone(), ScalarField::from_expr(backend, e)))
    }

    fn spaces(&mut self, scheme: Scheme) -> Vec<QuantumSpace> {
        let spec = self.backend.spec();
        let engine = self.engine;
        self.per_k(|k| engine.space(scheme, &spec, k)).into_iter().map(|(_, s)| (*s).clone()).collect()
    }
}

fn points(values: &[(i64, f64)]) -> Vec<RatePoint> {
    values.iter().map(|&(k, value)| RatePoint { k, value }).collect()
}

fn drift(c: &mut Ctx) -> EngineResult<()> {
    let spec = c.backend.spec();
    let engine = c.engine;
    let n = spec.kind.n() as f64;
    let mins = c.per_k(|k| Ok(engine.ak_spectrum(&spec, k)?.eigenvalues[0] + n * k as f64));
    for &(k, v) in &mins {
        c.row("min_spectrum", Some(k), v, true);
    }
    match drift_fit(&mins) {
        Ok(fit) => {
            let pass = (fit.slope - n).abs() <= DRIFT_RELATIVE_TOLERANCE * n;
            if !pass {
                c.notes.push(format!("drift slope {:.4} outside {n} ± {}", fit.slope, DRIFT_RELATIVE_TOLERANCE * n));
            }
            c.rows.push(Row {
                claim_id: "drift_slope".into(),
                k: None,
                value: fit.slope,
                slope: Some(fit.slope),
                residual: Some(fit.rms_residual),
                pass,
            });
            c.detail("fit", fit);
        }
        Err(e) => c.fail("drift_slope", None, e),
    }
    Ok(())
}

fn gap(c: &mut Ctx) -> EngineResult<()> {
    let spec = c.backend.spec();
    let kind = spec.kind;
    let engine = c.engine;
    let runs = c.per_k(|k| engine.ak_spectrum(&spec, k));
    let mut next = Vec::new();
    let mut band = Vec::new();
    for (k, run) in &runs {
        let d = riemann_roch_dimension(kind, *k);
        let ev = &run.eigenvalues;
        let jump = (0..ev.len() - 1).max_by(|&a, &b| (ev[a + 1] - ev[a]).total_cmp(&(ev[b + 1] - ev[b]))).unwrap_or(0);
        let count = jump + 1;
        if count != d {
            c.notes.push(format!("largest jump at k = {k} leaves {count} eigenvalues below it, expected {d}"));
        }
        c.row("dimension_count", Some(*k), count as f64, count == d);
        if ev.len() > d {
            next.push((*k, ev[d]));
            c.row("gap_next", Some(*k), ev[d], true);
        }
        let edge = ev[..d].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        band.push(edge);
        c.row("band_edge", Some(*k), edge, true);
    }
    // the 4-torus presets only reach k = 3, so this fit accepts three points
    let (xs, ys): (Vec<f64>, Vec<f64>) = next.iter().map(|&(k, v)| (k as f64, v)).unzip();
    match affine_fit(&xs, &ys) {
        Ok(fit) => {
            let pass = match kind {
                BackendKind::Torus4 => fit.slope > GAP_SLOPE_MIN_T4,
                _ => (GAP_SLOPE_BAND.0..=GAP_SLOPE_BAND.1).contains(&fit.slope),
            };
            if !pass {
                c.notes.push(format!("gap slope {:.4} out of range", fit.slope));
            }
            c.rows.push(Row {
                claim_id: "gap_slope".into(),
                k: None,
                value: fit.slope,
                slope: Some(fit.slope),
                residual: Some(fit.rms_residual),
                pass,
            });
            c.detail("fit", fit);
        }
        Err(e) => c.fail("gap_slope", None, e),
    }
    if kind == BackendKind::Torus4 && !band.is_empty() {
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(0.0, f64::max);
        let variation = if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY };
        c.row("band_variation", None, variation, variation < BAND_VARIATION_MAX);
    }
    Ok(())
}

fn vanishing(c: &mut Ctx) -> EngineResult<()> {
    let spec = c.backend.spec();
    let engine = c.engine;
    let found = c.per_k(|k| {
        let run = engine.spinc_spectrum(&spec, k)?;
        let space = engine.spinc_space(&spec, k)?;
        let ratio = degree_profile(&space).into_iter().fold(0.0, f64::max);
        Ok((run.odd_min, space.dim(), ratio))
    });
    let mut ratios = Vec::new();
    for &(k, (odd, dim, ratio)) in &found {
        let d = riemann_roch_dimension(spec.kind, k);
        c.row("even_kernel_dimension", Some(k), dim as f64, dim == d);
        let floor = ODD_FLOOR_FACTOR * k as f64;
        c.row("odd_sector_min", Some(k), odd, k < ODD_FLOOR_FROM_K || odd >= floor);
        if k >= ODD_FLOOR_FROM_K && odd < floor {
            c.notes.push(format!("odd-sector minimum {odd:.4} below {floor} at k = {k}"));
        }
        ratios.push((k, ratio));
    }
    match RateSeries::new("degree_ratio", points(&ratios), c.expectation()) {
        Ok(s) => {
            let extra = s.fit.is_none().then(|| "no log-log slope can be fitted to this series".to_string());
            c.series(&s, extra);
            c.detail("degree_ratio", s);
        }
        Err(e) => c.fail("degree_ratio", None, e),
    }
    Ok(())
}

fn comparison(c: &mut Ctx, f: &str) -> EngineResult<()> {
    let b = c.backend()?;
    let (_, f) = c.field(&b, f)?;
    let spec = c.backend.spec();
    let engine = c.engine;
    let pairs = c.per_k(|k| Ok((engine.ak_space(&spec, k)?, engine.spinc_space(&spec, k)?)));
    let ak: Vec<QuantumSpace> = pairs.iter().map(|(_, p)| (*p.0).clone()).collect();
    let sc: Vec<QuantumSpace> = pairs.iter().map(|(_, p)| (*p.1).clone()).collect();
    match scheme_comparison_suite(&b, &ak, &sc, &f, c.expectation()) {
        Ok(r) => {
            c.series(&r.difference, None);
            c.series(&r.distance, None);
            for bound in &r.bounds {
                c.row("comparison_bound", Some(bound.k), bound.difference - bound.bound, bound.holds);
            }
            c.detail("comparison", r);
        }
        Err(e) => c.fail("scheme_comparison", None, e),
    }
    Ok(())
}

fn deformation(c: &mut Ctx, scheme: Scheme, f: &str, g: &str) -> EngineResult<()> {
    let b = c.backend()?;
    let (_, f) = c.field(&b, f)?;
    let (_, g) = c.field(&b, g)?;
    let spaces = c.spaces(scheme);
    match deformation_suite(&b, &spaces, &f, &g, c.expectation()) {
        Ok(r) => {
            c.series(&r.norm, None);
            c.series(&r.product, None);
            c.series(&r.commutator, None);
            c.detail("deformation", r);
        }
        Err(e) => c.fail(&format!("{}_deformation", scheme.name()), None, e),
    }
    Ok(())
}

fn egorov(c: &mut Ctx, h: &str, f: &str, t: f64) -> EngineResult<()> {
    let b = c.backend()?;
    let (h, _) = c.field(&b, h)?;
    let (_, f) = c.field(&b, f)?;
    let flow = FlowCatalogEntry::for_hamiltonian(b.kind(), &h)?;
    let spaces = c.spaces(Scheme::AlmostKahler);
    match egorov_defect(&b, &flow, &spaces, &f, t, c.expectation()) {
        Ok(r) => {
            c.series(&r.series, None);
            c.detail("egorov", r);
        }
        Err(e) => c.fail("egorov_defect", None, e),
    }
    Ok(())
}

fn trace(c: &mut Ctx, h: &str, energy: f64, support: f64) -> EngineResult<()> {
    let b = c.backend()?;
    let (h, _) = c.field(&b, h)?;
    let flow = FlowCatalogEntry::for_hamiltonian(b.kind(), &h)?;
    let profile = TestFunctionProfile::bump(support)?;
    let spaces = c.spaces(Scheme::AlmostKahler);
    let expectation = RateExpectation::Decay { noise: TRACE_DECAY_NOISE };
    match trace_formula_check(&b, &flow, energy, &profile, &spaces, expectation) {
        Ok(r) => {
            c.series(&r.series, None);
            match (&r.relative_deviation, r.series.points.last()) {
                (Some(rel), Some(last)) => {
                    let v = *rel.last().unwrap();
                    c.row("trace_final_relative_deviation", Some(last.k), v, v < TRACE_FINAL_RELATIVE_MAX);
                }
                _ => c.fail("trace_final_relative_deviation", None, "leading coefficient vanishes"),
            }
            c.detail("profile", &profile);
            c.detail("trace", r);
        }
        Err(e) => c.fail("trace_leading_term", None, e),
    }
    Ok(())
}

fn bergman(c: &mut Ctx) -> EngineResult<()> {
    let spec = c.backend.spec();
    let engine = c.engine;
    let found = c.per_k(|k| {
        let b = engine.backend(&spec)?;
        let space = engine.ak_space(&spec, k)?;
        let diag = bergman_diagonal(&space, &b)?;
        Ok((diag.min(), integrate(&diag, &b), space.dim()))
    });
    for (k, (min, total, d)) in found {
        c.row("bergman_min", Some(k), min, min > 0.0);
        let err = (total - d as f64).abs();
        c.row("bergman_trace_error", Some(k), err, err < BERGMAN_TRACE_TOL);
    }
    Ok(())
}

pub fn run_suite(engine: &Engine, cfg: &RunConfig, entry: &SuiteEntry) -> SuiteReport {
    let start = Instant::now();
    let backend = cfg.backend(&entry.backend).expect("validated config names an existing backend");
    let spec = backend.spec();
    let mut c = Ctx {
        engine,
        entry,
        backend,
        name: entry.display_name(),
        rows: Vec::new(),
        notes: Vec::new(),
        detail: serde_json::Map::new(),
    };
    let outcome = match &entry.kind {
        SuiteKind::Drift => drift(&mut c),
        SuiteKind::Gap => gap(&mut c),
        SuiteKind::Vanishing => vanishing(&mut c),
        SuiteKind::Comparison { f } => comparison(&mut c, f),
        SuiteKind::Deformation { scheme, f, g } => deformation(&mut c, *scheme, f, g),
        SuiteKind::Egorov { h, f, t } => egorov(&mut c, h, f, *t),
        SuiteKind::Trace { h, energy, support } => trace(&mut c, h, *energy, *support),
        SuiteKind::Bergman => bergman(&mut c),
    };
    if let Err(e) = outcome {
        let claim = format!("{}_setup", entry.kind.name());
        c.fail(&claim, None, e);
    }
    if c.rows.is_empty() {
        c.fail(&format!("{}_rows", entry.kind.name()), None, "no rows produced");
    }
    let descriptor = spec.descriptor();
    let passed = c.rows.iter().all(|r| r.pass);
    SuiteReport {
        name: c.name,
        kind: entry.kind.name().to_string(),
        provenance: Provenance {
            backend_hash: sha256_hex(descriptor.as_bytes()),
            backend: descriptor,
            resolution: spec.resolution,
            ks: entry.k.values(),
            tol: cfg.solver.tol,
            extra: cfg.solver.extra,
            seed: cfg.run.seed,
            code_version: CODE_VERSION.to_string(),
        },
        rows: c.rows,
        notes: c.notes,
        detail: serde_json::Value::Object(c.detail),
        passed,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Every suite of the config, in config order, on a pool of `run.threads` workers.
pub fn run_all(engine: &Engine, cfg: &RunConfig) -> Result<RunReport, rayon::ThreadPoolBuildError> {
    let start = Instant::now();
    let previous = previous_wall_seconds(&cfg.run.output);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build()?;
    let suites: Vec<SuiteReport> = pool.install(|| cfg.suites.par_iter().map(|s| run_suite(engine, cfg, s)).collect());
    let wall = start.elapsed().as_secs_f64();
    let passed = suites.iter().all(|s| s.passed);
    Ok(RunReport {
        code_version: CODE_VERSION.to_string(),
        config: cfg.clone(),
        suites,
        cache: engine.cache_stats(),
        cache_notes: engine.cache().map(|c| c.notes()).unwrap_or_default(),
        timing: Timing {
            wall_seconds: wall,
            previous_wall_seconds: previous,
            speedup: previous.filter(|_| wall > 0.0).map(|p| p / wall),
        },
        passed,
    })
}
