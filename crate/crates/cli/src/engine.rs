//! Memoized, cache-backed access to backends, spectra and quantum spaces.
//!
//! Every value is computed at most once per process: concurrent requests for
//! the same key block on a single `OnceLock`. Spectral runs also go through
//! the on-disk cache when one is configured.

use crate::cache::{CacheEntry, CacheError, CacheKey, CacheStats, SpectraCache};
use crate::config::RunConfig;
use akq_core::geometry::{build_backend, BackendSpec, SymplecticBackend};
use akq_core::quantization::{
    almost_kahler_operator, almost_kahler_space_from, spinc_sectors, spinc_space_from, QuantumSpace, Scheme, SolveOptions,
};
use akq_core::spectral::{lowest_eigenpairs_with, riemann_roch_dimension, LanczosOptions, SpectralResult};
use akq_core::CODE_VERSION;
use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Core(#[from] akq_core::Error),
    #[error("cache: {0}")]
    Cache(String),
}

impl From<CacheError> for EngineError {
    fn from(e: CacheError) -> Self {
        EngineError::Cache(e.to_string())
    }
}

pub type EngineResult<T> = Result<T, EngineError>;

struct Memo<K, V> {
    slots: Mutex<HashMap<K, Arc<OnceLock<EngineResult<Arc<V>>>>>>,
}

impl<K: Eq + Hash + Clone, V> Memo<K, V> {
    fn new() -> Self {
        Self { slots: Mutex::new(HashMap::new()) }
    }

    fn get(&self, key: &K, init: impl FnOnce() -> EngineResult<V>) -> EngineResult<Arc<V>> {
        let slot = self.slots.lock().unwrap().entry(key.clone()).or_default().clone();
        slot.get_or_init(|| init().map(Arc::new)).clone()
    }
}

/// Even-sector run of D² plus the lowest odd-sector eigenvalue.
#[derive(Clone, Debug)]
pub struct SpincRun {
    pub even: SpectralResult,
    pub odd_min: f64,
}

pub struct Engine {
    opts: SolveOptions,
    cache: Option<SpectraCache>,
    backends: Memo<String, SymplecticBackend>,
    ak_runs: Memo<(String, i64), SpectralResult>,
    spinc_runs: Memo<(String, i64), SpincRun>,
    ak_spaces: Memo<(String, i64), QuantumSpace>,
    spinc_spaces: Memo<(String, i64), QuantumSpace>,
}

impl Engine {
    pub fn new(tol: f64, extra: usize, seed: u64, cache: Option<SpectraCache>) -> Self {
        let lanczos = LanczosOptions { tol, seed, ..LanczosOptions::default() };
        Self {
            opts: SolveOptions { tol, extra, lanczos },
            cache,
            backends: Memo::new(),
            ak_runs: Memo::new(),
            spinc_runs: Memo::new(),
            ak_spaces: Memo::new(),
            spinc_spaces: Memo::new(),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self, CacheError> {
        let cache = cfg.cache_dir().map(SpectraCache::open).transpose()?;
        Ok(Self::new(cfg.solver.tol, cfg.solver.extra, cfg.run.seed, cache))
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    pub fn cache(&self) -> Option<&SpectraCache> {
        self.cache.as_ref()
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.as_ref().map(|c| c.stats()).unwrap_or_default()
    }

    pub fn backend(&self, spec: &BackendSpec) -> EngineResult<Arc<SymplecticBackend>> {
        self.backends.get(&spec.descriptor(), || Ok(build_backend(spec)?))
    }

    fn key(&self, spec: &BackendSpec, operator: &str, k: i64, count: usize) -> CacheKey {
        CacheKey {
            backend: spec.descriptor(),
            operator: operator.to_string(),
            k,
            resolution: spec.resolution,
            tol: self.opts.tol,
            count,
            seed: self.opts.lanczos.seed,
            code_version: CODE_VERSION.to_string(),
        }
    }

    fn cached(
        &self,
        key: &CacheKey,
        scheme: Scheme,
        compute: impl FnOnce() -> EngineResult<(SpectralResult, Vec<f64>)>,
    ) -> EngineResult<(SpectralResult, Vec<f64>)> {
        let digest = key.digest();
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.load(&digest)? {
                if entry.scheme == scheme && entry.k == key.k {
                    return Ok((entry.to_result(), entry.scalars[1..].to_vec()));
                }
                return Err(EngineError::Cache(format!("entry {digest} does not match its key")));
            }
        }
        let (result, extra) = compute()?;
        if let Some(cache) = &self.cache {
            cache.store(&CacheEntry::from_result(key, scheme, &result, &extra))?;
        }
        Ok((result, extra))
    }

    /// Lowest dₖ + extra eigenpairs of Δ•ₖ.
    pub fn ak_spectrum(&self, spec: &BackendSpec, k: i64) -> EngineResult<Arc<SpectralResult>> {
        self.ak_runs.get(&(spec.descriptor(), k), || {
            let backend = self.backend(spec)?;
            let op = almost_kahler_operator(&backend, k)?;
            let m = self.opts.count(riemann_roch_dimension(backend.kind(), k));
            let key = self.key(spec, &op.name, k, m);
            let (result, _) = self.cached(&key, Scheme::AlmostKahler, || {
                Ok((lowest_eigenpairs_with(&op, m, &self.opts.lanczos())?, Vec::new()))
            })?;
            Ok(result)
        })
    }

    /// Lowest dₖ + extra eigenpairs of D² on even degrees and its lowest odd eigenvalue.
    pub fn spinc_spectrum(&self, spec: &BackendSpec, k: i64) -> EngineResult<Arc<SpincRun>> {
        self.spinc_runs.get(&(spec.descriptor(), k), || {
            let backend = self.backend(spec)?;
            let sectors = spinc_sectors(&backend, k)?;
            let m = self.opts.count(riemann_roch_dimension(backend.kind(), k));
            let key = self.key(spec, &sectors.even.name, k, m);
            let (even, extra) = self.cached(&key, Scheme::Spinc, || {
                let even = lowest_eigenpairs_with(&sectors.even, m, &self.opts.dirac_lanczos(m))?;
                let odd = lowest_eigenpairs_with(&sectors.odd, 2, &self.opts.dirac_lanczos(2))?;
                Ok((even, vec![odd.eigenvalues[0]]))
            })?;
            let odd_min = *extra.first().ok_or_else(|| EngineError::Cache("entry lacks the odd-sector minimum".into()))?;
            Ok(SpincRun { even, odd_min })
        })
    }

    pub fn ak_space(&self, spec: &BackendSpec, k: i64) -> EngineResult<Arc<QuantumSpace>> {
        self.ak_spaces.get(&(spec.descriptor(), k), || {
            let backend = self.backend(spec)?;
            let run = self.ak_spectrum(spec, k)?;
            let op = almost_kahler_operator(&backend, k)?;
            Ok(almost_kahler_space_from(&backend, k, &op, &run)?)
        })
    }

    pub fn spinc_space(&self, spec: &BackendSpec, k: i64) -> EngineResult<Arc<QuantumSpace>> {
        self.spinc_spaces.get(&(spec.descriptor(), k), || {
            let backend = self.backend(spec)?;
            let run = self.spinc_spectrum(spec, k)?;
            let sectors = spinc_sectors(&backend, k)?;
            Ok(spinc_space_from(&backend, k, &sectors, &run.even, Some(run.odd_min))?)
        })
    }

    pub fn space(&self, scheme: Scheme, spec: &BackendSpec, k: i64) -> EngineResult<Arc<QuantumSpace>> {
        match scheme {
            Scheme::AlmostKahler => self.ak_space(spec, k),
            Scheme::Spinc => self.spinc_space(spec, k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectra_are_memoized_and_cached() {
        let dir = tempfile::tempdir().unwrap();
        let spec = BackendSpec::sphere(4);
        let engine = Engine::new(1e-10, 3, 7, Some(SpectraCache::open(dir.path()).unwrap()));
        let a = engine.ak_spectrum(&spec, 3).unwrap();
        let b = engine.ak_spectrum(&spec, 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(engine.cache_stats().stored, 1);

        let fresh = Engine::new(1e-10, 3, 7, Some(SpectraCache::open(dir.path()).unwrap()));
        let c = fresh.ak_spectrum(&spec, 3).unwrap();
        assert_eq!(fresh.cache_stats().hits, 1);
        assert_eq!(fresh.cache_stats().stored, 0);
        let bits = |r: &SpectralResult| r.eigenvalues.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(fresh.ak_space(&spec, 3).unwrap().dim(), 4);
    }

    #[test]
    fn spinc_run_keeps_odd_minimum_through_cache() {
        let dir = tempfile::tempdir().unwrap();
        let spec = BackendSpec::sphere(4);
        let a = Engine::new(1e-10, 3, 7, Some(SpectraCache::open(dir.path()).unwrap())).spinc_spectrum(&spec, 2).unwrap();
        let b = Engine::new(1e-10, 3, 7, Some(SpectraCache::open(dir.path()).unwrap())).spinc_spectrum(&spec, 2).unwrap();
        assert_eq!(a.odd_min.to_bits(), b.odd_min.to_bits());
        assert!(a.odd_min > 0.0);
    }

    #[test]
    fn errors_are_memoized_too() {
        let engine = Engine::new(1e-10, 3, 7, None);
        let spec = BackendSpec::torus2(4);
        assert!(engine.backend(&spec).is_err());
        assert!(engine.ak_space(&spec, 2).is_err());
    }
}
