//! Content-addressed on-disk cache of spectral runs.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "AKQ1" | u32 format version | u8 scheme | i64 k | u64 rows | u64 cols
//! | u64 scalar count | u64 metadata length | metadata (UTF-8 JSON, no floats)
//! | eigenvalues: cols × f64 | residuals: cols × f64 | scalars: count × f64
//! | vectors: cols × rows × (re f64, im f64), one vector after another
//! | SHA-256 of everything above (32 bytes)
//! ```

use akq_core::quantization::Scheme;
use akq_core::spectral::{SolverDiagnostics, SpectralResult};
use akq_core::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const MAGIC: &[u8; 4] = b"AKQ1";
pub const FORMAT_VERSION: u32 = 1;
const EXTENSION: &str = "akq1";
const QUARANTINE: &str = "quarantine";

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache i/o at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt cache entry: {0}")]
    Corrupt(String),
    #[error("cache key {key} already holds a different payload")]
    Collision { key: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything that determines a spectral run, hashed into the cache key.
#[derive(Clone, Debug, Serialize)]
pub struct CacheKey {
    pub backend: String,
    pub operator: String,
    pub k: i64,
    pub resolution: usize,
    pub tol: f64,
    pub count: usize,
    pub seed: u64,
    pub code_version: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        // tol enters by its bit pattern so that keys never depend on float formatting
        let canonical = format!(
            "{}|{}|k={}|n={}|tol={:016x}|m={}|seed={}|code={}",
            self.backend,
            self.operator,
            self.k,
            self.resolution,
            self.tol.to_bits(),
            self.count,
            self.seed,
            self.code_version
        );
        sha256_hex(canonical.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub key: String,
    pub backend: String,
    pub operator: String,
    pub code_version: String,
    pub converged: bool,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Clone, Debug)]
pub struct CacheEntry {
    pub scheme: Scheme,
    pub k: i64,
    pub rows: usize,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Solver tolerance first; further run-specific scalars after it.
    pub scalars: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    pub meta: CacheMeta,
}

impl CacheEntry {
    pub fn from_result(key: &CacheKey, scheme: Scheme, result: &SpectralResult, extra: &[f64]) -> Self {
        let mut scalars = vec![result.tol];
        scalars.extend_from_slice(extra);
        Self {
            scheme,
            k: key.k,
            rows: result.eigenvectors.first().map_or(0, |v| v.len()),
            eigenvalues: result.eigenvalues.clone(),
            residuals: result.residuals.clone(),
            scalars,
            vectors: result.eigenvectors.clone(),
            meta: CacheMeta {
                key: key.digest(),
                backend: key.backend.clone(),
                operator: key.operator.clone(),
                code_version: key.code_version.clone(),
                converged: result.converged,
                diagnostics: result.diagnostics.clone(),
            },
        }
    }

    pub fn to_result(&self) -> SpectralResult {
        SpectralResult {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self.vectors.clone(),
            residuals: self.residuals.clone(),
            tol: self.scalars[0],
            converged: self.meta.converged,
            diagnostics: self.meta.diagnostics.clone(),
        }
    }

    pub fn cols(&self) -> usize {
        self.vectors.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let cols = self.cols();
        let mut out = Vec::with_capacity(64 + meta.len() + 16 * cols * (self.rows + 1) + 8 * self.scalars.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.scheme {
            Scheme::AlmostKahler => 0,
            Scheme::Spinc => 1,
        });
        out.extend_from_slice(&self.k.to_le_bytes());
        for n in [self.rows, cols, self.scalars.len(), meta.len()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.extend_from_slice(&meta);
        for x in self.eigenvalues.iter().chain(&self.residuals).chain(&self.scalars) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.vectors {
            for z in v {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CacheError> {
        let bad = |m: &str| CacheError::Corrupt(m.to_string());
        if bytes.len() < 4 + 4 + 1 + 8 + 32 + 32 {
            return Err(bad("truncated header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CacheError::Corrupt(format!("format version {version}")));
        }
        let scheme = match r.take(1)?[0] {
            0 => Scheme::AlmostKahler,
            1 => Scheme::Spinc,
            s => return Err(CacheError::Corrupt(format!("scheme tag {s}"))),
        };
        let k = i64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let rows = r.len()?;
        let cols = r.len()?;
        let nscalars = r.len()?;
        let meta_len = r.len()?;
        let meta: CacheMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| CacheError::Corrupt(format!("metadata: {e}")))?;
        let eigenvalues = r.floats(cols)?;
        let residuals = r.floats(cols)?;
        let scalars = r.floats(nscalars)?;
        if scalars.is_empty() {
            return Err(bad("missing solver tolerance"));
        }
        let mut vectors = Vec::with_capacity(cols);
        for _ in 0..cols {
            let raw = r.floats(2 * rows)?;
            vectors.push(raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect());
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { scheme, k, rows, eigenvalues, residuals, scalars, vectors, meta })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CacheError::Corrupt("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self) -> Result<usize, CacheError> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(n).ok().filter(|&n| n <= self.bytes.len() * 8).ok_or_else(|| CacheError::Corrupt(format!("length {n}")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CacheError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CacheError::Corrupt("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub stored: usize,
    pub quarantined: usize,
}

/// A cache directory. Readers may run concurrently; each key has a single
/// writer, and entries appear through an atomic rename.
pub struct SpectraCache {
    root: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
    stored: AtomicUsize,
    quarantined: AtomicUsize,
    notes: Mutex<Vec<String>>,
}

impl SpectraCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            stored: AtomicUsize::new(0),
            quarantined: AtomicUsize::new(0),
            notes: Mutex::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.root.join(format!("{digest}.{EXTENSION}"))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            stored: self.stored.load(Ordering::Relaxed),
            quarantined: self.quarantined.load(Ordering::Relaxed),
        }
    }

    /// Messages about quarantined entries, in the order they happened.
    pub fn notes(&self) -> Vec<String> {
        self.notes.lock().unwrap().clone()
    }

    /// The entry for `digest`, or `None` when absent. A corrupt or mislabelled
    /// file is moved to the quarantine directory and reported as absent.
    pub fn load(&self, digest: &str) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.path_for(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return Ok(None);
            }
            Err(e) => return Err(CacheError::Io { path, source: e }),
        };
        let entry = CacheEntry::decode(&bytes).and_then(|e| {
            if e.meta.key == digest {
                Ok(e)
            } else {
                Err(CacheError::Corrupt(format!("file holds key {}", e.meta.key)))
            }
        });
        match entry {
            Ok(e) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(Some(e))
            }
            Err(CacheError::Corrupt(why)) => {
                self.quarantine(&path, &why)?;
                self.misses.fetch_add(1, Ordering::Relaxed);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn quarantine(&self, path: &Path, why: &str) -> Result<PathBuf, CacheError> {
        let dir = self.root.join(QUARANTINE);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let mut target = dir.join(&name);
        let mut n = 1;
        while target.exists() {
            target = dir.join(format!("{name}.{n}"));
            n += 1;
        }
        fs::rename(path, &target).map_err(io_err(path))?;
        self.quarantined.fetch_add(1, Ordering::Relaxed);
        self.notes.lock().unwrap().push(format!("quarantined {} ({why})", target.display()));
        Ok(target)
    }

    /// Write through a temporary file and an atomic rename. An existing file
    /// with identical bytes is left alone; different bytes under the same key
    /// are a hard error.
    pub fn store(&self, entry: &CacheEntry) -> Result<PathBuf, CacheError> {
        let digest = entry.meta.key.clone();
        let path = self.path_for(&digest);
        let bytes = entry.encode();
        if let Ok(existing) = fs::read(&path) {
            if existing == bytes {
                return Ok(path);
            }
            match CacheEntry::decode(&existing) {
                Ok(_) => return Err(CacheError::Collision { key: digest }),
                Err(CacheError::Corrupt(why)) => {
                    self.quarantine(&path, &why)?;
                }
                Err(e) => return Err(e),
            }
        }
        let tmp = self.root.join(format!(".{digest}.{}.{:?}.tmp", std::process::id(), std::thread::current().id()));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        self.stored.fetch_add(1, Ordering::Relaxed);
        Ok(path)
    }

    /// Every entry file with its decoded form or the reason it is unreadable.
    pub fn scan(&self) -> Result<Vec<(PathBuf, Result<CacheEntry, CacheError>)>, CacheError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(io_err(&self.root))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
            .collect();
        paths.sort();
        Ok(paths
            .into_iter()
            .map(|p| {
                let entry = fs::read(&p).map_err(io_err(&p)).and_then(|b| CacheEntry::decode(&b));
                (p, entry)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(k: i64) -> CacheKey {
        CacheKey {
            backend: "torus2:res=16:standard".into(),
            operator: "rescaled_laplacian".into(),
            k,
            resolution: 16,
            tol: 1e-9,
            count: 2,
            seed: 1,
            code_version: "test".into(),
        }
    }

    fn entry(values: &[f64], rows: usize) -> CacheEntry {
        let vectors: Vec<Vec<C64>> = (0..2)
            .map(|j| (0..rows).map(|i| C64::new(values[(i + j) % values.len()], -values[(i * 3 + j) % values.len()])).collect())
            .collect();
        let result = SpectralResult {
            eigenvalues: vec![values[0], values[1 % values.len()]],
            eigenvectors: vectors,
            residuals: vec![1e-12, f64::MIN_POSITIVE],
            tol: 1e-9,
            converged: true,
            diagnostics: SolverDiagnostics { block_size: 2, block_steps: 5, restarts: 1, matvecs: 10, reorthogonalizations: 4 },
        };
        CacheEntry::from_result(&key(3), Scheme::Spinc, &result, &[0.25])
    }

    fn bits(e: &CacheEntry) -> Vec<u64> {
        let mut out: Vec<u64> = e.eigenvalues.iter().chain(&e.residuals).chain(&e.scalars).map(|x| x.to_bits()).collect();
        for v in &e.vectors {
            out.extend(v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]));
        }
        out
    }

    proptest! {
        #[test]
        fn encode_decode_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::ANY, 1..12), rows in 1usize..9) {
            let e = entry(&values, rows);
            let d = CacheEntry::decode(&e.encode()).unwrap();
            prop_assert_eq!(bits(&e), bits(&d));
            prop_assert_eq!(d.meta, e.meta);
            prop_assert_eq!(d.k, 3);
            prop_assert_eq!(d.scheme, Scheme::Spinc);
        }
    }

    #[test]
    fn header_starts_with_magic() {
        let b = entry(&[1.0, 2.0], 4).encode();
        assert_eq!(&b[..4], b"AKQ1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), FORMAT_VERSION);
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let b = entry(&[1.0, -2.5, 3.25], 5).encode();
        for i in (0..b.len()).step_by(7) {
            let mut c = b.clone();
            c[i] ^= 0x10;
            assert!(CacheEntry::decode(&c).is_err(), "byte {i}");
        }
        assert!(CacheEntry::decode(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn store_load_quarantine_and_collision() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectraCache::open(dir.path()).unwrap();
        let e = entry(&[0.5, 1.5], 6);
        let digest = e.meta.key.clone();
        assert!(cache.load(&digest).unwrap().is_none());
        let path = cache.store(&e).unwrap();
        cache.store(&e).unwrap();
        let back = cache.load(&digest).unwrap().unwrap();
        assert_eq!(bits(&back), bits(&e));

        let mut other = e.clone();
        other.eigenvalues[0] = 9.0;
        assert!(matches!(cache.store(&other), Err(CacheError::Collision { .. })));

        let mut bytes = fs::read(&path).unwrap();
        bytes[40] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(cache.load(&digest).unwrap().is_none());
        assert!(!path.exists());
        assert_eq!(cache.stats().quarantined, 1);
        assert_eq!(fs::read_dir(dir.path().join(QUARANTINE)).unwrap().count(), 1);
        cache.store(&e).unwrap();
        assert!(cache.load(&digest).unwrap().is_some());
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = key(3).digest();
        let mut variants = vec![key(4)];
        let mut t = key(3);
        t.tol = 1e-10;
        variants.push(t);
        let mut c = key(3);
        c.code_version = "other".into();
        variants.push(c);
        let mut s = key(3);
        s.seed = 2;
        variants.push(s);
        for v in variants {
            assert_ne!(v.digest(), base);
        }
        assert_eq!(key(3).digest(), base);
        assert_eq!(base.len(), 64);
    }
}
