//! On-disk cache of wave tables and correlator tables. One JSON file per
//! (r, s, kind, truncation, format version); writes go through a temporary
//! file and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlators::{CorrelatorTable, Engine};
use crate::exactmath::rational::{from_pq, to_pq};
use crate::wavefunc::WaveTable;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct WaveRecord {
    pub k: i64,
    pub m: u32,
    pub value: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
struct CachedWave {
    format_version: u32,
    r: i64,
    s: i64,
    kmin: i64,
    kmax: i64,
    max_order: u32,
    coeffs: Vec<WaveRecord>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
struct CachedEntry {
    m: Vec<i64>,
    value: String,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
struct CachedCorrelator {
    format_version: u32,
    r: i64,
    s: i64,
    g: i64,
    n: usize,
    entries: Vec<CachedEntry>,
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
    version: u32,
}

fn warn(path: &Path, why: &str) {
    eprintln!("warning: ignoring cache entry {}: {why}", path.display());
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into(), version: FORMAT_VERSION }
    }

    pub fn with_version(dir: impl Into<PathBuf>, version: u32) -> Self {
        Cache { dir: dir.into(), version }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, r: i64, s: i64, kind: &str, trunc: &str) -> PathBuf {
        self.dir.join(format!("{kind}_r{r}_s{s}_{trunc}_v{}.json", self.version))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let name = path.file_name().and_then(|x| x.to_str()).unwrap_or("entry");
        let tmp = self.dir.join(format!(".{name}.{}.tmp", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Option<T> {
        let bytes = fs::read(path).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                warn(path, &e.to_string());
                None
            }
        }
    }

    pub fn write_wave(&self, t: &WaveTable) -> io::Result<PathBuf> {
        let (kmin, kmax) = t.k_range();
        let coeffs = t.coeffs.iter().map(|(&(k, m), v)| WaveRecord { k, m, value: to_pq(v) }).collect();
        let c = CachedWave { format_version: self.version, r: t.r, s: t.s, kmin, kmax, max_order: t.max_order, coeffs };
        let path = self.path(t.r, t.s, "wave", &format!("k{kmin}..{kmax}_o{}", t.max_order));
        self.write_atomic(&path, serde_json::to_string_pretty(&c)?.as_bytes())?;
        Ok(path)
    }

    pub fn read_wave(&self, r: i64, s: i64, kmin: i64, kmax: i64, max_order: u32) -> Option<WaveTable> {
        let path = self.path(r, s, "wave", &format!("k{kmin}..{kmax}_o{max_order}"));
        let c: CachedWave = self.read_json(&path)?;
        if c.format_version != self.version || (c.r, c.s, c.kmin, c.kmax, c.max_order) != (r, s, kmin, kmax, max_order) {
            warn(&path, "stale or mismatched header");
            return None;
        }
        let mut coeffs = BTreeMap::new();
        for w in c.coeffs {
            match from_pq(&w.value) {
                Ok(v) => {
                    coeffs.insert((w.k, w.m), v);
                }
                Err(e) => {
                    warn(&path, &e.to_string());
                    return None;
                }
            }
        }
        Some(WaveTable { r, s, max_order, coeffs })
    }

    pub fn write_correlator(&self, t: &CorrelatorTable) -> io::Result<PathBuf> {
        let entries = t.entries.iter().map(|(m, v)| CachedEntry { m: m.clone(), value: to_pq(v) }).collect();
        let c = CachedCorrelator { format_version: self.version, r: t.r, s: t.s, g: t.g, n: t.n, entries };
        let path = self.path(t.r, t.s, "omega", &format!("g{}_n{}", t.g, t.n));
        self.write_atomic(&path, serde_json::to_string(&c)?.as_bytes())?;
        Ok(path)
    }

    pub fn read_correlator(&self, r: i64, s: i64, g: i64, n: usize) -> Option<CorrelatorTable> {
        let path = self.path(r, s, "omega", &format!("g{g}_n{n}"));
        self.load_correlator(&path, r, s, Some((g, n)))
    }

    fn load_correlator(&self, path: &Path, r: i64, s: i64, gn: Option<(i64, usize)>) -> Option<CorrelatorTable> {
        let c: CachedCorrelator = self.read_json(path)?;
        if c.format_version != self.version || (c.r, c.s) != (r, s) || gn.is_some_and(|x| x != (c.g, c.n)) {
            warn(path, "stale or mismatched header");
            return None;
        }
        let mut entries = BTreeMap::new();
        for e in c.entries {
            if e.m.len() != c.n {
                warn(path, "entry arity");
                return None;
            }
            match from_pq(&e.value) {
                Ok(v) => {
                    entries.insert(e.m, v);
                }
                Err(err) => {
                    warn(path, &err.to_string());
                    return None;
                }
            }
        }
        Some(CorrelatorTable { r, s, g: c.g, n: c.n, entries })
    }

    /// Loads every cached correlator table of the engine's (r,s).
    pub fn preload(&self, eng: &mut Engine) -> usize {
        let prefix = format!("omega_r{}_s{}_", eng.r, eng.s);
        let suffix = format!("_v{}.json", self.version);
        let Ok(dir) = fs::read_dir(&self.dir) else {
            return 0;
        };
        let mut count = 0;
        let mut names: Vec<PathBuf> = dir.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for p in names {
            let name = p.file_name().and_then(|x| x.to_str()).unwrap_or("");
            if name.starts_with(&prefix) && name.ends_with(&suffix) {
                if let Some(t) = self.load_correlator(&p, eng.r, eng.s, None) {
                    eng.insert_table(t);
                    count += 1;
                }
            }
        }
        count
    }

    /// Writes the engine's tables that are not on disk yet.
    pub fn store(&self, eng: &Engine) -> io::Result<usize> {
        let mut count = 0;
        for t in eng.tables() {
            let path = self.path(t.r, t.s, "omega", &format!("g{}_n{}", t.g, t.n));
            if !path.exists() {
                self.write_correlator(t)?;
                count += 1;
            }
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().join("nested"));
        let t = WaveTable::for_kernel(2, 1, 4).unwrap();
        let (lo, hi) = t.k_range();
        let p = cache.write_wave(&t).unwrap();
        let first = fs::read(&p).unwrap();
        let back = cache.read_wave(2, 1, lo, hi, 4).unwrap();
        assert_eq!(back, t);
        cache.write_wave(&back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
        assert!(Cache::with_version(dir.path().join("nested"), FORMAT_VERSION + 1).read_wave(2, 1, lo, hi, 4).is_none());
    }

    #[test]
    fn correlator_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let mut eng = Engine::new(2, 1).unwrap();
        let t = eng.omega(1, 1).unwrap();
        let p = cache.write_correlator(&t).unwrap();
        assert_eq!(cache.read_correlator(2, 1, 1, 1), Some(t.clone()));
        let mut fresh = Engine::new(2, 1).unwrap();
        assert_eq!(cache.preload(&mut fresh), 1);
        fs::write(&p, b"{ not json").unwrap();
        assert_eq!(cache.read_correlator(2, 1, 1, 1), None);
    }
}
