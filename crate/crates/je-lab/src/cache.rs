//! Content-addressed cache for kernel work: one entry per
//! (measure, domain, tolerances, y, t) holding the adaptive panel
//! decomposition and the solver samples collected during a sweep. Entries
//! are written once, atomically (write to a temp file, then rename); a
//! corrupt entry is recomputed and replaced with a warning.
//!
//! Hash input and stored floats are bit-exact (f64 <-> u64 bits), so a warm
//! run reproduces a cold run byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measure::{Density, Measure};
use crate::spectral::{ProfileKind, SpectralDomain};

const MAGIC: &[u8; 4] = b"JELC";
const VERSION: u32 = 1;
const MAX_PANELS: u64 = 1 << 24;
const MAX_SAMPLES: u64 = 1 << 24;
const MAX_VALUES: u64 = 16;

/// Kinds of scalar sample records stored in an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    TruncationLength,
    NodeStudy,
    Solve,
}

impl SampleKind {
    fn to_u8(self) -> u8 {
        match self {
            SampleKind::TruncationLength => 1,
            SampleKind::NodeStudy => 2,
            SampleKind::Solve => 3,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(SampleKind::TruncationLength),
            2 => Some(SampleKind::NodeStudy),
            3 => Some(SampleKind::Solve),
            _ => None,
        }
    }
}

/// Key of one sample inside an entry: kind plus two opaque words (typically
/// the x bits and a discretization tag).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleKey {
    pub kind: SampleKind,
    pub a: u64,
    pub b: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CacheEntry {
    pub panel_rects: Vec<[f64; 4]>,
    pub samples: Vec<(SampleKey, Vec<f64>)>,
}

// ---------------------------------------------------------------------------
// Canonical bytes and hashing
// ---------------------------------------------------------------------------

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_profile(out: &mut Vec<u8>, domain: &SpectralDomain) {
    let p = &domain.profile;
    match &p.kind {
        ProfileKind::Quadratic { a2, a0 } => {
            out.push(1);
            push_f64(out, *a2);
            push_f64(out, *a0);
        }
        ProfileKind::Constant { b_squared } => {
            out.push(2);
            push_f64(out, *b_squared);
        }
        ProfileKind::Tabulated { points } => {
            out.push(3);
            push_u32(out, points.len() as u32);
            for (s, c) in points {
                push_f64(out, *s);
                push_f64(out, *c);
            }
        }
    }
    push_f64(out, p.delta);
    push_f64(out, p.epsilon);
    out.push(match domain.roof_mode {
        crate::spectral::RoofMode::TangencyLocus => 1,
        crate::spectral::RoofMode::MaxConsistent => 2,
    });
    push_f64(out, domain.p_range.0);
    push_f64(out, domain.p_range.1);
}

fn push_measure(out: &mut Vec<u8>, measure: &Measure) {
    push_u32(out, measure.atoms.len() as u32);
    for a in &measure.atoms {
        push_f64(out, a.point.p);
        push_f64(out, a.point.q);
        push_f64(out, a.weight);
    }
    match &measure.density {
        Density::None => out.push(0),
        Density::GaussP { scale } => {
            out.push(1);
            push_f64(out, *scale);
        }
        Density::GaussPq {
            p_coeff,
            q_coeff,
            offset,
        } => {
            out.push(2);
            push_f64(out, *p_coeff);
            push_f64(out, *q_coeff);
            push_f64(out, *offset);
        }
        Density::RationalP { alpha } => {
            out.push(3);
            push_u32(out, *alpha);
        }
        Density::Uniform => out.push(4),
        Density::GrowthPSquared => out.push(5),
    }
}

/// Content hash identifying a (measure, domain, tolerances, y, t) group.
pub fn group_key(
    measure: &Measure,
    domain: &SpectralDomain,
    tolerances: &[f64],
    y: f64,
    t: f64,
) -> String {
    let mut bytes = Vec::with_capacity(256);
    bytes.extend_from_slice(MAGIC);
    push_u32(&mut bytes, VERSION);
    push_measure(&mut bytes, measure);
    push_profile(&mut bytes, domain);
    push_u32(&mut bytes, tolerances.len() as u32);
    for tol in tolerances {
        push_f64(&mut bytes, *tol);
    }
    push_f64(&mut bytes, y);
    push_f64(&mut bytes, t);
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

// ---------------------------------------------------------------------------
// Entry codec
// ---------------------------------------------------------------------------

impl CacheEntry {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, VERSION);
        out.extend_from_slice(&(self.panel_rects.len() as u64).to_le_bytes());
        for r in &self.panel_rects {
            for v in r {
                push_f64(&mut out, *v);
            }
        }
        out.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for (key, vals) in &self.samples {
            out.push(key.kind.to_u8());
            out.extend_from_slice(&key.a.to_le_bytes());
            out.extend_from_slice(&key.b.to_le_bytes());
            out.push(vals.len() as u8);
            for v in vals {
                push_f64(&mut out, *v);
            }
        }
        out
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut cur = Cursor { data, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::CacheCorrupt("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::CacheCorrupt(format!("unknown version {version}")));
        }
        let n_panels = cur.u64()?;
        if n_panels > MAX_PANELS {
            return Err(Error::CacheCorrupt(format!("panel count {n_panels}")));
        }
        // Guard against truncated buffers before allocating.
        if (n_panels as usize).saturating_mul(32) > cur.remaining() {
            return Err(Error::CacheCorrupt("short panel section".into()));
        }
        let mut panel_rects = Vec::with_capacity(n_panels as usize);
        for _ in 0..n_panels {
            panel_rects.push([cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?]);
        }
        let n_samples = cur.u64()?;
        if n_samples > MAX_SAMPLES {
            return Err(Error::CacheCorrupt(format!("sample count {n_samples}")));
        }
        if (n_samples as usize).saturating_mul(18) > cur.remaining() {
            return Err(Error::CacheCorrupt("short sample section".into()));
        }
        let mut samples = Vec::with_capacity(n_samples as usize);
        for _ in 0..n_samples {
            let kind = SampleKind::from_u8(cur.u8()?)
                .ok_or_else(|| Error::CacheCorrupt("bad sample kind".into()))?;
            let a = cur.u64()?;
            let b = cur.u64()?;
            let len = cur.u8()? as u64;
            if len > MAX_VALUES {
                return Err(Error::CacheCorrupt(format!("value count {len}")));
            }
            let mut vals = Vec::with_capacity(len as usize);
            for _ in 0..len {
                vals.push(cur.f64()?);
            }
            samples.push((SampleKey { kind, a, b }, vals));
        }
        if cur.remaining() != 0 {
            return Err(Error::CacheCorrupt("trailing bytes".into()));
        }
        Ok(Self {
            panel_rects,
            samples,
        })
    }

    pub fn lookup(&self, key: &SampleKey) -> Option<&[f64]> {
        self.samples
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::CacheCorrupt("unexpected end of entry".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.jelc"))
    }

    /// Load an entry; None when absent, warning + None when corrupt (the
    /// corrupt file is removed so the rerun replaces it).
    pub fn load(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path_for(key);
        let data = fs::read(&path).ok()?;
        match CacheEntry::decode(&data) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; recomputing", path.display());
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    /// Write-once, atomic: encode to a unique temp file and rename it into
    /// place. Concurrent writers race benignly; one rename wins and every
    /// reader sees a complete entry.
    pub fn store(&self, key: &str, entry: &CacheEntry) -> Result<()> {
        let path = self.path_for(key);
        if path.exists() {
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        let unique = format!(
            ".{}.{}.{}.tmp",
            key,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        );
        let tmp = self.dir.join(unique);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&entry.encode())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{AmplitudeProfile, RoofMode};

    fn sample_entry() -> CacheEntry {
        CacheEntry {
            panel_rects: vec![[0.0, 0.5, 0.0, 1.0], [-0.5, 0.0, 0.25, 0.5]],
            samples: vec![
                (
                    SampleKey {
                        kind: SampleKind::TruncationLength,
                        a: 0,
                        b: 0,
                    },
                    vec![14.0, 6.0],
                ),
                (
                    SampleKey {
                        kind: SampleKind::Solve,
                        a: 3.25f64.to_bits(),
                        b: 96,
                    },
                    vec![-0.5, 1e-14, 0.25, 2e-14, 1e-12, 3.0, 1e-10, 5e-13],
                ),
            ],
        }
    }

    fn domain() -> SpectralDomain {
        let profile = AmplitudeProfile::new(
            crate::spectral::ProfileKind::Constant { b_squared: 1.0 },
            0.5,
            0.2,
        )
        .unwrap();
        SpectralDomain::new(profile, RoofMode::TangencyLocus, (-0.5, 0.5)).unwrap()
    }

    #[test]
    fn entry_round_trips_bit_exactly() {
        let entry = sample_entry();
        let decoded = CacheEntry::decode(&entry.encode()).unwrap();
        assert_eq!(decoded.panel_rects, entry.panel_rects);
        assert_eq!(decoded.samples.len(), entry.samples.len());
        for ((ka, va), (kb, vb)) in decoded.samples.iter().zip(&entry.samples) {
            assert_eq!(ka, kb);
            assert_eq!(
                va.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                vb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn corrupt_entries_are_rejected_not_panicking() {
        let good = sample_entry().encode();
        // Truncations and bit flips must all return errors.
        for cut in [0usize, 3, 7, 15, good.len() - 1] {
            assert!(CacheEntry::decode(&good[..cut]).is_err());
        }
        let mut huge = good.clone();
        huge[8] = 0xff; // inflate the panel count
        huge[9] = 0xff;
        huge[10] = 0xff;
        huge[11] = 0xff;
        assert!(CacheEntry::decode(&huge).is_err());
    }

    #[test]
    fn key_separates_tolerances_and_parameters() {
        let m = Measure {
            atoms: vec![],
            density: Density::GaussP { scale: 12.0 },
        };
        let d = domain();
        let base = group_key(&m, &d, &[1e-9, 1e-8], 0.0, 100.0);
        assert_eq!(base.len(), 64);
        assert_ne!(base, group_key(&m, &d, &[1e-7, 1e-8], 0.0, 100.0));
        assert_ne!(base, group_key(&m, &d, &[1e-9, 1e-8], 0.5, 100.0));
        assert_ne!(base, group_key(&m, &d, &[1e-9, 1e-8], 0.0, 200.0));
        // Same inputs, same key.
        assert_eq!(base, group_key(&m, &d, &[1e-9, 1e-8], 0.0, 100.0));
    }

    #[test]
    fn store_is_write_once_and_concurrent_safe() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::new(dir.path());
        let entry = sample_entry();
        let key = "a".repeat(64);

        // Two concurrent writers: exactly one file, readable afterwards.
        std::thread::scope(|scope| {
            for _ in 0..2 {
                let store = store.clone();
                let entry = entry.clone();
                let key = key.clone();
                scope.spawn(move || store.store(&key, &entry).unwrap());
            }
        });
        let loaded = store.load(&key).unwrap();
        assert_eq!(loaded.panel_rects, entry.panel_rects);

        // Write-once: storing a different entry does not clobber.
        let other = CacheEntry::default();
        store.store(&key, &other).unwrap();
        assert_eq!(store.load(&key).unwrap().panel_rects, entry.panel_rects);

        // Corrupt file is removed on load.
        let path = dir.path().join(format!("{key}.jelc"));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(store.load(&key).is_none());
        assert!(!path.exists());
    }
}
