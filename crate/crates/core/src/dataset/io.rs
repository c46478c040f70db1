//! Little-endian binary dataset container with a JSON side-car.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{Dataset, DatasetError, DatasetMeta, Normalization, Sample, SamplingBounds};
use crate::problem::{ModelKind, ParamPoint};

pub const MAGIC: &[u8; 8] = b"COPFDS01";

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn idx(&mut self, v: &[usize]) {
        self.u64(v.len());
        v.iter().for_each(|&x| self.u64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> DatasetError {
    DatasetError::SchemaMismatch("truncated file".into())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DatasetError> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let s = self.buf.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<usize, DatasetError> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(v).map_err(|_| truncated())
    }
    fn f64(&mut self) -> Result<f64, DatasetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DatasetError> {
        // Guard the allocation against corrupt counts.
        if n > self.buf.len() / 8 {
            return Err(truncated());
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn idx(&mut self, limit: usize) -> Result<Vec<usize>, DatasetError> {
        let n = self.u64()?;
        if n > limit {
            return Err(DatasetError::SchemaMismatch("split larger than dataset".into()));
        }
        (0..n)
            .map(|_| {
                let i = self.u64()?;
                if i >= limit {
                    return Err(DatasetError::SchemaMismatch(format!("split index {i} out of range")));
                }
                Ok(i)
            })
            .collect()
    }
}

/// Path of the JSON side-car next to `path`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn to_bytes(ds: &Dataset) -> Vec<u8> {
    let m = &ds.meta;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u64(m.case.len());
    w.0.extend_from_slice(m.case.as_bytes());
    w.0.push(match m.model {
        ModelKind::Qc => 0,
        ModelKind::Cdf => 1,
    });
    for v in [m.n_buses, m.l_tilde, m.m_tilde, ds.samples.len(), m.k1, m.accepted1, m.k2, m.rejected] {
        w.u64(v);
    }
    w.0.extend_from_slice(&m.seed.to_le_bytes());
    w.f64(m.eps);
    let b = &ds.bounds;
    for v in [&b.gamma_lo, &b.gamma_hi, &b.xi_lo, &b.xi_hi] {
        w.f64s(v);
    }
    w.idx(&ds.train);
    w.idx(&ds.test);
    w.f64s(&ds.norm.shift);
    w.f64s(&ds.norm.scale);
    w.f64(ds.norm.out_scale);
    for s in &ds.samples {
        w.f64s(&s.point.gamma);
        w.f64s(&s.point.xi);
        w.f64s(&s.lam_tilde);
        w.f64s(&s.mu_tilde);
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<Dataset, DatasetError> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(8).map_err(|_| DatasetError::SchemaMismatch("missing header".into()))?;
    if magic != MAGIC {
        return Err(DatasetError::SchemaMismatch(format!(
            "unknown version {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = r.u64()?;
    let case = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| DatasetError::SchemaMismatch("case name is not UTF-8".into()))?;
    let model = match r.take(1)?[0] {
        0 => ModelKind::Qc,
        1 => ModelKind::Cdf,
        k => return Err(DatasetError::SchemaMismatch(format!("unknown model tag {k}"))),
    };
    let n_buses = r.u64()?;
    let l = r.u64()?;
    let mt = r.u64()?;
    let count = r.u64()?;
    let k1 = r.u64()?;
    let accepted1 = r.u64()?;
    let k2 = r.u64()?;
    let rejected = r.u64()?;
    let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let eps = r.f64()?;
    let bounds = SamplingBounds {
        gamma_lo: r.f64s(l)?,
        gamma_hi: r.f64s(l)?,
        xi_lo: r.f64s(mt)?,
        xi_hi: r.f64s(mt)?,
    };
    let train = r.idx(count)?;
    let test = r.idx(count)?;
    let norm = Normalization {
        shift: r.f64s(l + mt)?,
        scale: r.f64s(l + mt)?,
        out_scale: r.f64()?,
    };
    let mut samples = Vec::with_capacity(count.min(buf.len() / 8));
    for _ in 0..count {
        let gamma = r.f64s(l)?;
        let xi = r.f64s(mt)?;
        samples.push(Sample {
            point: ParamPoint { gamma, xi },
            lam_tilde: r.f64s(l)?,
            mu_tilde: r.f64s(mt)?,
        });
    }
    if r.pos != buf.len() {
        return Err(DatasetError::SchemaMismatch("trailing bytes".into()));
    }
    if test.is_empty() {
        warn!("dataset has no test samples");
    }
    Ok(Dataset {
        samples,
        bounds,
        train,
        test,
        norm,
        meta: DatasetMeta {
            case,
            model,
            n_buses,
            l_tilde: l,
            m_tilde: mt,
            seed,
            eps,
            k1,
            accepted1,
            k2,
            rejected,
        },
    })
}

pub fn save(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, to_bytes(ds))?;
    let side = serde_json::json!({
        "magic": String::from_utf8_lossy(MAGIC),
        "meta": ds.meta,
        "samples": ds.samples.len(),
        "train": ds.train.len(),
        "test": ds.test.len(),
        "bounds": ds.bounds,
    });
    fs::write(meta_path(path), serde_json::to_string_pretty(&side).expect("json") + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    from_bytes(&fs::read(path)?)
}
