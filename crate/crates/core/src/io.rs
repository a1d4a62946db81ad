//! Binary sample and estimate files, little-endian throughout.
//!
//! Sample file: `ISMP | u32 version | u32 d | u32 dims[d] | u64 n`, then `n`
//! records of `f64 y` followed by the covariate entries in storage order.
//!
//! Estimate file: `ISET | u32 version | u32 d | u32 dims[d] | u32 ranks[d]`,
//! then `A` and the body tensor `B` in storage order, `u64 m` and the `m`
//! reduced coefficients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{IsletError, Result};
use crate::source::{check_range, RegressionSample, SampleSource};
use crate::tensor::{DenseTensor, Vector};

const SAMPLE_MAGIC: &[u8; 4] = b"ISMP";
const ESTIMATE_MAGIC: &[u8; 4] = b"ISET";
const VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    let mut b = [0u8; 8];
    for v in out {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(())
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(IsletError::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(IsletError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_dims(r: &mut impl Read) -> Result<Vec<usize>> {
    let d = read_u32(r)? as usize;
    if d == 0 || d > 16 {
        return Err(IsletError::Format(format!("implausible tensor order {d}")));
    }
    let dims = (0..d).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if dims.iter().any(|&p| p == 0) {
        return Err(IsletError::Format("zero-length mode".into()));
    }
    Ok(dims)
}

/// Writes every sample of `src` to `path`.
pub fn write_samples(path: &Path, src: &dyn SampleSource) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SAMPLE_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(src.dims().len() as u32).to_le_bytes())?;
    for &p in src.dims() {
        w.write_all(&(p as u32).to_le_bytes())?;
    }
    w.write_all(&(src.len() as u64).to_le_bytes())?;
    src.visit(0..src.len(), &mut |_, s| {
        w.write_all(&s.y.to_le_bytes())?;
        write_f64s(&mut w, s.x.data())
    })?;
    w.flush()?;
    Ok(())
}

/// Sample file read from disk on every visit.
#[derive(Clone, Debug)]
pub struct FileSource {
    path: PathBuf,
    dims: Vec<usize>,
    n: usize,
    header_len: u64,
}

impl FileSource {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);
        read_header(&mut r, SAMPLE_MAGIC)?;
        let dims = read_dims(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let header_len = 20 + 4 * dims.len() as u64;
        let record = 8 * (1 + dims.iter().product::<usize>()) as u64;
        if header_len + record * n as u64 != file_len {
            return Err(IsletError::Format(format!(
                "file holds {file_len} bytes, header promises {} samples of {record} bytes",
                n
            )));
        }
        Ok(Self {
            path: path.to_path_buf(),
            dims,
            n,
            header_len,
        })
    }
}

impl SampleSource for FileSource {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn len(&self) -> usize {
        self.n
    }

    fn visit(
        &self,
        range: Range<usize>,
        f: &mut dyn FnMut(usize, &RegressionSample) -> Result<()>,
    ) -> Result<()> {
        check_range(self, &range)?;
        let mut file = File::open(&self.path)?;
        let record = 8 * (1 + self.dims.iter().product::<usize>()) as u64;
        file.seek(SeekFrom::Start(self.header_len + record * range.start as u64))?;
        let mut r = BufReader::new(file);
        let mut buf = RegressionSample {
            y: 0.0,
            x: DenseTensor::zeros(&self.dims),
        };
        for i in range {
            let mut y = [0.0];
            read_f64s(&mut r, &mut y)?;
            buf.y = y[0];
            read_f64s(&mut r, buf.x.data_mut())?;
            f(i, &buf)?;
        }
        Ok(())
    }
}

/// Serializable result of a regular fit.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord {
    pub a_hat: DenseTensor,
    pub b_hat: DenseTensor,
    pub gamma: Vector,
}

impl EstimateRecord {
    pub fn ranks(&self) -> &[usize] {
        self.b_hat.dims()
    }
}

pub fn write_estimate(path: &Path, est: &EstimateRecord) -> Result<()> {
    if est.a_hat.order() != est.b_hat.order() {
        return Err(IsletError::arg("estimate and body tensor orders differ"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ESTIMATE_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(est.a_hat.order() as u32).to_le_bytes())?;
    for &p in est.a_hat.dims().iter().chain(est.b_hat.dims()) {
        w.write_all(&(p as u32).to_le_bytes())?;
    }
    write_f64s(&mut w, est.a_hat.data())?;
    write_f64s(&mut w, est.b_hat.data())?;
    w.write_all(&(est.gamma.len() as u64).to_le_bytes())?;
    write_f64s(&mut w, est.gamma.as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn read_estimate(path: &Path) -> Result<EstimateRecord> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r, ESTIMATE_MAGIC)?;
    let d = read_u32(&mut r)? as usize;
    if d == 0 || d > 16 {
        return Err(IsletError::Format(format!("implausible tensor order {d}")));
    }
    let mut sizes = Vec::with_capacity(2 * d);
    for _ in 0..2 * d {
        sizes.push(read_u32(&mut r)? as usize);
    }
    let (dims, ranks) = sizes.split_at(d);
    let mut a = DenseTensor::new(dims.to_vec(), vec![0.0; dims.iter().product()])
        .map_err(|e| IsletError::Format(e.to_string()))?;
    read_f64s(&mut r, a.data_mut())?;
    let mut b = DenseTensor::new(ranks.to_vec(), vec![0.0; ranks.iter().product()])
        .map_err(|e| IsletError::Format(e.to_string()))?;
    read_f64s(&mut r, b.data_mut())?;
    let m = read_u64(&mut r)? as usize;
    let mut gamma = vec![0.0; m];
    read_f64s(&mut r, &mut gamma)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(IsletError::Format("trailing bytes after estimate".into()));
    }
    Ok(EstimateRecord {
        a_hat: a,
        b_hat: b,
        gamma: Vector::from_vec(gamma),
    })
}
