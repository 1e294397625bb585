//! Binary persistence.
//!
//! A tensor is `b"TNS1"`, the rank as u64 LE, each extent as u64 LE, then
//! the entries in row-major order as interleaved (re, im) f64 LE pairs.
//!
//! A checkpoint is `b"TNCP"`, a u64 LE byte length, that many bytes of
//! UTF-8 JSON metadata, a u64 LE tensor count, then the tensors.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use num_complex::Complex64 as C64;
use std::io::{Read, Write};
use std::path::Path;

const TENSOR_MAGIC: &[u8; 4] = b"TNS1";
const CHECKPOINT_MAGIC: &[u8; 4] = b"TNCP";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_tensor(w: &mut impl Write, t: &DenseTensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.rank() as u64).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * t.len());
    for z in t.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Checkpoint(format!("bad tensor magic {magic:?}")));
    }
    let rank = read_u64(r)? as usize;
    if rank > 64 {
        return Err(Error::Checkpoint(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Checkpoint("extent product overflows".into()))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        data.push(C64::new(re, im));
    }
    DenseTensor::new(shape, data)
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<DenseTensor>,
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for t in &self.tensors {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad checkpoint magic {magic:?}")));
        }
        let len = read_u64(r)? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let meta = serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = read_u64(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            tensors.push(read_tensor(r)?);
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write(&mut f)?;
            f.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f)
    }
}

/// Stores a real vector (bond weights, spectra) as a rank-1 tensor.
pub fn vector_tensor(v: &[f64]) -> DenseTensor {
    DenseTensor::from_real(vec![v.len()], v).expect("length matches")
}

pub fn tensor_vector(t: &DenseTensor) -> Vec<f64> {
    t.data().iter().map(|z| z.re).collect()
}
