//! Dense complex tensors stored row-major (last axis fastest).

use crate::error::{Error, Result};
use crate::linalg;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
    labels: Option<Vec<String>>,
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data, labels: None })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DenseTensor { shape, data: vec![C64::new(0.0, 0.0); n], labels: None }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        DenseTensor { shape, data, labels: None }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |i| if i[0] == i[1] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(vec![n, n], |i| if i[0] == i[1] { C64::new(values[i[0]], 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a rank-{} tensor",
                labels.len(),
                self.shape.len()
            )));
        }
        self.labels = Some(labels.iter().map(|s| s.to_string()).collect());
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &k) in idx.iter().enumerate() {
            debug_assert!(k < self.shape[i]);
            off = off * self.shape[i] + k;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(DenseTensor { shape, data: self.data.clone(), labels: None })
    }

    pub fn into_reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        self.labels = None;
        Ok(self)
    }

    /// New axis `i` is old axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r {
            return Err(Error::ShapeMismatch(format!("permutation {perm:?} for rank {r}")));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r {
                return Err(Error::AxisOutOfRange { axis: p, rank: r });
            }
            if seen[p] {
                return Err(Error::ShapeMismatch(format!("repeated axis in {perm:?}")));
            }
            seen[p] = true;
        }
        let labels = self.labels.as_ref().map(|l| perm.iter().map(|&p| l[p].clone()).collect());
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            let mut out = self.clone();
            out.labels = labels;
            return Ok(out);
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides_of(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let n = self.data.len();
        let mut data = Vec::with_capacity(n);
        if n > 0 {
            // Odometer over the output with the innermost axis unrolled.
            let last = r - 1;
            let inner = new_shape[last];
            let inner_stride = src_strides[last];
            let mut idx = vec![0usize; r];
            let mut base = 0usize;
            let outer = n / inner;
            for _ in 0..outer {
                let mut off = base;
                for _ in 0..inner {
                    data.push(self.data[off]);
                    off += inner_stride;
                }
                for ax in (0..last).rev() {
                    idx[ax] += 1;
                    base += src_strides[ax];
                    if idx[ax] < new_shape[ax] {
                        break;
                    }
                    base -= src_strides[ax] * new_shape[ax];
                    idx[ax] = 0;
                }
            }
        }
        Ok(DenseTensor { shape: new_shape, data, labels })
    }

    pub fn conj(&self) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * s).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn scale_real(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} + {:?}", self.shape, other.shape)));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            labels: self.labels.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Scales to unit Frobenius norm and returns the old norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.scale_real(1.0 / n);
        }
        n
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn trace(&self) -> Result<C64> {
        if self.rank() != 2 || self.shape[0] != self.shape[1] {
            return Err(Error::ShapeMismatch(format!("trace of {:?}", self.shape)));
        }
        let n = self.shape[0];
        Ok((0..n).map(|i| self.data[i * n + i]).sum())
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch(format!("adjoint of rank-{} tensor", self.rank())));
        }
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, other, &[(1, 0)])
    }

    /// Scales axis `axis` entrywise by `w` (a diagonal matrix on that leg).
    pub fn scale_axis(&self, axis: usize, w: &[f64]) -> Result<Self> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange { axis, rank: self.rank() });
        }
        if w.len() != self.shape[axis] {
            return Err(Error::ShapeMismatch(format!(
                "weight of length {} on axis of extent {}",
                w.len(),
                self.shape[axis]
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let ext = self.shape[axis];
        let mut out = self.clone();
        for (i, z) in out.data.iter_mut().enumerate() {
            *z *= w[(i / inner) % ext];
        }
        Ok(out)
    }

    /// Embeds into a larger zero tensor (each extent may only grow).
    pub fn pad_to(&self, shape: &[usize]) -> Result<Self> {
        if shape.len() != self.rank() || shape.iter().zip(&self.shape).any(|(n, o)| n < o) {
            return Err(Error::ShapeMismatch(format!("cannot pad {:?} to {shape:?}", self.shape)));
        }
        let mut out = DenseTensor::zeros(shape.to_vec());
        let mut idx = vec![0usize; self.rank()];
        for &v in &self.data {
            out.set(&idx, v);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < self.shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(out)
    }

    /// Keeps only the leading `keep[i]` entries along each axis.
    pub fn truncate_to(&self, keep: &[usize]) -> Result<Self> {
        if keep.len() != self.rank() || keep.iter().zip(&self.shape).any(|(k, o)| k > o) {
            return Err(Error::ShapeMismatch(format!("cannot cut {:?} to {keep:?}", self.shape)));
        }
        Ok(DenseTensor::from_fn(keep.to_vec(), |i| self.get(i)))
    }
}

/// Contracts `a` and `b` over the listed `(axis_of_a, axis_of_b)` pairs.
/// Result axes: remaining axes of `a` in order, then remaining axes of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let (ra, rb) = (a.rank(), b.rank());
    let mut used_a = vec![false; ra];
    let mut used_b = vec![false; rb];
    for &(i, j) in pairs {
        if i >= ra {
            return Err(Error::AxisOutOfRange { axis: i, rank: ra });
        }
        if j >= rb {
            return Err(Error::AxisOutOfRange { axis: j, rank: rb });
        }
        if used_a[i] || used_b[j] {
            return Err(Error::ShapeMismatch(format!("axis paired twice in {pairs:?}")));
        }
        if a.shape[i] != b.shape[j] {
            return Err(Error::ShapeMismatch(format!(
                "contracted extents differ: a[{i}]={} vs b[{j}]={}",
                a.shape[i], b.shape[j]
            )));
        }
        used_a[i] = true;
        used_b[j] = true;
    }
    let free_a: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..rb).filter(|&j| !used_b[j]).collect();

    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|p| p.0));
    let mut perm_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    perm_b.extend(free_b.iter().copied());

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
    let n: usize = free_b.iter().map(|&j| b.shape[j]).product();

    let ap = a.permute(&perm_a)?;
    let bp = b.permute(&perm_b)?;
    let data = linalg::matmul(&ap.data, &bp.data, m, k, n);

    let mut shape: Vec<usize> = free_a.iter().map(|&i| a.shape[i]).collect();
    shape.extend(free_b.iter().map(|&j| b.shape[j]));
    let labels = match (&a.labels, &b.labels) {
        (Some(la), Some(lb)) => {
            let mut l: Vec<String> = free_a.iter().map(|&i| la[i].clone()).collect();
            l.extend(free_b.iter().map(|&j| lb[j].clone()));
            Some(l)
        }
        _ => None,
    };
    Ok(DenseTensor { shape, data, labels })
}

/// Contracts every pair of axes that carry the same label.
pub fn contract_labeled(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (Some(la), Some(lb)) = (&a.labels, &b.labels) else {
        return Err(Error::ShapeMismatch("labelled contraction needs labels on both operands".into()));
    };
    let pairs: Vec<(usize, usize)> = la
        .iter()
        .enumerate()
        .filter_map(|(i, l)| lb.iter().position(|m| m == l).map(|j| (i, j)))
        .collect();
    contract(a, b, &pairs)
}

/// Kronecker product of two matrices, `a` on the slow index.
pub fn kron(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::ShapeMismatch("kron expects matrices".into()));
    }
    let (p, q) = (a.shape[0], a.shape[1]);
    let (r, s) = (b.shape[0], b.shape[1]);
    Ok(DenseTensor::from_fn(vec![p * r, q * s], |i| {
        a.get(&[i[0] / r, i[1] / s]) * b.get(&[i[0] % r, i[1] % s])
    }))
}
