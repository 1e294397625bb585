//! Matrix kernels on top of faer. Row-major slices in, row-major out.
//!
//! Every routine checks whether its inputs are purely real and, if so,
//! runs the f64 kernel instead of the c64 one. The results are identical
//! up to rounding; the real path is simply four times cheaper.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use faer::Mat;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn all_real(x: &[C64]) -> bool {
    x.iter().all(|z| z.im == 0.0)
}

fn real_mat(data: &[C64], m: usize, n: usize) -> Mat<f64> {
    Mat::from_fn(m, n, |i, j| data[i * n + j].re)
}

fn complex_mat(data: &[C64], m: usize, n: usize) -> Mat<C64> {
    Mat::from_fn(m, n, |i, j| data[i * n + j])
}

fn rows_of_real(m: &Mat<f64>) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(C64::new(m[(i, j)], 0.0));
        }
    }
    out
}

fn rows_of_complex(m: &Mat<C64>) -> Vec<C64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// (m×k) · (k×n), both row-major.
pub fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    if m == 0 || n == 0 {
        return Vec::new();
    }
    if k == 0 {
        return vec![ZERO; m * n];
    }
    if m * k * n <= 4096 {
        let mut out = vec![ZERO; m * n];
        for i in 0..m {
            for l in 0..k {
                let x = a[i * k + l];
                if x == ZERO {
                    continue;
                }
                let row = &b[l * n..(l + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, y) in dst.iter_mut().zip(row) {
                    *d += x * y;
                }
            }
        }
        return out;
    }
    if all_real(a) && all_real(b) {
        let c = real_mat(a, m, k) * real_mat(b, k, n);
        rows_of_real(&c)
    } else {
        let c = complex_mat(a, m, k) * complex_mat(b, k, n);
        rows_of_complex(&c)
    }
}

fn as_matrix(t: &DenseTensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub v_dag: DenseTensor,
    /// Discarded weight: sum of dropped s² over sum of all s².
    pub truncation_error: f64,
    /// Set when the input was identically zero.
    pub degenerate_input: bool,
}

pub const DEFAULT_REL_CUTOFF: f64 = 1e-14;

/// Thin SVD keeping at most `max_keep` values, and only those above
/// `rel_cutoff · s_max`. Each kept left singular vector is rotated so that
/// its largest-magnitude entry is real and positive, which pins the phase
/// freedom and makes the factorization deterministic.
pub fn truncated_svd(mat: &DenseTensor, max_keep: Option<usize>, rel_cutoff: f64) -> Result<SvdResult> {
    let (m, n) = as_matrix(mat)?;
    let data = mat.data();
    if data.iter().all(|z| *z == ZERO) || m == 0 || n == 0 {
        return Ok(SvdResult {
            u: DenseTensor::zeros(vec![m, 0]),
            s: Vec::new(),
            v_dag: DenseTensor::zeros(vec![0, n]),
            truncation_error: 0.0,
            degenerate_input: true,
        });
    }
    let k = m.min(n);
    // u: m×k, v: n×k (A = U S V^H)
    let (u_full, s_full, v_full): (Vec<C64>, Vec<f64>, Vec<C64>) = if all_real(data) {
        let svd = real_mat(data, m, n)
            .thin_svd()
            .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))?;
        let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
        (rows_of_real(&svd.U().to_owned()), s, rows_of_real(&svd.V().to_owned()))
    } else {
        let svd = complex_mat(data, m, n)
            .thin_svd()
            .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))?;
        let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
        (rows_of_complex(&svd.U().to_owned()), s, rows_of_complex(&svd.V().to_owned()))
    };

    let total: f64 = s_full.iter().map(|x| x * x).sum();
    let smax = s_full[0];
    let mut keep = s_full.iter().take_while(|&&x| x > rel_cutoff * smax).count();
    if let Some(cap) = max_keep {
        keep = keep.min(cap);
    }
    let kept: f64 = s_full[..keep].iter().map(|x| x * x).sum();
    let truncation_error = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };

    let mut u = DenseTensor::zeros(vec![m, keep]);
    let mut v_dag = DenseTensor::zeros(vec![keep, n]);
    for c in 0..keep {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..m {
            let a = u_full[r * k + c].norm();
            if a > best_abs + 1e-14 {
                best_abs = a;
                best = r;
            }
        }
        let z = u_full[best * k + c];
        let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { C64::new(1.0, 0.0) };
        for r in 0..m {
            u.data_mut()[r * keep + c] = u_full[r * k + c] * phase;
        }
        // row c of V^H is conj(v[:, c]); it picks up the inverse phase.
        for j in 0..n {
            v_dag.data_mut()[c * n + j] = v_full[j * k + c].conj() * phase.conj();
        }
    }
    Ok(SvdResult { u, s: s_full[..keep].to_vec(), v_dag, truncation_error, degenerate_input: false })
}

/// Eigen-decomposition of a Hermitian matrix (the Hermitian part is used).
/// Eigenvalues in descending order; eigenvectors are the columns.
pub fn hermitian_eig(mat: &DenseTensor) -> Result<(Vec<f64>, DenseTensor)> {
    let (m, n) = as_matrix(mat)?;
    if m != n {
        return Err(Error::ShapeMismatch(format!("hermitian_eig of {m}×{n}")));
    }
    if n == 0 {
        return Ok((Vec::new(), DenseTensor::zeros(vec![0, 0])));
    }
    let d = mat.data();
    let herm = |i: usize, j: usize| (d[i * n + j] + d[j * n + i].conj()) * 0.5;
    let (vals, vecs): (Vec<f64>, Vec<C64>) = if all_real(d) {
        let a = Mat::<f64>::from_fn(n, n, |i, j| herm(i, j).re);
        let e = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Linalg(format!("eigh failed: {e:?}")))?;
        (e.S().column_vector().iter().copied().collect(), rows_of_real(&e.U().to_owned()))
    } else {
        let a = Mat::<C64>::from_fn(n, n, herm);
        let e = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Linalg(format!("eigh failed: {e:?}")))?;
        (e.S().column_vector().iter().map(|z| z.re).collect(), rows_of_complex(&e.U().to_owned()))
    };
    // faer returns ascending order; flip.
    let order: Vec<usize> = (0..n).rev().collect();
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = DenseTensor::from_fn(vec![n, n], |ix| vecs[ix[0] * n + order[ix[1]]]);
    Ok((values, vectors))
}

/// Full eigen-decomposition of a general square matrix (unsorted).
pub fn general_eig(mat: &DenseTensor) -> Result<(Vec<C64>, DenseTensor)> {
    let (m, n) = as_matrix(mat)?;
    if m != n {
        return Err(Error::ShapeMismatch(format!("eig of {m}×{n}")));
    }
    let a = complex_mat(mat.data(), n, n);
    let e = a.eigen().map_err(|e| Error::Linalg(format!("eig failed: {e:?}")))?;
    let vals: Vec<C64> = e.S().column_vector().iter().copied().collect();
    Ok((vals, DenseTensor::new(vec![n, n], rows_of_complex(&e.U().to_owned()))?))
}

/// Applies `f` to the eigenvalues of a Hermitian matrix: U f(Λ) U†.
pub fn hermitian_fn(mat: &DenseTensor, f: impl Fn(f64) -> f64) -> Result<DenseTensor> {
    let (vals, u) = hermitian_eig(mat)?;
    let n = vals.len();
    let mut out = DenseTensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += u.get(&[i, k]) * f(vals[k]) * u.get(&[j, k]).conj();
            }
            out.set(&[i, j], acc);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
    /// x ↦ Aᵀx, needed only for left eigenvectors.
    fn apply_transpose(&self, _x: &[C64]) -> Option<Vec<C64>> {
        None
    }
}

impl LinearMap for DenseTensor {
    fn dim(&self) -> usize {
        self.shape()[0]
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.shape()[1];
        matmul(self.data(), x, self.shape()[0], n, 1)
    }

    fn apply_transpose(&self, x: &[C64]) -> Option<Vec<C64>> {
        let (m, n) = (self.shape()[0], self.shape()[1]);
        let mut out = vec![ZERO; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += self.data()[i * n + j] * x[i];
            }
        }
        Some(out)
    }
}

/// Wraps a closure as a linear map of the given dimension.
pub struct FnMap<F: Fn(&[C64]) -> Vec<C64>> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[C64]) -> Vec<C64>> LinearMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        (self.f)(x)
    }
}

struct Transposed<'a>(&'a dyn LinearMap);

impl LinearMap for Transposed<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.0.apply_transpose(x).expect("checked before wrapping")
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: C64,
    pub vector: Vec<C64>,
    /// Second-largest Ritz value by modulus, when the Krylov space had room for one.
    pub subleading: Option<C64>,
    pub residual: f64,
    pub matvecs: usize,
}

#[derive(Clone, Debug)]
pub struct ArnoldiOptions {
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions { tol: 1e-12, krylov_dim: 40, max_restarts: 400 }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Rotates `v` so its largest-magnitude component is real and positive,
/// and normalises it.
pub fn fix_phase(v: &mut [C64]) {
    let n = vnorm(v);
    let mut best = ZERO;
    let mut best_abs = -1.0;
    for z in v.iter() {
        if z.norm() > best_abs + 1e-14 * n {
            best_abs = z.norm();
            best = *z;
        }
    }
    let phase = if best.norm() > 0.0 { best.conj() / best.norm() } else { C64::new(1.0, 0.0) };
    let s = if n > 0.0 { 1.0 / n } else { 1.0 };
    for z in v.iter_mut() {
        *z *= phase * s;
    }
}

fn default_start(n: usize) -> Vec<C64> {
    // Any fixed vector with generic overlaps works; a cheap quasi-random one.
    (0..n)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 0.618_033_988_749_895).fract();
            C64::new(1.0 + 0.5 * x, 0.25 * (1.0 - x))
        })
        .collect()
}

/// Relative residual of the dominant Ritz pair of the leading m×m block.
fn ritz_residual(h: &[Vec<C64>], m: usize, beta: f64) -> Result<f64> {
    let hm = DenseTensor::from_fn(vec![m, m], |ix| h[ix[0]][ix[1]]);
    let (vals, vecs) = general_eig(&hm)?;
    let top = (0..m).max_by(|&a, &b| vals[a].norm().partial_cmp(&vals[b].norm()).unwrap()).unwrap();
    let yn = (0..m).map(|i| vecs.get(&[i, top]).norm_sqr()).sum::<f64>().sqrt();
    Ok(beta * vecs.get(&[m - 1, top]).norm() / yn / vals[top].norm().max(1e-300))
}

/// Largest-modulus eigenpair by restarted Arnoldi. A `start` vector
/// warm-starts the iteration; the returned vector has unit norm and its
/// largest component real positive.
pub fn dominant_eigenpair(
    op: &dyn LinearMap,
    side: Side,
    start: Option<&[C64]>,
    opts: &ArnoldiOptions,
) -> Result<Eigenpair> {
    let t;
    let op: &dyn LinearMap = match side {
        Side::Right => op,
        Side::Left => {
            if op.apply_transpose(&vec![ZERO; op.dim()]).is_none() {
                return Err(Error::UnsupportedParameter(
                    "left eigenvector requested from a map without a transpose".into(),
                ));
            }
            t = Transposed(op);
            &t
        }
    };
    let n = op.dim();
    if n == 0 {
        return Err(Error::ShapeMismatch("eigenproblem of dimension 0".into()));
    }
    let mut v: Vec<C64> = match start {
        Some(s) if s.len() == n && vnorm(s) > 0.0 => s.to_vec(),
        _ => default_start(n),
    };
    let nv = vnorm(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    let kdim = opts.krylov_dim.max(2).min(n);
    let mut best_residual = f64::INFINITY;
    let mut matvecs = 0usize;
    for _restart in 0..opts.max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![v.clone()];
        let mut h = vec![vec![ZERO; kdim]; kdim + 1];
        let mut m = kdim;
        let mut beta = 0.0;
        let mut breakdown = false;
        for j in 0..kdim {
            let mut w = op.apply(&basis[j]);
            matvecs += 1;
            let wn0 = vnorm(&w);
            for _pass in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, &w);
                    h[i][j] += c;
                    for (wz, qz) in w.iter_mut().zip(q) {
                        *wz -= c * qz;
                    }
                }
            }
            beta = vnorm(&w);
            h[j + 1][j] = C64::new(beta, 0.0);
            if beta <= 1e-13 * wn0.max(1e-300) || j + 1 == n {
                m = j + 1;
                breakdown = beta <= 1e-13 * wn0.max(1e-300);
                break;
            }
            // Cheap early exit: warm starts often converge in a few steps.
            if (j + 1) % 4 == 0 && j + 1 < kdim && ritz_residual(&h, j + 1, beta)? <= opts.tol {
                m = j + 1;
                break;
            }
            if j + 1 < kdim {
                w.iter_mut().for_each(|z| *z /= beta);
                basis.push(w);
            }
        }
        let hm = DenseTensor::from_fn(vec![m, m], |ix| h[ix[0]][ix[1]]);
        let (vals, vecs) = general_eig(&hm)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[b].norm().partial_cmp(&vals[a].norm()).unwrap());
        let top = order[0];
        let lambda = vals[top];
        let y: Vec<C64> = (0..m).map(|i| vecs.get(&[i, top])).collect();
        let yn = vnorm(&y);
        let mut x = vec![ZERO; n];
        for (i, q) in basis.iter().take(m).enumerate() {
            let c = y[i] / yn;
            for (xz, qz) in x.iter_mut().zip(q) {
                *xz += c * qz;
            }
        }
        let residual = if breakdown { 0.0 } else { beta * (y[m - 1] / yn).norm() };
        let scale = lambda.norm().max(1e-300);
        best_residual = best_residual.min(residual / scale);
        let subleading = order.get(1).map(|&i| vals[i]);
        if residual <= opts.tol * scale || breakdown || m == n {
            fix_phase(&mut x);
            return Ok(Eigenpair { value: lambda, vector: x, subleading, residual: residual / scale, matvecs });
        }
        let xn = vnorm(&x);
        v = x.into_iter().map(|z| z / xn).collect();
    }
    Err(Error::IterationLimit { residual: best_residual })
}
