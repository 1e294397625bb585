//! Exact diagonalisation of small periodic clusters: an independent
//! reference for the tensor-network code. Only the model definition and
//! the generic dense/tridiagonal eigensolvers are shared with the rest of
//! the crate.

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::tensor::DenseTensor;
use faer::Mat;
use num_complex::Complex64 as C64;
use std::path::PathBuf;

/// Environment variable naming the directory used to cache ED results.
pub const CACHE_ENV: &str = "SPINNET_CACHE_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lattice {
    Ring(usize),
    /// Lx × Ly with periodic boundaries; site index y·Lx + x.
    Torus(usize, usize),
}

impl Lattice {
    pub fn sites(&self) -> usize {
        match *self {
            Lattice::Ring(n) => n,
            Lattice::Torus(lx, ly) => lx * ly,
        }
    }

    pub fn bonds(&self) -> Vec<(usize, usize)> {
        match *self {
            Lattice::Ring(n) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            Lattice::Torus(lx, ly) => {
                let mut b = Vec::new();
                for y in 0..ly {
                    for x in 0..lx {
                        let s = y * lx + x;
                        b.push((s, y * lx + (x + 1) % lx));
                        b.push((s, ((y + 1) % ly) * lx + x));
                    }
                }
                b
            }
        }
    }

    /// 0 for sublattice a, 1 for b.
    pub fn parity(&self, s: usize) -> usize {
        match *self {
            Lattice::Ring(_) => s % 2,
            Lattice::Torus(lx, _) => (s % lx + s / lx) % 2,
        }
    }

    fn key(&self) -> String {
        match *self {
            Lattice::Ring(n) => format!("ring{n}"),
            Lattice::Torus(lx, ly) => format!("torus{lx}x{ly}"),
        }
    }
}

/// The many-body Hamiltonian in the σz basis; real for both model families.
pub struct Hamiltonian {
    n: usize,
    diag: Vec<f64>,
    flips: Vec<(usize, f64)>,
    pair_flips: Vec<(usize, f64)>,
}

impl Hamiltonian {
    pub fn new(model: &ModelSpec, lattice: Lattice, bias: f64) -> Result<Self> {
        let n = lattice.sites();
        if n > 24 {
            return Err(Error::UnsupportedParameter(format!("{n} sites is beyond exact diagonalisation")));
        }
        let bit = |s: usize| 1usize << (n - 1 - s);
        let (pa, pb) = model.bias_pattern();
        let bonds = lattice.bonds();
        let zz = match model.kind {
            ModelKind::Ising => model.coupling_j,
            ModelKind::Xxz => model.coupling_j * model.anisotropy,
        };
        let dim = 1usize << n;
        let mut diag = vec![0.0; dim];
        for (s, d) in diag.iter_mut().enumerate() {
            let z = |i: usize| if s & bit(i) == 0 { 1.0 } else { -1.0 };
            let mut e = 0.0;
            for &(i, j) in &bonds {
                e += zz * z(i) * z(j);
            }
            for i in 0..n {
                let sign = if lattice.parity(i) == 0 { pa } else { pb };
                e -= bias * sign * z(i);
            }
            *d = e;
        }
        let mut flips = Vec::new();
        let mut pair_flips = Vec::new();
        match model.kind {
            ModelKind::Ising => {
                if model.field_h != 0.0 {
                    flips = (0..n).map(|i| (bit(i), model.field_h)).collect();
                }
            }
            ModelKind::Xxz => {
                // σxσx + σyσy = 2(σ⁺σ⁻ + σ⁻σ⁺): flips anti-aligned pairs.
                pair_flips = bonds.iter().map(|&(i, j)| (bit(i) | bit(j), 2.0 * model.coupling_j)).collect();
            }
        }
        Ok(Hamiltonian { n, diag, flips, pair_flips })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, (d, x)) in out.iter_mut().zip(self.diag.iter().zip(v)) {
            *o = d * x;
        }
        for &(mask, h) in &self.flips {
            for s in 0..v.len() {
                out[s ^ mask] += h * v[s];
            }
        }
        for &(mask, c) in &self.pair_flips {
            for s in 0..v.len() {
                let m = s & mask;
                if m != 0 && m != mask {
                    out[s ^ mask] += c * v[s];
                }
            }
        }
    }

    fn dense(&self) -> Mat<f64> {
        let d = self.dim();
        let mut m = Mat::<f64>::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..d {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in against {
            let c = dot(q, w);
            for (x, y) in w.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

fn normalize(w: &mut [f64]) -> f64 {
    let n = dot(w, w).sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest eigenpair of `h` in the orthogonal complement of `deflate`, by
/// restarted Lanczos with full re-orthogonalisation.
pub fn lowest_eigenpair(h: &Hamiltonian, deflate: &[Vec<f64>], tol: f64) -> Result<(f64, Vec<f64>)> {
    let dim = h.dim();
    if dim <= 512 {
        let e = h.dense().self_adjoint_eigen(faer::Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let vals: Vec<f64> = e.S().column_vector().iter().copied().collect();
        // Pick the lowest eigenvector with no overlap on the deflated space.
        for k in 0..dim {
            let v: Vec<f64> = (0..dim).map(|i| e.U()[(i, k)]).collect();
            if deflate.iter().all(|q| dot(q, &v).abs() < 1e-6) {
                return Ok((vals[k], v));
            }
        }
        return Err(Error::Linalg("deflated space exhausted".into()));
    }
    let kmax = if dim > 1 << 18 { 40 } else { 80 };
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.37 * ((i as f64 * 0.618_033_988_749_9).fract() - 0.5)).collect();
    orthogonalize(&mut v, deflate);
    normalize(&mut v);
    let mut best = f64::INFINITY;
    let mut w = vec![0.0; dim];
    for _restart in 0..200 {
        let mut basis = vec![v.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..kmax {
            h.apply(&basis[j], &mut w);
            orthogonalize(&mut w, deflate);
            alpha.push(dot(&basis[j], &w));
            orthogonalize(&mut w, &basis);
            let b = normalize(&mut w);
            if b < 1e-12 || j + 1 == kmax {
                beta.push(b);
                break;
            }
            beta.push(b);
            basis.push(w.clone());
        }
        let k = alpha.len();
        let t = Mat::<f64>::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let e = t.self_adjoint_eigen(faer::Side::Lower).map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let theta = e.S().column_vector()[0];
        let y: Vec<f64> = (0..k).map(|i| e.U()[(i, 0)]).collect();
        let residual = (beta[k - 1] * y[k - 1]).abs();
        let mut x = vec![0.0; dim];
        for (c, q) in y.iter().zip(&basis) {
            for (a, b) in x.iter_mut().zip(q) {
                *a += c * b;
            }
        }
        normalize(&mut x);
        best = best.min(residual);
        if residual <= tol * theta.abs().max(1.0) || beta[k - 1] < 1e-12 {
            return Ok((theta, x));
        }
        v = x;
    }
    Err(Error::IterationLimit { residual: best })
}

#[derive(Clone, Debug)]
pub struct EdResult {
    pub sites: usize,
    pub bonds: usize,
    /// Total ground-state energy of the unbiased Hamiltonian.
    pub energy: f64,
    pub gap: f64,
    /// Ground space degenerate to within 1e-10; the state was then picked
    /// with a fixed 1e-10 pinning field.
    pub degenerate: bool,
    pub state: Vec<f64>,
}

impl EdResult {
    pub fn energy_per_site(&self) -> f64 {
        self.energy / self.sites as f64
    }

    pub fn energy_per_bond(&self) -> f64 {
        self.energy / self.bonds as f64
    }
}

pub const DEGENERACY_GAP: f64 = 1e-10;
pub const PINNING_BIAS: f64 = 1e-10;

fn cache_path(model: &ModelSpec, lattice: Lattice, tol: f64) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    let key = format!(
        "{:?}_J{:e}_h{:e}_D{:e}_b{:e}_{}_tol{:e}",
        model.kind,
        model.coupling_j,
        model.field_h,
        model.anisotropy,
        model.symmetry_bias,
        lattice.key(),
        tol
    );
    Some(PathBuf::from(dir).join(format!("ed_{key}.tncp")))
}

pub fn ground_state(model: &ModelSpec, lattice: Lattice, tol: f64) -> Result<EdResult> {
    model.validate()?;
    let path = cache_path(model, lattice, tol);
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        if let Ok(cp) = Checkpoint::load(p) {
            let m = &cp.meta;
            if let (Some(e), Some(g), Some(d), Some(t)) =
                (m["energy"].as_f64(), m["gap"].as_f64(), m["degenerate"].as_bool(), cp.tensors.first())
            {
                return Ok(EdResult {
                    sites: lattice.sites(),
                    bonds: lattice.bonds().len(),
                    energy: e,
                    gap: g,
                    degenerate: d,
                    state: t.data().iter().map(|z| z.re).collect(),
                });
            }
        }
    }
    let h = Hamiltonian::new(model, lattice, model.symmetry_bias)?;
    let (e0, v0) = lowest_eigenpair(&h, &[], tol)?;
    let (e1, _) = lowest_eigenpair(&h, std::slice::from_ref(&v0), tol)?;
    let gap = e1 - e0;
    let degenerate = gap < DEGENERACY_GAP;
    let state = if degenerate && model.symmetry_bias == 0.0 {
        let pinned = Hamiltonian::new(model, lattice, PINNING_BIAS)?;
        lowest_eigenpair(&pinned, &[], tol)?.1
    } else {
        v0
    };
    let out = EdResult { sites: lattice.sites(), bonds: lattice.bonds().len(), energy: e0, gap, degenerate, state };
    if let Some(p) = path {
        let _ = std::fs::create_dir_all(p.parent().unwrap());
        let cp = Checkpoint {
            meta: serde_json::json!({"energy": out.energy, "gap": out.gap, "degenerate": out.degenerate}),
            tensors: vec![DenseTensor::from_real(vec![out.state.len()], &out.state)?],
        };
        if let Err(e) = cp.save(&p) {
            log::warn!("could not write ED cache {}: {e}", p.display());
        }
    }
    Ok(out)
}

/// Reduced density matrix of `sites` (in the given order, first site on
/// the slow index) from a real state vector on `n` sites.
pub fn exact_rdm(state: &[f64], n: usize, sites: &[usize]) -> DenseTensor {
    let k = sites.len();
    let dk = 1usize << k;
    let bit = |s: usize| 1usize << (n - 1 - s);
    let keep_mask: usize = sites.iter().map(|&s| bit(s)).sum();
    let sub = |s: usize| -> usize {
        sites.iter().enumerate().map(|(p, &site)| if s & bit(site) != 0 { 1 << (k - 1 - p) } else { 0 }).sum()
    };
    let mut rho = vec![0.0; dk * dk];
    // Group basis states by their environment configuration.
    let env_mask = !keep_mask & ((1usize << n) - 1);
    let mut by_env: std::collections::HashMap<usize, Vec<(usize, f64)>> = std::collections::HashMap::new();
    for (s, &a) in state.iter().enumerate() {
        if a != 0.0 {
            by_env.entry(s & env_mask).or_default().push((sub(s), a));
        }
    }
    for group in by_env.values() {
        for &(i, a) in group {
            for &(j, b) in group {
                rho[i * dk + j] += a * b;
            }
        }
    }
    DenseTensor::new(vec![dk, dk], rho.into_iter().map(|x| C64::new(x, 0.0)).collect()).unwrap()
}

/// Ground-state energy per site of the transverse-field Ising chain from
/// the free-fermion solution. `n = None` is the infinite chain; a finite n
/// is the periodic ring, whose ground state lies in the even-parity
/// sector with antiperiodic fermion momenta k = π(2j+1)/n.
pub fn jordan_wigner_ising_energy(j: f64, h: f64, n: Option<usize>) -> f64 {
    let eps = |k: f64| (j * j + h * h - 2.0 * j.abs() * h.abs() * k.cos()).max(0.0).sqrt();
    match n {
        Some(n) => -(0..n).map(|m| eps(std::f64::consts::PI * (2 * m + 1) as f64 / n as f64)).sum::<f64>() / n as f64,
        None => {
            // Midpoint rule on [0, π]; the integrand is smooth except for a
            // kink at k = 0 when |h| = |J|, which costs O(1/M²).
            let m = 200_000;
            let dk = std::f64::consts::PI / m as f64;
            -(0..m).map(|i| eps((i as f64 + 0.5) * dk)).sum::<f64>() * dk / std::f64::consts::PI
        }
    }
}
