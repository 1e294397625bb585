//! Infinite chains: a translation-invariant MPS evolved by MPO factors with
//! transfer-matrix projection, and two-site iTEBD.

use crate::checkpoint::{tensor_vector, vector_tensor, Checkpoint};
use crate::entanglement::{StateData, CLIP};
use crate::error::{Error, Result};
use crate::evolution::{drive, random_entry, ConvergenceReport, InitKind, Probe, TimeStepSchedule};
use crate::linalg::{dominant_eigenpair, hermitian_eig, truncated_svd, ArnoldiOptions, FnMap, Side};
use crate::models::{bond_hamiltonian, evolution_mpo, exact_gate, BondLabel, ModelSpec, MpoTensor, SublatticeFrame};
use crate::tensor::DenseTensor;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Singular values below this fraction of the largest are dropped.
pub const LAMBDA_CUTOFF: f64 = 1e-12;

/// Residual targets for the transfer-matrix fixed points: the projection
/// is self-correcting under repeated steps, measurements are not.
const PROJECTION_TOL: f64 = 1e-10;
const MEASURE_TOL: f64 = 1e-12;

/// A gap ratio |λ₂/λ₁| above this is reported as a degenerate transfer matrix.
pub const GAP_COLLAPSE: f64 = 1.0 - 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMethod {
    TiMps,
    Tebd,
}

fn split_mats(a: &DenseTensor) -> [DenseTensor; 2] {
    let (l, r) = (a.shape()[0], a.shape()[1]);
    [0, 1].map(|s| DenseTensor::from_fn(vec![l, r], |ix| a.get(&[ix[0], ix[1], s])))
}

fn join_mats(m: &[DenseTensor; 2]) -> DenseTensor {
    let (l, r) = (m[0].shape()[0], m[0].shape()[1]);
    DenseTensor::from_fn(vec![l, r, 2], |ix| m[ix[2]].get(&[ix[0], ix[1]]))
}

fn as_matrix(x: &[C64], n: usize) -> DenseTensor {
    DenseTensor::new(vec![n, n], x.to_vec()).expect("square")
}

/// X ↦ Σ_k M_k X M_k† on n×n matrices.
fn right_transfer(mats: &[DenseTensor], x: &DenseTensor) -> DenseTensor {
    let mut out = DenseTensor::zeros(vec![mats[0].shape()[0], mats[0].shape()[0]]);
    for m in mats {
        let t = m.matmul(x).unwrap().matmul(&m.adjoint().unwrap()).unwrap();
        out = out.add(&t).unwrap();
    }
    out
}

/// X ↦ Σ_k M_k† X M_k.
fn left_transfer(mats: &[DenseTensor], x: &DenseTensor) -> DenseTensor {
    let mut out = DenseTensor::zeros(vec![mats[0].shape()[1], mats[0].shape()[1]]);
    for m in mats {
        let t = m.adjoint().unwrap().matmul(x).unwrap().matmul(m).unwrap();
        out = out.add(&t).unwrap();
    }
    out
}

fn hermitize(x: &DenseTensor) -> DenseTensor {
    let mut h = x.add(&x.adjoint().unwrap()).unwrap();
    h.scale_real(0.5);
    // Fixed points are positive up to an overall phase.
    let tr = h.trace().unwrap().re;
    if tr < 0.0 {
        h.scale_real(-1.0);
    }
    h
}

fn strip_imag_if(real: bool, v: &mut [C64]) {
    if real {
        v.iter_mut().for_each(|z| z.im = 0.0);
    }
}

struct FixedPoint {
    matrix: DenseTensor,
    value: C64,
    subleading: Option<C64>,
}

/// Dominant fixed point of X ↦ Σ M X M† (right) or Σ M† X M (left).
fn fixed_point(mats: &[DenseTensor], side: Side, warm: Option<&DenseTensor>, tol: f64) -> Result<FixedPoint> {
    let n = match side {
        Side::Right => mats[0].shape()[0],
        Side::Left => mats[0].shape()[1],
    };
    let real = mats.iter().all(|m| m.is_real());
    let map = FnMap {
        dim: n * n,
        f: |x: &[C64]| {
            let xm = as_matrix(x, n);
            let y = match side {
                Side::Right => right_transfer(mats, &xm),
                Side::Left => left_transfer(mats, &xm),
            };
            y.into_data()
        },
    };
    let start = match warm {
        Some(w) if w.shape() == [n, n] => w.data().to_vec(),
        _ => DenseTensor::identity(n).into_data(),
    };
    let opts = ArnoldiOptions { tol, krylov_dim: 20, max_restarts: 2000 };
    let pair = dominant_eigenpair(&map, Side::Right, Some(&start), &opts)?;
    let mut v = pair.vector;
    strip_imag_if(real, &mut v);
    Ok(FixedPoint { matrix: hermitize(&as_matrix(&v, n)), value: pair.value, subleading: pair.subleading })
}

/// Translation-invariant MPS with A of shape (m, m, 2), stored in the
/// sublattice-rotated frame of the model it is evolved with.
#[derive(Clone, Debug)]
pub struct TiMpsState {
    pub a: DenseTensor,
    pub frame: SublatticeFrame,
    /// Warm starts for the right fixed points, one per Trotter factor.
    warm: Vec<Option<DenseTensor>>,
    env: Option<(DenseTensor, DenseTensor)>,
    /// |λ₂/λ₁| of the transfer matrix at the last measurement.
    pub gap_ratio: Option<f64>,
    pub degeneracy_warning: bool,
}

impl TiMpsState {
    /// Random real-symmetric (or complex-symmetric) A^σ of bond dimension m.
    pub fn random(m: usize, frame: SublatticeFrame, seed: u64, init: InitKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseTensor::zeros(vec![m, m, 2]);
        for s in 0..2 {
            for i in 0..m {
                for j in i..m {
                    let z = random_entry(&mut rng, init);
                    a.set(&[i, j, s], z);
                    a.set(&[j, i, s], z);
                }
            }
        }
        Self::from_tensor(a, frame)
    }

    pub fn from_tensor(a: DenseTensor, frame: SublatticeFrame) -> Self {
        TiMpsState { a, frame, warm: Vec::new(), env: None, gap_ratio: None, degeneracy_warning: false }
    }

    pub fn bond_dim(&self) -> usize {
        self.a.shape()[0]
    }

    /// Applies one MPO factor and projects back to at most `m_max` using the
    /// dominant right fixed point of the grown transfer matrix. `slot`
    /// identifies the factor so its fixed point can warm-start the next
    /// application of the same factor.
    pub fn apply_mpo(&mut self, w: &MpoTensor, slot: usize, m_max: usize) -> Result<()> {
        let chi = w.virtual_dim();
        if chi == 1 {
            // One-body factors keep the bond dimension: no projection needed.
            let mut mats = split_mats(&self.a);
            let op = |o: usize, i: usize| w.w.get(&[0, 0, o, i]);
            let old = mats.clone();
            for (o, m) in mats.iter_mut().enumerate() {
                *m = old[0].scale(op(o, 0)).add(&old[1].scale(op(o, 1)))?;
            }
            self.a = join_mats(&mats);
            return Ok(());
        }
        let m = self.bond_dim();
        let big = m * chi;
        let grown: [DenseTensor; 2] = [0, 1].map(|o| {
            DenseTensor::from_fn(vec![big, big], |ix| {
                let (a, l) = (ix[0] / chi, ix[0] % chi);
                let (b, r) = (ix[1] / chi, ix[1] % chi);
                (0..2).map(|i| w.w.get(&[l, r, o, i]) * self.a.get(&[a, b, i])).sum()
            })
        });
        if self.warm.len() <= slot {
            self.warm.resize(slot + 1, None);
        }
        let fp = fixed_point(&grown, Side::Right, self.warm[slot].as_ref(), PROJECTION_TOL)?;
        let svd = truncated_svd(&fp.matrix, Some(m_max), 1e-13)?;
        let p = svd.u;
        let keep = p.shape()[1];
        if keep == 0 {
            return Err(Error::Linalg("transfer fixed point vanished during projection".into()));
        }
        let pd = p.adjoint()?;
        let mut projected = grown.map(|g| pd.matmul(&g).unwrap().matmul(&p).unwrap());
        // Unit dominant eigenvalue, estimated by a Rayleigh quotient on the
        // projected fixed point (exact at measurement time).
        let x = pd.matmul(&fp.matrix)?.matmul(&p)?;
        let tx = right_transfer(&projected, &x);
        let eta: C64 = x.data().iter().zip(tx.data()).map(|(a, b)| a.conj() * b).sum::<C64>() / x.norm().powi(2);
        let s = 1.0 / eta.norm().sqrt();
        projected.iter_mut().for_each(|t| t.scale_real(s));
        self.a = join_mats(&projected);
        self.warm[slot] = Some(fp.matrix);
        Ok(())
    }

    /// Left and right fixed points (ℓ, R) of the transfer matrix, normalised
    /// so that Tr(ℓR) = 1; also rescales A to unit dominant eigenvalue.
    fn environment(&mut self) -> Result<(DenseTensor, DenseTensor)> {
        let mats = split_mats(&self.a);
        let (wl, wr) = match &self.env {
            Some((l, r)) => (Some(l), Some(r)),
            None => (None, None),
        };
        let right = fixed_point(&mats, Side::Right, wr, MEASURE_TOL)?;
        let left = fixed_point(&mats, Side::Left, wl, MEASURE_TOL)?;
        let lam = right.value.norm();
        self.gap_ratio = right.subleading.map(|s| s.norm() / lam);
        self.degeneracy_warning = self.gap_ratio.is_some_and(|g| g > GAP_COLLAPSE);
        self.a.scale_real(1.0 / lam.sqrt());
        let norm = left.matrix.matmul(&right.matrix)?.trace()?.re;
        let mut l = left.matrix;
        l.scale_real(1.0 / norm);
        self.env = Some((l.clone(), right.matrix.clone()));
        Ok((l, right.matrix))
    }

    /// One- and two-site density matrices in the rotated frame.
    pub fn rdm_rotated(&mut self) -> Result<(DenseTensor, DenseTensor)> {
        let (l, r) = self.environment()?;
        let mats = split_mats(&self.a);
        let rho1 = DenseTensor::from_fn(vec![2, 2], |ix| {
            l.matmul(&mats[ix[0]]).unwrap().matmul(&r).unwrap().matmul(&mats[ix[1]].adjoint().unwrap()).unwrap().trace().unwrap()
        });
        let pairs: Vec<DenseTensor> = (0..4).map(|k| mats[k >> 1].matmul(&mats[k & 1]).unwrap()).collect();
        let lp: Vec<DenseTensor> = pairs.iter().map(|p| l.matmul(p).unwrap().matmul(&r).unwrap()).collect();
        let rho2 = DenseTensor::from_fn(vec![4, 4], |ix| {
            let bra = pairs[ix[1]].adjoint().unwrap();
            lp[ix[0]].matmul(&bra).unwrap().trace().unwrap()
        });
        Ok((finish_rdm(rho1)?, finish_rdm(rho2)?))
    }

    /// (ρ₁ even, ρ₁ odd, ρ₂ on an even–odd bond) in the lab frame.
    pub fn rdm(&mut self) -> Result<([DenseTensor; 2], DenseTensor)> {
        let (r1, r2) = self.rdm_rotated()?;
        Ok(([r1.clone(), self.frame.convert_odd_site(&r1)], self.frame.convert_pair(&r2)))
    }

    /// Schmidt coefficients across one bond from the fixed points.
    pub fn schmidt_values(&mut self) -> Result<Vec<f64>> {
        let (l, r) = self.environment()?;
        let (vals, _) = hermitian_eig(&hermitize(&l.matmul(&r)?))?;
        let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
        Ok(vals.iter().map(|v| (v.max(0.0) / total).sqrt()).collect())
    }
}

/// Hermitize, normalise the trace, and reject clearly negative spectra.
pub fn finish_rdm(rho: DenseTensor) -> Result<DenseTensor> {
    let mut h = rho.add(&rho.adjoint()?)?;
    let tr = h.trace()?.re;
    if tr.abs() < 1e-300 || !tr.is_finite() {
        return Err(Error::InvalidDensityMatrix("zero or non-finite trace".into()));
    }
    h.scale_real(1.0 / tr);
    let (vals, _) = hermitian_eig(&h)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < CLIP {
        return Err(Error::InvalidDensityMatrix(format!("eigenvalue {min:e} below {CLIP:e}: state not converged")));
    }
    Ok(h)
}

/// Infinite two-site chain … λ_ba Γ_a λ_ab Γ_b λ_ba …, stored in the
/// right-canonical form B_a = Γ_a λ_ab, B_b = Γ_b λ_ba (shape left, right,
/// phys). Updates never divide by λ, which keeps product states stable.
#[derive(Clone, Debug)]
pub struct TebdState {
    pub b_a: DenseTensor,
    pub b_b: DenseTensor,
    pub lambda_ab: Vec<f64>,
    pub lambda_ba: Vec<f64>,
    /// Discarded weight of the most recent update.
    pub truncation_error: f64,
    env: Option<(DenseTensor, DenseTensor)>,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// SWAP · G · SWAP: the same gate with the two sites exchanged.
pub fn swap_sites(g: &DenseTensor) -> DenseTensor {
    let sw = |i: usize| ((i & 1) << 1) | (i >> 1);
    DenseTensor::from_fn(vec![4, 4], |ix| g.get(&[sw(ix[0]), sw(ix[1])]))
}

impl TebdState {
    pub fn random(m: usize, seed: u64, init: InitKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || DenseTensor::from_fn(vec![m, m, 2], |_| random_entry(&mut rng, init));
        let (gamma_a, gamma_b) = (g(), g());
        let flat = normalized(&vec![1.0; m]);
        let mut s = Self::from_vidal(gamma_a, gamma_b, flat.clone(), flat);
        s.canonicalize(m).expect("random two-site cell has a fixed point");
        s
    }

    /// Product state along a sublattice pattern (signs of σz on a and b)
    /// plus uniform noise of relative size `noise`. Random starts in an
    /// ordered phase can settle into a cat state (a sum of both ordered
    /// branches) whose transfer matrix has a degenerate top eigenvalue; a
    /// pinned start avoids that.
    pub fn biased(m: usize, seed: u64, init: InitKind, pattern: (f64, f64), noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |sign: f64| {
            let mut t = DenseTensor::from_fn(vec![m, m, 2], |_| random_entry(&mut rng, init) * noise);
            let phys = if sign >= 0.0 { 0 } else { 1 };
            let v = t.get(&[0, 0, phys]) + C64::new(1.0, 0.0);
            t.set(&[0, 0, phys], v);
            t
        };
        let (gamma_a, gamma_b) = (make(pattern.0), make(pattern.1));
        let mut lam = vec![noise; m];
        lam[0] = 1.0;
        let lam = normalized(&lam);
        let mut s = Self::from_vidal(gamma_a, gamma_b, lam.clone(), lam);
        s.canonicalize(m).expect("pinned two-site cell has a fixed point");
        s
    }

    /// From Vidal tensors Γ_a, Γ_b and the bond vectors between them.
    pub fn from_vidal(gamma_a: DenseTensor, gamma_b: DenseTensor, lambda_ab: Vec<f64>, lambda_ba: Vec<f64>) -> Self {
        let b_a = gamma_a.scale_axis(1, &lambda_ab).unwrap();
        let b_b = gamma_b.scale_axis(1, &lambda_ba).unwrap();
        Self::from_parts(b_a, b_b, lambda_ab, lambda_ba)
    }

    pub fn from_parts(b_a: DenseTensor, b_b: DenseTensor, lambda_ab: Vec<f64>, lambda_ba: Vec<f64>) -> Self {
        TebdState { b_a, b_b, lambda_ab, lambda_ba, truncation_error: 0.0, env: None }
    }

    pub fn bond_dim(&self) -> usize {
        self.lambda_ab.len().max(self.lambda_ba.len())
    }

    /// Applies `gate` (acting on a ⊗ b) to the a–b bond, truncating to m_max.
    pub fn apply_ab(&mut self, gate: &DenseTensor, m_max: usize) -> Result<()> {
        let (ba, bb, err, lab) = update_bond(&self.b_a, &self.b_b, &self.lambda_ba, gate, m_max)?;
        self.b_a = ba;
        self.b_b = bb;
        self.lambda_ab = lab;
        self.truncation_error = err;
        Ok(())
    }

    /// Applies `gate` (acting on b ⊗ a) to the b–a bond.
    pub fn apply_ba(&mut self, gate: &DenseTensor, m_max: usize) -> Result<()> {
        let (bb, ba, err, lba) = update_bond(&self.b_b, &self.b_a, &self.lambda_ab, gate, m_max)?;
        self.b_a = ba;
        self.b_b = bb;
        self.lambda_ba = lba;
        self.truncation_error = err;
        Ok(())
    }

    /// One first-order Trotter step with a lab-frame bond gate on a ⊗ b,
    /// followed by re-canonicalisation.
    pub fn step(&mut self, gate: &DenseTensor, m_max: usize) -> Result<()> {
        self.apply_ab(gate, m_max)?;
        self.apply_ba(&swap_sites(gate), m_max)?;
        self.canonicalize(m_max)
    }

    /// Restores the canonical form from the transfer-matrix fixed points of
    /// the two-site cell. Non-unitary gates (and random starts) leave the
    /// B tensors only approximately orthonormal, and the bond updates rely on it.
    pub fn canonicalize(&mut self, m_max: usize) -> Result<()> {
        let (a, b) = (split_mats(&self.b_a), split_mats(&self.b_b));
        let cell: Vec<DenseTensor> = (0..4).map(|k| a[k >> 1].matmul(&b[k & 1]).unwrap()).collect();
        // In a nearly canonical gauge the fixed points are close to I and
        // diag(λ_ba²); both make good warm starts.
        let dl = cell[0].shape()[0];
        let guess_r = DenseTensor::identity(dl);
        let right = fixed_point(&cell, Side::Right, Some(&guess_r), MEASURE_TOL)?;
        let eta = right.value.norm();
        if eta == 0.0 {
            return Err(Error::Linalg("two-site transfer matrix vanished".into()));
        }
        // R = W W†, with directions of negligible weight projected out.
        let (vals, vecs) = hermitian_eig(&right.matrix)?;
        let top = vals[0].max(0.0);
        let keep = vals.iter().take_while(|&&v| v > top * LAMBDA_CUTOFF).count().max(1);
        let n = vals.len();
        let w = DenseTensor::from_fn(vec![n, keep], |ix| vecs.get(&[ix[0], ix[1]]) * vals[ix[1]].sqrt());
        let w_inv = DenseTensor::from_fn(vec![keep, n], |ix| vecs.get(&[ix[1], ix[0]]).conj() / vals[ix[0]].sqrt());
        let scale = C64::new(1.0 / eta.sqrt(), 0.0);
        let normed: Vec<DenseTensor> = cell.iter().map(|c| w_inv.matmul(c).unwrap().matmul(&w).unwrap().scale(scale)).collect();
        // The left fixed point transforms as L ↦ W† L W.
        let guess_l = (self.lambda_ba.len() == n).then(|| {
            DenseTensor::from_fn(vec![keep, keep], |ix| {
                (0..n).map(|k| w.get(&[k, ix[0]]).conj() * self.lambda_ba[k].powi(2) * w.get(&[k, ix[1]])).sum()
            })
        });
        let left = fixed_point(&normed, Side::Left, guess_l.as_ref(), MEASURE_TOL)?;
        let (lvals, u) = hermitian_eig(&left.matrix)?;
        let lam_ba = normalized(&lvals.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>());
        let u_dag = u.adjoint()?;
        let rotated: Vec<DenseTensor> = normed.iter().map(|c| u_dag.matmul(c).unwrap().matmul(&u).unwrap()).collect();
        let phi = DenseTensor::from_fn(vec![keep * 2, 2 * keep], |ix| {
            let (a, s, t, c) = (ix[0] / 2, ix[0] % 2, ix[1] / keep, ix[1] % keep);
            rotated[s * 2 + t].get(&[a, c])
        });
        let (ba, bb, _, lab) = split_pair(phi, &lam_ba, keep, keep, m_max)?;
        self.b_a = ba;
        self.b_b = bb;
        self.lambda_ab = lab;
        self.lambda_ba = lam_ba;
        Ok(())
    }

    /// (ρ_a, ρ_b, ρ_ab, ρ_ba) from the fixed points of the two-site
    /// transfer matrix, so the state need not be exactly canonical.
    pub fn rdm(&mut self) -> Result<([DenseTensor; 2], DenseTensor, DenseTensor)> {
        let (a, b) = (split_mats(&self.b_a), split_mats(&self.b_b));
        let cell: Vec<DenseTensor> = (0..4).map(|k| a[k >> 1].matmul(&b[k & 1]).unwrap()).collect();
        let (wl, wr) = match &self.env {
            Some((l, r)) => (Some(l), Some(r)),
            None => (None, None),
        };
        let r = fixed_point(&cell, Side::Right, wr, MEASURE_TOL)?.matrix;
        let l = fixed_point(&cell, Side::Left, wl, MEASURE_TOL)?.matrix;
        self.env = Some((l.clone(), r.clone()));
        let l_mid = left_transfer(&a, &l);
        let r_mid = right_transfer(&b, &r);

        let two = |first: &[DenseTensor; 2], second: &[DenseTensor; 2], l: &DenseTensor, r: &DenseTensor| {
            let pairs: Vec<DenseTensor> = (0..4).map(|k| first[k >> 1].matmul(&second[k & 1]).unwrap()).collect();
            let lp: Vec<DenseTensor> = pairs.iter().map(|p| l.matmul(p).unwrap().matmul(r).unwrap()).collect();
            DenseTensor::from_fn(vec![4, 4], |ix| lp[ix[0]].matmul(&pairs[ix[1]].adjoint().unwrap()).unwrap().trace().unwrap())
        };
        let one = |m: &[DenseTensor; 2], l: &DenseTensor, r: &DenseTensor| {
            DenseTensor::from_fn(vec![2, 2], |ix| {
                l.matmul(&m[ix[0]]).unwrap().matmul(r).unwrap().matmul(&m[ix[1]].adjoint().unwrap()).unwrap().trace().unwrap()
            })
        };
        let rho_ab = finish_rdm(two(&a, &b, &l, &r))?;
        let rho_ba = finish_rdm(two(&b, &a, &l_mid, &r_mid))?;
        let rho_a = finish_rdm(one(&a, &l, &r_mid))?;
        let rho_b = finish_rdm(one(&b, &l_mid, &r))?;
        Ok(([rho_a, rho_b], rho_ab, rho_ba))
    }
}

type BondUpdate = (DenseTensor, DenseTensor, f64, Vec<f64>);

/// φ = G·(B_x B_y); SVD of λ_left φ = X S Y†; B_y ← Y†, B_x ← φ Y / ‖S‖.
fn update_bond(bx: &DenseTensor, by: &DenseTensor, lam_left: &[f64], gate: &DenseTensor, m_max: usize) -> Result<BondUpdate> {
    let (dl, dm, dr) = (bx.shape()[0], bx.shape()[1], by.shape()[1]);
    // θ[a, s, t, c]
    let mut theta = DenseTensor::zeros(vec![dl, 2, 2, dr]);
    for a in 0..dl {
        for s in 0..2 {
            for b in 0..dm {
                let xv = bx.get(&[a, b, s]);
                if xv == ZERO {
                    continue;
                }
                for t in 0..2 {
                    for c in 0..dr {
                        let v = theta.get(&[a, s, t, c]) + xv * by.get(&[b, c, t]);
                        theta.set(&[a, s, t, c], v);
                    }
                }
            }
        }
    }
    let mut phi = DenseTensor::zeros(vec![dl, 2, 2, dr]);
    for a in 0..dl {
        for c in 0..dr {
            for o in 0..4 {
                let v: C64 = (0..4).map(|i| gate.get(&[o, i]) * theta.get(&[a, i >> 1, i & 1, c])).sum();
                phi.set(&[a, o >> 1, o & 1, c], v);
            }
        }
    }
    split_pair(phi.into_reshaped(vec![dl * 2, 2 * dr])?, lam_left, dl, dr, m_max)
}

/// Splits a two-site block φ[(a, s), (t, c)] whose right side is already
/// normalised: SVD of λ_left φ = X S Y†; B_y ← Y†, B_x ← φ Y / ‖S‖.
fn split_pair(phi: DenseTensor, lam_left: &[f64], dl: usize, dr: usize, m_max: usize) -> Result<BondUpdate> {
    let weighted = phi.reshape(vec![dl, 2 * 2 * dr])?.scale_axis(0, lam_left)?.into_reshaped(vec![dl * 2, 2 * dr])?;
    let svd = truncated_svd(&weighted, Some(m_max), LAMBDA_CUTOFF)?;
    let k = svd.s.len();
    if k == 0 {
        return Err(Error::Linalg("two-site update annihilated the state".into()));
    }
    let norm = svd.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lam = normalized(&svd.s);
    // φ Y: [(a, s), k]
    let y = svd.v_dag.adjoint()?;
    let new_x = phi.matmul(&y)?.scale(C64::new(1.0 / norm, 0.0)).into_reshaped(vec![dl, 2, k])?.permute(&[0, 2, 1])?;
    // Y†[k, (t, c)] → B_y[k, c, t]
    let new_y = svd.v_dag.reshape(vec![k, 2, dr])?.permute(&[0, 2, 1])?;
    let total = norm * norm + svd.truncation_error.powi(2);
    let err = if total > 0.0 { svd.truncation_error.powi(2) / total } else { 0.0 };
    Ok((new_x, new_y, err, lam))
}

/// A converged (or best-effort) chain ground state.
#[derive(Clone, Debug)]
pub enum ChainState {
    TiMps(TiMpsState),
    Tebd(TebdState),
}

/// Lab-frame density matrices of a chain state.
#[derive(Clone, Debug)]
pub struct ChainRdm {
    pub rho1: [DenseTensor; 2],
    /// Bonds (a, b) and (b, a); identical up to the frame for TI-MPS.
    pub rho2: [DenseTensor; 2],
}

impl ChainState {
    pub fn method(&self) -> ChainMethod {
        match self {
            ChainState::TiMps(_) => ChainMethod::TiMps,
            ChainState::Tebd(_) => ChainMethod::Tebd,
        }
    }

    pub fn bond_dim(&self) -> usize {
        match self {
            ChainState::TiMps(s) => s.bond_dim(),
            ChainState::Tebd(s) => s.bond_dim(),
        }
    }

    pub fn rdm(&mut self) -> Result<ChainRdm> {
        match self {
            ChainState::TiMps(s) => {
                let (rho1, r2) = s.rdm()?;
                Ok(ChainRdm { rho1, rho2: [r2.clone(), swap_sites(&r2)] })
            }
            ChainState::Tebd(s) => {
                let (rho1, ab, ba) = s.rdm()?;
                Ok(ChainRdm { rho1, rho2: [ab, ba] })
            }
        }
    }

    /// Mean bond energy of the model without its pinning field.
    pub fn energy(&mut self, model: &ModelSpec) -> Result<f64> {
        let r = self.rdm()?;
        Ok(bond_energy(model, &r))
    }

    pub fn state_data(&mut self, model: &ModelSpec) -> Result<StateData> {
        let r = self.rdm()?;
        Ok(StateData {
            control: model.control(),
            energy: bond_energy(model, &r),
            rho1: r.rho1.clone(),
            bonds: vec![(r.rho2[0].clone(), 1), (r.rho2[1].clone(), 1)],
            bond_vectors: None,
        })
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let (kind, tensors) = match self {
            ChainState::TiMps(s) => ("ti-mps", vec![s.a.clone()]),
            ChainState::Tebd(s) => (
                "tebd",
                vec![s.b_a.clone(), s.b_b.clone(), vector_tensor(&s.lambda_ab), vector_tensor(&s.lambda_ba)],
            ),
        };
        let frame = match self {
            ChainState::TiMps(s) => s.frame.odd_rotation.map(|p| format!("{p:?}")),
            ChainState::Tebd(_) => None,
        };
        let meta = serde_json::json!({ "kind": kind, "odd_rotation": frame, "run": meta });
        Checkpoint { meta, tensors }.save(path)
    }

    /// Restores a state and returns the metadata block stored with it.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let cp = Checkpoint::load(path)?;
        let bad = || Error::Checkpoint(format!("{}: not a chain checkpoint", path.display()));
        let run = cp.meta.get("run").cloned().unwrap_or(serde_json::Value::Null);
        match cp.meta.get("kind").and_then(|k| k.as_str()) {
            Some("ti-mps") => {
                let rot = match cp.meta.get("odd_rotation").and_then(|r| r.as_str()) {
                    None => None,
                    Some("X") => Some(crate::models::Pauli::X),
                    Some("Y") => Some(crate::models::Pauli::Y),
                    Some("Z") => Some(crate::models::Pauli::Z),
                    Some(_) => return Err(bad()),
                };
                let a = cp.tensors.into_iter().next().ok_or_else(bad)?;
                Ok((ChainState::TiMps(TiMpsState::from_tensor(a, SublatticeFrame { odd_rotation: rot })), run))
            }
            Some("tebd") if cp.tensors.len() == 4 => {
                let mut t = cp.tensors.into_iter();
                let (ga, gb) = (t.next().unwrap(), t.next().unwrap());
                let (lab, lba) = (tensor_vector(&t.next().unwrap()), tensor_vector(&t.next().unwrap()));
                Ok((ChainState::Tebd(TebdState::from_parts(ga, gb, lab, lba)), run))
            }
            _ => Err(bad()),
        }
    }
}

fn bond_energy(model: &ModelSpec, r: &ChainRdm) -> f64 {
    let h = bond_hamiltonian(&model.with_bias(0.0));
    let e = |rho: &DenseTensor| rho.matmul(&h).unwrap().trace().unwrap().re;
    // The bias-free bond Hamiltonian is symmetric under exchanging the sites.
    0.5 * (e(&r.rho2[0]) + e(&r.rho2[1]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub method: ChainMethod,
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
}

/// Imaginary-time evolution of a chain to its ground state. Starts from
/// `initial` when given (warm start), else from a seeded random state.
pub fn ground_state_1d(
    model: &ModelSpec,
    opts: &ChainOptions,
    schedule: &TimeStepSchedule,
    initial: Option<ChainState>,
) -> Result<(ChainState, ConvergenceReport)> {
    model.validate()?;
    if model.dimension != 1 {
        return Err(Error::Config("ground_state_1d needs a chain model".into()));
    }
    if opts.m == 0 {
        return Err(Error::Config("bond dimension must be at least 1".into()));
    }
    let m = opts.m;
    let e_model = *model;
    match opts.method {
        ChainMethod::TiMps => {
            let (_, frame) = evolution_mpo(model, schedule.tau_initial)?;
            let mut state = match initial {
                Some(ChainState::TiMps(s)) if s.frame == frame => s,
                _ => TiMpsState::random(m, frame, opts.seed, opts.init),
            };
            let rungs = schedule.rungs();
            let factors: Vec<Vec<MpoTensor>> = rungs.iter().map(|&t| evolution_mpo(model, t).map(|f| f.0)).collect::<Result<_>>()?;
            let mut report = drive(
                schedule,
                &mut state,
                |s, _tau, rung| {
                    for (k, w) in factors[rung].iter().enumerate() {
                        s.apply_mpo(w, k, m)?;
                    }
                    Ok(())
                },
                |s| {
                    let (_, rho2) = s.rdm()?;
                    let h = bond_hamiltonian(&e_model.with_bias(0.0));
                    Ok(Probe { energy: rho2.matmul(&h)?.trace()?.re, observable: rho2 })
                },
            )?;
            if state.degeneracy_warning {
                report.warnings.push(format!("transfer-matrix gap collapsed: |λ₂/λ₁| = {:?}", state.gap_ratio));
            }
            Ok((ChainState::TiMps(state), report))
        }
        ChainMethod::Tebd => {
            let mut state = match initial {
                Some(ChainState::Tebd(s)) => s,
                // A pinning field asks for one ordered branch; start there.
                _ if model.symmetry_bias != 0.0 => {
                    TebdState::biased(m, opts.seed, opts.init, model.bias_pattern(), crate::peps::DEFAULT_START_NOISE)
                }
                _ => TebdState::random(m, opts.seed, opts.init),
            };
            let gates: Vec<DenseTensor> =
                schedule.rungs().iter().map(|&t| exact_gate(model, t, BondLabel::Chain).map(|g| g.matrix)).collect::<Result<_>>()?;
            let report = drive(
                schedule,
                &mut state,
                |s, _tau, rung| s.step(&gates[rung], m),
                |s| {
                    let (_, ab, ba) = s.rdm()?;
                    let r = ChainRdm { rho1: [DenseTensor::identity(2), DenseTensor::identity(2)], rho2: [ab.clone(), ba.clone()] };
                    let obs = DenseTensor::from_fn(vec![2, 4, 4], |ix| if ix[0] == 0 { ab.get(&ix[1..]) } else { ba.get(&ix[1..]) });
                    Ok(Probe { energy: bond_energy(&e_model, &r), observable: obs })
                },
            )?;
            Ok((ChainState::Tebd(state), report))
        }
    }
}
