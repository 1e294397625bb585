//! Infinite square-lattice PEPS on two sublattices, evolved by the simple
//! update.
//!
//! Site tensors have axes (phys, L, U, R, D). The four bond kinds join
//!   k: a.L – b.R,  l: a.U – b.D,  m: a.R – b.L,  n: a.D – b.U,
//! and each carries a bond vector λ.

use crate::checkpoint::{tensor_vector, vector_tensor, Checkpoint};
use crate::error::{Error, Result};
use crate::evolution::{drive, random_entry, ConvergenceReport, InitKind, Probe, TimeStepSchedule};
use crate::linalg::{truncated_svd, DEFAULT_REL_CUTOFF};
use crate::models::{bond_hamiltonian, exact_gate, BondLabel, ModelSpec};
use crate::tensor::{contract, DenseTensor};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const LAMBDA_CUTOFF: f64 = 1e-12;

/// Bond vector index (k, l, m, n) on each virtual axis (L, U, R, D).
const A_BONDS: [usize; 4] = [0, 1, 2, 3];
const B_BONDS: [usize; 4] = [2, 3, 0, 1];

pub const BOND_LABELS: [BondLabel; 4] = [BondLabel::K, BondLabel::L, BondLabel::M, BondLabel::N];

/// Axis of a and of b that bond `bond` joins.
fn bond_axes(bond: usize) -> (usize, usize) {
    match bond {
        0 => (1, 3),
        1 => (2, 4),
        2 => (3, 1),
        _ => (4, 2),
    }
}

#[derive(Clone, Debug)]
pub struct PepsState {
    pub a: DenseTensor,
    pub b: DenseTensor,
    /// λ_k, λ_l, λ_m, λ_n.
    pub lambda: [Vec<f64>; 4],
    pub bond_dim: usize,
    /// Running log of the scale stripped from the tensors.
    pub log_norm: f64,
    /// Set when an update produced fewer than D non-zero singular values.
    pub rank_deficient: bool,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn pinv(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&l| if l < LAMBDA_CUTOFF { 0.0 } else { 1.0 / l }).collect()
}

fn inverse_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (s, &t) in p.iter().enumerate() {
        inv[t] = s;
    }
    inv
}

impl PepsState {
    /// Random a with b := a and flat bond vectors.
    pub fn random(d: usize, seed: u64, init: InitKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DenseTensor::from_fn(vec![2, d, d, d, d], |_| random_entry(&mut rng, init));
        Self::from_parts(a.clone(), a, std::array::from_fn(|_| normalized(&vec![1.0; d])))
    }

    /// Product state along a sublattice pattern (signs of σz on a and b)
    /// plus uniform random noise of relative size `noise` in every entry.
    pub fn biased(d: usize, seed: u64, init: InitKind, pattern: (f64, f64), noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |sign: f64| {
            let mut t = DenseTensor::from_fn(vec![2, d, d, d, d], |_| random_entry(&mut rng, init) * noise);
            let phys = if sign >= 0.0 { 0 } else { 1 };
            let v = t.get(&[phys, 0, 0, 0, 0]) + C64::new(1.0, 0.0);
            t.set(&[phys, 0, 0, 0, 0], v);
            t
        };
        let a = make(pattern.0);
        let b = make(pattern.1);
        let mut lam = vec![noise; d];
        lam[0] = 1.0;
        Self::from_parts(a, b, std::array::from_fn(|_| normalized(&lam)))
    }

    /// Product state with every site in the given one-site state, embedded
    /// at bond dimension d.
    pub fn product(d: usize, up: C64, down: C64) -> Self {
        let mut a = DenseTensor::zeros(vec![2, d, d, d, d]);
        a.set(&[0, 0, 0, 0, 0], up);
        a.set(&[1, 0, 0, 0, 0], down);
        let mut lam = vec![0.0; d];
        lam[0] = 1.0;
        Self::from_parts(a.clone(), a, std::array::from_fn(|_| lam.clone()))
    }

    pub fn from_parts(a: DenseTensor, b: DenseTensor, lambda: [Vec<f64>; 4]) -> Self {
        let bond_dim = a.shape()[1];
        PepsState { a, b, lambda, bond_dim, log_norm: 0.0, rank_deficient: false }
    }

    fn dressed(&self, t: &DenseTensor, bonds: &[usize; 4], skip: usize) -> DenseTensor {
        let mut out = t.clone();
        for axis in 1..5 {
            if axis != skip {
                out = out.scale_axis(axis, &self.lambda[bonds[axis - 1]]).unwrap();
            }
        }
        out
    }

    /// The reduced bond problem: a = Q_a R_a, b = L_b Q_b with the external
    /// λ absorbed, so that only R_a λ L_b (2D × 2D) needs gating.
    fn reduced(&self, bond: usize) -> Result<Reduced> {
        let (ax, bx) = bond_axes(bond);
        let d = self.bond_dim;
        let others = |skip: usize| (1..5).filter(|&x| x != skip).collect::<Vec<_>>();
        let oa = others(ax);
        let ob = others(bx);
        let perm_a: Vec<usize> = oa.iter().copied().chain([0, ax]).collect();
        let perm_b: Vec<usize> = [bx, 0].into_iter().chain(ob.iter().copied()).collect();
        let ta = self.dressed(&self.a, &A_BONDS, ax).permute(&perm_a)?;
        let tb = self.dressed(&self.b, &B_BONDS, bx).permute(&perm_b)?;
        let ext_a: usize = oa.iter().map(|&x| self.a.shape()[x]).product();
        let ext_b: usize = ob.iter().map(|&x| self.b.shape()[x]).product();
        let sa = truncated_svd(&ta.reshape(vec![ext_a, 2 * d])?, None, DEFAULT_REL_CUTOFF)?;
        let sb = truncated_svd(&tb.reshape(vec![d * 2, ext_b])?, None, DEFAULT_REL_CUTOFF)?;
        let (ka, kb) = (sa.s.len(), sb.s.len());
        if ka == 0 || kb == 0 {
            return Err(Error::Linalg("site tensor vanished during simple update".into()));
        }
        // R_a = S V† as (ka, s, r); L_b = U S as (r, t, kb).
        let r_a = sa.v_dag.scale_axis(0, &sa.s)?.reshape(vec![ka, 2, d])?;
        let l_b = sb.u.scale_axis(1, &sb.s)?.reshape(vec![d, 2, kb])?;
        let r_a = r_a.scale_axis(2, &self.lambda[bond])?;
        // θ[ka, s, t, kb]
        let theta = contract(&r_a, &l_b, &[(2, 0)])?;
        Ok(Reduced { theta, q_a: sa.u, q_b: sb.v_dag, perm_a, perm_b, oa, ob, ka, kb })
    }

    /// One simple-update step on `bond` with a gate acting on (a ⊗ b).
    pub fn update(&mut self, bond: usize, gate: &DenseTensor) -> Result<()> {
        let d = self.bond_dim;
        let red = self.reduced(bond)?;
        let (ka, kb) = (red.ka, red.kb);
        let g = gate.reshape(vec![2, 2, 2, 2])?;
        // (s', t', ka, kb) → (ka, s', t', kb)
        let gated = contract(&g, &red.theta, &[(2, 1), (3, 2)])?.permute(&[2, 0, 1, 3])?;
        let svd = truncated_svd(&gated.into_reshaped(vec![ka * 2, 2 * kb])?, Some(d), DEFAULT_REL_CUTOFF)?;
        let chi = svd.s.len();
        if chi == 0 {
            return Err(Error::Linalg("gate annihilated the bond".into()));
        }
        if chi < d {
            self.rank_deficient = true;
        }
        let mut s = svd.s.clone();
        s.resize(d, 0.0);
        let lam = normalized(&s);
        // New a: Q_a · U → (others..., s, new) → original axis order.
        let u = svd.u.pad_to(&[ka * 2, d])?.reshape(vec![ka, 2 * d])?;
        let ext_a = red.q_a.shape()[0];
        let na = red.q_a.matmul(&u)?;
        let mut shape_a: Vec<usize> = red.oa.iter().map(|&x| self.a.shape()[x]).collect();
        shape_a.extend([2, d]);
        debug_assert_eq!(ext_a * 2 * d, na.len());
        let mut na = na.into_reshaped(shape_a)?.permute(&inverse_perm(&red.perm_a))?;
        // New b: V† · Q_b → (new, t, others...).
        let v = svd.v_dag.pad_to(&[d, 2 * kb])?.reshape(vec![d * 2, kb])?;
        let nb = v.matmul(&red.q_b)?;
        let mut shape_b = vec![d, 2];
        shape_b.extend(red.ob.iter().map(|&x| self.b.shape()[x]));
        let mut nb = nb.into_reshaped(shape_b)?.permute(&inverse_perm(&red.perm_b))?;
        for axis in 1..5 {
            if axis != red.perm_a[4] {
                na = na.scale_axis(axis, &pinv(&self.lambda[A_BONDS[axis - 1]]))?;
            }
            if axis != red.perm_b[0] {
                nb = nb.scale_axis(axis, &pinv(&self.lambda[B_BONDS[axis - 1]]))?;
            }
        }
        let (sa, sb) = (na.max_abs(), nb.max_abs());
        na.scale_real(1.0 / sa);
        nb.scale_real(1.0 / sb);
        self.log_norm += sa.ln() + sb.ln();
        self.a = na;
        self.b = nb;
        self.lambda[bond] = lam;
        Ok(())
    }

    /// One first-order Trotter step: bonds k, l, m, n in turn.
    pub fn trotter_step(&mut self, gates: &[DenseTensor; 4]) -> Result<()> {
        for (bond, g) in gates.iter().enumerate() {
            self.update(bond, g)?;
        }
        Ok(())
    }

    /// Two-site density matrix of a bond in the bond-vector (mean-field)
    /// environment, ordered (a ⊗ b).
    pub fn mean_field_rdm(&self, bond: usize) -> Result<DenseTensor> {
        let red = self.reduced(bond)?;
        let (ka, kb) = (red.ka, red.kb);
        let th = red.theta.permute(&[1, 2, 0, 3])?.into_reshaped(vec![4, ka * kb])?;
        let rho = th.matmul(&th.adjoint()?)?;
        crate::mps::finish_rdm(rho)
    }

    pub fn mean_field_energy(&self, model: &ModelSpec) -> Result<f64> {
        let h = bond_hamiltonian(&model.with_bias(0.0));
        let mut e = 0.0;
        for bond in 0..4 {
            e += self.mean_field_rdm(bond)?.matmul(&h)?.trace()?.re;
        }
        Ok(e / 4.0)
    }

    /// (ā, b̄): √λ of every bond absorbed into both of its tensors.
    pub fn absorb_bond_vectors(&self) -> (DenseTensor, DenseTensor) {
        let sq: Vec<Vec<f64>> = self.lambda.iter().map(|l| l.iter().map(|x| x.sqrt()).collect()).collect();
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for axis in 1..5 {
            a = a.scale_axis(axis, &sq[A_BONDS[axis - 1]]).unwrap();
            b = b.scale_axis(axis, &sq[B_BONDS[axis - 1]]).unwrap();
        }
        (a, b)
    }

    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let mut tensors = vec![self.a.clone(), self.b.clone()];
        tensors.extend(self.lambda.iter().map(|l| vector_tensor(l)));
        let meta = serde_json::json!({ "kind": "peps", "log_norm": self.log_norm, "run": meta });
        Checkpoint { meta, tensors }.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let cp = Checkpoint::load(path)?;
        if cp.meta.get("kind").and_then(|k| k.as_str()) != Some("peps") || cp.tensors.len() != 6 {
            return Err(Error::Checkpoint(format!("{}: not a PEPS checkpoint", path.display())));
        }
        let mut t = cp.tensors.into_iter();
        let (a, b) = (t.next().unwrap(), t.next().unwrap());
        let lambda = std::array::from_fn(|_| tensor_vector(&t.next().unwrap()));
        let mut s = PepsState::from_parts(a, b, lambda);
        s.log_norm = cp.meta.get("log_norm").and_then(|v| v.as_f64()).unwrap_or(0.0);
        Ok((s, cp.meta.get("run").cloned().unwrap_or(serde_json::Value::Null)))
    }
}

struct Reduced {
    theta: DenseTensor,
    q_a: DenseTensor,
    q_b: DenseTensor,
    perm_a: Vec<usize>,
    perm_b: Vec<usize>,
    oa: Vec<usize>,
    ob: Vec<usize>,
    ka: usize,
    kb: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranslationClass {
    Invariant,
    InvariantUpToSpinFlip,
    Bipartite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    /// min over diagonal gauges of ‖a − g·b‖ / ‖a‖.
    pub residual: f64,
    /// The same with b spin-flipped (σx or σy) on its physical axis.
    pub flip_residual: f64,
    pub class: TranslationClass,
}

// First-order Trotter ordering leaves an O(Δτ) imbalance between a and b in
// genuinely uniform states; genuinely bipartite states sit at O(1).
pub const GAUGE_THRESHOLD: f64 = 1e-3;

/// Best diagonal gauge on every virtual axis (axis 0 is physical) mapping
/// `b` onto `a`, by alternating least squares; returns the relative residual.
fn gauge_residual(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let na = a.norm();
    if na == 0.0 || a.shape() != b.shape() {
        return if na == 0.0 && b.norm() == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let shape = a.shape().to_vec();
    let rank = shape.len();
    let mut g: Vec<Vec<C64>> = shape.iter().map(|&n| vec![C64::new(1.0, 0.0); n]).collect();
    let strides = crate::tensor::strides_of(&shape);
    let gauged = |g: &[Vec<C64>], skip: usize| -> Vec<C64> {
        b.data()
            .iter()
            .enumerate()
            .map(|(flat, &x)| {
                let mut v = x;
                for ax in 1..rank {
                    if ax != skip {
                        v *= g[ax][(flat / strides[ax]) % shape[ax]];
                    }
                }
                v
            })
            .collect()
    };
    let mut best = f64::INFINITY;
    for _sweep in 0..60 {
        for ax in 1..rank {
            let c = gauged(&g, ax);
            let mut num = vec![C64::new(0.0, 0.0); shape[ax]];
            let mut den = vec![0.0; shape[ax]];
            for (flat, (&ci, &ai)) in c.iter().zip(a.data()).enumerate() {
                let i = (flat / strides[ax]) % shape[ax];
                num[i] += ci.conj() * ai;
                den[i] += ci.norm_sqr();
            }
            for i in 0..shape[ax] {
                g[ax][i] = if den[i] > 0.0 { num[i] / den[i] } else { C64::new(0.0, 0.0) };
            }
        }
        let fit = gauged(&g, 0);
        let r = fit.iter().zip(a.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt() / na;
        if r < 1e-13 || (best - r).abs() < 1e-14 * best.max(1e-300) {
            best = best.min(r);
            break;
        }
        best = best.min(r);
    }
    best
}

/// Global flip on the physical axis: σx, or σy (up to a phase) when
/// `odd_sign` negates the flipped-down component.
fn spin_flip(t: &DenseTensor, odd_sign: bool) -> DenseTensor {
    let shape = t.shape().to_vec();
    DenseTensor::from_fn(shape, |ix| {
        let mut j = ix.to_vec();
        j[0] = 1 - j[0];
        let v = t.get(&j);
        if odd_sign && ix[0] == 1 {
            -v
        } else {
            v
        }
    })
}

/// Are the two sublattice tensors the same up to gauge (or spin flip)?
pub fn gauge_diagnose(a: &DenseTensor, b: &DenseTensor) -> GaugeReport {
    let residual = gauge_residual(a, b);
    // Néel order of the XXZ family maps onto itself under either flip.
    let flip_residual = gauge_residual(a, &spin_flip(b, false)).min(gauge_residual(a, &spin_flip(b, true)));
    let class = if residual < GAUGE_THRESHOLD {
        TranslationClass::Invariant
    } else if flip_residual < GAUGE_THRESHOLD {
        TranslationClass::InvariantUpToSpinFlip
    } else {
        TranslationClass::Bipartite
    };
    GaugeReport { residual, flip_residual, class }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptions {
    pub d: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
    /// Start from the model's ordering pattern plus noise of this size;
    /// `None` starts from a fully random a with b := a.
    #[serde(default = "default_start_noise")]
    pub start_noise: Option<f64>,
}

fn default_start_noise() -> Option<f64> {
    Some(DEFAULT_START_NOISE)
}

/// Fully random starts frequently lock into valence-bond (dimer) states of
/// the simple update; a noisy ordered product start avoids that.
pub const DEFAULT_START_NOISE: f64 = 0.05;

impl LatticeOptions {
    pub fn new(d: usize, seed: u64) -> Self {
        LatticeOptions { d, seed, init: InitKind::Real, start_noise: default_start_noise() }
    }
}

/// Simple-update imaginary-time evolution on the square lattice. The
/// drift witness is the concatenation of the four bond vectors; the energy
/// tracked per rung is the mean-field bond energy.
pub fn ground_state_2d(
    model: &ModelSpec,
    opts: &LatticeOptions,
    schedule: &TimeStepSchedule,
    initial: Option<PepsState>,
) -> Result<(PepsState, ConvergenceReport, GaugeReport)> {
    model.validate()?;
    if model.dimension != 2 {
        return Err(Error::Config("ground_state_2d needs a square-lattice model".into()));
    }
    if opts.d == 0 {
        return Err(Error::Config("bond dimension must be at least 1".into()));
    }
    let mut state = match initial {
        Some(s) if s.bond_dim == opts.d => s,
        _ => match opts.start_noise {
            Some(noise) => PepsState::biased(opts.d, opts.seed, opts.init, model.bias_pattern(), noise),
            None => PepsState::random(opts.d, opts.seed, opts.init),
        },
    };
    let gates: Vec<[DenseTensor; 4]> = schedule
        .rungs()
        .iter()
        .map(|&t| {
            let mut out = Vec::with_capacity(4);
            for label in BOND_LABELS {
                out.push(exact_gate(model, t, label)?.matrix);
            }
            Ok(out.try_into().unwrap())
        })
        .collect::<Result<_>>()?;
    let d = opts.d;
    let mut report = drive(
        schedule,
        &mut state,
        |s, _tau, rung| s.trotter_step(&gates[rung]),
        |s| {
            let obs = DenseTensor::from_fn(vec![4, d], |ix| C64::new(s.lambda[ix[0]][ix[1]], 0.0));
            Ok(Probe { observable: obs, energy: s.mean_field_energy(model)? })
        },
    )?;
    if state.rank_deficient {
        report.warnings.push("an update kept fewer than D singular values (λ zero-padded)".into());
    }
    let gauge = gauge_diagnose(&state.a, &state.b);
    Ok((state, report, gauge))
}
