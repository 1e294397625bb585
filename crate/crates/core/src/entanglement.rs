//! Entanglement measures of one- and two-site reduced density matrices,
//! and the monogamy bookkeeping built on them. All logarithms are base 2.

use crate::error::{Error, Result};
use crate::linalg::{general_eig, hermitian_eig};
use crate::models::{pauli, pauli_pair, Pauli};
use crate::tensor::{kron, DenseTensor};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Eigenvalues above this (negative) threshold are treated as rounding
/// noise and clipped to zero; anything below is an error.
pub const CLIP: f64 = -1e-8;

fn clip(x: f64, what: &str) -> Result<f64> {
    if x < CLIP {
        return Err(Error::InvalidDensityMatrix(format!("{what}: eigenvalue {x:.3e} below {CLIP:.0e}")));
    }
    Ok(x.max(0.0))
}

fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    -xlog2x(p) - xlog2x(1.0 - p)
}

pub fn expect(rho: &DenseTensor, op: &DenseTensor) -> f64 {
    rho.matmul(op).and_then(|m| m.trace()).map(|z| z.re).unwrap_or(f64::NAN)
}

/// Von Neumann entropy in bits.
pub fn entropy(rho: &DenseTensor) -> Result<f64> {
    let (vals, _) = hermitian_eig(rho)?;
    let mut s = 0.0;
    for v in vals {
        s -= xlog2x(clip(v, "entropy")?);
    }
    Ok(s.max(0.0))
}

/// τ₁ = 4 det ρ₁, clipped to [0, 1].
pub fn one_tangle(rho1: &DenseTensor) -> Result<f64> {
    if rho1.shape() != [2, 2] {
        return Err(Error::ShapeMismatch(format!("one-site density matrix of shape {:?}", rho1.shape())));
    }
    let det = rho1.get(&[0, 0]) * rho1.get(&[1, 1]) - rho1.get(&[0, 1]) * rho1.get(&[1, 0]);
    Ok((4.0 * det.re).clamp(0.0, 1.0))
}

/// Square roots of the eigenvalues of ρρ̃, descending, where
/// ρ̃ = (σy⊗σy) ρ* (σy⊗σy).
pub fn wootters_spectrum(rho2: &DenseTensor) -> Result<[f64; 4]> {
    if rho2.shape() != [4, 4] {
        return Err(Error::ShapeMismatch(format!("two-site density matrix of shape {:?}", rho2.shape())));
    }
    let yy = pauli_pair(Pauli::Y);
    let tilde = yy.matmul(&rho2.conj())?.matmul(&yy)?;
    let (vals, _) = general_eig(&rho2.matmul(&tilde)?)?;
    let mut l = [0.0; 4];
    for (i, v) in vals.iter().enumerate() {
        // The spectrum is real and non-negative in exact arithmetic.
        l[i] = clip(v.re, "ρρ̃")?.sqrt();
    }
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(l)
}

pub fn concurrence_f(rho2: &DenseTensor) -> Result<f64> {
    let l = wootters_spectrum(rho2)?;
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

pub fn concurrence_a(rho2: &DenseTensor) -> Result<f64> {
    let l = wootters_spectrum(rho2)?;
    Ok(l.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// E_F = h(½ + ½√(1 − C²)).
pub fn entanglement_of_formation(c_f: f64) -> f64 {
    binary_entropy(0.5 + 0.5 * (1.0 - c_f * c_f).max(0.0).sqrt())
}

pub fn partial_transpose_first(rho2: &DenseTensor) -> DenseTensor {
    // ρ^{Γ₁}[(a b), (a' b')] = ρ[(a' b), (a b')]
    DenseTensor::from_fn(vec![4, 4], |i| {
        let (a, b, ap, bp) = (i[0] / 2, i[0] % 2, i[1] / 2, i[1] % 2);
        rho2.get(&[ap * 2 + b, a * 2 + bp])
    })
}

/// (N, E_N) with N = (‖ρ^{Γ₁}‖₁ − 1)/2 and E_N = log₂‖ρ^{Γ₁}‖₁. The trace
/// norm is the sum of singular values, i.e. of |eigenvalues| since the
/// partial transpose is Hermitian.
pub fn negativity(rho2: &DenseTensor) -> Result<(f64, f64)> {
    if rho2.shape() != [4, 4] {
        return Err(Error::ShapeMismatch(format!("two-site density matrix of shape {:?}", rho2.shape())));
    }
    let (vals, _) = hermitian_eig(&partial_transpose_first(rho2))?;
    let trace_norm: f64 = vals.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    Ok((((trace_norm - 1.0) / 2.0).max(0.0), trace_norm.log2()))
}

/// The concurrence sandwich for two qubits, stated for the trace-norm
/// negativity ‖ρ^Γ‖₁ − 1 = 2N: √((1−C)² + C²) − (1−C) ≤ 2N ≤ C.
pub fn negativity_bounds(c_f: f64) -> (f64, f64) {
    (((1.0 - c_f).powi(2) + c_f * c_f).sqrt() - (1.0 - c_f), c_f)
}

fn site_ops() -> [DenseTensor; 3] {
    [pauli(Pauli::X), pauli(Pauli::Y), pauli(Pauli::Z)]
}

pub fn reduce_to_first(rho2: &DenseTensor) -> DenseTensor {
    DenseTensor::from_fn(vec![2, 2], |i| (0..2).map(|b| rho2.get(&[i[0] * 2 + b, i[1] * 2 + b])).sum())
}

pub fn reduce_to_second(rho2: &DenseTensor) -> DenseTensor {
    DenseTensor::from_fn(vec![2, 2], |i| (0..2).map(|a| rho2.get(&[a * 2 + i[0], a * 2 + i[1]])).sum())
}

/// Connected correlators Q^{αα} for α = x, y, z.
pub fn connected_correlators(rho2: &DenseTensor) -> [f64; 3] {
    let r1 = reduce_to_first(rho2);
    let r2 = reduce_to_second(rho2);
    let ops = site_ops();
    let mut q = [0.0; 3];
    for (k, s) in ops.iter().enumerate() {
        let both = expect(rho2, &kron(s, s).unwrap());
        q[k] = both - expect(&r1, s) * expect(&r2, s);
    }
    q
}

/// Bounds on the localizable entanglement: (Q_max, C_A).
pub fn localizable_bounds(rho2: &DenseTensor) -> Result<(f64, f64)> {
    let q = connected_correlators(rho2);
    let q_max = q.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let c_a = concurrence_a(rho2)?;
    if q_max > c_a + 1e-8 {
        return Err(Error::InvalidDensityMatrix(format!("Q_max = {q_max} exceeds C_A = {c_a}")));
    }
    Ok((q_max, c_a))
}

pub fn local_entanglement(rho2: &DenseTensor) -> Result<f64> {
    entropy(rho2)
}

/// −Σ λ² log₂ λ² of a bond vector after normalising Σ λ² = 1.
pub fn entanglement_per_bond(lambda: &[f64]) -> f64 {
    let norm: f64 = lambda.iter().map(|x| x * x).sum();
    if norm <= 0.0 {
        return 0.0;
    }
    let s: f64 = lambda.iter().map(|x| -xlog2x(x * x / norm)).sum();
    s.max(0.0)
}

/// Closed forms for C_A that hold inside a particular symmetry sector.
#[derive(Clone, Copy, Debug)]
pub enum SectorCorrelators {
    /// ⟨σσ⟩, ⟨σ_i + σ_j⟩, ⟨σ_i − σ_j⟩, all along one axis a for which ρ₂
    /// commutes with σa⊗σa. That covers a kept U(1) (a = its rotation axis,
    /// z for XXZ) and a kept spin flip with broken U(1) (a = x, the XY phase
    /// as simple updates leave it). Mixing axes is only exact when the
    /// one-site terms vanish.
    UOneKept { zz: f64, x_sum: f64, x_diff: f64 },
    /// U(1) broken, Z₂ kept: ⟨σxσx⟩, ⟨σx⟩.
    ZTwoKept { xx: f64, x: f64 },
}

fn checked_sqrt(x: f64) -> Result<f64> {
    if x < -1e-10 {
        return Err(Error::InconsistentCorrelators(format!("square-root argument {x:.3e}")));
    }
    Ok(x.max(0.0).sqrt())
}

pub fn symmetry_resolved_ca(c: SectorCorrelators) -> Result<f64> {
    match c {
        SectorCorrelators::UOneKept { zz, x_sum, x_diff } => Ok(0.5 * checked_sqrt((1.0 + zz).powi(2) - x_sum * x_sum)?
            + 0.5 * checked_sqrt((1.0 - zz).powi(2) - x_diff * x_diff)?),
        SectorCorrelators::ZTwoKept { xx, x } => {
            Ok(0.5 * (checked_sqrt((1.0 + xx).powi(2) - 4.0 * x * x)? + 1.0 - xx))
        }
    }
}

/// The axis a (x, y or z, tried in the order z, x, y) whose π rotation
/// σa⊗σa leaves ρ₂ unchanged to within `tol`, if any.
pub fn kept_axis(rho2: &DenseTensor, tol: f64) -> Option<Pauli> {
    [Pauli::Z, Pauli::X, Pauli::Y].into_iter().find(|&a| {
        let p = pauli_pair(a);
        match (rho2.matmul(&p), p.matmul(rho2)) {
            (Ok(l), Ok(r)) => l.sub(&r).map(|c| c.max_abs() <= tol).unwrap_or(false),
            _ => false,
        }
    })
}

/// C_A from the closed form of the detected sector, for cross-checking
/// against the Wootters spectrum. `None` outside every sector.
pub fn closed_form_ca(rho2: &DenseTensor, tol: f64) -> Option<Result<f64>> {
    let a = kept_axis(rho2, tol)?;
    let s = pauli(a);
    let id = pauli(Pauli::I);
    let (first, second) = (expect(rho2, &kron(&s, &id).ok()?), expect(rho2, &kron(&id, &s).ok()?));
    Some(symmetry_resolved_ca(SectorCorrelators::UOneKept {
        zz: expect(rho2, &pauli_pair(a)),
        x_sum: first + second,
        x_diff: first - second,
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Magnetizations {
    pub m_x: f64,
    pub m_z: f64,
    pub m_x_st: f64,
    pub m_z_st: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonogamyReport {
    /// τ₁ of the central site.
    pub lhs_tau1: f64,
    /// Σ over nearest neighbours of C_F².
    pub nn_cf2: f64,
    /// Σ over nearest neighbours of C_A².
    pub nn_ca2: f64,
    /// τ₁ − Σ C_F², non-negative by the CKW inequality.
    pub delta_f: f64,
    /// Σ C_A² − τ₁; recorded, not asserted.
    pub slack_a: f64,
    /// Share of τ₁ carried by nearest-neighbour pairs.
    pub fraction: f64,
    pub ckw_holds: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureRecord {
    pub control: f64,
    pub energy: f64,
    pub mags: Magnetizations,
    pub s1: f64,
    pub tau1: f64,
    pub c_f: f64,
    pub e_f: f64,
    pub c_a: f64,
    pub negativity: f64,
    pub log_negativity: f64,
    pub q_max: f64,
    pub s_loc: f64,
    /// NaN for chains (no canonical bond vectors).
    pub s_pb: f64,
    pub monogamy: MonogamyReport,
}

impl MeasureRecord {
    pub const CSV_HEADER: [&'static str; 22] = [
        "control", "energy", "m_x", "m_z", "m_x_st", "m_z_st", "s1", "tau1", "c_f", "e_f", "c_a", "negativity",
        "log_negativity", "q_max", "s_loc", "s_pb", "monogamy_lhs", "nn_cf2", "nn_ca2", "delta_f", "slack_a",
        "fraction",
    ];

    pub fn csv_values(&self) -> [f64; 22] {
        let m = &self.monogamy;
        [
            self.control,
            self.energy,
            self.mags.m_x,
            self.mags.m_z,
            self.mags.m_x_st,
            self.mags.m_z_st,
            self.s1,
            self.tau1,
            self.c_f,
            self.e_f,
            self.c_a,
            self.negativity,
            self.log_negativity,
            self.q_max,
            self.s_loc,
            self.s_pb,
            m.lhs_tau1,
            m.nn_cf2,
            m.nn_ca2,
            m.delta_f,
            m.slack_a,
            m.fraction,
        ]
    }

    pub fn from_csv_values(v: &[f64]) -> Option<Self> {
        if v.len() != 22 {
            return None;
        }
        Some(MeasureRecord {
            control: v[0],
            energy: v[1],
            mags: Magnetizations { m_x: v[2], m_z: v[3], m_x_st: v[4], m_z_st: v[5] },
            s1: v[6],
            tau1: v[7],
            c_f: v[8],
            e_f: v[9],
            c_a: v[10],
            negativity: v[11],
            log_negativity: v[12],
            q_max: v[13],
            s_loc: v[14],
            s_pb: v[15],
            monogamy: MonogamyReport {
                lhs_tau1: v[16],
                nn_cf2: v[17],
                nn_ca2: v[18],
                delta_f: v[19],
                slack_a: v[20],
                fraction: v[21],
                ckw_holds: v[19] >= -1e-8,
            },
        })
    }
}

/// Everything a ground-state solver hands over for measurement.
#[derive(Clone, Debug)]
pub struct StateData {
    pub control: f64,
    pub energy: f64,
    /// One-site density matrices of sublattices a and b.
    pub rho1: [DenseTensor; 2],
    /// Distinct nearest-neighbour two-site density matrices, each with the
    /// number of bonds of that kind touching one site.
    pub bonds: Vec<(DenseTensor, usize)>,
    /// Bond vectors of the network, when it has them in canonical form.
    pub bond_vectors: Option<Vec<Vec<f64>>>,
}

/// Monogamy of one site against its nearest neighbours.
pub fn monogamy_audit(tau1: f64, pairs: &[(f64, f64, usize)]) -> MonogamyReport {
    let nn_cf2: f64 = pairs.iter().map(|(cf, _, k)| *k as f64 * cf * cf).sum();
    let nn_ca2: f64 = pairs.iter().map(|(_, ca, k)| *k as f64 * ca * ca).sum();
    let delta_f = tau1 - nn_cf2;
    MonogamyReport {
        lhs_tau1: tau1,
        nn_cf2,
        nn_ca2,
        delta_f,
        slack_a: nn_ca2 - tau1,
        fraction: if tau1 > 1e-12 { nn_cf2 / tau1 } else { 0.0 },
        ckw_holds: delta_f >= -1e-8,
    }
}

pub fn measure(state: &StateData) -> Result<MeasureRecord> {
    let [x, _, z] = site_ops();
    let (xa, xb) = (expect(&state.rho1[0], &x), expect(&state.rho1[1], &x));
    let (za, zb) = (expect(&state.rho1[0], &z), expect(&state.rho1[1], &z));
    let mags = Magnetizations {
        m_x: ((xa + xb) / 2.0).abs(),
        m_z: ((za + zb) / 2.0).abs(),
        m_x_st: ((xa - xb) / 2.0).abs(),
        m_z_st: ((za - zb) / 2.0).abs(),
    };
    let s1 = 0.5 * (entropy(&state.rho1[0])? + entropy(&state.rho1[1])?);
    let tau1 = 0.5 * (one_tangle(&state.rho1[0])? + one_tangle(&state.rho1[1])?);

    let weight: f64 = state.bonds.iter().map(|(_, k)| *k as f64).sum();
    let mut acc = [0.0f64; 8];
    let mut pairs = Vec::new();
    for (rho2, k) in &state.bonds {
        let w = *k as f64 / weight;
        let cf = concurrence_f(rho2)?;
        let (q_max, ca) = localizable_bounds(rho2)?;
        let (n, ln) = negativity(rho2)?;
        let sl = local_entanglement(rho2)?;
        for (a, v) in acc.iter_mut().zip([cf, entanglement_of_formation(cf), ca, n, ln, q_max, sl, 0.0]) {
            *a += w * v;
        }
        pairs.push((cf, ca, *k));
    }
    let s_pb = match &state.bond_vectors {
        Some(v) if !v.is_empty() => v.iter().map(|l| entanglement_per_bond(l)).sum::<f64>() / v.len() as f64,
        _ => f64::NAN,
    };
    Ok(MeasureRecord {
        control: state.control,
        energy: state.energy,
        mags,
        s1,
        tau1,
        c_f: acc[0],
        e_f: acc[1],
        c_a: acc[2],
        negativity: acc[3],
        log_negativity: acc[4],
        q_max: acc[5],
        s_loc: acc[6],
        s_pb,
        monogamy: monogamy_audit(tau1, &pairs),
    })
}

/// Projector onto a pure two-qubit state given by its four amplitudes.
pub fn pure_state(amps: [C64; 4]) -> DenseTensor {
    let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    DenseTensor::from_fn(vec![4, 4], |i| amps[i[0]] * amps[i[1]].conj() / (n * n))
}

/// p |Φ⁺⟩⟨Φ⁺| + (1 − p) 1/4.
pub fn werner(p: f64) -> DenseTensor {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let bell = pure_state([C64::new(h, 0.0), z, z, C64::new(h, 0.0)]);
    bell.scale(C64::new(p, 0.0)).add(&DenseTensor::identity(4).scale(C64::new((1.0 - p) / 4.0, 0.0))).unwrap()
}
