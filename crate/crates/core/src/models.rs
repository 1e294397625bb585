//! Spin-1/2 lattice models, their bond Hamiltonians, imaginary-time gates
//! and the matrix-product-operator factors used by the translation-invariant
//! chain algorithm.
//!
//! Basis convention: index 0 is spin up (σz = +1). Two-site operators act on
//! (site a ⊗ site b) with site a on the slow index.

use crate::error::{Error, Result};
use crate::linalg::hermitian_fn;
use crate::tensor::{kron, DenseTensor};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ising,
    Xxz,
}

/// H = J Σ σzσz + h Σ σx (Ising) or H = J Σ (σxσx + σyσy + Δ σzσz) (XXZ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub coupling_j: f64,
    pub field_h: f64,
    pub anisotropy: f64,
    pub dimension: u8,
    /// Small pinning field along the model's ordered pattern; zero by default.
    #[serde(default)]
    pub symmetry_bias: f64,
}

impl ModelSpec {
    pub fn ising(h: f64, dimension: u8) -> Self {
        ModelSpec { kind: ModelKind::Ising, coupling_j: -1.0, field_h: h, anisotropy: 0.0, dimension, symmetry_bias: 0.0 }
    }

    pub fn xxz(delta: f64, dimension: u8) -> Self {
        ModelSpec { kind: ModelKind::Xxz, coupling_j: 1.0, field_h: 0.0, anisotropy: delta, dimension, symmetry_bias: 0.0 }
    }

    pub fn with_bias(mut self, bias: f64) -> Self {
        self.symmetry_bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dimension)));
        }
        let finite = [self.coupling_j, self.field_h, self.anisotropy, self.symmetry_bias];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if self.kind == ModelKind::Xxz && self.coupling_j <= 0.0 {
            return Err(Error::Config("XXZ coupling must be positive".into()));
        }
        Ok(())
    }

    /// Number of bonds meeting at a site.
    pub fn coordination(&self) -> usize {
        if self.dimension == 1 {
            2
        } else {
            4
        }
    }

    /// Signs of the pinning field on sublattices (a, b). Uniform for a
    /// ferromagnetic pattern, staggered for a Néel pattern.
    pub fn bias_pattern(&self) -> (f64, f64) {
        let staggered = match self.kind {
            ModelKind::Ising => self.coupling_j > 0.0,
            ModelKind::Xxz => self.anisotropy >= 0.0,
        };
        if staggered {
            (1.0, -1.0)
        } else {
            (1.0, 1.0)
        }
    }

    /// The control parameter a sweep varies: h for Ising, Δ for XXZ.
    pub fn control(&self) -> f64 {
        match self.kind {
            ModelKind::Ising => self.field_h,
            ModelKind::Xxz => self.anisotropy,
        }
    }

    pub fn with_control(mut self, p: f64) -> Self {
        match self.kind {
            ModelKind::Ising => self.field_h = p,
            ModelKind::Xxz => self.anisotropy = p,
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

pub fn pauli(p: Pauli) -> DenseTensor {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let data = match p {
        Pauli::I => vec![one, o, o, one],
        Pauli::X => vec![o, one, one, o],
        Pauli::Y => vec![o, -i, i, o],
        Pauli::Z => vec![one, o, o, -one],
    };
    DenseTensor::new(vec![2, 2], data).expect("2x2")
}

pub fn pauli_pair(p: Pauli) -> DenseTensor {
    let s = pauli(p);
    kron(&s, &s).expect("matrices")
}

fn combine(terms: &[(f64, DenseTensor)], n: usize) -> DenseTensor {
    let mut out = DenseTensor::zeros(vec![n, n]);
    for (c, t) in terms {
        out = out.add(&t.scale(C64::new(*c, 0.0))).expect("same shape");
    }
    out
}

/// The bond Hamiltonian: the coupling plus each site's one-body terms split
/// evenly over the bonds touching it (h/2 per bond end in 1D, h/4 in 2D).
pub fn bond_hamiltonian(model: &ModelSpec) -> DenseTensor {
    let id = pauli(Pauli::I);
    let x = pauli(Pauli::X);
    let z = pauli(Pauli::Z);
    let share = 1.0 / model.coordination() as f64;
    let (sa, sb) = model.bias_pattern();
    let b = model.symmetry_bias * share;
    let xa = kron(&x, &id).unwrap();
    let xb = kron(&id, &x).unwrap();
    let za = kron(&z, &id).unwrap();
    let zb = kron(&id, &z).unwrap();
    let j = model.coupling_j;
    match model.kind {
        ModelKind::Ising => combine(
            &[
                (j, pauli_pair(Pauli::Z)),
                (model.field_h * share, xa),
                (model.field_h * share, xb),
                (-b * sa, za),
                (-b * sb, zb),
            ],
            4,
        ),
        ModelKind::Xxz => combine(
            &[
                (j, pauli_pair(Pauli::X)),
                (j, pauli_pair(Pauli::Y)),
                (j * model.anisotropy, pauli_pair(Pauli::Z)),
                (-b * sa, za),
                (-b * sb, zb),
            ],
            4,
        ),
    }
}

/// Which bond of the bipartite square lattice a gate acts on, named by the
/// side of the sublattice-a tensor the bond leaves from: k = left, l = up,
/// m = right, n = down. Chains use `Chain`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondLabel {
    Chain,
    K,
    L,
    M,
    N,
}

#[derive(Clone, Debug)]
pub struct TwoSiteGate {
    pub matrix: DenseTensor,
    pub tau: f64,
    pub bond: BondLabel,
}

/// exp(-τ h_bond), exact via eigen-decomposition.
pub fn exact_gate(model: &ModelSpec, tau: f64, bond: BondLabel) -> Result<TwoSiteGate> {
    let matrix = hermitian_fn(&bond_hamiltonian(model), |e| (-tau * e).exp())?;
    Ok(TwoSiteGate { matrix, tau, bond })
}

/// exp(κ σ⊗σ) = cosh κ + sinh κ σ⊗σ, valid because (σ⊗σ)² = 1.
pub fn pauli_pair_exp(kappa: f64, p: Pauli) -> DenseTensor {
    let id4 = DenseTensor::identity(4);
    combine(&[(kappa.cosh(), id4), (kappa.sinh(), pauli_pair(p))], 4)
}

/// exp(κ σ) = cosh κ + sinh κ σ.
pub fn pauli_exp(kappa: f64, p: Pauli) -> DenseTensor {
    combine(&[(kappa.cosh(), pauli(Pauli::I)), (kappa.sinh(), pauli(p))], 2)
}

/// One Trotter factor in MPO form: W[l, r, out, in] with virtual extent
/// 1 (one-body factor) or 2 (nearest-neighbour exponential).
#[derive(Clone, Debug)]
pub struct MpoTensor {
    pub w: DenseTensor,
}

impl MpoTensor {
    pub fn virtual_dim(&self) -> usize {
        self.w.shape()[0]
    }

    /// exp(κ Σ_i X_i X_{i+1}) for a one-site operator X with X² = ±1.
    /// Built as W_{αβ} = R_α L_β with L_0 = R_0 = √cosh κ and
    /// L_1 = R_1 = √sinh κ X, which requires κ ≥ 0.
    pub fn pair_exponential(kappa: f64, op: &DenseTensor) -> Result<Self> {
        if kappa < 0.0 {
            return Err(Error::UnsupportedParameter(format!(
                "negative MPO exponent κ = {kappa}: the real symmetric MPO needs κ ≥ 0; \
                 use the two-site (TEBD) evolution for this parameter"
            )));
        }
        let (c, s) = (kappa.cosh(), kappa.sinh());
        let id = pauli(Pauli::I);
        let x2 = op.matmul(op)?;
        let blocks = [
            [id.scale(C64::new(c, 0.0)), op.scale(C64::new((c * s).sqrt(), 0.0))],
            [op.scale(C64::new((c * s).sqrt(), 0.0)), x2.scale(C64::new(s, 0.0))],
        ];
        let w = DenseTensor::from_fn(vec![2, 2, 2, 2], |i| blocks[i[0]][i[1]].get(&[i[2], i[3]]));
        Ok(MpoTensor { w })
    }

    pub fn one_site(op: &DenseTensor) -> Self {
        let w = op.reshape(vec![1, 1, 2, 2]).expect("2x2 operator");
        MpoTensor { w }
    }
}

/// The chain algorithm works in a frame where every other site is rotated
/// by a Pauli matrix, which turns Néel order into uniform order and makes
/// all MPO exponents non-negative for antiferromagnets.
#[derive(Clone, Debug, PartialEq)]
pub struct SublatticeFrame {
    pub odd_rotation: Option<Pauli>,
}

impl SublatticeFrame {
    /// Maps a two-site operator (even ⊗ odd) between the frames; the map
    /// is an involution.
    pub fn convert_pair(&self, op: &DenseTensor) -> DenseTensor {
        match self.odd_rotation {
            None => op.clone(),
            Some(p) => {
                let u = kron(&pauli(Pauli::I), &pauli(p)).unwrap();
                u.matmul(op).unwrap().matmul(&u.adjoint().unwrap()).unwrap()
            }
        }
    }

    pub fn convert_odd_site(&self, op: &DenseTensor) -> DenseTensor {
        match self.odd_rotation {
            None => op.clone(),
            Some(p) => {
                let u = pauli(p);
                u.matmul(op).unwrap().matmul(&u.adjoint().unwrap()).unwrap()
            }
        }
    }
}

/// Trotter factors exp(-τ H) ≈ Π_f F_f for the translation-invariant chain,
/// expressed in the rotated frame that is also returned.
/// Ising: [zz, one-body]; XXZ: [xx, yy, zz] (+ one-body when pinned).
pub fn evolution_mpo(model: &ModelSpec, tau: f64) -> Result<(Vec<MpoTensor>, SublatticeFrame)> {
    model.validate()?;
    if model.dimension != 1 {
        return Err(Error::UnsupportedParameter("MPO evolution is defined for chains only".into()));
    }
    let j = model.coupling_j;
    let b = model.symmetry_bias;
    let x = pauli(Pauli::X);
    let z = pauli(Pauli::Z);
    // In the rotated frame the pinning field is uniform (-b σz per site)
    // whenever it was staggered in the lab frame, and vice versa.
    match model.kind {
        ModelKind::Ising => {
            let frame = SublatticeFrame { odd_rotation: if j > 0.0 { Some(Pauli::X) } else { None } };
            let mut factors = vec![MpoTensor::pair_exponential(tau * j.abs(), &z)?];
            let site = combine(&[(model.field_h, x), (-b, z)], 2);
            if model.field_h != 0.0 || b != 0.0 {
                factors.push(MpoTensor::one_site(&hermitian_fn(&site, |e| (-tau * e).exp())?));
            }
            Ok((factors, frame))
        }
        ModelKind::Xxz => {
            let delta = model.anisotropy;
            let frame = SublatticeFrame { odd_rotation: Some(Pauli::Y) };
            if delta < 0.0 {
                return Err(Error::UnsupportedParameter(format!(
                    "XXZ with Δ = {delta} < 0 gives a negative MPO exponent in the \
                     rotated frame; use the two-site (TEBD) evolution"
                )));
            }
            // H' = J Σ (-σxσx + σyσy - Δ σzσz), and σyσy = -(iσy)(iσy).
            let iy = pauli(Pauli::Y).scale(C64::new(0.0, 1.0));
            let mut factors = vec![
                MpoTensor::pair_exponential(tau * j, &x)?,
                MpoTensor::pair_exponential(tau * j, &iy)?,
                MpoTensor::pair_exponential(tau * j * delta, &z)?,
            ];
            if b != 0.0 {
                let site = z.scale(C64::new(-b, 0.0));
                factors.push(MpoTensor::one_site(&hermitian_fn(&site, |e| (-tau * e).exp())?));
            }
            Ok((factors, frame))
        }
    }
}
