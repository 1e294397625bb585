//! Contraction of the infinite double-layer network of a bipartite PEPS.
//!
//! Two independent engines produce the density matrix of one 2×2 plaquette:
//!
//! * TERG coarse-grains the network by diagonal SVD splits, carrying four
//!   impurity tensors (physical legs open) along; after each step the four
//!   impurities are closed on a 2×2 torus.
//! * CTMRG grows a twelve-tensor environment (4 corners, 2 edges per side)
//!   by left moves; the other directions are left moves of the rotated
//!   configuration.
//!
//! Plaquette layout, in reading order: TL = a, TR = b, BL = b, BR = a.
//! Composite double-layer indices are `ket·D + bra`.

use crate::entanglement::StateData;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, truncated_svd};
use crate::models::{bond_hamiltonian, ModelSpec};
use crate::mps::finish_rdm;
use crate::peps::PepsState;
use crate::tensor::{contract, DenseTensor};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Relative gap below which the kept/discarded boundary counts as a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Terg,
    Ctmrg,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Terg => "terg",
            Engine::Ctmrg => "ctmrg",
        }
    }
}

/// What decides that a CTMRG environment has converged. TERG always uses ρ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Witness {
    Rho,
    CornerSpectrum,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnvOptions {
    pub d_cut: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub witness: Witness,
}

impl EnvOptions {
    pub fn new(d_cut: usize) -> Self {
        EnvOptions { d_cut, epsilon: 1e-8, max_iter: 60, witness: Witness::Rho }
    }
}

/// Σ_σ A^σ ⊗ A^{σ*} with axes (L, U, R, D), each of extent D².
pub fn double_layer(a: &DenseTensor) -> Result<DenseTensor> {
    let s = a.shape().to_vec();
    let t = contract(a, &a.conj(), &[(0, 0)])?;
    t.permute(&[0, 4, 1, 5, 2, 6, 3, 7])?
        .into_reshaped(vec![s[1] * s[1], s[2] * s[2], s[3] * s[3], s[4] * s[4]])
}

/// The same with the physical pair left open: axes (L, U, R, D, P) with
/// P = ket·2 + bra.
pub fn impurity(a: &DenseTensor) -> Result<DenseTensor> {
    let s = a.shape().to_vec();
    let t = contract(a, &a.conj(), &[])?;
    t.permute(&[1, 6, 2, 7, 3, 8, 4, 9, 0, 5])?
        .into_reshaped(vec![s[1] * s[1], s[2] * s[2], s[3] * s[3], s[4] * s[4], s[0] * s[0]])
}

/// Keeps the `keep` leading columns (eigen- or singular vectors) and reports
/// whether the cut falls inside a degenerate multiplet.
fn cut(values: &[f64], keep: usize) -> bool {
    if keep == 0 || keep >= values.len() || values[0] <= 0.0 {
        return false;
    }
    let tie = (values[keep - 1] - values[keep]).abs() / values[0] < TIE_TOL;
    if tie {
        log::debug!("degenerate spectrum at the cut ({} kept); keeping by index order", keep);
    }
    tie
}

fn leading_columns(m: &DenseTensor, k: usize) -> DenseTensor {
    let n = m.shape()[0];
    DenseTensor::from_fn(vec![n, k], |i| m.get(&[i[0], i[1]]))
}

fn rescale(t: &mut DenseTensor) {
    let m = t.max_abs();
    if m > 0.0 && m.is_finite() {
        t.scale_real(1.0 / m);
    }
}

// ---------------------------------------------------------------------------
// Plaquette density matrix
// ---------------------------------------------------------------------------

/// Sites of the plaquette, in the order used by ρ₄.
pub const TL: usize = 0;
pub const TR: usize = 1;
pub const BL: usize = 2;
pub const BR: usize = 3;

/// Site pairs realising the four bond directions k, l, m, n, with the
/// a-site first.
pub const BOND_SITES: [[usize; 2]; 4] = [[BR, BL], [BR, TR], [TL, TR], [TL, BL]];

#[derive(Clone, Debug)]
pub struct PlaquetteRdm {
    pub engine: Engine,
    /// 16×16, sites (TL, TR, BL, BR) with TL on the slowest index.
    pub rho4: DenseTensor,
    pub iterations: usize,
    pub drift: f64,
    pub converged: bool,
    /// Truncations that cut through a degenerate multiplet.
    pub ties: usize,
}

fn normalized(rho: DenseTensor) -> Result<DenseTensor> {
    let mut h = rho.add(&rho.adjoint()?)?;
    let tr = h.trace()?.re;
    if !tr.is_finite() || tr.abs() < 1e-300 {
        return Err(Error::InvalidDensityMatrix("plaquette contraction vanished".into()));
    }
    h.scale_real(1.0 / tr);
    Ok(h)
}

/// Partial trace of an n-qubit ρ keeping `keep`, in the listed order.
pub fn reduce(rho: &DenseTensor, n: usize, keep: &[usize]) -> DenseTensor {
    let dim = 1usize << keep.len();
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let bit = |idx: usize, site: usize| (idx >> (n - 1 - site)) & 1;
    let full = 1usize << n;
    let mut out = DenseTensor::zeros(vec![dim, dim]);
    for r in 0..full {
        for c in 0..full {
            if traced.iter().any(|&s| bit(r, s) != bit(c, s)) {
                continue;
            }
            let pick = |idx: usize| keep.iter().fold(0, |acc, &s| acc * 2 + bit(idx, s));
            let (i, j) = (pick(r), pick(c));
            let v = out.get(&[i, j]) + rho.data()[r * full + c];
            out.set(&[i, j], v);
        }
    }
    out
}

impl PlaquetteRdm {
    fn new(engine: Engine, raw: DenseTensor) -> Result<Self> {
        Ok(PlaquetteRdm { engine, rho4: normalized(raw)?, iterations: 0, drift: f64::NAN, converged: false, ties: 0 })
    }

    pub fn sites(&self, keep: &[usize]) -> Result<DenseTensor> {
        finish_rdm(reduce(&self.rho4, 4, keep))
    }

    /// Bond in direction `bond` (0..4 = k, l, m, n), a-site first.
    pub fn bond(&self, bond: usize) -> Result<DenseTensor> {
        self.sites(&BOND_SITES[bond])
    }

    /// Tr_{CD} ρ₄: the horizontal bond inside the plaquette.
    pub fn horizontal(&self) -> Result<DenseTensor> {
        self.sites(&[TL, TR])
    }

    /// Tr_{BD} ρ₄: the vertical bond inside the plaquette.
    pub fn vertical(&self) -> Result<DenseTensor> {
        self.sites(&[TL, BL])
    }

    /// One-site matrices of sublattices a and b.
    pub fn rho1(&self) -> Result<[DenseTensor; 2]> {
        Ok([self.sites(&[TL])?, self.sites(&[TR])?])
    }

    /// Energy per bond, averaged over the four bond directions.
    pub fn energy(&self, model: &ModelSpec) -> Result<f64> {
        let h = bond_hamiltonian(&model.with_bias(0.0));
        let mut e = 0.0;
        for bond in 0..4 {
            e += self.bond(bond)?.matmul(&h)?.trace()?.re;
        }
        Ok(e / 4.0)
    }

    pub fn state_data(&self, model: &ModelSpec, control: f64, bond_vectors: Option<Vec<Vec<f64>>>) -> Result<StateData> {
        let mut bonds = Vec::with_capacity(4);
        for b in 0..4 {
            bonds.push((self.bond(b)?, 1));
        }
        Ok(StateData { control, energy: self.energy(model)?, rho1: self.rho1()?, bonds, bond_vectors })
    }
}

/// Measures a PEPS through the chosen engine.
pub fn plaquette_rdm(peps: &PepsState, engine: Engine, opts: &EnvOptions) -> Result<PlaquetteRdm> {
    match engine {
        Engine::Terg => terg_rdm(peps, opts),
        Engine::Ctmrg => ctmrg_rdm(peps, opts),
    }
}

fn frob_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// TERG
// ---------------------------------------------------------------------------

/// A physical leg carried by an impurity tensor: (plaquette site, is bra).
type Leg = (usize, bool);

#[derive(Clone, Debug)]
struct Impurity {
    /// (L, U, R, D, P); P is the product of the legs' extents (2 each).
    t: DenseTensor,
    legs: Vec<Leg>,
}

/// Half of a split tensor: three virtual axes and a physical axis.
struct Piece {
    t: DenseTensor,
    legs: Vec<Leg>,
}

#[derive(Clone, Copy)]
enum Diagonal {
    /// (L, U) | (R, D): pieces S3 (L, U, x) and S1 (x, R, D).
    Main,
    /// (U, R) | (D, L): pieces S2 (U, R, x) and S4 (x, D, L).
    Anti,
}

/// State of the coarse-graining. Sites alternate between the two split
/// diagonals; the impurity block has its top-left corner on an anti-diagonal
/// site, so every coarse plaquette receives exactly two impurity pieces and
/// the four impurities stay a 2×2 block of the coarse lattice.
#[derive(Clone, Debug)]
pub struct Terg {
    /// Regular tensors split along the main and the anti diagonal.
    regular: [DenseTensor; 2],
    imp: [Impurity; 4],
    d_cut: usize,
    pub steps: usize,
    pub ties: usize,
}

impl Terg {
    pub fn new(peps: &PepsState, d_cut: usize) -> Result<Self> {
        let (a, b) = peps.absorb_bond_vectors();
        Self::from_tensors(&a, &b, d_cut)
    }

    pub fn from_tensors(a: &DenseTensor, b: &DenseTensor, d_cut: usize) -> Result<Self> {
        let with_phys = |t: DenseTensor| -> Result<DenseTensor> {
            let mut s = t.shape().to_vec();
            s.push(1);
            t.into_reshaped(s)
        };
        let (ta, tb) = (with_phys(double_layer(a)?)?, with_phys(double_layer(b)?)?);
        let (ia, ib) = (impurity(a)?, impurity(b)?);
        let imp = |t: &DenseTensor, site: usize| Impurity { t: t.clone(), legs: vec![(site, false), (site, true)] };
        Ok(Terg {
            // a-sites sit on the anti diagonal (the block's top-left corner).
            regular: [tb, ta],
            imp: [imp(&ia, TL), imp(&ib, TR), imp(&ib, BL), imp(&ia, BR)],
            d_cut: d_cut.max(1),
            steps: 0,
            ties: 0,
        })
    }

    fn split(&mut self, t: &DenseTensor, legs: &[Leg], diag: Diagonal) -> Result<(Piece, Piece)> {
        let s = t.shape().to_vec();
        let (p0, p1) = if legs.is_empty() { (1, 1) } else { (2, 2) };
        let t6 = t.reshape(vec![s[0], s[1], s[2], s[3], p0, p1])?;
        // Row block (axes i, j, p0), column block (axes k, l, p1).
        let (perm, rows, cols) = match diag {
            Diagonal::Main => ([0, 1, 4, 2, 3, 5], (s[0], s[1]), (s[2], s[3])),
            Diagonal::Anti => ([1, 2, 4, 3, 0, 5], (s[1], s[2]), (s[3], s[0])),
        };
        let m = t6.permute(&perm)?.into_reshaped(vec![rows.0 * rows.1 * p0, cols.0 * cols.1 * p1])?;
        let svd = truncated_svd(&m, None, 1e-14)?;
        let keep = svd.s.len().min(self.d_cut);
        if cut(&svd.s, keep) {
            self.ties += 1;
        }
        let sq: Vec<f64> = svd.s[..keep].iter().map(|x| x.sqrt()).collect();
        let u = leading_columns(&svd.u, keep).scale_axis(1, &sq)?;
        let ncol = svd.v_dag.shape()[1];
        let v = DenseTensor::from_fn(vec![keep, ncol], |i| svd.v_dag.get(i)).scale_axis(0, &sq)?;
        let first = u.into_reshaped(vec![rows.0, rows.1, p0, keep])?.permute(&[0, 1, 3, 2])?;
        let second = v.into_reshaped(vec![keep, cols.0, cols.1, p1])?;
        let (l0, l1) = if legs.is_empty() { (vec![], vec![]) } else { (vec![legs[0]], vec![legs[1]]) };
        Ok((Piece { t: first, legs: l0 }, Piece { t: second, legs: l1 }))
    }

    /// Contracts the four pieces meeting in a plaquette (S1 from its top-left
    /// site, S4 top-right, S2 bottom-left, S3 bottom-right). New axes:
    /// L from S2, U from S1, R from S4, D from S3.
    fn plaquette(s1: &Piece, s4: &Piece, s2: &Piece, s3: &Piece) -> Result<Impurity> {
        // S1 (β, a, b, p1)  S4 (γ, c, a, p4)  S2 (b, e, α, p2)  S3 (e, c, δ, p3)
        let y1 = contract(&s1.t, &s4.t, &[(1, 2)])?; // β b p1 γ c p4
        let y2 = contract(&s2.t, &s3.t, &[(1, 0)])?; // b α p2 c δ p3
        let z = contract(&y1, &y2, &[(1, 0), (4, 3)])?; // β p1 γ p4 α p2 δ p3
        let z = z.permute(&[4, 0, 2, 6, 1, 3, 5, 7])?;
        let s = z.shape().to_vec();
        let t = z.into_reshaped(vec![s[0], s[1], s[2], s[3], s[4] * s[5] * s[6] * s[7]])?;
        let legs = [&s1.legs, &s4.legs, &s2.legs, &s3.legs].into_iter().flatten().copied().collect();
        Ok(Impurity { t, legs })
    }

    /// One coarse-graining step: halves the number of tensors and rotates
    /// the lattice by 45°.
    pub fn step(&mut self) -> Result<()> {
        let (reg_main, reg_anti) = (self.regular[0].clone(), self.regular[1].clone());
        let (s3r, s1r) = self.split(&reg_main, &[], Diagonal::Main)?;
        let (s2r, s4r) = self.split(&reg_anti, &[], Diagonal::Anti)?;
        let imp = self.imp.clone();
        let (s2_tl, s4_tl) = self.split(&imp[TL].t, &imp[TL].legs, Diagonal::Anti)?;
        let (s3_tr, s1_tr) = self.split(&imp[TR].t, &imp[TR].legs, Diagonal::Main)?;
        let (s3_bl, s1_bl) = self.split(&imp[BL].t, &imp[BL].legs, Diagonal::Main)?;
        let (s2_br, s4_br) = self.split(&imp[BR].t, &imp[BR].legs, Diagonal::Anti)?;

        let mut reg = Self::plaquette(&s1r, &s4r, &s2r, &s3r)?.t;
        rescale(&mut reg);
        let mut next = [
            Self::plaquette(&s1r, &s4_tl, &s2r, &s3_bl)?,
            Self::plaquette(&s1r, &s4r, &s2_tl, &s3_tr)?,
            Self::plaquette(&s1_bl, &s4_br, &s2r, &s3r)?,
            Self::plaquette(&s1_tr, &s4r, &s2_br, &s3r)?,
        ];
        for i in next.iter_mut() {
            rescale(&mut i.t);
        }
        self.regular = [reg.clone(), reg];
        self.imp = next;
        self.steps += 1;
        Ok(())
    }

    /// The four impurities closed on a 2×2 torus: unnormalized ρ₄.
    pub fn close(&self) -> Result<DenseTensor> {
        let [tl, tr, bl, br] = &self.imp;
        let top = contract(&tl.t, &tr.t, &[(2, 0), (0, 2)])?; // U1 D1 P1 U2 D2 P2
        let bot = contract(&bl.t, &br.t, &[(2, 0), (0, 2)])?; // U3 D3 P3 U4 D4 P4
        let full = contract(&top, &bot, &[(1, 0), (0, 1), (4, 3), (3, 4)])?;
        let legs: Vec<Leg> = [tl, tr, bl, br].iter().flat_map(|i| i.legs.iter().copied()).collect();
        let mut perm = Vec::with_capacity(8);
        for bra in [false, true] {
            for site in 0..4 {
                perm.push(legs.iter().position(|&l| l == (site, bra)).ok_or_else(|| {
                    Error::ShapeMismatch(format!("impurity leg ({site}, {bra}) lost in coarse-graining"))
                })?);
            }
        }
        full.into_reshaped(vec![2; 8])?.permute(&perm)?.into_reshaped(vec![16, 16])
    }
}

pub fn terg_rdm(peps: &PepsState, opts: &EnvOptions) -> Result<PlaquetteRdm> {
    let (a, b) = peps.absorb_bond_vectors();
    terg_rdm_tensors(&a, &b, opts)
}

/// TERG on explicit (already λ-absorbed) tensors.
pub fn terg_rdm_tensors(a: &DenseTensor, b: &DenseTensor, opts: &EnvOptions) -> Result<PlaquetteRdm> {
    let mut net = Terg::from_tensors(a, b, opts.d_cut)?;
    let mut out = PlaquetteRdm::new(Engine::Terg, net.close()?)?;
    for it in 1..=opts.max_iter {
        net.step()?;
        let rho = normalized(net.close()?)?;
        out.drift = frob_diff(&rho, &out.rho4);
        out.rho4 = rho;
        out.iterations = it;
        if out.drift < opts.epsilon {
            out.converged = true;
            break;
        }
    }
    out.ties = net.ties;
    if !out.converged {
        log::warn!("TERG: drift {:.3e} after {} steps", out.drift, out.iterations);
    }
    Ok(out)
}

/// TERG for a fixed number of steps (finite tori of 4·2ⁿ sites).
pub fn terg_fixed_steps(a: &DenseTensor, b: &DenseTensor, d_cut: usize, steps: usize) -> Result<PlaquetteRdm> {
    let mut net = Terg::from_tensors(a, b, d_cut)?;
    for _ in 0..steps {
        net.step()?;
    }
    let mut out = PlaquetteRdm::new(Engine::Terg, net.close()?)?;
    out.iterations = steps;
    out.ties = net.ties;
    Ok(out)
}

// ---------------------------------------------------------------------------
// CTMRG
// ---------------------------------------------------------------------------

/// Twelve environment tensors around the 2×2 block.
///
/// Boundary objects are listed clockwise: left side (bottom → top), corner
/// 0 (top-left), top side (left → right), corner 1, right side (top →
/// bottom), corner 2, bottom side (right → left), corner 3. Corners have
/// axes (prev, next); edges (prev, inward, next), where prev/next point to
/// the neighbouring boundary objects in that order.
#[derive(Clone, Debug)]
pub struct Ctmrg {
    /// Double-layer tensors of the block, slots TL, TR, BL, BR.
    sites: [DenseTensor; 4],
    /// Their open-leg versions (never renormalized).
    imps: [DenseTensor; 4],
    /// Which original plaquette site sits in each slot.
    labels: [usize; 4],
    pub corners: [DenseTensor; 4],
    pub edges: [[DenseTensor; 2]; 4],
    chi: usize,
    pub ties: usize,
}

/// Contracts axis `axis` of `t` with the ket = bra diagonal.
fn trace_axis(t: &DenseTensor, axis: usize) -> Result<DenseTensor> {
    let n = t.shape()[axis];
    let d = (n as f64).sqrt().round() as usize;
    let delta = DenseTensor::from_fn(vec![n], |i| {
        if i[0] / d == i[0] % d {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    contract(t, &delta, &[(axis, 0)])
}

fn rotate_site(t: &DenseTensor) -> Result<DenseTensor> {
    if t.rank() == 4 {
        t.permute(&[3, 0, 1, 2])
    } else {
        t.permute(&[3, 0, 1, 2, 4])
    }
}

impl Ctmrg {
    pub fn new(peps: &PepsState, chi: usize) -> Result<Self> {
        let (a, b) = peps.absorb_bond_vectors();
        Self::from_tensors(&a, &b, chi)
    }

    pub fn from_tensors(a: &DenseTensor, b: &DenseTensor, chi: usize) -> Result<Self> {
        let (ta, tb) = (double_layer(a)?, double_layer(b)?);
        let (ia, ib) = (impurity(a)?, impurity(b)?);
        let tr = |t: &DenseTensor, axes: &[usize], perm: &[usize]| -> Result<DenseTensor> {
            // Trace the highest axis first so lower indices stay valid.
            let mut out = t.clone();
            let mut ax = axes.to_vec();
            ax.sort_unstable_by(|x, y| y.cmp(x));
            for a in ax {
                out = trace_axis(&out, a)?;
            }
            out.permute(perm)
        };
        // Positions relative to the block's top-left a-site; (x + y) even is a.
        let corners = [
            tr(&ta, &[0, 1], &[1, 0])?, // (−1,−1): (R, D) → (D, R)
            tr(&tb, &[1, 2], &[0, 1])?, // (2,−1): (L, D)
            tr(&ta, &[2, 3], &[1, 0])?, // (2, 2): (L, U) → (U, L)
            tr(&tb, &[3, 0], &[1, 0])?, // (−1, 2): (U, R) → (R, U)
        ];
        let edges = [
            // left side: rows 1, 0; (U, R, D) → (D, R, U)
            [tr(&ta, &[0], &[2, 1, 0])?, tr(&tb, &[0], &[2, 1, 0])?],
            // top side: columns 0, 1; (L, R, D) → (L, D, R)
            [tr(&tb, &[1], &[0, 2, 1])?, tr(&ta, &[1], &[0, 2, 1])?],
            // right side: rows 0, 1; (L, U, D) → (U, L, D)
            [tr(&ta, &[2], &[1, 0, 2])?, tr(&tb, &[2], &[1, 0, 2])?],
            // bottom side: columns 1, 0; (L, U, R) → (R, U, L)
            [tr(&tb, &[3], &[2, 1, 0])?, tr(&ta, &[3], &[2, 1, 0])?],
        ];
        let mut env = Ctmrg {
            sites: [ta.clone(), tb.clone(), tb, ta],
            imps: [ia.clone(), ib.clone(), ib, ia],
            labels: [TL, TR, BL, BR],
            corners,
            edges,
            chi: chi.max(1),
            ties: 0,
        };
        env.corners.iter_mut().for_each(rescale);
        env.edges.iter_mut().flatten().for_each(rescale);
        Ok(env)
    }

    /// Rotates the whole configuration by 90° clockwise: the bottom side
    /// becomes the left side.
    fn rotate_cw(&mut self) -> Result<()> {
        self.corners.rotate_right(1);
        self.edges.rotate_right(1);
        let perm = [BL, TL, BR, TR];
        let old_sites = self.sites.clone();
        let old_imps = self.imps.clone();
        let old_labels = self.labels;
        for (new, &old) in perm.iter().enumerate() {
            self.sites[new] = rotate_site(&old_sites[old])?;
            self.imps[new] = rotate_site(&old_imps[old])?;
            self.labels[new] = old_labels[old];
        }
        Ok(())
    }

    fn projector(&mut self, m: &DenseTensor) -> Result<DenseTensor> {
        let (vals, vecs) = hermitian_eig(m)?;
        let keep = self.chi.min(vals.len());
        if cut(&vals, keep) {
            self.ties += 1;
        }
        Ok(leading_columns(&vecs, keep))
    }

    /// Inserts one column (slots `top`/`bottom` with their top and bottom
    /// edges) and absorbs it into the left side.
    fn absorb_column(&mut self, top: usize, bottom: usize, e_top: usize, e_bot: usize) -> Result<()> {
        let c0 = contract(&self.corners[0], &self.edges[1][e_top], &[(1, 0)])?;
        let s = c0.shape().to_vec();
        let c0 = c0.into_reshaped(vec![s[0] * s[1], s[2]])?;
        let grow = |e: &DenseTensor, site: &DenseTensor| -> Result<DenseTensor> {
            let g = contract(e, site, &[(1, 0)])?.permute(&[0, 4, 3, 1, 2])?; // p D R n U
            let s = g.shape().to_vec();
            g.into_reshaped(vec![s[0] * s[1], s[2], s[3] * s[4]])
        };
        let e_up = grow(&self.edges[0][1], &self.sites[top])?;
        let e_dn = grow(&self.edges[0][0], &self.sites[bottom])?;
        let c3 = contract(&self.edges[3][e_bot], &self.corners[3], &[(2, 0)])?.permute(&[0, 2, 1])?;
        let s = c3.shape().to_vec();
        let c3 = c3.into_reshaped(vec![s[0], s[1] * s[2]])?;

        let unit = |mut m: DenseTensor| -> Result<DenseTensor> {
            let tr = m.trace()?.re;
            if tr > 0.0 {
                m.scale_real(1.0 / tr);
            }
            Ok(m)
        };
        let c0t = c0.permute(&[1, 0])?;
        let mz = unit(c0t.adjoint()?.matmul(&c0t)?)?.add(&unit(c3.adjoint()?.matmul(&c3)?)?)?;
        let z = self.projector(&mz)?;

        let q0 = contract(&c0, &e_up, &[(0, 2)])?.permute(&[0, 2, 1])?; // n in | prev
        let s = q0.shape().to_vec();
        let q0 = q0.into_reshaped(vec![s[0] * s[1], s[2]])?;
        let q3 = contract(&c3, &e_dn, &[(1, 0)])?; // p' in | next
        let s = q3.shape().to_vec();
        let q3 = q3.into_reshaped(vec![s[0] * s[1], s[2]])?;
        let mw = unit(q0.adjoint()?.matmul(&q0)?)?.add(&unit(q3.adjoint()?.matmul(&q3)?)?.conj())?;
        let w = self.projector(&mw)?;

        let mut c0n = contract(&z, &c0, &[(0, 0)])?;
        let mut e_upn = contract(&contract(&w, &e_up, &[(0, 0)])?, &z.conj(), &[(2, 0)])?;
        let mut e_dnn = contract(&contract(&z.conj(), &e_dn, &[(0, 0)])?, &w.conj(), &[(2, 0)])?;
        let mut c3n = c3.matmul(&z)?;
        for t in [&mut c0n, &mut e_upn, &mut e_dnn, &mut c3n] {
            rescale(t);
        }
        self.corners[0] = c0n;
        self.corners[3] = c3n;
        self.edges[0] = [e_dnn, e_upn];
        Ok(())
    }

    /// Two inserted columns, so that the sublattice pattern is restored.
    pub fn left_move(&mut self) -> Result<()> {
        self.absorb_column(TL, BL, 0, 1)?;
        self.absorb_column(TR, BR, 1, 0)
    }

    /// Left, down, right and up moves.
    pub fn sweep(&mut self) -> Result<()> {
        for _ in 0..4 {
            self.left_move()?;
            self.rotate_cw()?;
        }
        Ok(())
    }

    /// Normalized singular values of the four corners.
    pub fn corner_spectra(&self) -> Result<Vec<Vec<f64>>> {
        self.corners
            .iter()
            .map(|c| {
                let s = truncated_svd(c, None, 0.0)?.s;
                let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                Ok(s.iter().map(|x| x / n).collect())
            })
            .collect()
    }

    /// Corner, its two edges and the impurity of the top-left slot, with
    /// axes (env toward the counter-clockwise neighbour, env toward the
    /// clockwise neighbour, site leg clockwise, site leg counter-clockwise, P).
    fn quadrant(&self) -> Result<DenseTensor> {
        let t1 = contract(&self.edges[0][1], &self.corners[0], &[(2, 0)])?;
        let t2 = contract(&t1, &self.edges[1][0], &[(2, 0)])?;
        contract(&t2, &self.imps[TL], &[(1, 0), (2, 1)])
    }

    /// Unnormalized ρ₄ from the environment and the bare impurities.
    pub fn close(&mut self) -> Result<DenseTensor> {
        let mut q: [Option<DenseTensor>; 4] = Default::default();
        for _ in 0..4 {
            q[self.labels[TL]] = Some(self.quadrant()?);
            self.rotate_cw()?;
        }
        let [Some(qtl), Some(qtr), Some(qbl), Some(qbr)] = q else { unreachable!() };
        let top = contract(&qtl, &qtr, &[(1, 0), (2, 3)])?;
        let bot = contract(&qbr, &qbl, &[(1, 0), (2, 3)])?;
        let full = contract(&top, &bot, &[(0, 3), (1, 4), (3, 0), (4, 1)])?; // P_TL P_TR P_BR P_BL
        full.into_reshaped(vec![2; 8])?.permute(&[0, 2, 6, 4, 1, 3, 7, 5])?.into_reshaped(vec![16, 16])
    }
}

fn spectrum_drift(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let n = x.len().max(y.len());
            (0..n)
                .map(|i| {
                    let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

pub fn ctmrg_rdm(peps: &PepsState, opts: &EnvOptions) -> Result<PlaquetteRdm> {
    let (a, b) = peps.absorb_bond_vectors();
    ctmrg_rdm_tensors(&a, &b, opts)
}

pub fn ctmrg_rdm_tensors(a: &DenseTensor, b: &DenseTensor, opts: &EnvOptions) -> Result<PlaquetteRdm> {
    let mut env = Ctmrg::from_tensors(a, b, opts.d_cut)?;
    let mut out = PlaquetteRdm::new(Engine::Ctmrg, env.close()?)?;
    let mut spectra = env.corner_spectra()?;
    for it in 1..=opts.max_iter {
        env.sweep()?;
        out.iterations = it;
        match opts.witness {
            Witness::Rho => {
                let rho = normalized(env.close()?)?;
                out.drift = frob_diff(&rho, &out.rho4);
                out.rho4 = rho;
            }
            Witness::CornerSpectrum => {
                let next = env.corner_spectra()?;
                out.drift = spectrum_drift(&next, &spectra);
                spectra = next;
            }
        }
        if out.drift < opts.epsilon {
            out.converged = true;
            break;
        }
    }
    if opts.witness == Witness::CornerSpectrum {
        out.rho4 = normalized(env.close()?)?;
    }
    out.ties = env.ties;
    if !out.converged {
        log::warn!("CTMRG: drift {:.3e} after {} sweeps", out.drift, out.iterations);
    }
    Ok(out)
}
