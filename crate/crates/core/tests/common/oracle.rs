//! Brute-force reference for the two-qubit measures, written directly from
//! the definitions on top of nalgebra (no code shared with the crate).

use nalgebra::{Matrix2, Matrix4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spinnet::{DenseTensor, C64};

pub type M4 = Matrix4<C64>;

pub fn to_na(rho: &DenseTensor) -> M4 {
    M4::from_fn(|i, j| rho.get(&[i, j]))
}

pub fn herm_eigs(m: &M4) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut v: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

pub fn herm_sqrt(m: &M4) -> M4 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = h.symmetric_eigen();
    let d = M4::from_diagonal(&e.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0)));
    e.eigenvectors * d * e.eigenvectors.adjoint()
}

pub fn sigma_yy() -> M4 {
    let i = C64::new(0.0, 1.0);
    let y = Matrix2::new(C64::new(0.0, 0.0), -i, i, C64::new(0.0, 0.0));
    y.kronecker(&y)
}

/// Hermitian R = √(√ρ ρ̃ √ρ); its eigenvalues are the Wootters λ's.
pub fn wootters(rho: &M4) -> Vec<f64> {
    let yy = sigma_yy();
    let tilde = yy * rho.conjugate() * yy;
    let s = herm_sqrt(rho);
    let r = herm_sqrt(&(s * tilde * s));
    herm_eigs(&r)
}

pub fn c_f(rho: &M4) -> f64 {
    let l = wootters(rho);
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

pub fn c_a(rho: &M4) -> f64 {
    wootters(rho).iter().sum()
}

pub fn entropy(rho: &M4) -> f64 {
    herm_eigs(rho).iter().filter(|&&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

pub fn negativity(rho: &M4) -> f64 {
    // Transpose the first qubit by swapping its row/column bits.
    let pt = M4::from_fn(|r, c| {
        let (a, b) = (r >> 1, r & 1);
        let (ap, bp) = (c >> 1, c & 1);
        rho[((ap << 1) | b, (a << 1) | bp)]
    });
    herm_eigs(&pt).iter().filter(|&&x| x < 0.0).map(|x| -x).sum()
}

pub fn correlator_max(rho: &M4) -> f64 {
    let i = C64::new(0.0, 1.0);
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let paulis = [Matrix2::new(o, l, l, o), Matrix2::new(o, -i, i, o), Matrix2::new(l, o, o, -l)];
    let id = Matrix2::<C64>::identity();
    paulis
        .iter()
        .map(|s| {
            let both = (rho * s.kronecker(s)).trace().re;
            let one = (rho * s.kronecker(&id)).trace().re;
            let two = (rho * id.kronecker(s)).trace().re;
            (both - one * two).abs()
        })
        .fold(0.0, f64::max)
}

pub fn random_rho(rng: &mut ChaCha8Rng, rank: usize) -> DenseTensor {
    let g = DenseTensor::from_fn(vec![4, rank], |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut rho = g.matmul(&g.adjoint().unwrap()).unwrap();
    let t = rho.trace().unwrap().re;
    rho.scale_real(1.0 / t);
    rho
}

