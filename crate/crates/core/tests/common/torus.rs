//! Exact contraction of a two-sublattice D=2 PEPS on the 4×4 torus, by
//! explicit loops over row transfer matrices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spinnet::{DenseTensor, C64};

pub const D: usize = 2;
pub const D2: usize = D * D;
pub const L: usize = 4;

pub fn random_site(rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::from_fn(vec![2, D, D, D, D], |_| C64::new(rng.gen_range(-1.0..1.0), 0.0))
}

/// Double-layer entries [l][u][r][d][p] of one site, written out by hand;
/// p = ket·2 + bra when `open`, otherwise the physical pair is traced.
pub fn layered(a: &DenseTensor, open: bool) -> Vec<C64> {
    let np = if open { 4 } else { 1 };
    let mut out = vec![C64::new(0.0, 0.0); D2 * D2 * D2 * D2 * np];
    for l in 0..D2 {
        for u in 0..D2 {
            for r in 0..D2 {
                for d in 0..D2 {
                    for s in 0..2 {
                        for t in 0..2 {
                            if !open && s != t {
                                continue;
                            }
                            let ket = a.get(&[s, l / D, u / D, r / D, d / D]);
                            let bra = a.get(&[t, l % D, u % D, r % D, d % D]).conj();
                            let p = if open { s * 2 + t } else { 0 };
                            out[(((l * D2 + u) * D2 + r) * D2 + d) * np + p] += ket * bra;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row transfer matrix of a periodic row of four sites:
/// R[(u0..u3)][(d0..d3)][(p of the open sites)].
pub fn row(sites: &[(Vec<C64>, bool); L]) -> (Vec<C64>, usize) {
    let cfg = D2.pow(L as u32);
    let np: usize = sites.iter().map(|(_, o)| if *o { 4 } else { 1 }).product();
    let mut out = vec![C64::new(0.0, 0.0); cfg * cfg * np];
    let digit = |c: usize, x: usize| (c / D2.pow((L - 1 - x) as u32)) % D2;
    for u in 0..cfg {
        for d in 0..cfg {
            for h in 0..cfg {
                // site x has left bond h_x and right bond h_{x+1}
                let mut partial = vec![C64::new(1.0, 0.0)];
                for x in 0..L {
                    let (t, open) = &sites[x];
                    let kp = if *open { 4 } else { 1 };
                    let (l, r) = (digit(h, x), digit(h, (x + 1) % L));
                    let base = (((l * D2 + digit(u, x)) * D2 + r) * D2 + digit(d, x)) * kp;
                    let mut next = Vec::with_capacity(partial.len() * kp);
                    for v in &partial {
                        for p in 0..kp {
                            next.push(v * t[base + p]);
                        }
                    }
                    partial = next;
                }
                let off = (u * cfg + d) * np;
                for (p, v) in partial.into_iter().enumerate() {
                    out[off + p] += v;
                }
            }
        }
    }
    (out, np)
}

/// ρ₄ of the plaquette (0,0),(1,0),(0,1),(1,1) on the 4×4 torus, sites in the
/// order TL, TR, BL, BR; a-sites where x + y is even.
pub fn exact_torus_rho4(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let (ta, tb) = (layered(a, false), layered(b, false));
    let (ia, ib) = (layered(a, true), layered(b, true));
    let plain = |y: usize, x: usize| if (x + y) % 2 == 0 { (ta.clone(), false) } else { (tb.clone(), false) };
    let r0 = row(&[(ia.clone(), true), (ib.clone(), true), plain(0, 2), plain(0, 3)]);
    let r1 = row(&[(ib, true), (ia, true), plain(1, 2), plain(1, 3)]);
    let r2 = row(&[plain(2, 0), plain(2, 1), plain(2, 2), plain(2, 3)]);
    let r3 = row(&[plain(3, 0), plain(3, 1), plain(3, 2), plain(3, 3)]);
    let n = D2.pow(L as u32);
    let mm = |x: &[C64], y: &[C64]| {
        let mut z = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let v = x[i * n + k];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    z[i * n + j] += v * y[k * n + j];
                }
            }
        }
        z
    };
    let r23 = mm(&r2.0, &r3.0);
    // ρ[p0, p1] = Σ R0[u,d,p0] R1[d,e,p1] R23[e,u]
    let mut rho = vec![C64::new(0.0, 0.0); 256];
    for p1 in 0..16 {
        let r1p: Vec<C64> = (0..n * n).map(|i| r1.0[i * 16 + p1]).collect();
        let x = mm(&r1p, &r23);
        for p0 in 0..16 {
            let mut acc = C64::new(0.0, 0.0);
            for u in 0..n {
                for d in 0..n {
                    acc += r0.0[(u * n + d) * 16 + p0] * x[d * n + u];
                }
            }
            rho[p0 * 16 + p1] = acc;
        }
    }
    // p0 = (kTL bTL kTR bTR), p1 = (kBL bBL kBR bBR) → (kets, bras)
    let t = DenseTensor::new(vec![2; 8], rho).unwrap();
    let mut r = t.permute(&[0, 2, 4, 6, 1, 3, 5, 7]).unwrap().into_reshaped(vec![16, 16]).unwrap();
    let tr = r.trace().unwrap();
    r = r.scale(C64::new(1.0, 0.0) / tr);
    r
}

pub fn max_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn biased_site(rng: &mut ChaCha8Rng, noise: f64) -> DenseTensor {
    DenseTensor::from_fn(vec![2, D, D, D, D], |ix| {
        let base = if ix.iter().all(|&k| k == 0) { 1.0 } else { 0.0 };
        C64::new(base + noise * rng.gen_range(-1.0..1.0), 0.0)
    })
}
