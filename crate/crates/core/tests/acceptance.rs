//! Acceptance run: one PASS/FAIL line per criterion. Select a subset with
//! ACCEPTANCE=1,4,… (all by default). Sweep outputs are kept under the
//! cargo target tmp directory for inspection.

mod common;

use common::oracle::{self, random_rho};
use common::torus::{biased_site, exact_torus_rho4, max_diff, random_site};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinnet::entanglement::*;
use spinnet::env2d::*;
use spinnet::evolution::{InitKind, TimeStepSchedule};
use spinnet::models::ModelSpec;
use spinnet::mps::{ground_state_1d, ChainMethod, ChainOptions};
use spinnet::peps::{ground_state_2d, LatticeOptions, DEFAULT_START_NOISE};
use spinnet::sweep::*;
use std::cell::OnceCell;
use std::path::PathBuf;
use std::time::Instant;

const XXX_CHAIN: [(usize, f64); 5] = [(10, -1.77202), (15, -1.77237), (20, -1.77247), (25, -1.77253), (30, -1.77254)];
const XXX_SQUARE: [(usize, usize, f64); 3] = [(2, 20, -1.318), (3, 20, -1.327), (4, 32, -1.333)];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn out_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

fn sweep(text: &str) -> SweepResult {
    let cfg = SweepConfig::from_toml(text).expect("acceptance config");
    let dir = out_dir(&cfg.name);
    let opts = RunOptions { out_dir: Some(dir.clone()), jobs: 1, cache_dir: Some(dir.join("cache")), ..Default::default() };
    run_sweep(&cfg, &opts).expect("sweep")
}

fn chain_opts(method: ChainMethod, m: usize) -> ChainOptions {
    ChainOptions { method, m, seed: 1, init: InitKind::Real }
}

fn chain_energy(model: &ModelSpec, method: ChainMethod, m: usize, max_checks: usize) -> (f64, MeasureRecord) {
    let schedule = TimeStepSchedule { max_checks_per_rung: max_checks, ..TimeStepSchedule::chain_default() };
    let (mut s, _) = ground_state_1d(model, &chain_opts(method, m), &schedule, None).expect("chain");
    let rec = measure(&s.state_data(model).expect("rdm")).expect("measures");
    (rec.energy, rec)
}

/// Sweeps shared by several criteria, computed on first use.
#[derive(Default)]
struct Shared {
    ising_chain: OnceCell<SweepResult>,
    ising_square: OnceCell<SweepResult>,
    ferro_xxz: OnceCell<Vec<(u8, f64, MeasureRecord)>>,
}

impl Shared {
    fn ising_chain(&self) -> &SweepResult {
        self.ising_chain.get_or_init(|| {
            sweep(
                r#"
name = "ising-chain"
[model]
kind = "ising"
dimension = 1
[grid]
start = 0.0
stop = 2.0
count = 21
[grid.refine]
start = 0.9
stop = 1.1
count = 11
[solver]
method = "ti-mps"
m = 20
"#,
            )
        })
    }

    fn ising_square(&self) -> &SweepResult {
        self.ising_square.get_or_init(|| {
            sweep(
                r#"
name = "ising-square"
[model]
kind = "ising"
dimension = 2
[grid]
start = 2.6
stop = 3.8
count = 13
[grid.refine]
start = 3.0
stop = 3.4
count = 9
[solver]
method = "peps"
d = 4
[environment]
engine = "ctmrg"
d_cut = 20
"#,
            )
        })
    }

    fn ferro_xxz(&self) -> &[(u8, f64, MeasureRecord)] {
        self.ferro_xxz.get_or_init(|| {
            let mut out = Vec::new();
            // A pinning field selects one of the two ferromagnetic branches.
            for delta in [-1.2, -1.5, -2.0] {
                let model = ModelSpec::xxz(delta, 1).with_bias(1e-8);
                let (_, rec) = chain_energy(&model, ChainMethod::Tebd, 8, 200);
                out.push((1, delta, rec));

                let model = ModelSpec::xxz(delta, 2).with_bias(1e-8);
                let lat = LatticeOptions { d: 2, seed: 1, init: InitKind::Real, start_noise: Some(DEFAULT_START_NOISE) };
                let (peps, _, _) = ground_state_2d(&model, &lat, &TimeStepSchedule::lattice_default(), None).expect("peps");
                let rdm = plaquette_rdm(&peps, Engine::Ctmrg, &EnvOptions::new(8)).expect("ctmrg");
                let data = rdm.state_data(&model, delta, Some(peps.lambda.to_vec())).expect("rdm");
                out.push((2, delta, measure(&data).expect("measures")));
            }
            out
        })
    }

    /// Every measured row of every sweep run so far.
    fn all_records(&self) -> Vec<(String, MeasureRecord)> {
        let mut out = Vec::new();
        for (name, res) in [("ising-chain", self.ising_chain()), ("ising-square", self.ising_square())] {
            for r in &res.rows {
                if let Some(rec) = r.record {
                    out.push((name.to_string(), rec));
                }
            }
        }
        for (dim, _, rec) in self.ferro_xxz() {
            out.push((format!("ferro-xxz-{dim}d"), *rec));
        }
        out
    }
}

fn failed_rows(res: &SweepResult) -> Vec<String> {
    res.rows.iter().filter(|r| r.status.starts_with("failed")).map(|r| format!("{}: {}", r.control, r.status)).collect()
}

fn at(res: &SweepResult, engine: &str, x: f64) -> Option<MeasureRecord> {
    res.series(engine).into_iter().find(|r| (r.control - x).abs() < 1e-9).and_then(|r| r.record)
}

// ---------------------------------------------------------------------------

fn c1(_: &Shared) -> Verdict {
    let model = ModelSpec::xxz(1.0, 1);
    let exact = 1.0 - 4.0 * std::f64::consts::LN_2;
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, paper) in XXX_CHAIN {
        let (e, _) = chain_energy(&model, ChainMethod::TiMps, m, 50);
        ok &= (e - paper).abs() <= 5e-5;
        parts.push(format!("m={m}: {e:.6} (table {paper}, exact {exact:.6})"));
    }
    verdict(ok, parts.join("; "))
}

fn c2(_: &Shared) -> Verdict {
    let model = ModelSpec::ising(1.0, 1);
    let exact = -4.0 / std::f64::consts::PI;
    let mut errs = Vec::new();
    for m in [10, 15, 20, 25, 30] {
        let (e, _) = chain_energy(&model, ChainMethod::TiMps, m, 200);
        errs.push((m, ((e - exact) / exact).abs()));
    }
    let at20 = errs[2].1;
    let monotone = errs.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9);
    let listing: Vec<String> = errs.iter().map(|(m, r)| format!("m={m}: {r:.2e}")).collect();
    verdict(at20 <= 2e-3 && monotone, format!("relative errors {} (monotone: {monotone})", listing.join(", ")))
}

fn c3(_: &Shared) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, chi, paper) in XXX_SQUARE {
        let model = ModelSpec::xxz(1.0, 2);
        let lat = LatticeOptions { d, seed: 1, init: InitKind::Real, start_noise: Some(DEFAULT_START_NOISE) };
        let (peps, _, _) = ground_state_2d(&model, &lat, &TimeStepSchedule::lattice_default(), None).expect("peps");
        let rdm = plaquette_rdm(&peps, Engine::Ctmrg, &EnvOptions::new(chi)).expect("ctmrg");
        let e = rdm.energy(&model).expect("energy");
        ok &= (e - paper).abs() <= 3e-3;
        parts.push(format!("D={d} χ={chi}: {e:.5} (table {paper})"));
    }
    parts.push("D=5 optional, not run".into());
    verdict(ok, parts.join("; "))
}

fn c4(s: &Shared) -> Verdict {
    let res = s.ising_square();
    let failed = failed_rows(res);
    let Some((x, y)) = res.column("ctmrg", "energy") else { return verdict(false, "no rows") };
    match locate_critical_point(&x, &y) {
        Ok(c) => verdict(
            c.interior && (c.estimate - 3.25).abs() <= 0.15,
            format!("h_cr = {:.3} ± {:.3} (interior: {}); failed rows: {failed:?}", c.estimate, c.uncertainty, c.interior),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn c5(s: &Shared) -> Verdict {
    let mut ok = true;
    let mut worst_e = 0.0f64;
    let mut worst_m = 0.0f64;
    for (_, delta, r) in s.ferro_xxz() {
        worst_e = worst_e.max((r.energy - delta).abs());
        let measures = [r.s1, r.tau1, r.c_f, r.e_f, r.c_a, r.negativity, r.log_negativity, r.q_max, r.s_loc];
        let mut m = measures.iter().cloned().fold(0.0f64, f64::max);
        if r.s_pb.is_finite() {
            m = m.max(r.s_pb);
        }
        worst_m = worst_m.max(m);
    }
    ok &= worst_e <= 1e-6 && worst_m < 1e-3;
    verdict(ok, format!("max |E − Δ| = {worst_e:.2e}, largest measure {worst_m:.2e} (1D and 2D, Δ = −1.2, −1.5, −2)"))
}

fn c6(s: &Shared) -> Verdict {
    let chain = at(s.ising_chain(), "mps", 1.0);
    let square = s.ising_square();
    let f1 = chain.map(|r| r.monogamy.fraction).unwrap_or(f64::NAN);
    let crit = square
        .column("ctmrg", "energy")
        .and_then(|(x, y)| locate_critical_point(&x, &y).ok())
        .map(|c| c.estimate)
        .unwrap_or(f64::NAN);
    let f2 = at(square, "ctmrg", crit).map(|r| r.monogamy.fraction).unwrap_or(f64::NAN);
    let records = s.all_records();
    let worst = records.iter().map(|(_, r)| r.monogamy.delta_f).fold(f64::INFINITY, f64::min);
    let ok = (f1 - 0.25).abs() <= 0.05 && (f2 - 0.50).abs() <= 0.10 && worst >= -1e-8;
    verdict(
        ok,
        format!("1D fraction at h=1: {f1:.3}; 2D fraction at h={crit:.2}: {f2:.3}; min δ_F over {} points: {worst:.2e}", records.len()),
    )
}

fn c7(s: &Shared) -> Verdict {
    let records = s.all_records();
    let mut worst_n = f64::NEG_INFINITY;
    let mut worst_q = f64::NEG_INFINITY;
    for (_, r) in &records {
        let (lo, hi) = negativity_bounds(r.c_f);
        let n2 = 2.0 * r.negativity;
        worst_n = worst_n.max(lo - n2).max(n2 - hi);
        worst_q = worst_q.max(r.q_max - r.c_a);
    }
    // A violated Q_max ≤ C_A on any bond fails the row outright.
    let violations: usize = [s.ising_chain(), s.ising_square()]
        .iter()
        .flat_map(|res| res.rows.iter())
        .filter(|r| r.status.contains("exceeds C_A"))
        .count();
    let ok = worst_n <= 1e-8 && worst_q <= 1e-8 && violations == 0;
    verdict(
        ok,
        format!(
            "{} points; worst sandwich excess {worst_n:.2e}, worst Q_max − C_A {worst_q:.2e}, rows rejected for Q_max > C_A: {violations}",
            records.len()
        ),
    )
}

fn c8(_: &Shared) -> Verdict {
    // Measure kernels against the brute-force reference.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rho = random_rho(&mut rng, 4);
        let na = oracle::to_na(&rho);
        let diffs = [
            concurrence_f(&rho).unwrap() - oracle::c_f(&na),
            concurrence_a(&rho).unwrap() - oracle::c_a(&na),
            negativity(&rho).unwrap().0 - oracle::negativity(&na),
            entropy(&rho).unwrap() - oracle::entropy(&na),
            localizable_bounds(&rho).unwrap().0 - oracle::correlator_max(&na),
        ];
        worst = diffs.iter().fold(worst, |w, d| w.max(d.abs()));
    }

    // Environments against the exact 4×4 torus. TERG with two coarse-graining
    // steps closes on exactly that torus; CTMRG describes the infinite lattice
    // and is compared on short-correlated states, where the finite-size gap is
    // far below the tolerance.
    let mut terg = 0.0f64;
    let mut ctm = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (a, b) = (random_site(&mut rng), random_site(&mut rng));
        let exact = exact_torus_rho4(&a, &b);
        let got = terg_fixed_steps(&a, &b, 16, 2).unwrap();
        for k in 0..4 {
            terg = terg.max(max_diff(&reduce(&got.rho4, 4, &BOND_SITES[k]), &reduce(&exact, 4, &BOND_SITES[k])));
        }
        let (a, b) = (biased_site(&mut rng, 0.1), biased_site(&mut rng, 0.1));
        let exact = exact_torus_rho4(&a, &b);
        let opts = EnvOptions { d_cut: 16, epsilon: 1e-10, max_iter: 100, witness: Witness::Rho };
        let got = ctmrg_rdm_tensors(&a, &b, &opts).unwrap();
        for k in 0..4 {
            ctm = ctm.max(max_diff(&reduce(&got.rho4, 4, &BOND_SITES[k]), &reduce(&exact, 4, &BOND_SITES[k])));
        }
    }

    // The two chain algorithms at equal bond dimension.
    let mut chain = 0.0f64;
    for delta in [1.2, 2.0, 4.0] {
        let model = ModelSpec::xxz(delta, 1);
        let (e1, _) = chain_energy(&model, ChainMethod::TiMps, 10, 1000);
        let (e2, _) = chain_energy(&model, ChainMethod::Tebd, 10, 1000);
        chain = chain.max((e1 - e2).abs());
    }
    let ok = worst <= 1e-9 && terg <= 1e-4 && ctm <= 1e-4 && chain <= 1e-5;
    verdict(
        ok,
        format!("kernels {worst:.1e}; ρ₂ vs 4×4 torus: TERG {terg:.1e}, CTMRG {ctm:.1e}; TI-MPS vs TEBD {chain:.1e}"),
    )
}

fn c9(_: &Shared) -> Verdict {
    let (_, rec) = chain_energy(&ModelSpec::xxz(1.0, 1), ChainMethod::TiMps, 20, 200);
    verdict(rec.c_a >= 0.98, format!("C_A = {:.5}", rec.c_a))
}

fn c10(s: &Shared) -> Verdict {
    // Qualitative shapes only: a maximum of τ₁ at the chain's critical field
    // (first differences change sign there) and a curvature peak of the
    // square-lattice energy away from the grid ends.
    let chain = s.ising_chain();
    let (x, y) = chain.column("mps", "tau1").unwrap();
    let d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let turns: Vec<f64> = (1..d.len()).filter(|&i| d[i - 1] > 0.0 && d[i] <= 0.0).map(|i| x[i]).collect();
    let chain_ok = turns.len() == 1 && (turns[0] - 1.0).abs() <= 0.05;

    let (x2, y2) = s.ising_square().column("ctmrg", "energy").unwrap();
    let d2 = second_differences(&x2, &y2);
    let k = (0..d2.len()).max_by(|&i, &j| d2[i].abs().total_cmp(&d2[j].abs())).unwrap();
    let square_ok = k > 0 && k + 1 < d2.len();
    verdict(
        chain_ok && square_ok,
        format!("τ₁ maxima (1D) at {turns:?}; 2D |d²E| peak at h = {:.2} (interior: {square_ok})", x2[k + 1]),
    )
}

fn main() {
    let criteria: [(usize, &str, fn(&Shared) -> Verdict); 10] = [
        (1, "XXX chain energies vs m", c1),
        (2, "critical Ising chain energy", c2),
        (3, "XXX square-lattice energies", c3),
        (4, "square-lattice Ising critical field", c4),
        (5, "ferromagnetic XXZ line", c5),
        (6, "monogamy fractions and CKW", c6),
        (7, "negativity sandwich and Q_max ≤ C_A", c7),
        (8, "oracle equivalence", c8),
        (9, "Heisenberg chain C_A", c9),
        (10, "qualitative critical shapes", c10),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let shared = Shared::default();
    let (mut passed, mut failed) = (0, 0);
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&shared))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("aborted: {}", msg.unwrap_or_default()))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if v.pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!("{tag} {id:>2} {name}: {} [{:.0} s]", v.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed} passed, {failed} failed");
}
