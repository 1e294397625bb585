//! Three operations exposed to the static page in `www/`. Each takes plain
//! numbers and returns a JSON string, so the page needs no bindings beyond
//! what wasm-bindgen generates.

use serde_json::json;
use spinnet::ed::{exact_rdm, ground_state, jordan_wigner_ising_energy, Lattice};
use spinnet::entanglement::*;
use spinnet::evolution::{InitKind, TimeStepSchedule};
use spinnet::models::ModelSpec;
use spinnet::mps::{ground_state_1d, ChainMethod, ChainOptions};
use spinnet::{DenseTensor, C64};
use wasm_bindgen::prelude::*;

fn pair_measures(rho: &DenseTensor) -> spinnet::Result<serde_json::Value> {
    let c_f = concurrence_f(rho)?;
    let (n, log_n) = negativity(rho)?;
    let (lo, hi) = negativity_bounds(c_f);
    let (q_max, _) = localizable_bounds(rho)?;
    Ok(json!({
        "c_f": c_f,
        "e_f": entanglement_of_formation(c_f),
        "c_a": concurrence_a(rho)?,
        "negativity": n,
        "log_negativity": log_n,
        "negativity_bounds": [lo, hi],
        "q_max": q_max,
        "s_loc": local_entanglement(rho)?,
        "tau1": one_tangle(&reduce_to_first(rho))?,
    }))
}

fn model(kind: &str, control: f64, dim: u8) -> spinnet::Result<ModelSpec> {
    match kind {
        "ising" => Ok(ModelSpec::ising(control, dim)),
        "xxz" => Ok(ModelSpec::xxz(control, dim)),
        _ => Err(spinnet::Error::Config(format!("unknown model {kind:?}"))),
    }
}

/// Measures of a two-qubit state: "werner" mixes the Bell state |Φ⁺⟩ with
/// white noise (weight p); "pure" is cos(pπ/2)|↑↑⟩ + sin(pπ/2)|↓↓⟩.
pub fn two_qubit(family: &str, p: f64) -> spinnet::Result<String> {
    let rho = match family {
        "werner" => werner(p.clamp(0.0, 1.0)),
        "pure" => {
            let t = p * std::f64::consts::FRAC_PI_2;
            let z = C64::new(0.0, 0.0);
            pure_state([C64::new(t.cos(), 0.0), z, z, C64::new(t.sin(), 0.0)])
        }
        _ => return Err(spinnet::Error::Config(format!("unknown family {family:?}"))),
    };
    Ok(pair_measures(&rho)?.to_string())
}

/// Infinite-chain ground state by the two-site MPO method at bond
/// dimension m, with a short schedule suited to an interactive page.
pub fn chain(kind: &str, control: f64, m: usize) -> spinnet::Result<String> {
    let model = model(kind, control, 1)?;
    let opts = ChainOptions { method: ChainMethod::TiMps, m: m.clamp(1, 32), seed: 1, init: InitKind::Real };
    let schedule = TimeStepSchedule { tau_min: 1e-3, max_checks_per_rung: 30, ..TimeStepSchedule::chain_default() };
    let (mut state, report) = ground_state_1d(&model, &opts, &schedule, None)?;
    let rec = measure(&state.state_data(&model)?)?;
    let exact = (kind == "ising").then(|| jordan_wigner_ising_energy(model.coupling_j, control, None));
    Ok(json!({ "record": rec, "converged": report.converged, "exact_energy": exact }).to_string())
}

/// Exact diagonalisation of a periodic ring of n ≤ 16 sites.
pub fn ring(kind: &str, control: f64, n: usize) -> spinnet::Result<String> {
    if !(4..=16).contains(&n) || n % 2 == 1 {
        return Err(spinnet::Error::Config("ring size must be even, between 4 and 16".into()));
    }
    let model = model(kind, control, 1)?;
    let gs = ground_state(&model, Lattice::Ring(n), 1e-10)?;
    let rho = exact_rdm(&gs.state, n, &[0, 1]);
    let exact = (kind == "ising").then(|| jordan_wigner_ising_energy(model.coupling_j, control, Some(n)));
    Ok(json!({
        "energy_per_bond": gs.energy_per_bond(),
        "gap": gs.gap,
        "degenerate": gs.degenerate,
        "exact_energy": exact,
        "pair": pair_measures(&rho)?,
    })
    .to_string())
}

fn js(r: spinnet::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = twoQubit)]
pub fn two_qubit_js(family: &str, p: f64) -> Result<String, JsError> {
    js(two_qubit(family, p))
}

#[wasm_bindgen(js_name = chainGroundState)]
pub fn chain_js(kind: &str, control: f64, m: usize) -> Result<String, JsError> {
    js(chain(kind, control, m))
}

#[wasm_bindgen(js_name = exactRing)]
pub fn ring_js(kind: &str, control: f64, n: usize) -> Result<String, JsError> {
    js(ring(kind, control, n))
}
