//! Imaginary-time schedules and the convergence bookkeeping shared by the
//! chain and lattice solvers.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeStepSchedule {
    pub tau_initial: f64,
    pub tau_min: f64,
    pub reduction_factor: f64,
    pub steps_per_check: usize,
    pub epsilon: f64,
    /// Step budget per rung, in units of `steps_per_check`.
    pub max_checks_per_rung: usize,
}

impl TimeStepSchedule {
    pub fn chain_default() -> Self {
        TimeStepSchedule {
            tau_initial: 0.1,
            tau_min: 1e-4,
            reduction_factor: 0.1,
            steps_per_check: 10,
            epsilon: 1e-8,
            max_checks_per_rung: 200,
        }
    }

    pub fn lattice_default() -> Self {
        TimeStepSchedule {
            tau_initial: 0.1,
            tau_min: 1e-4,
            reduction_factor: 0.1,
            steps_per_check: 200,
            epsilon: 1e-7,
            max_checks_per_rung: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_initial >= self.tau_min
            && self.tau_min > 0.0
            && self.reduction_factor > 0.0
            && self.reduction_factor < 1.0
            && self.steps_per_check > 0
            && self.epsilon > 0.0
            && self.max_checks_per_rung > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid time-step schedule {self:?}")))
        }
    }

    /// The Δτ ladder from tau_initial down to tau_min (inclusive, with a
    /// small tolerance for floating-point reduction).
    pub fn rungs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut tau = self.tau_initial;
        while tau >= self.tau_min * (1.0 - 1e-9) {
            out.push(tau);
            tau *= self.reduction_factor;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub tau: f64,
    pub steps: usize,
    pub residual: f64,
    pub energy: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rungs: Vec<RungReport>,
    /// Energy per bond of the final state.
    pub energy: f64,
    pub final_residual: f64,
    /// Every rung met its drift tolerance within budget.
    pub converged: bool,
    /// End-of-rung energies never increased by more than 1e-9.
    pub monotone: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn total_steps(&self) -> usize {
        self.rungs.iter().map(|r| r.steps).sum()
    }
}

pub const MONOTONE_TOL: f64 = 1e-9;

/// What the driver needs to know about a state between steps.
pub(crate) struct Probe {
    pub observable: DenseTensor,
    pub energy: f64,
}

/// Runs the Δτ ladder: at each rung, evolve in blocks of `steps_per_check`
/// until the probed observable moves by less than ε per step (Frobenius,
/// averaged over the block), or the budget runs out.
pub(crate) fn drive<S>(
    schedule: &TimeStepSchedule,
    state: &mut S,
    mut step: impl FnMut(&mut S, f64, usize) -> Result<()>,
    mut probe: impl FnMut(&mut S) -> Result<Probe>,
) -> Result<ConvergenceReport> {
    schedule.validate()?;
    let mut rungs = Vec::new();
    let mut warnings = Vec::new();
    let mut last = probe(state)?;
    let mut residual = f64::INFINITY;
    for (rung_index, tau) in schedule.rungs().into_iter().enumerate() {
        let mut steps = 0;
        let mut converged = false;
        for _ in 0..schedule.max_checks_per_rung {
            for _ in 0..schedule.steps_per_check {
                step(state, tau, rung_index)?;
                steps += 1;
            }
            let now = probe(state)?;
            // Mean change per step across the block.
            residual = now.observable.sub(&last.observable)?.norm() / schedule.steps_per_check as f64;
            last = now;
            if !residual.is_finite() {
                return Err(Error::Linalg(format!("evolution diverged at Δτ = {tau}")));
            }
            if residual < schedule.epsilon {
                converged = true;
                break;
            }
        }
        if !converged {
            warnings.push(format!("Δτ = {tau:e}: step budget exhausted with drift {residual:e}"));
        }
        log::debug!("rung Δτ={tau:e}: {steps} steps, drift {residual:e}, E={:.12}", last.energy);
        rungs.push(RungReport { tau, steps, residual, energy: last.energy, converged });
    }
    let monotone = rungs.windows(2).all(|w| w[1].energy <= w[0].energy + MONOTONE_TOL);
    if !monotone {
        warnings.push("energy increased between Δτ rungs".into());
    }
    Ok(ConvergenceReport {
        converged: rungs.iter().all(|r| r.converged),
        rungs,
        energy: last.energy,
        final_residual: residual,
        monotone,
        warnings,
    })
}

/// Distribution of random initial tensor entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Uniform in [−0.5, 0.5].
    #[default]
    Real,
    /// Uniform in [−0.5, 0.5] + i·[−0.5, 0.5].
    Complex,
}

pub(crate) fn random_entry(rng: &mut impl rand::Rng, kind: InitKind) -> num_complex::Complex64 {
    let re = rng.gen_range(-0.5..0.5);
    let im = match kind {
        InitKind::Real => 0.0,
        InitKind::Complex => rng.gen_range(-0.5..0.5),
    };
    num_complex::Complex64::new(re, im)
}
