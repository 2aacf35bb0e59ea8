//! The explicit solution λ(t) of the multi-type Flory coagulation equation
//! with kernel κ and monodisperse initial condition Σ_r μ_r δ_{e_r}.

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{configs_up_to, inner, Kernel, Measure, MicroMeasure, TypeConfig};
use crate::solvers::{self, Regime};
use crate::trees;

fn check_dims(mu: &[f64], kappa: &Kernel, k: Option<&TypeConfig>) -> Result<()> {
    let got = k.map_or(mu.len(), |k| k.dim());
    if mu.len() != kappa.dim() || got != kappa.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa.dim(),
            got: if mu.len() != kappa.dim() { mu.len() } else { got },
        });
    }
    Ok(())
}

/// λ_k(t) = t^{|k|−1} τ(k) e^{−t⟨k,κμ⟩} Π_r μ_r^{k_r}/k_r!.
pub fn flory_lambda_k(mu: &[f64], kappa: &Kernel, t: f64, k: &TypeConfig) -> f64 {
    let n = k.size();
    if n == 0 || k.support().iter().any(|&s| mu[s] == 0.0) {
        return 0.0;
    }
    if t == 0.0 {
        return if n == 1 { mu[k.support()[0]] } else { 0.0 };
    }
    let kmu = inner(&k.as_f64(), &kappa.apply(mu));
    let mut ln = (n as f64 - 1.0) * t.ln() + trees::ln_tau(k, kappa) - t * kmu;
    for s in k.support() {
        ln += k.get(s) as f64 * mu[s].ln() - ln_factorial(k.get(s) as u64);
    }
    ln.exp()
}

/// λ(t) restricted to 1 ≤ |k| ≤ kmax.
pub fn flory_state(mu: &[f64], kappa: &Kernel, t: f64, kmax: u32) -> Result<MicroMeasure> {
    check_dims(mu, kappa, None)?;
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time {t} must be nonnegative")));
    }
    let mut out = MicroMeasure::new(mu.len());
    for k in configs_up_to(mu.len(), kmax) {
        let w = flory_lambda_k(mu, kappa, t, &k);
        if w > 0.0 {
            out.add_atom(k, w)?;
        }
    }
    Ok(out)
}

/// d/dt λ_k(t) = ((|k|−1)/t − ⟨k,κμ⟩) λ_k(t).
pub fn flory_derivative(mu: &[f64], kappa: &Kernel, t: f64, k: &TypeConfig) -> f64 {
    let kmu = inner(&k.as_f64(), &kappa.apply(mu));
    let rate = if k.size() == 1 { -kmu } else { (k.size() as f64 - 1.0) / t - kmu };
    rate * flory_lambda_k(mu, kappa, t, k)
}

/// Right-hand side of the Flory equation at k:
/// ½ Σ_{m+m̃=k} λ_m λ_m̃ ⟨m,κm̃⟩ − λ_k ⟨k,κμ⟩, summed over all splits
/// into two nonzero parts.
pub fn flory_rhs(mu: &[f64], kappa: &Kernel, t: f64, k: &TypeConfig) -> f64 {
    let mut gain = 0.0;
    for m in k.sub_configs() {
        if m.is_zero() || m == *k {
            continue;
        }
        let rest = k.minus(&m);
        let a = flory_lambda_k(mu, kappa, t, &m);
        if a == 0.0 {
            continue;
        }
        gain += a * flory_lambda_k(mu, kappa, t, &rest) * kappa.form(&m.as_f64(), &rest.as_f64());
    }
    let loss = flory_lambda_k(mu, kappa, t, k) * inner(&k.as_f64(), &kappa.apply(mu));
    0.5 * gain - loss
}

/// |d/dt λ_k(t) − RHS|, with the derivative taken analytically.
pub fn flory_residual(mu: &[f64], kappa: &Kernel, t: f64, k: &TypeConfig) -> Result<f64> {
    check_dims(mu, kappa, Some(k))?;
    if !(t > 0.0) || k.is_zero() {
        return Err(Error::Precondition("need t > 0 and |k| ≥ 1".into()));
    }
    Ok((flory_derivative(mu, kappa, t, k) - flory_rhs(mu, kappa, t, k)).abs())
}

/// Central difference (λ_k(t+h) − λ_k(t−h)) / 2h.
pub fn flory_finite_difference(mu: &[f64], kappa: &Kernel, t: f64, k: &TypeConfig, h: f64) -> f64 {
    (flory_lambda_k(mu, kappa, t + h, k) - flory_lambda_k(mu, kappa, t - h, k)) / (2.0 * h)
}

/// t_c = 1/Σ(κ,μ), infinite when κμ vanishes.
pub fn gelation_time(mu: &[f64], kappa: &Kernel) -> f64 {
    1.0 / solvers::sigma(kappa, mu)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GelPoint {
    pub t: f64,
    /// μ − c*(t), where c*(t) solves the characteristic equation for tκ.
    pub gel: Measure,
    pub micro: Measure,
    pub regime: Regime,
}

/// Gel mass along a time grid from the fixed point for tκ, one point per
/// task.
pub fn gel_mass_curve(mu: &[f64], kappa: &Kernel, times: &[f64]) -> Result<Vec<GelPoint>> {
    check_dims(mu, kappa, None)?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::Precondition(format!("time {t} must be nonnegative")));
    }
    Ok(exec::map_range(Execution::default(), times.len(), |i| {
        let t = times[i];
        let fp = solvers::solve_survival(&kappa.scaled(t), mu, solvers::DEFAULT_TOL);
        let gel: Measure = fp.solution.iter().zip(mu).map(|(r, m)| r * m).collect();
        let micro = mu.iter().zip(&gel).map(|(m, g)| m - g).collect();
        GelPoint {
            t,
            gel,
            micro,
            regime: fp.regime,
        }
    }))
}

/// λ(t) on a time grid together with the gel curve.
#[derive(Clone, Debug)]
pub struct FloryTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MicroMeasure>,
    pub gel: Vec<GelPoint>,
}

pub fn flory_trajectory(mu: &[f64], kappa: &Kernel, times: &[f64], kmax: u32) -> Result<FloryTrajectory> {
    let gel = gel_mass_curve(mu, kappa, times)?;
    let states = exec::map_range(Execution::default(), times.len(), |i| flory_state(mu, kappa, times[i], kmax))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(FloryTrajectory {
        times: times.to_vec(),
        states,
        gel,
    })
}
