//! Spectral radius Σ(κ,ν), the survival and characteristic fixed points,
//! the saturation measure b*(c) and the exponent χ(κ,θ).

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::exec::{self, Execution};
use crate::measures::{irreducible_classes, ln0, support, Kernel, Measure};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 1_000_000;
/// |Σ − 1| below this is reported as critical.
pub const CRITICAL_BAND: f64 = 1e-4;

const POWER_MAX_ITER: usize = 10_000;
const CHI_RESTARTS: usize = 16;
const CHI_SEED: u64 = 0x5eed_c41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn of(sigma: f64) -> Self {
        if (sigma - 1.0).abs() < CRITICAL_BAND {
            Regime::Critical
        } else if sigma < 1.0 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub solution: Measure,
    pub iterations: usize,
    /// Sup-norm residual of the defining identity.
    pub residual: f64,
    pub regime: Regime,
    /// False when the iteration cap was reached.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    /// False when power iteration stalled and the eigendecomposition
    /// fallback (or the best power estimate for large |S|) was used.
    pub power_converged: bool,
}

/// Σ(κ,ν), the spectral radius of T = (κ(r,s) ν_s).
pub fn sigma(kappa: &Kernel, nu: &[f64]) -> f64 {
    sigma_detailed(kappa, nu).value
}

/// Power iteration on the symmetric matrix √ν κ √ν, which has the spectrum
/// of T. Periodic spectra (±Σ) fall back to a full eigendecomposition.
pub fn sigma_detailed(kappa: &Kernel, nu: &[f64]) -> SpectralRadius {
    let n = kappa.dim();
    let sq: Vec<f64> = nu.iter().map(|v| v.max(0.0).sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |r, s| sq[r] * kappa.get(r, s) * sq[s]);
    let mut v = nalgebra::DVector::from_fn(n, |s, _| if nu[s] > 0.0 { 1.0 } else { 0.0 });
    let norm = v.norm();
    if norm == 0.0 {
        return SpectralRadius {
            value: 0.0,
            power_converged: true,
        };
    }
    v /= norm;
    let mut best = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = &a * &v;
        let lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return SpectralRadius {
                value: 0.0,
                power_converged: true,
            };
        }
        best = f64::max(best, wn);
        if (&w - &v * lambda).norm() <= DEFAULT_TOL * lambda.abs() && lambda > 0.0 {
            return SpectralRadius {
                value: lambda,
                power_converged: true,
            };
        }
        v = w / wn;
    }
    let value = if n <= 64 {
        a.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    } else {
        best
    };
    SpectralRadius {
        value,
        power_converged: false,
    }
}

/// Iterates ρ ← 1 − exp(−T_{κ,μ} ρ) from ρ = 1 down to the maximal
/// solution. Classes of supp(μ) with Σ ≤ 1 are set to the exact answer 0.
pub fn solve_survival(kappa: &Kernel, mu: &[f64], tol: f64) -> FixedPointResult {
    let n = kappa.dim();
    let sig = sigma(kappa, mu);
    let regime = Regime::of(sig);
    let survival_map = |rho: &[f64]| -> Measure {
        let weighted: Measure = rho.iter().zip(mu).map(|(r, m)| r * m).collect();
        kappa.apply(&weighted).iter().map(|x| -(-x).exp_m1()).collect()
    };
    let mut rho = vec![1.0; n];
    let mut iterations = 0;
    let mut converged = true;
    if sig <= 1.0 {
        rho = vec![0.0; n];
    } else {
        converged = false;
        while iterations < MAX_ITER {
            let next = survival_map(&rho);
            iterations += 1;
            let mut step: f64 = 0.0;
            for (a, b) in next.iter().zip(&rho) {
                debug_assert!(*a <= *b + 1e-15, "survival iterates must decrease");
                debug_assert!((0.0..=1.0).contains(a));
                step = step.max((a - b).abs());
            }
            rho = next;
            if step <= tol {
                converged = true;
                break;
            }
        }
        for class in irreducible_classes(kappa, mu) {
            let sub_mu: Vec<f64> = class.iter().map(|&s| mu[s]).collect();
            if sigma(&kappa.restrict(&class), &sub_mu) <= 1.0 {
                for &s in &class {
                    rho[s] = 0.0;
                }
            }
        }
        // types outside supp(μ) are determined by the rest
        let off: Vec<usize> = (0..n).filter(|&s| mu[s] <= 0.0).collect();
        if !off.is_empty() {
            let full = survival_map(&rho);
            for s in off {
                rho[s] = full[s];
            }
        }
    }
    let check = survival_map(&rho);
    let residual = rho.iter().zip(&check).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    FixedPointResult {
        solution: rho,
        iterations,
        residual,
        regime,
        converged,
    }
}

/// c* = (1 − ρ) μ, the solution of c e^{−κc} = μ e^{−κμ} with Σ(κ,c*) ≤ 1.
pub fn solve_characteristic(kappa: &Kernel, mu: &[f64], tol: f64) -> FixedPointResult {
    let surv = solve_survival(kappa, mu, tol);
    let c: Measure = surv.solution.iter().zip(mu).map(|(r, m)| (1.0 - r) * m).collect();
    let residual = characteristic_residual(kappa, mu, &c);
    FixedPointResult {
        solution: c,
        iterations: surv.iterations,
        residual,
        regime: surv.regime,
        converged: surv.converged,
    }
}

/// θ(κ,ν) = ν e^{−κν}.
pub fn theta_of(kappa: &Kernel, nu: &[f64]) -> Measure {
    kappa.apply(nu).iter().zip(nu).map(|(k, v)| v * (-k).exp()).collect()
}

/// max_r |c_r e^{−(κc)_r} − μ_r e^{−(κμ)_r}|.
pub fn characteristic_residual(kappa: &Kernel, mu: &[f64], c: &[f64]) -> f64 {
    theta_of(kappa, c)
        .iter()
        .zip(theta_of(kappa, mu))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// max_r |(κ(c−b))_r b_r − (c−b)_r|.
pub fn saturation_residual(kappa: &Kernel, c: &[f64], b: &[f64]) -> f64 {
    let gap: Measure = c.iter().zip(b).map(|(c, b)| c - b).collect();
    kappa
        .apply(&gap)
        .iter()
        .zip(b)
        .zip(&gap)
        .map(|((k, b), g)| (k * b - g).abs())
        .fold(0.0, f64::max)
}

/// b*(c): iterates g ← T_{κ,c}(g/(1+g)) downwards from g = T_{κ,c} 1 and
/// returns b* = c/(1+g*). For reducible κ this is the minimal solution,
/// trivial (b* = c) exactly on the classes where Σ ≤ 1.
pub fn solve_b_star(kappa: &Kernel, c: &[f64], tol: f64) -> FixedPointResult {
    let n = kappa.dim();
    let sig = sigma(kappa, c);
    let regime = Regime::of(sig);
    if sig <= 1.0 {
        return FixedPointResult {
            solution: c.to_vec(),
            iterations: 0,
            residual: 0.0,
            regime,
            converged: true,
        };
    }
    let t_apply = |f: &[f64]| -> Measure {
        let w: Measure = f.iter().zip(c).map(|(f, c)| f * c).collect();
        kappa.apply(&w)
    };
    let mut g = t_apply(&vec![1.0; n]);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let f: Measure = g.iter().map(|g| g / (1.0 + g)).collect();
        let next = t_apply(&f);
        iterations += 1;
        let mut step: f64 = 0.0;
        for (a, b) in next.iter().zip(&g) {
            debug_assert!(*a <= *b * (1.0 + 1e-14) + 1e-300, "saturation iterates must decrease");
            debug_assert!(*a >= 0.0);
            step = step.max((a - b).abs());
        }
        g = next;
        if step <= tol {
            converged = true;
            break;
        }
    }
    for class in irreducible_classes(kappa, c) {
        let sub: Vec<f64> = class.iter().map(|&s| c[s]).collect();
        if sigma(&kappa.restrict(&class), &sub) <= 1.0 {
            for &s in &class {
                g[s] = 0.0;
            }
        }
    }
    let b: Measure = c.iter().zip(&g).map(|(c, g)| c / (1.0 + g)).collect();
    let residual = saturation_residual(kappa, c, &b);
    FixedPointResult {
        solution: b,
        iterations,
        residual,
        regime,
        converged,
    }
}

/// Φ(ν) = ⟨ν, log(ν / ((κν) θ))⟩ on a subset of types.
fn chi_objective(kappa: &Kernel, ln_theta: &[f64], nu: &[f64]) -> f64 {
    let knu = kappa.apply(nu);
    nu.iter()
        .zip(&knu)
        .zip(ln_theta)
        .map(|((&v, &k), &lt)| if v == 0.0 { 0.0 } else { v * (v.ln() - ln0(k) - lt) })
        .sum()
}

fn softmax(z: &[f64]) -> Measure {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Gradient descent in softmax coordinates with Armijo backtracking.
fn chi_descend(kappa: &Kernel, ln_theta: &[f64], mut z: Vec<f64>) -> f64 {
    let m = z.len();
    let mut nu = softmax(&z);
    let mut val = chi_objective(kappa, ln_theta, &nu);
    let mut step = 1.0;
    for _ in 0..20_000 {
        let knu = kappa.apply(&nu);
        let ratio: Vec<f64> = nu.iter().zip(&knu).map(|(v, k)| v / k).collect();
        let back = kappa.apply(&ratio);
        let g: Vec<f64> = (0..m)
            .map(|s| nu[s].ln() - knu[s].ln() - ln_theta[s] + 1.0 - back[s])
            .collect();
        let mean: f64 = nu.iter().zip(&g).map(|(v, g)| v * g).sum();
        let gz: Vec<f64> = (0..m).map(|j| nu[j] * (g[j] - mean)).collect();
        let gnorm2: f64 = gz.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < 1e-11 {
            break;
        }
        step *= 2.0;
        let mut improved = false;
        while step > 1e-16 {
            let trial: Vec<f64> = z.iter().zip(&gz).map(|(z, g)| z - step * g).collect();
            let tnu = softmax(&trial);
            let tval = chi_objective(kappa, ln_theta, &tnu);
            if tval <= val - 1e-4 * step * gnorm2 {
                let gain = val - tval;
                z = trial;
                nu = tnu;
                val = tval;
                improved = gain > 1e-15 * val.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    val
}

/// χ(κ,θ) = inf over probability vectors ν ≪ θ of ⟨ν, log(ν/((κν)θ))⟩.
///
/// The objective is a convex combination of its restrictions to the
/// irreducible classes of κ on supp(θ), so each class is optimised
/// separately (multi-start, softmax coordinates) and the minimum is taken.
pub fn chi(kappa: &Kernel, theta: &[f64]) -> f64 {
    chi_with(kappa, theta, Execution::default())
}

pub fn chi_with(kappa: &Kernel, theta: &[f64], exec_mode: Execution) -> f64 {
    // a type with no positive kernel entry inside supp(θ) can carry no mass
    let supp = support(theta);
    let live: Vec<usize> = supp
        .iter()
        .copied()
        .filter(|&s| supp.iter().any(|&u| kappa.get(s, u) > 0.0))
        .collect();
    let mut masked = vec![0.0; theta.len()];
    for &s in &live {
        masked[s] = theta[s];
    }
    let mut best = f64::INFINITY;
    for class in irreducible_classes(kappa, &masked) {
        let sub = kappa.restrict(&class);
        let ln_theta: Vec<f64> = class.iter().map(|&s| theta[s].ln()).collect();
        let v = if class.len() == 1 {
            -sub.get(0, 0).ln() - ln_theta[0]
        } else {
            let m = class.len();
            let runs = exec::map_range(exec_mode, CHI_RESTARTS, |i| {
                let z0: Vec<f64> = if i == 0 {
                    vec![0.0; m]
                } else {
                    let mut rng = exec::stream_rng(CHI_SEED, i as u64);
                    (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()
                };
                chi_descend(&sub, &ln_theta, z0)
            });
            runs.into_iter().fold(f64::INFINITY, f64::min)
        };
        best = best.min(v);
    }
    best
}

/// Σ(κ,ν*) − log Σ(κ,ν*) with ν* the characteristic solution of ν.
///
/// This value is attained by a feasible point of the χ problem, so it is an
/// upper bound for χ(κ, θ(κ,ν)). It is exact for a single type and at
/// Σ = 1; with several types the infimum can be strictly smaller.
pub fn chi_theta_closed_form(kappa: &Kernel, nu: &[f64]) -> f64 {
    let star = solve_characteristic(kappa, nu, DEFAULT_TOL).solution;
    let s = sigma(kappa, &star);
    s - s.ln()
}
