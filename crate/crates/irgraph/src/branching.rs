//! The multi-type Borel distribution: total progeny of a Poisson
//! multi-type branching process where a type-r individual has
//! Poisson(κ(r,s)ν_s) children of type s.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::graphsim::MC_CHUNK;
use crate::measures::{configs_up_to, Kernel, Measure, TypeConfig};
use crate::rates::{self, TruncatedSeries};
use crate::{solvers, trees};

/// Population size beyond which a line is declared to survive.
pub const DEFAULT_CAP: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BorelParams {
    pub kappa: Kernel,
    pub nu: Measure,
}

impl BorelParams {
    pub fn new(kappa: Kernel, nu: Measure) -> Result<Self> {
        if nu.len() != kappa.dim() {
            return Err(Error::DimensionMismatch {
                expected: kappa.dim(),
                got: nu.len(),
            });
        }
        if nu.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel("ν must be finite and nonnegative".into()));
        }
        Ok(Self { kappa, nu })
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    fn check_root(&self, r: usize) -> Result<()> {
        if r >= self.dim() {
            return Err(Error::Precondition(format!("type {r} out of range")));
        }
        if self.nu[r] == 0.0 {
            return Err(Error::Precondition(format!("ν vanishes at root type {r}")));
        }
        Ok(())
    }
}

/// ln ℙ_r(𝓔 = k) = ln[τ(k) (k_r/ν_r) Π_s (ν_s e^{−(κν)_s})^{k_s}/k_s!].
pub fn ln_borel_pmf(params: &BorelParams, r: usize, k: &TypeConfig) -> Result<f64> {
    params.check_root(r)?;
    if k.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: k.dim(),
        });
    }
    if k.get(r) == 0 || (0..k.dim()).any(|s| k.get(s) > 0 && params.nu[s] == 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let knu = params.kappa.apply(&params.nu);
    let mut ln = trees::ln_tau(k, &params.kappa) + (k.get(r) as f64).ln() - params.nu[r].ln();
    for s in k.support() {
        let ks = k.get(s);
        ln += ks as f64 * (params.nu[s].ln() - knu[s]) - ln_factorial(ks as u64);
    }
    Ok(ln)
}

pub fn borel_pmf(params: &BorelParams, r: usize, k: &TypeConfig) -> Result<f64> {
    Ok(ln_borel_pmf(params, r, k)?.exp())
}

/// Σ_{|k|≤kmax} ℙ_r(𝓔 = k) with a tail bound; the full sum is the
/// extinction probability 1 − ρ_r.
pub fn extinction_series(params: &BorelParams, r: usize, kmax: u32) -> Result<TruncatedSeries> {
    params.check_root(r)?;
    let theta = solvers::theta_of(&params.kappa, &params.nu);
    let g = rates::gamma_series(&theta, &params.kappa, r, kmax)?;
    Ok(TruncatedSeries {
        partial: g.partial / params.nu[r],
        tail_bound: g.tail_bound / params.nu[r],
        ..g
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Progeny {
    Extinct(TypeConfig),
    /// The population exceeded the cap.
    Explosion,
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Generation-by-generation simulation of the process started from one
/// individual of type r.
pub fn sample_total_progeny_with<R: Rng + ?Sized>(params: &BorelParams, r: usize, cap: u64, rng: &mut R) -> Progeny {
    let d = params.dim();
    let mut total = vec![0u64; d];
    let mut generation = vec![0u64; d];
    generation[r] = 1;
    total[r] = 1;
    let mut population = 1u64;
    while generation.iter().any(|&g| g > 0) {
        let mut next = vec![0u64; d];
        for (u, &count) in generation.iter().enumerate() {
            if count == 0 {
                continue;
            }
            for (s, slot) in next.iter_mut().enumerate() {
                *slot += poisson(count as f64 * params.kappa.get(u, s) * params.nu[s], rng);
            }
        }
        population += next.iter().sum::<u64>();
        if population > cap {
            return Progeny::Explosion;
        }
        for (t, n) in total.iter_mut().zip(&next) {
            *t += n;
        }
        generation = next;
    }
    Progeny::Extinct(TypeConfig(total.into_iter().map(|v| v as u32).collect()))
}

pub fn sample_total_progeny(params: &BorelParams, r: usize, seed: u64, cap: u64) -> Result<Progeny> {
    params.check_root(r)?;
    if cap < 1 {
        return Err(Error::Precondition("cap must be at least 1".into()));
    }
    Ok(sample_total_progeny_with(params, r, cap, &mut exec::stream_rng(seed, 0)))
}

/// Counts of total-progeny outcomes over many independent runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProgenySummary {
    pub root: usize,
    pub samples: u64,
    pub explosions: u64,
    pub counts: BTreeMap<TypeConfig, u64>,
}

impl ProgenySummary {
    pub fn explosion_frequency(&self) -> f64 {
        self.explosions as f64 / self.samples as f64
    }

    pub fn frequency(&self, k: &TypeConfig) -> f64 {
        self.counts.get(k).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    /// Total variation between the empirical law and the Borel law, with
    /// explosion compared against the survival probability ρ_r. Finite
    /// configurations with |k| ≤ kmax or seen in the sample are compared
    /// pointwise; the remaining finite mass 1 − ρ_r − (listed mass) was
    /// never observed and is charged in full.
    pub fn total_variation(&self, params: &BorelParams, kmax: u32) -> Result<f64> {
        let mut keys: Vec<TypeConfig> = configs_up_to(params.dim(), kmax)
            .into_iter()
            .filter(|k| k.get(self.root) > 0)
            .collect();
        keys.extend(self.counts.keys().filter(|k| k.size() > kmax).cloned());
        let mut diff = 0.0;
        let mut covered = 0.0;
        for k in &keys {
            let p = borel_pmf(params, self.root, k)?;
            covered += p;
            diff += (self.frequency(k) - p).abs();
        }
        let rho = solvers::solve_survival(&params.kappa, &params.nu, solvers::DEFAULT_TOL).solution[self.root];
        let rest = (1.0 - rho - covered).max(0.0);
        diff += rest + (self.explosion_frequency() - rho).abs();
        Ok(0.5 * diff)
    }
}

/// `samples` independent runs, split into fixed chunks with their own
/// streams so the result does not depend on the thread count.
pub fn sample_progeny_batch(
    params: &BorelParams,
    r: usize,
    samples: usize,
    seed: u64,
    cap: u64,
    exec_mode: Execution,
) -> Result<ProgenySummary> {
    params.check_root(r)?;
    if samples == 0 || cap < 1 {
        return Err(Error::Precondition("samples and cap must be positive".into()));
    }
    let chunks = exec::chunk_sizes(samples, MC_CHUNK);
    let parts = exec::map_range(exec_mode, chunks.len(), |c| {
        let mut rng = exec::stream_rng(seed, c as u64);
        let mut counts: BTreeMap<TypeConfig, u64> = BTreeMap::new();
        let mut explosions = 0u64;
        for _ in 0..chunks[c] {
            match sample_total_progeny_with(params, r, cap, &mut rng) {
                Progeny::Extinct(k) => *counts.entry(k).or_default() += 1,
                Progeny::Explosion => explosions += 1,
            }
        }
        (counts, explosions)
    });
    let mut summary = ProgenySummary {
        root: r,
        samples: samples as u64,
        explosions: 0,
        counts: BTreeMap::new(),
    };
    for (counts, explosions) in parts {
        summary.explosions += explosions;
        for (k, n) in counts {
            *summary.counts.entry(k).or_default() += n;
        }
    }
    Ok(summary)
}

/// max over r and 1 ≤ |k| ≤ kmax of the relative gap between
/// μ_r ℙ_r(𝓔 = k) under Bo_{κ,μ} and λ_k(μ) k_r.
pub fn check_micro_branching_relation(mu: &[f64], kappa: &Kernel, kmax: u32) -> Result<f64> {
    let params = BorelParams::new(kappa.clone(), mu.to_vec())?;
    let lambda = rates::lambda_c(mu, kappa, kmax)?.lambda;
    let mut worst = 0.0f64;
    for k in configs_up_to(mu.len(), kmax) {
        for r in 0..mu.len() {
            let lhs = if mu[r] == 0.0 {
                0.0
            } else {
                mu[r] * borel_pmf(&params, r, &k)?
            };
            let rhs = lambda.get(&k) * k.get(r) as f64;
            let gap = (lhs - rhs).abs();
            if gap > 0.0 {
                worst = worst.max(gap / rhs.abs().max(lhs.abs()));
            }
        }
    }
    Ok(worst)
}
