//! Rate functions I_Mi, I_Ma, I_Me and their sum, the contracted rates,
//! the explicit minimisers λ_c and the generating series Γ_r.

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{
    self, configs_of_size, connectable, inner, irreducible_classes, total, xlog_ratio, Kernel, MacroMeasure, Measure,
    MicroMeasure, TypeConfig,
};
use crate::solvers::{self, Regime};
use crate::trees;

pub const DEFAULT_KMAX: u32 = 40;
/// Absolute slack allowed when checking c(λ) + c(α) ≤ μ, to absorb rounding
/// in integrated configurations.
pub const ADMISSIBLE_SLACK: f64 = 1e-12;

/// Which paper condition made a rate infinite.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfiniteReason {
    /// λ charges a configuration whose τ vanishes.
    TauZero { config: String },
    /// A measure charges a type where its reference measure vanishes.
    NotAbsolutelyContinuous { term: &'static str, type_index: usize },
    /// c(λ) + c(α) exceeds μ in some coordinate.
    ExceedsMu { type_index: usize },
    /// Reducible mode: a macro atom straddles two irreducible classes.
    NotConnectable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateValue {
    pub value: f64,
    pub reason: Option<InfiniteReason>,
    pub breakdown: Vec<(String, f64)>,
}

impl RateValue {
    fn finite(parts: Vec<(&str, f64)>) -> Self {
        let value = parts.iter().map(|p| p.1).sum();
        Self {
            value,
            reason: None,
            breakdown: parts.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    fn infinite(reason: InfiniteReason) -> Self {
        Self {
            value: f64::INFINITY,
            reason: Some(reason),
            breakdown: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    pub fn part(&self, name: &str) -> Option<f64> {
        self.breakdown.iter().find(|(k, _)| k == name).map(|p| p.1)
    }
}

/// A truncated nonnegative series with a bound on the neglected tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncatedSeries {
    pub partial: f64,
    pub kmax: u32,
    pub tail_bound: f64,
    pub chi: f64,
}

impl TruncatedSeries {
    pub fn upper(&self) -> f64 {
        self.partial + self.tail_bound
    }

    /// True when `x` lies in [partial, partial + tail] up to `slack`.
    pub fn brackets(&self, x: f64, slack: f64) -> bool {
        x >= self.partial - slack && x <= self.upper() + slack
    }
}

/// Bound on Σ_{n>K} s_n from the last two shells s_{K−1}, s_K and the decay
/// exponent χ. Shells of these series decay like e^{−n(χ−1)} up to
/// sub-exponential factors; the ratio used is the larger of e^{−(χ−1)} and
/// the last observed shell ratio.
pub fn geometric_tail(prev: f64, last: f64, chi: f64) -> f64 {
    if last == 0.0 {
        return 0.0;
    }
    let mut ratio = (-(chi - 1.0)).exp();
    if prev > 0.0 {
        ratio = ratio.max(last / prev);
    }
    if !(ratio < 1.0) {
        return f64::INFINITY;
    }
    last * ratio / (1.0 - ratio)
}

fn ln_config_weight(k: &TypeConfig, ln_theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (s, &c) in k.0.iter().enumerate() {
        if c > 0 {
            acc += c as f64 * ln_theta[s] - ln_factorial(c as u64);
        }
    }
    acc
}

/// Terms τ(k) Π θ^k/k! for all k ≪ θ with |k| = 1..=kmax, grouped by shell.
fn shells(theta: &[f64], kappa: &Kernel, kmax: u32, exec_mode: Execution) -> Vec<Vec<(TypeConfig, f64)>> {
    let d = theta.len();
    let ln_theta: Vec<f64> = theta.iter().map(|&t| measures::ln0(t)).collect();
    exec::map_range(exec_mode, kmax as usize, |i| {
        let mut cfgs = Vec::new();
        configs_of_size(d, i as u32 + 1, &mut cfgs);
        cfgs.into_iter()
            .filter(|k| (0..d).all(|s| k.get(s) == 0 || theta[s] > 0.0))
            .filter_map(|k| {
                let lt = trees::ln_tau(&k, kappa);
                if lt == f64::NEG_INFINITY {
                    return None;
                }
                let w = (lt + ln_config_weight(&k, &ln_theta)).exp();
                (w > 0.0).then_some((k, w))
            })
            .collect()
    })
}

/// Truncation of λ_c with tail information.
#[derive(Clone, Debug)]
pub struct LambdaC {
    pub c: Measure,
    pub lambda: MicroMeasure,
    pub kmax: u32,
    pub regime: Regime,
    /// χ(κ, θ(κ,c)), the decay exponent of the shells.
    pub chi: f64,
    /// Bound on Σ_{|k|>kmax} λ_k.
    pub mass_tail: f64,
    /// Bound on Σ_{|k|>kmax} |k| λ_k.
    pub config_tail: f64,
}

impl LambdaC {
    /// [partial, partial + tail] for |λ_c|.
    pub fn mass_series(&self) -> TruncatedSeries {
        TruncatedSeries {
            partial: self.lambda.mass(),
            kmax: self.kmax,
            tail_bound: self.mass_tail,
            chi: self.chi,
        }
    }

    /// True near Σ(κ,c) = 1, where shells decay sub-exponentially and the
    /// tail bounds are loose or infinite.
    pub fn slow_tail(&self) -> bool {
        self.regime == Regime::Critical || self.chi - 1.0 < 1e-3 || !self.config_tail.is_finite()
    }

    /// The total mass |c| − ½⟨c, κc⟩ of the untruncated λ_c (valid for Σ(κ,c) ≤ 1).
    pub fn analytic_mass(&self, kappa: &Kernel) -> f64 {
        total(&self.c) - 0.5 * kappa.form(&self.c, &self.c)
    }

    /// I_Mi of the truncated measure plus the analytic contribution of the
    /// neglected tail, using c(λ_c) = c and |λ_c| = |c| − ½⟨c,κc⟩.
    pub fn rate_micro_corrected(&self, mu: &[f64], kappa: &Kernel) -> RateValue {
        let base = rate_micro(&self.lambda, mu, kappa);
        if !base.is_finite() {
            return base;
        }
        let kc = kappa.apply(&self.c);
        let dc = measures::sub(&self.c, &self.lambda.integrated_config());
        let dmass = self.analytic_mass(kappa) - self.lambda.mass();
        let mut entropy = 0.0;
        for s in 0..dc.len() {
            if dc[s] != 0.0 {
                if mu[s] == 0.0 {
                    return RateValue::infinite(InfiniteReason::NotAbsolutelyContinuous {
                        term: "micro",
                        type_index: s,
                    });
                }
                entropy += dc[s] * (self.c[s].ln() - kc[s] - mu[s].ln());
            }
        }
        let cluster = total(&dc) - dmass;
        let isolation = 0.5 * inner(&dc, &kappa.apply(mu));
        let mut parts: Vec<(String, f64)> = base.breakdown.clone();
        for (name, add) in [("entropy", entropy), ("cluster", cluster), ("isolation", isolation)] {
            if let Some(p) = parts.iter_mut().find(|p| p.0 == name) {
                p.1 += add;
            }
        }
        RateValue {
            value: parts.iter().map(|p| p.1).sum(),
            reason: None,
            breakdown: parts,
        }
    }
}

/// λ_k(c) = τ(k) Π_s (c_s e^{−(κc)_s})^{k_s}/k_s! for 1 ≤ |k| ≤ kmax.
pub fn lambda_c(c: &[f64], kappa: &Kernel, kmax: u32) -> Result<LambdaC> {
    if kmax < 1 {
        return Err(Error::Precondition("kmax must be at least 1".into()));
    }
    if c.len() != kappa.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa.dim(),
            got: c.len(),
        });
    }
    let theta = solvers::theta_of(kappa, c);
    let sh = shells(&theta, kappa, kmax, Execution::default());
    let mut lambda = MicroMeasure::new(c.len());
    let mut mass_shell = Vec::with_capacity(sh.len());
    let mut config_shell = Vec::with_capacity(sh.len());
    for (i, shell) in sh.into_iter().enumerate() {
        let n = (i + 1) as f64;
        let m: f64 = shell.iter().map(|p| p.1).sum();
        mass_shell.push(m);
        config_shell.push(n * m);
        for (k, w) in shell {
            lambda.add_atom(k, w)?;
        }
    }
    let chi = solvers::chi(kappa, &theta);
    let last2 = |v: &[f64]| {
        let l = v.len();
        (if l >= 2 { v[l - 2] } else { 0.0 }, v[l - 1])
    };
    let (mp, ml) = last2(&mass_shell);
    let (cp, cl) = last2(&config_shell);
    Ok(LambdaC {
        c: c.to_vec(),
        lambda,
        kmax,
        regime: Regime::of(solvers::sigma(kappa, c)),
        chi,
        mass_tail: geometric_tail(mp, ml, chi),
        config_tail: geometric_tail(cp, cl, chi),
    })
}

/// Partial sum of Γ_r(θ) = Σ_k τ(k) k_r Π θ^k/k! with a tail bound.
pub fn gamma_series(theta: &[f64], kappa: &Kernel, r: usize, kmax: u32) -> Result<TruncatedSeries> {
    if kmax < 1 {
        return Err(Error::Precondition("kmax must be at least 1".into()));
    }
    if theta.iter().all(|&t| t == 0.0) {
        return Ok(TruncatedSeries {
            partial: 0.0,
            kmax,
            tail_bound: 0.0,
            chi: f64::INFINITY,
        });
    }
    let chi = solvers::chi(kappa, theta);
    if chi < 1.0 {
        return Err(Error::Divergent { chi });
    }
    let sh = shells(theta, kappa, kmax, Execution::default());
    let shell_sums: Vec<f64> = sh
        .iter()
        .map(|shell| shell.iter().map(|(k, w)| w * k.get(r) as f64).sum())
        .collect();
    let l = shell_sums.len();
    let prev = if l >= 2 { shell_sums[l - 2] } else { 0.0 };
    Ok(TruncatedSeries {
        partial: shell_sums.iter().sum(),
        kmax,
        tail_bound: geometric_tail(prev, shell_sums[l - 1], chi),
        chi,
    })
}

/// I_Mi(λ) = Σ_k λ_k log(λ_k/(τ(k) Π μ^k/k!)) + Σ_k λ_k(|k|−1) + ½⟨c(λ), κμ⟩.
pub fn rate_micro(lambda: &MicroMeasure, mu: &[f64], kappa: &Kernel) -> RateValue {
    let ln_mu: Vec<f64> = mu.iter().map(|&m| measures::ln0(m)).collect();
    let mut entropy = 0.0;
    let mut cluster = 0.0;
    for (k, w) in lambda.iter() {
        if let Some(s) = (0..mu.len()).find(|&s| k.get(s) > 0 && mu[s] == 0.0) {
            return RateValue::infinite(InfiniteReason::NotAbsolutelyContinuous {
                term: "micro",
                type_index: s,
            });
        }
        let lt = trees::ln_tau(k, kappa);
        if lt == f64::NEG_INFINITY {
            return RateValue::infinite(InfiniteReason::TauZero { config: k.to_string() });
        }
        entropy += w * (w.ln() - lt - ln_config_weight(k, &ln_mu));
        cluster += w * (k.size() as f64 - 1.0);
    }
    let isolation = 0.5 * inner(&lambda.integrated_config(), &kappa.apply(mu));
    RateValue::finite(vec![("entropy", entropy), ("cluster", cluster), ("isolation", isolation)])
}

/// One macro atom: ⟨y, log(y/((1−e^{−κy})μ))⟩ + ½⟨y, κ(μ−y)⟩.
fn macro_atom(y: &[f64], mu: &[f64], kappa: &Kernel) -> std::result::Result<(f64, f64), usize> {
    let ky = kappa.apply(y);
    let mut ent = 0.0;
    for s in 0..y.len() {
        let reference = -(-ky[s]).exp_m1() * mu[s];
        let t = xlog_ratio(y[s], reference);
        if t.is_infinite() {
            return Err(s);
        }
        ent += t;
    }
    Ok((ent, 0.5 * kappa.form(y, &measures::sub(mu, y))))
}

/// I_Ma(α) = Σ_n [⟨y_n, log(y_n/((1−e^{−κy_n})μ))⟩ + ½⟨y_n, κ(μ−y_n)⟩].
pub fn rate_macro(alpha: &MacroMeasure, mu: &[f64], kappa: &Kernel) -> RateValue {
    let (mut entropy, mut isolation) = (0.0, 0.0);
    for y in alpha.atoms() {
        match macro_atom(y, mu, kappa) {
            Ok((e, i)) => {
                entropy += e;
                isolation += i;
            }
            Err(s) => {
                return RateValue::infinite(InfiniteReason::NotAbsolutelyContinuous {
                    term: "macro",
                    type_index: s,
                })
            }
        }
    }
    RateValue::finite(vec![("entropy", entropy), ("isolation", isolation)])
}

/// I_Me(ν) = ⟨ν, log(ν/((κν)μ))⟩ + ½⟨ν, κμ⟩.
pub fn rate_meso(nu: &[f64], mu: &[f64], kappa: &Kernel) -> RateValue {
    let knu = kappa.apply(nu);
    let mut entropy = 0.0;
    for s in 0..nu.len() {
        let t = xlog_ratio(nu[s], knu[s] * mu[s]);
        if t.is_infinite() {
            return RateValue::infinite(InfiniteReason::NotAbsolutelyContinuous {
                term: "meso",
                type_index: s,
            });
        }
        entropy += t;
    }
    RateValue::finite(vec![("entropy", entropy), ("isolation", 0.5 * inner(nu, &kappa.apply(mu)))])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TotalOptions {
    /// Charge +∞ when some macro atom is not connectable.
    pub reducible: bool,
}

/// μ − used, or the first coordinate where `used` exceeds μ beyond the slack.
fn leftover(mu: &[f64], used: &[f64]) -> std::result::Result<Measure, usize> {
    let mut out = Vec::with_capacity(mu.len());
    for s in 0..mu.len() {
        let d = mu[s] - used[s];
        if d < -ADMISSIBLE_SLACK * mu[s].max(1.0) {
            return Err(s);
        }
        out.push(d.max(0.0));
    }
    Ok(out)
}

fn combine(parts: &[(&str, &RateValue)]) -> RateValue {
    if let Some((_, r)) = parts.iter().find(|(_, r)| !r.is_finite()) {
        return (*r).clone();
    }
    RateValue::finite(parts.iter().map(|(n, r)| (*n, r.value)).collect())
}

/// I(λ, α) = I_Mi(λ) + I_Ma(α) + I_Me(μ − c(λ) − c(α)).
pub fn rate_total(lambda: &MicroMeasure, alpha: &MacroMeasure, mu: &[f64], kappa: &Kernel, opts: TotalOptions) -> RateValue {
    let micro = rate_micro(lambda, mu, kappa);
    total_from_micro(micro, &lambda.integrated_config(), alpha, mu, kappa, opts)
}

fn total_from_micro(
    micro: RateValue,
    c_lambda: &[f64],
    alpha: &MacroMeasure,
    mu: &[f64],
    kappa: &Kernel,
    opts: TotalOptions,
) -> RateValue {
    if opts.reducible && !connectable(alpha, &irreducible_classes(kappa, mu)) {
        return RateValue::infinite(InfiniteReason::NotConnectable);
    }
    let used = measures::add(c_lambda, &alpha.integrated_config());
    let nu = match leftover(mu, &used) {
        Ok(nu) => nu,
        Err(s) => return RateValue::infinite(InfiniteReason::ExceedsMu { type_index: s }),
    };
    let ma = rate_macro(alpha, mu, kappa);
    let me = rate_meso(&nu, mu, kappa);
    combine(&[("micro", &micro), ("macro", &ma), ("meso", &me)])
}

/// 𝓘_Mi(λ) = I_Mi(λ) + I_Ma(δ_{μ−c(λ)}).
pub fn contracted_micro(lambda: &MicroMeasure, mu: &[f64], kappa: &Kernel) -> RateValue {
    let y = match leftover(mu, &lambda.integrated_config()) {
        Ok(y) => y,
        Err(s) => return RateValue::infinite(InfiniteReason::ExceedsMu { type_index: s }),
    };
    let micro = rate_micro(lambda, mu, kappa);
    let mut alpha = MacroMeasure::new(mu.len());
    if y.iter().any(|&v| v > 0.0) {
        alpha.push(y).expect("nonzero atom");
    }
    let ma = rate_macro(&alpha, mu, kappa);
    combine(&[("micro", &micro), ("macro", &ma)])
}

/// Which branch of J(c) applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JBranch {
    /// Σ(κ,c) ≤ 1: all of c is microscopic.
    Micro,
    /// Σ(κ,c) > 1: micro saturated at b*, the rest mesoscopic.
    Saturated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JValue {
    pub value: f64,
    pub branch: JBranch,
    pub b_star: Measure,
    /// G_c(b*), equal to `value` in the saturated branch.
    pub g_value: f64,
}

/// Minimum of I_Mi over λ with c(λ) = c when Σ(κ,c) ≤ 1:
/// ⟨c, log c/μ⟩ + ½⟨c, κ(μ−c)⟩.
pub fn micro_minimum(c: &[f64], mu: &[f64], kappa: &Kernel) -> f64 {
    let ent: f64 = c.iter().zip(mu).map(|(&a, &b)| xlog_ratio(a, b)).sum();
    ent + 0.5 * kappa.form(c, &measures::sub(mu, c))
}

/// J(c): the cheapest way to organise non-macroscopic mass c.
pub fn j_functional(c: &[f64], mu: &[f64], kappa: &Kernel) -> JValue {
    let sig = solvers::sigma(kappa, c);
    if sig <= 1.0 {
        let v = micro_minimum(c, mu, kappa);
        return JValue {
            value: v,
            branch: JBranch::Micro,
            b_star: c.to_vec(),
            g_value: g_c(c, c, mu, kappa),
        };
    }
    let b = solvers::solve_b_star(kappa, c, solvers::DEFAULT_TOL).solution;
    let meso = rate_meso(&measures::sub(c, &b), mu, kappa).value;
    JValue {
        value: micro_minimum(&b, mu, kappa) + meso,
        branch: JBranch::Saturated,
        g_value: g_c(c, &b, mu, kappa),
        b_star: b,
    }
}

/// 𝓘_Ma(α) = I_Ma(α) + J(μ − c(α)).
pub fn contracted_macro(alpha: &MacroMeasure, mu: &[f64], kappa: &Kernel) -> RateValue {
    let rest = match leftover(mu, &alpha.integrated_config()) {
        Ok(r) => r,
        Err(s) => return RateValue::infinite(InfiniteReason::ExceedsMu { type_index: s }),
    };
    let ma = rate_macro(alpha, mu, kappa);
    if !ma.is_finite() {
        return ma;
    }
    let j = j_functional(&rest, mu, kappa);
    if !j.value.is_finite() {
        return RateValue::infinite(InfiniteReason::NotAbsolutelyContinuous {
            term: "micro",
            type_index: rest.iter().zip(mu).position(|(&r, &m)| r > 0.0 && m == 0.0).unwrap_or(0),
        });
    }
    RateValue::finite(vec![("macro", ma.value), ("j", j.value)])
}

/// F_c(b) = ⟨c, log b/μ⟩ + |c−b| + ½⟨b,κb⟩ − ⟨c,κb⟩ + ½⟨c,κμ⟩.
pub fn f_c(c: &[f64], b: &[f64], mu: &[f64], kappa: &Kernel) -> f64 {
    let mut ent = 0.0;
    for s in 0..c.len() {
        if c[s] > 0.0 {
            ent += c[s] * (measures::ln0(b[s]) - mu[s].ln());
        }
    }
    ent + total(&measures::sub(c, b)) + 0.5 * kappa.form(b, b) - kappa.form(c, b) + 0.5 * kappa.form(c, mu)
}

/// G_c(b) = ⟨b, log b/μ⟩ − ½⟨b,κb⟩ + ⟨c−b, log((c−b)/(κ(c−b)μ))⟩ + ½⟨c,κμ⟩.
pub fn g_c(c: &[f64], b: &[f64], mu: &[f64], kappa: &Kernel) -> f64 {
    let gap = measures::sub(c, b);
    let kg = kappa.apply(&gap);
    let mut v = 0.0;
    for s in 0..c.len() {
        v += xlog_ratio(b[s], mu[s]) + xlog_ratio(gap[s].max(0.0), kg[s] * mu[s]);
    }
    v - 0.5 * kappa.form(b, b) + 0.5 * kappa.form(c, mu)
}

/// The global minimiser of I.
#[derive(Clone, Debug)]
pub struct Minimizer {
    pub lambda: LambdaC,
    pub alpha: MacroMeasure,
    pub c_star: Measure,
    pub regime: Regime,
    pub classes: Vec<Vec<usize>>,
    /// False when κ splits supp(μ); α then carries one atom per
    /// supercritical class.
    pub irreducible: bool,
}

impl Minimizer {
    /// I at the truncated minimiser, without tail correction.
    pub fn rate_truncated(&self, mu: &[f64], kappa: &Kernel) -> RateValue {
        rate_total(&self.lambda.lambda, &self.alpha, mu, kappa, TotalOptions::default())
    }

    /// I at the minimiser with the analytic tail correction of the micro part.
    pub fn rate_corrected(&self, mu: &[f64], kappa: &Kernel) -> RateValue {
        let micro = self.lambda.rate_micro_corrected(mu, kappa);
        total_from_micro(micro, &self.lambda.c, &self.alpha, mu, kappa, TotalOptions::default())
    }
}

/// (λ_μ, 0) when Σ(κ,μ) ≤ 1, else (λ_{c*}, δ_{μ−c*}); for reducible κ the
/// macro part is split into the restrictions of μ − c* to each class.
pub fn minimize_rate(mu: &[f64], kappa: &Kernel, kmax: u32) -> Result<Minimizer> {
    let fp = solvers::solve_characteristic(kappa, mu, solvers::DEFAULT_TOL);
    let c_star = fp.solution;
    let classes = irreducible_classes(kappa, mu);
    let mut alpha = MacroMeasure::new(mu.len());
    for class in &classes {
        let mut y = vec![0.0; mu.len()];
        for &s in class {
            y[s] = (mu[s] - c_star[s]).max(0.0);
        }
        if y.iter().any(|&v| v > 0.0) {
            alpha.push(y)?;
        }
    }
    let lambda = lambda_c(&c_star, kappa, kmax)?;
    Ok(Minimizer {
        lambda,
        alpha,
        c_star,
        regime: fp.regime,
        irreducible: classes.len() <= 1,
        classes,
    })
}

/// Σ_r y_r log(1 − e^{−(κy)_r}), the exponential rate of the probability
/// that a macroscopic vertex set of profile y is connected.
pub fn macro_rate(y: &[f64], kappa: &Kernel) -> f64 {
    let ky = kappa.apply(y);
    let mut acc = 0.0;
    for (s, &ys) in y.iter().enumerate() {
        if ys > 0.0 {
            if ky[s] == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += ys * (-(-ky[s]).exp_m1()).ln();
        }
    }
    acc
}

/// (‖κ_N‖ |S_k|)^{|S_k|−1} N^{−(|k|−1)} k_r^{−2} Π_{s∈S_k} (κ_N k)_s^{k_s−1} k_s.
pub fn meso_bound(k: &TypeConfig, kappa_n: &Kernel, n_scale: usize, r: usize) -> Result<f64> {
    if k.get(r) == 0 {
        return Err(Error::Precondition(format!("root type {r} is not in the support of {k}")));
    }
    let supp = k.support();
    let m = supp.len() as f64;
    let kk = kappa_n.apply(&k.as_f64());
    let mut ln = -(k.size() as f64 - 1.0) * (n_scale as f64).ln() - 2.0 * (k.get(r) as f64).ln();
    if m > 1.0 {
        ln += (m - 1.0) * (kappa_n.max_entry() * m).ln();
    }
    for &s in &supp {
        let e = k.get(s) as f64 - 1.0;
        if e > 0.0 {
            ln += e * measures::ln0(kk[s]);
        }
        ln += (k.get(s) as f64).ln();
    }
    Ok(ln.exp())
}
