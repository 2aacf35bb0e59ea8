//! Acceptance suite: each criterion prints one PASS/FAIL line with the
//! numbers it was judged on. The process exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use irgraph::branching::{self, BorelParams};
use irgraph::exec::Execution;
use irgraph::graphsim::{self, Profile};
use irgraph::measures::{configs_up_to, Kernel, TypeConfig};
use irgraph::{flory, rates, solvers, trees, verify};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_kernel(rng: &mut ChaCha8Rng, d: usize, max: f64, zero_prob: f64) -> Kernel {
    let mut rows = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let v = if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random::<f64>() * max };
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    Kernel::new(rows).unwrap()
}

fn random_config(rng: &mut ChaCha8Rng, d: usize, max_size: u32) -> TypeConfig {
    loop {
        let k = TypeConfig((0..d).map(|_| rng.random_range(0..=max_size)).collect());
        if !k.is_zero() && k.size() <= max_size {
            return k;
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

fn tau_methods() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut methods, mut recursion, mut directed) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let d = rng.random_range(1..=3);
        let kappa = random_kernel(&mut rng, d, 2.0, 0.2);
        let k = random_config(&mut rng, d, 7);
        let enumerated = trees::tau_enumerate(&k, &kappa).unwrap().value;
        let matrix = trees::tau_matrix_tree(&k, &kappa).unwrap().value;
        for r in k.support() {
            let closed = trees::tau_closed_form(&k, &kappa, r).unwrap().value;
            methods = methods.max(rel(enumerated, closed));
            directed = directed.max(trees::check_directed_identity(&k, &kappa, r).unwrap().relative());
        }
        methods = methods.max(rel(enumerated, matrix));
        recursion = recursion.max(trees::check_recursion(&k, &kappa).unwrap().relative());
    }
    let pass = methods <= 1e-9 && recursion <= 1e-9 && directed <= 1e-9;
    outcome(
        pass,
        format!("max relative gaps: methods {methods:.2e}, recursion {recursion:.2e}, directed {directed:.2e} (limit 1e-9)"),
    )
}

/// P(N·Mi_N = ℓ) by summing over all 2^6 edge sets of a 4-vertex graph.
fn exhaustive_profiles(counts: &TypeConfig, kappa_n: &Kernel) -> BTreeMap<Profile, f64> {
    let types = counts.vertex_types();
    let n = types.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let probs: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (kappa_n.get(types[i], types[j]) / n as f64).min(1.0))
        .collect();
    let mut out = BTreeMap::new();
    for mask in 0u32..(1 << pairs.len()) {
        let mut weight = 1.0;
        let mut label: Vec<usize> = (0..n).collect();
        for (e, &(i, j)) in pairs.iter().enumerate() {
            if mask >> e & 1 == 1 {
                weight *= probs[e];
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == b {
                        *l = a;
                    }
                }
            } else {
                weight *= 1.0 - probs[e];
            }
        }
        let mut comps: BTreeMap<usize, TypeConfig> = BTreeMap::new();
        for v in 0..n {
            comps.entry(label[v]).or_insert_with(|| TypeConfig::zero(counts.dim())).0[types[v]] += 1;
        }
        let profile = Profile::from_configs(comps.values());
        *out.entry(profile).or_insert(0.0) += weight;
    }
    out
}

fn exact_distribution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_tv, mut worst_sum) = (0.0f64, 0.0f64);
    for trial in 0..40 {
        let kappa = random_kernel(&mut rng, 2, 4.0, 0.15);
        let a = trial % 5;
        let counts = TypeConfig(vec![a, 4 - a]);
        let formula = graphsim::exact_micro_distribution(&counts, &kappa).unwrap();
        let brute = exhaustive_profiles(&counts, &kappa);
        let mut keys: Vec<&Profile> = formula.keys().chain(brute.keys()).collect();
        keys.sort();
        keys.dedup();
        let tv: f64 = 0.5
            * keys
                .iter()
                .map(|p| (formula.get(*p).copied().unwrap_or(0.0) - brute.get(*p).copied().unwrap_or(0.0)).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
        worst_sum = worst_sum.max((formula.values().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worst_tv <= 1e-12 && worst_sum <= 1e-12,
        format!("40 kernels, N = 4: max TV {worst_tv:.2e}, max |sum - 1| {worst_sum:.2e} (limit 1e-12)"),
    )
}

fn sandwich() -> Outcome {
    let mut kernels = vec![Kernel::scalar(1.0), Kernel::scalar(3.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        kernels.push(random_kernel(&mut rng, 2, 3.0, 0.0));
    }
    let mut checked = 0;
    let mut failures = 0;
    for kappa in &kernels {
        for k in configs_up_to(kappa.dim(), 6) {
            for n in [10, 50, 200] {
                let p = graphsim::connection_probability_exact(&k, kappa, n).unwrap();
                let (lo, hi) = graphsim::sandwich_bounds(&k, kappa, n);
                checked += 1;
                if p < lo * (1.0 - 1e-12) || p > hi * (1.0 + 1e-12) {
                    failures += 1;
                }
            }
        }
    }
    let k3 = TypeConfig(vec![3]);
    let p = graphsim::connection_probability_exact(&k3, &Kernel::scalar(1.0), 10).unwrap();
    let (lo, hi) = graphsim::sandwich_bounds(&k3, &Kernel::scalar(1.0), 10);
    let example = (p - 0.028).abs() < 1e-12 && (hi - 0.03).abs() < 1e-12 && (lo - 0.03 * 0.9f64.powf(4.5)).abs() < 1e-12;
    outcome(
        failures == 0 && example,
        format!("{checked} (k, N, kappa) triples, {failures} outside the bracket; |k| = 3, N = 10: {lo:.4} <= {p:.4} <= {hi:.4}"),
    )
}

fn fixed_points() -> Outcome {
    let k = Kernel::scalar(2.0);
    let rho = solvers::solve_survival(&k, &[1.0], solvers::DEFAULT_TOL).solution[0];
    let c = solvers::solve_characteristic(&k, &[1.0], solvers::DEFAULT_TOL).solution;
    let res = solvers::characteristic_residual(&k, &[1.0], &c);
    let b = solvers::solve_b_star(&k, &[1.0], solvers::DEFAULT_TOL).solution;
    let sig_b = solvers::sigma(&k, &b);
    let pass = (rho - 0.796812).abs() <= 1e-6
        && (c[0] - 0.203188).abs() <= 1e-6
        && res <= 1e-10
        && (b[0] - 0.5).abs() <= 1e-10
        && (sig_b - 1.0).abs() <= 1e-8;
    outcome(
        pass,
        format!("rho {rho:.8}, c* {:.8}, residual {res:.1e}, b* {:.12}, Sigma(b*) {sig_b:.10}", c[0], b[0]),
    )
}

fn gamma_series() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (kap, target) in [
        (0.5, 1.0),
        (2.0, solvers::solve_characteristic(&Kernel::scalar(2.0), &[1.0], 1e-15).solution[0]),
    ] {
        let k = Kernel::scalar(kap);
        let theta = solvers::theta_of(&k, &[target]);
        let g = rates::gamma_series(&theta, &k, 0, 200).unwrap();
        pass &= g.brackets(target, 1e-12) && (g.partial - target).abs() <= 1e-6;
        parts.push(format!("kappa {kap}: partial {:.10} vs {target:.10}, tail {:.1e}", g.partial, g.tail_bound));
    }
    outcome(pass, parts.join("; "))
}

fn total_mass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut contained, mut widest) = (0, 0.0f64);
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let kappa = random_kernel(&mut rng, d, 2.0, 0.1);
        let mut c: Vec<f64> = (0..d).map(|_| 0.1 + rng.random::<f64>()).collect();
        let sig = solvers::sigma(&kappa, &c);
        if sig == 0.0 {
            c.iter_mut().for_each(|v| *v *= 0.5);
        } else {
            let want = 0.1 + 0.4 * rng.random::<f64>();
            c.iter_mut().for_each(|v| *v *= want / sig);
        }
        let lc = rates::lambda_c(&c, &kappa, 40).unwrap();
        let target = lc.analytic_mass(&kappa);
        let series = lc.mass_series();
        if series.brackets(target, 1e-12 * target) {
            contained += 1;
        }
        widest = widest.max(series.tail_bound / target);
    }
    outcome(
        contained == 20 && widest <= 1e-4,
        format!("{contained}/20 brackets contain the analytic mass; widest relative bracket {widest:.1e} (limit 1e-4)"),
    )
}

fn minimizer_value() -> Outcome {
    let split = {
        let c = solvers::solve_characteristic(&Kernel::scalar(2.0), &[1.0], 1e-15).solution[0];
        c * c.ln() + c * (1.0 - c)
    };
    let models: Vec<(&str, Vec<f64>, Kernel)> = vec![
        ("kappa 0.5", vec![1.0], Kernel::scalar(0.5)),
        ("kappa 2", vec![1.0], Kernel::scalar(2.0)),
        ("two-type", vec![0.5, 0.5], Kernel::new(vec![vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, mu, kappa) in &models {
        let m = rates::minimize_rate(mu, kappa, rates::DEFAULT_KMAX).unwrap();
        let corrected = m.rate_corrected(mu, kappa);
        let truncated = m.rate_truncated(mu, kappa);
        pass &= corrected.value.abs() <= 1e-4 && truncated.value.abs() <= 1e-4;
        parts.push(format!("{name}: I = {:.1e} (truncated {:.1e})", corrected.value, truncated.value));
        if *name == "kappa 2" {
            let (mi, ma) = (corrected.part("micro").unwrap(), corrected.part("macro").unwrap());
            pass &= (mi - split).abs() <= 1e-6 && (ma + split).abs() <= 1e-6;
            parts.push(format!("split {mi:.6}/{ma:+.6}"));
        }
    }
    outcome(pass, parts.join("; "))
}

fn borel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut identity = 0.0f64;
    for d in 1..=3 {
        let kappa = random_kernel(&mut rng, d, 1.5, 0.1);
        let mu: Vec<f64> = {
            let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        identity = identity.max(branching::check_micro_branching_relation(&mu, &kappa, 5).unwrap());
    }
    let sub = BorelParams::new(Kernel::scalar(0.5), vec![1.0]).unwrap();
    let s = branching::sample_progeny_batch(&sub, 0, 1_000_000, 81, branching::DEFAULT_CAP, Execution::default()).unwrap();
    let tv = s.total_variation(&sub, 40).unwrap();
    let sup = BorelParams::new(Kernel::scalar(2.0), vec![1.0]).unwrap();
    let s = branching::sample_progeny_batch(&sup, 0, 1_000_000, 82, branching::DEFAULT_CAP, Execution::default()).unwrap();
    let freq = s.explosion_frequency();
    outcome(
        identity <= 1e-12 && tv < 0.01 && (freq - 0.796812).abs() <= 0.002,
        format!("identity residual {identity:.1e}; TV {tv:.4} (limit 0.01); explosion frequency {freq:.5} (0.796812 +/- 0.002)"),
    )
}

fn flory_checks() -> Outcome {
    let (mu, kappa) = ([1.0], Kernel::scalar(1.0));
    let (mut residual, mut fd) = (0.0f64, 0.0f64);
    for t in [0.5, 1.0, 2.0] {
        for n in 1..=12u32 {
            let k = TypeConfig(vec![n]);
            let d = flory::flory_derivative(&mu, &kappa, t, &k);
            let r = flory::flory_residual(&mu, &kappa, t, &k).unwrap();
            residual = residual.max(r / d.abs().max(1.0));
            let lam = flory::flory_lambda_k(&mu, &kappa, t, &k);
            let approx = flory::flory_finite_difference(&mu, &kappa, t, &k, 1e-5);
            // relative to the larger of |d/dt λ_k| and λ_k, since d/dt λ_k
            // vanishes at isolated times
            fd = fd.max((approx - d).abs() / d.abs().max(lam));
        }
    }
    let times: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).chain([2.0]).collect();
    let gel = flory::gel_mass_curve(&mu, &kappa, &times).unwrap();
    let pre = gel[..10].iter().map(|g| g.gel[0]).fold(0.0, f64::max);
    let at2 = gel[10].gel[0];
    outcome(
        residual <= 1e-10 && fd <= 1e-7 && pre == 0.0 && (at2 - 0.796812).abs() <= 1e-6,
        format!("residual {residual:.1e}, finite difference {fd:.1e}, max gel before t_c {pre}, gel(2) {at2:.6}"),
    )
}

fn statistical_lln() -> Outcome {
    let k = Kernel::scalar(2.0);
    let giant = verify::verify_giant_lln(&[1.0], &k, 100_000, 20, 10, Execution::default()).unwrap();
    let micro = verify::verify_micro_lln(&[1.0], &k, 100_000, 20, 11, 10, Execution::default()).unwrap();
    let g = &giant.checks[0];
    let iso = micro.checks.iter().find(|c| c.name == "isolated_fraction").unwrap();
    outcome(
        g.pass && iso.pass,
        format!(
            "giant {:.5} vs {:.6} (+/- {}); isolated {:.5} vs {:.6} (+/- {})",
            g.empirical, g.theoretical, g.tolerance, iso.empirical, iso.theoretical, iso.tolerance
        ),
    )
}

fn connectivity_rate() -> Outcome {
    let rep = verify::verify_connectivity_rate(&[1.0], &Kernel::scalar(4.0), &[100, 150, 200, 250], 200_000, 12, Execution::default())
        .unwrap();
    let c = &rep.checks[0];
    outcome(
        c.pass,
        format!(
            "slope {:.6} +/- {:.1e} vs {:.7} (tolerance {:.6})",
            c.empirical, c.uncertainty, c.theoretical, c.tolerance
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("tree weights: methods and identities", tau_methods),
        ("exact cluster distribution vs exhaustive N = 4", exact_distribution),
        ("connection probability bracket", sandwich),
        ("fixed points", fixed_points),
        ("generating series", gamma_series),
        ("total mass of lambda_c", total_mass),
        ("minimiser value and split", minimizer_value),
        ("Borel distribution and branching", borel),
        ("Flory equation and gel mass", flory_checks),
        ("laws of large numbers", statistical_lln),
        ("connectivity rate", connectivity_rate),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{tag}] {:>2}. {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
