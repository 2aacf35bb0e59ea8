use irgraph::branching::{self, BorelParams};
use irgraph::graphsim::{self, DEFAULT_EPSILON};
use irgraph::measures::{
    configs_up_to, irreducible_classes, relative_entropy, Kernel, MacroMeasure, Measure, MicroMeasure, TypeConfig,
};
use irgraph::{flory, rates, solvers, trees};
use proptest::prelude::*;

fn entry() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 4 => 0.05..3.0f64]
}

fn kernel(d: usize) -> impl Strategy<Value = Kernel> {
    prop::collection::vec(entry(), d * (d + 1) / 2).prop_map(move |v| build_kernel(d, &v))
}

fn positive_kernel(d: usize) -> impl Strategy<Value = Kernel> {
    prop::collection::vec(0.05..3.0f64, d * (d + 1) / 2).prop_map(move |v| build_kernel(d, &v))
}

fn build_kernel(d: usize, upper: &[f64]) -> Kernel {
    let mut rows = vec![vec![0.0; d]; d];
    let mut it = upper.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().unwrap();
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    Kernel::new(rows).unwrap()
}

fn probability(d: usize) -> impl Strategy<Value = Measure> {
    prop::collection::vec(0.05..1.0f64, d).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn config(d: usize, max: u32) -> impl Strategy<Value = TypeConfig> {
    prop::collection::vec(0..=max, d)
        .prop_filter("nonzero and small", move |v| {
            let s: u32 = v.iter().sum();
            s >= 1 && s <= max
        })
        .prop_map(TypeConfig)
}

fn permute_kernel(k: &Kernel, p: &[usize]) -> Kernel {
    Kernel::from_fn(k.dim(), |i, j| k.get(p[i], p[j]))
}

fn rel(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_entropy_is_nonnegative(a in probability(3), b in probability(3)) {
        prop_assert!(relative_entropy(&a, &b) >= -1e-15);
        prop_assert!(relative_entropy(&a, &a).abs() <= 1e-15);
    }

    #[test]
    fn kernel_form_is_symmetric_and_linear(
        k in kernel(3),
        a in prop::collection::vec(0.0..2.0f64, 3),
        b in prop::collection::vec(0.0..2.0f64, 3),
        s in 0.0..3.0f64,
    ) {
        prop_assert!((k.form(&a, &b) - k.form(&b, &a)).abs() <= 1e-12);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let lhs = k.apply(&combo);
        let (ka, kb) = (k.apply(&a), k.apply(&b));
        for r in 0..3 {
            prop_assert!((lhs[r] - ka[r] - s * kb[r]).abs() <= 1e-12);
        }
    }

    #[test]
    fn integrated_config_is_additive(
        xs in prop::collection::vec((config(2, 5), 0.01..1.0f64), 1..6),
        ys in prop::collection::vec((config(2, 5), 0.01..1.0f64), 1..6),
    ) {
        let a = MicroMeasure::from_atoms(2, xs).unwrap();
        let b = MicroMeasure::from_atoms(2, ys).unwrap();
        let sum = a.plus(&b).unwrap().integrated_config();
        let (ca, cb) = (a.integrated_config(), b.integrated_config());
        for r in 0..2 {
            prop_assert!((sum[r] - ca[r] - cb[r]).abs() <= 1e-12);
        }
    }

    #[test]
    fn irreducible_classes_follow_relabelling(k in kernel(4), mu in probability(4), shift in 1usize..4) {
        let p: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
        let pk = permute_kernel(&k, &p);
        let pmu: Vec<f64> = p.iter().map(|&i| mu[i]).collect();
        let mut mapped: Vec<Vec<usize>> = irreducible_classes(&pk, &pmu)
            .into_iter()
            .map(|c| { let mut v: Vec<usize> = c.into_iter().map(|i| p[i]).collect(); v.sort(); v })
            .collect();
        mapped.sort();
        let mut direct: Vec<Vec<usize>> = irreducible_classes(&k, &mu)
            .into_iter()
            .map(|mut c| { c.sort(); c })
            .collect();
        direct.sort();
        prop_assert_eq!(mapped, direct);
    }

    #[test]
    fn tau_methods_agree(k in kernel(3), cfg in config(3, 7)) {
        let e = trees::tau_enumerate(&cfg, &k).unwrap().value;
        let m = trees::tau_matrix_tree(&cfg, &k).unwrap().value;
        prop_assert!(rel(e, m) <= 1e-9);
        for r in cfg.support() {
            prop_assert!(rel(e, trees::tau_closed_form(&cfg, &k, r).unwrap().value) <= 1e-9);
        }
    }

    #[test]
    fn tau_is_homogeneous(k in kernel(2), cfg in config(2, 9), t in 0.1..4.0f64) {
        let scaled = trees::tau(&cfg, &k.scaled(t));
        let expect = t.powi(cfg.size() as i32 - 1) * trees::tau(&cfg, &k);
        prop_assert!(rel(scaled, expect) <= 1e-10);
    }

    #[test]
    fn tau_vanishes_across_classes(a in 0.1..3.0f64, b in 0.1..3.0f64, x in 1u32..5, y in 1u32..5) {
        let k = Kernel::new(vec![vec![a, 0.0], vec![0.0, b]]).unwrap();
        prop_assert_eq!(trees::tau(&TypeConfig(vec![x, y]), &k), 0.0);
    }

    #[test]
    fn tau_is_permutation_equivariant(k in kernel(3), cfg in config(3, 8), shift in 1usize..3) {
        let p: Vec<usize> = (0..3).map(|i| (i + shift) % 3).collect();
        let pk = permute_kernel(&k, &p);
        let pcfg = TypeConfig(p.iter().map(|&i| cfg.get(i)).collect());
        prop_assert!(rel(trees::tau(&pcfg, &pk), trees::tau(&cfg, &k)) <= 1e-10);
    }

    #[test]
    fn micro_distribution_is_normalised(k in kernel(2), a in 0u32..4, b in 0u32..4) {
        prop_assume!(a + b >= 1);
        let n = (a + b) as f64;
        let k = k.map(|v| v.min(n));
        let dist = graphsim::exact_micro_distribution(&TypeConfig(vec![a, b]), &k).unwrap();
        prop_assert!((dist.values().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gilbert_sum_is_one(k in kernel(2), m in config(2, 6), n in 6usize..60) {
        for r in m.support() {
            let s = graphsim::gilbert_sum(&m, r, &k, n).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-12, "{}", s);
        }
    }

    #[test]
    fn monotone_comparison_holds(k in kernel(2), h in config(2, 6), n in 6usize..60) {
        for small in h.sub_configs() {
            if small.is_zero() {
                continue;
            }
            let p = graphsim::connection_probability_exact(&small, &k, n).unwrap();
            let bound = graphsim::monotone_comparison_bound(&small, &h, &k, n).unwrap();
            prop_assert!(p <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sampled_components_partition_vertices(k in kernel(2), a in 1u32..200, b in 1u32..200, seed in any::<u64>()) {
        let counts = TypeConfig(vec![a, b]);
        let g = graphsim::sample_graph(&counts, &k, seed).unwrap();
        let s = graphsim::component_stats_dim(&g, 2, DEFAULT_EPSILON).unwrap();
        let mut seen = vec![0u8; g.n];
        for comp in &s.components {
            for &v in comp {
                seen[v as usize] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let n = g.n as f64;
        let mu_n = s.mu_n();
        prop_assert!((mu_n[0] - a as f64 / n).abs() <= 1e-12 && (mu_n[1] - b as f64 / n).abs() <= 1e-12);
        let r_max = (DEFAULT_EPSILON * n).floor() as u32;
        let rest = s.residual_mass(r_max);
        prop_assert!(rest.iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn characteristic_solution_satisfies_identity(k in kernel(3), mu in probability(3)) {
        let c = solvers::solve_characteristic(&k, &mu, solvers::DEFAULT_TOL).solution;
        prop_assert!(solvers::characteristic_residual(&k, &mu, &c) <= 1e-9);
        prop_assert!(solvers::sigma(&k, &c) <= 1.0 + 1e-6);
        let rho = solvers::solve_survival(&k, &mu, solvers::DEFAULT_TOL).solution;
        prop_assert!(rho.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn b_star_solves_saturation(k in positive_kernel(2), c in prop::collection::vec(0.1..2.0f64, 2)) {
        let fp = solvers::solve_b_star(&k, &c, solvers::DEFAULT_TOL);
        prop_assert!(solvers::saturation_residual(&k, &c, &fp.solution) <= 1e-9);
        prop_assert!(fp.solution.iter().zip(&c).all(|(b, c)| *b <= c + 1e-15 && *b >= 0.0));
        if solvers::sigma(&k, &c) > 1.0 {
            prop_assert!((solvers::sigma(&k, &fp.solution) - 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn solvers_decompose_over_classes(a in kernel(2), b in kernel(2), mu in probability(4)) {
        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                rows[i][j] = a.get(i, j);
                rows[i + 2][j + 2] = b.get(i, j);
            }
        }
        let whole = Kernel::new(rows).unwrap();
        let global = solvers::solve_survival(&whole, &mu, 1e-13).solution;
        for (block, idx) in [(&a, [0usize, 1]), (&b, [2, 3])] {
            let sub_mu: Vec<f64> = idx.iter().map(|&i| mu[i]).collect();
            let local = solvers::solve_survival(block, &sub_mu, 1e-13).solution;
            for (j, &i) in idx.iter().enumerate() {
                prop_assert!((global[i] - local[j]).abs() <= 1e-8, "{:?} vs {:?}", global, local);
            }
        }
        let c = vec![0.3, 0.4, 0.5, 0.6];
        let gb = solvers::solve_b_star(&whole, &c, 1e-13).solution;
        for idx in [[0usize, 1], [2, 3]] {
            let block = whole.restrict(&idx);
            let sub_c: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
            let lb = solvers::solve_b_star(&block, &sub_c, 1e-13).solution;
            for (j, &i) in idx.iter().enumerate() {
                prop_assert!((gb[i] - lb[j]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn chi_is_at_least_one(k in positive_kernel(2), nu in prop::collection::vec(0.05..1.5f64, 2)) {
        let chi = solvers::chi(&k, &solvers::theta_of(&k, &nu));
        prop_assert!(chi >= 1.0 - 1e-9);
        prop_assert!(chi <= solvers::chi_theta_closed_form(&k, &nu) + 1e-9);
    }
}

/// c for a random kernel scaled so that Σ(κ,c) = sigma.
fn scaled_measure(k: &Kernel, c: &[f64], sigma: f64) -> Vec<f64> {
    let s = solvers::sigma(k, c);
    c.iter().map(|v| v * sigma / s).collect()
}

/// Σ_k [λ log(λ/λ_c) − λ + λ_c] over the union of supports, with the
/// untruncated mass of λ_c standing in for atoms beyond kmax.
fn generalised_entropy(lambda: &MicroMeasure, lc: &rates::LambdaC, kappa: &Kernel) -> f64 {
    let mut h = lc.analytic_mass(kappa) - lambda.mass();
    for (k, w) in lambda.iter() {
        h += w * (w / lc.lambda.get(k)).ln();
    }
    h
}

/// ⟨c(λ) − c, log(c/μ) − κc + 1 + ½κμ⟩: the part of I_Mi(λ) − I_Mi(λ_c)
/// that is not an entropy, nonzero only when c(λ) ≠ c.
fn mass_mismatch(lambda: &MicroMeasure, c: &[f64], mu: &[f64], kappa: &Kernel) -> f64 {
    let (kc, kmu) = (kappa.apply(c), kappa.apply(mu));
    let cl = lambda.integrated_config();
    (0..c.len())
        .map(|r| (cl[r] - c[r]) * ((c[r] / mu[r]).ln() - kc[r] + 1.0 + 0.5 * kmu[r]))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn micro_rate_decomposes_into_entropy(
        k in positive_kernel(2),
        c0 in prop::collection::vec(0.1..1.0f64, 2),
        sigma in 0.1..0.6f64,
        picks in prop::collection::vec((config(2, 6), 0.01..0.5f64), 1..4),
    ) {
        let c = scaled_measure(&k, &c0, sigma);
        let mu: Vec<f64> = c.iter().map(|v| v + 0.3).collect();
        let lc = rates::lambda_c(&c, &k, 40).unwrap();
        let base = lc.rate_micro_corrected(&mu, &k).value;
        // move a fraction of λ_k into singletons, which keeps c(λ)
        let mut lambda = lc.lambda.clone();
        for (cfg, frac) in picks {
            if cfg.size() < 2 {
                continue;
            }
            let w = lambda.get(&cfg);
            let eps = frac * w;
            let mut rebuilt = MicroMeasure::new(2);
            for (kk, ww) in lambda.iter() {
                let mut v = ww;
                if *kk == cfg {
                    v -= eps;
                }
                for r in 0..2 {
                    if *kk == TypeConfig::unit(2, r) {
                        v += eps * cfg.get(r) as f64;
                    }
                }
                if v > 0.0 {
                    rebuilt.add_atom(kk.clone(), v).unwrap();
                }
            }
            lambda = rebuilt;
        }
        let value = rates::rate_micro(&lambda, &mu, &k).value;
        let h = generalised_entropy(&lambda, &lc, &k);
        prop_assert!(h >= -1e-12);
        let expect = h + mass_mismatch(&lambda, &c, &mu, &k);
        prop_assert!((value - base - expect).abs() <= 1e-9 * base.abs().max(1.0), "{} vs {}", value - base, expect);
        prop_assert!(value >= rates::rate_micro(&lc.lambda, &mu, &k).value - 1e-12);
    }

    #[test]
    fn single_macro_block_is_cheapest(
        k in positive_kernel(2),
        mu in probability(2),
        frac in prop::collection::vec(0.05..0.95f64, 2),
        split in prop::collection::vec(0.05..0.95f64, 2),
    ) {
        let c: Vec<f64> = mu.iter().zip(&frac).map(|(m, f)| m * f).collect();
        let one = MacroMeasure::from_atoms(2, [c.clone()]).unwrap();
        let y1: Vec<f64> = c.iter().zip(&split).map(|(v, s)| v * s).collect();
        let y2: Vec<f64> = c.iter().zip(&y1).map(|(v, a)| v - a).collect();
        let two = MacroMeasure::from_atoms(2, [y1, y2]).unwrap();
        prop_assert!(rates::rate_macro(&one, &mu, &k).value <= rates::rate_macro(&two, &mu, &k).value + 1e-12);
    }

    #[test]
    fn g_is_minimised_at_b_star(k in positive_kernel(2), c0 in prop::collection::vec(0.1..1.0f64, 2), sigma in 0.3..4.0f64) {
        let c = scaled_measure(&k, &c0, sigma);
        let mu: Vec<f64> = c.iter().map(|v| v * 1.5).collect();
        let b = solvers::solve_b_star(&k, &c, 1e-13).solution;
        let best = rates::g_c(&c, &b, &mu, &k);
        for i in 1..=20 {
            for j in 1..=20 {
                let cand = vec![c[0] * i as f64 / 20.0, c[1] * j as f64 / 20.0];
                if solvers::sigma(&k, &cand) <= 1.0 {
                    prop_assert!(rates::g_c(&c, &cand, &mu, &k) >= best - 1e-10);
                }
            }
        }
    }

    #[test]
    fn f_never_exceeds_g(
        k in positive_kernel(2),
        c0 in prop::collection::vec(0.1..1.0f64, 2),
        sigma in 0.3..4.0f64,
        s1 in prop::collection::vec(0.01..1.0f64, 2),
        s2 in prop::collection::vec(0.01..1.0f64, 2),
    ) {
        let c = scaled_measure(&k, &c0, sigma);
        let mu: Vec<f64> = c.iter().map(|v| v * 1.5).collect();
        let admissible = |s: &[f64]| {
            let b: Vec<f64> = c.iter().zip(s).map(|(c, s)| c * s).collect();
            let sg = solvers::sigma(&k, &b);
            if sg > 1.0 { b.iter().map(|v| v / sg).collect::<Vec<f64>>() } else { b }
        };
        let (b, bp) = (admissible(&s1), admissible(&s2));
        prop_assert!(rates::f_c(&c, &bp, &mu, &k) <= rates::g_c(&c, &b, &mu, &k) + 1e-10);
    }

    #[test]
    fn minimiser_has_zero_rate(k in kernel(2), mu in probability(2)) {
        let m = rates::minimize_rate(&mu, &k, 40).unwrap();
        prop_assume!(!m.lambda.slow_tail());
        let v = m.rate_corrected(&mu, &k);
        prop_assert!(v.value.abs() <= 1e-8, "{:?}", v);
    }

    #[test]
    fn borel_mass_brackets_extinction(k in positive_kernel(2), nu in prop::collection::vec(0.1..1.0f64, 2)) {
        let p = BorelParams::new(k.clone(), nu.clone()).unwrap();
        let theta = solvers::theta_of(&k, &nu);
        prop_assume!(solvers::chi(&k, &theta) > 1.05);
        let rho = solvers::solve_survival(&k, &nu, 1e-14).solution;
        for r in 0..2 {
            let s = branching::extinction_series(&p, r, 60).unwrap();
            prop_assert!(s.partial <= 1.0 + 1e-12);
            prop_assert!(s.brackets(1.0 - rho[r], 1e-9), "{:?} vs {}", s, 1.0 - rho[r]);
        }
    }

    #[test]
    fn flory_state_matches_lambda_c(k in positive_kernel(2), mu in probability(2), t in 0.1..3.0f64) {
        let tk = k.scaled(t);
        let c = solvers::solve_characteristic(&tk, &mu, 1e-14).solution;
        let lc = rates::lambda_c(&c, &tk, 10).unwrap();
        let state = flory::flory_state(&mu, &k, t, 10).unwrap();
        for cfg in configs_up_to(2, 10) {
            prop_assert!((state.get(&cfg) - lc.lambda.get(&cfg)).abs() <= 1e-12);
            let link = t.powi(cfg.size() as i32 - 1)
                * flory::flory_lambda_k(&mu, &k, 1.0, &cfg)
                * (-(t - 1.0) * cfg.as_f64().iter().zip(k.apply(&mu)).map(|(a, b)| a * b).sum::<f64>()).exp();
            prop_assert!(rel(state.get(&cfg), link) <= 1e-12);
        }
    }

    #[test]
    fn flory_conserves_mass_before_gelation(k in positive_kernel(2), mu in probability(2), frac in 0.05..0.9f64) {
        let t = frac * flory::gelation_time(&mu, &k);
        let state = flory::flory_state(&mu, &k, t, 60).unwrap();
        let tail = rates::lambda_c(&mu, &k.scaled(t), 60).unwrap().config_tail;
        let c = state.integrated_config();
        let deficit: f64 = mu.iter().zip(&c).map(|(m, c)| m - c).sum();
        prop_assert!(deficit >= -1e-12 && deficit <= tail + 1e-12, "deficit {} tail {}", deficit, tail);
    }
}
