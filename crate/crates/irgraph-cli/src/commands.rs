use std::path::Path;

use anyhow::{bail, Context, Result};
use irgraph::branching::{self, BorelParams};
use irgraph::exec::{self, Execution};
use irgraph::graphsim::{self, Sampler};
use irgraph::measures::{self, configs_up_to, MacroMeasure, MicroMeasure, TypeConfig};
use irgraph::rates::{self, TotalOptions};
use irgraph::{flory, solvers, trees, verify, Model};
use serde::Deserialize;
use serde_json::json;

use crate::output::Sink;

fn labelled(model: &Model, prefix: &str) -> Vec<String> {
    model.types.labels().iter().map(|l| format!("{prefix}{l}")).collect()
}

/// Shortest round-trip form, with exponents for very large or small values.
fn num(x: f64) -> String {
    match serde_json::Number::from_f64(x) {
        Some(n) => n.to_string(),
        None if x.is_nan() => "nan".into(),
        None if x > 0.0 => "inf".into(),
        None => "-inf".into(),
    }
}

pub fn simulate(model: &Model, n: usize, replicas: usize, epsilon: f64, seed: u64, sink: &Sink) -> Result<()> {
    if n == 0 || replicas == 0 {
        bail!("--N and --replicas must be positive");
    }
    let d = model.dim();
    let kappa_n = model.kernel_rule.kernel_at(&model.kappa, n);
    let limit = model.kernel_rule.limit(&model.kappa);
    let counts = model.type_counts(n);
    let rho = solvers::solve_survival(&limit, &model.mu, solvers::DEFAULT_TOL).solution;
    let giant_theory: Vec<f64> = rho.iter().zip(&model.mu).map(|(r, m)| r * m).collect();
    let c_star = solvers::solve_characteristic(&limit, &model.mu, solvers::DEFAULT_TOL).solution;
    let isolated_theory = solvers::theta_of(&limit, &c_star);

    let rows = exec::map_range(Execution::default(), replicas, |i| -> irgraph::Result<Vec<f64>> {
        let mut rng = exec::stream_rng(seed, i as u64);
        let g = graphsim::sample_graph_with(&counts, &kappa_n, Sampler::default(), &mut rng)?;
        let s = graphsim::component_stats_dim(&g, d, epsilon)?;
        let largest = s.largest().as_f64();
        let mut row = vec![g.edges.len() as f64, s.components.len() as f64, largest.iter().sum()];
        row.extend(largest.iter().map(|v| v / n as f64));
        row.extend((0..d).map(|r| s.micro.get(&TypeConfig::unit(d, r))));
        row.push(s.macro_.len() as f64);
        Ok(row)
    })
    .into_iter()
    .collect::<irgraph::Result<Vec<_>>>()?;

    let mut header: Vec<String> = ["replica", "edges", "components", "largest"].map(String::from).to_vec();
    header.extend(labelled(model, "giant_"));
    header.extend(labelled(model, "giant_theory_"));
    header.extend(labelled(model, "isolated_"));
    header.extend(labelled(model, "isolated_theory_"));
    header.push("macro_components".into());
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let count = |x: f64| (x as u64).to_string();
            let mut out = vec![i.to_string(), count(r[0]), count(r[1]), count(r[2])];
            out.extend(r[3..3 + d].iter().map(|&v| num(v)));
            out.extend(giant_theory.iter().map(|&v| num(v)));
            out.extend(r[3 + d..3 + 2 * d].iter().map(|&v| num(v)));
            out.extend(isolated_theory.iter().map(|&v| num(v)));
            out.push(count(r[3 + 2 * d]));
            out
        })
        .collect();
    let mean = |col: usize| rows.iter().map(|r| r[col]).sum::<f64>() / replicas as f64;
    let summary = json!({
        "n": n,
        "replicas": replicas,
        "seed": seed,
        "epsilon": epsilon,
        "type_counts": counts,
        "giant_fraction": (0..d).map(|r| mean(3 + r)).collect::<Vec<_>>(),
        "giant_fraction_theory": giant_theory,
        "isolated_fraction": (0..d).map(|r| mean(3 + d + r)).collect::<Vec<_>>(),
        "isolated_fraction_theory": isolated_theory,
    });
    sink.json("simulate", &summary)?;
    sink.csv("simulate", &header, &table)
}

pub fn exact_dist(model: &Model, n: usize, sink: &Sink) -> Result<()> {
    let counts = model.type_counts(n);
    let kappa_n = model.kernel_rule.kernel_at(&model.kappa, n);
    let dist = graphsim::exact_micro_distribution(&counts, &kappa_n)?;
    let rows: Vec<Vec<String>> = dist.iter().map(|(p, w)| vec![p.to_string(), num(*w)]).collect();
    sink.json(
        "exact_dist",
        &json!({
            "n": n,
            "type_counts": counts,
            "profiles": dist.len(),
            "total_probability": dist.values().sum::<f64>(),
        }),
    )?;
    sink.csv("exact_dist", &["profile".into(), "probability".into()], &rows)
}

pub fn tau(model: &Model, k: &TypeConfig, sink: &Sink) -> Result<()> {
    if k.dim() != model.dim() {
        bail!("configuration has {} entries for {} types", k.dim(), model.dim());
    }
    let kappa = &model.kappa;
    let enumerated = (k.size() <= trees::ENUMERATION_LIMIT)
        .then(|| trees::tau_enumerate(k, kappa).map(|t| t.value))
        .transpose()?;
    let matrix = trees::tau_matrix_tree(k, kappa).ok().map(|t| t.value);
    let closed: Vec<_> = k
        .support()
        .into_iter()
        .map(|r| trees::tau_closed_form(k, kappa, r).map(|t| json!({ "root": r, "value": t.value })))
        .collect::<irgraph::Result<_>>()?;
    let recursion = trees::check_recursion(k, kappa)?;
    let directed: Vec<_> = if k.size() <= trees::DIRECTED_LIMIT {
        k.support()
            .into_iter()
            .map(|r| {
                trees::check_directed_identity(k, kappa, r)
                    .map(|c| json!({ "root": r, "lhs": c.lhs, "rhs": c.rhs, "relative": c.relative() }))
            })
            .collect::<irgraph::Result<_>>()?
    } else {
        Vec::new()
    };
    sink.json(
        "tau",
        &json!({
            "k": k,
            "ln_tau": trees::ln_tau(k, kappa),
            "enumeration": enumerated,
            "matrix_tree": matrix,
            "closed_form": closed,
            "recursion": { "lhs": recursion.lhs, "rhs": recursion.rhs, "relative": recursion.relative() },
            "directed": directed,
        }),
    )
}

pub fn solve(model: &Model, tol: f64, sink: &Sink) -> Result<()> {
    let kappa = model.kernel_rule.limit(&model.kappa);
    let mu = &model.mu;
    let sigma = solvers::sigma_detailed(&kappa, mu);
    let surv = solvers::solve_survival(&kappa, mu, tol);
    let c = solvers::solve_characteristic(&kappa, mu, tol);
    let b = solvers::solve_b_star(&kappa, mu, tol);
    let theta = solvers::theta_of(&kappa, mu);
    sink.json(
        "solve",
        &json!({
            "types": model.types.labels(),
            "sigma": sigma.value,
            "regime": surv.regime,
            "rho": surv.solution,
            "c_star": c.solution,
            "characteristic_residual": c.residual,
            "iterations": surv.iterations,
            "converged": surv.converged,
            "b_star_of_mu": b.solution,
            "saturation_residual": solvers::saturation_residual(&kappa, mu, &b.solution),
            "gelation_time": flory::gelation_time(mu, &kappa),
            "chi": solvers::chi(&kappa, &theta),
        }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateInput {
    #[serde(default)]
    lambda: Vec<RateAtom>,
    #[serde(default)]
    alpha: Vec<Vec<f64>>,
    #[serde(default)]
    reducible: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateAtom {
    k: Vec<u32>,
    weight: f64,
}

pub fn rate(model: &Model, input: &Path, sink: &Sink) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let raw: RateInput = serde_json::from_str(&text).with_context(|| format!("invalid rate input {}", input.display()))?;
    let d = model.dim();
    let lambda = MicroMeasure::from_atoms(d, raw.lambda.into_iter().map(|a| (TypeConfig(a.k), a.weight)))?;
    let alpha = MacroMeasure::from_atoms(d, raw.alpha)?;
    let (mu, kappa) = (&model.mu, &model.kernel_rule.limit(&model.kappa));
    let used = measures::add(&lambda.integrated_config(), &alpha.integrated_config());
    let nu: Vec<f64> = mu.iter().zip(&used).map(|(m, u)| (m - u).max(0.0)).collect();
    sink.json(
        "rate",
        &json!({
            "micro": rates::rate_micro(&lambda, mu, kappa),
            "macro": rates::rate_macro(&alpha, mu, kappa),
            "meso": rates::rate_meso(&nu, mu, kappa),
            "total": rates::rate_total(&lambda, &alpha, mu, kappa, TotalOptions { reducible: raw.reducible }),
            "contracted_micro": rates::contracted_micro(&lambda, mu, kappa),
            "contracted_macro": rates::contracted_macro(&alpha, mu, kappa),
        }),
    )
}

pub fn minimize(model: &Model, kmax: u32, tol: f64, sink: &Sink) -> Result<()> {
    let (mu, kappa) = (&model.mu, &model.kernel_rule.limit(&model.kappa));
    let m = rates::minimize_rate(mu, kappa, kmax)?;
    let c_check = solvers::solve_characteristic(kappa, mu, tol);
    let lc = &m.lambda;
    sink.json(
        "minimize",
        &json!({
            "regime": m.regime,
            "sigma": solvers::sigma(kappa, mu),
            "c_star": m.c_star,
            "characteristic_residual": c_check.residual,
            "alpha": m.alpha.atoms(),
            "classes": m.classes,
            "value": m.rate_corrected(mu, kappa),
            "value_truncated": m.rate_truncated(mu, kappa),
            "kmax": kmax,
            "lambda_atoms": lc.lambda.len(),
            "lambda_mass": lc.mass_series(),
            "lambda_mass_theory": lc.analytic_mass(kappa),
            "config_tail": lc.config_tail,
            "slow_tail": lc.slow_tail(),
        }),
    )?;
    let rows: Vec<Vec<String>> = lc.lambda.iter().map(|(k, w)| vec![k.to_string(), num(w)]).collect();
    sink.csv("minimize_lambda", &["k".into(), "weight".into()], &rows)
}

pub fn borel(model: &Model, root: usize, kmax: u32, mc: Option<(usize, u64)>, cap: u64, sink: &Sink) -> Result<()> {
    let kappa = model.kernel_rule.limit(&model.kappa);
    let params = BorelParams::new(kappa.clone(), model.mu.clone())?;
    let mut rows = Vec::new();
    let mut cumulative = 0.0;
    for k in configs_up_to(model.dim(), kmax) {
        if k.get(root) == 0 {
            continue;
        }
        let p = branching::borel_pmf(&params, root, &k)?;
        cumulative += p;
        rows.push(vec![k.to_string(), num(p), num(cumulative)]);
    }
    let series = branching::extinction_series(&params, root, kmax)?;
    let rho = solvers::solve_survival(&kappa, &model.mu, solvers::DEFAULT_TOL).solution[root];
    let mut summary = json!({
        "root": root,
        "kmax": kmax,
        "extinction_partial": series.partial,
        "extinction_tail_bound": series.tail_bound,
        "extinction_theory": 1.0 - rho,
    });
    if let Some((samples, seed)) = mc {
        let s = branching::sample_progeny_batch(&params, root, samples, seed, cap, Execution::default())?;
        summary["sampling"] = json!({
            "samples": samples,
            "seed": seed,
            "cap": cap,
            "explosion_frequency": s.explosion_frequency(),
            "survival_theory": rho,
            "total_variation": s.total_variation(&params, kmax)?,
        });
    }
    sink.json("borel", &summary)?;
    sink.csv("borel_pmf", &["k".into(), "pmf".into(), "cumulative".into()], &rows)
}

pub fn flory(model: &Model, t_max: f64, steps: usize, kmax: u32, sink: &Sink) -> Result<()> {
    if !(t_max > 0.0) || steps == 0 {
        bail!("--t-max and --steps must be positive");
    }
    let (mu, kappa) = (&model.mu, &model.kappa);
    let times: Vec<f64> = (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect();
    let gel = flory::gel_mass_curve(mu, kappa, &times)?;
    let configs = configs_up_to(model.dim(), kmax);
    let residuals = exec::map_range(Execution::default(), times.len(), |i| {
        if times[i] == 0.0 {
            return Ok(0.0);
        }
        configs
            .iter()
            .map(|k| flory::flory_residual(mu, kappa, times[i], k))
            .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)))
    })
    .into_iter()
    .collect::<irgraph::Result<Vec<f64>>>()?;
    let mut header = vec!["t".to_string()];
    header.extend(labelled(model, "gel_"));
    header.extend(["micro_mass".into(), "max_residual".into()]);
    let rows: Vec<Vec<String>> = gel
        .iter()
        .zip(&residuals)
        .map(|(p, r)| {
            let mut row = vec![num(p.t)];
            row.extend(p.gel.iter().map(|&g| num(g)));
            row.push(num(p.micro.iter().sum()));
            row.push(num(*r));
            row
        })
        .collect();
    sink.json(
        "flory",
        &json!({ "gelation_time": flory::gelation_time(mu, kappa), "t_max": t_max, "steps": steps, "kmax": kmax }),
    )?;
    sink.csv("flory", &header, &rows)
}

pub enum VerifySuite {
    GiantLln,
    MicroLln,
    ConnectivityRate,
    MacroConnection,
}

pub struct VerifyOptions {
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub samples: Option<usize>,
    pub kmax: Option<u32>,
    pub n_grid: Vec<usize>,
    pub y: Vec<f64>,
}

pub fn verify(model: &Model, suite: VerifySuite, o: VerifyOptions, seed: u64, sink: &Sink) -> Result<bool> {
    let (mu, kappa) = (&model.mu, &model.kernel_rule.limit(&model.kappa));
    let exec_mode = Execution::default();
    let grid = |default: &[usize]| if o.n_grid.is_empty() { default.to_vec() } else { o.n_grid.clone() };
    let report = match suite {
        VerifySuite::GiantLln => {
            verify::verify_giant_lln(mu, kappa, o.n.unwrap_or(100_000), o.replicas.unwrap_or(20), seed, exec_mode)?
        }
        VerifySuite::MicroLln => verify::verify_micro_lln(
            mu,
            kappa,
            o.n.unwrap_or(100_000),
            o.replicas.unwrap_or(20),
            seed,
            o.kmax.unwrap_or(10),
            exec_mode,
        )?,
        VerifySuite::ConnectivityRate => verify::verify_connectivity_rate(
            mu,
            kappa,
            &grid(&[100, 150, 200, 250]),
            o.samples.unwrap_or(200_000),
            seed,
            exec_mode,
        )?,
        VerifySuite::MacroConnection => {
            if o.y.len() != model.dim() {
                bail!("--y needs {} comma-separated entries", model.dim());
            }
            verify::verify_macro_connection(
                &o.y,
                kappa,
                &grid(&[100, 200, 300, 400]),
                o.samples.unwrap_or(200_000),
                seed,
                exec_mode,
            )?
        }
    };
    for c in &report.checks {
        eprintln!(
            "{} {}: empirical {} theoretical {} tolerance {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.empirical,
            c.theoretical,
            c.tolerance
        );
    }
    sink.json(&format!("verify_{}", report.experiment), &report)?;
    Ok(report.pass)
}
