//! Finite-type measures, kernels, type configurations and the model file.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative mass per type. Plays the role of μ, c, ν, y, θ, b and ρ.
pub type Measure = Vec<f64>;

/// `x log(x / y)` with `0 log 0 = 0` and `+inf` when `x > 0 = y`.
///
/// All entropy-like sums in the crate go through this helper so that the
/// boundary conventions are applied in exactly one place.
pub fn xlog_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x.ln() - y.ln())
    }
}

/// `log x` with `log 0 = -inf`.
pub fn ln0(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

pub fn total(nu: &[f64]) -> f64 {
    nu.iter().sum()
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Measure {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Measure {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn support(nu: &[f64]) -> Vec<usize> {
    (0..nu.len()).filter(|&s| nu[s] > 0.0).collect()
}

/// H(ν | ν̃) = |ν̃| − |ν| + Σ ν log(ν/ν̃) for possibly non-normalised measures.
pub fn relative_entropy(nu: &[f64], nu_ref: &[f64]) -> f64 {
    let mut h = total(nu_ref) - total(nu);
    for (&a, &b) in nu.iter().zip(nu_ref) {
        h += xlog_ratio(a, b);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSpace {
    labels: Vec<String>,
}

impl TypeSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidModel("type space must not be empty".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidModel(format!("duplicate type label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels `t0, t1, ...`.
    pub fn anonymous(n: usize) -> Self {
        Self {
            labels: (0..n).map(|i| format!("t{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Symmetric nonnegative matrix over types.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    n: usize,
    entries: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidModel("kernel must not be empty".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "kernel row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (s, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "kernel entry [{r}][{s}] = {v} is not a finite nonnegative number"
                    )));
                }
            }
            entries.extend_from_slice(row);
        }
        for r in 0..n {
            for s in 0..r {
                let (a, b) = (entries[r * n + s], entries[s * n + r]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidModel(format!(
                        "kernel is not symmetric: [{r}][{s}] = {a} but [{s}][{r}] = {b}"
                    )));
                }
                let m = 0.5 * (a + b);
                entries[r * n + s] = m;
                entries[s * n + r] = m;
            }
        }
        Ok(Self { n, entries })
    }

    pub fn scalar(a: f64) -> Self {
        assert!(a >= 0.0 && a.is_finite(), "kernel entries must be finite and nonnegative");
        Self {
            n: 1,
            entries: vec![a],
        }
    }

    /// Builds a kernel from `f(r, s)` evaluated on the lower triangle.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for r in 0..n {
            for s in 0..=r {
                let v = f(r, s);
                assert!(v >= 0.0 && v.is_finite(), "kernel entries must be finite and nonnegative");
                entries[r * n + s] = v;
                entries[s * n + r] = v;
            }
        }
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.entries[r * self.n + s]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    /// Largest entry, the sup norm of κ as a function on pairs.
    pub fn max_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn restrict(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    /// (κν)_r = Σ_s κ(r,s) ν_s. Panics on a dimension mismatch; see
    /// [`kappa_apply`] for the checked form.
    pub fn apply(&self, nu: &[f64]) -> Measure {
        assert_eq!(nu.len(), self.n, "measure and kernel dimensions differ");
        self.entries
            .chunks(self.n)
            .map(|row| inner(row, nu))
            .collect()
    }

    /// ⟨a, κ b⟩.
    pub fn form(&self, a: &[f64], b: &[f64]) -> f64 {
        inner(a, &self.apply(b))
    }
}

pub fn kappa_apply(kappa: &Kernel, nu: &[f64]) -> Result<Measure> {
    if nu.len() != kappa.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa.dim(),
            got: nu.len(),
        });
    }
    Ok(kappa.apply(nu))
}

/// Integer type composition of a cluster.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeConfig(pub Vec<u32>);

impl TypeConfig {
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn unit(n: usize, r: usize) -> Self {
        let mut v = vec![0; n];
        v[r] = 1;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    #[inline]
    pub fn get(&self, r: usize) -> u32 {
        self.0[r]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&s| self.0[s] > 0).collect()
    }

    pub fn as_f64(&self) -> Measure {
        self.0.iter().map(|&c| c as f64).collect()
    }

    /// Entrywise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Vertex types listed in block order, `k_0` zeros then `k_1` ones, ...
    pub fn vertex_types(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for (s, &c) in self.0.iter().enumerate() {
            out.extend(std::iter::repeat_n(s, c as usize));
        }
        out
    }

    /// All configurations `m` with `0 <= m <= self`, in lexicographic order.
    pub fn sub_configs(&self) -> Vec<TypeConfig> {
        let mut out = vec![TypeConfig::zero(self.dim())];
        for (s, &c) in self.0.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * (c as usize + 1));
            for m in &out {
                for v in 0..=c {
                    let mut m2 = m.clone();
                    m2.0[s] = v;
                    next.push(m2);
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for TypeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// All nonzero configurations on `n` types with `|k| <= kmax`, ordered by
/// size and then lexicographically.
pub fn configs_up_to(n: usize, kmax: u32) -> Vec<TypeConfig> {
    let mut out = Vec::new();
    for size in 1..=kmax {
        configs_of_size(n, size, &mut out);
    }
    out
}

/// Appends all configurations on `n` types with `|k| = size`.
pub fn configs_of_size(n: usize, size: u32, out: &mut Vec<TypeConfig>) {
    fn rec(n: usize, pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<TypeConfig>) {
        if pos == n - 1 {
            cur[pos] = left;
            out.push(TypeConfig(cur.clone()));
            return;
        }
        for v in (0..=left).rev() {
            cur[pos] = v;
            rec(n, pos + 1, left - v, cur, out);
        }
    }
    let mut cur = vec![0; n];
    rec(n, 0, size, &mut cur, out);
}

/// Finitely supported measure on configurations (λ). The zero
/// configuration never carries weight.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MicroMeasure {
    dim: usize,
    atoms: BTreeMap<TypeConfig, f64>,
}

impl MicroMeasure {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            atoms: BTreeMap::new(),
        }
    }

    pub fn from_atoms(dim: usize, atoms: impl IntoIterator<Item = (TypeConfig, f64)>) -> Result<Self> {
        let mut m = Self::new(dim);
        for (k, w) in atoms {
            m.add_atom(k, w)?;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `w` to the weight of `k`. Zero weights are dropped.
    pub fn add_atom(&mut self, k: TypeConfig, w: f64) -> Result<()> {
        if k.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: k.dim(),
            });
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Precondition(format!("weight {w} at {k} is not finite and nonnegative")));
        }
        if k.is_zero() {
            if w == 0.0 {
                return Ok(());
            }
            return Err(Error::Precondition("the zero configuration cannot carry weight".into()));
        }
        if w > 0.0 {
            *self.atoms.entry(k).or_insert(0.0) += w;
        }
        Ok(())
    }

    pub fn get(&self, k: &TypeConfig) -> f64 {
        self.atoms.get(k).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TypeConfig, f64)> {
        self.atoms.iter().map(|(k, &w)| (k, w))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// |λ| = Σ_k λ_k.
    pub fn mass(&self) -> f64 {
        self.atoms.values().sum()
    }

    /// c(λ)_r = Σ_k λ_k k_r.
    pub fn integrated_config(&self) -> Measure {
        let mut c = vec![0.0; self.dim];
        for (k, &w) in &self.atoms {
            for (cr, &kr) in c.iter_mut().zip(&k.0) {
                *cr += w * kr as f64;
            }
        }
        c
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        let mut m = self.clone();
        for (k, w) in other.iter() {
            m.add_atom(k.clone(), w)?;
        }
        Ok(m)
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        let mut tv = 0.0;
        for (k, w) in self.iter() {
            tv += (w - other.get(k)).abs();
        }
        for (k, w) in other.iter() {
            if !self.atoms.contains_key(k) {
                tv += w;
            }
        }
        0.5 * tv
    }
}

/// Finite list of nonzero sub-probability vectors (α = Σ_n δ_{y_n}).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MacroMeasure {
    dim: usize,
    atoms: Vec<Measure>,
}

impl MacroMeasure {
    pub fn new(dim: usize) -> Self {
        Self { dim, atoms: Vec::new() }
    }

    pub fn from_atoms(dim: usize, atoms: impl IntoIterator<Item = Measure>) -> Result<Self> {
        let mut m = Self::new(dim);
        for y in atoms {
            m.push(y)?;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, y: Measure) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        if y.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Precondition("macro atom entries must be finite and nonnegative".into()));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::Precondition("macro atoms must be nonzero".into()));
        }
        self.atoms.push(y);
        Ok(())
    }

    pub fn atoms(&self) -> &[Measure] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// c(α)_r = Σ_n y_n(r).
    pub fn integrated_config(&self) -> Measure {
        let mut c = vec![0.0; self.dim];
        for y in &self.atoms {
            for (cr, v) in c.iter_mut().zip(y) {
                *cr += v;
            }
        }
        c
    }
}

/// Maximal subsets of supp(μ) connected through strictly positive kernel
/// entries. Each class is sorted, and classes are ordered by their smallest
/// member.
pub fn irreducible_classes(kappa: &Kernel, mu: &[f64]) -> Vec<Vec<usize>> {
    let n = kappa.dim();
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for start in 0..n {
        if seen[start] || mu[start] <= 0.0 {
            continue;
        }
        seen[start] = true;
        let mut class = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(r) = queue.pop_front() {
            for s in 0..n {
                if !seen[s] && mu[s] > 0.0 && kappa.get(r, s) > 0.0 {
                    seen[s] = true;
                    class.push(s);
                    queue.push_back(s);
                }
            }
        }
        class.sort_unstable();
        classes.push(class);
    }
    classes
}

/// True iff every atom of α is supported inside a single class.
pub fn connectable(alpha: &MacroMeasure, classes: &[Vec<usize>]) -> bool {
    alpha.atoms().iter().all(|y| {
        let supp = support(y);
        classes.iter().any(|c| supp.iter().all(|s| c.contains(s)))
    })
}

/// How the finite-N kernel κ_N is derived from κ.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum KernelRule {
    /// κ_N = κ.
    #[default]
    Constant,
    /// κ_N = N (1 − e^{−tκ/N}), the random-graph embedding of the
    /// coagulation process at time t.
    Coagulation { t: f64 },
}

impl KernelRule {
    /// The limit of κ_N as N → ∞, which the asymptotic theory uses.
    pub fn limit(&self, kappa: &Kernel) -> Kernel {
        match *self {
            KernelRule::Constant => kappa.clone(),
            KernelRule::Coagulation { t } => kappa.scaled(t),
        }
    }

    pub fn kernel_at(&self, kappa: &Kernel, n: usize) -> Kernel {
        match *self {
            KernelRule::Constant => kappa.clone(),
            KernelRule::Coagulation { t } => {
                let nf = n as f64;
                kappa.map(|v| -nf * (-t * v / nf).exp_m1())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default)]
    schema: Option<u32>,
    types: Vec<String>,
    mu: Vec<f64>,
    kappa: Vec<Vec<f64>>,
    #[serde(default)]
    kappa_n: Option<KernelRule>,
}

/// A validated model: type labels, type distribution μ and kernel κ.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub types: TypeSpace,
    pub mu: Measure,
    pub kappa: Kernel,
    pub kernel_rule: KernelRule,
}

/// Nonzero μ entries below this are rejected as ambiguous.
pub const MU_FLOOR: f64 = 1e-15;

impl Model {
    pub fn new(types: TypeSpace, mu: Measure, kappa: Kernel) -> Result<Self> {
        if mu.len() != types.len() {
            return Err(Error::InvalidModel(format!(
                "mu has {} entries for {} types",
                mu.len(),
                types.len()
            )));
        }
        if kappa.dim() != types.len() {
            return Err(Error::InvalidModel(format!(
                "kappa is {0}x{0} for {1} types",
                kappa.dim(),
                types.len()
            )));
        }
        for (r, &m) in mu.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidModel(format!("mu[{r}] = {m} is negative or not finite")));
            }
            if m > 0.0 && m < MU_FLOOR {
                return Err(Error::InvalidModel(format!(
                    "mu[{r}] = {m:e} is below {MU_FLOOR:e}; use an exact 0 for absent types"
                )));
            }
        }
        let s = total(&mu);
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("mu sums to {s}, expected 1 within 1e-12")));
        }
        Ok(Self {
            types,
            mu,
            kappa,
            kernel_rule: KernelRule::Constant,
        })
    }

    /// Single-type model with μ = 1 and κ = a.
    pub fn single_type(a: f64) -> Self {
        Self::new(TypeSpace::anonymous(1), vec![1.0], Kernel::scalar(a)).expect("valid model")
    }

    pub fn dim(&self) -> usize {
        self.types.len()
    }

    /// Parses and validates a JSON model. Semantic errors point at the line
    /// of the offending key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(text)?;
        if let Some(v) = raw.schema {
            if v != 1 {
                return Err(locate(text, "schema", format!("unsupported schema version {v}")));
            }
        }
        let types = TypeSpace::new(raw.types).map_err(|e| relocate(text, "types", e))?;
        let kappa = Kernel::new(raw.kappa).map_err(|e| relocate(text, "kappa", e))?;
        let mut model = Model::new(types, raw.mu, kappa).map_err(|e| {
            let key = if e.to_string().contains("kappa") { "kappa" } else { "mu" };
            relocate(text, key, e)
        })?;
        if let Some(rule) = raw.kappa_n {
            if let KernelRule::Coagulation { t } = rule {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(locate(text, "kappa_n", format!("coagulation time {t} must be finite and >= 0")));
                }
            }
            model.kernel_rule = rule;
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Integer type counts for N vertices, rounding N μ by largest remainder.
    pub fn type_counts(&self, n: usize) -> TypeConfig {
        type_counts(&self.mu, n)
    }
}

/// Largest-remainder rounding of N μ to integers summing to N.
pub fn type_counts(mu: &[f64], n: usize) -> TypeConfig {
    let raw: Vec<f64> = mu.iter().map(|m| m * n as f64).collect();
    let mut counts: Vec<u32> = raw.iter().map(|x| x.floor() as u32).collect();
    let mut left = n as i64 - counts.iter().map(|&c| c as i64).sum::<i64>();
    let mut order: Vec<usize> = (0..mu.len()).filter(|&r| mu[r] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut i = 0;
    while left > 0 && !order.is_empty() {
        counts[order[i % order.len()]] += 1;
        left -= 1;
        i += 1;
    }
    TypeConfig(counts)
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn locate(text: &str, key: &str, msg: String) -> Error {
    match line_of(text, key) {
        Some(line) => Error::InvalidModel(format!("line {line}: {msg}")),
        None => Error::InvalidModel(msg),
    }
}

fn relocate(text: &str, key: &str, e: Error) -> Error {
    match e {
        Error::InvalidModel(msg) => locate(text, key, msg),
        other => other,
    }
}
