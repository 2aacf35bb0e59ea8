//! Sampling G(N, x, κ_N/N), cluster statistics, and exact small-N
//! connection probabilities and cluster-profile distributions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{Kernel, MacroMeasure, Measure, MicroMeasure, TypeConfig};
use crate::trees;

/// Largest vertex count for [`connection_probability_exact`].
pub const EXACT_CONNECTION_LIMIT: u32 = 10;
/// Largest vertex count for [`connection_probability_brute`].
pub const BRUTE_CONNECTION_LIMIT: u32 = 7;
/// Default macroscopic threshold ε.
pub const DEFAULT_EPSILON: f64 = 0.05;

pub const MC_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sampler {
    /// Bernoulli trial for every pair, O(N²).
    AllPairs,
    /// Geometric jumps inside each block of same-type-pair vertex pairs, O(N + E).
    #[default]
    GeometricSkip,
}

/// Disjoint-set forest with union by size and path compression.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.parent.clear();
        self.parent.extend(0..n as u32);
        self.size.clear();
        self.size.resize(n, 1);
        self.sets = n;
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns true if they were distinct.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

/// An undirected simple graph on typed vertices. Vertices are laid out in
/// type blocks: the first `type_counts[0]` have type 0, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub n: usize,
    pub types: Vec<u16>,
    pub edges: Vec<(u32, u32)>,
}

fn block_offsets(type_counts: &TypeConfig) -> Vec<u32> {
    let mut off = Vec::with_capacity(type_counts.dim() + 1);
    let mut acc = 0;
    off.push(0);
    for &c in &type_counts.0 {
        acc += c;
        off.push(acc);
    }
    off
}

/// Streams the edges of one draw of the graph on `type_counts` vertices with
/// pair probabilities min(1, κ_N(r,s)/scale).
pub fn for_each_edge<R: Rng + ?Sized>(
    type_counts: &TypeConfig,
    kappa_n: &Kernel,
    scale: f64,
    sampler: Sampler,
    rng: &mut R,
    mut emit: impl FnMut(u32, u32),
) {
    let off = block_offsets(type_counts);
    let d = type_counts.dim();
    let prob = |r: usize, s: usize| (kappa_n.get(r, s) / scale).min(1.0);
    match sampler {
        Sampler::AllPairs => {
            let n = off[d];
            let mut ty = Vec::with_capacity(n as usize);
            for r in 0..d {
                ty.extend(std::iter::repeat_n(r, type_counts.get(r) as usize));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let p = prob(ty[i as usize], ty[j as usize]);
                    if rng.random::<f64>() < p {
                        emit(i, j);
                    }
                }
            }
        }
        Sampler::GeometricSkip => {
            for r in 0..d {
                for s in r..d {
                    let p = prob(r, s);
                    let (nr, ns) = (type_counts.get(r) as u64, type_counts.get(s) as u64);
                    if p <= 0.0 || nr == 0 || ns == 0 {
                        continue;
                    }
                    let geo = (p < 1.0).then(|| Geometric::new(p).expect("0 < p < 1"));
                    let skip = |rng: &mut R| geo.as_ref().map_or(0, |g| g.sample(rng));
                    if r == s {
                        if nr < 2 {
                            continue;
                        }
                        // lower triangle (v, w) with w < v, row-major
                        let (mut v, mut w) = (1u64, 0u64);
                        loop {
                            w = w.saturating_add(skip(rng));
                            while v < nr && w >= v {
                                w -= v;
                                v += 1;
                            }
                            if v >= nr {
                                break;
                            }
                            emit(off[r] + v as u32, off[r] + w as u32);
                            w += 1;
                        }
                    } else {
                        let total = nr * ns;
                        let mut idx = 0u64;
                        loop {
                            idx = idx.saturating_add(skip(rng));
                            if idx >= total {
                                break;
                            }
                            emit(off[r] + (idx / ns) as u32, off[s] + (idx % ns) as u32);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

/// One draw of G(N, x, κ_N/N) with N = |type_counts|.
pub fn sample_graph_with<R: Rng + ?Sized>(
    type_counts: &TypeConfig,
    kappa_n: &Kernel,
    sampler: Sampler,
    rng: &mut R,
) -> Result<GraphSample> {
    if type_counts.dim() != kappa_n.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa_n.dim(),
            got: type_counts.dim(),
        });
    }
    let n = type_counts.size() as usize;
    if n == 0 {
        return Err(Error::Precondition("graph must have at least one vertex".into()));
    }
    let mut edges = Vec::new();
    for_each_edge(type_counts, kappa_n, n as f64, sampler, rng, |a, b| edges.push((a, b)));
    let types = type_counts
        .vertex_types()
        .into_iter()
        .map(|t| t as u16)
        .collect();
    Ok(GraphSample { n, types, edges })
}

/// Seeded draw using the default sampler.
pub fn sample_graph(type_counts: &TypeConfig, kappa_n: &Kernel, seed: u64) -> Result<GraphSample> {
    sample_graph_with(type_counts, kappa_n, Sampler::default(), &mut exec::stream_rng(seed, 0))
}

/// Empirical cluster measures of one graph.
#[derive(Clone, Debug)]
pub struct ComponentStats {
    pub n: usize,
    /// Vertex sets of the connected components, each sorted, ordered by
    /// smallest vertex.
    pub components: Vec<Vec<u32>>,
    /// Type configuration of each component, aligned with `components`.
    pub configs: Vec<TypeConfig>,
    /// Mi_N: (#components with configuration k) / N, over all components.
    pub micro: MicroMeasure,
    /// Ma_N: y = k/N for components with |k| > εN.
    pub macro_: MacroMeasure,
    pub epsilon: f64,
}

impl ComponentStats {
    /// μ_N, the empirical type distribution.
    pub fn mu_n(&self) -> Measure {
        self.micro.integrated_config()
    }

    /// μ_N − c(Mi_N restricted to |k| ≤ R) − c(Ma_N): the mass in
    /// components that are neither small nor macroscopic.
    pub fn residual_mass(&self, r_max: u32) -> Measure {
        let mut out = self.mu_n();
        for (k, w) in self.micro.iter() {
            if k.size() <= r_max {
                for (o, &kr) in out.iter_mut().zip(&k.0) {
                    *o -= w * kr as f64;
                }
            }
        }
        for y in self.macro_.atoms() {
            for (o, v) in out.iter_mut().zip(y) {
                *o -= v;
            }
        }
        out
    }

    /// Configuration of the largest component (ties broken by vertex order).
    pub fn largest(&self) -> &TypeConfig {
        let mut best = 0;
        for (i, k) in self.configs.iter().enumerate() {
            if k.size() > self.configs[best].size() {
                best = i;
            }
        }
        &self.configs[best]
    }
}

/// Per-component type configurations, indexed by component in order of
/// the smallest member vertex.
fn label_components(n: usize, dim: usize, types: &[u16], uf: &mut UnionFind) -> (Vec<u32>, Vec<TypeConfig>) {
    let mut index = vec![u32::MAX; n];
    let mut label = vec![0u32; n];
    let mut configs: Vec<TypeConfig> = Vec::new();
    for v in 0..n as u32 {
        let root = uf.find(v) as usize;
        if index[root] == u32::MAX {
            index[root] = configs.len() as u32;
            configs.push(TypeConfig::zero(dim));
        }
        let c = index[root];
        label[v as usize] = c;
        configs[c as usize].0[types[v as usize] as usize] += 1;
    }
    (label, configs)
}

pub fn component_stats(g: &GraphSample, epsilon: f64) -> Result<ComponentStats> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Precondition(format!("epsilon = {epsilon} must lie in (0, 1]")));
    }
    let dim = g.types.iter().map(|&t| t as usize + 1).max().unwrap_or(1);
    component_stats_dim(g, dim, epsilon)
}

/// As [`component_stats`] with an explicit number of types, so that absent
/// trailing types keep their coordinate.
pub fn component_stats_dim(g: &GraphSample, dim: usize, epsilon: f64) -> Result<ComponentStats> {
    let mut uf = UnionFind::new(g.n);
    for &(a, b) in &g.edges {
        uf.union(a, b);
    }
    let (label, configs) = label_components(g.n, dim, &g.types, &mut uf);
    let mut components = vec![Vec::new(); configs.len()];
    for v in 0..g.n {
        components[label[v] as usize].push(v as u32);
    }
    let nf = g.n as f64;
    let mut micro = MicroMeasure::new(dim);
    let mut macro_ = MacroMeasure::new(dim);
    for k in &configs {
        micro.add_atom(k.clone(), 1.0 / nf)?;
        if k.size() as f64 > epsilon * nf {
            macro_.push(k.as_f64().iter().map(|v| v / nf).collect())?;
        }
    }
    Ok(ComponentStats {
        n: g.n,
        components,
        configs,
        micro,
        macro_,
        epsilon,
    })
}

/// Reusable buffers for repeated connectivity trials.
struct Trial {
    uf: UnionFind,
}

impl Trial {
    fn connected<R: Rng + ?Sized>(&mut self, k: &TypeConfig, kappa_n: &Kernel, scale: f64, rng: &mut R) -> bool {
        let n = k.size() as usize;
        self.uf.reset(n);
        let uf = &mut self.uf;
        for_each_edge(k, kappa_n, scale, Sampler::GeometricSkip, rng, |a, b| {
            uf.union(a, b);
        });
        self.uf.set_count() == 1
    }
}

/// Number of connected draws among `samples` graphs on |k| vertices with
/// pair probabilities min(1, κ_N/N). Work is split into fixed chunks with
/// their own streams, so the count is independent of the thread count.
pub fn connection_successes_mc(
    k: &TypeConfig,
    kappa_n: &Kernel,
    n_scale: usize,
    samples: usize,
    seed: u64,
    exec_mode: Execution,
) -> u64 {
    if k.is_zero() {
        return 0;
    }
    let chunks = exec::chunk_sizes(samples, MC_CHUNK);
    let counts = exec::map_range(exec_mode, chunks.len(), |c| {
        let mut rng = exec::stream_rng(seed, c as u64);
        let mut trial = Trial {
            uf: UnionFind::new(k.size() as usize),
        };
        (0..chunks[c])
            .filter(|_| trial.connected(k, kappa_n, n_scale as f64, &mut rng))
            .count() as u64
    });
    counts.iter().sum()
}

/// Monte-Carlo estimate of p_N(k) with its binomial standard error.
pub fn connection_probability_mc(
    k: &TypeConfig,
    kappa_n: &Kernel,
    n_scale: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let hits = connection_successes_mc(k, kappa_n, n_scale, samples, seed, Execution::default());
    let p = hits as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

fn pair_probabilities(k: &TypeConfig, kappa_n: &Kernel, n_scale: usize) -> (usize, Vec<f64>) {
    let x = k.vertex_types();
    let n = x.len();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (kappa_n.get(x[i], x[j]) / n_scale as f64).min(1.0);
            }
        }
    }
    (n, p)
}

fn check_exact_input(k: &TypeConfig, kappa_n: &Kernel, limit: u32, what: &'static str) -> Result<()> {
    if k.dim() != kappa_n.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa_n.dim(),
            got: k.dim(),
        });
    }
    if k.size() > limit {
        return Err(Error::BudgetExceeded {
            what,
            size: k.size() as usize,
            limit: limit as usize,
        });
    }
    Ok(())
}

/// Exact p_N(k) by the subset recursion
/// P(V) = 1 − Σ_{v ∈ S ⊊ V} P(S)·P(no S ↔ V∖S edge), in O(3^|k|).
pub fn connection_probability_exact(k: &TypeConfig, kappa_n: &Kernel, n_scale: usize) -> Result<f64> {
    check_exact_input(k, kappa_n, EXACT_CONNECTION_LIMIT, "exact connection probability")?;
    let (n, p) = pair_probabilities(k, kappa_n, n_scale);
    if n == 0 {
        return Ok(0.0);
    }
    let full = (1usize << n) - 1;
    // miss[i][U] = Π_{j∈U} (1 − p_ij)
    let mut miss = vec![1.0; n << n];
    for i in 0..n {
        for u in 1..=full {
            let j = u.trailing_zeros() as usize;
            miss[(i << n) | u] = miss[(i << n) | (u & (u - 1))] * (1.0 - p[i * n + j]);
        }
    }
    let mut conn = vec![0.0; full + 1];
    for s in 1..=full {
        if s.count_ones() == 1 {
            conn[s] = 1.0;
            continue;
        }
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        let mut acc = 0.0;
        // proper subsets t of s containing the lowest vertex
        let mut sub = (rest.wrapping_sub(1)) & rest;
        loop {
            let t = sub | low;
            let u = s ^ t;
            let mut cross = conn[t];
            let mut bits = t;
            while bits != 0 && cross != 0.0 {
                let i = bits.trailing_zeros() as usize;
                cross *= miss[(i << n) | u];
                bits &= bits - 1;
            }
            acc += cross;
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        conn[s] = (1.0 - acc).max(0.0);
    }
    Ok(conn[full])
}

/// Exact p_N(k) by summing the probabilities of all connected edge subsets.
pub fn connection_probability_brute(k: &TypeConfig, kappa_n: &Kernel, n_scale: usize) -> Result<f64> {
    check_exact_input(k, kappa_n, BRUTE_CONNECTION_LIMIT, "brute-force connection probability")?;
    let (n, p) = pair_probabilities(k, kappa_n, n_scale);
    if n == 0 {
        return Ok(0.0);
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut total = 0.0;
    let mut uf = UnionFind::new(n);
    for mask in 0u64..(1u64 << pairs.len()) {
        let mut w = 1.0;
        uf.reset(n);
        for (e, &(i, j)) in pairs.iter().enumerate() {
            if mask >> e & 1 == 1 {
                w *= p[i * n + j];
                uf.union(i as u32, j as u32);
            } else {
                w *= 1.0 - p[i * n + j];
            }
        }
        if uf.set_count() == 1 {
            total += w;
        }
    }
    Ok(total)
}

/// The bracket (1 − ‖κ_N‖/N)^{|k|²/2} N^{1−|k|} τ_N(k) ≤ p_N(k) ≤ N^{1−|k|} τ_N(k).
pub fn sandwich_bounds(k: &TypeConfig, kappa_n: &Kernel, n_scale: usize) -> (f64, f64) {
    let nf = n_scale as f64;
    let size = k.size() as f64;
    let upper = ((1.0 - size) * nf.ln() + trees::ln_tau(k, kappa_n)).exp();
    let base = (1.0 - kappa_n.max_entry() / nf).max(0.0);
    (upper * base.powf(size * size / 2.0), upper)
}

/// Cluster profile ℓ: multiplicity of each component configuration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Profile(pub BTreeMap<TypeConfig, u32>);

impl Profile {
    pub fn from_configs<'a>(configs: impl IntoIterator<Item = &'a TypeConfig>) -> Self {
        let mut m = BTreeMap::new();
        for k in configs {
            *m.entry(k.clone()).or_insert(0) += 1;
        }
        Self(m)
    }
}

impl fmt::Display for Profile {
    /// Canonical form, e.g. `(1,0)x2 (2,1)x1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, c)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{k}x{c}")?;
        }
        Ok(())
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// P(N·Mi_N = ℓ) for every profile ℓ, from the product formula with exact
/// connection probabilities.
pub fn exact_micro_distribution(type_counts: &TypeConfig, kappa_n: &Kernel) -> Result<BTreeMap<Profile, f64>> {
    check_exact_input(type_counts, kappa_n, EXACT_CONNECTION_LIMIT, "exact cluster distribution")?;
    let n = type_counts.size() as usize;
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let d = kappa_n.dim();
    for r in 0..d {
        for s in 0..d {
            if kappa_n.get(r, s) > n as f64 {
                return Err(Error::Precondition(format!(
                    "kappa_N[{r}][{s}] = {} exceeds N = {n}",
                    kappa_n.get(r, s)
                )));
            }
        }
    }
    let nf = n as f64;
    let mut configs: Vec<TypeConfig> = type_counts.sub_configs().into_iter().filter(|k| !k.is_zero()).collect();
    configs.sort_by_key(|k| (k.size(), k.clone()));
    // per-cluster factor p_N(k) / Π k_r! · Π_{r,s} (1 − κ_N/N)^{k_r (n_s − k_s)/2}
    let mut factor = HashMap::new();
    for k in &configs {
        let mut f = connection_probability_exact(k, kappa_n, n)?;
        for r in 0..d {
            f /= factorial(k.get(r));
            for s in 0..d {
                let e = 0.5 * k.get(r) as f64 * (type_counts.get(s) as f64 - k.get(s) as f64);
                f *= (1.0 - kappa_n.get(r, s) / nf).powf(e);
            }
        }
        factor.insert(k.clone(), f);
    }
    let prefactor: f64 = type_counts.0.iter().map(|&c| factorial(c)).product();
    let mut out = BTreeMap::new();
    let mut chosen: Vec<(usize, u32)> = Vec::new();
    enumerate_profiles(&configs, 0, type_counts.clone(), &mut chosen, &mut |chosen| {
        let mut p = prefactor;
        let mut prof = BTreeMap::new();
        for &(i, l) in chosen {
            p *= factor[&configs[i]].powi(l as i32) / factorial(l);
            prof.insert(configs[i].clone(), l);
        }
        out.insert(Profile(prof), p);
    });
    Ok(out)
}

fn enumerate_profiles(
    configs: &[TypeConfig],
    start: usize,
    left: TypeConfig,
    chosen: &mut Vec<(usize, u32)>,
    visit: &mut impl FnMut(&[(usize, u32)]),
) {
    if left.is_zero() {
        visit(chosen);
        return;
    }
    for i in start..configs.len() {
        let k = &configs[i];
        if !k.le(&left) {
            continue;
        }
        let mut rem = left.minus(k);
        let mut l = 1;
        loop {
            chosen.push((i, l));
            enumerate_profiles(configs, i + 1, rem.clone(), chosen, visit);
            chosen.pop();
            if !k.le(&rem) {
                break;
            }
            rem = rem.minus(k);
            l += 1;
        }
    }
}

/// Σ_{e_r ≤ h ≤ m} [Π_s C(m_s − δ_rs, h_s − δ_rs)] p_N(h)
/// Π_{s,s̃} (1 − κ_N(s,s̃)/N)^{h_s (m_s̃ − h_s̃)}, which equals 1.
pub fn gilbert_sum(m: &TypeConfig, r: usize, kappa_n: &Kernel, n_scale: usize) -> Result<f64> {
    if m.get(r) == 0 {
        return Err(Error::Precondition(format!("marked type {r} is absent from {m}")));
    }
    let d = kappa_n.dim();
    let nf = n_scale as f64;
    let mut total = 0.0;
    for h in m.sub_configs() {
        if h.get(r) == 0 {
            continue;
        }
        let mut term = connection_probability_exact(&h, kappa_n, n_scale)?;
        for s in 0..d {
            let dl = u32::from(s == r);
            term *= binomial(m.get(s) - dl, h.get(s) - dl);
            for t in 0..d {
                let q = (1.0 - kappa_n.get(s, t) / nf).max(0.0);
                term *= q.powi((h.get(s) * (m.get(t) - h.get(t))) as i32);
            }
        }
        total += term;
    }
    Ok(total)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Right-hand side of p_N(h') ≤ p_N(h) Π_r (1 − e^{−(κ_N h')_r/N})^{−(h_r − h'_r)};
/// +∞ when a factor is infinite.
pub fn monotone_comparison_bound(h_small: &TypeConfig, h: &TypeConfig, kappa_n: &Kernel, n_scale: usize) -> Result<f64> {
    if !h_small.le(h) {
        return Err(Error::Precondition(format!("{h_small} is not below {h}")));
    }
    let mut bound = connection_probability_exact(h, kappa_n, n_scale)?;
    let kh = kappa_n.apply(&h_small.as_f64());
    for (r, &khr) in kh.iter().enumerate() {
        let gap = (h.get(r) - h_small.get(r)) as i32;
        if gap > 0 {
            if khr == 0.0 {
                return Ok(f64::INFINITY);
            }
            bound *= (-(-khr / n_scale as f64).exp_m1()).powi(-gap);
        }
    }
    Ok(bound)
}
