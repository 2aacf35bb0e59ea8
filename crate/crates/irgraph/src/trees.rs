//! The spanning-tree weight τ(k) = Σ_T Π_{ij∈T} κ(x_i, x_j) over labeled
//! trees on a vertex set with type configuration k, computed three ways.

use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::measures::{irreducible_classes, Kernel, TypeConfig};

/// Largest |k| accepted by [`tau_enumerate`].
pub const ENUMERATION_LIMIT: u32 = 9;
/// Largest |k| accepted by [`tau_matrix_tree`].
pub const MATRIX_TREE_LIMIT: u32 = 400;
/// Largest |k| accepted by the brute-force directed identity check.
pub const DIRECTED_LIMIT: u32 = 7;
/// Above this size determinants are accumulated in log form.
const LOG_DET_THRESHOLD: usize = 30;
/// Support sizes up to this use explicit parent-map enumeration for Δ_r.
const DELTA_ENUM_LIMIT: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauMethod {
    Enumeration,
    MatrixTree,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeWeight {
    pub value: f64,
    pub method: TauMethod,
}

/// Two sides of an identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Residual divided by `max(1, |rhs|)`.
    pub fn scaled(&self) -> f64 {
        self.residual() / self.rhs.abs().max(1.0)
    }

    /// Residual divided by the larger side; zero when both sides vanish.
    pub fn relative(&self) -> f64 {
        let m = self.lhs.abs().max(self.rhs.abs());
        if m == 0.0 {
            0.0
        } else {
            self.residual() / m
        }
    }
}

fn check_dim(k: &TypeConfig, kappa: &Kernel) -> Result<()> {
    if k.dim() != kappa.dim() {
        return Err(Error::DimensionMismatch {
            expected: kappa.dim(),
            got: k.dim(),
        });
    }
    Ok(())
}

/// True when supp(k) lies in one irreducible class of κ.
pub fn support_connected(k: &TypeConfig, kappa: &Kernel) -> bool {
    !k.is_zero() && irreducible_classes(kappa, &k.as_f64()).len() == 1
}

/// Decodes a Prüfer sequence into the edge list of a labeled tree.
fn prufer_edges(seq: &[usize], n: usize, degree: &mut [usize], edges: &mut Vec<(usize, usize)>) {
    edges.clear();
    degree.iter_mut().for_each(|d| *d = 1);
    for &a in seq {
        degree[a] += 1;
    }
    for &a in seq {
        let leaf = (0..n).find(|&j| degree[j] == 1).expect("a leaf exists");
        edges.push((leaf, a));
        degree[leaf] -= 1;
        degree[a] -= 1;
    }
    let mut rest = (0..n).filter(|&j| degree[j] == 1);
    let u = rest.next().expect("two vertices remain");
    let v = rest.next().expect("two vertices remain");
    edges.push((u, v));
}

/// τ(k) by summing over all |k|^(|k|−2) labeled trees.
pub fn tau_enumerate(k: &TypeConfig, kappa: &Kernel) -> Result<TreeWeight> {
    check_dim(k, kappa)?;
    let n = k.size();
    if n > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "tree enumeration",
            size: n as usize,
            limit: ENUMERATION_LIMIT as usize,
        });
    }
    let x = k.vertex_types();
    let n = n as usize;
    let value = match n {
        0 => 0.0,
        1 => 1.0,
        2 => kappa.get(x[0], x[1]),
        _ => {
            let mut seq = vec![0usize; n - 2];
            let mut degree = vec![0usize; n];
            let mut edges = Vec::with_capacity(n - 1);
            let mut sum = 0.0;
            loop {
                prufer_edges(&seq, n, &mut degree, &mut edges);
                sum += edges.iter().map(|&(a, b)| kappa.get(x[a], x[b])).product::<f64>();
                // odometer increment
                let mut i = 0;
                while i < seq.len() {
                    seq[i] += 1;
                    if seq[i] < n {
                        break;
                    }
                    seq[i] = 0;
                    i += 1;
                }
                if i == seq.len() {
                    break;
                }
            }
            sum
        }
    };
    Ok(TreeWeight {
        value,
        method: TauMethod::Enumeration,
    })
}

/// (sign, log|det|) of a square matrix via partial-pivot LU.
fn ln_det(m: DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (1.0, 0.0);
    }
    let lu = m.lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if d < 0.0 {
            sign = -sign;
        }
        acc += d.abs().ln();
    }
    (sign, acc)
}

/// Laplacian of the complete graph on `x.len()` vertices with edge weights
/// `w(i, j)`, with the first row and column removed.
fn reduced_laplacian(n: usize, w: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n - 1, n - 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w(i, j);
            if i > 0 {
                m[(i - 1, i - 1)] += v;
            }
            if j > 0 {
                m[(j - 1, j - 1)] += v;
            }
            if i > 0 && j > 0 {
                m[(i - 1, j - 1)] -= v;
                m[(j - 1, i - 1)] -= v;
            }
        }
    }
    m
}

/// log τ(k) by the weighted matrix-tree theorem.
pub fn ln_tau_matrix_tree(k: &TypeConfig, kappa: &Kernel) -> Result<f64> {
    check_dim(k, kappa)?;
    let n = k.size();
    if n > MATRIX_TREE_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "matrix-tree determinant",
            size: n as usize,
            limit: MATRIX_TREE_LIMIT as usize,
        });
    }
    if n == 0 || !support_connected(k, kappa) {
        return Ok(f64::NEG_INFINITY);
    }
    let x = k.vertex_types();
    let m = reduced_laplacian(n as usize, |i, j| kappa.get(x[i], x[j]));
    let (sign, ld) = ln_det(m);
    if sign <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ld)
}

/// τ(k) by the weighted matrix-tree theorem. Small instances use a plain
/// floating determinant; larger ones go through the log-scaled form.
pub fn tau_matrix_tree(k: &TypeConfig, kappa: &Kernel) -> Result<TreeWeight> {
    check_dim(k, kappa)?;
    let n = k.size() as usize;
    let value = if n <= LOG_DET_THRESHOLD {
        if n == 0 || !support_connected(k, kappa) {
            0.0
        } else {
            let x = k.vertex_types();
            reduced_laplacian(n, |i, j| kappa.get(x[i], x[j])).determinant().max(0.0)
        }
    } else {
        let v = ln_tau_matrix_tree(k, kappa)?.exp();
        if v.is_infinite() {
            return Err(Error::Overflow(format!("tau{k} exceeds the f64 range; use ln_tau")));
        }
        v
    };
    Ok(TreeWeight {
        value,
        method: TauMethod::MatrixTree,
    })
}

/// Δ_r(k): sum over trees on supp(k) directed away from the root r, where
/// the edge from parent s to child s' carries weight κ(s, s')·k_s.
pub fn delta_r(k: &TypeConfig, kappa: &Kernel, r: usize) -> f64 {
    if k.get(r) == 0 {
        return 0.0;
    }
    let supp = k.support();
    let m = supp.len();
    if m == 1 {
        return 1.0;
    }
    if m > DELTA_ENUM_LIMIT {
        return delta_r_laplacian(k, kappa, r, &supp);
    }
    let root = supp.iter().position(|&s| s == r).unwrap();
    let others: Vec<usize> = (0..m).filter(|&i| i != root).collect();
    let mut parent = vec![0usize; m];
    let mut choice = vec![0usize; others.len()];
    let mut sum = 0.0;
    'outer: loop {
        for (j, &v) in others.iter().enumerate() {
            parent[v] = choice[j];
        }
        let valid = others.iter().all(|&v| parent[v] != v)
            && others.iter().all(|&v| {
                let mut u = v;
                for _ in 0..m {
                    if u == root {
                        return true;
                    }
                    u = parent[u];
                }
                u == root
            });
        if valid {
            sum += others
                .iter()
                .map(|&v| {
                    let p = supp[parent[v]];
                    kappa.get(p, supp[v]) * k.get(p) as f64
                })
                .product::<f64>();
        }
        let mut i = 0;
        loop {
            if i == choice.len() {
                break 'outer;
            }
            choice[i] += 1;
            if choice[i] < m {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
    sum
}

/// Δ_r(k) = k_r · det(L_w) / Π_s k_s with w(s, s') = κ(s, s') k_s k_s'.
fn delta_r_laplacian(k: &TypeConfig, kappa: &Kernel, r: usize, supp: &[usize]) -> f64 {
    let kf: Vec<f64> = supp.iter().map(|&s| k.get(s) as f64).collect();
    let m = reduced_laplacian(supp.len(), |i, j| kappa.get(supp[i], supp[j]) * kf[i] * kf[j]);
    let (sign, ld) = ln_det(m);
    if sign <= 0.0 {
        return 0.0;
    }
    (ld + (k.get(r) as f64).ln() - kf.iter().map(|v| v.ln()).sum::<f64>()).exp()
}

/// τ(k) = Π_{s∈supp k} (κk)_s^(k_s−1) · Δ_r(k) / k_r.
pub fn tau_closed_form(k: &TypeConfig, kappa: &Kernel, r: usize) -> Result<TreeWeight> {
    check_dim(k, kappa)?;
    if k.get(r) == 0 {
        return Err(Error::Precondition(format!("root type {r} is not in the support of {k}")));
    }
    let kk = kappa.apply(&k.as_f64());
    let mut value = delta_r(k, kappa, r) / k.get(r) as f64;
    for s in k.support() {
        value *= kk[s].powi(k.get(s) as i32 - 1);
    }
    Ok(TreeWeight {
        value,
        method: TauMethod::ClosedForm,
    })
}

/// log τ(k) from the closed form, usable for very large |k|.
/// Returns `-inf` when τ(k) = 0.
pub fn ln_tau(k: &TypeConfig, kappa: &Kernel) -> f64 {
    let supp = k.support();
    let Some(&r) = supp.first() else {
        return f64::NEG_INFINITY;
    };
    if k.size() == 1 {
        return 0.0;
    }
    let kk = kappa.apply(&k.as_f64());
    let mut acc = 0.0;
    for &s in &supp {
        let e = k.get(s) - 1;
        if e > 0 {
            if kk[s] == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += e as f64 * kk[s].ln();
        }
    }
    let d = delta_r(k, kappa, r);
    if d == 0.0 {
        return f64::NEG_INFINITY;
    }
    acc + d.ln() - (k.get(r) as f64).ln()
}

/// τ(k) via the closed form, rooted at the first type in the support.
pub fn tau(k: &TypeConfig, kappa: &Kernel) -> f64 {
    ln_tau(k, kappa).exp()
}

/// Memoised log τ for a fixed kernel, safe to share between threads.
#[derive(Debug)]
pub struct TauCache {
    kappa: Kernel,
    map: RwLock<HashMap<TypeConfig, f64>>,
}

impl TauCache {
    pub fn new(kappa: Kernel) -> Self {
        Self {
            kappa,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kappa
    }

    pub fn ln_tau(&self, k: &TypeConfig) -> f64 {
        if let Some(&v) = self.map.read().unwrap().get(k) {
            return v;
        }
        let v = ln_tau(k, &self.kappa);
        self.map.write().unwrap().insert(k.clone(), v);
        v
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn exact_tau(k: &TypeConfig, kappa: &Kernel) -> f64 {
    tau_matrix_tree(k, kappa).map(|t| t.value).unwrap_or_else(|_| tau(k, kappa))
}

/// Checks Σ_{r,s} κ(r,s) Σ_{m+m̃=k} (Π_u C(k_u, m_u)) τ(m) m_r τ(m̃) m̃_s
/// = 2(|k|−1) τ(k).
pub fn check_recursion(k: &TypeConfig, kappa: &Kernel) -> Result<IdentityCheck> {
    check_dim(k, kappa)?;
    let n = kappa.dim();
    let subs = k.sub_configs();
    let taus: HashMap<&TypeConfig, f64> = subs.iter().map(|m| (m, exact_tau(m, kappa))).collect();
    let mut lhs = 0.0;
    for m in &subs {
        let mt = k.minus(m);
        let (tm, tmt) = (taus[m], taus[&mt]);
        if tm == 0.0 || tmt == 0.0 {
            continue;
        }
        let mult: f64 = (0..n).map(|u| binomial(k.get(u), m.get(u))).product();
        let mut pair = 0.0;
        for r in 0..n {
            for s in 0..n {
                pair += kappa.get(r, s) * m.get(r) as f64 * mt.get(s) as f64;
            }
        }
        lhs += mult * tm * tmt * pair;
    }
    let rhs = 2.0 * (k.size() as f64 - 1.0) * taus[k];
    Ok(IdentityCheck { lhs, rhs })
}

/// Compares τ(k)·k_r with a brute-force sum over labeled trees rooted at a
/// type-r vertex, enumerated as parent maps.
pub fn check_directed_identity(k: &TypeConfig, kappa: &Kernel, r: usize) -> Result<IdentityCheck> {
    check_dim(k, kappa)?;
    let n = k.size();
    if n > DIRECTED_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "directed tree enumeration",
            size: n as usize,
            limit: DIRECTED_LIMIT as usize,
        });
    }
    let rhs = exact_tau(k, kappa) * k.get(r) as f64;
    let x = k.vertex_types();
    let n = n as usize;
    let mut lhs = 0.0;
    for root in (0..n).filter(|&v| x[v] == r) {
        if n == 1 {
            lhs += 1.0;
            continue;
        }
        let others: Vec<usize> = (0..n).filter(|&v| v != root).collect();
        let mut choice = vec![0usize; others.len()];
        let mut parent = vec![usize::MAX; n];
        'maps: loop {
            for (j, &v) in others.iter().enumerate() {
                parent[v] = choice[j];
            }
            let is_tree = others.iter().all(|&v| {
                let mut u = v;
                for _ in 0..n {
                    if u == root {
                        return true;
                    }
                    if parent[u] == u {
                        return false;
                    }
                    u = parent[u];
                }
                false
            });
            if is_tree {
                lhs += others.iter().map(|&v| kappa.get(x[parent[v]], x[v])).product::<f64>();
            }
            let mut i = 0;
            loop {
                if i == choice.len() {
                    break 'maps;
                }
                choice[i] += 1;
                if choice[i] < n {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
    Ok(IdentityCheck { lhs, rhs })
}
