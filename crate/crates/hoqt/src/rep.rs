//! Symmetric- and unitary-group representation data on `(ℂ^d)^{⊗k}`.
//!
//! Young diagrams, standard tableaux, hook-length and hook-content
//! dimensions, Murnaghan–Nakayama characters, permutation operators, Young's
//! orthogonal representation, matrix units, isotypic projectors, Schur block
//! isometries and exact Haar twirls.
//!
//! Tableaux of a shape are ordered lexicographically by their row-reading
//! words. The order does not depend on the local dimension, so the tableau
//! index of a Schur block means the same thing for `(ℂ^d)^{⊗k}` and
//! `(ℂ^D)^{⊗k}`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HoqtError, Result};
use crate::tensor::{CMatrix, LabeledOperator, Space, C64, ONE, ZERO};

/// A partition written as weakly decreasing positive rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YoungDiagram {
    rows: Vec<usize>,
}

impl YoungDiagram {
    pub fn new(rows: Vec<usize>) -> Result<Self> {
        if rows.is_empty() || rows.contains(&0) {
            return Err(HoqtError::InvalidArgument(format!("invalid Young diagram {rows:?}")));
        }
        if rows.windows(2).any(|w| w[0] < w[1]) {
            return Err(HoqtError::InvalidArgument(format!("rows must weakly decrease: {rows:?}")));
        }
        Ok(YoungDiagram { rows })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Number of boxes.
    pub fn size(&self) -> usize {
        self.rows.iter().sum()
    }

    /// Number of rows, `l(μ)`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column lengths.
    pub fn conjugate(&self) -> Vec<usize> {
        (0..self.rows[0]).map(|j| self.rows.iter().filter(|&&r| r > j).count()).collect()
    }

    /// Boxes `(row, col)` in reading order.
    pub fn boxes(&self) -> Vec<(usize, usize)> {
        self.rows.iter().enumerate().flat_map(|(i, &r)| (0..r).map(move |j| (i, j))).collect()
    }

    pub fn hook(&self, i: usize, j: usize) -> usize {
        let cols = self.conjugate();
        (self.rows[i] - j - 1) + (cols[j] - i - 1) + 1
    }

    /// Single-row diagram `[k]`.
    pub fn row(k: usize) -> Self {
        YoungDiagram { rows: vec![k] }
    }

    /// Single-column diagram `[1^k]`.
    pub fn column(k: usize) -> Self {
        YoungDiagram { rows: vec![1; k] }
    }
}

impl std::fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.rows.iter().map(|r| r.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// All partitions of `k`, lexicographically decreasing, optionally limited to
/// at most `max_rows` rows.
pub fn partitions(k: usize, max_rows: Option<usize>) -> Result<Vec<YoungDiagram>> {
    if k == 0 {
        return Err(HoqtError::InvalidArgument("partitions of 0 are not supported".into()));
    }
    fn rec(rem: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rem == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rem.min(cap)).rev() {
            cur.push(part);
            rec(rem - part, part, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(k, k, &mut Vec::new(), &mut raw);
    Ok(raw
        .into_iter()
        .filter(|p| max_rows.map_or(true, |m| p.len() <= m))
        .map(|rows| YoungDiagram { rows })
        .collect())
}

/// Dimension of the Specht module `𝒮_μ` by the hook-length formula.
pub fn dim_sym(mu: &YoungDiagram) -> usize {
    let mut num: u128 = 1;
    for i in 2..=mu.size() as u128 {
        num *= i;
    }
    let den: u128 = mu.boxes().iter().map(|&(i, j)| mu.hook(i, j) as u128).product();
    (num / den) as usize
}

/// Dimension of the `U(d)` irrep `𝒰_μ^{(d)}` by the hook-content formula;
/// zero when `l(μ) > d`.
pub fn dim_u(mu: &YoungDiagram, d: usize) -> usize {
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for (i, j) in mu.boxes() {
        num *= d as i128 + j as i128 - i as i128;
        den *= mu.hook(i, j) as i128;
    }
    if num <= 0 {
        0
    } else {
        (num / den) as usize
    }
}

/// A permutation of `{0, …, k−1}` stored as its images.
pub type Permutation = Vec<usize>;

pub fn identity_perm(k: usize) -> Permutation {
    (0..k).collect()
}

/// `(σ ∘ τ)(i) = σ(τ(i))`.
pub fn compose(sigma: &[usize], tau: &[usize]) -> Permutation {
    tau.iter().map(|&t| sigma[t]).collect()
}

pub fn inverse(sigma: &[usize]) -> Permutation {
    let mut inv = vec![0; sigma.len()];
    for (i, &s) in sigma.iter().enumerate() {
        inv[s] = i;
    }
    inv
}

/// Transposition of `a` and `b` in `𝔖_k`.
pub fn transposition(k: usize, a: usize, b: usize) -> Permutation {
    let mut p = identity_perm(k);
    p.swap(a, b);
    p
}

/// All permutations of `k` points in lexicographic order of their images.
pub fn all_permutations(k: usize) -> Vec<Permutation> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Permutation>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Cycle lengths of `σ`, sorted decreasingly.
pub fn cycle_type(sigma: &[usize]) -> YoungDiagram {
    let mut seen = vec![false; sigma.len()];
    let mut lens = Vec::new();
    for start in 0..sigma.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = sigma[i];
            len += 1;
        }
        lens.push(len);
    }
    lens.sort_unstable_by(|a, b| b.cmp(a));
    YoungDiagram { rows: lens }
}

/// Number of cycles of `σ`.
pub fn cycle_count(sigma: &[usize]) -> usize {
    cycle_type(sigma).len()
}

/// Parity sign of `σ`.
pub fn sign(sigma: &[usize]) -> i64 {
    if (sigma.len() - cycle_count(sigma)) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Irreducible character `χ_μ` on the class with the given cycle type,
/// computed with the Murnaghan–Nakayama rule on beta-sets.
pub fn character(mu: &YoungDiagram, cycle_type: &YoungDiagram) -> Result<i64> {
    if mu.size() != cycle_type.size() {
        return Err(HoqtError::DimensionMismatch(format!(
            "χ_{mu} evaluated on a class of {} points",
            cycle_type.size()
        )));
    }
    let mut memo = HashMap::new();
    Ok(mn(mu.rows.clone(), &cycle_type.rows, &mut memo))
}

fn mn(mu: Vec<usize>, parts: &[usize], memo: &mut HashMap<(Vec<usize>, usize), i64>) -> i64 {
    if parts.is_empty() {
        return if mu.is_empty() { 1 } else { 0 };
    }
    let key = (mu.clone(), parts.len());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let r = parts[0];
    let l = mu.len();
    let beta: Vec<usize> = mu.iter().enumerate().map(|(i, &m)| m + (l - 1 - i)).collect();
    let mut total = 0i64;
    for i in 0..l {
        if beta[i] < r {
            continue;
        }
        let target = beta[i] - r;
        if beta.contains(&target) {
            continue;
        }
        let between = beta.iter().filter(|&&b| b > target && b < beta[i]).count();
        let mut nb = beta.clone();
        nb[i] = target;
        nb.sort_unstable_by(|a, b| b.cmp(a));
        let nmu: Vec<usize> = nb
            .iter()
            .enumerate()
            .map(|(j, &b)| b - (l - 1 - j))
            .filter(|&x| x > 0)
            .collect();
        let s = if between % 2 == 0 { 1 } else { -1 };
        total += s * mn(nmu, &parts[1..], memo);
    }
    memo.insert(key, total);
    total
}

/// Labels `s1, …, sk` used for the tensor factors of `(ℂ^d)^{⊗k}`.
pub fn site_spaces(d: usize, k: usize) -> Vec<Space> {
    (1..=k).map(|i| Space::new(format!("s{i}"), d)).collect()
}

/// Index map of `P_σ` on `(ℂ^d)^{⊗k}`: entry `x` is the image of basis
/// index `x`. `P_σ` moves the factor in slot `j` to slot `σ(j)`.
pub fn perm_index_map(sigma: &[usize], d: usize) -> Vec<usize> {
    let k = sigma.len();
    let n = d.pow(k as u32);
    let mut stride = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * d;
    }
    let mut out = vec![0usize; n];
    let mut digits = vec![0usize; k];
    for (x, slot) in out.iter_mut().enumerate() {
        let mut rem = x;
        for j in 0..k {
            digits[j] = rem / stride[j];
            rem %= stride[j];
        }
        *slot = (0..k).map(|j| digits[j] * stride[sigma[j]]).sum();
    }
    out
}

/// Dense `P_σ` as a raw matrix.
pub fn perm_matrix(sigma: &[usize], d: usize) -> CMatrix {
    let map = perm_index_map(sigma, d);
    let n = map.len();
    let mut m = CMatrix::zeros(n, n);
    for (x, &y) in map.iter().enumerate() {
        m[(y, x)] = ONE;
    }
    m
}

/// Permutation operator `P_σ (⊗ᵢ|ψᵢ⟩) = ⊗ᵢ|ψ_{σ⁻¹(i)}⟩` on sites `s1…sk`.
pub fn perm_operator(sigma: &[usize], d: usize, k: usize) -> Result<LabeledOperator> {
    if sigma.len() != k || inverse(sigma).len() != k || {
        let mut s = sigma.to_vec();
        s.sort_unstable();
        s != identity_perm(k)
    } {
        return Err(HoqtError::InvalidArgument(format!("{sigma:?} is not a permutation of {k} points")));
    }
    LabeledOperator::square(site_spaces(d, k), perm_matrix(sigma, d))
}

/// Standard Young tableau stored row by row with entries `1..=k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardTableau {
    pub shape: YoungDiagram,
    pub rows: Vec<Vec<usize>>,
}

impl StandardTableau {
    pub fn reading_word(&self) -> Vec<usize> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Row and column of entry `v`.
    pub fn locate(&self, v: usize) -> (usize, usize) {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|&x| x == v) {
                return (i, j);
            }
        }
        panic!("entry {v} missing from tableau")
    }

    fn is_standard(&self) -> bool {
        let rows_ok = self.rows.iter().all(|r| r.windows(2).all(|w| w[0] < w[1]));
        let cols_ok = (1..self.rows.len())
            .all(|i| (0..self.rows[i].len()).all(|j| self.rows[i - 1][j] < self.rows[i][j]));
        rows_ok && cols_ok
    }
}

/// Standard tableaux of shape `μ`, ordered lexicographically by reading word.
pub fn standard_tableaux(mu: &YoungDiagram) -> Vec<StandardTableau> {
    let k = mu.size();
    let mut out = Vec::new();
    let mut filling: Vec<Vec<usize>> = mu.rows.iter().map(|_| Vec::new()).collect();
    fn rec(v: usize, k: usize, mu: &[usize], filling: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if v > k {
            out.push(filling.clone());
            return;
        }
        for i in 0..mu.len() {
            let len = filling[i].len();
            if len < mu[i] && (i == 0 || filling[i - 1].len() > len) {
                filling[i].push(v);
                rec(v + 1, k, mu, filling, out);
                filling[i].pop();
            }
        }
    }
    rec(1, k, &mu.rows, &mut filling, &mut out);
    let mut tabs: Vec<StandardTableau> =
        out.into_iter().map(|rows| StandardTableau { shape: mu.clone(), rows }).collect();
    tabs.sort_by_key(|t| t.reading_word());
    tabs
}

/// Young's orthogonal representation of `𝔖_k` for shape `μ`, with the
/// matrices of every permutation cached.
#[derive(Clone, Debug)]
pub struct YoungRep {
    pub shape: YoungDiagram,
    pub tableaux: Vec<StandardTableau>,
    matrices: HashMap<Permutation, DMatrix<f64>>,
}

impl YoungRep {
    pub fn new(mu: &YoungDiagram) -> Self {
        let k = mu.size();
        let tableaux = standard_tableaux(mu);
        let n = tableaux.len();
        let index: HashMap<Vec<usize>, usize> =
            tableaux.iter().enumerate().map(|(i, t)| (t.reading_word(), i)).collect();
        let mut gens = Vec::new();
        for i in 1..k {
            let mut m = DMatrix::<f64>::zeros(n, n);
            for (t, tab) in tableaux.iter().enumerate() {
                let (r1, c1) = tab.locate(i);
                let (r2, c2) = tab.locate(i + 1);
                let axial = (c2 as f64 - r2 as f64) - (c1 as f64 - r1 as f64);
                m[(t, t)] = 1.0 / axial;
                if r1 != r2 && c1 != c2 {
                    let mut swapped = tab.clone();
                    swapped.rows[r1][c1] = i + 1;
                    swapped.rows[r2][c2] = i;
                    debug_assert!(swapped.is_standard());
                    let u = index[&swapped.reading_word()];
                    m[(u, t)] = (1.0 - 1.0 / (axial * axial)).sqrt();
                }
            }
            gens.push((transposition(k, i - 1, i), m));
        }
        let mut matrices = HashMap::new();
        matrices.insert(identity_perm(k), DMatrix::<f64>::identity(n, n));
        let mut frontier = vec![identity_perm(k)];
        while let Some(p) = frontier.pop() {
            let mp = matrices[&p].clone();
            for (g, mg) in &gens {
                let q = compose(g, &p);
                if !matrices.contains_key(&q) {
                    matrices.insert(q.clone(), mg * &mp);
                    frontier.push(q);
                }
            }
        }
        YoungRep { shape: mu.clone(), tableaux, matrices }
    }

    pub fn dim(&self) -> usize {
        self.tableaux.len()
    }

    /// `ρ_μ(σ)`.
    pub fn matrix(&self, sigma: &[usize]) -> &DMatrix<f64> {
        &self.matrices[sigma]
    }
}

/// Add `coef · P_σ` into a dense accumulator.
fn add_perm(acc: &mut CMatrix, map: &[usize], coef: f64) {
    if coef == 0.0 {
        return;
    }
    for (x, &y) in map.iter().enumerate() {
        acc[(y, x)] += C64::new(coef, 0.0);
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn check_rows(mu: &YoungDiagram, d: usize, k: usize) -> Result<()> {
    if mu.size() != k {
        return Err(HoqtError::DimensionMismatch(format!("{mu} is not a partition of {k}")));
    }
    if mu.len() > d {
        return Err(HoqtError::InvalidArgument(format!("l({mu}) = {} exceeds d = {d}", mu.len())));
    }
    Ok(())
}

/// Matrix units of one isotypic block, indexed by tableau pairs.
#[derive(Clone, Debug)]
pub struct MatrixUnits {
    pub shape: YoungDiagram,
    pub tableaux: Vec<StandardTableau>,
    /// `units[s][t] = E^μ_{st}`.
    pub units: Vec<Vec<CMatrix>>,
}

/// `E^μ_{st} = (d_S/k!) Σ_σ [ρ_μ(σ)]_{st} P_σ`.
pub fn matrix_units(mu: &YoungDiagram, d: usize, k: usize) -> Result<MatrixUnits> {
    check_rows(mu, d, k)?;
    let rep = YoungRep::new(mu);
    let ds = rep.dim();
    let n = d.pow(k as u32);
    crate::budget::check_complex(ds * ds * n * n, "matrix units")?;
    let perms = all_permutations(k);
    let maps: Vec<Vec<usize>> = perms.iter().map(|p| perm_index_map(p, d)).collect();
    let norm = ds as f64 / factorial(k);
    let mut units = vec![vec![CMatrix::zeros(n, n); ds]; ds];
    for (p, map) in perms.iter().zip(&maps) {
        let m = rep.matrix(p);
        for (s, row) in units.iter_mut().enumerate() {
            for (t, unit) in row.iter_mut().enumerate() {
                add_perm(unit, map, norm * m[(s, t)]);
            }
        }
    }
    Ok(MatrixUnits { shape: mu.clone(), tableaux: rep.tableaux, units })
}

/// Raw isotypic projector `Π_μ = (d_S/k!) Σ_σ χ_μ(σ) P_σ` on `(ℂ^d)^{⊗k}`.
/// Vanishes identically when `l(μ) > d`.
pub fn isotypic_projector_matrix(mu: &YoungDiagram, d: usize) -> CMatrix {
    let k = mu.size();
    let n = d.pow(k as u32);
    let norm = dim_sym(mu) as f64 / factorial(k);
    let mut acc = CMatrix::zeros(n, n);
    let mut memo: HashMap<YoungDiagram, i64> = HashMap::new();
    for p in all_permutations(k) {
        let ct = cycle_type(&p);
        let chi = *memo
            .entry(ct.clone())
            .or_insert_with(|| character(mu, &ct).expect("sizes agree"));
        add_perm(&mut acc, &perm_index_map(&p, d), norm * chi as f64);
    }
    acc
}

/// Isotypic projector on sites `s1…sk`.
pub fn isotypic_projector(mu: &YoungDiagram, d: usize, k: usize) -> Result<LabeledOperator> {
    if mu.size() != k {
        return Err(HoqtError::DimensionMismatch(format!("{mu} is not a partition of {k}")));
    }
    LabeledOperator::square(site_spaces(d, k), isotypic_projector_matrix(mu, d))
}

/// One isotypic component of Schur–Weyl duality.
#[derive(Clone, Debug)]
pub struct SchurBlock {
    pub shape: YoungDiagram,
    pub dim_u: usize,
    pub dim_sym: usize,
    /// `Π_μ` as a raw `d^k × d^k` matrix.
    pub projector: CMatrix,
    /// `W_μ: ℂ^{d_U} ⊗ ℂ^{d_S} → (ℂ^d)^{⊗k}`, column `a·d_S + t`.
    pub isometry: CMatrix,
}

/// Per-`(d, k)` bundle of Schur–Weyl data for every `μ ⊢ k` with `l(μ) ≤ d`.
#[derive(Clone, Debug)]
pub struct SchurData {
    pub d: usize,
    pub k: usize,
    pub blocks: Vec<SchurBlock>,
}

impl SchurData {
    pub fn block(&self, mu: &YoungDiagram) -> Option<&SchurBlock> {
        self.blocks.iter().find(|b| &b.shape == mu)
    }

    /// `d^k`.
    pub fn total_dim(&self) -> usize {
        self.d.pow(self.k as u32)
    }
}

/// Orthonormal basis of the range of a Hermitian projector by greedy
/// column pivoting.
pub(crate) fn range_basis(proj: &CMatrix, rank: usize) -> CMatrix {
    let n = proj.nrows();
    let mut residual = proj.clone();
    let mut basis = CMatrix::zeros(n, rank);
    for r in 0..rank {
        let (mut best, mut best_norm) = (0, -1.0);
        for j in 0..n {
            let nn: f64 = residual.column(j).iter().map(|z| z.norm_sqr()).sum();
            if nn > best_norm + 1e-12 {
                best = j;
                best_norm = nn;
            }
        }
        let mut q = residual.column(best).clone_owned();
        for prev in 0..r {
            let b = basis.column(prev);
            let ov = b.dotc(&q);
            q -= b * ov;
        }
        let nq = q.norm();
        q /= C64::new(nq, 0.0);
        let overlaps = q.adjoint() * &residual;
        residual -= &q * overlaps;
        basis.set_column(r, &q);
    }
    basis
}

/// Schur block isometry `W_μ` with columns `E_{t1} u_a` ordered `(a, t)`.
pub fn schur_block_isometry_matrix(mu: &YoungDiagram, d: usize) -> Result<CMatrix> {
    let k = mu.size();
    check_rows(mu, d, k)?;
    let rep = YoungRep::new(mu);
    let ds = rep.dim();
    let du = dim_u(mu, d);
    let n = d.pow(k as u32);
    let perms = all_permutations(k);
    let maps: Vec<Vec<usize>> = perms.iter().map(|p| perm_index_map(p, d)).collect();
    let norm = ds as f64 / factorial(k);
    let mut e11 = CMatrix::zeros(n, n);
    for (p, map) in perms.iter().zip(&maps) {
        add_perm(&mut e11, map, norm * rep.matrix(p)[(0, 0)]);
    }
    let u = range_basis(&e11, du);
    let mut w = CMatrix::zeros(n, du * ds);
    for (p, map) in perms.iter().zip(&maps) {
        let m = rep.matrix(p);
        for t in 0..ds {
            let coef = norm * m[(t, 0)];
            if coef == 0.0 {
                continue;
            }
            let c = C64::new(coef, 0.0);
            for a in 0..du {
                let col = a * ds + t;
                for (x, &y) in map.iter().enumerate() {
                    let val = u[(x, a)];
                    if val != ZERO {
                        w[(y, col)] += c * val;
                    }
                }
            }
        }
    }
    Ok(w)
}

/// `W_μ` as a labeled operator from `U ⊗ S` to sites `s1…sk`.
pub fn schur_block_isometry(mu: &YoungDiagram, d: usize, k: usize) -> Result<LabeledOperator> {
    check_rows(mu, d, k)?;
    let w = schur_block_isometry_matrix(mu, d)?;
    LabeledOperator::new(
        site_spaces(d, k),
        vec![Space::new("U", dim_u(mu, d)), Space::new("S", dim_sym(mu))],
        w,
    )
}

/// Build the Schur–Weyl bundle for `(d, k)`.
pub fn schur_data(d: usize, k: usize) -> Result<SchurData> {
    if d == 0 || k == 0 {
        return Err(HoqtError::InvalidArgument("d and k must be positive".into()));
    }
    let n = d.pow(k as u32);
    let shapes = partitions(k, Some(d))?;
    crate::budget::check_complex(2 * shapes.len() * n * n, "Schur data")?;
    let mut blocks = Vec::new();
    for mu in shapes {
        let projector = isotypic_projector_matrix(&mu, d);
        let isometry = schur_block_isometry_matrix(&mu, d)?;
        blocks.push(SchurBlock { dim_u: dim_u(&mu, d), dim_sym: dim_sym(&mu), shape: mu, projector, isometry });
    }
    Ok(SchurData { d, k, blocks })
}

/// Partial trace over the `U` factor of a `(d_U d_S)`-square block.
pub(crate) fn trace_u(block: &CMatrix, du: usize, ds: usize) -> CMatrix {
    CMatrix::from_fn(ds, ds, |s, t| (0..du).map(|a| block[(a * ds + s, a * ds + t)]).sum())
}

/// `1_U/d_U ⊗ m` embedded back through `W`.
pub(crate) fn lift_mixed(w: &CMatrix, m: &CMatrix, du: usize, ds: usize) -> CMatrix {
    let mut inner = CMatrix::zeros(du * ds, du * ds);
    let f = C64::new(1.0 / du as f64, 0.0);
    for a in 0..du {
        for s in 0..ds {
            for t in 0..ds {
                inner[(a * ds + s, a * ds + t)] = m[(s, t)] * f;
            }
        }
    }
    w * inner * w.adjoint()
}

/// Exact Haar twirl on raw matrices using precomputed Schur data.
pub fn twirl_with(data: &SchurData, rho: &CMatrix) -> CMatrix {
    let n = data.total_dim();
    let mut out = CMatrix::zeros(n, n);
    for b in &data.blocks {
        let inner = b.isometry.adjoint() * rho * &b.isometry;
        let m = trace_u(&inner, b.dim_u, b.dim_sym);
        out += lift_mixed(&b.isometry, &m, b.dim_u, b.dim_sym);
    }
    out
}

/// `∫dU U^{⊗k} ρ U^{†⊗k}`, evaluated exactly block by block.
pub fn twirl(rho: &LabeledOperator, d: usize, k: usize) -> Result<LabeledOperator> {
    let n = d.pow(k as u32);
    if rho.nrows() != n || rho.ncols() != n {
        return Err(HoqtError::DimensionMismatch(format!(
            "twirl on (C^{d})^{k} expects {n}x{n}, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let data = schur_data(d, k)?;
    LabeledOperator::new(rho.row_spaces().to_vec(), rho.col_spaces().to_vec(), twirl_with(&data, rho.entries()))
}

/// `V^{⊗k}` as a raw matrix; `k = 0` gives the `1×1` identity.
pub fn tensor_power(v: &CMatrix, k: usize) -> CMatrix {
    if k == 0 {
        return CMatrix::identity(1, 1);
    }
    let mut acc = v.clone();
    for _ in 1..k {
        acc = acc.kronecker(v);
    }
    acc
}

/// Largest deviation of `W^{(D)†}_ν V^{⊗k} W^{(d)}_μ` from the block form
/// `δ_{μν} V_μ ⊗ 1_S`, including the isometry defect of each `V_μ`.
pub fn verify_isometry_decomposition(v: &LabeledOperator, k: usize) -> Result<f64> {
    let m = v.entries();
    let (big_d, d) = (m.nrows(), m.ncols());
    let iso = crate::tensor::isometry_residual(m);
    if iso > 1e-10 {
        return Err(HoqtError::NotIsometry(iso));
    }
    let small = schur_data(d, k)?;
    let large = schur_data(big_d, k)?;
    let vk = tensor_power(m, k);
    let mut worst: f64 = 0.0;
    for bl in &large.blocks {
        let left = bl.isometry.adjoint() * &vk;
        for bs in &small.blocks {
            let b = &left * &bs.isometry;
            if bl.shape != bs.shape {
                worst = worst.max(b.norm());
                continue;
            }
            let ds = bs.dim_sym;
            let vmu = CMatrix::from_fn(bl.dim_u, bs.dim_u, |r, c| b[(r * ds, c * ds)]);
            let expected = vmu.kronecker(&CMatrix::identity(ds, ds));
            worst = worst.max(crate::tensor::frob_dist(&b, &expected));
            worst = worst.max(crate::tensor::isometry_residual(&vmu));
        }
    }
    Ok(worst)
}

/// Both sides of `Σ_{μ⊢k} d_U^{(d)} d_U^{(D)} = ((dD+k−1)/k) Σ_{α⊢k−1} d_U^{(d)} d_U^{(D)}`,
/// the right side kept as an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimRecursion {
    pub lhs: u128,
    pub rhs_numerator: u128,
    pub rhs_denominator: u128,
}

impl DimRecursion {
    pub fn holds(&self) -> bool {
        self.lhs * self.rhs_denominator == self.rhs_numerator
    }
    pub fn rhs(&self) -> f64 {
        self.rhs_numerator as f64 / self.rhs_denominator as f64
    }
}

/// `Σ_{μ⊢k} d_U^{(d)}(μ) d_U^{(D)}(μ)`.
pub fn paired_dim_sum(d: usize, big_d: usize, k: usize) -> u128 {
    partitions(k, None)
        .expect("k >= 1")
        .iter()
        .map(|mu| dim_u(mu, d) as u128 * dim_u(mu, big_d) as u128)
        .sum()
}

pub fn dim_recursion_check(d: usize, big_d: usize, k: usize) -> Result<DimRecursion> {
    if k < 2 {
        return Err(HoqtError::InvalidArgument("the recursion needs k >= 2".into()));
    }
    let lhs = paired_dim_sum(d, big_d, k);
    let prev = paired_dim_sum(d, big_d, k - 1);
    Ok(DimRecursion {
        lhs,
        rhs_numerator: (d as u128 * big_d as u128 + k as u128 - 1) * prev,
        rhs_denominator: k as u128,
    })
}
