//! Block diagonalization of the commutant of a product of unitary groups
//! acting on a tensor product of wires.
//!
//! Each wire basis vector is assigned to a fundamental index of one group
//! factor (or to none), acting either through the defining representation or
//! its dual. Highest-weight vectors of the total representation are found
//! sector by sector as the common kernel of the raising operators; the
//! lowering operators then generate each irreducible copy. Every operator
//! commuting with the group is `⊕_λ X_λ ⊗ 1_{dim λ}` in the resulting basis.

use std::collections::BTreeMap;

use crate::error::{HoqtError, Result};
use crate::linalg;
use crate::tensor::{CMatrix, C64, ZERO};

/// How one wire transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct WireAction {
    /// For each basis index, `(factor, fundamental index)` or `None` when the
    /// vector is invariant.
    pub map: Vec<Option<(usize, usize)>>,
    /// Dual (complex conjugate) representation.
    pub dual: bool,
}

impl WireAction {
    /// The whole wire carries factor `g` of dimension `dim`.
    pub fn full(g: usize, dim: usize, dual: bool) -> Self {
        WireAction { map: (0..dim).map(|i| Some((g, i))).collect(), dual }
    }

    /// A wire of dimension `dim` split as `ℂ^{first} ⊕ ℂ^{dim−first}`
    /// carrying factors `g0` and `g1`.
    pub fn split(g0: usize, g1: usize, first: usize, dim: usize, dual: bool) -> Self {
        WireAction { map: (0..dim).map(|i| if i < first { Some((g0, i)) } else { Some((g1, i - first)) }).collect(), dual }
    }

    /// Invariant wire.
    pub fn trivial(dim: usize) -> Self {
        WireAction { map: vec![None; dim], dual: false }
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }
}

/// Group `U(n_1) × … × U(n_r)` acting on `⊗_w ℂ^{d_w}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAction {
    pub factor_dims: Vec<usize>,
    pub wires: Vec<WireAction>,
}

impl GroupAction {
    pub fn new(factor_dims: Vec<usize>, wires: Vec<WireAction>) -> Result<Self> {
        for w in &wires {
            for &(g, i) in w.map.iter().flatten() {
                if g >= factor_dims.len() || i >= factor_dims[g] {
                    return Err(HoqtError::InvalidArgument(format!("wire maps to missing factor index ({g}, {i})")));
                }
            }
        }
        Ok(GroupAction { factor_dims, wires })
    }

    /// No symmetry at all on wires of the given dimensions.
    pub fn none(dims: &[usize]) -> Self {
        GroupAction { factor_dims: vec![], wires: dims.iter().map(|&d| WireAction::trivial(d)).collect() }
    }

    pub fn total_dim(&self) -> usize {
        self.wires.iter().map(|w| w.dim()).product()
    }

    fn digits(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.wires.len()];
        for (w, wire) in self.wires.iter().enumerate().rev() {
            out[w] = idx % wire.dim();
            idx /= wire.dim();
        }
        out
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.wires.len()];
        for w in (0..self.wires.len().saturating_sub(1)).rev() {
            s[w] = s[w + 1] * self.wires[w + 1].dim();
        }
        s
    }

    /// Weight of a basis vector, concatenated over factors.
    fn weight(&self, digits: &[usize]) -> Vec<i32> {
        let offsets: Vec<usize> = self.factor_dims.iter().scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        }).collect();
        let mut w = vec![0i32; self.factor_dims.iter().sum()];
        for (wire, &j) in self.wires.iter().zip(digits) {
            if let Some((g, a)) = wire.map[j] {
                w[offsets[g] + a] += if wire.dual { -1 } else { 1 };
            }
        }
        w
    }

    fn dominant(&self, weight: &[i32]) -> bool {
        let mut o = 0;
        for &n in &self.factor_dims {
            if weight[o..o + n].windows(2).any(|p| p[0] < p[1]) {
                return false;
            }
            o += n;
        }
        true
    }

    /// `dR(E_{ab})` of factor `g` applied to a vector.
    fn apply_gen(&self, g: usize, a: usize, b: usize, v: &[C64], strides: &[usize]) -> Vec<C64> {
        let n = v.len();
        let mut out = vec![ZERO; n];
        // per wire, positions of fundamental indices a and b
        for (w, wire) in self.wires.iter().enumerate() {
            let pos = |t: usize| wire.map.iter().position(|m| *m == Some((g, t)));
            let (pa, pb) = match (pos(a), pos(b)) {
                (Some(pa), Some(pb)) => (pa, pb),
                _ => continue,
            };
            // defining rep: |a⟩⟨b|; dual: −|b⟩⟨a|
            let (from, to, sign) = if wire.dual { (pa, pb, -1.0) } else { (pb, pa, 1.0) };
            let st = strides[w];
            let dim = wire.dim();
            for (idx, &x) in v.iter().enumerate() {
                if x == ZERO {
                    continue;
                }
                let digit = (idx / st) % dim;
                if digit == from {
                    let target = idx - from * st + to * st;
                    out[target] += x * sign;
                }
            }
        }
        out
    }
}

/// One isotypic component: `multiplicity` copies of an irreducible
/// representation of dimension `dim`.
#[derive(Clone, Debug)]
pub struct IsotypicBlock {
    pub weight: Vec<i32>,
    pub multiplicity: usize,
    pub dim: usize,
    /// `N × (multiplicity·dim)` orthonormal columns, column `a·dim + t` is
    /// vector `t` of copy `a`.
    pub basis: CMatrix,
}

/// Unitary change of basis block-diagonalizing the commutant.
#[derive(Clone, Debug)]
pub struct SymmetryReduction {
    pub n: usize,
    pub blocks: Vec<IsotypicBlock>,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

impl SymmetryReduction {
    /// A single block holding the whole space (no symmetry).
    pub fn trivial(n: usize) -> Self {
        SymmetryReduction {
            n,
            blocks: vec![IsotypicBlock { weight: vec![], multiplicity: n, dim: 1, basis: CMatrix::identity(n, n) }],
        }
    }

    pub fn build(action: &GroupAction) -> Result<Self> {
        let n = action.total_dim();
        crate::budget::check_complex(n * n, "symmetry-adapted basis")?;
        if action.factor_dims.is_empty() {
            return Ok(Self::trivial(n));
        }
        let strides = action.strides();
        let mut sectors: BTreeMap<Vec<i32>, Vec<usize>> = BTreeMap::new();
        for idx in 0..n {
            sectors.entry(action.weight(&action.digits(idx))).or_default().push(idx);
        }
        let raising: Vec<(usize, usize)> = action
            .factor_dims
            .iter()
            .enumerate()
            .flat_map(|(g, &dg)| (0..dg.saturating_sub(1)).map(move |a| (g, a)))
            .collect();

        let mut blocks = Vec::new();
        for (weight, idxs) in sectors.iter().rev() {
            if !action.dominant(weight) {
                continue;
            }
            let s = idxs.len();
            // Σ R† R over raising operators, restricted to the sector
            let images: Vec<Vec<Vec<C64>>> = raising
                .iter()
                .map(|&(g, a)| {
                    idxs.iter()
                        .map(|&i| {
                            let mut e = vec![ZERO; n];
                            e[i] = C64::new(1.0, 0.0);
                            action.apply_gen(g, a, a + 1, &e, &strides)
                        })
                        .collect()
                })
                .collect();
            let gram = CMatrix::from_fn(s, s, |i, j| images.iter().map(|im| dot(&im[i], &im[j])).sum());
            let (vals, vecs) = linalg::herm_eig(&gram);
            let hw: Vec<Vec<C64>> = (0..s)
                .filter(|&c| vals[c] < 1e-9)
                .map(|c| {
                    let mut v = vec![ZERO; n];
                    for (r, &i) in idxs.iter().enumerate() {
                        v[i] = vecs[(r, c)];
                    }
                    v
                })
                .collect();
            if hw.is_empty() {
                continue;
            }
            blocks.push(Self::generate(action, weight.clone(), hw, &strides));
        }
        let red = SymmetryReduction { n, blocks };
        red.check()?;
        Ok(red)
    }

    /// Generate every copy of the irreducible module from its highest-weight
    /// vectors, applying the same Gram-Schmidt recipe to each copy.
    fn generate(action: &GroupAction, weight: Vec<i32>, hw: Vec<Vec<C64>>, strides: &[usize]) -> IsotypicBlock {
        let lowering: Vec<(usize, usize)> = action
            .factor_dims
            .iter()
            .enumerate()
            .flat_map(|(g, &dg)| (0..dg.saturating_sub(1)).map(move |a| (g, a)))
            .collect();
        let m = hw.len();
        let mut copies: Vec<Vec<Vec<C64>>> = hw.into_iter().map(|h| vec![h]).collect();
        let mut t = 0;
        while t < copies[0].len() {
            for &(g, a) in &lowering {
                let cands: Vec<Vec<C64>> = copies.iter().map(|c| action.apply_gen(g, a + 1, a, &c[t], strides)).collect();
                let raw = norm(&cands[0]);
                if raw < 1e-10 {
                    continue;
                }
                let mut cands = cands;
                // two Gram-Schmidt passes, coefficients taken from copy 0
                for _ in 0..2 {
                    let coef: Vec<C64> = copies[0].iter().map(|u| dot(u, &cands[0])).collect();
                    for (c, cand) in copies.iter().zip(cands.iter_mut()) {
                        for (u, k) in c.iter().zip(&coef) {
                            for (x, y) in cand.iter_mut().zip(u) {
                                *x -= k * y;
                            }
                        }
                    }
                }
                let r = norm(&cands[0]);
                if r < 1e-8 * raw.max(1.0) {
                    continue;
                }
                for (c, cand) in copies.iter_mut().zip(cands) {
                    c.push(cand.into_iter().map(|x| x / r).collect());
                }
            }
            t += 1;
        }
        let dim = copies[0].len();
        let n = copies[0][0].len();
        let basis = CMatrix::from_fn(n, m * dim, |r, c| copies[c / dim][c % dim][r]);
        IsotypicBlock { weight, multiplicity: m, dim, basis }
    }

    fn check(&self) -> Result<()> {
        let total: usize = self.blocks.iter().map(|b| b.multiplicity * b.dim).sum();
        if total != self.n {
            return Err(HoqtError::Verification(format!("isotypic blocks cover {total} of {} dimensions", self.n)));
        }
        let q = self.unitary();
        let dev = crate::tensor::frob_dist(&linalg::matmul_adj(&q, &q), &CMatrix::identity(self.n, self.n));
        if dev > 1e-8 {
            return Err(HoqtError::Verification(format!("symmetry-adapted basis not orthonormal ({dev:.2e})")));
        }
        Ok(())
    }

    /// All block bases side by side.
    pub fn unitary(&self) -> CMatrix {
        let mut q = CMatrix::zeros(self.n, self.n);
        let mut c0 = 0;
        for b in &self.blocks {
            q.columns_mut(c0, b.basis.ncols()).copy_from(&b.basis);
            c0 += b.basis.ncols();
        }
        q
    }

    /// `Σ_λ multiplicity²`: real dimension of the Hermitian commutant.
    pub fn commutant_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.multiplicity * b.multiplicity).sum()
    }

    /// `⊕_λ X_λ ⊗ 1` back in the original basis.
    pub fn expand(&self, xs: &[CMatrix]) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, self.n);
        for (b, x) in self.blocks.iter().zip(xs) {
            let lifted = x.kronecker(&CMatrix::identity(b.dim, b.dim));
            out += linalg::matmul_by_adj(&linalg::matmul(&b.basis, &lifted), &b.basis);
        }
        out
    }

    /// `R_λ(Q)` with `Tr(X Q) = Σ_λ Tr(X_λ R_λ(Q))` for every `X` in the commutant.
    pub fn reduce(&self, q: &CMatrix) -> Vec<CMatrix> {
        self.blocks
            .iter()
            .map(|b| {
                let full = linalg::matmul(&linalg::matmul_adj(&b.basis, q), &b.basis);
                let (m, dim) = (b.multiplicity, b.dim);
                CMatrix::from_fn(m, m, |r, c| (0..dim).map(|t| full[(r * dim + t, c * dim + t)]).sum())
            })
            .collect()
    }

    /// Blocks of an operator already in the commutant.
    pub fn blocks_of(&self, x: &CMatrix) -> Vec<CMatrix> {
        self.reduce(x)
            .into_iter()
            .zip(&self.blocks)
            .map(|(r, b)| r.transpose() / C64::new(b.dim as f64, 0.0))
            .collect()
    }

    /// Projections `basis_λ† v`, reused by [`Self::reduce_rank1`].
    pub fn project(&self, v: &[C64]) -> Vec<Vec<C64>> {
        self.blocks
            .iter()
            .map(|b| (0..b.basis.ncols()).map(|c| (0..self.n).map(|r| b.basis[(r, c)].conj() * v[r]).sum()).collect())
            .collect()
    }

    /// `R_λ(|α⟩⟨β|)` from the projections of `α` and `β`.
    pub fn reduce_rank1(&self, pa: &[Vec<C64>], pb: &[Vec<C64>]) -> Vec<CMatrix> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let (m, dim) = (b.multiplicity, b.dim);
                CMatrix::from_fn(m, m, |r, c| (0..dim).map(|t| pa[l][r * dim + t] * pb[l][c * dim + t].conj()).sum())
            })
            .collect()
    }

    /// `R_λ(M_λ M_λ†)` for per-block projected columns `M_λ = basis_λ† M`.
    pub fn reduce_gram(&self, ms: &[CMatrix]) -> Vec<CMatrix> {
        self.blocks
            .iter()
            .zip(ms)
            .map(|(b, mm)| {
                let (m, dim) = (b.multiplicity, b.dim);
                let g = linalg::matmul_by_adj(mm, mm);
                CMatrix::from_fn(m, m, |r, c| (0..dim).map(|t| g[(r * dim + t, c * dim + t)]).sum())
            })
            .collect()
    }

    /// Sub-commutant `{⊕ W_λ Y_λ W_λ† ⊗ 1}` for isometries `W_λ` on the
    /// multiplicity spaces; blocks with no columns left are dropped.
    pub fn restrict(&self, ws: &[CMatrix]) -> SymmetryReduction {
        let blocks = self
            .blocks
            .iter()
            .zip(ws)
            .filter(|(_, w)| w.ncols() > 0)
            .map(|(b, w)| {
                let lifted = w.kronecker(&CMatrix::identity(b.dim, b.dim));
                IsotypicBlock {
                    weight: b.weight.clone(),
                    multiplicity: w.ncols(),
                    dim: b.dim,
                    basis: linalg::matmul(&b.basis, &lifted),
                }
            })
            .collect();
        SymmetryReduction { n: self.n, blocks }
    }
}
