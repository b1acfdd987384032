//! Semidefinite programs for the optimal success probability of isometry
//! inversion, (pseudo) complex conjugation, transposition and
//! success-or-draw inversion over parallel, sequential and general
//! superinstruments.
//!
//! The task equalities are imposed on a spanning set of
//! `|V⟩⟩⟨⟨V|^{⊗n}` ([`isometry_span_basis`]). Each task is covariant under a
//! product of unitary groups acting on the wires, so the optimum is attained
//! in the commutant of that action; [`build_task_sdp`] restricts `S` and `F`
//! to it through [`SymmetryReduction`], which turns the two big PSD variables
//! into a few small blocks. The solver is a relaxed ADMM splitting between the
//! affine constraint set (exact orthogonal projection) and the PSD cone.

use std::time::Instant;

use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::budget;
use crate::choi::{
    comb_constraints, link_product, validate_superinstrument, CombClass, SlotSignature, Superinstrument,
    SuperinstrumentReport,
};
use crate::error::{HoqtError, Result};
use crate::linalg;
use crate::symmetry::{GroupAction, SymmetryReduction, WireAction};
use crate::task::Task;
use crate::tensor::{haar_isometry, CMatrix, LabeledOperator, RandomSource, Space, C64, ZERO};

/// JSON schema version of problem and solution records.
pub const SCHEMA_VERSION: u32 = 1;

// --------------------------------------------------------------------------
// Spanning isometries

/// Isometries `{V_i}` whose `|V_i⟩⟩⟨⟨V_i|^{⊗n}` span
/// `span{|V⟩⟩⟨⟨V|^{⊗n} : V ∈ 𝕍_iso(d, D)}`.
#[derive(Clone, Debug)]
pub struct IsometrySpanBasis {
    pub d: usize,
    pub big_d: usize,
    pub n: usize,
    pub isometries: Vec<CMatrix>,
    pub rank: usize,
    /// Five consecutive fresh samples did not increase the rank.
    pub saturated: bool,
    /// Smallest pivot of the normalized Gram matrix.
    pub min_pivot: f64,
}

/// Normalized overlap `|Tr(V†W)/d|^{2n}` of `|V⟩⟩⟨⟨V|^{⊗n}` and `|W⟩⟩⟨⟨W|^{⊗n}`.
fn span_overlap(v: &CMatrix, w: &CMatrix, n: usize) -> f64 {
    let t: C64 = v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
    (t.norm() / v.ncols() as f64).powi(2 * n as i32)
}

/// Greedy Haar sampling with an incremental Cholesky factor of the Gram
/// matrix; stops after five consecutive rejected samples.
pub fn isometry_span_basis(d: usize, big_d: usize, n: usize, rng: &mut RandomSource) -> Result<IsometrySpanBasis> {
    if d == 0 || big_d < d || n == 0 {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D and n >= 1, got d={d}, D={big_d}, n={n}")));
    }
    let ambient = (d * big_d).pow(2 * n as u32);
    let cap = 4 * ambient;
    let mut isos: Vec<CMatrix> = Vec::new();
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let mut misses = 0;
    let mut min_pivot = f64::INFINITY;
    let mut tries = 0;
    while misses < 5 && isos.len() < ambient {
        tries += 1;
        if tries > cap {
            return Err(HoqtError::NonConvergence(format!(
                "isometry span basis did not saturate after {cap} samples (rank {})",
                isos.len()
            )));
        }
        let v = haar_isometry(d, big_d, rng)?.into_entries();
        let g: Vec<f64> = isos.iter().map(|w| span_overlap(w, &v, n)).collect();
        let mut y = vec![0.0; g.len()];
        for i in 0..g.len() {
            let s: f64 = (0..i).map(|j| chol[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / chol[i][i];
        }
        let pivot = 1.0 - y.iter().map(|x| x * x).sum::<f64>();
        if pivot > 1e-9 {
            budget::check_complex((isos.len() + 1).pow(2) / 2, "isometry span Gram factor")?;
            let root = pivot.sqrt();
            min_pivot = min_pivot.min(pivot);
            y.push(root);
            chol.push(y);
            isos.push(v);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    let rank = isos.len();
    Ok(IsometrySpanBasis { d, big_d, n, isometries: isos, rank, saturated: true, min_pivot })
}

impl IsometrySpanBasis {
    /// Keep only the first `keep` isometries (used for negative controls).
    pub fn truncated(&self, keep: usize) -> Self {
        let isometries: Vec<CMatrix> = self.isometries.iter().take(keep).cloned().collect();
        IsometrySpanBasis { rank: isometries.len(), isometries, saturated: false, ..self.clone() }
    }
}

// --------------------------------------------------------------------------
// Task layout

#[derive(Clone, Copy, Debug, PartialEq)]
enum Role {
    /// Left open; part of the output operator.
    Open,
    SlotIn(usize),
    SlotOut(usize),
    /// Linked with `|V⟩⟩` whose input leg becomes the external system.
    Paired,
}

/// Wire roles and dimensions of one task.
#[derive(Clone, Debug)]
struct Layout {
    task: Task,
    d: usize,
    big_d: usize,
    k: usize,
    sig: SlotSignature,
    roles: Vec<Role>,
    ext_dim: usize,
}

fn layout(task: Task, d: usize, big_d: usize, k: usize) -> Result<Layout> {
    if d == 0 || big_d < d || k == 0 {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D and k >= 1, got d={d}, D={big_d}, k={k}")));
    }
    let (dp, df) = match task {
        Task::Inversion | Task::Transposition => (big_d, d),
        Task::PseudoCc | Task::Cc => (d, big_d),
        Task::SuccessOrDraw => (big_d, big_d),
    };
    let sig = SlotSignature::uniform(dp, d, big_d, df, k)?;
    let mut roles = vec![match task {
        Task::Inversion | Task::SuccessOrDraw => Role::Paired,
        _ => Role::Open,
    }];
    for j in 0..k {
        roles.push(Role::SlotIn(j));
        roles.push(Role::SlotOut(j));
    }
    roles.push(if task == Task::PseudoCc { Role::Paired } else { Role::Open });
    let ext_dim = if roles.contains(&Role::Paired) { d } else { 1 };
    Ok(Layout { task, d, big_d, k, sig, roles, ext_dim })
}

impl Layout {
    fn dims(&self) -> Vec<usize> {
        self.sig.spaces().iter().map(|s| s.dim).collect()
    }

    /// `n` of the spanning set.
    fn span_power(&self) -> usize {
        match self.task {
            Task::Cc | Task::Transposition => self.k,
            _ => self.k + 1,
        }
    }

    /// Output order: external system first, then the open wires.
    fn out_dims(&self) -> Vec<usize> {
        let dims = self.dims();
        let mut v = vec![self.ext_dim];
        v.extend(self.roles.iter().zip(&dims).filter(|(r, _)| **r == Role::Open).map(|(_, d)| *d));
        v
    }

    fn out_dim(&self) -> usize {
        self.out_dims().iter().product()
    }

    fn group(&self) -> Result<GroupAction> {
        let (d, big_d) = (self.d, self.big_d);
        let n = self.roles.len();
        let mut wires = Vec::with_capacity(n);
        let factors;
        match self.task {
            Task::Inversion => {
                factors = vec![d, big_d];
                for (w, r) in self.roles.iter().enumerate() {
                    wires.push(match r {
                        Role::SlotIn(_) => WireAction::full(0, d, false),
                        _ if w == n - 1 => WireAction::full(0, d, false),
                        _ => WireAction::full(1, big_d, true),
                    });
                }
            }
            Task::Transposition => {
                factors = vec![d, big_d];
                for (w, r) in self.roles.iter().enumerate() {
                    wires.push(match r {
                        Role::SlotIn(_) => WireAction::full(0, d, false),
                        Role::SlotOut(_) => WireAction::full(1, big_d, true),
                        _ if w == 0 => WireAction::full(1, big_d, false),
                        _ => WireAction::full(0, d, true),
                    });
                }
            }
            Task::Cc | Task::PseudoCc => {
                factors = vec![d, big_d];
                for (w, r) in self.roles.iter().enumerate() {
                    wires.push(match r {
                        Role::SlotIn(_) => WireAction::full(0, d, false),
                        _ if w == 0 => WireAction::full(0, d, false),
                        _ => WireAction::full(1, big_d, true),
                    });
                }
            }
            Task::SuccessOrDraw => {
                let rest = big_d - d;
                factors = if rest > 0 { vec![d, rest] } else { vec![d] };
                let big = |dual: bool| {
                    if rest > 0 {
                        WireAction::split(0, 1, d, big_d, dual)
                    } else {
                        WireAction::full(0, d, dual)
                    }
                };
                for (w, r) in self.roles.iter().enumerate() {
                    wires.push(match r {
                        Role::SlotIn(_) => WireAction::full(0, d, false),
                        _ if w == n - 1 => big(false),
                        _ => big(true),
                    });
                }
            }
        }
        GroupAction::new(factors, wires)
    }

    /// `|t⟩` of the rank-one target, on the output order.
    fn target(&self, v: &CMatrix, failure: bool) -> Vec<C64> {
        let od = self.out_dims();
        let size: usize = od.iter().product();
        let mut t = vec![ZERO; size];
        let one = C64::new(1.0, 0.0);
        match (self.task, failure) {
            (Task::Inversion, _) | (Task::PseudoCc, _) => {
                for i in 0..self.d {
                    t[i * self.d + i] = one;
                }
            }
            (Task::SuccessOrDraw, false) => {
                for i in 0..self.d {
                    t[i * self.big_d + i] = one;
                }
            }
            (Task::SuccessOrDraw, true) => {
                for e in 0..self.d {
                    for f in 0..self.big_d {
                        t[e * self.big_d + f] = v[(f, e)];
                    }
                }
            }
            (Task::Cc, _) => {
                for p in 0..self.d {
                    for f in 0..self.big_d {
                        t[p * self.big_d + f] = v[(f, p)].conj();
                    }
                }
            }
            (Task::Transposition, _) => {
                for p in 0..self.big_d {
                    for f in 0..self.d {
                        t[p * self.d + f] = v[(p, f)];
                    }
                }
            }
        }
        t
    }

    /// Vectors `α_u` with `(S ⋆ probe(V))_{u u'} = ⟨α_u|S|α_{u'}⟩`, as columns.
    fn probe_vectors(&self, v: &CMatrix) -> CMatrix {
        let dims = self.dims();
        let n: usize = dims.iter().product();
        let od = self.out_dims();
        let out: usize = od.iter().product();
        let mut alpha = CMatrix::zeros(n, out);
        let mut digits = vec![0usize; dims.len()];
        for idx in 0..n {
            let mut rest = idx;
            for w in (0..dims.len()).rev() {
                digits[w] = rest % dims[w];
                rest /= dims[w];
            }
            let mut base = C64::new(1.0, 0.0);
            let mut open = 0usize;
            let mut paired = None;
            let mut ins = vec![0usize; self.k];
            let mut outs = vec![0usize; self.k];
            for (w, r) in self.roles.iter().enumerate() {
                match r {
                    Role::Open => open = open * dims[w] + digits[w],
                    Role::SlotIn(j) => ins[*j] = digits[w],
                    Role::SlotOut(j) => outs[*j] = digits[w],
                    Role::Paired => paired = Some(digits[w]),
                }
            }
            for j in 0..self.k {
                base *= v[(outs[j], ins[j])];
            }
            if base == ZERO {
                continue;
            }
            let open_size = out / self.ext_dim;
            for e in 0..self.ext_dim {
                let w = match paired {
                    Some(x) => base * v[(x, e)],
                    None => base,
                };
                alpha[(idx, e * open_size + open)] = w.conj();
            }
        }
        alpha
    }

    /// `(S ⋆ probe(V))` through the generic link product, output order.
    fn link_probe(&self, s: &LabeledOperator, v: &CMatrix) -> Result<LabeledOperator> {
        let spaces = self.sig.spaces();
        let mut ket: Option<LabeledOperator> = None;
        let dual = |in_lbl: &str, out_lbl: &str, in_dim: usize, out_dim: usize| -> Result<LabeledOperator> {
            let amps: Vec<C64> = (0..in_dim * out_dim).map(|r| v[(r % out_dim, r / out_dim)]).collect();
            LabeledOperator::ket(vec![Space::new(in_lbl, in_dim), Space::new(out_lbl, out_dim)], amps)
        };
        for (w, r) in self.roles.iter().enumerate() {
            let piece = match r {
                Role::SlotIn(_) => Some(dual(&spaces[w].label, &spaces[w + 1].label, self.d, self.big_d)?),
                Role::Paired => {
                    Some(dual("Ext", &spaces[w].label, self.d, self.big_d)?)
                }
                _ => None,
            };
            if let Some(p) = piece {
                ket = Some(match ket {
                    None => p,
                    Some(k) => crate::tensor::kron(&k, &p)?,
                });
            }
        }
        let ket = ket.ok_or_else(|| HoqtError::InvalidArgument("empty probe".into()))?;
        let probe = ket.mul(&ket.dagger())?;
        let res = link_product(s, &probe)?;
        let mut order: Vec<String> = Vec::new();
        if self.ext_dim > 1 {
            order.push("Ext".into());
        }
        for (w, r) in self.roles.iter().enumerate() {
            if *r == Role::Open {
                order.push(spaces[w].label.clone());
            }
        }
        let order: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
        res.permute_systems(&order)
    }
}

// --------------------------------------------------------------------------
// Hermitian coordinates

/// Orthonormal Hermitian basis of `m × m` matrices: diagonal units, then
/// for `a < b` the symmetric and antisymmetric pairs.
fn herm_basis(m: usize) -> Vec<(u8, usize, usize)> {
    let mut v: Vec<(u8, usize, usize)> = (0..m).map(|a| (0, a, a)).collect();
    for a in 0..m {
        for b in a + 1..m {
            v.push((1, a, b));
            v.push((2, a, b));
        }
    }
    v
}

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `Tr(B_j K)` for every basis element.
fn herm_pair(m: usize, k: &CMatrix) -> Vec<C64> {
    herm_basis(m)
        .into_iter()
        .map(|(kind, a, b)| match kind {
            0 => k[(a, a)],
            1 => (k[(b, a)] + k[(a, b)]) * SQRT_HALF,
            _ => (k[(b, a)] - k[(a, b)]) * C64::new(0.0, SQRT_HALF),
        })
        .collect()
}

fn herm_from(m: usize, coeffs: &[f64]) -> CMatrix {
    let mut x = CMatrix::zeros(m, m);
    for ((kind, a, b), &c) in herm_basis(m).into_iter().zip(coeffs) {
        match kind {
            0 => x[(a, a)] += C64::new(c, 0.0),
            1 => {
                x[(a, b)] += C64::new(c * SQRT_HALF, 0.0);
                x[(b, a)] += C64::new(c * SQRT_HALF, 0.0);
            }
            _ => {
                x[(a, b)] += C64::new(0.0, c * SQRT_HALF);
                x[(b, a)] -= C64::new(0.0, c * SQRT_HALF);
            }
        }
    }
    x
}

fn herm_coords(x: &CMatrix) -> Vec<f64> {
    herm_pair(x.nrows(), x).into_iter().map(|c| c.re).collect()
}

// --------------------------------------------------------------------------
// Problem

/// Branch of a superinstrument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    S,
    F,
}

/// One PSD block of the reduced problem: `size × size` Hermitian, repeated
/// `weight` times in the full operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub branch: Branch,
    pub size: usize,
    pub weight: usize,
}

/// Whether to restrict the variables to the commutant of the task symmetry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Symmetric,
    None,
}

/// Variables of one branch: a face of the symmetric commutant,
/// `X = ⊕_λ W_λ Y_λ W_λ† ⊗ 1`, in scaled Hermitian coordinates.
#[derive(Clone, Debug)]
struct Face {
    red: SymmetryReduction,
    offsets: Vec<usize>,
    len: usize,
}

impl Face {
    fn new(red: SymmetryReduction) -> Self {
        let mut offsets = Vec::with_capacity(red.blocks.len());
        let mut len = 0;
        for b in &red.blocks {
            offsets.push(len);
            len += b.multiplicity * b.multiplicity;
        }
        Face { red, offsets, len }
    }

    fn sqrt_dim(&self, l: usize) -> f64 {
        (self.red.blocks[l].dim as f64).sqrt()
    }

    /// Coordinates of the functional `X ↦ Tr(X Q)` given `R_λ(Q)`.
    fn functional(&self, reduced: &[CMatrix]) -> Vec<C64> {
        let mut row = vec![ZERO; self.len];
        for (l, r) in reduced.iter().enumerate() {
            let w = self.sqrt_dim(l);
            for (j, v) in herm_pair(self.red.blocks[l].multiplicity, r).into_iter().enumerate() {
                row[self.offsets[l] + j] = v / w;
            }
        }
        row
    }

    fn block_matrices(&self, y: &[f64]) -> Vec<CMatrix> {
        self.red
            .blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let m = b.multiplicity;
                let w = self.sqrt_dim(l);
                let coeffs: Vec<f64> = y[self.offsets[l]..self.offsets[l] + m * m].iter().map(|x| x / w).collect();
                herm_from(m, &coeffs)
            })
            .collect()
    }

    fn expand(&self, y: &[f64]) -> CMatrix {
        self.red.expand(&self.block_matrices(y))
    }

    /// Scaled coordinates of an operator lying in the full commutant `sym`.
    fn commutant_coords(sym: &SymmetryReduction, x: &CMatrix) -> Vec<f64> {
        let mut out = Vec::new();
        for (b, xb) in sym.blocks.iter().zip(sym.blocks_of(x)) {
            let w = (b.dim as f64).sqrt();
            out.extend(herm_coords(&xb).into_iter().map(|c| c * w));
        }
        out
    }
}

/// `max p` over `z = (y_S, y_F, p)` subject to `rows · z = rhs` and every
/// block PSD. Block coordinates are scaled so that the Euclidean norm of a
/// branch's coordinates equals the Frobenius norm of the full operator.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub task: Task,
    pub class: CombClass,
    pub d: usize,
    pub big_d: usize,
    pub k: usize,
    pub reduction: Reduction,
    pub signature: SlotSignature,
    pub blocks: Vec<BlockSpec>,
    pub n_vars: usize,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `basis size × (output Choi dimension)²` per constrained branch.
    pub raw_equality_count: usize,
    pub basis_size: usize,
    face_s: Face,
    face_f: Face,
    layout: Layout,
}

/// Streaming accumulation of `AᵀA`, `Aᵀb`, `bᵀb` over unit-normalized rows.
struct NormalEquations {
    n: usize,
    chunk: Vec<f64>,
    chunk_rhs: Vec<f64>,
    ata: DMatrix<f64>,
    atb: DVector<f64>,
    btb: f64,
}

impl NormalEquations {
    const CHUNK: usize = 256;

    fn new(n: usize) -> Self {
        NormalEquations { n, chunk: Vec::new(), chunk_rhs: Vec::new(), ata: DMatrix::zeros(n, n), atb: DVector::zeros(n), btb: 0.0 }
    }

    fn push(&mut self, row: &[f64], rhs: f64) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return;
        }
        self.chunk.extend(row.iter().map(|x| x / norm));
        self.chunk_rhs.push(rhs / norm);
        if self.chunk_rhs.len() == Self::CHUNK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let r = self.chunk_rhs.len();
        if r == 0 {
            return;
        }
        let a = DMatrix::from_row_slice(r, self.n, &self.chunk);
        let b = DVector::from_column_slice(&self.chunk_rhs);
        self.ata += real_gram(&a);
        self.atb += a.transpose() * &b;
        self.btb += b.norm_squared();
        self.chunk.clear();
        self.chunk_rhs.clear();
    }

    /// Orthonormal rows spanning the constraint row space, their right-hand
    /// side and the least-squares inconsistency.
    fn finish(mut self) -> (DMatrix<f64>, DVector<f64>, f64) {
        self.flush();
        let (vals, vecs) = linalg::sym_eig(&self.ata);
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-10 * top.max(1.0)).collect();
        let u = DMatrix::from_fn(self.n, keep.len(), |r, c| vecs[(r, keep[c])]);
        let proj = u.transpose() * &self.atb;
        let coef = DVector::from_fn(keep.len(), |i, _| proj[i] / vals[keep[i]]);
        let z0 = &u * &coef;
        let res2 = self.btb - 2.0 * z0.dot(&self.atb) + (&self.ata * &z0).dot(&z0);
        // Uᵀz = Uᵀz₀ and z₀ = U·coef
        (u.transpose(), coef, res2.max(0.0).sqrt())
    }
}

fn real_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let v = faer::MatRef::from_column_major_slice(a.as_slice(), a.nrows(), n);
    let g = v.transpose() * v;
    DMatrix::from_fn(n, n, |i, j| g[(i, j)])
}

/// Build the SDP for `task` with `k` calls of `V ∈ 𝕍_iso(d, D)` over `class`.
pub fn build_task_sdp(task: Task, d: usize, big_d: usize, k: usize, class: CombClass, basis: &IsometrySpanBasis) -> Result<SdpProblem> {
    build_task_sdp_with(task, d, big_d, k, class, basis, Reduction::Symmetric)
}

pub fn build_task_sdp_with(
    task: Task,
    d: usize,
    big_d: usize,
    k: usize,
    class: CombClass,
    basis: &IsometrySpanBasis,
    reduction: Reduction,
) -> Result<SdpProblem> {
    let lay = layout(task, d, big_d, k)?;
    if basis.d != d || basis.big_d != big_d || basis.n != lay.span_power() {
        return Err(HoqtError::DimensionMismatch(format!(
            "basis is for (d, D, n) = ({}, {}, {}), task needs ({d}, {big_d}, {})",
            basis.d,
            basis.big_d,
            basis.n,
            lay.span_power()
        )));
    }
    let dims = lay.dims();
    let total: usize = dims.iter().product();
    budget::check_complex(total * total * 4, "SDP operators")?;
    let sym = match reduction {
        Reduction::Symmetric => SymmetryReduction::build(&lay.group()?)?,
        Reduction::None => SymmetryReduction::build(&GroupAction::none(&dims))?,
    };
    let out = lay.out_dim();
    let branches: &[Branch] = if task == Task::SuccessOrDraw { &[Branch::S, Branch::F] } else { &[Branch::S] };

    // ⟨γ|X|γ⟩ = 0 for every probe combination γ orthogonal to the rank-one
    // target, so X vanishes on their span; restrict each branch to the
    // complementary face.
    let mut grams: Vec<Vec<CMatrix>> = branches
        .iter()
        .map(|_| sym.blocks.iter().map(|b| CMatrix::zeros(b.multiplicity, b.multiplicity)).collect())
        .collect();
    for v in &basis.isometries {
        let alpha = lay.probe_vectors(v);
        for (bi, &br) in branches.iter().enumerate() {
            let t = lay.target(v, br == Branch::F);
            let tn: f64 = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let that = CMatrix::from_fn(out, 1, |i, _| t[i] / tn);
            let perp = CMatrix::identity(out, out) - &that * that.adjoint();
            let gamma = linalg::matmul(&alpha, &perp);
            let proj: Vec<CMatrix> = sym.blocks.iter().map(|b| linalg::matmul_adj(&b.basis, &gamma)).collect();
            for (g, r) in grams[bi].iter_mut().zip(sym.reduce_gram(&proj)) {
                *g += r;
            }
        }
    }
    let face_of = |gram: Option<&Vec<CMatrix>>| -> Face {
        let Some(gram) = gram else { return Face::new(sym.clone()) };
        let top = gram.iter().flat_map(linalg::herm_eigenvalues).fold(0.0, f64::max).max(1.0);
        let ws: Vec<CMatrix> = gram
            .iter()
            .map(|g| {
                let (vals, vecs) = linalg::herm_eig(g);
                let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] < 1e-9 * top).collect();
                CMatrix::from_fn(g.nrows(), keep.len(), |r, c| vecs[(r, keep[c])])
            })
            .collect();
        Face::new(sym.restrict(&ws))
    };
    let face_s = face_of(grams.first());
    let face_f = face_of(if task == Task::SuccessOrDraw { grams.get(1) } else { None });
    let (ms, mf) = (face_s.len, face_f.len);
    let n_vars = ms + mf + 1;
    budget::check_complex(n_vars * n_vars, "SDP normal equations")?;
    let p_idx = n_vars - 1;

    let mut eqs = NormalEquations::new(n_vars);
    let mut row = vec![0.0; n_vars];

    // task equalities on the spanning set
    for v in &basis.isometries {
        let alpha = lay.probe_vectors(v);
        for &br in branches {
            let (face, off) = if br == Branch::S { (&face_s, 0) } else { (&face_f, ms) };
            let proj: Vec<CMatrix> = face.red.blocks.iter().map(|b| linalg::matmul_adj(&b.basis, &alpha)).collect();
            let cols: Vec<Vec<Vec<C64>>> =
                (0..out).map(|u| proj.iter().map(|p| p.column(u).iter().cloned().collect()).collect()).collect();
            let t = lay.target(v, br == Branch::F);
            for u in 0..out {
                for u2 in u..out {
                    // ⟨α_u|X|α_{u2}⟩ = Tr(X |α_{u2}⟩⟨α_u|)
                    let f = face.functional(&face.red.reduce_rank1(&cols[u2], &cols[u]));
                    let tv = t[u] * t[u2].conj();
                    for part in 0..2 {
                        if u == u2 && part == 1 {
                            continue;
                        }
                        let pick = |c: C64| if part == 0 { c.re } else { c.im };
                        row.iter_mut().for_each(|x| *x = 0.0);
                        for (j, fj) in f.iter().enumerate() {
                            row[off + j] = pick(*fj);
                        }
                        let (pc, rhs) = match br {
                            Branch::S => (-pick(tv), 0.0),
                            Branch::F => (pick(tv), pick(tv)),
                        };
                        row[p_idx] = pc;
                        eqs.push(&row, rhs);
                    }
                }
            }
        }
    }

    // comb constraints on C = S + F, in full commutant coordinates
    let cons = comb_constraints(class, &lay.sig)?;
    let spaces = lay.sig.spaces();
    let map_columns = |face: &Face| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut columns = Vec::with_capacity(face.len);
        let mut traces = Vec::with_capacity(face.len);
        for j in 0..face.len {
            let mut unit = vec![0.0; face.len];
            unit[j] = 1.0;
            let x = face.expand(&unit);
            traces.push(x.trace().re);
            let full = LabeledOperator::square(spaces.clone(), x)?;
            let mut col = Vec::new();
            for map in &cons.maps {
                col.extend(Face::commutant_coords(&sym, map.apply(&full)?.entries()));
            }
            columns.push(col);
        }
        Ok((columns, traces))
    };
    let (cols_s, tr_s) = map_columns(&face_s)?;
    let (cols_f, tr_f) = map_columns(&face_f)?;
    let n_rows = cols_s.first().or(cols_f.first()).map_or(0, |c| c.len());
    for i in 0..n_rows {
        row.iter_mut().for_each(|x| *x = 0.0);
        for (j, c) in cols_s.iter().enumerate() {
            row[j] = c[i];
        }
        for (j, c) in cols_f.iter().enumerate() {
            row[ms + j] = c[i];
        }
        eqs.push(&row, 0.0);
    }
    row.iter_mut().for_each(|x| *x = 0.0);
    row[..ms].copy_from_slice(&tr_s);
    row[ms..ms + mf].copy_from_slice(&tr_f);
    eqs.push(&row, cons.trace);

    let (rows, rhs, inconsistency) = eqs.finish();
    if inconsistency > 1e-6 * cons.trace.max(1.0) {
        return Err(HoqtError::Verification(format!("task equalities are inconsistent (residual {inconsistency:.2e})")));
    }
    let mut blocks = Vec::new();
    for (br, face) in [(Branch::S, &face_s), (Branch::F, &face_f)] {
        for b in &face.red.blocks {
            blocks.push(BlockSpec { branch: br, size: b.multiplicity, weight: b.dim });
        }
    }
    Ok(SdpProblem {
        task,
        class,
        d,
        big_d,
        k,
        reduction,
        signature: lay.sig.clone(),
        blocks,
        n_vars,
        rows,
        rhs,
        raw_equality_count: basis.rank * out * out * branches.len(),
        basis_size: basis.rank,
        face_s,
        face_f,
        layout: lay,
    })
}

impl SdpProblem {
    /// Number of independent equality constraints after compression.
    pub fn equality_rank(&self) -> usize {
        self.rows.nrows()
    }

    /// Side of the full `S` and `F` operators.
    pub fn full_dim(&self) -> usize {
        self.face_s.red.n
    }

    /// Same problem with every equality row and right-hand side scaled.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.rows *= factor;
        p.rhs *= factor;
        p
    }

    fn split<'a>(&self, z: &'a [f64], branch: Branch) -> (&Face, &'a [f64]) {
        let ms = self.face_s.len;
        match branch {
            Branch::S => (&self.face_s, &z[..ms]),
            Branch::F => (&self.face_f, &z[ms..ms + self.face_f.len]),
        }
    }

    fn block_matrices(&self, z: &[f64], branch: Branch) -> Vec<CMatrix> {
        let (face, y) = self.split(z, branch);
        face.block_matrices(y)
    }

    /// Full `S` or `F` on the canonical slot layout.
    pub fn expand(&self, z: &[f64], branch: Branch) -> Result<LabeledOperator> {
        let (face, y) = self.split(z, branch);
        LabeledOperator::square(self.signature.spaces(), face.expand(y))
    }

    /// Serializable description (schema 1).
    pub fn record(&self) -> ProblemRecord {
        let mut triplets = Vec::new();
        for i in 0..self.rows.nrows() {
            for j in 0..self.rows.ncols() {
                let v = self.rows[(i, j)];
                if v.abs() > 1e-15 {
                    triplets.push((i, j, v));
                }
            }
        }
        ProblemRecord {
            schema: SCHEMA_VERSION,
            task: self.task,
            comb: self.class,
            d: self.d,
            big_d: self.big_d,
            k: self.k,
            reduction: self.reduction,
            full_dim: self.full_dim(),
            n_vars: self.n_vars,
            objective_index: self.n_vars - 1,
            blocks: self.blocks.clone(),
            equalities: EqualityRecord {
                rows: self.rows.nrows(),
                cols: self.rows.ncols(),
                triplets,
                rhs: self.rhs.iter().cloned().collect(),
            },
            raw_equality_count: self.raw_equality_count,
            basis_size: self.basis_size,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EqualityRecord {
    pub rows: usize,
    pub cols: usize,
    /// `(row, column, value)` of the nonzero coefficients.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub schema: u32,
    pub task: Task,
    pub comb: CombClass,
    pub d: usize,
    #[serde(rename = "D")]
    pub big_d: usize,
    pub k: usize,
    pub reduction: Reduction,
    pub full_dim: usize,
    pub n_vars: usize,
    /// The objective is `max z[objective_index]`.
    pub objective_index: usize,
    pub blocks: Vec<BlockSpec>,
    pub equalities: EqualityRecord,
    pub raw_equality_count: usize,
    pub basis_size: usize,
}

// --------------------------------------------------------------------------
// Solver

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-7, max_iter: 200_000, rho: 1.0, alpha: 1.6 }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub p: f64,
    /// Affine-feasible iterate `(y_S, y_F, p)`.
    pub z: Vec<f64>,
    /// `‖x − s‖` between the affine and conic iterates.
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|p − p_dual|` with `p_dual` the bound from the scaled dual iterate.
    pub gap: f64,
    pub p_dual: f64,
    pub min_eig: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    pub tol: f64,
}

fn orthonormal_rows(rows: &DMatrix<f64>, rhs: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let r = rows.nrows();
    if r == 0 {
        return (rows.clone(), rhs.clone());
    }
    let g = real_gram(&rows.transpose());
    let dev = (&g - DMatrix::identity(r, r)).norm();
    if dev < 1e-10 {
        return (rows.clone(), rhs.clone());
    }
    let (vals, vecs) = linalg::sym_eig(&g);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..r).filter(|&i| vals[i] > 1e-12 * top).collect();
    let w = DMatrix::from_fn(r, keep.len(), |i, c| vecs[(i, keep[c])] / vals[keep[c]].sqrt());
    (w.transpose() * rows, w.transpose() * rhs)
}

/// Conic form shared by every task: Hermitian PSD blocks of the given sizes
/// in the coordinates of [`herm_basis`], followed by the free scalar `p`;
/// maximize `p` subject to `rows · z = rhs`.
#[derive(Clone, Debug)]
pub struct ConicProblem {
    pub block_sizes: Vec<usize>,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl ConicProblem {
    pub fn n_vars(&self) -> usize {
        self.block_sizes.iter().map(|m| m * m).sum::<usize>() + 1
    }

    /// Project onto the cone in place; returns the smallest eigenvalue seen.
    fn project(&self, v: &mut [f64]) -> f64 {
        let mut min_eig = f64::INFINITY;
        let mut off = 0;
        for &m in &self.block_sizes {
            let range = off..off + m * m;
            let x = herm_from(m, &v[range.clone()]);
            let (vals, vecs) = linalg::herm_eig(&x);
            min_eig = min_eig.min(vals.first().copied().unwrap_or(0.0));
            if vals.first().is_some_and(|&l| l < 0.0) {
                let scaled = CMatrix::from_fn(m, m, |r, c| vecs[(r, c)] * vals[c].max(0.0));
                v[range].copy_from_slice(&herm_coords(&(&scaled * vecs.adjoint())));
            }
            off += m * m;
        }
        min_eig
    }
}

impl SdpProblem {
    pub fn conic(&self) -> ConicProblem {
        let block_sizes = self.face_s.red.blocks.iter().chain(&self.face_f.red.blocks).map(|b| b.multiplicity).collect();
        ConicProblem { block_sizes, rows: self.rows.clone(), rhs: self.rhs.clone() }
    }
}

/// Solve the task SDP; see [`solve_conic`].
pub fn solve_sdp(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    solve_conic(&problem.conic(), opts)
}

/// Relaxed ADMM on `min −p` over `{rows·z = rhs} ∩ (PSD blocks × ℝ)`.
///
/// The affine step is an exact orthogonal projection, so every returned
/// iterate satisfies the equalities to rounding; `primal_residual` measures
/// the distance to the cone. Starts from zero and is fully deterministic.
pub fn solve_conic(problem: &ConicProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let start = Instant::now();
    let n = problem.n_vars();
    if problem.rows.ncols() != n || problem.rhs.len() != problem.rows.nrows() {
        return Err(HoqtError::DimensionMismatch(format!(
            "{} variables but constraint matrix is {}×{} with {} right-hand sides",
            n,
            problem.rows.nrows(),
            problem.rows.ncols(),
            problem.rhs.len()
        )));
    }
    let (q, c) = orthonormal_rows(&problem.rows, &problem.rhs);
    let qt = q.transpose();
    let z0 = &qt * &c;
    if (&q * &z0 - &c).norm() > 1e-8 * (1.0 + c.norm()) {
        return Err(HoqtError::Verification("equality constraints are inconsistent".into()));
    }
    let proj_affine = |v: &DVector<f64>| -> DVector<f64> {
        let viol = &q * v - &c;
        v - &qt * viol
    };
    let mut obj = DVector::zeros(n);
    obj[n - 1] = -1.0;
    let mut rho = opts.rho;
    let mut s = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    let mut x: DVector<f64> = DVector::zeros(n);
    // dual estimate from the scaled multiplier: y = Π_K*(−ρu), with the part
    // of c − y outside the constraint row space dropped
    let dual_estimate = |u: &DVector<f64>, rho: f64| -> f64 {
        let mut y: Vec<f64> = (-u * rho).iter().cloned().collect();
        problem.project(&mut y);
        y[n - 1] = 0.0;
        let w = &obj - DVector::from_vec(y);
        -(&qt * (&q * &w)).dot(&z0)
    };
    let mut iterations = 0;
    let mut converged = false;
    let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);
    while iterations < opts.max_iter {
        iterations += 1;
        x = proj_affine(&(&s - &u - &obj / rho));
        let xh = &x * opts.alpha + &s * (1.0 - opts.alpha);
        let s_prev = s.clone();
        let mut cand: Vec<f64> = (&xh + &u).iter().cloned().collect();
        problem.project(&mut cand);
        s = DVector::from_vec(cand);
        u += &xh - &s;
        r_prim = (&x - &s).norm();
        r_dual = rho * (&s - &s_prev).norm();
        if !r_prim.is_finite() || x.norm() > 1e12 {
            return Err(HoqtError::NonConvergence(format!(
                "iterates diverged after {iterations} iterations; the problem looks unbounded or infeasible"
            )));
        }
        if r_prim < opts.tol && r_dual < opts.tol && (x[n - 1] - dual_estimate(&u, rho)).abs() <= opts.tol {
            converged = true;
            break;
        }
        if iterations % 50 == 0 {
            if r_prim > 10.0 * r_dual {
                rho *= 2.0;
                u /= 2.0;
            } else if r_dual > 10.0 * r_prim {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let p_dual = dual_estimate(&u, rho);
    let z: Vec<f64> = x.iter().cloned().collect();
    let p = z[n - 1];
    let gap = (p - p_dual).abs();
    let mut probe = z.clone();
    Ok(SdpSolution {
        p,
        min_eig: problem.project(&mut probe),
        z,
        primal_residual: r_prim,
        dual_residual: r_dual,
        gap,
        p_dual,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
        converged,
        tol: opts.tol,
    })
}

impl SdpSolution {
    pub fn record(&self, problem: &SdpProblem) -> SolutionRecord {
        let encode = |branch: Branch| -> Vec<String> {
            problem
                .block_matrices(&self.z, branch)
                .iter()
                .map(|m| {
                    let mut bytes = Vec::with_capacity(m.len() * 16);
                    for i in 0..m.nrows() {
                        for j in 0..m.ncols() {
                            bytes.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                            bytes.extend_from_slice(&m[(i, j)].im.to_le_bytes());
                        }
                    }
                    base64::engine::general_purpose::STANDARD.encode(bytes)
                })
                .collect()
        };
        SolutionRecord {
            schema: SCHEMA_VERSION,
            p: self.p,
            p_dual: self.p_dual,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            gap: self.gap,
            min_eig: self.min_eig,
            iterations: self.iterations,
            seconds: self.seconds,
            converged: self.converged,
            s_blocks: encode(Branch::S),
            f_blocks: encode(Branch::F),
        }
    }
}

/// Solution record; blocks are row-major little-endian `f64` pairs
/// `(re, im)`, base64 encoded, in the order of `ProblemRecord::blocks`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub schema: u32,
    pub p: f64,
    pub p_dual: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub min_eig: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    pub s_blocks: Vec<String>,
    pub f_blocks: Vec<String>,
}

/// Decode one block of a [`SolutionRecord`].
pub fn decode_block(data: &str, size: usize) -> Result<CMatrix> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| HoqtError::Serialization(e.to_string()))?;
    if bytes.len() != size * size * 16 {
        return Err(HoqtError::Serialization(format!("block has {} bytes, expected {}", bytes.len(), size * size * 16)));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    Ok(CMatrix::from_fn(size, size, |i, j| {
        let o = (i * size + j) * 16;
        C64::new(f(o), f(o + 8))
    }))
}

// --------------------------------------------------------------------------
// Verification

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub superinstrument: SuperinstrumentReport,
    /// Largest `‖S ⋆ probe(V) − p·target(V)‖_F` over the fresh isometries
    /// (and the failure-branch analogue for success-or-draw).
    pub fresh_residual: f64,
    pub fresh_samples: usize,
    pub passed: bool,
}

/// Rebuild `{S, F}`, validate the superinstrument and re-check the task
/// equalities on `samples` fresh Haar isometries via the link product.
pub fn extract_and_verify(
    problem: &SdpProblem,
    solution: &SdpSolution,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<(Superinstrument, VerificationReport)> {
    let s = problem.expand(&solution.z, Branch::S)?;
    let f = problem.expand(&solution.z, Branch::F)?;
    let si = Superinstrument::new(s.clone(), f.clone(), problem.class, problem.signature.clone())?;
    let norm = solution.z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 10.0 * (solution.tol * (1.0 + norm)).max(solution.primal_residual);
    let report = validate_superinstrument(&si, tol)?;
    let lay = &problem.layout;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let v = haar_isometry(problem.d, problem.big_d, rng)?.into_entries();
        let check = |op: &LabeledOperator, coef: f64, failure: bool| -> Result<f64> {
            let got = lay.link_probe(op, &v)?;
            let t = lay.target(&v, failure);
            let want = CMatrix::from_fn(t.len(), t.len(), |i, j| t[i] * t[j].conj() * coef);
            Ok(crate::tensor::frob_dist(got.entries(), &want))
        };
        worst = worst.max(check(&s, solution.p, false)?);
        if problem.task == Task::SuccessOrDraw {
            worst = worst.max(check(&f, 1.0 - solution.p, true)?);
        }
    }
    let passed = report.passed && worst <= tol;
    Ok((si, VerificationReport { superinstrument: report, fresh_residual: worst, fresh_samples: samples, passed }))
}

/// Build, solve and return `(problem, solution)` with a fresh span basis.
pub fn optimal_success(task: Task, d: usize, big_d: usize, k: usize, class: CombClass, seed: u64, opts: &SolverOptions) -> Result<(SdpProblem, SdpSolution)> {
    let lay = layout(task, d, big_d, k)?;
    let basis = isometry_span_basis(d, big_d, lay.span_power(), &mut RandomSource::new(seed))?;
    let problem = build_task_sdp(task, d, big_d, k, class, &basis)?;
    let sol = solve_sdp(&problem, opts)?;
    Ok((problem, sol))
}

/// `n` of the spanning set a task needs with `k` calls.
pub fn span_power(task: Task, k: usize) -> usize {
    match task {
        Task::Cc | Task::Transposition => k,
        _ => k + 1,
    }
}
