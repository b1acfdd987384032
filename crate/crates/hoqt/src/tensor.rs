//! Dense complex operators over labeled multipartite Hilbert spaces.
//!
//! Every operator carries an ordered list of row subsystems and column
//! subsystems. Joint indices are flattened row-major with the leftmost label
//! most significant, so `kron(a, b)` is the textbook Kronecker product.

use nalgebra::{DMatrix, QR};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HoqtError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// A named tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Space {
    pub label: String,
    pub dim: usize,
}

impl Space {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Space { label: label.into(), dim }
    }
}

/// Shorthand for [`Space::new`].
pub fn sp(label: &str, dim: usize) -> Space {
    Space::new(label, dim)
}

/// Product of the dimensions.
pub fn total_dim(spaces: &[Space]) -> usize {
    spaces.iter().map(|s| s.dim).product()
}

fn check_unique(spaces: &[Space]) -> Result<()> {
    for (i, a) in spaces.iter().enumerate() {
        if a.dim == 0 {
            return Err(HoqtError::InvalidArgument(format!("space `{}` has dimension 0", a.label)));
        }
        if spaces[..i].iter().any(|b| b.label == a.label) {
            return Err(HoqtError::DuplicateLabel(a.label.clone()));
        }
    }
    Ok(())
}

fn position(spaces: &[Space], label: &str) -> Result<usize> {
    spaces
        .iter()
        .position(|s| s.label == label)
        .ok_or_else(|| HoqtError::UnknownLabel(label.to_string()))
}

/// Row-major strides; the last space has stride one.
pub fn strides(spaces: &[Space]) -> Vec<usize> {
    let mut out = vec![1usize; spaces.len()];
    for i in (0..spaces.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * spaces[i + 1].dim;
    }
    out
}

/// Linear offsets contributed by every joint index of the subsystems at
/// `positions`, enumerated row-major in the order given.
pub fn subset_offsets(spaces: &[Space], positions: &[usize]) -> Vec<usize> {
    let st = strides(spaces);
    let mut offs = vec![0usize];
    for &p in positions {
        let dim = spaces[p].dim;
        let mut next = Vec::with_capacity(offs.len() * dim);
        for &o in &offs {
            for i in 0..dim {
                next.push(o + i * st[p]);
            }
        }
        offs = next;
    }
    offs
}

/// Dense complex matrix whose rows and columns are tensor products of named
/// subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledOperator {
    row_spaces: Vec<Space>,
    col_spaces: Vec<Space>,
    entries: CMatrix,
}

impl LabeledOperator {
    pub fn new(row_spaces: Vec<Space>, col_spaces: Vec<Space>, entries: CMatrix) -> Result<Self> {
        check_unique(&row_spaces)?;
        check_unique(&col_spaces)?;
        let (r, c) = (total_dim(&row_spaces), total_dim(&col_spaces));
        if entries.nrows() != r || entries.ncols() != c {
            return Err(HoqtError::DimensionMismatch(format!(
                "entries are {}x{}, spaces require {r}x{c}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(LabeledOperator { row_spaces, col_spaces, entries })
    }

    /// Operator with identical row and column spaces.
    pub fn square(spaces: Vec<Space>, entries: CMatrix) -> Result<Self> {
        Self::new(spaces.clone(), spaces, entries)
    }

    /// Column vector (a ket) on `spaces`.
    pub fn ket(spaces: Vec<Space>, amplitudes: Vec<C64>) -> Result<Self> {
        let n = amplitudes.len();
        Self::new(spaces, vec![], CMatrix::from_vec(n, 1, amplitudes))
    }

    pub fn identity(spaces: Vec<Space>) -> Self {
        let n = total_dim(&spaces);
        Self::square(spaces, CMatrix::identity(n, n)).expect("identity on valid spaces")
    }

    pub fn zeros(row_spaces: Vec<Space>, col_spaces: Vec<Space>) -> Result<Self> {
        let (r, c) = (total_dim(&row_spaces), total_dim(&col_spaces));
        Self::new(row_spaces, col_spaces, CMatrix::zeros(r, c))
    }

    /// Computational basis ket `|index⟩` of the joint space.
    pub fn basis_ket(spaces: Vec<Space>, index: usize) -> Result<Self> {
        let n = total_dim(&spaces);
        if index >= n {
            return Err(HoqtError::InvalidArgument(format!("basis index {index} >= {n}")));
        }
        let mut v = vec![ZERO; n];
        v[index] = ONE;
        Self::ket(spaces, v)
    }

    pub fn row_spaces(&self) -> &[Space] {
        &self.row_spaces
    }
    pub fn col_spaces(&self) -> &[Space] {
        &self.col_spaces
    }
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }
    pub fn into_entries(self) -> CMatrix {
        self.entries
    }
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }
    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
    pub fn row_labels(&self) -> Vec<String> {
        self.row_spaces.iter().map(|s| s.label.clone()).collect()
    }
    pub fn col_labels(&self) -> Vec<String> {
        self.col_spaces.iter().map(|s| s.label.clone()).collect()
    }

    /// True when rows and columns carry the same labels in the same order.
    pub fn is_square_labeled(&self) -> bool {
        self.row_spaces == self.col_spaces
    }

    /// Same entries with the spaces replaced (dimensions must agree).
    pub fn with_spaces(&self, row_spaces: Vec<Space>, col_spaces: Vec<Space>) -> Result<Self> {
        Self::new(row_spaces, col_spaces, self.entries.clone())
    }

    /// Rename labels on both sides according to `map` (old, new).
    pub fn relabel(&self, map: &[(&str, &str)]) -> Result<Self> {
        let rename = |spaces: &[Space]| -> Vec<Space> {
            spaces
                .iter()
                .map(|s| match map.iter().find(|(old, _)| *old == s.label) {
                    Some((_, new)) => Space::new(*new, s.dim),
                    None => s.clone(),
                })
                .collect()
        };
        Self::new(rename(&self.row_spaces), rename(&self.col_spaces), self.entries.clone())
    }

    pub fn dagger(&self) -> Self {
        LabeledOperator {
            row_spaces: self.col_spaces.clone(),
            col_spaces: self.row_spaces.clone(),
            entries: self.entries.adjoint(),
        }
    }

    pub fn transpose(&self) -> Self {
        LabeledOperator {
            row_spaces: self.col_spaces.clone(),
            col_spaces: self.row_spaces.clone(),
            entries: self.entries.transpose(),
        }
    }

    pub fn conj(&self) -> Self {
        LabeledOperator {
            row_spaces: self.row_spaces.clone(),
            col_spaces: self.col_spaces.clone(),
            entries: self.entries.map(|z| z.conj()),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        LabeledOperator {
            row_spaces: self.row_spaces.clone(),
            col_spaces: self.col_spaces.clone(),
            entries: &self.entries * c,
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.row_spaces != other.row_spaces || self.col_spaces != other.col_spaces {
            return Err(HoqtError::DimensionMismatch(format!(
                "operands differ in spaces: {:?}/{:?} vs {:?}/{:?}",
                self.row_labels(),
                self.col_labels(),
                other.row_labels(),
                other.col_labels()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(LabeledOperator {
            row_spaces: self.row_spaces.clone(),
            col_spaces: self.col_spaces.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(LabeledOperator {
            row_spaces: self.row_spaces.clone(),
            col_spaces: self.col_spaces.clone(),
            entries: &self.entries - &other.entries,
        })
    }

    /// Operator product `self · other`; inner dimensions must agree.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.nrows() {
            return Err(HoqtError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        Self::new(self.row_spaces.clone(), other.col_spaces.clone(), crate::linalg::matmul(&self.entries, &other.entries))
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖A − A†‖_F / ‖A‖_F` (zero for the zero matrix).
    pub fn hermiticity_defect(&self) -> f64 {
        if self.nrows() != self.ncols() {
            return f64::INFINITY;
        }
        let n = self.nrows();
        let mut dev = 0.0;
        for i in 0..n {
            for j in 0..n {
                dev += (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm_sqr();
            }
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            dev.sqrt() / norm
        }
    }

    /// Permute subsystems. `new_order` must list every row label; square
    /// operators with matching column labels are permuted on both sides, and
    /// columns are otherwise left untouched only if they carry no label from
    /// `new_order`.
    pub fn permute_systems(&self, new_order: &[&str]) -> Result<Self> {
        if new_order.len() != self.row_spaces.len() {
            return Err(HoqtError::InvalidArgument(format!(
                "new order has {} labels, operator rows have {}",
                new_order.len(),
                self.row_spaces.len()
            )));
        }
        let perm_r = new_order
            .iter()
            .map(|l| position(&self.row_spaces, l))
            .collect::<Result<Vec<_>>>()?;
        let cols_match = self.col_spaces.len() == new_order.len()
            && new_order.iter().all(|l| self.col_spaces.iter().any(|s| s.label == *l));
        let perm_c = if cols_match {
            Some(new_order.iter().map(|l| position(&self.col_spaces, l)).collect::<Result<Vec<_>>>()?)
        } else {
            if self.col_spaces.iter().any(|s| new_order.contains(&s.label.as_str())) {
                return Err(HoqtError::InvalidArgument(
                    "column labels only partially match the new order".into(),
                ));
            }
            None
        };
        let row_map = subset_offsets(&self.row_spaces, &perm_r);
        let new_rows: Vec<Space> = perm_r.iter().map(|&p| self.row_spaces[p].clone()).collect();
        let (col_map, new_cols) = match &perm_c {
            Some(pc) => (
                subset_offsets(&self.col_spaces, pc),
                pc.iter().map(|&p| self.col_spaces[p].clone()).collect(),
            ),
            None => ((0..self.ncols()).collect(), self.col_spaces.clone()),
        };
        let entries = CMatrix::from_fn(self.nrows(), self.ncols(), |i, j| {
            self.entries[(row_map[i], col_map[j])]
        });
        Self::new(new_rows, new_cols, entries)
    }

    /// Permute only the row subsystems.
    pub fn permute_rows(&self, new_order: &[&str]) -> Result<Self> {
        let perm = new_order
            .iter()
            .map(|l| position(&self.row_spaces, l))
            .collect::<Result<Vec<_>>>()?;
        if perm.len() != self.row_spaces.len() {
            return Err(HoqtError::InvalidArgument("row order must list every row label".into()));
        }
        let map = subset_offsets(&self.row_spaces, &perm);
        let rows = perm.iter().map(|&p| self.row_spaces[p].clone()).collect();
        let entries = CMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.entries[(map[i], j)]);
        Self::new(rows, self.col_spaces.clone(), entries)
    }

    /// Permute only the column subsystems.
    pub fn permute_cols(&self, new_order: &[&str]) -> Result<Self> {
        Ok(self.transpose().permute_rows(new_order)?.transpose())
    }

    fn paired_positions(&self, labels: &[&str]) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut pr = Vec::new();
        let mut pc = Vec::new();
        for l in labels {
            let r = position(&self.row_spaces, l)?;
            let c = position(&self.col_spaces, l)?;
            if self.row_spaces[r].dim != self.col_spaces[c].dim {
                return Err(HoqtError::DimensionMismatch(format!(
                    "label `{l}` has row dim {} and column dim {}",
                    self.row_spaces[r].dim, self.col_spaces[c].dim
                )));
            }
            if pr.contains(&r) {
                return Err(HoqtError::DuplicateLabel(l.to_string()));
            }
            pr.push(r);
            pc.push(c);
        }
        Ok((pr, pc))
    }

    /// Trace out the named subsystems (present on both sides).
    pub fn partial_trace(&self, labels: &[&str]) -> Result<Self> {
        let (tr, tc) = self.paired_positions(labels)?;
        let kr: Vec<usize> = (0..self.row_spaces.len()).filter(|p| !tr.contains(p)).collect();
        let kc: Vec<usize> = (0..self.col_spaces.len()).filter(|p| !tc.contains(p)).collect();
        let kept_r = subset_offsets(&self.row_spaces, &kr);
        let kept_c = subset_offsets(&self.col_spaces, &kc);
        let t_r = subset_offsets(&self.row_spaces, &tr);
        let t_c = subset_offsets(&self.col_spaces, &tc);
        let mut out = CMatrix::zeros(kept_r.len(), kept_c.len());
        for (j, &cj) in kept_c.iter().enumerate() {
            for (i, &ri) in kept_r.iter().enumerate() {
                let mut acc = ZERO;
                for (a, b) in t_r.iter().zip(t_c.iter()) {
                    acc += self.entries[(ri + a, cj + b)];
                }
                out[(i, j)] = acc;
            }
        }
        Self::new(
            kr.iter().map(|&p| self.row_spaces[p].clone()).collect(),
            kc.iter().map(|&p| self.col_spaces[p].clone()).collect(),
            out,
        )
    }

    /// Transpose restricted to the named subsystems.
    pub fn partial_transpose(&self, labels: &[&str]) -> Result<Self> {
        let (tr, tc) = self.paired_positions(labels)?;
        let rr: Vec<usize> = (0..self.row_spaces.len()).filter(|p| !tr.contains(p)).collect();
        let rc: Vec<usize> = (0..self.col_spaces.len()).filter(|p| !tc.contains(p)).collect();
        let rest_r = subset_offsets(&self.row_spaces, &rr);
        let rest_c = subset_offsets(&self.col_spaces, &rc);
        let t_r = subset_offsets(&self.row_spaces, &tr);
        let t_c = subset_offsets(&self.col_spaces, &tc);
        let mut out = CMatrix::zeros(self.nrows(), self.ncols());
        for &a in &rest_r {
            for (it, &tri) in t_r.iter().enumerate() {
                let i = a + tri;
                for &b in &rest_c {
                    for (jt, &tcj) in t_c.iter().enumerate() {
                        let j = b + tcj;
                        out[(i, j)] = self.entries[(a + t_r[jt], b + t_c[it])];
                    }
                }
            }
        }
        Self::new(self.row_spaces.clone(), self.col_spaces.clone(), out)
    }

    /// Apply `op` to the row subsystems of `self` named by `op`'s column
    /// labels. The acted subsystems are replaced in place by `op`'s row
    /// subsystems when both lists have equal length; otherwise the new
    /// subsystems are appended after the untouched ones.
    pub fn act_on_rows(&self, op: &LabeledOperator) -> Result<Self> {
        let acted = op
            .col_spaces
            .iter()
            .map(|s| {
                let p = position(&self.row_spaces, &s.label)?;
                if self.row_spaces[p].dim != s.dim {
                    return Err(HoqtError::DimensionMismatch(format!(
                        "label `{}` has dim {} but operator expects {}",
                        s.label, self.row_spaces[p].dim, s.dim
                    )));
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let rest: Vec<usize> = (0..self.row_spaces.len()).filter(|p| !acted.contains(p)).collect();
        let rest_off = subset_offsets(&self.row_spaces, &rest);
        let act_off = subset_offsets(&self.row_spaces, &acted);
        let a_in = act_off.len();
        let a_out = op.nrows();
        let ncols = self.ncols();
        // gather: one column per (rest index, column)
        let mut gathered = CMatrix::zeros(a_in, rest_off.len() * ncols);
        for (r, &ro) in rest_off.iter().enumerate() {
            for j in 0..ncols {
                let col = r * ncols + j;
                for (i, &ao) in act_off.iter().enumerate() {
                    gathered[(i, col)] = self.entries[(ro + ao, j)];
                }
            }
        }
        let transformed = crate::linalg::matmul(&op.entries, &gathered);
        // new row order: rest then op rows, then permute back into place
        let mut new_rows: Vec<Space> = rest.iter().map(|&p| self.row_spaces[p].clone()).collect();
        new_rows.extend(op.row_spaces.iter().cloned());
        check_unique(&new_rows)?;
        let mut out = CMatrix::zeros(rest_off.len() * a_out, ncols);
        for r in 0..rest_off.len() {
            for j in 0..ncols {
                let col = r * ncols + j;
                for i in 0..a_out {
                    out[(r * a_out + i, j)] = transformed[(i, col)];
                }
            }
        }
        let result = Self::new(new_rows, self.col_spaces.clone(), out)?;
        if op.row_spaces.len() == op.col_spaces.len() {
            let mut order: Vec<String> = self.row_labels();
            for (k, &p) in acted.iter().enumerate() {
                order[p] = op.row_spaces[k].label.clone();
            }
            let refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
            result.permute_rows(&refs)
        } else {
            Ok(result)
        }
    }

    /// Conjugate a square operator (or act on a ket) by `op` on named systems:
    /// `op · self · op†` for operators, `op · self` for kets.
    pub fn conjugate_by(&self, op: &LabeledOperator) -> Result<Self> {
        let left = self.act_on_rows(op)?;
        if left.col_spaces.is_empty() {
            return Ok(left);
        }
        Ok(left.dagger().act_on_rows(op)?.dagger())
    }
}

/// Kronecker product with concatenated labels.
pub fn kron(a: &LabeledOperator, b: &LabeledOperator) -> Result<LabeledOperator> {
    let mut rows = a.row_spaces.clone();
    rows.extend(b.row_spaces.iter().cloned());
    let mut cols = a.col_spaces.clone();
    cols.extend(b.col_spaces.iter().cloned());
    LabeledOperator::new(rows, cols, a.entries.kronecker(&b.entries))
}

/// Kronecker product of a list of operators, left to right.
pub fn kron_all(ops: &[LabeledOperator]) -> Result<LabeledOperator> {
    let mut it = ops.iter();
    let first = it
        .next()
        .ok_or_else(|| HoqtError::InvalidArgument("empty Kronecker product".into()))?
        .clone();
    it.try_fold(first, |acc, op| kron(&acc, op))
}

/// Permute subsystems (free-function form of [`LabeledOperator::permute_systems`]).
pub fn permute_systems(op: &LabeledOperator, new_order: &[&str]) -> Result<LabeledOperator> {
    op.permute_systems(new_order)
}

/// Partial trace (free-function form).
pub fn partial_trace(op: &LabeledOperator, labels: &[&str]) -> Result<LabeledOperator> {
    op.partial_trace(labels)
}

/// Partial transpose (free-function form).
pub fn partial_transpose(op: &LabeledOperator, labels: &[&str]) -> Result<LabeledOperator> {
    op.partial_transpose(labels)
}

/// Eigendecomposition of a raw Hermitian matrix; ascending eigenvalues.
pub fn herm_eig_matrix(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    crate::linalg::herm_eig(m)
}

/// Eigenvalues only, ascending.
pub fn herm_eigenvalues(m: &CMatrix) -> Vec<f64> {
    crate::linalg::herm_eigenvalues(m)
}

/// Hermitian eigendecomposition. Eigenvectors are returned as the columns of
/// an operator whose column space is a single `eig` factor.
pub fn herm_eig(op: &LabeledOperator) -> Result<(Vec<f64>, LabeledOperator)> {
    if op.nrows() != op.ncols() {
        return Err(HoqtError::DimensionMismatch("eigendecomposition needs a square operator".into()));
    }
    let defect = op.hermiticity_defect();
    if defect > 1e-10 {
        return Err(HoqtError::NotHermitian(defect));
    }
    let (vals, vecs) = herm_eig_matrix(&op.entries);
    let n = vals.len();
    let vectors = LabeledOperator::new(op.row_spaces.clone(), vec![Space::new("eig", n)], vecs)?;
    Ok((vals, vectors))
}

/// `|Φ⁺_d⟩ = Σᵢ |i⟩|i⟩/√d` on subsystems `a` and `b`.
pub fn max_entangled_on(a: &str, b: &str, d: usize) -> Result<LabeledOperator> {
    if d == 0 {
        return Err(HoqtError::InvalidArgument("dimension must be positive".into()));
    }
    let mut v = vec![ZERO; d * d];
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    for i in 0..d {
        v[i * d + i] = amp;
    }
    LabeledOperator::ket(vec![Space::new(a, d), Space::new(b, d)], v)
}

/// `|Φ⁺_d⟩` on subsystems labeled `A` and `B`.
pub fn max_entangled(d: usize) -> Result<LabeledOperator> {
    max_entangled_on("A", "B", d)
}

/// Outer product `|v⟩⟨v|` of a ket.
pub fn projector(ket: &LabeledOperator) -> Result<LabeledOperator> {
    if !ket.col_spaces.is_empty() {
        return Err(HoqtError::InvalidArgument("projector expects a ket".into()));
    }
    ket.mul(&ket.dagger())
}

/// Seeded random stream (ChaCha20 via `rand_chacha`, seeded with
/// `seed_from_u64`). Identical seeds give identical streams everywhere.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub const ALGORITHM: &'static str = "chacha20/seed_from_u64";

    pub fn new(seed: u64) -> Self {
        RandomSource { seed, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer below `n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard complex Gaussian, `E|z|² = 1`.
    pub fn complex_gaussian(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(self.normal() * s, self.normal() * s)
    }

    /// Independent child stream derived from this one.
    pub fn fork(&mut self) -> RandomSource {
        let seed = self.rng.random::<u64>();
        RandomSource::new(seed)
    }
}

/// Haar-random isometry `V: ℂ^d → ℂ^D` (rows `out`, columns `in`), drawn by
/// QR of a complex Gaussian matrix with the phases of `R`'s diagonal moved
/// into `Q`.
pub fn haar_isometry(d: usize, big_d: usize, rng: &mut RandomSource) -> Result<LabeledOperator> {
    if d == 0 || big_d < d {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D, got d={d}, D={big_d}")));
    }
    let z = CMatrix::from_fn(big_d, d, |_, _| rng.complex_gaussian());
    let qr = QR::new(z);
    let q = qr.q();
    let r = qr.r();
    let mut v = CMatrix::zeros(big_d, d);
    for c in 0..d {
        let rc = r[(c, c)];
        let phase = if rc.norm() > 0.0 { rc / rc.norm() } else { ONE };
        for row in 0..big_d {
            v[(row, c)] = q[(row, c)] * phase;
        }
    }
    LabeledOperator::new(vec![Space::new("out", big_d)], vec![Space::new("in", d)], v)
}

/// Haar-random unitary on `ℂ^d`.
pub fn haar_unitary(d: usize, rng: &mut RandomSource) -> Result<LabeledOperator> {
    haar_isometry(d, d, rng)
}

/// `‖V†V − 1‖_F` for a raw matrix.
pub fn isometry_residual(v: &CMatrix) -> f64 {
    let g = v.adjoint() * v;
    let n = g.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            acc += (g[(i, j)] - target).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Frobenius distance between raw matrices of equal shape.
pub fn frob_dist(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}
