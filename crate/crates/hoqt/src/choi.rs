//! Choi-operator calculus: dual kets, link products, CP/TP checks, and the
//! affine constraint sets of parallel, sequential and general superinstruments.
//!
//! A map `Λ: L(ℐ) → L(𝒪)` is represented by `J = Σ_{ij} |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)`
//! with the input factor first. Composition is the link product
//! `(X ⋆ Y)_{(ac),(a'c')} = Σ_{b,b'} X_{(ab),(a'b')} Y_{(bc),(b'c')}` over the
//! labels `X` and `Y` share.
//!
//! Comb conditions are written with trace-and-replace maps
//! `ₓC = Tr_X C ⊗ 1_X / d_X`. Every condition has the form `Q C = 0` where `Q`
//! is a product of commuting maps `ₓ` and `1 − ₓ`. Such products are
//! Hilbert–Schmidt orthogonal projectors, so the admissible subspace is the
//! range of `Π_i (1 − Q_i)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{HoqtError, Result};
use crate::linalg;
use crate::tensor::{haar_isometry, CMatrix, LabeledOperator, RandomSource, Space, C64, ZERO};

/// Choi operator tagged with the labels acting as map inputs and outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator {
    op: LabeledOperator,
    in_labels: Vec<String>,
    out_labels: Vec<String>,
}

impl ChoiOperator {
    /// Wrap a square-labeled operator. Every label must appear in exactly one
    /// of `in_labels` and `out_labels`.
    pub fn new(op: LabeledOperator, in_labels: Vec<String>, out_labels: Vec<String>) -> Result<Self> {
        if !op.is_square_labeled() {
            return Err(HoqtError::InvalidArgument("a Choi operator needs matching row and column spaces".into()));
        }
        let labels: BTreeSet<String> = op.row_labels().into_iter().collect();
        let mut tagged = BTreeSet::new();
        for l in in_labels.iter().chain(out_labels.iter()) {
            if !labels.contains(l) {
                return Err(HoqtError::UnknownLabel(l.clone()));
            }
            if !tagged.insert(l.clone()) {
                return Err(HoqtError::DuplicateLabel(l.clone()));
            }
        }
        if tagged.len() != labels.len() {
            return Err(HoqtError::InvalidArgument("every label must be tagged as input or output".into()));
        }
        Ok(ChoiOperator { op, in_labels, out_labels })
    }

    pub fn op(&self) -> &LabeledOperator {
        &self.op
    }
    pub fn into_op(self) -> LabeledOperator {
        self.op
    }
    pub fn entries(&self) -> &CMatrix {
        self.op.entries()
    }
    pub fn in_labels(&self) -> &[String] {
        &self.in_labels
    }
    pub fn out_labels(&self) -> &[String] {
        &self.out_labels
    }

    fn dims_of(&self, labels: &[String]) -> usize {
        labels
            .iter()
            .map(|l| self.op.row_spaces().iter().find(|s| &s.label == l).map_or(1, |s| s.dim))
            .product()
    }
    pub fn in_dim(&self) -> usize {
        self.dims_of(&self.in_labels)
    }
    pub fn out_dim(&self) -> usize {
        self.dims_of(&self.out_labels)
    }

    /// Reorder subsystems; roles are unchanged.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        Ok(ChoiOperator {
            op: self.op.permute_systems(order)?,
            in_labels: self.in_labels.clone(),
            out_labels: self.out_labels.clone(),
        })
    }

    /// Canonical layout: inputs (in tag order) then outputs.
    pub fn canonical(&self) -> Result<Self> {
        let order: Vec<&str> = self.in_labels.iter().chain(&self.out_labels).map(|s| s.as_str()).collect();
        self.permute(&order)
    }

    pub fn relabel(&self, map: &[(&str, &str)]) -> Result<Self> {
        let rename = |ls: &[String]| -> Vec<String> {
            ls.iter()
                .map(|l| map.iter().find(|(o, _)| *o == l).map_or(l.clone(), |(_, n)| n.to_string()))
                .collect()
        };
        ChoiOperator::new(self.op.relabel(map)?, rename(&self.in_labels), rename(&self.out_labels))
    }

    pub fn scale_re(&self, c: f64) -> Self {
        ChoiOperator { op: self.op.scale_re(c), in_labels: self.in_labels.clone(), out_labels: self.out_labels.clone() }
    }

    /// Link product with `other`; shared labels are contracted and drop out
    /// of both role lists.
    pub fn link(&self, other: &ChoiOperator) -> Result<ChoiOperator> {
        let op = link_product(&self.op, &other.op)?;
        let keep: BTreeSet<String> = op.row_labels().into_iter().collect();
        let mut ins: Vec<String> = Vec::new();
        let mut outs: Vec<String> = Vec::new();
        for l in self.in_labels.iter().chain(&other.in_labels) {
            if keep.contains(l) && !ins.contains(l) {
                ins.push(l.clone());
            }
        }
        for l in self.out_labels.iter().chain(&other.out_labels) {
            if keep.contains(l) && !outs.contains(l) {
                outs.push(l.clone());
            }
        }
        ChoiOperator::new(op, ins, outs)
    }

    /// Choi operator of the transposed map `Λᵀ`, obtained by swapping roles.
    pub fn transposed_map(&self) -> Self {
        ChoiOperator { op: self.op.clone(), in_labels: self.out_labels.clone(), out_labels: self.in_labels.clone() }
    }

    /// Choi operator of the complex-conjugate map `Λ*`, namely `J*`.
    pub fn conjugate_map(&self) -> Self {
        ChoiOperator { op: self.op.conj(), in_labels: self.in_labels.clone(), out_labels: self.out_labels.clone() }
    }
}

fn label_dim(spaces: &[Space], label: &str) -> Option<usize> {
    spaces.iter().find(|s| s.label == label).map(|s| s.dim)
}

/// Link product of two square-labeled operators over their shared labels.
/// The result carries the unshared labels of `x` followed by those of `y`.
pub fn link_product(x: &LabeledOperator, y: &LabeledOperator) -> Result<LabeledOperator> {
    if !x.is_square_labeled() || !y.is_square_labeled() {
        return Err(HoqtError::InvalidArgument("link product needs square-labeled operators".into()));
    }
    let xs = x.row_spaces();
    let ys = y.row_spaces();
    let shared: Vec<Space> = xs.iter().filter(|s| label_dim(ys, &s.label).is_some()).cloned().collect();
    for s in &shared {
        let dy = label_dim(ys, &s.label).unwrap();
        if dy != s.dim {
            return Err(HoqtError::DimensionMismatch(format!(
                "shared label `{}` has dims {} and {dy}",
                s.label, s.dim
            )));
        }
    }
    let a: Vec<Space> = xs.iter().filter(|s| !shared.contains(s)).cloned().collect();
    let c: Vec<Space> = ys.iter().filter(|s| label_dim(xs, &s.label).is_none()).cloned().collect();
    let xo: Vec<&str> = a.iter().chain(&shared).map(|s| s.label.as_str()).collect();
    let yo: Vec<&str> = shared.iter().chain(&c).map(|s| s.label.as_str()).collect();
    let xp = x.permute_systems(&xo)?;
    let yp = y.permute_systems(&yo)?;
    let da: usize = a.iter().map(|s| s.dim).product();
    let db: usize = shared.iter().map(|s| s.dim).product();
    let dc: usize = c.iter().map(|s| s.dim).product();
    let (xe, ye) = (xp.entries(), yp.entries());
    let xr = CMatrix::from_fn(da * da, db * db, |r, q| {
        let (i, j) = (r / da, r % da);
        let (b, b2) = (q / db, q % db);
        xe[(i * db + b, j * db + b2)]
    });
    let yr = CMatrix::from_fn(db * db, dc * dc, |q, r| {
        let (b, b2) = (q / db, q % db);
        let (i, j) = (r / dc, r % dc);
        ye[(b * dc + i, b2 * dc + j)]
    });
    let zr = linalg::matmul(&xr, &yr);
    let z = CMatrix::from_fn(da * dc, da * dc, |r, q| {
        let (ai, ci) = (r / dc, r % dc);
        let (aj, cj) = (q / dc, q % dc);
        zr[(ai * da + aj, ci * dc + cj)]
    });
    let spaces: Vec<Space> = a.into_iter().chain(c).collect();
    LabeledOperator::square(spaces, z)
}

/// Dual ket `|K⟩⟩ = Σ_i |i⟩ ⊗ K|i⟩` of an operator whose rows are outputs and
/// columns inputs. The ket lists input labels first.
pub fn dual_ket(k: &LabeledOperator) -> Result<LabeledOperator> {
    let spaces: Vec<Space> = k.col_spaces().iter().chain(k.row_spaces()).cloned().collect();
    let e = k.entries();
    let (rows, cols) = (e.nrows(), e.ncols());
    let mut amps = vec![ZERO; rows * cols];
    for i in 0..cols {
        for o in 0..rows {
            amps[i * rows + o] = e[(o, i)];
        }
    }
    LabeledOperator::ket(spaces, amps)
}

fn kraus_roles(k: &LabeledOperator) -> (Vec<String>, Vec<String>) {
    (k.col_labels(), k.row_labels())
}

/// `|V⟩⟨⟨V|` for an isometry `V`.
pub fn choi_of_isometry(v: &LabeledOperator) -> Result<ChoiOperator> {
    let res = crate::tensor::isometry_residual(v.entries());
    if res > 1e-10 {
        return Err(HoqtError::NotIsometry(res));
    }
    choi_of_operator(v)
}

/// `|K⟩⟩⟨⟨K|` for any operator (no isometry check).
pub fn choi_of_operator(k: &LabeledOperator) -> Result<ChoiOperator> {
    let ket = dual_ket(k)?;
    let op = crate::tensor::projector(&ket)?;
    let (ins, outs) = kraus_roles(k);
    ChoiOperator::new(op, ins, outs)
}

/// `J = Σ_k |K_k⟩⟩⟨⟨K_k|`.
pub fn choi_from_kraus(kraus: &[LabeledOperator]) -> Result<ChoiOperator> {
    let first = kraus.first().ok_or_else(|| HoqtError::InvalidArgument("empty Kraus list".into()))?;
    let mut acc = choi_of_operator(first)?;
    for k in &kraus[1..] {
        if k.row_spaces() != first.row_spaces() || k.col_spaces() != first.col_spaces() {
            return Err(HoqtError::DimensionMismatch("Kraus operators must share their spaces".into()));
        }
        let next = choi_of_operator(k)?;
        acc = ChoiOperator::new(acc.op.add(&next.op)?, acc.in_labels.clone(), acc.out_labels.clone())?;
    }
    Ok(acc)
}

/// `Λ(ρ)` where `ρ` lives on the input labels of `J`.
pub fn apply_channel(j: &ChoiOperator, rho: &LabeledOperator) -> Result<LabeledOperator> {
    let ins: BTreeSet<String> = j.in_labels.iter().cloned().collect();
    let given: BTreeSet<String> = rho.row_labels().into_iter().collect();
    if ins != given {
        return Err(HoqtError::InvalidArgument(format!(
            "state labels {given:?} do not match channel inputs {ins:?}"
        )));
    }
    let out = link_product(rho, &j.op)?;
    let order: Vec<&str> = j.out_labels.iter().map(|s| s.as_str()).collect();
    out.permute_systems(&order)
}

/// Outcome of [`validate_channel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub cp: bool,
    pub tp: bool,
    pub min_eig: f64,
    pub tp_residual: f64,
}

/// CP iff `J ⪰ 0`; TP iff `Tr_out J = 1_in`.
pub fn validate_channel(j: &ChoiOperator, tol: f64) -> Result<ChannelReport> {
    let min_eig = linalg::herm_eigenvalues(j.entries()).first().copied().unwrap_or(0.0);
    let outs: Vec<&str> = j.out_labels.iter().map(|s| s.as_str()).collect();
    let marg = j.op.partial_trace(&outs)?;
    let n = marg.nrows();
    let tp_residual = crate::tensor::frob_dist(marg.entries(), &CMatrix::identity(n, n));
    let herm = j.op.hermiticity_defect();
    Ok(ChannelReport { cp: min_eig >= -tol && herm <= tol.max(1e-10), tp: tp_residual <= tol, min_eig, tp_residual })
}

/// Random CPTP map with `kraus_rank` Kraus operators, from a Haar isometry
/// into output ⊗ environment. Needs `kraus_rank · d_out ≥ d_in`.
pub fn random_cptp(input: Space, output: Space, kraus_rank: usize, rng: &mut RandomSource) -> Result<ChoiOperator> {
    if kraus_rank == 0 {
        return Err(HoqtError::InvalidArgument("Kraus rank must be at least 1".into()));
    }
    let big = output.dim * kraus_rank;
    let v = haar_isometry(input.dim, big, rng)?;
    let e = v.entries();
    let kraus = (0..kraus_rank)
        .map(|r| {
            let m = CMatrix::from_fn(output.dim, input.dim, |o, i| e[(o * kraus_rank + r, i)]);
            LabeledOperator::new(vec![output.clone()], vec![input.clone()], m)
        })
        .collect::<Result<Vec<_>>>()?;
    choi_from_kraus(&kraus)
}

/// Slot structure of a `k`-slot superinstrument on `𝒫, ℐ_1, 𝒪_1, …, ℱ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSignature {
    pub dim_p: usize,
    /// Per slot `(dim ℐ_i, dim 𝒪_i)`.
    pub slots: Vec<(usize, usize)>,
    pub dim_f: usize,
}

impl SlotSignature {
    pub fn new(dim_p: usize, slots: Vec<(usize, usize)>, dim_f: usize) -> Result<Self> {
        if dim_p == 0 || dim_f == 0 || slots.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(HoqtError::InvalidArgument("all slot dimensions must be positive".into()));
        }
        Ok(SlotSignature { dim_p, slots, dim_f })
    }

    /// `k` identical slots.
    pub fn uniform(dim_p: usize, dim_i: usize, dim_o: usize, dim_f: usize, k: usize) -> Result<Self> {
        Self::new(dim_p, vec![(dim_i, dim_o); k], dim_f)
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn in_label(i: usize) -> String {
        format!("I{}", i + 1)
    }
    pub fn out_label(i: usize) -> String {
        format!("O{}", i + 1)
    }

    /// Canonical subsystem order `P, I1, O1, …, Ik, Ok, F`.
    pub fn spaces(&self) -> Vec<Space> {
        let mut v = vec![Space::new("P", self.dim_p)];
        for (i, &(di, d_o)) in self.slots.iter().enumerate() {
            v.push(Space::new(Self::in_label(i), di));
            v.push(Space::new(Self::out_label(i), d_o));
        }
        v.push(Space::new("F", self.dim_f));
        v
    }

    pub fn total_dim(&self) -> usize {
        crate::tensor::total_dim(&self.spaces())
    }

    /// Labels that act as inputs of the comb (`P` and the `O_i`).
    pub fn comb_inputs(&self) -> Vec<String> {
        std::iter::once("P".to_string()).chain((0..self.k()).map(Self::out_label)).collect()
    }

    /// Labels that act as outputs of the comb (the `I_i` and `F`).
    pub fn comb_outputs(&self) -> Vec<String> {
        (0..self.k()).map(Self::in_label).chain(std::iter::once("F".to_string())).collect()
    }

    /// `d_P Π d_{O_i}`.
    pub fn trace_normalization(&self) -> f64 {
        (self.dim_p * self.slots.iter().map(|s| s.1).product::<usize>()) as f64
    }
}

/// Causal structure of a superinstrument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombClass {
    Parallel,
    Sequential,
    General,
}

impl std::fmt::Display for CombClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CombClass::Parallel => "parallel",
            CombClass::Sequential => "sequential",
            CombClass::General => "general",
        })
    }
}

impl std::str::FromStr for CombClass {
    type Err = HoqtError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" | "par" => Ok(CombClass::Parallel),
            "sequential" | "seq" => Ok(CombClass::Sequential),
            "general" | "gen" => Ok(CombClass::General),
            _ => Err(HoqtError::InvalidArgument(format!("unknown comb class `{s}`"))),
        }
    }
}

/// A signed sum of trace-and-replace maps, `Σ c_S ₛ`. The empty set is the
/// identity map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaceSum {
    pub terms: Vec<(f64, BTreeSet<String>)>,
}

enum Factor {
    Replace(BTreeSet<String>),
    OneMinus(BTreeSet<String>),
}

fn set(labels: &[String]) -> BTreeSet<String> {
    labels.iter().cloned().collect()
}

impl ReplaceSum {
    fn product(factors: &[Factor]) -> Self {
        let mut acc: BTreeMap<BTreeSet<String>, f64> = BTreeMap::new();
        acc.insert(BTreeSet::new(), 1.0);
        for f in factors {
            let mut next: BTreeMap<BTreeSet<String>, f64> = BTreeMap::new();
            for (s, c) in acc {
                match f {
                    Factor::Replace(x) => {
                        *next.entry(s.union(x).cloned().collect()).or_default() += c;
                    }
                    Factor::OneMinus(x) => {
                        *next.entry(s.clone()).or_default() += c;
                        *next.entry(s.union(x).cloned().collect()).or_default() -= c;
                    }
                }
            }
            acc = next;
        }
        ReplaceSum { terms: acc.into_iter().filter(|(_, c)| *c != 0.0).map(|(s, c)| (c, s)).collect() }
    }

    /// Apply to a square-labeled operator.
    pub fn apply(&self, c: &LabeledOperator) -> Result<LabeledOperator> {
        let mut out = LabeledOperator::zeros(c.row_spaces().to_vec(), c.col_spaces().to_vec())?;
        for (coef, s) in &self.terms {
            let t = trace_replace(c, s)?;
            out = out.add(&t.scale_re(*coef))?;
        }
        Ok(out)
    }
}

/// `ₓC = Tr_X C ⊗ 1_X / d_X`, with subsystems kept in place.
pub fn trace_replace(c: &LabeledOperator, labels: &BTreeSet<String>) -> Result<LabeledOperator> {
    if labels.is_empty() {
        return Ok(c.clone());
    }
    let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    let reduced = c.partial_trace(&refs)?;
    let traced: Vec<Space> =
        c.row_spaces().iter().filter(|s| labels.contains(&s.label)).cloned().collect();
    let dx: usize = traced.iter().map(|s| s.dim).product();
    let ident = LabeledOperator::identity(traced).scale_re(1.0 / dx as f64);
    let joined = crate::tensor::kron(&reduced, &ident)?;
    let order: Vec<String> = c.row_labels();
    let order: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
    joined.permute_systems(&order)
}

/// Affine constraint set `{C : Q_i C = 0 ∀i, Tr C = trace}` of a comb class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombConstraints {
    pub class: CombClass,
    pub signature: SlotSignature,
    pub maps: Vec<ReplaceSum>,
    pub trace: f64,
}

/// Build the constraint set of `class` over `sig`.
pub fn comb_constraints(class: CombClass, sig: &SlotSignature) -> Result<CombConstraints> {
    let k = sig.k();
    let ins: Vec<String> = (0..k).map(SlotSignature::in_label).collect();
    let outs: Vec<String> = (0..k).map(SlotSignature::out_label).collect();
    let f = || set(&["F".to_string()]);
    let p = || set(&["P".to_string()]);
    let mut maps = Vec::new();
    match class {
        CombClass::Parallel => {
            maps.push(ReplaceSum::product(&[Factor::Replace(f()), Factor::OneMinus(set(&outs))]));
            let mut all = set(&ins);
            all.extend(outs.iter().cloned());
            all.insert("F".into());
            maps.push(ReplaceSum::product(&[Factor::Replace(all), Factor::OneMinus(p())]));
        }
        CombClass::Sequential => {
            // tooth j (1-based) ends with the condition on O_{j} after tracing everything later
            let mut later = f();
            for j in (0..k).rev() {
                maps.push(ReplaceSum::product(&[
                    Factor::Replace(later.clone()),
                    Factor::OneMinus(set(&[outs[j].clone()])),
                ]));
                later.insert(outs[j].clone());
                later.insert(ins[j].clone());
            }
            maps.push(ReplaceSum::product(&[Factor::Replace(later), Factor::OneMinus(p())]));
        }
        CombClass::General => {
            if k > 3 {
                return Err(HoqtError::Unsupported(format!("general superinstruments with k = {k} > 3")));
            }
            for mask in 1u32..(1 << k) {
                let mut factors = vec![Factor::Replace(f())];
                for i in 0..k {
                    if mask & (1 << i) != 0 {
                        factors.push(Factor::OneMinus(set(&[outs[i].clone()])));
                    } else {
                        factors.push(Factor::Replace(set(&[ins[i].clone(), outs[i].clone()])));
                    }
                }
                maps.push(ReplaceSum::product(&factors));
            }
            let mut all = set(&ins);
            all.extend(outs.iter().cloned());
            all.insert("F".into());
            maps.push(ReplaceSum::product(&[Factor::Replace(all), Factor::OneMinus(p())]));
        }
    }
    Ok(CombConstraints { class, signature: sig.clone(), maps, trace: sig.trace_normalization() })
}

impl CombConstraints {
    fn check_shape(&self, c: &LabeledOperator) -> Result<()> {
        if c.row_spaces() != self.signature.spaces().as_slice() || !c.is_square_labeled() {
            return Err(HoqtError::DimensionMismatch(
                "comb operator must be laid out as P, I1, O1, …, F".into(),
            ));
        }
        Ok(())
    }

    /// Largest Frobenius norm `‖Q_i C‖` and the trace deviation.
    pub fn residuals(&self, c: &LabeledOperator) -> Result<(f64, f64)> {
        self.check_shape(c)?;
        let mut worst: f64 = 0.0;
        for m in &self.maps {
            worst = worst.max(m.apply(c)?.frobenius_norm());
        }
        Ok((worst, (c.trace().re - self.trace).abs()))
    }

    /// Homogeneous part only: `‖Q_i C‖` maximized over `i`.
    pub fn linear_residual(&self, c: &LabeledOperator) -> Result<f64> {
        Ok(self.residuals(c)?.0)
    }

    /// Orthogonal projection onto the subspace `∩_i ker Q_i`.
    pub fn project(&self, c: &LabeledOperator) -> Result<LabeledOperator> {
        self.check_shape(c)?;
        let mut x = c.clone();
        for m in &self.maps {
            x = x.sub(&m.apply(&x)?)?;
        }
        Ok(x)
    }
}

/// Pair `{S, F}` of success and failure branches.
#[derive(Clone, Debug, PartialEq)]
pub struct Superinstrument {
    pub s: ChoiOperator,
    pub f: ChoiOperator,
    pub class: CombClass,
    pub signature: SlotSignature,
}

impl Superinstrument {
    pub fn new(s: LabeledOperator, f: LabeledOperator, class: CombClass, signature: SlotSignature) -> Result<Self> {
        let ins = signature.comb_inputs();
        let outs = signature.comb_outputs();
        Ok(Superinstrument {
            s: ChoiOperator::new(s, ins.clone(), outs.clone())?,
            f: ChoiOperator::new(f, ins, outs)?,
            class,
            signature,
        })
    }

    /// `S + F`.
    pub fn total(&self) -> Result<LabeledOperator> {
        self.s.op().add(self.f.op())
    }
}

/// Outcome of [`validate_superinstrument`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperinstrumentReport {
    pub s_min_eig: f64,
    pub f_min_eig: f64,
    pub constraint_residual: f64,
    pub trace_residual: f64,
    pub passed: bool,
}

pub fn validate_superinstrument(si: &Superinstrument, tol: f64) -> Result<SuperinstrumentReport> {
    let cons = comb_constraints(si.class, &si.signature)?;
    let total = si.total()?;
    let (constraint_residual, trace_residual) = cons.residuals(&total)?;
    let s_min_eig = linalg::herm_eigenvalues(si.s.entries()).first().copied().unwrap_or(0.0);
    let f_min_eig = linalg::herm_eigenvalues(si.f.entries()).first().copied().unwrap_or(0.0);
    let scale = cons.trace.max(1.0);
    let passed = s_min_eig >= -tol
        && f_min_eig >= -tol
        && constraint_residual <= tol * scale
        && trace_residual <= tol * scale;
    Ok(SuperinstrumentReport { s_min_eig, f_min_eig, constraint_residual, trace_residual, passed })
}

/// Hermitian part `(X + X†)/2` of a raw matrix.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}
