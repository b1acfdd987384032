//! The compressor channel `Ψ: L((ℂ^D)^{⊗n}) → L((ℂ^d)^{⊗n})`.
//!
//! On each isotypic block with `l(μ) ≤ d` the unitary-group factor
//! `𝒰_μ^{(D)}` is discarded, replaced by the maximally mixed state on
//! `𝒰_μ^{(d)}`, and the tableau factor is carried over unchanged (tableau
//! indices agree across dimensions). Blocks with `l(μ) > d` are mapped to the
//! maximally mixed output weighted by their population.
//!
//! For `l(μ) ≤ d` the Kraus operators are
//! `K_{μab} = d_U^{(d)}(μ)^{-1/2} Σ_s |v_{as}⟩⟨w_{bs}|`, where `v` and `w` are the
//! columns of the Schur block isometries for `d` and `D`.
//!
//! Composed with `V^{⊗n}`, the channel equals the `n`-fold Haar twirl of
//! `𝕌(d)` for every isometry `V`.

use crate::budget;
use crate::choi::ChoiOperator;
use crate::error::{HoqtError, Result};
use crate::linalg;
use crate::rep::{schur_data, tensor_power, SchurBlock, SchurData};
use crate::tensor::{isometry_residual, CMatrix, LabeledOperator, Space, C64};

/// Input labels `in1 … inn` (dimension `D`).
pub fn psi_in_spaces(big_d: usize, n: usize) -> Vec<Space> {
    (1..=n).map(|i| Space::new(format!("in{i}"), big_d)).collect()
}

/// Output labels `out1 … outn` (dimension `d`).
pub fn psi_out_spaces(d: usize, n: usize) -> Vec<Space> {
    (1..=n).map(|i| Space::new(format!("out{i}"), d)).collect()
}

/// Structured form of `Ψ`; the dense Choi operator is built on request.
#[derive(Clone, Debug)]
pub struct PsiChannel {
    pub d: usize,
    pub big_d: usize,
    pub n: usize,
    small: SchurData,
    large: SchurData,
    /// Projector onto the blocks with `l(μ) > d` of `(ℂ^D)^{⊗n}`.
    complement: CMatrix,
}

/// Largest input dimension `D^n` accepted by [`build_psi`] under the default
/// budget. It scales linearly with `HOQT_BUDGET_MB`.
pub const PSI_MAX_INPUT_DIM: usize = 1024;

fn input_dim_cap() -> usize {
    let scaled = PSI_MAX_INPUT_DIM as u128 * budget::budget_bytes() as u128
        / (budget::DEFAULT_BUDGET_MB as u128 * (1 << 20));
    scaled.min(usize::MAX as u128) as usize
}

/// Build `Ψ` for `d ≤ D` and `n ≥ 1`.
pub fn build_psi(d: usize, big_d: usize, n: usize) -> Result<PsiChannel> {
    if d == 0 || big_d < d || n == 0 {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D and n >= 1, got d={d}, D={big_d}, n={n}")));
    }
    let cap = input_dim_cap();
    let in_dim = (big_d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if in_dim > cap as u128 {
        return Err(HoqtError::Budget(format!("Ψ input dimension D^n = {in_dim} exceeds the cap {cap}")));
    }
    let small = schur_data(d, n)?;
    let large = schur_data(big_d, n)?;
    let dim = large.total_dim();
    let mut complement = CMatrix::identity(dim, dim);
    for b in &large.blocks {
        if b.shape.len() <= d {
            complement -= &b.projector;
        }
    }
    Ok(PsiChannel { d, big_d, n, small, large, complement })
}

impl PsiChannel {
    pub fn in_dim(&self) -> usize {
        self.large.total_dim()
    }
    pub fn out_dim(&self) -> usize {
        self.small.total_dim()
    }
    pub fn small_data(&self) -> &SchurData {
        &self.small
    }
    pub fn large_data(&self) -> &SchurData {
        &self.large
    }

    /// Paired blocks `(d-block, D-block)` with `l(μ) ≤ d`.
    fn pairs(&self) -> impl Iterator<Item = (&SchurBlock, &SchurBlock)> {
        self.small.blocks.iter().map(move |s| {
            let l = self.large.block(&s.shape).expect("every d-block has a D-block");
            (s, l)
        })
    }

    /// `Ψ(ρ)` on raw matrices.
    pub fn apply_matrix(&self, rho: &CMatrix) -> Result<CMatrix> {
        let n_in = self.in_dim();
        if rho.nrows() != n_in || rho.ncols() != n_in {
            return Err(HoqtError::DimensionMismatch(format!(
                "Ψ expects a {n_in}x{n_in} input, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let n_out = self.out_dim();
        let mut out = CMatrix::zeros(n_out, n_out);
        for (s, l) in self.pairs() {
            let inner = linalg::matmul(&linalg::matmul_adj(&l.isometry, rho), &l.isometry);
            let m = crate::rep::trace_u(&inner, l.dim_u, l.dim_sym);
            out += crate::rep::lift_mixed(&s.isometry, &m, s.dim_u, s.dim_sym);
        }
        let rest: C64 = (0..n_in).map(|i| (self.complement.row(i) * rho.column(i))[(0, 0)]).sum();
        for i in 0..n_out {
            out[(i, i)] += rest / C64::new(n_out as f64, 0.0);
        }
        Ok(out)
    }

    /// Kraus operators of `Ψ ∘ X` for a map `X` given by one operator
    /// (`in_dim × m`), covering the `l(μ) ≤ d` blocks only.
    fn kraus_after(&self, x: &CMatrix) -> Vec<CMatrix> {
        let mut out = Vec::new();
        for (s, l) in self.pairs() {
            let wx = linalg::matmul_adj(&l.isometry, x);
            let f = 1.0 / (s.dim_u as f64).sqrt();
            for a in 0..s.dim_u {
                for b in 0..l.dim_u {
                    let mut k = CMatrix::zeros(self.out_dim(), x.ncols());
                    for t in 0..s.dim_sym {
                        let v = s.isometry.column(a * s.dim_sym + t);
                        let row = wx.row(b * l.dim_sym + t);
                        k += v * row;
                    }
                    out.push(k * C64::new(f, 0.0));
                }
            }
        }
        out
    }

    /// Choi operator of `Ψ ∘ X` on raw matrices (input index first).
    fn choi_after(&self, x: &CMatrix) -> Result<CMatrix> {
        let m = x.ncols();
        let n_out = self.out_dim();
        let big = m * n_out;
        budget::check_complex(big * big, "Choi operator of Ψ")?;
        let kraus = self.kraus_after(x);
        let mut kets = CMatrix::zeros(big, kraus.len());
        for (c, k) in kraus.iter().enumerate() {
            for i in 0..m {
                for o in 0..n_out {
                    kets[(i * n_out + o, c)] = k[(o, i)];
                }
            }
        }
        let mut j = linalg::matmul_by_adj(&kets, &kets);
        // l(μ) > d branch: (X† Π_c X)ᵀ ⊗ 1/d^n
        let pc = linalg::matmul_adj(x, &linalg::matmul(&self.complement, x));
        let f = C64::new(1.0 / n_out as f64, 0.0);
        for i in 0..m {
            for i2 in 0..m {
                let c = pc[(i2, i)] * f;
                if c.norm() == 0.0 {
                    continue;
                }
                for o in 0..n_out {
                    j[(i * n_out + o, i2 * n_out + o)] += c;
                }
            }
        }
        Ok(j)
    }

    /// Dense Choi operator, labels `in1…inn` then `out1…outn`.
    pub fn choi(&self) -> Result<ChoiOperator> {
        let ident = CMatrix::identity(self.in_dim(), self.in_dim());
        let j = self.choi_after(&ident)?;
        wrap_choi(j, psi_in_spaces(self.big_d, self.n), psi_out_spaces(self.d, self.n))
    }

    /// Choi operator of `Ψ ∘ V^{⊗n}` with inputs `in1…inn` of dimension `d`.
    pub fn choi_after_isometry(&self, v: &CMatrix) -> Result<ChoiOperator> {
        if v.nrows() != self.big_d || v.ncols() != self.d {
            return Err(HoqtError::DimensionMismatch(format!(
                "expected a {}x{} isometry, got {}x{}",
                self.big_d,
                self.d,
                v.nrows(),
                v.ncols()
            )));
        }
        let vn = tensor_power(v, self.n);
        let j = self.choi_after(&vn)?;
        wrap_choi(j, psi_in_spaces(self.d, self.n), psi_out_spaces(self.d, self.n))
    }
}

fn wrap_choi(j: CMatrix, ins: Vec<Space>, outs: Vec<Space>) -> Result<ChoiOperator> {
    let in_labels = ins.iter().map(|s| s.label.clone()).collect();
    let out_labels = outs.iter().map(|s| s.label.clone()).collect();
    let spaces: Vec<Space> = ins.into_iter().chain(outs).collect();
    ChoiOperator::new(LabeledOperator::square(spaces, j)?, in_labels, out_labels)
}

/// `Ψ(ρ)`; the result carries the output labels `out1…outn`.
pub fn apply_psi(psi: &PsiChannel, rho: &LabeledOperator) -> Result<LabeledOperator> {
    let out = psi.apply_matrix(rho.entries())?;
    LabeledOperator::square(psi_out_spaces(psi.d, psi.n), out)
}

/// Choi operator of the exact twirl `ρ ↦ ∫dU U^{⊗n} ρ U^{†⊗n}` on `(ℂ^d)^{⊗n}`.
pub fn twirl_channel_choi(d: usize, n: usize) -> Result<ChoiOperator> {
    build_psi(d, d, n)?.choi()
}

/// `‖J(Ψ ∘ V^{⊗n}) − J(twirl)‖_F`.
pub fn lemma2_residual(v: &LabeledOperator, n: usize) -> Result<f64> {
    let m = v.entries();
    let res = isometry_residual(m);
    if res > 1e-10 {
        return Err(HoqtError::NotIsometry(res));
    }
    let psi = build_psi(m.ncols(), m.nrows(), n)?;
    lemma2_residual_with(&psi, m, &twirl_channel_choi(m.ncols(), n)?)
}

/// [`lemma2_residual`] with a prebuilt channel and twirl Choi operator.
pub fn lemma2_residual_with(psi: &PsiChannel, v: &CMatrix, twirl: &ChoiOperator) -> Result<f64> {
    let j = psi.choi_after_isometry(v)?;
    Ok(crate::tensor::frob_dist(j.entries(), twirl.entries()))
}
