//! Invariant suites behind `hoqt verify`.

use hoqt::choi::{comb_constraints, CombClass, SlotSignature};
use hoqt::compressor::{build_psi, lemma2_residual_with, twirl_channel_choi};
use hoqt::rep::{all_permutations, perm_matrix, schur_data};
use hoqt::tensor::{frob_dist, haar_isometry, haar_unitary};
use hoqt::{CMatrix, LabeledOperator, RandomSource, Result};
use serde::Serialize;

pub const THRESHOLD: f64 = 1e-9;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, residual: f64) -> Self {
        Check { name: name.into(), residual, threshold: THRESHOLD, passed: residual <= THRESHOLD }
    }
}

/// Compressed channel after `V^{⊗n}` against the Haar twirl on `samples`
/// random isometries.
pub fn lemma2(d: usize, big_d: usize, n: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let psi = build_psi(d, big_d, n)?;
    let twirl = twirl_channel_choi(d, n)?;
    let mut rng = RandomSource::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let v = haar_isometry(d, big_d, &mut rng)?;
        worst = worst.max(lemma2_residual_with(&psi, v.entries(), &twirl)?);
    }
    Ok(vec![Check::new(format!("twirl after V^{n} over {samples} isometries"), worst)])
}

fn tensor_power(u: &CMatrix, k: usize) -> CMatrix {
    (1..k).fold(u.clone(), |acc, _| acc.kronecker(u))
}

/// Completeness, orthogonality and commutation of the Schur–Weyl projectors.
pub fn schur(d: usize, k: usize, seed: u64) -> Result<Vec<Check>> {
    let data = schur_data(d, k)?;
    let n = data.total_dim();
    let id = CMatrix::identity(n, n);
    let sum = data.blocks.iter().fold(CMatrix::zeros(n, n), |acc, b| acc + &b.projector);
    let mut orth: f64 = 0.0;
    for (i, a) in data.blocks.iter().enumerate() {
        for (j, b) in data.blocks.iter().enumerate() {
            let prod = &a.projector * &b.projector;
            let want = if i == j { a.projector.clone() } else { CMatrix::zeros(n, n) };
            orth = orth.max(frob_dist(&prod, &want));
        }
    }
    let u = haar_unitary(d, &mut RandomSource::new(seed))?.into_entries();
    let uk = tensor_power(&u, k);
    let mut comm_u: f64 = 0.0;
    let mut comm_s: f64 = 0.0;
    let mut iso: f64 = 0.0;
    let mut dims = 0.0f64;
    let perms: Vec<CMatrix> = all_permutations(k).iter().map(|s| perm_matrix(s, d)).collect();
    for b in &data.blocks {
        comm_u = comm_u.max(frob_dist(&(&uk * &b.projector), &(&b.projector * &uk)));
        for p in &perms {
            comm_s = comm_s.max(frob_dist(&(p * &b.projector), &(&b.projector * p)));
        }
        let w = &b.isometry;
        iso = iso.max(frob_dist(&(w.adjoint() * w), &CMatrix::identity(w.ncols(), w.ncols())));
        iso = iso.max(frob_dist(&(w * w.adjoint()), &b.projector));
        dims += (b.projector.trace().re - (b.dim_u * b.dim_sym) as f64).abs();
    }
    Ok(vec![
        Check::new("completeness", frob_dist(&sum, &id)),
        Check::new("orthogonality", orth),
        Check::new("commutes with U^k", comm_u),
        Check::new("commutes with permutations", comm_s),
        Check::new("block isometries", iso),
        Check::new("rank equals dim_U * dim_S", dims),
    ])
}

/// Parallel ⊆ sequential ⊆ general on projected random operators.
pub fn comb(d: usize, big_d: usize, k: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let sig = SlotSignature::uniform(d, d, big_d, d, k)?;
    let n = sig.total_dim();
    let par = comb_constraints(CombClass::Parallel, &sig)?;
    let seq = comb_constraints(CombClass::Sequential, &sig)?;
    let gen = comb_constraints(CombClass::General, &sig)?;
    let mut rng = RandomSource::new(seed);
    let (mut ps, mut pg, mut sg): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
        let c = LabeledOperator::square(sig.spaces(), &g + g.adjoint())?;
        let cp = par.project(&c)?;
        ps = ps.max(seq.linear_residual(&cp)?);
        pg = pg.max(gen.linear_residual(&cp)?);
        let cs = seq.project(&c)?;
        sg = sg.max(gen.linear_residual(&cs)?);
    }
    Ok(vec![
        Check::new("parallel within sequential", ps),
        Check::new("parallel within general", pg),
        Check::new("sequential within general", sg),
    ])
}
