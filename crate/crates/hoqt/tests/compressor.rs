use hoqt::choi::{apply_channel, validate_channel};
use hoqt::compressor::*;
use hoqt::rep::{all_permutations, perm_matrix, tensor_power};
use hoqt::tensor::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Choi operator of the twirl from the Weingarten pseudo-inverse:
/// `J = Σ_{σ,τ} G⁺_{τσ} P_σ ⊗ P_τ` with `G_{στ} = Tr(P_σ† P_τ)`.
fn twirl_choi_oracle(d: usize, n: usize) -> CMatrix {
    let perms: Vec<CMatrix> = all_permutations(n).iter().map(|p| perm_matrix(p, d)).collect();
    let m = perms.len();
    let gram = DMatrix::<f64>::from_fn(m, m, |i, j| (perms[i].adjoint() * &perms[j]).trace().re);
    let pinv = gram.pseudo_inverse(1e-9).unwrap();
    let dim = perms[0].nrows();
    let mut j = CMatrix::zeros(dim * dim, dim * dim);
    for s in 0..m {
        for t in 0..m {
            j += perms[s].kronecker(&perms[t]) * C64::new(pinv[(t, s)], 0.0);
        }
    }
    j
}

/// Monte-Carlo average of `|U^{⊗n}⟩⟩⟨⟨U^{⊗n}|`.
fn twirl_choi_sampled(d: usize, n: usize, samples: usize, rng: &mut RandomSource) -> CMatrix {
    let dim = d.pow(n as u32);
    let mut acc = CMatrix::zeros(dim * dim, dim * dim);
    for _ in 0..samples {
        let u = tensor_power(haar_unitary(d, rng).unwrap().entries(), n);
        let ket = CMatrix::from_fn(dim * dim, 1, |r, _| u[(r % dim, r / dim)]);
        acc += &ket * ket.adjoint();
    }
    acc / C64::new(samples as f64, 0.0)
}

fn random_state(spaces: Vec<Space>, rng: &mut RandomSource) -> LabeledOperator {
    let n = total_dim(&spaces);
    let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    LabeledOperator::square(spaces, rho / tr).unwrap()
}

fn embedding(d: usize, big_d: usize) -> CMatrix {
    CMatrix::from_fn(big_d, d, |i, j| if i == j { ONE } else { ZERO })
}

#[test]
fn twirl_choi_matches_weingarten() {
    for (d, n) in [(2usize, 1usize), (2, 2), (2, 3), (3, 2), (3, 3)] {
        let j = twirl_channel_choi(d, n).unwrap();
        assert!(frob_dist(j.entries(), &twirl_choi_oracle(d, n)) < 1e-9, "d={d} n={n}");
    }
}

#[test]
fn twirl_choi_single_copy_is_depolarizing() {
    let j = twirl_channel_choi(3, 1).unwrap();
    let expect = CMatrix::identity(9, 9) / C64::new(3.0, 0.0);
    assert!(frob_dist(j.entries(), &expect) < 1e-12);
}

#[test]
fn twirl_choi_matches_haar_sampling() {
    let mut rng = RandomSource::new(31);
    let sampled = twirl_choi_sampled(2, 2, 10_000, &mut rng);
    let exact = twirl_channel_choi(2, 2).unwrap();
    let worst = (exact.entries() - sampled).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(worst < 0.02, "max entry deviation {worst}");
}

#[test]
fn twirl_choi_is_idempotent() {
    let j = twirl_channel_choi(2, 2).unwrap();
    let mid = [("out1", "m1"), ("out2", "m2")];
    let first = j.relabel(&mid).unwrap();
    let second = j.relabel(&[("in1", "m1"), ("in2", "m2")]).unwrap();
    let twice = first.link(&second).unwrap().permute(&["in1", "in2", "out1", "out2"]).unwrap();
    assert!(frob_dist(twice.entries(), j.entries()) < 1e-9);
}

#[test]
fn psi_equals_twirl_when_dimensions_agree() {
    for (d, n) in [(2usize, 2usize), (2, 3), (3, 2)] {
        let psi = build_psi(d, d, n).unwrap();
        let j = psi.choi().unwrap();
        assert!(frob_dist(j.entries(), &twirl_choi_oracle(d, n)) < 1e-9);
    }
}

#[test]
fn psi_qubit_to_scalar() {
    let psi = build_psi(1, 2, 1).unwrap();
    let mut rng = RandomSource::new(32);
    let rho = random_state(psi_in_spaces(2, 1), &mut rng);
    let out = apply_psi(&psi, &rho.scale_re(3.0)).unwrap();
    assert_eq!(out.nrows(), 1);
    assert!((out.entries()[(0, 0)] - C64::new(3.0, 0.0)).norm() < 1e-12);
}

#[test]
fn psi_is_cptp() {
    for (d, big_d, n) in [(2usize, 3usize, 3usize), (2, 4, 2), (1, 3, 2), (2, 3, 1)] {
        let j = build_psi(d, big_d, n).unwrap().choi().unwrap();
        let report = validate_channel(&j, 1e-9).unwrap();
        assert!(report.cp && report.tp, "{d} {big_d} {n}: {report:?}");
        if (d, big_d, n) == (2, 3, 3) {
            assert!(report.tp_residual <= 1e-10);
        }
    }
}

#[test]
fn psi_rejects_bad_arguments() {
    assert!(build_psi(3, 2, 2).is_err());
    assert!(build_psi(0, 2, 2).is_err());
    assert!(build_psi(2, 2, 0).is_err());
    assert!(matches!(build_psi(2, 5, 5), Err(hoqt::HoqtError::Budget(_))));
    let psi = build_psi(2, 3, 2).unwrap();
    let wrong = LabeledOperator::identity(vec![sp("a", 4)]);
    assert!(matches!(apply_psi(&psi, &wrong), Err(hoqt::HoqtError::DimensionMismatch(_))));
}

#[test]
fn apply_psi_matches_choi_contraction() {
    let mut rng = RandomSource::new(33);
    for (d, big_d, n) in [(2usize, 3usize, 2usize), (2, 3, 3), (2, 4, 2)] {
        let psi = build_psi(d, big_d, n).unwrap();
        let j = psi.choi().unwrap();
        for _ in 0..3 {
            let rho = random_state(psi_in_spaces(big_d, n), &mut rng);
            let direct = apply_psi(&psi, &rho).unwrap();
            let via = apply_channel(&j, &rho).unwrap();
            assert!(frob_dist(direct.entries(), via.entries()) < 1e-10);
        }
    }
}

#[test]
fn apply_psi_trivial_inputs() {
    let twirl = build_psi(2, 2, 3).unwrap();
    let mixed = LabeledOperator::identity(psi_in_spaces(2, 3)).scale_re(1.0 / 8.0);
    let out = apply_psi(&twirl, &mixed).unwrap();
    assert!(frob_dist(out.entries(), &(CMatrix::identity(8, 8) / C64::new(8.0, 0.0))) < 1e-12);

    // for d < D each block keeps its population d_U^{(D)} d_S / D^n
    let psi = build_psi(2, 3, 3).unwrap();
    let mixed = LabeledOperator::identity(psi_in_spaces(3, 3)).scale_re(1.0 / 27.0);
    let out = apply_psi(&psi, &mixed).unwrap();
    let mut expect = CMatrix::zeros(8, 8);
    let mut high = 1.0;
    for mu in hoqt::rep::partitions(3, Some(2)).unwrap() {
        let (big, small) = (hoqt::rep::dim_u(&mu, 3) as f64, hoqt::rep::dim_u(&mu, 2) as f64);
        high -= big * hoqt::rep::dim_sym(&mu) as f64 / 27.0;
        expect += hoqt::rep::isotypic_projector_matrix(&mu, 2) * C64::new(big / (27.0 * small), 0.0);
    }
    expect += CMatrix::identity(8, 8) * C64::new(high / 8.0, 0.0);
    assert!(frob_dist(out.entries(), &expect) < 1e-12);
    assert!(frob_dist(out.entries(), &(CMatrix::identity(8, 8) / C64::new(8.0, 0.0))) > 1e-2);

    let mut rng = RandomSource::new(34);
    let kets: Vec<LabeledOperator> = (1..=3)
        .map(|i| {
            let amps = (0..3).map(|_| rng.complex_gaussian()).collect();
            let k = LabeledOperator::ket(vec![Space::new(format!("in{i}"), 3)], amps).unwrap();
            k.scale_re(1.0 / k.frobenius_norm())
        })
        .collect();
    let pure = projector(&kron_all(&kets).unwrap()).unwrap();
    let out = apply_psi(&psi, &pure).unwrap();
    assert!((out.trace() - ONE).norm() < 1e-12);
}

#[test]
fn high_rows_go_to_the_maximally_mixed_state() {
    // the antisymmetric subspace of (ℂ³)^{⊗3} has l(μ)=3 > d=2
    let psi = build_psi(2, 3, 3).unwrap();
    let anti = hoqt::rep::isotypic_projector(&hoqt::rep::YoungDiagram::column(3), 3, 3).unwrap();
    let anti = LabeledOperator::square(psi_in_spaces(3, 3), anti.into_entries()).unwrap();
    let out = apply_psi(&psi, &anti).unwrap();
    assert!(frob_dist(out.entries(), &(CMatrix::identity(8, 8) / C64::new(8.0, 0.0))) < 1e-12);
}

#[test]
fn compressed_isometry_powers_equal_the_twirl() {
    let v = LabeledOperator::new(vec![sp("out", 3)], vec![sp("in", 2)], embedding(2, 3)).unwrap();
    assert!(lemma2_residual(&v, 3).unwrap() <= 1e-9);

    let mut rng = RandomSource::new(35);
    for n in [2usize, 3] {
        let psi = build_psi(2, 3, n).unwrap();
        let twirl = twirl_channel_choi(2, n).unwrap();
        let oracle = twirl_choi_oracle(2, n);
        assert!(frob_dist(twirl.entries(), &oracle) < 1e-9);
        let worst = (0..20)
            .map(|_| {
                let v = haar_isometry(2, 3, &mut rng).unwrap();
                lemma2_residual_with(&psi, v.entries(), &twirl).unwrap()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "n={n}: {worst}");
    }

    let u = haar_unitary(2, &mut rng).unwrap();
    assert!(lemma2_residual(&u, 2).unwrap() <= 1e-9);
}

#[test]
fn lemma2_rejects_non_isometries() {
    let bad = LabeledOperator::new(vec![sp("out", 3)], vec![sp("in", 2)], embedding(2, 3) * C64::new(2.0, 0.0)).unwrap();
    assert!(matches!(lemma2_residual(&bad, 2), Err(hoqt::HoqtError::NotIsometry(_))));
}

#[test]
fn output_is_independent_of_the_isometry() {
    let mut rng = RandomSource::new(36);
    let psi = build_psi(2, 4, 2).unwrap();
    let rho = random_state(psi_in_spaces(2, 2), &mut rng);
    let outputs: Vec<CMatrix> = (0..4)
        .map(|_| {
            let vn = tensor_power(haar_isometry(2, 4, &mut rng).unwrap().entries(), 2);
            let moved = &vn * rho.entries() * vn.adjoint();
            psi.apply_matrix(&moved).unwrap()
        })
        .collect();
    for o in &outputs[1..] {
        assert!(frob_dist(o, &outputs[0]) <= 1e-9);
    }
}

#[test]
fn twirl_absorbs_unitary_conjugation() {
    let mut rng = RandomSource::new(37);
    let psi = build_psi(2, 2, 3).unwrap();
    let rho = random_state(psi_in_spaces(2, 3), &mut rng);
    let un = tensor_power(haar_unitary(2, &mut rng).unwrap().entries(), 3);
    let moved = &un * rho.entries() * un.adjoint();
    let a = psi.apply_matrix(rho.entries()).unwrap();
    let b = psi.apply_matrix(&moved).unwrap();
    assert!(frob_dist(&a, &b) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn psi_commutes_with_permutations(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = RandomSource::new(seed);
        let psi = build_psi(2, 3, 3).unwrap();
        let rho = random_state(psi_in_spaces(3, 3), &mut rng);
        let sigma = &all_permutations(3)[which];
        let p_in = perm_matrix(sigma, 3);
        let p_out = perm_matrix(sigma, 2);
        let lhs = psi.apply_matrix(&(&p_in * rho.entries() * p_in.adjoint())).unwrap();
        let rhs = &p_out * psi.apply_matrix(rho.entries()).unwrap() * p_out.adjoint();
        prop_assert!(frob_dist(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn psi_output_is_unitarily_invariant(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let psi = build_psi(2, 3, 2).unwrap();
        let rho = random_state(psi_in_spaces(3, 2), &mut rng);
        let out = psi.apply_matrix(rho.entries()).unwrap();
        let un = tensor_power(haar_unitary(2, &mut rng).unwrap().entries(), 2);
        prop_assert!(frob_dist(&(&un * &out * un.adjoint()), &out) < 1e-10);
        prop_assert!((out.trace() - ONE).norm() < 1e-10);
        prop_assert!(herm_eigenvalues(&out)[0] > -1e-10);
    }
}
