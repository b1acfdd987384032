use hoqt::tensor::*;
use proptest::prelude::*;

fn random_op(spaces: Vec<Space>, rng: &mut RandomSource) -> LabeledOperator {
    let n = total_dim(&spaces);
    LabeledOperator::square(spaces, CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian())).unwrap()
}

fn random_hermitian(n: usize, rng: &mut RandomSource) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
    &g + g.adjoint()
}

fn bit_flip() -> LabeledOperator {
    let mut x = CMatrix::zeros(2, 2);
    x[(0, 1)] = ONE;
    x[(1, 0)] = ONE;
    LabeledOperator::square(vec![sp("A", 2)], x).unwrap()
}

#[test]
fn kron_examples() {
    let a = LabeledOperator::identity(vec![sp("A", 2)]);
    let b = LabeledOperator::identity(vec![sp("B", 3)]);
    let k = kron(&a, &b).unwrap();
    assert_eq!(k.entries(), &CMatrix::identity(6, 6));
    assert_eq!(k.row_labels(), vec!["A", "B"]);

    let xi = kron(&bit_flip(), &LabeledOperator::identity(vec![sp("B", 2)])).unwrap();
    let ket = LabeledOperator::basis_ket(vec![sp("A", 2), sp("B", 2)], 0).unwrap();
    let out = xi.mul(&ket).unwrap();
    assert_eq!(out.entries()[(2, 0)], ONE);

    assert!(matches!(kron(&a, &a), Err(hoqt::HoqtError::DuplicateLabel(_))));
}

#[test]
fn kron_matches_index_oracle() {
    let mut rng = RandomSource::new(1);
    let a = random_op(vec![sp("A", 2)], &mut rng);
    let b = random_op(vec![sp("B", 3)], &mut rng);
    let k = kron(&a, &b).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..3 {
                for q in 0..3 {
                    assert_eq!(k.entries()[(i * 3 + p, j * 3 + q)], a.entries()[(i, j)] * b.entries()[(p, q)]);
                }
            }
        }
    }
}

#[test]
fn permute_examples() {
    let ket = LabeledOperator::basis_ket(vec![sp("A", 2), sp("B", 2)], 1).unwrap();
    let swapped = ket.permute_systems(&["B", "A"]).unwrap();
    assert_eq!(swapped.entries()[(2, 0)], ONE);

    let mut rng = RandomSource::new(2);
    let op = random_op(vec![sp("A", 2), sp("B", 2), sp("C", 2)], &mut rng);
    let there = op.permute_systems(&["C", "A", "B"]).unwrap();
    let back = there.permute_systems(&["A", "B", "C"]).unwrap();
    assert_eq!(back, op);
    assert!(matches!(op.permute_systems(&["A", "B", "Z"]), Err(hoqt::HoqtError::UnknownLabel(_))));
}

#[test]
fn permute_matches_permutation_matrix() {
    let mut rng = RandomSource::new(3);
    let op = random_op(vec![sp("A", 2), sp("B", 3), sp("C", 2)], &mut rng);
    let got = op.permute_systems(&["C", "A", "B"]).unwrap();
    // explicit matrix P|a b c> = |c a b>
    let mut p = CMatrix::zeros(12, 12);
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..2 {
                p[(c * 6 + a * 3 + b, a * 6 + b * 2 + c)] = ONE;
            }
        }
    }
    let expect = &p * op.entries() * p.adjoint();
    assert!(frob_dist(got.entries(), &expect) < 1e-14);
}

#[test]
fn partial_trace_examples() {
    let phi = projector(&max_entangled(2).unwrap()).unwrap();
    let marg = phi.partial_trace(&["B"]).unwrap();
    assert!(frob_dist(marg.entries(), &(CMatrix::identity(2, 2) * C64::new(0.5, 0.0))) < 1e-15);
    let all = phi.partial_trace(&["A", "B"]).unwrap();
    assert_eq!(all.nrows(), 1);
    assert!((all.entries()[(0, 0)] - phi.trace()).norm() < 1e-15);
    assert!(phi.partial_trace(&["Q"]).is_err());
}

#[test]
fn partial_trace_matches_index_sum() {
    let mut rng = RandomSource::new(4);
    let op = random_op(vec![sp("A", 2), sp("B", 3)], &mut rng);
    let ta = op.partial_trace(&["A"]).unwrap();
    let tb = op.partial_trace(&["B"]).unwrap();
    for p in 0..3 {
        for q in 0..3 {
            let s: C64 = (0..2).map(|i| op.entries()[(i * 3 + p, i * 3 + q)]).sum();
            assert!((ta.entries()[(p, q)] - s).norm() < 1e-14);
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let s: C64 = (0..3).map(|p| op.entries()[(i * 3 + p, j * 3 + p)]).sum();
            assert!((tb.entries()[(i, j)] - s).norm() < 1e-14);
        }
    }
}

#[test]
fn partial_transpose_examples() {
    let mut rng = RandomSource::new(5);
    let h = LabeledOperator::square(vec![sp("A", 3)], random_hermitian(3, &mut rng)).unwrap();
    assert_eq!(h.partial_transpose(&["A"]).unwrap(), h.conj());
    let op = random_op(vec![sp("A", 2), sp("B", 3)], &mut rng);
    let twice = op.partial_transpose(&["B"]).unwrap().partial_transpose(&["B"]).unwrap();
    assert_eq!(twice, op);
    let phi = projector(&max_entangled(2).unwrap()).unwrap();
    let vals = herm_eigenvalues(phi.partial_transpose(&["B"]).unwrap().entries());
    for (v, e) in vals.iter().zip([-0.5, 0.5, 0.5, 0.5]) {
        assert!((v - e).abs() < 1e-12);
    }
}

#[test]
fn eigen_examples() {
    let mut d = CMatrix::zeros(3, 3);
    for i in 0..3 {
        d[(i, i)] = C64::new((3 - i) as f64, 0.0);
    }
    let op = LabeledOperator::square(vec![sp("A", 3)], d).unwrap();
    let (vals, _) = herm_eig(&op).unwrap();
    assert_eq!(vals.len(), 3);
    for (v, e) in vals.iter().zip([1.0, 2.0, 3.0]) {
        assert!((v - e).abs() < 1e-14);
    }
    let (vals, _) = herm_eig(&bit_flip()).unwrap();
    assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);

    let mut nh = CMatrix::zeros(2, 2);
    nh[(0, 1)] = ONE;
    let nh = LabeledOperator::square(vec![sp("A", 2)], nh).unwrap();
    assert!(matches!(herm_eig(&nh), Err(hoqt::HoqtError::NotHermitian(_))));
}

#[test]
fn eigen_reconstruction() {
    let mut rng = RandomSource::new(6);
    for n in [2, 7, 40, 130] {
        let h = random_hermitian(n, &mut rng);
        let op = LabeledOperator::square(vec![sp("A", n)], h.clone()).unwrap();
        let (vals, vecs) = herm_eig(&op).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let v = vecs.entries();
        let lam = CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(vals[i], 0.0) } else { ZERO });
        assert!(frob_dist(&(v * lam * v.adjoint()), &h) <= 1e-9 * h.norm());
    }
}

#[test]
fn max_entangled_examples() {
    let one = max_entangled(1).unwrap();
    assert_eq!(one.entries()[(0, 0)], ONE);
    assert!(max_entangled(0).is_err());
    let phi = max_entangled(3).unwrap();
    assert!((phi.frobenius_norm() - 1.0).abs() < 1e-15);

    let mut rng = RandomSource::new(7);
    let a = CMatrix::from_fn(3, 3, |_, _| rng.complex_gaussian());
    let left = LabeledOperator::square(vec![sp("A", 3)], a.clone()).unwrap();
    let right = LabeledOperator::square(vec![sp("B", 3)], a.transpose()).unwrap();
    let l = phi.act_on_rows(&left).unwrap();
    let r = phi.act_on_rows(&right).unwrap();
    assert!(frob_dist(l.entries(), r.entries()) < 1e-14);
}

#[test]
fn haar_examples() {
    let mut rng = RandomSource::new(8);
    let s = haar_isometry(1, 1, &mut rng).unwrap();
    assert!((s.entries()[(0, 0)].norm() - 1.0).abs() < 1e-14);
    let v = haar_isometry(2, 5, &mut rng).unwrap();
    assert!(isometry_residual(v.entries()) <= 1e-12);
    assert!(haar_isometry(3, 2, &mut rng).is_err());

    let draws = 10_000;
    let mean: f64 = (0..draws)
        .map(|_| haar_unitary(2, &mut rng).unwrap().entries()[(0, 0)].norm_sqr())
        .sum::<f64>()
        / draws as f64;
    assert!((mean - 0.5).abs() < 0.02);
}

#[test]
fn random_source_is_reproducible() {
    let mut a = RandomSource::new(42);
    let mut b = RandomSource::new(42);
    for _ in 0..100 {
        assert_eq!(a.normal().to_bits(), b.normal().to_bits());
    }
    assert_eq!(RandomSource::ALGORITHM, "chacha20/seed_from_u64");
}

#[test]
fn outputs_do_not_alias_inputs() {
    let mut rng = RandomSource::new(9);
    let op = random_op(vec![sp("A", 2), sp("B", 2)], &mut rng);
    let copy = op.clone();
    let _ = op.partial_transpose(&["A"]).unwrap();
    let _ = op.permute_systems(&["B", "A"]).unwrap();
    let _ = op.partial_trace(&["B"]).unwrap();
    assert_eq!(op, copy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_of_kron_factorizes(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let mut rng = RandomSource::new(seed);
        let a = random_op(vec![sp("A", da)], &mut rng);
        let b = random_op(vec![sp("B", db)], &mut rng);
        let k = kron(&a, &b).unwrap();
        prop_assert!((k.trace() - a.trace() * b.trace()).norm() < 1e-10);
    }

    #[test]
    fn partial_trace_of_kron(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let mut rng = RandomSource::new(seed);
        let a = random_op(vec![sp("A", da)], &mut rng);
        let b = random_op(vec![sp("B", db)], &mut rng);
        let k = kron(&a, &b).unwrap();
        let ta = k.partial_trace(&["B"]).unwrap();
        prop_assert!(frob_dist(ta.entries(), a.scale(b.trace()).entries()) < 1e-10);
    }

    #[test]
    fn permutation_preserves_spectrum(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let h = random_hermitian(12, &mut rng);
        let op = LabeledOperator::square(vec![sp("A", 2), sp("B", 3), sp("C", 2)], h).unwrap();
        let p = op.permute_systems(&["B", "C", "A"]).unwrap();
        let e1 = herm_eigenvalues(op.entries());
        let e2 = herm_eigenvalues(p.entries());
        for (x, y) in e1.iter().zip(&e2) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn haar_isometries_are_isometric(seed in any::<u64>(), d in 1usize..4, extra in 0usize..3) {
        let mut rng = RandomSource::new(seed);
        let v = haar_isometry(d, d + extra, &mut rng).unwrap();
        prop_assert!(isometry_residual(v.entries()) <= 1e-12);
    }
}
