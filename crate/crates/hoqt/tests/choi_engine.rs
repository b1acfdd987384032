use hoqt::choi::*;
use hoqt::tensor::*;
use proptest::prelude::*;

/// Random CPTP map from the joint `inputs` to the joint `outputs`.
fn channel(inputs: &[Space], outputs: &[Space], rank: usize, rng: &mut RandomSource) -> ChoiOperator {
    let din = total_dim(inputs);
    let dout = total_dim(outputs);
    let rank = rank.max(din.div_ceil(dout));
    let j = random_cptp(sp("tmp_in", din), sp("tmp_out", dout), rank, rng).unwrap();
    let spaces: Vec<Space> = inputs.iter().chain(outputs).cloned().collect();
    let op = j.op().with_spaces(spaces.clone(), spaces).unwrap();
    ChoiOperator::new(
        op,
        inputs.iter().map(|s| s.label.clone()).collect(),
        outputs.iter().map(|s| s.label.clone()).collect(),
    )
    .unwrap()
}

fn unitary_on(label_in: &str, label_out: &str, d: usize, rng: &mut RandomSource) -> LabeledOperator {
    haar_unitary(d, rng).unwrap().with_spaces(vec![sp(label_out, d)], vec![sp(label_in, d)]).unwrap()
}

fn layout(c: &ChoiOperator, sig: &SlotSignature) -> LabeledOperator {
    let order: Vec<String> = sig.spaces().iter().map(|s| s.label.clone()).collect();
    let refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
    c.op().permute_systems(&refs).unwrap()
}

/// Sequential comb with teeth in the given slot order, built from random channels.
fn circuit_comb(sig: &SlotSignature, order: &[usize], rng: &mut RandomSource) -> LabeledOperator {
    let anc = 2;
    let mut prev: Vec<Space> = vec![sp("P", sig.dim_p)];
    let mut acc: Option<ChoiOperator> = None;
    for (step, &slot) in order.iter().enumerate() {
        let a = sp(&format!("a{step}"), anc);
        let outs = vec![sp(&SlotSignature::in_label(slot), sig.slots[slot].0), a.clone()];
        let e = channel(&prev, &outs, 2, rng);
        acc = Some(match acc {
            None => e,
            Some(c) => c.link(&e).unwrap(),
        });
        prev = vec![sp(&SlotSignature::out_label(slot), sig.slots[slot].1), a];
    }
    let dec = channel(&prev, &[sp("F", sig.dim_f)], 2, rng);
    let c = match acc {
        None => dec,
        Some(c) => c.link(&dec).unwrap(),
    };
    layout(&c, sig)
}

/// Parallel comb: one encoder feeding every slot, one decoder.
fn parallel_circuit(sig: &SlotSignature, rng: &mut RandomSource) -> LabeledOperator {
    let a = sp("anc", 2);
    let mut outs: Vec<Space> = (0..sig.k()).map(|i| sp(&SlotSignature::in_label(i), sig.slots[i].0)).collect();
    outs.push(a.clone());
    let e = channel(&[sp("P", sig.dim_p)], &outs, 2, rng);
    let mut ins: Vec<Space> = (0..sig.k()).map(|i| sp(&SlotSignature::out_label(i), sig.slots[i].1)).collect();
    ins.push(a);
    let dcd = channel(&ins, &[sp("F", sig.dim_f)], 2, rng);
    layout(&e.link(&dcd).unwrap(), sig)
}

#[test]
fn isometry_choi_examples() {
    let id = LabeledOperator::new(vec![sp("out", 2)], vec![sp("in", 2)], CMatrix::identity(2, 2)).unwrap();
    let j = choi_of_isometry(&id).unwrap();
    let phi = projector(&max_entangled(2).unwrap()).unwrap().scale_re(2.0);
    assert!(frob_dist(j.entries(), phi.entries()) < 1e-15);

    let mut rng = RandomSource::new(1);
    let v = haar_isometry(2, 4, &mut rng).unwrap();
    let j = choi_of_isometry(&v).unwrap();
    assert!((j.op().trace().re - 2.0).abs() < 1e-12);
    let vals = herm_eigenvalues(j.entries());
    assert!(vals[..vals.len() - 1].iter().all(|x| x.abs() < 1e-12));

    let g = CMatrix::from_fn(3, 3, |_, _| rng.complex_gaussian());
    let rho = LabeledOperator::square(vec![sp("in", 2)], {
        let g2 = g.view((0, 0), (2, 2)).clone_owned();
        &g2 * g2.adjoint()
    })
    .unwrap();
    let out = apply_channel(&j, &rho).unwrap();
    let direct = v.entries() * rho.entries() * v.entries().adjoint();
    assert!(frob_dist(out.entries(), &direct) < 1e-12);

    let bad = LabeledOperator::new(vec![sp("out", 3)], vec![sp("in", 2)], CMatrix::from_element(3, 2, ONE)).unwrap();
    assert!(matches!(choi_of_isometry(&bad), Err(hoqt::HoqtError::NotIsometry(_))));
}

#[test]
fn kraus_choi_examples() {
    let mut rng = RandomSource::new(2);
    let u = unitary_on("in", "out", 2, &mut rng);
    let j = choi_from_kraus(std::slice::from_ref(&u)).unwrap();
    assert_eq!(herm_eigenvalues(j.entries()).iter().filter(|x| x.abs() > 1e-10).count(), 1);

    // completely depolarizing with Kraus |i><j|/√2
    let mut ks = Vec::new();
    for i in 0..2 {
        for jx in 0..2 {
            let mut m = CMatrix::zeros(2, 2);
            m[(i, jx)] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            ks.push(LabeledOperator::new(vec![sp("out", 2)], vec![sp("in", 2)], m).unwrap());
        }
    }
    let j = choi_from_kraus(&ks).unwrap();
    let marg = j.op().partial_trace(&["out"]).unwrap();
    assert!(frob_dist(marg.entries(), &CMatrix::identity(2, 2)) < 1e-14);

    let ks: Vec<LabeledOperator> = (0..3)
        .map(|_| {
            let m = CMatrix::from_fn(3, 2, |_, _| rng.complex_gaussian());
            LabeledOperator::new(vec![sp("out", 3)], vec![sp("in", 2)], m).unwrap()
        })
        .collect();
    let j = choi_from_kraus(&ks).unwrap();
    let mut oracle = CMatrix::zeros(6, 6);
    for k in &ks {
        let e = k.entries();
        let v = CMatrix::from_fn(6, 1, |r, _| e[(r % 3, r / 3)]);
        oracle += &v * v.adjoint();
    }
    assert!(frob_dist(j.entries(), &oracle) < 1e-12);

    let mismatched = LabeledOperator::new(vec![sp("out", 2)], vec![sp("in", 2)], CMatrix::identity(2, 2)).unwrap();
    assert!(choi_from_kraus(&[ks[0].clone(), mismatched]).is_err());
}

#[test]
fn link_product_examples() {
    let mut rng = RandomSource::new(3);
    let j = channel(&[sp("A", 2)], &[sp("B", 3)], 2, &mut rng);
    let ident = LabeledOperator::new(vec![sp("C", 3)], vec![sp("B", 3)], CMatrix::identity(3, 3)).unwrap();
    let jid = choi_of_isometry(&ident).unwrap();
    let linked = j.link(&jid).unwrap();
    let relabeled = j.relabel(&[("B", "C")]).unwrap();
    assert!(frob_dist(linked.entries(), relabeled.entries()) < 1e-14);

    for _ in 0..10 {
        let u = unitary_on("a", "b", 2, &mut rng);
        let v = unitary_on("b", "c", 2, &mut rng);
        let ju = choi_of_isometry(&u).unwrap();
        let jv = choi_of_isometry(&v).unwrap();
        let uv = v.mul(&u).unwrap();
        let juv = choi_of_isometry(&uv).unwrap();
        assert!(frob_dist(ju.link(&jv).unwrap().entries(), juv.entries()) <= 1e-10);
        // commutative up to reordering
        let other = jv.link(&ju).unwrap().permute(&["a", "c"]).unwrap();
        assert!(frob_dist(other.entries(), juv.entries()) <= 1e-10);
    }

    let x = channel(&[sp("A", 2)], &[sp("B", 2)], 1, &mut rng);
    let y = channel(&[sp("C", 2)], &[sp("D", 2)], 1, &mut rng);
    let t = x.link(&y).unwrap();
    let k = kron(x.op(), y.op()).unwrap();
    assert!(frob_dist(t.entries(), k.entries()) < 1e-14);

    let z = channel(&[sp("B", 3)], &[sp("E", 2)], 1, &mut rng);
    assert!(matches!(x.link(&z), Err(hoqt::HoqtError::DimensionMismatch(_))));
}

#[test]
fn link_product_composes_chains() {
    let mut rng = RandomSource::new(4);
    let labels = ["L0", "L1", "L2", "L3"];
    for trial in 0..50 {
        let dims = [2, 1 + (trial % 3) + 1, 2, 3];
        let maps: Vec<ChoiOperator> = (0..3)
            .map(|i| channel(&[sp(labels[i], dims[i])], &[sp(labels[i + 1], dims[i + 1])], 1 + trial % 3, &mut rng))
            .collect();
        let g = CMatrix::from_fn(2, 2, |_, _| rng.complex_gaussian());
        let rho = LabeledOperator::square(vec![sp("L0", 2)], &g * g.adjoint()).unwrap();
        let mut state = rho.clone();
        for m in &maps {
            state = apply_channel(m, &state).unwrap();
        }
        let left = maps[0].link(&maps[1]).unwrap().link(&maps[2]).unwrap();
        let right = maps[0].link(&maps[1].link(&maps[2]).unwrap()).unwrap();
        assert!(frob_dist(left.entries(), right.entries()) < 1e-9);
        let composed = apply_channel(&left, &rho).unwrap();
        assert!(frob_dist(composed.entries(), state.entries()) <= 1e-9);
    }
}

#[test]
fn channel_validation() {
    let mut rng = RandomSource::new(5);
    let v = haar_isometry(2, 3, &mut rng).unwrap();
    let r = validate_channel(&choi_of_isometry(&v).unwrap(), 1e-9).unwrap();
    assert!(r.cp && r.tp);

    let neg = LabeledOperator::identity(vec![sp("in", 2), sp("out", 2)]).scale_re(-1.0);
    let neg = ChoiOperator::new(neg, vec!["in".into()], vec!["out".into()]).unwrap();
    let r = validate_channel(&neg, 1e-9).unwrap();
    assert!(!r.cp && r.min_eig < 0.0);

    for _ in 0..100 {
        let j = random_cptp(sp("in", 2), sp("out", 3), 1 + rng.below(4), &mut rng).unwrap();
        let r = validate_channel(&j, 1e-10).unwrap();
        assert!(r.cp && r.tp, "{r:?}");
    }
    let j = random_cptp(sp("in", 2), sp("out", 2), 2, &mut rng).unwrap();
    let g = CMatrix::from_fn(4, 4, |_, _| rng.complex_gaussian());
    let pert = (&g + g.adjoint()) * C64::new(1e-3 / (&g + g.adjoint()).norm(), 0.0);
    let bad = ChoiOperator::new(
        LabeledOperator::square(j.op().row_spaces().to_vec(), j.entries() + pert).unwrap(),
        vec!["in".into()],
        vec!["out".into()],
    )
    .unwrap();
    let r = validate_channel(&bad, 1e-6).unwrap();
    assert!(!(r.cp && r.tp));
    assert!(random_cptp(sp("in", 2), sp("out", 2), 0, &mut rng).is_err());
}

#[test]
fn single_slot_sequential_equals_parallel() {
    let sig = SlotSignature::uniform(2, 2, 3, 2, 1).unwrap();
    let par = comb_constraints(CombClass::Parallel, &sig).unwrap();
    let seq = comb_constraints(CombClass::Sequential, &sig).unwrap();
    let mut rng = RandomSource::new(6);
    let n = sig.total_dim();
    for _ in 0..5 {
        let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
        let c = LabeledOperator::square(sig.spaces(), &g + g.adjoint()).unwrap();
        let a = par.project(&c).unwrap();
        let b = seq.project(&c).unwrap();
        assert!(frob_dist(a.entries(), b.entries()) < 1e-10);
    }
}

#[test]
fn circuit_combs_satisfy_their_constraints() {
    let mut rng = RandomSource::new(7);
    for sig in [
        SlotSignature::uniform(2, 2, 2, 2, 1).unwrap(),
        SlotSignature::uniform(2, 2, 2, 2, 2).unwrap(),
        SlotSignature::new(2, vec![(2, 1), (1, 2)], 2).unwrap(),
    ] {
        let seq = comb_constraints(CombClass::Sequential, &sig).unwrap();
        let gen = comb_constraints(CombClass::General, &sig).unwrap();
        let par = comb_constraints(CombClass::Parallel, &sig).unwrap();
        for _ in 0..3 {
            let order: Vec<usize> = (0..sig.k()).collect();
            let c = circuit_comb(&sig, &order, &mut rng);
            let (lin, tr) = seq.residuals(&c).unwrap();
            assert!(lin <= 1e-9 && tr <= 1e-9, "sequential {lin} {tr}");
            let (lin, tr) = gen.residuals(&c).unwrap();
            assert!(lin <= 1e-9 && tr <= 1e-9, "general {lin} {tr}");

            let p = parallel_circuit(&sig, &mut rng);
            for cons in [&par, &seq, &gen] {
                let (lin, tr) = cons.residuals(&p).unwrap();
                assert!(lin <= 1e-9 && tr <= 1e-9, "{} {lin} {tr}", cons.class);
            }
        }
    }
}

#[test]
fn mixed_orderings_are_general_but_not_sequential() {
    let mut rng = RandomSource::new(8);
    let sig = SlotSignature::uniform(2, 2, 2, 2, 2).unwrap();
    let forward = circuit_comb(&sig, &[0, 1], &mut rng);
    let backward = circuit_comb(&sig, &[1, 0], &mut rng);
    let mix = forward.scale_re(0.5).add(&backward.scale_re(0.5)).unwrap();
    let gen = comb_constraints(CombClass::General, &sig).unwrap();
    let seq = comb_constraints(CombClass::Sequential, &sig).unwrap();
    let (lin, tr) = gen.residuals(&mix).unwrap();
    assert!(lin <= 1e-9 && tr <= 1e-9);
    assert!(seq.linear_residual(&mix).unwrap() > 1e-3);
    assert!(seq.linear_residual(&backward).unwrap() > 1e-3);
}

#[test]
fn containment_chain_on_projected_operators() {
    let mut rng = RandomSource::new(9);
    for k in 1..=3 {
        let sig = SlotSignature::uniform(2, 2, 2, 1 + (k % 2), k).unwrap();
        let n = sig.total_dim();
        let par = comb_constraints(CombClass::Parallel, &sig).unwrap();
        let seq = comb_constraints(CombClass::Sequential, &sig).unwrap();
        let gen = comb_constraints(CombClass::General, &sig).unwrap();
        for _ in 0..2 {
            let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
            let c = LabeledOperator::square(sig.spaces(), &g + g.adjoint()).unwrap();
            let cp = par.project(&c).unwrap();
            assert!(par.linear_residual(&cp).unwrap() <= 1e-9);
            assert!(seq.linear_residual(&cp).unwrap() <= 1e-9);
            assert!(gen.linear_residual(&cp).unwrap() <= 1e-9);
            let cs = seq.project(&c).unwrap();
            assert!(seq.linear_residual(&cs).unwrap() <= 1e-9);
            assert!(gen.linear_residual(&cs).unwrap() <= 1e-9);
            let cg = gen.project(&c).unwrap();
            assert!(gen.linear_residual(&cg).unwrap() <= 1e-9);
        }
    }
    let sig = SlotSignature::uniform(2, 2, 2, 2, 4).unwrap();
    assert!(matches!(comb_constraints(CombClass::General, &sig), Err(hoqt::HoqtError::Unsupported(_))));
}

#[test]
fn superinstrument_validation() {
    let mut rng = RandomSource::new(10);
    let sig = SlotSignature::uniform(2, 2, 2, 2, 1).unwrap();
    let c = circuit_comb(&sig, &[0], &mut rng);
    let si = Superinstrument::new(c.scale_re(0.5), c.scale_re(0.5), CombClass::Parallel, sig.clone()).unwrap();
    assert!(validate_superinstrument(&si, 1e-9).unwrap().passed);

    let n = sig.total_dim();
    let mut shift = CMatrix::zeros(n, n);
    shift[(0, 0)] = C64::new(1e-3, 0.0);
    let s = LabeledOperator::square(sig.spaces(), c.scale_re(0.5).entries() - &shift).unwrap();
    let fb = LabeledOperator::square(sig.spaces(), c.scale_re(0.5).entries() + &shift).unwrap();
    let s_min = herm_eigenvalues(s.entries())[0];
    let report = validate_superinstrument(&Superinstrument::new(s, fb, CombClass::Parallel, sig).unwrap(), 1e-9).unwrap();
    if s_min < -1e-9 {
        assert!(!report.passed && report.s_min_eig < 0.0);
    }
    // an explicitly negative branch always fails
    let sig = SlotSignature::uniform(1, 1, 1, 1, 1).unwrap();
    let one = LabeledOperator::identity(sig.spaces());
    let bad = Superinstrument::new(one.scale_re(-1e-3), one.scale_re(1.0 + 1e-3), CombClass::Parallel, sig).unwrap();
    let r = validate_superinstrument(&bad, 1e-9).unwrap();
    assert!(!r.passed && r.s_min_eig < 0.0);
}

#[test]
fn branches_induce_an_instrument() {
    let mut rng = RandomSource::new(11);
    let sig = SlotSignature::uniform(2, 2, 2, 2, 2).unwrap();
    for class in [CombClass::Sequential, CombClass::General] {
        let c = circuit_comb(&sig, &[0, 1], &mut rng);
        let si = Superinstrument::new(c.scale_re(0.3), c.scale_re(0.7), class, sig.clone()).unwrap();
        assert!(validate_superinstrument(&si, 1e-9).unwrap().passed);
        let j1 = channel(&[sp("I1", 2), sp("x", 2)], &[sp("O1", 2), sp("y", 2)], 2, &mut rng);
        let j2 = channel(&[sp("I2", 2)], &[sp("O2", 2)], 2, &mut rng);
        let inputs = j1.link(&j2).unwrap();
        let s_out = si.s.link(&inputs).unwrap();
        let f_out = si.f.link(&inputs).unwrap();
        assert!(herm_eigenvalues(s_out.entries())[0] >= -1e-9);
        assert!(herm_eigenvalues(f_out.entries())[0] >= -1e-9);
        let total = ChoiOperator::new(s_out.op().add(f_out.op()).unwrap(), s_out.in_labels().to_vec(), s_out.out_labels().to_vec()).unwrap();
        let r = validate_channel(&total, 1e-9).unwrap();
        assert!(r.tp && r.cp, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composition_oracle(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = RandomSource::new(seed);
        let a = channel(&[sp("x", d)], &[sp("y", 2)], 2, &mut rng);
        let b = channel(&[sp("y", 2)], &[sp("z", d)], 2, &mut rng);
        let g = CMatrix::from_fn(d, d, |_, _| rng.complex_gaussian());
        let rho = LabeledOperator::square(vec![sp("x", d)], &g * g.adjoint()).unwrap();
        let two_step = apply_channel(&b, &apply_channel(&a, &rho).unwrap()).unwrap();
        let one_step = apply_channel(&a.link(&b).unwrap(), &rho).unwrap();
        prop_assert!(frob_dist(two_step.entries(), one_step.entries()) <= 1e-9 * (1.0 + rho.frobenius_norm()));
    }

    #[test]
    fn constraint_projection_is_idempotent(seed in any::<u64>(), class_ix in 0usize..3) {
        let class = [CombClass::Parallel, CombClass::Sequential, CombClass::General][class_ix];
        let sig = SlotSignature::uniform(2, 2, 2, 1, 2).unwrap();
        let cons = comb_constraints(class, &sig).unwrap();
        let mut rng = RandomSource::new(seed);
        let n = sig.total_dim();
        let g = CMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
        let c = LabeledOperator::square(sig.spaces(), g).unwrap();
        let once = cons.project(&c).unwrap();
        let twice = cons.project(&once).unwrap();
        prop_assert!(frob_dist(once.entries(), twice.entries()) < 1e-9);
    }
}
