//! Exact simulation of the parallel protocols for isometry inversion,
//! pseudo complex conjugation and transposition, together with their
//! closed-form success probabilities.
//!
//! Every circuit is evaluated by branch arithmetic on Choi operators. A
//! measurement effect `E` followed by keeping the remaining systems
//! contributes `link(Eᵀ, ω)`, where `ω` is the joint state prepared by the
//! resource and the black-box calls. Success branches always map the input
//! label `P` to the output label `F`.
//!
//! Wire names: `O1, O2, …` are black-box outputs, `A1, …` ancillary ports,
//! `Pp` and `Op1, …` the compressed systems produced by `Ψ`.

use serde::Serialize;

use crate::budget;
use crate::choi::{choi_of_operator, link_product, validate_channel, ChoiOperator};
use crate::compressor::build_psi;
use crate::error::{HoqtError, Result};
use crate::linalg;
use crate::rep::{all_permutations, dim_sym, dim_u, isotypic_projector_matrix, partitions, perm_matrix, sign, tensor_power};
use crate::task::{Rational, Task};
use crate::tensor::{frob_dist, isometry_residual, kron, CMatrix, LabeledOperator, Space, C64, ZERO};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn wires(prefix: &str, n: usize, dim: usize) -> Vec<Space> {
    (1..=n).map(|i| Space::new(format!("{prefix}{i}"), dim)).collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Row-major index of a digit string in base `d`.
fn digits_index(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &x| acc * d + x)
}

fn outer(ket: &CMatrix) -> CMatrix {
    ket * ket.adjoint()
}

fn check_isometry(v: &CMatrix) -> Result<()> {
    let res = isometry_residual(v);
    if res > 1e-10 {
        return Err(HoqtError::NotIsometry(res));
    }
    Ok(())
}

/// Choi operator `P → F` of `ρ ↦ K ρ K†`.
fn choi_of(k: &CMatrix, in_dim: usize, out_dim: usize) -> Result<ChoiOperator> {
    choi_of_operator(&LabeledOperator::new(vec![Space::new("F", out_dim)], vec![Space::new("P", in_dim)], k.clone())?)
}

fn wrap_pf(op: LabeledOperator) -> Result<ChoiOperator> {
    ChoiOperator::new(op.permute_systems(&["P", "F"])?, vec!["P".into()], vec!["F".into()])
}

// --------------------------------------------------------------------------
// Antisymmetric objects

/// Levi-Civita symbol `ε_{i_1…i_n}` on `{0, …, n−1}`; `+1` on the identity.
pub fn levi_civita(indices: &[usize]) -> i64 {
    let n = indices.len();
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n || seen[i] {
            return 0;
        }
        seen[i] = true;
    }
    sign(indices)
}

/// `|A_d⟩ = Σ ε_j |j_1 … j_d⟩ / √(d!)` on `(ℂ^d)^{⊗d}`.
pub fn antisym_state(d: usize) -> CMatrix {
    let mut ket = CMatrix::zeros(d.pow(d as u32), 1);
    let norm = factorial(d).sqrt();
    for p in all_permutations(d) {
        ket[(digits_index(&p, d), 0)] = re(levi_civita(&p) as f64 / norm);
    }
    ket
}

/// `V^{a.s.} = Σ ε_k |k_1 … k_{d−1}⟩⟨k_d| / √((d−1)!)`, an isometry
/// `ℂ^d → (ℂ^d)^{⊗(d−1)}` onto the antisymmetric subspace.
pub fn antisym_encoder(d: usize) -> CMatrix {
    let mut v = CMatrix::zeros(d.pow(d as u32 - 1), d);
    let norm = factorial(d - 1).sqrt();
    for p in all_permutations(d) {
        v[(digits_index(&p[..d - 1], d), p[d - 1])] = re(levi_civita(&p) as f64 / norm);
    }
    v
}

/// Antisymmetrizer `(1/n!) Σ_σ sgn(σ) P_σ` on `(ℂ^D)^{⊗n}`; zero when `n > D`.
pub fn antisym_projector(n: usize, big_d: usize) -> CMatrix {
    let dim = big_d.pow(n as u32);
    let mut acc = CMatrix::zeros(dim, dim);
    for p in all_permutations(n) {
        acc += perm_matrix(&p, big_d) * re(sign(&p) as f64);
    }
    acc / re(factorial(n))
}

/// The antisymmetric state, encoder and projector used by the protocols.
#[derive(Clone, Debug)]
pub struct AntisymObjects {
    pub d: usize,
    pub big_d: usize,
    /// `|A_d⟩` as a column.
    pub a_d: CMatrix,
    /// `V^{a.s.}`.
    pub v_as: CMatrix,
    /// Antisymmetrizer on `(ℂ^D)^{⊗d}`.
    pub pi_as: CMatrix,
}

pub fn antisym_objects(d: usize, big_d: usize) -> Result<AntisymObjects> {
    if d == 0 || big_d < d {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D, got d={d}, D={big_d}")));
    }
    budget::check_complex(big_d.pow(2 * d as u32), "antisymmetric projector")?;
    Ok(AntisymObjects { d, big_d, a_d: antisym_state(d), v_as: antisym_encoder(d), pi_as: antisym_projector(d, big_d) })
}

// --------------------------------------------------------------------------
// Reference maps

/// `V′(ρ) = V†ρV + 1_d Tr[Π_{(Im V)⊥} ρ]`, labels `P` (dim D) → `F` (dim d).
///
/// This is completely positive and a left inverse of `V`, but it is only
/// trace preserving on states supported in `Im V`.
pub fn ref_inverse_choi(v: &LabeledOperator) -> Result<ChoiOperator> {
    let m = v.entries();
    check_isometry(m)?;
    let (big_d, d) = (m.nrows(), m.ncols());
    let first = choi_of(&m.adjoint(), big_d, d)?;
    let perp = CMatrix::identity(big_d, big_d) - m * m.adjoint();
    let second = perp.transpose().kronecker(&CMatrix::identity(d, d));
    let op = LabeledOperator::square(vec![Space::new("P", big_d), Space::new("F", d)], first.entries() + second)?;
    wrap_pf(op)
}

/// `V″(ρ) = V*ρVᵀ + Π*_{(Im V)⊥} Tr ρ`, labels `P` (dim d) → `F` (dim D).
/// Its transpose is a left inverse of `V`; the map itself multiplies traces
/// by `D − d + 1`.
pub fn ref_pseudo_cc_choi(v: &LabeledOperator) -> Result<ChoiOperator> {
    let m = v.entries();
    check_isometry(m)?;
    let (big_d, d) = (m.nrows(), m.ncols());
    let first = choi_of(&m.conjugate(), d, big_d)?;
    let perp = (CMatrix::identity(big_d, big_d) - m * m.adjoint()).conjugate();
    let second = CMatrix::identity(d, d).kronecker(&perp);
    let op = LabeledOperator::square(vec![Space::new("P", d), Space::new("F", big_d)], first.entries() + second)?;
    wrap_pf(op)
}

// --------------------------------------------------------------------------
// Port-based teleportation resources

/// Resource state and POVM of optimal probabilistic port-based teleportation
/// of a `local_dim`-dimensional system through `ports` ports.
#[derive(Clone, Debug)]
pub struct PbtResources {
    pub local_dim: usize,
    pub ports: usize,
    /// `g = [Σ_{μ⊢m} d_U(μ)²]⁻¹`.
    pub g: f64,
    /// `X` on the measured ports `C_1 … C_m`.
    pub x: CMatrix,
    /// `Θ` on `m − 1` ports.
    pub theta: CMatrix,
    /// `|φ_PBT⟩ = (X^{1/2}_B ⊗ 1_A)|Φ⁺⟩_{BA}`, ordered `B_1 … B_m A_1 … A_m`.
    pub phi: CMatrix,
    /// `Γ_1 … Γ_m` on `P ⊗ C_1 ⊗ … ⊗ C_m`.
    pub gamma: Vec<CMatrix>,
}

impl PbtResources {
    /// `Γ_0 = 1 − Σ_{a≥1} Γ_a`.
    pub fn gamma0(&self) -> CMatrix {
        let n = self.gamma[0].nrows();
        let mut g0 = CMatrix::identity(n, n);
        for g in &self.gamma {
            g0 -= g;
        }
        g0
    }

    /// `m / (D² + m − 1)`.
    pub fn success_probability(&self) -> f64 {
        let (d, m) = (self.local_dim as f64, self.ports as f64);
        m / (d * d + m - 1.0)
    }

    /// Choi operator `P → F` of the success branch of plain teleportation.
    pub fn teleportation_choi(&self) -> Result<ChoiOperator> {
        let (dim, m) = (self.local_dim, self.ports);
        let mut spaces = wires("C", m, dim);
        spaces.extend(wires("A", m, dim));
        let omega = LabeledOperator::square(spaces, outer(&self.phi))?;
        let mut effect_spaces = vec![Space::new("P", dim)];
        effect_spaces.extend(wires("C", m, dim));
        wrap_pf(select_ports(&self.gamma, &effect_spaces, &omega, m)?)
    }
}

/// `Σ_{μ⊢n} f(μ) Π_μ` on `(ℂ^dim)^{⊗n}`, skipping diagrams with `l(μ) > dim`.
fn isotypic_combination(n: usize, dim: usize, f: impl Fn(f64, f64) -> f64) -> Result<CMatrix> {
    let size = dim.pow(n as u32);
    if n == 0 {
        return Ok(CMatrix::identity(1, 1) * re(f(1.0, 1.0)));
    }
    let mut acc = CMatrix::zeros(size, size);
    for mu in partitions(n, Some(dim))? {
        let (du, ds) = (dim_u(&mu, dim) as f64, dim_sym(&mu) as f64);
        acc += isotypic_projector_matrix(&mu, dim) * re(f(du, ds));
    }
    Ok(acc)
}

/// Build [`PbtResources`] for `ports ≥ 1`.
pub fn pbt_resources(local_dim: usize, ports: usize) -> Result<PbtResources> {
    if local_dim == 0 || ports == 0 {
        return Err(HoqtError::InvalidArgument("port-based teleportation needs local_dim >= 1 and ports >= 1".into()));
    }
    let (dim, m) = (local_dim, ports);
    let joint = dim.pow(m as u32 + 1);
    budget::check_complex(joint * joint * (m + 2), "port-based teleportation POVM")?;
    budget::check_complex(dim.pow(2 * m as u32), "port-based teleportation resource")?;

    let sum_sq: f64 = partitions(m, Some(dim))?.iter().map(|mu| (dim_u(mu, dim) as f64).powi(2)).sum();
    let g = 1.0 / sum_sq;
    let df = dim as f64;
    let scale_x = df.powi(m as i32) * g;
    let x = isotypic_combination(m, dim, |du, ds| scale_x * du / ds)?;
    let x_inv_sqrt = isotypic_combination(m, dim, |du, ds| (scale_x * du / ds).powf(-0.5))?;
    let x_sqrt = isotypic_combination(m, dim, |du, ds| (scale_x * du / ds).sqrt())?;
    let scale_t = df.powi(m as i32 + 1) * g / m as f64;
    let theta = isotypic_combination(m - 1, dim, |du, ds| scale_t * du / ds)?;

    let n = dim.pow(m as u32);
    let mut phi = CMatrix::zeros(n * n, 1);
    let norm = (n as f64).sqrt();
    for b in 0..n {
        for a in 0..n {
            phi[(b * n + a, 0)] = x_sqrt[(b, a)] / re(norm);
        }
    }

    let mut bell = CMatrix::zeros(dim * dim, 1);
    for i in 0..dim {
        bell[(i * dim + i, 0)] = re(1.0 / df.sqrt());
    }
    let bell = LabeledOperator::square(vec![Space::new("P", dim), Space::new("C1", dim)], outer(&bell))?;
    let dressing = CMatrix::identity(dim, dim).kronecker(&x_inv_sqrt);
    let mut gamma = Vec::with_capacity(m);
    for a in 1..=m {
        let rest: Vec<Space> = (1..=m).filter(|&i| i != a).map(|i| Space::new(format!("C{i}"), dim)).collect();
        let th = LabeledOperator::square(rest, theta.clone())?;
        let core = kron(&bell.relabel(&[("C1", &format!("C{a}"))])?, &th)?;
        let mut order = vec!["P".to_string()];
        order.extend((1..=m).map(|i| format!("C{i}")));
        let order: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
        let core = core.permute_systems(&order)?;
        gamma.push(linalg::matmul(&linalg::matmul(&dressing, core.entries()), &dressing));
    }
    Ok(PbtResources { local_dim, ports, g, x, theta, phi, gamma })
}

/// `Σ_{a≥1} Tr_{Ā_a} link(E_aᵀ, ω)` with `A_a` renamed `F`.
fn select_ports(effects: &[CMatrix], effect_spaces: &[Space], omega: &LabeledOperator, ports: usize) -> Result<LabeledOperator> {
    let mut acc: Option<LabeledOperator> = None;
    for (idx, e) in effects.iter().enumerate() {
        let a = idx + 1;
        let eff = LabeledOperator::square(effect_spaces.to_vec(), e.transpose())?;
        let branch = link_product(omega, &eff)?;
        let others: Vec<String> = (1..=ports).filter(|&j| j != a).map(|j| format!("A{j}")).collect();
        let others: Vec<&str> = others.iter().map(|s| s.as_str()).collect();
        let kept = branch.partial_trace(&others)?.relabel(&[(&format!("A{a}"), "F")])?;
        acc = Some(match acc {
            None => kept,
            Some(prev) => prev.add(&kept.permute_systems(&prev.row_labels().iter().map(|s| s.as_str()).collect::<Vec<_>>())?)?,
        });
    }
    acc.ok_or_else(|| HoqtError::InvalidArgument("no port effects".into()))
}

/// Failure branch: effect `E_0`, all ports discarded, maximally mixed output.
fn discard_ports(effect: &CMatrix, effect_spaces: &[Space], omega: &LabeledOperator, ports: usize, out_dim: usize) -> Result<LabeledOperator> {
    let eff = LabeledOperator::square(effect_spaces.to_vec(), effect.transpose())?;
    let anc: Vec<String> = (1..=ports).map(|j| format!("A{j}")).collect();
    let anc: Vec<&str> = anc.iter().map(|s| s.as_str()).collect();
    let reduced = omega.partial_trace(&anc)?;
    let branch = link_product(&reduced, &eff)?;
    let mixed = LabeledOperator::identity(vec![Space::new("F", out_dim)]).scale_re(1.0 / out_dim as f64);
    kron(&branch, &mixed)
}

// --------------------------------------------------------------------------
// Protocol runs

/// Outcome of simulating one protocol on one black box.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub task: Task,
    pub d: usize,
    pub big_d: usize,
    /// Black-box calls available to the protocol.
    pub calls: usize,
    /// Unnormalized success branch `P → F`.
    pub success_branch: ChoiOperator,
    /// Everything else, so that success + failure is trace preserving.
    pub failure_branch: ChoiOperator,
    pub p_succ: f64,
    pub reference: ChoiOperator,
    /// `‖success − p·reference‖_F`; for inversion runs both sides are first
    /// composed with the black box, so only the action on `Im V` counts.
    pub residual: f64,
}

impl ProtocolRun {
    /// `Tr[S(ρ)]` for a state on `P`.
    pub fn success_weight(&self, rho: &LabeledOperator) -> Result<f64> {
        let rho = LabeledOperator::square(vec![Space::new("P", rho.nrows())], rho.entries().clone())?;
        Ok(crate::choi::apply_channel(&self.success_branch, &rho)?.trace().re)
    }

    /// `‖Tr_F(S + F) − 1_P‖_F`.
    pub fn completeness_residual(&self) -> Result<f64> {
        let total = self.success_branch.op().add(self.failure_branch.op())?;
        let marg = total.partial_trace(&["F"])?;
        let n = marg.nrows();
        Ok(frob_dist(marg.entries(), &CMatrix::identity(n, n)))
    }
}

/// Least-squares `p` with `success ≈ p·reference`, and the residual.
fn fit(success: &CMatrix, reference: &CMatrix) -> (f64, f64) {
    let num: C64 = success.iter().zip(reference.iter()).map(|(s, r)| r.conj() * s).sum();
    let den = reference.norm_squared();
    let p = if den > 0.0 { num.re / den } else { 0.0 };
    (p, frob_dist(success, &(reference * re(p))))
}

/// Compose the success branch with `V` (labels `Pin → P`) and fit against
/// `p·|1⟩⟩⟨⟨1|`.
fn fit_on_image(success: &ChoiOperator, v: &CMatrix) -> Result<(f64, f64)> {
    let (big_d, d) = (v.nrows(), v.ncols());
    let jv = choi_of_operator(&LabeledOperator::new(vec![Space::new("P", big_d)], vec![Space::new("Pin", d)], v.clone())?)?;
    let composed = jv.link(success)?.permute(&["Pin", "F"])?;
    let ident = choi_of(&CMatrix::identity(d, d), d, d)?;
    Ok(fit(composed.entries(), ident.entries()))
}

fn zero_choi(in_dim: usize, out_dim: usize) -> Result<ChoiOperator> {
    let op = LabeledOperator::zeros(
        vec![Space::new("P", in_dim), Space::new("F", out_dim)],
        vec![Space::new("P", in_dim), Space::new("F", out_dim)],
    )?;
    wrap_pf(op)
}

fn discard_choi(in_dim: usize, out_dim: usize) -> Result<ChoiOperator> {
    let op = LabeledOperator::identity(vec![Space::new("P", in_dim), Space::new("F", out_dim)]).scale_re(1.0 / out_dim as f64);
    wrap_pf(op)
}

/// Fig. (b)-type protocol with `d − 1` calls: `|A_d⟩`, black boxes on the
/// first `d − 1` systems, antisymmetric projection on `P ⊗ O`.
pub fn run_inversion_minimal(v: &LabeledOperator) -> Result<ProtocolRun> {
    let m = v.entries();
    check_isometry(m)?;
    let (big_d, d) = (m.nrows(), m.ncols());
    let objs = antisym_objects(d, big_d)?;
    let k = d - 1;
    let g = tensor_power(m, k).kronecker(&CMatrix::identity(d, d));
    let ket = &g * &objs.a_d;
    let mut spaces = wires("O", k, big_d);
    spaces.push(Space::new("F", d));
    let omega = LabeledOperator::square(spaces, outer(&ket))?;
    let mut eff_spaces = vec![Space::new("P", big_d)];
    eff_spaces.extend(wires("O", k, big_d));
    let pass = LabeledOperator::square(eff_spaces.clone(), objs.pi_as.transpose())?;
    let n = objs.pi_as.nrows();
    let fail = LabeledOperator::square(eff_spaces, (CMatrix::identity(n, n) - &objs.pi_as).transpose())?;
    let success = wrap_pf(link_product(&omega, &pass)?)?;
    let failure = wrap_pf(link_product(&omega, &fail)?)?;
    let reference = ref_inverse_choi(v)?;
    let (p, residual) = fit(success.entries(), reference.entries());
    Ok(ProtocolRun { task: Task::Inversion, d, big_d, calls: k, success_branch: success, failure_branch: failure, p_succ: p, reference, residual })
}

/// `|ω⟩ = (⊗_ports W^{⊗(d−1)} V^{a.s.} ⊗ 1_A)|φ_PBT⟩` on `O_1 … O_{m(d−1)}, A_1 … A_m`.
fn inversion_resource(w: &CMatrix, d: usize, res: &PbtResources) -> Result<LabeledOperator> {
    let m = res.ports;
    let per_port = linalg::matmul(&tensor_power(w, d - 1), &antisym_encoder(d));
    let g = tensor_power(&per_port, m);
    let n = d.pow(m as u32);
    let phi_mat = CMatrix::from_fn(n, n, |b, a| res.phi[(b * n + a, 0)]);
    let moved = linalg::matmul(&g, &phi_mat);
    let rows = moved.nrows();
    budget::check_complex((rows * n).pow(2), "inversion resource state")?;
    let ket = CMatrix::from_fn(rows * n, 1, |r, _| moved[(r / n, r % n)]);
    let mut spaces = wires("O", m * (d - 1), w.nrows());
    spaces.extend(wires("A", m, d));
    LabeledOperator::square(spaces, outer(&ket))
}

/// PBT effects pulled back through the per-port decoder `V^{a.s.†}`.
fn inversion_effects(d: usize, res: &PbtResources) -> (Vec<CMatrix>, CMatrix) {
    let lift = CMatrix::identity(d, d).kronecker(&tensor_power(&antisym_encoder(d), res.ports));
    let pull = |e: &CMatrix| linalg::matmul_by_adj(&linalg::matmul(&lift, e), &lift);
    let effects: Vec<CMatrix> = res.gamma.iter().map(pull).collect();
    let n = lift.nrows();
    let mut e0 = CMatrix::identity(n, n);
    for e in &effects {
        e0 -= e;
    }
    (effects, e0)
}

fn ports_for(d: usize, k: usize) -> Result<usize> {
    if d < 2 {
        return Err(HoqtError::InvalidArgument("port-based inversion needs d >= 2".into()));
    }
    Ok(k / (d - 1))
}

/// Parallel unitary inversion from `k` calls through `m = ⌊k/(d−1)⌋` ports
/// of probabilistic port-based teleportation.
pub fn run_unitary_inversion_pbt(u: &LabeledOperator, k: usize) -> Result<ProtocolRun> {
    let um = u.entries();
    check_isometry(um)?;
    if um.nrows() != um.ncols() {
        return Err(HoqtError::InvalidArgument("expected a square unitary".into()));
    }
    let d = um.ncols();
    let m = ports_for(d, k)?;
    let reference = choi_of(&um.adjoint(), d, d)?;
    if m == 0 {
        return Ok(ProtocolRun {
            task: Task::Inversion,
            d,
            big_d: d,
            calls: k,
            success_branch: zero_choi(d, d)?,
            failure_branch: discard_choi(d, d)?,
            p_succ: 0.0,
            reference,
            residual: 0.0,
        });
    }
    let res = pbt_resources(d, m)?;
    let omega = inversion_resource(um, d, &res)?;
    let (effects, e0) = inversion_effects(d, &res);
    let mut eff_spaces = vec![Space::new("P", d)];
    eff_spaces.extend(wires("O", m * (d - 1), d));
    let success = wrap_pf(select_ports(&effects, &eff_spaces, &omega, m)?)?;
    let failure = wrap_pf(discard_ports(&e0, &eff_spaces, &omega, m, d)?)?;
    let (p, residual) = fit(success.entries(), reference.entries());
    Ok(ProtocolRun { task: Task::Inversion, d, big_d: d, calls: k, success_branch: success, failure_branch: failure, p_succ: p, reference, residual })
}

/// Isometry inversion: the port-based unitary inverter with `Ψ` inserted on
/// `P ⊗ O` before the decoding measurement.
pub fn run_isometry_inversion_full(v: &LabeledOperator, k: usize) -> Result<ProtocolRun> {
    let vm = v.entries();
    check_isometry(vm)?;
    let (big_d, d) = (vm.nrows(), vm.ncols());
    let m = ports_for(d, k)?;
    let reference = ref_inverse_choi(v)?;
    if m == 0 {
        return Ok(ProtocolRun {
            task: Task::Inversion,
            d,
            big_d,
            calls: k,
            success_branch: zero_choi(big_d, d)?,
            failure_branch: discard_choi(big_d, d)?,
            p_succ: 0.0,
            reference,
            residual: 0.0,
        });
    }
    let used = m * (d - 1);
    let psi = build_psi(d, big_d, used + 1)?;
    let mut map: Vec<(String, String)> = vec![("in1".into(), "P".into()), ("out1".into(), "Pp".into())];
    for i in 1..=used {
        map.push((format!("in{}", i + 1), format!("O{i}")));
        map.push((format!("out{}", i + 1), format!("Op{i}")));
    }
    let map: Vec<(&str, &str)> = map.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let j_psi = psi.choi()?.relabel(&map)?;

    let res = pbt_resources(d, m)?;
    let omega = inversion_resource(vm, d, &res)?;
    let joint = link_product(j_psi.op(), &omega)?;
    let (effects, e0) = inversion_effects(d, &res);
    let mut eff_spaces = vec![Space::new("Pp", d)];
    eff_spaces.extend(wires("Op", used, d));
    let success = wrap_pf(select_ports(&effects, &eff_spaces, &joint, m)?)?;
    let failure = wrap_pf(discard_ports(&e0, &eff_spaces, &joint, m, d)?)?;
    let (p, residual) = fit_on_image(&success, vm)?;
    Ok(ProtocolRun { task: Task::Inversion, d, big_d, calls: k, success_branch: success, failure_branch: failure, p_succ: p, reference, residual })
}

/// Decoder `Λ: (ℂ^D)^{⊗(d−1)} → ℂ^D` of the pseudo complex conjugation
/// protocol, labels `O1 … O_{d−1}` → `F`.
pub fn pseudo_cc_decoder(d: usize, big_d: usize) -> Result<ChoiOperator> {
    if d == 0 || big_d < d {
        return Err(HoqtError::InvalidArgument(format!("need 1 <= d <= D, got d={d}, D={big_d}")));
    }
    let in_dim = big_d.pow(d as u32 - 1);
    budget::check_complex((in_dim * big_d).pow(2), "pseudo-conjugation decoder")?;
    let c = 1.0 / (big_d - d + 1) as f64;
    let norm = factorial(d - 1).sqrt();
    let mut kets = Vec::new();
    for combo in combinations(big_d, d) {
        let mut a = CMatrix::zeros(big_d, in_dim);
        for p in all_permutations(d) {
            let src: Vec<usize> = p[..d - 1].iter().map(|&i| combo[i]).collect();
            a[(combo[p[d - 1]], digits_index(&src, big_d))] += re(levi_civita(&p) as f64 / norm);
        }
        kets.push(a);
    }
    let mut j = CMatrix::zeros(in_dim * big_d, in_dim * big_d);
    for a in &kets {
        let ket = CMatrix::from_fn(in_dim * big_d, 1, |r, _| a[(r % big_d, r / big_d)]);
        j += outer(&ket) * re(c);
    }
    let rest = CMatrix::identity(in_dim, in_dim) - antisym_projector(d - 1, big_d);
    j += rest.transpose().kronecker(&CMatrix::identity(big_d, big_d)) / re(big_d as f64);
    let mut spaces = wires("O", d - 1, big_d);
    spaces.push(Space::new("F", big_d));
    let ins = (1..d).map(|i| format!("O{i}")).collect();
    ChoiOperator::new(LabeledOperator::square(spaces, j)?, ins, vec!["F".into()])
}

/// Increasing `r`-subsets of `0..n`.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Pseudo complex conjugation from `d − 1` calls: encode with `V^{a.s.}`,
/// apply the black boxes, decode with [`pseudo_cc_decoder`].
pub fn run_pseudo_cc(v: &LabeledOperator) -> Result<ProtocolRun> {
    let vm = v.entries();
    check_isometry(vm)?;
    let (big_d, d) = (vm.nrows(), vm.ncols());
    let w = linalg::matmul(&tensor_power(vm, d - 1), &antisym_encoder(d));
    let enc = choi_of_operator(&LabeledOperator::new(wires("O", d - 1, big_d), vec![Space::new("P", d)], w)?)?;
    let success = enc.link(&pseudo_cc_decoder(d, big_d)?)?.permute(&["P", "F"])?;
    let reference = ref_pseudo_cc_choi(v)?;
    let (p, residual) = fit(success.entries(), reference.entries());
    Ok(ProtocolRun {
        task: Task::PseudoCc,
        d,
        big_d,
        calls: d - 1,
        success_branch: success,
        failure_branch: zero_choi(d, big_d)?,
        p_succ: p,
        reference,
        residual,
    })
}

/// `Y = Σ_{μ⊢k} d^k d_U^{(D)}(μ) / d_S(μ) Π_μ / Σ_ν d_U^{(d)}(ν) d_U^{(D)}(ν)` on `(ℂ^d)^{⊗k}`.
pub fn transposition_weight(d: usize, big_d: usize, k: usize) -> Result<CMatrix> {
    let norm: f64 = partitions(k, Some(d))?
        .iter()
        .map(|mu| dim_u(mu, d) as f64 * dim_u(mu, big_d) as f64)
        .sum();
    let dk = (d as f64).powi(k as i32);
    let mut acc = CMatrix::zeros(d.pow(k as u32), d.pow(k as u32));
    for mu in partitions(k, Some(d))? {
        let w = dk * dim_u(&mu, big_d) as f64 / dim_sym(&mu) as f64 / norm;
        acc += isotypic_projector_matrix(&mu, d) * re(w);
    }
    Ok(acc)
}

/// Parallel isometry transposition from `k` calls through the modified
/// resource `|φ′⟩` and the `D`-dimensional port-based POVM.
pub fn run_transposition_pbt(v: &LabeledOperator, k: usize) -> Result<ProtocolRun> {
    let vm = v.entries();
    check_isometry(vm)?;
    if k == 0 {
        return Err(HoqtError::InvalidArgument("transposition needs at least one call".into()));
    }
    let (big_d, d) = (vm.nrows(), vm.ncols());
    budget::check_complex((big_d.pow(k as u32) * d.pow(k as u32)).pow(2), "transposition resource state")?;
    let res = pbt_resources(big_d, k)?;
    let y_sqrt = {
        let y = transposition_weight(d, big_d, k)?;
        let (vals, vecs) = linalg::herm_eig(&y);
        let s = CMatrix::from_fn(vals.len(), vals.len(), |i, j| if i == j { re(vals[i].max(0.0).sqrt()) } else { ZERO });
        linalg::matmul_by_adj(&linalg::matmul(&vecs, &s), &vecs)
    };
    let n = d.pow(k as u32);
    let moved = linalg::matmul(&tensor_power(vm, k), &(y_sqrt / re((n as f64).sqrt())));
    let rows = moved.nrows();
    let ket = CMatrix::from_fn(rows * n, 1, |r, _| moved[(r / n, r % n)]);
    let mut spaces = wires("O", k, big_d);
    spaces.extend(wires("A", k, d));
    let omega = LabeledOperator::square(spaces, outer(&ket))?;
    let mut eff_spaces = vec![Space::new("P", big_d)];
    eff_spaces.extend(wires("O", k, big_d));
    let success = wrap_pf(select_ports(&res.gamma, &eff_spaces, &omega, k)?)?;
    let failure = wrap_pf(discard_ports(&res.gamma0(), &eff_spaces, &omega, k, d)?)?;
    let reference = choi_of(&vm.transpose(), big_d, d)?;
    let (p, residual) = fit(success.entries(), reference.entries());
    Ok(ProtocolRun {
        task: Task::Transposition,
        d,
        big_d,
        calls: k,
        success_branch: success,
        failure_branch: failure,
        p_succ: p,
        reference,
        residual,
    })
}

/// Gate-teleportation variant implementing `Λᵀ` for a CPTP `Λ: ℂ^d → ℂ^D`
/// given by its Choi operator (one input and one output label).
pub fn run_gate_teleport_transpose(j_lambda: &ChoiOperator) -> Result<ProtocolRun> {
    if j_lambda.in_labels().len() != 1 || j_lambda.out_labels().len() != 1 {
        return Err(HoqtError::InvalidArgument("expected a Choi operator with one input and one output label".into()));
    }
    let report = validate_channel(j_lambda, 1e-9)?;
    if !(report.cp && report.tp) {
        return Err(HoqtError::InvalidArgument(format!("not a CPTP Choi operator: {report:?}")));
    }
    let (d, big_d) = (j_lambda.in_dim(), j_lambda.out_dim());
    let (li, lo) = (j_lambda.in_labels()[0].clone(), j_lambda.out_labels()[0].clone());
    let lam = j_lambda.relabel(&[(&li, "I1"), (&lo, "O1")])?;
    let mut bell_d = CMatrix::zeros(d * d, 1);
    for i in 0..d {
        bell_d[(i * d + i, 0)] = re(1.0 / (d as f64).sqrt());
    }
    let phi = LabeledOperator::square(vec![Space::new("I1", d), Space::new("F", d)], outer(&bell_d))?;
    let omega = link_product(&phi, lam.op())?;
    let mut bell_big = CMatrix::zeros(big_d * big_d, 1);
    for i in 0..big_d {
        bell_big[(i * big_d + i, 0)] = re(1.0 / (big_d as f64).sqrt());
    }
    let e = outer(&bell_big);
    let spaces = vec![Space::new("P", big_d), Space::new("O1", big_d)];
    let pass = LabeledOperator::square(spaces.clone(), e.transpose())?;
    let n = e.nrows();
    let fail = LabeledOperator::square(spaces, (CMatrix::identity(n, n) - &e).transpose())?;
    let success = wrap_pf(link_product(&omega, &pass)?)?;
    let failure = wrap_pf(link_product(&omega, &fail)?)?;
    let reference = lam.transposed_map().relabel(&[("O1", "P"), ("I1", "F")])?.permute(&["P", "F"])?;
    let (p, residual) = fit(success.entries(), reference.entries());
    Ok(ProtocolRun {
        task: Task::Transposition,
        d: big_d,
        big_d: d,
        calls: 1,
        success_branch: success,
        failure_branch: failure,
        p_succ: p,
        reference,
        residual,
    })
}

/// Isometry inversion by pseudo complex conjugation followed by gate
/// teleportation of its transpose. Succeeds with `1/[Dd(D−d+1)]`.
pub fn run_pseudo_cc_then_teleport(v: &LabeledOperator) -> Result<ProtocolRun> {
    let pcc = run_pseudo_cc(v)?;
    let tele = run_gate_teleport_transpose(&pcc.success_branch)?;
    let reference = ref_inverse_choi(v)?;
    let (p, residual) = fit(tele.success_branch.entries(), reference.entries());
    Ok(ProtocolRun {
        task: Task::Inversion,
        d: pcc.d,
        big_d: pcc.big_d,
        calls: pcc.calls,
        success_branch: tele.success_branch,
        failure_branch: tele.failure_branch,
        p_succ: p,
        reference,
        residual,
    })
}

// --------------------------------------------------------------------------
// Closed forms

/// `⌊k/(d−1)⌋ / (d² + ⌊k/(d−1)⌋ − 1)`; `1` for `d = 1`.
pub fn inversion_success(d: u64, k: u64) -> Rational {
    if d <= 1 {
        return Rational::new(1, 1);
    }
    let m = k / (d - 1);
    if m == 0 {
        return Rational::zero();
    }
    Rational::new(m, d * d + m - 1)
}

/// `k / (Dd + k − 1)`.
pub fn transposition_success(d: u64, big_d: u64, k: u64) -> Rational {
    if k == 0 {
        return Rational::zero();
    }
    Rational::new(k, big_d * d + k - 1)
}

/// `1 / (D − d + 1)`, reached with `d − 1` calls.
pub fn pseudo_cc_success(d: u64, big_d: u64) -> Rational {
    Rational::new(1, big_d - d + 1)
}

/// `1 / (Dd)`.
pub fn gate_teleport_success(d: u64, big_d: u64) -> Rational {
    Rational::new(1, big_d * d)
}

/// Closed-form success probability of the protocols simulated here, where
/// one is known. `None` means there is no closed form for this cell.
pub fn analytic_success_rational(task: Task, d: usize, big_d: usize, k: usize) -> Option<Rational> {
    let (d64, bd, k64) = (d as u64, big_d as u64, k as u64);
    match task {
        Task::Inversion => Some(inversion_success(d64, k64)),
        Task::Transposition => Some(transposition_success(d64, bd, k64)),
        Task::PseudoCc if k + 1 >= d => Some(pseudo_cc_success(d64, bd)),
        Task::Cc if big_d >= 2 * d => Some(Rational::zero()),
        _ => None,
    }
}

pub fn analytic_success_prob(task: Task, d: usize, big_d: usize, k: usize) -> Option<f64> {
    analytic_success_rational(task, d, big_d, k).map(Rational::value)
}

/// Success probability of inverting the unitary embedding `U_V ∈ 𝕌(D)` with
/// the port-based protocol; zero below `D − 1` calls.
pub fn embedding_success(big_d: usize, k: usize) -> Rational {
    inversion_success(big_d as u64, k as u64)
}

/// Call counts of the three strategies for reaching success probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceComparison {
    /// Real parameters of an isometry, `2Dd − d² + d − 1`.
    pub parameters: u64,
    /// Order-of-magnitude tomography cost `parameters · ε⁻² · ln(1/(1−p))`.
    pub tomography_calls: f64,
    /// Calls below which the embedding strategy cannot succeed (`D − 1`).
    pub embedding_min_calls: u64,
    /// Sufficient count `⌈(d−1)(d²−1)/(1−p)⌉`.
    pub our_calls: u64,
    /// Smallest `k` whose closed form reaches `p`.
    pub our_calls_exact: u64,
}

pub fn resource_comparison(d: usize, big_d: usize, eps: f64, p: f64) -> Result<ResourceComparison> {
    if !(0.0..1.0).contains(&p) || eps <= 0.0 || d < 2 || big_d < d {
        return Err(HoqtError::InvalidArgument("need 0 <= p < 1, eps > 0 and 2 <= d <= D".into()));
    }
    let df = d as f64;
    let parameters = (2 * big_d * d + d) as u64 - (d * d) as u64 - 1;
    let tomography_calls = parameters as f64 * eps.powi(-2) * (1.0 / (1.0 - p)).ln();
    let our_calls = ((df - 1.0) * (df * df - 1.0) / (1.0 - p) - 1e-12).ceil().max(0.0) as u64;
    let m = (p * (df * df - 1.0) / (1.0 - p) - 1e-12).ceil().max(if p > 0.0 { 1.0 } else { 0.0 }) as u64;
    Ok(ResourceComparison {
        parameters,
        tomography_calls,
        embedding_min_calls: big_d as u64 - 1,
        our_calls,
        our_calls_exact: m * (d as u64 - 1),
    })
}
