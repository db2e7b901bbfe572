//! Scalar auxiliary variable quantities: `b(w)`, `r`, the solution operator
//! `B_h(τ) = (I + τL_h²)⁻¹`, the closed-form pre-evaluation of `r`, and energies.

use std::sync::Arc;

use crate::dg_space::{DgField, QuadRule};
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, cg_solve_pair, dot, KrylovConfig, LinearOperator, SolveReport};
use crate::problems::{ModelSpec, Potential};
use crate::weak_forms::{DgOperator, ShiftedBiharmonic};

/// The discrete state `(u_h, q_h, r)` at time `t`.
#[derive(Clone, Debug)]
pub struct SavState {
    pub u: DgField,
    pub q: DgField,
    pub r: f64,
    pub t: f64,
}

impl SavState {
    /// State at time `t` with `q = L_h u` and `r = sqrt(∫Φ(u) + B)`.
    pub fn initial(u: DgField, op: &DgOperator, model: &ModelSpec, t: f64) -> Result<Self> {
        if !Arc::ptr_eq(u.space(), op.space()) {
            return Err(Error::SpaceMismatch);
        }
        let q = DgField::from_coeffs(u.space(), op.apply_new(u.coeffs()))?;
        let r = init_r(&u, model)?;
        Ok(Self { u, q, r, t })
    }

    /// `‖q - L_h u‖`.
    pub fn constraint_defect(&self, op: &DgOperator) -> f64 {
        let lu = op.apply_new(self.u.coeffs());
        lu.iter().zip(self.q.coeffs()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Original energy `ℰ = ½‖q‖² + ∫Φ(u)` and modified energy `E = ½‖q‖² + r²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPair {
    pub original: f64,
    pub modified: f64,
}

/// `b(w) = Φ'(w) / sqrt(∫Φ(w) + B)` and its projection.
#[derive(Clone, Debug)]
pub struct BTerm {
    pub denominator: f64,
    /// Coefficients of `Πb(w)`.
    pub projected: Vec<f64>,
}

/// `∫Φ(w)` with the `(2k+1)`-point Gauss rule per axis (exact for quartic `Φ`).
pub fn integrate_potential(w: &DgField, potential: &dyn Potential) -> f64 {
    integrate_pointwise(w, 2 * w.space().degree() + 1, |v| potential.phi(v))
}

/// `∫F(w)` with an `n`-point Gauss rule per axis.
pub fn integrate_pointwise(w: &DgField, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let space = w.space();
    let rule = QuadRule::gauss_legendre(n);
    let p = space.modes_per_axis();
    let dim = space.dim();
    let table: Vec<f64> = rule
        .nodes
        .iter()
        .flat_map(|&x| (0..p).map(move |i| crate::dg_space::reference_basis(i, x).0))
        .collect();
    let per_cell = n.pow(dim as u32);
    let mut vals = vec![0.0; per_cell];
    let mut full = vec![0.0; space.tensor_block_len()];
    let mut total = 0.0;
    for cell in 0..space.mesh().n_cells() {
        let measure = space.mesh().cell_measure(cell);
        let scale = (2f64.powi(dim as i32) / measure).sqrt();
        space.expand_block(w.block(cell), &mut full);
        crate::dg_space::tensor_contract(dim, &table, n, p, &full, &mut vals);
        let mut acc = 0.0;
        for (q, &v) in vals.iter().enumerate() {
            let wq = match dim {
                1 => rule.weights[q],
                _ => rule.weights[q % n] * rule.weights[q / n],
            };
            acc += wq * f(scale * v);
        }
        total += acc * measure / 2f64.powi(dim as i32);
    }
    total
}

fn radicand(w: &DgField, model: &ModelSpec) -> Result<f64> {
    let b = model.b_value(w.space().mesh().measure());
    let radicand = integrate_potential(w, model.potential.as_ref()) + b;
    if !(radicand > 0.0) {
        return Err(Error::NonPositiveRadicand { radicand });
    }
    Ok(radicand)
}

pub fn b_of(w: &DgField, model: &ModelSpec) -> Result<BTerm> {
    let space = w.space();
    let denominator = radicand(w, model)?.sqrt();
    let mut values = space.values_at_quadrature(w.coeffs());
    values.iter_mut().for_each(|v| *v = model.potential.dphi(*v) / denominator);
    Ok(BTerm { denominator, projected: space.project_quadrature_values(&values) })
}

/// `r⁰ = sqrt(∫Φ(u⁰) + B)`.
pub fn init_r(u0: &DgField, model: &ModelSpec) -> Result<f64> {
    Ok(radicand(u0, model)?.sqrt())
}

pub fn energies(state: &SavState, model: &ModelSpec) -> EnergyPair {
    let half_q2 = 0.5 * dot(state.q.coeffs(), state.q.coeffs());
    EnergyPair {
        original: half_q2 + integrate_potential(&state.u, model.potential.as_ref()),
        modified: half_q2 + state.r * state.r,
    }
}

/// Solves `(I + τL_h²) v = f` by CG. Fails if CG does not converge.
pub fn solve_bh(
    op: &DgOperator,
    tau: f64,
    f: &[f64],
    x0: Option<&[f64]>,
    krylov: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let sys = ShiftedBiharmonic::new(op, tau)?;
    let (v, report) = cg_solve(&sys, f, Some(x0.unwrap_or(f)), krylov)?;
    if !report.converged {
        return Err(Error::NotConverged { solver: "cg", report });
    }
    Ok((v, report))
}

/// `v = B_h(τ) f` and `w = L_h v`.
pub fn apply_bh(
    op: &DgOperator,
    tau: f64,
    f: &DgField,
    krylov: &KrylovConfig,
) -> Result<(DgField, DgField, SolveReport)> {
    if !Arc::ptr_eq(f.space(), op.space()) {
        return Err(Error::SpaceMismatch);
    }
    let (v, report) = solve_bh(op, tau, f.coeffs(), None, krylov)?;
    let w = op.apply_new(&v);
    Ok((DgField::from_coeffs(f.space(), v)?, DgField::from_coeffs(f.space(), w)?, report))
}

/// Everything the closed-form pre-evaluation of `r` produces.
#[derive(Clone, Debug)]
pub struct PreEvaluation {
    pub r_next: f64,
    /// `1 + (τ/2)(Πb, B_h Πb)`, at least 1.
    pub denominator: f64,
    pub bh_b: Vec<f64>,
    pub bh_xi: Vec<f64>,
    /// `(Πb, uⁿ)`
    pub b_dot_u: f64,
    pub reports: [SolveReport; 2],
}

/// Pre-evaluates `r` for the implicit step
/// `(u - uⁿ)/τ = -L_h² u - r Πb + f̄`, `r - rⁿ = ½(Πb, u - uⁿ)`,
/// where `g = uⁿ + τ f̄`:
///
/// ```text
/// ξ = g - τ rⁿ Πb + (τ/2)(Πb, uⁿ) Πb
/// R = (Πb, B_h ξ) / (1 + (τ/2)(Πb, B_h Πb))
/// r = rⁿ - ½(Πb, uⁿ) + ½R
/// ```
pub fn pre_evaluate_r(
    op: &DgOperator,
    tau: f64,
    u_n: &[f64],
    r_n: f64,
    pi_b: &[f64],
    g: &[f64],
    krylov: &KrylovConfig,
) -> Result<PreEvaluation> {
    let b_dot_u = dot(pi_b, u_n);
    let coeff = -tau * r_n + 0.5 * tau * b_dot_u;
    let xi: Vec<f64> = g.iter().zip(pi_b).map(|(gi, bi)| gi + coeff * bi).collect();
    // both systems share B_h, so the two solves run side by side
    let sys = ShiftedBiharmonic::new(op, tau)?;
    let [(bh_b, rep_b), (bh_xi, rep_xi)] = cg_solve_pair(&sys, [pi_b, &xi], [Some(pi_b), Some(g)], krylov)?;
    for report in [&rep_b, &rep_xi] {
        if !report.converged {
            return Err(Error::NotConverged { solver: "cg", report: report.clone() });
        }
    }
    let denominator = 1.0 + 0.5 * tau * dot(pi_b, &bh_b);
    let big_r = dot(pi_b, &bh_xi) / denominator;
    let r_next = r_n - 0.5 * b_dot_u + 0.5 * big_r;
    Ok(PreEvaluation { r_next, denominator, bh_b, bh_xi, b_dot_u, reports: [rep_b, rep_xi] })
}

/// `r^{n+1}` of the first-order scheme with `b = b(uⁿ)`, step `Δt`, no source.
pub fn pre_evaluate_r_first(
    state: &SavState,
    dt: f64,
    model: &ModelSpec,
    op: &DgOperator,
    krylov: &KrylovConfig,
) -> Result<f64> {
    let b = b_of(&state.u, model)?;
    let u = state.u.coeffs();
    Ok(pre_evaluate_r(op, dt, u, state.r, &b.projected, u, krylov)?.r_next)
}

/// `r^{n+1/2}` of the second-order scheme with `b = b(u^{n,*})`, no source:
/// the first-order formula with step `Δt/2`.
pub fn pre_evaluate_r_half_second(
    state: &SavState,
    u_star: &DgField,
    dt: f64,
    model: &ModelSpec,
    op: &DgOperator,
    krylov: &KrylovConfig,
) -> Result<f64> {
    let b = b_of(u_star, model)?;
    let u = state.u.coeffs();
    Ok(pre_evaluate_r(op, 0.5 * dt, u, state.r, &b.projected, u, krylov)?.r_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_space::{project_l2, DgSpace};
    use crate::linalg::{dense_solve, norm, DenseMatrix};
    use crate::mesh::{build_rect_mesh, BcKind, Interval};
    use crate::problems::{swift_hohenberg, SwiftHohenberg};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(n: usize, k: usize) -> (Arc<DgSpace>, DgOperator, ModelSpec) {
        let mesh =
            build_rect_mesh(&[Interval::new(-2.0 * PI, 2.0 * PI); 2], &[n, n], BcKind::Periodic).unwrap();
        let space = DgSpace::new(mesh, k).unwrap();
        let op = DgOperator::new(&space, 2.0).unwrap();
        (space, op, swift_hohenberg(0.025, 0.0, BcKind::Periodic).unwrap())
    }

    fn random_field(space: &Arc<DgSpace>, rng: &mut ChaCha8Rng, amp: f64) -> DgField {
        DgField::from_coeffs(space, (0..space.n_dofs()).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
    }

    fn tight() -> KrylovConfig {
        KrylovConfig::default().with_rel_tolerance(1e-13)
    }

    /// Tensor Gauss with `n` points through `eval_at`.
    fn brute_integral(w: &DgField, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let rule = QuadRule::gauss_legendre(n);
        let mesh = w.space().mesh();
        let mut total = 0.0;
        for cell in 0..mesh.n_cells() {
            let jac = mesh.cell_measure(cell) / 4.0;
            for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                    total += wx * wy * jac * f(crate::dg_space::eval_at(w, cell, &[x, y]).unwrap());
                }
            }
        }
        total
    }

    #[test]
    fn zero_field_gives_zero_b() {
        let (space, _, model) = setup(4, 1);
        let b = b_of(&DgField::zeros(&space), &model).unwrap();
        assert!(b.projected.iter().all(|&v| v == 0.0));
        assert!((b.denominator - (16.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((init_r(&DgField::zeros(&space), &model).unwrap() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn doubling_b_scales_projection_exactly() {
        let (space, _, model) = setup(4, 2);
        let w = project_l2(&space, |x| (x[0] / 2.0).sin() * (x[1] / 2.0).sin());
        let b1 = b_of(&w, &model).unwrap();
        let omega = space.mesh().measure();
        let b2 = b_of(&w, &model.clone().with_b(Some(2.0 * omega))).unwrap();
        let ip = integrate_potential(&w, model.potential.as_ref());
        let ratio = ((ip + omega) / (ip + 2.0 * omega)).sqrt();
        assert!(b2.denominator > b1.denominator);
        assert!((norm(&b2.projected) / norm(&b1.projected) - ratio).abs() < 1e-13);
    }

    #[test]
    fn denominator_matches_over_integration() {
        let (space, _, model) = setup(8, 1);
        let w = project_l2(&space, |x| (x[0] / 2.0).sin() * (x[1] / 2.0).sin());
        let b = b_of(&w, &model).unwrap();
        let pot = SwiftHohenberg { epsilon: 0.025, g: 0.0 };
        let oracle = (brute_integral(&w, 12, |v| pot.phi(v)) + space.mesh().measure()).sqrt();
        assert!((b.denominator - oracle).abs() < 1e-8);
    }

    #[test]
    fn initial_r_is_consistent_with_quadrature() {
        let (space, op, model) = setup(8, 2);
        let u = project_l2(&space, |x| 0.4 * (x[0] / 2.0).sin() * (x[1] / 2.0).cos());
        let state = SavState::initial(u.clone(), &op, &model, 0.0).unwrap();
        let pot = SwiftHohenberg { epsilon: 0.025, g: 0.0 };
        let direct = brute_integral(&u, 10, |v| pot.phi(v));
        assert!((state.r * state.r - space.mesh().measure() - direct).abs() < 1e-10);
        let e = energies(&state, &model);
        assert!((e.modified - e.original - space.mesh().measure()).abs() < 1e-10);
    }

    #[test]
    fn zero_state_energies() {
        let (space, op, model) = setup(4, 1);
        let state = SavState::initial(DgField::zeros(&space), &op, &model, 0.0).unwrap();
        let e = energies(&state, &model);
        assert_eq!(e.original, 0.0);
        assert!((e.modified - 16.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn original_energy_matches_closed_form() {
        // over a 4π interval ∫sin²(x/2) = 2π and ∫sin⁴(x/2) = 3π/2
        let (e, n) = (0.025, 32);
        let (space, op, model) = setup(n, 3);
        let u = project_l2(&space, |x| (x[0] / 2.0).sin() * (x[1] / 2.0).sin());
        let state = SavState::initial(u, &op, &model, 0.0).unwrap();
        let int_u2 = (2.0 * PI) * (2.0 * PI);
        let int_u4 = (1.5 * PI) * (1.5 * PI);
        // q = -(Δ+1)u = -u/2
        let exact = 0.5 * 0.25 * int_u2 - 0.5 * e * int_u2 + 0.25 * int_u4;
        let got = energies(&state, &model).original;
        // discretization error of O(h^4) dominates the quadrature here
        assert!((got - exact).abs() < 1e-4, "{got} vs {exact}");
    }

    #[test]
    fn potential_integral_is_exact_for_projected_fields() {
        let (space, _, model) = setup(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_field(&space, &mut rng, 0.5);
        let fast = integrate_potential(&w, model.potential.as_ref());
        let slow = brute_integral(&w, 14, |v| model.potential.phi(v));
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0));
    }

    #[test]
    fn bh_of_zero_and_kernel() {
        let (space, _, _) = setup(4, 1);
        let op0 = DgOperator::new(&space, 0.0).unwrap();
        let (v, w, _) = apply_bh(&op0, 0.1, &DgField::zeros(&space), &tight()).unwrap();
        assert!(v.coeffs().iter().chain(w.coeffs()).all(|&x| x == 0.0));
        let c = project_l2(&space, |_| 1.0);
        let (v, w, _) = apply_bh(&op0, 0.1, &c, &tight()).unwrap();
        assert!(v.add_scaled(-1.0, &c).unwrap().norm_l2() < 1e-12);
        assert!(w.norm_l2() < 1e-12);
    }

    #[test]
    fn bh_matches_dense_inverse_and_lemma_bounds() {
        let (space, op, _) = setup(8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tau = 1e-2;
        let a = DenseMatrix::from_operator(op.assembled()).unwrap();
        let n = space.n_dofs();
        let mut m = DenseMatrix::identity(n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|l| a.get(i, l) * a.get(l, j)).sum();
                m.add(i, j, tau * s);
            }
        }
        for _ in 0..5 {
            let f = random_field(&space, &mut rng, 1.0);
            let (v, w, _) = apply_bh(&op, tau, &f, &tight()).unwrap();
            let dense = dense_solve(&m, f.coeffs()).unwrap();
            let err = v.coeffs().iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
            let fv = dot(f.coeffs(), v.coeffs());
            let vv = dot(v.coeffs(), v.coeffs());
            let ww = dot(w.coeffs(), w.coeffs());
            assert!((fv - vv - tau * ww).abs() < 1e-9 * dot(f.coeffs(), f.coeffs()));
            assert!(v.norm_l2() <= f.norm_l2() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn zero_state_pre_evaluation_keeps_r() {
        let (space, op, model) = setup(4, 1);
        let state = SavState::initial(DgField::zeros(&space), &op, &model, 0.0).unwrap();
        let r = pre_evaluate_r_first(&state, 1e-3, &model, &op, &tight()).unwrap();
        assert_eq!(r, state.r);
        let r = pre_evaluate_r_half_second(&state, &state.u, 1e-3, &model, &op, &tight()).unwrap();
        assert_eq!(r, state.r);
    }

    #[test]
    fn pre_evaluation_denominator_is_at_least_one() {
        let (space, op, model) = setup(4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let u = random_field(&space, &mut rng, 1.0);
            let b = b_of(&u, &model).unwrap();
            let tau = rng.gen_range(1e-4..1.0);
            let pre = pre_evaluate_r(&op, tau, u.coeffs(), 3.0, &b.projected, u.coeffs(), &tight()).unwrap();
            assert!(pre.denominator >= 1.0);
        }
    }

    #[test]
    fn pre_evaluated_r_solves_the_coupled_step() {
        // dense oracle: solve (I + τA²) u + τ r Πb = uⁿ and r - ½(Πb,u) = rⁿ - ½(Πb,uⁿ) jointly
        let (space, op, model) = setup(4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&space, &mut rng, 0.3);
        let b = b_of(&u, &model).unwrap().projected;
        let (tau, r_n) = (0.05, 2.5);
        let a = DenseMatrix::from_operator(op.assembled()).unwrap();
        let n = space.n_dofs();
        let m = DenseMatrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
            (true, true) => {
                let s: f64 = (0..n).map(|l| a.get(i, l) * a.get(l, j)).sum();
                f64::from(u8::from(i == j)) + tau * s
            }
            (true, false) => tau * b[i],
            (false, true) => -0.5 * b[j],
            (false, false) => 1.0,
        })
        .unwrap();
        let mut rhs = u.coeffs().to_vec();
        rhs.push(r_n - 0.5 * dot(&b, u.coeffs()));
        let sol = dense_solve(&m, &rhs).unwrap();
        let pre = pre_evaluate_r(&op, tau, u.coeffs(), r_n, &b, u.coeffs(), &tight()).unwrap();
        assert!((pre.r_next - sol[n]).abs() < 1e-10, "{} vs {}", pre.r_next, sol[n]);
    }

    #[test]
    fn half_step_delegates_to_first_order_formula() {
        let (space, op, model) = setup(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_field(&space, &mut rng, 0.3);
        let ustar = random_field(&space, &mut rng, 0.3);
        let state = SavState::initial(u, &op, &model, 0.0).unwrap();
        let dt = 0.2;
        let half = pre_evaluate_r_half_second(&state, &ustar, dt, &model, &op, &tight()).unwrap();
        let b = b_of(&ustar, &model).unwrap().projected;
        let uc = state.u.coeffs();
        let direct = pre_evaluate_r(&op, dt / 2.0, uc, state.r, &b, uc, &tight()).unwrap();
        assert!((half - direct.r_next).abs() < 1e-13);
    }
}
