//! Time steppers for the SAV-DG schemes.
//!
//! First order (backward Euler in `u`, `q`, with `b` frozen at `uⁿ`):
//!
//! ```text
//! (u^{n+1} - uⁿ)/Δt + L_h q^{n+1} + r^{n+1} Πb(uⁿ) = f̄
//! q^{n+1} = L_h u^{n+1}
//! r^{n+1} - rⁿ = ½(Πb(uⁿ), u^{n+1} - uⁿ)
//! ```
//!
//! Second order is the midpoint version with `b` evaluated at
//! `u^{n,*} = 3/2 uⁿ - 1/2 u^{n-1}`. Each step is realized by one of three
//! strategies: [`Strategy::Hybrid`] pre-evaluates `r` in closed form and then
//! needs only `B_h(τ)` solves, [`Strategy::Augmented`] solves the sparse
//! symmetric system in `(u, q, r)`, and [`Strategy::Reduced`] eliminates `r` and
//! solves the dense system in `(u, q)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dg_space::{project_l2, DgField};
use crate::error::{Error, Result};
use crate::linalg::{
    cg_solve, dense_solve_owned, dot, minres_solve, DenseMatrix, KrylovConfig, LinearOperator, SolveReport,
    DENSE_ORDER_LIMIT,
};
use crate::problems::ModelSpec;
use crate::sav::{b_of, energies, pre_evaluate_r, solve_bh, EnergyPair, SavState};
use crate::weak_forms::DgOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Hybrid,
    Augmented,
    Reduced,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Reduced, Strategy::Augmented, Strategy::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Hybrid => "hybrid",
            Strategy::Augmented => "augmented",
            Strategy::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Strategy::Hybrid),
            "augmented" => Ok(Strategy::Augmented),
            "reduced" => Ok(Strategy::Reduced),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Krylov method for the indefinite augmented system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndefiniteSolver {
    #[default]
    Minres,
    Cg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    /// 1 or 2.
    pub order: u8,
    pub strategy: Strategy,
    pub dt: f64,
    pub krylov: KrylovConfig,
    pub indefinite_solver: IndefiniteSolver,
}

impl StepPlan {
    pub fn new(order: u8, strategy: Strategy, dt: f64) -> Result<Self> {
        let plan = Self { order, strategy, dt, krylov: KrylovConfig::default(), indefinite_solver: IndefiniteSolver::Minres };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_krylov(mut self, krylov: KrylovConfig) -> Self {
        self.krylov = krylov;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step {} must be positive", self.dt)));
        }
        match (self.order, self.strategy) {
            (1, _) | (2, Strategy::Hybrid) => {}
            (2, s) => {
                return Err(Error::Unsupported(format!("the {s} strategy exists only for the first-order scheme")))
            }
            (o, _) => return Err(Error::InvalidArgument(format!("scheme order {o}; expected 1 or 2"))),
        }
        self.krylov.validate()
    }
}

/// `u^{n-1}` for the second-order extrapolation.
#[derive(Clone, Debug)]
pub struct History {
    pub previous_u: DgField,
    pub n: usize,
}

impl History {
    /// Initial history with `u^{-1} = u⁰`.
    pub fn start(state: &SavState) -> Self {
        Self { previous_u: state.u.clone(), n: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub energy_before: EnergyPair,
    pub energy_after: EnergyPair,
    /// Defect of the discrete energy law, including the work `(f̄, Δu)` of a source.
    pub identity_residual: f64,
    /// Accumulated Krylov cost of the step (zero for the dense path).
    pub solves: SolveReport,
}

/// `Πf` at `tⁿ` for the first-order scheme and at the midpoint `t^{n+1/2}` for
/// the second-order one.
fn projected_source(model: &ModelSpec, u: &DgField, t0: f64, dt: f64, order: u8) -> Option<Vec<f64>> {
    let f = model.source.as_ref()?;
    let t = if order == 1 { t0 } else { t0 + 0.5 * dt };
    Some(project_l2(u.space(), |x| f(x, t)).into_coeffs())
}

fn finish(
    before: &SavState,
    u: Vec<f64>,
    q: Vec<f64>,
    r: f64,
    plan: &StepPlan,
    model: &ModelSpec,
    fbar: Option<&[f64]>,
    solves: SolveReport,
) -> Result<(SavState, StepReport)> {
    let space = before.u.space();
    let after = SavState {
        u: DgField::from_coeffs(space, u)?,
        q: DgField::from_coeffs(space, q)?,
        r,
        t: before.t + plan.dt,
    };
    let energy_before = energies(before, model);
    let energy_after = energies(&after, model);
    let du: Vec<f64> = after.u.coeffs().iter().zip(before.u.coeffs()).map(|(a, b)| a - b).collect();
    let mut dissipation = dot(&du, &du) / plan.dt;
    if plan.order == 1 {
        let dq: f64 = after.q.coeffs().iter().zip(before.q.coeffs()).map(|(a, b)| (a - b) * (a - b)).sum();
        let dr = after.r - before.r;
        dissipation += 0.5 * dq + dr * dr;
    }
    let work = fbar.map_or(0.0, |f| dot(f, &du));
    let identity_residual = energy_after.modified - energy_before.modified + dissipation - work;
    Ok((after, StepReport { energy_before, energy_after, identity_residual, solves }))
}

/// Solves `(u - uⁿ)/τ + L_h² u + r Πb = f̄`, `r - rⁿ = ½(Πb, u - uⁿ)` by closed-form
/// pre-evaluation of `r` followed by one more `B_h(τ)` solve.
fn hybrid_implicit(
    op: &DgOperator,
    tau: f64,
    u_n: &[f64],
    r_n: f64,
    pi_b: &[f64],
    fbar: Option<&[f64]>,
    krylov: &KrylovConfig,
) -> Result<(Vec<f64>, f64, SolveReport)> {
    let g: Vec<f64> = match fbar {
        Some(f) => u_n.iter().zip(f).map(|(u, f)| u + tau * f).collect(),
        None => u_n.to_vec(),
    };
    let pre = pre_evaluate_r(op, tau, u_n, r_n, pi_b, &g, krylov)?;
    let r_next = pre.r_next;
    // B_h(g - τ r Πb) expressed through the two solves already done; used as
    // the initial guess of the final solve.
    let c = tau * r_n - 0.5 * tau * pre.b_dot_u - tau * r_next;
    let guess: Vec<f64> = pre.bh_xi.iter().zip(&pre.bh_b).map(|(x, b)| x + c * b).collect();
    let rhs: Vec<f64> = g.iter().zip(pi_b).map(|(gi, bi)| gi - tau * r_next * bi).collect();
    let (u, rep) = solve_bh(op, tau, &rhs, Some(&guess), krylov)?;
    let mut solves = pre.reports[0].clone();
    solves.absorb(&pre.reports[1]);
    solves.absorb(&rep);
    Ok((u, r_next, solves))
}

pub fn step_first_hybrid(
    state: &SavState,
    plan: &StepPlan,
    model: &ModelSpec,
    op: &DgOperator,
) -> Result<(SavState, StepReport)> {
    check_plan(plan, 1, Strategy::Hybrid)?;
    let b = b_of(&state.u, model)?;
    let fbar = projected_source(model, &state.u, state.t, plan.dt, 1);
    let (u, r, solves) =
        hybrid_implicit(op, plan.dt, state.u.coeffs(), state.r, &b.projected, fbar.as_deref(), &plan.krylov)?;
    let q = op.apply_new(&u);
    finish(state, u, q, r, plan, model, fbar.as_deref(), solves)
}

pub fn step_second_hybrid(
    state: &SavState,
    history: &History,
    plan: &StepPlan,
    model: &ModelSpec,
    op: &DgOperator,
) -> Result<(SavState, History, StepReport)> {
    check_plan(plan, 2, Strategy::Hybrid)?;
    let u_star = state.u.scaled(1.5).add_scaled(-0.5, &history.previous_u)?;
    let b = b_of(&u_star, model)?;
    let fbar = projected_source(model, &state.u, state.t, plan.dt, 2);
    let tau = 0.5 * plan.dt;
    let u_n = state.u.coeffs();
    let (u_half, r_half, solves) =
        hybrid_implicit(op, tau, u_n, state.r, &b.projected, fbar.as_deref(), &plan.krylov)?;
    let q_half = op.apply_new(&u_half);
    let u: Vec<f64> = u_half.iter().zip(u_n).map(|(h, n)| 2.0 * h - n).collect();
    let q: Vec<f64> = q_half.iter().zip(state.q.coeffs()).map(|(h, n)| 2.0 * h - n).collect();
    let r = 2.0 * r_half - state.r;
    let (next, report) = finish(state, u, q, r, plan, model, fbar.as_deref(), solves)?;
    let history = History { previous_u: state.u.clone(), n: history.n + 1 };
    Ok((next, history, report))
}

/// The symmetric system in `(u, q, r)`:
///
/// ```text
/// [ I/Δt   A    Πb ] [u]   [uⁿ/Δt + f̄      ]
/// [ A     -I    0  ] [q] = [0               ]
/// [ Πbᵀ    0   -2  ] [r]   [(Πb, uⁿ) - 2rⁿ  ]
/// ```
pub struct AugmentedSystem<'a> {
    op: &'a DgOperator,
    pi_b: &'a [f64],
    dt: f64,
}

impl<'a> AugmentedSystem<'a> {
    pub fn new(op: &'a DgOperator, pi_b: &'a [f64], dt: f64) -> Self {
        Self { op, pi_b, dt }
    }

    pub fn rhs(&self, u_n: &[f64], r_n: f64, fbar: Option<&[f64]>) -> Vec<f64> {
        let n = u_n.len();
        let mut rhs = vec![0.0; 2 * n + 1];
        for i in 0..n {
            rhs[i] = u_n[i] / self.dt + fbar.map_or(0.0, |f| f[i]);
        }
        rhs[2 * n] = dot(self.pi_b, u_n) - 2.0 * r_n;
        rhs
    }
}

impl LinearOperator for AugmentedSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.op.dim() + 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.op.dim();
        let (u, rest) = x.split_at(n);
        let (q, r) = rest.split_at(n);
        let r = r[0];
        let (mut au, mut aq) = (vec![0.0; n], vec![0.0; n]);
        self.op.apply_pair([u, q], [&mut au, &mut aq]);
        for i in 0..n {
            y[i] = u[i] / self.dt + aq[i] + self.pi_b[i] * r;
            y[n + i] = au[i] - q[i];
        }
        y[2 * n] = dot(self.pi_b, u) - 2.0 * r;
    }
}

pub fn step_first_augmented(
    state: &SavState,
    plan: &StepPlan,
    model: &ModelSpec,
    op: &DgOperator,
) -> Result<(SavState, StepReport)> {
    check_plan(plan, 1, Strategy::Augmented)?;
    let b = b_of(&state.u, model)?;
    let fbar = projected_source(model, &state.u, state.t, plan.dt, 1);
    let sys = AugmentedSystem::new(op, &b.projected, plan.dt);
    let rhs = sys.rhs(state.u.coeffs(), state.r, fbar.as_deref());
    let mut x0 = Vec::with_capacity(rhs.len());
    x0.extend_from_slice(state.u.coeffs());
    x0.extend_from_slice(state.q.coeffs());
    x0.push(state.r);
    let (x, report) = match plan.indefinite_solver {
        IndefiniteSolver::Minres => minres_solve(&sys, &rhs, Some(&x0), &plan.krylov)?,
        IndefiniteSolver::Cg => cg_solve(&sys, &rhs, Some(&x0), &plan.krylov)?,
    };
    if !report.converged {
        let solver = match plan.indefinite_solver {
            IndefiniteSolver::Minres => "minres",
            IndefiniteSolver::Cg => "cg",
        };
        return Err(Error::NotConverged { solver, report });
    }
    let n = op.dim();
    let u = x[..n].to_vec();
    // enforce the two constraint rows exactly; the Krylov error stays in the first row
    let q = op.apply_new(&u);
    let r = state.r + 0.5 * (dot(&b.projected, &u) - dot(&b.projected, state.u.coeffs()));
    finish(state, u, q, r, plan, model, fbar.as_deref(), report)
}

/// `[[I, ΔtA], [ΔtA, -ΔtI]]`, the time-independent part of the reduced system.
pub fn reduced_base_matrix(op: &DgOperator, dt: f64) -> Result<DenseMatrix> {
    let n = op.dim();
    if 2 * n > DENSE_ORDER_LIMIT {
        return Err(Error::DenseTooLarge { order: 2 * n, limit: DENSE_ORDER_LIMIT });
    }
    let a = op.assembled();
    let mut m = DenseMatrix::zeros(2 * n)?;
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        a.apply(&e, &mut col);
        e[j] = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 {
                m.set(n + i, j, dt * v);
                m.set(i, n + j, dt * v);
            }
        }
        m.set(j, j, 1.0);
        m.set(n + j, n + j, -dt);
    }
    Ok(m)
}

/// Dense solve of
///
/// ```text
/// [ I + (Δt/2) Πb Πbᵀ   ΔtA  ] [u]   [uⁿ + Δt f̄ + (Δt/2)(Πb, uⁿ)Πb - Δt rⁿ Πb]
/// [ ΔtA               -ΔtI  ] [q] = [0                                      ]
/// ```
///
/// then `r^{n+1} = rⁿ + ½(Πb, u^{n+1} - uⁿ)`. `base` is [`reduced_base_matrix`]
/// and is built on the fly when absent.
pub fn step_first_reduced(
    state: &SavState,
    plan: &StepPlan,
    model: &ModelSpec,
    op: &DgOperator,
    base: Option<&DenseMatrix>,
) -> Result<(SavState, StepReport)> {
    check_plan(plan, 1, Strategy::Reduced)?;
    let start = std::time::Instant::now();
    let n = op.dim();
    let mut m = match base {
        Some(b) if b.order() == 2 * n => b.clone(),
        Some(_) => return Err(Error::DimensionMismatch { expected: 2 * n, found: base.map_or(0, DenseMatrix::order) }),
        None => reduced_base_matrix(op, plan.dt)?,
    };
    let b = b_of(&state.u, model)?;
    let pb = &b.projected;
    let half_dt = 0.5 * plan.dt;
    for j in 0..n {
        if pb[j] == 0.0 {
            continue;
        }
        for i in 0..n {
            m.add(i, j, half_dt * pb[i] * pb[j]);
        }
    }
    let fbar = projected_source(model, &state.u, state.t, plan.dt, 1);
    let u_n = state.u.coeffs();
    let coeff = half_dt * dot(pb, u_n) - plan.dt * state.r;
    let mut rhs = vec![0.0; 2 * n];
    for i in 0..n {
        rhs[i] = u_n[i] + coeff * pb[i] + fbar.as_ref().map_or(0.0, |f| plan.dt * f[i]);
    }
    let x = dense_solve_owned(m, &rhs)?;
    let u = x[..n].to_vec();
    let q = op.apply_new(&u);
    let r = state.r + 0.5 * (dot(pb, &u) - dot(pb, u_n));
    let solves = SolveReport { converged: true, seconds: start.elapsed().as_secs_f64(), ..Default::default() };
    finish(state, u, q, r, plan, model, fbar.as_deref(), solves)
}

fn check_plan(plan: &StepPlan, order: u8, strategy: Strategy) -> Result<()> {
    plan.validate()?;
    if plan.order != order || plan.strategy != strategy {
        return Err(Error::InvalidArgument(format!(
            "plan is order {} / {}, step needs order {order} / {strategy}",
            plan.order, plan.strategy
        )));
    }
    Ok(())
}

/// Owns the state of one run and dispatches steps to the planned strategy.
pub struct Integrator<'a> {
    op: &'a DgOperator,
    model: &'a ModelSpec,
    plan: StepPlan,
    state: SavState,
    history: History,
    reduced_base: Option<DenseMatrix>,
}

impl<'a> Integrator<'a> {
    pub fn new(op: &'a DgOperator, model: &'a ModelSpec, plan: StepPlan, initial: SavState) -> Result<Self> {
        plan.validate()?;
        model.validate()?;
        if !std::sync::Arc::ptr_eq(initial.u.space(), op.space()) {
            return Err(Error::SpaceMismatch);
        }
        let reduced_base = match plan.strategy {
            Strategy::Reduced => Some(reduced_base_matrix(op, plan.dt)?),
            _ => None,
        };
        let history = History::start(&initial);
        Ok(Self { op, model, plan, state: initial, history, reduced_base })
    }

    pub fn state(&self) -> &SavState {
        &self.state
    }

    pub fn into_state(self) -> SavState {
        self.state
    }

    pub fn plan(&self) -> &StepPlan {
        &self.plan
    }

    pub fn steps_taken(&self) -> usize {
        self.history.n
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let (op, model, plan) = (self.op, self.model, &self.plan);
        let (next, report) = match (plan.order, plan.strategy) {
            (2, _) => {
                let (next, history, report) = step_second_hybrid(&self.state, &self.history, plan, model, op)?;
                self.history = history;
                self.state = next;
                return Ok(report);
            }
            (_, Strategy::Hybrid) => step_first_hybrid(&self.state, plan, model, op)?,
            (_, Strategy::Augmented) => step_first_augmented(&self.state, plan, model, op)?,
            (_, Strategy::Reduced) => step_first_reduced(&self.state, plan, model, op, self.reduced_base.as_ref())?,
        };
        self.history = History { previous_u: std::mem::replace(&mut self.state, next).u, n: self.history.n + 1 };
        Ok(report)
    }

    /// Takes `steps` steps, handing each report to `observe`.
    pub fn run(&mut self, steps: usize, mut observe: impl FnMut(&SavState, &StepReport)) -> Result<()> {
        for _ in 0..steps {
            let report = self.step()?;
            observe(&self.state, &report);
        }
        Ok(())
    }
}

/// Number of steps of size `dt` reaching `t_final`; rejects non-integral ratios.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("final time {t_final} and step {dt}")));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::InvalidArgument(format!("final time {t_final} is not a multiple of the step {dt}")));
    }
    Ok(n as usize)
}
