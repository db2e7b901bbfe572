//! Error norms, convergence orders, energy traces and the timing harness.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dg_space::{eval_at, project_l2, BasisKind, DgField, DgSpace};
use crate::error::{Error, Result};
use crate::linalg::KrylovConfig;
use crate::problems::ManufacturedCase;
use crate::sav::SavState;
use crate::steppers::{step_count, Integrator, StepPlan, StepReport, Strategy};
use crate::weak_forms::DgOperator;

/// `(L² error, L^∞ error)` of `u` against `exact`.
///
/// The L² norm uses the `(k+1)`-point Gauss rule per axis; the L^∞ norm is the
/// maximum over a uniform lattice of `k+2` points per axis in every cell,
/// endpoints included.
pub fn compute_errors(u: &DgField, exact: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let space = u.space();
    let mesh = space.mesh();
    let dim = space.dim();
    let values = space.values_at_quadrature(u.coeffs());
    let coords = space.quadrature_coordinates();
    let per_cell = space.quad_points_per_cell();
    let mut l2 = 0.0;
    for cell in 0..mesh.n_cells() {
        let jac = mesh.cell_measure(cell) / 2f64.powi(dim as i32);
        for q in 0..per_cell {
            let i = cell * per_cell + q;
            let e = values[i] - exact(&coords[i][..dim]);
            l2 += space.quad_weight(q) * jac * e * e;
        }
    }
    let m = space.degree() + 2;
    let lattice: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let mut linf: f64 = 0.0;
    for cell in 0..mesh.n_cells() {
        let ys: &[f64] = if dim == 2 { &lattice } else { &[0.0] };
        for &y in ys {
            for &x in &lattice {
                let xi = [x, y];
                let v = eval_at(u, cell, &xi[..dim]).expect("cell and dimension are valid");
                let p = mesh.map_to_physical(cell, &xi[..dim]);
                linf = linf.max((v - exact(&p[..dim])).abs());
            }
        }
    }
    (l2.sqrt(), linf)
}

/// Refinement direction of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EocMode {
    /// Mesh counts double.
    Spatial,
    /// Time steps halve.
    Temporal,
}

/// `log₂(e_i / e_{i+1})` for successive entries.
pub fn eoc(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("convergence orders need at least two errors".into()));
    }
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("errors must be positive and finite: {errors:?}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Checks that `params` double (`Spatial`, mesh counts) or halve (`Temporal`, steps).
pub fn check_halving(params: &[f64], mode: EocMode) -> Result<()> {
    for w in params.windows(2) {
        let ratio = match mode {
            EocMode::Spatial => w[1] / w[0],
            EocMode::Temporal => w[0] / w[1],
        };
        if (ratio - 2.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("{mode:?} sequence {params:?} does not halve the mesh parameter")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub k: usize,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub l2: f64,
    pub linf: f64,
    pub eoc_l2: Option<f64>,
    pub eoc_linf: Option<f64>,
}

/// Fills the EOC columns of consecutive records (first record stays empty).
pub fn attach_eoc(records: &mut [ErrorRecord], mode: EocMode) -> Result<()> {
    if records.len() < 2 {
        return Ok(());
    }
    let params: Vec<f64> = records
        .iter()
        .map(|r| match mode {
            EocMode::Spatial => r.n as f64,
            EocMode::Temporal => r.dt,
        })
        .collect();
    check_halving(&params, mode)?;
    let l2 = eoc(&records.iter().map(|r| r.l2).collect::<Vec<_>>())?;
    let linf = eoc(&records.iter().map(|r| r.linf).collect::<Vec<_>>())?;
    for (i, rec) in records.iter_mut().enumerate().skip(1) {
        rec.eoc_l2 = Some(l2[i - 1]);
        rec.eoc_linf = Some(linf[i - 1]);
    }
    Ok(())
}

/// One manufactured-solution run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccuracyRun {
    pub k: usize,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub order: u8,
    pub strategy: Strategy,
    pub krylov: KrylovConfig,
    #[serde(default)]
    pub basis: BasisKind,
}

/// Integrates `case` from its exact initial data and measures the error at `t_final`.
pub fn run_accuracy(case: &ManufacturedCase, run: &AccuracyRun) -> Result<ErrorRecord> {
    let space = DgSpace::with_basis(case.mesh(run.n)?, run.k, run.basis)?;
    let model = case.model();
    let op = DgOperator::new(&space, model.a)?;
    let plan = StepPlan::new(run.order, run.strategy, run.dt)?.with_krylov(run.krylov);
    let steps = step_count(run.t_final, run.dt)?;
    let u0 = project_l2(&space, |x| case.initial(x));
    let state = SavState::initial(u0, &op, &model, 0.0)?;
    let mut integrator = Integrator::new(&op, &model, plan, state)?;
    integrator.run(steps, |_, _| {})?;
    let t = integrator.state().t;
    let (l2, linf) = compute_errors(&integrator.state().u, |x| case.exact(x, t));
    Ok(ErrorRecord { k: run.k, n: run.n, dt: run.dt, t_final: run.t_final, l2, linf, eoc_l2: None, eoc_linf: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub strategy: Strategy,
    pub n: usize,
    /// `2 · dim V_h + 1`: the unknowns `u`, `q` and `r`.
    pub unknowns: usize,
    pub seconds: f64,
    /// `ln(t / t_prev) / ln(𝒩 / 𝒩_prev)` against the previous mesh of the same strategy.
    pub order: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ComplexityFailure {
    pub strategy: Strategy,
    pub n: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ComplexityOutcome {
    pub records: Vec<TimingRecord>,
    pub failures: Vec<ComplexityFailure>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexitySuite {
    pub strategies: Vec<Strategy>,
    pub n_list: Vec<usize>,
    pub k: usize,
    pub dt: f64,
    pub t_final: f64,
    pub krylov: KrylovConfig,
    /// Runs per point; the fastest is kept.
    pub repeats: usize,
    #[serde(default)]
    pub basis: BasisKind,
}

/// Wall-clock time of the first-order scheme per strategy and mesh. Within a
/// mesh the strategies take turns in every repeat, so none of them pays alone
/// for cold caches. A failure drops the remaining meshes of that strategy.
pub fn run_complexity_suite(case: &ManufacturedCase, suite: &ComplexitySuite) -> Result<ComplexityOutcome> {
    let steps = step_count(suite.t_final, suite.dt)?;
    let model = case.model();
    let plans = suite
        .strategies
        .iter()
        .map(|&s| Ok(StepPlan::new(1, s, suite.dt)?.with_krylov(suite.krylov)))
        .collect::<Result<Vec<_>>>()?;
    let mut failed = vec![false; plans.len()];
    let mut timings: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); plans.len()];
    let mut out = ComplexityOutcome::default();
    for &n in &suite.n_list {
        let space = DgSpace::with_basis(case.mesh(n)?, suite.k, suite.basis)?;
        let op = DgOperator::new(&space, model.a)?;
        let u0 = project_l2(&space, |x| case.initial(x));
        let mut best = vec![f64::INFINITY; plans.len()];
        for _ in 0..suite.repeats.max(1) {
            for (i, plan) in plans.iter().enumerate() {
                if failed[i] {
                    continue;
                }
                let timed = (|| -> Result<f64> {
                    let state = SavState::initial(u0.clone(), &op, &model, 0.0)?;
                    let start = Instant::now();
                    let mut integrator = Integrator::new(&op, &model, *plan, state)?;
                    integrator.run(steps, |_, _| {})?;
                    Ok(start.elapsed().as_secs_f64())
                })();
                match timed {
                    Ok(seconds) => best[i] = best[i].min(seconds),
                    Err(e) => {
                        failed[i] = true;
                        let message = e.to_string();
                        out.failures.push(ComplexityFailure { strategy: plan.strategy, n, message });
                    }
                }
            }
        }
        for i in 0..plans.len() {
            if !failed[i] {
                timings[i].push((n, 2 * space.n_dofs() + 1, best[i]));
            }
        }
    }
    for (plan, runs) in plans.iter().zip(timings) {
        let mut previous: Option<(usize, f64)> = None;
        for (n, unknowns, seconds) in runs {
            let order = previous.map(|(u0, s0)| (seconds / s0).ln() / (unknowns as f64 / u0 as f64).ln());
            out.records.push(TimingRecord { strategy: plan.strategy, n, unknowns, seconds, order });
            previous = Some((unknowns, seconds));
        }
    }
    Ok(out)
}

/// One line of an energy trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub n: usize,
    pub t: f64,
    pub original: f64,
    pub modified: f64,
    pub r: f64,
    pub identity_residual: f64,
}

impl EnergyRow {
    pub fn after_step(n: usize, state: &SavState, report: &StepReport) -> Self {
        Self {
            n,
            t: state.t,
            original: report.energy_after.original,
            modified: report.energy_after.modified,
            r: state.r,
            identity_residual: report.identity_residual,
        }
    }
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt_sci(v: Option<f64>) -> String {
    v.map_or_else(String::new, sci)
}

pub fn write_errors_csv(mut out: impl Write, records: &[ErrorRecord]) -> std::io::Result<()> {
    writeln!(out, "k,N,dt,T,l2,linf,eoc_l2,eoc_linf")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.n,
            sci(r.dt),
            sci(r.t_final),
            sci(r.l2),
            sci(r.linf),
            opt_sci(r.eoc_l2),
            opt_sci(r.eoc_linf)
        )?;
    }
    Ok(())
}

pub fn write_timing_csv(mut out: impl Write, records: &[TimingRecord]) -> std::io::Result<()> {
    writeln!(out, "strategy,N,unknowns,seconds,order")?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.strategy, r.n, r.unknowns, sci(r.seconds), opt_sci(r.order))?;
    }
    Ok(())
}

pub fn write_energy_header(mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "n,t,E_original,E_modified,r,identity_residual")
}

pub fn write_energy_row(mut out: impl Write, row: &EnergyRow) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{}",
        row.n,
        sci(row.t),
        sci(row.original),
        sci(row.modified),
        sci(row.r),
        sci(row.identity_residual)
    )
}
