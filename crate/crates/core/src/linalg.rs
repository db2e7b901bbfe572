//! Krylov solvers for the symmetric systems of the time steppers, plus a dense
//! LU path for the reduced system and small-instance oracles.

use std::fmt;
use std::time::Instant;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::{Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear map on `R^n`, applied without exposing storage.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_new(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Applies the operator to two vectors. Operators whose cost is mostly
    /// index traffic override this with one fused pass.
    fn apply_pair(&self, x: [&[f64]; 2], y: [&mut [f64]; 2]) {
        let [y0, y1] = y;
        self.apply(x[0], y0);
        self.apply(x[1], y1);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }

    fn apply_pair(&self, x: [&[f64]; 2], y: [&mut [f64]; 2]) {
        (**self).apply_pair(x, y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `‖b - A x‖`
pub fn residual_norm(op: &impl LinearOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = op.apply_new(x);
    ax.iter().zip(b).map(|(a, bi)| (bi - a) * (bi - a)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovConfig {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// `None` means `10 * dimension`.
    pub max_iterations: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { rel_tolerance: 1e-10, abs_tolerance: 1e-14, max_iterations: None }
    }
}

impl KrylovConfig {
    pub fn with_rel_tolerance(mut self, tol: f64) -> Self {
        self.rel_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0) || !(self.abs_tolerance > 0.0) {
            return Err(Error::InvalidArgument("Krylov tolerances must be positive".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn max_iterations_for(&self, dim: usize) -> usize {
        self.max_iterations.unwrap_or(10 * dim.max(1))
    }

    fn tolerance_for(&self, rhs_norm: f64) -> f64 {
        self.rel_tolerance * rhs_norm + self.abs_tolerance
    }
}

/// Outcome of one iterative solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// True residual `‖b - A x‖` of the returned solution.
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub tolerance: f64,
    pub converged: bool,
    /// Wall time until this system converged; paired solves overlap.
    pub seconds: f64,
    /// Operator applications, the flop proxy.
    pub operator_applications: usize,
}

impl SolveReport {
    pub const CSV_HEADER: &'static str = "iterations,residual_norm,rhs_norm,converged,operator_applications,seconds";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{},{},{:.6e}",
            self.iterations,
            self.residual_norm,
            self.rhs_norm,
            self.converged,
            self.operator_applications,
            self.seconds
        )
    }

    /// Accumulates the cost of `other` into `self`.
    pub fn absorb(&mut self, other: &SolveReport) {
        self.iterations += other.iterations;
        self.operator_applications += other.operator_applications;
        self.seconds += other.seconds;
        self.converged &= other.converged;
        self.residual_norm = self.residual_norm.max(other.residual_norm);
    }
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, residual {:.3e} (tolerance {:.3e})",
            self.iterations, self.residual_norm, self.tolerance
        )
    }
}

struct Counted<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    count: std::cell::Cell<usize>,
}

impl<O: LinearOperator + ?Sized> Counted<'_, O> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.count.set(self.count.get() + 1);
        self.op.apply(x, y);
    }
}

fn check_dims(op: &(impl LinearOperator + ?Sized), rhs: &[f64], x0: Option<&[f64]>) -> Result<()> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
        }
    }
    Ok(())
}

/// Conjugate gradients for symmetric positive definite operators.
///
/// Non-convergence is reported through [`SolveReport::converged`]; the caller
/// decides whether that is fatal.
pub fn cg_solve(
    op: &impl LinearOperator,
    rhs: &[f64],
    x0: Option<&[f64]>,
    config: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    check_dims(op, rhs, x0)?;
    let start = Instant::now();
    let mut run = CgRun::new(op.dim(), rhs, x0, config);
    while !run.done() {
        let (input, output) = run.request();
        op.apply(input, output);
        run.advance(start);
    }
    Ok(run.finish())
}

/// Two independent CG solves with the same operator. The recurrences are
/// separate; only the operator applications are paired through
/// [`LinearOperator::apply_pair`], so each result equals its [`cg_solve`].
pub fn cg_solve_pair(
    op: &impl LinearOperator,
    rhs: [&[f64]; 2],
    x0: [Option<&[f64]>; 2],
    config: &KrylovConfig,
) -> Result<[(Vec<f64>, SolveReport); 2]> {
    config.validate()?;
    check_dims(op, rhs[0], x0[0])?;
    check_dims(op, rhs[1], x0[1])?;
    let start = Instant::now();
    let n = op.dim();
    let [mut a, mut b] = [0, 1].map(|i| CgRun::new(n, rhs[i], x0[i], config));
    loop {
        match (a.done(), b.done()) {
            (true, true) => break,
            (false, true) => {
                let (input, output) = a.request();
                op.apply(input, output);
                a.advance(start);
            }
            (true, false) => {
                let (input, output) = b.request();
                op.apply(input, output);
                b.advance(start);
            }
            (false, false) => {
                let (ia, oa) = a.request();
                let (ib, ob) = b.request();
                op.apply_pair([ia, ib], [oa, ob]);
                a.advance(start);
                b.advance(start);
            }
        }
    }
    Ok([a.finish(), b.finish()])
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CgStage {
    /// Waiting for `A x` to form the true residual.
    Residual,
    /// Waiting for `A p`.
    Search,
    Done,
}

/// State of one CG recurrence; the caller applies the operator to the
/// requested vector and calls [`advance`](Self::advance).
struct CgRun<'a> {
    rhs: &'a [f64],
    rhs_norm: f64,
    tol: f64,
    max_iter: usize,
    x: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    rr: f64,
    /// whether `r` was last computed as `b - Ax` rather than by recurrence
    r_is_true: bool,
    broken: bool,
    iterations: usize,
    applications: usize,
    seconds: f64,
    stage: CgStage,
}

impl<'a> CgRun<'a> {
    fn new(n: usize, rhs: &'a [f64], x0: Option<&[f64]>, config: &KrylovConfig) -> Self {
        let rhs_norm = norm(rhs);
        let zero = rhs_norm == 0.0;
        Self {
            rhs,
            rhs_norm,
            tol: config.tolerance_for(rhs_norm),
            max_iter: config.max_iterations_for(n),
            x: match x0 {
                Some(x0) if !zero => x0.to_vec(),
                _ => vec![0.0; n],
            },
            r: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
            rr: 0.0,
            r_is_true: zero,
            broken: false,
            iterations: 0,
            applications: 0,
            seconds: 0.0,
            stage: if zero { CgStage::Done } else { CgStage::Residual },
        }
    }

    fn done(&self) -> bool {
        self.stage == CgStage::Done
    }

    fn request(&mut self) -> (&[f64], &mut [f64]) {
        self.applications += 1;
        match self.stage {
            CgStage::Residual => (&self.x, &mut self.ap),
            _ => (&self.p, &mut self.ap),
        }
    }

    fn advance(&mut self, start: Instant) {
        match self.stage {
            CgStage::Residual => {
                self.r.iter_mut().zip(self.rhs).zip(&self.ap).for_each(|((ri, bi), ai)| *ri = bi - ai);
                self.r_is_true = true;
                self.rr = dot(&self.r, &self.r);
                if self.rr.sqrt() <= self.tol || self.iterations >= self.max_iter || self.broken {
                    self.stage = CgStage::Done;
                } else {
                    // (re)start the search from the true residual
                    self.p.copy_from_slice(&self.r);
                    self.stage = CgStage::Search;
                }
            }
            CgStage::Search => {
                let pap = dot(&self.p, &self.ap);
                if !(pap > 0.0) {
                    // not positive definite along p
                    self.broken = true;
                    self.stage = if self.r_is_true { CgStage::Done } else { CgStage::Residual };
                } else {
                    let alpha = self.rr / pap;
                    axpy(alpha, &self.p, &mut self.x);
                    axpy(-alpha, &self.ap, &mut self.r);
                    self.iterations += 1;
                    self.r_is_true = false;
                    let rr_new = dot(&self.r, &self.r);
                    if rr_new.sqrt() <= self.tol || self.iterations >= self.max_iter {
                        // confirm against the true residual before stopping
                        self.stage = CgStage::Residual;
                    } else {
                        let beta = rr_new / self.rr;
                        self.rr = rr_new;
                        self.p.iter_mut().zip(&self.r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
                    }
                }
            }
            CgStage::Done => {}
        }
        if self.done() {
            self.seconds = start.elapsed().as_secs_f64();
        }
    }

    fn finish(self) -> (Vec<f64>, SolveReport) {
        let residual = self.rr.sqrt();
        let report = SolveReport {
            iterations: self.iterations,
            residual_norm: residual,
            rhs_norm: self.rhs_norm,
            tolerance: self.tol,
            converged: residual <= self.tol,
            seconds: self.seconds,
            operator_applications: self.applications,
        };
        (self.x, report)
    }
}

/// MINRES for symmetric, possibly indefinite operators (Paige-Saunders
/// recurrences, restarted from the current iterate if the recursive residual
/// estimate disagrees with the true residual).
pub fn minres_solve(
    op: &impl LinearOperator,
    rhs: &[f64],
    x0: Option<&[f64]>,
    config: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    check_dims(op, rhs, x0)?;
    let start = Instant::now();
    let n = op.dim();
    let rhs_norm = norm(rhs);
    let tol = config.tolerance_for(rhs_norm);
    if rhs_norm == 0.0 {
        let report = SolveReport { tolerance: tol, converged: true, ..Default::default() };
        return Ok((vec![0.0; n], report));
    }
    let op = Counted { op, count: std::cell::Cell::new(0) };
    let max_iter = config.max_iterations_for(n);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut iterations = 0;
    let mut residual;

    'restart: loop {
        let mut r1 = vec![0.0; n];
        op.apply(&x, &mut r1);
        r1.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta1 = norm(&r1);
        residual = beta1;
        if beta1 <= tol || iterations >= max_iter {
            break;
        }
        let mut y = r1.clone();
        let mut r2 = r1.clone();
        let mut v = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let (mut oldb, mut beta) = (0.0, beta1);
        let (mut dbar, mut epsln) = (0.0, 0.0);
        let mut phibar = beta1;
        let (mut cs, mut sn) = (-1.0, 0.0);
        let mut local = 0;

        while iterations < max_iter {
            let s = 1.0 / beta;
            v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
            op.apply(&v, &mut y);
            if local >= 1 {
                axpy(-beta / oldb, &r1, &mut y);
            }
            let alfa = dot(&v, &y);
            axpy(-alfa / beta, &r2, &mut y);
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            oldb = beta;
            beta = norm(&y);
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;

            std::mem::swap(&mut w1, &mut w2);
            std::mem::swap(&mut w2, &mut w);
            for i in 0..n {
                w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            }
            axpy(phi, &w, &mut x);
            iterations += 1;
            local += 1;

            if phibar <= tol || beta == 0.0 {
                continue 'restart;
            }
        }
        let mut r = vec![0.0; n];
        op.apply(&x, &mut r);
        residual = r.iter().zip(rhs).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        break;
    }

    let report = SolveReport {
        iterations,
        residual_norm: residual,
        rhs_norm,
        tolerance: tol,
        converged: residual <= tol,
        seconds: start.elapsed().as_secs_f64(),
        operator_applications: op.count.get(),
    };
    Ok((x, report))
}

/// Largest dense order the reduced strategy will allocate (about 1.2 GB).
pub const DENSE_ORDER_LIMIT: usize = 12_288;

/// Square dense matrix (column-major, backed by `faer`).
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    mat: Mat<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        if n > DENSE_ORDER_LIMIT {
            return Err(Error::DenseTooLarge { order: n, limit: DENSE_ORDER_LIMIT });
        }
        Ok(Self { mat: Mat::zeros(n, n) })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n > DENSE_ORDER_LIMIT {
            return Err(Error::DenseTooLarge { order: n, limit: DENSE_ORDER_LIMIT });
        }
        Ok(Self { mat: Mat::from_fn(n, n, f) })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Materializes any operator column by column.
    pub fn from_operator(op: &impl LinearOperator) -> Result<Self> {
        let n = op.dim();
        let mut out = Self::zeros(n)?;
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            e[j] = 0.0;
            for (i, &v) in col.iter().enumerate() {
                out.mat[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.mat[(i, j)] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.mat[(i, j)] += v;
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.order();
        let mut m: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.mat[(i, j)].abs());
            }
        }
        m
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.order()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.mat.col(j);
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += col[i] * xj;
            }
        }
    }
}

/// Relative pivot threshold below which a matrix is declared singular.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// Direct solve by LU with partial pivoting.
pub fn dense_solve(matrix: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    dense_solve_owned(matrix.clone(), rhs)
}

/// As [`dense_solve`], factorizing `matrix` in place.
pub fn dense_solve_owned(matrix: DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.order();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = matrix.max_abs();
    let mut lu = matrix.mat;
    let par = Par::Seq;
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(factor::lu_in_place_scratch::<usize, f64>(n, n, par, Default::default()));
    let (_, row_perm) =
        factor::lu_in_place(lu.as_mut(), &mut perm, &mut perm_inv, par, MemStack::new(&mut mem), Default::default());
    for i in 0..n {
        let pivot = lu[(i, i)];
        if !(pivot.abs() > PIVOT_THRESHOLD * scale) {
            return Err(Error::SingularMatrix { row: i, pivot });
        }
    }
    let mut x = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let mut mem = MemBuffer::new(solve::solve_in_place_scratch::<usize, f64>(n, 1, par));
    solve::solve_in_place(lu.as_ref(), lu.as_ref(), row_perm, x.as_mut(), par, MemStack::new(&mut mem));
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}
