//! Piecewise polynomial space `V_h` with an L²-orthonormal Legendre basis.
//!
//! On a cell of width `h` the 1D basis is `φ_i(x) = sqrt(2/h) ψ_i(ξ)` where
//! `ψ_i = sqrt((2i+1)/2) P_i` is orthonormal on `[-1, 1]`. 2D modes are products
//! `φ_ix(x) φ_iy(y)`, either all of them (`Q^k`) or those with `ix + iy <= k`
//! (`P^k`). Both sets are orthonormal, so the mass matrix is the identity and
//! L² inner products reduce to Euclidean dot products of coefficient vectors.
//!
//! Kernels work on the full tensor block of `(k+1)^dim` modes with index
//! `ix + (k+1) * iy`; a `P^k` block is expanded into it and restricted back.
//! The global index of local mode `m` in cell `c` is `c * block_len + m`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::RectMesh;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-type initial guess, then Newton on P_n.
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = x;
            weights[i] = w;
            nodes[n - 1 - i] = -x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for j in 1..n {
        let jf = j as f64;
        let p_next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        let dp_next = dp_prev + (2.0 * jf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Orthonormal reference basis `ψ_i(ξ)` and its derivative.
pub fn reference_basis(i: usize, xi: f64) -> (f64, f64) {
    let (p, dp) = legendre_with_derivative(i, xi);
    let s = ((2 * i + 1) as f64 / 2.0).sqrt();
    (s * p, s * dp)
}

/// Contracts a `p^dim` block with a `rows x cols` matrix along every axis:
/// `out = (M ⊗ M) input` in 2D, `out = M input` in 1D.
pub(crate) fn tensor_contract(
    dim: usize,
    mat: &[f64],
    rows: usize,
    cols: usize,
    input: &[f64],
    out: &mut [f64],
) {
    match dim {
        1 => {
            for r in 0..rows {
                out[r] = (0..cols).map(|c| mat[r * cols + c] * input[c]).sum();
            }
        }
        _ => {
            let mut tmp = vec![0.0; rows * cols];
            for cy in 0..cols {
                for r in 0..rows {
                    let mut acc = 0.0;
                    for c in 0..cols {
                        acc += mat[r * cols + c] * input[c + cols * cy];
                    }
                    tmp[r + rows * cy] = acc;
                }
            }
            for ry in 0..rows {
                for rx in 0..rows {
                    let mut acc = 0.0;
                    for c in 0..cols {
                        acc += mat[ry * cols + c] * tmp[rx + rows * c];
                    }
                    out[rx + rows * ry] = acc;
                }
            }
        }
    }
}

/// Which products of 1D Legendre modes span a cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `P^k`: total degree at most `k`.
    #[default]
    TotalDegree,
    /// `Q^k`: degree at most `k` in each variable.
    Tensor,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::TotalDegree => "pk",
            BasisKind::Tensor => "qk",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pk" | "p" | "total-degree" => Ok(BasisKind::TotalDegree),
            "qk" | "q" | "tensor" => Ok(BasisKind::Tensor),
            _ => Err(Error::InvalidArgument(format!("unknown basis '{s}' (expected pk or qk)"))),
        }
    }
}

/// The discrete space `V_h` of degree `k` on a rectangular mesh.
#[derive(Debug)]
pub struct DgSpace {
    mesh: RectMesh,
    degree: usize,
    basis: BasisKind,
    /// Per-axis indices of each local mode.
    modes: Vec<[usize; 2]>,
    /// Position of each local mode in the full tensor block.
    tensor_index: Vec<usize>,
    quad: QuadRule,
    /// `ψ_i(ξ_q)` laid out `[q * p + i]`.
    vandermonde: Vec<f64>,
    /// `w_q ψ_i(ξ_q)` laid out `[i * nq + q]`.
    weighted_transpose: Vec<f64>,
}

impl DgSpace {
    pub const SUPPORTED_DEGREES: std::ops::RangeInclusive<usize> = 1..=3;

    /// Space with the default `P^k` basis.
    pub fn new(mesh: RectMesh, degree: usize) -> Result<Arc<Self>> {
        Self::with_basis(mesh, degree, BasisKind::default())
    }

    pub fn with_basis(mesh: RectMesh, degree: usize, basis: BasisKind) -> Result<Arc<Self>> {
        if !Self::SUPPORTED_DEGREES.contains(&degree) {
            return Err(Error::Unsupported(format!("polynomial degree {degree}")));
        }
        let p = degree + 1;
        let modes: Vec<[usize; 2]> = match (mesh.dim(), basis) {
            (1, _) => (0..p).map(|i| [i, 0]).collect(),
            (_, BasisKind::Tensor) => (0..p * p).map(|m| [m % p, m / p]).collect(),
            (_, BasisKind::TotalDegree) => {
                (0..=degree).flat_map(|total| (0..=total).map(move |iy| [total - iy, iy])).collect()
            }
        };
        let tensor_index = modes.iter().map(|[ix, iy]| ix + p * iy).collect();
        let quad = QuadRule::gauss_legendre(p);
        let vandermonde = tabulate(&quad, p);
        let weighted_transpose = weighted_transpose(&quad, p);
        Ok(Arc::new(Self { mesh, degree, basis, modes, tensor_index, quad, vandermonde, weighted_transpose }))
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn mesh(&self) -> &RectMesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn quad(&self) -> &QuadRule {
        &self.quad
    }

    /// Modes per axis, `k + 1`.
    pub fn modes_per_axis(&self) -> usize {
        self.degree + 1
    }

    /// Modes per cell: `(k+1)^dim` for `Q^k`, `(k+1)(k+2)/2` for `P^k` in 2D.
    pub fn block_len(&self) -> usize {
        self.modes.len()
    }

    /// Length of the full tensor block, `(k + 1)^dim`.
    pub fn tensor_block_len(&self) -> usize {
        self.modes_per_axis().pow(self.dim() as u32)
    }

    /// Whether blocks already are full tensor blocks.
    /// Per-axis degrees of the local modes, in coefficient order.
    pub fn modes(&self) -> &[[usize; 2]] {
        &self.modes
    }

    pub fn is_tensor(&self) -> bool {
        self.block_len() == self.tensor_block_len()
    }

    /// Scatters one cell block into a zeroed full tensor block.
    pub fn expand_block(&self, block: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        for (&t, &c) in self.tensor_index.iter().zip(block) {
            full[t] = c;
        }
    }

    /// Gathers the modes of this space from a full tensor block.
    pub fn restrict_block(&self, full: &[f64], block: &mut [f64]) {
        for (&t, c) in self.tensor_index.iter().zip(block) {
            *c = full[t];
        }
    }

    /// Expands a whole coefficient vector to full tensor blocks.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        let (bl, tl) = (self.block_len(), self.tensor_block_len());
        let mut out = vec![0.0; tl * self.mesh.n_cells()];
        for (block, full) in coeffs.chunks_exact(bl).zip(out.chunks_exact_mut(tl)) {
            self.expand_block(block, full);
        }
        out
    }

    /// Inverse of [`expand`](Self::expand) on the modes of this space.
    pub fn restrict(&self, full: &[f64], coeffs: &mut [f64]) {
        let (bl, tl) = (self.block_len(), self.tensor_block_len());
        for (f, block) in full.chunks_exact(tl).zip(coeffs.chunks_exact_mut(bl)) {
            self.restrict_block(f, block);
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.block_len() * self.mesh.n_cells()
    }

    /// Per-axis mode indices of local mode `m`.
    pub fn mode_multi_index(&self, m: usize) -> [usize; 2] {
        self.modes[m]
    }

    /// Value of local basis function `m` of `cell` at a reference point.
    pub fn basis_value(&self, cell: usize, m: usize, reference: &[f64]) -> f64 {
        let idx = self.mesh.cell_multi_index(cell);
        let modes = self.mode_multi_index(m);
        (0..self.dim())
            .map(|d| {
                let h = self.mesh.cell_size(d, idx[d]);
                (2.0 / h).sqrt() * reference_basis(modes[d], reference[d]).0
            })
            .product()
    }

    /// Physical gradient of local basis function `m` of `cell` at a reference point.
    pub fn basis_gradient(&self, cell: usize, m: usize, reference: &[f64]) -> [f64; 2] {
        let idx = self.mesh.cell_multi_index(cell);
        let modes = self.mode_multi_index(m);
        let dim = self.dim();
        let mut vals = [0.0; 2];
        let mut ders = [0.0; 2];
        for d in 0..dim {
            let h = self.mesh.cell_size(d, idx[d]);
            let (v, dv) = reference_basis(modes[d], reference[d]);
            vals[d] = (2.0 / h).sqrt() * v;
            ders[d] = (2.0 / h).sqrt() * (2.0 / h) * dv;
        }
        let mut grad = [0.0; 2];
        for d in 0..dim {
            grad[d] = (0..dim).map(|e| if e == d { ders[e] } else { vals[e] }).product();
        }
        grad
    }

    /// Reference coordinates of quadrature point `q` of a cell (`q` enumerates
    /// the tensor grid with the x index fastest).
    pub fn quad_point(&self, q: usize) -> [f64; 2] {
        let n = self.quad.len();
        let mut xi = [0.0; 2];
        xi[0] = self.quad.nodes[q % n];
        if self.dim() == 2 {
            xi[1] = self.quad.nodes[q / n];
        }
        xi
    }

    /// Tensor quadrature weight of point `q` on the reference cell.
    pub fn quad_weight(&self, q: usize) -> f64 {
        let n = self.quad.len();
        match self.dim() {
            1 => self.quad.weights[q],
            _ => self.quad.weights[q % n] * self.quad.weights[q / n],
        }
    }

    pub fn quad_points_per_cell(&self) -> usize {
        self.quad.len().pow(self.dim() as u32)
    }

    /// Product over axes of `sqrt(2/h_d)`, the scale of an orthonormal mode.
    pub(crate) fn basis_scale(&self, cell: usize) -> f64 {
        let idx = self.mesh.cell_multi_index(cell);
        (0..self.dim()).map(|d| (2.0 / self.mesh.cell_size(d, idx[d])).sqrt()).product()
    }

    /// Values of `field` at the quadrature points of every cell.
    pub fn values_at_quadrature(&self, coeffs: &[f64]) -> Vec<f64> {
        let p = self.modes_per_axis();
        let nq = self.quad.len();
        let per_cell = self.quad_points_per_cell();
        let bl = self.block_len();
        let mut full = vec![0.0; self.tensor_block_len()];
        let mut out = vec![0.0; per_cell * self.mesh.n_cells()];
        for cell in 0..self.mesh.n_cells() {
            let scale = self.basis_scale(cell);
            let dst = &mut out[cell * per_cell..(cell + 1) * per_cell];
            self.expand_block(&coeffs[cell * bl..(cell + 1) * bl], &mut full);
            tensor_contract(self.dim(), &self.vandermonde, nq, p, &full, dst);
            dst.iter_mut().for_each(|v| *v *= scale);
        }
        out
    }

    /// Projects values given at quadrature points (layout of
    /// [`values_at_quadrature`](Self::values_at_quadrature)) onto `V_h`.
    pub fn project_quadrature_values(&self, values: &[f64]) -> Vec<f64> {
        let p = self.modes_per_axis();
        let nq = self.quad.len();
        let per_cell = self.quad_points_per_cell();
        let bl = self.block_len();
        let mut full = vec![0.0; self.tensor_block_len()];
        let mut coeffs = vec![0.0; self.n_dofs()];
        for cell in 0..self.mesh.n_cells() {
            // ∫_K f φ_m = |K|/2^dim Σ_q w_q f_q φ_m(x_q) and |K|/2^dim = 1/scale².
            let scale = self.basis_scale(cell);
            tensor_contract(
                self.dim(),
                &self.weighted_transpose,
                p,
                nq,
                &values[cell * per_cell..(cell + 1) * per_cell],
                &mut full,
            );
            let dst = &mut coeffs[cell * bl..(cell + 1) * bl];
            self.restrict_block(&full, dst);
            dst.iter_mut().for_each(|v| *v /= scale);
        }
        coeffs
    }

    /// Physical coordinates of all quadrature points, cell by cell.
    pub fn quadrature_coordinates(&self) -> Vec<[f64; 2]> {
        let per_cell = self.quad_points_per_cell();
        let mut out = Vec::with_capacity(per_cell * self.mesh.n_cells());
        for cell in 0..self.mesh.n_cells() {
            for q in 0..per_cell {
                out.push(self.mesh.map_to_physical(cell, &self.quad_point(q)));
            }
        }
        out
    }
}

fn tabulate(quad: &QuadRule, p: usize) -> Vec<f64> {
    let mut v = vec![0.0; quad.len() * p];
    for (q, &x) in quad.nodes.iter().enumerate() {
        for i in 0..p {
            v[q * p + i] = reference_basis(i, x).0;
        }
    }
    v
}

fn weighted_transpose(quad: &QuadRule, p: usize) -> Vec<f64> {
    let nq = quad.len();
    let mut v = vec![0.0; p * nq];
    for i in 0..p {
        for q in 0..nq {
            v[i * nq + q] = quad.weights[q] * reference_basis(i, quad.nodes[q]).0;
        }
    }
    v
}

/// A function in `V_h`: one block of modal coefficients per cell.
#[derive(Clone, Debug)]
pub struct DgField {
    space: Arc<DgSpace>,
    coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(space: &Arc<DgSpace>) -> Self {
        Self { space: Arc::clone(space), coeffs: vec![0.0; space.n_dofs()] }
    }

    pub fn from_coeffs(space: &Arc<DgSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::DimensionMismatch { expected: space.n_dofs(), found: coeffs.len() });
        }
        Ok(Self { space: Arc::clone(space), coeffs })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn block(&self, cell: usize) -> &[f64] {
        let bl = self.space.block_len();
        &self.coeffs[cell * bl..(cell + 1) * bl]
    }

    pub fn same_space(&self, other: &DgField) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    fn check_space(&self, other: &DgField) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DgField) -> Result<DgField> {
        self.check_space(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect();
        Ok(Self { space: Arc::clone(&self.space), coeffs })
    }

    pub fn scaled(&self, alpha: f64) -> DgField {
        Self { space: Arc::clone(&self.space), coeffs: self.coeffs.iter().map(|a| alpha * a).collect() }
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// L² projection `Π f` computed with the `(k+1)`-point Gauss rule.
pub fn project_l2<F>(space: &Arc<DgSpace>, f: F) -> DgField
where
    F: Fn(&[f64]) -> f64,
{
    let dim = space.dim();
    let values: Vec<f64> = space.quadrature_coordinates().iter().map(|x| f(&x[..dim])).collect();
    DgField { space: Arc::clone(space), coeffs: space.project_quadrature_values(&values) }
}

/// Value of `field` at a reference point of `cell`.
pub fn eval_at(field: &DgField, cell: usize, reference: &[f64]) -> Result<f64> {
    let space = &field.space;
    let n_cells = space.mesh().n_cells();
    if cell >= n_cells {
        return Err(Error::OutOfRange { index: cell, len: n_cells });
    }
    if reference.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: reference.len() });
    }
    let p = space.modes_per_axis();
    let scale = space.basis_scale(cell);
    let bx: Vec<f64> = (0..p).map(|i| reference_basis(i, reference[0]).0).collect();
    let by: Vec<f64> = match space.dim() {
        1 => vec![1.0],
        _ => (0..p).map(|i| reference_basis(i, reference[1]).0).collect(),
    };
    let value: f64 = field.block(cell).iter().zip(&space.modes).map(|(c, [ix, iy])| c * bx[*ix] * by[*iy]).sum();
    Ok(scale * value)
}

/// `(a, b)` in L²; exact because the basis is orthonormal.
pub fn l2_inner(a: &DgField, b: &DgField) -> Result<f64> {
    a.check_space(b)?;
    Ok(dot(&a.coeffs, &b.coeffs))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, BcKind, Interval};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn space(n: usize, k: usize, lo: f64, hi: f64) -> Arc<DgSpace> {
        let mesh = build_rect_mesh(&[Interval::new(lo, hi); 2], &[n, n], BcKind::Periodic).unwrap();
        DgSpace::new(mesh, k).unwrap()
    }

    #[test]
    fn gauss_rules_integrate_monomials() {
        for n in 1..=6 {
            let rule = QuadRule::gauss_legendre(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for deg in 0..2 * n {
                let approx: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        let s = space(3, 3, 0.0, 1.7);
        // over-integrate with a 6-point rule
        let rule = QuadRule::gauss_legendre(6);
        let bl = s.block_len();
        let cell = 4;
        let jac = s.mesh().cell_measure(cell) / 4.0;
        for m in 0..bl {
            for n in 0..bl {
                let mut acc = 0.0;
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                        acc += wx * wy * jac * s.basis_value(cell, m, &[x, y]) * s.basis_value(cell, n, &[x, y]);
                    }
                }
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!((acc - expected).abs() < 1e-12, "({m},{n}) = {acc}");
            }
        }
    }

    #[test]
    fn constants_are_reproduced() {
        for k in 1..=3 {
            let s = space(4, k, -1.0, 2.0);
            let f = project_l2(&s, |_| 2.5);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            for _ in 0..20 {
                let cell = rng.gen_range(0..s.mesh().n_cells());
                let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                assert!((eval_at(&f, cell, &xi).unwrap() - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_mode_normalization() {
        let s = space(4, 2, 0.0, 2.0);
        let mut f = DgField::zeros(&s);
        f.coeffs_mut()[5 * s.block_len()] = 1.0;
        let v = eval_at(&f, 5, &[0.0, 0.0]).unwrap();
        assert!((v - 1.0 / s.mesh().cell_measure(5).sqrt()).abs() < 1e-13);
    }

    fn reproduces(s: &Arc<DgSpace>, poly: impl Fn(&[f64]) -> f64) {
        let f = project_l2(s, &poly);
        for cell in 0..s.mesh().n_cells() {
            for xi in [[-0.3, 0.7], [0.9, -0.95], [0.0, 0.1]] {
                let x = s.mesh().map_to_physical(cell, &xi);
                assert!((eval_at(&f, cell, &xi).unwrap() - poly(&x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cell_polynomials_are_reproduced() {
        let mesh = build_rect_mesh(&[Interval::new(0.0, 1.0); 2], &[2, 2], BcKind::Periodic).unwrap();
        let q = DgSpace::with_basis(mesh, 3, BasisKind::Tensor).unwrap();
        reproduces(&q, |x| 1.0 + x[0] - 2.0 * x[1] * x[0] * x[0] + x[1].powi(3) * x[0].powi(3));
        reproduces(&space(2, 3, 0.0, 1.0), |x| 1.0 + x[0] - 2.0 * x[1] * x[0] * x[0] + x[1].powi(3));
    }

    #[test]
    fn total_degree_modes() {
        let s = space(2, 2, 0.0, 1.0);
        assert_eq!(s.block_len(), 6);
        assert_eq!(s.tensor_block_len(), 9);
        assert_eq!(s.mode_multi_index(0), [0, 0]);
        assert!((0..6).all(|m| s.mode_multi_index(m).iter().sum::<usize>() <= 2));
        let mut full = vec![0.0; 9];
        let block: Vec<f64> = (1..=6).map(f64::from).collect();
        s.expand_block(&block, &mut full);
        assert_eq!(full.iter().filter(|v| **v != 0.0).count(), 6);
        let mut back = vec![0.0; 6];
        s.restrict_block(&full, &mut back);
        assert_eq!(back, block);
        assert_eq!("qk".parse::<BasisKind>().unwrap(), BasisKind::Tensor);
        assert!("rk".parse::<BasisKind>().is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let s = space(4, 2, -PI, PI);
        let f = project_l2(&s, |x| (x[0] * 1.3).sin() * (x[1]).cos() + x[0] * x[1]);
        let g = DgField::from_coeffs(&s, s.project_quadrature_values(&s.values_at_quadrature(f.coeffs()))).unwrap();
        for (a, b) in f.coeffs().iter().zip(g.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let s = space(2, 2, 0.0, 1.0);
        let mut a = DgField::zeros(&s);
        let mut b = DgField::zeros(&s);
        a.coeffs_mut()[3] = 1.0;
        b.coeffs_mut()[4] = 1.0;
        assert_eq!(l2_inner(&a, &b).unwrap(), 0.0);
        assert!((l2_inner(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = DgField::zeros(&space(2, 1, 0.0, 1.0));
        let b = DgField::zeros(&space(2, 1, 0.0, 1.0));
        assert!(matches!(l2_inner(&a, &b), Err(Error::SpaceMismatch)));
        assert!(eval_at(&a, 99, &[0.0, 0.0]).is_err());
    }
}
