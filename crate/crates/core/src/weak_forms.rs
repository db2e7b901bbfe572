//! The penalty-free DG bilinear form
//!
//! ```text
//! A(w, v) = Σ_K ∫_K ∇w·∇v - (a/2) w v  +  Σ_e ∫_e {∂_ν w}[v] + [w]{∂_ν v}
//! ```
//!
//! and the operator `L_h` it induces. Periodic boundary faces are treated as
//! interior faces between the paired cells; Neumann-type boundaries add nothing.
//!
//! Two realizations are kept. [`DgOperator::apply`] is matrix-free and uses the
//! tensor structure `A = D_x ⊗ I + I ⊗ D_y - (a/2) I` of the orthonormal basis;
//! on `P^k` spaces the one-dimensional blocks are first restricted to the local
//! modes. [`DgOperator::assembled`] builds a CSR matrix face by face with quadrature and
//! serves as an independent check of the first.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::dg_space::{reference_basis, DgField, DgSpace, QuadRule};
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::mesh::{BcKind, FaceCells, Side};

/// One-dimensional DG operator along a mesh axis: a block-tridiagonal matrix
/// (cyclic when periodic) of `(k+1) x (k+1)` blocks.
#[derive(Clone, Debug)]
pub struct AxisOperator {
    p: usize,
    /// Per row cell, the coupled column cells and their row-major blocks.
    rows: Vec<Vec<(usize, Vec<f64>)>>,
}

impl AxisOperator {
    pub fn new(cell_sizes: &[f64], degree: usize, bc: BcKind) -> Self {
        let n = cell_sizes.len();
        let p = degree + 1;
        let quad = QuadRule::gauss_legendre(p);
        let mut rows: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n];

        for (i, &h) in cell_sizes.iter().enumerate() {
            let mut block = vec![0.0; p * p];
            for (&x, &w) in quad.nodes.iter().zip(&quad.weights) {
                let d: Vec<f64> = (0..p).map(|m| reference_basis(m, x).1).collect();
                for m in 0..p {
                    for l in 0..p {
                        block[m * p + l] += w * d[m] * d[l];
                    }
                }
            }
            let s = (2.0 / h) * (2.0 / h);
            block.iter_mut().for_each(|v| *v *= s);
            add_block(&mut rows[i], i, &block);
        }

        let mut faces: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        if bc == BcKind::Periodic {
            faces.push((n - 1, 0));
        }
        for (lower, upper) in faces {
            let trace = |cell: usize, xi: f64| {
                let h = cell_sizes[cell];
                let s = (2.0 / h).sqrt();
                (0..p)
                    .map(|m| {
                        let (v, d) = reference_basis(m, xi);
                        (s * v, s * (2.0 / h) * d)
                    })
                    .collect::<Vec<_>>()
            };
            let sides = [(lower, -1.0, trace(lower, 1.0)), (upper, 1.0, trace(upper, -1.0))];
            for (ra, sa, ta) in &sides {
                for (cb, sb, tb) in &sides {
                    let mut block = vec![0.0; p * p];
                    for m in 0..p {
                        for l in 0..p {
                            // row: test mode m of cell ra, column: trial mode l of cell cb
                            block[m * p + l] = 0.5 * tb[l].1 * sa * ta[m].0 + sb * tb[l].0 * 0.5 * ta[m].1;
                        }
                    }
                    add_block(&mut rows[*ra], *cb, &block);
                }
            }
        }
        Self { p, rows }
    }

    pub fn n_cells(&self) -> usize {
        self.rows.len()
    }

    /// Dense entry `(row cell, row mode; col cell, col mode)`, for tests.
    pub fn entry(&self, row: usize, m: usize, col: usize, l: usize) -> f64 {
        self.rows[row].iter().filter(|(c, _)| *c == col).map(|(_, b)| b[m * self.p + l]).sum()
    }
}

fn add_block(row: &mut Vec<(usize, Vec<f64>)>, col: usize, block: &[f64]) {
    if let Some((_, b)) = row.iter_mut().find(|(c, _)| *c == col) {
        b.iter_mut().zip(block).for_each(|(x, y)| *x += y);
    } else {
        row.push((col, block.to_vec()));
    }
}

/// The discrete operator `L_h` (equal to the matrix of `A` because the mass
/// matrix is the identity).
#[derive(Debug)]
pub struct DgOperator {
    space: Arc<DgSpace>,
    a: f64,
    axes: Vec<AxisOperator>,
    /// The axis blocks restricted to the local modes; `None` for tensor spaces.
    mode_blocks: Option<[ModeBlocks; 2]>,
    assembled: OnceLock<CsrMatrix>,
}

/// `D_x ⊗ I` or `I ⊗ D_y` restricted to the modes of a non-tensor space, as
/// dense `bl x bl` blocks per coupled cell pair along the axis, stored flat.
#[derive(Clone, Debug)]
struct ModeBlocks {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl ModeBlocks {
    fn new(axis_op: &AxisOperator, axis: usize, modes: &[[usize; 2]]) -> Self {
        let p = axis_op.p;
        let mut row_ptr = vec![0];
        let (mut cols, mut values) = (Vec::new(), Vec::new());
        for row in &axis_op.rows {
            for (j, blk) in row {
                cols.push(*j);
                for a in modes {
                    for b in modes {
                        let coupled = a[1 - axis] == b[1 - axis];
                        values.push(if coupled { blk[a[axis] * p + b[axis]] } else { 0.0 });
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, values }
    }
}

impl DgOperator {
    pub fn new(space: &Arc<DgSpace>, a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!("coefficient a = {a}")));
        }
        let mesh = space.mesh();
        let axes = (0..mesh.dim())
            .map(|d| {
                let sizes: Vec<f64> = (0..mesh.counts()[d]).map(|i| mesh.cell_size(d, i)).collect();
                AxisOperator::new(&sizes, space.degree(), mesh.bc())
            })
            .collect::<Vec<_>>();
        // P^k modes span a subspace of Q^k, so A is the corresponding principal submatrix.
        let mode_blocks = (!space.is_tensor())
            .then(|| [0, 1].map(|axis| ModeBlocks::new(&axes[axis], axis, space.modes())));
        Ok(Self { space: Arc::clone(space), a, axes, mode_blocks, assembled: OnceLock::new() })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `A(w, v) = v · (A w)`.
    pub fn bilinear(&self, w: &[f64], v: &[f64]) -> f64 {
        crate::linalg::dot(v, &self.apply_new(w))
    }

    /// CSR matrix assembled by quadrature over cells and faces (built once).
    pub fn assembled(&self) -> &CsrMatrix {
        self.assembled.get_or_init(|| assemble_by_quadrature(&self.space, self.a))
    }

    /// Adds the axis part of `A` to `y`; both vectors hold full tensor blocks.
    fn apply_axis(&self, axis: usize, x: &[f64], y: &mut [f64]) {
        let space = &self.space;
        let p = space.modes_per_axis();
        let bl = space.tensor_block_len();
        let op = &self.axes[axis];
        if space.dim() == 1 {
            for (row, cols) in op.rows.iter().enumerate() {
                for (col, blk) in cols {
                    let xs = &x[col * bl..(col + 1) * bl];
                    for m in 0..p {
                        y[row * bl + m] += (0..p).map(|l| blk[m * p + l] * xs[l]).sum::<f64>();
                    }
                }
            }
            return;
        }
        let nx = space.mesh().counts()[0];
        let ny = space.mesh().counts()[1];
        for iy in 0..ny {
            for ix in 0..nx {
                let row = ix + nx * iy;
                let cols = if axis == 0 { &op.rows[ix] } else { &op.rows[iy] };
                let yr = &mut y[row * bl..(row + 1) * bl];
                for (j, blk) in cols {
                    let col = if axis == 0 { j + nx * iy } else { ix + nx * j };
                    let xs = &x[col * bl..(col + 1) * bl];
                    for other in 0..p {
                        for m in 0..p {
                            let mut acc = 0.0;
                            for l in 0..p {
                                let idx = if axis == 0 { l + p * other } else { other + p * l };
                                acc += blk[m * p + l] * xs[idx];
                            }
                            let out = if axis == 0 { m + p * other } else { other + p * m };
                            yr[out] += acc;
                        }
                    }
                }
            }
        }
    }

    /// `y_v = A x_v` on a non-tensor space through the restricted blocks.
    fn apply_modes<const NV: usize>(&self, blocks: &[ModeBlocks; 2], x: [&[f64]; NV], y: [&mut [f64]; NV]) {
        match self.space.block_len() {
            3 => self.apply_modes_sized::<3, NV>(blocks, x, y),
            6 => self.apply_modes_sized::<6, NV>(blocks, x, y),
            10 => self.apply_modes_sized::<10, NV>(blocks, x, y),
            bl => unreachable!("no P^k space has {bl} local modes in two dimensions"),
        }
    }

    fn apply_modes_sized<const BL: usize, const NV: usize>(
        &self,
        blocks: &[ModeBlocks; 2],
        x: [&[f64]; NV],
        y: [&mut [f64]; NV],
    ) {
        let shift = -0.5 * self.a;
        let nx = self.space.mesh().counts()[0];
        let ny = self.space.mesh().counts()[1];
        let cell = |v: &[f64], c: usize| -> [f64; BL] { v[c * BL..(c + 1) * BL].try_into().unwrap() };
        for iy in 0..ny {
            for ix in 0..nx {
                let row = ix + nx * iy;
                let mut acc = [[0.0; BL]; NV];
                for v in 0..NV {
                    let xr = cell(x[v], row);
                    for m in 0..BL {
                        acc[v][m] = shift * xr[m];
                    }
                }
                for (axis, line) in [(0, ix), (1, iy)] {
                    let b = &blocks[axis];
                    for e in b.row_ptr[line]..b.row_ptr[line + 1] {
                        let j = b.cols[e];
                        let col = if axis == 0 { j + nx * iy } else { ix + nx * j };
                        let blk = &b.values[e * BL * BL..(e + 1) * BL * BL];
                        for v in 0..NV {
                            let xs = cell(x[v], col);
                            for m in 0..BL {
                                let mut s = 0.0;
                                for l in 0..BL {
                                    s += blk[m * BL + l] * xs[l];
                                }
                                acc[v][m] += s;
                            }
                        }
                    }
                }
                for v in 0..NV {
                    y[v][row * BL..(row + 1) * BL].copy_from_slice(&acc[v]);
                }
            }
        }
    }
}

impl LinearOperator for DgOperator {
    fn dim(&self) -> usize {
        self.space.n_dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if let Some(blocks) = &self.mode_blocks {
            return self.apply_modes(blocks, [x], [y]);
        }
        let shift = -0.5 * self.a;
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = shift * xi);
        for axis in 0..self.space.dim() {
            self.apply_axis(axis, x, y);
        }
    }

    fn apply_pair(&self, x: [&[f64]; 2], y: [&mut [f64]; 2]) {
        match &self.mode_blocks {
            Some(blocks) => self.apply_modes(blocks, x, y),
            None => {
                let [y0, y1] = y;
                self.apply(x[0], y0);
                self.apply(x[1], y1);
            }
        }
    }
}

/// `q = L_h u`, the coefficients of `q_h` with `(q_h, ψ) = A(u_h, ψ)`.
pub fn apply_lh(op: &DgOperator, u: &DgField) -> Result<DgField> {
    if !Arc::ptr_eq(u.space(), op.space()) {
        return Err(Error::SpaceMismatch);
    }
    DgField::from_coeffs(op.space(), op.apply_new(u.coeffs()))
}

/// Builds the operator `A` for a space.
pub fn assemble_a(space: &Arc<DgSpace>, a: f64) -> Result<DgOperator> {
    DgOperator::new(space, a)
}

/// `x ↦ x + τ L_h(L_h x)`, whose inverse is `B_h(τ)`.
#[derive(Clone, Copy, Debug)]
pub struct ShiftedBiharmonic<'a> {
    op: &'a DgOperator,
    tau: f64,
}

impl<'a> ShiftedBiharmonic<'a> {
    pub fn new(op: &'a DgOperator, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("shift τ = {tau} must be positive")));
        }
        Ok(Self { op, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

pub fn build_shifted_biharmonic(op: &DgOperator, tau: f64) -> Result<ShiftedBiharmonic<'_>> {
    ShiftedBiharmonic::new(op, tau)
}

impl LinearOperator for ShiftedBiharmonic<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ax = self.op.apply_new(x);
        self.op.apply(&ax, y);
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = xi + self.tau * *yi);
    }

    fn apply_pair(&self, x: [&[f64]; 2], y: [&mut [f64]; 2]) {
        let n = self.dim();
        let (mut a0, mut a1) = (vec![0.0; n], vec![0.0; n]);
        self.op.apply_pair(x, [&mut a0, &mut a1]);
        let [y0, y1] = y;
        self.op.apply_pair([&a0, &a1], [&mut *y0, &mut *y1]);
        for (yv, xv) in [(y0, x[0]), (y1, x[1])] {
            yv.iter_mut().zip(xv).for_each(|(yi, xi)| *yi = xi + self.tau * *yi);
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for row in 0..self.n {
            for i in self.row_ptr[row]..self.row_ptr[row + 1] {
                writeln!(out, "{} {} {:.17e}", row + 1, self.col_idx[i] + 1, self.values[i])?;
            }
        }
        Ok(())
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (row, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[row]..self.row_ptr[row + 1];
            *yi = self.col_idx[range.clone()].iter().zip(&self.values[range]).map(|(&c, v)| v * x[c]).sum();
        }
    }
}

fn assemble_by_quadrature(space: &Arc<DgSpace>, a: f64) -> CsrMatrix {
    let mesh = space.mesh();
    let dim = space.dim();
    let bl = space.block_len();
    let quad = space.quad();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); space.n_dofs()];

    for cell in 0..mesh.n_cells() {
        let jac = mesh.cell_measure(cell) / 2f64.powi(dim as i32);
        for q in 0..space.quad_points_per_cell() {
            let xi = space.quad_point(q);
            let w = space.quad_weight(q) * jac;
            let vals: Vec<f64> = (0..bl).map(|m| space.basis_value(cell, m, &xi[..dim])).collect();
            let grads: Vec<[f64; 2]> = (0..bl).map(|m| space.basis_gradient(cell, m, &xi[..dim])).collect();
            for m in 0..bl {
                for l in 0..bl {
                    let gg: f64 = (0..dim).map(|d| grads[m][d] * grads[l][d]).sum();
                    *rows[cell * bl + m].entry(cell * bl + l).or_default() += w * (gg - 0.5 * a * vals[m] * vals[l]);
                }
            }
        }
    }

    let faces = mesh.faces();
    for face in faces {
        let (lower, upper) = match face.cells {
            FaceCells::Interior { lower, upper } => (lower, upper),
            FaceCells::Boundary { cell, side: Side::Hi, partner: Some(partner) } => match faces[partner].cells {
                FaceCells::Boundary { cell: other, .. } => (cell, other),
                FaceCells::Interior { .. } => unreachable!("periodic partner is a boundary face"),
            },
            // Lo-side periodic faces are covered by their partner; Neumann faces add nothing.
            FaceCells::Boundary { .. } => continue,
        };
        let axis = face.axis;
        let (tnodes, tweights, jac): (Vec<f64>, Vec<f64>, f64) = if dim == 1 {
            (vec![0.0], vec![1.0], 1.0)
        } else {
            (quad.nodes.clone(), quad.weights.clone(), face.measure() / 2.0)
        };
        for (&t, &wt) in tnodes.iter().zip(&tweights) {
            let point = |xi_axis: f64| {
                let mut r = [0.0; 2];
                r[axis] = xi_axis;
                if dim == 2 {
                    r[1 - axis] = t;
                }
                r
            };
            let sides = [(lower, -1.0, point(1.0)), (upper, 1.0, point(-1.0))];
            let traces: Vec<(usize, f64, Vec<f64>, Vec<f64>)> = sides
                .iter()
                .map(|&(cell, s, r)| {
                    let v = (0..bl).map(|m| space.basis_value(cell, m, &r[..dim])).collect();
                    let d = (0..bl).map(|m| space.basis_gradient(cell, m, &r[..dim])[axis]).collect();
                    (cell, s, v, d)
                })
                .collect();
            let w = wt * jac;
            for (ca, sa, va, da) in &traces {
                for (cb, sb, vb, db) in &traces {
                    for m in 0..bl {
                        for l in 0..bl {
                            let e = 0.5 * db[l] * sa * va[m] + sb * vb[l] * 0.5 * da[m];
                            *rows[ca * bl + m].entry(cb * bl + l).or_default() += w * e;
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_rows(rows)
}
