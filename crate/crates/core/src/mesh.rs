//! Uniform tensor-product meshes on boxes in one and two dimensions.
//!
//! Cells are numbered with the x index running fastest. Every face carries the
//! normal `+e_axis`, oriented from the lower-index cell to the upper one, so a
//! jump across a face is always `upper - lower`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous boundary condition kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    Periodic,
    /// `∂_ν u = ∂_ν Δu = 0` on the boundary.
    NeumannFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lo,
    Hi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// Cells adjacent to a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceCells {
    Interior { lower: usize, upper: usize },
    /// `partner` is the index of the opposite boundary face under periodic
    /// identification.
    Boundary { cell: usize, side: Side, partner: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Axis of the normal.
    pub axis: usize,
    /// Coordinate of the face along `axis`.
    pub position: f64,
    /// Extent along the tangential axis (2D only).
    pub tangent: Option<Interval>,
    pub cells: FaceCells,
}

impl Face {
    pub fn kind(&self) -> FaceKind {
        match self.cells {
            FaceCells::Interior { .. } => FaceKind::Interior,
            FaceCells::Boundary { .. } => FaceKind::Boundary,
        }
    }

    pub fn measure(&self) -> f64 {
        self.tangent.map_or(1.0, |t| t.length())
    }
}

#[derive(Clone, Debug)]
pub struct RectMesh {
    dim: usize,
    domain: Vec<Interval>,
    counts: Vec<usize>,
    cell_sizes: Vec<Vec<f64>>,
    faces: Vec<Face>,
    bc: BcKind,
}

/// Builds a uniform mesh with `counts[d]` cells along axis `d`.
pub fn build_rect_mesh(domain: &[Interval], counts: &[usize], bc: BcKind) -> Result<RectMesh> {
    RectMesh::new(domain, counts, bc)
}

impl RectMesh {
    pub fn new(domain: &[Interval], counts: &[usize], bc: BcKind) -> Result<Self> {
        let dim = domain.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMesh(format!("dimension {dim} not supported")));
        }
        if counts.len() != dim {
            return Err(Error::InvalidMesh(format!(
                "{} cell counts given for a {dim}D domain",
                counts.len()
            )));
        }
        for (d, (iv, &n)) in domain.iter().zip(counts).enumerate() {
            if n == 0 {
                return Err(Error::InvalidMesh(format!("zero cells along axis {d}")));
            }
            if !(iv.hi > iv.lo) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "degenerate interval [{}, {}] on axis {d}",
                    iv.lo, iv.hi
                )));
            }
        }
        let cell_sizes = domain
            .iter()
            .zip(counts)
            .map(|(iv, &n)| vec![iv.length() / n as f64; n])
            .collect();
        let mut mesh = Self {
            dim,
            domain: domain.to_vec(),
            counts: counts.to_vec(),
            cell_sizes,
            faces: Vec::new(),
            bc,
        };
        mesh.faces = mesh.enumerate_faces();
        Ok(mesh)
    }

    fn enumerate_faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for axis in 0..self.dim {
            let n = self.counts[axis];
            let other = 1 - axis.min(1);
            let lines = if self.dim == 2 { self.counts[other] } else { 1 };
            for line in 0..lines {
                let tangent = (self.dim == 2).then(|| {
                    let h = self.cell_sizes[other][line];
                    let lo = self.domain[other].lo + line as f64 * h;
                    Interval::new(lo, lo + h)
                });
                let cell_at = |i: usize| {
                    let mut idx = [0usize; 2];
                    idx[axis] = i;
                    if self.dim == 2 {
                        idx[other] = line;
                    }
                    self.cell_index(&idx[..self.dim])
                };
                let lo_face = faces.len();
                for i in 0..=n {
                    let position = self.node_coordinate(axis, i);
                    let cells = if i == 0 {
                        FaceCells::Boundary { cell: cell_at(0), side: Side::Lo, partner: None }
                    } else if i == n {
                        FaceCells::Boundary { cell: cell_at(n - 1), side: Side::Hi, partner: None }
                    } else {
                        FaceCells::Interior { lower: cell_at(i - 1), upper: cell_at(i) }
                    };
                    faces.push(Face { axis, position, tangent, cells });
                }
                if self.bc == BcKind::Periodic {
                    let hi_face = lo_face + n;
                    if let FaceCells::Boundary { partner, .. } = &mut faces[lo_face].cells {
                        *partner = Some(hi_face);
                    }
                    if let FaceCells::Boundary { partner, .. } = &mut faces[hi_face].cells {
                        *partner = Some(lo_face);
                    }
                }
            }
        }
        faces
    }

    fn node_coordinate(&self, axis: usize, i: usize) -> f64 {
        if i == self.counts[axis] {
            self.domain[axis].hi
        } else {
            self.domain[axis].lo + self.cell_sizes[axis][..i].iter().sum::<f64>()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[Interval] {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bc(&self) -> BcKind {
        self.bc
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    /// Size of cell `i` along `axis` (cell index along that axis).
    pub fn cell_size(&self, axis: usize, i: usize) -> f64 {
        self.cell_sizes[axis][i]
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] + self.counts[0] * multi[1],
        }
    }

    pub fn cell_multi_index(&self, cell: usize) -> [usize; 2] {
        match self.dim {
            1 => [cell, 0],
            _ => [cell % self.counts[0], cell / self.counts[0]],
        }
    }

    /// Per-axis extent of `cell`.
    pub fn cell_bounds(&self, cell: usize) -> [Interval; 2] {
        let idx = self.cell_multi_index(cell);
        let mut out = [Interval::new(0.0, 1.0); 2];
        for d in 0..self.dim {
            let lo = self.node_coordinate(d, idx[d]);
            out[d] = Interval::new(lo, lo + self.cell_sizes[d][idx[d]]);
        }
        out
    }

    pub fn cell_measure(&self, cell: usize) -> f64 {
        let idx = self.cell_multi_index(cell);
        (0..self.dim).map(|d| self.cell_sizes[d][idx[d]]).product()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.domain.iter().map(Interval::length).product()
    }

    /// Largest cell diameter along any axis.
    pub fn max_cell_size(&self) -> f64 {
        self.cell_sizes.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces.iter().enumerate().filter(|(_, f)| f.kind() == FaceKind::Interior)
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces.iter().enumerate().filter(|(_, f)| f.kind() == FaceKind::Boundary)
    }

    /// Periodic partner of a boundary face.
    pub fn partner(&self, face: usize) -> Option<usize> {
        match self.faces.get(face)?.cells {
            FaceCells::Boundary { partner, .. } => partner,
            FaceCells::Interior { .. } => None,
        }
    }

    /// Total number of face slots of the grid, `Σ_d (N_d + 1) Π_{e≠d} N_e`.
    pub fn grid_face_count(&self) -> usize {
        (0..self.dim)
            .map(|d| {
                (0..self.dim)
                    .map(|e| if e == d { self.counts[e] + 1 } else { self.counts[e] })
                    .product::<usize>()
            })
            .sum()
    }

    /// Maps a reference point in `[-1, 1]^dim` of `cell` to physical coordinates.
    pub fn map_to_physical(&self, cell: usize, reference: &[f64]) -> [f64; 2] {
        let bounds = self.cell_bounds(cell);
        let mut x = [0.0; 2];
        for d in 0..self.dim {
            let b = bounds[d];
            x[d] = 0.5 * (b.lo + b.hi) + 0.5 * b.length() * reference[d];
        }
        x
    }
}
