//! Model definitions: the Swift-Hohenberg potential, manufactured solutions with
//! their sources, and seeded random initial data for free runs.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dg_space::{DgField, DgSpace};
use crate::error::{Error, Result};
use crate::mesh::{build_rect_mesh, BcKind, Interval, RectMesh};

/// A double-well type potential `Φ` with derivative `Φ'`.
pub trait Potential: fmt::Debug + Send + Sync {
    fn phi(&self, u: f64) -> f64;
    fn dphi(&self, u: f64) -> f64;

    /// `min Φ` when known in closed form.
    fn min_value(&self) -> Option<f64> {
        None
    }
}

/// `Φ(u) = -(ε/2)u² - (g/3)u³ + u⁴/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwiftHohenberg {
    pub epsilon: f64,
    pub g: f64,
}

impl SwiftHohenberg {
    /// The two critical points `u± = (g ± sqrt(g² + 4ε)) / 2` with `Φ'(u±) = 0`.
    pub fn minima(&self) -> (f64, f64) {
        let s = (self.g * self.g + 4.0 * self.epsilon).sqrt();
        ((self.g - s) / 2.0, (self.g + s) / 2.0)
    }

    /// `Φ(u±) = -(g u± (g² + 4ε) + ε(g² + 3ε)) / 12`.
    pub fn value_at_minimum(&self, u: f64) -> f64 {
        let (e, g) = (self.epsilon, self.g);
        -(g * u * (g * g + 4.0 * e) + e * (g * g + 3.0 * e)) / 12.0
    }
}

impl Potential for SwiftHohenberg {
    fn phi(&self, u: f64) -> f64 {
        let u2 = u * u;
        -0.5 * self.epsilon * u2 - self.g / 3.0 * u2 * u + 0.25 * u2 * u2
    }

    fn dphi(&self, u: f64) -> f64 {
        -self.epsilon * u - self.g * u * u + u * u * u
    }

    fn min_value(&self) -> Option<f64> {
        let (lo, hi) = self.minima();
        Some(self.phi(lo).min(self.phi(hi)))
    }
}

/// A function of space and time.
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Model parameters of `u_t = -(Δ + a/2)² u - Φ'(u) + f`.
#[derive(Clone)]
pub struct ModelSpec {
    pub a: f64,
    pub potential: Arc<dyn Potential>,
    /// The SAV shift `B`; `None` means `|Ω|`.
    pub b_const: Option<f64>,
    pub bc: BcKind,
    pub source: Option<SpaceTimeFn>,
    pub exact: Option<SpaceTimeFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("a", &self.a)
            .field("potential", &self.potential)
            .field("b_const", &self.b_const)
            .field("bc", &self.bc)
            .field("source", &self.source.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ModelSpec {
    /// The constant `B` for a domain of measure `measure`.
    pub fn b_value(&self, measure: f64) -> f64 {
        self.b_const.unwrap_or(measure)
    }

    /// Smallest `B` guaranteeing `∫Φ(v) + B > 0` for every `v`, when `min Φ` is known.
    pub fn sufficient_b(&self, measure: f64) -> Option<f64> {
        self.potential.min_value().map(|m| (-m).max(0.0) * measure)
    }

    pub fn with_source(mut self, source: Option<SpaceTimeFn>) -> Self {
        self.source = source;
        self
    }

    pub fn with_b(mut self, b: Option<f64>) -> Self {
        self.b_const = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::InvalidArgument(format!("a = {}", self.a)));
        }
        if let Some(b) = self.b_const {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::InvalidArgument(format!("B = {b} must be positive")));
            }
        }
        Ok(())
    }
}

/// The Swift-Hohenberg model, `a = 2`.
pub fn swift_hohenberg(epsilon: f64, g: f64, bc: BcKind) -> Result<ModelSpec> {
    if !(epsilon > 0.0) || !(g >= 0.0) || !epsilon.is_finite() || !g.is_finite() {
        return Err(Error::InvalidArgument(format!("Swift-Hohenberg needs ε > 0 and g ≥ 0, got ε = {epsilon}, g = {g}")));
    }
    Ok(ModelSpec {
        a: 2.0,
        potential: Arc::new(SwiftHohenberg { epsilon, g }),
        b_const: None,
        bc,
        source: None,
        exact: None,
    })
}

/// Manufactured Swift-Hohenberg problem with exact solution
/// `u = exp(-λt) sin(κx) sin(κy)`, `λ = (1 - 2κ²)²`, driven by the source `f = Φ'(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub name: String,
    pub domain: [Interval; 2],
    pub bc: BcKind,
    pub epsilon: f64,
    pub g: f64,
    pub wavenumber: f64,
    /// The SAV shift `B`; `None` means `|Ω|`.
    #[serde(default)]
    pub b_const: Option<f64>,
}

impl ManufacturedCase {
    pub fn with_b(mut self, b: f64) -> Self {
        self.b_const = Some(b);
        self
    }

    pub fn decay_rate(&self) -> f64 {
        let s = 1.0 - 2.0 * self.wavenumber * self.wavenumber;
        s * s
    }

    pub fn exact(&self, x: &[f64], t: f64) -> f64 {
        let k = self.wavenumber;
        (-self.decay_rate() * t).exp() * (k * x[0]).sin() * (k * x[1]).sin()
    }

    pub fn initial(&self, x: &[f64]) -> f64 {
        self.exact(x, 0.0)
    }

    pub fn potential(&self) -> SwiftHohenberg {
        SwiftHohenberg { epsilon: self.epsilon, g: self.g }
    }

    pub fn source(&self, x: &[f64], t: f64) -> f64 {
        self.potential().dphi(self.exact(x, t))
    }

    pub fn mesh(&self, n: usize) -> Result<RectMesh> {
        build_rect_mesh(&self.domain, &[n, n], self.bc)
    }

    /// Model with source and exact solution attached.
    pub fn model(&self) -> ModelSpec {
        let exact = self.clone();
        let source = self.clone();
        ModelSpec {
            a: 2.0,
            potential: Arc::new(self.potential()),
            b_const: self.b_const,
            bc: self.bc,
            source: Some(Arc::new(move |x, t| source.source(x, t))),
            exact: Some(Arc::new(move |x, t| exact.exact(x, t))),
        }
    }
}

/// `sin(x/2) sin(y/2)` decaying like `exp(-t/4)` on `[-2π, 2π]²`, periodic, `ε = 0.025`, `g = 0`.
pub fn spatial_periodic_case() -> ManufacturedCase {
    use std::f64::consts::PI;
    ManufacturedCase {
        name: "spatial-periodic".into(),
        domain: [Interval::new(-2.0 * PI, 2.0 * PI); 2],
        bc: BcKind::Periodic,
        epsilon: 0.025,
        g: 0.0,
        wavenumber: 0.5,
        b_const: None,
    }
}

/// The same solution on `[-π, 3π]²` with `∂_ν u = ∂_ν Δu = 0`, `ε = 0.025`, `g = 0.05`.
pub fn spatial_neumann_case() -> ManufacturedCase {
    use std::f64::consts::PI;
    ManufacturedCase {
        name: "spatial-neumann".into(),
        domain: [Interval::new(-PI, 3.0 * PI); 2],
        bc: BcKind::NeumannFree,
        epsilon: 0.025,
        g: 0.05,
        wavenumber: 0.5,
        b_const: None,
    }
}

/// `sin(x/4) sin(y/4)` decaying like `exp(-49t/64)` on `[-4π, 4π]²`, periodic, `ε = 0.025`, `g = 0`.
pub fn temporal_case() -> ManufacturedCase {
    use std::f64::consts::PI;
    ManufacturedCase {
        name: "temporal".into(),
        domain: [Interval::new(-4.0 * PI, 4.0 * PI); 2],
        bc: BcKind::Periodic,
        epsilon: 0.025,
        g: 0.0,
        wavenumber: 0.25,
        b_const: None,
    }
}

pub const CASE_NAMES: [&str; 3] = ["spatial-periodic", "spatial-neumann", "temporal"];

pub fn case_by_name(name: &str) -> Result<ManufacturedCase> {
    match name {
        "spatial-periodic" => Ok(spatial_periodic_case()),
        "spatial-neumann" => Ok(spatial_neumann_case()),
        "temporal" => Ok(temporal_case()),
        other => Err(Error::InvalidArgument(format!(
            "unknown case {other:?}; expected one of {}",
            CASE_NAMES.join(", ")
        ))),
    }
}

/// Cellwise-constant field with values drawn uniformly from `[-amplitude, amplitude]`.
pub fn random_cell_field(space: &Arc<DgSpace>, amplitude: f64, seed: u64) -> DgField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = DgField::zeros(space);
    let bl = space.block_len();
    for cell in 0..space.mesh().n_cells() {
        let value: f64 = rng.gen_range(-amplitude..=amplitude);
        // the constant mode of an orthonormal basis is 1/sqrt|K|
        field.coeffs_mut()[cell * bl] = value * space.mesh().cell_measure(cell).sqrt();
    }
    field
}
