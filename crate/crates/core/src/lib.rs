//! Penalty-free mixed discontinuous Galerkin discretization and scalar auxiliary
//! variable (SAV) time stepping for fourth-order gradient flows of the form
//!
//! ```text
//! u_t = -(Δ + a/2)² u - Φ'(u) + f
//! ```
//!
//! on rectangles with periodic or homogeneous Neumann-type boundary conditions.
//! The Swift-Hohenberg equation is the main instance.
//!
//! ```
//! use gradflow_core::{
//!     build_rect_mesh, project_l2, spatial_periodic_case, DgOperator, DgSpace, Integrator, SavState,
//!     StepPlan, Strategy,
//! };
//!
//! let case = spatial_periodic_case();
//! let space = DgSpace::new(case.mesh(8)?, 1)?;
//! let model = case.model();
//! let op = DgOperator::new(&space, model.a)?;
//! let u0 = project_l2(&space, |x| case.initial(x));
//! let state = SavState::initial(u0, &op, &model, 0.0)?;
//! let plan = StepPlan::new(1, Strategy::Hybrid, 1e-3)?;
//! let mut integrator = Integrator::new(&op, &model, plan, state)?;
//! integrator.run(10, |_, report| assert!(report.identity_residual.abs() < 1e-7))?;
//! # let _ = build_rect_mesh;
//! # Ok::<(), gradflow_core::Error>(())
//! ```

pub mod dg_space;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod sav;
pub mod steppers;
pub mod weak_forms;

pub use dg_space::{eval_at, l2_inner, project_l2, BasisKind, DgField, DgSpace, QuadRule};
pub use diagnostics::{
    attach_eoc, compute_errors, eoc, run_accuracy, run_complexity_suite, AccuracyRun, ComplexityOutcome,
    ComplexitySuite, EnergyRow, EocMode, ErrorRecord, TimingRecord,
};
pub use error::{Error, Result};
pub use linalg::{cg_solve, dense_solve, minres_solve, DenseMatrix, KrylovConfig, LinearOperator, SolveReport};
pub use mesh::{build_rect_mesh, BcKind, Interval, RectMesh};
pub use problems::{
    case_by_name, random_cell_field, spatial_neumann_case, spatial_periodic_case, swift_hohenberg, temporal_case,
    ManufacturedCase, ModelSpec, Potential, SwiftHohenberg,
};
pub use sav::{apply_bh, b_of, energies, init_r, EnergyPair, SavState};
pub use steppers::{step_count, History, IndefiniteSolver, Integrator, StepPlan, StepReport, Strategy};
pub use weak_forms::{apply_lh, assemble_a, DgOperator, ShiftedBiharmonic};
