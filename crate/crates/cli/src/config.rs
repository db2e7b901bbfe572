//! Resolved experiment configuration: defaults per subcommand, then an
//! optional JSON file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gradflow_core::{case_by_name, BasisKind, BcKind, IndefiniteSolver, KrylovConfig, Strategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "GRADFLOW_OUT";
pub const DEFAULT_OUT_ROOT: &str = "gradflow-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Spatial convergence sweep on a manufactured solution.
    AccuracySpace,
    /// Temporal convergence sweep for the first- and second-order schemes.
    AccuracyTime,
    /// Wall-clock time per strategy and mesh.
    Complexity,
    /// Free Swift-Hohenberg run with an energy trace and field snapshots.
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::AccuracySpace => "accuracy-space",
            Command::AccuracyTime => "accuracy-time",
            Command::Complexity => "complexity",
            Command::Run => "run",
        }
    }
}

/// Options shared by all subcommands. Every field is optional so that a JSON
/// file and the flags can be layered over the defaults.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Overrides {
    /// JSON file with any of the options below (flags win).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Manufactured case: spatial-periodic, spatial-neumann or temporal.
    #[arg(long)]
    pub case: Option<String>,
    /// Polynomial degree (1 to 3).
    #[arg(long)]
    pub k: Option<usize>,
    /// Cells per axis; a comma-separated list for sweeps.
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
    /// Time step; a comma-separated list for temporal sweeps.
    #[arg(long, value_delimiter = ',')]
    pub dt: Option<Vec<f64>>,
    /// Final time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    /// Scheme order(s), 1 or 2.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<u8>>,
    /// hybrid, augmented or reduced; a list for complexity runs.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<Strategy>>,
    /// SAV shift B (default |Ω|).
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<f64>,
    /// Seed of the random initial data for `run`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `$GRADFLOW_OUT/<subcommand>-<hash>`).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Relative tolerance of every Krylov solve.
    #[arg(long)]
    pub cg_tol: Option<f64>,
    /// Run independent sweep points concurrently.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub parallel: Option<bool>,
    /// pk (total degree) or qk (tensor product).
    #[arg(long)]
    pub basis: Option<BasisKind>,
    /// Solver for the augmented system: minres or cg.
    #[arg(long, value_parser = parse_indefinite)]
    pub solver: Option<IndefiniteSolver>,
    /// Timing repetitions per point; the fastest is kept.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Swift-Hohenberg ε for `run`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Swift-Hohenberg g for `run`.
    #[arg(long)]
    pub g: Option<f64>,
    /// Side length of the square domain `[0, L]²` for `run`.
    #[arg(long)]
    pub length: Option<f64>,
    /// periodic or neumann-free, for `run`.
    #[arg(long, value_parser = parse_bc)]
    pub bc: Option<BcKind>,
    /// Half-width of the uniform cellwise random initial data for `run`.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Steps between field snapshots for `run` (0 disables them).
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

fn parse_indefinite(s: &str) -> std::result::Result<IndefiniteSolver, String> {
    match s {
        "minres" => Ok(IndefiniteSolver::Minres),
        "cg" => Ok(IndefiniteSolver::Cg),
        _ => Err(format!("unknown solver '{s}' (expected minres or cg)")),
    }
}

fn parse_bc(s: &str) -> std::result::Result<BcKind, String> {
    match s {
        "periodic" => Ok(BcKind::Periodic),
        "neumann" | "neumann-free" => Ok(BcKind::NeumannFree),
        _ => Err(format!("unknown boundary condition '{s}' (expected periodic or neumann-free)")),
    }
}

impl Overrides {
    /// `self` with unset fields taken from `base`.
    fn or(self, base: Overrides) -> Overrides {
        Overrides {
            config: self.config.or(base.config),
            case: self.case.or(base.case),
            k: self.k.or(base.k),
            n: self.n.or(base.n),
            dt: self.dt.or(base.dt),
            t_final: self.t_final.or(base.t_final),
            order: self.order.or(base.order),
            strategy: self.strategy.or(base.strategy),
            b: self.b.or(base.b),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            cg_tol: self.cg_tol.or(base.cg_tol),
            parallel: self.parallel.or(base.parallel),
            basis: self.basis.or(base.basis),
            solver: self.solver.or(base.solver),
            repeats: self.repeats.or(base.repeats),
            epsilon: self.epsilon.or(base.epsilon),
            g: self.g.or(base.g),
            length: self.length.or(base.length),
            bc: self.bc.or(base.bc),
            amplitude: self.amplitude.or(base.amplitude),
            snapshot_every: self.snapshot_every.or(base.snapshot_every),
        }
    }
}

/// Parameters of the free run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FreeRun {
    pub epsilon: f64,
    pub g: f64,
    pub length: f64,
    pub bc: BcKind,
    pub amplitude: f64,
    pub snapshot_every: usize,
}

/// A fully resolved and validated configuration. Its JSON form is echoed to
/// `config.json` and hashed into the default output directory name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub command: Command,
    /// Manufactured case; `None` for the free run.
    pub case: Option<String>,
    pub k: usize,
    pub basis: BasisKind,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub dt: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub order: Vec<u8>,
    pub strategy: Vec<Strategy>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub seed: u64,
    pub cg_tol: f64,
    pub solver: IndefiniteSolver,
    pub parallel: bool,
    pub repeats: usize,
    pub free: Option<FreeRun>,
}

/// Step sizes of the reference spatial sweeps, per degree.
pub fn default_spatial_dt(k: usize) -> f64 {
    match k {
        1 => 1e-3,
        2 => 1e-4,
        _ => 1e-5,
    }
}

impl RunConfig {
    /// Layers `flags` over the JSON file named by `flags.config` (if any) and
    /// the defaults of `command`, then validates.
    pub fn resolve(command: Command, flags: Overrides) -> Result<(RunConfig, Option<PathBuf>)> {
        let file = match &flags.config {
            Some(path) => read_overrides(path)?,
            None => Overrides::default(),
        };
        let o = flags.or(file);
        let out = o.out.clone();
        let k = o.k.unwrap_or(match command {
            Command::AccuracyTime => 2,
            _ => 1,
        });
        let config = match command {
            Command::AccuracySpace => RunConfig {
                command,
                case: Some(o.case.unwrap_or_else(|| "spatial-periodic".into())),
                k,
                basis: o.basis.unwrap_or_default(),
                n: o.n.unwrap_or_else(|| vec![8, 16, 32, 64]),
                dt: o.dt.unwrap_or_else(|| vec![default_spatial_dt(k)]),
                t_final: o.t_final.unwrap_or(0.01),
                order: o.order.unwrap_or_else(|| vec![2]),
                strategy: o.strategy.unwrap_or_else(|| vec![Strategy::Hybrid]),
                b: o.b,
                seed: o.seed.unwrap_or(0),
                cg_tol: o.cg_tol.unwrap_or(KrylovConfig::default().rel_tolerance),
                solver: o.solver.unwrap_or_default(),
                parallel: o.parallel.unwrap_or(false),
                repeats: o.repeats.unwrap_or(1),
                free: None,
            },
            Command::AccuracyTime => RunConfig {
                command,
                case: Some(o.case.unwrap_or_else(|| "temporal".into())),
                k,
                basis: o.basis.unwrap_or_default(),
                n: o.n.unwrap_or_else(|| vec![64]),
                dt: o.dt.unwrap_or_else(|| (2..=5).map(|m| 0.5f64.powi(m)).collect()),
                t_final: o.t_final.unwrap_or(2.0),
                order: o.order.unwrap_or_else(|| vec![1, 2]),
                strategy: o.strategy.unwrap_or_else(|| vec![Strategy::Hybrid]),
                b: o.b,
                seed: o.seed.unwrap_or(0),
                cg_tol: o.cg_tol.unwrap_or(KrylovConfig::default().rel_tolerance),
                solver: o.solver.unwrap_or_default(),
                parallel: o.parallel.unwrap_or(false),
                repeats: o.repeats.unwrap_or(1),
                free: None,
            },
            Command::Complexity => RunConfig {
                command,
                case: Some(o.case.unwrap_or_else(|| "temporal".into())),
                k,
                basis: o.basis.unwrap_or_default(),
                n: o.n.unwrap_or_else(|| vec![8, 16, 32, 64]),
                dt: o.dt.unwrap_or_else(|| vec![1e-2]),
                t_final: o.t_final.unwrap_or(0.1),
                order: o.order.unwrap_or_else(|| vec![1]),
                strategy: o.strategy.unwrap_or_else(|| Strategy::ALL.to_vec()),
                b: o.b,
                seed: o.seed.unwrap_or(0),
                cg_tol: o.cg_tol.unwrap_or(KrylovConfig::default().rel_tolerance),
                solver: o.solver.unwrap_or_default(),
                parallel: o.parallel.unwrap_or(false),
                repeats: o.repeats.unwrap_or(1),
                free: None,
            },
            Command::Run => RunConfig {
                command,
                case: None,
                k,
                basis: o.basis.unwrap_or_default(),
                n: o.n.unwrap_or_else(|| vec![64]),
                dt: o.dt.unwrap_or_else(|| vec![1e-2]),
                t_final: o.t_final.unwrap_or(10.0),
                order: o.order.unwrap_or_else(|| vec![2]),
                strategy: o.strategy.unwrap_or_else(|| vec![Strategy::Hybrid]),
                b: o.b,
                seed: o.seed.unwrap_or(0),
                cg_tol: o.cg_tol.unwrap_or(KrylovConfig::default().rel_tolerance),
                solver: o.solver.unwrap_or_default(),
                parallel: o.parallel.unwrap_or(false),
                repeats: o.repeats.unwrap_or(1),
                free: Some(FreeRun {
                    epsilon: o.epsilon.unwrap_or(0.3),
                    g: o.g.unwrap_or(0.0),
                    length: o.length.unwrap_or(100.0),
                    bc: o.bc.unwrap_or(BcKind::Periodic),
                    amplitude: o.amplitude.unwrap_or(0.1),
                    snapshot_every: o.snapshot_every.unwrap_or(100),
                }),
            },
        };
        if command != Command::Run
            && (o.epsilon.is_some() || o.g.is_some() || o.length.is_some() || o.bc.is_some() || o.amplitude.is_some())
        {
            return Err(CliError::Config(format!(
                "model options (--epsilon, --g, --length, --bc, --amplitude) apply to `run` only; {} takes them from --case",
                command.name()
            )));
        }
        config.validate()?;
        Ok((config, out))
    }

    pub fn krylov(&self) -> KrylovConfig {
        KrylovConfig::default().with_rel_tolerance(self.cg_tol)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(1..=3).contains(&self.k) {
            return bad(format!("k = {} (supported: 1, 2, 3)", self.k));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad(format!("N = {:?} must be a non-empty list of positive counts", self.n));
        }
        if self.dt.is_empty() || self.dt.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad(format!("dt = {:?} must be a non-empty list of positive steps", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("T = {} must be positive", self.t_final));
        }
        if self.order.is_empty() || self.order.iter().any(|o| !(1..=2).contains(o)) {
            return bad(format!("order = {:?}; expected 1 and/or 2", self.order));
        }
        if self.strategy.is_empty() {
            return bad("at least one strategy is required".into());
        }
        for &s in &self.strategy {
            if s != Strategy::Hybrid && self.order.contains(&2) {
                return bad(format!("the {s} strategy exists only for the first-order scheme; pass --order 1"));
            }
        }
        if let Some(b) = self.b {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("B = {b} must be positive"));
            }
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg-tol = {} must lie in (0, 1)", self.cg_tol));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if let Some(name) = &self.case {
            case_by_name(name).map_err(|e| CliError::Config(e.to_string()))?;
        }
        let single = |what: &str, len: usize| {
            if len == 1 {
                Ok(())
            } else {
                Err(CliError::Config(format!("{} takes a single {what}", self.command.name())))
            }
        };
        match self.command {
            Command::AccuracySpace => {
                single("dt", self.dt.len())?;
                single("order", self.order.len())?;
                single("strategy", self.strategy.len())?;
                if self.n.windows(2).any(|w| w[1] != 2 * w[0]) {
                    return bad(format!("N = {:?} must double from entry to entry", self.n));
                }
            }
            Command::AccuracyTime => {
                single("N", self.n.len())?;
                single("strategy", self.strategy.len())?;
                if self.dt.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-12) {
                    return bad(format!("dt = {:?} must halve from entry to entry", self.dt));
                }
            }
            Command::Complexity => {
                single("dt", self.dt.len())?;
                if self.order != [1] {
                    return bad("complexity runs time the first-order scheme; pass --order 1".into());
                }
            }
            Command::Run => {
                single("N", self.n.len())?;
                single("dt", self.dt.len())?;
                single("order", self.order.len())?;
                single("strategy", self.strategy.len())?;
                let f = self.free.as_ref().expect("run always carries free-run parameters");
                if !(f.epsilon > 0.0 && f.epsilon.is_finite()) || !(f.g >= 0.0 && f.g.is_finite()) {
                    return bad(format!("Swift-Hohenberg needs ε > 0 and g ≥ 0, got ε = {}, g = {}", f.epsilon, f.g));
                }
                if !(f.length > 0.0 && f.length.is_finite()) {
                    return bad(format!("length = {} must be positive", f.length));
                }
                if !(f.amplitude >= 0.0 && f.amplitude.is_finite()) {
                    return bad(format!("amplitude = {} must be non-negative", f.amplitude));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes") + "\n"
    }

    /// First 12 hex digits of the SHA-256 of the JSON echo.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_json().as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `out` if given, else `<root>/<subcommand>-<digest>` with the root from
    /// `GRADFLOW_OUT` or `gradflow-out`.
    pub fn output_dir(&self, out: Option<&Path>) -> PathBuf {
        match out {
            Some(dir) => dir.to_path_buf(),
            None => {
                let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
                root.join(format!("{}-{}", self.command.name(), self.digest()))
            }
        }
    }
}

fn read_overrides(path: &Path) -> Result<Overrides> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
