//! Subcommand implementations. Each writes its artifacts into one output
//! directory next to a `config.json` echo.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gradflow_core::diagnostics::{write_energy_header, write_energy_row, write_errors_csv, write_timing_csv};
use gradflow_core::{
    attach_eoc, build_rect_mesh, case_by_name, energies, random_cell_field, run_accuracy, run_complexity_suite,
    step_count, swift_hohenberg, AccuracyRun, ComplexityOutcome, ComplexitySuite, DgField, DgOperator, DgSpace,
    EnergyRow, EocMode, ErrorRecord, Integrator, Interval, ManufacturedCase, SavState, StepPlan,
};
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::error::Result;

/// Where an invocation wrote its outputs.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Creates the output directory, echoes the configuration and dispatches.
pub fn execute(config: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let dir = config.output_dir(out);
    fs::create_dir_all(&dir)?;
    let echo = dir.join("config.json");
    fs::write(&echo, config.to_json())?;
    let mut files = vec![echo];
    match config.command {
        Command::AccuracySpace => {
            let records = cmd_accuracy_space(config)?;
            files.push(write_csv(&dir, "errors.csv", |w| write_errors_csv(w, &records))?);
        }
        Command::AccuracyTime => {
            for (order, records) in cmd_accuracy_time(config)? {
                let name = format!("errors_order{order}.csv");
                files.push(write_csv(&dir, &name, |w| write_errors_csv(w, &records))?);
            }
        }
        Command::Complexity => {
            let outcome = cmd_complexity(config)?;
            for f in &outcome.failures {
                eprintln!("warning: {} at N={} failed: {}", f.strategy, f.n, f.message);
            }
            files.push(write_csv(&dir, "timing.csv", |w| write_timing_csv(w, &outcome.records))?);
        }
        Command::Run => {
            let summary = cmd_run(config, &dir)?;
            files.extend(summary.files);
        }
    }
    Ok(Outcome { dir, files })
}

fn write_csv(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn manufactured(config: &RunConfig) -> Result<ManufacturedCase> {
    let name = config.case.as_deref().unwrap_or("spatial-periodic");
    Ok(case_by_name(name)?)
}

fn accuracy_runs(config: &RunConfig, order: u8) -> Vec<AccuracyRun> {
    let mut runs = Vec::new();
    for &n in &config.n {
        for &dt in &config.dt {
            runs.push(AccuracyRun {
                k: config.k,
                n,
                dt,
                t_final: config.t_final,
                order,
                strategy: config.strategy[0],
                krylov: config.krylov(),
                basis: config.basis,
            });
        }
    }
    runs
}

fn sweep(config: &RunConfig, case: &ManufacturedCase, runs: &[AccuracyRun], mode: EocMode) -> Result<Vec<ErrorRecord>> {
    let with_b = |run: &AccuracyRun| -> gradflow_core::Result<ErrorRecord> {
        match config.b {
            None => run_accuracy(case, run),
            Some(b) => run_accuracy(&case.clone().with_b(b), run),
        }
    };
    let results: Vec<gradflow_core::Result<ErrorRecord>> = if config.parallel {
        runs.par_iter().map(with_b).collect()
    } else {
        runs.iter().map(with_b).collect()
    };
    let mut records = results.into_iter().collect::<gradflow_core::Result<Vec<_>>>()?;
    attach_eoc(&mut records, mode)?;
    Ok(records)
}

pub fn cmd_accuracy_space(config: &RunConfig) -> Result<Vec<ErrorRecord>> {
    let case = manufactured(config)?;
    sweep(config, &case, &accuracy_runs(config, config.order[0]), EocMode::Spatial)
}

/// Error tables per scheme order.
pub fn cmd_accuracy_time(config: &RunConfig) -> Result<Vec<(u8, Vec<ErrorRecord>)>> {
    let case = manufactured(config)?;
    config
        .order
        .iter()
        .map(|&order| Ok((order, sweep(config, &case, &accuracy_runs(config, order), EocMode::Temporal)?)))
        .collect()
}

/// Timing runs stay sequential whatever `parallel` says.
pub fn cmd_complexity(config: &RunConfig) -> Result<ComplexityOutcome> {
    let mut case = manufactured(config)?;
    if let Some(b) = config.b {
        case = case.with_b(b);
    }
    let suite = ComplexitySuite {
        strategies: config.strategy.clone(),
        n_list: config.n.clone(),
        k: config.k,
        dt: config.dt[0],
        t_final: config.t_final,
        krylov: config.krylov(),
        repeats: config.repeats,
        basis: config.basis,
    };
    Ok(run_complexity_suite(&case, &suite)?)
}

/// What a free run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub rows: Vec<EnergyRow>,
    pub files: Vec<PathBuf>,
}

/// Free run from seeded cellwise-random data. The energy trace is flushed
/// row by row, so a failing step leaves the rows written so far.
pub fn cmd_run(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let free = config.free.as_ref().expect("validated run configuration");
    let n = config.n[0];
    let mesh = build_rect_mesh(&[Interval::new(0.0, free.length); 2], &[n, n], free.bc)?;
    let space = DgSpace::with_basis(mesh, config.k, config.basis)?;
    let model = swift_hohenberg(free.epsilon, free.g, free.bc)?.with_b(config.b);
    let op = DgOperator::new(&space, model.a)?;
    let u0 = random_cell_field(&space, free.amplitude, config.seed);
    let state = SavState::initial(u0, &op, &model, 0.0)?;
    let plan = StepPlan::new(config.order[0], config.strategy[0], config.dt[0])?.with_krylov(config.krylov());
    let plan = StepPlan { indefinite_solver: config.solver, ..plan };
    let steps = step_count(config.t_final, config.dt[0])?;

    let energy_path = dir.join("energy.csv");
    let mut energy = BufWriter::new(File::create(&energy_path)?);
    write_energy_header(&mut energy)?;
    let e0 = energies(&state, &model);
    let first = EnergyRow { n: 0, t: 0.0, original: e0.original, modified: e0.modified, r: state.r, identity_residual: 0.0 };
    write_energy_row(&mut energy, &first)?;
    let mut rows = vec![first];
    let mut files = vec![energy_path];
    let snapshots = dir.join("snapshots");
    if free.snapshot_every > 0 {
        fs::create_dir_all(&snapshots)?;
        files.push(write_snapshot(&snapshots, 0, &state.u)?);
    }

    let mut integrator = Integrator::new(&op, &model, plan, state)?;
    for step in 1..=steps {
        let report = match integrator.step() {
            Ok(report) => report,
            Err(e) => {
                energy.flush()?;
                return Err(e.into());
            }
        };
        let row = EnergyRow::after_step(step, integrator.state(), &report);
        write_energy_row(&mut energy, &row)?;
        energy.flush()?;
        rows.push(row);
        if free.snapshot_every > 0 && step % free.snapshot_every == 0 {
            files.push(write_snapshot(&snapshots, step, &integrator.state().u)?);
        }
    }
    Ok(RunSummary { steps, rows, files })
}

/// Point cloud `x,y,u` at the quadrature points of every cell.
fn write_snapshot(dir: &Path, step: usize, u: &DgField) -> Result<PathBuf> {
    let space = u.space();
    let values = space.values_at_quadrature(u.coeffs());
    let coords = space.quadrature_coordinates();
    write_csv(dir, &format!("u_{step:06}.csv"), |w| {
        writeln!(w, "x,y,u")?;
        for (x, v) in coords.iter().zip(&values) {
            writeln!(w, "{:.6e},{:.6e},{:.6e}", x[0], x[1], v)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    #[test]
    fn single_n_sweep_has_no_eoc() {
        let flags = Overrides { n: Some(vec![4]), t_final: Some(0.002), ..Default::default() };
        let (config, _) = RunConfig::resolve(Command::AccuracySpace, flags).unwrap();
        let records = cmd_accuracy_space(&config).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].eoc_l2.is_none() && records[0].eoc_linf.is_none());
    }
}
