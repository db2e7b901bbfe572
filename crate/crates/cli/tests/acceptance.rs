//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! A FAIL is reported but does not fail the process unless
//! `GRADFLOW_ACCEPTANCE_STRICT=1` is set.

use std::fs;
use std::path::Path;
use std::time::Instant;

use gradflow_cli::{cmd_accuracy_space, cmd_accuracy_time, cmd_complexity, execute, Command, Overrides, RunConfig};
use gradflow_core::steppers::step_second_hybrid;
use gradflow_core::{
    apply_bh, build_rect_mesh, dense_solve, project_l2, random_cell_field, spatial_periodic_case,
    swift_hohenberg, BcKind, DenseMatrix, DgField, DgOperator, DgSpace, ErrorRecord, History, Integrator, Interval,
    KrylovConfig, ModelSpec, SavState, StepPlan, Strategy, TimingRecord,
};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 spatial EOC, periodic", spatial_periodic),
        ("2 spatial EOC, Neumann", spatial_neumann),
        ("3 temporal EOC", temporal),
        ("4 energy identities", energy_identities),
        ("5 B_h bounds and dense inverse", bh_lemma),
        ("6 strategy equivalence", strategy_equivalence),
        ("7 complexity", complexity),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{name}] ({secs:.1} s)\n     {}", verdict.detail.replace('\n', "\n     "));
        failed += usize::from(!verdict.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("GRADFLOW_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn resolve(command: Command, flags: Overrides) -> RunConfig {
    RunConfig::resolve(command, flags).expect("valid configuration").0
}

fn within_factor(value: f64, reference: f64, factor: f64) -> bool {
    value >= reference / factor && value <= reference * factor
}

/// Finest EOC within 0.15 of `k+1` in both norms and the N=64 L² error within
/// a factor 2 of the table, for k = 1, 2, 3. k = 3 runs to T = 0.002 and is
/// compared against the T = 0.01 entry; its error is dominated by the spatial
/// part, which hardly changes over that interval.
fn spatial(case: &str, table: [f64; 3]) -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, reference) in (1..=3).zip(table) {
        let flags = Overrides {
            case: Some(case.into()),
            k: Some(k),
            t_final: (k == 3).then_some(0.002),
            ..Default::default()
        };
        let records = cmd_accuracy_space(&resolve(Command::AccuracySpace, flags)).expect("accuracy sweep");
        let last = records.last().expect("N = 64 record");
        let target = (k + 1) as f64;
        let (eoc_l2, eoc_linf) = (last.eoc_l2.unwrap_or(f64::NAN), last.eoc_linf.unwrap_or(f64::NAN));
        let ok = (eoc_l2 - target).abs() <= 0.15
            && (eoc_linf - target).abs() <= 0.15
            && last.n == 64
            && within_factor(last.l2, reference, 2.0);
        pass &= ok;
        lines.push(format!(
            "k={k} T={}: L2(N=64) {:.5e} (table {reference:.5e}), EOC L2 {eoc_l2:.3}, Linf {eoc_linf:.3} (target {target}) {}",
            last.t_final,
            last.l2,
            if ok { "ok" } else { "out of tolerance" }
        ));
    }
    Verdict::new(pass, lines.join("\n"))
}

fn spatial_periodic() -> Verdict {
    spatial("spatial-periodic", [5.04416e-3, 2.56761e-4, 5.01113e-6])
}

fn spatial_neumann() -> Verdict {
    spatial("spatial-neumann", [5.04416e-3, 2.56762e-4, 5.05657e-6])
}

fn temporal() -> Verdict {
    let tables = cmd_accuracy_time(&resolve(Command::AccuracyTime, Overrides::default())).expect("temporal sweep");
    let mut pass = true;
    let mut lines = Vec::new();
    for (order, records) in &tables {
        let (target, slack) = if *order == 1 { (1.0, 0.2) } else { (2.0, 0.3) };
        let orders: Vec<f64> = records.iter().filter_map(|r| r.eoc_l2).collect();
        let mut ok = orders.len() == 3 && orders.iter().all(|o| (o - target).abs() <= slack);
        let errors: Vec<String> = records.iter().map(|r| format!("{:.5e}", r.l2)).collect();
        let mut line = format!(
            "order {order}: L2 {} orders {}",
            errors.join(", "),
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")
        );
        if *order == 2 {
            let last: &ErrorRecord = records.last().expect("records");
            let close = (last.dt - 0.03125).abs() < 1e-15 && within_factor(last.l2, 3.98404e-4, 2.0);
            ok &= close;
            line.push_str(&format!("; L2 at dt=2^-5 {:.5e} (table 3.98404e-04)", last.l2));
        }
        pass &= ok;
        lines.push(line);
    }
    pass &= tables.len() == 2;
    Verdict::new(pass, lines.join("\n"))
}

fn random_sh_setup(n: usize, length: f64, epsilon: f64, seed: u64) -> (DgOperator, ModelSpec, DgField) {
    let mesh = build_rect_mesh(&[Interval::new(0.0, length); 2], &[n, n], BcKind::Periodic).unwrap();
    let space = DgSpace::new(mesh, 1).unwrap();
    let model = swift_hohenberg(epsilon, 0.0, BcKind::Periodic).unwrap();
    let op = DgOperator::new(&space, model.a).unwrap();
    let u0 = random_cell_field(&space, 0.1, seed);
    (op, model, u0)
}

/// Source-free Swift-Hohenberg with random data: the discrete energy law holds
/// step by step and the modified energy never increases (up to a 1e-10
/// relative round-off allowance).
fn energy_identities() -> Verdict {
    let (op, model, u0) = random_sh_setup(16, 32.0, 0.3, 42);
    let mut pass = true;
    let mut lines = Vec::new();
    for order in [1u8, 2] {
        for dt in [1e-3, 0.1, 1.0, 10.0] {
            let state = SavState::initial(u0.clone(), &op, &model, 0.0).unwrap();
            let plan = StepPlan::new(order, Strategy::Hybrid, dt).unwrap();
            let mut integrator = Integrator::new(&op, &model, plan, state).unwrap();
            let (mut worst, mut increases, mut steps) = (0.0f64, 0, 0);
            let outcome = integrator.run(40, |_, report| {
                let before = report.energy_before.modified;
                let scale = before.max(1.0);
                worst = worst.max(report.identity_residual.abs() / scale);
                if report.energy_after.modified > before + 1e-10 * scale {
                    increases += 1;
                }
                steps += 1;
            });
            let ok = outcome.is_ok() && worst <= 1e-7 && increases == 0;
            pass &= ok;
            lines.push(format!(
                "order {order} dt={dt:e}: {steps} steps, max residual/max(E,1) {worst:.2e}, increases {increases}{}",
                outcome.err().map(|e| format!(", error: {e}")).unwrap_or_default()
            ));
        }
    }
    Verdict::new(pass, lines.join("\n"))
}

fn bh_lemma() -> Verdict {
    let case = spatial_periodic_case();
    let space = DgSpace::new(case.mesh(8).unwrap(), 2).unwrap();
    let op = DgOperator::new(&space, 2.0).unwrap();
    let krylov = KrylovConfig::default();
    let (mut norm_ratio, mut min_inner) = (0.0f64, f64::INFINITY);
    for tau in [1e-3, 1e-2, 1e-1] {
        for seed in 0..100 {
            let f = random_cell_field(&space, 1.0, 1000 + seed);
            let (v, _, _) = apply_bh(&op, tau, &f, &krylov).unwrap();
            let ff = f.norm_l2();
            norm_ratio = norm_ratio.max(v.norm_l2() / ff);
            min_inner = min_inner.min(gradflow_core::l2_inner(&f, &v).unwrap() / (ff * ff));
        }
    }
    let bounds = norm_ratio <= 1.0 + 1e-9 && min_inner >= -1e-10;

    // dense oracle on 4x4, k = 1
    let small = DgSpace::new(case.mesh(4).unwrap(), 1).unwrap();
    let op4 = DgOperator::new(&small, 2.0).unwrap();
    let a = DenseMatrix::from_operator(op4.assembled()).unwrap();
    let n = a.order();
    let tight = KrylovConfig::default().with_rel_tolerance(1e-14);
    let mut dense_err = 0.0f64;
    for tau in [1e-3, 1e-2, 1e-1] {
        let m = DenseMatrix::from_fn(n, |i, j| {
            let s: f64 = (0..n).map(|l| a.get(i, l) * a.get(l, j)).sum();
            f64::from(u8::from(i == j)) + tau * s
        })
        .unwrap();
        for seed in 0..10 {
            let f = random_cell_field(&small, 1.0, 2000 + seed);
            let (v, _, _) = apply_bh(&op4, tau, &f, &tight).unwrap();
            let reference = dense_solve(&m, f.coeffs()).unwrap();
            let err = v.coeffs().iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            dense_err = dense_err.max(err);
        }
    }
    let pass = bounds && dense_err <= 1e-9;
    Verdict::new(
        pass,
        format!(
            "300 samples: max ‖B_h f‖/‖f‖ = {norm_ratio:.12}, min (f,B_h f)/‖f‖² = {min_inner:.3e}\n\
             4x4 k=1 dense inverse: max deviation {dense_err:.2e}"
        ),
    )
}

/// First-order trajectories of the three strategies over 10 steps, and the
/// second-order `r^{n+1/2}` against a fixed-point solve of the coupled
/// midpoint system.
fn strategy_equivalence() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    let case = spatial_periodic_case();
    for n in [8, 16] {
        let space = DgSpace::new(case.mesh(n).unwrap(), 1).unwrap();
        let manufactured = case.model();
        let op = DgOperator::new(&space, manufactured.a).unwrap();
        let smooth = project_l2(&space, |x| case.initial(x));
        let (sh_op, sh_model, noisy) = random_sh_setup(n, 32.0, 0.3, 7);
        for (label, op, model, u0, dt) in
            [("manufactured", &op, &manufactured, &smooth, 1e-2), ("random SH", &sh_op, &sh_model, &noisy, 0.1)]
        {
            let trajectories: Vec<Vec<DgField>> = [Strategy::Hybrid, Strategy::Augmented, Strategy::Reduced]
                .into_iter()
                .map(|strategy| {
                    let state = SavState::initial(u0.clone(), op, model, 0.0).unwrap();
                    let plan = StepPlan::new(1, strategy, dt).unwrap();
                    let mut integrator = Integrator::new(op, model, plan, state).unwrap();
                    let mut fields = Vec::new();
                    integrator.run(10, |s, _| fields.push(s.u.clone())).unwrap();
                    fields
                })
                .collect();
            let mut worst = 0.0f64;
            for step in 0..10 {
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    let d = trajectories[i][step].add_scaled(-1.0, &trajectories[j][step]).unwrap().norm_l2();
                    worst = worst.max(d);
                }
            }
            let ok = worst <= 1e-6;
            pass &= ok;
            lines.push(format!("{n}x{n} {label}: max L2 discrepancy {worst:.2e}"));
        }
    }

    let (op, model, u0) = random_sh_setup(8, 32.0, 0.3, 9);
    let tight = KrylovConfig::default().with_rel_tolerance(1e-14);
    let dt = 0.1;
    let plan = StepPlan::new(2, Strategy::Hybrid, dt).unwrap().with_krylov(tight);
    let mut state = SavState::initial(u0, &op, &model, 0.0).unwrap();
    let mut history = History::start(&state);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let u_star = state.u.scaled(1.5).add_scaled(-0.5, &history.previous_u).unwrap();
        let b = gradflow_core::b_of(&u_star, &model).unwrap().projected;
        let r_fixed = fixed_point_half_r(&op, &state, &b, 0.5 * dt, &tight);
        let (next, hist, _) = step_second_hybrid(&state, &history, &plan, &model, &op).unwrap();
        let r_half = 0.5 * (next.r + state.r);
        worst = worst.max((r_half - r_fixed).abs());
        state = next;
        history = hist;
    }
    let ok = worst <= 1e-8;
    pass &= ok;
    lines.push(format!("second order r^(n+1/2) vs fixed point over 5 steps: max deviation {worst:.2e}"));
    Verdict::new(pass, lines.join("\n"))
}

/// Solves `u = B_h(τ)(uⁿ - τ r Πb)`, `r = rⁿ + ½(Πb, u - uⁿ)` by iterating on `r`.
fn fixed_point_half_r(op: &DgOperator, state: &SavState, b: &[f64], tau: f64, krylov: &KrylovConfig) -> f64 {
    let space = state.u.space();
    let u_n = state.u.coeffs();
    let b_dot_un: f64 = b.iter().zip(u_n).map(|(x, y)| x * y).sum();
    let mut r = state.r;
    for _ in 0..200 {
        let rhs: Vec<f64> = u_n.iter().zip(b).map(|(u, bi)| u - tau * r * bi).collect();
        let f = DgField::from_coeffs(space, rhs).unwrap();
        let (u, _, _) = apply_bh(op, tau, &f, krylov).unwrap();
        let b_dot_u: f64 = b.iter().zip(u.coeffs()).map(|(x, y)| x * y).sum();
        let next = state.r + 0.5 * (b_dot_u - b_dot_un);
        let done = (next - r).abs() <= 1e-15 * next.abs().max(1.0);
        r = next;
        if done {
            break;
        }
    }
    r
}

fn order_of(records: &[TimingRecord], strategy: Strategy, n: usize) -> Option<f64> {
    records.iter().find(|r| r.strategy == strategy && r.n == n).and_then(|r| r.order)
}

fn seconds_of(records: &[TimingRecord], strategy: Strategy, n: usize) -> Option<f64> {
    records.iter().find(|r| r.strategy == strategy && r.n == n).map(|r| r.seconds)
}

/// Orders on the N = 16 → 32 pair, since the dense N = 64 reduced run exceeds
/// the dense size limit, and the Hybrid < Augmented ranking at N = 32 and 64.
fn complexity() -> Verdict {
    let sparse = Overrides {
        strategy: Some(vec![Strategy::Augmented, Strategy::Hybrid]),
        repeats: Some(5),
        ..Default::default()
    };
    let sparse = cmd_complexity(&resolve(Command::Complexity, sparse)).expect("complexity suite");
    let dense = Overrides {
        n: Some(vec![8, 16, 32]),
        strategy: Some(vec![Strategy::Reduced]),
        ..Default::default()
    };
    let dense = cmd_complexity(&resolve(Command::Complexity, dense)).expect("complexity suite");
    let records: Vec<TimingRecord> = dense.records.into_iter().chain(sparse.records).collect();

    let mut pass = true;
    let mut lines = Vec::new();
    let reduced = order_of(&records, Strategy::Reduced, 32).unwrap_or(f64::NAN);
    let ok = reduced >= 1.4;
    pass &= ok;
    lines.push(format!("reduced order 16->32: {reduced:.3} (>= 1.4)"));
    for strategy in [Strategy::Augmented, Strategy::Hybrid] {
        let o32 = order_of(&records, strategy, 32).unwrap_or(f64::NAN);
        let o64 = order_of(&records, strategy, 64).unwrap_or(f64::NAN);
        let ok = (0.7..=1.3).contains(&o32);
        pass &= ok;
        lines.push(format!("{} order 16->32: {o32:.3} (in [0.7, 1.3]); 32->64: {o64:.3}", strategy.name()));
    }
    for n in [32, 64] {
        let hybrid = seconds_of(&records, Strategy::Hybrid, n).unwrap_or(f64::NAN);
        let augmented = seconds_of(&records, Strategy::Augmented, n).unwrap_or(f64::NAN);
        let ok = hybrid < augmented;
        pass &= ok;
        lines.push(format!("N={n}: hybrid {hybrid:.4e} s vs augmented {augmented:.4e} s (hybrid must be faster)"));
    }
    Verdict::new(pass, lines.join("\n"))
}

/// Every CSV of a directory tree, relative path and content, sorted by path.
fn csv_files(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read_to_string(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Timing rows keep only `strategy,N,unknowns`; seconds and orders are wall-clock.
fn without_timings(name: &str, content: &str) -> String {
    if name != "timing.csv" {
        return content.to_string();
    }
    content.lines().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join("\n")
}

fn determinism() -> Verdict {
    let configs = [
        (Command::AccuracySpace, Overrides { n: Some(vec![4, 8]), t_final: Some(0.005), ..Default::default() }),
        (
            Command::AccuracyTime,
            Overrides { n: Some(vec![8]), k: Some(1), dt: Some(vec![0.5, 0.25]), t_final: Some(1.0), ..Default::default() },
        ),
        (Command::Complexity, Overrides { n: Some(vec![4, 8]), ..Default::default() }),
        (
            Command::Run,
            Overrides {
                n: Some(vec![16]),
                t_final: Some(1.0),
                dt: Some(vec![0.05]),
                seed: Some(3),
                snapshot_every: Some(5),
                length: Some(32.0),
                ..Default::default()
            },
        ),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (command, flags) in configs {
        let config = resolve(command, flags);
        let [a, b] = [0, 1].map(|_| tempfile::tempdir().unwrap());
        let out_a = execute(&config, Some(a.path())).unwrap();
        let out_b = execute(&config, Some(b.path())).unwrap();
        let (fa, fb) = (csv_files(&out_a.dir), csv_files(&out_b.dir));
        let same = fa.len() == fb.len()
            && !fa.is_empty()
            && fa.iter().zip(&fb).all(|((na, ca), (nb, cb))| na == nb && without_timings(na, ca) == without_timings(nb, cb));
        pass &= same;
        lines.push(format!(
            "{}: {} CSV files {}",
            command.name(),
            fa.len(),
            if same { "byte-identical" } else { "differ" }
        ));
    }
    Verdict::new(pass, lines.join("\n"))
}
