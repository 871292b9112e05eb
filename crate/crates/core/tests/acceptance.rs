//! Acceptance suite for the controller. Runs every criterion in sequence so
//! the wall-clock limits are measured without contention, prints one line
//! per criterion and exits nonzero when any of them fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ackc::controller::{
    adaptation_qp, build_blocks, linearize_task, lyapunov_row_index, task_qp, TaskErrorKind,
};
use ackc::kinematics::{fkm, ParameterVector};
use ackc::measurement::{extract, linearize, MeasureSpace};
use ackc::qp::{build_least_squares_qp, solve, QpProblem, QpStatus};
use ackc::scenario::{load_scenario, Scenario};
use ackc::selftest::{check_jacobians, lemma1_test, qp_selftest};
use ackc::simulator::{simulate, SimulationOutcome};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str) -> (Scenario, SimulationOutcome) {
    let s = scenario(name);
    let out = simulate(&s, None, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    (s, out)
}

fn fault_note(out: &SimulationOutcome) -> String {
    match &out.fault {
        Some((k, e)) => format!(", fault at step {k}: {e}"),
        None => String::new(),
    }
}

fn max_projector_residual(out: &SimulationOutcome) -> f64 {
    out.diagnostics.iter().map(|d| d.projector_residual).fold(0.0, f64::max)
}

fn jacobians() -> Verdict {
    let start = Instant::now();
    let r = check_jacobians(0, 100);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.passed() && secs < 10.0,
        format!("{} states, max relative error {:.2e}, {secs:.2} s", r.states, r.max()),
    )
}

fn qp_oracle() -> Verdict {
    let start = Instant::now();
    let r = qp_selftest(0, 1000);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.passed() && secs < 30.0,
        format!(
            "{} problems, max |u - u_oracle| {:.2e}, max KKT {:.2e}, {} non-optimal, {secs:.2} s",
            r.problems, r.max_error, r.max_kkt, r.non_optimal
        ),
    )
}

fn pm1_lyapunov(out: &SimulationOutcome, secs: f64) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut compared = 0;
    for w in out.diagnostics.windows(2) {
        if w[0].setpoint != w[1].setpoint || w[0].warmup != w[1].warmup {
            continue;
        }
        compared += 1;
        worst = worst.max(w[1].v - w[0].v);
    }
    let worst_row = out
        .diagnostics
        .iter()
        .zip(&out.rows)
        .filter(|(_, r)| r.qp_adapt_status == "optimal")
        .map(|(d, _)| d.lyapunov_term)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        out.fault.is_none() && compared >= 2000 && worst <= 1e-7 && worst_row <= 1e-9 && secs < 60.0,
        format!(
            "{compared} step pairs, largest V increase {worst:.2e}, largest Lyapunov row value {worst_row:.2e}, {secs:.2} s{}",
            fault_note(out)
        ),
    )
}

fn pm1_convergence(out: &SimulationOutcome) -> Verdict {
    let last = out.rows.last().expect("nonempty run");
    verdict(
        out.fault.is_none() && last.err_y < 1e-4 && last.err_x_real < 1e-3,
        format!(
            "final |y_tilde| {:.2e}, real pose error {:.2e}, estimated pose error {:.2e}{}",
            last.err_y,
            last.err_x_real,
            last.err_x_est,
            fault_note(out)
        ),
    )
}

fn partial_measurements() -> Verdict {
    let (_, rot) = run("pm2.toml");
    let (_, tra) = run("pm3.toml");
    let r = rot.rows.last().expect("nonempty run");
    let t = tra.rows.last().expect("nonempty run");
    let residual = max_projector_residual(&rot);
    verdict(
        rot.fault.is_none()
            && tra.fault.is_none()
            && r.err_r_real < 1e-3
            && residual <= 1e-9
            && t.err_t_real < 1e-3
            && t.err_d_real < 1e-3,
        format!(
            "rotation-only: real rotation error {:.2e}, max |N u_a| {residual:.2e}; translation-only: real translation error {:.2e}, distance error {:.2e}{}{}",
            r.err_r_real,
            t.err_t_real,
            t.err_d_real,
            fault_note(&rot),
            fault_note(&tra)
        ),
    )
}

fn distance_only() -> Verdict {
    let (_, out) = run("pm4.toml");
    let last = out.rows.last().expect("nonempty run");
    let residual = max_projector_residual(&out);
    verdict(
        out.fault.is_none() && last.err_y < 1e-4 && residual <= 1e-9,
        format!(
            "final |y_tilde| {:.2e}, max |N u_a| {residual:.2e}{}",
            last.err_y,
            fault_note(&out)
        ),
    )
}

fn collision_avoidance() -> Verdict {
    let (s, out) = run("ca.toml");
    let max_h = out.diagnostics.iter().map(|d| d.max_h_estimated).fold(f64::NEG_INFINITY, f64::max);
    let min_real = out.diagnostics.iter().map(|d| d.min_clearance_real).fold(f64::INFINITY, f64::min);
    let rows = s.obstacles.row_count();
    let warmup = out.diagnostics.iter().filter(|d| d.warmup).count();
    verdict(
        out.fault.is_none() && rows == 36 && max_h <= 1e-6 && min_real >= -s.noise.envelope,
        format!(
            "{rows} VFI rows, {} steps ({warmup} adaptation-only), max estimated h {max_h:.2e}, min real clearance {:.2} mm (envelope {:.2} mm){}",
            out.rows.len(),
            min_real * 1e3,
            s.noise.envelope * 1e3,
            fault_note(&out)
        ),
    )
}

fn lemma() -> Verdict {
    let start = Instant::now();
    let r = lemma1_test(0, 10_000);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.passed() && secs < 5.0,
        format!("{} trials, {} violations, worst margin {:.2e}, {secs:.3} s", r.trials, r.violations, r.worst_margin),
    )
}

fn pad_columns(m: &DMatrix<f64>, left: usize, right: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), left + m.ncols() + right);
    out.view_mut((0, left), m.shape()).copy_from(m);
    out
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// Cascaded and extended solutions on feasible CA states where both QPs have
/// active inequalities. Returns the worst difference and the state count.
fn equivalent_problems() -> Verdict {
    let s = scenario("ca.toml");
    let gains = &s.config.gains;
    let (n, p) = (s.model.dof(), s.model.parameter_count());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spaces = [MeasureSpace::Pose, MeasureSpace::Rotation, MeasureSpace::Translation, MeasureSpace::Distance];
    let mut worst = 0.0f64;
    let mut states = 0;
    let mut tries = 0;
    let mut failures = 0;
    while states < 50 && tries < 20_000 {
        tries += 1;
        let q = s.q0.map(|v| v + rng.random_range(-0.4..0.4));
        let a = ParameterVector(DVector::from_fn(p, |k, _| rng.random_range(s.bounds.min[k]..=s.bounds.max[k])));
        let a_true = ParameterVector(DVector::from_fn(p, |k, _| rng.random_range(s.bounds.min[k]..=s.bounds.max[k])));
        let in_limits = (0..n).all(|i| q[i] > s.model.q_min[i] && q[i] < s.model.q_max[i]);
        if !in_limits {
            continue;
        }
        let Ok(blocks) = build_blocks(&s.model, &q, &a, &s.bounds, &s.obstacles, gains) else {
            continue;
        };
        if blocks.vfi.max_h() > 0.0 {
            continue;
        }
        let x_d = fkm(&s.model, &q.map(|v| v + rng.random_range(-0.5..0.5)), &a).expect("state dimensions");
        let lin = linearize_task(&s.model, &q, &a, &x_d, TaskErrorKind::Multiplicative).expect("state dimensions");
        let space = spaces[states % spaces.len()];
        let truth = fkm(&s.model, &q, &a_true).expect("state dimensions");
        let meas = linearize(&lin.kin, &extract(space, &truth).expect("measurable")).expect("matching kinds");

        let task = task_qp(&lin, &blocks, gains).expect("well formed");
        let adapt = adaptation_qp(&lin, &meas, &blocks, gains).expect("well formed");
        let (Ok(u_q), Ok(u_a)) = (solve(&task, &s.config.solver), solve(&adapt, &s.config.solver)) else {
            failures += 1;
            continue;
        };
        if u_q.status != QpStatus::Optimal || u_a.status != QpStatus::Optimal {
            continue;
        }
        let lyap = lyapunov_row_index(&blocks);
        if u_q.active_set.is_empty() || u_a.active_set.iter().all(|&i| i == lyap) {
            continue;
        }

        let lambda = block_diag(&gains.lambda_q, &gains.lambda_a);
        let ext_task = build_least_squares_qp(&hstack(&lin.g_q, &lin.g_a), gains.eta_q, &lin.x_breve, &lambda)
            .expect("well formed")
            .with_inequalities(pad_columns(&task.a_in, 0, p), task.b_in.clone())
            .with_equalities(pad_columns(&DMatrix::identity(p, p), n, 0), DVector::zeros(p));
        let eq = block_diag(&DMatrix::identity(n, n), &adapt.a_eq);
        let ext_adapt = build_least_squares_qp(
            &hstack(&meas.jacobian_q, &meas.jacobian_a),
            gains.eta_a,
            &meas.error.0,
            &lambda,
        )
        .expect("well formed")
        .with_inequalities(pad_columns(&adapt.a_in, n, 0), adapt.b_in.clone())
        .with_equalities(eq.clone(), DVector::zeros(eq.nrows()));

        let solve_ext = |problem: &QpProblem| solve(problem, &s.config.solver).ok().filter(|r| r.status == QpStatus::Optimal);
        let (Some(v_task), Some(v_adapt)) = (solve_ext(&ext_task), solve_ext(&ext_adapt)) else {
            failures += 1;
            continue;
        };
        let mut expect_task = DVector::zeros(n + p);
        expect_task.rows_mut(0, n).copy_from(&u_q.u);
        let mut expect_adapt = DVector::zeros(n + p);
        expect_adapt.rows_mut(n, p).copy_from(&u_a.u);
        worst = worst.max((v_task.u - expect_task).amax()).max((v_adapt.u - expect_adapt).amax());
        states += 1;
    }
    verdict(
        states == 50 && failures == 0 && worst <= 1e-7,
        format!("{states} constrained states ({tries} drawn, {failures} solver failures), max difference {worst:.2e}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |k: usize, name: &'static str, v: Verdict| {
        println!("criterion {k} {}: {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((k, name, v));
    };
    report(1, "Jacobians against central differences", jacobians());
    report(2, "QP solver against projected-gradient oracle", qp_oracle());
    let start = Instant::now();
    let (_, pm1_out) = run("pm1.toml");
    let pm1_secs = start.elapsed().as_secs_f64();
    report(3, "Lyapunov monotonicity on PM1", pm1_lyapunov(&pm1_out, pm1_secs));
    report(4, "PM1 convergence", pm1_convergence(&pm1_out));
    report(5, "PM2 rotation-only and PM3 translation-only", partial_measurements());
    report(6, "PM4 distance-only", distance_only());
    report(7, "CA constraint invariance", collision_avoidance());
    report(8, "radial step toward the sphere", lemma());
    report(9, "extended problems against cascaded solutions", equivalent_problems());
    let failed = results.iter().filter(|r| !r.2.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
