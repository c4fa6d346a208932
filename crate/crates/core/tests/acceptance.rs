//! Acceptance criteria 1-10. Each test writes one PASS/FAIL line to stderr
//! (uncaptured) and then asserts.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use eigenmpc::dynamics::{energy, linearize, DoublePendulum, MechanicalSystem, State};
use eigenmpc::harness::{hausdorff_distance, preset, run, RunOptions, RunOutcome, Scenario};
use eigenmpc::integrate::{flow, InputProfile};
use eigenmpc::linalg::{Cholesky, Matrix};
use eigenmpc::modes::{find_eigenmode, fit_chart, linear_modes, Mode, ModeChart, ModeFamily, ModeSearchConfig};
use eigenmpc::nmpc::{
    build_nlp, solve_box_qp, sqp_solve, Bound, Controller, CostSpec, CostWeights, NlpSolution, NmpcConfig,
};

const G: f64 = 9.81;

fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("{} criterion {n}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn pendulum() -> DoublePendulum<f64> {
    DoublePendulum::default()
}

fn run_preset(name: &str) -> Vec<RunOutcome> {
    preset(name).unwrap().iter().map(|s| run(s, &RunOptions::default()).unwrap()).collect()
}

fn fig4() -> &'static RunOutcome {
    static CELL: OnceLock<RunOutcome> = OnceLock::new();
    CELL.get_or_init(|| run_preset("fig4_straight").remove(0))
}

fn fig5() -> &'static RunOutcome {
    static CELL: OnceLock<RunOutcome> = OnceLock::new();
    CELL.get_or_init(|| run_preset("fig5_curved").remove(0))
}

fn settle_str(t: Option<f64>) -> String {
    t.map_or("never".into(), |t| format!("{t:.2} s"))
}

/// (family, energy) pairs of the mode-finding criterion.
const MODE_CASES: [(ModeFamily, f64); 5] = [
    (ModeFamily::InPhase, 2.0),
    (ModeFamily::InPhase, 14.0),
    (ModeFamily::InPhase, 16.0),
    (ModeFamily::AntiPhase, 2.0),
    (ModeFamily::AntiPhase, 12.0),
];

fn found_modes() -> &'static (Vec<Mode<f64>>, f64) {
    static CELL: OnceLock<(Vec<Mode<f64>>, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = pendulum();
        let lin = linear_modes(&linearize(&p)).unwrap();
        let start = Instant::now();
        let modes = MODE_CASES
            .iter()
            .map(|&(f, e)| find_eigenmode(&p, f, &lin[f.index()], e, &ModeSearchConfig::default()).unwrap())
            .collect();
        (modes, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_01_linear_modes() {
    let p = pendulum();
    let lin = linearize(&p);
    let mut best = f64::INFINITY;
    let mut modes = Vec::new();
    for _ in 0..20 {
        let t = Instant::now();
        modes = linear_modes(&lin).unwrap();
        best = best.min(t.elapsed().as_secs_f64());
    }
    let s2 = 2f64.sqrt();
    let r_in = modes[0].c[1] / modes[0].c[0];
    let r_anti = modes[1].c[1] / modes[1].c[0];
    let w_in = modes[0].omega.powi(2);
    let w_anti = modes[1].omega.powi(2);
    let errs = [
        (r_in - (s2 - 1.0)).abs(),
        (r_anti - (-1.0 - s2)).abs(),
        (w_in - G * (2.0 - s2)).abs(),
        (w_anti - G * (2.0 + s2)).abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let ok = worst < 1e-9 && best < 1e-3;
    verdict(1, ok, &format!("max error vs analytic {worst:.2e}, runtime {:.1} us", best * 1e6));
    assert!(ok);
}

#[test]
fn criterion_02_mode_finding() {
    let (modes, secs) = found_modes();
    let mut worst = [0.0f64; 4];
    for m in modes {
        let (r0, rh) = m.rest_velocities();
        let mid = (m.orbit.len() - 1) / 2;
        let first: Vec<Vec<f64>> = m.orbit.states[..=mid].iter().map(|s| s.x.clone()).collect();
        let back: Vec<Vec<f64>> = m.orbit.states[mid..].iter().rev().map(|s| s.x.clone()).collect();
        let vals = [m.closure_error(), r0.max(rh), m.orbit.energy_drift(), hausdorff_distance(&first, &back).unwrap()];
        for (w, v) in worst.iter_mut().zip(vals) {
            *w = w.max(v);
        }
    }
    let ok = worst[0] < 1e-6 && worst[1] < 1e-8 && worst[2] < 1e-6 && worst[3] < 1e-4 && *secs < 30.0;
    verdict(
        2,
        ok,
        &format!(
            "closure {:.1e}, rest speed {:.1e} rad/s, energy spread {:.1e} J, line shape {:.1e} rad, {secs:.1} s for 5 modes",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_integrator() {
    let p = pendulum();
    let (modes, _) = found_modes();
    let zero = InputProfile::zero(2);
    let drift = modes
        .iter()
        .map(|m| flow(&p, &State::at_rest(m.q0.clone()), &zero, 1e-3, 10.0).unwrap().energy_drift())
        .fold(0.0, f64::max);
    let s0 = State::at_rest(modes[1].q0.clone());
    let end = |dt: f64| flow(&p, &s0, &zero, dt, 1.0).unwrap().last_state().unwrap().to_flat();
    let reference = end(1e-5);
    let err = |dt: f64| end(dt).iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let (e4, e2, e1) = (err(4e-3), err(2e-3), err(1e-3));
    let order = ((e4 / e2).log2() + (e2 / e1).log2()) / 2.0;
    let ok = drift < 1e-6 && order >= 3.7;
    verdict(3, ok, &format!("max 10 s energy drift {drift:.1e} J, observed RK4 order {order:.2}"));
    assert!(ok);
}

#[test]
fn criterion_04_straight_convergence() {
    let m = &fig4().report.metrics;
    let settle_ok = m.settling_time_s.is_some_and(|t| t <= 20.0);
    let ok = settle_ok && m.bound_violations == 0 && m.final_torque_rms_nm < 0.05;
    verdict(
        4,
        ok,
        &format!(
            "settling {} (need <= 20 s), bound violations {}, final torque RMS {:.4} N m (need < 0.05), final energy {:.3} J, mean solve {:.1} ms",
            settle_str(m.settling_time_s),
            m.bound_violations,
            m.final_torque_rms_nm,
            m.final_energy_j,
            fig4().report.mean_solve_time_ms
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_curved_convergence() {
    let c = &fig5().report.metrics;
    let s = &fig4().report.metrics;
    let settle_ok = c.settling_time_s.is_some_and(|t| t <= 20.0);
    let ok = settle_ok && c.bound_violations == 0 && c.final_torque_rms_nm < 0.05 && c.final_torque_rms_nm < s.final_torque_rms_nm;
    verdict(
        5,
        ok,
        &format!(
            "settling {} (need <= 20 s), violations {}, RMS {:.4} N m vs straight {:.4}, chart fit {:.1e} rad, mean solve {:.1} ms",
            settle_str(c.settling_time_s),
            c.bound_violations,
            c.final_torque_rms_nm,
            s.final_torque_rms_nm,
            fig5().report.chart_fit_residual.unwrap_or(f64::NAN),
            fig5().report.mean_solve_time_ms
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_mode_similarity() {
    let runs = run_preset("fig3_modes");
    let parts: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "{} {}",
                r.report.scenario,
                r.report.metrics.hausdorff_to_mode_rad.map_or("n/a".into(), |h| format!("{h:.4}"))
            )
        })
        .collect();
    let ok = runs.iter().all(|r| r.report.metrics.hausdorff_to_mode_rad.is_some_and(|h| h < 0.1))
        && runs.iter().all(|r| r.report.metrics.bound_violations == 0);
    verdict(6, ok, &format!("Hausdorff to matched-energy mode (need < 0.1 rad): {}", parts.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_07_alpha_sweep() {
    let scenarios = preset("fig2_alpha_sweep").unwrap();
    let mut values = Vec::new();
    for s in &scenarios {
        // The alpha = 0.1 member is the fig4 scenario under another name.
        let same_as_fig4 = Scenario { name: fig4().report.scenario.clone(), ..s.clone() } == preset("fig4_straight").unwrap()[0];
        let m = if same_as_fig4 {
            fig4().report.metrics.clone()
        } else {
            run(s, &RunOptions::default()).unwrap().report.metrics
        };
        values.push((s.alpha, m.max_perp_dist_rad, m.bound_violations));
    }
    let monotone = values.windows(2).all(|w| w[1].1 >= w[0].1);
    let ok = monotone && values[0].1 < 0.02 && values.iter().all(|v| v.2 == 0);
    let list: Vec<String> = values.iter().map(|(a, d, _)| format!("alpha {a}: {d:.4}")).collect();
    verdict(7, ok, &format!("straightness {} (non-decreasing: {monotone}, alpha 0 < 0.02 rad)", list.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_08_large_initial_condition() {
    let runs = run_preset("fig6_large_ic");
    let curved = runs.iter().find(|r| r.report.scenario.ends_with("curved")).unwrap();
    let straight = runs.iter().find(|r| r.report.scenario.ends_with("straight")).unwrap();
    let tc = curved.report.metrics.settling_time_s;
    let ts = straight.report.metrics.settling_time_s;
    let ok = tc.is_some_and(|t| t <= 40.0)
        && ts.is_some_and(|t| t <= 40.0)
        && tc.zip(ts).is_some_and(|(c, s)| c <= s)
        && runs.iter().all(|r| r.report.metrics.bound_violations == 0);
    verdict(
        8,
        ok,
        &format!(
            "curved settles {}, straight settles {} (final energy {:.2} J)",
            settle_str(tc),
            settle_str(ts),
            straight.report.metrics.final_energy_j
        ),
    );
    assert!(ok);
}

/// State on the chart at energy `e` with positive chart velocity.
fn on_chart_state(p: &DoublePendulum<f64>, chart: &ModeChart<f64>, x_m: f64, e: f64) -> State<f64> {
    let x = chart.position(x_m);
    let dir = chart.velocity(x_m, 1.0);
    let m = p.mass_matrix(&x);
    let kin_unit = 0.5 * dir.iter().zip(m.mul_vec(&dir)).map(|(a, b)| a * b).sum::<f64>();
    let speed = ((e - p.potential(&x)) / kin_unit).sqrt();
    State::new(x, chart.velocity(x_m, speed)).unwrap()
}

#[test]
fn criterion_09_invariance() {
    let p = pendulum();
    let lin = linear_modes(&linearize(&p)).unwrap();
    let mode = find_eigenmode(&p, ModeFamily::InPhase, &lin[0], 14.0, &ModeSearchConfig::default()).unwrap();
    let probe = |degree: usize| {
        let chart = fit_chart(&mode, degree).unwrap();
        let s = on_chart_state(&p, &chart, 0.3 * chart.x_m_range.1, 14.0);
        let spec = CostSpec::curved(chart.clone(), 14.0, CostWeights::curved_default()).unwrap();
        let mut ctl = Controller::new(spec, NmpcConfig::standard(2, 1.0), 2).unwrap();
        let (u, _) = ctl.mpc_step(&p, 0.0, &s).unwrap();
        let sol = ctl.last_solution().unwrap();
        let sum_sq: f64 = sol.controls.iter().flat_map(|u| u.tau.iter()).map(|v| v * v).sum();
        let es: Vec<f64> = sol.states.iter().map(|s| energy(&p, s)).collect();
        let spread = es.iter().cloned().fold(f64::MIN, f64::max) - es.iter().cloned().fold(f64::MAX, f64::min);
        let norm = (u.tau[0].powi(2) + u.tau[1].powi(2)).sqrt();
        (norm, sum_sq, spread, chart.fit_residual)
    };
    // The residual force is set by how well the polynomial follows the
    // orbit, so the property is checked on a chart whose fit error is
    // negligible; the degree-9 control chart is reported alongside.
    let (u25, sq25, spread25, fit25) = probe(25);
    let (u9, _, _, fit9) = probe(9);
    let ok = u25 < 1e-4 && sq25 < 1e-6 && spread25 < 1e-2;
    verdict(
        9,
        ok,
        &format!(
            "degree 25 (fit {fit25:.1e} rad): |u0| {u25:.1e} N m, sum |u_k|^2 {sq25:.1e}, energy spread {spread25:.1e} J; degree 9 (fit {fit9:.1e} rad): |u0| {u9:.1e} N m"
        ),
    );
    assert!(ok);
}

/// `M0 ÿ + K y = τ` with exact derivative hooks.
struct LinearPlant {
    m0: Matrix<f64>,
    k: Matrix<f64>,
}

impl MechanicalSystem<f64> for LinearPlant {
    fn dof(&self) -> usize {
        2
    }
    fn equilibrium(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn mass_matrix(&self, _x: &[f64]) -> Matrix<f64> {
        self.m0.clone()
    }
    fn potential(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(self.k.mul_vec(x)).map(|(a, b)| a * b).sum::<f64>()
    }
    fn gravity_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.k.mul_vec(x)
    }
    fn mass_matrix_partial(&self, _x: &[f64], _k: usize) -> Matrix<f64> {
        Matrix::zeros(2, 2)
    }
    fn mass_matrix_second_partial(&self, _x: &[f64], _k: usize, _l: usize) -> Matrix<f64> {
        Matrix::zeros(2, 2)
    }
    fn potential_hessian(&self, _x: &[f64]) -> Matrix<f64> {
        self.k.clone()
    }
}

#[test]
fn criterion_10_solver_units() {
    // Box QP: ½uᵀu − 2u₁ over [−1, 1]².
    let qp = solve_box_qp(&Matrix::identity(2), &[-2.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], None).unwrap();
    let qp_ok = qp.x == vec![1.0, 0.0] && qp.active == vec![Bound::Upper, Bound::Free];

    // Condensed gradient against central differences, N = 10.
    let p = pendulum();
    let lin = linear_modes(&linearize(&p)).unwrap();
    let spec = CostSpec::straight(lin[0].c.clone(), vec![0.0, 0.0], 0.1, 0.1, 14.0, CostWeights::straight_default()).unwrap();
    let cfg = NmpcConfig { horizon: 10, ..NmpcConfig::standard(2, 1.0) };
    let nlp = build_nlp(&p, &spec, &cfg, State::new(vec![0.4, -0.2], vec![0.3, 0.8]).unwrap()).unwrap();
    let u: Vec<f64> = (0..20).map(|i| 0.9 * ((i as f64) * 1.7).sin()).collect();
    let cond = nlp.condense(&u).unwrap();
    let gmax = cond.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut grad_err = 0.0f64;
    for i in 0..u.len() {
        let (mut up, mut um) = (u.clone(), u.clone());
        up[i] += 1e-6;
        um[i] -= 1e-6;
        let fd = (nlp.objective(&up).unwrap() - nlp.objective(&um).unwrap()) / 2e-6;
        grad_err = grad_err.max((fd - cond.gradient[i]).abs() / gmax);
    }

    // LQ instance: linearized model, linear residuals, inactive bounds.
    let l = linearize(&p);
    let plant = LinearPlant { m0: l.m0, k: l.k };
    let weights = CostWeights { w_e: 0.0, ..CostWeights::straight_default() };
    let lq_spec = CostSpec::straight(lin[0].c.clone(), vec![0.0, 0.0], 0.0, 0.1, 1.0, weights).unwrap();
    let lq_cfg = NmpcConfig { horizon: 40, tau_min: vec![-100.0; 2], tau_max: vec![100.0; 2], ..NmpcConfig::standard(2, 1.0) };
    let lq = build_nlp(&plant, &lq_spec, &lq_cfg, State::new(vec![0.2, -0.1], vec![0.5, 0.3]).unwrap()).unwrap();
    let sol = sqp_solve(&lq, &NlpSolution::zeros(40, 2)).unwrap();
    let c0 = lq.condense(&vec![0.0; 80]).unwrap();
    let exact: Vec<f64> = Cholesky::new(&c0.hessian).unwrap().solve(&c0.gradient).iter().map(|v| -v).collect();
    let lq_err = sol.flat_controls().iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let lq_ok = sol.converged && sol.iterations == 1 && lq_err < 1e-8;

    let ok = qp_ok && grad_err < 1e-4 && lq_ok;
    verdict(
        10,
        ok,
        &format!(
            "box-QP clamp exact: {qp_ok}; gradient rel. error {grad_err:.1e}; LQ: {} iteration(s), distance to KKT point {lq_err:.1e}",
            sol.iterations
        ),
    );
    assert!(ok);
}
