//! Runs scenarios end to end and writes their artifacts.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dynamics::{linearize, DoublePendulum};
use crate::error::{Error, Result};
use crate::harness::metrics::{compute_metrics, final_path, parse_csv, CsvRow, MetricContext, RunMetrics};
use crate::harness::scenario::{with_param, Scenario, VariantKind};
use crate::harness::svg::{decimate, line_plot, Series};
use crate::modes::{find_eigenmode, fit_chart, linear_modes, LinearMode, Mode, ModeSearchConfig};
use crate::nmpc::{closed_loop, ClosedLoopRun, Controller, CostSpec};

/// Output options for [`run`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory for CSV, report and plots; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    pub svg: bool,
    /// Write wall-clock solve times into the CSV. Off by default so repeated
    /// runs produce identical files.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub variant: VariantKind,
    pub e_ref: f64,
    pub trajectory_path: Option<PathBuf>,
    pub metrics: RunMetrics,
    /// Inputs needed to recompute `metrics` from the CSV.
    pub context: MetricContext,
    pub mpc_samples: usize,
    pub nonconverged_samples: usize,
    pub mean_sqp_iters: f64,
    pub mean_solve_time_ms: f64,
    /// Fit residual of the chart used by the curved cost, rad.
    pub chart_fit_residual: Option<f64>,
}

/// Everything produced by one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub csv: String,
    pub closed_loop: ClosedLoopRun<f64>,
    /// Mode at the final orbit's energy, if one was found.
    pub matched_mode: Option<Mode<f64>>,
}

fn with_context<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Scenario { scenario: name.to_string(), source: Box::new(e) })
}

fn family_mode(sys: &DoublePendulum<f64>, sc: &Scenario) -> Result<LinearMode<f64>> {
    let mut modes = linear_modes(&linearize(sys))?;
    Ok(modes.swap_remove(sc.family.index()))
}

/// Mode of the scenario's family at energy `e`, or `None` if the search
/// fails there.
pub fn matched_mode(sc: &Scenario, e: f64) -> Result<Option<Mode<f64>>> {
    let sys = DoublePendulum::new(sc.system)?;
    let lin = family_mode(&sys, sc)?;
    if !(e > 1e-6) {
        return Ok(None);
    }
    match find_eigenmode(&sys, sc.family, &lin, e, &ModeSearchConfig::default()) {
        Ok(m) => Ok(Some(m)),
        Err(err) => {
            warn!("no {} mode at {e:.4} J for comparison: {err}", sc.family);
            Ok(None)
        }
    }
}

fn metric_context(sc: &Scenario, lin: &LinearMode<f64>, sys: &DoublePendulum<f64>) -> MetricContext {
    use crate::dynamics::MechanicalSystem;
    let cfg = sc.nmpc();
    MetricContext {
        e_ref: sc.e_ref,
        tau_min: cfg.tau_min,
        tau_max: cfg.tau_max,
        direction: lin.c.clone(),
        x_eq: sys.equilibrium(),
    }
}

/// Metrics from CSV rows, including the matched-energy mode comparison.
pub fn metrics_from_rows(sc: &Scenario, rows: &[CsvRow], ctx: &MetricContext) -> Result<(RunMetrics, Option<Mode<f64>>)> {
    let first = compute_metrics(rows, ctx, None)?;
    let mode = matched_mode(sc, first.final_energy_j)?;
    let path = mode.as_ref().map(|m| m.orbit.path());
    Ok((compute_metrics(rows, ctx, path.as_deref())?, mode))
}

/// Recomputes a report's metrics from CSV text.
pub fn recompute_metrics(sc: &Scenario, csv: &str, ctx: &MetricContext) -> Result<RunMetrics> {
    let rows = parse_csv(csv)?;
    Ok(metrics_from_rows(sc, &rows, ctx)?.0)
}

/// Builds the controller of a scenario. Returns the chart fit residual for
/// the curved variant.
pub fn build_controller(sc: &Scenario) -> Result<(DoublePendulum<f64>, Controller<f64>, Option<f64>)> {
    sc.validate()?;
    let sys = DoublePendulum::new(sc.system)?;
    let lin = family_mode(&sys, sc)?;
    let (spec, fit) = match sc.variant {
        VariantKind::Curved => {
            let mode = find_eigenmode(&sys, sc.family, &lin, sc.e_ref, &ModeSearchConfig::default())?;
            let chart = fit_chart(&mode, sc.chart_degree)?;
            let fit = chart.fit_residual;
            (CostSpec::curved(chart, sc.e_ref, sc.weights())?, Some(fit))
        }
        VariantKind::Straight => {
            use crate::dynamics::MechanicalSystem;
            let spec = CostSpec::straight(lin.c.clone(), sys.equilibrium(), sc.alpha, sc.beta, sc.e_ref, sc.weights())?;
            (spec, None)
        }
    };
    let controller = Controller::new(spec, sc.nmpc(), 2)?;
    Ok((sys, controller, fit))
}

fn run_inner(sc: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    let (sys, mut controller, fit) = build_controller(sc)?;
    let lin = family_mode(&sys, sc)?;
    let s0 = sc.initial.to_state()?;
    info!("running `{}` ({} variant, E_ref = {} J, {} s)", sc.name, sc.variant, sc.e_ref, sc.t_end);
    let cl = closed_loop(&sys, &mut controller, &s0, sc.t_end)?;
    let csv = cl.to_csv(opts.timing);
    let rows = parse_csv(&csv)?;
    let ctx = metric_context(sc, &lin, &sys);
    let (metrics, mode) = metrics_from_rows(sc, &rows, &ctx)?;

    let samples = cl.samples.len();
    let report = RunReport {
        scenario: sc.name.clone(),
        variant: sc.variant,
        e_ref: sc.e_ref,
        trajectory_path: None,
        metrics,
        context: ctx,
        mpc_samples: samples,
        nonconverged_samples: cl.samples.iter().filter(|s| !s.converged).count(),
        mean_sqp_iters: cl.samples.iter().map(|s| s.sqp_iters as f64).sum::<f64>() / samples.max(1) as f64,
        mean_solve_time_ms: cl.mean_solve_time_ms(),
        chart_fit_residual: fit,
    };
    let mut outcome = RunOutcome { report, csv, closed_loop: cl, matched_mode: mode };
    if let Some(dir) = &opts.out_dir {
        write_artifacts(sc, &mut outcome, &rows, dir, opts.svg)?;
    }
    Ok(outcome)
}

/// Simulates the scenario in closed loop and computes its metrics.
pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    with_context(&sc.name, run_inner(sc, opts))
}

/// Runs `base` once per value of `param`.
pub fn sweep(base: &Scenario, param: &str, values: &[f64], opts: &RunOptions) -> Result<Vec<RunOutcome>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    values.iter().map(|&v| run(&with_param(base, param, v)?, opts)).collect()
}

fn write_artifacts(sc: &Scenario, out: &mut RunOutcome, rows: &[CsvRow], dir: &Path, svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", sc.name));
    std::fs::write(&csv_path, &out.csv)?;
    out.report.trajectory_path = Some(csv_path);
    std::fs::write(dir.join(format!("{}.report.json", sc.name)), serde_json::to_string_pretty(&out.report)?)?;
    std::fs::write(dir.join(format!("{}.scenario.json", sc.name)), serde_json::to_string_pretty(sc)?)?;
    if svg {
        for (suffix, body) in plots(sc, rows, out.matched_mode.as_ref()) {
            std::fs::write(dir.join(format!("{}_{suffix}.svg", sc.name)), body)?;
        }
    }
    Ok(())
}

fn plots(sc: &Scenario, rows: &[CsvRow], mode: Option<&Mode<f64>>) -> Vec<(&'static str, String)> {
    const MAX: usize = 4000;
    let to_pts = |f: &dyn Fn(&CsvRow) -> (f64, f64)| decimate(rows.iter().map(f).collect(), MAX);

    let mut path_series = vec![Series {
        label: "closed loop",
        points: to_pts(&|r| (r.x[0], r.x[1])),
        dashed: false,
    }];
    path_series.push(Series {
        label: "final orbit",
        points: final_path(rows).iter().map(|p| (p[0], p[1])).collect(),
        dashed: false,
    });
    if let Some(m) = mode {
        path_series.push(Series {
            label: "mode",
            points: m.orbit.states.iter().map(|s| (s.x[0], s.x[1])).collect(),
            dashed: true,
        });
    }
    let path = line_plot(&format!("{}: joint path", sc.name), "th1 [rad]", "th2 [rad]", &path_series, true);

    let t_end = rows.last().map_or(0.0, |r| r.t);
    let energy = line_plot(
        &format!("{}: energy", sc.name),
        "t [s]",
        "E [J]",
        &[
            Series { label: "E", points: to_pts(&|r| (r.t, r.e)), dashed: false },
            Series { label: "E_ref", points: vec![(0.0, sc.e_ref), (t_end, sc.e_ref)], dashed: true },
        ],
        false,
    );
    let torque = line_plot(
        &format!("{}: torques", sc.name),
        "t [s]",
        "tau [N m]",
        &[
            Series { label: "tau1", points: to_pts(&|r| (r.t, r.tau[0])), dashed: false },
            Series { label: "tau2", points: to_pts(&|r| (r.t, r.tau[1])), dashed: false },
        ],
        false,
    );
    vec![("path", path), ("energy", energy), ("torque", torque)]
}
