use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eigenmpc::dynamics::{linearize, DoublePendulum};
use eigenmpc::harness::{preset, run, sweep, RunOptions, RunOutcome, Scenario, PRESET_NAMES};
use eigenmpc::modes::{find_eigenmode, fit_chart, linear_modes, ChartExport, ModeFamily, ModeSearchConfig};
use eigenmpc::{Error, Result};

#[derive(Parser)]
#[command(name = "eigenmpc", version, about = "Nonlinear normal modes of a double pendulum and eigenmode-seeking NMPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find a nonlinear mode at a given energy and fit its chart.
    Modes {
        #[arg(long)]
        family: ModeFamily,
        /// Total energy, J.
        #[arg(long)]
        energy: f64,
        #[arg(long, default_value_t = 9)]
        degree: usize,
        /// Write the mode and chart as JSON.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run a preset or a JSON scenario in closed loop.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run one scenario (the first of a preset) for several values of a parameter.
    Sweep {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// alpha, beta, e_ref, w_e, w_x, w_xdot, w_f, t_end or chart_degree.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the scenarios of a preset as JSON, or list the preset names.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Record wall-clock solve times in the CSV (makes it non-reproducible).
    #[arg(long)]
    timing: bool,
}

impl OutArgs {
    fn options(&self) -> RunOptions {
        RunOptions { out_dir: Some(self.out.clone()), svg: self.svg, timing: self.timing }
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn print_summary(outcomes: &[RunOutcome]) {
    println!(
        "{:<34} {:>9} {:>9} {:>9} {:>9} {:>9} {:>6} {:>9}",
        "scenario", "settle_s", "rms_Nm", "haus_rad", "perp_rad", "dE_J", "viol", "ms/solve"
    );
    for o in outcomes {
        let m = &o.report.metrics;
        println!(
            "{:<34} {:>9} {:>9.4} {:>9} {:>9.4} {:>9.4} {:>6} {:>9.2}",
            o.report.scenario,
            fmt_opt(m.settling_time_s, 2),
            m.final_torque_rms_nm,
            fmt_opt(m.hausdorff_to_mode_rad, 4),
            m.max_perp_dist_rad,
            m.energy_error_j,
            m.bound_violations,
            o.report.mean_solve_time_ms,
        );
    }
}

fn modes_cmd(family: ModeFamily, energy: f64, degree: usize, export: Option<PathBuf>) -> Result<()> {
    let sys = DoublePendulum::<f64>::default();
    let lin = linear_modes(&linearize(&sys))?;
    let mode = find_eigenmode(&sys, family, &lin[family.index()], energy, &ModeSearchConfig::default())?;
    let chart = fit_chart(&mode, degree)?;
    let (v0, vh) = mode.rest_velocities();
    println!("family        {family}");
    println!("energy        {:.9} J", mode.energy);
    println!("q0            ({:.9}, {:.9}) rad", mode.q0[0], mode.q0[1]);
    println!("half period   {:.9} s", mode.half_period);
    println!("closure       {:.3e}", mode.closure_error());
    println!("rest speeds   {v0:.3e}, {vh:.3e} rad/s");
    println!("chart fit     {:.3e} rad (degree {degree})", chart.fit_residual);
    if let Some(path) = export {
        let json = serde_json::to_string_pretty(&ChartExport::new(&mode, &chart))?;
        std::fs::write(&path, json)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Modes { family, energy, degree, export } => modes_cmd(family, energy, degree, export),
        Command::Run { preset: name, config, out } => {
            let scenarios = match (name, config) {
                (Some(n), _) => preset(&n)?,
                (None, Some(path)) => vec![Scenario::load(&path)?],
                (None, None) => unreachable!("clap requires one of --preset/--config"),
            };
            let opts = out.options();
            let outcomes = scenarios.iter().map(|s| run(s, &opts)).collect::<Result<Vec<_>>>()?;
            print_summary(&outcomes);
            println!("artifacts in {}", out.out.display());
            Ok(())
        }
        Command::Sweep { preset: name, config, param, values, out } => {
            let base = match (name, config) {
                (Some(n), _) => preset(&n)?.into_iter().next().ok_or(Error::UnknownPreset(n))?,
                (None, Some(path)) => Scenario::load(&path)?,
                (None, None) => unreachable!("clap requires one of --preset/--config"),
            };
            let outcomes = sweep(&base, &param, &values, &out.options())?;
            print_summary(&outcomes);
            println!("artifacts in {}", out.out.display());
            Ok(())
        }
        Command::Presets { name: Some(n) } => {
            println!("{}", serde_json::to_string_pretty(&preset(&n)?)?);
            Ok(())
        }
        Command::Presets { name: None } => {
            for n in PRESET_NAMES {
                println!("{n}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
