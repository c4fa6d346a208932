//! Receding-horizon loop: solve, apply the first control for one sample,
//! measure, repeat.

use std::fmt::Write as _;
use std::time::Instant;

use log::warn;

use crate::dynamics::{energy, ControlInput, MechanicalSystem, State};
use crate::error::{Error, Result};
use crate::integrate::{csv_header, push_row, rk4_step, Trajectory};
use crate::nmpc::cost::CostSpec;
use crate::nmpc::nlp::{build_nlp, NmpcConfig, WarmStart};
use crate::nmpc::qp::Bound;
use crate::nmpc::sqp::{sqp_solve, NlpSolution};
use crate::scalar::Real;

/// Plant integration step of the closed-loop simulation, s.
pub const PLANT_DT: f64 = 1e-3;

/// Solver telemetry for one MPC sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleLog<T> {
    pub t: T,
    pub sqp_iters: usize,
    pub kkt: T,
    pub objective: T,
    pub solve_time_ms: f64,
    pub converged: bool,
}

/// Stateful controller: cost, settings and the warm-start memory.
#[derive(Clone, Debug)]
pub struct Controller<T> {
    pub spec: CostSpec<T>,
    pub cfg: NmpcConfig<T>,
    n: usize,
    previous: Option<NlpSolution<T>>,
}

impl<T: Real> Controller<T> {
    pub fn new(spec: CostSpec<T>, cfg: NmpcConfig<T>, n: usize) -> Result<Self> {
        spec.validate()?;
        cfg.validate(n)?;
        Ok(Self { spec, cfg, n, previous: None })
    }

    /// Drops the warm-start memory.
    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn last_solution(&self) -> Option<&NlpSolution<T>> {
        self.previous.as_ref()
    }

    fn initial_guess(&self) -> NlpSolution<T> {
        let horizon = self.cfg.horizon;
        match (&self.previous, self.cfg.warm_start) {
            (Some(prev), WarmStart::Shift) if prev.controls.len() == horizon => {
                let mut controls: Vec<ControlInput<T>> = prev.controls[1..].to_vec();
                controls.push(prev.controls[horizon - 1].clone());
                let mut active: Vec<Bound> = prev.active[self.n..].to_vec();
                active.extend_from_slice(&prev.active[(horizon - 1) * self.n..]);
                NlpSolution { controls, active, ..NlpSolution::zeros(horizon, self.n) }
            }
            _ => NlpSolution::zeros(horizon, self.n),
        }
    }

    /// Solves the horizon problem from `measured` and returns its first
    /// control. A non-converged solve still returns the best iterate.
    pub fn mpc_step<S: MechanicalSystem<T> + ?Sized>(
        &mut self,
        sys: &S,
        t: T,
        measured: &State<T>,
    ) -> Result<(ControlInput<T>, SampleLog<T>)> {
        let start = Instant::now();
        let nlp = build_nlp(sys, &self.spec, &self.cfg, measured.clone())?;
        let guess = self.initial_guess();
        let sol = sqp_solve(&nlp, &guess)?;
        let solve_time_ms = start.elapsed().as_secs_f64() * 1e3;
        if !sol.converged {
            warn!("SQP not converged at t = {t}: kkt {} after {} iterations", sol.kkt_residual, sol.iterations);
        }
        let u = sol.controls[0].clone();
        let log = SampleLog {
            t,
            sqp_iters: sol.iterations,
            kkt: sol.kkt_residual,
            objective: sol.objective,
            solve_time_ms,
            converged: sol.converged,
        };
        self.previous = Some(sol);
        Ok((u, log))
    }
}

/// Closed-loop trajectory at plant resolution plus per-sample telemetry.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun<T> {
    pub trajectory: Trajectory<T>,
    pub samples: Vec<SampleLog<T>>,
    /// Plant steps per MPC sample.
    pub hold_steps: usize,
}

/// Header of the closed-loop CSV: the trajectory columns then the solver
/// telemetry.
pub fn closed_loop_csv_header(n: usize) -> String {
    format!("{},sqp_iters,kkt,objective,solve_time_ms", csv_header(n))
}

impl<T: Real> ClosedLoopRun<T> {
    /// Sample whose hold interval covers plant row `i`.
    pub fn sample_index(&self, i: usize) -> usize {
        (i / self.hold_steps).min(self.samples.len().saturating_sub(1))
    }

    /// CSV at plant resolution. Wall-clock solve times are written only when
    /// `timing` is set; otherwise the column is zero so repeated runs are
    /// byte-identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let traj = &self.trajectory;
        let n = traj.states.first().map_or(0, |s| s.dim());
        let mut out = closed_loop_csv_header(n);
        out.push('\n');
        for i in 0..traj.len() {
            let tau = traj.inputs.get(i).or_else(|| traj.inputs.last()).map(|u| u.tau.clone()).unwrap_or_default();
            push_row(&mut out, traj.times[i], &traj.states[i], &tau, traj.energies[i]);
            match self.samples.get(self.sample_index(i)) {
                Some(s) => {
                    let ms = if timing { s.solve_time_ms } else { 0.0 };
                    let _ = write!(out, ",{},{:.9},{:.9},{:.9}", s.sqp_iters, s.kkt.as_f64(), s.objective.as_f64(), ms);
                }
                None => out.push_str(",0,0,0,0"),
            }
            out.push('\n');
        }
        out
    }

    pub fn mean_solve_time_ms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.solve_time_ms).sum::<f64>() / self.samples.len() as f64
    }
}

/// Simulates the plant under the controller for `t_end` seconds: RK4 at
/// [`PLANT_DT`], controls held over each shooting interval.
pub fn closed_loop<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    controller: &mut Controller<T>,
    s0: &State<T>,
    t_end: T,
) -> Result<ClosedLoopRun<T>> {
    let dt_shoot = controller.cfg.dt_shoot;
    if t_end < dt_shoot {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} is shorter than the sample time {dt_shoot}")));
    }
    let plant_dt = T::lit(PLANT_DT);
    let hold_steps = (dt_shoot / plant_dt).round().to_usize().unwrap_or(1).max(1);
    let steps = (t_end / plant_dt).round().to_usize().unwrap_or(0);

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        energies: Vec::with_capacity(steps + 1),
    };
    let mut samples = Vec::with_capacity(steps / hold_steps + 1);
    let mut s = s0.clone();
    traj.times.push(T::zero());
    traj.energies.push(energy(sys, &s));
    traj.states.push(s.clone());
    let mut u = ControlInput::zeros(s.dim());
    for i in 0..steps {
        let t = T::from_count(i) * plant_dt;
        if i % hold_steps == 0 {
            let (ui, log) = controller.mpc_step(sys, t, &s)?;
            u = ui;
            samples.push(log);
        }
        let next = match rk4_step(sys, &s, &u, plant_dt) {
            Ok(next) if next.is_finite() => next,
            _ => return Err(Error::Divergence { last_valid_time: t.as_f64() }),
        };
        s = next;
        traj.times.push(T::from_count(i + 1) * plant_dt);
        traj.energies.push(energy(sys, &s));
        traj.states.push(s.clone());
        traj.inputs.push(u.clone());
    }
    Ok(ClosedLoopRun { trajectory: traj, samples, hold_steps })
}
