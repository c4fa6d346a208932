//! Gauss-Newton SQP on the condensed problem.

use log::debug;

use crate::dynamics::{ControlInput, MechanicalSystem, State};
use crate::error::{Error, Result};
use crate::nmpc::nlp::Nlp;
use crate::nmpc::qp::{solve_box_qp, Bound};
use crate::scalar::Real;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct NlpSolution<T> {
    pub controls: Vec<ControlInput<T>>,
    /// Predicted states `s_0 .. s_N`.
    pub states: Vec<State<T>>,
    pub objective: T,
    /// `‖U − Π(U − ∇J)‖∞`, zero exactly at a KKT point of the box problem.
    pub kkt_residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Working set of the last QP, reused as the next warm start.
    pub active: Vec<Bound>,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<T>,
}

impl<T: Real> NlpSolution<T> {
    pub fn flat_controls(&self) -> Vec<T> {
        self.controls.iter().flat_map(|u| u.tau.iter().copied()).collect()
    }

    /// All-zero guess for a horizon of `horizon` stages and `n` joints.
    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            controls: vec![ControlInput::zeros(n); horizon],
            states: Vec::new(),
            objective: T::infinity(),
            kkt_residual: T::infinity(),
            iterations: 0,
            converged: false,
            active: vec![Bound::Free; horizon * n],
            objective_trace: Vec::new(),
        }
    }
}

fn projected_gradient_residual<T: Real>(u: &[T], g: &[T], lb: &[T], ub: &[T]) -> T {
    (0..u.len()).fold(T::zero(), |m, i| {
        let p = (u[i] - g[i]).max(lb[i]).min(ub[i]);
        m.max((u[i] - p).abs())
    })
}

/// Solves the horizon problem starting from `guess`.
///
/// Each iteration solves the Gauss-Newton box QP and backtracks on the true
/// objective. A failed line search returns the best iterate so far with
/// `converged = false`.
pub fn sqp_solve<T: Real, S: MechanicalSystem<T> + ?Sized>(
    nlp: &Nlp<'_, T, S>,
    guess: &NlpSolution<T>,
) -> Result<NlpSolution<T>> {
    let n = nlp.dof();
    let nv = nlp.num_vars();
    let lb = nlp.lower_bounds();
    let ub = nlp.upper_bounds();
    let mut u = guess.flat_controls();
    if u.len() != nv {
        return Err(Error::DimensionMismatch { expected: nv, got: u.len() });
    }
    for i in 0..nv {
        u[i] = u[i].max(lb[i]).min(ub[i]);
    }
    let mut active = if guess.active.len() == nv { guess.active.clone() } else { vec![Bound::Free; nv] };

    let step_tol = T::epsilon().sqrt() * T::lit(1e-4);
    let mut iterations = 0;
    let mut converged = false;
    let mut cond = nlp.condense(&u)?;
    let mut kkt = projected_gradient_residual(&u, &cond.gradient, &lb, &ub);
    let mut trace = vec![cond.objective];

    while iterations < nlp.cfg.sqp_max_iters {
        if kkt < nlp.cfg.kkt_tol {
            converged = true;
            break;
        }
        let mut h = cond.hessian.clone();
        let reg = h.max_abs().max(T::one()) * T::epsilon() * T::lit(1e3);
        for i in 0..nv {
            h[(i, i)] = h[(i, i)] + reg;
        }
        let dlb: Vec<T> = (0..nv).map(|i| lb[i] - u[i]).collect();
        let dub: Vec<T> = (0..nv).map(|i| ub[i] - u[i]).collect();
        let qp = solve_box_qp(&h, &cond.gradient, &dlb, &dub, Some(&active))?;
        active = qp.active;
        let d = qp.x;
        let slope: T = d.iter().zip(&cond.gradient).map(|(&a, &b)| a * b).sum();
        iterations += 1;
        if !(slope < T::zero()) {
            // Already stationary up to the QP's accuracy.
            converged = kkt < nlp.cfg.kkt_tol * T::lit(1e3);
            break;
        }

        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<T> = (0..nv).map(|i| (u[i] + alpha * d[i]).max(lb[i]).min(ub[i])).collect();
            if let Ok(j) = nlp.objective(&trial) {
                if j <= cond.objective + T::lit(ARMIJO_C) * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        let Some(trial) = accepted else {
            debug!("line search failed after {iterations} iterations, kkt {kkt}");
            break;
        };
        let step = (0..nv).fold(T::zero(), |m, i| m.max((trial[i] - u[i]).abs()));
        u = trial;
        cond = nlp.condense(&u)?;
        trace.push(cond.objective);
        kkt = projected_gradient_residual(&u, &cond.gradient, &lb, &ub);
        if step < step_tol {
            converged = true;
            break;
        }
    }
    if !converged && kkt < nlp.cfg.kkt_tol {
        converged = true;
    }

    let controls = u.chunks(n).map(|c| ControlInput { tau: c.to_vec() }).collect();
    Ok(NlpSolution {
        controls,
        states: cond.states,
        objective: cond.objective,
        kkt_residual: kkt,
        iterations,
        converged,
        active,
        objective_trace: trace,
    })
}
