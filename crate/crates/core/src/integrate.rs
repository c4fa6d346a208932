//! Fixed-step Runge-Kutta integration, sampled trajectories, and turning-point
//! detection for brake orbits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    acceleration_jacobians, energy, forward_dynamics, ControlInput, MechanicalSystem, State,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, norm, Real};

/// Sampled trajectory on a uniform time grid.
///
/// `inputs[i]` is the zero-order-hold torque applied on `[times[i], times[i+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<State<T>>,
    pub inputs: Vec<ControlInput<T>>,
    pub energies: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&State<T>> {
        self.states.last()
    }

    /// Configurations only.
    pub fn path(&self) -> Vec<Vec<T>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    /// Largest deviation of any recorded energy from the first one.
    pub fn energy_drift(&self) -> T {
        let e0 = self.energies.first().copied().unwrap_or_else(T::zero);
        self.energies.iter().fold(T::zero(), |m, &e| m.max((e - e0).abs()))
    }

    /// CSV with header `t,th1,..,thn,th1dot,..,thndot,tau1,..,taun,E` and
    /// nine-digit fixed precision. The final row repeats the last input.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.dim());
        let mut out = String::new();
        out.push_str(&csv_header(n));
        out.push('\n');
        for i in 0..self.len() {
            let tau = self
                .inputs
                .get(i)
                .or_else(|| self.inputs.last())
                .map(|u| u.tau.clone())
                .unwrap_or_else(|| vec![T::zero(); n]);
            push_row(&mut out, self.times[i], &self.states[i], &tau, self.energies[i]);
            out.push('\n');
        }
        out
    }
}

/// Trajectory CSV header for an `n`-joint system.
pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("th{i}")));
    cols.extend((1..=n).map(|i| format!("th{i}dot")));
    cols.extend((1..=n).map(|i| format!("tau{i}")));
    cols.push("E".into());
    cols.join(",")
}

pub(crate) fn push_row<T: Real>(out: &mut String, t: T, s: &State<T>, tau: &[T], e: T) {
    let _ = write!(out, "{:.9}", t.as_f64());
    for v in s.x.iter().chain(&s.xdot).chain(tau) {
        let _ = write!(out, ",{:.9}", v.as_f64());
    }
    let _ = write!(out, ",{:.9}", e.as_f64());
}

/// Piecewise-constant torque schedule: `values[k]` acts on
/// `[k·hold, (k+1)·hold)`, and the last value is held afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct InputProfile<T> {
    pub hold: T,
    pub values: Vec<ControlInput<T>>,
}

impl<T: Real> InputProfile<T> {
    pub fn zero(n: usize) -> Self {
        Self { hold: T::one(), values: vec![ControlInput::zeros(n)] }
    }

    pub fn constant(u: ControlInput<T>) -> Self {
        Self { hold: T::one(), values: vec![u] }
    }

    pub fn at(&self, t: T) -> &ControlInput<T> {
        let k = (t / self.hold).floor().to_usize().unwrap_or(0);
        &self.values[k.min(self.values.len() - 1)]
    }
}

fn field<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, s: &State<T>, u: &ControlInput<T>) -> Result<State<T>> {
    let acc = forward_dynamics(sys, s, u)?;
    Ok(State { x: s.xdot.clone(), xdot: acc })
}

fn axpy_state<T: Real>(s: &State<T>, h: T, k: &State<T>) -> State<T> {
    State {
        x: s.x.iter().zip(&k.x).map(|(&a, &b)| a + h * b).collect(),
        xdot: s.xdot.iter().zip(&k.xdot).map(|(&a, &b)| a + h * b).collect(),
    }
}

/// One classical RK4 step with the input held constant.
pub fn rk4_step<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
    dt: T,
) -> Result<State<T>> {
    let half = dt * T::lit(0.5);
    let k1 = field(sys, s, u)?;
    let k2 = field(sys, &axpy_state(s, half, &k1), u)?;
    let k3 = field(sys, &axpy_state(s, half, &k2), u)?;
    let k4 = field(sys, &axpy_state(s, dt, &k3), u)?;
    let w = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let combine = |a: &[T], b1: &[T], b2: &[T], b3: &[T], b4: &[T]| -> Vec<T> {
        (0..a.len()).map(|i| a[i] + w * (b1[i] + two * b2[i] + two * b3[i] + b4[i])).collect()
    };
    Ok(State {
        x: combine(&s.x, &k1.x, &k2.x, &k3.x, &k4.x),
        xdot: combine(&s.xdot, &k1.xdot, &k2.xdot, &k3.xdot, &k4.xdot),
    })
}

/// RK4 step plus its exact sensitivities `(∂s⁺/∂s, ∂s⁺/∂u)`.
pub fn rk4_step_with_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
    dt: T,
) -> Result<(State<T>, Matrix<T>, Matrix<T>)> {
    let n = s.dim();
    let nx = 2 * n;
    // Sensitivities are carried as one nx × (nx + n) block [∂/∂s | ∂/∂u].
    let nc = nx + n;
    let half = dt * T::lit(0.5);

    // k = f(s_i, u) and dk = ∂f/∂s · ds_i + [0 | ∂f/∂u].
    let stage = |si: &State<T>, dsi: &[T], dk: &mut [T]| -> Result<State<T>> {
        let jac = acceleration_jacobians(sys, si, u)?;
        for r in 0..n {
            dk[r * nc..(r + 1) * nc].copy_from_slice(&dsi[(n + r) * nc..(n + r + 1) * nc]);
        }
        for r in 0..n {
            let row = &mut dk[(n + r) * nc..(n + r + 1) * nc];
            row.iter_mut().for_each(|v| *v = T::zero());
            for m in 0..n {
                let a = jac.d_dx[(r, m)];
                let b = jac.d_dxdot[(r, m)];
                let pos = &dsi[m * nc..(m + 1) * nc];
                let vel = &dsi[(n + m) * nc..(n + m + 1) * nc];
                for c in 0..nc {
                    row[c] = row[c] + a * pos[c] + b * vel[c];
                }
            }
            for c in 0..n {
                row[nx + c] = row[nx + c] + jac.d_du[(r, c)];
            }
        }
        Ok(State { x: si.xdot.clone(), xdot: jac.acc })
    };
    let mut eye = vec![T::zero(); nx * nc];
    for i in 0..nx {
        eye[i * nc + i] = T::one();
    }
    let shifted = |d: &[T], h: T| -> Vec<T> { eye.iter().zip(d).map(|(&e, &v)| e + h * v).collect() };
    let mut d1 = vec![T::zero(); nx * nc];
    let mut d2 = d1.clone();
    let mut d3 = d1.clone();
    let mut d4 = d1.clone();
    let k1 = stage(s, &eye, &mut d1)?;
    let k2 = stage(&axpy_state(s, half, &k1), &shifted(&d1, half), &mut d2)?;
    let k3 = stage(&axpy_state(s, half, &k2), &shifted(&d2, half), &mut d3)?;
    let k4 = stage(&axpy_state(s, dt, &k3), &shifted(&d3, dt), &mut d4)?;

    let w = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let combine = |a: &[T], b1: &[T], b2: &[T], b3: &[T], b4: &[T]| -> Vec<T> {
        (0..a.len()).map(|i| a[i] + w * (b1[i] + two * b2[i] + two * b3[i] + b4[i])).collect()
    };
    let next = State {
        x: combine(&s.x, &k1.x, &k2.x, &k3.x, &k4.x),
        xdot: combine(&s.xdot, &k1.xdot, &k2.xdot, &k3.xdot, &k4.xdot),
    };
    let total = combine(&eye, &d1, &d2, &d3, &d4);
    let mut a = Matrix::zeros(nx, nx);
    let mut b = Matrix::zeros(nx, n);
    for r in 0..nx {
        a.row_mut(r).copy_from_slice(&total[r * nc..r * nc + nx]);
        b.row_mut(r).copy_from_slice(&total[r * nc + nx..(r + 1) * nc]);
    }
    Ok((next, a, b))
}

/// `substeps` RK4 steps of size `dt / substeps` with chained sensitivities.
pub fn rk4_multistep_with_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
    dt: T,
    substeps: usize,
) -> Result<(State<T>, Matrix<T>, Matrix<T>)> {
    let h = dt / T::from_count(substeps);
    let (mut cur, mut a, mut b) = rk4_step_with_jacobians(sys, s, u, h)?;
    for _ in 1..substeps {
        let (next, ai, bi) = rk4_step_with_jacobians(sys, &cur, u, h)?;
        a = ai.matmul(&a);
        b = ai.matmul(&b).add(&bi);
        cur = next;
    }
    Ok((cur, a, b))
}

/// `substeps` plain RK4 steps of size `dt / substeps`.
pub fn rk4_multistep<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
    dt: T,
    substeps: usize,
) -> Result<State<T>> {
    let h = dt / T::from_count(substeps);
    let mut cur = rk4_step(sys, s, u, h)?;
    for _ in 1..substeps {
        cur = rk4_step(sys, &cur, u, h)?;
    }
    Ok(cur)
}

/// Integrates from `s0` over `[0, t_end]` with fixed step `dt`.
///
/// The step count is `round(t_end / dt)`; energies are recorded at every
/// sample.
pub fn flow<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s0: &State<T>,
    profile: &InputProfile<T>,
    dt: T,
    t_end: T,
) -> Result<Trajectory<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if t_end < dt {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} is shorter than dt = {dt}")));
    }
    let steps = (t_end / dt).round().to_usize().unwrap_or(0).max(1);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        energies: Vec::with_capacity(steps + 1),
    };
    let mut s = s0.clone();
    traj.times.push(T::zero());
    traj.energies.push(energy(sys, &s));
    traj.states.push(s.clone());
    for i in 0..steps {
        let t = T::from_count(i) * dt;
        let u = profile.at(t).clone();
        let next = rk4_step(sys, &s, &u, dt);
        let next = match next {
            Ok(next) if next.is_finite() => next,
            _ => return Err(Error::Divergence { last_valid_time: t.as_f64() }),
        };
        s = next;
        traj.times.push(T::from_count(i + 1) * dt);
        traj.energies.push(energy(sys, &s));
        traj.states.push(s.clone());
        traj.inputs.push(u);
    }
    Ok(traj)
}

/// Rest point of a brake orbit: where kinetic energy reaches its first
/// minimum after leaving the start.
#[derive(Clone, Debug, PartialEq)]
pub struct TurningEvent<T> {
    pub t_star: T,
    pub state_star: State<T>,
    /// Velocities at `t_star`; zero for an exact brake orbit.
    pub residual: Vec<T>,
}

/// Equilibrium threshold for the start configuration, in N·m.
pub const EQUILIBRIUM_GRADIENT_TOL: f64 = 1e-9;
/// Samples skipped before looking for the kinetic-energy minimum.
pub const TURNING_GRACE_STEPS: usize = 10;
/// Time resolution of the turning-point bisection, in seconds.
pub const TURNING_TIME_TOL: f64 = 1e-10;

/// `dK/dt` of the unforced flow, equal to `−∇Vᵀ ẋ`.
fn kinetic_rate<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, s: &State<T>) -> T {
    -dot(&sys.gravity_gradient(&s.x), &s.xdot)
}

/// Releases the system at rest from `q0` and locates the first kinetic-energy
/// minimum, refined by bisection on the sign of `dK/dt`.
pub fn find_turning_point<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    q0: &[T],
    dt: T,
    t_max: T,
) -> Result<TurningEvent<T>> {
    if q0.len() != sys.dof() {
        return Err(Error::DimensionMismatch { expected: sys.dof(), got: q0.len() });
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let grad_norm = norm(&sys.gravity_gradient(q0));
    if grad_norm <= T::lit(EQUILIBRIUM_GRADIENT_TOL) {
        return Err(Error::DegenerateStart { gradient_norm: grad_norm.as_f64() });
    }
    let n = sys.dof();
    let zero = ControlInput::zeros(n);
    let mut s = State::at_rest(q0.to_vec());
    let mut step = 0usize;
    let mut rate = kinetic_rate(sys, &s);
    loop {
        let t = T::from_count(step) * dt;
        if t > t_max {
            return Err(Error::SearchHorizon { t_max: t_max.as_f64() });
        }
        let next = rk4_step(sys, &s, &zero, dt)?;
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t.as_f64() });
        }
        let next_rate = kinetic_rate(sys, &next);
        if step >= TURNING_GRACE_STEPS && rate < T::zero() && next_rate >= T::zero() {
            // Bisection on the sub-step length h ∈ [0, dt] from `s`.
            let (mut lo, mut hi) = (T::zero(), dt);
            let tol = T::lit(TURNING_TIME_TOL);
            while hi - lo > tol {
                let mid = (lo + hi) * T::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                let probe = rk4_step(sys, &s, &zero, mid)?;
                if kinetic_rate(sys, &probe) < T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let h = (lo + hi) * T::lit(0.5);
            let star = rk4_step(sys, &s, &zero, h)?;
            return Ok(TurningEvent { t_star: t + h, residual: star.xdot.clone(), state_star: star });
        }
        s = next;
        rate = next_rate;
        step += 1;
    }
}
