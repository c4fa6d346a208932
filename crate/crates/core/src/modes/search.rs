use serde::{Deserialize, Serialize};

use crate::dynamics::{energy, forward_dynamics, ControlInput, MechanicalSystem, State};
use crate::error::{Error, Result};
use crate::integrate::{find_turning_point, flow, InputProfile, Trajectory};
use crate::modes::linear::{LinearMode, ModeFamily};
use crate::scalar::{dot, norm, Real};

/// Tunables of the shooting/continuation search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSearchConfig {
    /// Integration step for shooting and orbit sampling, s.
    pub dt: f64,
    /// Give up on a turning point after this long, s.
    pub t_max: f64,
    /// Residual tolerance, rad/s.
    pub tol: f64,
    /// First rung of the energy ladder, J.
    pub e_start: f64,
    /// Energy ratio between consecutive rungs.
    pub ladder_factor: f64,
    /// Half-width of the bracketing window around the warm start, degrees.
    pub bracket_deg: f64,
    /// Increment halvings allowed per rung before giving up.
    pub max_halvings: usize,
}

impl Default for ModeSearchConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 20.0,
            tol: 1e-10,
            e_start: 0.05,
            ladder_factor: 1.5,
            bracket_deg: 25.0,
            max_halvings: 8,
        }
    }
}

/// One converged rung of the continuation ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPoint<T> {
    pub energy: T,
    /// Polar angle of `q0 − x_eq` in the configuration plane, rad.
    pub angle: T,
    pub q0: Vec<T>,
    pub residual: T,
}

/// A nonlinear eigenmode at fixed energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode<T> {
    pub family: ModeFamily,
    /// Linear-mode direction the family grows from.
    pub direction: Vec<T>,
    pub x_eq: Vec<T>,
    /// Rest configuration at `t = 0`.
    pub q0: Vec<T>,
    pub half_period: T,
    pub energy: T,
    /// One full unforced period sampled on a grid with an even step count, so
    /// that `states[k]` and `states[len-1-k]` mirror each other.
    pub orbit: Trajectory<T>,
}

impl<T: Real> Mode<T> {
    pub fn period(&self) -> T {
        self.half_period + self.half_period
    }

    /// Distance between the first and last orbit samples in state space.
    pub fn closure_error(&self) -> T {
        let a = self.orbit.states.first().expect("non-empty orbit").to_flat();
        let b = self.orbit.states.last().expect("non-empty orbit").to_flat();
        let d: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
        norm(&d)
    }

    /// Velocity norms at `t = 0` and `t = half_period`.
    pub fn rest_velocities(&self) -> (T, T) {
        let mid = (self.orbit.len() - 1) / 2;
        (norm(&self.orbit.states[0].xdot), norm(&self.orbit.states[mid].xdot))
    }

    /// Configuration path of the first half period.
    pub fn half_path(&self) -> Vec<Vec<T>> {
        let mid = (self.orbit.len() - 1) / 2;
        self.orbit.states[..=mid].iter().map(|s| s.x.clone()).collect()
    }
}

/// Finds `q = s·direction`, `s > 0`, with `V(q) = E`.
///
/// The ray is scanned outward until the potential first crosses `E`, then the
/// crossing is polished with safeguarded Newton steps. If the potential peaks
/// below `E` first, the energy is unreachable along that ray.
pub fn rest_point_on_level_set<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    direction: &[T],
    e: T,
) -> Result<Vec<T>> {
    let x_eq = sys.equilibrium();
    if direction.len() != x_eq.len() {
        return Err(Error::DimensionMismatch { expected: x_eq.len(), got: direction.len() });
    }
    if e < T::zero() || !e.is_finite() {
        return Err(Error::InvalidArgument(format!("energy must be non-negative, got {e}")));
    }
    if e == T::zero() {
        return Ok(x_eq);
    }
    let dnorm = norm(direction);
    if !(dnorm > T::zero()) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let point = |s: T| -> Vec<T> { x_eq.iter().zip(direction).map(|(&x0, &d)| x0 + s * d).collect() };
    let v_at = |s: T| sys.potential(&point(s)) - e;
    let dv_at = |s: T| dot(&sys.gravity_gradient(&point(s)), direction);

    let ds = T::lit(0.01) / dnorm;
    let s_max = T::lit(4.0 * std::f64::consts::PI) / dnorm;
    let mut lo = T::zero();
    let mut f_lo = -e;
    let mut hi = None;
    let mut s = ds;
    while s <= s_max {
        let f = v_at(s);
        if f >= T::zero() {
            hi = Some(s);
            break;
        }
        if f < f_lo {
            return Err(Error::UnreachableEnergy { energy: e.as_f64(), max_reachable: (f_lo + e).as_f64() });
        }
        lo = s;
        f_lo = f;
        s = s + ds;
    }
    let mut hi = hi.ok_or(Error::UnreachableEnergy { energy: e.as_f64(), max_reachable: (f_lo + e).as_f64() })?;

    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0) * e.max(T::one()));
    let mut s = (lo + hi) * T::lit(0.5);
    for _ in 0..200 {
        let f = v_at(s);
        if f.abs() < tol {
            return Ok(point(s));
        }
        if f < T::zero() {
            lo = s;
        } else {
            hi = s;
        }
        let slope = dv_at(s);
        let newton = s - f / slope;
        s = if slope > T::zero() && newton > lo && newton < hi { newton } else { (lo + hi) * T::lit(0.5) };
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    let f = v_at(s);
    if f.abs() < tol {
        Ok(point(s))
    } else {
        Err(Error::Solver(format!("level-set root find stalled at |V - E| = {}", f.abs())))
    }
}

/// Signed velocity at the turning point, measured orthogonally to the local
/// path direction there (the acceleration direction at a reversal). Zero iff
/// the release from `(q0, 0)` brakes to rest again. Planar configurations only.
pub fn shoot_residual<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    q0: &[T],
    cfg: &ModeSearchConfig,
) -> Result<T> {
    if sys.dof() != 2 {
        return Err(Error::InvalidArgument("shooting residual requires a two-dimensional configuration".into()));
    }
    let event = find_turning_point(sys, q0, T::lit(cfg.dt), T::lit(cfg.t_max))?;
    let acc = forward_dynamics(sys, &event.state_star, &ControlInput::zeros(2))?;
    let v = &event.state_star.xdot;
    let a_norm = norm(&acc);
    if !(a_norm > T::zero()) {
        return Err(Error::Solver("turning point has zero acceleration".into()));
    }
    Ok((acc[0] * v[1] - acc[1] * v[0]) / a_norm)
}

fn polar_direction<T: Real>(angle: T) -> [T; 2] {
    [angle.cos(), angle.sin()]
}

/// Residual of the candidate on the level set `V = e` at `angle`.
fn residual_at<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    angle: T,
    e: T,
    cfg: &ModeSearchConfig,
) -> Result<(T, Vec<T>)> {
    let q0 = rest_point_on_level_set(sys, &polar_direction(angle), e)?;
    let r = shoot_residual(sys, &q0, cfg)?;
    Ok((r, q0))
}

/// Converges the residual on one energy level, starting from `warm`.
fn solve_rung<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    warm: T,
    e: T,
    cfg: &ModeSearchConfig,
) -> Option<GeneratorPoint<T>> {
    let tol = T::lit(cfg.tol);
    let (r0, q0) = residual_at(sys, warm, e, cfg).ok()?;
    if r0.abs() < tol {
        return Some(GeneratorPoint { energy: e, angle: warm, q0, residual: r0 });
    }

    // Widen symmetric probes until the residual changes sign.
    let deg = T::lit(std::f64::consts::PI / 180.0);
    let max_off = T::lit(cfg.bracket_deg) * deg;
    let mut bracket = None;
    let mut prev_plus = (warm, r0);
    let mut prev_minus = (warm, r0);
    let mut off = T::lit(0.25) * deg;
    while off <= max_off * T::lit(1.0 + 1e-12) && bracket.is_none() {
        for sign in [T::one(), -T::one()] {
            let a = warm + sign * off;
            let prev = if sign > T::zero() { &mut prev_plus } else { &mut prev_minus };
            if let Ok((r, _)) = residual_at(sys, a, e, cfg) {
                if r.signum() != prev.1.signum() {
                    bracket = Some(((prev.0, prev.1), (a, r)));
                    break;
                }
                *prev = (a, r);
            }
        }
        off = if off * T::lit(2.0) > max_off && off < max_off { max_off } else { off * T::lit(2.0) };
    }
    let ((mut a, mut fa), (mut b, mut fb)) = bracket?;

    // Illinois-modified regula falsi with bisection safeguard.
    let mut side = 0i8;
    let mut best: Option<GeneratorPoint<T>> = None;
    for iter in 0..200 {
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = (a + b) * T::lit(0.5);
        let c = if iter % 4 == 3 || !secant.is_finite() || (secant - a) * (secant - b) >= T::zero() {
            mid
        } else {
            secant
        };
        let (fc, qc) = residual_at(sys, c, e, cfg).ok()?;
        if best.as_ref().map_or(true, |p| fc.abs() < p.residual.abs()) {
            best = Some(GeneratorPoint { energy: e, angle: c, q0: qc, residual: fc });
        }
        if fc.abs() < tol {
            return best;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == 1 {
                fa = fa * T::lit(0.5);
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb = fb * T::lit(0.5);
            }
            side = -1;
        }
        if (b - a).abs() <= T::epsilon() * T::lit(4.0) * (a.abs() + b.abs()) {
            break;
        }
    }
    best.filter(|p| p.residual.abs() < tol)
}

/// Energy continuation of the generator set from the linear-mode direction.
///
/// Returns every converged rung, ending at `target`.
pub fn continuation<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    family: &LinearMode<T>,
    target: T,
    cfg: &ModeSearchConfig,
) -> Result<Vec<GeneratorPoint<T>>> {
    if sys.dof() != 2 {
        return Err(Error::InvalidArgument("mode continuation requires a two-dimensional configuration".into()));
    }
    if !(target > T::zero()) {
        return Err(Error::InvalidArgument(format!("target energy must be positive, got {target}")));
    }
    let mut warm = family.c[1].atan2(family.c[0]);
    let mut ladder: Vec<GeneratorPoint<T>> = Vec::new();
    let mut last_good = T::zero();
    let mut e = T::lit(cfg.e_start).min(target);
    let factor = T::lit(cfg.ladder_factor);
    loop {
        let mut attempt = e;
        let mut halvings = 0;
        let point = loop {
            if let Some(p) = solve_rung(sys, warm, attempt, cfg) {
                break p;
            }
            if halvings == cfg.max_halvings || ladder.is_empty() {
                return Err(Error::ContinuationBreakdown { target: target.as_f64(), last_good: last_good.as_f64() });
            }
            attempt = last_good + (attempt - last_good) * T::lit(0.5);
            halvings += 1;
        };
        warm = point.angle;
        last_good = point.energy;
        let reached = point.energy >= target;
        ladder.push(point);
        if reached {
            return Ok(ladder);
        }
        e = (last_good * factor).min(target);
    }
}

/// Nonlinear eigenmode of `family` at energy `e`, with its sampled orbit.
pub fn find_eigenmode<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    family_tag: ModeFamily,
    family: &LinearMode<T>,
    e: T,
    cfg: &ModeSearchConfig,
) -> Result<Mode<T>> {
    let ladder = continuation(sys, family, e, cfg)?;
    let top = ladder.last().expect("continuation returns at least one rung");
    mode_from_generator(sys, family_tag, family, top, cfg)
}

pub(crate) fn mode_from_generator<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    family_tag: ModeFamily,
    family: &LinearMode<T>,
    point: &GeneratorPoint<T>,
    cfg: &ModeSearchConfig,
) -> Result<Mode<T>> {
    let dt = T::lit(cfg.dt);
    let event = find_turning_point(sys, &point.q0, dt, T::lit(cfg.t_max))?;
    let half = event.t_star;
    let half_steps = (half / dt).ceil().to_usize().unwrap_or(1).max(1);
    let steps = 2 * half_steps;
    let period = half + half;
    let h = period / T::from_count(steps);
    let s0 = State::at_rest(point.q0.clone());
    let orbit = flow(sys, &s0, &InputProfile::zero(sys.dof()), h, period)?;
    debug_assert_eq!(orbit.len(), steps + 1);
    Ok(Mode {
        family: family_tag,
        direction: family.c.clone(),
        x_eq: sys.equilibrium(),
        q0: point.q0.clone(),
        half_period: half,
        energy: energy(sys, &s0),
        orbit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linearize, DoublePendulum};
    use crate::modes::linear::linear_modes;
    use approx::assert_abs_diff_eq;

    fn setup() -> (DoublePendulum<f64>, Vec<LinearMode<f64>>) {
        let p = DoublePendulum::default();
        let modes = linear_modes(&linearize(&p)).unwrap();
        (p, modes)
    }

    #[test]
    fn level_set_zero_energy_is_equilibrium() {
        let (p, modes) = setup();
        assert_eq!(rest_point_on_level_set(&p, &modes[0].c, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn level_set_small_energy_is_quadratic() {
        let (p, modes) = setup();
        let c = &modes[0].c;
        let e = 1e-6;
        let q = rest_point_on_level_set(&p, c, e).unwrap();
        let lin = linearize(&p);
        let ckc = dot(c, &lin.k.mul_vec(c));
        let s = norm(&q);
        assert_abs_diff_eq!(s, (2.0 * e / ckc).sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn level_set_hits_energy() {
        let (p, modes) = setup();
        let q = rest_point_on_level_set(&p, &modes[0].c, 2.0).unwrap();
        assert!((p.potential(&q) - 2.0).abs() < 1e-10);
        assert!(dot(&q, &modes[0].c) > 0.0);
    }

    #[test]
    fn level_set_unreachable() {
        let (p, _) = setup();
        // Both links upright is 6g ≈ 58.9 J, the global maximum of V.
        let err = rest_point_on_level_set(&p, &[1.0, 0.0], 100.0).unwrap_err();
        assert!(matches!(err, Error::UnreachableEnergy { .. }));
    }

    #[test]
    fn residual_vanishes_in_linear_regime() {
        let (p, modes) = setup();
        let q = rest_point_on_level_set(&p, &modes[0].c, 1e-6).unwrap();
        let r = shoot_residual(&p, &q, &ModeSearchConfig::default()).unwrap();
        assert!(r.abs() < 1e-6, "residual {r}");
    }

    #[test]
    fn small_energy_mode_is_converged() {
        let (p, modes) = setup();
        let mode = find_eigenmode(&p, ModeFamily::InPhase, &modes[0], 0.5, &ModeSearchConfig::default()).unwrap();
        assert!(mode.closure_error() < 1e-6);
        let (v0, vh) = mode.rest_velocities();
        assert_eq!(v0, 0.0);
        assert!(vh < 1e-8, "half-period velocity {vh}");
        assert!(mode.orbit.energy_drift() < 1e-6);
    }
}
