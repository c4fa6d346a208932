//! Running costs of the two controller variants, written as weighted
//! least-squares residuals `ℓ = ‖r‖²` so the solver can use Gauss-Newton.

use serde::{Deserialize, Serialize};

use crate::dynamics::{energy, energy_gradient, ControlInput, MechanicalSystem, State};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::modes::{projector_c_perp, ModeChart};
use crate::scalar::{dot, norm, Real};

/// Diagonal weights `W_z = diag(w_E, w_x I, w_ẋ I)` and the control weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights<T> {
    pub w_e: T,
    pub w_x: T,
    pub w_xdot: T,
    pub w_f: T,
}

impl<T: Real> CostWeights<T> {
    /// Gains shared by both variants with the given energy weight.
    pub fn with_energy_weight(w_e: T) -> Self {
        Self { w_e, w_x: T::lit(50.0), w_xdot: T::lit(2500.0), w_f: T::lit(225.0) }
    }

    pub fn curved_default() -> Self {
        Self::with_energy_weight(T::lit(25.0))
    }

    pub fn straight_default() -> Self {
        Self::with_energy_weight(T::lit(5.0))
    }

    fn validate(&self) -> Result<()> {
        for (name, w) in [("w_E", self.w_e), ("w_x", self.w_x), ("w_xdot", self.w_xdot), ("w_F", self.w_f)] {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("weight {name} must be non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Which running cost the controller minimizes.
#[derive(Clone, Debug, PartialEq)]
pub enum CostVariant<T> {
    /// Distance to a precomputed mode chart, measured orthogonally to its
    /// tangent.
    Curved { chart: ModeChart<T> },
    /// Distance to the linear-mode line, relaxed as energy grows.
    Straight { direction: Vec<T>, x_eq: Vec<T>, alpha: T, beta: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec<T> {
    pub variant: CostVariant<T>,
    pub e_ref: T,
    pub weights: CostWeights<T>,
}

impl<T: Real> CostSpec<T> {
    pub fn curved(chart: ModeChart<T>, e_ref: T, weights: CostWeights<T>) -> Result<Self> {
        let spec = Self { variant: CostVariant::Curved { chart }, e_ref, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn straight(direction: Vec<T>, x_eq: Vec<T>, alpha: T, beta: T, e_ref: T, weights: CostWeights<T>) -> Result<Self> {
        let spec = Self { variant: CostVariant::Straight { direction, x_eq, alpha, beta }, e_ref, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if let CostVariant::Straight { direction, x_eq, alpha, beta } = &self.variant {
            if !(*alpha >= T::zero()) || !(*beta >= T::zero()) {
                return Err(Error::InvalidArgument("alpha and beta must be non-negative".into()));
            }
            if direction.len() != x_eq.len() {
                return Err(Error::DimensionMismatch { expected: x_eq.len(), got: direction.len() });
            }
            projector_c_perp(direction)?;
        }
        Ok(())
    }

    pub fn is_curved(&self) -> bool {
        matches!(self.variant, CostVariant::Curved { .. })
    }

    /// Length of the weighted residual for an `n`-joint system: energy, two
    /// projected blocks and the control block.
    pub fn residual_len(&self, n: usize) -> usize {
        1 + 3 * n
    }
}

/// Unweighted curved-cost vector
/// `z = [E_ref − E; c⊥(x_m)(x − X(x_m)); c⊥(x_m)(ẋ − Ẋ(x_m, ẋ_m))]`.
pub fn cost_residual_curved<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    chart: &ModeChart<T>,
    s: &State<T>,
    e_ref: T,
) -> Vec<T> {
    let p = chart.project(&s.x, &s.xdot);
    let perp = projector_c_perp_unchecked(&p.tangent);
    let ex: Vec<T> = s.x.iter().zip(&p.position).map(|(&a, &b)| a - b).collect();
    let vel = chart.velocity(p.x_m, p.xdot_m);
    let ev: Vec<T> = s.xdot.iter().zip(&vel).map(|(&a, &b)| a - b).collect();
    let mut z = vec![e_ref - energy(sys, s)];
    z.extend(perp.mul_vec(&ex));
    z.extend(perp.mul_vec(&ev));
    z
}

/// `zᵀ W_z z + w_F ‖u‖²` with the curved residual.
pub fn running_cost_curved<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    spec: &CostSpec<T>,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<T> {
    let CostVariant::Curved { chart } = &spec.variant else {
        return Err(Error::InvalidArgument("curved cost requested for a straight spec".into()));
    };
    let n = s.dim();
    let z = cost_residual_curved(sys, chart, s, spec.e_ref);
    let w = &spec.weights;
    let mut l = w.w_e * z[0] * z[0];
    for i in 0..n {
        l = l + w.w_x * z[1 + i] * z[1 + i] + w.w_xdot * z[1 + n + i] * z[1 + n + i];
    }
    Ok(l + w.w_f * dot(&u.tau, &u.tau))
}

/// Straight cost: energy error plus eigenvector-line distance scaled by
/// `1 − tanh(αE)` and control effort scaled by `tanh(αE) + β`. The control
/// weight acts only through the scaled block.
pub fn running_cost_straight<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    spec: &CostSpec<T>,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<T> {
    let CostVariant::Straight { direction, x_eq, alpha, beta } = &spec.variant else {
        return Err(Error::InvalidArgument("straight cost requested for a curved spec".into()));
    };
    let perp = projector_c_perp(direction)?;
    let e = energy(sys, s);
    let (pos_mult, ctrl_mult) = straight_multipliers(*alpha, *beta, e);
    let dx: Vec<T> = s.x.iter().zip(x_eq).map(|(&a, &b)| a - b).collect();
    let px = perp.mul_vec(&dx);
    let pv = perp.mul_vec(&s.xdot);
    let w = &spec.weights;
    let de = spec.e_ref - e;
    Ok(w.w_e * de * de
        + w.w_x * dot(&px, &px) * pos_mult * pos_mult
        + w.w_xdot * dot(&pv, &pv) * pos_mult * pos_mult
        + w.w_f * dot(&u.tau, &u.tau) * ctrl_mult * ctrl_mult)
}

/// `(1 − tanh(αE), tanh(αE) + β)`.
pub fn straight_multipliers<T: Real>(alpha: T, beta: T, e: T) -> (T, T) {
    let th = (alpha * e).tanh();
    (T::one() - th, th + beta)
}

/// Running cost of either variant.
pub fn running_cost<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    spec: &CostSpec<T>,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<T> {
    match spec.variant {
        CostVariant::Curved { .. } => running_cost_curved(sys, spec, s, u),
        CostVariant::Straight { .. } => running_cost_straight(sys, spec, s, u),
    }
}

fn projector_c_perp_unchecked<T: Real>(c: &[T]) -> Matrix<T> {
    let n = c.len();
    let mut p = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = p[(i, j)] - c[i] * c[j];
        }
    }
    p
}

/// Weighted residual `r` with `ℓ = ‖r‖²` and its Jacobians
/// `(∂r/∂s, ∂r/∂u)`, shapes m×2n and m×n.
pub struct StageResidual<T> {
    pub r: Vec<T>,
    pub dr_ds: Matrix<T>,
    pub dr_du: Matrix<T>,
}

/// Weighted stage residual without derivatives.
pub fn stage_residual<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    spec: &CostSpec<T>,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Vec<T> {
    let n = s.dim();
    let w = &spec.weights;
    let (swe, swx, swv, swf) = (w.w_e.sqrt(), w.w_x.sqrt(), w.w_xdot.sqrt(), w.w_f.sqrt());
    let e = energy(sys, s);
    let mut r = Vec::with_capacity(spec.residual_len(n));
    r.push(swe * (spec.e_ref - e));
    match &spec.variant {
        CostVariant::Curved { chart } => {
            let z = cost_residual_curved_with_energy(chart, s, e, spec.e_ref);
            r.extend(z[1..=n].iter().map(|&v| swx * v));
            r.extend(z[n + 1..].iter().map(|&v| swv * v));
            r.extend(u.tau.iter().map(|&v| swf * v));
        }
        CostVariant::Straight { direction, x_eq, alpha, beta } => {
            let perp = projector_c_perp_unchecked(direction);
            let (g, h) = straight_multipliers(*alpha, *beta, e);
            let dx: Vec<T> = s.x.iter().zip(x_eq).map(|(&a, &b)| a - b).collect();
            r.extend(perp.mul_vec(&dx).into_iter().map(|v| swx * g * v));
            r.extend(perp.mul_vec(&s.xdot).into_iter().map(|v| swv * g * v));
            r.extend(u.tau.iter().map(|&v| swf * h * v));
        }
    }
    r
}

fn cost_residual_curved_with_energy<T: Real>(chart: &ModeChart<T>, s: &State<T>, e: T, e_ref: T) -> Vec<T> {
    let p = chart.project(&s.x, &s.xdot);
    let perp = projector_c_perp_unchecked(&p.tangent);
    let ex: Vec<T> = s.x.iter().zip(&p.position).map(|(&a, &b)| a - b).collect();
    let ev: Vec<T> = s.xdot.iter().zip(&p.jacobian).map(|(&a, &j)| a - j * p.xdot_m).collect();
    let mut z = vec![e_ref - e];
    z.extend(perp.mul_vec(&ex));
    z.extend(perp.mul_vec(&ev));
    z
}

/// Weighted stage residual with exact Jacobians.
pub fn stage_residual_with_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    spec: &CostSpec<T>,
    s: &State<T>,
    u: &ControlInput<T>,
) -> StageResidual<T> {
    let n = s.dim();
    let nx = 2 * n;
    let m = spec.residual_len(n);
    let w = &spec.weights;
    let (swe, swx, swv, swf) = (w.w_e.sqrt(), w.w_x.sqrt(), w.w_xdot.sqrt(), w.w_f.sqrt());
    let e = energy(sys, s);
    let de = energy_gradient(sys, s);

    let mut r = Vec::with_capacity(m);
    let mut dr_ds = Matrix::zeros(m, nx);
    let mut dr_du = Matrix::zeros(m, n);
    r.push(swe * (spec.e_ref - e));
    for j in 0..nx {
        dr_ds[(0, j)] = -swe * de[j];
    }

    match &spec.variant {
        CostVariant::Curved { chart } => {
            let p = chart.project(&s.x, &s.xdot);
            let jac = &p.jacobian;
            let sec = &p.second;
            let c = &p.tangent;
            let len = norm(jac);
            let perp = projector_c_perp_unchecked(c);
            let ex: Vec<T> = s.x.iter().zip(&p.position).map(|(&a, &b)| a - b).collect();
            let ev: Vec<T> = s.xdot.iter().zip(jac).map(|(&a, &j)| a - j * p.xdot_m).collect();

            // dx_m/dx from the stationarity of ½‖x − X(x_m)‖².
            let curvature = dot(jac, jac) - dot(sec, &ex);
            let dm_dx: Vec<T> = if p.clamped || !(curvature > T::zero()) {
                vec![T::zero(); n]
            } else {
                jac.iter().map(|&j| j / curvature).collect()
            };
            // dc/dx_m and dP/dx_m.
            let c_sec = dot(c, sec);
            let dc: Vec<T> = sec.iter().zip(c).map(|(&a, &ci)| (a - ci * c_sec) / len).collect();
            let mut dperp = Matrix::zeros(n, n);
            for i in 0..n {
                for k in 0..n {
                    dperp[(i, k)] = -(dc[i] * c[k] + c[i] * dc[k]);
                }
            }
            // ẋ_m = c(x_m)ᵀ ẋ
            let dc_v = dot(&dc, &s.xdot);
            let dmdot_dx: Vec<T> = dm_dx.iter().map(|&d| dc_v * d).collect();

            let dperp_ex = dperp.mul_vec(&ex);
            let dperp_ev = dperp.mul_vec(&ev);
            let pj = perp.mul_vec(jac);
            let psec = perp.mul_vec(sec);
            for i in 0..n {
                // position block
                r.push(swx * dot(perp.row(i), &ex));
                for k in 0..n {
                    let d = dperp_ex[i] * dm_dx[k] + perp[(i, k)] - pj[i] * dm_dx[k];
                    dr_ds[(1 + i, k)] = swx * d;
                }
            }
            for i in 0..n {
                // velocity block
                r.push(swv * dot(perp.row(i), &ev));
                for k in 0..n {
                    let dx = dperp_ev[i] * dm_dx[k] - psec[i] * p.xdot_m * dm_dx[k] - pj[i] * dmdot_dx[k];
                    dr_ds[(1 + n + i, k)] = swv * dx;
                    let dv = perp[(i, k)] - pj[i] * c[k];
                    dr_ds[(1 + n + i, n + k)] = swv * dv;
                }
            }
            for i in 0..n {
                r.push(swf * u.tau[i]);
                dr_du[(1 + 2 * n + i, i)] = swf;
            }
        }
        CostVariant::Straight { direction, x_eq, alpha, beta } => {
            let perp = projector_c_perp_unchecked(direction);
            let th = (*alpha * e).tanh();
            let g = T::one() - th;
            let h = th + *beta;
            let dth = *alpha * (T::one() - th * th);
            let dx: Vec<T> = s.x.iter().zip(x_eq).map(|(&a, &b)| a - b).collect();
            let px = perp.mul_vec(&dx);
            let pv = perp.mul_vec(&s.xdot);
            for i in 0..n {
                r.push(swx * g * px[i]);
                for j in 0..nx {
                    let mut d = -px[i] * dth * de[j];
                    if j < n {
                        d = d + g * perp[(i, j)];
                    }
                    dr_ds[(1 + i, j)] = swx * d;
                }
            }
            for i in 0..n {
                r.push(swv * g * pv[i]);
                for j in 0..nx {
                    let mut d = -pv[i] * dth * de[j];
                    if j >= n {
                        d = d + g * perp[(i, j - n)];
                    }
                    dr_ds[(1 + n + i, j)] = swv * d;
                }
            }
            for i in 0..n {
                r.push(swf * h * u.tau[i]);
                dr_du[(1 + 2 * n + i, i)] = swf * h;
                for j in 0..nx {
                    dr_ds[(1 + 2 * n + i, j)] = swf * u.tau[i] * dth * de[j];
                }
            }
        }
    }
    debug_assert_eq!(r.len(), m);
    StageResidual { r, dr_ds, dr_du }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DoublePendulum;
    use crate::modes::ModeFamily;
    use approx::assert_abs_diff_eq;

    fn straight_spec(alpha: f64) -> CostSpec<f64> {
        let r = 2f64.sqrt() - 1.0;
        let len = (1.0 + r * r).sqrt();
        CostSpec::straight(vec![1.0 / len, r / len], vec![0.0, 0.0], alpha, 0.1, 14.0, CostWeights::straight_default())
            .unwrap()
    }

    fn curved_chart() -> ModeChart<f64> {
        ModeChart {
            family: ModeFamily::InPhase,
            degree: 3,
            coeffs: vec![vec![0.0, 0.92, 0.0, 0.03], vec![0.0, 0.38, 0.2, -0.05]],
            x_m_range: (-1.2, 1.2),
            energy: 14.0,
            direction: vec![0.9239, 0.3827],
            x_eq: vec![0.0, 0.0],
            fit_residual: 0.0,
        }
    }

    #[test]
    fn straight_cost_at_equilibrium() {
        let p = DoublePendulum::default();
        let l = running_cost_straight(&p, &straight_spec(0.1), &State::zeros(2), &ControlInput::zeros(2)).unwrap();
        assert_abs_diff_eq!(l, 980.0, epsilon = 1e-12);
    }

    #[test]
    fn straight_multiplier_limits() {
        assert_eq!(straight_multipliers(0.1, 0.1, 0.0), (1.0, 0.1));
        let (g, h) = straight_multipliers(0.1, 0.1, 1e6);
        assert_eq!(g, 0.0);
        assert_abs_diff_eq!(h, 1.1, epsilon = 1e-15);
        // α = 0 keeps the weighting constant in energy.
        assert_eq!(straight_multipliers(0.0, 0.1, 30.0), (1.0, 0.1));
    }

    #[test]
    fn curved_control_term_is_isolated() {
        let p = DoublePendulum::default();
        let chart = curved_chart();
        // a chart point with E = E_ref
        let xm = 0.3;
        let x = chart.position(xm);
        let v_dir = chart.velocity(xm, 1.0);
        let kin = 0.5 * dot(&v_dir, &p.mass_matrix(&x).mul_vec(&v_dir));
        let e_ref = 14.0;
        let speed = ((e_ref - p.potential(&x)) / kin).sqrt();
        let s = State::new(x, chart.velocity(xm, speed)).unwrap();
        let mut spec = CostSpec::curved(chart, e_ref, CostWeights::curved_default()).unwrap();
        let l0 = running_cost_curved(&p, &spec, &s, &ControlInput::zeros(2)).unwrap();
        assert!(l0 < 1e-12, "on-chart cost {l0}");
        let l1 = running_cost_curved(&p, &spec, &s, &ControlInput::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(l1, 225.0, epsilon = 1e-9);
        spec.weights.w_f = 0.0;
        assert!(running_cost_curved(&p, &spec, &s, &ControlInput::new(vec![1.0, 0.0]).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn tangent_displacement_leaves_position_block() {
        let p = DoublePendulum::default();
        let chart = curved_chart();
        let x = chart.position(0.2);
        let z0 = cost_residual_curved(&p, &chart, &State::at_rest(x.clone()), 14.0);
        // Moving along the chart keeps the orthogonal error at zero.
        let z1 = cost_residual_curved(&p, &chart, &State::at_rest(chart.position(0.2 + 1e-3)), 14.0);
        assert!(z0[1].abs() < 1e-9 && z0[2].abs() < 1e-9);
        assert!(z1[1].abs() < 1e-9 && z1[2].abs() < 1e-9);
    }

    #[test]
    fn variant_mismatch_is_an_error() {
        let p = DoublePendulum::default();
        let spec = straight_spec(0.1);
        assert!(running_cost_curved(&p, &spec, &State::zeros(2), &ControlInput::zeros(2)).is_err());
    }

    #[test]
    fn weighted_residual_reproduces_cost() {
        let p = DoublePendulum::default();
        let s = State::new(vec![0.4, -0.3], vec![1.1, 0.7]).unwrap();
        let u = ControlInput::new(vec![0.3, -0.6]).unwrap();
        for spec in [straight_spec(0.1), CostSpec::curved(curved_chart(), 14.0, CostWeights::curved_default()).unwrap()] {
            let r = stage_residual(&p, &spec, &s, &u);
            let l = running_cost(&p, &spec, &s, &u).unwrap();
            assert_abs_diff_eq!(dot(&r, &r), l, epsilon = 1e-9 * l);
            let rj = stage_residual_with_jacobians(&p, &spec, &s, &u);
            for (a, b) in r.iter().zip(&rj.r) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residual_jacobians_match_finite_differences() {
        let p = DoublePendulum::default();
        let s = State::new(vec![0.4, -0.3], vec![1.1, 0.7]).unwrap();
        let u = ControlInput::new(vec![0.3, -0.6]).unwrap();
        for spec in [straight_spec(0.1), CostSpec::curved(curved_chart(), 14.0, CostWeights::curved_default()).unwrap()] {
            let rj = stage_residual_with_jacobians(&p, &spec, &s, &u);
            let flat = s.to_flat();
            let h = 1e-6;
            for j in 0..4 {
                let mut fp = flat.clone();
                let mut fm = flat.clone();
                fp[j] += h;
                fm[j] -= h;
                let rp = stage_residual(&p, &spec, &State::from_flat(&fp), &u);
                let rm = stage_residual(&p, &spec, &State::from_flat(&fm), &u);
                for i in 0..rp.len() {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    let an = rj.dr_ds[(i, j)];
                    assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "ds[{i},{j}] fd {fd} analytic {an}");
                }
            }
            for j in 0..2 {
                let mut up = u.clone();
                let mut um = u.clone();
                up.tau[j] += h;
                um.tau[j] -= h;
                let rp = stage_residual(&p, &spec, &s, &up);
                let rm = stage_residual(&p, &spec, &s, &um);
                for i in 0..rp.len() {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!((fd - rj.dr_du[(i, j)]).abs() <= 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }
}
