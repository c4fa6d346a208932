//! Conservative mechanical systems in local coordinates.
//!
//! A system is described by its inertia `M(x)` and potential `V(x)`; the
//! Coriolis/centrifugal force follows from the Christoffel symbols of `M`, and
//! the forced dynamics are
//!
//! ```text
//! ẍ = M(x)⁻¹ (τ − C(x, ẋ) ẋ − ∂V/∂x)
//! ```
//!
//! [`DoublePendulum`] is the point-mass double pendulum hanging from a fixed
//! pivot; every higher module is generic over [`MechanicalSystem`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{all_finite, dot, Real};

/// Generalized position and velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    pub x: Vec<T>,
    pub xdot: Vec<T>,
}

impl<T: Real> State<T> {
    pub fn new(x: Vec<T>, xdot: Vec<T>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
        }
        if x.len() != xdot.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: xdot.len() });
        }
        if !all_finite(&x) || !all_finite(&xdot) {
            return Err(Error::InvalidArgument("state has non-finite entries".into()));
        }
        Ok(Self { x, xdot })
    }

    /// Rest state `(x, 0)`.
    pub fn at_rest(x: Vec<T>) -> Self {
        let n = x.len();
        Self { x, xdot: vec![T::zero(); n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self { x: vec![T::zero(); n], xdot: vec![T::zero(); n] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Stacked `(x, ẋ)`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.dim());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.xdot);
        v
    }

    pub fn from_flat(flat: &[T]) -> Self {
        let n = flat.len() / 2;
        Self { x: flat[..n].to_vec(), xdot: flat[n..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.x) && all_finite(&self.xdot)
    }

    /// Same configuration with negated velocity.
    pub fn reversed(&self) -> Self {
        Self { x: self.x.clone(), xdot: self.xdot.iter().map(|&v| -v).collect() }
    }
}

/// Joint torques.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput<T> {
    pub tau: Vec<T>,
}

impl<T: Real> ControlInput<T> {
    pub fn new(tau: Vec<T>) -> Result<Self> {
        if !all_finite(&tau) {
            return Err(Error::InvalidArgument("control has non-finite entries".into()));
        }
        Ok(Self { tau })
    }

    pub fn zeros(n: usize) -> Self {
        Self { tau: vec![T::zero(); n] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.tau.len()
    }
}

/// Linearized model at the stable equilibrium: `M0 ÿ + K y = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization<T> {
    pub m0: Matrix<T>,
    pub k: Matrix<T>,
    pub x_eq: Vec<T>,
}

/// A conservative mechanical system with configuration-dependent inertia.
///
/// Implementors provide the inertia matrix, the potential, its gradient, the
/// dimension and the stable equilibrium. The derivative hooks default to
/// central differences and should be overridden with closed forms where
/// available since the NMPC sensitivities are built on them.
pub trait MechanicalSystem<T: Real>: Send + Sync {
    fn dof(&self) -> usize;

    /// Stable equilibrium configuration `x_eq` with `V(x_eq) = 0`.
    fn equilibrium(&self) -> Vec<T>;

    fn mass_matrix(&self, x: &[T]) -> Matrix<T>;

    fn potential(&self, x: &[T]) -> T;

    /// `∂V/∂x`.
    fn gravity_gradient(&self, x: &[T]) -> Vec<T>;

    /// `∂M/∂x_k`.
    fn mass_matrix_partial(&self, x: &[T], k: usize) -> Matrix<T> {
        let h = fd_step(x[k]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] = xp[k] + h;
        xm[k] = xm[k] - h;
        self.mass_matrix(&xp).sub(&self.mass_matrix(&xm)).scale(T::one() / (h + h))
    }

    /// `∂²M/∂x_k∂x_l`.
    fn mass_matrix_second_partial(&self, x: &[T], k: usize, l: usize) -> Matrix<T> {
        let h = fd_step(x[l]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[l] = xp[l] + h;
        xm[l] = xm[l] - h;
        self.mass_matrix_partial(&xp, k)
            .sub(&self.mass_matrix_partial(&xm, k))
            .scale(T::one() / (h + h))
    }

    /// Hessian of the potential.
    fn potential_hessian(&self, x: &[T]) -> Matrix<T> {
        let n = self.dof();
        let mut hess = Matrix::zeros(n, n);
        for l in 0..n {
            let h = fd_step(x[l]);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[l] = xp[l] + h;
            xm[l] = xm[l] - h;
            let gp = self.gravity_gradient(&xp);
            let gm = self.gravity_gradient(&xm);
            for i in 0..n {
                hess[(i, l)] = (gp[i] - gm[i]) / (h + h);
            }
        }
        hess
    }

    /// `C(x, ẋ) ẋ` from the Christoffel symbols of the first kind.
    fn coriolis_force(&self, x: &[T], xdot: &[T]) -> Vec<T> {
        let gamma = christoffel(self, x);
        contract_christoffel(&gamma, xdot)
    }

    /// Accelerations and their derivatives. The default assembles them from
    /// the inertia and potential derivative hooks.
    fn acceleration_jacobians(&self, s: &State<T>, u: &ControlInput<T>) -> Result<AccelerationJacobians<T>> {
        generic_acceleration_jacobians(self, s, u)
    }
}

fn fd_step<T: Real>(x: T) -> T {
    T::epsilon().cbrt() * x.abs().max(T::one())
}

/// Christoffel symbols `Γ[i][j][k] = ½(∂_k M_ij + ∂_j M_ik − ∂_i M_jk)`.
pub fn christoffel<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, x: &[T]) -> Vec<Vec<Vec<T>>> {
    let n = sys.dof();
    let dm: Vec<Matrix<T>> = (0..n).map(|k| sys.mass_matrix_partial(x, k)).collect();
    christoffel_from_partials(&dm)
}

fn christoffel_from_partials<T: Real>(dm: &[Matrix<T>]) -> Vec<Vec<Vec<T>>> {
    let n = dm.len();
    let half = T::lit(0.5);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| half * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)])).collect())
                .collect()
        })
        .collect()
}

fn contract_christoffel<T: Real>(gamma: &[Vec<Vec<T>>], v: &[T]) -> Vec<T> {
    gamma
        .iter()
        .map(|gi| {
            let mut s = T::zero();
            for (j, gij) in gi.iter().enumerate() {
                for (k, &g) in gij.iter().enumerate() {
                    s = s + g * v[j] * v[k];
                }
            }
            s
        })
        .collect()
}

/// Physical parameters of the point-mass double pendulum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams<T> {
    pub m1: T,
    pub m2: T,
    pub l1: T,
    pub l2: T,
    pub g: T,
}

impl<T: Real> SystemParams<T> {
    pub fn new(m1: T, m2: T, l1: T, l2: T, g: T) -> Result<Self> {
        let p = Self { m1, m2, l1, l2, g };
        p.validate()?;
        Ok(p)
    }

    /// Unit masses and lengths, `g = 9.81`.
    pub fn unit() -> Self {
        Self { m1: T::one(), m2: T::one(), l1: T::one(), l2: T::one(), g: T::lit(9.81) }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [("m1", self.m1), ("m2", self.m2), ("l1", self.l1), ("l2", self.l2), ("g", self.g)];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Double pendulum with point masses at the link tips; `x = (θ₁, θ₂)` with
/// `θ₂` relative to the first link and `x = 0` hanging straight down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublePendulum<T> {
    pub params: SystemParams<T>,
}

impl<T: Real> DoublePendulum<T> {
    pub fn new(params: SystemParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl<T: Real> Default for DoublePendulum<T> {
    fn default() -> Self {
        Self { params: SystemParams::unit() }
    }
}

impl<T: Real> MechanicalSystem<T> for DoublePendulum<T> {
    fn dof(&self) -> usize {
        2
    }

    fn equilibrium(&self) -> Vec<T> {
        vec![T::zero(), T::zero()]
    }

    fn mass_matrix(&self, x: &[T]) -> Matrix<T> {
        let SystemParams { m1, m2, l1, l2, .. } = self.params;
        let two = T::lit(2.0);
        let c2 = x[1].cos();
        let l12 = l1 + l2;
        let m11 = m1 * l1 * l1 + m2 * l12 * l12 - two * m2 * l1 * l2 * (T::one() - c2);
        let m21 = m2 * (l2 * l2 + l1 * l2 * c2);
        let m22 = m2 * l2 * l2;
        Matrix::from_row_major(2, 2, vec![m11, m21, m21, m22])
    }

    fn potential(&self, x: &[T]) -> T {
        let SystemParams { m1, m2, l1, l2, g } = self.params;
        // V*(x) − V*(0) written so that V(0) is exactly zero.
        (m1 + m2) * g * l1 * (T::one() - x[0].cos()) + m2 * g * l2 * (T::one() - (x[0] + x[1]).cos())
    }

    fn gravity_gradient(&self, x: &[T]) -> Vec<T> {
        let SystemParams { m1, m2, l1, l2, g } = self.params;
        let s12 = (x[0] + x[1]).sin();
        vec![(m1 + m2) * g * l1 * x[0].sin() + m2 * g * l2 * s12, m2 * g * l2 * s12]
    }

    fn mass_matrix_partial(&self, x: &[T], k: usize) -> Matrix<T> {
        if k == 0 {
            return Matrix::zeros(2, 2);
        }
        let SystemParams { m2, l1, l2, .. } = self.params;
        let s2 = x[1].sin();
        let d21 = -m2 * l1 * l2 * s2;
        Matrix::from_row_major(2, 2, vec![d21 + d21, d21, d21, T::zero()])
    }

    fn mass_matrix_second_partial(&self, x: &[T], k: usize, l: usize) -> Matrix<T> {
        if k == 0 || l == 0 {
            return Matrix::zeros(2, 2);
        }
        let SystemParams { m2, l1, l2, .. } = self.params;
        let d21 = -m2 * l1 * l2 * x[1].cos();
        Matrix::from_row_major(2, 2, vec![d21 + d21, d21, d21, T::zero()])
    }

    fn potential_hessian(&self, x: &[T]) -> Matrix<T> {
        let SystemParams { m1, m2, l1, l2, g } = self.params;
        let c12 = m2 * g * l2 * (x[0] + x[1]).cos();
        let h11 = (m1 + m2) * g * l1 * x[0].cos() + c12;
        Matrix::from_row_major(2, 2, vec![h11, c12, c12, c12])
    }

    fn coriolis_force(&self, x: &[T], v: &[T]) -> Vec<T> {
        let SystemParams { m2, l1, l2, .. } = self.params;
        let h = m2 * l1 * l2 * x[1].sin();
        vec![-h * (T::lit(2.0) * v[0] * v[1] + v[1] * v[1]), h * v[0] * v[0]]
    }

    fn acceleration_jacobians(&self, s: &State<T>, u: &ControlInput<T>) -> Result<AccelerationJacobians<T>> {
        let SystemParams { m1, m2, l1, l2, g } = self.params;
        let (x, v) = (&s.x, &s.xdot);
        let two = T::lit(2.0);
        let (s2, c2) = x[1].sin_cos();
        let (s1, c1) = x[0].sin_cos();
        let (s12, c12) = (x[0] + x[1]).sin_cos();
        let b = m2 * l1 * l2;
        let d = m2 * l2 * l2;
        let l12 = l1 + l2;
        let m11 = m1 * l1 * l1 + m2 * l12 * l12 - two * b * (T::one() - c2);
        let m12 = d + b * c2;
        let det = m11 * d - m12 * m12;
        if !(det > T::zero()) {
            return Err(Error::SingularInertia);
        }
        // M⁻¹
        let (i11, i12, i22) = (d / det, -m12 / det, m11 / det);
        let inv = |r0: T, r1: T| (i11 * r0 + i12 * r1, i12 * r0 + i22 * r1);

        let q = two * v[0] * v[1] + v[1] * v[1];
        let cv0 = -b * s2 * q;
        let cv1 = b * s2 * v[0] * v[0];
        let g2 = m2 * g * l2;
        let gr0 = (m1 + m2) * g * l1 * s1 + g2 * s12;
        let gr1 = g2 * s12;
        let (a0, a1) = inv(u.tau[0] - cv0 - gr0, u.tau[1] - cv1 - gr1);

        // ∂/∂θ₁: only gravity depends on it.
        let h11 = (m1 + m2) * g * l1 * c1 + g2 * c12;
        let h12 = g2 * c12;
        let (dx00, dx10) = inv(-h11, -h12);
        // ∂/∂θ₂: inertia, Coriolis and gravity.
        let dm11 = -two * b * s2;
        let dm12 = -b * s2;
        let r0 = b * c2 * q - h12 - (dm11 * a0 + dm12 * a1);
        let r1 = -b * c2 * v[0] * v[0] - h12 - dm12 * a0;
        let (dx01, dx11) = inv(r0, r1);
        // ∂/∂ẋ
        let (dv00, dv10) = inv(two * b * s2 * v[1], -two * b * s2 * v[0]);
        let (dv01, dv11) = inv(two * b * s2 * (v[0] + v[1]), T::zero());

        Ok(AccelerationJacobians {
            acc: vec![a0, a1],
            d_dx: Matrix::from_row_major(2, 2, vec![dx00, dx01, dx10, dx11]),
            d_dxdot: Matrix::from_row_major(2, 2, vec![dv00, dv01, dv10, dv11]),
            d_du: Matrix::from_row_major(2, 2, vec![i11, i12, i12, i22]),
        })
    }
}

/// `½ ẋᵀ M(x) ẋ`.
pub fn kinetic_energy<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, s: &State<T>) -> T {
    let m = sys.mass_matrix(&s.x);
    T::lit(0.5) * dot(&s.xdot, &m.mul_vec(&s.xdot))
}

/// Total energy `½ ẋᵀ M(x) ẋ + V(x)`.
pub fn energy<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, s: &State<T>) -> T {
    kinetic_energy(sys, s) + sys.potential(&s.x)
}

/// Gradient of the total energy with respect to `(x, ẋ)`, stacked.
pub fn energy_gradient<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S, s: &State<T>) -> Vec<T> {
    let n = sys.dof();
    let mut grad = sys.gravity_gradient(&s.x);
    let half = T::lit(0.5);
    for (k, gk) in grad.iter_mut().enumerate() {
        let dm = sys.mass_matrix_partial(&s.x, k);
        *gk = *gk + half * dot(&s.xdot, &dm.mul_vec(&s.xdot));
    }
    let m = sys.mass_matrix(&s.x);
    grad.extend(m.mul_vec(&s.xdot));
    debug_assert_eq!(grad.len(), 2 * n);
    grad
}

/// Joint accelerations of the forced system.
pub fn forward_dynamics<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<Vec<T>> {
    let m = sys.mass_matrix(&s.x);
    let chol = Cholesky::new(&m).ok_or(Error::SingularInertia)?;
    let cv = sys.coriolis_force(&s.x, &s.xdot);
    let grad = sys.gravity_gradient(&s.x);
    let rhs: Vec<T> = (0..s.dim()).map(|i| u.tau[i] - cv[i] - grad[i]).collect();
    Ok(chol.solve(&rhs))
}

pub fn linearize<T: Real, S: MechanicalSystem<T> + ?Sized>(sys: &S) -> Linearization<T> {
    let x_eq = sys.equilibrium();
    Linearization { m0: sys.mass_matrix(&x_eq), k: sys.potential_hessian(&x_eq), x_eq }
}

/// Accelerations together with their partial derivatives.
#[derive(Clone, Debug)]
pub struct AccelerationJacobians<T> {
    pub acc: Vec<T>,
    /// `∂ẍ/∂x`, n×n.
    pub d_dx: Matrix<T>,
    /// `∂ẍ/∂ẋ`, n×n.
    pub d_dxdot: Matrix<T>,
    /// `∂ẍ/∂τ = M⁻¹`, n×n.
    pub d_du: Matrix<T>,
}

/// Accelerations and their derivatives at `(s, u)`.
pub fn acceleration_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<AccelerationJacobians<T>> {
    sys.acceleration_jacobians(s, u)
}

/// Exact derivatives of the forward dynamics from the inertia and potential
/// derivative hooks of `sys`.
pub fn generic_acceleration_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<AccelerationJacobians<T>> {
    let n = sys.dof();
    let x = &s.x;
    let v = &s.xdot;
    let m = sys.mass_matrix(x);
    let chol = Cholesky::new(&m).ok_or(Error::SingularInertia)?;
    let dm: Vec<Matrix<T>> = (0..n).map(|k| sys.mass_matrix_partial(x, k)).collect();
    let gamma = christoffel_from_partials(&dm);
    let cv = contract_christoffel(&gamma, v);
    let grad = sys.gravity_gradient(x);
    let hess = sys.potential_hessian(x);
    let rhs: Vec<T> = (0..n).map(|i| u.tau[i] - cv[i] - grad[i]).collect();
    let acc = chol.solve(&rhs);

    let two = T::lit(2.0);
    let half = T::lit(0.5);
    // ∂(Cẋ)_i/∂ẋ_j = 2 Σ_k Γ_ijk ẋ_k
    let mut dcv_dv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            dcv_dv[(i, j)] = two * dot(&gamma[i][j], v);
        }
    }
    // ∂(Cẋ)_i/∂x_l from second partials of M.
    let d2m: Vec<Vec<Matrix<T>>> =
        (0..n).map(|k| (0..n).map(|l| sys.mass_matrix_second_partial(x, k, l)).collect()).collect();
    let mut rhs_dx = Matrix::zeros(n, n);
    for l in 0..n {
        let dm_a = dm[l].mul_vec(&acc);
        for i in 0..n {
            let mut dcv = T::zero();
            for j in 0..n {
                for k in 0..n {
                    let dgamma = half * (d2m[k][l][(i, j)] + d2m[j][l][(i, k)] - d2m[i][l][(j, k)]);
                    dcv = dcv + dgamma * v[j] * v[k];
                }
            }
            rhs_dx[(i, l)] = -dcv - hess[(i, l)] - dm_a[i];
        }
    }
    let d_dx = chol.solve_matrix(&rhs_dx);
    let d_dxdot = chol.solve_matrix(&dcv_dv).scale(-T::one());
    let d_du = chol.inverse();
    Ok(AccelerationJacobians { acc, d_dx, d_dxdot, d_du })
}

/// Jacobians of the first-order field `f(s, u) = (ẋ, ẍ)`: `(∂f/∂s, ∂f/∂u)`
/// of shapes 2n×2n and 2n×n.
pub fn dynamics_jacobians<T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &S,
    s: &State<T>,
    u: &ControlInput<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let n = sys.dof();
    let jac = acceleration_jacobians(sys, s, u)?;
    let mut a = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = T::one();
    }
    a.set_block(n, 0, &jac.d_dx);
    a.set_block(n, n, &jac.d_dxdot);
    let mut b = Matrix::zeros(2 * n, n);
    b.set_block(n, 0, &jac.d_du);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pendulum() -> DoublePendulum<f64> {
        DoublePendulum::default()
    }

    #[test]
    fn mass_matrix_examples() {
        let p = pendulum();
        let cases = [(0.0, [5.0, 2.0, 2.0, 1.0]), (PI, [1.0, 0.0, 0.0, 1.0]), (FRAC_PI_2, [3.0, 1.0, 1.0, 1.0])];
        for (th2, expected) in cases {
            let m = p.mass_matrix(&[0.3, th2]);
            for (a, e) in m.as_slice().iter().zip(expected) {
                assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn potential_examples() {
        let p = pendulum();
        assert_eq!(p.potential(&[0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(p.potential(&[FRAC_PI_2, 0.0]), 3.0 * 9.81, epsilon = 1e-12);
        assert_abs_diff_eq!(p.potential(&[PI, PI]), 4.0 * 9.81, epsilon = 1e-12);
    }

    #[test]
    fn gravity_gradient_examples() {
        let p = pendulum();
        assert_eq!(p.gravity_gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let g = p.gravity_gradient(&[FRAC_PI_2, 0.0]);
        assert_abs_diff_eq!(g[0], 3.0 * 9.81, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 9.81, epsilon = 1e-12);
    }

    #[test]
    fn forward_dynamics_examples() {
        let p = pendulum();
        let s = State::zeros(2);
        let a = forward_dynamics(&p, &s, &ControlInput::zeros(2)).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        let a = forward_dynamics(&p, &s, &ControlInput::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_examples() {
        let p = pendulum();
        assert_eq!(energy(&p, &State::zeros(2)), 0.0);
        let s = State::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(energy(&p, &s), 2.5, epsilon = 1e-12);
        let s = State::at_rest(vec![FRAC_PI_2, 0.0]);
        assert_abs_diff_eq!(energy(&p, &s), 29.43, epsilon = 1e-12);
    }

    #[test]
    fn linearization_at_rest() {
        let lin = linearize(&pendulum());
        assert_eq!(lin.x_eq, vec![0.0, 0.0]);
        let m0 = [5.0, 2.0, 2.0, 1.0];
        let k = [3.0 * 9.81, 9.81, 9.81, 9.81];
        for (a, e) in lin.m0.as_slice().iter().zip(m0) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
        for (a, e) in lin.k.as_slice().iter().zip(k) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn coriolis_is_quadratic_in_velocity() {
        let p = pendulum();
        let x = [0.4, -1.2];
        assert_eq!(p.coriolis_force(&x, &[0.0, 0.0]), vec![0.0, 0.0]);
        let c1 = p.coriolis_force(&x, &[0.7, -0.3]);
        let c2 = p.coriolis_force(&x, &[1.4, -0.6]);
        for (a, b) in c1.iter().zip(&c2) {
            assert_abs_diff_eq!(4.0 * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_inertia_is_reported() {
        struct Degenerate;
        impl MechanicalSystem<f64> for Degenerate {
            fn dof(&self) -> usize {
                1
            }
            fn equilibrium(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn mass_matrix(&self, _x: &[f64]) -> Matrix<f64> {
                Matrix::zeros(1, 1)
            }
            fn potential(&self, x: &[f64]) -> f64 {
                0.5 * x[0] * x[0]
            }
            fn gravity_gradient(&self, x: &[f64]) -> Vec<f64> {
                vec![x[0]]
            }
        }
        let err = forward_dynamics(&Degenerate, &State::zeros(1), &ControlInput::zeros(1)).unwrap_err();
        assert_eq!(err, Error::SingularInertia);
    }

    #[test]
    fn params_must_be_positive() {
        assert!(SystemParams::new(1.0, 0.0, 1.0, 1.0, 9.81).is_err());
        assert!(SystemParams::new(1.0, 1.0, 1.0, 1.0, -1.0).is_err());
        assert!(State::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn single_precision_model_agrees() {
        let p32: DoublePendulum<f32> = DoublePendulum::default();
        let m = p32.mass_matrix(&[0.0, FRAC_PI_2 as f32]);
        assert_abs_diff_eq!(m[(0, 0)], 3.0f32, epsilon = 1e-5);
        assert_abs_diff_eq!(p32.potential(&[FRAC_PI_2 as f32, 0.0]), 29.43f32, epsilon = 1e-4);
    }

    #[test]
    fn closed_form_jacobians_match_generic_assembly() {
        let p = pendulum();
        for (x, v, tau) in [
            ([0.4, -1.2], [0.7, -0.3], [0.2, -0.5]),
            ([2.9, 0.3], [-3.0, 4.0], [1.0, 1.0]),
            ([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]),
        ] {
            let s = State::new(x.to_vec(), v.to_vec()).unwrap();
            let u = ControlInput::new(tau.to_vec()).unwrap();
            let fast = acceleration_jacobians(&p, &s, &u).unwrap();
            let slow = generic_acceleration_jacobians(&p, &s, &u).unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(fast.acc[i], slow.acc[i], epsilon = 1e-12);
                for j in 0..2 {
                    assert_abs_diff_eq!(fast.d_dx[(i, j)], slow.d_dx[(i, j)], epsilon = 1e-11);
                    assert_abs_diff_eq!(fast.d_dxdot[(i, j)], slow.d_dxdot[(i, j)], epsilon = 1e-12);
                    assert_abs_diff_eq!(fast.d_du[(i, j)], slow.d_du[(i, j)], epsilon = 1e-12);
                }
            }
            let via_christoffel = contract_christoffel(&christoffel(&p, &x), &v);
            let closed = p.coriolis_force(&x, &v);
            for i in 0..2 {
                assert_abs_diff_eq!(via_christoffel[i], closed[i], epsilon = 1e-12);
            }
        }
    }
}
