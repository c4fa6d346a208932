use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::modes::linear::ModeFamily;
use crate::modes::search::Mode;
use crate::scalar::{dot, norm, Real};

pub const DEFAULT_CHART_DEGREE: usize = 9;

const GRID_POINTS: usize = 64;
const GOLDEN_TOL: f64 = 1e-10;

/// Polynomial chart of one eigenmode over the scalar coordinate
/// `x_m = cᵀ(x − x_eq)`.
///
/// `X(x_m)` gives the configuration, `J(x_m) = dX/dx_m` the (unnormalized)
/// tangent, and `Ẋ(x_m, ẋ_m) = J(x_m) ẋ_m` the velocity on the mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeChart<T> {
    pub family: ModeFamily,
    pub degree: usize,
    /// Per joint, coefficients of ascending powers of `x_m`.
    pub coeffs: Vec<Vec<T>>,
    pub x_m_range: (T, T),
    pub energy: T,
    /// Linear-mode direction defining `x_m`.
    pub direction: Vec<T>,
    pub x_eq: Vec<T>,
    /// Largest configuration reconstruction error over the fitted samples, rad.
    pub fit_residual: T,
}

/// Chart quantities at a projected point.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint<T> {
    pub x_m: T,
    pub xdot_m: T,
    /// Whether the minimizer sits on the boundary of `x_m_range`.
    pub clamped: bool,
    pub position: Vec<T>,
    pub jacobian: Vec<T>,
    pub second: Vec<T>,
    pub tangent: Vec<T>,
}

fn horner<T: Real>(coeffs: &[T], t: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &a| acc * t + a)
}

fn derivative_coeffs<T: Real>(coeffs: &[T]) -> Vec<T> {
    coeffs.iter().enumerate().skip(1).map(|(k, &a)| a * T::from_count(k)).collect()
}

impl<T: Real> ModeChart<T> {
    /// The straight chart `X(x_m) = x_eq + c x_m` of a linear mode.
    pub fn linear(family: ModeFamily, direction: &[T], x_eq: &[T], x_m_range: (T, T), energy: T) -> Self {
        let coeffs = direction.iter().zip(x_eq).map(|(&c, &x0)| vec![x0, c]).collect();
        Self {
            family,
            degree: 1,
            coeffs,
            x_m_range,
            energy,
            direction: direction.to_vec(),
            x_eq: x_eq.to_vec(),
            fit_residual: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// `cᵀ(x − x_eq)`.
    pub fn linear_coordinate(&self, x: &[T]) -> T {
        self.direction.iter().zip(x.iter().zip(&self.x_eq)).map(|(&c, (&xi, &x0))| c * (xi - x0)).sum()
    }

    pub fn position(&self, x_m: T) -> Vec<T> {
        self.coeffs.iter().map(|c| horner(c, x_m)).collect()
    }

    /// `dX/dx_m`.
    pub fn jacobian(&self, x_m: T) -> Vec<T> {
        self.coeffs.iter().map(|c| horner(&derivative_coeffs(c), x_m)).collect()
    }

    /// `d²X/dx_m²`.
    pub fn second_derivative(&self, x_m: T) -> Vec<T> {
        self.coeffs.iter().map(|c| horner(&derivative_coeffs(&derivative_coeffs(c)), x_m)).collect()
    }

    /// Unit tangent `c(x_m)`.
    pub fn tangent(&self, x_m: T) -> Vec<T> {
        let j = self.jacobian(x_m);
        let len = norm(&j);
        j.into_iter().map(|v| v / len).collect()
    }

    /// `Ẋ(x_m, ẋ_m) = J(x_m) ẋ_m`.
    pub fn velocity(&self, x_m: T, xdot_m: T) -> Vec<T> {
        self.jacobian(x_m).into_iter().map(|v| v * xdot_m).collect()
    }

    fn distance_sq(&self, x: &[T], x_m: T) -> T {
        self.position(x_m).iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum()
    }

    /// Closest chart parameter to configuration `x`, clamped to the range.
    pub fn closest_parameter(&self, x: &[T]) -> (T, bool) {
        let (lo, hi) = self.x_m_range;
        let width = hi - lo;
        let step = width / T::from_count(GRID_POINTS);
        let mut best_i = 0;
        let mut best_d = self.distance_sq(x, lo);
        for i in 1..=GRID_POINTS {
            let d = self.distance_sq(x, lo + step * T::from_count(i));
            if d < best_d {
                best_d = d;
                best_i = i;
            }
        }
        // Golden section inside the neighbouring grid cells.
        let mut a = lo + step * T::from_count(best_i.saturating_sub(1));
        let mut b = (lo + step * T::from_count((best_i + 1).min(GRID_POINTS))).min(hi);
        let inv_phi = T::lit(0.5 * (5f64.sqrt() - 1.0));
        let tol = T::lit(GOLDEN_TOL) * width.max(T::one());
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.distance_sq(x, c);
        let mut fd = self.distance_sq(x, d);
        while (b - a).abs() > tol {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.distance_sq(x, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.distance_sq(x, d);
            }
        }
        let mid = (a + b) * T::lit(0.5);
        let (mut m, _) = [lo, hi].into_iter().fold((mid, self.distance_sq(x, mid)), |best, edge| {
            let fe = self.distance_sq(x, edge);
            if fe < best.1 { (edge, fe) } else { best }
        });

        // Newton polish on g(x_m) = dX/dx_mᵀ (X − x) = 0, accepted while |g| shrinks.
        let stationarity = |m: T| {
            let err: Vec<T> = self.position(m).iter().zip(x).map(|(&p, &xi)| p - xi).collect();
            (dot(&self.jacobian(m), &err), dot(&self.second_derivative(m), &err))
        };
        let (mut g, mut s2) = stationarity(m);
        for _ in 0..8 {
            let jac = self.jacobian(m);
            let h = s2 + dot(&jac, &jac);
            if !(h > T::zero()) || g == T::zero() {
                break;
            }
            let cand = (m - g / h).max(lo).min(hi);
            let (gc, sc) = stationarity(cand);
            if !(gc.abs() < g.abs()) {
                break;
            }
            m = cand;
            g = gc;
            s2 = sc;
        }
        let clamped = m <= lo || m >= hi;
        (m, clamped)
    }

    /// Projects a state onto the chart: `x_m` is the closest parameter and
    /// `ẋ_m = c(x_m)ᵀ ẋ`.
    pub fn project(&self, x: &[T], xdot: &[T]) -> ChartPoint<T> {
        let (x_m, clamped) = self.closest_parameter(x);
        let jacobian = self.jacobian(x_m);
        let len = norm(&jacobian);
        let tangent: Vec<T> = jacobian.iter().map(|&v| v / len).collect();
        ChartPoint {
            x_m,
            xdot_m: dot(&tangent, xdot),
            clamped,
            position: self.position(x_m),
            second: self.second_derivative(x_m),
            jacobian,
            tangent,
        }
    }
}

/// Serializable view of a mode and its chart; coefficients ascend in powers
/// of `x_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartExport {
    pub family: ModeFamily,
    pub energy: f64,
    pub q0: Vec<f64>,
    pub half_period: f64,
    pub degree: usize,
    #[serde(rename = "coeffs_X")]
    pub coeffs_x: Vec<Vec<f64>>,
    pub x_m_range: [f64; 2],
    pub direction: Vec<f64>,
    pub x_eq: Vec<f64>,
    pub fit_residual: f64,
}

impl ChartExport {
    pub fn new<T: Real>(mode: &Mode<T>, chart: &ModeChart<T>) -> Self {
        let v = |xs: &[T]| xs.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        Self {
            family: chart.family,
            energy: chart.energy.as_f64(),
            q0: v(&mode.q0),
            half_period: mode.half_period.as_f64(),
            degree: chart.degree,
            coeffs_x: chart.coeffs.iter().map(|c| v(c)).collect(),
            x_m_range: [chart.x_m_range.0.as_f64(), chart.x_m_range.1.as_f64()],
            direction: v(&chart.direction),
            x_eq: v(&chart.x_eq),
            fit_residual: chart.fit_residual.as_f64(),
        }
    }

    pub fn to_chart(&self) -> ModeChart<f64> {
        ModeChart {
            family: self.family,
            degree: self.degree,
            coeffs: self.coeffs_x.clone(),
            x_m_range: (self.x_m_range[0], self.x_m_range[1]),
            energy: self.energy,
            direction: self.direction.clone(),
            x_eq: self.x_eq.clone(),
            fit_residual: self.fit_residual,
        }
    }
}

/// Least-squares polynomial chart of a mode's orbit.
pub fn fit_chart<T: Real>(mode: &Mode<T>, degree: usize) -> Result<ModeChart<T>> {
    fit_chart_to_path(mode.family, &mode.direction, &mode.x_eq, &mode.orbit.path(), mode.energy, degree)
}

pub(crate) fn fit_chart_to_path<T: Real>(
    family: ModeFamily,
    direction: &[T],
    x_eq: &[T],
    path: &[Vec<T>],
    energy: T,
    degree: usize,
) -> Result<ModeChart<T>> {
    if degree < 3 {
        return Err(Error::InvalidArgument(format!("chart degree must be at least 3, got {degree}")));
    }
    let n = direction.len();
    let coord = |x: &[T]| -> T { direction.iter().zip(x.iter().zip(x_eq)).map(|(&c, (&xi, &x0))| c * (xi - x0)).sum() };
    let xs: Vec<T> = path.iter().map(|x| coord(x)).collect();
    let lo = xs.iter().copied().fold(T::infinity(), T::min);
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let scale = lo.abs().max(hi.abs());
    if !(scale > T::zero()) || !(hi > lo) {
        return Err(Error::IllConditionedFit { degree });
    }
    // Fit in t = x_m / scale, then rescale the coefficients.
    let mut vander = Matrix::zeros(xs.len(), degree + 1);
    for (i, &xm) in xs.iter().enumerate() {
        let t = xm / scale;
        let mut p = T::one();
        for k in 0..=degree {
            vander[(i, k)] = p;
            p = p * t;
        }
    }
    let rank_tol = T::epsilon().sqrt() * T::lit(1e-2);
    let mut coeffs = Vec::with_capacity(n);
    for j in 0..n {
        let rhs: Vec<T> = path.iter().map(|x| x[j]).collect();
        let a = least_squares(&vander, &rhs, rank_tol).ok_or(Error::IllConditionedFit { degree })?;
        let mut s = T::one();
        let raw = a
            .into_iter()
            .map(|ak| {
                let v = ak / s;
                s = s * scale;
                v
            })
            .collect();
        coeffs.push(raw);
    }
    let mut chart = ModeChart {
        family,
        degree,
        coeffs,
        x_m_range: (lo, hi),
        energy,
        direction: direction.to_vec(),
        x_eq: x_eq.to_vec(),
        fit_residual: T::zero(),
    };
    chart.fit_residual = path
        .iter()
        .zip(&xs)
        .map(|(x, &xm)| {
            let p = chart.position(xm);
            let d: Vec<T> = p.iter().zip(x).map(|(&a, &b)| a - b).collect();
            norm(&d)
        })
        .fold(T::zero(), T::max);
    Ok(chart)
}

/// `I − c cᵀ` for a unit vector `c`.
pub fn projector_c_perp<T: Real>(c: &[T]) -> Result<Matrix<T>> {
    let len = norm(c);
    if (len - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::NotUnitNorm { norm: len.as_f64() });
    }
    let n = c.len();
    let mut p = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = p[(i, j)] - c[i] * c[j];
        }
    }
    Ok(p)
}
