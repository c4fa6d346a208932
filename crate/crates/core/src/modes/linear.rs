use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Linearization;
use crate::error::{Error, Result};
use crate::linalg::generalized_symmetric_eigen;
use crate::scalar::{norm, Real};

/// Mode family of a two-joint chain, ordered by linear frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeFamily {
    InPhase,
    AntiPhase,
}

impl ModeFamily {
    /// Index into the frequency-sorted list of linear modes.
    pub fn index(self) -> usize {
        match self {
            ModeFamily::InPhase => 0,
            ModeFamily::AntiPhase => 1,
        }
    }
}

impl fmt::Display for ModeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeFamily::InPhase => "in-phase",
            ModeFamily::AntiPhase => "anti-phase",
        })
    }
}

impl FromStr for ModeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-phase" | "in_phase" | "inphase" => Ok(ModeFamily::InPhase),
            "anti-phase" | "anti_phase" | "antiphase" => Ok(ModeFamily::AntiPhase),
            other => Err(Error::InvalidArgument(format!("unknown mode family `{other}`"))),
        }
    }
}

/// Oscillation of the linearized system along a fixed direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMode<T> {
    /// Angular frequency, rad/s.
    pub omega: T,
    /// Unit direction; the first nonzero entry is positive.
    pub c: Vec<T>,
}

/// Solves `K c = ω² M0 c`; modes are returned by ascending frequency.
pub fn linear_modes<T: Real>(lin: &Linearization<T>) -> Result<Vec<LinearMode<T>>> {
    let (lambdas, vecs) = generalized_symmetric_eigen(&lin.k, &lin.m0)
        .ok_or_else(|| Error::Model("inertia at equilibrium is not symmetric positive definite".into()))?;
    let n = lambdas.len();
    let mut modes = Vec::with_capacity(n);
    for (j, &lambda) in lambdas.iter().enumerate() {
        if !(lambda > T::zero()) {
            return Err(Error::Model(format!("equilibrium is not stable: eigenvalue {lambda}")));
        }
        let mut c = vecs.column(j);
        let len = norm(&c);
        let tiny = T::epsilon() * T::lit(16.0);
        let lead = c.iter().copied().find(|v| v.abs() > tiny).unwrap_or_else(T::one);
        let sign = if lead < T::zero() { -T::one() } else { T::one() };
        for v in c.iter_mut() {
            *v = *v * sign / len;
        }
        modes.push(LinearMode { omega: lambda.sqrt(), c });
    }
    debug_assert_eq!(modes.len(), n);
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linearize, DoublePendulum};
    use crate::linalg::Matrix;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pendulum_modes_match_closed_form() {
        let modes = linear_modes(&linearize(&DoublePendulum::<f64>::default())).unwrap();
        let g = 9.81;
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(modes[0].omega.powi(2), g * (2.0 - s2), epsilon = 1e-9);
        assert_abs_diff_eq!(modes[1].omega.powi(2), g * (2.0 + s2), epsilon = 1e-9);
        assert_abs_diff_eq!(modes[0].c[1] / modes[0].c[0], s2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(modes[1].c[1] / modes[1].c[0], -1.0 - s2, epsilon = 1e-12);
        assert!(modes.iter().all(|m| m.c[0] > 0.0));
    }

    #[test]
    fn rejects_indefinite_inertia() {
        let lin = Linearization {
            m0: Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            k: Matrix::identity(2),
            x_eq: vec![0.0, 0.0],
        };
        assert!(matches!(linear_modes(&lin), Err(Error::Model(_))));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("in-phase".parse::<ModeFamily>().unwrap(), ModeFamily::InPhase);
        assert_eq!("anti-phase".parse::<ModeFamily>().unwrap(), ModeFamily::AntiPhase);
        assert!("sideways".parse::<ModeFamily>().is_err());
        assert_eq!(ModeFamily::AntiPhase.to_string(), "anti-phase");
    }
}
