//! Dense box-constrained QP by a primal active-set method.
//!
//! ```text
//! minimize   ½ dᵀ H d + gᵀ d
//! subject to lb ≤ d ≤ ub
//! ```
//!
//! `H` must be symmetric positive definite. Iterates stay feasible, and
//! variables in the working set sit exactly on their bound.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxQpSolution<T> {
    pub x: Vec<T>,
    pub active: Vec<Bound>,
    pub iterations: usize,
    pub objective: T,
}

/// Solves the box QP, optionally starting from a guessed working set.
pub fn solve_box_qp<T: Real>(
    h: &Matrix<T>,
    g: &[T],
    lb: &[T],
    ub: &[T],
    warm: Option<&[Bound]>,
) -> Result<BoxQpSolution<T>> {
    let n = g.len();
    if h.rows() != n || h.cols() != n || lb.len() != n || ub.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.rows() });
    }
    if (0..n).any(|i| lb[i] > ub[i]) {
        return Err(Error::Solver("box QP infeasible: lower bound above upper bound".into()));
    }

    let mut active = vec![Bound::Free; n];
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let hint = warm.and_then(|w| w.get(i).copied()).unwrap_or(Bound::Free);
        match hint {
            Bound::Lower => {
                active[i] = Bound::Lower;
                x[i] = lb[i];
            }
            Bound::Upper => {
                active[i] = Bound::Upper;
                x[i] = ub[i];
            }
            Bound::Free => {
                x[i] = T::zero().max(lb[i]).min(ub[i]);
                if lb[i] == ub[i] {
                    active[i] = Bound::Lower;
                    x[i] = lb[i];
                }
            }
        }
    }

    let scale = h.max_abs().max(T::one());
    let step_tol = T::epsilon() * T::lit(1e3);
    let mult_tol = T::epsilon() * T::lit(1e3) * scale;
    let max_iter = 10 * n + 100;
    let free: Vec<usize> = (0..n).filter(|&i| active[i] == Bound::Free).collect();
    let mut chol = FreeCholesky::new(h, free)?;
    // Set after an unblocked full step: the iterate is then the subspace
    // minimizer up to rounding, which on ill-conditioned H can exceed step_tol.
    let mut full_step = false;
    for iter in 0..max_iter {
        let grad: Vec<T> = h.mul_vec(&x).iter().zip(g).map(|(&a, &b)| a + b).collect();

        let mut p = vec![T::zero(); n];
        let rhs: Vec<T> = chol.free.iter().map(|&i| -grad[i]).collect();
        for (a, v) in chol.solve(rhs).into_iter().enumerate() {
            p[chol.free[a]] = v;
        }
        let xnorm = x.iter().fold(T::one(), |m, &v| m.max(v.abs()));
        let pnorm = p.iter().fold(T::zero(), |m, &v| m.max(v.abs()));

        if full_step || pnorm <= step_tol * xnorm {
            full_step = false;
            // Subspace minimizer: check multiplier signs.
            let mut worst = None;
            let mut worst_val = -mult_tol;
            for i in 0..n {
                let lambda = match active[i] {
                    Bound::Free => continue,
                    Bound::Lower if lb[i] == ub[i] => continue,
                    Bound::Lower => grad[i],
                    Bound::Upper => -grad[i],
                };
                if lambda < worst_val {
                    worst_val = lambda;
                    worst = Some(i);
                }
            }
            match worst {
                None => {
                    let hx = h.mul_vec(&x);
                    let objective = (0..n).map(|i| T::lit(0.5) * x[i] * hx[i] + g[i] * x[i]).sum();
                    return Ok(BoxQpSolution { x, active, iterations: iter + 1, objective });
                }
                Some(i) => {
                    active[i] = Bound::Free;
                    chol.append(h, i)?;
                }
            }
            continue;
        }

        // Longest feasible step along p.
        let mut alpha = T::one();
        let mut blocking = None;
        for &i in &chol.free {
            let ratio = if p[i] < T::zero() {
                (lb[i] - x[i]) / p[i]
            } else if p[i] > T::zero() {
                (ub[i] - x[i]) / p[i]
            } else {
                continue;
            };
            if ratio < alpha {
                alpha = ratio.max(T::zero());
                blocking = Some((i, if p[i] < T::zero() { Bound::Lower } else { Bound::Upper }));
            }
        }
        for &i in &chol.free {
            x[i] = (x[i] + alpha * p[i]).max(lb[i]).min(ub[i]);
        }
        full_step = blocking.is_none();
        if let Some((i, side)) = blocking {
            active[i] = side;
            x[i] = if side == Bound::Lower { lb[i] } else { ub[i] };
            chol.remove(i);
        }
    }
    Err(Error::Solver(format!("box QP did not converge in {max_iter} iterations")))
}

/// Cholesky factor of `H` restricted to the free variables, kept up to date
/// as variables enter and leave the working set.
struct FreeCholesky<T> {
    free: Vec<usize>,
    /// Lower triangle, row-major with stride `stride`.
    l: Vec<T>,
    stride: usize,
}

impl<T: Real> FreeCholesky<T> {
    fn new(h: &Matrix<T>, free: Vec<usize>) -> Result<Self> {
        let stride = h.rows();
        let mut chol = Self { free: Vec::with_capacity(stride), l: vec![T::zero(); stride * stride], stride };
        for i in free {
            chol.append(h, i)?;
        }
        Ok(chol)
    }

    fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.stride + j]
    }

    /// Adds variable `j` as the last free index.
    fn append(&mut self, h: &Matrix<T>, j: usize) -> Result<()> {
        let m = self.free.len();
        let s = self.stride;
        let mut diag = h[(j, j)];
        for r in 0..m {
            let mut v = h[(self.free[r], j)];
            for c in 0..r {
                v = v - self.l[r * s + c] * self.l[m * s + c];
            }
            let v = v / self.l[r * s + r];
            self.l[m * s + r] = v;
            diag = diag - v * v;
        }
        if !(diag > T::zero()) {
            return Err(Error::Solver("box QP Hessian is not positive definite".into()));
        }
        self.l[m * s + m] = diag.sqrt();
        self.free.push(j);
        Ok(())
    }

    /// Drops variable `j` from the free set and restores triangularity with
    /// Givens rotations.
    fn remove(&mut self, j: usize) {
        let Some(p) = self.free.iter().position(|&f| f == j) else { return };
        let m = self.free.len();
        let s = self.stride;
        for i in p..m - 1 {
            for c in 0..=i + 1 {
                self.l[i * s + c] = self.l[(i + 1) * s + c];
            }
        }
        for k in p..m - 1 {
            let a = self.l[k * s + k];
            let b = self.l[k * s + k + 1];
            let r = a.hypot(b);
            let (c, sn) = (a / r, b / r);
            for i in k..m - 1 {
                let x = self.l[i * s + k];
                let y = self.l[i * s + k + 1];
                self.l[i * s + k] = c * x + sn * y;
                self.l[i * s + k + 1] = c * y - sn * x;
            }
            self.l[k * s + k + 1] = T::zero();
        }
        for c in 0..m {
            self.l[(m - 1) * s + c] = T::zero();
        }
        self.free.remove(p);
    }

    /// Solves `H_FF y = b` in free-set order.
    fn solve(&self, mut b: Vec<T>) -> Vec<T> {
        let m = self.free.len();
        for i in 0..m {
            let mut v = b[i];
            for c in 0..i {
                v = v - self.at(i, c) * b[c];
            }
            b[i] = v / self.at(i, i);
        }
        for i in (0..m).rev() {
            let mut v = b[i];
            for r in i + 1..m {
                v = v - self.at(r, i) * b[r];
            }
            b[i] = v / self.at(i, i);
        }
        b
    }
}
