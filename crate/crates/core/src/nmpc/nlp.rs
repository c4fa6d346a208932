//! Condensed single-shooting form of the optimal-control problem
//!
//! ```text
//! minimize   Σ_{k<N} ℓ(s_k, u_k)
//! subject to s_{k+1} = φ(s_k, u_k),  s_0 fixed,  τ_min ≤ u_k ≤ τ_max
//! ```
//!
//! States are eliminated through the shooting map `φ` (RK4 over one
//! shooting interval), leaving the `N·n` controls as the only unknowns.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, MechanicalSystem, State};
use crate::error::{Error, Result};
use crate::integrate::{rk4_multistep, rk4_multistep_with_jacobians};
use crate::linalg::Matrix;
use crate::nmpc::cost::{stage_residual, stage_residual_with_jacobians, CostSpec};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// Previous solution shifted by one stage, last control repeated.
    Shift,
    /// Zero controls every sample.
    Cold,
}

/// Soft box on the predicted states, added to the objective as
/// `weight · ‖max(0, s − upper) + min(0, s − lower)‖²` per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePenalty<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmpcConfig<T> {
    /// Horizon length N.
    pub horizon: usize,
    pub dt_shoot: T,
    pub substeps: usize,
    pub tau_min: Vec<T>,
    pub tau_max: Vec<T>,
    pub sqp_max_iters: usize,
    pub kkt_tol: T,
    pub warm_start: WarmStart,
    #[serde(default)]
    pub state_penalty: Option<StatePenalty<T>>,
}

impl<T: Real> NmpcConfig<T> {
    /// N = 80, 25 ms shooting interval with 5 RK4 substeps, symmetric torque
    /// limit on every joint.
    pub fn standard(n: usize, tau_limit: T) -> Self {
        Self {
            horizon: 80,
            dt_shoot: T::lit(0.025),
            substeps: 5,
            tau_min: vec![-tau_limit; n],
            tau_max: vec![tau_limit; n],
            sqp_max_iters: 30,
            kkt_tol: T::lit(1e-4),
            warm_start: WarmStart::Shift,
            state_penalty: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.dt_shoot > T::zero()) || !self.dt_shoot.is_finite() {
            return Err(Error::InvalidArgument(format!("dt_shoot must be positive, got {}", self.dt_shoot)));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        if self.sqp_max_iters == 0 {
            return Err(Error::InvalidArgument("sqp_max_iters must be at least 1".into()));
        }
        if !(self.kkt_tol > T::zero()) {
            return Err(Error::InvalidArgument("kkt_tol must be positive".into()));
        }
        for v in [&self.tau_min, &self.tau_max] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        if (0..n).any(|i| !(self.tau_min[i] < self.tau_max[i])) {
            return Err(Error::InvalidArgument("tau_min must be below tau_max on every joint".into()));
        }
        if let Some(p) = &self.state_penalty {
            if p.lower.len() != 2 * n || p.upper.len() != 2 * n {
                return Err(Error::DimensionMismatch { expected: 2 * n, got: p.lower.len().min(p.upper.len()) });
            }
            if !(p.weight >= T::zero()) || (0..2 * n).any(|i| p.lower[i] > p.upper[i]) {
                return Err(Error::InvalidArgument("state penalty needs weight ≥ 0 and lower ≤ upper".into()));
            }
        }
        Ok(())
    }
}

/// Objective value, gradient and Gauss-Newton Hessian of the condensed
/// problem at one control sequence.
#[derive(Clone, Debug)]
pub struct Condensed<T> {
    pub states: Vec<State<T>>,
    pub objective: T,
    pub gradient: Vec<T>,
    pub hessian: Matrix<T>,
}

/// One horizon problem: system, cost, settings and the pinned initial state.
pub struct Nlp<'a, T: Real, S: MechanicalSystem<T> + ?Sized> {
    pub sys: &'a S,
    pub spec: &'a CostSpec<T>,
    pub cfg: &'a NmpcConfig<T>,
    pub s0: State<T>,
}

pub fn build_nlp<'a, T: Real, S: MechanicalSystem<T> + ?Sized>(
    sys: &'a S,
    spec: &'a CostSpec<T>,
    cfg: &'a NmpcConfig<T>,
    s0: State<T>,
) -> Result<Nlp<'a, T, S>> {
    let n = sys.dof();
    cfg.validate(n)?;
    spec.validate()?;
    if s0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s0.dim() });
    }
    if !s0.is_finite() {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    Ok(Nlp { sys, spec, cfg, s0 })
}

impl<'a, T: Real, S: MechanicalSystem<T> + ?Sized> Nlp<'a, T, S> {
    pub fn dof(&self) -> usize {
        self.sys.dof()
    }

    /// Number of scalar decision variables, `N·n`.
    pub fn num_vars(&self) -> usize {
        self.cfg.horizon * self.dof()
    }

    pub fn lower_bounds(&self) -> Vec<T> {
        self.cfg.tau_min.iter().cycle().take(self.num_vars()).copied().collect()
    }

    pub fn upper_bounds(&self) -> Vec<T> {
        self.cfg.tau_max.iter().cycle().take(self.num_vars()).copied().collect()
    }

    fn control(&self, u: &[T], k: usize) -> ControlInput<T> {
        let n = self.dof();
        ControlInput { tau: u[k * n..(k + 1) * n].to_vec() }
    }

    fn step(&self, s: &State<T>, u: &ControlInput<T>) -> Result<State<T>> {
        let next = rk4_multistep(self.sys, s, u, self.cfg.dt_shoot, self.cfg.substeps)?;
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::Solver("prediction diverged".into()))
        }
    }

    /// Predicted states `s_0 .. s_N`.
    pub fn rollout(&self, u: &[T]) -> Result<Vec<State<T>>> {
        self.check_len(u)?;
        let mut states = Vec::with_capacity(self.cfg.horizon + 1);
        states.push(self.s0.clone());
        for k in 0..self.cfg.horizon {
            let next = self.step(&states[k], &self.control(u, k))?;
            states.push(next);
        }
        Ok(states)
    }

    fn check_len(&self, u: &[T]) -> Result<()> {
        if u.len() != self.num_vars() {
            return Err(Error::DimensionMismatch { expected: self.num_vars(), got: u.len() });
        }
        Ok(())
    }

    fn penalty_residual(&self, s: &State<T>) -> Vec<T> {
        let Some(p) = &self.cfg.state_penalty else { return Vec::new() };
        let sw = p.weight.sqrt();
        s.to_flat()
            .iter()
            .enumerate()
            .map(|(i, &v)| sw * ((v - p.upper[i]).max(T::zero()) + (v - p.lower[i]).min(T::zero())))
            .collect()
    }

    /// Objective along the rollout of `u`, together with the states.
    pub fn objective_and_states(&self, u: &[T]) -> Result<(T, Vec<State<T>>)> {
        let states = self.rollout(u)?;
        let mut j = T::zero();
        for k in 0..self.cfg.horizon {
            let r = stage_residual(self.sys, self.spec, &states[k], &self.control(u, k));
            j = j + r.iter().map(|&v| v * v).sum();
            j = j + self.penalty_residual(&states[k]).iter().map(|&v| v * v).sum();
        }
        Ok((j, states))
    }

    pub fn objective(&self, u: &[T]) -> Result<T> {
        Ok(self.objective_and_states(u)?.0)
    }

    /// Exact gradient and Gauss-Newton Hessian `2 Σ G_kᵀ G_k` with
    /// `G_k = ∂r_k/∂U`, assembled blockwise from the stage quadratic terms and
    /// the shooting sensitivities `(A_k, B_k)`.
    pub fn condense(&self, u: &[T]) -> Result<Condensed<T>> {
        self.check_len(u)?;
        let n = self.dof();
        let nx = 2 * n;
        let nv = self.num_vars();
        let horizon = self.cfg.horizon;
        let two = T::lit(2.0);

        let mut states = Vec::with_capacity(horizon + 1);
        states.push(self.s0.clone());
        let mut stages: Vec<StageBlocks<T>> = Vec::with_capacity(horizon);
        let mut objective = T::zero();
        for k in 0..horizon {
            let s = &states[k];
            let uk = self.control(u, k);
            let st = stage_residual_with_jacobians(self.sys, self.spec, s, &uk);
            let mut r = st.r;
            let mut rs: Vec<T> = st.dr_ds.as_slice().to_vec();
            let mut ru: Vec<T> = st.dr_du.as_slice().to_vec();
            if let Some((pr, pd)) = self.penalty_jacobian(s) {
                for (i, (&rv, &dv)) in pr.iter().zip(&pd).enumerate() {
                    r.push(rv);
                    let mut row = vec![T::zero(); nx];
                    row[i] = dv;
                    rs.extend(row);
                    ru.extend(std::iter::repeat(T::zero()).take(n));
                }
            }
            let m = r.len();
            objective = objective + r.iter().map(|&v| v * v).sum();

            let mut blk = StageBlocks::new(nx, n);
            for i in 0..m {
                let ri = two * r[i];
                let rsi = &rs[i * nx..(i + 1) * nx];
                let rui = &ru[i * n..(i + 1) * n];
                for a in 0..nx {
                    blk.q_vec[a] = blk.q_vec[a] + ri * rsi[a];
                    let wa = two * rsi[a];
                    if wa != T::zero() {
                        for b in 0..nx {
                            blk.q[a * nx + b] = blk.q[a * nx + b] + wa * rsi[b];
                        }
                    }
                }
                for a in 0..n {
                    blk.r_vec[a] = blk.r_vec[a] + ri * rui[a];
                    let wa = two * rui[a];
                    if wa != T::zero() {
                        for b in 0..nx {
                            blk.s[a * nx + b] = blk.s[a * nx + b] + wa * rsi[b];
                        }
                        for b in 0..n {
                            blk.r[a * n + b] = blk.r[a * n + b] + wa * rui[b];
                        }
                    }
                }
            }
            let (next, a_k, b_k) =
                rk4_multistep_with_jacobians(self.sys, s, &uk, self.cfg.dt_shoot, self.cfg.substeps)?;
            if !next.is_finite() {
                return Err(Error::Solver("prediction diverged".into()));
            }
            blk.a = a_k.as_slice().to_vec();
            blk.b = b_k.as_slice().to_vec();
            stages.push(blk);
            states.push(next);
        }

        // Gradient by the adjoint recursion λ_k = q_k + A_kᵀ λ_{k+1}.
        let mut gradient = vec![T::zero(); nv];
        let mut lambda = vec![T::zero(); nx];
        for k in (0..horizon).rev() {
            let blk = &stages[k];
            for c in 0..n {
                let mut g = blk.r_vec[c];
                for r in 0..nx {
                    g = g + blk.b[r * n + c] * lambda[r];
                }
                gradient[k * n + c] = g;
            }
            let mut next = blk.q_vec.clone();
            for c in 0..nx {
                for r in 0..nx {
                    next[c] = next[c] + blk.a[r * nx + c] * lambda[r];
                }
            }
            lambda = next;
        }

        // Hessian column block j: D_k = ∂s_k/∂u_j forward, then
        // Y_k = Q_k D_k + A_kᵀ Y_{k+1} backward, H_ij = S_i D_i + B_iᵀ Y_{i+1}.
        let mut hessian = Matrix::zeros(nv, nv);
        let mut d_all = vec![T::zero(); horizon * nx * n];
        let mut y = vec![T::zero(); nx * n];
        let mut y_next = vec![T::zero(); nx * n];
        for j in 0..horizon {
            if j + 1 < horizon {
                d_all[(j + 1) * nx * n..(j + 2) * nx * n].copy_from_slice(&stages[j].b);
            }
            for k in j + 1..horizon.saturating_sub(1) {
                let (head, tail) = d_all.split_at_mut((k + 1) * nx * n);
                let dk = &head[k * nx * n..];
                let dn = &mut tail[..nx * n];
                mat_mul(&stages[k].a, dk, dn, nx, nx, n);
            }
            y.iter_mut().for_each(|v| *v = T::zero());
            for i in (j + 1..horizon).rev() {
                let blk = &stages[i];
                let di = &d_all[i * nx * n..(i + 1) * nx * n];
                for a in 0..n {
                    for c in 0..n {
                        let mut h = T::zero();
                        for r in 0..nx {
                            h = h + blk.s[a * nx + r] * di[r * n + c] + blk.b[r * n + a] * y[r * n + c];
                        }
                        hessian[(i * n + a, j * n + c)] = h;
                        hessian[(j * n + c, i * n + a)] = h;
                    }
                }
                mat_mul(&blk.q, di, &mut y_next, nx, nx, n);
                for r in 0..nx {
                    for c in 0..n {
                        let mut acc = y_next[r * n + c];
                        for m in 0..nx {
                            acc = acc + blk.a[m * nx + r] * y[m * n + c];
                        }
                        y_next[r * n + c] = acc;
                    }
                }
                std::mem::swap(&mut y, &mut y_next);
            }
            let blk = &stages[j];
            for a in 0..n {
                for c in 0..n {
                    let mut h = blk.r[a * n + c];
                    for r in 0..nx {
                        h = h + blk.b[r * n + a] * y[r * n + c];
                    }
                    hessian[(j * n + a, j * n + c)] = h;
                }
            }
        }
        Ok(Condensed { states, objective, gradient, hessian })
    }

    /// Penalty residual and its diagonal derivative, if a state penalty is set.
    fn penalty_jacobian(&self, s: &State<T>) -> Option<(Vec<T>, Vec<T>)> {
        let p = self.cfg.state_penalty.as_ref()?;
        let sw = p.weight.sqrt();
        let flat = s.to_flat();
        let mut r = Vec::with_capacity(flat.len());
        let mut d = Vec::with_capacity(flat.len());
        for (i, &v) in flat.iter().enumerate() {
            if v > p.upper[i] {
                r.push(sw * (v - p.upper[i]));
                d.push(sw);
            } else if v < p.lower[i] {
                r.push(sw * (v - p.lower[i]));
                d.push(sw);
            } else {
                r.push(T::zero());
                d.push(T::zero());
            }
        }
        Some((r, d))
    }
}

/// Quadratic model of one stage: `Q = 2R_sᵀR_s`, `S = 2R_uᵀR_s`,
/// `R = 2R_uᵀR_u`, `q = 2R_sᵀr`, `ρ = 2R_uᵀr`, plus the shooting
/// sensitivities.
struct StageBlocks<T> {
    q: Vec<T>,
    s: Vec<T>,
    r: Vec<T>,
    q_vec: Vec<T>,
    r_vec: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Real> StageBlocks<T> {
    fn new(nx: usize, n: usize) -> Self {
        Self {
            q: vec![T::zero(); nx * nx],
            s: vec![T::zero(); n * nx],
            r: vec![T::zero(); n * n],
            q_vec: vec![T::zero(); nx],
            r_vec: vec![T::zero(); n],
            a: Vec::new(),
            b: Vec::new(),
        }
    }
}

/// `out = a · b` for row-major `a` (r×k) and `b` (k×c).
fn mat_mul<T: Real>(a: &[T], b: &[T], out: &mut [T], rows: usize, inner: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = T::zero();
            for m in 0..inner {
                acc = acc + a[i * inner + m] * b[m * cols + j];
            }
            out[i * cols + j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DoublePendulum;
    use crate::nmpc::cost::CostWeights;

    fn straight_spec() -> CostSpec<f64> {
        let r = 2f64.sqrt() - 1.0;
        let len = (1.0 + r * r).sqrt();
        CostSpec::straight(vec![1.0 / len, r / len], vec![0.0, 0.0], 0.1, 0.1, 14.0, CostWeights::straight_default())
            .unwrap()
    }

    #[test]
    fn config_validation() {
        let cfg = NmpcConfig::<f64>::standard(2, 1.0);
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(3).is_err());
        let mut bad = cfg.clone();
        bad.horizon = 0;
        assert!(bad.validate(2).is_err());
        let mut bad = cfg.clone();
        bad.tau_min = vec![1.0, -1.0];
        assert!(bad.validate(2).is_err());
        let mut bad = cfg;
        bad.dt_shoot = 0.0;
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let json = r#"{"horizon":10,"dt_shoot":0.025,"substeps":5,"tau_min":[-1,-1],"tau_max":[1,1],
            "sqp_max_iters":30,"kkt_tol":1e-6,"warm_start":"shift","extra":1}"#;
        assert!(serde_json::from_str::<NmpcConfig<f64>>(json).is_err());
    }

    #[test]
    fn condensed_gradient_matches_finite_differences() {
        let p = DoublePendulum::default();
        let spec = straight_spec();
        let mut cfg = NmpcConfig::standard(2, 1.0);
        cfg.horizon = 10;
        let s0 = State::new(vec![0.3, -0.2], vec![0.5, 1.0]).unwrap();
        let nlp = build_nlp(&p, &spec, &cfg, s0).unwrap();
        let u: Vec<f64> = (0..20).map(|i| 0.8 * ((i as f64) * 0.7).sin()).collect();
        let c = nlp.condense(&u).unwrap();
        assert!((c.objective - nlp.objective(&u).unwrap()).abs() < 1e-9 * c.objective);
        for j in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let fd = (nlp.objective(&up).unwrap() - nlp.objective(&um).unwrap()) / (2.0 * h);
            let rel = (fd - c.gradient[j]).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-4, "component {j}: fd {fd} analytic {}", c.gradient[j]);
        }
        assert!(c.hessian.is_symmetric(1e-9 * c.hessian.max_abs()));
    }

    #[test]
    fn state_penalty_adds_cost_only_outside_box() {
        let p = DoublePendulum::default();
        let spec = straight_spec();
        let mut cfg = NmpcConfig::standard(2, 1.0);
        cfg.horizon = 5;
        let s0 = State::new(vec![0.3, 0.0], vec![0.0, 0.0]).unwrap();
        let u = vec![0.0; 10];
        let base = build_nlp(&p, &spec, &cfg, s0.clone()).unwrap().objective(&u).unwrap();
        cfg.state_penalty =
            Some(StatePenalty { lower: vec![-10.0; 4], upper: vec![10.0; 4], weight: 1e3 });
        let loose = build_nlp(&p, &spec, &cfg, s0.clone()).unwrap().objective(&u).unwrap();
        assert_eq!(base, loose);
        cfg.state_penalty = Some(StatePenalty { lower: vec![-0.1; 4], upper: vec![0.1; 4], weight: 1e3 });
        let tight = build_nlp(&p, &spec, &cfg, s0).unwrap();
        assert!(tight.objective(&u).unwrap() > base);
        let c = tight.condense(&u).unwrap();
        let h = 1e-6;
        let mut up = u.clone();
        up[0] += h;
        let mut um = u.clone();
        um[0] -= h;
        let fd = (tight.objective(&up).unwrap() - tight.objective(&um).unwrap()) / (2.0 * h);
        assert!((fd - c.gradient[0]).abs() < 1e-4 * fd.abs().max(1.0));
    }

    #[test]
    fn hessian_is_gauss_newton_product() {
        let p = DoublePendulum::default();
        let spec = straight_spec();
        let mut cfg = NmpcConfig::standard(2, 1.0);
        cfg.horizon = 6;
        let s0 = State::new(vec![0.3, -0.2], vec![0.5, 1.0]).unwrap();
        let nlp = build_nlp(&p, &spec, &cfg, s0).unwrap();
        let stacked = |u: &[f64]| -> Vec<f64> {
            let states = nlp.rollout(u).unwrap();
            (0..cfg.horizon)
                .flat_map(|k| stage_residual(&p, &spec, &states[k], &ControlInput { tau: u[2 * k..2 * k + 2].to_vec() }))
                .collect()
        };
        let u: Vec<f64> = (0..12).map(|i| 0.5 * ((i as f64) * 1.3).cos()).collect();
        let m = stacked(&u).len();
        let h = 1e-6;
        let mut g = vec![vec![0.0; 12]; m];
        for j in 0..12 {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let (rp, rm) = (stacked(&up), stacked(&um));
            for i in 0..m {
                g[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let c = nlp.condense(&u).unwrap();
        for a in 0..12 {
            for b in 0..12 {
                let gn: f64 = (0..m).map(|i| 2.0 * g[i][a] * g[i][b]).sum();
                let an = c.hessian[(a, b)];
                assert!((gn - an).abs() <= 1e-5 * (1.0 + gn.abs()), "H[{a},{b}] fd {gn} analytic {an}");
            }
        }
    }
}
