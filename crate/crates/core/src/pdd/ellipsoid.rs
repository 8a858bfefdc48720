//! Dual ellipsoid solver for power-constrained convex quadratic programs.
//!
//! Solves
//! `min Re Tr(X^H A X) - 2 Re Tr(B^H X)` subject to
//! `Re Tr(X^H C_i X) + 2 Re Tr(D_i^H X) <= cap_i`
//! by running the ellipsoid method over the multipliers `lambda >= 0`,
//! with the primal map `X(lambda) = (A + sum lambda_i C_i)^-1 (B - sum lambda_i D_i)`.

use nalgebra::{DMatrix, DVector};

use crate::numerics::{c64, solve_hermitian, CMatrix};

use super::SubproblemError;

/// Relative slack accepted when testing feasibility.
pub const FEAS_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 200;

/// Subgradient selection when `lambda >= 0` but `X(lambda)` violates a
/// power constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutRule {
    /// Full slack vector, the exact subgradient of the negated dual function.
    Slack,
    /// Componentwise `min{sgn(slack), 0}`.
    SignPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub c: CMatrix,
    pub d: CMatrix,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qcqp {
    pub a: CMatrix,
    pub b: CMatrix,
    pub constraints: Vec<QuadConstraint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub radius: f64,
    pub cut_rule: CutRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 300,
            radius: 10.0,
            cut_rule: CutRule::Slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    pub x: CMatrix,
    /// Multipliers of the original (unnormalized) constraints.
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// True when the incumbent was kept.
    pub kept_incumbent: bool,
}

/// Ellipsoid `{l : (l - center)^T shape^-1 (l - center) <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub iter: usize,
}

impl EllipsoidState {
    pub fn new(n: usize, radius: f64) -> Self {
        Self {
            center: DVector::zeros(n),
            shape: DMatrix::identity(n, n) * (radius * radius),
            iter: 0,
        }
    }

    /// `sqrt(g^T shape g)`, the half-width of the ellipsoid along `g`.
    pub fn width(&self, g: &DVector<f64>) -> f64 {
        (g.transpose() * &self.shape * g)[(0, 0)].max(0.0).sqrt()
    }

    /// Central cut keeping `{l : g^T (l - center) <= 0}`. Requires `n >= 2`.
    pub fn cut(&mut self, g: &DVector<f64>) {
        let n = self.center.len() as f64;
        let width = self.width(g);
        let gh = g / width;
        let pg = &self.shape * &gh;
        self.center -= &pg / (n + 1.0);
        let outer = &pg * pg.transpose();
        self.shape = (&self.shape - outer * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
        self.shape = (&self.shape + self.shape.transpose()) * 0.5;
        self.iter += 1;
    }

    /// Volume ratio of one central cut in dimension `n`.
    pub fn volume_ratio(n: usize) -> f64 {
        let n = n as f64;
        (n * n / (n * n - 1.0)).powf(n) * ((n - 1.0) / (n + 1.0))
    }
}

/// Constraint values `(quadratic, linear)` at `x`, unnormalized.
fn parts(con: &QuadConstraint, x: &CMatrix) -> (f64, f64) {
    let quad = (x.adjoint() * &con.c * x).trace().re;
    let lin = (con.d.adjoint() * x).trace().re;
    (quad.max(0.0), lin)
}

impl Qcqp {
    pub fn objective(&self, x: &CMatrix) -> f64 {
        (x.adjoint() * &self.a * x).trace().re - 2.0 * (self.b.adjoint() * x).trace().re
    }

    /// Constraint values minus caps (`<= 0` means satisfied).
    pub fn constraint_excess(&self, x: &CMatrix) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|con| {
                let (q, l) = parts(con, x);
                q + 2.0 * l - con.cap
            })
            .collect()
    }

    pub fn is_feasible(&self, x: &CMatrix, rel_tol: f64) -> bool {
        self.constraints.iter().all(|con| {
            let (q, l) = parts(con, x);
            q + 2.0 * l <= con.cap + rel_tol * con.cap.abs().max(f64::MIN_POSITIVE)
        })
    }

    fn primal(&self, lambda: &[f64]) -> CMatrix {
        let mut m = self.a.clone();
        let mut rhs = self.b.clone();
        for (con, &l) in self.constraints.iter().zip(lambda) {
            if l != 0.0 {
                m += &con.c * c64(l, 0.0);
                rhs -= &con.d * c64(l, 0.0);
            }
        }
        solve_hermitian(&m, &rhs)
    }

    /// Interval of `t >= 0` for which `t x` is feasible, or `None` when empty.
    fn feasible_scales(&self, x: &CMatrix) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        for con in &self.constraints {
            let (q, l) = parts(con, x);
            if q > 0.0 {
                let disc = l * l + q * con.cap;
                if disc < 0.0 {
                    return None;
                }
                let r = disc.sqrt();
                // Roots of q t^2 + 2 l t - cap, each in its cancellation-free form.
                let (a, b) = if l > 0.0 {
                    ((-l - r) / q, con.cap / (l + r))
                } else if r - l > 0.0 {
                    (-con.cap / (r - l), (r - l) / q)
                } else {
                    (0.0, 0.0)
                };
                lo = lo.max(a);
                hi = hi.min(b);
            } else if l > 0.0 {
                hi = hi.min(con.cap / (2.0 * l));
            } else if l < 0.0 {
                lo = lo.max(con.cap / (2.0 * l));
            } else if con.cap < 0.0 {
                return None;
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Best multiple `t x` with `t` in the feasible range; returns `(tx, f(tx))`.
    fn best_scaled(&self, x: &CMatrix) -> Option<(CMatrix, f64)> {
        let (lo, hi) = self.feasible_scales(x)?;
        let qa = (x.adjoint() * &self.a * x).trace().re;
        let lb = (self.b.adjoint() * x).trace().re;
        let t = if qa > 0.0 {
            (lb / qa).clamp(lo, hi)
        } else if lb > 0.0 {
            hi
        } else {
            lo
        };
        if !t.is_finite() {
            return None;
        }
        let tx = x * c64(t, 0.0);
        let f = t * t * qa - 2.0 * t * lb;
        Some((tx, f))
    }

    /// Copy with constraints divided by their caps and objective divided by
    /// a bound on its optimal magnitude, so the optimal multipliers sum to at
    /// most one whenever `X = 0` is strictly feasible.
    fn normalized(&self) -> (Qcqp, f64, Vec<f64>) {
        let mut cap_scales = Vec::with_capacity(self.constraints.len());
        let constraints = self
            .constraints
            .iter()
            .map(|con| {
                let s = if con.cap.abs() > 0.0 { con.cap.abs() } else { 1.0 };
                cap_scales.push(s);
                QuadConstraint {
                    c: &con.c / c64(s, 0.0),
                    d: &con.d / c64(s, 0.0),
                    cap: con.cap / s,
                }
            })
            .collect();
        let mut scale = f64::INFINITY;
        if let Some(ch) = self.a.clone().cholesky() {
            let val = (self.b.adjoint() * ch.solve(&self.b)).trace().re;
            if val.is_finite() && val > 0.0 {
                scale = val;
            }
        }
        for con in &self.constraints {
            if let Some(alpha) = scaled_identity(&con.c) {
                if con.d.norm() == 0.0 && con.cap > 0.0 && alpha > 0.0 {
                    scale = scale.min(2.0 * self.b.norm() * (con.cap / alpha).sqrt());
                }
            }
        }
        if !scale.is_finite() || scale <= 0.0 {
            scale = self.b.norm_squared().max(self.a.norm()).max(f64::MIN_POSITIVE);
        }
        let s = c64(scale, 0.0);
        (
            Qcqp {
                a: &self.a / s,
                b: &self.b / s,
                constraints,
            },
            scale,
            cap_scales,
        )
    }

    /// Solves the program. `incumbent`, when feasible, is returned if no
    /// better point is found.
    pub fn solve(
        &self,
        settings: &SolverSettings,
        incumbent: Option<&CMatrix>,
    ) -> Result<QcqpSolution, SubproblemError> {
        if self.b.norm() == 0.0 && self.constraints.iter().all(|c| c.d.norm() == 0.0) {
            let x = CMatrix::zeros(self.b.nrows(), self.b.ncols());
            if self.is_feasible(&x, FEAS_TOL) {
                return Ok(self.finish(x, vec![0.0; self.constraints.len()], 0, incumbent));
            }
        }
        let (norm, obj_scale, cap_scales) = self.normalized();
        let n = norm.constraints.len();
        let zero = vec![0.0; n];
        let x0 = norm.primal(&zero);
        let stationary = (&norm.a * &x0 - &norm.b).norm() <= 1e-9 * norm.b.norm().max(1e-300);
        if stationary && norm.is_feasible(&x0, 0.0) {
            return Ok(self.finish(x0, zero, 0, incumbent));
        }
        let mut best: Option<(CMatrix, f64, Vec<f64>)> = None;
        let consider = |x: &CMatrix, lam: &[f64], best: &mut Option<(CMatrix, f64, Vec<f64>)>| {
            if let Some((tx, f)) = norm.best_scaled(x) {
                if f.is_finite() && best.as_ref().is_none_or(|(_, bf, _)| f < *bf) {
                    *best = Some((tx, f, lam.to_vec()));
                }
            }
        };
        consider(&x0, &zero, &mut best);
        let mut iterations = 0;
        match n {
            0 => {}
            1 => {
                let mut lo = 0.0;
                let mut hi = settings.radius.max(1.0);
                let mut grow = 0;
                while !norm.is_feasible(&norm.primal(&[hi]), 0.0) && grow < 200 {
                    lo = hi;
                    hi *= 2.0;
                    grow += 1;
                }
                for _ in 0..BISECTION_STEPS {
                    iterations += 1;
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let x = norm.primal(&[mid]);
                    if norm.is_feasible(&x, 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-15 * hi.max(1e-300) {
                        break;
                    }
                }
                let x = norm.primal(&[hi]);
                consider(&x, &[hi], &mut best);
            }
            _ => {
                let mut ell = EllipsoidState::new(n, settings.radius);
                for _ in 0..settings.max_iters {
                    iterations += 1;
                    let lam: Vec<f64> = ell.center.iter().copied().collect();
                    let g = if lam.iter().any(|l| *l < 0.0) {
                        DVector::from_iterator(n, lam.iter().map(|l| if *l < 0.0 { -1.0 } else { 0.0 }))
                    } else {
                        let x = norm.primal(&lam);
                        consider(&x, &lam, &mut best);
                        let slack: Vec<f64> = norm.constraint_excess(&x).iter().map(|e| -e).collect();
                        let violated = slack.iter().any(|s| *s < 0.0);
                        if violated && settings.cut_rule == CutRule::SignPattern {
                            DVector::from_iterator(n, slack.iter().map(|s| if *s < 0.0 { -1.0 } else { 0.0 }))
                        } else {
                            DVector::from_vec(slack)
                        }
                    };
                    let width = ell.width(&g);
                    if !(width > 1e-14) {
                        break;
                    }
                    ell.cut(&g);
                    if !ell.center.iter().all(|v| v.is_finite()) {
                        break;
                    }
                }
            }
        }
        match best {
            Some((x, _, lam)) => {
                let lambda = lam.iter().zip(&cap_scales).map(|(l, s)| l / s * obj_scale).collect();
                Ok(self.finish(x, lambda, iterations, incumbent))
            }
            None => match incumbent {
                Some(inc) if self.is_feasible(inc, FEAS_TOL) => Ok(QcqpSolution {
                    x: inc.clone(),
                    lambda: vec![0.0; n],
                    objective: self.objective(inc),
                    iterations,
                    kept_incumbent: true,
                }),
                _ => {
                    let worst = self
                        .constraint_excess(&x0)
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                    Err(SubproblemError::NoFeasibleIterate { violation: worst })
                }
            },
        }
    }

    fn finish(
        &self,
        x: CMatrix,
        lambda: Vec<f64>,
        iterations: usize,
        incumbent: Option<&CMatrix>,
    ) -> QcqpSolution {
        let f = self.objective(&x);
        if let Some(inc) = incumbent {
            if self.is_feasible(inc, FEAS_TOL) {
                let fi = self.objective(inc);
                if fi < f {
                    return QcqpSolution {
                        x: inc.clone(),
                        lambda,
                        objective: fi,
                        iterations,
                        kept_incumbent: true,
                    };
                }
            }
        }
        QcqpSolution {
            x,
            lambda,
            objective: f,
            iterations,
            kept_incumbent: false,
        }
    }
}

/// Returns `alpha` when `c = alpha I`.
fn scaled_identity(c: &CMatrix) -> Option<f64> {
    if !c.is_square() {
        return None;
    }
    let alpha = c[(0, 0)].re;
    let n = c.nrows();
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { alpha } else { 0.0 };
            if (c[(i, j)] - c64(expected, 0.0)).norm() > 1e-14 * alpha.abs() {
                return None;
            }
        }
    }
    Some(alpha)
}
