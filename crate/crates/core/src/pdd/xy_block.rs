//! Auxiliary-matrix subproblems for X (side 1) and Y (side 2).
//!
//! `min Tr(X M X^H L1) + Tr(X X^H L2) - 2 Re Tr(X L3)` s.t. `Tr(X M X^H) <= P`.
//! With `M = K K^H` and `x = vec(X K)` this is
//! `min x^H A x - 2 Re{b^H x}` s.t. `||x||^2 <= P`, solved through the
//! multiplier of the ball constraint.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::excitation::ReflectionState;
use crate::numerics::{
    self, c64, diag_from, diag_mul_left, diag_mul_right, hermitian_eigen, kron, psd_factor,
    CMatrix, CVector,
};
use crate::objective::{AuxiliaryState, DualState, ProblemStructure};

use super::side::{view, Side};
use super::{Budgets, PddConfig, SubproblemError};

const JITTER: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemX {
    pub which: Side,
    pub m_gram: CMatrix,
    pub l1: CMatrix,
    pub l2: CMatrix,
    pub l3: CMatrix,
    /// `K = Q diag(sqrt(d))`, so `K^H K = diag(d)`.
    pub k_factor: CMatrix,
    /// Diagonal of `K^H K`.
    pub k_gram: Vec<f64>,
    /// `+inf` when the surface power is unconstrained.
    pub p1_cap: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn build_x_subproblem(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    w: &CMatrix,
    weights: &[f64],
    budgets: &Budgets,
    structure: &ProblemStructure,
    which: Side,
) -> Result<SubproblemX, SubproblemError> {
    let sv = view(
        which,
        ch,
        refl,
        aux,
        dual,
        (budgets.p1_max, budgets.p2_max),
        structure,
    );
    let m = sv.m_a();
    let k = aux.xi.len();
    let t_a = sv.t_a();
    let t_b = sv.t_b();
    let t3 = sv.t3();
    let t4 = sv.t4();
    let taw = &t_a * w;
    let psi_a = diag_from(&sv.psi_a);
    let psi_b = diag_from(&sv.psi_b);

    let mut m_gram = &taw * taw.adjoint()
        + &psi_a * psi_a.adjoint() * c64(sv.sigma_a, 0.0)
        + &t4 * t4.adjoint() * c64(sv.sigma_b, 0.0);
    m_gram = numerics::hermitian_part(&m_gram);

    let xi2 = CVector::from_fn(k, |i, _| c64(aux.xi[i].norm_sqr(), 0.0));
    let l1 = diag_mul_right(&sv.hu_a, &xi2) * sv.hu_a.adjoint() / c64(LN_2, 0.0);
    let a = sv.xi_inv_a();
    let l2 = a.adjoint() * &a / c64(2.0 * dual.rho, 0.0);

    let coef = CVector::from_fn(k, |i, _| {
        aux.xi[i].conj() * (weights[i] * (1.0 + aux.gamma[i])).sqrt()
    });
    let signal = diag_mul_right(&taw, &coef) * sv.hu_a.adjoint();
    let cross = &taw * (&t_b * w).adjoint()
        + &psi_a * t3.adjoint() * c64(sv.sigma_a, 0.0)
        + &t4 * psi_b.adjoint() * c64(sv.sigma_b, 0.0);
    let interference = cross * sv.x_b.adjoint() * diag_mul_right(&sv.hu_b, &xi2) * sv.hu_a.adjoint();
    let e = numerics::identity(m) - &sv.gamma_a * c64(dual.rho, 0.0);
    let l3 = (signal - interference) / c64(LN_2, 0.0) + e.adjoint() * &a / c64(2.0 * dual.rho, 0.0);

    let (k_factor, k_gram) = factor_with_jitter(&m_gram)?;
    let p1_cap = if sv.limited_a { sv.cap_a } else { f64::INFINITY };
    Ok(SubproblemX {
        which,
        m_gram,
        l1,
        l2,
        l3,
        k_factor,
        k_gram,
        p1_cap,
    })
}

/// Factor `K` with `K K^H = M`, jittering `M` when `K` is numerically singular.
fn factor_with_jitter(m: &CMatrix) -> Result<(CMatrix, Vec<f64>), SubproblemError> {
    let n = m.nrows();
    let trace = numerics::re_trace(m).max(0.0);
    let mut mm = m.clone();
    if trace == 0.0 {
        mm = numerics::identity(n) * c64(JITTER, 0.0);
    }
    for _ in 0..2 {
        let k = psd_factor(&mm)?;
        let d: Vec<f64> = (0..n).map(|j| k.column(j).norm_squared()).collect();
        let dmax = d.iter().cloned().fold(0.0, f64::max);
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if dmin.sqrt() >= JITTER * dmax.sqrt() && dmin > 0.0 {
            return Ok((k, d));
        }
        let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
        mm += numerics::identity(n) * c64(JITTER * scale, 0.0);
    }
    let k = psd_factor(&mm)?;
    let d = (0..n).map(|j| k.column(j).norm_squared()).collect();
    Ok((k, d))
}

/// Spectral data of the block-diagonal system.
struct Blocks {
    /// Per column j of `X K`: eigenvalues and eigenvectors of `L1 + L2 / d_j`.
    eig: Vec<(Vec<f64>, CMatrix)>,
    /// Coefficients of `b_j` in the eigenbasis.
    coef: Vec<CVector>,
}

impl SubproblemX {
    pub fn dim(&self) -> usize {
        self.l1.nrows()
    }

    /// `K^-1 = diag(d)^-1 K^H`.
    fn k_inv(&self) -> CMatrix {
        let inv = CVector::from_iterator(self.k_gram.len(), self.k_gram.iter().map(|d| c64(1.0 / d, 0.0)));
        diag_mul_left(&inv, &self.k_factor.adjoint())
    }

    /// `b = vec((K^-1 L3)^H)`.
    pub fn b_x_hat(&self) -> CVector {
        numerics::vec(&(self.k_inv() * &self.l3).adjoint())
    }

    /// `A = I kron L1 + ((K^H K)^-1)^T kron L2`.
    pub fn a_x_hat(&self) -> CMatrix {
        let m = self.dim();
        let kk = self.k_factor.adjoint() * &self.k_factor;
        let kk_inv = numerics::solve_hermitian(&kk, &numerics::identity(m));
        kron(&numerics::identity(m), &self.l1) + kron(&kk_inv.transpose(), &self.l2)
    }

    fn blocks(&self) -> Blocks {
        let m = self.dim();
        let b = numerics::unvec(&self.b_x_hat(), m, m).expect("square");
        let mut eig = Vec::with_capacity(m);
        let mut coef = Vec::with_capacity(m);
        for j in 0..m {
            let block = &self.l1 + &self.l2 / c64(self.k_gram[j], 0.0);
            let (vals, vecs) = hermitian_eigen(&block);
            coef.push(vecs.adjoint() * b.column(j));
            eig.push((vals, vecs));
        }
        Blocks { eig, coef }
    }

    fn norm_sq_at(blocks: &Blocks, mu: f64) -> f64 {
        let mut acc = 0.0;
        for ((vals, _), c) in blocks.eig.iter().zip(&blocks.coef) {
            for (lam, ci) in vals.iter().zip(c.iter()) {
                let den = lam + mu;
                acc += if den > 0.0 { ci.norm_sqr() / (den * den) } else if ci.norm_sqr() > 0.0 { f64::INFINITY } else { 0.0 };
            }
        }
        acc
    }

    fn x_hat_at(blocks: &Blocks, mu: f64) -> CMatrix {
        let m = blocks.eig.len();
        let mut xh = CMatrix::zeros(m, m);
        for (j, ((vals, vecs), c)) in blocks.eig.iter().zip(&blocks.coef).enumerate() {
            let scaled = CVector::from_fn(vals.len(), |i, _| {
                let den = vals[i] + mu;
                if den > 0.0 {
                    c[i] / den
                } else {
                    c64(0.0, 0.0)
                }
            });
            xh.set_column(j, &(vecs * scaled));
        }
        xh
    }

    /// Objective in `X`.
    pub fn objective(&self, x: &CMatrix) -> f64 {
        (x * &self.m_gram * x.adjoint() * &self.l1).trace().re
            + (x * x.adjoint() * &self.l2).trace().re
            - 2.0 * (x * &self.l3).trace().re
    }

    /// `Tr(X M X^H)`.
    pub fn power(&self, x: &CMatrix) -> f64 {
        (x * &self.m_gram * x.adjoint()).trace().re
    }

    /// Solves for `(X, mu)`.
    pub fn solve(&self, bisection_tol: f64) -> Result<(CMatrix, f64), SubproblemError> {
        let blocks = self.blocks();
        let cap = self.p1_cap;
        let k_inv = self.k_inv();
        let finish = |mu: f64| (Self::x_hat_at(&blocks, mu) * &k_inv, mu);
        if !cap.is_finite() || Self::norm_sq_at(&blocks, 0.0) <= cap {
            return Ok(finish(0.0));
        }
        if cap <= 0.0 {
            return Err(SubproblemError::InfeasibleSubproblem {
                block: "X",
                detail: format!("power cap {cap:e} is not positive"),
            });
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut doublings = 0;
        while Self::norm_sq_at(&blocks, hi) > cap {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS || !hi.is_finite() {
                return Err(SubproblemError::BracketFailure { block: "X" });
            }
        }
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = Self::norm_sq_at(&blocks, mid);
            if v > cap {
                lo = mid;
            } else {
                hi = mid;
            }
            if (cap - Self::norm_sq_at(&blocks, hi)).abs() <= bisection_tol * cap {
                break;
            }
        }
        Ok(finish(hi))
    }
}

/// Returns the better of the new solution and the incumbent.
pub fn solve_x_bisection(
    sub: &SubproblemX,
    cfg: &PddConfig,
    incumbent: Option<&CMatrix>,
) -> Result<CMatrix, SubproblemError> {
    let (x, _) = sub.solve(cfg.bisection_tol)?;
    if let Some(inc) = incumbent {
        let feasible = !sub.p1_cap.is_finite() || sub.power(inc) <= sub.p1_cap * (1.0 + 1e-9);
        if feasible && sub.objective(inc) < sub.objective(&x) {
            return Ok(inc.clone());
        }
    }
    Ok(x)
}
