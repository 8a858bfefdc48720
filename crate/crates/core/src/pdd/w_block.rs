//! Precoder subproblem.

use crate::channel::ChannelSet;
use crate::excitation::{excitation_matrices, transfers, ReflectionState};
use crate::numerics::{c64, diag_mul_right, identity, CMatrix, CVector};
use crate::objective::{equivalent_channels_aux, AuxiliaryState, Coupling, ProblemStructure};

use super::ellipsoid::{Qcqp, QuadConstraint, SolverSettings};
use super::{Budgets, PddConfig, SubproblemError};

/// `min Tr(W^H A W) - 2 Re Tr(B^H W)` subject to `||W||^2 <= p_bs`,
/// `Tr(W^H C W) <= p1_hat` and `Tr(W^H D W) <= p2_hat`.
///
/// RIS caps are `+inf` when the corresponding constraint is absent.
///
/// With inter-excitation the same two caps are also imposed with the true
/// `Xi1`, `Xi2` of the current reflections (`c_w_exact`, `d_w_exact`), so the
/// precoder can never drive the true surface powers past their budgets while
/// `X`, `Y` still lag behind.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemW {
    pub a_w: CMatrix,
    pub b_w: CMatrix,
    pub c_w: CMatrix,
    pub d_w: CMatrix,
    pub p_bs: f64,
    pub p1_hat: f64,
    pub p2_hat: f64,
    pub c_w_exact: CMatrix,
    pub d_w_exact: CMatrix,
    pub p1_exact: f64,
    pub p2_exact: f64,
}

pub fn build_w_subproblem(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    weights: &[f64],
    budgets: &Budgets,
    structure: &ProblemStructure,
) -> Result<SubproblemW, SubproblemError> {
    let eq = equivalent_channels_aux(ch, refl, aux);
    let k = eq.n_users();
    let lam = CVector::from_fn(k, |i, _| c64(aux.xi[i].norm_sqr(), 0.0));
    let hh = eq.hbar_h.adjoint();
    let a_w = diag_mul_right(&hh, &lam) * &eq.hbar_h;
    let coef = CVector::from_fn(k, |i, _| aux.xi[i] * (weights[i] * (1.0 + aux.gamma[i])).sqrt());
    let b_w = diag_mul_right(&hh, &coef);

    let t = transfers(ch, refl);
    let u = &aux.x_mat * &t.t1;
    let v = &aux.y_mat * &t.t2;
    let c_w = u.adjoint() * &u;
    let d_w = v.adjoint() * &v;
    let (p1_hat, p2_hat) = ris_caps(ch, refl, &aux.x_mat, &aux.y_mat, budgets, structure, &t)?;

    let n = c_w.nrows();
    let (mut c_w_exact, mut d_w_exact) = (CMatrix::zeros(n, n), CMatrix::zeros(n, n));
    let (mut p1_exact, mut p2_exact) = (f64::INFINITY, f64::INFINITY);
    if structure.coupling == Coupling::InterExcitation {
        if let Ok(exc) = excitation_matrices(ch, refl) {
            let (p1, p2) = ris_caps(ch, refl, &exc.xi1, &exc.xi2, budgets, structure, &t)?;
            let u = &exc.xi1 * &t.t1;
            let v = &exc.xi2 * &t.t2;
            c_w_exact = u.adjoint() * &u;
            d_w_exact = v.adjoint() * &v;
            p1_exact = p1;
            p2_exact = p2;
        }
    }
    Ok(SubproblemW {
        a_w,
        b_w,
        c_w,
        d_w,
        p_bs: budgets.p_bs_max,
        p1_hat,
        p2_hat,
        c_w_exact,
        d_w_exact,
        p1_exact,
        p2_exact,
    })
}

fn ris_caps(
    ch: &ChannelSet,
    refl: &ReflectionState,
    x: &CMatrix,
    y: &CMatrix,
    budgets: &Budgets,
    structure: &ProblemStructure,
    t: &crate::excitation::Transfers,
) -> Result<(f64, f64), SubproblemError> {
    let p1 = if structure.power_constrained(0) {
        let noise = ch.noise_ris1 * diag_mul_right(x, &refl.psi1).norm_squared()
            + ch.noise_ris2 * (x * &t.t4).norm_squared();
        budgets.p1_max - noise
    } else {
        f64::INFINITY
    };
    let p2 = if structure.power_constrained(1) {
        let noise = ch.noise_ris2 * diag_mul_right(y, &refl.psi2).norm_squared()
            + ch.noise_ris1 * (y * &t.t3).norm_squared();
        budgets.p2_max - noise
    } else {
        f64::INFINITY
    };
    for (ris, cap) in [(1, p1), (2, p2)] {
        if cap < 0.0 {
            return Err(SubproblemError::InfeasibleSubproblem {
                block: "W",
                detail: format!("noise alone exceeds the RIS {ris} budget by {:.3e} W", -cap),
            });
        }
    }
    Ok((p1, p2))
}

impl SubproblemW {
    pub fn objective(&self, w: &CMatrix) -> f64 {
        (w.adjoint() * &self.a_w * w).trace().re - 2.0 * (self.b_w.adjoint() * w).trace().re
    }

    pub fn to_qcqp(&self) -> Qcqp {
        let n = self.a_w.nrows();
        let zeros = CMatrix::zeros(n, self.b_w.ncols());
        let mut constraints = vec![QuadConstraint {
            c: identity(n),
            d: zeros.clone(),
            cap: self.p_bs,
        }];
        for (c, cap) in [
            (&self.c_w, self.p1_hat),
            (&self.d_w, self.p2_hat),
            (&self.c_w_exact, self.p1_exact),
            (&self.d_w_exact, self.p2_exact),
        ] {
            if cap.is_finite() {
                constraints.push(QuadConstraint {
                    c: c.clone(),
                    d: zeros.clone(),
                    cap,
                });
            }
        }
        Qcqp {
            a: self.a_w.clone(),
            b: self.b_w.clone(),
            constraints,
        }
    }
}

pub fn solve_w_ellipsoid(
    sub: &SubproblemW,
    cfg: &PddConfig,
    incumbent: Option<&CMatrix>,
) -> Result<CMatrix, SubproblemError> {
    let settings = SolverSettings {
        max_iters: cfg.ellipsoid_iters,
        radius: cfg.ellipsoid_radius,
        cut_rule: cfg.cut_rule,
    };
    Ok(sub.to_qcqp().solve(&settings, incumbent)?.x)
}
