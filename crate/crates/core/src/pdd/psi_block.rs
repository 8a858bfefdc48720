//! Reflection-vector subproblems.
//!
//! The variable is `v = diag(Psi_a^H)`, the conjugate of the coefficient
//! vector; solutions are conjugated back before they are stored.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::excitation::ReflectionState;
use crate::numerics::{c64, diag_from, diag_mul_left, identity, CMatrix, CVector};
use crate::objective::{AuxiliaryState, DualState, ProblemStructure};

use super::ellipsoid::{Qcqp, QuadConstraint, SolverSettings};
use super::quadform::QuadForm;
use super::side::{view, Side};
use super::{Budgets, PddConfig, SubproblemError};

/// `min v^H A v - 2 Re{v^H b}` subject to
/// `v^H C v <= p1_cap` (own surface power) and
/// `v^H D v + 2 Re{v^H d_vec} <= p2_cap` (partner surface power).
///
/// Caps are `+inf` when the constraint is absent. `offset` collects the
/// `v`-independent parts of `-f_r` and of the penalty terms that involve
/// `Psi_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemPsi {
    pub which: Side,
    pub a_psi: CMatrix,
    pub b_psi: CVector,
    pub c_psi: CMatrix,
    pub d_psi: CMatrix,
    pub d_vec: CVector,
    pub p1_cap: f64,
    pub p2_cap: f64,
    pub offset: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn build_psi_subproblem(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    w: &CMatrix,
    weights: &[f64],
    budgets: &Budgets,
    structure: &ProblemStructure,
    which: Side,
) -> SubproblemPsi {
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
    let id_m = identity(m);
    let xi_abs = CVector::from_fn(k, |i, _| c64(aux.xi[i].norm(), 0.0));
    let coef = diag_from(&CVector::from_fn(k, |i, _| {
        aux.xi[i].conj() * (weights[i] * (1.0 + aux.gamma[i])).sqrt()
    }));

    let r_a = sv.r_a();
    let r_a_w = &r_a * w;
    let h_a_w = &sv.h_a * w;
    let psi_b_g = diag_mul_left(&sv.psi_b, &sv.g);
    let gh_psi_b = sv.g.adjoint() * diag_from(&sv.psi_b);
    // Rows of the effective channels split into Psi_a-dependent factors.
    let a_u = sv.hu_a.adjoint() * &sv.x_a;
    let b_u = sv.hu_b.adjoint() * &sv.x_b * &psi_b_g;
    let c_sig = sv.hu_b.adjoint() * &sv.x_b * diag_mul_left(&sv.psi_b, &sv.h_b) * w;
    let c_n2 = sv.hu_b.adjoint() * &sv.x_b * diag_from(&sv.psi_b);

    let da_u = diag_mul_left(&xi_abs, &a_u);
    let db_u = diag_mul_left(&xi_abs, &b_u);
    let dc_sig = diag_mul_left(&xi_abs, &c_sig);
    let dc_n2 = diag_mul_left(&xi_abs, &c_n2);
    let d_ab = &da_u + &db_u;

    let mut obj = QuadForm::zeros(m);
    obj.add_norm_sq(1.0 / LN_2, &[(&da_u, &r_a_w), (&db_u, &h_a_w)], Some(&dc_sig));
    obj.add_norm_sq(sv.sigma_a / LN_2, &[(&d_ab, &id_m)], None);
    obj.add_norm_sq(sv.sigma_b / LN_2, &[(&da_u, &gh_psi_b)], Some(&dc_n2));
    obj.add_re_trace(-2.0 / LN_2, &coef, &[(&a_u, &r_a_w), (&b_u, &h_a_w)], Some(&c_sig));

    let inv2rho = 1.0 / (2.0 * dual.rho);
    let rho = c64(dual.rho, 0.0);
    if sv.coupled {
        let neg = -identity(m);
        let v1 = &gh_psi_b * &sv.g * &sv.x_a;
        let c1 = &sv.x_a - &id_m + &sv.gamma_a * rho;
        obj.add_norm_sq(inv2rho, &[(&neg, &v1)], Some(&c1));
        let mb = sv.psi_b.len();
        let u2 = -psi_b_g.clone();
        let v2 = sv.g.adjoint() * &sv.x_b;
        let c2 = &sv.x_b - identity(mb) + &sv.gamma_b * rho;
        obj.add_norm_sq(inv2rho, &[(&u2, &v2)], Some(&c2));
    }
    let c_phi = diag_from(&(&sv.eta_a * rho - &sv.phi_a));
    obj.add_norm_sq(inv2rho, &[(&id_m, &id_m)], Some(&c_phi));
    obj.symmetrize();

    let mut own = QuadForm::zeros(m);
    let mut p1_cap = f64::INFINITY;
    if sv.limited_a {
        own.add_norm_sq(1.0, &[(&sv.x_a, &r_a_w)], None);
        own.add_norm_sq(sv.sigma_a, &[(&sv.x_a, &id_m)], None);
        own.add_norm_sq(sv.sigma_b, &[(&sv.x_a, &gh_psi_b)], None);
        own.symmetrize();
        p1_cap = sv.cap_a;
    }
    let mut other = QuadForm::zeros(m);
    let mut p2_cap = f64::INFINITY;
    if sv.limited_b {
        let xb_psi_b_g = &sv.x_b * &psi_b_g;
        let c_other = &sv.x_b * diag_mul_left(&sv.psi_b, &sv.h_b) * w;
        other.add_norm_sq(1.0, &[(&xb_psi_b_g, &h_a_w)], Some(&c_other));
        other.add_norm_sq(sv.sigma_a, &[(&xb_psi_b_g, &id_m)], None);
        other.add_const(sv.sigma_b * (&sv.x_b * diag_from(&sv.psi_b)).norm_squared());
        other.symmetrize();
        p2_cap = sv.cap_b - other.c0;
    }

    // f_r terms that do not depend on Psi_a.
    let mut fr_const = 0.0;
    for i in 0..k {
        let g = aux.gamma[i];
        fr_const += weights[i] * (1.0 + g).log2() - weights[i] * g / LN_2;
        fr_const -= aux.xi[i].norm_sqr() * ch.noise_users[i] / LN_2;
    }
    SubproblemPsi {
        which,
        a_psi: obj.q,
        b_psi: -obj.l,
        c_psi: own.q,
        d_psi: other.q,
        d_vec: other.l,
        p1_cap,
        p2_cap,
        offset: obj.c0 - fr_const,
    }
}

impl SubproblemPsi {
    /// Objective at the plain coefficient vector `p`.
    pub fn objective_coeffs(&self, p: &CVector) -> f64 {
        let v = p.conjugate();
        (v.adjoint() * &self.a_psi * &v)[(0, 0)].re - 2.0 * (v.adjoint() * &self.b_psi)[(0, 0)].re
    }

    /// Own and partner power at the plain coefficient vector `p`,
    /// excluding the constant moved into `p2_cap`.
    pub fn powers_coeffs(&self, p: &CVector) -> (f64, f64) {
        let v = p.conjugate();
        let own = (v.adjoint() * &self.c_psi * &v)[(0, 0)].re;
        let other = (v.adjoint() * &self.d_psi * &v)[(0, 0)].re
            + 2.0 * (v.adjoint() * &self.d_vec)[(0, 0)].re;
        (own, other)
    }

    pub fn to_qcqp(&self) -> Qcqp {
        let m = self.a_psi.nrows();
        let mut constraints = Vec::new();
        if self.p1_cap.is_finite() {
            constraints.push(QuadConstraint {
                c: self.c_psi.clone(),
                d: CMatrix::zeros(m, 1),
                cap: self.p1_cap,
            });
        }
        if self.p2_cap.is_finite() {
            constraints.push(QuadConstraint {
                c: self.d_psi.clone(),
                d: CMatrix::from_column_slice(m, 1, self.d_vec.as_slice()),
                cap: self.p2_cap,
            });
        }
        Qcqp {
            a: self.a_psi.clone(),
            b: CMatrix::from_column_slice(m, 1, self.b_psi.as_slice()),
            constraints,
        }
    }
}

/// Returns the new plain coefficient vector.
pub fn solve_psi_ellipsoid(
    sub: &SubproblemPsi,
    cfg: &PddConfig,
    incumbent: Option<&CVector>,
) -> Result<CVector, SubproblemError> {
    let settings = SolverSettings {
        max_iters: cfg.ellipsoid_iters,
        radius: cfg.ellipsoid_radius,
        cut_rule: cfg.cut_rule,
    };
    let inc = incumbent.map(|p| {
        let v = p.conjugate();
        CMatrix::from_column_slice(v.len(), 1, v.as_slice())
    });
    let sol = sub.to_qcqp().solve(&settings, inc.as_ref())?;
    Ok(sol.x.column(0).conjugate())
}
