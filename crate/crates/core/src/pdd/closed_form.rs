//! Closed-form block updates: gamma, xi, Phi and the dual/penalty step.

use crate::channel::{ChannelSet, NoisePowers};
use crate::excitation::ReflectionState;
use crate::numerics::{c64, CMatrix, CVector, C64};
use crate::objective::{
    residuals, user_terms, AuxiliaryState, Coupling, DualState, EquivalentChannels,
    ProblemStructure,
};

use super::side::Side;

/// `gamma_k = |h_k^H w_k|^2 / (sum_{i != k} |h_k^H w_i|^2 + noise_k)`.
pub fn update_gamma(eq: &EquivalentChannels, w: &CMatrix, noise: &NoisePowers) -> Vec<f64> {
    let terms = user_terms(eq, w, noise);
    (0..eq.n_users()).map(|k| terms.sinr(k)).collect()
}

/// `xi_k = sqrt(alpha_k (1 + gamma_k)) h_k^H w_k / (sum_i |h_k^H w_i|^2 + noise_k)`.
pub fn update_xi(
    eq: &EquivalentChannels,
    w: &CMatrix,
    gamma: &[f64],
    weights: &[f64],
    noise: &NoisePowers,
) -> Vec<C64> {
    let terms = user_terms(eq, w, noise);
    (0..eq.n_users())
        .map(|k| {
            let c = (weights[k] * (1.0 + gamma[k])).sqrt();
            terms.e[(k, k)] * (c / terms.total(k))
        })
        .collect()
}

/// Projection of `psi + rho eta` onto the annulus `1 <= |phi| <= a_max`.
pub fn project_annulus(psi: &CVector, eta: &CVector, rho: f64, a_max: f64) -> CVector {
    CVector::from_fn(psi.len(), |m, _| {
        let z = psi[m] + eta[m] * rho;
        let r = z.norm();
        let target = r.clamp(1.0, a_max);
        if r > 0.0 {
            snap_modulus(z * (target / r), 1.0, a_max)
        } else {
            c64(1.0, 0.0)
        }
    })
}

/// Moves `q` by a few ulps per component so that `lo <= |q| <= hi` holds
/// in floating point. Returns `q` unchanged if no nearby point qualifies.
pub(crate) fn snap_modulus(q: C64, lo: f64, hi: f64) -> C64 {
    let inside = |z: C64| {
        let a = z.norm();
        a >= lo && a <= hi
    };
    if inside(q) {
        return q;
    }
    let nudge = |x: f64, k: i32| {
        (0..k.unsigned_abs()).fold(x, |v, _| if k > 0 { v.next_up() } else { v.next_down() })
    };
    for dr in -4..=4 {
        for di in -4..=4 {
            let z = c64(nudge(q.re, dr), nudge(q.im, di));
            if inside(z) {
                return z;
            }
        }
    }
    q
}

pub fn update_phi(refl: &ReflectionState, dual: &DualState, which: Side, a_max: f64) -> CVector {
    match which {
        Side::One => project_annulus(&refl.psi1, &dual.eta1, dual.rho, a_max),
        Side::Two => project_annulus(&refl.psi2, &dual.eta2, dual.rho, a_max),
    }
}

/// Multiplier step `Gamma += r / rho`, `eta += r / rho`, then `rho *= c`.
pub fn update_duals(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &mut DualState,
    structure: &ProblemStructure,
) {
    let (r1, r2, r3, r4) = residuals(ch, refl, aux);
    let inv = c64(1.0 / dual.rho, 0.0);
    if structure.coupling == Coupling::InterExcitation {
        dual.gamma1_dual += r1 * inv;
        dual.gamma2_dual += r2 * inv;
    }
    if structure.ris_active[0] {
        dual.eta1 += r3 * inv;
    }
    if structure.ris_active[1] {
        dual.eta2 += r4 * inv;
    }
    dual.rho *= dual.c;
}
