//! Equivalent channels, SINR, weighted sum rate, the fractional-programming
//! surrogate and the augmented-Lagrangian penalty.

use std::f64::consts::LN_2;

use crate::channel::{ChannelSet, NoisePowers};
use crate::excitation::{loop_matrices, transfers, ExcitationMatrices, ReflectionState};
use crate::numerics::{self, c64, CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    /// N x K precoder, column k is w_k.
    pub w: CMatrix,
    pub refl: ReflectionState,
    pub p_bs_max: f64,
    pub p1_max: f64,
    pub p2_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    pub gamma: Vec<f64>,
    pub xi: Vec<C64>,
    /// Coefficient vector of Phi1 (plain diagonal).
    pub phi1: CVector,
    /// Coefficient vector of Phi2 (plain diagonal).
    pub phi2: CVector,
    pub x_mat: CMatrix,
    pub y_mat: CMatrix,
}

impl AuxiliaryState {
    /// Auxiliaries consistent with `refl`: X = Xi1, Y = Xi2, Phi = Psi,
    /// gamma = 0, xi = 0.
    pub fn consistent(refl: &ReflectionState, exc: &ExcitationMatrices, k: usize) -> Self {
        Self {
            gamma: vec![0.0; k],
            xi: vec![c64(0.0, 0.0); k],
            phi1: refl.psi1.clone(),
            phi2: refl.psi2.clone(),
            x_mat: exc.xi1.clone(),
            y_mat: exc.xi2.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub gamma1_dual: CMatrix,
    pub gamma2_dual: CMatrix,
    /// Same coefficient domain as `psi1`.
    pub eta1: CVector,
    pub eta2: CVector,
    pub rho: f64,
    pub c: f64,
}

impl DualState {
    pub fn zeros(m1: usize, m2: usize, rho: f64, c: f64) -> Self {
        Self {
            gamma1_dual: CMatrix::zeros(m1, m1),
            gamma2_dual: CMatrix::zeros(m2, m2),
            eta1: CVector::zeros(m1),
            eta2: CVector::zeros(m2),
            rho,
            c,
        }
    }
}

/// How the inter-RIS feedback enters the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// X and Y tied to the inter-excitation matrices through penalties.
    InterExcitation,
    /// X = Y = I pinned and the matrix equalities dropped.
    Ideal,
}

/// Which parts of the problem are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemStructure {
    pub coupling: Coupling,
    /// Inactive surfaces keep a zero reflection and no amplitude constraint.
    pub ris_active: [bool; 2],
    /// False for passive surfaces, whose transmit power is not constrained.
    pub ris_power_limited: bool,
}

impl Default for ProblemStructure {
    fn default() -> Self {
        Self {
            coupling: Coupling::InterExcitation,
            ris_active: [true, true],
            ris_power_limited: true,
        }
    }
}

impl ProblemStructure {
    pub fn ideal() -> Self {
        Self {
            coupling: Coupling::Ideal,
            ..Self::default()
        }
    }

    pub fn power_constrained(&self, side: usize) -> bool {
        self.ris_power_limited && self.ris_active[side]
    }
}

/// Equivalent channels stored row-wise: row k of `hbar_h` is the Hermitian
/// of user k's effective BS channel, and likewise for the two RIS-noise
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentChannels {
    pub hbar_h: CMatrix,
    pub gbar1_h: CMatrix,
    pub gbar2_h: CMatrix,
}

impl EquivalentChannels {
    pub fn n_users(&self) -> usize {
        self.hbar_h.nrows()
    }

    /// The column vector h_bar_k (length N).
    pub fn hbar(&self, k: usize) -> CVector {
        self.hbar_h.row(k).adjoint()
    }

    pub fn gbar1(&self, k: usize) -> CVector {
        self.gbar1_h.row(k).adjoint()
    }

    pub fn gbar2(&self, k: usize) -> CVector {
        self.gbar2_h.row(k).adjoint()
    }
}

/// Equivalent channels with arbitrary X, Y in place of Xi1, Xi2.
pub fn equivalent_channels_with(
    ch: &ChannelSet,
    refl: &ReflectionState,
    x: &CMatrix,
    y: &CMatrix,
) -> EquivalentChannels {
    let t = transfers(ch, refl);
    let a = ch.h1_users().adjoint() * x;
    let b = ch.h2_users().adjoint() * y;
    let hbar_h = &a * &t.t1 + &b * &t.t2;
    let gbar1_h = numerics::diag_mul_right(&a, &refl.psi1) + &b * &t.t3;
    let gbar2_h = &a * &t.t4 + numerics::diag_mul_right(&b, &refl.psi2);
    EquivalentChannels {
        hbar_h,
        gbar1_h,
        gbar2_h,
    }
}

pub fn equivalent_channels_exact(
    ch: &ChannelSet,
    refl: &ReflectionState,
    exc: &ExcitationMatrices,
) -> EquivalentChannels {
    equivalent_channels_with(ch, refl, &exc.xi1, &exc.xi2)
}

pub fn equivalent_channels_aux(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
) -> EquivalentChannels {
    equivalent_channels_with(ch, refl, &aux.x_mat, &aux.y_mat)
}

/// Per-user received-signal terms shared by SINR and the surrogate.
#[derive(Debug, Clone)]
pub(crate) struct UserTerms {
    /// `hbar_k^H w_i`, K x K.
    pub(crate) e: CMatrix,
    /// RIS noise plus user noise seen by user k.
    pub(crate) noise: Vec<f64>,
}

pub(crate) fn user_terms(eq: &EquivalentChannels, w: &CMatrix, noise: &NoisePowers) -> UserTerms {
    let e = &eq.hbar_h * w;
    let noise = (0..eq.n_users())
        .map(|k| {
            noise.ris1 * eq.gbar1_h.row(k).norm_squared()
                + noise.ris2 * eq.gbar2_h.row(k).norm_squared()
                + noise.users[k]
        })
        .collect();
    UserTerms { e, noise }
}

impl UserTerms {
    pub(crate) fn sinr(&self, k: usize) -> f64 {
        let signal = self.e[(k, k)].norm_sqr();
        let interference: f64 = self.e.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() - signal;
        signal / (interference.max(0.0) + self.noise[k])
    }

    /// Total received power plus noise for user k.
    pub(crate) fn total(&self, k: usize) -> f64 {
        self.e.row(k).norm_squared() + self.noise[k]
    }
}

/// Per-user SINR and the weighted sum rate in bits/s/Hz.
pub fn sinr_and_wsr(
    eq: &EquivalentChannels,
    w: &CMatrix,
    noise: &NoisePowers,
    weights: &[f64],
) -> (Vec<f64>, f64) {
    let terms = user_terms(eq, w, noise);
    let sinr: Vec<f64> = (0..eq.n_users()).map(|k| terms.sinr(k)).collect();
    let wsr = sinr
        .iter()
        .zip(weights)
        .map(|(s, a)| a * (1.0 + s).log2())
        .sum();
    (sinr, wsr)
}

/// Weighted sum rate with the true inter-excitation matrices.
pub fn exact_wsr(
    ch: &ChannelSet,
    refl: &ReflectionState,
    exc: &ExcitationMatrices,
    w: &CMatrix,
    weights: &[f64],
) -> (Vec<f64>, f64) {
    let eq = equivalent_channels_exact(ch, refl, exc);
    sinr_and_wsr(&eq, w, &ch.noise(), weights)
}

/// The fractional-programming surrogate f_r.
pub fn fr_objective(
    aux: &AuxiliaryState,
    eq: &EquivalentChannels,
    w: &CMatrix,
    weights: &[f64],
    noise: &NoisePowers,
) -> f64 {
    let terms = user_terms(eq, w, noise);
    let mut acc = 0.0;
    for (k, &alpha) in weights.iter().enumerate() {
        let gamma = aux.gamma[k];
        let xi = aux.xi[k];
        let c = (alpha * (1.0 + gamma)).sqrt();
        acc += alpha * (1.0 + gamma).log2() - alpha * gamma / LN_2;
        acc += 2.0 / LN_2 * c * (xi.conj() * terms.e[(k, k)]).re;
        acc -= xi.norm_sqr() * terms.total(k) / LN_2;
    }
    acc
}

/// Residuals of the four relaxed equalities:
/// `(Xi1^-1 X - I, Xi2^-1 Y - I, psi1 - phi1, psi2 - phi2)`.
pub fn residuals(
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
) -> (CMatrix, CMatrix, CVector, CVector) {
    let (l1, l2) = loop_matrices(ch, refl);
    let r1 = &aux.x_mat - &l1 * &aux.x_mat - numerics::identity(l1.nrows());
    let r2 = &aux.y_mat - &l2 * &aux.y_mat - numerics::identity(l2.nrows());
    let r3 = &refl.psi1 - &aux.phi1;
    let r4 = &refl.psi2 - &aux.phi2;
    (r1, r2, r3, r4)
}

/// The augmented-Lagrangian penalty h for the full inter-excitation problem.
pub fn penalty_h(
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    ch: &ChannelSet,
) -> f64 {
    penalty_h_with(refl, aux, dual, ch, &ProblemStructure::default())
}

pub fn penalty_h_with(
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    ch: &ChannelSet,
    structure: &ProblemStructure,
) -> f64 {
    let rho = dual.rho;
    let rc = c64(rho, 0.0);
    let (r1, r2, r3, r4) = residuals(ch, refl, aux);
    let mut acc = 0.0;
    if structure.coupling == Coupling::InterExcitation {
        acc += (r1 + &dual.gamma1_dual * rc).norm_squared();
        acc += (r2 + &dual.gamma2_dual * rc).norm_squared();
    }
    if structure.ris_active[0] {
        acc += (r3 + &dual.eta1 * rc).norm_squared();
    }
    if structure.ris_active[1] {
        acc += (r4 + &dual.eta2 * rc).norm_squared();
    }
    acc / (2.0 * rho)
}

/// Constraint violation indicator: largest entry modulus over the residuals.
pub fn violation(refl: &ReflectionState, aux: &AuxiliaryState, ch: &ChannelSet) -> f64 {
    violation_with(refl, aux, ch, &ProblemStructure::default())
}

pub fn violation_with(
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    ch: &ChannelSet,
    structure: &ProblemStructure,
) -> f64 {
    let (r1, r2, r3, r4) = residuals(ch, refl, aux);
    let mut v: f64 = 0.0;
    if structure.coupling == Coupling::InterExcitation {
        v = v.max(numerics::max_abs(&r1)).max(numerics::max_abs(&r2));
    }
    if structure.ris_active[0] {
        v = v.max(numerics::max_abs_vec(&r3));
    }
    if structure.ris_active[1] {
        v = v.max(numerics::max_abs_vec(&r4));
    }
    v
}

/// AL objective `f_r - h` built from the auxiliary channels.
#[allow(clippy::too_many_arguments)]
pub fn al_objective(
    ch: &ChannelSet,
    w: &CMatrix,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    weights: &[f64],
    structure: &ProblemStructure,
) -> f64 {
    let eq = equivalent_channels_aux(ch, refl, aux);
    fr_objective(aux, &eq, w, weights, &ch.noise())
        - penalty_h_with(refl, aux, dual, ch, structure)
}
