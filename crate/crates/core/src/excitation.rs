//! Inter-excitation feedback between the two active surfaces.
//!
//! Signals bounce between RIS 1 and RIS 2 until they settle. The settled
//! reflections are expressed through the inter-excitation matrices
//! `Xi1 = (I - Psi1 G^H Psi2 G)^-1` and `Xi2 = (I - Psi2 G Psi1 G^H)^-1`.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::{complex_normal, stream_rng, ChannelSet};
use crate::numerics::{self, c64, diag_mul_left, diag_mul_right, CMatrix, CVector, NumericsError};

/// Required distance of the loop spectral radius from 1.
pub const STABILITY_MARGIN: f64 = 1e-3;
/// Relative steady-state threshold on `zeta_l / ||y_l||`.
pub const STEADY_STATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExcitationError {
    #[error("feedback loop is unstable (spectral radius {radius:.6} >= {limit:.6})")]
    UnstableLoop { radius: f64, limit: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Reflection coefficients of both surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionState {
    /// Diagonal of Psi1 (plain, not conjugated).
    pub psi1: CVector,
    /// Diagonal of Psi2 (plain, not conjugated).
    pub psi2: CVector,
    pub a_max: f64,
}

impl ReflectionState {
    pub fn new(psi1: CVector, psi2: CVector, a_max: f64) -> Self {
        Self { psi1, psi2, a_max }
    }

    pub fn psi1_mat(&self) -> CMatrix {
        numerics::diag_from(&self.psi1)
    }

    pub fn psi2_mat(&self) -> CMatrix {
        numerics::diag_from(&self.psi2)
    }

    /// Returns the first entry whose amplitude leaves `[1, a_max]`, widened by `tol`.
    pub fn amplitude_violation(&self, tol: f64) -> Option<(usize, usize, f64)> {
        for (l, v) in [(1, &self.psi1), (2, &self.psi2)] {
            for (m, z) in v.iter().enumerate() {
                let a = z.norm();
                if a < 1.0 - tol || a > self.a_max + tol {
                    return Some((l, m, a));
                }
            }
        }
        None
    }

    pub fn scaled(&self, t: f64) -> Self {
        let s = c64(t, 0.0);
        Self {
            psi1: &self.psi1 * s,
            psi2: &self.psi2 * s,
            a_max: self.a_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationMatrices {
    pub xi1: CMatrix,
    pub xi2: CMatrix,
    pub spectral_radius_1: f64,
    pub spectral_radius_2: f64,
}

/// Loop matrices `(Psi1 G^H Psi2 G, Psi2 G Psi1 G^H)`.
pub fn loop_matrices(ch: &ChannelSet, refl: &ReflectionState) -> (CMatrix, CMatrix) {
    let gh = ch.g.adjoint();
    let psi2_g = diag_mul_left(&refl.psi2, &ch.g);
    let psi1_gh = diag_mul_left(&refl.psi1, &gh);
    let l1 = &psi1_gh * &psi2_g;
    let l2 = psi2_g * psi1_gh;
    (l1, l2)
}

/// Composite transfer matrices of the settled model.
///
/// `t1 = Psi1 (H1 + G^H Psi2 H2)`, `t2 = Psi2 (H2 + G Psi1 H1)`,
/// `t3 = Psi2 G Psi1`, `t4 = Psi1 G^H Psi2`.
#[derive(Debug, Clone)]
pub struct Transfers {
    pub t1: CMatrix,
    pub t2: CMatrix,
    pub t3: CMatrix,
    pub t4: CMatrix,
}

pub fn transfers(ch: &ChannelSet, refl: &ReflectionState) -> Transfers {
    let gh = ch.g.adjoint();
    let psi2_h2 = diag_mul_left(&refl.psi2, &ch.h2);
    let psi1_h1 = diag_mul_left(&refl.psi1, &ch.h1);
    let t1 = diag_mul_left(&refl.psi1, &(&ch.h1 + &gh * &psi2_h2));
    let t2 = diag_mul_left(&refl.psi2, &(&ch.h2 + &ch.g * &psi1_h1));
    let t3 = diag_mul_right(&diag_mul_left(&refl.psi2, &ch.g), &refl.psi1);
    let t4 = diag_mul_right(&diag_mul_left(&refl.psi1, &gh), &refl.psi2);
    Transfers { t1, t2, t3, t4 }
}

pub fn excitation_matrices(
    ch: &ChannelSet,
    refl: &ReflectionState,
) -> Result<ExcitationMatrices, ExcitationError> {
    excitation_matrices_with_margin(ch, refl, STABILITY_MARGIN)
}

pub fn excitation_matrices_with_margin(
    ch: &ChannelSet,
    refl: &ReflectionState,
    margin: f64,
) -> Result<ExcitationMatrices, ExcitationError> {
    let (l1, l2) = loop_matrices(ch, refl);
    let limit = 1.0 - margin;
    let r1 = numerics::spectral_radius(&l1)?;
    if !(r1 < limit) {
        return Err(ExcitationError::UnstableLoop { radius: r1, limit });
    }
    let r2 = numerics::spectral_radius(&l2)?;
    if !(r2 < limit) {
        return Err(ExcitationError::UnstableLoop { radius: r2, limit });
    }
    let i1 = numerics::identity(l1.nrows());
    let i2 = numerics::identity(l2.nrows());
    let xi1 = numerics::inverse(&(i1 - l1))?;
    let xi2 = numerics::inverse(&(i2 - l2))?;
    Ok(ExcitationMatrices {
        xi1,
        xi2,
        spectral_radius_1: r1,
        spectral_radius_2: r2,
    })
}

/// Largest loop spectral radius, or `None` when it cannot be computed.
pub fn loop_radius(ch: &ChannelSet, refl: &ReflectionState) -> Option<f64> {
    let (l1, _) = loop_matrices(ch, refl);
    // Both loop matrices share their nonzero spectrum.
    numerics::spectral_radius(&l1).ok()
}

/// RIS transmit powers `(P1, P2)` with arbitrary matrices in place of Xi1, Xi2.
pub fn ris_powers_with(
    ch: &ChannelSet,
    refl: &ReflectionState,
    x: &CMatrix,
    y: &CMatrix,
    w: &CMatrix,
) -> (f64, f64) {
    let t = transfers(ch, refl);
    let p1 = (x * &t.t1 * w).norm_squared()
        + ch.noise_ris1 * diag_mul_right(x, &refl.psi1).norm_squared()
        + ch.noise_ris2 * (x * &t.t4).norm_squared();
    let p2 = (y * &t.t2 * w).norm_squared()
        + ch.noise_ris2 * diag_mul_right(y, &refl.psi2).norm_squared()
        + ch.noise_ris1 * (y * &t.t3).norm_squared();
    (p1, p2)
}

/// Expected RIS transmit powers `(E||y1||^2, E||y2||^2)`.
pub fn ris_powers(
    ch: &ChannelSet,
    refl: &ReflectionState,
    exc: &ExcitationMatrices,
    w: &CMatrix,
) -> (f64, f64) {
    ris_powers_with(ch, refl, &exc.xi1, &exc.xi2, w)
}

/// One realization of symbols and RIS noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub symbols: CVector,
    pub n1: CVector,
    pub n2: CVector,
}

impl NoiseRealization {
    pub fn draw(ch: &ChannelSet, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0x4E4F_4953, 0);
        Self::draw_with(ch, &mut rng)
    }

    pub fn draw_with<R: Rng + ?Sized>(ch: &ChannelSet, rng: &mut R) -> Self {
        let s1 = ch.noise_ris1.sqrt();
        let s2 = ch.noise_ris2.sqrt();
        let symbols = CVector::from_fn(ch.n_users(), |_, _| complex_normal(rng));
        let n1 = CVector::from_fn(ch.m1(), |_, _| complex_normal(rng) * s1);
        let n2 = CVector::from_fn(ch.m2(), |_, _| complex_normal(rng) * s2);
        Self { symbols, n1, n2 }
    }
}

/// Settled reflections `(y1, y2)` for one realization.
pub fn stabilized_signals(
    ch: &ChannelSet,
    refl: &ReflectionState,
    exc: &ExcitationMatrices,
    w: &CMatrix,
    noise: &NoiseRealization,
) -> (CVector, CVector) {
    let x = w * &noise.symbols;
    let gh = ch.g.adjoint();
    let psi2_n2 = noise.n2.component_mul(&refl.psi2);
    let psi1_n1 = noise.n1.component_mul(&refl.psi1);
    let psi2_h2x = (&ch.h2 * &x).component_mul(&refl.psi2);
    let psi1_h1x = (&ch.h1 * &x).component_mul(&refl.psi1);
    let in1 = &ch.h1 * &x + &gh * &psi2_h2x + &gh * &psi2_n2 + &noise.n1;
    let in2 = &ch.h2 * &x + &ch.g * &psi1_h1x + &ch.g * &psi1_n1 + &noise.n2;
    let y1 = &exc.xi1 * in1.component_mul(&refl.psi1);
    let y2 = &exc.xi2 * in2.component_mul(&refl.psi2);
    (y1, y2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub zeta_trace_1: Vec<f64>,
    pub zeta_trace_2: Vec<f64>,
    /// First bounce (1-based) at which both relative factors are below
    /// the stopping threshold.
    pub bounces_to_converge: Option<usize>,
    pub y1_norm: f64,
    pub y2_norm: f64,
    pub final_y1: CVector,
    pub final_y2: CVector,
}

impl SteadyStateReport {
    pub fn relative_trace_1(&self) -> Vec<f64> {
        relative(&self.zeta_trace_1, self.y1_norm)
    }

    pub fn relative_trace_2(&self) -> Vec<f64> {
        relative(&self.zeta_trace_2, self.y2_norm)
    }

    pub fn converged_within(&self, bounces: usize) -> bool {
        matches!(self.bounces_to_converge, Some(b) if b <= bounces)
    }
}

fn relative(trace: &[f64], norm: f64) -> Vec<f64> {
    trace.iter().map(|z| rel(*z, norm)).collect()
}

fn rel(z: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        z / norm
    } else {
        z
    }
}

/// Iterates the instantaneous bounce recursion from zero, updating RIS 1
/// then RIS 2 each bounce, and tracks the distance to the settled signals.
pub fn bounce_simulate(
    ch: &ChannelSet,
    refl: &ReflectionState,
    w: &CMatrix,
    noise: &NoiseRealization,
    max_bounces: usize,
) -> Result<SteadyStateReport, ExcitationError> {
    bounce_simulate_with_tol(ch, refl, w, noise, max_bounces, STEADY_STATE_TOL)
}

/// [`bounce_simulate`] with a caller-chosen relative stopping threshold.
pub fn bounce_simulate_with_tol(
    ch: &ChannelSet,
    refl: &ReflectionState,
    w: &CMatrix,
    noise: &NoiseRealization,
    max_bounces: usize,
    tol: f64,
) -> Result<SteadyStateReport, ExcitationError> {
    // No margin here: divergence shows up in the trace.
    let exc = excitation_matrices_with_margin(ch, refl, 0.0)?;
    let (y1, y2) = stabilized_signals(ch, refl, &exc, w, noise);
    let (n1, n2) = (y1.norm(), y2.norm());
    let x = w * &noise.symbols;
    let gh = ch.g.adjoint();
    let drive1 = &ch.h1 * &x + &noise.n1;
    let drive2 = &ch.h2 * &x + &noise.n2;
    let mut t1 = CVector::zeros(ch.m1());
    let mut t2 = CVector::zeros(ch.m2());
    let mut zeta_trace_1 = Vec::with_capacity(max_bounces);
    let mut zeta_trace_2 = Vec::with_capacity(max_bounces);
    let mut bounces_to_converge = None;
    for b in 1..=max_bounces {
        t1 = (&drive1 + &gh * &t2).component_mul(&refl.psi1);
        t2 = (&drive2 + &ch.g * &t1).component_mul(&refl.psi2);
        let z1 = (&t1 - &y1).norm();
        let z2 = (&t2 - &y2).norm();
        zeta_trace_1.push(z1);
        zeta_trace_2.push(z2);
        if rel(z1, n1) < tol && rel(z2, n2) < tol {
            bounces_to_converge = Some(b);
            break;
        }
        if !(z1.is_finite() && z2.is_finite()) {
            break;
        }
    }
    Ok(SteadyStateReport {
        zeta_trace_1,
        zeta_trace_2,
        bounces_to_converge,
        y1_norm: n1,
        y2_norm: n2,
        final_y1: t1,
        final_y2: t2,
    })
}

/// Truncated Neumann series `sum_{n=0}^{terms} L^n`.
pub fn neumann_series(l: &CMatrix, terms: usize) -> CMatrix {
    let n = l.nrows();
    let mut acc = numerics::identity(n);
    let mut power = numerics::identity(n);
    for _ in 0..terms {
        power = &power * l;
        acc += &power;
    }
    acc
}

#[inline]
pub fn unit(theta: f64) -> Complex64 {
    c64(theta.cos(), theta.sin())
}
