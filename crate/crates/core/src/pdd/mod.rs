//! Penalty dual decomposition optimizer.
//!
//! The outer loop updates the multipliers and shrinks the penalty parameter;
//! the inner loop runs block coordinate ascent on the augmented Lagrangian
//! over gamma/xi, W, Psi1, Psi2, Phi1, Phi2, X and Y.

pub mod closed_form;
pub mod ellipsoid;
pub mod psi_block;
pub mod quadform;
pub mod side;
pub mod w_block;
pub mod xy_block;

use std::io::Write;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{complex_normal, stream_rng, ChannelSet};
use crate::excitation::{
    excitation_matrices, loop_radius, ris_powers, ris_powers_with, unit, ExcitationError,
    ReflectionState,
};
use crate::numerics::{self, c64, CMatrix, CVector, NumericsError};
use crate::objective::{
    al_objective, equivalent_channels_aux, exact_wsr, violation_with, AuxiliaryState,
    BeamformingState, Coupling, DualState, ProblemStructure,
};

pub use closed_form::{project_annulus, update_duals, update_gamma, update_phi, update_xi};
pub use ellipsoid::{CutRule, EllipsoidState, Qcqp, QuadConstraint, SolverSettings};
pub use psi_block::{build_psi_subproblem, solve_psi_ellipsoid, SubproblemPsi};
pub use side::Side;
pub use w_block::{build_w_subproblem, solve_w_ellipsoid, SubproblemW};
pub use xy_block::{build_x_subproblem, solve_x_bisection, SubproblemX};

/// Slack allowed on each block's AL change before it counts as a decrease.
pub const MONOTONE_SLACK: f64 = 1e-6;
const PSI_STEP_BISECTIONS: usize = 40;

/// Relative tolerance of the final power feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubproblemError {
    #[error("{block} subproblem is infeasible: {detail}")]
    InfeasibleSubproblem { block: &'static str, detail: String },
    #[error("no feasible iterate found (best constraint excess {violation:e})")]
    NoFeasibleIterate { violation: f64 },
    #[error("could not bracket the multiplier of the {block} subproblem")]
    BracketFailure { block: &'static str },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PddError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible configuration: {0}")]
    InfeasibleConfiguration(String),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
}

/// Transmit power limits in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budgets {
    pub p_bs_max: f64,
    pub p1_max: f64,
    pub p2_max: f64,
}

impl Budgets {
    /// Reference budgets for 16 active elements in total: 30 dBm overall,
    /// 14 dBm per surface, -5 dBm bias and -10 dBm control per element.
    pub fn desk_default() -> Self {
        let p_ris = crate::channel::dbm_to_watts(14.0);
        let per_element = crate::channel::dbm_to_watts(-5.0) + crate::channel::dbm_to_watts(-10.0);
        Self {
            p_bs_max: 1.0 - 2.0 * p_ris - 16.0 * per_element,
            p1_max: p_ris,
            p2_max: p_ris,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PddConfig {
    pub t_max: usize,
    /// Inner-loop stop on the relative AL change.
    pub inner_tol: f64,
    pub inner_max: usize,
    pub violation_tol: f64,
    pub rho0: f64,
    pub c: f64,
    pub ellipsoid_iters: usize,
    pub ellipsoid_radius: f64,
    pub cut_rule: CutRule,
    pub bisection_tol: f64,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub structure: ProblemStructure,
    /// Also evaluate the AL after every block to check monotonicity.
    pub track_blocks: bool,
}

impl Default for PddConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            inner_tol: 1e-6,
            inner_max: 100,
            violation_tol: 1e-8,
            rho0: 1e4,
            c: 0.75,
            ellipsoid_iters: 300,
            ellipsoid_radius: 10.0,
            cut_rule: CutRule::Slack,
            bisection_tol: 1e-8,
            seed: 0,
            weights: Vec::new(),
            structure: ProblemStructure::default(),
            track_blocks: false,
        }
    }
}

impl PddConfig {
    pub fn validate(&self) -> Result<(), PddError> {
        let bad = |m: &str| Err(PddError::InvalidConfig(m.to_string()));
        if self.t_max == 0 || self.inner_max == 0 || self.ellipsoid_iters == 0 {
            return bad("iteration caps must be at least 1");
        }
        for (name, v) in [
            ("inner_tol", self.inner_tol),
            ("violation_tol", self.violation_tol),
            ("rho0", self.rho0),
            ("ellipsoid_radius", self.ellipsoid_radius),
            ("bisection_tol", self.bisection_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad("c must lie in (0, 1)");
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        Ok(())
    }

    pub fn weights_for(&self, k: usize) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0; k]
        } else {
            self.weights.clone()
        }
    }
}

/// One diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub wsr_exact: f64,
    pub al_value: f64,
    pub violation: f64,
    pub rho: f64,
    pub p1: f64,
    pub p2: f64,
    pub spectral_radius_1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// One row per inner iteration.
    pub inner: Vec<IterationRecord>,
    /// One row per outer iteration, after the multiplier update.
    pub outer: Vec<IterationRecord>,
    /// Most negative single-block AL change seen (0 when never negative).
    pub worst_block_change: f64,
    /// Blocks whose solver failed and kept their incumbent.
    pub block_failures: usize,
    pub converged: bool,
}

impl Diagnostics {
    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn final_violation(&self) -> f64 {
        self.outer.last().map_or(f64::NAN, |r| r.violation)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.worst_block_change >= -slack
    }

    /// Writes all inner rows as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(out);
        for r in &self.inner {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PddOutcome {
    /// Final state with `Psi := Phi`.
    pub state: BeamformingState,
    pub aux: AuxiliaryState,
    pub dual: DualState,
    pub diagnostics: Diagnostics,
    /// WSR with the true inter-excitation matrices (NaN if unstable).
    pub wsr_exact: f64,
    /// WSR under the structure's own model (X = Y = I when ideal).
    pub wsr_model: f64,
    /// True RIS powers of the final state.
    pub ris_powers: (f64, f64),
    /// Factor applied to W at the end to restore exact power feasibility.
    pub w_backoff: f64,
}

#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct PddFailure {
    pub error: PddError,
    pub diagnostics: Box<Diagnostics>,
}

impl From<PddError> for PddFailure {
    fn from(error: PddError) -> Self {
        Self {
            error,
            diagnostics: Box::default(),
        }
    }
}

/// Random feasible starting point: Gaussian W at 90% of the BS budget,
/// unit-amplitude random-phase reflections, W shrunk if a surface exceeds
/// its budget.
pub fn init_feasible(
    ch: &ChannelSet,
    budgets: &Budgets,
    a_max: f64,
    seed: u64,
) -> Result<BeamformingState, PddError> {
    init_feasible_with(ch, budgets, a_max, seed, &ProblemStructure::default())
}

pub fn init_feasible_with(
    ch: &ChannelSet,
    budgets: &Budgets,
    a_max: f64,
    seed: u64,
    structure: &ProblemStructure,
) -> Result<BeamformingState, PddError> {
    if !(budgets.p_bs_max > 0.0 && budgets.p1_max > 0.0 && budgets.p2_max > 0.0) {
        return Err(PddError::InvalidConfig("budgets must be positive".into()));
    }
    if !(a_max >= 1.0) {
        return Err(PddError::InvalidConfig("a_max must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0x494E_4954, 0);
    let (n, k) = (ch.n_antennas(), ch.n_users());
    let mut w = CMatrix::from_fn(n, k, |_, _| complex_normal(&mut rng));
    w *= c64((0.9 * budgets.p_bs_max).sqrt() / w.norm(), 0.0);
    let mut phases = |m: usize, active: bool| {
        CVector::from_fn(m, |_, _| {
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            if active {
                closed_form::snap_modulus(unit(theta), 1.0, a_max)
            } else {
                c64(0.0, 0.0)
            }
        })
    };
    let psi1 = phases(ch.m1(), structure.ris_active[0]);
    let psi2 = phases(ch.m2(), structure.ris_active[1]);
    let refl = ReflectionState::new(psi1, psi2, a_max);
    let (x, y) = match structure.coupling {
        Coupling::Ideal => (numerics::identity(ch.m1()), numerics::identity(ch.m2())),
        Coupling::InterExcitation => {
            let exc = excitation_matrices(ch, &refl)?;
            (exc.xi1, exc.xi2)
        }
    };
    let t = feasible_w_scale(ch, &refl, &x, &y, &w, budgets, structure)?;
    if t < 1.0 {
        w *= c64(t, 0.0);
    }
    Ok(BeamformingState {
        w,
        refl,
        p_bs_max: budgets.p_bs_max,
        p1_max: budgets.p1_max,
        p2_max: budgets.p2_max,
    })
}

/// Largest `t` in `(0, 1]` such that `t W` meets the RIS power budgets
/// under the given X, Y. Power is `t^2 S + noise`, so `t` is explicit.
pub fn feasible_w_scale(
    ch: &ChannelSet,
    refl: &ReflectionState,
    x: &CMatrix,
    y: &CMatrix,
    w: &CMatrix,
    budgets: &Budgets,
    structure: &ProblemStructure,
) -> Result<f64, PddError> {
    let (p1, p2) = ris_powers_with(ch, refl, x, y, w);
    let zero = CMatrix::zeros(w.nrows(), w.ncols());
    let (n1, n2) = ris_powers_with(ch, refl, x, y, &zero);
    let mut t: f64 = 1.0;
    for (side, p, noise, cap) in [(0, p1, n1, budgets.p1_max), (1, p2, n2, budgets.p2_max)] {
        if !structure.power_constrained(side) {
            continue;
        }
        if noise > cap {
            return Err(PddError::InfeasibleConfiguration(format!(
                "noise power {noise:.3e} W at RIS {} exceeds its budget {cap:.3e} W",
                side + 1
            )));
        }
        if p > cap {
            t = t.min(((cap - noise) / (p - noise)).max(0.0).sqrt());
        }
    }
    Ok(t)
}

/// Shortens the step `current -> proposed` until the true surface powers
/// (and loop stability) stay within budget. The subproblem is convex, so any
/// point of the segment is no worse than `current`.
#[allow(clippy::too_many_arguments)]
fn limit_psi_step(
    ch: &ChannelSet,
    refl: &ReflectionState,
    w: &CMatrix,
    budgets: &Budgets,
    structure: &ProblemStructure,
    side: Side,
    current: &CVector,
    proposed: CVector,
) -> CVector {
    let at = |s: f64| -> CVector { current + (&proposed - current) * c64(s, 0.0) };
    let ok = |psi: &CVector, tol: f64| -> bool {
        let mut r = refl.clone();
        match side {
            Side::One => r.psi1 = psi.clone(),
            Side::Two => r.psi2 = psi.clone(),
        }
        let Ok(exc) = excitation_matrices(ch, &r) else {
            return false;
        };
        let (p1, p2) = ris_powers(ch, &r, &exc, w);
        let fits = |i: usize, p: f64, cap: f64| {
            !structure.power_constrained(i) || p <= cap * (1.0 + tol)
        };
        fits(0, p1, budgets.p1_max) && fits(1, p2, budgets.p2_max)
    };
    if ok(&proposed, 0.0) || !ok(current, FEASIBILITY_TOL) {
        return proposed;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..PSI_STEP_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if ok(&at(mid), 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

struct Iterate {
    w: CMatrix,
    refl: ReflectionState,
    aux: AuxiliaryState,
    dual: DualState,
}

impl Iterate {
    fn al(&self, ch: &ChannelSet, weights: &[f64], structure: &ProblemStructure) -> f64 {
        al_objective(ch, &self.w, &self.refl, &self.aux, &self.dual, weights, structure)
    }
}

fn g_is_zero(ch: &ChannelSet) -> bool {
    ch.g.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

/// The structure actually optimized: without a RIS-to-RIS channel the
/// inter-excitation matrices are exactly the identity, so X and Y are pinned.
pub fn effective_structure(ch: &ChannelSet, structure: &ProblemStructure) -> ProblemStructure {
    let mut s = *structure;
    if g_is_zero(ch) {
        s.coupling = Coupling::Ideal;
    }
    s
}

fn record(
    ch: &ChannelSet,
    it: &Iterate,
    weights: &[f64],
    structure: &ProblemStructure,
    outer_iter: usize,
    inner_iter: usize,
    al_value: f64,
) -> IterationRecord {
    let violation = violation_with(&it.refl, &it.aux, ch, structure);
    let radius = loop_radius(ch, &it.refl).unwrap_or(f64::NAN);
    let (wsr_exact, p1, p2) = match excitation_matrices(ch, &it.refl) {
        Ok(exc) => {
            let (_, wsr) = exact_wsr(ch, &it.refl, &exc, &it.w, weights);
            let (p1, p2) = ris_powers(ch, &it.refl, &exc, &it.w);
            (wsr, p1, p2)
        }
        Err(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    IterationRecord {
        outer_iter,
        inner_iter,
        wsr_exact,
        al_value,
        violation,
        rho: it.dual.rho,
        p1,
        p2,
        spectral_radius_1: radius,
    }
}

/// Runs the optimizer from `init`.
pub fn pdd_solve(
    ch: &ChannelSet,
    init: &BeamformingState,
    cfg: &PddConfig,
) -> Result<PddOutcome, PddFailure> {
    cfg.validate()?;
    let structure = effective_structure(ch, &cfg.structure);
    let weights = cfg.weights_for(ch.n_users());
    if weights.len() != ch.n_users() {
        return Err(PddError::InvalidConfig("one weight per user is required".into()).into());
    }
    let budgets = Budgets {
        p_bs_max: init.p_bs_max,
        p1_max: init.p1_max,
        p2_max: init.p2_max,
    };
    let a_max = init.refl.a_max;
    let (x0, y0) = match structure.coupling {
        Coupling::Ideal => (numerics::identity(ch.m1()), numerics::identity(ch.m2())),
        Coupling::InterExcitation => {
            let exc0 = excitation_matrices(ch, &init.refl).map_err(PddError::from)?;
            (exc0.xi1, exc0.xi2)
        }
    };
    let mut w0 = init.w.clone();
    let bs = w0.norm_squared();
    if bs > budgets.p_bs_max {
        w0 *= c64((budgets.p_bs_max / bs).sqrt(), 0.0);
    }
    let t0 = feasible_w_scale(ch, &init.refl, &x0, &y0, &w0, &budgets, &structure)?;
    if t0 < 1.0 {
        w0 *= c64(t0, 0.0);
    }
    let k = ch.n_users();
    let mut it = Iterate {
        w: w0,
        refl: init.refl.clone(),
        aux: AuxiliaryState {
            gamma: vec![0.0; k],
            xi: vec![c64(0.0, 0.0); k],
            phi1: if structure.ris_active[0] {
                project_annulus(&init.refl.psi1, &CVector::zeros(ch.m1()), 0.0, a_max)
            } else {
                CVector::zeros(ch.m1())
            },
            phi2: if structure.ris_active[1] {
                project_annulus(&init.refl.psi2, &CVector::zeros(ch.m2()), 0.0, a_max)
            } else {
                CVector::zeros(ch.m2())
            },
            x_mat: x0,
            y_mat: y0,
        },
        dual: DualState::zeros(ch.m1(), ch.m2(), cfg.rho0, cfg.c),
    };
    let mut diag = Diagnostics::default();
    let noise = ch.noise();

    for t in 1..=cfg.t_max {
        let mut inner_iter = 0;
        let mut inner_converged = false;
        loop {
            inner_iter += 1;
            let al_before = if cfg.track_blocks {
                Some(it.al(ch, &weights, &structure))
            } else {
                None
            };
            let eq = equivalent_channels_aux(ch, &it.refl, &it.aux);
            it.aux.gamma = update_gamma(&eq, &it.w, &noise);
            it.aux.xi = update_xi(&eq, &it.w, &it.aux.gamma, &weights, &noise);
            let al_start = it.al(ch, &weights, &structure);
            let mut prev = al_start;
            let mut check = |al: f64, diag: &mut Diagnostics| {
                if cfg.track_blocks {
                    diag.worst_block_change = diag.worst_block_change.min(al - prev);
                    prev = al;
                }
            };
            if let Some(b) = al_before {
                diag.worst_block_change = diag.worst_block_change.min(al_start - b);
            }

            match build_w_subproblem(ch, &it.refl, &it.aux, &weights, &budgets, &structure)
                .and_then(|sub| solve_w_ellipsoid(&sub, cfg, Some(&it.w)))
            {
                Ok(w) => it.w = w,
                Err(_) => diag.block_failures += 1,
            }
            if cfg.track_blocks {
                check(it.al(ch, &weights, &structure), &mut diag);
            }

            for side in [Side::One, Side::Two] {
                if !structure.ris_active[side.index()] {
                    continue;
                }
                let sub = build_psi_subproblem(
                    ch, &it.refl, &it.aux, &it.dual, &it.w, &weights, &budgets, &structure, side,
                );
                let current = match side {
                    Side::One => it.refl.psi1.clone(),
                    Side::Two => it.refl.psi2.clone(),
                };
                match solve_psi_ellipsoid(&sub, cfg, Some(&current)) {
                    Ok(p) => {
                        let p = if structure.coupling == Coupling::InterExcitation {
                            limit_psi_step(ch, &it.refl, &it.w, &budgets, &structure, side, &current, p)
                        } else {
                            p
                        };
                        match side {
                            Side::One => it.refl.psi1 = p,
                            Side::Two => it.refl.psi2 = p,
                        }
                    }
                    Err(_) => diag.block_failures += 1,
                }
                if cfg.track_blocks {
                    check(it.al(ch, &weights, &structure), &mut diag);
                }
            }

            for side in [Side::One, Side::Two] {
                if !structure.ris_active[side.index()] {
                    continue;
                }
                let phi = update_phi(&it.refl, &it.dual, side, a_max);
                match side {
                    Side::One => it.aux.phi1 = phi,
                    Side::Two => it.aux.phi2 = phi,
                }
                if cfg.track_blocks {
                    check(it.al(ch, &weights, &structure), &mut diag);
                }
            }

            if structure.coupling == Coupling::InterExcitation {
                for side in [Side::One, Side::Two] {
                    let current = match side {
                        Side::One => it.aux.x_mat.clone(),
                        Side::Two => it.aux.y_mat.clone(),
                    };
                    let res = build_x_subproblem(
                        ch, &it.refl, &it.aux, &it.dual, &it.w, &weights, &budgets, &structure,
                        side,
                    )
                    .and_then(|sub| solve_x_bisection(&sub, cfg, Some(&current)));
                    match res {
                        Ok(x) => match side {
                            Side::One => it.aux.x_mat = x,
                            Side::Two => it.aux.y_mat = x,
                        },
                        Err(_) => diag.block_failures += 1,
                    }
                    if cfg.track_blocks {
                        check(it.al(ch, &weights, &structure), &mut diag);
                    }
                }
            }

            let al_end = it.al(ch, &weights, &structure);
            diag.inner
                .push(record(ch, &it, &weights, &structure, t, inner_iter, al_end));
            let change = (al_end - al_start).abs();
            if change <= cfg.inner_tol * al_end.abs().max(1.0) {
                inner_converged = true;
                break;
            }
            if inner_iter >= cfg.inner_max {
                break;
            }
            if !al_end.is_finite() {
                return Err(PddFailure {
                    error: PddError::Subproblem(SubproblemError::NoFeasibleIterate {
                        violation: f64::NAN,
                    }),
                    diagnostics: Box::new(diag),
                });
            }
        }

        update_duals(ch, &it.refl, &it.aux, &mut it.dual, &structure);
        let al = it.al(ch, &weights, &structure);
        let rec = record(ch, &it, &weights, &structure, t, inner_iter, al);
        let v = rec.violation;
        diag.outer.push(rec);
        if v <= cfg.violation_tol && inner_converged {
            diag.converged = true;
            break;
        }
    }

    finalize(ch, it, &budgets, &weights, &structure, diag)
}

fn finalize(
    ch: &ChannelSet,
    mut it: Iterate,
    budgets: &Budgets,
    weights: &[f64],
    structure: &ProblemStructure,
    diag: Diagnostics,
) -> Result<PddOutcome, PddFailure> {
    if structure.ris_active[0] {
        it.refl.psi1 = it.aux.phi1.clone();
    }
    if structure.ris_active[1] {
        it.refl.psi2 = it.aux.phi2.clone();
    }
    let fail = |error: PddError, diag: Diagnostics| PddFailure {
        error,
        diagnostics: Box::new(diag),
    };
    let exc = excitation_matrices(ch, &it.refl);
    let (x, y) = match (&exc, structure.coupling) {
        (_, Coupling::Ideal) => (
            numerics::identity(ch.m1()),
            numerics::identity(ch.m2()),
        ),
        (Ok(e), Coupling::InterExcitation) => (e.xi1.clone(), e.xi2.clone()),
        (Err(e), Coupling::InterExcitation) => return Err(fail(e.clone().into(), diag)),
    };
    let t = match feasible_w_scale(ch, &it.refl, &x, &y, &it.w, budgets, structure) {
        Ok(t) => t,
        Err(e) => return Err(fail(e, diag)),
    };
    if t < 1.0 {
        it.w *= c64(t, 0.0);
    }
    let (wsr_exact, powers) = match &exc {
        Ok(e) => (
            exact_wsr(ch, &it.refl, e, &it.w, weights).1,
            ris_powers(ch, &it.refl, e, &it.w),
        ),
        Err(_) => (f64::NAN, (f64::NAN, f64::NAN)),
    };
    let eq_model = crate::objective::equivalent_channels_with(ch, &it.refl, &x, &y);
    let (_, wsr_model) = crate::objective::sinr_and_wsr(&eq_model, &it.w, &ch.noise(), weights);
    Ok(PddOutcome {
        state: BeamformingState {
            w: it.w,
            refl: it.refl,
            p_bs_max: budgets.p_bs_max,
            p1_max: budgets.p1_max,
            p2_max: budgets.p2_max,
        },
        aux: it.aux,
        dual: it.dual,
        diagnostics: diag,
        wsr_exact,
        wsr_model,
        ris_powers: powers,
        w_backoff: t,
    })
}

/// Checks every constraint of the sum-rate problem with true
/// inter-excitation. Returns the worst relative excess (<= 0 when feasible).
pub fn feasibility_excess(
    ch: &ChannelSet,
    state: &BeamformingState,
    structure: &ProblemStructure,
) -> Result<f64, ExcitationError> {
    let exc = excitation_matrices(ch, &state.refl)?;
    let (p1, p2) = ris_powers(ch, &state.refl, &exc, &state.w);
    let mut worst = state.w.norm_squared() / state.p_bs_max - 1.0;
    if structure.power_constrained(0) {
        worst = worst.max(p1 / state.p1_max - 1.0);
    }
    if structure.power_constrained(1) {
        worst = worst.max(p2 / state.p2_max - 1.0);
    }
    Ok(worst)
}
