//! Scenario variants, power accounting, Monte-Carlo trials and sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    db_to_linear, dbm_to_watts, splitmix64, synthesize, ChannelError, ChannelSet, Geometry,
    PathLossParams, RicianParams,
};
use crate::excitation::{
    bounce_simulate, excitation_matrices, loop_radius, ris_powers, NoiseRealization,
    ReflectionState, SteadyStateReport, STABILITY_MARGIN,
};
use crate::numerics::c64;
use crate::objective::{exact_wsr, BeamformingState, ProblemStructure};
use crate::pdd::{
    init_feasible_with, pdd_solve, Budgets, Diagnostics, PddConfig, PddError, PddFailure,
    PddOutcome,
};

/// Bisection tolerance on the non-IE scaling factor.
pub const TAU_TOL: f64 = 1e-6;
/// Bounces simulated for steady-state traces.
pub const DEFAULT_BOUNCES: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Pdd(#[from] PddError),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error("infeasible scaling: {0}")]
    InfeasibleScaling(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Variant {
    #[serde(rename = "DAR_IE")]
    DarIe,
    #[serde(rename = "DAR_IDEAL")]
    DarIdeal,
    #[serde(rename = "DAR_NON_IE")]
    DarNonIe,
    #[serde(rename = "SAR_NEAR_BS")]
    SarNearBs,
    #[serde(rename = "SAR_NEAR_USERS")]
    SarNearUsers,
    #[serde(rename = "DPR")]
    Dpr,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::DarIe,
        Variant::DarIdeal,
        Variant::DarNonIe,
        Variant::SarNearBs,
        Variant::SarNearUsers,
        Variant::Dpr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DarIe => "DAR_IE",
            Variant::DarIdeal => "DAR_IDEAL",
            Variant::DarNonIe => "DAR_NON_IE",
            Variant::SarNearBs => "SAR_NEAR_BS",
            Variant::SarNearUsers => "SAR_NEAR_USERS",
            Variant::Dpr => "DPR",
        }
    }

}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| BenchError::Invalid {
                field: "variant",
                reason: format!("unknown scenario '{s}'"),
            })
    }
}

/// Power split in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBudget {
    pub p_total: f64,
    pub p_bs: f64,
    pub p_ris1: f64,
    pub p_ris2: f64,
    pub p_dc_per_element: f64,
    pub p_c_per_element: f64,
}

impl PowerBudget {
    /// Double-active split: the BS gets what is left after both surfaces
    /// and the per-element bias and control power of `m_total` elements.
    pub fn dar(
        p_total: f64,
        p_ris1: f64,
        p_ris2: f64,
        p_dc: f64,
        p_c: f64,
        m_total: usize,
    ) -> Self {
        Self {
            p_total,
            p_bs: p_total - p_ris1 - p_ris2 - m_total as f64 * (p_dc + p_c),
            p_ris1,
            p_ris2,
            p_dc_per_element: p_dc,
            p_c_per_element: p_c,
        }
    }

    /// 30 dBm total, 14 dBm per surface, -5 dBm bias, -10 dBm control.
    pub fn reference(m_total: usize) -> Self {
        Self::dar(
            dbm_to_watts(30.0),
            dbm_to_watts(14.0),
            dbm_to_watts(14.0),
            dbm_to_watts(-5.0),
            dbm_to_watts(-10.0),
            m_total,
        )
    }

    /// Split used by `variant` at the same total power and element count.
    /// Single-surface variants place both surface budgets on the active one.
    pub fn for_variant(&self, variant: Variant, m_total: usize) -> Self {
        let m = m_total as f64;
        let (p_dc, p_c) = (self.p_dc_per_element, self.p_c_per_element);
        let base = Self::dar(self.p_total, self.p_ris1, self.p_ris2, p_dc, p_c, m_total);
        match variant {
            Variant::DarIe | Variant::DarIdeal | Variant::DarNonIe => base,
            Variant::SarNearBs => Self {
                p_ris1: self.p_ris1 + self.p_ris2,
                p_ris2: 0.0,
                ..base
            },
            Variant::SarNearUsers => Self {
                p_ris1: 0.0,
                p_ris2: self.p_ris1 + self.p_ris2,
                ..base
            },
            Variant::Dpr => Self {
                p_bs: self.p_total - m * p_c,
                p_ris1: 0.0,
                p_ris2: 0.0,
                ..base
            },
        }
    }

    /// Total consumption implied by this split for `variant`.
    pub fn implied_total(&self, variant: Variant, m_total: usize) -> f64 {
        let m = m_total as f64;
        match variant {
            Variant::Dpr => self.p_bs + m * self.p_c_per_element,
            _ => {
                self.p_bs
                    + self.p_ris1
                    + self.p_ris2
                    + m * (self.p_dc_per_element + self.p_c_per_element)
            }
        }
    }
}

/// Sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    /// Maximum amplification gain in dB.
    AMax2Db,
    /// Total element count, split evenly.
    TotalM,
    /// Distance between the surfaces, centred on x = 30 m.
    Dr,
    /// Elements on RIS 1 with the total fixed.
    M1Split,
    /// Share of the surface power given to RIS 1, sum fixed at 17 dBm.
    Varpi,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::AMax2Db, Axis::TotalM, Axis::Dr, Axis::M1Split, Axis::Varpi];

    pub fn name(self) -> &'static str {
        match self {
            Axis::AMax2Db => "a_max2_db",
            Axis::TotalM => "m_total",
            Axis::Dr => "d_r",
            Axis::M1Split => "m1_split",
            Axis::Varpi => "varpi",
        }
    }
}

impl FromStr for Axis {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| BenchError::Invalid {
                field: "axis",
                reason: format!("unknown axis '{s}'"),
            })
    }
}

/// Combined surface budget of the power-allocation sweep.
pub const VARPI_SUM_DBM: f64 = 17.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub variant: Variant,
    pub geometry: Geometry,
    pub path_loss: PathLossParams,
    pub rician: RicianParams,
    /// DAR-form split; other variants derive theirs from it.
    pub budget: PowerBudget,
    pub a_max2_db: f64,
    /// Thermal noise power in watts at the users and at both surfaces.
    pub noise_power: f64,
    pub weights: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub pdd: PddConfig,
    /// Start DAR_IE from the scaled ideal-model solution instead of from
    /// a random feasible point.
    pub ie_warm_start: bool,
    /// Initial penalty of the warm-started DAR_IE solve.
    pub ie_refine_rho0: f64,
}

impl ScenarioConfig {
    /// Reference parameters with 8 elements per surface and 20 trials.
    pub fn desk() -> Self {
        Self::with_geometry(Geometry::desk_default(), 20)
    }

    /// Reference parameters with 16 elements per surface and 100 trials.
    pub fn full_scale() -> Self {
        Self::with_geometry(Geometry::full_default(), 100)
    }

    fn with_geometry(geometry: Geometry, trials: usize) -> Self {
        let m = geometry.m1_elements + geometry.m2_elements;
        let k = geometry.n_users;
        Self {
            variant: Variant::DarIe,
            geometry,
            path_loss: PathLossParams::default(),
            rician: RicianParams::default(),
            budget: PowerBudget::reference(m),
            a_max2_db: 40.0,
            noise_power: dbm_to_watts(-80.0),
            weights: vec![1.0; k],
            trials,
            seed: 0,
            pdd: PddConfig::default(),
            ie_warm_start: true,
            ie_refine_rho0: 1.0,
        }
    }

    pub fn m_total(&self) -> usize {
        self.geometry.m1_elements + self.geometry.m2_elements
    }

    pub fn a_max(&self) -> f64 {
        db_to_linear(self.a_max2_db).sqrt()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.geometry.validate()?;
        self.path_loss.validate()?;
        self.rician.validate()?;
        let invalid = |field, reason: &str| {
            Err(BenchError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if self.weights.len() != self.geometry.n_users {
            return invalid("weights", "one weight per user is required");
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return invalid("noise_power", "must be positive");
        }
        if !(self.a_max2_db >= 0.0 && self.a_max2_db.is_finite()) {
            return invalid("a_max2_db", "must be non-negative");
        }
        if self.trials == 0 {
            return invalid("trials", "must be at least 1");
        }
        let b = &self.budget;
        for (field, v) in [
            ("budget.p_total", b.p_total),
            ("budget.p_ris1", b.p_ris1),
            ("budget.p_ris2", b.p_ris2),
            ("budget.p_dc_per_element", b.p_dc_per_element),
            ("budget.p_c_per_element", b.p_c_per_element),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(field, "must be a non-negative power");
            }
        }
        if !(b.p_bs > 0.0) {
            return invalid("budget.p_total", "leaves no power for the BS");
        }
        if !(self.ie_refine_rho0 > 0.0 && self.ie_refine_rho0.is_finite()) {
            return invalid("ie_refine_rho0", "must be positive");
        }
        self.pdd.validate()?;
        Ok(())
    }

    /// Channel seed of trial `trial`; shared by all variants.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(trial as u64 + 1))
    }

    /// Seed of the random feasible starting point of trial `trial`.
    pub fn init_seed(&self, trial: usize) -> u64 {
        splitmix64(self.trial_seed(trial) ^ 0x5EED)
    }

    /// Returns a copy with the sweep axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self, BenchError> {
        let mut cfg = self.clone();
        let bad = |reason: &str| BenchError::Invalid {
            field: "axis_values",
            reason: format!("{} = {value}: {reason}", axis.name()),
        };
        let as_count = |v: f64| -> Result<usize, BenchError> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad("expected a whole number"))
            }
        };
        let b = self.budget;
        match axis {
            Axis::AMax2Db => cfg.a_max2_db = value,
            Axis::TotalM => {
                let m = as_count(value)?;
                if m < 2 || m % 2 != 0 {
                    return Err(bad("expected an even count of at least 2"));
                }
                cfg.geometry.m1_elements = m / 2;
                cfg.geometry.m2_elements = m / 2;
            }
            Axis::Dr => {
                if !(value > 0.0) {
                    return Err(bad("expected a positive distance"));
                }
                cfg.geometry.ris1_pos[0] = 30.0 - value / 2.0;
                cfg.geometry.ris2_pos[0] = 30.0 + value / 2.0;
            }
            Axis::M1Split => {
                let m1 = as_count(value)?;
                let m = self.m_total();
                if m1 == 0 || m1 >= m {
                    return Err(bad("both surfaces need at least one element"));
                }
                cfg.geometry.m1_elements = m1;
                cfg.geometry.m2_elements = m - m1;
            }
            Axis::Varpi => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(bad("expected a ratio in [0, 1]"));
                }
                let sum = dbm_to_watts(VARPI_SUM_DBM);
                cfg.budget.p_ris1 = value * sum;
                cfg.budget.p_ris2 = (1.0 - value) * sum;
            }
        }
        cfg.budget = PowerBudget::dar(
            b.p_total,
            cfg.budget.p_ris1,
            cfg.budget.p_ris2,
            b.p_dc_per_element,
            b.p_c_per_element,
            cfg.m_total(),
        );
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub trial: usize,
    /// WSR with the true inter-excitation (with X = Y = I for DAR_IDEAL).
    pub wsr_exact: f64,
    pub per_user_rates: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_violation: f64,
    pub converged: bool,
    pub ris_powers: (f64, f64),
    /// Non-IE scaling factor, 1 for the other variants.
    pub tau: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrialFailure {
    pub variant: Variant,
    pub seed: u64,
    pub trial: usize,
    pub error: BenchError,
    pub diagnostics: Option<Box<Diagnostics>>,
}

pub type TrialOutcome = Result<RunResult, TrialFailure>;

/// Channels of one trial with the variant's structural zeroing applied.
pub fn variant_channels(cfg: &ScenarioConfig, variant: Variant, trial: usize) -> Result<ChannelSet, BenchError> {
    let seed = cfg.trial_seed(trial);
    let m = cfg.m_total();
    let mut geom = cfg.geometry.clone();
    match variant {
        Variant::SarNearBs => {
            geom.m1_elements = m;
        }
        Variant::SarNearUsers => {
            geom.m2_elements = m;
        }
        _ => {}
    }
    let mut ch = synthesize(&geom, &cfg.path_loss, &cfg.rician, cfg.noise_power, seed)?;
    let zero = c64(0.0, 0.0);
    match variant {
        Variant::SarNearBs => {
            ch.h2.fill(zero);
            ch.g.fill(zero);
            ch.h2k.iter_mut().for_each(|h| h.fill(zero));
        }
        Variant::SarNearUsers => {
            ch.h1.fill(zero);
            ch.g.fill(zero);
            ch.h1k.iter_mut().for_each(|h| h.fill(zero));
        }
        Variant::Dpr => {
            ch.noise_ris1 = 0.0;
            ch.noise_ris2 = 0.0;
        }
        _ => {}
    }
    Ok(ch)
}

/// Optimizer settings and model structure of `variant`.
pub fn variant_setup(cfg: &ScenarioConfig, variant: Variant) -> (PddConfig, Budgets, f64) {
    let mut pdd = cfg.pdd.clone();
    pdd.weights = cfg.weights.clone();
    let split = cfg.budget.for_variant(variant, cfg.m_total());
    let mut budgets = Budgets {
        p_bs_max: split.p_bs,
        p1_max: split.p_ris1,
        p2_max: split.p_ris2,
    };
    let mut a_max = cfg.a_max();
    pdd.structure = match variant {
        Variant::DarIe => ProblemStructure::default(),
        Variant::DarIdeal | Variant::DarNonIe => ProblemStructure::ideal(),
        Variant::SarNearBs => ProblemStructure {
            ris_active: [true, false],
            ..ProblemStructure::default()
        },
        Variant::SarNearUsers => ProblemStructure {
            ris_active: [false, true],
            ..ProblemStructure::default()
        },
        Variant::Dpr => {
            a_max = 1.0;
            ProblemStructure {
                ris_power_limited: false,
                ..ProblemStructure::ideal()
            }
        }
    };
    // Inactive or unconstrained surfaces carry a nominal positive budget.
    for (i, p) in [&mut budgets.p1_max, &mut budgets.p2_max].into_iter().enumerate() {
        if !pdd.structure.power_constrained(i) {
            *p = f64::INFINITY;
        }
    }
    (pdd, budgets, a_max)
}

fn solve_variant(
    cfg: &ScenarioConfig,
    variant: Variant,
    trial: usize,
) -> Result<(ChannelSet, PddOutcome), TrialFailure> {
    let seed = cfg.trial_seed(trial);
    let fail = |error: BenchError, diagnostics: Option<Box<Diagnostics>>| TrialFailure {
        variant,
        seed,
        trial,
        error,
        diagnostics,
    };
    let ch = variant_channels(cfg, variant, trial).map_err(|e| fail(e, None))?;
    let (pdd, budgets, a_max) = variant_setup(cfg, variant);
    let init = init_feasible_with(&ch, &budgets, a_max, cfg.init_seed(trial), &pdd.structure)
        .map_err(|e| fail(e.into(), None))?;
    match pdd_solve(&ch, &init, &pdd) {
        Ok(out) => Ok((ch, out)),
        Err(PddFailure { error, diagnostics }) => Err(fail(error.into(), Some(diagnostics))),
    }
}

fn result_from(
    variant: Variant,
    cfg: &ScenarioConfig,
    trial: usize,
    ch: &ChannelSet,
    state: &BeamformingState,
    out: &PddOutcome,
    wsr_model: bool,
    tau: f64,
    wall: f64,
) -> RunResult {
    let (rates, wsr, powers) = match excitation_matrices(ch, &state.refl) {
        Ok(exc) => {
            let (sinr, wsr) = exact_wsr(ch, &state.refl, &exc, &state.w, &cfg.weights);
            let rates = sinr.iter().map(|s| (1.0 + s).log2()).collect::<Vec<_>>();
            (rates, wsr, ris_powers(ch, &state.refl, &exc, &state.w))
        }
        Err(_) => (vec![f64::NAN; ch.n_users()], f64::NAN, (f64::NAN, f64::NAN)),
    };
    let (rates, wsr) = if wsr_model {
        let eq = crate::objective::equivalent_channels_with(
            ch,
            &state.refl,
            &crate::numerics::identity(ch.m1()),
            &crate::numerics::identity(ch.m2()),
        );
        let (sinr, wsr) = crate::objective::sinr_and_wsr(&eq, &state.w, &ch.noise(), &cfg.weights);
        (sinr.iter().map(|s| (1.0 + s).log2()).collect(), wsr)
    } else {
        (rates, wsr)
    };
    RunResult {
        variant,
        seed: cfg.trial_seed(trial),
        trial,
        wsr_exact: wsr,
        per_user_rates: rates,
        outer_iterations: out.diagnostics.outer_iterations(),
        inner_iterations: out.diagnostics.inner.len(),
        final_violation: out.diagnostics.final_violation(),
        converged: out.diagnostics.converged,
        ris_powers: powers,
        tau,
        wall_time: wall,
    }
}

/// Largest `tau` in `(0, 1]` such that the reflections scaled by `tau`
/// meet both surface budgets under the true inter-excitation and keep the
/// loop inside the stability margin. Bisection to [`TAU_TOL`].
pub fn find_tau(
    ch: &ChannelSet,
    refl: &ReflectionState,
    w: &crate::numerics::CMatrix,
    budgets: &Budgets,
) -> Result<f64, BenchError> {
    let ok = |t: f64| -> bool {
        let r = refl.scaled(t);
        match loop_radius(ch, &r) {
            Some(rad) if rad < 1.0 - STABILITY_MARGIN => {}
            _ => return false,
        }
        match excitation_matrices(ch, &r) {
            Ok(exc) => {
                let (p1, p2) = ris_powers(ch, &r, &exc, w);
                p1 <= budgets.p1_max && p2 <= budgets.p2_max
            }
            Err(_) => false,
        }
    };
    if ok(1.0) {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > TAU_TOL {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 || !ok(lo) {
        return Err(BenchError::InfeasibleScaling(
            "no positive scaling meets the surface budgets".into(),
        ));
    }
    Ok(lo)
}

type Shared<T> = Option<Result<T, TrialFailure>>;

/// Ideal-model solve and its scaled (non-IE) state, computed once per trial.
struct IdealStage {
    ch: ChannelSet,
    out: PddOutcome,
    secs: f64,
}

fn relabel(f: &TrialFailure, variant: Variant) -> TrialFailure {
    TrialFailure {
        variant,
        ..f.clone()
    }
}

/// Runs all `variants` for one trial. The ideal-model solve is shared by
/// DAR_IDEAL, DAR_NON_IE and the warm-started DAR_IE.
pub fn run_trial(cfg: &ScenarioConfig, variants: &[Variant], trial: usize) -> Vec<TrialOutcome> {
    let seed = cfg.trial_seed(trial);
    let mut ideal: Shared<IdealStage> = None;
    let mut scaled: Shared<(BeamformingState, f64, f64)> = None;
    let ideal_stage = |ideal: &mut Shared<IdealStage>| -> Result<(), TrialFailure> {
        ideal
            .get_or_insert_with(|| {
                let t = Instant::now();
                solve_variant(cfg, Variant::DarIdeal, trial).map(|(ch, out)| IdealStage {
                    ch,
                    out,
                    secs: t.elapsed().as_secs_f64(),
                })
            })
            .as_ref()
            .map(|_| ())
            .map_err(Clone::clone)
    };
    let scaled_stage = |ideal: &mut Shared<IdealStage>,
                            scaled: &mut Shared<(BeamformingState, f64, f64)>|
     -> Result<(), TrialFailure> {
        ideal_stage(ideal)?;
        let st = ideal.as_ref().and_then(|r| r.as_ref().ok()).expect("ideal stage");
        scaled
            .get_or_insert_with(|| {
                let t = Instant::now();
                let (_, budgets, _) = variant_setup(cfg, Variant::DarIe);
                find_tau(&st.ch, &st.out.state.refl, &st.out.state.w, &budgets)
                    .map(|tau| {
                        let mut state = st.out.state.clone();
                        state.refl = state.refl.scaled(tau);
                        (state, tau, st.secs + t.elapsed().as_secs_f64())
                    })
                    .map_err(|error| TrialFailure {
                        variant: Variant::DarNonIe,
                        seed,
                        trial,
                        error,
                        diagnostics: None,
                    })
            })
            .as_ref()
            .map(|_| ())
            .map_err(Clone::clone)
    };

    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let start = Instant::now();
        let res = match variant {
            Variant::DarIdeal => ideal_stage(&mut ideal).map(|()| {
                let st = ideal.as_ref().and_then(|r| r.as_ref().ok()).expect("ideal stage");
                result_from(variant, cfg, trial, &st.ch, &st.out.state, &st.out, true, 1.0, st.secs)
            }),
            Variant::DarNonIe => scaled_stage(&mut ideal, &mut scaled)
                .map(|()| {
                    let st = ideal.as_ref().and_then(|r| r.as_ref().ok()).expect("ideal stage");
                    let (state, tau, secs) =
                        scaled.as_ref().and_then(|r| r.as_ref().ok()).expect("scaled stage");
                    result_from(variant, cfg, trial, &st.ch, state, &st.out, false, *tau, *secs)
                })
                .map_err(|f| relabel(&f, variant)),
            Variant::DarIe if cfg.ie_warm_start => {
                match scaled_stage(&mut ideal, &mut scaled) {
                    Ok(()) => {
                        let st = ideal.as_ref().and_then(|r| r.as_ref().ok()).expect("ideal stage");
                        let (state, _, secs) =
                            scaled.as_ref().and_then(|r| r.as_ref().ok()).expect("scaled stage");
                        if st.ch.g.iter().all(|z| z.norm_sqr() == 0.0) {
                            // Without coupling the two problems coincide.
                            out.push(Ok(result_from(
                                variant, cfg, trial, &st.ch, &st.out.state, &st.out, false, 1.0, st.secs,
                            )));
                            continue;
                        }
                        let (mut pdd, _, _) = variant_setup(cfg, variant);
                        pdd.rho0 = cfg.ie_refine_rho0;
                        let t = Instant::now();
                        match pdd_solve(&st.ch, state, &pdd) {
                            Ok(o) => {
                                let wall = secs + t.elapsed().as_secs_f64();
                                Ok(result_from(variant, cfg, trial, &st.ch, &o.state, &o, false, 1.0, wall))
                            }
                            Err(PddFailure { error, diagnostics }) => Err(TrialFailure {
                                variant,
                                seed,
                                trial,
                                error: error.into(),
                                diagnostics: Some(diagnostics),
                            }),
                        }
                    }
                    // No usable ideal point: fall back to a cold start.
                    Err(_) => cold(cfg, variant, trial, start),
                }
            }
            _ => cold(cfg, variant, trial, start),
        };
        out.push(res);
    }
    out
}

fn cold(cfg: &ScenarioConfig, variant: Variant, trial: usize, start: Instant) -> TrialOutcome {
    solve_variant(cfg, variant, trial).map(|(ch, o)| {
        let wall = start.elapsed().as_secs_f64();
        result_from(variant, cfg, trial, &ch, &o.state, &o, false, 1.0, wall)
    })
}

/// Runs `cfg.variant` over `cfg.trials` trials.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<TrialOutcome>, BenchError> {
    run_variants(cfg, &[cfg.variant])
}

/// Runs several variants on paired channels; results are ordered by
/// trial, then by the order of `variants`.
pub fn run_variants(cfg: &ScenarioConfig, variants: &[Variant]) -> Result<Vec<TrialOutcome>, BenchError> {
    cfg.validate()?;
    Ok((0..cfg.trials)
        .into_par_iter()
        .flat_map_iter(|trial| run_trial(cfg, variants, trial))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub variant: Variant,
    pub mean_wsr: f64,
    pub std_wsr: f64,
    pub n_trials: usize,
    pub n_failed: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(axis: &str, value: f64, variant: Variant, outcomes: &[TrialOutcome]) -> SweepRow {
    let mine: Vec<&TrialOutcome> = outcomes
        .iter()
        .filter(|o| match o {
            Ok(r) => r.variant == variant,
            Err(f) => f.variant == variant,
        })
        .collect();
    let wsr: Vec<f64> = mine
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|r| r.wsr_exact)
        .filter(|w| w.is_finite())
        .collect();
    let (mean_wsr, std_wsr) = mean_std(&wsr);
    SweepRow {
        axis_name: axis.to_string(),
        axis_value: value,
        variant,
        mean_wsr,
        std_wsr,
        n_trials: mine.len(),
        n_failed: mine.len() - wsr.len(),
    }
}

/// One table row per axis value and variant, on paired channels.
pub fn sweep(
    cfg: &ScenarioConfig,
    axis: Axis,
    values: &[f64],
    variants: &[Variant],
) -> Result<(Vec<SweepRow>, Vec<TrialOutcome>), BenchError> {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &v in values {
        let point = cfg.with_axis(axis, v)?;
        let outcomes = run_variants(&point, variants)?;
        for &variant in variants {
            rows.push(summarize(axis.name(), v, variant, &outcomes));
        }
        all.extend(outcomes);
    }
    Ok((rows, all))
}

/// Paired mean of `a - b` over trials where both succeeded.
pub fn paired_gap(outcomes: &[TrialOutcome], a: Variant, b: Variant) -> (f64, usize) {
    let pick = |v: Variant| -> std::collections::BTreeMap<usize, f64> {
        outcomes
            .iter()
            .filter_map(|o| o.as_ref().ok())
            .filter(|r| r.variant == v && r.wsr_exact.is_finite())
            .map(|r| (r.trial, r.wsr_exact))
            .collect()
    };
    let (ma, mb) = (pick(a), pick(b));
    let gaps: Vec<f64> = ma
        .iter()
        .filter_map(|(t, x)| mb.get(t).map(|y| x - y))
        .collect();
    (mean_std(&gaps).0, gaps.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RunRow<'a> {
    variant: Variant,
    seed: u64,
    trial: usize,
    wsr_exact: f64,
    per_user_rates: String,
    outer_iterations: usize,
    inner_iterations: usize,
    final_violation: f64,
    converged: bool,
    p_ris1: f64,
    p_ris2: f64,
    tau: f64,
    error: &'a str,
}

/// Writes one row per trial; failed trials carry their error text. Wall
/// times go to [`write_timings_csv`] so that this table is reproducible.
pub fn write_results_csv<W: Write>(out: W, outcomes: &[TrialOutcome]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(out);
    for o in outcomes {
        let row = match o {
            Ok(r) => RunRow {
                variant: r.variant,
                seed: r.seed,
                trial: r.trial,
                wsr_exact: r.wsr_exact,
                per_user_rates: r
                    .per_user_rates
                    .iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(";"),
                outer_iterations: r.outer_iterations,
                inner_iterations: r.inner_iterations,
                final_violation: r.final_violation,
                converged: r.converged,
                p_ris1: r.ris_powers.0,
                p_ris2: r.ris_powers.1,
                tau: r.tau,
                error: "",
            },
            Err(f) => {
                let msg = f.error.to_string();
                let row = RunRow {
                    variant: f.variant,
                    seed: f.seed,
                    trial: f.trial,
                    wsr_exact: f64::NAN,
                    per_user_rates: String::new(),
                    outer_iterations: 0,
                    inner_iterations: 0,
                    final_violation: f64::NAN,
                    converged: false,
                    p_ris1: f64::NAN,
                    p_ris2: f64::NAN,
                    tau: f64::NAN,
                    error: "",
                };
                wr.serialize(RunRow { error: &msg, ..row })?;
                continue;
            }
        };
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct TimingRow {
    variant: Variant,
    trial: usize,
    wall_time: f64,
}

pub fn write_timings_csv<W: Write>(out: W, outcomes: &[TrialOutcome]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(out);
    for r in outcomes.iter().flatten() {
        wr.serialize(TimingRow {
            variant: r.variant,
            trial: r.trial,
            wall_time: r.wall_time,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(out);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Steady-state trace for a random feasible state of trial 0 at `seed`.
pub fn bounce_trace(cfg: &ScenarioConfig, seed: u64, bounces: usize) -> Result<SteadyStateReport, BenchError> {
    let mut c = cfg.clone();
    c.seed = seed;
    let ch = variant_channels(&c, Variant::DarIe, 0)?;
    let (_, budgets, a_max) = variant_setup(&c, Variant::DarIe);
    let init = crate::pdd::init_feasible(&ch, &budgets, a_max, c.trial_seed(0))?;
    let noise = NoiseRealization::draw(&ch, splitmix64(c.trial_seed(0) ^ 0xB0));
    bounce_simulate(&ch, &init.refl, &init.w, &noise, bounces)
        .map_err(|e| BenchError::Pdd(PddError::Excitation(e)))
}

#[derive(Debug, Clone, Serialize)]
struct BounceRow {
    bounce: usize,
    zeta_1: f64,
    zeta_2: f64,
}

/// Relative steady-state factors per bounce.
pub fn write_bounce_csv<W: Write>(out: W, report: &SteadyStateReport) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(out);
    for (i, (z1, z2)) in report
        .relative_trace_1()
        .into_iter()
        .zip(report.relative_trace_2())
        .enumerate()
    {
        wr.serialize(BounceRow {
            bounce: i + 1,
            zeta_1: z1,
            zeta_2: z2,
        })?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_split() {
        let b = PowerBudget::reference(16);
        assert!((b.p_bs - 0.94313).abs() < 1e-4);
        for v in Variant::ALL {
            let s = b.for_variant(v, 16);
            assert!((s.implied_total(v, 16) - b.p_total).abs() <= 1e-15);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}
