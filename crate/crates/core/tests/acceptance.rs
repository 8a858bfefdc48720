//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr and asserts it. Tests take a shared lock so their runtimes are
//! measured without contention.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use common::{dual_lower_bound, point, rand_mat, rand_vec, small_geometry, x_as_qcqp};
use rand::Rng;

use dar_core::bench::{run_variants, variant_channels, variant_setup, Axis, ScenarioConfig, TrialOutcome, Variant};
use dar_core::channel::{stream_rng, ChannelSet, Geometry};
use dar_core::excitation::{
    bounce_simulate, bounce_simulate_with_tol, excitation_matrices, excitation_matrices_with_margin, loop_matrices,
    neumann_series, stabilized_signals, NoiseRealization, ReflectionState,
};
use dar_core::numerics::{c64, diag_from, hadamard, kron, spectral_radius, vec, CMatrix, CVector};
use dar_core::objective::{
    equivalent_channels_aux, exact_wsr, fr_objective, AuxiliaryState, ProblemStructure,
};
use dar_core::pdd::{
    build_psi_subproblem, build_w_subproblem, build_x_subproblem, feasibility_excess, init_feasible,
    init_feasible_with, pdd_solve, solve_psi_ellipsoid, solve_w_ellipsoid, update_gamma, update_xi, Budgets,
    PddConfig, PddOutcome, Side,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

fn rel_err(a: C64Like, b: C64Like) -> f64 {
    let d = (a.0 - b.0).hypot(a.1 - b.1);
    let s = a.0.hypot(a.1).max(b.0.hypot(b.1));
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

type C64Like = (f64, f64);

fn cplx(z: num_complex::Complex64) -> C64Like {
    (z.re, z.im)
}

// ---------------------------------------------------------------- 1

const IDENTITY_TOL: f64 = 1e-11;
const IDENTITY_INSTANCES: usize = 1000;
const IDENTITY_SECONDS: f64 = 10.0;

#[test]
fn criterion_1_matrix_identities() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = stream_rng(1, 0xC1, 0);
    let size = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(1..=16usize);
    let mut worst_h = 0.0_f64;
    for i in 0..IDENTITY_INSTANCES {
        let m = size(&mut rng);
        let a = rand_mat(m, m, 1.0, i as u64, 1);
        let b = rand_mat(m, m, 1.0, i as u64, 2);
        let p = rand_vec(m, 1.0, i as u64, 3);
        let psi = diag_from(&p);
        let direct = (&psi * &a * psi.adjoint() * &b).trace();
        let v = p.conjugate();
        let h = hadamard(&a, &b.transpose()).unwrap();
        let quad = (v.adjoint() * h * &v)[(0, 0)];
        worst_h = worst_h.max(rel_err(cplx(direct), cplx(quad)));
    }
    let mut worst_k = 0.0_f64;
    for i in 0..IDENTITY_INSTANCES {
        let (m, n, p, q) = (size(&mut rng), size(&mut rng), size(&mut rng), size(&mut rng));
        let s = 1000 + i as u64;
        let a = rand_mat(m, n, 1.0, s, 1);
        let b = rand_mat(n, p, 1.0, s, 2);
        let c = rand_mat(p, q, 1.0, s, 3);
        let d = rand_mat(q, m, 1.0, s, 4);
        let direct = (&a * &b * &c * &d).trace();
        let lhs = vec(&d.transpose()).transpose();
        let via = (lhs * kron(&c.transpose(), &a) * vec(&b))[(0, 0)];
        worst_k = worst_k.max(rel_err(cplx(direct), cplx(via)));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_h <= IDENTITY_TOL && worst_k <= IDENTITY_TOL && secs < IDENTITY_SECONDS;
    report(
        1,
        pass,
        &format!("hadamard worst {worst_h:.2e}, kron worst {worst_k:.2e} (tol {IDENTITY_TOL:e}), {secs:.2} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

const NEUMANN_TOL: f64 = 1e-10;
const BOUNCE_TOL: f64 = 1e-8;
const STABLE_INSTANCES: usize = 500;
const ORACLE_SECONDS: f64 = 30.0;

/// Random reflections scaled so that the loop radius is `target`.
fn stable_instance(ch: &ChannelSet, seed: u64, target: f64) -> ReflectionState {
    let mut rng = stream_rng(seed, 0xC2, 0);
    let mut draw = |m: usize| {
        CVector::from_fn(m, |_, _| {
            let a = 1.0 + 9.0 * rng.random::<f64>();
            let th = std::f64::consts::TAU * rng.random::<f64>();
            c64(a * th.cos(), a * th.sin())
        })
    };
    let refl = ReflectionState::new(draw(ch.m1()), draw(ch.m2()), 1e6);
    let (l1, _) = loop_matrices(ch, &refl);
    let r0 = spectral_radius(&l1).unwrap();
    refl.scaled((target / r0).sqrt())
}

#[test]
fn criterion_2_inter_excitation_oracle() {
    let _g = serial();
    let start = Instant::now();
    let geom = Geometry::desk_default();
    let mut worst_neumann = 0.0_f64;
    let mut worst_bounce = 0.0_f64;
    let mut unconverged = 0;
    for i in 0..STABLE_INSTANCES {
        let seed = 7000 + i as u64;
        let ch = common::channel(&geom, seed);
        let target = 0.1 + 0.8 * (i as f64 + 0.5) / STABLE_INSTANCES as f64;
        let refl = stable_instance(&ch, seed, target);
        let exc = excitation_matrices_with_margin(&ch, &refl, 0.0).unwrap();
        let (l1, l2) = loop_matrices(&ch, &refl);
        let radius = spectral_radius(&l1).unwrap();
        assert!(radius <= 0.9 + 1e-9);
        let terms = ((1e-18_f64).ln() / radius.ln()).ceil() as usize * 2 + 50;
        for (xi, l) in [(&exc.xi1, &l1), (&exc.xi2, &l2)] {
            let series = neumann_series(l, terms);
            worst_neumann = worst_neumann.max((xi - &series).norm() / xi.norm());
        }
        if i % 5 == 0 {
            let w = rand_mat(ch.n_antennas(), ch.n_users(), 0.05, seed, 9);
            let noise = NoiseRealization::draw(&ch, seed);
            let rep = bounce_simulate_with_tol(&ch, &refl, &w, &noise, 20_000, 1e-13).unwrap();
            if rep.bounces_to_converge.is_none() {
                unconverged += 1;
            }
            let (y1, y2) = stabilized_signals(&ch, &refl, &exc, &w, &noise);
            let e1 = (&rep.final_y1 - &y1).norm() / y1.norm();
            let e2 = (&rep.final_y2 - &y2).norm() / y2.norm();
            worst_bounce = worst_bounce.max(e1).max(e2);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass =
        worst_neumann <= NEUMANN_TOL && worst_bounce <= BOUNCE_TOL && unconverged == 0 && secs < ORACLE_SECONDS;
    report(
        2,
        pass,
        &format!(
            "neumann worst {worst_neumann:.2e} (tol {NEUMANN_TOL:e}), bounce worst {worst_bounce:.2e} \
             (tol {BOUNCE_TOL:e}), {unconverged} unconverged, {secs:.1} s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

const STEADY_REALIZATIONS: usize = 100;
const STEADY_BOUNCES: usize = 20;
const STEADY_REQUIRED: usize = 95;

#[test]
fn criterion_3_steady_state_within_20_bounces() {
    let _g = serial();
    let start = Instant::now();
    let cfg = ScenarioConfig::desk();
    let (pdd, budgets, a_max) = variant_setup(&cfg, Variant::DarIe);
    let mut ok = 0;
    for trial in 0..STEADY_REALIZATIONS {
        let ch = variant_channels(&cfg, Variant::DarIe, trial).unwrap();
        let init = init_feasible_with(&ch, &budgets, a_max, cfg.init_seed(trial), &pdd.structure).unwrap();
        let noise = NoiseRealization::draw(&ch, trial as u64);
        let rep = bounce_simulate(&ch, &init.refl, &init.w, &noise, STEADY_BOUNCES).unwrap();
        if rep.converged_within(STEADY_BOUNCES) {
            ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = ok >= STEADY_REQUIRED && secs < 60.0;
    report(
        3,
        pass,
        &format!("{ok}/{STEADY_REALIZATIONS} settle below 1e-6 within {STEADY_BOUNCES} bounces, {secs:.1} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

const FP_TOL: f64 = 1e-8;
const FP_STATES: usize = 200;

#[test]
fn criterion_4_fp_tightness() {
    let _g = serial();
    let start = Instant::now();
    let geom = Geometry::desk_default();
    let mut worst = 0.0_f64;
    let mut wsr_range = (f64::INFINITY, 0.0_f64);
    for i in 0..FP_STATES {
        let seed = 20_000 + i as u64;
        let ch = common::channel(&geom, seed);
        let a_max = 1.0 + 99.0 * (i as f64 / FP_STATES as f64);
        let init = init_feasible(&ch, &Budgets::desk_default(), a_max, seed).unwrap();
        let mut refl = init.refl.clone();
        let amp = rand_vec(ch.m1() + ch.m2(), 1.0, seed, 3);
        for (m, z) in refl.psi1.iter_mut().chain(refl.psi2.iter_mut()).enumerate() {
            *z *= 1.0 + (a_max - 1.0) * (amp[m].norm() / 3.0).min(1.0);
        }
        let w = rand_mat(ch.n_antennas(), ch.n_users(), 0.25, seed, 4);
        let k = ch.n_users();
        let weights: Vec<f64> = (0..k).map(|j| 0.5 + (j as f64 + i as f64 * 0.37) % 1.0).collect();
        let exc = match excitation_matrices(&ch, &refl) {
            Ok(e) => e,
            Err(_) => continue,
        };
        let mut aux = AuxiliaryState::consistent(&refl, &exc, k);
        let eq = equivalent_channels_aux(&ch, &refl, &aux);
        aux.gamma = update_gamma(&eq, &w, &ch.noise());
        aux.xi = update_xi(&eq, &w, &aux.gamma, &weights, &ch.noise());
        let fr = fr_objective(&aux, &eq, &w, &weights, &ch.noise());
        let (_, wsr) = exact_wsr(&ch, &refl, &exc, &w, &weights);
        worst = worst.max((fr - wsr).abs());
        wsr_range = (wsr_range.0.min(wsr), wsr_range.1.max(wsr));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= FP_TOL && secs < 30.0;
    report(
        4,
        pass,
        &format!(
            "worst |f_r - WSR| {worst:.2e} (tol {FP_TOL:e}), WSR range [{:.2}, {:.2}], {secs:.1} s",
            wsr_range.0, wsr_range.1
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

const STATIONARITY_TOL: f64 = 1e-5;
const BLOCK_GAP_TOL: f64 = 1e-3;
const BLOCK_INSTANCES: u64 = 50;
const BLOCK_FEAS_TOL: f64 = 1e-6;

/// Central-difference gradient of f_r in gamma and xi, with each
/// coordinate perturbed relative to its own size.
fn fd_gradient_norm(p: &common::Point) -> f64 {
    let eq = equivalent_channels_aux(&p.ch, &p.refl, &p.aux);
    let noise = p.ch.noise();
    let f = |aux: &AuxiliaryState| fr_objective(aux, &eq, &p.w, &p.weights, &noise);
    let h = 1e-5;
    let mut sq = 0.0;
    for k in 0..p.aux.gamma.len() {
        let step = h * (1.0 + p.aux.gamma[k]);
        let (mut up, mut dn) = (p.aux.clone(), p.aux.clone());
        up.gamma[k] += step;
        dn.gamma[k] -= step;
        sq += ((f(&up) - f(&dn)) / (2.0 * h)).powi(2);
        for dir in [c64(1.0, 0.0), c64(0.0, 1.0)] {
            let step = dir * (h * p.aux.xi[k].norm());
            let (mut up, mut dn) = (p.aux.clone(), p.aux.clone());
            up.xi[k] += step;
            dn.xi[k] -= step;
            sq += ((f(&up) - f(&dn)) / (2.0 * h)).powi(2);
        }
    }
    sq.sqrt()
}

/// True when some constraint holds with equality to 1e-6 relative.
fn binding(q: &dar_core::pdd::Qcqp, x: &CMatrix) -> bool {
    q.constraint_excess(x)
        .iter()
        .zip(&q.constraints)
        .any(|(e, c)| e.abs() <= 1e-6 * c.cap.abs())
}

#[test]
fn criterion_5_block_stationarity_and_oracles() {
    let _g = serial();
    let start = Instant::now();
    let geom = small_geometry();
    let cfg = PddConfig::default();
    let structure = ProblemStructure::default();
    let mut worst_grad = 0.0_f64;
    let mut worst_gap = BTreeMap::<&str, f64>::new();
    let mut infeasible = 0;
    let mut failures = 0;
    let mut active = BTreeMap::<&str, usize>::new();
    let mut note = |name: &'static str, gap: f64| {
        let e = worst_gap.entry(name).or_insert(f64::NEG_INFINITY);
        *e = e.max(gap);
    };
    for seed in 0..BLOCK_INSTANCES {
        let p = point(&geom, 40_000 + seed);
        worst_grad = worst_grad.max(fd_gradient_norm(&p));

        // Odd instances shrink the caps so that the power constraints bind.
        let shrink = if seed % 2 == 1 { 1e-2 } else { 1.0 };
        let mut sub = build_w_subproblem(&p.ch, &p.refl, &p.aux, &p.weights, &p.budgets, &structure).unwrap();
        sub.p_bs *= shrink;
        let q = sub.to_qcqp();
        match solve_w_ellipsoid(&sub, &cfg, None) {
            Ok(w) => {
                let f = q.objective(&w);
                let lb = dual_lower_bound(&q, f.abs(), 20_000);
                note("W", (f - lb) / lb.abs().max(f.abs()));
                infeasible += usize::from(!q.is_feasible(&w, BLOCK_FEAS_TOL));
                *active.entry("W").or_insert(0) += usize::from(binding(&q, &w));
            }
            Err(_) => failures += 1,
        }

        for side in [Side::One, Side::Two] {
            let mut sub = build_psi_subproblem(
                &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &p.weights, &p.budgets, &structure, side,
            );
            if shrink < 1.0 {
                let free = dar_core::numerics::solve_hermitian(&sub.a_psi, &CMatrix::from_column_slice(
                    sub.b_psi.len(),
                    1,
                    sub.b_psi.as_slice(),
                ));
                let v = CVector::from_column_slice(free.conjugate().as_slice());
                sub.p1_cap = sub.p1_cap.min(0.5 * sub.powers_coeffs(&v).0);
            }
            let q = sub.to_qcqp();
            match solve_psi_ellipsoid(&sub, &cfg, None) {
                Ok(v) => {
                    let x = CMatrix::from_column_slice(v.len(), 1, v.conjugate().as_slice());
                    let f = q.objective(&x);
                    let lb = dual_lower_bound(&q, f.abs(), 20_000);
                    note("psi", (f - lb) / lb.abs().max(f.abs()));
                    infeasible += usize::from(!q.is_feasible(&x, BLOCK_FEAS_TOL));
                    *active.entry("psi").or_insert(0) += usize::from(binding(&q, &x));
                }
                Err(_) => failures += 1,
            }

            let mut sub = build_x_subproblem(
                &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &p.weights, &p.budgets, &structure, side,
            )
            .unwrap();
            if shrink < 1.0 {
                let mut free = sub.clone();
                free.p1_cap = f64::INFINITY;
                let (x, _) = free.solve(cfg.bisection_tol).unwrap();
                sub.p1_cap = sub.p1_cap.min(0.5 * sub.power(&x));
            }
            let q = x_as_qcqp(&sub);
            match sub.solve(cfg.bisection_tol) {
                Ok((x, _)) => {
                    let xv = vec(&x);
                    let xm = CMatrix::from_column_slice(xv.len(), 1, xv.as_slice());
                    let f = q.objective(&xm);
                    assert!((f - sub.objective(&x)).abs() <= 1e-9 * f.abs().max(1e-300));
                    let lb = dual_lower_bound(&q, f.abs(), 20_000);
                    note("X", (f - lb) / lb.abs().max(f.abs()));
                    infeasible += usize::from(!q.is_feasible(&xm, BLOCK_FEAS_TOL));
                    *active.entry("X").or_insert(0) += usize::from(binding(&q, &xm));
                }
                Err(_) => failures += 1,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let gaps_ok = worst_gap.values().all(|g| *g <= BLOCK_GAP_TOL);
    let pass = worst_grad < STATIONARITY_TOL && gaps_ok && infeasible == 0 && failures == 0 && secs < 300.0;
    report(
        5,
        pass,
        &format!(
            "fd gradient worst {worst_grad:.2e} (tol {STATIONARITY_TOL:e}), relative gaps {worst_gap:?} \
             (tol {BLOCK_GAP_TOL:e}), binding counts {active:?}, {infeasible} infeasible, \
             {failures} failed, {secs:.1} s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

const ENVELOPE_SEEDS: usize = 20;
const ENVELOPE_MAX_OUTER: usize = 80;
const ENVELOPE_VIOLATION: f64 = 1e-8;
const ENVELOPE_SLACK: f64 = 1e-6;
const ENVELOPE_REQUIRED: usize = 18;

type Solved = (ChannelSet, PddConfig, Result<PddOutcome, String>, f64);

/// Cold DAR_IE solves at the desk defaults, shared with criterion 9.
fn ie_solves() -> &'static Vec<Solved> {
    static CELL: OnceLock<Vec<Solved>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ScenarioConfig::desk();
        (0..ENVELOPE_SEEDS)
            .map(|trial| {
                let t = Instant::now();
                let ch = variant_channels(&cfg, Variant::DarIe, trial).unwrap();
                let (mut pdd, budgets, a_max) = variant_setup(&cfg, Variant::DarIe);
                pdd.track_blocks = true;
                let init =
                    init_feasible_with(&ch, &budgets, a_max, cfg.init_seed(trial), &pdd.structure).unwrap();
                let out = pdd_solve(&ch, &init, &pdd).map_err(|e| e.to_string());
                (ch, pdd, out, t.elapsed().as_secs_f64())
            })
            .collect()
    })
}

#[test]
fn criterion_6_pdd_convergence_envelope() {
    let _g = serial();
    let start = Instant::now();
    let solves = ie_solves();
    let mut ok = 0;
    let mut lines = Vec::new();
    for (trial, (_, _, out, secs)) in solves.iter().enumerate() {
        match out {
            Ok(o) => {
                let d = &o.diagnostics;
                let good = d.converged
                    && d.outer_iterations() <= ENVELOPE_MAX_OUTER
                    && d.final_violation() <= ENVELOPE_VIOLATION
                    && d.is_monotone(ENVELOPE_SLACK);
                ok += usize::from(good);
                if !good {
                    lines.push(format!(
                        "trial {trial}: outer {} violation {:.1e} worst block change {:.1e} ({secs:.1} s)",
                        d.outer_iterations(),
                        d.final_violation(),
                        d.worst_block_change
                    ));
                }
            }
            Err(e) => lines.push(format!("trial {trial}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = ok >= ENVELOPE_REQUIRED && secs < 1800.0;
    report(
        6,
        pass,
        &format!("{ok}/{ENVELOPE_SEEDS} within the envelope, {secs:.0} s; misses: {lines:?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

const ORDERING_TRIALS: usize = 20;
const IE_OVER_NON_IE: f64 = 1.10;

/// Mean WSR per variant over the trials on which every variant succeeded.
fn paired_means(outcomes: &[TrialOutcome], variants: &[Variant]) -> (BTreeMap<Variant, f64>, usize) {
    let mut by_trial = BTreeMap::<usize, BTreeMap<Variant, f64>>::new();
    for r in outcomes.iter().flatten() {
        if r.wsr_exact.is_finite() {
            by_trial.entry(r.trial).or_default().insert(r.variant, r.wsr_exact);
        }
    }
    let complete: Vec<_> = by_trial.values().filter(|m| variants.iter().all(|v| m.contains_key(v))).collect();
    let n = complete.len();
    let means = variants
        .iter()
        .map(|v| (*v, complete.iter().map(|m| m[v]).sum::<f64>() / n.max(1) as f64))
        .collect();
    (means, n)
}

#[test]
fn criterion_7_scenario_ordering() {
    let _g = serial();
    let start = Instant::now();
    let mut cfg = ScenarioConfig::desk();
    cfg.trials = ORDERING_TRIALS;
    cfg.a_max2_db = 40.0;
    let variants = [
        Variant::DarIe,
        Variant::DarNonIe,
        Variant::Dpr,
        Variant::SarNearBs,
        Variant::SarNearUsers,
    ];
    let outcomes = run_variants(&cfg, &variants).unwrap();
    let (m, n) = paired_means(&outcomes, &variants);
    let ie = m[&Variant::DarIe];
    let checks = [
        ie >= m[&Variant::DarNonIe],
        ie >= m[&Variant::Dpr],
        ie >= m[&Variant::SarNearBs],
        ie >= m[&Variant::SarNearUsers],
        ie >= IE_OVER_NON_IE * m[&Variant::DarNonIe],
    ];
    let secs = start.elapsed().as_secs_f64();
    let pass = n >= ORDERING_TRIALS && checks.iter().all(|c| *c) && secs < 7200.0;
    let means: Vec<String> = m.iter().map(|(v, x)| format!("{}={x:.3}", v.name())).collect();
    report(
        7,
        pass,
        &format!(
            "{n} paired trials, means [{}], IE/NON_IE {:.3} (need {IE_OVER_NON_IE}), checks {checks:?}, {secs:.0} s",
            means.join(", "),
            ie / m[&Variant::DarNonIe]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

const TREND_TRIALS: usize = 20;
const DR_GAP_RATIO: f64 = 0.25;

fn paired_gap(cfg: &ScenarioConfig, a: Variant, b: Variant) -> (f64, usize) {
    let outcomes = run_variants(cfg, &[a, b]).unwrap();
    let (m, n) = paired_means(&outcomes, &[a, b]);
    (m[&a] - m[&b], n)
}

#[test]
fn criterion_8_gap_trends() {
    let _g = serial();
    let start = Instant::now();
    let mut base = ScenarioConfig::desk();
    base.trials = TREND_TRIALS;
    let mut gaps = Vec::new();
    let mut counts = Vec::new();
    for db in [36.0, 44.0, 52.0] {
        let cfg = base.with_axis(Axis::AMax2Db, db).unwrap();
        let (g, n) = paired_gap(&cfg, Variant::DarIe, Variant::DarIdeal);
        gaps.push(g);
        counts.push(n);
    }
    let non_increasing = gaps.windows(2).all(|w| w[1] <= w[0]);
    let mut dr = Vec::new();
    for d in [10.0, 50.0] {
        let cfg = base.with_axis(Axis::Dr, d).unwrap();
        let (g, n) = paired_gap(&cfg, Variant::DarIe, Variant::DarNonIe);
        dr.push(g);
        counts.push(n);
    }
    let shrinks = dr[1] <= DR_GAP_RATIO * dr[0];
    let secs = start.elapsed().as_secs_f64();
    let pass = non_increasing && shrinks && counts.iter().all(|n| *n >= TREND_TRIALS) && secs < 7200.0;
    report(
        8,
        pass,
        &format!(
            "IE-IDEAL gaps at 36/44/52 dB {gaps:.3?} (non-increasing: {non_increasing}); \
             IE-NON_IE gaps at d_r 10/50 m {dr:.3?} (ratio {:.3}, need <= {DR_GAP_RATIO}); \
             paired trials {counts:?}, {secs:.0} s",
            dr[1] / dr[0]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

const OUTPUT_FEAS_TOL: f64 = 1e-6;
const OTHER_VARIANT_TRIALS: usize = 5;

fn amplitudes_in_range(refl: &ReflectionState, structure: &ProblemStructure) -> bool {
    [(&refl.psi1, structure.ris_active[0]), (&refl.psi2, structure.ris_active[1])]
        .into_iter()
        .filter(|(_, active)| *active)
        .all(|(v, _)| {
            v.iter().all(|z| {
                let a = z.norm();
                a >= 1.0 && a <= refl.a_max
            })
        })
}

#[test]
fn criterion_9_feasible_outputs() {
    let _g = serial();
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut verify = |label: String, ch: &ChannelSet, pdd: &PddConfig, out: &Result<PddOutcome, String>| match out {
        Ok(o) => {
            checked += 1;
            let excess = feasibility_excess(ch, &o.state, &pdd.structure).unwrap_or(f64::INFINITY);
            let amps = amplitudes_in_range(&o.state.refl, &pdd.structure);
            if !(excess <= OUTPUT_FEAS_TOL && amps) {
                bad.push(format!("{label}: excess {excess:.2e}, amplitudes ok {amps}"));
            }
        }
        Err(e) => bad.push(format!("{label}: {e}")),
    };
    for (trial, (ch, pdd, out, _)) in ie_solves().iter().enumerate() {
        verify(format!("DAR_IE trial {trial}"), ch, pdd, out);
    }
    let cfg = ScenarioConfig::desk();
    for variant in [Variant::SarNearBs, Variant::SarNearUsers, Variant::Dpr] {
        for trial in 0..OTHER_VARIANT_TRIALS {
            let ch = variant_channels(&cfg, variant, trial).unwrap();
            let (pdd, budgets, a_max) = variant_setup(&cfg, variant);
            let init = init_feasible_with(&ch, &budgets, a_max, cfg.init_seed(trial), &pdd.structure).unwrap();
            let out = pdd_solve(&ch, &init, &pdd).map_err(|e| e.to_string());
            verify(format!("{} trial {trial}", variant.name()), &ch, &pdd, &out);
        }
    }
    let pass = bad.is_empty();
    report(9, pass, &format!("{checked} solutions checked (tol {OUTPUT_FEAS_TOL:e}); problems: {bad:?}"));
    assert!(pass);
}
