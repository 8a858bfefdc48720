use dar_core::bench::{find_tau, variant_channels, variant_setup, ScenarioConfig, Variant};
use dar_core::channel::{complex_normal, stream_rng, synthesize, ChannelSet, Geometry, PathLossParams, RicianParams};
use dar_core::excitation::{
    bounce_simulate, excitation_matrices, excitation_matrices_with_margin, loop_matrices,
    neumann_series, ris_powers, NoiseRealization,
};
use dar_core::numerics::{c64, diag_from, hadamard, kron, spectral_radius, vec, CMatrix, C64};
use dar_core::objective::{equivalent_channels_aux, exact_wsr, fr_objective, AuxiliaryState};
use dar_core::pdd::{init_feasible, init_feasible_with, update_gamma, update_xi, Budgets};

fn rand_mat(rows: usize, cols: usize, scale: f64, seed: u64, stream: u64) -> CMatrix {
    let mut rng = stream_rng(seed, stream, 0);
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng) * scale)
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

fn channel(seed: u64) -> ChannelSet {
    synthesize(&Geometry::desk_default(), &PathLossParams::default(), &RicianParams::default(), 1e-11, seed)
        .expect("default geometry is valid")
}

fn identities() -> (bool, String) {
    let mut worst = 0.0_f64;
    for i in 0..100u64 {
        let m = 1 + (i % 12) as usize;
        let a = rand_mat(m, m, 1.0, i, 1);
        let b = rand_mat(m, m, 1.0, i, 2);
        let p = rand_mat(m, 1, 1.0, i, 3).column(0).into_owned();
        let psi = diag_from(&p);
        let direct = (&psi * &a * psi.adjoint() * &b).trace();
        let v = p.conjugate();
        let quad = (v.adjoint() * hadamard(&a, &b.transpose()).expect("square") * &v)[(0, 0)];
        worst = worst.max(rel(direct, quad));
        let c = rand_mat(m, m, 1.0, i, 4);
        let d = rand_mat(m, m, 1.0, i, 5);
        let direct = (&a * &b * &c * &d).trace();
        let via = (vec(&d.transpose()).transpose() * kron(&c.transpose(), &a) * vec(&b))[(0, 0)];
        worst = worst.max(rel(direct, via));
    }
    (worst <= 1e-11, format!("worst relative error {worst:.2e}"))
}

fn neumann() -> (bool, String) {
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for seed in 0..20u64 {
        let ch = channel(seed);
        let Ok(init) = init_feasible(&ch, &Budgets::desk_default(), 100.0, seed) else {
            return (false, format!("no feasible start for seed {seed}"));
        };
        let (l1, l2) = loop_matrices(&ch, &init.refl);
        let radius = spectral_radius(&l1).unwrap_or(1.0);
        if radius >= 0.95 {
            continue;
        }
        let Ok(exc) = excitation_matrices_with_margin(&ch, &init.refl, 0.0) else {
            continue;
        };
        let terms = if radius > 0.0 { ((1e-18_f64).ln() / radius.ln()).ceil() as usize * 2 + 50 } else { 2 };
        for (xi, l) in [(&exc.xi1, &l1), (&exc.xi2, &l2)] {
            worst = worst.max((xi - neumann_series(l, terms)).norm() / xi.norm());
        }
        checked += 1;
    }
    (checked > 0 && worst <= 1e-10, format!("{checked} states, worst {worst:.2e}"))
}

fn fp_tightness() -> (bool, String) {
    let mut worst = 0.0_f64;
    for seed in 0..50u64 {
        let ch = channel(100 + seed);
        let Ok(init) = init_feasible(&ch, &Budgets::desk_default(), 50.0, seed) else {
            return (false, format!("no feasible start for seed {seed}"));
        };
        let Ok(exc) = excitation_matrices(&ch, &init.refl) else {
            continue;
        };
        let w = rand_mat(ch.n_antennas(), ch.n_users(), 0.25, seed, 4);
        let weights = vec![1.0; ch.n_users()];
        let mut aux = AuxiliaryState::consistent(&init.refl, &exc, ch.n_users());
        let eq = equivalent_channels_aux(&ch, &init.refl, &aux);
        aux.gamma = update_gamma(&eq, &w, &ch.noise());
        aux.xi = update_xi(&eq, &w, &aux.gamma, &weights, &ch.noise());
        let fr = fr_objective(&aux, &eq, &w, &weights, &ch.noise());
        let (_, wsr) = exact_wsr(&ch, &init.refl, &exc, &w, &weights);
        worst = worst.max((fr - wsr).abs());
    }
    (worst <= 1e-8, format!("worst |f_r - WSR| {worst:.2e}"))
}

fn tau_closed_form() -> (bool, String) {
    let b = Budgets::desk_default();
    let mut worst = 0.0_f64;
    for seed in 0..5u64 {
        let mut ch = channel(200 + seed);
        ch.g.fill(c64(0.0, 0.0));
        let Ok(mut s) = init_feasible(&ch, &b, 100.0, seed) else {
            return (false, format!("no feasible start for seed {seed}"));
        };
        s.refl = s.refl.scaled(300.0);
        let Ok(exc) = excitation_matrices(&ch, &s.refl) else {
            return (false, "unstable decoupled loop".into());
        };
        let (p1, p2) = ris_powers(&ch, &s.refl, &exc, &s.w);
        let expected = (b.p1_max / p1).min(b.p2_max / p2).sqrt().min(1.0);
        match find_tau(&ch, &s.refl, &s.w, &b) {
            Ok(tau) => worst = worst.max((tau - expected).abs()),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 2e-6, format!("worst |tau - closed form| {worst:.2e}"))
}

fn bounce_settling() -> (bool, String) {
    let cfg = ScenarioConfig::desk();
    let (pdd, budgets, a_max) = variant_setup(&cfg, Variant::DarIe);
    let mut ok = 0;
    let n = 20;
    for trial in 0..n {
        let Ok(ch) = variant_channels(&cfg, Variant::DarIe, trial) else {
            continue;
        };
        let Ok(init) = init_feasible_with(&ch, &budgets, a_max, cfg.init_seed(trial), &pdd.structure) else {
            continue;
        };
        let noise = NoiseRealization::draw(&ch, trial as u64);
        if bounce_simulate(&ch, &init.refl, &init.w, &noise, 20)
            .map(|r| r.converged_within(20))
            .unwrap_or(false)
        {
            ok += 1;
        }
    }
    (ok * 100 >= 95 * n, format!("{ok}/{n} settle within 20 bounces"))
}

/// Runs every check, printing one line each; returns the failed names.
pub fn run() -> Vec<String> {
    let checks: [(&str, fn() -> (bool, String)); 5] = [
        ("identities", identities),
        ("neumann", neumann),
        ("fp_tightness", fp_tightness),
        ("tau_closed_form", tau_closed_form),
        ("bounce_settling", bounce_settling),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let (pass, detail) = check();
        println!("{name:<16} {}  {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(name.to_string());
        }
    }
    failed
}
