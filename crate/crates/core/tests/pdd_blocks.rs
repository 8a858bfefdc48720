//! Independent checks of the block subproblems against the augmented
//! Lagrangian and the surface power model.

use std::f64::consts::LN_2;

use dar_core::channel::{complex_normal, stream_rng, synthesize, ChannelSet, Geometry, PathLossParams, RicianParams};
use dar_core::excitation::{excitation_matrices, ris_powers_with, ReflectionState};
use dar_core::numerics::{c64, CMatrix, CVector};
use dar_core::objective::{
    al_objective, equivalent_channels_aux, AuxiliaryState, DualState, ProblemStructure,
};
use dar_core::pdd::{
    build_psi_subproblem, build_w_subproblem, build_x_subproblem, init_feasible,
    solve_psi_ellipsoid, solve_w_ellipsoid, solve_x_bisection, update_gamma, update_xi, Budgets,
    PddConfig, Side,
};

const WEIGHTS: [f64; 4] = [1.0, 0.7, 1.3, 1.0];

struct Point {
    ch: ChannelSet,
    w: CMatrix,
    refl: ReflectionState,
    aux: AuxiliaryState,
    dual: DualState,
    budgets: Budgets,
}

fn rand_mat(rows: usize, cols: usize, scale: f64, seed: u64, stream: u64) -> CMatrix {
    let mut rng = stream_rng(seed, stream, 0);
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng) * scale)
}

fn rand_vec(n: usize, scale: f64, seed: u64, stream: u64) -> CVector {
    let m = rand_mat(n, 1, scale, seed, stream);
    CVector::from_column_slice(m.as_slice())
}

/// A generic point: auxiliaries off the constraint manifold, nonzero duals.
fn point(seed: u64) -> Point {
    let ch = synthesize(
        &Geometry::desk_default(),
        &PathLossParams::default(),
        &RicianParams::default(),
        1e-11,
        seed,
    )
    .unwrap();
    let budgets = Budgets::desk_default();
    let init = init_feasible(&ch, &budgets, 100.0, seed + 11).unwrap();
    let exc = excitation_matrices(&ch, &init.refl).unwrap();
    let (m1, m2) = (ch.m1(), ch.m2());
    let mut aux = AuxiliaryState::consistent(&init.refl, &exc, ch.n_users());
    aux.x_mat += rand_mat(m1, m1, 0.05, seed, 1);
    aux.y_mat += rand_mat(m2, m2, 0.05, seed, 2);
    aux.phi1 += rand_vec(m1, 0.1, seed, 3);
    aux.phi2 += rand_vec(m2, 0.1, seed, 4);
    let eq = equivalent_channels_aux(&ch, &init.refl, &aux);
    aux.gamma = update_gamma(&eq, &init.w, &ch.noise());
    aux.xi = update_xi(&eq, &init.w, &aux.gamma, &WEIGHTS, &ch.noise());
    let mut dual = DualState::zeros(m1, m2, 0.5, 0.8);
    dual.gamma1_dual = rand_mat(m1, m1, 0.1, seed, 5);
    dual.gamma2_dual = rand_mat(m2, m2, 0.1, seed, 6);
    dual.eta1 = rand_vec(m1, 0.1, seed, 7);
    dual.eta2 = rand_vec(m2, 0.1, seed, 8);
    Point {
        ch,
        w: init.w,
        refl: init.refl,
        aux,
        dual,
        budgets,
    }
}

impl Point {
    fn al(&self) -> f64 {
        al_objective(
            &self.ch,
            &self.w,
            &self.refl,
            &self.aux,
            &self.dual,
            &WEIGHTS,
            &ProblemStructure::default(),
        )
    }

    fn set_psi(&mut self, side: Side, p: CVector) {
        match side {
            Side::One => self.refl.psi1 = p,
            Side::Two => self.refl.psi2 = p,
        }
    }

    fn psi(&self, side: Side) -> CVector {
        match side {
            Side::One => self.refl.psi1.clone(),
            Side::Two => self.refl.psi2.clone(),
        }
    }

    fn set_x(&mut self, side: Side, x: CMatrix) {
        match side {
            Side::One => self.aux.x_mat = x,
            Side::Two => self.aux.y_mat = x,
        }
    }

    fn x(&self, side: Side) -> CMatrix {
        match side {
            Side::One => self.aux.x_mat.clone(),
            Side::Two => self.aux.y_mat.clone(),
        }
    }

    fn powers(&self) -> (f64, f64) {
        ris_powers_with(&self.ch, &self.refl, &self.aux.x_mat, &self.aux.y_mat, &self.w)
    }
}

fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(1e-300)
}

#[test]
fn w_objective_matches_al_differences() {
    for seed in 0..4 {
        let mut p = point(seed);
        let sub = build_w_subproblem(
            &p.ch,
            &p.refl,
            &p.aux,
            &WEIGHTS,
            &p.budgets,
            &ProblemStructure::default(),
        )
        .unwrap();
        let w0 = p.w.clone();
        let al0 = p.al();
        let f0 = sub.objective(&w0);
        let w1 = rand_mat(w0.nrows(), w0.ncols(), 0.1, seed, 20);
        p.w = w1.clone();
        let al1 = p.al();
        let f1 = sub.objective(&w1);
        let lhs = -(al1 - al0);
        let rhs = (f1 - f0) / LN_2;
        assert!(close(lhs, rhs, lhs.abs().max(rhs.abs()), 1e-8), "{lhs} vs {rhs}");
    }
}

#[test]
fn w_power_forms_match_model() {
    let mut p = point(2);
    let sub = build_w_subproblem(&p.ch, &p.refl, &p.aux, &WEIGHTS, &p.budgets, &ProblemStructure::default())
        .unwrap();
    p.w = rand_mat(p.w.nrows(), p.w.ncols(), 0.2, 2, 21);
    let (p1, p2) = p.powers();
    let q1 = (p.w.adjoint() * &sub.c_w * &p.w).trace().re;
    let q2 = (p.w.adjoint() * &sub.d_w * &p.w).trace().re;
    assert!(close(p1 - q1, p.budgets.p1_max - sub.p1_hat, p1, 1e-9));
    assert!(close(p2 - q2, p.budgets.p2_max - sub.p2_hat, p2, 1e-9));
}

#[test]
fn w_solution_beats_feasible_perturbations() {
    let cfg = PddConfig::default();
    for seed in 0..3 {
        let p = point(seed);
        let sub = build_w_subproblem(&p.ch, &p.refl, &p.aux, &WEIGHTS, &p.budgets, &ProblemStructure::default())
            .unwrap();
        let w = solve_w_ellipsoid(&sub, &cfg, Some(&p.w)).unwrap();
        let q = sub.to_qcqp();
        assert!(q.is_feasible(&w, 1e-9));
        let f = sub.objective(&w);
        assert!(f <= sub.objective(&p.w) + 1e-12 * f.abs());
        for t in 0..40 {
            let d = rand_mat(w.nrows(), w.ncols(), 1.0, seed, 100 + t);
            for eps in [1e-2, 1e-3, 1e-4] {
                let cand = &w + &d * c64(eps * w.norm() / d.norm(), 0.0);
                if q.is_feasible(&cand, 0.0) {
                    assert!(sub.objective(&cand) >= f - 1e-6 * f.abs(), "seed {seed} dir {t}");
                }
            }
        }
    }
}

#[test]
fn psi_objective_matches_al_differences() {
    for seed in 0..4 {
        for side in [Side::One, Side::Two] {
            let mut p = point(seed);
            let sub = build_psi_subproblem(
                &p.ch,
                &p.refl,
                &p.aux,
                &p.dual,
                &p.w,
                &WEIGHTS,
                &p.budgets,
                &ProblemStructure::default(),
                side,
            );
            let v0 = p.psi(side);
            let al0 = p.al();
            let f0 = sub.objective_coeffs(&v0);
            let (own0, oth0) = p.powers();
            let so0 = sub.powers_coeffs(&v0);
            let v1 = &v0 + rand_vec(v0.len(), 0.3, seed, 30 + side.index() as u64);
            p.set_psi(side, v1.clone());
            let al1 = p.al();
            let f1 = sub.objective_coeffs(&v1);
            let lhs = -(al1 - al0);
            let rhs = f1 - f0;
            assert!(close(lhs, rhs, lhs.abs().max(rhs.abs()), 1e-7), "side {side:?}: {lhs} vs {rhs}");
            let (own1, oth1) = p.powers();
            let so1 = sub.powers_coeffs(&v1);
            let (own0, own1, oth0, oth1) = match side {
                Side::One => (own0, own1, oth0, oth1),
                Side::Two => (oth0, oth1, own0, own1),
            };
            assert!(close(so1.0 - so0.0, own1 - own0, own1.abs().max(own0), 1e-8));
            assert!(close(so1.1 - so0.1, oth1 - oth0, oth1.abs().max(oth0), 1e-8));
            let cap_b = match side {
                Side::One => p.budgets.p2_max,
                Side::Two => p.budgets.p1_max,
            };
            assert!(close(so1.1 + (cap_b - sub.p2_cap), oth1, oth1, 1e-8));
            let cap_a = match side {
                Side::One => p.budgets.p1_max,
                Side::Two => p.budgets.p2_max,
            };
            assert!(close(so1.0, own1, own1, 1e-8));
            assert_eq!(sub.p1_cap, cap_a);
        }
    }
}

#[test]
fn psi_solution_is_feasible_and_not_worse() {
    let cfg = PddConfig::default();
    for seed in 0..3 {
        for side in [Side::One, Side::Two] {
            let p = point(seed);
            let sub = build_psi_subproblem(
                &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &WEIGHTS, &p.budgets,
                &ProblemStructure::default(), side,
            );
            let cur = p.psi(side);
            let v = solve_psi_ellipsoid(&sub, &cfg, Some(&cur)).unwrap();
            let (own, oth) = sub.powers_coeffs(&v);
            assert!(own <= sub.p1_cap * (1.0 + 1e-9));
            assert!(oth <= sub.p2_cap + 1e-9 * sub.p2_cap.abs());
            let f = sub.objective_coeffs(&v);
            assert!(f <= sub.objective_coeffs(&cur) + 1e-12 * f.abs());
            let q = sub.to_qcqp();
            for t in 0..40 {
                let d = rand_vec(v.len(), 1.0, seed, 200 + t);
                for eps in [1e-2, 1e-3, 1e-4] {
                    let cand = &v + &d * c64(eps * v.norm() / d.norm(), 0.0);
                    let x = CMatrix::from_column_slice(cand.len(), 1, cand.conjugate().as_slice());
                    if q.is_feasible(&x, 0.0) {
                        assert!(sub.objective_coeffs(&cand) >= f - 1e-6 * f.abs().max(1.0));
                    }
                }
            }
        }
    }
}

#[test]
fn x_objective_matches_al_differences() {
    for seed in 0..4 {
        for side in [Side::One, Side::Two] {
            let mut p = point(seed);
            let sub = build_x_subproblem(
                &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &WEIGHTS, &p.budgets,
                &ProblemStructure::default(), side,
            )
            .unwrap();
            let x0 = p.x(side);
            let al0 = p.al();
            let f0 = sub.objective(&x0);
            let pw0 = sub.power(&x0);
            let x1 = &x0 + rand_mat(x0.nrows(), x0.ncols(), 0.2, seed, 40 + side.index() as u64);
            p.set_x(side, x1.clone());
            let al1 = p.al();
            let f1 = sub.objective(&x1);
            let lhs = -(al1 - al0);
            let rhs = f1 - f0;
            assert!(close(lhs, rhs, lhs.abs().max(rhs.abs()), 1e-7), "side {side:?}: {lhs} vs {rhs}");
            let (p1, p2) = p.powers();
            let own = match side {
                Side::One => p1,
                Side::Two => p2,
            };
            assert!(close(sub.power(&x1), own, own, 1e-9));
            assert!(pw0 > 0.0);
        }
    }
}

/// Stationarity: `L1 X M + L2 X + mu X M = L3^H`, `mu >= 0`,
/// complementary slackness on the power constraint.
#[test]
fn x_solution_satisfies_kkt() {
    for seed in 0..4 {
        for side in [Side::One, Side::Two] {
            for shrink in [1.0, 1e-3] {
                let p = point(seed);
                let mut sub = build_x_subproblem(
                    &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &WEIGHTS, &p.budgets,
                    &ProblemStructure::default(), side,
                )
                .unwrap();
                sub.p1_cap *= shrink;
                let (x, mu) = sub.solve(1e-12).unwrap();
                assert!(mu >= 0.0);
                let grad = &sub.l1 * &x * &sub.m_gram + &sub.l2 * &x + &x * &sub.m_gram * c64(mu, 0.0)
                    - sub.l3.adjoint();
                let scale = sub.l3.norm();
                assert!(grad.norm() <= 1e-6 * scale, "seed {seed} {side:?}: {}", grad.norm() / scale);
                let pw = sub.power(&x);
                assert!(pw <= sub.p1_cap * (1.0 + 1e-8));
                if mu > 0.0 {
                    assert!(close(pw, sub.p1_cap, sub.p1_cap, 1e-6));
                }
                let cfg = PddConfig::default();
                let xs = solve_x_bisection(&sub, &cfg, Some(&p.x(side))).unwrap();
                assert!(sub.objective(&xs) <= sub.objective(&x) + 1e-12 * sub.objective(&x).abs());
            }
        }
    }
}

#[test]
fn x_block_matches_dense_kronecker_solve() {
    let p = point(5);
    let sub = build_x_subproblem(
        &p.ch, &p.refl, &p.aux, &p.dual, &p.w, &WEIGHTS, &p.budgets,
        &ProblemStructure::default(), Side::One,
    )
    .unwrap();
    let a = sub.a_x_hat();
    let b = sub.b_x_hat();
    let bm = CMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let (_, mu) = sub.solve(1e-12).unwrap();
    let n = a.nrows();
    let m = &a + dar_core::numerics::identity(n) * c64(mu, 0.0);
    let xh = dar_core::numerics::solve_hermitian(&m, &bm);
    let dim = sub.dim();
    let xhat = CMatrix::from_column_slice(dim, dim, xh.as_slice());
    let kk = sub.k_factor.adjoint() * &sub.k_factor;
    let kinv = dar_core::numerics::solve_hermitian(&kk, &sub.k_factor.adjoint());
    let x_dense = xhat * kinv;
    let (x, _) = sub.solve(1e-12).unwrap();
    assert!((&x - &x_dense).norm() <= 1e-6 * x.norm());
}
