#![allow(dead_code)]

use dar_core::channel::{complex_normal, stream_rng, synthesize, ChannelSet, Geometry, PathLossParams, RicianParams};
use dar_core::excitation::{excitation_matrices, ReflectionState};
use dar_core::numerics::{c64, kron, CMatrix, CVector};
use dar_core::objective::{equivalent_channels_aux, AuxiliaryState, DualState};
use dar_core::pdd::{init_feasible, update_gamma, update_xi, Budgets, Qcqp, QuadConstraint, SubproblemX};

pub fn rand_mat(rows: usize, cols: usize, scale: f64, seed: u64, stream: u64) -> CMatrix {
    let mut rng = stream_rng(seed, stream, 0);
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng) * scale)
}

pub fn rand_vec(n: usize, scale: f64, seed: u64, stream: u64) -> CVector {
    let m = rand_mat(n, 1, scale, seed, stream);
    CVector::from_column_slice(m.as_slice())
}

pub fn channel(geom: &Geometry, seed: u64) -> ChannelSet {
    synthesize(geom, &PathLossParams::default(), &RicianParams::default(), 1e-11, seed).unwrap()
}

/// N = 4 antennas, K = 2 users, 4 + 4 elements.
pub fn small_geometry() -> Geometry {
    Geometry {
        n_users: 2,
        m1_elements: 4,
        m2_elements: 4,
        ..Geometry::desk_default()
    }
}

/// A generic optimizer point: auxiliaries off the constraint manifold,
/// nonzero duals, closed-form gamma and xi.
pub struct Point {
    pub ch: ChannelSet,
    pub w: CMatrix,
    pub refl: ReflectionState,
    pub aux: AuxiliaryState,
    pub dual: DualState,
    pub budgets: Budgets,
    pub weights: Vec<f64>,
}

pub fn point(geom: &Geometry, seed: u64) -> Point {
    let ch = channel(geom, seed);
    let budgets = Budgets::desk_default();
    let init = init_feasible(&ch, &budgets, 100.0, seed + 11).unwrap();
    let exc = excitation_matrices(&ch, &init.refl).unwrap();
    let (m1, m2) = (ch.m1(), ch.m2());
    let k = ch.n_users();
    let weights: Vec<f64> = (0..k).map(|i| 0.6 + 0.2 * i as f64).collect();
    let mut aux = AuxiliaryState::consistent(&init.refl, &exc, k);
    aux.x_mat += rand_mat(m1, m1, 0.05, seed, 1);
    aux.y_mat += rand_mat(m2, m2, 0.05, seed, 2);
    aux.phi1 += rand_vec(m1, 0.1, seed, 3);
    aux.phi2 += rand_vec(m2, 0.1, seed, 4);
    let eq = equivalent_channels_aux(&ch, &init.refl, &aux);
    aux.gamma = update_gamma(&eq, &init.w, &ch.noise());
    aux.xi = update_xi(&eq, &init.w, &aux.gamma, &weights, &ch.noise());
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
        weights,
    }
}

/// The X subproblem over `vec(X)`:
/// `A = M^T kron L1 + I kron L2`, `b = vec(L3^H)`, power `C = M^T kron I`.
pub fn x_as_qcqp(sub: &SubproblemX) -> Qcqp {
    let m = sub.dim();
    let eye = dar_core::numerics::identity(m);
    let mt = sub.m_gram.transpose();
    let a = kron(&mt, &sub.l1) + kron(&eye, &sub.l2);
    let b = dar_core::numerics::vec(&sub.l3.adjoint());
    let mut constraints = Vec::new();
    if sub.p1_cap.is_finite() {
        constraints.push(QuadConstraint {
            c: kron(&mt, &eye),
            d: CMatrix::zeros(m * m, 1),
            cap: sub.p1_cap,
        });
    }
    Qcqp {
        a,
        b: CMatrix::from_column_slice(m * m, 1, b.as_slice()),
        constraints,
    }
}

/// Dual value `min_x L(x, lambda)`, or `None` when the Hessian is not
/// positive definite.
fn dual_value(q: &Qcqp, lambda: &[f64]) -> Option<(f64, Vec<f64>)> {
    let mut m = q.a.clone();
    let mut r = q.b.clone();
    let mut offset = 0.0;
    for (con, &l) in q.constraints.iter().zip(lambda) {
        m += &con.c * c64(l, 0.0);
        r -= &con.d * c64(l, 0.0);
        offset += l * con.cap;
    }
    let m = (&m + m.adjoint()) * c64(0.5, 0.0);
    let chol = m.cholesky()?;
    let x = chol.solve(&r);
    let g = -(r.adjoint() * &x).trace().re - offset;
    g.is_finite().then(|| (g, q.constraint_excess(&x)))
}

/// Lower bound on the optimum of `q` by projected gradient ascent on the
/// Lagrange dual over `lambda >= 0`, in coordinates where each constraint
/// is divided by its cap and the objective by `scale`.
pub fn dual_lower_bound(q: &Qcqp, scale: f64, iters: usize) -> f64 {
    let n = q.constraints.len();
    let unit: Vec<f64> = q
        .constraints
        .iter()
        .map(|c| scale / c.cap.abs().max(f64::MIN_POSITIVE))
        .collect();
    let to_lambda = |nu: &[f64]| nu.iter().zip(&unit).map(|(v, u)| v * u).collect::<Vec<_>>();
    let eval = |nu: &[f64]| {
        dual_value(q, &to_lambda(nu)).map(|(g, ex)| {
            let grad = ex
                .iter()
                .zip(&q.constraints)
                .map(|(e, c)| e / c.cap.abs().max(f64::MIN_POSITIVE))
                .collect::<Vec<_>>();
            (g / scale, grad)
        })
    };
    let mut nu = vec![1.0; n];
    let (mut g, mut grad) = match eval(&nu) {
        Some(v) => v,
        None => return f64::NEG_INFINITY,
    };
    if let Some((g0, grad0)) = eval(&vec![0.0; n]) {
        if g0 > g {
            nu = vec![0.0; n];
            g = g0;
            grad = grad0;
        }
    }
    let mut step = 1.0;
    for _ in 0..iters {
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = nu.iter().zip(&grad).map(|(v, d)| (v + step * d).max(0.0)).collect();
            let moved: f64 = cand.iter().zip(&nu).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                return g * scale;
            }
            if let Some((gc, gradc)) = eval(&cand) {
                let lin: f64 = cand.iter().zip(&nu).zip(&grad).map(|((a, b), d)| (a - b) * d).sum();
                if gc >= g + lin - moved / (2.0 * step) {
                    nu = cand;
                    g = gc;
                    grad = gradc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    g * scale
}
