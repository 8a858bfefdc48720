//! Quadratic forms in the diagonal of a reflection matrix.
//!
//! For `Psi = Diag(p)` and `v = diag(Psi^H) = conj(p)` the identity
//! `Tr(Psi A Psi^H B) = v^H (A o B^T) v` turns Frobenius norms of affine
//! expressions in `Psi` into Hermitian quadratic forms in `v`.

use crate::numerics::{c64, hermitian_part, CMatrix, CVector};

/// `v^H q v + 2 Re{v^H l} + c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub q: CMatrix,
    pub l: CVector,
    pub c0: f64,
}

/// One `U Psi V` product.
pub type Term<'a> = (&'a CMatrix, &'a CMatrix);

impl QuadForm {
    pub fn zeros(m: usize) -> Self {
        Self {
            q: CMatrix::zeros(m, m),
            l: CVector::zeros(m),
            c0: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    /// Adds `weight * || sum_j U_j Psi V_j + C ||_F^2`.
    pub fn add_norm_sq(&mut self, weight: f64, terms: &[Term<'_>], c: Option<&CMatrix>) {
        if weight == 0.0 {
            return;
        }
        let w = c64(weight, 0.0);
        for &(uj, vj) in terms {
            for &(ul, vl) in terms {
                let left = vj * vl.adjoint();
                let right = (ul.adjoint() * uj).transpose();
                self.q += left.component_mul(&right) * w;
            }
        }
        if let Some(c) = c {
            for &(u, v) in terms {
                self.l += (v * c.adjoint() * u).diagonal() * w;
            }
            self.c0 += weight * c.norm_squared();
        }
    }

    /// Adds `weight * Re Tr(coef (sum_j U_j Psi V_j + C))`.
    pub fn add_re_trace(
        &mut self,
        weight: f64,
        coef: &CMatrix,
        terms: &[Term<'_>],
        c: Option<&CMatrix>,
    ) {
        if weight == 0.0 {
            return;
        }
        let half = c64(0.5 * weight, 0.0);
        for &(u, v) in terms {
            self.l += (v * coef * u).diagonal() * half;
        }
        if let Some(c) = c {
            self.c0 += weight * (coef * c).trace().re;
        }
    }

    pub fn add_const(&mut self, value: f64) {
        self.c0 += value;
    }

    /// Restores exact Hermitian symmetry of `q`.
    pub fn symmetrize(&mut self) {
        self.q = hermitian_part(&self.q);
    }

    /// Evaluates at the conjugated coefficient vector `v`.
    pub fn eval(&self, v: &CVector) -> f64 {
        let quad = (v.adjoint() * &self.q * v)[(0, 0)].re;
        let lin = (v.adjoint() * &self.l)[(0, 0)].re;
        quad + 2.0 * lin + self.c0
    }

    /// Evaluates at the plain coefficient vector `p` (`v = conj(p)`).
    pub fn eval_coeffs(&self, p: &CVector) -> f64 {
        self.eval(&p.conjugate())
    }
}
