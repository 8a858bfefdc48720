//! A view of the system from one surface ("a") with the other surface ("b")
//! as its partner. Side 1 is the model as written; side 2 swaps the indices
//! and replaces G with G^H, which maps every formula for RIS 1 onto RIS 2.

use crate::channel::ChannelSet;
use crate::excitation::ReflectionState;
use crate::numerics::{diag_mul_left, diag_mul_right, identity, CMatrix, CVector};
use crate::objective::{AuxiliaryState, DualState, ProblemStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::One => 0,
            Side::Two => 1,
        }
    }

    pub fn from_number(which: u8) -> Option<Self> {
        match which {
            1 => Some(Side::One),
            2 => Some(Side::Two),
            _ => None,
        }
    }
}

pub(crate) struct SideView {
    pub h_a: CMatrix,
    pub h_b: CMatrix,
    /// M_b x M_a.
    pub g: CMatrix,
    pub hu_a: CMatrix,
    pub hu_b: CMatrix,
    pub psi_a: CVector,
    pub psi_b: CVector,
    pub x_a: CMatrix,
    pub x_b: CMatrix,
    pub gamma_a: CMatrix,
    pub gamma_b: CMatrix,
    pub eta_a: CVector,
    pub phi_a: CVector,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub cap_a: f64,
    pub cap_b: f64,
    pub limited_a: bool,
    pub limited_b: bool,
    pub coupled: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn view(
    side: Side,
    ch: &ChannelSet,
    refl: &ReflectionState,
    aux: &AuxiliaryState,
    dual: &DualState,
    caps: (f64, f64),
    structure: &ProblemStructure,
) -> SideView {
    let coupled = structure.coupling == crate::objective::Coupling::InterExcitation;
    match side {
        Side::One => SideView {
            h_a: ch.h1.clone(),
            h_b: ch.h2.clone(),
            g: ch.g.clone(),
            hu_a: ch.h1_users(),
            hu_b: ch.h2_users(),
            psi_a: refl.psi1.clone(),
            psi_b: refl.psi2.clone(),
            x_a: aux.x_mat.clone(),
            x_b: aux.y_mat.clone(),
            gamma_a: dual.gamma1_dual.clone(),
            gamma_b: dual.gamma2_dual.clone(),
            eta_a: dual.eta1.clone(),
            phi_a: aux.phi1.clone(),
            sigma_a: ch.noise_ris1,
            sigma_b: ch.noise_ris2,
            cap_a: caps.0,
            cap_b: caps.1,
            limited_a: structure.power_constrained(0),
            limited_b: structure.power_constrained(1),
            coupled,
        },
        Side::Two => SideView {
            h_a: ch.h2.clone(),
            h_b: ch.h1.clone(),
            g: ch.g.adjoint(),
            hu_a: ch.h2_users(),
            hu_b: ch.h1_users(),
            psi_a: refl.psi2.clone(),
            psi_b: refl.psi1.clone(),
            x_a: aux.y_mat.clone(),
            x_b: aux.x_mat.clone(),
            gamma_a: dual.gamma2_dual.clone(),
            gamma_b: dual.gamma1_dual.clone(),
            eta_a: dual.eta2.clone(),
            phi_a: aux.phi2.clone(),
            sigma_a: ch.noise_ris2,
            sigma_b: ch.noise_ris1,
            cap_a: caps.1,
            cap_b: caps.0,
            limited_a: structure.power_constrained(1),
            limited_b: structure.power_constrained(0),
            coupled,
        },
    }
}

impl SideView {
    pub fn m_a(&self) -> usize {
        self.psi_a.len()
    }

    /// `h_a + g^H Psi_b h_b`.
    pub fn r_a(&self) -> CMatrix {
        &self.h_a + self.g.adjoint() * diag_mul_left(&self.psi_b, &self.h_b)
    }

    /// `Psi_a (h_a + g^H Psi_b h_b)`.
    pub fn t_a(&self) -> CMatrix {
        diag_mul_left(&self.psi_a, &self.r_a())
    }

    /// `Psi_b (h_b + g Psi_a h_a)`.
    pub fn t_b(&self) -> CMatrix {
        diag_mul_left(
            &self.psi_b,
            &(&self.h_b + &self.g * diag_mul_left(&self.psi_a, &self.h_a)),
        )
    }

    /// `Psi_b g Psi_a`.
    pub fn t3(&self) -> CMatrix {
        diag_mul_right(&diag_mul_left(&self.psi_b, &self.g), &self.psi_a)
    }

    /// `Psi_a g^H Psi_b`.
    pub fn t4(&self) -> CMatrix {
        diag_mul_right(&diag_mul_left(&self.psi_a, &self.g.adjoint()), &self.psi_b)
    }

    /// `I - Psi_a g^H Psi_b g`.
    pub fn xi_inv_a(&self) -> CMatrix {
        let gh_psi_b_g = self.g.adjoint() * diag_mul_left(&self.psi_b, &self.g);
        identity(self.m_a()) - diag_mul_left(&self.psi_a, &gh_psi_b_g)
    }
}
