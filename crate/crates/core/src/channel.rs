//! Geometry-driven Rician channel synthesis for the two-RIS downlink.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numerics::{c64, CMatrix, CVector};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Factors at or above this value are treated as pure line of sight.
pub const PURE_LOS_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("no path-loss exponent assigned to link {0:?}")]
    UnknownLink(Link),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

/// The five propagation links of the two-RIS system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    BsRis1,
    BsRis2,
    Ris1Ris2,
    Ris1User,
    Ris2User,
}

impl Link {
    pub const ALL: [Link; 5] = [
        Link::BsRis1,
        Link::BsRis2,
        Link::Ris1Ris2,
        Link::Ris1User,
        Link::Ris2User,
    ];

    pub fn index(self) -> usize {
        match self {
            Link::BsRis1 => 0,
            Link::BsRis2 => 1,
            Link::Ris1Ris2 => 2,
            Link::Ris1User => 3,
            Link::Ris2User => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentClass {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_pos: [f64; 3],
    pub ris1_pos: [f64; 3],
    pub ris2_pos: [f64; 3],
    pub user_center: [f64; 3],
    pub user_radius: f64,
    pub n_bs_antennas: usize,
    pub m1_elements: usize,
    pub m2_elements: usize,
    pub n_users: usize,
    pub carrier_freq: f64,
    pub antenna_spacing_bs: f64,
    pub element_spacing_ris: f64,
}

impl Geometry {
    /// Reference layout: BS at (0,0,15), RISs at (20,10,2) and (40,10,2),
    /// users around (60,0,1.5), 16 elements per RIS, half-wavelength spacing.
    pub fn full_default() -> Self {
        let carrier_freq = 2.4e9;
        let half = SPEED_OF_LIGHT / carrier_freq / 2.0;
        Self {
            bs_pos: [0.0, 0.0, 15.0],
            ris1_pos: [20.0, 10.0, 2.0],
            ris2_pos: [40.0, 10.0, 2.0],
            user_center: [60.0, 0.0, 1.5],
            user_radius: 5.0,
            n_bs_antennas: 4,
            m1_elements: 16,
            m2_elements: 16,
            n_users: 4,
            carrier_freq,
            antenna_spacing_bs: half,
            element_spacing_ris: half,
        }
    }

    /// Reference layout with 8 elements per RIS.
    pub fn desk_default() -> Self {
        Self {
            m1_elements: 8,
            m2_elements: 8,
            ..Self::full_default()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let counts = [
            ("n_bs_antennas", self.n_bs_antennas),
            ("m1_elements", self.m1_elements),
            ("m2_elements", self.m2_elements),
            ("n_users", self.n_users),
        ];
        for (field, n) in counts {
            if n == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("antenna_spacing_bs", self.antenna_spacing_bs),
            ("element_spacing_ris", self.element_spacing_ris),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, "must be positive"));
            }
        }
        if !(self.user_radius.is_finite() && self.user_radius >= 0.0) {
            return Err(invalid("user_radius", "must be non-negative"));
        }
        let pairs = [
            ("ris1_pos", self.bs_pos, self.ris1_pos),
            ("ris2_pos", self.bs_pos, self.ris2_pos),
            ("ris2_pos", self.ris1_pos, self.ris2_pos),
        ];
        for (field, a, b) in pairs {
            if distance(a, b) <= 0.0 {
                return Err(invalid(field, "coincides with another node"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLossParams {
    pub pl0_db: f64,
    pub d0: f64,
    pub exponent_strong: f64,
    pub exponent_weak: f64,
    pub link_exponent_map: HashMap<Link, ExponentClass>,
}

impl Default for PathLossParams {
    /// PL0 = -30 dB at 1 m; exponent 2.2 on BS-RIS1, RIS1-RIS2 and
    /// RIS2-user, 3.0 on the rest.
    fn default() -> Self {
        let link_exponent_map = Link::ALL
            .iter()
            .map(|&l| (l, default_class(l)))
            .collect();
        Self {
            pl0_db: -30.0,
            d0: 1.0,
            exponent_strong: 2.2,
            exponent_weak: 3.0,
            link_exponent_map,
        }
    }
}

fn default_class(link: Link) -> ExponentClass {
    match link {
        Link::BsRis1 | Link::Ris1Ris2 | Link::Ris2User => ExponentClass::Strong,
        Link::BsRis2 | Link::Ris1User => ExponentClass::Weak,
    }
}

impl PathLossParams {
    pub fn exponent(&self, link: Link) -> Result<f64, ChannelError> {
        match self.link_exponent_map.get(&link) {
            Some(ExponentClass::Strong) => Ok(self.exponent_strong),
            Some(ExponentClass::Weak) => Ok(self.exponent_weak),
            None => Err(ChannelError::UnknownLink(link)),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.d0 > 0.0) {
            return Err(invalid("d0", "must be positive"));
        }
        if !(self.exponent_strong > 0.0) {
            return Err(invalid("exponent_strong", "must be positive"));
        }
        if !(self.exponent_weak > 0.0) {
            return Err(invalid("exponent_weak", "must be positive"));
        }
        if !self.pl0_db.is_finite() {
            return Err(invalid("pl0_db", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RicianParams {
    /// Indexed by [`Link::index`].
    pub factor_per_link: [f64; 5],
}

impl Default for RicianParams {
    /// 10 on BS-RIS1, RIS1-RIS2 and RIS2-user; 1 elsewhere.
    fn default() -> Self {
        let mut factor_per_link = [1.0; 5];
        for link in Link::ALL {
            if default_class(link) == ExponentClass::Strong {
                factor_per_link[link.index()] = 10.0;
            }
        }
        Self { factor_per_link }
    }
}

impl RicianParams {
    pub fn uniform(factor: f64) -> Self {
        Self {
            factor_per_link: [factor; 5],
        }
    }

    pub fn factor(&self, link: Link) -> f64 {
        self.factor_per_link[link.index()]
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self
            .factor_per_link
            .iter()
            .any(|f| !(f.is_finite() && *f >= 0.0))
        {
            return Err(invalid("factor_per_link", "factors must be >= 0"));
        }
        Ok(())
    }
}

/// Noise powers at the RISs and users, in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePowers {
    pub ris1: f64,
    pub ris2: f64,
    pub users: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS to RIS 1, M1 x N.
    pub h1: CMatrix,
    /// BS to RIS 2, M2 x N.
    pub h2: CMatrix,
    /// RIS 1 to RIS 2, M2 x M1.
    pub g: CMatrix,
    /// RIS 1 to user k, length M1.
    pub h1k: Vec<CVector>,
    /// RIS 2 to user k, length M2.
    pub h2k: Vec<CVector>,
    pub noise_ris1: f64,
    pub noise_ris2: f64,
    pub noise_users: Vec<f64>,
}

impl ChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.h1.ncols()
    }

    pub fn m1(&self) -> usize {
        self.h1.nrows()
    }

    pub fn m2(&self) -> usize {
        self.h2.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h1k.len()
    }

    /// M1 x K matrix whose column k is h1k.
    pub fn h1_users(&self) -> CMatrix {
        stack_columns(&self.h1k, self.m1())
    }

    /// M2 x K matrix whose column k is h2k.
    pub fn h2_users(&self) -> CMatrix {
        stack_columns(&self.h2k, self.m2())
    }

    pub fn noise(&self) -> NoisePowers {
        NoisePowers {
            ris1: self.noise_ris1,
            ris2: self.noise_ris2,
            users: self.noise_users.clone(),
        }
    }

    /// Checks the dimensional consistency of all blocks.
    pub fn validate(&self) -> Result<(), ChannelError> {
        let (m1, m2, n, k) = (self.m1(), self.m2(), self.n_antennas(), self.n_users());
        if self.h2.ncols() != n {
            return Err(invalid("h2", "column count differs from h1"));
        }
        if self.g.shape() != (m2, m1) {
            return Err(invalid("g", "must be M2 x M1"));
        }
        if self.h2k.len() != k || self.noise_users.len() != k {
            return Err(invalid("h2k", "user count mismatch"));
        }
        if self.h1k.iter().any(|v| v.len() != m1) || self.h2k.iter().any(|v| v.len() != m2) {
            return Err(invalid("h1k", "user channel length mismatch"));
        }
        if self.noise_users.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("noise_users", "must be positive"));
        }
        if self.noise_ris1 < 0.0 || self.noise_ris2 < 0.0 {
            return Err(invalid("noise_ris", "must be non-negative"));
        }
        Ok(())
    }
}

fn stack_columns(cols: &[CVector], rows: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

fn invalid(field: &'static str, reason: &str) -> ChannelError {
    ChannelError::InvalidParameter {
        field,
        reason: reason.to_string(),
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power gain `10^((PL0 - 10 beta log10(d/d0)) / 10)`.
pub fn path_loss(params: &PathLossParams, link: Link, distance: f64) -> Result<f64, ChannelError> {
    if !(distance > 0.0) {
        return Err(invalid("distance", "must be positive"));
    }
    let beta = params.exponent(link)?;
    let pl_db = params.pl0_db - 10.0 * beta * (distance / params.d0).log10();
    Ok(db_to_linear(pl_db))
}

/// Uniform linear array response, entry i = exp(j 2 pi spacing/lambda i sin(angle)).
pub fn steering(n: usize, spacing: f64, wavelength: f64, angle: f64) -> CVector {
    steering_sin(n, spacing, wavelength, angle.sin())
}

fn steering_sin(n: usize, spacing: f64, wavelength: f64, sin_angle: f64) -> CVector {
    let k = 2.0 * PI * spacing / wavelength * sin_angle;
    CVector::from_fn(n, |i, _| {
        let phase = k * i as f64;
        c64(phase.cos(), phase.sin())
    })
}

/// Sine of the angle between an x-axis array at `from` and the line to `to`.
fn sin_toward(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[0] - from[0]) / distance(from, to)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream for `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}

const USER_POSITION_STREAM: u64 = 0x5553_4552;

/// Circularly symmetric CN(0, 1) sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// User positions drawn uniformly in the horizontal disc around `user_center`.
pub fn user_positions(geom: &Geometry, seed: u64) -> Vec<[f64; 3]> {
    (0..geom.n_users)
        .map(|k| {
            let mut rng = stream_rng(seed, USER_POSITION_STREAM, k as u64);
            let r = geom.user_radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            [
                geom.user_center[0] + r * theta.cos(),
                geom.user_center[1] + r * theta.sin(),
                geom.user_center[2],
            ]
        })
        .collect()
}

struct Endpoint {
    pos: [f64; 3],
    n: usize,
    spacing: f64,
}

#[allow(clippy::too_many_arguments)]
fn rician_link(
    pl: &PathLossParams,
    rice: &RicianParams,
    link: Link,
    tx: &Endpoint,
    rx: &Endpoint,
    wavelength: f64,
    seed: u64,
    user: u64,
) -> Result<CMatrix, ChannelError> {
    let d = distance(tx.pos, rx.pos);
    let beta = path_loss(pl, link, d)?;
    let f = rice.factor(link);
    let (w_los, w_nlos) = if f >= PURE_LOS_FACTOR {
        (1.0, 0.0)
    } else {
        ((f / (f + 1.0)).sqrt(), (1.0 / (f + 1.0)).sqrt())
    };
    let a_r = steering_sin(rx.n, rx.spacing, wavelength, sin_toward(rx.pos, tx.pos));
    let a_t = steering_sin(tx.n, tx.spacing, wavelength, sin_toward(tx.pos, rx.pos));
    let los = &a_r * a_t.adjoint();
    let mut rng = stream_rng(seed, link.index() as u64, user);
    let nlos = CMatrix::from_fn(rx.n, tx.n, |_, _| complex_normal(&mut rng));
    let scale = beta.sqrt();
    Ok((los * c64(w_los, 0.0) + nlos * c64(w_nlos, 0.0)) * c64(scale, 0.0))
}

/// Draws all channel blocks. Identical arguments give bit-identical output.
pub fn synthesize(
    geom: &Geometry,
    pl: &PathLossParams,
    rice: &RicianParams,
    noise_power: f64,
    seed: u64,
) -> Result<ChannelSet, ChannelError> {
    geom.validate()?;
    pl.validate()?;
    rice.validate()?;
    if !(noise_power > 0.0) {
        return Err(invalid("noise_power", "must be positive"));
    }
    let lambda = geom.wavelength();
    let bs = Endpoint {
        pos: geom.bs_pos,
        n: geom.n_bs_antennas,
        spacing: geom.antenna_spacing_bs,
    };
    let r1 = Endpoint {
        pos: geom.ris1_pos,
        n: geom.m1_elements,
        spacing: geom.element_spacing_ris,
    };
    let r2 = Endpoint {
        pos: geom.ris2_pos,
        n: geom.m2_elements,
        spacing: geom.element_spacing_ris,
    };
    let h1 = rician_link(pl, rice, Link::BsRis1, &bs, &r1, lambda, seed, 0)?;
    let h2 = rician_link(pl, rice, Link::BsRis2, &bs, &r2, lambda, seed, 0)?;
    let g = rician_link(pl, rice, Link::Ris1Ris2, &r1, &r2, lambda, seed, 0)?;

    let users = user_positions(geom, seed);
    let mut h1k = Vec::with_capacity(users.len());
    let mut h2k = Vec::with_capacity(users.len());
    for (k, pos) in users.iter().enumerate() {
        let ue = Endpoint {
            pos: *pos,
            n: 1,
            spacing: geom.element_spacing_ris,
        };
        // Stored as the column vector whose Hermitian is the 1 x M row channel.
        let row1 = rician_link(pl, rice, Link::Ris1User, &r1, &ue, lambda, seed, k as u64)?;
        let row2 = rician_link(pl, rice, Link::Ris2User, &r2, &ue, lambda, seed, k as u64)?;
        h1k.push(row1.adjoint().column(0).into_owned());
        h2k.push(row2.adjoint().column(0).into_owned());
    }
    Ok(ChannelSet {
        h1,
        h2,
        g,
        h1k,
        h2k,
        noise_ris1: noise_power,
        noise_ris2: noise_power,
        noise_users: vec![noise_power; geom.n_users],
    })
}
