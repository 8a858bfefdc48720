//! Flat dotted-key configuration files.
//!
//! Every key is optional and overrides the chosen scale preset. Quantities
//! accept unit suffixes: powers `W`, `mW`, `dBm`, `dBW`; gains `dB`;
//! frequencies `Hz` to `GHz`; lengths `m`. Plain numbers are SI units,
//! except `a_max2_db` and `path_loss.pl0_db`, which are in dB.

use std::collections::BTreeMap;
use std::path::Path;

use dar_core::bench::{PowerBudget, ScenarioConfig, Variant};
use dar_core::channel::{db_to_linear, dbm_to_watts, Link};
use dar_core::pdd::CutRule;
use thiserror::Error;
use toml::Value;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Plain,
    Decibel,
    Power,
    LinearOrDb,
    Frequency,
    Length,
}

const LINK_KEYS: [(&str, Link); 5] = [
    ("rician.bs_ris1", Link::BsRis1),
    ("rician.bs_ris2", Link::BsRis2),
    ("rician.ris1_ris2", Link::Ris1Ris2),
    ("rician.ris1_user", Link::Ris1User),
    ("rician.ris2_user", Link::Ris2User),
];

/// Splits `"2.4 GHz"` into the longest numeric prefix and the unit.
fn split_suffix(s: &str) -> (&str, &str) {
    let s = s.trim();
    let cut = (1..=s.len())
        .rev()
        .filter(|&i| s.is_char_boundary(i))
        .find(|&i| s[..i].trim().parse::<f64>().is_ok())
        .unwrap_or(0);
    (s[..cut].trim(), s[cut..].trim())
}

fn quantity(key: &str, v: &Value, unit: Unit) -> Result<f64, ConfigError> {
    let bad = |why: &str| ConfigError::new(key, why);
    let (x, suffix) = match v {
        Value::Integer(i) => (*i as f64, String::new()),
        Value::Float(f) => (*f, String::new()),
        Value::String(s) => {
            let (num, suffix) = split_suffix(s);
            let x: f64 = num.parse().map_err(|_| bad(&format!("cannot read a number from `{s}`")))?;
            (x, suffix.to_string())
        }
        _ => return Err(bad("expected a number or a quantity string")),
    };
    let value = match (unit, suffix.as_str()) {
        (_, "") => x,
        (Unit::Decibel, "dB") => x,
        (Unit::Power, "W") => x,
        (Unit::Power, "mW") => x * 1e-3,
        (Unit::Power, "dBm") => dbm_to_watts(x),
        (Unit::Power, "dBW") => db_to_linear(x),
        (Unit::LinearOrDb, "dB") => db_to_linear(x),
        (Unit::Frequency, "Hz") => x,
        (Unit::Frequency, "kHz") => x * 1e3,
        (Unit::Frequency, "MHz") => x * 1e6,
        (Unit::Frequency, "GHz") => x * 1e9,
        (Unit::Length, "m") => x,
        (_, s) => return Err(bad(&format!("unit `{s}` is not accepted here"))),
    };
    if !value.is_finite() {
        return Err(bad("must be finite"));
    }
    Ok(value)
}

fn count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(ConfigError::new(key, "expected a non-negative integer")),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| ConfigError::new(key, "expected true or false"))
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| ConfigError::new(key, "expected a string"))
}

fn point(key: &str, v: &Value) -> Result<[f64; 3], ConfigError> {
    let arr = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| ConfigError::new(key, "expected [x, y, z]"))?;
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = quantity(key, x, Unit::Length)?;
    }
    Ok(out)
}

pub fn parse_cut_rule(s: &str) -> Option<CutRule> {
    match s.trim().to_ascii_lowercase().as_str() {
        "slack" => Some(CutRule::Slack),
        "sign_pattern" | "sign-pattern" => Some(CutRule::SignPattern),
        _ => None,
    }
}

fn cut_rule_name(c: CutRule) -> &'static str {
    match c {
        CutRule::Slack => "slack",
        CutRule::SignPattern => "sign_pattern",
    }
}

/// Flattens nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

pub fn parse_entries(src: &str) -> Result<BTreeMap<String, Value>, ConfigError> {
    let table: toml::Table = src.parse().map_err(|e: toml::de::Error| {
        ConfigError::new("<file>", e.message().to_string())
    })?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out);
    Ok(out)
}

pub fn load(path: &Path, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    apply_all(cfg, &parse_entries(&src)?)
}

/// Applies all entries, then re-derives the base-station budget and, if
/// not given, unit weights for the configured user count.
pub fn apply_all(cfg: &mut ScenarioConfig, entries: &BTreeMap<String, Value>) -> Result<(), ConfigError> {
    for (k, v) in entries {
        apply(cfg, k, v)?;
    }
    if !entries.contains_key("weights") && cfg.weights.len() != cfg.geometry.n_users {
        cfg.weights = vec![1.0; cfg.geometry.n_users];
    }
    rebudget(cfg);
    Ok(())
}

pub fn rebudget(cfg: &mut ScenarioConfig) {
    let b = cfg.budget;
    cfg.budget = PowerBudget::dar(
        b.p_total,
        b.p_ris1,
        b.p_ris2,
        b.p_dc_per_element,
        b.p_c_per_element,
        cfg.m_total(),
    );
}

fn apply(cfg: &mut ScenarioConfig, key: &str, v: &Value) -> Result<(), ConfigError> {
    let q = |u: Unit| quantity(key, v, u);
    match key {
        "variant" => {
            cfg.variant = text(key, v)?
                .parse::<Variant>()
                .map_err(|e| ConfigError::new(key, e.to_string()))?
        }
        "trials" => cfg.trials = count(key, v)?,
        "seed" => match v {
            Value::Integer(i) if *i >= 0 => cfg.seed = *i as u64,
            Value::String(s) => {
                cfg.seed = s.trim().parse().map_err(|_| ConfigError::new(key, "expected an unsigned integer"))?
            }
            _ => return Err(ConfigError::new(key, "expected an unsigned integer")),
        },
        "a_max2_db" => cfg.a_max2_db = q(Unit::Decibel)?,
        "noise_power" => cfg.noise_power = q(Unit::Power)?,
        "weights" => {
            let arr = v.as_array().ok_or_else(|| ConfigError::new(key, "expected an array"))?;
            cfg.weights = arr.iter().map(|x| quantity(key, x, Unit::Plain)).collect::<Result<_, _>>()?;
        }
        "ie_warm_start" => cfg.ie_warm_start = flag(key, v)?,
        "ie_refine_rho0" => cfg.ie_refine_rho0 = q(Unit::Plain)?,

        "geometry.bs_pos" => cfg.geometry.bs_pos = point(key, v)?,
        "geometry.ris1_pos" => cfg.geometry.ris1_pos = point(key, v)?,
        "geometry.ris2_pos" => cfg.geometry.ris2_pos = point(key, v)?,
        "geometry.user_center" => cfg.geometry.user_center = point(key, v)?,
        "geometry.user_radius" => cfg.geometry.user_radius = q(Unit::Length)?,
        "geometry.n_bs_antennas" => cfg.geometry.n_bs_antennas = count(key, v)?,
        "geometry.m1_elements" => cfg.geometry.m1_elements = count(key, v)?,
        "geometry.m2_elements" => cfg.geometry.m2_elements = count(key, v)?,
        "geometry.n_users" => cfg.geometry.n_users = count(key, v)?,
        "geometry.carrier_freq" => cfg.geometry.carrier_freq = q(Unit::Frequency)?,
        "geometry.antenna_spacing_bs" => cfg.geometry.antenna_spacing_bs = q(Unit::Length)?,
        "geometry.element_spacing_ris" => cfg.geometry.element_spacing_ris = q(Unit::Length)?,

        "path_loss.pl0_db" => cfg.path_loss.pl0_db = q(Unit::Decibel)?,
        "path_loss.d0" => cfg.path_loss.d0 = q(Unit::Length)?,
        "path_loss.exponent_strong" => cfg.path_loss.exponent_strong = q(Unit::Plain)?,
        "path_loss.exponent_weak" => cfg.path_loss.exponent_weak = q(Unit::Plain)?,

        "rician.factor" => cfg.rician.factor_per_link = [q(Unit::LinearOrDb)?; 5],

        "budget.p_total" => cfg.budget.p_total = q(Unit::Power)?,
        "budget.p_ris1" => cfg.budget.p_ris1 = q(Unit::Power)?,
        "budget.p_ris2" => cfg.budget.p_ris2 = q(Unit::Power)?,
        "budget.p_dc_per_element" => cfg.budget.p_dc_per_element = q(Unit::Power)?,
        "budget.p_c_per_element" => cfg.budget.p_c_per_element = q(Unit::Power)?,

        "pdd.t_max" => cfg.pdd.t_max = count(key, v)?,
        "pdd.inner_tol" => cfg.pdd.inner_tol = q(Unit::Plain)?,
        "pdd.inner_max" => cfg.pdd.inner_max = count(key, v)?,
        "pdd.violation_tol" => cfg.pdd.violation_tol = q(Unit::Plain)?,
        "pdd.rho0" => cfg.pdd.rho0 = q(Unit::Plain)?,
        "pdd.c" => cfg.pdd.c = q(Unit::Plain)?,
        "pdd.ellipsoid_iters" => cfg.pdd.ellipsoid_iters = count(key, v)?,
        "pdd.ellipsoid_radius" => cfg.pdd.ellipsoid_radius = q(Unit::Plain)?,
        "pdd.cut_rule" => {
            cfg.pdd.cut_rule =
                parse_cut_rule(text(key, v)?).ok_or_else(|| ConfigError::new(key, "expected slack or sign_pattern"))?
        }
        "pdd.bisection_tol" => cfg.pdd.bisection_tol = q(Unit::Plain)?,
        _ => {
            if let Some((_, link)) = LINK_KEYS.iter().find(|(k, _)| *k == key) {
                cfg.rician.factor_per_link[link.index()] = q(Unit::LinearOrDb)?;
            } else {
                return Err(ConfigError::new(key, "unknown key"));
            }
        }
    }
    Ok(())
}

fn float(x: f64) -> Value {
    Value::Float(x)
}

fn int(n: usize) -> Value {
    Value::Integer(n as i64)
}

fn triple(p: [f64; 3]) -> Value {
    Value::Array(p.iter().map(|x| float(*x)).collect())
}

/// The fully resolved configuration as dotted keys in SI units; loading it
/// back reproduces `cfg`.
pub fn resolved_entries(cfg: &ScenarioConfig) -> BTreeMap<String, Value> {
    let g = &cfg.geometry;
    let b = &cfg.budget;
    let p = &cfg.pdd;
    let mut m: BTreeMap<String, Value> = [
        ("variant", Value::String(cfg.variant.name().into())),
        ("trials", int(cfg.trials)),
        ("seed", Value::String(cfg.seed.to_string())),
        ("a_max2_db", float(cfg.a_max2_db)),
        ("noise_power", float(cfg.noise_power)),
        ("weights", Value::Array(cfg.weights.iter().map(|w| float(*w)).collect())),
        ("ie_warm_start", Value::Boolean(cfg.ie_warm_start)),
        ("ie_refine_rho0", float(cfg.ie_refine_rho0)),
        ("geometry.bs_pos", triple(g.bs_pos)),
        ("geometry.ris1_pos", triple(g.ris1_pos)),
        ("geometry.ris2_pos", triple(g.ris2_pos)),
        ("geometry.user_center", triple(g.user_center)),
        ("geometry.user_radius", float(g.user_radius)),
        ("geometry.n_bs_antennas", int(g.n_bs_antennas)),
        ("geometry.m1_elements", int(g.m1_elements)),
        ("geometry.m2_elements", int(g.m2_elements)),
        ("geometry.n_users", int(g.n_users)),
        ("geometry.carrier_freq", float(g.carrier_freq)),
        ("geometry.antenna_spacing_bs", float(g.antenna_spacing_bs)),
        ("geometry.element_spacing_ris", float(g.element_spacing_ris)),
        ("path_loss.pl0_db", float(cfg.path_loss.pl0_db)),
        ("path_loss.d0", float(cfg.path_loss.d0)),
        ("path_loss.exponent_strong", float(cfg.path_loss.exponent_strong)),
        ("path_loss.exponent_weak", float(cfg.path_loss.exponent_weak)),
        ("budget.p_total", float(b.p_total)),
        ("budget.p_ris1", float(b.p_ris1)),
        ("budget.p_ris2", float(b.p_ris2)),
        ("budget.p_dc_per_element", float(b.p_dc_per_element)),
        ("budget.p_c_per_element", float(b.p_c_per_element)),
        ("pdd.t_max", int(p.t_max)),
        ("pdd.inner_tol", float(p.inner_tol)),
        ("pdd.inner_max", int(p.inner_max)),
        ("pdd.violation_tol", float(p.violation_tol)),
        ("pdd.rho0", float(p.rho0)),
        ("pdd.c", float(p.c)),
        ("pdd.ellipsoid_iters", int(p.ellipsoid_iters)),
        ("pdd.ellipsoid_radius", float(p.ellipsoid_radius)),
        ("pdd.cut_rule", Value::String(cut_rule_name(p.cut_rule).into())),
        ("pdd.bisection_tol", float(p.bisection_tol)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for (k, link) in LINK_KEYS {
        m.insert(k.to_string(), float(cfg.rician.factor(link)));
    }
    m
}

/// Renders entries as a flat TOML document with dotted keys.
pub fn to_toml(entries: &BTreeMap<String, Value>) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Maps core validation errors onto configuration key paths.
pub fn validate(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    use dar_core::bench::BenchError;
    use dar_core::channel::ChannelError;
    use dar_core::pdd::PddError;
    let section = |e: ChannelError, prefix: &str| match e {
        ChannelError::InvalidParameter { field, reason } => ConfigError::new(format!("{prefix}.{field}"), reason),
        other => ConfigError::new(prefix, other.to_string()),
    };
    cfg.geometry.validate().map_err(|e| section(e, "geometry"))?;
    cfg.path_loss.validate().map_err(|e| section(e, "path_loss"))?;
    cfg.rician.validate().map_err(|e| section(e, "rician"))?;
    cfg.validate().map_err(|e| match e {
        BenchError::Invalid { field, reason } => ConfigError::new(field, reason),
        BenchError::Pdd(PddError::InvalidConfig(msg)) => ConfigError::new("pdd", msg),
        other => ConfigError::new("<config>", other.to_string()),
    })
}
