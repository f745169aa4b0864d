//! Word-line DAC: digital operand code to word-line voltage.
//!
//! Two coding schemes are provided. `Linear` spaces the word-line voltage
//! uniformly between the threshold floor and the top rail. `Sqrt` spaces the
//! *squared overdrive* uniformly, which makes the saturation discharge of the
//! bit line linear in the code:
//!
//! ```text
//! Linear: V_WL = V_TH + code (V_top - V_TH) / (2^N - 1)
//! Sqrt:   V_WL = V_TH + (V_top - V_TH) sqrt(code / (2^N - 1))
//! ```
//!
//! The square-root form is normalized so the full-scale code lands exactly on
//! the top rail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DacScheme {
    Linear,
    #[default]
    Sqrt,
}

impl DacScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            DacScheme::Linear => "linear",
            DacScheme::Sqrt => "sqrt",
        }
    }
}

impl std::str::FromStr for DacScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DacScheme::Linear),
            "sqrt" => Ok(DacScheme::Sqrt),
            other => Err(Error::InvalidConfig(format!(
                "unknown DAC scheme '{other}' (expected linear|sqrt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacConfig {
    pub n_bits: u32,
    /// Top of the word-line range: the voltage of the full-scale code (V).
    pub vdd: f64,
    /// Floor of the word-line range: the effective threshold of the access
    /// device under the chosen body bias (V).
    pub vth_eff: f64,
    pub scheme: DacScheme,
    /// Reliability ceiling on the word-line voltage. Codes mapping above it
    /// are clamped with a warning.
    pub vwl_max: Option<f64>,
}

impl DacConfig {
    pub fn new(n_bits: u32, vdd: f64, vth_eff: f64, scheme: DacScheme) -> Result<Self> {
        let cfg = Self {
            n_bits,
            vdd,
            vth_eff,
            scheme,
            vwl_max: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.n_bits) {
            return Err(Error::InvalidConfig(format!(
                "dac n_bits = {} must lie in [1, 8]",
                self.n_bits
            )));
        }
        if !(self.vth_eff > 0.0 && self.vth_eff < self.vdd) {
            return Err(Error::InvalidConfig(format!(
                "dac floor {} V must lie in (0, {}) V",
                self.vth_eff, self.vdd
            )));
        }
        if let Some(max) = self.vwl_max {
            if !(max > 0.0) {
                return Err(Error::InvalidConfig(format!("vwl_max = {max} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.n_bits) - 1
    }
}

/// Word-line voltage for `code`.
pub fn code_to_vwl(cfg: &DacConfig, code: u32) -> Result<f64> {
    let max = cfg.max_code();
    if code > max {
        return Err(Error::Range(format!("code {code} outside [0, {max}]")));
    }
    let span = cfg.vdd - cfg.vth_eff;
    let frac = code as f64 / max as f64;
    let v = match cfg.scheme {
        DacScheme::Linear if code == max => cfg.vdd,
        DacScheme::Linear => cfg.vth_eff + span * frac,
        DacScheme::Sqrt if code == max => cfg.vdd,
        DacScheme::Sqrt => cfg.vth_eff + span * frac.sqrt(),
    };
    match cfg.vwl_max {
        Some(ceiling) if v > ceiling => {
            log::warn!("code {code} maps to {v} V, clamped to the {ceiling} V word-line ceiling");
            Ok(ceiling)
        }
        _ => Ok(v),
    }
}

/// Usable word-line window `(floor, top)`. A floor at or above the top is
/// reported as a zero-width window.
pub fn vwl_margin(cfg: &DacConfig) -> (f64, f64) {
    let top = cfg.vwl_max.map_or(cfg.vdd, |m| m.min(cfg.vdd));
    (cfg.vth_eff.min(top), top)
}

/// Spacing between adjacent codes: volts for `Linear`, squared-overdrive
/// volts^2 for `Sqrt`.
pub fn level_step(cfg: &DacConfig) -> f64 {
    let span = cfg.vdd - cfg.vth_eff;
    let max = cfg.max_code() as f64;
    match cfg.scheme {
        DacScheme::Linear => span / max,
        DacScheme::Sqrt => span * span / max,
    }
}
