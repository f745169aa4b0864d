//! Run configuration: a TOML file whose every key is optional.
//!
//! Resolution order is built-in defaults, then the file, then command-line
//! flags. The resolved tree is serialized back to TOML and written next to
//! every output so a run can be repeated from it.

use std::path::{Path, PathBuf};

use cim_core::array::ArrayDesign;
use cim_core::cell::{BitcellConfig, M3Mode};
use cim_core::dac::DacScheme;
use cim_core::device::{DeviceParams, FORWARD_BULK_BIAS};
use cim_core::variation::{McOptions, VariationModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CIMSIM_CONFIG";

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Parse(PathBuf, String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read config file {}: {e}", p.display()),
            ConfigError::Parse(p, e) => write!(f, "in config file {}: {e}", p.display()),
            ConfigError::Invalid(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

macro_rules! device_section {
    ($name:ident, $default:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            pub vth0: f64,
            pub gamma: f64,
            pub phi2f: f64,
            pub kp: f64,
            pub w: f64,
            pub l: f64,
            pub lambda: f64,
        }

        impl Default for $name {
            fn default() -> Self {
                let p: DeviceParams = $default;
                Self {
                    vth0: p.vth0,
                    gamma: p.gamma,
                    phi2f: p.phi2f,
                    kp: p.kp,
                    w: p.w,
                    l: p.l,
                    lambda: p.lambda,
                }
            }
        }

        impl $name {
            pub fn params(&self) -> DeviceParams {
                DeviceParams {
                    vth0: self.vth0,
                    gamma: self.gamma,
                    phi2f: self.phi2f,
                    kp: self.kp,
                    w: self.w,
                    l: self.l,
                    lambda: self.lambda,
                }
            }
        }
    };
}

device_section!(AccessDevice, DeviceParams::default());
device_section!(PulldownDevice, DeviceParams::default_pulldown());

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub vdd: f64,
    pub c_blb: f64,
    pub v_bulk: f64,
    pub stored_bit: u8,
    pub m3_mode: M3Mode,
}

impl Default for CellSection {
    fn default() -> Self {
        let c = BitcellConfig::default();
        Self {
            vdd: c.vdd,
            c_blb: c.c_blb,
            v_bulk: c.v_bulk,
            stored_bit: 1,
            m3_mode: c.m3_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DacSection {
    pub n_bits: u32,
    pub scheme: DacScheme,
    /// Word-line voltage of the full-scale code (V).
    pub wl_top: f64,
    /// Word-line reliability ceiling (V); codes above it are clamped.
    pub vwl_max: Option<f64>,
}

impl Default for DacSection {
    fn default() -> Self {
        let d = ArrayDesign::default();
        Self {
            n_bits: d.n_bits,
            scheme: d.scheme,
            wl_top: d.wl_top,
            vwl_max: d.vwl_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub c_unit: f64,
    pub guard_band: f64,
    pub t_pulse: Option<f64>,
    pub t_sample: Option<f64>,
    pub dt: Option<f64>,
}

impl Default for ArraySection {
    fn default() -> Self {
        let d = ArrayDesign::default();
        Self {
            c_unit: d.c_unit,
            guard_band: d.guard_band,
            t_pulse: None,
            t_sample: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationSection {
    pub sigma_vth0_global: f64,
    pub avt_mismatch: f64,
    pub sigma_kp_rel: f64,
    pub sigma_wl_rel: f64,
}

impl Default for VariationSection {
    fn default() -> Self {
        let m = VariationModel::default();
        Self {
            sigma_vth0_global: m.sigma_vth0_global,
            avt_mismatch: m.avt_mismatch,
            sigma_kp_rel: m.sigma_kp_rel,
            sigma_wl_rel: m.sigma_wl_rel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Explicit word-line voltage; overrides `code`.
    pub v_wl: Option<f64>,
    /// Operand code fed through the DAC; defaults to full scale.
    pub code: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    VBulk,
    Width,
    Code,
    TSample,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::VBulk => "v_bulk_V",
            SweepAxis::Width => "width_m",
            SweepAxis::Code => "code",
            SweepAxis::TSample => "t_sample_s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::VBulk,
            from: 0.0,
            to: FORWARD_BULK_BIAS,
            points: 13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperandSection {
    pub a: u32,
    pub b: u32,
}

impl Default for OperandSection {
    fn default() -> Self {
        Self { a: 15, b: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub a: u32,
    pub b: u32,
    pub trials: usize,
    pub histogram_bins: usize,
    pub dump_trials: bool,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            a: 15,
            b: 15,
            trials: 1000,
            histogram_bins: 40,
            dump_trials: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub cases: Vec<[u32; 2]>,
    pub trials: usize,
    /// Bulk bias of the body-biased configuration (V).
    pub biased_bulk: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            cases: vec![[15, 15]],
            trials: 1000,
            biased_bulk: FORWARD_BULK_BIAS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub m2acc: AccessDevice,
    pub m3: PulldownDevice,
    pub cell: CellSection,
    pub dac: DacSection,
    pub array: ArraySection,
    pub variation: VariationSection,
    pub simulate: SimulateSection,
    pub sweep: SweepSection,
    pub mac: OperandSection,
    pub montecarlo: MonteCarloSection,
    pub compare: CompareSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 1,
            m2acc: AccessDevice::default(),
            m3: PulldownDevice::default(),
            cell: CellSection::default(),
            dac: DacSection::default(),
            array: ArraySection::default(),
            variation: VariationSection::default(),
            simulate: SimulateSection::default(),
            sweep: SweepSection::default(),
            mac: OperandSection::default(),
            montecarlo: MonteCarloSection::default(),
            compare: CompareSection::default(),
        }
    }
}

impl RunConfig {
    /// Loads `path`, or the file named by `CIMSIM_CONFIG`, or the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text =
                    std::fs::read_to_string(&p).map_err(|e| ConfigError::Read(p.clone(), e))?;
                Self::parse(&text).map_err(|e| ConfigError::Parse(p, e))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved TOML, hex encoded.
    /// SHA-256 of the resolved configuration. `workers` is left out because
    /// results do not depend on it.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            workers: 1,
            ..self.clone()
        };
        Sha256::digest(canonical.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn cell(&self) -> Result<BitcellConfig, ConfigError> {
        let stored_bit = match self.cell.stored_bit {
            0 => false,
            1 => true,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "cell.stored_bit = {other} must be 0 or 1"
                )))
            }
        };
        let cell = BitcellConfig {
            vdd: self.cell.vdd,
            c_blb: self.cell.c_blb,
            m2acc: self.m2acc.params(),
            m3: self.m3.params(),
            v_bulk: self.cell.v_bulk,
            stored_bit,
            m3_mode: self.cell.m3_mode,
        };
        cell.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cell)
    }

    pub fn design(&self) -> ArrayDesign {
        ArrayDesign {
            n_bits: self.dac.n_bits,
            scheme: self.dac.scheme,
            wl_top: self.dac.wl_top,
            vwl_max: self.dac.vwl_max,
            guard_band: self.array.guard_band,
            c_unit: self.array.c_unit,
            t_pulse: self.array.t_pulse,
            t_sample: self.array.t_sample,
            dt: self.array.dt,
        }
    }

    pub fn variation(&self) -> VariationModel {
        VariationModel {
            sigma_vth0_global: self.variation.sigma_vth0_global,
            avt_mismatch: self.variation.avt_mismatch,
            sigma_kp_rel: self.variation.sigma_kp_rel,
            sigma_wl_rel: self.variation.sigma_wl_rel,
        }
    }

    pub fn mc_options(&self, trials: usize) -> McOptions {
        McOptions {
            n_trials: trials,
            seed: self.seed,
            workers: self.workers,
            histogram_bins: self.montecarlo.histogram_bins,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_section_keeps_role_defaults() {
        let cfg = RunConfig::parse("[m3]\nvth0 = 0.35\n").unwrap();
        assert_eq!(cfg.m3.vth0, 0.35);
        assert_eq!(cfg.m3.w, DeviceParams::default_pulldown().w);
        assert_eq!(cfg.m2acc.w, DeviceParams::default().w);
    }

    #[test]
    fn unknown_key_is_located() {
        let err = RunConfig::parse("seed = 3\n\n[cell]\nvdd = 1.0\nbogus = 2\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        cfg.array.t_pulse = Some(1.25e-9);
        cfg.compare.cases = vec![[15, 15], [3, 7]];
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn stored_bit_validated() {
        let cfg = RunConfig::parse("[cell]\nstored_bit = 2\n").unwrap();
        assert!(cfg.cell().is_err());
    }
}
