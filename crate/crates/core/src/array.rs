//! N-bit in-memory multiplier built from N bitcells on one word line.
//!
//! Operand `a` is stored bitwise, MSB in the leftmost cell. Operand `b` is
//! converted by a single row DAC and drives every word line with the same
//! amplitude. Each cell with a stored 1 discharges its bit line; the sampled
//! bit-line voltages are merged by a binary-weighted capacitor bank
//! (`C_i = 2^i c_unit`, ideal charge sharing):
//!
//! ```text
//! v_combined = sum_i 2^i v_i / sum_i 2^i
//! ```
//!
//! The merged voltage is read out by a nearest-level quantizer whose levels
//! come from a nominal (variation-free) run of the same analog path.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::cell::{default_dt, sample_vblb, simulate_discharge, wl_pulse_width_max, BitcellConfig};
use crate::dac::{code_to_vwl, DacConfig, DacScheme};
use crate::device::OperatingRegion;
use crate::error::{Error, Result};

/// Minimum separation between readout levels of distinct products (V).
const LEVEL_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_bits: u32,
    /// Template for every cell; `stored_bit` is overridden per bit.
    pub cell: BitcellConfig,
    pub dac: DacConfig,
    /// Word-line pulse width (s).
    pub t_pulse: f64,
    /// Sampling instant, `<= t_pulse` (s).
    pub t_sample: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Unit capacitor of the binary-weighted merge bank (F).
    pub c_unit: f64,
}

/// Design knobs from which an [`ArrayConfig`] is derived for a given cell.
///
/// The DAC floor tracks the access device threshold under the cell's bulk
/// bias, and the default pulse width is the saturation bound at full-scale
/// code less a guard band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayDesign {
    pub n_bits: u32,
    pub scheme: DacScheme,
    /// DAC top rail (V).
    pub wl_top: f64,
    pub vwl_max: Option<f64>,
    /// Fraction removed from the saturation bound when choosing `t_pulse`.
    pub guard_band: f64,
    pub c_unit: f64,
    pub t_pulse: Option<f64>,
    pub t_sample: Option<f64>,
    pub dt: Option<f64>,
}

impl Default for ArrayDesign {
    fn default() -> Self {
        Self {
            n_bits: 4,
            scheme: DacScheme::Sqrt,
            wl_top: 0.7,
            vwl_max: Some(0.7),
            guard_band: 0.05,
            c_unit: 50e-15,
            t_pulse: None,
            t_sample: None,
            dt: None,
        }
    }
}

impl ArrayDesign {
    pub fn build(&self, cell: BitcellConfig) -> Result<ArrayConfig> {
        cell.validate()?;
        if !(self.guard_band >= 0.0 && self.guard_band < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "guard_band = {} must lie in [0, 1)",
                self.guard_band
            )));
        }
        let floor = cell.access_vth()?;
        let dac = DacConfig {
            n_bits: self.n_bits,
            vdd: self.wl_top,
            vth_eff: floor,
            scheme: self.scheme,
            vwl_max: self.vwl_max,
        };
        dac.validate()?;
        let t_pulse = match self.t_pulse {
            Some(t) => t,
            None => {
                let active = BitcellConfig {
                    stored_bit: true,
                    ..cell
                };
                let v_full = code_to_vwl(&dac, dac.max_code())?;
                (1.0 - self.guard_band) * wl_pulse_width_max(&active, v_full)?
            }
        };
        let cfg = ArrayConfig {
            n_bits: self.n_bits,
            cell,
            dac,
            t_pulse,
            t_sample: self.t_sample.unwrap_or(t_pulse),
            dt: self.dt.unwrap_or_else(|| default_dt(t_pulse)),
            c_unit: self.c_unit,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bits < 1 || self.n_bits != self.dac.n_bits {
            return Err(Error::InvalidConfig(format!(
                "array n_bits = {} must be >= 1 and match the DAC ({})",
                self.n_bits, self.dac.n_bits
            )));
        }
        self.cell.validate()?;
        self.dac.validate()?;
        if !(self.t_pulse > 0.0 && self.t_pulse.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_pulse = {} must be finite and > 0",
                self.t_pulse
            )));
        }
        if !(self.t_sample >= 0.0 && self.t_sample <= self.t_pulse) {
            return Err(Error::InvalidConfig(format!(
                "t_sample = {} must lie in [0, t_pulse = {}]",
                self.t_sample, self.t_pulse
            )));
        }
        if !(self.c_unit > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c_unit = {} must be > 0",
                self.c_unit
            )));
        }
        Ok(())
    }

    pub fn max_operand(&self) -> u32 {
        (1u32 << self.n_bits) - 1
    }

    /// Merge-bank weight of the cell at MSB-first position `k`.
    pub fn weight(&self, k: usize) -> f64 {
        (1u64 << (self.n_bits as usize - 1 - k)) as f64
    }

    /// Identical per-bit cells for a nominal run.
    pub fn nominal_cells(&self) -> Vec<BitcellConfig> {
        vec![self.cell; self.n_bits as usize]
    }

    fn check_operand(&self, name: &str, x: u32) -> Result<()> {
        if x > self.max_operand() {
            return Err(Error::Range(format!(
                "operand {name} = {x} outside [0, {}]",
                self.max_operand()
            )));
        }
        Ok(())
    }
}

/// Bits of `a`, MSB first.
pub fn store_operand(a: u32, n_bits: u32) -> Result<Vec<bool>> {
    if n_bits == 0 || n_bits > 16 {
        return Err(Error::Range(format!(
            "n_bits = {n_bits} must lie in [1, 16]"
        )));
    }
    if a >= 1 << n_bits {
        return Err(Error::Range(format!(
            "operand {a} does not fit in {n_bits} bits"
        )));
    }
    Ok((0..n_bits).rev().map(|i| (a >> i) & 1 == 1).collect())
}

/// Analog half of a MAC: sampled per-bit voltages and their weighted merge.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogReadout {
    /// Sampled bit-line voltage per cell, MSB first.
    pub v_bit: Vec<f64>,
    pub v_combined: f64,
    /// Every discharging cell was saturated at the sampling instant.
    pub saturated: bool,
}

/// Runs the analog path with explicit (possibly perturbed) per-bit cells.
pub fn analog_readout(
    cfg: &ArrayConfig,
    cells: &[BitcellConfig],
    a: u32,
    b: u32,
) -> Result<AnalogReadout> {
    cfg.check_operand("a", a)?;
    cfg.check_operand("b", b)?;
    if cells.len() != cfg.n_bits as usize {
        return Err(Error::InvalidConfig(format!(
            "expected {} cells, got {}",
            cfg.n_bits,
            cells.len()
        )));
    }
    let bits = store_operand(a, cfg.n_bits)?;
    let v_wl = code_to_vwl(&cfg.dac, b)?;
    let mut v_bit = Vec::with_capacity(bits.len());
    let mut saturated = true;
    for (bit, cell) in bits.iter().zip(cells) {
        if !bit {
            v_bit.push(cell.vdd);
            continue;
        }
        let cell = BitcellConfig {
            stored_bit: true,
            ..*cell
        };
        let trace = simulate_discharge(&cell, v_wl, cfg.t_pulse, cfg.dt)?;
        let sample = sample_vblb(&trace, cfg.t_sample)?;
        let idle =
            cfg.t_sample == 0.0 || trace.regions.iter().all(|r| *r == OperatingRegion::Cutoff);
        saturated &= sample.saturated || idle;
        v_bit.push(sample.v_blb);
    }
    let total: f64 = (0..v_bit.len()).map(|k| cfg.weight(k)).sum();
    let v_combined = v_bit
        .iter()
        .enumerate()
        .map(|(k, v)| cfg.weight(k) * v)
        .sum::<f64>()
        / total;
    Ok(AnalogReadout {
        v_bit,
        v_combined,
        saturated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub product: u32,
    pub v: f64,
}

/// Readout level per representable product, ordered by product.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    levels: Vec<Level>,
}

impl LevelTable {
    /// Builds a table from `(product, voltage)` pairs, rejecting pairs of
    /// distinct products closer than 1 uV.
    pub fn new(mut levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConfig("empty level table".into()));
        }
        levels.sort_by_key(|l| l.product);
        levels.dedup_by_key(|l| l.product);
        let mut by_voltage = levels.clone();
        by_voltage.sort_by(|x, y| x.v.total_cmp(&y.v));
        for pair in by_voltage.windows(2) {
            if (pair[1].v - pair[0].v).abs() < LEVEL_RESOLUTION {
                let (p, q) = (
                    pair[0].product.min(pair[1].product),
                    pair[0].product.max(pair[1].product),
                );
                return Err(Error::Degenerate(p, q));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, product: u32) -> Option<f64> {
        self.levels
            .binary_search_by_key(&product, |l| l.product)
            .ok()
            .map(|i| self.levels[i].v)
    }

    /// Levels strictly decrease as the product grows.
    pub fn is_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].v < w[0].v)
    }
}

/// Nearest level by absolute distance; ties go to the smaller product.
pub fn quantize(v: f64, levels: &LevelTable) -> u32 {
    let mut best = levels.levels[0];
    let mut best_dist = (v - best.v).abs();
    for l in &levels.levels[1..] {
        let d = (v - l.v).abs();
        if d < best_dist {
            best = *l;
            best_dist = d;
        }
    }
    best.product
}

/// The realization `(a, b)` of `product` with the smallest stored operand.
fn canonical_pair(product: u32, max: u32) -> Option<(u32, u32)> {
    if product == 0 {
        return Some((0, 0));
    }
    (1..=max)
        .find(|a| product.is_multiple_of(*a) && product / a <= max)
        .map(|a| (a, product / a))
}

/// Nominal readout level of every representable product.
pub fn nominal_levels(cfg: &ArrayConfig) -> Result<LevelTable> {
    cfg.validate()?;
    let max = cfg.max_operand();
    let cells = cfg.nominal_cells();
    let mut levels = Vec::new();
    for product in 0..=max * max {
        if let Some((a, b)) = canonical_pair(product, max) {
            let r = analog_readout(cfg, &cells, a, b)?;
            levels.push(Level {
                product,
                v: r.v_combined,
            });
        }
    }
    LevelTable::new(levels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacResult {
    /// Sampled bit-line voltage per cell, MSB first.
    pub v_bit: Vec<f64>,
    pub v_combined: f64,
    /// Quantized product.
    pub code: u32,
    /// Integer product `a * b`.
    pub exact: u32,
    pub correct: bool,
    /// False when some discharging cell had left saturation at sampling,
    /// which makes the readout systematically wrong.
    pub saturated: bool,
}

/// An array configuration together with its nominal readout levels.
#[derive(Debug, Clone)]
pub struct MacArray {
    pub config: ArrayConfig,
    pub levels: LevelTable,
}

impl MacArray {
    pub fn new(config: ArrayConfig) -> Result<Self> {
        let levels = nominal_levels(&config)?;
        Ok(Self { config, levels })
    }

    pub fn run_mac(&self, a: u32, b: u32) -> Result<MacResult> {
        self.run_mac_with_cells(&self.config.nominal_cells(), a, b)
    }

    pub fn run_mac_with_cells(&self, cells: &[BitcellConfig], a: u32, b: u32) -> Result<MacResult> {
        let r = analog_readout(&self.config, cells, a, b)?;
        let code = quantize(r.v_combined, &self.levels);
        let exact = a * b;
        if !r.saturated {
            log::debug!("a = {a}, b = {b}: a cell left saturation before sampling");
        }
        Ok(MacResult {
            v_bit: r.v_bit,
            v_combined: r.v_combined,
            code,
            exact,
            correct: code == exact,
            saturated: r.saturated,
        })
    }

    /// CSV of every operand pair: `a,b,product,v_combined_V,code`.
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "a,b,product,v_combined_V,code")?;
        let max = self.config.max_operand();
        for a in 0..=max {
            for b in 0..=max {
                let r = self
                    .run_mac(a, b)
                    .map_err(|e| io::Error::other(e.to_string()))?;
                writeln!(out, "{a},{b},{},{:.9},{}", a * b, r.v_combined, r.code)?;
            }
        }
        Ok(())
    }
}

/// One-shot MAC: builds the nominal level table and evaluates `a * b`.
pub fn run_mac(cfg: &ArrayConfig, a: u32, b: u32) -> Result<MacResult> {
    MacArray::new(*cfg)?.run_mac(a, b)
}
