//! Bit-line-bar discharge of a single 6T cell in compute mode.
//!
//! With `Q = VDD` the pre-charged bit-line-bar capacitance discharges through
//! the access transistor into the internal node, and from there through the
//! pull-down transistor (gate at `Q = VDD`) to ground:
//!
//! ```text
//!   BLB ──┬── M2acc (gate = WL, bulk = v_bulk) ── Vx ── M3 (gate = VDD) ── GND
//!         │
//!       C_BLB
//! ```
//!
//! KCL on the bit line gives `C_BLB dV/dt = -I_D`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::device::{
    drain_current, drain_current_with_region, effective_vth, saturation_current, BiasPoint,
    DeviceParams, OperatingRegion,
};
use crate::error::{Error, Result};

/// Relative tolerance of the internal-node solve.
const VX_REL_TOL: f64 = 1e-9;
/// Absolute floor for the internal-node solve, reached only when the root is
/// within femtovolts of zero.
const VX_ABS_TOL: f64 = 1e-15;
const VX_MAX_ITER: usize = 200;

/// How the pull-down transistor in series with the access device is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum M3Mode {
    /// Internal node held at 0 V; matches the closed-form discharge.
    IdealGround,
    /// Internal node solved so both series devices carry the same current.
    #[default]
    SeriesTriode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitcellConfig {
    /// Supply and pre-charge level (V).
    pub vdd: f64,
    /// Bit-line-bar capacitance (F).
    pub c_blb: f64,
    pub m2acc: DeviceParams,
    pub m3: DeviceParams,
    /// Bulk voltage of the access transistor (V). 0 is the unbiased baseline.
    pub v_bulk: f64,
    /// Stored operand bit. Without it there is no discharge path.
    pub stored_bit: bool,
    pub m3_mode: M3Mode,
}

impl Default for BitcellConfig {
    fn default() -> Self {
        Self {
            vdd: 1.0,
            c_blb: 50e-15,
            m2acc: DeviceParams::default(),
            m3: DeviceParams::default_pulldown(),
            v_bulk: 0.0,
            stored_bit: true,
            m3_mode: M3Mode::SeriesTriode,
        }
    }
}

impl BitcellConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "vdd = {} must be > 0",
                self.vdd
            )));
        }
        if !(self.c_blb > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c_blb = {} must be > 0",
                self.c_blb
            )));
        }
        if !(self.v_bulk >= 0.0 && self.v_bulk <= self.vdd) {
            return Err(Error::InvalidConfig(format!(
                "v_bulk = {} must lie in [0, vdd = {}]",
                self.v_bulk, self.vdd
            )));
        }
        self.m2acc.validate()?;
        self.m3.validate()?;
        // The internal node never drops below 0 V, so vsb >= -v_bulk.
        if !(self.m2acc.phi2f - self.v_bulk > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "v_bulk = {} exceeds the access device body-diode limit phi2f = {}",
                self.v_bulk, self.m2acc.phi2f
            )));
        }
        Ok(())
    }

    /// Threshold of the access device with its source at ground.
    pub fn access_vth(&self) -> Result<f64> {
        effective_vth(&self.m2acc, -self.v_bulk)
    }

    /// Instantaneous discharge state at bit-line voltage `v_blb`.
    pub fn operating_point(&self, v_wl: f64, v_blb: f64) -> Result<CellPoint> {
        let v_blb = v_blb.max(0.0);
        let v_x = match self.m3_mode {
            M3Mode::IdealGround => 0.0,
            M3Mode::SeriesTriode => self.solve_internal_node(v_wl, v_blb)?,
        };
        let (current, region) =
            drain_current_with_region(&self.m2acc, self.access_bias(v_wl, v_blb, v_x))?;
        Ok(CellPoint {
            current,
            v_x,
            region,
        })
    }

    fn access_bias(&self, v_wl: f64, v_blb: f64, v_x: f64) -> BiasPoint {
        BiasPoint::new(v_wl - v_x, (v_blb - v_x).max(0.0), v_x - self.v_bulk)
    }

    fn node_imbalance(&self, v_wl: f64, v_blb: f64, v_x: f64) -> Result<f64> {
        let i_acc = drain_current(&self.m2acc, self.access_bias(v_wl, v_blb, v_x))?;
        let i_pd = drain_current(&self.m3, BiasPoint::new(self.vdd, v_x, 0.0))?;
        Ok(i_acc - i_pd)
    }

    /// Bracketed Illinois iteration for the internal node: access current
    /// (falling in `v_x`) equals pull-down current (rising in `v_x`). The root
    /// lies in `[0, v_blb]`.
    fn solve_internal_node(&self, v_wl: f64, v_blb: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, v_blb);
        let mut f_lo = self.node_imbalance(v_wl, v_blb, lo)?;
        if f_lo <= 0.0 {
            return Ok(0.0);
        }
        let mut f_hi = self.node_imbalance(v_wl, v_blb, hi)?;
        if f_hi >= 0.0 {
            return Ok(hi);
        }
        let mut side = 0i8;
        let mut prev = f64::NAN;
        for _ in 0..VX_MAX_ITER {
            let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let tol = (VX_REL_TOL * x).max(VX_ABS_TOL);
            if hi - lo <= tol || (x - prev).abs() <= tol {
                return Ok(x);
            }
            prev = x;
            let fx = self.node_imbalance(v_wl, v_blb, x)?;
            if fx == 0.0 {
                return Ok(x);
            }
            if fx > 0.0 {
                lo = x;
                f_lo = fx;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = x;
                f_hi = fx;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
        Err(Error::Convergence {
            what: format!("internal node at v_wl = {v_wl} V, v_blb = {v_blb} V"),
            iterations: VX_MAX_ITER,
        })
    }
}

/// Solved cell state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPoint {
    /// Bit-line discharge current (A).
    pub current: f64,
    /// Source node of the access device (V).
    pub v_x: f64,
    /// Region of the access device.
    pub region: OperatingRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeTrace {
    pub times: Vec<f64>,
    pub v_blb: Vec<f64>,
    pub v_internal: Vec<f64>,
    pub regions: Vec<OperatingRegion>,
}

impl DischargeTrace {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            v_blb: Vec::with_capacity(n),
            v_internal: Vec::with_capacity(n),
            regions: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, v: f64, point: &CellPoint) {
        self.times.push(t);
        self.v_blb.push(v);
        self.v_internal.push(point.v_x);
        self.regions.push(point.region);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trace has at least one point")
    }

    pub fn final_vblb(&self) -> f64 {
        *self.v_blb.last().expect("trace has at least one point")
    }

    /// CSV with header `t_s,v_blb_V,v_x_V,region`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_s,v_blb_V,v_x_V,region")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.6e},{:.9},{:.9},{}",
                self.times[i], self.v_blb[i], self.v_internal[i], self.regions[i]
            )?;
        }
        Ok(())
    }
}

/// Closed-form bit-line voltage and whether the saturation-exit clamp applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormSample {
    pub v_blb: f64,
    pub clamped: bool,
}

/// Saturation-region closed form `VDD - kp(W/L)(V_WL - V_TH)^2 t / (2 C_BLB)`
/// with the source at ground (the `m3_mode` field is ignored). The result is
/// clamped at the saturation-exit level `V_WL - V_TH`.
pub fn closed_form_vblb(cfg: &BitcellConfig, v_wl: f64, t: f64) -> Result<ClosedFormSample> {
    if !cfg.stored_bit {
        return Err(Error::Domain("stored bit is 0: no discharge path".into()));
    }
    let vth = cfg.access_vth()?;
    let vov = v_wl - vth;
    if !(vov > 0.0) {
        return Err(Error::Domain(format!(
            "v_wl = {v_wl} V does not exceed the threshold {vth} V"
        )));
    }
    let v = cfg.vdd - cfg.m2acc.beta() * vov * vov * t / (2.0 * cfg.c_blb);
    if v < vov {
        Ok(ClosedFormSample {
            v_blb: vov,
            clamped: true,
        })
    } else {
        Ok(ClosedFormSample {
            v_blb: v,
            clamped: false,
        })
    }
}

/// Longest word-line pulse that keeps the access device saturated:
/// `(C_BLB / I_0)(VDD + V_TH - V_WL)`, the time for the bit line to fall from
/// VDD to `V_WL - V_TH`. Returns infinity when `I_0` underflows to zero and
/// zero when the device never enters saturation.
pub fn wl_pulse_width_max(cfg: &BitcellConfig, v_wl: f64) -> Result<f64> {
    if !cfg.stored_bit {
        return Err(Error::Domain("stored bit is 0: no discharge path".into()));
    }
    let vth = cfg.access_vth()?;
    if !(v_wl > vth) {
        return Err(Error::Domain(format!(
            "v_wl = {v_wl} V does not exceed the threshold {vth} V"
        )));
    }
    let i0 = saturation_current(&cfg.m2acc, v_wl, cfg.vdd, -cfg.v_bulk)?;
    if i0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((cfg.c_blb / i0 * (cfg.vdd + vth - v_wl)).max(0.0))
}

/// Default integration step for a pulse.
pub fn default_dt(t_pulse: f64) -> f64 {
    t_pulse / 2000.0
}

/// Integrates `dV/dt = -I_D / C_BLB` with classical RK4 over a rectangular
/// word-line pulse of amplitude `v_wl` and width `t_pulse`.
pub fn simulate_discharge(
    cfg: &BitcellConfig,
    v_wl: f64,
    t_pulse: f64,
    dt: f64,
) -> Result<DischargeTrace> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Range(format!("dt = {dt} must be > 0")));
    }
    if !(t_pulse >= 0.0) || !t_pulse.is_finite() {
        return Err(Error::Range(format!(
            "t_pulse = {t_pulse} must be finite and >= 0"
        )));
    }
    // Small slack for step sizes computed as t_pulse / 100 in floating point.
    if dt > t_pulse / 100.0 * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "dt = {dt} exceeds the resolution floor t_pulse / 100 = {}",
            t_pulse / 100.0
        )));
    }
    let n_steps = ((t_pulse / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut trace = DischargeTrace::with_capacity(n_steps + 1);
    let time_at = |k: usize| if k == n_steps { t_pulse } else { k as f64 * dt };

    if !cfg.stored_bit {
        let idle = CellPoint {
            current: 0.0,
            v_x: 0.0,
            region: OperatingRegion::Cutoff,
        };
        for k in 0..=n_steps {
            trace.push(time_at(k), cfg.vdd, &idle);
        }
        return Ok(trace);
    }

    let slope = |v: f64| -> Result<f64> { Ok(-cfg.operating_point(v_wl, v)?.current / cfg.c_blb) };
    let mut v = cfg.vdd;
    let mut point = cfg.operating_point(v_wl, v)?;
    trace.push(0.0, v, &point);
    for k in 0..n_steps {
        let h = time_at(k + 1) - time_at(k);
        let k1 = -point.current / cfg.c_blb;
        let k2 = slope(v + 0.5 * h * k1)?;
        let k3 = slope(v + 0.5 * h * k2)?;
        let k4 = slope(v + h * k3)?;
        let next = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // Every stage slope is <= 0; the min() guards rounding only.
        v = next.min(v);
        point = cfg.operating_point(v_wl, v)?;
        trace.push(time_at(k + 1), v, &point);
    }
    Ok(trace)
}

/// Bit-line voltage at an arbitrary instant of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub v_blb: f64,
    /// The access device was saturated at both bracketing trace points.
    pub saturated: bool,
}

/// Linear interpolation of a trace at `t_sample`.
pub fn sample_vblb(trace: &DischargeTrace, t_sample: f64) -> Result<TraceSample> {
    if trace.is_empty() {
        return Err(Error::Range("empty trace".into()));
    }
    let t_end = trace.final_time();
    if !(t_sample >= trace.times[0] && t_sample <= t_end) {
        return Err(Error::Range(format!(
            "t_sample = {t_sample} outside trace [{}, {t_end}]",
            trace.times[0]
        )));
    }
    let sat = |i: usize| trace.regions[i] == OperatingRegion::Saturation;
    let upper = trace.times.partition_point(|&t| t < t_sample);
    if trace.times[upper] == t_sample {
        return Ok(TraceSample {
            v_blb: trace.v_blb[upper],
            saturated: sat(upper),
        });
    }
    let lower = upper - 1;
    let (t0, t1) = (trace.times[lower], trace.times[upper]);
    let frac = (t_sample - t0) / (t1 - t0);
    let v = trace.v_blb[lower] + frac * (trace.v_blb[upper] - trace.v_blb[lower]);
    Ok(TraceSample {
        v_blb: v,
        saturated: sat(lower) && sat(upper),
    })
}
