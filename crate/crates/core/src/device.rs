//! Square-law NMOS model with body-effect threshold modulation.
//!
//! Every drain current in the simulator is evaluated here. The model has
//! three regions:
//!
//! - Cutoff: `Id = 0` when `Vgs <= Vth`
//! - Saturation: `Id = (kp/2)(W/L)(Vgs - Vth)^2 (1 + lambda*Vds)` when `Vds >= Vgs - Vth`
//! - Triode: `Id = kp(W/L)[(Vgs - Vth)Vds - Vds^2/2] (1 + lambda*Vds)`
//!
//! The threshold follows `Vth = Vth0 + gamma(sqrt(2phiF + Vsb) - sqrt(2phiF))`,
//! so a negative source-to-bulk voltage (forward body bias) lowers it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-bias threshold of the default device (V).
pub const DEFAULT_VTH0: f64 = 0.30;
/// Surface potential term 2phiF of the default device (V).
pub const DEFAULT_PHI2F: f64 = 0.8;
/// Bulk bias used for the body-biased configuration (V).
pub const FORWARD_BULK_BIAS: f64 = 0.6;
/// Threshold reduction the default body-effect coefficient produces at
/// `FORWARD_BULK_BIAS` (V).
pub const CALIBRATED_VTH_DROP: f64 = 0.125;

/// Body-effect coefficient solving `gamma(sqrt(0.8) - sqrt(0.2)) = 0.125`.
///
/// Since `sqrt(0.8) - sqrt(0.2) = sqrt(0.2)`, this is `0.125 / sqrt(0.2)`,
/// approximately 0.2795 sqrt(V).
pub fn default_gamma() -> f64 {
    CALIBRATED_VTH_DROP / (DEFAULT_PHI2F - FORWARD_BULK_BIAS).sqrt()
}

/// Physical parameters of one NMOS transistor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Zero-bias threshold voltage (V).
    pub vth0: f64,
    /// Body-effect coefficient (sqrt(V)).
    pub gamma: f64,
    /// Surface potential term 2phiF (V).
    pub phi2f: f64,
    /// Process transconductance mu_n * C_ox (A/V^2).
    pub kp: f64,
    /// Gate width (m).
    pub w: f64,
    /// Gate length (m).
    pub l: f64,
    /// Channel-length modulation (1/V).
    pub lambda: f64,
}

impl Default for DeviceParams {
    /// Access-transistor sized device, W/L = 130 nm / 65 nm.
    fn default() -> Self {
        Self {
            vth0: DEFAULT_VTH0,
            gamma: default_gamma(),
            phi2f: DEFAULT_PHI2F,
            kp: 200e-6,
            w: 130e-9,
            l: 65e-9,
            lambda: 0.0,
        }
    }
}

impl DeviceParams {
    /// Default pull-down device: same process, twice the access width.
    pub fn default_pulldown() -> Self {
        Self {
            w: 260e-9,
            ..Self::default()
        }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.w / self.l
    }

    /// `kp * W / L` (A/V^2).
    pub fn beta(&self) -> f64 {
        self.kp * self.aspect_ratio()
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.vth0 > 0.0, "vth0 must be > 0"),
            (self.gamma >= 0.0, "gamma must be >= 0"),
            (self.phi2f > 0.0, "phi2f must be > 0"),
            (self.kp > 0.0, "kp must be > 0"),
            (self.w > 0.0, "w must be > 0"),
            (self.l > 0.0, "l must be > 0"),
            (self.lambda >= 0.0, "lambda must be >= 0"),
        ];
        for (ok, msg) in checks {
            // NaN fails every comparison and lands here too.
            if !ok {
                return Err(Error::InvalidConfig(format!("device: {msg}")));
            }
        }
        Ok(())
    }
}

/// Terminal voltages of an NMOS device. `vds` must be oriented so that
/// `vds >= 0`; `vsb < 0` is forward body bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub vgs: f64,
    pub vds: f64,
    pub vsb: f64,
}

impl BiasPoint {
    pub fn new(vgs: f64, vds: f64, vsb: f64) -> Self {
        Self { vgs, vds, vsb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatingRegion {
    Cutoff,
    Saturation,
    Triode,
}

impl OperatingRegion {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatingRegion::Cutoff => "cutoff",
            OperatingRegion::Saturation => "saturation",
            OperatingRegion::Triode => "triode",
        }
    }
}

impl std::fmt::Display for OperatingRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Threshold voltage at source-to-bulk voltage `vsb`.
///
/// Fails when `phi2f + vsb <= 0`, i.e. the forward bias exceeds the
/// body-diode limit of the square-root model.
pub fn effective_vth(p: &DeviceParams, vsb: f64) -> Result<f64> {
    let surface = p.phi2f + vsb;
    if !(surface > 0.0) {
        return Err(Error::Domain(format!(
            "phi2f + vsb = {surface} V is not positive (vsb = {vsb} V)"
        )));
    }
    if vsb == 0.0 {
        return Ok(p.vth0);
    }
    Ok(p.vth0 + p.gamma * (surface.sqrt() - p.phi2f.sqrt()))
}

fn classify(vgs: f64, vds: f64, vth: f64) -> OperatingRegion {
    if vgs <= vth {
        OperatingRegion::Cutoff
    } else if vds >= vgs - vth {
        OperatingRegion::Saturation
    } else {
        OperatingRegion::Triode
    }
}

pub fn region(p: &DeviceParams, bias: BiasPoint) -> Result<OperatingRegion> {
    let vth = effective_vth(p, bias.vsb)?;
    Ok(classify(bias.vgs, bias.vds, vth))
}

/// Drain current together with the region it was evaluated in.
pub fn drain_current_with_region(
    p: &DeviceParams,
    bias: BiasPoint,
) -> Result<(f64, OperatingRegion)> {
    let vth = effective_vth(p, bias.vsb)?;
    let region = classify(bias.vgs, bias.vds, vth);
    let beta = p.beta();
    let clm = 1.0 + p.lambda * bias.vds;
    let vov = bias.vgs - vth;
    let id = match region {
        OperatingRegion::Cutoff => 0.0,
        OperatingRegion::Saturation => 0.5 * beta * vov * vov * clm,
        OperatingRegion::Triode => beta * (vov * bias.vds - 0.5 * bias.vds * bias.vds) * clm,
    };
    Ok((id, region))
}

pub fn drain_current(p: &DeviceParams, bias: BiasPoint) -> Result<f64> {
    drain_current_with_region(p, bias).map(|(id, _)| id)
}

/// Saturation current at `vgs` with `vds` applied, ignoring the region test.
pub fn saturation_current(p: &DeviceParams, vgs: f64, vds: f64, vsb: f64) -> Result<f64> {
    let vov = vgs - effective_vth(p, vsb)?;
    if vov <= 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * p.beta() * vov * vov * (1.0 + p.lambda * vds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_params() -> DeviceParams {
        DeviceParams {
            vth0: 0.45,
            gamma: 0.2795,
            phi2f: 0.8,
            ..DeviceParams::default()
        }
    }

    #[test]
    fn zero_bias_threshold_is_vth0() {
        assert_eq!(effective_vth(&paper_params(), 0.0).unwrap(), 0.45);
    }

    #[test]
    fn forward_bias_drops_threshold_by_125mv() {
        let v = effective_vth(&paper_params(), -0.6).unwrap();
        assert!((v - 0.325).abs() < 1e-5, "{v}");
    }

    #[test]
    fn default_gamma_is_exact_calibration() {
        let p = DeviceParams::default();
        assert!((p.gamma - 0.2795).abs() < 1e-4);
        let drop = p.vth0 - effective_vth(&p, -FORWARD_BULK_BIAS).unwrap();
        assert!((drop - 0.125).abs() < 1e-12, "{drop}");
    }

    #[test]
    fn body_diode_limit_is_a_domain_error() {
        assert!(matches!(
            effective_vth(&paper_params(), -0.81),
            Err(Error::Domain(_))
        ));
        assert!(effective_vth(&paper_params(), -0.8).is_err());
    }

    #[test]
    fn region_examples() {
        // vth_eff fixed via vth0 with vsb = 0.
        let p = DeviceParams {
            vth0: 0.45,
            ..paper_params()
        };
        assert_eq!(
            region(&p, BiasPoint::new(0.3, 1.0, 0.0)).unwrap(),
            OperatingRegion::Cutoff
        );
        let p = DeviceParams {
            vth0: 0.35,
            ..paper_params()
        };
        assert_eq!(
            region(&p, BiasPoint::new(0.7, 1.0, 0.0)).unwrap(),
            OperatingRegion::Saturation
        );
        assert_eq!(
            region(&p, BiasPoint::new(0.7, 0.1, 0.0)).unwrap(),
            OperatingRegion::Triode
        );
    }

    #[test]
    fn saturation_current_hand_value() {
        // kp = 200 uA/V^2, W/L = 2, overdrive 0.3 V -> 18 uA.
        let p = DeviceParams {
            vth0: 0.4,
            lambda: 0.0,
            ..DeviceParams::default()
        };
        let id = drain_current(&p, BiasPoint::new(0.7, 1.0, 0.0)).unwrap();
        assert!((id - 18e-6).abs() < 1e-15, "{id}");
    }

    #[test]
    fn cutoff_current_is_zero() {
        let p = DeviceParams::default();
        assert_eq!(
            drain_current(&p, BiasPoint::new(0.2, 1.0, 0.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn boundary_continuity() {
        let p = DeviceParams {
            lambda: 0.1,
            ..DeviceParams::default()
        };
        let vgs = 0.8;
        let vov = vgs - p.vth0;
        let sat = 0.5 * p.beta() * vov * vov * (1.0 + p.lambda * vov);
        let tri = p.beta() * (vov * vov - 0.5 * vov * vov) * (1.0 + p.lambda * vov);
        let model = drain_current(&p, BiasPoint::new(vgs, vov, 0.0)).unwrap();
        assert_eq!(sat, tri);
        assert_eq!(model, sat);
    }

    fn arb_device() -> impl Strategy<Value = DeviceParams> {
        (
            0.1f64..0.6,
            0.0f64..0.6,
            0.5f64..1.0,
            50e-6f64..500e-6,
            1.0f64..8.0,
            0.0f64..0.2,
        )
            .prop_map(|(vth0, gamma, phi2f, kp, ratio, lambda)| DeviceParams {
                vth0,
                gamma,
                phi2f,
                kp,
                w: 65e-9 * ratio,
                l: 65e-9,
                lambda,
            })
    }

    proptest! {
        #[test]
        fn current_non_negative(p in arb_device(), vgs in -0.5f64..1.5, vds in 0.0f64..1.5, vsb in -0.4f64..0.5) {
            prop_assert!(drain_current(&p, BiasPoint::new(vgs, vds, vsb)).unwrap() >= 0.0);
        }

        #[test]
        fn current_monotone_in_vgs(p in arb_device(), vgs in 0.0f64..1.4, dv in 0.0f64..0.3, vds in 0.0f64..1.2, vsb in -0.4f64..0.5) {
            let lo = drain_current(&p, BiasPoint::new(vgs, vds, vsb)).unwrap();
            let hi = drain_current(&p, BiasPoint::new(vgs + dv, vds, vsb)).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn threshold_increases_with_vsb(p in arb_device(), vsb in -0.45f64..0.8, dv in 1e-3f64..0.3) {
            let a = effective_vth(&p, vsb).unwrap();
            let b = effective_vth(&p, vsb + dv).unwrap();
            if p.gamma > 0.0 { prop_assert!(b > a); } else { prop_assert_eq!(a, b); }
        }

        #[test]
        fn forward_bias_raises_saturation_current(p in arb_device(), vgs in 0.62f64..1.2, fbb in 0.01f64..0.45) {
            prop_assume!(p.gamma > 1e-3);
            let base = drain_current(&p, BiasPoint::new(vgs, 1.5, 0.0)).unwrap();
            let fwd = drain_current(&p, BiasPoint::new(vgs, 1.5, -fbb)).unwrap();
            prop_assert!(fwd > base);
        }
    }
}
