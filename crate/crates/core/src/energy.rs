//! Per-MAC energy: the supply energy needed to restore the discharged bit
//! lines, `E_i = C_i * VDD * (VDD - v_i)` with `C_i = 2^i c_unit`.
//!
//! DAC, word-line driver and readout energy are not included, so the figure
//! is a lower bound on the full operation.

use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, MacResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Restore energy summed over all bit lines (J).
    pub e_discharge: f64,
    /// Total accounted energy (J); equals `e_discharge`.
    pub e_total: f64,
    /// Restore energy per cell, MSB first (J).
    pub per_bit: Vec<f64>,
}

pub fn mac_energy(cfg: &ArrayConfig, result: &MacResult) -> EnergyReport {
    let vdd = cfg.cell.vdd;
    let per_bit: Vec<f64> = result
        .v_bit
        .iter()
        .enumerate()
        .map(|(k, v)| cfg.weight(k) * cfg.c_unit * vdd * (vdd - v).max(0.0))
        .collect();
    let e_total = per_bit.iter().sum();
    EnergyReport {
        e_discharge: e_total,
        e_total,
        per_bit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ArrayDesign;
    use crate::cell::BitcellConfig;

    fn result(v_bit: Vec<f64>) -> MacResult {
        MacResult {
            v_bit,
            v_combined: 0.0,
            code: 0,
            exact: 0,
            correct: true,
            saturated: true,
        }
    }

    fn config() -> ArrayConfig {
        ArrayDesign::default()
            .build(BitcellConfig::default())
            .unwrap()
    }

    #[test]
    fn no_discharge_no_energy() {
        let e = mac_energy(&config(), &result(vec![1.0; 4]));
        assert_eq!(e.e_total, 0.0);
    }

    #[test]
    fn single_lsb_hand_value() {
        // 50 fF * 1 V * 0.3 V = 15 fJ on the unit-weight cell.
        let e = mac_energy(&config(), &result(vec![1.0, 1.0, 1.0, 0.7]));
        assert!((e.e_total - 15e-15).abs() < 1e-27);
        assert_eq!(e.per_bit[..3], [0.0; 3]);
    }

    #[test]
    fn linear_in_unit_capacitance() {
        let r = result(vec![0.6, 0.8, 0.9, 0.5]);
        let base = config();
        let doubled = ArrayConfig {
            c_unit: 2.0 * base.c_unit,
            ..base
        };
        let e1 = mac_energy(&base, &r).e_total;
        let e2 = mac_energy(&doubled, &r).e_total;
        assert!((e2 - 2.0 * e1).abs() < 1e-12 * e1);
    }

    #[test]
    fn doubling_vdd_at_fixed_swing_doubles_energy() {
        let base = config();
        let mut hi = base;
        hi.cell.vdd = 2.0;
        let e1 = mac_energy(&base, &result(vec![0.7, 0.9, 1.0, 0.8])).e_total;
        let e2 = mac_energy(&hi, &result(vec![1.7, 1.9, 2.0, 1.8])).e_total;
        assert!((e2 - 2.0 * e1).abs() < 1e-9 * e1);
    }

    #[test]
    fn total_is_sum_of_bits() {
        let e = mac_energy(&config(), &result(vec![0.6, 0.8, 0.9, 0.5]));
        assert_eq!(e.e_total, e.per_bit.iter().sum::<f64>());
        assert_eq!(e.e_total, e.e_discharge);
    }
}
