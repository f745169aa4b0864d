//! Hand-derived reference values for the default design.

use cim_core::array::ArrayDesign;
use cim_core::cell::{wl_pulse_width_max, BitcellConfig, M3Mode};
use cim_core::dac::{code_to_vwl, DacConfig, DacScheme};
use cim_core::device::{default_gamma, effective_vth, DeviceParams};
use cim_core::energy::mac_energy;
use cim_core::MacArray;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn body_coefficient() {
    close(default_gamma(), 0.279_508_497_187_473_7, 1e-15);
    close(
        effective_vth(&DeviceParams::default(), -0.6).unwrap(),
        0.175,
        1e-15,
    );
}

#[test]
fn dac_codes() {
    let sqrt = DacConfig::new(4, 0.7, 0.3, DacScheme::Sqrt).unwrap();
    close(
        code_to_vwl(&sqrt, 9).unwrap(),
        0.3 + 0.4 * 0.6f64.sqrt(),
        1e-15,
    );
    close(code_to_vwl(&sqrt, 9).unwrap(), 0.609_838_668, 1e-9);
    let linear = DacConfig {
        scheme: DacScheme::Linear,
        ..sqrt
    };
    close(code_to_vwl(&linear, 5).unwrap(), 0.3 + 0.4 / 3.0, 1e-15);
}

#[test]
fn pulse_bounds() {
    let cell = BitcellConfig {
        m3_mode: M3Mode::IdealGround,
        ..BitcellConfig::default()
    };
    // I0 = 0.5 * 200e-6 * 2 * 0.4^2 = 32 uA; t = 50 fF * 0.6 V / 32 uA.
    close(wl_pulse_width_max(&cell, 0.7).unwrap(), 9.375e-10, 1e-22);
    close(
        ArrayDesign::default().build(cell).unwrap().t_pulse,
        8.906_25e-10,
        1e-22,
    );
    let biased = BitcellConfig {
        v_bulk: 0.6,
        ..cell
    };
    close(
        wl_pulse_width_max(&biased, 0.7).unwrap(),
        50e-15 * 0.475 / 5.5125e-5,
        1e-22,
    );
}

#[test]
fn default_mac_regression() {
    let array = MacArray::new(
        ArrayDesign::default()
            .build(BitcellConfig::default())
            .unwrap(),
    )
    .unwrap();
    let r = array.run_mac(15, 15).unwrap();
    assert_eq!(r.code, 225);
    close(r.v_combined, 0.567_737_269, 1e-8);
    close(mac_energy(&array.config, &r).e_total, 0.324_197e-12, 1e-18);
}
