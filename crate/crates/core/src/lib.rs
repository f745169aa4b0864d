//! Behavioral simulator of an analog in-SRAM multiply-accumulate array whose
//! access transistors can be forward body biased to lower their threshold.
//!
//! Layers, bottom up:
//!
//! - [`device`]: square-law NMOS with body effect
//! - [`cell`]: single-cell bit-line discharge (closed form and RK4 transient)
//! - [`dac`]: operand code to word-line voltage
//! - [`array`]: N-bit multiplier, charge-sharing merge and readout
//! - [`variation`]: seeded Monte-Carlo over process and mismatch
//! - [`energy`]: bit-line restore energy per MAC

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod array;
pub mod cell;
pub mod dac;
pub mod device;
pub mod energy;
pub mod error;
pub mod variation;

pub use array::{ArrayConfig, ArrayDesign, MacArray, MacResult};
pub use cell::{BitcellConfig, DischargeTrace, M3Mode};
pub use dac::{DacConfig, DacScheme};
pub use device::{BiasPoint, DeviceParams, OperatingRegion};
pub use error::{Error, Result};
pub use variation::{McOptions, McStats, VariationModel};
