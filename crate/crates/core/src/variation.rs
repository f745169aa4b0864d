//! Seeded Monte-Carlo over process and mismatch variation.
//!
//! Each trial draws its own parameters from a ChaCha8 generator seeded with
//! the run seed and switched to stream `trial_index`, so a trial's draws do not
//! depend on which worker runs it or in what order. Draw order within a
//! trial is fixed: global V_TH0 shift, global kp shift, then for each cell
//! MSB first the access device followed by the pull-down device. Every cell is
//! drawn whether or not it stores a 1, so two runs with the same seed see the
//! same perturbations for any operands or bulk bias.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayDesign, MacArray};
use crate::cell::BitcellConfig;
use crate::dac::vwl_margin;
use crate::device::DeviceParams;
use crate::energy::mac_energy;
use crate::error::{Error, Result};

const MAX_RESAMPLE: usize = 100;

/// Name of the trial-to-substream rule, recorded alongside results.
pub const STREAM_RULE: &str = "chacha8(seed_from_u64(seed)).set_stream(trial_index)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationModel {
    /// Die-level V_TH0 shift shared by every device in a trial (V).
    pub sigma_vth0_global: f64,
    /// Pelgrom coefficient A_VT (V*m); per-device sigma = A_VT / sqrt(W L).
    pub avt_mismatch: f64,
    /// Relative sigma of kp, shared by every device in a trial.
    pub sigma_kp_rel: f64,
    /// Relative sigma of W/L, drawn per device.
    pub sigma_wl_rel: f64,
}

impl Default for VariationModel {
    fn default() -> Self {
        Self {
            sigma_vth0_global: 0.020,
            avt_mismatch: 3.5e-9,
            sigma_kp_rel: 0.03,
            sigma_wl_rel: 0.02,
        }
    }
}

impl VariationModel {
    pub fn none() -> Self {
        Self {
            sigma_vth0_global: 0.0,
            avt_mismatch: 0.0,
            sigma_kp_rel: 0.0,
            sigma_wl_rel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_vth0_global,
            self.avt_mismatch,
            self.sigma_kp_rel,
            self.sigma_wl_rel,
        ];
        if all.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidConfig("variation sigmas must be >= 0".into()));
        }
        Ok(())
    }

    /// Mismatch sigma of V_TH0 for a device of the given geometry (V).
    pub fn mismatch_sigma(&self, p: &DeviceParams) -> f64 {
        self.avt_mismatch / (p.w * p.l).sqrt()
    }
}

/// Draws shared by all devices of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalDraws {
    pub dvth0: f64,
    pub kp_rel: f64,
}

impl GlobalDraws {
    pub fn sample<R: Rng + ?Sized>(model: &VariationModel, rng: &mut R) -> Self {
        let z_vth: f64 = rng.sample(StandardNormal);
        let z_kp: f64 = rng.sample(StandardNormal);
        Self {
            dvth0: model.sigma_vth0_global * z_vth,
            kp_rel: model.sigma_kp_rel * z_kp,
        }
    }
}

/// Perturbs one device: shared global shifts plus fresh mismatch draws.
/// Invalid draws are rejected and redrawn.
pub fn sample_params<R: Rng + ?Sized>(
    model: &VariationModel,
    base: &DeviceParams,
    globals: &GlobalDraws,
    rng: &mut R,
) -> Result<DeviceParams> {
    let sigma_vt = model.mismatch_sigma(base);
    for _ in 0..MAX_RESAMPLE {
        let z_vt: f64 = rng.sample(StandardNormal);
        let z_wl: f64 = rng.sample(StandardNormal);
        let p = DeviceParams {
            vth0: base.vth0 + globals.dvth0 + sigma_vt * z_vt,
            kp: base.kp * (1.0 + globals.kp_rel),
            w: base.w * (1.0 + model.sigma_wl_rel * z_wl),
            ..*base
        };
        if p.validate().is_ok() {
            return Ok(p);
        }
    }
    Err(Error::ResampleExhausted(MAX_RESAMPLE))
}

/// Generator for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Perturbed per-bit cells for one trial, MSB first.
pub fn sample_trial_cells<R: Rng + ?Sized>(
    model: &VariationModel,
    template: &BitcellConfig,
    n_bits: u32,
    rng: &mut R,
) -> Result<Vec<BitcellConfig>> {
    let globals = GlobalDraws::sample(model, rng);
    (0..n_bits)
        .map(|_| {
            let m2acc = sample_params(model, &template.m2acc, &globals, rng)?;
            let m3 = sample_params(model, &template.m3, &globals, rng)?;
            Ok(BitcellConfig {
                m2acc,
                m3,
                ..*template
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_trials: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub workers: usize,
    pub histogram_bins: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            seed: 1,
            workers: 1,
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub v_combined: Option<f64>,
    pub code: Option<u32>,
    pub correct: bool,
    pub saturated: bool,
    pub energy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McStats {
    pub n: usize,
    /// Mean of the merged output voltage over completed trials (V).
    pub mean: f64,
    /// Sample standard deviation of the merged output voltage (V).
    pub std: f64,
    /// Histogram of the merged output voltage over completed trials.
    pub histogram: Vec<HistogramBin>,
    /// Fraction of trials whose quantized output differs from `a * b`.
    /// Failed trials count as incorrect.
    pub ber: f64,
    /// Quantized output code counts.
    pub code_counts: BTreeMap<u32, usize>,
    /// Trials that raised a simulation error; they are excluded from the
    /// voltage statistics and histogram.
    pub failed: usize,
    /// Trials with a discharging cell outside saturation at sampling.
    pub unsaturated: usize,
    pub mean_energy: f64,
}

impl McStats {
    fn from_trials(trials: &[TrialRecord], bins: usize) -> Self {
        let n = trials.len();
        let volts: Vec<f64> = trials.iter().filter_map(|t| t.v_combined).collect();
        let ok = volts.len();
        // Shifted by the first sample so identical values give exactly zero spread.
        let shift = volts.first().copied().unwrap_or(f64::NAN);
        let sum_d: f64 = volts.iter().map(|v| v - shift).sum();
        let sum_d2: f64 = volts.iter().map(|v| (v - shift) * (v - shift)).sum();
        let mean = if ok > 0 {
            shift + sum_d / ok as f64
        } else {
            f64::NAN
        };
        let std = if ok > 1 {
            ((sum_d2 - sum_d * sum_d / ok as f64) / (ok - 1) as f64)
                .max(0.0)
                .sqrt()
        } else {
            0.0
        };
        let incorrect = trials.iter().filter(|t| !t.correct).count();
        let mut code_counts = BTreeMap::new();
        for code in trials.iter().filter_map(|t| t.code) {
            *code_counts.entry(code).or_insert(0) += 1;
        }
        let energies: Vec<f64> = trials.iter().filter_map(|t| t.energy).collect();
        let mean_energy = if energies.is_empty() {
            f64::NAN
        } else {
            energies.iter().sum::<f64>() / energies.len() as f64
        };
        Self {
            n,
            mean,
            std,
            histogram: histogram(&volts, bins.max(1)),
            ber: if n > 0 {
                incorrect as f64 / n as f64
            } else {
                0.0
            },
            code_counts,
            failed: n - ok,
            unsaturated: trials.iter().filter(|t| !t.saturated).count(),
            mean_energy,
        }
    }

    /// `key: value` summary lines.
    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n: {}", self.n)?;
        writeln!(out, "mean_V: {:.9}", self.mean)?;
        writeln!(out, "std_V: {:.9}", self.std)?;
        writeln!(out, "ber: {:.6}", self.ber)?;
        writeln!(out, "failed: {}", self.failed)?;
        writeln!(out, "unsaturated: {}", self.unsaturated)?;
        writeln!(out, "mean_energy_pJ: {:.6}", self.mean_energy * 1e12)?;
        let codes: Vec<String> = self
            .code_counts
            .iter()
            .map(|(c, k)| format!("{c}={k}"))
            .collect();
        writeln!(out, "code_counts: {}", codes.join(" "))
    }

    /// CSV with header `bin_low_V,bin_high_V,count`.
    pub fn write_histogram_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_low_V,bin_high_V,count")?;
        for b in &self.histogram {
            writeln!(out, "{:.9},{:.9},{}", b.low, b.high, b.count)?;
        }
        Ok(())
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![HistogramBin {
            low: lo,
            high: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            low: lo + i as f64 * width,
            high: if i + 1 == bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub stats: McStats,
    pub trials: Vec<TrialRecord>,
}

impl McRun {
    /// Per-trial CSV: `trial,v_combined_V,code,correct,saturated,energy_J,error`.
    pub fn write_trials_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "trial,v_combined_V,code,correct,saturated,energy_J,error"
        )?;
        for t in &self.trials {
            let v = t.v_combined.map_or(String::new(), |v| format!("{v:.9}"));
            let code = t.code.map_or(String::new(), |c| c.to_string());
            let e = t.energy.map_or(String::new(), |e| format!("{e:.6e}"));
            let err = t.error.as_deref().unwrap_or("").replace(',', ";");
            writeln!(
                out,
                "{},{v},{code},{},{},{e},{err}",
                t.index, t.correct, t.saturated
            )?;
        }
        Ok(())
    }
}

fn run_trial(
    array: &MacArray,
    model: &VariationModel,
    a: u32,
    b: u32,
    seed: u64,
    index: usize,
) -> TrialRecord {
    let outcome = (|| {
        let mut rng = trial_rng(seed, index as u64);
        let cells = sample_trial_cells(model, &array.config.cell, array.config.n_bits, &mut rng)?;
        array.run_mac_with_cells(&cells, a, b)
    })();
    match outcome {
        Ok(r) => TrialRecord {
            index,
            v_combined: Some(r.v_combined),
            code: Some(r.code),
            correct: r.correct,
            saturated: r.saturated,
            energy: Some(mac_energy(&array.config, &r).e_total),
            error: None,
        },
        Err(e) => TrialRecord {
            index,
            v_combined: None,
            code: None,
            correct: false,
            saturated: true,
            energy: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `opts.n_trials` independent MACs of `a * b` with sampled parameters.
///
/// Trials run on a pool of `opts.workers` threads; records are collected by
/// trial index and reduced sequentially, so the result is identical for any
/// worker count.
pub fn run_mc(
    array: &MacArray,
    model: &VariationModel,
    a: u32,
    b: u32,
    opts: &McOptions,
) -> Result<McRun> {
    model.validate()?;
    if opts.n_trials == 0 {
        return Err(Error::Range("n_trials must be >= 1".into()));
    }
    let max = array.config.max_operand();
    if a > max || b > max {
        return Err(Error::Range(format!(
            "operands ({a}, {b}) outside [0, {max}]"
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        (0..opts.n_trials)
            .into_par_iter()
            .map(|i| run_trial(array, model, a, b, opts.seed, i))
            .collect()
    });
    let stats = McStats::from_trials(&trials, opts.histogram_bins);
    Ok(McRun { stats, trials })
}

/// Word-line window `(floor, top)` of an array.
pub type Window = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub a: u32,
    pub b: u32,
    pub baseline: McStats,
    pub biased: McStats,
    /// `biased.std / baseline.std`; 0/0 is reported as 1.
    pub std_ratio: f64,
    /// `biased.ber / baseline.ber`; 0/0 is reported as 1.
    pub ber_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline_bulk: f64,
    pub biased_bulk: f64,
    pub baseline_window: Window,
    pub biased_window: Window,
    pub rows: Vec<ComparisonRow>,
}

/// `num / den`, with 0/0 reported as 1.
pub fn paired_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Compares an unbiased array against the same array with forward body bias,
/// re-deriving DAC floor and pulse timing for each bias. Both sides use the
/// same seed, hence identical parameter draws per trial.
pub fn compare_bias(
    design: &ArrayDesign,
    cell: &BitcellConfig,
    biased_bulk: f64,
    model: &VariationModel,
    cases: &[(u32, u32)],
    opts: &McOptions,
) -> Result<ComparisonReport> {
    if cases.is_empty() {
        return Err(Error::Range("no comparison cases".into()));
    }
    let baseline = MacArray::new(design.build(BitcellConfig {
        v_bulk: 0.0,
        ..*cell
    })?)?;
    let biased = MacArray::new(design.build(BitcellConfig {
        v_bulk: biased_bulk,
        ..*cell
    })?)?;
    let mut rows = Vec::with_capacity(cases.len());
    for &(a, b) in cases {
        let base = run_mc(&baseline, model, a, b, opts)?.stats;
        let fbb = run_mc(&biased, model, a, b, opts)?.stats;
        rows.push(ComparisonRow {
            a,
            b,
            std_ratio: paired_ratio(fbb.std, base.std),
            ber_ratio: paired_ratio(fbb.ber, base.ber),
            baseline: base,
            biased: fbb,
        });
    }
    Ok(ComparisonReport {
        baseline_bulk: 0.0,
        biased_bulk,
        baseline_window: vwl_margin(&baseline.config.dac),
        biased_window: vwl_margin(&biased.config.dac),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::M3Mode;

    #[test]
    fn zero_sigma_returns_base() {
        let base = DeviceParams::default();
        let mut rng = trial_rng(7, 0);
        let g = GlobalDraws::sample(&VariationModel::none(), &mut rng);
        let p = sample_params(&VariationModel::none(), &base, &g, &mut rng).unwrap();
        assert_eq!(p, base);
    }

    #[test]
    fn same_stream_same_draws() {
        let model = VariationModel::default();
        let t = BitcellConfig::default();
        let a = sample_trial_cells(&model, &t, 4, &mut trial_rng(3, 17)).unwrap();
        let b = sample_trial_cells(&model, &t, 4, &mut trial_rng(3, 17)).unwrap();
        let c = sample_trial_cells(&model, &t, 4, &mut trial_rng(3, 18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn vth_draw_sigma_matches_model() {
        let model = VariationModel {
            sigma_vth0_global: 0.0,
            avt_mismatch: 3.5e-9,
            sigma_kp_rel: 0.0,
            sigma_wl_rel: 0.0,
        };
        let base = DeviceParams::default();
        let target = model.mismatch_sigma(&base);
        let mut rng = trial_rng(11, 0);
        let g = GlobalDraws {
            dvth0: 0.0,
            kp_rel: 0.0,
        };
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_params(&model, &base, &g, &mut rng).unwrap().vth0)
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!(
            (var.sqrt() / target - 1.0).abs() < 0.05,
            "{} vs {target}",
            var.sqrt()
        );
    }

    #[test]
    fn impossible_model_exhausts_resampling() {
        let model = VariationModel {
            sigma_wl_rel: 0.0,
            ..VariationModel::none()
        };
        let base = DeviceParams::default();
        let g = GlobalDraws {
            dvth0: -1.0,
            kp_rel: 0.0,
        };
        let err = sample_params(&model, &base, &g, &mut trial_rng(0, 0)).unwrap_err();
        assert_eq!(err, Error::ResampleExhausted(100));
    }

    #[test]
    fn histogram_counts_conserved() {
        let v: Vec<f64> = (0..97).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = histogram(&v, 10);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 97);
        assert_eq!(h.len(), 10);
        let flat = histogram(&[0.5; 5], 10);
        assert_eq!(flat.len(), 1);
        assert_eq!(flat[0].count, 5);
    }

    fn small_array() -> MacArray {
        let cell = BitcellConfig {
            m3_mode: M3Mode::IdealGround,
            ..BitcellConfig::default()
        };
        MacArray::new(ArrayDesign::default().build(cell).unwrap()).unwrap()
    }

    #[test]
    fn zero_variation_collapses() {
        let arr = small_array();
        let opts = McOptions {
            n_trials: 20,
            ..McOptions::default()
        };
        let run = run_mc(&arr, &VariationModel::none(), 7, 6, &opts).unwrap();
        assert_eq!(run.stats.std, 0.0);
        assert_eq!(run.stats.ber, 0.0);
        assert_eq!(
            run.stats.histogram.iter().map(|b| b.count).sum::<usize>(),
            20
        );
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let arr = small_array();
        let one = McOptions {
            n_trials: 24,
            workers: 1,
            ..McOptions::default()
        };
        let three = McOptions { workers: 3, ..one };
        let model = VariationModel::default();
        let a = run_mc(&arr, &model, 13, 11, &one).unwrap();
        let b = run_mc(&arr, &model, 13, 11, &three).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trials_rejected() {
        let opts = McOptions {
            n_trials: 0,
            ..McOptions::default()
        };
        assert!(run_mc(&small_array(), &VariationModel::default(), 1, 1, &opts).is_err());
    }

    #[test]
    fn comparison_without_variation_has_unit_ratios() {
        let cell = BitcellConfig {
            m3_mode: M3Mode::IdealGround,
            ..BitcellConfig::default()
        };
        let opts = McOptions {
            n_trials: 5,
            ..McOptions::default()
        };
        let rep = compare_bias(
            &ArrayDesign::default(),
            &cell,
            0.6,
            &VariationModel::none(),
            &[(15, 15), (3, 5)],
            &opts,
        )
        .unwrap();
        for row in &rep.rows {
            assert_eq!(row.std_ratio, 1.0);
            assert_eq!(row.ber_ratio, 1.0);
        }
        assert!((rep.biased_window.0 - 0.175).abs() < 1e-12);
        assert!(compare_bias(
            &ArrayDesign::default(),
            &cell,
            0.6,
            &VariationModel::none(),
            &[],
            &opts
        )
        .is_err());
    }
}
