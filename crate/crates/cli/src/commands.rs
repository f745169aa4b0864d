use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use cim_core::array::{ArrayDesign, MacArray};
use cim_core::cell::{sample_vblb, simulate_discharge, BitcellConfig};
use cim_core::dac::{code_to_vwl, vwl_margin, DacScheme};
use cim_core::energy::mac_energy;
use cim_core::variation::{paired_ratio, run_mc, STREAM_RULE};
use cim_core::{ArrayConfig, Error};

use crate::config::{ConfigError, RunConfig, SweepAxis};

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Usage(String),
    /// Simulation or I/O failure at run time (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Range(_) | Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

/// Writes `body` to `out` (or stdout) and, for files, the resolved-config
/// sidecar `<out>.config.toml`.
fn emit(cfg: &RunConfig, command: &str, out: Option<&Path>, body: &[u8]) -> CliResult<()> {
    match out {
        None => match std::io::stdout().write_all(body) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
        Some(path) => {
            std::fs::write(path, body)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            write_sidecar(cfg, command, path)?;
        }
    }
    Ok(())
}

fn write_sidecar(cfg: &RunConfig, command: &str, path: &Path) -> CliResult<()> {
    let mut text = String::new();
    writeln!(text, "# cimsim {command}").unwrap();
    writeln!(text, "# config_sha256: {}", cfg.hash()).unwrap();
    writeln!(text, "# seed: {}", cfg.seed).unwrap();
    text.push_str(&cfg.to_toml());
    let sidecar = suffixed(path, "config.toml");
    std::fs::write(&sidecar, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", sidecar.display())))?;
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    s.into()
}

fn header(cfg: &RunConfig, command: &str) -> String {
    format!(
        "command: {command}\nconfig_sha256: {}\nseed: {}\n",
        cfg.hash(),
        cfg.seed
    )
}

fn word_line(cfg: &RunConfig, array: &ArrayConfig) -> CliResult<f64> {
    match (cfg.simulate.v_wl, cfg.simulate.code) {
        (Some(v), _) => Ok(v),
        (None, code) => Ok(code_to_vwl(
            &array.dac,
            code.unwrap_or(array.dac.max_code()),
        )?),
    }
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let cell = cfg.cell()?;
    let array = cfg.design().build(cell)?;
    let v_wl = word_line(cfg, &array)?;
    let trace = simulate_discharge(&cell, v_wl, array.t_pulse, array.dt)?;
    let mut body = Vec::new();
    trace.write_csv(&mut body)?;
    emit(cfg, "simulate", out, &body)
}

fn sweep_points(cfg: &RunConfig) -> CliResult<Vec<f64>> {
    let s = &cfg.sweep;
    if s.points == 0 || !s.from.is_finite() || !s.to.is_finite() || s.from > s.to {
        return Err(CliError::Usage(format!(
            "empty sweep range: from = {}, to = {}, points = {}",
            s.from, s.to, s.points
        )));
    }
    if s.points == 1 {
        return Ok(vec![s.from]);
    }
    let step = (s.to - s.from) / (s.points - 1) as f64;
    Ok((0..s.points)
        .map(|i| {
            if i + 1 == s.points {
                s.to
            } else {
                s.from + i as f64 * step
            }
        })
        .collect())
}

/// One row per sweep point. Word-line voltage and pulse timing are fixed at
/// the configured base point; only the swept quantity changes.
pub fn sweep(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let xs = sweep_points(cfg)?;
    let cell = BitcellConfig {
        stored_bit: true,
        ..cfg.cell()?
    };
    let array = cfg.design().build(cell)?;
    let base_vwl = word_line(cfg, &array)?;
    let axis = cfg.sweep.axis;

    let time_trace = if axis == SweepAxis::TSample {
        let t_end = cfg.sweep.to;
        if !(t_end > 0.0) {
            return Err(CliError::Usage("t_sample sweep needs to > 0".into()));
        }
        Some(simulate_discharge(&cell, base_vwl, t_end, t_end / 2000.0)?)
    } else {
        None
    };

    let mut body = String::new();
    writeln!(
        body,
        "{},vth_eff_V,v_wl_V,v_blb_V,i_d_A,energy_J,saturated",
        axis.column()
    )
    .unwrap();
    for x in xs {
        let mut point = cell;
        let mut v_wl = base_vwl;
        match axis {
            SweepAxis::VBulk => point.v_bulk = x,
            SweepAxis::Width => point.m2acc.w = x,
            SweepAxis::Code => {
                if x < 0.0 || x.fract() != 0.0 {
                    return Err(CliError::Usage(format!(
                        "code sweep value {x} is not a non-negative integer"
                    )));
                }
                v_wl = code_to_vwl(&array.dac, x as u32)?;
            }
            SweepAxis::TSample => {}
        }
        point.validate()?;
        let sample = match &time_trace {
            Some(trace) => sample_vblb(trace, x)?,
            None => {
                let trace = simulate_discharge(&point, v_wl, array.t_pulse, array.dt)?;
                sample_vblb(&trace, array.t_sample)?
            }
        };
        let vth = point.access_vth()?;
        let i_d = point.operating_point(v_wl, point.vdd)?.current;
        let energy = point.c_blb * point.vdd * (point.vdd - sample.v_blb);
        let x_text = if axis == SweepAxis::Code {
            format!("{x}")
        } else {
            format!("{x:.6e}")
        };
        writeln!(
            body,
            "{x_text},{vth:.9},{v_wl:.9},{:.9},{i_d:.6e},{energy:.6e},{}",
            sample.v_blb, sample.saturated
        )
        .unwrap();
    }
    emit(cfg, "sweep", out, body.as_bytes())
}

pub fn mac(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let (a, b) = (cfg.mac.a, cfg.mac.b);
    let array = MacArray::new(cfg.design().build(cfg.cell()?)?)?;
    let r = array.run_mac(a, b)?;
    let energy = mac_energy(&array.config, &r);
    let (floor, top) = vwl_margin(&array.config.dac);
    let join = |v: &[f64], scale: f64| {
        v.iter()
            .map(|x| format!("{:.9}", x * scale))
            .collect::<Vec<_>>()
            .join(",")
    };

    let mut body = header(cfg, "mac");
    writeln!(body, "a: {a}").unwrap();
    writeln!(body, "b: {b}").unwrap();
    writeln!(body, "v_bulk_V: {}", array.config.cell.v_bulk).unwrap();
    writeln!(body, "scheme: {}", array.config.dac.scheme.as_str()).unwrap();
    writeln!(body, "wl_window_V: {floor:.9},{top:.9}").unwrap();
    writeln!(body, "v_wl_V: {:.9}", code_to_vwl(&array.config.dac, b)?).unwrap();
    writeln!(body, "t_sample_s: {:.6e}", array.config.t_sample).unwrap();
    writeln!(body, "v_bit_V: {}", join(&r.v_bit, 1.0)).unwrap();
    writeln!(body, "v_combined_V: {:.9}", r.v_combined).unwrap();
    writeln!(body, "code: {}", r.code).unwrap();
    writeln!(body, "exact: {}", r.exact).unwrap();
    writeln!(body, "correct: {}", r.correct).unwrap();
    writeln!(body, "saturated: {}", r.saturated).unwrap();
    writeln!(body, "energy_pJ: {:.6}", energy.e_total * 1e12).unwrap();
    writeln!(body, "energy_per_bit_pJ: {}", join(&energy.per_bit, 1e12)).unwrap();
    emit(cfg, "mac", out, body.as_bytes())
}

pub fn montecarlo(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let mc = &cfg.montecarlo;
    let array = MacArray::new(cfg.design().build(cfg.cell()?)?)?;
    let run = run_mc(
        &array,
        &cfg.variation(),
        mc.a,
        mc.b,
        &cfg.mc_options(mc.trials),
    )?;
    let (floor, top) = vwl_margin(&array.config.dac);

    let mut summary = header(cfg, "montecarlo");
    writeln!(summary, "stream_rule: {STREAM_RULE}").unwrap();
    writeln!(
        summary,
        "quantity: v_combined (binary-weighted merge of sampled bit lines)"
    )
    .unwrap();
    writeln!(summary, "a: {}", mc.a).unwrap();
    writeln!(summary, "b: {}", mc.b).unwrap();
    writeln!(summary, "v_bulk_V: {}", array.config.cell.v_bulk).unwrap();
    writeln!(summary, "scheme: {}", array.config.dac.scheme.as_str()).unwrap();
    writeln!(summary, "wl_window_V: {floor:.9},{top:.9}").unwrap();
    let mut stats = Vec::new();
    run.stats.write_summary(&mut stats)?;
    summary.push_str(&String::from_utf8(stats).expect("utf-8 summary"));

    match out {
        None => print!("{summary}"),
        Some(path) => {
            let mut hist = Vec::new();
            run.stats.write_histogram_csv(&mut hist)?;
            emit(cfg, "montecarlo", Some(path), &hist)?;
            std::fs::write(suffixed(path, "summary.txt"), &summary)?;
            if mc.dump_trials {
                let mut trials = Vec::new();
                run.write_trials_csv(&mut trials)?;
                std::fs::write(suffixed(path, "trials.csv"), trials)?;
            }
            print!("{summary}");
        }
    }
    Ok(())
}

struct CompareRow {
    name: &'static str,
    v_bulk: f64,
    scheme: DacScheme,
}

pub fn compare(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let cmp = &cfg.compare;
    if cmp.cases.is_empty() {
        return Err(CliError::Usage("compare needs at least one case".into()));
    }
    let base_cell = cfg.cell()?;
    let rows = [
        CompareRow {
            name: "baseline_linear",
            v_bulk: 0.0,
            scheme: DacScheme::Linear,
        },
        CompareRow {
            name: "baseline_sqrt",
            v_bulk: 0.0,
            scheme: DacScheme::Sqrt,
        },
        CompareRow {
            name: "biased_sqrt",
            v_bulk: cmp.biased_bulk,
            scheme: DacScheme::Sqrt,
        },
    ];
    let arrays = rows
        .iter()
        .map(|row| {
            let design = ArrayDesign {
                scheme: row.scheme,
                ..cfg.design()
            };
            let cell = BitcellConfig {
                v_bulk: row.v_bulk,
                ..base_cell
            };
            MacArray::new(design.build(cell)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model = cfg.variation();
    let opts = cfg.mc_options(cmp.trials);

    let mut body = header(cfg, "compare");
    writeln!(body, "trials: {}", cmp.trials).unwrap();
    writeln!(body, "stream_rule: {STREAM_RULE}").unwrap();
    writeln!(body, "m3_mode: {}", serde_plain_mode(&base_cell)).unwrap();
    writeln!(
        body,
        "quantity: v_combined (binary-weighted merge of sampled bit lines)"
    )
    .unwrap();
    writeln!(
        body,
        "ratios: relative to baseline_sqrt under identical parameter draws"
    )
    .unwrap();
    writeln!(body).unwrap();
    writeln!(
        body,
        "a,b,config,v_bulk_V,scheme,wl_floor_V,wl_top_V,mean_V,std_V,ber,unsaturated,nominal_energy_pJ,std_ratio,ber_ratio"
    )
    .unwrap();
    for &[a, b] in &cmp.cases {
        let stats = arrays
            .iter()
            .map(|arr| run_mc(arr, &model, a, b, &opts).map(|r| r.stats))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = &stats[1];
        for ((row, arr), s) in rows.iter().zip(&arrays).zip(&stats) {
            let (floor, top) = vwl_margin(&arr.config.dac);
            let nominal = arr.run_mac(a, b)?;
            let energy = mac_energy(&arr.config, &nominal).e_total;
            writeln!(
                body,
                "{a},{b},{},{},{},{floor:.9},{top:.9},{:.9},{:.9},{:.6},{},{:.6},{:.6},{:.6}",
                row.name,
                row.v_bulk,
                row.scheme.as_str(),
                s.mean,
                s.std,
                s.ber,
                s.unsaturated,
                energy * 1e12,
                paired_ratio(s.std, reference.std),
                paired_ratio(s.ber, reference.ber),
            )
            .unwrap();
        }
    }
    emit(cfg, "compare", out, body.as_bytes())
}

fn serde_plain_mode(cell: &BitcellConfig) -> &'static str {
    match cell.m3_mode {
        cim_core::M3Mode::IdealGround => "ideal_ground",
        cim_core::M3Mode::SeriesTriode => "series_triode",
    }
}
