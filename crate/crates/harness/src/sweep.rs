//! Sweeps over the SNR x method x mode grid, aggregation and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};

use cofmcw::sensing::SensingMethod;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::scenario::ScenarioSpec;
use crate::trial::{run_trial, Cell, TrialResult};

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "method",
    "mode",
    "snr_db",
    "trials",
    "range_rmse_m",
    "speed_rmse_mps",
    "miss_rate",
    "nmse_time",
    "nmse_freq",
    "ber_uncoded",
    "ber_coded",
    "seed",
];

/// Aggregated metrics of one sweep cell. Unavailable metrics are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub cell: Cell,
    pub trials: usize,
    pub range_rmse_m: f64,
    pub speed_rmse_mps: f64,
    pub miss_rate: f64,
    pub nmse_time: f64,
    pub nmse_freq: f64,
    pub ber_uncoded: f64,
    pub ber_coded: f64,
    pub seed: u64,
    /// Range RMSE of each target on its own, in scenario order.
    pub target_range_rmse_m: Vec<f64>,
    pub target_speed_rmse_mps: Vec<f64>,
}

/// Cells in output order: method, then mode, then SNR.
pub fn cells(spec: &ScenarioSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &method in &spec.methods {
        let modes: Vec<_> = match method {
            SensingMethod::Fccr | SensingMethod::Dmd => spec.modes.iter().copied().map(Some).collect(),
            SensingMethod::Ce | SensingMethod::Df => vec![None],
        };
        for mode in modes {
            for &snr_db in &spec.snr_db {
                out.push(Cell { snr_db, method, mode });
            }
        }
    }
    out
}

/// `sqrt(mean(x^2))` over the finite entries; NaN when there are none.
pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Aggregates trials in the order given.
pub fn summarize(spec: &ScenarioSpec, cell: Cell, results: &[TrialResult]) -> CellSummary {
    let n_targets = spec.targets.len();
    let outcomes = || results.iter().flat_map(|r| r.targets.iter());
    let misses = outcomes().filter(|o| o.missed).count();
    let per_target = |f: fn(&crate::trial::TargetOutcome) -> f64| -> Vec<f64> {
        (0..n_targets)
            .map(|i| rms(results.iter().filter_map(|r| r.targets.get(i)).map(f)))
            .collect()
    };
    CellSummary {
        scenario: spec.name.clone(),
        cell,
        trials: results.len(),
        range_rmse_m: rms(outcomes().map(|o| o.range_error_m)),
        speed_rmse_mps: rms(outcomes().map(|o| o.speed_error_mps)),
        miss_rate: misses as f64 / (results.len() * n_targets).max(1) as f64,
        nmse_time: mean(results.iter().map(|r| r.nmse_time.unwrap_or(f64::NAN))),
        nmse_freq: mean(results.iter().map(|r| r.nmse_freq.unwrap_or(f64::NAN))),
        ber_uncoded: mean(results.iter().map(|r| r.ber_uncoded)),
        ber_coded: mean(results.iter().map(|r| r.ber_coded.unwrap_or(f64::NAN))),
        seed: spec.seed,
        target_range_rmse_m: per_target(|o| o.range_error_m),
        target_speed_rmse_mps: per_target(|o| o.speed_error_mps),
    }
}

/// Runs every `(cell, trial)` pair on `workers` threads (0 picks the rayon
/// default) and aggregates by cell. Output does not depend on `workers`.
pub fn run_sweep(spec: &ScenarioSpec, workers: usize) -> Result<Vec<CellSummary>> {
    spec.validate()
        .map_err(|e| HarnessError::config(&spec.name, e))?;
    let cells = cells(spec);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("worker pool: {e}")))?;
    let results: Vec<TrialResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(spec, &cells[c], t))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(cells
        .iter()
        .zip(results.chunks(spec.trials))
        .map(|(cell, chunk)| summarize(spec, *cell, chunk))
        .collect())
}

/// Shortest decimal with 9 significant digits; `NaN`, `inf`, `-inf` spelled out.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.cell.method.to_string(),
            r.cell.mode_name(),
            format_sig9(r.cell.snr_db),
            r.trials.to_string(),
            format_sig9(r.range_rmse_m),
            format_sig9(r.speed_rmse_mps),
            format_sig9(r.miss_rate),
            format_sig9(r.nmse_time),
            format_sig9(r.nmse_freq),
            format_sig9(r.ber_uncoded),
            format_sig9(r.ber_coded),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn csv_string(rows: &[CellSummary]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

/// Runs the sweep and writes `<out_dir>/<scenario>.csv`.
pub fn sweep_to_file(spec: &ScenarioSpec, out_dir: &Path, workers: usize) -> Result<PathBuf> {
    let rows = run_sweep(spec, workers)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let path = out_dir.join(format!("{}.csv", spec.name));
    let text = csv_string(&rows)?;
    std::fs::write(&path, text).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_of_three_and_four() {
        assert!((rms([3.0, 4.0]) - 3.5355339059327378).abs() < 1e-15);
        assert!(rms([f64::NAN]).is_nan());
        assert_eq!(rms([f64::NAN, 2.0]), 2.0);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(3.5355339059327378), "3.53553391");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(12.0), "12");
        assert_eq!(format_sig9(-0.125), "-0.125");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(1.23456789012e-7), "1.23456789e-7");
        assert_eq!(format_sig9(6.02214076e23), "6.02214076e23");
        assert_eq!(format_sig9(f64::NAN), "NaN");
        assert_eq!(format_sig9(123456789.4), "123456789");
        for x in [1e-5, 0.000123456789123, 98765.4321, 1.5e12] {
            let back: f64 = format_sig9(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-8 * x.abs(), "{x}");
        }
    }
}
