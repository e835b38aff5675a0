//! Range-Doppler maps from cyclic correlation (FCCR) and from digital mixing
//! with down-sampling (DMD), plus peak extraction and pseudo-target clusters.
//!
//! FCCR costs about `2 M N log2 N + N_cp M1 log2 M1` complex multiplies; DMD
//! replaces the length-`N` transforms with length-`N_D` ones but adds the
//! `M N_a N_F` low-pass filter, so it is cheaper only for short filters.

use serde::{Deserialize, Serialize};

use num_complex::Complex;

use crate::config::SystemConfig;
use crate::dsp::{cyclic_correlate_with, design_lowpass, fir_output_at, ComplexSequence, FftPair};
use crate::error::{Error, Result};
use crate::num::{complex_f64, Real};
use crate::waveform::fmcw_generate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensingMethod {
    Fccr,
    Dmd,
    Ce,
    Df,
}

impl SensingMethod {
    pub fn name(self) -> &'static str {
        match self {
            SensingMethod::Fccr => "fccr",
            SensingMethod::Dmd => "dmd",
            SensingMethod::Ce => "ce",
            SensingMethod::Df => "df",
        }
    }
}

impl std::fmt::Display for SensingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Magnitude grid, row-major, `rows` delay cells by `cols` Doppler cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub rows: usize,
    pub cols: usize,
    pub magnitudes: Vec<f64>,
    /// Delay of each row in sample periods.
    pub delay_axis: Vec<f64>,
    /// Signed Doppler of each column in Hz.
    pub doppler_axis: Vec<f64>,
    pub method: SensingMethod,
}

impl RangeDopplerMap {
    pub(crate) fn from_complex(
        cells: &[Complex<f64>],
        delay_axis: Vec<f64>,
        cfg: &SystemConfig,
        method: SensingMethod,
    ) -> Self {
        let cols = cfg.doppler_fft_len;
        RangeDopplerMap {
            rows: delay_axis.len(),
            cols,
            magnitudes: cells.iter().map(|z| z.norm()).collect(),
            delay_axis,
            doppler_axis: (0..cols).map(|k| cfg.doppler_of_bin(k)).collect(),
            method,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.magnitudes[row * self.cols + col]
    }

    /// Cell with the largest magnitude; ties go to the lowest `(row, col)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.magnitudes.iter().enumerate() {
            if *v > self.magnitudes[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Row whose delay is closest to `delay` samples, if within half a row spacing
    /// of the axis.
    pub fn row_of_delay(&self, delay: f64) -> Option<usize> {
        let step = if self.rows > 1 {
            self.delay_axis[1] - self.delay_axis[0]
        } else {
            1.0
        };
        let r = ((delay - self.delay_axis[0]) / step).round();
        if r < 0.0 || r >= self.rows as f64 {
            None
        } else {
            Some(r as usize)
        }
    }
}

fn check_frame_len<T>(x: &[Complex<T>], cfg: &SystemConfig, what: &str) -> Result<()> {
    if x.len() != cfg.frame_len() {
        return Err(Error::invalid(format!(
            "{what} has {} samples, frame needs {}",
            x.len(),
            cfg.frame_len()
        )));
    }
    Ok(())
}

/// Slow-time transform over the columns of `r`, `rows x M` in, `rows x M1` out.
pub(crate) fn doppler_transform<T: Real>(
    r: &[Vec<Complex<T>>],
    rows: usize,
    cfg: &SystemConfig,
    inverse: bool,
) -> Result<Vec<Complex<f64>>> {
    let m1 = cfg.doppler_fft_len;
    let plan = FftPair::<T>::new(m1)?;
    let mut out = vec![Complex::default(); rows * m1];
    let mut buf = vec![Complex::<T>::default(); m1];
    for row in 0..rows {
        buf.iter_mut().for_each(|z| *z = Complex::default());
        for (m, sym) in r.iter().enumerate() {
            buf[m] = sym[row];
        }
        if inverse {
            plan.inverse_unscaled(&mut buf);
        } else {
            plan.forward(&mut buf);
        }
        for (dst, src) in out[row * m1..(row + 1) * m1].iter_mut().zip(&buf) {
            *dst = complex_f64(*src);
        }
    }
    Ok(out)
}

/// Cyclic-correlation RDM against `reference`, rows restricted to `[0, N_cp)`.
pub fn fccr_rdm<T: Real>(
    rx: &[Complex<T>],
    reference: &[Complex<T>],
    cfg: &SystemConfig,
) -> Result<RangeDopplerMap> {
    fccr_cells(rx, reference, cfg, SensingMethod::Fccr)
}

pub(crate) fn fccr_cells<T: Real>(
    rx: &[Complex<T>],
    reference: &[Complex<T>],
    cfg: &SystemConfig,
    method: SensingMethod,
) -> Result<RangeDopplerMap> {
    check_frame_len(rx, cfg, "received frame")?;
    check_frame_len(reference, cfg, "reference")?;
    let (n, ncp, na) = (cfg.subcarriers, cfg.cp_len, cfg.n_a());
    let plan = FftPair::<T>::new(n)?;
    // Every FMCW symbol is identical, but a general reference (rebuilt OFDM)
    // differs per symbol, so each symbol gets its own spectrum.
    let mut r = Vec::with_capacity(cfg.symbols);
    let mut spec = vec![Complex::<T>::default(); n];
    let mut cached: Option<&[Complex<T>]> = None;
    for m in 0..cfg.symbols {
        let s = &reference[m * na + ncp..m * na + na];
        if cached != Some(s) {
            spec.copy_from_slice(s);
            plan.forward(&mut spec);
            cached = Some(s);
        }
        let mut buf = rx[m * na + ncp..m * na + na].to_vec();
        cyclic_correlate_with(&plan, &mut buf, &spec);
        buf.truncate(ncp);
        r.push(buf);
    }
    let cells = doppler_transform(&r, ncp, cfg, false)?;
    let axis = (0..ncp).map(|i| i as f64).collect();
    Ok(RangeDopplerMap::from_complex(&cells, axis, cfg, method))
}

/// Mixing/down-sampling RDM: dechirp, low-pass, decimate by `D`, then an
/// `N_D`-point fast-time DFT and an `M1`-point slow-time inverse DFT.
pub fn dmd_rdm<T: Real>(rx: &[Complex<T>], cfg: &SystemConfig) -> Result<RangeDopplerMap> {
    check_frame_len(rx, cfg, "received frame")?;
    let d = cfg.downsample;
    if d == 0 || cfg.n_a() % d != 0 || cfg.cp_len % d != 0 {
        return Err(Error::invalid(format!(
            "downsample {d} must divide N_a = {} and N_cp = {}",
            cfg.n_a(),
            cfg.cp_len
        )));
    }
    let taps = design_lowpass(cfg.dmd_cutoff(), cfg.lowpass_taps)?.cast::<T>();
    let s_ref = fmcw_generate::<T>(cfg);
    let mixed: Vec<Complex<T>> = s_ref.iter().zip(rx).map(|(s, y)| *s * y.conj()).collect();

    let (nt, nb, nd) = (cfg.dmd_block_len(), cfg.dmd_skip(), cfg.dmd_len());
    let plan = FftPair::<T>::new(nd)?;
    let mut u = Vec::with_capacity(cfg.symbols);
    for m in 0..cfg.symbols {
        let mut col: Vec<Complex<T>> = (0..nd)
            .map(|n| fir_output_at(&mixed, &taps, (n + nb + m * nt) * d))
            .collect();
        plan.forward(&mut col);
        u.push(col);
    }
    let cells = doppler_transform(&u, nd, cfg, true)?;
    let scale = cfg.dmd_delay_per_row();
    let axis = (0..nd).map(|l| l as f64 * scale).collect();
    Ok(RangeDopplerMap::from_complex(&cells, axis, cfg, SensingMethod::Dmd))
}

/// A peak of the RDM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub row: usize,
    pub col: usize,
    pub amplitude: f64,
    /// Delay read off the row axis, in samples.
    pub delay: f64,
    /// Nearest integer delay bin `l_hat`.
    pub delay_bin: usize,
    pub doppler_hz: f64,
}

/// Default exclusion zone around each extracted peak: `(2 Delta + 1)` delay
/// cells and 3 Doppler cells on each side.
pub fn default_guard(cfg: &SystemConfig) -> (usize, usize) {
    (2 * cfg.tap_half_width + 1, 3)
}

/// Successive global-maximum extraction with a guard zone (Doppler wraps).
pub fn detect_peaks(
    rdm: &RangeDopplerMap,
    num_targets: usize,
    guard: (usize, usize),
) -> Result<Vec<Detection>> {
    if num_targets == 0 {
        return Err(Error::invalid("num_targets must be at least 1"));
    }
    let mut work = rdm.clone();
    let mut out = Vec::with_capacity(num_targets);
    for _ in 0..num_targets {
        let (row, col) = work.argmax();
        let amp = work.at(row, col);
        if !(amp > 0.0) {
            return Err(Error::DetectionExhausted {
                requested: num_targets,
                found: out.len(),
            });
        }
        let delay = rdm.delay_axis[row];
        out.push(Detection {
            row,
            col,
            amplitude: amp,
            delay,
            delay_bin: delay.round().max(0.0) as usize,
            doppler_hz: rdm.doppler_axis[col],
        });
        let r0 = row.saturating_sub(guard.0);
        let r1 = (row + guard.0).min(work.rows - 1);
        let c = work.cols as i64;
        let g1 = guard.1.min(work.cols / 2) as i64;
        for r in r0..=r1 {
            for dc in -g1..=g1 {
                let cc = (col as i64 + dc).rem_euclid(c) as usize;
                work.magnitudes[r * work.cols + cc] = 0.0;
            }
        }
    }
    Ok(out)
}

/// One member of a pseudo-target cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoTarget {
    pub delay: usize,
    pub col: usize,
    pub doppler_hz: f64,
    pub amplitude: f64,
    /// Index of the detection this entry was grown from.
    pub cluster: usize,
}

fn cluster_entry(
    p: usize,
    det: &Detection,
    rdm: &RangeDopplerMap,
    j: i64,
) -> std::result::Result<PseudoTarget, String> {
    let delay = det.delay_bin as i64 + j;
    if delay < 0 {
        return Err(format!("detection {p}: delay {delay} is negative"));
    }
    let row = rdm
        .row_of_delay(delay as f64)
        .ok_or_else(|| format!("detection {p}: delay {delay} lies outside the map"))?;
    Ok(PseudoTarget {
        delay: delay as usize,
        col: det.col,
        doppler_hz: det.doppler_hz,
        amplitude: rdm.at(row, det.col),
        cluster: p,
    })
}

/// The `2 Delta + 1` delay cells around each detection, sharing its Doppler.
pub fn cluster_pseudo_targets(
    dets: &[Detection],
    rdm: &RangeDopplerMap,
    half_width: usize,
) -> Result<Vec<Vec<PseudoTarget>>> {
    let h = half_width as i64;
    dets.iter()
        .enumerate()
        .map(|(p, det)| {
            (-h..=h)
                .map(|j| cluster_entry(p, det, rdm, j).map_err(Error::ClusterOutOfRange))
                .collect()
        })
        .collect()
}

/// Like [`cluster_pseudo_targets`] but drops entries that fall off the map.
pub fn cluster_pseudo_targets_clipped(
    dets: &[Detection],
    rdm: &RangeDopplerMap,
    half_width: usize,
) -> Vec<Vec<PseudoTarget>> {
    let h = half_width as i64;
    dets.iter()
        .enumerate()
        .map(|(p, det)| (-h..=h).filter_map(|j| cluster_entry(p, det, rdm, j).ok()).collect())
        .collect()
}

/// `(range m, speed m/s)` of a delay bin and a Doppler column.
pub fn bins_to_physical(delay_bin: f64, doppler_col: usize, cfg: &SystemConfig) -> (f64, f64) {
    let range = cfg.range_of_delay(delay_bin * cfg.sample_period());
    let speed = cfg.speed_of_doppler(cfg.doppler_of_bin(doppler_col));
    (range, speed)
}

/// FCCR against the module FMCW train.
pub fn fccr_fmcw<T: Real>(rx: &ComplexSequence<T>, cfg: &SystemConfig) -> Result<RangeDopplerMap> {
    fccr_rdm(rx, &fmcw_generate::<T>(cfg), cfg)
}
