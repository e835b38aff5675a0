//! Interference cancellation, OFDM demodulation, equalization, soft
//! demapping and block coding of the data payload.

use std::f64::consts::SQRT_2;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::chanest::FreqChannelGrid;
use crate::config::SystemConfig;
use crate::dsp::{ComplexSequence, FftPair};
use crate::error::{Error, Result};
use crate::ldpc::LdpcCode;
use crate::num::{complex_f64, Real};
use crate::waveform::FrameGrid;

/// Channel magnitudes below this are treated as erasures.
pub const ERASURE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalizer {
    #[default]
    Zf,
    Mmse,
}

/// One equalized active cell and the LLRs of its two QPSK bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftCell {
    pub symbol: Complex<f64>,
    pub llr: [f64; 2],
    pub erased: bool,
}

/// Equalized active cells in the order used by [`FrameGrid::from_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftGrid {
    pub cells: Vec<SoftCell>,
}

impl SoftGrid {
    pub fn llrs(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.llr).collect()
    }

    pub fn hard_bits(&self) -> Vec<u8> {
        self.cells
            .iter()
            .flat_map(|c| c.llr.map(|l| u8::from(l < 0.0)))
            .collect()
    }

    pub fn symbols(&self) -> Vec<Complex<f64>> {
        self.cells.iter().map(|c| c.symbol).collect()
    }
}

/// `y_I = y - regen`.
pub fn cancel_interference<T: Real>(
    y: &ComplexSequence<T>,
    regen: &[Complex<T>],
) -> Result<ComplexSequence<T>> {
    if y.len() != regen.len() {
        return Err(Error::invalid(format!(
            "cancellation needs equal lengths, got {} and {}",
            y.len(),
            regen.len()
        )));
    }
    Ok(ComplexSequence {
        samples: y.iter().zip(regen).map(|(a, b)| *a - *b).collect(),
        sample_period: y.sample_period,
    })
}

/// Strips each cyclic prefix and transforms the useful part, undoing the
/// scaling of [`crate::waveform::ofdm_modulate`].
pub fn ofdm_demodulate<T: Real>(y: &[Complex<T>], cfg: &SystemConfig) -> Result<FrameGrid<T>> {
    if y.len() != cfg.frame_len() {
        return Err(Error::invalid(format!(
            "frame has {} samples, expected {}",
            y.len(),
            cfg.frame_len()
        )));
    }
    let (n, ncp, na) = (cfg.subcarriers, cfg.cp_len, cfg.n_a());
    let plan = FftPair::<T>::new(n)?;
    let scale = T::of((cfg.active_subcarriers as f64).sqrt() / n as f64);
    let mut grid = FrameGrid::zeros(cfg);
    for m in 0..cfg.symbols {
        let row = grid.row_mut(m);
        row.copy_from_slice(&y[m * na + ncp..m * na + ncp + n]);
        plan.forward(row);
        row.iter_mut().for_each(|z| *z = *z * scale);
    }
    Ok(grid)
}

/// Noise variance on one demodulated subcarrier for time-domain noise
/// variance `sigma2`.
pub fn subcarrier_noise_variance(cfg: &SystemConfig, sigma2: f64) -> f64 {
    sigma2 * cfg.active_subcarriers as f64 / cfg.subcarriers as f64
}

/// One-tap equalization `x = Y / (sqrt(P_s) H)` and Gaussian QPSK LLRs.
///
/// `sigma2` is the time-domain noise variance. A zero variance is clamped to
/// a tiny positive value so LLR signs still carry the hard decision.
pub fn equalize_and_demap<T: Real>(
    y: &FrameGrid<T>,
    h: &FreqChannelGrid,
    cfg: &SystemConfig,
    sigma2: f64,
    equalizer: Equalizer,
) -> Result<SoftGrid> {
    if y.symbols != h.symbols || y.subcarriers != h.subcarriers {
        return Err(Error::invalid(format!(
            "received grid is {}x{}, channel grid {}x{}",
            y.symbols, y.subcarriers, h.symbols, h.subcarriers
        )));
    }
    if y.symbols != cfg.symbols || y.subcarriers != cfg.subcarriers {
        return Err(Error::invalid("grid dimensions disagree with the configuration"));
    }
    let amp = cfg.ofdm_power.sqrt();
    let var = subcarrier_noise_variance(cfg, sigma2).max(1e-300);
    let bins = cfg.active_bins();
    let mut cells = Vec::with_capacity(bins.len() * cfg.symbols);
    for m in 0..cfg.symbols {
        for &k in &bins {
            let hk = h.at(m, k) * amp;
            let gain = hk.norm_sqr();
            if gain.sqrt() < ERASURE_THRESHOLD {
                cells.push(SoftCell {
                    symbol: Complex::default(),
                    llr: [0.0; 2],
                    erased: true,
                });
                continue;
            }
            let yk = complex_f64(y.at(m, k));
            let zf = yk / hk;
            let symbol = match equalizer {
                Equalizer::Zf => zf,
                Equalizer::Mmse => yk * hk.conj() / (gain + var),
            };
            // Post-equalization complex noise variance var / |H|^2.
            let scale = 2.0 * SQRT_2 * gain / var;
            cells.push(SoftCell {
                symbol,
                llr: [scale * zf.re, scale * zf.im],
                erased: false,
            });
        }
    }
    Ok(SoftGrid { cells })
}

/// Fraction of differing bits.
pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(Error::invalid(format!(
            "BER needs equal lengths, got {} and {}",
            tx.len(),
            rx.len()
        )));
    }
    if tx.is_empty() {
        return Err(Error::UndefinedMetric("BER of an empty bit stream".into()));
    }
    let errors = tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count();
    Ok(errors as f64 / tx.len() as f64)
}

/// Layout of whole codewords inside a frame with `capacity` coded bits.
/// Bits beyond the last codeword are filler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadPlan {
    pub capacity: usize,
    pub codewords: usize,
    pub n: usize,
    pub k: usize,
}

impl PayloadPlan {
    pub fn new(code: &LdpcCode, capacity: usize) -> Result<Self> {
        let codewords = capacity / code.n();
        if codewords == 0 {
            return Err(Error::invalid(format!(
                "{capacity} coded bits cannot hold a {}-bit codeword",
                code.n()
            )));
        }
        Ok(PayloadPlan {
            capacity,
            codewords,
            n: code.n(),
            k: code.k(),
        })
    }

    pub fn info_len(&self) -> usize {
        self.codewords * self.k
    }

    pub fn coded_len(&self) -> usize {
        self.codewords * self.n
    }

    pub fn filler_len(&self) -> usize {
        self.capacity - self.coded_len()
    }
}

/// Encodes `info` codeword by codeword and appends `filler`.
pub fn encode_payload(code: &LdpcCode, plan: &PayloadPlan, info: &[u8], filler: &[u8]) -> Result<Vec<u8>> {
    if info.len() != plan.info_len() || filler.len() != plan.filler_len() {
        return Err(Error::invalid(format!(
            "payload takes {} info and {} filler bits, got {} and {}",
            plan.info_len(),
            plan.filler_len(),
            info.len(),
            filler.len()
        )));
    }
    let mut out = Vec::with_capacity(plan.capacity);
    for block in info.chunks_exact(plan.k) {
        out.extend(code.encode(block)?);
    }
    out.extend_from_slice(filler);
    Ok(out)
}

/// Decodes the codeword part of a payload's LLRs to information bits.
pub fn decode_payload(code: &LdpcCode, plan: &PayloadPlan, llrs: &[f64]) -> Result<Vec<u8>> {
    if llrs.len() != plan.capacity {
        return Err(Error::invalid(format!(
            "payload has {} LLRs, expected {}",
            llrs.len(),
            plan.capacity
        )));
    }
    let mut out = Vec::with_capacity(plan.info_len());
    for block in llrs[..plan.coded_len()].chunks_exact(plan.n) {
        out.extend(code.decode(block)?);
    }
    Ok(out)
}
