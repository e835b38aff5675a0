//! OFDM frames, zero-prefix FMCW chirp trains and their superposition.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex;
use rand::Rng;

use crate::config::SystemConfig;
use crate::dsp::{ComplexSequence, FftPair};
use crate::error::{Error, Result};
use crate::num::{cis, Real};

/// Frequency-domain symbols `a(m, k)` for a whole frame, stored row-major by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid<T> {
    pub symbols: usize,
    pub subcarriers: usize,
    pub cells: Vec<Complex<T>>,
    pub active_mask: Vec<bool>,
}

impl<T: Real> FrameGrid<T> {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        FrameGrid {
            symbols: cfg.symbols,
            subcarriers: cfg.subcarriers,
            cells: vec![Complex::default(); cfg.symbols * cfg.subcarriers],
            active_mask: cfg.active_mask(),
        }
    }

    /// Places `data` on the active subcarriers, symbol by symbol in ascending
    /// frequency order.
    pub fn from_data(cfg: &SystemConfig, data: &[Complex<T>]) -> Result<Self> {
        let bins = cfg.active_bins();
        let need = bins.len() * cfg.symbols;
        if data.len() != need {
            return Err(Error::invalid(format!(
                "frame holds {need} data symbols, got {}",
                data.len()
            )));
        }
        let mut grid = Self::zeros(cfg);
        let mut it = data.iter();
        for m in 0..cfg.symbols {
            for &k in &bins {
                *grid.at_mut(m, k) = *it.next().expect("length checked");
            }
        }
        Ok(grid)
    }

    #[inline]
    pub fn at(&self, m: usize, k: usize) -> Complex<T> {
        self.cells[m * self.subcarriers + k]
    }

    #[inline]
    pub fn at_mut(&mut self, m: usize, k: usize) -> &mut Complex<T> {
        &mut self.cells[m * self.subcarriers + k]
    }

    pub fn row(&self, m: usize) -> &[Complex<T>] {
        &self.cells[m * self.subcarriers..(m + 1) * self.subcarriers]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [Complex<T>] {
        &mut self.cells[m * self.subcarriers..(m + 1) * self.subcarriers]
    }
}

/// Uniform random bits as `0u8` / `1u8`.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..2u8)).collect()
}

/// Gray QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn map_bits_qpsk<T: Real>(bits: &[u8]) -> Result<Vec<Complex<T>>> {
    if bits.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "QPSK needs an even number of bits, got {}",
            bits.len()
        )));
    }
    let a = T::of(FRAC_1_SQRT_2);
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            let re = if b[0] == 0 { a } else { -a };
            let im = if b[1] == 0 { a } else { -a };
            Complex::new(re, im)
        })
        .collect())
}

/// Hard QPSK decisions, inverse of [`map_bits_qpsk`].
pub fn demap_qpsk_hard<T: Real>(symbols: &[Complex<T>]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|z| [u8::from(z.re < T::zero()), u8::from(z.im < T::zero())])
        .collect()
}

/// Time-domain OFDM frame with cyclic prefixes and unit average power.
pub fn ofdm_modulate<T: Real>(grid: &FrameGrid<T>, cfg: &SystemConfig) -> Result<ComplexSequence<T>> {
    if grid.symbols != cfg.symbols || grid.subcarriers != cfg.subcarriers {
        return Err(Error::invalid(format!(
            "grid is {}x{}, configuration expects {}x{}",
            grid.symbols, grid.subcarriers, cfg.symbols, cfg.subcarriers
        )));
    }
    let (n, ncp, na) = (cfg.subcarriers, cfg.cp_len, cfg.n_a());
    let plan = FftPair::<T>::new(n)?;
    let scale = T::of(1.0 / (cfg.active_subcarriers as f64).sqrt());
    let mut out = vec![Complex::default(); cfg.frame_len()];
    let mut buf = vec![Complex::default(); n];
    for m in 0..cfg.symbols {
        buf.copy_from_slice(grid.row(m));
        plan.inverse_unscaled(&mut buf);
        let sym = &mut out[m * na..(m + 1) * na];
        for (dst, src) in sym[ncp..].iter_mut().zip(&buf) {
            *dst = *src * scale;
        }
        for i in 0..ncp {
            sym[i] = sym[n + i];
        }
    }
    ComplexSequence::new(out, cfg.sample_period())
}

/// One symbol of the FMCW train: `N_cp` zeros, the chirp, then `N_cp` zeros.
pub fn chirp_symbol<T: Real>(cfg: &SystemConfig) -> Vec<Complex<T>> {
    let ts = cfg.sample_period();
    let (bw, rate) = (cfg.chirp_bandwidth_hz, cfg.chirp_rate());
    let mut sym = vec![Complex::default(); cfg.n_a()];
    for k in 0..cfg.chirp_len() {
        let t = k as f64 * ts;
        sym[cfg.cp_len + k] = cis(PI * rate * t * t - PI * bw * t);
    }
    sym
}

/// Unit-modulus chirp repeated identically in each of the `M` symbols.
pub fn fmcw_generate<T: Real>(cfg: &SystemConfig) -> ComplexSequence<T> {
    let sym = chirp_symbol::<T>(cfg);
    let samples = sym.iter().copied().cycle().take(cfg.frame_len()).collect();
    ComplexSequence {
        samples,
        sample_period: cfg.sample_period(),
    }
}

/// `x = sqrt(1 - P_s) fmcw + sqrt(P_s) ofdm`.
pub fn superpose<T: Real>(
    ofdm: &ComplexSequence<T>,
    fmcw: &ComplexSequence<T>,
    ofdm_power: f64,
) -> Result<ComplexSequence<T>> {
    if ofdm.len() != fmcw.len() {
        return Err(Error::invalid(format!(
            "superposition needs equal lengths, got {} and {}",
            ofdm.len(),
            fmcw.len()
        )));
    }
    if !(0.0..=1.0).contains(&ofdm_power) {
        return Err(Error::invalid(format!("OFDM power {ofdm_power} outside [0, 1]")));
    }
    let a = T::of((1.0 - ofdm_power).sqrt());
    let b = T::of(ofdm_power.sqrt());
    let samples = fmcw.iter().zip(ofdm.iter()).map(|(f, o)| *f * a + *o * b).collect();
    Ok(ComplexSequence {
        samples,
        sample_period: ofdm.sample_period,
    })
}

/// OFDM-to-FMCW power ratio `10 log10(P_s / (1 - P_s))`.
pub fn power_ratio_db(ofdm_power: f64) -> Result<f64> {
    if !(ofdm_power > 0.0 && ofdm_power < 1.0) {
        return Err(Error::invalid(format!(
            "power ratio needs 0 < P_s < 1, got {ofdm_power}"
        )));
    }
    Ok(10.0 * (ofdm_power / (1.0 - ofdm_power)).log10())
}

/// Inverse of [`power_ratio_db`].
pub fn ofdm_power_of_ratio(ratio_db: f64) -> f64 {
    let r = 10f64.powf(ratio_db / 10.0);
    r / (1.0 + r)
}
