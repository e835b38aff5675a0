//! Conventional OFDM reference system: DMRS pilots, LS estimation with
//! linear interpolation, channel-estimate radar and decision-feedback sensing.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chanest::FreqChannelGrid;
use crate::config::SystemConfig;
use crate::dsp::FftPair;
use crate::error::{Error, Result};
use crate::num::{complex_f64, complex_of, Real};
use crate::sensing::{doppler_transform, fccr_cells, RangeDopplerMap, SensingMethod};
use crate::waveform::{map_bits_qpsk, ofdm_modulate, random_bits, FrameGrid};

pub const SLOT_LEN: usize = 14;
/// Pilot-carrying symbols inside each slot.
pub const PILOT_SYMBOLS: [usize; 3] = [3, 8, 12];

/// Where the pilots sit and what they carry.
///
/// Pilot symbol `j` of the frame uses active-subcarrier ordinals
/// `j % 2, j % 2 + 2, ...`, so consecutive pilot symbols alternate between
/// even and odd subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct DmrsLayout {
    /// Frame symbol index of each pilot symbol, ascending.
    pub pilot_symbols: Vec<usize>,
    /// Known QPSK value of each pilot, indexed `[pilot symbol][pilot number]`.
    pub pilots: Vec<Vec<Complex<f64>>>,
    active_bins: Vec<usize>,
    /// Pilot-symbol number of each frame symbol.
    symbol_slot: Vec<Option<usize>>,
}

impl DmrsLayout {
    /// Layout for `cfg` with pilot values drawn from `seed`.
    pub fn new(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        if cfg.symbols == 0 || cfg.symbols % SLOT_LEN != 0 {
            return Err(Error::invalid(format!(
                "{} symbols is not a whole number of {SLOT_LEN}-symbol slots",
                cfg.symbols
            )));
        }
        let pilot_symbols: Vec<usize> = (0..cfg.symbols / SLOT_LEN)
            .flat_map(|s| PILOT_SYMBOLS.iter().map(move |p| s * SLOT_LEN + p))
            .collect();
        let mut symbol_slot = vec![None; cfg.symbols];
        for (j, &m) in pilot_symbols.iter().enumerate() {
            symbol_slot[m] = Some(j);
        }
        let active_bins = cfg.active_bins();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pilots = (0..pilot_symbols.len())
            .map(|j| {
                let count = (active_bins.len() - j % 2).div_ceil(2);
                let bits = random_bits(&mut rng, 2 * count);
                map_bits_qpsk::<f64>(&bits).expect("even bit count")
            })
            .collect();
        Ok(DmrsLayout {
            pilot_symbols,
            pilots,
            active_bins,
            symbol_slot,
        })
    }

    pub fn parity(&self, pilot_index: usize) -> usize {
        pilot_index % 2
    }

    /// Known pilot at frame symbol `m`, active ordinal `ordinal`.
    pub fn pilot_at(&self, m: usize, ordinal: usize) -> Option<Complex<f64>> {
        let j = self.symbol_slot.get(m).copied().flatten()?;
        if ordinal % 2 != self.parity(j) {
            return None;
        }
        self.pilots[j].get(ordinal / 2).copied()
    }

    /// `true` for every active cell (in [`FrameGrid::from_data`] order) that
    /// carries payload.
    pub fn data_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.symbol_slot.len() * self.active_bins.len());
        for m in 0..self.symbol_slot.len() {
            for o in 0..self.active_bins.len() {
                mask.push(self.pilot_at(m, o).is_none());
            }
        }
        mask
    }

    pub fn data_cells(&self) -> usize {
        self.data_mask().iter().filter(|d| **d).count()
    }

    /// Fraction of active cells spent on pilots.
    pub fn overhead(&self) -> f64 {
        let total = self.symbol_slot.len() * self.active_bins.len();
        1.0 - self.data_cells() as f64 / total as f64
    }

    /// Frame with pilots in place and `data` on the remaining active cells.
    pub fn assemble<T: Real>(&self, cfg: &SystemConfig, data: &[Complex<T>]) -> Result<FrameGrid<T>> {
        let need = self.data_cells();
        if data.len() != need {
            return Err(Error::invalid(format!(
                "layout holds {need} data symbols, got {}",
                data.len()
            )));
        }
        let mut grid = FrameGrid::zeros(cfg);
        let mut it = data.iter();
        for m in 0..cfg.symbols {
            for (o, &k) in self.active_bins.iter().enumerate() {
                *grid.at_mut(m, k) = match self.pilot_at(m, o) {
                    Some(p) => complex_of(p),
                    None => *it.next().expect("length checked"),
                };
            }
        }
        Ok(grid)
    }

    /// Keeps the entries of a per-active-cell sequence that carry payload.
    pub fn extract_data<U: Copy>(&self, per_cell: &[U]) -> Result<Vec<U>> {
        let mask = self.data_mask();
        if per_cell.len() != mask.len() {
            return Err(Error::invalid(format!(
                "expected {} cell values, got {}",
                mask.len(),
                per_cell.len()
            )));
        }
        Ok(per_cell.iter().zip(mask).filter(|(_, d)| *d).map(|(v, _)| *v).collect())
    }
}

/// A pilot-bearing frame with random QPSK payload, plus its layout.
pub fn build_dmrs_frame(cfg: &SystemConfig, seed: u64) -> Result<(FrameGrid<f64>, DmrsLayout)> {
    let layout = DmrsLayout::new(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_DA7A);
    let bits = random_bits(&mut rng, 2 * layout.data_cells());
    let grid = layout.assemble(cfg, &map_bits_qpsk::<f64>(&bits)?)?;
    Ok((grid, layout))
}

/// LS channel samples on one pilot symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimate {
    pub symbol: usize,
    /// Active-subcarrier ordinals of the pilots, ascending.
    pub ordinals: Vec<usize>,
    pub values: Vec<Complex<f64>>,
}

/// `H(k1, m1) = Y(k1, m1) / b(m1, k1)` on every pilot.
pub fn ls_estimate<T: Real>(y: &FrameGrid<T>, layout: &DmrsLayout) -> Result<Vec<PilotEstimate>> {
    if y.symbols != layout.symbol_slot.len() {
        return Err(Error::invalid("received grid and layout disagree on symbol count"));
    }
    layout
        .pilot_symbols
        .iter()
        .map(|&m| {
            let mut ordinals = Vec::new();
            let mut values = Vec::new();
            for (o, &k) in layout.active_bins.iter().enumerate() {
                if let Some(b) = layout.pilot_at(m, o) {
                    if b.norm_sqr() == 0.0 {
                        return Err(Error::invalid(format!("zero pilot at symbol {m}, ordinal {o}")));
                    }
                    ordinals.push(o);
                    values.push(complex_f64(y.at(m, k)) / b);
                }
            }
            Ok(PilotEstimate {
                symbol: m,
                ordinals,
                values,
            })
        })
        .collect()
}

fn lerp(a: Complex<f64>, b: Complex<f64>, t: f64) -> Complex<f64> {
    a + (b - a) * t
}

/// Fills the full grid from pilot samples: linear in frequency between
/// pilots of the same symbol (nearest pilot beyond the band edges), then
/// linear in time between pilot symbols, extending the end segments.
pub fn interpolate_channel(est: &[PilotEstimate], cfg: &SystemConfig) -> Result<FreqChannelGrid> {
    if est.len() < 2 {
        return Err(Error::invalid(format!(
            "time interpolation needs at least 2 pilot symbols, got {}",
            est.len()
        )));
    }
    let bins = cfg.active_bins();
    let freq: Vec<f64> = bins.iter().map(|&k| cfg.signed_bin(k) as f64).collect();
    let mut filled: Vec<Vec<Complex<f64>>> = Vec::with_capacity(est.len());
    for e in est {
        if e.ordinals.is_empty() || e.ordinals.len() != e.values.len() {
            return Err(Error::invalid(format!("pilot symbol {} has no usable pilots", e.symbol)));
        }
        let mut row = vec![Complex::default(); bins.len()];
        let mut seg = 0;
        for (o, v) in row.iter_mut().enumerate() {
            while seg + 1 < e.ordinals.len() && e.ordinals[seg + 1] <= o {
                seg += 1;
            }
            let (o0, v0) = (e.ordinals[seg], e.values[seg]);
            *v = if o <= o0 || seg + 1 == e.ordinals.len() {
                v0
            } else {
                let o1 = e.ordinals[seg + 1];
                let t = (freq[o] - freq[o0]) / (freq[o1] - freq[o0]);
                lerp(v0, e.values[seg + 1], t)
            };
        }
        filled.push(row);
    }
    let mut grid = FreqChannelGrid::zeros(cfg);
    let mut seg = 0;
    for m in 0..cfg.symbols {
        while seg + 2 < est.len() && est[seg + 1].symbol <= m {
            seg += 1;
        }
        let (m0, m1) = (est[seg].symbol as f64, est[seg + 1].symbol as f64);
        let t = (m as f64 - m0) / (m1 - m0);
        for (o, &k) in bins.iter().enumerate() {
            *grid.at_mut(m, k) = lerp(filled[seg][o], filled[seg + 1][o], t);
        }
    }
    Ok(grid)
}

/// LS on the pilots followed by [`interpolate_channel`].
pub fn estimate_channel<T: Real>(
    y: &FrameGrid<T>,
    layout: &DmrsLayout,
    cfg: &SystemConfig,
) -> Result<FreqChannelGrid> {
    interpolate_channel(&ls_estimate(y, layout)?, cfg)
}

/// OFDM radar on a channel grid: inverse transform over the active
/// subcarriers of each symbol, delays `[0, N_cp)`, then an `M1`-point
/// transform over symbols.
pub fn ce_based_sensing(h: &FreqChannelGrid, cfg: &SystemConfig) -> Result<RangeDopplerMap> {
    if h.symbols != cfg.symbols || h.subcarriers != cfg.subcarriers {
        return Err(Error::invalid("channel grid dimensions disagree with the configuration"));
    }
    let (n, ncp) = (cfg.subcarriers, cfg.cp_len);
    let plan = FftPair::<f64>::new(n)?;
    let mask = cfg.active_mask();
    let mut rows = Vec::with_capacity(cfg.symbols);
    for m in 0..cfg.symbols {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| if mask[k] { h.at(m, k) } else { Complex::default() })
            .collect();
        plan.inverse_unscaled(&mut buf);
        buf.truncate(ncp);
        rows.push(buf);
    }
    let cells = doppler_transform(&rows, ncp, cfg, false)?;
    let axis = (0..ncp).map(|i| i as f64).collect();
    Ok(RangeDopplerMap::from_complex(&cells, axis, cfg, SensingMethod::Ce))
}

/// Cyclic-correlation RDM against the frame rebuilt from `payload_bits`
/// (re-encoded data plus the known pilots).
pub fn df_based_sensing<T: Real>(
    rx: &[Complex<T>],
    layout: &DmrsLayout,
    payload_bits: &[u8],
    cfg: &SystemConfig,
) -> Result<RangeDopplerMap> {
    let grid = layout.assemble(cfg, &map_bits_qpsk::<T>(payload_bits)?)?;
    let reference = ofdm_modulate(&grid, cfg)?;
    fccr_cells(rx, &reference, cfg, SensingMethod::Df)
}

/// The comparison system transmits OFDM only.
pub fn baseline_config(cfg: &SystemConfig) -> SystemConfig {
    SystemConfig {
        ofdm_power: 1.0,
        ..cfg.clone()
    }
}
