//! Waveform, channel and receiver parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Every scalar parameter of the link.
///
/// Sample-domain sizes are counts; everything else is SI. Derived timing
/// quantities are methods so they can never drift from the stored fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// OFDM subcarriers per symbol (transform size).
    pub subcarriers: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    /// Subcarriers carrying data, centred on DC with DC nulled.
    pub active_subcarriers: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing_hz: f64,
    /// OFDM/FMCW symbols per frame.
    pub symbols: usize,
    /// Slow-time (Doppler) transform size, at least `symbols`.
    pub doppler_fft_len: usize,
    /// FMCW sweep bandwidth in Hz.
    pub chirp_bandwidth_hz: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Fraction of the unit transmit power given to OFDM; the chirp gets the rest.
    pub ofdm_power: f64,
    /// Raised-cosine roll-off.
    pub rolloff: f64,
    /// Raised-cosine truncation half-width in samples.
    pub tap_half_width: usize,
    /// Decimation factor of the mixing/down-sampling sensor.
    pub downsample: usize,
    /// Low-pass taps used by the mixing/down-sampling sensor.
    pub lowpass_taps: usize,
    /// Complex AWGN variance relative to unit transmit power.
    #[serde(default)]
    pub noise_variance: f64,
    /// Doppler per unit radial speed, in units of `f_c / c`.
    #[serde(default = "default_doppler_factor")]
    pub doppler_factor: f64,
}

fn default_doppler_factor() -> f64 {
    1.0
}

impl SystemConfig {
    /// Full-size numerology: 4096 subcarriers at 15 kHz, 140 symbols.
    pub fn full_scale() -> Self {
        SystemConfig {
            subcarriers: 4096,
            cp_len: 288,
            active_subcarriers: 3112,
            subcarrier_spacing_hz: 15e3,
            symbols: 140,
            doppler_fft_len: 1400,
            chirp_bandwidth_hz: 3112.0 * 15e3,
            carrier_hz: 23.6e9,
            ofdm_power: 0.893,
            rolloff: 0.25,
            tap_half_width: 2,
            downsample: 8,
            lowpass_taps: 63,
            noise_variance: 0.0,
            doppler_factor: 1.0,
        }
    }

    /// One-eighth numerology with identical symbol timing, used for fast runs.
    ///
    /// Sample period is 8x longer, so range bins are 8x coarser and the
    /// cyclic prefix spans the same physical delay as [`Self::full_scale`].
    pub fn desk_scale() -> Self {
        SystemConfig {
            subcarriers: 512,
            cp_len: 36,
            active_subcarriers: 388,
            subcarrier_spacing_hz: 15e3,
            symbols: 28,
            doppler_fft_len: 112,
            chirp_bandwidth_hz: 388.0 * 15e3,
            carrier_hz: 23.6e9,
            ofdm_power: 0.893,
            rolloff: 0.25,
            tap_half_width: 2,
            downsample: 4,
            lowpass_taps: 63,
            noise_variance: 0.0,
            doppler_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.subcarriers < 2 {
            return fail(format!("subcarriers = {} must be at least 2", self.subcarriers));
        }
        if self.active_subcarriers == 0 || self.active_subcarriers >= self.subcarriers {
            return fail(format!(
                "active_subcarriers = {} must lie in [1, {}) (DC is nulled)",
                self.active_subcarriers, self.subcarriers
            ));
        }
        if 2 * self.cp_len >= self.subcarriers {
            return fail(format!(
                "cp_len = {} must be below half of subcarriers = {}",
                self.cp_len, self.subcarriers
            ));
        }
        if self.symbols == 0 {
            return fail("symbols must be positive".into());
        }
        if self.doppler_fft_len < self.symbols {
            return fail(format!(
                "doppler_fft_len = {} must be >= symbols = {}",
                self.doppler_fft_len, self.symbols
            ));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return fail("subcarrier_spacing_hz must be positive".into());
        }
        if !(self.chirp_bandwidth_hz > 0.0 && self.chirp_bandwidth_hz <= self.sample_rate()) {
            return fail(format!(
                "chirp_bandwidth_hz = {} must lie in (0, sample rate = {}]",
                self.chirp_bandwidth_hz,
                self.sample_rate()
            ));
        }
        if !(self.carrier_hz > 0.0) {
            return fail("carrier_hz must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ofdm_power) {
            return fail(format!("ofdm_power = {} outside [0, 1]", self.ofdm_power));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return fail(format!("rolloff = {} outside [0, 1]", self.rolloff));
        }
        if self.tap_half_width >= self.cp_len {
            return fail(format!(
                "tap_half_width = {} must be below cp_len = {}",
                self.tap_half_width, self.cp_len
            ));
        }
        let d = self.downsample;
        if d == 0 || self.n_a() % d != 0 || self.cp_len % d != 0 {
            return fail(format!(
                "downsample = {} must divide both N_a = {} and cp_len = {}",
                d,
                self.n_a(),
                self.cp_len
            ));
        }
        if self.lowpass_taps == 0 || self.lowpass_taps % 2 == 0 {
            return fail(format!("lowpass_taps = {} must be odd", self.lowpass_taps));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return fail(format!("noise_variance = {} must be >= 0", self.noise_variance));
        }
        if !(self.doppler_factor > 0.0) {
            return fail("doppler_factor must be positive".into());
        }
        Ok(())
    }

    /// Samples per symbol including the prefix, `N_a = N + N_cp`.
    pub fn n_a(&self) -> usize {
        self.subcarriers + self.cp_len
    }

    /// Samples per frame, `M * N_a`.
    pub fn frame_len(&self) -> usize {
        self.symbols * self.n_a()
    }

    /// Non-zero chirp samples per symbol, `N - N_cp`.
    pub fn chirp_len(&self) -> usize {
        self.subcarriers - self.cp_len
    }

    pub fn sample_rate(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// `T_s = 1 / (N * delta_f)`.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    /// Useful symbol duration `T = N * T_s`.
    pub fn useful_duration(&self) -> f64 {
        self.subcarriers as f64 * self.sample_period()
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_len as f64 * self.sample_period()
    }

    /// `T_sym = T + T_cp`.
    pub fn symbol_duration(&self) -> f64 {
        self.useful_duration() + self.cp_duration()
    }

    /// Non-zero chirp duration `T_c = T - T_cp`.
    pub fn chirp_duration(&self) -> f64 {
        self.useful_duration() - self.cp_duration()
    }

    /// Chirp rate `B_w / T_c` in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        self.chirp_bandwidth_hz / self.chirp_duration()
    }

    /// Beat frequency of the largest delay the prefix admits.
    pub fn max_beat_frequency(&self) -> f64 {
        self.chirp_rate() * self.cp_duration()
    }

    /// Samples per decimated symbol, `N_T = N_a / D`.
    pub fn dmd_block_len(&self) -> usize {
        self.n_a() / self.downsample
    }

    /// Decimated samples skipped at each symbol start, `N_b = N_cp / D`.
    pub fn dmd_skip(&self) -> usize {
        self.cp_len / self.downsample
    }

    /// Decimated samples kept per symbol, `N_D = (N - 2 N_cp) / D`.
    pub fn dmd_len(&self) -> usize {
        (self.subcarriers - 2 * self.cp_len) / self.downsample
    }

    /// Delay in samples represented by one fast-time bin of the mixing sensor.
    pub fn dmd_delay_per_row(&self) -> f64 {
        let ts = self.sample_period();
        let df = 1.0 / (self.dmd_len() as f64 * self.downsample as f64 * ts);
        df / self.chirp_rate() / ts
    }

    /// Low-pass cutoff of the mixing sensor in cycles per input sample.
    pub fn dmd_cutoff(&self) -> f64 {
        let fbt = self.max_beat_frequency() * self.sample_period();
        (0.45 / self.downsample as f64).min(1.2 * fbt)
    }

    /// Largest divisor of `gcd(N_a, N_cp)` whose decimated rate still covers
    /// twice the largest beat frequency.
    pub fn default_downsample(&self) -> usize {
        let g = gcd(self.n_a(), self.cp_len);
        let fbt = self.max_beat_frequency() * self.sample_period();
        (1..=g.max(1))
            .rev()
            .find(|d| g % d == 0 && 1.0 / (*d as f64) >= 2.0 * fbt)
            .unwrap_or(1)
    }

    /// FFT bin indices of the data subcarriers in ascending frequency order.
    ///
    /// `floor(N_sc / 2)` bins sit below DC, the remainder above; bin 0 is
    /// never used.
    pub fn active_bins(&self) -> Vec<usize> {
        let n = self.subcarriers;
        let below = self.active_subcarriers / 2;
        let above = self.active_subcarriers - below;
        (n - below..n).chain(1..=above).collect()
    }

    /// Mask over all `N` bins marking the data subcarriers.
    pub fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.subcarriers];
        for k in self.active_bins() {
            mask[k] = true;
        }
        mask
    }

    /// Signed frequency index of an FFT bin.
    pub fn signed_bin(&self, k: usize) -> i64 {
        let n = self.subcarriers as i64;
        let k = k as i64;
        if k >= (n + 1) / 2 {
            k - n
        } else {
            k
        }
    }

    /// Doppler shift in Hz of a radial speed in m/s.
    pub fn doppler_of_speed(&self, speed_mps: f64) -> f64 {
        self.doppler_factor * speed_mps * self.carrier_hz / SPEED_OF_LIGHT
    }

    pub fn speed_of_doppler(&self, doppler_hz: f64) -> f64 {
        doppler_hz * SPEED_OF_LIGHT / (self.doppler_factor * self.carrier_hz)
    }

    /// Propagation delay in seconds of a range in metres, `2 r / c`.
    pub fn delay_of_range(&self, range_m: f64) -> f64 {
        2.0 * range_m / SPEED_OF_LIGHT
    }

    pub fn range_of_delay(&self, delay_s: f64) -> f64 {
        SPEED_OF_LIGHT * delay_s / 2.0
    }

    /// Range per delay bin, `c T_s / 2`.
    pub fn range_resolution(&self) -> f64 {
        self.range_of_delay(self.sample_period())
    }

    /// Doppler per slow-time bin, `1 / (M1 T_sym)`.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.doppler_fft_len as f64 * self.symbol_duration())
    }

    pub fn speed_resolution(&self) -> f64 {
        self.speed_of_doppler(self.doppler_resolution())
    }

    /// Slow-time bin nearest to a Doppler shift, wrapped into `[0, M1)`.
    pub fn doppler_bin(&self, doppler_hz: f64) -> usize {
        let m1 = self.doppler_fft_len as i64;
        let k = (doppler_hz / self.doppler_resolution()).round() as i64;
        k.rem_euclid(m1) as usize
    }

    /// Signed Doppler in Hz of a slow-time bin, unwrapped into `[-M1/2, M1/2)`.
    pub fn doppler_of_bin(&self, bin: usize) -> f64 {
        let m1 = self.doppler_fft_len as i64;
        let mut k = (bin as i64).rem_euclid(m1);
        if k >= m1 / 2 {
            k -= m1;
        }
        k as f64 * self.doppler_resolution()
    }
}

pub(crate) fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SystemConfig::full_scale().validate().unwrap();
        SystemConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn derived_timing_is_consistent() {
        let cfg = SystemConfig::full_scale();
        assert_eq!(cfg.n_a(), 4384);
        assert_eq!(cfg.chirp_duration(), cfg.useful_duration() - cfg.cp_duration());
        assert!((cfg.sample_rate() - 61.44e6).abs() < 1e-3);
        assert!((cfg.useful_duration() - 1.0 / 15e3).abs() < 1e-15);
        assert_eq!(cfg.dmd_len(), (4096 - 576) / 8);
    }

    #[test]
    fn desk_scale_keeps_symbol_timing() {
        let a = SystemConfig::full_scale();
        let b = SystemConfig::desk_scale();
        assert!((a.symbol_duration() - b.symbol_duration()).abs() < 1e-15);
        assert!((a.chirp_duration() - b.chirp_duration()).abs() < 1e-15);
    }

    #[test]
    fn default_downsample_matches_presets() {
        assert_eq!(SystemConfig::desk_scale().default_downsample(), 4);
        assert_eq!(SystemConfig::full_scale().default_downsample(), 8);
    }

    #[test]
    fn resolution_of_one_range_bin() {
        // c * T_s / 2 with T_s = 1 / 61.44 MHz.
        let r = SystemConfig::full_scale().range_resolution();
        assert!((r - 2.44).abs() < 0.005, "{r}");
    }

    #[test]
    fn active_bins_straddle_dc() {
        let cfg = SystemConfig::desk_scale();
        let bins = cfg.active_bins();
        assert_eq!(bins.len(), 388);
        assert!(!bins.contains(&0));
        assert_eq!(bins[0], 512 - 194);
        assert_eq!(*bins.last().unwrap(), 194);
        assert_eq!(cfg.active_mask().iter().filter(|b| **b).count(), 388);
    }

    #[test]
    fn rejects_broken_invariants() {
        let mut cfg = SystemConfig::desk_scale();
        cfg.doppler_fft_len = 10;
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::desk_scale();
        cfg.downsample = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = SystemConfig::desk_scale();
        cfg.active_subcarriers = 512;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn doppler_bins_wrap() {
        let cfg = SystemConfig::desk_scale();
        let res = cfg.doppler_resolution();
        assert_eq!(cfg.doppler_bin(-res), cfg.doppler_fft_len - 1);
        assert!((cfg.doppler_of_bin(cfg.doppler_fft_len - 1) + res).abs() < 1e-9);
        assert_eq!(cfg.doppler_bin(3.0 * res), 3);
    }
}
