//! Point targets, their fractional-delay tap expansion, and the noisy channel.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dsp::{raised_cosine, ComplexSequence};
use crate::error::{Error, Result};
use crate::num::{complex_f64, complex_of, Real};

/// A point reflector seen by the sensing receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub gain: Complex<f64>,
    pub range_m: f64,
    pub speed_mps: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

impl Target {
    pub fn new(cfg: &SystemConfig, gain: Complex<f64>, range_m: f64, speed_mps: f64) -> Self {
        Target {
            gain,
            range_m,
            speed_mps,
            delay_s: cfg.delay_of_range(range_m),
            doppler_hz: cfg.doppler_of_speed(speed_mps),
        }
    }

    /// Target placed at `delay` sample periods with Doppler `doppler_hz`.
    pub fn at_delay(cfg: &SystemConfig, gain: Complex<f64>, delay: f64, doppler_hz: f64) -> Self {
        let delay_s = delay * cfg.sample_period();
        Target {
            gain,
            range_m: cfg.range_of_delay(delay_s),
            speed_mps: cfg.speed_of_doppler(doppler_hz),
            delay_s,
            doppler_hz,
        }
    }

    /// Nearest delay bin `l_p` and residual `alpha_p / T_s` in `(-1/2, 1/2]`.
    pub fn split_delay(&self, ts: f64) -> (usize, f64) {
        let x = self.delay_s / ts;
        let r = x.round();
        let x = if (x - r).abs() < 1e-9 { r } else { x };
        let l = (x - 0.5).ceil().max(0.0);
        (l as usize, x - l)
    }
}

/// One tap of the effective channel, at an integer sample delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePath {
    pub gain: Complex<f64>,
    pub delay: usize,
    pub doppler_hz: f64,
    /// Index of the physical target this tap belongs to.
    pub target: usize,
}

impl EffectivePath {
    /// Normalized Doppler `v = f_d T_s`.
    pub fn normalized_doppler(&self, ts: f64) -> f64 {
        self.doppler_hz * ts
    }

    /// Gain including the per-symbol prefix phase, `h e^{j 2 pi N_cp v}`.
    pub fn prefixed_gain(&self, cfg: &SystemConfig) -> Complex<f64> {
        let v = self.normalized_doppler(cfg.sample_period());
        self.gain * Complex::from_polar(1.0, 2.0 * PI * cfg.cp_len as f64 * v)
    }
}

/// `(2 Delta + 1)` integer-delay taps per physical target, ordered by target then delay.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EffectiveChannel {
    pub paths: Vec<EffectivePath>,
}

impl EffectiveChannel {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Expands each target into taps `h_p g(k T_s - alpha_p)` at delays `l_p + k`, `|k| <= Delta`.
pub fn expand_effective(targets: &[Target], cfg: &SystemConfig) -> Result<EffectiveChannel> {
    if targets.is_empty() {
        return Err(Error::invalid("at least one target is required"));
    }
    let ts = cfg.sample_period();
    let half = cfg.tap_half_width;
    let mut paths = Vec::with_capacity(targets.len() * (2 * half + 1));
    for (p, t) in targets.iter().enumerate() {
        if !(t.delay_s >= 0.0) {
            return Err(Error::PreconditionViolation(format!(
                "target {p} has negative delay {}",
                t.delay_s
            )));
        }
        let (l, alpha) = t.split_delay(ts);
        if l < half || l + half >= cfg.cp_len {
            return Err(Error::PreconditionViolation(format!(
                "target {p}: delay bin {l} with half-width {half} must stay within [0, {})",
                cfg.cp_len
            )));
        }
        for j in 0..=2 * half {
            let k = j as f64 - half as f64;
            let g = raised_cosine((k - alpha) * ts, cfg.rolloff, ts)?;
            paths.push(EffectivePath {
                gain: t.gain * g,
                delay: l + j - half,
                doppler_hz: t.doppler_hz,
                target: p,
            });
        }
    }
    Ok(EffectiveChannel { paths })
}

/// Noise-free channel output `sum_l h_l tx(n - l) e^{j 2 pi f_l n T_s}`.
pub fn propagate<T: Real>(tx: &ComplexSequence<T>, eff: &EffectiveChannel) -> ComplexSequence<T> {
    let n = tx.len();
    let ts = tx.sample_period;
    let mut out = vec![Complex::<f64>::default(); n];
    let mut acc = vec![Complex::<f64>::default(); n];
    // Taps sharing a Doppler shift are summed before the phase ramp is applied.
    let mut groups: Vec<(f64, Vec<&EffectivePath>)> = Vec::new();
    for p in &eff.paths {
        match groups.iter_mut().find(|(f, _)| *f == p.doppler_hz) {
            Some((_, v)) => v.push(p),
            None => groups.push((p.doppler_hz, vec![p])),
        }
    }
    for (fd, taps) in groups {
        acc.iter_mut().for_each(|z| *z = Complex::default());
        for tap in taps {
            for i in tap.delay..n {
                acc[i] += tap.gain * complex_f64(tx[i - tap.delay]);
            }
        }
        let w = 2.0 * PI * fd * ts;
        for (i, (o, a)) in out.iter_mut().zip(&acc).enumerate() {
            if fd == 0.0 {
                *o += *a;
            } else {
                *o += *a * Complex::from_polar(1.0, w * i as f64);
            }
        }
    }
    ComplexSequence {
        samples: out.into_iter().map(complex_of).collect(),
        sample_period: ts,
    }
}

/// Circularly-symmetric complex Gaussian samples of variance `variance`.
pub fn complex_noise<T: Real>(len: usize, variance: f64, seed: u64) -> Vec<Complex<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            complex_of(Complex::new(re * s, im * s))
        })
        .collect()
}

/// [`propagate`] followed by AWGN drawn from `seed`.
pub fn apply_channel<T: Real>(
    tx: &ComplexSequence<T>,
    eff: &EffectiveChannel,
    noise_variance: f64,
    seed: u64,
) -> Result<ComplexSequence<T>> {
    if !(noise_variance >= 0.0) {
        return Err(Error::invalid(format!(
            "noise variance {noise_variance} must be >= 0"
        )));
    }
    let mut y = propagate(tx, eff);
    if noise_variance > 0.0 {
        for (z, w) in y.iter_mut().zip(complex_noise::<T>(tx.len(), noise_variance, seed)) {
            *z += w;
        }
    }
    Ok(y)
}

/// Sampling interval for one target property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Distribution of one target: fixed power, uniform range and speed, uniform phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub power_db: f64,
    pub range_m: Interval,
    pub speed_mps: Interval,
}

/// Draws one target per spec; reproducible from `seed`.
pub fn draw_scenario(specs: &[TargetSpec], cfg: &SystemConfig, seed: u64) -> Result<Vec<Target>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    specs
        .iter()
        .enumerate()
        .map(|(p, s)| {
            for (name, iv) in [("range", s.range_m), ("speed", s.speed_mps)] {
                if !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                    return Err(Error::invalid(format!(
                        "target {p}: empty {name} interval [{}, {}]",
                        iv.lo, iv.hi
                    )));
                }
            }
            let range = s.range_m.draw(&mut rng);
            let speed = s.speed_mps.draw(&mut rng);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = 10f64.powf(s.power_db / 20.0);
            Ok(Target::new(cfg, Complex::from_polar(amp, phase), range, speed))
        })
        .collect()
}

/// Noise variance for `snr_db` under unit transmit power.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Converts km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}
