//! Sensing-aided channel estimation: successive cancellation of regenerated
//! chirp echoes, frequency-domain channel reconstruction and error metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex;

use crate::channel::EffectiveChannel;
use crate::config::SystemConfig;
use crate::dsp::ComplexSequence;
use crate::error::{Error, Result};
use crate::num::{complex_f64, complex_of, Real};
use crate::sensing::PseudoTarget;
use crate::waveform::chirp_symbol;

/// Delay and Doppler of a path to estimate, with the strength used for ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHint {
    pub delay: usize,
    pub doppler_hz: f64,
    pub amplitude: f64,
}

impl From<&PseudoTarget> for PathHint {
    fn from(p: &PseudoTarget) -> Self {
        PathHint {
            delay: p.delay,
            doppler_hz: p.doppler_hz,
            amplitude: p.amplitude,
        }
    }
}

/// Hints taken straight from the true effective channel, ordered by `|h|`.
pub fn hints_from_channel(eff: &EffectiveChannel) -> Vec<PathHint> {
    let mut v: Vec<PathHint> = eff
        .paths
        .iter()
        .map(|p| PathHint {
            delay: p.delay,
            doppler_hz: p.doppler_hz,
            amplitude: p.gain.norm(),
        })
        .collect();
    sort_by_strength(&mut v);
    v
}

/// Pools cluster members and orders them by RDM amplitude, strongest first.
pub fn hints_from_clusters(clusters: &[Vec<PseudoTarget>]) -> Vec<PathHint> {
    let mut v: Vec<PathHint> = clusters.iter().flatten().map(PathHint::from).collect();
    sort_by_strength(&mut v);
    v
}

fn sort_by_strength(v: &mut [PathHint]) {
    v.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
}

/// One estimated effective path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub delay: usize,
    pub doppler_hz: f64,
    pub gain: Complex<f64>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// Each coefficient is taken from the residual after cancelling all
    /// stronger paths.
    Successive,
    /// Each coefficient is correlated against the raw received frame.
    OneShot,
}

/// Adds `gain * sqrt(1 - P_s) s_r(n - delay) e^{j 2 pi f_d n T_s}` to `out`.
fn accumulate_echo(
    out: &mut [Complex<f64>],
    template: &[Complex<f64>],
    delay: usize,
    doppler_hz: f64,
    gain: Complex<f64>,
    cfg: &SystemConfig,
) {
    let na = cfg.n_a();
    let w = 2.0 * PI * doppler_hz * cfg.sample_period();
    let amp = (1.0 - cfg.ofdm_power).sqrt();
    for (n, o) in out.iter_mut().enumerate().skip(delay) {
        let s = template[(n - delay) % na];
        if s.re != 0.0 || s.im != 0.0 {
            *o += gain * s * Complex::from_polar(amp, w * n as f64);
        }
    }
}

/// Regenerated chirp echo `sqrt(1 - P_s) s_r(n - l) e^{j 2 pi f_d n T_s}`.
pub fn regenerate_path_reference<T: Real>(
    delay: usize,
    doppler_hz: f64,
    cfg: &SystemConfig,
) -> ComplexSequence<T> {
    let template = chirp_symbol::<f64>(cfg);
    let mut out = vec![Complex::default(); cfg.frame_len()];
    accumulate_echo(&mut out, &template, delay, doppler_hz, Complex::new(1.0, 0.0), cfg);
    ComplexSequence {
        samples: out.into_iter().map(complex_of).collect(),
        sample_period: cfg.sample_period(),
    }
}

/// Estimates the coefficient of every hinted path, strongest first.
///
/// In [`EstimationMode::Successive`] each estimate
/// `h_p = <y - y_{p-1}, r_p> / ||r_p||^2` uses the residual left after
/// subtracting all earlier reconstructions.
pub fn sic_estimate<T: Real>(
    y: &[Complex<T>],
    hints: &[PathHint],
    cfg: &SystemConfig,
    mode: EstimationMode,
) -> Result<Vec<PathEstimate>> {
    if y.len() != cfg.frame_len() {
        return Err(Error::invalid(format!(
            "received frame has {} samples, expected {}",
            y.len(),
            cfg.frame_len()
        )));
    }
    let mut order: Vec<PathHint> = hints.to_vec();
    sort_by_strength(&mut order);
    let template = chirp_symbol::<f64>(cfg);
    let raw: Vec<Complex<f64>> = y.iter().map(|z| complex_f64(*z)).collect();
    let mut residual = raw.clone();
    let mut reference = vec![Complex::<f64>::default(); y.len()];
    let mut out = Vec::with_capacity(order.len());
    for h in order {
        reference.iter_mut().for_each(|z| *z = Complex::default());
        accumulate_echo(&mut reference, &template, h.delay, h.doppler_hz, Complex::new(1.0, 0.0), cfg);
        let energy: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
        if !(energy > 0.0) {
            return Err(Error::DegenerateReference { delay: h.delay });
        }
        let source = match mode {
            EstimationMode::Successive => &residual,
            EstimationMode::OneShot => &raw,
        };
        let ip: Complex<f64> = source
            .iter()
            .zip(&reference)
            .map(|(a, r)| a * r.conj())
            .sum();
        let gain = ip / energy;
        if mode == EstimationMode::Successive {
            for (r, s) in residual.iter_mut().zip(&reference) {
                *r -= gain * s;
            }
        }
        out.push(PathEstimate {
            delay: h.delay,
            doppler_hz: h.doppler_hz,
            gain,
            amplitude: h.amplitude,
        });
    }
    Ok(out)
}

/// Regenerated chirp interference `sum_p h_p sqrt(1 - P_s) s_r(n - l_p) e^{j 2 pi f_p n T_s}`.
pub fn regenerate_fmcw_interference<T: Real>(
    est: &[PathEstimate],
    cfg: &SystemConfig,
) -> ComplexSequence<T> {
    let template = chirp_symbol::<f64>(cfg);
    let mut out = vec![Complex::default(); cfg.frame_len()];
    for p in est {
        accumulate_echo(&mut out, &template, p.delay, p.doppler_hz, p.gain, cfg);
    }
    ComplexSequence {
        samples: out.into_iter().map(complex_of).collect(),
        sample_period: cfg.sample_period(),
    }
}

/// Channel transfer function `H(k, m)` on the full `M x N` grid, row-major by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannelGrid {
    pub symbols: usize,
    pub subcarriers: usize,
    pub cells: Vec<Complex<f64>>,
}

impl FreqChannelGrid {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        FreqChannelGrid {
            symbols: cfg.symbols,
            subcarriers: cfg.subcarriers,
            cells: vec![Complex::default(); cfg.symbols * cfg.subcarriers],
        }
    }

    #[inline]
    pub fn at(&self, m: usize, k: usize) -> Complex<f64> {
        self.cells[m * self.subcarriers + k]
    }

    #[inline]
    pub fn at_mut(&mut self, m: usize, k: usize) -> &mut Complex<f64> {
        &mut self.cells[m * self.subcarriers + k]
    }
}

/// `sum_p h_p e^{-j 2 pi k delta_f tau_p} e^{j 2 pi f_p (m T_sym + offset T_s)}`.
///
/// `offset` shifts the Doppler phase reference inside each symbol;
/// zero reproduces the symbol-start convention.
pub fn freq_channel_at(
    paths: impl IntoIterator<Item = (Complex<f64>, usize, f64)>,
    cfg: &SystemConfig,
    offset: f64,
) -> FreqChannelGrid {
    let mut grid = FreqChannelGrid::zeros(cfg);
    let (n, ts, tsym) = (cfg.subcarriers, cfg.sample_period(), cfg.symbol_duration());
    let mut row = vec![Complex::<f64>::default(); n];
    for (h, delay, fd) in paths {
        for (k, v) in row.iter_mut().enumerate() {
            *v = Complex::from_polar(1.0, -2.0 * PI * ((k * delay) % n) as f64 / n as f64);
        }
        for m in 0..cfg.symbols {
            let g = h * Complex::from_polar(1.0, 2.0 * PI * fd * (m as f64 * tsym + offset * ts));
            for (cell, v) in grid.cells[m * n..(m + 1) * n].iter_mut().zip(&row) {
                *cell += g * v;
            }
        }
    }
    grid
}

/// Channel grid rebuilt from path estimates.
pub fn reconstruct_freq_channel(est: &[PathEstimate], cfg: &SystemConfig) -> FreqChannelGrid {
    freq_channel_at(est.iter().map(|p| (p.gain, p.delay, p.doppler_hz)), cfg, 0.0)
}

/// Channel grid of the true effective paths.
pub fn true_freq_channel(eff: &EffectiveChannel, cfg: &SystemConfig) -> FreqChannelGrid {
    freq_channel_at(eff.paths.iter().map(|p| (p.gain, p.delay, p.doppler_hz)), cfg, 0.0)
}

/// Sample offset at the middle of the useful part of a symbol, where a
/// one-tap equalizer sees the average Doppler rotation.
pub fn mid_symbol_offset(cfg: &SystemConfig) -> f64 {
    cfg.cp_len as f64 + (cfg.subcarriers as f64 - 1.0) / 2.0
}

/// `sum |H_hat - H|^2 / sum |H|^2` over the active subcarriers of every symbol.
pub fn nmse_freq(est: &FreqChannelGrid, truth: &FreqChannelGrid, active_mask: &[bool]) -> Result<f64> {
    if est.symbols != truth.symbols
        || est.subcarriers != truth.subcarriers
        || active_mask.len() != truth.subcarriers
    {
        return Err(Error::invalid("channel grids and mask must share dimensions"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for m in 0..truth.symbols {
        for (k, on) in active_mask.iter().enumerate() {
            if *on {
                let h = truth.at(m, k);
                num += (est.at(m, k) - h).norm_sqr();
                den += h.norm_sqr();
            }
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("true channel has zero energy".into()));
    }
    Ok(num / den)
}

/// Time-domain NMSE over paths keyed by `(delay bin, Doppler bin)`.
///
/// Gains sharing a key are summed first. A key present on only one side
/// counts against the other side as a zero coefficient.
pub fn nmse_time(est: &[PathEstimate], truth: &EffectiveChannel, cfg: &SystemConfig) -> Result<f64> {
    let key = |delay: usize, fd: f64| (delay, cfg.doppler_bin(fd));
    let mut table: BTreeMap<(usize, usize), (Complex<f64>, Complex<f64>)> = BTreeMap::new();
    for p in &truth.paths {
        table.entry(key(p.delay, p.doppler_hz)).or_default().1 += p.gain;
    }
    for p in est {
        table.entry(key(p.delay, p.doppler_hz)).or_default().0 += p.gain;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in table.values() {
        num += (e - t).norm_sqr();
        den += t.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("true path gains have zero energy".into()));
    }
    Ok(num / den)
}

/// Closed-form RMSE of the strongest-path coefficient for a single
/// integer-delay target:
/// `sqrt( (T_sym/T_c) (N/N_sc) P_s / ((1-P_s) M N_a) + sigma^2 / ((1-P_s) M N_a) )`.
pub fn theoretical_rmse_h1(cfg: &SystemConfig, noise_variance: f64) -> Result<f64> {
    let ps = cfg.ofdm_power;
    if !(0.0..1.0).contains(&ps) {
        return Err(Error::invalid(format!("closed form needs 0 <= P_s < 1, got {ps}")));
    }
    let mna = (cfg.symbols * cfg.n_a()) as f64;
    let ratio = cfg.symbol_duration() / cfg.chirp_duration();
    let nn = cfg.subcarriers as f64 / cfg.active_subcarriers as f64;
    let var = ratio * nn * ps / ((1.0 - ps) * mna) + noise_variance / ((1.0 - ps) * mna);
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{expand_effective, propagate, EffectivePath, Target};
    use crate::dsp::dft;
    use crate::waveform::fmcw_generate;
    use proptest::prelude::*;

    fn cfg(ps: f64) -> SystemConfig {
        let mut c = SystemConfig::desk_scale();
        c.ofdm_power = ps;
        c
    }

    fn path(gain: Complex<f64>, delay: usize, fd: f64) -> EffectivePath {
        EffectivePath { gain, delay, doppler_hz: fd, target: 0 }
    }

    fn fmcw_echo(c: &SystemConfig, eff: &EffectiveChannel) -> ComplexSequence<f64> {
        let mut s = fmcw_generate::<f64>(c);
        let a = (1.0 - c.ofdm_power).sqrt();
        s.iter_mut().for_each(|z| *z *= a);
        propagate(&s, eff)
    }

    #[test]
    fn reference_is_the_chirp() {
        let c = cfg(0.0);
        let r = regenerate_path_reference::<f64>(0, 0.0, &c);
        assert_eq!(r, fmcw_generate::<f64>(&c));

        let c = cfg(0.3);
        let r = regenerate_path_reference::<f64>(5, 700.0, &c);
        let a = 0.7f64.sqrt();
        assert!(r.iter().all(|z| z.norm() == 0.0 || (z.norm() - a).abs() < 1e-12));
        let r0 = regenerate_path_reference::<f64>(0, 0.0, &c);
        let e: f64 = r0.iter().map(|z| z.norm_sqr()).sum();
        let want = 0.7 * (c.chirp_len() * c.symbols) as f64;
        assert!((e - want).abs() < 1e-6 * want);
    }

    #[test]
    fn single_path_is_recovered() {
        let c = cfg(0.0);
        let h = Complex::new(0.3, -0.8);
        let eff = EffectiveChannel { paths: vec![path(h, 9, 0.0)] };
        let y = fmcw_echo(&c, &eff);
        let est = sic_estimate(&y, &hints_from_channel(&eff), &c, EstimationMode::Successive).unwrap();
        assert!((est[0].gain - h).norm() < 1e-9);

        let rec = regenerate_fmcw_interference::<f64>(&est, &c);
        let res: f64 = y.iter().zip(rec.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let tot: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        assert!(res.sqrt() < 1e-8 * tot.sqrt());
    }

    #[test]
    fn two_paths_follow_the_projection_oracle() {
        // Chirp echoes at different delays are not exactly orthogonal; with
        // rho = <r2, r1> / |r1|^2 one pass gives h1 + rho h2 and
        // h2 (1 - |rho|^2 |r1|^2 / |r2|^2).
        let c = cfg(0.0);
        let fd = 800.0;
        let (h1, h2) = (Complex::new(1.0, 0.2), Complex::new(-0.3, 0.4));
        let eff = EffectiveChannel { paths: vec![path(h1, 4, fd), path(h2, 25, fd)] };
        let y = fmcw_echo(&c, &eff);
        let est = sic_estimate(&y, &hints_from_channel(&eff), &c, EstimationMode::Successive).unwrap();

        let r1 = regenerate_path_reference::<f64>(4, fd, &c);
        let r2 = regenerate_path_reference::<f64>(25, fd, &c);
        let e1: f64 = r1.iter().map(|z| z.norm_sqr()).sum();
        let e2: f64 = r2.iter().map(|z| z.norm_sqr()).sum();
        let rho: Complex<f64> = r2.iter().zip(r1.iter()).map(|(a, b)| a * b.conj()).sum::<Complex<f64>>() / e1;
        let want1 = h1 + h2 * rho;
        let want2 = h2 * (1.0 - rho.norm_sqr() * e1 / e2);
        assert!((est[0].gain - want1).norm() < 1e-9);
        assert!((est[1].gain - want2).norm() < 1e-9);
        assert!(rho.norm() < 0.02);
        assert!((est[0].gain - h1).norm() < 0.01 && (est[1].gain - h2).norm() < 0.01);
    }

    #[test]
    fn degenerate_reference() {
        let c = cfg(1.0);
        let y = vec![Complex::<f64>::default(); c.frame_len()];
        let hint = PathHint { delay: 3, doppler_hz: 0.0, amplitude: 1.0 };
        assert_eq!(
            sic_estimate(&y, &[hint], &c, EstimationMode::Successive),
            Err(Error::DegenerateReference { delay: 3 })
        );
    }

    #[test]
    fn successive_beats_one_shot_on_clusters() {
        let c = cfg(0.0);
        let one = Complex::new(1.0, 0.0);
        let t = Target::at_delay(&c, one, 12.4, 600.0);
        let eff = expand_effective(&[t], &c).unwrap();
        let y = fmcw_echo(&c, &eff);
        let hints = hints_from_channel(&eff);
        let sic = sic_estimate(&y, &hints, &c, EstimationMode::Successive).unwrap();
        let raw = sic_estimate(&y, &hints, &c, EstimationMode::OneShot).unwrap();
        let a = nmse_time(&sic, &eff, &c).unwrap();
        let b = nmse_time(&raw, &eff, &c).unwrap();
        assert!(a < b, "{a} vs {b}");
    }

    #[test]
    fn regenerated_interference_matches_channel() {
        let c = cfg(0.4);
        let t = [
            Target::at_delay(&c, Complex::new(1.0, 0.0), 10.3, 900.0),
            Target::at_delay(&c, Complex::new(0.0, 0.5), 22.8, -400.0),
        ];
        let eff = expand_effective(&t, &c).unwrap();
        let est: Vec<PathEstimate> = eff
            .paths
            .iter()
            .map(|p| PathEstimate { delay: p.delay, doppler_hz: p.doppler_hz, gain: p.gain, amplitude: 0.0 })
            .collect();
        let regen = regenerate_fmcw_interference::<f64>(&est, &c);
        let want = fmcw_echo(&c, &eff);
        for (a, b) in regen.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(regenerate_fmcw_interference::<f64>(&[], &c).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn flat_and_delayed_grids() {
        let c = cfg(0.5);
        let flat = reconstruct_freq_channel(
            &[PathEstimate { delay: 0, doppler_hz: 0.0, gain: Complex::new(1.0, 0.0), amplitude: 1.0 }],
            &c,
        );
        assert!(flat.cells.iter().all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-12));

        let l = 7;
        let g = reconstruct_freq_channel(
            &[PathEstimate { delay: l, doppler_hz: 0.0, gain: Complex::new(1.0, 0.0), amplitude: 1.0 }],
            &c,
        );
        let n = c.subcarriers;
        for k in [0, 1, 100, 511] {
            let z = g.at(3, k);
            assert!((z.norm() - 1.0).abs() < 1e-12);
            let want = Complex::from_polar(1.0, -2.0 * PI * (k * l) as f64 / n as f64);
            assert!((z - want).norm() < 1e-9);
        }
    }

    #[test]
    fn grid_matches_impulse_response_dft() {
        let c = cfg(0.5);
        let t = [
            Target::at_delay(&c, Complex::new(0.8, 0.1), 9.35, 0.0),
            Target::at_delay(&c, Complex::new(-0.2, 0.4), 21.6, 0.0),
        ];
        let eff = expand_effective(&t, &c).unwrap();
        let h = true_freq_channel(&eff, &c);
        let mut taps = vec![Complex::<f64>::default(); c.subcarriers];
        for p in &eff.paths {
            taps[p.delay] += p.gain;
        }
        let spectrum = dft(&taps, c.subcarriers).unwrap();
        for m in [0, c.symbols - 1] {
            for k in 0..c.subcarriers {
                assert!((h.at(m, k) - spectrum[k]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn nmse_identities() {
        let c = cfg(0.5);
        let eff = expand_effective(&[Target::at_delay(&c, Complex::new(1.0, 0.5), 11.2, 300.0)], &c).unwrap();
        let h = true_freq_channel(&eff, &c);
        let mask = c.active_mask();
        assert_eq!(nmse_freq(&h, &h, &mask).unwrap(), 0.0);
        assert!((nmse_freq(&FreqChannelGrid::zeros(&c), &h, &mask).unwrap() - 1.0).abs() < 1e-12);
        let mut scaled = h.clone();
        scaled.cells.iter_mut().for_each(|z| *z *= 1.1);
        assert!((nmse_freq(&scaled, &h, &mask).unwrap() - 0.01).abs() < 1e-9);
        assert!(matches!(
            nmse_freq(&h, &FreqChannelGrid::zeros(&c), &mask),
            Err(Error::UndefinedMetric(_))
        ));

        let exact: Vec<PathEstimate> = eff
            .paths
            .iter()
            .map(|p| PathEstimate { delay: p.delay, doppler_hz: p.doppler_hz, gain: p.gain, amplitude: 0.0 })
            .collect();
        assert_eq!(nmse_time(&exact, &eff, &c).unwrap(), 0.0);
        assert!((nmse_time(&[], &eff, &c).unwrap() - 1.0).abs() < 1e-12);
        let off: Vec<PathEstimate> = exact.iter().map(|p| PathEstimate { gain: p.gain * 1.1, ..*p }).collect();
        assert!((nmse_time(&off, &eff, &c).unwrap() - 0.01).abs() < 1e-9);
    }

    #[test]
    fn closed_form_rmse() {
        let mut c = cfg(0.0);
        assert_eq!(theoretical_rmse_h1(&c, 0.0).unwrap(), 0.0);
        c.ofdm_power = 1.0;
        assert!(theoretical_rmse_h1(&c, 0.1).is_err());
        c.ofdm_power = 0.893;
        let a = theoretical_rmse_h1(&c, 0.1).unwrap();
        c.symbols = 56;
        c.doppler_fft_len = 224;
        let b = theoretical_rmse_h1(&c, 0.1).unwrap();
        assert!(b < a);
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);

        // Direct evaluation for M = 28 at 12 dB.
        c.symbols = 28;
        let s2 = 10f64.powf(-1.2);
        let mna = 28.0 * 548.0;
        let want = ((548.0 / 476.0) * (512.0 / 388.0) * 0.893 / (0.107 * mna) + s2 / (0.107 * mna)).sqrt();
        assert!((theoretical_rmse_h1(&c, s2).unwrap() - want).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn reconstruction_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, d1 in 0usize..30, d2 in 0usize..30) {
            let c = cfg(0.5);
            let p1 = PathEstimate { delay: d1, doppler_hz: 200.0, gain: Complex::new(0.3, 0.1), amplitude: 0.0 };
            let p2 = PathEstimate { delay: d2, doppler_hz: -900.0, gain: Complex::new(-0.5, 0.7), amplitude: 0.0 };
            let both = reconstruct_freq_channel(
                &[PathEstimate { gain: p1.gain * a, ..p1 }, PathEstimate { gain: p2.gain * b, ..p2 }],
                &c,
            );
            let g1 = reconstruct_freq_channel(&[p1], &c);
            let g2 = reconstruct_freq_channel(&[p2], &c);
            for i in (0..both.cells.len()).step_by(97) {
                prop_assert!((both.cells[i] - (g1.cells[i] * a + g2.cells[i] * b)).norm() < 1e-9);
            }
        }
    }
}
