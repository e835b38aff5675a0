//! Transforms, correlation, FIR filtering and pulse shaping.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::num::Real;

/// Complex baseband samples taken every `sample_period` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence<T> {
    pub samples: Vec<Complex<T>>,
    pub sample_period: f64,
}

impl<T: Real> ComplexSequence<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_period: f64) -> Result<Self> {
        if !(sample_period > 0.0) {
            return Err(Error::invalid(format!(
                "sample period {sample_period} must be positive"
            )));
        }
        Ok(ComplexSequence {
            samples,
            sample_period,
        })
    }

    pub fn zeros(len: usize, sample_period: f64) -> Self {
        ComplexSequence {
            samples: vec![Complex::default(); len],
            sample_period,
        }
    }

    /// Mean of `|x(n)|^2` in double precision.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        crate::num::energy(&self.samples) / self.samples.len() as f64
    }
}

impl<T> Deref for ComplexSequence<T> {
    type Target = [Complex<T>];

    fn deref(&self) -> &Self::Target {
        &self.samples
    }
}

impl<T> DerefMut for ComplexSequence<T> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.samples
    }
}

/// Forward and inverse plans of one transform size.
///
/// Plans are cheap to clone and can be shared between threads.
#[derive(Clone)]
pub struct FftPair<T: Real> {
    size: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> FftPair<T> {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("transform size must be positive"));
        }
        let mut planner = FftPlanner::new();
        Ok(FftPair {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place `e^{-j 2 pi n k / size}` transform, unscaled.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.size);
        self.forward.process(buf);
    }

    /// In-place `e^{+j 2 pi n k / size}` transform, unscaled.
    pub fn inverse_unscaled(&self, buf: &mut [Complex<T>]) {
        debug_assert_eq!(buf.len(), self.size);
        self.inverse.process(buf);
    }

    /// In-place inverse transform with `1 / size` scaling.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inverse_unscaled(buf);
        let s = T::one() / T::of(self.size as f64);
        for z in buf.iter_mut() {
            *z = *z * s;
        }
    }
}

impl<T: Real> std::fmt::Debug for FftPair<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("size", &self.size).finish()
    }
}

fn padded<T: Real>(x: &[Complex<T>], size: usize) -> Result<Vec<Complex<T>>> {
    if size == 0 {
        return Err(Error::invalid("transform size must be positive"));
    }
    if x.len() > size {
        return Err(Error::invalid(format!(
            "input length {} exceeds transform size {size}",
            x.len()
        )));
    }
    let mut buf = x.to_vec();
    buf.resize(size, Complex::default());
    Ok(buf)
}

/// `size`-point DFT of `x` zero-padded to `size`.
pub fn dft<T: Real>(x: &[Complex<T>], size: usize) -> Result<Vec<Complex<T>>> {
    let mut buf = padded(x, size)?;
    FftPair::new(size)?.forward(&mut buf);
    Ok(buf)
}

/// Inverse of [`dft`], including the `1 / size` factor.
pub fn idft<T: Real>(x: &[Complex<T>], size: usize) -> Result<Vec<Complex<T>>> {
    let mut buf = padded(x, size)?;
    FftPair::new(size)?.inverse(&mut buf);
    Ok(buf)
}

/// `r(n) = sum_l y(l) conj(s(<l - n>_N))`, computed through the frequency domain.
pub fn cyclic_correlate<T: Real>(y: &[Complex<T>], s: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if y.len() != s.len() {
        return Err(Error::invalid(format!(
            "cyclic correlation needs equal lengths, got {} and {}",
            y.len(),
            s.len()
        )));
    }
    let plan = FftPair::new(y.len())?;
    let mut s_f = s.to_vec();
    plan.forward(&mut s_f);
    let mut out = y.to_vec();
    cyclic_correlate_with(&plan, &mut out, &s_f);
    Ok(out)
}

/// Correlates `buf` in place against a reference whose DFT is `ref_spectrum`.
pub(crate) fn cyclic_correlate_with<T: Real>(
    plan: &FftPair<T>,
    buf: &mut [Complex<T>],
    ref_spectrum: &[Complex<T>],
) {
    plan.forward(buf);
    for (z, r) in buf.iter_mut().zip(ref_spectrum) {
        *z = *z * r.conj();
    }
    plan.inverse(buf);
}

/// Raised-cosine pulse `g(t)` with roll-off `beta` and symbol period `ts`.
pub fn raised_cosine(t: f64, beta: f64, ts: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("roll-off {beta} outside [0, 1]")));
    }
    if !(ts > 0.0) {
        return Err(Error::invalid(format!("period {ts} must be positive")));
    }
    let x = (t / ts).abs();
    if x == 0.0 {
        return Ok(1.0);
    }
    let u = 2.0 * beta * x;
    if beta > 0.0 && (u - 1.0).abs() < 1e-12 {
        return Ok(PI / 4.0 * sinc(1.0 / (2.0 * beta)));
    }
    Ok(sinc(x) * (PI * beta * x).cos() / (1.0 - u * u))
}

/// [`raised_cosine`] forced to zero outside `|t| <= half_width * ts`.
pub fn raised_cosine_truncated(t: f64, beta: f64, ts: f64, half_width: usize) -> Result<f64> {
    let g = raised_cosine(t, beta, ts)?;
    if t.abs() > half_width as f64 * ts {
        Ok(0.0)
    } else {
        Ok(g)
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Real FIR coefficients `lambda_1 .. lambda_{N_F}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps<T> {
    pub coefficients: Vec<T>,
}

impl<T: Real> FilterTaps<T> {
    pub fn new(coefficients: Vec<T>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("filter needs at least one tap"));
        }
        Ok(FilterTaps { coefficients })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn dc_gain(&self) -> f64 {
        self.coefficients.iter().map(|c| c.as_f64()).sum()
    }

    /// Magnitude of the frequency response at `f` cycles per sample.
    pub fn magnitude_at(&self, f: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(l, c)| Complex::from_polar(c.as_f64(), -2.0 * PI * f * l as f64))
            .sum::<Complex<f64>>()
            .norm()
    }

    pub fn cast<U: Real>(&self) -> FilterTaps<U> {
        FilterTaps {
            coefficients: self.coefficients.iter().map(|c| U::of(c.as_f64())).collect(),
        }
    }
}

/// Causal filter `out(n) = sum_{l=1}^{N_F} lambda_l x(n - l)`, zero history.
///
/// The first tap multiplies the previous input sample, so the output is one
/// sample later than a conventional `l = 0` convolution.
pub fn fir_filter<T: Real>(x: &[Complex<T>], taps: &FilterTaps<T>) -> Result<Vec<Complex<T>>> {
    if taps.is_empty() {
        return Err(Error::invalid("filter needs at least one tap"));
    }
    Ok((0..x.len()).map(|n| fir_output_at(x, taps, n)).collect())
}

/// One output sample of [`fir_filter`].
#[inline]
pub fn fir_output_at<T: Real>(x: &[Complex<T>], taps: &FilterTaps<T>, n: usize) -> Complex<T> {
    let mut acc = Complex::<T>::default();
    for (i, c) in taps.coefficients.iter().enumerate() {
        let l = i + 1;
        if l > n {
            break;
        }
        acc += x[n - l] * *c;
    }
    acc
}

/// Hamming-windowed sinc low-pass with unit DC gain.
pub fn design_lowpass(cutoff: f64, n_taps: usize) -> Result<FilterTaps<f64>> {
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::invalid(format!("cutoff {cutoff} outside (0, 0.5)")));
    }
    if n_taps == 0 || n_taps % 2 == 0 {
        return Err(Error::invalid(format!("tap count {n_taps} must be odd")));
    }
    if n_taps == 1 {
        return FilterTaps::new(vec![1.0]);
    }
    let mid = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let x = i as f64 - mid;
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n_taps - 1) as f64).cos();
            2.0 * cutoff * sinc(2.0 * cutoff * x) * w
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= gain;
    }
    FilterTaps::new(taps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
        (0..n)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn direct_dft(x: &[Complex<f64>], size: usize) -> Vec<Complex<f64>> {
        (0..size)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(n, v)| v * Complex::from_polar(1.0, -2.0 * PI * (n * k) as f64 / size as f64))
                    .sum()
            })
            .collect()
    }

    fn max_rel_err(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn dft_of_impulse_and_constant() {
        let one = Complex::new(1.0f64, 0.0);
        let zero = Complex::new(0.0, 0.0);
        let x = dft(&[one, zero, zero, zero], 4).unwrap();
        assert!(x.iter().all(|z| (z - one).norm() < 1e-15));
        let x = dft(&[one; 4], 4).unwrap();
        assert!((x[0] - 4.0 * one).norm() < 1e-15);
        assert!(x[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn dft_rejects_zero_size() {
        assert!(dft::<f64>(&[], 0).is_err());
    }

    #[test]
    fn dft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [64, 63, 110, 97] {
            let x = random_seq(&mut rng, n);
            assert!(max_rel_err(&dft(&x, n).unwrap(), &direct_dft(&x, n)) < 1e-10);
        }
    }

    #[test]
    fn dft_zero_pads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_seq(&mut rng, 20);
        let mut padded = x.clone();
        padded.resize(32, Complex::default());
        assert!(max_rel_err(&dft(&x, 32).unwrap(), &direct_dft(&padded, 32)) < 1e-12);
    }

    #[test]
    fn round_trip_up_to_8192() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 7, 440, 4384, 8192] {
            let x = random_seq(&mut rng, n);
            let y = idft(&dft(&x, n).unwrap(), n).unwrap();
            assert!(max_rel_err(&y, &x) < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn cyclic_correlation_examples() {
        let one = Complex::new(1.0, 0.0);
        let zero = Complex::default();
        let r = cyclic_correlate(&[one, zero, zero, zero], &[one, zero, zero, zero]).unwrap();
        assert!((r[0] - one).norm() < 1e-15);
        assert!(r[1..].iter().all(|z| z.norm() < 1e-15));

        let s: Vec<Complex<f64>> = (0..8).map(|i| Complex::from_polar(1.0, 0.7 * (i * i) as f64)).collect();
        let y: Vec<Complex<f64>> = (0..8).map(|l| s[(l + 8 - 3) % 8]).collect();
        let r = cyclic_correlate(&y, &s).unwrap();
        let (arg, peak) = r
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(arg, 3);
        assert!((peak.norm() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_correlation_rejects_mismatch() {
        let a = vec![Complex::new(1.0, 0.0); 4];
        let b = vec![Complex::new(1.0, 0.0); 5];
        assert!(cyclic_correlate(&a, &b).is_err());
    }

    #[test]
    fn raised_cosine_nyquist_zeros() {
        let ts = 1e-6;
        for beta in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(raised_cosine(0.0, beta, ts).unwrap(), 1.0);
            for k in 1..6 {
                let t = k as f64 * ts;
                let g = raised_cosine(t, beta, ts).unwrap();
                assert!(g.abs() < 1e-12, "beta {beta} k {k} g {g}");
            }
        }
    }

    #[test]
    fn raised_cosine_singularity_is_continuous() {
        let (beta, ts) = (0.25, 1.0);
        let t0 = ts / (2.0 * beta);
        let at = raised_cosine(t0, beta, ts).unwrap();
        let lo = raised_cosine(t0 * (1.0 - 1e-8), beta, ts).unwrap();
        let hi = raised_cosine(t0 * (1.0 + 1e-8), beta, ts).unwrap();
        assert!((at - lo).abs() < 1e-6 && (at - hi).abs() < 1e-6);
    }

    #[test]
    fn raised_cosine_rejects_bad_rolloff() {
        assert!(raised_cosine(0.1, 1.5, 1.0).is_err());
        assert!(raised_cosine(0.1, -0.1, 1.0).is_err());
    }

    #[test]
    fn truncation_zeroes_tails() {
        assert_eq!(raised_cosine_truncated(2.5, 0.25, 1.0, 2).unwrap(), 0.0);
        assert!(raised_cosine_truncated(1.5, 0.25, 1.0, 2).unwrap() != 0.0);
    }

    #[test]
    fn fir_single_tap_delays() {
        let x: Vec<Complex<f64>> = (1..=5).map(|i| Complex::new(i as f64, 0.0)).collect();
        let y = fir_filter(&x, &FilterTaps::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(y[0], Complex::default());
        for n in 1..5 {
            assert_eq!(y[n], x[n - 1]);
        }
    }

    #[test]
    fn fir_dc_settles() {
        let taps = design_lowpass(0.1, 63).unwrap();
        let x = vec![Complex::new(2.0, -1.0); 200];
        let y = fir_filter(&x, &taps).unwrap();
        for z in &y[63..] {
            assert!((z - Complex::new(2.0, -1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fir_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_seq(&mut rng, 128);
        let c: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = fir_filter(&x, &FilterTaps::new(c.clone()).unwrap()).unwrap();
        for n in 0..x.len() {
            let mut acc = Complex::<f64>::default();
            for l in 1..=16usize {
                if n >= l {
                    acc += x[n - l] * c[l - 1];
                }
            }
            assert!((acc - y[n]).norm() < 1e-10);
        }
    }

    #[test]
    fn lowpass_design() {
        assert_eq!(design_lowpass(0.25, 1).unwrap().coefficients, vec![1.0]);
        let taps = design_lowpass(0.1, 63).unwrap();
        assert!((taps.magnitude_at(0.0) - 1.0).abs() < 1e-12);
        assert!(20.0 * taps.magnitude_at(0.3).log10() < -40.0);
        assert!(design_lowpass(0.5, 63).is_err());
        assert!(design_lowpass(0.1, 64).is_err());
    }

    #[test]
    fn single_precision_tracks_double() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_seq(&mut rng, 256);
        let x32: Vec<Complex<f32>> = x.iter().map(|z| Complex::new(z.re as f32, z.im as f32)).collect();
        let a = dft(&x, 256).unwrap();
        let b = dft(&x32, 256).unwrap();
        let b64: Vec<Complex<f64>> = b.iter().map(|z| Complex::new(z.re as f64, z.im as f64)).collect();
        assert!(max_rel_err(&b64, &a) < 1e-5);
    }

    proptest! {
        #[test]
        fn parseval(seed in any::<u64>(), n in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_seq(&mut rng, n);
            let e_t: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let e_f: f64 = dft(&x, n).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((e_t - e_f).abs() <= 1e-9 * e_t.max(1e-300));
        }

        #[test]
        fn correlation_lag_zero_is_inner_product(seed in any::<u64>(), n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_seq(&mut rng, n);
            let s = random_seq(&mut rng, n);
            let r = cyclic_correlate(&y, &s).unwrap();
            let ip: Complex<f64> = y.iter().zip(&s).map(|(a, b)| a * b.conj()).sum();
            prop_assert!((r[0] - ip).norm() <= 1e-9 * ip.norm().max(1.0));
        }

        #[test]
        fn raised_cosine_even(t in -10.0f64..10.0, beta in 0.0f64..=1.0) {
            prop_assert_eq!(raised_cosine(t, beta, 1.0).unwrap(), raised_cosine(-t, beta, 1.0).unwrap());
        }

        #[test]
        fn fir_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_seq(&mut rng, 64);
            let y = random_seq(&mut rng, 64);
            let taps = FilterTaps::new((0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let mix: Vec<Complex<f64>> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
            let lhs = fir_filter(&mix, &taps).unwrap();
            let fx = fir_filter(&x, &taps).unwrap();
            let fy = fir_filter(&y, &taps).unwrap();
            for n in 0..64 {
                prop_assert!((lhs[n] - (fx[n] * a + fy[n] * b)).norm() < 1e-10);
            }
        }
    }
}
