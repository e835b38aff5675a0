//! One Monte-Carlo trial: draw, transmit, sense, estimate, cancel, decode, score.

use cofmcw::baseline::{baseline_config, ce_based_sensing, df_based_sensing, estimate_channel, DmrsLayout};
use cofmcw::chanest::{
    freq_channel_at, hints_from_clusters, mid_symbol_offset, nmse_freq, nmse_time,
    regenerate_fmcw_interference, sic_estimate, EstimationMode, FreqChannelGrid, PathEstimate,
};
use cofmcw::channel::{apply_channel, draw_scenario, expand_effective, snr_to_sigma, EffectiveChannel, Target};
use cofmcw::dsp::ComplexSequence;
use cofmcw::ldpc::LdpcCode;
use cofmcw::rxchain::{
    ber, cancel_interference, decode_payload, encode_payload, equalize_and_demap, ofdm_demodulate, PayloadPlan,
};
use cofmcw::sensing::{
    cluster_pseudo_targets_clipped, default_guard, detect_peaks, dmd_rdm, fccr_fmcw, Detection, RangeDopplerMap,
    SensingMethod,
};
use cofmcw::waveform::{fmcw_generate, map_bits_qpsk, ofdm_modulate, random_bits, superpose, FrameGrid};
use cofmcw::{Error, SystemConfig};
use num_complex::Complex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StageExt};
use crate::scenario::{IcMode, Mode, ScenarioSpec};

/// A detection farther than this many resolution cells from its target is a miss.
pub const MISS_CELLS: f64 = 5.0;

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scenario = 0,
    Payload = 1,
    Noise = 2,
    Pilots = 3,
}

/// Sub-seed for `(master, trial, stream)`, taken from a dedicated ChaCha stream.
///
/// Every cell of a sweep uses the same sub-seeds for a given trial index, so
/// cells are paired: same targets, payload and unit-variance noise.
pub fn derive_seed(master: u64, trial: usize, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial as u64) << 4 | stream as u64);
    rng.next_u64()
}

/// One point of a sweep. `mode` is `None` for the DMRS baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_db: f64,
    pub method: SensingMethod,
    pub mode: Option<Mode>,
}

impl Cell {
    pub fn mode_name(&self) -> String {
        self.mode.map_or_else(|| "dmrs".to_string(), |m| m.to_string())
    }
}

/// Sensing outcome for one true target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOutcome {
    /// Estimated minus true range; NaN when missed.
    pub range_error_m: f64,
    /// Estimated minus true speed; NaN when missed.
    pub speed_error_mps: f64,
    pub missed: bool,
}

/// Everything measured in one trial. Metrics a method cannot produce are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub targets: Vec<TargetOutcome>,
    pub nmse_time: Option<f64>,
    pub nmse_freq: Option<f64>,
    pub ber_uncoded: f64,
    pub ber_coded: Option<f64>,
}

struct Draw {
    targets: Vec<Target>,
    eff: EffectiveChannel,
    sigma2: f64,
    noise_seed: u64,
    payload: ChaCha8Rng,
}

fn draw(spec: &ScenarioSpec, snr_db: f64, trial: usize) -> Result<Draw> {
    let cfg = &spec.system;
    let targets = draw_scenario(&spec.target_specs(), cfg, derive_seed(spec.seed, trial, Stream::Scenario))
        .stage("scenario")?;
    let eff = expand_effective(&targets, cfg).stage("channel")?;
    Ok(Draw {
        targets,
        eff,
        sigma2: snr_to_sigma(snr_db),
        noise_seed: derive_seed(spec.seed, trial, Stream::Noise),
        payload: ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, trial, Stream::Payload)),
    })
}

/// Matches detections to targets one-to-one by nearest range.
pub fn associate(targets: &[Target], dets: &[Detection], cfg: &SystemConfig) -> Vec<TargetOutcome> {
    let ts = cfg.sample_period();
    let truth: Vec<(f64, f64)> = targets
        .iter()
        .map(|t| (cfg.range_of_delay(t.delay_s), t.doppler_hz))
        .collect();
    let est: Vec<(f64, f64)> = dets
        .iter()
        .map(|d| (cfg.range_of_delay(d.delay * ts), d.doppler_hz))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(truth.len() * est.len());
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            pairs.push(((e.0 - t.0).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut match_of = vec![None; truth.len()];
    let mut used = vec![false; est.len()];
    for (_, i, j) in pairs {
        if match_of[i].is_none() && !used[j] {
            match_of[i] = Some(j);
            used[j] = true;
        }
    }
    let span = cfg.doppler_resolution() * cfg.doppler_fft_len as f64;
    truth
        .iter()
        .zip(match_of)
        .map(|(t, m)| {
            let missed = TargetOutcome {
                range_error_m: f64::NAN,
                speed_error_mps: f64::NAN,
                missed: true,
            };
            let Some(j) = m else { return missed };
            let dr = est[j].0 - t.0;
            let fd = (est[j].1 - t.1 + span / 2.0).rem_euclid(span) - span / 2.0;
            if dr.abs() > MISS_CELLS * cfg.range_resolution() || fd.abs() > MISS_CELLS * cfg.doppler_resolution() {
                return missed;
            }
            TargetOutcome {
                range_error_m: dr,
                speed_error_mps: cfg.speed_of_doppler(fd),
                missed: false,
            }
        })
        .collect()
}

fn detect(rdm: &RangeDopplerMap, n: usize, cfg: &SystemConfig) -> Result<Vec<Detection>> {
    match detect_peaks(rdm, n, default_guard(cfg)) {
        Ok(d) => Ok(d),
        Err(Error::DetectionExhausted { .. }) => Ok(Vec::new()),
        Err(e) => Err(e).stage("detection"),
    }
}

fn channel_grid(paths: impl IntoIterator<Item = (Complex<f64>, usize, f64)>, cfg: &SystemConfig) -> FreqChannelGrid {
    freq_channel_at(paths, cfg, mid_symbol_offset(cfg))
}

fn true_paths(eff: &EffectiveChannel) -> Vec<PathEstimate> {
    eff.paths
        .iter()
        .map(|p| PathEstimate {
            delay: p.delay,
            doppler_hz: p.doppler_hz,
            gain: p.gain,
            amplitude: p.gain.norm(),
        })
        .collect()
}

struct CoFrame {
    y: ComplexSequence<f64>,
    plan: PayloadPlan,
    info: Vec<u8>,
    coded: Vec<u8>,
}

fn cofmcw_frame(spec: &ScenarioSpec, d: &mut Draw) -> Result<CoFrame> {
    let cfg = &spec.system;
    let code = LdpcCode::standard();
    let plan = PayloadPlan::new(code, 2 * cfg.active_subcarriers * cfg.symbols).stage("payload")?;
    let info = random_bits(&mut d.payload, plan.info_len());
    let filler = random_bits(&mut d.payload, plan.filler_len());
    let coded = encode_payload(code, &plan, &info, &filler).stage("encode")?;
    let grid = FrameGrid::from_data(cfg, &map_bits_qpsk(&coded).stage("map")?).stage("map")?;
    let ofdm = ofdm_modulate(&grid, cfg).stage("modulate")?;
    let x = superpose(&ofdm, &fmcw_generate(cfg), cfg.ofdm_power).stage("superpose")?;
    let y = apply_channel(&x, &d.eff, d.sigma2, d.noise_seed).stage("channel")?;
    Ok(CoFrame { y, plan, info, coded })
}

fn cofmcw_rdm(y: &ComplexSequence<f64>, method: SensingMethod, cfg: &SystemConfig) -> Result<RangeDopplerMap> {
    match method {
        SensingMethod::Fccr => fccr_fmcw(y, cfg),
        SensingMethod::Dmd => dmd_rdm(y, cfg),
        other => Err(Error::PreconditionViolation(format!("{other} is not an FMCW sensing method"))),
    }
    .stage("sensing")
}

fn run_cofmcw(spec: &ScenarioSpec, cell: &Cell, mode: Mode, trial: usize) -> Result<TrialResult> {
    let cfg = &spec.system;
    let mut d = draw(spec, cell.snr_db, trial)?;
    let frame = cofmcw_frame(spec, &mut d)?;
    let rdm = cofmcw_rdm(&frame.y, cell.method, cfg)?;
    let dets = detect(&rdm, d.targets.len(), cfg)?;
    let outcomes = associate(&d.targets, &dets, cfg);

    let hints = hints_from_clusters(&cluster_pseudo_targets_clipped(&dets, &rdm, cfg.tap_half_width));
    let estimator = if mode.sic {
        EstimationMode::Successive
    } else {
        EstimationMode::OneShot
    };
    let est = sic_estimate(&frame.y, &hints, cfg, estimator).stage("estimation")?;
    let h_hat = channel_grid(est.iter().map(|p| (p.gain, p.delay, p.doppler_hz)), cfg);
    let h_true = channel_grid(d.eff.paths.iter().map(|p| (p.gain, p.delay, p.doppler_hz)), cfg);

    let regen = match mode.ic {
        IcMode::Perfect => regenerate_fmcw_interference::<f64>(&true_paths(&d.eff), cfg),
        IcMode::Actual => regenerate_fmcw_interference::<f64>(&est, cfg),
        IcMode::None => ComplexSequence::zeros(cfg.frame_len(), cfg.sample_period()),
    };
    let yi = cancel_interference(&frame.y, &regen).stage("cancellation")?;
    let grid = ofdm_demodulate(&yi, cfg).stage("demodulation")?;
    let soft = equalize_and_demap(&grid, &h_hat, cfg, d.sigma2, spec.equalizer).stage("equalization")?;
    let ber_uncoded = ber(&frame.coded, &soft.hard_bits()).stage("ber")?;
    let ber_coded = if spec.coded {
        let decoded = decode_payload(LdpcCode::standard(), &frame.plan, &soft.llrs()).stage("decode")?;
        Some(ber(&frame.info, &decoded).stage("ber")?)
    } else {
        None
    };
    Ok(TrialResult {
        trial,
        seed: spec.seed,
        targets: outcomes,
        nmse_time: nmse_time(&est, &d.eff, cfg).ok(),
        nmse_freq: nmse_freq(&h_hat, &h_true, &cfg.active_mask()).ok(),
        ber_uncoded,
        ber_coded,
    })
}

struct BaselineRx {
    cfg: SystemConfig,
    layout: DmrsLayout,
    plan: PayloadPlan,
    info: Vec<u8>,
    coded: Vec<u8>,
    y: ComplexSequence<f64>,
    h_hat: FreqChannelGrid,
    llrs: Vec<f64>,
    hard: Vec<u8>,
}

/// Transmits a DMRS frame through the drawn channel and equalizes it with
/// the interpolated pilot estimate.
fn baseline_receive(spec: &ScenarioSpec, d: &mut Draw, trial: usize) -> Result<BaselineRx> {
    let cfg = baseline_config(&spec.system);
    let code = LdpcCode::standard();
    let layout = DmrsLayout::new(&cfg, derive_seed(spec.seed, trial, Stream::Pilots)).stage("pilots")?;
    let plan = PayloadPlan::new(code, 2 * layout.data_cells()).stage("payload")?;
    let info = random_bits(&mut d.payload, plan.info_len());
    let filler = random_bits(&mut d.payload, plan.filler_len());
    let coded = encode_payload(code, &plan, &info, &filler).stage("encode")?;
    let grid = layout
        .assemble(&cfg, &map_bits_qpsk(&coded).stage("map")?)
        .stage("map")?;
    let x = ofdm_modulate(&grid, &cfg).stage("modulate")?;
    let y = apply_channel(&x, &d.eff, d.sigma2, d.noise_seed).stage("channel")?;
    let rx_grid = ofdm_demodulate(&y, &cfg).stage("demodulation")?;
    let h_hat = estimate_channel(&rx_grid, &layout, &cfg).stage("estimation")?;
    let soft = equalize_and_demap(&rx_grid, &h_hat, &cfg, d.sigma2, spec.equalizer).stage("equalization")?;
    let data = layout.extract_data(&soft.cells).stage("equalization")?;
    let llrs: Vec<f64> = data.iter().flat_map(|c| c.llr).collect();
    let hard = llrs.iter().map(|l| u8::from(*l < 0.0)).collect();
    Ok(BaselineRx {
        cfg,
        layout,
        plan,
        info,
        coded,
        y,
        h_hat,
        llrs,
        hard,
    })
}

/// Baseline RDM; decision feedback needs the decoded payload.
fn baseline_rdm(rx: &BaselineRx, method: SensingMethod, decoded: Option<&[u8]>) -> Result<RangeDopplerMap> {
    match (method, decoded) {
        (SensingMethod::Ce, _) => ce_based_sensing(&rx.h_hat, &rx.cfg).stage("sensing"),
        (SensingMethod::Df, Some(decoded)) => {
            let filler = &rx.hard[rx.plan.coded_len()..];
            let rebuilt = encode_payload(LdpcCode::standard(), &rx.plan, decoded, filler).stage("re-encode")?;
            df_based_sensing(&rx.y, &rx.layout, &rebuilt, &rx.cfg).stage("sensing")
        }
        (other, _) => Err(Error::PreconditionViolation(format!(
            "{other} is not a DMRS baseline method or lacks decoded data"
        )))
        .stage("sensing"),
    }
}

fn run_baseline(spec: &ScenarioSpec, cell: &Cell, trial: usize) -> Result<TrialResult> {
    let mut d = draw(spec, cell.snr_db, trial)?;
    let rx = baseline_receive(spec, &mut d, trial)?;
    let cfg = &rx.cfg;
    let h_true = channel_grid(d.eff.paths.iter().map(|p| (p.gain, p.delay, p.doppler_hz)), cfg);
    let ber_uncoded = ber(&rx.coded, &rx.hard).stage("ber")?;
    let decoded = if spec.coded || cell.method == SensingMethod::Df {
        Some(decode_payload(LdpcCode::standard(), &rx.plan, &rx.llrs).stage("decode")?)
    } else {
        None
    };
    let rdm = baseline_rdm(&rx, cell.method, decoded.as_deref())?;
    let dets = detect(&rdm, d.targets.len(), cfg)?;
    let ber_coded = match (&decoded, spec.coded) {
        (Some(dec), true) => Some(ber(&rx.info, dec).stage("ber")?),
        _ => None,
    };
    Ok(TrialResult {
        trial,
        seed: spec.seed,
        targets: associate(&d.targets, &dets, cfg),
        nmse_time: None,
        nmse_freq: nmse_freq(&rx.h_hat, &h_true, &cfg.active_mask()).ok(),
        ber_uncoded,
        ber_coded,
    })
}

/// Runs trial `trial` of `cell`. Deterministic in `(spec.seed, trial)`.
pub fn run_trial(spec: &ScenarioSpec, cell: &Cell, trial: usize) -> Result<TrialResult> {
    match (cell.method, cell.mode) {
        (SensingMethod::Fccr | SensingMethod::Dmd, Some(mode)) => run_cofmcw(spec, cell, mode, trial),
        (SensingMethod::Ce | SensingMethod::Df, _) => run_baseline(spec, cell, trial),
        (method, None) => Err(Error::InvalidArgument(format!("{method} needs an interference mode"))).stage("setup"),
    }
}

/// RDM of one trial, for export.
pub fn single_shot_rdm(spec: &ScenarioSpec, method: SensingMethod, snr_db: f64, trial: usize) -> Result<RangeDopplerMap> {
    match method {
        SensingMethod::Fccr | SensingMethod::Dmd => {
            let mut d = draw(spec, snr_db, trial)?;
            let frame = cofmcw_frame(spec, &mut d)?;
            cofmcw_rdm(&frame.y, method, &spec.system)
        }
        SensingMethod::Ce | SensingMethod::Df => {
            let mut d = draw(spec, snr_db, trial)?;
            let rx = baseline_receive(spec, &mut d, trial)?;
            let decoded = if method == SensingMethod::Df {
                Some(decode_payload(LdpcCode::standard(), &rx.plan, &rx.llrs).stage("decode")?)
            } else {
                None
            };
            baseline_rdm(&rx, method, decoded.as_deref())
        }
    }
}
