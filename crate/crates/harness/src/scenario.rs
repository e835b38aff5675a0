//! Scenario files: link parameters, target distributions and the sweep grid.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cofmcw::baseline::SLOT_LEN;
use cofmcw::channel::{expand_effective, kmh_to_mps, Interval, Target, TargetSpec};
use cofmcw::rxchain::Equalizer;
use cofmcw::sensing::SensingMethod;
use cofmcw::SystemConfig;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// How the chirp interference is removed before OFDM demodulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IcMode {
    /// Subtract the chirp regenerated from the true channel.
    Perfect,
    /// Subtract the chirp regenerated from the estimated channel.
    Actual,
    /// Leave the chirp in place.
    None,
}

/// Interference handling combined with the path-coefficient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Mode {
    pub ic: IcMode,
    /// Successive cancellation between path estimates, or one-shot correlation.
    pub sic: bool,
}

impl Mode {
    pub const ACTUAL_SIC: Mode = Mode {
        ic: IcMode::Actual,
        sic: true,
    };
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ic = match self.ic {
            IcMode::Perfect => "perfect-ic",
            IcMode::Actual => "actual-ic",
            IcMode::None => "no-ic",
        };
        write!(f, "{ic}+{}", if self.sic { "sic" } else { "nosic" })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (ic, est) = s
            .split_once('+')
            .ok_or_else(|| format!("mode {s:?} is not of the form <ic>+<estimator>"))?;
        let ic = match ic {
            "perfect-ic" => IcMode::Perfect,
            "actual-ic" => IcMode::Actual,
            "no-ic" => IcMode::None,
            other => return Err(format!("unknown interference mode {other:?}")),
        };
        let sic = match est {
            "sic" => true,
            "nosic" => false,
            other => return Err(format!("unknown estimator {other:?}")),
        };
        Ok(Mode { ic, sic })
    }
}

impl TryFrom<String> for Mode {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

/// One target distribution. Speeds are given in exactly one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub power_db: f64,
    pub range_m: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_kmh: Option<[f64; 2]>,
}

impl TargetConfig {
    pub fn kmh(power_db: f64, range_m: [f64; 2], speed_kmh: [f64; 2]) -> Self {
        TargetConfig {
            power_db,
            range_m,
            speed_mps: None,
            speed_kmh: Some(speed_kmh),
        }
    }

    fn speed_interval(&self) -> std::result::Result<Interval, String> {
        match (self.speed_mps, self.speed_kmh) {
            (Some([lo, hi]), None) => Ok(Interval::new(lo, hi)),
            (None, Some([lo, hi])) => Ok(Interval::new(kmh_to_mps(lo), kmh_to_mps(hi))),
            _ => Err("give exactly one of speed_mps or speed_kmh".into()),
        }
    }

    pub fn to_spec(&self) -> std::result::Result<TargetSpec, String> {
        Ok(TargetSpec {
            power_db: self.power_db,
            range_m: Interval::new(self.range_m[0], self.range_m[1]),
            speed_mps: self.speed_interval()?,
        })
    }
}

fn default_methods() -> Vec<SensingMethod> {
    vec![SensingMethod::Fccr]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::ACTUAL_SIC]
}

fn yes() -> bool {
    true
}

/// A Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Master seed; every random draw of every trial derives from it.
    pub seed: u64,
    pub trials: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<SensingMethod>,
    /// Modes for the FMCW-based methods; DMRS baselines ignore them.
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub equalizer: Equalizer,
    /// Run the LDPC decoder and report coded BER.
    #[serde(default = "yes")]
    pub coded: bool,
    pub system: SystemConfig,
    pub targets: Vec<TargetConfig>,
}

impl ScenarioSpec {
    pub fn target_specs(&self) -> Vec<TargetSpec> {
        self.targets
            .iter()
            .map(|t| t.to_spec().expect("validated"))
            .collect()
    }

    /// Checks everything a trial relies on, so runs fail before they start.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(format!("name {:?} must be non-empty and contain no path separators", self.name));
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err("snr_db must be a non-empty list of finite values".into());
        }
        if self.methods.is_empty() {
            return Err("methods must not be empty".into());
        }
        if self.modes.is_empty() {
            return Err("modes must not be empty".into());
        }
        if self.targets.is_empty() {
            return Err("at least one target is required".into());
        }
        self.system.validate().map_err(|e| format!("system: {e}"))?;
        let baseline = self
            .methods
            .iter()
            .any(|m| matches!(m, SensingMethod::Ce | SensingMethod::Df));
        if baseline && self.system.symbols % SLOT_LEN != 0 {
            return Err(format!(
                "DMRS baselines need a multiple of {SLOT_LEN} symbols, got {}",
                self.system.symbols
            ));
        }
        for (i, t) in self.targets.iter().enumerate() {
            let spec = t.to_spec().map_err(|e| format!("target {i}: {e}"))?;
            for (what, iv) in [("range_m", spec.range_m), ("speed", spec.speed_mps)] {
                if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                    return Err(format!("target {i}: {what} interval [{}, {}] is empty", iv.lo, iv.hi));
                }
            }
            if !t.power_db.is_finite() {
                return Err(format!("target {i}: power_db must be finite"));
            }
            for r in [spec.range_m.lo, spec.range_m.hi] {
                let probe = Target::new(&self.system, Complex::new(1.0, 0.0), r, 0.0);
                expand_effective(&[probe], &self.system)
                    .map_err(|e| format!("target {i}: range {r} m: {e}"))?;
            }
        }
        Ok(())
    }

    /// Parses and validates TOML text; `origin` names the source in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| HarnessError::config(origin, e.to_string()))?;
        spec.validate().map_err(|e| HarnessError::config(origin, e))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(&origin, format!("cannot read: {e}")))?;
        Self::from_toml(&text, &origin)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

pub const PRESET_NAMES: [&str; 9] = [
    "full-ref", "full-a", "full-b", "full-1", "full-2", "desk-a", "desk-b", "desk-1", "desk-2",
];

const RANGE_1: [f64; 2] = [48.8, 244.14];
const RANGE_2: [f64; 2] = [146.48, 341.79];

/// Speed interval in km/h of each named scenario.
fn scenario_speed(tag: &str) -> Option<[f64; 2]> {
    Some(match tag {
        "a" => [45.7, 91.5],
        "b" => [228.8, 274.5],
        "1" => [22.88, 45.76],
        "2" => [45.76, 68.64],
        _ => return None,
    })
}

/// Two targets at 0 dB and -6 dB with the reference ranges and a shared speed interval.
pub fn two_targets(speed_kmh: [f64; 2]) -> Vec<TargetConfig> {
    vec![
        TargetConfig::kmh(0.0, RANGE_1, speed_kmh),
        TargetConfig::kmh(-6.0, RANGE_2, speed_kmh),
    ]
}

/// Built-in scenarios by name.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    if name == "full-ref" {
        return Some(ScenarioSpec {
            name: name.into(),
            seed: 1,
            trials: 100,
            snr_db: vec![0.0, 4.0, 8.0, 12.0],
            methods: default_methods(),
            modes: default_modes(),
            equalizer: Equalizer::Zf,
            coded: true,
            system: SystemConfig::full_scale(),
            targets: two_targets(scenario_speed("1")?),
        });
    }
    let (scale, tag) = name.split_once('-')?;
    let system = match scale {
        "full" => SystemConfig::full_scale(),
        "desk" => SystemConfig::desk_scale(),
        _ => return None,
    };
    let speed = scenario_speed(tag)?;
    let sensing = matches!(tag, "a" | "b");
    let (methods, modes) = if sensing {
        (vec![SensingMethod::Fccr, SensingMethod::Dmd], default_modes())
    } else {
        let modes = vec![
            Mode::ACTUAL_SIC,
            Mode { ic: IcMode::Actual, sic: false },
            Mode { ic: IcMode::Perfect, sic: true },
            Mode { ic: IcMode::None, sic: true },
        ];
        let methods = if tag == "2" {
            vec![SensingMethod::Fccr, SensingMethod::Ce, SensingMethod::Df]
        } else {
            vec![SensingMethod::Fccr]
        };
        (methods, modes)
    };
    Some(ScenarioSpec {
        name: name.into(),
        seed: 1,
        trials: if scale == "desk" { 200 } else { 100 },
        snr_db: vec![0.0, 4.0, 8.0, 12.0],
        methods,
        modes,
        equalizer: Equalizer::Zf,
        coded: !sensing,
        system,
        targets: two_targets(speed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!(ScenarioSpec::from_toml(&p.to_toml(), name).unwrap(), p, "{name}");
        }
        assert!(preset("desk-z").is_none() && preset("tiny-a").is_none());
    }

    #[test]
    fn shipped_files_match_builtins() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
        for name in PRESET_NAMES {
            let spec = ScenarioSpec::load(&dir.join(format!("{name}.toml"))).unwrap();
            assert_eq!(spec, preset(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for s in ["perfect-ic+sic", "actual-ic+nosic", "no-ic+sic"] {
            assert_eq!(s.parse::<Mode>().unwrap().to_string(), s);
        }
        assert!("actual".parse::<Mode>().is_err());
        assert!("half-ic+sic".parse::<Mode>().is_err());
        assert!("actual-ic+maybe".parse::<Mode>().is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let good = preset("desk-1").unwrap();
        let mut cases = Vec::new();
        cases.push(ScenarioSpec { trials: 0, ..good.clone() });
        cases.push(ScenarioSpec { snr_db: vec![], ..good.clone() });
        cases.push(ScenarioSpec { targets: vec![], ..good.clone() });
        let mut far = good.clone();
        far.targets[0].range_m = [48.8, 2000.0];
        cases.push(far);
        let mut both = good.clone();
        both.targets[0].speed_mps = Some([1.0, 2.0]);
        cases.push(both);
        let mut partial = preset("desk-2").unwrap();
        partial.system.symbols = 20;
        partial.system.doppler_fft_len = 80;
        cases.push(partial);
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = preset("desk-a").unwrap().to_toml() + "\nbogus = 1\n";
        let err = ScenarioSpec::from_toml(&text, "x.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("x.toml"));
    }

    #[test]
    fn kmh_speeds_convert() {
        let t = TargetConfig::kmh(0.0, RANGE_1, [36.0, 72.0]);
        let s = t.to_spec().unwrap();
        assert!((s.speed_mps.lo - 10.0).abs() < 1e-12 && (s.speed_mps.hi - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_a_doppler_band() {
        // 45.7..91.5 km/h at 23.6 GHz is about 1..2 kHz.
        let p = preset("desk-a").unwrap();
        let s = p.targets[0].to_spec().unwrap().speed_mps;
        let lo = p.system.doppler_of_speed(s.lo);
        let hi = p.system.doppler_of_speed(s.hi);
        assert!((lo - 1000.0).abs() < 10.0 && (hi - 2000.0).abs() < 10.0, "{lo} {hi}");
    }
}
