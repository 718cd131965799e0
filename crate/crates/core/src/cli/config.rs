//! Experiment configuration: flags, `key=value` files, and per-experiment defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MomentMatch,
    SampleAudit,
    Decay,
    Fact32,
    SphereW,
    MollifierProbe,
    C1Test,
    GapSeparation,
    FoolingGap,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MomentMatch => "moment-match",
            Experiment::SampleAudit => "sample-audit",
            Experiment::Decay => "decay",
            Experiment::Fact32 => "fact32",
            Experiment::SphereW => "sphere-w",
            Experiment::MollifierProbe => "mollifier-probe",
            Experiment::C1Test => "c1-test",
            Experiment::GapSeparation => "gap-separation",
            Experiment::FoolingGap => "fooling-gap",
        }
    }

    /// Experiment-specific keys, in echo order.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::MomentMatch => &["m", "r", "eps"],
            Experiment::SampleAudit => &["m", "r", "eps", "d", "t", "trials", "seed"],
            Experiment::Decay => &["d", "n", "k", "eps", "trials", "seed"],
            Experiment::Fact32 => &["d", "n", "k", "eps", "trials", "seed"],
            Experiment::SphereW => &["d", "t"],
            Experiment::MollifierProbe => &["d", "n", "k", "t", "c-g", "c-trunc", "trials", "seed"],
            Experiment::C1Test => &["d", "m", "n", "t", "eps", "r-multiplier", "trials", "seed"],
            Experiment::GapSeparation => &["eps", "n", "k", "delta"],
            Experiment::FoolingGap => &["d", "m", "n", "k", "r", "eps", "trials", "seed"],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        <Experiment as ValueEnum>::from_str(name, false).map_err(|_| {
            let names: Vec<&str> = Experiment::value_variants().iter().map(|e| e.name()).collect();
            LabError::Usage(format!("unknown experiment '{name}'; expected one of: {}", names.join(", ")))
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Keys accepted in config files and as `--key` flags.
pub const VALID_KEYS: &[&str] = &[
    "experiment",
    "d",
    "m",
    "n",
    "k",
    "t",
    "eps",
    "c-g",
    "c-trunc",
    "delta",
    "r",
    "r-multiplier",
    "trials",
    "seed",
    "out",
    "format",
];

/// Raw settings before per-experiment defaults. Unset fields take the documented default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub eps: Option<f64>,
    pub c_g: Option<f64>,
    pub c_trunc: Option<f64>,
    pub delta: Option<f64>,
    pub r: Option<f64>,
    pub r_multiplier: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| LabError::Usage(format!("invalid value '{value}' for {key}")))
}

fn canonical(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase()
}

impl ExperimentConfig {
    /// Sets one key; keys may use `-` or `_`. The value `auto` restores the default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical(key);
        if value.trim() == "auto" && !matches!(key.as_str(), "experiment" | "out" | "format") {
            return self.clear(&key);
        }
        match key.as_str() {
            "experiment" => self.experiment = Some(Experiment::parse(value.trim())?),
            "d" => self.d = Some(parse_value(&key, value)?),
            "m" => self.m = Some(parse_value(&key, value)?),
            "n" => self.n = Some(parse_value(&key, value)?),
            "k" => self.k = Some(parse_value(&key, value)?),
            "t" => self.t = Some(parse_value(&key, value)?),
            "eps" => self.eps = Some(parse_value(&key, value)?),
            "c-g" => self.c_g = Some(parse_value(&key, value)?),
            "c-trunc" => self.c_trunc = Some(parse_value(&key, value)?),
            "delta" => self.delta = Some(parse_value(&key, value)?),
            "r" => self.r = Some(parse_value(&key, value)?),
            "r-multiplier" => self.r_multiplier = Some(parse_value(&key, value)?),
            "trials" => self.trials = Some(parse_value(&key, value)?),
            "seed" => self.seed = Some(parse_value(&key, value)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "format" => {
                self.format = Some(
                    <Format as ValueEnum>::from_str(value.trim(), true)
                        .map_err(|_| LabError::Usage(format!("invalid value '{value}' for format; expected csv or json")))?,
                )
            }
            _ => {
                return Err(LabError::Usage(format!("unknown key '{key}'; valid keys: {}", VALID_KEYS.join(", "))));
            }
        }
        Ok(())
    }

    fn clear(&mut self, key: &str) -> Result<()> {
        match key {
            "d" => self.d = None,
            "m" => self.m = None,
            "n" => self.n = None,
            "k" => self.k = None,
            "t" => self.t = None,
            "eps" => self.eps = None,
            "c-g" => self.c_g = None,
            "c-trunc" => self.c_trunc = None,
            "delta" => self.delta = None,
            "r" => self.r = None,
            "r-multiplier" => self.r_multiplier = None,
            "trials" => self.trials = None,
            "seed" => self.seed = None,
            _ => return Err(LabError::Usage(format!("unknown key '{key}'; valid keys: {}", VALID_KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LabError::Usage(format!("config line {}: expected key=value, got '{line}'", no + 1)))?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Fields set in `other` replace ours.
    pub fn overlay(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f; })*};
        }
        take!(experiment, d, m, n, k, t, eps, c_g, c_trunc, delta, r, r_multiplier, trials, seed, out, format);
        self
    }

    /// `(key, is set)` for every experiment-specific key.
    fn set_keys(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("d", self.d.is_some()),
            ("m", self.m.is_some()),
            ("n", self.n.is_some()),
            ("k", self.k.is_some()),
            ("t", self.t.is_some()),
            ("eps", self.eps.is_some()),
            ("c-g", self.c_g.is_some()),
            ("c-trunc", self.c_trunc.is_some()),
            ("delta", self.delta.is_some()),
            ("r", self.r.is_some()),
            ("r-multiplier", self.r_multiplier.is_some()),
            ("trials", self.trials.is_some()),
            ("seed", self.seed.is_some()),
        ]
    }

    /// Checks the experiment is named, every set key belongs to it, and values are in range.
    pub fn validate(&self) -> Result<Experiment> {
        let exp = self.experiment.ok_or_else(|| {
            LabError::Usage("no experiment given; run with --help for the list of experiments".into())
        })?;
        let allowed = exp.keys();
        for (key, set) in self.set_keys() {
            if set && !allowed.contains(&key) {
                return Err(LabError::Usage(format!("{key} is not used by {exp}; its keys are: {}", allowed.join(", "))));
            }
        }
        let positive = |key: &str, v: Option<usize>| match v {
            Some(0) => Err(LabError::Usage(format!("{key} must be >= 1"))),
            _ => Ok(()),
        };
        positive("d", self.d)?;
        positive("n", self.n)?;
        positive("k", self.k)?;
        positive("t", self.t)?;
        if self.trials == Some(0) {
            return Err(LabError::Usage("trials must be >= 1".into()));
        }
        for (key, v) in [("eps", self.eps), ("c-g", self.c_g), ("c-trunc", self.c_trunc), ("delta", self.delta)] {
            if let Some(x) = v {
                if !x.is_finite() || x < 0.0 {
                    return Err(LabError::Usage(format!("{key} = {x} must be a finite nonnegative number")));
                }
            }
        }
        for (key, v) in [("r", self.r), ("r-multiplier", self.r_multiplier)] {
            if let Some(x) = v {
                if !(x.is_finite() && x > 0.0) {
                    return Err(LabError::Usage(format!("{key} = {x} must be positive")));
                }
            }
        }
        if exp == Experiment::MollifierProbe {
            let c_g = self.c_g.unwrap_or(DEFAULT_C_G);
            let c_trunc = self.c_trunc.unwrap_or(DEFAULT_C_TRUNC);
            if c_trunc > c_g / 2.0 - C_TRUNC_MARGIN + 1e-12 {
                return Err(LabError::Usage(format!(
                    "c-trunc = {c_trunc} must be at most c-g/2 - {C_TRUNC_MARGIN} = {}",
                    c_g / 2.0 - C_TRUNC_MARGIN
                )));
            }
        }
        Ok(exp)
    }
}

pub const DEFAULT_C_G: f64 = 0.2;
pub const DEFAULT_C_TRUNC: f64 = 0.05;
/// Required gap between `c_g / 2` and `c_trunc`.
pub const C_TRUNC_MARGIN: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 2026;

/// Resolved `(key, value)` pairs in echo order; the first pair is the experiment.
pub type Echo = Vec<(String, String)>;

/// Renders resolved pairs as a config file that replays the run.
pub fn echo_to_text(echo: &Echo) -> String {
    echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Reads back an echo; `auto` values re-derive their defaults.
pub fn echo_to_config(echo: &Echo) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in echo {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

pub(crate) fn echo_map(echo: &Echo) -> BTreeMap<String, String> {
    echo.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_precedence() {
        let file = ExperimentConfig::from_text("# comment\nexperiment=sphere-w\nd=64\n\nt = 2\n").unwrap();
        let mut flags = ExperimentConfig::default();
        flags.set("--d", "128").unwrap();
        let merged = file.overlay(flags);
        assert_eq!(merged.d, Some(128));
        assert_eq!(merged.t, Some(2));
        assert_eq!(merged.validate().unwrap(), Experiment::SphereW);
        assert_eq!(merged.format.unwrap_or_default(), Format::Csv);
    }

    #[test]
    fn usage_errors() {
        assert!(matches!(ExperimentConfig::default().validate(), Err(LabError::Usage(_))));
        let err = ExperimentConfig::from_text("experiment=decay\nbogus=1\n").unwrap_err();
        match err {
            LabError::Usage(msg) => assert!(msg.contains("bogus") && msg.contains("r-multiplier"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_text("d 4").is_err());
        assert!(ExperimentConfig::from_text("d=four").is_err());
        let mut c = ExperimentConfig::from_text("experiment=sphere-w\nm=3").unwrap();
        assert!(matches!(c.validate(), Err(LabError::Usage(_))));
        c.m = None;
        c.d = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn c_trunc_margin() {
        let ok = ExperimentConfig::from_text("experiment=mollifier-probe\nc_g=0.2\nc_trunc=0.05").unwrap();
        assert!(ok.validate().is_ok());
        let bad = ExperimentConfig::from_text("experiment=mollifier-probe\nc-g=0.2\nc-trunc=0.06").unwrap();
        assert!(matches!(bad.validate(), Err(LabError::Usage(_))));
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::value_variants() {
            assert_eq!(Experiment::parse(e.name()).unwrap(), *e);
        }
        assert!(Experiment::parse("nope").is_err());
    }
}
