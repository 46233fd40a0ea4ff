//! Flat `key = value` experiment files.
//!
//! Blank lines and `#` comments are ignored; list values are
//! comma-separated. Keys that are not set keep their defaults, so a file
//! only needs the entries it changes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{CableModelParams, ImpulseNoiseConfig};
use crate::de::DeParams;
use crate::error::{Error, Result};
use crate::turbo_engine::{FrameConfig, MudMethod};

/// Tones of the full-scale band plan.
pub const FULL_GRID_TONES: usize = 4096;
/// Desk-scale grid.
pub const DESK_GRID_TONES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    PerTone,
    Convergence,
    Turbo,
    Bandwidth,
    LoopLength,
    Impulse,
    CeError,
    Complexity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::PerTone,
        ExperimentKind::Convergence,
        ExperimentKind::Turbo,
        ExperimentKind::Bandwidth,
        ExperimentKind::LoopLength,
        ExperimentKind::Impulse,
        ExperimentKind::CeError,
        ExperimentKind::Complexity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::PerTone => "per-tone",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Turbo => "turbo",
            ExperimentKind::Bandwidth => "bandwidth",
            ExperimentKind::LoopLength => "loop-length",
            ExperimentKind::Impulse => "impulse",
            ExperimentKind::CeError => "ce-error",
            ExperimentKind::Complexity => "complexity",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment `{s}`")))
    }
}

/// Estimators and detectors a study can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Ml,
    Dea,
    Zf,
    Sud,
    DeaCe,
    LsCe,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ml => "ml",
            Algorithm::Dea => "dea",
            Algorithm::Zf => "zf",
            Algorithm::Sud => "sud",
            Algorithm::DeaCe => "dea-ce",
            Algorithm::LsCe => "ls-ce",
        }
    }

    pub fn mud(self) -> Option<MudMethod> {
        match self {
            Algorithm::Ml => Some(MudMethod::Ml),
            Algorithm::Dea => Some(MudMethod::Dea),
            Algorithm::Zf => Some(MudMethod::Zf),
            Algorithm::Sud => Some(MudMethod::Sud),
            Algorithm::DeaCe | Algorithm::LsCe => None,
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Algorithm::Ml,
            Algorithm::Dea,
            Algorithm::Zf,
            Algorithm::Sud,
            Algorithm::DeaCe,
            Algorithm::LsCe,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::config(format!("unknown detector `{s}` (ml, dea, zf, sud, dea-ce, ls-ce)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Synthetic(CableModelParams),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub channel: ChannelSource,
    pub grid_tones: usize,
    /// Number of tones sampled for per-tone and complexity studies.
    pub tones: usize,
    /// Explicit tone indices; overrides `tones` where a study looks at
    /// individual tones.
    pub tone_indices: Option<Vec<usize>>,
    /// `users`, `order`, symbols per frame, tones per code block, outer
    /// iterations and code seed. `snr_db` is overwritten per point.
    pub frame: FrameConfig,
    pub inner_iters: usize,
    pub ce_params: DeParams,
    pub mud_params: DeParams,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub frames: u64,
    /// Symbol vectors per tone for uncoded detector statistics.
    pub vectors: usize,
    /// Pilot blocks per tone for estimator statistics.
    pub ce_blocks: usize,
    pub detectors: Vec<Algorithm>,
    pub kappas: Vec<f64>,
    pub impulse_ratio_db: f64,
    /// Tone-prefix sizes on the 4096-tone plan.
    pub bandwidth_cases: Vec<usize>,
    pub loop_lengths_m: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let detectors = match kind {
            ExperimentKind::PerTone => vec![
                Algorithm::DeaCe,
                Algorithm::LsCe,
                Algorithm::Ml,
                Algorithm::Dea,
                Algorithm::Zf,
                Algorithm::Sud,
            ],
            ExperimentKind::Convergence => vec![Algorithm::DeaCe, Algorithm::LsCe, Algorithm::Dea, Algorithm::Ml],
            ExperimentKind::Complexity => vec![Algorithm::Ml, Algorithm::Dea],
            _ => vec![Algorithm::Ml, Algorithm::Dea, Algorithm::Zf, Algorithm::Sud],
        };
        let snr_db = match kind {
            ExperimentKind::PerTone | ExperimentKind::Convergence | ExperimentKind::Complexity => vec![20.0, 30.0],
            _ => vec![8.0, 10.0, 12.0, 14.0],
        };
        ExperimentConfig {
            kind,
            channel: ChannelSource::Synthetic(CableModelParams::default()),
            grid_tones: DESK_GRID_TONES,
            tones: 8,
            tone_indices: None,
            frame: FrameConfig {
                s_data: 60,
                ..FrameConfig::default()
            },
            inner_iters: 8,
            ce_params: DeParams::ce_default(),
            mud_params: DeParams::mud_default(),
            snr_db,
            seeds: vec![1],
            frames: 2,
            vectors: 200,
            ce_blocks: 20,
            detectors,
            kappas: vec![0.0, 0.01, 0.1],
            impulse_ratio_db: 20.0,
            bandwidth_cases: vec![1024, 2048, 3072, 4096],
            loop_lengths_m: vec![50.0, 100.0, 200.0],
            output: None,
        }
    }

    /// Defaults for `kind` updated by `text`.
    pub fn from_text(kind: ExperimentKind, text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::defaults(kind);
        for (line, key, value) in parse_pairs(text, path)? {
            cfg.set(&key, &value).map_err(|e| match e {
                Error::Config(msg) => Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg,
                },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(kind, &text, path)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => self.kind = v.parse()?,
            "channel_csv" => self.channel = ChannelSource::Csv(PathBuf::from(v)),
            "loop_length_m" => self.cable_mut()?.loop_length_m = num(key, v)?,
            "cable_seed" => self.cable_mut()?.seed = num(key, v)?,
            "full_grid" => {
                if parse_bool(key, v)? {
                    self.grid_tones = FULL_GRID_TONES;
                }
            }
            "num_tones" => self.grid_tones = num(key, v)?,
            "tones" => self.tones = num(key, v)?,
            "tone_indices" => self.tone_indices = Some(list(key, v)?),
            "users" => self.frame.users = num(key, v)?,
            "modulation" => self.frame.order = num(key, v)?,
            "pilot_symbols" => self.frame.s_pilot = num(key, v)?,
            "data_symbols" => self.frame.s_data = num(key, v)?,
            "active_tones" => self.frame.num_tones_active = num(key, v)?,
            "turbo_iterations" => self.frame.turbo_outer_iters = num(key, v)?,
            "inner_iterations" => self.inner_iters = num(key, v)?,
            "code_seed" => self.frame.code_seed = num(key, v)?,
            "snr_db" => self.snr_db = list(key, v)?,
            "seeds" | "seed" => self.seeds = list(key, v)?,
            "frames" => self.frames = num(key, v)?,
            "vectors" => self.vectors = num(key, v)?,
            "ce_blocks" => self.ce_blocks = num(key, v)?,
            "detectors" => self.detectors = list(key, v)?,
            "kappa" => self.kappas = list(key, v)?,
            "impulse_ratio_db" => self.impulse_ratio_db = num(key, v)?,
            "bandwidth_cases" => self.bandwidth_cases = list(key, v)?,
            "loop_lengths_m" => self.loop_lengths_m = list(key, v)?,
            "output" => self.output = Some(PathBuf::from(v)),
            _ => {
                let (params, field) = if let Some(f) = key.strip_prefix("ce_") {
                    (&mut self.ce_params, f)
                } else if let Some(f) = key.strip_prefix("mud_") {
                    (&mut self.mud_params, f)
                } else {
                    return Err(Error::config(format!("unknown key `{key}`")));
                };
                match field {
                    "population_size" => params.pop_size = num(key, v)?,
                    "greedy_factor" => params.greedy = num(key, v)?,
                    "adaptive_factor" => params.adapt_rate = num(key, v)?,
                    "g_max" => params.g_max = num(key, v)?,
                    "delta_g" => params.delta_g = num(key, v)?,
                    "sigma_lambda" => params.sigma_lambda = num(key, v)?,
                    "sigma_cr" => params.sigma_cr = num(key, v)?,
                    _ => return Err(Error::config(format!("unknown key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    fn cable_mut(&mut self) -> Result<&mut CableModelParams> {
        match &mut self.channel {
            ChannelSource::Synthetic(p) => Ok(p),
            ChannelSource::Csv(_) => Err(Error::config("cable parameters do not apply to a CSV channel")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("SNR list must be non-empty and finite"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("detector list is empty"));
        }
        match &self.channel {
            ChannelSource::Csv(path) if !path.is_file() => {
                return Err(Error::config(format!("channel file {} does not exist", path.display())));
            }
            ChannelSource::Synthetic(p) => p.validate()?,
            _ => {}
        }
        if self.grid_tones == 0 || self.tones == 0 || self.vectors == 0 || self.ce_blocks == 0 || self.frames == 0 {
            return Err(Error::config("tone, vector, block and frame counts must be positive"));
        }
        if let Some(idx) = &self.tone_indices {
            if idx.is_empty() || idx.iter().any(|&t| t >= self.grid_tones) {
                return Err(Error::config(format!("tone indices must lie in 0..{}", self.grid_tones)));
            }
        }
        if self.inner_iters == 0 {
            return Err(Error::config("inner_iterations must be at least 1"));
        }
        if self.kappas.iter().any(|&k| !(0.0..=1.0).contains(&k)) {
            return Err(Error::config("kappa values must lie in [0, 1]"));
        }
        ImpulseNoiseConfig::new(0.0, self.impulse_ratio_db)?;
        if self
            .bandwidth_cases
            .iter()
            .any(|&n| n == 0 || n > FULL_GRID_TONES || n * self.grid_tones < FULL_GRID_TONES)
        {
            return Err(Error::config(format!(
                "bandwidth cases must be 1..={FULL_GRID_TONES} tones and cover at least one grid tone"
            )));
        }
        if self.loop_lengths_m.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::config("loop lengths must be positive"));
        }
        if self.frame.num_tones_active > self.grid_tones {
            return Err(Error::config(format!(
                "{} active tones exceed the {}-tone grid",
                self.frame.num_tones_active, self.grid_tones
            )));
        }
        self.ce_params.validate()?;
        self.mud_params.validate()?;
        self.frame.validate()
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

/// `(line, key, value)` triples in file order. Repeated keys are an error.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| perr(format!("expected `key = value`, found `{content}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(perr(format!("bad key `{k}`")));
        }
        if let Some(prev) = seen.insert(k.to_string(), line) {
            return Err(perr(format!("`{k}` already set on line {prev}")));
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}
