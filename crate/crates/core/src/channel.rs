//! Per-tone FEXT channel matrices: parametric synthesis, CSV interchange,
//! the received-signal model with Gaussian and impulse noise, and the
//! zero-forcing noise-enhancement metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cgauss, frobenius2, inverse, CMatrix, CVector};
use crate::rng::{substream, SimRng};

const MHZ: f64 = 1e6;

/// Uniform tone grid: tone `i` is centered at `f_start + i * spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneGrid {
    pub num_tones: usize,
    pub f_start_hz: f64,
    pub f_end_hz: f64,
}

impl ToneGrid {
    pub fn new(num_tones: usize, f_start_hz: f64, f_end_hz: f64) -> Result<Self> {
        let grid = ToneGrid {
            num_tones,
            f_start_hz,
            f_end_hz,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// The 2-212 MHz upstream band split into `num_tones` tones.
    pub fn gfast(num_tones: usize) -> Self {
        ToneGrid {
            num_tones,
            f_start_hz: 2.0 * MHZ,
            f_end_hz: 212.0 * MHZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tones == 0 {
            return Err(Error::config("tone grid needs at least one tone"));
        }
        if !(self.f_start_hz.is_finite() && self.f_end_hz.is_finite() && self.f_end_hz > self.f_start_hz) {
            return Err(Error::config(format!(
                "tone grid band [{}, {}] Hz is empty",
                self.f_start_hz, self.f_end_hz
            )));
        }
        Ok(())
    }

    pub fn spacing_hz(&self) -> f64 {
        (self.f_end_hz - self.f_start_hz) / self.num_tones as f64
    }

    pub fn center_freq_hz(&self, tone: usize) -> f64 {
        self.f_start_hz + tone as f64 * self.spacing_hz()
    }
}

/// Frequency-domain channel of one tone. `matrix[(l, m)]` couples the
/// transmitter of line `m` into the receiver of line `l`; the diagonal holds
/// the direct paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneChannel {
    pub tone_index: usize,
    pub center_freq_hz: f64,
    pub matrix: CMatrix,
}

impl ToneChannel {
    pub fn lines(&self) -> usize {
        self.matrix.nrows()
    }

    /// Copy scaled so that the mean direct-path power is one. Signal-to-noise
    /// ratios throughout the receiver are referred to this normalization.
    pub fn normalized(&self) -> ToneChannel {
        let l = self.lines();
        let direct: f64 = (0..l).map(|i| self.matrix[(i, i)].norm_sqr()).sum::<f64>() / l as f64;
        let scale = if direct > 0.0 { 1.0 / direct.sqrt() } else { 1.0 };
        ToneChannel {
            matrix: self.matrix.map(|z| z * scale),
            ..self.clone()
        }
    }

    pub fn mean_direct_magnitude(&self) -> f64 {
        let l = self.lines();
        (0..l).map(|i| self.matrix[(i, i)].norm()).sum::<f64>() / l as f64
    }

    /// Mean magnitude of the off-diagonal entries, or 0 for a single line.
    pub fn mean_fext_magnitude(&self) -> f64 {
        let l = self.lines();
        if l < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    sum += self.matrix[(i, j)].norm();
                }
            }
        }
        sum / (l * (l - 1)) as f64
    }
}

/// Log-domain cable model standing in for measured binder data.
///
/// Direct path: `-direct_atten_coeff * loop_length_m * sqrt(f / MHz)` dB.
/// FEXT: `fext_base_db + fext_freq_slope * log10(f / MHz)
///        + fext_length_term * log10(loop_length_m)` dB plus a fixed
/// per-pair Gaussian offset with standard deviation `fext_spread_db`.
/// `fext_base_db = -inf` disables crosstalk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableModelParams {
    pub loop_length_m: f64,
    pub direct_atten_coeff: f64,
    pub fext_base_db: f64,
    pub fext_freq_slope: f64,
    pub fext_length_term: f64,
    pub fext_spread_db: f64,
    pub seed: u64,
}

impl Default for CableModelParams {
    /// 100 m calibration: mean FEXT overtakes the direct path near 170 MHz.
    fn default() -> Self {
        CableModelParams {
            loop_length_m: 100.0,
            direct_atten_coeff: 0.0137,
            fext_base_db: -83.0,
            fext_freq_slope: 20.0,
            fext_length_term: 10.0,
            fext_spread_db: 3.0,
            seed: 0x5EED_CAB1E,
        }
    }
}

impl CableModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_length_m > 0.0 && self.loop_length_m.is_finite()) {
            return Err(Error::config(format!("loop length {} m must be positive", self.loop_length_m)));
        }
        if !(self.direct_atten_coeff > 0.0 && self.direct_atten_coeff.is_finite()) {
            return Err(Error::config("direct attenuation coefficient must be positive"));
        }
        if self.fext_base_db.is_nan() || self.fext_base_db == f64::INFINITY {
            return Err(Error::config("FEXT base level must be finite or -inf"));
        }
        if !(self.fext_spread_db >= 0.0 && self.fext_spread_db.is_finite()) {
            return Err(Error::config("FEXT spread must be a non-negative number of dB"));
        }
        Ok(())
    }

    pub fn direct_db(&self, freq_hz: f64) -> f64 {
        -self.direct_atten_coeff * self.loop_length_m * (freq_hz / MHZ).sqrt()
    }

    /// FEXT level in dB before the per-pair offset.
    pub fn fext_db(&self, freq_hz: f64) -> f64 {
        self.fext_base_db
            + self.fext_freq_slope * (freq_hz / MHZ).log10()
            + self.fext_length_term * self.loop_length_m.log10()
    }

    pub fn crosstalk_enabled(&self) -> bool {
        self.fext_base_db != f64::NEG_INFINITY
    }
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Builds one channel matrix per tone of `grid` for `lines` users.
pub fn synthesize_channel(grid: &ToneGrid, params: &CableModelParams, lines: usize) -> Result<Vec<ToneChannel>> {
    grid.validate()?;
    params.validate()?;
    if lines == 0 {
        return Err(Error::config("need at least one line"));
    }
    let mut pair_rng = substream(params.seed, &[0xFE47]);
    let pair_offset_db: Vec<f64> = (0..lines * lines)
        .map(|_| params.fext_spread_db * pair_rng.sample::<f64, _>(StandardNormal))
        .collect();

    let channels = (0..grid.num_tones)
        .map(|tone| {
            let f = grid.center_freq_hz(tone);
            let mut rng = substream(params.seed, &[0x70AE, tone as u64]);
            let direct = db_to_amplitude(params.direct_db(f));
            let fext = params.fext_db(f);
            let matrix = CMatrix::from_fn(lines, lines, |l, m| {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let mag = if l == m {
                    direct
                } else if params.crosstalk_enabled() {
                    db_to_amplitude(fext + pair_offset_db[l * lines + m])
                } else {
                    0.0
                };
                Complex64::from_polar(mag, phase)
            });
            ToneChannel {
                tone_index: tone,
                center_freq_hz: f,
                matrix,
            }
        })
        .collect();
    Ok(channels)
}

/// Writes channels as `tone,l,m,re,im` rows with 1-based line indices.
pub fn write_channel_csv(path: &Path, channels: &[ToneChannel]) -> Result<()> {
    let mut out = String::from("tone,l,m,re,im\n");
    for ch in channels {
        let n = ch.lines();
        for l in 0..n {
            for m in 0..n {
                let z = ch.matrix[(l, m)];
                let _ = writeln!(out, "{},{},{},{:e},{:e}", ch.tone_index, l + 1, m + 1, z.re, z.im);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a channel CSV. Row order is irrelevant; every `(tone, l, m)` with
/// `l, m` in `1..=L` must appear exactly once. Frequencies are taken from
/// `grid`.
pub fn load_channel_csv(path: &Path, grid: &ToneGrid) -> Result<Vec<ToneChannel>> {
    let text = std::fs::read_to_string(path)?;
    parse_channel_csv(&text, path, grid)
}

fn parse_channel_csv(text: &str, path: &Path, grid: &ToneGrid) -> Result<Vec<ToneChannel>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split(',').map(str::trim).eq(["tone", "l", "m", "re", "im"]) => {}
        _ => return Err(perr(1, "expected header `tone,l,m,re,im`".into())),
    }

    let mut entries: BTreeMap<usize, BTreeMap<(usize, usize), Complex64>> = BTreeMap::new();
    let mut max_line = 0usize;
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(perr(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.parse::<usize>()
                .map_err(|_| perr(lineno, format!("bad {name} index `{s}`")))
        };
        let real = |s: &str, name: &str| {
            s.parse::<f64>()
                .map_err(|_| perr(lineno, format!("bad {name} value `{s}`")))
        };
        let tone = int(fields[0], "tone")?;
        let l = int(fields[1], "line")?;
        let m = int(fields[2], "line")?;
        let re = real(fields[3], "re")?;
        let im = real(fields[4], "im")?;
        if l == 0 || m == 0 {
            return Err(perr(lineno, format!("line indices are 1-based, got ({l}, {m})")));
        }
        if !(re.is_finite() && im.is_finite()) {
            return Err(perr(lineno, format!("non-finite entry at (tone {tone}, {l}, {m})")));
        }
        if tone >= grid.num_tones {
            return Err(perr(lineno, format!("tone {tone} outside a {}-tone grid", grid.num_tones)));
        }
        max_line = max_line.max(l).max(m);
        if entries
            .entry(tone)
            .or_default()
            .insert((l, m), Complex64::new(re, im))
            .is_some()
        {
            return Err(perr(lineno, format!("duplicate entry (tone {tone}, {l}, {m})")));
        }
    }
    if entries.is_empty() {
        return Err(perr(1, "no channel entries".into()));
    }

    let n = max_line;
    let mut out = Vec::with_capacity(entries.len());
    for (tone, map) in entries {
        let mut matrix = CMatrix::zeros(n, n);
        for l in 1..=n {
            for m in 1..=n {
                match map.get(&(l, m)) {
                    Some(&z) => matrix[(l - 1, m - 1)] = z,
                    None => return Err(perr(0, format!("missing entry (tone {tone}, {l}, {m})"))),
                }
            }
        }
        out.push(ToneChannel {
            tone_index: tone,
            center_freq_hz: grid.center_freq_hz(tone),
            matrix,
        });
    }
    Ok(out)
}

/// Bursty noise striking whole OFDM symbols with probability `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseNoiseConfig {
    pub kappa: f64,
    /// `10 log10(sigma_u^2 / sigma_w^2)`.
    pub power_ratio_db: f64,
}

impl ImpulseNoiseConfig {
    pub fn new(kappa: f64, power_ratio_db: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::config(format!("impulse probability {kappa} outside [0, 1]")));
        }
        if !power_ratio_db.is_finite() {
            return Err(Error::config("impulse power ratio must be finite"));
        }
        Ok(ImpulseNoiseConfig { kappa, power_ratio_db })
    }

    pub fn impulse_variance(&self, sigma_w2: f64) -> f64 {
        sigma_w2 * 10f64.powf(self.power_ratio_db / 10.0)
    }

    /// One Bernoulli(kappa) draw per OFDM symbol; every tone of a symbol
    /// shares its flag.
    pub fn infection_flags<R: Rng + ?Sized>(&self, symbols: usize, rng: &mut R) -> Vec<bool> {
        (0..symbols).map(|_| rng.random::<f64>() < self.kappa).collect()
    }
}

/// Impulse state for one received vector.
#[derive(Debug, Clone, Copy)]
pub struct Impulse {
    pub config: ImpulseNoiseConfig,
    pub infected: bool,
}

/// `Y = H X + W (+ U)`, with `W ~ CN(0, sigma_w2 I)` and, on infected
/// symbols, `U ~ CN(0, sigma_u^2 I)`.
pub fn apply_channel(
    h: &ToneChannel,
    x: &[Complex64],
    sigma_w2: f64,
    impulse: Option<Impulse>,
    rng: &mut SimRng,
) -> CVector {
    debug_assert!(sigma_w2 >= 0.0);
    let n = h.lines();
    assert_eq!(x.len(), n, "symbol vector length must match the number of lines");
    let mut y = CVector::zeros(n);
    for l in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, xm) in x.iter().enumerate() {
            acc += h.matrix[(l, m)] * xm;
        }
        y[l] = acc;
    }
    if sigma_w2 > 0.0 {
        for v in y.iter_mut() {
            *v += cgauss(rng, sigma_w2);
        }
    }
    if let Some(imp) = impulse.filter(|i| i.infected) {
        let var = imp.config.impulse_variance(sigma_w2);
        for v in y.iter_mut() {
            *v += cgauss(rng, var);
        }
    }
    y
}

/// Zero-forcing noise enhancement `gamma = tr((H^H H)^-1) / L`, i.e. the
/// ratio `E||H^-1 W||^2 / E||W||^2` for white `W`.
pub fn noise_enhancement(h: &ToneChannel) -> Result<f64> {
    let inv = inverse(&h.matrix, &format!("channel of tone {}", h.tone_index))?;
    Ok(frobenius2(&inv) / h.lines() as f64)
}
