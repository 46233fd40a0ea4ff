//! Iterative receiver: channel estimation and multi-user detection
//! alternate, with soft information exchanged between the detector and the
//! turbo decoder and decoded data fed back as virtual pilots.
//!
//! Frame layout: `S_pilot` training symbols followed by `S_data` data OFDM
//! symbols. In every data symbol each user sends one code block spread over
//! all active tones: the coded, channel-interleaved bits are cut into
//! `log2 M`-bit labels, one per tone. Decoding therefore couples the tones,
//! while estimation and detection run per tone.
//!
//! Seeds for estimation and detection depend on the frame, tone and symbol
//! but not on the iteration, so identical feedback reproduces identical
//! results. The loop exploits this: once decoded bits stop changing, the
//! remaining iterations are copies of the last one.

use rayon::prelude::*;

use crate::channel::{apply_channel, Impulse, ImpulseNoiseConfig, ToneChannel};
use crate::de::DeParams;
use crate::detectors::{dea_mud, extract_soft, ml_detect, sud_detect, zf_detect, DetectionResult};
use crate::error::{Error, Result};
use crate::estimation::{dea_ce, ls_estimate, nmse, PilotBlock};
use crate::fec::{Interleaver, LlrFrame, LlrRole, TurboCode, TurboCodeConfig};
use crate::linalg::CMatrix;
use crate::modem::Constellation;
use crate::rng::{derive_seed, substream};
use crate::Complex64;

/// Nominal code rate used to refer noise to `E_b / N_0`.
pub const CODE_RATE: f64 = 0.5;

const STREAM_DATA: u64 = 0xDA7A;
const STREAM_NOISE: u64 = 0x0153;
const STREAM_IMPULSE: u64 = 0x1A9;
const STREAM_CE: u64 = 0xCE;
const STREAM_MUD: u64 = 0x30D;

/// `sigma_w^2 = E_s / (log2 M * R * 10^(snr / 10))` with `E_s = 1`.
pub fn sigma_w2_from_ebn0(snr_db: f64, bits_per_symbol: usize, rate: f64) -> f64 {
    1.0 / (bits_per_symbol as f64 * rate * 10f64.powf(snr_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub users: usize,
    pub order: usize,
    pub s_pilot: usize,
    pub s_data: usize,
    pub num_tones_active: usize,
    pub turbo_outer_iters: usize,
    /// `E_b / N_0` in dB.
    pub snr_db: f64,
    pub code_seed: u64,
    pub impulse: Option<ImpulseNoiseConfig>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            users: 4,
            order: 16,
            s_pilot: 4,
            s_data: 252,
            num_tones_active: 64,
            turbo_outer_iters: 6,
            snr_db: 20.0,
            code_seed: 0x7C0D,
            impulse: None,
        }
    }
}

impl FrameConfig {
    pub fn s_total(&self) -> usize {
        self.s_pilot + self.s_data
    }

    pub fn sigma_w2(&self) -> f64 {
        sigma_w2_from_ebn0(self.snr_db, self.order.trailing_zeros() as usize, CODE_RATE)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("at least one user is required"));
        }
        if self.s_pilot < self.users {
            return Err(Error::config(format!(
                "{} pilot symbols cannot identify {} users",
                self.s_pilot, self.users
            )));
        }
        if self.s_data == 0 || self.num_tones_active == 0 {
            return Err(Error::config("frame needs data symbols and active tones"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("SNR must be finite"));
        }
        Constellation::qam(self.order)?;
        FrameCodec::new(self).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeMethod {
    Dea,
    Ls,
    /// Genie: the true channel.
    Perfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MudMethod {
    Dea,
    Ml,
    Zf,
    Sud,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverConfig {
    pub ce: CeMethod,
    pub mud: MudMethod,
    pub ce_params: DeParams,
    pub mud_params: DeParams,
    /// Detector/decoder exchanges per outer iteration.
    pub inner_iters: usize,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            ce: CeMethod::Dea,
            mud: MudMethod::Dea,
            ce_params: DeParams::ce_default(),
            mud_params: DeParams::mud_default(),
            inner_iters: 8,
        }
    }
}

/// Metrics after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// 0 is the pilot-only pass.
    pub iteration: usize,
    /// Mean per-tone NMSE of the estimate used in this iteration.
    pub nmse: f64,
    pub ber: f64,
    pub ser: f64,
    pub ce_evals: u64,
    pub mud_evals: u64,
    pub bit_errors: u64,
    pub info_bits: u64,
    pub symbol_errors: u64,
    pub symbols: u64,
    pub tone_nmse: Vec<f64>,
    pub tone_symbol_errors: Vec<u64>,
    /// Whether this entry was copied from a converged earlier iteration.
    pub reused: bool,
}

/// Transmit/receive chain shared by the transmitter and the feedback path.
#[derive(Debug, Clone)]
pub struct FrameCodec {
    code: TurboCode,
    pi: Interleaver,
    constellation: Constellation,
    tones: usize,
    users: usize,
    s_data: usize,
}

impl FrameCodec {
    pub fn new(frame: &FrameConfig) -> Result<Self> {
        let constellation = Constellation::qam(frame.order)?;
        let k = constellation.bits_per_symbol();
        let coded = frame.num_tones_active * k;
        // Coded length is 2K + 8 for the memory-2 constituent codes.
        if coded < 10 || !(coded - 8).is_multiple_of(2) {
            return Err(Error::config(format!(
                "{} tones x {k} bits cannot carry a rate-1/2 block with termination",
                frame.num_tones_active
            )));
        }
        let code = TurboCode::new(TurboCodeConfig::new((coded - 8) / 2, frame.code_seed))?;
        debug_assert_eq!(code.coded_len(), coded);
        let pi = code.channel_interleaver();
        Ok(FrameCodec {
            code,
            pi,
            constellation,
            tones: frame.num_tones_active,
            users: frame.users,
            s_data: frame.s_data,
        })
    }

    pub fn info_len(&self) -> usize {
        self.code.info_len()
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Per-tone labels of one code block.
    pub fn modulate(&self, info: &[u8]) -> Result<Vec<usize>> {
        let bits = self.pi.interleave(&self.code.encode(info)?)?;
        bits.chunks(self.constellation.bits_per_symbol())
            .map(|w| self.constellation.label_of(w))
            .collect()
    }

    /// Re-encodes and re-modulates decoded blocks (`[s * L + l]`) into one
    /// `L x S_data` symbol block per tone. An empty input means no feedback.
    pub fn virtual_pilot_update(&self, decoded: &[Vec<u8>]) -> Result<Vec<CMatrix>> {
        if decoded.is_empty() {
            return Ok(Vec::new());
        }
        if decoded.len() != self.s_data * self.users {
            return Err(Error::usage(format!(
                "{} decoded blocks for {} data symbols x {} users",
                decoded.len(),
                self.s_data,
                self.users
            )));
        }
        let mut out = vec![CMatrix::zeros(self.users, self.s_data); self.tones];
        for (b, info) in decoded.iter().enumerate() {
            if info.len() != self.info_len() {
                return Err(Error::usage(format!(
                    "decoded block has {} bits, expected {}",
                    info.len(),
                    self.info_len()
                )));
            }
            let (s, l) = (b / self.users, b % self.users);
            for (t, label) in self.modulate(info)?.into_iter().enumerate() {
                out[t][(l, s)] = self.constellation.point(label);
            }
        }
        Ok(out)
    }
}

/// Error counts of one detection/decoding pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ser: f64,
    pub ber: f64,
    pub nmse: f64,
}

/// SER over symbol labels, BER over information bits and NMSE of the
/// estimate.
pub fn compute_metrics(
    tx_labels: &[usize],
    detected_labels: &[usize],
    tx_bits: &[u8],
    decoded_bits: &[u8],
    h_hat: &CMatrix,
    h_true: &CMatrix,
) -> Result<Metrics> {
    if tx_labels.len() != detected_labels.len() || tx_bits.len() != decoded_bits.len() {
        return Err(Error::usage("transmitted and detected frames are not aligned"));
    }
    let rate = |e: usize, n: usize| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    let se = tx_labels.iter().zip(detected_labels).filter(|(a, b)| a != b).count();
    let be = tx_bits.iter().zip(decoded_bits).filter(|(a, b)| a != b).count();
    Ok(Metrics {
        ser: rate(se, tx_labels.len()),
        ber: rate(be, tx_bits.len()),
        nmse: nmse(h_hat, h_true)?,
    })
}

/// One simulated frame: what was sent and what arrived, per tone.
struct FrameData {
    info: Vec<Vec<u8>>,
    /// `[t][s * L + l]`
    labels: Vec<Vec<usize>>,
    /// `[t]`: `L x S_total`
    y: Vec<CMatrix>,
}

fn numerical(tone: usize, seed: u64, e: Error) -> Error {
    match e {
        Error::Config(_) | Error::Budget { .. } | Error::Numerical { .. } => e,
        other => Error::Numerical {
            tone,
            seed,
            msg: other.to_string(),
        },
    }
}

fn simulate_frame(
    truth: &[ToneChannel],
    frame: &FrameConfig,
    codec: &FrameCodec,
    pilots: &PilotBlock,
    seed: u64,
    frame_index: u64,
) -> Result<FrameData> {
    let (l_users, s_data, s_pilot) = (frame.users, frame.s_data, frame.s_pilot);
    let k_info = codec.info_len();
    let mut info = Vec::with_capacity(s_data * l_users);
    let mut block_labels = Vec::with_capacity(s_data * l_users);
    for s in 0..s_data {
        for l in 0..l_users {
            let mut rng = substream(seed, &[STREAM_DATA, frame_index, s as u64, l as u64]);
            let bits: Vec<u8> = (0..k_info).map(|_| rand::Rng::random::<bool>(&mut rng) as u8).collect();
            block_labels.push(codec.modulate(&bits)?);
            info.push(bits);
        }
    }
    let sigma_w2 = frame.sigma_w2();
    let flags = match frame.impulse {
        Some(cfg) => cfg.infection_flags(frame.s_total(), &mut substream(seed, &[STREAM_IMPULSE, frame_index])),
        None => vec![false; frame.s_total()],
    };
    let c = codec.constellation();
    let per_tone: Vec<(Vec<usize>, CMatrix)> = truth
        .par_iter()
        .enumerate()
        .map(|(t, h)| {
            let labels: Vec<usize> = block_labels.iter().map(|b| b[t]).collect();
            let mut rng = substream(seed, &[STREAM_NOISE, frame_index, t as u64]);
            let mut y = CMatrix::zeros(l_users, frame.s_total());
            for s in 0..frame.s_total() {
                let x: Vec<Complex64> = if s < s_pilot {
                    pilots.matrix().column(s).iter().copied().collect()
                } else {
                    (0..l_users).map(|l| c.point(labels[(s - s_pilot) * l_users + l])).collect()
                };
                let impulse = frame.impulse.map(|config| Impulse {
                    config,
                    infected: flags[s],
                });
                y.set_column(s, &apply_channel(h, &x, sigma_w2, impulse, &mut rng));
            }
            (labels, y)
        })
        .collect();
    let (labels, y) = per_tone.into_iter().unzip();
    Ok(FrameData { info, labels, y })
}

fn estimate(
    method: CeMethod,
    x: &CMatrix,
    y: &CMatrix,
    truth: &CMatrix,
    params: &DeParams,
    seed: u64,
) -> Result<(CMatrix, u64)> {
    match method {
        CeMethod::Perfect => Ok((truth.clone(), 0)),
        CeMethod::Ls => ls_estimate(x, y).map(|e| (e.matrix, 0)),
        CeMethod::Dea => dea_ce(x, y, params, seed).map(|e| (e.matrix, e.eval_count)),
    }
}

fn detect(method: MudMethod, y: &[Complex64], h: &CMatrix, c: &Constellation, params: &DeParams, seed: u64) -> Result<DetectionResult> {
    match method {
        MudMethod::Dea => dea_mud(y, h, c, params, seed),
        MudMethod::Ml => ml_detect(y, h, c),
        MudMethod::Zf => zf_detect(y, h, c),
        MudMethod::Sud => sud_detect(y, h, c),
    }
}

/// Runs the receiver on one frame and returns the metrics of every outer
/// iteration (`turbo_outer_iters + 1` entries).
pub fn run_turbo(
    truth: &[ToneChannel],
    frame: &FrameConfig,
    rx: &ReceiverConfig,
    seed: u64,
    frame_index: u64,
) -> Result<Vec<IterationTrace>> {
    frame.validate()?;
    if truth.len() != frame.num_tones_active {
        return Err(Error::config(format!(
            "{} channel tones for {} active tones",
            truth.len(),
            frame.num_tones_active
        )));
    }
    if truth.iter().any(|h| h.lines() != frame.users) {
        return Err(Error::config(format!("channel does not have {} lines", frame.users)));
    }
    if rx.inner_iters == 0 {
        return Err(Error::config("at least one detector/decoder exchange is required"));
    }
    rx.ce_params.validate()?;
    rx.mud_params.validate()?;

    let codec = FrameCodec::new(frame)?;
    let c = codec.constellation().clone();
    let (l_users, s_pilot, s_data) = (frame.users, frame.s_pilot, frame.s_data);
    let k = c.bits_per_symbol();
    let pilots = PilotBlock::dft(l_users, s_pilot, 1.0)?;
    let data = simulate_frame(truth, frame, &codec, &pilots, seed, frame_index)?;
    let sigma_w2 = frame.sigma_w2();

    let mut traces: Vec<IterationTrace> = Vec::with_capacity(frame.turbo_outer_iters + 1);
    let mut decoded: Vec<Vec<u8>> = Vec::new();
    for iteration in 0..=frame.turbo_outer_iters {
        // (a) Estimation on pilots plus virtual pilots.
        let virtual_pilots = codec.virtual_pilot_update(&decoded)?;
        let ce: Vec<(CMatrix, u64)> = (0..truth.len())
            .into_par_iter()
            .map(|t| {
                let y = &data.y[t];
                let (x, yb) = if virtual_pilots.is_empty() {
                    (pilots.matrix().clone(), y.columns(0, s_pilot).into_owned())
                } else {
                    let mut x = CMatrix::zeros(l_users, s_pilot + s_data);
                    x.columns_mut(0, s_pilot).copy_from(pilots.matrix());
                    x.columns_mut(s_pilot, s_data).copy_from(&virtual_pilots[t]);
                    (x, y.clone())
                };
                let ce_seed = derive_seed(seed, &[STREAM_CE, frame_index, t as u64]);
                let (h_hat, evals) = estimate(rx.ce, &x, &yb, &truth[t].matrix, &rx.ce_params, ce_seed)
                    .map_err(|e| numerical(truth[t].tone_index, seed, e))?;
                if h_hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Numerical {
                        tone: truth[t].tone_index,
                        seed,
                        msg: "channel estimate is not finite".into(),
                    });
                }
                Ok((h_hat, evals))
            })
            .collect::<Result<_>>()?;

        // (b) Hard detection per tone and data symbol.
        let hard: Vec<Vec<DetectionResult>> = (0..truth.len())
            .into_par_iter()
            .map(|t| {
                (0..s_data)
                    .map(|s| {
                        let y: Vec<Complex64> = data.y[t].column(s_pilot + s).iter().copied().collect();
                        let mud_seed = derive_seed(seed, &[STREAM_MUD, frame_index, t as u64, s as u64]);
                        detect(rx.mud, &y, &ce[t].0, &c, &rx.mud_params, mud_seed)
                            .map_err(|e| numerical(truth[t].tone_index, seed, e))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        // (c) Soft detector <-> decoder exchange.
        let blocks = s_data * l_users;
        let coded_len = truth.len() * k;
        let mut m_pr: Vec<Vec<f64>> = vec![vec![0.0; coded_len]; blocks];
        let mut new_decoded: Vec<Vec<u8>> = Vec::new();
        for _ in 0..rx.inner_iters {
            let mut m_e: Vec<Vec<f64>> = vec![vec![0.0; coded_len]; blocks];
            let soft: Vec<Vec<Vec<f64>>> = (0..truth.len())
                .into_par_iter()
                .map(|t| {
                    (0..s_data)
                        .map(|s| {
                            let y: Vec<Complex64> = data.y[t].column(s_pilot + s).iter().copied().collect();
                            let prior: Vec<f64> = (0..l_users)
                                .flat_map(|l| m_pr[s * l_users + l][t * k..(t + 1) * k].iter().copied())
                                .collect();
                            let prior = LlrFrame::new(prior, LlrRole::MPr);
                            extract_soft(&hard[t][s], &ce[t].0, &y, sigma_w2, Some(&prior), &c)
                                .map(|o| o.m_e.values)
                                .map_err(|e| numerical(truth[t].tone_index, seed, e))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            for (t, per_symbol) in soft.iter().enumerate() {
                for (s, llrs) in per_symbol.iter().enumerate() {
                    for l in 0..l_users {
                        m_e[s * l_users + l][t * k..(t + 1) * k].copy_from_slice(&llrs[l * k..(l + 1) * k]);
                    }
                }
            }
            let outputs: Vec<(Vec<u8>, Vec<f64>)> = m_e
                .par_iter()
                .map(|me| {
                    let c_pr = LlrFrame::new(codec.pi.deinterleave(me)?, LlrRole::CPr);
                    let out = codec.code.decode(&c_pr)?;
                    let c_e = out.c_po.minus(&c_pr, LlrRole::CE)?;
                    Ok((out.hard_bits, codec.pi.interleave(&c_e.values)?))
                })
                .collect::<Result<_>>()?;
            let (bits, priors): (Vec<Vec<u8>>, Vec<Vec<f64>>) = outputs.into_iter().unzip();
            let stable = bits == new_decoded;
            new_decoded = bits;
            m_pr = priors;
            if stable {
                break;
            }
        }

        // Metrics.
        let mut tone_nmse = Vec::with_capacity(truth.len());
        let mut tone_symbol_errors = Vec::with_capacity(truth.len());
        for (t, h) in truth.iter().enumerate() {
            tone_nmse.push(nmse(&ce[t].0, &h.matrix)?);
            let detected: Vec<usize> = hard[t].iter().flat_map(|d| d.labels.iter().copied()).collect();
            let errs = detected.iter().zip(&data.labels[t]).filter(|(a, b)| a != b).count();
            tone_symbol_errors.push(errs as u64);
        }
        let bit_errors: u64 = new_decoded
            .iter()
            .zip(&data.info)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
            .sum();
        let info_bits = (blocks * codec.info_len()) as u64;
        let symbols = (truth.len() * blocks) as u64;
        let symbol_errors: u64 = tone_symbol_errors.iter().sum();
        traces.push(IterationTrace {
            iteration,
            nmse: tone_nmse.iter().sum::<f64>() / truth.len() as f64,
            ber: bit_errors as f64 / info_bits as f64,
            ser: symbol_errors as f64 / symbols as f64,
            ce_evals: ce.iter().map(|(_, e)| e).sum(),
            mud_evals: hard.iter().flatten().map(|d| d.eval_count).sum(),
            bit_errors,
            info_bits,
            symbol_errors,
            symbols,
            tone_nmse,
            tone_symbol_errors,
            reused: false,
        });

        // (d) Feedback. A repeated decision means every later pass repeats too.
        let converged = iteration > 0 && new_decoded == decoded;
        decoded = new_decoded;
        if converged {
            let last = traces.last().cloned().expect("at least one trace");
            for i in iteration + 1..=frame.turbo_outer_iters {
                traces.push(IterationTrace {
                    iteration: i,
                    reused: true,
                    ..last.clone()
                });
            }
            break;
        }
    }
    Ok(traces)
}
