//! Study pipelines. Every pipeline expands its configuration into
//! independent work items, runs them in parallel and returns unsorted rows.

use rand::Rng;
use rayon::prelude::*;

use super::config::{Algorithm, ChannelSource, ExperimentConfig, ExperimentKind, FULL_GRID_TONES};
use super::records::MetricsRecord;
use crate::channel::{load_channel_csv, synthesize_channel, CableModelParams, ImpulseNoiseConfig, ToneChannel, ToneGrid};
use crate::de::DeParams;
use crate::detectors::{dea_mud, dea_mud_history, ml_detect, sud_detect, zf_detect, DetectionResult};
use crate::error::{Error, Result};
use crate::estimation::{dea_ce_history, fisher_nmse_bound, ls_estimate, nmse, PilotBlock};
use crate::linalg::{cgauss, CMatrix};
use crate::modem::Constellation;
use crate::rng::{derive_seed, substream};
use crate::turbo_engine::{run_turbo, sigma_w2_from_ebn0, CeMethod, FrameConfig, MudMethod, ReceiverConfig, CODE_RATE};
use crate::Complex64;

type Job<'a> = Box<dyn Fn() -> Result<Vec<MetricsRecord>> + Send + Sync + 'a>;

/// Tones the convergence study looks at on the 4096-tone plan.
const CONVERGENCE_TONES: [usize; 3] = [500, 2500, 4000];

const TAG_VECTORS: u64 = 0x7EC;
const TAG_BLOCKS: u64 = 0xB10C;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    let jobs = match cfg.kind {
        ExperimentKind::PerTone => per_tone(cfg)?,
        ExperimentKind::Convergence => convergence(cfg)?,
        ExperimentKind::Turbo => turbo(cfg)?,
        ExperimentKind::Bandwidth => bandwidth(cfg)?,
        ExperimentKind::LoopLength => loop_length(cfg)?,
        ExperimentKind::Impulse => impulse(cfg)?,
        ExperimentKind::CeError => ce_error(cfg)?,
        ExperimentKind::Complexity => complexity(cfg)?,
    };
    let rows: Vec<Vec<MetricsRecord>> = jobs.par_iter().map(|j| j()).collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

struct Row<'a> {
    experiment: &'a str,
    tone: Option<usize>,
    snr_db: f64,
    seed: u64,
}

impl Row<'_> {
    fn rec(&self, iteration: usize, detector: &str, metric: &str, value: f64, eval_count: u64) -> MetricsRecord {
        MetricsRecord {
            experiment: self.experiment.to_string(),
            tone: self.tone,
            snr_db: self.snr_db,
            iteration,
            detector: detector.to_string(),
            metric: metric.to_string(),
            value,
            eval_count,
            seed: self.seed,
        }
    }
}

fn grid(cfg: &ExperimentConfig) -> ToneGrid {
    ToneGrid::gfast(cfg.grid_tones)
}

/// Normalized channels of the whole grid (or of the tones present in a CSV).
fn channels(cfg: &ExperimentConfig, cable: Option<CableModelParams>) -> Result<Vec<ToneChannel>> {
    let raw = match (&cfg.channel, cable) {
        (ChannelSource::Synthetic(_), Some(p)) => synthesize_channel(&grid(cfg), &p, cfg.frame.users)?,
        (ChannelSource::Synthetic(p), None) => synthesize_channel(&grid(cfg), p, cfg.frame.users)?,
        (ChannelSource::Csv(path), None) => load_channel_csv(path, &grid(cfg))?,
        (ChannelSource::Csv(_), Some(_)) => {
            return Err(Error::config("a loop-length sweep needs the synthetic channel"));
        }
    };
    if raw.iter().any(|h| h.lines() != cfg.frame.users) {
        return Err(Error::config(format!("channel does not have {} lines", cfg.frame.users)));
    }
    Ok(raw.iter().map(ToneChannel::normalized).collect())
}

/// `count` tones spread uniformly over `avail`.
fn spread(avail: &[ToneChannel], count: usize) -> Result<Vec<ToneChannel>> {
    if count > avail.len() {
        return Err(Error::config(format!("{count} tones requested from {} available", avail.len())));
    }
    Ok((0..count).map(|i| avail[(2 * i + 1) * avail.len() / (2 * count)].clone()).collect())
}

fn by_index(avail: &[ToneChannel], idx: &[usize]) -> Result<Vec<ToneChannel>> {
    idx.iter()
        .map(|&t| {
            avail
                .iter()
                .find(|h| h.tone_index == t)
                .cloned()
                .ok_or_else(|| Error::config(format!("tone {t} is not in the channel data")))
        })
        .collect()
}

/// Sampled tones for per-tone studies: explicit indices or an even spread.
fn sampled(cfg: &ExperimentConfig, avail: &[ToneChannel]) -> Result<Vec<ToneChannel>> {
    match &cfg.tone_indices {
        Some(idx) => by_index(avail, idx),
        None => spread(avail, cfg.tones),
    }
}

/// Tones below `case / 4096` of the band.
fn prefix(avail: &[ToneChannel], case: usize, grid_tones: usize) -> Vec<ToneChannel> {
    let limit = case * grid_tones / FULL_GRID_TONES;
    avail.iter().filter(|h| h.tone_index < limit).cloned().collect()
}

fn mud_algorithms(cfg: &ExperimentConfig) -> Vec<(Algorithm, MudMethod)> {
    cfg.detectors.iter().filter_map(|&a| a.mud().map(|m| (a, m))).collect()
}

fn sigma2(cfg: &ExperimentConfig, snr_db: f64) -> f64 {
    sigma_w2_from_ebn0(snr_db, cfg.frame.order.trailing_zeros() as usize, CODE_RATE)
}

fn numerical(tone: usize, seed: u64, e: Error) -> Error {
    match e {
        Error::Numerical { .. } | Error::Config(_) | Error::Budget { .. } => e,
        other => Error::Numerical {
            tone,
            seed,
            msg: other.to_string(),
        },
    }
}

fn detect(m: MudMethod, y: &[Complex64], h: &CMatrix, c: &Constellation, params: &DeParams, seed: u64) -> Result<DetectionResult> {
    match m {
        MudMethod::Ml => ml_detect(y, h, c),
        MudMethod::Dea => dea_mud(y, h, c, params, seed),
        MudMethod::Zf => zf_detect(y, h, c),
        MudMethod::Sud => sud_detect(y, h, c),
    }
}

/// Random symbol vectors on one tone; identical for every detector at the
/// same `(seed, tone, snr)`.
struct VectorSet {
    labels: Vec<Vec<usize>>,
    received: Vec<Vec<Complex64>>,
}

fn vectors(cfg: &ExperimentConfig, h: &ToneChannel, c: &Constellation, snr_db: f64, seed: u64) -> VectorSet {
    let mut rng = substream(seed, &[TAG_VECTORS, h.tone_index as u64, snr_db.to_bits()]);
    let s2 = sigma2(cfg, snr_db);
    let l = h.lines();
    let mut labels = Vec::with_capacity(cfg.vectors);
    let mut received = Vec::with_capacity(cfg.vectors);
    for _ in 0..cfg.vectors {
        let lab: Vec<usize> = (0..l).map(|_| rng.random_range(0..c.order())).collect();
        let y: Vec<Complex64> = (0..l)
            .map(|r| (0..l).map(|m| h.matrix[(r, m)] * c.point(lab[m])).sum::<Complex64>() + cgauss(&mut rng, s2))
            .collect();
        labels.push(lab);
        received.push(y);
    }
    VectorSet { labels, received }
}

fn error_counts(tx: &[usize], rx: &[usize]) -> (usize, usize) {
    let sym = tx.iter().zip(rx).filter(|(a, b)| a != b).count();
    let bits = tx
        .iter()
        .zip(rx)
        .map(|(&a, &b)| (a ^ b).count_ones() as usize)
        .sum();
    (sym, bits)
}

/// Training blocks on one tone.
fn pilot_blocks(cfg: &ExperimentConfig, h: &ToneChannel, snr_db: f64, seed: u64, len: usize) -> Result<Vec<(CMatrix, CMatrix)>> {
    let x = PilotBlock::dft(cfg.frame.users, len, 1.0)?.matrix().clone();
    let s2 = sigma2(cfg, snr_db);
    let mut rng = substream(seed, &[TAG_BLOCKS, h.tone_index as u64, snr_db.to_bits(), len as u64]);
    Ok((0..cfg.ce_blocks)
        .map(|_| {
            let mut y = &h.matrix * &x;
            y.iter_mut().for_each(|v| *v += cgauss(&mut rng, s2));
            (x.clone(), y)
        })
        .collect())
}

/// Mean NMSE and CF of pilot-only estimates over the configured blocks.
fn ce_stats(cfg: &ExperimentConfig, alg: Algorithm, h: &ToneChannel, snr_db: f64, seed: u64) -> Result<(f64, f64, u64)> {
    let blocks = pilot_blocks(cfg, h, snr_db, seed, cfg.frame.s_pilot)?;
    let (mut e, mut cf, mut evals) = (0.0, 0.0, 0);
    for (b, (x, y)) in blocks.iter().enumerate() {
        let est = match alg {
            Algorithm::LsCe => ls_estimate(x, y)?,
            _ => dea_ce_history(x, y, &cfg.ce_params, derive_seed(seed, &[TAG_BLOCKS, h.tone_index as u64, b as u64]))?.0,
        };
        e += nmse(&est.matrix, &h.matrix)?;
        cf += crate::estimation::cf_ce(&est.matrix, x, y);
        evals += est.eval_count;
    }
    let n = blocks.len() as f64;
    Ok((e / n, cf / n, evals))
}

/// Totals of perfect- or estimated-CSI coded frames.
#[derive(Debug, Default, Clone, Copy)]
struct CodedTotals {
    bit_errors: u64,
    info_bits: u64,
    symbol_errors: u64,
    symbols: u64,
    evals: u64,
}

impl CodedTotals {
    fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.info_bits.max(1) as f64
    }

    fn ser(&self) -> f64 {
        self.symbol_errors as f64 / self.symbols.max(1) as f64
    }
}

fn receiver(cfg: &ExperimentConfig, ce: CeMethod, mud: MudMethod) -> ReceiverConfig {
    ReceiverConfig {
        ce,
        mud,
        ce_params: cfg.ce_params,
        mud_params: cfg.mud_params,
        inner_iters: cfg.inner_iters,
    }
}

/// Non-turbo coded frames (iteration 0 only).
fn coded(cfg: &ExperimentConfig, tones: &[ToneChannel], frame: &FrameConfig, rx: &ReceiverConfig, seed: u64) -> Result<CodedTotals> {
    let frame = FrameConfig {
        turbo_outer_iters: 0,
        num_tones_active: tones.len(),
        ..*frame
    };
    let mut t = CodedTotals::default();
    for f in 0..cfg.frames {
        let tr = &run_turbo(tones, &frame, rx, seed, f)?[0];
        t.bit_errors += tr.bit_errors;
        t.info_bits += tr.info_bits;
        t.symbol_errors += tr.symbol_errors;
        t.symbols += tr.symbols;
        t.evals += tr.ce_evals + tr.mud_evals;
    }
    Ok(t)
}

fn coded_rows(row: &Row, alg: Algorithm, t: &CodedTotals, suffix: &str) -> Vec<MetricsRecord> {
    vec![
        row.rec(0, alg.as_str(), &format!("ber{suffix}"), t.ber(), t.evals),
        row.rec(0, alg.as_str(), &format!("ser{suffix}"), t.ser(), t.evals),
    ]
}

fn frame_at(cfg: &ExperimentConfig, snr_db: f64) -> FrameConfig {
    FrameConfig { snr_db, ..cfg.frame }
}

fn points(cfg: &ExperimentConfig) -> Vec<(f64, u64)> {
    cfg.snr_db
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect()
}

fn per_tone(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let tones = sampled(cfg, &channels(cfg, None)?)?;
    let c = Constellation::qam(cfg.frame.order)?;
    let mut jobs: Vec<Job> = Vec::new();
    for (snr, seed) in points(cfg) {
        for h in &tones {
            for &alg in &cfg.detectors {
                let (h, c) = (h.clone(), c.clone());
                jobs.push(Box::new(move || {
                    let row = Row {
                        experiment: "per-tone",
                        tone: Some(h.tone_index),
                        snr_db: snr,
                        seed,
                    };
                    let t = h.tone_index;
                    if let Some(m) = alg.mud() {
                        let set = vectors(cfg, &h, &c, snr, seed);
                        let (mut se, mut be, mut evals) = (0, 0, 0);
                        for (v, (lab, y)) in set.labels.iter().zip(&set.received).enumerate() {
                            let d = detect(m, y, &h.matrix, &c, &cfg.mud_params, derive_seed(seed, &[t as u64, v as u64]))
                                .map_err(|e| numerical(t, seed, e))?;
                            let (s, b) = error_counts(lab, &d.labels);
                            se += s;
                            be += b;
                            evals += d.eval_count;
                        }
                        let n = (cfg.vectors * cfg.frame.users) as f64;
                        Ok(vec![
                            row.rec(0, alg.as_str(), "ser", se as f64 / n, evals),
                            row.rec(0, alg.as_str(), "ber", be as f64 / (n * c.bits_per_symbol() as f64), evals),
                        ])
                    } else {
                        let (e, cf, evals) = ce_stats(cfg, alg, &h, snr, seed).map_err(|e| numerical(t, seed, e))?;
                        Ok(vec![row.rec(0, alg.as_str(), "nmse", e, evals), row.rec(0, alg.as_str(), "cf", cf, evals)])
                    }
                }));
            }
        }
    }
    Ok(jobs)
}

fn convergence(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let avail = channels(cfg, None)?;
    let tones = match &cfg.tone_indices {
        Some(idx) => by_index(&avail, idx)?,
        None => {
            let idx: Vec<usize> = CONVERGENCE_TONES.iter().map(|&t| t * cfg.grid_tones / FULL_GRID_TONES).collect();
            by_index(&avail, &idx)?
        }
    };
    let c = Constellation::qam(cfg.frame.order)?;
    let mut jobs: Vec<Job> = Vec::new();
    for (snr, seed) in points(cfg) {
        for h in &tones {
            for &alg in &cfg.detectors {
                let (h, c) = (h.clone(), c.clone());
                jobs.push(Box::new(move || {
                    let t = h.tone_index;
                    let row = Row {
                        experiment: "convergence",
                        tone: Some(t),
                        snr_db: snr,
                        seed,
                    };
                    convergence_rows(cfg, alg, &h, &c, snr, seed, &row).map_err(|e| numerical(t, seed, e))
                }));
            }
        }
    }
    Ok(jobs)
}

/// Mean over instances of a per-generation metric; shorter runs hold their
/// final value.
fn mean_traces(traces: &[Vec<f64>]) -> Vec<f64> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|g| traces.iter().map(|t| t[g.min(t.len() - 1)]).sum::<f64>() / traces.len() as f64)
        .collect()
}

fn convergence_rows(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    h: &ToneChannel,
    c: &Constellation,
    snr: f64,
    seed: u64,
    row: &Row,
) -> Result<Vec<MetricsRecord>> {
    let t = h.tone_index as u64;
    let name = alg.as_str();
    match alg {
        Algorithm::DeaCe => {
            let mut traces = Vec::new();
            let mut evals = 0;
            for (b, (x, y)) in pilot_blocks(cfg, h, snr, seed, cfg.frame.s_pilot)?.iter().enumerate() {
                let (est, hist) = dea_ce_history(x, y, &cfg.ce_params, derive_seed(seed, &[TAG_BLOCKS, t, b as u64]))?;
                evals += est.eval_count;
                traces.push(hist.iter().map(|m| nmse(m, &h.matrix)).collect::<Result<Vec<_>>>()?);
            }
            Ok(mean_traces(&traces).into_iter().enumerate().map(|(g, v)| row.rec(g, name, "nmse", v, evals)).collect())
        }
        Algorithm::LsCe => {
            let (e, _, _) = ce_stats(cfg, alg, h, snr, seed)?;
            Ok(vec![row.rec(0, name, "nmse", e, 0)])
        }
        Algorithm::Dea => {
            let set = vectors(cfg, h, c, snr, seed);
            let (mut ser, mut ber) = (Vec::new(), Vec::new());
            let mut evals = 0;
            let n = cfg.frame.users as f64;
            for (v, (lab, y)) in set.labels.iter().zip(&set.received).enumerate() {
                let (d, hist) = dea_mud_history(y, &h.matrix, c, &cfg.mud_params, derive_seed(seed, &[t, v as u64]))?;
                evals += d.eval_count;
                let counts: Vec<(usize, usize)> = hist.iter().map(|l| error_counts(lab, l)).collect();
                ser.push(counts.iter().map(|&(s, _)| s as f64 / n).collect());
                ber.push(counts.iter().map(|&(_, b)| b as f64 / (n * c.bits_per_symbol() as f64)).collect());
            }
            let mut rows: Vec<MetricsRecord> =
                mean_traces(&ser).into_iter().enumerate().map(|(g, v)| row.rec(g, name, "ser", v, evals)).collect();
            rows.extend(mean_traces(&ber).into_iter().enumerate().map(|(g, v)| row.rec(g, name, "ber", v, evals)));
            Ok(rows)
        }
        Algorithm::Ml | Algorithm::Zf | Algorithm::Sud => {
            let m = alg.mud().expect("detector");
            let set = vectors(cfg, h, c, snr, seed);
            let (mut se, mut be, mut evals) = (0, 0, 0);
            for (lab, y) in set.labels.iter().zip(&set.received) {
                let d = detect(m, y, &h.matrix, c, &cfg.mud_params, 0)?;
                let (s, b) = error_counts(lab, &d.labels);
                se += s;
                be += b;
                evals += d.eval_count;
            }
            let n = (cfg.vectors * cfg.frame.users) as f64;
            Ok(vec![
                row.rec(0, name, "ser", se as f64 / n, evals),
                row.rec(0, name, "ber", be as f64 / (n * c.bits_per_symbol() as f64), evals),
            ])
        }
    }
}

/// Mean per-tone Fisher bound for an orthogonal block of `len` symbols.
fn mean_bound(tones: &[ToneChannel], users: usize, len: usize, sigma_w2: f64) -> Result<f64> {
    let x = PilotBlock::dft(users, len, 1.0)?;
    let total: f64 = tones
        .iter()
        .map(|h| fisher_nmse_bound(x.matrix(), sigma_w2, &h.matrix))
        .sum::<Result<f64>>()?;
    Ok(total / tones.len() as f64)
}

fn turbo(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let tones = spread(&channels(cfg, None)?, cfg.frame.num_tones_active)?;
    let mut jobs: Vec<Job> = Vec::new();
    for (snr, seed) in points(cfg) {
        let tones = tones.clone();
        jobs.push(Box::new(move || {
            let row = Row {
                experiment: "turbo",
                tone: None,
                snr_db: snr,
                seed,
            };
            let frame = frame_at(cfg, snr);
            let rx = receiver(cfg, CeMethod::Dea, MudMethod::Dea);
            let iters = frame.turbo_outer_iters + 1;
            let mut sums = vec![(0.0, CodedTotals::default()); iters];
            for f in 0..cfg.frames {
                for (i, tr) in run_turbo(&tones, &frame, &rx, seed, f)?.iter().enumerate() {
                    let s = &mut sums[i];
                    s.0 += tr.nmse;
                    s.1.bit_errors += tr.bit_errors;
                    s.1.info_bits += tr.info_bits;
                    s.1.symbol_errors += tr.symbol_errors;
                    s.1.symbols += tr.symbols;
                    s.1.evals += tr.ce_evals + tr.mud_evals;
                }
            }
            let mut rows = Vec::new();
            for (i, (nmse_sum, t)) in sums.iter().enumerate() {
                rows.push(row.rec(i, "dea-turbo", "nmse", nmse_sum / cfg.frames as f64, t.evals));
                rows.push(row.rec(i, "dea-turbo", "ber", t.ber(), t.evals));
                rows.push(row.rec(i, "dea-turbo", "ser", t.ser(), t.evals));
            }
            let s2 = frame.sigma_w2();
            rows.push(row.rec(0, "ncrlb", "nmse_pilot", mean_bound(&tones, frame.users, frame.s_pilot, s2)?, 0));
            rows.push(row.rec(0, "ncrlb", "nmse_frame", mean_bound(&tones, frame.users, frame.s_total(), s2)?, 0));
            if cfg.detectors.contains(&Algorithm::Ml) {
                let t = coded(cfg, &tones, &frame, &receiver(cfg, CeMethod::Perfect, MudMethod::Ml), seed)?;
                rows.extend(coded_rows(&row, Algorithm::Ml, &t, "_perfect_csi"));
            }
            Ok(rows)
        }));
    }
    Ok(jobs)
}

fn bandwidth(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let avail = channels(cfg, None)?;
    let mut jobs: Vec<Job> = Vec::new();
    for &case in &cfg.bandwidth_cases {
        let band = prefix(&avail, case, cfg.grid_tones);
        let tones = spread(&band, cfg.frame.num_tones_active.min(band.len()))?;
        let name = format!("bandwidth/{case}");
        for (snr, seed) in points(cfg) {
            for &alg in &cfg.detectors {
                let (tones, name) = (tones.clone(), name.clone());
                jobs.push(Box::new(move || {
                    let row = Row {
                        experiment: &name,
                        tone: None,
                        snr_db: snr,
                        seed,
                    };
                    match alg.mud() {
                        Some(m) => {
                            let t = coded(cfg, &tones, &frame_at(cfg, snr), &receiver(cfg, CeMethod::Perfect, m), seed)?;
                            Ok(coded_rows(&row, alg, &t, ""))
                        }
                        None => {
                            let (mut e, mut evals) = (0.0, 0);
                            for h in &tones {
                                let (n, _, ev) = ce_stats(cfg, alg, h, snr, seed).map_err(|e| numerical(h.tone_index, seed, e))?;
                                e += n;
                                evals += ev;
                            }
                            Ok(vec![row.rec(0, alg.as_str(), "nmse", e / tones.len() as f64, evals)])
                        }
                    }
                }));
            }
            if cfg.detectors.iter().any(|a| a.mud().is_none()) {
                let (tones, name) = (tones.clone(), name.clone());
                jobs.push(Box::new(move || {
                    let row = Row {
                        experiment: &name,
                        tone: None,
                        snr_db: snr,
                        seed,
                    };
                    let s2 = sigma2(cfg, snr);
                    let users = cfg.frame.users;
                    Ok(vec![
                        row.rec(0, "ncrlb", "nmse_pilot", mean_bound(&tones, users, cfg.frame.s_pilot, s2)?, 0),
                        row.rec(0, "ncrlb", "nmse_frame", mean_bound(&tones, users, cfg.frame.s_total(), s2)?, 0),
                    ])
                }));
            }
        }
    }
    Ok(jobs)
}

/// Perfect-CSI coded BER of every detector for each channel variant.
fn coded_sweep<'a>(
    cfg: &'a ExperimentConfig,
    variants: Vec<(String, Vec<ToneChannel>, Option<ImpulseNoiseConfig>)>,
) -> Result<Vec<Job<'a>>> {
    let mut jobs: Vec<Job> = Vec::new();
    for (name, tones, impulse) in variants {
        for (snr, seed) in points(cfg) {
            for (alg, m) in mud_algorithms(cfg) {
                let (name, tones) = (name.clone(), tones.clone());
                jobs.push(Box::new(move || {
                    let row = Row {
                        experiment: &name,
                        tone: None,
                        snr_db: snr,
                        seed,
                    };
                    let frame = FrameConfig {
                        impulse,
                        ..frame_at(cfg, snr)
                    };
                    let t = coded(cfg, &tones, &frame, &receiver(cfg, CeMethod::Perfect, m), seed)?;
                    Ok(coded_rows(&row, alg, &t, ""))
                }));
            }
        }
    }
    Ok(jobs)
}

fn loop_length(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let base = match &cfg.channel {
        ChannelSource::Synthetic(p) => *p,
        ChannelSource::Csv(_) => return Err(Error::config("a loop-length sweep needs the synthetic channel")),
    };
    let variants = cfg
        .loop_lengths_m
        .iter()
        .map(|&len| {
            let cable = CableModelParams {
                loop_length_m: len,
                ..base
            };
            let tones = spread(&channels(cfg, Some(cable))?, cfg.frame.num_tones_active)?;
            Ok((format!("loop-length/{len}"), tones, None))
        })
        .collect::<Result<_>>()?;
    coded_sweep(cfg, variants)
}

fn impulse(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let tones = spread(&channels(cfg, None)?, cfg.frame.num_tones_active)?;
    let variants = cfg
        .kappas
        .iter()
        .map(|&k| {
            let imp = (k > 0.0).then(|| ImpulseNoiseConfig::new(k, cfg.impulse_ratio_db)).transpose()?;
            Ok((format!("impulse/{k}"), tones.clone(), imp))
        })
        .collect::<Result<_>>()?;
    coded_sweep(cfg, variants)
}

fn ce_error(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let tones = spread(&channels(cfg, None)?, cfg.frame.num_tones_active)?;
    let mut jobs: Vec<Job> = Vec::new();
    for (snr, seed) in points(cfg) {
        for (alg, m) in mud_algorithms(cfg) {
            let tones = tones.clone();
            jobs.push(Box::new(move || {
                let row = Row {
                    experiment: "ce-error",
                    tone: None,
                    snr_db: snr,
                    seed,
                };
                let frame = frame_at(cfg, snr);
                let perfect = coded(cfg, &tones, &frame, &receiver(cfg, CeMethod::Perfect, m), seed)?;
                let estimated = coded(cfg, &tones, &frame, &receiver(cfg, CeMethod::Ls, m), seed)?;
                let mut rows = coded_rows(&row, alg, &perfect, "_perfect_csi");
                rows.extend(coded_rows(&row, alg, &estimated, "_estimated_csi"));
                Ok(rows)
            }));
        }
    }
    Ok(jobs)
}

fn complexity(cfg: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let avail = channels(cfg, None)?;
    let c = Constellation::qam(cfg.frame.order)?;
    let mut jobs: Vec<Job> = Vec::new();
    for &case in &cfg.bandwidth_cases {
        let band = prefix(&avail, case, cfg.grid_tones);
        let tones = spread(&band, cfg.tones.min(band.len()))?;
        let name = format!("complexity/{case}");
        for (snr, seed) in points(cfg) {
            for &alg in &cfg.detectors {
                if alg.mud().is_none() {
                    continue;
                }
                let (tones, name, c) = (tones.clone(), name.clone(), c.clone());
                jobs.push(Box::new(move || complexity_rows(cfg, alg, &tones, &c, &name, snr, seed)));
            }
        }
    }
    Ok(jobs)
}

fn complexity_rows(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    tones: &[ToneChannel],
    c: &Constellation,
    name: &str,
    snr: f64,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let row = Row {
        experiment: name,
        tone: None,
        snr_db: snr,
        seed,
    };
    let n_ml = (c.order() as u64).pow(cfg.frame.users as u32);
    let mut evals = Vec::new();
    let mut agree = 0usize;
    for h in tones {
        let set = vectors(cfg, h, c, snr, seed);
        for (v, y) in set.received.iter().enumerate() {
            let s = derive_seed(seed, &[h.tone_index as u64, v as u64]);
            let d = detect(alg.mud().expect("detector"), y, &h.matrix, c, &cfg.mud_params, s)
                .map_err(|e| numerical(h.tone_index, seed, e))?;
            if alg == Algorithm::Dea {
                let ml = ml_detect(y, &h.matrix, c).map_err(|e| numerical(h.tone_index, seed, e))?;
                agree += usize::from(ml.labels == d.labels);
            }
            evals.push(d.eval_count);
        }
    }
    let n = evals.len() as f64;
    let mean = evals.iter().sum::<u64>() as f64 / n;
    let mut sorted = evals.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2];
    let mut rows = vec![
        row.rec(0, alg.as_str(), "evals_mean", mean, median),
        row.rec(0, alg.as_str(), "complexity_pct", super::complexity_ratio(mean.round() as u64, n_ml)?, median),
        row.rec(0, alg.as_str(), "complexity_median_pct", super::complexity_ratio(median, n_ml)?, median),
    ];
    if alg == Algorithm::Dea {
        rows.push(row.rec(0, alg.as_str(), "ml_agreement", agree as f64 / n, median));
    }
    Ok(rows)
}
