//! Browser bindings: a channel profile, DE convergence traces and a detector
//! comparison, each returned as a JSON string.

use fext_turbo::channel::{noise_enhancement, synthesize_channel, CableModelParams, ToneChannel, ToneGrid};
use fext_turbo::de::DeParams;
use fext_turbo::detectors::{dea_mud, ml_detect, sud_detect, zf_detect, DetectionResult};
use fext_turbo::estimation::{dea_ce_history, ls_estimate, nmse, PilotBlock};
use fext_turbo::linalg::{cgauss, CMatrix};
use fext_turbo::modem::Constellation;
use fext_turbo::rng::{derive_seed, substream};
use fext_turbo::turbo_engine::{sigma_w2_from_ebn0, CODE_RATE};
use fext_turbo::{Complex64, Error, Result};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const USERS: usize = 4;
const GRID_TONES: usize = 256;
const MAX_VECTORS: usize = 500;

#[derive(Serialize)]
pub struct ChannelProfile {
    pub freq_mhz: Vec<f64>,
    pub direct_db: Vec<f64>,
    pub fext_db: Vec<f64>,
    /// ZF noise enhancement of the normalized channel.
    pub gamma_db: Vec<f64>,
}

#[derive(Serialize)]
pub struct Convergence {
    pub tone: usize,
    pub ce_nmse_db: Vec<f64>,
    pub ls_nmse_db: f64,
    pub mud_cf: Vec<f64>,
    pub ml_cf: f64,
}

#[derive(Serialize)]
pub struct DetectorRow {
    pub name: &'static str,
    pub ser: f64,
    pub mean_evals: f64,
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn cable(loop_length_m: f64) -> CableModelParams {
    CableModelParams {
        loop_length_m,
        ..CableModelParams::default()
    }
}

fn tone_channel(loop_length_m: f64, tone: usize) -> Result<ToneChannel> {
    if tone >= GRID_TONES {
        return Err(Error::Config(format!("tone {tone} outside 0..{GRID_TONES}")));
    }
    let all = synthesize_channel(&ToneGrid::gfast(GRID_TONES), &cable(loop_length_m), USERS)?;
    Ok(all[tone].normalized())
}

fn received(h: &CMatrix, x: &[Complex64], sigma2: f64, rng: &mut fext_turbo::rng::SimRng) -> Vec<Complex64> {
    (0..USERS)
        .map(|l| (0..USERS).map(|m| h[(l, m)] * x[m]).sum::<Complex64>() + cgauss(rng, sigma2))
        .collect()
}

pub fn channel_profile(loop_length_m: f64) -> Result<ChannelProfile> {
    let all = synthesize_channel(&ToneGrid::gfast(GRID_TONES), &cable(loop_length_m), USERS)?;
    let mut p = ChannelProfile {
        freq_mhz: Vec::with_capacity(all.len()),
        direct_db: Vec::with_capacity(all.len()),
        fext_db: Vec::with_capacity(all.len()),
        gamma_db: Vec::with_capacity(all.len()),
    };
    for h in &all {
        p.freq_mhz.push(h.center_freq_hz / 1e6);
        p.direct_db.push(20.0 * h.mean_direct_magnitude().log10());
        p.fext_db.push(20.0 * h.mean_fext_magnitude().log10());
        p.gamma_db.push(db(noise_enhancement(&h.normalized())?));
    }
    Ok(p)
}

/// Best-member traces of DEA-CE (pilot block of four symbols) and DEA-MUD
/// (one received vector) on one tone.
pub fn convergence(loop_length_m: f64, tone: usize, snr_db: f64, seed: u64) -> Result<Convergence> {
    let h = tone_channel(loop_length_m, tone)?;
    let sigma2 = sigma_w2_from_ebn0(snr_db, 4, CODE_RATE);
    let mut rng = substream(seed, &[1]);

    let pilots = PilotBlock::dft(USERS, USERS, 1.0)?;
    let clean = &h.matrix * pilots.matrix();
    let y = CMatrix::from_fn(USERS, USERS, |r, s| clean[(r, s)] + cgauss(&mut rng, sigma2));
    let ls = nmse(&ls_estimate(pilots.matrix(), &y)?.matrix, &h.matrix)?;
    let (_, history) = dea_ce_history(pilots.matrix(), &y, &DeParams::ce_default(), seed)?;
    let ce_nmse_db = history
        .iter()
        .map(|m| nmse(m, &h.matrix).map(db))
        .collect::<Result<Vec<f64>>>()?;

    let c = Constellation::qam(16)?;
    let x: Vec<Complex64> = (0..USERS).map(|_| c.point(rng.random_range(0..c.order()))).collect();
    let y = received(&h.matrix, &x, sigma2, &mut rng);
    let ml = ml_detect(&y, &h.matrix, &c)?;
    let de = dea_mud(&y, &h.matrix, &c, &DeParams::mud_default(), seed)?;
    Ok(Convergence {
        tone,
        ce_nmse_db,
        ls_nmse_db: db(ls),
        mud_cf: de.cf_trace,
        ml_cf: ml.cf_value,
    })
}

/// Uncoded 16-QAM symbol error rates of the four detectors on one tone.
pub fn detector_ser(loop_length_m: f64, tone: usize, snr_db: f64, vectors: usize, seed: u64) -> Result<Vec<DetectorRow>> {
    if vectors == 0 || vectors > MAX_VECTORS {
        return Err(Error::Config(format!("vector count must lie in 1..={MAX_VECTORS}")));
    }
    let h = tone_channel(loop_length_m, tone)?;
    let c = Constellation::qam(16)?;
    let sigma2 = sigma_w2_from_ebn0(snr_db, 4, CODE_RATE);
    let names = ["ml", "dea", "zf", "sud"];
    let mut errors = [0u64; 4];
    let mut evals = [0u64; 4];
    let mut rng = substream(seed, &[2]);
    for v in 0..vectors {
        let labels: Vec<usize> = (0..USERS).map(|_| rng.random_range(0..c.order())).collect();
        let x: Vec<Complex64> = labels.iter().map(|&m| c.point(m)).collect();
        let y = received(&h.matrix, &x, sigma2, &mut rng);
        let found: [DetectionResult; 4] = [
            ml_detect(&y, &h.matrix, &c)?,
            dea_mud(&y, &h.matrix, &c, &DeParams::mud_default(), derive_seed(seed, &[v as u64]))?,
            zf_detect(&y, &h.matrix, &c)?,
            sud_detect(&y, &h.matrix, &c)?,
        ];
        for (k, d) in found.iter().enumerate() {
            errors[k] += labels.iter().zip(&d.labels).filter(|(a, b)| a != b).count() as u64;
            evals[k] += d.eval_count;
        }
    }
    let symbols = (vectors * USERS) as f64;
    Ok((0..4)
        .map(|k| DetectorRow {
            name: names[k],
            ser: errors[k] as f64 / symbols,
            mean_evals: evals[k] as f64 / vectors as f64,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = channelProfile)]
pub fn channel_profile_js(loop_length_m: f64) -> Result<String, JsError> {
    to_js(channel_profile(loop_length_m))
}

#[wasm_bindgen(js_name = convergence)]
pub fn convergence_js(loop_length_m: f64, tone: u32, snr_db: f64, seed: u32) -> Result<String, JsError> {
    to_js(convergence(loop_length_m, tone as usize, snr_db, seed as u64))
}

#[wasm_bindgen(js_name = detectorSer)]
pub fn detector_ser_js(loop_length_m: f64, tone: u32, snr_db: f64, vectors: u32, seed: u32) -> Result<String, JsError> {
    to_js(detector_ser(loop_length_m, tone as usize, snr_db, vectors as usize, seed as u64))
}
