//! Per-tone multi-user detectors: single-user slicing, zero-forcing,
//! exhaustive ML and binary-DE search, all scored by `||Y - H X||^2`, plus
//! soft-output extraction for the turbo loop.
//!
//! A candidate for `L` users is a bit string of `L * log2 M` bits: user 0's
//! label first, each label MSB first. Lexicographic order on bit strings is
//! therefore lexicographic order on label tuples.

use num_complex::Complex64;

use crate::de::{binary, BitPopulation, BitVector, DeParams};
use crate::error::{Error, Result};
use crate::fec::{clamp_llr, LlrFrame, LlrRole};
use crate::linalg::{inverse, CMatrix};
use crate::modem::Constellation;

/// Largest candidate count `ml_detect` will enumerate.
pub const ML_BUDGET: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub symbols: Vec<Complex64>,
    pub labels: Vec<usize>,
    pub bits: Vec<u8>,
    pub cf_value: f64,
    pub eval_count: u64,
    /// DE generations used; 0 for non-iterative detectors.
    pub generations: usize,
    /// Best cost per DE generation (empty for non-iterative detectors).
    pub cf_trace: Vec<f64>,
}

impl DetectionResult {
    fn from_labels(labels: Vec<usize>, h: &CMatrix, y: &[Complex64], c: &Constellation, eval_count: u64) -> Self {
        let symbols: Vec<Complex64> = labels.iter().map(|&m| c.point(m)).collect();
        let bits = labels.iter().flat_map(|&m| c.label_bits(m)).collect();
        let cf_value = cf_mud(&symbols, h, y);
        DetectionResult {
            symbols,
            labels,
            bits,
            cf_value,
            eval_count,
            generations: 0,
            cf_trace: Vec::new(),
        }
    }
}

/// `||y - h x||^2`.
pub fn cf_mud(x: &[Complex64], h: &CMatrix, y: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for (r, yr) in y.iter().enumerate() {
        let mut s = *yr;
        for (l, xl) in x.iter().enumerate() {
            s -= h[(r, l)] * xl;
        }
        acc += s.norm_sqr();
    }
    acc
}

fn check_dims(h: &CMatrix, y: &[Complex64]) -> Result<()> {
    if h.nrows() != y.len() || h.ncols() == 0 {
        return Err(Error::usage(format!(
            "channel is {}x{} but the received vector has {} entries",
            h.nrows(),
            h.ncols(),
            y.len()
        )));
    }
    Ok(())
}

/// One-tap equalization of each line by its own direct path, then slicing.
pub fn sud_detect(y: &[Complex64], h: &CMatrix, c: &Constellation) -> Result<DetectionResult> {
    check_dims(h, y)?;
    let labels = (0..h.ncols())
        .map(|l| {
            let d = h[(l, l)];
            if d.norm_sqr() == 0.0 {
                return Err(Error::Singular(format!("line {} has a zero direct path", l + 1)));
            }
            Ok(c.slice_label(y[l] / d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionResult::from_labels(labels, h, y, c, 0))
}

/// Slices `H^-1 y`.
pub fn zf_detect(y: &[Complex64], h: &CMatrix, c: &Constellation) -> Result<DetectionResult> {
    check_dims(h, y)?;
    let inv = inverse(h, "zero-forcing channel")?;
    let labels = (0..h.ncols())
        .map(|l| {
            let z: Complex64 = (0..y.len()).map(|r| inv[(l, r)] * y[r]).sum();
            c.slice_label(z)
        })
        .collect();
    Ok(DetectionResult::from_labels(labels, h, y, c, 0))
}

/// Precomputed columns `h_l * x_m` for fast cost evaluation.
struct MudTable {
    users: usize,
    rows: usize,
    order: usize,
    bits: usize,
    /// `[(l * order + m) * rows + r]`
    cols: Vec<Complex64>,
    /// Maps a bit-reversed `bits`-wide field to its label.
    rev: Vec<usize>,
}

impl MudTable {
    fn new(h: &CMatrix, c: &Constellation) -> Self {
        let (rows, users, order, bits) = (h.nrows(), h.ncols(), c.order(), c.bits_per_symbol());
        let mut cols = Vec::with_capacity(users * order * rows);
        for l in 0..users {
            for p in c.points() {
                for r in 0..rows {
                    cols.push(h[(r, l)] * p);
                }
            }
        }
        let rev = (0..order)
            .map(|v| (0..bits).fold(0, |acc, j| (acc << 1) | ((v >> j) & 1)))
            .collect();
        MudTable {
            users,
            rows,
            order,
            bits,
            cols,
            rev,
        }
    }

    #[inline]
    fn col(&self, l: usize, m: usize) -> &[Complex64] {
        let o = (l * self.order + m) * self.rows;
        &self.cols[o..o + self.rows]
    }

    fn label(&self, g: &BitVector, l: usize) -> usize {
        let start = l * self.bits;
        if g.len() <= 64 {
            let raw = (g.words()[0] >> start) as usize & (self.order - 1);
            self.rev[raw]
        } else {
            g.field(start, self.bits) as usize
        }
    }

    fn cf_bits(&self, y: &[Complex64], g: &BitVector, resid: &mut [Complex64]) -> f64 {
        resid.copy_from_slice(y);
        for l in 0..self.users {
            let col = self.col(l, self.label(g, l));
            for (r, v) in resid.iter_mut().zip(col) {
                *r -= v;
            }
        }
        resid.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn ml_candidates(c: &Constellation, users: usize) -> u128 {
    (c.order() as u128).checked_pow(users as u32).unwrap_or(u128::MAX)
}

/// Exhaustive search over all `M^L` candidates. The first strict minimum in
/// lexicographic order wins ties.
pub fn ml_detect(y: &[Complex64], h: &CMatrix, c: &Constellation) -> Result<DetectionResult> {
    check_dims(h, y)?;
    let users = h.ncols();
    let candidates = ml_candidates(c, users);
    if candidates > ML_BUDGET {
        return Err(Error::Budget {
            candidates,
            limit: ML_BUDGET,
        });
    }
    let t = MudTable::new(h, c);
    let rows = t.rows;
    // partial[l] = y - sum_{j < l} h_j x_j
    let mut partial = vec![Complex64::new(0.0, 0.0); (users + 1) * rows];
    partial[..rows].copy_from_slice(y);
    let mut labels = vec![0usize; users];
    let mut best = vec![0usize; users];
    let mut best_cf = f64::INFINITY;
    let mut depth = 0;
    loop {
        // Refresh partial sums from `depth` down to the last user.
        for l in depth..users - 1 {
            let (head, tail) = partial.split_at_mut((l + 1) * rows);
            let col = t.col(l, labels[l]);
            for r in 0..rows {
                tail[r] = head[l * rows + r] - col[r];
            }
        }
        let last = users - 1;
        let base = &partial[last * rows..(last + 1) * rows];
        for m in 0..t.order {
            let col = t.col(last, m);
            let mut cf = 0.0;
            for r in 0..rows {
                cf += (base[r] - col[r]).norm_sqr();
            }
            if cf < best_cf {
                best_cf = cf;
                labels[last] = m;
                best.copy_from_slice(&labels);
            }
        }
        // Advance the odometer over users 0..last.
        let mut l = last;
        loop {
            if l == 0 {
                let eval = u64::try_from(candidates).expect("budget fits in u64");
                return Ok(DetectionResult::from_labels(best, h, y, c, eval));
            }
            l -= 1;
            labels[l] += 1;
            if labels[l] < t.order {
                depth = l;
                break;
            }
            labels[l] = 0;
        }
    }
}

/// Binary-DE search over the candidate bit strings.
pub fn dea_mud(y: &[Complex64], h: &CMatrix, c: &Constellation, params: &DeParams, seed: u64) -> Result<DetectionResult> {
    dea_mud_observed(y, h, c, params, seed, |_| {})
}

/// [`dea_mud`] plus the best labels after initialization and after every
/// generation.
pub fn dea_mud_history(
    y: &[Complex64],
    h: &CMatrix,
    c: &Constellation,
    params: &DeParams,
    seed: u64,
) -> Result<(DetectionResult, Vec<Vec<usize>>)> {
    check_dims(h, y)?;
    let t = MudTable::new(h, c);
    let mut history = Vec::new();
    let res = dea_mud_observed(y, h, c, params, seed, |pop| {
        history.push((0..t.users).map(|l| t.label(pop.best(), l)).collect());
    })?;
    Ok((res, history))
}

fn dea_mud_observed<O>(y: &[Complex64], h: &CMatrix, c: &Constellation, params: &DeParams, seed: u64, observer: O) -> Result<DetectionResult>
where
    O: FnMut(&BitPopulation),
{
    check_dims(h, y)?;
    let t = MudTable::new(h, c);
    let mut resid = vec![Complex64::new(0.0, 0.0); t.rows];
    let nbits = t.users * t.bits;
    let out = binary::run_bits_observed(|g: &BitVector| t.cf_bits(y, g, &mut resid), nbits, params, seed, observer)?;
    let labels = (0..t.users).map(|l| t.label(&out.best, l)).collect();
    let mut res = DetectionResult::from_labels(labels, h, y, c, out.eval_count);
    res.generations = out.generations;
    res.cf_trace = out.best_trace;
    Ok(res)
}

/// Soft detector output for one received vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftOutput {
    /// A-posteriori LLRs, `m_e + m_pr`.
    pub m_po: LlrFrame,
    /// Extrinsic LLRs.
    pub m_e: LlrFrame,
}

/// Per-user max-log LLRs around a hard solution: the other users' detected
/// symbols are cancelled from `y`, the residual is matched-filtered onto the
/// user's column and demapped with the user's a-priori LLRs.
pub fn extract_soft(
    result: &DetectionResult,
    h: &CMatrix,
    y: &[Complex64],
    sigma_w2: f64,
    prior: Option<&LlrFrame>,
    c: &Constellation,
) -> Result<SoftOutput> {
    check_dims(h, y)?;
    let users = h.ncols();
    let k = c.bits_per_symbol();
    if result.symbols.len() != users {
        return Err(Error::usage(format!(
            "detection holds {} symbols for {} users",
            result.symbols.len(),
            users
        )));
    }
    if !(sigma_w2 > 0.0) {
        return Err(Error::usage(format!("noise variance {sigma_w2} must be positive")));
    }
    let zeros = vec![0.0; users * k];
    let pr = match prior {
        Some(p) if p.len() != users * k => {
            return Err(Error::usage(format!("{} prior LLRs for {} bits", p.len(), users * k)));
        }
        Some(p) => &p.values[..],
        None => &zeros[..],
    };
    let mut resid: Vec<Complex64> = y.to_vec();
    for (r, v) in resid.iter_mut().enumerate() {
        for (l, x) in result.symbols.iter().enumerate() {
            *v -= h[(r, l)] * x;
        }
    }
    let mut ext = vec![0.0; users * k];
    for l in 0..users {
        let norm2: f64 = (0..y.len()).map(|r| h[(r, l)].norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::Singular(format!("user {} has an all-zero channel column", l + 1)));
        }
        let out = &mut ext[l * k..(l + 1) * k];
        let pl = &pr[l * k..(l + 1) * k];
        if users == 1 {
            c.demap_soft_into(y[0], h[(0, 0)], sigma_w2, pl, out);
        } else {
            // Matched filter of (residual + own contribution) onto the column.
            let mut z = Complex64::new(0.0, 0.0);
            for r in 0..y.len() {
                z += h[(r, l)].conj() * (resid[r] + h[(r, l)] * result.symbols[l]);
            }
            let g = norm2.sqrt();
            c.demap_soft_into(z / g, Complex64::new(g, 0.0), sigma_w2, pl, out);
        }
    }
    let m_e: Vec<f64> = ext.into_iter().map(clamp_llr).collect();
    let m_po = m_e.iter().zip(pr).map(|(e, p)| e + p).collect();
    Ok(SoftOutput {
        m_po: LlrFrame {
            values: m_po,
            role: LlrRole::MPo,
        },
        m_e: LlrFrame {
            values: m_e,
            role: LlrRole::ME,
        },
    })
}
