use num_complex::Complex64;

use super::rsc::{bcjr, BcjrOutput, Trellis};
use super::{clamp_llr, Interleaver, LlrFrame, LlrRole};
use crate::error::{Error, Result};
use crate::modem::Constellation;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurboCodeConfig {
    /// Information bits per code block.
    pub block_length_bits: usize,
    pub interleaver_seed: u64,
    pub max_inner_iterations: usize,
    /// Stop once hard decisions repeat across a full iteration.
    pub early_stop: bool,
}

impl TurboCodeConfig {
    pub fn new(block_length_bits: usize, interleaver_seed: u64) -> Self {
        TurboCodeConfig {
            block_length_bits,
            interleaver_seed,
            max_inner_iterations: 8,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// A-posteriori LLRs of every coded bit, in transmission order.
    pub c_po: LlrFrame,
    pub hard_bits: Vec<u8>,
    pub iterations: usize,
}

/// Rate-1/2 PCCC. Coded layout for a block of `K` information bits:
/// `u0 p0 u1 p1 ... u{K-1} p{K-1}` where `p_k` is encoder 1's parity for even
/// `k` and encoder 2's (on the interleaved sequence) for odd `k`, followed by
/// both unpunctured termination tails `x p x p`. Length `2K + 4 * memory`.
#[derive(Debug, Clone)]
pub struct TurboCode {
    cfg: TurboCodeConfig,
    trellis: Trellis,
    inner: Interleaver,
}

impl TurboCode {
    pub fn new(cfg: TurboCodeConfig) -> Result<Self> {
        if cfg.block_length_bits == 0 {
            return Err(Error::config("turbo block length must be at least one bit"));
        }
        if cfg.max_inner_iterations == 0 {
            return Err(Error::config("turbo decoder needs at least one iteration"));
        }
        let inner = Interleaver::new(cfg.block_length_bits, derive_seed(cfg.interleaver_seed, &[0x7E1]));
        Ok(TurboCode {
            cfg,
            trellis: Trellis::rsc75(),
            inner,
        })
    }

    pub fn config(&self) -> &TurboCodeConfig {
        &self.cfg
    }

    pub fn info_len(&self) -> usize {
        self.cfg.block_length_bits
    }

    /// Number of termination bits (both tails, systematic and parity).
    pub fn tail_len(&self) -> usize {
        4 * self.trellis.memory()
    }

    pub fn coded_len(&self) -> usize {
        2 * self.cfg.block_length_bits + self.tail_len()
    }

    /// Channel bit interleaver between encoder output and modulator.
    pub fn channel_interleaver(&self) -> Interleaver {
        Interleaver::new(self.coded_len(), self.cfg.interleaver_seed)
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        let k = self.cfg.block_length_bits;
        if info.len() != k {
            return Err(Error::usage(format!("encoder expects {k} bits, got {}", info.len())));
        }
        let (sys1, par1) = self.trellis.encode_terminated(info);
        let permuted = self.inner.interleave(info)?;
        let (sys2, par2) = self.trellis.encode_terminated(&permuted);
        let mut out = Vec::with_capacity(self.coded_len());
        for i in 0..k {
            out.push(info[i]);
            out.push(if i % 2 == 0 { par1[i] } else { par2[i] });
        }
        for (sys, par) in [(&sys1, &par1), (&sys2, &par2)] {
            for i in k..sys.len() {
                out.push(sys[i]);
                out.push(par[i]);
            }
        }
        Ok(out)
    }

    /// Iterative Log-MAP decoding. `c_pr` holds channel LLRs of the coded
    /// bits in transmission order.
    pub fn decode(&self, c_pr: &LlrFrame) -> Result<DecodeOutput> {
        if c_pr.role != LlrRole::CPr {
            return Err(Error::usage(format!("decoder input must be a-priori (CPr), got {:?}", c_pr.role)));
        }
        let n = self.coded_len();
        if c_pr.len() != n {
            return Err(Error::usage(format!("decoder expects {n} LLRs, got {}", c_pr.len())));
        }
        let k = self.cfg.block_length_bits;
        let m = self.trellis.memory();
        let llr: Vec<f64> = c_pr.values.iter().map(|&v| clamp_llr(v)).collect();
        let sys: Vec<f64> = (0..k).map(|i| llr[2 * i]).collect();
        let tail1 = &llr[2 * k..2 * k + 2 * m];
        let tail2 = &llr[2 * k + 2 * m..];

        let mut sys1 = sys.clone();
        let mut par1: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { llr[2 * i + 1] } else { 0.0 }).collect();
        let perm = self.inner.permutation();
        let mut sys2: Vec<f64> = perm.iter().map(|&p| sys[p]).collect();
        let mut par2: Vec<f64> = (0..k).map(|i| if i % 2 == 1 { llr[2 * i + 1] } else { 0.0 }).collect();
        for t in 0..m {
            sys1.push(tail1[2 * t]);
            par1.push(tail1[2 * t + 1]);
            sys2.push(tail2[2 * t]);
            par2.push(tail2[2 * t + 1]);
        }

        let mut out1 = BcjrOutput::default();
        let mut out2 = BcjrOutput::default();
        let mut ext1 = vec![0.0; k];
        let mut ext2_natural = vec![0.0; k];
        let mut la2 = vec![0.0; k];
        let mut post = vec![0.0; k];
        let mut prev_hard: Vec<u8> = sys.iter().map(|&v| u8::from(v < 0.0)).collect();
        let mut hard = prev_hard.clone();
        let mut iterations = 0;

        for it in 1..=self.cfg.max_inner_iterations {
            iterations = it;
            bcjr(&self.trellis, &sys1, &par1, &ext2_natural, &mut out1);
            for i in 0..k {
                ext1[i] = clamp_llr(out1.input_post[i] - sys1[i] - ext2_natural[i]);
            }
            for (i, &p) in perm.iter().enumerate() {
                la2[i] = ext1[p];
            }
            bcjr(&self.trellis, &sys2, &par2, &la2, &mut out2);
            for (i, &p) in perm.iter().enumerate() {
                ext2_natural[p] = clamp_llr(out2.input_post[i] - sys2[i] - la2[i]);
            }
            for i in 0..k {
                post[i] = sys[i] + ext1[i] + ext2_natural[i];
                hard[i] = u8::from(post[i] < 0.0);
            }
            if self.cfg.early_stop && hard == prev_hard {
                break;
            }
            prev_hard.clone_from(&hard);
        }

        let mut c_po = Vec::with_capacity(n);
        for i in 0..k {
            c_po.push(post[i]);
            c_po.push(if i % 2 == 0 { out1.parity_post[i] } else { out2.parity_post[i] });
        }
        for o in [&out1, &out2] {
            for t in k..k + m {
                c_po.push(o.input_post[t]);
                c_po.push(o.parity_post[t]);
            }
        }
        Ok(DecodeOutput {
            c_po: LlrFrame::new(c_po, LlrRole::CPo),
            hard_bits: hard,
            iterations,
        })
    }
}

/// Re-encodes decoded information bits and maps them onto symbols exactly as
/// the transmitter does: encode, channel-interleave, Gray map.
pub fn reencode_remodulate(
    code: &TurboCode,
    channel_pi: &Interleaver,
    info: &[u8],
    constellation: &Constellation,
) -> Result<Vec<Complex64>> {
    let coded = code.encode(info)?;
    let bits = channel_pi.interleave(&coded)?;
    let k = constellation.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::usage(format!(
            "{} coded bits do not fill whole {}-bit symbols",
            bits.len(),
            k
        )));
    }
    bits.chunks(k).map(|w| constellation.map_bits(w)).collect()
}
