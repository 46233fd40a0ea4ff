//! Recursive systematic convolutional code and its Log-MAP (BCJR) decoder.

use super::LLR_MAX;

/// Trellis of a rate-1/2 RSC encoder. Generators are octal-style bit masks
/// whose MSB is the tap on the current register input.
#[derive(Debug, Clone)]
pub struct Trellis {
    memory: usize,
    next: Vec<[usize; 2]>,
    parity: Vec<[u8; 2]>,
    /// Input that drives the register towards the zero state.
    flush_input: Vec<u8>,
}

impl Trellis {
    pub fn new(feedback: u32, feedforward: u32, memory: usize) -> Self {
        let states = 1usize << memory;
        let tap = |g: u32, i: usize| ((g >> (memory - i)) & 1) as u8;
        let mut next = vec![[0; 2]; states];
        let mut parity = vec![[0; 2]; states];
        let mut flush_input = vec![0; states];
        for s in 0..states {
            // Bit memory-1 of the state holds a_{k-1}, bit 0 holds a_{k-m}.
            let reg = |i: usize| ((s >> (memory - i)) & 1) as u8;
            let fb: u8 = (1..=memory).fold(0, |acc, i| acc ^ (tap(feedback, i) & reg(i)));
            flush_input[s] = fb;
            for u in 0..2u8 {
                let a = u ^ fb;
                let p = (1..=memory).fold(tap(feedforward, 0) & a, |acc, i| acc ^ (tap(feedforward, i) & reg(i)));
                next[s][u as usize] = ((a as usize) << (memory - 1)) | (s >> 1);
                parity[s][u as usize] = p;
            }
        }
        Trellis {
            memory,
            next,
            parity,
            flush_input,
        }
    }

    /// The (7, 5) code with feedback 7, constraint length 3.
    pub fn rsc75() -> Self {
        Trellis::new(0o7, 0o5, 2)
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn states(&self) -> usize {
        self.next.len()
    }

    /// Encodes `bits` from the zero state and appends `memory` termination
    /// steps. Returns (systematic incl. tail inputs, parity) of equal length.
    pub fn encode_terminated(&self, bits: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let n = bits.len() + self.memory;
        let mut sys = Vec::with_capacity(n);
        let mut par = Vec::with_capacity(n);
        let mut s = 0;
        for &u in bits {
            sys.push(u);
            par.push(self.parity[s][u as usize]);
            s = self.next[s][u as usize];
        }
        for _ in 0..self.memory {
            let u = self.flush_input[s];
            sys.push(u);
            par.push(self.parity[s][u as usize]);
            s = self.next[s][u as usize];
        }
        debug_assert_eq!(s, 0);
        (sys, par)
    }
}

#[inline]
fn max_star(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Posterior LLRs from one constituent decoding pass.
#[derive(Debug, Clone, Default)]
pub struct BcjrOutput {
    /// A-posteriori LLR of each input bit (data and tail).
    pub input_post: Vec<f64>,
    /// A-posteriori LLR of each parity bit.
    pub parity_post: Vec<f64>,
}

/// Log-MAP decoding of a terminated trellis. `sys` and `par` are channel
/// LLRs (0 for punctured bits), `apriori` covers the leading input bits; any
/// remaining steps (the tail) get a zero prior.
pub fn bcjr(trellis: &Trellis, sys: &[f64], par: &[f64], apriori: &[f64], out: &mut BcjrOutput) {
    let n = sys.len();
    let ns = trellis.states();
    debug_assert_eq!(par.len(), n);
    let neg = f64::NEG_INFINITY;

    // Branch metric for LLR convention L = ln P(0)/P(1): 0.5 * sum (+/-) L.
    let gamma = |k: usize, u: u8, p: u8| {
        let la = apriori.get(k).copied().unwrap_or(0.0);
        let su = if u == 0 { 0.5 } else { -0.5 };
        let sp = if p == 0 { 0.5 } else { -0.5 };
        su * (sys[k] + la) + sp * par[k]
    };

    let mut alpha = vec![neg; (n + 1) * ns];
    alpha[0] = 0.0;
    for k in 0..n {
        let (cur, nxt) = alpha.split_at_mut((k + 1) * ns);
        let cur = &cur[k * ns..];
        let nxt = &mut nxt[..ns];
        for s in 0..ns {
            if cur[s] == neg {
                continue;
            }
            for u in 0..2u8 {
                let t = trellis.next[s][u as usize];
                let m = cur[s] + gamma(k, u, trellis.parity[s][u as usize]);
                nxt[t] = max_star(nxt[t], m);
            }
        }
        // Normalize to keep metrics bounded.
        let top = nxt.iter().cloned().fold(neg, f64::max);
        if top.is_finite() {
            nxt.iter_mut().for_each(|v| *v -= top);
        }
    }

    let mut beta_next = vec![neg; ns];
    beta_next[0] = 0.0;
    let mut beta_cur = vec![neg; ns];
    out.input_post.clear();
    out.input_post.resize(n, 0.0);
    out.parity_post.clear();
    out.parity_post.resize(n, 0.0);
    for k in (0..n).rev() {
        let a = &alpha[k * ns..(k + 1) * ns];
        let mut u0 = neg;
        let mut u1 = neg;
        let mut p0 = neg;
        let mut p1 = neg;
        beta_cur.iter_mut().for_each(|v| *v = neg);
        for s in 0..ns {
            for u in 0..2u8 {
                let t = trellis.next[s][u as usize];
                let p = trellis.parity[s][u as usize];
                let g = gamma(k, u, p);
                let b = beta_next[t];
                if b == neg {
                    continue;
                }
                beta_cur[s] = max_star(beta_cur[s], g + b);
                if a[s] == neg {
                    continue;
                }
                let m = a[s] + g + b;
                if u == 0 {
                    u0 = max_star(u0, m);
                } else {
                    u1 = max_star(u1, m);
                }
                if p == 0 {
                    p0 = max_star(p0, m);
                } else {
                    p1 = max_star(p1, m);
                }
            }
        }
        out.input_post[k] = (u0 - u1).clamp(-LLR_MAX, LLR_MAX);
        out.parity_post[k] = (p0 - p1).clamp(-LLR_MAX, LLR_MAX);
        let top = beta_cur.iter().cloned().fold(neg, f64::max);
        if top.is_finite() {
            beta_cur.iter_mut().for_each(|v| *v -= top);
        }
        std::mem::swap(&mut beta_cur, &mut beta_next);
    }
}
