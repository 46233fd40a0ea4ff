//! Bit-string genomes.
//!
//! Mutation uses a random mask `z` whose bits are set where a standard
//! normal draw falls below `lambda`:
//! `donor = b ^ (z & (best ^ b)) ^ (z & (r2 ^ r3))`.

use rand::Rng;
use statrs::function::erf::erfc;

use super::{evolve, sample_lambda, DeOutcome, DeParams, Population, SearchSpace};
use crate::error::{Error, Result};
use crate::rng::{substream, SimRng};

/// Fixed-length bit string packed into 64-bit words (bit `i` lives in word
/// `i / 64`, position `i % 64`). Unused high bits are always zero.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl Clone for BitVector {
    fn clone(&self) -> Self {
        BitVector {
            words: self.words.clone(),
            len: self.len,
        }
    }

    fn clone_from(&mut self, source: &Self) {
        self.words.clone_from(&source.words);
        self.len = source.len;
    }
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b != 0);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| u8::from(self.get(i))).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Reads `width <= 64` bits starting at `start` as an MSB-first integer.
    pub fn field(&self, start: usize, width: usize) -> u64 {
        (0..width).fold(0u64, |acc, j| (acc << 1) | u64::from(self.get(start + j)))
    }

    fn random(len: usize, rng: &mut SimRng) -> Self {
        let mut v = Self::zeros(len);
        for w in &mut v.words {
            *w = rng.random();
        }
        v.trim();
        v
    }

    fn trim(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

/// Mask with bit `i` set when `z_i < lambda`, `z_i` standard normal.
pub fn mask_from_lambda<R: Rng + ?Sized>(lambda: f64, len: usize, rng: &mut R) -> BitVector {
    let mut m = BitVector::zeros(len);
    fill_mask(lambda, rng, &mut m);
    m
}

/// Bits are independent with `P(z < lambda) = Phi(lambda)`, so they are
/// drawn by comparing 32-bit uniforms with that probability.
fn fill_mask<R: Rng + ?Sized>(lambda: f64, rng: &mut R, out: &mut BitVector) {
    fill_bernoulli(normal_cdf(lambda), rng, out);
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Sets each bit independently with probability `p`.
fn fill_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R, out: &mut BitVector) {
    let len = out.len;
    for (w, word) in out.words.iter_mut().enumerate() {
        *word = bernoulli_word(p, (len - w * 64).min(64), rng);
    }
}

/// `width` low bits, each set from the event `u <= p` with `u` uniform on
/// `[0, 1)` at 32-bit resolution (`u = k / 2^32`, so `k <= floor(p 2^32)`).
fn bernoulli_word<R: Rng + ?Sized>(p: f64, width: usize, rng: &mut R) -> u64 {
    let threshold = (p.clamp(0.0, 1.0) * 4_294_967_296.0).floor() as u64;
    let mut acc = 0u64;
    let mut j = 0;
    while j < width {
        let r = rng.next_u64();
        acc |= u64::from((r & 0xFFFF_FFFF) <= threshold) << j;
        if j + 1 < width {
            acc |= u64::from((r >> 32) <= threshold) << (j + 1);
        }
        j += 2;
    }
    acc
}

/// Draws a scale factor around `mu_lambda` and builds its mask.
pub fn make_bit_mask<R: Rng + ?Sized>(mu_lambda: f64, sigma_lambda: f64, len: usize, rng: &mut R) -> BitVector {
    let lambda = sample_lambda(mu_lambda, sigma_lambda, rng);
    mask_from_lambda(lambda, len, rng)
}

/// `base ^ (mask & (best ^ base)) ^ (mask & (r2 ^ r3))`.
pub fn mutate_bits(base: &BitVector, best: &BitVector, r2: &BitVector, r3: &BitVector, mask: &BitVector) -> BitVector {
    let mut out = base.clone();
    mutate_into(base, best, r2, r3, mask, &mut out);
    out
}

fn mutate_into(base: &BitVector, best: &BitVector, r2: &BitVector, r3: &BitVector, mask: &BitVector, out: &mut BitVector) {
    for i in 0..out.words.len() {
        let (b, z) = (base.words[i], mask.words[i]);
        out.words[i] = b ^ (z & (best.words[i] ^ b)) ^ (z & (r2.words[i] ^ r3.words[i]));
    }
}

/// Uniform crossover: bit `i` comes from `donor` when a fresh uniform draw
/// is `<= cr`.
pub fn crossover_bits<R: Rng + ?Sized>(target: &BitVector, donor: &BitVector, cr: f64, rng: &mut R) -> BitVector {
    let mut out = target.clone();
    crossover_into(target, donor, cr, rng, &mut out);
    out
}

fn crossover_into<R: Rng + ?Sized>(target: &BitVector, donor: &BitVector, cr: f64, rng: &mut R, out: &mut BitVector) {
    for w in 0..out.words.len() {
        let take = bernoulli_word(cr, (target.len - w * 64).min(64), rng);
        out.words[w] = (donor.words[w] & take) | (target.words[w] & !take);
    }
}

/// Bit strings of a fixed length.
#[derive(Debug, Clone)]
pub struct BinarySpace {
    pub len: usize,
    mask: std::cell::RefCell<BitVector>,
}

impl BinarySpace {
    pub fn new(len: usize) -> Self {
        BinarySpace {
            len,
            mask: std::cell::RefCell::new(BitVector::zeros(len)),
        }
    }
}

impl SearchSpace for BinarySpace {
    type Genome = BitVector;

    fn random_genome(&self, rng: &mut SimRng) -> BitVector {
        BitVector::random(self.len, rng)
    }

    fn donor(&self, base: &BitVector, best: &BitVector, r2: &BitVector, r3: &BitVector, lambda: f64, rng: &mut SimRng, out: &mut BitVector) {
        let mut mask = self.mask.borrow_mut();
        fill_mask(lambda, rng, &mut mask);
        out.clone_from(base);
        mutate_into(base, best, r2, r3, &mask, out);
    }

    fn crossover(&self, target: &BitVector, donor: &BitVector, cr: f64, rng: &mut SimRng, out: &mut BitVector) {
        out.clone_from(target);
        crossover_into(target, donor, cr, rng, out);
    }
}

/// Minimizes `cf` over bit strings of length `len`.
pub fn run_bits<F>(cf: F, len: usize, params: &DeParams, seed: u64) -> Result<DeOutcome<BitVector>>
where
    F: FnMut(&BitVector) -> f64,
{
    run_bits_observed(cf, len, params, seed, |_| {})
}

pub fn run_bits_observed<F, O>(cf: F, len: usize, params: &DeParams, seed: u64, observer: O) -> Result<DeOutcome<BitVector>>
where
    F: FnMut(&BitVector) -> f64,
    O: FnMut(&Population<BitVector>),
{
    if len == 0 {
        return Err(Error::config("bit string length must be positive"));
    }
    let mut rng = substream(seed, &[0xDE_B1]);
    evolve(&BinarySpace::new(len), cf, params, &mut rng, observer)
}
