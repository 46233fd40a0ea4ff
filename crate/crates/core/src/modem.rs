//! Square Gray-labeled QAM: mapping, hard slicing and max-log soft demapping.
//!
//! A symbol's label is an integer in `0..M`, read MSB first as `log2 M` bits.
//! The upper half of the bits selects the in-phase level and the lower half
//! the quadrature level; each axis uses a binary-reflected Gray code with
//! level index `i` at amplitude `side - 1 - 2i`, so label 0 sits in the first
//! quadrant. Points are scaled to unit mean energy.
//!
//! LLRs are natural-log ratios `ln P(b = 0) / P(b = 1)`: positive means 0.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits: usize,
    points: Vec<Complex64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    /// `order` must be a power of 4 between 4 and 4096.
    pub fn qam(order: usize) -> Result<Self> {
        if !(4..=4096).contains(&order) || !order.is_power_of_two() || !order.trailing_zeros().is_multiple_of(2) {
            return Err(Error::config(format!("QAM order {order} is not a power of 4 in [4, 4096]")));
        }
        let bits = order.trailing_zeros() as usize;
        let half = bits / 2;
        let side = 1usize << half;
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let level = |g: usize| (side as f64 - 1.0 - 2.0 * gray_decode(g) as f64) * scale;
        let points = (0..order)
            .map(|label| Complex64::new(level(label >> half), level(label & (side - 1))))
            .collect();
        Ok(Constellation { order, bits, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Symbol energy; 1 by construction.
    pub fn energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Bit `k` (0 = MSB) of `label`.
    #[inline]
    pub fn label_bit(&self, label: usize, k: usize) -> u8 {
        ((label >> (self.bits - 1 - k)) & 1) as u8
    }

    pub fn label_bits(&self, label: usize) -> Vec<u8> {
        (0..self.bits).map(|k| self.label_bit(label, k)).collect()
    }

    pub fn label_of(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.bits {
            return Err(Error::usage(format!(
                "expected {} bits per symbol, got {}",
                self.bits,
                bits.len()
            )));
        }
        Ok(bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize))
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<Complex64> {
        Ok(self.points[self.label_of(bits)?])
    }

    /// Label of the nearest point; ties go to the lowest label.
    pub fn slice_label(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = m;
            }
        }
        best
    }

    pub fn slice_hard(&self, y: Complex64) -> Vec<u8> {
        self.label_bits(self.slice_label(y))
    }

    /// Max-log extrinsic LLRs of the bits carried by `y = gain * x + n`,
    /// `n ~ CN(0, sigma_eff2)`, given a-priori LLRs `prior` for the same bits.
    /// The prior of bit `k` is excluded from its own output.
    pub fn demap_soft(&self, y: Complex64, gain: Complex64, sigma_eff2: f64, prior: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.bits];
        self.demap_soft_into(y, gain, sigma_eff2, prior, &mut out);
        out
    }

    pub fn demap_soft_into(&self, y: Complex64, gain: Complex64, sigma_eff2: f64, prior: &[f64], out: &mut [f64]) {
        debug_assert!(sigma_eff2 > 0.0);
        debug_assert_eq!(prior.len(), self.bits);
        let k_bits = self.bits;
        let mut min0 = [f64::INFINITY; 12];
        let mut min1 = [f64::INFINITY; 12];
        for (m, p) in self.points.iter().enumerate() {
            let dist = (y - gain * p).norm_sqr() / sigma_eff2;
            // -ln P(label) up to a constant: sum over bits of +/- La/2.
            let mut prior_all = 0.0;
            for (k, la) in prior.iter().enumerate() {
                let sign = if self.label_bit(m, k) == 0 { 1.0 } else { -1.0 };
                prior_all += sign * la * 0.5;
            }
            for k in 0..k_bits {
                let bit = self.label_bit(m, k);
                let own = if bit == 0 { prior[k] * 0.5 } else { -prior[k] * 0.5 };
                let metric = dist - (prior_all - own);
                if bit == 0 {
                    min0[k] = min0[k].min(metric);
                } else {
                    min1[k] = min1[k].min(metric);
                }
            }
        }
        for k in 0..k_bits {
            out[k] = min1[k] - min0[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cgauss;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_non_square_orders() {
        for m in [0, 1, 2, 8, 32, 8192] {
            assert!(Constellation::qam(m).is_err(), "{m}");
        }
    }

    #[test]
    fn unit_energy_for_all_orders() {
        for m in [4, 16, 64, 256, 1024, 4096] {
            let q = Constellation::qam(m).unwrap();
            assert!((q.energy() - 1.0).abs() < 1e-12, "M={m}");
        }
    }

    #[test]
    fn gray_adjacency_is_exhaustive() {
        for m in [4, 16, 64, 256, 1024, 4096] {
            let q = Constellation::qam(m).unwrap();
            let pts = q.points();
            let step = pts.iter().map(|p| p.re).fold(f64::INFINITY, |a, b| a.min(b.abs())) * 2.0;
            let mut seen = vec![false; m];
            for a in 0..m {
                seen[a] = true;
                for b in 0..m {
                    let d = pts[a] - pts[b];
                    let horizontal = (d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9;
                    let vertical = (d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9;
                    if horizontal || vertical {
                        assert_eq!((a ^ b).count_ones(), 1, "M={m}: {a} and {b}");
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
            // Distinct points: labels are a bijection onto the lattice.
            for a in 0..m {
                for b in (a + 1)..m {
                    assert!((pts[a] - pts[b]).norm() > 1e-9);
                }
            }
        }
    }

    #[test]
    fn qpsk_label_table() {
        let q = Constellation::qam(4).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((q.map_bits(&[0, 0]).unwrap() - c(s, s)).norm() < 1e-15);
        assert!((q.map_bits(&[0, 1]).unwrap() - c(s, -s)).norm() < 1e-15);
        assert!((q.map_bits(&[1, 0]).unwrap() - c(-s, s)).norm() < 1e-15);
        assert!((q.map_bits(&[1, 1]).unwrap() - c(-s, -s)).norm() < 1e-15);
    }

    #[test]
    fn corner_magnitude_16qam() {
        let q = Constellation::qam(16).unwrap();
        let mut mags: Vec<f64> = q.points().iter().map(|p| p.norm()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let corner = 3.0 * (2.0f64 / 10.0).sqrt();
        for &m in &mags[..4] {
            assert!((m - corner).abs() < 1e-12);
        }
        assert!(mags[4] < corner - 1e-3);
    }

    #[test]
    fn wrong_word_length_is_usage_error() {
        let q = Constellation::qam(16).unwrap();
        assert!(matches!(q.map_bits(&[0, 1, 0]), Err(Error::Usage(_))));
    }

    #[test]
    fn slicer_tie_goes_to_lowest_label() {
        let q = Constellation::qam(16).unwrap();
        let inner: Vec<usize> = (0..16)
            .filter(|&m| (q.point(m).norm() - (0.2f64).sqrt()).abs() < 1e-12)
            .collect();
        assert_eq!(inner.len(), 4);
        assert_eq!(q.slice_label(c(0.0, 0.0)), *inner.iter().min().unwrap());
    }

    #[test]
    fn slicer_matches_exhaustive_search() {
        let q = Constellation::qam(16).unwrap();
        let mut rng = substream(11, &[]);
        for _ in 0..10_000 {
            let y = c(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let got = q.slice_label(y);
            // Oracle: independent per-axis quantization on the unnormalized lattice.
            let scale = (10.0f64).sqrt();
            let quant = |v: f64| ((v * scale + 3.0) / 2.0).round().clamp(0.0, 3.0) * 2.0 - 3.0;
            let nearest = c(quant(y.re), quant(y.im)) / scale;
            assert!((q.point(got) - nearest).norm() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn qpsk_llr_closed_form() {
        let q = Constellation::qam(4).unwrap();
        let mut rng = substream(12, &[]);
        for _ in 0..1000 {
            let y = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let s2 = rng.random_range(0.05..2.0);
            let llr = q.demap_soft(y, c(1.0, 0.0), s2, &[0.0, 0.0]);
            let k = 2.0 * 2f64.sqrt() / s2;
            assert!((llr[0] - k * y.re).abs() < 1e-9);
            assert!((llr[1] - k * y.im).abs() < 1e-9);
        }
    }

    #[test]
    fn llr_sign_grows_as_noise_shrinks() {
        let q = Constellation::qam(16).unwrap();
        for label in 0..16 {
            let y = q.point(label);
            let mut last = [0.0; 4];
            for s2 in [1.0, 0.1, 0.01, 0.001] {
                let llr = q.demap_soft(y, c(1.0, 0.0), s2, &[0.0; 4]);
                for k in 0..4 {
                    let signed = if q.label_bit(label, k) == 0 { llr[k] } else { -llr[k] };
                    assert!(signed > 0.0 && signed > last[k]);
                    last[k] = signed;
                }
            }
        }
    }

    #[test]
    fn negating_input_flips_sign_bits() {
        // Only bits whose value flips under point negation change sign; for
        // QPSK that is every bit, for 16-QAM the two axis-sign bits.
        for (m, flipping) in [(4usize, vec![0usize, 1]), (16, vec![0, 2])] {
            let q = Constellation::qam(m).unwrap();
            let bits = q.bits_per_symbol();
            let neg_label: Vec<usize> = (0..m)
                .map(|a| (0..m).find(|&b| (q.point(b) + q.point(a)).norm() < 1e-12).unwrap())
                .collect();
            for k in 0..bits {
                let flips = (0..m).all(|a| q.label_bit(a, k) != q.label_bit(neg_label[a], k));
                assert_eq!(flips, flipping.contains(&k), "M={m} bit {k}");
            }
            let mut rng = substream(13, &[m as u64]);
            for _ in 0..500 {
                let y = cgauss(&mut rng, 1.0);
                let a = q.demap_soft(y, c(1.0, 0.0), 0.3, &vec![0.0; bits]);
                let b = q.demap_soft(-y, c(1.0, 0.0), 0.3, &vec![0.0; bits]);
                for k in &flipping {
                    assert!((a[*k] + b[*k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn prior_shifts_other_bits_only() {
        let q = Constellation::qam(16).unwrap();
        let y = c(0.1, -0.2);
        let base = q.demap_soft(y, c(1.0, 0.0), 0.5, &[0.0; 4]);
        let with = q.demap_soft(y, c(1.0, 0.0), 0.5, &[100.0, 0.0, 0.0, 0.0]);
        // Bit 0's own prior is excluded; a huge prior on bit 0 constrains the
        // others to the bit0 = 0 half-plane.
        assert!((with[0] - base[0]).abs() < 1e-9);
        let restricted: Vec<f64> = (1..4)
            .map(|k| {
                let m = |bit: u8| {
                    (0..16)
                        .filter(|&l| q.label_bit(l, 0) == 0 && q.label_bit(l, k) == bit)
                        .map(|l| (y - q.point(l)).norm_sqr() / 0.5)
                        .fold(f64::INFINITY, f64::min)
                };
                m(1) - m(0)
            })
            .collect();
        for k in 1..4 {
            assert!((with[k] - restricted[k - 1]).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn map_then_slice_round_trips(label in 0usize..64) {
            let q = Constellation::qam(64).unwrap();
            let bits = q.label_bits(label);
            prop_assert_eq!(q.slice_hard(q.map_bits(&bits).unwrap()), bits);
        }

        #[test]
        fn zero_prior_llr_signs_match_slicer(re in -1.4f64..1.4, im in -1.4f64..1.4) {
            let q = Constellation::qam(16).unwrap();
            let y = c(re, im);
            let mut d: Vec<f64> = q.points().iter().map(|p| (y - p).norm_sqr()).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(d[1] - d[0] > 1e-9);
            let llr = q.demap_soft(y, c(1.0, 0.0), 0.2, &[0.0; 4]);
            let hard: Vec<u8> = llr.iter().map(|&v| u8::from(v < 0.0)).collect();
            prop_assert_eq!(hard, q.slice_hard(y));
        }
    }
}
