//! Channel estimation from known symbol blocks: least squares, continuous-DE
//! search, and Cramer-Rao bounds.
//!
//! Blocks are `L x S` matrices whose columns are the symbol vectors sent in
//! `S` consecutive OFDM symbols on one tone; `Y = H X + W`.

use num_complex::Complex64;

use crate::de::{continuous, DeParams};
use crate::error::{Error, Result};
use crate::linalg::{frobenius2, inverse, CMatrix};
use crate::rng::derive_seed;

/// Orthogonal training block: rows of an `S x S` DFT matrix truncated to `L`
/// rows and scaled to symbol energy `E_s`, so `P P^H = S E_s I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    symbols: CMatrix,
    energy: f64,
}

impl PilotBlock {
    pub fn dft(users: usize, len: usize, energy: f64) -> Result<Self> {
        if users == 0 || len < users {
            return Err(Error::config(format!(
                "{len} pilot symbols cannot identify a channel with {users} users"
            )));
        }
        if !(energy > 0.0) {
            return Err(Error::config(format!("pilot energy {energy} must be positive")));
        }
        let amp = energy.sqrt();
        let symbols = CMatrix::from_fn(users, len, |l, s| {
            let phase = -2.0 * std::f64::consts::PI * ((l * s) % len) as f64 / len as f64;
            Complex64::from_polar(amp, phase)
        });
        Ok(PilotBlock { symbols, energy })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.ncols() == 0
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub matrix: CMatrix,
    pub nmse_vs_truth: Option<f64>,
    pub eval_count: u64,
    pub generations: usize,
    /// Best cost after initialization and after every DE generation; empty
    /// for closed-form estimators.
    pub cf_trace: Vec<f64>,
}

impl ChannelEstimate {
    pub fn with_truth(mut self, truth: &CMatrix) -> Result<Self> {
        self.nmse_vs_truth = Some(nmse(&self.matrix, truth)?);
        Ok(self)
    }
}

fn check_block(x: &CMatrix, y: &CMatrix) -> Result<()> {
    if x.ncols() == 0 || x.ncols() != y.ncols() || x.nrows() != y.nrows() {
        return Err(Error::usage(format!(
            "symbol block is {}x{} but received block is {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}

/// `sum_s ||y_s - H x_s||^2`.
pub fn cf_ce(h: &CMatrix, x: &CMatrix, y: &CMatrix) -> f64 {
    frobenius2(&(y - h * x))
}

/// `H = Y X^H (X X^H)^-1`, the exact minimizer of [`cf_ce`].
pub fn ls_estimate(x: &CMatrix, y: &CMatrix) -> Result<ChannelEstimate> {
    check_block(x, y)?;
    let (l, s) = x.shape();
    if s < l {
        return Err(Error::Identifiability(format!("{s} known symbols for {l} users")));
    }
    let gram = x * x.adjoint();
    let inv = inverse(&gram, "training Gram matrix").map_err(|_| {
        Error::Identifiability(format!("the {l}x{s} symbol block does not have full row rank"))
    })?;
    Ok(ChannelEstimate {
        matrix: y * x.adjoint() * inv,
        nmse_vs_truth: None,
        eval_count: 0,
        generations: 0,
        cf_trace: Vec::new(),
    })
}

/// Continuous-DE search for the channel. The cost separates over the rows
/// of `H`, so each row's `2 L` real parameters are searched by its own run
/// (seeded from `seed` and the row index) and the rows are stacked.
pub fn dea_ce(x: &CMatrix, y: &CMatrix, params: &DeParams, seed: u64) -> Result<ChannelEstimate> {
    dea_ce_history(x, y, params, seed).map(|(est, _)| est)
}

/// [`dea_ce`] plus the best estimate after initialization and after every
/// generation. Rows whose runs stopped early keep their final value.
pub fn dea_ce_history(x: &CMatrix, y: &CMatrix, params: &DeParams, seed: u64) -> Result<(ChannelEstimate, Vec<CMatrix>)> {
    check_block(x, y)?;
    let (l, s) = x.shape();
    if s < l {
        return Err(Error::Identifiability(format!("{s} known symbols for {l} users")));
    }
    let xx = x * x.adjoint();
    let yx = y * x.adjoint();
    let mut rows = Vec::with_capacity(l);
    let mut eval_count = 0;
    for r in 0..l {
        let gram = RowGram {
            yy: y.row(r).iter().map(|z| z.norm_sqr()).sum(),
            yx: yx.row(r).iter().copied().collect(),
            xx: &xx,
        };
        let mut history = Vec::new();
        let out = continuous::run_observed(
            |g: &Vec<f64>| gram.cf(g),
            2 * l,
            params,
            derive_seed(seed, &[r as u64]),
            |pop| history.push((pop.best().clone(), pop.best_cf())),
        )?;
        eval_count += out.eval_count;
        rows.push(history);
    }
    let generations = rows.iter().map(|h| h.len() - 1).max().unwrap_or(0);
    let at = |g: usize| {
        let mut m = CMatrix::zeros(l, l);
        let mut cf = 0.0;
        for (r, hist) in rows.iter().enumerate() {
            let (best, best_cf) = &hist[g.min(hist.len() - 1)];
            for c in 0..l {
                m[(r, c)] = Complex64::new(best[2 * c], best[2 * c + 1]);
            }
            cf += best_cf;
        }
        (m, cf)
    };
    let (history, cf_trace): (Vec<CMatrix>, Vec<f64>) = (0..=generations).map(at).unzip();
    let est = ChannelEstimate {
        matrix: history[generations].clone(),
        nmse_vs_truth: None,
        eval_count,
        generations,
        cf_trace,
    };
    Ok((est, history))
}

/// One row of the block cost from sufficient statistics:
/// `||y_r||^2 - 2 Re(h^* . y_r X^H) + h X X^H h^H`.
struct RowGram<'a> {
    yy: f64,
    yx: Vec<Complex64>,
    xx: &'a CMatrix,
}

impl RowGram<'_> {
    fn cf(&self, g: &[f64]) -> f64 {
        let l = self.yx.len();
        let h = |c: usize| Complex64::new(g[2 * c], g[2 * c + 1]);
        let mut cross = 0.0;
        let mut quad = 0.0;
        for a in 0..l {
            let ha = h(a);
            cross += (ha.conj() * self.yx[a]).re;
            let mut t = Complex64::new(0.0, 0.0);
            for b in 0..l {
                t += self.xx[(a, b)] * h(b).conj();
            }
            quad += (ha * t).re;
        }
        self.yy - 2.0 * cross + quad
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::usage(format!("{name} must be positive, got {v}")))
    }
}

/// Per-row CRLB with orthogonal training: `2 sigma^2 / (S E_s)`.
pub fn crlb(s: usize, e_s: f64, sigma_w2: f64) -> Result<f64> {
    positive("symbol count", s as f64)?;
    positive("symbol energy", e_s)?;
    positive("noise variance", sigma_w2)?;
    Ok(2.0 * sigma_w2 / (s as f64 * e_s))
}

/// Per-row CRLB normalized by the row energy `||h_row||^2`.
pub fn ncrlb(s: usize, e_s: f64, sigma_w2: f64, h_row_norm2: f64) -> Result<f64> {
    positive("row energy", h_row_norm2)?;
    Ok(crlb(s, e_s, sigma_w2)? / h_row_norm2)
}

/// Row-bound aggregate over a whole matrix: the per-row bounds weighted by
/// their row energies.
pub fn ncrlb_matrix(s: usize, e_s: f64, sigma_w2: f64, h: &CMatrix) -> Result<f64> {
    let total = frobenius2(h);
    positive("channel energy", total)?;
    let mut acc = 0.0;
    for r in 0..h.nrows() {
        let row: f64 = h.row(r).iter().map(|z| z.norm_sqr()).sum();
        acc += row / total * ncrlb(s, e_s, sigma_w2, row)?;
    }
    Ok(acc)
}

/// Fisher bound on the total squared error `E ||H_hat - H||_F^2` of an
/// unbiased estimator from block `x` under white noise of variance
/// `sigma_w2`: `L sigma^2 tr((X X^H)^-1)`.
pub fn fisher_mse_bound(x: &CMatrix, sigma_w2: f64) -> Result<f64> {
    positive("noise variance", sigma_w2)?;
    let inv = inverse(&(x * x.adjoint()), "training Gram matrix")
        .map_err(|_| Error::Identifiability("training block does not have full row rank".into()))?;
    Ok(x.nrows() as f64 * sigma_w2 * inv.trace().re)
}

/// [`fisher_mse_bound`] normalized by `||H||_F^2`.
pub fn fisher_nmse_bound(x: &CMatrix, sigma_w2: f64, h: &CMatrix) -> Result<f64> {
    let total = frobenius2(h);
    positive("channel energy", total)?;
    Ok(fisher_mse_bound(x, sigma_w2)? / total)
}

/// `||H_hat - H||_F^2 / ||H||_F^2`.
pub fn nmse(h_hat: &CMatrix, h_true: &CMatrix) -> Result<f64> {
    if h_hat.shape() != h_true.shape() {
        return Err(Error::usage("estimate and truth differ in shape"));
    }
    let total = frobenius2(h_true);
    if total == 0.0 {
        return Err(Error::usage("NMSE against an all-zero channel is undefined"));
    }
    Ok(frobenius2(&(h_hat - h_true)) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cgauss;
    use crate::rng::{substream, SimRng};
    use rand::Rng;

    fn channel(l: usize, rng: &mut SimRng) -> CMatrix {
        CMatrix::from_fn(l, l, |r, c| {
            if r == c {
                Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
            } else {
                cgauss(rng, 0.05)
            }
        })
    }

    fn receive(h: &CMatrix, x: &CMatrix, sigma2: f64, rng: &mut SimRng) -> CMatrix {
        h * x + CMatrix::from_fn(x.nrows(), x.ncols(), |_, _| cgauss(rng, sigma2))
    }

    #[test]
    fn pilots_are_orthogonal() {
        for (l, s) in [(1, 1), (2, 2), (4, 4), (4, 7), (4, 256)] {
            let p = PilotBlock::dft(l, s, 1.7).unwrap();
            let g = p.matrix() * p.matrix().adjoint();
            let target = CMatrix::identity(l, l) * Complex64::new(s as f64 * 1.7, 0.0);
            assert!((g - target).norm() < 1e-10, "{l} {s}");
        }
        assert!(PilotBlock::dft(4, 3, 1.0).is_err());
    }

    #[test]
    fn cost_examples() {
        let mut rng = substream(81, &[]);
        let h = channel(3, &mut rng);
        let x = CMatrix::from_fn(3, 5, |_, _| cgauss(&mut rng, 1.0));
        let y = &h * &x;
        assert!(cf_ce(&h, &x, &y) < 1e-24);
        let h1 = CMatrix::from_element(1, 1, Complex64::new(0.5, 0.1));
        let x1 = CMatrix::from_element(1, 1, Complex64::new(1.0, -1.0));
        let y1 = CMatrix::from_element(1, 1, Complex64::new(0.2, 0.3));
        let lit = (y1[(0, 0)] - h1[(0, 0)] * x1[(0, 0)]).norm_sqr();
        assert!((cf_ce(&h1, &x1, &y1) - lit).abs() < 1e-15);

        let y = receive(&h, &x, 0.3, &mut rng);
        let g = channel(3, &mut rng);
        let mut naive = 0.0;
        for s in 0..5 {
            for r in 0..3 {
                let mut v = y[(r, s)];
                for c in 0..3 {
                    v -= g[(r, c)] * x[(c, s)];
                }
                naive += v.norm_sqr();
            }
        }
        assert!((cf_ce(&g, &x, &y) - naive).abs() < 1e-12);
        let (xx, yx) = (&x * x.adjoint(), &y * x.adjoint());
        let by_rows: f64 = (0..3)
            .map(|r| {
                let gram = RowGram {
                    yy: y.row(r).iter().map(|z| z.norm_sqr()).sum(),
                    yx: yx.row(r).iter().copied().collect(),
                    xx: &xx,
                };
                gram.cf(&g.row(r).iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
            })
            .sum();
        assert!((by_rows - naive).abs() < 1e-10);
    }

    #[test]
    fn ls_recovers_noiseless_and_rejects_short_blocks() {
        let mut rng = substream(82, &[]);
        let h = channel(4, &mut rng);
        let p = PilotBlock::dft(4, 4, 1.0).unwrap();
        let y = &h * p.matrix();
        let est = ls_estimate(p.matrix(), &y).unwrap();
        assert!((est.matrix - &h).norm() < 1e-10);
        let x = CMatrix::from_fn(4, 3, |_, _| cgauss(&mut rng, 1.0));
        let y = &h * &x;
        assert!(matches!(ls_estimate(&x, &y), Err(Error::Identifiability(_))));
        let rank1 = CMatrix::from_element(4, 6, Complex64::new(1.0, 0.0));
        let y = &h * &rank1;
        assert!(matches!(ls_estimate(&rank1, &y), Err(Error::Identifiability(_))));
    }

    #[test]
    fn ls_is_a_local_minimum() {
        let mut rng = substream(83, &[]);
        let h = channel(4, &mut rng);
        let x = CMatrix::from_fn(4, 9, |_, _| cgauss(&mut rng, 1.0));
        let y = receive(&h, &x, 0.1, &mut rng);
        let ls = ls_estimate(&x, &y).unwrap().matrix;
        let base = cf_ce(&ls, &x, &y);
        for _ in 0..200 {
            let d = CMatrix::from_fn(4, 4, |_, _| cgauss(&mut rng, 1e-6));
            assert!(cf_ce(&(&ls + d), &x, &y) >= base);
        }
    }

    #[test]
    fn ls_efficiency_against_fisher_bound() {
        let mut rng = substream(84, &[]);
        let h = channel(4, &mut rng);
        let p = PilotBlock::dft(4, 4, 1.0).unwrap();
        let sigma2 = 0.01;
        let trials = 1000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let y = receive(&h, p.matrix(), sigma2, &mut rng);
            acc += nmse(&ls_estimate(p.matrix(), &y).unwrap().matrix, &h).unwrap();
        }
        let measured = acc / trials as f64;
        let bound = fisher_nmse_bound(p.matrix(), sigma2, &h).unwrap();
        assert!((measured / bound - 1.0).abs() < 0.1, "{measured} vs {bound}");
        let literal = ncrlb_matrix(4, 1.0, sigma2, &h).unwrap();
        assert!(measured >= literal);
    }

    #[test]
    fn ls_is_unbiased() {
        let mut rng = substream(85, &[]);
        let h = channel(2, &mut rng);
        let p = PilotBlock::dft(2, 4, 1.0).unwrap();
        let sigma2 = 0.5;
        let n = 10_000;
        let mut mean = CMatrix::zeros(2, 2);
        for _ in 0..n {
            mean += ls_estimate(p.matrix(), &receive(&h, p.matrix(), sigma2, &mut rng)).unwrap().matrix;
        }
        mean /= Complex64::new(n as f64, 0.0);
        // Per-entry variance sigma2 / (S E_s), split over two real parts.
        let se = (sigma2 / 4.0 / 2.0 / n as f64).sqrt();
        for (m, t) in mean.iter().zip(h.iter()) {
            assert!((m.re - t.re).abs() < 3.5 * se && (m.im - t.im).abs() < 3.5 * se);
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(ncrlb(1, 1.0, 0.5, 1.0).unwrap(), 1.0);
        let a = ncrlb(4, 1.3, 0.2, 0.8).unwrap();
        let b = ncrlb(8, 1.3, 0.2, 0.8).unwrap();
        assert!((a / b - 2.0).abs() < 1e-15);
        let gap = 10.0 * (ncrlb(4, 1.0, 0.1, 1.0).unwrap() / ncrlb(256, 1.0, 0.1, 1.0).unwrap()).log10();
        assert!((gap - 18.0618).abs() < 1e-3);
        assert!(matches!(ncrlb(0, 1.0, 1.0, 1.0), Err(Error::Usage(_))));
        assert!(ncrlb(1, -1.0, 1.0, 1.0).is_err());
        assert!(ncrlb(1, 1.0, 0.0, 1.0).is_err());
        assert!(ncrlb(1, 1.0, 1.0, 0.0).is_err());
        let p = PilotBlock::dft(4, 16, 1.0).unwrap();
        let h = CMatrix::identity(4, 4);
        // L^2 sigma^2 / (S E_s ||H||^2) with ||H||^2 = L.
        assert!((fisher_nmse_bound(p.matrix(), 0.1, &h).unwrap() - 4.0 * 0.1 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn nmse_examples() {
        let mut rng = substream(86, &[]);
        let h = channel(3, &mut rng);
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert!((nmse(&CMatrix::zeros(3, 3), &h).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&(&h * Complex64::new(2.0, 0.0)), &h).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&h, &CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn dea_converges_on_noiseless_pilots() {
        let params = DeParams::ce_default();
        let p = PilotBlock::dft(2, 2, 1.0).unwrap();
        let mut rng = substream(87, &[]);
        let mut hits = 0;
        for seed in 0..100 {
            let h = channel(2, &mut rng);
            let y = &h * p.matrix();
            let est = dea_ce(p.matrix(), &y, &params, seed).unwrap();
            hits += usize::from(cf_ce(&est.matrix, p.matrix(), &y) < 1e-6);
            assert!(est.eval_count <= (2 * params.pop_size * (1 + est.generations)) as u64);
            assert_eq!(est.eval_count % params.pop_size as u64, 0);
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn dea_history_tracks_the_summed_row_costs() {
        let params = DeParams::ce_default();
        let mut rng = substream(88, &[]);
        let h = channel(4, &mut rng);
        let p = PilotBlock::dft(4, 8, 1.0).unwrap();
        let y = receive(&h, p.matrix(), 0.01, &mut rng);
        let (est, history) = dea_ce_history(p.matrix(), &y, &params, 5).unwrap();
        assert_eq!(history.len(), est.generations + 1);
        assert_eq!(est.cf_trace.len(), history.len());
        for (m, cf) in history.iter().zip(&est.cf_trace) {
            assert!((cf_ce(m, p.matrix(), &y) - cf).abs() < 1e-9 * cf.max(1.0));
        }
        assert!(est.cf_trace.windows(2).all(|w| w[1] <= w[0]));
        let ls = ls_estimate(p.matrix(), &y).unwrap();
        assert!(cf_ce(&est.matrix, p.matrix(), &y) <= 1.01 * cf_ce(&ls.matrix, p.matrix(), &y));
        let again = dea_ce(p.matrix(), &y, &params, 5).unwrap();
        assert_eq!(again.matrix, est.matrix);
    }
}
