//! Real-valued genomes.

use rand::Rng;

use super::{evolve, DeOutcome, DeParams, Population, SearchSpace};
use crate::error::{Error, Result};
use crate::rng::{substream, SimRng};

/// `base + lambda (best - base) + lambda (r2 - r3)`.
pub fn mutate(base: &[f64], best: &[f64], r2: &[f64], r3: &[f64], lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; base.len()];
    mutate_into(base, best, r2, r3, lambda, &mut out);
    out
}

fn mutate_into(base: &[f64], best: &[f64], r2: &[f64], r3: &[f64], lambda: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = base[i] + lambda * (best[i] - base[i]) + lambda * (r2[i] - r3[i]);
    }
}

/// Binomial crossover: component `i` comes from `donor` when a fresh
/// uniform draw is `<= cr`.
pub fn crossover<R: Rng + ?Sized>(target: &[f64], donor: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; target.len()];
    crossover_into(target, donor, cr, rng, &mut out);
    out
}

fn crossover_into<R: Rng + ?Sized>(target: &[f64], donor: &[f64], cr: f64, rng: &mut R, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let u: f64 = rng.random();
        *o = if u <= cr { donor[i] } else { target[i] };
    }
}

/// Unbounded real search space of fixed dimension, initialized uniformly
/// in a box.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousSpace {
    pub dim: usize,
    pub bounds: (f64, f64),
}

impl SearchSpace for ContinuousSpace {
    type Genome = Vec<f64>;

    fn random_genome(&self, rng: &mut SimRng) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        (0..self.dim).map(|_| rng.random_range(lo..hi)).collect()
    }

    fn donor(&self, base: &Vec<f64>, best: &Vec<f64>, r2: &Vec<f64>, r3: &Vec<f64>, lambda: f64, _rng: &mut SimRng, out: &mut Vec<f64>) {
        out.resize(base.len(), 0.0);
        mutate_into(base, best, r2, r3, lambda, out);
    }

    fn crossover(&self, target: &Vec<f64>, donor: &Vec<f64>, cr: f64, rng: &mut SimRng, out: &mut Vec<f64>) {
        out.resize(target.len(), 0.0);
        crossover_into(target, donor, cr, rng, out);
    }
}

/// Minimizes `cf` over `R^dim`.
pub fn run<F>(cf: F, dim: usize, params: &DeParams, seed: u64) -> Result<DeOutcome<Vec<f64>>>
where
    F: FnMut(&Vec<f64>) -> f64,
{
    run_observed(cf, dim, params, seed, |_| {})
}

pub fn run_observed<F, O>(cf: F, dim: usize, params: &DeParams, seed: u64, observer: O) -> Result<DeOutcome<Vec<f64>>>
where
    F: FnMut(&Vec<f64>) -> f64,
    O: FnMut(&Population<Vec<f64>>),
{
    if dim == 0 {
        return Err(Error::config("search dimension must be positive"));
    }
    let space = ContinuousSpace {
        dim,
        bounds: params.init_bounds,
    };
    let mut rng = substream(seed, &[0xDE_C0]);
    evolve(&space, cf, params, &mut rng, observer)
}
