//! Adaptive differential evolution with an elite archive.
//!
//! Each generation every member `x` builds a donor
//! `x + lambda (x_best - x) + lambda (x_r2 - x_r3)` (current-to-best with an
//! archive member as "best"), crosses it with `x` at rate `Cr`, and the trial
//! replaces `x` when its cost is not worse. Scale factors are Cauchy draws
//! around `mu_lambda`, crossover rates normal draws around `mu_cr`; both
//! locations follow the successful values with rate `c` (arithmetic mean for
//! `Cr`, Lehmer mean for `lambda`). The run stops after `g_max` generations
//! or `delta_g` generations without improvement of the best cost.
//!
//! The generation loop is shared; [`continuous`] and [`binary`] supply the
//! genome operations.

pub mod binary;
pub mod continuous;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use binary::{crossover_bits, make_bit_mask, mask_from_lambda, mutate_bits, BinarySpace, BitVector};
pub use continuous::{crossover, mutate, ContinuousSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeParams {
    pub pop_size: usize,
    /// Greedy factor `p`; the archive keeps `round(p * pop_size)` members.
    pub greedy: f64,
    /// Adaptive update factor `c`.
    pub adapt_rate: f64,
    pub sigma_lambda: f64,
    pub sigma_cr: f64,
    pub g_max: usize,
    /// Stall window: stop after this many generations without improvement.
    pub delta_g: usize,
    /// Uniform initialization box applied to every real dimension.
    pub init_bounds: (f64, f64),
}

impl DeParams {
    /// Defaults for channel estimation (`c = 0.1`).
    pub fn ce_default() -> Self {
        DeParams {
            pop_size: 100,
            greedy: 0.1,
            adapt_rate: 0.1,
            sigma_lambda: 0.1,
            sigma_cr: 0.1,
            g_max: 100,
            delta_g: 20,
            init_bounds: (-2.0, 2.0),
        }
    }

    /// Defaults for multi-user detection (`c = 0.8`).
    pub fn mud_default() -> Self {
        DeParams {
            adapt_rate: 0.8,
            ..Self::ce_default()
        }
    }

    pub fn archive_size(&self) -> usize {
        (self.greedy * self.pop_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 {
            return Err(Error::config(format!(
                "population size {} is below the 4 members mutation needs",
                self.pop_size
            )));
        }
        if !(self.greedy > 0.0 && self.greedy < 1.0) || self.archive_size() < 1 {
            return Err(Error::config(format!(
                "greedy factor {} leaves an empty archive for population {}",
                self.greedy, self.pop_size
            )));
        }
        if !(self.adapt_rate > 0.0 && self.adapt_rate <= 1.0) {
            return Err(Error::config(format!("adaptive factor {} outside (0, 1]", self.adapt_rate)));
        }
        if !(self.sigma_lambda >= 0.0 && self.sigma_cr >= 0.0) {
            return Err(Error::config("scale parameters must be non-negative"));
        }
        if self.g_max == 0 || self.delta_g == 0 {
            return Err(Error::config("g_max and delta_g must be at least 1"));
        }
        let (lo, hi) = self.init_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(format!("empty initialization box [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Scale factor in `(0, 1]`: Cauchy(`mu`, `sigma`), redrawn while `<= 0`,
/// truncated to 1 above.
pub fn sample_lambda<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return if mu > 0.0 { mu.min(1.0) } else { f64::MIN_POSITIVE };
    }
    loop {
        let u: f64 = rng.random();
        let g = mu + sigma * (std::f64::consts::PI * (u - 0.5)).tan();
        if g > 1.0 {
            return 1.0;
        }
        if g > 0.0 {
            return g;
        }
    }
}

/// Crossover rate in `[0, 1]`: Normal(`mu`, `sigma`), redrawn while `< 0`,
/// truncated to 1 above.
pub fn sample_cr<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return mu.clamp(0.0, 1.0);
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let g = mu + sigma * z;
        if g > 1.0 {
            return 1.0;
        }
        if g >= 0.0 {
            return g;
        }
    }
}

pub fn arithmetic_mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// `sum x^2 / sum x`.
pub fn lehmer_mean(xs: &[f64]) -> Option<f64> {
    let s: f64 = xs.iter().sum();
    (!xs.is_empty() && s > 0.0).then(|| xs.iter().map(|x| x * x).sum::<f64>() / s)
}

/// Moves `(mu_cr, mu_lambda)` towards the means of the successful values.
/// An empty success set leaves its parameter unchanged.
pub fn adapt(mu_cr: f64, mu_lambda: f64, successes_cr: &[f64], successes_lambda: &[f64], c: f64) -> (f64, f64) {
    let cr = arithmetic_mean(successes_cr).map_or(mu_cr, |m| (1.0 - c) * mu_cr + c * m);
    let lambda = lehmer_mean(successes_lambda).map_or(mu_lambda, |m| (1.0 - c) * mu_lambda + c * m);
    (cr, lambda)
}

/// Greedy selection: the trial survives when its cost is not worse.
#[inline]
pub fn trial_survives(target_cf: f64, trial_cf: f64) -> bool {
    trial_cf <= target_cf
}

/// Genome operations for one DE flavour.
pub trait SearchSpace {
    type Genome: Clone + std::fmt::Debug;

    fn random_genome(&self, rng: &mut SimRng) -> Self::Genome;

    /// Writes the donor for `base` into `out`.
    #[allow(clippy::too_many_arguments)]
    fn donor(
        &self,
        base: &Self::Genome,
        best: &Self::Genome,
        r2: &Self::Genome,
        r3: &Self::Genome,
        lambda: f64,
        rng: &mut SimRng,
        out: &mut Self::Genome,
    );

    fn crossover(&self, target: &Self::Genome, donor: &Self::Genome, cr: f64, rng: &mut SimRng, out: &mut Self::Genome);
}

/// Population state between generations.
#[derive(Debug, Clone)]
pub struct Population<G> {
    pub individuals: Vec<G>,
    pub cf_values: Vec<f64>,
    /// Indices of the archive members, best first.
    pub archive: Vec<usize>,
    pub mu_cr: f64,
    pub mu_lambda: f64,
    pub generation: usize,
    pub eval_count: u64,
}

pub type ContinuousPopulation = Population<Vec<f64>>;
pub type BitPopulation = Population<BitVector>;

/// Indices of the `b` lowest-cost members, ties broken by index.
fn best_indices(cf: &[f64], b: usize) -> Vec<usize> {
    let order = |i: &usize, j: &usize| cf[*i].total_cmp(&cf[*j]).then(i.cmp(j));
    let mut idx: Vec<usize> = (0..cf.len()).collect();
    if b < idx.len() {
        idx.select_nth_unstable_by(b, order);
        idx.truncate(b);
    }
    idx.sort_unstable_by(order);
    idx
}

/// `(r1, r2, r3)`: an archive slot and two distinct members other than `ps`.
pub fn pick_indices<R: Rng + ?Sized>(ps: usize, pop_size: usize, archive_len: usize, rng: &mut R) -> (usize, usize, usize) {
    let r1 = rng.random_range(0..archive_len);
    let mut r2 = rng.random_range(0..pop_size - 1);
    if r2 >= ps {
        r2 += 1;
    }
    let (lo, hi) = if ps < r2 { (ps, r2) } else { (r2, ps) };
    let mut r3 = rng.random_range(0..pop_size - 2);
    if r3 >= lo {
        r3 += 1;
    }
    if r3 >= hi {
        r3 += 1;
    }
    (r1, r2, r3)
}

impl<G: Clone + std::fmt::Debug> Population<G> {
    /// Random population. The archive starts as the best `B` initial members
    /// so the first mutation has something to draw from.
    pub fn initialize<S, F>(space: &S, cf: &mut F, params: &DeParams, rng: &mut SimRng) -> Self
    where
        S: SearchSpace<Genome = G>,
        F: FnMut(&G) -> f64,
    {
        let individuals: Vec<G> = (0..params.pop_size).map(|_| space.random_genome(rng)).collect();
        let cf_values: Vec<f64> = individuals.iter().map(&mut *cf).collect();
        let archive = best_indices(&cf_values, params.archive_size());
        Population {
            individuals,
            cf_values,
            archive,
            mu_cr: 0.5,
            mu_lambda: 0.5,
            generation: 0,
            eval_count: params.pop_size as u64,
        }
    }

    pub fn best_index(&self) -> usize {
        self.archive[0]
    }

    pub fn best_cf(&self) -> f64 {
        self.cf_values[self.best_index()]
    }

    pub fn best(&self) -> &G {
        &self.individuals[self.best_index()]
    }

    /// One generation: mutation, crossover, selection, archive refresh,
    /// adaptation.
    pub fn step<S, F>(&mut self, space: &S, cf: &mut F, params: &DeParams, rng: &mut SimRng, scratch: &mut Scratch<G>)
    where
        S: SearchSpace<Genome = G>,
        F: FnMut(&G) -> f64,
    {
        let p = self.individuals.len();
        if scratch.trials.len() != p {
            scratch.trials = self.individuals.clone();
            scratch.trial_cf = vec![0.0; p];
            scratch.params = vec![(0.0, 0.0); p];
        }
        let mut donor = scratch.donor.take().unwrap_or_else(|| self.individuals[0].clone());
        for ps in 0..p {
            let lambda = sample_lambda(self.mu_lambda, params.sigma_lambda, rng);
            let cr = sample_cr(self.mu_cr, params.sigma_cr, rng);
            let (r1, r2, r3) = pick_indices(ps, p, self.archive.len(), rng);
            let base = &self.individuals[ps];
            space.donor(
                base,
                &self.individuals[self.archive[r1]],
                &self.individuals[r2],
                &self.individuals[r3],
                lambda,
                rng,
                &mut donor,
            );
            space.crossover(base, &donor, cr, rng, &mut scratch.trials[ps]);
            scratch.trial_cf[ps] = cf(&scratch.trials[ps]);
            scratch.params[ps] = (cr, lambda);
        }
        scratch.donor = Some(donor);
        self.eval_count += p as u64;

        let mut s_cr = Vec::new();
        let mut s_lambda = Vec::new();
        for ps in 0..p {
            if trial_survives(self.cf_values[ps], scratch.trial_cf[ps]) {
                std::mem::swap(&mut self.individuals[ps], &mut scratch.trials[ps]);
                self.cf_values[ps] = scratch.trial_cf[ps];
                s_cr.push(scratch.params[ps].0);
                s_lambda.push(scratch.params[ps].1);
            }
        }
        self.archive = best_indices(&self.cf_values, self.archive.len());
        let (mu_cr, mu_lambda) = adapt(self.mu_cr, self.mu_lambda, &s_cr, &s_lambda, params.adapt_rate);
        self.mu_cr = mu_cr;
        self.mu_lambda = mu_lambda;
        self.generation += 1;
    }
}

/// Reusable buffers for [`Population::step`].
#[derive(Debug)]
pub struct Scratch<G> {
    trials: Vec<G>,
    trial_cf: Vec<f64>,
    params: Vec<(f64, f64)>,
    donor: Option<G>,
}

impl<G> Default for Scratch<G> {
    fn default() -> Self {
        Scratch {
            trials: Vec::new(),
            trial_cf: Vec::new(),
            params: Vec::new(),
            donor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeOutcome<G> {
    pub best: G,
    pub best_cf: f64,
    pub generations: usize,
    pub eval_count: u64,
    /// Best cost after initialization and after every generation.
    pub best_trace: Vec<f64>,
}

/// Runs the full loop. `observer` sees the population after initialization
/// and after every generation.
pub fn evolve<S, F, O>(space: &S, mut cf: F, params: &DeParams, rng: &mut SimRng, mut observer: O) -> Result<DeOutcome<S::Genome>>
where
    S: SearchSpace,
    F: FnMut(&S::Genome) -> f64,
    O: FnMut(&Population<S::Genome>),
{
    params.validate()?;
    let mut pop = Population::initialize(space, &mut cf, params, rng);
    observer(&pop);
    let mut scratch = Scratch::default();
    let mut trace = vec![pop.best_cf()];
    let mut stall = 0;
    while pop.generation < params.g_max && stall < params.delta_g {
        let before = pop.best_cf();
        pop.step(space, &mut cf, params, rng, &mut scratch);
        observer(&pop);
        let after = pop.best_cf();
        trace.push(after);
        if after < before {
            stall = 0;
        } else {
            stall += 1;
        }
    }
    Ok(DeOutcome {
        best: pop.best().clone(),
        best_cf: pop.best_cf(),
        generations: pop.generation,
        eval_count: pop.eval_count,
        best_trace: trace,
    })
}
