//! Hit-and-run sampling, phase mixtures and Monte-Carlo event estimators.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{chord_endpoints, ParamBody, CHORD_TOL};
use crate::linalg::norm2;

pub const DEFAULT_BURN_IN: usize = 50;
pub const DEFAULT_THINNING: usize = 5;
pub const DEFAULT_BATCH: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub chord_tol: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { burn_in: DEFAULT_BURN_IN, thinning: DEFAULT_THINNING, chord_tol: CHORD_TOL, seed: 0 }
    }
}

impl ChainConfig {
    pub fn with_seed(seed: u64) -> Self {
        ChainConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return invalid("thinning must be at least 1");
        }
        if !(self.chord_tol > 0.0) {
            return invalid("chord tolerance must be positive");
        }
        Ok(())
    }
}

/// Mixes a base seed with a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A persistent hit-and-run chain; burn-in is paid on the first retained sample only.
#[derive(Debug, Clone)]
pub struct Chain {
    z: Vec<f64>,
    rng: ChaCha8Rng,
    burned: bool,
}

impl Chain {
    pub fn new(body: &ParamBody, start: Vec<f64>, seed: u64) -> Result<Self> {
        if !body.membership(&start)? {
            return invalid("chain start point is outside the body");
        }
        Ok(Chain { z: start, rng: ChaCha8Rng::seed_from_u64(seed), burned: false })
    }

    pub fn point(&self) -> &[f64] {
        &self.z
    }

    pub fn step(&mut self, body: &ParamBody, tol: f64) {
        let dim = self.z.len();
        let mut d: Vec<f64> = (0..dim).map(|_| self.rng.sample(StandardNormal)).collect();
        let len = norm2(&d);
        if len == 0.0 {
            return;
        }
        d.iter_mut().for_each(|v| *v /= len);
        let (lo, hi) = match body.chord(&self.z, &d) {
            Some(iv) => iv,
            None => chord_endpoints(body, &self.z, &d, tol).unwrap_or((0.0, 0.0)),
        };
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return;
        }
        let mut t = lo + (hi - lo) * self.rng.random::<f64>();
        let mut next = self.z.clone();
        for _ in 0..60 {
            for ((n, z), dk) in next.iter_mut().zip(&self.z).zip(&d) {
                *n = z + t * dk;
            }
            if body.contains(&next) {
                std::mem::swap(&mut self.z, &mut next);
                return;
            }
            // Rounding at the boundary; shrink toward the current point.
            t *= 0.5;
        }
    }

    pub fn next_sample(&mut self, body: &ParamBody, config: &ChainConfig) -> Vec<f64> {
        let steps = if self.burned { config.thinning } else { config.burn_in + config.thinning };
        self.burned = true;
        for _ in 0..steps {
            self.step(body, config.chord_tol);
        }
        debug_assert!(body.contains(&self.z));
        self.z.clone()
    }
}

pub fn hit_and_run_sample(body: &ParamBody, start: &[f64], config: &ChainConfig, count: usize) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    if count == 0 {
        return invalid("sample count must be at least 1");
    }
    let mut chain = Chain::new(body, start.to_vec(), config.seed)?;
    Ok((0..count).map(|_| chain.next_sample(body, config)).collect())
}

/// Uniform mixture of uniform distributions over convex components, one chain each.
#[derive(Debug, Clone)]
pub struct MixtureDistribution {
    components: Vec<ParamBody>,
    chains: Vec<Chain>,
    config: ChainConfig,
}

impl MixtureDistribution {
    pub fn new(components: Vec<(ParamBody, Vec<f64>)>, config: ChainConfig) -> Result<Self> {
        config.validate()?;
        if components.is_empty() {
            return Err(Error::NotFound("mixture has no feasible component".into()));
        }
        let mut bodies = Vec::with_capacity(components.len());
        let mut chains = Vec::with_capacity(components.len());
        for (k, (body, witness)) in components.into_iter().enumerate() {
            chains.push(Chain::new(&body, witness, derive_seed(config.seed, k as u64))?);
            bodies.push(body);
        }
        Ok(MixtureDistribution { components: bodies, chains, config })
    }

    /// Drops components whose feasibility check fails.
    pub fn from_bodies<R: Rng + ?Sized>(
        bodies: Vec<ParamBody>,
        config: ChainConfig,
        attempts: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let live = bodies
            .into_iter()
            .filter_map(|b| crate::geometry::find_interior_point(&b, rng, attempts, None).map(|w| (b, w)))
            .collect();
        Self::new(live, config)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, k: usize) -> &ParamBody {
        &self.components[k]
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, Vec<f64>) {
        let k = rng.random_range(0..self.components.len());
        (k, self.chains[k].next_sample(&self.components[k], &self.config))
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> Vec<(usize, Vec<f64>)> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

/// Uniform mixture over components, each a weighted set of atoms from a finite family.
/// Conditionals are exact.
#[derive(Debug, Clone)]
pub struct FiniteMixture {
    components: Vec<Vec<(usize, f64)>>,
    atom_mass: Vec<f64>,
}

impl FiniteMixture {
    /// Component entries are `(atom, base weight)`; weights are renormalized per component.
    pub fn new(components: Vec<Vec<(usize, f64)>>, num_atoms: usize) -> Result<Self> {
        let mut live = Vec::new();
        for comp in components {
            let total: f64 = comp.iter().map(|a| a.1).sum();
            if comp.iter().any(|a| a.0 >= num_atoms || !(a.1 >= 0.0)) {
                return invalid("atom index out of range or negative weight");
            }
            if total > 0.0 {
                live.push(comp.into_iter().map(|(a, w)| (a, w / total)).collect::<Vec<_>>());
            }
        }
        if live.is_empty() {
            return Err(Error::NotFound("mixture has no feasible component".into()));
        }
        let mut atom_mass = vec![0.0; num_atoms];
        let share = 1.0 / live.len() as f64;
        for comp in &live {
            for &(a, w) in comp {
                atom_mass[a] += share * w;
            }
        }
        Ok(FiniteMixture { components: live, atom_mass })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Mixture probability of each atom.
    pub fn atom_mass(&self) -> &[f64] {
        &self.atom_mass
    }

    pub fn probability(&self, event: impl Fn(usize) -> bool) -> f64 {
        let p: f64 = self.atom_mass.iter().enumerate().filter(|(a, _)| event(*a)).map(|(_, w)| w).sum();
        p.clamp(0.0, 1.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let k = rng.random_range(0..self.components.len());
        let comp = &self.components[k];
        let mut u = rng.random::<f64>();
        for &(a, w) in comp {
            if u < w {
                return (k, a);
            }
            u -= w;
        }
        (k, comp.last().unwrap().0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

/// A stream of independent Bernoulli draws of some event.
pub trait EventStream {
    /// Successes among the next `n` draws.
    fn successes(&mut self, n: u64) -> u64;

    /// Draws consumed up to and including the next success, or `None` if no success occurs
    /// within `limit` draws (all of which are consumed).
    fn draws_to_success(&mut self, limit: u64) -> Option<u64>;
}

/// Event over convex-mixture samples, drawn one at a time.
pub struct SampledEvent<'a, F, R: ?Sized> {
    pub mixture: &'a mut MixtureDistribution,
    pub event: F,
    pub rng: &'a mut R,
}

impl<F: FnMut(&[f64]) -> bool, R: Rng + ?Sized> EventStream for SampledEvent<'_, F, R> {
    fn successes(&mut self, n: u64) -> u64 {
        (0..n).filter(|_| (self.event)(&self.mixture.draw(self.rng).1)).count() as u64
    }

    fn draws_to_success(&mut self, limit: u64) -> Option<u64> {
        for s in 1..=limit {
            if (self.event)(&self.mixture.draw(self.rng).1) {
                return Some(s);
            }
        }
        None
    }
}

/// Event with known probability `p`. Equivalent in distribution to iid sampling, but
/// simulated through binomial counts and geometric gaps.
pub struct BernoulliEvent<'a, R: ?Sized> {
    pub p: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> EventStream for BernoulliEvent<'_, R> {
    fn successes(&mut self, n: u64) -> u64 {
        if self.p <= 0.0 {
            return 0;
        }
        if self.p >= 1.0 {
            return n;
        }
        Binomial::new(n, self.p).expect("valid binomial").sample(self.rng)
    }

    fn draws_to_success(&mut self, limit: u64) -> Option<u64> {
        if self.p <= 0.0 {
            return None;
        }
        let failures = if self.p >= 1.0 { 0 } else { Geometric::new(self.p).expect("valid geometric").sample(self.rng) };
        failures.checked_add(1).filter(|&s| s <= limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub samples: u64,
}

/// `⌈2 ε⁻² log(1/δ)⌉`
pub fn additive_sample_count(eps: f64, delta: f64) -> u64 {
    (2.0 / (eps * eps) * (1.0 / delta).ln()).ceil() as u64
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return invalid(format!("{name} must lie in (0, 1), got {v}"));
    }
    Ok(())
}

/// Additive-accuracy estimator: empirical frequency over a fixed sample count.
pub fn estimate_event_stream<S: EventStream + ?Sized>(stream: &mut S, eps: f64, delta: f64) -> Result<Estimate> {
    check_unit("accuracy", eps)?;
    check_unit("failure probability", delta)?;
    let n = additive_sample_count(eps, delta);
    let k = stream.successes(n);
    Ok(Estimate { value: k as f64 / n as f64, samples: n })
}

pub fn estimate_event<R: Rng + ?Sized>(
    mixture: &mut MixtureDistribution,
    event: impl FnMut(&[f64]) -> bool,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Estimate> {
    estimate_event_stream(&mut SampledEvent { mixture, event, rng }, eps, delta)
}

/// `sqrt(2 log(s²π²/(6δ))/s)`
pub fn anytime_radius(s: u64, delta: f64) -> f64 {
    let s = s as f64;
    (2.0 * (s * s * PI * PI / (6.0 * delta)).ln() / s).sqrt()
}

/// First sample count at which the anytime radius drops below `floor / 2`.
pub fn mult_sample_cap(delta: f64, floor: f64) -> u64 {
    let target = floor / 2.0;
    // The radius decreases beyond s = 3 for every δ < 1.
    if anytime_radius(1, delta) < target && anytime_radius(2, delta) < target {
        return 1;
    }
    let (mut lo, mut hi) = (3u64, 4u64);
    while anytime_radius(hi, delta) >= target {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return hi;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if anytime_radius(mid, delta) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Multiplicative-accuracy anytime estimator. Returns 0 once the deviation radius drops below
/// `floor / 2` without the stopping condition having fired.
pub fn estimate_event_mult_stream<S: EventStream + ?Sized>(
    stream: &mut S,
    eps: f64,
    delta: f64,
    floor: f64,
) -> Result<Estimate> {
    check_unit("multiplicative accuracy", eps)?;
    check_unit("failure probability", delta)?;
    if !(floor > 0.0) {
        return invalid("floor must be positive");
    }
    let cap = mult_sample_cap(delta, floor);
    let (mut s, mut k) = (0u64, 0u64);
    // Between successes μ̂ falls while s·radius(s) grows, so the stopping test can only
    // newly pass at a success.
    while s < cap {
        match stream.draws_to_success(cap - s) {
            None => return Ok(Estimate { value: 0.0, samples: cap }),
            Some(gap) => {
                s += gap;
                k += 1;
                let mu = k as f64 / s as f64;
                if eps * mu >= anytime_radius(s, delta) {
                    return Ok(Estimate { value: mu.min(1.0), samples: s });
                }
            }
        }
    }
    Ok(Estimate { value: 0.0, samples: s })
}

pub fn estimate_event_mult<R: Rng + ?Sized>(
    mixture: &mut MixtureDistribution,
    event: impl FnMut(&[f64]) -> bool,
    eps: f64,
    delta: f64,
    floor: f64,
    rng: &mut R,
) -> Result<Estimate> {
    estimate_event_mult_stream(&mut SampledEvent { mixture, event, rng }, eps, delta, floor)
}
