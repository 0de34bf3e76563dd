//! Seed derivation and sampling helpers shared by the simulator and planner.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Deterministic generator used for every stochastic draw in the engine.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finaliser; mixes a base seed with a stream tag.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(base: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(mix_seed(base, tag))
}

/// Independent random streams of one episode. Keeping them apart lets two
/// configurations that differ only in the human share world randomness.
#[derive(Debug, Clone)]
pub struct EpisodeStreams {
    pub world: SimRng,
    pub filter: SimRng,
    pub planner: SimRng,
    pub human: SimRng,
}

impl EpisodeStreams {
    pub fn new(seed: u64) -> Self {
        EpisodeStreams {
            world: stream(seed, 1),
            filter: stream(seed, 2),
            planner: stream(seed, 3),
            human: stream(seed, 4),
        }
    }
}

pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Normal(mean, sd) draw; `sd == 0` returns the mean.
pub fn normal<R: RngCore + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    match Normal::new(mean, sd) {
        Ok(d) => d.sample(rng),
        Err(_) => mean,
    }
}

pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Index drawn from unnormalised non-negative weights. Falls back to a
/// uniform index when the weights carry no mass.
pub fn categorical<R: RngCore + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len().max(1));
    }
    let mut u = uniform(rng) * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
