//! Named random substreams derived from a single run seed.
//!
//! Every consumer of randomness (split, init, restarts, generators) asks for
//! its own stream by name, so changing how one component draws numbers never
//! perturbs another.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub type StreamRng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stream `name`/`index` of the generator family rooted at `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()).wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15)));
    rng
}

/// Symmetric Dirichlet draw via normalised Gamma variates. Works for `k == 1`.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration must be positive");
    let mut out: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        // vanishingly unlikely for concentration >= 1, but small α can underflow
        out.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    } else {
        out.iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// Index drawn from an unnormalised nonnegative weight vector.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
