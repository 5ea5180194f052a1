//! Seeded random streams.
//!
//! Every stochastic operation takes a master seed; independent parts of a
//! computation (proposal draws, inner surrogate draws, bootstrap replicates)
//! draw from distinct ChaCha streams of that seed, so results do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type ChainRng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn standard_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    fill_standard_normal(rng, &mut v);
    v
}

/// Position of a stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StreamPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl StreamPosition {
    pub fn of(rng: &ChaCha8Rng, seed: u64) -> Self {
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = stream(self.seed, self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
