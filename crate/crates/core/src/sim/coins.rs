//! Sources of protocol randomness.
//!
//! Draws happen when the protocol line executes, so nothing about a coin is
//! visible to the adversary before it has been flipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A random choice requested by a protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "draw")]
pub enum Draw {
    /// 1 with probability `bias`, else 0.
    Coin { bias: f64 },
    /// Uniform over `0..choices`.
    Uniform { choices: u32 },
}

impl Draw {
    /// The outcomes that have positive probability.
    pub fn outcomes(self) -> Vec<u32> {
        match self {
            Draw::Coin { bias } if bias >= 1.0 => vec![1],
            Draw::Coin { bias } if bias <= 0.0 => vec![0],
            Draw::Coin { .. } => vec![0, 1],
            Draw::Uniform { choices } => (0..choices).collect(),
        }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A scripted sequence of outcomes, used by the exhaustive explorer.
/// Draws past the end of the script return the first feasible outcome and
/// are logged so the explorer can branch on them.
#[derive(Clone, Debug, Default)]
pub struct Script {
    pub values: Vec<u32>,
    pub pos: usize,
    pub requested: Vec<Draw>,
}

#[derive(Clone, Debug)]
pub enum Coins {
    /// One independent stream per processor, derived from the world seed.
    Seeded(Vec<ChaCha8Rng>),
    Scripted(Script),
}

impl Coins {
    pub fn seeded(seed: u64, n: usize) -> Self {
        Coins::Seeded(
            (0..n)
                .map(|p| ChaCha8Rng::seed_from_u64(splitmix(seed, p as u64)))
                .collect(),
        )
    }

    pub fn draw(&mut self, who: usize, draw: Draw) -> u32 {
        match self {
            Coins::Seeded(rngs) => {
                let rng = &mut rngs[who];
                match draw {
                    Draw::Coin { bias } => u32::from(rng.random::<f64>() < bias),
                    Draw::Uniform { choices } => rng.random_range(0..choices),
                }
            }
            Coins::Scripted(s) => {
                s.requested.push(draw);
                let feasible = draw.outcomes();
                let v = match s.values.get(s.pos) {
                    Some(&v) => v,
                    None => feasible[0],
                };
                s.pos += 1;
                debug_assert!(feasible.contains(&v), "scripted outcome {v} infeasible for {draw:?}");
                v
            }
        }
    }
}
