//! Deterministic feature-hashing embedder.
//!
//! Character 3-grams of sentinel-padded text are FNV-1a hashed into
//! signed buckets and the result L2-normalized. No model, no network:
//! identical text always embeds to the identical unit vector, which is
//! all the contextual bandit needs in tests and scripted runs.

use crate::error::{Error, Result};

pub const DEFAULT_EMBED_DIM: usize = 64;

/// Start/end sentinels so one-character texts still produce a gram and
/// boundary characters carry positional signal.
const TEXT_START: char = '\u{2}';
const TEXT_END: char = '\u{3}';

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: DEFAULT_EMBED_DIM }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Range("embedding dimension must be positive".to_string()));
        }
        Ok(HashEmbedder { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Shape("cannot embed empty text".to_string()));
        }
        let chars: Vec<char> = std::iter::once(TEXT_START)
            .chain(text.chars())
            .chain(std::iter::once(TEXT_END))
            .collect();
        let mut v = vec![0.0f64; self.dim];
        for gram in chars.windows(3) {
            let h = fnv1a_gram(gram);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // All grams cancelled pairwise; keep the unit-norm contract
            // with a fixed fallback direction.
            log::warn!("embedding cancelled to zero; using fallback basis vector");
            v[0] = 1.0;
        } else {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}

fn fnv1a_gram(gram: &[char]) -> u64 {
    let mut h = FNV_OFFSET;
    for &c in gram {
        for b in (c as u32).to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
    }
    h
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
