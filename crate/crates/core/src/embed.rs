//! Text embedding providers.
//!
//! [`HashEmbedder`] is the deterministic offline implementation: each lowercase
//! alphanumeric token is hashed with a seed, expanded into a pseudo-random
//! `D`-vector, summed into a bag, and L2-normalised. It has no semantic
//! knowledge, but equal texts map to equal vectors and shared vocabulary raises
//! similarity, which is all tests need.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// One embedding per input text, unit or otherwise.
pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("embedding transport failed: {0}")]
    Transport(String),
    #[error("embedding response could not be decoded: {0}")]
    Decode(String),
    #[error("no recorded embedding for text {0:?}")]
    NotRecorded(String),
    #[error("embedding has dimension {actual}, expected {expected}")]
    Dimension { expected: usize, actual: usize },
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut out = self.embed(&[String::from(text)])?;
        out.pop().ok_or(EmbedError::EmptyInput)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub const DEFAULT_SEED: u64 = 0x5eed_1e91_5a7e;

    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashEmbedder { dimension, seed }
    }

    pub fn vector_for(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dimension];
        let mut any = false;
        for token in tokens(text) {
            any = true;
            self.accumulate(token.as_bytes(), &mut acc);
        }
        if !any {
            // Token-free text still has to map to a non-zero vector.
            self.accumulate(text.as_bytes(), &mut acc);
        }
        let norm = libm::sqrt(acc.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            acc[0] = 1.0;
            return acc;
        }
        acc.iter_mut().for_each(|x| *x /= norm);
        acc
    }

    fn accumulate(&self, token: &[u8], acc: &mut [f64]) {
        let mut state = fnv1a(self.seed, token);
        for slot in acc.iter_mut() {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let bits = splitmix(state);
            // Top 53 bits to a uniform value in [-1, 1).
            *slot += (bits >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
        }
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.vector_for(t)).collect())
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
