//! Hashed bag-of-n-gram features.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::corpus::{tokenize, Document};
use crate::error::{Error, Result};

/// Sparse, L2-normalised feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    /// L2 norm of the raw counts before normalisation.
    pub norm: f64,
}

impl FeatureVector {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| weights[i as usize] * v).sum()
    }

    /// `out += scale * self`
    pub fn add_scaled_to(&self, out: &mut [f64], scale: f64) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] += scale * v;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// 64-bit FNV-1a of `namespace` followed by the parts, each 0x1f-terminated.
fn bucket(namespace: u8, parts: &[&str], mask: u64) -> u32 {
    let mut h = FnvHasher::default();
    h.write(&[namespace]);
    for p in parts {
        h.write(p.as_bytes());
        h.write(&[0x1f]);
    }
    (h.finish() & mask) as u32
}

const UNIGRAM: u8 = b'u';
const BIGRAM: u8 = b'b';
const TRIGRAM: u8 = b'c';

/// Word unigrams, word bigrams and character trigrams of the first
/// `max_tokens` tokens, hashed into `2^hash_bits` buckets and L2-normalised.
/// Character trigrams are taken per token, padded with a space on each side.
pub fn featurize(doc: &Document, hash_bits: u32, max_tokens: usize) -> Result<FeatureVector> {
    featurize_text(&doc.text, hash_bits, max_tokens).map_err(|_| Error::validation(format!("document `{}` has empty text", doc.id)))
}

pub fn featurize_text(text: &str, hash_bits: u32, max_tokens: usize) -> Result<FeatureVector> {
    let mask = (1u64 << hash_bits) - 1;
    let tokens: Vec<&str> = tokenize(text).take(max_tokens).collect();
    if tokens.is_empty() {
        return Err(Error::validation("cannot featurize empty text"));
    }
    let mut hits: Vec<u32> = Vec::with_capacity(tokens.len() * 8);
    for t in &tokens {
        hits.push(bucket(UNIGRAM, &[t], mask));
    }
    for w in tokens.windows(2) {
        hits.push(bucket(BIGRAM, &[w[0], w[1]], mask));
    }
    let mut buf = [0u8; 4];
    for t in &tokens {
        let chars: Vec<char> = std::iter::once(' ').chain(t.chars()).chain(std::iter::once(' ')).collect();
        for w in chars.windows(3) {
            let mut s = String::with_capacity(12);
            for c in w {
                s.push_str(c.encode_utf8(&mut buf));
            }
            hits.push(bucket(TRIGRAM, &[&s], mask));
        }
    }
    hits.sort_unstable();

    let mut indices = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for h in hits {
        if indices.last() == Some(&h) {
            *values.last_mut().unwrap() += 1.0;
        } else {
            indices.push(h);
            values.push(1.0);
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    Ok(FeatureVector { indices, values, norm })
}
