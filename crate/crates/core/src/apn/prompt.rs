//! Deterministic prompt-derived class embeddings.
//!
//! Each class label is wrapped in every prompt template, tokenized on
//! whitespace, and each token is mapped to a fixed pseudorandom vector
//! seeded by its hash. Token vectors are averaged per prompt, prompts are
//! averaged, and the result is L2-normalized. The output seeds a learnable
//! class embedding; precomputed embeddings can be ingested from file
//! instead.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ApnError;
use crate::nn::gauss;

pub const DEFAULT_PROMPTS: &[&str] = &["{}", "a video of {}", "the man in the scene is {}"];

/// FNV-1a 64-bit; stable across platforms and releases.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn token_vector(token: &str, d_e: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token));
    (0..d_e).map(|_| gauss(&mut rng)).collect()
}

/// Embed a label through the prompt set. Templates substitute the label
/// for "{}"; a template without a placeholder has the label appended.
pub fn prompt_class_embedding(
    label: &str,
    prompts: &[&str],
    d_e: usize,
) -> Result<Vec<f64>, ApnError> {
    if prompts.is_empty() {
        return Err(ApnError::EmptyPromptSet);
    }
    let mut acc = vec![0.0; d_e];
    for z in prompts {
        let prompted = if z.contains("{}") {
            z.replace("{}", label)
        } else {
            format!("{z} {label}")
        };
        let tokens: Vec<&str> = prompted.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut prompt_vec = vec![0.0; d_e];
        for tok in &tokens {
            for (p, t) in prompt_vec.iter_mut().zip(token_vector(tok, d_e)) {
                *p += t;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        for (a, p) in acc.iter_mut().zip(&prompt_vec) {
            *a += p * inv;
        }
    }
    let inv = 1.0 / prompts.len() as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(ApnError::BadCheckpoint(format!(
            "degenerate prompt embedding for '{label}'"
        )));
    }
    acc.iter_mut().for_each(|v| *v /= norm);
    Ok(acc)
}
