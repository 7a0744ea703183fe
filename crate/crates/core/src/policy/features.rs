use crate::conversation::TokenId;
use crate::rng::hash_words;

/// Number of leading feature slots holding the role one-hot.
pub const ROLE_SLOTS: usize = 16;
/// Slot of the constant bias feature.
pub const BIAS_SLOT: usize = ROLE_SLOTS;
/// First slot available to hashed n-gram features.
pub const HASH_OFFSET: usize = ROLE_SLOTS + 1;
/// Smallest feature dimension that leaves room for hashed features.
pub const MIN_FEATURE_DIM: usize = HASH_OFFSET + 15;

const UNIGRAM: u64 = 1;
const BIGRAM: u64 = 2;
const POSITIONAL: u64 = 3;
const SUFFIX: u64 = 4;
/// Positional unigrams are emitted for this many trailing tokens.
const POSITIONAL_DEPTH: usize = 3;
/// The unordered suffix bag covers this many trailing tokens.
const SUFFIX_DEPTH: usize = 8;

/// Feature vector for one (context, role) pair.
///
/// `values` is dense; `active` lists its nonzero slots in ascending order so
/// products with weight matrices can skip the zeros. `window` keeps the
/// trailing context tokens, which the embedding term of the policy reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextFeatures {
    pub values: Vec<f64>,
    pub active: Vec<usize>,
    pub window: Vec<TokenId>,
}

impl ContextFeatures {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.active.iter().map(move |&i| (i, self.values[i]))
    }
}

fn bucket(hash: u64, feature_dim: usize) -> usize {
    HASH_OFFSET + (hash % (feature_dim - HASH_OFFSET) as u64) as usize
}

/// Adds `events` hashed under `family`, each weighted so the group has unit
/// norm when nothing collides.
fn add_group(values: &mut [f64], hash_seed: u64, family: u64, events: &[Vec<u64>]) {
    if events.is_empty() {
        return;
    }
    let w = 1.0 / (events.len() as f64).sqrt();
    let dim = values.len();
    for e in events {
        let mut words = Vec::with_capacity(e.len() + 1);
        words.push(family);
        words.extend_from_slice(e);
        values[bucket(hash_words(hash_seed, &words), dim)] += w;
    }
}

/// Hashed n-gram features of the last `window` context tokens plus a role
/// one-hot and a bias.
///
/// Four families share the hashed buckets: unigrams and bigrams over the
/// whole window, position-tagged unigrams of the last few tokens, and an
/// unordered bag of a slightly longer suffix. Each family is scaled to unit
/// norm on its own, so a long noisy history cannot drown out the trailing
/// tokens, where environments put the current observation.
pub fn featurize(
    context: &[TokenId],
    role_id: usize,
    feature_dim: usize,
    window: usize,
    hash_seed: u64,
) -> ContextFeatures {
    assert!(feature_dim >= MIN_FEATURE_DIM, "feature_dim {feature_dim} below {MIN_FEATURE_DIM}");
    let mut values = vec![0.0; feature_dim];
    values[role_id % ROLE_SLOTS] = 1.0;
    values[BIAS_SLOT] = 1.0;

    let start = context.len().saturating_sub(window);
    let win = &context[start..];
    let tok = |t: TokenId| u64::from(t);
    let unigrams: Vec<Vec<u64>> = win.iter().map(|&t| vec![tok(t)]).collect();
    let bigrams: Vec<Vec<u64>> = win.windows(2).map(|p| vec![tok(p[0]), tok(p[1])]).collect();
    let positional: Vec<Vec<u64>> =
        win.iter().rev().take(POSITIONAL_DEPTH).enumerate().map(|(d, &t)| vec![d as u64, tok(t)]).collect();
    let suffix: Vec<Vec<u64>> = win.iter().rev().take(SUFFIX_DEPTH).map(|&t| vec![tok(t)]).collect();
    add_group(&mut values, hash_seed, UNIGRAM, &unigrams);
    add_group(&mut values, hash_seed, BIGRAM, &bigrams);
    add_group(&mut values, hash_seed, POSITIONAL, &positional);
    add_group(&mut values, hash_seed, SUFFIX, &suffix);

    let active = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    ContextFeatures { values, active, window: win.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn deterministic() {
        let ctx = [3, 1, 4, 1, 5, 9, 2, 6];
        let a = featurize(&ctx, 1, 256, 24, 11);
        let b = featurize(&ctx, 1, 256, 24, 11);
        assert_eq!(a, b);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn role_changes_features() {
        let ctx = [3, 1, 4];
        let a = featurize(&ctx, 0, 256, 24, 11);
        let b = featurize(&ctx, 1, 256, 24, 11);
        assert_ne!(a.values, b.values);
        assert_eq!(a.values[0], 1.0);
        assert_eq!(b.values[1], 1.0);
    }

    #[test]
    fn single_token_changes_are_detected() {
        // Monte Carlo over random context pairs that differ in exactly one
        // position inside the window.
        let mut rng = crate::rng::stream(5, "featurize-test", &[]);
        let trials = 10_000;
        let mut differing = 0;
        for _ in 0..trials {
            let len = rng.gen_range(1..=24);
            let ctx: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..96)).collect();
            let mut other = ctx.clone();
            let pos = rng.gen_range(0..len);
            while other[pos] == ctx[pos] {
                other[pos] = rng.gen_range(0..96);
            }
            if featurize(&ctx, 0, 256, 24, 11).values != featurize(&other, 0, 256, 24, 11).values {
                differing += 1;
            }
        }
        assert!(differing as f64 / trials as f64 > 0.99, "{differing}/{trials}");
    }

    #[test]
    fn entries_are_bounded() {
        let ctx: Vec<TokenId> = vec![7; 100];
        let f = featurize(&ctx, 3, 64, 24, 1);
        // each family contributes at most the square root of its event count
        let bound = (24f64).sqrt() + (23f64).sqrt() + (3f64).sqrt() + (8f64).sqrt();
        assert!(f.values.iter().all(|&v| (0.0..=bound).contains(&v)));
        assert_eq!(f.window.len(), 24);
    }
}
