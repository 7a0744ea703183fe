//! Token-level policies.
//!
//! [`Actor`] is the interface the rollout engine drives: given a context and a
//! role it produces one utterance with per-token log-probabilities and value
//! estimates. [`Policy`] is the built-in learnable actor: a linear softmax
//! over hashed context features plus a tied token-embedding term, with a
//! linear value head on the same features.

mod checkpoint;
mod features;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use features::{featurize, ContextFeatures, BIAS_SLOT, HASH_OFFSET, MIN_FEATURE_DIM, ROLE_SLOTS};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conversation::{RoleSpec, TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Weights of the reference policy and its value head.
///
/// Logits for a context with features `F` and trailing window `w` are
/// `z_v = (F·W[:, v] + E[v]·s) / T` where `s` is the mean embedding of the
/// window tokens. The value is `F·value_weights`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub context_window: usize,
    pub hash_seed: u64,
    /// vocab_size × embed_dim, row-major.
    pub token_embedding: Vec<f64>,
    /// feature_dim × vocab_size, row-major.
    pub context_weights: Vec<f64>,
    pub value_weights: Vec<f64>,
}

/// Gradient (or update direction) with the same layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub token_embedding: Vec<f64>,
    pub context_weights: Vec<f64>,
    pub value_weights: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &PolicyParameters) -> Self {
        Self {
            token_embedding: vec![0.0; p.token_embedding.len()],
            context_weights: vec![0.0; p.context_weights.len()],
            value_weights: vec![0.0; p.value_weights.len()],
        }
    }

    pub fn scale(&mut self, c: f64) {
        for x in self.iter_mut() {
            *x *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, c: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.token_embedding.iter().chain(&self.context_weights).chain(&self.value_weights)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.token_embedding
            .iter_mut()
            .chain(self.context_weights.iter_mut())
            .chain(self.value_weights.iter_mut())
    }

    pub fn policy_is_zero(&self) -> bool {
        self.token_embedding.iter().chain(&self.context_weights).all(|&x| x == 0.0)
    }
}

impl PolicyParameters {
    pub fn zeros(
        vocab_size: usize,
        feature_dim: usize,
        embed_dim: usize,
        context_window: usize,
        hash_seed: u64,
    ) -> Self {
        Self {
            vocab_size,
            feature_dim,
            embed_dim,
            context_window,
            hash_seed,
            token_embedding: vec![0.0; vocab_size * embed_dim],
            context_weights: vec![0.0; feature_dim * vocab_size],
            value_weights: vec![0.0; feature_dim],
        }
    }

    /// Zero linear weights and a small uniform embedding in `[-scale, scale]`.
    /// The embedding has to start away from zero: the tied term is bilinear
    /// and has a stationary point at the origin.
    pub fn initialize(
        vocab_size: usize,
        feature_dim: usize,
        embed_dim: usize,
        context_window: usize,
        hash_seed: u64,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(vocab_size, feature_dim, embed_dim, context_window, hash_seed);
        if scale > 0.0 {
            for e in &mut p.token_embedding {
                *e = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let expect = [
            ("token_embedding", self.token_embedding.len(), self.vocab_size * self.embed_dim),
            ("context_weights", self.context_weights.len(), self.feature_dim * self.vocab_size),
            ("value_weights", self.value_weights.len(), self.feature_dim),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if self.feature_dim < MIN_FEATURE_DIM {
            return Err(Error::Shape(format!("feature_dim must be at least {MIN_FEATURE_DIM}")));
        }
        if self.vocab_size == 0 || self.context_window == 0 {
            return Err(Error::Shape("vocab_size and context_window must be positive".into()));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.token_embedding
            .iter()
            .chain(&self.context_weights)
            .chain(&self.value_weights)
            .all(|x| x.is_finite())
    }

    pub fn featurize(&self, context: &[TokenId], role_id: usize) -> ContextFeatures {
        featurize(context, role_id, self.feature_dim, self.context_window, self.hash_seed)
    }

    fn embedding_row(&self, tok: usize) -> &[f64] {
        &self.token_embedding[tok * self.embed_dim..(tok + 1) * self.embed_dim]
    }

    /// Mean embedding of the window tokens.
    fn window_summary(&self, features: &ContextFeatures) -> Vec<f64> {
        let mut s = vec![0.0; self.embed_dim];
        if features.window.is_empty() {
            return s;
        }
        for &tok in &features.window {
            for (acc, e) in s.iter_mut().zip(self.embedding_row(tok as usize)) {
                *acc += e;
            }
        }
        let n = features.window.len() as f64;
        for x in &mut s {
            *x /= n;
        }
        s
    }

    fn check_shapes(&self, features: &ContextFeatures) -> Result<()> {
        if features.dim() != self.feature_dim {
            return Err(Error::Shape(format!(
                "features have dimension {}, parameters expect {}",
                features.dim(),
                self.feature_dim
            )));
        }
        if let Some(&bad) = features.window.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::Shape(format!("token {bad} outside vocabulary of {}", self.vocab_size)));
        }
        Ok(())
    }

    pub fn logits(&self, features: &ContextFeatures, temperature: f64) -> Result<Vec<f64>> {
        self.check_shapes(features)?;
        let v = self.vocab_size;
        let mut z = vec![0.0; v];
        for (f, x) in features.nonzeros() {
            let row = &self.context_weights[f * v..(f + 1) * v];
            for (zi, w) in z.iter_mut().zip(row) {
                *zi += x * w;
            }
        }
        let s = self.window_summary(features);
        for (tok, zi) in z.iter_mut().enumerate() {
            let e = self.embedding_row(tok);
            *zi += e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
            *zi /= temperature;
        }
        Ok(z)
    }

    /// Softmax over the vocabulary at the given temperature.
    pub fn token_distribution(&self, features: &ContextFeatures, temperature: f64) -> Result<Vec<f64>> {
        let z = self.logits(features, temperature)?;
        softmax(&z)
    }

    pub fn value(&self, features: &ContextFeatures) -> f64 {
        features.nonzeros().map(|(f, x)| x * self.value_weights[f]).sum()
    }

    /// Adds `scale · ∇ log π(token)` to `grads`, given the distribution `dist`
    /// already computed for these features.
    pub fn accumulate_log_prob_grad(
        &self,
        features: &ContextFeatures,
        dist: &[f64],
        token: TokenId,
        temperature: f64,
        scale: f64,
        grads: &mut Gradients,
    ) {
        // ∂ log π_a / ∂z_u = δ_au − π_u
        let mut dz: Vec<f64> = dist.iter().map(|p| -scale * p).collect();
        dz[token as usize] += scale;
        self.accumulate_logit_grad(features, &dz, temperature, grads);
    }

    /// Adds `scale · ∇ H(π)` to `grads`, H the entropy of `dist`.
    pub fn accumulate_entropy_grad(
        &self,
        features: &ContextFeatures,
        dist: &[f64],
        temperature: f64,
        scale: f64,
        grads: &mut Gradients,
    ) {
        // ∂H/∂z_u = −π_u (ln π_u + H)
        let h = entropy(dist);
        let dz: Vec<f64> =
            dist.iter().map(|&p| if p > 0.0 { -scale * p * (p.ln() + h) } else { 0.0 }).collect();
        self.accumulate_logit_grad(features, &dz, temperature, grads);
    }

    /// Back-propagates `dz`, a gradient with respect to the tempered logits,
    /// into the weights and the tied embedding.
    pub fn accumulate_logit_grad(&self, features: &ContextFeatures, dz: &[f64], temperature: f64, grads: &mut Gradients) {
        let v = self.vocab_size;
        let d = self.embed_dim;
        let coeff: Vec<f64> = dz.iter().map(|g| g / temperature).collect();

        // raw score of u: Σ_f F_f W[f, u] + E[u]·s
        for (f, x) in features.nonzeros() {
            for (g, c) in grads.context_weights[f * v..(f + 1) * v].iter_mut().zip(&coeff) {
                *g += x * c;
            }
        }

        // output side of the tied embedding
        let s = self.window_summary(features);
        for (u, &c) in coeff.iter().enumerate() {
            if c != 0.0 {
                for (g, sk) in grads.token_embedding[u * d..(u + 1) * d].iter_mut().zip(&s) {
                    *g += c * sk;
                }
            }
        }
        // input side: s is the mean of the window embeddings
        if !features.window.is_empty() {
            let mut back = vec![0.0; d];
            for (u, &c) in coeff.iter().enumerate() {
                if c != 0.0 {
                    for (b, e) in back.iter_mut().zip(self.embedding_row(u)) {
                        *b += c * e;
                    }
                }
            }
            let per = 1.0 / features.window.len() as f64;
            for &tok in &features.window {
                let t = tok as usize;
                for (g, b) in grads.token_embedding[t * d..(t + 1) * d].iter_mut().zip(&back) {
                    *g += per * b;
                }
            }
        }
    }

    /// Adds `scale · ∇ V` to `grads`; the value head is linear so this is
    /// `scale · F` on the value weights.
    pub fn accumulate_value_grad(&self, features: &ContextFeatures, scale: f64, grads: &mut Gradients) {
        for (f, x) in features.nonzeros() {
            grads.value_weights[f] += scale * x;
        }
    }

    /// log π(token | features) and its full gradient.
    pub fn log_prob_and_grad(
        &self,
        features: &ContextFeatures,
        token: TokenId,
        temperature: f64,
    ) -> Result<(f64, Gradients)> {
        if token as usize >= self.vocab_size {
            return Err(Error::InvalidInput(format!("token {token} outside vocabulary")));
        }
        let dist = self.token_distribution(features, temperature)?;
        let mut g = Gradients::zeros_like(self);
        self.accumulate_log_prob_grad(features, &dist, token, temperature, 1.0, &mut g);
        Ok((dist[token as usize].ln(), g))
    }

    /// θ ← θ + step · direction
    pub fn apply(&mut self, direction: &Gradients, step: f64) {
        let params = self
            .token_embedding
            .iter_mut()
            .chain(self.context_weights.iter_mut())
            .chain(self.value_weights.iter_mut());
        for (p, g) in params.zip(direction.iter()) {
            *p += step * g;
        }
    }
}

/// Numerically stable softmax; fails on non-finite input.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, bad)) = z.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(Error::NonFinite(format!("logit {i} = {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// What a rollout needs to know to ask an actor for one utterance.
pub struct TurnInput<'a> {
    pub context: &'a [TokenId],
    pub role: &'a RoleSpec,
    pub turn_index: usize,
    pub vocab: &'a Vocabulary,
    pub max_tokens: usize,
}

/// An utterance with per-token log-probabilities and value estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub truncated: bool,
}

impl Generation {
    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Anything that can speak for a role.
pub trait Actor: Sync {
    fn generate(&self, input: &TurnInput<'_>, rng: &mut ChaCha8Rng) -> Result<Generation>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    pub temperature: f64,
    /// Take the argmax (lowest id on ties) instead of sampling.
    pub greedy: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self { temperature: 1.0, greedy: false }
    }
}

/// The learnable reference actor.
#[derive(Clone, Debug)]
pub struct Policy {
    pub params: PolicyParameters,
    pub decode: DecodeSettings,
}

impl Policy {
    pub fn new(params: PolicyParameters, decode: DecodeSettings) -> Self {
        Self { params, decode }
    }
}

/// Autoregressively decode one utterance, stopping at END or `max_tokens`.
pub fn sample_utterance(
    params: &PolicyParameters,
    decode: DecodeSettings,
    context: &[TokenId],
    role: &RoleSpec,
    vocab: &Vocabulary,
    max_tokens: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Generation> {
    if vocab.len() != params.vocab_size {
        return Err(Error::Shape(format!(
            "vocabulary has {} tokens, policy expects {}",
            vocab.len(),
            params.vocab_size
        )));
    }
    let end = vocab.end();
    let mut ctx = context.to_vec();
    let mut out = Generation { tokens: Vec::new(), log_probs: Vec::new(), values: Vec::new(), truncated: false };
    while out.tokens.len() < max_tokens {
        let features = params.featurize(&ctx, role.role_id);
        let dist = params.token_distribution(&features, decode.temperature)?;
        let tok = if decode.greedy { argmax(&dist) } else { sample_index(&dist, rng) };
        out.tokens.push(tok as TokenId);
        out.log_probs.push(dist[tok].ln());
        out.values.push(params.value(&features));
        ctx.push(tok as TokenId);
        if tok as TokenId == end {
            return Ok(out);
        }
    }
    out.truncated = true;
    Ok(out)
}

fn sample_index(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

impl Actor for Policy {
    fn generate(&self, input: &TurnInput<'_>, rng: &mut ChaCha8Rng) -> Result<Generation> {
        sample_utterance(&self.params, self.decode, input.context, input.role, input.vocab, input.max_tokens, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::Goal;
    use crate::rng::stream;

    fn vocab(n: usize) -> Vocabulary {
        let mut t: Vec<String> = (0..n - 1).map(|i| format!("T{i}")).collect();
        t.push("END".into());
        Vocabulary::new(t).unwrap()
    }

    fn role(id: usize) -> RoleSpec {
        RoleSpec { role_id: id, persona: vec![1], team: None, goal: Goal::None }
    }

    fn random_params(rng: &mut ChaCha8Rng, v: usize) -> PolicyParameters {
        let mut p = PolicyParameters::zeros(v, 64, 4, 8, 3);
        for x in p.token_embedding.iter_mut().chain(p.context_weights.iter_mut()).chain(p.value_weights.iter_mut()) {
            *x = rng.gen_range(-0.5..0.5);
        }
        p
    }

    /// Independent softmax: exp of raw logits divided by their sum, with the
    /// logits evaluated straight from the dense definition.
    fn oracle_distribution(p: &PolicyParameters, f: &ContextFeatures, t: f64) -> Vec<f64> {
        let v = p.vocab_size;
        let d = p.embed_dim;
        let mut s = vec![0.0; d];
        for &tok in &f.window {
            for k in 0..d {
                s[k] += p.token_embedding[tok as usize * d + k] / f.window.len() as f64;
            }
        }
        let z: Vec<f64> = (0..v)
            .map(|u| {
                let lin: f64 = (0..p.feature_dim).map(|i| f.values[i] * p.context_weights[i * v + u]).sum();
                let emb: f64 = (0..d).map(|k| p.token_embedding[u * d + k] * s[k]).sum();
                (lin + emb) / t
            })
            .collect();
        let e: Vec<f64> = z.iter().map(|x| x.exp()).collect();
        let total: f64 = e.iter().sum();
        e.iter().map(|x| x / total).collect()
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = PolicyParameters::zeros(10, 64, 4, 8, 3);
        let f = p.featurize(&[1, 2, 3], 0);
        let d = p.token_distribution(&f, 1.0).unwrap();
        assert!(d.iter().all(|&x| (x - 0.1).abs() < 1e-15));
        assert!((entropy(&d) - (10f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn temperature_limits() {
        let mut rng = stream(1, "t", &[]);
        let p = random_params(&mut rng, 12);
        let f = p.featurize(&[1, 2, 3, 4], 0);
        let hot = p.token_distribution(&f, 100.0).unwrap();
        assert!(hot.iter().all(|&x| (x - 1.0 / 12.0).abs() < 0.01), "{hot:?}");
        let cold = p.token_distribution(&f, 0.01).unwrap();
        let z = p.logits(&f, 1.0).unwrap();
        assert!(cold[argmax(&z)] > 0.99);
    }

    #[test]
    fn distribution_matches_oracle() {
        let mut rng = stream(2, "t", &[]);
        for _ in 0..20 {
            let p = random_params(&mut rng, 15);
            let ctx: Vec<TokenId> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(0..15)).collect();
            let f = p.featurize(&ctx, rng.gen_range(0..4));
            let t = rng.gen_range(0.5..2.0);
            let got = p.token_distribution(&f, t).unwrap();
            let want = oracle_distribution(&p, &f, t);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_logits_fail() {
        let mut p = PolicyParameters::zeros(5, 64, 2, 8, 3);
        p.context_weights[BIAS_SLOT * 5 + 2] = f64::NAN;
        let f = p.featurize(&[1], 0);
        assert!(matches!(p.token_distribution(&f, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn uniform_gradient_closed_form() {
        let p = PolicyParameters::zeros(8, 64, 4, 8, 3);
        let f = p.featurize(&[1, 2], 1);
        let (lp, g) = p.log_prob_and_grad(&f, 3, 1.0).unwrap();
        assert!((lp + (8f64).ln()).abs() < 1e-15);
        for i in 0..64 {
            for u in 0..8 {
                let want = if u == 3 { f.values[i] * (1.0 - 1.0 / 8.0) } else { -f.values[i] / 8.0 };
                assert!((g.context_weights[i * 8 + u] - want).abs() < 1e-15);
            }
        }
        // embedding gradient vanishes at the origin
        assert!(g.token_embedding.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn value_gradient_is_features() {
        let p = PolicyParameters::zeros(8, 64, 4, 8, 3);
        let f = p.featurize(&[5, 6, 7], 2);
        let mut g = Gradients::zeros_like(&p);
        p.accumulate_value_grad(&f, 1.0, &mut g);
        assert_eq!(g.value_weights, f.values);
    }

    #[test]
    fn greedy_zero_policy_repeats_token_zero() {
        let v = vocab(6);
        let p = PolicyParameters::zeros(6, 64, 4, 8, 3);
        let mut rng = stream(0, "t", &[]);
        let g = sample_utterance(&p, DecodeSettings { temperature: 1.0, greedy: true }, &[1], &role(0), &v, 32, &mut rng).unwrap();
        assert_eq!(g.tokens, vec![0; 32]);
        assert!(g.truncated);
        assert_eq!(g.log_probs.len(), 32);
        assert_eq!(g.values.len(), 32);
    }

    #[test]
    fn sampling_is_seeded_and_log_probs_nonpositive() {
        let v = vocab(9);
        let mut prng = stream(3, "t", &[]);
        let p = random_params(&mut prng, 9);
        let d = DecodeSettings::default();
        let a = sample_utterance(&p, d, &[1, 2], &role(1), &v, 16, &mut stream(9, "s", &[])).unwrap();
        let b = sample_utterance(&p, d, &[1, 2], &role(1), &v, 16, &mut stream(9, "s", &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.log_probs.iter().all(|&x| x <= 0.0));
        if !a.truncated {
            assert_eq!(*a.tokens.last().unwrap(), v.end());
        }
    }

    #[test]
    fn peaked_cold_policy_is_seed_independent() {
        let v = vocab(6);
        let mut p = PolicyParameters::zeros(6, 64, 4, 8, 3);
        // bias strongly toward T2 then END after it
        p.context_weights[BIAS_SLOT * 6 + 2] = 2.0;
        let f = p.featurize(&[9 % 6, 2], 0);
        let pos_bucket = f.active.iter().copied().filter(|&i| i >= HASH_OFFSET).collect::<Vec<_>>();
        for i in pos_bucket {
            p.context_weights[i * 6 + 5] += 5.0;
        }
        let decode = DecodeSettings { temperature: 0.01, greedy: false };
        let first = sample_utterance(&p, decode, &[3], &role(0), &v, 8, &mut stream(0, "s", &[])).unwrap();
        for seed in 1..20 {
            let g = sample_utterance(&p, decode, &[3], &role(0), &v, 8, &mut stream(seed, "s", &[])).unwrap();
            assert_eq!(g.tokens, first.tokens);
        }
    }
}
