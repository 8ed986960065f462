//! First-order hidden Markov model over discrete tokens: supervised
//! estimation from labeled sequences, Viterbi decoding, forward likelihood,
//! posterior marginals, and ancestral sampling.
//!
//! All inference runs in log space (`ln 0 = -inf`), and every argmax breaks
//! ties by lowest state index, so decoding is a pure function of its inputs.

use crate::num::{is_stochastic_row, Real};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("EmptyInput: no sequences supplied")]
    EmptyInput,
    #[error("EmptySequence: sequence must contain at least one token")]
    EmptySequence,
    #[error("NegativeAlpha: smoothing alpha {0} must be >= 0")]
    NegativeAlpha(f64),
    #[error("IndexOutOfRange: {kind} index {index} outside [0, {bound})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("TokenOutOfRange: token {token} outside [0, {alphabet})")]
    TokenOutOfRange { token: usize, alphabet: usize },
    #[error("ZeroProbabilitySequence: observation sequence has probability 0 under the model")]
    ZeroProbabilitySequence,
    #[error("InvalidModel: {0}")]
    InvalidModel(String),
    #[error("LengthMismatch: {states} states vs {tokens} tokens")]
    LengthMismatch { states: usize, tokens: usize },
}

/// A token sequence paired with its hidden-state sequence, same length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub states: Vec<usize>,
    pub tokens: Vec<usize>,
}

impl LabeledSequence {
    pub fn new(states: Vec<usize>, tokens: Vec<usize>) -> Result<Self, HmmError> {
        if states.len() != tokens.len() {
            return Err(HmmError::LengthMismatch {
                states: states.len(),
                tokens: tokens.len(),
            });
        }
        if states.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        Ok(Self { states, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Initial distribution `pi`, transition matrix `a` (rows: from-state), and
/// emission matrix `b` (rows: state, columns: token). All rows stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams<R: Real> {
    pi: Vec<R>,
    a: Vec<Vec<R>>,
    b: Vec<Vec<R>>,
}

impl<R: Real> HmmParams<R> {
    /// Validates shapes and row-stochasticity before accepting the parameters.
    pub fn new(pi: Vec<R>, a: Vec<Vec<R>>, b: Vec<Vec<R>>) -> Result<Self, HmmError> {
        let s = pi.len();
        if s == 0 {
            return Err(HmmError::InvalidModel("pi is empty".into()));
        }
        if a.len() != s || b.len() != s {
            return Err(HmmError::InvalidModel(format!(
                "expected {s} rows in A and B, found {} and {}",
                a.len(),
                b.len()
            )));
        }
        let v = b[0].len();
        if v == 0 {
            return Err(HmmError::InvalidModel("emission alphabet is empty".into()));
        }
        if !is_stochastic_row(&pi) {
            return Err(HmmError::InvalidModel("pi is not a distribution".into()));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != s {
                return Err(HmmError::InvalidModel(format!(
                    "A row {i} has {} entries, expected {s}",
                    row.len()
                )));
            }
            if !is_stochastic_row(row) {
                return Err(HmmError::InvalidModel(format!("A row {i} is not stochastic")));
            }
        }
        for (i, row) in b.iter().enumerate() {
            if row.len() != v {
                return Err(HmmError::InvalidModel(format!(
                    "B row {i} has {} entries, expected {v}",
                    row.len()
                )));
            }
            if !is_stochastic_row(row) {
                return Err(HmmError::InvalidModel(format!("B row {i} is not stochastic")));
            }
        }
        Ok(Self { pi, a, b })
    }

    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.b[0].len()
    }

    pub fn initial(&self) -> &[R] {
        &self.pi
    }

    pub fn transitions(&self) -> &[Vec<R>] {
        &self.a
    }

    pub fn emissions(&self) -> &[Vec<R>] {
        &self.b
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<(), HmmError> {
        if tokens.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        let v = self.alphabet_size();
        for &token in tokens {
            if token >= v {
                return Err(HmmError::TokenOutOfRange { token, alphabet: v });
            }
        }
        Ok(())
    }
}

/// Most probable hidden path for a token sequence, with its log joint
/// probability. `zero_probability` marks sequences no path can generate;
/// the path is then the all-ties fallback, not meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence<R: Real> {
    pub states: Vec<usize>,
    pub log_prob: R,
    pub zero_probability: bool,
}

/// Estimates `pi`, `A`, and `B` by counting over labeled sequences with
/// additive smoothing `alpha`. With `alpha = 0`, rows that received no counts
/// fall back to the uniform distribution.
pub fn fit_supervised<R: Real>(
    sequences: &[LabeledSequence],
    num_states: usize,
    alphabet_size: usize,
    alpha: f64,
) -> Result<HmmParams<R>, HmmError> {
    if sequences.is_empty() {
        return Err(HmmError::EmptyInput);
    }
    if alpha < 0.0 {
        return Err(HmmError::NegativeAlpha(alpha));
    }
    if num_states == 0 || alphabet_size == 0 {
        return Err(HmmError::InvalidModel(
            "num_states and alphabet_size must be positive".into(),
        ));
    }

    let mut initial_counts = vec![0u64; num_states];
    let mut transition_counts = vec![vec![0u64; num_states]; num_states];
    let mut emission_counts = vec![vec![0u64; alphabet_size]; num_states];

    for seq in sequences {
        if seq.states.len() != seq.tokens.len() {
            return Err(HmmError::LengthMismatch {
                states: seq.states.len(),
                tokens: seq.tokens.len(),
            });
        }
        if seq.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        for &s in &seq.states {
            if s >= num_states {
                return Err(HmmError::IndexOutOfRange {
                    kind: "state",
                    index: s,
                    bound: num_states,
                });
            }
        }
        for &v in &seq.tokens {
            if v >= alphabet_size {
                return Err(HmmError::IndexOutOfRange {
                    kind: "token",
                    index: v,
                    bound: alphabet_size,
                });
            }
        }
        initial_counts[seq.states[0]] += 1;
        for window in seq.states.windows(2) {
            transition_counts[window[0]][window[1]] += 1;
        }
        for (&s, &v) in seq.states.iter().zip(&seq.tokens) {
            emission_counts[s][v] += 1;
        }
    }

    let smooth_row = |counts: &[u64]| -> Vec<R> {
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + alpha * counts.len() as f64;
        if denom == 0.0 {
            // alpha = 0 and no observations for this row
            return vec![R::cast(1.0 / counts.len() as f64); counts.len()];
        }
        counts
            .iter()
            .map(|&c| R::cast((c as f64 + alpha) / denom))
            .collect()
    };

    let pi = smooth_row(&initial_counts);
    let a: Vec<Vec<R>> = transition_counts.iter().map(|row| smooth_row(row)).collect();
    let b: Vec<Vec<R>> = emission_counts.iter().map(|row| smooth_row(row)).collect();
    HmmParams::new(pi, a, b)
}

/// Viterbi decoding: the max-product dynamic program in log space.
pub fn viterbi_decode<R: Real>(
    model: &HmmParams<R>,
    tokens: &[usize],
) -> Result<DecodedSequence<R>, HmmError> {
    model.check_tokens(tokens)?;
    let s = model.num_states();
    let t_len = tokens.len();

    let log_pi: Vec<R> = model.pi.iter().map(|p| p.ln()).collect();
    let log_a: Vec<Vec<R>> = model
        .a
        .iter()
        .map(|row| row.iter().map(|p| p.ln()).collect())
        .collect();
    let log_b: Vec<Vec<R>> = model
        .b
        .iter()
        .map(|row| row.iter().map(|p| p.ln()).collect())
        .collect();

    let mut delta: Vec<R> = (0..s).map(|i| log_pi[i] + log_b[i][tokens[0]]).collect();
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));

    for &token in &tokens[1..] {
        let mut next = vec![R::neg_infinity(); s];
        let mut back = vec![0usize; s];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut best = delta[0] + log_a[0][j];
            let mut best_i = 0;
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let cand = d + log_a[i][j];
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            *slot = best + log_b[j][token];
            back[j] = best_i;
        }
        backptr.push(back);
        delta = next;
    }

    let mut best_state = 0;
    let mut best = delta[0];
    for (i, &d) in delta.iter().enumerate().skip(1) {
        if d > best {
            best = d;
            best_state = i;
        }
    }

    let mut states = vec![0usize; t_len];
    states[t_len - 1] = best_state;
    for (t, back) in backptr.iter().enumerate().rev() {
        states[t] = back[states[t + 1]];
    }

    Ok(DecodedSequence {
        states,
        log_prob: best,
        zero_probability: best == R::neg_infinity(),
    })
}

/// Log-likelihood of a token sequence under the model, via the scaled
/// forward recursion. Returns negative infinity for impossible sequences.
pub fn forward_loglik<R: Real>(model: &HmmParams<R>, tokens: &[usize]) -> Result<R, HmmError> {
    model.check_tokens(tokens)?;
    let s = model.num_states();

    let mut alpha: Vec<R> = (0..s)
        .map(|i| model.pi[i] * model.b[i][tokens[0]])
        .collect();
    let mut loglik = R::zero();
    let mut scale: R = alpha.iter().copied().fold(R::zero(), |acc, x| acc + x);
    if scale == R::zero() {
        return Ok(R::neg_infinity());
    }
    for x in &mut alpha {
        *x = *x / scale;
    }
    loglik = loglik + scale.ln();

    for &token in &tokens[1..] {
        let mut next = vec![R::zero(); s];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = R::zero();
            for (i, &a) in alpha.iter().enumerate() {
                acc = acc + a * model.a[i][j];
            }
            *slot = acc * model.b[j][token];
        }
        scale = next.iter().copied().fold(R::zero(), |acc, x| acc + x);
        if scale == R::zero() {
            return Ok(R::neg_infinity());
        }
        for x in &mut next {
            *x = *x / scale;
        }
        loglik = loglik + scale.ln();
        alpha = next;
    }
    Ok(loglik)
}

/// Per-timestep state posteriors P(state_t = s | tokens) via scaled
/// forward-backward. Every returned row is renormalized to sum to 1.
pub fn posterior_marginals<R: Real>(
    model: &HmmParams<R>,
    tokens: &[usize],
) -> Result<Vec<Vec<R>>, HmmError> {
    model.check_tokens(tokens)?;
    let s = model.num_states();
    let t_len = tokens.len();

    let mut alphas: Vec<Vec<R>> = Vec::with_capacity(t_len);
    let mut scales: Vec<R> = Vec::with_capacity(t_len);

    let mut alpha: Vec<R> = (0..s)
        .map(|i| model.pi[i] * model.b[i][tokens[0]])
        .collect();
    let mut scale: R = alpha.iter().copied().fold(R::zero(), |acc, x| acc + x);
    if scale == R::zero() {
        return Err(HmmError::ZeroProbabilitySequence);
    }
    for x in &mut alpha {
        *x = *x / scale;
    }
    alphas.push(alpha.clone());
    scales.push(scale);

    for &token in &tokens[1..] {
        let mut next = vec![R::zero(); s];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = R::zero();
            for (i, &a) in alpha.iter().enumerate() {
                acc = acc + a * model.a[i][j];
            }
            *slot = acc * model.b[j][token];
        }
        scale = next.iter().copied().fold(R::zero(), |acc, x| acc + x);
        if scale == R::zero() {
            return Err(HmmError::ZeroProbabilitySequence);
        }
        for x in &mut next {
            *x = *x / scale;
        }
        alphas.push(next.clone());
        scales.push(scale);
        alpha = next;
    }

    let mut beta = vec![R::one(); s];
    let mut posteriors = vec![vec![R::zero(); s]; t_len];
    for t in (0..t_len).rev() {
        let row = &mut posteriors[t];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = alphas[t][i] * beta[i];
        }
        let total: R = row.iter().copied().fold(R::zero(), |acc, x| acc + x);
        for x in row.iter_mut() {
            *x = *x / total;
        }
        if t > 0 {
            let token = tokens[t];
            let mut prev = vec![R::zero(); s];
            for (i, slot) in prev.iter_mut().enumerate() {
                let mut acc = R::zero();
                for (j, &bj) in beta.iter().enumerate() {
                    acc = acc + model.a[i][j] * model.b[j][token] * bj;
                }
                *slot = acc / scales[t];
            }
            beta = prev;
        }
    }
    Ok(posteriors)
}

/// Inverse-CDF draw from a categorical distribution: the lowest index `i`
/// with `probs[i] > 0` whose cumulative sum reaches `u`. `u` in [0, 1).
pub fn sample_categorical<R: Real>(probs: &[R], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        cumulative += p;
        if cumulative >= u {
            return i;
        }
    }
    // rounding shortfall near u ~ 1: fall back to the last viable index
    last_positive
}

/// Ancestral sampling: `state_0 ~ pi`, `state_{t+1} ~ A[state_t]`,
/// `token_t ~ B[state_t]`, deterministic given the seed.
pub fn sample_sequence<R: Real>(
    model: &HmmParams<R>,
    length: usize,
    seed: u64,
) -> Result<LabeledSequence, HmmError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    sample_sequence_with_rng(model, length, &mut rng)
}

/// As [`sample_sequence`] but drawing from a caller-owned RNG, so several
/// sequences can share one stream.
pub fn sample_sequence_with_rng<R: Real>(
    model: &HmmParams<R>,
    length: usize,
    rng: &mut impl Rng,
) -> Result<LabeledSequence, HmmError> {
    if length == 0 {
        return Err(HmmError::EmptySequence);
    }
    let mut states = Vec::with_capacity(length);
    let mut tokens = Vec::with_capacity(length);
    let mut state = sample_categorical(&model.pi, rng.gen::<f64>());
    for t in 0..length {
        if t > 0 {
            state = sample_categorical(&model.a[state], rng.gen::<f64>());
        }
        states.push(state);
        tokens.push(sample_categorical(&model.b[state], rng.gen::<f64>()));
    }
    LabeledSequence::new(states, tokens)
}

/// Shannon entropy of a probability row in nats, with `0 ln 0 = 0`.
pub fn entropy<R: Real>(probs: &[R]) -> R {
    probs.iter().fold(R::zero(), |acc, &p| {
        if p > R::zero() {
            acc - p * p.ln()
        } else {
            acc
        }
    })
}

/// True when `row` is a valid distribution at the type's tolerance; exposed
/// for artifact loaders that must re-validate deserialized models.
pub fn validate_distribution<R: Real>(row: &[R]) -> bool {
    is_stochastic_row(row)
}
