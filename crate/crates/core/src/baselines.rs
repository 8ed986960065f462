//! Memoryless reference models: a per-timestep MAP classifier over discrete
//! tokens (the HMM with its transition structure removed) and a Gaussian
//! naive Bayes classifier over the continuous features.

use crate::hmm::LabeledSequence;
use crate::ingest::{discretize_qoe, Dataset, SessionSeries};
use crate::num::{is_stochastic_row, Real};
use thiserror::Error;

/// Variance floor for Gaussian naive Bayes, preventing degenerate spikes on
/// constant features.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Prior floor assigned to classes absent from the GNB training data, so
/// their log-densities stay well-defined without ever winning an argmax.
pub const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("EmptyInput: no training data supplied")]
    EmptyInput,
    #[error("IndexOutOfRange: {kind} index {index} outside [0, {bound})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("TokenOutOfRange: token {token} outside [0, {alphabet})")]
    TokenOutOfRange { token: usize, alphabet: usize },
    #[error("NegativeAlpha: smoothing alpha {0} must be >= 0")]
    NegativeAlpha(f64),
    #[error("DimensionMismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("MissingLabel: session `{session}` t={t} has no qoe score")]
    MissingLabel { session: String, t: usize },
    #[error("InvalidLabel: {0}")]
    InvalidLabel(String),
    #[error("InvalidModel: {0}")]
    InvalidModel(String),
}

/// Per-timestep MAP classifier over tokens: class priors plus per-class
/// token likelihoods, both Laplace-smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenClassifier<R: Real> {
    priors: Vec<R>,
    likelihoods: Vec<Vec<R>>,
}

impl<R: Real> TokenClassifier<R> {
    /// Rebuilds a classifier from stored rows, re-validating stochasticity.
    pub fn from_parts(priors: Vec<R>, likelihoods: Vec<Vec<R>>) -> Result<Self, BaselineError> {
        if priors.is_empty() || likelihoods.len() != priors.len() {
            return Err(BaselineError::InvalidModel(
                "priors and likelihood rows must agree and be non-empty".into(),
            ));
        }
        if !is_stochastic_row(&priors) {
            return Err(BaselineError::InvalidModel("priors are not a distribution".into()));
        }
        let v = likelihoods[0].len();
        for (i, row) in likelihoods.iter().enumerate() {
            if row.len() != v || v == 0 || !is_stochastic_row(row) {
                return Err(BaselineError::InvalidModel(format!(
                    "likelihood row {i} is not stochastic"
                )));
            }
        }
        Ok(Self { priors, likelihoods })
    }

    pub fn num_states(&self) -> usize {
        self.priors.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.likelihoods[0].len()
    }

    pub fn priors(&self) -> &[R] {
        &self.priors
    }

    pub fn likelihoods(&self) -> &[Vec<R>] {
        &self.likelihoods
    }
}

/// Fits the token classifier: priors are smoothed state frequencies pooled
/// over every timestep; likelihoods use the same per-state token counting as
/// the HMM emission matrix.
pub fn token_classifier_fit<R: Real>(
    sequences: &[LabeledSequence],
    num_states: usize,
    alphabet_size: usize,
    alpha: f64,
) -> Result<TokenClassifier<R>, BaselineError> {
    if sequences.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    if alpha < 0.0 {
        return Err(BaselineError::NegativeAlpha(alpha));
    }
    if num_states == 0 || alphabet_size == 0 {
        return Err(BaselineError::InvalidModel(
            "num_states and alphabet_size must be positive".into(),
        ));
    }

    let mut occupancy = vec![0u64; num_states];
    let mut emission_counts = vec![vec![0u64; alphabet_size]; num_states];
    for seq in sequences {
        for (&s, &v) in seq.states.iter().zip(&seq.tokens) {
            if s >= num_states {
                return Err(BaselineError::IndexOutOfRange {
                    kind: "state",
                    index: s,
                    bound: num_states,
                });
            }
            if v >= alphabet_size {
                return Err(BaselineError::IndexOutOfRange {
                    kind: "token",
                    index: v,
                    bound: alphabet_size,
                });
            }
            occupancy[s] += 1;
            emission_counts[s][v] += 1;
        }
    }

    let smooth_row = |counts: &[u64]| -> Vec<R> {
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + alpha * counts.len() as f64;
        if denom == 0.0 {
            return vec![R::cast(1.0 / counts.len() as f64); counts.len()];
        }
        counts
            .iter()
            .map(|&c| R::cast((c as f64 + alpha) / denom))
            .collect()
    };

    let priors = smooth_row(&occupancy);
    let likelihoods: Vec<Vec<R>> = emission_counts.iter().map(|row| smooth_row(row)).collect();
    TokenClassifier::from_parts(priors, likelihoods)
}

/// Classifies each timestep independently: `argmax_s priors[s] *
/// likelihoods[s][token]`, lowest index on ties. No temporal coupling.
pub fn token_classify<R: Real>(
    model: &TokenClassifier<R>,
    tokens: &[usize],
) -> Result<Vec<usize>, BaselineError> {
    let v = model.alphabet_size();
    let mut states = Vec::with_capacity(tokens.len());
    for &token in tokens {
        if token >= v {
            return Err(BaselineError::TokenOutOfRange { token, alphabet: v });
        }
        let mut best = model.priors[0] * model.likelihoods[0][token];
        let mut best_s = 0;
        for s in 1..model.num_states() {
            let score = model.priors[s] * model.likelihoods[s][token];
            if score > best {
                best = score;
                best_s = s;
            }
        }
        states.push(best_s);
    }
    Ok(states)
}

/// Gaussian naive Bayes over continuous features: per-class priors plus
/// per-class per-feature mean and (floored) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNB<R: Real> {
    priors: Vec<R>,
    means: Vec<Vec<R>>,
    variances: Vec<Vec<R>>,
}

impl<R: Real> GaussianNB<R> {
    pub fn from_parts(
        priors: Vec<R>,
        means: Vec<Vec<R>>,
        variances: Vec<Vec<R>>,
    ) -> Result<Self, BaselineError> {
        let s = priors.len();
        if s == 0 || means.len() != s || variances.len() != s {
            return Err(BaselineError::InvalidModel(
                "priors, means, and variances must have one row per class".into(),
            ));
        }
        if !is_stochastic_row(&priors) {
            return Err(BaselineError::InvalidModel("priors are not a distribution".into()));
        }
        let d = means[0].len();
        for (i, (m, v)) in means.iter().zip(&variances).enumerate() {
            if m.len() != d || v.len() != d {
                return Err(BaselineError::InvalidModel(format!(
                    "class {i} rows must have {d} features"
                )));
            }
            if v.iter().any(|x| *x <= R::zero() || !x.is_finite()) {
                return Err(BaselineError::InvalidModel(format!(
                    "class {i} has a non-positive variance"
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(BaselineError::InvalidModel(format!(
                    "class {i} has a non-finite mean"
                )));
            }
        }
        Ok(Self {
            priors,
            means,
            variances,
        })
    }

    pub fn num_states(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn priors(&self) -> &[R] {
        &self.priors
    }

    pub fn means(&self) -> &[Vec<R>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<R>] {
        &self.variances
    }
}

/// Fits Gaussian naive Bayes from a fully labeled dataset. Class labels come
/// from discretizing each record's QoE score into `num_states` bins.
///
/// Classes with no training rows receive a floored prior and the pooled
/// global mean/variance, keeping every log-density finite without letting
/// the class win a classification.
pub fn gnb_fit<R: Real>(train: &Dataset<R>) -> Result<GaussianNB<R>, BaselineError> {
    let s = train.num_states;
    let d = train.dim();
    if train.num_records() == 0 {
        return Err(BaselineError::EmptyInput);
    }

    let mut counts = vec![0u64; s];
    let mut sums = vec![vec![0.0f64; d]; s];
    let mut sq_sums = vec![vec![0.0f64; d]; s];
    let mut pooled_sum = vec![0.0f64; d];
    let mut pooled_sq = vec![0.0f64; d];
    let mut total = 0u64;

    for session in &train.sessions {
        for record in &session.records {
            let score = record.qoe_score.ok_or_else(|| BaselineError::MissingLabel {
                session: session.session_id.clone(),
                t: record.t,
            })?;
            let class = discretize_qoe(score, s)
                .map_err(|e| BaselineError::InvalidLabel(e.to_string()))?;
            counts[class] += 1;
            total += 1;
            for (dd, &x) in record.features.iter().enumerate() {
                let x = x.to_f64_lossy();
                sums[class][dd] += x;
                sq_sums[class][dd] += x * x;
                pooled_sum[dd] += x;
                pooled_sq[dd] += x * x;
            }
        }
    }

    let moments = |sum: &[f64], sq: &[f64], n: f64| -> (Vec<R>, Vec<R>) {
        let means: Vec<f64> = sum.iter().map(|&x| x / n).collect();
        let vars: Vec<R> = sq
            .iter()
            .zip(&means)
            .map(|(&x, &m)| R::cast((x / n - m * m).max(VARIANCE_FLOOR)))
            .collect();
        (means.into_iter().map(R::cast).collect(), vars)
    };

    let (pooled_means, pooled_vars) = moments(&pooled_sum, &pooled_sq, total as f64);

    let mut priors_raw = Vec::with_capacity(s);
    let mut means = Vec::with_capacity(s);
    let mut variances = Vec::with_capacity(s);
    for class in 0..s {
        if counts[class] == 0 {
            priors_raw.push(PRIOR_FLOOR);
            means.push(pooled_means.clone());
            variances.push(pooled_vars.clone());
        } else {
            priors_raw.push(counts[class] as f64 / total as f64);
            let (m, v) = moments(&sums[class], &sq_sums[class], counts[class] as f64);
            means.push(m);
            variances.push(v);
        }
    }
    let norm: f64 = priors_raw.iter().sum();
    let priors: Vec<R> = priors_raw.iter().map(|&p| R::cast(p / norm)).collect();
    GaussianNB::from_parts(priors, means, variances)
}

/// Per-record classification: `argmax_s log prior[s] + sum_d log N(x_d;
/// mean[s][d], var[s][d])`, lowest index on ties.
pub fn gnb_classify<R: Real>(
    model: &GaussianNB<R>,
    session: &SessionSeries<R>,
) -> Result<Vec<usize>, BaselineError> {
    let d = model.dim();
    let mut out = Vec::with_capacity(session.len());
    for record in &session.records {
        if record.features.len() != d {
            return Err(BaselineError::DimensionMismatch {
                expected: d,
                found: record.features.len(),
            });
        }
        out.push(gnb_classify_point(model, &record.features));
    }
    Ok(out)
}

/// Classifies a single feature vector; callers must have checked dimensions.
pub fn gnb_classify_point<R: Real>(model: &GaussianNB<R>, features: &[R]) -> usize {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut best = f64::NEG_INFINITY;
    let mut best_s = 0;
    for s in 0..model.num_states() {
        let mut score = model.priors[s].to_f64_lossy().ln();
        for (dd, &x) in features.iter().enumerate() {
            let m = model.means[s][dd].to_f64_lossy();
            let var = model.variances[s][dd].to_f64_lossy();
            let diff = x.to_f64_lossy() - m;
            score += -0.5 * (ln_2pi + var.ln()) - diff * diff / (2.0 * var);
        }
        if score > best {
            best = score;
            best_s = s;
        }
    }
    best_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::fit_supervised;
    use crate::ingest::{qoe_bin_midpoint, FeatureRecord};

    fn labeled(states: &[usize], tokens: &[usize]) -> LabeledSequence {
        LabeledSequence::new(states.to_vec(), tokens.to_vec()).unwrap()
    }

    #[test]
    fn fit_two_class_identity() {
        let seq = labeled(&[0, 1], &[0, 1]);
        let m: TokenClassifier<f64> = token_classifier_fit(&[seq], 2, 2, 0.0).unwrap();
        assert_eq!(m.priors(), &[0.5, 0.5]);
        assert_eq!(m.likelihoods(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn fit_keeps_absent_class_prior_positive() {
        let seq = labeled(&[0, 0, 0], &[0, 1, 0]);
        let m: TokenClassifier<f64> = token_classifier_fit(&[seq], 2, 2, 1.0).unwrap();
        assert!(m.priors()[1] > 0.0);
        assert_eq!(m.priors(), &[0.8, 0.2]); // (3+1)/(3+2), (0+1)/(3+2)
    }

    #[test]
    fn fit_likelihoods_match_hmm_emissions() {
        let seqs = vec![
            labeled(&[0, 1, 1, 2, 0], &[3, 1, 0, 2, 3]),
            labeled(&[2, 2, 0], &[0, 2, 1]),
        ];
        for alpha in [0.0, 0.5, 1.0] {
            let clf: TokenClassifier<f64> = token_classifier_fit(&seqs, 3, 4, alpha).unwrap();
            let hmm = fit_supervised::<f64>(&seqs, 3, 4, alpha).unwrap();
            for (row_c, row_h) in clf.likelihoods().iter().zip(hmm.emissions()) {
                for (&c, &h) in row_c.iter().zip(row_h) {
                    assert!((c - h).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fit_input_validation() {
        assert!(matches!(
            token_classifier_fit::<f64>(&[], 2, 2, 1.0),
            Err(BaselineError::EmptyInput)
        ));
        let seq = labeled(&[0], &[0]);
        assert!(matches!(
            token_classifier_fit::<f64>(std::slice::from_ref(&seq), 2, 2, -1.0),
            Err(BaselineError::NegativeAlpha(_))
        ));
        let bad = labeled(&[4], &[0]);
        assert!(matches!(
            token_classifier_fit::<f64>(&[bad], 2, 2, 0.0),
            Err(BaselineError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn classify_identity_echoes_tokens() {
        let seq = labeled(&[0, 1], &[0, 1]);
        let m: TokenClassifier<f64> = token_classifier_fit(&[seq], 2, 2, 0.0).unwrap();
        assert_eq!(token_classify(&m, &[1, 0, 0, 1]).unwrap(), vec![1, 0, 0, 1]);
    }

    #[test]
    fn classify_uniform_all_zeros() {
        let m = TokenClassifier::from_parts(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(token_classify(&m, &[0, 1, 1]).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn classify_matches_per_step_bayes_oracle() {
        let m = TokenClassifier::from_parts(
            vec![0.2, 0.5, 0.3],
            vec![
                vec![0.7, 0.2, 0.1],
                vec![0.1, 0.3, 0.6],
                vec![0.4, 0.4, 0.2],
            ],
        )
        .unwrap();
        let tokens: Vec<usize> = (0..60).map(|i| (i * 7) % 3).collect();
        let got = token_classify(&m, &tokens).unwrap();
        for (&token, &pred) in tokens.iter().zip(&got) {
            // direct Bayes computation for this one step
            let posts: Vec<f64> = (0..3).map(|s| m.priors()[s] * m.likelihoods()[s][token]).collect();
            let best = posts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap()
                .0;
            assert_eq!(pred, best);
        }
    }

    #[test]
    fn classify_is_permutation_equivariant() {
        let seq = labeled(&[0, 1, 2, 1, 0, 2], &[0, 2, 1, 1, 0, 2]);
        let m: TokenClassifier<f64> = token_classifier_fit(&[seq], 3, 3, 1.0).unwrap();
        let tokens = vec![0, 1, 2, 2, 1, 0, 0];
        let preds = token_classify(&m, &tokens).unwrap();
        let perm = [3, 0, 6, 2, 5, 1, 4];
        let shuffled: Vec<usize> = perm.iter().map(|&i| tokens[i]).collect();
        let shuffled_preds = token_classify(&m, &shuffled).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(shuffled_preds[k], preds[i]);
        }
    }

    #[test]
    fn classify_rejects_out_of_range_token() {
        let m = TokenClassifier::from_parts(vec![1.0], vec![vec![1.0]]).unwrap();
        assert!(matches!(
            token_classify(&m, &[1]),
            Err(BaselineError::TokenOutOfRange { token: 1, .. })
        ));
    }

    fn labeled_dataset(rows: &[(usize, Vec<f64>)], num_states: usize) -> Dataset<f64> {
        let records: Vec<FeatureRecord<f64>> = rows
            .iter()
            .enumerate()
            .map(|(t, (class, features))| FeatureRecord {
                session_id: "s0".into(),
                t,
                features: features.clone(),
                qoe_score: Some(qoe_bin_midpoint(*class, num_states)),
            })
            .collect();
        Dataset::new(
            vec![SessionSeries::new("s0".into(), records).unwrap()],
            (0..rows[0].1.len()).map(|d| format!("f{d}")).collect(),
            num_states,
        )
        .unwrap()
    }

    #[test]
    fn gnb_separated_means_classify_to_nearer() {
        let train = labeled_dataset(
            &[
                (0, vec![-5.0]),
                (0, vec![-4.0]),
                (0, vec![-6.0]),
                (1, vec![5.0]),
                (1, vec![4.0]),
                (1, vec![6.0]),
            ],
            2,
        );
        let model = gnb_fit(&train).unwrap();
        let probe = SessionSeries::new(
            "q".into(),
            vec![
                FeatureRecord {
                    session_id: "q".into(),
                    t: 0,
                    features: vec![-3.0],
                    qoe_score: None,
                },
                FeatureRecord {
                    session_id: "q".into(),
                    t: 1,
                    features: vec![4.5],
                    qoe_score: None,
                },
            ],
        )
        .unwrap();
        assert_eq!(gnb_classify(&model, &probe).unwrap(), vec![0, 1]);
    }

    #[test]
    fn gnb_identical_conditionals_pick_max_prior_lowest_index() {
        // class 1 has twice the mass; both classes share the distribution
        let train = labeled_dataset(
            &[
                (0, vec![0.0]),
                (0, vec![1.0]),
                (1, vec![0.0]),
                (1, vec![1.0]),
                (1, vec![0.0]),
                (1, vec![1.0]),
            ],
            2,
        );
        let model = gnb_fit(&train).unwrap();
        let probe = SessionSeries::new(
            "q".into(),
            vec![FeatureRecord {
                session_id: "q".into(),
                t: 0,
                features: vec![0.5],
                qoe_score: None,
            }],
        )
        .unwrap();
        assert_eq!(gnb_classify(&model, &probe).unwrap(), vec![1]);
    }

    #[test]
    fn gnb_moments_and_variance_floor() {
        let train = labeled_dataset(&[(0, vec![0.0]), (0, vec![2.0]), (1, vec![10.0])], 2);
        let model = gnb_fit(&train).unwrap();
        assert_eq!(model.means()[0], vec![1.0]);
        assert_eq!(model.variances()[0], vec![1.0]);
        assert_eq!(model.means()[1], vec![10.0]);
        assert_eq!(model.variances()[1], vec![VARIANCE_FLOOR]); // constant class
        assert!((model.priors()[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gnb_empty_class_gets_floor_prior_and_pooled_stats() {
        let train = labeled_dataset(&[(0, vec![1.0]), (0, vec![3.0])], 3);
        let model = gnb_fit(&train).unwrap();
        assert!(model.priors()[1] > 0.0 && model.priors()[1] < 1e-11);
        assert!(model.priors()[2] > 0.0 && model.priors()[2] < 1e-11);
        assert_eq!(model.means()[1], vec![2.0]); // pooled mean
        let sum: f64 = model.priors().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gnb_matches_log_density_oracle() {
        let train = labeled_dataset(
            &[
                (0, vec![0.0, 1.0]),
                (0, vec![1.0, 2.0]),
                (0, vec![2.0, 0.0]),
                (1, vec![5.0, 5.0]),
                (1, vec![6.0, 7.0]),
                (2, vec![-4.0, 9.0]),
                (2, vec![-5.0, 8.0]),
            ],
            3,
        );
        let model = gnb_fit(&train).unwrap();
        let queries = [
            vec![0.5, 1.5],
            vec![5.5, 6.0],
            vec![-4.5, 8.5],
            vec![1.0, 5.0],
            vec![-1.0, 4.0],
        ];
        for q in &queries {
            // independent density evaluation per class
            let mut best = (0usize, f64::NEG_INFINITY);
            for s in 0..3 {
                let mut lp = model.priors()[s].ln();
                for (d, &x) in q.iter().enumerate() {
                    let m = model.means()[s][d];
                    let var = model.variances()[s][d];
                    let density =
                        (-((x - m) * (x - m)) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                    lp += density.ln();
                }
                if lp > best.1 {
                    best = (s, lp);
                }
            }
            assert_eq!(gnb_classify_point(&model, q), best.0);
        }
    }

    #[test]
    fn gnb_missing_label_rejected() {
        let records = vec![FeatureRecord {
            session_id: "s0".into(),
            t: 0,
            features: vec![1.0],
            qoe_score: None,
        }];
        let ds = Dataset::new(
            vec![SessionSeries::new("s0".into(), records).unwrap()],
            vec!["f0".into()],
            2,
        )
        .unwrap();
        assert!(matches!(
            gnb_fit(&ds),
            Err(BaselineError::MissingLabel { .. })
        ));
    }
}
