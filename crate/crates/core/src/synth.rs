//! Controlled synthetic datasets: sample hidden-state paths from a Markov
//! chain, emit per-state Gaussian features, and label each timestep with the
//! QoE bin midpoint of its state so discretization recovers the path exactly.

use crate::hmm::sample_categorical;
use crate::ingest::{qoe_bin_midpoint, Dataset, FeatureRecord, IngestError, SessionSeries};
use crate::num::{is_stochastic_row, Real};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Generator description: per-state Gaussian feature distributions (mean plus
/// diagonal covariance, given as standard deviations) over a Markov chain.
///
/// `initial` defaults to the uniform distribution over states when omitted;
/// `feature_names` defaults to `f0, f1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
pub struct GeneratorSpec<R: Real> {
    pub num_sessions: usize,
    pub steps_per_session: usize,
    /// S rows of D feature means.
    pub state_means: Vec<Vec<R>>,
    /// S rows of D per-feature standard deviations, all strictly positive.
    pub state_std_devs: Vec<Vec<R>>,
    /// S x S row-stochastic transition matrix.
    pub transitions: Vec<Vec<R>>,
    #[serde(default)]
    pub initial: Option<Vec<R>>,
    #[serde(default)]
    pub feature_names: Option<Vec<String>>,
}

impl<R: Real> GeneratorSpec<R> {
    pub fn num_states(&self) -> usize {
        self.state_means.len()
    }

    pub fn dim(&self) -> usize {
        self.state_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let s = self.num_states();
        let d = self.dim();
        let invalid = |msg: String| Err(IngestError::InvalidSpec(msg));
        if s == 0 || d == 0 {
            return invalid("need at least one state and one feature".into());
        }
        if self.num_sessions == 0 || self.steps_per_session == 0 {
            return invalid("num_sessions and steps_per_session must be positive".into());
        }
        if self.state_std_devs.len() != s {
            return invalid(format!(
                "state_std_devs has {} rows, expected {s}",
                self.state_std_devs.len()
            ));
        }
        for (i, (means, stds)) in self.state_means.iter().zip(&self.state_std_devs).enumerate() {
            if means.len() != d || stds.len() != d {
                return invalid(format!("state {i} rows must have {d} entries"));
            }
            if means.iter().any(|m| !m.is_finite()) {
                return invalid(format!("state {i} has a non-finite mean"));
            }
            if stds.iter().any(|x| *x <= R::zero() || !x.is_finite()) {
                return invalid(format!("state {i} has a non-positive variance"));
            }
        }
        if self.transitions.len() != s {
            return invalid(format!(
                "transitions has {} rows, expected {s}",
                self.transitions.len()
            ));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != s || !is_stochastic_row(row) {
                return invalid(format!("transition row {i} is not stochastic"));
            }
        }
        if let Some(init) = &self.initial {
            if init.len() != s || !is_stochastic_row(init) {
                return invalid("initial distribution is not stochastic".into());
            }
        }
        if let Some(names) = &self.feature_names {
            if names.len() != d {
                return invalid(format!("feature_names has {} entries, expected {d}", names.len()));
            }
        }
        Ok(())
    }

    fn resolved_initial(&self) -> Vec<R> {
        self.initial
            .clone()
            .unwrap_or_else(|| vec![R::cast(1.0 / self.num_states() as f64); self.num_states()])
    }

    fn resolved_feature_names(&self) -> Vec<String> {
        self.feature_names
            .clone()
            .unwrap_or_else(|| (0..self.dim()).map(|d| format!("f{d}")).collect())
    }
}

/// Samples a full dataset from `spec`, deterministically in `seed`.
pub fn synthesize_dataset<R: Real>(
    spec: &GeneratorSpec<R>,
    seed: u64,
) -> Result<Dataset<R>, IngestError> {
    synthesize_dataset_with_paths(spec, seed).map(|(dataset, _)| dataset)
}

/// As [`synthesize_dataset`], also returning the hidden state path of each
/// session (needed for ground truth when S = 1, where the QoE labels cannot
/// be discretized back).
pub fn synthesize_dataset_with_paths<R: Real>(
    spec: &GeneratorSpec<R>,
    seed: u64,
) -> Result<(Dataset<R>, Vec<Vec<usize>>), IngestError> {
    spec.validate()?;
    let s = spec.num_states();
    let d = spec.dim();
    let initial = spec.resolved_initial();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let normals: Vec<Vec<Normal<f64>>> = spec
        .state_means
        .iter()
        .zip(&spec.state_std_devs)
        .map(|(means, stds)| {
            means
                .iter()
                .zip(stds)
                .map(|(m, sd)| {
                    Normal::new(m.to_f64_lossy(), sd.to_f64_lossy())
                        .expect("std devs validated positive and finite")
                })
                .collect()
        })
        .collect();

    let mut sessions = Vec::with_capacity(spec.num_sessions);
    let mut paths = Vec::with_capacity(spec.num_sessions);
    for session_idx in 0..spec.num_sessions {
        let session_id = format!("synth-{session_idx:04}");
        let mut records = Vec::with_capacity(spec.steps_per_session);
        let mut path = Vec::with_capacity(spec.steps_per_session);
        let mut state = sample_categorical(&initial, rng.gen::<f64>());
        for t in 0..spec.steps_per_session {
            if t > 0 {
                state = sample_categorical(&spec.transitions[state], rng.gen::<f64>());
            }
            let mut features = Vec::with_capacity(d);
            for normal in &normals[state] {
                features.push(R::cast(normal.sample(&mut rng)));
            }
            records.push(FeatureRecord {
                session_id: session_id.clone(),
                t,
                features,
                qoe_score: Some(qoe_bin_midpoint(state, s)),
            });
            path.push(state);
        }
        sessions.push(SessionSeries::new(session_id, records)?);
        paths.push(path);
    }
    let dataset = Dataset::new(sessions, spec.resolved_feature_names(), s)?;
    Ok((dataset, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{discretize_qoe, fit_standardizer};

    fn three_state_spec() -> GeneratorSpec<f64> {
        GeneratorSpec {
            num_sessions: 50,
            steps_per_session: 200,
            state_means: vec![vec![0.0, 0.0], vec![3.0, 3.0], vec![6.0, 6.0]],
            state_std_devs: vec![vec![1.0, 1.0]; 3],
            transitions: vec![
                vec![0.8, 0.15, 0.05],
                vec![0.1, 0.8, 0.1],
                vec![0.05, 0.15, 0.8],
            ],
            initial: None,
            feature_names: None,
        }
    }

    #[test]
    fn single_state_all_labels_zero() {
        let spec = GeneratorSpec {
            num_sessions: 3,
            steps_per_session: 10,
            state_means: vec![vec![1.0]],
            state_std_devs: vec![vec![0.5]],
            transitions: vec![vec![1.0]],
            initial: None,
            feature_names: None,
        };
        let (dataset, paths) = synthesize_dataset_with_paths(&spec, 5).unwrap();
        assert!(paths.iter().flatten().all(|&s| s == 0));
        // S=1 bin midpoint sits at the center of [1,100]
        for record in dataset.records() {
            assert_eq!(record.qoe_score, Some(50.5));
        }
    }

    #[test]
    fn identity_transitions_give_constant_paths() {
        let spec = GeneratorSpec {
            num_sessions: 8,
            steps_per_session: 25,
            state_means: vec![vec![0.0], vec![5.0]],
            state_std_devs: vec![vec![1.0], vec![1.0]],
            transitions: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            initial: None,
            feature_names: None,
        };
        let (_, paths) = synthesize_dataset_with_paths(&spec, 11).unwrap();
        for path in &paths {
            assert!(path.windows(2).all(|w| w[0] == w[1]), "{path:?}");
        }
    }

    #[test]
    fn empirical_transitions_near_spec() {
        let spec = three_state_spec();
        let (_, paths) = synthesize_dataset_with_paths(&spec, 2024).unwrap();
        let mut counts = vec![vec![0u64; 3]; 3];
        for path in &paths {
            for w in path.windows(2) {
                counts[w[0]][w[1]] += 1;
            }
        }
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            assert!(total > 0);
            for (j, &c) in row.iter().enumerate() {
                let freq = c as f64 / total as f64;
                assert!(
                    (freq - spec.transitions[i][j]).abs() < 0.05,
                    "A[{i}][{j}]: {freq} vs {}",
                    spec.transitions[i][j]
                );
            }
        }
    }

    #[test]
    fn labels_round_trip_through_discretize() {
        let spec = three_state_spec();
        let (dataset, paths) = synthesize_dataset_with_paths(&spec, 9).unwrap();
        for (session, path) in dataset.sessions.iter().zip(&paths) {
            for (record, &state) in session.records.iter().zip(path) {
                let score = record.qoe_score.unwrap();
                assert_eq!(discretize_qoe(score, 3).unwrap(), state);
            }
        }
    }

    #[test]
    fn same_seed_identical_dataset() {
        let spec = three_state_spec();
        let a = synthesize_dataset(&spec, 77).unwrap();
        let b = synthesize_dataset(&spec, 77).unwrap();
        assert_eq!(a, b);
        let c = synthesize_dataset(&spec, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = three_state_spec();
        spec.transitions[0] = vec![0.5, 0.4, 0.2];
        assert!(matches!(
            synthesize_dataset(&spec, 0),
            Err(IngestError::InvalidSpec(_))
        ));

        let mut spec = three_state_spec();
        spec.state_std_devs[1][0] = 0.0;
        assert!(matches!(
            synthesize_dataset(&spec, 0),
            Err(IngestError::InvalidSpec(_))
        ));

        let mut spec = three_state_spec();
        spec.initial = Some(vec![0.5, 0.5]); // wrong length for S=3
        assert!(matches!(
            synthesize_dataset(&spec, 0),
            Err(IngestError::InvalidSpec(_))
        ));
    }

    #[test]
    fn standardizer_recovers_generator_moments() {
        // 1000 draws from N(3, 2^2) on a single feature
        let spec: GeneratorSpec<f64> = GeneratorSpec {
            num_sessions: 1,
            steps_per_session: 1000,
            state_means: vec![vec![3.0]],
            state_std_devs: vec![vec![2.0]],
            transitions: vec![vec![1.0]],
            initial: None,
            feature_names: None,
        };
        let dataset = synthesize_dataset(&spec, 31).unwrap();
        let params = fit_standardizer(&dataset).unwrap();
        assert!((params.means[0] - 3.0).abs() < 0.2, "mean {}", params.means[0]);
        assert!(
            (params.std_devs[0] - 2.0).abs() < 0.2,
            "std {}",
            params.std_devs[0]
        );
    }
}
