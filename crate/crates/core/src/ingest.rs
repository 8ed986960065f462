//! Telemetry ingestion: CSV parsing, validation, standardization, QoE label
//! discretization, and session-level train/test splitting.
//!
//! The on-disk format is a comma-delimited CSV with a header row, required
//! columns `session_id` (string) and `t` (consecutive integer timesteps per
//! session starting at 0), any number of numeric feature columns, and an
//! optional `qoe` column holding user ratings in [1, 100].

use crate::num::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

pub const SESSION_COLUMN: &str = "session_id";
pub const TIME_COLUMN: &str = "t";
pub const QOE_COLUMN: &str = "qoe";

/// The continuous user-rating scale the `qoe` column uses.
pub const QOE_MIN: f64 = 1.0;
pub const QOE_MAX: f64 = 100.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("MissingColumn: column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("NonNumericCell: line {line}, column `{column}`: `{value}` is not a finite number")]
    NonNumericCell {
        line: u64,
        column: String,
        value: String,
    },
    #[error("DuplicateTimestep: session `{session}` has timestep {t} more than once")]
    DuplicateTimestep { session: String, t: usize },
    #[error("GapInTimesteps: session `{session}` expected t={expected}, found t={found}")]
    GapInTimesteps {
        session: String,
        expected: usize,
        found: usize,
    },
    #[error("QoEOutOfRange: line {line}: qoe={value} outside [1, 100]")]
    QoeOutOfRange { line: u64, value: f64 },
    #[error("ScoreOutOfRange: score {0} outside [1, 100]")]
    ScoreOutOfRange(f64),
    #[error("InvalidStateCount: need at least 2 states, got {0}")]
    InvalidStateCount(usize),
    #[error("EmptyDataset: no records to operate on")]
    EmptyDataset,
    #[error("DimensionMismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("TooFewSessions: need at least {need}, got {got}")]
    TooFewSessions { need: usize, got: usize },
    #[error("InvalidFraction: test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One timestep of one session: a feature vector plus an optional QoE rating.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord<R: Real> {
    pub session_id: String,
    pub t: usize,
    pub features: Vec<R>,
    pub qoe_score: Option<R>,
}

/// A time-ordered run of records for one session, with consecutive `t`
/// starting at 0 and a single feature dimension throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSeries<R: Real> {
    pub session_id: String,
    pub records: Vec<FeatureRecord<R>>,
}

impl<R: Real> SessionSeries<R> {
    /// Builds a series after sorting by `t` and validating the timestep and
    /// feature invariants.
    pub fn new(
        session_id: String,
        mut records: Vec<FeatureRecord<R>>,
    ) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        records.sort_by_key(|r| r.t);
        let dim = records[0].features.len();
        for (expected, record) in records.iter().enumerate() {
            if record.t != expected {
                if record.t < expected {
                    return Err(IngestError::DuplicateTimestep {
                        session: session_id,
                        t: record.t,
                    });
                }
                return Err(IngestError::GapInTimesteps {
                    session: session_id,
                    expected,
                    found: record.t,
                });
            }
            if record.features.len() != dim {
                return Err(IngestError::DimensionMismatch {
                    expected: dim,
                    found: record.features.len(),
                });
            }
            if record.features.iter().any(|x| !x.is_finite()) {
                return Err(IngestError::NonNumericCell {
                    line: 0,
                    column: "features".to_string(),
                    value: "non-finite".to_string(),
                });
            }
            if let Some(q) = record.qoe_score {
                let q = q.to_f64_lossy();
                if !(QOE_MIN..=QOE_MAX).contains(&q) {
                    return Err(IngestError::QoeOutOfRange { line: 0, value: q });
                }
            }
        }
        Ok(Self {
            session_id,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.features.len())
    }

    /// True when every record carries a QoE rating.
    pub fn fully_labeled(&self) -> bool {
        self.records.iter().all(|r| r.qoe_score.is_some())
    }
}

/// A collection of sessions sharing one feature dimension, plus the number of
/// discrete QoE states the labels discretize into.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<R: Real> {
    pub sessions: Vec<SessionSeries<R>>,
    pub feature_names: Vec<String>,
    pub num_states: usize,
}

impl<R: Real> Dataset<R> {
    pub fn new(
        sessions: Vec<SessionSeries<R>>,
        feature_names: Vec<String>,
        num_states: usize,
    ) -> Result<Self, IngestError> {
        if num_states < 1 {
            return Err(IngestError::InvalidStateCount(num_states));
        }
        let dim = feature_names.len();
        for session in &sessions {
            if session.dim() != dim {
                return Err(IngestError::DimensionMismatch {
                    expected: dim,
                    found: session.dim(),
                });
            }
        }
        Ok(Self {
            sessions,
            feature_names,
            num_states,
        })
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_records(&self) -> usize {
        self.sessions.iter().map(SessionSeries::len).sum()
    }

    /// Iterates over every record in session order.
    pub fn records(&self) -> impl Iterator<Item = &FeatureRecord<R>> {
        self.sessions.iter().flat_map(|s| s.records.iter())
    }
}

/// Column mapping for [`load_csv`]. `feature_columns: None` treats every
/// column other than `session_id`, `t`, and `qoe` as a feature, in header
/// order.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    pub feature_columns: Option<Vec<String>>,
}

/// Per-feature z-score parameters fitted on training data.
///
/// `std_devs` holds population standard deviations; zero entries mean a
/// constant feature, which [`apply_standardizer`] passes through centered.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams<R: Real> {
    pub means: Vec<R>,
    pub std_devs: Vec<R>,
}

impl<R: Real> StandardizationParams<R> {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Standardizes a single feature vector.
    pub fn transform(&self, features: &[R]) -> Result<Vec<R>, IngestError> {
        if features.len() != self.dim() {
            return Err(IngestError::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(features
            .iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(&x, (&m, &s))| {
                let denom = if s == R::zero() { R::one() } else { s };
                (x - m) / denom
            })
            .collect())
    }
}

/// Loads a telemetry CSV into a [`Dataset`], grouping rows by `session_id`
/// (first-appearance order) and sorting by `t` within each session.
pub fn load_csv<R: Real>(
    path: &Path,
    schema: &CsvSchema,
    num_states: usize,
) -> Result<Dataset<R>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let col_index = |name: &str| headers.iter().position(|h| h == name);
    let session_idx =
        col_index(SESSION_COLUMN).ok_or_else(|| IngestError::MissingColumn(SESSION_COLUMN.into()))?;
    let time_idx =
        col_index(TIME_COLUMN).ok_or_else(|| IngestError::MissingColumn(TIME_COLUMN.into()))?;
    let qoe_idx = col_index(QOE_COLUMN);

    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(names) => {
            for name in names {
                if col_index(name).is_none() {
                    return Err(IngestError::MissingColumn(name.clone()));
                }
            }
            names.clone()
        }
        None => headers
            .iter()
            .filter(|h| {
                h.as_str() != SESSION_COLUMN && h.as_str() != TIME_COLUMN && h.as_str() != QOE_COLUMN
            })
            .cloned()
            .collect(),
    };
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|n| col_index(n).expect("feature column checked above"))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<FeatureRecord<R>>> = HashMap::new();

    for result in reader.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |idx: usize| record.get(idx).unwrap_or("");

        let parse_number = |idx: usize| -> Result<f64, IngestError> {
            let raw = cell(idx);
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::NonNumericCell {
                    line,
                    column: headers[idx].clone(),
                    value: raw.to_string(),
                }),
            }
        };

        let session = cell(session_idx).to_string();
        let t: usize = cell(time_idx).trim().parse().map_err(|_| {
            IngestError::NonNumericCell {
                line,
                column: headers[time_idx].clone(),
                value: cell(time_idx).to_string(),
            }
        })?;

        let mut features = Vec::with_capacity(feature_idx.len());
        for &idx in &feature_idx {
            features.push(R::cast(parse_number(idx)?));
        }

        let qoe_score = match qoe_idx {
            Some(idx) if !cell(idx).trim().is_empty() => {
                let v = parse_number(idx)?;
                if !(QOE_MIN..=QOE_MAX).contains(&v) {
                    return Err(IngestError::QoeOutOfRange { line, value: v });
                }
                Some(R::cast(v))
            }
            _ => None,
        };

        if !grouped.contains_key(&session) {
            order.push(session.clone());
        }
        grouped.entry(session.clone()).or_default().push(FeatureRecord {
            session_id: session,
            t,
            features,
            qoe_score,
        });
    }

    let mut sessions = Vec::with_capacity(order.len());
    for session_id in order {
        let records = grouped.remove(&session_id).expect("grouped by construction");
        sessions.push(SessionSeries::new(session_id, records)?);
    }
    Dataset::new(sessions, feature_names, num_states)
}

/// Fits per-feature mean and population standard deviation over every record
/// of `train`, all sessions pooled.
pub fn fit_standardizer<R: Real>(
    train: &Dataset<R>,
) -> Result<StandardizationParams<R>, IngestError> {
    let n = train.num_records();
    if n == 0 {
        return Err(IngestError::EmptyDataset);
    }
    let dim = train.dim();
    let count = R::cast_usize(n);
    let mut sums = vec![R::zero(); dim];
    let mut sq_sums = vec![R::zero(); dim];
    for record in train.records() {
        for (d, &x) in record.features.iter().enumerate() {
            sums[d] = sums[d] + x;
            sq_sums[d] = sq_sums[d] + x * x;
        }
    }
    let means: Vec<R> = sums.iter().map(|&s| s / count).collect();
    let std_devs: Vec<R> = sq_sums
        .iter()
        .zip(&means)
        .map(|(&sq, &m)| {
            let variance = (sq / count - m * m).max(R::zero());
            variance.sqrt()
        })
        .collect();
    Ok(StandardizationParams { means, std_devs })
}

/// Returns a copy of `data` with every feature z-scored by `params`.
/// QoE scores and session structure are untouched.
pub fn apply_standardizer<R: Real>(
    data: &Dataset<R>,
    params: &StandardizationParams<R>,
) -> Result<Dataset<R>, IngestError> {
    if data.dim() != params.dim() {
        return Err(IngestError::DimensionMismatch {
            expected: params.dim(),
            found: data.dim(),
        });
    }
    let sessions = data
        .sessions
        .iter()
        .map(|session| {
            let records = session
                .records
                .iter()
                .map(|r| {
                    Ok(FeatureRecord {
                        session_id: r.session_id.clone(),
                        t: r.t,
                        features: params.transform(&r.features)?,
                        qoe_score: r.qoe_score,
                    })
                })
                .collect::<Result<Vec<_>, IngestError>>()?;
            Ok(SessionSeries {
                session_id: session.session_id.clone(),
                records,
            })
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    Ok(Dataset {
        sessions,
        feature_names: data.feature_names.clone(),
        num_states: data.num_states,
    })
}

/// Maps a continuous QoE score in [1, 100] onto one of `num_states`
/// equal-width bins. Monotone non-decreasing in the score.
pub fn discretize_qoe<R: Real>(score: R, num_states: usize) -> Result<usize, IngestError> {
    if num_states < 2 {
        return Err(IngestError::InvalidStateCount(num_states));
    }
    let s = score.to_f64_lossy();
    if !(QOE_MIN..=QOE_MAX).contains(&s) {
        return Err(IngestError::ScoreOutOfRange(s));
    }
    let width = (QOE_MAX - QOE_MIN) / num_states as f64;
    let state = ((s - QOE_MIN) / width).floor() as usize;
    Ok(state.min(num_states - 1))
}

/// Midpoint of state `state`'s QoE bin on the [1, 100] scale; the value
/// [`discretize_qoe`] maps back onto `state`.
pub fn qoe_bin_midpoint<R: Real>(state: usize, num_states: usize) -> R {
    let width = (QOE_MAX - QOE_MIN) / num_states as f64;
    R::cast(QOE_MIN + (state as f64 + 0.5) * width)
}

/// Splits whole sessions into disjoint train and test sets. The test side
/// receives `round(test_fraction * n)` sessions clamped so both sides keep at
/// least one; assignment is a seeded shuffle, order within each side follows
/// the input.
pub fn split_sessions<R: Real>(
    data: &Dataset<R>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<R>, Dataset<R>), IngestError> {
    let n = data.sessions.len();
    if n < 2 {
        return Err(IngestError::TooFewSessions { need: 2, got: n });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IngestError::InvalidFraction(test_fraction));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut is_test = vec![false; n];
    for &idx in indices.iter().take(n_test) {
        is_test[idx] = true;
    }

    let pick = |want_test: bool| -> Vec<SessionSeries<R>> {
        data.sessions
            .iter()
            .enumerate()
            .filter(|(i, _)| is_test[*i] == want_test)
            .map(|(_, s)| s.clone())
            .collect()
    };
    let train = Dataset {
        sessions: pick(false),
        feature_names: data.feature_names.clone(),
        num_states: data.num_states,
    };
    let test = Dataset {
        sessions: pick(true),
        feature_names: data.feature_names.clone(),
        num_states: data.num_states,
    };
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    fn record(session: &str, t: usize, features: &[f64], qoe: Option<f64>) -> FeatureRecord<f64> {
        FeatureRecord {
            session_id: session.to_string(),
            t,
            features: features.to_vec(),
            qoe_score: qoe,
        }
    }

    fn single_session_dataset(rows: &[(&[f64], Option<f64>)]) -> Dataset<f64> {
        let records = rows
            .iter()
            .enumerate()
            .map(|(t, (f, q))| record("s0", t, f, *q))
            .collect();
        Dataset::new(
            vec![SessionSeries::new("s0".into(), records).unwrap()],
            (0..rows[0].0.len()).map(|d| format!("f{d}")).collect(),
            5,
        )
        .unwrap()
    }

    #[test]
    fn load_csv_two_rows_one_session() {
        let file = write_csv("session_id,t,thr,lat,qoe\na,0,1.5,20,80\na,1,1.25,25,75\n");
        let ds: Dataset<f64> = load_csv(file.path(), &CsvSchema::default(), 5).unwrap();
        assert_eq!(ds.sessions.len(), 1);
        assert_eq!(ds.sessions[0].len(), 2);
        assert_eq!(ds.feature_names, vec!["thr", "lat"]);
        assert_eq!(ds.sessions[0].records[0].features, vec![1.5, 20.0]);
        assert_eq!(ds.sessions[0].records[1].qoe_score, Some(75.0));
    }

    #[test]
    fn load_csv_gap_in_timesteps() {
        let file = write_csv("session_id,t,x\na,0,1\na,2,2\n");
        let err = load_csv::<f64>(file.path(), &CsvSchema::default(), 5).unwrap_err();
        assert!(matches!(err, IngestError::GapInTimesteps { .. }), "{err}");
    }

    #[test]
    fn load_csv_duplicate_timestep() {
        let file = write_csv("session_id,t,x\na,0,1\na,0,2\n");
        let err = load_csv::<f64>(file.path(), &CsvSchema::default(), 5).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateTimestep { .. }), "{err}");
    }

    #[test]
    fn load_csv_qoe_out_of_range() {
        let file = write_csv("session_id,t,x,qoe\na,0,1,150\n");
        let err = load_csv::<f64>(file.path(), &CsvSchema::default(), 5).unwrap_err();
        assert!(matches!(err, IngestError::QoeOutOfRange { .. }), "{err}");
    }

    #[test]
    fn load_csv_rejects_non_finite_feature() {
        let file = write_csv("session_id,t,x\na,0,NaN\n");
        let err = load_csv::<f64>(file.path(), &CsvSchema::default(), 5).unwrap_err();
        assert!(matches!(err, IngestError::NonNumericCell { .. }), "{err}");
    }

    #[test]
    fn load_csv_missing_required_column() {
        let file = write_csv("sid,t,x\na,0,1\n");
        let err = load_csv::<f64>(file.path(), &CsvSchema::default(), 5).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(_)), "{err}");
    }

    #[test]
    fn load_csv_sorts_rows_by_timestep() {
        let file = write_csv("session_id,t,x\na,1,10\na,0,5\n");
        let ds: Dataset<f64> = load_csv(file.path(), &CsvSchema::default(), 5).unwrap();
        assert_eq!(ds.sessions[0].records[0].features, vec![5.0]);
        assert_eq!(ds.sessions[0].records[1].features, vec![10.0]);
    }

    #[test]
    fn fit_standardizer_two_point() {
        let ds = single_session_dataset(&[(&[0.0, 10.0], None), (&[2.0, 10.0], None)]);
        let params = fit_standardizer(&ds).unwrap();
        assert_eq!(params.means, vec![1.0, 10.0]);
        assert_eq!(params.std_devs, vec![1.0, 0.0]);
    }

    #[test]
    fn fit_standardizer_single_record() {
        let ds = single_session_dataset(&[(&[5.0], None)]);
        let params = fit_standardizer(&ds).unwrap();
        assert_eq!(params.means, vec![5.0]);
        assert_eq!(params.std_devs, vec![0.0]);
    }

    #[test]
    fn apply_standardizer_basic() {
        let params = StandardizationParams {
            means: vec![1.0],
            std_devs: vec![2.0],
        };
        assert_eq!(params.transform(&[3.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn standardizer_round_trip_zero_mean_unit_std() {
        let ds = single_session_dataset(&[
            (&[1.0, 7.0], None),
            (&[2.0, 7.0], None),
            (&[4.0, 7.0], None),
            (&[8.0, 7.0], None),
        ]);
        let params = fit_standardizer(&ds).unwrap();
        let out = apply_standardizer(&ds, &params).unwrap();
        let refit = fit_standardizer(&out).unwrap();
        assert!(refit.means[0].abs() < 1e-9);
        assert!((refit.std_devs[0] - 1.0).abs() < 1e-9);
        // constant feature: centered, untouched by the zero-std rule
        assert!(refit.means[1].abs() < 1e-9);
        assert_eq!(refit.std_devs[1], 0.0);
        for r in out.records() {
            assert!(r.features[1] == 0.0);
        }
    }

    #[test]
    fn discretize_qoe_boundaries() {
        assert_eq!(discretize_qoe(1.0, 5).unwrap(), 0);
        assert_eq!(discretize_qoe(100.0, 5).unwrap(), 4);
        // bin edges at 1 + k*19.8: 50 lands in the third bin
        assert_eq!(discretize_qoe(50.0, 5).unwrap(), 2);
    }

    #[test]
    fn discretize_qoe_matches_enumerated_edges() {
        // independent edge enumeration for S=5
        let edges: Vec<f64> = (1..5).map(|k| 1.0 + k as f64 * 19.8).collect();
        for score in [1.0, 10.0, 20.79, 20.81, 40.59, 40.61, 99.9, 100.0] {
            let expected = edges.iter().filter(|&&e| score >= e).count();
            assert_eq!(discretize_qoe(score, 5).unwrap(), expected, "score {score}");
        }
    }

    #[test]
    fn discretize_qoe_errors() {
        assert!(matches!(
            discretize_qoe(0.5, 5),
            Err(IngestError::ScoreOutOfRange(_))
        ));
        assert!(matches!(
            discretize_qoe(50.0, 1),
            Err(IngestError::InvalidStateCount(1))
        ));
    }

    #[test]
    fn bin_midpoint_round_trips_through_discretize() {
        for s in 2..=7 {
            for state in 0..s {
                let mid: f64 = qoe_bin_midpoint(state, s);
                assert_eq!(discretize_qoe(mid, s).unwrap(), state);
            }
        }
    }

    fn many_sessions(n: usize) -> Dataset<f64> {
        let sessions = (0..n)
            .map(|i| {
                let id = format!("s{i}");
                SessionSeries::new(id.clone(), vec![record(&id, 0, &[i as f64], None)]).unwrap()
            })
            .collect();
        Dataset::new(sessions, vec!["x".into()], 5).unwrap()
    }

    #[test]
    fn split_sessions_counts_and_partition() {
        let ds = many_sessions(10);
        let (train, test) = split_sessions(&ds, 0.2, 17).unwrap();
        assert_eq!(train.sessions.len(), 8);
        assert_eq!(test.sessions.len(), 2);
        let mut all: Vec<&str> = train
            .sessions
            .iter()
            .chain(&test.sessions)
            .map(|s| s.session_id.as_str())
            .collect();
        all.sort_unstable();
        let mut expected: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        expected.sort();
        assert_eq!(all, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn split_sessions_deterministic() {
        let ds = many_sessions(9);
        let (a_train, a_test) = split_sessions(&ds, 0.3, 99).unwrap();
        let (b_train, b_test) = split_sessions(&ds, 0.3, 99).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
    }

    #[test]
    fn split_sessions_keeps_both_sides_nonempty() {
        let ds = many_sessions(2);
        let (train, test) = split_sessions(&ds, 0.9, 3).unwrap();
        assert_eq!(train.sessions.len(), 1);
        assert_eq!(test.sessions.len(), 1);
    }

    #[test]
    fn split_sessions_too_few() {
        let ds = many_sessions(1);
        assert!(matches!(
            split_sessions(&ds, 0.5, 0),
            Err(IngestError::TooFewSessions { .. })
        ));
    }
}
