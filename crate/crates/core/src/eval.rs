//! Evaluation: confusion matrices, accuracy/precision/recall/F1, inference
//! latency measurement with an injectable clock, and assembly of the
//! model-comparison table (measured rows plus cited literature constants).

use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("LengthMismatch: {truth} true labels vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("IndexOutOfRange: state {index} outside [0, {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("EmptyMatrix: confusion matrix has no counts")]
    EmptyMatrix,
    #[error("EmptyInput: nothing to evaluate")]
    EmptyInput,
    #[error("InvalidRepetitions: repetitions must be >= 1")]
    InvalidRepetitions,
}

/// S x S tally of (true state, predicted state) pairs; rows index the true
/// state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_states: usize) -> Self {
        Self {
            counts: vec![vec![0; num_states]; num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Adds one (true, predicted) observation.
    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        let s = self.num_states();
        for index in [truth, predicted] {
            if index >= s {
                return Err(EvalError::IndexOutOfRange { index, bound: s });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    /// Merges another matrix of the same shape into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), EvalError> {
        if other.num_states() != self.num_states() {
            return Err(EvalError::LengthMismatch {
                truth: self.num_states(),
                predicted: other.num_states(),
            });
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (m, &t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
        Ok(())
    }
}

/// Tallies paired label sequences into a confusion matrix.
pub fn confusion(
    truth: &[usize],
    predicted: &[usize],
    num_states: usize,
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::new(num_states);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

/// Precision, recall, and F1 for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full metric report over a confusion matrix. Macro averages run over
/// classes with nonzero support only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub support: Vec<u64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Computes accuracy, per-class precision/recall/F1, and macro averages.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let s = cm.num_states();
    let mut trace = 0u64;
    let mut per_class = Vec::with_capacity(s);
    let mut support = Vec::with_capacity(s);
    let mut macro_sums = (0.0, 0.0, 0.0);
    let mut supported_classes = 0usize;

    for class in 0..s {
        let tp = cm.counts[class][class];
        trace += tp;
        let row_sum: u64 = cm.counts[class].iter().sum();
        let col_sum: u64 = cm.counts.iter().map(|row| row[class]).sum();
        let precision = if col_sum == 0 {
            0.0
        } else {
            tp as f64 / col_sum as f64
        };
        let recall = if row_sum == 0 {
            0.0
        } else {
            tp as f64 / row_sum as f64
        };
        let f1 = f1_from_pr(precision, recall);
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
        });
        support.push(row_sum);
        if row_sum > 0 {
            supported_classes += 1;
            macro_sums.0 += precision;
            macro_sums.1 += recall;
            macro_sums.2 += f1;
        }
    }

    let denom = supported_classes.max(1) as f64;
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        per_class,
        support,
        macro_precision: macro_sums.0 / denom,
        macro_recall: macro_sums.1 / denom,
        macro_f1: macro_sums.2 / denom,
    })
}

/// Convenience: pools several (truth, prediction) sequence pairs into one
/// confusion matrix and reports metrics over all timesteps.
pub fn evaluate_predictions(
    truths: &[Vec<usize>],
    predictions: &[Vec<usize>],
    num_states: usize,
) -> Result<(ConfusionMatrix, MetricsReport), EvalError> {
    if truths.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            truth: truths.len(),
            predicted: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::new(num_states);
    for (t, p) in truths.iter().zip(predictions) {
        cm.merge(&confusion(t, p, num_states)?)?;
    }
    let report = metrics(&cm)?;
    Ok((cm, report))
}

/// Monotonic time source, injectable so latency statistics are unit-testable
/// with deterministic readings.
pub trait Clock {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&mut self) -> Duration;
}

/// Wall-clock time from a monotonic [`std::time::Instant`].
pub struct SystemClock {
    origin: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&mut self) -> Duration {
        self.origin.elapsed()
    }
}

/// Deterministic clock for tests: hands out one preset duration per measured
/// call (each call reads the clock twice), cycling when exhausted.
pub struct FakeClock {
    durations: Vec<Duration>,
    reads: usize,
    elapsed: Duration,
}

impl FakeClock {
    pub fn with_durations(durations: Vec<Duration>) -> Self {
        assert!(!durations.is_empty(), "FakeClock needs at least one duration");
        Self {
            durations,
            reads: 0,
            elapsed: Duration::ZERO,
        }
    }

    pub fn from_millis(millis: &[u64]) -> Self {
        Self::with_durations(millis.iter().map(|&m| Duration::from_millis(m)).collect())
    }
}

impl Clock for FakeClock {
    fn now(&mut self) -> Duration {
        let idx = self.reads;
        self.reads += 1;
        if idx % 2 == 1 {
            let sample = (idx - 1) / 2;
            self.elapsed += self.durations[sample % self.durations.len()];
        }
        self.elapsed
    }
}

/// Latency statistics over `repetitions` measured calls, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub median_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub repetitions: usize,
    pub warmup: usize,
    pub sequence_length: usize,
}

/// Runs `warmup` unmeasured calls, then `repetitions` measured calls of
/// `decode_fn` on `tokens`, reading `clock` around each measured call.
/// Median of an even sample count is the mean of the two central order
/// statistics; p95 is the nearest-rank order statistic.
pub fn measure_latency<T>(
    mut decode_fn: impl FnMut(&[usize]) -> T,
    tokens: &[usize],
    repetitions: usize,
    warmup: usize,
    clock: &mut dyn Clock,
) -> Result<LatencyReport, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::InvalidRepetitions);
    }
    for _ in 0..warmup {
        std::hint::black_box(decode_fn(tokens));
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = clock.now();
        std::hint::black_box(decode_fn(tokens));
        let end = clock.now();
        samples.push(end.saturating_sub(start).as_secs_f64());
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("durations are finite"));

    let r = samples.len();
    let median_s = if r % 2 == 1 {
        samples[r / 2]
    } else {
        (samples[r / 2 - 1] + samples[r / 2]) / 2.0
    };
    let p95_rank = ((0.95 * r as f64).ceil() as usize).clamp(1, r);
    Ok(LatencyReport {
        median_s,
        p95_s: samples[p95_rank - 1],
        min_s: samples[0],
        max_s: samples[r - 1],
        repetitions: r,
        warmup,
        sequence_length: tokens.len(),
    })
}

/// Provenance of a comparison-table row: measured in this run, or cited from
/// the literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Measured,
    Paper,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Measured => "measured",
            Source::Paper => "paper",
        }
    }
}

/// One row of the model-comparison table. `None` cells render as empty
/// (unmeasured or not reported by the cited source).
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub median_latency_s: Option<f64>,
    pub p95_latency_s: Option<f64>,
    pub source: Source,
}

impl ComparisonRow {
    pub fn measured(
        model: impl Into<String>,
        report: &MetricsReport,
        latency: Option<&LatencyReport>,
    ) -> Self {
        Self {
            model: model.into(),
            accuracy: Some(report.accuracy),
            macro_f1: Some(report.macro_f1),
            median_latency_s: latency.map(|l| l.median_s),
            p95_latency_s: latency.map(|l| l.p95_s),
            source: Source::Measured,
        }
    }
}

/// Literature reference rows: accuracy and latency figures reported for the
/// comparison models, embedded as cited constants and flagged `paper`.
pub fn paper_reference_rows() -> Vec<ComparisonRow> {
    let cite = |model: &str, accuracy: Option<f64>, latency: Option<f64>| ComparisonRow {
        model: model.to_string(),
        accuracy,
        macro_f1: None,
        median_latency_s: latency,
        p95_latency_s: None,
        source: Source::Paper,
    };
    vec![
        cite("vq-hmm", Some(0.77), Some(0.0015)),
        cite("binned-hmm", Some(0.29), Some(0.0011)),
        cite("classifier-features", Some(0.64), Some(0.0021)),
        cite("classifier-tokens", Some(0.67), Some(0.0017)),
        cite("lstm", None, Some(0.023)),
    ]
}
