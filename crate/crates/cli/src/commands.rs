//! Implementations of the nine subcommands. Each one resolves its settings,
//! reads and writes only the documented file formats, and finishes by
//! writing a manifest over everything it produced.

use crate::config::{CommonArgs, Settings};
use crate::error::CliError;
use crate::io::{
    plot_file_names, read_tokens, write_comparison, write_confusion, write_decoded, write_plot,
    write_tokens, MetricsDoc, TokenSeries,
};
use crate::manifest::{write_json_pretty, write_manifest};
use clap::Args;
use qoeseq_core::artifact::{
    load_codebook, load_hmm, load_token_classifier, peek_model_type, save_codebook, save_gnb,
    save_hmm, save_token_classifier,
};
use qoeseq_core::baselines::{gnb_classify, gnb_fit, token_classifier_fit, token_classify};
use qoeseq_core::eval::{
    evaluate_predictions, measure_latency, paper_reference_rows, ComparisonRow, LatencyReport,
    MetricsReport, SystemClock,
};
use qoeseq_core::hmm::{
    entropy, fit_supervised, posterior_marginals, sample_sequence, viterbi_decode, LabeledSequence,
};
use qoeseq_core::ingest::{
    apply_standardizer, discretize_qoe, fit_standardizer, load_csv, split_sessions, CsvSchema,
};
use qoeseq_core::vq::{binning_encode, binning_fit, kmeans_fit, vq_encode};
use qoeseq_core::{
    Codebook, Dataset, GeneratorSpec, HmmParams, StandardizationParams, TokenClassifier,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Lloyd iteration cap for codebook fitting.
const KMEANS_MAX_ITERS: usize = 300;
/// Centroid-shift convergence threshold for codebook fitting.
const KMEANS_TOL: f64 = 1e-6;

const CODEBOOK_FILE: &str = "codebook.json";
const MODEL_FILE: &str = "model.json";

// ---------------------------------------------------------------------------
// shared plumbing

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

fn load_dataset(path: &Path, num_states: usize) -> Result<Dataset, CliError> {
    require_exists(path)?;
    Ok(load_csv(path, &CsvSchema::default(), num_states)?)
}

fn read_spec_file(path: &Path) -> Result<GeneratorSpec, CliError> {
    require_exists(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let spec: GeneratorSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

/// Ground-truth state sequences from the QoE labels of every session.
fn truth_states(data: &Dataset, num_states: usize) -> Result<Vec<Vec<usize>>, CliError> {
    data.sessions
        .iter()
        .map(|session| {
            session
                .records
                .iter()
                .map(|r| {
                    let score = r.qoe_score.ok_or_else(|| {
                        CliError::schema(format!(
                            "session {} t={} has no qoe label",
                            session.session_id, r.t
                        ))
                    })?;
                    Ok(discretize_qoe(score, num_states)?)
                })
                .collect()
        })
        .collect()
}

fn feature_points(data: &Dataset) -> Vec<Vec<f64>> {
    data.records().map(|r| r.features.clone()).collect()
}

fn vq_encode_sessions(codebook: &Codebook, data: &Dataset) -> Result<Vec<Vec<usize>>, CliError> {
    data.sessions
        .iter()
        .map(|session| {
            session
                .records
                .iter()
                .map(|r| Ok(vq_encode(codebook, &r.features)?))
                .collect()
        })
        .collect()
}

fn labeled_sequences(
    states: &[Vec<usize>],
    tokens: &[Vec<usize>],
) -> Result<Vec<LabeledSequence>, CliError> {
    states
        .iter()
        .zip(tokens)
        .map(|(s, t)| Ok(LabeledSequence::new(s.clone(), t.clone())?))
        .collect()
}

/// Writes a dataset in the telemetry CSV schema. The `qoe` column is present
/// when every record carries a label.
fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let labeled = data.records().all(|r| r.qoe_score.is_some());
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["session_id".to_string(), "t".to_string()];
    header.extend(data.feature_names.iter().cloned());
    if labeled {
        header.push("qoe".to_string());
    }
    writer.write_record(&header)?;
    for session in &data.sessions {
        for record in &session.records {
            let mut row = vec![session.session_id.clone(), record.t.to_string()];
            row.extend(record.features.iter().map(f64::to_string));
            if labeled {
                row.push(record.qoe_score.expect("labeled checked above").to_string());
            }
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Per-step posterior entropy from the classifier's `prior x likelihood`
/// table, for plot output parity with the HMM path.
fn classifier_entropies(model: &TokenClassifier, tokens: &[usize]) -> Vec<f64> {
    let s = model.num_states();
    tokens
        .iter()
        .map(|&token| {
            let raw: Vec<f64> = (0..s)
                .map(|state| model.priors()[state] * model.likelihoods()[state][token])
                .collect();
            let sum: f64 = raw.iter().sum();
            if sum > 0.0 {
                let row: Vec<f64> = raw.iter().map(|p| p / sum).collect();
                entropy(&row)
            } else {
                // no mass anywhere: maximally uncertain
                (s as f64).ln()
            }
        })
        .collect()
}

#[derive(Serialize)]
struct LatencyDoc {
    model_type: String,
    median_s: f64,
    p95_s: f64,
    min_s: f64,
    max_s: f64,
    repetitions: usize,
    warmup: usize,
    sequence_length: usize,
}

impl LatencyDoc {
    fn new(model_type: &str, report: &LatencyReport) -> Self {
        Self {
            model_type: model_type.to_string(),
            median_s: report.median_s,
            p95_s: report.p95_s,
            min_s: report.min_s,
            max_s: report.max_s,
            repetitions: report.repetitions,
            warmup: report.warmup,
            sequence_length: report.sequence_length,
        }
    }
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Telemetry CSV to validate and summarize.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct SummaryDoc {
    sessions: usize,
    records: usize,
    dimension: usize,
    feature_names: Vec<String>,
    labeled_records: usize,
    /// Per-state label counts; present only for fully labeled data with
    /// S >= 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    state_histogram: Option<Vec<u64>>,
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    let data = load_dataset(&args.input, settings.states())?;

    let labeled_records = data.records().filter(|r| r.qoe_score.is_some()).count();
    let state_histogram = if labeled_records == data.num_records() && settings.states() >= 2 {
        let mut hist = vec![0u64; settings.states()];
        for record in data.records() {
            let score = record.qoe_score.expect("all labeled");
            hist[discretize_qoe(score, settings.states())?] += 1;
        }
        Some(hist)
    } else {
        None
    };

    let summary = SummaryDoc {
        sessions: data.sessions.len(),
        records: data.num_records(),
        dimension: data.dim(),
        feature_names: data.feature_names.clone(),
        labeled_records,
        state_histogram,
    };
    write_json_pretty(&args.common.out.join("summary.json"), &summary)?;

    let mut settings = settings;
    settings.set_input_csv(args.input.clone());
    write_manifest(
        &args.common.out,
        "ingest",
        settings.seed(),
        settings.snapshot(),
        &["summary.json".to_string()],
    )?;
    println!(
        "ingested {} sessions ({} records, {} features) from {}",
        summary.sessions,
        summary.records,
        summary.dimension,
        args.input.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator spec JSON; defaults to the config file's `synth_spec`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Override the spec's steps per session.
    #[arg(long)]
    pub length: Option<usize>,
    /// Override the spec's session count.
    #[arg(long)]
    pub sessions: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut settings = Settings::resolve(&args.common, 0)?;
    let mut spec = match (&args.spec, settings.synth_spec()) {
        (Some(path), _) => read_spec_file(path)?,
        (None, Some(spec)) => spec.clone(),
        (None, None) => {
            return Err(CliError::config(
                "generate needs --spec or a config file with synth_spec",
            ))
        }
    };
    if let Some(length) = args.length {
        if length < 1 {
            return Err(CliError::config("length must be >= 1"));
        }
        spec.steps_per_session = length;
    }
    if let Some(sessions) = args.sessions {
        if sessions < 1 {
            return Err(CliError::config("sessions must be >= 1"));
        }
        spec.num_sessions = sessions;
    }

    prepare_out(&args.common.out)?;
    let data = qoeseq_core::synth::synthesize_dataset(&spec, settings.seed())?;
    write_dataset_csv(&args.common.out.join("synthetic.csv"), &data)?;

    settings.set_synth_spec(spec.clone());
    write_manifest(
        &args.common.out,
        "generate",
        settings.seed(),
        settings.snapshot(),
        &["synthetic.csv".to_string()],
    )?;
    println!(
        "generated {} sessions x {} steps ({} features, S={})",
        spec.num_sessions,
        spec.steps_per_session,
        spec.dim(),
        spec.num_states()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-vq

#[derive(Debug, Args)]
pub struct FitVqArgs {
    /// Training telemetry CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn fit_vq(args: &FitVqArgs) -> Result<(), CliError> {
    let mut settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    let data = load_dataset(&args.input, settings.states())?;
    let standardizer = fit_standardizer(&data)?;
    let standardized = apply_standardizer(&data, &standardizer)?;
    let points = feature_points(&standardized);
    let codebook = kmeans_fit(
        &points,
        settings.codebook_size(),
        settings.seed(),
        KMEANS_MAX_ITERS,
        KMEANS_TOL,
    )?;
    save_codebook(
        &args.common.out.join(CODEBOOK_FILE),
        &codebook,
        &standardizer,
        settings.seed(),
    )?;

    settings.set_input_csv(args.input.clone());
    write_manifest(
        &args.common.out,
        "fit-vq",
        settings.seed(),
        settings.snapshot(),
        &[CODEBOOK_FILE.to_string()],
    )?;
    println!(
        "fitted codebook: K={} D={} inertia={}",
        codebook.k(),
        codebook.dim(),
        codebook.inertia()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// encode

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Telemetry CSV to encode.
    #[arg(long)]
    pub input: PathBuf,
    /// Codebook artifact to encode with.
    #[arg(long)]
    pub codebook: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn encode(args: &EncodeArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    require_exists(&args.codebook)?;
    let (codebook, standardizer, _) = load_codebook::<f64>(&args.codebook)?;
    let data = load_dataset(&args.input, settings.states())?;
    if data.dim() != codebook.dim() {
        return Err(CliError::schema(format!(
            "input has {} features but the codebook expects {}",
            data.dim(),
            codebook.dim()
        )));
    }
    let standardized = apply_standardizer(&data, &standardizer)?;

    let labeled = standardized.num_records() > 0
        && standardized.records().all(|r| r.qoe_score.is_some());
    let states = if labeled {
        Some(truth_states(&standardized, settings.states())?)
    } else {
        None
    };
    let tokens = vq_encode_sessions(&codebook, &standardized)?;
    let series: Vec<TokenSeries> = standardized
        .sessions
        .iter()
        .enumerate()
        .map(|(i, session)| TokenSeries {
            session_id: session.session_id.clone(),
            tokens: tokens[i].clone(),
            states: states.as_ref().map(|s| s[i].clone()),
        })
        .collect();
    write_tokens(&args.common.out.join("tokens.csv"), &series)?;

    write_manifest(
        &args.common.out,
        "encode",
        settings.seed(),
        settings.snapshot(),
        &["tokens.csv".to_string()],
    )?;
    println!(
        "encoded {} sessions ({} tokens, K={}, labels: {})",
        series.len(),
        series.iter().map(|s| s.tokens.len()).sum::<usize>(),
        codebook.k(),
        if labeled { "yes" } else { "no" }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-hmm

#[derive(Debug, Args)]
pub struct FitHmmArgs {
    /// Labeled token CSV (needs the `state` column).
    #[arg(long)]
    pub tokens: PathBuf,
    /// Codebook the tokens came from; pins the alphabet size and is recorded
    /// in the model for mismatch detection at decode time.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn fit_hmm(args: &FitHmmArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    let series = read_tokens(&args.tokens)?;
    if series.iter().any(|s| s.states.is_none()) {
        return Err(CliError::schema(
            "token file has no state column; encode a labeled dataset first",
        ));
    }
    let states: Vec<Vec<usize>> = series
        .iter()
        .map(|s| s.states.clone().expect("checked above"))
        .collect();
    let tokens: Vec<Vec<usize>> = series.iter().map(|s| s.tokens.clone()).collect();
    let sequences = labeled_sequences(&states, &tokens)?;

    let (alphabet, codebook_ref) = match &args.codebook {
        Some(path) => {
            require_exists(path)?;
            let (codebook, _, _) = load_codebook::<f64>(path)?;
            (codebook.k(), Some(path.display().to_string()))
        }
        None => {
            let max_token = tokens.iter().flatten().copied().max().unwrap_or(0);
            (max_token + 1, None)
        }
    };
    let model: HmmParams = fit_supervised(
        &sequences,
        settings.states(),
        alphabet,
        settings.alpha(),
    )?;
    save_hmm(
        &args.common.out.join(MODEL_FILE),
        &model,
        settings.alpha(),
        codebook_ref.as_deref(),
    )?;

    write_manifest(
        &args.common.out,
        "fit-hmm",
        settings.seed(),
        settings.snapshot(),
        &[MODEL_FILE.to_string()],
    )?;
    println!(
        "fitted hmm: S={} V={} alpha={}",
        model.num_states(),
        model.alphabet_size(),
        settings.alpha()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// decode

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Token CSV to decode (labels optional and ignored).
    #[arg(long)]
    pub tokens: PathBuf,
    /// HMM artifact.
    #[arg(long)]
    pub model: PathBuf,
    /// Codebook to cross-check the model's alphabet against.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct DecodeSummary {
    session_id: String,
    /// Log joint probability of the decoded path; absent when no path can
    /// generate the sequence.
    log_prob: Option<f64>,
    zero_probability: bool,
}

pub fn decode(args: &DecodeArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    require_exists(&args.model)?;
    let loaded = load_hmm::<f64>(&args.model)?;
    if let Some(path) = &args.codebook {
        require_exists(path)?;
        let (codebook, _, _) = load_codebook::<f64>(path)?;
        if codebook.k() != loaded.params.alphabet_size() {
            return Err(CliError::schema(format!(
                "model alphabet V={} does not match codebook K={}",
                loaded.params.alphabet_size(),
                codebook.k()
            )));
        }
    }
    let series = read_tokens(&args.tokens)?;

    let mut decoded = Vec::with_capacity(series.len());
    let mut summaries = Vec::with_capacity(series.len());
    for s in &series {
        let result = viterbi_decode(&loaded.params, &s.tokens)?;
        summaries.push(DecodeSummary {
            session_id: s.session_id.clone(),
            log_prob: (!result.zero_probability).then_some(result.log_prob),
            zero_probability: result.zero_probability,
        });
        decoded.push((s.session_id.clone(), result.states));
    }
    write_decoded(&args.common.out.join("decoded.csv"), &decoded)?;
    write_json_pretty(&args.common.out.join("decode-summary.json"), &summaries)?;

    write_manifest(
        &args.common.out,
        "decode",
        settings.seed(),
        settings.snapshot(),
        &["decoded.csv".to_string(), "decode-summary.json".to_string()],
    )?;
    println!(
        "decoded {} sessions with S={} V={}",
        decoded.len(),
        loaded.params.num_states(),
        loaded.params.alphabet_size()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled token CSV (needs the `state` column for ground truth).
    #[arg(long)]
    pub tokens: PathBuf,
    /// Model artifact: `hmm` or `token_classifier`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common, 0)?;
    prepare_out(&args.common.out)?;
    let series = read_tokens(&args.tokens)?;
    if series.iter().any(|s| s.states.is_none()) {
        return Err(CliError::schema(
            "token file has no state column; evaluation needs ground truth",
        ));
    }
    let truths: Vec<Vec<usize>> = series
        .iter()
        .map(|s| s.states.clone().expect("checked above"))
        .collect();

    require_exists(&args.model)?;
    let model_type = peek_model_type(&args.model)?;
    let (num_states, predictions, entropies): (usize, Vec<Vec<usize>>, Vec<Vec<f64>>) =
        match model_type.as_str() {
            "hmm" => {
                let loaded = load_hmm::<f64>(&args.model)?;
                let mut predictions = Vec::with_capacity(series.len());
                let mut entropies = Vec::with_capacity(series.len());
                for s in &series {
                    predictions.push(viterbi_decode(&loaded.params, &s.tokens)?.states);
                    let posteriors = posterior_marginals(&loaded.params, &s.tokens)?;
                    entropies.push(posteriors.iter().map(|row| entropy(row)).collect());
                }
                (loaded.params.num_states(), predictions, entropies)
            }
            "token_classifier" => {
                let (model, _, _) = load_token_classifier::<f64>(&args.model)?;
                let mut predictions = Vec::with_capacity(series.len());
                let mut entropies = Vec::with_capacity(series.len());
                for s in &series {
                    predictions.push(token_classify(&model, &s.tokens)?);
                    entropies.push(classifier_entropies(&model, &s.tokens));
                }
                (model.num_states(), predictions, entropies)
            }
            other => {
                return Err(CliError::config(format!(
                    "evaluate supports hmm and token_classifier artifacts, found {other}"
                )))
            }
        };

    let (cm, report) = evaluate_predictions(&truths, &predictions, num_states)?;
    write_json_pretty(
        &args.common.out.join("metrics.json"),
        &MetricsDoc::from_report(&report, cm.total()),
    )?;
    write_confusion(&args.common.out.join("confusion.csv"), &cm)?;

    let plots_dir = args.common.out.join("plots");
    prepare_out(&plots_dir)?;
    let ids: Vec<String> = series.iter().map(|s| s.session_id.clone()).collect();
    let names = plot_file_names(&ids);
    let mut files = vec!["metrics.json".to_string(), "confusion.csv".to_string()];
    for (i, name) in names.iter().enumerate() {
        write_plot(
            &plots_dir.join(name),
            &truths[i],
            &predictions[i],
            &entropies[i],
        )?;
        files.push(format!("plots/{name}"));
    }

    write_manifest(
        &args.common.out,
        "evaluate",
        settings.seed(),
        settings.snapshot(),
        &files,
    )?;
    println!(
        "accuracy {:.4} macro-F1 {:.4} over {} timesteps",
        report.accuracy,
        report.macro_f1,
        cm.total()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model artifact: `hmm` or `token_classifier`.
    #[arg(long)]
    pub model: PathBuf,
    /// Length of the benchmark token sequence.
    #[arg(long)]
    pub length: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut settings = Settings::resolve(&args.common, 100)?;
    if let Some(length) = args.length {
        settings.set_length(length)?;
    }
    prepare_out(&args.common.out)?;
    require_exists(&args.model)?;

    let length = settings.length();
    let reps = settings.reps();
    let warmup = settings.warmup();
    let mut clock = SystemClock::new();
    let model_type = peek_model_type(&args.model)?;
    let report = match model_type.as_str() {
        "hmm" => {
            let loaded = load_hmm::<f64>(&args.model)?;
            // a sequence the model itself could produce
            let tokens = sample_sequence(&loaded.params, length, settings.seed())?.tokens;
            measure_latency(
                |t| viterbi_decode(&loaded.params, t).expect("sampled tokens are in range"),
                &tokens,
                reps,
                warmup,
                &mut clock,
            )?
        }
        "token_classifier" => {
            let (model, _, _) = load_token_classifier::<f64>(&args.model)?;
            let mut rng = ChaCha20Rng::seed_from_u64(settings.seed());
            let tokens: Vec<usize> = (0..length)
                .map(|_| rng.gen_range(0..model.alphabet_size()))
                .collect();
            measure_latency(
                |t| token_classify(&model, t).expect("tokens drawn within the alphabet"),
                &tokens,
                reps,
                warmup,
                &mut clock,
            )?
        }
        other => {
            return Err(CliError::config(format!(
                "bench supports hmm and token_classifier artifacts, found {other}"
            )))
        }
    };

    write_json_pretty(
        &args.common.out.join("latency.json"),
        &LatencyDoc::new(&model_type, &report),
    )?;
    write_manifest(
        &args.common.out,
        "bench",
        settings.seed(),
        settings.snapshot(),
        &["latency.json".to_string()],
    )?;
    println!(
        "median {:.6}s p95 {:.6}s (R={}, warmup={}, T={})",
        report.median_s, report.p95_s, report.repetitions, report.warmup, report.sequence_length
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Single labeled telemetry CSV to split and model.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Generator spec JSON to synthesize data from.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Fraction of sessions held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct SplitDoc {
    train_sessions: Vec<String>,
    test_sessions: Vec<String>,
}

fn session_ids(data: &Dataset) -> Vec<String> {
    data.sessions.iter().map(|s| s.session_id.clone()).collect()
}

pub fn pipeline(args: &PipelineArgs) -> Result<(), CliError> {
    let mut settings = Settings::resolve(&args.common, 0)?;
    if let Some(path) = &args.spec {
        settings.set_synth_spec(read_spec_file(path)?);
    }
    if let Some(path) = &args.input {
        settings.set_input_csv(path.clone());
    }
    if let Some(fraction) = args.test_fraction {
        settings.set_test_fraction(fraction)?;
    }
    prepare_out(&args.common.out)?;
    let out = &args.common.out;
    let seed = settings.seed();
    let mut files: Vec<String> = Vec::new();

    // -- data: synthesize or load, then split ------------------------------
    let (train_raw, test_raw, num_states) = if let Some(spec) = settings.synth_spec().cloned() {
        let spec_states = spec.num_states();
        if let Some(requested) = settings.explicit_states() {
            if requested != spec_states {
                return Err(CliError::config(format!(
                    "states={requested} does not match the generator spec's S={spec_states}"
                )));
            }
        }
        if spec_states < 2 {
            return Err(CliError::config(
                "pipeline needs a generator spec with at least 2 states",
            ));
        }
        let data = qoeseq_core::synth::synthesize_dataset(&spec, seed)?;
        write_dataset_csv(&out.join("synthetic.csv"), &data)?;
        files.push("synthetic.csv".to_string());
        let (train, test) = split_sessions(&data, settings.test_fraction(), seed)?;
        (train, test, spec_states)
    } else if let (Some(train_path), Some(test_path)) = (settings.train_csv(), settings.test_csv())
    {
        let s = settings.states();
        if s < 2 {
            return Err(CliError::config("pipeline needs states >= 2"));
        }
        let train = load_dataset(train_path, s)?;
        let test = load_dataset(test_path, s)?;
        if train.dim() != test.dim() {
            return Err(CliError::schema(format!(
                "train has {} features but test has {}",
                train.dim(),
                test.dim()
            )));
        }
        (train, test, s)
    } else if let Some(input) = settings.input_csv().cloned() {
        let s = settings.states();
        if s < 2 {
            return Err(CliError::config("pipeline needs states >= 2"));
        }
        let data = load_dataset(&input, s)?;
        let (train, test) = split_sessions(&data, settings.test_fraction(), seed)?;
        (train, test, s)
    } else {
        return Err(CliError::config(
            "pipeline needs a data source: synth_spec/--spec, --input, or train_csv + test_csv",
        ));
    };

    // split provenance, whenever this run produced the split itself
    if settings.train_csv().is_none() {
        write_json_pretty(
            &out.join("split.json"),
            &SplitDoc {
                train_sessions: session_ids(&train_raw),
                test_sessions: session_ids(&test_raw),
            },
        )?;
        files.push("split.json".to_string());
    }

    let truth_train = truth_states(&train_raw, num_states)?;
    let truth_test = truth_states(&test_raw, num_states)?;

    // -- standardize + vector quantize -------------------------------------
    let standardizer: StandardizationParams = fit_standardizer(&train_raw)?;
    let train = apply_standardizer(&train_raw, &standardizer)?;
    let test = apply_standardizer(&test_raw, &standardizer)?;
    let train_points = feature_points(&train);

    let codebook = kmeans_fit(
        &train_points,
        settings.codebook_size(),
        seed,
        KMEANS_MAX_ITERS,
        KMEANS_TOL,
    )?;
    save_codebook(&out.join(CODEBOOK_FILE), &codebook, &standardizer, seed)?;
    files.push(CODEBOOK_FILE.to_string());

    let vq_train = vq_encode_sessions(&codebook, &train)?;
    let vq_test = vq_encode_sessions(&codebook, &test)?;
    for (name, data, tokens, states) in [
        ("tokens-train.csv", &train, &vq_train, &truth_train),
        ("tokens-test.csv", &test, &vq_test, &truth_test),
    ] {
        let series: Vec<TokenSeries> = data
            .sessions
            .iter()
            .enumerate()
            .map(|(i, session)| TokenSeries {
                session_id: session.session_id.clone(),
                tokens: tokens[i].clone(),
                states: Some(states[i].clone()),
            })
            .collect();
        write_tokens(&out.join(name), &series)?;
        files.push(name.to_string());
    }

    // -- models -------------------------------------------------------------
    let alpha = settings.alpha();
    let train_sequences = labeled_sequences(&truth_train, &vq_train)?;

    let vq_hmm: HmmParams = fit_supervised(
        &train_sequences,
        num_states,
        codebook.k(),
        alpha,
    )?;
    save_hmm(&out.join("hmm.json"), &vq_hmm, alpha, Some(CODEBOOK_FILE))?;
    files.push("hmm.json".to_string());

    let scheme = binning_fit(&train_points, settings.bins())?;
    let bin_encode = |data: &Dataset| -> Result<Vec<Vec<usize>>, CliError> {
        data.sessions
            .iter()
            .map(|session| {
                session
                    .records
                    .iter()
                    .map(|r| Ok(binning_encode(&scheme, &r.features)?))
                    .collect()
            })
            .collect()
    };
    let bin_train = bin_encode(&train)?;
    let bin_test = bin_encode(&test)?;
    let binned_hmm: HmmParams = fit_supervised(
        &labeled_sequences(&truth_train, &bin_train)?,
        num_states,
        scheme.alphabet_size(),
        alpha,
    )?;
    save_hmm(&out.join("binned-hmm.json"), &binned_hmm, alpha, None)?;
    files.push("binned-hmm.json".to_string());

    let classifier: TokenClassifier =
        token_classifier_fit(&train_sequences, num_states, codebook.k(), alpha)?;
    save_token_classifier(
        &out.join("token-classifier.json"),
        &classifier,
        alpha,
        Some(CODEBOOK_FILE),
    )?;
    files.push("token-classifier.json".to_string());

    let gnb = gnb_fit(&train_raw)?;
    save_gnb(&out.join("gnb.json"), &gnb)?;
    files.push("gnb.json".to_string());

    // -- test-set predictions ------------------------------------------------
    let decode_all = |model: &HmmParams, tokens: &[Vec<usize>]| -> Result<Vec<Vec<usize>>, CliError> {
        tokens
            .iter()
            .map(|t| Ok(viterbi_decode(model, t)?.states))
            .collect()
    };
    let vq_predictions = decode_all(&vq_hmm, &vq_test)?;
    let bin_predictions = decode_all(&binned_hmm, &bin_test)?;
    let clf_predictions: Vec<Vec<usize>> = vq_test
        .iter()
        .map(|t| Ok::<_, CliError>(token_classify(&classifier, t)?))
        .collect::<Result<_, _>>()?;
    let gnb_predictions: Vec<Vec<usize>> = test_raw
        .sessions
        .iter()
        .map(|session| Ok::<_, CliError>(gnb_classify(&gnb, session)?))
        .collect::<Result<_, _>>()?;

    // -- metrics -------------------------------------------------------------
    let evaluated: Vec<(&str, &str, Vec<Vec<usize>>)> = vec![
        ("vq-hmm", "metrics-vq-hmm.json", vq_predictions.clone()),
        ("binned-hmm", "metrics-binned-hmm.json", bin_predictions),
        (
            "classifier-tokens",
            "metrics-classifier-tokens.json",
            clf_predictions,
        ),
        (
            "classifier-features",
            "metrics-classifier-features.json",
            gnb_predictions,
        ),
    ];
    let mut reports: Vec<(&str, MetricsReport)> = Vec::new();
    for (model_name, file_name, predictions) in &evaluated {
        let (cm, report) = evaluate_predictions(&truth_test, predictions, num_states)?;
        write_json_pretty(
            &out.join(file_name),
            &MetricsDoc::from_report(&report, cm.total()),
        )?;
        files.push(file_name.to_string());
        if *model_name == "vq-hmm" {
            write_confusion(&out.join("confusion.csv"), &cm)?;
            files.push("confusion.csv".to_string());
        }
        reports.push((model_name, report));
    }

    // -- latency (skipped at reps=0 so outputs stay byte-reproducible) -------
    let latencies: Vec<Option<LatencyReport>> = if settings.reps() >= 1 {
        let reps = settings.reps();
        let warmup = settings.warmup();
        // longest test session as the representative sequence
        let idx = (0..vq_test.len())
            .max_by_key(|&i| vq_test[i].len())
            .expect("split guarantees a nonempty test side");
        let vq_tokens = &vq_test[idx];
        let bin_tokens = &bin_test[idx];
        let gnb_session = &test_raw.sessions[idx];
        let run = |f: &mut dyn FnMut(&[usize]) -> usize,
                       tokens: &[usize]|
         -> Result<LatencyReport, CliError> {
            let mut clock = SystemClock::new();
            Ok(measure_latency(f, tokens, reps, warmup, &mut clock)?)
        };
        vec![
            Some(run(
                &mut |t| viterbi_decode(&vq_hmm, t).expect("encoded within K").states.len(),
                vq_tokens,
            )?),
            Some(run(
                &mut |t| {
                    viterbi_decode(&binned_hmm, t)
                        .expect("encoded within the binning alphabet")
                        .states
                        .len()
                },
                bin_tokens,
            )?),
            Some(run(
                &mut |t| token_classify(&classifier, t).expect("encoded within K").len(),
                vq_tokens,
            )?),
            // the feature classifier has no token input; it re-classifies the
            // same session's feature vectors each call
            Some(run(
                &mut |_| gnb_classify(&gnb, gnb_session).expect("dimensions fitted").len(),
                vq_tokens,
            )?),
        ]
    } else {
        vec![None, None, None, None]
    };

    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .zip(&latencies)
        .map(|((name, report), latency)| ComparisonRow::measured(*name, report, latency.as_ref()))
        .collect();
    rows.extend(paper_reference_rows());
    write_comparison(&out.join("comparison.csv"), &rows)?;
    files.push("comparison.csv".to_string());

    // -- plot data: vq-hmm decoded paths with posterior entropy --------------
    let plots_dir = out.join("plots");
    prepare_out(&plots_dir)?;
    let ids = session_ids(&test);
    let names = plot_file_names(&ids);
    for (i, name) in names.iter().enumerate() {
        let posteriors = posterior_marginals(&vq_hmm, &vq_test[i])?;
        let entropies: Vec<f64> = posteriors.iter().map(|row| entropy(row)).collect();
        write_plot(
            &plots_dir.join(name),
            &truth_test[i],
            &vq_predictions[i],
            &entropies,
        )?;
        files.push(format!("plots/{name}"));
    }

    write_manifest(out, "pipeline", seed, settings.snapshot(), &files)?;
    for (name, report) in &reports {
        println!(
            "{name}: accuracy {:.4} macro-F1 {:.4}",
            report.accuracy, report.macro_f1
        );
    }
    println!(
        "wrote {} files to {}",
        files.len() + 1, // plus the manifest
        out.display()
    );
    Ok(())
}
