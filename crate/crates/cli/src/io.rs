//! File formats owned by the CLI layer: the token CSV that carries encoded
//! sequences between commands, decoded-path CSVs, metric reports, and the
//! comparison/plot outputs. Datasets and model artifacts use the formats
//! defined in the core crate.

use crate::error::CliError;
use qoeseq_core::eval::{ComparisonRow, ConfusionMatrix, MetricsReport};
use serde::Serialize;
use std::collections::HashMap;
use std::path::Path;

/// One session's worth of encoded tokens, with ground-truth states when the
/// source data was labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeries {
    pub session_id: String,
    pub tokens: Vec<usize>,
    pub states: Option<Vec<usize>>,
}

/// Writes `session_id,t,token[,state]` rows; the `state` column appears only
/// when every series carries labels.
pub fn write_tokens(path: &Path, series: &[TokenSeries]) -> Result<(), CliError> {
    let labeled = !series.is_empty() && series.iter().all(|s| s.states.is_some());
    let mut writer = csv::Writer::from_path(path)?;
    if labeled {
        writer.write_record(["session_id", "t", "token", "state"])?;
    } else {
        writer.write_record(["session_id", "t", "token"])?;
    }
    for s in series {
        for (t, &token) in s.tokens.iter().enumerate() {
            if labeled {
                let state = s.states.as_ref().expect("labeled checked above")[t];
                writer.write_record([
                    s.session_id.as_str(),
                    &t.to_string(),
                    &token.to_string(),
                    &state.to_string(),
                ])?;
            } else {
                writer.write_record([s.session_id.as_str(), &t.to_string(), &token.to_string()])?;
            }
        }
    }
    writer.flush().map_err(|e| CliError::schema(e.to_string()))?;
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(
    raw: &str,
    column: &str,
    line: usize,
) -> Result<T, CliError> {
    raw.parse().map_err(|_| {
        CliError::schema(format!(
            "line {line}: column {column} holds {raw:?}, expected an unsigned integer"
        ))
    })
}

/// Reads a token CSV back, re-validating the per-session timestep discipline
/// (consecutive `t` from 0, no duplicates or gaps). Sessions come back in
/// first-appearance order.
pub fn read_tokens(path: &Path) -> Result<Vec<TokenSeries>, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let session_idx = idx("session_id")
        .ok_or_else(|| CliError::schema("token file is missing column session_id"))?;
    let t_idx = idx("t").ok_or_else(|| CliError::schema("token file is missing column t"))?;
    let token_idx =
        idx("token").ok_or_else(|| CliError::schema("token file is missing column token"))?;
    let state_idx = idx("state");

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(usize, usize, Option<usize>)>> = HashMap::new();
    for (row_number, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_number + 2; // one header line, 1-based
        let session_id = record
            .get(session_idx)
            .ok_or_else(|| CliError::schema(format!("line {line}: short row")))?
            .to_string();
        let t: usize = parse_cell(record.get(t_idx).unwrap_or(""), "t", line)?;
        let token: usize = parse_cell(record.get(token_idx).unwrap_or(""), "token", line)?;
        let state = match state_idx {
            Some(i) => Some(parse_cell(record.get(i).unwrap_or(""), "state", line)?),
            None => None,
        };
        if !grouped.contains_key(&session_id) {
            order.push(session_id.clone());
        }
        grouped.entry(session_id).or_default().push((t, token, state));
    }
    if order.is_empty() {
        return Err(CliError::schema(format!(
            "{} holds no token rows",
            path.display()
        )));
    }

    let mut out = Vec::with_capacity(order.len());
    for session_id in order {
        let mut rows = grouped.remove(&session_id).expect("grouped by construction");
        rows.sort_by_key(|&(t, _, _)| t);
        let mut tokens = Vec::with_capacity(rows.len());
        let mut states = state_idx.map(|_| Vec::with_capacity(rows.len()));
        for (expected, (t, token, state)) in rows.into_iter().enumerate() {
            if t != expected {
                let what = if t < expected { "duplicate" } else { "gap at" };
                return Err(CliError::schema(format!(
                    "session {session_id}: {what} timestep {t}"
                )));
            }
            tokens.push(token);
            if let Some(states) = states.as_mut() {
                states.push(state.expect("state column present for every row"));
            }
        }
        out.push(TokenSeries {
            session_id,
            tokens,
            states,
        });
    }
    Ok(out)
}

/// Writes `session_id,t,predicted_state` rows for decoded paths.
pub fn write_decoded(path: &Path, decoded: &[(String, Vec<usize>)]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["session_id", "t", "predicted_state"])?;
    for (session_id, states) in decoded {
        for (t, &state) in states.iter().enumerate() {
            writer.write_record([session_id.as_str(), &t.to_string(), &state.to_string()])?;
        }
    }
    writer.flush().map_err(|e| CliError::schema(e.to_string()))?;
    Ok(())
}

/// JSON shape for metrics reports; mirrors [`MetricsReport`] with explicit
/// per-class state indices.
#[derive(Debug, Serialize)]
pub struct MetricsDoc {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total_timesteps: u64,
    pub per_class: Vec<ClassDoc>,
}

#[derive(Debug, Serialize)]
pub struct ClassDoc {
    pub state: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl MetricsDoc {
    pub fn from_report(report: &MetricsReport, total: u64) -> Self {
        Self {
            accuracy: report.accuracy,
            macro_precision: report.macro_precision,
            macro_recall: report.macro_recall,
            macro_f1: report.macro_f1,
            total_timesteps: total,
            per_class: report
                .per_class
                .iter()
                .zip(&report.support)
                .enumerate()
                .map(|(state, (c, &support))| ClassDoc {
                    state,
                    precision: c.precision,
                    recall: c.recall,
                    f1: c.f1,
                    support,
                })
                .collect(),
        }
    }
}

/// Writes a confusion matrix as `true_state,pred_0,…,pred_{S-1}` rows.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> Result<(), CliError> {
    let s = cm.num_states();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["true_state".to_string()];
    header.extend((0..s).map(|j| format!("pred_{j}")));
    writer.write_record(&header)?;
    for (i, row) in cm.counts().iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(u64::to_string));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| CliError::schema(e.to_string()))?;
    Ok(())
}

fn float_cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the model-comparison table:
/// `model,accuracy,macro_f1,median_latency_s,p95_latency_s,source`.
/// Empty cells mean unmeasured (or unreported by the cited source).
pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "model",
        "accuracy",
        "macro_f1",
        "median_latency_s",
        "p95_latency_s",
        "source",
    ])?;
    for row in rows {
        writer.write_record([
            row.model.as_str(),
            &float_cell(row.accuracy),
            &float_cell(row.macro_f1),
            &float_cell(row.median_latency_s),
            &float_cell(row.p95_latency_s),
            row.source.as_str(),
        ])?;
    }
    writer.flush().map_err(|e| CliError::schema(e.to_string()))?;
    Ok(())
}

/// One plot row per timestep: the true state, the decoded state, and the
/// entropy (nats) of the posterior state distribution at that step.
pub fn write_plot(
    path: &Path,
    truth: &[usize],
    predicted: &[usize],
    entropies: &[f64],
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "true_state", "predicted_state", "posterior_entropy"])?;
    for (t, ((&tr, &pr), &h)) in truth.iter().zip(predicted).zip(entropies).enumerate() {
        writer.write_record([
            t.to_string(),
            tr.to_string(),
            pr.to_string(),
            h.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| CliError::schema(e.to_string()))?;
    Ok(())
}

/// Turns a session id into a safe file stem, deduplicating collisions with a
/// numeric suffix.
pub fn plot_file_names(session_ids: &[String]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    session_ids
        .iter()
        .map(|id| {
            let stem: String = id
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let count = seen.entry(stem.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                format!("{stem}.csv")
            } else {
                format!("{stem}-{}.csv", *count - 1)
            }
        })
        .collect()
}
