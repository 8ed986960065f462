//! Versioned JSON artifacts for every fitted object the pipeline persists:
//! codebooks (with their standardizer), HMM parameters, and the baseline
//! classifiers. Floats serialize with shortest round-trip formatting, so a
//! save/load cycle is value-exact; loaders re-validate all invariants and
//! reject anything out of contract.

use crate::baselines::{GaussianNB, TokenClassifier};
use crate::hmm::HmmParams;
use crate::ingest::StandardizationParams;
use crate::num::Real;
use crate::vq::Codebook;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Current on-disk schema version for all artifact kinds.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
}

fn mismatch(msg: impl Into<String>) -> ArtifactError {
    ArtifactError::SchemaMismatch(msg.into())
}

fn check_version(found: u32) -> Result<(), ArtifactError> {
    if found != ARTIFACT_VERSION {
        return Err(mismatch(format!(
            "artifact version {found} is not supported (expected {ARTIFACT_VERSION})"
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
struct StandardizerDoc<R: Real> {
    means: Vec<R>,
    std_devs: Vec<R>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "")]
struct CodebookDoc<R: Real> {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    centroids: Vec<Vec<R>>,
    inertia: R,
    seed: u64,
    standardizer: StandardizerDoc<R>,
}

/// Writes a codebook artifact: centroids, inertia, the fitting seed, and the
/// standardizer the encoder must apply before quantizing.
pub fn save_codebook<R: Real>(
    path: &Path,
    codebook: &Codebook<R>,
    standardizer: &StandardizationParams<R>,
    seed: u64,
) -> Result<(), ArtifactError> {
    let doc = CodebookDoc {
        version: ARTIFACT_VERSION,
        k: codebook.k(),
        d: codebook.dim(),
        centroids: codebook.centroids().to_vec(),
        inertia: codebook.inertia(),
        seed,
        standardizer: StandardizerDoc {
            means: standardizer.means.clone(),
            std_devs: standardizer.std_devs.clone(),
        },
    };
    write_json(path, &doc)
}

/// Loads and re-validates a codebook artifact, returning the codebook, its
/// standardizer, and the seed it was fitted with.
pub fn load_codebook<R: Real>(
    path: &Path,
) -> Result<(Codebook<R>, StandardizationParams<R>, u64), ArtifactError> {
    let doc: CodebookDoc<R> = read_json(path)?;
    check_version(doc.version)?;
    if doc.centroids.len() != doc.k {
        return Err(mismatch(format!(
            "K={} but {} centroids present",
            doc.k,
            doc.centroids.len()
        )));
    }
    if doc.centroids.iter().any(|c| c.len() != doc.d) {
        return Err(mismatch(format!("centroid dimension differs from D={}", doc.d)));
    }
    if doc.standardizer.means.len() != doc.d || doc.standardizer.std_devs.len() != doc.d {
        return Err(mismatch("standardizer dimension differs from D"));
    }
    if doc
        .standardizer
        .means
        .iter()
        .chain(&doc.standardizer.std_devs)
        .any(|x| !x.is_finite())
        || doc.standardizer.std_devs.iter().any(|&s| s < R::zero())
    {
        return Err(mismatch("standardizer entries must be finite with std_devs >= 0"));
    }
    let codebook = Codebook::from_parts(doc.centroids, doc.inertia)
        .map_err(|e| mismatch(e.to_string()))?;
    let standardizer = StandardizationParams {
        means: doc.standardizer.means,
        std_devs: doc.standardizer.std_devs,
    };
    Ok((codebook, standardizer, doc.seed))
}

/// The single model container:`model_type` discriminates the three families
/// sharing the versioned JSON envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model_type", bound = "")]
pub enum ModelDoc<R: Real> {
    #[serde(rename = "hmm")]
    Hmm {
        version: u32,
        #[serde(rename = "S")]
        s: usize,
        #[serde(rename = "V")]
        v: usize,
        pi: Vec<R>,
        #[serde(rename = "A")]
        a: Vec<Vec<R>>,
        #[serde(rename = "B")]
        b: Vec<Vec<R>>,
        alpha: f64,
        codebook_ref: Option<String>,
    },
    #[serde(rename = "token_classifier")]
    TokenClassifier {
        version: u32,
        #[serde(rename = "S")]
        s: usize,
        #[serde(rename = "V")]
        v: usize,
        priors: Vec<R>,
        likelihoods: Vec<Vec<R>>,
        alpha: f64,
        codebook_ref: Option<String>,
    },
    #[serde(rename = "gaussian_nb")]
    GaussianNb {
        version: u32,
        #[serde(rename = "S")]
        s: usize,
        #[serde(rename = "D")]
        d: usize,
        priors: Vec<R>,
        means: Vec<Vec<R>>,
        variances: Vec<Vec<R>>,
    },
}

impl<R: Real> ModelDoc<R> {
    pub fn model_type(&self) -> &'static str {
        match self {
            ModelDoc::Hmm { .. } => "hmm",
            ModelDoc::TokenClassifier { .. } => "token_classifier",
            ModelDoc::GaussianNb { .. } => "gaussian_nb",
        }
    }
}

/// Writes an HMM artifact, optionally naming the codebook it was trained
/// against so decoders can detect mismatched pairings.
pub fn save_hmm<R: Real>(
    path: &Path,
    model: &HmmParams<R>,
    alpha: f64,
    codebook_ref: Option<&str>,
) -> Result<(), ArtifactError> {
    let doc = ModelDoc::Hmm {
        version: ARTIFACT_VERSION,
        s: model.num_states(),
        v: model.alphabet_size(),
        pi: model.initial().to_vec(),
        a: model.transitions().to_vec(),
        b: model.emissions().to_vec(),
        alpha,
        codebook_ref: codebook_ref.map(str::to_string),
    };
    write_json(path, &doc)
}

/// A loaded HMM artifact: re-validated parameters plus training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedHmm<R: Real> {
    pub params: HmmParams<R>,
    pub alpha: f64,
    pub codebook_ref: Option<String>,
}

/// Loads an HMM artifact, rejecting other model types and any parameter set
/// violating the stochasticity invariants.
pub fn load_hmm<R: Real>(path: &Path) -> Result<LoadedHmm<R>, ArtifactError> {
    match read_json::<ModelDoc<R>>(path)? {
        ModelDoc::Hmm {
            version,
            s,
            v,
            pi,
            a,
            b,
            alpha,
            codebook_ref,
        } => {
            check_version(version)?;
            if pi.len() != s {
                return Err(mismatch(format!("S={s} but pi has {} entries", pi.len())));
            }
            if b.first().map_or(0, Vec::len) != v {
                return Err(mismatch(format!("V={v} but B rows disagree")));
            }
            let params = HmmParams::new(pi, a, b).map_err(|e| mismatch(e.to_string()))?;
            Ok(LoadedHmm {
                params,
                alpha,
                codebook_ref,
            })
        }
        other => Err(mismatch(format!(
            "expected model_type hmm, found {}",
            other.model_type()
        ))),
    }
}

pub fn save_token_classifier<R: Real>(
    path: &Path,
    model: &TokenClassifier<R>,
    alpha: f64,
    codebook_ref: Option<&str>,
) -> Result<(), ArtifactError> {
    let doc = ModelDoc::TokenClassifier {
        version: ARTIFACT_VERSION,
        s: model.num_states(),
        v: model.alphabet_size(),
        priors: model.priors().to_vec(),
        likelihoods: model.likelihoods().to_vec(),
        alpha,
        codebook_ref: codebook_ref.map(str::to_string),
    };
    write_json(path, &doc)
}

pub fn load_token_classifier<R: Real>(
    path: &Path,
) -> Result<(TokenClassifier<R>, f64, Option<String>), ArtifactError> {
    match read_json::<ModelDoc<R>>(path)? {
        ModelDoc::TokenClassifier {
            version,
            s,
            v,
            priors,
            likelihoods,
            alpha,
            codebook_ref,
        } => {
            check_version(version)?;
            if priors.len() != s || likelihoods.first().map_or(0, Vec::len) != v {
                return Err(mismatch("S/V disagree with stored rows"));
            }
            let model = TokenClassifier::from_parts(priors, likelihoods)
                .map_err(|e| mismatch(e.to_string()))?;
            Ok((model, alpha, codebook_ref))
        }
        other => Err(mismatch(format!(
            "expected model_type token_classifier, found {}",
            other.model_type()
        ))),
    }
}

pub fn save_gnb<R: Real>(path: &Path, model: &GaussianNB<R>) -> Result<(), ArtifactError> {
    let doc = ModelDoc::GaussianNb {
        version: ARTIFACT_VERSION,
        s: model.num_states(),
        d: model.dim(),
        priors: model.priors().to_vec(),
        means: model.means().to_vec(),
        variances: model.variances().to_vec(),
    };
    write_json(path, &doc)
}

pub fn load_gnb<R: Real>(path: &Path) -> Result<GaussianNB<R>, ArtifactError> {
    match read_json::<ModelDoc<R>>(path)? {
        ModelDoc::GaussianNb {
            version,
            s,
            d,
            priors,
            means,
            variances,
        } => {
            check_version(version)?;
            if priors.len() != s || means.first().map_or(0, Vec::len) != d {
                return Err(mismatch("S/D disagree with stored rows"));
            }
            GaussianNB::from_parts(priors, means, variances).map_err(|e| mismatch(e.to_string()))
        }
        other => Err(mismatch(format!(
            "expected model_type gaussian_nb, found {}",
            other.model_type()
        ))),
    }
}

/// Reads only the `model_type` discriminator of a model artifact.
pub fn peek_model_type(path: &Path) -> Result<String, ArtifactError> {
    #[derive(Deserialize)]
    struct Probe {
        model_type: String,
    }
    let probe: Probe = read_json(path)?;
    Ok(probe.model_type)
}
