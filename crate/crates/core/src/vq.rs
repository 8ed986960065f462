//! Vector quantization: a k-means codebook turning feature vectors into
//! discrete tokens, plus the per-feature scalar-binning discretizer used as
//! the degraded baseline.
//!
//! Both encoders break distance/bin ties by lowest index, so encoding is a
//! total deterministic function.

use crate::num::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VqError {
    #[error("TooFewDistinctPoints: {distinct} distinct points for K={k}")]
    TooFewDistinctPoints { distinct: usize, k: usize },
    #[error("NonFiniteInput: point {index} contains a NaN or infinity")]
    NonFiniteInput { index: usize },
    #[error("DimensionMismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("EmptyInput: no points supplied")]
    EmptyInput,
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
    #[error("AlphabetOverflow: {bins}^{dim} exceeds the addressable token range")]
    AlphabetOverflow { bins: usize, dim: usize },
}

/// A fitted k-means codebook: K pairwise-distinct centroids of dimension D,
/// with the final inertia (total within-cluster squared distance) and the
/// per-iteration inertia trace from fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<R: Real> {
    centroids: Vec<Vec<R>>,
    inertia: R,
    inertia_trace: Vec<R>,
}

impl<R: Real> Codebook<R> {
    /// Rebuilds a codebook from stored centroids and inertia (loader path).
    pub fn from_parts(centroids: Vec<Vec<R>>, inertia: R) -> Result<Self, VqError> {
        if centroids.is_empty() {
            return Err(VqError::EmptyInput);
        }
        let dim = centroids[0].len();
        if dim == 0 {
            return Err(VqError::InvalidParams("centroids have zero dimension".into()));
        }
        for (index, c) in centroids.iter().enumerate() {
            if c.len() != dim {
                return Err(VqError::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(VqError::NonFiniteInput { index });
            }
        }
        if !(inertia.is_finite() && inertia >= R::zero()) {
            return Err(VqError::InvalidParams("inertia must be finite and >= 0".into()));
        }
        Ok(Self {
            centroids,
            inertia,
            inertia_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<R>] {
        &self.centroids
    }

    pub fn inertia(&self) -> R {
        self.inertia
    }

    /// Inertia measured at each Lloyd iteration (after assignment and
    /// empty-cluster repair), ending with the converged value. Empty on
    /// codebooks rebuilt from serialized parts.
    pub fn inertia_trace(&self) -> &[R] {
        &self.inertia_trace
    }
}

fn squared_distance<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter()
        .zip(b)
        .fold(R::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn check_points<R: Real>(points: &[Vec<R>]) -> Result<usize, VqError> {
    let first = points.first().ok_or(VqError::EmptyInput)?;
    let dim = first.len();
    if dim == 0 {
        return Err(VqError::InvalidParams("points have zero dimension".into()));
    }
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(VqError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(VqError::NonFiniteInput { index });
        }
    }
    Ok(dim)
}

fn count_distinct<R: Real>(points: &[Vec<R>]) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(points.len());
    for p in points {
        seen.insert(p.iter().map(|x| x.to_f64_lossy().to_bits()).collect());
    }
    seen.len()
}

/// Nearest centroid of `x` by squared Euclidean distance, lowest index on
/// ties. Internal unchecked core shared by encode and fitting.
fn nearest<R: Real>(centroids: &[Vec<R>], x: &[R]) -> (usize, R) {
    let mut best_idx = 0;
    let mut best = squared_distance(&centroids[0], x);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(c, x);
        if d < best {
            best = d;
            best_idx = i;
        }
    }
    (best_idx, best)
}

/// k-means++ seeding: first centroid uniform, subsequent centroids sampled
/// with probability proportional to squared distance from the chosen set.
fn kmeanspp_init<R: Real>(points: &[Vec<R>], k: usize, rng: &mut impl Rng) -> Vec<Vec<R>> {
    let n = points.len();
    let mut centroids: Vec<Vec<R>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());

    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(&centroids[0], p).to_f64_lossy())
        .collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let threshold = rng.gen::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                cumulative += w;
                if cumulative >= threshold {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                d2.iter()
                    .rposition(|&w| w > 0.0)
                    .expect("total > 0 implies a positive weight")
            })
        } else {
            // all remaining points coincide with chosen centroids; caller's
            // distinct-count precondition makes this unreachable, but stay total
            0
        };
        centroids.push(points[chosen].clone());
        for (w, p) in d2.iter_mut().zip(points) {
            let d = squared_distance(centroids.last().expect("just pushed"), p).to_f64_lossy();
            if d < *w {
                *w = d;
            }
        }
    }
    centroids
}

struct Assignment<R: Real> {
    labels: Vec<usize>,
    d2: Vec<R>,
    counts: Vec<usize>,
}

fn assign_all<R: Real>(points: &[Vec<R>], centroids: &[Vec<R>]) -> Assignment<R> {
    let mut labels = Vec::with_capacity(points.len());
    let mut d2 = Vec::with_capacity(points.len());
    let mut counts = vec![0usize; centroids.len()];
    for p in points {
        let (idx, dist) = nearest(centroids, p);
        labels.push(idx);
        d2.push(dist);
        counts[idx] += 1;
    }
    Assignment { labels, d2, counts }
}

/// Reseeds each empty cluster at the point currently farthest from its
/// assigned centroid (lowest point index on ties), preferring points whose
/// cluster keeps at least one other member. Returns whether anything moved.
fn repair_empty<R: Real>(
    points: &[Vec<R>],
    centroids: &mut [Vec<R>],
    assignment: &mut Assignment<R>,
) -> bool {
    let mut repaired = false;
    for _ in 0..points.len() {
        let Some(empty) = assignment.counts.iter().position(|&c| c == 0) else {
            break;
        };
        let mut candidate: Option<(usize, R)> = None;
        for (i, &dist) in assignment.d2.iter().enumerate() {
            if dist <= R::zero() || assignment.counts[assignment.labels[i]] < 2 {
                continue;
            }
            if candidate.is_none_or(|(_, best)| dist > best) {
                candidate = Some((i, dist));
            }
        }
        if candidate.is_none() {
            // fall back to any displaced point, even from a singleton cluster
            for (i, &dist) in assignment.d2.iter().enumerate() {
                if dist > R::zero() && candidate.is_none_or(|(_, best)| dist > best) {
                    candidate = Some((i, dist));
                }
            }
        }
        let Some((point_idx, _)) = candidate else {
            break; // every point sits on a centroid: nothing left to move
        };
        let old = assignment.labels[point_idx];
        assignment.counts[old] -= 1;
        assignment.counts[empty] += 1;
        assignment.labels[point_idx] = empty;
        assignment.d2[point_idx] = R::zero();
        centroids[empty] = points[point_idx].clone();
        repaired = true;
    }
    repaired
}

/// Fits a K-centroid codebook with k-means++ seeding and Lloyd iterations,
/// stopping when the maximum centroid shift drops to `tol` (Euclidean) or
/// after `max_iters` rounds. Deterministic given `seed`.
pub fn kmeans_fit<R: Real>(
    points: &[Vec<R>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Codebook<R>, VqError> {
    check_points(points)?;
    if k == 0 {
        return Err(VqError::InvalidParams("K must be >= 1".into()));
    }
    if max_iters == 0 {
        return Err(VqError::InvalidParams("max_iters must be >= 1".into()));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(VqError::InvalidParams(format!("tol {tol} must be >= 0")));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(VqError::TooFewDistinctPoints { distinct, k });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(points, k, &mut rng);
    let mut trace: Vec<R> = Vec::new();
    let tol = R::cast(tol);

    for _ in 0..max_iters {
        let mut assignment = assign_all(points, &centroids);
        let repaired = repair_empty(points, &mut centroids, &mut assignment);
        trace.push(assignment.d2.iter().copied().fold(R::zero(), |a, x| a + x));

        let mut shift = R::zero();
        let dim = centroids[0].len();
        for (j, centroid) in centroids.iter_mut().enumerate() {
            let mut mean = vec![R::zero(); dim];
            for (p, &label) in points.iter().zip(&assignment.labels) {
                if label == j {
                    for (m, &x) in mean.iter_mut().zip(p) {
                        *m = *m + x;
                    }
                }
            }
            let count = R::cast_usize(assignment.counts[j]);
            for m in &mut mean {
                *m = *m / count;
            }
            let moved = squared_distance(centroid, &mean).sqrt();
            if moved > shift {
                shift = moved;
            }
            *centroid = mean;
        }
        if !repaired && shift <= tol {
            break;
        }
    }

    // converged centroids: measure final inertia, repairing any cluster left
    // empty (or duplicated) by the last update step
    let mut assignment = assign_all(points, &centroids);
    repair_empty(points, &mut centroids, &mut assignment);
    let inertia = assignment.d2.iter().copied().fold(R::zero(), |a, x| a + x);
    trace.push(inertia);

    Ok(Codebook {
        centroids,
        inertia,
        inertia_trace: trace,
    })
}

/// Encodes `x` as the index of its nearest centroid.
pub fn vq_encode<R: Real>(codebook: &Codebook<R>, x: &[R]) -> Result<usize, VqError> {
    if x.len() != codebook.dim() {
        return Err(VqError::DimensionMismatch {
            expected: codebook.dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VqError::NonFiniteInput { index: 0 });
    }
    Ok(nearest(&codebook.centroids, x).0)
}

/// Mean squared distance from each point to its nearest centroid.
pub fn quantization_error<R: Real>(
    codebook: &Codebook<R>,
    points: &[Vec<R>],
) -> Result<R, VqError> {
    let dim = check_points(points)?;
    if dim != codebook.dim() {
        return Err(VqError::DimensionMismatch {
            expected: codebook.dim(),
            found: dim,
        });
    }
    let total = points
        .iter()
        .fold(R::zero(), |acc, p| acc + nearest(&codebook.centroids, p).1);
    Ok(total / R::cast_usize(points.len()))
}

/// Per-feature equal-width binning over the training range, composed into a
/// single token via mixed-radix positional encoding (feature 0 most
/// significant). Degenerate features (min = max) always produce digit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningScheme<R: Real> {
    per_feature_edges: Vec<Vec<R>>,
    bins: usize,
    alphabet: usize,
}

impl<R: Real> BinningScheme<R> {
    pub fn dim(&self) -> usize {
        self.per_feature_edges.len()
    }

    pub fn bins_per_feature(&self) -> usize {
        self.bins
    }

    /// Token alphabet size, `B^D`.
    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn edges(&self) -> &[Vec<R>] {
        &self.per_feature_edges
    }
}

/// Learns per-feature equal-width edges over `[min, max]` of the training
/// points, `bins_per_feature` bins each.
pub fn binning_fit<R: Real>(
    points: &[Vec<R>],
    bins_per_feature: usize,
) -> Result<BinningScheme<R>, VqError> {
    let dim = check_points(points)?;
    if bins_per_feature == 0 {
        return Err(VqError::InvalidParams("bins_per_feature must be >= 1".into()));
    }
    let alphabet = bins_per_feature
        .checked_pow(u32::try_from(dim).map_err(|_| VqError::AlphabetOverflow {
            bins: bins_per_feature,
            dim,
        })?)
        .ok_or(VqError::AlphabetOverflow {
            bins: bins_per_feature,
            dim,
        })?;

    let mut per_feature_edges = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut min = points[0][d];
        let mut max = points[0][d];
        for p in points {
            if p[d] < min {
                min = p[d];
            }
            if p[d] > max {
                max = p[d];
            }
        }
        if min == max {
            per_feature_edges.push(Vec::new());
            continue;
        }
        let width = (max - min) / R::cast_usize(bins_per_feature);
        let edges: Vec<R> = (1..bins_per_feature)
            .map(|i| min + width * R::cast_usize(i))
            .collect();
        per_feature_edges.push(edges);
    }
    Ok(BinningScheme {
        per_feature_edges,
        bins: bins_per_feature,
        alphabet,
    })
}

/// Encodes `x` into its composite bin token: per feature, the digit is the
/// number of edges at or below the value (values beyond the training range
/// clamp into the boundary bins), then digits combine mixed-radix.
pub fn binning_encode<R: Real>(scheme: &BinningScheme<R>, x: &[R]) -> Result<usize, VqError> {
    if x.len() != scheme.dim() {
        return Err(VqError::DimensionMismatch {
            expected: scheme.dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VqError::NonFiniteInput { index: 0 });
    }
    let mut token = 0usize;
    for (edges, &value) in scheme.per_feature_edges.iter().zip(x) {
        let digit = edges.iter().filter(|&&e| value >= e).count();
        token = token * scheme.bins + digit.min(scheme.bins - 1);
    }
    Ok(token)
}
