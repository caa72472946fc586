//! Fisher-vector encoding of local descriptor sets.
//!
//! A diagonal-covariance GMM is fitted by EM (k-means++ seeding, 10 Lloyd
//! passes), and each descriptor set is encoded as the normalized gradient of
//! the average log-likelihood with respect to the component means and standard
//! deviations. Length is `2·K·D`: all mean blocks first, then all variance blocks.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{put_f64s, put_header, put_u64, Reader};
use crate::dataio::{load_feature_matrix, DataError, FeatureMatrix};

pub const PLGM_MAGIC: &[u8; 4] = b"PLGM";
pub const DEFAULT_COMPONENTS: usize = 64;
const VARIANCE_FLOOR_REL: f64 = 1e-6;
const VARIANCE_FLOOR_ABS: f64 = 1e-12;
const WEIGHT_FLOOR: f64 = 1e-10;
const LLOYD_ITERS: usize = 10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, thiserror::Error)]
pub enum FisherError {
    #[error("{n} descriptors cannot fit {k} components")]
    TooFewSamples { n: usize, k: usize },
    #[error("invalid GMM parameters: {0}")]
    InvalidParams(String),
    #[error("component {0} degenerated during EM")]
    DegenerateComponent(usize),
    #[error("descriptor dimension {found} does not match GMM dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("descriptor set is empty")]
    EmptyDescriptorSet,
    #[error("descriptor manifest {0} lists no files")]
    EmptyManifest(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// `K × D`, row-major.
    pub means: Vec<f64>,
    /// `K × D` diagonal variances.
    pub variances: Vec<f64>,
    dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FvNormalization {
    Raw,
    /// Signed square root followed by global L2 normalization.
    #[default]
    Improved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
    pub normalization: FvNormalization,
}

impl GmmModel {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        dim: usize,
    ) -> Result<Self, FisherError> {
        let k = weights.len();
        if k == 0 || dim == 0 || means.len() != k * dim || variances.len() != k * dim {
            return Err(FisherError::InvalidParams(format!(
                "{k} weights, {} means, {} variances for dim {dim}",
                means.len(),
                variances.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 || weights.iter().any(|&w| !(w >= WEIGHT_FLOOR)) {
            return Err(FisherError::InvalidParams(
                "weights must be ≥ 1e-10 and sum to 1".into(),
            ));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite()))
            || means.iter().any(|m| !m.is_finite())
        {
            return Err(FisherError::InvalidParams(
                "non-finite mean or non-positive variance".into(),
            ));
        }
        Ok(GmmModel {
            weights,
            means,
            variances,
            dim,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    /// Per-component `log(w_k N(x | μ_k, σ_k²))`.
    fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (mu, var) = (self.mean(k), self.variance(k));
            let mut acc = 0.0;
            for d in 0..self.dim {
                let diff = x[d] - mu[d];
                acc += LN_2PI + var[d].ln() + diff * diff / var[d];
            }
            *o = self.weights[k].ln() - 0.5 * acc;
        }
    }

    /// Posterior responsibilities of each component for `x`, and `log p(x)`.
    pub fn responsibilities(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut lp = vec![0.0; self.n_components()];
        self.component_log_densities(x, &mut lp);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = lp.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        lp.iter_mut().for_each(|v| *v = (*v - lse).exp());
        (lp, lse)
    }

    pub fn average_log_likelihood(&self, descriptors: &FeatureMatrix) -> f64 {
        let lls: Vec<f64> = descriptors
            .rows()
            .map(|r| self.responsibilities(&widen(r)).1)
            .collect();
        lls.iter().sum::<f64>() / lls.len() as f64
    }
}

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// EM fit; see [`gmm_em_traced`] for the log-likelihood history.
pub fn gmm_em(
    descriptors: &FeatureMatrix,
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<GmmModel, FisherError> {
    gmm_em_traced(descriptors, k, seed, tol, max_iter).map(|(g, _)| g)
}

/// EM fit returning the average log-likelihood after initialization and after every M-step.
pub fn gmm_em_traced(
    descriptors: &FeatureMatrix,
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<(GmmModel, Vec<f64>), FisherError> {
    let n = descriptors.n_samples();
    let dim = descriptors.n_dims();
    if k == 0 {
        return Err(FisherError::InvalidParams("k must be ≥ 1".into()));
    }
    if n < k {
        return Err(FisherError::TooFewSamples { n, k });
    }
    if !(tol >= 0.0) {
        return Err(FisherError::InvalidParams(format!(
            "tol must be ≥ 0, got {tol}"
        )));
    }
    let data: Vec<Vec<f64>> = descriptors.rows().map(widen).collect();

    let mut global_mean = vec![0.0; dim];
    for x in &data {
        global_mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; dim];
    for x in &data {
        for d in 0..dim {
            global_var[d] += (x[d] - global_mean[d]).powi(2);
        }
    }
    global_var.iter_mut().for_each(|v| *v /= n as f64);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (VARIANCE_FLOOR_REL * v).max(VARIANCE_FLOOR_ABS))
        .collect();

    let mut gmm = kmeans_init(&data, k, seed, &global_var, &floor)?;
    let (mut resp, mut ll) = e_step(&gmm, &data);
    let mut trace = vec![ll];
    for _ in 0..max_iter {
        gmm = m_step(&gmm, &data, &resp, &floor)?;
        let (r, next) = e_step(&gmm, &data);
        resp = r;
        trace.push(next);
        let improvement = next - ll;
        ll = next;
        if improvement <= tol {
            break;
        }
    }
    Ok((gmm, trace))
}

fn e_step(g: &GmmModel, data: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let out: Vec<(Vec<f64>, f64)> = data.par_iter().map(|x| g.responsibilities(x)).collect();
    let ll = out.iter().map(|(_, l)| l).sum::<f64>() / data.len() as f64;
    (out.into_iter().map(|(r, _)| r).collect(), ll)
}

fn m_step(
    prev: &GmmModel,
    data: &[Vec<f64>],
    resp: &[Vec<f64>],
    floor: &[f64],
) -> Result<GmmModel, FisherError> {
    let (k, dim, n) = (prev.n_components(), prev.dim, data.len());
    let mut weights = vec![0.0; k];
    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        weights[c] = (nk / n as f64).max(WEIGHT_FLOOR);
        if nk <= f64::MIN_POSITIVE {
            continue;
        }
        let mut mu = vec![0.0; dim];
        for (x, r) in data.iter().zip(resp) {
            mu.iter_mut().zip(x).for_each(|(m, v)| *m += r[c] * v);
        }
        mu.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; dim];
        for (x, r) in data.iter().zip(resp) {
            for d in 0..dim {
                var[d] += r[c] * (x[d] - mu[d]).powi(2);
            }
        }
        for d in 0..dim {
            var[d] = (var[d] / nk).max(floor[d]);
        }
        if mu.iter().chain(&var).any(|v| !v.is_finite()) {
            return Err(FisherError::DegenerateComponent(c));
        }
        means[c * dim..(c + 1) * dim].copy_from_slice(&mu);
        variances[c * dim..(c + 1) * dim].copy_from_slice(&var);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel::new(weights, means, variances, dim)
}

/// k-means++ seeding and Lloyd refinement, turned into an initial mixture.
fn kmeans_init(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    global_var: &[f64],
    floor: &[f64],
) -> Result<GmmModel, FisherError> {
    let n = data.len();
    let dim = data[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![data[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[pick].clone());
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..LLOYD_ITERS {
        for (i, x) in data.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let d = sq_dist(x, ctr);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let mut counts = vec![0usize; k];
    let mut var_sums = vec![vec![0.0; dim]; k];
    for (x, &a) in data.iter().zip(&assign) {
        counts[a] += 1;
        for d in 0..dim {
            var_sums[a][d] += (x[d] - centers[a][d]).powi(2);
        }
    }
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).max(WEIGHT_FLOOR))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut variances = Vec::with_capacity(k * dim);
    for c in 0..k {
        for d in 0..dim {
            let v = if counts[c] > 1 {
                var_sums[c][d] / counts[c] as f64
            } else {
                global_var[d]
            };
            variances.push(v.max(floor[d]));
        }
    }
    GmmModel::new(weights, centers.concat(), variances, dim)
}

/// Encodes one descriptor set against `g`.
pub fn fisher_encode(
    g: &GmmModel,
    descriptors: &FeatureMatrix,
    normalization: FvNormalization,
) -> Result<FisherVector, FisherError> {
    if descriptors.n_dims() != g.dim {
        return Err(FisherError::DimMismatch {
            expected: g.dim,
            found: descriptors.n_dims(),
        });
    }
    let (k, dim) = (g.n_components(), g.dim);
    let t = descriptors.n_samples() as f64;
    let mut mean_block = vec![0.0; k * dim];
    let mut var_block = vec![0.0; k * dim];
    for row in descriptors.rows() {
        let x = widen(row);
        let (gamma, _) = g.responsibilities(&x);
        for c in 0..k {
            if gamma[c] == 0.0 {
                continue;
            }
            let (mu, var) = (g.mean(c), g.variance(c));
            for d in 0..dim {
                let z = (x[d] - mu[d]) / var[d].sqrt();
                mean_block[c * dim + d] += gamma[c] * z;
                var_block[c * dim + d] += gamma[c] * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let wm = 1.0 / (t * g.weights[c].sqrt());
        let wv = 1.0 / (t * (2.0 * g.weights[c]).sqrt());
        mean_block[c * dim..(c + 1) * dim]
            .iter_mut()
            .for_each(|v| *v *= wm);
        var_block[c * dim..(c + 1) * dim]
            .iter_mut()
            .for_each(|v| *v *= wv);
    }
    let mut values = mean_block;
    values.extend(var_block);
    if normalization == FvNormalization::Improved {
        values
            .iter_mut()
            .for_each(|v| *v = v.signum() * v.abs().sqrt());
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(FisherVector {
        values,
        normalization,
    })
}

/// One Fisher-vector row per descriptor set, downcast to a real32 pillar matrix.
pub fn encode_corpus(
    g: &GmmModel,
    per_sample: &[FeatureMatrix],
    normalization: FvNormalization,
) -> Result<FeatureMatrix, FisherError> {
    if per_sample.is_empty() {
        return Err(FisherError::EmptyDescriptorSet);
    }
    let rows = per_sample
        .par_iter()
        .map(|d| fisher_encode(g, d, normalization).map(|fv| fv.values))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMatrix::from_f64_rows(&rows)?)
}

/// Stacks several descriptor sets into one matrix, for pooled GMM fitting.
pub fn stack_descriptors(sets: &[FeatureMatrix]) -> Result<FeatureMatrix, FisherError> {
    let first = sets.first().ok_or(FisherError::EmptyDescriptorSet)?;
    let dim = first.n_dims();
    if let Some(bad) = sets.iter().find(|s| s.n_dims() != dim) {
        return Err(FisherError::DimMismatch {
            expected: dim,
            found: bad.n_dims(),
        });
    }
    let values: Vec<f32> = sets
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .collect();
    let n = values.len() / dim;
    Ok(FeatureMatrix::new(n, dim, values)?)
}

/// Reads a manifest (one PLRF path per line, relative to the manifest's directory).
pub fn load_descriptor_manifest(path: impl AsRef<Path>) -> Result<Vec<FeatureMatrix>, FisherError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let sets = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| load_feature_matrix(base.join(l)))
        .collect::<Result<Vec<_>, _>>()?;
    if sets.is_empty() {
        return Err(FisherError::EmptyManifest(path.to_path_buf()));
    }
    Ok(sets)
}

pub fn encode_gmm(g: &GmmModel) -> Vec<u8> {
    let mut buf = Vec::new();
    put_header(&mut buf, PLGM_MAGIC, 1);
    put_u64(&mut buf, g.n_components() as u64);
    put_u64(&mut buf, g.dim as u64);
    put_f64s(&mut buf, &g.weights);
    put_f64s(&mut buf, &g.means);
    put_f64s(&mut buf, &g.variances);
    buf
}

pub fn decode_gmm(bytes: &[u8]) -> Result<GmmModel, FisherError> {
    let mut r = Reader::new(bytes);
    r.header(PLGM_MAGIC)?;
    let k = r.count(8)?;
    let dim = r.count(8)?;
    let kd = k.checked_mul(dim).ok_or(DataError::Malformed {
        offset: 8,
        reason: "component count overflow".into(),
    })?;
    let weights = r.f64s_finite(k)?;
    let means = r.f64s_finite(kd)?;
    let variances = r.f64s_finite(kd)?;
    r.finish()?;
    GmmModel::new(weights, means, variances, dim)
}

pub fn save_gmm(g: &GmmModel, path: impl AsRef<Path>) -> Result<(), FisherError> {
    let path = path.as_ref();
    std::fs::write(path, encode_gmm(g)).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

pub fn load_gmm(path: impl AsRef<Path>) -> Result<GmmModel, FisherError> {
    let path = path.as_ref();
    decode_gmm(&std::fs::read(path).map_err(|e| DataError::io(path, e))?)
}
