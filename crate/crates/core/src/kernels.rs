//! Gram matrices, γ heuristics, normalization, PSD checks and weighted sums of
//! sub-kernels. Kernels are always `f64`; features stay `f32`.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::parse_key_values;
use crate::dataio::{self, DataError, FeatureMatrix};
use crate::matrix::Matrix;

/// Default PSD tolerance, relative to `max(1, max diagonal)`.
pub const PSD_TOL: f64 = 1e-8;
const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];
const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("dimension mismatch: {left} vs {right} feature dimensions")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("all feature entries are identical; γ heuristic undefined")]
    ZeroVariance,
    #[error("γ heuristic needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("mean kernel diagonal is {0}; cannot normalize")]
    DegenerateDiagonal(f64),
    #[error("kernel sizes differ: {0}")]
    SizeMismatch(String),
    #[error("kernel weight {index} is negative or non-finite ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("matrix is not a valid kernel: {0}")]
    NotAKernel(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelParams {
    Rbf { gamma: f64 },
    Linear,
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            KernelParams::Rbf { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                Err(KernelError::InvalidParams(format!(
                    "rbf γ must be positive and finite, got {gamma}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            KernelParams::Rbf { .. } => "rbf",
            KernelParams::Linear => "linear",
        }
    }

    fn eval(&self, a: &[f32], b: &[f32]) -> f64 {
        match *self {
            KernelParams::Rbf { gamma } => {
                let d2: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&u, &v)| {
                        let t = f64::from(u) - f64::from(v);
                        t * t
                    })
                    .sum();
                (-gamma * d2).exp()
            }
            KernelParams::Linear => a
                .iter()
                .zip(b)
                .map(|(&u, &v)| f64::from(u) * f64::from(v))
                .sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMode {
    Scale,
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Normalization {
    None,
    #[default]
    UnitMeanDiag,
}

impl Normalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::UnitMeanDiag => "unit_mean_diag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Normalization::None),
            "unit_mean_diag" => Some(Normalization::UnitMeanDiag),
            _ => None,
        }
    }
}

/// Where a kernel came from and what was done to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub kind: String,
    pub gamma: Option<f64>,
    pub pillar: Option<String>,
    pub normalization: Normalization,
    /// Divisor applied by normalization (1 when none).
    pub scale: f64,
    pub beta: Option<Vec<f64>>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            kind: String::new(),
            gamma: None,
            pillar: None,
            normalization: Normalization::None,
            scale: 1.0,
            beta: None,
        }
    }
}

impl Provenance {
    fn for_params(p: &KernelParams, pillar: Option<&str>) -> Self {
        Provenance {
            kind: p.kind_name().into(),
            gamma: match *p {
                KernelParams::Rbf { gamma } => Some(gamma),
                KernelParams::Linear => None,
            },
            pillar: pillar.map(str::to_string),
            normalization: Normalization::None,
            scale: 1.0,
            beta: None,
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut s = format!("kind={}\n", self.kind);
        if let Some(g) = self.gamma {
            s.push_str(&format!("gamma={g:?}\n"));
        }
        if let Some(p) = &self.pillar {
            s.push_str(&format!("pillar={p}\n"));
        }
        s.push_str(&format!("normalization={}\n", self.normalization.as_str()));
        s.push_str(&format!("scale={:?}\n", self.scale));
        if let Some(b) = &self.beta {
            let parts: Vec<String> = b.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!("beta={}\n", parts.join(",")));
        }
        s
    }

    pub fn from_key_values(text: &str) -> Result<Self, KernelError> {
        let bad = |m: String| KernelError::NotAKernel(format!("provenance: {m}"));
        let mut p = Provenance {
            scale: 1.0,
            normalization: Normalization::None,
            ..Default::default()
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(format!("bad number {v:?}")))
        };
        for (k, v) in parse_key_values(text).map_err(|(l, m)| bad(format!("line {l}: {m}")))? {
            match k.as_str() {
                "kind" => p.kind = v,
                "gamma" => p.gamma = Some(num(&v)?),
                "pillar" => p.pillar = Some(v),
                "normalization" => {
                    p.normalization = Normalization::parse(&v)
                        .ok_or_else(|| bad(format!("normalization {v:?}")))?
                }
                "scale" => p.scale = num(&v)?,
                "beta" => p.beta = Some(v.split(',').map(num).collect::<Result<_, _>>()?),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(p)
    }
}

/// Symmetric, finite `n × n` Gram matrix with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    values: Matrix,
    pub provenance: Provenance,
}

impl KernelMatrix {
    /// Checks squareness, exact symmetry and finiteness (not PSD; see [`check_psd`]).
    pub fn new(values: Matrix, provenance: Provenance) -> Result<Self, KernelError> {
        if !values.is_square() {
            return Err(KernelError::NotAKernel(format!(
                "shape {}x{} is not square",
                values.rows(),
                values.cols()
            )));
        }
        if values.rows() == 0 {
            return Err(KernelError::NotAKernel("empty matrix".into()));
        }
        let n = values.rows();
        for i in 0..n {
            for j in 0..=i {
                let (a, b) = (values.get(i, j), values.get(j, i));
                if !a.is_finite() {
                    return Err(KernelError::NotAKernel(format!(
                        "non-finite entry ({i},{j})"
                    )));
                }
                if a != b {
                    return Err(KernelError::NotAKernel(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(KernelMatrix { values, provenance })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.values.diagonal().iter().sum::<f64>() / self.n() as f64
    }

    /// Principal sub-kernel over `indices`.
    pub fn restrict(&self, indices: &[usize]) -> KernelMatrix {
        KernelMatrix {
            values: self.values.select(indices, indices),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the PLRK payload and a `<path>.meta` provenance sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KernelError> {
        let path = path.as_ref();
        dataio::write_kernel_cache(&self.values, path)?;
        let meta = sidecar_path(path);
        std::fs::write(&meta, self.provenance.to_key_values())
            .map_err(|e| DataError::io(meta, e))?;
        Ok(())
    }

    /// Reads a PLRK file; the sidecar is optional.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KernelError> {
        let path = path.as_ref();
        let values = dataio::load_kernel_cache(path)?;
        let meta = sidecar_path(path);
        let provenance = match std::fs::read_to_string(&meta) {
            Ok(text) => Provenance::from_key_values(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Provenance {
                kind: "loaded".into(),
                scale: 1.0,
                ..Default::default()
            },
            Err(e) => return Err(DataError::io(meta, e).into()),
        };
        KernelMatrix::new(values, provenance)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

/// `|x| × |z|` kernel block. Passing the same matrix twice yields an exactly symmetric result.
pub fn kernel_gram(
    x: &FeatureMatrix,
    z: &FeatureMatrix,
    p: &KernelParams,
) -> Result<Matrix, KernelError> {
    p.validate()?;
    if x.n_dims() != z.n_dims() {
        return Err(KernelError::DimensionMismatch {
            left: x.n_dims(),
            right: z.n_dims(),
        });
    }
    if std::ptr::eq(x, z) {
        return Ok(symmetric_gram(x, p));
    }
    let cols = z.n_samples();
    let rows: Vec<Vec<f64>> = (0..x.n_samples())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..cols).map(|j| p.eval(xi, z.row(j))).collect()
        })
        .collect();
    Ok(Matrix::from_vec(x.n_samples(), cols, rows.concat()))
}

fn symmetric_gram(x: &FeatureMatrix, p: &KernelParams) -> Matrix {
    let n = x.n_samples();
    // lower triangle, row by row
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..=i).map(|j| p.eval(xi, x.row(j))).collect()
        })
        .collect();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in lower.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Square kernel of a feature matrix against itself, tagged with its pillar.
pub fn self_kernel(
    x: &FeatureMatrix,
    p: &KernelParams,
    pillar: Option<&str>,
) -> Result<KernelMatrix, KernelError> {
    let values = kernel_gram(x, x, p)?;
    Ok(KernelMatrix {
        values,
        provenance: Provenance::for_params(p, pillar),
    })
}

pub fn gamma_heuristic(x: &FeatureMatrix, mode: GammaMode, seed: u64) -> Result<f64, KernelError> {
    let n = x.n_samples();
    if n < 2 {
        return Err(KernelError::TooFewSamples(n));
    }
    match mode {
        GammaMode::Scale => {
            let count = x.values().len() as f64;
            let mean = x.values().iter().map(|&v| f64::from(v)).sum::<f64>() / count;
            let var = x
                .values()
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / count;
            if var <= 0.0 {
                return Err(KernelError::ZeroVariance);
            }
            Ok(1.0 / (x.n_dims() as f64 * var))
        }
        GammaMode::Median => {
            let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
                picked.sort_unstable();
                picked
            } else {
                (0..n).collect()
            };
            let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
            for (a, &i) in rows.iter().enumerate() {
                for &j in &rows[a + 1..] {
                    let d2: f64 = x
                        .row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(&u, &v)| (f64::from(u) - f64::from(v)).powi(2))
                        .sum();
                    dists.push(d2.sqrt());
                }
            }
            let m = median(&mut dists);
            if m <= 0.0 {
                return Err(KernelError::ZeroVariance);
            }
            Ok(1.0 / (2.0 * m * m))
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    let len = v.len();
    let mid = len / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// `UnitMeanDiag` divides every entry by the mean diagonal; the divisor is kept in
/// the provenance so test/train blocks can be scaled identically.
pub fn normalize_kernel(
    k: &KernelMatrix,
    mode: Normalization,
) -> Result<KernelMatrix, KernelError> {
    match mode {
        Normalization::None => Ok(k.clone()),
        Normalization::UnitMeanDiag => {
            let md = k.mean_diagonal();
            if !(md > 0.0 && md.is_finite()) {
                return Err(KernelError::DegenerateDiagonal(md));
            }
            let mut values = k.values.clone();
            values.scale(1.0 / md);
            let mut provenance = k.provenance.clone();
            provenance.normalization = Normalization::UnitMeanDiag;
            provenance.scale *= md;
            Ok(KernelMatrix { values, provenance })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsdCheck {
    Pass,
    Fail { min_eigenvalue: f64 },
}

impl PsdCheck {
    pub fn passed(&self) -> bool {
        matches!(self, PsdCheck::Pass)
    }
}

/// Cholesky with a diagonal jitter ladder capped at `tol·max(1, max diag)`;
/// on failure the smallest eigenvalue is reported.
pub fn check_psd(k: &KernelMatrix, tol: f64) -> PsdCheck {
    let scale = k.values.diagonal().into_iter().fold(1.0, f64::max);
    let mut ladder: Vec<f64> = JITTER_LADDER.iter().copied().filter(|&j| j < tol).collect();
    ladder.push(tol);
    if ladder
        .iter()
        .any(|&j| cholesky_succeeds(&k.values, j * scale))
    {
        return PsdCheck::Pass;
    }
    let eig = k.values.to_nalgebra().symmetric_eigenvalues();
    PsdCheck::Fail {
        min_eigenvalue: eig.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn cholesky_succeeds(a: &Matrix, jitter: f64) -> bool {
    let n = a.rows();
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut d = a.get(j, j) + jitter;
        for p in 0..j {
            d -= l[j * n + p] * l[j * n + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = s / djj;
        }
    }
    true
}

fn check_weights(n_kernels: usize, beta: &[f64]) -> Result<(), KernelError> {
    if n_kernels == 0 {
        return Err(KernelError::SizeMismatch("no kernels to combine".into()));
    }
    if beta.len() != n_kernels {
        return Err(KernelError::SizeMismatch(format!(
            "{} weights for {} kernels",
            beta.len(),
            n_kernels
        )));
    }
    if let Some((index, &value)) = beta
        .iter()
        .enumerate()
        .find(|(_, &b)| !(b >= 0.0 && b.is_finite()))
    {
        return Err(KernelError::NegativeWeight { index, value });
    }
    Ok(())
}

/// Entrywise `Σ_k β_k K_k` over arbitrary (possibly rectangular) blocks of equal shape.
pub fn combine_blocks(blocks: &[&Matrix], beta: &[f64]) -> Result<Matrix, KernelError> {
    check_weights(blocks.len(), beta)?;
    let (r, c) = (blocks[0].rows(), blocks[0].cols());
    if let Some(b) = blocks.iter().find(|b| (b.rows(), b.cols()) != (r, c)) {
        return Err(KernelError::SizeMismatch(format!(
            "block {}x{} vs {r}x{c}",
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Matrix::zeros(r, c);
    for (b, &w) in blocks.iter().zip(beta) {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Fused kernel `κ = Σ_k β_k K_k`; provenance records β.
pub fn combine_kernels(ks: &[&KernelMatrix], beta: &[f64]) -> Result<KernelMatrix, KernelError> {
    let blocks: Vec<&Matrix> = ks.iter().map(|k| &k.values).collect();
    let values = combine_blocks(&blocks, beta)?;
    Ok(KernelMatrix {
        values,
        provenance: Provenance {
            kind: "combined".into(),
            gamma: None,
            pillar: None,
            normalization: Normalization::None,
            scale: 1.0,
            beta: Some(beta.to_vec()),
        },
    })
}
