#![allow(dead_code)]

use std::path::Path;

use pillar_core::dataio::{
    default_informative_classes, generate_synthetic_pillars, PillarSpec, SyntheticData,
};
use pillar_core::kernels::{GammaMode, Normalization};
use pillar_core::kernels::{KernelMatrix, Provenance};
use pillar_core::lp::{LpProblem, VarBounds};
use pillar_core::pipeline::{
    pillar_kernels, FusionPlan, GammaChoice, KernelChoice, PillarKernels, PillarPlan, PlanOverrides,
};
use pillar_core::svm::{train_one_vs_rest, SmoParams};
use pillar_core::{LabelVector, Matrix, SyntheticSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Four complementary pillars, two per group, 400 samples over 4 classes.
pub fn four_pillar_fixture(seed: u64) -> SyntheticData {
    let n_pillars = 4;
    let n_classes = 4;
    let spec = SyntheticSpec {
        n_samples: 400,
        n_classes,
        pillars: (0..n_pillars)
            .map(|p| PillarSpec {
                n_dims: 16,
                informative_classes: default_informative_classes(p, n_pillars, n_classes),
                noise_sigma: 1.0,
            })
            .collect(),
        seed,
    };
    generate_synthetic_pillars(&spec).unwrap()
}

/// In-memory plan over pillars `p0..p{n-1}`; feature paths are placeholders.
pub fn plan_for(
    n_pillars: usize,
    groups: &[(&str, &[usize])],
    extra: &[(&str, &str)],
) -> FusionPlan {
    let mut s = PlanOverrides::default();
    for p in 0..n_pillars {
        s.set(format!("pillar.p{p}.features"), format!("p{p}.plrf"));
    }
    for (id, members) in groups {
        let names: Vec<String> = members.iter().map(|m| format!("p{m}")).collect();
        s.set(format!("group.{id}"), names.join(","));
    }
    for (k, v) in extra {
        s.set(*k, *v);
    }
    FusionPlan::from_settings(&s, Path::new(".")).unwrap()
}

pub fn kernel_from_rows(rows: Vec<Vec<f64>>) -> KernelMatrix {
    let n = rows.len();
    KernelMatrix::new(Matrix::from_vec(n, n, rows.concat()), Provenance::default()).unwrap()
}

/// `exp(−γ‖x − z‖²)` evaluated entry by entry in f64.
pub fn naive_rbf(x: &[Vec<f64>], z: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| {
            z.iter()
                .map(|b| {
                    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                    (-gamma * d2).exp()
                })
                .collect()
        })
        .collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random binary problem: Gaussian points, labels from a noisy random hyperplane,
/// RBF kernel. Both classes are always present.
pub fn random_binary_problem(rng: &mut ChaCha8Rng, n: usize) -> (KernelMatrix, Vec<f64>) {
    let d = rng.random_range(2..=5);
    let w: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| gaussian(rng)).collect())
        .collect();
    let mut y: Vec<f64> = x
        .iter()
        .map(|xi| {
            let s: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5 * gaussian(rng);
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let gamma = rng.random_range(0.1..2.0);
    (kernel_from_rows(naive_rbf(&x, &x, gamma)), y)
}

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the multiplier.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

fn largest_eigenvalue(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut v = vec![1.0; n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = q
            .iter()
            .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Maximal dual value `max Σα − ½αᵀQα` over the SVM feasible set, by accelerated
/// projected gradient with adaptive restart (at most `max_steps` steps).
pub fn projected_gradient_dual(k: &KernelMatrix, y: &[f64], c: f64, max_steps: usize) -> f64 {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k.get(i, j)).collect())
        .collect();
    let step = 1.0 / (1.05 * largest_eigenvalue(&q));
    let f = |a: &[f64]| {
        let quad: f64 = (0..n)
            .map(|i| a[i] * (0..n).map(|j| q[i][j] * a[j]).sum::<f64>())
            .sum();
        0.5 * quad - a.iter().sum::<f64>()
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = f(&x);
    let mut quiet = 0;
    for _ in 0..max_steps {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project_box_hyperplane(&v, y, c);
        let fn_ = f(&next);
        if fn_ > fx {
            if t == 1.0 {
                // a plain projected step from x no longer descends
                break;
            }
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        quiet = if moved < 1e-13 * (1.0 + c) {
            quiet + 1
        } else {
            0
        };
        x = next;
        fx = fn_;
        t = t_next;
        if quiet >= 50 {
            break;
        }
    }
    -fx
}

/// Random bounded, feasible LP with at most 6 variables and 10 constraints,
/// built around a known interior point.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.random_range(1..=6);
    let m_total = rng.random_range(1..=10);
    let m_eq = if n > 1 {
        rng.random_range(0..=(n - 1).min(2).min(m_total))
    } else {
        0
    };
    let mut bounds = Vec::with_capacity(n);
    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let lo = rng.random_range(-5..=2) as f64;
        let hi = lo + rng.random_range(1..=8) as f64;
        x0.push(rng.random_range(lo..hi));
        bounds.push(VarBounds::between(lo, hi));
    }
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-4..=4) as f64).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut lp = LpProblem::new((0..n).map(|_| rng.random_range(-5..=5) as f64).collect());
    lp.bounds = bounds;
    for _ in 0..m_eq {
        let a = row(rng);
        let rhs = dot(&a, &x0);
        lp.eq.push((a, rhs));
    }
    for _ in m_eq..m_total {
        let a = row(rng);
        let rhs = dot(&a, &x0) + rng.random_range(0.0..3.0);
        lp.ineq.push((a, rhs));
    }
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[r][k] -= f * a[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(
    n: usize,
    k: usize,
    start: usize,
    cur: &mut Vec<usize>,
    out: &mut dyn FnMut(&[usize]),
) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Best objective over every basic feasible point of a bounded LP
/// (`None` when no vertex is feasible).
pub fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
    let n = lp.n_vars();
    let mut candidates: Vec<(Vec<f64>, f64)> = lp.ineq.clone();
    for (i, b) in lp.bounds.iter().enumerate() {
        let unit = |s: f64| {
            (0..n)
                .map(|j| if j == i { s } else { 0.0 })
                .collect::<Vec<_>>()
        };
        if let Some(l) = b.lower {
            candidates.push((unit(1.0), l));
        }
        if let Some(u) = b.upper {
            candidates.push((unit(1.0), u));
        }
    }
    let need = n.checked_sub(lp.eq.len())?;
    let mut best: Option<f64> = None;
    combinations(candidates.len(), need, 0, &mut Vec::new(), &mut |pick| {
        let mut rows: Vec<Vec<f64>> = lp.eq.iter().map(|(a, _)| a.clone()).collect();
        let mut rhs: Vec<f64> = lp.eq.iter().map(|(_, r)| *r).collect();
        for &p in pick {
            rows.push(candidates[p].0.clone());
            rhs.push(candidates[p].1);
        }
        if let Some(v) = solve_square(rows, rhs) {
            if lp.max_violation(&v) <= 1e-9 {
                let obj: f64 = lp.objective.iter().zip(&v).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(obj, |b: f64| b.max(obj)));
            }
        }
    });
    best
}

/// Kernels of the selected pillars on one split, with the default γ and normalization.
pub fn split_kernels(data: &SyntheticData, split: usize, pillars: &[usize]) -> Vec<PillarKernels> {
    pillars
        .iter()
        .map(|&p| {
            let plan = PillarPlan {
                id: format!("p{p}"),
                features: format!("p{p}.plrf").into(),
                kernel: KernelChoice::Rbf(GammaChoice::Heuristic(GammaMode::Scale)),
                normalization: Normalization::UnitMeanDiag,
                l2_normalize: false,
            };
            pillar_kernels(&plan, &data.pillars[p], &data.splits[split], 0).unwrap()
        })
        .collect()
}

/// Every weight vector on the simplex with coordinates in multiples of `1/steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Summed one-vs-rest dual optimum of `Σ β_k K_k`, computed from scratch.
pub fn fused_dual(
    ks: &[&KernelMatrix],
    labels: &LabelVector,
    beta: &[f64],
    params: &SmoParams,
) -> f64 {
    let n = ks[0].n();
    let mut fused = Matrix::zeros(n, n);
    for (k, &b) in ks.iter().zip(beta) {
        for i in 0..n {
            for j in 0..n {
                fused.set(i, j, fused.get(i, j) + b * k.get(i, j));
            }
        }
    }
    let fused = KernelMatrix::new(fused, Provenance::default()).unwrap();
    let m = train_one_vs_rest(&fused, labels, params).unwrap();
    m.per_class.iter().map(|b| b.dual_objective(&fused)).sum()
}

/// Isotropic Gaussian blobs, `per` points around each centre, interleaved.
pub fn blobs(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], sigma: f64, per: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for _ in 0..per {
        for c in centers {
            rows.push(c.iter().map(|m| m + sigma * gaussian(rng)).collect());
        }
    }
    rows
}

/// `(1/T) Σ_t log Σ_k w_k N(x_t; μ_k, diag σ_k²)` with σ given as standard deviations.
pub fn avg_log_likelihood(w: &[f64], mu: &[f64], sd: &[f64], dim: usize, x: &[Vec<f64>]) -> f64 {
    let k = w.len();
    let mut total = 0.0;
    for xt in x {
        let logs: Vec<f64> = (0..k)
            .map(|c| {
                let mut l = w[c].ln();
                for d in 0..dim {
                    let s = sd[c * dim + d];
                    let z = (xt[d] - mu[c * dim + d]) / s;
                    l += -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                }
                l
            })
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    }
    total / x.len() as f64
}
