//! Seeded multi-pillar fixture generator.
//!
//! Sample `i` belongs to class `i % n_classes`. In pillar `p`, every class in
//! the pillar's informative subset gets its own random mean on the first half of
//! the dimensions; every other class sits at the origin, so the pillar cannot
//! tell those classes apart. Isotropic Gaussian noise is added on all dimensions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, FeatureMatrix, LabelVector, SplitDefinition};

const MEAN_SCALE: f64 = 2.0;
const TRAIN_FRACTION: f64 = 0.7;
const N_SPLITS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct PillarSpec {
    pub n_dims: usize,
    pub informative_classes: Vec<usize>,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_classes: usize,
    pub pillars: Vec<PillarSpec>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub pillars: Vec<FeatureMatrix>,
    pub labels: LabelVector,
    pub splits: Vec<SplitDefinition>,
}

/// Contiguous (cyclic) block of `ceil(C/2)` classes starting at `floor(p·C/P)`;
/// a lone pillar is informative for every class. Blocks always cover all classes.
pub fn default_informative_classes(
    pillar: usize,
    n_pillars: usize,
    n_classes: usize,
) -> Vec<usize> {
    if n_pillars <= 1 {
        return (0..n_classes).collect();
    }
    let width = n_classes.div_ceil(2);
    let start = pillar * n_classes / n_pillars;
    let mut out: Vec<usize> = (0..width).map(|o| (start + o) % n_classes).collect();
    out.sort_unstable();
    out
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be ≥ 2, got {}", self.n_classes));
        }
        if self.n_samples < 2 * self.n_classes {
            return bad(format!(
                "n_samples must be ≥ 2·n_classes = {}, got {}",
                2 * self.n_classes,
                self.n_samples
            ));
        }
        if self.pillars.is_empty() {
            return bad("at least one pillar is required".into());
        }
        let mut covered = vec![false; self.n_classes];
        for (p, pillar) in self.pillars.iter().enumerate() {
            if pillar.n_dims == 0 {
                return bad(format!("pillar {p}: n_dims must be ≥ 1"));
            }
            if !(pillar.noise_sigma.is_finite() && pillar.noise_sigma >= 0.0) {
                return bad(format!("pillar {p}: noise_sigma must be finite and ≥ 0"));
            }
            if pillar.informative_classes.is_empty() {
                return bad(format!("pillar {p}: informative class subset is empty"));
            }
            for &c in &pillar.informative_classes {
                if c >= self.n_classes {
                    return bad(format!("pillar {p}: class {c} ≥ n_classes"));
                }
                covered[c] = true;
            }
        }
        if let Some(c) = covered.iter().position(|&c| !c) {
            return bad(format!("class {c} is not informative in any pillar"));
        }
        Ok(())
    }
}

pub fn generate_synthetic_pillars(spec: &SyntheticSpec) -> Result<SyntheticData, DataError> {
    spec.validate()?;
    let labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.n_classes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut pillars = Vec::with_capacity(spec.pillars.len());
    for pillar in &spec.pillars {
        let d = pillar.n_dims;
        let informative_dims = (d / 2).max(1);
        let mut means = vec![vec![0.0f64; d]; spec.n_classes];
        for &c in &pillar.informative_classes {
            for v in means[c].iter_mut().take(informative_dims) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = MEAN_SCALE * z;
            }
        }
        let mut values = Vec::with_capacity(spec.n_samples * d);
        for &c in &labels {
            for &mu in &means[c] {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push((mu + pillar.noise_sigma * z) as f32);
            }
        }
        pillars.push(FeatureMatrix::new(spec.n_samples, d, values)?);
    }

    let splits = (0..N_SPLITS)
        .map(|s| stratified_split(&labels, spec.n_classes, spec.seed, s))
        .collect();
    Ok(SyntheticData {
        pillars,
        labels: LabelVector::with_classes(labels, spec.n_classes)?,
        splits,
    })
}

/// Per class: floor(0.7·count) shuffled members go to train, the rest to test.
fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    seed: u64,
    split: usize,
) -> SplitDefinition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64 + 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n_train = (TRAIN_FRACTION * members.len() as f64).floor() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    SplitDefinition {
        split_id: split + 1,
        train_indices: train,
        test_indices: test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: 40,
            n_classes: 4,
            pillars: (0..2)
                .map(|p| PillarSpec {
                    n_dims: 6,
                    informative_classes: default_informative_classes(p, 2, 4),
                    noise_sigma: 1.0,
                })
                .collect(),
            seed,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(
            generate_synthetic_pillars(&spec(3)).unwrap(),
            generate_synthetic_pillars(&spec(3)).unwrap()
        );
        assert_ne!(
            generate_synthetic_pillars(&spec(3)).unwrap().pillars,
            generate_synthetic_pillars(&spec(4)).unwrap().pillars
        );
    }

    #[test]
    fn splits_are_stratified_and_valid() {
        let data = generate_synthetic_pillars(&spec(1)).unwrap();
        assert_eq!(data.splits.len(), 3);
        for s in &data.splits {
            s.validate(&data.labels).unwrap();
            // 10 per class → 7 train, 3 test
            assert_eq!(s.train_indices.len(), 28);
            assert_eq!(s.test_indices.len(), 12);
        }
        assert_ne!(data.splits[0], data.splits[1]);
    }

    #[test]
    fn default_blocks() {
        assert_eq!(default_informative_classes(0, 2, 4), vec![0, 1]);
        assert_eq!(default_informative_classes(1, 2, 4), vec![2, 3]);
        assert_eq!(default_informative_classes(3, 4, 4), vec![0, 3]);
        assert_eq!(default_informative_classes(0, 1, 3), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_uncovered_class() {
        let mut s = spec(0);
        s.pillars[1].informative_classes = vec![0];
        assert!(matches!(
            generate_synthetic_pillars(&s),
            Err(DataError::InvalidSpec(_))
        ));
        let mut s = spec(0);
        s.pillars[0].informative_classes.clear();
        assert!(matches!(
            generate_synthetic_pillars(&s),
            Err(DataError::InvalidSpec(_))
        ));
    }

    #[test]
    fn uninformative_classes_share_a_mean() {
        let mut s = spec(9);
        s.pillars.iter_mut().for_each(|p| p.noise_sigma = 0.0);
        let data = generate_synthetic_pillars(&s).unwrap();
        // pillar 0 is informative for {0,1}; classes 2 and 3 collapse to the origin
        assert!(data.pillars[0].row(2).iter().all(|&v| v == 0.0));
        assert_eq!(data.pillars[0].row(2), data.pillars[0].row(3));
        assert_ne!(data.pillars[0].row(0), data.pillars[0].row(1));
    }
}
