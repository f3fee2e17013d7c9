use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const MEAN_RANGE: f64 = 3.0;
const VARIANCE: f64 = 0.5;

/// Gaussian blobs: one isotropic cluster (variance 0.5) per class, with the
/// class mean drawn uniformly from `[-3, 3]^dim`.
///
/// Both splits are stratified (class `c` gets `n / classes` samples, the
/// remainder going to the lowest classes) and shuffled deterministically.
pub fn gen_synthetic(
    classes: usize,
    dim: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if classes < 2 {
        return Err(Error::config("dataset.params.classes", "need at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::config("dataset.params.dim", "need at least 2 feature dimensions"));
    }
    if n_train < classes {
        return Err(Error::config("dataset.params.n_train", format!("need at least {classes} samples")));
    }
    if n_test == 0 {
        return Err(Error::config("dataset.params.n_test", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-MEAN_RANGE..=MEAN_RANGE)).collect())
        .collect();
    let noise = Normal::new(0.0, VARIANCE.sqrt()).expect("valid normal");
    let train = sample_split(&means, n_train, &noise, &mut rng, SplitTag::Train)?;
    let test = sample_split(&means, n_test, &noise, &mut rng, SplitTag::Test)?;
    Ok((train, test))
}

fn sample_split(
    means: &[Vec<f64>],
    n: usize,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
    tag: SplitTag,
) -> Result<Dataset> {
    let classes = means.len();
    let dim = means[0].len();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.sort_unstable();
    labels.shuffle(rng);
    let mut x = Vec::with_capacity(n * dim);
    for &y in &labels {
        x.extend(means[y].iter().map(|m| m + noise.sample(rng)));
    }
    Dataset::new(Tensor::new(vec![n, dim], x)?, labels, classes, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let (a, at) = gen_synthetic(3, 5, 600, 90, 42).unwrap();
        let (b, bt) = gen_synthetic(3, 5, 600, 90, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(at, bt);
        for c in 0..3 {
            assert_eq!(a.labels().iter().filter(|&&y| y == c).count(), 200);
        }
        assert_ne!(a, gen_synthetic(3, 5, 600, 90, 43).unwrap().0);
        assert!(a.features().is_finite());
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(gen_synthetic(1, 5, 10, 10, 0).is_err());
        assert!(gen_synthetic(3, 1, 10, 10, 0).is_err());
        assert!(gen_synthetic(3, 4, 2, 10, 0).is_err());
        assert!(gen_synthetic(3, 4, 10, 0, 0).is_err());
    }

    #[test]
    fn remainder_goes_to_low_classes() {
        let (train, _) = gen_synthetic(4, 2, 10, 4, 1).unwrap();
        let counts: Vec<usize> = (0..4)
            .map(|c| train.labels().iter().filter(|&&y| y == c).count())
            .collect();
        assert_eq!(counts, vec![3, 3, 2, 2]);
    }
}
