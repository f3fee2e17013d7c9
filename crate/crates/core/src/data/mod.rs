//! Datasets, client topology, shard partitioning and mini-batch scheduling.

mod idx;
mod partition;
mod synthetic;
mod topology;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use partition::{batch_indices, batches, partition, MiniBatch, PartitionMode, ShardPlan};
pub use synthetic::gen_synthetic;
pub use topology::Topology;

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// Feature matrix plus class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    tag: SplitTag,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize, tag: SplitTag) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Data(format!("features must be 2-D, got {:?}", features.shape())));
        }
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            tag,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    /// Copies the listed samples, in the given order, into a mini-batch.
    pub fn gather(&self, indices: &[usize]) -> Result<MiniBatch> {
        let d = self.dim();
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Data(format!("sample index {i} out of range {}", self.len())));
            }
            x.extend_from_slice(self.features.row(i));
            y.push(self.labels[i]);
        }
        Ok(MiniBatch {
            x: Tensor::new(vec![indices.len(), d], x)?,
            y,
        })
    }
}

/// Mixes a global seed with a path of integers (e.g. round, client, epoch)
/// into an independent stream seed. SplitMix64 finalizer, identical on every
/// platform.
pub fn derive_seed(global: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(global), |acc, &p| mix(acc ^ mix(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(1, &[0, 0]);
        assert_eq!(a, derive_seed(1, &[0, 0]));
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
    }

    #[test]
    fn dataset_validates_labels() {
        let f = Tensor::zeros(&[2, 3]);
        assert!(Dataset::new(f.clone(), vec![0, 3], 3, SplitTag::Train).is_err());
        assert!(Dataset::new(f.clone(), vec![0], 3, SplitTag::Train).is_err());
        let ds = Dataset::new(f, vec![0, 2], 3, SplitTag::Train).unwrap();
        let b = ds.gather(&[1, 0, 1]).unwrap();
        assert_eq!(b.y, vec![2, 0, 2]);
        assert!(ds.gather(&[2]).is_err());
    }
}
