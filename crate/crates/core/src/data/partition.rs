use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Dataset, Topology};
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionMode {
    Iid,
    /// Every client sees samples from exactly `k` classes.
    LabelSkew(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub x: Tensor,
    pub y: Vec<usize>,
}

/// Per-client sample indices into the training set. Each shard is stored in
/// ascending index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    shards: Vec<Vec<usize>>,
}

impl ShardPlan {
    pub fn from_shards(mut shards: Vec<Vec<usize>>) -> Self {
        for s in &mut shards {
            s.sort_unstable();
        }
        Self { shards }
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    /// True when the shards are pairwise disjoint and cover `0..n` exactly.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.shards.iter().flatten() {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Splits the training set across the clients of `topo`.
///
/// `Iid` shuffles all indices and cuts them into equal contiguous chunks (the
/// remainder goes to the earliest clients). `LabelSkew(k)` gives client `i`
/// the classes `i*k .. i*k+k` (mod C) and deals each class's shuffled samples
/// round-robin among the clients holding it.
pub fn partition(
    train: &Dataset,
    topo: &Topology,
    mode: PartitionMode,
    batch_size: usize,
    seed: u64,
) -> Result<ShardPlan> {
    let n = train.len();
    let clients = topo.n_clients();
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    if n < clients * batch_size {
        return Err(Error::config(
            "n_clients/batch_size",
            format!("{n} training samples cannot fill {clients} shards of at least {batch_size}"),
        ));
    }
    let shards = match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let base = n / clients;
            let extra = n % clients;
            let mut start = 0;
            (0..clients)
                .map(|c| {
                    let len = base + usize::from(c < extra);
                    let shard = idx[start..start + len].to_vec();
                    start += len;
                    shard
                })
                .collect()
        }
        PartitionMode::LabelSkew(k) => label_skew(train, clients, k, seed)?,
    };
    let plan = ShardPlan::from_shards(shards);
    if let Some((c, s)) = plan.shards.iter().enumerate().find(|(_, s)| s.len() < batch_size) {
        return Err(Error::config(
            "partition",
            format!("client {c} receives {} samples, fewer than batch_size {batch_size}", s.len()),
        ));
    }
    Ok(plan)
}

fn label_skew(train: &Dataset, clients: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let classes = train.num_classes();
    if k == 0 || k > classes {
        return Err(Error::config("partition.k", format!("k must lie in [1, {classes}]")));
    }
    if clients * k < classes {
        return Err(Error::config(
            "partition.k",
            format!("{clients} clients with {k} classes each cannot cover {classes} classes"),
        ));
    }
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for c in 0..clients {
        for j in 0..k {
            holders[(c * k + j) % classes].push(c);
        }
    }
    let mut shards = vec![Vec::new(); clients];
    for (class, owners) in holders.iter().enumerate() {
        let mut members: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == class).collect();
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[class as u64])));
        for (j, i) in members.into_iter().enumerate() {
            shards[owners[j % owners.len()]].push(i);
        }
    }
    Ok(shards)
}

/// Shuffles the shard with `epoch_seed` and cuts it into consecutive batches,
/// dropping a final partial batch.
pub fn batch_indices(shard: &[usize], batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut order = shard.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batches(data: &Dataset, shard: &[usize], batch_size: usize, epoch_seed: u64) -> Result<Vec<MiniBatch>> {
    batch_indices(shard, batch_size, epoch_seed)
        .iter()
        .map(|idx| data.gather(idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::data::SplitTag;

    fn labelled(n: usize, classes: usize) -> Dataset {
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(Tensor::zeros(&[n, 2]), labels, classes, SplitTag::Train).unwrap()
    }

    #[test]
    fn iid_equal_shards() {
        let ds = labelled(100, 4);
        let topo = Topology::new(10, 2).unwrap();
        let plan = partition(&ds, &topo, PartitionMode::Iid, 5, 3).unwrap();
        assert_eq!(plan.sizes(), vec![10; 10]);
        assert!(plan.is_partition_of(100));
    }

    #[test]
    fn iid_remainder_to_first_clients() {
        let ds = labelled(23, 2);
        let topo = Topology::new(5, 1).unwrap();
        let plan = partition(&ds, &topo, PartitionMode::Iid, 2, 3).unwrap();
        assert_eq!(plan.sizes(), vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn label_skew_one_class_each() {
        let ds = labelled(80, 4);
        let topo = Topology::new(4, 2).unwrap();
        let plan = partition(&ds, &topo, PartitionMode::LabelSkew(1), 4, 9).unwrap();
        assert!(plan.is_partition_of(80));
        for (c, shard) in plan.shards().iter().enumerate() {
            let labels: HashSet<usize> = shard.iter().map(|&i| ds.labels()[i]).collect();
            assert_eq!(labels, HashSet::from([c]));
        }
    }

    #[test]
    fn infeasible_partitions() {
        let ds = labelled(20, 4);
        let topo = Topology::new(4, 1).unwrap();
        assert!(partition(&ds, &topo, PartitionMode::Iid, 6, 0).is_err());
        assert!(partition(&ds, &topo, PartitionMode::LabelSkew(5), 1, 0).is_err());
        assert!(partition(&ds, &topo, PartitionMode::LabelSkew(0), 1, 0).is_err());
        let two = Topology::new(2, 1).unwrap();
        assert!(partition(&ds, &two, PartitionMode::LabelSkew(1), 1, 0).is_err());
    }

    #[test]
    fn batching_drops_last_and_is_reproducible() {
        let shard: Vec<usize> = (100..110).collect();
        let b = batch_indices(&shard, 3, 5);
        assert_eq!(b.len(), 3);
        assert_eq!(b, batch_indices(&shard, 3, 5));
        let flat: Vec<usize> = b.concat();
        let uniq: HashSet<usize> = flat.iter().copied().collect();
        assert_eq!(uniq.len(), 9);
        assert!(flat.iter().all(|i| shard.contains(i)));
    }
}
