use std::collections::HashSet;

use gsfl::data::{batch_indices, gen_synthetic, partition, PartitionMode, Topology};
use gsfl::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_mode_yields_a_set_partition(
        seed in any::<u64>(),
        classes in 2usize..=6,
        n_clients in 1usize..=10,
        k in 1usize..=6,
        skew in any::<bool>(),
    ) {
        let (train, _) = gen_synthetic(classes, 3, 400, 10, seed).unwrap();
        let topo = Topology::new(n_clients, 1).unwrap();
        let mode = if skew { PartitionMode::LabelSkew(k) } else { PartitionMode::Iid };
        match partition(&train, &topo, mode, 4, seed) {
            Ok(plan) => {
                prop_assert!(plan.is_partition_of(train.len()));
                prop_assert_eq!(plan.shards().len(), n_clients);
                let mut seen = HashSet::new();
                for shard in plan.shards() {
                    prop_assert!(shard.len() >= 4);
                    for &i in shard {
                        prop_assert!(seen.insert(i));
                    }
                    if let PartitionMode::LabelSkew(k) = mode {
                        let labels: HashSet<usize> = shard.iter().map(|&i| train.labels()[i]).collect();
                        prop_assert!(labels.len() <= k);
                    }
                }
                prop_assert_eq!(seen.len(), train.len());
            }
            Err(e) => {
                prop_assert!(skew, "iid partition failed: {}", e);
                let is_config = matches!(e, Error::Config { .. });
                prop_assert!(is_config);
            }
        }
    }

    #[test]
    fn batches_are_drawn_from_the_shard_without_repeats(
        shard in prop::collection::hash_set(0usize..1000, 1..80),
        b in 1usize..10,
        seed in any::<u64>(),
    ) {
        let shard: Vec<usize> = shard.into_iter().collect();
        let batches = batch_indices(&shard, b, seed);
        prop_assert_eq!(batches.len(), shard.len() / b);
        prop_assert_eq!(&batches, &batch_indices(&shard, b, seed));
        let mut seen = HashSet::new();
        for batch in &batches {
            prop_assert_eq!(batch.len(), b);
            for i in batch {
                prop_assert!(shard.contains(i) && seen.insert(*i));
            }
        }
    }
}

#[test]
fn iid_shards_are_equal() {
    let (train, _) = gen_synthetic(4, 2, 100, 10, 3).unwrap();
    let plan = partition(&train, &Topology::new(10, 2).unwrap(), PartitionMode::Iid, 5, 9).unwrap();
    assert_eq!(plan.sizes(), vec![10; 10]);
}

#[test]
fn label_skew_one_gives_one_label_per_client() {
    let (train, _) = gen_synthetic(4, 2, 200, 10, 3).unwrap();
    let plan = partition(&train, &Topology::new(4, 2).unwrap(), PartitionMode::LabelSkew(1), 5, 9).unwrap();
    for shard in plan.shards() {
        let labels: HashSet<usize> = shard.iter().map(|&i| train.labels()[i]).collect();
        assert_eq!(labels.len(), 1);
    }
}

#[test]
fn drop_last_batching() {
    let shard: Vec<usize> = (0..10).collect();
    let batches = batch_indices(&shard, 3, 1);
    assert_eq!(batches.len(), 3);
    assert_eq!(batches.iter().flatten().collect::<HashSet<_>>().len(), 9);
}
