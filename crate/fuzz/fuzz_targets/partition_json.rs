//! Fuzz partition JSON parsing.
//!
//! Accepted partitions have compact, nonempty clusters, round-trip through
//! JSON and through the partition-matrix form.
#![no_main]
use libfuzzer_sys::fuzz_target;
use model_features::abstraction::{matrix_to_partition, partition_to_matrix, Partition};

fuzz_target!(|data: &[u8]| {
    let Ok(p) = serde_json::from_slice::<Partition>(data) else { return };
    assert!(p.cluster_sizes().iter().all(|&n| n > 0));
    assert_eq!(p.cluster_sizes().iter().sum::<usize>(), p.num_states());
    let json = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<Partition>(&json).unwrap(), p);
    if p.num_states() * p.num_clusters() <= 1 << 16 {
        let back = matrix_to_partition(partition_to_matrix(&p).matrix()).unwrap();
        assert!(back.same_up_to_relabeling(&p));
    }
});
