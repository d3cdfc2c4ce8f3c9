//! Environment generators and the grid-world and transfer protocols.

mod gridworld;
mod planted;
mod transfer;

pub use gridworld::{make_grid_world, GridAction, GridWorldSpec};
pub use planted::{
    lift_abstract_mdp, make_planted_mdp, perturb_partition, sample_abstract_mdp, PlantedMdp,
    PlantedMdpSpec,
};
pub use transfer::{
    run_source_training, run_transfer, SourceRun, TaskResult, TransferResult, TRANSFER_CSV_HEADER,
};

/// Derives an independent 64-bit seed for `(base, stream, index)` with the
/// splitmix64 finalizer.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
