//! Polar coding over the bit-planes of the lattice.

pub mod codec;
pub mod construct;
pub mod sc;
pub mod shared;
pub mod transform;

pub use codec::{
    choose_ell, covering_encode, lattice_point, multilevel_pass, multilevel_posteriors,
    packing_decode, payload_len, PartModel,
};
pub use construct::{
    classify, construct_part, construct_sets, estimate_all, estimate_bhattacharyya,
    part_designs, CodeSets, Conditioning, ConstructionConfig, GenieSource, IndexClass,
    PartCode, PartDesign, ZEstimates,
};
pub use sc::{sc_pass, BitRule, ScEngine};
pub use shared::{shared_frozen_bit, SharedStream};
pub use transform::{transform, PolarTransform};
