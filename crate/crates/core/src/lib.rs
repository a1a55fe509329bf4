pub mod audio;
pub mod config;
pub mod forge;
pub mod layout;
pub mod model;
pub mod numerics;
pub mod persistence;
pub mod pipeline;
pub mod registry;
pub mod sequence;
pub mod shard;
pub mod synth;
pub mod tokenizer;
pub mod trainer;
mod util;
