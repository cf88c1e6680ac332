//! Deterministic simulator for proof-of-stake longest-chain protocols in a
//! lock-step synchronous network, with runtime oracles for chain growth,
//! chain quality and common prefix, and the matching concentration bounds.

pub mod adversary;
pub mod batch;
pub mod blocktree;
pub mod bounds;
pub mod config;
pub mod lottery;
pub mod model;
pub mod party;
pub mod properties;
pub mod trace;
pub mod world;

pub use model::{
    cfb, is_prefix, pos, prune, valid_chain, Block, BlockHasher, Chain, ChainRules, Hash, PartyId, Payload, Slot,
};
