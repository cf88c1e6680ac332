//! Per-party block stores and the longest-valid-chain selection rule.
//!
//! Every implementation satisfies, for every reachable tree `t`:
//! - `all_blocks(tree_init())` is `{genesis}`;
//! - `all_blocks(extend(t, b))` is `all_blocks(t) ∪ {b}`;
//! - `best_chain(sl, t)` is a valid chain, drawn from blocks of `t` with slot `<= sl`,
//!   and no such valid chain is longer.
//!
//! Among equal-length candidates the canonical chain is the one whose
//! head-first sequence of `(hash, block)` keys is lexicographically smallest.

mod conformance;
mod indexed;
mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conformance::{
    conformance_check, conformance_rules, differential_check, Axiom, ConformanceReport, Counterexample, StreamEvent,
    BRUTE_FORCE_LIMIT,
};
pub use indexed::IndexedTree;
pub use reference::ReferenceTree;

use crate::model::{Block, Chain, ChainRules, Slot};

pub trait BlockTree: Send {
    /// Inserts `b`; returns whether it was new.
    fn extend(&mut self, b: Block) -> bool;
    fn all_blocks(&self) -> Vec<Block>;
    fn best_chain(&self, sl: Slot) -> Chain;
    fn contains(&self, b: &Block) -> bool;
    /// Number of distinct members, genesis included.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown tree implementation {0:?}; expected \"reference\" or \"indexed\"")]
pub struct UnknownTreeKind(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Reference,
    Indexed,
    /// Negative control: ignores the slot filter in `best_chain`.
    Broken,
}

impl TreeKind {
    pub fn init(self, rules: ChainRules) -> Box<dyn BlockTree> {
        match self {
            TreeKind::Reference => Box::new(ReferenceTree::new(rules)),
            TreeKind::Indexed => Box::new(IndexedTree::new(rules)),
            TreeKind::Broken => Box::new(BrokenTree(IndexedTree::new(rules))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TreeKind::Reference => "reference",
            TreeKind::Indexed => "indexed",
            TreeKind::Broken => "broken",
        }
    }
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TreeKind {
    type Err = UnknownTreeKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(TreeKind::Reference),
            "indexed" => Ok(TreeKind::Indexed),
            "broken" => Ok(TreeKind::Broken),
            other => Err(UnknownTreeKind(other.to_string())),
        }
    }
}

struct BrokenTree(IndexedTree);

impl BlockTree for BrokenTree {
    fn extend(&mut self, b: Block) -> bool {
        self.0.extend(b)
    }

    fn all_blocks(&self) -> Vec<Block> {
        self.0.all_blocks()
    }

    fn best_chain(&self, _sl: Slot) -> Chain {
        self.0.best_chain(Slot::MAX)
    }

    fn contains(&self, b: &Block) -> bool {
        self.0.contains(b)
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

/// Canonical comparison of two equal-length head-first chains.
pub(crate) fn canonical_less(a: &[&Block], b: &[&Block], rules: &ChainRules) -> bool {
    for (x, y) in a.iter().zip(b) {
        let kx = (rules.hash(x), *x);
        let ky = (rules.hash(y), *y);
        if kx != ky {
            return kx < ky;
        }
    }
    false
}
