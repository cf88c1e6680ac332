use std::collections::HashMap;

use super::{Evidence, Verdict, Witness};
use crate::model::{Block, BlockHasher, Hash};
use crate::trace::Trace;

/// Holds iff no two distinct history blocks (genesis included) share a hash.
pub fn check_collision_free(trace: &Trace) -> Verdict {
    match &trace.collision {
        None => Verdict::holds(Evidence::Direct),
        Some(c) => Verdict::violated(Witness::Collision(c.clone())),
    }
}

/// Holds iff every adversarial emission of an honest-bid block repeated a
/// block already in the history at emission time.
pub fn check_forging_free(trace: &Trace) -> Verdict {
    match &trace.forging {
        None => Verdict::holds(Evidence::Direct),
        Some(f) => Verdict::violated(Witness::Forging(f.clone())),
    }
}

/// Offline collision search: all pairs of distinct blocks with equal hashes.
pub fn scan_collisions<'a>(
    blocks: impl IntoIterator<Item = &'a Block>,
    hasher: BlockHasher,
) -> Vec<(Hash, Block, Block)> {
    let mut groups: HashMap<Hash, Vec<&Block>> = HashMap::new();
    for b in blocks {
        let g = groups.entry(hasher.hash_block(b)).or_default();
        if !g.contains(&b) {
            g.push(b);
        }
    }
    let mut out = Vec::new();
    for (h, g) in groups {
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                out.push((h, g[i].clone(), g[j].clone()));
            }
        }
    }
    out.sort_by_key(|a| a.0);
    out
}
