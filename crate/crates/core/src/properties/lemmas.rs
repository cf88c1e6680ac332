use std::collections::HashMap;

use super::{monitors_clean, Evidence, Verdict, Witness};
use crate::model::{Block, BlockHasher, Hash};
use crate::trace::{BlockId, Phase, Stamp, Trace};

/// For every honest pair, whatever `p1` holds at the Ready point of a slot,
/// `p2` holds by the Delivered point of the same slot.
pub fn check_knowledge_propagation(trace: &Trace) -> Verdict {
    let first: Vec<HashMap<BlockId, Stamp>> = trace
        .stamps
        .iter()
        .map(|ss| {
            let mut m = HashMap::new();
            for &(b, s) in ss {
                m.entry(b).or_insert(s);
            }
            m
        })
        .collect();
    for (i, held) in first.iter().enumerate() {
        let mut blocks: Vec<(&BlockId, &Stamp)> = held.iter().collect();
        blocks.sort();
        for (j, other) in first.iter().enumerate() {
            if i == j {
                continue;
            }
            for &(&b, &s) in &blocks {
                let sl = s.ready_slot();
                if sl > trace.horizon {
                    continue;
                }
                let deadline = Stamp { slot: sl, phase: Phase::Delivered };
                if other.get(&b).is_none_or(|&t| t > deadline) {
                    return Verdict::violated(Witness::Knowledge {
                        block: trace.blocks[b as usize].clone(),
                        p1: trace.honest[i],
                        p2: trace.honest[j],
                        slot: sl,
                    });
                }
            }
        }
    }
    Verdict::holds(Evidence::Direct)
}

/// `pos(b, pool)` for every pool block, memoized along predecessor walks.
pub(crate) fn all_positions(pool: &[Block], hasher: BlockHasher) -> Vec<usize> {
    let mut by_hash: HashMap<Hash, usize> = HashMap::new();
    for (i, b) in pool.iter().enumerate() {
        by_hash.entry(hasher.hash_block(b)).or_insert(i);
    }
    const UNSEEN: usize = usize::MAX;
    let mut pos = vec![UNSEEN; pool.len()];
    for start in 0..pool.len() {
        let mut walk = Vec::new();
        let mut on_walk = std::collections::HashSet::new();
        let mut cur = Some(start);
        let base = loop {
            let Some(i) = cur else { break 0 };
            if pos[i] != UNSEEN {
                break pos[i];
            }
            if !on_walk.insert(i) {
                // Cycle: nothing on this walk reaches genesis.
                for &w in &walk {
                    pos[w] = 0;
                }
                walk.clear();
                break 0;
            }
            walk.push(i);
            if pool[i].is_genesis() {
                pos[i] = 1;
                walk.pop();
                break 1;
            }
            cur = by_hash.get(&pool[i].pred).copied();
        };
        let mut p = base;
        for &w in walk.iter().rev() {
            p = if p == 0 { 0 } else { p + 1 };
            pos[w] = p;
        }
    }
    pos
}

/// Over the final history, no honest block shares its position with a block
/// baked in a super slot.
pub fn check_super_positions(trace: &Trace) -> Verdict {
    if let Err(reason) = monitors_clean(trace) {
        return Verdict::PreconditionFailed { reason };
    }
    let pool = &trace.blocks;
    let pos = all_positions(pool, trace.hasher);
    let mut by_pos: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, b) in pool.iter().enumerate() {
        if trace.is_honest_block(b) {
            by_pos.entry(pos[i]).or_default().push(i);
        }
    }
    for (i, b) in pool.iter().enumerate() {
        if b.is_genesis() || !trace.is_honest_block(b) || !trace.slot_class(b.slot).super_ {
            continue;
        }
        if let Some(&j) = by_pos[&pos[i]].iter().find(|&&j| j != i) {
            return Verdict::violated(Witness::SuperPosition {
                super_block: b.clone(),
                other: pool[j].clone(),
                position: pos[i],
            });
        }
    }
    Verdict::holds(Evidence::Direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{pos, PartyId, Payload};

    #[test]
    fn memoized_positions_match_literal_pos() {
        let h = BlockHasher::default();
        let g = Block::genesis();
        let b1 = Block::new(h.hash_block(&g), 1, Payload::empty(), PartyId(1));
        let b2 = Block::new(h.hash_block(&b1), 2, Payload::empty(), PartyId(1));
        let b3 = Block::new(h.hash_block(&g), 3, Payload::empty(), PartyId(2));
        let orphan = Block::new(Hash(42), 4, Payload::empty(), PartyId(2));
        let on_orphan = Block::new(h.hash_block(&orphan), 5, Payload::empty(), PartyId(2));
        let pool = vec![on_orphan, b2, g, orphan, b1, b3];
        let fast = all_positions(&pool, h);
        for (i, b) in pool.iter().enumerate() {
            assert_eq!(fast[i], pos(b, &pool, h), "block {i}");
        }
    }
}
