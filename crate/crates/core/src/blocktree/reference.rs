use std::collections::{HashMap, HashSet};

use super::{canonical_less, BlockTree};
use crate::model::{Block, Chain, ChainRules, Hash, Slot};

/// Keeps every block and enumerates all valid chains on each query.
#[derive(Clone, Debug)]
pub struct ReferenceTree {
    rules: ChainRules,
    pool: Vec<Block>,
    members: HashSet<Block>,
}

impl ReferenceTree {
    pub fn new(rules: ChainRules) -> Self {
        let g = Block::genesis();
        ReferenceTree { rules, pool: vec![g.clone()], members: HashSet::from([g]) }
    }
}

impl BlockTree for ReferenceTree {
    fn extend(&mut self, b: Block) -> bool {
        if self.members.insert(b.clone()) {
            self.pool.push(b);
            true
        } else {
            false
        }
    }

    fn all_blocks(&self) -> Vec<Block> {
        self.pool.clone()
    }

    fn best_chain(&self, sl: Slot) -> Chain {
        let rules = &self.rules;
        let mut children: HashMap<Hash, Vec<&Block>> = HashMap::new();
        for b in &self.pool {
            if b.slot <= sl && !b.is_genesis() && rules.block_valid(b) {
                children.entry(b.pred).or_default().push(b);
            }
        }

        // Depth-first walk over every valid chain rooted at genesis. Slots
        // strictly increase along a path, so the walk terminates.
        let genesis = Block::genesis();
        let mut best: Vec<&Block> = vec![&genesis];
        let mut path: Vec<&Block> = Vec::new();
        let mut stack: Vec<(usize, &Block)> = vec![(0, &genesis)];
        while let Some((depth, b)) = stack.pop() {
            path.truncate(depth);
            path.push(b);
            let better = path.len() > best.len()
                || (path.len() == best.len() && {
                    let cand: Vec<&Block> = path.iter().rev().copied().collect();
                    let cur: Vec<&Block> = best.iter().rev().copied().collect();
                    canonical_less(&cand, &cur, rules)
                });
            if better {
                best = path.clone();
            }
            if let Some(kids) = children.get(&rules.hash(b)) {
                for &c in kids {
                    if c.slot > b.slot {
                        stack.push((depth + 1, c));
                    }
                }
            }
        }
        Chain::from_blocks(best.into_iter().rev().cloned())
    }

    fn contains(&self, b: &Block) -> bool {
        self.members.contains(b)
    }

    fn len(&self) -> usize {
        self.pool.len()
    }
}
