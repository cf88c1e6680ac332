use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use super::BlockTree;
use crate::model::{Block, Chain, ChainRules, Hash, Slot};

struct Node {
    block: Block,
    hash: Hash,
    valid: bool,
    /// Length of the best valid chain headed by this block; 0 if none.
    depth: usize,
    parent: Option<usize>,
    chain: Chain,
}

/// Incremental tree: each linked block caches its best valid depth and its
/// canonical chain as a shared persistent list, so queries avoid rebuilding.
pub struct IndexedTree {
    rules: ChainRules,
    nodes: Vec<Node>,
    index: HashMap<Block, usize>,
    by_hash: HashMap<Hash, Vec<usize>>,
    children: HashMap<Hash, Vec<usize>>,
    ranked: BTreeSet<(Reverse<usize>, Hash, usize)>,
    /// Valid blocks not yet connected to genesis.
    pending: HashSet<usize>,
}

impl IndexedTree {
    pub fn new(rules: ChainRules) -> Self {
        let g = Block::genesis();
        let h = rules.hash(&g);
        let mut t = IndexedTree {
            rules,
            nodes: Vec::new(),
            index: HashMap::new(),
            by_hash: HashMap::new(),
            children: HashMap::new(),
            ranked: BTreeSet::new(),
            pending: HashSet::new(),
        };
        t.nodes.push(Node { block: g.clone(), hash: h, valid: true, depth: 1, parent: None, chain: Chain::genesis() });
        t.index.insert(g, 0);
        t.by_hash.entry(h).or_default().push(0);
        t.ranked.insert((Reverse(1), h, 0));
        t
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Depth of `b` in this tree, if present (0 when not linked to genesis).
    pub fn depth_of(&self, b: &Block) -> Option<usize> {
        self.index.get(b).map(|&i| self.nodes[i].depth)
    }

    fn best_parent(&self, i: usize) -> (usize, Option<usize>) {
        let n = &self.nodes[i];
        if !n.valid || n.block.is_genesis() {
            return (n.depth, n.parent);
        }
        let mut best: Option<usize> = None;
        for &j in self.by_hash.get(&n.block.pred).into_iter().flatten() {
            let p = &self.nodes[j];
            if p.depth == 0 || p.block.slot >= n.block.slot {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(k) => {
                    let q = &self.nodes[k];
                    if p.depth > q.depth || (p.depth == q.depth && p.block < q.block) {
                        Some(j)
                    } else {
                        Some(k)
                    }
                }
            };
        }
        match best {
            Some(j) => (self.nodes[j].depth + 1, Some(j)),
            None => (0, None),
        }
    }

    fn set_link(&mut self, i: usize, depth: usize, parent: Option<usize>) {
        let old = (Reverse(self.nodes[i].depth), self.nodes[i].hash, i);
        if self.nodes[i].depth > 0 {
            self.ranked.remove(&old);
        }
        let chain = match parent {
            Some(j) => self.nodes[j].chain.cons(self.nodes[i].block.clone()),
            None => Chain::empty(),
        };
        let n = &mut self.nodes[i];
        n.depth = depth;
        n.parent = parent;
        n.chain = chain;
        if depth > 0 {
            self.ranked.insert((Reverse(depth), n.hash, i));
            self.pending.remove(&i);
        } else if n.valid {
            self.pending.insert(i);
        }
    }

    fn propagate(&mut self, start: usize) {
        let mut work = vec![start];
        while let Some(x) = work.pop() {
            let h = self.nodes[x].hash;
            let kids: Vec<usize> = self.children.get(&h).cloned().unwrap_or_default();
            for y in kids {
                let (d, p) = self.best_parent(y);
                let n = &self.nodes[y];
                if d != n.depth || p != n.parent || p == Some(x) {
                    self.set_link(y, d, p);
                    work.push(y);
                }
            }
        }
    }
}

impl BlockTree for IndexedTree {
    fn extend(&mut self, b: Block) -> bool {
        if self.index.contains_key(&b) {
            return false;
        }
        let i = self.nodes.len();
        let hash = self.rules.hash(&b);
        let valid = self.rules.block_valid(&b);
        self.index.insert(b.clone(), i);
        self.by_hash.entry(hash).or_default().push(i);
        self.children.entry(b.pred).or_default().push(i);
        self.nodes.push(Node { block: b, hash, valid, depth: 0, parent: None, chain: Chain::empty() });
        let (d, p) = self.best_parent(i);
        self.set_link(i, d, p);
        // Children may have arrived first; under a hash collision they may
        // also switch parents.
        if d > 0 {
            self.propagate(i);
        }
        true
    }

    fn all_blocks(&self) -> Vec<Block> {
        self.nodes.iter().map(|n| n.block.clone()).collect()
    }

    fn best_chain(&self, sl: Slot) -> Chain {
        let mut found: Option<(usize, Hash, usize)> = None;
        for &(Reverse(d), h, i) in &self.ranked {
            if let Some((bd, bh, bi)) = found {
                if d != bd || h != bh {
                    break;
                }
                if self.nodes[i].block.slot <= sl && self.nodes[i].block < self.nodes[bi].block {
                    found = Some((bd, bh, i));
                }
                continue;
            }
            if self.nodes[i].block.slot <= sl {
                found = Some((d, h, i));
            }
        }
        match found {
            Some((_, _, i)) => self.nodes[i].chain.clone(),
            None => Chain::genesis(),
        }
    }

    fn contains(&self, b: &Block) -> bool {
        self.index.contains_key(b)
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }
}
