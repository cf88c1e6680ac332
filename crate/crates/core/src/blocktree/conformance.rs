//! Randomized conformance harness for block-tree implementations.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{canonical_less, TreeKind};
use crate::lottery::Lottery;
use crate::model::{valid_chain, Block, BlockHasher, Chain, ChainRules, Hash, PartyId, Payload, Slot};

/// Pools at or below this size are checked against full chain enumeration.
pub const BRUTE_FORCE_LIMIT: usize = 25;

const PARTIES: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum StreamEvent {
    Extend { block: Block },
    Query { slot: Slot },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axiom {
    Instantiated,
    Extendable,
    Valid,
    Optimal,
    SelfContained,
    /// Equal to the chain picked by the canonical tie-break.
    Canonical,
    /// Disagrees with the comparison implementation.
    Differential,
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub axiom: Axiom,
    pub detail: String,
    /// Every event up to and including the failing one.
    pub stream: Vec<StreamEvent>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConformanceReport {
    pub implementation: String,
    pub compared_with: Option<String>,
    pub seed: u64,
    pub n_blocks: usize,
    pub extensions: usize,
    pub queries: usize,
    pub brute_force_queries: usize,
    pub counterexample: Option<Counterexample>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Lottery shared by every generated stream: four parties, each winning a
/// slot with probability 0.7.
pub fn conformance_rules(seed: u64) -> ChainRules {
    let parties: Vec<PartyId> = (1..=PARTIES).map(PartyId).collect();
    let q: BTreeMap<PartyId, f64> = parties.iter().map(|&p| (p, 0.7)).collect();
    let lottery = Lottery::bernoulli(parties, q, seed ^ 0x5eed).expect("static lottery");
    ChainRules::new(BlockHasher::default(), Arc::new(lottery))
}

/// Runs `kind` over a random stream of `n_blocks` insertions, checking the
/// five tree axioms after every step.
pub fn conformance_check(kind: TreeKind, seed: u64, n_blocks: usize) -> ConformanceReport {
    run(kind, None, seed, n_blocks)
}

/// As [`conformance_check`], and additionally requires `kind` and `other` to
/// return identical chains on every query.
pub fn differential_check(kind: TreeKind, other: TreeKind, seed: u64, n_blocks: usize) -> ConformanceReport {
    run(kind, Some(other), seed, n_blocks)
}

struct StreamGen {
    rng: ChaCha8Rng,
    rules: ChainRules,
    generated: Vec<Block>,
    emitted: Vec<Block>,
    delayed: Vec<(usize, Block)>,
    max_slot: Slot,
    step: usize,
}

impl StreamGen {
    fn winner_at(&mut self, slot: Slot) -> PartyId {
        let winners: Vec<PartyId> =
            (1..=PARTIES).map(PartyId).filter(|&p| self.rules.winner.is_winner(p, slot)).collect();
        if winners.is_empty() {
            PartyId(self.rng.random_range(1..=PARTIES))
        } else {
            winners[self.rng.random_range(0..winners.len())]
        }
    }

    fn loser_at(&mut self, slot: Slot) -> PartyId {
        (1..=PARTIES).map(PartyId).find(|&p| !self.rules.winner.is_winner(p, slot)).unwrap_or(PartyId(PARTIES + 1))
    }

    fn child_of(&mut self, parent: &Block, slot: Slot, bid: PartyId) -> Block {
        let tag: u8 = self.rng.random_range(0..4);
        let txs = if tag == 0 { Payload::empty() } else { Payload::new(vec![tag]) };
        let b = Block::new(self.rules.hash(parent), slot, txs, bid);
        self.generated.push(b.clone());
        b
    }

    fn random_parent(&mut self) -> Block {
        let i = self.rng.random_range(0..self.generated.len());
        self.generated[i].clone()
    }

    fn linked(&mut self) -> Block {
        let parent = self.random_parent();
        let slot = parent.slot + self.rng.random_range(1..=3);
        let bid = self.winner_at(slot);
        self.child_of(&parent, slot, bid)
    }

    fn next(&mut self) -> Block {
        self.step += 1;
        if let Some(pos) = self.delayed.iter().position(|(due, _)| *due <= self.step) {
            return self.delayed.remove(pos).1;
        }

        match self.rng.random_range(0..100) {
            0..=44 => self.linked(),
            45..=54 => {
                let parent = self.linked();
                let slot = parent.slot + 1;
                let bid = self.winner_at(slot);
                let child = self.child_of(&parent, slot, bid);
                let due = self.step + self.rng.random_range(1..=6);
                self.delayed.push((due, parent));
                child
            }
            55..=63 => {
                let slot = self.rng.random_range(1..=self.max_slot + 3);
                let bid = self.winner_at(slot);
                let b = Block::new(Hash(self.rng.random()), slot, Payload::empty(), bid);
                self.generated.push(b.clone());
                b
            }
            64..=71 => {
                let parent = self.random_parent();
                let slot = self.max_slot.max(parent.slot) + self.rng.random_range(20..=40);
                let bid = self.winner_at(slot);
                self.child_of(&parent, slot, bid)
            }
            72..=81 if !self.emitted.is_empty() => self.emitted[self.rng.random_range(0..self.emitted.len())].clone(),
            82..=91 => {
                let parent = self.random_parent();
                let slot = parent.slot + self.rng.random_range(1..=2);
                let bid = self.loser_at(slot);
                self.child_of(&parent, slot, bid)
            }
            _ => self.linked(),
        }
    }
}

/// Longest valid chain over `pool ∩ {slot <= sl}` by enumerating every valid
/// chain, built by prepending one block at a time. Returns the canonical one.
pub(crate) fn brute_force_best(pool: &[Block], sl: Slot, rules: &ChainRules) -> Chain {
    fn go(c: &Chain, pool: &[&Block], rules: &ChainRules, best: &mut Chain) {
        let better = c.len() > best.len()
            || (c.len() == best.len() && {
                let a: Vec<&Block> = c.iter().collect();
                let b: Vec<&Block> = best.iter().collect();
                canonical_less(&a, &b, rules)
            });
        if better {
            *best = c.clone();
        }
        for &b in pool {
            let next = c.cons(b.clone());
            if valid_chain(&next, rules) {
                go(&next, pool, rules, best);
            }
        }
    }
    let mut seen = HashSet::new();
    let candidates: Vec<&Block> = pool.iter().filter(|b| b.slot <= sl && !b.is_genesis() && seen.insert(*b)).collect();
    let mut best = Chain::genesis();
    go(&Chain::genesis(), &candidates, rules, &mut best);
    best
}

/// Longest valid chain length by dynamic programming over slot order.
pub(crate) fn longest_valid_len(pool: &[Block], sl: Slot, rules: &ChainRules) -> usize {
    let mut blocks: Vec<&Block> = pool.iter().filter(|b| b.slot <= sl).collect();
    blocks.sort_by_key(|b| b.slot);
    let hashes: Vec<Hash> = blocks.iter().map(|b| rules.hash(b)).collect();
    let mut dp = vec![0usize; blocks.len()];
    for i in 0..blocks.len() {
        let b = blocks[i];
        if b.is_genesis() {
            dp[i] = 1;
            continue;
        }
        if !rules.block_valid(b) {
            continue;
        }
        let best = (0..i).filter(|&j| dp[j] > 0 && hashes[j] == b.pred && blocks[j].slot < b.slot).map(|j| dp[j]).max();
        if let Some(d) = best {
            dp[i] = d + 1;
        }
    }
    dp.into_iter().max().unwrap_or(0).max(1)
}

fn run(kind: TreeKind, other: Option<TreeKind>, seed: u64, n_blocks: usize) -> ConformanceReport {
    let rules = conformance_rules(seed);
    let mut tree = kind.init(rules.clone());
    let mut twin = other.map(|k| k.init(rules.clone()));
    let mut report = ConformanceReport {
        implementation: kind.name().to_string(),
        compared_with: other.map(|k| k.name().to_string()),
        seed,
        n_blocks,
        extensions: 0,
        queries: 0,
        brute_force_queries: 0,
        counterexample: None,
    };
    let mut stream: Vec<StreamEvent> = Vec::new();
    let fail = |axiom, detail: String, stream: &Vec<StreamEvent>| {
        Some(Counterexample { axiom, detail, stream: stream.clone() })
    };

    let g = Block::genesis();
    let members: HashSet<Block> = tree.all_blocks().into_iter().collect();
    if members != HashSet::from([g.clone()]) || tree.best_chain(0) != Chain::genesis() {
        report.counterexample = fail(Axiom::Instantiated, "initial tree is not {genesis}".into(), &stream);
        return report;
    }

    let mut gen = StreamGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        rules: rules.clone(),
        generated: vec![g.clone()],
        emitted: Vec::new(),
        delayed: Vec::new(),
        max_slot: 0,
        step: 0,
    };
    let mut pool: Vec<Block> = vec![g];
    let mut oracle: HashSet<Block> = pool.iter().cloned().collect();

    for _ in 0..n_blocks {
        let b = gen.next();
        gen.max_slot = gen.max_slot.max(b.slot.min(gen.max_slot + 3));
        gen.emitted.push(b.clone());
        stream.push(StreamEvent::Extend { block: b.clone() });
        tree.extend(b.clone());
        if let Some(t) = twin.as_mut() {
            t.extend(b.clone());
        }
        report.extensions += 1;
        if oracle.insert(b.clone()) {
            pool.push(b);
        }

        let got: HashSet<Block> = tree.all_blocks().into_iter().collect();
        if got != oracle || tree.len() != oracle.len() {
            report.counterexample = fail(
                Axiom::Extendable,
                format!("member set has {} blocks, expected {}", got.len(), oracle.len()),
                &stream,
            );
            return report;
        }

        let n_queries = gen.rng.random_range(1..=2);
        for _ in 0..n_queries {
            let sl = gen.rng.random_range(0..=gen.max_slot + 5);
            stream.push(StreamEvent::Query { slot: sl });
            report.queries += 1;
            if let Some((axiom, detail)) = check_query(&*tree, twin.as_deref(), &pool, &oracle, sl, &rules, &mut report)
            {
                report.counterexample = fail(axiom, detail, &stream);
                return report;
            }
        }
    }
    report
}

fn check_query(
    tree: &dyn super::BlockTree,
    twin: Option<&dyn super::BlockTree>,
    pool: &[Block],
    oracle: &HashSet<Block>,
    sl: Slot,
    rules: &ChainRules,
    report: &mut ConformanceReport,
) -> Option<(Axiom, String)> {
    let c = tree.best_chain(sl);
    if !valid_chain(&c, rules) {
        return Some((Axiom::Valid, format!("best_chain({sl}) is not a valid chain: {c:?}")));
    }
    if let Some(b) = c.iter().find(|b| b.slot > sl || !oracle.contains(b)) {
        return Some((
            Axiom::SelfContained,
            format!("best_chain({sl}) contains block at slot {} outside the filtered pool", b.slot),
        ));
    }
    if pool.len() <= BRUTE_FORCE_LIMIT {
        report.brute_force_queries += 1;
        let best = brute_force_best(pool, sl, rules);
        if c.len() < best.len() {
            return Some((
                Axiom::Optimal,
                format!("best_chain({sl}) has length {}, enumeration found {}", c.len(), best.len()),
            ));
        }
        if c != best {
            return Some((Axiom::Canonical, format!("best_chain({sl}) differs from canonical {best:?}")));
        }
    } else {
        let best = longest_valid_len(pool, sl, rules);
        if c.len() < best {
            return Some((
                Axiom::Optimal,
                format!("best_chain({sl}) has length {}, longest valid chain is {best}", c.len()),
            ));
        }
    }
    if let Some(t) = twin {
        let d = t.best_chain(sl);
        if d != c {
            return Some((
                Axiom::Differential,
                format!("best_chain({sl}): lengths {} vs {}; chains {c:?} vs {d:?}", c.len(), d.len()),
            ));
        }
    }
    None
}
