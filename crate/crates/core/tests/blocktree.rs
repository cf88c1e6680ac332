use std::sync::Arc;

use nsbsim::blocktree::{conformance_check, differential_check, Axiom, BlockTree, TreeKind};
use nsbsim::{valid_chain, Block, BlockHasher, Chain, ChainRules, Hash, PartyId, Payload, Slot};
use proptest::prelude::*;

/// Party `p` wins slot `s` unless `(p + s) % 3 == 0`.
fn rules(width: u8) -> ChainRules {
    let win = |p: PartyId, s: Slot| !(p.0 as u64 + s).is_multiple_of(3);
    ChainRules::new(BlockHasher::new(width).unwrap(), Arc::new(win))
}

/// `(parent index, slot step, baker, payload byte)`; index 0 is genesis.
type Spec = Vec<(usize, Slot, u32, u8)>;

fn build(spec: &Spec, rules: &ChainRules) -> Vec<Block> {
    let mut out = vec![Block::genesis()];
    for &(pi, step, bid, tx) in spec {
        let parent = out[pi % out.len()].clone();
        // Some steps are 0, which gives non-increasing slots and invalid links.
        let slot = parent.slot + step;
        out.push(Block::new(rules.hash(&parent), slot, Payload::new(vec![tx]), PartyId(bid)));
    }
    out
}

/// Longest valid chain over `blocks` with slots `<= sl`, canonical on ties,
/// by exhaustive search from genesis.
fn brute_best(blocks: &[Block], sl: Slot, rules: &ChainRules) -> Chain {
    fn keys(c: &[Block], rules: &ChainRules) -> Vec<(Hash, Block)> {
        c.iter().map(|b| (rules.hash(b), b.clone())).collect()
    }
    fn go(cur: &mut Vec<Block>, blocks: &[Block], sl: Slot, rules: &ChainRules, best: &mut Vec<Block>) {
        let head = cur[0].clone();
        let better = cur.len() > best.len() || (cur.len() == best.len() && keys(cur, rules) < keys(best, rules));
        if better {
            *best = cur.clone();
        }
        let mut seen = std::collections::HashSet::new();
        for b in blocks {
            if b.slot <= sl
                && b.slot > head.slot
                && b.pred == rules.hash(&head)
                && rules.block_valid(b)
                && seen.insert(b.clone())
            {
                cur.insert(0, b.clone());
                go(cur, blocks, sl, rules, best);
                cur.remove(0);
            }
        }
    }
    let mut best = Vec::new();
    go(&mut vec![Block::genesis()], blocks, sl, rules, &mut best);
    Chain::from_blocks(best)
}

fn spec_strategy(max: usize) -> impl Strategy<Value = Spec> {
    prop::collection::vec((0usize..64, 0u64..4, 1u32..4, 0u8..3), 0..max)
}

fn fill(kind: TreeKind, rules: &ChainRules, blocks: &[Block]) -> Box<dyn BlockTree> {
    let mut t = kind.init(rules.clone());
    for b in blocks {
        t.extend(b.clone());
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn best_chain_matches_exhaustive_search(spec in spec_strategy(14), seed in any::<u64>()) {
        let rules = rules(64);
        let mut blocks = build(&spec, &rules);
        let max_slot = blocks.iter().map(|b| b.slot).max().unwrap();
        shuffle(&mut blocks, seed);
        for kind in [TreeKind::Reference, TreeKind::Indexed] {
            let t = fill(kind, &rules, &blocks);
            for sl in 0..=max_slot + 1 {
                let got = t.best_chain(sl);
                prop_assert!(valid_chain(&got, &rules));
                prop_assert!(got.iter().all(|b| b.slot <= sl && t.contains(b)));
                prop_assert_eq!(got, brute_best(&blocks, sl, &rules), "{} at slot {}", kind, sl);
            }
        }
    }

    #[test]
    fn insertion_order_does_not_matter(spec in spec_strategy(40), s1 in any::<u64>(), s2 in any::<u64>()) {
        let rules = rules(64);
        let mut a = build(&spec, &rules);
        let mut b = a.clone();
        let max_slot = a.iter().map(|b| b.slot).max().unwrap();
        shuffle(&mut a, s1);
        shuffle(&mut b, s2);
        let ta = fill(TreeKind::Indexed, &rules, &a);
        let tb = fill(TreeKind::Indexed, &rules, &b);
        let tr = fill(TreeKind::Reference, &rules, &a);
        for sl in 0..=max_slot + 1 {
            prop_assert_eq!(ta.best_chain(sl), tb.best_chain(sl));
            prop_assert_eq!(ta.best_chain(sl), tr.best_chain(sl));
        }
    }

    #[test]
    fn implementations_agree_under_collisions(spec in spec_strategy(40), seed in any::<u64>()) {
        let rules = rules(4);
        let mut blocks = build(&spec, &rules);
        let max_slot = blocks.iter().map(|b| b.slot).max().unwrap();
        shuffle(&mut blocks, seed);
        let ti = fill(TreeKind::Indexed, &rules, &blocks);
        let tr = fill(TreeKind::Reference, &rules, &blocks);
        for sl in 0..=max_slot + 1 {
            let got = ti.best_chain(sl);
            prop_assert!(valid_chain(&got, &rules));
            prop_assert_eq!(got, tr.best_chain(sl));
        }
    }

    #[test]
    fn store_is_a_set(spec in spec_strategy(30)) {
        let rules = rules(64);
        let blocks = build(&spec, &rules);
        for kind in [TreeKind::Reference, TreeKind::Indexed] {
            let mut t = kind.init(rules.clone());
            prop_assert_eq!(t.all_blocks(), vec![Block::genesis()]);
            let mut distinct = std::collections::BTreeSet::new();
            distinct.insert(Block::genesis());
            for b in &blocks {
                prop_assert_eq!(t.extend(b.clone()), distinct.insert(b.clone()));
                prop_assert!(!t.extend(b.clone()));
            }
            let mut all = t.all_blocks();
            all.sort();
            prop_assert_eq!(all, distinct.iter().cloned().collect::<Vec<_>>());
            prop_assert_eq!(t.len(), distinct.len());
        }
    }
}

fn shuffle(v: &mut [Block], seed: u64) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
}

#[test]
fn empty_tree_yields_genesis() {
    for kind in [TreeKind::Reference, TreeKind::Indexed, TreeKind::Broken] {
        let t = kind.init(rules(64));
        assert_eq!(t.best_chain(0), Chain::genesis());
        assert_eq!(t.best_chain(100), Chain::genesis());
        assert_eq!(t.len(), 1);
    }
}

#[test]
fn conformance_passes_for_correct_trees() {
    for seed in 0..10 {
        for kind in [TreeKind::Reference, TreeKind::Indexed] {
            let r = conformance_check(kind, seed, 120);
            assert!(r.passed(), "{kind} seed {seed}: {:?}", r.counterexample);
            assert!(r.brute_force_queries > 0);
        }
        let d = differential_check(TreeKind::Indexed, TreeKind::Reference, seed, 300);
        assert!(d.passed(), "seed {seed}: {:?}", d.counterexample);
    }
}

#[test]
fn conformance_catches_slot_filter_bug() {
    let r = conformance_check(TreeKind::Broken, 1, 200);
    let cx = r.counterexample.expect("broken tree passed");
    assert_eq!(cx.axiom, Axiom::SelfContained);
    assert!(!cx.stream.is_empty());
    let d = differential_check(TreeKind::Broken, TreeKind::Reference, 1, 200);
    assert!(!d.passed());
}

#[test]
fn tree_kind_names_round_trip() {
    for kind in [TreeKind::Reference, TreeKind::Indexed, TreeKind::Broken] {
        assert_eq!(kind.name().parse::<TreeKind>().unwrap(), kind);
    }
    assert!("fast".parse::<TreeKind>().is_err());
}
