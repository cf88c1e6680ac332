//! Honest local state with the receive and bake steps.

use serde::{Deserialize, Serialize};

use crate::blocktree::{BlockTree, TreeKind};
use crate::model::{Block, ChainRules, PartyId, Payload, Slot};

/// Single message variant: a flooded block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Message {
    BlockMsg(Block),
}

impl Message {
    pub fn block(&self) -> &Block {
        match self {
            Message::BlockMsg(b) => b,
        }
    }
}

/// Payload chosen by an honest baker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TxSelector {
    #[default]
    Empty,
    /// `slot` (u64 LE) followed by `party` (u32 LE).
    SlotTagged,
}

impl TxSelector {
    pub fn select(self, sl: Slot, p: PartyId) -> Payload {
        match self {
            TxSelector::Empty => Payload::empty(),
            TxSelector::SlotTagged => slot_tag(sl, p),
        }
    }
}

pub fn slot_tag(sl: Slot, p: PartyId) -> Payload {
    let mut v = Vec::with_capacity(12);
    v.extend_from_slice(&sl.to_le_bytes());
    v.extend_from_slice(&p.0.to_le_bytes());
    Payload::new(v)
}

pub struct LocalState {
    pub id: PartyId,
    pub tree_kind: TreeKind,
    pub tree: Box<dyn BlockTree>,
    rules: ChainRules,
    /// Drop blocks without a lottery win on receipt. Off by default: blocks
    /// are inserted unconditionally and validity is enforced in `best_chain`.
    pub filter_invalid: bool,
}

impl LocalState {
    pub fn new(id: PartyId, tree_kind: TreeKind, rules: ChainRules) -> Self {
        LocalState { id, tree_kind, tree: tree_kind.init(rules.clone()), rules, filter_invalid: false }
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    /// Extends the tree with every block in order. Returns the newly inserted ones.
    pub fn honest_rcv(&mut self, msgs: &[Message], _sl: Slot) -> Vec<Block> {
        let mut fresh = Vec::new();
        for m in msgs {
            let b = m.block();
            if self.filter_invalid && !self.rules.block_valid(b) {
                continue;
            }
            if self.tree.extend(b.clone()) {
                fresh.push(b.clone());
            }
        }
        fresh
    }

    /// Bakes on `best_chain(sl - 1)` when `id` wins `sl`; the new block is
    /// added to the own tree and returned for flooding.
    pub fn honest_bake(&mut self, sl: Slot, txs: Payload) -> Option<Message> {
        if sl == 0 || !self.rules.winner.is_winner(self.id, sl) {
            return None;
        }
        let c = self.tree.best_chain(sl - 1);
        let head = c.head().expect("best chain always ends in genesis");
        let b = Block::new(self.rules.hash(head), sl, txs, self.id);
        self.tree.extend(b.clone());
        Some(Message::BlockMsg(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lottery::Lottery;
    use crate::model::{valid_chain, BlockHasher, Chain};
    use std::sync::Arc;

    fn state(wins: &[Slot]) -> LocalState {
        let l = Lottery::scripted([PartyId(1)], wins.iter().map(|&s| (PartyId(1), s))).unwrap();
        let rules = ChainRules::new(BlockHasher::default(), Arc::new(l));
        LocalState::new(PartyId(1), TreeKind::Indexed, rules)
    }

    #[test]
    fn rcv_empty_is_noop() {
        let mut st = state(&[]);
        assert!(st.honest_rcv(&[], 3).is_empty());
        assert_eq!(st.tree.len(), 1);
    }

    #[test]
    fn duplicate_delivery_is_idempotent() {
        let mut st = state(&[]);
        let b = Block::new(BlockHasher::default().hash_block(&Block::genesis()), 1, Payload::empty(), PartyId(2));
        let m = Message::BlockMsg(b.clone());
        assert_eq!(st.honest_rcv(std::slice::from_ref(&m), 1), vec![b]);
        assert!(st.honest_rcv(&[m.clone(), m], 2).is_empty());
        assert_eq!(st.tree.len(), 2);
    }

    #[test]
    fn bake_examples() {
        let mut st = state(&[1]);
        assert_eq!(st.honest_bake(2, Payload::empty()), None);
        let m = st.honest_bake(1, Payload::empty()).unwrap();
        let b = m.block().clone();
        assert_eq!(b.pred, BlockHasher::default().hash_block(&Block::genesis()));
        assert_eq!(b.slot, 1);
        assert!(st.tree.contains(&b));
        let c = st.tree.best_chain(1);
        assert_eq!(c, Chain::from_blocks(vec![b, Block::genesis()]));
        assert!(valid_chain(&c, st.rules()));
    }

    #[test]
    fn filter_flag_drops_losing_blocks() {
        let mut st = state(&[]);
        st.filter_invalid = true;
        let b = Block::new(Default::default(), 4, Payload::empty(), PartyId(1));
        assert!(st.honest_rcv(&[Message::BlockMsg(b)], 4).is_empty());
    }

    #[test]
    fn slot_tag_layout() {
        let p = slot_tag(0x0102, PartyId(7));
        assert_eq!(p.as_bytes(), &[2, 1, 0, 0, 0, 0, 0, 0, 7, 0, 0, 0]);
    }
}
