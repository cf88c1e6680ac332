//! Recorded runs: block store, send history, per-slot snapshots, knowledge
//! stamps and the two online monitors, plus line-delimited and DOT exports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::adversary::{DelayMap, Hook};
use crate::lottery::{HonestyMap, SlotClass, SlotClasses};
use crate::model::{Block, BlockHasher, Chain, Hash, PartyId, Slot};
use crate::party::Message;

/// Index into [`Trace::blocks`]; genesis is 0.
pub type BlockId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Ready,
    Delivered,
    Baked,
}

/// When a party first held a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub slot: Slot,
    pub phase: Phase,
}

impl Stamp {
    /// First slot at whose Ready point the block is held.
    pub fn ready_slot(self) -> Slot {
        match self.phase {
            Phase::Ready => self.slot,
            _ => self.slot + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sender {
    Honest(PartyId),
    Adversary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendRecord {
    pub slot: Slot,
    pub hook: Hook,
    pub sender: Sender,
    pub block: BlockId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionWitness {
    pub slot: Slot,
    pub hash: Hash,
    pub first: Block,
    pub second: Block,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgingWitness {
    pub slot: Slot,
    pub hook: Hook,
    pub block: Block,
}

pub struct TraceRecorder {
    hasher: BlockHasher,
    parties: Vec<PartyId>,
    honest: Vec<PartyId>,
    honest_index: HashMap<PartyId, usize>,
    blocks: Vec<Block>,
    index: HashMap<Block, BlockId>,
    by_hash: HashMap<Hash, BlockId>,
    sends: Vec<SendRecord>,
    snapshots: Vec<Vec<Chain>>,
    pending_snapshot: Vec<Chain>,
    stamps: Vec<Vec<(BlockId, Stamp)>>,
    collision: Option<CollisionWitness>,
    forging: Option<ForgingWitness>,
}

impl TraceRecorder {
    pub fn new(hasher: BlockHasher, parties: Vec<PartyId>, honest: Vec<PartyId>) -> Self {
        let g = Block::genesis();
        let honest_index = honest.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let ready = Stamp { slot: 0, phase: Phase::Ready };
        TraceRecorder {
            hasher,
            parties,
            stamps: vec![vec![(0, ready)]; honest.len()],
            honest,
            honest_index,
            index: HashMap::from([(g.clone(), 0)]),
            by_hash: HashMap::from([(hasher.hash_block(&g), 0)]),
            blocks: vec![g],
            sends: Vec::new(),
            snapshots: Vec::new(),
            pending_snapshot: Vec::new(),
            collision: None,
            forging: None,
        }
    }

    fn intern(&mut self, b: &Block, slot: Slot) -> BlockId {
        if let Some(&id) = self.index.get(b) {
            return id;
        }
        let id = self.blocks.len() as BlockId;
        self.blocks.push(b.clone());
        self.index.insert(b.clone(), id);
        let h = self.hasher.hash_block(b);
        match self.by_hash.get(&h) {
            Some(&other) if self.collision.is_none() => {
                self.collision = Some(CollisionWitness {
                    slot,
                    hash: h,
                    first: self.blocks[other as usize].clone(),
                    second: b.clone(),
                });
            }
            Some(_) => {}
            None => {
                self.by_hash.insert(h, id);
            }
        }
        id
    }

    pub fn on_send(&mut self, slot: Slot, hook: Hook, sender: Sender, b: &Block) {
        let block = self.intern(b, slot);
        self.sends.push(SendRecord { slot, hook, sender, block });
    }

    /// Flags the first adversarial block carrying an honest bid that is
    /// neither genesis nor already in the history.
    pub fn check_forging(&mut self, slot: Slot, hook: Hook, pairs: &[(Message, DelayMap)], honesty: &HonestyMap) {
        if self.forging.is_some() {
            return;
        }
        for (m, _) in pairs {
            let b = m.block();
            if honesty.is_honest(b.bid) && !self.index.contains_key(b) {
                self.forging = Some(ForgingWitness { slot, hook, block: b.clone() });
                return;
            }
        }
    }

    pub fn on_learn(&mut self, p: PartyId, b: &Block, slot: Slot, phase: Phase) {
        let id = self.intern(b, slot);
        if let Some(&i) = self.honest_index.get(&p) {
            self.stamps[i].push((id, Stamp { slot, phase }));
        }
    }

    /// Called once per honest party, in ascending id order.
    pub fn on_snapshot(&mut self, _p: PartyId, c: Chain) {
        self.pending_snapshot.push(c);
    }

    pub fn end_snapshot(&mut self) {
        let row = std::mem::take(&mut self.pending_snapshot);
        self.snapshots.push(self.reorder(row));
    }

    /// Snapshots arrive in id order; store them in configuration order.
    fn reorder(&self, row: Vec<Chain>) -> Vec<Chain> {
        let mut ids: Vec<PartyId> = self.honest.clone();
        ids.sort();
        let by_id: HashMap<PartyId, Chain> = ids.into_iter().zip(row).collect();
        self.honest.iter().map(|p| by_id[p].clone()).collect()
    }

    pub fn history_len(&self) -> usize {
        self.sends.len()
    }

    pub fn collision(&self) -> Option<&CollisionWitness> {
        self.collision.as_ref()
    }

    pub fn forging(&self) -> Option<&ForgingWitness> {
        self.forging.as_ref()
    }

    pub fn finish(
        self,
        horizon: Slot,
        honesty: HonestyMap,
        classes: SlotClasses,
        finals: BTreeMap<PartyId, Chain>,
        strategy: &str,
    ) -> Trace {
        let final_chains = self.honest.iter().map(|p| finals[p].clone()).collect();
        Trace {
            horizon,
            hasher: self.hasher,
            parties: self.parties,
            honest: self.honest,
            honesty,
            classes,
            index: self.index,
            blocks: self.blocks,
            sends: self.sends,
            snapshots: self.snapshots,
            final_chains,
            stamps: self.stamps,
            collision: self.collision,
            forging: self.forging,
            strategy: strategy.to_string(),
        }
    }
}

pub struct Trace {
    pub horizon: Slot,
    pub hasher: BlockHasher,
    /// All parties in configuration order.
    pub parties: Vec<PartyId>,
    /// Honest parties in configuration order; indexes `snapshots` columns.
    pub honest: Vec<PartyId>,
    pub honesty: HonestyMap,
    pub classes: SlotClasses,
    index: HashMap<Block, BlockId>,
    pub blocks: Vec<Block>,
    pub sends: Vec<SendRecord>,
    /// `snapshots[sl][i]`: honest party `i`'s `best_chain(sl - 1)` at the Ready point of `sl`.
    pub snapshots: Vec<Vec<Chain>>,
    /// `best_chain(horizon)` after the last slot.
    pub final_chains: Vec<Chain>,
    /// Per honest party, in the order blocks were first held.
    pub stamps: Vec<Vec<(BlockId, Stamp)>>,
    pub collision: Option<CollisionWitness>,
    pub forging: Option<ForgingWitness>,
    pub strategy: String,
}

impl Trace {
    pub fn honest_index(&self, p: PartyId) -> Option<usize> {
        self.honest.iter().position(|&q| q == p)
    }

    pub fn block_id(&self, b: &Block) -> Option<BlockId> {
        self.index.get(b).copied()
    }

    pub fn snapshot(&self, p: PartyId, sl: Slot) -> Option<&Chain> {
        let i = self.honest_index(p)?;
        self.snapshots.get(sl as usize).map(|row| &row[i])
    }

    /// Every block sent during the run, in send order (repeats included).
    pub fn history(&self) -> impl Iterator<Item = &Block> + '_ {
        self.sends.iter().map(|s| &self.blocks[s.block as usize])
    }

    pub fn slot_class(&self, sl: Slot) -> SlotClass {
        self.classes.get(sl).unwrap_or_default()
    }

    pub fn is_honest_block(&self, b: &Block) -> bool {
        self.honesty.is_honest(b.bid)
    }

    fn flags_at(&self, sl: Slot) -> MonitorFlags {
        MonitorFlags {
            collision: self.collision.as_ref().is_some_and(|c| c.slot <= sl),
            forging: self.forging.as_ref().is_some_and(|f| f.slot <= sl),
        }
    }

    /// One record per (slot, honest party) in slot-major order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (sl, row) in self.snapshots.iter().enumerate() {
            let sl = sl as Slot;
            for (i, c) in row.iter().enumerate() {
                let rec = TraceRecord {
                    slot: sl,
                    party: self.honest[i],
                    best_chain_hashes: c.iter().map(|b| self.hasher.hash_block(b).to_string()).collect(),
                    slot_class: self.slot_class(sl),
                    monitor_flags: self.flags_at(sl),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn write_blocks_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for b in &self.blocks {
            let rec = BlockRecord {
                hash: self.hasher.hash_block(b).to_string(),
                pred: b.pred.to_string(),
                slot: b.slot,
                bid: b.bid,
                txs_digest: self.hasher.hash_bytes(b.txs.as_bytes()).to_string(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Block DAG, edges from child to every store block its `pred` resolves to.
    pub fn to_dot(&self) -> String {
        let mut by_hash: BTreeMap<Hash, Vec<usize>> = BTreeMap::new();
        for (i, b) in self.blocks.iter().enumerate() {
            by_hash.entry(self.hasher.hash_block(b)).or_default().push(i);
        }
        let on_final: HashSet<&Block> = self.final_chains.iter().flat_map(|c| c.iter()).collect();
        let mut out = String::from("digraph blocks {\n  rankdir=RL;\n  node [style=filled];\n");
        for (i, b) in self.blocks.iter().enumerate() {
            let (shape, color) = if b.is_genesis() {
                ("doublecircle", "lightgrey")
            } else if self.is_honest_block(b) {
                ("box", "palegreen")
            } else {
                ("box", "salmon")
            };
            let pen = if on_final.contains(b) { ", penwidth=3" } else { "" };
            out.push_str(&format!(
                "  b{i} [label=\"s{} {}\", shape={shape}, fillcolor={color}{pen}];\n",
                b.slot, b.bid
            ));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.is_genesis() {
                continue;
            }
            for &j in by_hash.get(&b.pred).into_iter().flatten() {
                out.push_str(&format!("  b{i} -> b{j};\n"));
            }
        }
        out.push_str("}\n");
        out
    }

    /// Per honest party, snapshot lengths for every slot.
    pub fn chain_lengths(&self) -> BTreeMap<PartyId, Vec<usize>> {
        self.honest
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, self.snapshots.iter().map(|row| row[i].len()).collect()))
            .collect()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            strategy: self.strategy.clone(),
            horizon: self.horizon,
            hash_width: self.hasher.width(),
            distinct_blocks: self.blocks.len(),
            messages_sent: self.sends.len(),
            final_lengths: self.honest.iter().zip(&self.final_chains).map(|(&p, c)| (p, c.len())).collect(),
            chain_lengths: self.chain_lengths(),
            collision: self.collision.clone(),
            forging: self.forging.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorFlags {
    pub collision: bool,
    pub forging: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: Slot,
    pub party: PartyId,
    pub best_chain_hashes: Vec<String>,
    pub slot_class: SlotClass,
    pub monitor_flags: MonitorFlags,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub hash: String,
    pub pred: String,
    pub slot: Slot,
    pub bid: PartyId,
    pub txs_digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub horizon: Slot,
    pub hash_width: u8,
    pub distinct_blocks: usize,
    pub messages_sent: usize,
    pub final_lengths: BTreeMap<PartyId, usize>,
    pub chain_lengths: BTreeMap<PartyId, Vec<usize>>,
    pub collision: Option<CollisionWitness>,
    pub forging: Option<ForgingWitness>,
}
