//! Adversarial interface and built-in strategies.
//!
//! One strategy instance acts for all corrupted parties. It sees the whole
//! global state, including undelivered messages, and picks a delay of one or
//! two slots per recipient for each message it sends.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocktree::{BlockTree, IndexedTree};
use crate::lottery::{HonestyMap, Lottery};
use crate::model::{Block, ChainRules, PartyId, Payload, Slot, WinnerPredicate};
use crate::party::{slot_tag, LocalState, Message, TxSelector};
use crate::world::MsgTuple;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Delay {
    One,
    Two,
}

impl Delay {
    pub fn slots(self) -> u8 {
        match self {
            Delay::One => 1,
            Delay::Two => 2,
        }
    }
}

impl TryFrom<u8> for Delay {
    type Error = DelayError;

    fn try_from(v: u8) -> Result<Self, DelayError> {
        match v {
            1 => Ok(Delay::One),
            2 => Ok(Delay::Two),
            other => Err(DelayError(other)),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("delay must be 1 or 2, got {0}")]
pub struct DelayError(pub u8);

/// Per-recipient delay; recipients without an override get `default`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayMap {
    pub default: Delay,
    pub overrides: BTreeMap<PartyId, Delay>,
}

impl DelayMap {
    pub fn uniform(d: Delay) -> Self {
        DelayMap { default: d, overrides: BTreeMap::new() }
    }

    pub fn with(mut self, p: PartyId, d: Delay) -> Self {
        self.overrides.insert(p, d);
        self
    }

    pub fn from_raw(default: u8, overrides: &[(PartyId, u8)]) -> Result<Self, DelayError> {
        let mut m = DelayMap::uniform(Delay::try_from(default)?);
        for &(p, d) in overrides {
            m.overrides.insert(p, Delay::try_from(d)?);
        }
        Ok(m)
    }

    pub fn get(&self, p: PartyId) -> Delay {
        self.overrides.get(&p).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hook {
    Receive,
    Bake,
}

/// Read-only view of the global state handed to the adversary.
pub struct AdversaryContext<'a> {
    pub slot: Slot,
    pub horizon: Slot,
    pub hook: Hook,
    /// Messages delivered to corrupted parties in this step.
    pub new_msgs: &'a [Message],
    pub msg_pool: &'a [MsgTuple],
    pub history: &'a [Message],
    pub lottery: &'a Lottery,
    pub honesty: &'a HonestyMap,
    pub exec_order: &'a [PartyId],
    pub parties: &'a BTreeMap<PartyId, LocalState>,
    pub rules: &'a ChainRules,
    pub tx_selector: TxSelector,
}

impl AdversaryContext<'_> {
    /// Lowest corrupted id winning `sl`.
    pub fn corrupted_winner(&self, sl: Slot) -> Option<PartyId> {
        self.honesty.corrupted_parties().find(|&p| self.lottery.is_winner(p, sl))
    }

    pub fn honest_wins(&self, sl: Slot) -> bool {
        self.honesty.honest_parties().any(|p| self.lottery.is_winner(p, sl))
    }
}

pub type Emission = Vec<(Message, DelayMap)>;

pub trait AdversaryStrategy: Send {
    fn name(&self) -> &'static str;
    fn on_rcv(&mut self, ctx: &AdversaryContext<'_>) -> Emission;
    fn on_bake(&mut self, ctx: &AdversaryContext<'_>) -> Emission;

    /// Execution order chosen under the adversarial scheduler policy:
    /// honest parties first, corrupted last (rushing).
    fn schedule_exec(&mut self, order: &[PartyId], honesty: &HonestyMap) -> Vec<PartyId> {
        let (mut honest, corrupted): (Vec<PartyId>, Vec<PartyId>) = order.iter().partition(|&&p| honesty.is_honest(p));
        honest.extend(corrupted);
        honest
    }
}

/// Serializable strategy selection.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum StrategySpec {
    #[default]
    Noop,
    Withhold {
        #[serde(default)]
        release_lead: u64,
    },
    Equivocate,
    Split {
        partition: Vec<PartyId>,
    },
    /// Negative control: emits a block carrying an honest bid that no honest
    /// party produced.
    Forge,
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Noop => "noop",
            StrategySpec::Withhold { .. } => "withhold",
            StrategySpec::Equivocate => "equivocate",
            StrategySpec::Split { .. } => "split",
            StrategySpec::Forge => "forge",
        }
    }

    pub fn build(&self, rules: &ChainRules) -> Box<dyn AdversaryStrategy> {
        match self {
            StrategySpec::Noop => Box::new(Noop),
            StrategySpec::Withhold { release_lead } => Box::new(Withhold::new(*release_lead, rules)),
            StrategySpec::Equivocate => Box::new(Equivocate { partition: None }),
            StrategySpec::Split { partition } => {
                Box::new(Equivocate { partition: Some(partition.iter().copied().collect()) })
            }
            StrategySpec::Forge => Box::new(Forge { done: false }),
        }
    }
}

pub struct Noop;

impl AdversaryStrategy for Noop {
    fn name(&self) -> &'static str {
        "noop"
    }

    fn on_rcv(&mut self, _ctx: &AdversaryContext<'_>) -> Emission {
        Vec::new()
    }

    fn on_bake(&mut self, _ctx: &AdversaryContext<'_>) -> Emission {
        Vec::new()
    }
}

/// Rushing view: every block ever sent, fed incrementally from history.
struct Knowledge {
    tree: IndexedTree,
    fed: usize,
}

impl Knowledge {
    fn sync(&mut self, history: &[Message]) {
        for m in &history[self.fed..] {
            self.tree.extend(m.block().clone());
        }
        self.fed = history.len();
    }
}

/// Private-chain attack. Corrupted winners extend a hidden fork; the fork is
/// released once it leads the public chain by more than `release_lead` and an
/// honest party wins the next slot (lookahead), or when the run is about to end.
/// A fork overtaken by the public chain is abandoned.
pub struct Withhold {
    release_lead: u64,
    known: Knowledge,
    fork: Vec<Block>,
    base_len: usize,
}

impl Withhold {
    pub fn new(release_lead: u64, rules: &ChainRules) -> Self {
        Withhold {
            release_lead,
            known: Knowledge { tree: IndexedTree::new(rules.clone()), fed: 0 },
            fork: Vec::new(),
            base_len: 0,
        }
    }
}

impl AdversaryStrategy for Withhold {
    fn name(&self) -> &'static str {
        "withhold"
    }

    fn on_rcv(&mut self, ctx: &AdversaryContext<'_>) -> Emission {
        self.known.sync(ctx.history);
        Vec::new()
    }

    fn on_bake(&mut self, ctx: &AdversaryContext<'_>) -> Emission {
        self.known.sync(ctx.history);
        let s = ctx.slot;
        let public = self.known.tree.best_chain(s);
        if !self.fork.is_empty() && public.len() > self.base_len + self.fork.len() {
            self.fork.clear();
        }
        if let Some(bid) = ctx.corrupted_winner(s) {
            let tip = match self.fork.last() {
                Some(b) => b.clone(),
                None => {
                    self.base_len = public.len();
                    public.head().expect("non-empty").clone()
                }
            };
            let txs = ctx.tx_selector.select(s, bid);
            self.fork.push(Block::new(ctx.rules.hash(&tip), s, txs, bid));
        }
        if self.fork.is_empty() {
            return Vec::new();
        }
        let lead = (self.base_len + self.fork.len()) as i64 - public.len() as i64;
        let release = (lead > self.release_lead as i64 && ctx.honest_wins(s + 1)) || s + 1 >= ctx.horizon;
        if !release {
            return Vec::new();
        }
        self.fork.drain(..).map(|b| (Message::BlockMsg(b), DelayMap::uniform(Delay::One))).collect()
    }
}

/// On each corrupted winning slot, bakes one block per distinct head among the
/// honest parties' current best chains. With a partition, members get delay 1
/// and everyone else delay 2.
pub struct Equivocate {
    partition: Option<BTreeSet<PartyId>>,
}

impl AdversaryStrategy for Equivocate {
    fn name(&self) -> &'static str {
        if self.partition.is_some() {
            "split"
        } else {
            "equivocate"
        }
    }

    fn on_rcv(&mut self, _ctx: &AdversaryContext<'_>) -> Emission {
        Vec::new()
    }

    fn on_bake(&mut self, ctx: &AdversaryContext<'_>) -> Emission {
        let s = ctx.slot;
        let Some(bid) = ctx.corrupted_winner(s) else {
            return Vec::new();
        };
        let tips: BTreeSet<Block> =
            ctx.parties.values().filter_map(|st| st.tree.best_chain(s - 1).head().cloned()).collect();
        let delays = match &self.partition {
            None => DelayMap::uniform(Delay::One),
            Some(part) => part.iter().fold(DelayMap::uniform(Delay::Two), |m, &p| m.with(p, Delay::One)),
        };
        tips.iter()
            .map(|tip| {
                let b = Block::new(ctx.rules.hash(tip), s, slot_tag(s, bid), bid);
                (Message::BlockMsg(b), delays.clone())
            })
            .collect()
    }
}

pub struct Forge {
    done: bool,
}

impl AdversaryStrategy for Forge {
    fn name(&self) -> &'static str {
        "forge"
    }

    fn on_rcv(&mut self, _ctx: &AdversaryContext<'_>) -> Emission {
        Vec::new()
    }

    fn on_bake(&mut self, ctx: &AdversaryContext<'_>) -> Emission {
        if self.done || ctx.slot == 0 {
            return Vec::new();
        }
        let Some(victim) = ctx.honesty.honest_parties().find(|&p| p != PartyId::GENESIS) else {
            return Vec::new();
        };
        self.done = true;
        let g = ctx.rules.hash(&Block::genesis());
        let b = Block::new(g, ctx.slot, Payload::new(b"forged".to_vec()), victim);
        vec![(Message::BlockMsg(b), DelayMap::uniform(Delay::One))]
    }
}
