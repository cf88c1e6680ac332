//! Global state, flooding, the atomic transitions and the slot driver.
//!
//! Each slot runs `Ready -> Receive -> Delivered -> Bake -> Baked -> Increment -> Ready`.
//! A tuple is inserted with `cd` 1 or 2, decremented on `Increment` and
//! delivered during `Receive` once it reaches 0, so an honest block baked in
//! slot `sl` is delivered in `sl + 1` and a delay-2 block in `sl + 2`.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryContext, AdversaryStrategy, DelayMap, Hook, Noop, StrategySpec};
use crate::blocktree::TreeKind;
use crate::lottery::{HonestyMap, Lottery, SlotClasses};
use crate::model::{BlockHasher, ChainRules, PartyId, Slot};
use crate::party::{LocalState, Message, TxSelector};
use crate::trace::{Phase, Sender, Trace, TraceRecorder};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgTuple {
    pub msg: Message,
    pub rcv: PartyId,
    pub cd: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Progress {
    Ready,
    Delivered,
    Baked,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransitionKind {
    Receive,
    Bake,
    Increment,
    /// `exec_order[i] := exec_order[perm[i]]`.
    PermuteExec(Vec<usize>),
    /// `msg_buffer[i] := msg_buffer[perm[i]]`.
    PermuteBuffer(Vec<usize>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerPolicy {
    #[default]
    Fixed,
    SeededRandom,
    /// The strategy picks the execution order.
    Adversarial,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("{transition} requires progress {expected:?}, found {found:?}")]
    WrongProgress { transition: &'static str, expected: Progress, found: Progress },
    #[error("not a permutation of 0..{len}")]
    InvalidPermutation { len: usize },
    #[error("duplicate party id {0}")]
    DuplicateParty(PartyId),
    #[error("no honest party")]
    NoHonestParty,
    #[error("party 0 is reserved for genesis and must be honest")]
    GenesisPartyCorrupted,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("lottery does not know party {0}")]
    LotteryMismatch(PartyId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartySpec {
    pub id: PartyId,
    pub honest: bool,
    pub tree: TreeKind,
}

/// Everything needed to build a world; see `config` for the file format.
#[derive(Clone, Debug)]
pub struct WorldParams {
    pub horizon: Slot,
    pub hasher: BlockHasher,
    pub parties: Vec<PartySpec>,
    pub lottery: Lottery,
    pub strategy: StrategySpec,
    pub tx_selector: TxSelector,
    pub scheduler: SchedulerPolicy,
    pub scheduler_seed: u64,
    pub filter_on_receive: bool,
}

pub struct GlobalState {
    pub clock: Slot,
    pub msg_buffer: Vec<MsgTuple>,
    /// Local states of honest parties; corrupted parties have none.
    pub state_map: BTreeMap<PartyId, LocalState>,
    pub history: Vec<Message>,
    pub exec_order: Vec<PartyId>,
    pub progress: Progress,
    adversary: Box<dyn AdversaryStrategy>,
    lottery: Lottery,
    honesty: HonestyMap,
    rules: ChainRules,
    horizon: Slot,
    tx_selector: TxSelector,
    recorder: TraceRecorder,
}

impl GlobalState {
    pub fn new(params: &WorldParams) -> Result<Self, WorldError> {
        Self::with_strategy(params, None)
    }

    /// As [`GlobalState::new`], with a custom strategy in place of `params.strategy`.
    pub fn with_strategy(params: &WorldParams, custom: Option<Box<dyn AdversaryStrategy>>) -> Result<Self, WorldError> {
        let mut seen = HashSet::new();
        for p in &params.parties {
            if !seen.insert(p.id) {
                return Err(WorldError::DuplicateParty(p.id));
            }
            if p.id == PartyId::GENESIS && !p.honest {
                return Err(WorldError::GenesisPartyCorrupted);
            }
            if params.lottery.winner(p.id, 1).is_err() {
                return Err(WorldError::LotteryMismatch(p.id));
            }
        }
        if !params.parties.iter().any(|p| p.honest) {
            return Err(WorldError::NoHonestParty);
        }
        if params.horizon == 0 {
            return Err(WorldError::ZeroHorizon);
        }
        let honesty = HonestyMap::new(params.parties.iter().map(|p| (p.id, p.honest)));
        let rules = ChainRules::new(params.hasher, Arc::new(params.lottery.clone()));
        let state_map = params
            .parties
            .iter()
            .filter(|p| p.honest)
            .map(|p| {
                let mut st = LocalState::new(p.id, p.tree, rules.clone());
                st.filter_invalid = params.filter_on_receive;
                (p.id, st)
            })
            .collect();
        let exec_order: Vec<PartyId> = params.parties.iter().map(|p| p.id).collect();
        let honest: Vec<PartyId> = params.parties.iter().filter(|p| p.honest).map(|p| p.id).collect();
        let adversary = custom.unwrap_or_else(|| params.strategy.build(&rules));
        let recorder = TraceRecorder::new(params.hasher, exec_order.clone(), honest);
        Ok(GlobalState {
            clock: 0,
            msg_buffer: Vec::new(),
            state_map,
            history: Vec::new(),
            exec_order,
            progress: Progress::Ready,
            adversary,
            lottery: params.lottery.clone(),
            honesty,
            rules,
            horizon: params.horizon,
            tx_selector: params.tx_selector,
            recorder,
        })
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    pub fn honesty(&self) -> &HonestyMap {
        &self.honesty
    }

    pub fn lottery(&self) -> &Lottery {
        &self.lottery
    }

    pub fn recorder(&self) -> &TraceRecorder {
        &self.recorder
    }

    /// Honest flooding: every party in `exec_order` gets the message at delay 1.
    pub fn flood_msgs(&mut self, msgs: Vec<Message>, sender: PartyId) {
        for m in msgs {
            for &p in &self.exec_order {
                self.msg_buffer.push(MsgTuple { msg: m.clone(), rcv: p, cd: 1 });
            }
            self.recorder.on_send(self.clock, self.hook(), Sender::Honest(sender), m.block());
            self.history.push(m);
        }
    }

    /// Adversarial flooding with per-recipient delays. The forging monitor
    /// judges the batch against the history before it is appended.
    pub fn flood_msgs_adv(&mut self, pairs: Vec<(Message, DelayMap)>) {
        let hook = self.hook();
        self.recorder.check_forging(self.clock, hook, &pairs, &self.honesty);
        for (m, delays) in pairs {
            for &p in &self.exec_order {
                self.msg_buffer.push(MsgTuple { msg: m.clone(), rcv: p, cd: delays.get(p).slots() });
            }
            self.recorder.on_send(self.clock, hook, Sender::Adversary, m.block());
            self.history.push(m);
        }
    }

    fn hook(&self) -> Hook {
        match self.progress {
            Progress::Ready => Hook::Receive,
            _ => Hook::Bake,
        }
    }

    fn expect(&self, transition: &'static str, expected: Progress) -> Result<(), WorldError> {
        if self.progress != expected {
            return Err(WorldError::WrongProgress { transition, expected, found: self.progress });
        }
        Ok(())
    }

    pub fn step(&mut self, t: TransitionKind) -> Result<(), WorldError> {
        match t {
            TransitionKind::Receive => {
                self.expect("Receive", Progress::Ready)?;
                self.receive();
                self.progress = Progress::Delivered;
            }
            TransitionKind::Bake => {
                self.expect("Bake", Progress::Delivered)?;
                self.bake();
                self.progress = Progress::Baked;
            }
            TransitionKind::Increment => {
                self.expect("Increment", Progress::Baked)?;
                self.clock += 1;
                for t in &mut self.msg_buffer {
                    t.cd = t.cd.saturating_sub(1);
                }
                self.progress = Progress::Ready;
            }
            TransitionKind::PermuteExec(perm) => {
                self.exec_order = apply_permutation(&self.exec_order, &perm)?;
            }
            TransitionKind::PermuteBuffer(perm) => {
                self.msg_buffer = apply_permutation(&self.msg_buffer, &perm)?;
            }
        }
        Ok(())
    }

    fn receive(&mut self) {
        let mut due: BTreeMap<PartyId, Vec<Message>> = BTreeMap::new();
        let mut kept = Vec::with_capacity(self.msg_buffer.len());
        for t in self.msg_buffer.drain(..) {
            if t.cd == 0 {
                due.entry(t.rcv).or_default().push(t.msg);
            } else {
                kept.push(t);
            }
        }
        self.msg_buffer = kept;

        let order = self.exec_order.clone();
        let mut adversary_done = false;
        for p in order {
            if let Some(st) = self.state_map.get_mut(&p) {
                let msgs = due.remove(&p).unwrap_or_default();
                let fresh = st.honest_rcv(&msgs, self.clock);
                for b in &fresh {
                    self.recorder.on_learn(p, b, self.clock, Phase::Delivered);
                }
            } else if !adversary_done {
                adversary_done = true;
                let corrupted: Vec<PartyId> = self.honesty.corrupted_parties().collect();
                let delivered: Vec<Message> = self
                    .exec_order
                    .iter()
                    .filter(|q| corrupted.contains(q))
                    .flat_map(|q| due.remove(q).unwrap_or_default())
                    .collect();
                let mut strategy = std::mem::replace(&mut self.adversary, Box::new(Noop));
                let out = strategy.on_rcv(&self.context(Hook::Receive, &delivered));
                self.adversary = strategy;
                self.flood_msgs_adv(out);
            }
        }
    }

    fn bake(&mut self) {
        let order = self.exec_order.clone();
        let mut adversary_done = false;
        for p in order {
            if let Some(st) = self.state_map.get_mut(&p) {
                let txs = self.tx_selector.select(self.clock, p);
                if let Some(m) = st.honest_bake(self.clock, txs) {
                    let b = m.block().clone();
                    self.flood_msgs(vec![m], p);
                    self.recorder.on_learn(p, &b, self.clock, Phase::Baked);
                }
            } else if !adversary_done {
                adversary_done = true;
                let mut strategy = std::mem::replace(&mut self.adversary, Box::new(Noop));
                let out = strategy.on_bake(&self.context(Hook::Bake, &[]));
                self.adversary = strategy;
                self.flood_msgs_adv(out);
            }
        }
    }

    fn context<'a>(&'a self, hook: Hook, new_msgs: &'a [Message]) -> AdversaryContext<'a> {
        AdversaryContext {
            slot: self.clock,
            horizon: self.horizon,
            hook,
            new_msgs,
            msg_pool: &self.msg_buffer,
            history: &self.history,
            lottery: &self.lottery,
            honesty: &self.honesty,
            exec_order: &self.exec_order,
            parties: &self.state_map,
            rules: &self.rules,
            tx_selector: self.tx_selector,
        }
    }

    fn adversarial_order(&mut self) -> Vec<PartyId> {
        self.adversary.schedule_exec(&self.exec_order, &self.honesty)
    }

    fn snapshot(&mut self) {
        let sl = self.clock;
        for (&p, st) in &self.state_map {
            self.recorder.on_snapshot(p, st.tree.best_chain(sl.saturating_sub(1)));
        }
        self.recorder.end_snapshot();
    }

    /// Runs every slot `0..=horizon` and returns the trace.
    pub fn run(mut self, scheduler: SchedulerPolicy, scheduler_seed: u64) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(scheduler_seed);
        for _ in 0..=self.horizon {
            self.snapshot();
            for t in [TransitionKind::Receive, TransitionKind::Bake, TransitionKind::Increment] {
                self.permute(scheduler, &mut rng);
                self.step(t).expect("driver follows the progress cycle");
            }
        }
        let horizon = self.horizon;
        let finals = self.state_map.iter().map(|(&p, st)| (p, st.tree.best_chain(horizon))).collect();
        let classes = SlotClasses::compute(horizon, &self.lottery, &self.honesty);
        self.recorder.finish(horizon, self.honesty.clone(), classes, finals, self.adversary.name())
    }

    fn permute(&mut self, policy: SchedulerPolicy, rng: &mut ChaCha8Rng) {
        match policy {
            SchedulerPolicy::Fixed => {}
            SchedulerPolicy::SeededRandom => {
                self.exec_order.shuffle(rng);
                self.msg_buffer.shuffle(rng);
            }
            SchedulerPolicy::Adversarial => {
                self.exec_order = self.adversarial_order();
            }
        }
    }
}

fn apply_permutation<T: Clone>(xs: &[T], perm: &[usize]) -> Result<Vec<T>, WorldError> {
    let err = WorldError::InvalidPermutation { len: xs.len() };
    if perm.len() != xs.len() {
        return Err(err);
    }
    let mut seen = vec![false; xs.len()];
    for &i in perm {
        if i >= xs.len() || std::mem::replace(&mut seen[i], true) {
            return Err(err);
        }
    }
    Ok(perm.iter().map(|&i| xs[i].clone()).collect())
}

/// Builds the world from `params` and runs it to the horizon.
pub fn run(params: &WorldParams) -> Result<Trace, WorldError> {
    Ok(GlobalState::new(params)?.run(params.scheduler, params.scheduler_seed))
}

/// As [`run`] with a custom strategy.
pub fn run_with_strategy(params: &WorldParams, strategy: Box<dyn AdversaryStrategy>) -> Result<Trace, WorldError> {
    Ok(GlobalState::with_strategy(params, Some(strategy))?.run(params.scheduler, params.scheduler_seed))
}
