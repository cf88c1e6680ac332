//! Runtime oracles over a [`Trace`]: the collision and forging monitors, the
//! knowledge-propagation and super-block-position lemmas, and the chain
//! growth, chain quality and timed common-prefix checkers.
//!
//! Point checkers evaluate the definitions literally. The sweeps evaluate the
//! same predicates over many pair-states with precomputed indexes; tests hold
//! the two routes against each other.

mod lemmas;
mod monitors;
mod sweep;
mod theorems;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lemmas::{check_knowledge_propagation, check_super_positions};
pub use monitors::{check_collision_free, check_forging_free, scan_collisions};
pub use sweep::{
    check_common_prefix_all, check_common_prefix_all_with, growth_sweep, quality_sweep, rollback_depth, run_checks,
    slot_grid, CheckKind, CheckRecord, CpIndex, SweepOutcome, SweepStats,
};
pub use theorems::{check_chain_growth, check_chain_quality, check_common_prefix, quality_threshold};

use crate::model::{Block, Chain, PartyId, Slot};
use crate::trace::{CollisionWitness, ForgingWitness, Trace};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// The conclusion was checked directly.
    Direct,
    /// First disjunct of the common-prefix statement.
    CommonPrefix,
    /// Second disjunct: the bad event over `[from, to]`.
    BadEvent { from: Slot, to: Slot },
    /// The required bound is zero.
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Collision(CollisionWitness),
    Forging(ForgingWitness),
    Knowledge { block: Block, p1: PartyId, p2: PartyId, slot: Slot },
    SuperPosition { super_block: Block, other: Block, position: usize },
    Growth { sl1: Slot, p1: PartyId, sl2: Slot, p2: PartyId, len1: usize, len2: usize, lucky: i64 },
    Quality { sl: Slot, p: PartyId, i: usize, j: usize, span: Slot, honest: i64, required: i64 },
    CommonPrefix { sl1: Slot, p1: PartyId, sl2: Slot, p2: PartyId, k: Slot, pruned_len: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds { evidence: Evidence },
    PreconditionFailed { reason: String },
    Violated { witness: Box<Witness> },
}

impl Verdict {
    pub fn holds(evidence: Evidence) -> Self {
        Verdict::Holds { evidence }
    }

    pub fn violated(w: Witness) -> Self {
        Verdict::Violated { witness: Box::new(w) }
    }

    pub fn is_holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }

    pub fn is_precondition_failed(&self) -> bool {
        matches!(self, Verdict::PreconditionFailed { .. })
    }

    /// Violated > PreconditionFailed > Holds.
    pub fn severity(&self) -> u8 {
        match self {
            Verdict::Holds { .. } => 0,
            Verdict::PreconditionFailed { .. } => 1,
            Verdict::Violated { .. } => 2,
        }
    }

    /// The more severe of the two; the earlier one on ties.
    pub fn worst(self, other: Verdict) -> Verdict {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("{0} is not an honest party of this trace")]
    UnknownParty(PartyId),
    #[error("slot {0} has no snapshot")]
    UnknownSlot(Slot),
    #[error("slots out of order: {0} > {1}")]
    SlotOrder(Slot, Slot),
    #[error("window [{i}, {j}] out of range for chain of length {len}")]
    IndexOutOfRange { i: usize, j: usize, len: usize },
}

/// How the common-prefix cutoff `k` is derived for a pair-state `(sl1, sl2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum Cutoff {
    /// `k` fixed.
    Absolute(Slot),
    /// `k = sl1 - d`, saturating at 0.
    Depth(Slot),
}

impl Cutoff {
    pub fn at(self, sl1: Slot) -> Slot {
        match self {
            Cutoff::Absolute(k) => k,
            Cutoff::Depth(d) => sl1.saturating_sub(d),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffMode {
    #[default]
    Absolute,
    Depth,
}

/// Slack constants of the theorem statements.
///
/// - growth: lucky slots counted in `[sl1 + growth_lo_trim, sl2 - growth_hi_trim]`;
/// - quality: periods `[a, b]` with `b - a >= span - quality_period_slack`,
///   threshold lowered by `quality_count_slack`;
/// - common prefix: bad event `#super[a, m - cp_super_trim] <= 2 #adv[a, m]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Slack {
    pub growth_lo_trim: i64,
    pub growth_hi_trim: i64,
    pub quality_period_slack: i64,
    pub quality_count_slack: i64,
    pub cp_super_trim: i64,
}

impl Default for Slack {
    fn default() -> Self {
        Slack {
            growth_lo_trim: 0,
            growth_hi_trim: 2,
            quality_period_slack: 0,
            quality_count_slack: 0,
            cp_super_trim: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckParams {
    pub k: Vec<Slot>,
    pub cutoff: CutoffMode,
    /// Slot stride of the growth and common-prefix pair sweeps.
    pub stride: Slot,
    /// Snapshot stride of the quality sweep; final chains are always included.
    pub quality_stride: Slot,
    pub slack: Slack,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            k: vec![10, 20, 40],
            cutoff: CutoffMode::Absolute,
            stride: 10,
            quality_stride: 100,
            slack: Slack::default(),
        }
    }
}

impl CheckParams {
    pub fn cutoffs(&self) -> Vec<Cutoff> {
        self.k
            .iter()
            .map(|&k| match self.cutoff {
                CutoffMode::Absolute => Cutoff::Absolute(k),
                CutoffMode::Depth => Cutoff::Depth(k),
            })
            .collect()
    }
}

/// Both monitors hold, or the reason they do not.
pub(crate) fn monitors_clean(trace: &Trace) -> Result<(), String> {
    if let Some(c) = &trace.collision {
        return Err(format!("hash collision at slot {}", c.slot));
    }
    if let Some(f) = &trace.forging {
        return Err(format!("forged block at slot {}", f.slot));
    }
    Ok(())
}

pub(crate) fn honest_col(trace: &Trace, p: PartyId) -> Result<usize, CheckError> {
    trace.honest_index(p).ok_or(CheckError::UnknownParty(p))
}

/// `snapshot(p, sl)` for `sl <= horizon`; the final chain at `horizon + 1`.
pub(crate) fn chain_at(trace: &Trace, col: usize, sl: Slot) -> Result<&Chain, CheckError> {
    if (sl as usize) < trace.snapshots.len() {
        Ok(&trace.snapshots[sl as usize][col])
    } else if sl == trace.horizon + 1 {
        Ok(&trace.final_chains[col])
    } else {
        Err(CheckError::UnknownSlot(sl))
    }
}
