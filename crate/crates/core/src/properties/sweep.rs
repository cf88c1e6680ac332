//! Pair-state sweeps over a whole trace.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_collision_free, check_forging_free, check_knowledge_propagation, check_super_positions, monitors_clean,
    CheckParams, Cutoff, Evidence, Slack, Verdict, Witness,
};
use crate::model::{Chain, Slot};
use crate::trace::{BlockId, Trace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub checks: u64,
    pub holds: u64,
    pub vacuous: u64,
    pub bad_event: u64,
    pub precondition_failed: u64,
    pub violated: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub stats: SweepStats,
    /// Most severe verdict seen, the earliest among equals.
    pub verdict: Verdict,
}

impl Default for SweepOutcome {
    fn default() -> Self {
        SweepOutcome { stats: SweepStats::default(), verdict: Verdict::holds(Evidence::Vacuous) }
    }
}

impl SweepOutcome {
    fn precondition(reason: String) -> Self {
        SweepOutcome {
            stats: SweepStats { checks: 1, precondition_failed: 1, ..Default::default() },
            verdict: Verdict::PreconditionFailed { reason },
        }
    }

    fn record(&mut self, v: Verdict) {
        let s = &mut self.stats;
        s.checks += 1;
        match &v {
            Verdict::Holds { evidence } => {
                s.holds += 1;
                match evidence {
                    Evidence::Vacuous => s.vacuous += 1,
                    Evidence::BadEvent { .. } => s.bad_event += 1,
                    _ => {}
                }
            }
            Verdict::PreconditionFailed { .. } => s.precondition_failed += 1,
            Verdict::Violated { .. } => s.violated += 1,
        }
        if v.severity() > self.verdict.severity() || (self.stats.checks == 1 && v.severity() == self.verdict.severity())
        {
            self.verdict = v;
        }
    }

    fn merge(mut self, other: SweepOutcome) -> SweepOutcome {
        let (a, b) = (&mut self.stats, other.stats);
        a.checks += b.checks;
        a.holds += b.holds;
        a.vacuous += b.vacuous;
        a.bad_event += b.bad_event;
        a.precondition_failed += b.precondition_failed;
        a.violated += b.violated;
        if other.verdict.severity() > self.verdict.severity() {
            self.verdict = other.verdict;
        }
        self
    }
}

/// Multiples of `stride` in `[1, horizon]`.
pub fn slot_grid(horizon: Slot, stride: Slot) -> Vec<Slot> {
    let stride = stride.max(1);
    (stride..=horizon).step_by(stride as usize).collect()
}

/// Chain growth over every honest pair and every `sl1 <= sl2` on the grid.
/// Pairs of distinct parties at the same slot are outside the statement and skipped.
pub fn growth_sweep(trace: &Trace, stride: Slot, slack: &Slack) -> SweepOutcome {
    let grid = slot_grid(trace.horizon, stride);
    let n = trace.honest.len();
    let lens: Vec<Vec<usize>> = trace.snapshots.iter().map(|row| row.iter().map(Chain::len).collect()).collect();
    let mut out = SweepOutcome::default();
    for (x, &sl1) in grid.iter().enumerate() {
        for &sl2 in &grid[x..] {
            let lucky = trace.classes.lucky_in(sl1 as i64 + slack.growth_lo_trim, sl2 as i64 - slack.growth_hi_trim);
            for i1 in 0..n {
                for i2 in 0..n {
                    if sl1 == sl2 && i1 != i2 {
                        continue;
                    }
                    let len1 = lens[sl1 as usize][i1];
                    let len2 = lens[sl2 as usize][i2];
                    out.record(if len1 as i64 + lucky <= len2 as i64 {
                        Verdict::holds(if lucky == 0 { Evidence::Vacuous } else { Evidence::Direct })
                    } else {
                        Verdict::violated(Witness::Growth {
                            sl1,
                            p1: trace.honest[i1],
                            sl2,
                            p2: trace.honest[i2],
                            len1,
                            len2,
                            lucky,
                        })
                    });
                }
            }
        }
    }
    out
}

/// Quality thresholds for one evaluation slot, from an incremental table of
/// minimum advantage per period length.
struct QualityTable {
    /// `g[e]`: minimum advantage over periods `[a, a + e]` with `a + e < sl`.
    g: Vec<i64>,
    /// Suffix minima of `g`.
    h: Vec<i64>,
    covered: i64,
}

impl QualityTable {
    fn new() -> Self {
        QualityTable { g: Vec::new(), h: Vec::new(), covered: -1 }
    }

    fn advance(&mut self, trace: &Trace, sl: Slot) {
        let top = sl as i64 - 1;
        while self.covered < top {
            self.covered += 1;
            let b = self.covered;
            self.g.push(i64::MAX);
            for a in 0..=b {
                let e = (b - a) as usize;
                let adv = trace.classes.honest_advantage(a, b);
                if adv < self.g[e] {
                    self.g[e] = adv;
                }
            }
        }
        self.h = self.g.clone();
        for e in (0..self.h.len().saturating_sub(1)).rev() {
            self.h[e] = self.h[e].min(self.h[e + 1]);
        }
    }

    fn threshold(&self, span: Slot, slack: &Slack) -> i64 {
        let e = span as i64 - slack.quality_period_slack;
        if e < 0 {
            return 0;
        }
        match self.h.get(e as usize) {
            Some(&m) => (m - slack.quality_count_slack).max(0),
            None => 0,
        }
    }
}

fn quality_chain(
    trace: &Trace,
    chain: &Chain,
    sl: Slot,
    col: usize,
    table: &QualityTable,
    slack: &Slack,
    out: &mut SweepOutcome,
) {
    let blocks: Vec<_> = chain.iter().collect();
    let len = blocks.len();
    let honest: Vec<bool> = blocks.iter().map(|b| trace.is_honest_block(b)).collect();
    let mut pre = vec![0i64; len + 1];
    for x in 0..len {
        pre[x + 1] = pre[x] + i64::from(honest[x]);
    }
    let starts: Vec<usize> = (0..len).filter(|&i| i == 0 || honest[i - 1]).collect();
    let ends: Vec<usize> = (0..len).filter(|&j| j + 1 == len || honest[j + 1]).collect();
    for &i in &starts {
        let from = ends.partition_point(|&j| j < i);
        for &j in &ends[from..] {
            let span = blocks[i].slot - blocks[j].slot;
            let required = table.threshold(span, slack);
            let count = pre[j + 1] - pre[i];
            out.record(if count >= required {
                Verdict::holds(if required == 0 { Evidence::Vacuous } else { Evidence::Direct })
            } else {
                Verdict::violated(Witness::Quality { sl, p: trace.honest[col], i, j, span, honest: count, required })
            });
        }
    }
}

/// Chain quality over every maximal window (bounded by honest blocks or the
/// chain ends) of every honest snapshot on the `stride` grid and of every final
/// chain. Final chains are evaluated at slot `horizon + 1`.
pub fn quality_sweep(trace: &Trace, stride: Slot, slack: &Slack) -> SweepOutcome {
    if let Err(reason) = monitors_clean(trace) {
        return SweepOutcome::precondition(reason);
    }
    let mut out = SweepOutcome::default();
    let mut table = QualityTable::new();
    for sl in slot_grid(trace.horizon, stride) {
        table.advance(trace, sl);
        for (col, c) in trace.snapshots[sl as usize].iter().enumerate() {
            quality_chain(trace, c, sl, col, &table, slack, &mut out);
        }
    }
    let end = trace.horizon + 1;
    table.advance(trace, end);
    for (col, c) in trace.final_chains.iter().enumerate() {
        quality_chain(trace, c, end, col, &table, slack, &mut out);
    }
    out
}

const NONE: u32 = u32::MAX;

/// Snapshots interned as a tree of structurally distinct chain nodes, with
/// Euler-tour intervals for O(1) prefix tests.
pub struct CpIndex<'t> {
    trace: &'t Trace,
    grid: Vec<Slot>,
    slot: Vec<Slot>,
    up: Vec<Vec<u32>>,
    tin: Vec<u32>,
    tout: Vec<u32>,
    /// `snap[x][i]`: node of honest party `i` at `grid[x]`.
    snap: Vec<Vec<u32>>,
    /// `max_f[a]`: max over `a' <= a` of `PS[a'] - 2 PA[a']`, with its argmax.
    max_f: Vec<(i64, Slot)>,
    trim: i64,
}

impl<'t> CpIndex<'t> {
    pub fn new(trace: &'t Trace, stride: Slot, slack: &Slack) -> Self {
        let grid = slot_grid(trace.horizon, stride);
        let mut slot: Vec<Slot> = Vec::new();
        let mut parent: Vec<u32> = Vec::new();
        let mut by_key: HashMap<(BlockId, u32), u32> = HashMap::new();
        let mut by_link: HashMap<usize, u32> = HashMap::new();
        let mut snap = Vec::with_capacity(grid.len());
        for &sl in &grid {
            let row = trace.snapshots[sl as usize]
                .iter()
                .map(|c| {
                    let mut pending = Vec::new();
                    let mut cur = c.clone();
                    let mut base = NONE;
                    while let Some(id) = cur.link_id() {
                        if let Some(&n) = by_link.get(&id) {
                            base = n;
                            break;
                        }
                        pending.push((id, cur.head().cloned().expect("non-empty")));
                        cur = cur.tail();
                    }
                    for (id, b) in pending.into_iter().rev() {
                        let bid = trace.block_id(&b).expect("honest trees hold only sent blocks");
                        let n = *by_key.entry((bid, base)).or_insert_with(|| {
                            slot.push(b.slot);
                            parent.push(base);
                            (slot.len() - 1) as u32
                        });
                        by_link.insert(id, n);
                        base = n;
                    }
                    base
                })
                .collect();
            snap.push(row);
        }

        let n = slot.len();
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (x, &p) in parent.iter().enumerate() {
            if p == NONE {
                roots.push(x as u32);
            } else {
                children[p as usize].push(x as u32);
            }
        }
        let (mut tin, mut tout) = (vec![0u32; n], vec![0u32; n]);
        let mut clock = 0u32;
        for r in roots {
            let mut stack = vec![(r, false)];
            while let Some((x, done)) = stack.pop() {
                if done {
                    tout[x as usize] = clock;
                    continue;
                }
                tin[x as usize] = clock;
                clock += 1;
                stack.push((x, true));
                for &c in &children[x as usize] {
                    stack.push((c, false));
                }
            }
        }
        let levels = (usize::BITS - n.max(1).leading_zeros()) as usize;
        let mut up =
            vec![parent.iter().enumerate().map(|(x, &p)| if p == NONE { x as u32 } else { p }).collect::<Vec<u32>>()];
        for l in 1..levels.max(1) {
            let prev = &up[l - 1];
            let next = (0..n).map(|x| prev[prev[x] as usize]).collect();
            up.push(next);
        }

        let classes = &trace.classes;
        let mut max_f = Vec::with_capacity(trace.horizon as usize + 2);
        let mut best = (i64::MIN, 0);
        for a in 0..=trace.horizon + 1 {
            let f = classes.super_in(0, a as i64 - 1) - 2 * classes.adversarial_in(0, a as i64 - 1);
            if f > best.0 {
                best = (f, a);
            }
            max_f.push(best);
        }

        CpIndex { trace, grid, slot, up, tin, tout, snap, max_f, trim: slack.cp_super_trim }
    }

    fn prune_node(&self, mut x: u32, k: Slot) -> u32 {
        if self.slot[x as usize] <= k {
            return x;
        }
        for l in (0..self.up.len()).rev() {
            let y = self.up[l][x as usize];
            if self.slot[y as usize] > k {
                x = y;
            }
        }
        self.up[0][x as usize]
    }

    fn is_ancestor(&self, p: u32, q: u32) -> bool {
        let (p, q) = (p as usize, q as usize);
        self.tin[p] <= self.tin[q] && self.tout[q] <= self.tout[p]
    }

    /// Second disjunct via prefix sums: some `a <= k`, `m ∈ [sl1, sl2]` with
    /// `PS[m - t + 1] - 2 PA[m + 1] <= PS[a] - 2 PA[a]` for `a <= m + 1`. Past
    /// `m + 1` the adversarial interval is empty and the event needs
    /// `#super[a, m - t] = 0`, easiest at the largest such `a`.
    fn bad_event(&self, k: Slot, sl1: Slot, sl2: Slot) -> Option<(Slot, Slot)> {
        let t = self.trim;
        if k as i64 > sl1 as i64 - t {
            return Some((k.min(sl2), sl1));
        }
        let classes = &self.trace.classes;
        (sl1..=sl2).find_map(|m| {
            let (bound, a) = self.max_f[k.min(m + 1) as usize];
            let g = classes.super_in(0, m as i64 - t) - 2 * classes.adversarial_in(0, m as i64);
            if g <= bound {
                return Some((a, m));
            }
            let far = (k as i64).min(m as i64 - t);
            (far > m as i64 && classes.super_in(far, m as i64 - t) == 0).then_some((far as Slot, m))
        })
    }

    fn row(&self, x: usize, cutoff: Cutoff, direct_only: bool) -> SweepOutcome {
        let trace = self.trace;
        let sl1 = self.grid[x];
        let k = cutoff.at(sl1);
        let mut out = SweepOutcome::default();
        for (i1, &c1) in self.snap[x].iter().enumerate() {
            let p = self.prune_node(c1, k);
            for y in x..self.grid.len() {
                let sl2 = self.grid[y];
                let mut bad: Option<Option<(Slot, Slot)>> = None;
                for (i2, &c2) in self.snap[y].iter().enumerate() {
                    if self.is_ancestor(p, c2) {
                        out.record(Verdict::holds(Evidence::CommonPrefix));
                        continue;
                    }
                    let be = if direct_only { None } else { *bad.get_or_insert_with(|| self.bad_event(k, sl1, sl2)) };
                    out.record(match be {
                        Some((from, to)) => Verdict::holds(Evidence::BadEvent { from, to }),
                        None => Verdict::violated(Witness::CommonPrefix {
                            sl1,
                            p1: trace.honest[i1],
                            sl2,
                            p2: trace.honest[i2],
                            k,
                            pruned_len: self.depth(p),
                        }),
                    });
                }
            }
        }
        out
    }

    fn depth(&self, mut x: u32) -> usize {
        let mut d = 1;
        while self.up[0][x as usize] != x {
            x = self.up[0][x as usize];
            d += 1;
        }
        d
    }

    pub fn sweep(&self, cutoff: Cutoff) -> SweepOutcome {
        if let Err(reason) = monitors_clean(self.trace) {
            return SweepOutcome::precondition(reason);
        }
        (0..self.grid.len())
            .into_par_iter()
            .map(|x| self.row(x, cutoff, false))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(SweepOutcome::default(), SweepOutcome::merge)
    }

    /// Whether the first disjunct holds on every pair-state.
    pub fn prefix_everywhere(&self, cutoff: Cutoff) -> bool {
        (0..self.grid.len()).into_par_iter().all(|x| self.row(x, cutoff, true).stats.violated == 0)
    }
}

/// Common prefix over every honest pair and every `sl1 <= sl2` on the grid.
pub fn check_common_prefix_all(trace: &Trace, cutoff: Cutoff, stride: Slot, slack: &Slack) -> SweepOutcome {
    CpIndex::new(trace, stride, slack).sweep(cutoff)
}

pub fn check_common_prefix_all_with(index: &CpIndex<'_>, cutoff: Cutoff) -> SweepOutcome {
    index.sweep(cutoff)
}

/// Smallest depth `d` such that `prune(sl1 - d, ·)` of every snapshot is a
/// prefix of every later snapshot on the grid.
pub fn rollback_depth(index: &CpIndex<'_>) -> Slot {
    let (mut lo, mut hi) = (0, index.trace.horizon + 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if index.prefix_everywhere(Cutoff::Depth(mid)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Collision,
    Forging,
    Knowledge,
    SuperPositions,
    Growth,
    Quality,
    CpAll,
    Rollback,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::Collision,
        CheckKind::Forging,
        CheckKind::Knowledge,
        CheckKind::SuperPositions,
        CheckKind::Growth,
        CheckKind::Quality,
        CheckKind::CpAll,
        CheckKind::Rollback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Collision => "collision",
            CheckKind::Forging => "forging",
            CheckKind::Knowledge => "knowledge",
            CheckKind::SuperPositions => "super-positions",
            CheckKind::Growth => "growth",
            CheckKind::Quality => "quality",
            CheckKind::CpAll => "cp-all",
            CheckKind::Rollback => "rollback",
        }
    }

    /// Comma-separated names; `monitors`, `lemmas` and `all` expand to groups.
    pub fn parse_list(s: &str) -> Result<Vec<CheckKind>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let group: Vec<CheckKind> = match part {
                "all" => CheckKind::ALL.to_vec(),
                "monitors" => vec![CheckKind::Collision, CheckKind::Forging],
                "lemmas" => vec![CheckKind::Knowledge, CheckKind::SuperPositions],
                "cp" => vec![CheckKind::CpAll],
                other => vec![other.parse()?],
            };
            for k in group {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        Ok(out)
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        CheckKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown check {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub checker: String,
    pub params: serde_json::Value,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<SweepStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Value>,
}

impl CheckRecord {
    fn single(kind: CheckKind, verdict: Verdict) -> Self {
        CheckRecord { checker: kind.name().into(), params: json!({}), verdict, stats: None, value: None }
    }

    fn sweep(kind: CheckKind, params: serde_json::Value, o: SweepOutcome) -> Self {
        CheckRecord { checker: kind.name().into(), params, verdict: o.verdict, stats: Some(o.stats), value: None }
    }
}

/// Evaluates `kinds` in order; one record per check (one per cutoff for `cp-all`).
pub fn run_checks(trace: &Trace, kinds: &[CheckKind], params: &CheckParams) -> Vec<CheckRecord> {
    let slack = &params.slack;
    let mut index: Option<CpIndex<'_>> = None;
    let mut out = Vec::new();
    for &kind in kinds {
        match kind {
            CheckKind::Collision => out.push(CheckRecord::single(kind, check_collision_free(trace))),
            CheckKind::Forging => out.push(CheckRecord::single(kind, check_forging_free(trace))),
            CheckKind::Knowledge => out.push(CheckRecord::single(kind, check_knowledge_propagation(trace))),
            CheckKind::SuperPositions => out.push(CheckRecord::single(kind, check_super_positions(trace))),
            CheckKind::Growth => out.push(CheckRecord::sweep(
                kind,
                json!({"stride": params.stride, "slack": slack}),
                growth_sweep(trace, params.stride, slack),
            )),
            CheckKind::Quality => out.push(CheckRecord::sweep(
                kind,
                json!({"stride": params.quality_stride, "slack": slack}),
                quality_sweep(trace, params.quality_stride, slack),
            )),
            CheckKind::CpAll => {
                let idx = index.get_or_insert_with(|| CpIndex::new(trace, params.stride, slack));
                for cutoff in params.cutoffs() {
                    out.push(CheckRecord::sweep(
                        kind,
                        json!({"cutoff": cutoff, "stride": params.stride, "slack": slack}),
                        idx.sweep(cutoff),
                    ));
                }
            }
            CheckKind::Rollback => {
                let idx = index.get_or_insert_with(|| CpIndex::new(trace, params.stride, slack));
                let d = rollback_depth(idx);
                let mut r = CheckRecord::single(kind, Verdict::holds(Evidence::Direct));
                r.params = json!({"stride": params.stride});
                r.value = Some(json!({"depth": d}));
                out.push(r);
            }
        }
    }
    out
}
