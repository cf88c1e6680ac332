use super::{chain_at, honest_col, monitors_clean, CheckError, Evidence, Slack, Verdict, Witness};
use crate::model::{is_prefix, prune, PartyId, Slot};
use crate::trace::Trace;

/// `|snapshot(p1, sl1)| + w <= |snapshot(p2, sl2)|` where `w` counts the lucky
/// slots in `[sl1 + lo_trim, sl2 - hi_trim]`.
///
/// Two different parties at the same slot are outside the statement.
pub fn check_chain_growth(
    trace: &Trace,
    sl1: Slot,
    p1: PartyId,
    sl2: Slot,
    p2: PartyId,
    slack: &Slack,
) -> Result<Verdict, CheckError> {
    if sl1 > sl2 {
        return Err(CheckError::SlotOrder(sl1, sl2));
    }
    let (i1, i2) = (honest_col(trace, p1)?, honest_col(trace, p2)?);
    let (c1, c2) = (chain_at(trace, i1, sl1)?, chain_at(trace, i2, sl2)?);
    if sl1 == sl2 && p1 != p2 {
        return Ok(Verdict::PreconditionFailed { reason: "distinct parties at the same slot".into() });
    }
    let (len1, len2) = (c1.len(), c2.len());
    let lo = sl1 as i64 + slack.growth_lo_trim;
    let hi = sl2 as i64 - slack.growth_hi_trim;
    let lucky = (lo.max(0)..=hi).filter(|&s| trace.slot_class(s as Slot).lucky).count() as i64;
    Ok(if len1 as i64 + lucky <= len2 as i64 {
        Verdict::holds(if lucky == 0 { Evidence::Vacuous } else { Evidence::Direct })
    } else {
        Verdict::violated(Witness::Growth { sl1, p1, sl2, p2, len1, len2, lucky })
    })
}

/// `max(0, min{adv(a, b) : [a, b] ⊆ [0, sl - 1], b - a >= span - period_slack} - count_slack)`,
/// by enumeration. Zero when `span - period_slack < 0` or no period fits.
pub fn quality_threshold(trace: &Trace, sl: Slot, span: Slot, slack: &Slack) -> i64 {
    let e = span as i64 - slack.quality_period_slack;
    if e < 0 {
        return 0;
    }
    let top = sl as i64 - 1;
    let mut best: Option<i64> = None;
    for a in 0..=top {
        for b in (a + e)..=top {
            let adv = trace.classes.honest_advantage(a, b);
            best = Some(best.map_or(adv, |m: i64| m.min(adv)));
        }
    }
    best.map_or(0, |m| (m - slack.quality_count_slack).max(0))
}

/// The window `B_i..B_j` (head-first indices, `i <= j`) of `snapshot(p, sl)`
/// (the final chain when `sl = horizon + 1`)
/// holds at least `quality_threshold(span)` honest blocks.
pub fn check_chain_quality(
    trace: &Trace,
    sl: Slot,
    p: PartyId,
    i: usize,
    j: usize,
    slack: &Slack,
) -> Result<Verdict, CheckError> {
    let col = honest_col(trace, p)?;
    let chain = chain_at(trace, col, sl)?;
    if i > j || j >= chain.len() {
        return Err(CheckError::IndexOutOfRange { i, j, len: chain.len() });
    }
    if let Err(reason) = monitors_clean(trace) {
        return Ok(Verdict::PreconditionFailed { reason });
    }
    let window: Vec<_> = chain.iter().skip(i).take(j - i + 1).collect();
    let span = window[0].slot - window[window.len() - 1].slot;
    let honest = window.iter().filter(|b| trace.is_honest_block(b)).count() as i64;
    let required = quality_threshold(trace, sl, span, slack);
    Ok(if honest >= required {
        Verdict::holds(if required == 0 { Evidence::Vacuous } else { Evidence::Direct })
    } else {
        Verdict::violated(Witness::Quality { sl, p, i, j, span, honest, required })
    })
}

/// `prune(k, snapshot(p1, sl1)) ⪯ snapshot(p2, sl2)`, or else some `a <= k` and
/// `m ∈ [sl1, sl2]` with `#super[a, m - trim] <= 2 #adv[a, m]`. All pairs are
/// enumerated.
pub fn check_common_prefix(
    trace: &Trace,
    sl1: Slot,
    p1: PartyId,
    sl2: Slot,
    p2: PartyId,
    k: Slot,
    slack: &Slack,
) -> Result<Verdict, CheckError> {
    if sl1 > sl2 {
        return Err(CheckError::SlotOrder(sl1, sl2));
    }
    let (i1, i2) = (honest_col(trace, p1)?, honest_col(trace, p2)?);
    let (c1, c2) = (chain_at(trace, i1, sl1)?, chain_at(trace, i2, sl2)?);
    if let Err(reason) = monitors_clean(trace) {
        return Ok(Verdict::PreconditionFailed { reason });
    }
    let pruned = prune(k, c1);
    if is_prefix(&pruned, c2) {
        return Ok(Verdict::holds(Evidence::CommonPrefix));
    }
    let classes = &trace.classes;
    // Every `a > sl2 - t` gives an empty super interval; one such `a` stands for all.
    let last_a = k.min((sl2 as i64 - slack.cp_super_trim + 1).max(0) as Slot);
    for m in sl1..=sl2 {
        for a in 0..=last_a {
            let sup = classes.super_in(a as i64, m as i64 - slack.cp_super_trim);
            let adv = classes.adversarial_in(a as i64, m as i64);
            if sup <= 2 * adv {
                return Ok(Verdict::holds(Evidence::BadEvent { from: a, to: m }));
            }
        }
    }
    Ok(Verdict::violated(Witness::CommonPrefix { sl1, p1, sl2, p2, k, pruned_len: pruned.len() }))
}
