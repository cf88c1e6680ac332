//! Slot leader lottery, honesty map and slot classification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{splitmix64, PartyId, Slot, WinnerPredicate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LotteryError {
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
    #[error("win probability for {party} must lie in [0, 1], got {q}")]
    ProbabilityOutOfRange { party: PartyId, q: f64 },
}

#[derive(Clone, Debug, PartialEq)]
enum Draw {
    Bernoulli { q: BTreeMap<PartyId, f64>, seed: u64 },
    Scripted { wins: BTreeSet<(PartyId, Slot)> },
}

/// A random function `(party, slot) -> bool`. Bernoulli draws are derived from
/// `hash(seed, party, slot)`, so every query is stateless and order-free.
///
/// Slot 0 is reserved for genesis and has no winners.
#[derive(Clone, Debug, PartialEq)]
pub struct Lottery {
    parties: BTreeSet<PartyId>,
    draw: Draw,
}

impl Lottery {
    /// Parties missing from `q` never win.
    pub fn bernoulli(
        parties: impl IntoIterator<Item = PartyId>,
        q: BTreeMap<PartyId, f64>,
        seed: u64,
    ) -> Result<Self, LotteryError> {
        let parties: BTreeSet<PartyId> = parties.into_iter().collect();
        for (&party, &qp) in &q {
            if !parties.contains(&party) {
                return Err(LotteryError::UnknownParty(party));
            }
            if !(0.0..=1.0).contains(&qp) {
                return Err(LotteryError::ProbabilityOutOfRange { party, q: qp });
            }
        }
        Ok(Lottery { parties, draw: Draw::Bernoulli { q, seed } })
    }

    pub fn scripted(
        parties: impl IntoIterator<Item = PartyId>,
        wins: impl IntoIterator<Item = (PartyId, Slot)>,
    ) -> Result<Self, LotteryError> {
        let parties: BTreeSet<PartyId> = parties.into_iter().collect();
        let wins: BTreeSet<(PartyId, Slot)> = wins.into_iter().collect();
        if let Some(&(p, _)) = wins.iter().find(|(p, _)| !parties.contains(p)) {
            return Err(LotteryError::UnknownParty(p));
        }
        Ok(Lottery { parties, draw: Draw::Scripted { wins } })
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.parties.iter().copied()
    }

    pub fn winner(&self, p: PartyId, sl: Slot) -> Result<bool, LotteryError> {
        if !self.parties.contains(&p) {
            return Err(LotteryError::UnknownParty(p));
        }
        if sl == 0 {
            return Ok(false);
        }
        Ok(match &self.draw {
            Draw::Scripted { wins } => wins.contains(&(p, sl)),
            Draw::Bernoulli { q, seed } => {
                let qp = q.get(&p).copied().unwrap_or(0.0);
                uniform(*seed, p, sl) < qp
            }
        })
    }

    /// Winners of `sl` in ascending id order.
    pub fn winners(&self, sl: Slot) -> Vec<PartyId> {
        self.parties.iter().copied().filter(|&p| self.is_winner(p, sl)).collect()
    }
}

impl WinnerPredicate for Lottery {
    fn is_winner(&self, party: PartyId, slot: Slot) -> bool {
        self.winner(party, slot).unwrap_or(false)
    }
}

/// 53-bit uniform draw in `[0, 1)` keyed by `(seed, party, slot)`.
pub fn uniform(seed: u64, p: PartyId, sl: Slot) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ u64::from(p.0)) ^ sl);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Static corruption: `honest(p)` is fixed for the whole run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HonestyMap {
    honest: BTreeMap<PartyId, bool>,
}

impl HonestyMap {
    pub fn new(entries: impl IntoIterator<Item = (PartyId, bool)>) -> Self {
        HonestyMap { honest: entries.into_iter().collect() }
    }

    /// Unknown parties are treated as corrupted; genesis is always honest.
    pub fn is_honest(&self, p: PartyId) -> bool {
        p == PartyId::GENESIS || self.honest.get(&p).copied().unwrap_or(false)
    }

    pub fn honest_parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.honest.iter().filter(|(_, &h)| h).map(|(&p, _)| p)
    }

    pub fn corrupted_parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.honest.iter().filter(|(_, &h)| !h).map(|(&p, _)| p)
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.honest.keys().copied()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotClass {
    pub lucky: bool,
    #[serde(rename = "super")]
    pub super_: bool,
    pub adversarial: bool,
}

pub fn classify_slot(sl: Slot, lottery: &Lottery, honesty: &HonestyMap) -> SlotClass {
    let mut honest_wins = 0usize;
    let mut adversarial = false;
    for p in lottery.parties() {
        if lottery.is_winner(p, sl) {
            if honesty.is_honest(p) {
                honest_wins += 1;
            } else {
                adversarial = true;
            }
        }
    }
    SlotClass { lucky: honest_wins >= 1, super_: honest_wins == 1, adversarial }
}

/// Slot classes for `0..=horizon` with prefix counts for O(1) interval queries.
/// All intervals are closed; an interval with `lo > hi` is empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotClasses {
    classes: Vec<SlotClass>,
    lucky: Vec<u32>,
    super_: Vec<u32>,
    adv: Vec<u32>,
}

impl SlotClasses {
    pub fn new(classes: Vec<SlotClass>) -> Self {
        let prefix = |f: fn(&SlotClass) -> bool| {
            let mut v = Vec::with_capacity(classes.len() + 1);
            v.push(0u32);
            for c in &classes {
                v.push(v.last().unwrap() + u32::from(f(c)));
            }
            v
        };
        let lucky = prefix(|c| c.lucky);
        let super_ = prefix(|c| c.super_);
        let adv = prefix(|c| c.adversarial);
        SlotClasses { classes, lucky, super_, adv }
    }

    pub fn compute(horizon: Slot, lottery: &Lottery, honesty: &HonestyMap) -> Self {
        SlotClasses::new((0..=horizon).map(|sl| classify_slot(sl, lottery, honesty)).collect())
    }

    pub fn get(&self, sl: Slot) -> Option<SlotClass> {
        self.classes.get(sl as usize).copied()
    }

    pub fn as_slice(&self) -> &[SlotClass] {
        &self.classes
    }

    /// Number of classified slots (`horizon + 1`).
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    fn count(prefix: &[u32], lo: i64, hi: i64) -> i64 {
        let n = prefix.len() as i64 - 1;
        let lo = lo.max(0);
        let hi = hi.min(n - 1);
        if lo > hi {
            return 0;
        }
        i64::from(prefix[(hi + 1) as usize] - prefix[lo as usize])
    }

    /// Signed bounds so callers can form intervals like `[a, m - 2]` freely.
    pub fn lucky_in(&self, lo: i64, hi: i64) -> i64 {
        Self::count(&self.lucky, lo, hi)
    }

    pub fn super_in(&self, lo: i64, hi: i64) -> i64 {
        Self::count(&self.super_, lo, hi)
    }

    pub fn adversarial_in(&self, lo: i64, hi: i64) -> i64 {
        Self::count(&self.adv, lo, hi)
    }

    /// `#lucky - #adversarial` over `[lo, hi]`; may be negative.
    pub fn honest_advantage(&self, lo: i64, hi: i64) -> i64 {
        self.lucky_in(lo, hi) - self.adversarial_in(lo, hi)
    }
}

/// `#lucky - #adversarial` over the closed interval `[sl_lo, sl_hi]`.
pub fn honest_advantage(sl_lo: Slot, sl_hi: Slot, lottery: &Lottery, honesty: &HonestyMap) -> i64 {
    (sl_lo..=sl_hi)
        .map(|sl| {
            let c = classify_slot(sl, lottery, honesty);
            i64::from(c.lucky) - i64::from(c.adversarial)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn ids(n: u32) -> Vec<PartyId> {
        (1..=n).map(PartyId).collect()
    }

    #[test]
    fn scripted_lookup() {
        let l = Lottery::scripted(ids(1), [(PartyId(1), 3)]).unwrap();
        assert!(l.winner(PartyId(1), 3).unwrap());
        assert!(!l.winner(PartyId(1), 4).unwrap());
        assert_eq!(l.winner(PartyId(9), 3), Err(LotteryError::UnknownParty(PartyId(9))));
        assert!(!l.is_winner(PartyId(9), 3));
    }

    #[test]
    fn bernoulli_zero_never_wins() {
        let q = BTreeMap::from([(PartyId(1), 0.0)]);
        let l = Lottery::bernoulli(ids(1), q, 7).unwrap();
        assert!((0..10_000).all(|sl| !l.winner(PartyId(1), sl).unwrap()));
    }

    #[test]
    fn bernoulli_one_wins_every_nonzero_slot() {
        let q = BTreeMap::from([(PartyId(1), 1.0)]);
        let l = Lottery::bernoulli(ids(1), q, 7).unwrap();
        assert!(!l.winner(PartyId(1), 0).unwrap());
        assert!((1..10_000).all(|sl| l.winner(PartyId(1), sl).unwrap()));
    }

    #[test]
    fn bernoulli_rate_within_three_sigma() {
        // sigma = sqrt(0.1 * 0.9 / 1e5) ~ 0.00095; 3 sigma band is [0.097, 0.103].
        let q = BTreeMap::from([(PartyId(1), 0.1)]);
        let l = Lottery::bernoulli(ids(1), q, 42).unwrap();
        let wins = (1..=100_000u64).filter(|&sl| l.winner(PartyId(1), sl).unwrap()).count();
        let rate = wins as f64 / 1e5;
        assert!((0.094..=0.106).contains(&rate), "rate {rate}");
    }

    #[test]
    fn rejects_bad_probability() {
        let q = BTreeMap::from([(PartyId(1), 1.5)]);
        assert!(matches!(Lottery::bernoulli(ids(1), q, 0), Err(LotteryError::ProbabilityOutOfRange { .. })));
    }

    fn scripted_honesty(wins: &[(u32, Slot)]) -> (Lottery, HonestyMap) {
        let l = Lottery::scripted(ids(3), wins.iter().map(|&(p, s)| (PartyId(p), s))).unwrap();
        let h = HonestyMap::new([(PartyId(1), true), (PartyId(2), true), (PartyId(3), false)]);
        (l, h)
    }

    #[test]
    fn classification_examples() {
        let (l, h) = scripted_honesty(&[(1, 1), (1, 2), (2, 2), (1, 3), (3, 3), (3, 4)]);
        let c = |sl| classify_slot(sl, &l, &h);
        assert_eq!(c(1), SlotClass { lucky: true, super_: true, adversarial: false });
        assert_eq!(c(2), SlotClass { lucky: true, super_: false, adversarial: false });
        assert_eq!(c(3), SlotClass { lucky: true, super_: true, adversarial: true });
        assert_eq!(c(4), SlotClass { lucky: false, super_: false, adversarial: true });
        assert_eq!(c(5), SlotClass::default());
    }

    #[test]
    fn advantage_examples() {
        let (l, h) = scripted_honesty(&[(1, 1)]);
        assert_eq!(honest_advantage(1, 1, &l, &h), 1);

        let five_two = [(1, 1), (2, 2), (1, 3), (2, 4), (1, 5), (3, 2), (3, 6)];
        let (l, h) = scripted_honesty(&five_two);
        assert_eq!(honest_advantage(1, 6, &l, &h), 3);

        let (l, h) = scripted_honesty(&[(3, 1), (3, 2), (3, 3)]);
        assert_eq!(honest_advantage(1, 3, &l, &h), -3);
    }

    #[test]
    fn memoization_is_order_free() {
        let q = BTreeMap::from([(PartyId(1), 0.3), (PartyId(2), 0.6)]);
        let l = Lottery::bernoulli(ids(2), q, 99).unwrap();
        let mut log: Vec<(PartyId, Slot)> = (0..500).flat_map(|s| [(PartyId(1), s), (PartyId(2), s)]).collect();
        let forward: BTreeMap<_, _> = log.iter().map(|&(p, s)| ((p, s), l.is_winner(p, s))).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        log.extend(log.clone());
        log.shuffle(&mut rng);
        for (p, s) in log {
            assert_eq!(l.is_winner(p, s), forward[&(p, s)]);
        }
    }

    #[test]
    fn scripted_and_bernoulli_with_same_table_classify_alike() {
        let q = BTreeMap::from([(PartyId(1), 0.4), (PartyId(2), 0.4), (PartyId(3), 0.4)]);
        let b = Lottery::bernoulli(ids(3), q, 5).unwrap();
        let table: Vec<(PartyId, Slot)> =
            (0..300).flat_map(|s| b.winners(s).into_iter().map(move |p| (p, s))).collect();
        let s = Lottery::scripted(ids(3), table).unwrap();
        let h = HonestyMap::new([(PartyId(1), true), (PartyId(2), true), (PartyId(3), false)]);
        for sl in 0..300 {
            assert_eq!(classify_slot(sl, &b, &h), classify_slot(sl, &s, &h));
        }
    }

    proptest! {
        #[test]
        fn super_implies_lucky(seed in any::<u64>(), sl in 0u64..10_000) {
            let q = BTreeMap::from([(PartyId(1), 0.5), (PartyId(2), 0.5), (PartyId(3), 0.5)]);
            let l = Lottery::bernoulli(ids(3), q, seed).unwrap();
            let h = HonestyMap::new([(PartyId(1), true), (PartyId(2), true), (PartyId(3), false)]);
            let c = classify_slot(sl, &l, &h);
            prop_assert!(!c.super_ || c.lucky);
        }

        #[test]
        fn advantage_is_additive(seed in any::<u64>(), a in 0u64..200, len1 in 0u64..100, len2 in 1u64..100) {
            let q = BTreeMap::from([(PartyId(1), 0.3), (PartyId(2), 0.2), (PartyId(3), 0.4)]);
            let l = Lottery::bernoulli(ids(3), q, seed).unwrap();
            let h = HonestyMap::new([(PartyId(1), true), (PartyId(2), true), (PartyId(3), false)]);
            let m = a + len1;
            let b = m + len2;
            let whole = honest_advantage(a, b, &l, &h);
            let split = honest_advantage(a, m, &l, &h) + honest_advantage(m + 1, b, &l, &h);
            prop_assert_eq!(whole, split);
            let classes = SlotClasses::compute(b, &l, &h);
            prop_assert_eq!(classes.honest_advantage(a as i64, b as i64), whole);
        }
    }
}
