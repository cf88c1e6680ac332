//! Slot-type success probabilities, Chernoff tails and the union-bound
//! estimates for common prefix, chain quality and chain growth.
//!
//! Slot indicators are treated as independent across slots.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lottery::{classify_slot, HonestyMap, Lottery};
use crate::model::{PartyId, Slot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("probability {q} of {party} is outside [0, 1]")]
    ProbabilityOutOfRange { party: PartyId, q: f64 },
    #[error("{name} = {value} is outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("k = {k} exceeds the current slot {sl_now}")]
    CutoffAfterNow { k: Slot, sl_now: Slot },
    #[error(
        "the bound is vacuous: epsilon {actual:.6} does not exceed the required {required:.6}; \
         lower delta/delta' or strengthen the honest majority"
    )]
    Vacuous { required: f64, actual: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotProbs {
    pub p_ls: f64,
    pub p_ss: f64,
    pub p_as: f64,
}

/// Lucky, super and adversarial slot probabilities for per-party win rates `q`.
/// Parties absent from `honesty` count as corrupted, like in the simulator.
pub fn slot_probs(q: &BTreeMap<PartyId, f64>, honesty: &HonestyMap) -> Result<SlotProbs, BoundsError> {
    for (&party, &qp) in q {
        if !(0.0..=1.0).contains(&qp) {
            return Err(BoundsError::ProbabilityOutOfRange { party, q: qp });
        }
    }
    let honest: Vec<f64> = q.iter().filter(|(p, _)| honesty.is_honest(**p)).map(|(_, &v)| v).collect();
    let none_honest: f64 = honest.iter().map(|v| 1.0 - v).product();
    let none_adv: f64 = q.iter().filter(|(p, _)| !honesty.is_honest(**p)).map(|(_, &v)| 1.0 - v).product();
    let p_ss: f64 = (0..honest.len())
        .map(|h| honest[h] * honest.iter().enumerate().filter(|&(o, _)| o != h).map(|(_, v)| 1.0 - v).product::<f64>())
        .sum();
    Ok(SlotProbs { p_ls: 1.0 - none_honest, p_ss: p_ss.min(1.0 - none_honest), p_as: 1.0 - none_adv })
}

fn check_unit(name: &'static str, v: f64) -> Result<(), BoundsError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(BoundsError::Domain { name, value: v, range: "[0, 1]" })
    }
}

fn check_mu(mu: f64) -> Result<(), BoundsError> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Domain { name: "mu", value: mu, range: "[0, inf)" })
    }
}

/// `Pr[X <= (1 - delta) mu] <= exp(-delta^2 mu / 2)`.
pub fn chernoff_lower(mu: f64, delta: f64) -> Result<f64, BoundsError> {
    check_mu(mu)?;
    check_unit("delta", delta)?;
    Ok((-delta * delta * mu / 2.0).exp())
}

/// `Pr[X >= (1 + delta) mu] <= exp(-delta^2 mu / 3)`.
pub fn chernoff_upper(mu: f64, delta: f64) -> Result<f64, BoundsError> {
    check_mu(mu)?;
    check_unit("delta", delta)?;
    Ok((-delta * delta * mu / 3.0).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCheck {
    pub required: f64,
    pub actual: f64,
    pub satisfied: bool,
}

fn epsilon_condition(
    p_good: f64,
    factor: f64,
    p_as: f64,
    delta: f64,
    delta_p: f64,
) -> Result<EpsilonCheck, BoundsError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(BoundsError::Domain { name: "delta", value: delta, range: "[0, 1)" });
    }
    check_unit("delta'", delta_p)?;
    let required = ((1.0 + delta_p) / (1.0 - delta) - 1.0) * factor * p_as;
    let actual = p_good - factor * p_as;
    Ok(EpsilonCheck { required, actual, satisfied: actual > required })
}

/// `p_SS - 2 p_AS` against `((1 + delta') / (1 - delta) - 1) 2 p_AS`.
pub fn cp_epsilon_condition(probs: &SlotProbs, delta: f64, delta_p: f64) -> Result<EpsilonCheck, BoundsError> {
    epsilon_condition(probs.p_ss, 2.0, probs.p_as, delta, delta_p)
}

/// `p_LS - p_AS` against `((1 + delta') / (1 - delta) - 1) p_AS`.
pub fn cq_epsilon_condition(probs: &SlotProbs, delta: f64, delta_p: f64) -> Result<EpsilonCheck, BoundsError> {
    epsilon_condition(probs.p_ls, 1.0, probs.p_as, delta, delta_p)
}

/// Per-length union-bound terms `exp(-delta^2 r p / 2) + exp(-delta'^2 r p_AS / 3)` for
/// `r ∈ [k, sl_now]`.
pub fn union_terms(k: Slot, sl_now: Slot, p_good: f64, p_as: f64, delta: f64, delta_p: f64) -> Vec<f64> {
    (k..=sl_now)
        .map(|r| {
            let r = r as f64;
            (-delta * delta * r * p_good / 2.0).exp() + (-delta_p * delta_p * r * p_as / 3.0).exp()
        })
        .collect()
}

fn failure_bound(
    eps: EpsilonCheck,
    k: Slot,
    sl_now: Slot,
    p_good: f64,
    p_as: f64,
    delta: f64,
    delta_p: f64,
) -> Result<f64, BoundsError> {
    if k > sl_now {
        return Err(BoundsError::CutoffAfterNow { k, sl_now });
    }
    if !eps.satisfied {
        return Err(BoundsError::Vacuous { required: eps.required, actual: eps.actual });
    }
    let sum: f64 = union_terms(k, sl_now, p_good, p_as, delta, delta_p).iter().sum();
    Ok(sum.clamp(0.0, 1.0))
}

/// Union bound on a common-prefix failure with cutoff `k` at slot `sl_now`.
pub fn cp_failure_bound(
    k: Slot,
    sl_now: Slot,
    probs: &SlotProbs,
    delta: f64,
    delta_p: f64,
) -> Result<f64, BoundsError> {
    let eps = cp_epsilon_condition(probs, delta, delta_p)?;
    failure_bound(eps, k, sl_now, probs.p_ss, probs.p_as, delta, delta_p)
}

/// The same union bound with lucky slots in place of super slots.
pub fn cq_failure_bound(
    k: Slot,
    sl_now: Slot,
    probs: &SlotProbs,
    delta: f64,
    delta_p: f64,
) -> Result<f64, BoundsError> {
    let eps = cq_epsilon_condition(probs, delta, delta_p)?;
    failure_bound(eps, k, sl_now, probs.p_ls, probs.p_as, delta, delta_p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub min_growth: u64,
    pub failure_prob: f64,
}

/// At least `ceil((1 - delta) r p_LS)` lucky slots in `r` slots except with
/// probability `chernoff_lower(r p_LS, delta)`.
pub fn cg_growth_bound(r: Slot, delta: f64, p_ls: f64) -> Result<GrowthBound, BoundsError> {
    check_unit("p_LS", p_ls)?;
    let mu = r as f64 * p_ls;
    let failure_prob = chernoff_lower(mu, delta)?;
    // Absorbs rounding so that exact products land on their integer.
    let min_growth = ((1.0 - delta) * mu - 1e-9).ceil().max(0.0) as u64;
    Ok(GrowthBound { min_growth, failure_prob })
}

/// Fraction of `trials` sums of `n` Bernoulli(`p`) draws at or below `(1 - delta) n p`.
pub fn empirical_lower_tail(n: u64, p: f64, delta: f64, trials: u64, seed: u64) -> f64 {
    let dist = Binomial::new(n, p).expect("p in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut = (1.0 - delta) * n as f64 * p;
    let hits = (0..trials).filter(|_| dist.sample(&mut rng) as f64 <= cut).count();
    hits as f64 / trials as f64
}

/// Fraction of `trials` sums of `n` Bernoulli(`p`) draws at or above `(1 + delta) n p`.
pub fn empirical_upper_tail(n: u64, p: f64, delta: f64, trials: u64, seed: u64) -> f64 {
    let dist = Binomial::new(n, p).expect("p in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut = (1.0 + delta) * n as f64 * p;
    let hits = (0..trials).filter(|_| dist.sample(&mut rng) as f64 >= cut).count();
    hits as f64 / trials as f64
}

/// Slot-class frequencies over slots `1..=samples` of the simulator's lottery.
pub fn empirical_slot_probs(
    q: &BTreeMap<PartyId, f64>,
    honesty: &HonestyMap,
    samples: u64,
    seed: u64,
) -> Result<SlotProbs, BoundsError> {
    let lottery = Lottery::bernoulli(q.keys().copied(), q.clone(), seed).map_err(|e| match e {
        crate::lottery::LotteryError::ProbabilityOutOfRange { party, q } => {
            BoundsError::ProbabilityOutOfRange { party, q }
        }
        crate::lottery::LotteryError::UnknownParty(_) => unreachable!("parties come from q"),
    })?;
    let (mut ls, mut ss, mut as_) = (0u64, 0u64, 0u64);
    for sl in 1..=samples {
        let c = classify_slot(sl, &lottery, honesty);
        ls += u64::from(c.lucky);
        ss += u64::from(c.super_);
        as_ += u64::from(c.adversarial);
    }
    let n = samples.max(1) as f64;
    Ok(SlotProbs { p_ls: ls as f64 / n, p_ss: ss as f64 / n, p_as: as_ as f64 / n })
}
