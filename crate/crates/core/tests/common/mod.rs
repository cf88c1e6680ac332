#![allow(dead_code)]

use std::collections::BTreeMap;

use nsbsim::adversary::StrategySpec;
use nsbsim::blocktree::TreeKind;
use nsbsim::config::{LotteryConfig, ScenarioConfig, Seeds};
use nsbsim::trace::Trace;
use nsbsim::world::{self, PartySpec};
use nsbsim::PartyId;

/// `n` parties with ids `1..=n`; the last `n - honest` are corrupted.
pub fn scenario(n: u32, honest: u32, q: f64, horizon: u64, strategy: StrategySpec, master: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::honest_only(n, q, horizon);
    for p in &mut cfg.parties {
        p.honest = p.id.0 <= honest;
    }
    cfg.adversary = strategy;
    cfg.seeds = Seeds::from_master(master);
    cfg
}

/// Per-party rates so that corrupted parties hold `adv_share` of the total rate `total`.
pub fn stake_split(cfg: &mut ScenarioConfig, total: f64, adv_share: f64) {
    let honest = cfg.parties.iter().filter(|p| p.honest).count() as f64;
    let corrupted = cfg.parties.len() as f64 - honest;
    let q: BTreeMap<PartyId, f64> = cfg
        .parties
        .iter()
        .map(|p| {
            let v = if p.honest { total * (1.0 - adv_share) / honest } else { total * adv_share / corrupted };
            (p.id, v)
        })
        .collect();
    cfg.lottery = LotteryConfig::Bernoulli { q, q_default: 0.0 };
}

pub fn with_tree(mut cfg: ScenarioConfig, tree: TreeKind) -> ScenarioConfig {
    cfg.parties = cfg.parties.iter().map(|p| PartySpec { tree, ..*p }).collect();
    cfg
}

pub fn run(cfg: &ScenarioConfig) -> Trace {
    world::run(&cfg.to_params().expect("valid scenario")).expect("world runs")
}

pub fn all_strategies(honest: u32) -> Vec<StrategySpec> {
    let split: Vec<PartyId> = (1..=honest / 2).map(PartyId).collect();
    vec![
        StrategySpec::Noop,
        StrategySpec::Withhold { release_lead: 0 },
        StrategySpec::Withhold { release_lead: 2 },
        StrategySpec::Equivocate,
        StrategySpec::Split { partition: split },
    ]
}
