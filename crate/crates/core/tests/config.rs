mod common;

use std::collections::BTreeMap;

use nsbsim::adversary::StrategySpec;
use nsbsim::batch::{run_seed, trace_digest};
use nsbsim::blocktree::TreeKind;
use nsbsim::config::{LotteryConfig, ScenarioConfig, Seeds};
use nsbsim::party::TxSelector;
use nsbsim::properties::CheckKind;
use nsbsim::world::{PartySpec, SchedulerPolicy};
use nsbsim::PartyId;
use proptest::prelude::*;

fn config_strategy() -> impl Strategy<Value = ScenarioConfig> {
    (
        1u32..7,
        any::<u8>(),
        1u64..60,
        8u8..=64,
        prop::collection::vec(0.0f64..=1.0, 6),
        0usize..5,
        (any::<bool>(), any::<bool>(), any::<bool>()),
        (any::<u64>(), any::<u64>(), any::<u64>()),
    )
        .prop_map(|(n, honest_bits, horizon, width, q, strategy, (slot_tagged, random, filter), (l, s, st))| {
            let parties: Vec<PartySpec> = (1..=n)
                .map(|i| PartySpec {
                    id: PartyId(i),
                    honest: i == 1 || honest_bits & (1 << i) == 0,
                    tree: if i % 2 == 0 { TreeKind::Reference } else { TreeKind::Indexed },
                })
                .collect();
            let mut cfg = ScenarioConfig::honest_only(n, 0.1, horizon);
            cfg.parties = parties;
            cfg.hash_width = width;
            let q: BTreeMap<PartyId, f64> = (1..=n).map(|i| (PartyId(i), q[i as usize - 1])).collect();
            cfg.lottery = LotteryConfig::Bernoulli { q, q_default: 0.0 };
            cfg.adversary = common::all_strategies(1).swap_remove(strategy);
            if let StrategySpec::Split { partition } = &mut cfg.adversary {
                *partition = vec![PartyId(1)];
            }
            cfg.tx_selector = if slot_tagged { TxSelector::SlotTagged } else { TxSelector::Empty };
            cfg.scheduler = if random { SchedulerPolicy::SeededRandom } else { SchedulerPolicy::Fixed };
            cfg.filter_on_receive = filter;
            cfg.seeds = Seeds { lottery: l, scheduler: s, strategy: st };
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn emitted_configs_parse_back(cfg in config_strategy()) {
        cfg.validate().unwrap();
        let text = cfg.emit();
        let back = ScenarioConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.emit(), text);
    }

    #[test]
    fn reparsed_configs_replay_identically(cfg in config_strategy()) {
        let back = ScenarioConfig::parse(&cfg.emit()).unwrap();
        let a = common::run(&cfg);
        let b = common::run(&back);
        prop_assert_eq!(trace_digest(&a), trace_digest(&b));
    }
}

#[test]
fn master_seed_reports_are_reproducible() {
    let cfg = common::scenario(6, 4, 0.1, 150, StrategySpec::Withhold { release_lead: 1 }, 0);
    let (_, a) = run_seed(&cfg, 99, &CheckKind::ALL).unwrap();
    let (_, b) = run_seed(&cfg, 99, &CheckKind::ALL).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let (_, c) = run_seed(&cfg, 100, &CheckKind::ALL).unwrap();
    assert_ne!(a.trace_digest, c.trace_digest);
}

/// Honest steps inside a phase only queue messages for the next delivery, so
/// without an adversary reacting mid-phase the views ignore execution order.
#[test]
fn honest_views_do_not_depend_on_execution_order() {
    for (n, honest) in [(5, 5), (5, 3)] {
        let mut fixed = common::scenario(n, honest, 0.15, 120, StrategySpec::Noop, 7 + honest as u64);
        fixed.scheduler = SchedulerPolicy::Fixed;
        let base = common::run(&fixed);
        for s in 0..4 {
            let mut shuffled = fixed.clone();
            shuffled.scheduler = SchedulerPolicy::SeededRandom;
            shuffled.seeds.scheduler = s;
            let t = common::run(&shuffled);
            assert_eq!(t.snapshots, base.snapshots, "{honest} honest, scheduler seed {s}");
            assert_eq!(t.final_chains, base.final_chains);
        }
    }
}

#[test]
fn unknown_fields_and_bad_values_are_reported_together() {
    let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::honest_only(3, 0.2, 10).emit()).unwrap();
    v["horizon"] = serde_json::json!(0);
    v["hash_width"] = serde_json::json!(90);
    let err = ScenarioConfig::parse(&v.to_string()).unwrap_err();
    assert!(err.violations().len() >= 2, "{err}");
    v["extra"] = serde_json::json!(1);
    assert!(ScenarioConfig::parse(&v.to_string()).is_err());
}
