//! Scenario files: a versioned JSON document bundling parties, lottery,
//! adversary, scheduler, seeds and checker parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::StrategySpec;
use crate::blocktree::TreeKind;
use crate::lottery::{HonestyMap, Lottery};
use crate::model::{splitmix64, BlockHasher, PartyId, Slot};
use crate::party::TxSelector;
use crate::properties::CheckParams;
use crate::world::{PartySpec, SchedulerPolicy, WorldParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding a master seed that replaces all three streams.
pub const SEED_ENV: &str = "NSBSIM_SEED";

const REQUIRED: [&str; 4] = ["schema", "horizon", "parties", "lottery"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LotteryConfig {
    /// Independent per-slot wins; parties missing from `q` use `q_default`.
    Bernoulli {
        #[serde(default, with = "party_keys")]
        q: BTreeMap<PartyId, f64>,
        #[serde(default)]
        q_default: f64,
    },
    Scripted {
        wins: Vec<(PartyId, Slot)>,
    },
}

/// Party-keyed maps with decimal string keys. Tagged enums buffer their
/// content, which loses serde_json's integer-key parsing.
mod party_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::PartyId;

    pub fn serialize<S: Serializer>(m: &BTreeMap<PartyId, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(p, v)| (p.0.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<PartyId, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|id| (PartyId(id), v))
                    .map_err(|_| D::Error::custom(format!("party key {k:?} is not an integer id")))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub lottery: u64,
    pub scheduler: u64,
    pub strategy: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_master(0)
    }
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds {
            lottery: splitmix64(master ^ 0x6c6f_7474),
            scheduler: splitmix64(master ^ 0x7363_6864),
            strategy: splitmix64(master ^ 0x7374_7261),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub horizon: Slot,
    #[serde(default = "default_width")]
    pub hash_width: u8,
    pub parties: Vec<PartySpec>,
    pub lottery: LotteryConfig,
    #[serde(default = "default_strategy")]
    pub adversary: StrategySpec,
    #[serde(default)]
    pub tx_selector: TxSelector,
    #[serde(default)]
    pub scheduler: SchedulerPolicy,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub filter_on_receive: bool,
    #[serde(default)]
    pub checks: CheckParams,
}

fn default_width() -> u8 {
    64
}

fn default_strategy() -> StrategySpec {
    StrategySpec::Noop
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Invalid(v) => {
                write!(f, "invalid config:")?;
                for msg in v {
                    write!(f, "\n  - {msg}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Io(_) => &[],
        }
    }
}

impl ScenarioConfig {
    /// Minimal honest-only scenario with the indexed tree.
    pub fn honest_only(n: u32, q: f64, horizon: Slot) -> Self {
        ScenarioConfig {
            schema: SCHEMA_VERSION,
            horizon,
            hash_width: 64,
            parties: (1..=n).map(|i| PartySpec { id: PartyId(i), honest: true, tree: TreeKind::Indexed }).collect(),
            lottery: LotteryConfig::Bernoulli { q: BTreeMap::new(), q_default: q },
            adversary: StrategySpec::Noop,
            tx_selector: TxSelector::Empty,
            scheduler: SchedulerPolicy::Fixed,
            seeds: Seeds::default(),
            filter_on_receive: false,
            checks: CheckParams::default(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::parse(&text)
    }

    /// Parses and validates, reporting every violation found.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(vec![format!("malformed JSON: {e}")]))?;
        let Some(obj) = value.as_object() else {
            return Err(ConfigError::Invalid(vec!["top level must be an object".into()]));
        };
        let mut errs: Vec<String> =
            REQUIRED.iter().filter(|k| !obj.contains_key(**k)).map(|k| format!("missing field `{k}`")).collect();
        if let Some(ps) = obj.get("parties").and_then(Value::as_array) {
            for (i, p) in ps.iter().enumerate() {
                for k in ["id", "honest", "tree"] {
                    if p.get(k).is_none() {
                        errs.push(format!("parties[{i}]: missing field `{k}`"));
                    }
                }
            }
        }
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.schema != SCHEMA_VERSION {
            errs.push(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.horizon == 0 {
            errs.push("horizon must be at least 1".into());
        }
        if BlockHasher::new(self.hash_width).is_err() {
            errs.push(format!("hash_width {} outside 1..=64", self.hash_width));
        }
        let mut ids = BTreeSet::new();
        for p in &self.parties {
            if p.id == PartyId::GENESIS {
                errs.push("party id 0 is reserved for genesis".into());
            }
            if !ids.insert(p.id) {
                errs.push(format!("duplicate party id {}", p.id.0));
            }
        }
        if !self.parties.iter().any(|p| p.honest) {
            errs.push("at least one party must be honest".into());
        }
        let check_q = |errs: &mut Vec<String>, what: String, q: f64| {
            if !(0.0..=1.0).contains(&q) {
                errs.push(format!("{what}: probability {q} outside [0, 1]"));
            }
        };
        match &self.lottery {
            LotteryConfig::Bernoulli { q, q_default } => {
                check_q(&mut errs, "lottery.q_default".into(), *q_default);
                for (p, &v) in q {
                    if !ids.contains(p) {
                        errs.push(format!("lottery.q names unknown party {}", p.0));
                    }
                    check_q(&mut errs, format!("lottery.q[{}]", p.0), v);
                }
            }
            LotteryConfig::Scripted { wins } => {
                for (p, _) in wins {
                    if !ids.contains(p) {
                        errs.push(format!("lottery.wins names unknown party {}", p.0));
                    }
                }
            }
        }
        if let StrategySpec::Split { partition } = &self.adversary {
            for p in partition {
                if !ids.contains(p) {
                    errs.push(format!("adversary.partition names unknown party {}", p.0));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces the seeds with ones derived from `NSBSIM_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        match std::env::var(SEED_ENV) {
            Ok(s) => {
                let master = s
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| ConfigError::Invalid(vec![format!("{SEED_ENV}={s:?} is not a u64")]))?;
                self.seeds = Seeds::from_master(master);
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }

    pub fn honesty(&self) -> HonestyMap {
        HonestyMap::new(self.parties.iter().map(|p| (p.id, p.honest)))
    }

    /// Per-party win probability under a Bernoulli lottery.
    pub fn q_map(&self) -> Option<BTreeMap<PartyId, f64>> {
        match &self.lottery {
            LotteryConfig::Bernoulli { q, q_default } => {
                Some(self.parties.iter().map(|p| (p.id, q.get(&p.id).copied().unwrap_or(*q_default))).collect())
            }
            LotteryConfig::Scripted { .. } => None,
        }
    }

    pub fn to_params(&self) -> Result<WorldParams, ConfigError> {
        self.validate()?;
        let invalid = |e: String| ConfigError::Invalid(vec![e]);
        let ids = self.parties.iter().map(|p| p.id);
        let lottery = match &self.lottery {
            LotteryConfig::Bernoulli { .. } => {
                Lottery::bernoulli(ids, self.q_map().expect("bernoulli"), self.seeds.lottery)
            }
            LotteryConfig::Scripted { wins } => Lottery::scripted(ids, wins.iter().copied()),
        }
        .map_err(|e| invalid(e.to_string()))?;
        Ok(WorldParams {
            horizon: self.horizon,
            hasher: BlockHasher::new(self.hash_width).map_err(|e| invalid(e.to_string()))?,
            parties: self.parties.clone(),
            lottery,
            strategy: self.adversary.clone(),
            tx_selector: self.tx_selector,
            scheduler: self.scheduler,
            scheduler_seed: self.seeds.scheduler,
            filter_on_receive: self.filter_on_receive,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": 1,
        "horizon": 5,
        "parties": [{"id": 1, "honest": true, "tree": "indexed"}],
        "lottery": {"type": "bernoulli", "q": {"1": 1.0}}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.horizon, 5);
        assert_eq!(cfg.q_map().unwrap()[&PartyId(1)], 1.0);
        assert_eq!(cfg.adversary, StrategySpec::Noop);
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = MINIMAL.replace(
            r#"[{"id": 1, "honest": true, "tree": "indexed"}]"#,
            r#"[{"id": 3, "honest": true, "tree": "indexed"}, {"id": 3, "honest": false, "tree": "reference"}]"#,
        );
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.violations().iter().any(|v| v.contains("duplicate party id 3")), "{err}");
    }

    #[test]
    fn all_violations_are_collected() {
        let text = r#"{
            "schema": 1, "horizon": 0,
            "parties": [{"id": 1, "honest": false, "tree": "indexed"}],
            "lottery": {"type": "bernoulli", "q": {"1": 1.5}}
        }"#;
        let err = ScenarioConfig::parse(text).unwrap_err();
        let v = err.violations();
        assert!(v.iter().any(|m| m.contains("horizon")));
        assert!(v.iter().any(|m| m.contains("honest")));
        assert!(v.iter().any(|m| m.contains("1.5")));
        let err = ScenarioConfig::parse(r#"{"parties": [{"id": 1}]}"#).unwrap_err();
        assert_eq!(err.violations().len(), 5, "{err}");
    }

    #[test]
    fn emit_parse_round_trip() {
        let mut cfg = ScenarioConfig::honest_only(4, 0.2, 50);
        cfg.parties[3].honest = false;
        cfg.adversary = StrategySpec::Split { partition: vec![PartyId(1)] };
        cfg.lottery = LotteryConfig::Scripted { wins: vec![(PartyId(1), 2), (PartyId(4), 3)] };
        cfg.checks.k = vec![3, 7];
        assert_eq!(ScenarioConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn master_seed_derives_distinct_streams() {
        let s = Seeds::from_master(9);
        assert!(s.lottery != s.scheduler && s.scheduler != s.strategy);
        assert_eq!(s, Seeds::from_master(9));
    }
}
