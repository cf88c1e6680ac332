//! Multi-seed runs: one report per seed plus an aggregate of verdict counts
//! per checker. Reports come out in seed order whether or not seeds run
//! concurrently.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig, Seeds};
use crate::model::BlockHasher;
use crate::properties::{run_checks, CheckKind, CheckRecord};
use crate::trace::{RunSummary, Trace};
use crate::world;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub master_seed: u64,
    pub seeds: Seeds,
    /// 64-bit digest of the line-delimited trace.
    pub trace_digest: String,
    pub summary: RunSummary,
    pub checks: Vec<CheckRecord>,
}

impl SeedReport {
    pub fn violated(&self) -> bool {
        self.checks.iter().any(|r| r.verdict.is_violated())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerTally {
    pub holds: u64,
    pub precondition_failed: u64,
    pub violated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub reports: Vec<SeedReport>,
    /// Keyed by checker name; counts seeds, not pair-states.
    pub aggregate: BTreeMap<String, CheckerTally>,
}

impl BatchReport {
    pub fn any_violated(&self) -> bool {
        self.aggregate.values().any(|t| t.violated > 0)
    }
}

pub fn trace_digest(trace: &Trace) -> String {
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).expect("writing to memory");
    trace.write_blocks_jsonl(&mut buf).expect("writing to memory");
    BlockHasher::default().hash_bytes(&buf).to_string()
}

/// Runs `cfg` with seeds derived from `master` and applies `checks`.
pub fn run_seed(cfg: &ScenarioConfig, master: u64, checks: &[CheckKind]) -> Result<(Trace, SeedReport), ConfigError> {
    let mut cfg = cfg.clone();
    cfg.seeds = Seeds::from_master(master);
    let params = cfg.to_params()?;
    let trace = world::run(&params).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    let records = run_checks(&trace, checks, &cfg.checks);
    let report = SeedReport {
        master_seed: master,
        seeds: cfg.seeds,
        trace_digest: trace_digest(&trace),
        summary: trace.summary(),
        checks: records,
    };
    Ok((trace, report))
}

pub fn run_batch(
    cfg: &ScenarioConfig,
    masters: &[u64],
    checks: &[CheckKind],
    parallel: bool,
) -> Result<BatchReport, ConfigError> {
    let one = |&m: &u64| run_seed(cfg, m, checks).map(|(_, r)| r);
    let reports: Vec<SeedReport> = if parallel {
        masters.par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        masters.iter().map(one).collect::<Result<_, _>>()?
    };
    let mut aggregate: BTreeMap<String, CheckerTally> = BTreeMap::new();
    for r in &reports {
        let mut worst: BTreeMap<&str, u8> = BTreeMap::new();
        for c in &r.checks {
            let w = worst.entry(c.checker.as_str()).or_default();
            *w = (*w).max(c.verdict.severity());
        }
        for (name, sev) in worst {
            let t = aggregate.entry(name.to_string()).or_default();
            match sev {
                0 => t.holds += 1,
                1 => t.precondition_failed += 1,
                _ => t.violated += 1,
            }
        }
    }
    Ok(BatchReport { reports, aggregate })
}
