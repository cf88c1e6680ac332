//! Python bindings: scenarios, runs, checkers, bounds and the block-tree
//! conformance harness. Structured results cross the boundary as JSON text.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use nsbsim::blocktree::{conformance_check, differential_check, TreeKind};
use nsbsim::bounds::{self, SlotProbs};
use nsbsim::config::ScenarioConfig;
use nsbsim::lottery::HonestyMap;
use nsbsim::properties::{self as props, CheckKind, Slack, Verdict};
use nsbsim::trace::Trace as CoreTrace;
use nsbsim::{Block, BlockHasher, Hash, PartyId, Payload};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(v: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(v).map_err(value_err)
}

/// A validated scenario file.
#[pyclass(module = "pynsb", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    /// Parses and validates a scenario document; raises ValueError listing every violation.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioConfig::parse(text).map(|cfg| Scenario { cfg }).map_err(value_err)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        ScenarioConfig::from_path(path).map(|cfg| Scenario { cfg }).map_err(value_err)
    }

    /// `n` honest parties on the indexed tree, each winning with probability `q`.
    #[staticmethod]
    fn honest_only(n: u32, q: f64, horizon: u64) -> PyResult<Self> {
        let cfg = ScenarioConfig::honest_only(n, q, horizon);
        cfg.validate().map_err(value_err)?;
        Ok(Scenario { cfg })
    }

    fn to_json(&self) -> String {
        self.cfg.emit()
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.cfg.horizon
    }

    /// Replaces all seeds with streams derived from `master`.
    fn with_master_seed(&self, master: u64) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.seeds = nsbsim::config::Seeds::from_master(master);
        Scenario { cfg }
    }

    /// Runs the world to the horizon. The simulation releases the interpreter lock.
    fn run(&self, py: Python<'_>) -> PyResult<Trace> {
        let params = self.cfg.to_params().map_err(value_err)?;
        let trace = py.detach(|| nsbsim::world::run(&params)).map_err(value_err)?;
        Ok(Trace { inner: Arc::new(trace), slack: self.cfg.checks.slack, params: self.cfg.checks.clone() })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(parties={}, horizon={}, adversary={})",
            self.cfg.parties.len(),
            self.cfg.horizon,
            self.cfg.adversary.name()
        )
    }
}

/// A finished run.
#[pyclass(module = "pynsb", frozen)]
struct Trace {
    inner: Arc<CoreTrace>,
    slack: Slack,
    params: props::CheckParams,
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Holds { .. } => "holds",
        Verdict::PreconditionFailed { .. } => "precondition_failed",
        Verdict::Violated { .. } => "violated",
    }
}

#[pymethods]
impl Trace {
    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn honest(&self) -> Vec<u32> {
        self.inner.honest.iter().map(|p| p.0).collect()
    }

    #[getter]
    fn n_blocks(&self) -> usize {
        self.inner.blocks.len()
    }

    /// Hex hashes, head first, of party `p`'s chain at slot `sl`
    /// (`horizon + 1` for the final chain).
    fn chain(&self, p: u32, sl: u64) -> PyResult<Vec<String>> {
        let t = &self.inner;
        let i = t.honest_index(PartyId(p)).ok_or_else(|| PyKeyError::new_err(format!("no honest party {p}")))?;
        let c = if sl == t.horizon + 1 {
            &t.final_chains[i]
        } else {
            t.snapshot(PartyId(p), sl).ok_or_else(|| PyKeyError::new_err(format!("no snapshot at slot {sl}")))?
        };
        Ok(c.iter().map(|b| t.hasher.hash_block(b).to_string()).collect())
    }

    fn final_lengths(&self) -> BTreeMap<u32, usize> {
        self.inner.honest.iter().zip(&self.inner.final_chains).map(|(p, c)| (p.0, c.len())).collect()
    }

    fn summary_json(&self) -> PyResult<String> {
        to_json(&self.inner.summary())
    }

    fn trace_jsonl(&self) -> PyResult<String> {
        let mut out = Vec::new();
        self.inner.write_jsonl(&mut out).map_err(value_err)?;
        String::from_utf8(out).map_err(value_err)
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    /// Applies a comma-separated check list; returns the records as JSON.
    #[pyo3(signature = (checks = "all"))]
    fn run_checks(&self, py: Python<'_>, checks: &str) -> PyResult<String> {
        let kinds = CheckKind::parse_list(checks).map_err(PyValueError::new_err)?;
        let trace = Arc::clone(&self.inner);
        let params = self.params.clone();
        let records = py.detach(move || props::run_checks(&trace, &kinds, &params));
        to_json(&records)
    }

    fn check_growth(&self, sl1: u64, p1: u32, sl2: u64, p2: u32) -> PyResult<&'static str> {
        props::check_chain_growth(&self.inner, sl1, PartyId(p1), sl2, PartyId(p2), &self.slack)
            .map(|v| verdict_name(&v))
            .map_err(value_err)
    }

    fn check_quality(&self, sl: u64, p: u32, i: usize, j: usize) -> PyResult<&'static str> {
        props::check_chain_quality(&self.inner, sl, PartyId(p), i, j, &self.slack)
            .map(|v| verdict_name(&v))
            .map_err(value_err)
    }

    fn check_common_prefix(&self, sl1: u64, p1: u32, sl2: u64, p2: u32, k: u64) -> PyResult<&'static str> {
        props::check_common_prefix(&self.inner, sl1, PartyId(p1), sl2, PartyId(p2), k, &self.slack)
            .map(|v| verdict_name(&v))
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(horizon={}, blocks={}, strategy={})",
            self.inner.horizon,
            self.inner.blocks.len(),
            self.inner.strategy
        )
    }
}

/// Hash of the block `(pred, slot, txs, bid)` truncated to `width` bits.
#[pyfunction]
#[pyo3(signature = (pred, slot, txs, bid, width = 64))]
fn hash_block(pred: u64, slot: u64, txs: Vec<u8>, bid: u32, width: u8) -> PyResult<u64> {
    let h = BlockHasher::new(width).map_err(value_err)?;
    Ok(h.hash_block(&Block::new(Hash(pred), slot, Payload::new(txs), PartyId(bid))).0)
}

fn probs_of(q: BTreeMap<u32, f64>, corrupt: Vec<u32>) -> PyResult<SlotProbs> {
    let q: BTreeMap<PartyId, f64> = q.into_iter().map(|(p, v)| (PartyId(p), v)).collect();
    let honesty = HonestyMap::new(q.keys().map(|&p| (p, !corrupt.contains(&p.0))));
    bounds::slot_probs(&q, &honesty).map_err(value_err)
}

/// `(p_LS, p_SS, p_AS)` for win probabilities `q` keyed by party id.
#[pyfunction]
#[pyo3(signature = (q, corrupt = Vec::new()))]
fn slot_probs(q: BTreeMap<u32, f64>, corrupt: Vec<u32>) -> PyResult<(f64, f64, f64)> {
    let p = probs_of(q, corrupt)?;
    Ok((p.p_ls, p.p_ss, p.p_as))
}

#[pyfunction]
fn chernoff_lower(mu: f64, delta: f64) -> PyResult<f64> {
    bounds::chernoff_lower(mu, delta).map_err(value_err)
}

#[pyfunction]
fn chernoff_upper(mu: f64, delta: f64) -> PyResult<f64> {
    bounds::chernoff_upper(mu, delta).map_err(value_err)
}

/// `(required, satisfied, actual)` for the common-prefix epsilon condition.
#[pyfunction]
fn cp_epsilon_condition(p_ss: f64, p_as: f64, delta: f64, delta_prime: f64) -> PyResult<(f64, bool, f64)> {
    let probs = SlotProbs { p_ls: p_ss, p_ss, p_as };
    let e = bounds::cp_epsilon_condition(&probs, delta, delta_prime).map_err(value_err)?;
    Ok((e.required, e.satisfied, e.actual))
}

#[pyfunction]
fn cp_failure_bound(k: u64, sl_now: u64, p_ss: f64, p_as: f64, delta: f64, delta_prime: f64) -> PyResult<f64> {
    let probs = SlotProbs { p_ls: p_ss, p_ss, p_as };
    bounds::cp_failure_bound(k, sl_now, &probs, delta, delta_prime).map_err(value_err)
}

/// `(min_growth, failure_prob)` over `r` slots.
#[pyfunction]
fn cg_growth_bound(r: u64, delta: f64, p_ls: f64) -> PyResult<(u64, f64)> {
    let g = bounds::cg_growth_bound(r, delta, p_ls).map_err(value_err)?;
    Ok((g.min_growth, g.failure_prob))
}

/// Runs the block-tree conformance harness; returns `(passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (implementation = "indexed", seed = 0, n = 200, against = None))]
fn conformance(
    py: Python<'_>,
    implementation: &str,
    seed: u64,
    n: usize,
    against: Option<&str>,
) -> PyResult<(bool, String)> {
    let kind: TreeKind = implementation.parse().map_err(value_err)?;
    let other: Option<TreeKind> = against.map(str::parse).transpose().map_err(value_err)?;
    let r = py.detach(|| match other {
        Some(o) => differential_check(kind, o, seed, n),
        None => conformance_check(kind, seed, n),
    });
    Ok((r.passed(), to_json(&r)?))
}

#[pymodule]
fn pynsb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(hash_block, m)?)?;
    m.add_function(wrap_pyfunction!(slot_probs, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_lower, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_upper, m)?)?;
    m.add_function(wrap_pyfunction!(cp_epsilon_condition, m)?)?;
    m.add_function(wrap_pyfunction!(cp_failure_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cg_growth_bound, m)?)?;
    m.add_function(wrap_pyfunction!(conformance, m)?)?;
    Ok(())
}
