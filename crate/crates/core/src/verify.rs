// SPDX-License-Identifier: MIT
//! Randomized end-to-end verification harness.
//!
//! Each trial draws a ground-truth DAG with hidden nodes, projects it onto
//! its including path graph, runs the oracle-backed recovery, completes
//! the orientation into a belief network, and then checks:
//!
//! - the completion succeeded and the result is acyclic;
//! - the recovered marks are sound against the projection;
//! - truth and belief network agree on every d-separation query over
//!   observed nodes up to the configured conditioning-set size;
//! - the projection is free of the inadmissible collider-chain pattern.
//!
//! Failures are recorded per trial, never raised: the claims under test
//! are exactly what the report documents. A tenth of the trials re-run
//! the equivalence sweep with the path-enumeration d-separation reference
//! to guard the fast implementation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::ci::{self, IndependenceSource};
use crate::ci_to_bn;
use crate::dsep::{self, SeparationQuery};
use crate::graph::{Dag, EndMark, MixedGraph, NodeId};
use crate::graphfile::{digest, GraphDoc};
use crate::latent;
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("graphs disagree on the observed node set: {0}")]
    ObservedMismatch(String),
}

/// Configuration of one batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub n_observed: usize,
    pub n_hidden: usize,
    pub edge_probability: f64,
    pub seed: u64,
    pub trials: usize,
    /// Conditioning-set cap for the equivalence sweep; `None` = unlimited.
    pub max_condition_size: Option<usize>,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.n_observed < 2 {
            return Err(VerifyError::Config("need at least 2 observed nodes".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(VerifyError::Config(
                "edge probability must lie in [0, 1]".into(),
            ));
        }
        let total = self.n_observed + self.n_hidden;
        if total > latent::DEFAULT_NODE_BUDGET {
            return Err(VerifyError::Config(format!(
                "{total} total nodes exceed the enumeration budget of {}",
                latent::DEFAULT_NODE_BUDGET
            )));
        }
        Ok(())
    }
}

/// A d-separation query on which truth and belief network disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub x: String,
    pub y: String,
    pub conditioning: Vec<String>,
    pub truth_separated: bool,
    pub bn_separated: bool,
}

impl Counterexample {
    pub fn render(&self) -> String {
        format!(
            "{},{}|{{{}}}:truth={},bn={}",
            self.x,
            self.y,
            self.conditioning.join(","),
            if self.truth_separated { "sep" } else { "conn" },
            if self.bn_separated { "sep" } else { "conn" },
        )
    }

    /// Re-evaluates both sides of the disagreement with direct calls.
    pub fn reverify(&self, truth: &Dag, bn: &Dag) -> bool {
        let q = |g: &Dag| -> Option<bool> {
            let x = g.node_by_label(&self.x)?;
            let y = g.node_by_label(&self.y)?;
            let s: Option<BTreeSet<NodeId>> = self
                .conditioning
                .iter()
                .map(|l| g.node_by_label(l))
                .collect();
            dsep::d_separated(g, &SeparationQuery::new(x, y, s?)).ok()
        };
        q(truth) == Some(self.truth_separated) && q(bn) == Some(self.bn_separated)
    }
}

/// Everything needed to replay a failed trial offline.
#[derive(Debug, Clone)]
pub struct ReplayBundle {
    pub truth: Dag,
    pub bn: Option<Dag>,
}

/// Outcome of a single trial.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub index: usize,
    pub dag_digest: u64,
    pub fhd_digest: u64,
    pub pipg_digest: Option<u64>,
    pub bn_digest: Option<u64>,
    pub acyclic: bool,
    pub equivalent: bool,
    pub pi_matches_fhd: bool,
    pub chain_free: bool,
    pub crosschecked: bool,
    pub acyclicity_rejections: u64,
    pub contradiction: bool,
    pub completion_failure: bool,
    pub error: Option<String>,
    pub counterexample: Option<Counterexample>,
    pub replay: Option<ReplayBundle>,
}

impl TrialRecord {
    pub fn passed(&self) -> bool {
        self.acyclic
            && self.equivalent
            && self.pi_matches_fhd
            && self.chain_free
            && self.error.is_none()
    }
}

/// Aggregated outcome of a batch.
#[derive(Debug, Clone)]
pub struct TrialReport {
    pub config: TrialConfig,
    pub records: Vec<TrialRecord>,
}

impl TrialReport {
    pub fn acyclic_ok(&self) -> usize {
        self.records.iter().filter(|r| r.acyclic).count()
    }
    pub fn equivalent_ok(&self) -> usize {
        self.records.iter().filter(|r| r.equivalent).count()
    }
    pub fn soundness_ok(&self) -> usize {
        self.records.iter().filter(|r| r.pi_matches_fhd).count()
    }
    pub fn chain_free_ok(&self) -> usize {
        self.records.iter().filter(|r| r.chain_free).count()
    }
    pub fn contradictions(&self) -> usize {
        self.records.iter().filter(|r| r.contradiction).count()
    }
    pub fn completion_failures(&self) -> usize {
        self.records.iter().filter(|r| r.completion_failure).count()
    }
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed())
    }

    /// Deterministic text rendering: one record per trial plus a summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let cap = match self.config.max_condition_size {
            Some(k) => k.to_string(),
            None => "unlimited".to_string(),
        };
        let _ = writeln!(out, "trial-report v1");
        let _ = writeln!(
            out,
            "config n_observed={} n_hidden={} edge_probability={:.6} seed={} trials={} max_condition_size={}",
            self.config.n_observed,
            self.config.n_hidden,
            self.config.edge_probability,
            self.config.seed,
            self.config.trials,
            cap
        );
        for r in &self.records {
            let opt = |v: Option<u64>| match v {
                Some(d) => format!("{d:016x}"),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "trial {:04} dag={:016x} fhd={:016x} pipg={} bn={} acyclic={} equivalent={} sound={} chain_free={} rejections={} crosschecked={} error={} cex={}",
                r.index,
                r.dag_digest,
                r.fhd_digest,
                opt(r.pipg_digest),
                opt(r.bn_digest),
                yes_no(r.acyclic),
                yes_no(r.equivalent),
                yes_no(r.pi_matches_fhd),
                yes_no(r.chain_free),
                r.acyclicity_rejections,
                yes_no(r.crosschecked),
                r.error.as_deref().unwrap_or("-").replace(' ', "_"),
                r.counterexample
                    .as_ref()
                    .map(|c| c.render())
                    .unwrap_or_else(|| "-".to_string()),
            );
        }
        let _ = writeln!(
            out,
            "summary trials={} acyclic={}/{} equivalent={}/{} sound={}/{} chain_free={}/{} contradictions={} completion_failures={}",
            self.records.len(),
            self.acyclic_ok(),
            self.records.len(),
            self.equivalent_ok(),
            self.records.len(),
            self.soundness_ok(),
            self.records.len(),
            self.chain_free_ok(),
            self.records.len(),
            self.contradictions(),
            self.completion_failures(),
        );
        out
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

/// Draws the trial's ground-truth DAG: nodes in a shuffled order receive
/// forward edges independently with the configured probability, and the
/// hidden subset is sampled uniformly. Deterministic in (seed, index).
pub fn random_dag(cfg: &TrialConfig, trial_index: usize) -> Dag {
    let mut rng =
        SplitMix64::new(cfg.seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(trial_index as u64 + 1));
    let total = cfg.n_observed + cfg.n_hidden;
    let mut order: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut order);
    let hidden: BTreeSet<NodeId> = rng
        .sample_indices(total, cfg.n_hidden)
        .into_iter()
        .map(|i| NodeId(i as u32))
        .collect();
    let mut edges = Vec::new();
    for i in 0..total {
        for j in (i + 1)..total {
            if rng.next_f64() < cfg.edge_probability {
                edges.push((NodeId(order[i] as u32), NodeId(order[j] as u32)));
            }
        }
    }
    let mut labels = Vec::with_capacity(total);
    let mut observed_counter = 0usize;
    let mut hidden_counter = 0usize;
    for i in 0..total {
        if hidden.contains(&NodeId(i as u32)) {
            hidden_counter += 1;
            labels.push(format!("H{hidden_counter}"));
        } else {
            observed_counter += 1;
            labels.push(format!("X{observed_counter}"));
        }
    }
    Dag::new(labels, &hidden, &edges).expect("forward edges over a fixed order are acyclic")
}

/// Compares every observed-pair d-separation of `truth` and `bn` over all
/// conditioning sets up to `max_s` elements, returning the first
/// disagreement. Node correspondence is by label; both graphs must expose
/// the same observed label set.
pub fn independence_equivalent(
    truth: &Dag,
    bn: &Dag,
    max_s: Option<usize>,
) -> Result<Option<Counterexample>, VerifyError> {
    independence_equivalent_impl(truth, bn, max_s, false)
}

fn independence_equivalent_impl(
    truth: &Dag,
    bn: &Dag,
    max_s: Option<usize>,
    pathwise: bool,
) -> Result<Option<Counterexample>, VerifyError> {
    let t_obs = truth.observed();
    let b_obs = bn.observed();
    let t_labels: BTreeSet<&str> = t_obs.iter().map(|&v| truth.label(v)).collect();
    let b_labels: BTreeSet<&str> = b_obs.iter().map(|&v| bn.label(v)).collect();
    if t_labels != b_labels {
        return Err(VerifyError::ObservedMismatch(format!(
            "truth has {t_labels:?}, belief network has {b_labels:?}"
        )));
    }
    let to_bn = |v: NodeId| bn.node_by_label(truth.label(v)).expect("label checked");
    let sep = |g: &Dag, q: &SeparationQuery| -> bool {
        if pathwise {
            dsep::d_separated_pathwise(g, q).expect("valid query")
        } else {
            dsep::d_separated(g, q).expect("valid query")
        }
    };

    for (i, &x) in t_obs.iter().enumerate() {
        for &y in &t_obs[i + 1..] {
            let pool: Vec<NodeId> = t_obs
                .iter()
                .copied()
                .filter(|&v| v != x && v != y)
                .collect();
            let cap = max_s.unwrap_or(pool.len()).min(pool.len());
            for size in 0..=cap {
                let mut sized = Vec::new();
                dsep::combinations_into(&pool, size, &mut sized);
                for s in sized {
                    let truth_q = SeparationQuery::new(x, y, s.clone());
                    let bn_q = SeparationQuery::new(
                        to_bn(x),
                        to_bn(y),
                        s.iter().map(|&v| to_bn(v)).collect(),
                    );
                    let ts = sep(truth, &truth_q);
                    let bs = sep(bn, &bn_q);
                    if ts != bs {
                        return Ok(Some(Counterexample {
                            x: truth.label(x).to_string(),
                            y: truth.label(y).to_string(),
                            conditioning: s.iter().map(|&v| truth.label(v).to_string()).collect(),
                            truth_separated: ts,
                            bn_separated: bs,
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// True iff the recovered graph has the projection's adjacencies and every
/// fixed (non-circle) recovered mark equals the projection's mark.
pub fn marks_sound_against(projection: &MixedGraph, recovered: &MixedGraph) -> bool {
    if projection.adjacency_pairs() != recovered.adjacency_pairs() {
        return false;
    }
    for e in recovered.edges() {
        let (pa, pb) = projection.marks(e.a, e.b).expect("same adjacencies");
        for (mark, truth_mark) in [(e.mark_a, pa), (e.mark_b, pb)] {
            if mark != EndMark::Circle && mark != truth_mark {
                return false;
            }
        }
    }
    true
}

fn run_one_trial(cfg: &TrialConfig, index: usize) -> TrialRecord {
    let truth = random_dag(cfg, index);
    let dag_digest = digest(&GraphDoc::from_dag(&truth).render());

    let fhd = latent::including_path_graph(&truth).expect("config within budget");
    let fhd_digest = digest(&GraphDoc::from_mixed(&fhd).render());
    let chain_free = latent::find_forbidden_collider_chain(&fhd).is_none();

    let mut record = TrialRecord {
        index,
        dag_digest,
        fhd_digest,
        pipg_digest: None,
        bn_digest: None,
        acyclic: false,
        equivalent: false,
        pi_matches_fhd: false,
        chain_free,
        crosschecked: false,
        acyclicity_rejections: 0,
        contradiction: false,
        completion_failure: false,
        error: None,
        counterexample: None,
        replay: None,
    };

    let src = match IndependenceSource::oracle(truth.clone()) {
        Ok(src) => src,
        Err(e) => {
            record.error = Some(format!("oracle: {e}"));
            record.replay = Some(ReplayBundle { truth, bn: None });
            return record;
        }
    };
    let pipg = match ci::run_ci(&src) {
        Ok(p) => p,
        Err(e) => {
            record.contradiction = matches!(e, ci::CiError::Contradiction { .. });
            record.error = Some(format!("recovery: {e}"));
            record.replay = Some(ReplayBundle { truth, bn: None });
            return record;
        }
    };
    record.pipg_digest = Some(digest(&GraphDoc::from_mixed(&pipg.graph).render()));
    record.pi_matches_fhd = marks_sound_against(&fhd, &pipg.graph);

    let completion = match ci_to_bn::complete_orientation(&pipg) {
        Ok(c) => c,
        Err(e) => {
            record.completion_failure = true;
            record.error = Some(format!("completion: {e}"));
            record.replay = Some(ReplayBundle { truth, bn: None });
            return record;
        }
    };
    record.acyclicity_rejections = completion.acyclicity_rejections;
    let bn = match ci_to_bn::expand_bidirected(&completion.graph) {
        Ok(bn) => bn,
        Err(e) => {
            record.completion_failure = true;
            record.error = Some(format!("expansion: {e}"));
            record.replay = Some(ReplayBundle { truth, bn: None });
            return record;
        }
    };
    record.bn_digest = Some(digest(&GraphDoc::from_dag(&bn.dag).render()));
    record.acyclic = bn.dag.topological_order().is_some() && bn.check_shape();

    match independence_equivalent(&truth, &bn.dag, cfg.max_condition_size) {
        Ok(None) => record.equivalent = true,
        Ok(Some(cex)) => {
            record.counterexample = Some(cex);
        }
        Err(e) => record.error = Some(format!("equivalence: {e}")),
    }

    // Spot cross-check against the path-enumeration reference.
    if index.is_multiple_of(10) && record.error.is_none() {
        record.crosschecked = true;
        match independence_equivalent_impl(&truth, &bn.dag, cfg.max_condition_size, true) {
            Ok(slow) => {
                let fast = record.counterexample.clone();
                if slow != fast {
                    record.equivalent = false;
                    record.error =
                        Some(format!("crosscheck-mismatch: fast={fast:?} slow={slow:?}"));
                }
            }
            Err(e) => record.error = Some(format!("crosscheck: {e}")),
        }
    }

    if !record.passed() {
        record.replay = Some(ReplayBundle {
            truth,
            bn: Some(bn.dag),
        });
    }
    record
}

/// Runs the configured batch. Trials execute in parallel; the report is
/// assembled in trial order and is byte-identical across reruns of the
/// same configuration.
pub fn run_trials(cfg: &TrialConfig) -> Result<TrialReport, VerifyError> {
    cfg.validate()?;
    let slots: Mutex<Vec<Option<TrialRecord>>> = Mutex::new(vec![None; cfg.trials]);
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cfg.trials.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= cfg.trials {
                    break;
                }
                let record = run_one_trial(cfg, index);
                slots.lock().unwrap()[index] = Some(record);
            });
        }
    });
    let records = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect();
    Ok(TrialReport {
        config: cfg.clone(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_observed: usize, n_hidden: usize, p: f64, seed: u64, trials: usize) -> TrialConfig {
        TrialConfig {
            n_observed,
            n_hidden,
            edge_probability: p,
            seed,
            trials,
            max_condition_size: None,
        }
    }

    #[test]
    fn random_dag_is_deterministic_and_respects_probability_extremes() {
        let c = cfg(5, 2, 0.3, 7, 10);
        let a = random_dag(&c, 3);
        let b = random_dag(&c, 3);
        assert_eq!(a, b);
        assert_ne!(a, random_dag(&c, 4));

        let empty = random_dag(&cfg(4, 1, 0.0, 7, 1), 0);
        assert_eq!(empty.edge_count(), 0);

        let full = random_dag(&cfg(4, 1, 1.0, 7, 1), 0);
        assert_eq!(full.edge_count(), 5 * 4 / 2);
        assert!(full.topological_order().is_some());

        assert_eq!(a.hidden_nodes().len(), 2);
        assert_eq!(a.observed().len(), 5);
    }

    #[test]
    fn equivalence_identity_and_relabeled_latent() {
        let truth = Dag::new(
            vec!["A".into(), "B".into(), "H".into()],
            &BTreeSet::from([NodeId(2)]),
            &[(NodeId(2), NodeId(0)), (NodeId(2), NodeId(1))],
        )
        .unwrap();
        // Identity.
        assert_eq!(independence_equivalent(&truth, &truth, None).unwrap(), None);
        // Same structure with the latent renamed.
        let bn = Dag::new(
            vec!["A".into(), "B".into(), "L#1".into()],
            &BTreeSet::from([NodeId(2)]),
            &[(NodeId(2), NodeId(0)), (NodeId(2), NodeId(1))],
        )
        .unwrap();
        assert_eq!(independence_equivalent(&truth, &bn, None).unwrap(), None);
    }

    #[test]
    fn equivalence_catches_chain_vs_collider() {
        let chain = Dag::new(
            vec!["A".into(), "B".into(), "C".into()],
            &BTreeSet::new(),
            &[(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))],
        )
        .unwrap();
        let collider = Dag::new(
            vec!["A".into(), "B".into(), "C".into()],
            &BTreeSet::new(),
            &[(NodeId(0), NodeId(1)), (NodeId(2), NodeId(1))],
        )
        .unwrap();
        let cex = independence_equivalent(&chain, &collider, None)
            .unwrap()
            .expect("chain and collider differ");
        // First disagreement in enumeration order: A and C marginally.
        assert_eq!((cex.x.as_str(), cex.y.as_str()), ("A", "C"));
        assert!(cex.conditioning.is_empty());
        assert!(!cex.truth_separated);
        assert!(cex.bn_separated);
        assert!(cex.reverify(&chain, &collider));
        // The conditioned query disagrees as well, in the other direction.
        let q = SeparationQuery::new(NodeId(0), NodeId(2), BTreeSet::from([NodeId(1)]));
        assert!(dsep::d_separated(&chain, &q).unwrap());
        assert!(!dsep::d_separated(&collider, &q).unwrap());
    }

    #[test]
    fn zero_trials_make_an_empty_report() {
        let report = run_trials(&cfg(5, 2, 0.3, 1, 0)).unwrap();
        assert!(report.records.is_empty());
        assert!(report.all_passed());
        assert!(report.render().contains("summary trials=0"));
    }

    #[test]
    fn config_validation() {
        assert!(run_trials(&cfg(1, 0, 0.5, 1, 1)).is_err());
        assert!(run_trials(&cfg(2, 0, 1.5, 1, 1)).is_err());
        assert!(run_trials(&cfg(14, 3, 0.5, 1, 1)).is_err());
    }

    #[test]
    fn small_batch_passes_and_renders_deterministically() {
        let c = cfg(5, 2, 0.3, 42, 20);
        let a = run_trials(&c).unwrap();
        let b = run_trials(&c).unwrap();
        assert_eq!(a.render(), b.render());
        assert!(a.all_passed(), "failures:\n{}", a.render());
        assert!(a.records.iter().any(|r| r.crosschecked));
    }

    #[test]
    fn hidden_free_batch_is_equivalent_everywhere() {
        let c = cfg(6, 0, 0.4, 11, 15);
        let report = run_trials(&c).unwrap();
        assert_eq!(report.equivalent_ok(), 15, "{}", report.render());
        assert_eq!(report.soundness_ok(), 15);
    }
}
