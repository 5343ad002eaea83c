//! Scenario runner and the selective-versus-broadcast comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::center::DispatchPolicy;
use crate::config::ScenarioConfig;
use crate::corpus::{Corpus, CorpusRecord, Manifest};
use crate::error::{Error, Result};
use crate::feature::{ClassId, Region};
use crate::metrics::{AgentEpoch, EpochRecord, QueryRecord, RunMetrics, Summary};
use crate::protocol::{message_count, ConsultMode, QueryId, TraceRecord, Variant};
use crate::sim::{System, Violation};
use crate::tags::{preprocess, RawObject, TagCollection};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub record_trace: bool,
    /// Run the consistency check every time the network drains.
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            record_trace: true,
            check_invariants: true,
        }
    }
}

pub struct ScenarioOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRecord>,
    /// Final state, settled and quiescent.
    pub system: System,
    /// Step at which each failed check ran.
    pub violations: Vec<(u64, Violation)>,
    /// Checks that ran with no session open and no query pending.
    pub quiescent_points: u64,
}

pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace serializes"));
        out.push('\n');
    }
    out
}

/// Drives a [`System`] through corpus records and accumulates metrics.
pub struct Runner {
    system: System,
    pipeline: usize,
    options: RunOptions,
    queries: Vec<QueryRecord>,
    epochs: Vec<EpochRecord>,
    violations: Vec<(u64, Violation)>,
    checked: u64,
    quiescent: u64,
}

impl Runner {
    pub fn new(mut system: System, pipeline: usize, options: RunOptions) -> Self {
        system.record_trace(options.record_trace);
        Runner {
            system,
            pipeline: pipeline.max(1),
            options,
            queries: Vec::new(),
            epochs: Vec::new(),
            violations: Vec::new(),
            checked: 0,
            quiescent: 0,
        }
    }

    /// Bootstraps a fresh system from the manifest's planted base sets.
    pub fn bootstrap(
        manifest: &Manifest,
        config: &ScenarioConfig,
        options: RunOptions,
    ) -> Result<Self> {
        let sys_config = config.resolve(manifest.num_classes())?;
        let system = System::new(&manifest.class_seeds(), sys_config)?;
        Ok(Runner::new(system, config.pipeline, options))
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn system_mut(&mut self) -> &mut System {
        &mut self.system
    }

    pub fn violations(&self) -> &[(u64, Violation)] {
        &self.violations
    }

    fn prepare(&self, records: &[CorpusRecord]) -> Result<Vec<TagCollection>> {
        let known: BTreeSet<&ClassId> = self.system.classes().iter().collect();
        records
            .iter()
            .map(|r| {
                if !known.contains(&r.class) {
                    return Err(Error::Mismatch(format!(
                        "object {} has class {} missing from the manifest",
                        r.id, r.class
                    )));
                }
                preprocess(RawObject::Tags(&r.tags)).map_err(|source| Error::Object {
                    id: r.id.clone(),
                    source,
                })
            })
            .collect()
    }

    /// Streams records through the system, `pipeline` at a time.
    pub fn feed(&mut self, records: &[CorpusRecord]) -> Result<()> {
        let tags = self.prepare(records)?;
        let epoch = self.system.config().learning.epoch as u64;
        for (batch, batch_tags) in records
            .chunks(self.pipeline)
            .zip(tags.chunks(self.pipeline))
        {
            let mut labels: BTreeMap<QueryId, &CorpusRecord> = BTreeMap::new();
            for (r, t) in batch.iter().zip(batch_tags) {
                labels.insert(self.system.submit(t)?, r);
            }
            self.system.run_until_idle();
            self.check();
            let mut done = self.system.take_completed();
            done.sort_by_key(|(c, _)| c.query);
            for (c, messages) in done {
                let r = labels[&c.query];
                let predicted = c.vector.top().cloned();
                self.queries.push(QueryRecord {
                    object: r.id.clone(),
                    seq: c.query.0,
                    correct: predicted.as_ref() == Some(&r.class),
                    true_class: r.class.clone(),
                    predicted,
                    fallback: c.fallback,
                    messages,
                    vector: c.vector,
                });
                if (self.queries.len() as u64).is_multiple_of(epoch) {
                    self.epochs.push(self.epoch_record());
                }
            }
        }
        Ok(())
    }

    fn check(&mut self) {
        if !self.options.check_invariants {
            return;
        }
        self.checked += 1;
        if self.system.is_quiescent() {
            self.quiescent += 1;
        }
        if let Err(v) = self.system.check_consistency() {
            self.violations.push((self.system.steps(), v));
        }
    }

    fn epoch_record(&self) -> EpochRecord {
        let epoch = self.system.config().learning.epoch as u64;
        let queries = self.queries.len() as u64;
        EpochRecord {
            epoch: queries / epoch,
            queries,
            agents: self
                .system
                .agents()
                .map(|a| {
                    let (k, m, d) = a.collection().region_counts();
                    let s = a.stats();
                    AgentEpoch {
                        class: a.class_id().clone(),
                        k,
                        m,
                        d,
                        opened: s.opened,
                        committed: s.committed,
                        aborted: s.aborted,
                    }
                })
                .collect(),
        }
    }

    /// Parks the system in a quiescent state and produces the metrics.
    pub fn finish(mut self) -> Result<ScenarioOutput> {
        self.system.settle();
        self.system.run_until_idle();
        self.check();
        self.system.require_quiescent()?;
        let sys = &self.system;
        let by_variant: BTreeMap<Variant, u64> = Variant::ALL
            .iter()
            .map(|&v| (v, sys.variant_count(v)))
            .filter(|&(_, n)| n > 0)
            .collect();
        let query_messages =
            sys.variant_count(Variant::Dispatch) + sys.variant_count(Variant::Result);
        let n = self.queries.len() as u64;
        let correct = self.queries.iter().filter(|q| q.correct).count() as u64;
        let (opened, committed, aborted) = sys.agents().fold((0, 0, 0), |acc, a| {
            let s = a.stats();
            (acc.0 + s.opened, acc.1 + s.committed, acc.2 + s.aborted)
        });
        let summary = Summary {
            queries: n,
            correct,
            accuracy: if n == 0 {
                0.0
            } else {
                correct as f64 / n as f64
            },
            random_baseline: 1.0 / sys.classes().len() as f64,
            fallback_queries: self.queries.iter().filter(|q| q.fallback).count() as u64,
            dispatch_policy: sys.config().policy.to_string(),
            consult_mode: sys.config().protocol.mode.to_string(),
            messages_total: sys.total_messages(),
            query_messages,
            consultation_messages: sys.total_messages() - query_messages,
            messages_by_variant: by_variant,
            sessions_opened: opened,
            sessions_committed: committed,
            sessions_aborted: aborted,
            checked_points: self.checked,
        };
        let metrics = RunMetrics {
            queries: self.queries,
            epochs: self.epochs,
            summary,
        };
        metrics.reconcile().map_err(Error::Invariant)?;
        let trace = self.system.take_trace();
        Ok(ScenarioOutput {
            metrics,
            trace,
            system: self.system,
            violations: self.violations,
            quiescent_points: self.quiescent,
        })
    }
}

pub fn run_scenario(
    corpus: &Corpus,
    manifest: &Manifest,
    config: &ScenarioConfig,
    options: RunOptions,
) -> Result<ScenarioOutput> {
    let mut runner = Runner::bootstrap(manifest, config, options)?;
    runner.feed(&corpus.records)?;
    runner.finish()
}

/// Message totals of one side of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeReport {
    pub dispatch_policy: String,
    pub consult_mode: String,
    pub seed: u64,
    pub queries: u64,
    pub accuracy: f64,
    pub total_messages: u64,
    pub query_messages: u64,
    pub consultation_messages: u64,
    pub messages_per_query: f64,
    pub total_per_query: f64,
    pub messages_by_variant: BTreeMap<Variant, u64>,
    /// Whether an independent recount of the trace gave the same totals.
    pub recount_matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub selective: ModeReport,
    pub broadcast: ModeReport,
    /// Selective over broadcast query traffic.
    pub query_ratio: Option<f64>,
    /// Selective over broadcast consultation traffic.
    pub consultation_ratio: Option<f64>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn mode_report(out: &ScenarioOutput) -> ModeReport {
    let s = &out.metrics.summary;
    let tally = message_count(&out.trace);
    let recount_matches = tally.total == s.messages_total
        && tally.query_traffic() == s.query_messages
        && tally.consultation() == s.consultation_messages
        && tally.by_variant == s.messages_by_variant
        && out.metrics.queries.iter().all(|q| {
            tally
                .by_query
                .get(&QueryId(q.seq).to_string())
                .copied()
                .unwrap_or(0)
                == q.messages
        });
    let per = |m: u64| {
        if s.queries == 0 {
            0.0
        } else {
            m as f64 / s.queries as f64
        }
    };
    ModeReport {
        dispatch_policy: s.dispatch_policy.clone(),
        consult_mode: s.consult_mode.clone(),
        seed: out.system.config().seed,
        queries: s.queries,
        accuracy: s.accuracy,
        total_messages: s.messages_total,
        query_messages: s.query_messages,
        consultation_messages: s.consultation_messages,
        messages_per_query: per(s.query_messages),
        total_per_query: per(s.messages_total),
        messages_by_variant: s.messages_by_variant.clone(),
        recount_matches,
    }
}

/// Runs the scenario with selective dispatch and lookup consultation, then
/// with broadcast dispatch and broadcast consultation, on the same seeds.
pub fn compare_baseline(
    corpus: &Corpus,
    manifest: &Manifest,
    config: &ScenarioConfig,
) -> Result<Comparison> {
    let selective_cfg = ScenarioConfig {
        broadcast_dispatch: false,
        consult: ConsultMode::Lookup,
        ..config.clone()
    };
    let broadcast_cfg = ScenarioConfig {
        broadcast_dispatch: true,
        top_k: None,
        min_conf: None,
        consult: ConsultMode::Broadcast,
        ..config.clone()
    };
    let options = RunOptions {
        record_trace: true,
        check_invariants: true,
    };
    let a = run_scenario(corpus, manifest, &selective_cfg, options)?;
    let b = run_scenario(corpus, manifest, &broadcast_cfg, options)?;
    debug_assert!(a.system.config().policy != DispatchPolicy::Broadcast);
    let selective = mode_report(&a);
    let broadcast = mode_report(&b);
    if selective.seed != broadcast.seed {
        return Err(Error::Invariant(
            "comparison runs used different seeds".into(),
        ));
    }
    Ok(Comparison {
        query_ratio: ratio(selective.query_messages, broadcast.query_messages),
        consultation_ratio: ratio(
            selective.consultation_messages,
            broadcast.consultation_messages,
        ),
        selective,
        broadcast,
    })
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>14} {:>14}", "", "selective", "broadcast");
        let mut row = |k: &str, a: String, b: String| {
            let _ = writeln!(out, "{k:<24} {a:>14} {b:>14}");
        };
        let (s, b) = (&self.selective, &self.broadcast);
        row(
            "dispatch",
            s.dispatch_policy.clone(),
            b.dispatch_policy.clone(),
        );
        row(
            "consultation",
            s.consult_mode.clone(),
            b.consult_mode.clone(),
        );
        row("seed", s.seed.to_string(), b.seed.to_string());
        row("queries", s.queries.to_string(), b.queries.to_string());
        row(
            "accuracy",
            format!("{:.4}", s.accuracy),
            format!("{:.4}", b.accuracy),
        );
        row(
            "messages",
            s.total_messages.to_string(),
            b.total_messages.to_string(),
        );
        row(
            "  query traffic",
            s.query_messages.to_string(),
            b.query_messages.to_string(),
        );
        row(
            "  consultation",
            s.consultation_messages.to_string(),
            b.consultation_messages.to_string(),
        );
        row(
            "messages per query",
            format!("{:.3}", s.messages_per_query),
            format!("{:.3}", b.messages_per_query),
        );
        row(
            "total per query",
            format!("{:.3}", s.total_per_query),
            format!("{:.3}", b.total_per_query),
        );
        row(
            "trace recount",
            if s.recount_matches { "ok" } else { "MISMATCH" }.into(),
            if b.recount_matches { "ok" } else { "MISMATCH" }.into(),
        );
        let fmt = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{r:.4}"));
        let _ = writeln!(out, "query traffic ratio      {}", fmt(self.query_ratio));
        let _ = writeln!(
            out,
            "consultation ratio       {}",
            fmt(self.consultation_ratio)
        );
        out
    }
}

/// K-region membership of every agent, for evaluation against a manifest.
pub fn k_holders(system: &System) -> BTreeMap<crate::feature::FeatureId, ClassId> {
    let mut out = BTreeMap::new();
    for a in system.agents() {
        for (f, _) in a.collection().in_region(Region::K) {
            out.insert(f.clone(), a.class_id().clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, CorpusSpec, Mix};

    fn spec() -> CorpusSpec {
        CorpusSpec {
            num_classes: 4,
            base_per_class: 4,
            learnable_per_class: 3,
            noise_pool: 10,
            tags_per_object: 4,
            length: 200,
            seed: 3,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn runs_are_deterministic_and_reconcile() {
        let (corpus, manifest) = generate(&spec()).unwrap();
        let cfg = ScenarioConfig {
            seed: 11,
            window: 20,
            ..ScenarioConfig::default()
        };
        let a = run_scenario(&corpus, &manifest, &cfg, RunOptions::default()).unwrap();
        let b = run_scenario(&corpus, &manifest, &cfg, RunOptions::default()).unwrap();
        assert_eq!(a.metrics.to_jsonl(), b.metrics.to_jsonl());
        assert_eq!(trace_to_jsonl(&a.trace), trace_to_jsonl(&b.trace));
        assert!(a.violations.is_empty());
        a.metrics.reconcile().unwrap();
        assert_eq!(a.metrics.epochs.len(), 10);
        assert!(a.system.is_quiescent());
    }

    #[test]
    fn empty_corpus_gives_bootstrap_only_metrics() {
        let (_, manifest) = generate(&spec()).unwrap();
        let out = run_scenario(
            &Corpus::default(),
            &manifest,
            &ScenarioConfig::default(),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.metrics.summary.queries, 0);
        assert_eq!(out.metrics.summary.messages_total, 0);
        assert!(out.trace.is_empty());
        assert_eq!(out.system.registry().len(), 16);
    }

    #[test]
    fn separable_corpus_beats_random_guessing() {
        let spec = CorpusSpec {
            mix: Mix {
                base: 1.0,
                learnable: 0.0,
                noise: 0.0,
            },
            ..spec()
        };
        let (corpus, manifest) = generate(&spec).unwrap();
        let out = run_scenario(
            &corpus,
            &manifest,
            &ScenarioConfig::default(),
            RunOptions::default(),
        )
        .unwrap();
        let s = &out.metrics.summary;
        assert!(s.accuracy >= s.random_baseline);
        assert_eq!(s.accuracy, 1.0);
    }

    #[test]
    fn class_count_mismatch_is_an_error() {
        let (corpus, manifest) = generate(&spec()).unwrap();
        let cfg = ScenarioConfig {
            num_classes: Some(5),
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            run_scenario(&corpus, &manifest, &cfg, RunOptions::default()),
            Err(Error::Mismatch(_))
        ));
        let mut short = manifest.clone();
        short.classes.pop();
        assert!(matches!(
            run_scenario(
                &corpus,
                &short,
                &ScenarioConfig::default(),
                RunOptions::default()
            ),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn comparison_with_one_class_is_identical() {
        let spec = CorpusSpec {
            num_classes: 1,
            length: 50,
            ..spec()
        };
        let (corpus, manifest) = generate(&spec).unwrap();
        let cmp = compare_baseline(&corpus, &manifest, &ScenarioConfig::default()).unwrap();
        assert_eq!(cmp.selective.total_messages, cmp.broadcast.total_messages);
        assert_eq!(
            cmp.selective.messages_by_variant,
            cmp.broadcast.messages_by_variant
        );
        assert!(cmp.selective.recount_matches && cmp.broadcast.recount_matches);
    }

    #[test]
    fn comparison_with_top_k_equal_to_m_differs_only_in_consultation() {
        // every object names a base tag of every class, so no class is
        // dropped at zero confidence and top_k = M reaches all of them.
        // With promotions on, agents would start contesting each other's
        // base tags and the dispatch sets would shrink.
        let manifest = Manifest::parse(
            r#"{"classes":[
                {"class":"a","base":["a1","a2"]},
                {"class":"b","base":["b1","b2"]},
                {"class":"c","base":["c1","c2"]}]}"#,
        )
        .unwrap();
        let mut text = String::new();
        for i in 0..60 {
            let own = ["a", "b", "c"][i % 3];
            let _ = writeln!(
                text,
                "o{i}\t{own}\ta{},b{},c{},{own}.x{}",
                i % 2 + 1,
                i % 2 + 1,
                i % 2 + 1,
                i % 2
            );
        }
        let corpus = Corpus::parse(&text).unwrap();
        let cfg = ScenarioConfig {
            top_k: Some(3),
            promotions: false,
            window: 20,
            ..ScenarioConfig::default()
        };
        let cmp = compare_baseline(&corpus, &manifest, &cfg).unwrap();
        for v in [Variant::Dispatch, Variant::Result] {
            assert_eq!(
                cmp.selective.messages_by_variant[&v],
                cmp.broadcast.messages_by_variant[&v]
            );
        }
        assert_eq!(cmp.selective.query_messages, 360);
        assert_eq!(cmp.selective.consult_mode, "lookup");
        assert_eq!(cmp.broadcast.consult_mode, "broadcast");
        assert!(cmp.selective.recount_matches && cmp.broadcast.recount_matches);
    }

    #[test]
    fn pipelined_batches_run_clean() {
        let spec = CorpusSpec {
            shared_learnable: 2,
            ..spec()
        };
        let (corpus, manifest) = generate(&spec).unwrap();
        let cfg = ScenarioConfig {
            pipeline: 8,
            window: 20,
            ..ScenarioConfig::default()
        };
        let out = run_scenario(&corpus, &manifest, &cfg, RunOptions::default()).unwrap();
        assert!(out.violations.is_empty());
        assert_eq!(out.metrics.summary.queries, 200);
    }
}
