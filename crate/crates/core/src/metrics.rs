//! Run metrics: one JSON record per line plus a human summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::center::ClassificationVector;
use crate::feature::ClassId;
use crate::protocol::Variant;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRecord {
    /// Object identifier from the corpus.
    pub object: String,
    pub seq: u64,
    pub true_class: ClassId,
    pub predicted: Option<ClassId>,
    pub correct: bool,
    pub fallback: bool,
    /// Dispatch and Result messages spent on this query.
    pub messages: u64,
    pub vector: ClassificationVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AgentEpoch {
    pub class: ClassId,
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub opened: u64,
    pub committed: u64,
    pub aborted: u64,
}

/// Region sizes and cumulative session counts after `queries` queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub queries: u64,
    pub agents: Vec<AgentEpoch>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub queries: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Accuracy of guessing a class uniformly at random.
    pub random_baseline: f64,
    pub fallback_queries: u64,
    pub dispatch_policy: String,
    pub consult_mode: String,
    pub messages_total: u64,
    pub query_messages: u64,
    pub consultation_messages: u64,
    pub messages_by_variant: BTreeMap<Variant, u64>,
    pub sessions_opened: u64,
    pub sessions_committed: u64,
    pub sessions_aborted: u64,
    /// Idle points at which the consistency check ran.
    pub checked_points: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub queries: Vec<QueryRecord>,
    pub epochs: Vec<EpochRecord>,
    pub summary: Summary,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Query(&'a QueryRecord),
    Epoch(&'a EpochRecord),
    Summary(&'a Summary),
}

impl RunMetrics {
    /// Query and epoch records interleaved in run order, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: Line<'_>| {
            out.push_str(&serde_json::to_string(&line).expect("metrics serialize"));
            out.push('\n');
        };
        let mut epochs = self.epochs.iter().peekable();
        for (i, q) in self.queries.iter().enumerate() {
            while let Some(e) = epochs.next_if(|e| e.queries as usize <= i) {
                push(Line::Epoch(e));
            }
            push(Line::Query(q));
        }
        for e in epochs {
            push(Line::Epoch(e));
        }
        push(Line::Summary(&self.summary));
        out
    }

    /// Checks that the summary totals agree with the per-query records.
    pub fn reconcile(&self) -> Result<(), String> {
        let s = &self.summary;
        let check = |what: &str, a: u64, b: u64| {
            if a == b {
                Ok(())
            } else {
                Err(format!("{what}: summary {a}, recount {b}"))
            }
        };
        check("queries", s.queries, self.queries.len() as u64)?;
        check(
            "correct",
            s.correct,
            self.queries.iter().filter(|q| q.correct).count() as u64,
        )?;
        check(
            "fallback",
            s.fallback_queries,
            self.queries.iter().filter(|q| q.fallback).count() as u64,
        )?;
        check(
            "query messages",
            s.query_messages,
            self.queries.iter().map(|q| q.messages).sum(),
        )?;
        let by_variant = |v| s.messages_by_variant.get(&v).copied().unwrap_or(0);
        check(
            "query messages by variant",
            s.query_messages,
            by_variant(Variant::Dispatch) + by_variant(Variant::Result),
        )?;
        check(
            "total messages",
            s.messages_total,
            s.messages_by_variant.values().sum(),
        )?;
        check(
            "consultation messages",
            s.consultation_messages,
            s.messages_total - s.query_messages,
        )?;
        for q in &self.queries {
            if q.correct != (q.predicted.as_ref() == Some(&q.true_class)) {
                return Err(format!("query {}: correct flag disagrees", q.object));
            }
        }
        Ok(())
    }

    pub fn summary_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k:<24} {v}");
        };
        row("queries", s.queries.to_string());
        row(
            "accuracy",
            format!("{:.4} ({}/{})", s.accuracy, s.correct, s.queries),
        );
        row("random baseline", format!("{:.4}", s.random_baseline));
        row("fallback queries", s.fallback_queries.to_string());
        row("dispatch policy", s.dispatch_policy.clone());
        row("consult mode", s.consult_mode.clone());
        row("messages", s.messages_total.to_string());
        row("  query traffic", s.query_messages.to_string());
        row("  consultation", s.consultation_messages.to_string());
        if s.queries > 0 {
            row(
                "messages per query",
                format!("{:.3}", s.query_messages as f64 / s.queries as f64),
            );
        }
        for (v, n) in &s.messages_by_variant {
            row(&format!("  {v}"), n.to_string());
        }
        row(
            "sessions",
            format!(
                "{} opened, {} committed, {} aborted",
                s.sessions_opened, s.sessions_committed, s.sessions_aborted
            ),
        );
        row("consistency checks", s.checked_points.to_string());
        out
    }
}
