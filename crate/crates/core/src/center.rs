//! The center agent: base-feature registry, dispatch under a degree of
//! confidence, aggregation of expert replies, and registry arbitration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{ExpertAgent, LearningParams, ResultPackage};
use crate::feature::{ClassId, FeatureId, Thresholds};
use crate::protocol::{CommitOutcome, Endpoint, Envelope, Message, QueryId};
use crate::tags::TagCollection;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CenterError {
    #[error("query has no tags")]
    EmptyQuery,
    #[error("feature `{feature}` is a base feature of both `{first}` and `{second}`")]
    Overlap {
        feature: FeatureId,
        first: ClassId,
        second: ClassId,
    },
    #[error("class `{0}` appears more than once")]
    DuplicateClass(ClassId),
    #[error("invalid dispatch policy: {0}")]
    InvalidPolicy(String),
}

/// Feature -> owning class. A map, so a feature has at most one owner.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaseFeatureRegistry {
    owner: BTreeMap<FeatureId, ClassId>,
}

impl BaseFeatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn owner(&self, f: &FeatureId) -> Option<&ClassId> {
        self.owner.get(f)
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Sorted `(feature, class)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&FeatureId, &ClassId)> + '_ {
        self.owner.iter()
    }

    /// First writer wins; re-committing by the current owner is a no-op success.
    pub fn commit(&mut self, f: FeatureId, class: ClassId) -> CommitOutcome {
        match self.owner.get(&f) {
            Some(c) if *c != class => CommitOutcome::Conflict,
            _ => {
                self.owner.insert(f, class);
                CommitOutcome::Ok
            }
        }
    }

    /// Removes the mapping only when `class` is the current owner.
    pub fn remove(&mut self, f: &FeatureId, class: &ClassId) {
        if self.owner.get(f) == Some(class) {
            self.owner.remove(f);
        }
    }

    pub fn confidence(&self, tags: &TagCollection, class: &ClassId) -> Result<f64, CenterError> {
        if tags.is_empty() {
            return Err(CenterError::EmptyQuery);
        }
        let owned = tags.iter().filter(|t| self.owner(t) == Some(class)).count();
        Ok(owned as f64 / tags.len() as f64)
    }

    /// Owned-tag counts per class, for every class owning at least one tag.
    fn owned_counts(&self, tags: &TagCollection) -> BTreeMap<&ClassId, usize> {
        let mut counts = BTreeMap::new();
        for t in tags {
            if let Some(c) = self.owner(t) {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchPolicy {
    /// The `k` most confident classes with nonzero confidence.
    TopK(usize),
    /// Every class at or above the given confidence.
    MinConf(f64),
    /// Every class, whatever its confidence (the consult-everyone baseline).
    Broadcast,
}

impl DispatchPolicy {
    pub fn validate(&self) -> Result<(), CenterError> {
        match *self {
            DispatchPolicy::TopK(0) => Err(CenterError::InvalidPolicy("top_k must be >= 1".into())),
            DispatchPolicy::MinConf(c) if !(c > 0.0 && c <= 1.0) => Err(
                CenterError::InvalidPolicy(format!("min_conf {c} must lie in (0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DispatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DispatchPolicy::TopK(k) => write!(f, "top_k:{k}"),
            DispatchPolicy::MinConf(c) => write!(f, "min_conf:{c:?}"),
            DispatchPolicy::Broadcast => f.write_str("broadcast"),
        }
    }
}

impl std::str::FromStr for DispatchPolicy {
    type Err = CenterError;

    /// Accepts `top_k:N`, `min_conf:X` and `broadcast`.
    fn from_str(s: &str) -> Result<Self, CenterError> {
        let bad = || CenterError::InvalidPolicy(s.to_string());
        let policy = match s.split_once(':') {
            None if s == "broadcast" => DispatchPolicy::Broadcast,
            Some(("top_k", k)) => DispatchPolicy::TopK(k.parse().map_err(|_| bad())?),
            Some(("min_conf", c)) => DispatchPolicy::MinConf(c.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// How a reply's class score is mixed with the center's confidence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// `confidence * score`
    #[default]
    Product,
    /// `(confidence + score) / 2`
    Sum,
    /// `max(confidence, score)`
    Max,
}

impl Mixing {
    pub fn mix(self, confidence: f64, score: f64) -> f64 {
        match self {
            Mixing::Product => confidence * score,
            Mixing::Sum => (confidence + score) / 2.0,
            Mixing::Max => confidence.max(score),
        }
    }
}

impl fmt::Display for Mixing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mixing::Product => "product",
            Mixing::Sum => "sum",
            Mixing::Max => "max",
        })
    }
}

impl std::str::FromStr for Mixing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "product" => Ok(Mixing::Product),
            "sum" => Ok(Mixing::Sum),
            "max" => Ok(Mixing::Max),
            _ => Err(format!("unknown mixing `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeOfConfidence {
    pub class_id: ClassId,
    pub value: f64,
    /// Set when nobody owned any tag and the query went to every agent.
    pub fallback: bool,
}

/// Selects the agents a query is forwarded to. Never empty when `classes` is
/// non-empty: with no owned tag at all, the query is broadcast as a fallback.
pub fn dispatch(
    registry: &BaseFeatureRegistry,
    tags: &TagCollection,
    policy: DispatchPolicy,
    classes: &[ClassId],
) -> Result<Vec<DegreeOfConfidence>, CenterError> {
    if tags.is_empty() {
        return Err(CenterError::EmptyQuery);
    }
    let n = tags.len() as f64;
    let counts = registry.owned_counts(tags);
    let conf = |c: &ClassId| counts.get(c).copied().unwrap_or(0) as f64 / n;
    if counts.is_empty() {
        return Ok(fallback(classes));
    }
    let mut ranked: Vec<DegreeOfConfidence> = match policy {
        DispatchPolicy::Broadcast => classes
            .iter()
            .map(|c| DegreeOfConfidence {
                class_id: c.clone(),
                value: conf(c),
                fallback: false,
            })
            .collect(),
        _ => counts
            .keys()
            .map(|&c| DegreeOfConfidence {
                class_id: c.clone(),
                value: conf(c),
                fallback: false,
            })
            .collect(),
    };
    ranked.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| a.class_id.cmp(&b.class_id))
    });
    match policy {
        DispatchPolicy::TopK(k) => ranked.truncate(k),
        DispatchPolicy::MinConf(min) => ranked.retain(|d| d.value >= min),
        DispatchPolicy::Broadcast => {}
    }
    if ranked.is_empty() {
        return Ok(fallback(classes));
    }
    Ok(ranked)
}

fn fallback(classes: &[ClassId]) -> Vec<DegreeOfConfidence> {
    classes
        .iter()
        .map(|c| DegreeOfConfidence {
            class_id: c.clone(),
            value: 0.0,
            fallback: true,
        })
        .collect()
}

/// `(class, likelihood)` pairs, most likely first; ties by class identifier.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ClassificationVector(pub Vec<(ClassId, f64)>);

impl ClassificationVector {
    pub fn top(&self) -> Option<&ClassId> {
        self.0.first().map(|(c, _)| c)
    }

    pub fn likelihood(&self, class: &ClassId) -> f64 {
        self.0
            .iter()
            .find(|(c, _)| c == class)
            .map_or(0.0, |(_, l)| *l)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregationParams {
    pub mixing: Mixing,
    /// Weight applied to fallback-broadcast replies.
    pub eps_fb: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        AggregationParams {
            mixing: Mixing::Product,
            eps_fb: 0.01,
        }
    }
}

pub fn aggregate(
    results: &[(ResultPackage, DegreeOfConfidence)],
    params: AggregationParams,
) -> Result<ClassificationVector, CenterError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(results.len());
    for (pkg, conf) in results {
        if !seen.insert(&pkg.class_id) {
            return Err(CenterError::DuplicateClass(pkg.class_id.clone()));
        }
        let likelihood = if conf.fallback {
            params.eps_fb * pkg.class_score
        } else {
            params.mixing.mix(conf.value, pkg.class_score)
        };
        out.push((pkg.class_id.clone(), likelihood));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ClassificationVector(out))
}

/// Builds the registry and one agent per class, with every base feature at
/// the K floor.
pub fn bootstrap(
    base_features: &[(ClassId, BTreeSet<FeatureId>)],
    thresholds: Thresholds,
    params: LearningParams,
    d_capacity: Option<usize>,
) -> Result<(BaseFeatureRegistry, Vec<ExpertAgent>), CenterError> {
    let mut registry = BaseFeatureRegistry::new();
    let mut classes = BTreeSet::new();
    let mut agents = Vec::with_capacity(base_features.len());
    for (class, features) in base_features {
        if !classes.insert(class) {
            return Err(CenterError::DuplicateClass(class.clone()));
        }
        let mut agent = ExpertAgent::new(class.clone(), thresholds, params);
        *agent.collection_mut() = agent.collection().clone().with_d_capacity(d_capacity);
        for f in features {
            if let Some(first) = registry.owner(f) {
                return Err(CenterError::Overlap {
                    feature: f.clone(),
                    first: first.clone(),
                    second: class.clone(),
                });
            }
            registry.commit(f.clone(), class.clone());
            agent
                .collection_mut()
                .insert_at_k_floor(f.clone())
                .expect("fresh feature");
        }
        agents.push(agent);
    }
    Ok((registry, agents))
}

/// A query waiting for its expert replies.
#[derive(Clone, Debug)]
struct PendingQuery {
    expected: BTreeMap<ClassId, DegreeOfConfidence>,
    received: Vec<(ResultPackage, DegreeOfConfidence)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletedQuery {
    pub query: QueryId,
    pub vector: ClassificationVector,
    pub fallback: bool,
    /// Per-subconcept detail from each reply.
    pub subconcepts: Vec<(ClassId, Vec<(String, f64)>)>,
}

#[derive(Clone, Debug)]
pub struct CenterAgent {
    registry: BaseFeatureRegistry,
    policy: DispatchPolicy,
    aggregation: AggregationParams,
    pending: BTreeMap<QueryId, PendingQuery>,
    completed: Vec<CompletedQuery>,
    stale: u64,
}

impl CenterAgent {
    pub fn new(
        registry: BaseFeatureRegistry,
        policy: DispatchPolicy,
        aggregation: AggregationParams,
    ) -> Self {
        CenterAgent {
            registry,
            policy,
            aggregation,
            pending: BTreeMap::new(),
            completed: Vec::new(),
            stale: 0,
        }
    }

    pub fn registry(&self) -> &BaseFeatureRegistry {
        &self.registry
    }

    pub fn policy(&self) -> DispatchPolicy {
        self.policy
    }

    pub fn aggregation(&self) -> AggregationParams {
        self.aggregation
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn stale_messages(&self) -> u64 {
        self.stale
    }

    pub fn take_completed(&mut self) -> Vec<CompletedQuery> {
        std::mem::take(&mut self.completed)
    }

    /// Chooses targets for a new query and returns the Dispatch messages.
    pub fn submit(
        &mut self,
        query: QueryId,
        tags: &TagCollection,
        classes: &[ClassId],
    ) -> Result<Vec<Envelope>, CenterError> {
        let targets = dispatch(&self.registry, tags, self.policy, classes)?;
        let out = targets
            .iter()
            .map(|d| {
                Envelope::new(
                    Endpoint::Center,
                    Endpoint::Agent(d.class_id.clone()),
                    Message::Dispatch {
                        query,
                        tags: tags.clone(),
                        confidence: d.value,
                        fallback: d.fallback,
                    },
                )
            })
            .collect();
        self.pending.insert(
            query,
            PendingQuery {
                expected: targets
                    .into_iter()
                    .map(|d| (d.class_id.clone(), d))
                    .collect(),
                received: Vec::new(),
            },
        );
        Ok(out)
    }

    pub fn on_message(&mut self, from: &Endpoint, message: Message) -> Vec<Envelope> {
        match message {
            Message::Result { query, package } => {
                self.on_result(query, package);
                Vec::new()
            }
            Message::OwnerQuery { feature, session } => {
                let owner = self.registry.owner(&feature).cloned();
                vec![Envelope::new(
                    Endpoint::Center,
                    from.clone(),
                    Message::OwnerReply {
                        feature,
                        owner,
                        session,
                    },
                )]
            }
            Message::RegistryCommit {
                feature,
                class,
                session,
            } => {
                let outcome = self.registry.commit(feature.clone(), class);
                vec![Envelope::new(
                    Endpoint::Center,
                    from.clone(),
                    Message::CommitAck {
                        feature,
                        outcome,
                        session,
                    },
                )]
            }
            Message::RegistryRemove { feature, class, .. } => {
                self.registry.remove(&feature, &class);
                Vec::new()
            }
            _ => {
                self.stale += 1;
                Vec::new()
            }
        }
    }

    fn on_result(&mut self, query: QueryId, package: ResultPackage) {
        let Some(p) = self.pending.get_mut(&query) else {
            self.stale += 1;
            return;
        };
        let Some(conf) = p.expected.remove(&package.class_id) else {
            self.stale += 1;
            return;
        };
        p.received.push((package, conf));
        if !p.expected.is_empty() {
            return;
        }
        let p = self.pending.remove(&query).expect("present");
        let fallback = p.received.iter().any(|(_, c)| c.fallback);
        let subconcepts = p
            .received
            .iter()
            .filter(|(pkg, _)| !pkg.per_subconcept.is_empty())
            .map(|(pkg, _)| (pkg.class_id.clone(), pkg.per_subconcept.clone()))
            .collect();
        let vector =
            aggregate(&p.received, self.aggregation).expect("one reply per expected class");
        self.completed.push(CompletedQuery {
            query,
            vector,
            fallback,
            subconcepts,
        });
    }
}
