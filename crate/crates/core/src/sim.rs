//! Deterministic message-passing runtime for one center and its expert agents.
//!
//! Every ordered pair of endpoints is a FIFO channel with no loss and no
//! duplication. At each step a seeded scheduler picks one non-empty channel
//! uniformly at random and delivers its head, so interleavings across
//! channels vary with the seed while runs with the same seed are identical.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{ExpertAgent, LearningParams, ProtocolParams};
use crate::center::{
    aggregate, bootstrap, dispatch, AggregationParams, BaseFeatureRegistry, CenterAgent,
    CompletedQuery, DispatchPolicy,
};
use crate::error::{Error, Result};
use crate::feature::{ClassId, FeatureId, Region, Thresholds};
use crate::protocol::{Endpoint, Envelope, Message, QueryId, TraceRecord, Variant};
use crate::tags::TagCollection;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemConfig {
    pub thresholds: Thresholds,
    pub learning: LearningParams,
    pub protocol: ProtocolParams,
    pub policy: DispatchPolicy,
    pub aggregation: AggregationParams,
    pub d_capacity: Option<usize>,
    /// Scheduler seed.
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            thresholds: Thresholds::default(),
            learning: LearningParams::default(),
            protocol: ProtocolParams::default(),
            policy: DispatchPolicy::TopK(3),
            aggregation: AggregationParams::default(),
            d_capacity: None,
            seed: 0,
        }
    }
}

/// Bootstrap description of one main class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSeed {
    pub class: ClassId,
    pub base: BTreeSet<FeatureId>,
    pub subconcepts: Vec<(String, BTreeSet<FeatureId>)>,
}

/// Scheduler state needed to resume a run exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedulerState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

struct Network {
    channels: IndexMap<(Endpoint, Endpoint), VecDeque<Message>>,
    in_flight: usize,
    rng: ChaCha8Rng,
}

impl Network {
    fn new(seed: u64) -> Self {
        Network {
            channels: IndexMap::new(),
            in_flight: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn send(&mut self, env: Envelope) {
        self.in_flight += 1;
        self.channels
            .entry((env.from, env.to))
            .or_default()
            .push_back(env.message);
    }

    fn next(&mut self) -> Option<Envelope> {
        if self.channels.is_empty() {
            return None;
        }
        let idx = self.rng.random_range(0..self.channels.len());
        let (key, queue) = self.channels.get_index_mut(idx).expect("index in range");
        let message = queue.pop_front().expect("only non-empty channels are kept");
        let (from, to) = key.clone();
        if queue.is_empty() {
            self.channels.swap_remove_index(idx);
        }
        self.in_flight -= 1;
        Some(Envelope { from, to, message })
    }

    fn scheduler_state(&self) -> SchedulerState {
        SchedulerState {
            seed: self.rng.get_seed(),
            word_pos: self.rng.get_word_pos(),
        }
    }
}

/// Something that breaks K-region disjointness or registry agreement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SharedK {
        feature: FeatureId,
        first: ClassId,
        second: ClassId,
    },
    RegistryMismatch {
        feature: FeatureId,
        registry: Option<ClassId>,
        k_holder: Option<ClassId>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SharedK {
                feature,
                first,
                second,
            } => write!(f, "{feature} is in the K regions of {first} and {second}"),
            Violation::RegistryMismatch {
                feature,
                registry,
                k_holder,
            } => {
                let show = |c: &Option<ClassId>| {
                    c.as_ref().map_or("nobody".to_string(), |c| c.to_string())
                };
                write!(
                    f,
                    "registry maps {feature} to {}, K region held by {}",
                    show(registry),
                    show(k_holder)
                )
            }
        }
    }
}

pub struct System {
    config: SystemConfig,
    classes: Vec<ClassId>,
    center: CenterAgent,
    agents: BTreeMap<ClassId, ExpertAgent>,
    network: Network,
    step: u64,
    next_query: u64,
    trace: Option<Vec<TraceRecord>>,
    variant_counts: [u64; Variant::ALL.len()],
    query_messages: HashMap<QueryId, u64>,
}

impl System {
    pub fn new(seeds: &[ClassSeed], config: SystemConfig) -> Result<Self> {
        config.policy.validate()?;
        let base: Vec<(ClassId, BTreeSet<FeatureId>)> = seeds
            .iter()
            .map(|s| (s.class.clone(), s.base.clone()))
            .collect();
        let (registry, agents) =
            bootstrap(&base, config.thresholds, config.learning, config.d_capacity)?;
        let mut agents: BTreeMap<ClassId, ExpertAgent> = agents
            .into_iter()
            .map(|a| (a.class_id().clone(), a))
            .collect();
        for s in seeds {
            let agent = agents.get_mut(&s.class).expect("bootstrapped");
            for (name, members) in &s.subconcepts {
                agent.add_subconcept(name.clone(), members.iter().cloned())?;
            }
        }
        Ok(Self::assemble(config, registry, agents, 0, 0, None))
    }

    pub(crate) fn assemble(
        config: SystemConfig,
        registry: BaseFeatureRegistry,
        agents: BTreeMap<ClassId, ExpertAgent>,
        step: u64,
        next_query: u64,
        scheduler: Option<SchedulerState>,
    ) -> Self {
        let mut network = Network::new(config.seed);
        if let Some(s) = scheduler {
            network.rng = ChaCha8Rng::from_seed(s.seed);
            network.rng.set_word_pos(s.word_pos);
        }
        System {
            config,
            classes: agents.keys().cloned().collect(),
            center: CenterAgent::new(registry, config.policy, config.aggregation),
            agents,
            network,
            step,
            next_query,
            trace: None,
            variant_counts: [0; Variant::ALL.len()],
            query_messages: HashMap::new(),
        }
    }

    /// Starts keeping every delivered message in memory.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn center(&self) -> &CenterAgent {
        &self.center
    }

    pub fn registry(&self) -> &BaseFeatureRegistry {
        self.center.registry()
    }

    pub fn agents(&self) -> impl Iterator<Item = &ExpertAgent> + '_ {
        self.agents.values()
    }

    pub fn agent(&self, class: &ClassId) -> Option<&ExpertAgent> {
        self.agents.get(class)
    }

    /// Test and fixture access; changes made here bypass the protocol.
    pub fn agent_mut(&mut self, class: &ClassId) -> Option<&mut ExpertAgent> {
        self.agents.get_mut(class)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn next_query_id(&self) -> u64 {
        self.next_query
    }

    pub fn scheduler_state(&self) -> SchedulerState {
        self.network.scheduler_state()
    }

    pub fn in_flight(&self) -> usize {
        self.network.in_flight
    }

    pub fn variant_count(&self, v: Variant) -> u64 {
        self.variant_counts[v as usize]
    }

    pub fn total_messages(&self) -> u64 {
        self.variant_counts.iter().sum()
    }

    pub fn active_sessions(&self) -> usize {
        self.agents.values().map(|a| a.sessions().count()).sum()
    }

    /// No messages in flight.
    pub fn is_idle(&self) -> bool {
        self.network.in_flight == 0
    }

    /// Idle, with no open promotion session and no unanswered query.
    pub fn is_quiescent(&self) -> bool {
        self.is_idle() && self.active_sessions() == 0 && !self.center.has_pending()
    }

    /// Hands a new query to the center, which emits the Dispatch messages.
    pub fn submit(&mut self, tags: &TagCollection) -> Result<QueryId> {
        let query = QueryId(self.next_query);
        let out = self.center.submit(query, tags, &self.classes)?;
        self.next_query += 1;
        for env in out {
            self.network.send(env);
        }
        Ok(query)
    }

    /// Delivers one message. Returns false when nothing was in flight.
    pub fn step(&mut self) -> bool {
        let Some(env) = self.network.next() else {
            return false;
        };
        let variant = env.message.variant();
        self.variant_counts[variant as usize] += 1;
        if let Some(q) = env.message.query() {
            *self.query_messages.entry(q).or_insert(0) += 1;
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord::new(self.step, &env));
        }
        self.step += 1;
        let out = match &env.to {
            Endpoint::Center => self.center.on_message(&env.from, env.message),
            Endpoint::Agent(c) => match self.agents.get_mut(c) {
                Some(agent) => {
                    agent.on_message(&env.from, env.message, &self.classes, self.config.protocol)
                }
                None => Vec::new(),
            },
        };
        for e in out {
            self.network.send(e);
        }
        true
    }

    pub fn run_until_idle(&mut self) -> u64 {
        let mut n = 0;
        while self.step() {
            n += 1;
        }
        n
    }

    /// Finished queries with the number of Dispatch/Result messages each used.
    pub fn take_completed(&mut self) -> Vec<(CompletedQuery, u64)> {
        self.center
            .take_completed()
            .into_iter()
            .map(|c| {
                let used = self.query_messages.remove(&c.query).unwrap_or(0);
                (c, used)
            })
            .collect()
    }

    /// Aborts sessions parked between fall rounds so the system can reach
    /// quiescence. Returns how many were aborted.
    pub fn settle(&mut self) -> usize {
        self.agents
            .values_mut()
            .map(|a| a.abort_waiting_sessions())
            .sum()
    }

    /// Read-only classification: dispatch, score and aggregate without
    /// messages or learning.
    pub fn classify(&self, tags: &TagCollection) -> Result<CompletedQuery> {
        let targets = dispatch(
            self.center.registry(),
            tags,
            self.config.policy,
            &self.classes,
        )?;
        let mut results = Vec::with_capacity(targets.len());
        for d in targets {
            let agent = &self.agents[&d.class_id];
            results.push((agent.score_query(tags)?, d));
        }
        let fallback = results.iter().any(|(_, d)| d.fallback);
        let subconcepts = results
            .iter()
            .filter(|(p, _)| !p.per_subconcept.is_empty())
            .map(|(p, _)| (p.class_id.clone(), p.per_subconcept.clone()))
            .collect();
        Ok(CompletedQuery {
            query: QueryId(self.next_query),
            vector: aggregate(&results, self.center.aggregation())?,
            fallback,
            subconcepts,
        })
    }

    /// Checks that no feature sits in two K regions and that the registry
    /// names exactly the K-region holders. Meaningful only when idle.
    pub fn check_consistency(&self) -> Result<(), Violation> {
        let mut holders: BTreeMap<&FeatureId, &ClassId> = BTreeMap::new();
        for agent in self.agents.values() {
            for (f, _) in agent.collection().in_region(Region::K) {
                if let Some(first) = holders.insert(f, agent.class_id()) {
                    return Err(Violation::SharedK {
                        feature: f.clone(),
                        first: first.clone(),
                        second: agent.class_id().clone(),
                    });
                }
            }
        }
        let registry = self.center.registry();
        for (f, c) in registry.iter() {
            if holders.get(f) != Some(&c) {
                return Err(Violation::RegistryMismatch {
                    feature: f.clone(),
                    registry: Some(c.clone()),
                    k_holder: holders.get(f).map(|c| (*c).clone()),
                });
            }
        }
        if holders.len() != registry.len() {
            let (f, c) = holders
                .iter()
                .find(|(f, _)| registry.owner(f).is_none())
                .expect("size mismatch implies an unregistered holder");
            return Err(Violation::RegistryMismatch {
                feature: (*f).clone(),
                registry: None,
                k_holder: Some((*c).clone()),
            });
        }
        Ok(())
    }

    pub fn require_quiescent(&self) -> Result<()> {
        if !self.is_idle() {
            return Err(Error::NotQuiescent(format!(
                "{} messages in flight",
                self.network.in_flight
            )));
        }
        if self.active_sessions() > 0 {
            return Err(Error::NotQuiescent(format!(
                "{} promotion sessions active",
                self.active_sessions()
            )));
        }
        if self.center.has_pending() {
            return Err(Error::NotQuiescent("queries awaiting replies".into()));
        }
        Ok(())
    }
}
