//! Expert agents: one per main class.
//!
//! An agent scores the queries the center dispatches to it against the K and M
//! regions of its feature collection, then learns from the same query: tags
//! go into the time-interval memory, known tags are reinforced, and unknown
//! tags that recur often enough are adopted at the M floor. Features that
//! climb to the K border are not promoted locally; the agent opens a
//! promotion session (see [`crate::protocol`]) so the K regions of all agents
//! stay disjoint.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::feature::{
    ClassId, FeatureCollection, FeatureError, FeatureId, Prob, ProbDelta, Region, Thresholds,
};
use crate::memory::TimeIntervalMemory;
use crate::protocol::{
    ConsultMode, Endpoint, Envelope, Message, PromotionSession, ProtocolError, SessionId,
    SessionState,
};
use crate::tags::TagCollection;

/// Subconcept that adopted features join when an agent has subconcepts.
pub const LEARNED_SUBCONCEPT: &str = "learned";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("query has no tags")]
    EmptyQuery,
    #[error("feature `{0}` is not in the M region")]
    NotInM(FeatureId),
    #[error("feature `{0}` is not in the K region")]
    NotInK(FeatureId),
    #[error("subconcept `{name}` references `{feature}`, which is not in the collection")]
    SubconceptMember { name: String, feature: FeatureId },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LearningParams {
    /// Reinforcement (raise) step.
    pub alpha_r: Prob,
    /// Decay step for features absent from the memory window.
    pub alpha_d: Prob,
    /// Fall step applied to a K-region owner by a contested promotion.
    pub alpha_f: Prob,
    /// Occurrences within the window before an unknown tag is adopted.
    pub theta: u32,
    pub window: usize,
    /// Dispatches between decay sweeps.
    pub epoch: usize,
    pub promotions: bool,
}

impl Default for LearningParams {
    fn default() -> Self {
        let alpha = Prob::from_micros(50_000).expect("valid");
        LearningParams {
            alpha_r: alpha,
            alpha_d: alpha,
            alpha_f: alpha,
            theta: 5,
            window: 50,
            epoch: 50,
            promotions: true,
        }
    }
}

/// Consultation settings shared by every agent in a system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    pub mode: ConsultMode,
    pub round_cap: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            mode: ConsultMode::Lookup,
            round_cap: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubConcept {
    pub name: String,
    pub members: BTreeSet<FeatureId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultPackage {
    pub class_id: ClassId,
    pub class_score: f64,
    pub per_subconcept: Vec<(String, f64)>,
    pub matched: Vec<(FeatureId, Prob)>,
}

/// What one dispatch did to an agent besides producing its reply.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DispatchOutcome {
    pub package: Option<ResultPackage>,
    /// M-region features held at the K border, awaiting consultation.
    pub triggered: Vec<FeatureId>,
    /// Features under an active session that were observed again.
    pub interest: Vec<FeatureId>,
    /// Unknown tags adopted at the M floor.
    pub inserted: Vec<FeatureId>,
    pub evicted: Vec<FeatureId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SessionStats {
    pub opened: u64,
    pub committed: u64,
    pub aborted: u64,
    pub stale: u64,
}

/// Sum of matched probabilities divided by the number of distinct query tags.
pub(crate) fn normalized_score(sum_micros: u64, tags: usize) -> f64 {
    sum_micros as f64 / (tags as f64 * f64::from(Prob::SCALE))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertAgent {
    class_id: ClassId,
    collection: FeatureCollection,
    tim: TimeIntervalMemory,
    subconcepts: Vec<SubConcept>,
    params: LearningParams,
    dispatches: u64,
    next_session: u64,
    sessions: BTreeMap<FeatureId, PromotionSession>,
    stats: SessionStats,
}

impl ExpertAgent {
    pub fn new(class_id: ClassId, thresholds: Thresholds, params: LearningParams) -> Self {
        ExpertAgent {
            class_id,
            collection: FeatureCollection::new(thresholds),
            tim: TimeIntervalMemory::new(params.window),
            subconcepts: Vec::new(),
            params,
            dispatches: 0,
            next_session: 0,
            sessions: BTreeMap::new(),
            stats: SessionStats::default(),
        }
    }

    /// Reassembles an agent from snapshot parts. Sessions are never restored.
    pub(crate) fn from_parts(
        class_id: ClassId,
        collection: FeatureCollection,
        tim: TimeIntervalMemory,
        params: LearningParams,
        dispatches: u64,
        next_session: u64,
    ) -> Self {
        ExpertAgent {
            class_id,
            collection,
            tim,
            subconcepts: Vec::new(),
            params,
            dispatches,
            next_session,
            sessions: BTreeMap::new(),
            stats: SessionStats::default(),
        }
    }

    pub fn class_id(&self) -> &ClassId {
        &self.class_id
    }

    pub fn collection(&self) -> &FeatureCollection {
        &self.collection
    }

    /// Direct access for fixtures; bypasses the registry protocol.
    pub fn collection_mut(&mut self) -> &mut FeatureCollection {
        &mut self.collection
    }

    pub fn memory(&self) -> &TimeIntervalMemory {
        &self.tim
    }

    pub fn params(&self) -> &LearningParams {
        &self.params
    }

    pub fn subconcepts(&self) -> &[SubConcept] {
        &self.subconcepts
    }

    pub fn dispatches(&self) -> u64 {
        self.dispatches
    }

    pub fn next_session_seq(&self) -> u64 {
        self.next_session
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn sessions(&self) -> impl Iterator<Item = &PromotionSession> + '_ {
        self.sessions.values()
    }

    pub fn has_active_sessions(&self) -> bool {
        !self.sessions.is_empty()
    }

    pub fn add_subconcept(
        &mut self,
        name: impl Into<String>,
        members: impl IntoIterator<Item = FeatureId>,
    ) -> Result<(), AgentError> {
        let name = name.into();
        let members: BTreeSet<FeatureId> = members.into_iter().collect();
        if let Some(f) = members.iter().find(|f| !self.collection.contains(f)) {
            return Err(AgentError::SubconceptMember {
                name,
                feature: f.clone(),
            });
        }
        self.subconcepts.push(SubConcept { name, members });
        Ok(())
    }

    pub fn score_query(&self, tags: &TagCollection) -> Result<ResultPackage, AgentError> {
        if tags.is_empty() {
            return Err(AgentError::EmptyQuery);
        }
        let th = self.collection.thresholds();
        let matched: Vec<(FeatureId, Prob)> = tags
            .iter()
            .filter_map(|t| {
                let p = self.collection.probability(t)?;
                (th.region(p) != Region::D).then(|| (t.clone(), p))
            })
            .collect();
        let sum = |filter: &dyn Fn(&FeatureId) -> bool| -> u64 {
            matched
                .iter()
                .filter(|(f, _)| filter(f))
                .map(|(_, p)| u64::from(p.micros()))
                .sum()
        };
        let n = tags.len();
        let per_subconcept: Vec<(String, f64)> = self
            .subconcepts
            .iter()
            .map(|sc| {
                let s = sum(&|f| sc.members.contains(f));
                (sc.name.clone(), normalized_score(s, n))
            })
            .collect();
        let class_score = if per_subconcept.is_empty() {
            normalized_score(sum(&|_| true), n)
        } else {
            per_subconcept.iter().map(|(_, s)| *s).fold(0.0, f64::max)
        };
        Ok(ResultPackage {
            class_id: self.class_id.clone(),
            class_score,
            per_subconcept,
            matched,
        })
    }

    /// True when one more reinforcement step would carry `f` across the K border.
    pub fn k_promotion_trigger(&self, f: &FeatureId) -> Result<bool, AgentError> {
        let th = self.collection.thresholds();
        match self.collection.probability(f) {
            Some(p) if th.region(p) == Region::M => {
                Ok(p.shifted(ProbDelta::up(self.params.alpha_r)) >= th.tau_k())
            }
            _ => Err(AgentError::NotInM(f.clone())),
        }
    }

    /// Scores on the pre-update state, then learns from the query.
    pub fn process_dispatch(
        &mut self,
        tags: &TagCollection,
    ) -> Result<DispatchOutcome, AgentError> {
        let package = self.score_query(tags)?;
        self.tim.record(tags);
        let mut out = DispatchOutcome {
            package: Some(package),
            ..DispatchOutcome::default()
        };
        let th = self.collection.thresholds();
        let step = ProbDelta::up(self.params.alpha_r);
        for f in tags {
            let Some(p) = self.collection.probability(f) else {
                continue;
            };
            if self.sessions.contains_key(f) {
                // frozen until the consultation resolves
                out.interest.push(f.clone());
                continue;
            }
            match th.region(p) {
                Region::M if self.k_promotion_trigger(f)? => {
                    if self.params.promotions {
                        out.triggered.push(f.clone());
                    }
                }
                Region::D if p.shifted(step) >= th.tau_k() => {
                    // A step wide enough to skip M lands just under the border.
                    let below = Prob::from_micros(th.tau_k().micros() - 1).expect("tau_k > 0");
                    self.collection.set(f.clone(), below);
                }
                _ => {
                    self.collection.adjust(f, step)?;
                }
            }
        }
        if self.params.promotions {
            out.inserted = self.promotion_candidates().into_iter().collect();
        }
        out.evicted = self.evict_dormant();
        Ok(out)
    }

    /// Adopts frequently seen unknown tags at the M floor.
    pub fn promotion_candidates(&mut self) -> BTreeSet<FeatureId> {
        let collection = &self.collection;
        let found = self
            .tim
            .frequent_unknown_tags(|f| collection.contains(f), self.params.theta);
        for f in &found {
            self.collection
                .insert_at_m_floor(f.clone())
                .expect("candidates are unknown to the collection");
            if !self.subconcepts.is_empty() {
                self.learned_subconcept().members.insert(f.clone());
            }
        }
        found
    }

    fn learned_subconcept(&mut self) -> &mut SubConcept {
        let idx = match self
            .subconcepts
            .iter()
            .position(|sc| sc.name == LEARNED_SUBCONCEPT)
        {
            Some(i) => i,
            None => {
                self.subconcepts.push(SubConcept {
                    name: LEARNED_SUBCONCEPT.to_string(),
                    members: BTreeSet::new(),
                });
                self.subconcepts.len() - 1
            }
        };
        &mut self.subconcepts[idx]
    }

    fn evict_dormant(&mut self) -> Vec<FeatureId> {
        let evicted = self.collection.evict_dormant();
        for f in &evicted {
            for sc in &mut self.subconcepts {
                sc.members.remove(f);
            }
        }
        evicted
    }

    /// Lowers every feature not seen within the memory window by `alpha_d`.
    /// Returns the features that dropped out of K.
    pub fn epoch_decay(&mut self) -> Vec<FeatureId> {
        let unseen: Vec<FeatureId> = self
            .collection
            .keys()
            .filter(|f| !self.tim.seen_within_window(f) && !self.sessions.contains_key(*f))
            .cloned()
            .collect();
        let step = ProbDelta::down(self.params.alpha_d);
        let mut left_k = Vec::new();
        for f in unseen {
            let t = self
                .collection
                .adjust(&f, step)
                .expect("key taken from collection");
            if t.left_k() {
                left_k.push(f);
            }
        }
        self.evict_dormant();
        left_k
    }

    pub fn handle_k_query(&self, f: &FeatureId) -> bool {
        self.collection.region_of(f) == Some(Region::K)
    }

    /// Applies one fall step. `Ok(true)` when `f` left K as a result.
    pub fn handle_fall_notice(&mut self, f: &FeatureId) -> Result<bool, AgentError> {
        if !self.handle_k_query(f) {
            return Err(AgentError::NotInK(f.clone()));
        }
        let t = self
            .collection
            .adjust(f, ProbDelta::down(self.params.alpha_f))?;
        Ok(t.left_k())
    }

    pub fn start_promotion(
        &mut self,
        f: FeatureId,
        classes: &[ClassId],
        proto: ProtocolParams,
    ) -> Result<Vec<Envelope>, AgentError> {
        if self.sessions.contains_key(&f) {
            return Err(ProtocolError::DuplicateSession(f).into());
        }
        self.k_promotion_trigger(&f)?;
        let id = SessionId {
            requester: self.class_id.clone(),
            seq: self.next_session,
        };
        self.next_session += 1;
        let peers: Vec<ClassId> = classes
            .iter()
            .filter(|c| **c != self.class_id)
            .cloned()
            .collect();
        let (session, out) =
            PromotionSession::start(id, f.clone(), proto.mode, peers, proto.round_cap);
        self.stats.opened += 1;
        self.sessions.insert(f, session);
        Ok(out)
    }

    /// Abandons sessions parked between fall rounds. Such sessions have no
    /// messages in flight, so the agent's feature simply stays in M.
    pub fn abort_waiting_sessions(&mut self) -> usize {
        let waiting: Vec<FeatureId> = self
            .sessions
            .iter()
            .filter(|(_, s)| matches!(s.state(), SessionState::Falling { waiting: true, .. }))
            .map(|(f, _)| f.clone())
            .collect();
        for f in &waiting {
            self.sessions.remove(f);
            self.stats.aborted += 1;
        }
        waiting.len()
    }

    /// Handles one delivered message and returns the messages it produces.
    pub fn on_message(
        &mut self,
        from: &Endpoint,
        message: Message,
        classes: &[ClassId],
        proto: ProtocolParams,
    ) -> Vec<Envelope> {
        let me = Endpoint::Agent(self.class_id.clone());
        match message {
            Message::Dispatch { query, tags, .. } => {
                let mut out = Vec::new();
                let outcome = match self.process_dispatch(&tags) {
                    Ok(o) => o,
                    Err(_) => {
                        self.stats.stale += 1;
                        return out;
                    }
                };
                out.push(Envelope::new(
                    me.clone(),
                    from.clone(),
                    Message::Result {
                        query,
                        package: outcome.package.expect("set by process_dispatch"),
                    },
                ));
                for f in outcome.interest {
                    if let Some(s) = self.sessions.get_mut(&f) {
                        out.extend(s.on_interest());
                    }
                }
                for f in outcome.triggered {
                    if let Ok(msgs) = self.start_promotion(f, classes, proto) {
                        out.extend(msgs);
                    }
                }
                self.dispatches += 1;
                if self.dispatches.is_multiple_of(self.params.epoch as u64) {
                    for f in self.epoch_decay() {
                        out.push(self.removal(f, None));
                    }
                }
                out
            }
            Message::KRegionQuery { feature, session } => {
                let in_k = self.handle_k_query(&feature);
                vec![Envelope::new(
                    me,
                    from.clone(),
                    Message::KRegionReply {
                        feature,
                        in_k,
                        session,
                    },
                )]
            }
            Message::FallNotice { feature, session } => {
                let mut out = Vec::new();
                let left_k = match self.handle_fall_notice(&feature) {
                    Ok(true) => {
                        out.push(self.removal(feature.clone(), Some(session.clone())));
                        true
                    }
                    Ok(false) => false,
                    // stale registry entry: this agent no longer holds it in K
                    Err(_) => true,
                };
                out.push(Envelope::new(
                    me,
                    from.clone(),
                    Message::FallAck {
                        feature,
                        left_k,
                        session,
                    },
                ));
                out
            }
            Message::OwnerReply {
                feature,
                owner,
                session,
            } => self.advance(&feature, &session, |s| s.on_owner_reply(owner)),
            Message::KRegionReply {
                feature,
                in_k,
                session,
            } => {
                let peer = match from {
                    Endpoint::Agent(c) => c.clone(),
                    Endpoint::Center => {
                        self.stats.stale += 1;
                        return Vec::new();
                    }
                };
                self.advance(&feature, &session, |s| s.on_k_region_reply(peer, in_k))
            }
            Message::FallAck {
                feature,
                left_k,
                session,
            } => self.advance(&feature, &session, |s| s.on_fall_ack(left_k)),
            Message::CommitAck {
                feature,
                outcome,
                session,
            } => self.advance(&feature, &session, |s| s.on_commit_ack(outcome)),
            Message::Result { .. }
            | Message::OwnerQuery { .. }
            | Message::RegistryCommit { .. }
            | Message::RegistryRemove { .. } => {
                self.stats.stale += 1;
                Vec::new()
            }
        }
    }

    fn removal(&self, feature: FeatureId, session: Option<SessionId>) -> Envelope {
        Envelope::new(
            Endpoint::Agent(self.class_id.clone()),
            Endpoint::Center,
            Message::RegistryRemove {
                feature,
                class: self.class_id.clone(),
                session,
            },
        )
    }

    /// Feeds a reply into the matching session and settles finished sessions.
    fn advance(
        &mut self,
        feature: &FeatureId,
        session: &SessionId,
        step: impl FnOnce(&mut PromotionSession) -> Result<Vec<Envelope>, ProtocolError>,
    ) -> Vec<Envelope> {
        let Some(s) = self.sessions.get_mut(feature).filter(|s| s.id() == session) else {
            self.stats.stale += 1;
            return Vec::new();
        };
        let mut out = match step(s) {
            Ok(out) => out,
            Err(_) => {
                self.stats.stale += 1;
                return Vec::new();
            }
        };
        match s.state() {
            SessionState::Done => {
                self.sessions.remove(feature);
                self.stats.committed += 1;
                if self.collection.insert_at_k_floor(feature.clone()).is_err() {
                    // Registry now names us but we cannot hold the feature in K.
                    out.push(self.removal(feature.clone(), Some(session.clone())));
                }
            }
            SessionState::Aborted => {
                self.sessions.remove(feature);
                self.stats.aborted += 1;
            }
            _ => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Prob {
        Prob::from_f64(v).unwrap()
    }

    fn agent() -> ExpertAgent {
        ExpertAgent::new(
            "c1".into(),
            Thresholds::default(),
            LearningParams::default(),
        )
    }

    fn tags(items: &[&str]) -> TagCollection {
        items.iter().copied().collect()
    }

    #[test]
    fn score_examples() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.8));
        let pkg = a.score_query(&tags(&["a", "b"])).unwrap();
        assert_eq!(pkg.class_score, 0.4);
        assert_eq!(pkg.matched, vec![("a".into(), p(0.8))]);

        assert_eq!(a.score_query(&tags(&["x", "y"])).unwrap().class_score, 0.0);

        a.collection_mut().set("d".into(), p(0.2));
        let pkg = a.score_query(&tags(&["d"])).unwrap();
        assert_eq!(pkg.class_score, 0.0);
        assert!(pkg.matched.is_empty());

        assert_eq!(
            a.score_query(&TagCollection::new()),
            Err(AgentError::EmptyQuery)
        );
    }

    #[test]
    fn subconcept_scores_take_the_max() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.8));
        a.collection_mut().set("b".into(), p(0.6));
        a.add_subconcept("first", ["a".into()]).unwrap();
        a.add_subconcept("second", ["b".into()]).unwrap();
        let pkg = a.score_query(&tags(&["a", "b"])).unwrap();
        assert_eq!(pkg.per_subconcept.len(), 2);
        assert_eq!(pkg.class_score, 0.4);
        assert!(a.add_subconcept("bad", ["zzz".into()]).is_err());
    }

    #[test]
    fn dispatch_reinforces_after_scoring() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.40));
        let out = a.process_dispatch(&tags(&["a"])).unwrap();
        assert_eq!(out.package.unwrap().class_score, 0.4);
        assert_eq!(a.collection().probability(&"a".into()), Some(p(0.45)));
    }

    #[test]
    fn reinforcement_revives_dormant_features() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.29));
        a.process_dispatch(&tags(&["a"])).unwrap();
        assert_eq!(a.collection().probability(&"a".into()), Some(p(0.34)));
        assert_eq!(a.collection().region_of(&"a".into()), Some(Region::M));
    }

    #[test]
    fn unknown_tags_only_enter_memory() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.5));
        let before = a.collection().clone();
        a.process_dispatch(&tags(&["z"])).unwrap();
        assert_eq!(a.collection(), &before);
        assert_eq!(a.memory().count(&"z".into()), 1);
    }

    #[test]
    fn decay_examples() {
        let mut a = agent();
        a.collection_mut().set("f".into(), p(0.32));
        assert!(a.epoch_decay().is_empty());
        assert_eq!(a.collection().probability(&"f".into()), Some(p(0.27)));
        assert_eq!(a.collection().region_of(&"f".into()), Some(Region::D));

        let mut a = agent();
        a.collection_mut().set("f".into(), p(0.9));
        a.process_dispatch(&tags(&["f"])).unwrap();
        let held = a.collection().probability(&"f".into());
        a.epoch_decay();
        assert_eq!(a.collection().probability(&"f".into()), held);

        let mut a = agent();
        a.collection_mut().set("f".into(), p(0.72));
        assert_eq!(a.epoch_decay(), vec![FeatureId::new("f")]);
        assert_eq!(a.collection().probability(&"f".into()), Some(p(0.67)));
    }

    #[test]
    fn promotion_candidates_examples() {
        let mut a = agent();
        for _ in 0..6 {
            a.tim.record(&tags(&["x"]));
        }
        assert_eq!(a.promotion_candidates(), ["x".into()].into());
        assert_eq!(a.collection().probability(&"x".into()), Some(p(0.3)));
        // now known
        assert!(a.promotion_candidates().is_empty());

        let mut a = agent();
        a.tim.record(&tags(&["x"]));
        assert!(a.promotion_candidates().is_empty());
    }

    #[test]
    fn learned_features_join_learned_subconcept() {
        let mut a = agent();
        a.collection_mut().set("a".into(), p(0.8));
        a.add_subconcept("base", ["a".into()]).unwrap();
        for _ in 0..5 {
            a.tim.record(&tags(&["x"]));
        }
        a.promotion_candidates();
        let learned = a
            .subconcepts()
            .iter()
            .find(|s| s.name == LEARNED_SUBCONCEPT)
            .unwrap();
        assert!(learned.members.contains(&FeatureId::new("x")));
    }

    #[test]
    fn trigger_examples() {
        let mut a = agent();
        a.collection_mut().set("near".into(), p(0.66));
        a.collection_mut().set("far".into(), p(0.50));
        a.collection_mut().set("k".into(), p(0.9));
        assert_eq!(a.k_promotion_trigger(&"near".into()), Ok(true));
        assert_eq!(a.k_promotion_trigger(&"far".into()), Ok(false));
        assert_eq!(
            a.k_promotion_trigger(&"k".into()),
            Err(AgentError::NotInM("k".into()))
        );
    }

    #[test]
    fn triggered_feature_is_held() {
        let mut a = agent();
        a.collection_mut().set("near".into(), p(0.66));
        let out = a.process_dispatch(&tags(&["near"])).unwrap();
        assert_eq!(out.triggered, vec![FeatureId::new("near")]);
        assert_eq!(a.collection().probability(&"near".into()), Some(p(0.66)));
    }

    #[test]
    fn k_query_examples() {
        let mut a = agent();
        a.collection_mut().set("hi".into(), p(0.8));
        a.collection_mut().set("mid".into(), p(0.5));
        assert!(a.handle_k_query(&"hi".into()));
        assert!(!a.handle_k_query(&"mid".into()));
        assert!(!a.handle_k_query(&"none".into()));
    }

    #[test]
    fn fall_notice_examples() {
        let mut a = agent();
        a.collection_mut().set("edge".into(), p(0.71));
        a.collection_mut().set("high".into(), p(0.90));
        assert_eq!(a.handle_fall_notice(&"edge".into()), Ok(true));
        assert_eq!(a.collection().probability(&"edge".into()), Some(p(0.66)));
        assert_eq!(a.handle_fall_notice(&"high".into()), Ok(false));
        assert_eq!(a.collection().probability(&"high".into()), Some(p(0.85)));
        assert_eq!(
            a.handle_fall_notice(&"gone".into()),
            Err(AgentError::NotInK("gone".into()))
        );
    }

    #[test]
    fn fall_notice_message_for_stale_owner_acks_left_k() {
        let mut a = agent();
        let session = SessionId {
            requester: "c2".into(),
            seq: 0,
        };
        let out = a.on_message(
            &Endpoint::Agent("c2".into()),
            Message::FallNotice {
                feature: "gone".into(),
                session: session.clone(),
            },
            &["c1".into(), "c2".into()],
            ProtocolParams::default(),
        );
        assert_eq!(out.len(), 1);
        assert!(matches!(
            out[0].message,
            Message::FallAck { left_k: true, .. }
        ));
    }

    #[test]
    fn duplicate_session_is_rejected() {
        let mut a = agent();
        a.collection_mut().set("f".into(), p(0.66));
        let classes = ["c1".into(), "c2".into()];
        let out = a
            .start_promotion("f".into(), &classes, ProtocolParams::default())
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            a.start_promotion("f".into(), &classes, ProtocolParams::default()),
            Err(AgentError::Protocol(ProtocolError::DuplicateSession(
                "f".into()
            )))
        );
    }

    #[test]
    fn session_features_skip_decay() {
        let mut a = agent();
        a.collection_mut().set("f".into(), p(0.66));
        a.start_promotion(
            "f".into(),
            &["c1".into(), "c2".into()],
            ProtocolParams::default(),
        )
        .unwrap();
        a.epoch_decay();
        assert_eq!(a.collection().probability(&"f".into()), Some(p(0.66)));
    }
}
