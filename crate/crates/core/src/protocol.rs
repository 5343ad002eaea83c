//! Message vocabulary and the K-promotion consultation state machine.
//!
//! When an agent's M-region feature reaches the K border it opens a
//! [`PromotionSession`]. The session discovers whether any other agent holds
//! the feature in K (one registry lookup at the center, or a query to every
//! peer in broadcast mode), pushes the holder down one fall step at a time,
//! and finally commits ownership through the center. The center serializes
//! commits, which is what keeps the K regions disjoint when two agents race.
//!
//! Session states:
//!
//! ```text
//!   start ──► LOOKUP ──none──► COMMITTING ──ok──► DONE
//!               ▲  │                │
//!               │  └─owner──► FALLING ◄──┘ conflict (via LOOKUP)
//!               │               │  ▲
//!               └──── left_k ───┘  └── interest event (while waiting)
//!                                  └─► ABORTED once rounds hit the cap
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ResultPackage;
use crate::feature::{ClassId, FeatureId};
use crate::tags::TagCollection;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("a promotion session for `{0}` is already active")]
    DuplicateSession(FeatureId),
    #[error("session {session} cannot accept {event} in state {state}")]
    StaleState {
        session: SessionId,
        event: &'static str,
        state: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Center,
    Agent(ClassId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Center => f.write_str("center"),
            Endpoint::Agent(c) => write!(f, "{c}"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub u64);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId {
    pub requester: ClassId,
    pub seq: u64,
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.requester, self.seq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsultMode {
    /// Ask the center's registry who owns the feature.
    Lookup,
    /// Ask every peer whether it holds the feature in K.
    Broadcast,
}

impl fmt::Display for ConsultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsultMode::Lookup => "lookup",
            ConsultMode::Broadcast => "broadcast",
        })
    }
}

impl std::str::FromStr for ConsultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lookup" => Ok(ConsultMode::Lookup),
            "broadcast" => Ok(ConsultMode::Broadcast),
            _ => Err(format!("unknown consultation mode `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitOutcome {
    Ok,
    Conflict,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Dispatch {
        query: QueryId,
        tags: TagCollection,
        confidence: f64,
        fallback: bool,
    },
    Result {
        query: QueryId,
        package: ResultPackage,
    },
    OwnerQuery {
        feature: FeatureId,
        session: SessionId,
    },
    OwnerReply {
        feature: FeatureId,
        owner: Option<ClassId>,
        session: SessionId,
    },
    KRegionQuery {
        feature: FeatureId,
        session: SessionId,
    },
    KRegionReply {
        feature: FeatureId,
        in_k: bool,
        session: SessionId,
    },
    FallNotice {
        feature: FeatureId,
        session: SessionId,
    },
    FallAck {
        feature: FeatureId,
        left_k: bool,
        session: SessionId,
    },
    RegistryCommit {
        feature: FeatureId,
        class: ClassId,
        session: SessionId,
    },
    CommitAck {
        feature: FeatureId,
        outcome: CommitOutcome,
        session: SessionId,
    },
    /// `session` is set when the removal was caused by a fall round.
    RegistryRemove {
        feature: FeatureId,
        class: ClassId,
        session: Option<SessionId>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Dispatch,
    Result,
    OwnerQuery,
    OwnerReply,
    KRegionQuery,
    KRegionReply,
    FallNotice,
    FallAck,
    RegistryCommit,
    CommitAck,
    RegistryRemove,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Dispatch,
        Variant::Result,
        Variant::OwnerQuery,
        Variant::OwnerReply,
        Variant::KRegionQuery,
        Variant::KRegionReply,
        Variant::FallNotice,
        Variant::FallAck,
        Variant::RegistryCommit,
        Variant::CommitAck,
        Variant::RegistryRemove,
    ];

    /// Dispatch and Result: traffic attributable to answering one query.
    pub fn is_query_traffic(self) -> bool {
        matches!(self, Variant::Dispatch | Variant::Result)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dispatch => "Dispatch",
            Variant::Result => "Result",
            Variant::OwnerQuery => "OwnerQuery",
            Variant::OwnerReply => "OwnerReply",
            Variant::KRegionQuery => "KRegionQuery",
            Variant::KRegionReply => "KRegionReply",
            Variant::FallNotice => "FallNotice",
            Variant::FallAck => "FallAck",
            Variant::RegistryCommit => "RegistryCommit",
            Variant::CommitAck => "CommitAck",
            Variant::RegistryRemove => "RegistryRemove",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Message {
    pub fn variant(&self) -> Variant {
        match self {
            Message::Dispatch { .. } => Variant::Dispatch,
            Message::Result { .. } => Variant::Result,
            Message::OwnerQuery { .. } => Variant::OwnerQuery,
            Message::OwnerReply { .. } => Variant::OwnerReply,
            Message::KRegionQuery { .. } => Variant::KRegionQuery,
            Message::KRegionReply { .. } => Variant::KRegionReply,
            Message::FallNotice { .. } => Variant::FallNotice,
            Message::FallAck { .. } => Variant::FallAck,
            Message::RegistryCommit { .. } => Variant::RegistryCommit,
            Message::CommitAck { .. } => Variant::CommitAck,
            Message::RegistryRemove { .. } => Variant::RegistryRemove,
        }
    }

    pub fn query(&self) -> Option<QueryId> {
        match self {
            Message::Dispatch { query, .. } | Message::Result { query, .. } => Some(*query),
            _ => None,
        }
    }

    pub fn feature(&self) -> Option<&FeatureId> {
        match self {
            Message::Dispatch { .. } | Message::Result { .. } => None,
            Message::OwnerQuery { feature, .. }
            | Message::OwnerReply { feature, .. }
            | Message::KRegionQuery { feature, .. }
            | Message::KRegionReply { feature, .. }
            | Message::FallNotice { feature, .. }
            | Message::FallAck { feature, .. }
            | Message::RegistryCommit { feature, .. }
            | Message::CommitAck { feature, .. }
            | Message::RegistryRemove { feature, .. } => Some(feature),
        }
    }

    pub fn session(&self) -> Option<&SessionId> {
        match self {
            Message::Dispatch { .. } | Message::Result { .. } => None,
            Message::RegistryRemove { session, .. } => session.as_ref(),
            Message::OwnerQuery { session, .. }
            | Message::OwnerReply { session, .. }
            | Message::KRegionQuery { session, .. }
            | Message::KRegionReply { session, .. }
            | Message::FallNotice { session, .. }
            | Message::FallAck { session, .. }
            | Message::RegistryCommit { session, .. }
            | Message::CommitAck { session, .. } => Some(session),
        }
    }

    /// Correlation key written to traces: the query id or the feature token.
    pub fn key(&self) -> String {
        match (self.query(), self.feature()) {
            (Some(q), _) => q.to_string(),
            (None, Some(f)) => f.to_string(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub from: Endpoint,
    pub to: Endpoint,
    pub message: Message,
}

impl Envelope {
    pub fn new(from: Endpoint, to: Endpoint, message: Message) -> Self {
        Envelope { from, to, message }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SessionState {
    /// Waiting for owner discovery. `pending` counts outstanding peer replies
    /// in broadcast mode; `owners` collects peers that answered yes.
    Lookup {
        pending: usize,
        owners: Vec<ClassId>,
    },
    /// Pushing `owner` down. `waiting` is set between fall rounds, when the
    /// session idles until the requester observes the feature again.
    Falling {
        owner: ClassId,
        waiting: bool,
    },
    Committing,
    Done,
    Aborted,
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionState::Lookup { .. } => f.write_str("LOOKUP"),
            SessionState::Falling { owner, waiting } => {
                write!(
                    f,
                    "FALLING({owner}{})",
                    if *waiting { ", waiting" } else { "" }
                )
            }
            SessionState::Committing => f.write_str("COMMITTING"),
            SessionState::Done => f.write_str("DONE"),
            SessionState::Aborted => f.write_str("ABORTED"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromotionSession {
    id: SessionId,
    feature: FeatureId,
    mode: ConsultMode,
    peers: Vec<ClassId>,
    state: SessionState,
    rounds: u32,
    round_cap: u32,
}

impl PromotionSession {
    /// Opens a session and returns the discovery messages.
    pub fn start(
        id: SessionId,
        feature: FeatureId,
        mode: ConsultMode,
        peers: Vec<ClassId>,
        round_cap: u32,
    ) -> (Self, Vec<Envelope>) {
        let mut s = PromotionSession {
            id,
            feature,
            mode,
            peers,
            state: SessionState::Committing,
            rounds: 0,
            round_cap,
        };
        let out = s.discover();
        (s, out)
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn feature(&self) -> &FeatureId {
        &self.feature
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SessionState::Done | SessionState::Aborted)
    }

    fn me(&self) -> Endpoint {
        Endpoint::Agent(self.id.requester.clone())
    }

    fn send(&self, to: Endpoint, message: Message) -> Envelope {
        Envelope::new(self.me(), to, message)
    }

    fn stale(&self, event: &'static str) -> ProtocolError {
        ProtocolError::StaleState {
            session: self.id.clone(),
            event,
            state: self.state.to_string(),
        }
    }

    /// Enters LOOKUP (or straight to COMMITTING when there is nobody to ask).
    fn discover(&mut self) -> Vec<Envelope> {
        if self.peers.is_empty() {
            return self.commit();
        }
        match self.mode {
            ConsultMode::Lookup => {
                self.state = SessionState::Lookup {
                    pending: 1,
                    owners: Vec::new(),
                };
                vec![self.send(
                    Endpoint::Center,
                    Message::OwnerQuery {
                        feature: self.feature.clone(),
                        session: self.id.clone(),
                    },
                )]
            }
            ConsultMode::Broadcast => {
                self.state = SessionState::Lookup {
                    pending: self.peers.len(),
                    owners: Vec::new(),
                };
                self.peers
                    .iter()
                    .map(|p| {
                        self.send(
                            Endpoint::Agent(p.clone()),
                            Message::KRegionQuery {
                                feature: self.feature.clone(),
                                session: self.id.clone(),
                            },
                        )
                    })
                    .collect()
            }
        }
    }

    fn commit(&mut self) -> Vec<Envelope> {
        self.state = SessionState::Committing;
        vec![self.send(
            Endpoint::Center,
            Message::RegistryCommit {
                feature: self.feature.clone(),
                class: self.id.requester.clone(),
                session: self.id.clone(),
            },
        )]
    }

    fn fall_round(&mut self, owner: ClassId) -> Vec<Envelope> {
        self.rounds += 1;
        let msg = self.send(
            Endpoint::Agent(owner.clone()),
            Message::FallNotice {
                feature: self.feature.clone(),
                session: self.id.clone(),
            },
        );
        self.state = SessionState::Falling {
            owner,
            waiting: false,
        };
        vec![msg]
    }

    fn resolve_owner(&mut self, owner: Option<ClassId>) -> Vec<Envelope> {
        match owner {
            // Registering our own feature again is an idempotent commit.
            None => self.commit(),
            Some(o) if o == self.id.requester => self.commit(),
            Some(_) if self.rounds >= self.round_cap => {
                self.state = SessionState::Aborted;
                Vec::new()
            }
            Some(o) => self.fall_round(o),
        }
    }

    pub fn on_owner_reply(
        &mut self,
        owner: Option<ClassId>,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        match self.state {
            SessionState::Lookup { .. } if self.mode == ConsultMode::Lookup => {
                Ok(self.resolve_owner(owner))
            }
            _ => Err(self.stale("OwnerReply")),
        }
    }

    pub fn on_k_region_reply(
        &mut self,
        peer: ClassId,
        in_k: bool,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        if self.mode != ConsultMode::Broadcast {
            return Err(self.stale("KRegionReply"));
        }
        let SessionState::Lookup { pending, owners } = &mut self.state else {
            return Err(self.stale("KRegionReply"));
        };
        if *pending == 0 {
            return Err(self.stale("KRegionReply"));
        }
        *pending -= 1;
        if in_k {
            owners.push(peer);
        }
        if *pending > 0 {
            return Ok(Vec::new());
        }
        let owner = owners.iter().min().cloned();
        Ok(self.resolve_owner(owner))
    }

    pub fn on_fall_ack(&mut self, left_k: bool) -> Result<Vec<Envelope>, ProtocolError> {
        let SessionState::Falling {
            waiting: false,
            owner,
        } = &self.state
        else {
            return Err(self.stale("FallAck"));
        };
        if left_k {
            return Ok(self.discover());
        }
        if self.rounds >= self.round_cap {
            self.state = SessionState::Aborted;
            return Ok(Vec::new());
        }
        self.state = SessionState::Falling {
            owner: owner.clone(),
            waiting: true,
        };
        Ok(Vec::new())
    }

    /// The requester observed the feature again. Fires the next fall round if
    /// the session is idling between rounds; otherwise nothing happens.
    pub fn on_interest(&mut self) -> Vec<Envelope> {
        match &self.state {
            SessionState::Falling {
                owner,
                waiting: true,
            } => {
                let owner = owner.clone();
                self.fall_round(owner)
            }
            _ => Vec::new(),
        }
    }

    pub fn on_commit_ack(
        &mut self,
        outcome: CommitOutcome,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        if self.state != SessionState::Committing {
            return Err(self.stale("CommitAck"));
        }
        match outcome {
            CommitOutcome::Ok => {
                self.state = SessionState::Done;
                Ok(Vec::new())
            }
            CommitOutcome::Conflict => Ok(self.discover()),
        }
    }
}

/// One delivered message as written to the trace stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub variant: Variant,
    pub from: String,
    pub to: String,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
}

impl TraceRecord {
    pub fn new(step: u64, env: &Envelope) -> Self {
        TraceRecord {
            step,
            variant: env.message.variant(),
            from: env.from.to_string(),
            to: env.to.to_string(),
            key: env.message.key(),
            session: env.message.session().map(ToString::to_string),
        }
    }
}

/// Message counts grouped by variant, by query and by promotion session.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MessageTally {
    pub total: u64,
    pub by_variant: BTreeMap<Variant, u64>,
    pub by_query: BTreeMap<String, u64>,
    pub by_session: BTreeMap<String, u64>,
}

impl MessageTally {
    pub fn count(&self, v: Variant) -> u64 {
        self.by_variant.get(&v).copied().unwrap_or(0)
    }

    pub fn query_traffic(&self) -> u64 {
        self.count(Variant::Dispatch) + self.count(Variant::Result)
    }

    /// Everything that is not Dispatch/Result: discovery, fall rounds,
    /// commits and registry removals.
    pub fn consultation(&self) -> u64 {
        self.total - self.query_traffic()
    }
}

/// Recounts a trace from scratch.
pub fn message_count(trace: &[TraceRecord]) -> MessageTally {
    let mut tally = MessageTally::default();
    for r in trace {
        tally.total += 1;
        *tally.by_variant.entry(r.variant).or_insert(0) += 1;
        if r.variant.is_query_traffic() {
            *tally.by_query.entry(r.key.clone()).or_insert(0) += 1;
        }
        if let Some(s) = &r.session {
            *tally.by_session.entry(s.clone()).or_insert(0) += 1;
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid() -> SessionId {
        SessionId {
            requester: "c0".into(),
            seq: 0,
        }
    }

    fn peers(n: usize) -> Vec<ClassId> {
        (1..=n).map(|i| ClassId::new(format!("c{i}"))).collect()
    }

    fn variants(out: &[Envelope]) -> Vec<Variant> {
        out.iter().map(|e| e.message.variant()).collect()
    }

    #[test]
    fn lookup_mode_sends_one_query() {
        let (s, out) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(9), 20);
        assert_eq!(variants(&out), vec![Variant::OwnerQuery]);
        assert_eq!(out[0].to, Endpoint::Center);
        assert!(matches!(s.state(), SessionState::Lookup { .. }));
    }

    #[test]
    fn broadcast_mode_asks_every_peer() {
        let (_, out) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Broadcast, peers(9), 20);
        assert_eq!(out.len(), 9);
        assert!(out
            .iter()
            .all(|e| e.message.variant() == Variant::KRegionQuery));
    }

    #[test]
    fn no_peers_commits_immediately() {
        for mode in [ConsultMode::Lookup, ConsultMode::Broadcast] {
            let (s, out) = PromotionSession::start(sid(), "f".into(), mode, Vec::new(), 20);
            assert_eq!(variants(&out), vec![Variant::RegistryCommit]);
            assert_eq!(s.state(), &SessionState::Committing);
        }
    }

    #[test]
    fn uncontested_path() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 20);
        let out = s.on_owner_reply(None).unwrap();
        assert_eq!(variants(&out), vec![Variant::RegistryCommit]);
        assert!(s.on_commit_ack(CommitOutcome::Ok).unwrap().is_empty());
        assert_eq!(s.state(), &SessionState::Done);
    }

    #[test]
    fn contested_path_counts_rounds() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 20);
        let out = s.on_owner_reply(Some("c2".into())).unwrap();
        assert_eq!(variants(&out), vec![Variant::FallNotice]);
        assert_eq!(out[0].to, Endpoint::Agent("c2".into()));
        assert_eq!(s.rounds(), 1);

        // owner still in K: park until the next interest event
        assert!(s.on_fall_ack(false).unwrap().is_empty());
        let out = s.on_interest();
        assert_eq!(variants(&out), vec![Variant::FallNotice]);
        assert_eq!(s.rounds(), 2);

        // owner left K: look again
        let out = s.on_fall_ack(true).unwrap();
        assert_eq!(variants(&out), vec![Variant::OwnerQuery]);
    }

    #[test]
    fn interest_outside_waiting_is_ignored() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 20);
        assert!(s.on_interest().is_empty());
        s.on_owner_reply(Some("c1".into())).unwrap();
        assert!(s.on_interest().is_empty());
        assert_eq!(s.rounds(), 1);
    }

    #[test]
    fn round_cap_aborts() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 2);
        s.on_owner_reply(Some("c1".into())).unwrap();
        s.on_fall_ack(false).unwrap();
        s.on_interest();
        assert_eq!(s.rounds(), 2);
        assert!(s.on_fall_ack(false).unwrap().is_empty());
        assert_eq!(s.state(), &SessionState::Aborted);
        assert!(s.is_finished());
    }

    #[test]
    fn stale_replies_are_rejected() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 1);
        s.on_owner_reply(Some("c1".into())).unwrap();
        s.on_fall_ack(false).unwrap();
        assert_eq!(s.state(), &SessionState::Aborted);
        assert!(matches!(
            s.on_owner_reply(None),
            Err(ProtocolError::StaleState { .. })
        ));
        assert!(s.on_commit_ack(CommitOutcome::Ok).is_err());
        assert!(s.on_fall_ack(true).is_err());
    }

    #[test]
    fn commit_conflict_returns_to_lookup() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 20);
        s.on_owner_reply(None).unwrap();
        let out = s.on_commit_ack(CommitOutcome::Conflict).unwrap();
        assert_eq!(variants(&out), vec![Variant::OwnerQuery]);
        assert!(matches!(s.state(), SessionState::Lookup { .. }));
    }

    #[test]
    fn broadcast_replies_pick_lowest_owner() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Broadcast, peers(3), 20);
        assert!(s.on_k_region_reply("c3".into(), true).unwrap().is_empty());
        assert!(s.on_k_region_reply("c1".into(), false).unwrap().is_empty());
        let out = s.on_k_region_reply("c2".into(), true).unwrap();
        assert_eq!(out[0].to, Endpoint::Agent("c2".into()));
        assert!(s.on_k_region_reply("c1".into(), false).is_err());
    }

    #[test]
    fn own_class_as_owner_is_an_idempotent_commit() {
        let (mut s, _) =
            PromotionSession::start(sid(), "f".into(), ConsultMode::Lookup, peers(2), 20);
        let out = s.on_owner_reply(Some("c0".into())).unwrap();
        assert_eq!(variants(&out), vec![Variant::RegistryCommit]);
    }

    #[test]
    fn tally_counts_query_and_session_traffic() {
        let mk = |variant, key: &str, session: Option<&str>| TraceRecord {
            step: 0,
            variant,
            from: "a".into(),
            to: "b".into(),
            key: key.into(),
            session: session.map(String::from),
        };
        let trace = vec![
            mk(Variant::Dispatch, "q0", None),
            mk(Variant::Result, "q0", None),
            mk(Variant::OwnerQuery, "f", Some("c0#0")),
            mk(Variant::OwnerReply, "f", Some("c0#0")),
            mk(Variant::RegistryCommit, "f", Some("c0#0")),
            mk(Variant::CommitAck, "f", Some("c0#0")),
        ];
        let t = message_count(&trace);
        assert_eq!(t.total, 6);
        assert_eq!(t.by_query["q0"], 2);
        assert_eq!(t.by_session["c0#0"], 4);
        assert_eq!(t.consultation(), 4);
    }
}
