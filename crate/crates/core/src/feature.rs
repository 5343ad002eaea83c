//! Per-agent feature/probability tables partitioned into K, M and D regions.
//!
//! Region membership is never stored. It is derived from a feature's
//! probability and the collection's two thresholds:
//!
//! - `K` when `p >= tau_k`
//! - `M` when `tau_m <= p < tau_k`
//! - `D` when `p < tau_m`
//!
//! Probabilities are held in fixed point (millionths) so that stepwise
//! raise/fall/decay arithmetic is exact and region crossings happen on the
//! step a closed form predicts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("feature `{0}` is already present")]
    Duplicate(FeatureId),
    #[error("feature `{0}` is in the D region and cannot be promoted to K directly")]
    IllegalPromotion(FeatureId),
    #[error("unknown feature `{0}`")]
    Unknown(FeatureId),
    #[error("invalid thresholds: need 0 < tau_m ({tau_m}) < tau_k ({tau_k}) <= 1")]
    InvalidThresholds { tau_k: Prob, tau_m: Prob },
    #[error("invalid probability `{0}`: expected a decimal in [0, 1]")]
    InvalidProbability(String),
    #[error("invalid token `{0}`: must be non-empty without whitespace or commas")]
    InvalidToken(String),
}

/// Returns true when `s` can be used as a feature or class token in the
/// line-oriented file formats.
pub fn is_valid_token(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c == ',' || c.is_control())
}

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(token: impl AsRef<str>) -> Self {
                Self(Arc::from(token.as_ref()))
            }

            /// Validating constructor used by the file parsers.
            pub fn parse(token: &str) -> Result<Self, FeatureError> {
                if is_valid_token(token) {
                    Ok(Self::new(token))
                } else {
                    Err(FeatureError::InvalidToken(token.to_string()))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

token_type!(
    /// An atomic feature (tag) token. Identity is exact token equality.
    FeatureId
);
token_type!(
    /// Identifier of a main class and of the expert agent that owns it.
    ClassId
);

/// A probability in `[0, 1]`, stored in millionths.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Prob(u32);

impl Prob {
    pub const SCALE: u32 = 1_000_000;
    pub const ZERO: Prob = Prob(0);
    pub const ONE: Prob = Prob(Self::SCALE);

    pub const fn from_micros(micros: u32) -> Option<Prob> {
        if micros <= Self::SCALE {
            Some(Prob(micros))
        } else {
            None
        }
    }

    /// Rounds to the nearest millionth. `None` for NaN or values outside `[0, 1]`.
    pub fn from_f64(v: f64) -> Option<Prob> {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return None;
        }
        Some(Prob((v * f64::from(Self::SCALE)).round() as u32))
    }

    pub const fn micros(self) -> u32 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / f64::from(Self::SCALE)
    }

    /// `clamp(self + delta, 0, 1)`.
    pub fn shifted(self, delta: ProbDelta) -> Prob {
        let v = i64::from(self.0) + delta.0;
        Prob(v.clamp(0, i64::from(Self::SCALE)) as u32)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::SCALE, self.0 % Self::SCALE)
    }
}

impl fmt::Debug for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Prob {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FeatureError::InvalidProbability(s.to_string());
        // Only plain decimals; `f64::from_str` alone would also take "inf" or "1e-3".
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
            return Err(bad());
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        Prob::from_f64(v).ok_or_else(bad)
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Prob::from_f64(v)
            .ok_or_else(|| serde::de::Error::custom(format!("probability {v} outside [0, 1]")))
    }
}

/// A signed probability step, in millionths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbDelta(i64);

impl ProbDelta {
    pub fn up(step: Prob) -> Self {
        ProbDelta(i64::from(step.micros()))
    }

    pub fn down(step: Prob) -> Self {
        ProbDelta(-i64::from(step.micros()))
    }

    pub fn from_f64(v: f64) -> Self {
        ProbDelta((v * f64::from(Prob::SCALE)).round() as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    D,
    M,
    K,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::K => "K",
            Region::M => "M",
            Region::D => "D",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Thresholds {
    tau_k: Prob,
    tau_m: Prob,
}

impl Thresholds {
    pub fn new(tau_k: Prob, tau_m: Prob) -> Result<Self, FeatureError> {
        if tau_m > Prob::ZERO && tau_m < tau_k {
            Ok(Thresholds { tau_k, tau_m })
        } else {
            Err(FeatureError::InvalidThresholds { tau_k, tau_m })
        }
    }

    pub fn tau_k(&self) -> Prob {
        self.tau_k
    }

    pub fn tau_m(&self) -> Prob {
        self.tau_m
    }

    pub fn region(&self, p: Prob) -> Region {
        if p >= self.tau_k {
            Region::K
        } else if p >= self.tau_m {
            Region::M
        } else {
            Region::D
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_k: Prob(700_000),
            tau_m: Prob(300_000),
        }
    }
}

/// Region before and after a probability update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub before: Region,
    pub after: Region,
    pub probability: Prob,
}

impl Transition {
    pub fn left_k(&self) -> bool {
        self.before == Region::K && self.after != Region::K
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureCollection {
    entries: BTreeMap<FeatureId, Prob>,
    thresholds: Thresholds,
    /// Upper bound on retained D-region entries; `None` keeps them all.
    d_capacity: Option<usize>,
}

impl FeatureCollection {
    pub fn new(thresholds: Thresholds) -> Self {
        FeatureCollection {
            entries: BTreeMap::new(),
            thresholds,
            d_capacity: None,
        }
    }

    pub fn with_d_capacity(mut self, cap: Option<usize>) -> Self {
        self.d_capacity = cap;
        self
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn d_capacity(&self) -> Option<usize> {
        self.d_capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, f: &FeatureId) -> bool {
        self.entries.contains_key(f)
    }

    pub fn probability(&self, f: &FeatureId) -> Option<Prob> {
        self.entries.get(f).copied()
    }

    pub fn region_of(&self, f: &FeatureId) -> Option<Region> {
        self.entries.get(f).map(|&p| self.thresholds.region(p))
    }

    /// Entries in feature order.
    pub fn iter(&self) -> impl Iterator<Item = (&FeatureId, Prob)> + '_ {
        self.entries.iter().map(|(f, &p)| (f, p))
    }

    pub fn keys(&self) -> impl Iterator<Item = &FeatureId> + '_ {
        self.entries.keys()
    }

    pub fn in_region(&self, region: Region) -> impl Iterator<Item = (&FeatureId, Prob)> + '_ {
        self.iter()
            .filter(move |&(_, p)| self.thresholds.region(p) == region)
    }

    /// `(K, M, D)` sizes.
    pub fn region_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for (_, p) in self.iter() {
            match self.thresholds.region(p) {
                Region::K => counts.0 += 1,
                Region::M => counts.1 += 1,
                Region::D => counts.2 += 1,
            }
        }
        counts
    }

    pub fn insert_at_m_floor(&mut self, f: FeatureId) -> Result<(), FeatureError> {
        if self.entries.contains_key(&f) {
            return Err(FeatureError::Duplicate(f));
        }
        self.entries.insert(f, self.thresholds.tau_m);
        Ok(())
    }

    /// Places `f` at exactly `tau_k`. Allowed for absent features and for
    /// features currently in M; D-region features must climb first.
    pub fn insert_at_k_floor(&mut self, f: FeatureId) -> Result<(), FeatureError> {
        match self.region_of(&f) {
            Some(Region::D) => Err(FeatureError::IllegalPromotion(f)),
            _ => {
                self.entries.insert(f, self.thresholds.tau_k);
                Ok(())
            }
        }
    }

    /// `p(f) <- clamp(p(f) + delta, 0, 1)`. Entries are never removed here.
    pub fn adjust(&mut self, f: &FeatureId, delta: ProbDelta) -> Result<Transition, FeatureError> {
        let th = self.thresholds;
        let p = self
            .entries
            .get_mut(f)
            .ok_or_else(|| FeatureError::Unknown(f.clone()))?;
        let before = th.region(*p);
        *p = p.shifted(delta);
        Ok(Transition {
            before,
            after: th.region(*p),
            probability: *p,
        })
    }

    /// Raw insert used when restoring snapshots and building fixtures.
    pub fn set(&mut self, f: FeatureId, p: Prob) {
        self.entries.insert(f, p);
    }

    /// Drops the lowest-probability D entries (ties by feature order) until the
    /// D region fits within the configured capacity. Returns the evicted features.
    pub fn evict_dormant(&mut self) -> Vec<FeatureId> {
        let Some(cap) = self.d_capacity else {
            return Vec::new();
        };
        let mut dormant: Vec<(Prob, FeatureId)> = self
            .in_region(Region::D)
            .map(|(f, p)| (p, f.clone()))
            .collect();
        if dormant.len() <= cap {
            return Vec::new();
        }
        dormant.sort();
        let excess = dormant.len() - cap;
        dormant
            .into_iter()
            .take(excess)
            .map(|(_, f)| {
                self.entries.remove(&f);
                f
            })
            .collect()
    }
}
