//! Versioned text snapshots of a quiescent [`System`].
//!
//! ```text
//! expert-mas-snapshot 1
//! step 412
//! next-query 60
//! scheduler <seed hex> <word position>
//! params tau_k=0.700000 tau_m=0.300000 ... seed=7
//! registry 2
//! c0.b0	c0
//! c1.b0	c1
//! agent c0
//! dispatches 31
//! next-session 2
//! entries 3
//! c0.b0	0.700000
//! ...
//! tim 50 1
//! c0.b0,n003
//! subconcepts 0
//! end
//! ```
//!
//! Sections appear in this order; every list is preceded by its length.

#![allow(clippy::tabs_in_doc_comments)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::agent::{ExpertAgent, LearningParams, ProtocolParams};
use crate::center::{AggregationParams, BaseFeatureRegistry};
use crate::error::{Error, Result};
use crate::feature::{ClassId, FeatureCollection, FeatureId, Prob, Thresholds};
use crate::memory::TimeIntervalMemory;
use crate::sim::{SchedulerState, System, SystemConfig};
use crate::tags::TagCollection;

pub const MAGIC: &str = "expert-mas-snapshot";
pub const VERSION: u32 = 1;

fn join<'a>(tags: impl IntoIterator<Item = &'a FeatureId>) -> String {
    tags.into_iter()
        .map(FeatureId::as_str)
        .collect::<Vec<_>>()
        .join(",")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn params_line(c: &SystemConfig) -> String {
    let d_capacity = c.d_capacity.map_or("none".to_string(), |d| d.to_string());
    format!(
        "params tau_k={} tau_m={} alpha_r={} alpha_d={} alpha_f={} theta={} window={} epoch={} \
         promotions={} consult={} round_cap={} dispatch={} mixing={} eps_fb={:?} d_capacity={} seed={}",
        c.thresholds.tau_k(),
        c.thresholds.tau_m(),
        c.learning.alpha_r,
        c.learning.alpha_d,
        c.learning.alpha_f,
        c.learning.theta,
        c.learning.window,
        c.learning.epoch,
        c.learning.promotions,
        c.protocol.mode,
        c.protocol.round_cap,
        c.policy,
        c.aggregation.mixing,
        c.aggregation.eps_fb,
        d_capacity,
        c.seed,
    )
}

/// Serializes a quiescent system. Refuses while messages are in flight,
/// sessions are open or queries are unanswered.
pub fn write(system: &System) -> Result<String> {
    system.require_quiescent()?;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "step {}", system.steps());
    let _ = writeln!(out, "next-query {}", system.next_query_id());
    let sched = system.scheduler_state();
    let _ = writeln!(out, "scheduler {} {}", hex(&sched.seed), sched.word_pos);
    let _ = writeln!(out, "{}", params_line(system.config()));
    let registry = system.registry();
    let _ = writeln!(out, "registry {}", registry.len());
    for (f, c) in registry.iter() {
        let _ = writeln!(out, "{f}\t{c}");
    }
    for a in system.agents() {
        let _ = writeln!(out, "agent {}", a.class_id());
        let _ = writeln!(out, "dispatches {}", a.dispatches());
        let _ = writeln!(out, "next-session {}", a.next_session_seq());
        let _ = writeln!(out, "entries {}", a.collection().len());
        for (f, p) in a.collection().iter() {
            let _ = writeln!(out, "{f}\t{p}");
        }
        let tim = a.memory();
        let _ = writeln!(out, "tim {} {}", tim.window(), tim.len());
        for slot in tim.slots() {
            let _ = writeln!(out, "{}", join(slot.iter()));
        }
        let _ = writeln!(out, "subconcepts {}", a.subconcepts().len());
        for s in a.subconcepts() {
            let _ = writeln!(out, "{}\t{}", s.name, join(&s.members));
        }
    }
    out.push_str("end\n");
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse("snapshot", self.line, msg)
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of snapshot"))
            }
        }
    }

    /// Reads `keyword rest` and returns `rest`.
    fn keyed(&mut self, keyword: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == keyword => Ok(rest),
            _ => Err(self.err(format!("expected `{keyword}`, found `{l}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn keyed_number<T: std::str::FromStr>(&mut self, keyword: &str) -> Result<T> {
        let rest = self.keyed(keyword)?;
        self.number(rest)
    }

    fn feature(&self, s: &str) -> Result<FeatureId> {
        FeatureId::parse(s).map_err(|e| self.err(e.to_string()))
    }

    fn class(&self, s: &str) -> Result<ClassId> {
        ClassId::parse(s).map_err(|e| self.err(e.to_string()))
    }

    fn pair(&mut self) -> Result<(&'a str, &'a str)> {
        let l = self.next()?;
        l.split_once('\t')
            .ok_or_else(|| self.err(format!("expected two tab-separated fields, found `{l}`")))
    }

    fn tag_list(&self, s: &str) -> Result<Vec<FeatureId>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|t| self.feature(t)).collect()
    }
}

fn parse_params(lines: &Lines<'_>, rest: &str) -> Result<SystemConfig> {
    let mut kv = BTreeMap::new();
    for word in rest.split_whitespace() {
        let (k, v) = word
            .split_once('=')
            .ok_or_else(|| lines.err(format!("bad parameter `{word}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| lines.err(format!("missing parameter `{k}`")))
    };
    let prob = |k: &str| -> Result<Prob> {
        let v = get(k)?;
        v.parse()
            .map_err(|_| lines.err(format!("bad probability {k}={v}")))
    };
    let num = |k: &str| -> Result<u64> { lines.number(get(k)?) };
    let other = |k: &str, e: String| lines.err(format!("{k}: {e}"));
    let thresholds = Thresholds::new(prob("tau_k")?, prob("tau_m")?)
        .map_err(|e| other("thresholds", e.to_string()))?;
    let promotions = match get("promotions")? {
        "true" => true,
        "false" => false,
        v => return Err(other("promotions", format!("bad flag `{v}`"))),
    };
    let d_capacity = match get("d_capacity")? {
        "none" => None,
        v => Some(lines.number(v)?),
    };
    Ok(SystemConfig {
        thresholds,
        learning: LearningParams {
            alpha_r: prob("alpha_r")?,
            alpha_d: prob("alpha_d")?,
            alpha_f: prob("alpha_f")?,
            theta: num("theta")? as u32,
            window: num("window")? as usize,
            epoch: num("epoch")? as usize,
            promotions,
        },
        protocol: ProtocolParams {
            mode: get("consult")?.parse().map_err(|e| other("consult", e))?,
            round_cap: num("round_cap")? as u32,
        },
        policy: get("dispatch")?
            .parse()
            .map_err(|e: crate::center::CenterError| other("dispatch", e.to_string()))?,
        aggregation: AggregationParams {
            mixing: get("mixing")?.parse().map_err(|e| other("mixing", e))?,
            eps_fb: lines.number(get("eps_fb")?)?,
        },
        d_capacity,
        seed: num("seed")?,
    })
}

fn parse_seed(lines: &Lines<'_>, s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return Err(lines.err("scheduler seed must be 64 hex digits"));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|_| lines.err("scheduler seed must be 64 hex digits"))?;
    }
    Ok(seed)
}

/// Rebuilds a system from [`write`] output.
pub fn read(text: &str) -> Result<System> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines
        .next()
        .map_err(|_| Error::Version("empty snapshot".into()))?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v == VERSION.to_string() => {}
        _ => {
            return Err(Error::Version(format!(
                "expected `{MAGIC} {VERSION}`, found `{header}`"
            )))
        }
    }
    let step: u64 = lines.keyed_number("step")?;
    let next_query: u64 = lines.keyed_number("next-query")?;
    let sched = lines.keyed("scheduler")?;
    let (seed_hex, word_pos) = sched
        .split_once(' ')
        .ok_or_else(|| lines.err("scheduler needs a seed and a word position"))?;
    let scheduler = SchedulerState {
        seed: parse_seed(&lines, seed_hex)?,
        word_pos: lines.number(word_pos)?,
    };
    let params = lines.keyed("params")?;
    let config = parse_params(&lines, params)?;

    let mut registry = BaseFeatureRegistry::new();
    let n: usize = lines.keyed_number("registry")?;
    for _ in 0..n {
        let (f, c) = lines.pair()?;
        let (f, c) = (lines.feature(f)?, lines.class(c)?);
        if registry.owner(&f).is_some() {
            return Err(lines.err(format!("feature {f} registered twice")));
        }
        registry.commit(f, c);
    }

    let mut agents = BTreeMap::new();
    loop {
        let l = lines.next()?;
        if l == "end" {
            break;
        }
        let class = match l.split_once(' ') {
            Some(("agent", c)) => lines.class(c)?,
            _ => return Err(lines.err(format!("expected `agent` or `end`, found `{l}`"))),
        };
        let dispatches: u64 = lines.keyed_number("dispatches")?;
        let next_session: u64 = lines.keyed_number("next-session")?;
        let mut collection =
            FeatureCollection::new(config.thresholds).with_d_capacity(config.d_capacity);
        let n: usize = lines.keyed_number("entries")?;
        for _ in 0..n {
            let (f, p) = lines.pair()?;
            let f = lines.feature(f)?;
            let p: Prob = p
                .parse()
                .map_err(|_| lines.err(format!("bad probability `{p}`")))?;
            if collection.contains(&f) {
                return Err(lines.err(format!("duplicate entry {f}")));
            }
            collection.set(f, p);
        }
        let tim_header = lines.keyed("tim")?;
        let (w, len) = tim_header
            .split_once(' ')
            .ok_or_else(|| lines.err("tim needs a window and a slot count"))?;
        let (w, len): (usize, usize) = (lines.number(w)?, lines.number(len)?);
        if w == 0 || len > w {
            return Err(lines.err(format!("bad time-interval memory shape {w} {len}")));
        }
        let mut tim = TimeIntervalMemory::new(w);
        for _ in 0..len {
            let l = lines.next()?;
            let slot: TagCollection = lines.tag_list(l)?.into_iter().collect();
            tim.record(&slot);
        }
        let mut agent = ExpertAgent::from_parts(
            class.clone(),
            collection,
            tim,
            config.learning,
            dispatches,
            next_session,
        );
        let n: usize = lines.keyed_number("subconcepts")?;
        for _ in 0..n {
            let (name, members) = lines.pair()?;
            let members = lines.tag_list(members)?;
            agent
                .add_subconcept(name, members)
                .map_err(|e| lines.err(e.to_string()))?;
        }
        if agents.insert(class.clone(), agent).is_some() {
            return Err(lines.err(format!("agent {class} listed twice")));
        }
    }
    if let Some((i, l)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(
            "snapshot",
            i + 1,
            format!("trailing content `{l}`"),
        ));
    }
    for (f, c) in registry.iter() {
        if !agents.contains_key(c) {
            return Err(Error::UnknownClass(format!("{c} (registry owner of {f})")));
        }
    }
    Ok(System::assemble(
        config,
        registry,
        agents,
        step,
        next_query,
        Some(scheduler),
    ))
}
