//! Synthetic corpora, their manifests, and the line-oriented corpus format.
//!
//! A corpus file holds one object per line:
//!
//! ```text
//! # expert-mas corpus seed=42
//! o00000	c03	c03.b01,c03.l02,n017
//! ```
//!
//! Fields are tab separated; blank lines and lines starting with `#` are
//! ignored except for the `seed=` key of the header. The manifest is a JSON
//! document listing every class's planted base and learnable sets.

#![allow(clippy::tabs_in_doc_comments)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{ClassId, FeatureId};
use crate::sim::ClassSeed;

const HEADER: &str = "# expert-mas corpus";

/// Probability that a drawn tag comes from each pool.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub base: f64,
    pub learnable: f64,
    pub noise: f64,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            base: 0.5,
            learnable: 0.3,
            noise: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_classes: usize,
    pub base_per_class: usize,
    pub learnable_per_class: usize,
    /// Learnable features each class shares with its pair partner
    /// (classes 0-1, 2-3, ...). Counted within `learnable_per_class`.
    pub shared_learnable: usize,
    pub noise_pool: usize,
    pub tags_per_object: usize,
    pub mix: Mix,
    pub length: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            num_classes: 10,
            base_per_class: 5,
            learnable_per_class: 5,
            shared_learnable: 0,
            noise_pool: 50,
            tags_per_object: 4,
            mix: Mix::default(),
            length: 1000,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::CorpusSpec(m));
        if self.num_classes == 0 {
            return err("num_classes must be positive".into());
        }
        if self.base_per_class == 0 {
            return err("base_per_class must be positive".into());
        }
        if self.tags_per_object == 0 {
            return err("tags_per_object must be positive".into());
        }
        let Mix {
            base,
            learnable,
            noise,
        } = self.mix;
        for (name, w) in [("base", base), ("learnable", learnable), ("noise", noise)] {
            if !(0.0..=1.0).contains(&w) {
                return err(format!("mix.{name} = {w} outside [0, 1]"));
            }
        }
        if ((base + learnable + noise) - 1.0).abs() > 1e-9 {
            return err(format!("mix sums to {}, not 1", base + learnable + noise));
        }
        if learnable > 0.0 && self.learnable_per_class == 0 {
            return err("learnable draws need learnable_per_class > 0".into());
        }
        if noise > 0.0 && self.noise_pool == 0 {
            return err("noise draws need noise_pool > 0".into());
        }
        if self.shared_learnable > self.learnable_per_class {
            return err("shared_learnable exceeds learnable_per_class".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSubconcept {
    pub name: String,
    pub members: Vec<FeatureId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestClass {
    pub class: ClassId,
    pub base: Vec<FeatureId>,
    #[serde(default)]
    pub learnable: Vec<FeatureId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subconcepts: Vec<ManifestSubconcept>,
}

/// Planted sets of a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub seed: Option<u64>,
    pub classes: Vec<ManifestClass>,
    #[serde(default)]
    pub noise: Vec<FeatureId>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        let mut seen = BTreeSet::new();
        for c in &m.classes {
            if !seen.insert(c.class.clone()) {
                return Err(Error::Mismatch(format!("class {} listed twice", c.class)));
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.classes.iter().map(|c| c.class.clone()).collect()
    }

    pub fn class_seeds(&self) -> Vec<ClassSeed> {
        self.classes
            .iter()
            .map(|c| ClassSeed {
                class: c.class.clone(),
                base: c.base.iter().cloned().collect(),
                subconcepts: c
                    .subconcepts
                    .iter()
                    .map(|s| (s.name.clone(), s.members.iter().cloned().collect()))
                    .collect(),
            })
            .collect()
    }

    /// Which classes planted each learnable feature.
    pub fn learnable_owners(&self) -> BTreeMap<FeatureId, BTreeSet<ClassId>> {
        let mut out: BTreeMap<FeatureId, BTreeSet<ClassId>> = BTreeMap::new();
        for c in &self.classes {
            for f in &c.learnable {
                out.entry(f.clone()).or_default().insert(c.class.clone());
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub class: ClassId,
    pub tags: Vec<FeatureId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub seed: Option<u64>,
    pub records: Vec<CorpusRecord>,
}

fn width(n: usize, min: usize) -> usize {
    let digits = n.saturating_sub(1).max(1).ilog10() as usize + 1;
    digits.max(min)
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        if let Some(seed) = self.seed {
            let _ = write!(out, " seed={seed}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{}\t{}\t", r.id, r.class);
            for (i, t) in r.tags.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(t.as_str());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut corpus = Corpus::default();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                for word in comment.split_whitespace() {
                    if let Some(v) = word.strip_prefix("seed=") {
                        let seed = v
                            .parse()
                            .map_err(|_| Error::parse("corpus", n, format!("bad seed `{v}`")))?;
                        corpus.seed = Some(seed);
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, class, tags] = fields[..] else {
                return Err(Error::parse(
                    "corpus",
                    n,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            };
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(Error::parse("corpus", n, format!("bad object id `{id}`")));
            }
            if !ids.insert(id.to_string()) {
                return Err(Error::parse(
                    "corpus",
                    n,
                    format!("duplicate object id `{id}`"),
                ));
            }
            let class =
                ClassId::parse(class).map_err(|e| Error::parse("corpus", n, e.to_string()))?;
            let mut parsed = Vec::new();
            if !tags.is_empty() {
                for t in tags.split(',') {
                    parsed.push(
                        FeatureId::parse(t)
                            .map_err(|e| Error::parse("corpus", n, e.to_string()))?,
                    );
                }
            }
            corpus.records.push(CorpusRecord {
                id: id.to_string(),
                class,
                tags: parsed,
            });
        }
        Ok(corpus)
    }
}

/// Generates a corpus and its manifest.
///
/// Draw order per object: the true class (uniform), then for each tag one
/// `f64` choosing the pool and one index into that pool.
pub fn generate(spec: &CorpusSpec) -> Result<(Corpus, Manifest)> {
    spec.validate()?;
    let m = spec.num_classes;
    let cw = width(m, 2);
    let class_name = |i: usize| format!("c{i:0cw$}");
    let pair_name = |p: usize| format!("p{p:0cw$}");
    let bw = width(spec.base_per_class, 2);
    let lw = width(spec.learnable_per_class, 2);
    let nw = width(spec.noise_pool, 3);

    let mut classes = Vec::with_capacity(m);
    for i in 0..m {
        let cls = class_name(i);
        let base = (0..spec.base_per_class)
            .map(|j| FeatureId::new(format!("{cls}.b{j:0bw$}")))
            .collect();
        let paired = (i ^ 1) < m;
        let learnable = (0..spec.learnable_per_class)
            .map(|j| {
                if paired && j < spec.shared_learnable {
                    FeatureId::new(format!("{}.l{j:0lw$}", pair_name(i / 2)))
                } else {
                    FeatureId::new(format!("{cls}.l{j:0lw$}"))
                }
            })
            .collect();
        classes.push(ManifestClass {
            class: ClassId::new(&cls),
            base,
            learnable,
            subconcepts: Vec::new(),
        });
    }
    let noise: Vec<FeatureId> = (0..spec.noise_pool)
        .map(|k| FeatureId::new(format!("n{k:0nw$}")))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let iw = width(spec.length, 5);
    let mut records = Vec::with_capacity(spec.length);
    for q in 0..spec.length {
        let c = &classes[rng.random_range(0..m)];
        let mut tags = Vec::with_capacity(spec.tags_per_object);
        for _ in 0..spec.tags_per_object {
            let u: f64 = rng.random();
            let pool = if u < spec.mix.base {
                &c.base
            } else if u < spec.mix.base + spec.mix.learnable && !c.learnable.is_empty() {
                &c.learnable
            } else if !noise.is_empty() {
                &noise
            } else {
                &c.base
            };
            tags.push(pool[rng.random_range(0..pool.len())].clone());
        }
        records.push(CorpusRecord {
            id: format!("o{q:0iw$}"),
            class: c.class.clone(),
            tags,
        });
    }
    let manifest = Manifest {
        seed: Some(spec.seed),
        classes,
        noise,
    };
    Ok((
        Corpus {
            seed: Some(spec.seed),
            records,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusSpec {
        CorpusSpec {
            num_classes: 4,
            base_per_class: 3,
            learnable_per_class: 2,
            noise_pool: 5,
            tags_per_object: 3,
            length: 50,
            seed: 9,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, ma) = generate(&small()).unwrap();
        let (b, mb) = generate(&small()).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(ma.to_json(), mb.to_json());
        let (c, _) = generate(&CorpusSpec {
            seed: 10,
            ..small()
        })
        .unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn pure_base_mix_uses_only_planted_base() {
        let spec = CorpusSpec {
            mix: Mix {
                base: 1.0,
                learnable: 0.0,
                noise: 0.0,
            },
            ..small()
        };
        let (corpus, manifest) = generate(&spec).unwrap();
        let base: BTreeMap<_, BTreeSet<_>> = manifest
            .classes
            .iter()
            .map(|c| (c.class.clone(), c.base.iter().cloned().collect()))
            .collect();
        for r in &corpus.records {
            assert!(r.tags.iter().all(|t| base[&r.class].contains(t)));
        }
    }

    #[test]
    fn manifest_counts_planted_base() {
        let spec = CorpusSpec {
            num_classes: 2,
            base_per_class: 3,
            length: 10,
            ..small()
        };
        let (corpus, manifest) = generate(&spec).unwrap();
        assert_eq!(corpus.len(), 10);
        let total: usize = manifest.classes.iter().map(|c| c.base.len()).sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn shared_learnable_pairs_classes() {
        let spec = CorpusSpec {
            num_classes: 3,
            shared_learnable: 1,
            ..small()
        };
        let (_, manifest) = generate(&spec).unwrap();
        let owners = manifest.learnable_owners();
        let shared: Vec<_> = owners.iter().filter(|(_, o)| o.len() == 2).collect();
        assert_eq!(shared.len(), 1);
        assert_eq!(shared[0].0.as_str(), "p00.l00");
        // the unpaired last class keeps its own tokens
        assert_eq!(manifest.classes[2].learnable[0].as_str(), "c02.l00");
    }

    #[test]
    fn text_and_json_round_trip() {
        let (corpus, manifest) = generate(&small()).unwrap();
        let back = Corpus::parse(&corpus.to_text()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(Manifest::parse(&manifest.to_json()).unwrap(), manifest);
        let empty = Corpus::parse(&Corpus::default().to_text()).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("o1\tc0\n", 1),
            ("# h\no1\tc0\ta\no1\tc0\tb\n", 3),
            ("o1\tc0\ta,,b\n", 1),
            ("o1\tc 0\ta\n", 1),
            ("#seed=x\n", 1),
        ];
        for (text, line) in cases {
            match Corpus::parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        // an object with no tags parses; preprocess rejects it later
        assert!(Corpus::parse("o1\tc0\t\n").unwrap().records[0]
            .tags
            .is_empty());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = |s: CorpusSpec| generate(&s).is_err();
        assert!(bad(CorpusSpec {
            num_classes: 0,
            ..small()
        }));
        assert!(bad(CorpusSpec {
            tags_per_object: 0,
            ..small()
        }));
        assert!(bad(CorpusSpec {
            mix: Mix {
                base: 0.5,
                learnable: 0.5,
                noise: 0.5
            },
            ..small()
        }));
        assert!(bad(CorpusSpec {
            noise_pool: 0,
            ..small()
        }));
        assert!(bad(CorpusSpec {
            shared_learnable: 3,
            ..small()
        }));
        // zero-weight pools may be empty
        assert!(!bad(CorpusSpec {
            noise_pool: 0,
            mix: Mix {
                base: 0.7,
                learnable: 0.3,
                noise: 0.0
            },
            ..small()
        }));
        assert!(!bad(CorpusSpec {
            length: 0,
            ..small()
        }));
    }

    #[test]
    fn duplicate_manifest_classes_are_rejected() {
        let text = r#"{"classes":[{"class":"a","base":["x"]},{"class":"a","base":["y"]}]}"#;
        assert!(Manifest::parse(text).is_err());
    }
}
