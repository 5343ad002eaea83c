//! Query objects reduced to tag collections, and the text preprocessor.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::feature::FeatureId;

/// The distinct tags extracted from one query object.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct TagCollection(BTreeSet<FeatureId>);

impl TagCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, f: &FeatureId) -> bool {
        self.0.contains(f)
    }

    pub fn insert(&mut self, f: FeatureId) -> bool {
        self.0.insert(f)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureId> + '_ {
        self.0.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<FeatureId> {
        &self.0
    }
}

impl FromIterator<FeatureId> for TagCollection {
    fn from_iter<I: IntoIterator<Item = FeatureId>>(iter: I) -> Self {
        TagCollection(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for TagCollection {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        iter.into_iter().map(FeatureId::new).collect()
    }
}

impl<'a> IntoIterator for &'a TagCollection {
    type Item = &'a FeatureId;
    type IntoIter = std::collections::btree_set::Iter<'a, FeatureId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no tags could be extracted from the object")]
pub struct EmptyObject;

/// A raw object as it reaches the preprocessor.
#[derive(Debug, Clone, Copy)]
pub enum RawObject<'a> {
    /// Already-extracted tags (corpus records). Passed through unchanged.
    Tags(&'a [FeatureId]),
    /// Free text: lowercased and split on runs of non-alphanumeric characters.
    Text(&'a str),
}

pub fn preprocess(raw: RawObject<'_>) -> Result<TagCollection, EmptyObject> {
    let tags: TagCollection = match raw {
        RawObject::Tags(tags) => tags.iter().cloned().collect(),
        RawObject::Text(text) => tokenize(text),
    };
    if tags.is_empty() {
        Err(EmptyObject)
    } else {
        Ok(tags)
    }
}

pub fn tokenize(text: &str) -> TagCollection {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| FeatureId::new(w.to_lowercase()))
        .collect()
}
