//! Time-interval memory: a count-based sliding window over the tag sets of the
//! most recent queries an agent was dispatched.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::feature::FeatureId;
use crate::tags::TagCollection;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeIntervalMemory {
    window: usize,
    slots: VecDeque<TagCollection>,
    // Only strictly positive counts are kept.
    counts: BTreeMap<FeatureId, u32>,
}

impl TimeIntervalMemory {
    /// # Panics
    /// If `window` is zero.
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "time-interval memory window must be positive");
        TimeIntervalMemory {
            window,
            slots: VecDeque::with_capacity(window),
            counts: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Retained slots, oldest first.
    pub fn slots(&self) -> impl Iterator<Item = &TagCollection> + '_ {
        self.slots.iter()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn count(&self, f: &FeatureId) -> u32 {
        self.counts.get(f).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> impl Iterator<Item = (&FeatureId, u32)> + '_ {
        self.counts.iter().map(|(f, &c)| (f, c))
    }

    pub fn record(&mut self, tags: &TagCollection) {
        for f in tags {
            *self.counts.entry(f.clone()).or_insert(0) += 1;
        }
        self.slots.push_back(tags.clone());
        while self.slots.len() > self.window {
            let old = self.slots.pop_front().expect("non-empty window");
            for f in &old {
                if let Some(c) = self.counts.get_mut(f) {
                    *c -= 1;
                    if *c == 0 {
                        self.counts.remove(f);
                    }
                }
            }
        }
    }

    /// Tags seen in at least `theta` retained slots that are not in `known`.
    pub fn frequent_unknown_tags(
        &self,
        known: impl Fn(&FeatureId) -> bool,
        theta: u32,
    ) -> BTreeSet<FeatureId> {
        self.counts
            .iter()
            .filter(|&(f, &c)| c >= theta && !known(f))
            .map(|(f, _)| f.clone())
            .collect()
    }

    pub fn seen_within_window(&self, f: &FeatureId) -> bool {
        self.count(f) >= 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(items: &[&str]) -> TagCollection {
        items.iter().copied().collect()
    }

    fn brute_force_counts(tim: &TimeIntervalMemory) -> BTreeMap<FeatureId, u32> {
        let mut out = BTreeMap::new();
        for slot in tim.slots() {
            for f in slot {
                *out.entry(f.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    #[test]
    fn record_counts_presence() {
        let mut tim = TimeIntervalMemory::new(2);
        tim.record(&tags(&["a"]));
        tim.record(&tags(&["a", "b"]));
        assert_eq!(tim.count(&"a".into()), 2);
        assert_eq!(tim.count(&"b".into()), 1);
    }

    #[test]
    fn oldest_slot_is_evicted() {
        let mut tim = TimeIntervalMemory::new(2);
        tim.record(&tags(&["a"]));
        tim.record(&tags(&["b"]));
        tim.record(&tags(&["c"]));
        let slots: Vec<_> = tim.slots().cloned().collect();
        assert_eq!(slots, vec![tags(&["b"]), tags(&["c"])]);
        assert_eq!(tim.count(&"a".into()), 0);
        assert!(!tim.seen_within_window(&"a".into()));
        assert_eq!(tim.count(&"b".into()), 1);
        assert_eq!(tim.count(&"c".into()), 1);
    }

    #[test]
    fn empty_query_occupies_a_slot() {
        let mut tim = TimeIntervalMemory::new(1);
        tim.record(&TagCollection::new());
        assert_eq!(tim.len(), 1);
        assert_eq!(tim.counts().count(), 0);
    }

    #[test]
    fn frequent_unknown_examples() {
        let mut tim = TimeIntervalMemory::new(10);
        for _ in 0..3 {
            tim.record(&tags(&["x"]));
        }
        tim.record(&tags(&["y"]));
        let none = |_: &FeatureId| false;
        assert_eq!(tim.frequent_unknown_tags(none, 3), ["x".into()].into());

        let mut tim = TimeIntervalMemory::new(10);
        for _ in 0..5 {
            tim.record(&tags(&["x"]));
        }
        let x = FeatureId::new("x");
        assert!(tim.frequent_unknown_tags(|f| *f == x, 3).is_empty());
    }

    #[test]
    fn frequent_unknown_matches_recount() {
        let mut tim = TimeIntervalMemory::new(4);
        for slot in [&["x", "q"][..], &["q"], &["x"], &["r"]] {
            tim.record(&tags(slot));
        }
        let recount = brute_force_counts(&tim);
        let expected: BTreeSet<FeatureId> = recount
            .iter()
            .filter(|&(_, &c)| c >= 2)
            .map(|(f, _)| f.clone())
            .collect();
        assert!(expected.contains(&FeatureId::new("x")));
        assert_eq!(tim.frequent_unknown_tags(|_| false, 2), expected);
    }

    #[test]
    fn seen_within_window_for_unrecorded_tag() {
        let tim = TimeIntervalMemory::new(3);
        assert!(!tim.seen_within_window(&"never".into()));
    }

    proptest! {
        #[test]
        fn counts_match_brute_force(window in 1usize..8,
                                    queries in proptest::collection::vec(
                                        proptest::collection::vec(0u8..6, 0..5), 0..40)) {
            let mut tim = TimeIntervalMemory::new(window);
            let mut mirror: VecDeque<TagCollection> = VecDeque::new();
            for q in queries {
                let tc: TagCollection = q.iter().map(|i| FeatureId::new(format!("t{i}"))).collect();
                tim.record(&tc);
                mirror.push_back(tc);
                if mirror.len() > window {
                    mirror.pop_front();
                }
                prop_assert!(tim.len() <= window);
                let counted: BTreeMap<_, _> = tim.counts().map(|(f, c)| (f.clone(), c)).collect();
                prop_assert_eq!(counted, brute_force_counts(&tim));
                // strictly FIFO
                prop_assert!(tim.slots().eq(mirror.iter()));
            }
        }
    }
}
