//! Randomized scheduler interleavings of contested promotions.

use std::collections::BTreeMap;

use proptest::prelude::*;

use expert_mas::center::{BaseFeatureRegistry, DispatchPolicy};
use expert_mas::feature::{ClassId, FeatureId};
use expert_mas::protocol::{CommitOutcome, ConsultMode, Variant};
use expert_mas::sim::{ClassSeed, System, SystemConfig};
use expert_mas::snapshot;
use expert_mas::tags::TagCollection;

const CLASSES: usize = 4;
const SHARED: [&str; 3] = ["s0", "s1", "s2"];

fn seeds() -> Vec<ClassSeed> {
    (0..CLASSES)
        .map(|i| ClassSeed {
            class: ClassId::new(format!("c{i}")),
            base: (0..2)
                .map(|j| FeatureId::new(format!("c{i}.b{j}")))
                .collect(),
            subconcepts: vec![],
        })
        .collect()
}

/// A query: one base tag of some class plus a subset of the shared tags.
fn query() -> impl Strategy<Value = TagCollection> {
    (0..CLASSES, 0..2usize, proptest::bits::u8::masked(0b111)).prop_map(|(c, b, mask)| {
        let mut t: TagCollection = [format!("c{c}.b{b}")].iter().map(String::as_str).collect();
        for (i, s) in SHARED.iter().enumerate() {
            if mask & (1 << i) != 0 {
                t.insert(FeatureId::new(*s));
            }
        }
        t
    })
}

#[derive(Debug, Clone)]
struct Setup {
    seed: u64,
    pipeline: usize,
    mode: ConsultMode,
    round_cap: u32,
    theta: u32,
    top_k: usize,
}

fn setup() -> impl Strategy<Value = Setup> {
    (
        any::<u64>(),
        1..6usize,
        prop_oneof![Just(ConsultMode::Lookup), Just(ConsultMode::Broadcast)],
        1..6u32,
        1..4u32,
        1..=CLASSES,
    )
        .prop_map(|(seed, pipeline, mode, round_cap, theta, top_k)| Setup {
            seed,
            pipeline,
            mode,
            round_cap,
            theta,
            top_k,
        })
}

fn system(s: &Setup) -> System {
    let mut cfg = SystemConfig {
        seed: s.seed,
        policy: DispatchPolicy::TopK(s.top_k),
        ..SystemConfig::default()
    };
    cfg.protocol.mode = s.mode;
    cfg.protocol.round_cap = s.round_cap;
    cfg.learning.theta = s.theta;
    cfg.learning.window = 10;
    cfg.learning.epoch = 10;
    System::new(&seeds(), cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn consistency_holds_at_every_idle_point(s in setup(), queries in prop::collection::vec(query(), 1..120)) {
        let mut sys = system(&s);
        let mut answered = 0;
        for batch in queries.chunks(s.pipeline) {
            for q in batch {
                sys.submit(q).unwrap();
            }
            // deliver one message at a time; the system is only inspected
            // once it drains
            while sys.step() {}
            prop_assert!(sys.is_idle());
            if let Err(v) = sys.check_consistency() {
                return Err(TestCaseError::fail(format!("{v}")));
            }
            answered += sys.take_completed().len();
        }
        prop_assert_eq!(answered, queries.len());
        sys.settle();
        prop_assert!(sys.is_quiescent());
        prop_assert!(sys.check_consistency().is_ok());
        let rounds = sys.variant_count(Variant::FallNotice);
        prop_assert_eq!(rounds, sys.variant_count(Variant::FallAck));
        prop_assert_eq!(sys.variant_count(Variant::RegistryCommit), sys.variant_count(Variant::CommitAck));
    }

    #[test]
    fn snapshots_restore_the_same_future(s in setup(), head in prop::collection::vec(query(), 1..40), tail in prop::collection::vec(query(), 1..40)) {
        let mut sys = system(&s);
        for q in &head {
            sys.submit(q).unwrap();
            sys.run_until_idle();
        }
        sys.take_completed();
        sys.settle();
        let text = snapshot::write(&sys).unwrap();
        let mut restored = snapshot::read(&text).unwrap();
        prop_assert_eq!(snapshot::write(&restored).unwrap(), text);
        sys.record_trace(true);
        restored.record_trace(true);
        for q in &tail {
            sys.submit(q).unwrap();
            sys.run_until_idle();
            restored.submit(q).unwrap();
            restored.run_until_idle();
        }
        prop_assert_eq!(sys.take_trace(), restored.take_trace());
        prop_assert_eq!(sys.take_completed(), restored.take_completed());
    }

    #[test]
    fn registry_matches_a_first_wins_model(ops in prop::collection::vec((any::<bool>(), 0..4usize, 0..3usize), 0..200)) {
        let mut registry = BaseFeatureRegistry::new();
        let mut model: BTreeMap<usize, usize> = BTreeMap::new();
        for (commit, fi, ci) in ops {
            let f = FeatureId::new(format!("f{fi}"));
            let c = ClassId::new(format!("c{ci}"));
            if commit {
                let expect = match model.get(&fi) {
                    Some(&o) if o != ci => CommitOutcome::Conflict,
                    _ => {
                        model.insert(fi, ci);
                        CommitOutcome::Ok
                    }
                };
                prop_assert_eq!(registry.commit(f, c), expect);
            } else {
                registry.remove(&f, &c);
                if model.get(&fi) == Some(&ci) {
                    model.remove(&fi);
                }
            }
            prop_assert_eq!(registry.len(), model.len());
        }
        for (fi, ci) in model {
            let owner = registry.owner(&FeatureId::new(format!("f{fi}"))).cloned();
            prop_assert_eq!(owner, Some(ClassId::new(format!("c{ci}"))));
        }
    }
}
