//! Drives a four-class system with contested shared tags. The first bytes
//! pick the scheduler seed and protocol settings; each later byte is a query.

#![no_main]

use expert_mas::center::DispatchPolicy;
use expert_mas::feature::{ClassId, FeatureId};
use expert_mas::protocol::ConsultMode;
use expert_mas::sim::{ClassSeed, System, SystemConfig};
use expert_mas::tags::TagCollection;
use libfuzzer_sys::fuzz_target;

const CLASSES: usize = 4;

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

fn query(b: u8) -> TagCollection {
    let mut tags = TagCollection::new();
    tags.insert(FeatureId::new(format!("c{}.b{}", b & 3, (b >> 2) & 1)));
    for i in 0..3 {
        if b & (8 << i) != 0 {
            tags.insert(FeatureId::new(format!("s{i}")));
        }
    }
    tags
}

fuzz_target!(|data: &[u8]| {
    if data.len() < 12 {
        return;
    }
    let (head, body) = data.split_at(12);
    let mut cfg = SystemConfig {
        seed: u64::from_le_bytes(head[..8].try_into().unwrap()),
        policy: DispatchPolicy::TopK(1 + head[8] as usize % CLASSES),
        ..SystemConfig::default()
    };
    cfg.protocol.mode = if head[9] & 1 == 0 {
        ConsultMode::Lookup
    } else {
        ConsultMode::Broadcast
    };
    cfg.protocol.round_cap = 1 + (head[9] >> 1) as u32 % 8;
    cfg.learning.theta = 1 + head[10] as u32 % 4;
    cfg.learning.window = 10;
    cfg.learning.epoch = 10;
    let pipeline = 1 + head[11] as usize % 8;

    let mut sys = System::new(&seeds(), cfg).unwrap();
    let mut answered = 0;
    for batch in body.chunks(pipeline) {
        for &b in batch {
            sys.submit(&query(b)).unwrap();
        }
        sys.run_until_idle();
        if let Err(v) = sys.check_consistency() {
            panic!("{v}");
        }
        answered += sys.take_completed().len();
    }
    assert_eq!(answered, body.len());
    sys.settle();
    assert!(sys.is_quiescent());
    assert!(sys.check_consistency().is_ok());
});
