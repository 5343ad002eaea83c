#![no_main]

use expert_mas::snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(system) = snapshot::read(text) {
        let written = snapshot::write(&system).expect("restored system is quiescent");
        let again = snapshot::read(&written).expect("written snapshot reads");
        assert_eq!(snapshot::write(&again).unwrap(), written);
    }
});
