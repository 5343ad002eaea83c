#![no_main]

use expert_mas::corpus::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(manifest) = Manifest::parse(text) {
        let again = Manifest::parse(&manifest.to_json()).expect("rendered manifest parses");
        assert_eq!(again, manifest);
        let _ = manifest.class_seeds();
    }
});
