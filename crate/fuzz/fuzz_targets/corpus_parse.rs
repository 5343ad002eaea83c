#![no_main]

use expert_mas::corpus::Corpus;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(corpus) = Corpus::parse(text) {
        let again = Corpus::parse(&corpus.to_text()).expect("rendered corpus parses");
        assert_eq!(again, corpus);
    }
});
