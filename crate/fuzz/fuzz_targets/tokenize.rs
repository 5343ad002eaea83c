#![no_main]

use expert_mas::feature::is_valid_token;
use expert_mas::tags::tokenize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let tags = tokenize(&text);
    let joined: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
    for t in &joined {
        assert!(is_valid_token(t), "{t:?}");
    }
    assert_eq!(tokenize(&joined.join(" ")), tags);
});
