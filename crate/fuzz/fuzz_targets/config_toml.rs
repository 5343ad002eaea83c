#![no_main]

use expert_mas::config::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::from_toml(text) {
        for classes in [1, 3, 10] {
            let _ = cfg.resolve(classes);
        }
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).expect("rendered config parses");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});
