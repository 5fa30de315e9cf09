#![no_main]

use beliefmem::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_toml(text) {
        let written = config.to_toml().expect("parsed config serializes");
        let again = ExperimentConfig::from_toml(&written).expect("written config parses");
        assert_eq!(again.config_hash(), config.config_hash());
    }
});
