#![no_main]

use beliefmem::pomdp::format::{parse_pomdp_definition, write_pomdp_definition};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(pomdp) = parse_pomdp_definition(text) {
        let again = parse_pomdp_definition(&write_pomdp_definition(&pomdp))
            .expect("written definition parses");
        assert_eq!(again, pomdp);
    }
});
