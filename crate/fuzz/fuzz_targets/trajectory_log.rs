#![no_main]

use beliefmem::agent::log::{parse_trajectory_log, write_record};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_trajectory_log(text) {
        let mut out = Vec::new();
        for r in &records {
            write_record(&mut out, r).expect("write to memory");
        }
        let again =
            parse_trajectory_log(std::str::from_utf8(&out).unwrap()).expect("written log parses");
        assert_eq!(again, records);
    }
});
