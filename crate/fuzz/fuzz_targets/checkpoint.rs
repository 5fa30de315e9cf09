#![no_main]

use beliefmem::policy::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        let bytes = encode(&ckpt.params, ckpt.config_hash);
        assert_eq!(decode(&bytes).expect("encoded checkpoint decodes"), ckpt);
    }
});
