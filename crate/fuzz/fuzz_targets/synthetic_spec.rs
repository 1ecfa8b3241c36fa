#![no_main]
use libfuzzer_sys::fuzz_target;
use subnewton::SyntheticSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(spec) = s.parse::<SyntheticSpec>() {
            assert!(spec.validate().is_ok());
        }
    }
});
