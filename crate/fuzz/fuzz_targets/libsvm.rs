#![no_main]
use libfuzzer_sys::fuzz_target;
use subnewton::data::{read_libsvm, ParseOptions};

fuzz_target!(|data: &[u8]| {
    // Anything accepted must survive a write/read round trip unchanged.
    let Ok(ds) = read_libsvm(data, ParseOptions::default()) else {
        return;
    };
    let mut text = Vec::new();
    ds.write_libsvm(&mut text).unwrap();
    let again = read_libsvm(&text[..], ParseOptions { dim: Some(ds.d()) }).unwrap();
    assert_eq!(again, ds);
});
