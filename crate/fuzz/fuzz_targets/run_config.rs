#![no_main]
use libfuzzer_sys::fuzz_target;
use subnewton::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_json(s) {
            let _ = cfg.solver();
            let _ = cfg.regularizer();
            let _ = cfg.require_seed(&[cfg.solver()]);
        }
    }
});
