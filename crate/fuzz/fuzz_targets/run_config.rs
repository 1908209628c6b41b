#![no_main]

use libfuzzer_sys::fuzz_target;
use volcal_cli::config::{Command, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RunConfig::from_json(text) else {
        return;
    };
    for command in [Command::Synth, Command::Calibrate, Command::Check, Command::Kernels] {
        let _ = cfg.validate(command);
    }
    assert_eq!(RunConfig::from_json(&cfg.to_json()).expect("own output parses"), cfg);
});
