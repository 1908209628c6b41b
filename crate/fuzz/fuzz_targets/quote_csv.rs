#![no_main]

use libfuzzer_sys::fuzz_target;
use volcal::pipeline::{parse_quotes_csv, write_quotes_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(set) = parse_quotes_csv(text) else {
        return;
    };
    // anything accepted must survive a write/parse cycle unchanged
    let mut buf = Vec::new();
    write_quotes_csv(&mut buf, &set.slices).expect("writing to memory");
    let back = parse_quotes_csv(std::str::from_utf8(&buf).unwrap()).expect("own output parses");
    assert_eq!(back.slices, set.slices);
});
