#![no_main]

use libfuzzer_sys::fuzz_target;
use volcal::pipeline::{parse_quotes_json, write_quotes_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(set) = parse_quotes_json(text) else {
        return;
    };
    let mut buf = Vec::new();
    write_quotes_json(&mut buf, &set.slices, set.market.as_ref()).expect("writing to memory");
    let back = parse_quotes_json(std::str::from_utf8(&buf).unwrap()).expect("own output parses");
    assert_eq!(back.slices, set.slices);
    assert_eq!(back.market, set.market);
});
