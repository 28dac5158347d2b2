#![no_main]
use libfuzzer_sys::fuzz_target;
use specclip::io::{parse_trajectories, trajectories_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(dataset) = parse_trajectories(text) {
        let again =
            parse_trajectories(&trajectories_to_string(&dataset)).expect("written CSV parses");
        assert_eq!(again, dataset);
    }
});
