#![no_main]
use libfuzzer_sys::fuzz_target;
use specclip::koopman::ModeSelector;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sel) = text.parse::<ModeSelector>() {
        assert_eq!(
            sel.to_string()
                .parse::<ModeSelector>()
                .expect("display form parses"),
            sel
        );
    }
});
