//! Trajectory CSV: no panics, and parse . print is the identity on
//! accepted input.
#![no_main]
use ktrap::trajectory::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(t) = Trajectory::from_csv(text) else { return };
    let printed = t.to_csv();
    let back = Trajectory::from_csv(&printed).expect("printed trajectory reparses");
    assert_eq!(back, t);
});
