#![no_main]
use ktrap::grem_env::EnvDump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(dump) = EnvDump::from_csv(text) else { return };
    let csv = dump.to_csv();
    let back = EnvDump::from_csv(&csv).expect("printed dump reparses");
    assert_eq!(back.to_csv(), csv);
});
