#![no_main]
use ktrap::grem_env::EnvDump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(dump) = EnvDump::from_bytes(data) else { return };
    let bytes = dump.to_bytes();
    let back = EnvDump::from_bytes(&bytes).expect("encoded dump decodes");
    assert_eq!(back.to_bytes(), bytes);
    let _ = dump.to_coin_model();
});
