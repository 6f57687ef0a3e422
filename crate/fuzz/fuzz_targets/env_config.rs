//! Environment TOML: parsing never panics, and a valid config survives
//! printing and reparsing.
#![no_main]
use ktrap::tree_env::EnvConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = EnvConfig::parse(text) else { return };
    let again = EnvConfig::parse(&cfg.to_toml()).expect("printed config reparses");
    assert_eq!(again, cfg);
    let _ = cfg.to_environment();
    let _ = cfg.to_formula();
    let _ = cfg.to_coin_model();
});
