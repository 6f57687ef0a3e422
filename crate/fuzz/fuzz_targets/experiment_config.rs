#![no_main]
use ktrap_cli::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // Only inline sources; files named in the input are not opened.
        if cfg.env_file.is_none() && cfg.env_dump.is_none() {
            let _ = cfg.env_source();
        }
    }
});
