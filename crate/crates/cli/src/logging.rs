//! Tiny stderr logger gated by the LATTICEWAVE_LOG environment variable
//! (`error`, `info`, or `debug`; default `info`).

use std::sync::OnceLock;

fn level() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("LATTICEWAVE_LOG").as_deref() {
        Ok("error") => 0,
        Ok("debug") => 2,
        _ => 1,
    })
}

pub fn log_info(msg: &str) {
    if level() >= 1 {
        eprintln!("[latticewave] {msg}");
    }
}

pub fn log_debug(msg: &str) {
    if level() >= 2 {
        eprintln!("[latticewave:debug] {msg}");
    }
}
