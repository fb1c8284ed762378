//! `biharm`: command-line driver for the biharmonic heat lab.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
//! 3 I/O error.

mod commands;
mod config;
mod report;

use std::process::ExitCode;

use commands::Failure;
use config::ConfigError;
use report::{Line, Reporter};

const PASS: u8 = 0;
const CHECK_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const IO_ERROR: u8 = 3;

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("BIHARM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or(format!("BIHARM_THREADS: `{raw}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run() -> u8 {
    let cfg = match config::parse_config(std::env::args_os()) {
        Ok(c) => c,
        Err(ConfigError::Help(text)) => {
            print!("{text}");
            return PASS;
        }
        Err(e @ ConfigError::Io { .. }) => {
            eprintln!("error: {e}");
            return IO_ERROR;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return CONFIG_ERROR;
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return CONFIG_ERROR;
    }
    let mut rep = match Reporter::open(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return IO_ERROR;
        }
    };
    match commands::dispatch(&cfg, &mut rep) {
        Ok(()) => {}
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            return CONFIG_ERROR;
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            return IO_ERROR;
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            if let Err(e) = rep.emit(Line::new(&cfg.subcommand).text("error", &e.to_string()).pass(false)) {
                eprintln!("error: {e}");
                return IO_ERROR;
            }
        }
    }
    match rep.finish() {
        Ok(true) => PASS,
        Ok(false) => CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            IO_ERROR
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run())
}
