//! Configuration, command dispatch and report emission for the `gscr` tool.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{load, parse_str, AnalysisConfig, ConfigError, ConfigErrorKind, Loaded};
pub use emit::Format;
pub use run::{run, Command, Report, ReportBundle, RunError, RunOptions};

/// Exit codes of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const COMPUTATION: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INCONSISTENT: i32 = 3;
}
