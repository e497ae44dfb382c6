//! Library side of the experiment front end: configuration schema, grid
//! runner, aggregation/reporting, and the solve/verify command cores.

pub mod config;
pub mod instance;
pub mod report;
pub mod runner;
pub mod verifyspec;

/// Stable process exit codes.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const VERIFICATION: i32 = 2;
    pub const RUNTIME: i32 = 3;
}
