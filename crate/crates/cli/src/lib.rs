//! Command-line front end for the land cover pipeline: configuration,
//! subcommands and the synthetic fixture generator.

pub mod commands;
pub mod config;
pub mod synth;

use lulc_core::LulcError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub fn exit_code(e: &LulcError) -> i32 {
    match e {
        LulcError::Config(_) => EXIT_CONFIG,
        LulcError::Divergence { .. } => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}
