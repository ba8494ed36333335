//! Library surface of the command-line tool (shared with the acceptance
//! suite).

pub mod commands;
pub mod errors;
pub mod gradcheck;
pub mod runconfig;
