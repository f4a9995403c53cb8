//! The `friends` command-line tool and its JSON service.
//!
//! Every command is a thin wrapper over `friends_core`; the service reuses
//! the same analysis path, so both front ends agree for identical inputs.

pub mod api;
pub mod args;
pub mod commands;
pub mod exit;
