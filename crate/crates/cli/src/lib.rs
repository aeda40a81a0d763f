//! Command line front end and HTTP service for `plaquekit`.

pub mod commands;
pub mod server;
