//! HTTP service and command-line front end for the retrofit planner.

pub mod api;
pub mod chat;
pub mod cli;
pub mod requests;
