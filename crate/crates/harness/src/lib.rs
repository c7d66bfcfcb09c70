//! Scenario runners, reports and the command-line front end for the
//! semantic-communication pipeline.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod scenarios;
pub mod synth;
