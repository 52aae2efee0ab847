//! File formats, model checkpoints, reports and the `xmreid` command-line
//! driver built on [`xmreid_core`].

pub mod cli;
pub mod config;
pub mod dataio;
pub mod models;
pub mod report;
pub mod runner;
