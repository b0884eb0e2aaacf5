//! Batch verification front end: example geometries, named suites, reports
//! and parameter sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod error;
pub mod geometry;
pub mod report;
pub mod suites;
pub mod sweep;

use config::RunConfig;
use error::CliResult;
use report::Report;

/// Builds the example and runs every effective suite.
pub fn verify(cfg: &RunConfig) -> CliResult<Report> {
    cfg.validate()?;
    let geo = geometry::build(&cfg.example)?;
    let mut checks = Vec::new();
    for suite in cfg.effective_suites() {
        checks.extend(suites::run_suite(suite, &geo, cfg));
    }
    let mut echo = cfg.clone();
    echo.suites = cfg.effective_suites();
    Ok(Report::new(echo, checks))
}
