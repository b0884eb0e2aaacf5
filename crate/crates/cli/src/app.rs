//! Command-line parsing and dispatch.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_tolerance, Example, Expect, Format, RunConfig, Suite, EXAMPLES, SUITES};
use crate::error::{CliError, CliResult};
use crate::sweep::{sweep, CRange};

#[derive(Debug, Parser)]
#[command(name = "atensor", version, about = "Verify A-tensor identities on built-in chart geometries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run verification suites on one example and write a report.
    Verify(VerifyArgs),
    /// Sweep the fibre scale of a bundle example and tabulate eigenvalues.
    Sweep(SweepArgs),
    /// List examples and suites, or describe one by name.
    List { name: Option<String> },
}

#[derive(Debug, Args, Default)]
pub struct ExampleArgs {
    /// flat | sphere | perturbed | fubini | berger
    #[arg(long)]
    pub example: Option<String>,
    /// Base curvature (berger)
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Fibre scale (berger)
    #[arg(long)]
    pub c: Option<f64>,
    /// Dimension or complex dimension
    #[arg(long)]
    pub n: Option<usize>,
    /// Radius (sphere)
    #[arg(long)]
    pub r: Option<f64>,
    /// Perturbation (perturbed)
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
}

impl ExampleArgs {
    fn any_parameter(&self) -> bool {
        self.k.is_some() || self.c.is_some() || self.n.is_some() || self.r.is_some() || self.eps.is_some()
    }

    fn build(&self) -> CliResult<Option<Example>> {
        match &self.example {
            Some(name) => Example::from_parts(name, self.k, self.c, self.n, self.r, self.eps).map(Some),
            None if self.any_parameter() => Err(CliError::Usage("example parameters need --example".into())),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub example: ExampleArgs,
    /// Suite to run (repeatable); all applicable suites when omitted
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override, <suite>=<value> (repeatable)
    #[arg(long = "tol")]
    pub tolerances: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json | csv
    #[arg(long)]
    pub format: Option<String>,
    /// pass | fail; `fail` inverts the exit status for negative controls
    #[arg(long)]
    pub expect: Option<String>,
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Suppress the per-check summary on stderr
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub example: ExampleArgs,
    #[arg(long = "c-min", default_value_t = 0.2)]
    pub c_min: f64,
    #[arg(long = "c-max", default_value_t = 1.4)]
    pub c_max: f64,
    #[arg(long, default_value_t = 13)]
    pub steps: usize,
    #[arg(long, default_value_t = crate::config::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = crate::config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl VerifyArgs {
    pub fn to_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
            None => match self.example.build()? {
                Some(ex) => RunConfig::new(ex),
                None => return Err(CliError::Usage("verify needs --example or --config".into())),
            },
        };
        if self.config.is_some() {
            if let Some(ex) = self.example.build()? {
                cfg.example = ex;
            }
        }
        if !self.suites.is_empty() {
            cfg.suites = self.suites.iter().map(|s| Suite::parse(s)).collect::<CliResult<_>>()?;
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for t in &self.tolerances {
            let (suite, v) = parse_tolerance(t)?;
            cfg.tolerances.insert(suite, v);
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = &self.format {
            cfg.output.format = match f.as_str() {
                "json" => Format::Json,
                "csv" => Format::Csv,
                other => return Err(CliError::Usage(format!("unknown format '{other}' (json | csv)"))),
            };
        }
        if let Some(e) = &self.expect {
            cfg.expect = match e.as_str() {
                "pass" => Expect::Pass,
                "fail" => Expect::Fail,
                other => return Err(CliError::Usage(format!("--expect takes pass | fail (got '{other}')"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn listing(name: Option<&str>) -> CliResult<String> {
    let ex_line = |(n, schema): &(&str, &str)| format!("  {n:<10} {schema}\n");
    let suite_line = |s: &Suite| format!("  {:<18} -> {}\n", s.name(), s.anchor());
    match name {
        None => {
            let mut out = String::from("examples:\n");
            EXAMPLES.iter().for_each(|e| out += &ex_line(e));
            out += "suites:\n";
            SUITES.iter().for_each(|s| out += &suite_line(s));
            Ok(out)
        }
        Some(n) => {
            if let Some(e) = EXAMPLES.iter().find(|e| e.0 == n) {
                return Ok(ex_line(e));
            }
            Suite::parse(n).map(|s| suite_line(&s))
        }
    }
}

fn write_or_print(path: Option<&PathBuf>, stdout: &mut dyn Write, body: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, body)?,
        None => stdout.write_all(body)?,
    }
    Ok(())
}

/// Runs a parsed command; returns the exit status.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<i32> {
    match &cli.command {
        Command::List { name } => {
            stdout.write_all(listing(name.as_deref())?.as_bytes())?;
            Ok(0)
        }
        Command::Verify(args) => {
            let cfg = args.to_config()?;
            let report = crate::verify(&cfg)?;
            let body = match cfg.output.format {
                Format::Json => report.to_json()?.into_bytes(),
                Format::Csv => {
                    let mut buf = Vec::new();
                    report.write_csv(&mut buf)?;
                    buf
                }
            };
            write_or_print(cfg.output.path.as_ref(), stdout, &body)?;
            if !args.quiet {
                for c in &report.checks {
                    writeln!(
                        stderr,
                        "{} {}/{} residual {:.3e} tolerance {:.1e}",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.suite,
                        c.check,
                        c.residual,
                        c.tolerance
                    )?;
                }
                let failed = report.checks.iter().filter(|c| !c.pass).count();
                writeln!(
                    stderr,
                    "{} checks, {failed} failed, expected {}: {}",
                    report.checks.len(),
                    if cfg.expect == Expect::Fail { "failure" } else { "success" },
                    if report.verdict { "ok" } else { "NOT OK" }
                )?;
            }
            Ok(report.exit_code())
        }
        Command::Sweep(args) => {
            let ex = match args.example.build()? {
                Some(ex) => ex,
                None => Example::from_parts("berger", None, None, None, None, None)?,
            };
            if args.samples < crate::config::MIN_SAMPLES {
                return Err(CliError::Usage(format!("samples must be >= {}", crate::config::MIN_SAMPLES)));
            }
            let range = CRange { min: args.c_min, max: args.c_max, steps: args.steps };
            let res = sweep(&ex, range, args.samples, args.seed)?;
            let mut buf = Vec::new();
            res.write_csv(&mut buf)?;
            write_or_print(args.out.as_ref(), stdout, &buf)?;
            writeln!(
                stderr,
                "max eigenvalue discrepancy {:.3e}, max cyclic residual {:.3e}, properness {}",
                res.max_eigen_discrepancy,
                res.max_a_residual,
                if res.proper_consistent { "as predicted" } else { "NOT as predicted" }
            )?;
            Ok(if res.pass() { 0 } else { 1 })
        }
    }
}

/// Applies `ATENSOR_THREADS` to the global thread pool.
pub fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("ATENSOR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("ATENSOR_THREADS must be a positive integer (got '{v}')")))?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("atensor").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn verify_flags_build_a_config() {
        let cli = parse(&[
            "verify",
            "--example",
            "berger",
            "--K",
            "-2",
            "--c",
            "0.5",
            "--suite",
            "a-condition",
            "--tol",
            "a-condition=1e-6",
        ]);
        let Command::Verify(args) = &cli.command else { panic!() };
        let cfg = args.to_config().unwrap();
        assert_eq!(cfg.example, Example::Berger { k: Some(-2.0), c: 0.5, n: 1 });
        assert_eq!(cfg.suites, vec![Suite::ACondition]);
        assert_eq!(cfg.tolerance(Suite::ACondition), Some(1e-6));
    }

    #[test]
    fn usage_errors() {
        for args in [
            vec!["verify"],
            vec!["verify", "--example", "torus"],
            vec!["verify", "--example", "sphere", "--suite", "oneill"],
            vec!["verify", "--example", "sphere", "--format", "xml"],
            vec!["verify", "--example", "sphere", "--expect", "maybe"],
            vec!["verify", "--c", "0.5"],
        ] {
            let Command::Verify(v) = parse(&args).command else { panic!() };
            assert!(matches!(v.to_config(), Err(CliError::Usage(_))), "{args:?}");
        }
        assert!(listing(Some("nothing")).is_err());
    }

    #[test]
    fn listing_names_examples_and_anchors() {
        let text = listing(None).unwrap();
        for name in ["berger", "fubini", "perturbed", "flat", "sphere"] {
            assert!(text.contains(name));
        }
        assert!(text.contains("bundle-ricci       -> bundle Ricci eigenvalues"));
        assert!(listing(Some("geodesics")).unwrap().contains("geodesics"));
    }
}
