//! Fibre-scale sweeps of the bundle Ricci eigenvalues against their closed forms.

use std::io::Write;

use atensor_core::analysis::{properness_certificate, Properness};
use atensor_core::constructions::{berger_bundle, bundle_certificate, BergerBundleSpec};
use serde::{Deserialize, Serialize};

use crate::config::Example;
use crate::error::{CliError, CliResult};
use crate::geometry;
use crate::suites::ALGEBRAIC_TOL;

/// Allowed gap between measured and closed-form eigenvalues.
pub const SWEEP_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl CRange {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.min > 0.0 && self.min < self.max && self.max.is_finite()) || self.steps < 2 {
            return Err(CliError::Usage(format!(
                "sweep needs 0 < c_min < c_max and steps >= 2 (got {}, {}, {})",
                self.min, self.max, self.steps
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| if i + 1 == self.steps { self.max } else { self.min + i as f64 * h }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub lambda_measured: f64,
    pub lambda_formula: f64,
    pub mu_measured: f64,
    pub mu_formula: f64,
    pub tau_measured: f64,
    pub a_residual: f64,
    pub proper_flag: bool,
    /// Largest per-sample gaps for the three closed forms.
    #[serde(skip)]
    pub gaps: [f64; 3],
    #[serde(skip)]
    pub einstein: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Over both eigenvalue columns, every sample.
    pub max_eigen_discrepancy: f64,
    pub max_tau_discrepancy: f64,
    pub max_a_residual: f64,
    /// Proper exactly away from the Einstein scale.
    pub proper_consistent: bool,
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        self.max_eigen_discrepancy <= SWEEP_TOL && self.max_a_residual <= ALGEBRAIC_TOL && self.proper_consistent
    }

    pub fn write_csv<W: Write>(&self, w: W) -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "c",
            "lambda_measured",
            "lambda_formula",
            "mu_measured",
            "mu_formula",
            "tau_measured",
            "a_residual",
            "proper_flag",
        ])?;
        let f = |v: f64| format!("{v:.12e}");
        for r in &self.rows {
            out.write_record([
                format!("{}", r.c),
                f(r.lambda_measured),
                f(r.lambda_formula),
                f(r.mu_measured),
                f(r.mu_formula),
                f(r.tau_measured),
                format!("{:.3e}", r.a_residual),
                r.proper_flag.to_string(),
            ])?;
        }
        let lam = self.rows.iter().map(|r| r.gaps[0]).fold(0.0, f64::max);
        let mu = self.rows.iter().map(|r| r.gaps[1]).fold(0.0, f64::max);
        out.write_record([
            "max_abs_discrepancy".to_string(),
            format!("{lam:.3e}"),
            String::new(),
            format!("{mu:.3e}"),
            String::new(),
            format!("{:.3e}", self.max_tau_discrepancy),
            format!("{:.3e}", self.max_a_residual),
            String::new(),
        ])?;
        out.flush()?;
        Ok(())
    }
}

fn row(spec: &BergerBundleSpec, points: &[Vec<f64>]) -> CliResult<SweepRow> {
    let cert = bundle_certificate(spec, points, ALGEBRAIC_TOL)?;
    let claim = |id: &str| cert.claim(id).ok_or_else(|| CliError::Usage(format!("certificate lacks {id}")));
    let lam = claim("vertical-eigenvalue")?;
    let mu = claim("horizontal-eigenvalue")?;
    let tau = claim("scalar-curvature")?;
    let a = claim("a-condition")?;
    let ricci = spec.ricci_endomorphism();
    let proper_flag = !cert.einstein
        && matches!(properness_certificate(&spec.patch, &ricci, points), Ok(p) if p.status == Properness::Proper);
    Ok(SweepRow {
        c: spec.c,
        lambda_measured: lam.value.unwrap_or(f64::NAN),
        lambda_formula: spec.lambda_formula(),
        mu_measured: mu.value.unwrap_or(f64::NAN),
        mu_formula: spec.mu_formula(),
        tau_measured: tau.value.unwrap_or(f64::NAN),
        a_residual: a.residual,
        proper_flag,
        gaps: [lam.residual, mu.residual, tau.residual],
        einstein: cert.einstein,
    })
}

pub fn sweep(example: &Example, range: CRange, samples: usize, seed: u64) -> CliResult<SweepResult> {
    range.validate()?;
    let Example::Berger { .. } = example else {
        return Err(CliError::Usage(format!("sweep needs the berger example (got {})", example.name())));
    };
    example.validate()?;
    let base = geometry::build(example)?.base.expect("berger examples carry their base");
    let mut rows = Vec::with_capacity(range.steps);
    for c in range.values() {
        let spec = berger_bundle(&base, c)?;
        let points = spec.patch.samples(samples, seed);
        rows.push(row(&spec, &points)?);
    }
    let max_eigen_discrepancy = rows.iter().map(|r| r.gaps[0].max(r.gaps[1])).fold(0.0, f64::max);
    let max_tau_discrepancy = rows.iter().map(|r| r.gaps[2]).fold(0.0, f64::max);
    let max_a_residual = rows.iter().map(|r| r.a_residual).fold(0.0, f64::max);
    let proper_consistent = rows.iter().all(|r| r.proper_flag != r.einstein);
    Ok(SweepResult { rows, max_eigen_discrepancy, max_tau_discrepancy, max_a_residual, proper_consistent })
}
