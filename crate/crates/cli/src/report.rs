//! Check reports and their JSON/CSV serialisation.

use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{Expect, RunConfig};
use crate::error::CliResult;

/// Finite values as numbers, others as the strings `"NaN"`, `"inf"`, `"-inf"`,
/// so reports stay valid JSON and round-trip exactly.
pub mod real {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn to_repr(v: f64) -> String {
        if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&to_repr(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a real number: {other}"))),
            },
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            match Option::<Repr>::deserialize(d)? {
                None => Ok(None),
                Some(Repr::Num(v)) => Ok(Some(v)),
                Some(Repr::Text(t)) => match t.as_str() {
                    "NaN" => Ok(Some(f64::NAN)),
                    "inf" => Ok(Some(f64::INFINITY)),
                    "-inf" => Ok(Some(f64::NEG_INFINITY)),
                    other => Err(serde::de::Error::custom(format!("not a real number: {other}"))),
                },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub point: Vec<f64>,
    #[serde(with = "real")]
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub check: String,
    /// The identity or claim being certified.
    pub anchor: String,
    #[serde(with = "real")]
    pub residual: f64,
    #[serde(with = "real")]
    pub tolerance: f64,
    pub pass: bool,
    pub n_samples: usize,
    #[serde(default, with = "real::option", skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, with = "real::option", skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Vec<Offender>>,
}

impl CheckReport {
    pub fn new(
        suite: &str,
        check: impl Into<String>,
        anchor: impl Into<String>,
        residual: f64,
        tolerance: f64,
        n_samples: usize,
    ) -> CheckReport {
        CheckReport {
            suite: suite.to_string(),
            check: check.into(),
            anchor: anchor.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            n_samples,
            value: None,
            expected: None,
            note: None,
            details: None,
        }
    }

    pub fn with_value(mut self, value: f64, expected: Option<f64>) -> CheckReport {
        self.value = Some(value);
        self.expected = expected;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> CheckReport {
        self.note = Some(note.into());
        self
    }

    pub fn with_worst(mut self, worst: &[(Vec<f64>, f64)]) -> CheckReport {
        if !worst.is_empty() {
            self.details = Some(worst.iter().map(|(p, v)| Offender { point: p.clone(), value: *v }).collect());
        }
        self
    }

    /// Replace the tolerance, keeping `pass ⇔ residual ≤ tolerance`.
    pub fn retolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        self.pass = self.residual <= tolerance;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; excluded from canonical comparison.
    pub timestamp: u64,
    pub config: RunConfig,
    /// Every check passed.
    pub all_pass: bool,
    /// The outcome matched `config.expect`.
    pub verdict: bool,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn new(config: RunConfig, checks: Vec<CheckReport>) -> Report {
        let all_pass = checks.iter().all(|c| c.pass);
        let verdict = match config.expect {
            Expect::Pass => all_pass,
            Expect::Fail => !all_pass,
        };
        let timestamp =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Report {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            config,
            all_pass,
            verdict,
            checks,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.verdict {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// JSON without the timestamp, for run-to-run comparison.
    pub fn canonical(&self) -> CliResult<String> {
        canonical_json(&self.to_json()?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "suite",
            "check",
            "residual",
            "tolerance",
            "pass",
            "n_samples",
            "value",
            "expected",
            "note",
        ])?;
        let num = |v: f64| if v.is_finite() { format!("{v:e}") } else { real::to_repr(v) };
        for c in &self.checks {
            out.write_record([
                c.suite.clone(),
                c.check.clone(),
                num(c.residual),
                num(c.tolerance),
                c.pass.to_string(),
                c.n_samples.to_string(),
                c.value.map(num).unwrap_or_default(),
                c.expected.map(num).unwrap_or_default(),
                c.note.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Parse a report and re-serialise it without its timestamp.
pub fn canonical_json(text: &str) -> CliResult<String> {
    let mut v: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timestamp");
    }
    Ok(serde_json::to_string(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Example;

    fn sample() -> Report {
        let checks = vec![
            CheckReport::new("a-condition", "cyclic-residual", "cyclic sum", 1e-12, 1e-8, 200)
                .with_worst(&[(vec![0.1, 0.2], 1e-12)]),
            CheckReport::new("geodesics", "phi-drift", "conserved", f64::INFINITY, 1e-6, 50)
                .with_value(f64::NAN, Some(0.5))
                .with_note("integration failed"),
        ];
        Report::new(RunConfig::new(Example::Sphere { n: 2, r: 1.0 }), checks)
    }

    #[test]
    fn pass_matches_residual() {
        let r = sample();
        assert!(r.checks[0].pass && !r.checks[1].pass);
        assert!(!r.all_pass && r.exit_code() == 1);
        let mut c = r.checks[1].clone();
        c.retolerance(f64::INFINITY);
        assert!(c.pass);
    }

    #[test]
    fn json_round_trips_non_finite_values() {
        let r = sample();
        let text = r.to_json().unwrap();
        assert!(text.contains("\"inf\"") && text.contains("\"NaN\""));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.checks[0], r.checks[0]);
        assert_eq!(back.checks[1].residual, f64::INFINITY);
        assert!(back.checks[1].value.unwrap().is_nan());
        assert_eq!(back.config, r.config);
    }

    #[test]
    fn canonical_form_ignores_timestamp() {
        let a = sample();
        let mut b = a.clone();
        b.timestamp += 1000;
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.canonical().unwrap(), b.canonical().unwrap());
    }

    #[test]
    fn expectation_inversion() {
        let mut cfg = RunConfig::new(Example::Perturbed { eps: 0.3 });
        cfg.expect = Expect::Fail;
        let failing = vec![CheckReport::new("a-condition", "cyclic-residual", "", 0.2, 1e-8, 10)];
        assert_eq!(Report::new(cfg.clone(), failing).exit_code(), 0);
        let passing = vec![CheckReport::new("a-condition", "cyclic-residual", "", 0.0, 1e-8, 10)];
        assert_eq!(Report::new(cfg, passing).exit_code(), 1);
    }

    #[test]
    fn csv_has_one_row_per_check() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("geodesics,phi-drift,inf"));
    }
}
