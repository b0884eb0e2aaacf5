//! Run configuration: example geometry, suites, sampling and tolerances.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_SEED: u64 = 42;
pub const MIN_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum Example {
    Flat {
        n: usize,
    },
    Sphere {
        n: usize,
        r: f64,
    },
    Perturbed {
        eps: f64,
    },
    Fubini {
        n: usize,
    },
    Berger {
        /// Base curvature for `n = 1`; the target `α` of a rescaled
        /// Fubini–Study base for `n ≥ 2` (unit scale when absent).
        #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        c: f64,
        n: usize,
    },
}

pub const EXAMPLES: [(&str, &str); 5] = [
    ("flat", "n: dimension (default 3); unit box, S built from the unit parallel field d/dx1"),
    ("sphere", "n: dimension (default 2), r: radius (default 1)"),
    ("perturbed", "eps: |eps| < 0.5 (default 0.3); surface with non-constant Gauss curvature"),
    ("fubini", "n: complex dimension (default 1); Fubini-Study affine chart"),
    (
        "berger",
        "K: base curvature or target alpha (default 1), c: fibre scale (default 0.8), n: complex dimension (default 1)",
    ),
];

impl Example {
    pub fn name(&self) -> &'static str {
        match self {
            Example::Flat { .. } => "flat",
            Example::Sphere { .. } => "sphere",
            Example::Perturbed { .. } => "perturbed",
            Example::Fubini { .. } => "fubini",
            Example::Berger { .. } => "berger",
        }
    }

    /// Build from a name and optional parameters, filling defaults.
    pub fn from_parts(
        name: &str,
        k: Option<f64>,
        c: Option<f64>,
        n: Option<usize>,
        r: Option<f64>,
        eps: Option<f64>,
    ) -> CliResult<Example> {
        let unused = |flags: &[(&str, bool)]| -> CliResult<()> {
            match flags.iter().find(|f| f.1) {
                Some((f, _)) => Err(CliError::Usage(format!("--{f} does not apply to example {name}"))),
                None => Ok(()),
            }
        };
        let ex = match name {
            "flat" => {
                unused(&[("K", k.is_some()), ("c", c.is_some()), ("r", r.is_some()), ("eps", eps.is_some())])?;
                Example::Flat { n: n.unwrap_or(3) }
            }
            "sphere" => {
                unused(&[("K", k.is_some()), ("c", c.is_some()), ("eps", eps.is_some())])?;
                Example::Sphere { n: n.unwrap_or(2), r: r.unwrap_or(1.0) }
            }
            "perturbed" => {
                unused(&[("K", k.is_some()), ("c", c.is_some()), ("n", n.is_some()), ("r", r.is_some())])?;
                Example::Perturbed { eps: eps.unwrap_or(0.3) }
            }
            "fubini" => {
                unused(&[("K", k.is_some()), ("c", c.is_some()), ("r", r.is_some()), ("eps", eps.is_some())])?;
                Example::Fubini { n: n.unwrap_or(1) }
            }
            "berger" => {
                unused(&[("r", r.is_some()), ("eps", eps.is_some())])?;
                let n = n.unwrap_or(1);
                let k = if n == 1 { Some(k.unwrap_or(1.0)) } else { k };
                Example::Berger { k, c: c.unwrap_or(0.8), n }
            }
            other => return Err(CliError::Usage(format!("unknown example '{other}' (try `atensor list`)"))),
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        match *self {
            Example::Flat { n } | Example::Fubini { n } if n == 0 => bad(format!("{}: n must be >= 1", self.name())),
            Example::Sphere { n, r } if n == 0 || !(r > 0.0) => {
                bad(format!("sphere: need n >= 1 and r > 0 (got {n}, {r})"))
            }
            Example::Perturbed { eps } if !(eps.abs() < 0.5) => bad(format!("perturbed: need |eps| < 0.5 (got {eps})")),
            Example::Berger { n: 0, .. } => bad("berger: n must be >= 1".into()),
            Example::Berger { c, .. } if !(c > 0.0) || !c.is_finite() => bad(format!("berger: need c > 0 (got {c})")),
            Example::Berger { k: Some(k), n, .. } if n == 1 && (k == 0.0 || !k.is_finite()) => {
                bad(format!("berger: base curvature must be non-zero (got {k})"))
            }
            Example::Berger { k: Some(k), n, .. } if n >= 2 && !(k > 0.0) => {
                bad(format!("berger: n >= 2 uses a Fubini-Study base, which needs K > 0 (got {k})"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Oracle,
    Structure,
    ACondition,
    Eigenstructure,
    Eigenfields,
    Distributions,
    Killing,
    KillingCurvature,
    Oneill,
    BundleRicci,
    Geodesics,
    Properness,
}

pub const SUITES: [Suite; 12] = [
    Suite::Oracle,
    Suite::Structure,
    Suite::ACondition,
    Suite::Eigenstructure,
    Suite::Eigenfields,
    Suite::Distributions,
    Suite::Killing,
    Suite::KillingCurvature,
    Suite::Oneill,
    Suite::BundleRicci,
    Suite::Geodesics,
    Suite::Properness,
];

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Structure => "structure",
            Suite::ACondition => "a-condition",
            Suite::Eigenstructure => "eigenstructure",
            Suite::Eigenfields => "eigenfields",
            Suite::Distributions => "distributions",
            Suite::Killing => "killing",
            Suite::KillingCurvature => "killing-curvature",
            Suite::Oneill => "oneill",
            Suite::BundleRicci => "bundle-ricci",
            Suite::Geodesics => "geodesics",
            Suite::Properness => "properness",
        }
    }

    pub fn anchor(self) -> &'static str {
        match self {
            Suite::Oracle => "jet curvature agrees with central differences; Bianchi and symmetries",
            Suite::Structure => "Kaehler-Einstein base invariants and bundle metric structure",
            Suite::ACondition => "cyclic sum of the covariant derivative of the quadratic form vanishes",
            Suite::Eigenstructure => "eigenvalue count, multiplicities and constancy along eigendistributions",
            Suite::Eigenfields => "eigenfield identities for the derivative of S and of eigenfields",
            Suite::Distributions => "integrability, autoparallelity and the bracket identity of eigendistributions",
            Suite::Killing => "unit Killing field, its deformation tensor and the vertical eigenvalue",
            Suite::KillingCurvature => "curvature identities of a unit Killing field",
            Suite::Oneill => "submersion A-tensor identities and sectional curvatures",
            Suite::BundleRicci => "bundle Ricci eigenvalues, scalar curvature and properness against closed forms",
            Suite::Geodesics => "conservation of the quadratic form, energy and Killing momentum along geodesics",
            Suite::Properness => "covariant derivative of S and the differential of the eigenform vanish together",
        }
    }

    pub fn parse(name: &str) -> CliResult<Suite> {
        SUITES
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| CliError::Usage(format!("unknown suite '{name}' (try `atensor list`)")))
    }

    /// Why the suite cannot run on an example, if it cannot.
    pub fn unsupported(self, ex: &Example) -> Option<&'static str> {
        let bundle = matches!(ex, Example::Berger { .. });
        let killing = bundle || matches!(ex, Example::Flat { .. });
        let kaehler = bundle || matches!(ex, Example::Fubini { .. });
        match self {
            Suite::Killing | Suite::KillingCurvature if !killing => Some("needs a unit Killing field (flat or berger)"),
            Suite::Oneill | Suite::BundleRicci if !bundle => Some("needs a bundle metric (berger)"),
            Suite::Structure if !kaehler => Some("needs a Kaehler base (fubini or berger)"),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expect {
    #[default]
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub example: Example,
    /// Empty means every suite that applies to the example.
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Per-suite tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<Suite, f64>,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub expect: Expect,
}

impl RunConfig {
    pub fn new(example: Example) -> RunConfig {
        RunConfig {
            example,
            suites: Vec::new(),
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            tolerances: BTreeMap::new(),
            output: Output::default(),
            expect: Expect::Pass,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.example.validate()?;
        if self.samples < MIN_SAMPLES {
            return Err(CliError::Usage(format!("samples must be >= {MIN_SAMPLES} (got {})", self.samples)));
        }
        for (s, t) in &self.tolerances {
            if !(*t > 0.0) || !t.is_finite() {
                return Err(CliError::Usage(format!("tolerance for {} must be positive (got {t})", s.name())));
            }
        }
        for s in &self.suites {
            if let Some(why) = s.unsupported(&self.example) {
                return Err(CliError::Usage(format!("suite {} on example {}: {why}", s.name(), self.example.name())));
            }
        }
        Ok(())
    }

    /// Requested suites in canonical order, or all applicable ones.
    pub fn effective_suites(&self) -> Vec<Suite> {
        let mut out: Vec<Suite> = if self.suites.is_empty() {
            SUITES.iter().copied().filter(|s| s.unsupported(&self.example).is_none()).collect()
        } else {
            self.suites.clone()
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn tolerance(&self, suite: Suite) -> Option<f64> {
        self.tolerances.get(&suite).copied()
    }

    pub fn from_json(text: &str) -> CliResult<RunConfig> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }
}

/// `suite=value`.
pub fn parse_tolerance(s: &str) -> CliResult<(Suite, f64)> {
    let (name, value) =
        s.split_once('=').ok_or_else(|| CliError::Usage(format!("--tol expects <suite>=<value>, got '{s}'")))?;
    let suite = Suite::parse(name.trim())?;
    let value: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("bad tolerance value in '{s}'")))?;
    if !(value > 0.0) || !value.is_finite() {
        return Err(CliError::Usage(format!("tolerance must be positive, got '{s}'")));
    }
    Ok((suite, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let ex = Example::from_parts("berger", None, None, None, None, None).unwrap();
        assert_eq!(ex, Example::Berger { k: Some(1.0), c: 0.8, n: 1 });
        assert!(Example::from_parts("berger", Some(0.0), None, None, None, None).is_err());
        assert!(Example::from_parts("berger", None, Some(-1.0), None, None, None).is_err());
        assert!(Example::from_parts("perturbed", None, None, None, None, Some(0.6)).is_err());
        assert!(Example::from_parts("sphere", None, None, None, None, Some(0.1)).is_err());
        assert!(matches!(Example::from_parts("torus", None, None, None, None, None), Err(CliError::Usage(_))));
    }

    #[test]
    fn suites_parse_and_apply() {
        for s in SUITES {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("bogus").is_err());
        let mut cfg = RunConfig::new(Example::Perturbed { eps: 0.3 });
        assert!(!cfg.effective_suites().contains(&Suite::Killing));
        cfg.suites = vec![Suite::Oneill];
        assert!(cfg.validate().is_err());
        cfg.suites.clear();
        cfg.samples = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let mut cfg = RunConfig::new(Example::Berger { k: Some(1.0), c: 0.8, n: 1 });
        cfg.suites = vec![Suite::BundleRicci, Suite::ACondition];
        cfg.tolerances.insert(Suite::Geodesics, 1e-5);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"K\":1.0") && text.contains("bundle-ricci"));
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let minimal = RunConfig::from_json(r#"{"example":{"name":"sphere","n":2,"r":1.0}}"#).unwrap();
        assert_eq!(minimal.samples, 200);
        assert!(RunConfig::from_json(r#"{"example":{"name":"sphere","n":2}}"#).is_err());
    }

    #[test]
    fn tolerance_flags() {
        assert_eq!(parse_tolerance("geodesics=1e-5").unwrap(), (Suite::Geodesics, 1e-5));
        assert!(parse_tolerance("geodesics").is_err());
        assert!(parse_tolerance("geodesics=-1").is_err());
        assert!(parse_tolerance("nope=1").is_err());
    }
}
