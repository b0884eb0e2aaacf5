//! Builds the geometry behind a configured example.

use atensor_core::analysis::construct_s_from_killing;
use atensor_core::constructions::{
    berger_bundle, flat_patch, fubini_study_base, fubini_study_with_alpha, perturbed_sphere_patch, round_sphere_patch,
    surface_base, BergerBundleSpec, KaehlerBaseSpec,
};
use atensor_core::curvature::ricci_endomorphism;
use atensor_core::{ChartPatch, EndoField, VectorField};

use crate::config::Example;
use crate::error::CliResult;

/// Eigenvalues of the endomorphism built from the parallel field on flat space.
pub const FLAT_SUBJECT: (f64, f64) = (1.0, 2.0);

pub struct Geometry {
    pub patch: ChartPatch,
    /// The endomorphism field under test.
    pub subject: EndoField,
    pub subject_label: &'static str,
    /// Unit Killing field, when the example has one.
    pub xi: Option<VectorField>,
    pub base: Option<KaehlerBaseSpec>,
    pub bundle: Option<BergerBundleSpec>,
}

pub fn build(ex: &Example) -> CliResult<Geometry> {
    let ricci = |patch: ChartPatch| Geometry {
        subject: ricci_endomorphism(&patch),
        subject_label: "Ricci endomorphism",
        patch,
        xi: None,
        base: None,
        bundle: None,
    };
    Ok(match *ex {
        Example::Flat { n } => {
            let patch = flat_patch(n)?;
            let xi = VectorField::coordinate(n, 0);
            let (l, m) = FLAT_SUBJECT;
            let subject = construct_s_from_killing(&patch, &xi, l, m)?;
            Geometry {
                patch,
                subject,
                subject_label: "S with S(xi) = xi, S = 2 on xi-perp",
                xi: Some(xi),
                base: None,
                bundle: None,
            }
        }
        Example::Sphere { n, r } => ricci(round_sphere_patch(n, r)?),
        Example::Perturbed { eps } => ricci(perturbed_sphere_patch(eps)?),
        Example::Fubini { n } => {
            let base = fubini_study_base(n)?;
            let mut g = ricci(base.patch.clone());
            g.base = Some(base);
            g
        }
        Example::Berger { k, c, n } => {
            let base = match (n, k) {
                (1, Some(k)) => surface_base(k)?,
                (1, None) => surface_base(1.0)?,
                (_, Some(alpha)) => fubini_study_with_alpha(n, alpha)?,
                (_, None) => fubini_study_base(n)?,
            };
            let bundle = berger_bundle(&base, c)?;
            let mut g = ricci(bundle.patch.clone());
            g.xi = Some(bundle.xi.clone());
            g.base = Some(base);
            g.bundle = Some(bundle);
            g
        }
    })
}
