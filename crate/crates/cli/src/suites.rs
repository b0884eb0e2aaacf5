//! Verification suites. Each turns library residuals into check reports.

use atensor_core::analysis::{
    a_condition_residual, construct_s_from_killing, distribution_checks, eigenfield_identities, eigenstructure,
    eigenvalue_constancy, killing_and_t, killing_curvature_identities, mixed_derivative_residual,
    properness_certificate, Properness, SampledResidual, PARALLEL_MAX, PROPER_MIN,
};
use atensor_core::chart::inner;
use atensor_core::constructions::{
    base_invariants, bundle_certificate, bundle_invariants, oneill_a_check, sectional_formulas,
};
use atensor_core::curvature::{metric_compatibility_residual, riemann};
use atensor_core::geodesic::{
    energy_drift, integrate_batch, momentum_drift, quadratic_form_drift, unit_speed_starts, DEFAULT_TOL,
};
use atensor_core::oracle::{oracle_gaps, DEFAULT_STEP};
use atensor_core::{EndoField, GeometryError, Result};
use rayon::prelude::*;

use crate::config::{RunConfig, Suite};
use crate::geometry::Geometry;
use crate::report::CheckReport;

/// Algebraic identities evaluated from exact jets.
pub const ALGEBRAIC_TOL: f64 = 1e-8;
/// Integrator-limited drifts.
pub const DRIFT_TOL: f64 = 1e-6;
/// Energy drift of unit-speed geodesics.
pub const ENERGY_TOL: f64 = 1e-8;
/// Finite-difference agreement.
pub const ORACLE_TOL: f64 = 1e-6;
pub const ORACLE_POINTS: usize = 100;
pub const GEODESIC_COUNT: usize = 50;
pub const GEODESIC_TIME: f64 = 10.0;
/// Relative drift of the quadratic form above which a geodesic counts as a
/// clear violation.
pub const DRIFT_VIOLATION: f64 = 1e-3;

struct Ctx<'a> {
    suite: Suite,
    geo: &'a Geometry,
    points: Vec<Vec<f64>>,
    seed: u64,
}

impl Ctx<'_> {
    fn name(&self) -> &'static str {
        self.suite.name()
    }

    fn check(&self, check: &str, anchor: &str, r: &SampledResidual, tol: f64) -> CheckReport {
        CheckReport::new(self.name(), check, anchor, r.max, tol, r.n_samples).with_worst(&r.worst)
    }

    fn scalar(&self, check: &str, anchor: &str, residual: f64, tol: f64, n: usize) -> CheckReport {
        CheckReport::new(self.name(), check, anchor, residual, tol, n)
    }

    fn per_point(&self, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<SampledResidual> {
        let values: Vec<f64> = self.points.par_iter().map(|x| f(x)).collect::<Result<_>>()?;
        Ok(SampledResidual::collect(&self.points, &values))
    }
}

/// Runs the suite; a library error becomes a single failed check.
pub fn run_suite(suite: Suite, geo: &Geometry, cfg: &RunConfig) -> Vec<CheckReport> {
    let ctx = Ctx { suite, geo, points: geo.patch.samples(cfg.samples, cfg.seed), seed: cfg.seed };
    let result = match suite {
        Suite::Oracle => oracle(&ctx),
        Suite::Structure => structure(&ctx),
        Suite::ACondition => a_condition(&ctx),
        Suite::Eigenstructure => eigen(&ctx),
        Suite::Eigenfields => eigenfields(&ctx),
        Suite::Distributions => distributions(&ctx),
        Suite::Killing => killing(&ctx),
        Suite::KillingCurvature => killing_curvature(&ctx),
        Suite::Oneill => oneill(&ctx),
        Suite::BundleRicci => bundle_ricci(&ctx),
        Suite::Geodesics => geodesics(&ctx),
        Suite::Properness => properness(&ctx),
    };
    let mut checks = result.unwrap_or_else(|e| {
        vec![CheckReport::new(suite.name(), "evaluation", suite.anchor(), f64::INFINITY, 0.0, ctx.points.len())
            .with_note(e.to_string())]
    });
    if let Some(t) = cfg.tolerance(suite) {
        // structural checks (tolerance 0) keep their exact threshold
        for c in checks.iter_mut().filter(|c| c.tolerance > 0.0) {
            c.retolerance(t);
        }
    }
    checks
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| GeometryError::Precondition(format!("example has no {what}")))
}

fn oracle(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let patch = &ctx.geo.patch;
    let pts: Vec<Vec<f64>> = ctx.points.iter().take(ORACLE_POINTS).cloned().collect();
    let gaps: Vec<(f64, f64)> = pts.par_iter().map(|x| oracle_gaps(patch, x, DEFAULT_STEP)).collect::<Result<_>>()?;
    let gamma = SampledResidual::collect(&pts, &gaps.iter().map(|g| g.0).collect::<Vec<_>>());
    let riem = SampledResidual::collect(&pts, &gaps.iter().map(|g| g.1).collect::<Vec<_>>());
    let sym: Vec<[f64; 4]> = ctx
        .points
        .par_iter()
        .map(|x| {
            let c = riemann(patch, x)?;
            Ok([
                c.bianchi_residual(),
                c.antisymmetry_residual(),
                c.ricci_symmetry_residual(),
                metric_compatibility_residual(patch, x)?,
            ])
        })
        .collect::<Result<_>>()?;
    let pick = |k: usize| SampledResidual::collect(&ctx.points, &sym.iter().map(|s| s[k]).collect::<Vec<_>>());
    Ok(vec![
        ctx.check(
            "christoffel-differences",
            "jet Christoffel symbols match central differences (relative)",
            &gamma,
            ORACLE_TOL,
        ),
        ctx.check(
            "riemann-differences",
            "jet curvature tensor matches central differences (relative)",
            &riem,
            ORACLE_TOL,
        ),
        ctx.check("first-bianchi", "cyclic identity of the curvature tensor (relative)", &pick(0), ALGEBRAIC_TOL),
        ctx.check("antisymmetry", "antisymmetries of the curvature tensor (relative)", &pick(1), ALGEBRAIC_TOL),
        ctx.check("ricci-symmetry", "Ricci tensor is symmetric (relative)", &pick(2), ALGEBRAIC_TOL),
        ctx.check("metric-compatibility", "the connection preserves the metric", &pick(3), ALGEBRAIC_TOL),
    ])
}

fn structure(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    if let Some(base) = &ctx.geo.base {
        let pts = base.patch.samples(ctx.points.len(), ctx.seed);
        let inv = base_invariants(base, &pts)?;
        out.push(ctx.check("complex-structure", "J squares to minus the identity", &inv.j_square, 1e-10));
        out.push(ctx.check("hermitian", "J is orthogonal", &inv.hermitian, 1e-10));
        out.push(ctx.check("kaehler", "J is parallel", &inv.kaehler, ALGEBRAIC_TOL));
        out.push(
            ctx.check(
                "einstein-base",
                "base Ricci tensor is alpha times the metric (relative)",
                &inv.einstein,
                ALGEBRAIC_TOL,
            )
            .with_value(base.alpha, None)
            .with_note(format!(
                "measured alpha = {:.12}, base scalar curvature = {:.12}",
                base.alpha, base.scalar_curvature
            )),
        );
        out.push(ctx.check("potential", "d(potential) = -(Kaehler form)", &inv.potential, 1e-9));
    }
    if let Some(spec) = &ctx.geo.bundle {
        let inv = bundle_invariants(spec, &ctx.points)?;
        out.push(ctx.check("fibre-unit", "fibre field has unit length", &inv.xi_unit, 1e-12));
        out.push(ctx.check("theta-xi", "connection form evaluates to one on the fibre field", &inv.theta_xi, 1e-12));
        out.push(ctx.check(
            "theta-bar-xi-bar",
            "unscaled connection form on the fundamental field",
            &inv.theta_bar_xi_bar,
            1e-12,
        ));
        out.push(ctx.check(
            "curvature-form",
            "d(connection form) = -alpha (pulled back Kaehler form)",
            &inv.curvature_form,
            1e-9,
        ));
        out.push(ctx.check(
            "metric-formula",
            "metric equals c^2 theta (x) theta + pulled back base metric",
            &inv.metric_formula,
            1e-12,
        ));
        let patch = &spec.patch;
        let shift = ctx.per_point(|x| {
            let mut y = x.to_vec();
            *y.last_mut().expect("bundle charts are non-empty") += 0.37;
            Ok((patch.metric_value(x)? - patch.metric_value(&y)?).amax())
        })?;
        out.push(ctx.check("fibre-invariance", "metric does not depend on the fibre coordinate", &shift, 1e-12));
    }
    Ok(out)
}

fn a_condition(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let rep = a_condition_residual(&ctx.geo.patch, &ctx.geo.subject, &ctx.points, ALGEBRAIC_TOL)?;
    let (pts, vals): (Vec<_>, Vec<_>) = rep.per_point.into_iter().unzip();
    let r = SampledResidual::collect(&pts, &vals);
    Ok(vec![ctx
        .check(
            "cyclic-residual",
            "cyclic sum of the derivative of the quadratic form, relative to its size",
            &r,
            ALGEBRAIC_TOL,
        )
        .with_note(ctx.geo.subject_label)])
}

fn eigen(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let (patch, s) = (&ctx.geo.patch, &ctx.geo.subject);
    let per: Vec<(f64, f64, bool)> = ctx
        .points
        .par_iter()
        .map(|x| {
            let es = eigenstructure(patch, s, x)?;
            let g = es.metric();
            let m = s.value(x)?;
            let n = g.nrows();
            let scale = es.eigenvalues.iter().fold(0.0, |a: f64, l| a.max(l.abs())).max(1e-12);
            let mut pair: f64 = 0.0;
            for (lam, basis) in es.eigenvalues.iter().zip(&es.eigenbases) {
                for v in basis {
                    let v = &v.components;
                    let r: Vec<f64> =
                        (0..n).map(|i| (0..n).map(|j| m.comps[i * n + j] * v[j]).sum::<f64>() - lam * v[i]).collect();
                    pair = pair.max(inner(g, &r, &r).sqrt() / (scale * inner(g, v, v).sqrt()));
                }
            }
            let mut orth: f64 = 0.0;
            for a in 0..es.count {
                for b in a + 1..es.count {
                    for u in &es.eigenbases[a] {
                        for v in &es.eigenbases[b] {
                            orth = orth.max(inner(g, &u.components, &v.components).abs());
                        }
                    }
                }
            }
            Ok((pair, orth, es.borderline))
        })
        .collect::<Result<_>>()?;
    let n = ctx.points.len();
    let pair = SampledResidual::collect(&ctx.points, &per.iter().map(|p| p.0).collect::<Vec<_>>());
    let orth = SampledResidual::collect(&ctx.points, &per.iter().map(|p| p.1).collect::<Vec<_>>());
    let borderline = per.iter().filter(|p| p.2).count();
    let cons = eigenvalue_constancy(patch, s, &ctx.points)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(", ");
    let summary = format!("eigenvalues [{}] with multiplicities {:?}", fmt(&cons.medians), cons.multiplicities);
    let dev = cons.deviations.iter().fold(0.0, |a: f64, b| a.max(*b));
    let dir = cons.directional.iter().fold(0.0, |a: f64, b| a.max(*b));
    Ok(vec![
        ctx.scalar(
            "multiplicity-pattern",
            "number of distinct eigenvalues is locally constant",
            (n - cons.n_used) as f64,
            0.0,
            n,
        )
        .with_value(cons.multiplicities.len() as f64, None)
        .with_note(format!("{summary}; patterns {:?}", cons.patterns)),
        ctx.check("eigenpair-residual", "eigenvectors satisfy S v = lambda v (relative)", &pair, ALGEBRAIC_TOL),
        ctx.check("eigenspace-orthogonality", "eigenspaces of distinct eigenvalues are orthogonal", &orth, 1e-10),
        ctx.scalar(
            "borderline-points",
            "no eigenvalue gap is close to the clustering threshold",
            borderline as f64,
            0.0,
            n,
        ),
        ctx.scalar("eigenvalue-constancy", "eigenvalues are constant across samples", dev, ALGEBRAIC_TOL, cons.n_used)
            .with_note(format!("{summary}; deviations [{}]", fmt(&cons.deviations))),
        ctx.scalar(
            "eigenvalue-directional",
            "each eigenvalue is constant along its own eigendistribution",
            dir,
            ALGEBRAIC_TOL,
            cons.n_used,
        ),
    ])
}

fn eigenfields(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let r = eigenfield_identities(&ctx.geo.patch, &ctx.geo.subject, &ctx.points)?;
    let mut conn = ctx.check(
        "connection-identity",
        "<D_X X, Y> = (1/2) Y(lambda_i) / (lambda_j - lambda_i) for unit eigenfields X, Y",
        &r.connection_identity,
        ALGEBRAIC_TOL,
    );
    if r.skipped_pairs > 0 {
        conn = conn.with_note(format!("{} near-degenerate eigenvalue pairs skipped", r.skipped_pairs));
    }
    Ok(vec![
        ctx.check(
            "gradient-identity",
            "(D_X S) X = -(1/2) grad(lambda_i) for unit eigenfields X",
            &r.gradient_identity,
            ALGEBRAIC_TOL,
        ),
        conn,
    ])
}

fn classify(v: f64) -> Option<bool> {
    if v <= PARALLEL_MAX {
        Some(false)
    } else if v >= PROPER_MIN {
        Some(true)
    } else {
        None
    }
}

fn distributions(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let (patch, s) = (&ctx.geo.patch, &ctx.geo.subject);
    let es = eigenstructure(patch, s, &ctx.points[0])?;
    let mut out = Vec::new();
    for i in 0..es.count {
        let r = distribution_checks(patch, s, i, &ctx.points)?;
        let tag = format!("D{i}");
        out.push(ctx.check(
            &format!("{tag}-bracket-identity"),
            "(D_X S)Y - (D_Y S)X = (lambda I - S)[X, Y] on an eigendistribution",
            &r.bracket_identity,
            ALGEBRAIC_TOL,
        ));
        let vals = [r.integrability.max, r.autoparallel.max, r.nabla_s.max];
        let cls: Vec<Option<bool>> = vals.iter().map(|v| classify(*v)).collect();
        let agree = cls[0].is_some() && cls.iter().all(|c| *c == cls[0]);
        out.push(
            ctx.scalar(
                &format!("{tag}-vanish-together"),
                "integrability, autoparallelity and D S on the distribution vanish or persist together",
                if agree { 0.0 } else { 1.0 },
                0.0,
                r.integrability.n_samples,
            )
            .with_value(r.integrability.max, None)
            .with_note(format!(
                "eigenvalue {:.10} (multiplicity {}): integrability {:.3e}, autoparallel {:.3e}, D S {:.3e}",
                es.eigenvalues[i], r.multiplicity, vals[0], vals[1], vals[2]
            )),
        );
    }
    if es.count == 2 && ctx.geo.xi.is_some() {
        if let Some(i) = es.index_with_multiplicity(1) {
            let r = mixed_derivative_residual(patch, s, i, 1 - i, &ctx.points)?;
            out.push(ctx.check(
                "mixed-derivative",
                "(D_X S) Y = 0 for X in the line field and Y orthogonal to it",
                &r,
                ALGEBRAIC_TOL,
            ));
        }
    }
    Ok(out)
}

fn killing(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let xi = need(&ctx.geo.xi, "unit Killing field")?;
    let patch = &ctx.geo.patch;
    let r = killing_and_t(patch, xi, &ctx.points)?;
    let t_sq = r.t_norm_sq.clone();
    let idx: Vec<usize> = (0..ctx.points.len()).collect();
    let lam: Vec<f64> = idx
        .par_iter()
        .map(|&k| {
            let x = &ctx.points[k];
            let v = xi.value(x)?.comps;
            Ok((inner(&riemann(patch, x)?.ricci, &v, &v) - t_sq[k]).abs())
        })
        .collect::<Result<_>>()?;
    let lam = SampledResidual::collect(&ctx.points, &lam);
    let mean_t = t_sq.iter().sum::<f64>() / t_sq.len().max(1) as f64;
    let mut out = vec![
        ctx.check(
            "killing-residual",
            "Lie derivative of the metric along the field vanishes",
            &r.killing_residual,
            1e-9,
        ),
        ctx.check("unit-length", "the field has unit length", &r.unit_defect, 1e-10),
        ctx.check("t-antisymmetry", "deformation tensor T = D xi is skew", &r.t_antisymmetry, 1e-10),
        ctx.check("t-xi-zero", "T annihilates the field", &r.t_xi_zero, 1e-10),
        ctx.check(
            "orthogonal-preserved",
            "flow of the field preserves its orthogonal complement",
            &r.lie_preserves_orthogonal,
            1e-9,
        ),
        ctx.check("trace-identity", "trace of D T equals -|T|^2 xi", &r.trace_identity, ALGEBRAIC_TOL),
        ctx.check("lambda-is-t-norm", "Ricci(xi, xi) equals |T|^2", &lam, ALGEBRAIC_TOL).with_value(mean_t, None),
    ];
    if let Some(spec) = &ctx.geo.bundle {
        let want = spec.lambda_formula();
        let vals: Vec<f64> = t_sq.iter().map(|t| (t - want).abs()).collect();
        out.push(
            ctx.check(
                "t-norm-formula",
                "|T|^2 equals n c^2 alpha^2 / 2",
                &SampledResidual::collect(&ctx.points, &vals),
                ALGEBRAIC_TOL,
            )
            .with_value(mean_t, Some(want)),
        );
    }
    Ok(out)
}

fn killing_curvature(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let xi = need(&ctx.geo.xi, "unit Killing field")?;
    let r = killing_curvature_identities(&ctx.geo.patch, xi, &ctx.points)?;
    Ok(vec![
        ctx.check("curvature-identity", "R(X, xi)Y = (D_X T)Y (relative)", &r.curvature_identity, ALGEBRAIC_TOL),
        ctx.check("square-identity", "(D_X T) xi = -T^2 X (relative)", &r.square_identity, ALGEBRAIC_TOL),
        ctx.check("jacobi-identity", "<R(X, xi) xi, Y> = <TX, TY> (relative)", &r.jacobi_identity, ALGEBRAIC_TOL),
    ])
}

fn oneill(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let spec = need(&ctx.geo.bundle, "bundle metric")?;
    let a = oneill_a_check(spec, &ctx.points)?;
    let sec = sectional_formulas(spec, &ctx.points)?;
    let a2 = 0.25 * spec.c * spec.c * spec.alpha() * spec.alpha();
    let a_dev: Vec<f64> = a.a_norm_sq.iter().map(|v| (v - a2).abs()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(vec![
        ctx.check(
            "structure-identity",
            "A_E F = <E, TF> xi + <xi, F> TE over an adapted frame",
            &a.structure_identity,
            ALGEBRAIC_TOL,
        ),
        ctx.check("norm-identity", "|A_U V|^2 = <V, TU>^2 for horizontal U, V", &a.norm_identity, ALGEBRAIC_TOL),
        ctx.check(
            "curvature-form-relation",
            "A_U V = -(1/2) d theta(U, V) xi",
            &a.curvature_form_relation,
            ALGEBRAIC_TOL,
        ),
        ctx.check("vertical-zero", "A vanishes on the fibre field", &a.vertical_zero, ALGEBRAIC_TOL),
        ctx.check("fibres-geodesic", "fibres are geodesics: D_xi xi = 0", &a.fibre_geodesic, 1e-9),
        ctx.check(
            "a-norm-formula",
            "|A_U V|^2 = c^2 alpha^2 / 4 for orthonormal horizontal U, V = JU",
            &SampledResidual::collect(&ctx.points, &a_dev),
            ALGEBRAIC_TOL,
        )
        .with_value(mean(&a.a_norm_sq), Some(a2)),
        ctx.check(
            "vertical-sectional",
            "sectional curvature of vertical planes is c^2 alpha^2 / 4",
            &sec.vertical,
            ALGEBRAIC_TOL,
        )
        .with_value(mean(&sec.vertical_values), Some(a2)),
        ctx.check(
            "horizontal-sectional",
            "horizontal sectional curvature is base curvature minus 3 |A_U V|^2",
            &sec.horizontal,
            ALGEBRAIC_TOL,
        )
        .with_value(mean(&sec.horizontal_values), None),
    ])
}

fn bundle_ricci(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let spec = need(&ctx.geo.bundle, "bundle metric")?;
    let cert = bundle_certificate(spec, &ctx.points, ALGEBRAIC_TOL)?;
    Ok(cert
        .claims
        .iter()
        .map(|c| {
            let mut r =
                CheckReport::new(ctx.name(), c.id, c.anchor, c.residual, c.tolerance, c.n_samples).with_worst(&c.worst);
            r.value = c.value;
            r.expected = c.expected;
            r.note = c.note.clone();
            r
        })
        .collect())
}

fn geodesics(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let geo = ctx.geo;
    let patch = &geo.patch;
    let starts = unit_speed_starts(patch, GEODESIC_COUNT, ctx.seed)?;
    let trajs = integrate_batch(patch, &starts, GEODESIC_TIME, DEFAULT_TOL)?;
    let xs: Vec<Vec<f64>> = starts.iter().map(|s| s.0.clone()).collect();
    let energy: Vec<f64> =
        trajs.par_iter().map(|t| Ok(energy_drift(patch, t)?.relative_drift)).collect::<Result<_>>()?;
    let phi: Vec<f64> = trajs
        .par_iter()
        .map(|t| Ok(quadratic_form_drift(patch, &geo.subject, t)?.relative_drift))
        .collect::<Result<_>>()?;
    let exits = trajs.iter().filter(|t| t.exited).count();
    let violations = phi.iter().filter(|d| **d > DRIFT_VIOLATION).count();
    let n = trajs.len();
    let energy = SampledResidual::collect(&xs, &energy);
    let phi = SampledResidual::collect(&xs, &phi);
    let mut out = vec![
        ctx.check("energy-drift", "g(v, v) is constant along unit-speed geodesics (relative)", &energy, ENERGY_TOL)
            .with_note(format!("{exits} of {n} geodesics reached the chart margin before t = {GEODESIC_TIME}")),
        ctx.check("quadratic-form-drift", "Phi(v, v) is constant along geodesics (relative)", &phi, DRIFT_TOL)
            .with_note(format!(
                "{violations} of {n} geodesics drift by more than {DRIFT_VIOLATION:e}; S = {}",
                geo.subject_label
            )),
    ];
    if let Some(xi) = &geo.xi {
        // unit speed and unit field: the momentum is bounded by one, so the
        // absolute drift is the meaningful scale
        let mom: Vec<f64> =
            trajs.par_iter().map(|t| Ok(momentum_drift(patch, xi, t)?.max_drift)).collect::<Result<_>>()?;
        out.push(ctx.check(
            "killing-momentum",
            "g(xi, v) is constant along geodesics",
            &SampledResidual::collect(&xs, &mom),
            ENERGY_TOL,
        ));
    }
    let a = a_condition_residual(patch, &geo.subject, &xs, ALGEBRAIC_TOL)?;
    let conserved = phi.max <= DRIFT_TOL;
    let agree = a.pass == conserved;
    out.push(
        ctx.scalar(
            "a-condition-equivalence",
            "cyclic condition holds exactly when the quadratic form is conserved along geodesics",
            if agree { 0.0 } else { 1.0 },
            0.0,
            n,
        )
        .with_note(format!(
            "cyclic residual {:.3e} ({}), quadratic-form drift {:.3e} ({})",
            a.max_cyclic_residual,
            if a.pass { "holds" } else { "fails" },
            phi.max,
            if conserved { "conserved" } else { "not conserved" }
        )),
    );
    Ok(out)
}

fn properness_checks(ctx: &Ctx, s: &EndoField, prefix: &str, what: &str) -> Result<Vec<CheckReport>> {
    let patch = &ctx.geo.patch;
    let es = eigenstructure(patch, s, &ctx.points[0])?;
    let n = ctx.points.len();
    if es.count == 2 && es.index_with_multiplicity(1).is_some() {
        let cert = properness_certificate(patch, s, &ctx.points)?;
        let status = match cert.status {
            Properness::Parallel => "parallel",
            Properness::Proper => "proper",
            Properness::Inconclusive => "inconclusive",
        };
        Ok(vec![ctx
            .scalar(
                &format!("{prefix}norms-agree"),
                "|D S| and |d theta| of the line field's dual form vanish or persist together",
                if cert.consistent { 0.0 } else { 1.0 },
                0.0,
                n,
            )
            .with_value(cert.nabla_s_norm, None)
            .with_note(format!(
                "{what}: {status}; max |D S| = {:.3e}, max |d theta| = {:.3e}",
                cert.nabla_s_norm, cert.dtheta_norm
            ))])
    } else {
        let ns = ctx.per_point(|x| Ok(atensor_core::analysis::PointAnalysis::new(patch, s, x)?.nabla_s_norm()))?;
        Ok(vec![ctx
            .check(
                &format!("{prefix}parallel"),
                "an endomorphism without a simple line field is parallel",
                &ns,
                ALGEBRAIC_TOL,
            )
            .with_note(format!("{what}: multiplicities {:?}", es.multiplicities))])
    }
}

fn properness(ctx: &Ctx) -> Result<Vec<CheckReport>> {
    let geo = ctx.geo;
    let mut out = properness_checks(ctx, &geo.subject, "", geo.subject_label)?;
    if let Some(xi) = &geo.xi {
        let patch = &geo.patch;
        let s = construct_s_from_killing(patch, xi, 3.0, 7.0)?;
        let a = a_condition_residual(patch, &s, &ctx.points, ALGEBRAIC_TOL)?;
        let (pts, vals): (Vec<_>, Vec<_>) = a.per_point.into_iter().unzip();
        out.push(ctx.check(
            "constructed-a-condition",
            "S = 7 Id - 4 xi (x) xi built from the Killing field satisfies the cyclic condition",
            &SampledResidual::collect(&pts, &vals),
            ALGEBRAIC_TOL,
        ));
        out.extend(properness_checks(ctx, &s, "constructed-", "S from the Killing field, eigenvalues (3, 7)")?);
        let ns = ctx.per_point(|x| Ok(atensor_core::analysis::PointAnalysis::new(patch, &s, x)?.nabla_s_norm()))?;
        let t = killing_and_t(patch, xi, &ctx.points)?;
        let t_max = t.t_norm_sq.iter().fold(0.0, |a: f64, b| a.max(*b)).sqrt();
        let agree = classify(ns.max).is_some() && classify(ns.max) == classify(t_max);
        out.push(
            ctx.scalar(
                "constructed-parallel-iff-xi-parallel",
                "the constructed S is parallel exactly when the Killing field is",
                if agree { 0.0 } else { 1.0 },
                0.0,
                ctx.points.len(),
            )
            .with_note(format!("max |D S| = {:.3e}, max |D xi| = {:.3e}", ns.max, t_max)),
        );
    }
    Ok(out)
}
