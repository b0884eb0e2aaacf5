//! Built-in geometries: flat boxes, round and perturbed spheres, Kähler–Einstein
//! bases, and Berger-type circle bundles `g_c = c²θ̄⊗θ̄ + p*g_*` over them.
//!
//! Bundles live on a trivialising chart `U × S¹` with fibre coordinate `t`
//! (periodic, nothing depends on it) and connection form `θ̄ = dt + a`,
//! `a = α·β`, where the base supplies a potential `β` with `dβ = −ω` and
//! `ω(X,Y) = ⟨X,JY⟩`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::analysis::{
    cyclic_residual_at, deformation_tensor, endo_matrix, endo_norm, form_norm, mat_vec, per_point, PointAnalysis,
    SampledResidual, PROPER_MIN,
};
use crate::chart::{inner, norm, Axis, ChartPatch, MetricFn, DEFAULT_SEED};
use crate::curvature::{
    covariant_along, exterior_derivative, exterior_from_jets, ricci_endomorphism, riemann, LocalGeometry,
};
use crate::error::{GeometryError, Result};
use crate::field::{EndoField, OneFormField, TwoFormField, VectorField};
use crate::jet::Jet;
use crate::tensor::{JetTensor, Slot};

pub type FormulaFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;

/// Residual gate for `dβ + ω` and `da + αω`.
pub const POTENTIAL_TOL: f64 = 1e-9;
/// Relative Einstein residual tolerated when measuring `α`.
pub const EINSTEIN_TOL: f64 = 1e-8;

fn gate_points(patch: &ChartPatch) -> Vec<Vec<f64>> {
    let mut pts = vec![patch.center()];
    pts.extend(patch.samples(16, DEFAULT_SEED));
    pts
}

fn identity_jets(x: &[Jet], n: usize) -> Vec<Jet> {
    (0..n * n).map(|k| x[0].lift(if k / n == k % n { 1.0 } else { 0.0 })).collect()
}

/// Euclidean metric on the unit box `[0,1]^n`.
pub fn flat_patch(n: usize) -> Result<ChartPatch> {
    if n == 0 {
        return Err(GeometryError::Construction("flat patch needs n >= 1".into()));
    }
    let names: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(ChartPatch::new(format!("flat R^{n}"), &refs, vec![Axis::bounded(0.0, 1.0); n], move |x| identity_jets(x, n)))
}

/// Round `S^n(r)` in hyperspherical coordinates `(ψ_1, …, ψ_{n−1}, φ)`,
/// polar angles in `[0.2, π − 0.2]`, `φ` periodic.
pub fn round_sphere_patch(n: usize, r: f64) -> Result<ChartPatch> {
    if n == 0 || !(r > 0.0) || !r.is_finite() {
        return Err(GeometryError::Construction(format!("round sphere needs n >= 1 and r > 0 (got n = {n}, r = {r})")));
    }
    let mut names: Vec<String> =
        if n == 2 { vec!["theta".into()] } else { (1..n).map(|k| format!("psi{k}")).collect() };
    names.push("phi".into());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut axes = vec![Axis::bounded(0.2, PI - 0.2); n - 1];
    axes.push(Axis::cyclic(-PI, PI));
    Ok(ChartPatch::new(format!("round S^{n}(r = {r})"), &refs, axes, move |x| {
        let mut out = vec![x[0].zero_like(); n * n];
        let mut w = x[0].lift(r * r);
        for k in 0..n {
            out[k * n + k] = w.clone();
            if k + 1 < n {
                w = &w * &x[k].sin().square();
            }
        }
        out
    }))
}

/// `diag(1, (1 + ε sin θ)² sin² θ)`: a surface of revolution with
/// non-constant Gauss curvature for `ε ≠ 0`.
pub fn perturbed_sphere_patch(epsilon: f64) -> Result<ChartPatch> {
    if !(epsilon.abs() < 0.5) {
        return Err(GeometryError::Construction(format!("perturbation must satisfy |eps| < 0.5 (got {epsilon})")));
    }
    Ok(ChartPatch::new(
        format!("perturbed S^2 (eps = {epsilon})"),
        &["theta", "phi"],
        vec![Axis::bounded(0.2, PI - 0.2), Axis::cyclic(-PI, PI)],
        move |x| {
            let f = (x[0].sin() * epsilon + 1.0) * x[0].sin();
            vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), f.square()]
        },
    ))
}

// ---------------------------------------------------------------------------
// Kähler–Einstein bases

#[derive(Clone)]
pub struct KaehlerBaseSpec {
    pub complex_dim: usize,
    pub patch: ChartPatch,
    pub j: EndoField,
    /// `ω(X,Y) = ⟨X,JY⟩`.
    pub kaehler_form: TwoFormField,
    /// Potential `β` with `dβ = −ω`.
    pub potential: OneFormField,
    /// Measured at the chart centre.
    pub scalar_curvature: f64,
    /// `τ_* / 2n`.
    pub alpha: f64,
    /// Worst relative Einstein residual seen while measuring `α`.
    pub einstein_residual: f64,
    metric_fn: Arc<MetricFn>,
    j_fn: Arc<FormulaFn>,
    beta_fn: Arc<FormulaFn>,
}

impl std::fmt::Debug for KaehlerBaseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KaehlerBaseSpec")
            .field("patch", &self.patch)
            .field("complex_dim", &self.complex_dim)
            .field("scalar_curvature", &self.scalar_curvature)
            .field("alpha", &self.alpha)
            .finish()
    }
}

fn omega_formula(n: usize, metric: Arc<MetricFn>, j: Arc<FormulaFn>) -> impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync {
    move |x: &[Jet]| {
        let g = metric(x);
        let jm = j(x);
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let mut acc = x[0].zero_like();
                for a in 0..n {
                    acc += &g[i * n + a] * &jm[a * n + k];
                }
                out.push(acc);
            }
        }
        out
    }
}

fn build_base(
    complex_dim: usize,
    patch: ChartPatch,
    j_fn: Arc<FormulaFn>,
    beta_fn: Arc<FormulaFn>,
) -> Result<KaehlerBaseSpec> {
    let n = 2 * complex_dim;
    let metric_fn = patch.metric_formula();
    let j = {
        let f = j_fn.clone();
        EndoField::from_formula(n, move |x| f(x))
    };
    let kaehler_form = TwoFormField::from_formula(n, omega_formula(n, metric_fn.clone(), j_fn.clone()));
    let potential = {
        let f = beta_fn.clone();
        OneFormField::from_formula(n, move |x| f(x))
    };
    let tau = riemann(&patch, &patch.center())?.scalar;
    if !(tau.abs() > 1e-12) {
        return Err(GeometryError::Construction(format!("base scalar curvature vanishes ({tau:.3e})")));
    }
    let alpha = tau / n as f64;
    let mut einstein_residual: f64 = 0.0;
    for x in gate_points(&patch) {
        let e = einstein_at(&patch, &x, alpha)?;
        einstein_residual = einstein_residual.max(e);
        let p = potential_residual_at(&patch, &potential, &kaehler_form, &x, 1.0)?;
        if !(p <= POTENTIAL_TOL) {
            return Err(GeometryError::Construction(format!("potential check dβ + ω = {p:.3e} at {x:?}")));
        }
    }
    if !(einstein_residual <= EINSTEIN_TOL) {
        return Err(GeometryError::Construction(format!(
            "base is not Einstein: relative residual {einstein_residual:.3e}"
        )));
    }
    Ok(KaehlerBaseSpec {
        complex_dim,
        patch,
        j,
        kaehler_form,
        potential,
        scalar_curvature: tau,
        alpha,
        einstein_residual,
        metric_fn,
        j_fn,
        beta_fn,
    })
}

/// `∥ρ − αg∥ / ∥g∥`.
fn einstein_at(patch: &ChartPatch, x: &[f64], alpha: f64) -> Result<f64> {
    let curv = riemann(patch, x)?;
    let g = &curv.metric;
    let ginv = g.clone().try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
    Ok(form_norm(&(&curv.ricci - g * alpha), &ginv) / form_norm(g, &ginv))
}

/// `∥d(form) + s·ω∥` at a point.
fn potential_residual_at(
    patch: &ChartPatch,
    form: &OneFormField,
    omega: &TwoFormField,
    x: &[f64],
    s: f64,
) -> Result<f64> {
    let d = exterior_derivative(patch, x, form)?;
    let w = omega.value(x)?;
    let n = patch.dim();
    let ginv = patch.metric_value(x)?.try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
    let diff = DMatrix::from_fn(n, n, |i, j| d[(i, j)] + s * w.comps[i * n + j]);
    Ok(form_norm(&diff, &ginv))
}

/// Fubini–Study metric on one affine chart `z ∈ [−1,1]^{2n}` of `CP^n`,
/// coordinates `(x_1, y_1, …, x_n, y_n)`, scaled by `scale`.
pub fn fubini_study_scaled(n: usize, scale: f64) -> Result<KaehlerBaseSpec> {
    if n == 0 || !(scale > 0.0) || !scale.is_finite() {
        return Err(GeometryError::Construction(format!("Fubini-Study needs n >= 1 and scale > 0 (got {n}, {scale})")));
    }
    let m = 2 * n;
    let names: Vec<String> = (1..=n).flat_map(|k| [format!("x{k}"), format!("y{k}")]).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let patch = ChartPatch::new(format!("CP^{n} affine chart"), &refs, vec![Axis::bounded(-1.0, 1.0); m], move |x| {
        // h_ab = δ_ab q − conj(z_a) z_b q², q = 1/(1 + |z|²);
        // g(∂x_a,∂x_b) = g(∂y_a,∂y_b) = Re h_ab, g(∂x_a,∂y_b) = Im h_ab.
        let mut r2 = x[0].zero_like();
        for c in x {
            r2 += c.square();
        }
        let q = (r2 + 1.0).recip();
        let q2 = q.square();
        let mut g = vec![x[0].zero_like(); m * m];
        for a in 0..n {
            for b in 0..n {
                let (xa, ya, xb, yb) = (&x[2 * a], &x[2 * a + 1], &x[2 * b], &x[2 * b + 1]);
                let mut re = -((xa * xb + ya * yb) * &q2);
                if a == b {
                    re += &q;
                }
                let im = -((xa * yb - ya * xb) * &q2);
                g[(2 * a) * m + 2 * b] = &re * scale;
                g[(2 * a + 1) * m + 2 * b + 1] = &re * scale;
                g[(2 * a) * m + 2 * b + 1] = &im * scale;
                g[(2 * a + 1) * m + 2 * b] = -(&im * scale);
            }
        }
        g
    });
    let j_fn: Arc<FormulaFn> = Arc::new(move |x: &[Jet]| {
        let mut out = vec![x[0].zero_like(); m * m];
        for k in 0..n {
            // J∂x = ∂y, J∂y = −∂x
            out[(2 * k + 1) * m + 2 * k] = x[0].lift(1.0);
            out[(2 * k) * m + 2 * k + 1] = x[0].lift(-1.0);
        }
        out
    });
    let beta_fn: Arc<FormulaFn> = Arc::new(move |x: &[Jet]| {
        // β = ½ Σ (x_k dy_k − y_k dx_k) / (1 + |z|²)
        let mut r2 = x[0].zero_like();
        for c in x {
            r2 += c.square();
        }
        let q = (r2 + 1.0).recip() * (0.5 * scale);
        let mut out = Vec::with_capacity(m);
        for k in 0..n {
            out.push(-(&x[2 * k + 1] * &q));
            out.push(&x[2 * k] * &q);
        }
        out
    });
    build_base(n, patch, j_fn, beta_fn)
}

/// Unit-scale Fubini–Study base (`α = 2(n+1)`).
pub fn fubini_study_base(n: usize) -> Result<KaehlerBaseSpec> {
    fubini_study_scaled(n, 1.0)
}

/// Fubini–Study rescaled so that `α` takes the given positive value.
pub fn fubini_study_with_alpha(n: usize, alpha: f64) -> Result<KaehlerBaseSpec> {
    if !(alpha > 0.0) {
        return Err(GeometryError::Construction(format!("Fubini-Study bases have alpha > 0 (requested {alpha})")));
    }
    fubini_study_scaled(n, 2.0 * (n as f64 + 1.0) / alpha)
}

/// Surface of constant curvature `K ≠ 0`: the round sphere of radius `1/√K`
/// for `K > 0`, the half-plane `(dx² + dy²)/(|K| y²)` for `K < 0`.
pub fn surface_base(k: f64) -> Result<KaehlerBaseSpec> {
    if !(k.abs() > 0.0) || !k.is_finite() {
        return Err(GeometryError::Construction(format!("surface base needs K != 0 (got {k})")));
    }
    if k > 0.0 {
        let patch = ChartPatch::new(
            format!("S^2(K = {k})"),
            &["theta", "phi"],
            vec![Axis::bounded(0.2, PI - 0.2), Axis::cyclic(-PI, PI)],
            move |x| vec![x[0].lift(1.0 / k), x[0].lift(0.0), x[0].lift(0.0), x[0].sin().square() * (1.0 / k)],
        );
        // J∂θ = ∂φ / sin θ, J∂φ = −sin θ ∂θ: rotation by +90° in the frame (∂θ, ∂φ/sin θ).
        let j_fn: Arc<FormulaFn> = Arc::new(|x: &[Jet]| {
            let s = x[0].sin();
            vec![x[0].lift(0.0), -&s, s.recip(), x[0].lift(0.0)]
        });
        let beta_fn: Arc<FormulaFn> = Arc::new(move |x: &[Jet]| vec![x[0].lift(0.0), x[0].cos() * (-1.0 / k)]);
        build_base(1, patch, j_fn, beta_fn)
    } else {
        let s = 1.0 / k.abs();
        let patch = ChartPatch::new(
            format!("H^2(K = {k})"),
            &["x", "y"],
            vec![Axis::cyclic(-1.0, 1.0), Axis::bounded(0.5, 2.0)],
            move |x| {
                let w = x[1].square().recip() * s;
                vec![w.clone(), x[0].lift(0.0), x[0].lift(0.0), w]
            },
        );
        let j_fn: Arc<FormulaFn> =
            Arc::new(|x: &[Jet]| vec![x[0].lift(0.0), x[0].lift(-1.0), x[0].lift(1.0), x[0].lift(0.0)]);
        let beta_fn: Arc<FormulaFn> = Arc::new(move |x: &[Jet]| vec![x[1].recip() * s, x[0].lift(0.0)]);
        build_base(1, patch, j_fn, beta_fn)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseInvariants {
    /// `∥J² + Id∥`.
    pub j_square: SampledResidual,
    /// `∥J^T g J − g∥`.
    pub hermitian: SampledResidual,
    /// `∥∇J∥`.
    pub kaehler: SampledResidual,
    /// `∥ρ − αg∥ / ∥g∥`.
    pub einstein: SampledResidual,
    /// `∥dβ + ω∥`.
    pub potential: SampledResidual,
}

pub fn base_invariants(base: &KaehlerBaseSpec, samples: &[Vec<f64>]) -> Result<BaseInvariants> {
    let data = per_point(samples, |x| {
        let geo = LocalGeometry::new(&base.patch, x, 1)?;
        let n = geo.n;
        let g = geo.metric_matrix();
        let ginv = g.clone().try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
        let jj = base.j.jets(x, 1)?;
        let jm = endo_matrix(&jj.value());
        let sq = endo_norm(&g, &ginv, &(&jm * &jm + DMatrix::identity(n, n)));
        let herm = form_norm(&(jm.transpose() * &g * &jm - &g), &ginv);
        let gf = crate::analysis::flat(&g);
        let gif = crate::analysis::flat(&ginv);
        let kae = geo.nabla(&jj).value().norm_g(&gf, &gif);
        let ein = einstein_at(&base.patch, x, base.alpha)?;
        let pot = potential_residual_at(&base.patch, &base.potential, &base.kaehler_form, x, 1.0)?;
        Ok((x.to_vec(), [sq, herm, kae, ein, pot]))
    })?;
    let pick = |k: usize| SampledResidual::collect(samples, &data.iter().map(|d| d.1[k]).collect::<Vec<_>>());
    Ok(BaseInvariants {
        j_square: pick(0),
        hermitian: pick(1),
        kaehler: pick(2),
        einstein: pick(3),
        potential: pick(4),
    })
}

// ---------------------------------------------------------------------------
// Berger bundles

#[derive(Clone, Debug)]
pub struct BergerBundleSpec {
    pub base: KaehlerBaseSpec,
    pub c: f64,
    pub patch: ChartPatch,
    /// `θ = c·θ̄`, the metric dual of `ξ`.
    pub theta: OneFormField,
    /// `θ̄ = dt + a`.
    pub theta_bar: OneFormField,
    /// Unit fibre field `ξ = ∂_t / c`.
    pub xi: VectorField,
    /// `ξ̄ = ∂_t`.
    pub xi_bar: VectorField,
    /// `a = α·β` on the base, `da = −αω`.
    pub connection_potential: OneFormField,
    /// Horizontal lift of `J`, zero on `ξ`.
    pub j_lift: EndoField,
}

pub fn berger_bundle(base: &KaehlerBaseSpec, c: f64) -> Result<BergerBundleSpec> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(GeometryError::Construction(format!("fibre scale must be positive (got {c})")));
    }
    let m = 2 * base.complex_dim;
    let big = m + 1;
    let alpha = base.alpha;
    let connection_potential = base.potential.scaled(alpha);
    for x in gate_points(&base.patch) {
        let r = potential_residual_at(&base.patch, &connection_potential, &base.kaehler_form, &x, alpha)?;
        if !(r <= POTENTIAL_TOL) {
            return Err(GeometryError::Construction(format!("connection potential check da + αω = {r:.3e} at {x:?}")));
        }
    }
    let c2 = c * c;
    let (metric_fn, beta_fn) = (base.metric_fn.clone(), base.beta_fn.clone());
    let mut names: Vec<String> = base.patch.coordinate_names().to_vec();
    names.push("t".into());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut axes = base.patch.axes().to_vec();
    axes.push(Axis::cyclic(0.0, 1.0));
    let patch =
        ChartPatch::new(format!("Berger bundle over {} (c = {c})", base.patch.label()), &refs, axes, move |x| {
            let gs = metric_fn(&x[..m]);
            let a: Vec<Jet> = beta_fn(&x[..m]).into_iter().map(|b| b * alpha).collect();
            let mut g = vec![x[0].zero_like(); big * big];
            for i in 0..m {
                for j in 0..m {
                    g[i * big + j] = &gs[i * m + j] + &a[i] * &a[j] * c2;
                }
                g[i * big + m] = &a[i] * c2;
                g[m * big + i] = &a[i] * c2;
            }
            g[m * big + m] = x[0].lift(c2);
            g
        });
    let beta_fn = base.beta_fn.clone();
    let theta_bar = OneFormField::from_formula(big, move |x| {
        let mut out: Vec<Jet> = beta_fn(&x[..m]).into_iter().map(|b| b * alpha).collect();
        out.push(x[0].lift(1.0));
        out
    });
    let theta = theta_bar.scaled(c);
    let xi_bar = VectorField::coordinate(big, m);
    let xi = xi_bar.scaled(1.0 / c);
    let (j_fn, beta_fn) = (base.j_fn.clone(), base.beta_fn.clone());
    let j_lift = EndoField::from_formula(big, move |x| {
        let jm = j_fn(&x[..m]);
        let a: Vec<Jet> = beta_fn(&x[..m]).into_iter().map(|b| b * alpha).collect();
        let mut out = vec![x[0].zero_like(); big * big];
        for i in 0..m {
            for j in 0..m {
                out[i * big + j] = jm[i * m + j].clone();
            }
        }
        // t-row: −a(J u) keeps the image horizontal.
        for j in 0..m {
            let mut acc = x[0].zero_like();
            for k in 0..m {
                acc -= &a[k] * &jm[k * m + j];
            }
            out[m * big + j] = acc;
        }
        out
    });
    Ok(BergerBundleSpec { base: base.clone(), c, patch, theta, theta_bar, xi, xi_bar, connection_potential, j_lift })
}

impl BergerBundleSpec {
    pub fn alpha(&self) -> f64 {
        self.base.alpha
    }

    pub fn complex_dim(&self) -> usize {
        self.base.complex_dim
    }

    /// `λ = ½ n c² α²`.
    pub fn lambda_formula(&self) -> f64 {
        0.5 * self.complex_dim() as f64 * self.c * self.c * self.alpha() * self.alpha()
    }

    /// `μ = α (1 − ½ α c²)`.
    pub fn mu_formula(&self) -> f64 {
        self.alpha() * (1.0 - 0.5 * self.alpha() * self.c * self.c)
    }

    /// `τ = τ_* − ½ n c² α²`.
    pub fn tau_formula(&self) -> f64 {
        self.base.scalar_curvature - self.lambda_formula()
    }

    /// `λ = μ`, i.e. `c² = 2/((n+1)α)`.
    pub fn is_einstein(&self) -> bool {
        let target = 2.0 / ((self.complex_dim() as f64 + 1.0) * self.alpha());
        (self.c * self.c - target).abs() <= 1e-9 * target.abs().max(1.0)
    }

    pub fn ricci_endomorphism(&self) -> EndoField {
        ricci_endomorphism(&self.patch)
    }

    pub fn base_point<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..2 * self.complex_dim()]
    }

    /// Horizontal lift `(u, −a(u))` of a base vector.
    pub fn horizontal_lift(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let a = self.connection_potential.value(self.base_point(x))?.comps;
        let mut out = u.to_vec();
        out.push(-a.iter().zip(u).map(|(p, q)| p * q).sum::<f64>());
        Ok(out)
    }

    /// g-orthonormal horizontal frame `(E_1, J̃E_1, E_2, J̃E_2, …)`.
    pub fn horizontal_frame(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let bx = self.base_point(x);
        let gs = self.base.patch.metric_value(bx)?;
        let jm = endo_matrix(&self.base.j.value(bx)?);
        let m = 2 * self.complex_dim();
        let mut base_frame: Vec<Vec<f64>> = Vec::with_capacity(m);
        for k in 0..m {
            if base_frame.len() == m {
                break;
            }
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            for _ in 0..2 {
                for e in &base_frame {
                    let c = inner(&gs, &v, e);
                    v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= c * ei);
                }
            }
            let nv = norm(&gs, &v);
            if nv < 1e-8 {
                continue;
            }
            let v: Vec<f64> = v.iter().map(|c| c / nv).collect();
            let jv = mat_vec(&jm, &v);
            base_frame.push(v);
            base_frame.push(jv);
        }
        if base_frame.len() != m {
            return Err(GeometryError::DegenerateFrame);
        }
        base_frame.iter().map(|u| self.horizontal_lift(x, u)).collect()
    }

    /// `(ξ, horizontal frame)`.
    pub fn adapted_frame(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut frame = vec![self.xi.value(x)?.comps];
        frame.extend(self.horizontal_frame(x)?);
        Ok(frame)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleInvariants {
    /// `|g(ξ,ξ) − 1|`.
    pub xi_unit: SampledResidual,
    /// `|θ(ξ) − 1|`.
    pub theta_xi: SampledResidual,
    /// `|θ̄(ξ̄) − 1|`.
    pub theta_bar_xi_bar: SampledResidual,
    /// `∥dθ̄ + α p*ω∥`.
    pub curvature_form: SampledResidual,
    /// Entrywise gap between the chart metric and `c²θ̄⊗θ̄ + p*g_*`.
    pub metric_formula: SampledResidual,
}

pub fn bundle_invariants(spec: &BergerBundleSpec, samples: &[Vec<f64>]) -> Result<BundleInvariants> {
    let m = 2 * spec.complex_dim();
    let big = m + 1;
    let data = per_point(samples, |x| {
        let g = spec.patch.metric_value(x)?;
        let ginv = g.clone().try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
        let xi = spec.xi.value(x)?.comps;
        let xib = spec.xi_bar.value(x)?.comps;
        let th = spec.theta.value(x)?.comps;
        let thb = spec.theta_bar.value(x)?.comps;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let unit = (inner(&g, &xi, &xi) - 1.0).abs();
        let txi = (dot(&th, &xi) - 1.0).abs();
        let tbx = (dot(&thb, &xib) - 1.0).abs();
        let dthb = exterior_derivative(&spec.patch, x, &spec.theta_bar)?;
        let w = spec.base.kaehler_form.value(spec.base_point(x))?.comps;
        let diff = DMatrix::from_fn(big, big, |i, j| {
            let pw = if i < m && j < m { w[i * m + j] } else { 0.0 };
            dthb[(i, j)] + spec.alpha() * pw
        });
        let curv = form_norm(&diff, &ginv);
        let gs = spec.base.patch.metric_value(spec.base_point(x))?;
        let formula = DMatrix::from_fn(big, big, |i, j| {
            let base = if i < m && j < m { gs[(i, j)] } else { 0.0 };
            spec.c * spec.c * thb[i] * thb[j] + base
        });
        let met = (formula - g).amax();
        Ok([unit, txi, tbx, curv, met])
    })?;
    let pick = |k: usize| SampledResidual::collect(samples, &data.iter().map(|d| d[k]).collect::<Vec<_>>());
    Ok(BundleInvariants {
        xi_unit: pick(0),
        theta_xi: pick(1),
        theta_bar_xi_bar: pick(2),
        curvature_form: pick(3),
        metric_formula: pick(4),
    })
}

// ---------------------------------------------------------------------------
// Submersion A-tensor

#[derive(Clone, Debug, PartialEq)]
pub struct OneillReport {
    /// `∥A_E F − (⟨E,TF⟩ξ + ⟨ξ,F⟩TE)∥` over the adapted frame.
    pub structure_identity: SampledResidual,
    /// `|∥A_U V∥² − ⟨V,TU⟩²|` over horizontal frame pairs.
    pub norm_identity: SampledResidual,
    /// `∥A_U V + ½ dθ(U,V) ξ∥` over horizontal frame pairs.
    pub curvature_form_relation: SampledResidual,
    /// `∥A_ξ ξ∥`.
    pub vertical_zero: SampledResidual,
    /// `∥∇_ξ ξ∥`.
    pub fibre_geodesic: SampledResidual,
    /// `∥A_{E_1} J̃E_1∥²` per sample.
    pub a_norm_sq: Vec<f64>,
}

fn constant_field(like: &Jet, v: &[f64]) -> JetTensor {
    JetTensor { n: v.len(), slots: vec![Slot::Up], comps: v.iter().map(|c| like.lift(*c)).collect() }
}

pub fn oneill_a_check(spec: &BergerBundleSpec, samples: &[Vec<f64>]) -> Result<OneillReport> {
    let data = per_point(samples, |x| {
        let geo = LocalGeometry::new(&spec.patch, x, 1)?;
        let n = geo.n;
        let g = geo.metric_matrix();
        let xi_j = spec.xi.jets(x, 1)?;
        let th_j = spec.theta.jets(x, 1)?;
        let xi = xi_j.value().comps;
        let th = th_j.value().comps;
        let nab_xi = geo.nabla(&xi_j).value();
        let t = DMatrix::from_fn(n, n, |i, k| nab_xi.get(&[k, i]));
        let vert = |w: &[f64]| -> Vec<f64> {
            let s: f64 = th.iter().zip(w).map(|(a, b)| a * b).sum();
            xi.iter().map(|c| c * s).collect()
        };
        let horiz = |w: &[f64]| -> Vec<f64> { w.iter().zip(vert(w)).map(|(a, b)| a - b).collect() };
        let like = &xi_j.comps[0];
        let a_of = |e: &[f64], f: &[f64]| -> Vec<f64> {
            let fc = constant_field(like, f);
            // θ(F) ξ and F − θ(F) ξ as first-order fields.
            let mut s = like.zero_like();
            for j in 0..n {
                s += &th_j.comps[j] * &fc.comps[j];
            }
            let vf = JetTensor { n, slots: vec![Slot::Up], comps: (0..n).map(|i| &xi_j.comps[i] * &s).collect() };
            let hf =
                JetTensor { n, slots: vec![Slot::Up], comps: (0..n).map(|i| &fc.comps[i] - &vf.comps[i]).collect() };
            let eh = constant_field(like, &horiz(e));
            let p1 = vert(&covariant_along(&geo, &eh, &hf));
            let p2 = horiz(&covariant_along(&geo, &eh, &vf));
            p1.iter().zip(&p2).map(|(a, b)| a + b).collect()
        };
        let frame = spec.adapted_frame(x)?;
        let dth = exterior_from_jets(&th_j);
        let mut structure: f64 = 0.0;
        for e in &frame {
            for f in &frame {
                let a = a_of(e, f);
                let tf = mat_vec(&t, f);
                let te = mat_vec(&t, e);
                let c1 = inner(&g, e, &tf);
                let c2 = inner(&g, &xi, f);
                let diff: Vec<f64> = (0..n).map(|i| a[i] - c1 * xi[i] - c2 * te[i]).collect();
                structure = structure.max(norm(&g, &diff));
            }
        }
        let mut norm_id: f64 = 0.0;
        let mut relation: f64 = 0.0;
        for u in &frame[1..] {
            for v in &frame[1..] {
                let a = a_of(u, v);
                let tu = mat_vec(&t, u);
                norm_id = norm_id.max((inner(&g, &a, &a) - inner(&g, v, &tu).powi(2)).abs());
                let w: f64 =
                    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dth[(i, j)] * u[i] * v[j]).sum();
                let diff: Vec<f64> = (0..n).map(|i| a[i] + 0.5 * w * xi[i]).collect();
                relation = relation.max(norm(&g, &diff));
            }
        }
        let axx = a_of(&xi, &xi);
        let vz = norm(&g, &axx);
        let fg = norm(&g, &covariant_along(&geo, &xi_j, &xi_j));
        let auv = a_of(&frame[1], &frame[2]);
        let auv_sq = inner(&g, &auv, &auv);
        Ok((x.to_vec(), [structure, norm_id, relation, vz, fg], auv_sq))
    })?;
    let pick = |k: usize| SampledResidual::collect(samples, &data.iter().map(|d| d.1[k]).collect::<Vec<_>>());
    Ok(OneillReport {
        structure_identity: pick(0),
        norm_identity: pick(1),
        curvature_form_relation: pick(2),
        vertical_zero: pick(3),
        fibre_geodesic: pick(4),
        a_norm_sq: data.iter().map(|d| d.2).collect(),
    })
}

// ---------------------------------------------------------------------------
// Bundle certificate

/// One verified claim: `pass ⇔ residual ≤ tolerance`. Lower-bound claims
/// encode `value ≥ threshold` as `residual = max(0, threshold − value)` with
/// zero tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub id: &'static str,
    pub anchor: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub value: Option<f64>,
    pub expected: Option<f64>,
    pub note: Option<String>,
    pub n_samples: usize,
    pub worst: Vec<(Vec<f64>, f64)>,
}

impl Claim {
    pub fn pass(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleCertificate {
    pub einstein: bool,
    pub claims: Vec<Claim>,
}

impl BundleCertificate {
    pub fn pass(&self) -> bool {
        self.claims.iter().all(Claim::pass)
    }

    pub fn failed(&self) -> Vec<&Claim> {
        self.claims.iter().filter(|c| !c.pass()).collect()
    }

    pub fn claim(&self, id: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.id == id)
    }
}

struct CertPoint {
    lambda: f64,
    mu: Option<f64>,
    pattern_ok: bool,
    alignment: f64,
    eigen_xi: f64,
    tau: f64,
    tau_identity: f64,
    t_sq: f64,
    t_vs_j: f64,
    cyclic: f64,
    nabla_s: f64,
    dtheta: f64,
    einstein: f64,
}

/// Ricci eigenstructure, scalar curvature, deformation tensor, cyclic
/// condition and properness of a bundle metric, each against its closed form.
pub fn bundle_certificate(spec: &BergerBundleSpec, samples: &[Vec<f64>], tolerance: f64) -> Result<BundleCertificate> {
    let ricci = spec.ricci_endomorphism();
    let t_field = deformation_tensor(&spec.patch, &spec.xi);
    let einstein = spec.is_einstein();
    let n = spec.complex_dim();
    let lam_f = spec.lambda_formula();
    let half_c_alpha = 0.5 * spec.c * spec.alpha();
    let pts = per_point(samples, |x| {
        let pa = PointAnalysis::new(&spec.patch, &ricci, x)?;
        let es = &pa.eigen;
        let xi = spec.xi.value(x)?.comps;
        let sxi = mat_vec(&pa.s, &xi);
        let rayleigh = inner(&pa.g, &sxi, &xi);
        let (lambda, mu, pattern_ok, alignment) = if einstein {
            let ok = es.count == 1 && es.multiplicities == [2 * n + 1];
            (es.eigenvalues[0], None, ok, 0.0)
        } else if es.count == 2 && es.multiplicities.contains(&1) && es.multiplicities.contains(&(2 * n)) {
            let iv = es.index_with_multiplicity(1).expect("checked");
            let v = &es.eigenbases[iv][0].components;
            let c = inner(&pa.g, v, &xi);
            let resid: Vec<f64> = v.iter().zip(&xi).map(|(a, b)| a - c * b).collect();
            (es.eigenvalues[iv], Some(es.eigenvalues[1 - iv]), true, norm(&pa.g, &resid))
        } else {
            (rayleigh, None, false, 1.0)
        };
        let eig_resid: Vec<f64> = sxi.iter().zip(&xi).map(|(a, b)| a - lam_f * b).collect();
        let eigen_xi = norm(&pa.g, &eig_resid);
        let tau = pa.s.trace();
        let tau_star = riemann(&spec.base.patch, spec.base_point(x))?.scalar;
        let t = endo_matrix(&t_field.value(x)?);
        let t_sq = endo_norm(&pa.g, &pa.ginv, &t).powi(2);
        let jl = endo_matrix(&spec.j_lift.value(x)?);
        let t_vs_j = endo_norm(&pa.g, &pa.ginv, &(&t - jl * half_c_alpha));
        let cyclic = cyclic_residual_at(&spec.patch, &ricci, x)?;
        let dth = exterior_derivative(&spec.patch, x, &spec.theta)?;
        let ein = form_norm(&(&pa.g * &pa.s - &pa.g * lam_f), &pa.ginv);
        Ok(CertPoint {
            lambda,
            mu,
            pattern_ok,
            alignment,
            eigen_xi,
            tau,
            tau_identity: (tau - (tau_star - t_sq)).abs(),
            t_sq,
            t_vs_j,
            cyclic,
            nabla_s: pa.nabla_s_norm(),
            dtheta: form_norm(&dth, &pa.ginv),
            einstein: ein,
        })
    })?;
    let count = samples.len();
    let mean = |f: &dyn Fn(&CertPoint) -> f64| pts.iter().map(f).sum::<f64>() / count.max(1) as f64;
    let residual =
        |f: &dyn Fn(&CertPoint) -> f64| SampledResidual::collect(samples, &pts.iter().map(f).collect::<Vec<_>>());
    let pattern_ok = pts.iter().all(|p| p.pattern_ok);
    let structural = if pattern_ok { 0.0 } else { 1.0 };
    let mk = |id: &'static str,
              anchor: &'static str,
              r: SampledResidual,
              tol: f64,
              value: Option<f64>,
              expected: Option<f64>| Claim {
        id,
        anchor,
        residual: r.max,
        tolerance: tol,
        value,
        expected,
        note: if einstein { Some("Einstein case".into()) } else { None },
        n_samples: r.n_samples,
        worst: r.worst,
    };
    let mut claims = Vec::new();
    let mut lam = residual(&|p| (p.lambda - lam_f).abs());
    lam.max = lam.max.max(structural);
    claims.push(mk(
        "vertical-eigenvalue",
        "vertical Ricci eigenvalue equals n c² α² / 2",
        lam,
        tolerance,
        Some(mean(&|p| p.lambda)),
        Some(lam_f),
    ));
    let align = if einstein { residual(&|p| p.eigen_xi) } else { residual(&|p| p.alignment.max(p.eigen_xi)) };
    claims.push(mk("vertical-eigenvector", "fibre direction is a Ricci eigenvector", align, tolerance, None, None));
    let mu_f = spec.mu_formula();
    let mut mu = residual(&|p| (p.mu.unwrap_or(p.lambda) - mu_f).abs());
    mu.max = mu.max.max(structural);
    claims.push(mk(
        "horizontal-eigenvalue",
        "horizontal Ricci eigenvalue equals α(1 − α c²/2)",
        mu,
        tolerance,
        Some(mean(&|p| p.mu.unwrap_or(p.lambda))),
        Some(mu_f),
    ));
    let tau_f = spec.tau_formula();
    claims.push(mk(
        "scalar-curvature",
        "scalar curvature equals τ_* − n c² α² / 2",
        residual(&|p| (p.tau - tau_f).abs()),
        tolerance,
        Some(mean(&|p| p.tau)),
        Some(tau_f),
    ));
    claims.push(mk(
        "scalar-identity",
        "scalar curvature equals τ_* − ∥T∥²",
        residual(&|p| p.tau_identity),
        tolerance,
        None,
        None,
    ));
    claims.push(mk(
        "deformation-norm",
        "∥T∥² equals the vertical eigenvalue n c² α² / 2",
        residual(&|p| (p.t_sq - lam_f).abs()),
        tolerance,
        Some(mean(&|p| p.t_sq)),
        Some(lam_f),
    ));
    claims.push(mk(
        "deformation-complex-structure",
        "T is c α / 2 times the lifted complex structure",
        residual(&|p| p.t_vs_j),
        tolerance,
        None,
        None,
    ));
    claims.push(mk(
        "a-condition",
        "Ricci endomorphism satisfies the cyclic condition",
        residual(&|p| p.cyclic),
        tolerance,
        None,
        None,
    ));
    if einstein {
        claims.push(mk("einstein-metric", "Ricci tensor is λ g", residual(&|p| p.einstein), tolerance, None, None));
        claims.push(mk(
            "properness",
            "Einstein case: Ricci endomorphism is parallel",
            residual(&|p| p.nabla_s),
            tolerance,
            None,
            None,
        ));
    } else {
        let ns_min = pts.iter().map(|p| p.nabla_s).fold(f64::INFINITY, f64::min);
        let dt_min = pts.iter().map(|p| p.dtheta).fold(f64::INFINITY, f64::min);
        let low = ns_min.min(dt_min);
        claims.push(Claim {
            id: "properness",
            anchor: "Ricci endomorphism is not parallel away from the Einstein value",
            residual: (PROPER_MIN - low).max(0.0),
            tolerance: 0.0,
            value: Some(low),
            expected: Some(PROPER_MIN),
            note: Some("lower bound on min(∥∇S∥, ∥dθ∥)".into()),
            n_samples: count,
            worst: Vec::new(),
        });
    }
    Ok(BundleCertificate { einstein, claims })
}

/// Sectional curvatures of the planes `(E_1, ξ)` and `(E_1, J̃E_1)` at `x`.
pub fn bundle_sectional_curvatures(spec: &BergerBundleSpec, x: &[f64]) -> Result<(f64, f64)> {
    let curv = riemann(&spec.patch, x)?;
    let frame = spec.adapted_frame(x)?;
    let vertical = crate::curvature::sectional_from(&curv, &frame[1], &frame[0])?;
    let horizontal = crate::curvature::sectional_from(&curv, &frame[1], &frame[2])?;
    Ok((vertical, horizontal))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionalReport {
    /// `|K(E, ξ) − ¼c²α²|`.
    pub vertical: SampledResidual,
    /// `|K(E, J̃E) − (K_*(e, Je) − ¾c²α²)|` with `e = dp(E)`.
    pub horizontal: SampledResidual,
    pub vertical_values: Vec<f64>,
    pub horizontal_values: Vec<f64>,
}

/// Vertical and horizontal sectional curvatures of a bundle metric against
/// the submersion formulas, using the base curvature at the projected point.
pub fn sectional_formulas(spec: &BergerBundleSpec, samples: &[Vec<f64>]) -> Result<SectionalReport> {
    let m = 2 * spec.complex_dim();
    let a2 = 0.25 * spec.c * spec.c * spec.alpha() * spec.alpha();
    let data = per_point(samples, |x| {
        let (kv, kh) = bundle_sectional_curvatures(spec, x)?;
        let frame = spec.horizontal_frame(x)?;
        let base = crate::curvature::sectional_curvature(
            &spec.base.patch,
            spec.base_point(x),
            &frame[0][..m],
            &frame[1][..m],
        )?;
        Ok([kv, kh, (kv - a2).abs(), (kh - (base - 3.0 * a2)).abs()])
    })?;
    Ok(SectionalReport {
        vertical: SampledResidual::collect(samples, &data.iter().map(|d| d[2]).collect::<Vec<_>>()),
        horizontal: SampledResidual::collect(samples, &data.iter().map(|d| d[3]).collect::<Vec<_>>()),
        vertical_values: data.iter().map(|d| d[0]).collect(),
        horizontal_values: data.iter().map(|d| d[1]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_patches_have_constant_curvature() {
        for (n, r, rho) in [(2, 1.0, 1.0), (2, 2.0, 0.25), (3, 1.0, 2.0)] {
            let p = round_sphere_patch(n, r).unwrap();
            for x in p.samples(10, 42) {
                let curv = riemann(&p, &x).unwrap();
                let g = p.metric_value(&x).unwrap();
                assert!((&curv.ricci - g * rho).amax() < 1e-12);
            }
        }
        let p = round_sphere_patch(2, 2.0).unwrap();
        assert!((riemann(&p, &[1.0, 0.0]).unwrap().scalar - 0.5).abs() < 1e-14);
    }

    #[test]
    fn perturbed_sphere_reduces_to_round_sphere() {
        let p = perturbed_sphere_patch(0.0).unwrap();
        let q = round_sphere_patch(2, 1.0).unwrap();
        assert_eq!(p.metric_value(&[1.0, 0.5]).unwrap(), q.metric_value(&[1.0, 0.5]).unwrap());
        assert!(perturbed_sphere_patch(0.5).is_err());
        let p = perturbed_sphere_patch(0.3).unwrap();
        let k1 = riemann(&p, &[0.8, 0.0]).unwrap().scalar;
        let k2 = riemann(&p, &[1.6, 0.0]).unwrap().scalar;
        assert!((k1 - k2).abs() > 1e-2);
    }

    #[test]
    fn surface_bases_measure_alpha() {
        let b = surface_base(1.0).unwrap();
        assert!((b.alpha - 1.0).abs() < 1e-12);
        let h = surface_base(-2.0).unwrap();
        assert!((h.alpha + 2.0).abs() < 1e-12);
        assert!(h.einstein_residual <= 1e-8);
        assert!(surface_base(0.0).is_err());
        let inv = base_invariants(&h, &h.patch.samples(20, 42)).unwrap();
        assert_eq!(inv.j_square.max, 0.0);
        assert!(inv.kaehler.max < 1e-8 && inv.hermitian.max < 1e-12 && inv.potential.max < 1e-9);
    }

    #[test]
    fn fubini_study_curve_is_a_quarter_sphere() {
        let b = fubini_study_base(1).unwrap();
        assert!((b.scalar_curvature - 8.0).abs() < 1e-10);
        assert!((b.alpha - 4.0).abs() < 1e-10);
        let inv = base_invariants(&b, &b.patch.samples(20, 42)).unwrap();
        assert!(inv.j_square.max < 1e-14 && inv.hermitian.max < 1e-12);
        assert!(inv.kaehler.max < 1e-8 && inv.einstein.max < 1e-8 && inv.potential.max < 1e-9);
    }

    #[test]
    fn berger_over_unit_sphere_matches_closed_forms() {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let samples = spec.patch.samples(12, 42);
        let cert = bundle_certificate(&spec, &samples, 1e-8).unwrap();
        assert!(cert.pass(), "{:#?}", cert.failed());
        assert!(!cert.einstein);
        assert!((cert.claim("vertical-eigenvalue").unwrap().value.unwrap() - 0.32).abs() < 1e-10);
        assert!((cert.claim("horizontal-eigenvalue").unwrap().value.unwrap() - 0.68).abs() < 1e-10);
        assert!((cert.claim("scalar-curvature").unwrap().value.unwrap() - 1.68).abs() < 1e-10);
        let (kv, kh) = bundle_sectional_curvatures(&spec, &samples[0]).unwrap();
        assert!((kv - 0.16).abs() < 1e-10 && (kh - 0.52).abs() < 1e-10);
        let inv = bundle_invariants(&spec, &samples).unwrap();
        assert!(inv.xi_unit.max < 1e-12 && inv.theta_xi.max < 1e-12 && inv.theta_bar_xi_bar.max < 1e-12);
        assert!(inv.curvature_form.max < 1e-9 && inv.metric_formula.max < 1e-14);
        let a = oneill_a_check(&spec, &samples).unwrap();
        assert!(a.structure_identity.max < 1e-10 && a.norm_identity.max < 1e-10);
        assert!(a.curvature_form_relation.max < 1e-10 && a.vertical_zero.max < 1e-12 && a.fibre_geodesic.max < 1e-12);
        assert!(a.a_norm_sq.iter().all(|v| (v - 0.16).abs() < 1e-10));
        let sec = sectional_formulas(&spec, &samples).unwrap();
        assert!(sec.vertical.max < 1e-10 && sec.horizontal.max < 1e-10);
    }

    #[test]
    fn einstein_fibre_scale_is_flagged() {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 1.0).unwrap();
        assert!(spec.is_einstein());
        let cert = bundle_certificate(&spec, &spec.patch.samples(8, 42), 1e-8).unwrap();
        assert!(cert.einstein && cert.pass(), "{:#?}", cert.failed());
        assert!((cert.claim("vertical-eigenvalue").unwrap().value.unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(cert.claims[0].note.as_deref(), Some("Einstein case"));
    }

    #[test]
    fn metric_does_not_depend_on_fibre_coordinate() {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let a = spec.patch.metric_value(&[1.0, 0.4, 0.1]).unwrap();
        let b = spec.patch.metric_value(&[1.0, 0.4, 0.7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let b = surface_base(1.0).unwrap();
        assert!(berger_bundle(&b, 0.0).is_err());
        assert!(berger_bundle(&b, -1.0).is_err());
        assert!(fubini_study_with_alpha(2, -1.0).is_err());
        assert!(flat_patch(0).is_err());
        assert!(round_sphere_patch(2, 0.0).is_err());
    }
}
