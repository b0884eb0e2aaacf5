//! Coordinate patches with jet-evaluable metrics, and pointwise tensor algebra.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeometryError, Result};
use crate::jet::Jet;

/// Largest tolerated metric condition number.
pub const MAX_CONDITION: f64 = 1e10;
/// Fraction of each axis excluded from sampling on both sides.
pub const SAMPLE_MARGIN: f64 = 0.05;
/// Fraction of each axis excluded from geodesic integration on both sides.
pub const INTEGRATION_MARGIN: f64 = 0.01;
pub const DEFAULT_SEED: u64 = 42;

/// One coordinate range. A cyclic axis is one the metric is smooth along for
/// every real value (angles, fibre coordinates); only its range is used for
/// sampling, never for domain membership.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cyclic: bool,
}

impl Axis {
    pub fn bounded(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi, cyclic: false }
    }

    pub fn cyclic(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi, cyclic: true }
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub type MetricFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;

#[derive(Clone)]
pub struct ChartPatch {
    label: String,
    axes: Vec<Axis>,
    names: Vec<String>,
    metric: Arc<MetricFn>,
}

impl std::fmt::Debug for ChartPatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartPatch").field("label", &self.label).field("axes", &self.axes).finish()
    }
}

/// Metric value with its first and second coordinate partials, all row-major.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub g: DMatrix<f64>,
    /// `dg[k] = ∂_k g`.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[k][l] = ∂_k ∂_l g`.
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

/// A tangent vector in coordinate components.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base_point: Vec<f64>,
    pub components: Vec<f64>,
}

impl ChartPatch {
    pub fn new(
        label: impl Into<String>,
        names: &[&str],
        axes: Vec<Axis>,
        metric: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    ) -> ChartPatch {
        assert_eq!(names.len(), axes.len(), "one name per axis");
        assert!(!axes.is_empty(), "a chart needs at least one coordinate");
        assert!(axes.iter().all(|a| a.hi > a.lo), "empty coordinate range");
        ChartPatch {
            label: label.into(),
            axes,
            names: names.iter().map(|s| s.to_string()).collect(),
            metric: Arc::new(metric),
        }
    }

    /// Same chart and domain, different metric.
    pub fn with_metric(
        &self,
        label: impl Into<String>,
        metric: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    ) -> ChartPatch {
        ChartPatch { label: label.into(), axes: self.axes.clone(), names: self.names.clone(), metric: Arc::new(metric) }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// The metric as a formula in coordinate jets, for pullbacks.
    pub(crate) fn metric_formula(&self) -> Arc<MetricFn> {
        self.metric.clone()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().all(|v| v.is_finite())
            && self.axes.iter().zip(x).all(|(a, &v)| a.cyclic || (v > a.lo && v < a.hi))
    }

    /// Whether geodesic integration may continue at `x`.
    pub fn in_integration_region(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, &v)| {
            a.cyclic || (v >= a.lo + INTEGRATION_MARGIN * a.width() && v <= a.hi - INTEGRATION_MARGIN * a.width())
        })
    }

    /// Centre of the sampling box.
    pub fn center(&self) -> Vec<f64> {
        self.axes.iter().map(|a| 0.5 * (a.lo + a.hi)).collect()
    }

    /// Metric components as jets of the given order, without conditioning checks.
    pub fn metric_jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        if !self.contains(x) {
            return Err(GeometryError::OutsideDomain { point: x.to_vec() });
        }
        self.metric_jets_unchecked(x, order)
    }

    /// As [`metric_jets`](Self::metric_jets) but without the domain test; used by
    /// the integrator, whose trial stages may step slightly past the margin.
    pub(crate) fn metric_jets_unchecked(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let n = self.dim();
        let g = (self.metric)(&Jet::seeds(x, order));
        if g.len() != n * n {
            return Err(GeometryError::Dimension { expected: n * n, got: g.len() });
        }
        if !g.iter().all(Jet::is_finite) {
            return Err(GeometryError::NonFinite { what: "metric entry", point: x.to_vec() });
        }
        Ok(g)
    }

    pub fn metric_value(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let g = self.metric_jets(x, 0)?;
        Ok(DMatrix::from_fn(n, n, |i, j| g[i * n + j].value()))
    }

    /// Low-discrepancy interior points: a Halton sequence with a seeded
    /// random shift, mapped into the box shrunk by [`SAMPLE_MARGIN`].
    pub fn samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        (1..=count)
            .map(|i| {
                self.axes
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let u = (radical_inverse(i as u64, PRIMES[k % PRIMES.len()]) + shift[k]).fract();
                        let lo = a.lo + SAMPLE_MARGIN * a.width();
                        let hi = a.hi - SAMPLE_MARGIN * a.width();
                        lo + u * (hi - lo)
                    })
                    .collect()
            })
            .collect()
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Condition number of a symmetric positive definite matrix; error if not PD.
pub fn check_spd(g: &DMatrix<f64>, point: &[f64]) -> Result<f64> {
    let eig = SymmetricEigen::new(g.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 0.0) {
        return Err(GeometryError::NotPositiveDefinite { point: point.to_vec() });
    }
    let cond = max / min;
    if cond > MAX_CONDITION {
        return Err(GeometryError::IllConditioned { point: point.to_vec(), condition: cond });
    }
    Ok(cond)
}

/// Inverse of a row-major `n*n` jet matrix by Gauss–Jordan elimination with
/// partial pivoting on the values.
pub fn invert_jets(n: usize, m: &[Jet]) -> Result<Vec<Jet>> {
    let mut a: Vec<Jet> = m.to_vec();
    let mut inv: Vec<Jet> = (0..n * n).map(|k| m[0].lift(if k / n == k % n { 1.0 } else { 0.0 })).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r * n + col].value().abs().total_cmp(&a[s * n + col].value().abs()))
            .expect("non-empty range");
        if a[pivot * n + col].value().abs() < 1e-300 {
            return Err(GeometryError::Precondition("singular matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let p = a[col * n + col].recip();
        for j in 0..n {
            a[col * n + j] = &a[col * n + j] * &p;
            inv[col * n + j] = &inv[col * n + j] * &p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col].clone();
            if f.coefficients().iter().all(|c| *c == 0.0) {
                continue;
            }
            for j in 0..n {
                let da = &f * &a[col * n + j];
                a[r * n + j] -= da;
                let di = &f * &inv[col * n + j];
                inv[r * n + j] -= di;
            }
        }
    }
    Ok(inv)
}

/// Metric value and coordinate partials up to second order.
pub fn metric_at(patch: &ChartPatch, x: &[f64]) -> Result<MetricData> {
    let n = patch.dim();
    let jets = patch.metric_jets(x, 2)?;
    let g = DMatrix::from_fn(n, n, |i, j| jets[i * n + j].value());
    check_spd(&g, x)?;
    let grads: Vec<Vec<f64>> = jets.iter().map(Jet::grad).collect();
    let hess: Vec<Vec<f64>> = jets.iter().map(Jet::hess).collect();
    let dg = (0..n).map(|k| DMatrix::from_fn(n, n, |i, j| grads[i * n + j][k])).collect();
    let ddg =
        (0..n).map(|k| (0..n).map(|l| DMatrix::from_fn(n, n, |i, j| hess[i * n + j][k * n + l])).collect()).collect();
    Ok(MetricData { g, dg, ddg })
}

pub fn inner(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * u[i] * v[j];
        }
    }
    s
}

/// g-orthonormalise `seeds` (default: the coordinate basis), completing with
/// coordinate vectors when fewer than `n` seeds are given.
pub fn gram_schmidt_frame(patch: &ChartPatch, x: &[f64], seeds: Option<&[Vec<f64>]>) -> Result<Vec<TangentVector>> {
    let g = patch.metric_value(x)?;
    check_spd(&g, x)?;
    let vecs = orthonormalize(&g, seeds)?;
    Ok(vecs.into_iter().map(|components| TangentVector { base_point: x.to_vec(), components }).collect())
}

pub(crate) fn orthonormalize(g: &DMatrix<f64>, seeds: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
    let n = g.nrows();
    let given: Vec<Vec<f64>> = seeds.map(|s| s.to_vec()).unwrap_or_default();
    if given.len() > n || given.iter().any(|v| v.len() != n) {
        return Err(GeometryError::DegenerateFrame);
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    let push = |v: &[f64], out: &mut Vec<Vec<f64>>, strict: bool| -> Result<()> {
        let scale = inner(g, v, v).sqrt();
        let mut w = v.to_vec();
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for e in out.iter() {
                let c = inner(g, &w, e);
                w.iter_mut().zip(e).for_each(|(wi, ei)| *wi -= c * ei);
            }
        }
        let norm = inner(g, &w, &w).sqrt();
        if !(norm > 1e-10 * scale) || scale == 0.0 {
            return if strict { Err(GeometryError::DegenerateFrame) } else { Ok(()) };
        }
        out.push(w.iter().map(|c| c / norm).collect());
        Ok(())
    };
    for v in &given {
        push(v, &mut out, true)?;
    }
    for k in 0..n {
        if out.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        push(&e, &mut out, false)?;
    }
    if out.len() != n {
        return Err(GeometryError::DegenerateFrame);
    }
    Ok(out)
}

/// Frame matrix (vectors as columns, row-major) and its inverse.
pub fn frame_matrices(g: &DMatrix<f64>, frame: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = frame.len();
    let mut e = vec![0.0; n * n];
    for (a, v) in frame.iter().enumerate() {
        for i in 0..n {
            e[i * n + a] = v[i];
        }
    }
    // For an orthonormal frame the inverse is E^T g.
    let mut co = vec![0.0; n * n];
    for a in 0..n {
        for j in 0..n {
            co[a * n + j] = (0..n).map(|i| frame[a][i] * g[(i, j)]).sum();
        }
    }
    (e, co)
}

fn well_conditioned(patch: &ChartPatch, x: &[f64]) -> Result<DMatrix<f64>> {
    let g = patch.metric_value(x)?;
    check_spd(&g, x)?;
    Ok(g)
}

/// `g^{-1} Φ`: the endomorphism with `Φ(X, Y) = ⟨SX, Y⟩`.
pub fn raise_index(patch: &ChartPatch, x: &[f64], form: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = well_conditioned(patch, x)?;
    let chol = g.cholesky().ok_or_else(|| GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
    Ok(chol.solve(form))
}

/// `g S`, the inverse of [`raise_index`].
pub fn lower_index(patch: &ChartPatch, x: &[f64], endo: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(patch.metric_value(x)? * endo)
}

pub fn norm(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    inner(g, v, v).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> ChartPatch {
        ChartPatch::new(
            "S2",
            &["theta", "phi"],
            vec![Axis::bounded(0.2, std::f64::consts::PI - 0.2), Axis::cyclic(-3.0, 3.0)],
            |x| {
                let s = x[0].sin();
                vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), s.square()]
            },
        )
    }

    #[test]
    fn euclidean_metric_is_identity_with_zero_partials() {
        let flat = ChartPatch::new("R2", &["x", "y"], vec![Axis::bounded(0.0, 1.0); 2], |x| {
            vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].lift(1.0)]
        });
        let m = metric_at(&flat, &[0.3, 0.6]).unwrap();
        assert_eq!(m.g, DMatrix::identity(2, 2));
        assert!(m.dg.iter().all(|d| d.amax() == 0.0));
        assert!(m.ddg.iter().flatten().all(|d| d.amax() == 0.0));
    }

    #[test]
    fn sphere_metric_partials() {
        let p = sphere();
        let eq = metric_at(&p, &[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert!((eq.g[(1, 1)] - 1.0).abs() < 1e-15);
        assert!(eq.dg[0][(1, 1)].abs() < 1e-15);

        let third = std::f64::consts::FRAC_PI_3;
        let m = metric_at(&p, &[third, 0.4]).unwrap();
        // central differences, h = 1e-5
        let h = 1e-5;
        let gp = p.metric_value(&[third + h, 0.4]).unwrap()[(1, 1)];
        let gm = p.metric_value(&[third - h, 0.4]).unwrap()[(1, 1)];
        let fd = (gp - gm) / (2.0 * h);
        assert!((fd - 3f64.sqrt() / 2.0).abs() < 1e-8);
        assert!((m.dg[0][(1, 1)] - fd).abs() < 1e-8);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let p = sphere();
        assert!(matches!(p.metric_jets(&[0.1, 0.0], 1), Err(GeometryError::OutsideDomain { .. })));
        // cyclic axis never rejects
        assert!(p.metric_jets(&[1.0, 100.0], 1).is_ok());
    }

    #[test]
    fn non_finite_metric_is_an_evaluation_error() {
        let p = ChartPatch::new("bad", &["x"], vec![Axis::bounded(-1.0, 1.0)], |x| vec![x[0].recip()]);
        assert!(matches!(p.metric_jets(&[0.0], 0), Err(GeometryError::NonFinite { .. })));
    }

    #[test]
    fn ill_conditioned_metric_aborts() {
        let p = ChartPatch::new("thin", &["x", "y"], vec![Axis::bounded(0.0, 1.0); 2], |x| {
            vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].lift(1e-12)]
        });
        assert!(matches!(metric_at(&p, &[0.5, 0.5]), Err(GeometryError::IllConditioned { .. })));
    }

    #[test]
    fn sphere_frame_normalises_phi() {
        let p = sphere();
        let third = std::f64::consts::FRAC_PI_3;
        let f = gram_schmidt_frame(&p, &[third, 0.0], None).unwrap();
        assert!((f[0].components[0] - 1.0).abs() < 1e-15 && f[0].components[1].abs() < 1e-15);
        assert!((f[1].components[1] - 1.0 / third.sin()).abs() < 1e-14);
    }

    #[test]
    fn frame_rerun_is_identity_and_orthonormal() {
        let p = sphere();
        for x in p.samples(50, 7) {
            let g = p.metric_value(&x).unwrap();
            let seeds = vec![vec![0.3, 1.0], vec![1.0, -0.2]];
            let f = gram_schmidt_frame(&p, &x, Some(&seeds)).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    let d = inner(&g, &f[a].components, &f[b].components);
                    assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
            let again: Vec<Vec<f64>> = f.iter().map(|v| v.components.clone()).collect();
            let f2 = gram_schmidt_frame(&p, &x, Some(&again)).unwrap();
            for (u, v) in f.iter().zip(&f2) {
                for (a, b) in u.components.iter().zip(&v.components) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dependent_seeds_are_degenerate() {
        let p = sphere();
        let seeds = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(gram_schmidt_frame(&p, &[1.0, 0.0], Some(&seeds)), Err(GeometryError::DegenerateFrame));
    }

    #[test]
    fn raise_then_lower_round_trips() {
        let p = sphere();
        let x = [1.1, 0.3];
        let g = p.metric_value(&x).unwrap();
        assert!((raise_index(&p, &x, &g).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-14);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(raise_index(&p, &x, &zero).unwrap(), zero);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, -0.7]);
        let s = raise_index(&p, &x, &phi).unwrap();
        assert!((lower_index(&p, &x, &s).unwrap() - phi).amax() < 1e-14);
    }

    #[test]
    fn jet_inverse_matches_values_and_derivatives() {
        let p = sphere();
        let x = [0.9, 0.0];
        let g = p.metric_jets(&x, 2).unwrap();
        let inv = invert_jets(2, &g).unwrap();
        let s2 = 0.9f64.sin().powi(2);
        assert!((inv[3].value() - 1.0 / s2).abs() < 1e-13);
        // d/dθ (1/sin²θ) = -2 cosθ / sin³θ
        let d = -2.0 * 0.9f64.cos() / 0.9f64.sin().powi(3);
        assert!((inv[3].grad()[0] - d).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_inside_margin_and_are_deterministic() {
        let p = sphere();
        let a = p.samples(1000, 42);
        let b = p.samples(1000, 42);
        assert_eq!(a, b);
        for x in &a {
            assert!(p.contains(x));
            let g = p.metric_value(x).unwrap();
            assert!((g[(0, 1)] - g[(1, 0)]).abs() <= 1e-14);
            check_spd(&g, x).unwrap();
        }
        assert_ne!(a, p.samples(1000, 43));
    }
}
