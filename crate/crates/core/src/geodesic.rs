//! Geodesic integration with an embedded Runge–Kutta 5(4) pair and drift of
//! quantities that should be conserved along the flow.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chart::{inner, ChartPatch};
use crate::constructions::BergerBundleSpec;
use crate::error::{GeometryError, Result};
use crate::field::{EndoField, VectorField};
use crate::jet::Jet;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    pub step_stats: StepStats,
    /// The curve reached the chart margin before `t_end`.
    pub exited: bool,
}

impl Trajectory {
    pub fn last(&self) -> &GeodesicState {
        self.states.last().expect("trajectories are nonempty")
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.states[0].t
    }
}

/// `Γ^k_ij` values from first-order metric jets.
fn christoffel_values(patch: &ChartPatch, x: &[f64]) -> Result<Vec<f64>> {
    let n = patch.dim();
    let jets = patch.metric_jets(x, 1)?;
    let g = DMatrix::from_fn(n, n, |i, j| jets[i * n + j].value());
    let ginv = g.try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
    let dg: Vec<Vec<f64>> = jets.iter().map(Jet::grad).collect();
    let d = |i: usize, j: usize, k: usize| dg[i * n + j][k];
    let mut first = vec![0.0; n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                first[(l * n + i) * n + j] = 0.5 * (d(l, j, i) + d(l, i, j) - d(i, j, l));
            }
        }
    }
    let mut gamma = vec![0.0; n * n * n];
    for k in 0..n {
        for l in 0..n {
            let w = ginv[(k, l)];
            if w == 0.0 {
                continue;
            }
            for ij in 0..n * n {
                gamma[k * n * n + ij] += w * first[l * n * n + ij];
            }
        }
    }
    Ok(gamma)
}

/// `(x, v) ↦ (v, −Γ(v,v))`.
fn rhs(patch: &ChartPatch, y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len() / 2;
    let (x, v) = y.split_at(n);
    if !y.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::NonFinite { what: "geodesic state", point: x.to_vec() });
    }
    let gamma = christoffel_values(patch, x)?;
    let mut out = v.to_vec();
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += gamma[(k * n + i) * n + j] * v[i] * v[j];
            }
        }
        out.push(-acc);
    }
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One step; returns the fifth-order solution and the embedded error vector.
fn dp_step(patch: &ChartPatch, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut ys = y.to_vec();
        for (r, kr) in k.iter().enumerate() {
            let a = A[s][r];
            if a != 0.0 {
                for i in 0..dim {
                    ys[i] += h * a * kr[i];
                }
            }
        }
        k.push(rhs(patch, &ys)?);
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0; dim];
    for s in 0..7 {
        for i in 0..dim {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    Ok((y5, err))
}

fn check_start(patch: &ChartPatch, x0: &[f64], v0: &[f64]) -> Result<()> {
    let n = patch.dim();
    if x0.len() != n {
        return Err(GeometryError::Dimension { expected: n, got: x0.len() });
    }
    if v0.len() != n {
        return Err(GeometryError::Dimension { expected: n, got: v0.len() });
    }
    if !v0.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::NonFinite { what: "initial velocity", point: x0.to_vec() });
    }
    if !patch.in_integration_region(x0) {
        return Err(GeometryError::DegenerateTrajectory { point: x0.to_vec() });
    }
    Ok(())
}

fn state(y: &[f64], t: f64) -> GeodesicState {
    let n = y.len() / 2;
    GeodesicState { x: y[..n].to_vec(), v: y[n..].to_vec(), t }
}

/// Adaptive integration of `x″ + Γ(x′,x′) = 0` on `[0, t_end]`. The scaled
/// local error `|e_i| / (1 + |y_i|)` of every accepted step is at most `tol`.
/// Leaving the integration region ends the curve early with `exited` set.
pub fn integrate_geodesic(patch: &ChartPatch, x0: &[f64], v0: &[f64], t_end: f64, tol: f64) -> Result<Trajectory> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(GeometryError::Precondition(format!("tolerance {tol:e} outside [1e-12, 1e-4]")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(GeometryError::Precondition(format!("t_end must be positive (got {t_end})")));
    }
    check_start(patch, x0, v0)?;
    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut t = 0.0;
    let speed = v0.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
    let mut h = (0.01 / speed).min(t_end);
    let mut states = vec![state(&y, 0.0)];
    let mut stats = StepStats::default();
    let mut exited = false;
    while t < t_end {
        if stats.accepted + stats.rejected >= MAX_STEPS {
            return Err(GeometryError::StepUnderflow { t });
        }
        h = h.min(t_end - t);
        let attempt = dp_step(patch, &y, h);
        let (y5, err) = match attempt {
            Ok(r) => r,
            // a stage left the chart: retry with a smaller step, then give up at the margin
            Err(GeometryError::OutsideDomain { .. }) if h > 1e-6 * (1.0 + t) => {
                stats.rejected += 1;
                h *= 0.25;
                continue;
            }
            Err(GeometryError::OutsideDomain { .. }) => {
                exited = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let e = err.iter().zip(&y).map(|(ei, yi)| ei.abs() / (1.0 + yi.abs())).fold(0.0, f64::max);
        if !e.is_finite() {
            return Err(GeometryError::NonFinite { what: "geodesic error estimate", point: y[..patch.dim()].to_vec() });
        }
        if e <= tol {
            let n = patch.dim();
            if !patch.in_integration_region(&y5[..n]) {
                if h > 1e-6 * (1.0 + t) {
                    h *= 0.25;
                    continue;
                }
                exited = true;
                break;
            }
            t = if t_end - t - h <= 1e-14 * t_end { t_end } else { t + h };
            y = y5;
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(e);
            states.push(state(&y, t));
        } else {
            stats.rejected += 1;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * (tol / e).powf(0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(GeometryError::StepUnderflow { t });
        }
    }
    if states.len() == 1 {
        return Err(GeometryError::DegenerateTrajectory { point: x0.to_vec() });
    }
    Ok(Trajectory { states, step_stats: stats, exited })
}

/// Fixed-step fifth-order integration, used to measure the convergence order.
pub fn integrate_geodesic_fixed(
    patch: &ChartPatch,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 || !(t_end > 0.0) {
        return Err(GeometryError::Precondition("fixed-step integration needs steps >= 1 and t_end > 0".into()));
    }
    check_start(patch, x0, v0)?;
    let h = t_end / steps as f64;
    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut states = vec![state(&y, 0.0)];
    let mut stats = StepStats::default();
    for s in 1..=steps {
        let (y5, err) = dp_step(patch, &y, h)?;
        if !patch.in_integration_region(&y5[..patch.dim()]) {
            return Ok(Trajectory { states, step_stats: stats, exited: true });
        }
        y = y5;
        stats.accepted += 1;
        stats.max_error = stats.max_error.max(err.iter().map(|e| e.abs()).fold(0.0, f64::max));
        states.push(state(&y, s as f64 * h));
    }
    Ok(Trajectory { states, step_stats: stats, exited: false })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    pub max_drift: f64,
    pub relative_drift: f64,
}

/// `max |Q(t) − Q(0)|` along the curve and its ratio to `max(|Q(0)|, 1e-12)`.
pub fn conserved_quantity_drift(traj: &Trajectory, q: impl Fn(&[f64], &[f64]) -> Result<f64> + Sync) -> Result<Drift> {
    let values: Vec<f64> = traj.states.par_iter().map(|s| q(&s.x, &s.v)).collect::<Result<_>>()?;
    let q0 = values[0];
    let max_drift = values.iter().map(|v| (v - q0).abs()).fold(0.0, f64::max);
    Ok(Drift { max_drift, relative_drift: max_drift / q0.abs().max(1e-12) })
}

/// `g(γ′, γ′)`.
pub fn energy_drift(patch: &ChartPatch, traj: &Trajectory) -> Result<Drift> {
    conserved_quantity_drift(traj, |x, v| Ok(inner(&patch.metric_value(x)?, v, v)))
}

/// `Φ(γ′, γ′) = g(Sγ′, γ′)` for an endomorphism field `S`.
pub fn quadratic_form_drift(patch: &ChartPatch, s: &EndoField, traj: &Trajectory) -> Result<Drift> {
    conserved_quantity_drift(traj, |x, v| {
        let g = patch.metric_value(x)?;
        let m = s.value(x)?;
        let n = v.len();
        let sv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m.comps[i * n + j] * v[j]).sum()).collect();
        Ok(inner(&g, &sv, v))
    })
}

/// `ρ(γ′, γ′)`, evaluated from the Ricci tensor directly.
pub fn ricci_form_drift(patch: &ChartPatch, traj: &Trajectory) -> Result<Drift> {
    conserved_quantity_drift(traj, |x, v| {
        let rho = crate::curvature::riemann(patch, x)?.ricci;
        Ok(inner(&rho, v, v))
    })
}

/// `g(ξ, γ′)` for a vector field `ξ`.
pub fn momentum_drift(patch: &ChartPatch, xi: &VectorField, traj: &Trajectory) -> Result<Drift> {
    conserved_quantity_drift(traj, |x, v| Ok(inner(&patch.metric_value(x)?, &xi.value(x)?.comps, v)))
}

/// Momentum of the fibre field of a bundle metric.
pub fn killing_momentum_drift(spec: &BergerBundleSpec, traj: &Trajectory) -> Result<Drift> {
    momentum_drift(&spec.patch, &spec.xi, traj)
}

/// Interior start points with velocities uniform on the unit g-sphere.
pub fn unit_speed_starts(patch: &ChartPatch, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = patch.dim();
    patch
        .samples(count, seed)
        .into_iter()
        .map(|x| {
            let g = patch.metric_value(&x)?;
            let chol =
                nalgebra::Cholesky::new(g.clone()).ok_or(GeometryError::NotPositiveDefinite { point: x.clone() })?;
            // v = L^{-T} z has g(v,v) = |z|² for the Cholesky factor g = L L^T
            let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            let z = &z / z.norm();
            let v = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or(GeometryError::IllConditioned { point: x.clone(), condition: f64::INFINITY })?;
            Ok((x, v.iter().copied().collect()))
        })
        .collect()
}

/// Integrates every start independently.
pub fn integrate_batch(
    patch: &ChartPatch,
    starts: &[(Vec<f64>, Vec<f64>)],
    t_end: f64,
    tol: f64,
) -> Result<Vec<Trajectory>> {
    starts.par_iter().map(|(x, v)| integrate_geodesic(patch, x, v, t_end, tol)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{berger_bundle, flat_patch, round_sphere_patch, surface_base};
    use std::f64::consts::PI;

    #[test]
    fn flat_geodesics_are_lines() {
        let p = flat_patch(3).unwrap();
        let x0 = [0.2, 0.3, 0.4];
        let v0 = [0.1, 0.05, -0.02];
        let tr = integrate_geodesic(&p, &x0, &v0, 5.0, 1e-10).unwrap();
        assert!(!tr.exited);
        for s in &tr.states {
            for k in 0..3 {
                assert!((s.x[k] - x0[k] - s.t * v0[k]).abs() < 1e-12);
                assert_eq!(s.v[k], v0[k]);
            }
        }
        assert_eq!(tr.last().t, 5.0);
    }

    #[test]
    fn flat_line_exits_the_box() {
        let p = flat_patch(2).unwrap();
        let tr = integrate_geodesic(&p, &[0.5, 0.5], &[1.0, 0.0], 5.0, 1e-10).unwrap();
        assert!(tr.exited);
        assert!(tr.last().x[0] <= 0.99 && tr.last().x[0] > 0.97);
        assert!(integrate_geodesic(&p, &[0.995, 0.5], &[1.0, 0.0], 1.0, 1e-10).is_err());
    }

    #[test]
    fn equator_is_a_closed_great_circle() {
        let p = round_sphere_patch(2, 1.0).unwrap();
        let tr = integrate_geodesic(&p, &[PI / 2.0, 0.0], &[0.0, 1.0], 2.0 * PI, 1e-10).unwrap();
        for s in &tr.states {
            assert!((s.x[0] - PI / 2.0).abs() < 1e-12);
        }
        assert!((tr.last().x[1] - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let p = round_sphere_patch(2, 1.0).unwrap();
        let x0 = [1.2, 0.3];
        let v0 = [0.3, 0.8];
        let fwd = integrate_geodesic(&p, &x0, &v0, 3.0, 1e-10).unwrap();
        let end = fwd.last();
        let back_v: Vec<f64> = end.v.iter().map(|c| -c).collect();
        let back = integrate_geodesic(&p, &end.x, &back_v, end.t, 1e-10).unwrap();
        for k in 0..2 {
            assert!((back.last().x[k] - x0[k]).abs() < 1e-6);
            assert!((back.last().v[k] + v0[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_step_convergence_is_high_order() {
        for p in [round_sphere_patch(2, 1.0).unwrap(), flat_patch(2).unwrap()] {
            let x0 = p.center();
            let v0 = if p.dim() == 2 && p.label().starts_with("round") { vec![0.4, 0.7] } else { vec![0.2, 0.1] };
            let e = |steps| {
                energy_drift(&p, &integrate_geodesic_fixed(&p, &x0, &v0, 2.0, steps).unwrap()).unwrap().max_drift
            };
            let (coarse, fine) = (e(10), e(20));
            assert!(fine <= coarse / 8.0 || coarse < 1e-14, "{coarse:e} {fine:e}");
        }
    }

    #[test]
    fn berger_energy_and_momentum_are_conserved() {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let starts = unit_speed_starts(&spec.patch, 4, 42).unwrap();
        for (x, v) in &starts {
            assert!((inner(&spec.patch.metric_value(x).unwrap(), v, v) - 1.0).abs() < 1e-12);
        }
        for tr in integrate_batch(&spec.patch, &starts, 10.0, 1e-10).unwrap() {
            assert!(energy_drift(&spec.patch, &tr).unwrap().relative_drift < 1e-9);
            assert!(killing_momentum_drift(&spec, &tr).unwrap().max_drift < 1e-8);
        }
    }

    #[test]
    fn vertical_geodesics_stay_vertical() {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let x0 = spec.patch.center();
        let v0 = spec.xi.value(&x0).unwrap().comps;
        let tr = integrate_geodesic(&spec.patch, &x0, &v0, 10.0, 1e-10).unwrap();
        for s in &tr.states {
            assert!(s.v[..2].iter().all(|c| c.abs() <= 1e-9));
        }
    }

    #[test]
    fn tolerance_bounds_are_enforced() {
        let p = flat_patch(2).unwrap();
        assert!(integrate_geodesic(&p, &[0.5, 0.5], &[0.1, 0.0], 1.0, 1e-3).is_err());
        assert!(integrate_geodesic(&p, &[0.5, 0.5], &[0.1, 0.0], 1.0, 1e-13).is_err());
    }
}
