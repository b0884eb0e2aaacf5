//! Central-difference reference values for the jet-based curvature pipeline.

use nalgebra::DMatrix;

use crate::chart::ChartPatch;
use crate::curvature::{christoffel, riemann};
use crate::error::{GeometryError, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

fn shifted(x: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] += h;
    y
}

/// `Γ^a_bc`, flat `(a·n + b)·n + c`, from metric values alone.
pub fn christoffel_fd(patch: &ChartPatch, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = patch.dim();
    let g = patch.metric_value(x)?;
    let ginv = g.try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?;
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|k| Ok((patch.metric_value(&shifted(x, k, h))? - patch.metric_value(&shifted(x, k, -h))?) / (2.0 * h)))
        .collect::<Result<_>>()?;
    let mut gamma = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                gamma[(a * n + b) * n + c] =
                    (0..n).map(|d| 0.5 * ginv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)])).sum();
            }
        }
    }
    Ok(gamma)
}

/// `R^l_ijk`, flat `((l·n + i)·n + j)·n + k`, from central differences of
/// Christoffel values.
pub fn riemann_fd(patch: &ChartPatch, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = patch.dim();
    let gamma = christoffel(patch, x)?;
    let g0 = gamma.as_slice();
    let dgamma: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let p = christoffel(patch, &shifted(x, k, h))?;
            let m = christoffel(patch, &shifted(x, k, -h))?;
            Ok(p.as_slice().iter().zip(m.as_slice()).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let gi = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut out = Vec::with_capacity(n.pow(4));
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = dgamma[j][gi(l, k, i)] - dgamma[k][gi(l, j, i)];
                    for m in 0..n {
                        acc += g0[gi(l, j, m)] * g0[gi(m, k, i)] - g0[gi(l, k, m)] * g0[gi(m, j, i)];
                    }
                    out.push(acc);
                }
            }
        }
    }
    Ok(out)
}

/// `max|a − b| / max(max|a|, 1e-12)`.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0, |m: f64, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0, |m: f64, (p, q)| m.max((p - q).abs())) / scale
}

/// Relative gaps `(Christoffel, Riemann)` between jets and differences at `x`.
pub fn oracle_gaps(patch: &ChartPatch, x: &[f64], h: f64) -> Result<(f64, f64)> {
    let jet_gamma = christoffel(patch, x)?;
    let fd_gamma = christoffel_fd(patch, x, h)?;
    let jet_riem = riemann(patch, x)?;
    let fd_riem = riemann_fd(patch, x, h)?;
    Ok((relative_gap(jet_gamma.as_slice(), &fd_gamma), relative_gap(&jet_riem.riemann.comps, &fd_riem)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{perturbed_sphere_patch, round_sphere_patch};

    #[test]
    fn jets_match_differences_on_spheres() {
        for p in [round_sphere_patch(3, 1.5).unwrap(), perturbed_sphere_patch(0.3).unwrap()] {
            for x in p.samples(10, 42) {
                let (a, b) = oracle_gaps(&p, &x, DEFAULT_STEP).unwrap();
                assert!(a < 1e-8 && b < 1e-7, "{a:e} {b:e}");
            }
        }
    }

    #[test]
    fn relative_gap_is_scale_free() {
        assert!((relative_gap(&[2.0, 4.0], &[2.0, 4.4]) - 0.1).abs() < 1e-12);
        assert_eq!(relative_gap(&[0.0], &[0.0]), 0.0);
    }
}
