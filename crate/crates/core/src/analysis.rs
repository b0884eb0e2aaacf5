//! Verification of the cyclic (A-)condition for endomorphism fields, their
//! eigenstructure, and the Killing-field machinery behind two-eigenvalue
//! A-tensors.
//!
//! `S` is always a `(1,1)` field with `Φ(X,Y) = ⟨SX,Y⟩`. `∇S(X,Y)` means
//! `(∇_X S)Y` and `T X = ∇_X ξ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::chart::{check_spd, inner, norm, orthonormalize, ChartPatch, TangentVector, DEFAULT_SEED};
use crate::curvature::{bracket, covariant_along, exterior_from_jets, LocalGeometry};
use crate::error::{GeometryError, Result};
use crate::field::{EndoField, VectorField};
use crate::jet::{layout, Jet};
use crate::tensor::{JetTensor, Slot, Tensor};

/// Relative asymmetry of `Φ` tolerated before refusing to analyse `S`.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Eigenvalues closer than `CLUSTER_REL · (spread + 1)` are merged.
pub const CLUSTER_REL: f64 = 1e-6;
/// Below this fraction of `∥Φ∥`, `∇Φ` is treated as round-off.
pub const NOISE_FLOOR: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-12;
/// Below this fraction of the terms that cancel in `∇Φ`, `∇Φ` is round-off.
pub const CANCELLATION_FLOOR: f64 = 1e-3;
pub const UNIT_TOL: f64 = 1e-10;
pub const KILLING_GATE: f64 = 1e-9;
pub const PARALLEL_MAX: f64 = 1e-8;
pub const PROPER_MIN: f64 = 1e-4;

/// Maximum of a per-point residual with the worst offenders.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledResidual {
    pub max: f64,
    pub n_samples: usize,
    /// Up to five `(point, value)` pairs, largest first.
    pub worst: Vec<(Vec<f64>, f64)>,
}

impl SampledResidual {
    pub fn collect(points: &[Vec<f64>], values: &[f64]) -> SampledResidual {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let worst = idx.iter().take(5).map(|&i| (points[i].clone(), values[i])).collect();
        let max = values.iter().fold(0.0, |m: f64, &v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) });
        SampledResidual { max, n_samples: values.len(), worst }
    }

    fn from_pairs(pairs: Vec<(Vec<f64>, f64)>) -> SampledResidual {
        let (points, values): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        SampledResidual::collect(&points, &values)
    }
}

pub(crate) fn per_point<T: Send>(samples: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<T> + Sync) -> Result<Vec<T>> {
    samples.par_iter().map(|x| f(x)).collect()
}

pub(crate) fn endo_matrix(t: &Tensor) -> DMatrix<f64> {
    let n = t.n;
    DMatrix::from_fn(n, n, |i, j| t.comps[i * n + j])
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

pub(crate) fn endo_norm(g: &DMatrix<f64>, ginv: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    // ∥S∥² = tr(S^T g S g^{-1})
    (m.transpose() * g * m * ginv).trace().max(0.0).sqrt()
}

pub(crate) fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n * n).map(|k| m[(k / n, k % n)]).collect()
}

fn symmetry_gate(phi: &DMatrix<f64>, x: &[f64]) -> Result<()> {
    let asym = (phi - phi.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * phi.amax().max(1.0)) {
        return Err(GeometryError::Precondition(format!(
            "endomorphism is not g-symmetric at {x:?} (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cyclic condition

#[derive(Clone, Debug, PartialEq)]
pub struct AConditionReport {
    pub max_cyclic_residual: f64,
    pub per_point: Vec<(Vec<f64>, f64)>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Cyclic sum `C_{kij} = ∇_kΦ_{ij} + ∇_jΦ_{ki} + ∇_iΦ_{jk}` and `∇Φ` at a point,
/// with the metric and its inverse.
pub fn cyclic_tensor(patch: &ChartPatch, s: &EndoField, x: &[f64]) -> Result<(Tensor, Tensor, Tensor)> {
    let (cyc, nphi, phi, _) = cyclic_parts(patch, s, x)?;
    Ok((cyc, nphi, phi))
}

/// Also returns the cancellation scale: the coordinate array of `|∂Φ| + |ΓΦ| + |ΦΓ|`
/// whose terms sum to `∇Φ`. Round-off in `∇Φ` is proportional to it.
fn cyclic_parts(patch: &ChartPatch, s: &EndoField, x: &[f64]) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    let sj = s.jets(x, 1)?;
    let phi = geo.lower_first(&sj);
    let phi_v = phi.value();
    symmetry_gate(&endo_matrix(&phi_v), x)?;
    let nphi = geo.nabla(&phi).value();
    let n = geo.n;
    let mut cyc = Tensor::zeros(n, vec![Slot::Down; 3]);
    let mut scale = Tensor::zeros(n, vec![Slot::Down; 3]);
    let grads: Vec<Vec<f64>> = phi.comps.iter().map(Jet::grad).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let v = nphi.get(&[k, i, j]) + nphi.get(&[j, k, i]) + nphi.get(&[i, j, k]);
                cyc.set(&[k, i, j], v);
                let mut mag = grads[i * n + j][k].abs();
                for m in 0..n {
                    mag += (geo.gamma(m, k, i).value() * phi_v.comps[m * n + j]).abs();
                    mag += (geo.gamma(m, k, j).value() * phi_v.comps[i * n + m]).abs();
                }
                scale.set(&[k, i, j], mag);
            }
        }
    }
    Ok((cyc, nphi, phi_v, scale))
}

/// `∥C∥ / max(∥∇Φ∥, NOISE_FLOOR·∥cancellation scale∥, ABS_FLOOR)` at one point.
pub fn cyclic_residual_at(patch: &ChartPatch, s: &EndoField, x: &[f64]) -> Result<f64> {
    let (cyc, nphi, _, cancel) = cyclic_parts(patch, s, x)?;
    let g = flat(&patch.metric_value(x)?);
    let ginv =
        flat(&patch.metric_value(x)?.try_inverse().ok_or(GeometryError::NotPositiveDefinite { point: x.to_vec() })?);
    let scale = nphi.norm_g(&g, &ginv).max(CANCELLATION_FLOOR * cancel.norm_g(&g, &ginv)).max(ABS_FLOOR);
    Ok(cyc.norm_g(&g, &ginv) / scale)
}

pub fn a_condition_residual(
    patch: &ChartPatch,
    s: &EndoField,
    samples: &[Vec<f64>],
    tolerance: f64,
) -> Result<AConditionReport> {
    let values = per_point(samples, |x| cyclic_residual_at(patch, s, x))?;
    let max = SampledResidual::collect(samples, &values).max;
    Ok(AConditionReport {
        max_cyclic_residual: max,
        per_point: samples.iter().cloned().zip(values).collect(),
        tolerance,
        pass: max <= tolerance,
    })
}

// ---------------------------------------------------------------------------
// Eigenstructure

#[derive(Clone, Debug)]
pub struct EigenStructure {
    pub point: Vec<f64>,
    /// Ascending cluster means.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// g-orthonormal bases of each eigenspace.
    pub eigenbases: Vec<Vec<TangentVector>>,
    pub count: usize,
    /// Some gap lies within a factor 10 of the clustering tolerance.
    pub borderline: bool,
    pub cluster_tol: f64,
    /// Smallest gap between distinct eigenvalues (infinite for one cluster).
    pub min_gap: f64,
    metric: DMatrix<f64>,
}

impl EigenStructure {
    /// Spectral projector onto `D_{λ_i}`: `Σ v ⊗ g(v, ·)`.
    pub fn projector(&self, i: usize) -> DMatrix<f64> {
        let n = self.metric.nrows();
        let mut p = DMatrix::zeros(n, n);
        for v in &self.eigenbases[i] {
            let gv = mat_vec(&self.metric, &v.components);
            for a in 0..n {
                for b in 0..n {
                    p[(a, b)] += v.components[a] * gv[b];
                }
            }
        }
        p
    }

    /// Index of the first eigenvalue with the given multiplicity.
    pub fn index_with_multiplicity(&self, m: usize) -> Option<usize> {
        self.multiplicities.iter().position(|&k| k == m)
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }
}

/// Eigen-decomposition of a g-symmetric endomorphism `s` (`s[(i,j)] = S^i_j`).
pub fn g_symmetric_eigen(g: &DMatrix<f64>, s: &DMatrix<f64>, point: &[f64]) -> Result<EigenStructure> {
    let n = g.nrows();
    check_spd(g, point)?;
    let phi = g * s;
    symmetry_gate(&phi, point)?;
    let sym = (&phi + phi.transpose()) * 0.5;
    let l = g.clone().cholesky().ok_or_else(|| GeometryError::NotPositiveDefinite { point: point.to_vec() })?.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| GeometryError::NotPositiveDefinite { point: point.to_vec() })?;
    let m = &linv * sym * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let w = eig.eigenvectors.column(k);
            let v = linv.transpose() * w;
            (eig.eigenvalues[k], v.iter().copied().collect())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spread = pairs[n - 1].0 - pairs[0].0;
    let tol = CLUSTER_REL * (spread + 1.0);
    let mut clusters: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
    let mut borderline = false;
    let mut min_gap = f64::INFINITY;
    for (k, pair) in pairs.into_iter().enumerate() {
        if k > 0 {
            let prev = clusters.last().and_then(|c| c.last()).map(|p| p.0).unwrap_or(pair.0);
            let gap = pair.0 - prev;
            if gap >= tol / 10.0 && gap <= 10.0 * tol {
                borderline = true;
            }
            if gap < tol {
                clusters.last_mut().expect("first pair opens a cluster").push(pair);
                continue;
            }
            min_gap = min_gap.min(gap);
        }
        clusters.push(vec![pair]);
    }
    let eigenvalues = clusters.iter().map(|c| c.iter().map(|p| p.0).sum::<f64>() / c.len() as f64).collect();
    let multiplicities = clusters.iter().map(Vec::len).collect();
    let eigenbases = clusters
        .into_iter()
        .map(|c| c.into_iter().map(|p| TangentVector { base_point: point.to_vec(), components: p.1 }).collect())
        .collect::<Vec<Vec<_>>>();
    Ok(EigenStructure {
        point: point.to_vec(),
        count: eigenbases.len(),
        eigenvalues,
        multiplicities,
        eigenbases,
        borderline,
        cluster_tol: tol,
        min_gap,
        metric: g.clone(),
    })
}

pub fn eigenstructure(patch: &ChartPatch, s: &EndoField, x: &[f64]) -> Result<EigenStructure> {
    let g = patch.metric_value(x)?;
    let sv = endo_matrix(&s.value(x)?);
    g_symmetric_eigen(&g, &sv, x)
}

/// Everything the distribution and eigenvalue checks need at one point.
pub struct PointAnalysis {
    pub geo: LocalGeometry,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// Coordinate partials `∂_k S`.
    pub ds: Vec<DMatrix<f64>>,
    /// `(∇_k S)^i_j` at `[k, i, j]`.
    pub nabla_s: Tensor,
    pub eigen: EigenStructure,
}

impl PointAnalysis {
    pub fn new(patch: &ChartPatch, s: &EndoField, x: &[f64]) -> Result<PointAnalysis> {
        let geo = LocalGeometry::new(patch, x, 1)?;
        let sj = s.jets(x, 1)?;
        let n = geo.n;
        let g = geo.metric_matrix();
        let ginv = DMatrix::from_fn(n, n, |i, j| geo.ginv[i * n + j].value());
        let sv = endo_matrix(&sj.value());
        let grads: Vec<Vec<f64>> = sj.comps.iter().map(Jet::grad).collect();
        let ds = (0..n).map(|k| DMatrix::from_fn(n, n, |i, j| grads[i * n + j][k])).collect();
        let nabla_s = geo.nabla(&sj).value();
        let eigen = g_symmetric_eigen(&g, &sv, x)?;
        Ok(PointAnalysis { geo, g, ginv, s: sv, ds, nabla_s, eigen })
    }

    pub fn n(&self) -> usize {
        self.geo.n
    }

    /// `∇_v S` as a matrix.
    pub fn nabla_along(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| v[k] * self.nabla_s.get(&[k, i, j])).sum())
    }

    /// `∥∇S∥` in the metric norm.
    pub fn nabla_s_norm(&self) -> f64 {
        let g = flat(&self.g);
        let ginv = flat(&self.ginv);
        self.nabla_s.norm_g(&g, &ginv)
    }

    /// `dλ_i(v) = tr(P_i ∇_v S) / m_i`.
    pub fn dlambda(&self, i: usize, v: &[f64]) -> f64 {
        let p = self.eigen.projector(i);
        (p * self.nabla_along(v)).trace() / self.eigen.multiplicities[i] as f64
    }

    /// Gradient `∇λ_i`.
    pub fn grad_lambda(&self, i: usize) -> Vec<f64> {
        let n = self.n();
        let d: Vec<f64> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                self.dlambda(i, &e)
            })
            .collect();
        mat_vec(&self.ginv, &d)
    }

    /// First-order jet of the eigenfield `x ↦ P_i(x) v`.
    pub fn eigenfield(&self, i: usize, v: &[f64]) -> JetTensor {
        let n = self.n();
        let es = &self.eigen;
        let projectors: Vec<DMatrix<f64>> = (0..es.count).map(|j| es.projector(j)).collect();
        let pi = &projectors[i];
        let dp: Vec<DMatrix<f64>> = self
            .ds
            .iter()
            .map(|dsk| {
                let mut acc = DMatrix::zeros(n, n);
                for (j, pj) in projectors.iter().enumerate() {
                    if j != i {
                        acc += (pj * dsk * pi + pi * dsk * pj) / (es.eigenvalues[i] - es.eigenvalues[j]);
                    }
                }
                acc
            })
            .collect();
        let value = mat_vec(pi, v);
        let dv: Vec<Vec<f64>> = dp.iter().map(|d| mat_vec(d, v)).collect();
        let lay = layout(n);
        let comps = (0..n)
            .map(|a| Jet::from_value_grad(&lay, value[a], &(0..n).map(|k| dv[k][a]).collect::<Vec<_>>()))
            .collect();
        JetTensor { n, slots: vec![Slot::Up], comps }
    }

    fn basis(&self, i: usize) -> Vec<Vec<f64>> {
        self.eigen.eigenbases[i].iter().map(|v| v.components.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenvalueConstancy {
    /// Multiplicity pattern of the largest consistent group of samples.
    pub multiplicities: Vec<usize>,
    /// `(pattern, number of samples)` for every pattern seen.
    pub patterns: Vec<(Vec<usize>, usize)>,
    pub medians: Vec<f64>,
    /// `max |λ_i(x) − median|` per eigenvalue.
    pub deviations: Vec<f64>,
    /// `max |dλ_i(v)|` over eigenbasis vectors `v` of `D_{λ_i}`.
    pub directional: Vec<f64>,
    pub n_used: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn eigenvalue_constancy(patch: &ChartPatch, s: &EndoField, samples: &[Vec<f64>]) -> Result<EigenvalueConstancy> {
    let data = per_point(samples, |x| {
        let pa = PointAnalysis::new(patch, s, x)?;
        let directional: Vec<f64> = (0..pa.eigen.count)
            .map(|i| pa.basis(i).iter().map(|v| pa.dlambda(i, v).abs()).fold(0.0, f64::max))
            .collect();
        Ok((pa.eigen.multiplicities.clone(), pa.eigen.eigenvalues.clone(), directional))
    })?;
    let mut patterns: Vec<(Vec<usize>, usize)> = Vec::new();
    for (m, _, _) in &data {
        match patterns.iter_mut().find(|p| &p.0 == m) {
            Some(p) => p.1 += 1,
            None => patterns.push((m.clone(), 1)),
        }
    }
    let best = patterns.iter().max_by_key(|p| p.1).map(|p| p.0.clone()).unwrap_or_default();
    let used: Vec<_> = data.iter().filter(|d| d.0 == best).collect();
    let k = best.len();
    let mut medians = Vec::with_capacity(k);
    let mut deviations = Vec::with_capacity(k);
    let mut directional = Vec::with_capacity(k);
    for i in 0..k {
        let mut vals: Vec<f64> = used.iter().map(|d| d.1[i]).collect();
        let med = median(&mut vals);
        deviations.push(vals.iter().map(|v| (v - med).abs()).fold(0.0, f64::max));
        medians.push(med);
        directional.push(used.iter().map(|d| d.2[i]).fold(0.0, f64::max));
    }
    Ok(EigenvalueConstancy { multiplicities: best, patterns, medians, deviations, directional, n_used: used.len() })
}

// ---------------------------------------------------------------------------
// Eigenfield identities

#[derive(Clone, Debug, PartialEq)]
pub struct EigenfieldIdentities {
    /// `∥∇S(X,X) + ½∇λ_i∥` over unit eigenvectors `X ∈ D_{λ_i}`.
    pub gradient_identity: SampledResidual,
    /// `|⟨∇_X X, Y⟩ − ½ (Yλ_i)/(λ_j − λ_i)|` over unit `X ∈ D_{λ_i}`, `Y ∈ D_{λ_j}`.
    pub connection_identity: SampledResidual,
    /// Eigenvalue pairs skipped because their gap was too small.
    pub skipped_pairs: usize,
}

pub fn eigenfield_identities(patch: &ChartPatch, s: &EndoField, samples: &[Vec<f64>]) -> Result<EigenfieldIdentities> {
    let data = per_point(samples, |x| {
        let pa = PointAnalysis::new(patch, s, x)?;
        let es = &pa.eigen;
        let mut grad_res: f64 = 0.0;
        let mut conn_res: f64 = 0.0;
        let mut skipped = 0;
        for i in 0..es.count {
            let half_grad: Vec<f64> = pa.grad_lambda(i).iter().map(|c| 0.5 * c).collect();
            for v in pa.basis(i) {
                let lhs = mat_vec(&pa.nabla_along(&v), &v);
                let diff: Vec<f64> = lhs.iter().zip(&half_grad).map(|(a, b)| a + b).collect();
                grad_res = grad_res.max(norm(&pa.g, &diff));
            }
            for j in 0..es.count {
                if j == i {
                    continue;
                }
                let gap = es.eigenvalues[j] - es.eigenvalues[i];
                if gap.abs() <= 10.0 * es.cluster_tol {
                    skipped += 1;
                    continue;
                }
                for v in pa.basis(i) {
                    let xf = pa.eigenfield(i, &v);
                    let nxx = covariant_along(&pa.geo, &xf, &xf);
                    for w in pa.basis(j) {
                        let lhs = inner(&pa.g, &nxx, &w);
                        let rhs = 0.5 * pa.dlambda(i, &w) / gap;
                        conn_res = conn_res.max((lhs - rhs).abs());
                    }
                }
            }
        }
        Ok((x.to_vec(), grad_res, conn_res, skipped))
    })?;
    Ok(EigenfieldIdentities {
        gradient_identity: SampledResidual::from_pairs(data.iter().map(|d| (d.0.clone(), d.1)).collect()),
        connection_identity: SampledResidual::from_pairs(data.iter().map(|d| (d.0.clone(), d.2)).collect()),
        skipped_pairs: data.iter().map(|d| d.3).sum(),
    })
}

// ---------------------------------------------------------------------------
// Eigendistributions

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionReport {
    pub eigen_index: usize,
    pub multiplicity: usize,
    /// Part of `[X,Y]` orthogonal to the distribution.
    pub integrability: SampledResidual,
    /// Part of `∇_X Y` orthogonal to the distribution.
    pub autoparallel: SampledResidual,
    /// `∥∇S(X,Y)∥` over eigenfield pairs.
    pub nabla_s: SampledResidual,
    /// `∥∇S(X,Y) − ∇S(Y,X) − (λ_i I − S)[X,Y]∥`.
    pub bracket_identity: SampledResidual,
}

pub fn distribution_checks(
    patch: &ChartPatch,
    s: &EndoField,
    eigen_index: usize,
    samples: &[Vec<f64>],
) -> Result<DistributionReport> {
    let data = per_point(samples, |x| {
        let pa = PointAnalysis::new(patch, s, x)?;
        let es = &pa.eigen;
        if eigen_index >= es.count {
            return Err(GeometryError::Precondition(format!(
                "eigenvalue index {eigen_index} out of range at {x:?} ({} distinct eigenvalues)",
                es.count
            )));
        }
        let n = pa.n();
        let perp = DMatrix::identity(n, n) - es.projector(eigen_index);
        let lambda = es.eigenvalues[eigen_index];
        let basis = pa.basis(eigen_index);
        let fields: Vec<JetTensor> = basis.iter().map(|v| pa.eigenfield(eigen_index, v)).collect();
        let (mut integ, mut auto, mut nab, mut brk): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                let cov = covariant_along(&pa.geo, &fields[a], &fields[b]);
                auto = auto.max(norm(&pa.g, &mat_vec(&perp, &cov)));
                let sab = mat_vec(&pa.nabla_along(&basis[a]), &basis[b]);
                nab = nab.max(norm(&pa.g, &sab));
                if a < b {
                    let br = bracket(&fields[a], &fields[b]);
                    integ = integ.max(norm(&pa.g, &mat_vec(&perp, &br)));
                    let sba = mat_vec(&pa.nabla_along(&basis[b]), &basis[a]);
                    let rhs = mat_vec(&(DMatrix::identity(n, n) * lambda - &pa.s), &br);
                    let diff: Vec<f64> = (0..n).map(|k| sab[k] - sba[k] - rhs[k]).collect();
                    brk = brk.max(norm(&pa.g, &diff));
                }
            }
        }
        Ok((x.to_vec(), basis.len(), integ, auto, nab, brk))
    })?;
    let pick = |f: fn(&(Vec<f64>, usize, f64, f64, f64, f64)) -> f64| {
        SampledResidual::from_pairs(data.iter().map(|d| (d.0.clone(), f(d))).collect())
    };
    Ok(DistributionReport {
        eigen_index,
        multiplicity: data.first().map(|d| d.1).unwrap_or(0),
        integrability: pick(|d| d.2),
        autoparallel: pick(|d| d.3),
        nabla_s: pick(|d| d.4),
        bracket_identity: pick(|d| d.5),
    })
}

/// `max ∥∇S(X,Y)∥` for unit `X ∈ D_{λ_i}`, `Y ∈ D_{λ_j}`.
pub fn mixed_derivative_residual(
    patch: &ChartPatch,
    s: &EndoField,
    i: usize,
    j: usize,
    samples: &[Vec<f64>],
) -> Result<SampledResidual> {
    let data = per_point(samples, |x| {
        let pa = PointAnalysis::new(patch, s, x)?;
        if i >= pa.eigen.count || j >= pa.eigen.count {
            return Err(GeometryError::Precondition(format!("eigenvalue index out of range at {x:?}")));
        }
        let mut worst: f64 = 0.0;
        for u in pa.basis(i) {
            let m = pa.nabla_along(&u);
            for v in pa.basis(j) {
                worst = worst.max(norm(&pa.g, &mat_vec(&m, &v)));
            }
        }
        Ok((x.to_vec(), worst))
    })?;
    Ok(SampledResidual::from_pairs(data))
}

// ---------------------------------------------------------------------------
// Killing fields

/// Swap the two slots of a rank-2 jet tensor.
fn transpose_jets(t: &JetTensor) -> JetTensor {
    let n = t.n;
    let comps = (0..n * n).map(|k| t.comps[(k % n) * n + k / n].clone()).collect();
    JetTensor { n, slots: vec![t.slots[1], t.slots[0]], comps }
}

/// `T = ∇ξ` as an endomorphism field: `T^i_k = ∇_k ξ^i`.
pub fn deformation_tensor(patch: &ChartPatch, xi: &VectorField) -> EndoField {
    let p = patch.clone();
    let xi = xi.clone();
    EndoField::from_jets(patch.dim(), move |x, order| {
        let geo = LocalGeometry::new(&p, x, order + 1)?;
        let v = xi.jets(x, order + 1)?;
        Ok(transpose_jets(&geo.nabla(&v)).comps)
    })
}

/// Per-point Killing data: the connection at order 2 and `T` to first order.
struct KillingPoint {
    geo: LocalGeometry,
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    xi: Vec<f64>,
    xi_jets: JetTensor,
    /// `T^i_k` at `[i, k]`, first order.
    t: JetTensor,
    t_val: DMatrix<f64>,
}

impl KillingPoint {
    fn new(patch: &ChartPatch, xi: &VectorField, x: &[f64]) -> Result<KillingPoint> {
        let geo = LocalGeometry::new(patch, x, 2)?;
        let v = xi.jets(x, 2)?;
        let t = transpose_jets(&geo.nabla(&v));
        let n = geo.n;
        let g = geo.metric_matrix();
        let ginv = DMatrix::from_fn(n, n, |i, j| geo.ginv[i * n + j].value());
        let t_val = endo_matrix(&t.value());
        let xi_val = v.value().comps;
        let xi_jets = JetTensor { n, slots: v.slots.clone(), comps: v.comps.iter().map(|c| c.truncate(1)).collect() };
        Ok(KillingPoint { geo, g, ginv, xi: xi_val, xi_jets, t, t_val })
    }

    fn unit_defect(&self) -> f64 {
        (inner(&self.g, &self.xi, &self.xi) - 1.0).abs()
    }

    /// `∥L_ξ g∥`, with `(L_ξ g)_{kj} = ⟨T∂_k, ∂_j⟩ + ⟨∂_k, T∂_j⟩`.
    fn killing_norm(&self) -> f64 {
        let gt = &self.g * &self.t_val;
        let l = &gt + gt.transpose();
        form_norm(&l, &self.ginv)
    }

    /// `(∇_a T)^i_b` at `[a, i, b]`.
    fn nabla_t(&self) -> Tensor {
        self.geo.nabla(&self.t).value()
    }
}

/// Norm of a covariant 2-tensor.
pub(crate) fn form_norm(m: &DMatrix<f64>, ginv: &DMatrix<f64>) -> f64 {
    (ginv * m * ginv * m.transpose()).trace().max(0.0).sqrt()
}

fn rel_diff(a: f64, b: f64, diff: f64) -> f64 {
    diff / a.max(b).max(NOISE_FLOOR)
}

pub struct KillingReport {
    /// `max ∥L_ξ g∥`.
    pub killing_residual: SampledResidual,
    pub t: EndoField,
    /// `max ∥⟨T·,·⟩ + ⟨·,T·⟩∥`.
    pub t_antisymmetry: SampledResidual,
    /// `max ∥Tξ∥`.
    pub t_xi_zero: SampledResidual,
    /// `max |⟨[ξ, X], ξ⟩|` over unit fields `X ⊥ ξ`.
    pub lie_preserves_orthogonal: SampledResidual,
    /// `∥T∥²` per sample.
    pub t_norm_sq: Vec<f64>,
    /// `max ∥tr_g ∇T + ∥T∥² ξ∥`.
    pub trace_identity: SampledResidual,
    pub unit_defect: SampledResidual,
}

fn unit_gate(defect: f64, x: &[f64], tol: f64) -> Result<()> {
    if !(defect <= tol) {
        return Err(GeometryError::Precondition(format!(
            "field is not unit at {x:?} (|g(ξ,ξ) − 1| = {defect:.3e}); rescale the metric with conformal_unitize"
        )));
    }
    Ok(())
}

/// Horizontal unit fields `X = (I − ξ⊗ξ♭) e` to first order, one per
/// orthonormal complement vector `e`.
fn orthogonal_fields(kp: &KillingPoint) -> Result<Vec<JetTensor>> {
    let n = kp.geo.n;
    let seeds = vec![kp.xi.clone()];
    let frame = orthonormalize(&kp.g, Some(&seeds))?;
    let g1: Vec<Jet> = kp.geo.g.iter().map(|c| c.truncate(1)).collect();
    let xi = &kp.xi_jets.comps;
    let xi_flat: Vec<Jet> = (0..n)
        .map(|j| {
            let mut acc = xi[0].zero_like();
            for m in 0..n {
                acc += &g1[j * n + m] * &xi[m];
            }
            acc
        })
        .collect();
    Ok(frame[1..]
        .iter()
        .map(|e| {
            let mut c = xi[0].zero_like();
            for j in 0..n {
                c += &xi_flat[j] * e[j];
            }
            let comps = (0..n).map(|i| -(&xi[i] * &c) + e[i]).collect();
            JetTensor { n, slots: vec![Slot::Up], comps }
        })
        .collect())
}

pub fn killing_and_t(patch: &ChartPatch, xi: &VectorField, samples: &[Vec<f64>]) -> Result<KillingReport> {
    let data = per_point(samples, |x| {
        let kp = KillingPoint::new(patch, xi, x)?;
        let defect = kp.unit_defect();
        unit_gate(defect, x, UNIT_TOL)?;
        let n = kp.geo.n;
        let kill = kp.killing_norm();
        let gt = &kp.g * &kp.t_val;
        let anti = form_norm(&(&gt + gt.transpose()), &kp.ginv);
        let txi = norm(&kp.g, &mat_vec(&kp.t_val, &kp.xi));
        let mut lie: f64 = 0.0;
        for f in orthogonal_fields(&kp)? {
            let br = bracket(&kp.xi_jets, &f);
            lie = lie.max(inner(&kp.g, &br, &kp.xi).abs());
        }
        let t_sq = endo_norm(&kp.g, &kp.ginv, &kp.t_val).powi(2);
        let nt = kp.nabla_t();
        let trace: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += kp.ginv[(a, b)] * nt.get(&[a, i, b]);
                    }
                }
                s + t_sq * kp.xi[i]
            })
            .collect();
        Ok((x.to_vec(), defect, kill, anti, txi, lie, t_sq, norm(&kp.g, &trace)))
    })?;
    let pick = |f: &dyn Fn(&(Vec<f64>, f64, f64, f64, f64, f64, f64, f64)) -> f64| {
        SampledResidual::from_pairs(data.iter().map(|d| (d.0.clone(), f(d))).collect())
    };
    Ok(KillingReport {
        unit_defect: pick(&|d| d.1),
        killing_residual: pick(&|d| d.2),
        t_antisymmetry: pick(&|d| d.3),
        t_xi_zero: pick(&|d| d.4),
        lie_preserves_orthogonal: pick(&|d| d.5),
        t_norm_sq: data.iter().map(|d| d.6).collect(),
        trace_identity: pick(&|d| d.7),
        t: deformation_tensor(patch, xi),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KillingCurvatureReport {
    /// `R(X,ξ)Y = ∇T(X,Y)`.
    pub curvature_identity: SampledResidual,
    /// `∇T(X,ξ) = −T²X`.
    pub square_identity: SampledResidual,
    /// `⟨R(X,ξ)ξ,Y⟩ = ⟨TX,TY⟩`.
    pub jacobi_identity: SampledResidual,
}

fn killing_gate(kp: &KillingPoint, x: &[f64], tol: f64) -> Result<()> {
    unit_gate(kp.unit_defect(), x, tol)?;
    let kill = kp.killing_norm();
    if !(kill <= KILLING_GATE) {
        return Err(GeometryError::Precondition(format!("field is not Killing at {x:?} (∥L_ξ g∥ = {kill:.3e})")));
    }
    Ok(())
}

/// Curvature identities of a unit Killing field, compared as full tensors
/// with relative residual `∥a − b∥ / max(∥a∥, ∥b∥, NOISE_FLOOR)`.
pub fn killing_curvature_identities(
    patch: &ChartPatch,
    xi: &VectorField,
    samples: &[Vec<f64>],
) -> Result<KillingCurvatureReport> {
    let data = per_point(samples, |x| {
        let kp = KillingPoint::new(patch, xi, x)?;
        killing_gate(&kp, x, UNIT_TOL)?;
        let n = kp.geo.n;
        let g = flat(&kp.g);
        let ginv = flat(&kp.ginv);
        let riem = kp.geo.riemann_jets().value();
        let nt = kp.nabla_t();
        let xi = &kp.xi;
        // (a) as (1,2) tensors in (X, Y): A^l_{ji}.
        let mut lhs = Tensor::zeros(n, vec![Slot::Down, Slot::Up, Slot::Down]);
        let mut rhs = lhs.clone();
        for j in 0..n {
            for l in 0..n {
                for i in 0..n {
                    let r: f64 = (0..n).map(|k| riem.get(&[l, i, j, k]) * xi[k]).sum();
                    lhs.set(&[j, l, i], r);
                    rhs.set(&[j, l, i], nt.get(&[j, l, i]));
                }
            }
        }
        let a = rel_diff(lhs.norm_g(&g, &ginv), rhs.norm_g(&g, &ginv), lhs.sub(&rhs).norm_g(&g, &ginv));
        // (b) as (1,1) tensors in X.
        let t2 = &kp.t_val * &kp.t_val;
        let mut lb = Tensor::zeros(n, vec![Slot::Up, Slot::Down]);
        let mut rb = lb.clone();
        for l in 0..n {
            for j in 0..n {
                lb.set(&[l, j], (0..n).map(|i| nt.get(&[j, l, i]) * xi[i]).sum());
                rb.set(&[l, j], -t2[(l, j)]);
            }
        }
        let b = rel_diff(lb.norm_g(&g, &ginv), rb.norm_g(&g, &ginv), lb.sub(&rb).norm_g(&g, &ginv));
        // (c) as covariant 2-tensors in (X, Y).
        let tt = kp.t_val.transpose() * &kp.g * &kp.t_val;
        let mut lc = Tensor::zeros(n, vec![Slot::Down, Slot::Down]);
        let mut rc = lc.clone();
        for j in 0..n {
            for m in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    for i in 0..n {
                        for k in 0..n {
                            s += kp.g[(l, m)] * riem.get(&[l, i, j, k]) * xi[i] * xi[k];
                        }
                    }
                }
                lc.set(&[j, m], s);
                rc.set(&[j, m], tt[(j, m)]);
            }
        }
        let c = rel_diff(lc.norm_g(&g, &ginv), rc.norm_g(&g, &ginv), lc.sub(&rc).norm_g(&g, &ginv));
        Ok((x.to_vec(), a, b, c))
    })?;
    let pick = |f: fn(&(Vec<f64>, f64, f64, f64)) -> f64| {
        SampledResidual::from_pairs(data.iter().map(|d| (d.0.clone(), f(d))).collect())
    };
    Ok(KillingCurvatureReport {
        curvature_identity: pick(|d| d.1),
        square_identity: pick(|d| d.2),
        jacobi_identity: pick(|d| d.3),
    })
}

/// Gate points for field-level preconditions: the centre plus a seeded sample.
fn gate_points(patch: &ChartPatch) -> Vec<Vec<f64>> {
    let mut pts = vec![patch.center()];
    pts.extend(patch.samples(16, DEFAULT_SEED));
    pts
}

/// `S = μ·Id + (λ − μ) ξ ⊗ ξ♭` for a unit Killing field `ξ`.
pub fn construct_s_from_killing(patch: &ChartPatch, xi: &VectorField, lambda: f64, mu: f64) -> Result<EndoField> {
    for x in gate_points(patch) {
        let kp = KillingPoint::new(patch, xi, &x)?;
        killing_gate(&kp, &x, KILLING_GATE)?;
    }
    let p = patch.clone();
    let xi = xi.clone();
    let n = patch.dim();
    Ok(EndoField::from_jets(n, move |x, order| {
        let g = p.metric_jets(x, order)?;
        let v = xi.jets(x, order)?;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut flat_j = g[0].zero_like();
                for m in 0..n {
                    flat_j += &g[j * n + m] * &v.comps[m];
                }
                let mut e = &v.comps[i] * &flat_j * (lambda - mu);
                if i == j {
                    e = e + mu;
                }
                out.push(e);
            }
        }
        Ok(out)
    }))
}

/// `g = g′ / g′(ξ, ξ)`, which makes a nowhere-vanishing Killing field unit.
pub fn conformal_unitize(patch: &ChartPatch, xi: &VectorField) -> Result<ChartPatch> {
    let mut probe = gate_points(patch);
    probe.extend(patch.samples(240, DEFAULT_SEED + 1));
    for x in &probe {
        let g = patch.metric_value(x)?;
        let v = xi.value(x)?.comps;
        let nv = norm(&g, &v);
        if !(nv >= 1e-8) {
            return Err(GeometryError::VanishingField { point: x.clone(), norm: nv });
        }
    }
    let base = patch.clone();
    let xi = xi.clone();
    let n = patch.dim();
    Ok(patch.with_metric(format!("{} (unit-normalised)", patch.label()), move |seeds| {
        // The metric closure always receives coordinate seeds, so the field
        // can be expanded at the same point and order.
        let x: Vec<f64> = seeds.iter().map(Jet::value).collect();
        let order = seeds[0].order();
        // Failures surface as non-finite entries, which the chart rejects.
        let (g, v) = match (base.metric_jets_unchecked(&x, order), xi.jets(&x, order)) {
            (Ok(g), Ok(v)) => (g, v),
            _ => return vec![seeds[0].lift(f64::NAN); n * n],
        };
        let mut len = g[0].zero_like();
        for i in 0..n {
            for j in 0..n {
                len += &g[i * n + j] * &v.comps[i] * &v.comps[j];
            }
        }
        let inv = len.recip();
        g.iter().map(|e| e * &inv).collect()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Properness {
    Parallel,
    Proper,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProperCertificate {
    pub nabla_s_norm: f64,
    pub dtheta_norm: f64,
    pub status: Properness,
    /// Both norms vanish together or persist together.
    pub consistent: bool,
    pub parallel: bool,
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

/// Compare `∥∇S∥` with `∥dθ∥`, where `θ` is dual to the unit eigenfield of
/// the one-dimensional eigendistribution of a two-eigenvalue `S`.
pub fn properness_certificate(patch: &ChartPatch, s: &EndoField, samples: &[Vec<f64>]) -> Result<ProperCertificate> {
    let data = per_point(samples, |x| {
        let pa = PointAnalysis::new(patch, s, x)?;
        let es = &pa.eigen;
        let idx = match (es.count, es.index_with_multiplicity(1)) {
            (2, Some(i)) => i,
            _ => {
                return Err(GeometryError::Precondition(format!(
                    "expected two eigenvalues with a one-dimensional eigenspace at {x:?}, found multiplicities {:?}",
                    es.multiplicities
                )))
            }
        };
        let n = pa.n();
        let v = pa.basis(idx).remove(0);
        let field = pa.eigenfield(idx, &v);
        let g1: Vec<Jet> = pa.geo.g.iter().map(|c| c.truncate(1)).collect();
        let mut len = field.comps[0].zero_like();
        for i in 0..n {
            for j in 0..n {
                len += &g1[i * n + j] * &field.comps[i] * &field.comps[j];
            }
        }
        let inv = len.powf(-0.5);
        let theta: Vec<Jet> = (0..n)
            .map(|j| {
                let mut acc = inv.zero_like();
                for m in 0..n {
                    acc += &g1[j * n + m] * &field.comps[m];
                }
                acc * &inv
            })
            .collect();
        let dtheta = exterior_from_jets(&JetTensor { n, slots: vec![Slot::Down], comps: theta });
        Ok((pa.nabla_s_norm(), form_norm(&dtheta, &pa.ginv)))
    })?;
    let ns = data.iter().map(|d| d.0).fold(0.0, f64::max);
    let dt = data.iter().map(|d| d.1).fold(0.0, f64::max);
    let status = match (classify(ns), classify(dt)) {
        (Some(false), Some(false)) => Properness::Parallel,
        (Some(true), Some(true)) => Properness::Proper,
        _ => Properness::Inconclusive,
    };
    let consistent = matches!(status, Properness::Parallel | Properness::Proper);
    Ok(ProperCertificate {
        nabla_s_norm: ns,
        dtheta_norm: dt,
        status,
        consistent,
        parallel: status == Properness::Parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Axis;
    use crate::curvature::{lie_derivative_metric, ricci_endomorphism};
    use std::f64::consts::PI;

    fn flat(n: usize) -> ChartPatch {
        let names: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        ChartPatch::new("flat", &refs, vec![Axis::bounded(-1.0, 1.0); n], move |x| {
            (0..n * n).map(|k| x[0].lift(if k / n == k % n { 1.0 } else { 0.0 })).collect()
        })
    }

    fn sphere() -> ChartPatch {
        ChartPatch::new("S2", &["theta", "phi"], vec![Axis::bounded(0.2, PI - 0.2), Axis::cyclic(-PI, PI)], |x| {
            vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].sin().square()]
        })
    }

    fn perturbed(eps: f64) -> ChartPatch {
        ChartPatch::new(
            "perturbed",
            &["theta", "phi"],
            vec![Axis::bounded(0.2, PI - 0.2), Axis::cyclic(-PI, PI)],
            move |x| {
                let f = (x[0].sin() * eps + 1.0) * x[0].sin();
                vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), f.square()]
            },
        )
    }

    fn diag12() -> EndoField {
        EndoField::from_formula(2, |x| vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].lift(2.0)])
    }

    #[test]
    fn constant_multiple_of_identity_is_an_a_tensor() {
        let s = EndoField::identity(2, 3.5);
        for p in [flat(2), sphere(), perturbed(0.3)] {
            let rep = a_condition_residual(&p, &s, &p.samples(30, 42), 1e-10).unwrap();
            assert!(rep.pass, "{} {}", p.label(), rep.max_cyclic_residual);
        }
    }

    #[test]
    fn perturbed_sphere_ricci_fails_cyclic_condition() {
        let p = perturbed(0.3);
        let rep = a_condition_residual(&p, &ricci_endomorphism(&p), &p.samples(50, 42), 1e-8).unwrap();
        assert!(rep.max_cyclic_residual > 0.01);
        assert!(!rep.pass);
        // The round sphere passes.
        let q = sphere();
        let rep = a_condition_residual(&q, &ricci_endomorphism(&q), &q.samples(50, 42), 1e-8).unwrap();
        assert!(rep.pass, "{}", rep.max_cyclic_residual);
    }

    #[test]
    fn surface_cyclic_sum_matches_gauss_curvature_gradient() {
        // On a surface Φ = K g, so ∇Φ(X,X,X) = dK(X)∥X∥² and the cyclic sum is 3 dK ⊗ g symmetrised.
        let p = perturbed(0.3);
        let x = [1.0, 0.3];
        let (cyc, _, _) = cyclic_tensor(&p, &ricci_endomorphism(&p), &x).unwrap();
        let h = 1e-4;
        let k = |t: f64| crate::curvature::riemann(&p, &[t, 0.3]).unwrap().scalar / 2.0;
        let dk = (k(1.0 + h) - k(1.0 - h)) / (2.0 * h);
        assert!(dk.abs() > 0.01);
        let g11 = p.metric_value(&x).unwrap()[(1, 1)];
        // C(∂θ,∂θ,∂θ) = 3 dK(∂θ)
        assert!((cyc.get(&[0, 0, 0]) - 3.0 * dk).abs() < 1e-6);
        // C(∂θ,∂φ,∂φ) = dK(∂θ) g_φφ
        assert!((cyc.get(&[0, 1, 1]) - dk * g11).abs() < 1e-6);
    }

    #[test]
    fn asymmetric_endomorphism_is_rejected() {
        let s = EndoField::from_formula(2, |x| vec![x[0].lift(1.0), x[0].lift(1.0), x[0].lift(0.0), x[0].lift(1.0)]);
        let err = a_condition_residual(&flat(2), &s, &[vec![0.0, 0.0]], 1e-8).unwrap_err();
        assert!(matches!(err, GeometryError::Precondition(_)));
    }

    #[test]
    fn cyclic_residual_is_frame_invariant() {
        let p = perturbed(0.2);
        let s = ricci_endomorphism(&p);
        let x = [1.2, 0.1];
        let (cyc, _, _) = cyclic_tensor(&p, &s, &x).unwrap();
        let g = p.metric_value(&x).unwrap();
        let euclid = |frame: &[Vec<f64>]| {
            let (e, co) = crate::chart::frame_matrices(&g, frame);
            let t = cyc.in_frame(&e, &co);
            t.comps.iter().map(|c| c * c).sum::<f64>().sqrt()
        };
        let f1 = orthonormalize(&g, None).unwrap();
        let f2 = orthonormalize(&g, Some(&[vec![0.3, 1.0]])).unwrap();
        assert!((euclid(&f1) - euclid(&f2)).abs() < 1e-12);
    }

    #[test]
    fn eigenstructure_clusters_repeated_eigenvalues() {
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 9.0]));
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 5.0, 5.0]));
        let es = g_symmetric_eigen(&g, &s, &[0.0; 3]).unwrap();
        assert_eq!(es.eigenvalues.len(), 2);
        assert_eq!(es.multiplicities, vec![1, 2]);
        assert!((es.eigenvalues[0] - 2.0).abs() < 1e-14 && (es.eigenvalues[1] - 5.0).abs() < 1e-14);
        for (i, basis) in es.eigenbases.iter().enumerate() {
            for v in basis {
                let sv = mat_vec(&s, &v.components);
                let r: f64 =
                    sv.iter().zip(&v.components).map(|(a, b)| (a - es.eigenvalues[i] * b).abs()).fold(0.0, f64::max);
                assert!(r < 1e-12);
                assert!((inner(&g, &v.components, &v.components) - 1.0).abs() < 1e-12);
            }
        }
        let u = &es.eigenbases[0][0].components;
        for w in &es.eigenbases[1] {
            assert!(inner(&g, u, &w.components).abs() < 1e-12);
        }
        assert!(!es.borderline);
        let p = es.projector(1);
        assert!((&p * &p - &p).amax() < 1e-12);
    }

    #[test]
    fn near_tie_is_flagged_borderline() {
        let g = DMatrix::identity(2, 2);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0 + 3e-6]));
        let es = g_symmetric_eigen(&g, &s, &[0.0; 2]).unwrap();
        assert!(es.borderline);
        assert_eq!(es.count, 2);
    }

    #[test]
    fn non_constant_multiple_of_identity_has_moving_eigenvalue() {
        let s = EndoField::from_formula(2, |x| {
            let f = x[0].clone() * 2.0 + 1.0;
            vec![f.clone(), x[0].lift(0.0), x[0].lift(0.0), f]
        });
        let p = flat(2);
        let samples = p.samples(40, 42);
        let c = eigenvalue_constancy(&p, &s, &samples).unwrap();
        assert_eq!(c.multiplicities, vec![2]);
        let fs: Vec<f64> = samples.iter().map(|x| 2.0 * x[0] + 1.0).collect();
        let med = {
            let mut v = fs.clone();
            median(&mut v)
        };
        let spread = fs.iter().map(|f| (f - med).abs()).fold(0.0, f64::max);
        assert!((c.deviations[0] - spread).abs() < 1e-12);
        assert!(c.directional[0] > 0.5);
        let rep = a_condition_residual(&p, &s, &samples, 1e-8).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn parallel_tensor_on_flat_plane_is_trivially_consistent() {
        let p = flat(2);
        let s = diag12();
        let samples = p.samples(20, 42);
        let c = eigenvalue_constancy(&p, &s, &samples).unwrap();
        assert_eq!(c.deviations, vec![0.0, 0.0]);
        assert_eq!(c.directional, vec![0.0, 0.0]);
        let id = eigenfield_identities(&p, &s, &samples).unwrap();
        assert_eq!(id.gradient_identity.max, 0.0);
        assert_eq!(id.connection_identity.max, 0.0);
        for i in 0..2 {
            let d = distribution_checks(&p, &s, i, &samples).unwrap();
            assert_eq!(d.integrability.max, 0.0);
            assert_eq!(d.autoparallel.max, 0.0);
            assert_eq!(d.nabla_s.max, 0.0);
        }
    }

    #[test]
    fn eigenfield_derivative_matches_finite_differences() {
        // S with rotating eigenvectors: S = R(x) diag(1, 3) R(x)^T on the flat plane.
        let s = EndoField::from_formula(2, |x| {
            let (c, s) = (x[0].cos(), x[0].sin());
            let a = c.square() + s.square() * 3.0;
            let b = &c * &s * (-2.0);
            let d = s.square() + c.square() * 3.0;
            vec![a, b.clone(), b, d]
        });
        let p = flat(2);
        let x = [0.3, 0.1];
        let pa = PointAnalysis::new(&p, &s, &x).unwrap();
        let v = pa.basis(0).remove(0);
        let f = pa.eigenfield(0, &v);
        let h = 1e-6;
        let proj = |t: f64| {
            let es = eigenstructure(&p, &s, &[t, 0.1]).unwrap();
            mat_vec(&es.projector(0), &v)
        };
        let (a, b) = (proj(0.3 + h), proj(0.3 - h));
        for k in 0..2 {
            let fd = (a[k] - b[k]) / (2.0 * h);
            assert!((f.comps[k].grad()[0] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn flat_translation_is_killing_and_builds_parallel_tensor() {
        let p = flat(3);
        let xi = VectorField::coordinate(3, 0);
        let samples = p.samples(20, 42);
        let k = killing_and_t(&p, &xi, &samples).unwrap();
        assert_eq!(k.killing_residual.max, 0.0);
        assert_eq!(k.t_xi_zero.max, 0.0);
        assert!(k.t_norm_sq.iter().all(|t| *t == 0.0));
        let l = killing_curvature_identities(&p, &xi, &samples).unwrap();
        assert_eq!(l.curvature_identity.max, 0.0);
        assert_eq!(l.square_identity.max, 0.0);
        let s = construct_s_from_killing(&p, &xi, 3.0, 7.0).unwrap();
        let es = eigenstructure(&p, &s, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(es.multiplicities, vec![1, 2]);
        assert!((es.eigenvalues[0] - 3.0).abs() < 1e-12 && (es.eigenvalues[1] - 7.0).abs() < 1e-12);
        let cert = properness_certificate(&p, &s, &samples).unwrap();
        assert_eq!(cert.status, Properness::Parallel);
        assert!(cert.nabla_s_norm <= 1e-10 && cert.dtheta_norm <= 1e-10);
        let same = construct_s_from_killing(&p, &xi, 2.0, 2.0).unwrap();
        let v = same.value(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(endo_matrix(&v), DMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn non_unit_field_is_rejected() {
        let p = flat(2);
        let xi = VectorField::from_formula(2, |x| vec![x[0].lift(2.0), x[0].lift(0.0)]);
        assert!(matches!(killing_and_t(&p, &xi, &[vec![0.0, 0.0]]), Err(GeometryError::Precondition(_))));
        let rot = VectorField::from_formula(2, |x| vec![x[0].lift(1.0), x[0].clone()]);
        assert!(matches!(construct_s_from_killing(&p, &rot, 1.0, 2.0), Err(GeometryError::Precondition(_))));
    }

    #[test]
    fn conformal_unitize_rotation_field() {
        let p =
            ChartPatch::new("annular box", &["x", "y"], vec![Axis::bounded(0.3, 1.2), Axis::bounded(-0.5, 0.5)], |x| {
                vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].lift(1.0)]
            });
        let rot = VectorField::from_formula(2, |x| vec![-&x[1], x[0].clone()]);
        let q = conformal_unitize(&p, &rot).unwrap();
        for x in q.samples(30, 42) {
            let g = q.metric_value(&x).unwrap();
            let r2 = x[0] * x[0] + x[1] * x[1];
            assert!((g.clone() - DMatrix::identity(2, 2) / r2).amax() < 1e-14);
            let v = rot.value(&x).unwrap().comps;
            assert!((inner(&g, &v, &v) - 1.0).abs() < 1e-12);
            assert!(lie_derivative_metric(&q, &x, &rot).unwrap().amax() < 1e-9);
        }
        let unit = VectorField::coordinate(2, 0);
        let same = conformal_unitize(&p, &unit).unwrap();
        assert_eq!(same.metric_value(&[0.5, 0.1]).unwrap(), p.metric_value(&[0.5, 0.1]).unwrap());
        // The rotation field vanishes at the origin.
        let bad = ChartPatch::new("box", &["x", "y"], vec![Axis::bounded(-1.0, 1.0); 2], |x| {
            vec![x[0].lift(1.0), x[0].lift(0.0), x[0].lift(0.0), x[0].lift(1.0)]
        });
        assert!(matches!(conformal_unitize(&bad, &rot), Err(GeometryError::VanishingField { .. })));
    }

    #[test]
    fn round_sphere_rotation_field_after_unitizing() {
        // ∂φ is Killing on the sphere; after unitizing it is a unit Killing field
        // and the constructed tensor is an A-tensor.
        let p = sphere();
        let xi = VectorField::coordinate(2, 1);
        let q = conformal_unitize(&p, &xi).unwrap();
        let samples = q.samples(20, 42);
        let k = killing_and_t(&q, &xi, &samples).unwrap();
        assert!(k.killing_residual.max < 1e-9);
        assert!(k.t_antisymmetry.max < 1e-10);
        assert!(k.t_xi_zero.max < 1e-10);
        assert!(k.trace_identity.max < 1e-8);
        let l = killing_curvature_identities(&q, &xi, &samples).unwrap();
        assert!(l.curvature_identity.max < 1e-8, "{}", l.curvature_identity.max);
        assert!(l.square_identity.max < 1e-8, "{:?}", l.square_identity);
        assert!(l.jacobi_identity.max < 1e-8);
        let s = construct_s_from_killing(&q, &xi, 3.0, 7.0).unwrap();
        assert!(a_condition_residual(&q, &s, &samples, 1e-8).unwrap().pass);
    }
}
