//! Levi-Civita connection, covariant derivatives and curvature.
//!
//! Sign convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, stored as
//! `R(∂_j, ∂_k)∂_i = R^l_{ijk} ∂_l`, so that round spheres have positive
//! sectional curvature and `ρ_ij = R^k_{ikj}`.
//!
//! Everything is built on [`LocalGeometry`], which expands the metric, its
//! inverse and the Christoffel symbols as jets around one point. Curvature
//! uses only the first partials of Γ, hence the second partials of `g`.

use nalgebra::DMatrix;

use crate::chart::{check_spd, invert_jets, ChartPatch};
use crate::error::{GeometryError, Result};
use crate::field::{EndoField, OneFormField, TensorField, TwoFormField, VectorField};
use crate::jet::Jet;
use crate::tensor::{flat_index, multi_index, JetTensor, Slot, Tensor};

/// Jet expansion of the metric and connection around a point.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub n: usize,
    pub point: Vec<f64>,
    /// Metric jets of order `order`.
    pub g: Vec<Jet>,
    pub ginv: Vec<Jet>,
    /// `gamma[(a*n + b)*n + c] = Γ^a_{bc}`, of order `order - 1`.
    pub gamma: Vec<Jet>,
    pub order: usize,
}

impl LocalGeometry {
    /// Expand around `x` with metric jets of order `order >= 1`.
    pub fn new(patch: &ChartPatch, x: &[f64], order: usize) -> Result<LocalGeometry> {
        let g = patch.metric_jets(x, order)?;
        Self::from_metric_jets(patch.dim(), x, g)
    }

    pub(crate) fn from_metric_jets(n: usize, x: &[f64], g: Vec<Jet>) -> Result<LocalGeometry> {
        let order = g[0].order();
        assert!(order >= 1, "the connection needs first metric partials");
        let gv = DMatrix::from_fn(n, n, |i, j| g[i * n + j].value());
        check_spd(&gv, x)?;
        let ginv = invert_jets(n, &g)?;
        let dg: Vec<Vec<Jet>> = (0..n).map(|k| g.iter().map(|e| e.partial(k)).collect()).collect();
        // Γ_{d,bc} = ½(∂_b g_cd + ∂_c g_bd − ∂_d g_bc)
        let mut lowered = Vec::with_capacity(n * n * n);
        for d in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let v = (&dg[b][c * n + d] + &dg[c][b * n + d] - &dg[d][b * n + c]) * 0.5;
                    lowered.push(v);
                }
            }
        }
        let mut gamma = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut acc = lowered[0].zero_like();
                    for d in 0..n {
                        acc += &ginv[a * n + d] * &lowered[(d * n + b) * n + c];
                    }
                    gamma.push(acc);
                }
            }
        }
        Ok(LocalGeometry { n, point: x.to_vec(), g, ginv, gamma, order })
    }

    pub fn gamma(&self, a: usize, b: usize, c: usize) -> &Jet {
        &self.gamma[(a * self.n + b) * self.n + c]
    }

    pub fn metric_value(&self) -> Vec<f64> {
        self.g.iter().map(Jet::value).collect()
    }

    pub fn metric_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.g[i * self.n + j].value())
    }

    pub fn inverse_value(&self) -> Vec<f64> {
        self.ginv.iter().map(Jet::value).collect()
    }

    pub fn metric_tensor(&self) -> JetTensor {
        JetTensor { n: self.n, slots: vec![Slot::Down, Slot::Down], comps: self.g.clone() }
    }

    /// `∇T`, with the new covariant slot first: `(∇T)_{k,I} = (∇_k T)_I`.
    pub fn nabla(&self, t: &JetTensor) -> JetTensor {
        let n = self.n;
        let rank = t.rank();
        assert!(t.order() >= 1, "covariant derivative needs a jet of order >= 1");
        let partials: Vec<Vec<Jet>> = (0..n).map(|k| t.comps.iter().map(|c| c.partial(k)).collect()).collect();
        let mut slots = vec![Slot::Down];
        slots.extend_from_slice(&t.slots);
        let mut comps = Vec::with_capacity(n * t.comps.len());
        for k in 0..n {
            for flat in 0..t.comps.len() {
                let idx = multi_index(n, rank, flat);
                let mut acc = partials[k][flat].clone();
                for (s, slot) in t.slots.iter().enumerate() {
                    let mut j = idx.clone();
                    for m in 0..n {
                        j[s] = m;
                        let tm = &t.comps[flat_index(n, &j)];
                        match slot {
                            Slot::Up => acc += self.gamma(idx[s], k, m) * tm,
                            Slot::Down => acc -= self.gamma(m, k, idx[s]) * tm,
                        }
                    }
                }
                comps.push(acc);
            }
        }
        JetTensor { n, slots, comps }
    }

    /// Riemann tensor jets `R^l_{ijk}` (order `order - 2`).
    pub fn riemann_jets(&self) -> JetTensor {
        let n = self.n;
        assert!(self.order >= 2, "curvature needs second metric partials");
        let dgamma: Vec<Vec<Jet>> = (0..n).map(|j| self.gamma.iter().map(|c| c.partial(j)).collect()).collect();
        let gi = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let mut comps = Vec::with_capacity(n.pow(4));
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut acc = &dgamma[j][gi(l, k, i)] - &dgamma[k][gi(l, j, i)];
                        for m in 0..n {
                            acc += self.gamma(l, j, m) * self.gamma(m, k, i);
                            acc -= self.gamma(l, k, m) * self.gamma(m, j, i);
                        }
                        comps.push(acc);
                    }
                }
            }
        }
        JetTensor { n, slots: vec![Slot::Up, Slot::Down, Slot::Down, Slot::Down], comps }
    }

    /// Ricci tensor jets `ρ_ij = R^k_{ikj}`.
    pub fn ricci_jets(&self) -> JetTensor {
        let riem = self.riemann_jets();
        ricci_from_riemann(&riem)
    }

    /// Raise the first (covariant) index of a 2-tensor: `g^{ia} T_{aj}`.
    pub fn raise_first(&self, t: &JetTensor) -> JetTensor {
        let n = self.n;
        let mut comps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = t.comps[0].zero_like();
                for a in 0..n {
                    acc += &self.ginv[i * n + a] * &t.comps[a * n + j];
                }
                comps.push(acc);
            }
        }
        JetTensor { n, slots: vec![Slot::Up, t.slots[1]], comps }
    }

    /// Lower the first (contravariant) index: `g_{ia} T^a_J`.
    pub fn lower_first(&self, t: &JetTensor) -> JetTensor {
        let n = self.n;
        let inner = t.comps.len() / n;
        let mut comps = Vec::with_capacity(t.comps.len());
        for i in 0..n {
            for r in 0..inner {
                let mut acc = t.comps[0].zero_like();
                for a in 0..n {
                    acc += &self.g[i * n + a] * &t.comps[a * inner + r];
                }
                comps.push(acc);
            }
        }
        let mut slots = t.slots.clone();
        slots[0] = Slot::Down;
        JetTensor { n, slots, comps }
    }
}

fn ricci_from_riemann(riem: &JetTensor) -> JetTensor {
    let n = riem.n;
    let mut comps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = riem.comps[0].zero_like();
            for k in 0..n {
                acc += riem.get(&[k, i, k, j]);
            }
            comps.push(acc);
        }
    }
    JetTensor { n, slots: vec![Slot::Down, Slot::Down], comps }
}

/// Christoffel symbols at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelData {
    pub n: usize,
    gamma: Vec<f64>,
}

impl ChristoffelData {
    /// `Γ^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[(k * self.n + i) * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }
}

pub fn christoffel(patch: &ChartPatch, x: &[f64]) -> Result<ChristoffelData> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    Ok(ChristoffelData { n: geo.n, gamma: geo.gamma.iter().map(Jet::value).collect() })
}

/// `max |∇g|` over components; identically zero for the Levi-Civita connection.
pub fn metric_compatibility_residual(patch: &ChartPatch, x: &[f64]) -> Result<f64> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    Ok(geo.nabla(&geo.metric_tensor()).value().max_abs())
}

pub fn covariant_derivative(patch: &ChartPatch, x: &[f64], field: &TensorField) -> Result<Tensor> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    let t = field.jets(x, 1)?;
    Ok(geo.nabla(&t).value())
}

/// Curvature at a point.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    /// `R^l_{ijk}`.
    pub riemann: Tensor,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub metric: DMatrix<f64>,
}

impl CurvatureData {
    /// Fully covariant `R_{lijk} = g_{lm} R^m_{ijk}`.
    pub fn lowered(&self) -> Tensor {
        let n = self.metric.nrows();
        let g: Vec<f64> = self.metric.transpose().as_slice().to_vec();
        let mut t = self.riemann.map_slot(0, &g);
        t.slots[0] = Slot::Down;
        debug_assert_eq!(t.n, n);
        t
    }

    fn scale(&self) -> f64 {
        self.riemann.max_abs().max(1e-300)
    }

    /// `max |R^l_{ijk} + R^l_{jki} + R^l_{kij}| / max |R|`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.riemann.n;
        let r = &self.riemann;
        let mut worst: f64 = 0.0;
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let s = r.get(&[l, i, j, k]) + r.get(&[l, j, k, i]) + r.get(&[l, k, i, j]);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        if r.max_abs() == 0.0 {
            return worst;
        }
        worst / self.scale()
    }

    /// Largest relative violation of `R_{lijk} = −R_{likj}` and `R_{lijk} = −R_{iljk}`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let low = self.lowered();
        let n = low.n;
        let mut worst: f64 = 0.0;
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let v = low.get(&[l, i, j, k]);
                        worst = worst.max((v + low.get(&[l, i, k, j])).abs());
                        worst = worst.max((v + low.get(&[i, l, j, k])).abs());
                    }
                }
            }
        }
        let scale = low.max_abs();
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    pub fn ricci_symmetry_residual(&self) -> f64 {
        let r = &self.ricci;
        let asym = (r - r.transpose()).amax();
        if r.amax() == 0.0 {
            asym
        } else {
            asym / r.amax()
        }
    }

    /// Ricci endomorphism `g^{-1} ρ`.
    pub fn ricci_endomorphism(&self) -> DMatrix<f64> {
        self.metric.clone().cholesky().expect("metric checked positive definite").solve(&self.ricci)
    }
}

pub fn riemann(patch: &ChartPatch, x: &[f64]) -> Result<CurvatureData> {
    let geo = LocalGeometry::new(patch, x, 2)?;
    curvature_from_geometry(&geo)
}

pub(crate) fn curvature_from_geometry(geo: &LocalGeometry) -> Result<CurvatureData> {
    let n = geo.n;
    let riem = geo.riemann_jets();
    let ric = ricci_from_riemann(&riem);
    let ricci = DMatrix::from_fn(n, n, |i, j| ric.comps[i * n + j].value());
    let ginv = geo.inverse_value();
    let scalar = (0..n * n).map(|k| ginv[k] * ricci[(k / n, k % n)]).sum();
    let out = CurvatureData { riemann: riem.value(), ricci, scalar, metric: geo.metric_matrix() };
    if !out.riemann.comps.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::NonFinite { what: "curvature", point: geo.point.clone() });
    }
    Ok(out)
}

/// `⟨R(u,v)v,u⟩` for a given curvature.
pub fn curvature_quadrilinear(curv: &CurvatureData, u: &[f64], v: &[f64]) -> f64 {
    let r = &curv.riemann;
    let n = r.n;
    let mut rv = vec![0.0; n];
    for (l, out) in rv.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += r.get(&[l, i, j, k]) * v[i] * u[j] * v[k];
                }
            }
        }
        *out = s;
    }
    crate::chart::inner(&curv.metric, &rv, u)
}

/// Sectional curvature of the plane spanned by `u`, `v`.
pub fn sectional_from(curv: &CurvatureData, u: &[f64], v: &[f64]) -> Result<f64> {
    let g = &curv.metric;
    let uu = crate::chart::inner(g, u, u);
    let vv = crate::chart::inner(g, v, v);
    let uv = crate::chart::inner(g, u, v);
    let denom = uu * vv - uv * uv;
    if !(denom >= 1e-12 * uu * vv) || denom == 0.0 {
        return Err(GeometryError::DegeneratePlane);
    }
    Ok(curvature_quadrilinear(curv, u, v) / denom)
}

pub fn sectional_curvature(patch: &ChartPatch, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let curv = riemann(patch, x)?;
    sectional_from(&curv, u, v)
}

/// `(L_ξ g)_{ij} = ∇_i ξ_j + ∇_j ξ_i`.
pub fn lie_derivative_metric(patch: &ChartPatch, x: &[f64], xi: &VectorField) -> Result<DMatrix<f64>> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    let v = xi.jets(x, 1)?;
    let nabla_flat = geo.nabla(&geo.lower_first(&v)).value();
    let n = geo.n;
    Ok(DMatrix::from_fn(n, n, |i, j| nabla_flat.get(&[i, j]) + nabla_flat.get(&[j, i])))
}

/// `(dθ)_{ij} = ∂_i θ_j − ∂_j θ_i`, without a ½.
pub fn exterior_derivative(patch: &ChartPatch, x: &[f64], theta: &OneFormField) -> Result<DMatrix<f64>> {
    if !patch.contains(x) {
        return Err(GeometryError::OutsideDomain { point: x.to_vec() });
    }
    let t = theta.jets(x, 1)?;
    Ok(exterior_from_jets(&t))
}

pub(crate) fn exterior_from_jets(t: &JetTensor) -> DMatrix<f64> {
    let n = t.n;
    let grads: Vec<Vec<f64>> = t.comps.iter().map(Jet::grad).collect();
    DMatrix::from_fn(n, n, |i, j| grads[j][i] - grads[i][j])
}

/// `δΩ(Y) = −Σ_a ∇Ω(E_a, E_a, Y)`, traced with the inverse metric.
pub fn codifferential_2form(patch: &ChartPatch, x: &[f64], omega: &TwoFormField) -> Result<Vec<f64>> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    let nab = geo.nabla(&omega.jets(x, 1)?).value();
    let ginv = geo.inverse_value();
    let n = geo.n;
    Ok((0..n).map(|y| -(0..n * n).map(|ab| ginv[ab] * nab.get(&[ab / n, ab % n, y])).sum::<f64>()).collect())
}

/// The same codifferential traced over an explicit orthonormal frame.
pub fn codifferential_in_frame(
    patch: &ChartPatch,
    x: &[f64],
    omega: &TwoFormField,
    frame: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let geo = LocalGeometry::new(patch, x, 1)?;
    let nab = geo.nabla(&omega.jets(x, 1)?).value();
    let n = geo.n;
    Ok((0..n)
        .map(|y| {
            -frame
                .iter()
                .map(|e| {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += e[i] * e[j] * nab.get(&[i, j, y]);
                        }
                    }
                    s
                })
                .sum::<f64>()
        })
        .collect())
}

/// Ricci tensor as a field: jets of order `q` run the metric at order `q + 2`.
pub fn ricci_form(patch: &ChartPatch) -> TwoFormField {
    let p = patch.clone();
    TwoFormField::from_jets(patch.dim(), move |x, order| {
        let geo = LocalGeometry::new(&p, x, order + 2)?;
        Ok(geo.ricci_jets().comps)
    })
}

/// The Ricci endomorphism `S = g^{-1}ρ` as a field.
pub fn ricci_endomorphism(patch: &ChartPatch) -> EndoField {
    let p = patch.clone();
    EndoField::from_jets(patch.dim(), move |x, order| {
        let geo = LocalGeometry::new(&p, x, order + 2)?;
        let ric = geo.ricci_jets();
        Ok(geo.raise_first(&ric).comps)
    })
}

pub fn scalar_curvature(patch: &ChartPatch, x: &[f64]) -> Result<f64> {
    Ok(riemann(patch, x)?.scalar)
}

/// The metric-dual 1-form `θ = g(ξ, ·)`.
pub fn flat_of(patch: &ChartPatch, xi: &VectorField) -> OneFormField {
    let p = patch.clone();
    let xi = xi.clone();
    OneFormField::from_jets(patch.dim(), move |x, order| {
        let n = p.dim();
        let g = p.metric_jets(x, order)?;
        let v = xi.jets(x, order)?;
        Ok((0..n)
            .map(|j| {
                let mut acc = g[0].zero_like();
                for m in 0..n {
                    acc += &g[j * n + m] * &v.comps[m];
                }
                acc
            })
            .collect())
    })
}

/// `X^k ∂_k Y − Y^k ∂_k X` for first-order jet vector fields; value at the point.
pub fn bracket(x: &JetTensor, y: &JetTensor) -> Vec<f64> {
    let n = x.n;
    (0..n)
        .map(|i| {
            let gx = x.comps[i].grad();
            let gy = y.comps[i].grad();
            (0..n).map(|k| x.comps[k].value() * gy[k] - y.comps[k].value() * gx[k]).sum()
        })
        .collect()
}

/// `∇_X Y` at the point for first-order jet vector fields.
pub fn covariant_along(geo: &LocalGeometry, x: &JetTensor, y: &JetTensor) -> Vec<f64> {
    let nab = geo.nabla(y).value();
    let n = geo.n;
    (0..n).map(|i| (0..n).map(|k| x.comps[k].value() * nab.get(&[k, i])).sum()).collect()
}
