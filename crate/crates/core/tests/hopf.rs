//! The same Berger geometry over two charts of the round 2-sphere: the
//! affine chart of the complex projective line and the spherical chart of
//! the curvature-4 surface. In adapted orthonormal frames their curvature
//! components must agree.

use atensor_core::constructions::{berger_bundle, fubini_study_base, surface_base, BergerBundleSpec};
use atensor_core::curvature::riemann;

fn frame_components(spec: &BergerBundleSpec, x: &[f64]) -> Vec<f64> {
    let curv = riemann(&spec.patch, x).unwrap();
    let low = curv.lowered();
    let e = spec.adapted_frame(x).unwrap();
    let n = e.len();
    let mut out = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = 0.0;
                    for (l, i, j, k) in quadruples(n) {
                        s += low.get(&[l, i, j, k]) * e[a][l] * e[b][i] * e[c][j] * e[d][k];
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

fn quadruples(n: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..n.pow(4)).map(move |f| (f / (n * n * n), (f / (n * n)) % n, (f / n) % n, f % n))
}

#[test]
fn projective_line_and_round_sphere_bundles_agree() {
    let fs = fubini_study_base(1).unwrap();
    let sphere = surface_base(4.0).unwrap();
    assert!((fs.alpha - sphere.alpha).abs() < 1e-10, "{} vs {}", fs.alpha, sphere.alpha);
    for c in [0.3, 0.5, 0.9] {
        let a = berger_bundle(&fs, c).unwrap();
        let b = berger_bundle(&sphere, c).unwrap();
        let reference = frame_components(&a, &a.patch.center());
        for (pa, pb) in a.patch.samples(20, 3).iter().zip(b.patch.samples(20, 5).iter()) {
            for (u, v) in frame_components(&a, pa).iter().zip(frame_components(&b, pb).iter()) {
                assert!((u - v).abs() <= 1e-8, "c = {c}: {u} vs {v}");
            }
            for (u, v) in frame_components(&a, pa).iter().zip(&reference) {
                assert!((u - v).abs() <= 1e-8, "homogeneity, c = {c}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn closed_forms_agree_across_charts() {
    let a = berger_bundle(&fubini_study_base(1).unwrap(), 0.5).unwrap();
    let b = berger_bundle(&surface_base(4.0).unwrap(), 0.5).unwrap();
    assert!((a.lambda_formula() - b.lambda_formula()).abs() < 1e-12);
    assert!((a.mu_formula() - b.mu_formula()).abs() < 1e-12);
    assert!((a.tau_formula() - b.tau_formula()).abs() < 1e-12);
    assert!(a.is_einstein() && b.is_einstein());
}
