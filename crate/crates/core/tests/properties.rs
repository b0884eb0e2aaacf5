use atensor_core::analysis::{construct_s_from_killing, cyclic_residual_at, eigenstructure, killing_and_t};
use atensor_core::chart::inner;
use atensor_core::constructions::{berger_bundle, perturbed_sphere_patch, round_sphere_patch, surface_base};
use atensor_core::curvature::{metric_compatibility_residual, riemann, sectional_curvature};
use atensor_core::geodesic::{integrate_geodesic, DEFAULT_TOL};
use atensor_core::oracle::{oracle_gaps, DEFAULT_STEP};
use atensor_core::Jet;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_derivatives_match_closed_forms(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let v = Jet::seeds(&[x, y], 3);
        let f = &(&v[0] * &v[0]) * &v[1] + v[0].sin() * v[1].exp();
        let g = f.grad();
        let h = f.hess();
        prop_assert!(close(f.value(), x * x * y + x.sin() * y.exp(), 1e-14));
        prop_assert!(close(g[0], 2.0 * x * y + x.cos() * y.exp(), 1e-13));
        prop_assert!(close(g[1], x * x + x.sin() * y.exp(), 1e-13));
        prop_assert!(close(h[0], 2.0 * y - x.sin() * y.exp(), 1e-13));
        prop_assert!(close(h[1], 2.0 * x + x.cos() * y.exp(), 1e-13));
        prop_assert!(close(h[1], h[2], 1e-15));
        prop_assert!(close(h[3], x.sin() * y.exp(), 1e-13));
        // Third partial through two derivative steps.
        let fxxy = f.partial(0).partial(0).partial(1).value();
        prop_assert!(close(fxxy, 2.0 - x.sin() * y.exp(), 1e-12));
    }

    #[test]
    fn recip_sqrt_and_log_invert(x in 0.2f64..3.0, y in 0.2f64..3.0) {
        let v = Jet::seeds(&[x, y], 4);
        let s = &v[0] * &v[1] + 1.0;
        let back = s.sqrt().square() - &s;
        let one = &s * &s.recip() - 1.0;
        let id = s.ln().exp() - &s;
        for j in [back, one, id] {
            prop_assert!(j.coefficients().iter().all(|c| c.abs() < 1e-11), "{:?}", j);
        }
    }

    #[test]
    fn round_sphere_has_constant_sectional_curvature(r in 0.5f64..3.0, seed in 0u64..1000) {
        let p = round_sphere_patch(3, r).unwrap();
        let x = &p.samples(1, seed)[0];
        let k = sectional_curvature(&p, x, &[1.0, 0.3, 0.0], &[0.0, 0.5, 1.0]).unwrap();
        prop_assert!(close(k, 1.0 / (r * r), 1e-10), "{} vs {}", k, 1.0 / (r * r));
    }

    #[test]
    fn levi_civita_is_compatible_and_matches_differences(eps in -0.45f64..0.45, seed in 0u64..1000) {
        let p = perturbed_sphere_patch(eps).unwrap();
        let x = &p.samples(1, seed)[0];
        prop_assert!(metric_compatibility_residual(&p, x).unwrap() < 1e-12);
        let (a, b) = oracle_gaps(&p, x, DEFAULT_STEP).unwrap();
        prop_assert!(a < 1e-6 && b < 1e-6, "{} {}", a, b);
        let c = riemann(&p, x).unwrap();
        prop_assert!(c.bianchi_residual() < 1e-10);
        prop_assert!(c.antisymmetry_residual() < 1e-10);
    }

    #[test]
    fn berger_ricci_satisfies_cyclic_condition(k in prop_oneof![0.5f64..3.0, -3.0f64..-0.5], c in 0.2f64..1.5, seed in 0u64..1000) {
        let spec = berger_bundle(&surface_base(k).unwrap(), c).unwrap();
        let x = &spec.patch.samples(1, seed)[0];
        let r = cyclic_residual_at(&spec.patch, &spec.ricci_endomorphism(), x).unwrap();
        prop_assert!(r <= 1e-8, "K = {} c = {}: {:e}", k, c, r);
        let es = eigenstructure(&spec.patch, &spec.ricci_endomorphism(), x).unwrap();
        let want = if spec.is_einstein() { vec![spec.lambda_formula()] } else {
            let mut v = vec![spec.lambda_formula(), spec.mu_formula()];
            v.sort_by(f64::total_cmp);
            v
        };
        prop_assert_eq!(es.eigenvalues.len(), want.len());
        for (a, b) in es.eigenvalues.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn constructed_endomorphism_round_trips(lambda in -5.0f64..5.0, gap in 0.1f64..5.0, seed in 0u64..1000) {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let mu = lambda + gap;
        let s = construct_s_from_killing(&spec.patch, &spec.xi, lambda, mu).unwrap();
        let x = &spec.patch.samples(1, seed)[0];
        let es = eigenstructure(&spec.patch, &s, x).unwrap();
        prop_assert_eq!(&es.multiplicities, &vec![1, 2]);
        prop_assert!((es.eigenvalues[0] - lambda).abs() < 1e-10);
        prop_assert!((es.eigenvalues[1] - mu).abs() < 1e-10);
        // S ξ = λ ξ and the trace is constant.
        let sx = s.value(x).unwrap();
        let xi = spec.xi.value(x).unwrap().comps;
        for i in 0..3 {
            let v: f64 = (0..3).map(|j| sx.comps[i * 3 + j] * xi[j]).sum();
            prop_assert!((v - lambda * xi[i]).abs() < 1e-10);
        }
        let tr: f64 = (0..3).map(|i| sx.comps[i * 4]).sum();
        prop_assert!((tr - (lambda + 2.0 * mu)).abs() < 1e-10);
        prop_assert!(cyclic_residual_at(&spec.patch, &s, x).unwrap() <= 1e-8);
    }

    #[test]
    fn deformation_norm_is_vertical_eigenvalue(c in 0.2f64..1.5, seed in 0u64..1000) {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), c).unwrap();
        let pts = spec.patch.samples(3, seed);
        let k = killing_and_t(&spec.patch, &spec.xi, &pts).unwrap();
        for (x, t) in pts.iter().zip(&k.t_norm_sq) {
            let es = eigenstructure(&spec.patch, &spec.ricci_endomorphism(), x).unwrap();
            let xi = spec.xi.value(x).unwrap().comps;
            let near = es.eigenvalues.iter().map(|l| (l - t).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(near < 1e-9, "|T|^2 = {} not among {:?}", t, es.eigenvalues);
            prop_assert!((inner(es.metric(), &xi, &xi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geodesics_keep_their_speed(seed in 0u64..1000, a in 0.0f64..std::f64::consts::TAU) {
        let spec = berger_bundle(&surface_base(1.0).unwrap(), 0.8).unwrap();
        let x = spec.patch.samples(1, seed).remove(0);
        let e = spec.adapted_frame(&x).unwrap();
        let v: Vec<f64> = (0..3).map(|i| a.cos() * e[1][i] + a.sin() * e[0][i]).collect();
        let traj = integrate_geodesic(&spec.patch, &x, &v, 3.0, DEFAULT_TOL).unwrap();
        for s in &traj.states {
            let g = spec.patch.metric_value(&s.x).unwrap();
            prop_assert!((inner(&g, &s.v, &s.v) - 1.0).abs() < 1e-8);
        }
    }
}
