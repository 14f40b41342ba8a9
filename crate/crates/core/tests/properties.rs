use num_complex::Complex64;
use proptest::prelude::*;
use rgflow::diagnostics::{fit_rate, monomial_gaussian};
use rgflow::kernel::{evaluate_kernel_hat, kernel_constants, scan_grid};
use rgflow::linear::{linear_orbit, rg_linear_step};
use rgflow::nonlinear::{picard_solve, EvolutionConfig, Nonlinearity, PicardInit, StepContext};
use rgflow::rg::{run_flow, RGConfig};
use rgflow::space::{bq_norm, from_x_samples, make_gp, project_zero_mass};
use rgflow::timescale::CSpec;
use rgflow::{Interp, KernelSpec, SampledFunction, SpaceConfig, TimeScale};

fn kernels() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![Just("gauss"), Just("quartic"), Just("sextic")].prop_map(|n| KernelSpec::by_name(n).unwrap())
}

fn small() -> SpaceConfig {
    SpaceConfig { n: 513, omega_max: 16.0, interp: Interp::Spectral, ..SpaceConfig::default() }
}

/// Real, zero-mass data: a prefactor times `G_p` plus two monomial Gaussians.
fn data(space: SpaceConfig, a: f64, w2: f64, w3: f64, b: f64) -> SampledFunction {
    let gp = make_gp(&KernelSpec::gauss(), 0.0, space);
    gp.scale(a)
        .axpy(w2, &monomial_gaussian(space, 2, b, Complex64::new(1.0, 0.0)))
        .axpy(w3, &monomial_gaussian(space, 3, b, Complex64::new(0.0, 1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_decreases_in_time(k in kernels(), w in -20.0f64..20.0, t1 in 0.01f64..10.0, dt in 0.0f64..10.0) {
        let t2 = t1 + dt;
        let g1 = evaluate_kernel_hat(&k, w, t1, 0).unwrap().abs();
        let g2 = evaluate_kernel_hat(&k, w, t2, 0).unwrap().abs();
        // K0 = sup|ĝ| = 1 for the exp(-ω^d) family.
        prop_assert!(g2 <= g1 * (1.0 + 1e-14));
    }

    #[test]
    fn kernel_derivative_bound(k in kernels(), w in -20.0f64..20.0, t1 in 0.01f64..10.0, dt in 0.0f64..10.0) {
        let t2 = t1 + dt;
        let scan = scan_grid(12.0, 1e-3);
        let kc = kernel_constants(&k, 2.0, &scan).unwrap();
        let lhs = evaluate_kernel_hat(&k, w, t2, 1).unwrap().abs();
        let rhs = kc.k[1] * dt.powf(1.0 / k.d) * evaluate_kernel_hat(&k, w, t1, 0).unwrap().abs()
            + kc.k[0] * evaluate_kernel_hat(&k, w, t1, 1).unwrap().abs();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-300, "{} > {}", lhs, rhs);
    }

    #[test]
    fn unit_time_kernel_is_the_profile(k in kernels(), w in -30.0f64..30.0, j in 0u8..3) {
        prop_assert_eq!(evaluate_kernel_hat(&k, w, 1.0, j).unwrap(), k.profile(w, j));
    }

    #[test]
    fn kernel_constants_monotone_under_refinement(k in kernels(), q in 1.6f64..4.0, e in 0u32..3) {
        let step = 0.01 / f64::from(1 << e);
        let coarse = kernel_constants(&k, q, &scan_grid(16.0, step)).unwrap();
        let fine = kernel_constants(&k, q, &scan_grid(16.0, step / 2.0)).unwrap();
        for j in 0..3 {
            prop_assert!(fine.k[j] >= coarse.k[j]);
            prop_assert!(fine.c[j] >= coarse.c[j]);
            prop_assert!(fine.c[j] <= coarse.c[j] * 1.001);
        }
    }

    #[test]
    fn pure_power_clock_is_scale_free(p in 0.0f64..3.0, n in 0u32..13, scale in 1.5f64..10.0, u in 0.0f64..1.0) {
        let ts = TimeScale::pure_power(p).unwrap();
        let t = 1.0 + u * (scale - 1.0);
        let exact = (t.powf(p + 1.0) - 1.0) / (p + 1.0);
        let s = ts.s_n_of(n, scale, t).unwrap();
        prop_assert!((s - exact).abs() <= 1e-12 * (1.0 + exact), "{} vs {}", s, exact);
    }

    #[test]
    fn remainder_bound_beyond_l1(p in 0.6f64..3.0, coef in -0.5f64..2.0, frac in 0.0f64..1.0, n in 0u32..13, far in any::<bool>()) {
        // Exponents close to p decay too slowly to be admissible on the scan range.
        let ts = TimeScale::from_spec(p, &CSpec::PowerPlusLower { terms: vec![(coef, frac * (p - 0.5))] }).unwrap();
        let (_, l1) = ts.thresholds().unwrap();
        let scale = if far { 2.0 * l1 } else { l1 + 1.0 };
        let rel = ts.r_n_of(n, scale, scale).unwrap().abs() / scale.powf(p + 1.0);
        prop_assert!(rel < 1.0 / (2.0 * (p + 1.0)));
        let ratio = ts.s_n_of(n, scale, scale).unwrap() / scale.powf(p + 1.0);
        prop_assert!(ratio > 1.0 / (6.0 * (p + 1.0)) && ratio < 3.0 / (2.0 * (p + 1.0)));
    }

    #[test]
    fn bq_norm_is_a_norm(a1 in -2.0f64..2.0, w1 in -2.0f64..2.0, a2 in -2.0f64..2.0, w2 in -2.0f64..2.0, c in -8.0f64..8.0) {
        let space = small();
        let f = data(space, a1, w1, 0.3, 1.0);
        let g = data(space, a2, 0.2, w2, 0.5);
        let (nf, ng) = (bq_norm(&f).unwrap(), bq_norm(&g).unwrap());
        prop_assert!(bq_norm(&(&f + &g)).unwrap() <= nf + ng);
        // Homogeneity is exact up to the rounding of each node product.
        let scaled = bq_norm(&(&f * c)).unwrap();
        prop_assert!((scaled - c.abs() * nf).abs() <= 4.0 * f64::EPSILON * c.abs() * nf);
    }

    #[test]
    fn real_samples_give_real_spectra(c1 in 0.2f64..2.0, c2 in -1.0f64..1.0, x0 in -2.0f64..2.0) {
        let space = SpaceConfig { n: 257, omega_max: 8.0, ..SpaceConfig::default() };
        let xs: Vec<f64> = (0..2049).map(|i| -40.0 + 80.0 * i as f64 / 2048.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| c1 * (-x * x / 2.0).exp() + c2 * (-(x - x0).powi(2)).exp()).collect();
        let f = from_x_samples(space, &xs, &ys).unwrap();
        prop_assert!(f.reality_defect() <= 1e-12);
    }

    #[test]
    fn projection_clears_mass(a in -1.0f64..1.0, tiny in -1e-14f64..1e-14) {
        let space = small();
        let f = data(space, a, 0.5, 0.5, 1.0);
        let mut spectra = f.clone().into_spectra();
        spectra[0][space.center()] = Complex64::new(tiny, 0.0);
        let f = SampledFunction::from_spectra(space, spectra, "perturbed").unwrap();
        let m = project_zero_mass(&f, 1e-10).unwrap().moments();
        prop_assert_eq!(m.mass, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn reference_profile_is_bounded(k in kernels(), p in 0.0f64..2.0, q in prop_oneof![Just(1.6), Just(2.0), Just(3.0)]) {
        let space = SpaceConfig { q, ..SpaceConfig::default() };
        let n = bq_norm(&make_gp(&k, p, space)).unwrap();
        prop_assert!(n.is_finite() && n > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_step_preserves_mass_and_prefactor(a in -2.0f64..2.0, w2 in -1.0f64..1.0, w3 in -1.0f64..1.0, b in 0.5f64..2.0, n in 0u32..4) {
        let f = data(small(), a, w2, w3, b);
        let ts = TimeScale::pure_power(0.0).unwrap();
        let out = rg_linear_step(&f, n, 4.0, &KernelSpec::gauss(), &ts).unwrap();
        let c = small().center();
        prop_assert_eq!(out.f0()[c], Complex64::new(0.0, 0.0));
        prop_assert_eq!(out.f1()[c], f.f1()[c]);
    }

    #[test]
    fn linear_rescaled_error_decreases(a in 0.2f64..2.0, w2 in -1.0f64..1.0, w3 in -1.0f64..1.0, b in 0.5f64..2.0) {
        let space = small();
        let kernel = KernelSpec::gauss();
        let ts = TimeScale::pure_power(0.0).unwrap();
        let f = data(space, a, w2, w3, b);
        let gp = make_gp(&kernel, 0.0, space);
        let orbit = linear_orbit(&f, 6, 4.0, &kernel, &ts).unwrap();
        let errs: Vec<f64> = orbit.iter().map(|g| bq_norm(&g.axpy(-a, &gp)).unwrap()).collect();
        prop_assert!(errs[1..].windows(2).all(|w| w[1] < w[0]), "{:?}", errs);
        let series: Vec<(f64, f64)> = errs.iter().enumerate().map(|(n, &e)| (4f64.powi(n as i32), e)).collect();
        // (p+1)(1-δ)/d with δ = 0.2.
        prop_assert!(fit_rate(&series).unwrap().slope <= -0.4);
    }

    #[test]
    fn picard_keeps_zero_mass_and_is_init_independent(a in 0.005f64..0.1, w2 in -0.05f64..0.05) {
        let space = small();
        let kernel = KernelSpec::gauss();
        let ts = TimeScale::pure_power(0.0).unwrap();
        let f = data(space, a, w2, 0.0, 1.0);
        let ctx = StepContext { kernel: &kernel, ts: &ts, n: 0, scale: 4.0 };
        let nl = Nonlinearity::burgers();
        let evo = EvolutionConfig { nt: 17, ..EvolutionConfig::default() };
        let lin = picard_solve(&f, &nl, 1.0, ctx, &evo).unwrap();
        let zero = picard_solve(&f, &nl, 1.0, ctx, &EvolutionConfig { init: PicardInit::Zero, ..evo }).unwrap();
        let c = space.center();
        for s in lin.states.iter().chain(&zero.states) {
            prop_assert_eq!(s.f0()[c], Complex64::new(0.0, 0.0));
        }
        let gap = lin.states.iter().zip(&zero.states).map(|(u, v)| bq_norm(&(u - v)).unwrap()).fold(0.0, f64::max);
        prop_assert!(gap < 10.0 * evo.picard_tol, "{}", gap);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn nonlinear_orbit_invariants(a in 0.005f64..0.05, w2 in -0.02f64..0.02, w3 in -0.02f64..0.02) {
        let space = small();
        let cfg = RGConfig {
            scale: 4.0,
            n_max: 6,
            delta: 0.2,
            lambda: 1.0,
            kernel: KernelSpec::gauss(),
            ts: TimeScale::pure_power(0.0).unwrap(),
            nl: Nonlinearity::burgers(),
            evolution: EvolutionConfig::default(),
        };
        let f0 = data(space, a, w2, w3, 1.0);
        let flow = run_flow(&f0, &cfg).unwrap();
        prop_assert!(flow.complete());
        let c = space.center();
        let norm0 = bq_norm(&f0).unwrap();
        for (r, f) in flow.records.iter().zip(&flow.orbit) {
            prop_assert_eq!(f.f0()[c], Complex64::new(0.0, 0.0));
            prop_assert!(r.decomposition_residual <= 1e-13 * r.norm_f);
            prop_assert_eq!(r.lambda_n, 0.5f64.powi(r.n as i32));
            // ‖f_n‖ <= D ‖f_0‖ with a modest D.
            prop_assert!(r.norm_f <= 3.0 * norm0);
        }
        let deltas: Vec<f64> = flow.delta_a().iter().map(|d| d.abs()).collect();
        let bound = cfg.coupling_ratio() * 1.5;
        for w in deltas.windows(2).skip(1) {
            prop_assert!(w[1] <= bound * w[0], "{:?}", deltas);
        }
        // min{(p+1)/d, d_F/d} = 1/2, relaxed by 0.8. g_0 vanishes for pure
        // multiples of G_p, so the fit starts at n = 1.
        let g: Vec<(f64, f64)> = flow.records.iter().skip(1).map(|r| (4f64.powi(r.n as i32), r.norm_g)).collect();
        prop_assert!(fit_rate(&g).unwrap().slope <= -0.4);
    }
}
