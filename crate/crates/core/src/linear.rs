//! The linear flow (`λ = 0`) and the linear RG map.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, RgError};
use crate::kernel::KernelSpec;
use crate::par;
use crate::space::{bq_norm, dilate_spectra, project_zero_mass, DilationInfo, SampledFunction};
use crate::timescale::TimeScale;

/// Relative size of `f̂(0)` or `f̂′(0)` below which a moment counts as zero.
pub const MOMENT_TOL: f64 = 1e-10;

/// Product rule for `Ĝ·f` with `jet = (Ĝ, Ĝ′, Ĝ″)` and `f = (F0, F1, F2)`.
#[inline]
pub(crate) fn jet_mul(jet: [f64; 3], f: [Complex64; 3]) -> [Complex64; 3] {
    [
        f[0] * jet[0],
        f[0] * jet[1] + f[1] * jet[0],
        f[0] * jet[2] + f[1] * (2.0 * jet[1]) + f[2] * jet[0],
    ]
}

/// Multiplies `f` by the kernel at clock value `sigma >= 0`.
pub fn heat_multiply(f: &SampledFunction, kernel: &KernelSpec, sigma: f64) -> SampledFunction {
    if sigma == 0.0 {
        return f.clone();
    }
    let cfg = *f.cfg();
    let nodes = par::map_range(cfg.n, |k| {
        let jet = kernel.jet(cfg.omega(k), sigma);
        jet_mul(jet, [f.f0()[k], f.f1()[k], f.f2()[k]])
    });
    let mut spectra: [Vec<Complex64>; 3] = Default::default();
    for v in nodes {
        for j in 0..3 {
            spectra[j].push(v[j]);
        }
    }
    SampledFunction::from_spectra(cfg, spectra, f.tag()).expect("grid length preserved")
}

/// `u_f(·, t)` for the rescaled clock at step `n`: multiplication by
/// `Ĝ(·, s_n(t))` with derivative spectra from the product rule.
pub fn linear_evolve(f: &SampledFunction, kernel: &KernelSpec, ts: &TimeScale, n: u32, scale: f64, t: f64) -> Result<SampledFunction> {
    if t > scale {
        return Err(RgError::Domain(format!("t = {t} lies beyond the step end L = {scale}")));
    }
    let sigma = ts.s_n_of(n, scale, t)?;
    Ok(heat_multiply(f, kernel, sigma))
}

/// Dilation exponent `β = (p+1)/d`.
pub fn dilation_exponent(kernel: &KernelSpec, ts: &TimeScale) -> f64 {
    (ts.p() + 1.0) / kernel.d
}

/// `x ↦ L^{2β} u(L^β x)` on the spectra: amplitude law `(L^β, 1, L^{-β})`.
pub fn rg_dilate(u: &SampledFunction, scale: f64, beta: f64) -> Result<(SampledFunction, DilationInfo)> {
    let a = scale.powf(beta);
    dilate_spectra(u, a, [a, 1.0, 1.0 / a])
}

/// One linear RG step `f_n ↦ L^{2β} u_{f_n}(L^β ·, L)`.
pub fn rg_linear_step(f: &SampledFunction, n: u32, scale: f64, kernel: &KernelSpec, ts: &TimeScale) -> Result<SampledFunction> {
    rg_linear_step_with_info(f, n, scale, kernel, ts).map(|(g, _)| g)
}

/// [`rg_linear_step`] also returning the dilation bookkeeping.
pub fn rg_linear_step_with_info(
    f: &SampledFunction,
    n: u32,
    scale: f64,
    kernel: &KernelSpec,
    ts: &TimeScale,
) -> Result<(SampledFunction, DilationInfo)> {
    ts.require_admissible_scale(scale)?;
    let u = linear_evolve(f, kernel, ts, n, scale, scale)?;
    rg_dilate(&u, scale, dilation_exponent(kernel, ts))
}

/// `f, R f, R² f, …` for `steps` linear RG steps at scale `L`.
pub fn linear_orbit(f: &SampledFunction, steps: u32, scale: f64, kernel: &KernelSpec, ts: &TimeScale) -> Result<Vec<SampledFunction>> {
    let mut orbit = vec![f.clone()];
    for n in 0..steps {
        let next = rg_linear_step(orbit.last().expect("orbit is never empty"), n, scale, kernel, ts)?;
        orbit.push(next);
    }
    Ok(orbit)
}

/// `‖R_{L^m} f - R_L^m f‖`: one step at scale `L^m` against `m` steps at `L`.
/// Requires a scale-free clock, where steps at different `n` coincide.
pub fn check_semigroup(f: &SampledFunction, scale: f64, m: u32, kernel: &KernelSpec, ts: &TimeScale) -> Result<f64> {
    if m < 2 {
        return Err(RgError::Config(format!("semigroup check needs m >= 2, got {m}")));
    }
    if !ts.has_zero_remainder() {
        return Err(RgError::Hypothesis("semigroup identity needs a clock with zero remainder".into()));
    }
    let big = rg_linear_step(f, 0, scale.powi(m as i32), kernel, ts)?;
    let composed = linear_orbit(f, m, scale, kernel, ts)?.pop().expect("orbit is never empty");
    bq_norm(&(&big - &composed))
}

/// One row of a contraction measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearStepReport {
    pub n: u32,
    pub scale: f64,
    pub input_norm: f64,
    pub output_norm: f64,
    pub contraction_ratio: f64,
    pub interp_error: f64,
}

impl LinearStepReport {
    /// Empirical contraction constant `ratio · L^β`.
    pub fn constant(&self, beta: f64) -> f64 {
        self.contraction_ratio * self.scale.powf(beta)
    }
}

/// Errors unless `f̂(0)` and `f̂′(0)` are negligible relative to `‖f‖`.
pub fn require_vanishing_moments(g: &SampledFunction) -> Result<f64> {
    let norm = bq_norm(g)?;
    if norm == 0.0 {
        return Err(RgError::Degenerate("zero input has no contraction ratio".into()));
    }
    let m = g.moments();
    if m.mass.norm() > MOMENT_TOL * norm || m.first.norm() > MOMENT_TOL * norm {
        return Err(RgError::Hypothesis(format!(
            "contraction needs vanishing mass and first moment; got |f^(0)| = {:.3e}, |f^'(0)| = {:.3e}",
            m.mass.norm(),
            m.first.norm()
        )));
    }
    Ok(norm)
}

/// `‖R g‖ / ‖g‖` for `g` with vanishing mass and first moment.
pub fn measure_contraction(g: &SampledFunction, n: u32, scale: f64, kernel: &KernelSpec, ts: &TimeScale) -> Result<LinearStepReport> {
    let input_norm = require_vanishing_moments(g)?;
    let (out, info) = rg_linear_step_with_info(g, n, scale, kernel, ts)?;
    let output_norm = bq_norm(&out)?;
    Ok(LinearStepReport {
        n,
        scale,
        input_norm,
        output_norm,
        contraction_ratio: output_norm / input_norm,
        interp_error: info.interp_error.max(info.tail_bound),
    })
}

/// Splits `f = A·reference + g` with `A = -i f̂′(0)`; `g` has exactly zero
/// mass and first moment at the center node.
pub fn decompose_against(f: &SampledFunction, reference: &SampledFunction) -> Result<(f64, SampledFunction)> {
    let r = reference.moments().first;
    if (r - Complex64::i()).norm() > 1e-10 {
        return Err(RgError::BadReference { found: format!("{r}") });
    }
    let a = f.moments().prefactor;
    let g = f.axpy(-a, reference);
    let mut g = project_zero_mass(&g, 1e-8)?;
    let c = g.cfg().center();
    g.spectra_mut()[1][c] = Complex64::new(0.0, 0.0);
    Ok((a, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{make_gp, make_second_derivative_profile, Interp, SpaceConfig};
    use crate::timescale::CSpec;
    use approx::assert_relative_eq;

    fn gauss() -> KernelSpec {
        KernelSpec::gauss()
    }

    #[test]
    fn evolution_at_start_is_identity() {
        let cfg = SpaceConfig::default();
        let ts = TimeScale::pure_power(1.0).unwrap();
        let gp = make_gp(&gauss(), 1.0, cfg);
        assert_eq!(linear_evolve(&gp, &gauss(), &ts, 3, 4.0, 1.0).unwrap(), gp);
        assert!(linear_evolve(&gp, &gauss(), &ts, 0, 4.0, 5.0).is_err());
    }

    #[test]
    fn gaussian_evolution_closed_form() {
        // p = 0: s(4) = 3, so iω e^{-ω²} ↦ iω e^{-4ω²}.
        let cfg = SpaceConfig::default();
        let ts = TimeScale::pure_power(0.0).unwrap();
        let gp = make_gp(&gauss(), 0.0, cfg);
        let u = linear_evolve(&gp, &gauss(), &ts, 0, 4.0, 4.0).unwrap();
        let exact = SampledFunction::from_fn(cfg, "e", |w| {
            let e = (-4.0 * w * w).exp();
            let i = Complex64::i();
            [i * (w * e), i * ((1.0 - 8.0 * w * w) * e), i * ((-24.0 * w + 64.0 * w.powi(3)) * e)]
        });
        assert!(bq_norm(&(&u - &exact)).unwrap() < 1e-14);
        assert_eq!(u.moments().mass, gp.moments().mass);
    }

    #[test]
    fn linear_step_preserves_moments() {
        let cfg = SpaceConfig::default();
        let ts = TimeScale::from_spec(1.0, &CSpec::PowerPlusLower { terms: vec![(1.0, 0.0)] }).unwrap();
        let f = make_gp(&gauss(), 1.0, cfg).scale(1.7).axpy(0.4, &make_second_derivative_profile(&gauss(), cfg));
        let out = rg_linear_step(&f, 2, 8.0, &gauss(), &ts).unwrap();
        assert_eq!(out.moments().mass.norm(), 0.0);
        assert_eq!(out.moments().first, f.moments().first);
    }

    #[test]
    fn gp_is_a_fixed_point() {
        for (kernel, p, scale) in [(gauss(), 0.0, 4.0), (gauss(), 1.0, 2.0), (KernelSpec::by_name("quartic").unwrap(), 1.0, 3.0)] {
            let ts = TimeScale::pure_power(p).unwrap();
            let cfg = SpaceConfig::default().with_interp(Interp::Spectral);
            let gp = make_gp(&kernel, p, cfg);
            for n in [0, 5] {
                let out = rg_linear_step(&gp, n, scale, &kernel, &ts).unwrap();
                let err = bq_norm(&(&out - &gp)).unwrap();
                assert!(err < 1e-8, "{} p={p} L={scale}: {err}", kernel.name);
            }
            let cubic = make_gp(&kernel, p, SpaceConfig::default());
            let err = bq_norm(&(&rg_linear_step(&cubic, 0, scale, &kernel, &ts).unwrap() - &cubic)).unwrap();
            assert!(err < 5e-3, "cubic {} p={p} L={scale}: {err}", kernel.name);
        }
    }

    #[test]
    fn below_threshold_scale_rejected() {
        let ts = TimeScale::pure_power(0.0).unwrap();
        let gp = make_gp(&gauss(), 0.0, SpaceConfig::default());
        assert!(matches!(rg_linear_step(&gp, 0, 2.5, &gauss(), &ts), Err(RgError::Hypothesis(_))));
    }

    #[test]
    fn semigroup_residual() {
        let ts = TimeScale::pure_power(1.0).unwrap();
        let cfg = SpaceConfig::default();
        let gp = make_gp(&gauss(), 1.0, cfg);
        let single = bq_norm(&(&rg_linear_step(&gp, 0, 2.0, &gauss(), &ts).unwrap() - &gp)).unwrap();
        let big = bq_norm(&(&rg_linear_step(&gp, 0, 4.0, &gauss(), &ts).unwrap() - &gp)).unwrap();
        let residual = check_semigroup(&gp, 2.0, 2, &gauss(), &ts).unwrap();
        // Both sides equal G_p up to their own interpolation errors.
        assert!(residual <= 2.0 * single + big, "{residual} vs {single} + {big}");
        assert_eq!(check_semigroup(&SampledFunction::zeros(cfg), 2.0, 2, &gauss(), &ts).unwrap(), 0.0);
        let shifted = TimeScale::from_spec(1.0, &CSpec::PowerPlusLower { terms: vec![(1.0, 0.0)] }).unwrap();
        assert!(check_semigroup(&gp, 8.0, 2, &gauss(), &shifted).is_err());
    }

    #[test]
    fn semigroup_residual_converges_under_refinement() {
        let ts = TimeScale::pure_power(1.0).unwrap();
        let f = |cfg| {
            let gp = make_gp(&gauss(), 1.0, cfg);
            gp.axpy(0.5, &make_second_derivative_profile(&gauss(), cfg))
        };
        let coarse_cfg = SpaceConfig { n: 257, omega_max: 8.0, ..SpaceConfig::default() };
        let coarse = check_semigroup(&f(coarse_cfg), 2.0, 2, &gauss(), &ts).unwrap();
        let fine = check_semigroup(&f(coarse_cfg.refined()), 2.0, 2, &gauss(), &ts).unwrap();
        assert!(coarse >= 4.0 * fine, "{coarse} -> {fine}");
    }

    #[test]
    fn contraction_of_second_derivative_profile() {
        let ts = TimeScale::pure_power(0.0).unwrap();
        let cfg = SpaceConfig::default();
        let g = make_second_derivative_profile(&gauss(), cfg);
        let consts: Vec<f64> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&l| measure_contraction(&g, 0, l, &gauss(), &ts).unwrap().constant(0.5))
            .collect();
        let (lo, hi) = consts.iter().fold((f64::MAX, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
        assert!(hi / lo < 1.25, "{consts:?}");
        for c in &consts {
            assert_relative_eq!(*c, 1.0, max_relative = 1e-4);
        }
        // Beyond L = C^{d/(p+1)} the step contracts.
        let c4 = consts[0];
        for l in [4.0, 6.0, 9.0, 20.0] {
            if l > c4 * c4 {
                assert!(measure_contraction(&g, 0, l, &gauss(), &ts).unwrap().contraction_ratio < 1.0);
            }
        }
    }

    #[test]
    fn contraction_rejects_bad_inputs() {
        let ts = TimeScale::pure_power(0.0).unwrap();
        let cfg = SpaceConfig::default();
        assert!(matches!(
            measure_contraction(&SampledFunction::zeros(cfg), 0, 4.0, &gauss(), &ts),
            Err(RgError::Degenerate(_))
        ));
        let gp = make_gp(&gauss(), 0.0, cfg);
        assert!(matches!(measure_contraction(&gp, 0, 4.0, &gauss(), &ts), Err(RgError::Hypothesis(_))));
    }

    #[test]
    fn decomposition() {
        let cfg = SpaceConfig::default();
        let gp = make_gp(&gauss(), 1.0, cfg);
        let (a, g) = decompose_against(&gp.scale(3.0), &gp).unwrap();
        assert_eq!(a, 3.0);
        assert_eq!(bq_norm(&g).unwrap(), 0.0);
        let second = make_second_derivative_profile(&gauss(), cfg);
        let (a, g) = decompose_against(&(&gp + &second), &gp).unwrap();
        assert_eq!(a, 1.0);
        assert!(bq_norm(&(&g - &second)).unwrap() < 1e-15);
        assert!(matches!(decompose_against(&gp, &gp.scale(2.0)), Err(RgError::BadReference { .. })));
    }

    #[test]
    fn decomposition_after_a_step_contracts() {
        let ts = TimeScale::pure_power(0.0).unwrap();
        let cfg = SpaceConfig::default();
        let gp = make_gp(&gauss(), 0.0, cfg);
        let g0 = make_second_derivative_profile(&gauss(), cfg);
        let out = rg_linear_step(&(&gp + &g0), 0, 8.0, &gauss(), &ts).unwrap();
        let (a, g1) = decompose_against(&out, &gp).unwrap();
        assert_eq!(a, 1.0);
        let report = measure_contraction(&g0, 0, 8.0, &gauss(), &ts).unwrap();
        // g1 also carries the interpolation error of the G_p part.
        assert!(bq_norm(&g1).unwrap() <= report.contraction_ratio * bq_norm(&g0).unwrap() * (1.0 + 1e-3));
    }
}
