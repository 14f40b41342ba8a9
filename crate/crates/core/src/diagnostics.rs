//! Independent checks: the unrenormalized solver, rescaled errors, rate fits
//! and the constants appearing in the a-priori bounds.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, RgError};
use crate::kernel::{kernel_constants, KernelSpec};
use crate::linear::{heat_multiply, measure_contraction, rg_dilate, rg_linear_step};
use crate::nonlinear::{picard_on_grid, picard_solve, EvolutionConfig, Nonlinearity, StepContext};
use crate::par;
use crate::space::{bq_norm, make_gp, sup_norm_constant, SampledFunction, SpaceConfig};
use crate::timescale::TimeScale;

/// Ratio between consecutive window ends in [`direct_solve`].
pub const WINDOW_RATIO: f64 = 2.0;

/// `u(·, T)` for the unrenormalized equation, marching over windows
/// `[1, 2], [2, 4], …` with `cfg.nt` nodes each.
pub fn direct_solve(
    f0: &SampledFunction,
    lambda: f64,
    nl: &Nonlinearity,
    kernel: &KernelSpec,
    ts: &TimeScale,
    horizon: f64,
    cfg: &EvolutionConfig,
) -> Result<SampledFunction> {
    if !(horizon >= 1.0) {
        return Err(RgError::Domain(format!("horizon must be >= 1, got {horizon}")));
    }
    cfg.validate()?;
    if horizon == 1.0 {
        return Ok(f0.clone());
    }
    if lambda == 0.0 {
        return Ok(heat_multiply(f0, kernel, ts.s_of(horizon)?));
    }
    let mut u = f0.clone();
    let mut start = 1.0f64;
    while start < horizon {
        let end = (start * WINDOW_RATIO).min(horizon);
        let end = if horizon / end < 1.0 + 1e-12 { horizon } else { end };
        let dt = (end - start) / (cfg.nt - 1) as f64;
        let times: Vec<f64> = (0..cfg.nt).map(|i| if i + 1 == cfg.nt { end } else { start + i as f64 * dt }).collect();
        let clocks = times.iter().map(|&t| ts.s_of(t)).collect::<Result<Vec<_>>>()?;
        let traj = picard_on_grid(&u, nl, lambda, kernel, times, &clocks, cfg)?;
        log::debug!("direct window [{start}, {end}]: {} Picard iterations", traj.picard_iters);
        u = traj.last().clone();
        start = end;
    }
    Ok(u.with_tag(format!("u(T={horizon})")))
}

/// `‖T^{2β} u_T(T^β ·) - A G_p‖`.
pub fn rescaled_error(u_t: &SampledFunction, horizon: f64, a: f64, gp: &SampledFunction, beta: f64) -> Result<f64> {
    if !(horizon >= 1.0) {
        return Err(RgError::Domain(format!("horizon must be >= 1, got {horizon}")));
    }
    let (rescaled, _) = rg_dilate(u_t, horizon, beta)?;
    bq_norm(&rescaled.axpy(-a, gp))
}

/// Least-squares power law `e ≈ e^b t^slope`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// `(ln t, ln e)`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_rate(series: &[(f64, f64)]) -> Result<RateFit> {
    if series.len() < 3 {
        return Err(RgError::Domain(format!("rate fit needs >= 3 points, got {}", series.len())));
    }
    if let Some((t, e)) = series.iter().find(|(t, e)| !(*e > 0.0) || !(*t > 0.0)) {
        return Err(RgError::Domain(format!("rate fit needs positive data, got ({t}, {e})")));
    }
    let points: Vec<(f64, f64)> = series.iter().map(|(t, e)| (t.ln(), e.ln())).collect();
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RgError::Domain("rate fit needs distinct abscissae".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(RateFit { points, slope, intercept, residual })
}

/// `c ω^k e^{-bω²}` with `c ∈ {±1, ±i}` and its two ω-derivatives. For
/// `k >= 2` both `f̂(0)` and `f̂′(0)` vanish.
pub fn monomial_gaussian(cfg: SpaceConfig, k: i32, b: f64, coef: Complex64) -> SampledFunction {
    let kf = k as f64;
    let pw = move |w: f64, e: i32| if e < 0 { 0.0 } else { w.powi(e) };
    SampledFunction::from_fn(cfg, format!("w^{k} exp(-{b} w^2)"), move |w| {
        let e = (-b * w * w).exp();
        [
            coef * (pw(w, k) * e),
            coef * ((kf * pw(w, k - 1) - 2.0 * b * pw(w, k + 1)) * e),
            coef * ((kf * (kf - 1.0) * pw(w, k - 2) - 2.0 * b * (2.0 * kf + 1.0) * pw(w, k) + 4.0 * b * b * pw(w, k + 2)) * e),
        ]
    })
}

/// Real-valued test data with vanishing mass and first moment.
pub fn contraction_corpus(cfg: SpaceConfig) -> Vec<SampledFunction> {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    vec![
        monomial_gaussian(cfg, 2, 1.0, -one),
        monomial_gaussian(cfg, 2, 0.25, -one),
        monomial_gaussian(cfg, 3, 1.0, i),
        monomial_gaussian(cfg, 4, 0.5, one),
        monomial_gaussian(cfg, 5, 1.0, -i),
    ]
}

/// Largest `ratio · L^β` over `corpus`.
pub fn empirical_contraction_constant(
    corpus: &[SampledFunction],
    scale: f64,
    kernel: &KernelSpec,
    ts: &TimeScale,
) -> Result<f64> {
    let beta = (ts.p() + 1.0) / kernel.d;
    let reports = par::map_slice(corpus, |g| measure_contraction(g, 0, scale, kernel, ts));
    let mut c = 0.0f64;
    for r in reports {
        c = c.max(r?.constant(beta));
    }
    Ok(c)
}

/// `max_{n <= steps} ‖R_{L^n} G_p‖` measured along the linear orbit.
pub fn reference_orbit_sup(kernel: &KernelSpec, ts: &TimeScale, scale: f64, steps: u32, cfg: SpaceConfig) -> Result<f64> {
    let mut f = make_gp(kernel, ts.p(), cfg);
    let mut sup = bq_norm(&f)?;
    for n in 0..steps {
        f = rg_linear_step(&f, n, scale, kernel, ts)?;
        sup = sup.max(bq_norm(&f)?);
    }
    Ok(sup)
}

/// Amplitude of `G_p` data at which the first Picard solve stops converging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallnessThreshold {
    /// Largest amplitude found to converge.
    pub amplitude: f64,
    /// Its `B_q` norm.
    pub norm: f64,
    /// Smallest amplitude found to fail.
    pub failing_amplitude: f64,
}

/// Bisection on `a` in `f = a G_p` for convergence of the step-0 solve.
#[allow(clippy::too_many_arguments)]
pub fn empirical_threshold(
    kernel: &KernelSpec,
    ts: &TimeScale,
    nl: &Nonlinearity,
    lambda: f64,
    scale: f64,
    space: SpaceConfig,
    evolution: &EvolutionConfig,
    bisections: u32,
) -> Result<SmallnessThreshold> {
    let gp = make_gp(kernel, ts.p(), space);
    let ctx = StepContext { kernel, ts, n: 0, scale };
    let converges = |a: f64| picard_solve(&gp.scale(a), nl, lambda, ctx, evolution).is_ok();
    let (mut lo, mut hi) = (0.0f64, 0.01f64);
    while converges(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(RgError::Degenerate("no divergence found up to amplitude 1e6".into()));
        }
    }
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if converges(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SmallnessThreshold { amplitude: lo, norm: lo * bq_norm(&gp)?, failing_amplitude: hi })
}

/// Inputs of [`theory_ledger`].
#[derive(Debug, Clone)]
pub struct LedgerInputs<'a> {
    pub kernel: &'a KernelSpec,
    pub ts: &'a TimeScale,
    pub nl: &'a Nonlinearity,
    pub q: f64,
    pub scale: f64,
    pub delta: f64,
    /// Measured contraction constant, used where the bounds need `C`.
    pub contraction_constant: f64,
    /// Sup scan for the kernel profile.
    pub scan: &'a [f64],
    /// Steps over which `n`-dependent constants are maximized.
    pub n_uniform: u32,
}

/// Closed-form constants of the existence and convergence bounds.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryConstants {
    pub k: [f64; 3],
    pub c: [f64; 3],
    pub q: f64,
    pub l0: f64,
    pub l1: f64,
    /// `sup|u| <= C_q ‖u‖`.
    pub c_q: f64,
    /// `(2^{q+1}+3) ∫ (1+|x|^q)^{-1} dx`.
    pub c_conv: f64,
    /// Radius of the nonlinearity; `None` when entire.
    pub radius: Option<f64>,
    /// `min{r/C_q, 2πr/C_conv}`; `None` when entire.
    pub rho: Option<f64>,
    /// Argument at which `S_1`, `S_2` are evaluated.
    pub rho_eval: f64,
    pub s1: f64,
    pub s2: f64,
    pub clock_l: f64,
    pub c_bar_l: f64,
    pub c_t_d: f64,
    pub b_l_d: f64,
    /// Local existence threshold on `[1, L]`.
    pub epsilon: f64,
    /// `Q_n` and `ε_n` for `n = 0..=n_uniform`.
    pub q_n: Vec<f64>,
    pub epsilon_n: Vec<f64>,
    pub q_tilde: f64,
    pub c_tilde: f64,
    pub sigma: f64,
    pub c_dpq: f64,
    pub k_tilde: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m: f64,
    pub n: f64,
    /// Measured, not closed form.
    pub contraction_constant_empirical: f64,
    pub m_tilde: f64,
    pub d: f64,
    pub epsilon_bar: f64,
    pub l_delta: f64,
}

fn sup_over<F: Fn(f64) -> f64 + Sync>(scan: &[f64], f: F) -> f64 {
    par::max_range(scan.len(), |i| f(scan[i]))
}

/// `∫_0^{L-1} φ(τ)^{-1/d} dτ` with `φ(τ) = clock(L) - clock(L - τ)`.
fn clock_singular_integral<F: Fn(f64) -> Result<f64>>(clock: F, scale: f64, d: f64) -> Result<f64> {
    let top = clock(scale)?;
    // Below `h` the clock difference is replaced by its linearization.
    let h = 1e-6 * (scale - 1.0);
    let slope = (top - clock(scale - h)?) / h;
    let failure = std::cell::RefCell::new(None);
    let out = quadrature::integrate(
        // τ = u² removes the endpoint singularity for d >= 2.
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            if u * u < h {
                return 2.0 * u * (slope * u * u).powf(-1.0 / d);
            }
            match clock(scale - u * u) {
                Ok(s) => 2.0 * u * (top - s).powf(-1.0 / d),
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        0.0,
        (scale - 1.0).sqrt(),
        1e-12,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(out.integral),
    }
}

/// Evaluates every closed-form constant of the existence, contraction and
/// convergence bounds for one configuration.
pub fn theory_ledger(inp: &LedgerInputs<'_>) -> Result<TheoryConstants> {
    let kernel = inp.kernel;
    let d = kernel.d;
    let p = inp.ts.p();
    let q = inp.q;
    let scale = inp.scale;
    let kc = kernel_constants(kernel, q, inp.scan)?;
    let [k0, k1, k2] = kc.k;
    let [c0, c1, c2] = kc.c;
    let (l0, l1) = inp.ts.thresholds()?;

    let c_q = sup_norm_constant(q);
    let c_conv = (2f64.powf(q + 1.0) + 3.0) * 2.0 * (PI / q) / (PI / q).sin();
    let radius = inp.nl.radius;
    let rho = radius.map(|r| (r / c_q).min(2.0 * PI * r / c_conv));
    let rho_eval = rho.unwrap_or(1.0);
    // c_j = a_{j-1}/j for j >= alpha + 1.
    let cj: Vec<(f64, f64)> = inp.nl.terms().map(|(j, a)| ((j + 1) as f64, a / (j + 1) as f64)).collect();
    let base = c_conv / (2.0 * PI);
    let s1: f64 = cj.iter().map(|&(j, c)| base.powf(j - 1.0) * c.abs() * rho_eval.powf(j - 2.0)).sum();
    let s2: f64 = cj.iter().map(|&(j, c)| base.powf(j - 1.0) * c.abs() * j * rho_eval.powf(j - 2.0)).sum();

    let c_bar = |s: f64| 1.0 + k0 + 2.0 * k1 * s.powf(1.0 / d) + k2 * s.powf(2.0 / d);
    let b_factor = |s: f64, cint: f64| {
        (9.0 * k0 + 3.0 * c1 + s.powf(1.0 / d) * (7.0 * k1 + c2) + s.powf(2.0 / d) * k2) * (scale - 1.0) + 3.0 * c0 * cint
    };

    let clock_l = inp.ts.s_of(scale)?;
    let c_bar_l = c_bar(clock_l);
    let c_t_d = clock_singular_integral(|t| inp.ts.s_of(t), scale, d)?;
    let b_l_d = b_factor(clock_l, c_t_d);
    let eps1 = (1.0 / (b_l_d * c_bar_l * c_bar_l * s1)).min(rho_eval / c_bar_l);
    let epsilon = eps1.min(1.0 / (2.0 * b_l_d * c_bar_l * s2));

    let mut q_n = Vec::new();
    let mut epsilon_n = Vec::new();
    let mut c_tilde = 0.0f64;
    for n in 0..=inp.n_uniform {
        let s = inp.ts.s_n_of(n, scale, scale)?;
        let cb = c_bar(s);
        let cint = clock_singular_integral(|t| inp.ts.s_n_of(n, scale, t), scale, d)?;
        let qn = b_factor(s, cint) * cb * cb * s2;
        epsilon_n.push((1.0 / (2.0 * qn)).min(rho_eval / cb));
        q_n.push(qn);
        c_tilde = c_tilde.max(cb);
    }
    let q_tilde = q_n.iter().copied().fold(0.0, f64::max);
    let sigma = (1.0 / (2.0 * q_tilde)).min(rho_eval / c_tilde);

    let g = |y: f64, j: u8| kernel.profile(y, j).abs();
    let w = |y: f64| 1.0 + y.abs().powf(q);
    let sum3 = |y: f64| g(y, 0) + g(y, 1) + g(y, 2);
    let pp = p + 1.0;
    let c_dpq = 2.0 * pp.powf((q + 1.0) / d) * sup_over(inp.scan, |y| w(y) * (1.0 + y.abs()) * sum3(y));
    let t73 = 7.0 / (3.0 * pp);
    let bracket = 2.0 * k0 + 2.0 * k1 * t73.powf(1.0 / d) + k2 * t73.powf(2.0 / d);
    let k_tilde = (6.0 * pp).powf((q + 1.0) / d) * bracket * sup_over(inp.scan, |y| w(y) * (1.0 + y.abs()) * sum3(y));
    let m1 = pp.powf((q + 2.0) / d) * sup_over(inp.scan, |y| w(y) * y * y * sum3(y));
    let m2 = 2.0 * pp.powf((q + 1.0) / d) * sup_over(inp.scan, |y| w(y) * y.abs() * (g(y, 0) + 2.0 * g(y, 1)));
    let m3 = 2.0 * pp.powf(q / d) * sup_over(inp.scan, |y| w(y) * g(y, 0));
    let m = k1 * (m1 + m2 + m3);
    let n_const = k2 * pp.powf((q + 1.0) / d) * sup_over(inp.scan, |y| w(y) * y.abs() * g(y, 0));

    let c_emp = inp.contraction_constant;
    let m_tilde = (scale.powf((q + 1.0) * pp / d) + k_tilde) * q_tilde;
    let decay = scale.powf(-pp * (1.0 - inp.delta) / d);
    let d_const = 1.0 + k_tilde / (1.0 - decay);
    let epsilon_bar = (1.0 / (2.0 * scale.powf(pp * (1.0 - inp.delta) / d) * m_tilde * d_const * d_const)).min(sigma / d_const);
    let l_delta = l1.max((2.0 * c_emp * (1.0 + c_dpq)).powf(d / (inp.delta * pp)));

    Ok(TheoryConstants {
        k: kc.k,
        c: kc.c,
        q,
        l0,
        l1,
        c_q,
        c_conv,
        radius,
        rho,
        rho_eval,
        s1,
        s2,
        clock_l,
        c_bar_l,
        c_t_d,
        b_l_d,
        epsilon,
        q_n,
        epsilon_n,
        q_tilde,
        c_tilde,
        sigma,
        c_dpq,
        k_tilde,
        m1,
        m2,
        m3,
        m,
        n: n_const,
        contraction_constant_empirical: c_emp,
        m_tilde,
        d: d_const,
        epsilon_bar,
        l_delta,
    })
}
