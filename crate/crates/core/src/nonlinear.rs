//! Nonlinear Duhamel term and the Picard solver on one RG step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::fourier;
use crate::kernel::KernelSpec;
use crate::linear::{heat_multiply, jet_mul};
use crate::par;
use crate::space::{bq_norm, sup_norm_constant, SampledFunction};
use crate::timescale::TimeScale;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative spectral energy beyond `0.9 omega_max` that counts as aliasing.
pub const ALIAS_TOL: f64 = 1e-8;

/// `F(u, u_x) = Σ_{j=alpha}^{jmax} a_j u^j u_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    /// Leading power.
    pub alpha: u32,
    /// `a_alpha, a_{alpha+1}, …, a_jmax`.
    pub coeffs: Vec<f64>,
    /// Convergence radius of the series; `None` for polynomials.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl Nonlinearity {
    pub fn new(alpha: u32, coeffs: Vec<f64>, radius: Option<f64>) -> Result<Self> {
        let nl = Self { alpha, coeffs, radius };
        nl.validate()?;
        Ok(nl)
    }

    /// `u u_x`.
    pub fn burgers() -> Self {
        Self { alpha: 1, coeffs: vec![1.0], radius: None }
    }

    /// `a u^alpha u_x`.
    pub fn power(alpha: u32, a: f64) -> Result<Self> {
        Self::new(alpha, vec![a], None)
    }

    /// Truncation of an analytic series at `jmax` (default `alpha + 3`).
    pub fn from_series<F: Fn(u32) -> f64>(alpha: u32, radius: f64, jmax: Option<u32>, a: F) -> Result<Self> {
        let jmax = jmax.unwrap_or(alpha + 3);
        if jmax < alpha {
            return Err(RgError::Config(format!("jmax = {jmax} is below alpha = {alpha}")));
        }
        Self::new(alpha, (alpha..=jmax).map(a).collect(), Some(radius))
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0 {
            return Err(RgError::Config("leading power alpha must be >= 1".into()));
        }
        if self.coeffs.is_empty() || self.coeffs.iter().any(|a| !a.is_finite()) {
            return Err(RgError::Config("coefficients must be finite and non-empty".into()));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(RgError::Config(format!("radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn jmax(&self) -> u32 {
        self.alpha + self.coeffs.len() as u32 - 1
    }

    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(f64::INFINITY)
    }

    /// `(j, a_j)` for nonzero coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(move |(k, a)| (self.alpha + k as u32, *a))
    }

    /// Critical power `(d - (p+1)) / (2(p+1))`.
    pub fn alpha_c(p: f64, d: f64) -> f64 {
        (d - (p + 1.0)) / (2.0 * (p + 1.0))
    }

    /// Scaling dimension `(2 alpha + 3)(p+1) - 2(p+1) - d`.
    pub fn d_f(&self, p: f64, d: f64) -> f64 {
        (2.0 * self.alpha as f64 + 3.0) * (p + 1.0) - 2.0 * (p + 1.0) - d
    }

    /// Same powers with `a_j ↦ factor(j) a_j`.
    pub fn rescaled<F: Fn(u32) -> f64>(&self, factor: F) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(k, a)| a * factor(self.alpha + k as u32)).collect();
        Self { alpha: self.alpha, coeffs, radius: self.radius }
    }
}

/// Time quadrature of the Duhamel integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    /// Composite Simpson; the last three intervals use the 3/8 rule when the
    /// interval count is odd.
    Simpson,
}

/// Initial Picard iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PicardInit {
    /// The linear trajectory `u_f`.
    #[default]
    Linear,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Time nodes on `[1, L]`, uniform in `t`.
    pub nt: usize,
    pub quadrature: QuadratureRule,
    /// Absolute tolerance on `sup_t ‖u^{k+1} - u^k‖`.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub init: PicardInit,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { nt: 33, quadrature: QuadratureRule::Trapezoid, picard_tol: 1e-12, picard_max: 60, init: PicardInit::Linear }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nt < 9 {
            return Err(RgError::Config(format!("nt must be >= 9, got {}", self.nt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(RgError::Config("picard_tol must be positive".into()));
        }
        if self.picard_max == 0 {
            return Err(RgError::Config("picard_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Kernel, clock and step index shared by everything inside one RG step.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub kernel: &'a KernelSpec,
    pub ts: &'a TimeScale,
    pub n: u32,
    pub scale: f64,
}

impl StepContext<'_> {
    /// Uniform nodes `1 = t_0 < … < t_{nt-1} = L`.
    pub fn times(&self, nt: usize) -> Vec<f64> {
        let dt = (self.scale - 1.0) / (nt - 1) as f64;
        (0..nt).map(|i| if i + 1 == nt { self.scale } else { 1.0 + i as f64 * dt }).collect()
    }

    fn clocks(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.ts.s_n_of(self.n, self.scale, t)).collect()
    }
}

/// Solution of the integral equation on `[1, L]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SampledFunction>,
    /// Duhamel term at each node; `states = u_f + duhamel`.
    pub duhamel: Vec<SampledFunction>,
    pub picard_iters: usize,
    pub final_residual: f64,
    /// `‖u^{k+1} - u^k‖_L / ‖u^k - u^{k-1}‖_L` per iteration.
    pub lipschitz_ratios: Vec<f64>,
    /// `max(0, ‖u - u_f‖_L - ‖f‖)`; positive when the iterate left the ball.
    pub ball_excess: f64,
    pub converged: bool,
}

impl Trajectory {
    /// An unsolved trajectory carrying given states (Duhamel terms unset).
    pub fn from_states(times: Vec<f64>, states: Vec<SampledFunction>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(RgError::Config("times and states must have equal, nonzero length".into()));
        }
        let zero = SampledFunction::zeros(*states[0].cfg());
        Ok(Self {
            duhamel: vec![zero; times.len()],
            times,
            states,
            picard_iters: 0,
            final_residual: f64::INFINITY,
            lipschitz_ratios: Vec::new(),
            ball_excess: 0.0,
            converged: false,
        })
    }

    /// Largest recorded Lipschitz ratio.
    pub fn max_ratio(&self) -> f64 {
        self.lipschitz_ratios.iter().copied().fold(0.0, f64::max)
    }

    /// `‖u‖_L = sup_t ‖u(t)‖`.
    pub fn sup_norm(&self) -> Result<f64> {
        sup_distance(&self.states, None)
    }

    pub fn last(&self) -> &SampledFunction {
        self.states.last().expect("trajectory is never empty")
    }
}

fn sup_distance(a: &[SampledFunction], b: Option<&[SampledFunction]>) -> Result<f64> {
    let norms: Vec<Result<f64>> = match b {
        Some(b) => par::map_range(a.len(), |i| bq_norm(&(&a[i] - &b[i]))),
        None => par::map_slice(a, bq_norm),
    };
    let mut m = 0.0f64;
    for v in norms {
        let v = v?;
        m = if v.is_nan() { f64::NAN } else { m.max(v) };
    }
    Ok(m)
}

/// Output spectra `(iω ŵ, (iω ŵ)′, (iω ŵ)″)` for `∂ₓW` from the transforms
/// of `W`, `-ixW`, `-x²W` sampled on a padded x grid.
fn derivative_of_primitive(cfg: &crate::space::SpaceConfig, w: &[Complex64], dxp: f64) -> Result<[Vec<Complex64>; 3]> {
    let padded = w.len();
    let mp = (padded / 2) as f64;
    let xw: Vec<Complex64> = w.iter().enumerate().map(|(i, v)| v * Complex64::new(0.0, -(i as f64 - mp) * dxp)).collect();
    let x2w: Vec<Complex64> = w.iter().enumerate().map(|(i, v)| v * (-((i as f64 - mp) * dxp).powi(2))).collect();

    let full = fourier::x_to_spectrum(w, dxp, padded);
    check_aliasing(cfg, &full)?;
    let n = cfg.n;
    let off = (padded - n) / 2;
    let w0 = &full[off..off + n];
    let w1 = fourier::x_to_spectrum(&xw, dxp, n);
    let w2 = fourier::x_to_spectrum(&x2w, dxp, n);

    let mut out: [Vec<Complex64>; 3] = Default::default();
    for k in 0..n {
        let iw = I * cfg.omega(k);
        out[0].push(iw * w0[k]);
        out[1].push(I * w0[k] + iw * w1[k]);
        out[2].push(I * (2.0 * w1[k]) + iw * w2[k]);
    }
    Ok(out)
}

/// Energy of `iω ŵ` beyond `0.9 omega_max`, relative to the total, on the
/// padded frequency grid.
fn check_aliasing(cfg: &crate::space::SpaceConfig, full: &[Complex64]) -> Result<()> {
    let h = cfg.step();
    let mp = (full.len() / 2) as f64;
    let cut = 0.9 * cfg.omega_max;
    let (mut high, mut total) = (0.0, 0.0);
    for (i, v) in full.iter().enumerate() {
        let w = (i as f64 - mp) * h;
        let e = w * w * v.norm_sqr();
        total += e;
        if w.abs() > cut {
            high += e;
        }
    }
    if total > 0.0 && high > ALIAS_TOL * total {
        return Err(RgError::Resolution(format!(
            "nonlinear term has relative energy {:.2e} beyond 0.9·omega_max",
            high / total
        )));
    }
    Ok(())
}

fn check_radius(u: &SampledFunction, nl: &Nonlinearity) -> Result<()> {
    let radius = nl.radius();
    if radius.is_finite() {
        let bound = sup_norm_constant(u.cfg().q) * bq_norm(u)?;
        if bound >= radius {
            return Err(RgError::OutsideAnalyticity { bound, radius });
        }
    }
    Ok(())
}

/// Spectra of `F(u, u_x) = ∂ₓ Σ a_j u^{j+1}/(j+1)` at one time.
pub fn apply_f(u: &SampledFunction, nl: &Nonlinearity) -> Result<SampledFunction> {
    check_radius(u, nl)?;
    let cfg = *u.cfg();
    if nl.terms().next().is_none() {
        return Ok(SampledFunction::zeros(cfg));
    }
    let padded = fourier::padded_len(cfg.n, cfg.dealias_pad);
    let dxp = 2.0 * std::f64::consts::PI / (padded as f64 * cfg.step());
    let ux = fourier::spectrum_to_x(u.f0(), cfg.step(), padded);
    let jmax = nl.jmax();
    let w: Vec<Complex64> = ux
        .iter()
        .map(|&v| {
            let mut acc = ZERO;
            let mut pow = v;
            for j in 1..=jmax {
                pow *= v;
                if j >= nl.alpha {
                    let a = nl.coeffs[(j - nl.alpha) as usize];
                    acc += pow * (a / (j + 1) as f64);
                }
            }
            acc
        })
        .collect();
    let spectra = derivative_of_primitive(&cfg, &w, dxp)?;
    SampledFunction::from_spectra(cfg, spectra, "F(u)")
}

/// Product-form evaluation `Σ a_j u^j u_x` (consistency check for
/// [`apply_f`]).
pub fn apply_f_direct(u: &SampledFunction, nl: &Nonlinearity) -> Result<SampledFunction> {
    check_radius(u, nl)?;
    let cfg = *u.cfg();
    let padded = fourier::padded_len(cfg.n, cfg.dealias_pad);
    let h = cfg.step();
    let dxp = 2.0 * std::f64::consts::PI / (padded as f64 * h);
    let ux = fourier::spectrum_to_x(u.f0(), h, padded);
    let dspec: Vec<Complex64> = u.f0().iter().enumerate().map(|(k, v)| v * I * cfg.omega(k)).collect();
    let dux = fourier::spectrum_to_x(&dspec, h, padded);
    let mp = (padded / 2) as f64;
    let prod: Vec<Complex64> = ux
        .iter()
        .zip(&dux)
        .map(|(&v, &dv)| nl.terms().map(|(j, a)| v.powu(j) * dv * a).sum())
        .collect();
    let out = [0u32, 1, 2].map(|j| {
        let weighted: Vec<Complex64> = prod
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::new(0.0, -(i as f64 - mp) * dxp).powu(j))
            .collect();
        fourier::x_to_spectrum(&weighted, dxp, cfg.n)
    });
    SampledFunction::from_spectra(cfg, out, "F(u) direct")
}

/// Quadrature weights on nodes `0..=i` with step `dt`.
fn weights(rule: QuadratureRule, i: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![0.0; i + 1];
    if i == 0 {
        return w;
    }
    let trapezoid = |w: &mut [f64]| {
        let m = w.len() - 1;
        for (k, v) in w.iter_mut().enumerate() {
            *v += if k == 0 || k == m { dt / 2.0 } else { dt };
        }
    };
    let simpson = |w: &mut [f64]| {
        let m = w.len() - 1;
        for (k, v) in w.iter_mut().enumerate() {
            let c = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            *v += c * dt / 3.0;
        }
    };
    match rule {
        QuadratureRule::Trapezoid => trapezoid(&mut w),
        QuadratureRule::Simpson if i == 1 => trapezoid(&mut w),
        QuadratureRule::Simpson if i.is_multiple_of(2) => simpson(&mut w),
        QuadratureRule::Simpson => {
            if i > 3 {
                simpson(&mut w[..=i - 3]);
            }
            for (k, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                w[i - 3 + k] += 3.0 * dt / 8.0 * c;
            }
        }
    }
    w
}

/// `λ Σ_j w_j Ĝ(·, σ_i - σ_j) F_j` at one node `i`, as a direct sum.
fn duhamel_direct(fs: &[SampledFunction], clocks: &[f64], w: &[f64], i: usize, lambda: f64, kernel: &KernelSpec) -> SampledFunction {
    let cfg = *fs[0].cfg();
    let mut acc = SampledFunction::zeros(cfg);
    for (j, wj) in w.iter().enumerate().take(i + 1) {
        if *wj == 0.0 {
            continue;
        }
        let term = heat_multiply(&fs[j], kernel, clocks[i] - clocks[j]);
        acc = acc.axpy(lambda * wj, &term);
    }
    acc.with_tag("duhamel")
}

/// Duhamel term at `times[t_index]` for the states in `traj`.
pub fn duhamel_term(
    traj: &Trajectory,
    nl: &Nonlinearity,
    lambda: f64,
    ctx: StepContext<'_>,
    t_index: usize,
    rule: QuadratureRule,
) -> Result<SampledFunction> {
    let nt = traj.times.len();
    if t_index >= nt {
        return Err(RgError::Domain(format!("time index {t_index} outside trajectory of {nt} nodes")));
    }
    if nt < 3 {
        return Err(RgError::Config(format!("Duhamel quadrature needs >= 3 time nodes, got {nt}")));
    }
    let cfg = *traj.states[0].cfg();
    if lambda == 0.0 || t_index == 0 {
        return Ok(SampledFunction::zeros(cfg).with_tag("duhamel"));
    }
    let fs = traj.states[..=t_index].iter().map(|u| apply_f(u, nl)).collect::<Result<Vec<_>>>()?;
    let clocks = ctx.clocks(&traj.times[..=t_index])?;
    let dt = (ctx.scale - 1.0) / (nt - 1) as f64;
    Ok(duhamel_direct(&fs, &clocks, &weights(rule, t_index, dt), t_index, lambda, ctx.kernel))
}

/// Duhamel term at every node. The trapezoid rule uses the exact recursion
/// `S_{i+1} = Ĝ(σ_{i+1} - σ_i)(S_i + c_i F_i)`, which costs O(nt) per node.
pub fn duhamel_all(
    states: &[SampledFunction],
    clocks: &[f64],
    dt: f64,
    nl: &Nonlinearity,
    lambda: f64,
    kernel: &KernelSpec,
    rule: QuadratureRule,
) -> Result<Vec<SampledFunction>> {
    let nt = states.len();
    let cfg = *states[0].cfg();
    if lambda == 0.0 {
        return Ok(vec![SampledFunction::zeros(cfg).with_tag("duhamel"); nt]);
    }
    let fs = par::map_slice(states, |u| apply_f(u, nl)).into_iter().collect::<Result<Vec<_>>>()?;
    match rule {
        QuadratureRule::Simpson => Ok(par::map_range(nt, |i| duhamel_direct(&fs, clocks, &weights(rule, i, dt), i, lambda, kernel))),
        QuadratureRule::Trapezoid => {
            let columns = par::map_range(cfg.n, |k| {
                let w = cfg.omega(k);
                let f = |i: usize| [fs[i].f0()[k], fs[i].f1()[k], fs[i].f2()[k]];
                let mut out = vec![[ZERO; 3]; nt];
                let mut s = [ZERO; 3];
                for i in 0..nt - 1 {
                    let c = if i == 0 { dt / 2.0 } else { dt };
                    let fi = f(i);
                    let jet = kernel.jet(w, clocks[i + 1] - clocks[i]);
                    s = jet_mul(jet, [s[0] + fi[0] * c, s[1] + fi[1] * c, s[2] + fi[2] * c]);
                    let fn_ = f(i + 1);
                    let h = dt / 2.0;
                    out[i + 1] = [
                        (s[0] + fn_[0] * h) * lambda,
                        (s[1] + fn_[1] * h) * lambda,
                        (s[2] + fn_[2] * h) * lambda,
                    ];
                }
                out
            });
            (0..nt)
                .map(|i| {
                    let spectra = std::array::from_fn(|j| columns.iter().map(|col| col[i][j]).collect());
                    SampledFunction::from_spectra(cfg, spectra, "duhamel")
                })
                .collect()
        }
    }
}

/// Picard iteration for `u = u_f + N(u)` on `[1, L]`.
pub fn picard_solve(
    f: &SampledFunction,
    nl: &Nonlinearity,
    lambda: f64,
    ctx: StepContext<'_>,
    cfg: &EvolutionConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let times = ctx.times(cfg.nt);
    let clocks = ctx.clocks(&times)?;
    picard_on_grid(f, nl, lambda, ctx.kernel, times, &clocks, cfg)
}

/// Picard iteration on an arbitrary uniform time grid with clock values
/// `clocks` (the data `f` sits at `times[0]`).
pub fn picard_on_grid(
    f: &SampledFunction,
    nl: &Nonlinearity,
    lambda: f64,
    kernel: &KernelSpec,
    times: Vec<f64>,
    clocks: &[f64],
    cfg: &EvolutionConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    nl.validate()?;
    let nt = times.len();
    if nt < 3 || clocks.len() != nt {
        return Err(RgError::Config("time grid needs >= 3 nodes and one clock value per node".into()));
    }
    let f_norm = bq_norm(f)?;
    let dt = (times[nt - 1] - times[0]) / (nt - 1) as f64;
    let linear: Vec<SampledFunction> = par::map_slice(clocks, |&s| heat_multiply(f, kernel, s - clocks[0]));
    let mut cur = match cfg.init {
        PicardInit::Linear => linear.clone(),
        PicardInit::Zero => vec![SampledFunction::zeros(*f.cfg()); nt],
    };
    let mut ratios = Vec::new();
    let mut prev_diff: Option<f64> = None;
    let mut rising = 0;
    let mut last_diff = f64::INFINITY;
    for iter in 1..=cfg.picard_max {
        let duhamel = duhamel_all(&cur, clocks, dt, nl, lambda, kernel, cfg.quadrature)?;
        let next: Vec<SampledFunction> = linear.iter().zip(&duhamel).map(|(l, d)| l + d).collect();
        let diff = sup_distance(&next, Some(&cur))?;
        if !diff.is_finite() {
            return Err(RgError::Divergence { iterations: iter, ratios });
        }
        if let Some(p) = prev_diff {
            let ratio = if p > 0.0 { diff / p } else { 0.0 };
            ratios.push(ratio);
            rising = if ratio >= 1.0 { rising + 1 } else { 0 };
            if rising >= 3 {
                return Err(RgError::Divergence { iterations: iter, ratios });
            }
        }
        log::debug!("picard iter={iter} diff={diff:.3e}");
        if diff <= cfg.picard_tol {
            let ball = sup_distance(&next, Some(&linear))?;
            let ball_excess = (ball - f_norm).max(0.0);
            if ball_excess > 0.0 {
                log::warn!("Picard solution leaves the ball ‖u - u_f‖ <= ‖f‖ by {ball_excess:.3e}");
            }
            return Ok(Trajectory {
                times,
                states: next,
                duhamel,
                picard_iters: iter,
                final_residual: diff,
                lipschitz_ratios: ratios,
                ball_excess,
                converged: true,
            });
        }
        prev_diff = Some(diff);
        last_diff = diff;
        cur = next;
    }
    Err(RgError::NoConvergence { iterations: cfg.picard_max, residual: last_diff })
}

/// `ν = N(u)(·, L)` of a converged trajectory.
pub fn nu_of(traj: &Trajectory) -> Result<&SampledFunction> {
    if !traj.converged {
        return Err(RgError::StaleState);
    }
    Ok(traj.duhamel.last().expect("trajectory is never empty"))
}
