//! Discrete elements of the weighted Fourier space `B_q`.
//!
//! A [`SampledFunction`] carries three spectra on a centered frequency grid:
//! `f̂`, `f̂′` and `f̂″`. They are stored independently rather than
//! differenced from `f̂`, because the norm and the prefactor `A = -i f̂′(0)`
//! act on all three.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::interp::{self, Spectral};
use crate::kernel::KernelSpec;
use crate::{fourier, par};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Off-grid read rule used by dilations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    /// 4-point Lagrange.
    Cubic,
    /// 6-point Lagrange.
    Quintic,
    /// Trigonometric interpolant through all nodes (band-limited read).
    Spectral,
}

impl Interp {
    fn points(self) -> Option<usize> {
        match self {
            Interp::Cubic => Some(4),
            Interp::Quintic => Some(6),
            Interp::Spectral => None,
        }
    }
}

/// Frequency grid and norm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    /// Weight exponent of the norm.
    pub q: f64,
    /// Grid half-width.
    pub omega_max: f64,
    /// Number of nodes; odd so that `ω = 0` is a node.
    pub n: usize,
    pub interp: Interp,
    /// Zero-padding factor for x-space products.
    pub dealias_pad: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self { q: 2.0, omega_max: 16.0, n: 1025, interp: Interp::Cubic, dealias_pad: 2 }
    }
}

impl SpaceConfig {
    pub fn new(q: f64, omega_max: f64, n: usize) -> Result<Self> {
        let cfg = Self { q, omega_max, n, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 || self.n.is_multiple_of(2) {
            return Err(RgError::Config(format!("grid size must be odd and >= 5, got {}", self.n)));
        }
        if !(self.omega_max > 0.0) || !self.omega_max.is_finite() {
            return Err(RgError::Config(format!("omega_max must be positive, got {}", self.omega_max)));
        }
        if !(self.q > 1.0) {
            return Err(RgError::Config(format!("weight exponent q must exceed 1, got {}", self.q)));
        }
        if self.dealias_pad == 0 {
            return Err(RgError::Config("dealias_pad must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    /// Same half-width with the step halved (`n → 2n - 1`).
    pub fn refined(mut self) -> Self {
        self.n = 2 * self.n - 1;
        self
    }

    /// Grid step `h`.
    #[inline]
    pub fn step(&self) -> f64 {
        2.0 * self.omega_max / (self.n - 1) as f64
    }

    /// Index of `ω = 0`.
    #[inline]
    pub fn center(&self) -> usize {
        self.n / 2
    }

    #[inline]
    pub fn omega(&self, k: usize) -> f64 {
        (k as f64 - self.center() as f64) * self.step()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.omega(k)).collect()
    }

    /// Norm weight `1 + |ω|^q`.
    #[inline]
    pub fn weight(&self, omega: f64) -> f64 {
        1.0 + omega.abs().powf(self.q)
    }

    /// Spacing of the dual x grid.
    pub fn x_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n as f64 * self.step())
    }
}

/// A `B_q` element: `f̂`, `f̂′`, `f̂″` at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    cfg: SpaceConfig,
    spectra: [Vec<Complex64>; 3],
    tag: String,
}

/// Center-node moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `f̂(0) = ∫ f`.
    pub mass: Complex64,
    /// `f̂′(0) = -i ∫ x f`.
    pub first: Complex64,
    /// `f̂″(0) = -∫ x² f`.
    pub second: Complex64,
    /// `A = -i f̂′(0)`, real for real `f`.
    pub prefactor: f64,
}

/// Bookkeeping from a dilation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DilationInfo {
    /// Weighted bound on the content dropped by reads beyond `omega_max`.
    pub tail_bound: f64,
    /// Weighted estimate of the interpolation error.
    pub interp_error: f64,
}

impl SampledFunction {
    pub fn from_spectra(cfg: SpaceConfig, spectra: [Vec<Complex64>; 3], tag: impl Into<String>) -> Result<Self> {
        if spectra.iter().any(|s| s.len() != cfg.n) {
            return Err(RgError::Config(format!("spectra must have {} nodes", cfg.n)));
        }
        Ok(Self { cfg, spectra, tag: tag.into() })
    }

    /// Builds the spectra node by node from `ω ↦ (f̂, f̂′, f̂″)`.
    pub fn from_fn<F>(cfg: SpaceConfig, tag: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> [Complex64; 3] + Sync + Send,
    {
        let vals = par::map_range(cfg.n, |k| f(cfg.omega(k)));
        Self::from_nodes(cfg, vals, tag.into())
    }

    fn from_nodes(cfg: SpaceConfig, vals: Vec<[Complex64; 3]>, tag: String) -> Self {
        let mut spectra = [Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n)];
        for v in vals {
            for j in 0..3 {
                spectra[j].push(v[j]);
            }
        }
        Self { cfg, spectra, tag }
    }

    pub fn zeros(cfg: SpaceConfig) -> Self {
        Self { cfg, spectra: [vec![ZERO; cfg.n], vec![ZERO; cfg.n], vec![ZERO; cfg.n]], tag: "zero".into() }
    }

    pub fn cfg(&self) -> &SpaceConfig {
        &self.cfg
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn f0(&self) -> &[Complex64] {
        &self.spectra[0]
    }

    pub fn f1(&self) -> &[Complex64] {
        &self.spectra[1]
    }

    pub fn f2(&self) -> &[Complex64] {
        &self.spectra[2]
    }

    pub fn spectrum(&self, j: usize) -> &[Complex64] {
        &self.spectra[j]
    }

    pub(crate) fn spectra_mut(&mut self) -> &mut [Vec<Complex64>; 3] {
        &mut self.spectra
    }

    pub fn into_spectra(self) -> [Vec<Complex64>; 3] {
        self.spectra
    }

    /// Discrete `sup (1+|ω|^q)(|f̂|+|f̂′|+|f̂″|)`. NaN if any entry is NaN.
    pub fn norm(&self) -> f64 {
        let cfg = self.cfg;
        let s = &self.spectra;
        let vals = par::map_range(cfg.n, |k| cfg.weight(cfg.omega(k)) * (s[0][k].norm() + s[1][k].norm() + s[2][k].norm()));
        vals.into_iter().fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
    }

    pub fn moments(&self) -> Moments {
        let c = self.cfg.center();
        let first = self.spectra[1][c];
        Moments {
            mass: self.spectra[0][c],
            first,
            second: self.spectra[2][c],
            prefactor: (-I * first).re,
        }
    }

    /// `self + alpha·other`.
    pub fn axpy(&self, alpha: f64, other: &SampledFunction) -> SampledFunction {
        self.check_same_grid(other);
        let spectra = std::array::from_fn(|j| {
            self.spectra[j].iter().zip(&other.spectra[j]).map(|(a, b)| a + b * alpha).collect()
        });
        Self { cfg: self.cfg, spectra, tag: self.tag.clone() }
    }

    pub fn scale(&self, alpha: f64) -> SampledFunction {
        let spectra = std::array::from_fn(|j| self.spectra[j].iter().map(|a| a * alpha).collect());
        Self { cfg: self.cfg, spectra, tag: self.tag.clone() }
    }

    fn check_same_grid(&self, other: &SampledFunction) {
        assert!(
            self.cfg.n == other.cfg.n && self.cfg.omega_max == other.cfg.omega_max,
            "sampled functions live on different grids"
        );
    }

    /// Max of `|F0(-ω) - conj F0(ω)|`, `|F1(-ω) + conj F1(ω)|`,
    /// `|F2(-ω) - conj F2(ω)|` over paired nodes; zero for real x-space data.
    pub fn reality_defect(&self) -> f64 {
        let n = self.cfg.n;
        let s = &self.spectra;
        (0..n)
            .map(|k| {
                let r = n - 1 - k;
                (s[0][r] - s[0][k].conj())
                    .norm()
                    .max((s[1][r] + s[1][k].conj()).norm())
                    .max((s[2][r] - s[2][k].conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Max over interior nodes of the centered-difference mismatch between
    /// consecutive spectra: `(F0' - F1, F1' - F2)`.
    pub fn derivative_defect(&self) -> (f64, f64) {
        let h = self.cfg.step();
        let s = &self.spectra;
        let mut d = (0.0f64, 0.0f64);
        for k in 1..self.cfg.n - 1 {
            d.0 = d.0.max(((s[0][k + 1] - s[0][k - 1]) / (2.0 * h) - s[1][k]).norm());
            d.1 = d.1.max(((s[1][k + 1] - s[1][k - 1]) / (2.0 * h) - s[2][k]).norm());
        }
        d
    }
}

impl Add for &SampledFunction {
    type Output = SampledFunction;
    fn add(self, rhs: &SampledFunction) -> SampledFunction {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SampledFunction {
    type Output = SampledFunction;
    fn sub(self, rhs: &SampledFunction) -> SampledFunction {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &SampledFunction {
    type Output = SampledFunction;
    fn mul(self, rhs: f64) -> SampledFunction {
        self.scale(rhs)
    }
}

/// The weighted sup norm; errors on corrupted (NaN) spectra.
pub fn bq_norm(f: &SampledFunction) -> Result<f64> {
    let v = f.norm();
    if v.is_nan() {
        Err(RgError::Corrupted(format!("NaN in spectra of '{}'", f.tag)))
    } else {
        Ok(v)
    }
}

/// `C_q = (2π)^{-1} ∫ (1+|ω|^q)^{-1} dω = 1/(q sin(π/q))`, so that
/// `sup |u| <= C_q ‖u‖`.
pub fn sup_norm_constant(q: f64) -> f64 {
    1.0 / (q * (std::f64::consts::PI / q).sin())
}

/// Center-node moments and the prefactor `A = -i f̂′(0)`.
pub fn moments(f: &SampledFunction) -> Moments {
    f.moments()
}

/// `G_p = ∂ₓG(·, 1/(p+1))`: `f̂(ω) = iω ĝ((p+1)^{-1/d} ω)`.
pub fn make_gp(kernel: &KernelSpec, p: f64, cfg: SpaceConfig) -> SampledFunction {
    let kappa = (p + 1.0).powf(-1.0 / kernel.d);
    SampledFunction::from_fn(cfg, format!("G_p[{}, p={p}]", kernel.name), |w| {
        let z = kappa * w;
        let (g0, g1, g2) = (kernel.profile(z, 0), kernel.profile(z, 1), kernel.profile(z, 2));
        [
            I * (w * g0),
            I * (g0 + w * kappa * g1),
            I * (2.0 * kappa * g1 + w * kappa * kappa * g2),
        ]
    })
}

/// `∂²ₓG(·, 1)`: `f̂(ω) = -ω² ĝ(ω)`. Zero mass and zero first moment.
pub fn make_second_derivative_profile(kernel: &KernelSpec, cfg: SpaceConfig) -> SampledFunction {
    SampledFunction::from_fn(cfg, format!("G''[{}]", kernel.name), |w| {
        let (g0, g1, g2) = (kernel.profile(w, 0), kernel.profile(w, 1), kernel.profile(w, 2));
        [
            Complex64::new(-w * w * g0, 0.0),
            Complex64::new(-2.0 * w * g0 - w * w * g1, 0.0),
            Complex64::new(-2.0 * g0 - 4.0 * w * g1 - w * w * g2, 0.0),
        ]
    })
}

/// Sets `f̂(0)` to exactly zero when it is already negligible.
pub fn project_zero_mass(f: &SampledFunction, tol: f64) -> Result<SampledFunction> {
    let c = f.cfg.center();
    let mass = f.spectra[0][c].norm();
    let threshold = tol * bq_norm(f)?;
    if mass > 0.0 && mass >= threshold {
        return Err(RgError::NotZeroMass { mass, threshold });
    }
    let mut out = f.clone();
    out.spectra[0][c] = ZERO;
    Ok(out)
}

/// Relative boundary magnitude above which [`from_x_samples`] fails.
pub const TRUNCATION_ERROR_TOL: f64 = 1e-8;
/// Relative boundary magnitude above which [`from_x_samples`] warns.
pub const TRUNCATION_WARN_TOL: f64 = 1e-12;

/// Continuous-normalized transforms of `f`, `(-ix) f` and `-x² f` from real
/// samples on a uniform x grid, evaluated at the frequency nodes of `cfg`.
pub fn from_x_samples(cfg: SpaceConfig, xs: &[f64], samples: &[f64]) -> Result<SampledFunction> {
    cfg.validate()?;
    let m = xs.len();
    if m < 3 || samples.len() != m {
        return Err(RgError::Config("x grid and samples must have equal length >= 3".into()));
    }
    let dx = xs[1] - xs[0];
    if !(dx > 0.0) || xs.windows(2).any(|p| ((p[1] - p[0]) - dx).abs() > 1e-9 * dx) {
        return Err(RgError::Config("x grid must be uniform and increasing".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(RgError::Corrupted("non-finite x-space sample".into()));
    }
    let peak = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        let end = |i: usize| samples[i].abs() * (1.0 + xs[i] * xs[i]);
        let magnitude = end(0).max(end(m - 1)) / peak;
        if magnitude > TRUNCATION_ERROR_TOL {
            return Err(RgError::Truncation { magnitude, tolerance: TRUNCATION_ERROR_TOL });
        }
        if magnitude > TRUNCATION_WARN_TOL {
            log::warn!("x samples decay only to {magnitude:.2e} at the grid ends");
        }
    }
    let x0 = xs[0];
    let vals = par::map_range(cfg.n, |k| {
        let w = cfg.omega(k);
        let step = Complex64::from_polar(1.0, -w * dx);
        let mut acc = [ZERO; 3];
        let mut phase = ZERO;
        for (i, (&x, &f)) in xs.iter().zip(samples).enumerate() {
            if i % 32 == 0 {
                phase = Complex64::from_polar(1.0, -w * (x0 + i as f64 * dx));
            }
            let t = phase * f;
            acc[0] += t;
            acc[1] += t * Complex64::new(0.0, -x);
            acc[2] += t * (-x * x);
            phase *= step;
        }
        [acc[0] * dx, acc[1] * dx, acc[2] * dx]
    });
    Ok(SampledFunction::from_nodes(cfg, vals, "x-samples".into()))
}

/// x-space values of the three spectra on the dual grid `x_m = m Δx`.
#[derive(Debug, Clone)]
pub struct XSamples {
    pub xs: Vec<f64>,
    /// Inverse transforms of `f̂`, `f̂′`, `f̂″`: `f`, `-ix f`, `-x² f`.
    pub values: [Vec<Complex64>; 3],
}

/// Inverse transform to the dual x grid (diagnostics only).
pub fn to_x_samples(f: &SampledFunction) -> XSamples {
    let cfg = f.cfg;
    let h = cfg.step();
    let dx = cfg.x_step();
    let c = cfg.center() as f64;
    let xs = (0..cfg.n).map(|i| (i as f64 - c) * dx).collect();
    let values = std::array::from_fn(|j| fourier::spectrum_to_x(&f.spectra[j], h, cfg.n));
    XSamples { xs, values }
}

/// Reads `G_j(ω) = c_j · F_j(ω/a)` for the amplitude law `c = (c0, c1, c2)`.
///
/// For `x ↦ a² u(a x)` the law is `(a, 1, 1/a)`. Reads beyond `omega_max`
/// return zero and contribute to the tail bound; a tail bound above `1e-6`
/// of the input norm is a resolution error.
pub fn dilate_spectra(f: &SampledFunction, a: f64, law: [f64; 3]) -> Result<(SampledFunction, DilationInfo)> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(RgError::Domain(format!("dilation factor must be positive, got {a}")));
    }
    let cfg = f.cfg;
    let n = cfg.n;
    let h = cfg.step();
    let c = cfg.center() as f64;
    let s = &f.spectra;
    let edge: [f64; 3] = std::array::from_fn(|j| s[j][0].norm().max(s[j][n - 1].norm()));
    let spectral = (cfg.interp == Interp::Spectral).then(|| Spectral::new([&s[0], &s[1], &s[2]], h));
    let limit = cfg.omega_max * (1.0 + 1e-12);

    let reads = par::map_range(n, |k| {
        let w = cfg.omega(k);
        let src = w / a;
        let weight = cfg.weight(w);
        if src.abs() > limit {
            let tail = weight * (0..3).map(|j| law[j].abs() * edge[j]).sum::<f64>();
            return ([ZERO; 3], tail, 0.0);
        }
        let u = src / h + c;
        let (vals, est) = match (&spectral, cfg.interp.points()) {
            (Some(sp), _) => (sp.eval(src), 0.0),
            (None, Some(pts)) => {
                let vals: [Complex64; 3] = std::array::from_fn(|j| interp::lagrange(&s[j], u, pts));
                let est = (0..3)
                    .map(|j| law[j].abs() * (vals[j] - interp::lagrange(&s[j], u, pts + 2)).norm())
                    .sum::<f64>();
                (vals, weight * est)
            }
            (None, None) => unreachable!("spectral reads always build an interpolator"),
        };
        ([vals[0] * law[0], vals[1] * law[1], vals[2] * law[2]], 0.0, est)
    });

    let mut tail_bound = 0.0f64;
    let mut interp_error = 0.0f64;
    let mut nodes = Vec::with_capacity(n);
    for (v, t, e) in reads {
        tail_bound = tail_bound.max(t);
        interp_error = interp_error.max(e);
        nodes.push(v);
    }
    if let Some(sp) = &spectral {
        let om = sp.outer_mass();
        let alias: f64 = (0..3).map(|j| law[j].abs() * (om[j] + edge[j])).sum();
        interp_error = cfg.weight(cfg.omega_max.min(a * cfg.omega_max)) * alias;
    }
    let norm = bq_norm(f)?;
    if tail_bound > 1e-6 * norm {
        return Err(RgError::Resolution(format!(
            "dilation by {a} reads beyond omega_max; tail bound {tail_bound:.3e} vs norm {norm:.3e}"
        )));
    }
    let out = SampledFunction::from_nodes(cfg, nodes, f.tag.clone());
    Ok((out, DilationInfo { tail_bound, interp_error }))
}
