//! The time-dependent coefficient `c(t)`, its clock `s(t) = ∫₁ᵗ c`, the
//! power-law remainder `r(t)` and the per-scale renormalized clocks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};

/// Coefficient specification as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum CSpec {
    /// `c(t) = t^p`.
    PurePower,
    /// `c(t) = t^p + Σ coef·t^exp` with every `exp < p`.
    PowerPlusLower { terms: Vec<(f64, f64)> },
}

type CoefficientFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Clock {
    /// Leading `t^p` plus lower-order power terms, integrated in closed form.
    Power { lower: Vec<(f64, f64)> },
    /// Arbitrary `c`, integrated by double-exponential quadrature.
    Quadrature { c: Arc<CoefficientFn>, tol: f64 },
}

/// Clock data for one run.
#[derive(Clone)]
pub struct TimeScale {
    p: f64,
    clock: Clock,
    label: String,
}

impl fmt::Debug for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeScale").field("p", &self.p).field("c", &self.label).finish()
    }
}

/// Geometric scan used to locate `L0`.
const SCAN_START: f64 = 1.1;
const SCAN_RATIO: f64 = 1.05;
const SCAN_END: f64 = 1e4;

/// `∫ₐᵇ coef·τ^e dτ` evaluated without cancellation for `b` close to `a`.
fn power_integral(coef: f64, e: f64, a: f64, b: f64) -> f64 {
    let k = e + 1.0;
    let log_ratio = (b / a).ln();
    if k == 0.0 {
        coef * log_ratio
    } else {
        coef * a.powf(k) * (k * log_ratio).exp_m1() / k
    }
}

impl TimeScale {
    /// `c(t) = t^p`; `r ≡ 0`.
    pub fn pure_power(p: f64) -> Result<Self> {
        Self::from_spec(p, &CSpec::PurePower)
    }

    /// Builds a closed-form time scale from its configuration entry.
    pub fn from_spec(p: f64, spec: &CSpec) -> Result<Self> {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(RgError::Config(format!("p must be finite and >= 0, got {p}")));
        }
        let lower = match spec {
            CSpec::PurePower => Vec::new(),
            CSpec::PowerPlusLower { terms } => {
                for &(coef, e) in terms {
                    if !(e < p) || !coef.is_finite() {
                        return Err(RgError::Config(format!(
                            "lower-order term {coef}·t^{e} must have exponent below p = {p}"
                        )));
                    }
                }
                terms.clone()
            }
        };
        let label = if lower.is_empty() {
            format!("t^{p}")
        } else {
            let extra: Vec<String> = lower.iter().map(|(c, e)| format!("{c}·t^{e}")).collect();
            format!("t^{p} + {}", extra.join(" + "))
        };
        let ts = Self { p, clock: Clock::Power { lower }, label };
        // c must be positive on [1, ∞); checked on a geometric sample.
        let mut t = 1.0;
        while t <= SCAN_END {
            if !(ts.c(t) > 0.0) {
                return Err(RgError::Config(format!("c(t) is not positive at t = {t}")));
            }
            t *= 2.0;
        }
        Ok(ts)
    }

    /// An arbitrary coefficient integrated numerically with the given absolute
    /// tolerance. `c` must behave like `t^p + o(t^p)`.
    pub fn with_quadrature<F>(p: f64, label: &str, c: F, tol: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(RgError::Config(format!("p must be finite and >= 0, got {p}")));
        }
        if !(tol > 0.0) {
            return Err(RgError::Config("quadrature tolerance must be positive".into()));
        }
        Ok(Self {
            p,
            clock: Clock::Quadrature { c: Arc::new(c), tol },
            label: label.to_string(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True for `p = 0`, which lies outside the `p > 0` range of the theory but
    /// keeps every formula well defined.
    pub fn is_extension(&self) -> bool {
        self.p == 0.0
    }

    /// True when the remainder vanishes identically.
    pub fn has_zero_remainder(&self) -> bool {
        matches!(&self.clock, Clock::Power { lower } if lower.iter().all(|(c, _)| *c == 0.0))
    }

    /// The coefficient `c(t)`.
    pub fn c(&self, t: f64) -> f64 {
        match &self.clock {
            Clock::Power { lower } => {
                t.powf(self.p) + lower.iter().map(|&(coef, e)| coef * t.powf(e)).sum::<f64>()
            }
            Clock::Quadrature { c, .. } => c(t),
        }
    }

    /// `L^{-n(p+1)} ∫_{Lⁿa}^{Lⁿb} c(τ) dτ` for `1 <= a <= b`.
    fn scaled_integral(&self, n: u32, scale: f64, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let nf = n as f64;
        match &self.clock {
            Clock::Power { lower } => {
                let lead = power_integral(1.0, self.p, a, b);
                let rest: f64 = lower
                    .iter()
                    .map(|&(coef, e)| (nf * (e - self.p) * scale.ln()).exp() * power_integral(coef, e, a, b))
                    .sum();
                lead + rest
            }
            Clock::Quadrature { c, tol } => {
                // τ = Lⁿu turns the integral into L^{-np} ∫ₐᵇ c(Lⁿu) du.
                let ln = (nf * scale.ln()).exp();
                let out = quadrature::integrate(|u| c(ln * u), a, b, *tol);
                out.integral * (-nf * self.p * scale.ln()).exp()
            }
        }
    }

    /// `s(t) = ∫₁ᵗ c(τ) dτ`.
    pub fn s_of(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(RgError::Domain(format!("s(t) requires t >= 1, got {t}")));
        }
        Ok(self.scaled_integral(0, 1.0, 1.0, t))
    }

    /// Remainder `r(t) = s(t) - (t^{p+1} - 1)/(p+1)`.
    pub fn r_of(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(RgError::Domain(format!("r(t) requires t >= 1, got {t}")));
        }
        Ok(match &self.clock {
            Clock::Power { lower } => lower.iter().map(|&(coef, e)| power_integral(coef, e, 1.0, t)).sum(),
            Clock::Quadrature { .. } => self.s_of(t)? - power_integral(1.0, self.p, 1.0, t),
        })
    }

    fn check_scale(scale: f64, t: f64) -> Result<()> {
        if !(scale > 1.0) {
            return Err(RgError::Domain(format!("scale L must exceed 1, got {scale}")));
        }
        if !(t >= 1.0 && t <= scale * (1.0 + 1e-12)) {
            return Err(RgError::Domain(format!("time {t} outside [1, {scale}]")));
        }
        Ok(())
    }

    /// Renormalized clock `s_n(t) = (s(Lⁿt) - s(Lⁿ)) / L^{n(p+1)}`.
    pub fn s_n_of(&self, n: u32, scale: f64, t: f64) -> Result<f64> {
        Self::check_scale(scale, t)?;
        Ok(self.scaled_integral(n, scale, 1.0, t))
    }

    /// Renormalized remainder `r_n(t) = s_n(t) - (t^{p+1} - 1)/(p+1)`.
    pub fn r_n_of(&self, n: u32, scale: f64, t: f64) -> Result<f64> {
        Self::check_scale(scale, t)?;
        Ok(match &self.clock {
            Clock::Power { lower } => {
                let nf = n as f64;
                lower
                    .iter()
                    .map(|&(coef, e)| (nf * (e - self.p) * scale.ln()).exp() * power_integral(coef, e, 1.0, t))
                    .sum()
            }
            Clock::Quadrature { .. } => self.s_n_of(n, scale, t)? - power_integral(1.0, self.p, 1.0, t),
        })
    }

    /// Clock increment `s_n(t) - s_n(τ)` driving the kernel in the Duhamel term.
    pub fn phi_n_of(&self, n: u32, scale: f64, t: f64, tau: f64) -> Result<f64> {
        Self::check_scale(scale, t)?;
        Self::check_scale(scale, tau)?;
        if tau > t {
            return Err(RgError::Domain(format!("τ = {tau} exceeds t = {t}")));
        }
        Ok(self.scaled_integral(n, scale, tau, t))
    }

    /// `(L0, L1)`: `L0` is the first scan point beyond which every sampled
    /// `|r(L)|/L^{p+1}` stays below `1/[4(p+1)]`; `L1 = max{L0, 3^{1/(p+1)}}`.
    pub fn thresholds(&self) -> Result<(f64, f64)> {
        let bound = 1.0 / (4.0 * (self.p + 1.0));
        let mut samples = Vec::new();
        let mut l = SCAN_START;
        while l <= SCAN_END {
            let ratio = self.r_of(l)?.abs() / l.powf(self.p + 1.0);
            samples.push((l, ratio < bound));
            l *= SCAN_RATIO;
        }
        let Some(last_bad) = samples.iter().rposition(|(_, ok)| !ok) else {
            let l0 = samples[0].0;
            return Ok((l0, l0.max(3f64.powf(1.0 / (self.p + 1.0)))));
        };
        if last_bad + 1 >= samples.len() {
            return Err(RgError::NonAdmissibleTimescale(format!(
                "|r(L)|/L^(p+1) >= 1/[4(p+1)] at L = {:.1}; remainder does not decay on the scan range",
                samples[last_bad].0
            )));
        }
        let l0 = samples[last_bad + 1].0;
        Ok((l0, l0.max(3f64.powf(1.0 / (self.p + 1.0)))))
    }

    /// Errors unless `L > L1`.
    pub fn require_admissible_scale(&self, scale: f64) -> Result<()> {
        let (_, l1) = self.thresholds()?;
        if scale > l1 {
            Ok(())
        } else {
            Err(RgError::Hypothesis(format!("scale L = {scale} must exceed L1 = {l1:.4}")))
        }
    }
}
