//! Generalized heat kernels, described entirely on the Fourier side.
//!
//! A kernel is fixed by its unit-time profile `ĝ(ω) = Ĝ(ω, 1)` and its
//! homogeneity exponent `d`. Scaling gives every other time:
//! `∂ⱼĜ(ω, t) = t^{j/d} ĝ⁽ʲ⁾(t^{1/d} ω)`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Result, RgError};
use crate::par;

/// A unit-time Fourier profile with closed-form first and second derivatives.
pub trait Profile: Send + Sync {
    /// `ĝ⁽ᵒʳᵈᵉʳ⁾(ω)` for `order` in `0..=2`.
    fn eval(&self, omega: f64, order: u8) -> f64;
}

/// `ĝ(ω) = exp(-ω^d)` for an even integer `d`.
#[derive(Debug, Clone, Copy)]
pub struct ExpPower {
    d: i32,
}

impl Profile for ExpPower {
    fn eval(&self, omega: f64, order: u8) -> f64 {
        let d = self.d;
        let df = d as f64;
        let e = (-omega.powi(d)).exp();
        match order {
            0 => e,
            1 => -df * omega.powi(d - 1) * e,
            2 => (df * df * omega.powi(2 * d - 2) - df * (df - 1.0) * omega.powi(d - 2)) * e,
            _ => f64::NAN,
        }
    }
}

type ProfileFn = dyn Fn(f64, u8) -> f64 + Send + Sync;

/// A profile given by a closure. Useful for testing validation on
/// non-kernels.
#[derive(Clone)]
pub struct FnProfile(Arc<ProfileFn>);

impl Profile for FnProfile {
    fn eval(&self, omega: f64, order: u8) -> f64 {
        (self.0)(omega, order)
    }
}

/// A generalized heat kernel.
#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    profile: Arc<dyn Profile>,
    /// Homogeneity exponent, `d > 1`.
    pub d: f64,
    /// Polynomial x-decay order from the smoothness condition. Stored only.
    pub decay_order: u32,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("decay_order", &self.decay_order)
            .finish()
    }
}

impl KernelSpec {
    /// `exp(-ω^d)` for even integer `d >= 2`.
    pub fn exp_power(d: u32) -> Result<Self> {
        if d < 2 || !d.is_multiple_of(2) {
            return Err(RgError::Config(format!(
                "exp-power kernels need an even integer d >= 2, got {d}"
            )));
        }
        let name = match d {
            2 => "gauss".to_string(),
            4 => "quartic".to_string(),
            6 => "sextic".to_string(),
            _ => format!("exp-power-{d}"),
        };
        Ok(Self {
            name,
            profile: Arc::new(ExpPower { d: d as i32 }),
            d: d as f64,
            decay_order: 4,
        })
    }

    /// The reference Gaussian kernel `ĝ(ω) = exp(-ω²)`, `d = 2`.
    pub fn gauss() -> Self {
        Self::exp_power(2).expect("d = 2 is admissible")
    }

    /// Built-in kernel by name: `gauss`, `quartic` or `sextic`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gauss" => Self::exp_power(2),
            "quartic" => Self::exp_power(4),
            "sextic" => Self::exp_power(6),
            other => Err(RgError::Config(format!("unknown kernel '{other}'"))),
        }
    }

    /// A kernel with an arbitrary closure profile. No properties are assumed;
    /// run [`validate_kernel`] before using it.
    pub fn custom<F>(name: &str, d: f64, profile: F) -> Self
    where
        F: Fn(f64, u8) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            profile: Arc::new(FnProfile(Arc::new(profile))),
            d,
            decay_order: 0,
        }
    }

    /// Unit-time profile derivative `ĝ⁽ʲ⁾(ω)`.
    #[inline]
    pub fn profile(&self, omega: f64, order: u8) -> f64 {
        self.profile.eval(omega, order)
    }

    /// `(Ĝ, ∂ωĜ, ∂²ωĜ)` at `(ω, σ)` for `σ >= 0`, with the convention
    /// `Ĝ(·, 0) = 1`.
    #[inline]
    pub fn jet(&self, omega: f64, sigma: f64) -> [f64; 3] {
        if sigma == 0.0 {
            return [1.0, 0.0, 0.0];
        }
        let s = sigma.powf(1.0 / self.d);
        let w = s * omega;
        [
            self.profile(w, 0),
            s * self.profile(w, 1),
            s * s * self.profile(w, 2),
        ]
    }
}

/// `t^{j/d} ĝ⁽ʲ⁾(t^{1/d} ω)`, the j-th ω-derivative of `Ĝ(ω, t)`.
pub fn evaluate_kernel_hat(spec: &KernelSpec, omega: f64, t: f64, order: u8) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(RgError::Domain(format!("kernel time must be positive, got {t}")));
    }
    if order > 2 {
        return Err(RgError::UnsupportedOrder(order));
    }
    let s = t.powf(1.0 / spec.d);
    Ok(s.powi(order as i32) * spec.profile(s * omega, order))
}

/// Time pairs `(t, s)` at which the semigroup identity is checked.
pub const SEMIGROUP_PAIRS: [(f64, f64); 4] = [(2.0, 1.0), (3.0, 1.0), (3.0, 2.0), (1.5, 0.5)];

/// Outcome of [`validate_kernel`].
#[derive(Debug, Clone, Serialize)]
pub struct KernelValidation {
    pub kernel: String,
    pub q: f64,
    pub grid_symmetric: bool,
    pub mass_residual: f64,
    pub mass_ok: bool,
    pub max_multiplicativity_residual: f64,
    pub multiplicativity_ok: bool,
    /// Largest weighted value `(1+|ω|^q) ω² |ĝ⁽ʲ⁾|` in the outer 10% band,
    /// relative to its sup over the whole grid.
    pub tail_ratio: f64,
    pub tail_decay_ok: bool,
    pub passed: bool,
}

/// Checks unit mass, the semigroup identity at [`SEMIGROUP_PAIRS`] and decay
/// of the weighted tails at the grid edge. Failures are reported, not raised.
pub fn validate_kernel(spec: &KernelSpec, q: f64, grid: &[f64], tol: f64) -> KernelValidation {
    let n = grid.len();
    let grid_symmetric =
        n > 0 && (0..n).all(|i| (grid[i] + grid[n - 1 - i]).abs() <= 1e-12 * (1.0 + grid[i].abs()));

    let mass_residual = (spec.profile(0.0, 0) - 1.0).abs();
    let mass_ok = mass_residual <= tol;

    let inv_d = 1.0 / spec.d;
    let max_mult = SEMIGROUP_PAIRS
        .iter()
        .map(|&(t, s)| {
            par::max_range(n, |i| {
                let w = grid[i];
                let lhs = spec.profile(t.powf(inv_d) * w, 0);
                let rhs = spec.profile((t - s).powf(inv_d) * w, 0) * spec.profile(s.powf(inv_d) * w, 0);
                let r = (lhs - rhs).abs();
                if r.is_nan() {
                    f64::INFINITY
                } else {
                    r
                }
            })
        })
        .fold(0.0, f64::max);
    let multiplicativity_ok = max_mult <= tol;

    let (tail_ratio, tail_decay_ok) = tail_check(spec, q, grid, tol);

    KernelValidation {
        kernel: spec.name.clone(),
        q,
        grid_symmetric,
        mass_residual,
        mass_ok,
        max_multiplicativity_residual: max_mult,
        multiplicativity_ok,
        tail_ratio,
        tail_decay_ok,
        passed: grid_symmetric && mass_ok && multiplicativity_ok && tail_decay_ok,
    }
}

fn tail_check(spec: &KernelSpec, q: f64, grid: &[f64], tol: f64) -> (f64, bool) {
    let edge = grid.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if edge == 0.0 {
        return (0.0, false);
    }
    let weighted = |w: f64, j: u8| (1.0 + w.abs().powf(q)) * w * w * spec.profile(w, j).abs();
    let mut ok = true;
    let mut worst = 0.0f64;
    for j in 0..3u8 {
        let sup = grid.iter().map(|&w| weighted(w, j)).fold(0.0, f64::max);
        if !sup.is_finite() {
            return (f64::INFINITY, false);
        }
        // Outer band on each side, walked outward.
        let mut right: Vec<f64> = grid.iter().copied().filter(|w| *w >= 0.9 * edge).collect();
        right.sort_by(f64::total_cmp);
        let mut left: Vec<f64> = grid.iter().copied().filter(|w| *w <= -0.9 * edge).collect();
        left.sort_by(|a, b| b.total_cmp(a));
        for side in [right, left] {
            let vals: Vec<f64> = side.iter().map(|&w| weighted(w, j)).collect();
            let band_max = vals.iter().copied().fold(0.0, f64::max);
            if sup > 0.0 {
                worst = worst.max(band_max / sup);
            }
            let slack = tol * sup.max(f64::MIN_POSITIVE);
            if vals.windows(2).any(|p| p[1] > p[0] + slack) {
                ok = false;
            }
        }
    }
    (worst, ok && worst < 1.0)
}

/// Sup-norm constants of the unit-time profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelConstants {
    /// `K_j = sup |ĝ⁽ʲ⁾|`.
    pub k: [f64; 3],
    /// `C_j = sup (1+|ω|^q) ω² |ĝ⁽ʲ⁾|`.
    pub c: [f64; 3],
    pub q: f64,
}

/// Discrete sups over a scan grid.
pub fn kernel_constants(spec: &KernelSpec, q: f64, scan: &[f64]) -> Result<KernelConstants> {
    if scan.is_empty() {
        return Err(RgError::Domain("empty scan grid".into()));
    }
    let mut k = [0.0; 3];
    let mut c = [0.0; 3];
    for j in 0..3u8 {
        k[j as usize] = par::max_range(scan.len(), |i| spec.profile(scan[i], j).abs());
        c[j as usize] = par::max_range(scan.len(), |i| {
            let w = scan[i];
            (1.0 + w.abs().powf(q)) * w * w * spec.profile(w, j).abs()
        });
    }
    Ok(KernelConstants { k, c, q })
}

/// Uniform symmetric scan grid on `[-half_width, half_width]` with the given step.
/// Always contains 0.
pub fn scan_grid(half_width: f64, step: f64) -> Vec<f64> {
    let m = (half_width / step).round() as i64;
    (-m..=m).map(|i| i as f64 * step).collect()
}

/// Default scan used for kernel constants: `[-24, 24]`, step `1e-3`.
pub fn default_scan() -> Vec<f64> {
    scan_grid(24.0, 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_values() {
        let g = KernelSpec::gauss();
        assert_eq!(evaluate_kernel_hat(&g, 0.0, 5.0, 0).unwrap(), 1.0);
        assert_relative_eq!(evaluate_kernel_hat(&g, 1.0, 1.0, 0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        // Closed-form semigroup: Ĝ(ω, t) = exp(-t ω²).
        assert_relative_eq!(
            evaluate_kernel_hat(&g, 1.0, 4.0, 0).unwrap(),
            (-4.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn derivative_orders_scale() {
        let g = KernelSpec::gauss();
        // ∂ω exp(-t ω²) = -2 t ω exp(-t ω²)
        let (w, t) = (0.7, 2.5);
        let d1 = evaluate_kernel_hat(&g, w, t, 1).unwrap();
        assert_relative_eq!(d1, -2.0 * t * w * (-t * w * w).exp(), max_relative = 1e-13);
        let d2 = evaluate_kernel_hat(&g, w, t, 2).unwrap();
        assert_relative_eq!(d2, (4.0 * t * t * w * w - 2.0 * t) * (-t * w * w).exp(), max_relative = 1e-13);
    }

    #[test]
    fn unit_time_is_profile() {
        for k in [KernelSpec::gauss(), KernelSpec::by_name("quartic").unwrap()] {
            for &w in &[-2.0, -0.3, 0.0, 0.9, 3.1] {
                for j in 0..3 {
                    assert_eq!(evaluate_kernel_hat(&k, w, 1.0, j).unwrap(), k.profile(w, j));
                }
            }
        }
    }

    #[test]
    fn errors() {
        let g = KernelSpec::gauss();
        assert!(matches!(evaluate_kernel_hat(&g, 1.0, 0.0, 0), Err(RgError::Domain(_))));
        assert!(matches!(evaluate_kernel_hat(&g, 1.0, -1.0, 0), Err(RgError::Domain(_))));
        assert!(matches!(evaluate_kernel_hat(&g, 1.0, 1.0, 3), Err(RgError::UnsupportedOrder(3))));
        assert!(KernelSpec::by_name("cauchy").is_err());
        assert!(KernelSpec::exp_power(3).is_err());
    }

    #[test]
    fn jet_at_zero_time_is_identity() {
        let g = KernelSpec::gauss();
        assert_eq!(g.jet(3.0, 0.0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn quartic_derivatives_match_finite_differences() {
        let k = KernelSpec::exp_power(4).unwrap();
        let h = 1e-5;
        for &w in &[-1.3, -0.4, 0.2, 0.8, 1.1] {
            let fd1 = (k.profile(w + h, 0) - k.profile(w - h, 0)) / (2.0 * h);
            let fd2 = (k.profile(w + h, 1) - k.profile(w - h, 1)) / (2.0 * h);
            assert!((fd1 - k.profile(w, 1)).abs() < 1e-8);
            assert!((fd2 - k.profile(w, 2)).abs() < 1e-7);
        }
    }

    #[test]
    fn validation_accepts_gaussian() {
        let grid = scan_grid(16.0, 1.0 / 32.0);
        let r = validate_kernel(&KernelSpec::gauss(), 2.0, &grid, 1e-10);
        assert!(r.passed, "{r:?}");
        assert!(r.max_multiplicativity_residual <= 1e-12);
    }

    #[test]
    fn validation_rejects_wrong_mass() {
        let bad = KernelSpec::custom("heavy", 2.0, |w, j| 1.1 * KernelSpec::gauss().profile(w, j));
        let r = validate_kernel(&bad, 2.0, &scan_grid(16.0, 1.0 / 32.0), 1e-10);
        assert!(!r.mass_ok);
        assert!(!r.passed);
        assert_relative_eq!(r.mass_residual, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn validation_rejects_non_semigroup() {
        let g = KernelSpec::gauss();
        let shifted = KernelSpec::custom("shifted", 2.0, move |w, j| g.profile(w, j) + g.profile(w - 3.0, j));
        // Oracle at (ω, t, s) = (1, 2, 1): both sides differ visibly.
        let lhs = shifted.profile(2f64.sqrt(), 0);
        let rhs = shifted.profile(1.0, 0) * shifted.profile(1.0, 0);
        assert!((lhs - rhs).abs() > 1e-3);
        let r = validate_kernel(&shifted, 2.0, &scan_grid(16.0, 1.0 / 32.0), 1e-10);
        assert!(!r.multiplicativity_ok);
        assert!(!r.passed);
    }

    #[test]
    fn gaussian_constants() {
        let c = kernel_constants(&KernelSpec::gauss(), 2.0, &default_scan()).unwrap();
        assert_eq!(c.k[0], 1.0);
        // Oracle: dense scan of |2ω e^{-ω²}| with step 1e-4.
        let oracle_k1 = scan_grid(4.0, 1e-4)
            .iter()
            .map(|w| (2.0 * w * (-w * w).exp()).abs())
            .fold(0.0, f64::max);
        assert_relative_eq!(oracle_k1, (2.0 / std::f64::consts::E).sqrt(), max_relative = 1e-7);
        assert_relative_eq!(c.k[1], oracle_k1, max_relative = 1e-6);
        assert_relative_eq!(c.k[2], 2.0, max_relative = 1e-12);
        assert!(c.c.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(kernel_constants(&KernelSpec::gauss(), 2.0, &[]).is_err());
    }

    #[test]
    fn constants_refinement_monotone_and_stable() {
        let g = KernelSpec::gauss();
        for q in [1.6, 2.0, 3.0] {
            let coarse = kernel_constants(&g, q, &scan_grid(24.0, 2e-3)).unwrap();
            let fine = kernel_constants(&g, q, &scan_grid(24.0, 1e-3)).unwrap();
            for j in 0..3 {
                // The fine grid contains the coarse one (up to rounding of the nodes).
                assert!(fine.k[j] >= coarse.k[j] * (1.0 - 1e-14));
                assert!(fine.c[j] >= coarse.c[j] * (1.0 - 1e-14));
                assert!((fine.k[j] - coarse.k[j]) / fine.k[j] < 1e-3);
                assert!((fine.c[j] - coarse.c[j]) / fine.c[j] < 1e-3);
            }
        }
    }
}
