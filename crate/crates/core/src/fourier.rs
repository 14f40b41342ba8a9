//! Transforms between centered frequency grids and the dual periodic x grid.
//!
//! A centered grid of odd length `n` holds `ω_k = k h` for `k = -M..=M`,
//! `M = (n-1)/2`. Its dual x grid holds `x_m = m Δx` with `Δx = 2π/(n h)`.
//! Normalization follows the continuous transform `f̂(ω) = ∫ f(x) e^{-iωx} dx`.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Cached FFT plan of the given length. `inverse` selects the `e^{+i…}` sign.
pub fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if inverse {
        p.plan_fft_inverse(len)
    } else {
        p.plan_fft_forward(len)
    }
}

#[inline]
fn wrap(k: isize, len: usize) -> usize {
    k.rem_euclid(len as isize) as usize
}

/// Centered spectrum of odd length `n` with spacing `h` → x samples on the dual
/// grid of the zero-padded length `padded` (odd, `>= n`). Output is centered:
/// index `i` holds `x_{i - (padded-1)/2}`.
pub fn spectrum_to_x(spectrum: &[Complex64], h: f64, padded: usize) -> Vec<Complex64> {
    let n = spectrum.len();
    debug_assert!(n % 2 == 1 && padded % 2 == 1 && padded >= n);
    let m = (n / 2) as isize;
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (i, v) in spectrum.iter().enumerate() {
        buf[wrap(i as isize - m, padded)] = *v;
    }
    plan(padded, true).process(&mut buf);
    let scale = h / (2.0 * PI);
    let mp = (padded / 2) as isize;
    (0..padded)
        .map(|i| buf[wrap(i as isize - mp, padded)] * scale)
        .collect()
}

/// Centered x samples of odd length `padded` with spacing `dx` → the central
/// `n` frequency nodes of their transform.
pub fn x_to_spectrum(samples: &[Complex64], dx: f64, n: usize) -> Vec<Complex64> {
    let padded = samples.len();
    debug_assert!(n % 2 == 1 && padded % 2 == 1 && padded >= n);
    let mp = (padded / 2) as isize;
    let mut buf = vec![Complex64::new(0.0, 0.0); padded];
    for (i, v) in samples.iter().enumerate() {
        buf[wrap(i as isize - mp, padded)] = *v;
    }
    plan(padded, false).process(&mut buf);
    let m = (n / 2) as isize;
    (0..n).map(|i| buf[wrap(i as isize - m, padded)] * dx).collect()
}

/// Padded odd length for a dealiasing factor: `pad·(n-1) + 1`.
pub fn padded_len(n: usize, pad: usize) -> usize {
    pad.max(1) * (n - 1) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_pair_roundtrip() {
        // exp(-ω²) ↔ exp(-x²/4)/√(4π)
        let n = 257;
        let h = 16.0 / 128.0;
        let spec: Vec<Complex64> = (0..n)
            .map(|i| {
                let w = (i as f64 - 128.0) * h;
                Complex64::new((-w * w).exp(), 0.0)
            })
            .collect();
        let xs = spectrum_to_x(&spec, h, n);
        let dx = 2.0 * PI / (n as f64 * h);
        for (i, v) in xs.iter().enumerate() {
            let x = (i as f64 - 128.0) * dx;
            let exact = (-x * x / 4.0).exp() / (4.0 * PI).sqrt();
            assert!((v.re - exact).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
        let back = x_to_spectrum(&xs, dx, n);
        for (a, b) in back.iter().zip(&spec) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn padding_keeps_values() {
        let n = 129;
        let h = 0.25;
        let spec: Vec<Complex64> = (0..n)
            .map(|i| {
                let w = (i as f64 - 64.0) * h;
                Complex64::new(0.0, w * (-w * w).exp())
            })
            .collect();
        let padded = padded_len(n, 2);
        let xs = spectrum_to_x(&spec, h, padded);
        let dx = 2.0 * PI / (padded as f64 * h);
        let back = x_to_spectrum(&xs, dx, n);
        for (a, b) in back.iter().zip(&spec) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
