//! Off-grid reads of spectra sampled on a centered uniform grid.

use num_complex::Complex64;

use crate::fourier;

/// Local Lagrange read at fractional index `u` using `points` nodes. Stencils
/// are shifted inward near the ends. Exact node positions return the node.
pub fn lagrange(values: &[Complex64], u: f64, points: usize) -> Complex64 {
    let n = values.len();
    let nearest = u.round();
    if (u - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < n {
        return values[nearest as usize];
    }
    let half = points / 2;
    let base = u.floor() as isize - (half as isize - 1);
    let start = base.clamp(0, (n - points) as isize) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..points {
        let xi = (start + i) as f64;
        let mut w = 1.0;
        for j in 0..points {
            if j != i {
                let xj = (start + j) as f64;
                w *= (u - xj) / (xi - xj);
            }
        }
        acc += values[start + i] * w;
    }
    acc
}

/// Band-limited (trigonometric) interpolation of up to three spectra that
/// share a grid. The spectra are moved to their dual x grid once; each read
/// is then the exact trigonometric interpolant `Δx Σₘ fₘ e^{-iωxₘ}`.
pub struct Spectral {
    h: f64,
    dx: f64,
    center: usize,
    samples: Vec<[Complex64; 3]>,
    nodes: [Vec<Complex64>; 3],
    /// `Δx Σ |fₘ|` over the outer tenth of the periodic x domain, per spectrum.
    outer_mass: [f64; 3],
}

/// Phase is recomputed exactly every this many terms of the recurrence.
const RESYNC: usize = 32;

impl Spectral {
    pub fn new(spectra: [&[Complex64]; 3], h: f64) -> Self {
        let n = spectra[0].len();
        let xs: Vec<Vec<Complex64>> = spectra.iter().map(|s| fourier::spectrum_to_x(s, h, n)).collect();
        let dx = 2.0 * std::f64::consts::PI / (n as f64 * h);
        let m = n / 2;
        let outer = (m as f64 * 0.9).ceil() as usize;
        let mut outer_mass = [0.0; 3];
        for (j, x) in xs.iter().enumerate() {
            outer_mass[j] = x
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as isize - m as isize).unsigned_abs() >= outer)
                .map(|(_, v)| v.norm())
                .sum::<f64>()
                * dx;
        }
        let samples = (0..n).map(|i| [xs[0][i], xs[1][i], xs[2][i]]).collect();
        Self {
            h,
            dx,
            center: m,
            samples,
            nodes: [spectra[0].to_vec(), spectra[1].to_vec(), spectra[2].to_vec()],
            outer_mass,
        }
    }

    pub fn outer_mass(&self) -> [f64; 3] {
        self.outer_mass
    }

    /// Values of the three interpolants at `ω`.
    pub fn eval(&self, omega: f64) -> [Complex64; 3] {
        let u = omega / self.h + self.center as f64;
        let nearest = u.round();
        if (u - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < self.samples.len() {
            let k = nearest as usize;
            return [self.nodes[0][k], self.nodes[1][k], self.nodes[2][k]];
        }
        let m0 = -(self.center as f64);
        let step = Complex64::from_polar(1.0, -omega * self.dx);
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        let mut phase = Complex64::new(1.0, 0.0);
        for (i, s) in self.samples.iter().enumerate() {
            if i % RESYNC == 0 {
                phase = Complex64::from_polar(1.0, -omega * (m0 + i as f64) * self.dx);
            }
            acc[0] += s[0] * phase;
            acc[1] += s[1] * phase;
            acc[2] += s[2] * phase;
            phase *= step;
        }
        [acc[0] * self.dx, acc[1] * self.dx, acc[2] * self.dx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, h: f64) -> Vec<Complex64> {
        let c = (n / 2) as f64;
        (0..n)
            .map(|i| {
                let w = (i as f64 - c) * h;
                Complex64::new((-w * w).exp(), 0.0)
            })
            .collect()
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let vals: Vec<Complex64> = (0..20).map(|i| Complex64::new((i as f64).powi(3) - 2.0 * i as f64, 1.0)).collect();
        for &u in &[0.3, 5.5, 17.9, 18.6] {
            let v = lagrange(&vals, u, 4);
            assert!((v.re - (u.powi(3) - 2.0 * u)).abs() < 1e-10);
            assert!((v.im - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_read_is_exact_for_resolved_gaussian() {
        let (n, h) = (257, 0.125);
        let g = gaussian(n, h);
        let zeros = vec![Complex64::new(0.0, 0.0); n];
        let s = Spectral::new([&g, &zeros, &zeros], h);
        for &w in &[0.0, 0.0625, 0.31, -1.77, 3.05] {
            let v = s.eval(w)[0];
            assert!((v.re - (-w * w).exp()).abs() < 1e-13, "{w}: {v}");
        }
    }
}
