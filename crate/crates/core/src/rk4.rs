//! Classical fixed-step fourth-order Runge–Kutta.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

/// State vector an explicit RK4 step can combine.
pub trait OdeState: Clone {
    /// `self += alpha · other`
    fn add_scaled(&mut self, alpha: f64, other: &Self);
}

impl OdeState for Vector3<f64> {
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.axpy(alpha, other, 1.0);
    }
}

impl OdeState for DMatrix<Complex64> {
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.zip_apply(other, |a, b| *a += b * alpha);
    }
}

/// One step `y(t) → y(t + h)` of the classical RK4 scheme.
pub fn step<S, F>(y: &S, t: f64, h: f64, mut rhs: F) -> S
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let k1 = rhs(t, y);
    let mut y2 = y.clone();
    y2.add_scaled(0.5 * h, &k1);
    let k2 = rhs(t + 0.5 * h, &y2);
    let mut y3 = y.clone();
    y3.add_scaled(0.5 * h, &k2);
    let k3 = rhs(t + 0.5 * h, &y3);
    let mut y4 = y.clone();
    y4.add_scaled(h, &k3);
    let k4 = rhs(t + h, &y4);

    let mut out = y.clone();
    out.add_scaled(h / 6.0, &k1);
    out.add_scaled(h / 3.0, &k2);
    out.add_scaled(h / 3.0, &k3);
    out.add_scaled(h / 6.0, &k4);
    out
}

/// Splits `[0, t_end]` into `n` equal steps no longer than `dt_max`.
pub fn uniform_grid(t_end: f64, dt_max: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, 0.0);
    }
    // tolerate t_end/dt landing a hair above an integer
    let n = ((t_end / dt_max) - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_fourth_order() {
        let exact = (-1.0f64).exp();
        let mut errors = Vec::new();
        for n in [10usize, 20, 40, 80] {
            let h = 1.0 / n as f64;
            let mut y = Vector3::new(1.0, 0.0, 0.0);
            for k in 0..n {
                y = step(&y, k as f64 * h, h, |_, v| -v);
            }
            errors.push((y[0] - exact).abs());
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 4.0).abs() < 0.2, "observed order {order}");
        }
    }

    #[test]
    fn grid_hits_end_exactly() {
        let (n, h) = uniform_grid(80.0, 0.005);
        assert_eq!(n, 16000);
        assert_eq!(h, 0.005);
        let (n, h) = uniform_grid(1.0, 0.3);
        assert_eq!(n, 4);
        assert!((h * n as f64 - 1.0).abs() < 1e-15);
        assert_eq!(uniform_grid(0.0, 0.1), (0, 0.0));
    }
}
