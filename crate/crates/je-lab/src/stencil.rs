//! Centered fourth-order finite-difference stencils shared by the PDE
//! residual checks and the log-determinant second difference.

/// First derivative, 4th order: needs f(x +- h), f(x +- 2h).
pub fn d1<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Second derivative, 4th order: needs f(x), f(x +- h), f(x +- 2h).
pub fn d2<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// Third derivative, 4th order: needs f(x +- h), f(x +- 2h), f(x +- 3h).
pub fn d3<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (-f(x + 3.0 * h) + 8.0 * f(x + 2.0 * h) - 13.0 * f(x + h) + 13.0 * f(x - h)
        - 8.0 * f(x - 2.0 * h)
        + f(x - 3.0 * h))
        / (8.0 * h * h * h)
}

/// First-derivative weights on the 5-point symmetric stencil, exposed so the
/// residual drivers can reuse sampled values instead of re-evaluating.
pub const D1_OFFSETS: [i32; 4] = [-2, -1, 1, 2];
pub const D1_WEIGHTS: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_exp_are_fourth_order() {
        let f = |x: f64| (1.3 * x).sin() * (0.4 * x).exp();
        let x = 0.7_f64;
        // Exact derivatives computed symbolically for the test.
        let e = (0.4 * x).exp();
        let (s, c) = ((1.3 * x).sin(), (1.3 * x).cos());
        let d1_exact = e * (0.4 * s + 1.3 * c);
        let d2_exact = e * ((0.16 - 1.69) * s + 2.0 * 0.4 * 1.3 * c);
        let d3_exact = e * (0.4f64.powi(3) * s + 3.0 * 0.16 * 1.3 * c - 3.0 * 0.4 * 1.69 * s
            - 1.3f64.powi(3) * c);
        for (h, tol) in [(1e-2, 1e-8), (5e-3, 1e-9)] {
            assert!((d1(f, x, h) - d1_exact).abs() < tol);
            assert!((d2(f, x, h) - d2_exact).abs() < tol * 1e2);
            assert!((d3(f, x, h) - d3_exact).abs() < tol * 1e4);
        }
        // Halving h shrinks the d1 error by roughly 2^4.
        let e1 = (d1(f, x, 2e-2) - d1_exact).abs();
        let e2 = (d1(f, x, 1e-2) - d1_exact).abs();
        let ratio = e1 / e2;
        assert!(ratio > 8.0 && ratio < 32.0, "ratio {ratio}");
    }
}
