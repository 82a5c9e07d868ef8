//! Gauss-Legendre rules on [-1, 1] and composite panels on an interval.
//!
//! Nodes and weights are computed by Newton iteration on the Legendre
//! polynomial recurrence, accurate to machine precision for the orders used
//! here (<= 32).

/// A Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Build the n-point rule.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1 && n <= 64, "unsupported Gauss order {n}");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-based initial guess, then Newton.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
            let (_, d) = legendre_with_derivative(n, 0.0);
            weights[n / 2] = 2.0 / (d * d);
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b] with this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// P_n(x) and P_n'(x) from the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre nodes and weights on [a, b]: `panels` equal
/// subintervals, each carrying an `order`-point rule.
pub fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussRule::new(order);
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Adaptive 1-D integration by panel bisection with an embedded lower-order
/// estimate. Used for oracle-grade reference integrals in validation code.
pub fn adaptive_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let hi_rule = GaussRule::new(15);
    let lo_rule = GaussRule::new(7);
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut err = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let coarse = lo_rule.integrate(lo, hi, f);
        let fine = hi_rule.integrate(lo, hi, f);
        let e = (fine - coarse).abs();
        if depth >= 48 || e <= rel_tol * fine.abs().max(1e-300) {
            total += fine;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    (total, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        // n-point Gauss integrates degree 2n-1 exactly.
        for n in [2usize, 4, 8, 16] {
            let rule = GaussRule::new(n);
            let deg = 2 * n - 1;
            let exact = (3.0f64.powi(deg as i32 + 1) - 1.0) / (deg as f64 + 1.0);
            let got = rule.integrate(1.0, 3.0, |x| x.powi(deg as i32));
            assert!(
                (got - exact).abs() <= 1e-12 * exact.abs(),
                "n={n}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let (_, ws) = composite_nodes(-2.0, 5.0, 9, 8);
        let sum: f64 = ws.iter().sum();
        assert!((sum - 7.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_boundary_layer() {
        // Sharp exponential layer at the right endpoint.
        let (val, _) = adaptive_1d(&|x: f64| (-1e4 * (1.0 - x)).exp(), 0.0, 1.0, 1e-12);
        assert!((val - 1e-4).abs() < 1e-14);
    }
}
