//! Nystrom solver for the Marchenko equation on a truncated half-line:
//!
//!   K(x, z) + F(x, z) + integral from x to x+L of K(x, s) F(s, z) ds = 0,
//!
//! z running, (x, y, t) parameters. The integral operator is discretized on
//! composite Gauss-Legendre nodes, giving the dense system
//! (I + F^T W) k = -F(x, .), and the field diagnostics of the underlying
//! operator theory: the weighted kernel matrix is Hermitian positive
//! semidefinite by construction and K(x, x) must come out real.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gauss;
use crate::kernel::KernelContext;
use crate::linalg;

/// Truncation ladder: geometric growth from `LADDER_BASE`.
const LADDER_BASE: f64 = 2.0;
const LADDER_FACTOR: f64 = 1.5;
const LADDER_RUNGS: usize = 24;
/// Kernel magnitudes below this are treated as identically zero.
const ABS_FLOOR: f64 = 1e-280;
/// Relative drop defining the fast-decay core of the interval.
const CORE_DROP: f64 = 8.3e-7; // e^-14

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub n_nodes: usize,
    pub gl_order: usize,
    /// Explicit truncation length; chosen from the ladder when None.
    pub truncation: Option<f64>,
    pub edge_tol: f64,
    /// Length of the finely resolved core; derived from the kernel decay
    /// when None. The remainder up to the truncation length is covered by
    /// geometrically widening panels (the strip floor epsilon produces a
    /// slowly decaying, very smooth tail that needs range, not resolution).
    pub core_length: Option<f64>,
    /// Step for the d/dx re-solves; derived from node spacing when None.
    pub derivative_step: Option<f64>,
    /// Compute the x-derivative of the diagonal (four extra solves).
    pub with_derivative: bool,
    /// Richardson-extrapolate the central difference (two extra solves);
    /// a plain central difference is enough when only smoothness matters.
    pub richardson: bool,
    /// Compute min-eigenvalue and condition diagnostics.
    pub with_diagnostics: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n_nodes: 96,
            gl_order: 8,
            truncation: None,
            core_length: None,
            edge_tol: 1e-12,
            derivative_step: None,
            with_derivative: true,
            richardson: true,
            with_diagnostics: true,
        }
    }
}

/// Discrete solution of the Marchenko equation at one base point.
#[derive(Debug, Clone)]
pub struct MarchenkoSolution {
    pub base_x: f64,
    pub truncation_l: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// K(x, node_j).
    pub k_row: Vec<Complex64>,
    /// F(x, node_j).
    pub f_row: Vec<Complex64>,
    pub k_diag: Complex64,
    pub k_diag_dx: Complex64,
    pub f_diag: Complex64,
    pub cond_estimate: f64,
    /// Smallest eigenvalue of the weighted kernel matrix.
    pub min_eig: f64,
    pub quad_error: f64,
}

/// Smallest ladder length L with |F(x+L, x+L)| below `edge_tol` relative to
/// |F(x, x)| (or below an absolute floor when the diagonal itself is tiny).
pub fn choose_truncation(ctx: &KernelContext, x: f64, edge_tol: f64) -> Result<f64> {
    ladder(ctx, x, edge_tol)
}

/// Length of the fast-decay core, used to grade the Nystrom panels.
pub fn core_length(ctx: &KernelContext, x: f64, l: f64) -> Result<f64> {
    Ok(ladder(ctx, x, CORE_DROP).unwrap_or(l).min(l))
}

fn ladder(ctx: &KernelContext, x: f64, rel: f64) -> Result<f64> {
    let base = ctx.eval(x, x)?.value.norm();
    let mut l = LADDER_BASE;
    let mut last_ratio = f64::INFINITY;
    for _ in 0..LADDER_RUNGS {
        let far = ctx.eval(x + l, x + l)?.value.norm();
        if far < ABS_FLOOR || far < rel * base {
            return Ok(l);
        }
        last_ratio = far / base.max(ABS_FLOOR);
        l *= LADDER_FACTOR;
    }
    Err(Error::TruncationLadder {
        l,
        ratio: last_ratio,
        target: rel,
    })
}

/// Composite nodes: `n_nodes` over the core [x, x + l_core] in two tiers
/// (the solution's sech-scale structure sits at the left end, so the near
/// half of the panels is twice as fine), then geometrically widening Gauss
/// panels out to x + l.
fn graded_nodes(
    x: f64,
    l: f64,
    l_core: f64,
    n_nodes: usize,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let core = l_core.min(l);
    let panels = n_nodes.div_ceil(order).max(2);
    let fine = panels.div_ceil(2);
    let coarse = panels - fine;
    // fine panels of width w, coarse of width 2w.
    let w = core / (fine + 2 * coarse) as f64;
    let split = x + w * fine as f64;
    let (mut xs, mut ws) = gauss::composite_nodes(x, split, fine, order);
    if coarse > 0 {
        let (xs2, ws2) = gauss::composite_nodes(split, x + core, coarse, order);
        xs.extend(xs2);
        ws.extend(ws2);
    }
    let rule = gauss::GaussRule::new(order);
    let mut pos = core;
    let mut width = 0.5 * core;
    while pos < l - 1e-12 * l.max(1.0) {
        let w_eff = width.min(l - pos);
        let (a, b) = (x + pos, x + pos + w_eff);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (xn, wn) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * xn);
            ws.push(half * wn);
        }
        pos += w_eff;
        width = (2.0 * width).min(4.0 * core);
    }
    (xs, ws)
}

/// Solve the Marchenko equation at base point x.
pub fn solve(ctx: &KernelContext, x: f64, cfg: &SolveConfig) -> Result<MarchenkoSolution> {
    let l = match cfg.truncation {
        Some(l) => l,
        None => choose_truncation(ctx, x, cfg.edge_tol)?,
    };
    let l_core = match cfg.core_length {
        Some(c) => c.min(l),
        None => core_length(ctx, x, l)?,
    };
    let mut sol = solve_fixed(ctx, x, l, l_core, cfg)?;
    if cfg.with_derivative {
        let spacing = l_core / cfg.n_nodes as f64;
        let h = cfg.derivative_step.unwrap_or(0.05 * spacing).max(1e-5);
        let light = SolveConfig {
            with_derivative: false,
            with_diagnostics: false,
            truncation: Some(l),
            core_length: Some(l_core),
            ..*cfg
        };
        let d_at = |step: f64| -> Result<Complex64> {
            let plus = solve_fixed(ctx, x + step, l, l_core, &light)?.k_diag;
            let minus = solve_fixed(ctx, x - step, l, l_core, &light)?.k_diag;
            Ok((plus - minus) / (2.0 * step))
        };
        if cfg.richardson {
            // Richardson extrapolation removes the h^2 term of the central
            // difference of the re-solved diagonal.
            let d_h = d_at(h)?;
            let d_h2 = d_at(0.5 * h)?;
            sol.k_diag_dx = (4.0 * d_h2 - d_h) / 3.0;
        } else {
            sol.k_diag_dx = d_at(h)?;
        }
    }
    Ok(sol)
}

fn solve_fixed(
    ctx: &KernelContext,
    x: f64,
    l: f64,
    l_core: f64,
    cfg: &SolveConfig,
) -> Result<MarchenkoSolution> {
    let order = cfg.gl_order.clamp(2, 32);
    let (nodes, weights) = graded_nodes(x, l, l_core, cfg.n_nodes, order);
    let n = nodes.len();

    // One Hermitian Gram build covers F(x, x), the row F(x, .) and the
    // node-to-node block.
    let mut points = Vec::with_capacity(n + 1);
    points.push(x);
    points.extend_from_slice(&nodes);
    let gram = ctx.gram(&points)?;
    let f_diag = gram[(0, 0)];
    let f_row: Vec<Complex64> = (0..n).map(|j| gram[(0, j + 1)]).collect();

    // (I + F^T W) k = -F(x, .): entry (j, i) = delta + w_i F(node_i, node_j).
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(j, i)] = gram[(i + 1, j + 1)] * Complex64::new(weights[i], 0.0);
        }
        m[(j, j)] += Complex64::new(1.0, 0.0);
    }
    let rhs = DVector::from_fn(n, |j, _| -f_row[j]);
    let m_copy = cfg.with_diagnostics.then(|| m.clone());
    let lu = linalg::LuSolver::new(m)?;
    let k = lu.solve(&rhs)?;

    // Diagonal from the z = x limit of the equation.
    let mut k_diag = -f_diag;
    for i in 0..n {
        k_diag -= weights[i] * k[i] * gram[(i + 1, 0)];
    }

    let (min_eig, cond_estimate) = if cfg.with_diagnostics {
        let mut s = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let scale = (weights[i] * weights[j]).sqrt();
                s[(i, j)] = gram[(i + 1, j + 1)] * Complex64::new(scale, 0.0);
            }
        }
        (
            linalg::min_eigenvalue_hermitian(&s),
            lu.condition_estimate(m_copy.as_ref().expect("kept for diagnostics")),
        )
    } else {
        (0.0, 0.0)
    };

    let quad_error = ctx.eval(x, x)?.quad_error;
    Ok(MarchenkoSolution {
        base_x: x,
        truncation_l: l,
        nodes,
        weights,
        k_row: k.iter().cloned().collect(),
        f_row,
        k_diag,
        k_diag_dx: Complex64::ZERO,
        f_diag,
        cond_estimate,
        min_eig,
        quad_error,
    })
}

/// Imaginary part of the discretized energy integral
/// integral of F(x, s) conj(K(x, s)) ds; vanishes for self-adjoint kernels.
pub fn hermitian_energy_imbalance(sol: &MarchenkoSolution) -> f64 {
    let mut acc = Complex64::ZERO;
    for i in 0..sol.k_row.len() {
        acc += sol.weights[i] * sol.f_row[i] * sol.k_row[i].conj();
    }
    acc.im
}

/// Double the node count until the diagonal stabilizes to `tol`; returns the
/// validated (smaller) count.
pub fn stabilize_nodes(
    ctx: &KernelContext,
    x: f64,
    cfg: &SolveConfig,
    tol: f64,
    max_nodes: usize,
) -> Result<usize> {
    let l = match cfg.truncation {
        Some(l) => l,
        None => choose_truncation(ctx, x, cfg.edge_tol)?,
    };
    let l_core = match cfg.core_length {
        Some(c) => c.min(l),
        None => core_length(ctx, x, l)?,
    };
    let light = SolveConfig {
        with_derivative: false,
        with_diagnostics: false,
        truncation: Some(l),
        core_length: Some(l_core),
        ..*cfg
    };
    let mut n = cfg.n_nodes;
    let mut prev = solve_fixed(ctx, x, l, l_core, &SolveConfig { n_nodes: n, ..light })?.k_diag;
    while 2 * n <= max_nodes {
        let next =
            solve_fixed(ctx, x, l, l_core, &SolveConfig { n_nodes: 2 * n, ..light })?.k_diag;
        let change = (next - prev).norm();
        if change < tol * next.norm().max(1.0) {
            return Ok(n);
        }
        prev = next;
        n *= 2;
    }
    Err(Error::NodeDoubling((prev).norm(), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::QuadConfig;
    use crate::measure::{Atom, Density, Measure};
    use crate::spectral::{
        phase, AmplitudeProfile, ProfileKind, RoofMode, SpectralDomain, SpectralPoint,
    };

    fn atom_measure(p: f64, q: f64, c: f64) -> Measure {
        Measure {
            atoms: vec![Atom {
                point: SpectralPoint { p, q },
                weight: c,
            }],
            density: Density::None,
        }
    }

    fn wide_domain() -> SpectralDomain {
        let profile =
            AmplitudeProfile::new(ProfileKind::Constant { b_squared: 9.0 }, 4.0, 0.05).unwrap();
        SpectralDomain::new(profile, RoofMode::TangencyLocus, (-2.0, 2.0)).unwrap()
    }

    fn example2_ctx(t: f64) -> KernelContext {
        let profile =
            AmplitudeProfile::new(ProfileKind::Constant { b_squared: 1.0 }, 0.5, 0.05).unwrap();
        let domain =
            SpectralDomain::new(profile, RoofMode::TangencyLocus, (-0.5, 0.5)).unwrap();
        let measure = Measure {
            atoms: vec![],
            density: Density::GaussP { scale: 12.0 },
        };
        KernelContext::new(&measure, &domain, 0.0, t, QuadConfig::default()).unwrap()
    }

    /// Closed form for the rank-1 kernel: the single-atom equation is solved
    /// by K(x, z) = -F(x, z) / (1 + (c / 2q) e^{-2 q x + 2 q f t}).
    fn rank_one_k(
        p: f64,
        q: f64,
        c: f64,
        x: f64,
        z: f64,
        y: f64,
        t: f64,
    ) -> Complex64 {
        let f = c * Complex64::new(
            -q * (x + z) + 2.0 * q * phase(p, q, y) * t,
            p * (x - z),
        )
        .exp();
        let denom = 1.0 + (c / (2.0 * q)) * (-2.0 * q * x + 2.0 * q * phase(p, q, y) * t).exp();
        -f / denom
    }

    #[test]
    fn truncation_matches_exponential_decay_oracle() {
        // Single atom with q = 1: |F| decays like e^{-2L}, so the oracle
        // length for a 1e-12 edge is ln(1e12) / 2.
        let (p, q, c) = (0.0, 1.0, 2.0);
        let ctx = KernelContext::new(
            &atom_measure(p, q, c),
            &wide_domain(),
            0.0,
            1.0,
            QuadConfig::default(),
        )
        .unwrap();
        let peak = phase(p, q, 0.0) * 1.0;
        let l = choose_truncation(&ctx, peak, 1e-12).unwrap();
        let oracle = (1e12f64).ln() / (2.0 * q);
        assert!(
            l >= oracle / LADDER_FACTOR && l <= oracle * LADDER_FACTOR,
            "L = {l}, oracle = {oracle}"
        );
    }

    #[test]
    fn truncation_of_zero_measure_is_minimal() {
        let ctx = KernelContext::new(
            &Measure::default(),
            &wide_domain(),
            0.0,
            1.0,
            QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(choose_truncation(&ctx, 0.0, 1e-12).unwrap(), LADDER_BASE);
    }

    #[test]
    fn truncation_verified_post_hoc_on_density() {
        let ctx = example2_ctx(10.0);
        let x = 10.0; // on the front, C t = 10
        let l = choose_truncation(&ctx, x, 1e-12).unwrap();
        let base = ctx.eval(x, x).unwrap().value.norm();
        let far = ctx.eval(x + l, x + l).unwrap().value.norm();
        assert!(far <= 1e-12 * base, "ratio {}", far / base);
    }

    #[test]
    fn zero_measure_solution_is_identically_zero() {
        let ctx = KernelContext::new(
            &Measure::default(),
            &wide_domain(),
            0.0,
            1.0,
            QuadConfig::default(),
        )
        .unwrap();
        let sol = solve(&ctx, 0.3, &SolveConfig::default()).unwrap();
        assert_eq!(sol.k_diag, Complex64::ZERO);
        assert_eq!(sol.k_diag_dx, Complex64::ZERO);
        assert!(sol.k_row.iter().all(|k| *k == Complex64::ZERO));
        assert_eq!(hermitian_energy_imbalance(&sol), 0.0);
    }

    #[test]
    fn rank_one_solution_matches_closed_form_at_all_nodes() {
        let (p, q, c) = (0.35, 1.2, 1.7);
        let (y, t) = (0.8, 3.0);
        let ctx = KernelContext::new(
            &atom_measure(p, q, c),
            &wide_domain(),
            y,
            t,
            QuadConfig::default(),
        )
        .unwrap();
        let x = phase(p, q, y) * t + 0.3;
        let sol = solve(&ctx, x, &SolveConfig::default()).unwrap();
        for (j, &node) in sol.nodes.iter().enumerate() {
            let oracle = rank_one_k(p, q, c, x, node, y, t);
            assert!(
                (sol.k_row[j] - oracle).norm() <= 1e-9 * (1.0 + oracle.norm()),
                "node {j}: {} vs {}",
                sol.k_row[j],
                oracle
            );
        }
        let oracle_diag = rank_one_k(p, q, c, x, x, y, t);
        assert!((sol.k_diag - oracle_diag).norm() <= 1e-10 * (1.0 + oracle_diag.norm()));
    }

    #[test]
    fn rank_one_diagonal_over_random_draws() {
        let mut state = 0x5deece66du64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut max_rel = 0.0f64;
        for _ in 0..50 {
            let q = 0.3 + 1.7 * next();
            let p = -1.0 + 2.0 * next();
            let c = 0.5 + 3.5 * next();
            let y = -2.0 + 4.0 * next();
            let t = 0.5 + 19.5 * next();
            let ctx = KernelContext::new(
                &atom_measure(p, q, c),
                &wide_domain(),
                y,
                t,
                QuadConfig::default(),
            )
            .unwrap();
            // Base point near the soliton peak.
            let x = phase(p, q, y) * t + (1.0 / (2.0 * q)) * (c / (2.0 * q)).ln()
                + (-1.0 + 2.0 * next()) / q;
            let cfg = SolveConfig {
                with_derivative: false,
                with_diagnostics: false,
                ..SolveConfig::default()
            };
            let sol = solve(&ctx, x, &cfg).unwrap();
            let oracle = rank_one_k(p, q, c, x, x, y, t);
            let rel = (sol.k_diag - oracle).norm() / oracle.norm().max(1e-30);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-8, "max relative K_diag error {max_rel}");
    }

    #[test]
    fn operator_diagnostics_positive_and_real() {
        // Positivity (weighted kernel matrix PSD) and diagonal reality on
        // both an atomic and a density kernel.
        let ctx_atom = KernelContext::new(
            &atom_measure(0.5, 1.0, 2.0),
            &wide_domain(),
            0.4,
            2.0,
            QuadConfig::default(),
        )
        .unwrap();
        let sol = solve(&ctx_atom, 2.0, &SolveConfig::default()).unwrap();
        assert!(sol.min_eig >= -1e-10, "min_eig = {}", sol.min_eig);
        assert!(sol.k_diag.im.abs() < 1e-10, "Im K = {}", sol.k_diag.im);
        assert!(sol.cond_estimate >= 1.0);

        let ctx = example2_ctx(5.0);
        let sol = solve(&ctx, 5.0 - 2.0, &SolveConfig::default()).unwrap();
        assert!(sol.min_eig >= -1e-10, "min_eig = {}", sol.min_eig);
        assert!(sol.k_diag.im.abs() < 1e-10, "Im K = {}", sol.k_diag.im);
    }

    #[test]
    fn hermitian_energy_imbalance_is_small() {
        let ctx_atom = KernelContext::new(
            &atom_measure(0.3, 0.9, 1.5),
            &wide_domain(),
            0.0,
            2.0,
            QuadConfig::default(),
        )
        .unwrap();
        let sol = solve(&ctx_atom, 1.5, &SolveConfig::default()).unwrap();
        assert!(hermitian_energy_imbalance(&sol).abs() < 1e-12);

        // Density kernel at pseudo-random front points.
        let t = 5.0;
        let ctx = example2_ctx(t);
        for k in 0..3 {
            let x = t - 3.0 + 1.7 * k as f64;
            let sol = solve(&ctx, x, &SolveConfig::default()).unwrap();
            let imb = hermitian_energy_imbalance(&sol);
            assert!(imb.abs() < 1e-8, "x = {x}: imbalance {imb}");
        }
    }

    #[test]
    fn diagonal_stable_under_node_doubling() {
        let t = 5.0;
        let ctx = example2_ctx(t);
        let x = t - 2.0;
        let cfg = SolveConfig {
            with_derivative: false,
            with_diagnostics: false,
            ..SolveConfig::default()
        };
        let l = choose_truncation(&ctx, x, 1e-12).unwrap();
        let lc = core_length(&ctx, x, l).unwrap();
        let a = solve_fixed(&ctx, x, l, lc, &SolveConfig { n_nodes: 96, ..cfg }).unwrap();
        let b = solve_fixed(&ctx, x, l, lc, &SolveConfig { n_nodes: 192, ..cfg }).unwrap();
        assert!(
            (a.k_diag - b.k_diag).norm() < 1e-8 * b.k_diag.norm().max(1.0),
            "change {}",
            (a.k_diag - b.k_diag).norm()
        );
        let n = stabilize_nodes(&ctx, x, &cfg, 1e-8, 1024).unwrap();
        assert!(n <= 192);
    }

    #[test]
    fn nystrom_error_decreases_on_doubling_ladder() {
        let (p, q, c) = (0.2, 0.8, 1.3);
        let (y, t) = (0.0, 4.0);
        let ctx = KernelContext::new(
            &atom_measure(p, q, c),
            &wide_domain(),
            y,
            t,
            QuadConfig::default(),
        )
        .unwrap();
        let x = phase(p, q, y) * t;
        let l = choose_truncation(&ctx, x, 1e-12).unwrap();
        let lc = core_length(&ctx, x, l).unwrap();
        let oracle = rank_one_k(p, q, c, x, x, y, t);
        let mut errs = Vec::new();
        for n in [16usize, 32, 64, 128] {
            let cfg = SolveConfig {
                n_nodes: n,
                with_derivative: false,
                with_diagnostics: false,
                ..SolveConfig::default()
            };
            let sol = solve_fixed(&ctx, x, l, lc, &cfg).unwrap();
            errs.push((sol.k_diag - oracle).norm() / oracle.norm());
        }
        for w in errs.windows(2) {
            if w[0] > 1e-13 {
                assert!(w[1] < w[0], "no decrease: {errs:?}");
            }
        }
    }
}
