//! Bracketed one-dimensional searches: golden-section optimization and
//! monotone root finding. All searches are deterministic; ties are broken
//! toward the smaller abscissa.

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Relative tolerance used by the 1-D searches.
pub const SEARCH_REL_TOL: f64 = 1e-12;

/// Minimize a unimodal function on [a, b] by golden-section search.
///
/// Returns (argmin, min value). The interval is shrunk until its width is
/// below `rel_tol * (1 + |x|)`; the midpoint of the final bracket is
/// reported, which breaks exact ties toward the smaller abscissa because
/// the left candidate is kept on equality.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > rel_tol * (1.0 + lo.abs().max(hi.abs())) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    if f1 < fx && f1 <= f2 {
        (x1, f1)
    } else if f2 < fx {
        (x2, f2)
    } else {
        (x, fx)
    }
}

/// Maximize a unimodal function on [a, b].
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let (x, neg) = golden_min(|s| -f(s), a, b, rel_tol);
    (x, -neg)
}

/// Expand a bracket around `center` until `f` is larger at both ends than
/// somewhere inside. Requires a coercive function (f -> +inf both ways).
/// Returns the bracket, or None if `max_span` is exceeded.
pub fn expand_bracket_min<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    initial_step: f64,
    max_span: f64,
) -> Option<(f64, f64)> {
    let fc = f(center);
    let mut step = initial_step.abs().max(1e-8);
    let (mut lo, mut hi) = (center - step, center + step);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    while (flo <= fc || fhi <= fc) && hi - lo < max_span {
        step *= 2.0;
        if flo <= fc {
            lo -= step;
            flo = f(lo);
        }
        if fhi <= fc {
            hi += step;
            fhi = f(hi);
        }
    }
    if flo > fc && fhi > fc {
        Some((lo, hi))
    } else {
        None
    }
}

/// Find the root of a strictly increasing function by bracket expansion and
/// bisection. `start` seeds the bracket hunt; `limits`, when given, bound the
/// admissible abscissa range (tabulated profiles have finite support).
pub fn monotone_root<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    limits: Option<(f64, f64)>,
    rel_tol: f64,
) -> Option<f64> {
    let (min_x, max_x) = limits.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let clamp = |x: f64| x.clamp(min_x, max_x);
    let mut lo = clamp(start);
    let mut hi = lo;
    let mut flo = f(lo);
    let mut fhi = flo;
    let mut step = 1.0_f64.max(start.abs() * 0.1);
    for _ in 0..200 {
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        if flo > 0.0 {
            if lo <= min_x {
                return None;
            }
            lo = clamp(lo - step);
            flo = f(lo);
        }
        if fhi < 0.0 {
            if hi >= max_x {
                return None;
            }
            hi = clamp(hi + step);
            fhi = f(hi);
        }
        step *= 2.0;
    }
    if !(flo <= 0.0 && fhi >= 0.0) {
        return None;
    }
    // Bisection with a final secant polish.
    for _ in 0..200 {
        if hi - lo <= rel_tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm <= 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    if fhi != flo {
        let sec = lo - flo * (hi - lo) / (fhi - flo);
        if sec.is_finite() && sec >= lo && sec <= hi {
            return Some(sec);
        }
    }
    Some(0.5 * (lo + hi))
}

/// Scan `n` evenly spaced points over [a, b] and golden-refine about the best
/// one. Robust against mild multimodality; ties go to the smaller abscissa.
pub fn scan_then_golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n: usize,
    rel_tol: f64,
) -> (f64, f64) {
    let n = n.max(3);
    let h = (b - a) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(a + h * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = a + h * (best_i.saturating_sub(1)) as f64;
    let hi = (a + h * (best_i + 1) as f64).min(b);
    golden_max(f, lo, hi, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, v) = golden_min(|s| (s - 3.25).powi(2) + 1.0, -10.0, 10.0, 1e-13);
        assert!((x - 3.25).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bracket_expansion_covers_far_minimum() {
        let (lo, hi) = expand_bracket_min(|s| (s - 40.0).powi(2), 0.0, 1.0, 1e6).unwrap();
        assert!(lo < 40.0 && hi > 40.0);
        let (x, _) = golden_min(|s| (s - 40.0).powi(2), lo, hi, 1e-13);
        assert!((x - 40.0).abs() < 1e-8);
    }

    #[test]
    fn monotone_root_matches_cbrt() {
        let r = monotone_root(|s| s * s * s - 27.0, 0.0, None, 1e-14).unwrap();
        assert!((r - 3.0).abs() < 1e-10);
    }

    #[test]
    fn scan_refine_handles_shifted_sech() {
        let (x, v) = scan_then_golden_max(|s| 1.0 / (s - 2.0).cosh().powi(2), -8.0, 8.0, 33, 1e-13);
        assert!((x - 2.0).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
