//! Spectral geometry: the amplitude profile C(s), the phase
//! f(p, q, y) = q^2 - 3 p^2 + p y / 2 - y^2 / 48, the spectral strip with
//! floor epsilon and roof q = h(p), tangency and maximum points, and the
//! validators for the three admissibility conditions on (C, Omega, d-mu).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Measure, MomentCondition};
use crate::search;

/// The phase function of the kernel exponent.
#[inline]
pub fn phase(p: f64, q: f64, y: f64) -> f64 {
    q * q - 3.0 * p * p + 0.5 * p * y - y * y / 48.0
}

/// A point of the upper half (p, q)-plane, q > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub p: f64,
    pub q: f64,
}

/// How the roof curve q = h(p) of the spectral strip is constructed.
///
/// * `TangencyLocus` - h is the locus of the tangency points
///   (p0(s), q0(s)) swept over s, inverted for s given p.
/// * `MaxConsistent` - h(p)^2 = min over s of [C(s) + 3 (p - s/12)^2],
///   the largest roof for which the phase never exceeds C anywhere on the
///   strip. The two modes coincide when C' is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoofMode {
    TangencyLocus,
    MaxConsistent,
}

/// Amplitude profile C(s) with its first two derivatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    /// C(s) = a2 s^2 + a0.
    Quadratic { a2: f64, a0: f64 },
    /// C(s) = b^2.
    Constant { b_squared: f64 },
    /// Sampled (s, C) pairs interpolated by a natural cubic spline.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeProfile {
    #[serde(flatten)]
    pub kind: ProfileKind,
    /// Lower bound delta with C(s) >= delta > epsilon^2.
    pub delta: f64,
    /// Spectral floor epsilon.
    pub epsilon: f64,
    #[serde(skip)]
    spline: Option<CubicSpline>,
}

impl AmplitudeProfile {
    pub fn new(kind: ProfileKind, delta: f64, epsilon: f64) -> Result<Self> {
        let spline = match &kind {
            ProfileKind::Tabulated { points } => Some(CubicSpline::new(points)?),
            _ => None,
        };
        if !(delta > 0.0) || !(epsilon > 0.0) {
            return Err(Error::Profile(format!(
                "delta and epsilon must be positive (delta = {delta}, epsilon = {epsilon})"
            )));
        }
        Ok(Self {
            kind,
            delta,
            epsilon,
            spline,
        })
    }

    /// Rebuild derived state after deserialization.
    pub fn finalize(&mut self) -> Result<()> {
        if let ProfileKind::Tabulated { points } = &self.kind {
            self.spline = Some(CubicSpline::new(points)?);
        }
        Ok(())
    }

    pub fn value(&self, s: f64) -> f64 {
        match &self.kind {
            ProfileKind::Quadratic { a2, a0 } => a2 * s * s + a0,
            ProfileKind::Constant { b_squared } => *b_squared,
            ProfileKind::Tabulated { .. } => self.spline.as_ref().expect("finalized").value(s),
        }
    }

    pub fn slope(&self, s: f64) -> f64 {
        match &self.kind {
            ProfileKind::Quadratic { a2, .. } => 2.0 * a2 * s,
            ProfileKind::Constant { .. } => 0.0,
            ProfileKind::Tabulated { .. } => self.spline.as_ref().expect("finalized").slope(s),
        }
    }

    pub fn curvature(&self, s: f64) -> f64 {
        match &self.kind {
            ProfileKind::Quadratic { a2, .. } => 2.0 * a2,
            ProfileKind::Constant { .. } => 0.0,
            ProfileKind::Tabulated { .. } => self.spline.as_ref().expect("finalized").curvature(s),
        }
    }

    /// Finite support for tabulated profiles, None for global ones.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.spline.as_ref().map(|sp| sp.support())
    }
}

/// The point where the phase hyperbola f(p, q, y) = C(y) touches the roof:
/// p0 = C'(y) + y/12, q0 = sqrt(C(y) + 3 C'(y)^2).
pub fn tangency_point(profile: &AmplitudeProfile, y: f64) -> Result<SpectralPoint> {
    let c = profile.value(y);
    let cp = profile.slope(y);
    let rad = c + 3.0 * cp * cp;
    if rad <= 0.0 {
        return Err(Error::TangencyRadicand(rad, y));
    }
    Ok(SpectralPoint {
        p: cp + y / 12.0,
        q: rad.sqrt(),
    })
}

/// Height of the roof curve at momentum p for the given construction mode.
pub fn envelope_height(profile: &AmplitudeProfile, mode: RoofMode, p: f64) -> Result<f64> {
    match mode {
        RoofMode::TangencyLocus => {
            // Invert the strictly increasing locus momentum s -> C'(s) + s/12.
            let root = search::monotone_root(
                |s| profile.slope(s) + s / 12.0 - p,
                12.0 * p,
                profile.support(),
                search::SEARCH_REL_TOL,
            );
            let (lo, hi) = profile.support().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            let s = root.ok_or(Error::OutsideLocus(p, lo, hi))?;
            if profile.curvature(s) + 1.0 / 12.0 <= 0.0 {
                return Err(Error::RoofFold(p));
            }
            Ok(tangency_point(profile, s)?.q)
        }
        RoofMode::MaxConsistent => {
            // h(p)^2 = min_s [C(s) + 3 (p - s/12)^2]; the objective is
            // strictly convex whenever C'' > -1/24.
            let objective = |s: f64| {
                let d = p - s / 12.0;
                profile.value(s) + 3.0 * d * d
            };
            let (lo, hi) = match profile.support() {
                Some(r) => r,
                None => search::expand_bracket_min(objective, 12.0 * p, 1.0, 1e9)
                    .ok_or_else(|| Error::Numeric("roof minimization bracket failed".into()))?,
            };
            let (_, min) = search::golden_min(objective, lo, hi, search::SEARCH_REL_TOL);
            if min <= 0.0 {
                return Err(Error::GeometryRadicand {
                    factor: "max-consistent roof",
                    value: min,
                });
            }
            Ok(min.sqrt())
        }
    }
}

/// Spectral strip {p in p_range, epsilon <= q <= h(p)}.
#[derive(Debug, Clone)]
pub struct SpectralDomain {
    pub profile: AmplitudeProfile,
    pub epsilon: f64,
    pub roof_mode: RoofMode,
    pub p_range: (f64, f64),
}

/// Result of maximizing the phase over the strip at fixed y.
#[derive(Debug, Clone, Copy)]
pub struct MaxPoint {
    pub point: SpectralPoint,
    pub value: f64,
    /// Positive when the maximum exceeds C(y); a consistency violation of
    /// the roof construction, reported but never fatal.
    pub excess_over_c: f64,
}

impl SpectralDomain {
    pub fn new(
        profile: AmplitudeProfile,
        roof_mode: RoofMode,
        p_range: (f64, f64),
    ) -> Result<Self> {
        if !(p_range.0 < p_range.1) {
            return Err(Error::Scenario(format!(
                "empty p range [{}, {}]",
                p_range.0, p_range.1
            )));
        }
        let epsilon = profile.epsilon;
        Ok(Self {
            profile,
            epsilon,
            roof_mode,
            p_range,
        })
    }

    pub fn roof_height(&self, p: f64) -> Result<f64> {
        envelope_height(&self.profile, self.roof_mode, p)
    }

    pub fn contains(&self, pt: SpectralPoint) -> bool {
        pt.p > self.p_range.0
            && pt.p < self.p_range.1
            && pt.q > self.epsilon
            && self
                .roof_height(pt.p)
                .map(|h| pt.q < h)
                .unwrap_or(false)
    }

    /// Maximize f(., ., y) over the strip. The phase increases with q for
    /// q > 0, so the maximum lies on the roof; a scan plus golden refinement
    /// along q = h(p) locates it.
    pub fn max_point(&self, y: f64, tol: f64) -> Result<MaxPoint> {
        let on_roof = |p: f64| match self.roof_height(p) {
            Ok(h) => phase(p, h, y),
            Err(_) => f64::NEG_INFINITY,
        };
        let (p_star, value) = search::scan_then_golden_max(
            on_roof,
            self.p_range.0,
            self.p_range.1,
            201,
            search::SEARCH_REL_TOL,
        );
        let q_star = self.roof_height(p_star)?;
        let c = self.profile.value(y);
        let excess = value - c;
        if excess > tol {
            log::warn!(
                "phase maximum {value:.12e} exceeds C({y}) = {c:.12e} by {excess:.3e} (roof mode {:?})",
                self.roof_mode
            );
        }
        Ok(MaxPoint {
            point: SpectralPoint { p: p_star, q: q_star },
            value,
            excess_over_c: excess,
        })
    }
}

// ---------------------------------------------------------------------------
// Conditions report
// ---------------------------------------------------------------------------

/// Sampling plan for the conditions validator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Working range of s (and y) over which C is sampled.
    pub s_range: (f64, f64),
    pub s_samples: usize,
    /// Grid used for the phase-bound check in max-consistent mode.
    pub grid_p: usize,
    pub grid_q: usize,
    /// Exponent values a for the moment integral check.
    pub moment_exponents: Vec<f64>,
    /// Tolerance for the phase-bound and max-consistency diagnostics.
    pub phase_tol: f64,
    pub moment_condition: MomentCondition,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            s_range: (-6.0, 6.0),
            s_samples: 121,
            grid_p: 200,
            grid_q: 200,
            moment_exponents: vec![0.5, 1.0],
            phase_tol: 1e-8,
            moment_condition: MomentCondition::Standard,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub condition_a: Vec<Check>,
    pub condition_b: Vec<Check>,
    pub condition_c: Vec<Check>,
    /// Non-fatal diagnostics: roof/max consistency, declared-g mismatch,
    /// p-range tail adequacy.
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl ConditionsReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let section = |title: &str, checks: &[Check], out: &mut String| {
            out.push_str(title);
            out.push('\n');
            for c in checks {
                let tag = match c.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Fail => "FAIL",
                };
                out.push_str(&format!("  [{tag}] {}: {}\n", c.name, c.detail));
            }
        };
        section("condition A (profile)", &self.condition_a, &mut out);
        section("condition B (spectral strip)", &self.condition_b, &mut out);
        section("condition C (measure)", &self.condition_c, &mut out);
        if !self.warnings.is_empty() {
            out.push_str("diagnostics\n");
            for w in &self.warnings {
                out.push_str(&format!("  [WARN] {w}\n"));
            }
        }
        out.push_str(if self.passed {
            "overall: PASS\n"
        } else {
            "overall: FAIL\n"
        });
        out
    }
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

/// Validate the three admissibility conditions and collect diagnostics.
pub fn validate_conditions(
    domain: &SpectralDomain,
    measure: &Measure,
    declared_g: Option<&crate::measure::GFunction>,
    cfg: &ValidationConfig,
) -> ConditionsReport {
    let profile = &domain.profile;
    let mut warnings = Vec::new();

    // --- Condition A -------------------------------------------------------
    let mut condition_a = Vec::new();
    let eps2 = domain.epsilon * domain.epsilon;
    condition_a.push(check(
        "delta > epsilon^2",
        profile.delta > eps2,
        format!("delta = {}, epsilon^2 = {}", profile.delta, eps2),
    ));
    let (s_lo, s_hi) = clip_to_support(profile, cfg.s_range);
    let n = cfg.s_samples.max(3);
    let mut min_c = f64::INFINITY;
    let mut min_c_at = s_lo;
    let mut min_curv = f64::INFINITY;
    let mut min_curv_at = s_lo;
    for i in 0..n {
        let s = s_lo + (s_hi - s_lo) * i as f64 / (n - 1) as f64;
        let c = profile.value(s);
        if c < min_c {
            min_c = c;
            min_c_at = s;
        }
        let k = profile.curvature(s);
        if k < min_curv {
            min_curv = k;
            min_curv_at = s;
        }
    }
    condition_a.push(check(
        "C(s) >= delta",
        min_c >= profile.delta,
        format!("min C = {min_c:.6e} at s = {min_c_at:.4} (delta = {})", profile.delta),
    ));
    condition_a.push(check(
        "C''(s) > -1/24",
        min_curv > -1.0 / 24.0,
        format!("min C'' = {min_curv:.6e} at s = {min_curv_at:.4}"),
    ));

    // --- Condition B -------------------------------------------------------
    let mut condition_b = Vec::new();
    let mut roof_ok = true;
    let mut roof_detail = String::from("h(p) > epsilon on p range");
    let np = cfg.grid_p.max(2);
    for i in 0..np {
        let p = domain.p_range.0
            + (domain.p_range.1 - domain.p_range.0) * i as f64 / (np - 1) as f64;
        match domain.roof_height(p) {
            Ok(h) if h > domain.epsilon => {}
            Ok(h) => {
                roof_ok = false;
                roof_detail = format!("h({p:.4}) = {h:.6e} <= epsilon = {}", domain.epsilon);
                break;
            }
            Err(e) => {
                roof_ok = false;
                roof_detail = format!("roof evaluation failed at p = {p:.4}: {e}");
                break;
            }
        }
    }
    condition_b.push(check("roof above floor", roof_ok, roof_detail));

    if domain.roof_mode == RoofMode::MaxConsistent {
        let (ok, detail) = phase_bound_check(domain, cfg, (s_lo, s_hi));
        condition_b.push(check("f(p, q, s) <= C(s) on strip", ok, detail));
    } else {
        // Diagnostic only: report where the strip maximum overshoots C.
        let mut worst = 0.0_f64;
        let mut worst_y = 0.0;
        for i in 0..9 {
            let y = s_lo + (s_hi - s_lo) * i as f64 / 8.0;
            if let Ok(mp) = domain.max_point(y, cfg.phase_tol) {
                if mp.excess_over_c > worst {
                    worst = mp.excess_over_c;
                    worst_y = y;
                }
            }
        }
        if worst > cfg.phase_tol {
            warnings.push(format!(
                "tangency-locus roof: max phase exceeds C(y) by {worst:.3e} at y = {worst_y:.3}; \
                 the strip maximum is inconsistent with the amplitude profile in this mode"
            ));
        }
    }

    // --- Condition C -------------------------------------------------------
    let mut condition_c = Vec::new();
    for atom in &measure.atoms {
        let inside = domain.contains(atom.point);
        condition_c.push(check(
            "atom strictly inside strip",
            inside && atom.weight > 0.0,
            format!(
                "atom (p = {}, q = {}, w = {})",
                atom.point.p, atom.point.q, atom.weight
            ),
        ));
    }
    match cfg.moment_condition {
        MomentCondition::Standard => {
            for &a in &cfg.moment_exponents {
                let est = measure.moment_integral(domain, a);
                match est.tail_bound {
                    Some(tail) => {
                        condition_c.push(check(
                            "exponential moment finite",
                            true,
                            format!(
                                "a = {a}: truncated = {:.6e}, tail bound = {:.3e}",
                                est.truncated, tail
                            ),
                        ));
                        if tail > 1e-12 * est.truncated.max(1e-300) {
                            warnings.push(format!(
                                "p range truncation tail {tail:.3e} exceeds 1e-12 of the moment \
                                 integral {:.3e} for a = {a}; widen p_range",
                                est.truncated
                            ));
                        }
                    }
                    None => {
                        condition_c.push(check(
                            "exponential moment finite",
                            false,
                            format!("a = {a}: density tail diverges"),
                        ));
                    }
                }
            }
        }
        MomentCondition::Weak { alpha } => {
            let est = measure.weak_moment_integral(domain, alpha);
            match est.tail_bound {
                Some(tail) => condition_c.push(check(
                    "weak moment finite",
                    true,
                    format!(
                        "alpha = {alpha}: truncated = {:.6e}, tail bound = {:.3e}",
                        est.truncated, tail
                    ),
                )),
                None => condition_c.push(check(
                    "weak moment finite",
                    false,
                    format!("alpha = {alpha}: integral diverges"),
                )),
            }
        }
    }

    // Density normalization tag versus a declared g(y).
    if let (Some(g), false) = (declared_g, measure.density.is_none()) {
        let mut worst = 0.0_f64;
        let mut worst_y = 0.0;
        for i in 0..17 {
            let y = s_lo + (s_hi - s_lo) * i as f64 / 16.0;
            if let Ok(pt) = tangency_point(profile, y) {
                let derived = measure.density.value(pt.p, pt.q);
                let declared = g.value(y);
                let mismatch = (derived - declared).abs() / declared.abs().max(1e-300);
                if mismatch > worst {
                    worst = mismatch;
                    worst_y = y;
                }
            }
        }
        if worst > 1e-6 {
            warnings.push(format!(
                "declared g(y) differs from the density at the tangency point by a relative \
                 {worst:.3e} at y = {worst_y:.3}; the asymptotic train uses the declared g"
            ));
        }
    }

    let all = |cs: &[Check]| cs.iter().all(|c| c.status == CheckStatus::Pass);
    let passed = all(&condition_a) && all(&condition_b) && all(&condition_c);
    ConditionsReport {
        condition_a,
        condition_b,
        condition_c,
        warnings,
        passed,
    }
}

fn clip_to_support(profile: &AmplitudeProfile, range: (f64, f64)) -> (f64, f64) {
    match profile.support() {
        Some((lo, hi)) => (range.0.max(lo), range.1.min(hi)),
        None => range,
    }
}

fn phase_bound_check(
    domain: &SpectralDomain,
    cfg: &ValidationConfig,
    s_range: (f64, f64),
) -> (bool, String) {
    let np = cfg.grid_p.max(2);
    let nq = cfg.grid_q.max(2);
    let ns = 50;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = String::new();
    for i in 0..np {
        let p = domain.p_range.0
            + (domain.p_range.1 - domain.p_range.0) * i as f64 / (np - 1) as f64;
        let h = match domain.roof_height(p) {
            Ok(h) => h,
            Err(e) => return (false, format!("roof failed at p = {p:.4}: {e}")),
        };
        for j in 0..nq {
            let q = domain.epsilon + (h - domain.epsilon) * j as f64 / (nq - 1) as f64;
            for k in 0..ns {
                let s = s_range.0 + (s_range.1 - s_range.0) * k as f64 / (ns - 1) as f64;
                let excess = phase(p, q, s) - domain.profile.value(s);
                if excess > worst {
                    worst = excess;
                    witness = format!("p = {p:.4}, q = {q:.4}, s = {s:.4}");
                }
            }
        }
    }
    (
        worst <= cfg.phase_tol,
        format!("max excess {worst:.3e} at {witness}"),
    )
}

// ---------------------------------------------------------------------------
// Natural cubic spline for tabulated profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Profile(
                "tabulated profile needs at least 4 points".into(),
            ));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if xs.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(Error::Profile("tabulated abscissae must be distinct".into()));
        }
        let n = xs.len();
        // Tridiagonal solve for natural boundary conditions (m[0] = m[n-1] = 0).
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            sub[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            sup[i] = h1 / 6.0;
            rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { xs, ys, m })
    }

    fn support(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, s: f64) -> usize {
        match self.xs.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.clamp(1, self.xs.len() - 1) - 1,
        }
    }

    fn value(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - s) / h;
        let b = (s - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn slope(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - s) / h;
        let b = (s - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    fn curvature(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - s) / h;
        let b = (s - self.xs[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }
}
