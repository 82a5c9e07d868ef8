//! The JE-I field v(x, y, t) = 2 d/dx K(x, x, y, t) from the Marchenko
//! solver, the closed-form one-soliton, finite-difference PDE residuals for
//! the Johnson and KP equations, and the coordinate maps between them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{KernelContext, QuadConfig};
use crate::marchenko::{self, SolveConfig};
use crate::measure::{Atom, Measure};
use crate::spectral::SpectralDomain;
use crate::stencil;

/// Which evaluation route produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Marchenko,
    OneSoliton,
    AsymptoticTrain,
    Logdet,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Marchenko => "marchenko",
            Source::OneSoliton => "one_soliton",
            Source::AsymptoticTrain => "asymptotic_train",
            Source::Logdet => "logdet",
        }
    }
}

/// One field evaluation with its diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub v: f64,
    pub source: Source,
    /// |Im| of the quantity that should be real on this route.
    pub reality_residual: f64,
    pub cond_estimate: f64,
    pub quad_error: f64,
}

/// A real scalar field sampled over (x, y, t); implementors must be safe to
/// sample concurrently.
pub trait Field: Sync {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample>;

    fn value(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.sample(x, y, t)?.v)
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        (**self).sample(x, y, t)
    }
}

// ---------------------------------------------------------------------------
// Marchenko route
// ---------------------------------------------------------------------------

/// Field backed by the full Marchenko pipeline. Kernel panel decompositions
/// are built once per (y, t) and shared across samples; the solver
/// discretization follows `solve_cfg` (freeze `truncation`/`core_length`
/// there when finite-difference stencils will be applied to the samples).
pub struct MarchenkoField {
    pub measure: Measure,
    pub domain: SpectralDomain,
    pub quad: QuadConfig,
    pub solve_cfg: SolveConfig,
    contexts: Mutex<HashMap<(u64, u64), Arc<KernelContext>>>,
}

impl MarchenkoField {
    pub fn new(measure: Measure, domain: SpectralDomain) -> Self {
        Self {
            measure,
            domain,
            quad: QuadConfig::default(),
            solve_cfg: SolveConfig::default(),
            contexts: Mutex::new(HashMap::new()),
        }
    }

    /// Cheaper profile for PDE-residual stencils: the differences only need
    /// the discretization error to vary smoothly, not to be tiny, so a
    /// lighter quadrature, fewer nodes and a plain central d/dx suffice.
    pub fn for_residuals(measure: Measure, domain: SpectralDomain) -> Self {
        let mut f = Self::new(measure, domain);
        f.quad.rel_tol = 1e-7;
        f.solve_cfg.n_nodes = 64;
        f.solve_cfg.richardson = false;
        f.solve_cfg.with_diagnostics = false;
        f
    }

    pub fn context(&self, y: f64, t: f64) -> Result<Arc<KernelContext>> {
        let key = (y.to_bits(), t.to_bits());
        if let Some(ctx) = self.contexts.lock().unwrap().get(&key) {
            return Ok(ctx.clone());
        }
        let ctx = Arc::new(KernelContext::new(
            &self.measure,
            &self.domain,
            y,
            t,
            self.quad,
        )?);
        let mut guard = self.contexts.lock().unwrap();
        Ok(guard.entry(key).or_insert(ctx).clone())
    }

    /// Install an externally built (e.g. cache-restored) kernel context.
    pub fn install_context(&self, ctx: Arc<KernelContext>) {
        let key = (ctx.y.to_bits(), ctx.t.to_bits());
        self.contexts.lock().unwrap().insert(key, ctx);
    }

    pub fn solve_at(&self, x: f64, y: f64, t: f64) -> Result<marchenko::MarchenkoSolution> {
        let ctx = self.context(y, t)?;
        marchenko::solve(&ctx, x, &self.solve_cfg)
    }
}

impl Field for MarchenkoField {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        let sol = self.solve_at(x, y, t)?;
        Ok(FieldSample {
            x,
            y,
            t,
            v: 2.0 * sol.k_diag_dx.re,
            source: Source::Marchenko,
            reality_residual: sol.k_diag_dx.im.abs().max(sol.k_diag.im.abs()),
            cond_estimate: sol.cond_estimate,
            quad_error: sol.quad_error,
        })
    }
}

// ---------------------------------------------------------------------------
// One-soliton route
// ---------------------------------------------------------------------------

/// Parameters of the closed-form one-soliton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonAtomParams {
    pub p: f64,
    pub q: f64,
    pub c: f64,
}

impl SolitonAtomParams {
    /// The closed form below travels with velocity q^2 - 3p^2 - py/2 -
    /// y^2/48, which is the field the kernel pipeline produces for an atom
    /// at momentum -p; mirror the sign so both routes describe one field.
    pub fn from_kernel_atom(atom: &Atom) -> Self {
        Self {
            p: -atom.point.p,
            q: atom.point.q,
            c: atom.weight,
        }
    }
}

/// v = 2 q^2 / cosh^2[ q (x - (q^2 - 3p^2 - y^2/48 - p y/2) t
///                        - ln(c / 2q) / (2q)) ].
pub fn one_soliton(params: &SolitonAtomParams, x: f64, y: f64, t: f64) -> f64 {
    let SolitonAtomParams { p, q, c } = *params;
    let velocity = q * q - 3.0 * p * p - y * y / 48.0 - p * y / 2.0;
    let arg = q * (x - velocity * t - (c / (2.0 * q)).ln() / (2.0 * q));
    let sech = 1.0 / arg.cosh();
    2.0 * q * q * sech * sech
}

/// One-soliton as a `Field`.
pub struct OneSolitonField(pub SolitonAtomParams);

impl Field for OneSolitonField {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        Ok(FieldSample {
            x,
            y,
            t,
            v: one_soliton(&self.0, x, y, t),
            source: Source::OneSoliton,
            reality_residual: 0.0,
            cond_estimate: 0.0,
            quad_error: 0.0,
        })
    }
}

// ---------------------------------------------------------------------------
// PDE residuals
// ---------------------------------------------------------------------------

/// Finite-difference steps for the PDE residuals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualSteps {
    pub h_x: f64,
    pub h_y: f64,
    pub h_t: f64,
}

impl Default for ResidualSteps {
    fn default() -> Self {
        Self {
            h_x: 1e-2,
            h_y: 1e-2,
            h_t: 1e-3,
        }
    }
}

enum PdeForm {
    /// (v_t + v_xxx/4 + 3 v v_x / 2 + v/(2t))_x = 12/t^2 v_yy
    Johnson,
    /// (u_t + u_xxx/4 + 3 u u_x / 2)_x = 3/4 u_yy
    Kp,
}

/// Residual of the Johnson equation for the sampled field, with
/// fourth-order centered stencils throughout.
pub fn je_residual<F: Field + ?Sized>(
    field: &F,
    x: f64,
    y: f64,
    t: f64,
    steps: ResidualSteps,
) -> Result<f64> {
    pde_residual(field, x, y, t, steps, PdeForm::Johnson)
}

/// Residual of the KP equation (coordinates read as (xi, eta, tau)).
pub fn kp_residual<F: Field + ?Sized>(
    field: &F,
    xi: f64,
    eta: f64,
    tau: f64,
    steps: ResidualSteps,
) -> Result<f64> {
    pde_residual(field, xi, eta, tau, steps, PdeForm::Kp)
}

fn pde_residual<F: Field + ?Sized>(
    field: &F,
    x: f64,
    y: f64,
    t: f64,
    steps: ResidualSteps,
    form: PdeForm,
) -> Result<f64> {
    // Memoized stencil samples keyed by integer offsets.
    let mut memo: HashMap<(i32, i32, i32), f64> = HashMap::new();
    let v = |i: i32, j: i32, k: i32, memo: &mut HashMap<(i32, i32, i32), f64>| -> Result<f64> {
        if let Some(&val) = memo.get(&(i, j, k)) {
            return Ok(val);
        }
        let val = field.value(
            x + i as f64 * steps.h_x,
            y + j as f64 * steps.h_y,
            t + k as f64 * steps.h_t,
        )?;
        memo.insert((i, j, k), val);
        Ok(val)
    };

    // W(x') = v_t + v_xxx/4 + 3 v v_x / 2 [+ v/(2t)].
    let w_at = |i: i32, memo: &mut HashMap<(i32, i32, i32), f64>| -> Result<f64> {
        let mut v_t = 0.0;
        for (off, wgt) in stencil::D1_OFFSETS.iter().zip(stencil::D1_WEIGHTS) {
            v_t += wgt * v(i, 0, *off, memo)?;
        }
        v_t /= steps.h_t;
        let vm3 = v(i - 3, 0, 0, memo)?;
        let vm2 = v(i - 2, 0, 0, memo)?;
        let vm1 = v(i - 1, 0, 0, memo)?;
        let v0 = v(i, 0, 0, memo)?;
        let vp1 = v(i + 1, 0, 0, memo)?;
        let vp2 = v(i + 2, 0, 0, memo)?;
        let vp3 = v(i + 3, 0, 0, memo)?;
        let h = steps.h_x;
        let v_xxx =
            (-vp3 + 8.0 * vp2 - 13.0 * vp1 + 13.0 * vm1 - 8.0 * vm2 + vm3) / (8.0 * h * h * h);
        let v_x = (-vp2 + 8.0 * vp1 - 8.0 * vm1 + vm2) / (12.0 * h);
        let mut w = v_t + 0.25 * v_xxx + 1.5 * v0 * v_x;
        if matches!(form, PdeForm::Johnson) {
            w += v0 / (2.0 * t);
        }
        Ok(w)
    };

    let w_m2 = w_at(-2, &mut memo)?;
    let w_m1 = w_at(-1, &mut memo)?;
    let w_p1 = w_at(1, &mut memo)?;
    let w_p2 = w_at(2, &mut memo)?;
    let lhs = (w_m2 - 8.0 * w_m1 + 8.0 * w_p1 - w_p2) / (12.0 * steps.h_x);

    let hy = steps.h_y;
    let v_yy = (-v(0, 2, 0, &mut memo)? + 16.0 * v(0, 1, 0, &mut memo)?
        - 30.0 * v(0, 0, 0, &mut memo)?
        + 16.0 * v(0, -1, 0, &mut memo)?
        - v(0, -2, 0, &mut memo)?)
        / (12.0 * hy * hy);

    let rhs = match form {
        PdeForm::Johnson => 12.0 / (t * t) * v_yy,
        PdeForm::Kp => 0.75 * v_yy,
    };
    Ok(lhs - rhs)
}

// ---------------------------------------------------------------------------
// KP <-> JE coordinate maps (alpha^2 = -1)
// ---------------------------------------------------------------------------

/// u(xi, eta, tau) = v(xi - eta^2 / (3 tau), 4 eta / tau, tau).
pub struct KpFromJe<F>(pub F);

impl<F: Field> Field for KpFromJe<F> {
    fn sample(&self, xi: f64, eta: f64, tau: f64) -> Result<FieldSample> {
        let mut s = self
            .0
            .sample(xi - eta * eta / (3.0 * tau), 4.0 * eta / tau, tau)?;
        s.x = xi;
        s.y = eta;
        s.t = tau;
        Ok(s)
    }
}

/// v(x, y, t) = u(x + y^2 t / 48, y t / 4, t).
pub struct JeFromKp<F>(pub F);

impl<F: Field> Field for JeFromKp<F> {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        let mut s = self.0.sample(x + y * y * t / 48.0, y * t / 4.0, t)?;
        s.x = x;
        s.y = y;
        s.t = t;
        Ok(s)
    }
}

/// The zero field; handy for trivial cases.
pub struct ZeroField;

impl Field for ZeroField {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        Ok(FieldSample {
            x,
            y,
            t,
            v: 0.0,
            source: Source::Marchenko,
            reality_residual: 0.0,
            cond_estimate: 0.0,
            quad_error: 0.0,
        })
    }
}

/// A field given by a plain closure (used by comparison harnesses).
pub struct FnField<G: Fn(f64, f64, f64) -> f64 + Sync>(pub G, pub Source);

impl<G: Fn(f64, f64, f64) -> f64 + Sync> Field for FnField<G> {
    fn sample(&self, x: f64, y: f64, t: f64) -> Result<FieldSample> {
        Ok(FieldSample {
            x,
            y,
            t,
            v: (self.0)(x, y, t),
            source: self.1,
            reality_residual: 0.0,
            cond_estimate: 0.0,
            quad_error: 0.0,
        })
    }
}
