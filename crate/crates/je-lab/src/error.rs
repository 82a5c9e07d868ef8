use thiserror::Error;

/// Errors produced by the spectral model, kernel evaluation, solver and runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid amplitude profile: {0}")]
    Profile(String),

    #[error("tangency radicand C(y) + 3 C'(y)^2 = {0} is non-positive at y = {1}")]
    TangencyRadicand(f64, f64),

    #[error("roof locus is not single-valued over the requested p range; fold near p = {0}")]
    RoofFold(f64),

    #[error("p = {0} is outside the invertible locus range [{1}, {2}]")]
    OutsideLocus(f64, f64, f64),

    #[error("time parameter must be positive, got t = {0}")]
    NonPositiveTime(f64),

    #[error("quadrature did not converge within the panel budget; worst panel p in [{p_lo}, {p_hi}], q-fraction in [{t_lo}, {t_hi}], error {err:.3e}")]
    QuadratureBudget {
        p_lo: f64,
        p_hi: f64,
        t_lo: f64,
        t_hi: f64,
        err: f64,
    },

    #[error("kernel exponent {0:.1} exceeds the floating-point range; evaluation point lies too far behind the front")]
    KernelOverflow(f64),

    #[error("truncation ladder exhausted at L = {l} with ratio {ratio:.3e} (target {target:.3e})")]
    TruncationLadder { l: f64, ratio: f64, target: f64 },

    #[error("linear system is numerically singular (n = {0})")]
    SingularSystem(usize),

    #[error("diagonal value did not stabilize under node doubling: last change {0:.3e} at n = {1}")]
    NodeDoubling(f64, usize),

    #[error("non-positive base {base:.3e} under fractional power in {factor}")]
    FractionalPower { base: f64, factor: &'static str },

    #[error("negative radicand in {factor}: {value:.3e}")]
    GeometryRadicand { factor: &'static str, value: f64 },

    #[error("det(I + A) = {0:.3e} is not positive; log-determinant undefined")]
    NonPositiveDeterminant(f64),

    #[error("scenario is invalid: {0}")]
    Scenario(String),

    #[error("scenario failed validation; see the conditions report")]
    Validation(Box<crate::spectral::ConditionsReport>),

    #[error("cache entry is corrupt: {0}")]
    CacheCorrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    Toml(String),

    #[error("{0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
