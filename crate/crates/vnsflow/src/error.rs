use thiserror::Error;

/// Errors raised by the solvers and the harness.
#[derive(Debug, Error)]
pub enum VnsError {
    #[error("vorticity mean is not zero: |mean| = {mean:.3e} exceeds tolerance {tol:.1e}")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("kernel is not normalized: integral = {integral:.12} (expected 1 within {tol:.1e})")]
    KernelNotNormalized { integral: f64, tol: f64 },

    #[error("mollifier hypothesis violated: {0}")]
    MollifierHypothesis(String),

    #[error("scaling exponent beta = {beta} violates the bound beta <= 1/4 (pass the research override to allow it)")]
    BetaOutOfRange { beta: f64 },

    #[error("CFL violation: measured CFL = {cfl:.4} exceeds limit {limit}")]
    CflViolation { cfl: f64, limit: f64 },

    #[error("NaN detected in {context} at step {step}")]
    NanDetected { context: String, step: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("particle {index} has velocity {v:?} outside the kinetic grid (vmax = {vmax})")]
    VelocityOutsideGrid { index: usize, v: [f64; 2], vmax: f64 },

    #[error("mollifier under-resolved: support {support:.4} smaller than one grid cell {cell:.4}")]
    UnderResolvedKernel { support: f64, cell: f64 },

    #[error("initial density is not product-form: {0}")]
    NonProductDensity(String),

    #[error("mass {mass:.3e} in the velocity boundary layer exceeds {limit:.1e}; increase vmax")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("transport instance too large: {points} support points exceed limit {limit}; use the estimator")]
    TransportTooLarge { points: usize, limit: usize },

    #[error("rate fit requires positive errors; got {0}")]
    NonPositiveError(f64),

    #[error("cut-off activated during the K_u estimation run (chi = {chi:.4} < 1) after {retries} retries")]
    KuEstimationFailed { chi: f64, retries: usize },

    #[error("{subsystem} aborted at step {step}: {source}")]
    RunAbort {
        subsystem: &'static str,
        step: usize,
        #[source]
        source: Box<VnsError>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VnsError>;
