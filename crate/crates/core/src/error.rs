use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: need at least {need} nodes per axis, got {got:?}")]
    GridTooSmall { need: usize, got: [usize; 3] },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("material law invalid: {check} failed with defect {defect:.3e} at sample {sample:?}")]
    LawInvalid {
        check: &'static str,
        defect: f64,
        sample: Vec<f64>,
    },

    #[error("state left the admissible set U at t={t:.6}, node {node:?} (distance {dist:.3e})")]
    DomainExit { t: f64, node: [usize; 3], dist: f64 },

    #[error("boundary trace left the domain of the conductivity at t={t:.6}")]
    ZetaDomainViolation { t: f64 },

    #[error("coefficient matrix A0 is singular at node {node:?}")]
    SingularA0 { node: [usize; 3] },

    #[error("chi(u0) is singular at node {node:?}")]
    SingularChi { node: [usize; 3] },

    #[error("jet order {requested} exceeds available derivative data (max {available})")]
    OrderExceedsDerivativeData { requested: usize, available: usize },

    #[error("CFL violation: dt={dt:.3e} exceeds limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("coefficient invariant failed: {0}")]
    CoefficientInvariant(String),

    #[error("non-finite value detected at step {step} (t={t:.6})")]
    NanDetected { step: usize, t: f64 },

    #[error("compatibility check failed: order {order} residual {residual:.3e} > tol {tol:.3e}")]
    CompatFailure { order: usize, residual: f64, tol: f64 },

    #[error("no contraction: ratio q_n >= 1 for {count} consecutive iterations (last q={q:.3})")]
    NoContraction { count: usize, q: f64 },

    #[error("iterate left the fixed-point ball: {0}")]
    BallExit(String),

    #[error("degenerate chart: |beta| = {beta:.3e} < tau = {tau:.3e} at y={y:?}")]
    DegenerateChart { beta: f64, tau: f64, y: [f64; 3] },

    #[error("positivity lost after transform: min eigenvalue {min_eig:.3e}")]
    PositivityLost { min_eig: f64 },

    #[error("localized boundary identity violated: max residual {residual:.3e} > {tol:.3e}")]
    IdentityViolation { residual: f64, tol: f64 },

    #[error("input field is not smooth enough: spectral tail fraction {fraction:.3e} > {tol:.3e}")]
    NonSmoothInput { fraction: f64, tol: f64 },

    #[error("norm order {k} too large for grid {n:?}")]
    KTooLargeForGrid { k: usize, n: [usize; 3] },

    #[error("config invalid: {0}")]
    ConfigInvalid(String),

    #[error("perturbed run failed: {0}")]
    PerturbedRunFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
