use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("switch condition violated at switch {switch}")]
    SwitchViolation { switch: usize },
    #[error("form is degenerate")]
    DegenerateForm,
    #[error("matrix is not primitive")]
    NotPrimitive,
    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is not symplectic (residual {residual:e})")]
    NotSymplectic { residual: f64 },
    #[error("spectrum is not closed under inversion (residual {residual:e})")]
    NotReciprocal { residual: f64 },
    #[error("not pseudo-Anosov: spectral radius {radius}")]
    NotPseudoAnosov { radius: f64 },
    #[error("twist on curve {curve} has exponent {exponent} of the wrong sign")]
    SignViolation { curve: usize, exponent: i64 },
    #[error("matrix is not diagonalizable (eigenvector condition {condition:e})")]
    NotDiagonalizable { condition: f64 },
    #[error("negative real eigenvalue {value}")]
    NegativeRealEigenvalue { value: f64 },
    #[error("eigenvalue {re}+{im}i lies on the branch cut")]
    SpectrumOnCut { re: f64, im: f64 },
    #[error("bad block parameters: {0}")]
    BadParams(String),
    #[error("decomposition does not match the action (residual {residual:e})")]
    DecompositionMismatch { residual: f64 },
    #[error("trajectory left the cone at t = {t} (witness {witness})")]
    LeftCone { t: f64, witness: f64 },
    #[error("length vanishes")]
    ZeroLength,
    #[error("element is not hyperbolic (|trace| = {trace})")]
    NotHyperbolic { trace: f64 },
    #[error("geodesics share an endpoint")]
    SharedEndpoint,
    #[error("geodesics are not transverse")]
    NotTransverse,
    #[error("no real solution for the requested traces")]
    NoRealSolution,
    #[error("gluing failed the relator check (residual {residual:e})")]
    DegenerateGluing { residual: f64 },
    #[error("crossing enumeration not saturated at depth {depth}")]
    DepthTooSmall { depth: usize },
    #[error("lifts of the twisting curve cross each other")]
    NotSimple,
    #[error("bad configuration: {0}")]
    BadConfiguration(String),
    #[error("unknown generator '{0}'")]
    UnknownGenerator(char),
}
