use thiserror::Error;

/// Errors produced by the disc laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pencil: {0}")]
    InvalidPencil(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conormal elimination degenerate at zeta = {zeta} (|det M_w| = {det_abs:.3e})")]
    ConormalEliminationDegenerate { zeta: num_complex::Complex64, det_abs: f64 },

    #[error("winding unresolved: phase increment {max_increment:.3} rad at grid size {grid} exceeds pi/2")]
    WindingUnresolved { max_increment: f64, grid: usize },

    #[error("kernel dimension ambiguous: best singular-value gap ratio {ratio:.3e} < 1e3")]
    KernelDimensionAmbiguous { ratio: f64 },

    #[error("boundary matrix carries no structured block form; use maslov_index on the sampled matrix instead")]
    StructuredFormRequired,

    #[error("block is not of the antidiagonal/diagonal monomial type handled by the explicit factorization")]
    NonPTypeBlock,

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}{})",
            t.map(|t| format!(" at continuation step t = {t}")).unwrap_or_default())]
    NonConvergence { iterations: usize, residual: f64, t: Option<f64> },

    #[error("linearization singular (condition estimate {cond:.3e} > 1e12)")]
    LinearizationSingular { cond: f64 },

    #[error("automorphism Jacobian singular along the disc at zeta = {zeta}")]
    SingularJacobianOnDisc { zeta: num_complex::Complex64 },

    #[error("jet recovery ambiguous: restarts disagree by {spread:.3e}")]
    AmbiguousJetRecovery { spread: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
