use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PinchError {
    #[error("unsupported dimension: n = {0} (pinching constants need n >= 5)")]
    UnsupportedDimension(usize),
    #[error("invalid slack: {0}")]
    InvalidSlack(String),
    #[error("degenerate mean curvature: |H| = {h_norm:e} against |A| = {a_norm:e}")]
    DegenerateMeanCurvature { h_norm: f64, a_norm: f64 },
    #[error("invalid jet: {0}")]
    InvalidJet(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cone too thin: c = {c} must exceed 1/n = {inv_n}")]
    ConeTooThin { c: f64, inv_n: f64 },
    #[error("outside pinching cone: f = {f:e}")]
    OutsidePinchingCone { f: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("immersion degenerate at node {node}: smallest singular value {sigma:e}")]
    ImmersionDegenerate { node: usize, sigma: f64 },
    #[error("normal frame incoherent at node {node}")]
    FrameIncoherent { node: usize },
    #[error("timestep too large: dt = {dt:e} exceeds stability bound {bound:e}")]
    TimestepTooLarge { dt: f64, bound: f64 },
    #[error("flow degenerate at node {node}")]
    FlowDegenerate { node: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for PinchError {
    fn from(e: std::io::Error) -> Self {
        PinchError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PinchError>;
