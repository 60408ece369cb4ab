use thiserror::Error;

use crate::geometry::GeodesicState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside chart domain: {0}")]
    Domain(String),

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    /// The geodesic left the chart; `partial` holds every accepted state.
    #[error("geodesic left the chart at arclength {reached}")]
    Truncated {
        reached: f64,
        partial: Vec<GeodesicState>,
    },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("comparison breakdown: {0}")]
    ComparisonBreakdown(String),

    #[error("degenerate tube: {0}")]
    DegenerateTube(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point outside the tube of radius {radius} (signed depth {depth})")]
    OutOfTube { depth: f64, radius: f64 },

    #[error("ambiguous foot point: candidates at theta = {first} and theta = {second}")]
    Ambiguous { first: f64, second: f64 },

    #[error("focal point reached at s = {0}")]
    FocalPoint(f64),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("regularity violation: {0}")]
    Regularity(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
