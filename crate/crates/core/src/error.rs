use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid subdomain: {0}")]
    SubBox(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("out of range: {0}")]
    Range(String),

    #[error(
        "singular weight: |grad u|^(p-2) with p = {p} < 2 and eps_w = 0 is undefined at node {node} \
         where the gradient vanishes; pass eps_w > 0"
    )]
    SingularWeight { p: f64, node: usize },

    #[error(
        "singular slab: gamma = {gamma} < 1 makes |x|^(2(gamma-1)) unbounded near x = 0; the \
         subdomain reaches |x| = {min_abs_x:.6} but must stay at least one cell ({clearance:.6}) away"
    )]
    SingularSlab {
        gamma: f64,
        min_abs_x: f64,
        clearance: f64,
    },

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("missing surface data for face {0}")]
    MissingFace(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("oracle not applicable: {0}")]
    Oracle(String),

    #[error(
        "picard iteration diverged after {iterations} iterations (last change {last_change:e})"
    )]
    PicardDiverged { iterations: usize, last_change: f64 },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
