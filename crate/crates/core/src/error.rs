use thiserror::Error;

/// Errors raised by the geometry, measure and tangency routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid word: symbol {symbol} is outside the alphabet of size {alphabet_size}")]
    InvalidWord { symbol: u32, alphabet_size: usize },

    #[error("alphabet must contain at least two symbols, got {0}")]
    InvalidAlphabet(usize),

    #[error("enumeration of {requested} words exceeds the cap of {cap}")]
    Capacity { requested: f64, cap: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point {point:?} left the working domain while composing {word}")]
    DomainEscape { word: String, point: Vec<f64> },

    #[error("singular linear map (smallest/largest singular value ratio {ratio:e})")]
    Singular { ratio: f64 },

    #[error("degenerate point cloud: moment matrix has rank {rank} < {needed}")]
    DegenerateCloud { rank: usize, needed: usize },

    #[error(
        "conjugating deformation rejected: |h'|·|(h^-1)'| = {product:.6} exceeds the admissible bound {bound:.6} \
         (|h'| = {h_norm:.6}, |(h^-1)'| = {h_inv_norm:.6})"
    )]
    ConstructionRejected {
        product: f64,
        bound: f64,
        h_norm: f64,
        h_inv_norm: f64,
    },

    #[error("radius {radius:e} is below the resolvable cylinder scale {floor:e}")]
    Resolution { radius: f64, floor: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid spread witness: {0}")]
    InvalidWitness(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
