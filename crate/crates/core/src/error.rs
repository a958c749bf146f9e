use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain has no points")]
    EmptyDomain,
    #[error("need at least two factors")]
    TooFewFactors,
    #[error("factor {factor} has {got} entries, expected {expected}")]
    FactorLength {
        factor: usize,
        got: usize,
        expected: usize,
    },
    #[error("factor {factor} out of range (domain has {count} factors)")]
    FactorOutOfRange { factor: usize, count: usize },
    #[error("point {point} out of range (domain has {count} points)")]
    PointOutOfRange { point: usize, count: usize },
    #[error("class {class} out of range for factor {factor} ({count} classes)")]
    ClassOutOfRange {
        factor: usize,
        class: usize,
        count: usize,
    },
    #[error("duplicate point id {0}")]
    DuplicatePointId(usize),
    #[error("field has {got} values, domain has {expected} points")]
    FieldLength { got: usize, expected: usize },
    #[error("factor function for factor {factor} has {got} values, expected {expected}")]
    ClassCountMismatch {
        factor: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("domain has no coordinates")]
    MissingCoordinates,
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("direction has dimension {got}, points have dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("region has no lattice points at resolution {0}")]
    NoLatticePoints(u32),
    #[error("resolution must be at least 1")]
    BadResolution,
    #[error("polygon is not convex")]
    NonConvexPolygon,
    #[error("invalid region parameters: {0}")]
    BadRegion(String),
    #[error("unknown region `{name}`; expected one of: {known}")]
    UnknownRegion { name: String, known: String },
    #[error("invalid bolt: {0}")]
    InvalidBolt(String),
    #[error("closed-bolt enumeration needs an even max_len in 2..=10, got {0}")]
    BadEnumerationLength(usize),
    #[error("slack must be positive, got {0}")]
    BadSlack(f64),
    #[error("state was not produced by strict two-factor alternation with recorded history")]
    NeedsAlternatingHistory,
    #[error("expression error at position {pos}: {msg}")]
    Expression { pos: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
