use thiserror::Error;

/// Errors surfaced by the extension pipeline and its metric primitives.
#[derive(Debug, Error)]
pub enum QsxError {
    #[error("invalid site map: {0}")]
    InvalidSiteMap(String),

    #[error("invalid interval set: {0}")]
    InvalidIntervalSet(String),

    #[error("invalid modulus: {0}")]
    InvalidModulus(String),

    #[error("diameter zero")]
    DiameterZero,

    #[error("relative connectedness undefined for singletons")]
    SingletonSet,

    #[error("no admissible triples")]
    NoAdmissibleTriples,

    #[error("negative argument: {0}")]
    NegativeArgument(f64),

    #[error("degenerate samples for modulus fit")]
    DegenerateFitSamples,

    #[error("degenerate bridge")]
    DegenerateBridge,

    #[error("bridge dimension {dim} not fresh (ambient dimension {ambient})")]
    BridgeDimensionNotFresh { dim: usize, ambient: usize },

    #[error("bridge endpoints must have zero coordinate in dimension {0}")]
    NonzeroBridgeCoordinate(usize),

    #[error("parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),

    #[error("periodize requires normalized map")]
    NotNormalized,

    #[error("1 not in E after normalization")]
    MissingUnitSite,

    #[error("fattening ratio violated for piece {piece}: {kind} ratio {ratio} outside [{lo}, {hi}]")]
    FatteningRatioViolation {
        piece: usize,
        kind: &'static str,
        ratio: f64,
        lo: f64,
        hi: f64,
    },

    #[error("uniform perfectness violated near gap ({a}, {b})")]
    EmptySequenceBand { a: f64, b: f64 },

    #[error("modulus inconsistent with image data in gap ({a}, {b}): {detail}")]
    ModulusInconsistent { a: f64, b: f64, detail: String },

    #[error("bridges {i} and {j} intersect (distance {dist:e})")]
    IntersectingBridges { i: usize, j: usize, dist: f64 },

    #[error("dimension palette exhausted for gap {0} (internal invariant violation)")]
    PaletteExhausted(usize),

    #[error("x = {0} outside materialized window")]
    OutsideWindow(f64),

    #[error("pipeline stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<QsxError>,
    },

    #[error("point budget overflow: estimated {estimated} sites (limit {limit}); reduce depths")]
    PointBudgetOverflow { estimated: u64, limit: u64 },

    #[error("john arc left the domain at {0:?} (geometry bug)")]
    ArcOutsideDomain(Vec<f64>),
}

pub type Result<T> = std::result::Result<T, QsxError>;

impl QsxError {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> QsxError {
        QsxError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
