use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected exactly two node tokens")]
    MalformedEdgeLine { line: usize },

    #[error("edge list produced an empty graph")]
    EmptyGraph,

    #[error("graph has zero volume (no edges)")]
    ZeroVolume,

    #[error("nodes {i} and {j} do not form a valid pair")]
    InvalidPair { i: usize, j: usize },

    #[error("node index {index} out of range for {nodes} nodes")]
    IndexOutOfRange { index: usize, nodes: usize },

    #[error("flip ({i},{j}) delta {delta} inconsistent with current link status")]
    InconsistentFlip { i: usize, j: usize, delta: i8 },

    #[error("private-link fraction {fraction} out of (0,1)")]
    InvalidFraction { fraction: f64 },

    #[error("sampling removed every link from the graph")]
    AllLinksRemoved,

    #[error("need {needed} non-links for the negative side but the graph has only {available}")]
    NotEnoughNonLinks { needed: usize, available: usize },

    #[error("embedding dimension {k} out of range 1..={nodes}")]
    InvalidDimension { k: usize, nodes: usize },

    #[error("singular values must be non-negative (found {value})")]
    NegativeSingularValue { value: f64 },

    #[error("context matrix is rank deficient")]
    RankDeficient,

    #[error("eigensolver failed to converge (worst residual {residual:.3e})")]
    EigenNoConvergence { residual: f64 },

    #[error("{op}: graph too large ({nodes} nodes, limit {limit}); use the fast path")]
    SizeGuard {
        op: &'static str,
        nodes: usize,
        limit: usize,
    },

    #[error("matrix shapes do not match: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("stale optimizer state: graph changed since gradients were computed")]
    StaleState,

    #[error("requested {requested} eigenpairs but graph has only {nodes} nodes")]
    TooManyEigenpairs { requested: usize, nodes: usize },

    #[error("labeled pairs must contain both classes")]
    SingleClass,

    #[error("degenerate train/test split: {reason}")]
    DegenerateSplit { reason: String },

    #[error("cluster count {clusters} invalid for {nodes} nodes")]
    InvalidClusterCount { clusters: usize, nodes: usize },

    #[error("average precision undefined without positive labels")]
    NoPositiveLabels,

    #[error("betweenness budget {budget} exceeds edge count {edges}")]
    BudgetExceedsEdges { budget: usize, edges: usize },

    #[error("edge probability {p} exceeds 1")]
    InvalidEdgeProbability { p: f64 },

    #[error("invalid config key `{key}`")]
    InvalidConfigKey { key: String },

    #[error("invalid value for config key `{key}`: {value}")]
    InvalidConfigValue { key: String, value: String },

    #[error("missing required config key `{key}`")]
    MissingConfigKey { key: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
