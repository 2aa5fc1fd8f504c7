use crate::tree::VertexId;

/// Errors shared across the crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("beyond truncation depth: level {level} exceeds depth {max_depth}")]
    BeyondTruncationDepth { level: usize, max_depth: usize },

    #[error("not a descendant: {ancestor} is not a prefix of {vertex}")]
    NotADescendant { ancestor: VertexId, vertex: VertexId },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank mismatch: word uses {word_rank} generators, {gens} supplied")]
    RankMismatch { word_rank: usize, gens: usize },

    #[error("empty word")]
    EmptyWord,

    #[error("permutation degree {0} unsupported (must be 2..=8)")]
    DegreeUnsupported(usize),

    #[error("generators do not act transitively on {{0..{degree}}}")]
    NotTransitive { degree: usize },

    #[error("permutation is not a bijection of [0, {degree})")]
    NonBijective { degree: usize },

    #[error("level mismatch: upper level {upper} must be lower level {lower} + 1")]
    LevelMismatch { upper: usize, lower: usize },

    #[error("not a 2-lift: {0}")]
    NotATwoLift(String),

    #[error("degree budget exceeded: {degree} points > budget {budget}")]
    DegreeBudget { degree: usize, budget: usize },

    #[error("eigensolver budget exceeded: {size} vertices > {budget}; use bound-only mode")]
    SpectralBudget { size: usize, budget: usize },

    #[error("cut enumeration budget exceeded: {size} vertices > {budget}")]
    CheegerBudget { size: usize, budget: usize },

    #[error("component too small for a cut: {size} vertices")]
    ComponentTooSmall { size: usize },

    #[error("word enumeration budget exceeded: {words} words > {budget}")]
    WordBudget { words: usize, budget: usize },

    #[error("subgroup is cyclic; resolution requires a non-cyclic subgroup")]
    CyclicSubgroup,

    #[error("depth budget {max_depth} exhausted: {diagnostics}")]
    MaxDepthExhausted { max_depth: usize, diagnostics: String },

    #[error("insufficient samples per cell: expected {expected:.2} < {minimum}")]
    InsufficientSamples { expected: f64, minimum: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
