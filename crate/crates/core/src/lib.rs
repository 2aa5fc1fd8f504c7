//! Random actions of free groups on rooted d-ary trees: truncated tree
//! automorphisms over a transitive label group, the towers of Schreier
//! graphs they induce on tree levels, spectral and Cheeger analysis of
//! those towers, exact group orders and Hausdorff-dimension density
//! sequences, and the constructive resolution of dependent subgroup
//! generators into independent Haar-random sections.

pub mod error;
pub mod grouporder;
pub mod perm;
pub mod portrait;
pub mod resolver;
pub mod schreier;
pub mod seed;
pub mod spectral;
pub mod stats;
pub mod tree;
pub mod union_find;
pub mod words;

pub use error::{Error, Result};
pub use perm::{GroupKind, Perm, PermGroupSpec};
pub use portrait::{Portrait, Ultrametric};
pub use schreier::{ComponentPartition, DirEdge, GeomEdge, Immersion, LevelGraph};
pub use tree::{TreeShape, VertexId};
pub use words::FreeWord;
