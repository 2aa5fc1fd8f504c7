//! Indexing of the rooted d-ary tree truncated at a fixed depth.
//!
//! Vertices at level `n` carry dense integer codes in `[0, d^n)`, read as
//! base-d strings whose most significant digit is the step taken at the
//! root. Parent/child navigation is then integer arithmetic, and level
//! `n` vertices double as array indices for the level graphs.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Shape of a truncated d-ary tree: arity `d >= 2`, depth `N >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub arity: usize,
    pub max_depth: usize,
}

impl TreeShape {
    pub fn new(arity: usize, max_depth: usize) -> Result<TreeShape> {
        if arity < 2 {
            return Err(Error::InvalidInput(format!("arity {arity} must be >= 2")));
        }
        // Guard d^N against overflow up front.
        let mut size: usize = 1;
        for _ in 0..max_depth {
            size = size
                .checked_mul(arity)
                .ok_or_else(|| Error::InvalidInput(format!("d^N overflows: d={arity}, N={max_depth}")))?;
        }
        Ok(TreeShape { arity, max_depth })
    }

    /// Number of vertices at level `n`, i.e. `d^n`.
    pub fn level_size(&self, level: usize) -> usize {
        self.arity.pow(level as u32)
    }

    /// Number of internal vertices `(d^N - 1) / (d - 1)`.
    pub fn internal_count(&self) -> usize {
        (self.level_size(self.max_depth) - 1) / (self.arity - 1)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.level <= self.max_depth && v.code < self.level_size(v.level)
    }
}

/// A vertex of the tree: its level and dense code within the level.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub level: usize,
    pub code: usize,
}

impl VertexId {
    pub const ROOT: VertexId = VertexId { level: 0, code: 0 };

    pub fn new(level: usize, code: usize) -> VertexId {
        VertexId { level, code }
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    pub fn parent(&self, arity: usize) -> Option<VertexId> {
        if self.is_root() {
            None
        } else {
            Some(VertexId { level: self.level - 1, code: self.code / arity })
        }
    }

    pub fn child(&self, arity: usize, digit: usize) -> VertexId {
        debug_assert!(digit < arity);
        VertexId { level: self.level + 1, code: self.code * arity + digit }
    }

    /// The base-d digits of the code, most significant (root step) first.
    pub fn digits(&self, arity: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.level];
        let mut c = self.code;
        for slot in out.iter_mut().rev() {
            *slot = (c % arity) as u8;
            c /= arity;
        }
        out
    }

    pub fn from_digits(arity: usize, digits: &[u8]) -> VertexId {
        let mut code = 0usize;
        for &d in digits {
            debug_assert!((d as usize) < arity);
            code = code * arity + d as usize;
        }
        VertexId { level: digits.len(), code }
    }

    /// Concatenation `self . w`: the vertex reached from `self` by walking
    /// the path that leads from the root to `w`.
    pub fn concat(&self, arity: usize, w: VertexId) -> VertexId {
        VertexId {
            level: self.level + w.level,
            code: self.code * arity.pow(w.level as u32) + w.code,
        }
    }

    /// Whether `self`'s code is a prefix of `w`'s code.
    pub fn is_ancestor_of(&self, arity: usize, w: VertexId) -> bool {
        w.level >= self.level && w.code / arity.pow((w.level - self.level) as u32) == self.code
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.code)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.code)
    }
}

/// The `d` children of `v`, ordered by trailing digit.
pub fn children(v: VertexId, shape: &TreeShape) -> Result<Vec<VertexId>> {
    if v.level >= shape.max_depth {
        return Err(Error::BeyondTruncationDepth { level: v.level + 1, max_depth: shape.max_depth });
    }
    Ok((0..shape.arity).map(|digit| v.child(shape.arity, digit)).collect())
}

/// The subtree identification: strips `v`'s digits off a descendant `w`,
/// re-rooting the subtree below `v`.
pub fn tau(v: VertexId, w: VertexId, arity: usize) -> Result<VertexId> {
    if !v.is_ancestor_of(arity, w) {
        return Err(Error::NotADescendant { ancestor: v, vertex: w });
    }
    let rel_level = w.level - v.level;
    Ok(VertexId { level: rel_level, code: w.code % arity.pow(rel_level as u32) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_examples() {
        let d2 = TreeShape::new(2, 4).unwrap();
        assert_eq!(
            children(VertexId::new(1, 1), &d2).unwrap(),
            vec![VertexId::new(2, 2), VertexId::new(2, 3)]
        );
        assert_eq!(
            children(VertexId::ROOT, &d2).unwrap(),
            vec![VertexId::new(1, 0), VertexId::new(1, 1)]
        );
        let d3 = TreeShape::new(3, 3).unwrap();
        assert_eq!(
            children(VertexId::new(1, 2), &d3).unwrap(),
            vec![VertexId::new(2, 6), VertexId::new(2, 7), VertexId::new(2, 8)]
        );
    }

    #[test]
    fn children_at_max_depth_fail() {
        let shape = TreeShape::new(2, 2).unwrap();
        let leaf = VertexId::new(2, 1);
        assert!(matches!(
            children(leaf, &shape),
            Err(Error::BeyondTruncationDepth { .. })
        ));
    }

    #[test]
    fn tau_examples() {
        // d=2, v=(1,1), w=(3,0b110) -> (2,0b10)
        assert_eq!(tau(VertexId::new(1, 1), VertexId::new(3, 0b110), 2).unwrap(), VertexId::new(2, 0b10));
        // root acts as identity
        assert_eq!(tau(VertexId::ROOT, VertexId::new(3, 5), 2).unwrap(), VertexId::new(3, 5));
        // a vertex maps to the root of its own subtree
        assert_eq!(tau(VertexId::new(2, 0b01), VertexId::new(2, 0b01), 2).unwrap(), VertexId::ROOT);
    }

    #[test]
    fn tau_rejects_non_descendants() {
        assert!(matches!(
            tau(VertexId::new(1, 1), VertexId::new(2, 0b01), 2),
            Err(Error::NotADescendant { .. })
        ));
    }

    #[test]
    fn tau_concat_round_trip() {
        for arity in [2usize, 3] {
            let shape = TreeShape::new(arity, 4).unwrap();
            for v_level in 0..=shape.max_depth {
                for v_code in 0..shape.level_size(v_level) {
                    let v = VertexId::new(v_level, v_code);
                    for w_level in v_level..=shape.max_depth {
                        for w_code in 0..shape.level_size(w_level) {
                            let w = VertexId::new(w_level, w_code);
                            if !v.is_ancestor_of(arity, w) {
                                continue;
                            }
                            let t = tau(v, w, arity).unwrap();
                            assert_eq!(t.level, w.level - v.level);
                            assert_eq!(v.concat(arity, t), w);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn every_non_root_vertex_is_a_child_of_its_parent() {
        let shape = TreeShape::new(3, 3).unwrap();
        for level in 1..=shape.max_depth {
            for code in 0..shape.level_size(level) {
                let v = VertexId::new(level, code);
                let p = v.parent(shape.arity).unwrap();
                let kids = children(p, &shape).unwrap();
                assert_eq!(kids.iter().filter(|&&k| k == v).count(), 1);
            }
        }
    }

    #[test]
    fn digit_round_trip() {
        let v = VertexId::new(4, 0b1011);
        assert_eq!(v.digits(2), vec![1, 0, 1, 1]);
        assert_eq!(VertexId::from_digits(2, &v.digits(2)), v);
    }
}
