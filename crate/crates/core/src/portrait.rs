//! Truncated tree automorphisms stored as portraits.
//!
//! A portrait of depth `N` assigns one label `sigma_v` in `H <= Sym(d)` to
//! every internal vertex `v` (level < N). All actions are from the right,
//! and the label at `v` records how `v`'s children map into the children
//! of the image vertex:
//!
//! ```text
//!     (v . a)^g = v^g . sigma_v(a)
//! ```
//!
//! With this convention the section of `g` between the subtrees below `v`
//! and below `v^g` (the local cocycle) is the literal relabeling: its label
//! at `u` is `g`'s label at the concatenation `v . u`. The cocycle equality
//! `beta(gh, v) = beta(g, v) . beta(h, v^g)` then holds label-for-label.

use rand::Rng;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::perm::{Perm, PermGroupSpec};
use crate::tree::{TreeShape, VertexId};

/// A depth-`N` truncated tree automorphism.
#[derive(Clone, PartialEq, Eq)]
pub struct Portrait {
    shape: TreeShape,
    /// `labels[k][code]`: the permutation at the level-`k` vertex `code`.
    labels: Vec<Vec<Perm>>,
}

/// Displacement and distance between two portraits under the invariant
/// ultrametric `delta(a, b) = d^(-v(a^-1 b))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ultrametric {
    /// First level carrying a non-identity label of `a^-1 b`, or `None`
    /// when the two portraits agree to the full truncation depth.
    pub displacement: Option<usize>,
    /// `d^(-displacement)`, with the identity-to-depth sentinel mapped to 0.
    pub delta: f64,
}

impl Portrait {
    pub fn identity(shape: TreeShape) -> Portrait {
        let labels = (0..shape.max_depth)
            .map(|k| vec![Perm::identity(shape.arity); shape.level_size(k)])
            .collect();
        Portrait { shape, labels }
    }

    /// Builds a portrait from per-level label tables, verifying the level
    /// sizes and membership of every label in `group`.
    pub fn from_labels(shape: TreeShape, group: &PermGroupSpec, labels: Vec<Vec<Perm>>) -> Result<Portrait> {
        if group.degree() != shape.arity {
            return Err(Error::ShapeMismatch(format!(
                "group degree {} differs from arity {}",
                group.degree(),
                shape.arity
            )));
        }
        if labels.len() != shape.max_depth {
            return Err(Error::ShapeMismatch(format!(
                "expected {} label levels, got {}",
                shape.max_depth,
                labels.len()
            )));
        }
        for (k, level) in labels.iter().enumerate() {
            if level.len() != shape.level_size(k) {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} has {} labels, expected {}",
                    level.len(),
                    shape.level_size(k)
                )));
            }
            for p in level {
                if !group.contains(p) {
                    return Err(Error::InvalidInput(format!("label {p:?} at level {k} is not in H")));
                }
            }
        }
        Ok(Portrait { shape, labels })
    }

    /// Haar sampling: every internal label drawn independently and
    /// uniformly from `H`, which is exactly the wreath-product measure.
    pub fn sample_haar<R: Rng + ?Sized>(group: &PermGroupSpec, shape: TreeShape, rng: &mut R) -> Portrait {
        debug_assert_eq!(group.degree(), shape.arity);
        let labels = (0..shape.max_depth)
            .map(|k| (0..shape.level_size(k)).map(|_| group.sample_uniform(rng)).collect())
            .collect();
        Portrait { shape, labels }
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn label(&self, v: VertexId) -> &Perm {
        &self.labels[v.level][v.code]
    }

    pub fn is_identity(&self) -> bool {
        self.labels.iter().all(|level| level.iter().all(Perm::is_identity))
    }

    /// Whether every label lies in `group`.
    pub fn in_group(&self, group: &PermGroupSpec) -> bool {
        self.labels.iter().all(|level| level.iter().all(|p| group.contains(p)))
    }

    /// Image of the vertex `x` under the portrait.
    pub fn apply(&self, x: VertexId) -> Result<VertexId> {
        if x.level > self.shape.max_depth {
            return Err(Error::BeyondTruncationDepth { level: x.level, max_depth: self.shape.max_depth });
        }
        let d = self.shape.arity;
        let mut orig = 0usize; // code of the original prefix
        let mut img = 0usize; // code of the image prefix
        let digits = x.digits(d);
        for (k, &digit) in digits.iter().enumerate() {
            let sigma = &self.labels[k][orig];
            img = img * d + sigma.apply(digit as usize);
            orig = orig * d + digit as usize;
        }
        Ok(VertexId::new(x.level, img))
    }

    /// Composition in right-action order: `apply(g.compose(h), x) =
    /// apply(h, apply(g, x))`.
    pub fn compose(&self, h: &Portrait) -> Result<Portrait> {
        if self.shape != h.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, h.shape)));
        }
        let d = self.shape.arity;
        let mut out = Portrait::identity(self.shape);
        // Walk (original vertex, its image under self) pairs level by level.
        let mut pairs: Vec<(usize, usize)> = vec![(0, 0)];
        for k in 0..self.shape.max_depth {
            let mut next = Vec::with_capacity(pairs.len() * d);
            for &(orig, img) in &pairs {
                let sg = &self.labels[k][orig];
                out.labels[k][orig] = sg.then(&h.labels[k][img]);
                if k + 1 < self.shape.max_depth {
                    for a in 0..d {
                        next.push((orig * d + a, img * d + sg.apply(a)));
                    }
                }
            }
            pairs = next;
        }
        Ok(out)
    }

    /// Inverse via relabeling: the label of `g^-1` at `v^g` is the inverse
    /// of `g`'s label at `v`.
    pub fn inverse(&self) -> Portrait {
        let d = self.shape.arity;
        let mut out = Portrait::identity(self.shape);
        let mut pairs: Vec<(usize, usize)> = vec![(0, 0)];
        for k in 0..self.shape.max_depth {
            let mut next = Vec::with_capacity(pairs.len() * d);
            for &(orig, img) in &pairs {
                let sg = &self.labels[k][orig];
                out.labels[k][img] = sg.inverse();
                if k + 1 < self.shape.max_depth {
                    for a in 0..d {
                        next.push((orig * d + a, img * d + sg.apply(a)));
                    }
                }
            }
            pairs = next;
        }
        out
    }

    /// Truncation to depth `n`; a surjective homomorphism onto depth-`n`
    /// portraits.
    pub fn psi(&self, n: usize) -> Result<Portrait> {
        if n > self.shape.max_depth {
            return Err(Error::BeyondTruncationDepth { level: n, max_depth: self.shape.max_depth });
        }
        let shape = TreeShape { arity: self.shape.arity, max_depth: n };
        Ok(Portrait { shape, labels: self.labels[..n].to_vec() })
    }

    /// The local cocycle `beta(g, v)`: the depth `N - level(v)` portrait
    /// whose label at `u` is `g`'s label at `v . u`.
    pub fn local_cocycle(&self, v: VertexId) -> Result<Portrait> {
        if v.level > self.shape.max_depth {
            return Err(Error::BeyondTruncationDepth { level: v.level, max_depth: self.shape.max_depth });
        }
        let d = self.shape.arity;
        let depth = self.shape.max_depth - v.level;
        let shape = TreeShape { arity: d, max_depth: depth };
        let labels = (0..depth)
            .map(|k| {
                let width = shape.level_size(k);
                let base = v.code * width;
                self.labels[v.level + k][base..base + width].to_vec()
            })
            .collect();
        Ok(Portrait { shape, labels })
    }

    /// The permutation of level `n` induced by the portrait, as an image
    /// table over the dense vertex codes.
    pub fn level_perm(&self, n: usize) -> Result<Vec<u32>> {
        if n > self.shape.max_depth {
            return Err(Error::BeyondTruncationDepth { level: n, max_depth: self.shape.max_depth });
        }
        let d = self.shape.arity;
        let mut out = vec![0u32; self.shape.level_size(n)];
        // Iterative depth-first walk carrying (level, orig, img).
        let mut stack: Vec<(usize, usize, usize)> = vec![(0, 0, 0)];
        while let Some((k, orig, img)) = stack.pop() {
            if k == n {
                out[orig] = img as u32;
                continue;
            }
            let sigma = &self.labels[k][orig];
            for a in 0..d {
                stack.push((k + 1, orig * d + a, img * d + sigma.apply(a)));
            }
        }
        Ok(out)
    }

    /// Displacement and ultrametric distance between two portraits.
    pub fn distance(&self, other: &Portrait) -> Result<Ultrametric> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        // a^-1 b has a non-identity label at level k iff a and b disagree
        // somewhere at level k (the matching is a level bijection).
        for k in 0..self.shape.max_depth {
            if self.labels[k] != other.labels[k] {
                return Ok(Ultrametric {
                    displacement: Some(k),
                    delta: (self.shape.arity as f64).powi(-(k as i32)),
                });
            }
        }
        Ok(Ultrametric { displacement: None, delta: 0.0 })
    }

    /// Serializes to the plain-text exchange format: a header followed by
    /// one line of images per internal vertex in level order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for level in &self.labels {
            for p in level {
                let _ = writeln!(out, "{p}");
            }
        }
        out
    }

    /// Parses the body produced by [`Portrait::to_text`].
    pub fn from_text(shape: TreeShape, group: &PermGroupSpec, body: &str) -> Result<Portrait> {
        let mut lines = body.lines().filter(|l| !l.trim().is_empty());
        let mut labels: Vec<Vec<Perm>> = Vec::with_capacity(shape.max_depth);
        for k in 0..shape.max_depth {
            let mut level = Vec::with_capacity(shape.level_size(k));
            for _ in 0..shape.level_size(k) {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Parse("portrait body ended early".into()))?;
                let images: Vec<u8> = line
                    .split_whitespace()
                    .map(|t| t.parse::<u8>().map_err(|e| Error::Parse(format!("bad image '{t}': {e}"))))
                    .collect::<Result<_>>()?;
                if images.len() != shape.arity {
                    return Err(Error::Parse(format!(
                        "expected {} images per line, got {}",
                        shape.arity,
                        images.len()
                    )));
                }
                level.push(Perm::from_images(&images)?);
            }
            labels.push(level);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing portrait lines".into()));
        }
        Portrait::from_labels(shape, group, labels)
    }
}

impl std::fmt::Debug for Portrait {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Portrait(d={}, N={})", self.shape.arity, self.shape.max_depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn shape(d: usize, n: usize) -> TreeShape {
        TreeShape::new(d, n).unwrap()
    }

    fn haar(d: usize, n: usize, seed: u64) -> Portrait {
        let group = PermGroupSpec::symmetric(d).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Portrait::sample_haar(&group, shape(d, n), &mut rng)
    }

    /// Independent apply oracle walking digit vectors instead of codes.
    fn apply_oracle(g: &Portrait, x: VertexId) -> VertexId {
        let d = g.shape().arity;
        let digits = x.digits(d);
        let mut orig: Vec<u8> = Vec::new();
        let mut img: Vec<u8> = Vec::new();
        for &a in &digits {
            let sigma = g.label(VertexId::from_digits(d, &orig));
            img.push(sigma.apply(a as usize) as u8);
            orig.push(a);
        }
        VertexId::from_digits(d, &img)
    }

    #[test]
    fn apply_identity_and_root_swap() {
        let id = Portrait::identity(shape(2, 2));
        for code in 0..4 {
            let x = VertexId::new(2, code);
            assert_eq!(id.apply(x).unwrap(), x);
        }
        let group = PermGroupSpec::symmetric(2).unwrap();
        let mut labels = vec![vec![Perm::transposition(2, 0, 1)], vec![Perm::identity(2); 2]];
        let root_swap = Portrait::from_labels(shape(2, 2), &group, labels.clone()).unwrap();
        assert_eq!(root_swap.apply(VertexId::new(2, 0b00)).unwrap(), VertexId::new(2, 0b10));

        // Add a swap at vertex (1,1): children of (1,1) land under (1,0)
        // swapped, so 0b01 keeps its image 0b11 while 0b10 -> 0b01.
        labels[1][1] = Perm::transposition(2, 0, 1);
        let g = Portrait::from_labels(shape(2, 2), &group, labels).unwrap();
        let images: Vec<usize> = (0..4).map(|c| g.apply(VertexId::new(2, c)).unwrap().code).collect();
        let oracle: Vec<usize> = (0..4).map(|c| apply_oracle(&g, VertexId::new(2, c)).code).collect();
        assert_eq!(images, oracle);
        assert_eq!(images, vec![0b10, 0b11, 0b01, 0b00]);
        let mut sorted = images.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3], "level action must be a bijection");
    }

    #[test]
    fn apply_matches_oracle_on_random_portraits() {
        for (d, n, seed) in [(2, 4, 1u64), (3, 3, 2), (2, 6, 3)] {
            let g = haar(d, n, seed);
            for level in 0..=n {
                for code in 0..shape(d, n).level_size(level) {
                    let x = VertexId::new(level, code);
                    assert_eq!(g.apply(x).unwrap(), apply_oracle(&g, x));
                }
            }
        }
    }

    #[test]
    fn compose_defining_equation_on_leaves() {
        let g = haar(2, 3, 11);
        let h = haar(2, 3, 12);
        let gh = g.compose(&h).unwrap();
        for code in 0..8 {
            let x = VertexId::new(3, code);
            assert_eq!(gh.apply(x).unwrap(), h.apply(g.apply(x).unwrap()).unwrap());
        }
        assert_eq!(g.compose(&Portrait::identity(shape(2, 3))).unwrap(), g);
        assert!(g.compose(&g.inverse()).unwrap().is_identity());
        assert!(g.inverse().compose(&g).unwrap().is_identity());
    }

    #[test]
    fn psi_is_a_homomorphism() {
        let g = haar(2, 4, 21);
        let h = haar(2, 4, 22);
        let lhs = g.compose(&h).unwrap().psi(2).unwrap();
        let rhs = g.psi(2).unwrap().compose(&h.psi(2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert!(g.psi(0).unwrap().is_identity());
        assert_eq!(g.psi(4).unwrap(), g);
    }

    #[test]
    fn cocycle_equality_exact() {
        let n = 5;
        let g = haar(2, n, 31);
        let h = haar(2, n, 32);
        let gh = g.compose(&h).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for _ in 0..200 {
            let level = rng.random_range(0..=n);
            let code = rng.random_range(0..shape(2, n).level_size(level));
            let v = VertexId::new(level, code);
            let lhs = gh.local_cocycle(v).unwrap();
            let vg = g.apply(v).unwrap();
            let rhs = g.local_cocycle(v).unwrap().compose(&h.local_cocycle(vg).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
        assert_eq!(g.local_cocycle(VertexId::ROOT).unwrap(), g);
        assert!(Portrait::identity(shape(2, n))
            .local_cocycle(VertexId::new(2, 1))
            .unwrap()
            .is_identity());
    }

    #[test]
    fn cocycle_labels_stay_in_explicit_group() {
        // H = <(0 1 2)> cyclic of order 3 inside Sym(3).
        let group = PermGroupSpec::explicit(3, vec![Perm::shift(3, 1)]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = Portrait::sample_haar(&group, shape(3, 3), &mut rng);
        let h = Portrait::sample_haar(&group, shape(3, 3), &mut rng);
        let gh = g.compose(&h).unwrap();
        assert!(gh.in_group(&group));
        for code in 0..3 {
            let beta = gh.local_cocycle(VertexId::new(1, code)).unwrap();
            assert!(beta.in_group(&group));
        }
        assert!(g.inverse().in_group(&group));
    }

    #[test]
    fn distance_examples_and_invariance() {
        let n = 4;
        let a = haar(2, n, 41);
        assert_eq!(a.distance(&a).unwrap(), Ultrametric { displacement: None, delta: 0.0 });

        let group = PermGroupSpec::symmetric(2).unwrap();
        let mut labels = a.labels.clone();
        labels[0][0] = labels[0][0].then(&Perm::transposition(2, 0, 1));
        let b = Portrait::from_labels(a.shape(), &group, labels).unwrap();
        let u = a.distance(&b).unwrap();
        assert_eq!(u.displacement, Some(0));
        assert_eq!(u.delta, 1.0);

        // Left invariance: delta(ca, cb) = delta(a, b).
        let b2 = haar(2, n, 42);
        let c = haar(2, n, 43);
        let base = a.distance(&b2).unwrap();
        let moved = c.compose(&a).unwrap().distance(&c.compose(&b2).unwrap()).unwrap();
        // compose(c, a) is "c then a"; left translation is a.compose(..) read
        // the other way, so check both orders.
        let moved2 = a.compose(&c).unwrap().distance(&b2.compose(&c).unwrap()).unwrap();
        assert_eq!(base.displacement, moved.displacement);
        assert_eq!(base.displacement, moved2.displacement);
    }

    #[test]
    fn distance_matches_compose_route() {
        let n = 5;
        for seed in 0..20u64 {
            let a = haar(2, n, 100 + seed);
            let b = haar(2, n, 200 + seed);
            let direct = a.distance(&b).unwrap();
            let quotient = a.inverse().compose(&b).unwrap();
            let via_compose = Portrait::identity(shape(2, n)).distance(&quotient).unwrap();
            assert_eq!(direct.displacement, via_compose.displacement);
        }
    }

    #[test]
    fn strong_triangle_inequality_sampled() {
        let n = 4;
        for seed in 0..30u64 {
            let a = haar(2, n, 300 + seed);
            let b = haar(2, n, 400 + seed);
            let c = haar(2, n, 500 + seed);
            let ab = a.distance(&b).unwrap().delta;
            let bc = b.distance(&c).unwrap().delta;
            let ac = a.distance(&c).unwrap().delta;
            assert!(ac <= ab.max(bc) + 1e-15);
        }
    }

    #[test]
    fn haar_root_label_uniform() {
        // H = Z/2, depth 1: the root label is a fair coin.
        let group = PermGroupSpec::cyclic(2).unwrap();
        let mut rng = derive_rng(9090, 0, 0);
        let draws = 10_000;
        let mut swaps = 0u32;
        for _ in 0..draws {
            let g = Portrait::sample_haar(&group, shape(2, 1), &mut rng);
            if !g.label(VertexId::ROOT).is_identity() {
                swaps += 1;
            }
        }
        let z = (swaps as f64 - draws as f64 / 2.0) / (draws as f64 / 4.0).sqrt();
        assert!(z.abs() < 3.0, "|z| = {} too large", z.abs());
    }

    #[test]
    fn haar_depth_two_image_uniform() {
        // Psi_2 image uniform over the 8 elements of W_2(Z/2).
        let group = PermGroupSpec::cyclic(2).unwrap();
        let mut rng = derive_rng(9191, 0, 0);
        let draws = 16_000usize;
        let mut counts = [0u32; 8];
        for _ in 0..draws {
            let g = Portrait::sample_haar(&group, shape(2, 3), &mut rng).psi(2).unwrap();
            let idx = (g.label(VertexId::ROOT).apply(0))
                | (g.label(VertexId::new(1, 0)).apply(0) << 1)
                | (g.label(VertexId::new(1, 1)).apply(0) << 2);
            counts[idx] += 1;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let (_, p) = crate::stats::chi_square_uniform(&counts.iter().map(|&c| c as u64).collect::<Vec<_>>());
        assert!(p > 1e-3, "chi2 = {chi2}, p = {p}");

        // Degenerate depth 0 is always trivial.
        let g0 = Portrait::sample_haar(&group, shape(2, 0), &mut rng);
        assert!(g0.is_identity());
    }

    #[test]
    fn psi_of_deep_haar_has_same_distribution_as_shallow_haar() {
        let group = PermGroupSpec::cyclic(2).unwrap();
        let mut rng = derive_rng(9292, 0, 0);
        let draws = 8_000usize;
        let mut deep_counts = [0u64; 2];
        let mut shallow_counts = [0u64; 2];
        for _ in 0..draws {
            let deep = Portrait::sample_haar(&group, shape(2, 4), &mut rng).psi(1).unwrap();
            deep_counts[deep.label(VertexId::ROOT).apply(0)] += 1;
            let shallow = Portrait::sample_haar(&group, shape(2, 1), &mut rng);
            shallow_counts[shallow.label(VertexId::ROOT).apply(0)] += 1;
        }
        let (_, p_deep) = crate::stats::chi_square_uniform(&deep_counts);
        let (_, p_shallow) = crate::stats::chi_square_uniform(&shallow_counts);
        assert!(p_deep > 1e-3 && p_shallow > 1e-3);
    }

    #[test]
    fn text_round_trip() {
        let group = PermGroupSpec::symmetric(3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let g = Portrait::sample_haar(&group, shape(3, 3), &mut rng);
        let text = g.to_text();
        let parsed = Portrait::from_text(g.shape(), &group, &text).unwrap();
        assert_eq!(parsed, g);
    }

    #[test]
    fn level_perm_agrees_with_apply() {
        let g = haar(2, 5, 55);
        for n in 0..=5 {
            let perm = g.level_perm(n).unwrap();
            for code in 0..shape(2, 5).level_size(n) {
                assert_eq!(perm[code] as usize, g.apply(VertexId::new(n, code)).unwrap().code);
            }
        }
    }
}
