//! Small permutations of `{0..d-1}` and the transitive label groups `H`.
//!
//! Tree labels are permutations of the child digits, so the degree is the
//! tree arity. Degrees are capped at 8, which keeps every `H` enumerable
//! (`|Sym(8)| = 40320`) and lets `Perm` live inline without allocation.

use rand::Rng;
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 8;

/// A permutation of `{0, .., degree-1}`, stored as its image table.
///
/// Composition follows the right-action convention used throughout the
/// crate: `a.then(b)` maps `x` to `b(a(x))`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    images: [u8; MAX_DEGREE],
    degree: u8,
}

impl Perm {
    pub fn identity(degree: usize) -> Perm {
        debug_assert!((1..=MAX_DEGREE).contains(&degree));
        let mut images = [0u8; MAX_DEGREE];
        for (i, img) in images.iter_mut().enumerate() {
            *img = i as u8;
        }
        Perm { images, degree: degree as u8 }
    }

    /// Builds a permutation from its image table, checking bijectivity.
    pub fn from_images(images: &[u8]) -> Result<Perm> {
        let degree = images.len();
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::DegreeUnsupported(degree));
        }
        let mut seen = [false; MAX_DEGREE];
        for &img in images {
            if (img as usize) >= degree || seen[img as usize] {
                return Err(Error::NonBijective { degree });
            }
            seen[img as usize] = true;
        }
        let mut table = [0u8; MAX_DEGREE];
        table[..degree].copy_from_slice(images);
        for (i, img) in table.iter_mut().enumerate().skip(degree) {
            *img = i as u8;
        }
        Ok(Perm { images: table, degree: degree as u8 })
    }

    /// The transposition `(i j)`.
    pub fn transposition(degree: usize, i: usize, j: usize) -> Perm {
        let mut p = Perm::identity(degree);
        p.images.swap(i, j);
        p
    }

    /// The cyclic shift `x -> x + k (mod degree)`.
    pub fn shift(degree: usize, k: usize) -> Perm {
        let mut p = Perm::identity(degree);
        for x in 0..degree {
            p.images[x] = ((x + k) % degree) as u8;
        }
        p
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.images[x] as usize
    }

    /// `self` then `other` (right action): `x -> other(self(x))`.
    #[inline]
    pub fn then(&self, other: &Perm) -> Perm {
        debug_assert_eq!(self.degree, other.degree);
        let mut images = [0u8; MAX_DEGREE];
        for x in 0..self.degree as usize {
            images[x] = other.images[self.images[x] as usize];
        }
        for (x, img) in images.iter_mut().enumerate().skip(self.degree as usize) {
            *img = x as u8;
        }
        Perm { images, degree: self.degree }
    }

    pub fn inverse(&self) -> Perm {
        let mut images = [0u8; MAX_DEGREE];
        for x in 0..MAX_DEGREE {
            images[self.images[x] as usize] = x as u8;
        }
        Perm { images, degree: self.degree }
    }

    pub fn is_identity(&self) -> bool {
        (0..self.degree as usize).all(|x| self.images[x] as usize == x)
    }

    pub fn images(&self) -> &[u8] {
        &self.images[..self.degree as usize]
    }

    /// Rank of the permutation in lexicographic (Lehmer) order.
    pub fn lehmer_rank(&self) -> usize {
        let d = self.degree as usize;
        let mut rank = 0usize;
        for i in 0..d {
            let smaller = (i + 1..d).filter(|&j| self.images[j] < self.images[i]).count();
            rank = rank * (d - i) + smaller;
        }
        rank
    }

    fn random_uniform<R: Rng + ?Sized>(degree: usize, rng: &mut R) -> Perm {
        // Fisher-Yates on the identity table.
        let mut p = Perm::identity(degree);
        for i in (1..degree).rev() {
            let j = rng.random_range(0..=i);
            p.images.swap(i, j);
        }
        p
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.images())
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let strs: Vec<String> = self.images().iter().map(|i| i.to_string()).collect();
        write!(f, "{}", strs.join(" "))
    }
}

/// Which transitive permutation group the tree labels are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    /// The full symmetric group `Sym(d)`.
    FullSymmetric,
    /// The cyclic group of shifts `x -> x + k (mod d)`.
    CyclicModD,
    /// An explicitly generated subgroup of `Sym(d)`.
    ExplicitGenerators,
}

/// A transitive permutation group `H <= Sym(d)` of degree `d`.
///
/// Transitivity is checked at construction. For explicit generators the
/// whole element set is enumerated up front so that membership, uniform
/// sampling and element indexing are O(1)-ish lookups.
#[derive(Clone, Debug)]
pub struct PermGroupSpec {
    degree: usize,
    kind: GroupKind,
    generators: Vec<Perm>,
    /// Sorted element list; populated for `ExplicitGenerators` only.
    elements: Vec<Perm>,
}

impl PermGroupSpec {
    pub fn symmetric(degree: usize) -> Result<PermGroupSpec> {
        check_degree(degree)?;
        let mut generators = vec![Perm::transposition(degree, 0, 1)];
        if degree > 2 {
            generators.push(Perm::shift(degree, 1));
        }
        Ok(PermGroupSpec { degree, kind: GroupKind::FullSymmetric, generators, elements: Vec::new() })
    }

    pub fn cyclic(degree: usize) -> Result<PermGroupSpec> {
        check_degree(degree)?;
        Ok(PermGroupSpec {
            degree,
            kind: GroupKind::CyclicModD,
            generators: vec![Perm::shift(degree, 1)],
            elements: Vec::new(),
        })
    }

    pub fn explicit(degree: usize, generators: Vec<Perm>) -> Result<PermGroupSpec> {
        check_degree(degree)?;
        for g in &generators {
            if g.degree() != degree {
                return Err(Error::ShapeMismatch(format!(
                    "generator degree {} differs from group degree {}",
                    g.degree(),
                    degree
                )));
            }
        }
        let elements = enumerate_closure(degree, &generators);
        let spec = PermGroupSpec { degree, kind: GroupKind::ExplicitGenerators, generators, elements };
        if !spec.is_transitive() {
            return Err(Error::NotTransitive { degree });
        }
        Ok(spec)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn generators(&self) -> &[Perm] {
        &self.generators
    }

    pub fn order(&self) -> u64 {
        match self.kind {
            GroupKind::FullSymmetric => (1..=self.degree as u64).product(),
            GroupKind::CyclicModD => self.degree as u64,
            GroupKind::ExplicitGenerators => self.elements.len() as u64,
        }
    }

    pub fn contains(&self, p: &Perm) -> bool {
        if p.degree() != self.degree {
            return false;
        }
        match self.kind {
            GroupKind::FullSymmetric => true,
            GroupKind::CyclicModD => *p == Perm::shift(self.degree, p.apply(0)),
            GroupKind::ExplicitGenerators => self.elements.binary_search(p).is_ok(),
        }
    }

    /// Index of an element in the canonical enumeration of the group.
    pub fn element_index(&self, p: &Perm) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        match self.kind {
            GroupKind::FullSymmetric => Some(p.lehmer_rank()),
            GroupKind::CyclicModD => Some(p.apply(0)),
            GroupKind::ExplicitGenerators => self.elements.binary_search(p).ok(),
        }
    }

    pub fn is_transitive(&self) -> bool {
        let mut reached = vec![false; self.degree];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(x) = stack.pop() {
            for g in &self.generators {
                for y in [g.apply(x), g.inverse().apply(x)] {
                    if !reached[y] {
                        reached[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        reached.into_iter().all(|r| r)
    }

    /// Draws an element uniformly at random from the group.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Perm {
        match self.kind {
            GroupKind::FullSymmetric => Perm::random_uniform(self.degree, rng),
            GroupKind::CyclicModD => Perm::shift(self.degree, rng.random_range(0..self.degree)),
            GroupKind::ExplicitGenerators => {
                self.elements[rng.random_range(0..self.elements.len())]
            }
        }
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if !(2..=MAX_DEGREE).contains(&degree) {
        return Err(Error::DegreeUnsupported(degree));
    }
    Ok(())
}

fn enumerate_closure(degree: usize, generators: &[Perm]) -> Vec<Perm> {
    let mut seen: BTreeSet<Perm> = BTreeSet::new();
    seen.insert(Perm::identity(degree));
    let mut frontier: Vec<Perm> = vec![Perm::identity(degree)];
    while let Some(p) = frontier.pop() {
        for g in generators {
            let q = p.then(g);
            if seen.insert(q) {
                frontier.push(q);
            }
        }
    }
    seen.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn compose_and_inverse() {
        let a = Perm::transposition(3, 0, 1);
        let b = Perm::shift(3, 1);
        let ab = a.then(&b);
        // right action: x -> b(a(x))
        assert_eq!(ab.apply(0), b.apply(1));
        assert_eq!(ab.apply(2), b.apply(2));
        assert!(a.then(&a.inverse()).is_identity());
        assert!(b.inverse().then(&b).is_identity());
    }

    #[test]
    fn from_images_rejects_non_bijections() {
        assert!(Perm::from_images(&[0, 0, 1]).is_err());
        assert!(Perm::from_images(&[0, 3, 1]).is_err());
        assert!(Perm::from_images(&[1, 0]).is_ok());
    }

    #[test]
    fn lehmer_rank_enumerates_sym3() {
        let mut ranks: Vec<usize> = Vec::new();
        for images in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            ranks.push(Perm::from_images(&images).unwrap().lehmer_rank());
        }
        assert_eq!(ranks, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn group_orders() {
        assert_eq!(PermGroupSpec::symmetric(4).unwrap().order(), 24);
        assert_eq!(PermGroupSpec::cyclic(5).unwrap().order(), 5);
        let h = PermGroupSpec::explicit(3, vec![Perm::shift(3, 1)]).unwrap();
        assert_eq!(h.order(), 3);
        assert!(h.contains(&Perm::shift(3, 2)));
        assert!(!h.contains(&Perm::transposition(3, 0, 1)));
    }

    #[test]
    fn intransitive_generators_rejected() {
        let fix_two = Perm::from_images(&[1, 0, 2]).unwrap();
        assert!(matches!(
            PermGroupSpec::explicit(3, vec![fix_two]),
            Err(Error::NotTransitive { degree: 3 })
        ));
    }

    #[test]
    fn element_index_is_a_bijection() {
        for spec in [
            PermGroupSpec::symmetric(3).unwrap(),
            PermGroupSpec::cyclic(4).unwrap(),
            PermGroupSpec::explicit(3, vec![Perm::shift(3, 1), Perm::transposition(3, 0, 1)]).unwrap(),
        ] {
            let mut seen = vec![false; spec.order() as usize];
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            for _ in 0..2000 {
                let p = spec.sample_uniform(&mut rng);
                let idx = spec.element_index(&p).unwrap();
                seen[idx] = true;
            }
            assert!(seen.into_iter().all(|s| s), "sampling missed an element index");
        }
    }
}
