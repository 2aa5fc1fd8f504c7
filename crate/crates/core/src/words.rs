//! Freely reduced words over `m` generators, substitution into tree
//! automorphisms, and the non-cyclicity test for two-generated subgroups.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::portrait::Portrait;

/// One letter `x_i^{+-1}`; generator indices are 0-based internally and
/// printed 1-based (`x1`, `x2`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub gen: usize,
    pub sign: i8,
}

impl Letter {
    pub fn new(gen: usize, sign: i8) -> Letter {
        debug_assert!(sign == 1 || sign == -1);
        Letter { gen, sign }
    }

    pub fn inverse(&self) -> Letter {
        Letter { gen: self.gen, sign: -self.sign }
    }

    fn cancels(&self, other: &Letter) -> bool {
        self.gen == other.gen && self.sign == -other.sign
    }
}

/// A freely reduced word in the free group of the given rank.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FreeWord {
    rank: usize,
    letters: Vec<Letter>,
}

impl FreeWord {
    pub fn empty(rank: usize) -> FreeWord {
        FreeWord { rank, letters: Vec::new() }
    }

    pub fn generator(rank: usize, gen: usize) -> FreeWord {
        debug_assert!(gen < rank);
        FreeWord { rank, letters: vec![Letter::new(gen, 1)] }
    }

    /// Freely reduces a raw letter sequence.
    pub fn reduce(rank: usize, raw: &[Letter]) -> FreeWord {
        let mut stack: Vec<Letter> = Vec::with_capacity(raw.len());
        for &letter in raw {
            debug_assert!(letter.gen < rank);
            if stack.last().is_some_and(|top| top.cancels(&letter)) {
                stack.pop();
            } else {
                stack.push(letter);
            }
        }
        FreeWord { rank, letters: stack }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn inverse(&self) -> FreeWord {
        FreeWord {
            rank: self.rank,
            letters: self.letters.iter().rev().map(Letter::inverse).collect(),
        }
    }

    /// Concatenation followed by free reduction.
    pub fn concat(&self, other: &FreeWord) -> FreeWord {
        debug_assert_eq!(self.rank, other.rank);
        let mut letters = self.letters.clone();
        for &letter in &other.letters {
            if letters.last().is_some_and(|top| top.cancels(&letter)) {
                letters.pop();
            } else {
                letters.push(letter);
            }
        }
        FreeWord { rank: self.rank, letters }
    }

    pub fn pow(&self, exponent: i64) -> FreeWord {
        let base = if exponent < 0 { self.inverse() } else { self.clone() };
        let mut out = FreeWord::empty(self.rank);
        for _ in 0..exponent.unsigned_abs() {
            out = out.concat(&base);
        }
        out
    }

    /// Splits `w = v . core . v^-1` with `core` cyclically reduced.
    pub fn cyclic_decompose(&self) -> Result<(FreeWord, FreeWord)> {
        if self.is_empty() {
            return Err(Error::EmptyWord);
        }
        let mut lo = 0usize;
        let mut hi = self.letters.len();
        while hi - lo >= 2 && self.letters[lo].cancels(&self.letters[hi - 1]) {
            lo += 1;
            hi -= 1;
        }
        let conjugator = FreeWord { rank: self.rank, letters: self.letters[..lo].to_vec() };
        let core = FreeWord { rank: self.rank, letters: self.letters[lo..hi].to_vec() };
        Ok((conjugator, core))
    }

    /// Substitutes portraits for the generators, composing along the
    /// letters in right-action order.
    pub fn substitute(&self, gens: &[Portrait]) -> Result<Portrait> {
        if self.rank != gens.len() {
            return Err(Error::RankMismatch { word_rank: self.rank, gens: gens.len() });
        }
        for pair in gens.windows(2) {
            if pair[0].shape() != pair[1].shape() {
                return Err(Error::ShapeMismatch("substituted generators differ in shape".into()));
            }
        }
        let shape = gens
            .first()
            .map(|g| g.shape())
            .ok_or_else(|| Error::InvalidInput("substitute requires at least one generator".into()))?;
        let mut out = Portrait::identity(shape);
        for letter in &self.letters {
            let g = &gens[letter.gen];
            out = if letter.sign > 0 { out.compose(g)? } else { out.compose(&g.inverse())? };
        }
        Ok(out)
    }

    /// Parses the word literal syntax: whitespace-separated letters like
    /// `x1 x2^-1 x1`. The empty string is the empty word.
    pub fn parse(text: &str, rank: usize) -> Result<FreeWord> {
        let mut raw = Vec::new();
        for token in text.split_whitespace() {
            let (name, sign) = match token.split_once('^') {
                Some((name, exp)) => {
                    let sign = match exp {
                        "-1" => -1,
                        "1" => 1,
                        other => return Err(Error::Parse(format!("unsupported exponent '{other}'"))),
                    };
                    (name, sign)
                }
                None => (token, 1),
            };
            let idx: usize = name
                .strip_prefix('x')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::Parse(format!("bad letter '{token}' (expected x<k> or x<k>^-1)")))?;
            if idx > rank {
                return Err(Error::Parse(format!("letter '{token}' exceeds rank {rank}")));
            }
            raw.push(Letter::new(idx - 1, sign));
        }
        Ok(FreeWord::reduce(rank, &raw))
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|l| {
                if l.sign > 0 {
                    format!("x{}", l.gen + 1)
                } else {
                    format!("x{}^-1", l.gen + 1)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl fmt::Debug for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FreeWord({self})")
    }
}

/// Whether `<w1, w2>` is a non-cyclic subgroup of the free group.
///
/// Decided by Nielsen reduction of the pair: repeatedly replace the longer
/// word by a strictly shorter product with the other until lengths
/// stabilize. A dependent pair performs the Euclidean algorithm on the
/// exponents of the common root and ends with a trivial element, so the
/// pair generates a cyclic group iff reduction leaves at most one
/// non-trivial word.
pub fn is_noncyclic(w1: &FreeWord, w2: &FreeWord) -> bool {
    assert_eq!(w1.rank(), w2.rank());
    let mut a = w1.clone();
    let mut b = w2.clone();
    loop {
        if a.is_empty() || b.is_empty() {
            return false;
        }
        if a.len() > b.len() {
            std::mem::swap(&mut a, &mut b);
        }
        // Try the four one-sided products that could shorten b.
        let candidates = [
            a.concat(&b),
            a.inverse().concat(&b),
            b.concat(&a),
            b.concat(&a.inverse()),
        ];
        match candidates.into_iter().min_by_key(FreeWord::len) {
            Some(best) if best.len() < b.len() => b = best,
            _ => break,
        }
    }
    // Stabilized with two non-trivial words; a dependent pair cannot stall
    // here, but the equal/inverse cases are cheap to rule out explicitly.
    a != b && a != b.inverse()
}
