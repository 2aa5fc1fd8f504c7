//! Exact orders of permutation groups on tree levels via stabilizer
//! chains, the closed-form wreath-product order, and density sequences.

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::perm::PermGroupSpec;
use crate::portrait::Portrait;
use crate::tree::TreeShape;
use crate::words::FreeWord;

/// Default cap on the permutation degree for chain construction.
pub const DEFAULT_DEGREE_BUDGET: usize = 1 << 14;

/// Degree threshold below which full inverse-transversal tables are cached
/// per level; above it, transversals are recomposed along BFS paths.
const TRANSVERSAL_CACHE_DEGREE: usize = 2048;

fn compose(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().map(|&x| b[x as usize]).collect()
}

fn compose_into(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    out.extend(a.iter().map(|&x| b[x as usize]));
}

fn invert(a: &[u32]) -> Vec<u32> {
    let mut out = vec![0u32; a.len()];
    for (x, &img) in a.iter().enumerate() {
        out[img as usize] = x as u32;
    }
    out
}

fn is_identity(a: &[u32]) -> bool {
    a.iter().enumerate().all(|(x, &img)| img as usize == x)
}

fn validate(perms: &[Vec<u32>], degree: usize) -> Result<()> {
    for p in perms {
        if p.len() != degree {
            return Err(Error::ShapeMismatch(format!(
                "permutation length {} differs from degree {degree}",
                p.len()
            )));
        }
        let mut seen = vec![false; degree];
        for &img in p {
            if img as usize >= degree || seen[img as usize] {
                return Err(Error::NonBijective { degree });
            }
            seen[img as usize] = true;
        }
    }
    Ok(())
}

/// A strong generator together with its inverse and the deepest chain
/// level it belongs to (it fixes every base point above that level).
struct StrongGen {
    perm: Vec<u32>,
    inv: Vec<u32>,
    level: usize,
}

struct LevelOrbit {
    point: u32,
    orbit: Vec<u32>,
    /// Per point: pool index and sign of the BFS step that reached it.
    step: Vec<Option<(u32, i8)>>,
    prev: Vec<u32>,
    /// Cached inverse transversals (`u_x^{-1}`), indexed by point; empty
    /// when the degree is above the cache threshold.
    inv_trans: Vec<Vec<u32>>,
    /// Cached forward transversals, same policy.
    fwd_trans: Vec<Vec<u32>>,
}

impl LevelOrbit {
    fn new(point: u32, degree: usize) -> LevelOrbit {
        LevelOrbit {
            point,
            orbit: Vec::new(),
            step: vec![None; degree],
            prev: vec![0; degree],
            inv_trans: Vec::new(),
            fwd_trans: Vec::new(),
        }
    }

    fn in_orbit(&self, x: u32) -> bool {
        self.step[x as usize].is_some()
    }
}

/// Stabilizer chain of a permutation group on `[0, degree)`.
///
/// Construction first sifts in random products of the accumulated chain
/// (a fixed internal stream keeps this deterministic), then runs the
/// deterministic Schreier closure, which doubles as the verification
/// pass: the chain is accepted only after a full pass in which every
/// Schreier generator strips to the identity.
pub struct StabChain {
    degree: usize,
    pool: Vec<StrongGen>,
    levels: Vec<LevelOrbit>,
}

impl StabChain {
    pub fn from_generators(perms: &[Vec<u32>], degree: usize) -> Result<StabChain> {
        validate(perms, degree)?;
        let mut chain = StabChain { degree, pool: Vec::new(), levels: Vec::new() };
        let nontrivial: Vec<&Vec<u32>> = perms.iter().filter(|p| !is_identity(p)).collect();
        if nontrivial.is_empty() {
            return Ok(chain);
        }
        for p in &nontrivial {
            chain.place((*p).clone());
        }

        // Randomized filling: products of a uniform element of the current
        // chain group with a random input generator reach missing cosets
        // quickly, so the deterministic closure mostly just verifies.
        let mut rng = crate::seed::derive_rng(0x5741_5243, degree as u64, 97);
        use rand::Rng;
        let mut quiet = 0usize;
        let mut rounds = 0usize;
        while quiet < 12 && rounds < 4096 {
            rounds += 1;
            let mut g = chain.random_chain_element(&mut rng);
            let pick = &nontrivial[rng.random_range(0..nontrivial.len())];
            g = compose(&g, pick);
            if chain.place_if_new(g) {
                quiet = 0;
            } else {
                quiet += 1;
            }
        }

        chain.close_all();
        Ok(chain)
    }

    /// Exact group order: the product of the orbit sizes.
    pub fn order(&self) -> BigUint {
        let mut order = BigUint::from(1u32);
        for level in &self.levels {
            order *= BigUint::from(level.orbit.len());
        }
        order
    }

    pub fn base(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.point).collect()
    }

    /// Membership by sifting.
    pub fn contains(&self, perm: &[u32]) -> bool {
        if perm.len() != self.degree {
            return false;
        }
        self.sift(perm.to_vec(), 0).is_none()
    }

    /// A uniform random element of the group currently represented by the
    /// chain: the product of one uniform transversal element per level.
    fn random_chain_element<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let mut g: Vec<u32> = (0..self.degree as u32).collect();
        for lvl in (0..self.levels.len()).rev() {
            let level = &self.levels[lvl];
            let x = level.orbit[rng.random_range(0..level.orbit.len())];
            let u = self.transversal(lvl, x);
            g = compose(&u, &g);
        }
        g
    }

    fn transversal(&self, lvl: usize, x: u32) -> Vec<u32> {
        let level = &self.levels[lvl];
        if !level.fwd_trans.is_empty() {
            return level.fwd_trans[x as usize].clone();
        }
        let mut path: Vec<(u32, i8)> = Vec::new();
        let mut cur = x;
        while cur != level.point {
            let (gen, sign) = level.step[cur as usize].expect("point in orbit");
            path.push((gen, sign));
            cur = level.prev[cur as usize];
        }
        let mut u: Vec<u32> = (0..self.degree as u32).collect();
        for &(gen, sign) in path.iter().rev() {
            let g = &self.pool[gen as usize];
            u = if sign > 0 { compose(&u, &g.perm) } else { compose(&u, &g.inv) };
        }
        u
    }

    /// `g <- g . u_x^{-1}` for the transversal at `lvl` reaching `x`.
    fn strip_step(&self, lvl: usize, x: u32, g: &mut Vec<u32>, scratch: &mut Vec<u32>) {
        let level = &self.levels[lvl];
        if !level.inv_trans.is_empty() {
            compose_into(g, &level.inv_trans[x as usize], scratch);
            std::mem::swap(g, scratch);
            return;
        }
        // Walk the BFS path backwards, multiplying by inverse steps.
        let mut cur = x;
        while cur != level.point {
            let (gen, sign) = level.step[cur as usize].expect("point in orbit");
            let sg = &self.pool[gen as usize];
            let factor = if sign > 0 { &sg.inv } else { &sg.perm };
            compose_into(g, factor, scratch);
            std::mem::swap(g, scratch);
            cur = level.prev[cur as usize];
        }
    }

    /// Sifts from the given level; returns the level reached and the
    /// non-identity residue, or `None` if the element strips to identity.
    fn sift(&self, mut g: Vec<u32>, from: usize) -> Option<(usize, Vec<u32>)> {
        let mut scratch = Vec::with_capacity(self.degree);
        for lvl in from..self.levels.len() {
            let level = &self.levels[lvl];
            let x = g[level.point as usize];
            if x == level.point {
                continue;
            }
            if !level.in_orbit(x) {
                return Some((lvl, g));
            }
            self.strip_step(lvl, x, &mut g, &mut scratch);
        }
        if is_identity(&g) {
            None
        } else {
            Some((self.levels.len(), g))
        }
    }

    /// Places a non-identity element at its sift level, extending the
    /// chain and refreshing every orbit it can touch. Returns false if the
    /// element stripped to identity.
    fn place_if_new(&mut self, g: Vec<u32>) -> bool {
        match self.sift(g, 0) {
            None => false,
            Some((lvl, residue)) => {
                if lvl == self.levels.len() {
                    let moved = (0..self.degree as u32)
                        .find(|&x| residue[x as usize] != x)
                        .expect("non-identity residue moves a point");
                    self.levels.push(LevelOrbit::new(moved, self.degree));
                }
                let inv = invert(&residue);
                self.pool.push(StrongGen { perm: residue, inv, level: lvl });
                for j in (0..=lvl).rev() {
                    if self.orbit_would_grow(j) || self.levels[j].orbit.is_empty() {
                        self.recompute_orbit(j);
                    }
                }
                true
            }
        }
    }

    fn place(&mut self, g: Vec<u32>) {
        self.place_if_new(g);
    }

    /// Quick test whether the newest pool generator extends an orbit.
    fn orbit_would_grow(&self, lvl: usize) -> bool {
        let gen = self.pool.last().expect("pool nonempty");
        if gen.level < lvl {
            return false;
        }
        let level = &self.levels[lvl];
        level.orbit.iter().any(|&p| {
            !level.in_orbit(gen.perm[p as usize]) || !level.in_orbit(gen.inv[p as usize])
        })
    }

    fn recompute_orbit(&mut self, lvl: usize) {
        let point = self.levels[lvl].point;
        let degree = self.degree;
        let mut orbit = vec![point];
        let mut step: Vec<Option<(u32, i8)>> = vec![None; degree];
        let mut prev = vec![0u32; degree];
        step[point as usize] = Some((u32::MAX, 0));
        let mut head = 0;
        while head < orbit.len() {
            let x = orbit[head];
            head += 1;
            for (gi, g) in self.pool.iter().enumerate() {
                if g.level < lvl {
                    continue;
                }
                let fwd = g.perm[x as usize];
                if step[fwd as usize].is_none() {
                    step[fwd as usize] = Some((gi as u32, 1));
                    prev[fwd as usize] = x;
                    orbit.push(fwd);
                }
                let bwd = g.inv[x as usize];
                if step[bwd as usize].is_none() {
                    step[bwd as usize] = Some((gi as u32, -1));
                    prev[bwd as usize] = x;
                    orbit.push(bwd);
                }
            }
        }
        let cache = degree <= TRANSVERSAL_CACHE_DEGREE;
        let mut fwd_trans: Vec<Vec<u32>> = Vec::new();
        let mut inv_trans: Vec<Vec<u32>> = Vec::new();
        if cache {
            fwd_trans = vec![Vec::new(); degree];
            inv_trans = vec![Vec::new(); degree];
            fwd_trans[point as usize] = (0..degree as u32).collect();
            inv_trans[point as usize] = (0..degree as u32).collect();
            for &x in &orbit[1..] {
                let (gi, sign) = step[x as usize].unwrap();
                let p = prev[x as usize];
                let g = &self.pool[gi as usize];
                let (factor, inv_factor) =
                    if sign > 0 { (&g.perm, &g.inv) } else { (&g.inv, &g.perm) };
                fwd_trans[x as usize] = compose(&fwd_trans[p as usize], factor);
                inv_trans[x as usize] = compose(inv_factor, &inv_trans[p as usize]);
            }
        }
        let level = &mut self.levels[lvl];
        level.orbit = orbit;
        level.step = step;
        level.prev = prev;
        level.fwd_trans = fwd_trans;
        level.inv_trans = inv_trans;
    }

    /// Deterministic Schreier closure: full passes over all levels,
    /// deepest first, until one pass adds nothing.
    fn close_all(&mut self) {
        loop {
            let mut added = false;
            for lvl in (0..self.levels.len()).rev() {
                let mut oi = 0;
                while oi < self.levels[lvl].orbit.len() {
                    let mut gi = 0;
                    while gi < self.pool.len() {
                        if self.pool[gi].level < lvl {
                            gi += 1;
                            continue;
                        }
                        let p = self.levels[lvl].orbit[oi];
                        if self.is_tree_edge(lvl, p, gi) {
                            gi += 1;
                            continue;
                        }
                        let sg = {
                            let g = &self.pool[gi];
                            let u_p = self.transversal(lvl, p);
                            let pg = g.perm[p as usize];
                            let with_gen = compose(&u_p, &g.perm);
                            let mut out = with_gen;
                            let mut scratch = Vec::with_capacity(self.degree);
                            self.strip_point(lvl, pg, &mut out, &mut scratch);
                            out
                        };
                        if !is_identity(&sg) && self.place_from(sg, lvl + 1) {
                            added = true;
                        }
                        gi += 1;
                    }
                    oi += 1;
                }
            }
            if !added {
                break;
            }
        }
    }

    /// Multiplies by `u_x^{-1}` at `lvl` (one stripping step in place).
    fn strip_point(&self, lvl: usize, x: u32, g: &mut Vec<u32>, scratch: &mut Vec<u32>) {
        self.strip_step(lvl, x, g, scratch);
    }

    /// Whether `(p, gen)` is a BFS tree edge at `lvl`, whose Schreier
    /// generator is the identity by construction.
    fn is_tree_edge(&self, lvl: usize, p: u32, gi: usize) -> bool {
        let level = &self.levels[lvl];
        let g = &self.pool[gi];
        let q = g.perm[p as usize];
        if let Some((sgi, sign)) = level.step[q as usize] {
            if sgi as usize == gi && sign > 0 && level.prev[q as usize] == p {
                return true;
            }
        }
        if let Some((sgi, sign)) = level.step[p as usize] {
            if sgi as usize == gi && sign < 0 && level.prev[p as usize] == q {
                return true;
            }
        }
        false
    }

    /// Sifts from `from` and places a surviving residue. Returns whether
    /// anything was added.
    fn place_from(&mut self, g: Vec<u32>, from: usize) -> bool {
        match self.sift(g, from) {
            None => false,
            Some((lvl, residue)) => {
                if lvl == self.levels.len() {
                    let moved = (0..self.degree as u32)
                        .find(|&x| residue[x as usize] != x)
                        .expect("non-identity residue moves a point");
                    self.levels.push(LevelOrbit::new(moved, self.degree));
                }
                let inv = invert(&residue);
                self.pool.push(StrongGen { perm: residue, inv, level: lvl });
                for j in (0..=lvl).rev() {
                    if self.orbit_would_grow(j) || self.levels[j].orbit.is_empty() {
                        self.recompute_orbit(j);
                    }
                }
                true
            }
        }
    }
}

/// Exact order of the group generated by permutations of `[0, degree)`.
pub fn order(perms: &[Vec<u32>], degree: usize) -> Result<BigUint> {
    Ok(StabChain::from_generators(perms, degree)?.order())
}

/// The closed-form wreath order `|H|^((d^n - 1)/(d - 1))`.
pub fn wreath_order(group: &PermGroupSpec, d: usize, n: usize) -> BigUint {
    let exponent = (d.pow(n as u32) - 1) / (d - 1);
    BigUint::from(group.order()).pow(exponent as u32)
}

/// `log2` of the wreath order: `log2|H| * (d^n - 1)/(d - 1)`.
pub fn log2_wreath_order(group: &PermGroupSpec, d: usize, n: usize) -> f64 {
    let exponent = (d.pow(n as u32) - 1) / (d - 1);
    (group.order() as f64).log2() * exponent as f64
}

/// `log2` of a big integer with absolute error below 1e-12.
pub fn log2_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    assert!(bits > 0, "log of zero");
    let digits: Vec<u64> = x.iter_u64_digits().collect();
    let top = *digits.last().unwrap();
    let top_bits = 64 - top.leading_zeros() as u64;
    if digits.len() == 1 {
        return (top as f64).log2();
    }
    let mantissa = ((top as u128) << 64) | digits[digits.len() - 2] as u128;
    let shift = bits - top_bits - 64;
    (mantissa as f64).log2() + shift as f64
}

/// One row of the density sequence.
#[derive(Clone, Debug, Serialize)]
pub struct DensityRow {
    pub n: usize,
    /// Number of decimal digits of the exact order.
    pub order_digits: usize,
    pub log2_order: f64,
    pub log2_wreath: f64,
    pub gamma: f64,
}

/// The density sequence `gamma_n = log|G_n| / log|W_n|` for `n = 1..=max_n`,
/// together with the min over the tail window as a liminf estimate.
#[derive(Clone, Debug, Serialize)]
pub struct DensitySequence {
    pub rows: Vec<DensityRow>,
    /// Minimum of `gamma_n` over the last four computed levels; a desk
    /// scale stand-in for the liminf, labeled an estimate.
    pub liminf_estimate: f64,
}

/// Computes the density sequence of the subgroup generated by the
/// substituted words, acting on levels `1..=max_n`.
pub fn density_sequence(
    delta_words: &[FreeWord],
    fgens: &[Portrait],
    group: &PermGroupSpec,
    max_n: usize,
    degree_budget: usize,
) -> Result<DensitySequence> {
    let d = group.degree();
    let top_degree = d.pow(max_n as u32);
    if top_degree > degree_budget {
        return Err(Error::DegreeBudget { degree: top_degree, budget: degree_budget });
    }
    let subbed: Vec<Portrait> = delta_words
        .iter()
        .map(|w| w.substitute(fgens))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let degree = d.pow(n as u32);
        let perms: Vec<Vec<u32>> = subbed.iter().map(|g| g.level_perm(n)).collect::<Result<_>>()?;
        let ord = order(&perms, degree)?;
        let log2_order = if ord == BigUint::from(1u32) { 0.0 } else { log2_biguint(&ord) };
        let log2_wreath = log2_wreath_order(group, d, n);
        rows.push(DensityRow {
            n,
            order_digits: ord.to_string().len(),
            log2_order,
            log2_wreath,
            gamma: log2_order / log2_wreath,
        });
    }
    let tail_start = max_n.saturating_sub(3).max(1);
    let liminf_estimate = rows
        .iter()
        .filter(|r| r.n >= tail_start)
        .map(|r| r.gamma)
        .fold(f64::INFINITY, f64::min);
    Ok(DensitySequence { rows, liminf_estimate })
}

/// Portraits generating the full wreath product `W_N(H)`: for each level
/// `k < N` and each generator `h` of `H`, the portrait whose only
/// non-identity label is `h` at the leftmost level-`k` vertex.
pub fn wreath_generators(group: &PermGroupSpec, shape: TreeShape) -> Vec<Portrait> {
    let mut gens = Vec::new();
    for k in 0..shape.max_depth {
        for h in group.generators() {
            let mut labels: Vec<Vec<crate::perm::Perm>> = (0..shape.max_depth)
                .map(|lvl| vec![crate::perm::Perm::identity(shape.arity); shape.level_size(lvl)])
                .collect();
            labels[k][0] = *h;
            gens.push(
                Portrait::from_labels(shape, group, labels).expect("generator labels lie in H"),
            );
        }
    }
    gens
}
