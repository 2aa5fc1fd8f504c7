//! Schreier graphs of level actions, their covering maps, the word
//! immersion between the subgroup tower and the ambient tower, girth, and
//! edge fibers.
//!
//! The directed edge set of a level graph is literally
//! `vertices x generators x {+1, -1}`: a generator fixing a vertex keeps
//! its two signed loop directions, so every vertex has out-degree exactly
//! `2 * generators` and the adjacency conventions downstream stay exact.
//! A geometric edge is the inverse pair `{(v, i, +1), (v^gi, i, -1)}`,
//! keyed canonically by its positive-direction origin.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::portrait::Portrait;
use crate::union_find::UnionFind;
use crate::words::FreeWord;

/// The Schreier graph of a generator tuple acting on one tree level.
#[derive(Clone, Debug)]
pub struct LevelGraph {
    level: usize,
    arity: usize,
    /// Forward image tables, one per generator.
    perms: Vec<Vec<u32>>,
    /// Inverse image tables, one per generator.
    inv_perms: Vec<Vec<u32>>,
}

/// A geometric edge: the canonical positive direction `(origin, gen)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GeomEdge {
    pub gen: usize,
    pub origin: u32,
}

/// A directed edge `(origin, gen, sign)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirEdge {
    pub gen: usize,
    pub origin: u32,
    pub sign: i8,
}

impl LevelGraph {
    /// Builds the level-`n` Schreier graph of the given portraits.
    pub fn build(gens: &[Portrait], n: usize) -> Result<LevelGraph> {
        if gens.is_empty() {
            return Err(Error::InvalidInput("a level graph needs at least one generator".into()));
        }
        let arity = gens[0].shape().arity;
        let mut perms = Vec::with_capacity(gens.len());
        let mut inv_perms = Vec::with_capacity(gens.len());
        for g in gens {
            if g.shape().arity != arity {
                return Err(Error::ShapeMismatch("generators differ in arity".into()));
            }
            let forward = g.level_perm(n)?;
            let mut inverse = vec![0u32; forward.len()];
            for (v, &img) in forward.iter().enumerate() {
                inverse[img as usize] = v as u32;
            }
            perms.push(forward);
            inv_perms.push(inverse);
        }
        Ok(LevelGraph { level: n, arity, perms, inv_perms })
    }

    /// Builds a graph directly from forward permutations (used by tests
    /// and by actions that do not come from portraits).
    pub fn from_perms(level: usize, arity: usize, perms: Vec<Vec<u32>>) -> Result<LevelGraph> {
        let count = perms.first().map(|p| p.len()).unwrap_or(0);
        let mut inv_perms = Vec::with_capacity(perms.len());
        for p in &perms {
            if p.len() != count {
                return Err(Error::ShapeMismatch("permutation lengths differ".into()));
            }
            let mut seen = vec![false; count];
            let mut inverse = vec![0u32; count];
            for (v, &img) in p.iter().enumerate() {
                if img as usize >= count || seen[img as usize] {
                    return Err(Error::NonBijective { degree: count });
                }
                seen[img as usize] = true;
                inverse[img as usize] = v as u32;
            }
            inv_perms.push(inverse);
        }
        Ok(LevelGraph { level, arity, perms, inv_perms })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn vertex_count(&self) -> usize {
        self.perms[0].len()
    }

    pub fn gen_count(&self) -> usize {
        self.perms.len()
    }

    /// Degree counting signed directions: `2 * |S|`.
    pub fn degree(&self) -> usize {
        2 * self.perms.len()
    }

    #[inline]
    pub fn image(&self, v: u32, gen: usize, sign: i8) -> u32 {
        if sign > 0 {
            self.perms[gen][v as usize]
        } else {
            self.inv_perms[gen][v as usize]
        }
    }

    #[inline]
    pub fn target(&self, e: DirEdge) -> u32 {
        self.image(e.origin, e.gen, e.sign)
    }

    /// The geometric edge underlying a directed edge.
    #[inline]
    pub fn geom(&self, e: DirEdge) -> GeomEdge {
        if e.sign > 0 {
            GeomEdge { gen: e.gen, origin: e.origin }
        } else {
            GeomEdge { gen: e.gen, origin: self.target(e) }
        }
    }

    /// Endpoints of a geometric edge (origin, target of the + direction).
    pub fn endpoints(&self, e: GeomEdge) -> (u32, u32) {
        (e.origin, self.perms[e.gen][e.origin as usize])
    }

    pub fn geometric_edges(&self) -> impl Iterator<Item = GeomEdge> + '_ {
        (0..self.gen_count()).flat_map(move |gen| {
            (0..self.vertex_count() as u32).map(move |origin| GeomEdge { gen, origin })
        })
    }

    /// The `2|S|` directed edges out of `v`.
    pub fn out_edges(&self, v: u32) -> impl Iterator<Item = DirEdge> + '_ {
        (0..self.gen_count()).flat_map(move |gen| {
            [1i8, -1i8].into_iter().map(move |sign| DirEdge { gen, origin: v, sign })
        })
    }

    /// Connected components via union-find.
    pub fn components(&self) -> ComponentPartition {
        let n = self.vertex_count();
        let mut uf = UnionFind::new(n);
        for gen in 0..self.gen_count() {
            for v in 0..n as u32 {
                uf.union(v, self.perms[gen][v as usize]);
            }
        }
        ComponentPartition::from_union_find(uf)
    }

    /// Girth: the length of the shortest cycle without immediate
    /// backtracking. Loops count 1, doubled geometric edges count 2, and
    /// forests return `None`.
    pub fn girth(&self) -> Option<usize> {
        let n = self.vertex_count();
        // Loops first.
        for gen in 0..self.gen_count() {
            for v in 0..n {
                if self.perms[gen][v] as usize == v {
                    return Some(1);
                }
            }
        }
        // Parallel geometric edges give 2-cycles. Sort endpoint pairs.
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(n * self.gen_count());
        for e in self.geometric_edges() {
            let (a, b) = self.endpoints(e);
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Some(2);
        }
        // Simple graph now: BFS from every vertex, tracking the geometric
        // edge used to reach each vertex so immediate backtracking is
        // excluded. The first cross or back edge closes a shortest cycle
        // through the root.
        let mut best: Option<usize> = None;
        let mut dist = vec![u32::MAX; n];
        let mut via = vec![GeomEdge { gen: usize::MAX, origin: u32::MAX }; n];
        let mut queue: Vec<u32> = Vec::with_capacity(n);
        for start in 0..n as u32 {
            dist.iter_mut().for_each(|d| *d = u32::MAX);
            queue.clear();
            queue.push(start);
            dist[start as usize] = 0;
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                let dv = dist[v as usize] as usize;
                if let Some(b) = best {
                    // Cycles through `start` found beyond this depth cannot
                    // improve on `b`.
                    if 2 * dv + 1 >= b {
                        break;
                    }
                }
                for e in self.out_edges(v) {
                    let w = self.target(e);
                    let ge = self.geom(e);
                    if v != start && ge == via[v as usize] {
                        continue; // immediate backtrack
                    }
                    if dist[w as usize] == u32::MAX {
                        dist[w as usize] = dv as u32 + 1;
                        via[w as usize] = ge;
                        queue.push(w);
                    } else {
                        // Cycle through start of length dist[v] + dist[w] + 1.
                        let cycle = dv + dist[w as usize] as usize + 1;
                        if best.is_none_or(|b| cycle < b) {
                            best = Some(cycle);
                        }
                    }
                }
            }
        }
        best
    }

    /// Exports the edge list as CSV rows `(level, origin, target, generator, sign)`.
    pub fn edge_csv_rows(&self) -> Vec<(usize, u32, u32, usize, i8)> {
        let mut rows = Vec::new();
        for gen in 0..self.gen_count() {
            for v in 0..self.vertex_count() as u32 {
                for sign in [1i8, -1] {
                    let e = DirEdge { gen, origin: v, sign };
                    rows.push((self.level, v, self.target(e), gen, sign));
                }
            }
        }
        rows
    }
}

/// Vertex partition into connected components, ordered by smallest member.
#[derive(Clone, Debug)]
pub struct ComponentPartition {
    /// Component index per vertex.
    pub component_of: Vec<u32>,
    /// Member lists, each sorted ascending; components ordered by minimum.
    pub members: Vec<Vec<u32>>,
}

impl ComponentPartition {
    fn from_union_find(mut uf: UnionFind) -> ComponentPartition {
        let n = uf.len();
        let mut root_to_comp: Vec<u32> = vec![u32::MAX; n];
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut component_of = vec![0u32; n];
        for v in 0..n as u32 {
            let root = uf.find(v) as usize;
            if root_to_comp[root] == u32::MAX {
                root_to_comp[root] = members.len() as u32;
                members.push(Vec::new());
            }
            let c = root_to_comp[root];
            component_of[v as usize] = c;
            members[c as usize].push(v);
        }
        ComponentPartition { component_of, members }
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }
}

/// The covering map from level `n+1` to level `n`: every vertex goes to
/// its parent, and edges map label- and sign-preservingly.
pub fn covering_vertex_map(upper: &LevelGraph, lower: &LevelGraph) -> Result<Vec<u32>> {
    if upper.level != lower.level + 1 {
        return Err(Error::LevelMismatch { upper: upper.level, lower: lower.level });
    }
    if upper.gen_count() != lower.gen_count() || upper.arity != lower.arity {
        return Err(Error::ShapeMismatch("covering requires identical generator lists".into()));
    }
    let d = upper.arity as u32;
    Ok((0..upper.vertex_count() as u32).map(|v| v / d).collect())
}

/// Checks that the covering map sends edges to equally-labeled edges and
/// has fibers of size exactly `d` over every vertex.
pub fn audit_covering(upper: &LevelGraph, lower: &LevelGraph) -> Result<()> {
    let map = covering_vertex_map(upper, lower)?;
    let d = upper.arity;
    let mut fiber_sizes = vec![0usize; lower.vertex_count()];
    for (&img, _) in map.iter().zip(0..) {
        fiber_sizes[img as usize] += 1;
    }
    if fiber_sizes.iter().any(|&s| s != d) {
        return Err(Error::InvalidInput("covering fiber is not d-to-1".into()));
    }
    for gen in 0..upper.gen_count() {
        for v in 0..upper.vertex_count() as u32 {
            for sign in [1i8, -1] {
                let e = DirEdge { gen, origin: v, sign };
                let projected_target = map[upper.target(e) as usize];
                let lower_target = lower.image(map[v as usize], gen, sign);
                if projected_target != lower_target {
                    return Err(Error::InvalidInput(format!(
                        "edge ({v}, gen {gen}, sign {sign}) does not project label-preservingly"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// The immersion from a subgroup level graph `Y` into the ambient graph
/// `X`: each `Y`-edge labeled by the word `w_i` maps to the length-`l_i`
/// directed path in `X` traced by the letters of `w_i`.
#[derive(Clone, Debug)]
pub struct Immersion {
    words: Vec<FreeWord>,
    /// `paths[j][v]`: X-edge path of the positive Y-edge `(v, j)`.
    paths: Vec<Vec<Vec<DirEdge>>>,
    /// For each X geometric edge (indexed `gen * V + origin`), the sorted
    /// list of Y geometric edges whose path traverses it.
    traversed_by: Vec<Vec<GeomEdge>>,
    x_vertex_count: usize,
}

impl Immersion {
    /// Builds the immersion at the level of `x`; `words` are the subgroup
    /// generators written in the generators of `x`.
    pub fn build(x: &LevelGraph, words: &[FreeWord]) -> Result<Immersion> {
        for w in words {
            if w.rank() != x.gen_count() {
                return Err(Error::RankMismatch { word_rank: w.rank(), gens: x.gen_count() });
            }
        }
        let v_count = x.vertex_count();
        let mut paths = Vec::with_capacity(words.len());
        let mut traversed_by: Vec<Vec<GeomEdge>> = vec![Vec::new(); x.gen_count() * v_count];
        for w in words {
            let mut word_paths = Vec::with_capacity(v_count);
            for v in 0..v_count as u32 {
                let mut path = Vec::with_capacity(w.len());
                let mut cur = v;
                for letter in w.letters() {
                    let e = DirEdge { gen: letter.gen, origin: cur, sign: letter.sign };
                    cur = x.target(e);
                    path.push(e);
                }
                word_paths.push(path);
            }
            paths.push(word_paths);
        }
        for (j, word_paths) in paths.iter().enumerate() {
            for (v, path) in word_paths.iter().enumerate() {
                let mut seen: BTreeSet<GeomEdge> = BTreeSet::new();
                for &e in path {
                    let ge = x.geom(e);
                    if seen.insert(ge) {
                        traversed_by[ge.gen * v_count + ge.origin as usize]
                            .push(GeomEdge { gen: j, origin: v as u32 });
                    }
                }
            }
        }
        Ok(Immersion { words: words.to_vec(), paths, traversed_by, x_vertex_count: v_count })
    }

    pub fn words(&self) -> &[FreeWord] {
        &self.words
    }

    /// The X-path of a positive-direction Y-edge.
    pub fn path(&self, y_edge: GeomEdge) -> &[DirEdge] {
        &self.paths[y_edge.gen][y_edge.origin as usize]
    }

    /// The X-path of an arbitrary directed Y-edge; negative edges walk the
    /// positive path backwards with flipped signs.
    pub fn dir_path(&self, x: &LevelGraph, e: DirEdge) -> Vec<DirEdge> {
        if e.sign > 0 {
            self.path(GeomEdge { gen: e.gen, origin: e.origin }).to_vec()
        } else {
            // origin of the underlying positive edge
            let y_graph_origin = e.origin;
            let mut cur = y_graph_origin;
            // walk the inverse word from e.origin
            let w = self.words[e.gen].inverse();
            let mut path = Vec::with_capacity(w.len());
            for letter in w.letters() {
                let edge = DirEdge { gen: letter.gen, origin: cur, sign: letter.sign };
                cur = x.target(edge);
                path.push(edge);
            }
            path
        }
    }

    /// `zeta(E)`: all Y geometric edges whose path traverses any edge of
    /// `E`, in either direction.
    pub fn zeta(&self, edges: &BTreeSet<GeomEdge>) -> BTreeSet<GeomEdge> {
        let mut out = BTreeSet::new();
        for e in edges {
            for y in &self.traversed_by[e.gen * self.x_vertex_count + e.origin as usize] {
                out.insert(*y);
            }
        }
        out
    }

    /// Whether the path of the given Y-edge repeats a geometric X-edge.
    pub fn path_repeats_edge(&self, x: &LevelGraph, y_edge: GeomEdge) -> bool {
        let path = self.path(y_edge);
        let mut seen = BTreeSet::new();
        path.iter().any(|&e| !seen.insert(x.geom(e)))
    }

    /// Whether the path of the given Y-edge visits a vertex twice.
    pub fn path_repeats_vertex(&self, x: &LevelGraph, y_edge: GeomEdge) -> bool {
        let path = self.path(y_edge);
        if path.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::new();
        seen.insert(y_edge.origin);
        path.iter().any(|&e| !seen.insert(x.target(e)))
    }
}
