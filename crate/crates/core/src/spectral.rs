//! Adjacency spectra of level graphs, signed adjacency matrices of
//! 2-lifts, exact and spectral-bound Cheeger constants, and expander
//! scans over towers.
//!
//! Adjacency conventions follow the literal edge set of the level graphs:
//! `A[u][w]` counts signed directed edges from `u` to `w`, so a loop
//! contributes 2 to its diagonal entry and every row sums to the degree
//! `2|S|`. The lift analysis is restricted to arity 2, where the spectrum
//! of the level `n+1` graph is exactly the multiset union of the level
//! `n` spectrum and the spectrum of the signed matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::perm::PermGroupSpec;
use crate::portrait::Portrait;
use crate::schreier::LevelGraph;
use crate::seed::derive_rng;
use crate::tree::TreeShape;
use crate::words::FreeWord;

/// Dense eigensolver budget (vertices); larger components use the
/// iterative extremal mode.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;
/// Exact Cheeger enumeration budget (vertices).
pub const DEFAULT_EXACT_CHEEGER_BUDGET: usize = 24;

/// Real spectrum of one symmetric matrix, sorted descending.
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn of_matrix(m: &DMatrix<f64>) -> Spectrum {
        let eigen = SymmetricEigen::new(m.clone());
        let mut eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Spectrum { eigenvalues }
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda2(&self) -> Option<f64> {
        self.eigenvalues.get(1).copied()
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Multiset equality against another spectrum within `tol` per entry.
    pub fn multiset_eq(&self, other: &Spectrum, tol: f64) -> bool {
        self.eigenvalues.len() == other.eigenvalues.len()
            && self
                .eigenvalues
                .iter()
                .zip(&other.eigenvalues)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Sorted multiset union.
    pub fn union(&self, other: &Spectrum) -> Spectrum {
        let mut eigenvalues: Vec<f64> =
            self.eigenvalues.iter().chain(&other.eigenvalues).copied().collect();
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Spectrum { eigenvalues }
    }
}

/// Adjacency matrix of the subgraph induced on `vertices` (commonly one
/// component).
pub fn component_adjacency(g: &LevelGraph, vertices: &[u32]) -> DMatrix<f64> {
    let n = vertices.len();
    let mut index = vec![usize::MAX; g.vertex_count()];
    for (i, &v) in vertices.iter().enumerate() {
        index[v as usize] = i;
    }
    let mut a = DMatrix::zeros(n, n);
    for &v in vertices {
        let vi = index[v as usize];
        for e in g.out_edges(v) {
            let w = g.target(e);
            let wi = index[w as usize];
            if wi != usize::MAX {
                a[(vi, wi)] += 1.0;
            }
        }
    }
    a
}

/// Full adjacency matrix of the level graph.
pub fn adjacency(g: &LevelGraph) -> DMatrix<f64> {
    let all: Vec<u32> = (0..g.vertex_count() as u32).collect();
    component_adjacency(g, &all)
}

/// Dense spectrum of the subgraph induced on `vertices`.
pub fn spectrum(g: &LevelGraph, vertices: &[u32], dense_budget: usize) -> Result<Spectrum> {
    if vertices.len() > dense_budget {
        return Err(Error::SpectralBudget { size: vertices.len(), budget: dense_budget });
    }
    Ok(Spectrum::of_matrix(&component_adjacency(g, vertices)))
}

/// The signed adjacency matrix of the 2-lift `upper -> lower`: each
/// geometric edge of `lower` carries the sign of the 1-local cocycle
/// across it (identity label +1, swap -1), read off from how `upper`
/// permutes the vertex fibers. A signed loop contributes its sign twice
/// to the diagonal.
pub fn signed_adjacency(lower: &LevelGraph, upper: &LevelGraph) -> Result<DMatrix<f64>> {
    if lower.arity() != 2 || upper.arity() != 2 {
        return Err(Error::NotATwoLift("lift analysis requires arity 2".into()));
    }
    if upper.level() != lower.level() + 1 {
        return Err(Error::LevelMismatch { upper: upper.level(), lower: lower.level() });
    }
    if upper.gen_count() != lower.gen_count() {
        return Err(Error::NotATwoLift("generator counts differ".into()));
    }
    let n = lower.vertex_count();
    if upper.vertex_count() != 2 * n {
        return Err(Error::NotATwoLift("upper vertex count is not twice the lower".into()));
    }
    let mut a = DMatrix::zeros(n, n);
    for gen in 0..lower.gen_count() {
        for v in 0..n as u32 {
            let w = lower.image(v, gen, 1);
            let up0 = upper.image(2 * v, gen, 1);
            let up1 = upper.image(2 * v + 1, gen, 1);
            if up0 / 2 != w || up1 / 2 != w || up0 == up1 {
                return Err(Error::NotATwoLift(format!(
                    "generator {gen} does not project over vertex {v}"
                )));
            }
            let sign = if up0 % 2 == 0 { 1.0 } else { -1.0 };
            a[(v as usize, w as usize)] += sign;
            a[(w as usize, v as usize)] += sign;
        }
    }
    Ok(a)
}

/// Spectrum of the signed matrix: exactly the eigenvalues new to the
/// cover. The multiset union with the lower spectrum reproduces the upper
/// spectrum.
pub fn new_eigenvalues(lower: &LevelGraph, upper: &LevelGraph, dense_budget: usize) -> Result<Spectrum> {
    if lower.vertex_count() > dense_budget {
        return Err(Error::SpectralBudget { size: lower.vertex_count(), budget: dense_budget });
    }
    Ok(Spectrum::of_matrix(&signed_adjacency(lower, upper)?))
}

/// Cheeger data for one connected component.
#[derive(Clone, Debug, Serialize)]
pub struct CheegerReport {
    /// Exact constant, when the component fits the enumeration budget.
    pub exact: Option<f64>,
    /// Spectral lower bound `(deg - lambda2) / 2`.
    pub lower: f64,
    /// Spectral upper bound `sqrt(2 deg (deg - lambda2))`.
    pub upper: f64,
    /// Witness cut for the exact value (vertex ids of the smaller side).
    pub witness: Option<Vec<u32>>,
}

/// Exact Cheeger constant of the subgraph induced on `vertices`, by
/// enumerating all cuts. Disconnected inputs report 0 with the empty cut.
/// Multiplicities count: parallel geometric edges cross a cut separately,
/// loops never cross.
pub fn cheeger_exact(g: &LevelGraph, vertices: &[u32], budget: usize) -> Result<(f64, Vec<u32>)> {
    let n = vertices.len();
    if n < 2 {
        return Err(Error::ComponentTooSmall { size: n });
    }
    if n > budget {
        return Err(Error::CheegerBudget { size: n, budget });
    }
    let mut index = vec![usize::MAX; g.vertex_count()];
    for (i, &v) in vertices.iter().enumerate() {
        index[v as usize] = i;
    }
    // Geometric edges inside the induced subgraph, as index pairs.
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for &v in vertices {
        for gen in 0..g.gen_count() {
            let w = g.image(v, gen, 1);
            let wi = index[w as usize];
            if wi != usize::MAX && w != v {
                edges.push((index[v as usize] as u32, wi as u32));
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut best_mask: u64 = 0;
    // Vertex 0 stays on side zero; masks enumerate the rest.
    for half_mask in 1..(1u64 << (n - 1)) {
        let mask = half_mask << 1;
        let size_a = mask.count_ones() as usize;
        let mut cut = 0u32;
        for &(a, b) in &edges {
            cut += (((mask >> a) ^ (mask >> b)) & 1) as u32;
        }
        let h = cut as f64 / size_a.min(n - size_a) as f64;
        if h < best {
            best = h;
            best_mask = mask;
        }
    }
    let side: Vec<u32> = (0..n)
        .filter(|&i| (best_mask >> i) & 1 == 1)
        .map(|i| vertices[i])
        .collect();
    let witness = if side.len() * 2 <= n {
        side
    } else {
        (0..n).filter(|&i| (best_mask >> i) & 1 == 0).map(|i| vertices[i]).collect()
    };
    Ok((best, witness))
}

/// Combined Cheeger report for one connected component: spectral sandwich
/// bounds from `lambda2`, and the exact constant when within budget.
pub fn cheeger_report(
    g: &LevelGraph,
    component: &[u32],
    dense_budget: usize,
    exact_budget: usize,
) -> Result<CheegerReport> {
    let deg = g.degree() as f64;
    let (lambda2, _) = extremal_pair(g, component, dense_budget)?;
    let gap = deg - lambda2;
    let lower = gap / 2.0;
    let upper = (2.0 * deg * gap).sqrt();
    let (exact, witness) = match cheeger_exact(g, component, exact_budget) {
        Ok((h, w)) => (Some(h), Some(w)),
        Err(Error::CheegerBudget { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(CheegerReport { exact, lower, upper, witness })
}

/// `(lambda2, lambda_min)` of a connected component: dense within budget,
/// Lanczos above it.
fn extremal_pair(g: &LevelGraph, component: &[u32], dense_budget: usize) -> Result<(f64, f64)> {
    if component.len() < 2 {
        return Err(Error::ComponentTooSmall { size: component.len() });
    }
    if component.len() <= dense_budget {
        let s = Spectrum::of_matrix(&component_adjacency(g, component));
        return Ok((s.lambda2().unwrap(), s.lambda_min()));
    }
    lanczos_extremal(g, component)
}

/// Lanczos with full reorthogonalization on the orthogonal complement of
/// the constant vector: for a connected regular component the Perron
/// eigenvector is constant, so the top Ritz value converges to `lambda2`
/// and the bottom one to `lambda_min`.
fn lanczos_extremal(g: &LevelGraph, component: &[u32]) -> Result<(f64, f64)> {
    let n = component.len();
    let mut index = vec![usize::MAX; g.vertex_count()];
    for (i, &v) in component.iter().enumerate() {
        index[v as usize] = i;
    }
    let matvec = |x: &DVector<f64>, out: &mut DVector<f64>| {
        out.fill(0.0);
        for (i, &v) in component.iter().enumerate() {
            for e in g.out_edges(v) {
                let w = index[g.target(e) as usize];
                out[w] += x[i];
            }
        }
    };
    let max_iters = 160.min(n - 1).max(1);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_iters);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut rng = derive_rng(0x4c41_4e43, n as u64, 11);
    use rand::Rng;
    let mut q = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    q -= &ones * ones.dot(&q);
    q /= q.norm();

    let mut av = DVector::zeros(n);
    let mut last = (f64::NAN, f64::NAN);
    for it in 0..max_iters {
        matvec(&q, &mut av);
        let alpha = q.dot(&av);
        alphas.push(alpha);
        av -= &q * alpha;
        if it > 0 {
            av -= &basis[it - 1] * betas[it - 1];
        }
        // Full reorthogonalization against the constant and the basis.
        av -= &ones * ones.dot(&av);
        for b in &basis {
            av -= b * b.dot(&av);
        }
        av -= &q * q.dot(&av);
        basis.push(q.clone());
        let (lo, hi) = tridiagonal_extremes(&alphas, &betas);
        if it > 8 && (lo - last.0).abs() < 1e-10 && (hi - last.1).abs() < 1e-10 {
            return Ok((hi, lo));
        }
        last = (lo, hi);
        let beta = av.norm();
        if beta < 1e-12 {
            break;
        }
        betas.push(beta);
        q = &av / beta;
    }
    let (lo, hi) = tridiagonal_extremes(&alphas, &betas);
    Ok((hi, lo))
}

/// Extreme eigenvalues of the symmetric tridiagonal Lanczos matrix.
fn tridiagonal_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let s = Spectrum::of_matrix(&t);
    (s.lambda_min(), s.lambda1())
}

/// One component row of an expander scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub seed: u64,
    pub level: usize,
    pub component: usize,
    pub size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub h_lower: f64,
    pub h_exact: Option<f64>,
    pub h_upper: f64,
    /// Normalized gap `(deg - lambda2) / deg`.
    pub normalized_gap: f64,
}

/// Scan output: per-component rows plus tower summaries.
#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Per seed, the minimum normalized gap over all scanned components.
    pub min_gap_per_seed: Vec<(u64, f64)>,
    /// Largest |new eigenvalue| across lift steps divided by
    /// `sqrt(2m log2^3(2m))`: the envelope constant fitted on the data
    /// rather than asserted.
    pub fitted_envelope_c: f64,
    /// Count of new eigenvalues beyond the envelope at C = 10.
    pub envelope_violations_at_c10: usize,
}

#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub arity: usize,
    pub rank: usize,
    pub max_level: usize,
    pub dense_budget: usize,
    pub exact_budget: usize,
}

/// Scans towers of Schreier graphs for spectral gaps: per seed, samples
/// `rank` Haar generators, builds levels `1..=max_level`, and reports
/// every component with at least two vertices (a single vertex has no
/// second eigenvalue).
pub fn expander_scan(group: &PermGroupSpec, config: &ScanConfig, seeds: &[u64]) -> Result<ScanReport> {
    use rayon::prelude::*;
    let per_seed: Vec<Result<(Vec<ScanRow>, Vec<f64>)>> = seeds
        .par_iter()
        .map(|&seed| scan_one_seed(group, config, seed))
        .collect();
    let mut rows = Vec::new();
    let mut min_gap_per_seed = Vec::new();
    let mut max_ratio = 0.0f64;
    let mut violations = 0usize;
    let envelope_unit = envelope_scale(config.rank);
    for (&seed, result) in seeds.iter().zip(per_seed) {
        let (seed_rows, new_eigs) = result?;
        let min_gap = seed_rows
            .iter()
            .map(|r| r.normalized_gap)
            .fold(f64::INFINITY, f64::min);
        min_gap_per_seed.push((seed, min_gap));
        for x in new_eigs {
            let ratio = x.abs() / envelope_unit;
            max_ratio = max_ratio.max(ratio);
            if x.abs() > 10.0 * envelope_unit {
                violations += 1;
            }
        }
        rows.extend(seed_rows);
    }
    Ok(ScanReport {
        rows,
        min_gap_per_seed,
        fitted_envelope_c: max_ratio,
        envelope_violations_at_c10: violations,
    })
}

/// `sqrt(2m log2^3(2m))`, the envelope unit for rank `m`.
pub fn envelope_scale(rank: usize) -> f64 {
    let r = 2.0 * rank as f64;
    (r * r.log2().powi(3)).sqrt()
}

fn scan_one_seed(
    group: &PermGroupSpec,
    config: &ScanConfig,
    seed: u64,
) -> Result<(Vec<ScanRow>, Vec<f64>)> {
    let shape = TreeShape::new(config.arity, config.max_level)?;
    let mut rng = derive_rng(seed, 0, crate::seed::STREAM_PORTRAITS);
    let gens: Vec<Portrait> =
        (0..config.rank).map(|_| Portrait::sample_haar(group, shape, &mut rng)).collect();
    let mut rows = Vec::new();
    let mut new_eigs = Vec::new();
    let mut prev_graph: Option<LevelGraph> = None;
    for level in 1..=config.max_level {
        let g = LevelGraph::build(&gens, level)?;
        let comps = g.components();
        let deg = g.degree() as f64;
        for (ci, members) in comps.members.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let (lambda1, lambda2, lambda_min, h_exact) = if members.len() <= config.dense_budget {
                let s = spectrum(&g, members, config.dense_budget)?;
                let h_exact = match cheeger_exact(&g, members, config.exact_budget) {
                    Ok((h, _)) => Some(h),
                    Err(Error::CheegerBudget { .. }) => None,
                    Err(e) => return Err(e),
                };
                (s.lambda1(), s.lambda2().unwrap(), s.lambda_min(), h_exact)
            } else {
                let (l2, lmin) = extremal_pair(&g, members, config.dense_budget)?;
                (deg, l2, lmin, None)
            };
            rows.push(ScanRow {
                seed,
                level,
                component: ci,
                size: members.len(),
                lambda1,
                lambda2,
                lambda_min,
                h_lower: (deg - lambda2) / 2.0,
                h_exact,
                h_upper: (2.0 * deg * (deg - lambda2)).sqrt(),
                normalized_gap: (deg - lambda2) / deg,
            });
        }
        if config.arity == 2 {
            if let Some(prev) = &prev_graph {
                if prev.vertex_count() <= config.dense_budget {
                    let news = new_eigenvalues(prev, &g, config.dense_budget)?;
                    new_eigs.extend(news.eigenvalues);
                }
            }
        }
        prev_graph = Some(g);
    }
    Ok((rows, new_eigs))
}

/// Ratio report for the generator-comparison bound `h(Z) <= C h(Y)` with
/// `C = 2 |V| max|v|`.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorComparison {
    pub h_y: f64,
    pub h_z: f64,
    pub constant: f64,
    pub ratio: f64,
    pub bound_holds: bool,
}

/// Compares the Cheeger constants of the Schreier graphs of a group and a
/// subgroup whose generators are written as words in the group's
/// generators, on one level. Both graphs must fit the exact budget.
pub fn cheeger_generator_comparison(
    delta_words: &[FreeWord],
    sub_words: &[FreeWord],
    fgens: &[Portrait],
    level: usize,
    exact_budget: usize,
) -> Result<GeneratorComparison> {
    let delta_gens: Vec<Portrait> = delta_words
        .iter()
        .map(|w| w.substitute(fgens))
        .collect::<Result<_>>()?;
    let sub_gens: Vec<Portrait> = sub_words
        .iter()
        .map(|w| w.substitute(&delta_gens))
        .collect::<Result<_>>()?;
    let y = LevelGraph::build(&delta_gens, level)?;
    let z = LevelGraph::build(&sub_gens, level)?;
    let all: Vec<u32> = (0..y.vertex_count() as u32).collect();
    let (h_y, _) = cheeger_exact(&y, &all, exact_budget)?;
    let (h_z, _) = cheeger_exact(&z, &all, exact_budget)?;
    let max_len = sub_words.iter().map(FreeWord::len).max().unwrap_or(0);
    let constant = 2.0 * sub_words.len() as f64 * max_len as f64;
    let ratio = if h_y > 0.0 { h_z / h_y } else { f64::INFINITY };
    let bound_holds = h_z <= constant * h_y + 1e-12 || (h_z == 0.0 && h_y == 0.0);
    Ok(GeneratorComparison { h_y, h_z, constant, ratio, bound_holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn haar_gens(m: usize, d: usize, depth: usize, seed: u64) -> Vec<Portrait> {
        let group = PermGroupSpec::symmetric(d).unwrap();
        let shape = TreeShape::new(d, depth).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..m).map(|_| Portrait::sample_haar(&group, shape, &mut rng)).collect()
    }

    fn four_cycle() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[0., 1., 0., 1., 1., 0., 1., 0., 0., 1., 0., 1., 1., 0., 1., 0.],
        )
    }

    #[test]
    fn four_cycle_spectrum() {
        let s = Spectrum::of_matrix(&four_cycle());
        let expected = [2.0, 0.0, 0.0, -2.0];
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn complete_graph_spectrum() {
        let mut k4 = DMatrix::from_element(4, 4, 1.0);
        k4.fill_diagonal(0.0);
        let s = Spectrum::of_matrix(&k4);
        let expected = [3.0, -1.0, -1.0, -1.0];
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    /// Characteristic polynomial oracle: Faddeev-LeVerrier coefficients,
    /// evaluated at each computed eigenvalue.
    fn char_poly_coeffs(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut c = 1.0;
        for k in 1..=n {
            m = a * &m + DMatrix::identity(n, n) * c;
            let am = a * &m;
            c = -am.trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    #[test]
    fn random_level_spectrum_matches_char_poly_oracle() {
        let gens = haar_gens(2, 2, 4, 9);
        let g = LevelGraph::build(&gens, 3).unwrap();
        let a = adjacency(&g);
        let all: Vec<u32> = (0..8).collect();
        let s = spectrum(&g, &all, 4096).unwrap();
        let coeffs = char_poly_coeffs(&a);
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
        for &lambda in &s.eigenvalues {
            let mut value = 0.0;
            for &c in &coeffs {
                value = value * lambda + c;
            }
            assert!(value.abs() < 1e-6 * scale.max(1.0), "p({lambda}) = {value}");
        }
        // Power sums against traces.
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum - a.trace()).abs() < 1e-8);
        let a2 = &a * &a;
        let sum2: f64 = s.eigenvalues.iter().map(|l| l * l).sum();
        assert!((sum2 - a2.trace()).abs() < 1e-7);
    }

    #[test]
    fn row_sums_equal_degree() {
        let gens = haar_gens(3, 2, 4, 10);
        let g = LevelGraph::build(&gens, 4).unwrap();
        let a = adjacency(&g);
        for i in 0..a.nrows() {
            let row_sum: f64 = a.row(i).iter().sum();
            assert_eq!(row_sum, g.degree() as f64);
        }
    }

    #[test]
    fn trivial_and_negated_lifts() {
        let group = PermGroupSpec::cyclic(2).unwrap();
        let shape = TreeShape::new(2, 3).unwrap();
        let n = 2;
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        // Portraits with identity labels at level n: all lift signs +1.
        let mut gens = Vec::new();
        for _ in 0..2 {
            let mut labels: Vec<Vec<crate::perm::Perm>> = (0..3)
                .map(|k| {
                    (0..shape.level_size(k))
                        .map(|_| group.sample_uniform(&mut rng))
                        .collect()
                })
                .collect();
            for label in labels[n].iter_mut() {
                *label = crate::perm::Perm::identity(2);
            }
            gens.push(Portrait::from_labels(shape, &group, labels).unwrap());
        }
        let lower = LevelGraph::build(&gens, n).unwrap();
        let upper = LevelGraph::build(&gens, n + 1).unwrap();
        let signed = signed_adjacency(&lower, &upper).unwrap();
        assert_eq!(signed, adjacency(&lower));

        // All swaps at level n: every sign -1, the signed matrix negates.
        let mut gens_neg = Vec::new();
        for g in &gens {
            let mut labels: Vec<Vec<crate::perm::Perm>> = (0..3)
                .map(|k| {
                    (0..shape.level_size(k))
                        .map(|c| *g.label(crate::tree::VertexId::new(k, c)))
                        .collect()
                })
                .collect();
            for label in labels[n].iter_mut() {
                *label = crate::perm::Perm::transposition(2, 0, 1);
            }
            gens_neg.push(Portrait::from_labels(shape, &group, labels).unwrap());
        }
        let lower_neg = LevelGraph::build(&gens_neg, n).unwrap();
        let upper_neg = LevelGraph::build(&gens_neg, n + 1).unwrap();
        let signed_neg = signed_adjacency(&lower_neg, &upper_neg).unwrap();
        assert_eq!(signed_neg, -adjacency(&lower_neg));
    }

    #[test]
    fn lift_decomposition_multiset_identity() {
        for seed in 0..6u64 {
            let gens = haar_gens(3, 2, 7, 600 + seed);
            for n in 0..6 {
                let lower = LevelGraph::build(&gens, n).unwrap();
                let upper = LevelGraph::build(&gens, n + 1).unwrap();
                let lower_spec = Spectrum::of_matrix(&adjacency(&lower));
                let upper_spec = Spectrum::of_matrix(&adjacency(&upper));
                let news = new_eigenvalues(&lower, &upper, 4096).unwrap();
                let union = lower_spec.union(&news);
                assert!(
                    union.multiset_eq(&upper_spec, 1e-9),
                    "decomposition failed at seed {seed}, level {n}"
                );
            }
        }
    }

    #[test]
    fn covering_spectrum_monotonicity() {
        // Every lower eigenvalue appears in the upper spectrum: implied by
        // the decomposition, checked directly by multiset containment.
        let gens = haar_gens(2, 2, 6, 33);
        for n in 1..5 {
            let lower = LevelGraph::build(&gens, n).unwrap();
            let upper = LevelGraph::build(&gens, n + 1).unwrap();
            let mut lo = Spectrum::of_matrix(&adjacency(&lower)).eigenvalues;
            let mut hi = Spectrum::of_matrix(&adjacency(&upper)).eigenvalues;
            lo.sort_by(|a, b| a.partial_cmp(b).unwrap());
            hi.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut i = 0;
            for x in hi {
                if i < lo.len() && (x - lo[i]).abs() < 1e-8 {
                    i += 1;
                }
            }
            assert_eq!(i, lo.len(), "lower spectrum not contained at level {n}");
        }
    }

    #[test]
    fn lift_rejects_mismatched_graphs() {
        let gens = haar_gens(2, 2, 4, 41);
        let lower_wrong_level = LevelGraph::build(&gens, 1).unwrap();
        let upper = LevelGraph::build(&gens, 3).unwrap();
        assert!(signed_adjacency(&lower_wrong_level, &upper).is_err());
        let d3 = {
            let group = PermGroupSpec::symmetric(3).unwrap();
            let shape = TreeShape::new(3, 2).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            vec![Portrait::sample_haar(&group, shape, &mut rng)]
        };
        let l3 = LevelGraph::build(&d3, 1).unwrap();
        let u3 = LevelGraph::build(&d3, 2).unwrap();
        assert!(matches!(signed_adjacency(&l3, &u3), Err(Error::NotATwoLift(_))));
    }

    #[test]
    fn cheeger_exact_examples() {
        // 4-cycle via a single cyclic generator: adjacent pairs give 2/2.
        let perm: Vec<u32> = vec![1, 2, 3, 0];
        let g = LevelGraph::from_perms(2, 2, vec![perm]).unwrap();
        let all: Vec<u32> = (0..4).collect();
        let (h, witness) = cheeger_exact(&g, &all, 24).unwrap();
        assert_eq!(h, 1.0);
        assert_eq!(witness.len(), 2);

        // Disconnected input: cut between the components is empty.
        let two_cycles: Vec<u32> = vec![1, 0, 3, 2];
        let g2 = LevelGraph::from_perms(2, 2, vec![two_cycles]).unwrap();
        let (h2, _) = cheeger_exact(&g2, &all, 24).unwrap();
        assert_eq!(h2, 0.0);

        assert!(matches!(cheeger_exact(&g, &all, 3), Err(Error::CheegerBudget { .. })));
        assert!(matches!(cheeger_exact(&g, &all[..1], 24), Err(Error::ComponentTooSmall { .. })));
    }

    #[test]
    fn cheeger_sandwich_on_random_components() {
        for seed in 0..5u64 {
            let gens = haar_gens(2, 2, 4, 700 + seed);
            let g = LevelGraph::build(&gens, 4).unwrap();
            let comps = g.components();
            for members in &comps.members {
                if members.len() < 2 || members.len() > 16 {
                    continue;
                }
                let report = cheeger_report(&g, members, 4096, 24).unwrap();
                let h = report.exact.unwrap();
                assert!(
                    report.lower <= h + 1e-9 && h <= report.upper + 1e-9,
                    "sandwich violated: {} <= {} <= {}",
                    report.lower,
                    h,
                    report.upper
                );
            }
        }
    }

    #[test]
    fn lanczos_matches_dense_on_midsize_graph() {
        let gens = haar_gens(3, 2, 9, 77);
        let g = LevelGraph::build(&gens, 9).unwrap();
        let comps = g.components();
        let members = comps.members.iter().max_by_key(|m| m.len()).unwrap();
        assert!(members.len() >= 64, "expected a sizable component");
        let dense = Spectrum::of_matrix(&component_adjacency(&g, members));
        let (l2, lmin) = lanczos_extremal(&g, members).unwrap();
        assert!(
            (l2 - dense.lambda2().unwrap()).abs() < 1e-7,
            "lambda2 {l2} vs {}",
            dense.lambda2().unwrap()
        );
        assert!(
            (lmin - dense.lambda_min()).abs() < 1e-7,
            "lambda_min {lmin} vs {}",
            dense.lambda_min()
        );
    }

    #[test]
    fn single_generator_scan_reports_vanishing_gap() {
        // Components of a single generator are cycles, whose gap decays
        // with the cycle length; deep enough towers grow long cycles.
        let group = PermGroupSpec::cyclic(2).unwrap();
        let config =
            ScanConfig { arity: 2, rank: 1, max_level: 10, dense_budget: 4096, exact_budget: 20 };
        let report = expander_scan(&group, &config, &[4, 5, 6]).unwrap();
        let min_gap = report
            .min_gap_per_seed
            .iter()
            .map(|&(_, g)| g)
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap < 0.05, "cycle gaps must vanish, got {min_gap}");
    }

    #[test]
    fn scan_on_three_generators_keeps_positive_gap() {
        let group = PermGroupSpec::cyclic(2).unwrap();
        let config =
            ScanConfig { arity: 2, rank: 3, max_level: 6, dense_budget: 4096, exact_budget: 20 };
        let report = expander_scan(&group, &config, &[1, 2]).unwrap();
        for &(seed, gap) in &report.min_gap_per_seed {
            assert!(gap > 0.05, "seed {seed} gap {gap}");
        }
        assert_eq!(report.envelope_violations_at_c10, 0);
    }

    #[test]
    fn generator_comparison_same_set_and_doubled_set() {
        let gens = haar_gens(2, 2, 4, 55);
        let delta = vec![FreeWord::parse("x1", 2).unwrap(), FreeWord::parse("x2", 2).unwrap()];
        let same = vec![FreeWord::parse("x1", 2).unwrap(), FreeWord::parse("x2", 2).unwrap()];
        let report = cheeger_generator_comparison(&delta, &same, &gens, 4, 24).unwrap();
        assert!(report.bound_holds);
        assert!((report.h_y - report.h_z).abs() < 1e-12);

        // Doubled generator set: every edge duplicated, h doubles exactly.
        let doubled = vec![
            FreeWord::parse("x1", 2).unwrap(),
            FreeWord::parse("x2", 2).unwrap(),
            FreeWord::parse("x1", 2).unwrap(),
            FreeWord::parse("x2", 2).unwrap(),
        ];
        let report2 = cheeger_generator_comparison(&delta, &doubled, &gens, 4, 24).unwrap();
        if report2.h_y > 0.0 {
            assert!((report2.h_z - 2.0 * report2.h_y).abs() < 1e-9);
        }
        assert!(report2.bound_holds);
    }

    #[test]
    fn expanding_classification_survives_generator_change() {
        // Two generating sets of the same group give mutually bounded
        // Cheeger constants, so one vanishes iff the other does.
        let gens = haar_gens(2, 2, 5, 58);
        let set_a = vec![FreeWord::parse("x1", 2).unwrap(), FreeWord::parse("x2", 2).unwrap()];
        let set_b = vec![FreeWord::parse("x1", 2).unwrap(), FreeWord::parse("x1 x2", 2).unwrap()];
        for level in 2..=4usize {
            let fwd = cheeger_generator_comparison(&set_a, &set_b, &gens, level, 24).unwrap();
            assert!(fwd.bound_holds, "level {level}: h_z > C h_y");
            // set_b generates the same subgroup, so connectivity and the
            // zero/nonzero classification agree.
            assert_eq!(fwd.h_y == 0.0, fwd.h_z == 0.0, "level {level}");
            if fwd.h_y > 0.0 {
                assert!(fwd.h_z > 0.0 && fwd.h_z <= fwd.constant * fwd.h_y + 1e-12);
            }
        }
    }

    #[test]
    fn generator_comparison_on_longer_words() {
        let gens = haar_gens(2, 2, 4, 56);
        let delta = vec![FreeWord::parse("x1", 2).unwrap(), FreeWord::parse("x2", 2).unwrap()];
        let sub = vec![
            FreeWord::parse("x1 x2", 2).unwrap(),
            FreeWord::parse("x2 x1 x1", 2).unwrap(),
            FreeWord::parse("x1 x1", 2).unwrap(),
        ];
        let report = cheeger_generator_comparison(&delta, &sub, &gens, 4, 24).unwrap();
        assert!(
            report.bound_holds,
            "h_z = {}, C h_y = {}",
            report.h_z,
            report.constant * report.h_y
        );
    }
}
