//! Chi-square goodness-of-fit machinery and the exact product-uniformity
//! check behind the resolution pipeline.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Chi-square statistic and p-value of observed counts against uniform
/// cell probabilities. Degrees of freedom are `cells - 1`.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    assert!(k >= 2, "need at least two cells");
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            diff * diff / expected
        })
        .sum();
    (stat, chi_square_p_value(stat, (k - 1) as f64))
}

/// Upper-tail p-value of a chi-square statistic.
pub fn chi_square_p_value(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat)).max(0.0)
}

/// A finite group given by its multiplication table, for exhausting the
/// product-uniformity statement on small explicit groups.
#[derive(Clone, Debug)]
pub struct FiniteGroup {
    pub name: String,
    /// `table[a][b]` = index of `a * b`.
    pub table: Vec<Vec<usize>>,
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.table.len()
    }

    /// Builds the group generated by permutations of `0..degree`, with
    /// elements indexed in enumeration order.
    pub fn from_permutations(name: &str, degree: usize, gens: &[Vec<usize>]) -> FiniteGroup {
        let identity: Vec<usize> = (0..degree).collect();
        let mut elements: Vec<Vec<usize>> = vec![identity];
        let mut frontier = vec![0usize];
        while let Some(i) = frontier.pop() {
            for g in gens {
                let prod: Vec<usize> = elements[i].iter().map(|&x| g[x]).collect();
                if !elements.contains(&prod) {
                    elements.push(prod);
                    frontier.push(elements.len() - 1);
                }
            }
        }
        elements.sort();
        let n = elements.len();
        let mut table = vec![vec![0usize; n]; n];
        for a in 0..n {
            for b in 0..n {
                let prod: Vec<usize> = elements[a].iter().map(|&x| elements[b][x]).collect();
                table[a][b] = elements.binary_search(&prod).expect("closed");
            }
        }
        FiniteGroup { name: name.to_string(), table }
    }

    pub fn cyclic(n: usize) -> FiniteGroup {
        let table = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        FiniteGroup { name: format!("Z/{n}"), table }
    }

    pub fn symmetric(n: usize) -> FiniteGroup {
        let mut gens = vec![{
            let mut t: Vec<usize> = (0..n).collect();
            t.swap(0, 1);
            t
        }];
        if n > 2 {
            gens.push((0..n).map(|x| (x + 1) % n).collect());
        }
        FiniteGroup::from_permutations(&format!("Sym({n})"), n, &gens)
    }

    pub fn dihedral(n: usize) -> FiniteGroup {
        let rot: Vec<usize> = (0..n).map(|x| (x + 1) % n).collect();
        let refl: Vec<usize> = (0..n).map(|x| (n - x) % n).collect();
        FiniteGroup::from_permutations(&format!("D{n}"), n, &[rot, refl])
    }
}

/// One adversarial coupling: a finitely supported joint distribution of
/// the `(beta_k, delta_k)` tuples, with integer weights.
pub struct Coupling {
    /// Each atom is `(weight, [(beta_k, delta_k); K])`.
    pub atoms: Vec<(u64, Vec<(usize, usize)>)>,
}

/// Exhaustively convolves `beta_k * gamma_k * delta_k` over independent
/// uniform `gamma_k` and checks that the output tuple distribution is
/// exactly the uniform product measure on `G^K`. Returns the flattened
/// cell counts; uniformity means every cell equals `sum(weights)`.
///
/// For a fixed atom the map `(gamma_k) -> (beta_k gamma_k delta_k)` is a
/// bijection of `G^K`, so the check is integer-exact with zero tolerance.
pub fn product_uniformity_counts(group: &FiniteGroup, k: usize, coupling: &Coupling) -> Vec<u64> {
    let n = group.order();
    let cells = n.pow(k as u32);
    let mut counts = vec![0u64; cells];
    let mut gamma = vec![0usize; k];
    for (weight, pairs) in &coupling.atoms {
        assert_eq!(pairs.len(), k);
        gamma.iter_mut().for_each(|g| *g = 0);
        loop {
            let mut cell = 0usize;
            for i in 0..k {
                let (beta, delta) = pairs[i];
                let out = group.table[group.table[beta][gamma[i]]][delta];
                cell = cell * n + out;
            }
            counts[cell] += weight;
            // Odometer over gamma tuples.
            let mut pos = k;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                gamma[pos] += 1;
                if gamma[pos] < n {
                    break;
                }
                gamma[pos] = 0;
            }
            if gamma.iter().all(|&g| g == 0) {
                break;
            }
        }
    }
    counts
}

/// True iff the convolved output is exactly uniform on `G^K`.
pub fn is_exactly_uniform_product(group: &FiniteGroup, k: usize, coupling: &Coupling) -> bool {
    let counts = product_uniformity_counts(group, k, coupling);
    let total_weight: u64 = coupling.atoms.iter().map(|(w, _)| w).sum();
    counts.iter().all(|&c| c == total_weight)
}
