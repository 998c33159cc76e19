//! Predictor clustering with Partitioning Around Medoids.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::model::{Dataset, Grouping, Norm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub medoids: Vec<usize>,
    /// Cluster id of each point; cluster `c` has medoid `medoids[c]`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

impl ClusteringResult {
    /// One group per cluster, all with the same within-group norm.
    pub fn to_grouping(&self, norm: Norm) -> Result<Grouping> {
        let p = self.assignment.len();
        let mut groups = vec![Vec::new(); self.medoids.len()];
        for (j, &c) in self.assignment.iter().enumerate() {
            groups[c].push(j);
        }
        Grouping::uniform(p, groups, norm)
    }
}

/// `1 - |corr(X_i, X_j)|` between columns.
pub fn correlation_distance(dataset: &Dataset) -> DMatrix<f64> {
    let x = dataset.x();
    let p = x.ncols();
    let cols: Vec<_> = (0..p)
        .map(|j| {
            let c = x.column(j);
            let m = c.mean();
            let v = c.add_scalar(-m);
            let norm = v.norm();
            v / norm
        })
        .collect();
    DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { (1.0 - cols[i].dot(&cols[j]).abs()).clamp(0.0, 1.0) })
}

fn cost_of(d: &DMatrix<f64>, medoids: &[usize]) -> (f64, Vec<usize>) {
    let p = d.nrows();
    let mut total = 0.0;
    let mut assignment = vec![0; p];
    for j in 0..p {
        let (c, v) = medoids
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, d[(j, m)]))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        assignment[j] = c;
        total += v;
    }
    (total, assignment)
}

/// BUILD then SWAP. Candidates are visited in a seeded random order and
/// only strict improvements replace the incumbent, so the seed matters
/// only for exact ties.
pub fn pam_cluster(d: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusteringResult> {
    let p = d.nrows();
    if d.ncols() != p {
        return Err(CapError::InvalidShape(format!("dissimilarity is {}x{}", p, d.ncols())));
    }
    if k == 0 || k > p {
        return Err(CapError::InvalidK { k, p });
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tol = 1e-12;

    // BUILD: greedily add the medoid that lowers the cost the most
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; p];
    while medoids.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for &h in &order {
            if medoids.contains(&h) {
                continue;
            }
            let total: f64 = (0..p).map(|j| nearest[j].min(d[(j, h)])).sum();
            if best.is_none_or(|b| total < b.1 - tol) {
                best = Some((h, total));
            }
        }
        let (h, _) = best.expect("k <= p leaves a candidate");
        medoids.push(h);
        for j in 0..p {
            nearest[j] = nearest[j].min(d[(j, h)]);
        }
    }

    // SWAP: apply the best improving exchange until none is left
    let (mut cost, _) = cost_of(d, &medoids);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for &h in &order {
                if medoids.contains(&h) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = h;
                let (c, _) = cost_of(d, &trial);
                if c < cost - tol && best.is_none_or(|b| c < b.2 - tol) {
                    best = Some((slot, h, c));
                }
            }
        }
        match best {
            Some((slot, h, c)) => {
                medoids[slot] = h;
                cost = c;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    let (total_cost, mut assignment) = cost_of(d, &medoids);
    // a medoid always belongs to its own cluster, even at zero distance ties
    for (c, &m) in medoids.iter().enumerate() {
        assignment[m] = c;
    }
    Ok(ClusteringResult { medoids, assignment, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::standardize;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Exhaustive optimum over all medoid sets of size `k`.
    fn brute_force(d: &DMatrix<f64>, k: usize) -> f64 {
        fn rec(d: &DMatrix<f64>, k: usize, start: usize, cur: &mut Vec<usize>, best: &mut f64) {
            if cur.len() == k {
                *best = best.min(cost_of(d, cur).0);
                return;
            }
            for h in start..d.nrows() {
                cur.push(h);
                rec(d, k, h + 1, cur, best);
                cur.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(d, k, 0, &mut Vec::new(), &mut best);
        best
    }

    fn random_dissimilarity(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let pts: Vec<(f64, f64)> = (0..p).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))).collect();
        DMatrix::from_fn(p, p, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
    }

    #[test]
    fn distance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 1000;
        let mut x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        for i in 0..n {
            x[(i, 3)] = -x[(i, 0)];
        }
        let d = correlation_distance(&standardize(&Dataset::new(x, DVector::zeros(n)).unwrap()).unwrap());
        assert_eq!(d[(1, 1)], 0.0);
        assert!(d[(0, 3)].abs() < 1e-12);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((1.0 - d[(i, j)]) < 0.15);
            assert_eq!(d[(i, j)], d[(j, i)]);
        }
    }

    #[test]
    fn separated_blocks_recovered() {
        let block = |i: usize| i / 5;
        let d = DMatrix::from_fn(10, 10, |i, j| if i == j { 0.0 } else if block(i) == block(j) { 0.1 } else { 0.9 });
        let r = pam_cluster(&d, 2, 3).unwrap();
        for i in 0..10 {
            assert_eq!(r.assignment[i] == r.assignment[0], block(i) == 0);
        }
        assert!((r.total_cost - brute_force(&d, 2)).abs() < 1e-12);
    }

    #[test]
    fn edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dissimilarity(7, &mut rng);
        let all = pam_cluster(&d, 7, 0).unwrap();
        assert_eq!(all.total_cost, 0.0);
        assert_eq!(all.medoids, (0..7).collect::<Vec<_>>());
        let one = pam_cluster(&d, 1, 0).unwrap();
        assert!((one.total_cost - brute_force(&d, 1)).abs() < 1e-12);
        assert!(matches!(pam_cluster(&d, 0, 0), Err(CapError::InvalidK { .. })));
        assert!(matches!(pam_cluster(&d, 8, 0), Err(CapError::InvalidK { .. })));
        let g = one.to_grouping(Norm::INF).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn near_optimal_on_random_instances() {
        // SWAP stops at single-exchange local optima, so the bound is on
        // the average ratio to the exhaustive optimum
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ratios = Vec::new();
        for _ in 0..50 {
            let p = rng.random_range(4..=10);
            let k = rng.random_range(1..=p.min(4));
            let d = random_dissimilarity(p, &mut rng);
            let r = pam_cluster(&d, k, 0).unwrap();
            let opt = brute_force(&d, k);
            assert!(r.total_cost >= opt - 1e-12);
            ratios.push(r.total_cost / opt.max(1e-300));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean <= 1.05, "mean ratio {mean}");
    }

    proptest! {
        #[test]
        fn result_invariants(seed in 0u64..1000, p in 2usize..9, kf in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_dissimilarity(p, &mut rng);
            let k = 1 + ((p - 1) as f64 * kf) as usize;
            let r = pam_cluster(&d, k, seed).unwrap();
            prop_assert_eq!(r.medoids.len(), k);
            for (c, &m) in r.medoids.iter().enumerate() {
                prop_assert_eq!(r.assignment[m], c);
            }
            let total: f64 = (0..p).map(|j| d[(j, r.medoids[r.assignment[j]])]).sum();
            prop_assert!((total - r.total_cost).abs() < 1e-12);
            // no single swap improves the result
            for slot in 0..k {
                for h in 0..p {
                    if r.medoids.contains(&h) { continue; }
                    let mut t = r.medoids.clone();
                    t[slot] = h;
                    prop_assert!(cost_of(&d, &t).0 >= r.total_cost - 1e-9);
                }
            }
        }
    }
}
