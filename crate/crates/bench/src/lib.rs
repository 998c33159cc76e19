//! Fixed problems shared by the benchmarks. Every fixture is seeded, so
//! timings compare like with like across runs.

use cap_core::hierarchy::HierarchyGraph;
use cap_core::path::{PathOptions, SolverSettings};
use cap_core::simulation::{gen_anova, gen_beta_411, gen_grouped_factor, gen_wavelet, InteractionLevel};
use cap_core::{standardize, Dataset};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Hidden-factor design with ten groups of ten predictors and the
/// decaying within-group coefficients, noise level 3.
pub fn grouped_factor(n: usize, seed: u64) -> (Dataset, Vec<Vec<usize>>) {
    let (design, groups, _) = gen_grouped_factor(10, 10, n, seed).expect("valid design");
    let beta = DVector::from_vec(gen_beta_411().into_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let noise = DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let data = design.with_response(design.x() * beta + noise).expect("matching length");
    (standardize(&data).expect("nonconstant columns"), groups)
}

/// Ten main effects with all pairwise interactions.
pub fn anova(seed: u64) -> (Dataset, HierarchyGraph) {
    let (data, _, graph) = gen_anova(InteractionLevel::Moderate, 121, seed).expect("valid design");
    (standardize(&data).expect("nonconstant columns"), graph)
}

/// Haar tree with 15 coefficients, five replicate sets.
pub fn wavelet(seed: u64) -> (Dataset, HierarchyGraph) {
    let tree = [4.0, 3.0, 3.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let (data, _, graph) = gen_wavelet(&tree, 0.4, 5, seed).expect("valid tree");
    (standardize(&data).expect("nonconstant columns"), graph)
}

/// Paths stop at `n - 2` degrees of freedom; centered data with `n < p`
/// has no unique fit beyond that.
pub fn options(data: &Dataset) -> PathOptions {
    PathOptions { max_df: Some(data.n() - 2), ..PathOptions::default() }
}

pub fn settings(data: &Dataset) -> SolverSettings {
    SolverSettings { path: options(data), blasso: None }
}
