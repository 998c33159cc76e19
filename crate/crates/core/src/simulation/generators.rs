//! Data generators for the four experiment families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::hierarchy::{anova_pairs, build_anova_graph, build_haar_tree, HierarchyGraph};
use crate::model::{Coefficients, Dataset};

/// Noise level of the ANOVA experiment.
pub const ANOVA_SIGMA: f64 = 3.7;

/// Levels and time points of the wavelet tree.
pub const HAAR_LEVELS: usize = 4;
pub const HAAR_POINTS: usize = 16;

/// One simulated problem with everything needed to score a fit.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub dataset: Dataset,
    pub beta: Coefficients,
    pub sigma: f64,
    /// Population second moment `E(xx')` of one design row.
    pub sigma_x: DMatrix<f64>,
    /// True predictor groups, when the family has them.
    pub groups: Option<Vec<Vec<usize>>>,
    pub graph: Option<HierarchyGraph>,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Predictor groups `{0..q}, {q..2q}, …`.
pub fn contiguous_groups(k_groups: usize, group_size: usize) -> Vec<Vec<usize>> {
    (0..k_groups).map(|k| (k * group_size..(k + 1) * group_size).collect()).collect()
}

/// `cov(X)` of the hidden-factor design: the factor covariance (2 on the
/// diagonal, 1 between neighbouring factors) plus `4·0.95^{|j-j'|}`.
pub fn factor_covariance(k_groups: usize, group_size: usize) -> DMatrix<f64> {
    let p = k_groups * group_size;
    DMatrix::from_fn(p, p, |i, j| {
        let lag = (i / group_size).abs_diff(j / group_size);
        let z = match lag {
            0 => 2.0,
            1 => 1.0,
            _ => 0.0,
        };
        z + 4.0 * 0.95f64.powi(i.abs_diff(j) as i32)
    })
}

/// Rows `X_j = Z_{k(j)} + η_j`; `η` is drawn as a stationary AR(1) series
/// over the global predictor index.
pub(crate) fn factor_design(k_groups: usize, group_size: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let p = k_groups * group_size;
    let zcov = DMatrix::from_fn(k_groups, k_groups, |a, b| match a.abs_diff(b) {
        0 => 2.0,
        1 => 1.0,
        _ => 0.0,
    });
    let l = zcov.cholesky().expect("factor covariance is positive definite").l();
    let innov = 2.0 * (1.0 - 0.95f64 * 0.95).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let e = DVector::from_fn(k_groups, |_, _| normal(rng));
        let z = &l * e;
        let mut eta = 2.0 * normal(rng);
        for j in 0..p {
            if j > 0 {
                eta = 0.95 * eta + innov * normal(rng);
            }
            x[(i, j)] = z[j / group_size] + eta;
        }
    }
    x
}

/// Hidden-factor design with a zero response. Returns the dataset, the
/// true groups and the analytic `cov(X)`.
pub fn gen_grouped_factor(
    k_groups: usize,
    group_size: usize,
    n: usize,
    seed: u64,
) -> Result<(Dataset, Vec<Vec<usize>>, DMatrix<f64>)> {
    if k_groups == 0 || group_size == 0 || n == 0 {
        return Err(CapError::InvalidConfig("grouped factor parameters must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = factor_design(k_groups, group_size, n, &mut rng);
    let dataset = Dataset::new(x, DVector::zeros(n))?;
    Ok((dataset, contiguous_groups(k_groups, group_size), factor_covariance(k_groups, group_size)))
}

/// Three groups of ten decaying coefficients (0.10, 0.04 and 0.01 times
/// `1 + 0.9^i`) followed by 70 zeros.
pub fn gen_beta_411() -> Coefficients {
    let mut beta = vec![0.0; 100];
    for (g, scale) in [0.10, 0.04, 0.01].into_iter().enumerate() {
        for i in 0..10 {
            beta[10 * g + i] = scale * (1.0 + 0.9f64.powi(i as i32));
        }
    }
    Coefficients::from(beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceScheme {
    /// One draw per group, shared by its members.
    Grouped,
    /// One draw per coefficient.
    Individual,
}

/// Laplace draw with variance `alpha²` (scale `alpha/√2`).
pub fn laplace(alpha: f64, rng: &mut impl Rng) -> f64 {
    let b = alpha / std::f64::consts::SQRT_2;
    let u: f64 = rng.random_range(-0.5..0.5);
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub(crate) fn laplacian_beta(
    scheme: LaplaceScheme,
    alpha: f64,
    groups: &[Vec<usize>],
    p: usize,
    rng: &mut impl Rng,
) -> Coefficients {
    let mut beta = vec![0.0; p];
    match scheme {
        LaplaceScheme::Grouped => {
            for g in groups {
                let v = laplace(alpha, rng);
                for &j in g {
                    beta[j] = v;
                }
            }
        }
        LaplaceScheme::Individual => {
            for b in beta.iter_mut() {
                *b = laplace(alpha, rng);
            }
        }
    }
    Coefficients::from(beta)
}

/// Random coefficients: one Laplace value per group or one per predictor.
pub fn gen_laplacian_beta(scheme: LaplaceScheme, alpha: f64, groups: &[Vec<usize>], seed: u64) -> Result<Coefficients> {
    if !(alpha > 0.0) {
        return Err(CapError::InvalidConfig(format!("Laplace parameter must be positive, got {alpha}")));
    }
    let p = groups.iter().flatten().map(|&j| j + 1).max().unwrap_or(0);
    Ok(laplacian_beta(scheme, alpha, groups, p, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `E(β'Σβ)` under the Laplace scheme, from the second moment `α²`.
pub fn expected_signal_power(scheme: LaplaceScheme, alpha: f64, groups: &[Vec<usize>], sigma_x: &DMatrix<f64>) -> f64 {
    let a2 = alpha * alpha;
    match scheme {
        LaplaceScheme::Grouped => {
            groups.iter().map(|g| g.iter().flat_map(|&i| g.iter().map(move |&j| sigma_x[(i, j)])).sum::<f64>()).sum::<f64>()
                * a2
        }
        LaplaceScheme::Individual => sigma_x.trace() * a2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionLevel {
    None,
    Weak,
    Moderate,
    Strong,
    VeryStrong,
}

impl InteractionLevel {
    /// Coefficients of `Z1Z2, Z1Z3, Z1Z4, Z2Z3, Z2Z4, Z3Z4`.
    pub fn coefficients(self) -> [f64; 6] {
        match self {
            InteractionLevel::None => [0.0; 6],
            InteractionLevel::Weak => [0.5, 0.0, 0.0, 0.1, 0.1, 0.0],
            InteractionLevel::Moderate => [1.0, 0.0, 0.0, 0.5, 0.4, 0.1],
            InteractionLevel::Strong => [5.0, 0.0, 0.0, 4.0, 2.0, 0.0],
            InteractionLevel::VeryStrong => [7.0, 7.0, 7.0, 2.0, 2.0, 1.0],
        }
    }
}

/// Coefficients of the ten-variable ANOVA model: main effects
/// `(7, 2, 1, 1, 0, …)` and the interactions of the given level.
pub fn anova_beta(level: InteractionLevel) -> Coefficients {
    let d = 10;
    let pairs = anova_pairs(d);
    let mut beta = vec![0.0; d + pairs.len()];
    beta[..4].copy_from_slice(&[7.0, 2.0, 1.0, 1.0]);
    let named = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    for (pair, v) in named.iter().zip(level.coefficients()) {
        let k = pairs.iter().position(|q| q == pair).expect("pair among the first four variables");
        beta[d + k] = v;
    }
    Coefficients::from(beta)
}

pub(crate) fn anova_problem(level: InteractionLevel, n: usize, sigma: f64, rng: &mut impl Rng) -> Result<Simulated> {
    let d = 10;
    let pairs = anova_pairs(d);
    let p = d + pairs.len();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = normal(rng);
        }
        for (k, &(a, b)) in pairs.iter().enumerate() {
            x[(i, d + k)] = x[(i, a)] * x[(i, b)];
        }
    }
    let beta = anova_beta(level);
    let y = &x * DVector::from_column_slice(&beta) + DVector::from_fn(n, |_, _| sigma * normal(rng));
    Ok(Simulated {
        dataset: Dataset::new(x, y)?,
        beta,
        sigma,
        // independent standard normals: mains and products are uncorrelated with unit variance
        sigma_x: DMatrix::identity(p, p),
        groups: None,
        graph: Some(build_anova_graph(d)),
    })
}

/// ANOVA data with ten standard normal variables and their 45 products.
pub fn gen_anova(level: InteractionLevel, n: usize, seed: u64) -> Result<(Dataset, Coefficients, HierarchyGraph)> {
    if n == 0 {
        return Err(CapError::InvalidConfig("n must be positive".into()));
    }
    let s = anova_problem(level, n, ANOVA_SIGMA, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((s.dataset, s.beta, s.graph.expect("ANOVA graph")))
}

/// Noise level giving `β'Σβ/σ² = snr` for second moment `sigma_x`.
pub fn sigma_for_snr(beta: &[f64], sigma_x: &DMatrix<f64>, snr: f64) -> f64 {
    let b = DVector::from_column_slice(beta);
    (b.dot(&(sigma_x * &b)) / snr).sqrt()
}

pub(crate) fn wavelet_problem(beta_tree: &[f64], snr: f64, replicate_sets: usize, rng: &mut impl Rng) -> Result<Simulated> {
    let (graph, base) = build_haar_tree(HAAR_LEVELS, HAAR_POINTS)?;
    if beta_tree.len() != base.ncols() {
        return Err(CapError::ShapeMismatch(format!(
            "wavelet tree has {} nodes, got {} coefficients",
            base.ncols(),
            beta_tree.len()
        )));
    }
    if replicate_sets == 0 || !(snr > 0.0) {
        return Err(CapError::InvalidConfig("wavelet needs replicate_sets >= 1 and snr > 0".into()));
    }
    let t = base.nrows();
    let n = t * replicate_sets;
    let x = DMatrix::from_fn(n, base.ncols(), |i, j| base[(i % t, j)]);
    let sigma_x = base.tr_mul(&base) / t as f64;
    let sigma = sigma_for_snr(beta_tree, &sigma_x, snr);
    let beta = Coefficients::new(beta_tree.to_vec())?;
    let y = &x * DVector::from_column_slice(&beta) + DVector::from_fn(n, |_, _| sigma * normal(rng));
    Ok(Simulated { dataset: Dataset::new(x, y)?, beta, sigma, sigma_x, groups: None, graph: Some(graph) })
}

/// Stacked Haar design with noise set by the signal-to-noise ratio.
pub fn gen_wavelet(
    beta_tree: &[f64],
    snr: f64,
    replicate_sets: usize,
    seed: u64,
) -> Result<(Dataset, Coefficients, HierarchyGraph)> {
    let s = wavelet_problem(beta_tree, snr, replicate_sets, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((s.dataset, s.beta, s.graph.expect("wavelet graph")))
}
