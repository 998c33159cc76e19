//! Choosing `λ` along a path: df estimates, AIC_C, cross-validation and a
//! Monte-Carlo Stein estimate of df used to validate the df formulas.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::model::{group_normalize, standardize, Dataset};
use crate::path::{describe, fit_path, structural_df, Breakpoint, Penalty, RegularizationPath, SolverSettings, SolverTag};

/// Most λ values a CV grid keeps.
pub const CV_GRID_MAX: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aicc,
    Cv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionPoint {
    pub lambda: f64,
    pub value: f64,
    pub df: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_lambda: f64,
    pub criterion_values: Vec<CriterionPoint>,
    pub criterion_name: Criterion,
    pub df_at_chosen: Option<f64>,
}

impl SelectionResult {
    /// `lambda,criterion,df` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,criterion,df\n");
        for c in &self.criterion_values {
            let df = c.df.map_or(String::new(), |d| d.to_string());
            s.push_str(&format!("{},{},{}\n", c.lambda, c.value, df));
        }
        s
    }
}

/// Index of the smallest value, ties going to the earliest entry. Callers
/// order candidates by decreasing `λ`, so ties favour more regularization.
fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Unbiased df estimate at a breakpoint: the number of nonzero coefficients
/// for the LASSO, `|U_λ| + 1` for iLASSO and `|A_λ| + Σ_k |U_k,λ|` for iCAP.
/// The count for hierarchical paths (distinct levels plus free coordinates)
/// is experimental.
pub fn df_estimate(bp: &Breakpoint, solver: SolverTag) -> Result<usize> {
    structural_df(solver, bp).ok_or(CapError::UnsupportedSolver(format!("no df estimate for {} paths", solver.name())))
}

/// `(n/2) log RSS + (n/2)(1 + k/n)/(1 - (k + 2)/n)`; `None` when
/// `k + 2 >= n`.
pub fn aicc_value(n: usize, rss: f64, k: usize) -> Option<f64> {
    if k + 2 >= n {
        return None;
    }
    let nf = n as f64;
    let kf = k as f64;
    Some(0.5 * nf * rss.ln() + 0.5 * nf * (1.0 + kf / nf) / (1.0 - (kf + 2.0) / nf))
}

/// Evaluates AIC_C at every breakpoint and picks the minimizer.
pub fn aicc(path: &RegularizationPath, dataset: &Dataset) -> Result<SelectionResult> {
    let n = dataset.n();
    let mut points = Vec::new();
    for bp in &path.breakpoints {
        let k = df_estimate(bp, path.solver)?;
        if let Some(v) = aicc_value(n, dataset.rss(&bp.beta), k) {
            points.push(CriterionPoint { lambda: bp.lambda, value: v, df: Some(k as f64) });
        }
    }
    let values: Vec<f64> = points.iter().map(|c| c.value).collect();
    let i = argmin(&values).ok_or(CapError::EmptyCandidateSet)?;
    Ok(SelectionResult {
        chosen_lambda: points[i].lambda,
        df_at_chosen: points[i].df,
        criterion_values: points,
        criterion_name: Criterion::Aicc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    Random,
    /// Each distinct design row sends its replicates to different folds.
    Balanced,
}

impl std::str::FromStr for FoldScheme {
    type Err = CapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(FoldScheme::Random),
            "balanced" => Ok(FoldScheme::Balanced),
            other => Err(CapError::InvalidConfig(format!("unknown fold scheme \"{other}\""))),
        }
    }
}

/// Fold index of every row.
pub fn assign_folds(dataset: &Dataset, folds: usize, scheme: FoldScheme, seed: u64) -> Result<Vec<usize>> {
    let n = dataset.n();
    if folds < 2 {
        return Err(CapError::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(CapError::FoldTooSmall(format!("{folds} folds for {n} observations")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; n];
    match scheme {
        FoldScheme::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for (r, &i) in idx.iter().enumerate() {
                fold[i] = r % folds;
            }
        }
        FoldScheme::Balanced => {
            let positions = replicate_positions(dataset);
            let r = positions[0].len();
            if r < 2 || positions.iter().any(|p| p.len() != r) || r % folds != 0 {
                return Err(CapError::SchemeUnavailable(format!(
                    "balanced folds need every design row repeated a common multiple of {folds} times"
                )));
            }
            for rows in positions {
                let mut rows = rows;
                rows.shuffle(&mut rng);
                for (t, &i) in rows.iter().enumerate() {
                    fold[i] = t % folds;
                }
            }
        }
    }
    Ok(fold)
}

/// Rows grouped by identical design row, in order of first appearance.
fn replicate_positions(dataset: &Dataset) -> Vec<Vec<usize>> {
    let x = dataset.x();
    let mut positions: Vec<Vec<usize>> = Vec::new();
    'rows: for i in 0..dataset.n() {
        for pos in positions.iter_mut() {
            let j = pos[0];
            if (0..x.ncols()).all(|c| x[(i, c)] == x[(j, c)]) {
                pos.push(i);
                continue 'rows;
            }
        }
        positions.push(vec![i]);
    }
    positions
}

/// Training set re-standardized on its own rows, with group normalization
/// reapplied when the parent carries it.
fn training_set(dataset: &Dataset, rows: &[usize], penalty: &Penalty) -> Result<Dataset> {
    let sub = dataset.select_rows(rows);
    let raw = Dataset::new(sub.x().clone(), sub.y().clone())?;
    let fitted = standardize(&raw)?;
    match (dataset.transform().and_then(|t| t.group_scale.as_ref()), penalty) {
        (Some(_), Penalty::Grouping(g)) => group_normalize(&fitted, g),
        _ => Ok(fitted),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub selection: SelectionResult,
    /// Full-data coefficients at the chosen `λ`, in the dataset's units.
    pub beta: Vec<f64>,
    pub path: RegularizationPath,
}

/// Geometric thinning of a decreasing grid down to at most `max` points,
/// keeping both ends.
fn thin_grid(grid: &[f64], max: usize) -> Vec<f64> {
    if grid.len() <= max {
        return grid.to_vec();
    }
    let hi = grid[0];
    let positive: Vec<f64> = grid.iter().copied().filter(|&l| l > 0.0).collect();
    let lo = *positive.last().unwrap_or(&hi);
    let has_zero = grid.last() == Some(&0.0);
    let m = if has_zero { max - 1 } else { max };
    let mut out: Vec<f64> = (0..m)
        .map(|i| {
            let t = i as f64 / (m - 1).max(1) as f64;
            // snap to the nearest breakpoint on the log scale
            let target = hi.ln() + t * (lo.ln() - hi.ln());
            *positive
                .iter()
                .min_by(|a, b| (a.ln() - target).abs().total_cmp(&(b.ln() - target).abs()))
                .unwrap()
        })
        .collect();
    out.dedup();
    if has_zero {
        out.push(0.0);
    }
    out
}

/// k-fold cross-validation over the union of the fold breakpoints. Each
/// training set is re-standardized, and fold `λ`s are compared with the
/// full-data scale through the factor `n / n_train`, since the loss sums
/// over observations.
pub fn cross_validate(
    dataset: &Dataset,
    penalty: &Penalty,
    solver: SolverTag,
    settings: &SolverSettings,
    folds: usize,
    scheme: FoldScheme,
    seed: u64,
) -> Result<CvResult> {
    let n = dataset.n();
    let assignment = assign_folds(dataset, folds, scheme, seed)?;
    let fits: Vec<Result<(RegularizationPath, Dataset, Vec<usize>, f64)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            if train.len() < 3 || test.is_empty() {
                return Err(CapError::FoldTooSmall(format!("fold {f} has {} training rows", train.len())));
            }
            let tr = training_set(dataset, &train, penalty)?;
            // centered training data has rank n_train - 1, so fold paths
            // stop before they saturate
            let mut fold_settings = settings.clone();
            let cap = train.len() - 2;
            fold_settings.path.max_df = Some(settings.path.max_df.map_or(cap, |m| m.min(cap)));
            let path = fit_path(&tr, solver, penalty, &fold_settings)?;
            let factor = n as f64 / train.len() as f64;
            Ok((path, tr, test, factor))
        })
        .collect();
    let fits: Vec<_> = fits.into_iter().collect::<Result<_>>()?;

    let mut grid: Vec<f64> =
        fits.iter().flat_map(|(p, _, _, factor)| p.lambdas().into_iter().map(move |l| l * factor)).collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    let grid = thin_grid(&grid, CV_GRID_MAX);

    let mut errors = vec![0.0; grid.len()];
    for (path, tr, test, factor) in &fits {
        for (g, &lam) in grid.iter().enumerate() {
            let (b, b0) = tr.to_original_units(&path.beta_at(lam / factor));
            // predictions in the parent dataset's units
            errors[g] += test
                .iter()
                .map(|&i| {
                    let pred: f64 = b0 + (0..b.len()).map(|j| dataset.x()[(i, j)] * b[j]).sum::<f64>();
                    (dataset.y()[i] - pred).powi(2)
                })
                .sum::<f64>();
        }
    }
    let values: Vec<f64> = errors.iter().map(|e| e / n as f64).collect();
    let i = argmin(&values).ok_or(CapError::EmptyCandidateSet)?;
    let chosen = grid[i];
    let full = fit_path(dataset, solver, penalty, settings)?;
    let grouping = penalty.grouping_for(solver, dataset.p())?;
    let beta = full.beta_at(chosen);
    let df_at = |lam: f64| structural_df(solver, &describe(solver, lam, full.beta_at(lam), &grouping)).map(|d| d as f64);
    let criterion_values =
        grid.iter().zip(&values).map(|(&lambda, &value)| CriterionPoint { lambda, value, df: df_at(lambda) }).collect();
    Ok(CvResult {
        selection: SelectionResult {
            chosen_lambda: chosen,
            criterion_values,
            criterion_name: Criterion::Cv,
            df_at_chosen: df_at(chosen),
        },
        beta,
        path: full,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteinEstimate {
    /// `Σ_i cov(μ̂_i, y_i)/σ²`.
    pub df: f64,
    pub std_error: f64,
    /// Mean of the structural df over the draws, when the solver has one.
    pub mean_df_estimate: Option<f64>,
    pub draws: usize,
}

/// Monte-Carlo df at `λ` for the fixed design of `template`, with
/// `y = Xβ + σε`. Uses the known mean, so each draw contributes
/// `Σ_i μ̂_i ε_i / σ` and the estimate comes with a standard error.
#[allow(clippy::too_many_arguments)]
pub fn stein_df_oracle(
    template: &Dataset,
    beta_true: &[f64],
    sigma: f64,
    lambda: f64,
    solver: SolverTag,
    penalty: &Penalty,
    draws: usize,
    seed: u64,
) -> Result<SteinEstimate> {
    if draws < 2 || !(sigma > 0.0) {
        return Err(CapError::InvalidConfig("stein oracle needs draws >= 2 and σ > 0".into()));
    }
    let x = template.x();
    let mu = x * DVector::from_column_slice(beta_true);
    let grouping = penalty.grouping_for(solver, template.p())?;
    let settings = SolverSettings::default();
    let per_draw: Vec<Result<(f64, Option<f64>)>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64 + 1);
            let eps: DVector<f64> = DVector::from_fn(template.n(), |_, _| StandardNormal.sample(&mut rng));
            let data = template.with_response(&mu + &eps * sigma)?;
            let path = fit_path(&data, solver, penalty, &settings)?;
            let beta = path.beta_at(lambda);
            let fit = x * DVector::from_column_slice(&beta);
            let k = structural_df(solver, &describe(solver, lambda, beta, &grouping)).map(|k| k as f64);
            Ok((fit.dot(&eps) / sigma, k))
        })
        .collect();
    let per_draw: Vec<(f64, Option<f64>)> = per_draw.into_iter().collect::<Result<_>>()?;
    let m = draws as f64;
    let mean = per_draw.iter().map(|v| v.0).sum::<f64>() / m;
    let var = per_draw.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let mean_df_estimate = per_draw.iter().map(|v| v.1).sum::<Option<f64>>().map(|s| s / m);
    Ok(SteinEstimate { df: mean, std_error: (var / m).sqrt(), mean_df_estimate, draws })
}
