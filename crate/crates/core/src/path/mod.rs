//! Regularization paths: shared types, interpolation, serialization and
//! the KKT verifier, plus the exact piecewise-linear tracers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blasso::{blasso_path, BlassoConfig};
use crate::error::{CapError, Result};
use crate::hierarchy::{compile_penalty_for, HierarchyGraph};
use crate::model::{Dataset, Grouping, Norm};
use crate::penalty;

mod block;
mod icap;
mod ilasso;
mod lasso;

pub use block::{hicap_path, hicap_path_with, linf_cap_path, linf_cap_path_with};
pub use icap::{icap_path, icap_path_with};
pub use ilasso::{ilasso_path, ilasso_path_with};
pub use lasso::{lasso_path, lasso_path_with};

/// Active-set systems with a condition number above this are rejected.
pub const COND_TOL: f64 = 1e-10_f64.recip();

/// Which algorithm produced a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    Lasso,
    Ilasso,
    Icap,
    Hicap,
    LinfCap,
    Blasso,
}

impl SolverTag {
    pub fn name(self) -> &'static str {
        match self {
            SolverTag::Lasso => "lasso",
            SolverTag::Ilasso => "ilasso",
            SolverTag::Icap => "icap",
            SolverTag::Hicap => "hicap",
            SolverTag::LinfCap => "linf_cap",
            SolverTag::Blasso => "blasso",
        }
    }

    pub fn is_exact(self) -> bool {
        self != SolverTag::Blasso
    }
}

impl std::str::FromStr for SolverTag {
    type Err = CapError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lasso" => SolverTag::Lasso,
            "ilasso" => SolverTag::Ilasso,
            "icap" => SolverTag::Icap,
            "hicap" => SolverTag::Hicap,
            "linf_cap" | "linf-cap" => SolverTag::LinfCap,
            "blasso" => SolverTag::Blasso,
            other => return Err(CapError::InvalidConfig(format!("unknown solver \"{other}\""))),
        })
    }
}

/// Why a path stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Reached `λ = 0`.
    Complete,
    /// Stopped early at `lambda_min_ratio` or `max_df`.
    Truncated,
}

/// Partition of an active group into coordinates below the group maximum
/// (`u`) and at it (`r`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupState {
    pub u: Vec<usize>,
    pub r: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub active_groups: Vec<usize>,
    #[serde(default)]
    pub group_states: Vec<GroupState>,
    #[serde(default)]
    pub signs: Vec<i8>,
    pub df: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPath {
    pub solver: SolverTag,
    pub dataset_fingerprint: String,
    pub termination: Termination,
    #[serde(default)]
    pub approximate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub breakpoints: Vec<Breakpoint>,
}

/// Early-stopping controls shared by the tracers.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOptions {
    /// Stop once `λ` falls to `lambda_min_ratio · λ₀` (0 runs to `λ = 0`).
    pub lambda_min_ratio: f64,
    /// Stop after the first breakpoint whose df reaches this value.
    pub max_df: Option<usize>,
    /// Hard cap on the number of events.
    pub max_steps: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { lambda_min_ratio: 0.0, max_df: None, max_steps: 100_000 }
    }
}

impl RegularizationPath {
    pub fn lambda_max(&self) -> f64 {
        self.breakpoints.first().map_or(0.0, |b| b.lambda)
    }

    pub fn lambda_min(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.lambda)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.lambda).collect()
    }

    /// Coefficients at `λ` by linear interpolation between breakpoints.
    /// Values above the first breakpoint give the first coefficients and
    /// values below the last give the last.
    pub fn beta_at(&self, lambda: f64) -> Vec<f64> {
        let bps = &self.breakpoints;
        let first = &bps[0];
        if lambda >= first.lambda {
            return first.beta.clone();
        }
        let last = bps.last().expect("nonempty path");
        if lambda <= last.lambda {
            return last.beta.clone();
        }
        // breakpoints are sorted by decreasing lambda
        let t = bps.partition_point(|b| b.lambda > lambda);
        let (hi, lo) = (&bps[t - 1], &bps[t]);
        let w = (hi.lambda - lambda) / (hi.lambda - lo.lambda);
        hi.beta.iter().zip(&lo.beta).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// The serialized record list `{lambda, beta, active_groups, df}`.
    pub fn to_json(&self) -> serde_json::Value {
        let records: Vec<serde_json::Value> = self
            .breakpoints
            .iter()
            .map(|b| {
                serde_json::json!({
                    "lambda": b.lambda,
                    "beta": b.beta,
                    "active_groups": b.active_groups,
                    "df": b.df,
                })
            })
            .collect();
        let mut out = serde_json::json!({
            "solver": self.solver,
            "dataset_fingerprint": self.dataset_fingerprint,
            "termination": self.termination,
            "breakpoints": records,
        });
        if self.approximate {
            out["approximate"] = serde_json::Value::Bool(true);
        }
        if let Some(c) = &self.config {
            out["config"] = c.clone();
        }
        out
    }
}

/// The structure a penalty is built from.
#[derive(Clone, Debug, PartialEq)]
pub enum Penalty {
    /// Explicit groups with their norms and weights.
    Grouping(Grouping),
    /// A hierarchy, compiled to one `L∞` group per node.
    Hierarchy(HierarchyGraph),
    /// No structure (LASSO and iLASSO need none).
    None,
}

impl Penalty {
    /// The grouping that `solver` optimizes over `p` predictors; KKT checks
    /// and df counts refer to it.
    pub fn grouping_for(&self, solver: SolverTag, p: usize) -> Result<Grouping> {
        match (solver, self) {
            (SolverTag::Lasso, _) => Ok(Grouping::singletons(p, Norm::ONE)),
            (SolverTag::Ilasso, _) => Ok(Grouping::single(p, Norm::INF)),
            (_, Penalty::Grouping(g)) => Ok(g.clone()),
            (_, Penalty::Hierarchy(h)) => compile_penalty_for(h, p, &vec![Norm::INF; h.len()], &vec![1.0; h.len()]),
            (_, Penalty::None) => {
                Err(CapError::InvalidConfig(format!("solver {} needs a grouping or hierarchy", solver.name())))
            }
        }
    }
}

/// Settings for [`fit_path`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverSettings {
    pub path: PathOptions,
    /// BLasso settings; defaults to [`BlassoConfig::for_dataset`] with the
    /// path's `lambda_min_ratio`.
    pub blasso: Option<BlassoConfig>,
}

/// Runs `solver` on `dataset` with the given penalty structure.
pub fn fit_path(
    dataset: &Dataset,
    solver: SolverTag,
    penalty: &Penalty,
    settings: &SolverSettings,
) -> Result<RegularizationPath> {
    let opts = &settings.path;
    match solver {
        SolverTag::Lasso => lasso_path_with(dataset, opts),
        SolverTag::Ilasso => ilasso_path_with(dataset, opts),
        SolverTag::Icap => icap_path_with(dataset, &penalty.grouping_for(solver, dataset.p())?, opts),
        SolverTag::Hicap => match penalty {
            Penalty::Hierarchy(h) => hicap_path_with(dataset, h, opts),
            _ => Err(CapError::InvalidConfig("hicap needs a hierarchy".into())),
        },
        SolverTag::LinfCap => linf_cap_path_with(dataset, &penalty.grouping_for(solver, dataset.p())?, opts),
        SolverTag::Blasso => {
            let cfg = settings.blasso.clone().unwrap_or_else(|| BlassoConfig {
                lambda_min_ratio: opts.lambda_min_ratio,
                ..BlassoConfig::for_dataset(dataset)
            });
            blasso_path(dataset, &penalty.grouping_for(solver, dataset.p())?, &cfg)
        }
    }
}

/// FNV-1a digest of the design and response bits.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut feed = |v: u64| {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    feed(dataset.n() as u64);
    feed(dataset.p() as u64);
    for v in dataset.x().iter().chain(dataset.y().iter()) {
        feed(v.to_bits());
    }
    format!("{h:016x}")
}

/// Residual report from [`verify_kkt`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KktReport {
    pub lambda: f64,
    pub max_violation: f64,
}

/// Interpolates the path at `λ` and measures how far `X'(y - Xβ̂)` lies
/// from `λ·∂T(β̂)`.
pub fn verify_kkt(
    path: &RegularizationPath,
    dataset: &Dataset,
    grouping: &Grouping,
    lambda: f64,
) -> Result<KktReport> {
    let beta = path.beta_at(lambda);
    let c = dataset.x().tr_mul(&dataset.residual(&beta));
    let v = penalty::subgradient_violation(&beta, grouping, c.as_slice(), lambda)?;
    Ok(KktReport { lambda, max_violation: v })
}

/// Solves the symmetric positive definite system `m x = rhs`, rejecting
/// systems whose condition number exceeds [`COND_TOL`].
pub(crate) fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > COND_TOL {
        return Err(CapError::DegenerateDesign(format!(
            "active-set system of size {} has condition number {:.3e}",
            m.nrows(),
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    let vt_rhs = eig.eigenvectors.tr_mul(rhs);
    let scaled = vt_rhs.component_div(&eig.eigenvalues);
    Ok(&eig.eigenvectors * scaled)
}

/// Relative tolerance for classifying a coordinate as at its group max.
const LEVEL_TOL: f64 = 1e-10;

/// Splits each group with a nonzero coefficient into coordinates at the
/// group max (`r`) and below it (`u`).
pub(crate) fn classify_groups(beta: &[f64], grouping: &Grouping) -> (Vec<usize>, Vec<GroupState>) {
    let mut active = Vec::new();
    let mut states = Vec::with_capacity(grouping.len());
    for (k, g) in grouping.groups().iter().enumerate() {
        let m = g.iter().fold(0.0f64, |m, &j| m.max(beta[j].abs()));
        if m == 0.0 {
            states.push(GroupState { u: Vec::new(), r: g.clone() });
            continue;
        }
        active.push(k);
        let tol = LEVEL_TOL * m.max(1.0);
        let (r, u): (Vec<usize>, Vec<usize>) = g.iter().partition(|&&j| beta[j].abs() >= m - tol);
        states.push(GroupState { u, r });
    }
    (active, states)
}

/// Degrees of freedom implied by the active structure of a breakpoint.
/// Returns `None` for solvers without a df result.
pub fn structural_df(solver: SolverTag, bp: &Breakpoint) -> Option<usize> {
    let nnz = bp.beta.iter().filter(|b| **b != 0.0).count();
    match solver {
        SolverTag::Lasso => Some(nnz),
        SolverTag::Ilasso | SolverTag::Icap => Some(
            bp.active_groups.len()
                + bp.active_groups.iter().map(|&k| bp.group_states[k].u.len()).sum::<usize>(),
        ),
        SolverTag::Hicap | SolverTag::LinfCap => {
            // distinct levels among nonzero groups plus coordinates that are
            // not at the max of any group containing them
            let mut levels: Vec<f64> =
                bp.active_groups.iter().map(|&k| bp.beta[bp.group_states[k].r[0]].abs()).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup_by(|a, b| (*a - *b).abs() <= LEVEL_TOL * b.max(1.0));
            let mut tight = vec![false; bp.beta.len()];
            for &k in &bp.active_groups {
                for &j in &bp.group_states[k].r {
                    tight[j] = true;
                }
            }
            let free = (0..bp.beta.len()).filter(|&j| bp.beta[j] != 0.0 && !tight[j]).count();
            Some(levels.len() + free)
        }
        SolverTag::Blasso => None,
    }
}

/// Breakpoint-style record of arbitrary coefficients, for df evaluation
/// away from breakpoints.
pub fn describe(solver: SolverTag, lambda: f64, beta: Vec<f64>, grouping: &Grouping) -> Breakpoint {
    let (active_groups, group_states) = classify_groups(&beta, grouping);
    let mut bp = Breakpoint { lambda, beta, active_groups, group_states, signs: Vec::new(), df: 0 };
    bp.df = structural_df(solver, &bp).unwrap_or(0);
    bp
}

/// Builds a breakpoint record from coefficients and correlations.
pub(crate) fn make_breakpoint(
    solver: SolverTag,
    lambda: f64,
    beta: Vec<f64>,
    corr: &DVector<f64>,
    grouping: &Grouping,
    scale: f64,
) -> Breakpoint {
    let (active_groups, group_states) = classify_groups(&beta, grouping);
    let tol = 1e-10 * scale.max(1.0);
    let signs = corr
        .iter()
        .map(|c| if *c > tol { 1 } else if *c < -tol { -1 } else { 0 })
        .collect();
    let mut bp = Breakpoint { lambda, beta, active_groups, group_states, signs, df: 0 };
    bp.df = structural_df(solver, &bp).unwrap_or(0);
    bp
}

/// Accumulates breakpoints, merging zero-length steps and applying the
/// early-stopping rules.
pub(crate) struct PathBuilder {
    solver: SolverTag,
    grouping: Grouping,
    fingerprint: String,
    scale: f64,
    lambda0: f64,
    opts: PathOptions,
    pub breakpoints: Vec<Breakpoint>,
}

impl PathBuilder {
    pub fn new(solver: SolverTag, grouping: Grouping, dataset: &Dataset, opts: &PathOptions) -> Self {
        PathBuilder {
            solver,
            grouping,
            fingerprint: dataset_fingerprint(dataset),
            scale: 1.0,
            lambda0: 0.0,
            opts: opts.clone(),
            breakpoints: Vec::new(),
        }
    }

    pub fn set_lambda0(&mut self, lambda0: f64) {
        self.lambda0 = lambda0;
        self.scale = lambda0.max(1e-300);
    }

    /// Smallest λ the path should reach.
    pub fn lambda_floor(&self) -> f64 {
        self.opts.lambda_min_ratio.max(0.0) * self.lambda0
    }

    pub fn max_steps(&self) -> usize {
        self.opts.max_steps
    }

    /// Records a breakpoint. Returns true when the df cap has been reached.
    pub fn push(&mut self, lambda: f64, beta: Vec<f64>, corr: &DVector<f64>) -> bool {
        let lambda = lambda.max(0.0);
        let bp = make_breakpoint(self.solver, lambda, beta, corr, &self.grouping, self.scale);
        let df = bp.df;
        match self.breakpoints.last_mut() {
            Some(last) if last.lambda <= lambda => *last = bp,
            _ => self.breakpoints.push(bp),
        }
        matches!(self.opts.max_df, Some(m) if df >= m)
    }

    pub fn finish(self, termination: Termination) -> RegularizationPath {
        RegularizationPath {
            solver: self.solver,
            dataset_fingerprint: self.fingerprint,
            termination,
            approximate: false,
            config: None,
            breakpoints: self.breakpoints,
        }
    }
}

/// `X'y - Gβ`.
pub(crate) fn correlations(xty: &DVector<f64>, gram: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    xty - gram * DVector::from_column_slice(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_path() -> RegularizationPath {
        let mk = |lambda: f64, beta: Vec<f64>| Breakpoint {
            lambda,
            beta,
            active_groups: vec![],
            group_states: vec![],
            signs: vec![],
            df: 0,
        };
        RegularizationPath {
            solver: SolverTag::Lasso,
            dataset_fingerprint: String::new(),
            termination: Termination::Complete,
            approximate: false,
            config: None,
            breakpoints: vec![mk(3.0, vec![0.0, 0.0]), mk(1.0, vec![2.0, 0.0]), mk(0.0, vec![3.0, 1.0])],
        }
    }

    #[test]
    fn interpolation() {
        let p = toy_path();
        assert_eq!(p.beta_at(5.0), vec![0.0, 0.0]);
        assert_eq!(p.beta_at(2.0), vec![1.0, 0.0]);
        assert_eq!(p.beta_at(1.0), vec![2.0, 0.0]);
        assert_eq!(p.beta_at(0.5), vec![2.5, 0.5]);
        assert_eq!(p.beta_at(-1.0), vec![3.0, 1.0]);
    }

    #[test]
    fn json_records() {
        let j = toy_path().to_json();
        assert_eq!(j["breakpoints"][1]["lambda"], 1.0);
        assert_eq!(j["solver"], "lasso");
        assert!(j.get("approximate").is_none());
    }

    #[test]
    fn singular_system_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_checked(&m, &r), Err(CapError::DegenerateDesign(_))));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let x = solve_checked(&m, &r).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn classify() {
        let g = Grouping::uniform(4, vec![vec![0, 1], vec![2, 3]], crate::Norm::INF).unwrap();
        let (a, s) = classify_groups(&[2.0, -2.0, 0.0, 0.0], &g);
        assert_eq!(a, vec![0]);
        assert_eq!(s[0].r, vec![0, 1]);
        let (_, s) = classify_groups(&[2.0, 1.0, 0.0, 0.0], &g);
        assert_eq!(s[0].u, vec![1]);
    }
}
