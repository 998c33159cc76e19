//! Boosted Lasso: an approximate path for any convex CAP penalty.
//!
//! Coordinates move on an `ε` grid. With `Γ(β; λ) = L(β) + λT(β)` and
//! `L = ½‖y - Xβ‖²`, each iteration
//!
//! 1. tries every backward step `β_j → β_j - sign(β_j)ε` on the support,
//!    and every radial shrink of a group by `ε` in its norm, and takes the
//!    best one if it lowers `Γ` by more than `ξ`;
//! 2. otherwise takes, among the forward moves that lower `L` by more
//!    than `ξ`, the one with the smallest `Γ` at the current `λ`, and relaxes
//!    `λ ← min(λ, (L(β) - L(β⁺) - ξ) / (T(β⁺) - T(β)))`.
//!
//! This is the generalized form of the algorithm: for the L1 penalty every
//! step away from zero raises `T` by `ε`, so choosing by `Γ` and by `L`
//! coincide, while for smooth group norms choosing by `L` alone would
//! never move a second coordinate of a group before the first is done.
//! Forward moves are the steps `±ε e_j` plus, for each group with a
//! norm other than L1, a step of `γ_k`-length `ε` along the group's
//! steepest-descent direction; without these a smooth group would enter
//! only once a single coordinate could pay for the whole norm.
//! The first forward step starts from `β = 0`, is the move with the largest
//! loss decrease per unit of penalty and sets `λ₀` by the same ratio. The run ends when `λ` falls to `lambda_floor`,
//! when no step lowers the loss by more than `ξ`, or when `λ` would turn
//! negative.
//! One breakpoint is emitted per `λ` level, holding the last iterate fitted
//! at that level.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::model::{Dataset, Grouping};
use crate::path::{PathBuilder, PathOptions, RegularizationPath, SolverTag, Termination};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlassoConfig {
    /// Step size `ε`.
    pub step_size: f64,
    /// Minimum objective decrease `ξ` for a backward step.
    pub backward_tolerance: f64,
    pub max_steps: usize,
    pub lambda_floor: f64,
    /// Also stop once `λ` falls to this fraction of `λ₀`.
    #[serde(default)]
    pub lambda_min_ratio: f64,
}

impl BlassoConfig {
    /// `ε = 10⁻²‖X'y‖∞/n`, `ξ = 10⁻⁸`.
    pub fn for_dataset(dataset: &Dataset) -> BlassoConfig {
        BlassoConfig {
            step_size: 1e-2 * dataset.xty().amax() / dataset.n() as f64,
            backward_tolerance: 1e-8,
            max_steps: 1_000_000,
            lambda_floor: 0.0,
            lambda_min_ratio: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(CapError::InvalidConfig(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.backward_tolerance >= 0.0) || !(self.lambda_floor >= 0.0) || !(self.lambda_min_ratio >= 0.0) {
            return Err(CapError::InvalidConfig("tolerance and λ floor must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Group norms kept up to date under moves of a few coordinates.
struct PenaltyCache<'a> {
    grouping: &'a Grouping,
    members: Vec<Vec<usize>>,
    norms: Vec<f64>,
}

impl<'a> PenaltyCache<'a> {
    fn new(grouping: &'a Grouping, beta: &[f64]) -> Self {
        let norms = (0..grouping.len()).map(|k| group_norm(grouping, k, beta)).collect();
        PenaltyCache { grouping, members: grouping.memberships(), norms }
    }

    fn total(&self) -> f64 {
        self.grouping.overall_norm().apply(self.norms.iter().copied())
    }

    /// `T` after setting `β_j = v`, leaving `beta` unchanged.
    fn total_with(&mut self, beta: &mut [f64], j: usize, v: f64) -> f64 {
        let old = beta[j];
        beta[j] = v;
        let saved: Vec<f64> = self.members[j].iter().map(|&k| self.norms[k]).collect();
        for &k in &self.members[j] {
            self.norms[k] = group_norm(self.grouping, k, beta);
        }
        let t = self.total();
        for (&k, s) in self.members[j].iter().zip(saved) {
            self.norms[k] = s;
        }
        beta[j] = old;
        t
    }

    /// `T` after applying a multi-coordinate move, leaving `beta` unchanged.
    fn total_with_many(&mut self, beta: &mut [f64], mv: &[(usize, f64)]) -> f64 {
        let old: Vec<f64> = mv.iter().map(|&(j, _)| beta[j]).collect();
        let saved = self.norms.clone();
        for &(j, v) in mv {
            beta[j] = v;
        }
        self.commit_many(beta, mv);
        let t = self.total();
        self.norms = saved;
        for (&(j, _), o) in mv.iter().zip(old) {
            beta[j] = o;
        }
        t
    }

    fn commit_many(&mut self, beta: &[f64], mv: &[(usize, f64)]) {
        for &(j, _) in mv {
            self.commit(beta, j);
        }
    }

    fn commit(&mut self, beta: &[f64], j: usize) {
        for &k in &self.members[j] {
            self.norms[k] = group_norm(self.grouping, k, beta);
        }
    }
}

fn group_norm(grouping: &Grouping, k: usize, beta: &[f64]) -> f64 {
    grouping.weights()[k] * grouping.group_norms()[k].apply(grouping.group(k).iter().map(|&j| beta[j]))
}

/// Grid value after moving `β_j` by `s`; snaps to exact zero so that the
/// support does not accumulate rounding residue.
fn moved(b: f64, s: f64, eps: f64) -> f64 {
    let v = b + s;
    if v.abs() < 0.5 * eps {
        0.0
    } else {
        v
    }
}

pub fn blasso_path(dataset: &Dataset, grouping: &Grouping, config: &BlassoConfig) -> Result<RegularizationPath> {
    config.validate()?;
    if grouping.p() != dataset.p() {
        return Err(CapError::DimensionMismatch(format!(
            "grouping covers {} predictors, dataset has {}",
            grouping.p(),
            dataset.p()
        )));
    }
    let convex = |g: &crate::model::Norm| g.value() >= 1.0;
    if !grouping.group_norms().iter().all(convex) || !convex(&grouping.overall_norm()) {
        return Err(CapError::NonConvexNorms);
    }
    let p = dataset.p();
    let eps = config.step_size;
    let xi = config.backward_tolerance;
    let gram = dataset.gram();
    let diag: Vec<f64> = (0..p).map(|j| gram[(j, j)]).collect();
    let mut c: DVector<f64> = dataset.xty();
    let mut beta = vec![0.0; p];
    let mut cache = PenaltyCache::new(grouping, &beta);
    let opts = PathOptions { lambda_min_ratio: 0.0, max_df: None, max_steps: config.max_steps };
    let mut out = PathBuilder::new(SolverTag::Blasso, grouping.clone(), dataset, &opts);

    // loss change of β_j += s is -s c_j + ½ s² G_jj
    let dloss = |c: &DVector<f64>, j: usize, s: f64| -s * c[j] + 0.5 * s * s * diag[j];
    let dloss_many = |c: &DVector<f64>, beta: &[f64], mv: &[(usize, f64)]| {
        let mut d = 0.0;
        for &(i, vi) in mv {
            let si = vi - beta[i];
            d -= si * c[i];
            for &(j, vj) in mv {
                d += 0.5 * si * (vj - beta[j]) * gram[(i, j)];
            }
        }
        d
    };
    let apply = |beta: &mut [f64], c: &mut DVector<f64>, mv: &[(usize, f64)]| {
        for &(j, v) in mv {
            let s = v - beta[j];
            beta[j] = v;
            for i in 0..p {
                c[i] -= s * gram[(i, j)];
            }
        }
    };

    // first step: the move with the steepest loss decrease per unit of penalty
    let t0 = cache.total();
    let mut first: Option<(Vec<(usize, f64)>, f64, f64)> = None;
    let mut candidates: Vec<Vec<(usize, f64)>> = (0..p).map(|k| vec![(k, c[k].signum() * eps)]).collect();
    candidates.extend(group_moves(grouping, &beta, &c, eps));
    for mv in candidates {
        let dl = dloss_many(&c, &beta, &mv);
        let dt = cache.total_with_many(&mut beta, &mv) - t0;
        if dt > 0.0 && -dl > xi && first.as_ref().is_none_or(|f| -dl / dt > -f.1 / f.2) {
            first = Some((mv, dl, dt));
        }
    }
    let Some((mv, dl, dt)) = first else {
        out.set_lambda0(0.0);
        out.push(0.0, beta, &c);
        return Ok(finish(out, config, Termination::Complete));
    };
    let mut lambda = (-dl - xi) / dt;
    out.set_lambda0(lambda);
    let floor = config.lambda_floor.max(config.lambda_min_ratio * lambda);
    apply(&mut beta, &mut c, &mv);
    cache.commit_many(&beta, &mv);

    for _ in 0..config.max_steps {
        if lambda <= floor {
            out.push(lambda, beta, &c);
            return Ok(finish(out, config, Termination::Truncated));
        }
        let t0 = cache.total();
        // backward step
        let mut back: Option<(usize, f64, f64)> = None;
        for k in 0..p {
            if beta[k] == 0.0 {
                continue;
            }
            let v = moved(beta[k], -beta[k].signum() * eps, eps);
            let dg = dloss(&c, k, v - beta[k]) + lambda * (cache.total_with(&mut beta, k, v) - t0);
            if back.is_none_or(|b| dg < b.2) {
                back = Some((k, v, dg));
            }
        }
        let mut back: Option<(Vec<(usize, f64)>, f64)> = back.map(|(k, v, dg)| (vec![(k, v)], dg));
        for mv in shrink_moves(grouping, &beta, eps) {
            let dg = dloss_many(&c, &beta, &mv) + lambda * (cache.total_with_many(&mut beta, &mv) - t0);
            if back.as_ref().is_none_or(|b| dg < b.1) {
                back = Some((mv, dg));
            }
        }
        if let Some((mv, dg)) = back {
            if dg < -xi {
                apply(&mut beta, &mut c, &mv);
                cache.commit_many(&beta, &mv);
                continue;
            }
        }
        // forward step and λ relaxation
        let mut fwd: Option<(Vec<(usize, f64)>, f64, f64)> = None;
        for k in 0..p {
            for s in [eps, -eps] {
                let v = moved(beta[k], s, eps);
                let dl = dloss(&c, k, v - beta[k]);
                if !(-dl > xi) {
                    continue;
                }
                let dt = cache.total_with(&mut beta, k, v) - t0;
                if fwd.as_ref().is_none_or(|f| dl + lambda * dt < f.1 + lambda * f.2) {
                    fwd = Some((vec![(k, v)], dl, dt));
                }
            }
        }
        for mv in group_moves(grouping, &beta, &c, eps) {
            let dl = dloss_many(&c, &beta, &mv);
            if !(-dl > xi) {
                continue;
            }
            let dt = cache.total_with_many(&mut beta, &mv) - t0;
            if fwd.as_ref().is_none_or(|f| dl + lambda * dt < f.1 + lambda * f.2) {
                fwd = Some((mv, dl, dt));
            }
        }
        let Some((mv, dl, dt)) = fwd else {
            out.push(lambda, beta, &c);
            return Ok(finish(out, config, Termination::Complete));
        };
        let candidate = if dt > 0.0 { (-dl - xi) / dt } else { lambda };
        if candidate < lambda {
            // the current iterate is the fit for the level being left
            out.push(lambda, beta.clone(), &c);
            lambda = candidate.max(0.0);
        }
        apply(&mut beta, &mut c, &mv);
        cache.commit_many(&beta, &mv);
        if lambda <= 0.0 {
            out.push(0.0, beta, &c);
            return Ok(finish(out, config, Termination::Complete));
        }
    }
    Err(CapError::StepBudgetExceeded(config.max_steps))
}

/// Group moves for norms that are not L1: `β_G += εu`, with `u` the
/// unit-`γ_k` steepest-descent direction for the gradient `c_G`. Coordinate
/// steps alone pay the full norm for a single coordinate near the origin,
/// so a smooth group would enter late and then grow along the wrong
/// direction.
fn group_moves(grouping: &Grouping, beta: &[f64], c: &DVector<f64>, eps: f64) -> Vec<Vec<(usize, f64)>> {
    let mut moves = Vec::new();
    for k in 0..grouping.len() {
        let g = grouping.group(k);
        let gamma = grouping.group_norms()[k];
        if g.len() < 2 || gamma.value() == 1.0 {
            continue;
        }
        let dual = gamma.dual();
        let scale = dual.apply(g.iter().map(|&j| c[j]));
        if scale == 0.0 {
            continue;
        }
        let q = dual.value();
        let mv = g
            .iter()
            .map(|&j| {
                let u = if q == 1.0 {
                    if c[j] == 0.0 { 0.0 } else { c[j].signum() }
                } else {
                    c[j].signum() * (c[j].abs() / scale).powf(q - 1.0)
                };
                (j, beta[j] + eps * u)
            })
            .collect();
        moves.push(mv);
    }
    moves
}

/// Backward counterparts of the group moves: shrink `β_G` towards zero by
/// `ε` in its own norm, landing exactly on zero when closer than that.
fn shrink_moves(grouping: &Grouping, beta: &[f64], eps: f64) -> Vec<Vec<(usize, f64)>> {
    let mut moves = Vec::new();
    for k in 0..grouping.len() {
        let g = grouping.group(k);
        let gamma = grouping.group_norms()[k];
        if g.len() < 2 || gamma.value() == 1.0 {
            continue;
        }
        let norm = gamma.apply(g.iter().map(|&j| beta[j]));
        if norm == 0.0 {
            continue;
        }
        let f = (1.0 - eps / norm).max(0.0);
        moves.push(g.iter().map(|&j| (j, f * beta[j])).collect());
    }
    moves
}

fn finish(out: PathBuilder, config: &BlassoConfig, term: Termination) -> RegularizationPath {
    let mut path = out.finish(term);
    path.approximate = true;
    path.config = serde_json::to_value(config).ok();
    path
}
