//! CAP penalty `T(β) = ‖N‖_{γ₀}` with `N_k = α_k‖β_{G_k}‖_{γ_k}`, the
//! penalized squared-error objective, and exact subdifferential membership.

use crate::error::{CapError, Result};
use crate::maxflow::FlowNetwork;
use crate::model::{Dataset, Grouping, Norm};

/// Absolute tolerance for subdifferential membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Absolute tolerance for kink classification (zero group, group max).
pub const KINK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyValue {
    pub total: f64,
    pub group_norms: Vec<f64>,
}

fn check_indices(len: usize, grouping: &Grouping) -> Result<()> {
    if grouping.p() > len {
        let index = grouping
            .groups()
            .iter()
            .flatten()
            .copied()
            .find(|&j| j >= len)
            .unwrap_or(grouping.p() - 1);
        return Err(CapError::IndexOutOfRange { index, p: len });
    }
    Ok(())
}

/// Evaluates the penalty and its weighted group norms.
pub fn evaluate(beta: &[f64], grouping: &Grouping) -> Result<PenaltyValue> {
    check_indices(beta.len(), grouping)?;
    let group_norms: Vec<f64> = grouping
        .groups()
        .iter()
        .zip(grouping.group_norms())
        .zip(grouping.weights())
        .map(|((g, norm), w)| w * norm.apply(g.iter().map(|&j| beta[j])))
        .collect();
    let total = grouping.overall_norm().apply(group_norms.iter().copied());
    Ok(PenaltyValue { total, group_norms })
}

/// `½‖y - Xβ‖² + λ·T(β)`.
pub fn objective(beta: &[f64], dataset: &Dataset, grouping: &Grouping, lambda: f64) -> Result<f64> {
    if beta.len() != dataset.p() || grouping.p() != dataset.p() {
        return Err(CapError::DimensionMismatch(format!(
            "beta has {} entries, grouping covers {}, dataset has {} predictors",
            beta.len(),
            grouping.p(),
            dataset.p()
        )));
    }
    Ok(0.5 * dataset.rss(beta) + lambda * evaluate(beta, grouping)?.total)
}

/// True iff `candidate ∈ ∂T(β)` within [`MEMBERSHIP_TOL`].
pub fn subgradient_set_contains(beta: &[f64], grouping: &Grouping, candidate: &[f64]) -> Result<bool> {
    Ok(subgradient_violation(beta, grouping, candidate, 1.0)? <= MEMBERSHIP_TOL)
}

fn validate_norms(grouping: &Grouping) -> Result<()> {
    let bad = grouping
        .group_norms()
        .iter()
        .copied()
        .chain(std::iter::once(grouping.overall_norm()))
        .find(|g| g.value() < 1.0);
    match bad {
        Some(g) => Err(CapError::InvalidNorm(format!("norm {g} is below 1"))),
        None => Ok(()),
    }
}

/// Distance (max-abs for the flow check, max-abs of the residual of the
/// best decomposition otherwise) from `g` to `scale·∂T(β)`. With
/// `scale = λ` and `g = X'(y - Xβ)` this is the KKT violation at `λ`.
pub fn subgradient_violation(beta: &[f64], grouping: &Grouping, g: &[f64], scale: f64) -> Result<f64> {
    validate_norms(grouping)?;
    check_indices(beta.len(), grouping)?;
    if g.len() != beta.len() {
        return Err(CapError::DimensionMismatch("candidate length".into()));
    }
    if scale <= 0.0 {
        return Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let gamma0 = grouping.overall_norm();
    let all_inf = grouping.group_norms().iter().all(|n| n.is_inf());
    if gamma0.is_one() && all_inf {
        return Ok(linf_flow_violation(beta, grouping, g, scale));
    }
    if gamma0.is_inf() {
        return Err(CapError::Unsupported("subgradients for overall norm ∞".into()));
    }
    let pv = evaluate(beta, grouping)?;
    let zero_beta = pv.total <= KINK_TOL;
    let multipliers: Vec<f64> = if gamma0.is_one() {
        grouping.weights().iter().map(|w| w * scale).collect()
    } else if zero_beta {
        if !grouping.is_nonoverlapping() {
            return Err(CapError::Unsupported(
                "subgradient at zero with overall norm above 1 and overlapping groups".into(),
            ));
        }
        return Ok(zero_dual_violation(grouping, g, scale));
    } else {
        let total = pv.total;
        let e = gamma0.value();
        pv.group_norms
            .iter()
            .zip(grouping.weights())
            .map(|(n, w)| scale * w * (n / total).powf(e - 1.0))
            .collect()
    };
    let sets: Vec<GroupSet> = grouping
        .groups()
        .iter()
        .zip(grouping.group_norms())
        .map(|(grp, norm)| GroupSet::new(beta, grp, *norm))
        .collect();
    Ok(decomposition_violation(grouping, &sets, &multipliers, g))
}

/// Dual-norm check at β = 0 for nonoverlapping groups and `1 < γ₀ < ∞`.
fn zero_dual_violation(grouping: &Grouping, g: &[f64], scale: f64) -> f64 {
    let per_group: Vec<f64> = grouping
        .groups()
        .iter()
        .zip(grouping.group_norms())
        .zip(grouping.weights())
        .map(|((grp, norm), w)| norm.dual().apply(grp.iter().map(|&j| g[j])) / w)
        .collect();
    let dual = grouping.overall_norm().dual().apply(per_group);
    (dual - scale).max(0.0)
}

/// The subdifferential of one group norm at `β_G`, in group coordinates.
enum GroupSet {
    /// Unique gradient.
    Point(Vec<f64>),
    /// γ = 1 at a nonzero group: fixed signs on the support, box elsewhere.
    SignBox(Vec<Option<f64>>),
    /// γ = ∞ at a nonzero group: `s ⊙ w`, `w` in the simplex over the
    /// max-attaining coordinates.
    Face { signs: Vec<f64> },
    /// β_G = 0: unit ball of the dual norm.
    DualBall(Norm),
}

impl GroupSet {
    fn new(beta: &[f64], grp: &[usize], norm: Norm) -> GroupSet {
        let b: Vec<f64> = grp.iter().map(|&j| beta[j]).collect();
        let m = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m <= KINK_TOL {
            return GroupSet::DualBall(norm.dual());
        }
        if norm.is_inf() {
            let signs = b
                .iter()
                .map(|v| if v.abs() >= m - KINK_TOL { v.signum() } else { 0.0 })
                .collect();
            GroupSet::Face { signs }
        } else if norm.is_one() {
            GroupSet::SignBox(
                b.iter().map(|v| if v.abs() > KINK_TOL { Some(v.signum()) } else { None }).collect(),
            )
        } else {
            let gam = norm.value();
            let n = norm.apply(b.iter().copied());
            GroupSet::Point(
                b.iter().map(|v| v.signum() * (v.abs() / n).powf(gam - 1.0)).collect(),
            )
        }
    }

    /// Euclidean projection of `r` onto the set.
    fn project(&self, r: &[f64]) -> Vec<f64> {
        match self {
            GroupSet::Point(v) => v.clone(),
            GroupSet::SignBox(s) => r
                .iter()
                .zip(s)
                .map(|(x, s)| s.unwrap_or_else(|| x.clamp(-1.0, 1.0)))
                .collect(),
            GroupSet::Face { signs } => {
                let idx: Vec<usize> = (0..r.len()).filter(|&i| signs[i] != 0.0).collect();
                let sub: Vec<f64> = idx.iter().map(|&i| signs[i] * r[i]).collect();
                let w = project_simplex(&sub, 1.0);
                let mut out = vec![0.0; r.len()];
                for (k, &i) in idx.iter().enumerate() {
                    out[i] = signs[i] * w[k];
                }
                out
            }
            GroupSet::DualBall(q) => project_lq_ball(r, *q),
        }
    }
}

/// Best decomposition `g ≈ Σ_k m_k v_k`, `v_k ∈ C_k`, by exact block
/// coordinate descent on the squared residual. One sweep is exact for
/// nonoverlapping groups.
fn decomposition_violation(grouping: &Grouping, sets: &[GroupSet], mult: &[f64], g: &[f64]) -> f64 {
    let p = g.len();
    let mut resid: Vec<f64> = g.to_vec();
    let mut parts: Vec<Vec<f64>> = grouping.groups().iter().map(|grp| vec![0.0; grp.len()]).collect();
    let sweeps = if grouping.is_nonoverlapping() { 1 } else { 20_000 };
    let mut best = f64::INFINITY;
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for (k, grp) in grouping.groups().iter().enumerate() {
            let m = mult[k];
            if m == 0.0 {
                continue;
            }
            // residual with this group's contribution added back, in units of v_k
            let local: Vec<f64> =
                grp.iter().zip(&parts[k]).map(|(&j, v)| (resid[j] + m * v) / m).collect();
            let v = GroupSet::project(&sets[k], &local);
            for (i, &j) in grp.iter().enumerate() {
                let d = m * (v[i] - parts[k][i]);
                change = change.max(d.abs());
                resid[j] -= d;
            }
            parts[k] = v;
        }
        // coordinates covered by no nonzero multiplier keep their full residual
        let viol = resid.iter().take(p).fold(0.0f64, |a, r| a.max(r.abs()));
        best = best.min(viol);
        if best <= MEMBERSHIP_TOL * 1e-2 || change <= 1e-15 {
            break;
        }
    }
    best
}

/// Exact check for `γ₀ = 1`, all `γ_k = ∞`, any overlap, via two
/// bipartite flow problems (nonzero groups must spend their whole budget on
/// their max coordinates; zero groups cover zero coordinates within budget).
fn linf_flow_violation(beta: &[f64], grouping: &Grouping, g: &[f64], scale: f64) -> f64 {
    let p = beta.len();
    let k = grouping.len();
    let zero_coord: Vec<bool> = beta.iter().map(|b| b.abs() <= KINK_TOL).collect();
    let mut group_zero = vec![true; k];
    let mut tight: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (gk, grp) in grouping.groups().iter().enumerate() {
        let m = grp.iter().fold(0.0f64, |m, &j| m.max(beta[j].abs()));
        if m > KINK_TOL {
            group_zero[gk] = false;
            tight[gk] = grp.iter().copied().filter(|&j| beta[j].abs() >= m - KINK_TOL).collect();
        }
    }
    let mut viol = 0.0f64;

    // nonzero coordinates: demand s_j g_j ≥ 0, met exactly by nonzero groups
    let mut covered = vec![false; p];
    for gk in 0..k {
        for &j in &tight[gk] {
            covered[j] = true;
        }
    }
    let nz: Vec<usize> = (0..p).filter(|&j| !zero_coord[j]).collect();
    let active: Vec<usize> = (0..k).filter(|&gk| !group_zero[gk]).collect();
    if !active.is_empty() || !nz.is_empty() {
        let src = 0;
        let sink = 1;
        let mut net = FlowNetwork::new(2 + active.len() + p, 1e-14);
        let mut supply = 0.0;
        for (a, &gk) in active.iter().enumerate() {
            let s = scale * grouping.weights()[gk];
            supply += s;
            net.add_edge(src, 2 + a, s);
            for &j in &tight[gk] {
                net.add_edge(2 + a, 2 + active.len() + j, f64::INFINITY);
            }
        }
        let mut demand = 0.0;
        for &j in &nz {
            let d = beta[j].signum() * g[j];
            if d < 0.0 {
                viol = viol.max(-d);
            }
            if !covered[j] {
                viol = viol.max(g[j].abs());
                continue;
            }
            let d = d.max(0.0);
            demand += d;
            net.add_edge(2 + active.len() + j, sink, d);
        }
        let f = net.max_flow(src, sink);
        viol = viol.max(supply - f).max(demand - f);
    }

    // zero coordinates: |g_j| covered by zero-group budgets
    let zc: Vec<usize> = (0..p).filter(|&j| zero_coord[j] && g[j].abs() > 0.0).collect();
    if !zc.is_empty() {
        let zg: Vec<usize> = (0..k).filter(|&gk| group_zero[gk]).collect();
        let src = 0;
        let sink = 1;
        let mut net = FlowNetwork::new(2 + zg.len() + p, 1e-14);
        for (a, &gk) in zg.iter().enumerate() {
            net.add_edge(src, 2 + a, scale * grouping.weights()[gk]);
            for &j in grouping.group(gk) {
                net.add_edge(2 + a, 2 + zg.len() + j, f64::INFINITY);
            }
        }
        let mut demand = 0.0;
        for &j in &zc {
            demand += g[j].abs();
            net.add_edge(2 + zg.len() + j, sink, g[j].abs());
        }
        let f = net.max_flow(src, sink);
        viol = viol.max(demand - f);
    }
    viol
}

/// Euclidean projection onto `{w ≥ 0, Σw = z}`.
pub fn project_simplex(v: &[f64], z: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - z) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto the L1 ball of radius `z`.
pub fn project_l1_ball(v: &[f64], z: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= z {
        return v.to_vec();
    }
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let w = project_simplex(&a, z);
    v.iter().zip(w).map(|(x, w)| x.signum() * w).collect()
}

/// Euclidean projection onto the unit `L_q` ball.
fn project_lq_ball(r: &[f64], q: Norm) -> Vec<f64> {
    if q.is_inf() {
        return r.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    }
    if q.is_one() {
        return project_l1_ball(r, 1.0);
    }
    let qv = q.value();
    if q.apply(r.iter().copied()) <= 1.0 {
        return r.to_vec();
    }
    if qv == 2.0 {
        let n = q.apply(r.iter().copied());
        return r.iter().map(|x| x / n).collect();
    }
    // KKT: x_j + μ q x_j^{q-1} = |r_j|; find μ with ‖x(μ)‖_q = 1.
    let solve = |a: f64, mu: f64| -> f64 {
        let (mut lo, mut hi) = (0.0, a);
        for _ in 0..100 {
            let x = 0.5 * (lo + hi);
            if x + mu * qv * x.powf(qv - 1.0) > a {
                hi = x;
            } else {
                lo = x;
            }
        }
        0.5 * (lo + hi)
    };
    let norm_at = |mu: f64| q.apply(r.iter().map(|&a| solve(a.abs(), mu)));
    let mut hi = 1.0;
    while norm_at(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    r.iter().map(|&a| a.signum() * solve(a.abs(), hi)).collect()
}

/// Dual norm of `T` at `c` for `γ₀ = 1` and nonoverlapping groups:
/// `max_k ‖c_{G_k}‖_{γ_k*}/α_k`. This is the smallest `λ` at which `β = 0`
/// is optimal when `c = X'y`.
pub fn dual_norm_nonoverlapping(c: &[f64], grouping: &Grouping) -> f64 {
    grouping
        .groups()
        .iter()
        .zip(grouping.group_norms())
        .zip(grouping.weights())
        .map(|((grp, n), w)| n.dual().apply(grp.iter().map(|&j| c[j])) / w)
        .fold(0.0, f64::max)
}
