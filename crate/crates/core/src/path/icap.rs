//! Exact path for `Σ_k α_k‖β_{G_k}‖∞` over nonoverlapping groups.
//!
//! Each active group `k` carries a level `a_k` shared by its coordinates
//! at the max (`R_k`, signs `s`), while its remaining coordinates (`U_k`)
//! keep zero residual correlation. Between events the unknowns
//! `θ = (a_k, β_{U_k})` solve `Z'(y - Zθ) = λ w̃` with one column
//! `Σ_{R_k} s_j X_j` per active group (weight `α_k`) and one column per
//! free coordinate (weight 0). Events, as `λ` decreases by `δ`:
//!
//! * `δ_A`: an inactive group's correlation `‖X'_{G_k} r‖₁` reaches `λα_k`;
//! * `δ_I`: an active level `a_k` reaches 0 and the group leaves;
//! * `δ_U`: a free coordinate reaches its group's level;
//! * `δ_R`: a coordinate at the max sees its correlation reach 0;
//! * `δ_S`: a correlation in an inactive group changes sign.
//!
//! After every step `λ` is recomputed as `max_k ‖X'_{G_k} r‖₁/α_k`.

use nalgebra::{DMatrix, DVector};

use super::{correlations, solve_checked, PathBuilder, PathOptions, RegularizationPath, SolverTag, Termination};
use crate::error::{CapError, Result};
use crate::model::{Dataset, Grouping};

pub fn icap_path(dataset: &Dataset, grouping: &Grouping) -> Result<RegularizationPath> {
    icap_path_with(dataset, grouping, &PathOptions::default())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    End,
    Enter(usize),
    Leave(usize),
    ToMax(usize),
    ToFree(usize),
    SignFlip(usize),
}

pub(crate) fn check_linf_grouping(dataset: &Dataset, grouping: &Grouping) -> Result<()> {
    if grouping.p() != dataset.p() {
        return Err(CapError::DimensionMismatch(format!(
            "grouping covers {} predictors, dataset has {}",
            grouping.p(),
            dataset.p()
        )));
    }
    if !grouping.overall_norm().is_one() || !grouping.group_norms().iter().all(|g| g.is_inf()) {
        return Err(CapError::WrongNorms("exact tracer needs γ₀ = 1 and every γ_k = ∞".into()));
    }
    Ok(())
}

fn group_corr(c: &DVector<f64>, g: &[usize]) -> f64 {
    g.iter().map(|&j| c[j].abs()).sum()
}

pub fn icap_path_with(dataset: &Dataset, grouping: &Grouping, opts: &PathOptions) -> Result<RegularizationPath> {
    check_linf_grouping(dataset, grouping)?;
    if !grouping.is_nonoverlapping() {
        return Err(CapError::OverlappingGroups);
    }
    let p = dataset.p();
    let kk = grouping.len();
    let alpha = grouping.weights();
    let owner = grouping.assignment().expect("nonoverlapping");
    let gram = dataset.gram();
    let xty = dataset.xty();
    let mut out = PathBuilder::new(SolverTag::Icap, grouping.clone(), dataset, opts);

    let mut beta = vec![0.0; p];
    let mut c = xty.clone();
    let ratio = |c: &DVector<f64>, k: usize| group_corr(c, grouping.group(k)) / alpha[k];
    let lambda0 = (0..kk).map(|k| ratio(&c, k)).fold(0.0, f64::max);
    out.set_lambda0(lambda0);
    if lambda0 <= 1e-300 {
        out.push(0.0, beta, &c);
        return Ok(out.finish(Termination::Complete));
    }
    let tie = 1e-12 * lambda0;
    let veto = 1e-12 * lambda0;
    let mut active = vec![false; kk];
    let mut level = vec![0.0f64; kk];
    let mut at_max = vec![false; p];
    let mut signs = vec![0.0; p];
    let enter = |k: usize, c: &DVector<f64>, at_max: &mut [bool], signs: &mut [f64]| {
        for &j in grouping.group(k) {
            let on = c[j].abs() > tie;
            at_max[j] = on;
            signs[j] = if on { c[j].signum() } else { 0.0 };
        }
    };
    for k in 0..kk {
        if ratio(&c, k) >= lambda0 - tie {
            active[k] = true;
            enter(k, &c, &mut at_max, &mut signs);
        }
    }
    let mut lambda = lambda0;
    out.push(lambda, beta.clone(), &c);
    let floor = out.lambda_floor();
    let mut last = Event::End;

    for _ in 0..out.max_steps() {
        // columns: one per active group, then one per free coordinate
        let groups: Vec<usize> = (0..kk).filter(|&k| active[k]).collect();
        let free: Vec<usize> =
            groups.iter().flat_map(|&k| grouping.group(k).iter().copied()).filter(|&j| !at_max[j]).collect();
        let na = groups.len();
        let q = na + free.len();
        let mut col_of_group = vec![usize::MAX; kk];
        for (a, &k) in groups.iter().enumerate() {
            col_of_group[k] = a;
        }
        // sparse description of each column: (coordinate, coefficient)
        let cols: Vec<Vec<(usize, f64)>> = groups
            .iter()
            .map(|&k| grouping.group(k).iter().filter(|&&j| at_max[j]).map(|&j| (j, signs[j])).collect())
            .chain(free.iter().map(|&j| vec![(j, 1.0)]))
            .collect();
        let m = DMatrix::from_fn(q, q, |a, b| {
            cols[a].iter().map(|&(i, si)| cols[b].iter().map(|&(j, sj)| si * sj * gram[(i, j)]).sum::<f64>()).sum()
        });
        let rhs = DVector::from_iterator(q, (0..q).map(|a| if a < na { alpha[groups[a]] } else { 0.0 }));
        let d = solve_checked(&m, &rhs)?;
        let mut dir = vec![0.0; p];
        for (a, col) in cols.iter().enumerate() {
            for &(j, s) in col {
                dir[j] = s * d[a];
            }
        }
        let e = &gram * DVector::from_column_slice(&dir);

        let mut delta = lambda;
        let mut event = Event::End;
        // an event reversing the previous one is only accepted after a real step
        let reverse = |ev: Event| match ev {
            Event::Leave(k) => Event::Enter(k),
            Event::Enter(k) => Event::Leave(k),
            Event::ToFree(j) => Event::ToMax(j),
            Event::ToMax(j) => Event::ToFree(j),
            other => other,
        };
        let consider = |dl: f64, ev: Event, delta: &mut f64, event: &mut Event| {
            if dl < *delta && !(last != Event::End && reverse(ev) == last && dl <= veto) {
                *delta = dl;
                *event = ev;
            }
        };
        for k in 0..kk {
            let g = grouping.group(k);
            if active[k] {
                let dk = d[col_of_group[k]];
                // δ_I
                if dk < 0.0 {
                    consider(level[k].max(0.0) / -dk, Event::Leave(k), &mut delta, &mut event);
                }
                let n_max = g.iter().filter(|&&j| at_max[j]).count();
                for &j in g {
                    if at_max[j] {
                        // δ_R
                        let rate = signs[j] * e[j];
                        if n_max >= 2 && rate > 0.0 {
                            consider((signs[j] * c[j]).max(0.0) / rate, Event::ToFree(j), &mut delta, &mut event);
                        }
                    } else {
                        // δ_U
                        for s in [1.0, -1.0] {
                            let den = s * dir[j] - dk;
                            if den > 1e-300 {
                                consider(
                                    (level[k] - s * beta[j]).max(0.0) / den,
                                    Event::ToMax(j),
                                    &mut delta,
                                    &mut event,
                                );
                            }
                        }
                    }
                }
            } else {
                // δ_S and δ_A with the correlation signs valid on this segment
                let mut ck = 0.0;
                let mut ek = 0.0;
                for &j in g {
                    let sigma = if c[j].abs() > 1e-14 * lambda0 { c[j].signum() } else { -e[j].signum() };
                    ck += sigma * c[j];
                    ek += sigma * e[j];
                    if c[j].abs() > 1e-14 * lambda0 && c[j].signum() == e[j].signum() && e[j] != 0.0 {
                        consider(c[j] / e[j], Event::SignFlip(j), &mut delta, &mut event);
                    }
                }
                let den = alpha[k] - ek;
                if den > 1e-300 {
                    consider((alpha[k] * lambda - ck).max(0.0) / den, Event::Enter(k), &mut delta, &mut event);
                }
            }
        }

        if lambda - delta <= floor {
            let step = lambda - floor;
            for j in 0..p {
                beta[j] += step * dir[j];
            }
            let c = correlations(&xty, &gram, &beta);
            out.push(floor, beta, &c);
            let term = if floor > 0.0 { Termination::Truncated } else { Termination::Complete };
            return Ok(out.finish(term));
        }
        for j in 0..p {
            beta[j] += delta * dir[j];
        }
        for &k in &groups {
            level[k] += delta * d[col_of_group[k]];
        }
        c = correlations(&xty, &gram, &beta);
        match event {
            Event::End => unreachable!("end of path handled above"),
            Event::Enter(k) => {
                active[k] = true;
                level[k] = 0.0;
                enter(k, &c, &mut at_max, &mut signs);
            }
            Event::Leave(k) => {
                active[k] = false;
                level[k] = 0.0;
                for &j in grouping.group(k) {
                    beta[j] = 0.0;
                    at_max[j] = false;
                    signs[j] = 0.0;
                }
            }
            Event::ToMax(j) => {
                at_max[j] = true;
                signs[j] = if beta[j] != 0.0 { beta[j].signum() } else { 1.0 };
            }
            Event::ToFree(j) => at_max[j] = false,
            Event::SignFlip(_) => {}
        }
        for j in 0..p {
            if at_max[j] {
                beta[j] = signs[j] * level[owner[j]];
            }
        }
        last = event;
        c = correlations(&xty, &gram, &beta);
        lambda = (0..kk).map(|k| ratio(&c, k)).fold(0.0, f64::max).min(lambda);
        // a sign change in a zero group only retimes its entry; the path stays affine
        if !matches!(event, Event::SignFlip(_)) && out.push(lambda, beta.clone(), &c) {
            return Ok(out.finish(Termination::Truncated));
        }
    }
    Err(CapError::DegenerateDesign(format!("no convergence within {} events", out.max_steps())))
}
