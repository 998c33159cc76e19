//! Exact path for the L∞ bridge penalty `λ‖β‖∞`.
//!
//! Coordinates at the max (`R`) move together as `a·s_R`; the rest (`U`)
//! keep zero residual correlation. With `Z = [Σ_R s_j X_j, X_U]` and
//! `θ = (a, β_U)`, the KKT conditions read `Z'(y - Zθ) = λ e₁`, so
//! `dθ/d(-λ) = (Z'Z)⁻¹ e₁`.

use nalgebra::{DMatrix, DVector};

use super::{correlations, solve_checked, PathBuilder, PathOptions, RegularizationPath, SolverTag, Termination};
use crate::error::{CapError, Result};
use crate::model::{Dataset, Grouping, Norm};

pub fn ilasso_path(dataset: &Dataset) -> Result<RegularizationPath> {
    ilasso_path_with(dataset, &PathOptions::default())
}

#[derive(Clone, Copy, PartialEq)]
enum Event {
    End,
    ToFree(usize),
    ToMax(usize),
}

pub fn ilasso_path_with(dataset: &Dataset, opts: &PathOptions) -> Result<RegularizationPath> {
    let p = dataset.p();
    let gram = dataset.gram();
    let xty = dataset.xty();
    let mut out = PathBuilder::new(SolverTag::Ilasso, Grouping::single(p, Norm::INF), dataset, opts);

    let mut beta = vec![0.0; p];
    let mut c = xty.clone();
    let lambda0 = c.lp_norm(1);
    out.set_lambda0(lambda0);
    if lambda0 <= 1e-300 {
        out.push(0.0, beta, &c);
        return Ok(out.finish(Termination::Complete));
    }
    let tie = 1e-13 * lambda0;
    // an event reversing the previous one is only accepted after a real step
    let veto = 1e-12 * lambda0;
    let mut at_max: Vec<bool> = c.iter().map(|v| v.abs() > tie).collect();
    let mut signs: Vec<f64> = c.iter().map(|v| if v.abs() > tie { v.signum() } else { 0.0 }).collect();
    let mut level = 0.0;
    let mut lambda = lambda0;
    out.push(lambda, beta.clone(), &c);
    let floor = out.lambda_floor();
    let mut last = Event::End;

    for _ in 0..out.max_steps() {
        let r: Vec<usize> = (0..p).filter(|&j| at_max[j]).collect();
        let u: Vec<usize> = (0..p).filter(|&j| !at_max[j]).collect();
        let q = 1 + u.len();
        let mut m = DMatrix::zeros(q, q);
        m[(0, 0)] = r.iter().map(|&i| r.iter().map(|&j| signs[i] * signs[j] * gram[(i, j)]).sum::<f64>()).sum();
        for (b, &k) in u.iter().enumerate() {
            let v: f64 = r.iter().map(|&i| signs[i] * gram[(i, k)]).sum();
            m[(0, b + 1)] = v;
            m[(b + 1, 0)] = v;
            for (bb, &kk) in u.iter().enumerate() {
                m[(b + 1, bb + 1)] = gram[(k, kk)];
            }
        }
        let mut rhs = DVector::zeros(q);
        rhs[0] = 1.0;
        let d = solve_checked(&m, &rhs)?;
        let mut dir = vec![0.0; p];
        for &j in &r {
            dir[j] = d[0] * signs[j];
        }
        for (b, &j) in u.iter().enumerate() {
            dir[j] = d[b + 1];
        }
        let e = &gram * DVector::from_column_slice(&dir);

        let mut delta = lambda;
        let mut event = Event::End;
        if r.len() >= 2 {
            for &j in &r {
                let rate = signs[j] * e[j];
                if rate > 0.0 {
                    let dl = (signs[j] * c[j]).max(0.0) / rate;
                    if dl < delta && !(last == Event::ToMax(j) && dl <= veto) {
                        delta = dl;
                        event = Event::ToFree(j);
                    }
                }
            }
        }
        for &j in &u {
            for s in [1.0, -1.0] {
                // s·β_j + δ s·Δβ_j = a + δ d_a
                let den = s * dir[j] - d[0];
                if den > 1e-300 {
                    let dl = (level - s * beta[j]).max(0.0) / den;
                    if dl < delta && !(last == Event::ToFree(j) && dl <= veto) {
                        delta = dl;
                        event = Event::ToMax(j);
                    }
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
        level += delta * d[0];
        match event {
            Event::End => unreachable!("end of path handled above"),
            Event::ToFree(j) => at_max[j] = false,
            Event::ToMax(j) => {
                at_max[j] = true;
                signs[j] = if beta[j] != 0.0 { beta[j].signum() } else { 1.0 };
            }
        }
        for j in 0..p {
            if at_max[j] {
                beta[j] = signs[j] * level;
            }
        }
        last = event;
        c = correlations(&xty, &gram, &beta);
        lambda = c.lp_norm(1).min(lambda);
        if out.push(lambda, beta.clone(), &c) {
            return Ok(out.finish(Termination::Truncated));
        }
    }
    Err(CapError::DegenerateDesign(format!("no convergence within {} events", out.max_steps())))
}
