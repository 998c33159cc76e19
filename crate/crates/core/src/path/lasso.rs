//! Homotopy (LARS with drops) for the L1 penalty.

use nalgebra::{DMatrix, DVector};

use super::{correlations, solve_checked, PathBuilder, PathOptions, RegularizationPath, SolverTag, Termination};
use crate::error::{CapError, Result};
use crate::model::{Dataset, Grouping, Norm};

pub fn lasso_path(dataset: &Dataset) -> Result<RegularizationPath> {
    lasso_path_with(dataset, &PathOptions::default())
}

enum Event {
    End,
    Enter(usize),
    Drop(usize),
}

pub fn lasso_path_with(dataset: &Dataset, opts: &PathOptions) -> Result<RegularizationPath> {
    let p = dataset.p();
    let gram = dataset.gram();
    let xty = dataset.xty();
    let mut out = PathBuilder::new(SolverTag::Lasso, Grouping::singletons(p, Norm::ONE), dataset, opts);

    let mut beta = vec![0.0; p];
    let mut c = xty.clone();
    let lambda0 = c.amax();
    out.set_lambda0(lambda0);
    if lambda0 <= 1e-300 {
        out.push(0.0, beta, &c);
        return Ok(out.finish(Termination::Complete));
    }
    let tie = 1e-12 * lambda0;
    // an event reversing the previous one is only accepted after a real step
    let veto = 1e-12 * lambda0;
    let mut active: Vec<usize> = (0..p).filter(|&j| c[j].abs() >= lambda0 - tie).collect();
    let mut signs = vec![0.0; p];
    for &j in &active {
        signs[j] = c[j].signum();
    }
    let mut lambda = lambda0;
    out.push(lambda, beta.clone(), &c);
    let floor = out.lambda_floor();
    let mut last: Option<(bool, usize)> = None;

    for _ in 0..out.max_steps() {
        let q = active.len();
        let ga = DMatrix::from_fn(q, q, |a, b| gram[(active[a], active[b])]);
        let sa = DVector::from_iterator(q, active.iter().map(|&j| signs[j]));
        let d = solve_checked(&ga, &sa)?;
        let mut dir = vec![0.0; p];
        for (a, &j) in active.iter().enumerate() {
            dir[j] = d[a];
        }
        let e = &gram * DVector::from_column_slice(&dir);

        let mut delta = lambda;
        let mut event = Event::End;
        let mut in_active = vec![false; p];
        for &j in &active {
            in_active[j] = true;
        }
        for j in 0..p {
            if in_active[j] {
                continue;
            }
            let reverses = last == Some((false, j));
            // c_j - δ e_j = ±(λ - δ)
            for s in [1.0, -1.0] {
                let den = 1.0 - s * e[j];
                if den > 1e-14 {
                    let dl = (lambda - s * c[j]).max(0.0) / den;
                    if dl < delta && !(reverses && dl <= veto) {
                        delta = dl;
                        event = Event::Enter(j);
                    }
                }
            }
        }
        for &j in &active {
            if dir[j] == 0.0 {
                continue;
            }
            // only coefficients heading towards zero can drop
            let dl = -beta[j] / dir[j];
            if beta[j] * dir[j] < 0.0 && dl < delta && !(last == Some((true, j)) && dl <= veto) {
                delta = dl;
                event = Event::Drop(j);
            }
        }

        let target = lambda - delta;
        if target <= floor {
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
        match event {
            Event::End => unreachable!("end of path handled above"),
            Event::Enter(j) => {
                c = correlations(&xty, &gram, &beta);
                signs[j] = c[j].signum();
                active.push(j);
                active.sort_unstable();
                last = Some((true, j));
            }
            Event::Drop(j) => {
                beta[j] = 0.0;
                signs[j] = 0.0;
                active.retain(|&k| k != j);
                last = Some((false, j));
            }
        }
        c = correlations(&xty, &gram, &beta);
        lambda = c.amax().min(lambda);
        if out.push(lambda, beta.clone(), &c) {
            return Ok(out.finish(Termination::Truncated));
        }
        if active.is_empty() {
            return Err(CapError::DegenerateDesign("active set emptied before λ = 0".into()));
        }
    }
    Err(CapError::DegenerateDesign(format!("no convergence within {} events", out.max_steps())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::standardize;
    use approx::assert_abs_diff_eq;

    /// Orthogonal design with `X'X = I`: `x = e_1, e_2` in R^3.
    fn orthonormal(xty: [f64; 2]) -> Dataset {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![xty[0], xty[1], 0.7]);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn orthonormal_soft_threshold() {
        let path = lasso_path(&orthonormal([3.0, 1.0])).unwrap();
        let l = path.lambdas();
        assert_abs_diff_eq!(l[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 1.0, epsilon = 1e-12);
        assert_eq!(*l.last().unwrap(), 0.0);
        for lam in [2.5, 1.5, 0.8, 0.2] {
            let b = path.beta_at(lam);
            assert_abs_diff_eq!(b[0], (3.0f64 - lam).max(0.0), epsilon = 1e-12);
            assert_abs_diff_eq!(b[1], (1.0f64 - lam).max(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn orthogonal_response() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.0]);
        let d = Dataset::new(x, DVector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        let path = lasso_path(&d).unwrap();
        assert_eq!(path.breakpoints.len(), 1);
        assert_eq!(path.breakpoints[0].lambda, 0.0);
        assert_eq!(path.breakpoints[0].beta, vec![0.0]);
    }

    #[test]
    fn one_dimensional() {
        let d = standardize(
            &Dataset::from_rows(&[vec![1.0], vec![2.0], vec![4.0], vec![7.0]], &[0.5, 1.0, 3.0, 2.0]).unwrap(),
        )
        .unwrap();
        let cxy = d.xty()[0];
        let n = d.n() as f64;
        let path = lasso_path(&d).unwrap();
        for lam in [0.9 * cxy, 0.5 * cxy, 0.1 * cxy] {
            assert_abs_diff_eq!(path.beta_at(lam)[0], (cxy - lam) / n, epsilon = 1e-12);
        }
    }

    #[test]
    fn drop_event_occurs() {
        // a classic design where a variable leaves the active set
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.9, 0.1, -1.0, -0.8, 0.3, 0.5, 0.7, -1.0, -0.5, -0.8, 0.6],
        );
        let y = DVector::from_vec(vec![1.0, -0.9, 0.2, -0.3]);
        let d = standardize(&Dataset::new(x, y).unwrap()).unwrap();
        let path = lasso_path(&d).unwrap();
        let g = Grouping::singletons(3, Norm::ONE);
        for w in path.breakpoints.windows(2) {
            assert!(w[0].lambda > w[1].lambda);
            for t in [0.25, 0.5, 0.75] {
                let lam = w[0].lambda + t * (w[1].lambda - w[0].lambda);
                let r = super::super::verify_kkt(&path, &d, &g, lam).unwrap();
                assert!(r.max_violation < 1e-8, "{r:?}");
            }
        }
    }
}
