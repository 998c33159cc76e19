//! Datasets, standardization, groupings and norm configuration shared by
//! every solver.
//!
//! Coefficients are always fitted on centered, scaled predictors with no
//! intercept. The [`Standardization`] carried by a [`Dataset`] maps fitted
//! coefficients back to the units of the data that was loaded.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{CapError, Result};

/// Absolute tolerance used when checking standardization invariants.
pub const STANDARDIZE_TOL: f64 = 1e-10;

/// An `L_γ` norm exponent, `γ ∈ [1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Norm(f64);

impl Norm {
    pub const ONE: Norm = Norm(1.0);
    pub const TWO: Norm = Norm(2.0);
    pub const INF: Norm = Norm(f64::INFINITY);

    /// Builds a norm exponent. Values below 1 are accepted here (they are
    /// rejected by the operations that need convexity) but NaN is not.
    pub fn new(gamma: f64) -> Result<Norm> {
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(CapError::InvalidNorm(format!("norm exponent {gamma}")));
        }
        Ok(Norm(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }

    /// Hölder conjugate `γ* = γ/(γ-1)`, with `1* = ∞` and `∞* = 1`.
    pub fn dual(self) -> Norm {
        if self.is_inf() {
            Norm::ONE
        } else if self.0 == 1.0 {
            Norm::INF
        } else {
            Norm(self.0 / (self.0 - 1.0))
        }
    }

    /// `‖v‖_γ` of the values produced by `iter`.
    pub fn apply<I: IntoIterator<Item = f64>>(self, iter: I) -> f64 {
        let g = self.0;
        if g.is_infinite() {
            iter.into_iter().fold(0.0, |m, v| m.max(v.abs()))
        } else if g == 1.0 {
            iter.into_iter().map(f64::abs).sum()
        } else if g == 2.0 {
            iter.into_iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            // Scale by the max entry so large exponents do not overflow.
            let vals: Vec<f64> = iter.into_iter().map(f64::abs).collect();
            let m = vals.iter().cloned().fold(0.0, f64::max);
            if m == 0.0 {
                return 0.0;
            }
            m * vals.iter().map(|v| (v / m).powf(g)).sum::<f64>().powf(1.0 / g)
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Norm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Norm, D::Error> {
        struct NormVisitor;
        impl Visitor<'_> for NormVisitor {
            type Value = Norm;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number >= 1 or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Norm, E> {
                Norm::new(v).map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Norm, E> {
                self.visit_f64(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Norm, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Norm, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => Ok(Norm::INF),
                    other => other
                        .parse::<f64>()
                        .map_err(|_| E::custom(format!("invalid norm \"{v}\"")))
                        .and_then(|g| self.visit_f64(g)),
                }
            }
        }
        d.deserialize_any(NormVisitor)
    }
}

/// Ordered collection of (possibly overlapping) index groups with per-group
/// norms, an overall norm and positive group weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grouping {
    p: usize,
    groups: Vec<Vec<usize>>,
    group_norms: Vec<Norm>,
    overall_norm: Norm,
    weights: Vec<f64>,
}

/// File representation of a [`Grouping`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupingSpec {
    pub groups: Vec<Vec<usize>>,
    #[serde(default = "default_gamma0")]
    pub gamma0: Norm,
    #[serde(default)]
    pub gamma: Option<Vec<Norm>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_gamma0() -> Norm {
    Norm::ONE
}

impl Grouping {
    pub fn new(
        p: usize,
        groups: Vec<Vec<usize>>,
        group_norms: Vec<Norm>,
        overall_norm: Norm,
        weights: Vec<f64>,
    ) -> Result<Grouping> {
        if p == 0 {
            return Err(CapError::InvalidGrouping("p must be positive".into()));
        }
        if group_norms.len() != groups.len() {
            return Err(CapError::InvalidGrouping(format!(
                "{} groups but {} group norms",
                groups.len(),
                group_norms.len()
            )));
        }
        if weights.len() != groups.len() {
            return Err(CapError::InvalidGrouping(format!(
                "{} groups but {} weights",
                groups.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(CapError::InvalidGrouping(format!("weight {w} is not positive")));
        }
        let mut covered = vec![false; p];
        let mut groups = groups;
        for (k, g) in groups.iter_mut().enumerate() {
            if g.is_empty() {
                return Err(CapError::InvalidGrouping(format!("group {k} is empty")));
            }
            g.sort_unstable();
            if g.windows(2).any(|w| w[0] == w[1]) {
                return Err(CapError::InvalidGrouping(format!("group {k} repeats an index")));
            }
            for &j in g.iter() {
                if j >= p {
                    return Err(CapError::IndexOutOfRange { index: j, p });
                }
                covered[j] = true;
            }
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(CapError::InvalidGrouping(format!(
                "index {j} is not penalized by any group"
            )));
        }
        Ok(Grouping { p, groups, group_norms, overall_norm, weights })
    }

    /// Groups with one shared norm, `γ₀ = 1` and unit weights.
    pub fn uniform(p: usize, groups: Vec<Vec<usize>>, norm: Norm) -> Result<Grouping> {
        let k = groups.len();
        Grouping::new(p, groups, vec![norm; k], Norm::ONE, vec![1.0; k])
    }

    /// One group per coordinate; with `γ₀ = 1` this is the LASSO penalty.
    pub fn singletons(p: usize, norm: Norm) -> Grouping {
        Grouping::uniform(p, (0..p).map(|j| vec![j]).collect(), norm)
            .expect("singleton grouping is valid")
    }

    /// A single group covering every coordinate (the bridge penalty).
    pub fn single(p: usize, norm: Norm) -> Grouping {
        Grouping::uniform(p, vec![(0..p).collect()], norm).expect("single grouping is valid")
    }

    pub fn from_spec(spec: GroupingSpec, p: usize) -> Result<Grouping> {
        let k = spec.groups.len();
        let norms = spec.gamma.unwrap_or_else(|| vec![Norm::INF; k]);
        let weights = spec.weights.unwrap_or_else(|| vec![1.0; k]);
        Grouping::new(p, spec.groups, norms, spec.gamma0, weights)
    }

    pub fn to_spec(&self) -> GroupingSpec {
        GroupingSpec {
            groups: self.groups.clone(),
            gamma0: self.overall_norm,
            gamma: Some(self.group_norms.clone()),
            weights: Some(self.weights.clone()),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn group_norms(&self) -> &[Norm] {
        &self.group_norms
    }

    pub fn overall_norm(&self) -> Norm {
        self.overall_norm
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when the groups are pairwise disjoint.
    pub fn is_nonoverlapping(&self) -> bool {
        let total: usize = self.groups.iter().map(Vec::len).sum();
        total == self.p
    }

    /// For each coordinate, the ids of the groups that contain it.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.p];
        for (k, g) in self.groups.iter().enumerate() {
            for &j in g {
                m[j].push(k);
            }
        }
        m
    }

    /// The shared within-group norm, if every group uses the same one.
    pub fn uniform_group_norm(&self) -> Option<Norm> {
        let first = *self.group_norms.first()?;
        self.group_norms.iter().all(|g| *g == first).then_some(first)
    }

    /// Group id of each coordinate for nonoverlapping groupings.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        if !self.is_nonoverlapping() {
            return None;
        }
        let mut a = vec![0; self.p];
        for (k, g) in self.groups.iter().enumerate() {
            for &j in g {
                a[j] = k;
            }
        }
        Some(a)
    }
}

/// Coefficient vector `β` of length `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    pub fn new(beta: Vec<f64>) -> Result<Coefficients> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(CapError::InvalidData("non-finite coefficient".into()));
        }
        Ok(Coefficients(beta))
    }

    pub fn zeros(p: usize) -> Coefficients {
        Coefficients(vec![0.0; p])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Indices with nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        support(&self.0)
    }
}

impl Deref for Coefficients {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Coefficients {
    fn from(v: Vec<f64>) -> Self {
        Coefficients(v)
    }
}

/// Indices `j` with `beta[j] != 0`.
pub fn support(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
}

/// Affine map from the loaded data to the fitted (centered, scaled) data:
/// `x_fit = (x - x_mean) / x_scale`, `y_fit = y - y_mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    /// Extra per-column divisors applied by [`group_normalize`], already
    /// folded into `x_scale`.
    pub group_scale: Option<Vec<f64>>,
}

/// Design matrix and response.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    transform: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Dataset> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(CapError::InvalidData(format!("empty design {n}x{p}")));
        }
        if y.len() != n {
            return Err(CapError::DimensionMismatch(format!(
                "x has {n} rows but y has {} entries",
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(CapError::InvalidData("non-finite entry".into()));
        }
        Ok(Dataset { x, y, transform: None })
    }

    /// Builds a dataset from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Dataset> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(CapError::DimensionMismatch("ragged rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(x, DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn transform(&self) -> Option<&Standardization> {
        self.transform.as_ref()
    }

    /// True when columns have mean 0 and variance 1 and `y` has mean 0.
    pub fn standardized(&self) -> bool {
        matches!(&self.transform, Some(t) if t.group_scale.is_none())
    }

    /// True when `standardize` has been applied, possibly followed by
    /// `group_normalize`.
    pub fn centered(&self) -> bool {
        self.transform.is_some()
    }

    pub fn with_response(&self, y: DVector<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(CapError::DimensionMismatch("response length".into()));
        }
        Ok(Dataset { x: self.x.clone(), y, transform: self.transform.clone() })
    }

    /// Subset of rows, keeping the transform of `self`.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset { x, y, transform: self.transform.clone() }
    }

    /// `X'X`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.x.tr_mul(&self.x)
    }

    /// `X'y`.
    pub fn xty(&self) -> DVector<f64> {
        self.x.tr_mul(&self.y)
    }

    /// Residual `y - Xβ`.
    pub fn residual(&self, beta: &[f64]) -> DVector<f64> {
        &self.y - &self.x * DVector::from_column_slice(beta)
    }

    /// Residual sum of squares `‖y - Xβ‖²`.
    pub fn rss(&self, beta: &[f64]) -> f64 {
        self.residual(beta).norm_squared()
    }

    /// Maps coefficients fitted on this dataset back to the units of the
    /// originally loaded data. Returns `(beta, intercept)`.
    pub fn to_original_units(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        match &self.transform {
            None => (beta.to_vec(), 0.0),
            Some(t) => {
                let b: Vec<f64> = beta.iter().zip(&t.x_scale).map(|(b, s)| b / s).collect();
                let intercept =
                    t.y_mean - b.iter().zip(&t.x_mean).map(|(b, m)| b * m).sum::<f64>();
                (b, intercept)
            }
        }
    }

    /// Maps coefficients in original units to the fitted scale (the inverse
    /// of [`Dataset::to_original_units`] for the slopes).
    pub fn to_fitted_units(&self, beta: &[f64]) -> Vec<f64> {
        match &self.transform {
            None => beta.to_vec(),
            Some(t) => beta.iter().zip(&t.x_scale).map(|(b, s)| b * s).collect(),
        }
    }
}

/// Centers and scales each column to mean 0 and variance 1 (denominator
/// `n`) and centers the response. The constants are composed with any
/// transform the dataset already carries.
pub fn standardize(dataset: &Dataset) -> Result<Dataset> {
    let (n, p) = dataset.x.shape();
    if n < 2 {
        return Err(CapError::InvalidData("standardization needs n >= 2".into()));
    }
    let nf = n as f64;
    let mut x = dataset.x.clone();
    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let mut col = x.column_mut(j);
        let m = col.mean();
        col.add_scalar_mut(-m);
        let var = col.norm_squared() / nf;
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + m.abs())) {
            return Err(CapError::ConstantColumn(j));
        }
        col.scale_mut(1.0 / sd);
        mean[j] = m;
        scale[j] = sd;
    }
    let y_m = dataset.y.mean();
    let y = dataset.y.add_scalar(-y_m);
    let transform = match &dataset.transform {
        None => Standardization { x_mean: mean, x_scale: scale, y_mean: y_m, group_scale: None },
        Some(t) => Standardization {
            x_mean: (0..p).map(|j| t.x_mean[j] + t.x_scale[j] * mean[j]).collect(),
            x_scale: (0..p).map(|j| t.x_scale[j] * scale[j]).collect(),
            y_mean: t.y_mean + y_m,
            group_scale: None,
        },
    };
    Ok(Dataset { x, y, transform: Some(transform) })
}

/// Divides the predictors of each group of size `q_k` by `q_k^(1/γ̄*)`,
/// where `γ̄` is the shared within-group norm and `γ̄* = γ̄/(γ̄-1)`.
pub fn group_normalize(dataset: &Dataset, grouping: &Grouping) -> Result<Dataset> {
    if !dataset.standardized() {
        return Err(CapError::InvalidData(
            "group normalization needs a standardized dataset".into(),
        ));
    }
    if grouping.p() != dataset.p() {
        return Err(CapError::DimensionMismatch(format!(
            "grouping over {} predictors, dataset has {}",
            grouping.p(),
            dataset.p()
        )));
    }
    let gamma = grouping.uniform_group_norm().ok_or(CapError::NormMismatch)?;
    if gamma.value() <= 1.0 {
        return Err(CapError::InvalidNorm(
            "group normalization is undefined for within-group norm 1".into(),
        ));
    }
    if !grouping.is_nonoverlapping() {
        return Err(CapError::OverlappingGroups);
    }
    let dual = gamma.dual().value();
    let mut gscale = vec![1.0; dataset.p()];
    for g in grouping.groups() {
        let q = g.len() as f64;
        let s = if dual.is_infinite() { 1.0 } else { q.powf(1.0 / dual) };
        for &j in g {
            gscale[j] = s;
        }
    }
    let mut x = dataset.x.clone();
    for (j, s) in gscale.iter().enumerate() {
        x.column_mut(j).scale_mut(1.0 / s);
    }
    let t = dataset.transform.as_ref().expect("standardized");
    let transform = Standardization {
        x_mean: t.x_mean.clone(),
        x_scale: t.x_scale.iter().zip(&gscale).map(|(a, b)| a * b).collect(),
        y_mean: t.y_mean,
        group_scale: Some(gscale),
    };
    Ok(Dataset { x, y: dataset.y.clone(), transform: Some(transform) })
}
