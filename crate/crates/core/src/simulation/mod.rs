//! Simulation studies: generators, model error and replicated experiments
//! comparing several method arms on the same data.

mod generators;

pub use generators::*;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blasso::BlassoConfig;
use crate::cluster::{correlation_distance, pam_cluster};
use crate::error::{CapError, Result};
use crate::hierarchy::{compile_penalty_for, hierarchy_gap};
use crate::model::{standardize, support, Dataset, Grouping, Norm};
use crate::path::{describe, fit_path, structural_df, PathOptions, Penalty, SolverSettings, SolverTag};
use crate::selection::{aicc, cross_validate, FoldScheme};

/// Family-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Hidden-factor groups with fixed coefficients (the decaying
    /// three-group profile when `beta` is omitted and `p = 100`).
    GroupedFactor {
        k_groups: usize,
        group_size: usize,
        n: usize,
        sigma: f64,
        #[serde(default)]
        beta: Option<Vec<f64>>,
    },
    /// Hidden-factor groups with Laplace coefficients redrawn per replication.
    SmallNLargeP { k_groups: usize, group_size: usize, n: usize, sigma: f64, scheme: LaplaceScheme, alpha: f64 },
    Anova {
        level: InteractionLevel,
        n: usize,
        #[serde(default = "anova_sigma")]
        sigma: f64,
    },
    Wavelet { beta_tree: Vec<f64>, snr: f64, replicate_sets: usize },
}

fn anova_sigma() -> f64 {
    ANOVA_SIGMA
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CapError::InvalidConfig(m));
        match self {
            Family::GroupedFactor { k_groups, group_size, n, sigma, beta } => {
                if *k_groups == 0 || *group_size == 0 || *n < 4 || !(*sigma > 0.0) {
                    return bad("grouped_factor needs positive sizes, n >= 4 and sigma > 0".into());
                }
                let p = k_groups * group_size;
                match beta {
                    Some(b) if b.len() != p => bad(format!("beta has {} entries for p = {p}", b.len())),
                    None if p != 100 => bad("the default coefficient profile needs p = 100".into()),
                    _ => Ok(()),
                }
            }
            Family::SmallNLargeP { k_groups, group_size, n, sigma, alpha, .. } => {
                if *k_groups == 0 || *group_size == 0 || *n < 4 || !(*sigma > 0.0) || !(*alpha > 0.0) {
                    return bad("small_n_large_p needs positive sizes, n >= 4, sigma > 0 and alpha > 0".into());
                }
                Ok(())
            }
            Family::Anova { n, sigma, .. } => {
                if *n < 4 || !(*sigma > 0.0) {
                    return bad("anova needs n >= 4 and sigma > 0".into());
                }
                Ok(())
            }
            Family::Wavelet { beta_tree, snr, replicate_sets } => {
                if beta_tree.len() != (1 << HAAR_LEVELS) - 1 {
                    return Err(CapError::ShapeMismatch(format!(
                        "wavelet tree has {} nodes, got {} coefficients",
                        (1 << HAAR_LEVELS) - 1,
                        beta_tree.len()
                    )));
                }
                if *replicate_sets == 0 || !(*snr > 0.0) || beta_tree.iter().all(|&b| b == 0.0) {
                    return bad("wavelet needs replicate_sets >= 1, snr > 0 and a nonzero tree".into());
                }
                Ok(())
            }
        }
    }

    /// Number of true groups, for families built from hidden factors.
    fn k_groups(&self) -> Option<usize> {
        match self {
            Family::GroupedFactor { k_groups, .. } | Family::SmallNLargeP { k_groups, .. } => Some(*k_groups),
            _ => None,
        }
    }

    fn generate(&self, rng: &mut impl Rng) -> Result<Simulated> {
        match self {
            Family::GroupedFactor { k_groups, group_size, n, sigma, beta } => {
                let beta = beta.clone().map_or_else(gen_beta_411, Into::into);
                factor_problem(*k_groups, *group_size, *n, *sigma, beta.into_vec(), rng)
            }
            Family::SmallNLargeP { k_groups, group_size, n, sigma, scheme, alpha } => {
                let groups = contiguous_groups(*k_groups, *group_size);
                let beta = laplacian_beta(*scheme, *alpha, &groups, k_groups * group_size, rng);
                factor_problem(*k_groups, *group_size, *n, *sigma, beta.into_vec(), rng)
            }
            Family::Anova { level, n, sigma } => anova_problem(*level, *n, *sigma, rng),
            Family::Wavelet { beta_tree, snr, replicate_sets } => wavelet_problem(beta_tree, *snr, *replicate_sets, rng),
        }
    }
}

fn factor_problem(
    k_groups: usize,
    group_size: usize,
    n: usize,
    sigma: f64,
    beta: Vec<f64>,
    rng: &mut impl Rng,
) -> Result<Simulated> {
    let x = factor_design(k_groups, group_size, n, rng);
    let noise = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(rand_distr::StandardNormal));
    let y = &x * DVector::from_column_slice(&beta) + noise;
    Ok(Simulated {
        dataset: Dataset::new(x, y)?,
        beta: beta.into(),
        sigma,
        sigma_x: factor_covariance(k_groups, group_size),
        groups: Some(contiguous_groups(k_groups, group_size)),
        graph: None,
    })
}

/// How `λ` is chosen along each path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LambdaSelection {
    Aicc,
    Cv { folds: usize, scheme: FoldScheme },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub family: Family,
    pub replications: usize,
    pub seed: u64,
    pub lambda_selection: LambdaSelection,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CapError::InvalidConfig("replications must be at least 1".into()));
        }
        self.family.validate()
    }
}

/// Where an arm's penalty structure comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupingSource {
    /// The generator's true groups.
    True,
    /// PAM on the correlation distance with `round(factor·K)` clusters.
    Pam { factor: f64 },
    /// The generator's hierarchy, compiled to one group per node.
    Hierarchy,
    /// No structure.
    None,
}

/// One method compared in an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodArm {
    pub name: String,
    pub solver: SolverTag,
    pub grouping: GroupingSource,
    /// Within-group norm; `L∞` when omitted.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Overrides the experiment-wide selection rule.
    #[serde(default)]
    pub selection: Option<LambdaSelection>,
    /// BLasso step as a fraction of `‖X'y‖∞/n`; defaults to `10⁻²`.
    #[serde(default)]
    pub step_fraction: Option<f64>,
}

impl MethodArm {
    pub fn new(name: &str, solver: SolverTag, grouping: GroupingSource) -> MethodArm {
        MethodArm { name: name.into(), solver, grouping, gamma: None, selection: None, step_fraction: None }
    }

    pub fn with_gamma(mut self, gamma: f64) -> MethodArm {
        self.gamma = Some(gamma);
        self
    }

    pub fn with_selection(mut self, selection: LambdaSelection) -> MethodArm {
        self.selection = Some(selection);
        self
    }

    fn norm(&self) -> Result<Norm> {
        Norm::new(self.gamma.unwrap_or(f64::INFINITY))
    }
}

/// Metrics of one arm in one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub arm: String,
    pub lambda: f64,
    pub model_error: f64,
    pub n_selected_vars: usize,
    pub n_selected_groups: usize,
    pub df: Option<f64>,
    pub hierarchy_gap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_error: f64,
    /// Replications contributing to the summary.
    pub count: usize,
}

impl MetricSummary {
    /// Mean and `sd/√m` of the values (standard error 0 for one value).
    pub fn of(values: &[f64]) -> Option<MetricSummary> {
        let m = values.len();
        if m == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / m as f64;
        let std_error = if m > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        Some(MetricSummary { mean, std_error, count: m })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub model_error: MetricSummary,
    pub n_selected_vars: MetricSummary,
    pub n_selected_groups: MetricSummary,
    pub df: Option<MetricSummary>,
    pub hierarchy_gap: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub arms: Vec<MethodArm>,
    pub per_replication: Vec<ReplicationRecord>,
    pub summary: Vec<ArmSummary>,
}

impl ExperimentReport {
    pub fn summary_for(&self, arm: &str) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm)
    }

    pub fn records_for<'a>(&'a self, arm: &'a str) -> impl Iterator<Item = &'a ReplicationRecord> + 'a {
        self.per_replication.iter().filter(move |r| r.arm == arm)
    }

    /// One row per arm and metric: `arm,metric,mean,std_error,count`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("arm,metric,mean,std_error,count\n");
        for a in &self.summary {
            let rows = [
                ("model_error", Some(&a.model_error)),
                ("n_selected_vars", Some(&a.n_selected_vars)),
                ("n_selected_groups", Some(&a.n_selected_groups)),
                ("df", a.df.as_ref()),
                ("hierarchy_gap", a.hierarchy_gap.as_ref()),
            ];
            for (name, m) in rows {
                if let Some(m) = m {
                    s.push_str(&format!("{},{},{:.17e},{:.17e},{}\n", a.arm, name, m.mean, m.std_error, m.count));
                }
            }
        }
        s
    }
}

/// `(β̂ - β)'Σ_x(β̂ - β)`.
pub fn model_error(beta_hat: &[f64], beta_true: &[f64], sigma_x: &DMatrix<f64>) -> Result<f64> {
    let p = beta_true.len();
    if beta_hat.len() != p || sigma_x.nrows() != p || sigma_x.ncols() != p {
        return Err(CapError::ShapeMismatch(format!(
            "beta_hat {}, beta {}, sigma_x {}x{}",
            beta_hat.len(),
            p,
            sigma_x.nrows(),
            sigma_x.ncols()
        )));
    }
    let scale = sigma_x.amax().max(1e-300);
    if (sigma_x - sigma_x.transpose()).amax() > 1e-10 * scale {
        return Err(CapError::NotPsd);
    }
    let min_eig = SymmetricEigen::new(sigma_x.clone()).eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(CapError::NotPsd);
    }
    let d = DVector::from_iterator(p, beta_hat.iter().zip(beta_true).map(|(a, b)| a - b));
    Ok(d.dot(&(sigma_x * &d)).max(0.0))
}

/// Fitted coefficients, chosen `λ` and df of one arm.
fn fit_arm(
    arm: &MethodArm,
    data: &Dataset,
    sim: &Simulated,
    k_groups: Option<usize>,
    selection: LambdaSelection,
    seed: u64,
) -> Result<(Vec<f64>, f64, Option<f64>)> {
    let p = data.p();
    let norm = arm.norm()?;
    let penalty = match arm.grouping {
        GroupingSource::None => Penalty::None,
        GroupingSource::True => {
            let groups = sim.groups.clone().ok_or_else(|| CapError::InvalidConfig("family has no true groups".into()))?;
            Penalty::Grouping(Grouping::uniform(p, groups, norm)?)
        }
        GroupingSource::Pam { factor } => {
            let k = k_groups.ok_or_else(|| CapError::InvalidConfig("family has no group count for PAM".into()))?;
            let k = ((factor * k as f64).round() as usize).clamp(1, p);
            Penalty::Grouping(pam_cluster(&correlation_distance(data), k, seed)?.to_grouping(norm)?)
        }
        GroupingSource::Hierarchy => {
            let graph = sim.graph.clone().ok_or_else(|| CapError::InvalidConfig("family has no hierarchy".into()))?;
            if arm.solver == SolverTag::Hicap {
                Penalty::Hierarchy(graph)
            } else {
                let m = graph.len();
                Penalty::Grouping(compile_penalty_for(&graph, p, &vec![norm; m], &vec![1.0; m])?)
            }
        }
    };
    let n = data.n();
    // AIC_C is undefined from df = n - 2 on, so exact paths stop there
    let path_opts = PathOptions { max_df: Some(n.saturating_sub(2).max(1)), ..PathOptions::default() };
    let blasso = (arm.solver == SolverTag::Blasso).then(|| {
        let mut cfg = BlassoConfig::for_dataset(data);
        if let Some(f) = arm.step_fraction {
            cfg.step_size = f * data.xty().amax() / n as f64;
        }
        cfg
    });
    let settings = SolverSettings { path: path_opts, blasso };
    let grouping = penalty.grouping_for(arm.solver, p)?;
    match selection {
        LambdaSelection::Aicc => {
            let path = fit_path(data, arm.solver, &penalty, &settings)?;
            let sel = aicc(&path, data)?;
            Ok((path.beta_at(sel.chosen_lambda), sel.chosen_lambda, sel.df_at_chosen))
        }
        LambdaSelection::Cv { folds, scheme } => {
            let cv = cross_validate(data, &penalty, arm.solver, &settings, folds, scheme, seed)?;
            let lam = cv.selection.chosen_lambda;
            let df = structural_df(arm.solver, &describe(arm.solver, lam, cv.beta.clone(), &grouping)).map(|d| d as f64);
            Ok((cv.beta, lam, df))
        }
    }
}

fn run_replication(spec: &ExperimentSpec, arms: &[MethodArm], rep: usize) -> Result<Vec<ReplicationRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(rep as u64 + 1);
    let sim = spec.family.generate(&mut rng)?;
    let aux_seed: u64 = rng.random();
    let data = standardize(&sim.dataset)?;
    let k_groups = spec.family.k_groups();
    arms.iter()
        .map(|arm| {
            let selection = arm.selection.unwrap_or(spec.lambda_selection);
            let (beta_fit, lambda, df) = fit_arm(arm, &data, &sim, k_groups, selection, aux_seed)?;
            let (beta_hat, _) = data.to_original_units(&beta_fit);
            let selected = support(&beta_fit);
            let n_selected_groups = match (&sim.groups, &sim.graph) {
                (Some(groups), _) => groups.iter().filter(|g| g.iter().any(|j| beta_fit[*j] != 0.0)).count(),
                (None, Some(graph)) => graph.nodes().iter().filter(|g| g.iter().any(|j| beta_fit[*j] != 0.0)).count(),
                (None, None) => selected.len(),
            };
            let hierarchy_gap = sim.graph.as_ref().map(|g| hierarchy_gap(&selected, g)).transpose()?;
            Ok(ReplicationRecord {
                replication: rep,
                arm: arm.name.clone(),
                lambda,
                model_error: model_error(&beta_hat, &sim.beta, &sim.sigma_x)?,
                n_selected_vars: selected.len(),
                n_selected_groups,
                df,
                hierarchy_gap,
            })
        })
        .collect()
}

fn summarize(arms: &[MethodArm], records: &[ReplicationRecord]) -> Vec<ArmSummary> {
    arms.iter()
        .map(|arm| {
            let rs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.arm == arm.name).collect();
            let col = |f: &dyn Fn(&ReplicationRecord) -> Option<f64>| -> Vec<f64> { rs.iter().filter_map(|r| f(r)).collect() };
            let all = |v: Vec<f64>| MetricSummary::of(&v).expect("at least one replication");
            ArmSummary {
                arm: arm.name.clone(),
                model_error: all(col(&|r| Some(r.model_error))),
                n_selected_vars: all(col(&|r| Some(r.n_selected_vars as f64))),
                n_selected_groups: all(col(&|r| Some(r.n_selected_groups as f64))),
                df: MetricSummary::of(&col(&|r| r.df)),
                hierarchy_gap: MetricSummary::of(&col(&|r| r.hierarchy_gap.map(|g| g as f64))),
            }
        })
        .collect()
}

/// Runs every arm on each replication's data. Replications run in
/// parallel on independent seed streams, so the report depends only on
/// the spec. Any failing replication fails the whole run.
pub fn run_experiment(spec: &ExperimentSpec, arms: &[MethodArm]) -> Result<ExperimentReport> {
    spec.validate()?;
    if arms.is_empty() {
        return Err(CapError::InvalidConfig("no method arms".into()));
    }
    let mut names: Vec<&str> = arms.iter().map(|a| a.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CapError::InvalidConfig("arm names must be distinct".into()));
    }
    let per_rep: Vec<Result<Vec<ReplicationRecord>>> =
        (0..spec.replications).into_par_iter().map(|rep| run_replication(spec, arms, rep)).collect();
    let mut per_replication = Vec::with_capacity(spec.replications * arms.len());
    for r in per_rep {
        per_replication.extend(r?);
    }
    let summary = summarize(arms, &per_replication);
    Ok(ExperimentReport { spec: spec.clone(), arms: arms.to_vec(), per_replication, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_error_basics() {
        let s = DMatrix::identity(3, 3);
        assert_eq!(model_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &s).unwrap(), 0.0);
        assert_eq!(model_error(&[1.0, 0.0, 0.0], &[0.0; 3], &s).unwrap(), 1.0);
        assert!(matches!(model_error(&[0.0; 2], &[0.0; 3], &s), Err(CapError::ShapeMismatch(_))));
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert!(matches!(model_error(&[0.0; 3], &[0.0; 3], &neg), Err(CapError::NotPsd)));
    }

    #[test]
    fn model_error_matches_monte_carlo() {
        let beta = gen_beta_411();
        let s = factor_covariance(10, 10);
        let zero = vec![0.0; 100];
        let exact = model_error(&zero, &beta, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = factor_design(10, 10, 100_000, &mut rng);
        let fit = &x * DVector::from_column_slice(&beta);
        let mc = fit.norm_squared() / x.nrows() as f64;
        assert!((mc - exact).abs() / exact < 0.02, "{mc} vs {exact}");
    }

    #[test]
    fn wavelet_root_only_zero_fit() {
        let mut tree = vec![0.0; 15];
        tree[0] = 1.5;
        let sim = wavelet_problem(&tree, 0.4, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // the root column is ±1 at every time point
        let me = model_error(&[0.0; 15], &sim.beta, &sim.sigma_x).unwrap();
        assert!((me - 1.5 * 1.5).abs() < 1e-12);
    }

    fn small_spec(selection: LambdaSelection) -> ExperimentSpec {
        ExperimentSpec {
            family: Family::SmallNLargeP {
                k_groups: 4,
                group_size: 3,
                n: 40,
                sigma: 1.0,
                scheme: LaplaceScheme::Grouped,
                alpha: 0.5,
            },
            replications: 3,
            seed: 11,
            lambda_selection: selection,
        }
    }

    fn small_arms() -> Vec<MethodArm> {
        vec![
            MethodArm::new("lasso", SolverTag::Lasso, GroupingSource::None),
            MethodArm::new("icap_true", SolverTag::Icap, GroupingSource::True),
            MethodArm::new("icap_pam", SolverTag::Icap, GroupingSource::Pam { factor: 1.0 }),
        ]
    }

    #[test]
    fn reports_are_deterministic_and_well_formed() {
        let spec = small_spec(LambdaSelection::Aicc);
        let a = run_experiment(&spec, &small_arms()).unwrap();
        let b = run_experiment(&spec, &small_arms()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.per_replication.len(), 9);
        for r in &a.per_replication {
            assert!(r.model_error >= 0.0);
            assert!(r.n_selected_groups <= 4 && r.n_selected_vars <= 12);
            assert!(r.hierarchy_gap.is_none());
        }
        let s = a.summary_for("lasso").unwrap();
        let me: Vec<f64> = a.records_for("lasso").map(|r| r.model_error).collect();
        let mean = me.iter().sum::<f64>() / 3.0;
        let sd = (me.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((s.model_error.mean - mean).abs() < 1e-12);
        assert!((s.model_error.std_error - sd / 3f64.sqrt()).abs() < 1e-12);
        assert!(a.summary_csv().lines().count() > 3);
        let spec2 = ExperimentSpec { seed: 12, ..spec };
        assert_ne!(run_experiment(&spec2, &small_arms()).unwrap().per_replication, a.per_replication);
    }

    #[test]
    fn cross_validated_arms_run() {
        let spec = small_spec(LambdaSelection::Cv { folds: 5, scheme: FoldScheme::Random });
        let r = run_experiment(&spec, &small_arms()[..2]).unwrap();
        assert_eq!(r.per_replication.len(), 6);
    }

    #[test]
    fn hierarchical_families_report_gaps() {
        let spec = ExperimentSpec {
            family: Family::Anova { level: InteractionLevel::Moderate, n: 121, sigma: ANOVA_SIGMA },
            replications: 2,
            seed: 3,
            lambda_selection: LambdaSelection::Aicc,
        };
        let arms = [
            MethodArm::new("lasso", SolverTag::Lasso, GroupingSource::None),
            MethodArm::new("cap", SolverTag::LinfCap, GroupingSource::Hierarchy),
        ];
        let r = run_experiment(&spec, &arms).unwrap();
        for rec in r.records_for("cap") {
            assert_eq!(rec.hierarchy_gap, Some(0));
        }
        assert!(r.records_for("lasso").all(|rec| rec.hierarchy_gap.is_some()));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec(LambdaSelection::Aicc);
        spec.replications = 0;
        assert!(run_experiment(&spec, &small_arms()).is_err());
        let spec = small_spec(LambdaSelection::Aicc);
        assert!(run_experiment(&spec, &[]).is_err());
        let dup = vec![small_arms()[0].clone(), small_arms()[0].clone()];
        assert!(run_experiment(&spec, &dup).is_err());
        let hier = [MethodArm::new("h", SolverTag::LinfCap, GroupingSource::Hierarchy)];
        assert!(matches!(run_experiment(&spec, &hier), Err(CapError::InvalidConfig(_))));
        let wrong = Family::Wavelet { beta_tree: vec![1.0; 14], snr: 0.4, replicate_sets: 5 };
        assert!(matches!(wrong.validate(), Err(CapError::ShapeMismatch(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = small_spec(LambdaSelection::Cv { folds: 10, scheme: FoldScheme::Random });
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"family\":\"small_n_large_p\""));
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), spec);
        let arm: MethodArm =
            serde_json::from_str(r#"{"name":"g","solver":"blasso","grouping":{"kind":"pam","factor":0.5},"gamma":2}"#)
                .unwrap();
        assert_eq!(arm.gamma, Some(2.0));
    }
}
