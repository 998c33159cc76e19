//! Invariants of the exact path tracers on random small problems.

use cap_core::hierarchy::{compile_penalty_for, hierarchy_gap};
use cap_core::model::support;
use cap_core::path::{fit_path, verify_kkt, Penalty, RegularizationPath, SolverSettings, SolverTag};
use cap_core::penalty::evaluate;
use cap_core::selection::df_estimate;
use cap_core::{standardize, Dataset, Grouping, HierarchyGraph, Norm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Case {
    data: Dataset,
    solver: SolverTag,
    penalty: Penalty,
    grouping: Grouping,
    graph: Option<HierarchyGraph>,
}

fn dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = DVector::from_fn(p, |_, _| if rng.random_bool(0.6) { rng.random_range(-2.0..2.0) } else { 0.0 });
    let y = &x * beta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    standardize(&Dataset::new(x, y).unwrap()).unwrap()
}

fn partition(rng: &mut ChaCha8Rng, p: usize) -> Vec<Vec<usize>> {
    let k = rng.random_range(1..=p);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    let mut groups = vec![Vec::new(); k];
    for (i, j) in order.into_iter().enumerate() {
        groups[if i < k { i } else { rng.random_range(0..k) }].push(j);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Singleton nodes; every node after the first gets one earlier parent
/// (a tree) or up to two (a DAG).
fn graph(rng: &mut ChaCha8Rng, p: usize, tree: bool) -> HierarchyGraph {
    let mut edges = Vec::new();
    for j in 1..p {
        edges.push((rng.random_range(0..j), j));
        if !tree && j > 1 && rng.random_bool(0.5) {
            let q = rng.random_range(0..j);
            if !edges.contains(&(q, j)) {
                edges.push((q, j));
            }
        }
    }
    HierarchyGraph::new((0..p).map(|j| vec![j]).collect(), edges).unwrap()
}

fn case(seed: u64, solver: SolverTag) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=6);
    let n = rng.random_range(p + 4..=20);
    let data = dataset(&mut rng, n, p);
    let (penalty, graph) = match solver {
        SolverTag::Icap => (Penalty::Grouping(Grouping::uniform(p, partition(&mut rng, p), Norm::INF).unwrap()), None),
        SolverTag::Hicap => {
            let g = graph(&mut rng, p, true);
            (Penalty::Hierarchy(g.clone()), Some(g))
        }
        SolverTag::LinfCap => {
            let g = graph(&mut rng, p, false);
            let c = compile_penalty_for(&g, p, &vec![Norm::INF; g.len()], &vec![1.0; g.len()]).unwrap();
            (Penalty::Grouping(c), Some(g))
        }
        _ => (Penalty::None, None),
    };
    let grouping = penalty.grouping_for(solver, p).unwrap();
    Case { data, solver, penalty, grouping, graph }
}

fn trace(c: &Case) -> RegularizationPath {
    fit_path(&c.data, c.solver, &c.penalty, &SolverSettings::default()).unwrap()
}

fn solver() -> impl Strategy<Value = SolverTag> {
    prop_oneof![
        Just(SolverTag::Lasso),
        Just(SolverTag::Ilasso),
        Just(SolverTag::Icap),
        Just(SolverTag::Hicap),
        Just(SolverTag::LinfCap),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_holds_inside_every_segment(seed in 0u64..10_000, solver in solver(), ts in prop::collection::vec(0.01f64..0.99, 3)) {
        let c = case(seed, solver);
        let path = trace(&c);
        for w in path.breakpoints.windows(2) {
            let (hi, lo) = (w[0].lambda, w[1].lambda);
            for &t in &ts {
                let lambda = lo + t * (hi - lo);
                let r = verify_kkt(&path, &c.data, &c.grouping, lambda).unwrap();
                prop_assert!(r.max_violation <= 1e-8, "{:?} violation {} at λ = {}", solver, r.max_violation, lambda);
            }
        }
    }

    #[test]
    fn residual_and_penalty_are_monotone(seed in 0u64..10_000, solver in solver()) {
        let c = case(seed, solver);
        let path = trace(&c);
        let tol = 1e-9 * (1.0 + c.data.y().norm_squared());
        for w in path.breakpoints.windows(2) {
            prop_assert!(w[1].lambda < w[0].lambda);
            prop_assert!(c.data.rss(&w[1].beta) <= c.data.rss(&w[0].beta) + tol);
            let t0 = evaluate(&w[0].beta, &c.grouping).unwrap().total;
            let t1 = evaluate(&w[1].beta, &c.grouping).unwrap().total;
            prop_assert!(t1 >= t0 - 1e-9 * (1.0 + t0));
        }
    }

    #[test]
    fn active_icap_groups_share_the_correlation_level(seed in 0u64..10_000) {
        let c = case(seed, SolverTag::Icap);
        let path = trace(&c);
        for bp in &path.breakpoints {
            let corr = c.data.x().tr_mul(&c.data.residual(&bp.beta));
            let level = |k: usize| c.grouping.group(k).iter().map(|&j| corr[j].abs()).sum::<f64>();
            let tol = 1e-8 * (1.0 + bp.lambda);
            for k in 0..c.grouping.len() {
                if bp.active_groups.contains(&k) {
                    prop_assert!((level(k) - bp.lambda).abs() <= tol, "group {} level {} vs λ {}", k, level(k), bp.lambda);
                } else {
                    prop_assert!(level(k) <= bp.lambda + tol);
                }
            }
        }
    }

    #[test]
    fn hierarchical_paths_never_break_the_hierarchy(seed in 0u64..10_000, tree in any::<bool>(), ts in prop::collection::vec(0.0f64..1.0, 4)) {
        let c = case(seed, if tree { SolverTag::Hicap } else { SolverTag::LinfCap });
        let graph = c.graph.as_ref().unwrap();
        let path = trace(&c);
        for bp in &path.breakpoints {
            prop_assert_eq!(hierarchy_gap(&support(&bp.beta), graph).unwrap(), 0);
        }
        let (hi, lo) = (path.lambda_max(), path.lambda_min());
        for &t in &ts {
            let beta = path.beta_at(lo + t * (hi - lo));
            prop_assert_eq!(hierarchy_gap(&support(&beta), graph).unwrap(), 0);
        }
    }

    #[test]
    fn df_grows_except_at_drops(seed in 0u64..10_000, solver in prop_oneof![Just(SolverTag::Lasso), Just(SolverTag::Ilasso), Just(SolverTag::Icap)]) {
        let c = case(seed, solver);
        let path = trace(&c);
        for w in path.breakpoints.windows(2) {
            let (a, b) = (df_estimate(&w[0], solver).unwrap(), df_estimate(&w[1], solver).unwrap());
            if b < a {
                let dropped = support(&w[0].beta).iter().any(|j| w[1].beta[*j] == 0.0)
                    || w[0].active_groups.iter().any(|k| !w[1].active_groups.contains(k));
                prop_assert!(dropped, "df fell {} -> {} without a drop", a, b);
            }
        }
    }
}
