//! Hierarchies as directed acyclic graphs over groups of predictors, their
//! compilation into overlapping CAP groupings, and the hierarchy gap.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::model::{Grouping, Norm};

/// DAG whose nodes are disjoint sets of predictor indices. An edge
/// `parent → child` means the child may only enter after the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyGraph {
    nodes: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

/// File representation of a hierarchy with its penalty parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub nodes: Vec<Vec<usize>>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub gamma: Option<Vec<Norm>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl HierarchyGraph {
    pub fn new(nodes: Vec<Vec<usize>>, edges: Vec<(usize, usize)>) -> Result<HierarchyGraph> {
        let m = nodes.len();
        let mut seen = BTreeSet::new();
        let mut nodes = nodes;
        for (id, node) in nodes.iter_mut().enumerate() {
            if node.is_empty() {
                return Err(CapError::InvalidGraph(format!("node {id} has no indices")));
            }
            node.sort_unstable();
            for &j in node.iter() {
                if !seen.insert(j) {
                    return Err(CapError::InvalidGraph(format!("index {j} appears in two nodes")));
                }
            }
        }
        let mut edges: Vec<(usize, usize)> = edges;
        edges.sort_unstable();
        edges.dedup();
        let mut children = vec![Vec::new(); m];
        let mut parents = vec![Vec::new(); m];
        for &(a, b) in &edges {
            if a >= m || b >= m {
                return Err(CapError::InvalidGraph(format!("edge ({a}, {b}) names a missing node")));
            }
            if a == b {
                return Err(CapError::CyclicGraph);
            }
            children[a].push(b);
            parents[b].push(a);
        }
        // Kahn's algorithm; leftover nodes lie on a cycle.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..m).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(m);
        while let Some(v) = queue.pop_front() {
            topo.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if topo.len() != m {
            return Err(CapError::CyclicGraph);
        }
        Ok(HierarchyGraph { nodes, edges, children, parents, topo })
    }

    pub fn from_spec(spec: &HierarchySpec) -> Result<HierarchyGraph> {
        HierarchyGraph::new(spec.nodes.clone(), spec.edges.iter().map(|e| (e[0], e[1])).collect())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<usize>] {
        &self.nodes
    }

    pub fn node(&self, m: usize) -> &[usize] {
        &self.nodes[m]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn children(&self, m: usize) -> &[usize] {
        &self.children[m]
    }

    pub fn parents(&self, m: usize) -> &[usize] {
        &self.parents[m]
    }

    /// Node ids in an order where parents precede children.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Every node has at most one parent.
    pub fn is_tree(&self) -> bool {
        self.parents.iter().all(|p| p.len() <= 1)
    }

    /// One past the largest predictor index used by any node.
    pub fn p(&self) -> usize {
        self.nodes.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Node id of each predictor index below `p`, if any.
    pub fn node_of(&self, p: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; p.max(self.p())];
        for (m, node) in self.nodes.iter().enumerate() {
            for &j in node {
                out[j] = Some(m);
            }
        }
        out
    }

    fn reach(&self, m: usize, next: &[Vec<usize>]) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = next[m].clone();
        let mut out = Vec::new();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                out.push(v);
                stack.extend(next[v].iter().copied());
            }
        }
        out.sort_unstable();
        out
    }

    /// Strict descendants of node `m`.
    pub fn descendants(&self, m: usize) -> Vec<usize> {
        self.reach(m, &self.children)
    }

    /// Strict ancestors of node `m`.
    pub fn ancestors(&self, m: usize) -> Vec<usize> {
        self.reach(m, &self.parents)
    }

    /// Indices of node `m` and all its descendants, sorted.
    pub fn subtree_indices(&self, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.nodes[m].clone();
        for d in self.descendants(m) {
            idx.extend_from_slice(&self.nodes[d]);
        }
        idx.sort_unstable();
        idx
    }
}

/// Compiles the hierarchy into an overlapping grouping over the indices
/// used by the graph: one group per node holding the node and all its
/// descendants, with `γ₀ = 1`.
pub fn compile_penalty(graph: &HierarchyGraph, gamma: &[Norm], weights: &[f64]) -> Result<Grouping> {
    compile_penalty_for(graph, graph.p(), gamma, weights)
}

/// As [`compile_penalty`] over `p` predictors; indices outside every node
/// get singleton ∞-norm groups of weight 1.
pub fn compile_penalty_for(
    graph: &HierarchyGraph,
    p: usize,
    gamma: &[Norm],
    weights: &[f64],
) -> Result<Grouping> {
    if gamma.len() != graph.len() || weights.len() != graph.len() {
        return Err(CapError::InvalidGraph(format!(
            "{} nodes but {} norms and {} weights",
            graph.len(),
            gamma.len(),
            weights.len()
        )));
    }
    if let Some(g) = gamma.iter().find(|g| g.value() <= 1.0) {
        return Err(CapError::InvalidNorm(format!("hierarchy norms must exceed 1, got {g}")));
    }
    if graph.p() > p {
        return Err(CapError::IndexOutOfRange { index: graph.p() - 1, p });
    }
    let mut groups: Vec<Vec<usize>> = (0..graph.len()).map(|m| graph.subtree_indices(m)).collect();
    let mut norms = gamma.to_vec();
    let mut w = weights.to_vec();
    let node_of = graph.node_of(p);
    for (j, owner) in node_of.iter().enumerate().take(p) {
        if owner.is_none() {
            groups.push(vec![j]);
            norms.push(Norm::INF);
            w.push(1.0);
        }
    }
    Grouping::new(p, groups, norms, Norm::ONE, w)
}

/// Checks the three conditions under which indices `i1` are unpenalized
/// at the margin once `i2` is nonzero: `γ₀ = 1` and every `γ_k > 1`; every
/// group containing `i1` contains `i2`; some group contains `i2` but not
/// `i1`. With these roles `i1` must enter the model no later than `i2`.
pub fn validate_theorem1(grouping: &Grouping, i1: &[usize], i2: &[usize]) -> bool {
    if !grouping.overall_norm().is_one() || grouping.group_norms().iter().any(|g| g.value() <= 1.0) {
        return false;
    }
    let contains = |g: &[usize], s: &[usize]| s.iter().all(|j| g.binary_search(j).is_ok());
    let cond2 = grouping.groups().iter().all(|g| !contains(g, i1) || contains(g, i2));
    let cond3 = grouping.groups().iter().any(|g| contains(g, i2) && !contains(g, i1));
    cond2 && cond3
}

/// Main effects `0..d` followed by the interactions `(i, j)`, `i < j`, in
/// lexicographic order.
pub fn anova_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// Two-way ANOVA hierarchy: each main effect is a parent of every
/// interaction that involves it.
pub fn build_anova_graph(d: usize) -> HierarchyGraph {
    assert!(d >= 2, "ANOVA hierarchy needs d >= 2");
    let pairs = anova_pairs(d);
    let nodes: Vec<Vec<usize>> = (0..d + pairs.len()).map(|j| vec![j]).collect();
    let mut edges = Vec::with_capacity(2 * pairs.len());
    for (k, &(i, j)) in pairs.iter().enumerate() {
        edges.push((i, d + k));
        edges.push((j, d + k));
    }
    HierarchyGraph::new(nodes, edges).expect("ANOVA graph is a valid DAG")
}

/// Haar wavelet tree with `levels` levels sampled at `time_points` equally
/// spaced points `(m + ½)/T`. Column `2^i - 1 + j` holds wavelet `(i, j)`,
/// which is `-1` on `[j/2^i, (j+½)/2^i)`, `+1` on `[(j+½)/2^i, (j+1)/2^i)`
/// and 0 elsewhere; its parent is `(i-1, ⌊j/2⌋)`.
pub fn build_haar_tree(levels: usize, time_points: usize) -> Result<(HierarchyGraph, DMatrix<f64>)> {
    if levels == 0 || levels > 30 {
        return Err(CapError::InvalidShape(format!("levels = {levels}")));
    }
    if !time_points.is_power_of_two() || time_points < (1usize << levels) {
        return Err(CapError::InvalidShape(format!(
            "time_points = {time_points} must be a power of two >= 2^levels = {}",
            1usize << levels
        )));
    }
    let p = (1usize << levels) - 1;
    let mut x = DMatrix::zeros(time_points, p);
    let mut edges = Vec::new();
    for i in 0..levels {
        let width = 1usize << i;
        for j in 0..width {
            let col = width - 1 + j;
            if i > 0 {
                edges.push(((width >> 1) - 1 + j / 2, col));
            }
            for m in 0..time_points {
                // scaled position on level i: u in [0, 2^i)
                let u = (m as f64 + 0.5) / time_points as f64 * width as f64;
                let v = u - j as f64;
                x[(m, col)] = if (0.0..0.5).contains(&v) {
                    -1.0
                } else if (0.5..1.0).contains(&v) {
                    1.0
                } else {
                    0.0
                };
            }
        }
    }
    let graph = HierarchyGraph::new((0..p).map(|j| vec![j]).collect(), edges)?;
    Ok((graph, x))
}

/// Adds, for every selected index, the indices of all ancestor nodes.
pub fn ancestral_closure(selected: &[usize], graph: &HierarchyGraph) -> Result<Vec<usize>> {
    let node_of = graph.node_of(0);
    let mut out: BTreeSet<usize> = BTreeSet::new();
    for &j in selected {
        let m = node_of.get(j).copied().flatten().ok_or(CapError::UnknownIndex(j))?;
        out.insert(j);
        for a in graph.ancestors(m) {
            out.extend(graph.node(a).iter().copied());
        }
    }
    Ok(out.into_iter().collect())
}

/// Number of indices that must be added to `selected` to respect the
/// hierarchy.
pub fn hierarchy_gap(selected: &[usize], graph: &HierarchyGraph) -> Result<usize> {
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let closure = ancestral_closure(selected, graph)?;
    Ok(closure.iter().filter(|j| !sel.contains(j)).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> HierarchyGraph {
        HierarchyGraph::new(vec![vec![0], vec![1]], vec![(0, 1)]).unwrap()
    }

    #[test]
    fn chain_compiles_to_nested_groups() {
        let g = compile_penalty(&chain(), &[Norm::TWO, Norm::TWO], &[1.0, 1.0]).unwrap();
        assert_eq!(g.groups(), &[vec![0, 1], vec![1]]);
        assert!(g.overall_norm().is_one());
        // T(β) = ‖(β₁, β₂)‖₂ + |β₂|
        let t = crate::penalty::evaluate(&[3.0, 4.0], &g).unwrap().total;
        assert!((t - 9.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_node() {
        let g = HierarchyGraph::new(vec![vec![0]], vec![]).unwrap();
        let c = compile_penalty(&g, &[Norm::INF], &[1.0]).unwrap();
        assert_eq!(c.groups(), &[vec![0]]);
    }

    #[test]
    fn uncovered_indices_get_singletons() {
        let c = compile_penalty_for(&chain(), 4, &[Norm::INF; 2], &[1.0; 2]).unwrap();
        assert_eq!(c.groups(), &[vec![0, 1], vec![1], vec![2], vec![3]]);
        assert!(c.group_norms()[3].is_inf());
    }

    #[test]
    fn compile_errors() {
        let cyc = HierarchyGraph::new(vec![vec![0], vec![1]], vec![(0, 1), (1, 0)]);
        assert!(matches!(cyc, Err(CapError::CyclicGraph)));
        assert!(matches!(
            compile_penalty(&chain(), &[Norm::ONE, Norm::TWO], &[1.0, 1.0]),
            Err(CapError::InvalidNorm(_))
        ));
    }

    #[test]
    fn anova_three_groups() {
        let g = build_anova_graph(3);
        let c = compile_penalty(&g, &[Norm::TWO; 6], &[1.0; 6]).unwrap();
        // interactions: 3 = (0,1), 4 = (0,2), 5 = (1,2)
        assert_eq!(c.group(0), &[0, 3, 4]);
        assert_eq!(c.group(1), &[1, 3, 5]);
        assert_eq!(c.group(2), &[2, 4, 5]);
        assert_eq!(c.group(3), &[3]);
        // each interaction coefficient is penalized by three groups
        let counts: Vec<usize> = c.memberships().iter().map(Vec::len).collect();
        assert_eq!(counts, vec![1, 1, 1, 3, 3, 3]);
    }

    #[test]
    fn anova_sizes() {
        for (d, nodes, edges) in [(2, 3, 2), (4, 10, 12), (10, 55, 90)] {
            let g = build_anova_graph(d);
            assert_eq!(g.len(), nodes);
            assert_eq!(g.edges().len(), edges);
            assert_eq!(g.p(), nodes);
            assert!(!g.is_tree());
        }
    }

    #[test]
    fn nesting_condition_cases() {
        let g = compile_penalty(&chain(), &[Norm::TWO; 2], &[1.0; 2]).unwrap();
        assert!(validate_theorem1(&g, &[0], &[1]));
        assert!(!validate_theorem1(&g, &[1], &[0]));
        assert!(!validate_theorem1(&g, &[0], &[0]));
        let flat = Grouping::uniform(4, vec![vec![0, 1], vec![2, 3]], Norm::TWO).unwrap();
        assert!(!validate_theorem1(&flat, &[0, 1], &[2, 3]));
        let linf1 = Grouping::uniform(2, vec![vec![0, 1], vec![1]], Norm::ONE).unwrap();
        assert!(!validate_theorem1(&linf1, &[0], &[1]));
    }

    #[test]
    fn haar_single_level() {
        let (g, x) = build_haar_tree(1, 2).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(x.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn haar_four_levels() {
        let (g, x) = build_haar_tree(4, 16).unwrap();
        assert_eq!(x.shape(), (16, 15));
        assert!(g.is_tree());
        assert_eq!(g.parents(14), &[6]);
        assert_eq!(g.parents(3), &[1]);
        // depth 4: leaf 7 -> 3 -> 1 -> 0
        assert_eq!(g.ancestors(7), vec![0, 1, 3]);
        for i in 0..4usize {
            let lo = (1 << i) - 1;
            let hi = (1 << (i + 1)) - 1;
            for a in lo..hi {
                assert_eq!(x.column(a).sum(), 0.0);
                assert_eq!(x.column(a).norm_squared(), (16 >> i) as f64);
                for b in a + 1..hi {
                    assert_eq!(x.column(a).dot(&x.column(b)), 0.0);
                }
            }
        }
        // Haar columns are mutually orthogonal across levels as well
        let gram = x.tr_mul(&x);
        for a in 0..15 {
            for b in 0..15 {
                if a != b {
                    assert_eq!(gram[(a, b)], 0.0);
                }
            }
        }
        assert!(matches!(build_haar_tree(4, 8), Err(CapError::InvalidShape(_))));
        assert!(matches!(build_haar_tree(2, 12), Err(CapError::InvalidShape(_))));
    }

    #[test]
    fn gap_examples() {
        let g = build_anova_graph(4);
        // interaction (1,2) is index 4 + position of (1,2) = 4 + 3
        let idx = 4 + anova_pairs(4).iter().position(|&p| p == (1, 2)).unwrap();
        assert_eq!(hierarchy_gap(&[idx], &g).unwrap(), 2);
        assert_eq!(hierarchy_gap(&[0, 1, 2, 3], &g).unwrap(), 0);
        assert_eq!(hierarchy_gap(&[], &g).unwrap(), 0);
        assert!(matches!(hierarchy_gap(&[99], &g), Err(CapError::UnknownIndex(99))));
    }

    #[test]
    fn spec_roundtrip() {
        let json = r#"{"nodes": [[0],[1],[2]], "edges": [[0,2],[1,2]], "gamma": ["inf","inf","inf"], "weights": [1,1,1]}"#;
        let spec: HierarchySpec = serde_json::from_str(json).unwrap();
        let g = HierarchyGraph::from_spec(&spec).unwrap();
        assert_eq!(g.parents(2), &[0, 1]);
        assert!(!g.is_tree());
    }

    fn random_dag() -> impl Strategy<Value = HierarchyGraph> {
        (2usize..9).prop_flat_map(|m| {
            prop::collection::vec((0..m, 0..m), 0..2 * m).prop_map(move |pairs| {
                let edges = pairs.into_iter().filter(|(a, b)| a < b).collect();
                HierarchyGraph::new((0..m).map(|j| vec![j]).collect(), edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn compiled_groups_nest_descendants(g in random_dag()) {
            let c = compile_penalty(&g, &vec![Norm::INF; g.len()], &vec![1.0; g.len()]).unwrap();
            for &(a, b) in g.edges() {
                prop_assert!(validate_theorem1(&c, g.node(a), g.node(b)));
                for d in g.descendants(a) {
                    prop_assert!(validate_theorem1(&c, g.node(a), g.node(d)));
                }
            }
        }

        #[test]
        fn closure_has_zero_gap(g in random_dag(), sel in prop::collection::btree_set(0usize..9, 0..5)) {
            let sel: Vec<usize> = sel.into_iter().filter(|&j| j < g.p()).collect();
            let cl = ancestral_closure(&sel, &g).unwrap();
            prop_assert_eq!(hierarchy_gap(&cl, &g).unwrap(), 0);
        }

        #[test]
        fn tree_groups_are_subtrees(levels in 1usize..5) {
            let (g, _) = build_haar_tree(levels, 1 << levels).unwrap();
            let c = compile_penalty(&g, &vec![Norm::INF; g.len()], &vec![1.0; g.len()]).unwrap();
            for (m, grp) in c.groups().iter().enumerate() {
                // closed under children, and the root m is the only member
                // whose parent lies outside
                for &j in grp {
                    for &ch in g.children(j) {
                        prop_assert!(grp.contains(&ch));
                    }
                    if j != m {
                        prop_assert!(grp.contains(&g.parents(j)[0]));
                    }
                }
            }
        }
    }
}
