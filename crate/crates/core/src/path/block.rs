//! Exact path for `Σ_k α_k‖β_{G_k}‖∞` with overlapping groups, covering
//! tree hierarchies (hiCAP) and general hierarchies such as ANOVA DAGs.
//!
//! Nonzero groups are organised into blocks (the supernodes of the tree
//! case). A block holds a set of groups `K_b` and the coordinates `R_b`
//! at the shared level `a_b`, each with a fixed sign. Every other nonzero
//! coordinate is free and keeps zero residual correlation. With one column
//! `Σ_{R_b} s_j X_j` per block (weight `w(K_b)`) and one per free
//! coordinate (weight 0), `θ = (a, β_free)` moves by `(Z'Z)⁻¹ w̃` per unit
//! decrease of `λ`. The budget `λ w(K_b)` of a block must be spread over
//! `R_b` with nonnegative flows from each group to its own coordinates;
//! by Hall's theorem this holds iff `Σ_J s_j c_j ≤ λ w(N(J))` for every
//! `J ⊆ R_b`. Zero groups obey the same covering condition over the zero
//! coordinates. Both are checked by a max-closure computation, and the
//! first `λ` at which one becomes tight is found by Dinkelbach's method
//! on the affine family of closures. Events:
//!
//! * a tight coordinate's correlation reaches 0 and it becomes free;
//! * a free coordinate reaches the level of a block owning one of its groups;
//! * a block level reaches 0 and its groups become zero;
//! * a lower block reaches the level of a block that covers it; they merge;
//! * a subset of a block becomes tight in Hall's condition; the block splits;
//! * a subset of the zero coordinates becomes tight; a new block is born;
//! * a zero coordinate's correlation changes sign.

use nalgebra::{DMatrix, DVector};

use super::icap::check_linf_grouping;
use super::{correlations, solve_checked, PathBuilder, PathOptions, RegularizationPath, SolverTag, Termination};
use crate::error::{CapError, Result};
use crate::hierarchy::{compile_penalty_for, HierarchyGraph};
use crate::maxflow::FlowNetwork;
use crate::model::{Dataset, Grouping, Norm};

/// Consecutive zero-length steps tolerated before giving up.
const MAX_ZERO_STEPS: usize = 200;

/// Exact path for the tree-hierarchical penalty: one `L∞` group per node
/// holding the node and its descendants, unit weights.
pub fn hicap_path(dataset: &Dataset, graph: &HierarchyGraph) -> Result<RegularizationPath> {
    hicap_path_with(dataset, graph, &PathOptions::default())
}

pub fn hicap_path_with(dataset: &Dataset, graph: &HierarchyGraph, opts: &PathOptions) -> Result<RegularizationPath> {
    if !graph.is_tree() {
        return Err(CapError::NotATree);
    }
    let grouping = compile_penalty_for(graph, dataset.p(), &vec![Norm::INF; graph.len()], &vec![1.0; graph.len()])?;
    trace(dataset, &grouping, SolverTag::Hicap, opts)
}

/// Exact path for any `γ₀ = 1`, all-`L∞` grouping, overlapping or not.
pub fn linf_cap_path(dataset: &Dataset, grouping: &Grouping) -> Result<RegularizationPath> {
    linf_cap_path_with(dataset, grouping, &PathOptions::default())
}

pub fn linf_cap_path_with(dataset: &Dataset, grouping: &Grouping, opts: &PathOptions) -> Result<RegularizationPath> {
    trace(dataset, grouping, SolverTag::LinfCap, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Coord {
    Zero,
    Free,
    Tight(usize),
}

#[derive(Clone, Debug)]
struct Block {
    id: usize,
    coords: Vec<usize>,
    groups: Vec<usize>,
    level: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Event {
    End,
    ToFree(usize),
    ToTight(usize, usize),
    Drop(usize),
    Merge(usize, usize),
    SignFlip(usize),
    Split(usize, Vec<usize>),
    Activate(Vec<usize>),
}

/// What the previous event did, to veto its immediate reversal.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Last {
    None,
    ToFree(usize),
    ToTight(usize),
    Born(usize),
    Dropped,
    Merged(usize),
    Split(usize, usize),
}

/// A max-closure instance: choose coordinates `J` to maximise
/// `Σ_J r_j - Σ_{N(J)} u_k`, where `N(J)` are the groups adjacent to `J`.
struct Closure<'a> {
    coords: &'a [usize],
    groups: &'a [usize],
    adj: &'a [Vec<usize>],
}

impl Closure<'_> {
    /// Returns the optimal value and the smallest optimal set.
    fn solve(&self, r: &[f64], u: &[f64], eps: f64) -> (f64, Vec<usize>) {
        let nc = self.coords.len();
        let ng = self.groups.len();
        let (s, t) = (nc + ng, nc + ng + 1);
        let mut net = FlowNetwork::new(nc + ng + 2, eps);
        let mut pos = 0.0;
        for a in 0..nc {
            if r[a] > 0.0 {
                net.add_edge(s, a, r[a]);
                pos += r[a];
            }
            for &g in &self.adj[a] {
                net.add_edge(a, nc + g, f64::INFINITY);
            }
        }
        for g in 0..ng {
            net.add_edge(nc + g, t, u[g].max(0.0));
        }
        let flow = net.max_flow(s, t);
        let side = net.source_side(s);
        let set = (0..nc).filter(|&a| side[a]).collect();
        (pos - flow, set)
    }

    fn neighbours(&self, set: &[usize]) -> Vec<usize> {
        let mut hit = vec![false; self.groups.len()];
        for &a in set {
            for &g in &self.adj[a] {
                hit[g] = true;
            }
        }
        (0..self.groups.len()).filter(|&g| hit[g]).collect()
    }
}

/// First `δ ∈ [0, hi]` at which `max_J f_J(δ)` reaches 0, where
/// `f_J(δ) = Σ_J (r0_j - δ r1_j) - (λ - δ) w(N(J))`. The maximum is convex
/// in `δ` and nonpositive at 0, so Dinkelbach iterations from `hi`
/// downwards find the root together with the set that attains it.
fn first_tight(
    cl: &Closure,
    r0: &[f64],
    r1: &[f64],
    w: &[f64],
    lambda: f64,
    hi: f64,
    tol: f64,
) -> Option<(f64, Vec<usize>)> {
    let mut delta = hi;
    let mut found = None;
    for _ in 0..200 {
        let r: Vec<f64> = r0.iter().zip(r1).map(|(a, b)| a - delta * b).collect();
        let u: Vec<f64> = w.iter().map(|wk| (lambda - delta) * wk).collect();
        let (val, set) = cl.solve(&r, &u, tol * 1e-3);
        if val <= tol || set.is_empty() {
            return found;
        }
        let wn: f64 = cl.neighbours(&set).iter().map(|&g| w[g]).sum();
        let a: f64 = set.iter().map(|&j| r0[j]).sum::<f64>() - lambda * wn;
        let b: f64 = wn - set.iter().map(|&j| r1[j]).sum::<f64>();
        if b <= 0.0 {
            return Some((0.0, set));
        }
        let root = (-a / b).max(0.0);
        if root >= delta {
            return Some((delta, set));
        }
        found = Some((root, set));
        delta = root;
    }
    found
}

struct Engine<'a> {
    grouping: &'a Grouping,
    w: &'a [f64],
    members: Vec<Vec<usize>>,
    state: Vec<Coord>,
    sign: Vec<f64>,
    blocks: Vec<Block>,
    next_id: usize,
}

impl Engine<'_> {
    /// Index of the block holding each group, if any.
    fn group_block(&self) -> Vec<Option<usize>> {
        let mut gb = vec![None; self.grouping.len()];
        for (b, blk) in self.blocks.iter().enumerate() {
            for &k in &blk.groups {
                gb[k] = Some(b);
            }
        }
        gb
    }

    /// Re-derives coordinate states from the block lists.
    fn sync(&mut self) {
        for (b, blk) in self.blocks.iter().enumerate() {
            for &j in &blk.coords {
                self.state[j] = Coord::Tight(b);
            }
        }
    }

    fn new_block(&mut self, coords: Vec<usize>, groups: Vec<usize>, level: f64) -> Block {
        self.next_id += 1;
        Block { id: self.next_id, coords, groups, level }
    }

    /// Zero coordinates with at least one zero group, and the zero groups.
    fn zero_closure(&self, gb: &[Option<usize>]) -> (Vec<usize>, Vec<usize>, Vec<Vec<usize>>) {
        let groups: Vec<usize> = (0..self.grouping.len()).filter(|&k| gb[k].is_none()).collect();
        let mut local = vec![usize::MAX; self.grouping.len()];
        for (g, &k) in groups.iter().enumerate() {
            local[k] = g;
        }
        let mut coords = Vec::new();
        let mut adj = Vec::new();
        for j in 0..self.state.len() {
            if self.state[j] != Coord::Zero {
                continue;
            }
            let a: Vec<usize> = self.members[j].iter().filter(|&&k| gb[k].is_none()).map(|&k| local[k]).collect();
            if !a.is_empty() {
                coords.push(j);
                adj.push(a);
            }
        }
        (coords, groups, adj)
    }

    /// Coordinates of a block with their adjacency to the block's groups.
    fn block_closure(&self, b: usize) -> Vec<Vec<usize>> {
        let blk = &self.blocks[b];
        blk.coords
            .iter()
            .map(|&j| {
                self.members[j].iter().filter_map(|k| blk.groups.iter().position(|g| g == k)).collect()
            })
            .collect()
    }
}

fn trace(dataset: &Dataset, grouping: &Grouping, tag: SolverTag, opts: &PathOptions) -> Result<RegularizationPath> {
    check_linf_grouping(dataset, grouping)?;
    let p = dataset.p();
    let kk = grouping.len();
    let w = grouping.weights();
    let gram = dataset.gram();
    let xty = dataset.xty();
    let mut out = PathBuilder::new(tag, grouping.clone(), dataset, opts);
    let mut eng = Engine {
        grouping,
        w,
        members: grouping.memberships(),
        state: vec![Coord::Zero; p],
        sign: vec![0.0; p],
        blocks: Vec::new(),
        next_id: 0,
    };
    let mut beta = vec![0.0; p];
    let mut c = xty.clone();

    // λ₀ = max_J Σ_J |c_j| / w(N(J)) by Dinkelbach on the ratio
    let gb = vec![None; kk];
    let (zc, zg, zadj) = eng.zero_closure(&gb);
    let cl = Closure { coords: &zc, groups: &zg, adj: &zadj };
    let abs_c: Vec<f64> = zc.iter().map(|&j| c[j].abs()).collect();
    let wz: Vec<f64> = zg.iter().map(|&k| w[k]).collect();
    let ratio = |set: &[usize]| {
        let num: f64 = set.iter().map(|&a| abs_c[a]).sum();
        let den: f64 = cl.neighbours(set).iter().map(|&g| wz[g]).sum();
        num / den
    };
    let all: Vec<usize> = (0..zc.len()).filter(|&a| abs_c[a] > 0.0).collect();
    if all.is_empty() || xty.amax() <= 1e-300 {
        out.set_lambda0(0.0);
        out.push(0.0, beta, &c);
        return Ok(out.finish(Termination::Complete));
    }
    let mut best = all.clone();
    let mut lambda0 = ratio(&best);
    let scale = xty.amax();
    for _ in 0..200 {
        let u: Vec<f64> = wz.iter().map(|wk| lambda0 * wk).collect();
        let (val, set) = cl.solve(&abs_c, &u, 1e-15 * scale);
        if val <= 1e-13 * scale || set.is_empty() {
            break;
        }
        let r = ratio(&set);
        if r <= lambda0 {
            break;
        }
        lambda0 = r;
        best = set;
    }
    out.set_lambda0(lambda0);
    let tol = 1e-11 * lambda0;
    let zero_len = 1e-13 * lambda0;
    {
        let coords: Vec<usize> = best.iter().map(|&a| zc[a]).collect();
        let groups: Vec<usize> = cl.neighbours(&best).iter().map(|&g| zg[g]).collect();
        for &j in &coords {
            eng.sign[j] = c[j].signum();
        }
        let blk = eng.new_block(coords, groups, 0.0);
        eng.blocks.push(blk);
        eng.sync();
    }
    let mut lambda = lambda0;
    out.push(lambda, beta.clone(), &c);
    let floor = out.lambda_floor();
    let mut last = Last::Born(eng.blocks[0].id);
    let mut zero_steps = 0;

    for _ in 0..out.max_steps() {
        let nb = eng.blocks.len();
        let free: Vec<usize> = (0..p).filter(|&j| eng.state[j] == Coord::Free).collect();
        let q = nb + free.len();
        let cols: Vec<Vec<(usize, f64)>> = eng
            .blocks
            .iter()
            .map(|b| b.coords.iter().map(|&j| (j, eng.sign[j])).collect())
            .chain(free.iter().map(|&j| vec![(j, 1.0)]))
            .collect();
        let m = DMatrix::from_fn(q, q, |a, b| {
            cols[a].iter().map(|&(i, si)| cols[b].iter().map(|&(j, sj)| si * sj * gram[(i, j)]).sum::<f64>()).sum()
        });
        let rhs = DVector::from_iterator(
            q,
            (0..q).map(|a| if a < nb { eng.blocks[a].groups.iter().map(|&k| w[k]).sum() } else { 0.0 }),
        );
        let d = solve_checked(&m, &rhs)?;
        let mut dir = vec![0.0; p];
        for (a, col) in cols.iter().enumerate() {
            for &(j, s) in col {
                dir[j] = s * d[a];
            }
        }
        let e = &gram * DVector::from_column_slice(&dir);
        let gb = eng.group_block();

        let mut delta = lambda;
        let mut event = Event::End;
        let consider = |dl: f64, ev: Event, delta: &mut f64, event: &mut Event| {
            if dl < *delta {
                *delta = dl;
                *event = ev;
            }
        };
        for (b, blk) in eng.blocks.iter().enumerate() {
            let db = d[b];
            if db < 0.0 && !(last == Last::Born(blk.id) && blk.level <= zero_len * -db) {
                consider(blk.level.max(0.0) / -db, Event::Drop(b), &mut delta, &mut event);
            }
            if blk.coords.len() >= 2 {
                for &j in &blk.coords {
                    // every group of the block touching j must keep another
                    // tight coordinate; otherwise a split comes first
                    let covered = eng.members[j].iter().filter(|k| blk.groups.contains(k)).all(|&k| {
                        grouping.group(k).iter().any(|&i| i != j && eng.state[i] == Coord::Tight(b))
                    });
                    let rate = eng.sign[j] * e[j];
                    if covered && rate > 0.0 && !(last == Last::ToTight(j) && eng.sign[j] * c[j] <= zero_len * rate) {
                        consider((eng.sign[j] * c[j]).max(0.0) / rate, Event::ToFree(j), &mut delta, &mut event);
                    }
                }
            }
            // lower blocks holding a tight coordinate inside one of b's groups
            let mut lower: Vec<usize> = blk
                .groups
                .iter()
                .flat_map(|&k| grouping.group(k).iter())
                .filter_map(|&j| match eng.state[j] {
                    Coord::Tight(l) if l != b => Some(l),
                    _ => None,
                })
                .collect();
            lower.sort_unstable();
            lower.dedup();
            for l in lower {
                let den = d[l] - db;
                let reverses = matches!(last, Last::Split(x, y)
                    if (x, y) == (blk.id, eng.blocks[l].id) || (y, x) == (blk.id, eng.blocks[l].id));
                if den > 0.0 && !(reverses && blk.level - eng.blocks[l].level <= zero_len * den) {
                    consider((blk.level - eng.blocks[l].level).max(0.0) / den, Event::Merge(b, l), &mut delta, &mut event);
                }
            }
        }
        for &j in &free {
            let mut owners: Vec<usize> = eng.members[j].iter().filter_map(|&k| gb[k]).collect();
            owners.sort_unstable();
            owners.dedup();
            for b in owners {
                for s in [1.0, -1.0] {
                    let den = s * dir[j] - d[b];
                    let gap = eng.blocks[b].level - s * beta[j];
                    if den > 1e-300 && !(last == Last::ToFree(j) && gap <= zero_len * den) {
                        consider(
                            gap.max(0.0) / den,
                            Event::ToTight(j, b),
                            &mut delta,
                            &mut event,
                        );
                    }
                }
            }
        }
        for j in 0..p {
            if eng.state[j] == Coord::Zero
                && c[j].abs() > 1e-14 * lambda0
                && c[j].signum() == e[j].signum()
                && e[j] != 0.0
            {
                consider(c[j] / e[j], Event::SignFlip(j), &mut delta, &mut event);
            }
        }
        // closure events on [0, δ]
        for b in 0..eng.blocks.len() {
            let blk = &eng.blocks[b];
            if blk.coords.len() < 2 || blk.groups.len() < 2 {
                continue;
            }
            let adj = eng.block_closure(b);
            let cl = Closure { coords: &blk.coords, groups: &blk.groups, adj: &adj };
            let r0: Vec<f64> = blk.coords.iter().map(|&j| eng.sign[j] * c[j]).collect();
            let r1: Vec<f64> = blk.coords.iter().map(|&j| eng.sign[j] * e[j]).collect();
            let wb: Vec<f64> = blk.groups.iter().map(|&k| w[k]).collect();
            if let Some((dl, set)) = first_tight(&cl, &r0, &r1, &wb, lambda, delta, tol) {
                // the whole block is always tight; only a proper subset splits it
                let proper = set.len() < blk.coords.len() && cl.neighbours(&set).len() < blk.groups.len();
                if proper && !(last == Last::Merged(blk.id) && dl <= zero_len) {
                    consider(dl, Event::Split(b, set.iter().map(|&a| blk.coords[a]).collect()), &mut delta, &mut event);
                }
            }
        }
        {
            let (zc, zg, zadj) = eng.zero_closure(&gb);
            if !zc.is_empty() {
                let cl = Closure { coords: &zc, groups: &zg, adj: &zadj };
                let sigma: Vec<f64> = zc
                    .iter()
                    .map(|&j| if c[j].abs() > 1e-14 * lambda0 { c[j].signum() } else { -e[j].signum() })
                    .collect();
                let r0: Vec<f64> = zc.iter().zip(&sigma).map(|(&j, s)| s * c[j]).collect();
                let r1: Vec<f64> = zc.iter().zip(&sigma).map(|(&j, s)| s * e[j]).collect();
                let wz: Vec<f64> = zg.iter().map(|&k| w[k]).collect();
                let found = first_tight(&cl, &r0, &r1, &wz, lambda, delta, tol);
                if let Some((dl, set)) = found.filter(|(dl, _)| !(last == Last::Dropped && *dl <= zero_len)) {
                    consider(dl, Event::Activate(set.iter().map(|&a| zc[a]).collect()), &mut delta, &mut event);
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
        zero_steps = if delta <= zero_len { zero_steps + 1 } else { 0 };
        if zero_steps > MAX_ZERO_STEPS {
            return Err(CapError::DegenerateDesign(format!("events cycle at λ = {lambda:.6e}")));
        }
        for j in 0..p {
            beta[j] += delta * dir[j];
        }
        for (b, blk) in eng.blocks.iter_mut().enumerate() {
            blk.level += delta * d[b];
        }
        c = correlations(&xty, &gram, &beta);
        // a zero coordinate changing sign only retimes later events; the path stays affine
        let silent = matches!(event, Event::SignFlip(_));
        last = apply(&mut eng, event, &mut beta, &c, &gb);
        for blk in &eng.blocks {
            for &j in &blk.coords {
                beta[j] = eng.sign[j] * blk.level;
            }
        }
        for j in 0..p {
            if eng.state[j] == Coord::Zero {
                beta[j] = 0.0;
            }
        }
        c = correlations(&xty, &gram, &beta);
        lambda = current_lambda(&eng, &c, lambda - delta).min(lambda);
        if !silent && out.push(lambda, beta.clone(), &c) {
            return Ok(out.finish(Termination::Truncated));
        }
    }
    Err(CapError::DegenerateDesign(format!("no convergence within {} events", out.max_steps())))
}

/// `λ` implied by the largest block ratio `Σ_{R_b} s_j c_j / w(K_b)`.
fn current_lambda(eng: &Engine, c: &DVector<f64>, fallback: f64) -> f64 {
    eng.blocks
        .iter()
        .map(|b| {
            let num: f64 = b.coords.iter().map(|&j| eng.sign[j] * c[j]).sum();
            num / b.groups.iter().map(|&k| eng.w[k]).sum::<f64>()
        })
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .unwrap_or(fallback)
}

fn apply(
    eng: &mut Engine,
    event: Event,
    beta: &mut [f64],
    c: &DVector<f64>,
    gb: &[Option<usize>],
) -> Last {
    let last = match event {
        Event::End => unreachable!("end of path handled by the caller"),
        Event::ToFree(j) => {
            if let Coord::Tight(b) = eng.state[j] {
                eng.blocks[b].coords.retain(|&i| i != j);
            }
            eng.state[j] = Coord::Free;
            Last::ToFree(j)
        }
        Event::ToTight(j, b) => {
            eng.sign[j] = if beta[j] != 0.0 { beta[j].signum() } else { 1.0 };
            let blk = &mut eng.blocks[b];
            blk.coords.push(j);
            blk.coords.sort_unstable();
            eng.state[j] = Coord::Tight(b);
            Last::ToTight(j)
        }
        Event::SignFlip(_) => Last::None,
        Event::Drop(b) => {
            let blk = eng.blocks.remove(b);
            for &j in &blk.coords {
                eng.state[j] = Coord::Zero;
                eng.sign[j] = 0.0;
                beta[j] = 0.0;
            }
            // free coordinates bounded by a dropped group collapse to zero
            for &k in &blk.groups {
                for &j in eng.grouping.group(k) {
                    if eng.state[j] == Coord::Free {
                        eng.state[j] = Coord::Zero;
                        beta[j] = 0.0;
                    }
                }
            }
            Last::Dropped
        }
        Event::Merge(h, l) => {
            let low = eng.blocks[l].clone();
            let level = eng.blocks[h].level;
            let blk = &mut eng.blocks[h];
            blk.coords.extend(low.coords);
            blk.coords.sort_unstable();
            blk.groups.extend(low.groups);
            blk.groups.sort_unstable();
            blk.level = level;
            let merged = eng.new_block(eng.blocks[h].coords.clone(), eng.blocks[h].groups.clone(), level);
            let id = merged.id;
            eng.blocks[h] = merged;
            eng.blocks.remove(l);
            Last::Merged(id)
        }
        Event::Split(b, hi_coords) => {
            let blk = eng.blocks.remove(b);
            let hi_groups: Vec<usize> = blk
                .groups
                .iter()
                .copied()
                .filter(|k| hi_coords.iter().any(|j| eng.members[*j].contains(k)))
                .collect();
            let lo_groups: Vec<usize> = blk.groups.iter().copied().filter(|k| !hi_groups.contains(k)).collect();
            let mut lo_coords = Vec::new();
            for &j in &blk.coords {
                if hi_coords.contains(&j) {
                    continue;
                }
                if eng.members[j].iter().any(|k| lo_groups.contains(k)) {
                    lo_coords.push(j);
                } else {
                    eng.state[j] = Coord::Free;
                }
            }
            let hi = eng.new_block(hi_coords, hi_groups, blk.level);
            let (hid, mut lid) = (hi.id, 0);
            eng.blocks.push(hi);
            if !lo_groups.is_empty() {
                let lo = eng.new_block(lo_coords, lo_groups, blk.level);
                lid = lo.id;
                eng.blocks.push(lo);
            }
            Last::Split(hid, lid)
        }
        Event::Activate(coords) => {
            let mut groups: Vec<usize> = coords
                .iter()
                .flat_map(|&j| eng.members[j].iter().copied())
                .filter(|&k| gb[k].is_none())
                .collect();
            groups.sort_unstable();
            groups.dedup();
            for &j in &coords {
                eng.sign[j] = c[j].signum();
            }
            let blk = eng.new_block(coords, groups, 0.0);
            let id = blk.id;
            eng.blocks.push(blk);
            Last::Born(id)
        }
    };
    eng.sync();
    last
}
