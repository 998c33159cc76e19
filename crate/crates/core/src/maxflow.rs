//! Dinic max-flow over real capacities. Used for exact subgradient
//! membership of L∞ group penalties and for the closure computations of
//! the overlapping-group path tracer.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    orig: Vec<f64>,
    eps: f64,
}

impl FlowNetwork {
    /// A network on `n` vertices; residual capacities below `eps` count as
    /// saturated.
    pub fn new(n: usize, eps: f64) -> Self {
        FlowNetwork { adj: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new(), orig: Vec::new(), eps }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    /// Adds a directed edge and returns its id. `f64::INFINITY` is allowed.
    pub fn add_edge(&mut self, u: usize, v: usize, c: f64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(c);
        self.orig.push(c);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0.0);
        self.orig.push(0.0);
        id
    }

    /// Flow currently routed through edge `id`.
    pub fn flow(&self, id: usize) -> f64 {
        self.cap[id ^ 1]
    }

    fn bfs(&self, s: usize, level: &mut [i64]) {
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if level[v] < 0 && self.cap[e] > self.eps {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, f: f64, level: &[i64], it: &mut [usize]) -> f64 {
        if u == t {
            return f;
        }
        while it[u] < self.adj[u].len() {
            let e = self.adj[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]), level, it);
                if d > 0.0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    /// Maximum flow from `s` to `t`; may be called once per network.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.n();
        let mut level = vec![-1i64; n];
        let mut total = 0.0;
        loop {
            self.bfs(s, &mut level);
            if level[t] < 0 {
                return total;
            }
            let mut it = vec![0usize; n];
            loop {
                let f = self.dfs(s, t, f64::INFINITY, &level, &mut it);
                if f <= self.eps || f.is_infinite() {
                    if f.is_infinite() {
                        return f64::INFINITY;
                    }
                    break;
                }
                total += f;
            }
        }
    }

    /// Vertices reachable from `s` in the residual network (the source side
    /// of a minimum cut after `max_flow`).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if !seen[v] && self.cap[e] > self.eps {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        seen
    }

    /// Vertices that can still reach `t` in the residual network. Their
    /// complement is the largest source side over all minimum cuts.
    pub fn sink_side(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        seen[t] = true;
        let mut q = VecDeque::from([t]);
        while let Some(v) = q.pop_front() {
            // u -> v has residual capacity iff the paired edge id^1 leaves v
            for &e in &self.adj[v] {
                let u = self.to[e];
                if !seen[u] && self.cap[e ^ 1] > self.eps {
                    seen[u] = true;
                    q.push_back(u);
                }
            }
        }
        seen
    }

    pub fn original_capacity(&self, id: usize) -> f64 {
        self.orig[id]
    }
}
