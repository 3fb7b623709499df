//! Max-flow on a general directed network.
//!
//! Dinic's algorithm (BFS level graph + blocking flow) run under capacity
//! scaling: each phase only uses residual arcs of capacity at least Δ, with
//! Δ halving from the largest power of two not above the maximum capacity,
//! and a final phase that admits any positive residual.

use std::collections::VecDeque;

/// Residual capacities at or below this are treated as saturated.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    // Arcs are stored in pairs: arc `e` and its reverse `e ^ 1`.
    head: Vec<usize>,
    cap: Vec<f64>,
    original: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxFlow {
    pub value: f64,
    /// `true` for nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Self {
        assert!(source < nodes && sink < nodes && source != sink);
        Self {
            nodes,
            source,
            sink,
            head: Vec::new(),
            cap: Vec::new(),
            original: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn with_capacity(nodes: usize, source: usize, sink: usize, arcs: usize) -> Self {
        let mut net = Self::new(nodes, source, sink);
        net.head.reserve(arcs * 2);
        net.cap.reserve(arcs * 2);
        net.original.reserve(arcs * 2);
        net
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Number of stored arcs, reverse arcs included.
    pub fn arc_count(&self) -> usize {
        self.head.len()
    }

    /// Adds `u → v` with capacity `cap` and its zero-capacity reverse.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: f64) {
        self.add_arc_pair(u, v, cap, 0.0);
    }

    /// Adds `u → v` with `forward` and `v → u` with `backward`, sharing one
    /// residual pair.
    pub fn add_arc_pair(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        assert!(u < self.nodes && v < self.nodes, "node out of range");
        assert!(
            forward >= 0.0 && backward >= 0.0 && forward.is_finite() && backward.is_finite(),
            "capacities must be finite and nonnegative"
        );
        let e = self.head.len();
        self.head.extend([v, u]);
        self.cap.extend([forward, backward]);
        self.original.extend([forward, backward]);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
    }

    /// Total original capacity of arcs leaving `side` (true) into its
    /// complement.
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        let mut total = 0.0;
        for e in 0..self.head.len() {
            let u = self.head[e ^ 1];
            let v = self.head[e];
            if side[u] && !side[v] {
                total += self.original[e];
            }
        }
        total
    }

    fn bfs(&self, delta: f64, level: &mut [i32], queue: &mut VecDeque<usize>) -> bool {
        level.fill(-1);
        level[self.source] = 0;
        queue.clear();
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.head[e];
                if level[v] < 0 && self.cap[e] > delta {
                    level[v] = level[u] + 1;
                    if v == self.sink {
                        return true;
                    }
                    queue.push_back(v);
                }
            }
        }
        level[self.sink] >= 0
    }

    /// Iterative blocking-flow search along strictly increasing levels.
    fn blocking_flow(&mut self, delta: f64, level: &[i32], next: &mut [usize], path: &mut Vec<usize>) -> f64 {
        let mut total = 0.0;
        next.fill(0);
        path.clear();
        let mut u = self.source;
        loop {
            if u == self.sink {
                let push = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                let mut cut_at = path.len();
                for (i, &e) in path.iter().enumerate() {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                    if self.cap[e] <= delta && cut_at == path.len() {
                        cut_at = i;
                    }
                }
                total += push;
                path.truncate(cut_at);
                u = match path.last() {
                    Some(&e) => self.head[e],
                    None => self.source,
                };
                continue;
            }
            let mut advanced = false;
            while next[u] < self.adj[u].len() {
                let e = self.adj[u][next[u]];
                let v = self.head[e];
                if self.cap[e] > delta && level[v] == level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                next[u] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end: retreat and skip the arc that led here.
            match path.pop() {
                Some(e) => {
                    u = self.head[e ^ 1];
                    next[u] += 1;
                }
                None => break,
            }
        }
        total
    }

    /// Computes a maximum flow in place; residual capacities remain in the
    /// network afterwards.
    pub fn max_flow(&mut self) -> MaxFlow {
        let mut level = vec![-1i32; self.nodes];
        let mut next = vec![0usize; self.nodes];
        let mut queue = VecDeque::with_capacity(self.nodes);
        let mut path = Vec::new();
        let max_cap = self.cap.iter().cloned().fold(0.0, f64::max);
        let mut value = 0.0;

        let mut delta = if max_cap >= 1.0 {
            2f64.powi(max_cap.log2().floor() as i32)
        } else {
            0.0
        };
        loop {
            // Phase threshold: arcs qualify when residual > max(Δ/2, EPS),
            // i.e. residual ≥ Δ for integral capacities.
            let thr = if delta >= 1.0 { (delta / 2.0).max(EPS) } else { EPS };
            while self.bfs(thr, &mut level, &mut queue) {
                value += self.blocking_flow(thr, &level, &mut next, &mut path);
            }
            if delta < 1.0 {
                break;
            }
            delta /= 2.0;
        }

        let mut source_side = vec![false; self.nodes];
        source_side[self.source] = true;
        queue.clear();
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.head[e];
                if !source_side[v] && self.cap[e] > EPS {
                    source_side[v] = true;
                    queue.push_back(v);
                }
            }
        }
        MaxFlow { value, source_side }
    }
}
