use std::collections::VecDeque;

use super::GrabcutError;

/// Pixel nodes plus implicit source (foreground) and sink (background).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGraph {
    /// Capacity from the source to each node; cut when the node ends up on
    /// the sink side.
    pub source_cap: Vec<f64>,
    /// Capacity from each node to the sink.
    pub sink_cap: Vec<f64>,
    /// Undirected n-links `(a, b, capacity)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl PixelGraph {
    pub fn new(n: usize) -> Self {
        Self {
            source_cap: vec![0.0; n],
            sink_cap: vec![0.0; n],
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.source_cap.len()
    }

    pub fn validate(&self) -> Result<(), GrabcutError> {
        let n = self.n_nodes();
        if self.sink_cap.len() != n {
            return Err(GrabcutError::Dimensions(format!(
                "{} source capacities, {} sink capacities",
                n,
                self.sink_cap.len()
            )));
        }
        let ok = |c: f64| c.is_finite() && c >= 0.0;
        if !self.source_cap.iter().chain(&self.sink_cap).all(|&c| ok(c)) {
            return Err(GrabcutError::Params("t-link capacity not finite and non-negative".into()));
        }
        for &(a, b, c) in &self.edges {
            if a >= n || b >= n || a == b || !ok(c) {
                return Err(GrabcutError::Params(format!("invalid n-link ({a}, {b}, {c})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    /// `true` for nodes on the source (foreground) side.
    pub source_side: Vec<bool>,
    pub flow: f64,
}

/// Capacity of the cut induced by `source_side`.
pub fn cut_capacity(g: &PixelGraph, source_side: &[bool]) -> f64 {
    let mut total = 0.0;
    for (i, &s) in source_side.iter().enumerate() {
        total += if s { g.sink_cap[i] } else { g.source_cap[i] };
    }
    for &(a, b, c) in &g.edges {
        if source_side[a] != source_side[b] {
            total += c;
        }
    }
    total
}

struct Arc {
    to: usize,
    cap: f64,
}

struct Network {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    /// Arcs come in pairs `2i, 2i + 1`, each the reverse of the other.
    fn add_pair(&mut self, a: usize, b: usize, cap_ab: f64, cap_ba: f64) {
        self.adj[a].push(self.arcs.len());
        self.arcs.push(Arc { to: b, cap: cap_ab });
        self.adj[b].push(self.arcs.len());
        self.arcs.push(Arc { to: a, cap: cap_ba });
    }
}

/// Dinic's algorithm on `f64` capacities. Residuals at or below a small
/// threshold relative to the largest capacity count as saturated.
pub fn max_flow_min_cut(g: &PixelGraph) -> Result<MinCut, GrabcutError> {
    g.validate()?;
    let n = g.n_nodes();
    let (s, t) = (n, n + 1);
    let max_cap = g
        .source_cap
        .iter()
        .chain(&g.sink_cap)
        .chain(g.edges.iter().map(|e| &e.2))
        .fold(0.0f64, |m, &c| m.max(c));
    let eps = 1e-12 * max_cap.max(1.0);

    let mut net = Network {
        arcs: Vec::with_capacity(2 * (2 * n + g.edges.len())),
        adj: vec![Vec::new(); n + 2],
    };
    let mut flow = 0.0;
    for i in 0..n {
        // route the direct s→i→t share up front
        let direct = g.source_cap[i].min(g.sink_cap[i]);
        flow += direct;
        let (sc, tc) = (g.source_cap[i] - direct, g.sink_cap[i] - direct);
        if sc > 0.0 {
            net.add_pair(s, i, sc, 0.0);
        }
        if tc > 0.0 {
            net.add_pair(i, t, tc, 0.0);
        }
    }
    for &(a, b, c) in &g.edges {
        if c > 0.0 {
            net.add_pair(a, b, c, c);
        }
    }

    let mut level = vec![usize::MAX; n + 2];
    let mut next = vec![0usize; n + 2];
    let mut queue = VecDeque::new();
    let mut path: Vec<usize> = Vec::new();
    loop {
        level.fill(usize::MAX);
        level[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &a in &net.adj[v] {
                let arc = &net.arcs[a];
                if arc.cap > eps && level[arc.to] == usize::MAX {
                    level[arc.to] = level[v] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        if level[t] == usize::MAX {
            break;
        }
        next.fill(0);
        path.clear();
        let mut v = s;
        loop {
            if v == t {
                let push = path
                    .iter()
                    .map(|&a| net.arcs[a].cap)
                    .fold(f64::INFINITY, f64::min);
                for &a in &path {
                    net.arcs[a].cap -= push;
                    net.arcs[a ^ 1].cap += push;
                }
                flow += push;
                // retreat to the tail of the first saturated arc
                let cut_at = path
                    .iter()
                    .position(|&a| net.arcs[a].cap <= eps)
                    .unwrap_or(0);
                path.truncate(cut_at);
                v = path.last().map_or(s, |&a| net.arcs[a].to);
                continue;
            }
            let mut advanced = false;
            while next[v] < net.adj[v].len() {
                let a = net.adj[v][next[v]];
                let arc = &net.arcs[a];
                if arc.cap > eps && level[arc.to] == level[v] + 1 {
                    path.push(a);
                    v = arc.to;
                    advanced = true;
                    break;
                }
                next[v] += 1;
            }
            if advanced {
                continue;
            }
            if v == s {
                break;
            }
            // dead end: prune v from this phase and step back
            level[v] = usize::MAX;
            let a = path.pop().expect("non-source node has an incoming path arc");
            v = net.arcs[a ^ 1].to;
            next[v] += 1;
        }
    }

    let mut source_side = vec![false; n + 2];
    source_side[s] = true;
    queue.clear();
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        for &a in &net.adj[v] {
            let arc = &net.arcs[a];
            if arc.cap > eps && !source_side[arc.to] {
                source_side[arc.to] = true;
                queue.push_back(arc.to);
            }
        }
    }
    source_side.truncate(n);
    Ok(MinCut { source_side, flow })
}
