//! Exact s-t max-flow / min-cut on sparse graphs (Dinic's blocking-flow
//! variant of the augmenting-path method).

use std::collections::VecDeque;

/// A user-supplied arc between two non-terminal nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    pub reverse_capacity: f64,
}

/// Flow network over `num_nodes` non-terminal nodes plus an implicit source
/// and sink. Terminal links are attached per node, so no arc can join the two
/// terminals directly.
#[derive(Clone, Debug, Default)]
pub struct FlowGraph {
    num_nodes: usize,
    arcs: Vec<Arc>,
    source_caps: Vec<f64>,
    sink_caps: Vec<f64>,
}

impl FlowGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            arcs: Vec::new(),
            source_caps: vec![0.0; num_nodes],
            sink_caps: vec![0.0; num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn source_capacity(&self, node: usize) -> f64 {
        self.source_caps[node]
    }

    pub fn sink_capacity(&self, node: usize) -> f64 {
        self.sink_caps[node]
    }

    /// Adds an arc `from -> to` with `capacity` and a paired arc `to -> from`
    /// with `reverse_capacity`.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64, reverse_capacity: f64) {
        assert!(from < self.num_nodes && to < self.num_nodes, "arc endpoint out of range");
        assert!(
            capacity >= 0.0 && reverse_capacity >= 0.0,
            "capacities must be non-negative, got {capacity} / {reverse_capacity}"
        );
        self.arcs.push(Arc {
            from,
            to,
            capacity,
            reverse_capacity,
        });
    }

    /// Adds to the terminal links of `node`: `source -> node` and `node -> sink`.
    pub fn add_terminal(&mut self, node: usize, source_capacity: f64, sink_capacity: f64) {
        assert!(
            source_capacity >= 0.0 && sink_capacity >= 0.0,
            "terminal capacities must be non-negative"
        );
        self.source_caps[node] += source_capacity;
        self.sink_caps[node] += sink_capacity;
    }

    /// Capacity of the cut where `sink_side[v]` marks nodes on the sink side.
    pub fn cut_capacity(&self, sink_side: &[bool]) -> f64 {
        let mut total = 0.0;
        for v in 0..self.num_nodes {
            if sink_side[v] {
                total += self.source_caps[v];
            } else {
                total += self.sink_caps[v];
            }
        }
        for arc in &self.arcs {
            match (sink_side[arc.from], sink_side[arc.to]) {
                (false, true) => total += arc.capacity,
                (true, false) => total += arc.reverse_capacity,
                _ => {}
            }
        }
        total
    }
}

/// Result of [`max_flow`].
#[derive(Clone, Debug)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the sink side of the minimum cut.
    pub sink_side: Vec<bool>,
    /// Net flow along each user arc, positive in the `from -> to` direction.
    pub arc_flow: Vec<f64>,
    pub source_flow: Vec<f64>,
    pub sink_flow: Vec<f64>,
}

struct Residual {
    head: Vec<usize>,
    cap: Vec<f64>,
    start: Vec<usize>,
    order: Vec<usize>,
}

impl Residual {
    fn build(graph: &FlowGraph) -> Self {
        let n = graph.num_nodes + 2;
        let (s, t) = (graph.num_nodes, graph.num_nodes + 1);
        let mut tail = Vec::new();
        let mut head = Vec::new();
        let mut cap = Vec::new();
        let mut push_pair = |u: usize, v: usize, c: f64, rc: f64| {
            tail.push(u);
            head.push(v);
            cap.push(c);
            tail.push(v);
            head.push(u);
            cap.push(rc);
        };
        for arc in &graph.arcs {
            push_pair(arc.from, arc.to, arc.capacity, arc.reverse_capacity);
        }
        for v in 0..graph.num_nodes {
            push_pair(s, v, graph.source_caps[v], 0.0);
            push_pair(v, t, graph.sink_caps[v], 0.0);
        }
        let mut start = vec![0usize; n + 1];
        for &u in &tail {
            start[u + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; tail.len()];
        for (e, &u) in tail.iter().enumerate() {
            order[fill[u]] = e;
            fill[u] += 1;
        }
        Self {
            head,
            cap,
            start,
            order,
        }
    }

    fn bfs(&self, s: usize, level: &mut [i64]) {
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.order[self.start[u]..self.start[u + 1]] {
                let v = self.head[e];
                if self.cap[e] > 0.0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    fn blocking_flow(&mut self, s: usize, t: usize, level: &mut [i64]) -> f64 {
        let mut it: Vec<usize> = self.start[..self.start.len() - 1].to_vec();
        let mut path: Vec<usize> = Vec::new();
        let mut pushed = 0.0;
        let mut v = s;
        loop {
            if v == t {
                let bottleneck = path
                    .iter()
                    .map(|&e| self.cap[e])
                    .fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.cap[e] -= bottleneck;
                    self.cap[e ^ 1] += bottleneck;
                }
                pushed += bottleneck;
                path.clear();
                v = s;
                continue;
            }
            let end = self.start[v + 1];
            let mut advanced = false;
            while it[v] < end {
                let e = self.order[it[v]];
                let w = self.head[e];
                if self.cap[e] > 0.0 && level[w] == level[v] + 1 {
                    path.push(e);
                    v = w;
                    advanced = true;
                    break;
                }
                it[v] += 1;
            }
            if advanced {
                continue;
            }
            if v == s {
                return pushed;
            }
            // Dead end: prune and retreat one arc.
            level[v] = -1;
            let e = path.pop().expect("non-source node has an incoming path arc");
            v = self.head[e ^ 1];
            it[v] += 1;
        }
    }
}

/// Computes a maximum s-t flow and the corresponding minimum cut.
pub fn max_flow(graph: &FlowGraph) -> MinCut {
    let n = graph.num_nodes;
    let (s, t) = (n, n + 1);
    let mut residual = Residual::build(graph);
    let mut level = vec![-1i64; n + 2];
    let mut flow = 0.0;
    loop {
        residual.bfs(s, &mut level);
        if level[t] < 0 {
            break;
        }
        flow += residual.blocking_flow(s, t, &mut level);
    }

    // Source side = nodes still reachable in the residual graph.
    residual.bfs(s, &mut level);
    let sink_side: Vec<bool> = (0..n).map(|v| level[v] < 0).collect();

    let arc_flow = graph
        .arcs
        .iter()
        .enumerate()
        .map(|(k, arc)| arc.capacity - residual.cap[2 * k])
        .collect();
    let base = 2 * graph.arcs.len();
    let source_flow = (0..n)
        .map(|v| graph.source_caps[v] - residual.cap[base + 4 * v])
        .collect();
    let sink_flow = (0..n)
        .map(|v| graph.sink_caps[v] - residual.cap[base + 4 * v + 2])
        .collect();

    MinCut {
        flow,
        sink_side,
        arc_flow,
        source_flow,
        sink_flow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all 2^n cuts.
    fn brute_force_min_cut(graph: &FlowGraph) -> f64 {
        let n = graph.num_nodes();
        (0..1u32 << n)
            .map(|mask| {
                let side: Vec<bool> = (0..n).map(|v| mask & (1 << v) != 0).collect();
                graph.cut_capacity(&side)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_flow_invariants(graph: &FlowGraph, cut: &MinCut) {
        let n = graph.num_nodes();
        let tol = 1e-9 * (1.0 + cut.flow.abs());
        let mut net = vec![0.0; n];
        for (arc, &f) in graph.arcs().iter().zip(&cut.arc_flow) {
            assert!(f <= arc.capacity + tol && -f <= arc.reverse_capacity + tol);
            net[arc.from] -= f;
            net[arc.to] += f;
        }
        for v in 0..n {
            assert!(cut.source_flow[v] <= graph.source_capacity(v) + tol);
            assert!(cut.sink_flow[v] <= graph.sink_capacity(v) + tol);
            net[v] += cut.source_flow[v] - cut.sink_flow[v];
            assert!(net[v].abs() <= tol, "conservation violated at node {v}: {}", net[v]);
        }
    }

    #[test]
    fn empty_graph_has_zero_flow() {
        let cut = max_flow(&FlowGraph::new(0));
        assert_eq!(cut.flow, 0.0);
    }

    #[test]
    fn single_terminal_path() {
        // One node between the terminals: s -> v cap 5, v -> t unbounded.
        let mut g = FlowGraph::new(1);
        g.add_terminal(0, 5.0, 1e9);
        assert_eq!(max_flow(&g).flow, 5.0);
    }

    #[test]
    fn two_disjoint_paths() {
        let mut g = FlowGraph::new(2);
        g.add_terminal(0, 3.0, 4.0);
        g.add_terminal(1, 2.0, 7.0);
        let cut = max_flow(&g);
        assert_eq!(cut.flow, 5.0);
        assert_eq!(cut.flow, brute_force_min_cut(&g));
        assert!((g.cut_capacity(&cut.sink_side) - cut.flow).abs() < 1e-12);
    }

    #[test]
    fn diamond_with_crossing_arc() {
        // s -> a (3), s -> b (2), a -> b (1), a -> t (2), b -> t (3)
        let mut g = FlowGraph::new(2);
        g.add_terminal(0, 3.0, 2.0);
        g.add_terminal(1, 2.0, 3.0);
        g.add_edge(0, 1, 1.0, 0.0);
        let cut = max_flow(&g);
        assert_eq!(cut.flow, brute_force_min_cut(&g));
        assert_eq!(cut.flow, 5.0);
        check_flow_invariants(&g, &cut);
    }

    #[test]
    fn classic_four_inner_nodes() {
        let mut g = FlowGraph::new(4);
        g.add_terminal(0, 10.0, 0.0);
        g.add_terminal(1, 10.0, 0.0);
        g.add_terminal(2, 0.0, 10.0);
        g.add_terminal(3, 0.0, 10.0);
        g.add_edge(0, 1, 2.0, 0.0);
        g.add_edge(0, 2, 4.0, 0.0);
        g.add_edge(0, 3, 8.0, 0.0);
        g.add_edge(1, 3, 9.0, 0.0);
        g.add_edge(3, 2, 6.0, 0.0);
        let cut = max_flow(&g);
        assert_eq!(cut.flow, brute_force_min_cut(&g));
        check_flow_invariants(&g, &cut);
    }

    fn arb_graph() -> impl Strategy<Value = FlowGraph> {
        (1usize..=10).prop_flat_map(|n| {
            let terminals = prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), n);
            let arcs = prop::collection::vec((0..n, 0..n, 0.0f64..10.0, 0.0f64..10.0), 0..3 * n);
            (Just(n), terminals, arcs).prop_map(|(n, terminals, arcs)| {
                let mut g = FlowGraph::new(n);
                for (v, (a, b)) in terminals.into_iter().enumerate() {
                    g.add_terminal(v, a, b);
                }
                for (u, v, c, r) in arcs {
                    if u != v {
                        g.add_edge(u, v, c, r);
                    }
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn flow_equals_exhaustive_min_cut(g in arb_graph()) {
            let cut = max_flow(&g);
            let oracle = brute_force_min_cut(&g);
            prop_assert!((cut.flow - oracle).abs() <= 1e-9 * (1.0 + oracle));
            prop_assert!((g.cut_capacity(&cut.sink_side) - cut.flow).abs() <= 1e-9 * (1.0 + oracle));
            check_flow_invariants(&g, &cut);
        }
    }
}
