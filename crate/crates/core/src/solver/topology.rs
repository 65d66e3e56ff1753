//! Full Steiner topologies over a fixed set of terminals.

/// A tree on `terminals` leaves (nodes `0..terminals`) and
/// `terminals - 2` Steiner nodes (numbered after the terminals), every
/// Steiner node of degree three.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub terminals: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn steiner(&self) -> usize {
        self.terminals.saturating_sub(2)
    }

    pub fn nodes(&self) -> usize {
        self.terminals + self.steiner()
    }

    /// Mass carried along each edge `(u, v)` in the direction `u -> v`,
    /// given signed terminal masses (positive = surplus to send away).
    ///
    /// Negative entries mean the flow runs `v -> u`.
    pub fn flows(&self, net: &[f64]) -> Vec<f64> {
        let n = self.nodes();
        let mut adj = vec![Vec::new(); n];
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        let mut parent_edge = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            order.push(u);
            for &(v, e) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent_edge[v] = e;
                    stack.push(v);
                }
            }
        }
        let mut subtree: Vec<f64> = (0..n).map(|u| net.get(u).copied().unwrap_or(0.0)).collect();
        let mut flows = vec![0.0; self.edges.len()];
        for &v in order.iter().rev() {
            let e = parent_edge[v];
            if e == usize::MAX {
                continue;
            }
            let (a, b) = self.edges[e];
            let parent = if a == v { b } else { a };
            // surplus below v leaves through e
            flows[e] = if a == v { subtree[v] } else { -subtree[v] };
            subtree[parent] += subtree[v];
        }
        flows
    }

    /// Edge list with each pair ordered and the list sorted.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        e.sort_unstable();
        e
    }
}

/// Number of full topologies on `n` terminals, `(2n - 5)!!` for `n >= 3`.
pub fn topology_count(n: usize) -> usize {
    if n < 3 {
        return usize::from(n == 2);
    }
    (1..=(2 * n - 5)).step_by(2).product()
}

/// All full Steiner topologies on `n >= 2` terminals, built by inserting
/// terminals one at a time into every edge.
pub fn full_topologies(n: usize) -> Vec<Topology> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![Topology {
            terminals: 2,
            edges: vec![(0, 1)],
        }],
        _ => {
            let mut out = Vec::with_capacity(topology_count(n));
            let start = vec![(0, n), (1, n), (2, n)];
            grow(n, 3, start, &mut out);
            out
        }
    }
}

fn grow(n: usize, next: usize, edges: Vec<(usize, usize)>, out: &mut Vec<Topology>) {
    if next == n {
        out.push(Topology { terminals: n, edges });
        return;
    }
    let s = n + next - 2;
    for i in 0..edges.len() {
        let (u, v) = edges[i];
        let mut e = edges.clone();
        e[i] = (u, s);
        e.push((s, v));
        e.push((next, s));
        grow(n, next + 1, e, out);
    }
}
