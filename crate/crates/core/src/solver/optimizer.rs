//! Steiner point placement for a fixed topology.
//!
//! Minimizes `Σ_e c_e |x_u − x_v|` over the Steiner coordinates by an
//! iteratively reweighted fixed point: every Steiner point moves to the
//! weighted average of its neighbours, all points solved together as one
//! linear system. The norm is smoothed with `sqrt(d² + ε²)` and `ε` is
//! driven down geometrically.

use nalgebra::DMatrix;

/// Iterations spent at one smoothing level before `ε` is lowered anyway.
const LEVEL_ITERATIONS: usize = 100;
/// Iterations at the final smoothing level.
const FINAL_ITERATIONS: usize = 500;

pub(crate) struct Problem<'a> {
    pub terminals: &'a [Vec<f64>],
    pub steiner: usize,
    pub edges: &'a [(usize, usize)],
    pub coef: &'a [f64],
    pub dim: usize,
    /// Length scale of the instance.
    pub scale: f64,
}

pub(crate) struct Placement {
    pub steiner: Vec<Vec<f64>>,
    pub cost: f64,
    pub iterations: usize,
}

impl Problem<'_> {
    /// Position of `node` when Steiner nodes are tied together by `root`.
    fn position<'p>(&'p self, x: &'p [Vec<f64>], root: &[usize], node: usize) -> &'p [f64] {
        let t = self.terminals.len();
        let r = root[node];
        if r < t {
            &self.terminals[r]
        } else {
            &x[r - t]
        }
    }

    fn cost_with(&self, x: &[Vec<f64>], root: &[usize]) -> f64 {
        self.edges
            .iter()
            .zip(self.coef)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&(u, v), &c)| {
                c * crate::measures::distance(self.position(x, root, u), self.position(x, root, v))
            })
            .sum()
    }

    /// Unsmoothed cost of a full placement of the Steiner points.
    pub fn cost(&self, x: &[Vec<f64>]) -> f64 {
        let root: Vec<usize> = (0..self.terminals.len() + self.steiner).collect();
        self.cost_with(x, &root)
    }

    /// Minimizes from `init`, then contracts short edges one at a time,
    /// keeping a contraction whenever the reoptimized cost does not go up.
    ///
    /// The contractions deal with optima where a Steiner point sits on a
    /// neighbour; the smooth iteration only creeps towards those.
    pub fn optimize(&self, init: Vec<Vec<f64>>, tol: f64, max_iter: usize) -> Placement {
        let t = self.terminals.len();
        let mut root: Vec<usize> = (0..t + self.steiner).collect();
        let mut x = init;
        if self.steiner == 0 {
            return Placement {
                cost: self.cost(&x),
                steiner: x,
                iterations: 0,
            };
        }
        let mut iterations = self.reweighted(&root, &mut x, 1e-2, tol, max_iter);
        let mut current = self.cost_with(&x, &root);
        loop {
            let mut short: Vec<(f64, usize, usize)> = self
                .edges
                .iter()
                .filter_map(|&(u, v)| {
                    let (ru, rv) = (root[u], root[v]);
                    if ru == rv || (ru < t && rv < t) {
                        return None;
                    }
                    let d = crate::measures::distance(self.position(&x, &root, u), self.position(&x, &root, v));
                    (d < 0.05 * self.scale).then_some((d, ru, rv))
                })
                .collect();
            short.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut accepted = false;
            for (_, ru, rv) in short {
                let (keep, gone) = if rv < t { (rv, ru) } else { (ru, rv) };
                let trial_root: Vec<usize> = root.iter().map(|&r| if r == gone { keep } else { r }).collect();
                let mut trial = x.clone();
                iterations += self.reweighted(&trial_root, &mut trial, 1e-6, tol, max_iter);
                let c = self.cost_with(&trial, &trial_root);
                if c <= current + 1e-15 * self.scale {
                    root = trial_root;
                    x = trial;
                    current = c;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        // write out final coordinates of tied points
        let resolved: Vec<Vec<f64>> = (0..self.steiner)
            .map(|i| self.position(&x, &root, t + i).to_vec())
            .collect();
        Placement {
            cost: self.cost(&resolved),
            steiner: resolved,
            iterations,
        }
    }

    /// Smoothed reweighted iteration over the free Steiner classes, starting
    /// from smoothing `eps0 · scale`. Returns the iteration count.
    fn reweighted(&self, root: &[usize], x: &mut [Vec<f64>], eps0: f64, tol: f64, max_iter: usize) -> usize {
        let t = self.terminals.len();
        let mut var = vec![usize::MAX; t + self.steiner];
        let mut free = Vec::new();
        for u in t..t + self.steiner {
            if root[u] == u {
                var[u] = free.len();
                free.push(u);
            }
        }
        let s = free.len();
        if s == 0 {
            return 0;
        }
        let step_tol = tol * self.scale;
        let eps_min = 1e-10 * self.scale;
        let mut eps = (eps0 * self.scale).max(eps_min);
        let mut iterations = 0;
        let mut at_level = 0;
        while iterations < max_iter {
            let mut lap = DMatrix::<f64>::zeros(s, s);
            let mut rhs = DMatrix::<f64>::zeros(s, self.dim);
            let mut wmax: f64 = 0.0;
            for (&(u, v), &c) in self.edges.iter().zip(self.coef) {
                let (ru, rv) = (root[u], root[v]);
                if c == 0.0 || ru == rv {
                    continue;
                }
                let d = crate::measures::distance(self.position(x, root, u), self.position(x, root, v));
                let w = c / (d * d + eps * eps).sqrt();
                wmax = wmax.max(w);
                match (ru >= t, rv >= t) {
                    (true, true) => {
                        let (i, j) = (var[ru], var[rv]);
                        lap[(i, i)] += w;
                        lap[(j, j)] += w;
                        lap[(i, j)] -= w;
                        lap[(j, i)] -= w;
                    }
                    (true, false) | (false, true) => {
                        let (st, term) = if ru >= t { (var[ru], rv) } else { (var[rv], ru) };
                        lap[(st, st)] += w;
                        for k in 0..self.dim {
                            rhs[(st, k)] += w * self.terminals[term][k];
                        }
                    }
                    (false, false) => {}
                }
            }
            // tiny pull towards the current point keeps isolated Steiner
            // points (all incident flows zero) well posed
            let ridge = 1e-12 * (wmax + 1.0);
            for (i, &u) in free.iter().enumerate() {
                lap[(i, i)] += ridge;
                for k in 0..self.dim {
                    rhs[(i, k)] += ridge * x[u - t][k];
                }
            }
            let sol = match lap.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match lap.lu().solve(&rhs) {
                    Some(sol) => sol,
                    None => break,
                },
            };
            let mut step: f64 = 0.0;
            for (i, &u) in free.iter().enumerate() {
                for k in 0..self.dim {
                    step = step.max((sol[(i, k)] - x[u - t][k]).abs());
                    x[u - t][k] = sol[(i, k)];
                }
            }
            iterations += 1;
            at_level += 1;
            if eps > eps_min {
                if step < eps || at_level >= LEVEL_ITERATIONS {
                    eps = (eps * 0.1).max(eps_min);
                    at_level = 0;
                }
            } else if step < step_tol || at_level >= FINAL_ITERATIONS {
                break;
            }
        }
        iterations
    }
}
