//! LP relaxation of the covering program.
//!
//! `min 1'z  s.t.  A z >= 1, z >= 0` is solved through its dual packing problem
//! `max 1'y  s.t.  A'y <= 1, y >= 0`, whose slack basis is feasible at the
//! origin. A revised primal simplex with an explicit basis inverse runs on the
//! dual; the basis has one row per covering variable, so each iteration costs
//! `O(n^2 + nnz)` no matter how many constraints there are. At optimality the
//! simplex multipliers are a basic optimal `z`. The upper bound `z <= 1` is
//! implied since every cost is positive.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 512;
const DEGENERATE_SWITCH: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    /// Objective of the dual feasible point, a valid lower bound.
    pub objective: f64,
    /// Basic optimal primal solution, clipped to `[0, 1]`.
    pub z: Vec<f64>,
}

/// `constraints` must be non-empty index sets below `num_vars`.
pub(crate) fn solve_covering_lp(
    num_vars: usize,
    constraints: &[Vec<usize>],
    tolerance: f64,
) -> Result<LpSolution> {
    let n = num_vars;
    let m = constraints.len();
    if m == 0 || n == 0 {
        return Ok(LpSolution {
            objective: 0.0,
            z: vec![0.0; n],
        });
    }
    let mut simplex = DualSimplex::new(n, constraints);
    let cap = 10_000usize.max(20 * (n + m));
    let mut degenerate_run = 0usize;

    for iteration in 0..cap {
        if iteration > 0 && iteration % REFACTOR_EVERY == 0 {
            simplex.refactor();
        }
        simplex.update_multipliers();
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let Some(entering) = simplex.price(tolerance, bland) else {
            return Ok(simplex.solution());
        };
        let w = simplex.ftran(entering);
        let leaving = simplex
            .ratio_test(&w, bland)
            .expect("packing LP is bounded, some basic entry must block");
        let step = simplex.xb[leaving] / w[leaving];
        if step <= 1e-12 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        simplex.pivot(entering, leaving, &w);
    }
    Err(Error::LpNotConverged { iterations: cap })
}

struct DualSimplex<'a> {
    n: usize,
    m: usize,
    constraints: &'a [Vec<usize>],
    /// Column ids: `0..m` constraint columns, `m..m+n` slacks.
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pi: Vec<f64>,
}

impl<'a> DualSimplex<'a> {
    fn new(n: usize, constraints: &'a [Vec<usize>]) -> Self {
        let m = constraints.len();
        let mut binv = vec![0.0; n * n];
        for i in 0..n {
            binv[i * n + i] = 1.0;
        }
        let mut is_basic = vec![false; m + n];
        for flag in &mut is_basic[m..] {
            *flag = true;
        }
        DualSimplex {
            n,
            m,
            constraints,
            basis: (m..m + n).collect(),
            is_basic,
            binv,
            xb: vec![1.0; n],
            pi: vec![0.0; n],
        }
    }

    fn cost(&self, col: usize) -> f64 {
        if col < self.m {
            1.0
        } else {
            0.0
        }
    }

    fn update_multipliers(&mut self) {
        let n = self.n;
        self.pi.iter_mut().for_each(|p| *p = 0.0);
        for r in 0..n {
            if self.basis[r] < self.m {
                let row = &self.binv[r * n..(r + 1) * n];
                for (p, &b) in self.pi.iter_mut().zip(row) {
                    *p += b;
                }
            }
        }
    }

    fn reduced_cost(&self, col: usize) -> f64 {
        if col < self.m {
            1.0 - self.constraints[col].iter().map(|&i| self.pi[i]).sum::<f64>()
        } else {
            -self.pi[col - self.m]
        }
    }

    /// Dantzig's rule, or Bland's (lowest index) while stalling.
    fn price(&self, tolerance: f64, bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_d = tolerance;
        for col in 0..self.m + self.n {
            if self.is_basic[col] {
                continue;
            }
            let d = self.reduced_cost(col);
            if d > best_d {
                if bland {
                    return Some(col);
                }
                best_d = d;
                best = Some(col);
            }
        }
        best
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n];
        if col < self.m {
            for &i in &self.constraints[col] {
                for (r, wr) in w.iter_mut().enumerate() {
                    *wr += self.binv[r * n + i];
                }
            }
        } else {
            let i = col - self.m;
            for (r, wr) in w.iter_mut().enumerate() {
                *wr = self.binv[r * n + i];
            }
        }
        w
    }

    fn ratio_test(&self, w: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (r, &wr) in w.iter().enumerate() {
            if wr <= PIVOT_TOL {
                continue;
            }
            let ratio = self.xb[r].max(0.0) / wr;
            best = match best {
                None => Some((r, ratio)),
                Some((b, br)) => {
                    let better = if (ratio - br).abs() <= 1e-12 {
                        if bland {
                            self.basis[r] < self.basis[b]
                        } else {
                            wr > w[b]
                        }
                    } else {
                        ratio < br
                    };
                    if better {
                        Some((r, ratio))
                    } else {
                        Some((b, br))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn pivot(&mut self, entering: usize, leaving: usize, w: &[f64]) {
        let n = self.n;
        let pivot = w[leaving];
        for k in 0..n {
            self.binv[leaving * n + k] /= pivot;
        }
        self.xb[leaving] /= pivot;
        let (pivot_row, pivot_x) = (self.binv[leaving * n..(leaving + 1) * n].to_vec(), self.xb[leaving]);
        for r in 0..n {
            if r == leaving || w[r] == 0.0 {
                continue;
            }
            let f = w[r];
            let row = &mut self.binv[r * n..(r + 1) * n];
            for (x, &p) in row.iter_mut().zip(&pivot_row) {
                *x -= f * p;
            }
            self.xb[r] -= f * pivot_x;
            if self.xb[r] < 0.0 && self.xb[r] > -1e-11 {
                self.xb[r] = 0.0;
            }
        }
        self.is_basic[self.basis[leaving]] = false;
        self.is_basic[entering] = true;
        self.basis[leaving] = entering;
    }

    /// Recomputes the basis inverse from scratch to shed accumulated error.
    fn refactor(&mut self) {
        let n = self.n;
        let mut b = DMatrix::<f64>::zeros(n, n);
        for (r, &col) in self.basis.iter().enumerate() {
            if col < self.m {
                for &i in &self.constraints[col] {
                    b[(i, r)] = 1.0;
                }
            } else {
                b[(col - self.m, r)] = 1.0;
            }
        }
        let Some(inv) = b.try_inverse() else {
            return;
        };
        for r in 0..n {
            for k in 0..n {
                self.binv[r * n + k] = inv[(r, k)];
            }
            self.xb[r] = (0..n).map(|k| inv[(r, k)]).sum::<f64>().max(0.0);
        }
    }

    fn solution(&self) -> LpSolution {
        let objective = self
            .basis
            .iter()
            .zip(&self.xb)
            .map(|(&col, &x)| self.cost(col) * x)
            .sum();
        LpSolution {
            objective,
            z: self.pi.iter().map(|&p| p.clamp(0.0, 1.0)).collect(),
        }
    }
}
