//! Best-first branch and bound with LP relaxation bounds.
//!
//! Nodes are partial fixings of the `z` variables. Each node is unit-propagated
//! (a constraint with a single free variable and no outlier forces that
//! variable), bounded by the LP relaxation of its residual program, and used
//! to refresh the incumbent through a greedy cover. The open node with the
//! smallest bound is expanded next, deeper nodes first on ties. Branching picks
//! the free variable occurring in the most unsatisfied constraints and explores
//! `z = 1` before `z = 0`. The search stops with a certificate once
//! `UB - LB < 1 - tol`, the objective being integral.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::consensus::{CoveringProgram, Label, LabelVector};
use crate::error::{Error, Result};

use super::greedy::greedy_residual;
use super::lp::solve_covering_lp;
use super::{Residual, SolverConfig, SolverResult, TraceEntry};

type Fixing = Vec<Option<bool>>;

struct OpenNode {
    fixed: Fixing,
    bound: f64,
    key: i64,
    depth: usize,
    seq: u64,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // max-heap: the greatest node is the smallest bound, then deepest, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .cmp(&self.key)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

enum Evaluation {
    Infeasible,
    /// The node's optimum is known: a leaf or an integral LP solution.
    Solved(Vec<bool>),
    Open {
        fixed: Fixing,
        bound: f64,
        branch_var: usize,
        heuristic: Vec<bool>,
    },
}

struct Search<'a> {
    program: &'a CoveringProgram,
    incident: Vec<Vec<usize>>,
    tolerance: f64,
}

impl<'a> Search<'a> {
    fn new(program: &'a CoveringProgram, tolerance: f64) -> Self {
        let mut incident = vec![Vec::new(); program.num_vars()];
        for (k, c) in program.constraints().iter().enumerate() {
            for &i in c {
                incident[i].push(k);
            }
        }
        Search {
            program,
            incident,
            tolerance,
        }
    }

    fn propagate(&self, fixed: &mut Fixing) -> bool {
        loop {
            let mut changed = false;
            for c in self.program.constraints() {
                if c.iter().any(|&i| fixed[i] == Some(true)) {
                    continue;
                }
                let mut free = c.iter().filter(|&&i| fixed[i].is_none());
                match (free.next(), free.next()) {
                    (None, _) => return false,
                    (Some(&i), None) => {
                        fixed[i] = Some(true);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn evaluate(&self, mut fixed: Fixing) -> Result<Evaluation> {
        if !self.propagate(&mut fixed) {
            return Ok(Evaluation::Infeasible);
        }
        let residual = match Residual::build(self.program.num_vars(), self.program.constraints(), |i| fixed[i]) {
            Ok(r) => r,
            Err(Error::InfeasibleNode { .. }) => return Ok(Evaluation::Infeasible),
            Err(e) => return Err(e),
        };
        let base: Vec<bool> = fixed.iter().map(|f| *f == Some(true)).collect();
        if residual.constraints.is_empty() {
            return Ok(Evaluation::Solved(base));
        }
        let ones = base.iter().filter(|&&z| z).count() as f64;
        let lp = solve_covering_lp(residual.vars.len(), &residual.constraints, self.tolerance)?;
        let bound = ones + lp.objective;

        let integral = lp.z.iter().all(|&z| z <= 1e-6 || z >= 1.0 - 1e-6);
        if integral {
            let mut z = base.clone();
            for (local, &value) in lp.z.iter().enumerate() {
                if value >= 0.5 {
                    z[residual.vars[local]] = true;
                }
            }
            if self.feasible(&z) {
                return Ok(Evaluation::Solved(z));
            }
        }

        let mut greedy = base.clone();
        for local in greedy_residual(&residual) {
            greedy[residual.vars[local]] = true;
        }
        let mut rounded = self.round_lp(&base, &residual, &lp.z);
        for z in [&mut greedy, &mut rounded] {
            self.drop_redundant(z);
            self.improve(z);
        }
        let count = |z: &[bool]| z.iter().filter(|&&b| b).count();
        let heuristic = if count(&rounded) < count(&greedy) { rounded } else { greedy };

        let mut counts = vec![0usize; residual.vars.len()];
        for &i in residual.constraints.iter().flatten() {
            counts[i] += 1;
        }
        let (branch_local, _) = counts
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });

        Ok(Evaluation::Open {
            fixed,
            bound,
            branch_var: residual.vars[branch_local],
            heuristic,
        })
    }

    fn feasible(&self, z: &[bool]) -> bool {
        self.program
            .constraints()
            .iter()
            .all(|c| c.iter().any(|&i| z[i]))
    }

    /// Local search on a feasible cover: redundant outliers are dropped, and an
    /// outlier `i` is swapped for an inlier `k` lying in every constraint only
    /// `i` covers whenever that swap makes some other outlier redundant.
    fn improve(&self, z: &mut [bool]) {
        let constraints = self.program.constraints();
        let mut cover: Vec<usize> = constraints
            .iter()
            .map(|c| c.iter().filter(|&&i| z[i]).count())
            .collect();
        let critical = |i: usize, cover: &[usize]| -> Vec<usize> {
            self.incident[i].iter().copied().filter(|&k| cover[k] == 1).collect()
        };
        let set = |i: usize, value: bool, z: &mut [bool], cover: &mut [usize]| {
            z[i] = value;
            for &k in &self.incident[i] {
                if value {
                    cover[k] += 1;
                } else {
                    cover[k] -= 1;
                }
            }
        };
        loop {
            let mut improved = false;
            for i in 0..z.len() {
                if !z[i] {
                    continue;
                }
                let crit = critical(i, &cover);
                if crit.is_empty() {
                    set(i, false, z, &mut cover);
                    improved = true;
                    continue;
                }
                let candidates: Vec<usize> = constraints[crit[0]]
                    .iter()
                    .copied()
                    .filter(|&k| !z[k] && crit.iter().all(|&c| constraints[c].contains(&k)))
                    .collect();
                for k in candidates {
                    set(i, false, z, &mut cover);
                    set(k, true, z, &mut cover);
                    let mut neighbors: Vec<usize> = self.incident[k]
                        .iter()
                        .flat_map(|&c| constraints[c].iter().copied())
                        .filter(|&j| j != k && z[j])
                        .collect();
                    neighbors.sort_unstable();
                    neighbors.dedup();
                    if let Some(j) = neighbors.into_iter().find(|&j| critical(j, &cover).is_empty()) {
                        set(j, false, z, &mut cover);
                        improved = true;
                        break;
                    }
                    set(k, false, z, &mut cover);
                    set(i, true, z, &mut cover);
                }
            }
            if !improved {
                return;
            }
        }
    }

    /// Cover built by taking residual variables in decreasing LP value.
    fn round_lp(&self, base: &[bool], residual: &Residual, lp_z: &[f64]) -> Vec<bool> {
        let mut order: Vec<usize> = (0..lp_z.len()).filter(|&v| lp_z[v] > 0.0).collect();
        order.sort_by(|&a, &b| lp_z[b].total_cmp(&lp_z[a]).then(a.cmp(&b)));
        let mut z = base.to_vec();
        let mut covered = vec![false; residual.constraints.len()];
        let mut incident = vec![Vec::new(); lp_z.len()];
        for (k, c) in residual.constraints.iter().enumerate() {
            for &v in c {
                incident[v].push(k);
            }
        }
        for v in order {
            if incident[v].iter().any(|&k| !covered[k]) {
                z[residual.vars[v]] = true;
                for &k in &incident[v] {
                    covered[k] = true;
                }
            }
        }
        z
    }

    /// Clears outliers whose every constraint holds another outlier.
    fn drop_redundant(&self, z: &mut [bool]) {
        for i in 0..z.len() {
            if !z[i] {
                continue;
            }
            let redundant = self.incident[i].iter().all(|&k| {
                self.program.constraints()[k]
                    .iter()
                    .any(|&j| j != i && z[j])
            });
            if redundant {
                z[i] = false;
            }
        }
    }
}

fn bound_key(bound: f64) -> i64 {
    (bound * 1e6).round() as i64
}

/// Globally optimal solution of the covering program by branch and bound.
///
/// When a budget runs out the best incumbent is returned with
/// `optimal = false` and the proven lower bound.
pub fn solve_exact(program: &CoveringProgram, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    let start = Instant::now();
    let tol = config.lp_tolerance;
    let n = program.num_vars();
    let search = Search::new(program, tol);

    let mut incumbent = vec![true; n];
    let mut upper = n;
    let mut lower: f64;
    let mut trace = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    let offer = |z: Vec<bool>, incumbent: &mut Vec<bool>, upper: &mut usize| {
        let count = z.iter().filter(|&&b| b).count();
        if count < *upper {
            *upper = count;
            *incumbent = z;
        }
    };

    // seed with a greedy cover of the whole program
    let root_residual = Residual::build(n, program.constraints(), |_| None)?;
    let mut seed = vec![false; n];
    for local in greedy_residual(&root_residual) {
        seed[root_residual.vars[local]] = true;
    }
    search.drop_redundant(&mut seed);
    search.improve(&mut seed);
    offer(seed, &mut incumbent, &mut upper);

    match search.evaluate(vec![None; n])? {
        Evaluation::Infeasible => unreachable!("the root always admits the all-outlier cover"),
        Evaluation::Solved(z) => {
            offer(z, &mut incumbent, &mut upper);
            lower = upper as f64;
        }
        Evaluation::Open {
            fixed,
            bound,
            heuristic,
            branch_var,
        } => {
            offer(heuristic, &mut incumbent, &mut upper);
            lower = bound.min(upper as f64);
            if ((bound - tol).ceil() as usize) < upper {
                heap.push((
                    OpenNode {
                        fixed,
                        bound,
                        key: bound_key(bound),
                        depth: 0,
                        seq,
                    },
                    branch_var,
                ));
                seq += 1;
            }
        }
    }
    if config.trace_enabled {
        trace.push(TraceEntry {
            iteration: 0,
            upper_bound: upper,
            lower_bound: lower,
            open_nodes: heap.len(),
        });
    }

    let mut nodes = 0usize;
    let mut optimal = true;
    loop {
        let Some((node, branch_var)) = heap.pop() else {
            lower = upper as f64;
            break;
        };
        lower = lower.max(node.bound.min(upper as f64));
        if upper as f64 - lower < 1.0 - tol {
            // integral objective: the remaining nodes cannot beat the incumbent
            heap.clear();
            lower = upper as f64;
            break;
        }
        if nodes >= config.node_budget || start.elapsed() >= config.time_budget() {
            optimal = false;
            heap.push((node, branch_var));
            break;
        }
        nodes += 1;

        for value in [true, false] {
            let mut fixed = node.fixed.clone();
            fixed[branch_var] = Some(value);
            match search.evaluate(fixed)? {
                Evaluation::Infeasible => {}
                Evaluation::Solved(z) => offer(z, &mut incumbent, &mut upper),
                Evaluation::Open {
                    fixed,
                    bound,
                    branch_var,
                    heuristic,
                } => {
                    offer(heuristic, &mut incumbent, &mut upper);
                    if ((bound - tol).ceil() as usize) < upper {
                        heap.push((
                            OpenNode {
                                fixed,
                                bound: bound.max(node.bound),
                                key: bound_key(bound.max(node.bound)),
                                depth: node.depth + 1,
                                seq,
                            },
                            branch_var,
                        ));
                        seq += 1;
                    }
                }
            }
        }

        let frontier = heap.peek().map_or(upper as f64, |(top, _)| top.bound);
        lower = lower.max(frontier.min(upper as f64));
        if config.trace_enabled {
            trace.push(TraceEntry {
                iteration: nodes,
                upper_bound: upper,
                lower_bound: lower,
                open_nodes: heap.len(),
            });
        }
    }

    if config.trace_enabled {
        let last = trace.last().copied();
        let entry = TraceEntry {
            iteration: nodes,
            upper_bound: upper,
            lower_bound: lower,
            open_nodes: heap.len(),
        };
        if last != Some(entry) {
            trace.push(entry);
        }
    }

    let labels = LabelVector(incumbent.iter().map(|&z| Label::from_z(z)).collect());
    debug_assert!(program.is_satisfied_by(&labels));
    Ok(SolverResult {
        objective: upper,
        lower_bound: lower,
        optimal,
        violated_constraints: 0,
        nodes,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
        labels,
    })
}
