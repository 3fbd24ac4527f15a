//! Best-first branch-and-bound over SOS1 pairs and binary variables.
//!
//! Each node is the root program with a set of variables fixed. A child is
//! re-optimized with dual iterations starting from its parent's final tableau,
//! which stays dual feasible because fixing a variable never changes reduced
//! costs. After every node the search dives into the child that keeps the
//! larger member of the violated pair; the sibling is queued with a shared
//! snapshot of the parent tableau.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::model::{LinearProgram, Options, Solution, Status};
use crate::simplex::{Outcome, Tableau};

/// Snapshots are dropped (and nodes rebuilt from the root) beyond this size.
const SNAPSHOT_BUDGET_BYTES: usize = 256 << 20;
const INTEGRALITY_TOL: f64 = 1e-6;

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    snapshot: Option<Rc<Tableau>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Branch {
    Sos { keep: usize, drop: usize },
    Binary { var: usize, value: f64 },
}

/// Picks the most violated SOS1 pair, or failing that the most fractional
/// binary. Variables already fixed on this node are never branched on
/// again: their value may sit anywhere within the feasibility tolerance.
fn find_branch(lp: &LinearProgram, tab: &Tableau, fixings: &[(usize, f64)], sos_tol: f64) -> Option<Branch> {
    let fixed = |j: usize| fixings.iter().any(|&(f, _)| f == j);
    let mut best: Option<(f64, Branch)> = None;
    for &(a, b) in &lp.sos1 {
        if fixed(a.0) || fixed(b.0) {
            continue;
        }
        let (xa, xb) = (tab.structural_value(a.0), tab.structural_value(b.0));
        let v = xa.min(xb);
        if v > sos_tol && best.as_ref().map_or(true, |(s, _)| v > *s) {
            let (keep, drop) = if xa >= xb { (a.0, b.0) } else { (b.0, a.0) };
            best = Some((v, Branch::Sos { keep, drop }));
        }
    }
    if best.is_some() {
        return best.map(|(_, b)| b);
    }
    for (j, var) in lp.variables.iter().enumerate() {
        if !var.is_binary || fixed(j) {
            continue;
        }
        let x = tab.structural_value(j);
        let frac = (x - x.round()).abs();
        if frac > INTEGRALITY_TOL && best.as_ref().map_or(true, |(s, _)| frac > *s) {
            best = Some((frac, Branch::Binary { var: j, value: x.round() }));
        }
    }
    best.map(|(_, b)| b)
}

pub(crate) fn branch_and_bound(lp: &LinearProgram, opts: &Options) -> Solution {
    let mut root = Tableau::new(lp, opts);
    let out = root.solve(opts);
    let mut iterations = root.iterations;
    match out {
        Outcome::Optimal => {}
        Outcome::Infeasible => return Solution::without_values(Status::Infeasible, iterations),
        Outcome::Unbounded => return Solution::without_values(Status::Unbounded, iterations),
        Outcome::IterationLimit => {
            return Solution::without_values(Status::IterationLimit, iterations)
        }
    }
    let root = Rc::new(root);
    let tab_bytes = root.byte_size();
    let sos_tol = opts.feasibility_tol * 1e-2;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut stored_bytes = 0usize;
    let mut truncated = false;

    // Current node being dived into: (tableau, fixings).
    let mut current: Option<(Tableau, Vec<(usize, f64)>, f64)> =
        Some(((*root).clone(), Vec::new(), f64::NEG_INFINITY));
    // Bounds of nodes abandoned at the node limit.
    let mut abandoned = f64::INFINITY;

    loop {
        if nodes >= opts.node_limit {
            if let Some((_, _, b)) = &current {
                abandoned = abandoned.min(*b);
            }
            truncated |= current.is_some() || !heap.is_empty();
            break;
        }
        let (mut tab, fixings) = match current.take() {
            Some((t, f, _)) => (t, f),
            None => {
                let Some(node) = heap.pop() else { break };
                if let Some((best, _)) = &incumbent {
                    if node.bound >= best - opts.mip_gap {
                        heap.clear();
                        break;
                    }
                }
                if node.snapshot.is_some() {
                    stored_bytes = stored_bytes.saturating_sub(tab_bytes);
                }
                let (&(j, v), _) = node.fixings.split_last().expect("non-root node");
                let tab = match node.snapshot {
                    Some(snap) => {
                        let mut t = (*snap).clone();
                        t.fix(j, v);
                        t
                    }
                    None => {
                        let mut t = (*root).clone();
                        for &(j, v) in &node.fixings {
                            t.fix(j, v);
                        }
                        t
                    }
                };
                (tab, node.fixings)
            }
        };
        nodes += 1;
        tab.iterations = 0;
        let out = if fixings.is_empty() { Outcome::Optimal } else { tab.reoptimize(opts) };
        iterations += tab.iterations;
        match out {
            Outcome::Optimal => {}
            Outcome::Infeasible => continue,
            // A node whose LP cannot be finished is dropped; the result is
            // then no longer a proof of optimality.
            Outcome::Unbounded | Outcome::IterationLimit => {
                truncated = true;
                continue;
            }
        }
        let obj = tab.objective();
        if let Some((best, _)) = &incumbent {
            if obj >= best - opts.mip_gap {
                continue;
            }
        }
        let Some(branch) = find_branch(lp, &tab, &fixings, sos_tol) else {
            let values = tab.structural_values();
            if lp.max_violation(&values) <= opts.feasibility_tol * crate::ACCEPT_FACTOR {
                incumbent = Some((obj, values));
            } else {
                truncated = true;
            }
            continue;
        };
        let (dive, other) = match branch {
            Branch::Sos { keep, drop } => ((drop, 0.0), (keep, 0.0)),
            Branch::Binary { var, value } => ((var, value), (var, 1.0 - value)),
        };
        let mut other_fix = fixings.clone();
        other_fix.push(other);
        let snapshot = if stored_bytes + tab_bytes <= SNAPSHOT_BUDGET_BYTES {
            stored_bytes += tab_bytes;
            Some(Rc::new(tab.clone()))
        } else {
            None
        };
        seq += 1;
        heap.push(Node { bound: obj, seq, fixings: other_fix, snapshot });
        let mut dive_fix = fixings;
        dive_fix.push(dive);
        tab.fix(dive.0, dive.1);
        current = Some((tab, dive_fix, obj));
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(abandoned, f64::min);
    match incumbent {
        Some((obj, values)) => {
            let status = if truncated || open_bound < obj - opts.mip_gap {
                Status::IterationLimit
            } else {
                Status::Optimal
            };
            let bound = if status == Status::Optimal { obj } else { open_bound.min(obj) };
            Solution {
                status,
                objective_value: obj + lp.objective_offset,
                bound: bound + lp.objective_offset,
                values,
                iterations,
                nodes,
            }
        }
        None => {
            let status = if truncated { Status::IterationLimit } else { Status::Infeasible };
            let mut s = Solution::without_values(status, iterations);
            s.nodes = nodes;
            s
        }
    }
}
