//! A small embedded LP/MILP solver.
//!
//! Linear programs are solved with a dense bounded-variable simplex (two
//! phases, Dantzig pricing, Bland's rule after a run of degenerate pivots).
//! Mixed programs with SOS1 pairs or binary variables are solved by
//! branch-and-bound on top of it. Every returned solution is checked against
//! the original rows and bounds before it leaves this crate.

mod lp_format;
mod milp;
mod model;
mod simplex;

pub use lp_format::write_lp;
pub use model::{
    Constraint, LinearProgram, ModelError, Options, Relation, Solution, Status, Var, Variable,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solve_lp called on a program with binaries or SOS1 pairs")]
    NotAnLp,
    #[error("solution violates the program by {violation:e} (status {status:?})")]
    Verification { status: Status, violation: f64 },
}

/// Solves a pure LP.
pub fn solve_lp(lp: &LinearProgram, opts: &Options) -> Result<Solution, SolveError> {
    lp.validate()?;
    if !lp.is_pure_lp() {
        return Err(SolveError::NotAnLp);
    }
    let mut tab = simplex::Tableau::new(lp, opts);
    let out = tab.solve(opts);
    let iterations = tab.iterations;
    let sol = match out {
        simplex::Outcome::Optimal => {
            let values = tab.structural_values();
            let objective_value = lp.objective_value(&values);
            Solution {
                status: Status::Optimal,
                bound: tab.dual_bound(lp) + lp.objective_offset,
                values,
                objective_value,
                iterations,
                nodes: 0,
            }
        }
        simplex::Outcome::Infeasible => Solution::without_values(Status::Infeasible, iterations),
        simplex::Outcome::Unbounded => Solution::without_values(Status::Unbounded, iterations),
        simplex::Outcome::IterationLimit => {
            Solution::without_values(Status::IterationLimit, iterations)
        }
    };
    verify(lp, sol, opts)
}

/// Solves a program with SOS1 pairs and/or binary variables to within
/// `opts.mip_gap`. Pure LPs go through the same path and need one node.
pub fn solve_milp(lp: &LinearProgram, opts: &Options) -> Result<Solution, SolveError> {
    lp.validate()?;
    let sol = milp::branch_and_bound(lp, opts);
    verify(lp, sol, opts)
}

/// Accumulated round-off in a reported point may exceed the simplex's own
/// per-row tolerance by this factor.
pub(crate) const ACCEPT_FACTOR: f64 = 10.0;

fn verify(lp: &LinearProgram, sol: Solution, opts: &Options) -> Result<Solution, SolveError> {
    if sol.values.is_empty() {
        return Ok(sol);
    }
    let violation = lp.max_violation(&sol.values);
    if violation > opts.feasibility_tol * ACCEPT_FACTOR {
        return Err(SolveError::Verification { status: sol.status, violation });
    }
    Ok(sol)
}

/// Seam for plugging in another solver.
pub trait Backend {
    fn solve(&self, lp: &LinearProgram) -> Result<Solution, SolveError>;
}

/// The embedded simplex/branch-and-bound solver.
#[derive(Debug, Clone, Default)]
pub struct Embedded {
    pub options: Options,
}

impl Backend for Embedded {
    fn solve(&self, lp: &LinearProgram) -> Result<Solution, SolveError> {
        if lp.is_pure_lp() {
            solve_lp(lp, &self.options)
        } else {
            solve_milp(lp, &self.options)
        }
    }
}
