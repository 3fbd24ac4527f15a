//! Problem representation shared by the LP and MILP solvers.

use std::fmt;

/// Index of a variable inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub is_binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(Var, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimization problem with bounded variables, linear rows, optional
/// binary variables and SOS1 pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub objective: Vec<f64>,
    /// Constant added to the objective value. Not seen by the solver.
    pub objective_offset: f64,
    pub constraints: Vec<Constraint>,
    pub sos1: Vec<(Var, Var)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("variable {name}: bounds must not be NaN")]
    NanBound { name: String },
    #[error("binary variable {name} must have bounds within [0, 1]")]
    BinaryBounds { name: String },
    #[error("SOS1 pair ({0}, {1}) must reference distinct continuous nonnegative variables")]
    BadSos(String, String),
    #[error("constraint {name} references unknown variable {index}")]
    UnknownVariable { name: String, index: usize },
    #[error("constraint {name} has a non-finite coefficient or right-hand side")]
    NonFinite { name: String },
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Var {
        self.variables.push(Variable { name: name.into(), lower, upper, is_binary: false });
        self.objective.push(0.0);
        Var(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.variables.push(Variable { name: name.into(), lower: 0.0, upper: 1.0, is_binary: true });
        self.objective.push(0.0);
        Var(self.variables.len() - 1)
    }

    pub fn set_cost(&mut self, var: Var, cost: f64) {
        self.objective[var.0] = cost;
    }

    pub fn add_cost(&mut self, var: Var, cost: f64) {
        self.objective[var.0] += cost;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(Var, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint { name: name.into(), coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn add_sos1(&mut self, a: Var, b: Var) {
        self.sos1.push((a, b));
    }

    pub fn is_pure_lp(&self) -> bool {
        self.sos1.is_empty() && !self.variables.iter().any(|v| v.is_binary)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(values).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() {
                return Err(ModelError::NanBound { name: v.name.clone() });
            }
            if v.lower > v.upper {
                return Err(ModelError::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.is_binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds { name: v.name.clone() });
            }
        }
        let n = self.variables.len();
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(ModelError::NonFinite { name: c.name.clone() });
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= n {
                    return Err(ModelError::UnknownVariable { name: c.name.clone(), index: v.0 });
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite { name: c.name.clone() });
                }
            }
        }
        for &(a, b) in &self.sos1 {
            let ok = a != b
                && a.0 < n
                && b.0 < n
                && [a, b].iter().all(|v| {
                    let var = &self.variables[v.0];
                    !var.is_binary && var.lower >= 0.0
                });
            if !ok {
                let name = |v: Var| self.variables.get(v.0).map_or(format!("#{}", v.0), |x| x.name.clone());
                return Err(ModelError::BadSos(name(a), name(b)));
            }
        }
        Ok(())
    }

    /// Largest bound or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        let rows = self.constraints.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Lower bound on the optimum proven by the solver (equals the objective
    /// for LPs; the best open node bound for a truncated branch-and-bound).
    pub bound: f64,
    pub iterations: usize,
    pub nodes: usize,
}

impl Solution {
    pub fn value(&self, var: Var) -> f64 {
        self.values[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn without_values(status: Status, iterations: usize) -> Self {
        Solution {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
            bound: f64::NAN,
            iterations,
            nodes: 0,
        }
    }
}

/// Solver tolerances and limits.
#[derive(Debug, Clone)]
pub struct Options {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Absolute gap at which branch-and-bound stops.
    pub mip_gap: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    /// `None` means `50 * (rows + columns)`.
    pub max_iterations: Option<usize>,
    pub node_limit: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            mip_gap: 1e-6,
            stall_threshold: 64,
            max_iterations: None,
            node_limit: 50_000,
        }
    }
}
