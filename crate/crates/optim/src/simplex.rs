//! Dense bounded-variable simplex on an explicit tableau.
//!
//! Every row `i` of the program is turned into an equality by a logical
//! column `s_i = -a_i x` whose bounds carry the row relation, so the original
//! right-hand sides live entirely in variable bounds and the tableau system is
//! homogeneous: `T x = 0`. Rows whose initial logical value is out of bounds
//! get an artificial column for phase 1.
//!
//! Primal iterations solve the initial problem; dual iterations re-optimize
//! after branch-and-bound fixes variables, which keeps the basis dual feasible.

use crate::model::{LinearProgram, Options, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable sitting at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    m: usize,
    ncols: usize,
    n_struct: usize,
    first_art: usize,
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    pub(crate) iterations: usize,
    max_iterations: usize,
}

const DROP: f64 = 1e-14;

impl Tableau {
    pub(crate) fn new(lp: &LinearProgram, opts: &Options) -> Tableau {
        let m = lp.constraints.len();
        let n = lp.variables.len();
        let mut lo = Vec::with_capacity(n + 2 * m);
        let mut hi = Vec::with_capacity(n + 2 * m);
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for v in &lp.variables {
            lo.push(v.lower);
            hi.push(v.upper);
            if v.lower.is_finite() {
                x.push(v.lower);
                state.push(ColState::Lower);
            } else if v.upper.is_finite() {
                x.push(v.upper);
                state.push(ColState::Upper);
            } else {
                x.push(0.0);
                state.push(ColState::Free);
            }
        }
        // Logical bounds: s_i = -activity_i.
        let mut activity = vec![0.0; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            activity[i] = c.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum();
            let (slo, shi) = match c.relation {
                Relation::Le => (-c.rhs, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, -c.rhs),
                Relation::Eq => (-c.rhs, -c.rhs),
            };
            lo.push(slo);
            hi.push(shi);
            x.push(0.0);
            state.push(ColState::Basic);
        }
        // Decide which rows need an artificial column.
        let mut arts: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            let s = -activity[i];
            let j = n + i;
            if s >= lo[j] - opts.feasibility_tol && s <= hi[j] + opts.feasibility_tol {
                x[j] = s;
            } else {
                let sb = if s < lo[j] { lo[j] } else { hi[j] };
                x[j] = sb;
                state[j] = if lo[j] == hi[j] || s < lo[j] { ColState::Lower } else { ColState::Upper };
                let resid = s - sb;
                arts.push((i, resid.signum()));
            }
        }
        let first_art = n + m;
        let ncols = first_art + arts.len();
        let mut t = vec![0.0; m * ncols];
        for (i, c) in lp.constraints.iter().enumerate() {
            let row = &mut t[i * ncols..(i + 1) * ncols];
            for &(v, a) in &c.coeffs {
                row[v.0] += a;
            }
            row[n + i] = 1.0;
        }
        let mut basis: Vec<usize> = (0..m).map(|i| n + i).collect();
        for (k, &(i, sigma)) in arts.iter().enumerate() {
            let j = first_art + k;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            // a_j * sigma = s_i - sb, so a_j = |resid|.
            let resid = (-activity[i]) - x[n + i];
            x.push(resid.abs());
            state.push(ColState::Basic);
            let row = &mut t[i * ncols..(i + 1) * ncols];
            row[j] = sigma;
            if sigma < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            basis[i] = j;
        }
        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&lp.objective);
        let max_iterations = opts.max_iterations.unwrap_or(50 * (m + ncols).max(20));
        Tableau {
            m,
            ncols,
            n_struct: n,
            first_art,
            t,
            lo,
            hi,
            cost,
            x,
            d: vec![0.0; ncols],
            basis,
            state,
            iterations: 0,
            max_iterations,
        }
    }

    pub(crate) fn byte_size(&self) -> usize {
        8 * (self.t.len() + 6 * self.ncols + 2 * self.m)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn has_artificials(&self) -> bool {
        self.first_art < self.ncols
    }

    fn compute_reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    /// Runs phase 1 (if needed) and phase 2.
    pub(crate) fn solve(&mut self, opts: &Options) -> Outcome {
        if self.has_artificials() {
            let mut c1 = vec![0.0; self.ncols];
            for c in c1.iter_mut().skip(self.first_art) {
                *c = 1.0;
            }
            self.compute_reduced_costs(&c1);
            match self.primal(opts) {
                Outcome::Optimal => {}
                Outcome::Unbounded => return Outcome::Infeasible,
                other => return other,
            }
            self.refresh_basic_values();
            let infeas: f64 = (self.first_art..self.ncols).map(|j| self.x[j]).sum();
            if infeas > opts.feasibility_tol * (1.0 + self.m as f64).sqrt() {
                return Outcome::Infeasible;
            }
            for j in self.first_art..self.ncols {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
                if self.state[j] != ColState::Basic {
                    self.state[j] = ColState::Lower;
                    self.x[j] = 0.0;
                }
            }
            self.drive_out_artificials(opts);
        }
        let cost = self.cost.clone();
        self.compute_reduced_costs(&cost);
        let out = self.primal(opts);
        if out == Outcome::Optimal {
            self.refresh_basic_values();
        }
        out
    }

    fn drive_out_artificials(&mut self, opts: &Options) {
        for r in 0..self.m {
            let b = self.basis[r];
            if b < self.first_art {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_art {
                if self.state[j] == ColState::Basic {
                    continue;
                }
                let a = self.at(r, j).abs();
                if a > opts.pivot_tol * 1e3 && best.map_or(true, |(_, v)| a > v) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                // Degenerate pivot: the artificial is at 0 so no value moves.
                self.pivot(r, q);
                self.state[b] = ColState::Lower;
                self.x[b] = 0.0;
            }
        }
    }

    fn eligible_primal(&self, j: usize, tol: f64) -> Option<f64> {
        let dj = self.d[j];
        match self.state[j] {
            ColState::Basic => None,
            _ if self.lo[j] == self.hi[j] => None,
            ColState::Lower if dj < -tol => Some(1.0),
            ColState::Upper if dj > tol => Some(-1.0),
            ColState::Free if dj.abs() > tol => Some(-dj.signum()),
            _ => None,
        }
    }

    fn primal(&mut self, opts: &Options) -> Outcome {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = degenerate_run >= opts.stall_threshold;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if let Some(dir) = self.eligible_primal(j, opts.optimality_tol) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    let score = self.d[j].abs();
                    if score > best {
                        best = score;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Outcome::Optimal;
            };
            self.iterations += 1;

            // Harris two-pass ratio test.
            let tol = opts.feasibility_tol;
            let mut theta_relaxed = self.hi[q] - self.lo[q];
            for i in 0..self.m {
                let a = self.at(i, q);
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let rate = -dir * a;
                let b = self.basis[i];
                let lim = if rate > 0.0 {
                    (self.hi[b] + tol - self.x[b]) / rate
                } else {
                    (self.x[b] - self.lo[b] + tol) / -rate
                };
                if lim < theta_relaxed {
                    theta_relaxed = lim;
                }
            }
            if theta_relaxed == f64::INFINITY {
                return Outcome::Unbounded;
            }
            let mut leave: Option<(usize, bool)> = None;
            let mut theta = self.hi[q] - self.lo[q];
            let mut best_pivot = 0.0;
            if theta > theta_relaxed {
                theta = f64::INFINITY;
                for i in 0..self.m {
                    let a = self.at(i, q);
                    if a.abs() <= opts.pivot_tol {
                        continue;
                    }
                    let rate = -dir * a;
                    let b = self.basis[i];
                    let (lim, to_upper) = if rate > 0.0 {
                        ((self.hi[b] - self.x[b]) / rate, true)
                    } else {
                        ((self.x[b] - self.lo[b]) / -rate, false)
                    };
                    if lim > theta_relaxed {
                        continue;
                    }
                    let better = if bland {
                        // Smallest basic column index among minimum ratios.
                        match leave {
                            None => true,
                            Some((r, _)) => {
                                lim < theta - 1e-12 || (lim <= theta + 1e-12 && b < self.basis[r])
                            }
                        }
                    } else {
                        a.abs() > best_pivot
                    };
                    if better {
                        theta = lim;
                        best_pivot = a.abs();
                        leave = Some((i, to_upper));
                    }
                }
                theta = theta.max(0.0);
            }

            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if theta > 0.0 {
                self.x[q] += dir * theta;
                for i in 0..self.m {
                    let a = self.at(i, q);
                    if a != 0.0 {
                        let b = self.basis[i];
                        self.x[b] -= dir * theta * a;
                    }
                }
            }
            match leave {
                None => {
                    // Bound flip.
                    if dir > 0.0 {
                        self.state[q] = ColState::Upper;
                        self.x[q] = self.hi[q];
                    } else {
                        self.state[q] = ColState::Lower;
                        self.x[q] = self.lo[q];
                    }
                }
                Some((r, to_upper)) => {
                    let b = self.basis[r];
                    self.pivot(r, q);
                    if to_upper {
                        self.state[b] = ColState::Upper;
                        self.x[b] = self.hi[b];
                    } else {
                        self.state[b] = ColState::Lower;
                        self.x[b] = self.lo[b];
                    }
                    if !self.x[b].is_finite() {
                        self.state[b] = ColState::Free;
                        self.x[b] = 0.0;
                    }
                }
            }
        }
    }

    /// Dual simplex from a dual feasible basis.
    pub(crate) fn dual(&mut self, opts: &Options) -> Outcome {
        let tol = opts.feasibility_tol;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = degenerate_run >= opts.stall_threshold;
            let mut leave: Option<(usize, bool)> = None;
            let mut worst = 0.0;
            for i in 0..self.m {
                let b = self.basis[i];
                let (viol, below) = if self.x[b] < self.lo[b] - tol {
                    (self.lo[b] - self.x[b], true)
                } else if self.x[b] > self.hi[b] + tol {
                    (self.x[b] - self.hi[b], false)
                } else {
                    continue;
                };
                if bland {
                    if leave.map_or(true, |(r, _)| b < self.basis[r]) {
                        leave = Some((i, below));
                    }
                } else if viol > worst {
                    worst = viol;
                    leave = Some((i, below));
                }
            }
            let Some((r, below)) = leave else {
                return Outcome::Optimal;
            };
            self.iterations += 1;
            let mut entering: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_pivot = 0.0;
            for j in 0..self.ncols {
                let st = self.state[j];
                if st == ColState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.at(r, j);
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let ok = match st {
                    ColState::Lower => (a < 0.0) == below,
                    ColState::Upper => (a > 0.0) == below,
                    _ => true,
                };
                if !ok {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                let better = if ratio < best_ratio - 1e-12 {
                    true
                } else if ratio <= best_ratio + 1e-12 {
                    if bland {
                        false
                    } else {
                        a.abs() > best_pivot
                    }
                } else {
                    false
                };
                if better {
                    best_ratio = ratio;
                    best_pivot = a.abs();
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Outcome::Infeasible;
            };
            if best_ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let b = self.basis[r];
            let target = if below { self.lo[b] } else { self.hi[b] };
            let delta = (self.x[b] - target) / self.at(r, q);
            self.x[q] += delta;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    let bi = self.basis[i];
                    self.x[bi] -= a * delta;
                }
            }
            self.pivot(r, q);
            self.x[b] = target;
            self.state[b] = if below { ColState::Lower } else { ColState::Upper };
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.t[r * nc + q];
        let inv = 1.0 / piv;
        let mut nz: Vec<(usize, f64)> = Vec::new();
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP {
                        *v = 0.0;
                    } else {
                        nz.push((j, *v));
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        let _ = prow;
        for chunk in before.chunks_exact_mut(nc).chain(after.chunks_exact_mut(nc)) {
            let f = chunk[q];
            if f == 0.0 {
                continue;
            }
            for &(j, v) in &nz {
                let nv = chunk[j] - f * v;
                chunk[j] = if nv.abs() < DROP { 0.0 } else { nv };
            }
            chunk[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &(j, v) in &nz {
                self.d[j] -= f * v;
            }
        }
        self.d[q] = 0.0;
        let old = self.basis[r];
        self.basis[r] = q;
        self.state[q] = ColState::Basic;
        let _ = old;
    }

    /// Recomputes basic values from the nonbasic ones (`T x = 0`).
    fn refresh_basic_values(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            let mut s = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 && self.state[j] != ColState::Basic {
                    s += a * self.x[j];
                }
            }
            let b = self.basis[i];
            self.x[b] = -s;
        }
    }

    /// Fixes structural column `j` to `value` (both bounds).
    pub(crate) fn fix(&mut self, j: usize, value: f64) {
        self.lo[j] = value;
        self.hi[j] = value;
        if self.state[j] != ColState::Basic {
            let delta = value - self.x[j];
            self.state[j] = ColState::Lower;
            self.x[j] = value;
            if delta != 0.0 {
                for i in 0..self.m {
                    let a = self.at(i, j);
                    if a != 0.0 {
                        let b = self.basis[i];
                        self.x[b] -= a * delta;
                    }
                }
            }
        }
    }

    /// Runs dual iterations and refreshes values; used after [`Tableau::fix`].
    pub(crate) fn reoptimize(&mut self, opts: &Options) -> Outcome {
        let out = self.dual(opts);
        if out == Outcome::Optimal {
            self.refresh_basic_values();
        }
        out
    }

    pub(crate) fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n_struct].to_vec()
    }

    pub(crate) fn structural_value(&self, j: usize) -> f64 {
        self.x[j]
    }

    pub(crate) fn objective(&self) -> f64 {
        self.cost[..self.n_struct].iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Row duals `y` with `c_B^T B^{-1}`; read off the logical columns.
    pub(crate) fn duals(&self) -> Vec<f64> {
        (0..self.m).map(|i| -self.d[self.n_struct + i]).collect()
    }

    /// Lagrangian lower bound computed from the final duals and the original
    /// data, independent of the tableau's accumulated reduced costs.
    pub(crate) fn dual_bound(&self, lp: &LinearProgram) -> f64 {
        let y = self.duals();
        let n = self.n_struct;
        let mut red = lp.objective.clone();
        for (i, c) in lp.constraints.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for &(v, a) in &c.coeffs {
                red[v.0] -= y[i] * a;
            }
        }
        let mut bound = 0.0;
        let tiny = 1e-9;
        let mut term = |coef: f64, lo: f64, hi: f64, x: f64| {
            if coef.abs() <= tiny {
                // Treat as zero; charge the residual at the current point.
                bound += coef * x;
            } else if coef > 0.0 {
                bound += coef * lo;
            } else {
                bound += coef * hi;
            }
        };
        for j in 0..n {
            term(red[j], lp.variables[j].lower, lp.variables[j].upper, self.x[j]);
        }
        // Logical s_i = -activity carries coefficient -y_i in the Lagrangian.
        for i in 0..self.m {
            let j = n + i;
            let (lo, hi) = logical_bounds(lp, i);
            term(-y[i], lo, hi, self.x[j]);
        }
        let _ = self.first_art;
        bound
    }
}

fn logical_bounds(lp: &LinearProgram, i: usize) -> (f64, f64) {
    let c = &lp.constraints[i];
    match c.relation {
        Relation::Le => (-c.rhs, f64::INFINITY),
        Relation::Ge => (f64::NEG_INFINITY, -c.rhs),
        Relation::Eq => (-c.rhs, -c.rhs),
    }
}
