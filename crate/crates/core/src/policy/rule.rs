//! REC and SELF baselines: one small program per step over the battery
//! powers, maximizing collective or individual self-consumption.

use rec_optim::{solve_milp, LinearProgram, Options, Relation, Status};

use super::{Context, Policy, PolicyError};
use crate::config::RecConfig;
use crate::exogenous::Exogenous;
use crate::sim::{admissible, power_range, Action, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleMode {
    /// Minimize |Σ_m net flow|, the REC as a single member.
    Rec,
    /// Per battery owner, minimize export plus the grid import that does
    /// not go into the battery.
    SelfConsumption,
}

/// Tie-break weight: among equally self-consuming actions, charge more.
const CHARGE_TIEBREAK: f64 = 1e-6;

/// Battery powers chosen by the rule program for the current step, already
/// projected onto the admissible range.
pub fn rule_action(
    config: &RecConfig,
    state: &SimState,
    exo: &Exogenous,
    mode: RuleMode,
) -> Result<Action, PolicyError> {
    if config.batteries.is_empty() {
        return Ok(Vec::new());
    }
    let dt = config.time_grid.step_hours;
    let mut lp = LinearProgram::new();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (i, b) in config.batteries.iter().enumerate() {
        let (lo, hi) = power_range(b, state.soc[i], dt);
        plus.push(lp.add_var(format!("charge[{i}]"), 0.0, hi));
        minus.push(lp.add_var(format!("discharge[{i}]"), 0.0, -lo));
    }
    match mode {
        RuleMode::Rec => {
            // l ≥ ±(Σ net + Σ u); a single signed power per battery keeps
            // this a pure LP.
            let total: f64 = (0..config.member_count()).map(|m| exo.net(m)).sum();
            let l = lp.add_var("rec_net", 0.0, f64::INFINITY);
            lp.set_cost(l, 1.0);
            for sign in [1.0, -1.0] {
                let mut row = vec![(l, 1.0)];
                for i in 0..plus.len() {
                    row.push((plus[i], -sign));
                    row.push((minus[i], sign));
                }
                lp.add_constraint("rec_abs", row, Relation::Ge, sign * total);
            }
        }
        RuleMode::SelfConsumption => {
            for (i, b) in config.batteries.iter().enumerate() {
                let net = exo.net(b.owner);
                let (p, d) = (plus[i], minus[i]);
                lp.add_sos1(p, d);
                let export = lp.add_var(format!("export[{i}]"), 0.0, f64::INFINITY);
                let import = lp.add_var(format!("import[{i}]"), 0.0, f64::INFINITY);
                lp.set_cost(export, 1.0);
                lp.set_cost(import, 1.0);
                // Grid energy stored in the battery is not penalized.
                lp.set_cost(p, -1.0 - CHARGE_TIEBREAK);
                lp.add_constraint("export", vec![(export, 1.0), (p, 1.0), (d, -1.0)], Relation::Ge, -net);
                lp.add_constraint("import", vec![(import, 1.0), (p, -1.0), (d, 1.0)], Relation::Ge, net);
            }
        }
    }
    let sol = solve_milp(&lp, &Options::default()).map_err(|e| PolicyError::Solver(e.to_string()))?;
    if sol.status != Status::Optimal {
        return Err(PolicyError::Solver(format!("{:?}", sol.status)));
    }
    let raw: Vec<f64> = plus.iter().zip(&minus).map(|(&p, &d)| sol.value(p) - sol.value(d)).collect();
    Ok(admissible(config, state, &raw))
}

#[derive(Debug, Clone)]
pub struct RulePolicy {
    mode: RuleMode,
}

impl RulePolicy {
    pub fn new(mode: RuleMode) -> RulePolicy {
        RulePolicy { mode }
    }
}

impl Policy for RulePolicy {
    fn name(&self) -> String {
        match self.mode {
            RuleMode::Rec => "rec".into(),
            RuleMode::SelfConsumption => "self".into(),
        }
    }

    fn act(&mut self, ctx: &Context) -> Result<Action, PolicyError> {
        let exo = &ctx.scenario[ctx.state.t];
        rule_action(ctx.config, ctx.state, exo, self.mode)
    }
}
