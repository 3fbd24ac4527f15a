//! Receding-horizon MPC over the discounted global REC bills.
//!
//! The program mirrors the simulator step for step. Battery owners get
//! per-step charge/discharge powers, the state-of-charge chain and the
//! step's net offtake/injection (l⁻, l⁺) as variables; every other member's
//! flows are constants taken from the forecast. Each market period of each
//! billing period touched by the horizon gets REC exchange variables e⁻,
//! e⁺ with the bounds of the reallocation problem. An owner's bound
//! max(C⁻ − C⁺, 0) is modelled with a net pair n⁻ − n⁺ = C⁻ − C⁺ kept
//! complementary by an SOS1 pair, as are (l⁻, l⁺) and the battery powers.
//!
//! A billing period that closes inside the horizon costs its full bill,
//! discounted from the step that closes it. If the horizon stops inside a
//! billing period (and before the end of the episode) that period is billed
//! as an intermediate bill with peaks prorated by the elapsed fraction.
//! Steps after the last billing period that can close before the end of the
//! episode are left out: nothing they do is ever billed.

use rec_optim::{solve_milp, LinearProgram, Options, Relation, Status, Var};

use super::{Context, Policy, PolicyError, PolicyKind, PolicySpec};
use crate::config::RecConfig;
use crate::exogenous::{blend_foresight, Exogenous};
use crate::sim::{admissible, elapsed_fraction, next_slot, next_soc, power_range, Action, SimState, StepSlot};

/// The MILP for one decision together with the handles needed to read a
/// plan back.
#[derive(Debug, Clone)]
pub struct MpcProgram {
    pub lp: LinearProgram,
    /// Charge power per battery per planned step.
    pub charge: Vec<Vec<Var>>,
    /// Discharge power per battery per planned step.
    pub discharge: Vec<Vec<Var>>,
    /// State of charge per battery after each planned step.
    pub soc: Vec<Vec<Var>>,
    /// Number of planned steps.
    pub steps: usize,
}

impl MpcProgram {
    /// Signed battery powers of planned step `k`.
    pub fn action(&self, values: &[f64], k: usize) -> Action {
        self.charge.iter().zip(&self.discharge).map(|(c, d)| values[c[k].0] - values[d[k].0]).collect()
    }
}

struct Block {
    /// Planned steps of this billing period: (k, market period).
    steps: Vec<(usize, usize)>,
    /// Meters already recorded before the horizon started.
    carries_meters: bool,
    last: StepSlot,
    last_k: usize,
}

/// Builds the MPC program from `state` over `forecast` (one entry per step,
/// starting at `state.t`). Returns `None` when no planned step can affect a
/// bill.
pub fn mpc_program(
    config: &RecConfig,
    state: &SimState,
    forecast: &[Exogenous],
    include_peaks: bool,
) -> Option<MpcProgram> {
    let grid = &config.time_grid;
    let members = config.member_count();
    let dt = grid.step_hours;
    let tar = &config.tariffs;

    let mut slots = Vec::with_capacity(forecast.len());
    let (mut a, mut b) = (state.step_in_market, state.market_in_billing);
    for _ in forecast {
        let s = next_slot(grid, a, b);
        (a, b) = s.after;
        slots.push(s);
    }
    let reaches_end = state.t + forecast.len() >= grid.horizon;
    let steps = if reaches_end {
        slots.iter().rposition(|s| s.ends_billing(grid)).map_or(0, |k| k + 1)
    } else {
        forecast.len()
    };
    if steps == 0 {
        return None;
    }

    let mut blocks: Vec<Block> = Vec::new();
    for (k, s) in slots[..steps].iter().enumerate() {
        if k == 0 || s.resets {
            blocks.push(Block {
                steps: Vec::new(),
                carries_meters: k == 0 && !s.resets,
                last: *s,
                last_k: k,
            });
        }
        let blk = blocks.last_mut().expect("block opened above");
        blk.steps.push((k, s.period));
        blk.last = *s;
        blk.last_k = k;
    }

    let mut lp = LinearProgram::new();
    let nb = config.batteries.len();
    let mut charge = vec![Vec::with_capacity(steps); nb];
    let mut discharge = vec![Vec::with_capacity(steps); nb];
    let mut soc = vec![Vec::with_capacity(steps); nb];
    // (l⁻, l⁺) per battery per step.
    let mut flows: Vec<Vec<(Var, Var)>> = vec![Vec::with_capacity(steps); nb];
    for (i, bat) in config.batteries.iter().enumerate() {
        let lossy = bat.charge_eff < 1.0 || bat.discharge_eff < 1.0;
        for k in 0..steps {
            let c = lp.add_var(format!("charge[{i},{k}]"), 0.0, bat.max_charge_power);
            let d = lp.add_var(format!("discharge[{i},{k}]"), 0.0, bat.max_discharge_power);
            let s = lp.add_var(format!("soc[{i},{k}]"), 0.0, bat.capacity);
            // Without losses simultaneous charge and discharge is the same
            // as their difference, so the pair is netted after solving.
            if lossy {
                lp.add_sos1(c, d);
            }
            let mut row = vec![(s, 1.0), (c, -dt * bat.charge_eff), (d, dt / bat.discharge_eff)];
            let rhs = if k == 0 {
                state.soc[i]
            } else {
                row.push((soc[i][k - 1], -1.0));
                0.0
            };
            lp.add_constraint(format!("soc_chain[{i},{k}]"), row, Relation::Eq, rhs);
            let lin = lp.add_var(format!("offtake[{i},{k}]"), 0.0, f64::INFINITY);
            let lout = lp.add_var(format!("injection[{i},{k}]"), 0.0, f64::INFINITY);
            lp.add_sos1(lin, lout);
            lp.add_constraint(
                format!("net_flow[{i},{k}]"),
                vec![(lin, 1.0), (lout, -1.0), (c, -dt), (d, dt)],
                Relation::Eq,
                dt * forecast[k].net(bat.owner),
            );
            charge[i].push(c);
            discharge[i].push(d);
            soc[i].push(s);
            flows[i].push((lin, lout));
        }
    }

    let (p_in, p_out) = if include_peaks { (tar.offtake_peak, tar.injection_peak) } else { (0.0, 0.0) };
    for (j, blk) in blocks.iter().enumerate() {
        let complete = blk.last.ends_billing(grid);
        let (periods, tau) = if complete {
            (grid.markets_per_billing, 1.0)
        } else {
            (blk.last.period + 1, elapsed_fraction(grid, blk.last.after.0, blk.last.after.1))
        };
        let w = grid.discount.powi(blk.last_k as i32);
        let peak_in: Vec<Option<Var>> = (0..members)
            .map(|m| {
                (p_in > 0.0).then(|| {
                    let v = lp.add_var(format!("offtake_peak[{j},{m}]"), 0.0, f64::INFINITY);
                    lp.set_cost(v, w * tau * p_in);
                    v
                })
            })
            .collect();
        let peak_out: Vec<Option<Var>> = (0..members)
            .map(|m| {
                (p_out > 0.0).then(|| {
                    let v = lp.add_var(format!("injection_peak[{j},{m}]"), 0.0, f64::INFINITY);
                    lp.set_cost(v, w * tau * p_out);
                    v
                })
            })
            .collect();
        for n in 0..periods {
            let ks: Vec<usize> = blk.steps.iter().filter(|s| s.1 == n).map(|s| s.0).collect();
            let mut balance: Vec<(Var, f64)> = Vec::new();
            for m in 0..members {
                let (mut fin, mut fout) = if blk.carries_meters {
                    (state.meters.consumption[m][n], state.meters.production[m][n])
                } else {
                    (0.0, 0.0)
                };
                let battery = config.battery_of(m).filter(|_| !ks.is_empty());
                // Gross meter terms: constants plus, for owners, the step flows.
                let mut gross_in: Vec<(Var, f64)> = Vec::new();
                let mut gross_out: Vec<(Var, f64)> = Vec::new();
                match battery {
                    Some(i) => {
                        for &k in &ks {
                            gross_in.push((flows[i][k].0, 1.0));
                            gross_out.push((flows[i][k].1, 1.0));
                        }
                    }
                    None => {
                        for &k in &ks {
                            let x = dt * forecast[k].net(m);
                            fin += x.max(0.0);
                            fout += (-x).max(0.0);
                        }
                    }
                }
                lp.objective_offset += w * (tar.buy[m] * fin - tar.sell[m] * fout);
                for &(v, _) in &gross_in {
                    lp.add_cost(v, w * tar.buy[m]);
                }
                for &(v, _) in &gross_out {
                    lp.add_cost(v, -w * tar.sell[m]);
                }
                let (e_in, e_out) = match battery {
                    None => {
                        let d = (fin - fout).max(0.0);
                        let s = (fout - fin).max(0.0);
                        let e_in = (d > 0.0).then(|| lp.add_var(format!("e_in[{j},{n},{m}]"), 0.0, d));
                        let e_out = (s > 0.0).then(|| lp.add_var(format!("e_out[{j},{n},{m}]"), 0.0, s));
                        (e_in, e_out)
                    }
                    Some(_) => {
                        let e_in = lp.add_var(format!("e_in[{j},{n},{m}]"), 0.0, f64::INFINITY);
                        let e_out = lp.add_var(format!("e_out[{j},{n},{m}]"), 0.0, f64::INFINITY);
                        let n_in = lp.add_var(format!("net_in[{j},{n},{m}]"), 0.0, f64::INFINITY);
                        let n_out = lp.add_var(format!("net_out[{j},{n},{m}]"), 0.0, f64::INFINITY);
                        lp.add_sos1(n_in, n_out);
                        let mut row = vec![(n_in, 1.0), (n_out, -1.0)];
                        row.extend(gross_in.iter().map(|&(v, _)| (v, -1.0)));
                        row.extend(gross_out.iter().map(|&(v, _)| (v, 1.0)));
                        lp.add_constraint(format!("net_meter[{j},{n},{m}]"), row, Relation::Eq, fin - fout);
                        lp.add_constraint(
                            format!("e_in_net[{j},{n},{m}]"),
                            vec![(e_in, 1.0), (n_in, -1.0)],
                            Relation::Le,
                            0.0,
                        );
                        lp.add_constraint(
                            format!("e_out_net[{j},{n},{m}]"),
                            vec![(e_out, 1.0), (n_out, -1.0)],
                            Relation::Le,
                            0.0,
                        );
                        let mut row = vec![(e_in, 1.0)];
                        row.extend(gross_in.iter().map(|&(v, _)| (v, -1.0)));
                        lp.add_constraint(format!("grid_in[{j},{n},{m}]"), row, Relation::Le, fin);
                        let mut row = vec![(e_out, 1.0)];
                        row.extend(gross_out.iter().map(|&(v, _)| (v, -1.0)));
                        lp.add_constraint(format!("grid_out[{j},{n},{m}]"), row, Relation::Le, fout);
                        (Some(e_in), Some(e_out))
                    }
                };
                if let Some(v) = e_in {
                    lp.set_cost(v, w * (tar.rec_fee_consume - tar.buy[m]));
                    balance.push((v, 1.0));
                }
                if let Some(v) = e_out {
                    lp.set_cost(v, w * (tar.rec_fee_produce + tar.sell[m]));
                    balance.push((v, -1.0));
                }
                for (peak, e, gross, fixed, tag) in [
                    (peak_in[m], e_in, &gross_in, fin, "offtake"),
                    (peak_out[m], e_out, &gross_out, fout, "injection"),
                ] {
                    if let Some(p) = peak {
                        let mut row = vec![(p, 1.0)];
                        if let Some(v) = e {
                            row.push((v, 1.0));
                        }
                        row.extend(gross.iter().map(|&(v, _)| (v, -1.0)));
                        lp.add_constraint(format!("{tag}_peak[{j},{n},{m}]"), row, Relation::Ge, fixed);
                    }
                }
            }
            if !balance.is_empty() {
                lp.add_constraint(format!("balance[{j},{n}]"), balance, Relation::Eq, 0.0);
            }
        }
    }
    Some(MpcProgram { lp, charge, discharge, soc, steps })
}

fn solver_options() -> Options {
    Options::default()
}

/// Solves the program and returns the planned actions for every step, or
/// `None` when nothing in the horizon is billed.
fn plan(
    config: &RecConfig,
    state: &SimState,
    forecast: &[Exogenous],
    include_peaks: bool,
) -> Result<Option<(MpcProgram, Vec<f64>)>, PolicyError> {
    let Some(prog) = mpc_program(config, state, forecast, include_peaks) else {
        return Ok(None);
    };
    let sol = solve_milp(&prog.lp, &solver_options()).map_err(|e| PolicyError::Solver(e.to_string()))?;
    match sol.status {
        Status::Optimal => Ok(Some((prog, sol.values))),
        // Node limit: keep the incumbent if there is one.
        Status::IterationLimit if !sol.values.is_empty() => Ok(Some((prog, sol.values))),
        other => Err(PolicyError::Solver(format!("{other:?}"))),
    }
}

/// One MPC decision: the first action of the optimal plan over the
/// forecast, projected admissible.
pub fn mpc_action(
    config: &RecConfig,
    state: &SimState,
    forecast: &[Exogenous],
    include_peaks: bool,
) -> Result<Action, PolicyError> {
    match plan(config, state, forecast, include_peaks)? {
        None => Ok(vec![0.0; config.batteries.len()]),
        Some((prog, values)) => Ok(admissible(config, state, &prog.action(&values, 0))),
    }
}

/// A plan computed with exact foresight up to the end of the episode.
/// Later decisions along the same trajectory reuse it: the tail of an
/// optimal plan is optimal for the tail problem.
#[derive(Debug, Clone)]
struct CachedPlan {
    scenario: (usize, usize),
    start: usize,
    actions: Vec<Action>,
    /// State of charge expected at the start of each planned step.
    soc: Vec<Vec<f64>>,
}

pub struct MpcPolicy {
    spec: PolicySpec,
    cache: Option<CachedPlan>,
}

impl MpcPolicy {
    pub fn new(spec: PolicySpec) -> MpcPolicy {
        MpcPolicy { spec, cache: None }
    }

    fn cached(&self, ctx: &Context) -> Option<Action> {
        let c = self.cache.as_ref()?;
        let key = (ctx.scenario.as_ptr() as usize, ctx.scenario.len());
        let k = ctx.state.t.checked_sub(c.start)?;
        if c.scenario != key || k >= c.actions.len() {
            return None;
        }
        (c.soc[k] == ctx.state.soc).then(|| c.actions[k].clone())
    }
}

impl Policy for MpcPolicy {
    fn name(&self) -> String {
        self.spec.to_string()
    }

    fn reset(&mut self) {
        self.cache = None;
    }

    fn act(&mut self, ctx: &Context) -> Result<Action, PolicyError> {
        let PolicyKind::Mpc { horizon, alpha } = self.spec.kind else {
            return Err(PolicyError::Unsupported("not an MPC spec".into()));
        };
        let grid = &ctx.config.time_grid;
        let t = ctx.state.t;
        if t >= grid.horizon {
            return Ok(vec![0.0; ctx.config.batteries.len()]);
        }
        let k_req = horizon.unwrap_or(grid.horizon);
        let to_end = t + k_req >= grid.horizon;
        let reusable = alpha == 1.0 && to_end;
        if reusable {
            if let Some(a) = self.cached(ctx) {
                return Ok(a);
            }
        }
        let k = k_req.min(grid.horizon - t);
        let forecast = blend_foresight(ctx.scenario, ctx.base, alpha, t, k)?;
        let Some((prog, values)) = plan(ctx.config, ctx.state, &forecast, self.spec.include_peaks)? else {
            return Ok(vec![0.0; ctx.config.batteries.len()]);
        };
        if reusable {
            // Replay the plan through the battery model so later lookups can
            // compare states of charge exactly.
            let cfg = ctx.config;
            let mut socs = vec![ctx.state.soc.clone()];
            let mut actions = Vec::with_capacity(prog.steps);
            for k in 0..prog.steps {
                let cur = socs[k].clone();
                let a: Action = cfg
                    .batteries
                    .iter()
                    .zip(prog.action(&values, k))
                    .zip(&cur)
                    .map(|((b, u), &s)| {
                        let (lo, hi) = power_range(b, s, grid.step_hours);
                        u.clamp(lo, hi)
                    })
                    .collect();
                socs.push(
                    cfg.batteries.iter().zip(&a).zip(&cur).map(|((b, &u), &s)| next_soc(b, s, u, grid.step_hours)).collect(),
                );
                actions.push(a);
            }
            socs.pop();
            self.cache = Some(CachedPlan {
                scenario: (ctx.scenario.as_ptr() as usize, ctx.scenario.len()),
                start: t,
                actions,
                soc: socs,
            });
        }
        Ok(admissible(ctx.config, ctx.state, &prog.action(&values, 0)))
    }
}
