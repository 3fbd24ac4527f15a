//! The REC decision process: counters, battery dynamics, meter readings and
//! the bill-based cost signal.
//!
//! Counter semantics. `step_in_market` (a) and `market_in_billing` (b) are
//! the steps of the current market period and the market periods of the
//! current billing period that are complete. A step first closes whatever
//! the previous step completed: after a full billing period (a, b) =
//! (Δ_M, Δ_B) the meters are cleared and both counters restart at 0, and
//! after a full market period a restarts at 0. The step's flows then go to
//! market period b, a is incremented, and b is incremented when a reaches
//! Δ_M. Starting from (0, 0) this visits (1,0) … (Δ_M,1) (1,1) … (Δ_M,Δ_B)
//! (1,0) … and no step's flow is ever dropped.

use serde::{Deserialize, Serialize};

use crate::billing::{optimal_reallocation, BillingError, MeterMatrix};
use crate::config::{BatterySpec, RecConfig, TimeGrid};
use crate::exogenous::Exogenous;

/// Signed battery power per battery, kW (positive charges).
pub type Action = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    /// s^{Δ_M}.
    pub step_in_market: usize,
    /// s^{Δ_B}.
    pub market_in_billing: usize,
    /// kWh per battery.
    pub soc: Vec<f64>,
    pub meters: MeterMatrix,
    /// Steps simulated so far.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostMode {
    /// Emit intermediate bills at every market-period end.
    #[serde(default)]
    pub dense: bool,
    /// Price peaks at zero in the cost.
    #[serde(default)]
    pub retail: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("action has {got} entries, config has {want} batteries")]
    ActionLength { got: usize, want: usize },
    #[error("battery {battery}: power {power} kW outside admissible range [{lo}, {hi}]")]
    Inadmissible { battery: usize, power: f64, lo: f64, hi: f64 },
    #[error("exogenous flows cover {got} members, config has {want}")]
    ExogenousLength { got: usize, want: usize },
    #[error("state is not at a market-period end")]
    NotAtBoundary,
    #[error(transparent)]
    Billing(#[from] BillingError),
}

/// Position of a step inside the billing structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepSlot {
    /// Market period (0-based) that receives the step's flows.
    pub period: usize,
    /// The step starts a new billing period (meters are cleared first).
    pub resets: bool,
    /// Counters after the step.
    pub after: (usize, usize),
}

impl StepSlot {
    pub fn ends_market(&self, grid: &TimeGrid) -> bool {
        self.after.0 == grid.steps_per_market
    }

    pub fn ends_billing(&self, grid: &TimeGrid) -> bool {
        self.after == (grid.steps_per_market, grid.markets_per_billing)
    }
}

/// Where the next step from counters (a, b) lands.
pub fn next_slot(grid: &TimeGrid, a: usize, b: usize) -> StepSlot {
    let (dm, db) = (grid.steps_per_market, grid.markets_per_billing);
    let (mut a, mut b, resets) = if (a, b) == (dm, db) {
        (0, 0, true)
    } else if a == dm {
        (0, b, false)
    } else {
        (a, b, false)
    };
    let period = b;
    a += 1;
    if a == dm {
        b += 1;
    }
    StepSlot { period, resets, after: (a, b) }
}

/// s^{Δ_BM}, steps elapsed in the billing period for counters (a, b).
pub fn elapsed_steps(grid: &TimeGrid, a: usize, b: usize) -> usize {
    let (dm, db) = (grid.steps_per_market, grid.markets_per_billing);
    if b == db {
        dm * db
    } else if a == dm {
        b * dm
    } else {
        b * dm + a
    }
}

/// Elapsed fraction of the billing period, the τ of intermediate bills.
pub fn elapsed_fraction(grid: &TimeGrid, a: usize, b: usize) -> f64 {
    elapsed_steps(grid, a, b) as f64 / grid.steps_per_billing() as f64
}

pub fn initial_state(config: &RecConfig) -> SimState {
    SimState {
        step_in_market: 0,
        market_in_billing: 0,
        soc: config.batteries.iter().map(|b| b.capacity / 2.0).collect(),
        meters: MeterMatrix::zeros(config.member_count(), config.time_grid.markets_per_billing),
        t: 0,
    }
}

/// Admissible power range [lo, hi] for a battery holding `soc`.
pub fn power_range(battery: &BatterySpec, soc: f64, step_hours: f64) -> (f64, f64) {
    let hi = battery
        .max_charge_power
        .min((battery.capacity - soc) / (step_hours * battery.charge_eff))
        .max(0.0);
    let lo = -battery
        .max_discharge_power
        .min(soc * battery.discharge_eff / step_hours)
        .max(0.0);
    (lo, hi)
}

/// Projects each battery power onto its admissible range.
pub fn admissible(config: &RecConfig, state: &SimState, action: &[f64]) -> Action {
    config
        .batteries
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (lo, hi) = power_range(b, state.soc[i], config.time_grid.step_hours);
            let u = action.get(i).copied().unwrap_or(0.0);
            if u.is_nan() {
                0.0
            } else {
                u.clamp(lo, hi)
            }
        })
        .collect()
}

/// State of charge after applying power `u` for one step.
pub fn next_soc(battery: &BatterySpec, soc: f64, u: f64, step_hours: f64) -> f64 {
    let delta = if u >= 0.0 { battery.charge_eff * u } else { u / battery.discharge_eff };
    (soc + step_hours * delta).clamp(0.0, battery.capacity)
}

/// Signed net energy of each member over one step, kWh (positive means
/// the member draws from the grid).
pub fn member_energy(config: &RecConfig, exo: &Exogenous, action: &[f64]) -> Vec<f64> {
    let dt = config.time_grid.step_hours;
    let mut x: Vec<f64> = (0..config.member_count()).map(|m| dt * exo.net(m)).collect();
    for (b, u) in config.batteries.iter().zip(action) {
        x[b.owner] += dt * u;
    }
    x
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: SimState,
    /// Money; 0 except where a bill is due.
    pub cost: f64,
    /// l⁻ per member, kWh.
    pub offtake: Vec<f64>,
    /// l⁺ per member, kWh.
    pub injection: Vec<f64>,
}

fn check_admissible(config: &RecConfig, state: &SimState, action: &[f64]) -> Result<(), SimError> {
    if action.len() != config.batteries.len() {
        return Err(SimError::ActionLength { got: action.len(), want: config.batteries.len() });
    }
    for (i, (b, &u)) in config.batteries.iter().zip(action).enumerate() {
        let (lo, hi) = power_range(b, state.soc[i], config.time_grid.step_hours);
        let tol = 1e-9 * (1.0 + b.max_charge_power.max(b.max_discharge_power));
        if !(u >= lo - tol && u <= hi + tol) {
            return Err(SimError::Inadmissible { battery: i, power: u, lo, hi });
        }
    }
    Ok(())
}

/// Applies one step. The action must already be admissible.
pub fn step(
    config: &RecConfig,
    state: &SimState,
    exo: &Exogenous,
    action: &[f64],
    mode: CostMode,
) -> Result<Transition, SimError> {
    check_admissible(config, state, action)?;
    if exo.members() != config.member_count() || exo.production.len() != config.member_count() {
        return Err(SimError::ExogenousLength { got: exo.members(), want: config.member_count() });
    }
    let grid = &config.time_grid;
    let slot = next_slot(grid, state.step_in_market, state.market_in_billing);
    let mut next = state.clone();
    if slot.resets {
        next.meters = MeterMatrix::zeros(config.member_count(), grid.markets_per_billing);
    }
    let energy = member_energy(config, exo, action);
    let offtake: Vec<f64> = energy.iter().map(|&x| x.max(0.0)).collect();
    let injection: Vec<f64> = energy.iter().map(|&x| (-x).max(0.0)).collect();
    for m in 0..config.member_count() {
        next.meters.consumption[m][slot.period] += offtake[m];
        next.meters.production[m][slot.period] += injection[m];
    }
    for (i, (b, &u)) in config.batteries.iter().zip(action).enumerate() {
        next.soc[i] = next_soc(b, state.soc[i], u, grid.step_hours);
    }
    (next.step_in_market, next.market_in_billing) = slot.after;
    next.meters.periods_elapsed = slot.after.1;
    next.meters.steps_elapsed_in_billing = elapsed_steps(grid, slot.after.0, slot.after.1);
    next.t += 1;
    let cost = if slot.ends_billing(grid) || (mode.dense && slot.ends_market(grid)) {
        state_bill(config, &next, mode.retail)?
    } else {
        0.0
    };
    Ok(Transition { state: next, cost, offtake, injection })
}

/// Global REC bill of the meters in `state`, with peaks prorated by the
/// elapsed fraction of the billing period. Zero before any step.
pub fn state_bill(config: &RecConfig, state: &SimState, retail: bool) -> Result<f64, SimError> {
    let grid = &config.time_grid;
    let elapsed = elapsed_steps(grid, state.step_in_market, state.market_in_billing);
    if elapsed == 0 {
        return Ok(0.0);
    }
    let tau = elapsed as f64 / grid.steps_per_billing() as f64;
    let tariffs = if retail { config.tariffs.retail() } else { config.tariffs.clone() };
    Ok(optimal_reallocation(&state.meters, &tariffs, tau, true)?.global_bill)
}

/// Intermediate bill emitted in dense mode; only defined at market ends.
pub fn dense_increment(config: &RecConfig, state: &SimState, retail: bool) -> Result<f64, SimError> {
    if state.step_in_market != config.time_grid.steps_per_market {
        return Err(SimError::NotAtBoundary);
    }
    state_bill(config, state, retail)
}

/// Observation vector, layout version 1:
/// `[a, b, soc per battery, net meter of the latest step's market period
/// per member (kWh, consumption minus production), net flow per member of
/// the step about to be played (kW, before batteries), last dense reward
/// (dense mode only)]`.
pub fn observation(
    config: &RecConfig,
    state: &SimState,
    upcoming: Option<&Exogenous>,
    last_dense_reward: Option<f64>,
) -> Vec<f64> {
    let m = config.member_count();
    let mut obs = Vec::with_capacity(2 + state.soc.len() + 2 * m + 1);
    obs.push(state.step_in_market as f64);
    obs.push(state.market_in_billing as f64);
    obs.extend(&state.soc);
    let latest = match (state.step_in_market, state.market_in_billing) {
        (0, 0) => None,
        (a, b) if a == config.time_grid.steps_per_market => Some(b - 1),
        (_, b) => Some(b),
    };
    for i in 0..m {
        obs.push(latest.map_or(0.0, |p| state.meters.consumption[i][p] - state.meters.production[i][p]));
    }
    for i in 0..m {
        obs.push(upcoming.map_or(0.0, |e| e.net(i)));
    }
    if let Some(r) = last_dense_reward {
        obs.push(r);
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dm: usize, db: usize) -> TimeGrid {
        TimeGrid { step_hours: 1.0, steps_per_market: dm, markets_per_billing: db, horizon: 100, discount: 0.9 }
    }

    #[test]
    fn counters_for_four_by_five() {
        let g = grid(4, 5);
        let (mut a, mut b) = (0, 0);
        let mut trace = Vec::new();
        for _ in 0..21 {
            let s = next_slot(&g, a, b);
            (a, b) = s.after;
            trace.push((a, b, s.period, s.resets));
        }
        assert_eq!(trace[0], (1, 0, 0, false));
        assert_eq!(trace[3], (4, 1, 0, false));
        assert_eq!(trace[4], (1, 1, 1, false));
        assert_eq!(trace[19], (4, 5, 4, false));
        assert_eq!(trace[20], (1, 0, 0, true));
    }

    #[test]
    fn elapsed_steps_cases() {
        let g = grid(4, 5);
        assert_eq!(elapsed_steps(&g, 4, 5), 20);
        assert_eq!(elapsed_steps(&g, 4, 2), 8);
        assert_eq!(elapsed_steps(&g, 3, 2), 11);
        assert_eq!(elapsed_steps(&g, 0, 0), 0);
        assert!((elapsed_fraction(&g, 4, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_step_market_periods() {
        let g = grid(1, 3);
        let (mut a, mut b) = (0, 0);
        let mut periods = Vec::new();
        for _ in 0..7 {
            let s = next_slot(&g, a, b);
            (a, b) = s.after;
            periods.push(s.period);
        }
        assert_eq!(periods, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn power_range_limits() {
        let b = BatterySpec {
            owner: 0,
            capacity: 1.0,
            max_charge_power: 0.05,
            max_discharge_power: 0.1,
            charge_eff: 1.0,
            discharge_eff: 1.0,
        };
        assert_eq!(power_range(&b, 0.0, 1.0), (0.0, 0.05));
        let (_, hi) = power_range(&b, 0.98, 1.0);
        assert!((hi - 0.02).abs() < 1e-12);
        assert_eq!(power_range(&b, 1.0, 1.0), (-0.1, 0.0));
    }
}
