//! Electricity bills and the optimal reallocation of energy inside a REC.
//!
//! All energies are kWh per market period; prices are money per kWh. Peak
//! prices apply to the largest per-period kWh exchanged with the retailer,
//! without conversion to power.

use rec_optim::{solve_lp, LinearProgram, Options, Relation, Status, Var};
use serde::Serialize;

use crate::config::Tariffs;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BillingError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

/// Consumption and production meter readings for one billing period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeterMatrix {
    /// C⁻ indexed [member][market period], kWh.
    pub consumption: Vec<Vec<f64>>,
    /// C⁺ indexed [member][market period], kWh.
    pub production: Vec<Vec<f64>>,
    /// Market periods completed so far.
    pub periods_elapsed: usize,
    /// Steps elapsed in the billing period (s^{Δ_BM}).
    pub steps_elapsed_in_billing: usize,
}

impl MeterMatrix {
    pub fn zeros(members: usize, periods: usize) -> MeterMatrix {
        MeterMatrix {
            consumption: vec![vec![0.0; periods]; members],
            production: vec![vec![0.0; periods]; members],
            periods_elapsed: 0,
            steps_elapsed_in_billing: 0,
        }
    }

    /// Builds a complete billing period from signed net readings (positive
    /// values are consumption, negative values production).
    pub fn from_net(net: &[Vec<f64>]) -> MeterMatrix {
        let periods = net.first().map_or(0, Vec::len);
        MeterMatrix {
            consumption: net.iter().map(|r| r.iter().map(|&x| x.max(0.0)).collect()).collect(),
            production: net.iter().map(|r| r.iter().map(|&x| (-x).max(0.0)).collect()).collect(),
            periods_elapsed: periods,
            steps_elapsed_in_billing: 0,
        }
    }

    pub fn members(&self) -> usize {
        self.consumption.len()
    }

    pub fn periods(&self) -> usize {
        self.consumption.first().map_or(0, Vec::len)
    }

    /// max(C⁻ − C⁺, 0), the most a member can receive from the REC.
    pub fn net_consumption(&self, m: usize, r: usize) -> f64 {
        (self.consumption[m][r] - self.production[m][r]).max(0.0)
    }

    /// max(C⁺ − C⁻, 0), the most a member can share with the REC.
    pub fn net_production(&self, m: usize, r: usize) -> f64 {
        (self.production[m][r] - self.consumption[m][r]).max(0.0)
    }

    pub fn validate(&self, members: usize) -> Result<(), BillingError> {
        if self.members() != members || self.production.len() != members {
            return Err(BillingError::Invalid(format!(
                "meters cover {} members, tariffs {members}",
                self.members()
            )));
        }
        let r = self.periods();
        if r == 0 {
            return Err(BillingError::Invalid("meters cover no market period".into()));
        }
        for rows in [&self.consumption, &self.production] {
            for row in rows {
                if row.len() != r {
                    return Err(BillingError::Invalid("ragged meter matrix".into()));
                }
                if let Some(x) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                    return Err(BillingError::Invalid(format!("meter reading {x} must be >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// Energy exchanged through the REC: `to_member` is e⁻, `from_member` e⁺,
/// both indexed [member][market period].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub to_member: Vec<Vec<f64>>,
    pub from_member: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zeros(members: usize, periods: usize) -> Allocation {
        Allocation {
            to_member: vec![vec![0.0; periods]; members],
            from_member: vec![vec![0.0; periods]; members],
        }
    }

    fn get(v: &[Vec<f64>], m: usize, r: usize) -> f64 {
        v.get(m).and_then(|row| row.get(r)).copied().unwrap_or(0.0)
    }

    /// Largest violation of the exchange bounds and of the per-period
    /// balance Σe⁻ = Σe⁺.
    pub fn max_violation(&self, meters: &MeterMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..meters.periods() {
            let (mut give, mut take) = (0.0, 0.0);
            for m in 0..meters.members() {
                let em = Self::get(&self.to_member, m, r);
                let ep = Self::get(&self.from_member, m, r);
                worst = worst.max(-em).max(-ep);
                worst = worst.max(em - meters.net_consumption(m, r));
                worst = worst.max(ep - meters.net_production(m, r));
                take += em;
                give += ep;
            }
            worst = worst.max((take - give).abs());
        }
        worst
    }
}

/// No-REC bills per member and their total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bills {
    pub per_member: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReallocationResult {
    pub alloc: Allocation,
    /// max_r (C⁻ − e⁻) per member over the billed periods.
    pub offtake_peak: Vec<f64>,
    /// max_r (C⁺ − e⁺) per member over the billed periods.
    pub injection_peak: Vec<f64>,
    /// EB″_m evaluated with the true peak prices.
    pub member_bills: Vec<f64>,
    /// Σ member_bills.
    pub global_bill: f64,
    /// Value of the minimized objective (peaks priced at zero when they
    /// were excluded from the optimization).
    pub objective: f64,
    pub tau: f64,
}

fn check_tau(tau: f64) -> Result<(), BillingError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(BillingError::Invalid(format!("tau {tau} outside (0, 1]")))
    }
}

/// ⌈τR⌉, the number of market periods billed at fraction τ.
pub fn billed_periods(tau: f64, periods: usize) -> usize {
    let x = tau * periods as f64;
    let c = (x - 1e-9).ceil();
    (c.max(1.0) as usize).min(periods)
}

/// EB_m: every kWh traded with the retailer plus peaks, no REC exchange.
pub fn bill_no_rec(meters: &MeterMatrix, tariffs: &Tariffs) -> Result<Bills, BillingError> {
    meters.validate(tariffs.members())?;
    let alloc = Allocation::zeros(meters.members(), meters.periods());
    let per_member = member_bills(meters, tariffs, &alloc, 1.0, meters.periods());
    let total = per_member.iter().sum();
    Ok(Bills { per_member, total })
}

/// EB″_m: bills over the first ⌈τR⌉ periods with peaks scaled by τ. At τ=1
/// this is the ex-post bill of a full billing period.
pub fn intermediate_bill(
    meters: &MeterMatrix,
    tariffs: &Tariffs,
    alloc: &Allocation,
    tau: f64,
) -> Result<Vec<f64>, BillingError> {
    meters.validate(tariffs.members())?;
    check_tau(tau)?;
    let periods = billed_periods(tau, meters.periods());
    for (name, v) in [("e-", &alloc.to_member), ("e+", &alloc.from_member)] {
        if v.len() > meters.members() {
            return Err(BillingError::Invalid(format!("{name} has more members than the meters")));
        }
        for row in v {
            if row.len() > meters.periods() {
                return Err(BillingError::Invalid(format!("{name} references period {}", row.len())));
            }
            if let Some(r) = (periods..row.len()).find(|&r| row[r] != 0.0) {
                return Err(BillingError::Invalid(format!(
                    "{name} is nonzero in period {} but only {periods} periods are billed",
                    r + 1
                )));
            }
        }
    }
    Ok(member_bills(meters, tariffs, alloc, tau, periods))
}

fn member_bills(meters: &MeterMatrix, t: &Tariffs, alloc: &Allocation, tau: f64, periods: usize) -> Vec<f64> {
    (0..meters.members())
        .map(|m| {
            let mut energy = 0.0;
            let (mut peak_in, mut peak_out) = (0.0f64, 0.0f64);
            for r in 0..periods {
                let em = Allocation::get(&alloc.to_member, m, r);
                let ep = Allocation::get(&alloc.from_member, m, r);
                let grid_in = meters.consumption[m][r] - em;
                let grid_out = meters.production[m][r] - ep;
                energy += t.buy[m] * grid_in - t.sell[m] * grid_out
                    + t.rec_fee_consume * em
                    + t.rec_fee_produce * ep;
                peak_in = peak_in.max(grid_in);
                peak_out = peak_out.max(grid_out);
            }
            energy + tau * (t.offtake_peak * peak_in + t.injection_peak * peak_out)
        })
        .collect()
}

fn peaks(meters: &MeterMatrix, alloc: &Allocation, periods: usize) -> (Vec<f64>, Vec<f64>) {
    (0..meters.members())
        .map(|m| {
            (0..periods).fold((0.0f64, 0.0f64), |(pi, po), r| {
                (
                    pi.max(meters.consumption[m][r] - alloc.to_member[m][r]),
                    po.max(meters.production[m][r] - alloc.from_member[m][r]),
                )
            })
        })
        .unzip()
}

fn finish(
    meters: &MeterMatrix,
    tariffs: &Tariffs,
    alloc: Allocation,
    tau: f64,
    objective: f64,
) -> ReallocationResult {
    let periods = billed_periods(tau, meters.periods());
    let member_bills = member_bills(meters, tariffs, &alloc, tau, periods);
    let (offtake_peak, injection_peak) = peaks(meters, &alloc, periods);
    ReallocationResult {
        global_bill: member_bills.iter().sum(),
        alloc,
        offtake_peak,
        injection_peak,
        member_bills,
        objective,
        tau,
    }
}

/// The reallocation LP: minimize Σ_m EB″_m over e⁻, e⁺ with one peak
/// variable per member and direction.
pub fn reallocation_program(
    meters: &MeterMatrix,
    tariffs: &Tariffs,
    tau: f64,
    include_peaks: bool,
) -> (LinearProgram, Vec<Vec<Option<Var>>>, Vec<Vec<Option<Var>>>) {
    let members = meters.members();
    let periods = billed_periods(tau, meters.periods());
    let (p_in, p_out) = if include_peaks {
        (tariffs.offtake_peak, tariffs.injection_peak)
    } else {
        (0.0, 0.0)
    };
    let mut lp = LinearProgram::new();
    let mut e_in = vec![vec![None; periods]; members];
    let mut e_out = vec![vec![None; periods]; members];
    for m in 0..members {
        for r in 0..periods {
            lp.objective_offset += tariffs.buy[m] * meters.consumption[m][r]
                - tariffs.sell[m] * meters.production[m][r];
            let d = meters.net_consumption(m, r);
            if d > 0.0 {
                let v = lp.add_var(format!("e_in[{m},{r}]"), 0.0, d);
                lp.set_cost(v, tariffs.rec_fee_consume - tariffs.buy[m]);
                e_in[m][r] = Some(v);
            }
            let s = meters.net_production(m, r);
            if s > 0.0 {
                let v = lp.add_var(format!("e_out[{m},{r}]"), 0.0, s);
                lp.set_cost(v, tariffs.rec_fee_produce + tariffs.sell[m]);
                e_out[m][r] = Some(v);
            }
        }
    }
    for r in 0..periods {
        let mut row: Vec<(Var, f64)> = Vec::new();
        row.extend((0..members).filter_map(|m| e_in[m][r]).map(|v| (v, 1.0)));
        row.extend((0..members).filter_map(|m| e_out[m][r]).map(|v| (v, -1.0)));
        if !row.is_empty() {
            lp.add_constraint(format!("balance[{r}]"), row, Relation::Eq, 0.0);
        }
    }
    for m in 0..members {
        for (price, meter, e, tag) in [
            (p_in, &meters.consumption, &e_in, "offtake"),
            (p_out, &meters.production, &e_out, "injection"),
        ] {
            if price <= 0.0 {
                continue;
            }
            let p = lp.add_var(format!("{tag}_peak[{m}]"), 0.0, f64::INFINITY);
            lp.set_cost(p, tau * price);
            for r in 0..periods {
                let mut row = vec![(p, 1.0)];
                if let Some(v) = e[m][r] {
                    row.push((v, 1.0));
                }
                lp.add_constraint(format!("{tag}_peak[{m},{r}]"), row, Relation::Ge, meter[m][r]);
            }
        }
    }
    (lp, e_in, e_out)
}

/// Minimizes the global REC bill Σ_m EB″_m(τ). With `include_peaks` false
/// the peak prices are zero in the objective, but the reported peaks and
/// bills use the true prices.
pub fn optimal_reallocation(
    meters: &MeterMatrix,
    tariffs: &Tariffs,
    tau: f64,
    include_peaks: bool,
) -> Result<ReallocationResult, BillingError> {
    meters.validate(tariffs.members())?;
    tariffs
        .validate(meters.members())
        .map_err(|e| BillingError::Invalid(e.to_string()))?;
    check_tau(tau)?;
    let (lp, e_in, e_out) = reallocation_program(meters, tariffs, tau, include_peaks);
    let sol = solve_lp(&lp, &Options::default()).map_err(|e| BillingError::Solver(e.to_string()))?;
    if sol.status != Status::Optimal {
        return Err(BillingError::Solver(format!("reallocation LP ended with {:?}", sol.status)));
    }
    let mut alloc = Allocation::zeros(meters.members(), meters.periods());
    for m in 0..meters.members() {
        for r in 0..e_in[m].len() {
            // Clamp to the bounds so round-off never leaves the feasible set.
            if let Some(v) = e_in[m][r] {
                alloc.to_member[m][r] = sol.value(v).clamp(0.0, meters.net_consumption(m, r));
            }
            if let Some(v) = e_out[m][r] {
                alloc.from_member[m][r] = sol.value(v).clamp(0.0, meters.net_production(m, r));
            }
        }
    }
    Ok(finish(meters, tariffs, alloc, tau, sol.objective_value))
}

fn no_peak_objective(meters: &MeterMatrix, tariffs: &Tariffs, alloc: &Allocation) -> f64 {
    member_bills(meters, &tariffs.retail(), alloc, 1.0, meters.periods()).iter().sum()
}

/// Per-period merit order for the peak-free problem.
///
/// Receivers are served in decreasing buy price and sharers drawn in
/// increasing sell price while a kWh exchanged still lowers the bill. When
/// every buy price exceeds every sell price plus both fees this is the
/// plain rule "serve all consumption, highest buyer first" (or "take all
/// production, cheapest seller first").
pub fn greedy_no_peak(meters: &MeterMatrix, tariffs: &Tariffs) -> Result<ReallocationResult, BillingError> {
    meters.validate(tariffs.members())?;
    if let Some(x) = tariffs.buy.iter().chain(&tariffs.sell).find(|x| **x <= 0.0) {
        return Err(BillingError::Precondition(format!(
            "greedy clearing needs strictly positive prices, found {x}"
        )));
    }
    let members = meters.members();
    let mut alloc = Allocation::zeros(members, meters.periods());
    let mut buyers: Vec<usize> = (0..members).collect();
    buyers.sort_by(|&a, &b| tariffs.buy[b].total_cmp(&tariffs.buy[a]).then(a.cmp(&b)));
    let mut sellers: Vec<usize> = (0..members).collect();
    sellers.sort_by(|&a, &b| tariffs.sell[a].total_cmp(&tariffs.sell[b]).then(a.cmp(&b)));
    for r in 0..meters.periods() {
        let mut need: Vec<f64> = (0..members).map(|m| meters.net_consumption(m, r)).collect();
        let mut have: Vec<f64> = (0..members).map(|m| meters.net_production(m, r)).collect();
        let (mut i, mut j) = (0, 0);
        while i < members && j < members {
            let (c, p) = (buyers[i], sellers[j]);
            if need[c] <= 0.0 {
                i += 1;
                continue;
            }
            if have[p] <= 0.0 {
                j += 1;
                continue;
            }
            let gain = tariffs.buy[c] - tariffs.rec_fee_consume - tariffs.sell[p] - tariffs.rec_fee_produce;
            if gain <= 0.0 {
                break;
            }
            let x = need[c].min(have[p]);
            alloc.to_member[c][r] += x;
            alloc.from_member[p][r] += x;
            need[c] -= x;
            have[p] -= x;
        }
    }
    let objective = no_peak_objective(meters, tariffs, &alloc);
    Ok(finish(meters, tariffs, alloc, 1.0, objective))
}

/// Closed form for two members: in each period the net producer shares
/// min(its net production, the other's net consumption).
///
/// Exchanging is optimal (peaks included) as long as a kWh moved between
/// the two members does not raise the energy part of the bill, which is
/// checked up front.
pub fn two_member_reallocation(meters: &MeterMatrix, tariffs: &Tariffs) -> Result<ReallocationResult, BillingError> {
    if meters.members() != 2 || tariffs.members() != 2 {
        return Err(BillingError::Precondition(format!(
            "closed form needs exactly 2 members, got {}",
            meters.members()
        )));
    }
    meters.validate(2)?;
    let fees = tariffs.rec_fee_consume + tariffs.rec_fee_produce;
    for (c, p) in [(0, 1), (1, 0)] {
        if tariffs.buy[c] - tariffs.sell[p] < fees {
            return Err(BillingError::Precondition(format!(
                "exchange from member {p} to {c} costs more in fees than it saves"
            )));
        }
    }
    let mut alloc = Allocation::zeros(2, meters.periods());
    for r in 0..meters.periods() {
        for (c, p) in [(0, 1), (1, 0)] {
            let x = meters.net_consumption(c, r).min(meters.net_production(p, r));
            if x > 0.0 {
                alloc.to_member[c][r] = x;
                alloc.from_member[p][r] = x;
            }
        }
    }
    let objective: f64 = member_bills(meters, tariffs, &alloc, 1.0, meters.periods()).iter().sum();
    Ok(finish(meters, tariffs, alloc, 1.0, objective))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_members() -> (MeterMatrix, Tariffs) {
        let meters = MeterMatrix::from_net(&[vec![252.59, 811.43], vec![-596.18, -244.02]]);
        let tariffs = Tariffs {
            buy: vec![0.20, 0.22],
            sell: vec![0.04, 0.05],
            offtake_peak: 1.0,
            injection_peak: 1.0,
            rec_fee_consume: 0.02,
            rec_fee_produce: 0.03,
        };
        (meters, tariffs)
    }

    #[test]
    fn zero_meters_cost_nothing() {
        let (_, t) = two_members();
        let b = bill_no_rec(&MeterMatrix::zeros(2, 3), &t).unwrap();
        assert_eq!(b.per_member, vec![0.0, 0.0]);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn billed_periods_rounds_up() {
        assert_eq!(billed_periods(1.0, 5), 5);
        assert_eq!(billed_periods(0.2, 5), 1);
        assert_eq!(billed_periods(0.25, 5), 2);
        assert_eq!(billed_periods(0.6, 5), 3);
        assert_eq!(billed_periods(0.5, 2), 1);
        assert_eq!(billed_periods(1e-6, 2), 1);
    }

    #[test]
    fn intermediate_bill_with_no_exchange_is_the_plain_bill() {
        let (m, t) = two_members();
        let plain = bill_no_rec(&m, &t).unwrap();
        let eb = intermediate_bill(&m, &t, &Allocation::zeros(2, 2), 1.0).unwrap();
        assert_eq!(eb, plain.per_member);
    }

    #[test]
    fn intermediate_bill_rejects_unbilled_periods() {
        let (m, t) = two_members();
        let mut a = Allocation::zeros(2, 2);
        a.to_member[0][1] = 1.0;
        a.from_member[1][1] = 1.0;
        assert!(intermediate_bill(&m, &t, &a, 0.5).is_err());
        assert!(intermediate_bill(&m, &t, &a, 1.0).is_ok());
        assert!(intermediate_bill(&m, &t, &a, 0.0).is_err());
    }

    #[test]
    fn greedy_rejects_free_energy() {
        let (m, mut t) = two_members();
        t.sell[0] = 0.0;
        assert!(matches!(greedy_no_peak(&m, &t), Err(BillingError::Precondition(_))));
    }

    #[test]
    fn single_member_never_exchanges() {
        let m = MeterMatrix::from_net(&[vec![3.0, -2.0, 1.0]]);
        let t = Tariffs {
            buy: vec![0.3],
            sell: vec![0.1],
            offtake_peak: 0.0,
            injection_peak: 0.0,
            rec_fee_consume: 0.0,
            rec_fee_produce: 0.0,
        };
        let g = greedy_no_peak(&m, &t).unwrap();
        assert!(g.alloc.to_member[0].iter().chain(&g.alloc.from_member[0]).all(|&x| x == 0.0));
        let lp = optimal_reallocation(&m, &t, 1.0, true).unwrap();
        assert!((lp.global_bill - bill_no_rec(&m, &t).unwrap().total).abs() < 1e-9);
    }

    #[test]
    fn two_member_requires_two_members() {
        let m = MeterMatrix::from_net(&[vec![1.0], vec![-1.0], vec![0.0]]);
        let mut t = two_members().1;
        t.buy.push(0.1);
        t.sell.push(0.01);
        assert!(matches!(two_member_reallocation(&m, &t), Err(BillingError::Precondition(_))));
    }

    #[test]
    fn two_member_net_consumers_exchange_nothing() {
        let (_, t) = two_members();
        let m = MeterMatrix::from_net(&[vec![1.0, 2.0], vec![3.0, 0.5]]);
        let r = two_member_reallocation(&m, &t).unwrap();
        assert_eq!(r.alloc, Allocation::zeros(2, 2));
    }
}
