#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rec_core::billing::MeterMatrix;
use rec_core::config::{resolve_config, RecConfig, Tariffs};

pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load(id: &str) -> RecConfig {
    resolve_config(id, &config_dir()).unwrap_or_else(|e| panic!("{id}: {e}"))
}

pub fn tariffs(buy: &[f64], sell: &[f64], peak: f64) -> Tariffs {
    Tariffs {
        buy: buy.to_vec(),
        sell: sell.to_vec(),
        offtake_peak: peak,
        injection_peak: peak,
        rec_fee_consume: 0.02,
        rec_fee_produce: 0.03,
    }
}

/// Two members, two market periods, peaks priced.
pub fn two_members() -> (MeterMatrix, Tariffs) {
    let meters = MeterMatrix::from_net(&[vec![252.59, 811.43], vec![-596.18, -244.02]]);
    (meters, tariffs(&[0.20, 0.22], &[0.04, 0.05], 1.0))
}

/// Three members, two market periods, no peak prices.
pub fn three_members() -> (MeterMatrix, Tariffs) {
    let meters = MeterMatrix::from_net(&[vec![368.10, 486.34], vec![-608.36, 186.40], vec![-564.67, -162.35]]);
    (meters, tariffs(&[0.20, 0.22, 0.24], &[0.04, 0.05, 0.06], 0.0))
}

/// Three members, four market periods, peaks priced.
pub fn three_members_peaks() -> (MeterMatrix, Tariffs) {
    let meters = MeterMatrix::from_net(&[
        vec![-642.66, -666.00, 232.98, -538.31],
        vec![644.85, 142.05, -111.48, 542.80],
        vec![748.11, -150.40, 813.45, -579.49],
    ]);
    (meters, tariffs(&[0.20, 0.22, 0.24], &[0.04, 0.05, 0.06], 1.0))
}

/// Random meters for `m` members over `r` periods; each reading is either
/// a net consumption or a net production, with some exact zeros.
pub fn random_meters<R: Rng>(rng: &mut R, m: usize, r: usize) -> MeterMatrix {
    let net: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..r)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-100.0..100.0) })
                .collect()
        })
        .collect();
    MeterMatrix::from_net(&net)
}

/// Random strictly positive tariffs.
pub fn random_tariffs<R: Rng>(rng: &mut R, m: usize, peak: f64) -> Tariffs {
    Tariffs {
        buy: (0..m).map(|_| rng.gen_range(0.05..0.4)).collect(),
        sell: (0..m).map(|_| rng.gen_range(0.005..0.1)).collect(),
        offtake_peak: peak,
        injection_peak: peak,
        rec_fee_consume: rng.gen_range(0.0..0.05),
        rec_fee_produce: rng.gen_range(0.0..0.05),
    }
}

use rec_core::config::{BatterySpec, Flow, FlowColumn, NoiseSpec, Profiles, TimeGrid};
use rec_core::exogenous::base_sequence;
use rec_core::sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A small community with one consumption and one production column per
/// member, filled from `rng`.
pub fn random_config<R: Rng>(rng: &mut R, members: usize, batteries: usize, dm: usize, db: usize, horizon: usize) -> RecConfig {
    let mut columns = Vec::new();
    for m in 0..members {
        for flow in [Flow::Consumption, Flow::Production] {
            let values = (0..horizon).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
            columns.push(FlowColumn { member: m, flow, values });
        }
    }
    let batteries = (0..batteries)
        .map(|_| BatterySpec {
            owner: rng.gen_range(0..members),
            capacity: rng.gen_range(0.5..5.0),
            max_charge_power: rng.gen_range(0.1..2.0),
            max_discharge_power: rng.gen_range(0.1..2.0),
            charge_eff: if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.7..1.0) },
            discharge_eff: if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.7..1.0) },
        })
        .collect();
    let peak = rng.gen_range(0.0..1.0);
    let tariffs = random_tariffs(rng, members, peak);
    RecConfig {
        name: "random".into(),
        members: (0..members).map(|m| format!("M{}", m + 1)).collect(),
        tariffs,
        batteries,
        time_grid: TimeGrid {
            step_hours: rng.gen_range(0.05..1.0),
            steps_per_market: dm,
            markets_per_billing: db,
            horizon,
            discount: 0.999,
        },
        noise: NoiseSpec::default(),
        profiles: Profiles { columns },
    }
}

macro_rules! check {
    ($cond:expr) => {
        if !$cond {
            return Err(format!("{} failed at {}:{}", stringify!($cond), file!(), line!()));
        }
    };
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

macro_rules! check_eq {
    ($a:expr, $b:expr) => {
        if $a != $b {
            return Err(format!("{:?} != {:?} at {}:{}", $a, $b, file!(), line!()));
        }
    };
}

/// Counters after step t (0-based) counted from the start of the episode.
fn expected_counters(dm: usize, db: usize, t: usize) -> (usize, usize, usize) {
    let idx = t % (dm * db);
    let period = idx / dm;
    let a = idx % dm + 1;
    let b = if a == dm { period + 1 } else { period };
    (period, a, b)
}

fn random_action<R: Rng>(rng: &mut R, config: &RecConfig, state: &SimState) -> Action {
    config
        .batteries
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (lo, hi) = power_range(b, state.soc[i], config.time_grid.step_hours);
            match rng.gen_range(0..6) {
                0 => lo,
                1 => hi,
                2 => 0.0,
                _ => rng.gen_range(lo..=hi),
            }
        })
        .collect()
}

/// Steps a random community with random admissible actions and checks the
/// simulator invariants after every step.
pub fn run_invariants(seed: u64, members: usize, batteries: usize, dm: usize, db: usize, steps: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = random_config(&mut rng, members, batteries, dm, db, steps);
    let exo = base_sequence(&config);
    let dt = config.time_grid.step_hours;
    let sparse = CostMode::default();
    let dense = CostMode { dense: true, retail: false };
    let mut state = initial_state(&config);
    let mut offtake_since_reset = vec![0.0; members];
    for t in 0..steps {
        let action = random_action(&mut rng, &config, &state);
        let tr = step(&config, &state, &exo[t], &action, sparse).unwrap();
        let trd = step(&config, &state, &exo[t], &action, dense).unwrap();
        check_eq!(&tr.state, &trd.state);

        let (period, a, b) = expected_counters(dm, db, t);
        check_eq!((tr.state.step_in_market, tr.state.market_in_billing), (a, b));
        check_eq!(tr.state.t, t + 1);

        for (i, bat) in config.batteries.iter().enumerate() {
            let s = tr.state.soc[i];
            check!((0.0..=bat.capacity).contains(&s));
            let u = action[i];
            let want = state.soc[i] + dt * if u >= 0.0 { bat.charge_eff * u } else { u / bat.discharge_eff };
            check!((s - want).abs() <= 1e-9 * (1.0 + bat.capacity), "soc {} vs {}", s, want);
        }

        if t % (dm * db) == 0 {
            offtake_since_reset = vec![0.0; members];
        }
        for m in 0..members {
            check!(tr.offtake[m] * tr.injection[m] == 0.0);
            check!(tr.offtake[m] >= 0.0 && tr.injection[m] >= 0.0);
            // Energy accounting: flows plus battery power end up on the meters.
            let mut x = dt * exo[t].net(m);
            for (bat, &u) in config.batteries.iter().zip(&action) {
                if bat.owner == m {
                    x += dt * u;
                }
            }
            check!((tr.offtake[m] - tr.injection[m] - x).abs() < 1e-12);
            offtake_since_reset[m] += tr.offtake[m];
            let metered: f64 = tr.state.meters.consumption[m].iter().sum();
            check!((metered - offtake_since_reset[m]).abs() < 1e-9);
            let in_period = tr.state.meters.consumption[m][period] - tr.state.meters.production[m][period];
            check!(in_period.is_finite());
        }

        let ends_billing = a == dm && b == db;
        let ends_market = a == dm;
        if ends_billing {
            let bill = state_bill(&config, &tr.state, false).unwrap();
            check!((tr.cost - bill).abs() < 1e-9 * (1.0 + bill.abs()));
            // At τ = 1 the dense signal is the full bill.
            check!((trd.cost - tr.cost).abs() < 1e-9 * (1.0 + bill.abs()));
        } else {
            check_eq!(tr.cost, 0.0);
        }
        if !ends_market {
            check_eq!(trd.cost, 0.0);
        }
        state = tr.state;
    }
    Ok(())
}

