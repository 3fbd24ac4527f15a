//! Monte-Carlo estimation of expected discounted returns, timing runs and
//! result files.
//!
//! Every policy is run on the same sampled scenarios (common random
//! numbers): scenario k of seed s is stream k of the seed's generator. The
//! return of one episode is Σ_t −γ^t·cost_t; a seed's return is the mean
//! over its scenarios, and the reported estimate is the mean and standard
//! error over seeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::config::RecConfig;
use crate::exogenous::{base_sequence, sample_sequence, Exogenous, NoiseParams};
use crate::policy::{Context, Policy, PolicyError, PolicySpec};
use crate::sim::{initial_state, step, CostMode, SimState};

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub policies: Vec<PolicySpec>,
    /// Scenarios per seed.
    pub scenarios: usize,
    pub seeds: Vec<u64>,
    /// Overrides the config's episode length when set.
    pub horizon: Option<usize>,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.scenarios == 0 {
            return Err("scenario count must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err("seeds must be distinct".into());
        }
        if self.policies.is_empty() {
            return Err("no policy to evaluate".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnEstimate {
    pub policy: String,
    pub mean: f64,
    pub stderr: f64,
    /// (seed, mean return over the seed's scenarios).
    pub per_seed: Vec<(u64, f64)>,
    pub error: Option<String>,
}

/// Config with the plan's horizon applied.
pub fn plan_config(config: &RecConfig, plan: &ExperimentPlan) -> Result<RecConfig, String> {
    let mut cfg = config.clone();
    if let Some(t) = plan.horizon {
        cfg.time_grid.horizon = t;
        cfg.validate().map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

/// Runs one episode and returns its discounted return.
pub fn run_episode(
    config: &RecConfig,
    policy: &mut dyn Policy,
    scenario: &[Exogenous],
    base: &[Exogenous],
) -> Result<f64, PolicyError> {
    policy.reset();
    let mut state = initial_state(config);
    let gamma = config.time_grid.discount;
    let mut ret = 0.0;
    let mut discount = 1.0;
    for t in 0..config.time_grid.horizon {
        let ctx = Context { config, state: &state, scenario, base };
        let action = policy.act(&ctx)?;
        let tr = step(config, &state, &scenario[t], &action, CostMode::default())?;
        ret -= discount * tr.cost;
        discount *= gamma;
        state = tr.state;
    }
    Ok(ret)
}

fn worker_count(requested: usize, items: usize) -> usize {
    let n = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    n.clamp(1, items.max(1))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates the expected return of every policy in the plan.
pub fn evaluate(config: &RecConfig, plan: &ExperimentPlan) -> Result<Vec<ReturnEstimate>, String> {
    plan.validate()?;
    let cfg = plan_config(config, plan)?;
    let base = base_sequence(&cfg);
    let items: Vec<(usize, u64, usize)> = plan
        .seeds
        .iter()
        .enumerate()
        .flat_map(|(si, &seed)| (0..plan.scenarios).map(move |k| (si, seed, k)))
        .collect();
    // results[item][policy]
    let results: Mutex<Vec<Vec<Result<f64, String>>>> = Mutex::new(vec![Vec::new(); items.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(plan.threads, items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(_, seed, k)) = items.get(i) else { break };
                let scenario = sample_sequence(&cfg, &NoiseParams::from_spec(&cfg.noise, seed, k as u64));
                let row: Vec<Result<f64, String>> = plan
                    .policies
                    .iter()
                    .map(|spec| {
                        let mut p = spec.build().map_err(|e| e.to_string())?;
                        run_episode(&cfg, p.as_mut(), &scenario, &base).map_err(|e| e.to_string())
                    })
                    .collect();
                results.lock().expect("no poisoned workers")[i] = row;
            });
        }
    });
    let results = results.into_inner().expect("no poisoned workers");
    let estimates = plan
        .policies
        .iter()
        .enumerate()
        .map(|(pi, spec)| {
            let mut per_seed = Vec::with_capacity(plan.seeds.len());
            for (si, &seed) in plan.seeds.iter().enumerate() {
                let mut sum = 0.0;
                for (ii, &(s, _, _)) in items.iter().enumerate() {
                    if s != si {
                        continue;
                    }
                    match &results[ii][pi] {
                        Ok(r) => sum += r,
                        Err(e) => {
                            return ReturnEstimate {
                                policy: spec.to_string(),
                                mean: f64::NAN,
                                stderr: f64::NAN,
                                per_seed: Vec::new(),
                                error: Some(e.clone()),
                            }
                        }
                    }
                }
                per_seed.push((seed, sum / plan.scenarios as f64));
            }
            let xs: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
            let (mean, stderr) = mean_stderr(&xs);
            ReturnEstimate { policy: spec.to_string(), mean, stderr, per_seed, error: None }
        })
        .collect();
    Ok(estimates)
}

/// One CSV row per (policy, seed).
pub fn results_csv(estimates: &[ReturnEstimate], scenarios: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "seed", "scenarios", "return"]).expect("in-memory write");
    for e in estimates {
        if let Some(err) = &e.error {
            w.write_record([e.policy.as_str(), "", &scenarios.to_string(), &format!("error: {err}")])
                .expect("in-memory write");
            continue;
        }
        for (seed, r) in &e.per_seed {
            w.write_record([e.policy.as_str(), &seed.to_string(), &scenarios.to_string(), &r.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub horizon: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: String,
    pub horizon: usize,
    pub scenarios: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<ReturnEstimate>,
    /// Return against K for each (α, peaks-included) MPC family, keyed
    /// like `mpc alpha=0.85` or `mpc-retail alpha=1`.
    pub curves: BTreeMap<String, Vec<CurvePoint>>,
}

pub fn summarize(config: &RecConfig, plan: &ExperimentPlan, estimates: &[ReturnEstimate]) -> Summary {
    let mut curves: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (spec, e) in plan.policies.iter().zip(estimates) {
        if let (Some(k), Some(alpha)) = (spec.horizon(), spec.alpha()) {
            if e.error.is_some() {
                continue;
            }
            let family = if spec.include_peaks { "mpc" } else { "mpc-retail" };
            curves
                .entry(format!("{family} alpha={alpha}"))
                .or_default()
                .push(CurvePoint { horizon: k, mean: e.mean, stderr: e.stderr });
        }
    }
    for c in curves.values_mut() {
        c.sort_by_key(|p| p.horizon);
    }
    Summary {
        config: config.name.clone(),
        horizon: plan.horizon.unwrap_or(config.time_grid.horizon),
        scenarios: plan.scenarios,
        seeds: plan.seeds.clone(),
        policies: estimates.to_vec(),
        curves,
    }
}

/// Writes `returns.csv` and `summary.json` into `dir`.
pub fn write_results(dir: &Path, summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("returns.csv"), results_csv(&summary.policies, summary.scenarios))?;
    let json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("summary.json"), json + "\n")
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub policy: String,
    pub horizon: Option<usize>,
    pub calls: usize,
    pub mean_seconds: f64,
}

/// States visited by the REC rule on scenario 0 of `seed`, spread evenly
/// over the episode.
fn timing_states(config: &RecConfig, seed: u64, count: usize) -> (Vec<Exogenous>, Vec<SimState>) {
    let scenario = sample_sequence(config, &NoiseParams::from_spec(&config.noise, seed, 0));
    let base = base_sequence(config);
    let horizon = config.time_grid.horizon;
    let mut rule = crate::policy::RulePolicy::new(crate::policy::RuleMode::Rec);
    let mut state = initial_state(config);
    let mut states = Vec::new();
    let picks: Vec<usize> = (0..count).map(|i| i * horizon / count).collect();
    for t in 0..horizon {
        if picks.contains(&t) {
            states.push(state.clone());
        }
        let ctx = Context { config, state: &state, scenario: &scenario, base: &base };
        let Ok(a) = rule.act(&ctx) else { break };
        let Ok(tr) = step(config, &state, &scenario[t], &a, CostMode::default()) else { break };
        state = tr.state;
    }
    (scenario, states)
}

/// Mean wall-clock time of one action computation per policy, over `calls`
/// states along an episode. Every call starts from a fresh policy so no
/// cached plan is reused.
pub fn time_policies(config: &RecConfig, policies: &[PolicySpec], calls: usize, seed: u64) -> Vec<Timing> {
    let (scenario, states) = timing_states(config, seed, calls.max(1));
    let base = base_sequence(config);
    policies
        .iter()
        .map(|spec| {
            let mut total = 0.0;
            let mut n = 0;
            for state in &states {
                let Ok(mut p) = spec.build() else { continue };
                let ctx = Context { config, state, scenario: &scenario, base: &base };
                let start = Instant::now();
                let ok = p.act(&ctx).is_ok();
                total += start.elapsed().as_secs_f64();
                n += usize::from(ok);
            }
            Timing {
                policy: spec.to_string(),
                horizon: spec.horizon(),
                calls: n,
                mean_seconds: if n > 0 { total / n as f64 } else { f64::NAN },
            }
        })
        .collect()
}
