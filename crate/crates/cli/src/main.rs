use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rec_core::billing::{
    bill_no_rec, greedy_no_peak, intermediate_bill, optimal_reallocation, two_member_reallocation, Allocation,
    MeterMatrix,
};
use rec_core::config::{resolve_config, RecConfig, Tariffs};
use rec_core::env::{serve, serve_tcp, ServerSettings};
use rec_core::eval::{evaluate, summarize, time_policies, write_results, ExperimentPlan};
use rec_core::exogenous::{sample_profiles, NoiseParams};
use rec_core::policy::PolicySpec;
use rec_core::sim::CostMode;

#[derive(Parser)]
#[command(name = "rec-opt", version, about = "Energy community billing, simulation and policy evaluation")]
struct Cli {
    /// Directory searched for `<id>.json` configs.
    #[arg(long, global = true, default_value = "configs")]
    config_dir: PathBuf,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate expected returns of policies on shared scenarios.
    Eval {
        #[arg(long)]
        config: String,
        /// Policy specs: rec, self, opt, opt-retail, mpc:K=8,alpha=0.85, mpc-retail:K=8,alpha=1.
        #[arg(long, num_args = 1.., required = true)]
        policies: Vec<String>,
        #[arg(long, default_value_t = 64)]
        scenarios: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Episode length override.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also time each policy's action computation.
        #[arg(long)]
        timing: bool,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the environment server on stdin/stdout, or on a TCP address.
    ServeEnv {
        #[arg(long)]
        config: String,
        #[arg(long, value_enum, default_value_t = Mode::Sparse)]
        mode: Mode,
        /// Bill without peak prices.
        #[arg(long)]
        retail: bool,
        #[arg(long)]
        tcp: Option<String>,
    },
    /// Run one reallocation on meter readings from a JSON file.
    Realloc {
        #[arg(long)]
        meters: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Lp)]
        method: Method,
    },
    /// Mean time to compute one action, per policy.
    Bench {
        #[arg(long, default_value = "rec2")]
        config: String,
        #[arg(long, num_args = 1..)]
        policies: Vec<String>,
        #[arg(long, default_value_t = 32)]
        calls: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write one sampled scenario as a profile CSV.
    Sample {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        scenario: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dense,
    Sparse,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    /// Optimal allocation including peak terms.
    Lp,
    /// Optimal allocation ignoring peaks, billed with peaks.
    LpNoPeaks,
    Greedy,
    TwoMember,
}

/// Input of `realloc`. Readings are either signed `net` values (positive
/// is consumption) or separate `consumption`/`production` matrices,
/// indexed [member][period].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetersFile {
    tariffs: Tariffs,
    #[serde(default)]
    net: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    consumption: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    production: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    tau: f64,
}

fn one() -> f64 {
    1.0
}

impl MetersFile {
    fn meters(&self) -> Result<MeterMatrix> {
        match (&self.net, &self.consumption, &self.production) {
            (Some(net), None, None) => Ok(MeterMatrix::from_net(net)),
            (None, Some(c), Some(p)) => {
                let mut m = MeterMatrix::from_net(c);
                m.consumption = c.clone();
                m.production = p.clone();
                Ok(m)
            }
            _ => bail!("give either `net` or both `consumption` and `production`"),
        }
    }
}

#[derive(Serialize)]
struct ReallocReport {
    no_rec_total: f64,
    no_rec_bills: Vec<f64>,
    global_bill: f64,
    member_bills: Vec<f64>,
    objective: f64,
    to_member: Vec<Vec<f64>>,
    from_member: Vec<Vec<f64>>,
    offtake_peak: Vec<f64>,
    injection_peak: Vec<f64>,
}

fn load(cli: &Cli, id: &str) -> Result<RecConfig> {
    resolve_config(id, &cli.config_dir).with_context(|| format!("loading config `{id}`"))
}

fn parse_policies(specs: &[String]) -> Result<Vec<PolicySpec>> {
    specs.iter().map(|s| s.parse::<PolicySpec>().map_err(|e| anyhow!("policy `{s}`: {e}"))).collect()
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn realloc(cli: &Cli, path: &Path, method: Method) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: MetersFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let meters = file.meters()?;
    let tariffs = &file.tariffs;
    let no_rec = bill_no_rec(&meters, tariffs)?;
    let result = match method {
        Method::Lp => optimal_reallocation(&meters, tariffs, file.tau, true)?,
        Method::LpNoPeaks => {
            let mut r = optimal_reallocation(&meters, tariffs, file.tau, false)?;
            r.member_bills = intermediate_bill(&meters, tariffs, &r.alloc, file.tau)?;
            r.global_bill = r.member_bills.iter().sum();
            r
        }
        Method::Greedy => greedy_no_peak(&meters, tariffs)?,
        Method::TwoMember => two_member_reallocation(&meters, tariffs)?,
    };
    let Allocation { to_member, from_member } = result.alloc.clone();
    let report = ReallocReport {
        no_rec_total: no_rec.total,
        no_rec_bills: no_rec.per_member,
        global_bill: result.global_bill,
        member_bills: result.member_bills,
        objective: result.objective,
        to_member,
        from_member,
        offtake_peak: result.offtake_peak,
        injection_peak: result.injection_peak,
    };
    if cli.json {
        return print_json(&report);
    }
    println!("no-REC total      {:.4}", report.no_rec_total);
    println!("global bill       {:.4}", report.global_bill);
    for (m, b) in report.member_bills.iter().enumerate() {
        println!("  member {m}: bill {b:.4}  offtake peak {:.4}  injection peak {:.4}", report.offtake_peak[m], report.injection_peak[m]);
        println!("    received {:?}", report.to_member[m]);
        println!("    shared   {:?}", report.from_member[m]);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Eval { config, policies, scenarios, seeds, horizon, out, timing, threads } => {
            let cfg = load(&cli, config)?;
            let plan = ExperimentPlan {
                policies: parse_policies(policies)?,
                scenarios: *scenarios,
                seeds: seeds.clone(),
                horizon: *horizon,
                threads: *threads,
            };
            let estimates = evaluate(&cfg, &plan).map_err(|e| anyhow!(e))?;
            let summary = summarize(&cfg, &plan, &estimates);
            if let Some(dir) = out {
                write_results(dir, &summary).with_context(|| format!("writing {}", dir.display()))?;
            }
            let timings = if *timing { Some(time_policies(&cfg, &plan.policies, 32, plan.seeds[0])) } else { None };
            if cli.json {
                print_json(&serde_json::json!({ "summary": summary, "timings": timings }))?;
            } else {
                for e in &estimates {
                    match &e.error {
                        Some(err) => println!("{:<28} error: {err}", e.policy),
                        None => println!("{:<28} {:>14.4} ± {:.4}", e.policy, e.mean, e.stderr),
                    }
                }
                for t in timings.iter().flatten() {
                    println!("{:<28} {:.6} s/action", t.policy, t.mean_seconds);
                }
            }
            if estimates.iter().any(|e| e.error.is_some()) {
                std::process::exit(2);
            }
        }
        Command::ServeEnv { config, mode, retail, tcp } => {
            let cfg = Arc::new(load(&cli, config)?);
            let dir = cli.config_dir.clone();
            let settings = ServerSettings {
                default_config: cfg,
                default_mode: CostMode { dense: matches!(mode, Mode::Dense), retail: *retail },
                resolve: move |id: &str| resolve_config(id, &dir).map(Arc::new).map_err(|e| e.to_string()),
            };
            match tcp {
                Some(addr) => {
                    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
                    eprintln!("env-server listening on {}", listener.local_addr()?);
                    serve_tcp(listener, Arc::new(settings))?;
                }
                None => {
                    let stdin = std::io::stdin();
                    serve(BufReader::new(stdin.lock()), std::io::stdout().lock(), &settings)?;
                }
            }
        }
        Command::Realloc { meters, method } => realloc(&cli, meters, *method)?,
        Command::Bench { config, policies, calls, seed } => {
            let cfg = load(&cli, config)?;
            let specs = if policies.is_empty() {
                parse_policies(&["rec", "self", "mpc:K=1,alpha=1", "mpc:K=12,alpha=1", "mpc:K=24,alpha=1", "opt"].map(String::from))?
            } else {
                parse_policies(policies)?
            };
            let timings = time_policies(&cfg, &specs, *calls, *seed);
            if cli.json {
                print_json(&timings)?;
            } else {
                for t in &timings {
                    println!("{:<28} {:.6} s/action over {} calls", t.policy, t.mean_seconds, t.calls);
                }
            }
        }
        Command::Sample { config, seed, scenario, out } => {
            let cfg = load(&cli, config)?;
            let profiles = sample_profiles(&cfg, &NoiseParams::from_spec(&cfg.noise, *seed, *scenario));
            let text = profiles.to_csv(&cfg.members);
            match out {
                Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
    }
    Ok(())
}
