//! Episode wrapper and the newline-delimited JSON environment server used
//! by external learners.
//!
//! Requests and replies, one JSON object per line:
//!
//! ```text
//! {"cmd":"reset","config":"rec2","seed":7,"mode":{"dense":false,"retail":false}}
//!   -> {"obs":[...],"t":0}
//! {"cmd":"step","action":[0.03]}
//!   -> {"obs":[...],"reward":-0.0,"done":false,"t":1}
//! {"cmd":"close"}
//!   -> {"closed":true}
//! ```
//!
//! `config` and `mode` may be omitted from a reset; the server defaults
//! apply. Actions are projected onto the admissible range before the step.
//! Failures produce `{"error":"..."}` and leave the episode unchanged.

use std::io::{BufRead, Write};
use std::net::TcpListener;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use crate::config::RecConfig;
use crate::exogenous::{sample_sequence, Exogenous, NoiseParams};
use crate::sim::{admissible, initial_state, observation, step, CostMode, SimError, SimState};

pub const OBSERVATION_LAYOUT_VERSION: u32 = 1;

/// One simulated episode on a sampled scenario.
#[derive(Debug, Clone)]
pub struct Episode {
    config: Arc<RecConfig>,
    mode: CostMode,
    scenario: Vec<Exogenous>,
    state: SimState,
    last_dense: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReply {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub t: usize,
    /// The action actually applied after projection.
    pub applied: Vec<f64>,
}

impl Episode {
    /// Starts an episode on scenario 0 of `seed`.
    pub fn reset(config: Arc<RecConfig>, seed: u64, mode: CostMode) -> Episode {
        let params = NoiseParams::from_spec(&config.noise, seed, 0);
        let scenario = sample_sequence(&config, &params);
        Episode::with_scenario(config, scenario, mode)
    }

    pub fn with_scenario(config: Arc<RecConfig>, scenario: Vec<Exogenous>, mode: CostMode) -> Episode {
        let state = initial_state(&config);
        Episode { config, mode, scenario, state, last_dense: 0.0 }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.state.t >= self.config.time_grid.horizon
    }

    pub fn observation(&self) -> Vec<f64> {
        let upcoming = if self.done() { None } else { self.scenario.get(self.state.t) };
        let dense = self.mode.dense.then_some(self.last_dense);
        observation(&self.config, &self.state, upcoming, dense)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepReply, String> {
        if self.done() {
            return Err("episode is over; send reset".into());
        }
        if action.len() != self.config.batteries.len() {
            return Err(SimError::ActionLength { got: action.len(), want: self.config.batteries.len() }.to_string());
        }
        let applied = admissible(&self.config, &self.state, action);
        let exo = &self.scenario[self.state.t];
        let tr = step(&self.config, &self.state, exo, &applied, self.mode).map_err(|e| e.to_string())?;
        let grid = &self.config.time_grid;
        if tr.state.step_in_market == 1 && tr.state.market_in_billing == 0 {
            // First step of a billing period: no bill computed in it yet.
            self.last_dense = 0.0;
        }
        let reward = -tr.cost;
        if self.mode.dense && tr.state.step_in_market == grid.steps_per_market {
            self.last_dense = reward;
        }
        self.state = tr.state;
        Ok(StepReply { obs: self.observation(), reward, done: self.done(), t: self.state.t, applied })
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Request {
    Reset {
        config: Option<String>,
        #[serde(default)]
        seed: u64,
        mode: Option<CostMode>,
    },
    Step {
        action: Vec<f64>,
    },
    Close,
}

/// Defaults and config lookup for a server session.
pub struct ServerSettings<F> {
    pub default_config: Arc<RecConfig>,
    pub default_mode: CostMode,
    pub resolve: F,
}

/// Serves one session until `close` or end of input.
pub fn serve<R, W, F>(reader: R, mut writer: W, settings: &ServerSettings<F>) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: Fn(&str) -> Result<Arc<RecConfig>, String>,
{
    let mut episode: Option<Episode> = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, stop) = match serde_json::from_str::<Request>(&line) {
            Err(e) => (json!({ "error": format!("bad request: {e}") }), false),
            Ok(Request::Close) => (json!({ "closed": true }), true),
            Ok(Request::Reset { config, seed, mode }) => {
                let cfg = match config {
                    None => Ok(settings.default_config.clone()),
                    Some(id) if id == settings.default_config.name => Ok(settings.default_config.clone()),
                    Some(id) => (settings.resolve)(&id),
                };
                match cfg {
                    Ok(cfg) => {
                        let ep = Episode::reset(cfg, seed, mode.unwrap_or(settings.default_mode));
                        let reply = json!({ "obs": ep.observation(), "t": 0 });
                        episode = Some(ep);
                        (reply, false)
                    }
                    Err(e) => (json!({ "error": e }), false),
                }
            }
            Ok(Request::Step { action }) => match episode.as_mut() {
                None => (json!({ "error": "no episode; send reset first" }), false),
                Some(ep) => match ep.step(&action) {
                    Ok(r) => (json!({ "obs": r.obs, "reward": r.reward, "done": r.done, "t": r.t }), false),
                    Err(e) => (json!({ "error": e }), false),
                },
            },
        };
        serde_json::to_writer(&mut writer, &reply)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}

/// Accepts connections on `listener`, one session per connection, each on
/// its own thread.
pub fn serve_tcp<F>(listener: TcpListener, settings: Arc<ServerSettings<F>>) -> std::io::Result<()>
where
    F: Fn(&str) -> Result<Arc<RecConfig>, String> + Send + Sync + 'static,
{
    for conn in listener.incoming() {
        let conn = conn?;
        let settings = settings.clone();
        std::thread::spawn(move || {
            let reader = match conn.try_clone() {
                Ok(c) => std::io::BufReader::new(c),
                Err(_) => return,
            };
            let _ = serve(reader, &conn, &settings);
        });
    }
    Ok(())
}
