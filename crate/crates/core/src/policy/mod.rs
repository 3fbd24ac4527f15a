//! Control policies: rule-based self-consumption baselines and the MPC
//! family (MPC, MPC-retail, OPT, OPT-retail).

mod mpc;
mod rule;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use mpc::{mpc_action, mpc_program, MpcPolicy, MpcProgram};
pub use rule::{rule_action, RuleMode, RulePolicy};

use crate::config::RecConfig;
use crate::exogenous::{ExoError, Exogenous};
use crate::sim::{Action, SimError, SimState};

/// What a policy sees when choosing the next action.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub config: &'a RecConfig,
    pub state: &'a SimState,
    /// Realized exogenous flows of the episode; entry `state.t` is the step
    /// about to be played.
    pub scenario: &'a [Exogenous],
    /// Noise-free profiles the forecasts fall back to.
    pub base: &'a [Exogenous],
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("solver returned {0}")]
    Solver(String),
    #[error(transparent)]
    Exogenous(#[from] ExoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Unsupported(String),
}

pub trait Policy {
    fn name(&self) -> String;
    /// Next admissible action.
    fn act(&mut self, ctx: &Context) -> Result<Action, PolicyError>;
    /// Called before each new episode.
    fn reset(&mut self) {}
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PolicyKind {
    RecRule,
    SelfRule,
    /// `horizon` None means "to the end of the episode" (OPT variants).
    Mpc { horizon: Option<usize>, alpha: f64 },
    /// Actions come from a learner talking to the environment server.
    RlExternal,
}

/// Parsed policy description, e.g. `rec`, `self`, `opt`, `opt-retail`,
/// `mpc:K=8,alpha=0.85`, `mpc-retail:K=24,alpha=1`, `rl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub include_peaks: bool,
}

impl PolicySpec {
    pub fn mpc(horizon: usize, alpha: f64, include_peaks: bool) -> PolicySpec {
        PolicySpec { kind: PolicyKind::Mpc { horizon: Some(horizon), alpha }, include_peaks }
    }

    pub fn opt(include_peaks: bool) -> PolicySpec {
        PolicySpec { kind: PolicyKind::Mpc { horizon: None, alpha: 1.0 }, include_peaks }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self.kind {
            PolicyKind::Mpc { horizon, .. } => horizon,
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::Mpc { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Policy + Send>, PolicyError> {
        match &self.kind {
            PolicyKind::RecRule => Ok(Box::new(RulePolicy::new(RuleMode::Rec))),
            PolicyKind::SelfRule => Ok(Box::new(RulePolicy::new(RuleMode::SelfConsumption))),
            PolicyKind::Mpc { .. } => Ok(Box::new(MpcPolicy::new(self.clone()))),
            PolicyKind::RlExternal => Err(PolicyError::Unsupported(
                "rl policies act through the environment server".into(),
            )),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let retail = if self.include_peaks { "" } else { "-retail" };
        match &self.kind {
            PolicyKind::RecRule => write!(f, "rec"),
            PolicyKind::SelfRule => write!(f, "self"),
            PolicyKind::RlExternal => write!(f, "rl{retail}"),
            PolicyKind::Mpc { horizon: None, .. } => write!(f, "opt{retail}"),
            PolicyKind::Mpc { horizon: Some(k), alpha } => write!(f, "mpc{retail}:K={k},alpha={alpha}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (head, args) = s.split_once(':').unwrap_or((s.as_str(), ""));
        let (base, include_peaks) = match head.strip_suffix("-retail") {
            Some(b) => (b, false),
            None => (head, true),
        };
        let no_args = |spec: PolicySpec| {
            if args.is_empty() {
                Ok(spec)
            } else {
                Err(format!("policy `{head}` takes no arguments"))
            }
        };
        match base {
            "rec" if include_peaks => no_args(PolicySpec { kind: PolicyKind::RecRule, include_peaks }),
            "self" if include_peaks => no_args(PolicySpec { kind: PolicyKind::SelfRule, include_peaks }),
            "rl" => no_args(PolicySpec { kind: PolicyKind::RlExternal, include_peaks }),
            "opt" => no_args(PolicySpec::opt(include_peaks)),
            "mpc" => {
                let (mut k, mut alpha) = (None, 1.0);
                for kv in args.split(',').filter(|x| !x.is_empty()) {
                    let (key, val) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
                    match key.trim() {
                        "k" => k = Some(val.trim().parse::<usize>().map_err(|e| format!("K: {e}"))?),
                        "alpha" => alpha = val.trim().parse::<f64>().map_err(|e| format!("alpha: {e}"))?,
                        other => return Err(format!("unknown mpc argument `{other}`")),
                    }
                }
                let k = k.ok_or("mpc needs K=<steps>")?;
                if k == 0 {
                    return Err("K must be >= 1".into());
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(format!("alpha {alpha} outside (0, 1]"));
                }
                Ok(PolicySpec::mpc(k, alpha, include_peaks))
            }
            _ => Err(format!("unknown policy `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_and_print() {
        for s in ["rec", "self", "opt", "opt-retail", "mpc:K=8,alpha=0.85", "mpc-retail:K=1,alpha=1", "rl"] {
            let p: PolicySpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        let p: PolicySpec = "MPC:alpha=0.5,K=24".parse().unwrap();
        assert_eq!(p, PolicySpec::mpc(24, 0.5, true));
        assert!("mpc:alpha=0.5".parse::<PolicySpec>().is_err());
        assert!("mpc:K=0".parse::<PolicySpec>().is_err());
        assert!("mpc:K=3,alpha=0".parse::<PolicySpec>().is_err());
        assert!("rec-retail".parse::<PolicySpec>().is_err());
        assert!("opt:K=3".parse::<PolicySpec>().is_err());
        assert!("dqn".parse::<PolicySpec>().is_err());
    }
}
