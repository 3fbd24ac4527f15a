//! Exogenous flows: base profiles, red-noise scenarios and the blended
//! forecasts handed to MPC policies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{Flow, FlowColumn, NoiseSpec, Profiles, RecConfig};

/// Net non-controllable flows of every member over one step, kW.
/// For each member at most one of the two entries is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exogenous {
    pub production: Vec<f64>,
    pub consumption: Vec<f64>,
}

impl Exogenous {
    pub fn zeros(members: usize) -> Exogenous {
        Exogenous { production: vec![0.0; members], consumption: vec![0.0; members] }
    }

    /// Nets gross flows: the smaller of the two is subtracted from both.
    pub fn from_gross(mut consumption: Vec<f64>, mut production: Vec<f64>) -> Exogenous {
        for (c, p) in consumption.iter_mut().zip(production.iter_mut()) {
            let common = c.min(*p);
            *c -= common;
            *p -= common;
        }
        Exogenous { production, consumption }
    }

    pub fn members(&self) -> usize {
        self.consumption.len()
    }

    /// Consumption minus production of member `m`, kW.
    pub fn net(&self, m: usize) -> f64 {
        self.consumption[m] - self.production[m]
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExoError {
    #[error("forecast needs steps {start}..{end} but only {available} are available")]
    Horizon { start: usize, end: usize, available: usize },
    #[error("foresight efficiency {0} outside (0, 1]")]
    Alpha(f64),
}

/// Noise settings for one scenario. Scenario `stream` of a given `seed`
/// draws from its own ChaCha8 stream, so scenarios are independent of the
/// order in which they are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    pub correlation: f64,
    pub sigma: f64,
    /// When set, each column's σ is `sigma` times the column mean.
    pub relative: bool,
    pub seed: u64,
    pub stream: u64,
}

impl NoiseParams {
    pub fn from_spec(spec: &NoiseSpec, seed: u64, stream: u64) -> NoiseParams {
        NoiseParams {
            correlation: spec.correlation,
            sigma: spec.sigma,
            relative: spec.relative,
            seed,
            stream,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// AR(1) noise x₀ = w₀, x_{t+1} = r·x_t + √(1−r²)·w_{t+1} with w ~ N(0, σ²).
/// The innovation scaling keeps the marginal variance at σ².
pub fn red_noise<R: rand::Rng>(n: usize, r: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let k = (1.0 - r * r).max(0.0).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = 0.0;
    for t in 0..n {
        let w: f64 = StandardNormal.sample(rng);
        x = if t == 0 { sigma * w } else { r * x + k * sigma * w };
        out.push(x);
    }
    out
}

fn aggregate(config: &RecConfig, len: usize, column: impl Fn(usize, usize) -> f64) -> Vec<Exogenous> {
    let m = config.member_count();
    (0..len)
        .map(|t| {
            let mut cons = vec![0.0; m];
            let mut prod = vec![0.0; m];
            for (i, col) in config.profiles.columns.iter().enumerate() {
                let v = column(i, t);
                match col.flow {
                    Flow::Consumption => cons[col.member] += v,
                    Flow::Production => prod[col.member] += v,
                }
            }
            Exogenous::from_gross(cons, prod)
        })
        .collect()
}

/// Noise-free flows for the whole episode.
pub fn base_sequence(config: &RecConfig) -> Vec<Exogenous> {
    let cols = &config.profiles.columns;
    aggregate(config, config.time_grid.horizon, |i, t| cols[i].values[t])
}

/// Noisy gross profiles of one scenario, T values per column: every column
/// gets its own red noise and is clamped at zero.
pub fn sample_profiles(config: &RecConfig, params: &NoiseParams) -> Profiles {
    let horizon = config.time_grid.horizon;
    let mut rng = params.rng();
    let columns = config
        .profiles
        .columns
        .iter()
        .map(|col| {
            let base = &col.values[..horizon];
            let sigma = if params.relative {
                params.sigma * base.iter().sum::<f64>() / horizon as f64
            } else {
                params.sigma
            };
            let noise = red_noise(horizon, params.correlation, sigma, &mut rng);
            let values = base.iter().zip(noise).map(|(e, x)| (e + x).max(0.0)).collect();
            FlowColumn { member: col.member, flow: col.flow, values }
        })
        .collect();
    Profiles { columns }
}

/// Samples one scenario of length T: noisy profiles netted per member.
pub fn sample_sequence(config: &RecConfig, params: &NoiseParams) -> Vec<Exogenous> {
    let noisy = sample_profiles(config, params);
    aggregate(config, config.time_grid.horizon, |i, t| noisy.columns[i].values[t])
}

/// Forecast of steps t..t+K−1. Offsets 0 and 1 are the true values; from
/// offset d ≥ 2 on the forecast is α^d·truth + (1−α^d)·base.
pub fn blend_foresight(
    truth: &[Exogenous],
    base: &[Exogenous],
    alpha: f64,
    t: usize,
    k: usize,
) -> Result<Vec<Exogenous>, ExoError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ExoError::Alpha(alpha));
    }
    let available = truth.len().min(base.len());
    if t + k > available {
        return Err(ExoError::Horizon { start: t, end: t + k, available });
    }
    Ok((0..k)
        .map(|d| {
            let e = &truth[t + d];
            if d <= 1 || alpha == 1.0 {
                return e.clone();
            }
            let w = alpha.powi(d as i32);
            let b = &base[t + d];
            let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
                x.iter().zip(y).map(|(a, b)| w * a + (1.0 - w) * b).collect()
            };
            Exogenous::from_gross(mix(&e.consumption, &b.consumption), mix(&e.production, &b.production))
        })
        .collect())
}
