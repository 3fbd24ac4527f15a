//! REC configuration: tariffs, batteries, time grid, noise settings and
//! member flow profiles.
//!
//! A config is a JSON document plus one CSV file of profiles. The CSV has a
//! header of `<member>.<flow>` columns (`flow` is `consumption` or
//! `production`) and one row per time step, in kW. Members without a column
//! for a flow have zero of that flow.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariffs {
    /// B⁻ per member, money/kWh.
    pub buy: Vec<f64>,
    /// B⁺ per member, money/kWh.
    pub sell: Vec<f64>,
    /// P⁻, money per kWh of offtake peak.
    pub offtake_peak: f64,
    /// P⁺, money per kWh of injection peak.
    pub injection_peak: f64,
    /// Λ⁻, fee on energy received from the REC.
    pub rec_fee_consume: f64,
    /// Λ⁺, fee on energy shared with the REC.
    pub rec_fee_produce: f64,
}

impl Tariffs {
    pub fn members(&self) -> usize {
        self.buy.len()
    }

    /// Same tariffs with both peak prices set to zero.
    pub fn retail(&self) -> Tariffs {
        Tariffs { offtake_peak: 0.0, injection_peak: 0.0, ..self.clone() }
    }

    pub fn validate(&self, members: usize) -> Result<(), ConfigError> {
        if self.buy.len() != members {
            return Err(invalid("tariffs.buy", format!("length {} != {members} members", self.buy.len())));
        }
        if self.sell.len() != members {
            return Err(invalid("tariffs.sell", format!("length {} != {members} members", self.sell.len())));
        }
        for (name, v) in [("tariffs.buy", &self.buy), ("tariffs.sell", &self.sell)] {
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(invalid(name, format!("price {x} must be finite and >= 0")));
            }
        }
        for (name, x) in [
            ("tariffs.offtake_peak", self.offtake_peak),
            ("tariffs.injection_peak", self.injection_peak),
            ("tariffs.rec_fee_consume", self.rec_fee_consume),
            ("tariffs.rec_fee_produce", self.rec_fee_produce),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(invalid(name, format!("{x} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Index of the owning member.
    pub owner: usize,
    /// S^c, kWh.
    pub capacity: f64,
    /// U⁺, kW.
    pub max_charge_power: f64,
    /// U⁻, kW.
    pub max_discharge_power: f64,
    /// ν⁺ in (0, 1].
    pub charge_eff: f64,
    /// ν⁻ in (0, 1].
    pub discharge_eff: f64,
}

impl BatterySpec {
    fn validate(&self, i: usize, members: usize) -> Result<(), ConfigError> {
        let f = |name: &str| format!("batteries[{i}].{name}");
        if self.owner >= members {
            return Err(invalid(f("owner"), format!("member {} does not exist", self.owner)));
        }
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(invalid(f("capacity"), "must be > 0"));
        }
        for (name, x) in [
            ("max_charge_power", self.max_charge_power),
            ("max_discharge_power", self.max_discharge_power),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(invalid(f(name), "must be >= 0"));
            }
        }
        for (name, x) in [("charge_eff", self.charge_eff), ("discharge_eff", self.discharge_eff)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(invalid(f(name), format!("{x} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// δ, hours between two steps.
    pub step_hours: f64,
    /// Δ_M, steps per market period.
    pub steps_per_market: usize,
    /// Δ_B, market periods per billing period.
    pub markets_per_billing: usize,
    /// T, episode length in steps.
    pub horizon: usize,
    /// γ in (0, 1).
    pub discount: f64,
}

impl TimeGrid {
    pub fn steps_per_billing(&self) -> usize {
        self.steps_per_market * self.markets_per_billing
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.step_hours.is_finite() && self.step_hours > 0.0) {
            return Err(invalid("time_grid.step_hours", "must be > 0"));
        }
        if self.steps_per_market == 0 {
            return Err(invalid("time_grid.steps_per_market", "must be >= 1"));
        }
        if self.markets_per_billing == 0 {
            return Err(invalid("time_grid.markets_per_billing", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(invalid("time_grid.horizon", "must be >= 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(invalid("time_grid.discount", format!("{} outside (0, 1)", self.discount)));
        }
        Ok(())
    }
}

/// Red-noise settings used when sampling scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// r in (0, 1].
    pub correlation: f64,
    /// σ ≥ 0, in kW, or a fraction of each column's mean when `relative`.
    pub sigma: f64,
    #[serde(default)]
    pub relative: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { correlation: 0.5, sigma: 0.3, relative: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Consumption,
    Production,
}

impl Flow {
    pub fn as_str(self) -> &'static str {
        match self {
            Flow::Consumption => "consumption",
            Flow::Production => "production",
        }
    }
}

/// One profile column: a member's non-controllable consumption or production.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowColumn {
    pub member: usize,
    pub flow: Flow,
    /// kW per step.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profiles {
    pub columns: Vec<FlowColumn>,
}

impl Profiles {
    pub fn len(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses the profile CSV. `members` maps header prefixes to indices.
    pub fn from_csv(text: &str, members: &[String]) -> Result<Profiles, String> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let mut columns = Vec::new();
        for h in headers.iter() {
            let (name, flow) = h
                .rsplit_once('.')
                .ok_or_else(|| format!("header `{h}` is not <member>.<flow>"))?;
            let member = members
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| format!("header `{h}` names unknown member `{name}`"))?;
            let flow = match flow {
                "consumption" => Flow::Consumption,
                "production" => Flow::Production,
                other => return Err(format!("header `{h}` has unknown flow `{other}`")),
            };
            if columns.iter().any(|c: &FlowColumn| c.member == member && c.flow == flow) {
                return Err(format!("duplicate column `{h}`"));
            }
            columns.push(FlowColumn { member, flow, values: Vec::new() });
        }
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| format!("row {}: `{field}` is not a number", row + 1))?;
                col.values.push(v);
            }
        }
        Ok(Profiles { columns })
    }

    pub fn to_csv(&self, members: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}.{}", members[c.member], c.flow.as_str()))
            .collect();
        w.write_record(&header).expect("in-memory write");
        for t in 0..self.len() {
            let row: Vec<String> = self.columns.iter().map(|c| c.values[t].to_string()).collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

/// Full description of one REC instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RecConfig {
    pub name: String,
    pub members: Vec<String>,
    pub tariffs: Tariffs,
    pub batteries: Vec<BatterySpec>,
    pub time_grid: TimeGrid,
    pub noise: NoiseSpec,
    pub profiles: Profiles,
}

/// On-disk JSON shape. Profiles are referenced by a path relative to the
/// JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: String,
    members: Vec<String>,
    tariffs: Tariffs,
    #[serde(default)]
    batteries: Vec<BatterySpec>,
    time_grid: TimeGrid,
    #[serde(default)]
    noise: NoiseSpec,
    profiles: String,
}

impl RecConfig {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Battery index owned by `member`, if any.
    pub fn battery_of(&self, member: usize) -> Option<usize> {
        self.batteries.iter().position(|b| b.owner == member)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = self.members.len();
        if m == 0 {
            return Err(invalid("members", "at least one member is required"));
        }
        for (i, a) in self.members.iter().enumerate() {
            if a.is_empty() || a.contains('.') || a.contains(',') {
                return Err(invalid(format!("members[{i}]"), "names must be non-empty without '.' or ','"));
            }
            if self.members[..i].contains(a) {
                return Err(invalid(format!("members[{i}]"), format!("duplicate member `{a}`")));
            }
        }
        self.tariffs.validate(m)?;
        self.time_grid.validate()?;
        for (i, b) in self.batteries.iter().enumerate() {
            b.validate(i, m)?;
            if self.batteries[..i].iter().any(|o| o.owner == b.owner) {
                return Err(invalid(format!("batteries[{i}].owner"), "member already owns a battery"));
            }
        }
        if !(self.noise.correlation > 0.0 && self.noise.correlation <= 1.0) {
            return Err(invalid("noise.correlation", "must be in (0, 1]"));
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return Err(invalid("noise.sigma", "must be >= 0"));
        }
        for c in &self.profiles.columns {
            if c.member >= m {
                return Err(invalid("profiles", format!("column for unknown member {}", c.member)));
            }
            if c.values.len() < self.time_grid.horizon {
                return Err(invalid(
                    "profiles",
                    format!(
                        "{}.{} has {} rows, horizon needs {}",
                        self.members[c.member],
                        c.flow.as_str(),
                        c.values.len(),
                        self.time_grid.horizon
                    ),
                ));
            }
            if let Some(v) = c.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(invalid("profiles", format!("negative or non-finite power {v}")));
            }
        }
        Ok(())
    }

    /// Parses a config from JSON text; `base_dir` resolves the profile path.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<RecConfig, ConfigError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let csv_path = base_dir.join(&file.profiles);
        let csv_text = fs::read_to_string(&csv_path)
            .map_err(|source| ConfigError::Io { path: csv_path.clone(), source })?;
        let profiles = Profiles::from_csv(&csv_text, &file.members)
            .map_err(|message| ConfigError::Parse { path: csv_path, message })?;
        let cfg = RecConfig {
            name: file.name,
            members: file.members,
            tariffs: file.tariffs,
            batteries: file.batteries,
            time_grid: file.time_grid,
            noise: file.noise,
            profiles,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// JSON text for this config, referring to `profiles_file` for the CSV.
    pub fn to_json(&self, profiles_file: &str) -> String {
        let file = ConfigFile {
            name: self.name.clone(),
            members: self.members.clone(),
            tariffs: self.tariffs.clone(),
            batteries: self.batteries.clone(),
            time_grid: self.time_grid.clone(),
            noise: self.noise.clone(),
            profiles: profiles_file.to_string(),
        };
        serde_json::to_string_pretty(&file).expect("config serializes")
    }

    /// Writes `<dir>/<name>.json` and `<dir>/<name>.csv`; returns the JSON path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, ConfigError> {
        let csv_name = format!("{}.csv", self.name);
        let json_path = dir.join(format!("{}.json", self.name));
        let csv_path = dir.join(&csv_name);
        fs::write(&csv_path, self.profiles.to_csv(&self.members))
            .map_err(|source| ConfigError::Io { path: csv_path, source })?;
        fs::write(&json_path, self.to_json(&csv_name))
            .map_err(|source| ConfigError::Io { path: json_path.clone(), source })?;
        Ok(json_path)
    }
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<RecConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    RecConfig::from_json(&text, dir).map_err(|e| match e {
        ConfigError::Parse { message, path: p } if p == dir => ConfigError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Resolves a config id (`rec2`) or a path to a JSON file.
pub fn resolve_config(id_or_path: &str, config_dir: &Path) -> Result<RecConfig, ConfigError> {
    let p = Path::new(id_or_path);
    if p.extension().is_some_and(|e| e == "json") {
        load_config(p)
    } else {
        load_config(&config_dir.join(format!("{id_or_path}.json")))
    }
}
