//! Run configuration: one TOML file describing the scenario, the channel
//! settings, the visibility factors, and the simulation grid.
//!
//! Parsing is strict (unknown keys are rejected) and validation reports
//! the offending key together with the violated constraint, so a typo in
//! a hand-edited file fails loudly instead of running a wrong scenario.
//!
//! Units: positions meters, velocities m/s, times seconds, frequencies
//! Hz, angles radians.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::channel::{
    ChannelConfig, ChannelError, PowerSplit, DEFAULT_CARRIER_HZ, DEFAULT_FREQUENCY_EXPONENT,
    DEFAULT_GROUND_RATIO, DEFAULT_RICEAN_FACTOR,
};
use crate::evolution::{VisibilityFactor, DEFAULT_VISIBILITY_FACTOR};
use crate::geom::Vec3;
use crate::registry::VtdCondition;
use crate::scene::{Trajectory, VIRTUAL_DELAY_MEAN};
use crate::sim::Scenario;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] Box<toml::de::Error>),
    #[error("{key}: {constraint}")]
    Invalid { key: &'static str, constraint: String },
}

fn invalid(key: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, constraint: constraint.into() }
}

/// Top-level config tree. Every section except `[scenario]` may be
/// omitted and falls back to its defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub vtd: VtdCondition,
    #[serde(default = "default_tx_start")]
    pub tx_start: [f64; 3],
    #[serde(default = "default_rx_start")]
    pub rx_start: [f64; 3],
    #[serde(default = "default_tx_velocity")]
    pub tx_velocity: [f64; 3],
    #[serde(default = "default_rx_velocity")]
    pub rx_velocity: [f64; 3],
    #[serde(default = "default_speed_tx")]
    pub mean_dyn_speed_tx: f64,
    #[serde(default = "default_speed_rx")]
    pub mean_dyn_speed_rx: f64,
    /// Antenna boresight angles. Accepted so measurement configs carry
    /// over unchanged, but the single-antenna response never reads them.
    #[serde(default)]
    pub tx_azimuth: f64,
    #[serde(default)]
    pub tx_elevation: f64,
    #[serde(default)]
    pub rx_azimuth: f64,
    #[serde(default)]
    pub rx_elevation: f64,
}

fn default_tx_start() -> [f64; 3] {
    [0.0, 0.0, 1.5]
}

fn default_rx_start() -> [f64; 3] {
    [80.0, 0.0, 1.6]
}

fn default_tx_velocity() -> [f64; 3] {
    [18.0, 0.0, 0.0]
}

fn default_rx_velocity() -> [f64; 3] {
    [15.0, 0.0, 0.0]
}

fn default_speed_tx() -> f64 {
    14.0
}

fn default_speed_rx() -> f64 {
    15.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default)]
    pub initial_phase: f64,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default = "default_ricean")]
    pub ricean_factor: f64,
    #[serde(default = "default_exponent")]
    pub frequency_exponent: f64,
    #[serde(default = "default_virtual_delay")]
    pub virtual_delay_mean: f64,
    #[serde(default)]
    pub split: SplitSection,
}

fn default_carrier() -> f64 {
    DEFAULT_CARRIER_HZ
}

fn default_window() -> (f64, f64) {
    (0.0, f64::INFINITY)
}

fn default_ricean() -> f64 {
    DEFAULT_RICEAN_FACTOR
}

fn default_exponent() -> f64 {
    DEFAULT_FREQUENCY_EXPONENT
}

fn default_virtual_delay() -> f64 {
    VIRTUAL_DELAY_MEAN
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            carrier_hz: default_carrier(),
            initial_phase: 0.0,
            window: default_window(),
            ricean_factor: default_ricean(),
            frequency_exponent: default_exponent(),
            virtual_delay_mean: default_virtual_delay(),
            split: SplitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Fixed,
    Proportional,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_split_mode")]
    pub mode: SplitMode,
    #[serde(default = "default_ground")]
    pub ground: f64,
    pub static_nlos: Option<f64>,
    pub dynamic_nlos: Option<f64>,
}

fn default_split_mode() -> SplitMode {
    SplitMode::Proportional
}

fn default_ground() -> f64 {
    DEFAULT_GROUND_RATIO
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            mode: default_split_mode(),
            ground: default_ground(),
            static_nlos: None,
            dynamic_nlos: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    #[serde(default = "default_eps")]
    pub eps_static: f64,
    #[serde(default = "default_eps")]
    pub eps_dynamic: f64,
}

fn default_eps() -> f64 {
    DEFAULT_VISIBILITY_FACTOR
}

impl Default for EvolutionSection {
    fn default() -> Self {
        EvolutionSection { eps_static: default_eps(), eps_dynamic: default_eps() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Transfer-function evaluation frequencies; empty means "probe at
    /// the carrier".
    #[serde(default)]
    pub frequencies: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
}

fn default_snapshots() -> usize {
    300
}

fn default_step() -> f64 {
    0.01
}

fn default_realizations() -> usize {
    1
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            snapshots: default_snapshots(),
            step: default_step(),
            frequencies: Vec::new(),
            realizations: default_realizations(),
        }
    }
}

/// Simulation grid after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub snapshots: usize,
    pub step: f64,
    pub frequencies: Vec<f64>,
    pub realizations: usize,
}

/// Everything a simulation run consumes, ready to hand to the driver.
#[derive(Debug, Clone)]
pub struct Validated {
    pub scenario: Scenario,
    pub channel: ChannelConfig,
    pub eps: VisibilityFactor,
    pub run: RunPlan,
}

/// Key owning each channel validation failure, so config errors point at
/// the line the user has to fix.
fn channel_key(err: &ChannelError) -> &'static str {
    match err {
        ChannelError::InvalidCarrier { .. } => "channel.carrier_hz",
        ChannelError::InvalidInitialPhase { .. } => "channel.initial_phase",
        ChannelError::InvalidWindow { .. } => "channel.window",
        ChannelError::InvalidRiceanFactor { .. } => "channel.ricean_factor",
        ChannelError::InvalidPowerRatio { .. } | ChannelError::InvalidPowerRatios { .. } => {
            "channel.split"
        }
        ChannelError::InvalidFrequencyExponent { .. } => "channel.frequency_exponent",
        ChannelError::InvalidVirtualDelay { .. } => "channel.virtual_delay_mean",
        _ => "channel",
    }
}

fn vec3_of(key: &'static str, a: [f64; 3]) -> Result<Vec3, ConfigError> {
    let v = Vec3::new(a[0], a[1], a[2]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("components must be finite, got {a:?}")))
    }
}

fn positive(key: &'static str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(key, format!("must be positive and finite, got {value}")))
    }
}

fn unit_open(key: &'static str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(invalid(key, format!("must lie strictly between 0 and 1, got {value}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(Box::new(e)))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    /// A complete config for the reference drive scenario at the given
    /// traffic density.
    pub fn reference(vtd: VtdCondition) -> RunConfig {
        RunConfig {
            scenario: ScenarioSection {
                vtd,
                tx_start: default_tx_start(),
                rx_start: default_rx_start(),
                tx_velocity: default_tx_velocity(),
                rx_velocity: default_rx_velocity(),
                mean_dyn_speed_tx: default_speed_tx(),
                mean_dyn_speed_rx: default_speed_rx(),
                tx_azimuth: 0.0,
                tx_elevation: 0.0,
                rx_azimuth: 0.0,
                rx_elevation: 0.0,
            },
            channel: ChannelSection::default(),
            evolution: EvolutionSection::default(),
            simulate: SimulateSection::default(),
        }
    }

    /// Checks every constraint and assembles the driver inputs.
    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let s = &self.scenario;
        let tx_start = vec3_of("scenario.tx_start", s.tx_start)?;
        let rx_start = vec3_of("scenario.rx_start", s.rx_start)?;
        if tx_start == rx_start {
            return Err(invalid("scenario.rx_start", "terminals must not coincide"));
        }
        let tx_velocity = vec3_of("scenario.tx_velocity", s.tx_velocity)?;
        let rx_velocity = vec3_of("scenario.rx_velocity", s.rx_velocity)?;
        positive("scenario.mean_dyn_speed_tx", s.mean_dyn_speed_tx)?;
        positive("scenario.mean_dyn_speed_rx", s.mean_dyn_speed_rx)?;
        for (key, angle) in [
            ("scenario.tx_azimuth", s.tx_azimuth),
            ("scenario.tx_elevation", s.tx_elevation),
            ("scenario.rx_azimuth", s.rx_azimuth),
            ("scenario.rx_elevation", s.rx_elevation),
        ] {
            if !angle.is_finite() {
                return Err(invalid(key, format!("must be finite, got {angle}")));
            }
        }
        let scenario = Scenario {
            vtd: s.vtd,
            tx_start,
            rx_start,
            tx_trajectory: Trajectory::constant(tx_velocity),
            rx_trajectory: Trajectory::constant(rx_velocity),
            mean_dyn_speed_tx: s.mean_dyn_speed_tx,
            mean_dyn_speed_rx: s.mean_dyn_speed_rx,
        };

        let c = &self.channel;
        let split = match c.split.mode {
            SplitMode::Proportional => {
                for (key, extra) in [
                    ("channel.split.static_nlos", c.split.static_nlos),
                    ("channel.split.dynamic_nlos", c.split.dynamic_nlos),
                ] {
                    if extra.is_some() {
                        return Err(invalid(key, "only used when mode = \"fixed\""));
                    }
                }
                PowerSplit::Proportional { ground: c.split.ground }
            }
            SplitMode::Fixed => PowerSplit::Fixed {
                ground: c.split.ground,
                static_nlos: c
                    .split
                    .static_nlos
                    .ok_or_else(|| invalid("channel.split.static_nlos", "required when mode = \"fixed\""))?,
                dynamic_nlos: c
                    .split
                    .dynamic_nlos
                    .ok_or_else(|| invalid("channel.split.dynamic_nlos", "required when mode = \"fixed\""))?,
            },
        };
        let channel = ChannelConfig {
            carrier_hz: c.carrier_hz,
            initial_phase: c.initial_phase,
            window: c.window,
            ricean_factor: c.ricean_factor,
            split,
            frequency_exponent: c.frequency_exponent,
            virtual_delay_mean: c.virtual_delay_mean,
        };
        channel
            .validate()
            .map_err(|e| invalid(channel_key(&e), e.to_string()))?;

        let e = &self.evolution;
        unit_open("evolution.eps_static", e.eps_static)?;
        unit_open("evolution.eps_dynamic", e.eps_dynamic)?;
        let eps = VisibilityFactor::new(e.eps_static, e.eps_dynamic)
            .map_err(|err| invalid("evolution", err.to_string()))?;

        let g = &self.simulate;
        if g.snapshots == 0 {
            return Err(invalid("simulate.snapshots", "must be at least 1"));
        }
        positive("simulate.step", g.step)?;
        let frequencies = if g.frequencies.is_empty() {
            vec![channel.carrier_hz]
        } else {
            for &f in &g.frequencies {
                positive("simulate.frequencies", f)?;
            }
            g.frequencies.clone()
        };
        if g.realizations == 0 {
            return Err(invalid("simulate.realizations", "must be at least 1"));
        }

        Ok(Validated {
            scenario,
            channel,
            eps,
            run: RunPlan {
                snapshots: g.snapshots,
                step: g.step,
                frequencies,
                realizations: g.realizations,
            },
        })
    }
}
