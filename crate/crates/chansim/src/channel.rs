//! Complex channel gain assembly for one snapshot.
//!
//! A snapshot's impulse response is the direct path, a deterministic
//! ground bounce, and one single-bounce path per scatterer of every
//! visible twin-cluster pair. The Ricean factor fixes the direct share of
//! the total power; the remainder is split across the ground and the two
//! bounce classes, and within a class each path's share follows its raw
//! delay-law power. Phases come straight from path length, so the phase
//! increment between nearby snapshots equals the Doppler integral and the
//! per-path Doppler is the path-length rate over the wavelength.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::evolution::StepReport;
use crate::geom::Vec3;
use crate::registry::ScattererClass;
use crate::scene::{Scatterer, SceneState, VIRTUAL_DELAY_MEAN};
use crate::SPEED_OF_LIGHT;

/// Default carrier frequency, Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 28e9;

/// Default Ricean factor: 3 dB, so the direct path carries about two
/// thirds of the power.
pub const DEFAULT_RICEAN_FACTOR: f64 = 1.9952623149688796;

/// Default share of the diffuse power budget taken by the ground bounce.
pub const DEFAULT_GROUND_RATIO: f64 = 0.2;

/// Default exponent of the transfer-function frequency tilt.
pub const DEFAULT_FREQUENCY_EXPONENT: f64 = 1.35;

/// Ratio sums further off than this fail validation.
const RATIO_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("carrier frequency must be positive and finite, got {value}")]
    InvalidCarrier { value: f64 },
    #[error("initial phase must be finite, got {value}")]
    InvalidInitialPhase { value: f64 },
    #[error("observation window needs a finite start at or before its end, got [{start}, {end}]")]
    InvalidWindow { start: f64, end: f64 },
    #[error("ricean factor must be nonnegative, got {value}")]
    InvalidRiceanFactor { value: f64 },
    #[error("power ratio must lie in [0, 1], got {value}")]
    InvalidPowerRatio { value: f64 },
    #[error("power ratios must sum to one, got {sum}")]
    InvalidPowerRatios { sum: f64 },
    #[error("frequency exponent must be finite, got {value}")]
    InvalidFrequencyExponent { value: f64 },
    #[error("virtual-link delay mean must be positive and finite, got {value}")]
    InvalidVirtualDelay { value: f64 },
    #[error("evaluation frequency must be positive and finite, got {value}")]
    InvalidFrequency { value: f64 },
    #[error("terminals are co-located, the direct path has no direction")]
    CollocatedTerminals,
    #[error("ground bounce needs both antennas above the plane, got heights {tx} and {rx}")]
    BelowGroundAntenna { tx: f64, rx: f64 },
    #[error("cluster {cluster} is not wired to a twin in this scene")]
    UnpairedCluster { cluster: usize },
    #[error("every path class with a nonzero power share is empty")]
    NoContributingPaths,
}

/// How the diffuse power budget divides across the ground bounce and the
/// two scatterer classes. Shares of classes with no visible paths are
/// redistributed over the rest, so the budget is always fully assigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerSplit {
    /// Fixed class ratios; they must sum to one.
    Fixed { ground: f64, static_nlos: f64, dynamic_nlos: f64 },
    /// Fixed ground ratio; the rest follows the visible path counts, so
    /// per-path powers stay comparable across traffic densities.
    Proportional { ground: f64 },
}

impl Default for PowerSplit {
    fn default() -> Self {
        PowerSplit::Proportional { ground: DEFAULT_GROUND_RATIO }
    }
}

/// Resolved per-class shares of the diffuse budget; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassShares {
    pub ground: f64,
    pub static_nlos: f64,
    pub dynamic_nlos: f64,
}

impl PowerSplit {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let check = |value: f64| {
            if value.is_finite() && (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ChannelError::InvalidPowerRatio { value })
            }
        };
        match *self {
            PowerSplit::Fixed { ground, static_nlos, dynamic_nlos } => {
                check(ground)?;
                check(static_nlos)?;
                check(dynamic_nlos)?;
                let sum = ground + static_nlos + dynamic_nlos;
                if (sum - 1.0).abs() > RATIO_SUM_TOLERANCE {
                    return Err(ChannelError::InvalidPowerRatios { sum });
                }
                Ok(())
            }
            PowerSplit::Proportional { ground } => check(ground),
        }
    }

    /// Nominal ground share before any redistribution.
    pub fn ground_ratio(&self) -> f64 {
        match *self {
            PowerSplit::Fixed { ground, .. } => ground,
            PowerSplit::Proportional { ground } => ground,
        }
    }

    /// Class shares given the visible bounce-path counts.
    pub fn resolve(&self, n_static: usize, n_dynamic: usize) -> Result<ClassShares, ChannelError> {
        match *self {
            PowerSplit::Fixed { ground, static_nlos, dynamic_nlos } => {
                let sta = if n_static > 0 { static_nlos } else { 0.0 };
                let dyn_ = if n_dynamic > 0 { dynamic_nlos } else { 0.0 };
                let present = ground + sta + dyn_;
                if present <= 0.0 {
                    return Err(ChannelError::NoContributingPaths);
                }
                Ok(ClassShares {
                    ground: ground / present,
                    static_nlos: sta / present,
                    dynamic_nlos: dyn_ / present,
                })
            }
            PowerSplit::Proportional { ground } => {
                let n = n_static + n_dynamic;
                if n == 0 {
                    if ground > 0.0 {
                        return Ok(ClassShares { ground: 1.0, static_nlos: 0.0, dynamic_nlos: 0.0 });
                    }
                    return Err(ChannelError::NoContributingPaths);
                }
                let rest = 1.0 - ground;
                Ok(ClassShares {
                    ground,
                    static_nlos: rest * n_static as f64 / n as f64,
                    dynamic_nlos: rest * n_dynamic as f64 / n as f64,
                })
            }
        }
    }
}

/// Knobs of the gain assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Phase common to every path at zero path length, radians.
    pub initial_phase: f64,
    /// Observation window; snapshots outside it carry a zero gate.
    pub window: (f64, f64),
    /// Ratio of direct-path power to everything else. May be infinite for
    /// a pure direct channel.
    pub ricean_factor: f64,
    /// Diffuse power split across ground and bounce classes.
    pub split: PowerSplit,
    /// Exponent of the (f / carrier) transfer-function tilt on diffuse
    /// paths.
    pub frequency_exponent: f64,
    /// Mean of the exponential virtual-link delay fed to scene
    /// generation, seconds.
    pub virtual_delay_mean: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            carrier_hz: DEFAULT_CARRIER_HZ,
            initial_phase: 0.0,
            window: (0.0, f64::INFINITY),
            ricean_factor: DEFAULT_RICEAN_FACTOR,
            split: PowerSplit::default(),
            frequency_exponent: DEFAULT_FREQUENCY_EXPONENT,
            virtual_delay_mean: VIRTUAL_DELAY_MEAN,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(ChannelError::InvalidCarrier { value: self.carrier_hz });
        }
        if !self.initial_phase.is_finite() {
            return Err(ChannelError::InvalidInitialPhase { value: self.initial_phase });
        }
        let (start, end) = self.window;
        // The end may sit at infinity for an always-open window.
        if !(start.is_finite() && end >= start) {
            return Err(ChannelError::InvalidWindow { start, end });
        }
        if self.ricean_factor.is_nan() || self.ricean_factor < 0.0 {
            return Err(ChannelError::InvalidRiceanFactor { value: self.ricean_factor });
        }
        self.split.validate()?;
        if !self.frequency_exponent.is_finite() {
            return Err(ChannelError::InvalidFrequencyExponent { value: self.frequency_exponent });
        }
        if !(self.virtual_delay_mean.is_finite() && self.virtual_delay_mean > 0.0) {
            return Err(ChannelError::InvalidVirtualDelay { value: self.virtual_delay_mean });
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Rectangular observation gate at time `t`: one inside the window,
    /// zero outside.
    pub fn window_value(&self, t: f64) -> f64 {
        if t >= self.window.0 && t <= self.window.1 {
            1.0
        } else {
            0.0
        }
    }
}

/// Power shares (direct, everything else) implied by the Ricean factor.
/// An infinite factor is the pure direct-path limit.
fn ricean_shares(omega: f64) -> (f64, f64) {
    if omega.is_finite() {
        (omega / (omega + 1.0), 1.0 / (omega + 1.0))
    } else {
        (1.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathKind {
    Los,
    GroundReflection,
    StaticNlos,
    DynamicNlos,
}

/// One resolved propagation path at a single snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    pub kind: PathKind,
    /// Complex amplitude; its squared magnitude is the path's assigned
    /// normalized power.
    pub gain: Complex64,
    /// End-to-end delay, seconds; never below the direct-path delay.
    pub delay: f64,
    /// Path-length rate over the wavelength, Hz. Positive while the path
    /// stretches, matching the phase convention below.
    pub doppler_hz: f64,
    /// Carrier phase: the common initial phase plus path length (and the
    /// virtual link, for bounce paths) in wavelengths.
    pub phase: f64,
    /// Owning cluster, bounce paths only.
    pub cluster: Option<usize>,
    /// Bounce scatterer, bounce paths only.
    pub scatterer: Option<usize>,
}

impl PathComponent {
    /// Assigned normalized power.
    pub fn power(&self) -> f64 {
        self.gain.norm_sqr()
    }

    /// Same path with its phase replaced; the magnitude is kept. Lets a
    /// caller swap the geometric phase for an accumulated Doppler
    /// integral without touching the power assignment.
    pub fn with_phase(&self, phase: f64) -> PathComponent {
        PathComponent { gain: Complex64::from_polar(self.gain.norm(), phase), phase, ..self.clone() }
    }

    fn with_amplitude(mut self, amplitude: f64) -> PathComponent {
        self.gain = Complex64::from_polar(amplitude, self.phase);
        self
    }
}

/// Impulse response of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CirSnapshot {
    pub time: f64,
    /// Observation gate at `time`, zero or one.
    pub q: f64,
    pub components: Vec<PathComponent>,
}

impl CirSnapshot {
    /// Sum of assigned powers; one whenever any path contributes.
    pub fn total_power(&self) -> f64 {
        self.components.iter().map(|c| c.power()).sum()
    }
}

/// Direct path between the terminals.
pub fn los_component(scene: &SceneState, cfg: &ChannelConfig) -> Result<PathComponent, ChannelError> {
    cfg.validate()?;
    let span = scene.rx.position - scene.tx.position;
    let direction = span.unit().ok_or(ChannelError::CollocatedTerminals)?;
    let lambda = cfg.wavelength();
    let (direct, _) = ricean_shares(cfg.ricean_factor);
    let phase = cfg.initial_phase + TAU / lambda * span.norm();
    Ok(PathComponent {
        kind: PathKind::Los,
        gain: Complex64::from_polar(direct.sqrt(), phase),
        delay: span.norm() / SPEED_OF_LIGHT,
        doppler_hz: direction.dot(scene.rx.velocity - scene.tx.velocity) / lambda,
        phase,
        cluster: None,
        scatterer: None,
    })
}

/// Where the ground bounce touches the z = 0 plane: on the segment from
/// the mirrored transmitter to the receiver.
pub fn ground_reflection_point(tx: Vec3, rx: Vec3) -> Result<Vec3, ChannelError> {
    if !(tx.z > 0.0 && rx.z > 0.0) {
        return Err(ChannelError::BelowGroundAntenna { tx: tx.z, rx: rx.z });
    }
    let image = tx.mirror_z();
    let point = image + (rx - image) * (tx.z / (tx.z + rx.z));
    Ok(Vec3::new(point.x, point.y, 0.0))
}

/// Deterministic ground bounce via the image of the transmitter in the
/// z = 0 plane. Its amplitude uses the nominal ground ratio; assembly
/// rescales it once empty-class redistribution is settled.
pub fn ground_reflection_component(
    scene: &SceneState,
    cfg: &ChannelConfig,
) -> Result<PathComponent, ChannelError> {
    cfg.validate()?;
    let tx = scene.tx.position;
    let rx = scene.rx.position;
    if !(tx.z > 0.0 && rx.z > 0.0) {
        return Err(ChannelError::BelowGroundAntenna { tx: tx.z, rx: rx.z });
    }
    let image = tx.mirror_z();
    let span = rx - image;
    // Positive heights keep the image strictly below the receiver.
    let direction = span.unit().expect("image and receiver are distinct");
    let lambda = cfg.wavelength();
    let (_, diffuse) = ricean_shares(cfg.ricean_factor);
    let phase = cfg.initial_phase + TAU / lambda * span.norm();
    Ok(PathComponent {
        kind: PathKind::GroundReflection,
        gain: Complex64::from_polar((diffuse * cfg.split.ground_ratio()).sqrt(), phase),
        delay: span.norm() / SPEED_OF_LIGHT,
        doppler_hz: direction.dot(scene.rx.velocity - scene.tx.velocity.mirror_z()) / lambda,
        phase,
        cluster: None,
        scatterer: None,
    })
}

/// Single-bounce path of one scatterer through its twin-cluster pair.
/// The amplitude is left at one; assembly assigns the normalized power.
pub fn nlos_component(
    scene: &SceneState,
    scatterer: &Scatterer,
    cfg: &ChannelConfig,
) -> Result<PathComponent, ChannelError> {
    cfg.validate()?;
    let own = scene
        .clusters
        .iter()
        .find(|c| c.id == scatterer.cluster)
        .ok_or(ChannelError::UnpairedCluster { cluster: scatterer.cluster })?;
    let twin = scene
        .clusters
        .iter()
        .find(|c| c.id == own.twin)
        .ok_or(ChannelError::UnpairedCluster { cluster: own.id })?;
    let own_term = scene.terminal(own.side);
    let far_term = scene.terminal(own.side.opposite());
    let near_leg = scatterer.position - own_term.position;
    let far_leg = scatterer.far_point - far_term.position;
    let lambda = cfg.wavelength();
    // A zero-length leg has no direction and contributes no length rate.
    let near_rate = near_leg.unit().unwrap_or(Vec3::ZERO).dot(scatterer.velocity - own_term.velocity);
    let far_rate = far_leg.unit().unwrap_or(Vec3::ZERO).dot(twin.velocity - far_term.velocity);
    // The phase tracks the raw legs plus the virtual link even when the
    // stored delay is floored at the direct path, so it stays the exact
    // integral of the Doppler above.
    let length = near_leg.norm() + far_leg.norm() + SPEED_OF_LIGHT * own.virtual_delay;
    let phase = cfg.initial_phase + TAU / lambda * length;
    Ok(PathComponent {
        kind: match scatterer.class {
            ScattererClass::Static => PathKind::StaticNlos,
            ScattererClass::Dynamic => PathKind::DynamicNlos,
        },
        gain: Complex64::from_polar(1.0, phase),
        delay: scatterer.delay,
        doppler_hz: (near_rate + far_rate) / lambda,
        phase,
        cluster: Some(own.id),
        scatterer: Some(scatterer.id),
    })
}

/// Within-class power shares for the given scatterers: each raw delay-law
/// power over its class total. Raw powers carry the shadowing frozen at
/// the scatterer's birth, so repeated snapshots stay consistent.
pub fn normalize_powers(scene: &SceneState, ids: &[usize]) -> Vec<f64> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    let index = |class: ScattererClass| match class {
        ScattererClass::Static => 0,
        ScattererClass::Dynamic => 1,
    };
    for &id in ids {
        let s = scene.scatterer(id);
        sums[index(s.class)] += s.power;
        counts[index(s.class)] += 1;
    }
    ids.iter()
        .map(|&id| {
            let s = scene.scatterer(id);
            let sum = sums[index(s.class)];
            if sum > 0.0 {
                s.power / sum
            } else {
                // Raw powers are positive, so a zero sum means the whole
                // class underflowed; fall back to equal shares.
                1.0 / counts[index(s.class)] as f64
            }
        })
        .collect()
}

/// Impulse response of the current snapshot: the direct path, the ground
/// bounce, and one path per scatterer of every visible pair, with powers
/// normalized to a unit total.
pub fn assemble_cir(
    scene: &SceneState,
    visibility: &StepReport,
    cfg: &ChannelConfig,
) -> Result<CirSnapshot, ChannelError> {
    cfg.validate()?;
    let mut ids: Vec<usize> = Vec::new();
    for cluster in &scene.clusters {
        if visibility.is_visible(cluster.id) {
            ids.extend(cluster.members.iter().copied());
        }
    }
    let n_static =
        ids.iter().filter(|&&id| scene.scatterer(id).class == ScattererClass::Static).count();
    let n_dynamic = ids.len() - n_static;
    let (_, diffuse) = ricean_shares(cfg.ricean_factor);
    // With no diffuse budget the split is moot; skip it so a pure direct
    // channel works even over an empty scene.
    let shares = if diffuse > 0.0 {
        cfg.split.resolve(n_static, n_dynamic)?
    } else {
        ClassShares { ground: 0.0, static_nlos: 0.0, dynamic_nlos: 0.0 }
    };

    let mut components = Vec::with_capacity(ids.len() + 2);
    components.push(los_component(scene, cfg)?);
    let ground = ground_reflection_component(scene, cfg)?;
    let ground_amp = (diffuse * shares.ground).sqrt();
    components.push(ground.with_amplitude(ground_amp));
    for (&id, share) in ids.iter().zip(normalize_powers(scene, &ids)) {
        let s = scene.scatterer(id);
        let class_share = match s.class {
            ScattererClass::Static => shares.static_nlos,
            ScattererClass::Dynamic => shares.dynamic_nlos,
        };
        let amp = (diffuse * class_share * share).sqrt();
        components.push(nlos_component(scene, s, cfg)?.with_amplitude(amp));
    }
    Ok(CirSnapshot { time: scene.time, q: cfg.window_value(scene.time), components })
}

/// Transfer function of the snapshots over the evaluation frequencies,
/// one row per snapshot. Diffuse paths carry the (f / carrier) tilt; the
/// direct path does not. Gated snapshots produce zero rows.
pub fn tvtf(
    snapshots: &[CirSnapshot],
    freqs: &[f64],
    cfg: &ChannelConfig,
) -> Result<Vec<Vec<Complex64>>, ChannelError> {
    cfg.validate()?;
    for &f in freqs {
        if !(f.is_finite() && f > 0.0) {
            return Err(ChannelError::InvalidFrequency { value: f });
        }
    }
    let mut surface = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let mut row = Vec::with_capacity(freqs.len());
        for &f in freqs {
            let tilt = (f / cfg.carrier_hz).powf(cfg.frequency_exponent);
            let mut h = Complex64::new(0.0, 0.0);
            for c in &snap.components {
                let factor = match c.kind {
                    PathKind::Los => 1.0,
                    _ => tilt,
                };
                h += c.gain * factor * Complex64::from_polar(1.0, -TAU * f * c.delay);
            }
            row.push(h * snap.q);
        }
        surface.push(row);
    }
    Ok(surface)
}
