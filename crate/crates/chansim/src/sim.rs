//! Snapshot-by-snapshot realization driver.
//!
//! One realization walks a scene through time: each step advances the
//! geometry, runs one visibility-and-replenishment pass, and assembles
//! the impulse response. Per-path carrier phases are accumulated as the
//! trapezoidal integral of the path Doppler across snapshots, seeded with
//! the geometric phase at the path's first appearance, so consecutive
//! snapshots stay phase consistent no matter how clusters come and go.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::channel::{assemble_cir, ChannelConfig, ChannelError, CirSnapshot, PathComponent};
use crate::evolution::{step, EvolutionError, StepReport, VisibilityFactor};
use crate::registry::{ParamTable, VtdCondition};
use crate::scene::{advance, init_scene, SceneError, SceneParams, SceneState, Trajectory};
use crate::stream::RandomStream;
use crate::geom::Vec3;
use std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("snapshot step must be positive and finite, got {value}")]
    InvalidStep { value: f64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Terminal motion and traffic description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub vtd: VtdCondition,
    pub tx_start: Vec3,
    pub rx_start: Vec3,
    pub tx_trajectory: Trajectory,
    pub rx_trajectory: Trajectory,
    /// Mean speed of departure-side dynamic clusters, m/s.
    pub mean_dyn_speed_tx: f64,
    /// Mean speed of arrival-side dynamic clusters, m/s.
    pub mean_dyn_speed_rx: f64,
}

/// Identity of a phase-tracked path across snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PathKey {
    Los,
    Ground,
    Bounce(usize),
}

fn key_of(component: &PathComponent) -> PathKey {
    match component.scatterer {
        Some(id) => PathKey::Bounce(id),
        None => match component.kind {
            crate::channel::PathKind::GroundReflection => PathKey::Ground,
            _ => PathKey::Los,
        },
    }
}

#[derive(Debug, Clone, Copy)]
struct PhaseTrack {
    phase: f64,
    doppler_hz: f64,
}

/// One evolving channel realization.
#[derive(Debug, Clone)]
pub struct Realization {
    table: ParamTable,
    cfg: ChannelConfig,
    eps: VisibilityFactor,
    stream: RandomStream,
    scene: SceneState,
    report: StepReport,
    tracks: BTreeMap<PathKey, PhaseTrack>,
    /// Time of the snapshot the tracks belong to.
    prev_time: f64,
}

impl Realization {
    /// Generate the time-zero world and run the first visibility pass.
    pub fn new(
        table: &ParamTable,
        scenario: &Scenario,
        cfg: &ChannelConfig,
        eps: VisibilityFactor,
        mut stream: RandomStream,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = SceneParams {
            vtd: scenario.vtd,
            mean_dyn_speed_tx: scenario.mean_dyn_speed_tx,
            mean_dyn_speed_rx: scenario.mean_dyn_speed_rx,
            virtual_delay_mean: cfg.virtual_delay_mean,
        };
        let scene = init_scene(
            table,
            &params,
            scenario.tx_start,
            scenario.rx_start,
            scenario.tx_trajectory.clone(),
            scenario.rx_trajectory.clone(),
            &mut stream,
        )?;
        let (scene, report) = step(&scene, table, &eps, &mut stream)?;
        let prev_time = scene.time;
        Ok(Realization {
            table: table.clone(),
            cfg: *cfg,
            eps,
            stream,
            scene,
            report,
            tracks: BTreeMap::new(),
            prev_time,
        })
    }

    pub fn time(&self) -> f64 {
        self.scene.time
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    /// Visibility outcome of the latest evolution pass.
    pub fn visibility(&self) -> &StepReport {
        &self.report
    }

    /// Impulse response at the current time, with accumulated phases.
    /// Paths seen for the first time keep their geometric phase; paths
    /// surviving from the previous snapshot get the previous phase plus
    /// the trapezoidal Doppler increment, which the geometry-driven
    /// Doppler makes consistent with the path-length change.
    pub fn snapshot(&mut self) -> Result<CirSnapshot, SimError> {
        let mut snap = assemble_cir(&self.scene, &self.report, &self.cfg)?;
        let dt = self.scene.time - self.prev_time;
        let mut next_tracks = BTreeMap::new();
        for component in snap.components.iter_mut() {
            let key = key_of(component);
            let phase = match self.tracks.get(&key) {
                Some(track) => {
                    track.phase + TAU * 0.5 * (track.doppler_hz + component.doppler_hz) * dt
                }
                None => component.phase,
            };
            *component = component.with_phase(phase);
            next_tracks.insert(key, PhaseTrack { phase, doppler_hz: component.doppler_hz });
        }
        // Paths absent from this snapshot are forgotten; if a pair
        // returns from grace it restarts at its geometric phase.
        self.tracks = next_tracks;
        self.prev_time = self.scene.time;
        Ok(snap)
    }

    /// Move the geometry by `dt` and run one evolution pass.
    pub fn advance(&mut self, dt: f64) -> Result<(), SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::InvalidStep { value: dt });
        }
        let moved = advance(&self.scene, dt);
        let (scene, report) = step(&moved, &self.table, &self.eps, &mut self.stream)?;
        self.scene = scene;
        self.report = report;
        Ok(())
    }

    /// Convenience loop: `count` snapshots spaced `dt` apart from the
    /// current time.
    pub fn run(&mut self, count: usize, dt: f64) -> Result<Vec<CirSnapshot>, SimError> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            if i > 0 {
                self.advance(dt)?;
            }
            out.push(self.snapshot()?);
        }
        Ok(out)
    }
}
