//! Geometric world of one link: transceivers on piecewise-constant-velocity
//! trajectories, scatterers drawn from a parameter table, and twin clusters
//! that join a departure-side group to an arrival-side group through a
//! virtual link.
//!
//! Each scatterer keeps the raw distribution draws behind its placement so a
//! generated scene can be checked against the generating table, plus a far
//! interaction point near its twin cluster: the physical path runs
//! terminal -> scatterer -> (virtual link) -> far point -> other terminal,
//! and the two geometric legs always sum to (D + 1) times the transceiver
//! distance at birth, where D is the drawn excess-path ratio.

use crate::geom::Vec3;
use crate::registry::{
    Distribution, ExponentialParams, GaussianParams, ParamFamily, ParamTable, PowerDelayParams,
    RegistryError, ScattererClass, VtdCondition,
};
use crate::stream::RandomStream;
use crate::SPEED_OF_LIGHT;
use std::f64::consts::TAU;
use thiserror::Error;

/// Mean of the Exponential law behind virtual-link delays, seconds.
pub const VIRTUAL_DELAY_MEAN: f64 = 80e-9;

/// Range of the split factor that divides a pair's total excess path between
/// its departure-side and arrival-side legs.
pub const SPLIT_FACTOR_RANGE: (f64, f64) = (0.3, 0.7);

/// Dynamic cluster speeds are drawn uniformly within this factor band around
/// the configured per-side mean speed.
pub const SPEED_JITTER_RANGE: (f64, f64) = (0.8, 1.2);

const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("k-means needs at least one cluster")]
    ZeroClusters,
    #[error("k-means cluster count {k} exceeds point count {n}")]
    TooManyClusters { k: usize, n: usize },
    #[error("transceiver positions coincide")]
    ZeroTransceiverDistance,
    #[error("trajectory needs at least one segment")]
    EmptyTrajectory,
    #[error("trajectory segment times must be strictly increasing")]
    UnorderedTrajectory,
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Position and velocity of one terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransceiverState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Piecewise-constant-velocity motion profile: a list of (start time,
/// velocity) segments with strictly increasing start times. Before the first
/// start time the first segment's velocity applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    segments: Vec<(f64, Vec3)>,
}

impl Trajectory {
    pub fn new(segments: Vec<(f64, Vec3)>) -> Result<Self, SceneError> {
        if segments.is_empty() {
            return Err(SceneError::EmptyTrajectory);
        }
        let ordered = segments.windows(2).all(|w| w[0].0 < w[1].0);
        let finite = segments.iter().all(|(t, v)| t.is_finite() && v.is_finite());
        if !ordered || !finite {
            return Err(SceneError::UnorderedTrajectory);
        }
        Ok(Trajectory { segments })
    }

    pub fn constant(velocity: Vec3) -> Self {
        Trajectory { segments: vec![(0.0, velocity)] }
    }

    pub fn segments(&self) -> &[(f64, Vec3)] {
        &self.segments
    }

    /// Velocity in effect at time `t`.
    pub fn velocity_at(&self, t: f64) -> Vec3 {
        let mut velocity = self.segments[0].1;
        for &(start, v) in &self.segments {
            if start <= t {
                velocity = v;
            } else {
                break;
            }
        }
        velocity
    }

    /// Exact displacement accumulated between times `from` and `to`.
    pub fn displacement(&self, from: f64, to: f64) -> Vec3 {
        let mut total = Vec3::ZERO;
        for (i, &(start, velocity)) in self.segments.iter().enumerate() {
            let lo = if i == 0 { from } else { start.max(from) };
            let hi = self.segments.get(i + 1).map_or(to, |next| next.0.min(to));
            if hi > lo {
                total += velocity * (hi - lo);
            }
        }
        total
    }
}

/// Which terminal a cluster hangs off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClusterSide {
    TxSide,
    RxSide,
}

impl ClusterSide {
    pub fn opposite(self) -> ClusterSide {
        match self {
            ClusterSide::TxSide => ClusterSide::RxSide,
            ClusterSide::RxSide => ClusterSide::TxSide,
        }
    }
}

/// Raw distribution draws behind one scatterer: excess-path ratio and the
/// two placement angles (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererDraw {
    pub distance_ratio: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub id: usize,
    pub class: ScattererClass,
    pub position: Vec3,
    /// Equals the owning cluster's velocity; zero for static scatterers.
    pub velocity: Vec3,
    /// Id of the owning cluster.
    pub cluster: usize,
    /// Interaction point near the twin cluster where the opposite leg of
    /// this scatterer's path meets the other terminal.
    pub far_point: Vec3,
    pub draw: ScattererDraw,
    /// Shadow-fading term in dB, frozen at birth.
    pub shadow_db: f64,
    /// Current end-to-end path delay, geometric legs plus virtual link.
    pub delay: f64,
    /// Raw (unnormalized) linear path power at the current delay.
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    pub class: ScattererClass,
    pub side: ClusterSide,
    /// Ids of member scatterers; never empty.
    pub members: Vec<usize>,
    pub centroid: Vec3,
    /// Zero for static clusters; members share this velocity.
    pub velocity: Vec3,
    /// Id of the paired cluster on the opposite side.
    pub twin: usize,
    /// Virtual-link delay shared with the twin, seconds.
    pub virtual_delay: f64,
    /// Split factor shared with the twin: this pair's departure-side legs
    /// take `rho` of each member's total path, arrival-side legs the rest.
    pub rho: f64,
    /// Consecutive snapshots this cluster's pair has spent invisible;
    /// cleared whenever the pair re-enters a visibility region.
    pub invisible_steps: usize,
}

/// Generation knobs the parameter table does not cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub vtd: VtdCondition,
    /// Mean speed of departure-side dynamic clusters, m/s.
    pub mean_dyn_speed_tx: f64,
    /// Mean speed of arrival-side dynamic clusters, m/s.
    pub mean_dyn_speed_rx: f64,
    /// Mean of the exponential virtual-link delay, seconds.
    pub virtual_delay_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub time: f64,
    pub params: SceneParams,
    pub tx: TransceiverState,
    pub rx: TransceiverState,
    pub tx_traj: Trajectory,
    pub rx_traj: Trajectory,
    pub scatterers: Vec<Scatterer>,
    pub clusters: Vec<Cluster>,
    /// Power-delay laws copied from the generating table so path powers can
    /// be refreshed as the geometry evolves.
    pub pd_static: PowerDelayParams,
    pub pd_dynamic: PowerDelayParams,
    pub next_scatterer_id: usize,
    pub next_cluster_id: usize,
}

impl SceneState {
    pub fn vtd(&self) -> VtdCondition {
        self.params.vtd
    }

    pub fn d_cen(&self) -> f64 {
        self.tx.position.distance(self.rx.position)
    }

    /// Cluster with id `id`; ids held by scatterers and twins always resolve.
    pub fn cluster(&self, id: usize) -> &Cluster {
        self.clusters.iter().find(|c| c.id == id).expect("cluster id resolves")
    }

    pub fn scatterer(&self, id: usize) -> &Scatterer {
        self.scatterers.iter().find(|s| s.id == id).expect("scatterer id resolves")
    }

    pub fn power_delay(&self, class: ScattererClass) -> &PowerDelayParams {
        match class {
            ScattererClass::Static => &self.pd_static,
            ScattererClass::Dynamic => &self.pd_dynamic,
        }
    }

    pub fn terminal(&self, side: ClusterSide) -> &TransceiverState {
        match side {
            ClusterSide::TxSide => &self.tx,
            ClusterSide::RxSide => &self.rx,
        }
    }
}

/// Count implied by a sampled ratio at transceiver distance `d_cen`:
/// round(ratio * d_cen), floored at one.
pub fn count_from_ratio(ratio: f64, d_cen: f64) -> usize {
    ((ratio * d_cen).round() as usize).max(1)
}

/// Redraw until the sample is nonnegative. Count ratios are physically
/// nonnegative but their Logistic laws put a few percent of mass below zero.
pub(crate) fn sample_nonneg(dist: &dyn Distribution, stream: &mut RandomStream) -> f64 {
    loop {
        let v = dist.sample(stream);
        if v >= 0.0 {
            return v;
        }
    }
}

/// Draw the placement parameters of one scatterer. Departure-side scatterers
/// use the departure angle laws, arrival-side ones the arrival laws.
pub fn draw_scatterer(
    table: &ParamTable,
    vtd: VtdCondition,
    class: ScattererClass,
    side: ClusterSide,
    stream: &mut RandomStream,
) -> ScattererDraw {
    let distance_ratio = table.distance_distribution(vtd, class).sample(stream);
    let (az_family, el_family) = match side {
        ClusterSide::TxSide => (ParamFamily::AzimuthDeparture, ParamFamily::ElevationDeparture),
        ClusterSide::RxSide => (ParamFamily::AzimuthArrival, ParamFamily::ElevationArrival),
    };
    let azimuth = table.angle(vtd, class, az_family).sample(stream);
    let elevation = table.angle(vtd, class, el_family).sample(stream);
    ScattererDraw { distance_ratio, azimuth, elevation }
}

/// Position a scatterer whose pair splits the total path with factor `rho`:
/// the drawn excess-path ratio fixes a total leg length of
/// (ratio + 1) * d_cen, of which the departure side takes `rho` and the
/// arrival side the rest, each leg leaving its own terminal along the drawn
/// angles.
pub fn place_scatterer(draw: &ScattererDraw, side: ClusterSide, tx: Vec3, rx: Vec3, rho: f64) -> Vec3 {
    let d_cen = tx.distance(rx);
    let (origin, share) = match side {
        ClusterSide::TxSide => (tx, rho),
        ClusterSide::RxSide => (rx, 1.0 - rho),
    };
    origin + Vec3::from_angles(draw.azimuth, draw.elevation) * (share * (draw.distance_ratio + 1.0) * d_cen)
}

/// Far interaction point of a scatterer's path: the remaining leg share,
/// leaving the opposite terminal toward the twin cluster's centroid.
pub(crate) fn far_interaction_point(
    draw: &ScattererDraw,
    side: ClusterSide,
    tx: Vec3,
    rx: Vec3,
    rho: f64,
    twin_centroid: Vec3,
) -> Vec3 {
    let d_cen = tx.distance(rx);
    let (terminal, own) = match side {
        ClusterSide::TxSide => (rx, tx),
        ClusterSide::RxSide => (tx, rx),
    };
    let share = match side {
        ClusterSide::TxSide => 1.0 - rho,
        ClusterSide::RxSide => rho,
    };
    let direction = (twin_centroid - terminal)
        .unit()
        .unwrap_or_else(|| (own - terminal).unit().expect("terminals are distinct"));
    terminal + direction * (share * (draw.distance_ratio + 1.0) * d_cen)
}

/// End-to-end path delay: both geometric legs plus the virtual link. The
/// reduced two-leg representation drops the gap between a scatterer and its
/// far point, so drifting geometry could nominally undercut the direct path;
/// a scattered path can never arrive first, so the delay is floored at the
/// direct-path delay.
pub(crate) fn path_delay(
    position: Vec3,
    far_point: Vec3,
    side: ClusterSide,
    tx: Vec3,
    rx: Vec3,
    virtual_delay: f64,
) -> f64 {
    let (own, other) = match side {
        ClusterSide::TxSide => (tx, rx),
        ClusterSide::RxSide => (rx, tx),
    };
    let geometric = (position.distance(own) + far_point.distance(other)) / SPEED_OF_LIGHT;
    (geometric + virtual_delay).max(tx.distance(rx) / SPEED_OF_LIGHT)
}

/// K-means grouping of `points` into `k` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Kmeans {
    /// Cluster index per point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec3>,
}

/// Lloyd iterations seeded by distance-weighted sampling; converges when the
/// assignment is stable. Deterministic given the stream.
pub fn kmeans(points: &[Vec3], k: usize, stream: &mut RandomStream) -> Result<Kmeans, SceneError> {
    if k == 0 {
        return Err(SceneError::ZeroClusters);
    }
    if k > points.len() {
        return Err(SceneError::TooManyClusters { k, n: points.len() });
    }
    let mut centroids = seed_centroids(points, k, stream);
    let mut assignment = assign_points(points, &centroids);
    for _ in 0..KMEANS_MAX_ITERS {
        centroids = recompute_centroids(points, &assignment, &centroids);
        let next = assign_points(points, &centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(Kmeans { assignment, centroids })
}

/// Distance-weighted seeding: first centre uniform, then each further centre
/// with probability proportional to the squared distance from the nearest
/// chosen centre. Duplicate points can zero every weight, in which case the
/// lowest unchosen index is taken.
fn seed_centroids(points: &[Vec3], k: usize, stream: &mut RandomStream) -> Vec<Vec3> {
    let mut chosen = vec![stream.below(points.len() as u64) as usize];
    let mut dist_sq: Vec<f64> = points.iter().map(|p| (*p - points[chosen[0]]).norm_sq()).collect();
    while chosen.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = stream.uniform01() * total;
            let mut pick = None;
            for (i, &w) in dist_sq.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                target -= w;
                // The last positive weight backstops cumulative rounding.
                pick = Some(i);
                if target <= 0.0 {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= point count")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            dist_sq[i] = dist_sq[i].min((*p - points[next]).norm_sq());
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Nearest centroid per point; ties go to the lowest centroid index.
fn assign_points(points: &[Vec3], centroids: &[Vec3]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = (*p - *c).norm_sq();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Means of the assigned points; an emptied cluster restarts at the point
/// farthest from its own centre so Lloyd cannot stall on a dead centroid.
fn recompute_centroids(points: &[Vec3], assignment: &[usize], prev: &[Vec3]) -> Vec<Vec3> {
    let k = prev.len();
    let mut sum = vec![Vec3::ZERO; k];
    let mut count = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sum[a] += *p;
        count[a] += 1;
    }
    let mut out: Vec<Vec3> = (0..k)
        .map(|j| if count[j] > 0 { sum[j] * (1.0 / count[j] as f64) } else { prev[j] })
        .collect();
    let mut taken = vec![false; points.len()];
    for j in 0..k {
        if count[j] > 0 {
            continue;
        }
        let mut pick = None;
        let mut pick_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = (*p - out[assignment[i]]).norm_sq();
            if d > pick_d {
                pick_d = d;
                pick = Some(i);
            }
        }
        if let Some(i) = pick {
            out[j] = points[i];
            taken[i] = true;
        }
    }
    out
}

/// Generate the world at time zero. Scatterer and cluster-pair counts come
/// from the Logistic number laws scaled by the transceiver distance;
/// positions come from the distance and angle laws via `place_scatterer`;
/// each side's scatterers are k-means grouped and the two sides' groups are
/// paired by a uniform shuffle, each pair sharing a virtual-link delay and a
/// split factor.
pub fn init_scene(
    table: &ParamTable,
    params: &SceneParams,
    tx_pos: Vec3,
    rx_pos: Vec3,
    tx_traj: Trajectory,
    rx_traj: Trajectory,
    stream: &mut RandomStream,
) -> Result<SceneState, SceneError> {
    let d_cen = tx_pos.distance(rx_pos);
    if !(d_cen > 0.0) {
        return Err(SceneError::ZeroTransceiverDistance);
    }
    assert!(
        params.mean_dyn_speed_tx >= 0.0 && params.mean_dyn_speed_rx >= 0.0,
        "mean cluster speeds must be nonnegative"
    );
    let tx = TransceiverState { position: tx_pos, velocity: tx_traj.velocity_at(0.0) };
    let rx = TransceiverState { position: rx_pos, velocity: rx_traj.velocity_at(0.0) };
    let mut scene = SceneState {
        time: 0.0,
        params: *params,
        tx,
        rx,
        tx_traj,
        rx_traj,
        scatterers: Vec::new(),
        clusters: Vec::new(),
        pd_static: *table.power_delay(params.vtd, ScattererClass::Static),
        pd_dynamic: *table.power_delay(params.vtd, ScattererClass::Dynamic),
        next_scatterer_id: 0,
        next_cluster_id: 0,
    };
    for class in ScattererClass::ALL {
        populate_class(&mut scene, table, params, class, stream)?;
    }
    Ok(scene)
}

fn populate_class(
    scene: &mut SceneState,
    table: &ParamTable,
    params: &SceneParams,
    class: ScattererClass,
    stream: &mut RandomStream,
) -> Result<(), SceneError> {
    let vtd = params.vtd;
    let tx = scene.tx.position;
    let rx = scene.rx.position;
    let d_cen = scene.d_cen();

    let n_total = count_from_ratio(sample_nonneg(table.scatterer_number(vtd, class), stream), d_cen);
    let pair_target = count_from_ratio(sample_nonneg(table.cluster_number(vtd, class), stream), d_cen);
    // Every cluster needs a twin on the opposite side, so each side keeps at
    // least one scatterer even when the sampled count rounds down to one.
    let side_counts = [(n_total.div_ceil(2)).max(1), (n_total / 2).max(1)];

    let sides = [ClusterSide::TxSide, ClusterSide::RxSide];
    let draws: [Vec<ScattererDraw>; 2] = [
        (0..side_counts[0]).map(|_| draw_scatterer(table, vtd, class, sides[0], stream)).collect(),
        (0..side_counts[1]).map(|_| draw_scatterer(table, vtd, class, sides[1], stream)).collect(),
    ];

    // Group on provisional positions at an even split; only the membership
    // matters here, and rescaling members along their own rays later cannot
    // split a group.
    let pairs = pair_target.min(side_counts[0]).min(side_counts[1]);
    let groupings: [Kmeans; 2] = [
        {
            let pts: Vec<Vec3> = draws[0].iter().map(|d| place_scatterer(d, sides[0], tx, rx, 0.5)).collect();
            kmeans(&pts, pairs, stream)?
        },
        {
            let pts: Vec<Vec3> = draws[1].iter().map(|d| place_scatterer(d, sides[1], tx, rx, 0.5)).collect();
            kmeans(&pts, pairs, stream)?
        },
    ];

    // Pair the two sides' groups by a uniform shuffle: departure group p is
    // twinned with arrival group rx_for_tx[p].
    let mut rx_for_tx: Vec<usize> = (0..pairs).collect();
    stream.shuffle(&mut rx_for_tx);
    let mut pair_of_rx = vec![0usize; pairs];
    for (p, &q) in rx_for_tx.iter().enumerate() {
        pair_of_rx[q] = p;
    }

    let virtual_dist = ExponentialParams::from_mean(params.virtual_delay_mean)?;
    let mut virtual_delay = vec![0.0; pairs];
    let mut rho = vec![0.0; pairs];
    for p in 0..pairs {
        virtual_delay[p] = virtual_dist.sample(stream);
        rho[p] = stream.uniform(SPLIT_FACTOR_RANGE.0, SPLIT_FACTOR_RANGE.1);
    }

    let mut velocities = [vec![Vec3::ZERO; pairs], vec![Vec3::ZERO; pairs]];
    if class == ScattererClass::Dynamic {
        let means = [params.mean_dyn_speed_tx, params.mean_dyn_speed_rx];
        for side in 0..2 {
            for v in velocities[side].iter_mut() {
                let speed = stream.uniform(SPEED_JITTER_RANGE.0, SPEED_JITTER_RANGE.1) * means[side];
                let heading = stream.uniform(0.0, TAU);
                *v = Vec3::new(speed * heading.cos(), speed * heading.sin(), 0.0);
            }
        }
    }

    let pd = table.power_delay(vtd, class);
    let shadow_dist = GaussianParams::new(0.0, pd.shadow_sigma_db)?;
    let shadows: [Vec<f64>; 2] = [
        (0..side_counts[0]).map(|_| shadow_dist.sample(stream)).collect(),
        (0..side_counts[1]).map(|_| shadow_dist.sample(stream)).collect(),
    ];

    // Randomness is spent; build final positions, then centroids, then the
    // far interaction points that need the twin centroids.
    let scatterer_base = scene.next_scatterer_id;
    let id_offsets = [0, side_counts[0]];
    let pair_of_group = |side: usize, group: usize| if side == 0 { group } else { pair_of_rx[group] };

    let positions: [Vec<Vec3>; 2] = [0, 1].map(|side| {
        draws[side]
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let pair = pair_of_group(side, groupings[side].assignment[i]);
                place_scatterer(d, sides[side], tx, rx, rho[pair])
            })
            .collect()
    });

    let members: [Vec<Vec<usize>>; 2] = [0, 1].map(|side| {
        let mut m = vec![Vec::new(); pairs];
        for (i, &g) in groupings[side].assignment.iter().enumerate() {
            m[g].push(scatterer_base + id_offsets[side] + i);
        }
        m
    });
    let centroids: [Vec<Vec3>; 2] = [0, 1].map(|side| {
        (0..pairs)
            .map(|g| {
                let mut sum = Vec3::ZERO;
                for (i, &a) in groupings[side].assignment.iter().enumerate() {
                    if a == g {
                        sum += positions[side][i];
                    }
                }
                sum * (1.0 / members[side][g].len() as f64)
            })
            .collect()
    });

    let cluster_base = scene.next_cluster_id;
    let cluster_id = |side: usize, group: usize| cluster_base + side * pairs + group;

    for side in 0..2 {
        for (i, draw) in draws[side].iter().enumerate() {
            let group = groupings[side].assignment[i];
            let pair = pair_of_group(side, group);
            let twin_group = if side == 0 { rx_for_tx[pair] } else { pair };
            let twin_centroid = centroids[1 - side][twin_group];
            let far_point = far_interaction_point(draw, sides[side], tx, rx, rho[pair], twin_centroid);
            let delay = path_delay(positions[side][i], far_point, sides[side], tx, rx, virtual_delay[pair]);
            scene.scatterers.push(Scatterer {
                id: scatterer_base + id_offsets[side] + i,
                class,
                position: positions[side][i],
                velocity: velocities[side][group],
                cluster: cluster_id(side, group),
                far_point,
                draw: *draw,
                shadow_db: shadows[side][i],
                delay,
                power: pd.raw_power(delay, shadows[side][i]),
            });
        }
    }
    for side in 0..2 {
        for group in 0..pairs {
            let pair = pair_of_group(side, group);
            let twin_group = if side == 0 { rx_for_tx[pair] } else { pair };
            scene.clusters.push(Cluster {
                id: cluster_id(side, group),
                class,
                side: sides[side],
                members: members[side][group].clone(),
                centroid: centroids[side][group],
                velocity: velocities[side][group],
                twin: cluster_id(1 - side, twin_group),
                virtual_delay: virtual_delay[pair],
                rho: rho[pair],
                invisible_steps: 0,
            });
        }
    }
    scene.next_scatterer_id += side_counts[0] + side_counts[1];
    scene.next_cluster_id += 2 * pairs;
    Ok(())
}

/// Advance the world by `dt` seconds: integrate the terminal trajectories,
/// move dynamic scatterers and their far points with their cluster (and twin
/// cluster) velocities, recompute centroids, and refresh path delays and
/// powers from the new geometry. Static scatterers do not move.
pub fn advance(scene: &SceneState, dt: f64) -> SceneState {
    assert!(dt > 0.0, "advance needs a positive step");
    let mut next = scene.clone();
    let t0 = scene.time;
    let t1 = t0 + dt;
    next.time = t1;
    next.tx.position = scene.tx.position + scene.tx_traj.displacement(t0, t1);
    next.tx.velocity = scene.tx_traj.velocity_at(t1);
    next.rx.position = scene.rx.position + scene.rx_traj.displacement(t0, t1);
    next.rx.velocity = scene.rx_traj.velocity_at(t1);

    for s in next.scatterers.iter_mut() {
        s.position += s.velocity * dt;
        let twin_velocity = scene.cluster(scene.cluster(s.cluster).twin).velocity;
        s.far_point += twin_velocity * dt;
    }
    for c in next.clusters.iter_mut() {
        let mut sum = Vec3::ZERO;
        for &m in &c.members {
            sum += next.scatterers.iter().find(|s| s.id == m).expect("member id resolves").position;
        }
        c.centroid = sum * (1.0 / c.members.len() as f64);
    }
    refresh_paths(&mut next);
    next
}

/// Recompute every scatterer's delay and raw power from current geometry.
pub(crate) fn refresh_paths(scene: &mut SceneState) {
    let tx = scene.tx.position;
    let rx = scene.rx.position;
    let info: Vec<(ClusterSide, f64)> = scene
        .scatterers
        .iter()
        .map(|s| {
            let c = scene.cluster(s.cluster);
            (c.side, c.virtual_delay)
        })
        .collect();
    for (s, (side, virtual_delay)) in scene.scatterers.iter_mut().zip(info) {
        s.delay = path_delay(s.position, s.far_point, side, tx, rx, virtual_delay);
        let pd = match s.class {
            ScattererClass::Static => &scene.pd_static,
            ScattererClass::Dynamic => &scene.pd_dynamic,
        };
        s.power = pd.raw_power(s.delay, s.shadow_db);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{builtin_table, LogisticParams};

    fn stream(seed: u64) -> RandomStream {
        RandomStream::from_seed(seed)
    }

    fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mut worst: f64 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let f = cdf(x);
            worst = worst.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        worst
    }

    fn high_params() -> SceneParams {
        SceneParams {
            vtd: VtdCondition::High,
            mean_dyn_speed_tx: 8.0,
            mean_dyn_speed_rx: 8.0,
            virtual_delay_mean: VIRTUAL_DELAY_MEAN,
        }
    }

    fn scene_at(seed: u64, d_cen: f64, params: &SceneParams) -> SceneState {
        let table = builtin_table();
        init_scene(
            &table,
            params,
            Vec3::new(0.0, 0.0, 1.5),
            Vec3::new(d_cen, 0.0, 1.5),
            Trajectory::constant(Vec3::ZERO),
            Trajectory::constant(Vec3::ZERO),
            &mut stream(seed),
        )
        .unwrap()
    }

    fn check_structure(scene: &SceneState) {
        for class in ScattererClass::ALL {
            let tx_clusters: Vec<&Cluster> = scene
                .clusters
                .iter()
                .filter(|c| c.class == class && c.side == ClusterSide::TxSide)
                .collect();
            let rx_clusters: Vec<&Cluster> = scene
                .clusters
                .iter()
                .filter(|c| c.class == class && c.side == ClusterSide::RxSide)
                .collect();
            assert_eq!(tx_clusters.len(), rx_clusters.len());
            assert!(!tx_clusters.is_empty());
            for c in tx_clusters.iter().chain(&rx_clusters) {
                assert!(!c.members.is_empty());
                let twin = scene.cluster(c.twin);
                assert_eq!(twin.twin, c.id, "twin pairing is an involution");
                assert_eq!(twin.side, c.side.opposite());
                assert_eq!(twin.class, c.class);
                assert_eq!(twin.virtual_delay, c.virtual_delay);
                assert_eq!(twin.rho, c.rho);
                for &m in &c.members {
                    let s = scene.scatterer(m);
                    assert_eq!(s.cluster, c.id);
                    assert_eq!(s.class, c.class);
                    assert_eq!(s.velocity, c.velocity);
                }
                if class == ScattererClass::Static {
                    assert_eq!(c.velocity, Vec3::ZERO);
                }
            }
        }
        let member_total: usize = scene.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(member_total, scene.scatterers.len(), "clusters partition the scatterers");
        let d_cen = scene.d_cen();
        for s in &scene.scatterers {
            assert!(s.delay >= d_cen / SPEED_OF_LIGHT);
            assert!(s.power > 0.0);
        }
    }

    #[test]
    fn kmeans_recovers_two_separated_blobs() {
        let mut st = stream(11);
        let mut points = Vec::new();
        for i in 0..30 {
            let centre = if i < 15 { Vec3::ZERO } else { Vec3::new(50.0, 10.0, 0.0) };
            points.push(centre + Vec3::new(st.uniform(-1.0, 1.0), st.uniform(-1.0, 1.0), st.uniform(-1.0, 1.0)));
        }
        let got = kmeans(&points, 2, &mut st).unwrap();
        let first = got.assignment[0];
        for (i, &a) in got.assignment.iter().enumerate() {
            if i < 15 {
                assert_eq!(a, first);
            } else {
                assert_ne!(a, first);
            }
        }
    }

    #[test]
    fn kmeans_single_cluster_centroid_is_mean() {
        let points = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(3.0, 2.0, 1.0), Vec3::new(2.0, 5.0, 2.0)];
        let got = kmeans(&points, 1, &mut stream(4)).unwrap();
        assert_eq!(got.assignment, vec![0, 0, 0]);
        assert_eq!(got.centroids[0], Vec3::new(2.0, 3.0, 2.0));
    }

    #[test]
    fn kmeans_one_cluster_per_point() {
        let points: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64 * 3.0, 0.0, 0.0)).collect();
        let got = kmeans(&points, 6, &mut stream(9)).unwrap();
        let mut seen = got.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        for (i, &a) in got.assignment.iter().enumerate() {
            assert_eq!(got.centroids[a], points[i]);
        }
    }

    #[test]
    fn kmeans_rejects_more_clusters_than_points() {
        let points = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)];
        match kmeans(&points, 3, &mut stream(0)) {
            Err(SceneError::TooManyClusters { k: 3, n: 2 }) => {}
            other => panic!("expected TooManyClusters, got {other:?}"),
        }
        assert!(matches!(kmeans(&points, 0, &mut stream(0)), Err(SceneError::ZeroClusters)));
    }

    #[test]
    fn kmeans_is_deterministic_for_a_seed() {
        let mut st = stream(21);
        let points: Vec<Vec3> =
            (0..40).map(|_| Vec3::new(st.uniform(0.0, 30.0), st.uniform(0.0, 30.0), 0.0)).collect();
        let a = kmeans(&points, 5, &mut stream(33)).unwrap();
        let b = kmeans(&points, 5, &mut stream(33)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_rejects_unordered_segments() {
        assert!(matches!(
            Trajectory::new(vec![(0.0, Vec3::ZERO), (0.0, Vec3::ZERO)]),
            Err(SceneError::UnorderedTrajectory)
        ));
        assert!(matches!(Trajectory::new(vec![]), Err(SceneError::EmptyTrajectory)));
    }

    #[test]
    fn trajectory_integrates_across_segment_boundaries() {
        let traj = Trajectory::new(vec![(0.0, Vec3::new(1.0, 0.0, 0.0)), (2.0, Vec3::new(0.0, 1.0, 0.0))]).unwrap();
        assert_eq!(traj.displacement(1.0, 3.0), Vec3::new(1.0, 1.0, 0.0));
        assert_eq!(traj.velocity_at(5.0), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(traj.velocity_at(-1.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(traj.displacement(-1.0, 1.0), Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn count_rule_floors_at_one() {
        assert_eq!(count_from_ratio(0.0, 100.0), 1);
        assert_eq!(count_from_ratio(0.004, 100.0), 1);
        assert_eq!(count_from_ratio(0.45, 100.0), 45);
    }

    #[test]
    fn lone_scatterer_class_still_builds_a_twin_pair() {
        // At a short link every count rounds to its floor; both sides must
        // still end up populated so each cluster has a twin.
        let params = SceneParams { vtd: VtdCondition::Low, ..high_params() };
        let scene = scene_at(5, 0.8, &params);
        check_structure(&scene);
        for class in ScattererClass::ALL {
            let n = scene.scatterers.iter().filter(|s| s.class == class).count();
            assert_eq!(n, 2, "floor count is one scatterer per side");
        }
    }

    #[test]
    fn same_seed_rebuilds_identical_scene() {
        let a = scene_at(1234, 80.0, &high_params());
        let b = scene_at(1234, 80.0, &high_params());
        assert_eq!(a, b);
        let c = scene_at(1235, 80.0, &high_params());
        assert_ne!(a, c);
    }

    #[test]
    fn scene_structure_holds_across_seeds_and_vtds() {
        for vtd in VtdCondition::ALL {
            for seed in 0..20 {
                let params = SceneParams { vtd, ..high_params() };
                check_structure(&scene_at(seed, 60.0, &params));
            }
        }
    }

    #[test]
    fn placed_legs_reproduce_the_drawn_distance_ratio() {
        for seed in 0..30 {
            let scene = scene_at(seed, 80.0, &high_params());
            let d_cen = scene.d_cen();
            for s in &scene.scatterers {
                let side = scene.cluster(s.cluster).side;
                let (own, other) = match side {
                    ClusterSide::TxSide => (scene.tx.position, scene.rx.position),
                    ClusterSide::RxSide => (scene.rx.position, scene.tx.position),
                };
                let legs = s.position.distance(own) + s.far_point.distance(other);
                let recovered = (legs - d_cen) / d_cen;
                assert!(
                    (recovered - s.draw.distance_ratio).abs() < 1e-9,
                    "leg sum must equal (D + 1) * d_cen: {recovered} vs {}",
                    s.draw.distance_ratio
                );
            }
        }
    }

    #[test]
    fn degenerate_draw_lands_midway_on_the_los_ray() {
        let draw = ScattererDraw { distance_ratio: 0.0, azimuth: 0.0, elevation: 0.0 };
        let tx = Vec3::ZERO;
        let rx = Vec3::new(100.0, 0.0, 0.0);
        assert_eq!(place_scatterer(&draw, ClusterSide::TxSide, tx, rx, 0.5), Vec3::new(50.0, 0.0, 0.0));
    }

    #[test]
    fn placement_range_follows_the_split_factor() {
        let table = builtin_table();
        let mut st = stream(77);
        let tx = Vec3::new(-3.0, 2.0, 1.0);
        let rx = Vec3::new(55.0, -9.0, 1.4);
        let d_cen = tx.distance(rx);
        for _ in 0..50 {
            let draw = draw_scatterer(&table, VtdCondition::Medium, ScattererClass::Static, ClusterSide::TxSide, &mut st);
            let rho = st.uniform(0.3, 0.7);
            let pos = place_scatterer(&draw, ClusterSide::TxSide, tx, rx, rho);
            let want = rho * (draw.distance_ratio + 1.0) * d_cen;
            assert!((pos.distance(tx) - want).abs() < 1e-9 * want.max(1.0));
            let arr = place_scatterer(&draw, ClusterSide::RxSide, tx, rx, rho);
            let want_arr = (1.0 - rho) * (draw.distance_ratio + 1.0) * d_cen;
            assert!((arr.distance(rx) - want_arr).abs() < 1e-9 * want_arr.max(1.0));
        }
    }

    /// Exact expectation of the scatterer count for one class: the ratio is
    /// a Logistic draw redrawn until nonnegative, the count rounds and floors
    /// at one, and a count of one is lifted to two so both sides hold a
    /// scatterer.
    fn expected_class_count(law: &LogisticParams, d_cen: f64) -> f64 {
        let cdf = |x: f64| 1.0 / (1.0 + (-(x - law.mu) / law.scale).exp());
        let keep = 1.0 - cdf(0.0);
        let mut expected = 0.0;
        for n in 0..100_000u64 {
            let lo = if n == 0 { 0.0 } else { (n as f64 - 0.5) / d_cen };
            let hi = (n as f64 + 0.5) / d_cen;
            let w = (cdf(hi) - cdf(lo)).max(0.0) / keep;
            let count = if n <= 1 { 2.0 } else { n as f64 };
            expected += w * count;
            if n as f64 > (law.mu + 40.0 * law.scale) * d_cen {
                break;
            }
        }
        expected
    }

    #[test]
    fn mean_static_count_matches_the_sampling_rule() {
        let table = builtin_table();
        let params = high_params();
        let d_cen = 100.0;
        let counts: Vec<f64> = (0..1000)
            .map(|seed| {
                let scene = scene_at(seed, d_cen, &params);
                scene.scatterers.iter().filter(|s| s.class == ScattererClass::Static).count() as f64
            })
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expected = expected_class_count(table.scatterer_number(VtdCondition::High, ScattererClass::Static), d_cen);
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
        // Nonnegativity redraws lift the mean a few counts above mu * d_cen
        // (48.01 against a nominal 45).
        assert!((expected - 45.0).abs() < 4.5, "expected {expected} should sit near 45");
    }

    #[test]
    fn regenerated_draws_match_the_generating_laws() {
        let table = builtin_table();
        let params = high_params();
        let mut static_distance = Vec::new();
        let mut dynamic_distance = Vec::new();
        let mut static_departure_azimuth = Vec::new();
        let mut dynamic_arrival_elevation = Vec::new();
        for seed in 0..1000 {
            let scene = scene_at(seed, 100.0, &params);
            for s in &scene.scatterers {
                let side = scene.cluster(s.cluster).side;
                match s.class {
                    ScattererClass::Static => {
                        static_distance.push(s.draw.distance_ratio);
                        if side == ClusterSide::TxSide {
                            static_departure_azimuth.push(s.draw.azimuth);
                        }
                    }
                    ScattererClass::Dynamic => {
                        dynamic_distance.push(s.draw.distance_ratio);
                        if side == ClusterSide::RxSide {
                            dynamic_arrival_elevation.push(s.draw.elevation);
                        }
                    }
                }
            }
        }
        let vtd = VtdCondition::High;
        let checks: [(&mut Vec<f64>, Box<dyn Fn(f64) -> f64>); 4] = [
            (&mut static_distance, {
                let d = *table.static_distance(vtd);
                Box::new(move |x| d.cdf(x))
            }),
            (&mut dynamic_distance, {
                let d = *table.dynamic_distance(vtd);
                Box::new(move |x| d.cdf(x))
            }),
            (&mut static_departure_azimuth, {
                let d = *table.angle(vtd, ScattererClass::Static, ParamFamily::AzimuthDeparture);
                Box::new(move |x| d.cdf(x))
            }),
            (&mut dynamic_arrival_elevation, {
                let d = *table.angle(vtd, ScattererClass::Dynamic, ParamFamily::ElevationArrival);
                Box::new(move |x| d.cdf(x))
            }),
        ];
        for (samples, cdf) in checks {
            assert!(samples.len() > 10_000, "pooled draws should be plentiful");
            let ks = ks_statistic(samples, cdf);
            assert!(ks < 0.05, "ks {ks} too large for {} samples", samples.len());
        }
    }

    #[test]
    fn advance_with_everything_at_rest_only_moves_time() {
        let params = SceneParams {
            vtd: VtdCondition::Low,
            mean_dyn_speed_tx: 0.0,
            mean_dyn_speed_rx: 0.0,
            virtual_delay_mean: VIRTUAL_DELAY_MEAN,
        };
        let scene = scene_at(8, 40.0, &params);
        let mut stepped = advance(&scene, 0.25);
        assert_eq!(stepped.time, 0.25);
        stepped.time = scene.time;
        assert_eq!(stepped, scene);
    }

    #[test]
    fn advance_integrates_terminal_velocities() {
        let table = builtin_table();
        let params = high_params();
        let scene = init_scene(
            &table,
            &params,
            Vec3::ZERO,
            Vec3::new(100.0, 0.0, 0.0),
            Trajectory::constant(Vec3::ZERO),
            Trajectory::constant(Vec3::new(5.0, 0.0, 0.0)),
            &mut stream(2),
        )
        .unwrap();
        let stepped = advance(&scene, 1.0);
        assert_eq!(stepped.rx.position, Vec3::new(105.0, 0.0, 0.0));
        assert_eq!(stepped.tx.position, Vec3::ZERO);
        assert_eq!(stepped.d_cen(), 105.0);
    }

    #[test]
    fn advance_composes_over_dyadic_steps() {
        let table = builtin_table();
        let params = SceneParams {
            vtd: VtdCondition::Medium,
            mean_dyn_speed_tx: 0.0,
            mean_dyn_speed_rx: 0.0,
            virtual_delay_mean: VIRTUAL_DELAY_MEAN,
        };
        let scene = init_scene(
            &table,
            &params,
            Vec3::ZERO,
            Vec3::new(64.0, 0.0, 0.0),
            Trajectory::constant(Vec3::new(2.0, 0.0, 0.0)),
            Trajectory::constant(Vec3::new(-4.0, 0.5, 0.0)),
            &mut stream(3),
        )
        .unwrap();
        let two_steps = advance(&advance(&scene, 0.25), 0.5);
        let one_step = advance(&scene, 0.75);
        assert_eq!(two_steps, one_step);
    }

    #[test]
    fn advance_moves_dynamic_scatterers_with_their_cluster() {
        let scene = scene_at(17, 50.0, &high_params());
        let dt = 0.5;
        let stepped = advance(&scene, dt);
        check_structure(&stepped);
        for (before, after) in scene.scatterers.iter().zip(&stepped.scatterers) {
            assert_eq!(after.id, before.id);
            match before.class {
                ScattererClass::Static => {
                    assert_eq!(after.position, before.position);
                    assert_eq!(after.far_point, before.far_point);
                }
                ScattererClass::Dynamic => {
                    assert_eq!(after.position, before.position + before.velocity * dt);
                    let twin_velocity = scene.cluster(scene.cluster(before.cluster).twin).velocity;
                    assert_eq!(after.far_point, before.far_point + twin_velocity * dt);
                }
            }
            let side = scene.cluster(before.cluster).side;
            let expect_delay = path_delay(
                after.position,
                after.far_point,
                side,
                stepped.tx.position,
                stepped.rx.position,
                scene.cluster(before.cluster).virtual_delay,
            );
            assert_eq!(after.delay, expect_delay);
            let pd = scene.power_delay(before.class);
            assert_eq!(after.power, pd.raw_power(expect_delay, before.shadow_db));
        }
        for c in &stepped.clusters {
            let mut sum = Vec3::ZERO;
            for &m in &c.members {
                sum += stepped.scatterer(m).position;
            }
            assert_eq!(c.centroid, sum * (1.0 / c.members.len() as f64));
        }
    }

    #[test]
    fn init_rejects_coincident_terminals() {
        let table = builtin_table();
        let got = init_scene(
            &table,
            &high_params(),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Trajectory::constant(Vec3::ZERO),
            Trajectory::constant(Vec3::ZERO),
            &mut stream(0),
        );
        assert!(matches!(got, Err(SceneError::ZeroTransceiverDistance)));
    }
}
