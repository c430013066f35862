//! Synthetic single-bounce link generators for exercising the fitting
//! pipeline end to end.
//!
//! A scatterer position is overdetermined by the five extracted quantities
//! (excess-path ratio plus four angle ratios), so no single placement can
//! make every family identifiable at once. Each generator here keeps one
//! family subset faithful to the generating table:
//!
//! * [`clustered_links`]: counts and spatial group counts (blob placement),
//! * [`marginal_links`]: excess-path ratios and power-delay pairs,
//! * [`angle_links`]: the departure- or arrival-side angle ratios.

use std::f64::consts::PI;

use super::{LinkRecord, LinkScatterer, MAX_CLUSTER_COUNT};
use crate::geom::Vec3;
use crate::registry::{Distribution, GaussianParams, ParamFamily, ParamTable, ScattererClass, VtdCondition};
use crate::scene::ClusterSide;
use crate::stream::RandomStream;
use crate::SPEED_OF_LIGHT;

const TERMINAL_HEIGHT: f64 = 1.5;

/// Transceiver distances for [`clustered_links`]; short links keep the
/// per-link counts small enough for blob placement.
const CLUSTERED_D_RANGE: (f64, f64) = (20.0, 35.0);

/// Spatial spread of one blob, per axis.
const BLOB_SIGMA: f64 = 0.3;

/// Minimum spacing between blob centers; wide against [`BLOB_SIGMA`] so
/// group counting is unambiguous.
const BLOB_MIN_SEPARATION: f64 = 8.0;

/// Count draw clamped at zero: N = max(0, round(ratio * d_cen)). Unlike
/// redraw truncation this keeps the extracted ratio sample distribution
/// aligned with the generating Logistic law.
fn clamp0_count(dist: &dyn Distribution, d_cen: f64, stream: &mut RandomStream) -> usize {
    let ratio = dist.sample(stream);
    (ratio * d_cen).round().max(0.0) as usize
}

/// One single-bounce scatterer with the table's power-delay law applied at
/// its geometric delay.
fn bounce(
    table: &ParamTable,
    vtd: VtdCondition,
    class: ScattererClass,
    tx: Vec3,
    rx: Vec3,
    position: Vec3,
    stream: &mut RandomStream,
) -> LinkScatterer {
    let delay = (tx.distance(position) + rx.distance(position)) / SPEED_OF_LIGHT;
    let pd = table.power_delay(vtd, class);
    let shadow = GaussianParams::new(0.0, pd.shadow_sigma_db)
        .expect("table shadowing spread is positive")
        .sample(stream);
    LinkScatterer { position, class, power: pd.raw_power(delay, shadow), delay }
}

/// Links whose scatterers form tight, well-separated blobs: the per-class
/// scatterer count and the blob count both follow the table's Logistic
/// laws, so count extraction round-trips.
pub fn clustered_links(
    table: &ParamTable,
    vtd: VtdCondition,
    n_links: usize,
    stream: &mut RandomStream,
) -> Vec<LinkRecord> {
    let jitter = GaussianParams::new(0.0, BLOB_SIGMA).expect("fixed positive spread");
    (0..n_links)
        .map(|_| {
            let d_cen = stream.uniform(CLUSTERED_D_RANGE.0, CLUSTERED_D_RANGE.1);
            let tx = Vec3::new(0.0, 0.0, TERMINAL_HEIGHT);
            let rx = Vec3::new(d_cen, 0.0, TERMINAL_HEIGHT);
            let mut scatterers = Vec::new();
            for class in ScattererClass::ALL {
                let n = clamp0_count(table.scatterer_number(vtd, class), d_cen, stream);
                let k_drawn = clamp0_count(table.cluster_number(vtd, class), d_cen, stream);
                if n == 0 {
                    continue;
                }
                let k = k_drawn.clamp(1, n);
                for (index, center) in separated_centers(k, d_cen, stream).iter().enumerate() {
                    let size = n / k + usize::from(index < n % k);
                    for _ in 0..size {
                        let position = *center
                            + Vec3::new(
                                jitter.sample(stream),
                                jitter.sample(stream),
                                jitter.sample(stream),
                            );
                        scatterers.push(bounce(table, vtd, class, tx, rx, position, stream));
                    }
                }
            }
            LinkRecord::new(tx, rx, scatterers).expect("generated links satisfy the invariants")
        })
        .collect()
}

/// Blob population used by [`cluster_census_links`]; comfortably above the
/// singleton regime where spatial group counting is ill posed.
const CENSUS_FILL: usize = 6;

/// Links built for the group-count families alone: the blob count follows
/// the table's Logistic law (floored at zero, capped at the detector
/// maximum) and every blob holds [`CENSUS_FILL`] scatterers. Decoupling the
/// population from the scatterer-number law keeps each drawn blob count
/// recoverable; see [`clustered_links`] for the converse fixture.
pub fn cluster_census_links(
    table: &ParamTable,
    vtd: VtdCondition,
    n_links: usize,
    stream: &mut RandomStream,
) -> Vec<LinkRecord> {
    let jitter = GaussianParams::new(0.0, BLOB_SIGMA).expect("fixed positive spread");
    (0..n_links)
        .map(|_| {
            let d_cen = stream.uniform(CLUSTERED_D_RANGE.0, CLUSTERED_D_RANGE.1);
            let tx = Vec3::new(0.0, 0.0, TERMINAL_HEIGHT);
            let rx = Vec3::new(d_cen, 0.0, TERMINAL_HEIGHT);
            let mut scatterers = Vec::new();
            for class in ScattererClass::ALL {
                let k = clamp0_count(table.cluster_number(vtd, class), d_cen, stream)
                    .min(MAX_CLUSTER_COUNT);
                for center in separated_centers(k, d_cen, stream) {
                    for _ in 0..CENSUS_FILL {
                        let position = center
                            + Vec3::new(
                                jitter.sample(stream),
                                jitter.sample(stream),
                                jitter.sample(stream),
                            );
                        scatterers.push(bounce(table, vtd, class, tx, rx, position, stream));
                    }
                }
            }
            LinkRecord::new(tx, rx, scatterers).expect("generated links satisfy the invariants")
        })
        .collect()
}

/// Blob centers kept at least [`BLOB_MIN_SEPARATION`] apart by rejection;
/// the attempt budget is generous against the roadside box, the overflow
/// branch merely guarantees termination.
fn separated_centers(k: usize, d_cen: f64, stream: &mut RandomStream) -> Vec<Vec3> {
    let mut centers: Vec<Vec3> = Vec::with_capacity(k);
    let budget = 200 * k;
    let mut attempts = 0;
    while centers.len() < k {
        let candidate = Vec3::new(
            stream.uniform(-10.0, d_cen + 10.0),
            stream.uniform(-25.0, 25.0),
            stream.uniform(0.5, 3.0),
        );
        attempts += 1;
        if attempts > budget
            || centers.iter().all(|c| c.distance(candidate) >= BLOB_MIN_SEPARATION)
        {
            centers.push(candidate);
        }
    }
    centers
}

/// Links with independently drawn excess-path ratios placed on random rays
/// out of the transmitter, so distance extraction returns exactly the
/// drawn ratios and power-delay pairs follow the table's law.
pub fn marginal_links(
    table: &ParamTable,
    vtd: VtdCondition,
    n_links: usize,
    per_class: usize,
    d_cen: f64,
    stream: &mut RandomStream,
) -> Vec<LinkRecord> {
    assert!(d_cen > 0.0, "transceiver distance must be positive");
    let tx = Vec3::new(0.0, 0.0, TERMINAL_HEIGHT);
    let rx = Vec3::new(d_cen, 0.0, TERMINAL_HEIGHT);
    (0..n_links)
        .map(|_| {
            let mut scatterers = Vec::new();
            for class in ScattererClass::ALL {
                for _ in 0..per_class {
                    let excess = table.distance_distribution(vtd, class).sample(stream);
                    let azimuth = stream.uniform(-PI, PI);
                    let elevation = stream.uniform(-0.35, 0.35);
                    let position = ellipse_point(tx, rx, excess, azimuth, elevation);
                    scatterers.push(bounce(table, vtd, class, tx, rx, position, stream));
                }
            }
            LinkRecord::new(tx, rx, scatterers).expect("generated links satisfy the invariants")
        })
        .collect()
}

/// Links whose departure-side (or arrival-side) angles are the drawn
/// Gaussian ratios scaled by the transceiver distance. At a short distance
/// the scaled angles stay within one turn, so extraction inverts the
/// placement and the angle families round-trip.
pub fn angle_links(
    table: &ParamTable,
    vtd: VtdCondition,
    n_links: usize,
    per_class: usize,
    d_cen: f64,
    side: ClusterSide,
    stream: &mut RandomStream,
) -> Vec<LinkRecord> {
    assert!(d_cen > 0.0, "transceiver distance must be positive");
    let tx = Vec3::new(0.0, 0.0, TERMINAL_HEIGHT);
    let rx = Vec3::new(d_cen, 0.0, TERMINAL_HEIGHT);
    let (azimuth_family, elevation_family, origin, other) = match side {
        ClusterSide::TxSide => {
            (ParamFamily::AzimuthDeparture, ParamFamily::ElevationDeparture, tx, rx)
        }
        ClusterSide::RxSide => {
            (ParamFamily::AzimuthArrival, ParamFamily::ElevationArrival, rx, tx)
        }
    };
    (0..n_links)
        .map(|_| {
            let mut scatterers = Vec::new();
            for class in ScattererClass::ALL {
                for _ in 0..per_class {
                    let excess = table.distance_distribution(vtd, class).sample(stream);
                    let azimuth = table.angle(vtd, class, azimuth_family).sample(stream) * d_cen;
                    let elevation =
                        table.angle(vtd, class, elevation_family).sample(stream) * d_cen;
                    let position = ellipse_point(origin, other, excess, azimuth, elevation);
                    scatterers.push(bounce(table, vtd, class, tx, rx, position, stream));
                }
            }
            LinkRecord::new(tx, rx, scatterers).expect("generated links satisfy the invariants")
        })
        .collect()
}

/// The point along the ray (azimuth, elevation) out of `origin` whose legs
/// to `origin` and `other` sum to (excess + 1) times their separation:
/// with 2a the leg sum, d the focal axis, and u the unit ray,
/// r = (4a^2 - |d|^2) / (2 (2a - <u, d>)).
fn ellipse_point(origin: Vec3, other: Vec3, excess: f64, azimuth: f64, elevation: f64) -> Vec3 {
    let axis = other - origin;
    let d = axis.norm();
    let two_a = (excess + 1.0) * d;
    let u = Vec3::from_angles(azimuth, elevation);
    let r = (two_a * two_a - d * d) / (2.0 * (two_a - u.dot(axis)));
    origin + u * r
}
