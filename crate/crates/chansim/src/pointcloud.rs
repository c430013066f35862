//! LiDAR ingestion: frame alignment into the global frame, ground
//! removal, density clustering, object classification, and scatterer
//! labeling.
//!
//! All transformations are pure, so frames can be processed in parallel
//! by callers without shared state.

use crate::geom::Vec3;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("unknown heading {0:?} (expected +x, -x, +y, or -y)")]
    BadHeading(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sensor motion direction; the mounting convention differs per axis, so
/// alignment needs the heading, not just the position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Heading {
    pub fn parse(s: &str) -> Result<Self, PointCloudError> {
        match s {
            "+x" => Ok(Heading::PosX),
            "-x" => Ok(Heading::NegX),
            "+y" => Ok(Heading::PosY),
            "-y" => Ok(Heading::NegY),
            other => Err(PointCloudError::BadHeading(other.to_owned())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Heading::PosX => "+x",
            Heading::NegX => "-x",
            Heading::PosY => "+y",
            Heading::NegY => "-y",
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sensor position and motion direction at a frame timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: Vec3,
    pub heading: Heading,
}

/// One captured frame: points in sensor-relative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub timestamp: f64,
    pub points: Vec<Vec3>,
}

/// Maps one sensor-relative point into the global frame. The vertical
/// axis flips for every heading; the horizontal axes swap when the
/// sensor moves along y.
pub fn align_point(p: Vec3, pose: &SensorPose) -> Vec3 {
    let s = pose.position;
    match pose.heading {
        Heading::PosX => Vec3::new(p.x + s.x, -p.y - s.y, -p.z - s.z),
        Heading::NegX => Vec3::new(-p.x + s.x, p.y + s.y, -p.z - s.z),
        Heading::PosY => Vec3::new(p.y + s.x, p.x + s.y, -p.z - s.z),
        Heading::NegY => Vec3::new(-p.y + s.x, -p.x + s.y, -p.z - s.z),
    }
}

/// Inverse of [`align_point`] for the same pose.
pub fn invert_alignment(g: Vec3, pose: &SensorPose) -> Vec3 {
    let s = pose.position;
    match pose.heading {
        Heading::PosX => Vec3::new(g.x - s.x, -g.y - s.y, -g.z - s.z),
        Heading::NegX => Vec3::new(s.x - g.x, g.y - s.y, -g.z - s.z),
        Heading::PosY => Vec3::new(g.y - s.y, g.x - s.x, -g.z - s.z),
        Heading::NegY => Vec3::new(s.y - g.y, s.x - g.x, -g.z - s.z),
    }
}

/// Maps a whole frame into the global frame.
pub fn align_frame(frame: &PointCloudFrame, pose: &SensorPose) -> Vec<Vec3> {
    frame.points.iter().map(|&p| align_point(p, pose)).collect()
}

/// Drops points within `z_cut` of the estimated ground plane. The plane
/// estimate is the center of the most populated bin of a z histogram
/// (ties broken toward the lower bin); the crossroad scene is flat
/// enough that a constant plane suffices.
pub fn remove_ground(points: &[Vec3], z_cut: f64, bin_width: f64) -> Vec<Vec3> {
    assert!(z_cut.is_finite(), "z_cut must be finite");
    assert!(bin_width > 0.0, "bin width must be positive");
    if points.is_empty() {
        return Vec::new();
    }
    let z_min = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for p in points {
        let bin = ((p.z - z_min) / bin_width).floor() as i64;
        *counts.entry(bin).or_insert(0) += 1;
    }
    let mode_bin = counts
        .iter()
        .map(|(&bin, &n)| (bin, n))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(bin, _)| bin)
        .unwrap();
    let ground = z_min + (mode_bin as f64 + 0.5) * bin_width;
    points.iter().copied().filter(|p| p.z - ground > z_cut).collect()
}

/// Object class from the size-threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectClass {
    Vehicle,
    StaticObject,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn of_points(points: impl IntoIterator<Item = Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in it {
            bb.min = Vec3::new(bb.min.x.min(p.x), bb.min.y.min(p.y), bb.min.z.min(p.z));
            bb.max = Vec3::new(bb.max.x.max(p.x), bb.max.y.max(p.y), bb.max.z.max(p.z));
        }
        Some(bb)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// A clustered object: member-point indices into the input slice, its
/// bounding box, and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub members: Vec<usize>,
    pub bbox: Aabb,
    pub class: ObjectClass,
}

/// Vehicle iff the extent is strictly below the threshold on every axis.
pub fn classify(bbox: &Aabb, thresholds: Vec3) -> ObjectClass {
    assert!(
        thresholds.x > 0.0 && thresholds.y > 0.0 && thresholds.z > 0.0,
        "thresholds must be positive"
    );
    let e = bbox.extent();
    if e.x < thresholds.x && e.y < thresholds.y && e.z < thresholds.z {
        ObjectClass::Vehicle
    } else {
        ObjectClass::StaticObject
    }
}

/// Density clustering output: clusters as member-index sets plus the
/// noise set.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Density-based clustering with the usual core/border/noise semantics.
///
/// Core points (at least `min_pts` neighbors within `eps`, the point
/// itself included) are grouped by core-to-core reachability, which is
/// independent of input order. A border point joins the cluster of its
/// nearest core point; an exact distance tie goes to the core with the
/// lexicographically smallest coordinates, so the resulting partition is
/// invariant under input permutation. Clusters are numbered by their
/// smallest member index.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    if n == 0 {
        return Clustering { clusters: Vec::new(), noise: Vec::new() };
    }

    // Uniform grid with cell edge eps: all neighbors of a point lie in
    // its 27-cell block.
    let cell = |p: Vec3| -> (i64, i64, i64) {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let eps_sq = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let (cx, cy, cz) = cell(points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in ids {
                            if (points[j] - points[i]).norm_sq() <= eps_sq {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out
    };

    let neighbor_lists: Vec<Vec<usize>> = (0..n).map(neighbors).collect();
    let is_core: Vec<bool> = neighbor_lists.iter().map(|l| l.len() >= min_pts).collect();

    // Connected components over core points, expanded in ascending index.
    const UNASSIGNED: usize = usize::MAX;
    let mut label = vec![UNASSIGNED; n];
    let mut next_label = 0;
    for i in 0..n {
        if !is_core[i] || label[i] != UNASSIGNED {
            continue;
        }
        let id = next_label;
        next_label += 1;
        label[i] = id;
        let mut stack = vec![i];
        while let Some(p) = stack.pop() {
            for &q in &neighbor_lists[p] {
                if is_core[q] && label[q] == UNASSIGNED {
                    label[q] = id;
                    stack.push(q);
                }
            }
        }
    }

    // Border points: nearest core wins; exact ties go to the core with
    // the lexicographically smallest coordinates, which does not depend
    // on input order.
    let lex_less = |a: Vec3, b: Vec3| {
        (a.x, a.y, a.z) < (b.x, b.y, b.z)
    };
    for i in 0..n {
        if is_core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &neighbor_lists[i] {
            if !is_core[j] {
                continue;
            }
            let d = (points[j] - points[i]).norm_sq();
            best = match best {
                None => Some((d, j)),
                Some((bd, bj)) => {
                    if d < bd || (d == bd && lex_less(points[j], points[bj])) {
                        Some((d, j))
                    } else {
                        Some((bd, bj))
                    }
                }
            };
        }
        if let Some((_, j)) = best {
            label[i] = label[j];
        }
    }

    let mut clusters = vec![Vec::new(); next_label];
    let mut noise = Vec::new();
    for i in 0..n {
        if label[i] == UNASSIGNED {
            noise.push(i);
        } else {
            clusters[label[i]].push(i);
        }
    }
    clusters.sort_by_key(|c| c[0]);
    Clustering { clusters, noise }
}

/// Clusters aligned points and classifies each cluster; noise points are
/// not part of any object.
pub fn detect_objects(
    points: &[Vec3],
    eps: f64,
    min_pts: usize,
    thresholds: Vec3,
) -> Vec<DetectedObject> {
    let clustering = dbscan(points, eps, min_pts);
    clustering
        .clusters
        .into_iter()
        .map(|members| {
            let bbox = Aabb::of_points(members.iter().map(|&i| points[i]))
                .expect("clusters are nonempty");
            let class = classify(&bbox, thresholds);
            DetectedObject { members, bbox, class }
        })
        .collect()
}

/// Scatterer label: the class of the nearest detected object, or Unknown
/// when nothing lies within the coincidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScattererLabel {
    Static,
    Dynamic,
    Unknown,
}

/// A scatterer position with its environment label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledScatterer {
    pub position: Vec3,
    pub label: ScattererLabel,
}

/// Labels each scatterer by the class of the object owning the nearest
/// point within `r_coincide`. An exact distance tie between a vehicle
/// point and a static point resolves to Dynamic; a scatterer with no
/// point in range is Unknown (outside the sensed region).
pub fn label_scatterers(
    scatterers: &[Vec3],
    objects: &[DetectedObject],
    points: &[Vec3],
    r_coincide: f64,
) -> Vec<LabeledScatterer> {
    assert!(r_coincide > 0.0, "coincidence radius must be positive");
    let r_sq = r_coincide * r_coincide;
    scatterers
        .iter()
        .map(|&s| {
            let mut best: Option<(f64, ObjectClass)> = None;
            for obj in objects {
                for &i in &obj.members {
                    let d = (points[i] - s).norm_sq();
                    if d > r_sq {
                        continue;
                    }
                    best = match best {
                        None => Some((d, obj.class)),
                        Some((bd, bc)) => {
                            if d < bd || (d == bd && obj.class == ObjectClass::Vehicle) {
                                Some((d, obj.class))
                            } else {
                                Some((bd, bc))
                            }
                        }
                    };
                }
            }
            let label = match best {
                Some((_, ObjectClass::Vehicle)) => ScattererLabel::Dynamic,
                Some((_, ObjectClass::StaticObject)) => ScattererLabel::Static,
                None => ScattererLabel::Unknown,
            };
            LabeledScatterer { position: s, label }
        })
        .collect()
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64, PointCloudError> {
    tok.parse().map_err(|_| PointCloudError::Parse {
        path: path.to_owned(),
        line,
        msg: format!("expected a number, got {tok:?}"),
    })
}

/// Reads an ASCII point file: one "x y z" triple per line, meters.
/// Blank lines and lines starting with '#' are skipped.
pub fn read_point_file(path: &Path) -> Result<Vec<Vec3>, PointCloudError> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(PointCloudError::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 3 fields, got {}", toks.len()),
            });
        }
        let p = Vec3::new(
            parse_f64(path, line, toks[0])?,
            parse_f64(path, line, toks[1])?,
            parse_f64(path, line, toks[2])?,
        );
        if !p.is_finite() {
            return Err(PointCloudError::Parse {
                path: path.to_owned(),
                line,
                msg: "coordinates must be finite".to_owned(),
            });
        }
        points.push(p);
    }
    Ok(points)
}

/// One manifest row: frame timestamp, sensor pose, and the point file it
/// refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub timestamp: f64,
    pub pose: SensorPose,
    pub point_file: PathBuf,
}

/// Reads a frame manifest: each line "timestamp x y z heading path",
/// with heading one of +x, -x, +y, -y. Relative point-file paths are
/// resolved against the manifest's directory.
pub fn read_frame_manifest(path: &Path) -> Result<Vec<FrameEntry>, PointCloudError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(PointCloudError::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 6 fields, got {}", toks.len()),
            });
        }
        let timestamp = parse_f64(path, line, toks[0])?;
        let position = Vec3::new(
            parse_f64(path, line, toks[1])?,
            parse_f64(path, line, toks[2])?,
            parse_f64(path, line, toks[3])?,
        );
        let heading = Heading::parse(toks[4])?;
        let point_file = base.join(toks[5]);
        entries.push(FrameEntry { timestamp, pose: SensorPose { position, heading }, point_file });
    }
    Ok(entries)
}
