//! `chansim pointcloud`: label scatterer positions against LiDAR frames.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use chansim::geom::Vec3;
use chansim::io::RunManifest;
use chansim::pointcloud::{
    align_frame, detect_objects, label_scatterers, read_frame_manifest, read_point_file,
    remove_ground, ObjectClass, PointCloudFrame, ScattererLabel,
};

use crate::CliError;

#[derive(Debug, Args)]
pub struct PointcloudArgs {
    /// Frame manifest: lines "timestamp x y z heading point_file".
    #[arg(long)]
    pub frames: PathBuf,
    /// Scatterer positions: lines "x y z".
    #[arg(long)]
    pub scatterers: PathBuf,
    /// Output directory for labels and the detection summary.
    #[arg(long)]
    pub out: PathBuf,
    /// Height above the estimated ground plane below which points drop.
    #[arg(long, default_value_t = 0.3)]
    pub z_cut: f64,
    /// Ground-histogram bin width, meters.
    #[arg(long, default_value_t = 0.2)]
    pub bin_width: f64,
    /// Clustering neighborhood radius, meters.
    #[arg(long, default_value_t = 1.5)]
    pub eps: f64,
    /// Minimum neighborhood size of a cluster core point.
    #[arg(long, default_value_t = 5)]
    pub min_pts: usize,
    /// Vehicle size thresholds x,y,z in meters; larger objects are static.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [6.0, 3.0, 2.5])]
    pub thresholds: Vec<f64>,
    /// Scatterer-to-point coincidence radius, meters.
    #[arg(long, default_value_t = 0.5)]
    pub r_coincide: f64,
}

fn label_name(label: ScattererLabel) -> &'static str {
    match label {
        ScattererLabel::Static => "static",
        ScattererLabel::Dynamic => "dynamic",
        ScattererLabel::Unknown => "unknown",
    }
}

fn check(flag: &'static str, ok: bool, constraint: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{flag}: {constraint}")))
    }
}

pub fn run(args: &PointcloudArgs) -> Result<(), CliError> {
    check("--z-cut", args.z_cut.is_finite(), "must be finite")?;
    check("--bin-width", args.bin_width > 0.0, "must be positive")?;
    check("--eps", args.eps > 0.0, "must be positive")?;
    check("--min-pts", args.min_pts >= 1, "must be at least 1")?;
    check("--r-coincide", args.r_coincide > 0.0, "must be positive")?;
    check(
        "--thresholds",
        args.thresholds.len() == 3 && args.thresholds.iter().all(|&t| t > 0.0),
        "needs three positive extents x,y,z",
    )?;
    let thresholds = Vec3::new(args.thresholds[0], args.thresholds[1], args.thresholds[2]);

    let frames = read_frame_manifest(&args.frames)?;
    let scatterers = read_point_file(&args.scatterers)?;

    std::fs::create_dir_all(&args.out)?;
    let mut inputs = std::fs::read(&args.frames)?;
    inputs.extend(std::fs::read(&args.scatterers)?);
    let described = format!("{},{}", args.frames.display(), args.scatterers.display());
    RunManifest::new("pointcloud", &described, &inputs, 0, &args.out).write(&args.out)?;

    let mut labels = BufWriter::new(File::create(args.out.join("labels.txt"))?);
    let mut summary = BufWriter::new(File::create(args.out.join("summary.csv"))?);
    writeln!(
        summary,
        "t, points, above_ground, objects, vehicles, static_objects, dynamic_labels, static_labels, unknown_labels"
    )?;

    let mut total_objects = 0usize;
    for frame in &frames {
        let points = read_point_file(&frame.point_file)?;
        let cloud = PointCloudFrame { timestamp: frame.timestamp, points };
        let aligned = align_frame(&cloud, &frame.pose);
        let kept = remove_ground(&aligned, args.z_cut, args.bin_width);
        let objects = detect_objects(&kept, args.eps, args.min_pts, thresholds);
        let labeled = label_scatterers(&scatterers, &objects, &kept, args.r_coincide);

        writeln!(labels, "# t={:.16e}", frame.timestamp)?;
        let mut census = [0usize; 3];
        for s in &labeled {
            writeln!(
                labels,
                "{:.16e} {:.16e} {:.16e} {}",
                s.position.x,
                s.position.y,
                s.position.z,
                label_name(s.label)
            )?;
            let slot = match s.label {
                ScattererLabel::Dynamic => 0,
                ScattererLabel::Static => 1,
                ScattererLabel::Unknown => 2,
            };
            census[slot] += 1;
        }
        let vehicles = objects.iter().filter(|o| o.class == ObjectClass::Vehicle).count();
        writeln!(
            summary,
            "{:.16e}, {}, {}, {}, {}, {}, {}, {}, {}",
            frame.timestamp,
            cloud.points.len(),
            kept.len(),
            objects.len(),
            vehicles,
            objects.len() - vehicles,
            census[0],
            census[1],
            census[2],
        )?;
        total_objects += objects.len();
    }
    labels.flush()?;
    summary.flush()?;

    println!(
        "pointcloud: {} frame(s), {} object(s), {} scatterer(s) -> {}",
        frames.len(),
        total_objects,
        scatterers.len(),
        args.out.display()
    );
    Ok(())
}
