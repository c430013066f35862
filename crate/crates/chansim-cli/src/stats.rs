//! `chansim stats`: ensemble correlation statistics from simulated runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use chansim::io::{read_tvtf_csv, write_dpsd_csv, write_fcf_csv, write_tacf_csv, RunManifest};
use chansim::stats::{dpsd, fcf, tacf, tf_cf, Taper, TransferGrid};

use crate::CliError;

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Simulation output directory holding realization_*/tvtf.csv.
    #[arg(long)]
    pub runs: PathBuf,
    /// Output directory for the statistic files.
    #[arg(long)]
    pub out: PathBuf,
    /// Anchor times, seconds; repeat the flag for several anchors.
    #[arg(long = "anchor-time", required = true)]
    pub anchor_times: Vec<f64>,
    /// Anchor frequency, Hz; defaults to the middle grid frequency.
    #[arg(long)]
    pub anchor_freq: Option<f64>,
    /// Longest time lag kept, seconds; defaults to the whole grid.
    #[arg(long)]
    pub dt_max: Option<f64>,
    /// Longest frequency lag kept, Hz; defaults to the whole grid.
    #[arg(long)]
    pub df_max: Option<f64>,
}

/// Index of `value` on a sampled axis, within a relative tolerance.
fn on_axis(axis: &[f64], value: f64) -> Option<usize> {
    let tol = 1e-9 * value.abs().max(1.0);
    axis.iter().position(|&x| (x - value).abs() <= tol)
}

/// Lags from `axis[start..]` relative to its anchor, optionally capped.
fn tail_lags(axis: &[f64], start: usize, cap: Option<f64>) -> Vec<f64> {
    let anchor = axis[start];
    let cap = cap.unwrap_or(f64::INFINITY);
    axis[start..]
        .iter()
        .map(|&x| x - anchor)
        .take_while(|&lag| lag <= cap * (1.0 + 1e-12))
        .collect()
}

pub fn run(args: &StatsArgs) -> Result<(), CliError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&args.runs)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| {
            path.is_dir()
                && path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("realization_"))
        })
        .collect();
    dirs.sort();
    if dirs.len() < 2 {
        return Err(CliError::Data(format!(
            "expectation needs at least two realizations under {}, found {}",
            args.runs.display(),
            dirs.len()
        )));
    }
    let ensemble: Vec<TransferGrid> = dirs
        .iter()
        .map(|dir| read_tvtf_csv(&dir.join("tvtf.csv")))
        .collect::<Result<_, _>>()?;

    let times = &ensemble[0].times;
    let freqs = &ensemble[0].freqs;
    let anchor_freq = args.anchor_freq.unwrap_or(freqs[freqs.len() / 2]);
    let freq_index = on_axis(freqs, anchor_freq).ok_or_else(|| {
        CliError::Data(format!("anchor frequency {anchor_freq} is not on the simulated grid"))
    })?;

    std::fs::create_dir_all(&args.out)?;
    let described = format!(
        "runs={};anchors={:?};f={anchor_freq};dt_max={:?};df_max={:?}",
        args.runs.display(),
        args.anchor_times,
        args.dt_max,
        args.df_max
    );
    RunManifest::new("stats", &described, described.as_bytes(), 0, &args.out).write(&args.out)?;

    let mut index = BufWriter::new(File::create(args.out.join("anchors.csv"))?);
    writeln!(index, "index, t, f")?;
    for (i, &anchor_time) in args.anchor_times.iter().enumerate() {
        let time_index = on_axis(times, anchor_time).ok_or_else(|| {
            CliError::Data(format!(
                "anchor time {anchor_time} is outside the simulated span [{}, {}]",
                times.first().copied().unwrap_or(f64::NAN),
                times.last().copied().unwrap_or(f64::NAN)
            ))
        })?;
        let time_lags = tail_lags(times, time_index, args.dt_max);
        let freq_lags = tail_lags(freqs, freq_index, args.df_max);
        let surface = tf_cf(&ensemble, (anchor_time, anchor_freq), &time_lags, &freq_lags)?;
        let tacf_curve = tacf(&surface)?;
        let fcf_curve = fcf(&surface)?;

        let mut out = BufWriter::new(File::create(args.out.join(format!("tacf_{i}.csv")))?);
        write_tacf_csv(&mut out, &tacf_curve)?;
        out.flush()?;
        let mut out = BufWriter::new(File::create(args.out.join(format!("fcf_{i}.csv")))?);
        write_fcf_csv(&mut out, &fcf_curve)?;
        out.flush()?;
        if time_lags.len() >= 2 {
            let values: Vec<_> = tacf_curve.iter().map(|&(_, v)| v).collect();
            let spectrum = dpsd(&time_lags, &values, anchor_time, Taper::default())?;
            let mut out = BufWriter::new(File::create(args.out.join(format!("dpsd_{i}.csv")))?);
            write_dpsd_csv(&mut out, &spectrum)?;
            out.flush()?;
        }
        writeln!(index, "{i}, {anchor_time:.16e}, {anchor_freq:.16e}")?;
    }
    index.flush()?;

    println!(
        "stats: {} anchor(s) over {} realization(s) -> {}",
        args.anchor_times.len(),
        ensemble.len(),
        args.out.display()
    );
    Ok(())
}
