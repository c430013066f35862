//! `chansim simulate`: run an ensemble of channel realizations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use chansim::channel::tvtf;
use chansim::config::RunConfig;
use chansim::io::{write_cir_csv, write_tvtf_csv, write_visibility_csv, RunManifest};
use chansim::registry::{builtin_table, VtdCondition};
use chansim::sim::Realization;
use chansim::stream::RandomStream;

use crate::CliError;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Base seed; realization i draws from child stream i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, one subdirectory per realization.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured realization count.
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Override the configured traffic density: high, medium, or low.
    #[arg(long)]
    pub vtd: Option<String>,
    /// Override the static visibility factor.
    #[arg(long)]
    pub eps_static: Option<f64>,
    /// Override the dynamic visibility factor.
    #[arg(long)]
    pub eps_dynamic: Option<f64>,
    /// Worker threads; 0 picks the runtime default.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub fn parse_vtd(s: &str) -> Result<VtdCondition, CliError> {
    VtdCondition::from_str(s).ok_or_else(|| {
        CliError::Validation(format!("--vtd: expected high, medium, or low, got {s:?}"))
    })
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let raw = std::fs::read(&args.config)?;
    let text = std::str::from_utf8(&raw)
        .map_err(|_| CliError::Validation("config file is not UTF-8".to_owned()))?;
    let mut cfg = RunConfig::from_toml(text)?;
    if let Some(vtd) = &args.vtd {
        cfg.scenario.vtd = parse_vtd(vtd)?;
    }
    if let Some(n) = args.realizations {
        cfg.simulate.realizations = n;
    }
    if let Some(e) = args.eps_static {
        cfg.evolution.eps_static = e;
    }
    if let Some(e) = args.eps_dynamic {
        cfg.evolution.eps_dynamic = e;
    }
    let v = cfg.validate()?;

    std::fs::create_dir_all(&args.out)?;
    RunManifest::new("simulate", &args.config.display().to_string(), &raw, args.seed, &args.out)
        .write(&args.out)?;

    let table = builtin_table();
    let base = RandomStream::from_seed(args.seed);
    // Each realization is a pure function of its index, so scheduling
    // cannot change any output byte.
    let worker = |i: usize| -> Result<(), CliError> {
        let mut realization =
            Realization::new(&table, &v.scenario, &v.channel, v.eps, base.child(i as u64))?;
        let count = v.run.snapshots;
        let mut snapshots = Vec::with_capacity(count);
        let mut visibility = Vec::with_capacity(count);
        for k in 0..count {
            if k > 0 {
                realization.advance(v.run.step)?;
            }
            snapshots.push(realization.snapshot()?);
            visibility.push((realization.time(), realization.visibility().clone()));
        }
        let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
        let surface = tvtf(&snapshots, &v.run.frequencies, &v.channel)?;

        let dir = args.out.join(format!("realization_{i:03}"));
        std::fs::create_dir_all(&dir)?;
        let mut cir = BufWriter::new(File::create(dir.join("cir.csv"))?);
        write_cir_csv(&mut cir, &snapshots)?;
        cir.flush()?;
        let mut tf = BufWriter::new(File::create(dir.join("tvtf.csv"))?);
        write_tvtf_csv(&mut tf, &times, &v.run.frequencies, &surface)?;
        tf.flush()?;
        let mut vis = BufWriter::new(File::create(dir.join("visibility.csv"))?);
        write_visibility_csv(&mut vis, &visibility)?;
        vis.flush()?;
        Ok(())
    };

    let n = v.run.realizations;
    if args.workers == 1 {
        (0..n).try_for_each(worker)?;
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.workers)
            .build()
            .map_err(|e| CliError::Data(e.to_string()))?;
        pool.install(|| (0..n).into_par_iter().try_for_each(worker))?;
    }
    println!(
        "simulate: {} realization(s) x {} snapshot(s) -> {}",
        n,
        v.run.snapshots,
        args.out.display()
    );
    Ok(())
}
