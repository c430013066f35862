//! `chansim fit`: regress a parameter table from labeled link files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use chansim::charfit::{build_table_with_report, read_link_file};
use chansim::io::RunManifest;

use crate::CliError;

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Link file measured under high traffic density.
    #[arg(long)]
    pub high: PathBuf,
    /// Link file measured under medium traffic density.
    #[arg(long)]
    pub medium: PathBuf,
    /// Link file measured under low traffic density.
    #[arg(long)]
    pub low: PathBuf,
    /// Output directory for the table and the fit report.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let links_high = read_link_file(&args.high)?;
    let links_medium = read_link_file(&args.medium)?;
    let links_low = read_link_file(&args.low)?;
    let (table, report) = build_table_with_report(&links_high, &links_medium, &links_low)?;

    std::fs::create_dir_all(&args.out)?;
    let mut inputs = std::fs::read(&args.high)?;
    inputs.extend(std::fs::read(&args.medium)?);
    inputs.extend(std::fs::read(&args.low)?);
    let described = format!(
        "{},{},{}",
        args.high.display(),
        args.medium.display(),
        args.low.display()
    );
    RunManifest::new("fit", &described, &inputs, 0, &args.out).write(&args.out)?;

    table.write_file(&args.out.join("table.toml"))?;
    let mut out = BufWriter::new(File::create(args.out.join("fit_report.csv"))?);
    writeln!(out, "vtd, class, family, samples, ks")?;
    for entry in &report {
        writeln!(
            out,
            "{}, {}, {}, {}, {:.16e}",
            entry.vtd, entry.class, entry.family, entry.samples, entry.ks
        )?;
    }
    out.flush()?;

    println!(
        "fit: {} table entries from {} links -> {}",
        report.len(),
        links_high.len() + links_medium.len() + links_low.len(),
        args.out.display()
    );
    Ok(())
}
