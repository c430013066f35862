//! End-to-end subcommand tests through the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

use chansim::charfit::{clustered_links, write_link_file};
use chansim::registry::{builtin_table, ParamTable, VtdCondition};
use chansim::stream::RandomStream;

const BIN: &str = env!("CARGO_BIN_EXE_chansim");

const SMALL_RUN: &str = r#"
[scenario]
vtd = "medium"

[simulate]
snapshots = 6
step = 0.01
frequencies = [2.75e10, 2.8e10]
realizations = 2
"#;

fn chansim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn realization_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("realization_"))
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no realization directories under {}", dir.display());
    for name in names {
        for file in ["cir.csv", "tvtf.csv", "visibility.csv"] {
            out.push((format!("{name}/{file}"), read(&dir.join(&name).join(file))));
        }
    }
    out
}

#[test]
fn simulate_reproduces_bytes_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SMALL_RUN).unwrap();
    let config = config.to_str().unwrap();

    let mut outputs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(name);
        let result = chansim(&[
            "simulate",
            "--config",
            config,
            "--seed",
            "9",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{}", stderr_of(&result));
        assert!(out.join("manifest.toml").is_file());
        outputs.push(realization_bytes(&out));
    }
    assert_eq!(outputs[0], outputs[1], "same seed must reproduce every byte");
    assert_eq!(outputs[0], outputs[2], "worker count must not change any byte");

    let other = dir.path().join("d");
    let result = chansim(&[
        "simulate",
        "--config",
        config,
        "--seed",
        "10",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));
    assert_ne!(outputs[0], realization_bytes(&other), "a new seed must change the draw");
}

#[test]
fn override_flags_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SMALL_RUN).unwrap();
    let out = dir.path().join("out");
    let result = chansim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--vtd",
        "low",
        "--realizations",
        "1",
        "--eps-static",
        "0.9",
        "--eps-dynamic",
        "0.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));
    assert!(out.join("realization_000").is_dir());
    assert!(!out.join("realization_001").exists(), "--realizations must override");
}

#[test]
fn invalid_configuration_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        "[scenario]\nvtd = \"medium\"\n[channel.split]\nmode = \"fixed\"\nground = 0.2\nstatic_nlos = 0.4\ndynamic_nlos = 0.3\n",
    )
    .unwrap();
    let out = chansim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("channel.split"), "{err}");
    assert!(err.contains("sum"), "{err}");

    let out = chansim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--vtd",
        "rush",
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--vtd"));
}

#[test]
fn missing_or_short_data_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = chansim(&[
        "simulate",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    // A runs directory with fewer than two realizations cannot average.
    std::fs::create_dir_all(dir.path().join("runs/realization_000")).unwrap();
    let out = chansim(&[
        "stats",
        "--runs",
        dir.path().join("runs").to_str().unwrap(),
        "--out",
        dir.path().join("s").to_str().unwrap(),
        "--anchor-time",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("at least two"), "{}", stderr_of(&out));
}

#[test]
fn fit_writes_the_table_and_a_forty_eight_row_report() {
    let dir = tempfile::tempdir().unwrap();
    let table = builtin_table();
    let mut stream = RandomStream::from_seed(0x5eed);
    for (name, vtd) in
        [("high", VtdCondition::High), ("medium", VtdCondition::Medium), ("low", VtdCondition::Low)]
    {
        let links = clustered_links(&table, vtd, 32, &mut stream);
        write_link_file(&dir.path().join(format!("{name}.txt")), &links).unwrap();
    }
    let out = dir.path().join("fit");
    let result = chansim(&[
        "fit",
        "--high",
        dir.path().join("high.txt").to_str().unwrap(),
        "--medium",
        dir.path().join("medium.txt").to_str().unwrap(),
        "--low",
        dir.path().join("low.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));

    let text = std::fs::read_to_string(out.join("table.toml")).unwrap();
    let emitted = ParamTable::from_toml_str(&text).unwrap();
    assert_eq!(emitted.entries().count(), 48);
    let report = std::fs::read_to_string(out.join("fit_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 49, "header plus one row per entry");
    assert!(report.starts_with("vtd, class, family, samples, ks"));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "# no rows\n").unwrap();
    let result = chansim(&[
        "fit",
        "--high",
        empty.to_str().unwrap(),
        "--medium",
        dir.path().join("medium.txt").to_str().unwrap(),
        "--low",
        dir.path().join("low.txt").to_str().unwrap(),
        "--out",
        dir.path().join("fit2").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn pointcloud_labels_follow_the_constructed_scene() {
    let dir = tempfile::tempdir().unwrap();
    // Dense global-frame scene: ground sheet, one vehicle, one wall.
    let mut sensor_lines = String::new();
    let mut push_global = |x: f64, y: f64, z: f64| {
        // Sensor at the origin heading +x: global (x, y, z) reads back as
        // sensor (x, -y, -z).
        sensor_lines.push_str(&format!("{x} {} {}\n", -y, -z));
    };
    let mut grid = |x0: f64, x1: f64, y0: f64, y1: f64, z0: f64, z1: f64, step: f64| {
        let mut x = x0;
        while x <= x1 + 1e-9 {
            let mut y = y0;
            while y <= y1 + 1e-9 {
                let mut z = z0;
                while z <= z1 + 1e-9 {
                    push_global(x, y, z);
                    z += step;
                }
                y += step;
            }
            x += step;
        }
    };
    grid(-10.0, 10.0, -10.0, 10.0, 0.0, 0.0, 1.0); // ground
    grid(8.0, 11.5, 4.0, 5.5, 0.5, 1.4, 0.3); // vehicle, extents under (6, 3, 2.5)
    grid(-12.0, -4.0, -8.0, -7.5, 0.5, 5.0, 0.3); // wall, too tall for a vehicle
    std::fs::write(dir.path().join("frame0.txt"), &sensor_lines).unwrap();
    std::fs::write(dir.path().join("frames.txt"), "0.0 0 0 0 +x frame0.txt\n").unwrap();
    std::fs::write(
        dir.path().join("scatterers.txt"),
        "9.5 4.9 1.1\n-8.0 -7.6 2.0\n400 400 2\n",
    )
    .unwrap();

    let out = dir.path().join("pc");
    let result = chansim(&[
        "pointcloud",
        "--frames",
        dir.path().join("frames.txt").to_str().unwrap(),
        "--scatterers",
        dir.path().join("scatterers.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));
    let labels = std::fs::read_to_string(out.join("labels.txt")).unwrap();
    let tags: Vec<&str> = labels
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().last().unwrap())
        .collect();
    assert_eq!(tags, ["dynamic", "static", "unknown"], "{labels}");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    assert_eq!(fields[3], "2", "two objects: {row}");
    assert_eq!(fields[4], "1", "one vehicle: {row}");

    let garbled = dir.path().join("badframe.txt");
    std::fs::write(&garbled, "0 0 zero\n").unwrap();
    std::fs::write(dir.path().join("frames_bad.txt"), "0.0 0 0 0 +x badframe.txt\n").unwrap();
    let result = chansim(&[
        "pointcloud",
        "--frames",
        dir.path().join("frames_bad.txt").to_str().unwrap(),
        "--scatterers",
        dir.path().join("scatterers.txt").to_str().unwrap(),
        "--out",
        dir.path().join("pc2").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains(":1:"), "line number: {}", stderr_of(&result));
}

#[test]
fn stats_emits_three_files_per_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SMALL_RUN).unwrap();
    let sim = dir.path().join("sim");
    let result = chansim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));

    let out = dir.path().join("stats");
    let result = chansim(&[
        "stats",
        "--runs",
        sim.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--anchor-time",
        "0",
        "--anchor-time",
        "0.02",
    ]);
    assert!(result.status.success(), "{}", stderr_of(&result));
    for name in ["tacf_0.csv", "fcf_0.csv", "dpsd_0.csv", "tacf_1.csv", "fcf_1.csv", "dpsd_1.csv"]
    {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let anchors = std::fs::read_to_string(out.join("anchors.csv")).unwrap();
    assert_eq!(anchors.lines().count(), 3);
    let tacf = std::fs::read_to_string(out.join("tacf_0.csv")).unwrap();
    let first = tacf.lines().nth(1).unwrap();
    assert!(first.starts_with("0.0000000000000000e0, 1.0000000000000000e0"), "{first}");

    let result = chansim(&[
        "stats",
        "--runs",
        sim.to_str().unwrap(),
        "--out",
        dir.path().join("stats2").to_str().unwrap(),
        "--anchor-time",
        "99.0",
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains("outside the simulated span"), "{}", stderr_of(&result));
}
