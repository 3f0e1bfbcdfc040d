mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use magmap_core::calibration::{
    calibrate, CalibrationConfig, CalibrationParams, FitReport, DEFAULT_REFERENCE_NORM,
};
use magmap_core::evaluation::{
    compare_norm_maps, comparison_table, consistency_from_report, density_sweep, density_table,
    validate, validation_table, write_residuals_csv, ConsistencyReport,
    DEFAULT_CONSISTENCY_THRESHOLD, DEFAULT_STRIDE, DEFAULT_WINDOW,
};
use magmap_core::gpr::NoisePlacement;
use magmap_core::ingest::{
    median_filter, preprocess, read_flight_log, read_observations, write_flight_log,
    write_observations, FlightLog, ObservationSet, PreprocessConfig, DEFAULT_MAX_POSE_AGE,
    DEFAULT_MEDIAN_WINDOW,
};
use magmap_core::mapping::{
    build_intermediate, build_norm_map, compress, compress_norm, density_spacings, GridSpec,
    MapConfig, MapFile, Quantity,
};
use magmap_core::sim::Scenario;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use config::{pick, RunConfig};
use output::{read_input, sidecar, write_atomic, write_json, Provenance};

#[derive(Parser)]
#[command(
    name = "magmap",
    version,
    about = "Indoor magnetic field mapping pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed recorded in the output provenance.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a flight from a scenario file and write the flight log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of the true field at every magnetometer sample.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the nine-parameter magnetometer model to a flight log.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Reference field magnitude, µT.
        #[arg(long)]
        bref: Option<f64>,
        #[arg(long)]
        median_window: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Filter, downsample, calibrate and rotate a flight log into observations.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Calibration JSON; identity when omitted.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Target rate, Hz.
        #[arg(long, value_parser = ["2", "4", "10"])]
        rate: Option<String>,
        #[arg(long)]
        median_window: Option<usize>,
        #[arg(long)]
        max_pose_age: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train an intermediate (or single-flight) map on observation files.
    Train {
        #[arg(long = "obs", required = true)]
        obs: Vec<PathBuf>,
        /// Train a scalar map on the field magnitude instead.
        #[arg(long)]
        norm: bool,
        #[arg(long, value_parser = parse_noise)]
        noise_placement: Option<NoisePlacement>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compress a trained map onto a grid of pseudo-observations.
    Compress {
        #[arg(long)]
        map: PathBuf,
        /// `Sx,Sy,Sz` or a single uniform spacing, m.
        #[arg(long, value_parser = parse_spacing)]
        grid: Option<[f64; 3]>,
        #[arg(long)]
        takeoff_column: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// RMSE and 2σ capture of a vector map on observation files.
    Validate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long = "obs", required = true)]
        obs: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Exit 1 when any component captures less than the threshold.
        #[arg(long)]
        strict: bool,
        /// Directory for per-point residual CSVs.
        #[arg(long)]
        residuals: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Whole-flight and windowed 2σ consistency verdicts.
    Consistency {
        #[arg(long)]
        map: PathBuf,
        #[arg(long = "obs", required = true)]
        obs: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        /// Exit 1 when any flight or window is inconsistent.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Validate compromise maps over a range of uniform grid spacings.
    DensitySweep {
        #[arg(long)]
        map: PathBuf,
        #[arg(long = "obs", required = true)]
        obs: Vec<PathBuf>,
        /// Comma-separated spacings, m; 0.2 to 1.0 in 0.05 steps by default.
        #[arg(long, value_delimiter = ',')]
        spacings: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the norm of a vector map with a norm map.
    NormCompare {
        #[arg(long)]
        vector_map: PathBuf,
        #[arg(long)]
        norm_map: PathBuf,
        #[arg(long = "obs", required = true)]
        obs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_noise(s: &str) -> Result<NoisePlacement, String> {
    match s {
        "diagonal" => Ok(NoisePlacement::Diagonal),
        "every-entry" => Ok(NoisePlacement::EveryEntry),
        _ => Err(format!("expected `diagonal` or `every-entry`, got `{s}`")),
    }
}

fn parse_spacing(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad spacing `{p}`: {e}"))
        })
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [v] => Ok([*v; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err("expected one or three comma-separated spacings".into()),
    }
}

/// Successful run, or a `--strict` check that failed.
enum Outcome {
    Pass,
    StrictFailure,
}

/// Calibration file: the nine parameters at the top level plus the fit.
#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    #[serde(flatten)]
    params: CalibrationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Value>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}

fn text(bytes: Vec<u8>, path: &Path) -> Result<String> {
    String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn load_log(path: &Path, prov: &mut Provenance) -> Result<FlightLog> {
    let bytes = read_input(path, prov)?;
    read_flight_log(stem(path), bytes.as_slice()).with_context(|| format!("in {}", path.display()))
}

fn load_obs(paths: &[PathBuf], prov: &mut Provenance) -> Result<Vec<ObservationSet>> {
    paths
        .iter()
        .map(|p| {
            let bytes = read_input(p, prov)?;
            read_observations(stem(p), bytes.as_slice())
                .with_context(|| format!("in {}", p.display()))
        })
        .collect()
}

fn load_map(path: &Path, prov: &mut Provenance) -> Result<MapFile> {
    let t = text(read_input(path, prov)?, path)?;
    MapFile::from_json(&t).with_context(|| format!("in {}", path.display()))
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            truth,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("simulate", 0);
            let t = text(read_input(&scenario, &mut prov)?, &scenario)?;
            let mut sc =
                Scenario::from_json(&t).with_context(|| format!("in {}", scenario.display()))?;
            sc.seed = pick(cfg.seed, common.seed, sc.seed);
            prov.seed = sc.seed;
            let sim = sc.run()?;
            let mut buf = Vec::new();
            write_flight_log(&sim.log, &mut buf)?;
            write_atomic(&out, &buf)?;
            let mut side = json!({"flight_id": sim.log.id, "provenance": prov.to_value()});
            if let Some(truth_path) = truth {
                let mut w =
                    String::from("t_s,x,y,z,bx_uT,by_uT,bz_uT,spurious_axis,spurious_delta_uT\n");
                for s in &sim.truth {
                    let (axis, delta) =
                        s.spurious.map_or((String::new(), String::new()), |(a, d)| {
                            (a.to_string(), d.to_string())
                        });
                    w.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        s.t,
                        s.position.x,
                        s.position.y,
                        s.position.z,
                        s.field_world.x,
                        s.field_world.y,
                        s.field_world.z,
                        axis,
                        delta
                    ));
                }
                write_atomic(&truth_path, w.as_bytes())?;
                side["truth"] = json!(truth_path
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned()));
            }
            write_json(&sidecar(&out), &side)?;
            println!(
                "{}: {} poses, {} magnetometer samples",
                sim.log.id,
                sim.log.poses.len(),
                sim.log.mags.len()
            );
            Ok(Outcome::Pass)
        }
        Command::Calibrate {
            input,
            bref,
            median_window,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("calibrate", pick(cfg.seed, common.seed, 0));
            let log = load_log(&input, &mut prov)?;
            let window = pick(cfg.median_window, median_window, DEFAULT_MEDIAN_WINDOW);
            let config = CalibrationConfig {
                reference_norm: pick(cfg.bref, bref, DEFAULT_REFERENCE_NORM),
                ..CalibrationConfig::default()
            };
            let filtered = median_filter(&log.mags, window)?;
            let m: Vec<_> = filtered.iter().map(|s| s.field_body).collect();
            let (params, mut report) = calibrate(&m, &config)?;
            report.note =
                format!("measurements median filtered with window {window} before fitting");
            println!(
                "calibrated on {} samples: norm error rms {:.4} µT, bias ({:.3}, {:.3}, {:.3}) µT",
                report.measurements,
                report.norm_error_rms,
                params.bias_x0,
                params.bias_y0,
                params.bias_z0
            );
            let file = CalibrationFile {
                params,
                fit: Some(report),
                provenance: Some(prov.to_value()),
            };
            write_json(&out, &serde_json::to_value(&file)?)?;
            Ok(Outcome::Pass)
        }
        Command::Preprocess {
            input,
            calib,
            rate,
            median_window,
            max_pose_age,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("preprocess", pick(cfg.seed, common.seed, 0));
            let log = load_log(&input, &mut prov)?;
            let params = match &calib {
                Some(p) => {
                    let t = text(read_input(p, &mut prov)?, p)?;
                    let f: CalibrationFile =
                        serde_json::from_str(&t).with_context(|| format!("in {}", p.display()))?;
                    f.params
                }
                None => CalibrationParams::identity(),
            };
            let flag_rate = rate.map(|r| r.parse::<f64>()).transpose()?;
            let rate_hz = pick(cfg.rate, flag_rate, 2.0);
            if ![2.0, 4.0, 10.0].contains(&rate_hz) {
                bail!("rate must be 2, 4 or 10 Hz, got {rate_hz}");
            }
            let config = PreprocessConfig {
                median_window: pick(cfg.median_window, median_window, DEFAULT_MEDIAN_WINDOW),
                rate_hz,
                max_pose_age: pick(cfg.max_pose_age, max_pose_age, DEFAULT_MAX_POSE_AGE),
            };
            let obs = preprocess(&log, &config, &params)?;
            let mut buf = Vec::new();
            write_observations(&obs, &mut buf)?;
            write_atomic(&out, &buf)?;
            write_json(
                &sidecar(&out),
                &json!({"flight_id": log.id, "config": config, "provenance": prov.to_value()}),
            )?;
            println!("{}: {} observations at {} Hz", log.id, obs.len(), rate_hz);
            Ok(Outcome::Pass)
        }
        Command::Train {
            obs,
            norm,
            noise_placement,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new(
                if norm { "train --norm" } else { "train" },
                pick(cfg.seed, common.seed, 0),
            );
            let sets = load_obs(&obs, &mut prov)?;
            let merged = ObservationSet::merge(&sets);
            let config = MapConfig {
                noise: pick(
                    cfg.noise_placement,
                    noise_placement,
                    NoisePlacement::Diagonal,
                ),
                ..MapConfig::default()
            };
            let mut file = if norm {
                MapFile::from_norm(&build_norm_map(&merged, &config)?)
            } else {
                MapFile::from_vector(&build_intermediate(&merged, &config)?)
            };
            set_run(&mut file, &prov);
            for c in &file.components {
                println!(
                    "{}: sigma_f {:.4} µT, l {:.4} m, sigma_n {:.4} µT",
                    c.axis,
                    c.hyperparams.sigma_f,
                    c.hyperparams.length_scale,
                    c.hyperparams.sigma_n
                );
            }
            write_atomic(&out, (file.to_json()? + "\n").as_bytes())?;
            Ok(Outcome::Pass)
        }
        Command::Compress {
            map,
            grid,
            takeoff_column,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("compress", pick(cfg.seed, common.seed, 0));
            let file = load_map(&map, &mut prov)?;
            let spacing = match cfg.grid {
                Some(g) => parse_spacing(
                    &g.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                )
                .map_err(anyhow::Error::msg)?,
                None => grid.unwrap_or([0.5, 0.5, 0.25]),
            };
            let spec = GridSpec {
                takeoff_column: pick(cfg.takeoff_column, takeoff_column, 7),
                ..GridSpec::new(spacing)
            };
            let mut outfile = match file.quantity {
                Quantity::Vector => MapFile::from_vector(&compress(&file.into_vector()?, &spec)?),
                Quantity::Norm => MapFile::from_norm(&compress_norm(&file.into_norm()?, &spec)?),
            };
            set_run(&mut outfile, &prov);
            println!("compromise map with n1 = {}", outfile.locations.len());
            write_atomic(&out, (outfile.to_json()? + "\n").as_bytes())?;
            Ok(Outcome::Pass)
        }
        Command::Validate {
            map,
            obs,
            threshold,
            strict,
            residuals,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("validate", pick(cfg.seed, common.seed, 0));
            let vmap = load_map(&map, &mut prov)?.into_vector()?;
            let sets = load_obs(&obs, &mut prov)?;
            let threshold = pick(cfg.threshold, threshold, DEFAULT_CONSISTENCY_THRESHOLD);
            let strict = pick(cfg.strict, Some(strict), false);
            let reports = sets
                .iter()
                .map(|o| validate(&vmap, o))
                .collect::<magmap_core::Result<Vec<_>>>()?;
            if let Some(dir) = residuals {
                std::fs::create_dir_all(&dir)?;
                for (r, o) in reports.iter().zip(&sets) {
                    let mut buf = Vec::new();
                    write_residuals_csv(r, o, &mut buf)?;
                    write_atomic(&dir.join(format!("{}_residuals.csv", r.label())), &buf)?;
                }
            }
            print!("{}", validation_table(&reports));
            let summary: Vec<Value> = reports
                .iter()
                .map(|r| json!({"flight": r.label(), "points": r.points, "rmse": r.rmse, "norm_rmse": r.norm_rmse, "capture": r.capture, "outliers": r.outliers}))
                .collect();
            write_json(
                &out,
                &json!({"threshold": threshold, "reports": summary, "provenance": prov.to_value()}),
            )?;
            let failed = reports
                .iter()
                .any(|r| r.capture.iter().any(|c| *c < threshold));
            Ok(if strict && failed {
                Outcome::StrictFailure
            } else {
                Outcome::Pass
            })
        }
        Command::Consistency {
            map,
            obs,
            threshold,
            window,
            strict,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("consistency", pick(cfg.seed, common.seed, 0));
            let vmap = load_map(&map, &mut prov)?.into_vector()?;
            let sets = load_obs(&obs, &mut prov)?;
            let threshold = pick(cfg.threshold, threshold, DEFAULT_CONSISTENCY_THRESHOLD);
            let window = pick(cfg.window, window, DEFAULT_WINDOW);
            let strict = pick(cfg.strict, Some(strict), false);
            let mut reports: Vec<ConsistencyReport> = Vec::new();
            for o in &sets {
                let v = validate(&vmap, o)?;
                let c =
                    consistency_from_report(&v, threshold, window.min(o.len()), DEFAULT_STRIDE)?;
                let failing: Vec<String> = c
                    .failing_segments()
                    .map(|s| format!("{}..{}", s.start, s.end))
                    .collect();
                println!(
                    "{:<16} capture x {:5.1}% y {:5.1}% z {:5.1}%  {:?}  failing windows: {}",
                    v.label(),
                    100.0 * c.capture[0],
                    100.0 * c.capture[1],
                    100.0 * c.capture[2],
                    c.verdict,
                    if failing.is_empty() {
                        "none".to_string()
                    } else {
                        failing.join(", ")
                    }
                );
                reports.push(c);
            }
            write_json(
                &out,
                &json!({"reports": reports, "provenance": prov.to_value()}),
            )?;
            let flagged = reports.iter().any(|c| c.flagged());
            Ok(if strict && flagged {
                Outcome::StrictFailure
            } else {
                Outcome::Pass
            })
        }
        Command::DensitySweep {
            map,
            obs,
            spacings,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("density-sweep", pick(cfg.seed, common.seed, 0));
            let vmap = load_map(&map, &mut prov)?.into_vector()?;
            let sets = load_obs(&obs, &mut prov)?;
            let spacings = pick(cfg.spacings, spacings, density_spacings());
            let result = density_sweep(&vmap, &spacings, &sets)?;
            print!("{}", density_table(&result));
            write_json(
                &out,
                &json!({"study": result, "provenance": prov.to_value()}),
            )?;
            Ok(Outcome::Pass)
        }
        Command::NormCompare {
            vector_map,
            norm_map,
            obs,
            out,
            common,
        } => {
            let cfg = RunConfig::load(common.config.as_deref())?;
            let mut prov = Provenance::new("norm-compare", pick(cfg.seed, common.seed, 0));
            let vmap = load_map(&vector_map, &mut prov)?.into_vector()?;
            let nmap = load_map(&norm_map, &mut prov)?.into_norm()?;
            let sets = load_obs(&obs, &mut prov)?;
            let rows = sets
                .iter()
                .map(|o| compare_norm_maps(&vmap, &nmap, o))
                .collect::<magmap_core::Result<Vec<_>>>()?;
            for w in rows.iter().filter_map(|r| r.warning.as_ref()).take(1) {
                eprintln!("warning: {w}");
            }
            print!("{}", comparison_table(&rows));
            write_json(
                &out,
                &json!({"comparisons": rows, "provenance": prov.to_value()}),
            )?;
            Ok(Outcome::Pass)
        }
    }
}

fn set_run(file: &mut MapFile, prov: &Provenance) {
    file.provenance.run.clear();
    if let Value::Object(m) = prov.to_value() {
        file.provenance.run.extend(m);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::StrictFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
