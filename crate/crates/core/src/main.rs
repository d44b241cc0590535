use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decaf::config::{RunConfig, SetupConfig};
use decaf::denoiser::{make_texture_dataset, train_dncnn, DncnnConfig, DncnnTraining};
use decaf::io::{
    export_line_profile, export_slice, line_path, read_field, read_measurements, read_volume, write_denoiser,
    write_field, write_measurements, write_volume, ExportFormat, SliceAxis,
};
use decaf::pipeline::{ablate_run, evaluate, reconstruct_run, simulate_run, tikhonov_run};
use decaf::reconstruction::{write_log_csv, AblationVariant};
use decaf::simulate::{make_phantom, NoiseKind, PhantomSpec, SetupPreset};
use decaf::volume::{permittivity_to_ri, PermittivityVolume};
use decaf::Error;

#[derive(Parser)]
#[command(name = "decaf", version, about = "Neural-field intensity diffraction tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<(RunConfig, PathBuf), Error> {
        match &self.config {
            Some(p) => {
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok((RunConfig::load(p)?, base))
            }
            None => Ok((RunConfig::default(), PathBuf::from("."))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a phantom and synthesize its measurements.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Phantom spec (JSON); overrides the config's phantom and grid.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Setup preset: annular24, dense89 or multiplexed16x6.
        #[arg(long)]
        setup: Option<SetupPreset>,
        /// Gaussian noise std in intensity units.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a neural field to measurements.
    Reconstruct {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        /// Regularization variant: full, AC, NR or Noreg.
        #[arg(long, default_value = "full")]
        variant: AblationVariant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form Tikhonov reconstruction.
    Tikhonov {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        /// Reference volume for the τ sweep when no τ is given.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render stored field weights on a grid of any density.
    Render {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        weights: PathBuf,
        /// Upsampling factors `FXxFYxFZ` of the config grid, e.g. 2x2x4.
        #[arg(long, default_value = "1x1x1")]
        upsample: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR / MSE / MAE of an estimate against a reference volume.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        n0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all regularization variants and tabulate their scores.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the CNN denoiser on synthetic textures.
    DenoiserTrain {
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// Number of training textures.
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 48)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a slice (PNG or CSV) or a line profile of a volume.
    Export {
        #[arg(long)]
        volume: PathBuf,
        /// re, im or ri (real RI contrast).
        #[arg(long, default_value = "re")]
        channel: String,
        #[arg(long, default_value_t = 1.0)]
        n0: f64,
        #[arg(long, default_value = "z")]
        axis: SliceAxis,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value = "png")]
        format: String,
        /// Line profile `z,x,y:z,x,y` instead of a slice.
        #[arg(long)]
        line: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::Evanescent { .. } => 2,
        Error::Io(_) | Error::Format { .. } => 3,
        Error::Divergence { .. } => 4,
        Error::ShapeMismatch { .. }
        | Error::OutOfBounds { .. }
        | Error::UnknownBlock(_)
        | Error::ZeroRefractiveIndex(_)
        | Error::IdenticalInputs => 5,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn save_config(dir: &Path, cfg: &RunConfig) -> Result<(), Error> {
    fs::write(dir.join("config.json"), cfg.to_json()?)?;
    Ok(())
}

fn measurements_path(arg: Option<PathBuf>, cfg: &RunConfig, base: &Path) -> Result<PathBuf, Error> {
    arg.or_else(|| cfg.paths.measurements.as_ref().map(|p| base.join(p)))
        .ok_or_else(|| Error::Config("no measurements given (--measurements or paths.measurements)".into()))
}

fn reference_path(arg: Option<PathBuf>, cfg: &RunConfig, base: &Path) -> Option<PathBuf> {
    arg.or_else(|| cfg.paths.reference.as_ref().map(|p| base.join(p)))
}

fn parse_upsample(s: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad upsample '{s}', expected e.g. 2x2x4")))?;
    match parts[..] {
        [fx, fy, fz] => Ok((fx, fy, fz)),
        _ => Err(Error::Config(format!("bad upsample '{s}', expected e.g. 2x2x4"))),
    }
}

fn parse_voxel(s: &str) -> Result<[usize; 3], Error> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad voxel '{s}', expected z,x,y")))?;
    v.try_into().map_err(|_| Error::Config(format!("bad voxel '{s}', expected z,x,y")))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            spec,
            setup,
            noise,
            out,
        } => {
            let (mut cfg, _) = config.load()?;
            if let Some(p) = setup {
                cfg.setup = SetupConfig::Preset {
                    name: p,
                    options: Default::default(),
                };
            }
            if let Some(std) = noise {
                cfg.noise.std = std;
                cfg.noise.kind = if std > 0.0 { NoiseKind::Gaussian } else { NoiseKind::None };
            }
            if let Some(path) = spec {
                let spec: PhantomSpec = serde_json::from_str(&fs::read_to_string(&path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                cfg.grid = spec.grid;
                cfg.phantom.cells = Some(spec.cells);
                cfg.phantom.seed = spec.seed;
            }
            cfg.validate()?;
            fs::create_dir_all(&out)?;
            let sim = simulate_run(&cfg)?;
            write_volume(&out.join("phantom.dcaf"), &sim.phantom)?;
            write_measurements(&out.join("measurements.dcam"), &sim.measurements)?;
            cfg.paths.measurements = Some("measurements.dcam".into());
            cfg.paths.reference = Some("phantom.dcaf".into());
            save_config(&out, &cfg)?;
            println!(
                "simulated {} measurements of {}x{} on {}",
                sim.measurements.count(),
                cfg.grid.nx,
                cfg.grid.ny,
                out.display()
            );
        }
        Command::Reconstruct {
            config,
            measurements,
            iterations,
            blocks,
            variant,
            out,
        } => {
            let (mut cfg, base) = config.load()?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            if let Some(b) = blocks {
                cfg.partition.blocks = b;
            }
            cfg.validate()?;
            let meas = read_measurements(&measurements_path(measurements, &cfg, &base)?)?;
            let denoiser = cfg.denoiser.build(&base)?;
            fs::create_dir_all(&out)?;
            let rec = reconstruct_run(&cfg, &meas, &variant.apply(cfg.loss), &denoiser)?;
            write_field(&out.join("field.dcfw"), &rec.state.field)?;
            write_volume(&out.join("volume.dcaf"), &rec.volume)?;
            write_log_csv(&out.join("log.csv"), rec.history())?;
            save_config(&out, &cfg)?;
            if let Some(last) = rec.history().last() {
                println!("iteration {}: loss {:.6e}, mae {:.6e}", last.iter, last.total, last.mae);
            }
        }
        Command::Tikhonov {
            config,
            measurements,
            tau,
            reference,
            out,
        } => {
            let (mut cfg, base) = config.load()?;
            if tau.is_some() {
                cfg.tikhonov.tau = tau;
            }
            cfg.validate()?;
            let meas = read_measurements(&measurements_path(measurements, &cfg, &base)?)?;
            let reference = reference_path(reference, &cfg, &base).map(|p| read_volume(&p)).transpose()?;
            let (vol, report) = tikhonov_run(&cfg, &meas, reference.as_ref())?;
            write_volume(&out, &vol)?;
            println!("tau {:e}", report.tau);
            for (t, p) in &report.sweep {
                println!("  tau {t:e}: PSNR {p:.3} dB");
            }
        }
        Command::Render {
            config,
            weights,
            upsample,
            out,
        } => {
            let (cfg, _) = config.load()?;
            let (fx, fy, fz) = parse_upsample(&upsample)?;
            let field = read_field(&weights)?;
            let grid = cfg.grid.upsampled(fx, fy, fz).map_err(|e| Error::Config(e.to_string()))?;
            write_volume(&out, &field.render_grid(&grid)?)?;
            println!("rendered {}x{}x{} to {}", grid.nx, grid.ny, grid.nz, out.display());
        }
        Command::Evaluate {
            reference,
            estimate,
            n0,
            out,
        } => {
            let r = read_volume(&reference)?;
            let e = read_volume(&estimate)?;
            let json = match evaluate(&r, &e, n0) {
                Ok(m) => serde_json::to_value(m)?,
                Err(Error::IdenticalInputs) => {
                    eprintln!("identical inputs: PSNR is unbounded");
                    serde_json::json!({ "diagnostic": "identical inputs", "mse": 0.0, "mae": 0.0 })
                }
                Err(e) => return Err(e),
            };
            let text = serde_json::to_string_pretty(&json)?;
            match out {
                Some(p) => fs::write(p, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Ablate {
            config,
            measurements,
            reference,
            out,
        } => {
            let (cfg, base) = config.load()?;
            let meas = read_measurements(&measurements_path(measurements, &cfg, &base)?)?;
            let reference = match reference_path(reference, &cfg, &base) {
                Some(p) => read_volume(&p)?,
                None => make_phantom(&cfg.phantom.spec(cfg.grid))?,
            };
            fs::create_dir_all(&out)?;
            let report = ablate_run(&cfg, &meas, &reference, &base, &AblationVariant::ALL, |row, rec| {
                eprintln!("{}: PSNR {:.3} dB", row.variant.name(), row.eval.psnr_db);
                let path = out.join(format!("{}.csv", row.variant.name()));
                if let Err(e) = write_log_csv(&path, rec.history()) {
                    eprintln!("could not write {}: {e}", path.display());
                }
            })?;
            write_json(&out.join("ablation.json"), &report)?;
            save_config(&out, &cfg)?;
            print!("{}", report.table());
        }
        Command::DenoiserTrain {
            sigma,
            seed,
            epochs,
            count,
            size,
            out,
        } => {
            let dataset = make_texture_dataset(count, size, sigma, seed)?;
            let config = DncnnConfig { seed, ..Default::default() };
            let training = DncnnTraining {
                epochs,
                seed,
                ..Default::default()
            };
            let (net, losses) = train_dncnn(&config, &dataset, &training)?;
            write_denoiser(&out, &net, sigma)?;
            if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
                println!("epoch loss {first:.5} -> {last:.5}");
            }
        }
        Command::Export {
            volume,
            channel,
            n0,
            axis,
            index,
            format,
            line,
            out,
        } => {
            let vol: PermittivityVolume = read_volume(&volume)?;
            let data = match channel.as_str() {
                "re" => vol.re,
                "im" => vol.im,
                "ri" => permittivity_to_ri(&vol, n0)?.contrast(),
                other => return Err(Error::Config(format!("unknown channel '{other}'"))),
            };
            if let Some(spec) = line {
                let (a, b) = spec
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("bad line '{spec}', expected z,x,y:z,x,y")))?;
                export_line_profile(&data, &line_path(parse_voxel(a)?, parse_voxel(b)?), &out)?;
            } else {
                let format = match format.as_str() {
                    "png" => ExportFormat::Png,
                    "csv" => ExportFormat::Csv,
                    other => return Err(Error::Config(format!("unknown format '{other}'"))),
                };
                export_slice(&data, axis, index, format, &out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("DECAF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // a pool that already exists keeps its size
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
