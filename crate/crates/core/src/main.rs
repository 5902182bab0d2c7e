use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stagger_core::angle::{
    estimate_calibration, CalibrationVector, CartesianConfig, DEFAULT_CALIBRATION_SNR_DB,
};
use stagger_core::array::ArrayGeometry;
use stagger_core::demo;
use stagger_core::io::{
    export_pgm, read_cube, read_json, read_map, write_cube, write_json, write_map,
};
use stagger_core::params::{build_frame_plan, RadarParams};
use stagger_core::pipeline::{run_pipeline, DetectionFile, PipelineOptions, UnfoldMode};
use stagger_core::sim::{simulate_frame, Scene};
use stagger_core::RadarError;

#[derive(Parser)]
#[command(
    name = "stagger",
    version,
    about = "Staggered-TDM MIMO radar simulator and processing chain"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a staggered frame pair from a scene file.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Overrides the scene's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Index of the first frame; the second frame follows it.
        #[arg(long, default_value_t = 0)]
        frame: u32,
        #[arg(long)]
        out_a: PathBuf,
        #[arg(long)]
        out_b: PathBuf,
    },
    /// Run the receive pipeline on a frame pair.
    Process {
        #[arg(long)]
        in_a: PathBuf,
        #[arg(long)]
        in_b: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        cal: Option<PathBuf>,
        /// Range-azimuth map of frame A.
        #[arg(long)]
        out_map: Option<PathBuf>,
        /// Range-azimuth map of frame B.
        #[arg(long)]
        out_map_b: Option<PathBuf>,
        #[arg(long)]
        out_det: Option<PathBuf>,
        /// Write Cartesian instead of polar maps.
        #[arg(long)]
        cartesian: bool,
        /// Skip the candidate intersection and resolve by overlap phase only.
        #[arg(long)]
        overlap_only: bool,
    },
    /// Estimate channel calibration from a corner-reflector frame.
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        range: f64,
        #[arg(long, allow_negative_numbers = true)]
        azimuth: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CALIBRATION_SNR_DB)]
        snr_threshold: f64,
    },
    /// Run one of the built-in experiments and check it.
    Demo {
        #[arg(value_enum)]
        which: DemoName,
    },
    /// Convert a map file to a 16-bit PGM image.
    ExportPgm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lower clip level, dB (default: the map floor).
        #[arg(long, allow_negative_numbers = true)]
        floor_db: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    Unfold,
    ResolutionAngle,
    ResolutionRange,
    Compensation,
}

enum Failure {
    Data(RadarError),
    Demo,
}

impl From<RadarError> for Failure {
    fn from(e: RadarError) -> Self {
        Failure::Data(e)
    }
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T, RadarError> {
    path.as_ref().map_or_else(|| Ok(T::default()), read_json)
}

fn check_digest(path: &Path, found: &[u8; 32], params: &RadarParams) {
    if *found != params.digest() {
        eprintln!(
            "warning: {} was written with different radar parameters",
            path.display()
        );
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            scene,
            params,
            geometry,
            seed,
            frame,
            out_a,
            out_b,
        } => {
            let mut scene: Scene = read_json(&scene)?;
            let params: RadarParams = load_or_default(&params)?;
            let geometry: ArrayGeometry = load_or_default(&geometry)?;
            if let Some(seed) = seed {
                scene.rng_seed = seed;
            }
            let digest = params.digest();
            let a = simulate_frame(&scene, &params, &geometry, frame)?;
            write_cube(&a, &digest, &out_a)?;
            let b = simulate_frame(&scene, &params, &geometry, frame + 1)?;
            write_cube(&b, &digest, &out_b)?;
        }
        Command::Process {
            in_a,
            in_b,
            params,
            geometry,
            cal,
            out_map,
            out_map_b,
            out_det,
            cartesian,
            overlap_only,
        } => {
            let params: RadarParams = load_or_default(&params)?;
            let geometry: ArrayGeometry = load_or_default(&geometry)?;
            let cal: Option<CalibrationVector> = cal.as_ref().map(read_json).transpose()?;
            let (ha, a) = read_cube(&in_a)?;
            let (hb, b) = read_cube(&in_b)?;
            check_digest(&in_a, &ha.params_digest, &params);
            check_digest(&in_b, &hb.params_digest, &params);
            let options = PipelineOptions {
                maps: out_map.is_some() || out_map_b.is_some(),
                cartesian: cartesian.then(CartesianConfig::default),
                unfold: if overlap_only {
                    UnfoldMode::OverlapOnly
                } else {
                    UnfoldMode::Staggered
                },
                ..PipelineOptions::default()
            };
            let out = run_pipeline(&a, &b, &params, &geometry, cal.as_ref(), &options)?;
            let maps = if cartesian { &out.cartesian } else { &out.maps };
            if let Some((ma, mb)) = maps {
                if let Some(path) = &out_map {
                    write_map(ma, path)?;
                }
                if let Some(path) = &out_map_b {
                    write_map(mb, path)?;
                }
            }
            let file = DetectionFile {
                frame_a: a.frame_index,
                frame_b: b.frame_index,
                detections: out.detections,
            };
            match &out_det {
                Some(path) => write_json(&file, path)?,
                None => {
                    for d in &file.detections {
                        println!(
                            "range {:8.3} m  velocity {:8.3} m/s  azimuth {:7.2} deg  power {:6.1} dB",
                            d.range, d.velocity, d.azimuth, d.power_db
                        );
                    }
                }
            }
        }
        Command::Calibrate {
            input,
            range,
            azimuth,
            out,
            params,
            geometry,
            snr_threshold,
        } => {
            let params: RadarParams = load_or_default(&params)?;
            let geometry: ArrayGeometry = load_or_default(&geometry)?;
            let (header, cube) = read_cube(&input)?;
            check_digest(&input, &header.params_digest, &params);
            let plan = build_frame_plan(&params, cube.frame_index)?;
            let cal = estimate_calibration(
                &cube,
                &plan,
                (range, azimuth),
                &params,
                &geometry,
                snr_threshold,
            )?;
            write_json(&cal, &out)?;
        }
        Command::Demo { which } => {
            let report = match which {
                DemoName::Unfold => demo::demo_unfold()?,
                DemoName::ResolutionAngle => demo::demo_resolution_angle()?,
                DemoName::ResolutionRange => demo::demo_resolution_range()?,
                DemoName::Compensation => demo::demo_compensation()?,
            };
            print!("{}", report.render());
            if !report.passed() {
                return Err(Failure::Demo);
            }
        }
        Command::ExportPgm {
            input,
            out,
            floor_db,
        } => {
            let (_, map) = read_map(&input)?;
            export_pgm(&map, &out, floor_db)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Demo) => ExitCode::from(3),
    }
}
