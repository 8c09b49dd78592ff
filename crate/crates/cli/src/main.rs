use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nearfocus_core::beamfocus::{quantize_phase, BeamfocusingMatrix, PowerMap};
use nearfocus_core::harness::{run_experiment, ExperimentConfig};
use nearfocus_core::pdi::{circular_pearson, ecc, PhaseImage, RotationSet};
use nearfocus_core::transfer::PolicyLibrary;
use nearfocus_core::Error;

#[derive(Parser)]
#[command(name = "nearfocus", version, about = "Near-field beamfocusing experiments")]
struct Cli {
    /// Raise log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Correlation and rotation-maximized correlation of two PDI files.
    Similarity {
        pdi_a: PathBuf,
        pdi_b: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        theta_step: f64,
    },
    /// Power on the reference plane for a full-aperture PDI, as CSV on stdout.
    PowerMap { policy: PathBuf, scene: PathBuf },
    /// Beamfocusing radius of a full-aperture PDI.
    Bfr {
        policy: PathBuf,
        scene: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        eta: f64,
    },
    /// Inspect a stored policy library.
    Library {
        #[command(subcommand)]
        command: LibraryCommand,
    },
    /// Print a preset config.
    Config { preset: Preset },
}

#[derive(Subcommand)]
enum LibraryCommand {
    /// One line per entry.
    Ls { path: PathBuf },
    /// Focal point, PDIs and network shapes of each entry.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        entry: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Desk,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Format { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_pdi(path: &Path) -> Result<PhaseImage, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "pgm") {
        PhaseImage::from_pgm(&bytes)
    } else {
        PhaseImage::from_csv(&String::from_utf8_lossy(&bytes))
    };
    parsed.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path, bits: u32) -> Result<BeamfocusingMatrix, Failure> {
    let img = read_pdi(path)?;
    let idx = img.values().iter().map(|&p| quantize_phase(p, bits)).collect();
    Ok(BeamfocusingMatrix::new(img.rows(), img.cols(), bits, idx)?)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn focused_map(policy: &Path, scene: &Path) -> Result<PowerMap, Failure> {
    let cfg = load_config(scene)?;
    let aperture = &cfg.scene.aperture;
    let w = read_matrix(policy, aperture.phase_bits)?;
    let model = cfg.scene.model()?;
    Ok(nearfocus_core::beamfocus::power_density_map(
        &w,
        cfg.dfp_m,
        &cfg.power_map.plane,
        aperture,
        &model,
    )?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::Config("no output directory: pass --out or set output_dir".into()))?;
            let outputs = run_experiment(&cfg, &dir)?;
            println!("wrote {} files to {}", outputs.files().len(), dir.display());
        }
        Command::Similarity {
            pdi_a,
            pdi_b,
            theta_step,
        } => {
            let (a, b) = (read_pdi(&pdi_a)?, read_pdi(&pdi_b)?);
            let c = circular_pearson(&a, &b)?;
            let set = RotationSet::step_degrees(theta_step).map_err(|e| Failure::Config(e.to_string()))?;
            let e = ecc(&a, &b, &set)?;
            println!("correlation,ecc,angle_deg");
            println!("{},{},{}", c.value, e.value, e.angle.to_degrees());
        }
        Command::PowerMap { policy, scene } => {
            let map = focused_map(&policy, &scene)?;
            let n = map.plane.resolution;
            println!("column,row,offset_u_m,offset_v_m,power");
            for b in 0..n {
                for a in 0..n {
                    let (du, dv) = map.plane.offset(a, b);
                    println!("{a},{b},{du},{dv},{:e}", map.values[b * n + a]);
                }
            }
        }
        Command::Bfr { policy, scene, eta } => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Failure::Config(format!("--eta {eta} outside (0, 1]")));
            }
            let map = focused_map(&policy, &scene)?;
            println!("eta,radius_m");
            println!("{eta},{}", map.radius_containing(eta)?);
        }
        Command::Library { command } => match command {
            LibraryCommand::Ls { path } => {
                let lib = PolicyLibrary::load(&path)?;
                println!("entry,dfp_x_m,dfp_y_m,dfp_z_m,subarrays,budget,achieved_power");
                for (i, e) in lib.entries().iter().enumerate() {
                    println!(
                        "{i},{},{},{},{},{},{}",
                        e.dfp.x,
                        e.dfp.y,
                        e.dfp.z,
                        e.policies.len(),
                        e.budget,
                        e.achieved_power
                    );
                }
            }
            LibraryCommand::Inspect { path, entry } => {
                let lib = PolicyLibrary::load(&path)?;
                let picked: Vec<usize> = match entry {
                    Some(i) if i < lib.len() => vec![i],
                    Some(i) => return Err(Failure::Config(format!("entry {i} outside 0..{}", lib.len()))),
                    None => (0..lib.len()).collect(),
                };
                for i in picked {
                    let e = &lib.entries()[i];
                    println!("entry {i}");
                    println!("  dfp_m = {}", e.dfp);
                    println!(
                        "  seed = {}, budget = {}, learning_rate = {}",
                        e.seed, e.budget, e.learning_rate
                    );
                    println!("  achieved_power = {}", e.achieved_power);
                    for (m, (p, pdi)) in e.policies.iter().zip(&e.pdis).enumerate() {
                        println!(
                            "  subarray {m}: {}x{} pdi, actor {} params, critic {} params",
                            pdi.rows,
                            pdi.cols,
                            p.actor.param_count(),
                            p.critics[0].param_count()
                        );
                        for row in PhaseImage::from_matrix(pdi).to_csv().lines() {
                            println!("    {row}");
                        }
                    }
                }
            }
        },
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Full => ExperimentConfig::full_scale(),
                Preset::Desk => ExperimentConfig::desk(),
            };
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
