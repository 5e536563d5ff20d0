use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadside::io;
use roadside::{run_scenario, sweep_angles, Error, NoiseSpec, ScenarioSpec};
use roadside_core::detect::{detect_events, CusumConfig};
use roadside_core::filter::{filter_stream, FilterConfig};
use roadside_core::noise::NoiseModel;
use roadside_core::sim::synthesize_pass;
use roadside_core::{SensorConfig, VehiclePass};

#[derive(Parser)]
#[command(
    name = "roadside",
    version,
    about = "Simulate and evaluate angled ultrasonic vehicle sensors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
    /// Noise preset: paper-calibrated or noiseless.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Args)]
struct SensorArgs {
    #[arg(long, default_value_t = 45.0)]
    angle: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario; writes PREFIX.passes.jsonl and PREFIX.cells.csv.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Single-module errors per angle; writes PREFIX.sweep.csv.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "30,45,60,90,135,150")]
        angles: Vec<f64>,
        #[command(flatten)]
        over: Overrides,
    },
    /// Synthesize raw readings for one pass as CSV.
    Synth {
        #[command(flatten)]
        sensor: SensorArgs,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        #[arg(long, default_value_t = 3.7)]
        length: f64,
        #[arg(long, default_value_t = 2.0)]
        lateral: f64,
        #[arg(long, default_value = "paper-calibrated")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter a raw sample CSV into a smoothed window CSV.
    Filter {
        input: PathBuf,
        #[command(flatten)]
        sensor: SensorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect pass events in a filtered CSV; prints JSON lines.
    Detect {
        input: PathBuf,
        #[command(flatten)]
        sensor: SensorArgs,
    },
}

fn load(path: &Path, over: &Overrides) -> Result<ScenarioSpec, Error> {
    let mut spec = ScenarioSpec::load(path)?;
    if let Some(s) = over.seed {
        spec.seed = s;
    }
    if let Some(p) = &over.preset {
        spec.noise = NoiseSpec::Preset(p.clone());
    }
    if let Some(r) = over.repetitions {
        spec.repetitions = r;
    }
    if let Some(o) = &over.out {
        spec.output = Some(o.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn prefix(spec: &ScenarioSpec) -> String {
    spec.output
        .clone()
        .unwrap_or_else(|| format!("out/{}", spec.name))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Run { scenario, over } => {
            let spec = load(&scenario, &over)?;
            let res = run_scenario(&spec)?;
            let p = prefix(&spec);
            io::save_records(Path::new(&format!("{p}.passes.jsonl")), &res.records)?;
            io::save_cells(Path::new(&format!("{p}.cells.csv")), &res.cells)?;
            io::write_csv(std::io::stdout().lock(), &res.cells)?;
            let excluded: usize = res.records.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "{}: {} records, {excluded} excluded",
                spec.name,
                res.records.len()
            );
        }
        Cmd::Sweep {
            scenario,
            angles,
            over,
        } => {
            let spec = load(&scenario, &over)?;
            let rows = sweep_angles(&spec, &angles)?;
            io::save_sweep(Path::new(&format!("{}.sweep.csv", prefix(&spec))), &rows)?;
            io::write_csv(std::io::stdout().lock(), &rows)?;
        }
        Cmd::Synth {
            sensor,
            speed,
            length,
            lateral,
            preset,
            seed,
            out,
        } => {
            let cfg = SensorConfig::default().with_angle(sensor.angle);
            let noise = NoiseModel::preset(&preset)
                .ok_or(Error::UnknownPreset(preset))?
                .with_seed(seed);
            let pass = VehiclePass {
                length_m: length,
                speed_mps: speed,
                lateral_near_m: lateral,
                start_x_m: 0.0,
            }
            .with_first_contact_at(&cfg, 0.1)?;
            io::save_samples(&out, &synthesize_pass(&cfg, &pass, &noise)?)?;
        }
        Cmd::Filter { input, sensor, out } => {
            let cfg = SensorConfig::default().with_angle(sensor.angle);
            let samples = io::load_samples(&input)?;
            let stream = filter_stream(&samples, &FilterConfig::for_burst(cfg.burst_size), &cfg)?;
            io::save_filtered(&out, &stream)?;
        }
        Cmd::Detect { input, sensor } => {
            let cfg = SensorConfig::default().with_angle(sensor.angle);
            let stream = io::load_filtered(&input)?;
            let passes = detect_events(&stream, &cfg, &CusumConfig::default())?;
            let events: Vec<_> = passes.iter().flat_map(|p| p.events()).collect();
            io::write_jsonl(std::io::stdout().lock(), &events)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}
