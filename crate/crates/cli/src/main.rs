use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dopplerloc::harness::{
    config_digest, emit_report, run_direction_experiment, run_localization_experiment, run_tracking_experiment,
    synthesize_recording, write_manifest, ExperimentReport, ExperimentSettings,
};
use dopplerloc::scenario::{load_scenario, plan_channels, plan_channels_with_guard, PatternKind, Scenario, HAND_SPEED_MAX};
use dopplerloc::{Error, Result};

#[derive(Parser)]
#[command(name = "dopplerloc", version, about = "Doppler-based acoustic direction finding and indoor localization")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; every trial derives its generator from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Directory receiving the CSV files and manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Direction trials, or localization trials per spot.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Fraction of each tracking frame that is processed, (0, 1].
    #[arg(long, global = true)]
    duty: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the scenario and run the signal chain on every channel.
    Synth,
    /// Repeat a single-anchor shake and report the direction error.
    Direction,
    /// Locate the phone at each configured spot and report the position error.
    Localize,
    /// Track the phone along the scenario's walk.
    Track,
    /// Run every experiment the scenario supports.
    Eval,
    /// Print how many anchors fit in a band.
    PlanChannels {
        #[arg(long, default_value_t = 17000.0)]
        low: f64,
        #[arg(long, default_value_t = 22050.0)]
        high: f64,
        /// Largest hand speed, m/s.
        #[arg(long, default_value_t = HAND_SPEED_MAX)]
        v_max: f64,
        #[arg(long, default_value_t = 19000.0)]
        carrier: f64,
        /// Taken from the scenario when `--config` is given.
        #[arg(long)]
        speed_of_sound: Option<f64>,
        /// Guard between adjacent pass bands as a fraction of the pass band;
        /// without it the count is the rounded band/pass-band ratio.
        #[arg(long)]
        guard: Option<f64>,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scenario(&text)
}

fn scenario(cli: &Cli) -> Result<Scenario> {
    match &cli.config {
        Some(p) => load(p),
        None => Err(Error::invariant("--config", "this command needs a scenario file")),
    }
}

fn settings(cli: &Cli, scenario: &Scenario) -> Result<ExperimentSettings> {
    let mut s = ExperimentSettings::from_scenario(scenario)?;
    if let Some(n) = cli.trials {
        s.direction.trials = n;
        s.localization.trials_per_spot = n;
    }
    if let Some(d) = cli.duty {
        s.tracking.duty_cycle = d;
        s.tracking.validate()?;
    }
    Ok(s)
}

fn finish(report: &ExperimentReport, dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    files.extend(emit_report(report, dir)?);
    print!("{}", report.summary_text());
    Ok(())
}

fn run_direction(s: &Scenario, x: &ExperimentSettings, cli: &Cli, files: &mut Vec<PathBuf>) -> Result<()> {
    let report = run_direction_experiment(s, &x.direction, &x.noise, cli.seed)?;
    finish(&report, &cli.out_dir, files)
}

fn run_localize(s: &Scenario, x: &ExperimentSettings, cli: &Cli, files: &mut Vec<PathBuf>) -> Result<()> {
    let report = run_localization_experiment(s, &x.localization, &x.noise, cli.seed)?;
    finish(&report, &cli.out_dir, files)
}

fn run_track(s: &Scenario, x: &ExperimentSettings, cli: &Cli, files: &mut Vec<PathBuf>) -> Result<()> {
    let outcome = run_tracking_experiment(s, &x.tracking, &x.noise, cli.seed)?;
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    files.extend(outcome.emit(&cli.out_dir)?);
    print!("{}", outcome.report.summary_text());
    if let Some(e) = outcome.final_error() {
        println!("final        {e:.4} m");
    }
    println!("lock losses  {}", outcome.lock_loss.len());
    Ok(())
}

fn plan(low: f64, high: f64, v_max: f64, carrier: f64, speed_of_sound: f64, guard: Option<f64>) -> Result<()> {
    let plan = match guard {
        Some(g) => plan_channels_with_guard(low, high, v_max, speed_of_sound, carrier, g)?,
        None => plan_channels(low, high, v_max, speed_of_sound, carrier)?,
    };
    let mut out = format!(
        "band         {:.1}-{:.1} Hz\npass band    {:.3} Hz\nspacing      {:.3} Hz\nchannels     {}\n",
        plan.band_low,
        plan.band_high,
        plan.pass_band,
        plan.spacing(),
        plan.capacity()
    );
    for (i, c) in plan.centers.iter().enumerate() {
        out.push_str(&format!("  {:>3}  {c:.1} Hz\n", i + 1));
    }
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = std::io::stdout().write_all(out.as_bytes());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::PlanChannels {
        low,
        high,
        v_max,
        carrier,
        speed_of_sound,
        guard,
    } = cli.command
    {
        let c = match (speed_of_sound, &cli.config) {
            (Some(c), _) => c,
            (None, Some(p)) => load(p)?.world.speed_of_sound,
            (None, None) => 340.0,
        };
        return plan(low, high, v_max, carrier, c, guard);
    }

    let s = scenario(cli)?;
    let x = settings(cli, &s)?;
    let start = Instant::now();
    let mut files = Vec::new();
    let name = match cli.command {
        Command::Synth => {
            let rec = synthesize_recording(&s, &x.noise, cli.seed)?;
            files.extend(rec.emit(&s, &cli.out_dir)?);
            println!(
                "synthesized {:.2} s, {} anchors, {} audio samples",
                rec.trajectory.duration(),
                s.anchors.len(),
                rec.pcm.len()
            );
            if rec.pcm.is_clipped() {
                eprintln!("warning: the mixed recording clips");
            }
            "synth"
        }
        Command::Direction => {
            run_direction(&s, &x, cli, &mut files)?;
            "direction"
        }
        Command::Localize => {
            run_localize(&s, &x, cli, &mut files)?;
            "localize"
        }
        Command::Track => {
            run_track(&s, &x, cli, &mut files)?;
            "track"
        }
        Command::Eval => {
            if s.motion.pattern == PatternKind::WalkPath {
                run_track(&s, &x, cli, &mut files)?;
            } else {
                run_direction(&s, &x, cli, &mut files)?;
                if s.anchors.len() >= 3 {
                    run_localize(&s, &x, cli, &mut files)?;
                }
            }
            "eval"
        }
        Command::PlanChannels { .. } => unreachable!("handled above"),
    };
    let manifest = write_manifest(&cli.out_dir, name, cli.seed, &config_digest(&s), &files)?;
    eprintln!(
        "wrote {} files and {} in {:.1} s",
        files.len(),
        manifest.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
