use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tubempc::defaults;
use tubempc::ident::{generate_synthetic_drive, select_models, DriveLog, DriveProfile, SelectionConfig};
use tubempc::invariant_sets::synthesize_bank;
use tubempc::models::ModelBank;
use tubempc::sim::{
    compute_metrics, load_assets, read_csv, render_svg, run_closed_loop, write_csv, Scenario, SimOptions,
};
use tubempc::verify::{verify_bundles, verify_log, VerifyConfig};
use tubempc::Error;

#[derive(Parser)]
#[command(
    name = "tubempc",
    version,
    about = "Multi-model tube MPC for longitudinal position tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the data generator, the disturbance or the samplers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Upper velocity bound in m/s; bundles are synthesized for it.
    #[arg(long, global = true)]
    vmax: Option<f64>,
    /// Disable the multi-model feasibility constraints.
    #[arg(long, global = true)]
    no_mmrrf: bool,
    /// Disturb the measured acceleration instead of the plant state.
    #[arg(long, global = true)]
    feedback_noise: bool,
    /// Record wall-clock solve times in the log.
    #[arg(long, global = true)]
    wall_time: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Identify a model bank from a drive log or synthetic data.
    Identify {
        /// Generate the drive log from the built-in ground-truth bank.
        #[arg(long, conflicts_with_all = ["log", "preset"])]
        synthetic: bool,
        /// Drive log CSV with columns t,a_set,a_veh,v_veh.
        #[arg(long, required_unless_present_any = ["synthetic", "preset"])]
        log: Option<PathBuf>,
        /// Write a built-in bank instead of identifying one.
        #[arg(long, value_enum, conflicts_with = "log")]
        preset: Option<Preset>,
        /// Standard deviation of the measurement noise on synthetic data.
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Synthesize controller bundles for a bank.
    Synthesize {
        /// Model bank JSON; defaults to the scenario's bank.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Run the closed loop and write the log and plot.
    Simulate,
    /// Check the stored bundles and one closed-loop run.
    Verify,
    /// Summarize a closed-loop log as JSON.
    Metrics {
        /// SimLog CSV.
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Ground truth of the synthetic data generator.
    Truth,
    /// Two models with conflicting input boxes across 5 m/s.
    Adversarial,
}

/// Failures mapped to exit codes: 2 for configuration, 1 otherwise.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn scenario(c: &Common) -> Result<Scenario, Failure> {
    let mut sc = match &c.config {
        Some(p) => Scenario::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("{}: {io}", p.display())),
            e => e.into(),
        })?,
        None => Scenario::default(),
    };
    if let Some(v) = c.vmax {
        sc.v_max = Some(v);
    }
    if c.no_mmrrf {
        sc.controller.mmrrf = false;
    }
    if c.feedback_noise {
        sc.feedback_noise = true;
    }
    sc.validate()?;
    Ok(sc)
}

fn identify(
    c: &Common,
    synthetic: bool,
    log: Option<&Path>,
    preset: Option<Preset>,
    noise_std: f64,
) -> Result<(), Failure> {
    std::fs::create_dir_all(&c.out)?;
    let path = c.out.join("bank.json");
    if let Some(p) = preset {
        let bank = match p {
            Preset::Truth => defaults::true_bank(),
            Preset::Adversarial => defaults::adversarial_bank(),
        };
        bank.save(&path)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let drive = if synthetic {
        let d = generate_synthetic_drive(
            &defaults::true_bank(),
            &DriveProfile::city_loop(),
            noise_std,
            c.seed.unwrap_or(1),
        )?;
        d.write_csv(&c.out.join("drive.csv"))?;
        d
    } else {
        DriveLog::read_csv(log.expect("required by clap"))?
    };
    let bank = select_models(&drive, &defaults::grid(), &SelectionConfig::default())?;
    bank.save(&path)?;
    for e in &bank.models {
        let nrmse = e.fit.as_ref().and_then(|f| f.nrmse);
        println!(
            "{:<10} nk {} a {:?} b {:?} nrmse {}{}",
            e.id,
            e.model.nk,
            e.model.a,
            e.model.b,
            nrmse.map_or("-".into(), |v| format!("{v:.4}")),
            if e.is_backup { " backup" } else { "" }
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn synthesize(c: &Common, bank: Option<&Path>) -> Result<(), Failure> {
    let sc = scenario(c)?;
    let path = bank
        .map(Path::to_path_buf)
        .or(sc.bank.clone())
        .ok_or_else(|| Failure::Config("no model bank given (--bank or the scenario's bank)".into()))?;
    let bank = ModelBank::load(&path)?;
    let started = Instant::now();
    let bundles = synthesize_bank(&bank, &sc.synthesis_config())?;
    info!("synthesized {} bundles in {:?}", bundles.len(), started.elapsed());
    std::fs::create_dir_all(&c.out)?;
    for b in &bundles {
        let p = b.save(&c.out)?;
        println!(
            "{} Z {} rows, F {} rows -> {}",
            b.model_id,
            b.z.num_rows(),
            b.f.num_rows(),
            p.display()
        );
    }
    Ok(())
}

fn simulate(c: &Common) -> Result<(), Failure> {
    let mut sc = scenario(c)?;
    if let Some(s) = c.seed {
        sc.disturbance.seed = s;
    }
    let (bank, bundles) = load_assets(&sc)?;
    let log = run_closed_loop(&sc, &bank, bundles, SimOptions { wall_time: c.wall_time })?;
    std::fs::create_dir_all(&c.out)?;
    let csv = c.out.join("sim.csv");
    write_csv(&log.rows, BufWriter::new(File::create(&csv)?))?;
    let svg = c.out.join("sim.svg");
    std::fs::write(&svg, render_svg(&log.rows))?;
    let m = compute_metrics(&log.rows, &sc.limit_table(Some(&bank)));
    println!(
        "steps {} switches {} (backup {}) infeasible {} relaxed {} violations {} max|e_s| {:.4} m",
        m.steps, m.switches, m.backup_switches, m.infeasible_steps, m.relaxed_steps, m.violations.total, m.max_abs_e_s
    );
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}

/// Returns whether every check passed.
fn verify(c: &Common) -> Result<bool, Failure> {
    let mut sc = scenario(c)?;
    let vc = VerifyConfig {
        seed: c.seed.unwrap_or(1),
        ..VerifyConfig::default()
    };
    if let Some(s) = c.seed {
        sc.disturbance.seed = s;
    }
    let (bank, bundles) = load_assets(&sc)?;
    let (mut results, log) = rayon::join(
        || verify_bundles(&bundles, &vc),
        || run_closed_loop(&sc, &bank, bundles.clone(), SimOptions::default()),
    );
    results.extend(verify_log(&log?, &sc.limit_table(Some(&bank)), vc.set_tol));
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        println!(
            "{} {:<20} {:<10} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.model.as_deref().unwrap_or("-"),
            r.detail
        );
    }
    Ok(ok)
}

fn metrics(c: &Common, log: &Path) -> Result<(), Failure> {
    let (sc, bank) = match &c.config {
        Some(_) => {
            let sc = scenario(c)?;
            let bank = sc.bank.as_deref().map(ModelBank::load).transpose()?;
            (sc, bank)
        }
        None => (scenario(c)?, None),
    };
    let rows = read_csv(File::open(log).map_err(|e| Failure::Config(format!("{}: {e}", log.display())))?)?;
    let m = compute_metrics(&rows, &sc.limit_table(bank.as_ref()));
    let json = serde_json::to_string_pretty(&m).map_err(|e| Failure::Run(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let c = &cli.common;
    let res = match &cli.command {
        Command::Identify {
            synthetic,
            log,
            preset,
            noise_std,
        } => identify(c, *synthetic, log.as_deref(), *preset, *noise_std),
        Command::Synthesize { bank } => synthesize(c, bank.as_deref()),
        Command::Simulate => simulate(c),
        Command::Verify => match verify(c) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Metrics { log } => metrics(c, log),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
