use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harmonize::config::Config;
use harmonize::pipeline::{Pipeline, Variant};

#[derive(Parser)]
#[command(
    name = "lidar-harmonize",
    about = "Harmonize intensities across overlapping LiDAR scans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scene and cut it into flight strips.
    Synth(Common),
    /// Apply each strip's response curve, with and without the global shift.
    Corrupt(Common),
    /// Build training and validation examples.
    BuildDataset(WithDataset),
    /// Train the harmonization network.
    Train(WithDataset),
    /// Harmonize every source scan toward the target scan.
    Harmonize(WithDataset),
    /// Benchmark all methods on the evaluation tiles.
    Evaluate(WithDataset),
    /// Render evaluation tiles as PPM images.
    Render(WithDataset),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs, 0 uses every core.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Args)]
struct WithDataset {
    #[command(flatten)]
    common: Common,
    /// Restrict to one dataset; both by default.
    #[arg(long, value_parser = ["noshift", "shift"])]
    dataset: Option<String>,
}

impl WithDataset {
    fn variants(&self) -> Vec<Variant> {
        match &self.dataset {
            Some(d) => vec![d.parse().expect("validated by clap")],
            None => Variant::ALL.to_vec(),
        }
    }
}

fn open(c: &Common) -> harmonize::Result<Pipeline> {
    let mut cfg = Config::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if cfg.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    Pipeline::new(cfg, &c.out)
}

fn run(cmd: Command) -> harmonize::Result<()> {
    match cmd {
        Command::Version => println!("lidar-harmonize {}", env!("CARGO_PKG_VERSION")),
        Command::Synth(c) => {
            open(&c)?.synth()?;
        }
        Command::Corrupt(c) => open(&c)?.corrupt()?,
        Command::BuildDataset(a) => {
            let p = open(&a.common)?;
            for v in a.variants() {
                p.build_dataset(v)?;
            }
        }
        Command::Train(a) => {
            let p = open(&a.common)?;
            for v in a.variants() {
                p.train(v)?;
            }
        }
        Command::Harmonize(a) => {
            let p = open(&a.common)?;
            for v in a.variants() {
                p.harmonize(v)?;
            }
        }
        Command::Evaluate(a) => {
            let p = open(&a.common)?;
            let report = p.evaluate(&a.variants())?;
            log::info!("\n{}", report.to_table());
        }
        Command::Render(a) => {
            let p = open(&a.common)?;
            for v in a.variants() {
                for path in p.render(v)? {
                    log::info!("wrote {}", path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
