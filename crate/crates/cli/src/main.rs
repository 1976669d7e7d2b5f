use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mst_core::pipeline::{export_report, format_table, run_baseline, run_pipeline, Method, RunConfig, RunReport};
use mst_core::{Error, Stage};

/// Multihypothesis segmentation tracking on simulated tabletop scenes.
#[derive(Parser)]
#[command(name = "mst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full method.
    Run(ConfigArgs),
    /// Run a baseline on the same simulated data.
    Baseline {
        #[arg(long, value_enum)]
        method: Baseline,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Aggregate every metrics.csv below a directory.
    Report {
        dir: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load, override and check a configuration, then print it.
    ValidateConfig(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    SingleFrame,
    TrackingOnly,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Override any field, e.g. `--set fusion.lambda=2 --set grid.dims=[32,32,32]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> mst_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override {o:?} is not KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(r) = &self.run_id {
            cfg.run_id = r.clone();
        }
        Ok(cfg)
    }
}

fn tagged(e: Error, stage: Stage) -> Error {
    match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage, source: Box::new(e) },
    }
}

fn print_report(r: &RunReport) {
    println!("{} {} seed {} -> {}", r.run_id, r.method, r.seed, r.dir.display());
    println!("t\tmax_weight_q\tbest_q\tmean_q");
    for s in &r.steps {
        println!("{}\t{:.6}\t{:.6}\t{:.6}", s.t, s.max_weight_q, s.best_q, s.mean_q);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load().map_err(|e| tagged(e, Stage::Config))?;
            print_report(&run_pipeline(&cfg)?);
        }
        Command::Baseline { method, config } => {
            let cfg = config.load().map_err(|e| tagged(e, Stage::Config))?;
            let method = match method {
                Baseline::SingleFrame => Method::SingleFrame,
                Baseline::TrackingOnly => Method::TrackingOnly,
            };
            print_report(&run_baseline(&cfg, method)?);
        }
        Command::Report { dir, out } => {
            let rows = export_report(&dir).map_err(|e| tagged(e, Stage::Report))?;
            let table = format_table(&rows);
            match out {
                Some(p) => std::fs::write(&p, table)
                    .map_err(|e| tagged(e.into(), Stage::Report))
                    .with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
        }
        Command::ValidateConfig(args) => {
            let cfg = args.load().map_err(|e| tagged(e, Stage::Config))?;
            cfg.validate().map_err(|e| tagged(e, Stage::Config))?;
            println!("{}", cfg.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.chain().find_map(|c| c.downcast_ref::<Error>().and_then(Error::stage));
            eprintln!("error: {e:#}");
            let code = stage.map_or(1, Stage::exit_code);
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
