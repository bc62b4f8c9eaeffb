use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod config;
mod experiment;
mod output;

use config::{Config, Method};
use experiment::{aggregate, run_trials, Setting};
use output::{write_dumps, write_run_csv, write_sweep_csv, SweepRow};

/// Monte-Carlo harness for the BM-BCD and ESDP-BCD localization solvers.
#[derive(Debug, Parser)]
#[command(name = "rangeloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded trials of one configuration.
    Run(Common),
    /// Run trials for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    trials: Option<usize>,
    /// Seed of the first trial.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for concurrent trials (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip the realization dumps.
    #[arg(long)]
    no_dumps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    /// Factor rank of BM-BCD, or the refinement rank of ESDP-BCD.
    R,
    /// Initialization quality.
    Rho,
    /// Anchor-other measurement probability.
    Eta,
    /// Number of anchors.
    Anchors,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::R => "r",
            Axis::Rho => "rho",
            Axis::Eta => "eta",
            Axis::Anchors => "anchors",
        }
    }

    fn apply(self, s: &mut Setting, value: &str) -> Result<()> {
        let bad = || format!("invalid {} value {value:?}", self.name());
        match self {
            Axis::R => s.rank = Some(value.parse().with_context(bad)?),
            Axis::Rho => s.spec.rho = value.parse().with_context(bad)?,
            Axis::Eta => s.spec.eta = value.parse().with_context(bad)?,
            Axis::Anchors => s.spec.anchor_count = value.parse().with_context(bad)?,
        }
        s.spec.validate().with_context(bad)?;
        if let Some(r) = s.rank {
            if r < s.spec.shape.lattice().dim() {
                bail!("rank {r} is below the dimension");
            }
        }
        Ok(())
    }
}

fn load(c: &Common) -> Result<Config> {
    let mut cfg = Config::load(&c.config)?;
    if let Some(m) = c.method {
        cfg.run.method = m;
    }
    if let Some(t) = c.trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        cfg.run.trials = t;
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.out = o.clone();
    }
    if c.no_dumps {
        cfg.run.dump_realizations = false;
    }
    if let Some(j) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the thread pool")?;
    }
    fs::create_dir_all(&cfg.run.out)
        .with_context(|| format!("creating {}", cfg.run.out.display()))?;
    Ok(cfg)
}

fn cmd_run(c: &Common) -> Result<()> {
    let cfg = load(c)?;
    let setting = Setting::from_config(&cfg)?;
    let results = run_trials(&cfg, &setting)?;
    let agg = aggregate(&results);
    let csv = cfg.run.out.join("results.csv");
    write_run_csv(&csv, &results, &agg)?;
    if cfg.run.dump_realizations {
        write_dumps(&cfg.run.out.join("realizations"), &results)?;
    }
    for r in results.iter().filter(|r| r.error.is_some()) {
        eprintln!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or(""));
    }
    println!(
        "{} trials of {}: FR {:.1}%, mean RMSE {}, k {}, ST {:.3} s, PT {:.3} s -> {}",
        agg.trials,
        setting.method.name(),
        agg.fr * 100.0,
        agg.mean_rmse.map_or("n/a".into(), |v| format!("{v:.3} m")),
        agg.k_label(),
        agg.mean_st,
        agg.mean_pt,
        csv.display()
    );
    Ok(())
}

fn cmd_sweep(c: &Common, axis: Axis, values: &[String]) -> Result<()> {
    let mut cfg = load(c)?;
    cfg.run.dump_realizations = false;
    let base = Setting::from_config(&cfg)?;
    let mut rows = Vec::new();
    for v in values {
        let mut s = base.clone();
        axis.apply(&mut s, v.trim())?;
        let agg = aggregate(&run_trials(&cfg, &s)?);
        println!(
            "{}={}: FR {:.1}%, mean RMSE {}, k {}",
            axis.name(),
            v.trim(),
            agg.fr * 100.0,
            agg.mean_rmse.map_or("n/a".into(), |v| format!("{v:.3} m")),
            agg.k_label()
        );
        rows.push(SweepRow {
            value: v.trim().to_string(),
            method: s.method.name(),
            agg,
        });
    }
    let csv = cfg.run.out.join(format!("sweep_{}.csv", axis.name()));
    write_sweep_csv(&csv, axis.name(), &rows)?;
    println!("-> {}", csv.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep {
            common,
            axis,
            values,
        } => cmd_sweep(common, *axis, values),
    }
}
