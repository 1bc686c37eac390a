use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use drorl_cli::output::{append_csv, read_csv, write_json};
use drorl_cli::{
    aggregate, apply_seed_offset, generate_dataset, hard_instance_check, run_experiment, run_robustness_eval,
    solve_exact, ExperimentConfig, ResultRow,
};

#[derive(Parser)]
#[command(name = "drorl", version, about = "Robust offline RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output path; overrides `output_path` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the rows as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact robust optimum of the configured instance at each radius.
    Solve(Common),
    /// Run the (sigma, sample size, seed) grid and append rows to a CSV.
    Sweep(Common),
    /// Win rates of robust and non-robust policies under perturbed p_head.
    Robustness(Common),
    /// Compare solver values with the closed forms of a hard instance.
    HardInstanceCheck(Common),
    /// Write the dataset of the first grid cell in the text format.
    Generate(Common),
    /// Mean, std and standard error of gaps over seeds.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    apply_seed_offset(&mut cfg, c.seed_offset);
    if let Some(out) = &c.out {
        cfg.output_path = Some(out.clone());
    }
    cfg.check_output()?;
    Ok(cfg)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().context("building thread pool")?.install(f)
}

fn emit_rows(c: &Common, cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<()> {
    match &cfg.output_path {
        Some(p) => {
            append_csv(p, rows)?;
            eprintln!("appended {} rows to {}", rows.len(), p.display());
        }
        None => print!("{}", drorl_cli::output::to_csv_string(rows)?),
    }
    if let Some(j) = &c.json {
        write_json(j, rows)?;
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let rows = with_pool(c.jobs, || run_experiment(&cfg))?;
            emit_rows(&c, &cfg, &rows)
        }
        Command::Robustness(c) => {
            let cfg = load(&c)?;
            let rows = with_pool(c.jobs, || run_robustness_eval(&cfg))?;
            emit_rows(&c, &cfg, &rows)
        }
        Command::Solve(c) => {
            let cfg = load(&c)?;
            let reports = with_pool(c.jobs, || solve_exact(&cfg))?;
            emit_json(&c.out, &reports)
        }
        Command::HardInstanceCheck(c) => {
            let cfg = load(&c)?;
            let checks = with_pool(c.jobs, || hard_instance_check(&cfg))?;
            emit_json(&c.out, &checks)?;
            if let Some(bad) = checks.iter().find(|c| !(c.abs_diff <= 1e-8)) {
                bail!("closed form mismatch at sigma={}: |diff| = {:e}", bad.sigma, bad.abs_diff);
            }
            Ok(())
        }
        Command::Generate(c) => {
            let cfg = load(&c)?;
            let data = with_pool(c.jobs, || generate_dataset(&cfg))?;
            match &c.out {
                Some(p) => std::fs::write(p, data.to_text()).with_context(|| format!("writing {}", p.display())),
                None => {
                    print!("{}", data.to_text());
                    Ok(())
                }
            }
        }
        Command::Aggregate { input, out } => {
            let rows = read_csv(&input)?;
            let agg = aggregate(&rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            for a in &agg {
                w.serialize(a)?;
            }
            let text = String::from_utf8(w.into_inner()?)?;
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}
