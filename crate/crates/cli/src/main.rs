//! `ntn`: validate configs, train the collaborative agents, run baselines,
//! sweep the full comparison and re-render plots.

use clap::{Args, Parser, Subcommand};
use ntn_core::baselines::{run_scheme, RunPlan, SchemeId};
use ntn_core::collab::{Checkpoint, Trainer};
use ntn_core::config::ExperimentConfig;
use ntn_core::experiment::{append_comparison, render_plots, run_experiment, series_file_name, write_series, ComparisonRow};
use ntn_core::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ntn", version, about = "LEO downlink beam management and RB allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and print the resolved settings.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a learned scheme and save its log and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// proposed, independent or single-estimation.
        #[arg(long, default_value = "proposed")]
        scheme: SchemeId,
        /// Training episodes; overrides the config.
        #[arg(long)]
        episodes: Option<u64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run one scheme and append its metrics to comparison.csv.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: SchemeId,
        /// Evaluation episodes; overrides the config.
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Run every configured scheme, seed and demand unit.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Restrict to these schemes; repeatable.
        #[arg(long)]
        scheme: Vec<SchemeId>,
        /// Training episodes for learned schemes; overrides the config.
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Re-render the SVG charts from the series CSVs in a directory.
    Plot {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn load(config: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_common(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn train(common: &Common, scheme: SchemeId, episodes: Option<u64>, resume: Option<&Path>) -> Result<()> {
    if !scheme.is_learned() {
        return Err(Error::InvalidArgument(format!("`{scheme}` does not learn; use `baseline`")));
    }
    let cfg = load_common(common)?;
    let episodes = episodes.unwrap_or(cfg.train_episodes);
    std::fs::create_dir_all(&common.out)?;
    for &seed in &cfg.seeds {
        let mut trainer = match resume {
            Some(p) => Trainer::from_checkpoint(Checkpoint::load(p)?)?,
            None => {
                let agent = ntn_core::collab::AgentConfig { ablation: scheme.ablation(), ..cfg.agent.clone() };
                Trainer::new(cfg.env.clone(), agent, seed)?
            }
        };
        let log = trainer.train(episodes)?;
        let stem = format!("{}_seed{seed}", scheme.name());
        let log_path = common.out.join(format!("train_{stem}.csv"));
        log.write_csv(std::fs::File::create(&log_path)?)?;
        let ckpt = common.out.join(format!("checkpoint_{stem}.json"));
        trainer.checkpoint().save(&ckpt)?;
        let eval = trainer.evaluate(seed, ntn_core::baselines::EVAL_EPISODE_BASE)?;
        let trace = common.out.join(format!("eval_trace_{stem}.csv"));
        ntn_core::env::write_trace(&eval.trace, std::fs::File::create(&trace)?)?;
        let last = log.episodes.last();
        println!(
            "{scheme} seed {seed}: {} episodes (total {}), last low return {:.4e}, eval low return {:.4e}{}",
            log.episodes.len(),
            trainer.episodes_done(),
            last.map_or(f64::NAN, |e| e.low_return),
            eval.low_return,
            log.converged_at.map_or(String::new(), |e| format!(", converged at episode {e}")),
        );
        println!("  wrote {}, {}, {}", log_path.display(), ckpt.display(), trace.display());
        if resume.is_some() {
            break;
        }
    }
    Ok(())
}

fn baseline(common: &Common, scheme: SchemeId, episodes: Option<u64>) -> Result<()> {
    let cfg = load_common(common)?;
    let eval_episodes = episodes.unwrap_or(cfg.eval_episodes);
    std::fs::create_dir_all(&common.out)?;
    let mut rows = Vec::new();
    for &unit in &cfg.demand_units_mb {
        let mut env = cfg.env.clone();
        env.demand.unit_bits = unit * 1e6;
        let runs = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let plan = RunPlan { seed, train_episodes: cfg.train_episodes, eval_episodes };
                run_scheme(scheme, &env, &cfg.agent, &cfg.baselines, plan)
            })
            .collect::<Result<Vec<_>>>()?;
        write_series(&common.out.join(series_file_name(scheme, unit)), &cfg.seeds, &runs)?;
        for m in &runs {
            println!(
                "{scheme} {unit} Mb: error {:.4e} groups {:.3} throughput {:.4e} proxy {:.1}",
                m.satisfactory_error, m.rb_groups, m.throughput, m.decision_proxy
            );
            rows.push(ComparisonRow::single(unit, m));
        }
    }
    append_comparison(&common.out.join("comparison.csv"), &rows)
}

fn compare(common: &Common, schemes: &[SchemeId], episodes: Option<u64>) -> Result<()> {
    let mut cfg = load_common(common)?;
    if !schemes.is_empty() {
        cfg.schemes = schemes.to_vec();
    }
    if let Some(e) = episodes {
        cfg.train_episodes = e;
    }
    let summary = run_experiment(&cfg, &common.out)?;
    for unit in &summary.units {
        println!("demand unit {} Mb", unit.demand_unit_mb);
        for (i, s) in unit.schemes.iter().enumerate() {
            let u: Vec<String> = unit.utilities.iter().map(|b| format!("{:.4}", b.utilities[i].utility)).collect();
            println!(
                "  {:<18} error {:.4e} groups {:.3} throughput {:.4e} proxy {:>8.1} utility [{}]",
                s.scheme,
                s.satisfactory_error,
                s.rb_groups,
                s.throughput,
                s.decision_proxy,
                u.join(", ")
            );
        }
    }
    println!("wrote results to {}", common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(config.as_deref())?;
            println!("{}", cfg.to_toml()?);
            println!("# config ok");
            Ok(())
        }
        Command::Train { common, scheme, episodes, resume } => train(&common, scheme, episodes, resume.as_deref()),
        Command::Baseline { common, scheme, episodes } => baseline(&common, scheme, episodes),
        Command::Compare { common, scheme, episodes } => compare(&common, &scheme, episodes),
        Command::Plot { config, out } => {
            let cfg = load(config.as_deref())?;
            for p in render_plots(&out, cfg.moving_average_window)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
