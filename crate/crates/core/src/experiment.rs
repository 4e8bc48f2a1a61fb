//! Experiment orchestration: runs every configured scheme for every seed and
//! demand unit, then writes per-scheme CSV series, a comparison CSV, a JSON
//! summary with utilities for each weight row, and SVG charts.
//!
//! Files written to the output directory:
//! - `series_<scheme>_<unit>mb.csv`: one row per (seed, phase, episode) with
//!   columns `seed, phase, episode, satisfactory_error, rb_groups,
//!   throughput, reward, decision_proxy`; `phase` is `train` or `eval`.
//! - `comparison.csv`: one row per (unit, scheme) with seed-averaged metrics
//!   and one `utility_<i>` column per weight row of [`TABLE_WEIGHTS`].
//! - `summary.json`: the same numbers as [`Summary`].
//! - `reward_<unit>mb.svg`, `throughput_<unit>mb.svg`: moving averages per
//!   episode; `error_<unit>mb.svg`, `groups_<unit>mb.svg`: bar charts.
//!
//! Everything is a pure function of the configuration.

use crate::baselines::{run_scheme, RunPlan, SchemeId};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::metrics::{moving_average, weighted_utility, SchemeMetrics, UtilityWeights, TABLE_WEIGHTS};
use crate::svg::{bar_chart, line_chart};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const SUMMARY_VERSION: u32 = 1;
pub const DECISION_PROXY_BASIS: &str = "beam-gain evaluations per slot decision";

/// Seed-averaged metrics of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeAggregate {
    pub scheme: String,
    pub satisfactory_error: f64,
    pub rb_groups: f64,
    pub throughput: f64,
    pub reward: f64,
    pub decision_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeUtility {
    pub scheme: String,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityBlock {
    pub weights: [f64; 3],
    pub utilities: Vec<SchemeUtility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub demand_unit_mb: f64,
    pub schemes: Vec<SchemeAggregate>,
    /// One block per weight row; empty with fewer than two schemes.
    pub utilities: Vec<UtilityBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub decision_proxy_basis: String,
    pub seeds: Vec<u64>,
    pub train_episodes: u64,
    pub eval_episodes: u64,
    pub units: Vec<UnitSummary>,
}

/// Raw results: `runs[unit][scheme][seed]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub summary: Summary,
    pub runs: Vec<Vec<Vec<SchemeMetrics>>>,
}

fn aggregate(scheme: SchemeId, runs: &[SchemeMetrics]) -> SchemeAggregate {
    let n = runs.len() as f64;
    let mean = |f: fn(&SchemeMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    SchemeAggregate {
        scheme: scheme.name().to_string(),
        satisfactory_error: mean(|m| m.satisfactory_error),
        rb_groups: mean(|m| m.rb_groups),
        throughput: mean(|m| m.throughput),
        reward: mean(|m| m.reward),
        decision_proxy: mean(|m| m.decision_proxy),
    }
}

/// Utility blocks for every weight row over the given aggregates.
pub fn utility_blocks(schemes: &[SchemeAggregate]) -> Result<Vec<UtilityBlock>> {
    if schemes.len() < 2 {
        return Ok(Vec::new());
    }
    let comps: Vec<[f64; 3]> = schemes.iter().map(|s| [s.satisfactory_error, s.rb_groups, s.decision_proxy]).collect();
    TABLE_WEIGHTS
        .iter()
        .map(|w| {
            let u = weighted_utility(&comps, UtilityWeights::new(*w)?)?;
            Ok(UtilityBlock {
                weights: *w,
                utilities: schemes
                    .iter()
                    .zip(u)
                    .map(|(s, utility)| SchemeUtility { scheme: s.scheme.clone(), utility })
                    .collect(),
            })
        })
        .collect()
}

/// Runs `jobs` closures on a small thread pool, keeping results in job order.
fn parallel_map<T: Send, F: Fn(usize) -> Result<T> + Sync>(jobs: usize, f: F) -> Result<Vec<T>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Runs every (unit, scheme, seed) combination of `cfg`.
pub fn compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    cfg.validate()?;
    let (nu, ns, nd) = (cfg.demand_units_mb.len(), cfg.schemes.len(), cfg.seeds.len());
    let flat = parallel_map(nu * ns * nd, |i| {
        let (u, rest) = (i / (ns * nd), i % (ns * nd));
        let (s, d) = (rest / nd, rest % nd);
        let mut env = cfg.env.clone();
        env.demand.unit_bits = cfg.demand_units_mb[u] * 1e6;
        let plan = RunPlan { seed: cfg.seeds[d], train_episodes: cfg.train_episodes, eval_episodes: cfg.eval_episodes };
        run_scheme(cfg.schemes[s], &env, &cfg.agent, &cfg.baselines, plan)
    })?;
    let mut it = flat.into_iter();
    let runs: Vec<Vec<Vec<SchemeMetrics>>> =
        (0..nu).map(|_| (0..ns).map(|_| it.by_ref().take(nd).collect()).collect()).collect();
    let units = runs
        .iter()
        .zip(&cfg.demand_units_mb)
        .map(|(per_scheme, unit)| {
            let schemes: Vec<SchemeAggregate> =
                per_scheme.iter().zip(&cfg.schemes).map(|(r, id)| aggregate(*id, r)).collect();
            Ok(UnitSummary { demand_unit_mb: *unit, utilities: utility_blocks(&schemes)?, schemes })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary {
        version: SUMMARY_VERSION,
        decision_proxy_basis: DECISION_PROXY_BASIS.to_string(),
        seeds: cfg.seeds.clone(),
        train_episodes: cfg.train_episodes,
        eval_episodes: cfg.eval_episodes,
        units,
    };
    Ok(Comparison { summary, runs })
}

/// One row of a series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub seed: u64,
    pub phase: String,
    pub episode: u64,
    pub satisfactory_error: f64,
    pub rb_groups: f64,
    pub throughput: f64,
    pub reward: f64,
    pub decision_proxy: f64,
}

fn unit_tag(unit: f64) -> String {
    format!("{unit}mb")
}

fn series_rows(seeds: &[u64], runs: &[SchemeMetrics]) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for (seed, m) in seeds.iter().zip(runs) {
        for (phase, eps) in [("train", &m.training), ("eval", &m.evaluation)] {
            for e in eps {
                rows.push(SeriesRow {
                    seed: *seed,
                    phase: phase.to_string(),
                    episode: e.episode,
                    satisfactory_error: e.satisfactory_error,
                    rb_groups: e.rb_groups,
                    throughput: e.throughput,
                    reward: e.reward,
                    decision_proxy: e.decision_proxy,
                });
            }
        }
    }
    rows
}

/// One row of `comparison.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub demand_unit_mb: f64,
    pub scheme: String,
    pub satisfactory_error: f64,
    pub rb_groups: f64,
    pub throughput: f64,
    pub reward: f64,
    pub decision_proxy: f64,
    pub utility_0: Option<f64>,
    pub utility_1: Option<f64>,
    pub utility_2: Option<f64>,
    pub utility_3: Option<f64>,
}

impl ComparisonRow {
    /// Row without utilities, for a scheme run on its own.
    pub fn single(demand_unit_mb: f64, m: &SchemeMetrics) -> Self {
        Self {
            demand_unit_mb,
            scheme: m.scheme.clone(),
            satisfactory_error: m.satisfactory_error,
            rb_groups: m.rb_groups,
            throughput: m.throughput,
            reward: m.reward,
            decision_proxy: m.decision_proxy,
            utility_0: None,
            utility_1: None,
            utility_2: None,
            utility_3: None,
        }
    }
}

/// Appends rows to a comparison CSV, writing the header for a new file.
pub fn append_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one series CSV for a scheme's runs over `seeds`.
pub fn write_series(path: &Path, seeds: &[u64], runs: &[SchemeMetrics]) -> Result<()> {
    write_csv(path, &series_rows(seeds, runs))
}

/// Series CSV file name for a scheme and demand unit.
pub fn series_file_name(scheme: SchemeId, demand_unit_mb: f64) -> String {
    format!("series_{}_{}.csv", scheme.name(), unit_tag(demand_unit_mb))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes CSVs, the JSON summary and the charts; returns the paths written.
pub fn write_artifacts(cfg: &ExperimentConfig, cmp: &Comparison, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut comparison = Vec::new();
    for (unit_summary, per_scheme) in cmp.summary.units.iter().zip(&cmp.runs) {
        for (id, runs) in cfg.schemes.iter().zip(per_scheme) {
            let path = out.join(series_file_name(*id, unit_summary.demand_unit_mb));
            write_series(&path, &cfg.seeds, runs)?;
            written.push(path);
        }
        for (i, s) in unit_summary.schemes.iter().enumerate() {
            let u = |k: usize| unit_summary.utilities.get(k).map(|b| b.utilities[i].utility);
            comparison.push(ComparisonRow {
                demand_unit_mb: unit_summary.demand_unit_mb,
                scheme: s.scheme.clone(),
                satisfactory_error: s.satisfactory_error,
                rb_groups: s.rb_groups,
                throughput: s.throughput,
                reward: s.reward,
                decision_proxy: s.decision_proxy,
                utility_0: u(0),
                utility_1: u(1),
                utility_2: u(2),
                utility_3: u(3),
            });
        }
    }
    let path = out.join("comparison.csv");
    write_csv(&path, &comparison)?;
    written.push(path);
    let path = out.join("summary.json");
    let mut json = serde_json::to_string_pretty(&cmp.summary)?;
    json.push('\n');
    std::fs::write(&path, json)?;
    written.push(path);
    written.extend(render_plots(out, cfg.moving_average_window)?);
    Ok(written)
}

/// Runs the comparison and writes every artifact to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let cmp = compare(cfg)?;
    write_artifacts(cfg, &cmp, out)?;
    Ok(cmp.summary)
}

/// Mean over seeds of `f` per episode index, in episode order.
fn seed_mean(rows: &[SeriesRow], f: fn(&SeriesRow) -> f64) -> Vec<f64> {
    let mut by_episode: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = by_episode.entry(r.episode).or_insert((0.0, 0));
        e.0 += f(r);
        e.1 += 1;
    }
    by_episode.values().map(|(s, n)| s / *n as f64).collect()
}

/// Re-renders the charts from the series CSVs found in `dir`. Learned
/// schemes plot their training episodes, the others their evaluation
/// episodes.
pub fn render_plots(dir: &Path, window: usize) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("series_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid(format!("no series CSVs in {}", dir.display())));
    }
    // unit tag -> scheme -> rows
    let mut groups: BTreeMap<String, Vec<(String, Vec<SeriesRow>)>> = BTreeMap::new();
    for f in &files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let rest = stem.trim_start_matches("series_");
        let (scheme, tag) = rest.rsplit_once('_').ok_or_else(|| invalid(format!("unexpected file name {stem}")))?;
        let rows = csv::Reader::from_path(f)?.deserialize().collect::<std::result::Result<Vec<SeriesRow>, _>>()?;
        groups.entry(tag.to_string()).or_default().push((scheme.to_string(), rows));
    }
    let mut written = Vec::new();
    for (tag, schemes) in &groups {
        let mut reward = Vec::new();
        let mut throughput = Vec::new();
        let mut error = Vec::new();
        let mut rb = Vec::new();
        for (scheme, rows) in schemes {
            let train: Vec<SeriesRow> = rows.iter().filter(|r| r.phase == "train").cloned().collect();
            let eval: Vec<SeriesRow> = rows.iter().filter(|r| r.phase == "eval").cloned().collect();
            let curve = if train.is_empty() { &eval } else { &train };
            let pts = |f: fn(&SeriesRow) -> f64| -> Result<Vec<(f64, f64)>> {
                Ok(moving_average(&seed_mean(curve, f), window)?.into_iter().enumerate().map(|(i, v)| (i as f64, v)).collect())
            };
            reward.push((scheme.clone(), pts(|r| r.reward)?));
            throughput.push((scheme.clone(), pts(|r| r.throughput)?));
            let n = eval.len().max(1) as f64;
            error.push((scheme.clone(), eval.iter().map(|r| r.satisfactory_error).sum::<f64>() / n));
            rb.push((scheme.clone(), eval.iter().map(|r| r.rb_groups).sum::<f64>() / n));
        }
        let charts = [
            (format!("reward_{tag}.svg"), line_chart("Moving-average reward", "episode", "reward (bit/s)", &reward)),
            (
                format!("throughput_{tag}.svg"),
                line_chart("Moving-average throughput", "episode", "throughput (bit/slot)", &throughput),
            ),
            (format!("error_{tag}.svg"), bar_chart("Satisfactory error", "bits/slot", &error)),
            (format!("groups_{tag}.svg"), bar_chart("RB groups used", "groups/slot", &rb)),
        ];
        for (name, body) in charts {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
