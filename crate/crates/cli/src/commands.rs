//! One function per subcommand. Each validates its config before touching
//! the output directory, writes its result files, and returns the report.

use std::collections::HashMap;
use std::path::PathBuf;

use ladder_core::data::{generate_synthetic, make_split, save_bundle};
use ladder_core::graph::{hop_homophily_profile, propagate_with};
use ladder_core::model::{
    evaluate_by_homophily, load_checkpoint, make_profile, save_checkpoint, save_sidecar, train_prepared,
    Aggregation, BucketAccuracy, CheckpointSidecar, PreparedData,
};
use ladder_core::nas::{
    arch_seed, enumerate_space, read_trace, CandidateArch, LadderOracle, PhaseSummary, ProgressiveConfig,
    RewardOracle, SearchConfig, SearchSpace, Searcher, TraceWriter,
};
use ladder_core::{HopDimProfile, Metrics, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{exec, load_dataset};
use crate::error::{CliError, CliResult};
use crate::output::{create_output_dir, csv_writer, opt_field, write_json, write_provenance, Summary, VERSION};

/// Runs `f` for every item, in parallel unless the config is deterministic.
/// Output order follows input order either way.
fn fan_out<I, T, F>(cfg: &RunConfig, items: &[I], f: F) -> CliResult<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> CliResult<T> + Sync + Send,
{
    if cfg.deterministic {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

fn build_profile(cfg: &RunConfig, c_in: usize) -> CliResult<HopDimProfile> {
    match (&cfg.profile, &cfg.dims) {
        (Some(p), None) => Ok(make_profile(c_in, p.k, p.l, p.d)?),
        (None, Some(dims)) => Ok(HopDimProfile::explicit(c_in, dims.clone())?),
        _ => Err(CliError::usage("exactly one of profile or dims must be set")),
    }
}

fn seeded(cfg: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.train.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub train_acc: Summary,
    pub val_acc: Summary,
    pub test_acc: Summary,
}

impl AccuracySummary {
    fn of(runs: &[SeedRun]) -> Self {
        let pick = |f: fn(&Metrics) -> f64| Summary::of(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        AccuracySummary {
            train_acc: pick(|m| m.train_acc),
            val_acc: pick(|m| m.val_acc),
            test_acc: pick(|m| m.test_acc),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub version: &'static str,
    pub seeds: Vec<u64>,
    pub dims: Vec<usize>,
    pub summary: AccuracySummary,
    pub runs: Vec<SeedRun>,
}

/// Trains one model per seed; the first seed's model is checkpointed.
pub fn train(cfg: &RunConfig) -> CliResult<TrainReport> {
    cfg.validate_data()?;
    cfg.validate_architecture()?;
    cfg.validate_seeds()?;
    let ds = load_dataset(cfg)?;
    let split = ds.split(cfg)?;
    let profile = build_profile(cfg, ds.bundle.c_in())?;
    let p = propagate_with(&ds.adj, &ds.x, profile.k(), exec(cfg))?;
    let data = PreparedData::new(&p, &ds.bundle.labels, &split)?;
    drop(p);
    create_output_dir(&cfg.output)?;

    let seeds = cfg.seeds();
    let mut results = fan_out(cfg, &seeds, |&seed| Ok(train_prepared(&data, &profile, &seeded(cfg, seed))?))?;
    let (model, _) = &results[0];
    save_checkpoint(model, &cfg.output.join("model.ldg"))?;
    save_sidecar(
        &CheckpointSidecar { config: seeded(cfg, seeds[0]), metrics: results[0].1.clone() },
        &cfg.output.join("model.json"),
    )?;

    let runs: Vec<SeedRun> = results
        .drain(..)
        .zip(&seeds)
        .map(|((_, metrics), &seed)| SeedRun { seed, metrics })
        .collect();
    let report = TrainReport {
        config_hash: cfg.hash(),
        version: VERSION,
        seeds,
        dims: profile.dims().to_vec(),
        summary: AccuracySummary::of(&runs),
        runs,
    };
    write_json(&cfg.output.join("metrics.json"), &report)?;
    write_provenance(&cfg.output, "train", cfg)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub d: f64,
    pub dims: Vec<usize>,
    pub test_acc: Summary,
    pub val_acc: Summary,
    pub runs: Vec<(u64, f64, f64)>,
}

/// Test accuracy over the full `(K, d)` grid, every cell with the same seeds.
pub fn sweep(cfg: &RunConfig) -> CliResult<Vec<SweepCell>> {
    cfg.validate_data()?;
    cfg.validate_seeds()?;
    if cfg.sweep.k.is_empty() || cfg.sweep.d.is_empty() {
        return Err(CliError::usage("sweep.k and sweep.d must be non-empty"));
    }
    let l = cfg.profile.map_or(1, |p| p.l);
    let ds = load_dataset(cfg)?;
    let split = ds.split(cfg)?;
    let c_in = ds.bundle.c_in();
    let mut profiles = Vec::new();
    for &k in &cfg.sweep.k {
        for &d in &cfg.sweep.d {
            profiles.push((k, d, make_profile(c_in, k, l, d)?));
        }
    }
    let k_max = *cfg.sweep.k.iter().max().expect("non-empty");
    let p = propagate_with(&ds.adj, &ds.x, k_max, exec(cfg))?;
    let data = PreparedData::new(&p, &ds.bundle.labels, &split)?;
    drop(p);
    create_output_dir(&cfg.output)?;

    let seeds = cfg.seeds();
    let jobs: Vec<(usize, u64)> = (0..profiles.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let results = fan_out(cfg, &jobs, |&(c, seed)| {
        let (_, m) = train_prepared(&data, &profiles[c].2, &seeded(cfg, seed))?;
        Ok((m.val_acc, m.test_acc))
    })?;

    let mut cells = Vec::new();
    for (c, (k, d, profile)) in profiles.iter().enumerate() {
        let runs: Vec<(u64, f64, f64)> = jobs
            .iter()
            .zip(&results)
            .filter(|((cell, _), _)| *cell == c)
            .map(|((_, seed), &(val, test))| (*seed, val, test))
            .collect();
        cells.push(SweepCell {
            k: *k,
            d: *d,
            dims: profile.dims().to_vec(),
            test_acc: Summary::of(&runs.iter().map(|r| r.2).collect::<Vec<_>>()),
            val_acc: Summary::of(&runs.iter().map(|r| r.1).collect::<Vec<_>>()),
            runs,
        });
    }

    let mut grid = csv_writer(&cfg.output.join("sweep.csv"))?;
    grid.write_record(["K", "d", "mean", "std", "n_seeds"])?;
    let mut per_run = csv_writer(&cfg.output.join("sweep_runs.csv"))?;
    per_run.write_record(["K", "d", "seed", "val_acc", "test_acc"])?;
    for cell in &cells {
        grid.write_record([
            cell.k.to_string(),
            cell.d.to_string(),
            cell.test_acc.mean.to_string(),
            opt_field(cell.test_acc.std),
            cell.test_acc.n.to_string(),
        ])?;
        for &(seed, val, test) in &cell.runs {
            per_run.write_record([cell.k.to_string(), cell.d.to_string(), seed.to_string(), val.to_string(), test.to_string()])?;
        }
    }
    grid.flush()?;
    per_run.flush()?;
    write_provenance(&cfg.output, "sweep", cfg)?;
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub dims: Vec<usize>,
    pub concat: Summary,
    pub addition: Summary,
    /// `(seed, concat test accuracy, addition test accuracy)`.
    pub runs: Vec<(u64, f64, f64)>,
}

/// Concatenation against zero-padded addition, same profile and seeds.
pub fn ablate(cfg: &RunConfig) -> CliResult<AblationReport> {
    cfg.validate_data()?;
    cfg.validate_architecture()?;
    cfg.validate_seeds()?;
    let ds = load_dataset(cfg)?;
    let split = ds.split(cfg)?;
    let profile = build_profile(cfg, ds.bundle.c_in())?;
    let p = propagate_with(&ds.adj, &ds.x, profile.k(), exec(cfg))?;
    let data = PreparedData::new(&p, &ds.bundle.labels, &split)?;
    drop(p);
    create_output_dir(&cfg.output)?;

    let seeds = cfg.seeds();
    let jobs: Vec<(Aggregation, u64)> = [Aggregation::Concat, Aggregation::Addition]
        .into_iter()
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let acc = fan_out(cfg, &jobs, |&(aggregation, seed)| {
        let config = TrainConfig { aggregation, ..seeded(cfg, seed) };
        Ok(train_prepared(&data, &profile, &config)?.1.test_acc)
    })?;
    let (concat, addition) = acc.split_at(seeds.len());
    let report = AblationReport {
        config_hash: cfg.hash(),
        dims: profile.dims().to_vec(),
        concat: Summary::of(concat),
        addition: Summary::of(addition),
        runs: seeds.iter().zip(concat.iter().zip(addition)).map(|(&s, (&c, &a))| (s, c, a)).collect(),
    };

    let mut table = csv_writer(&cfg.output.join("ablation.csv"))?;
    table.write_record(["aggregation", "mean", "std", "n_seeds"])?;
    for (name, s) in [("concat", report.concat), ("addition", report.addition)] {
        table.write_record([name.to_string(), s.mean.to_string(), opt_field(s.std), s.n.to_string()])?;
    }
    table.flush()?;
    let mut per_run = csv_writer(&cfg.output.join("ablation_runs.csv"))?;
    per_run.write_record(["seed", "concat", "addition"])?;
    for &(seed, c, a) in &report.runs {
        per_run.write_record([seed.to_string(), c.to_string(), a.to_string()])?;
    }
    per_run.flush()?;
    write_json(&cfg.output.join("ablation.json"), &report)?;
    write_provenance(&cfg.output, "ablate", cfg)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopSummary {
    pub hop: usize,
    pub mean_ratio: Option<f64>,
    pub defined_nodes: usize,
}

/// Per-hop homophily histograms, per-node ratios and per-hop means.
pub fn homophily(cfg: &RunConfig) -> CliResult<Vec<HopSummary>> {
    cfg.validate_data()?;
    let h = &cfg.homophily;
    if h.k_max == 0 {
        return Err(CliError::usage("homophily.k_max must be at least 1"));
    }
    let ds = load_dataset(cfg)?;
    let adj = ds.bundle.binary_adjacency()?;
    let reports = hop_homophily_profile(&adj, &ds.bundle.labels, h.k_max, h.bucket_width, exec(cfg))?;
    create_output_dir(&cfg.output)?;

    for r in &reports {
        let mut w = csv_writer(&cfg.output.join(format!("homophily_hop{}.csv", r.hop)))?;
        w.write_record(["lo", "hi", "count"])?;
        for (b, count) in r.histogram.counts.iter().enumerate() {
            let (lo, hi) = r.histogram.bounds(b);
            w.write_record([lo.to_string(), hi.to_string(), count.to_string()])?;
        }
        w.flush()?;
    }

    let mut nodes = csv_writer(&cfg.output.join("homophily_nodes.csv"))?;
    let mut header = vec!["node".to_string()];
    header.extend(reports.iter().map(|r| format!("hop{}", r.hop)));
    nodes.write_record(&header)?;
    for i in 0..ds.bundle.n() {
        let mut row = vec![i.to_string()];
        row.extend(reports.iter().map(|r| opt_field(r.per_node_ratio[i])));
        nodes.write_record(&row)?;
    }
    nodes.flush()?;

    let summary: Vec<HopSummary> = reports
        .iter()
        .map(|r| HopSummary { hop: r.hop, mean_ratio: r.mean_ratio(), defined_nodes: r.defined_count() })
        .collect();
    let mut w = csv_writer(&cfg.output.join("homophily_summary.csv"))?;
    w.write_record(["hop", "mean_ratio", "defined_nodes"])?;
    for s in &summary {
        w.write_record([s.hop.to_string(), opt_field(s.mean_ratio), s.defined_nodes.to_string()])?;
    }
    w.flush()?;
    write_provenance(&cfg.output, "homophily", cfg)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExhaustiveCheck {
    pub best: CandidateArch,
    pub reward: f64,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub config_hash: String,
    pub best: CandidateArch,
    pub reward: f64,
    /// Distinct candidates scored, including those served from a resumed trace.
    pub evaluated: usize,
    pub trained: usize,
    pub resumed: usize,
    pub phases: Vec<PhaseSummary>,
    /// Per hop position, share of kept candidates choosing each width.
    pub kept_histogram: Vec<Vec<(usize, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exhaustive: Option<ExhaustiveCheck>,
}

/// Progressive hop-width search with the ladder-model reward.
pub fn search(cfg: &RunConfig) -> CliResult<SearchReport> {
    cfg.validate_data()?;
    cfg.train.validate()?;
    let s = &cfg.search;
    let progressive = ProgressiveConfig {
        k_start: s.k_start,
        k_max: s.k_max,
        thresholds: s.thresholds.clone(),
        budget_per_phase: s.budget_per_phase,
    };
    if s.k_start == 0 || s.k_start > s.k_max {
        return Err(CliError::usage("search needs 1 ≤ k_start ≤ k_max"));
    }
    let ds = load_dataset(cfg)?;
    let split = ds.split(cfg)?;
    let space = SearchSpace::new(s.n, ds.bundle.c_in())?;
    let p = propagate_with(&ds.adj, &ds.x, s.k_max, exec(cfg))?;
    let data = PreparedData::new(&p, &ds.bundle.labels, &split)?;
    drop(p);
    let oracle = LadderOracle::new(data, TrainConfig { epochs: s.candidate_epochs, ..cfg.train.clone() })?;
    let search_config = SearchConfig {
        seed: cfg.seed,
        update_interval: s.update_interval,
        controller: s.controller.clone(),
        sequential: cfg.deterministic,
        ..Default::default()
    };
    create_output_dir(&cfg.output)?;

    let trace_path = cfg.output.join("trace.jsonl");
    let mut searcher = Searcher::new(&space, &oracle, search_config)?;
    if s.resume && trace_path.exists() {
        searcher = searcher.with_resume(read_trace(&trace_path)?).with_trace(TraceWriter::append(&trace_path)?);
    } else {
        searcher = searcher.with_trace(TraceWriter::create(&trace_path)?);
    }
    let outcome = searcher.progressive(&progressive)?;
    let state = &outcome.state;

    let exhaustive = if s.exhaustive_check {
        let known: HashMap<&CandidateArch, f64> = state.reward_log.iter().map(|e| (&e.arch, e.reward)).collect();
        let mut archs = Vec::new();
        for k in s.k_start..=s.k_max {
            archs.extend(enumerate_space(&space, k)?.1);
        }
        let rewards = fan_out(cfg, &archs, |a| {
            Ok(match known.get(a) {
                Some(&r) => r,
                None => oracle.reward(a, arch_seed(cfg.seed, a)).unwrap_or_else(|e| {
                    log::warn!("candidate {a} failed: {e}; recorded as 0");
                    0.0
                }),
            })
        })?;
        let (i, &reward) = rewards
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        Some(ExhaustiveCheck { best: archs[i].clone(), reward, evaluated: archs.len() })
    } else {
        None
    };

    let histogram: Vec<Vec<(usize, f64)>> =
        state.kept_histogram().into_iter().map(|h| h.into_iter().collect()).collect();
    let mut w = csv_writer(&cfg.output.join("kept_histogram.csv"))?;
    w.write_record(["hop", "width", "frequency"])?;
    for (hop, widths) in histogram.iter().enumerate() {
        for &(width, f) in widths {
            w.write_record([(hop + 1).to_string(), width.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;

    let report = SearchReport {
        config_hash: cfg.hash(),
        best: outcome.best.clone(),
        reward: outcome.best_reward,
        evaluated: state.reward_log.len(),
        trained: state.trained,
        resumed: state.resumed,
        phases: state.phases.clone(),
        kept_histogram: histogram,
        exhaustive,
    };
    write_json(&cfg.output.join("best.json"), &report)?;
    write_provenance(&cfg.output, "search", cfg)?;
    Ok(report)
}

/// Test accuracy of a saved model split by each node's homophily ratio.
pub fn eval_homophily(cfg: &RunConfig) -> CliResult<Vec<BucketAccuracy>> {
    cfg.validate_data()?;
    let path: &PathBuf = cfg.checkpoint.as_ref().ok_or_else(|| CliError::usage("checkpoint must be set"))?;
    if !path.is_file() {
        return Err(CliError::usage(format!("checkpoint {} does not exist", path.display())));
    }
    let h = &cfg.homophily;
    if h.eval_hop == 0 {
        return Err(CliError::usage("homophily.eval_hop must be at least 1"));
    }
    let model = load_checkpoint(path)?;
    let ds = load_dataset(cfg)?;
    let split = ds.split(cfg)?;
    if model.profile().c_in() != ds.bundle.c_in() {
        return Err(CliError::usage(format!(
            "checkpoint expects {} features, data has {}",
            model.profile().c_in(),
            ds.bundle.c_in()
        )));
    }
    let p = propagate_with(&ds.adj, &ds.x, model.profile().k(), exec(cfg))?;
    let adj = ds.bundle.binary_adjacency()?;
    let reports = hop_homophily_profile(&adj, &ds.bundle.labels, h.eval_hop, h.bucket_width, exec(cfg))?;
    let ratios = &reports[h.eval_hop - 1].per_node_ratio;
    let buckets = evaluate_by_homophily(&model, &p, &ds.bundle.labels, &split.test, ratios, h.bucket_width)?;
    create_output_dir(&cfg.output)?;

    let mut w = csv_writer(&cfg.output.join("homophily_accuracy.csv"))?;
    w.write_record(["lo", "hi", "count", "correct", "accuracy"])?;
    for b in &buckets {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string(), b.correct.to_string(), b.accuracy.to_string()])?;
    }
    w.flush()?;
    write_provenance(&cfg.output, "eval-homophily", cfg)?;
    Ok(buckets)
}

/// Writes a synthetic bundle (with a split) to the output directory.
pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::usage("synth needs data.synthetic"))?;
    spec.validate()?;
    let mut bundle = generate_synthetic(spec)?;
    bundle.split = Some(make_split(&bundle.labels, cfg.split)?);
    create_output_dir(&cfg.output)?;
    save_bundle(&bundle, &cfg.output)?;
    write_provenance(&cfg.output, "synth", cfg)?;
    Ok(())
}
