use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ExperimentConfig;
use super::dataset::{load_dataset, make_trials, write_dataset, LoadedData};
use super::graph_spec::GraphSpec;
use super::{BenchArgs, Cli, Command, EvalArgs, GraphArgs, ReportArgs, TrainArgs};
use crate::bench::{run_trend_benchmark, simulate_dataset, TrendConfig};
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, write_json_atomic};
use crate::scenesim::Scene;
use crate::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train_until, EvalReport, Model, OptimizerState, Sample,
    SelectionInfo, TrialSet,
};

const CHECKPOINT_DIR: &str = "checkpoint";

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    }
    .resolve(cli.seed)?;
    match &cli.command {
        Command::Simulate => simulate(&cfg, &cli.out),
        Command::Graph(args) => graph(args, cli.out_if_given()),
        Command::Train(args) => train(&cfg, args, &cli.out),
        Command::Eval(args) => eval(&cfg, args, &cli.out),
        Command::Report(args) => report(args, cli.out_if_given()),
        Command::Bench(args) => bench(args, cli.seed, &cli.out),
    }
}

impl Cli {
    fn out_if_given(&self) -> Option<&Path> {
        (self.out != Path::new(".")).then_some(self.out.as_path())
    }
}

fn experiment_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.unwrap_or(cfg.sim.seed)
}

fn csv_bytes<S: Serialize>(rows: &[S]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = simulate_dataset(&cfg.sim)?;
    write_dataset(out, &data, cfg.sim.n_speakers)?;
    info!("wrote {} train and {} test utterances to {}", data.train.len(), data.test.len(), out.display());
    Ok(())
}

fn graph(args: &GraphArgs, out: Option<&Path>) -> Result<()> {
    let spec: GraphSpec = args.spec.parse()?;
    let scene = match &args.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            Some(Scene::from_json(&text)?)
        }
        None if spec.needs_scene() => return Err(Error::Config(format!("spec {:?} needs --scene", args.spec))),
        None => None,
    };
    let (adjacency, mask) = spec.build(scene.as_ref())?;
    let doc = json!({ "adjacency": adjacency.to_json(), "mask": mask.map(|m| m.to_bits()) });
    match out {
        Some(dir) => write_json_atomic(&dir.join("graph.json"), &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

fn data_dir<'a>(flag: &'a Option<PathBuf>, cfg: &'a ExperimentConfig) -> Result<&'a Path> {
    flag.as_deref()
        .or(cfg.paths.data.as_deref())
        .ok_or_else(|| Error::Config("no dataset directory (use --data or paths.data)".into()))
}

#[derive(Debug, Serialize, Deserialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

fn train(cfg: &ExperimentConfig, args: &TrainArgs, out: &Path) -> Result<()> {
    let dir = data_dir(&args.data, cfg)?;
    let data = load_dataset(dir)?;
    let ckpt = out.join(CHECKPOINT_DIR);
    let loss_path = out.join("loss.csv");
    let (mut model, mut state, mut rows) = if args.resume {
        let (model, state) = load_checkpoint(&ckpt)?;
        if model.config != cfg.model || model.n_speakers != data.n_speakers {
            return Err(Error::Config("checkpoint was trained with a different configuration".into()));
        }
        let state = state.ok_or_else(|| Error::Data("checkpoint has no optimizer state to resume from".into()))?;
        let mut rows: Vec<LossRow> = match fs::read(&loss_path) {
            Ok(bytes) => csv::Reader::from_reader(bytes.as_slice()).deserialize().collect::<Result<_, _>>()?,
            Err(_) => Vec::new(),
        };
        rows.retain(|r| r.epoch < state.epochs_completed);
        (model, state, rows)
    } else {
        let model = Model::new(cfg.model.clone(), data.n_speakers)?;
        let state = OptimizerState::new(&model);
        (model, state, Vec::new())
    };
    if cfg.model.needs_scene() && data.train.iter().any(|s| s.scene.is_none()) {
        return Err(Error::MissingPrior);
    }
    let start = state.epochs_completed;
    let curve = train_until(&mut model, &mut state, &data.train, &cfg.train)?;
    rows.extend(curve.iter().enumerate().map(|(i, &loss)| LossRow { epoch: start + i, loss }));
    save_checkpoint(&ckpt, &model, Some(&state))?;
    write_atomic(&loss_path, &csv_bytes(&rows)?)?;
    if let Some(last) = rows.last() {
        info!("epoch {}: loss {:.6}", last.epoch, last.loss);
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    enroll_id: &'a str,
    test_id: &'a str,
    label: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    info: SelectionInfo,
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    distance: Option<f64>,
    eer: f64,
}

#[derive(Serialize)]
struct SweepRow {
    channels: usize,
    eer: f64,
    threshold: f64,
    n_trials: usize,
}

/// Keeps `n` random channels of every utterance; utterance `i` draws from its own stream.
fn subsample_all(utts: &[Sample], n: usize, seed: u64) -> Result<Vec<Sample>> {
    utts.iter()
        .enumerate()
        .map(|(i, u)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            u.subsample(n, &mut rng)
        })
        .collect()
}

fn per_node_rows(model: &Model, test: &[Sample], trials: &TrialSet) -> Result<Vec<NodeRow>> {
    let c = test.first().map(|u| u.features.c()).unwrap_or(0);
    if test.iter().any(|u| u.features.c() != c) {
        return Err(Error::Data("per-node analysis needs the same channel count in every utterance".into()));
    }
    (0..c)
        .map(|node| {
            let single = test.iter().map(|u| u.with_channels(&[node])).collect::<Result<Vec<_>>>()?;
            let r = evaluate(model, &single, trials)?;
            let pos = test.first().and_then(|u| u.scene.as_ref()).map(|s| s.nodes[node]);
            let dists: Vec<f64> =
                test.iter().filter_map(|u| u.scene.as_ref()).map(|s| s.distances().to_speaker[node]).collect();
            let distance = (!dists.is_empty()).then(|| dists.iter().sum::<f64>() / dists.len() as f64);
            Ok(NodeRow { node, x: pos.map(|p| p[0]), y: pos.map(|p| p[1]), z: pos.map(|p| p[2]), distance, eer: r.eer })
        })
        .collect()
}

fn eval(cfg: &ExperimentConfig, args: &EvalArgs, out: &Path) -> Result<()> {
    if args.channels == Some(0) {
        return Err(Error::Config("--channels must be positive".into()));
    }
    let ckpt = args
        .checkpoint
        .clone()
        .or_else(|| cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| out.join(CHECKPOINT_DIR));
    // Also accept the output directory of `train`.
    let nested = ckpt.join(CHECKPOINT_DIR);
    let ckpt = if nested.join("manifest.json").exists() { nested } else { ckpt };
    let (model, _) = load_checkpoint(&ckpt)?;
    let LoadedData { test, .. } = load_dataset(data_dir(&args.data, cfg)?)?;
    let seed = experiment_seed(cfg);
    let trials = match args.trials.as_ref().or(cfg.paths.trials.as_ref()) {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            TrialSet::read_csv(f)?
        }
        None => make_trials(&test, cfg.eval.n_target.zip(cfg.eval.n_nontarget), seed)?,
    };
    let test = match args.channels {
        Some(n) => subsample_all(&test, n, seed)?,
        None => test,
    };

    let report = evaluate(&model, &test, &trials)?;
    info!("EER {:.4} at threshold {:.6} over {} trials", report.eer, report.threshold, report.n_trials);

    let mut trial_bytes = Vec::new();
    trials.write_csv(&mut trial_bytes)?;
    let scores: Vec<ScoreRow> = trials
        .trials
        .iter()
        .zip(&report.scores)
        .map(|(t, &score)| ScoreRow {
            enroll_id: &t.enroll,
            test_id: &t.test,
            label: if t.target { "target" } else { "nontarget" },
            score,
        })
        .collect();
    let score_bytes = csv_bytes(&scores)?;

    let selection = if args.dump_selection {
        let rows = test
            .iter()
            .map(|u| Ok(SelectionRow { id: &u.id, info: model.embed(&u.features, u.scene.as_ref())?.selection }))
            .collect::<Result<Vec<_>>>()?;
        Some(rows)
    } else {
        None
    };
    let per_node = if args.per_node { Some(per_node_rows(&model, &test, &trials)?) } else { None };
    let sweep = if args.channels.is_none() && !cfg.eval.channels.is_empty() {
        let rows = cfg
            .eval
            .channels
            .iter()
            .map(|&n| {
                let r = evaluate(&model, &subsample_all(&test, n, seed)?, &trials)?;
                Ok(SweepRow { channels: n, eer: r.eer, threshold: r.threshold, n_trials: r.n_trials })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(rows)
    } else {
        None
    };

    write_json_atomic(&out.join("report.json"), &report)?;
    write_atomic(&out.join("trials.csv"), &trial_bytes)?;
    write_atomic(&out.join("scores.csv"), &score_bytes)?;
    if let Some(rows) = selection {
        write_json_atomic(&out.join("selection.json"), &rows)?;
    }
    if let Some(rows) = per_node {
        write_atomic(&out.join("per_node.csv"), &csv_bytes(&rows)?)?;
    }
    if let Some(rows) = sweep {
        write_atomic(&out.join("channel_sweep.csv"), &csv_bytes(&rows)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    report: String,
    eer: f64,
    threshold: f64,
    n_trials: usize,
}

fn report(args: &ReportArgs, out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.reports {
        let file = if path.is_dir() { path.join("report.json") } else { path.clone() };
        let text = fs::read_to_string(&file).map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
        let r: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", file.display())))?;
        rows.push(SummaryRow { report: path.display().to_string(), eer: r.eer, threshold: r.threshold, n_trials: r.n_trials });
    }
    let width = rows.iter().map(|r| r.report.len()).max().unwrap_or(0).max(6);
    println!("{:<width$}  {:>8}  {:>10}  {:>8}", "report", "EER(%)", "threshold", "trials");
    for r in &rows {
        println!("{:<width$}  {:>8.3}  {:>10.5}  {:>8}", r.report, 100.0 * r.eer, r.threshold, r.n_trials);
    }
    if let Some(dir) = out {
        write_atomic(&dir.join("summary.csv"), &csv_bytes(&rows)?)?;
    }
    Ok(())
}

fn bench(args: &BenchArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let first = seed.unwrap_or(1);
    let mut trend = TrendConfig { seeds: (first..first + args.seeds as u64).collect(), ..TrendConfig::default() };
    if let Some(e) = args.epochs {
        trend.train.epochs = e;
    }
    let report = run_trend_benchmark(&trend)?;
    println!("{:>6}  {:>8}  {:>8}  {:>10}", "seed", "MEAN", "GCN", "GCN+prior");
    for r in &report.rows {
        println!("{:>6}  {:>8.3}  {:>8.3}  {:>10.3}", r.seed, 100.0 * r.mean_baseline, 100.0 * r.gcn, 100.0 * r.gcn_prior);
    }
    println!(
        "{:>6}  {:>8.3}  {:>8.3}  {:>10.3}",
        "mean",
        100.0 * report.mean_baseline_eer(),
        100.0 * report.mean_gcn_eer(),
        100.0 * report.mean_gcn_prior_eer()
    );
    write_json_atomic(&out.join("trend.json"), &report)
}
