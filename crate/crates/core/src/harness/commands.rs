//! Command implementations shared by the CLI and the experiment tests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{load_graph, write_edges, Dataset};
use crate::harness::attack::{attack_graph, AttackKind};
use crate::harness::baseline::{run_baseline, BaselineKind, BaselineOutcome};
use crate::harness::report::{self, write_summary};
use crate::harness::retrain::{retrain_on_learned_graph, RetrainComparison};
use crate::harness::{run_repeats, ExperimentSpec};
use crate::metrics::{write_jsonl, MetricsRecord};
use crate::trainer::{evaluate, learned_graph, Trainer, TrainConfig, TrainState, LearnedGraphSummary, deleted_percentage};

/// One finished ADEdgeDrop run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub seed: u64,
    pub state: TrainState,
    pub records: Vec<MetricsRecord>,
    pub val_acc: f64,
    pub test_acc: f64,
    pub learned: LearnedGraphSummary,
}

pub fn train_once(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    let (state, records) = Trainer::new(ds, cfg)?.run(|_| {})?;
    let (val_acc, test_acc) = evaluate(&state, ds)?;
    let kept = state
        .best_mask()
        .map_or(ds.graph.num_edges(), |m| m.keep_count());
    Ok(TrainRun {
        seed: cfg.seed,
        learned: LearnedGraphSummary {
            total_edges: ds.graph.num_edges(),
            kept_edges: kept,
            deleted_pct: deleted_percentage(ds.graph.num_edges(), kept),
        },
        state,
        records,
        val_acc,
        test_acc,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Per-seed output directory; a single repeat writes straight into `out`.
pub fn run_dir(out: &Path, seed: u64, repeats: usize) -> PathBuf {
    if repeats == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed_{seed}"))
    }
}

fn prepare(spec: &ExperimentSpec) -> Result<()> {
    spec.validate()?;
    create_dir(&spec.out)?;
    let path = spec.out.join("config.echo");
    fs::write(&path, spec.echo()).map_err(|e| Error::io(&path, e))
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.clone()
    }
}

/// Applies the configured attack, seeded by the training seed.
fn attacked(spec: &ExperimentSpec, ds: &Dataset, seed: u64) -> Result<Dataset> {
    match spec.attack {
        None => Ok(ds.clone()),
        Some(kind) => ds.with_graph(attack_graph(&ds.graph, kind, spec.attack_rate, seed)?),
    }
}

pub fn write_train_run(run: &TrainRun, ds: &Dataset, dir: &Path, timing: bool) -> Result<()> {
    create_dir(dir)?;
    write_jsonl(&dir.join("metrics.jsonl"), &run.records, timing)?;
    write_edges(&dir.join("learned_edges.tsv"), learned_graph(&run.state, &ds.graph)?.edges())?;
    let best_epoch = run.state.best.as_ref().map_or(0, |b| b.epoch) as f64;
    write_summary(
        &dir.join("summary.tsv"),
        &[
            ("val_acc", vec![run.val_acc]),
            ("test_acc", vec![run.test_acc]),
            ("best_epoch", vec![best_epoch]),
            ("epochs", vec![run.records.len() as f64]),
            ("total_edges", vec![run.learned.total_edges as f64]),
            ("kept_edges", vec![run.learned.kept_edges as f64]),
            ("deleted_pct", vec![run.learned.deleted_pct]),
            ("sigma", vec![run.state.sigma]),
            ("kappa", vec![run.state.kappa as f64]),
        ],
    )
}

pub fn train_command(spec: &ExperimentSpec) -> Result<Vec<TrainRun>> {
    prepare(spec)?;
    let (ds, _) = spec.dataset()?;
    let runs = run_repeats(&spec.seeds(), |seed| {
        let ds = attacked(spec, &ds, seed)?;
        let run = train_once(&ds, &with_seed(&spec.train, seed))?;
        write_train_run(&run, &ds, &run_dir(&spec.out, seed, spec.repeats), spec.timing)?;
        Ok(run)
    })?;
    if spec.repeats > 1 {
        let col = |f: fn(&TrainRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        write_summary(
            &spec.out.join("summary.tsv"),
            &[
                ("val_acc", col(|r| r.val_acc)),
                ("test_acc", col(|r| r.test_acc)),
                ("kept_edges", col(|r| r.learned.kept_edges as f64)),
                ("deleted_pct", col(|r| r.learned.deleted_pct)),
            ],
        )?;
    }
    Ok(runs)
}

pub fn baseline_command(spec: &ExperimentSpec) -> Result<Vec<BaselineOutcome>> {
    prepare(spec)?;
    let (ds, _) = spec.dataset()?;
    let runs = run_repeats(&spec.seeds(), |seed| {
        let ds = attacked(spec, &ds, seed)?;
        let out = run_baseline(spec.baseline, &ds, &with_seed(&spec.train, seed), spec.drop_rate)?;
        let dir = run_dir(&spec.out, seed, spec.repeats);
        create_dir(&dir)?;
        write_jsonl(&dir.join("metrics.jsonl"), &out.records, spec.timing)?;
        write_summary(
            &dir.join("summary.tsv"),
            &[
                ("val_acc", vec![out.val_acc]),
                ("test_acc", vec![out.test_acc]),
                ("best_epoch", vec![out.best_epoch as f64]),
                ("epochs", vec![out.records.len() as f64]),
            ],
        )?;
        Ok(out)
    })?;
    if spec.repeats > 1 {
        write_summary(
            &spec.out.join("summary.tsv"),
            &[
                ("val_acc", runs.iter().map(|r| r.val_acc).collect()),
                ("test_acc", runs.iter().map(|r| r.test_acc).collect()),
            ],
        )?;
    }
    Ok(runs)
}

/// Test accuracy of ADEdgeDrop and the plain GCN on clean and attacked graphs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackEvalRow {
    pub seed: u64,
    pub method_clean: f64,
    pub method_attacked: f64,
    pub plain_clean: f64,
    pub plain_attacked: f64,
}

impl AttackEvalRow {
    pub fn method_drop(&self) -> f64 {
        self.method_clean - self.method_attacked
    }

    pub fn plain_drop(&self) -> f64 {
        self.plain_clean - self.plain_attacked
    }
}

/// Runs both methods on `ds` and on its attacked copy. With `out`, each
/// arm's metrics land in `out/<arm>/`.
pub fn attack_eval(
    ds: &Dataset,
    cfg: &TrainConfig,
    kind: AttackKind,
    rate: f64,
    out: Option<&Path>,
    timing: bool,
) -> Result<AttackEvalRow> {
    let hit = ds.with_graph(attack_graph(&ds.graph, kind, rate, cfg.seed)?)?;
    let mut accs = [0.0; 4];
    for (slot, (arm, data, method)) in [
        ("adedgedrop_clean", ds, true),
        ("adedgedrop_attacked", &hit, true),
        ("plain_clean", ds, false),
        ("plain_attacked", &hit, false),
    ]
    .into_iter()
    .enumerate()
    {
        let (acc, records) = if method {
            let run = train_once(data, cfg)?;
            if let Some(dir) = out {
                write_train_run(&run, data, &dir.join(arm), timing)?;
            }
            (run.test_acc, None)
        } else {
            let b = run_baseline(BaselineKind::Plain, data, cfg, 0.0)?;
            (b.test_acc, Some(b.records))
        };
        if let (Some(dir), Some(records)) = (out, records) {
            create_dir(&dir.join(arm))?;
            write_jsonl(&dir.join(arm).join("metrics.jsonl"), &records, timing)?;
        }
        accs[slot] = acc;
    }
    Ok(AttackEvalRow {
        seed: cfg.seed,
        method_clean: accs[0],
        method_attacked: accs[1],
        plain_clean: accs[2],
        plain_attacked: accs[3],
    })
}

pub fn attack_eval_command(spec: &ExperimentSpec) -> Result<Vec<AttackEvalRow>> {
    prepare(spec)?;
    let (ds, _) = spec.dataset()?;
    let kind = spec.attack.unwrap_or(AttackKind::Add);
    let rows = run_repeats(&spec.seeds(), |seed| {
        let dir = spec.out.join(format!("seed_{seed}"));
        attack_eval(&ds, &with_seed(&spec.train, seed), kind, spec.attack_rate, Some(&dir), spec.timing)
    })?;
    let col = |f: fn(&AttackEvalRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    write_summary(
        &spec.out.join("summary.tsv"),
        &[
            ("adedgedrop_clean", col(|r| r.method_clean)),
            ("adedgedrop_attacked", col(|r| r.method_attacked)),
            ("adedgedrop_drop", col(AttackEvalRow::method_drop)),
            ("plain_clean", col(|r| r.plain_clean)),
            ("plain_attacked", col(|r| r.plain_attacked)),
            ("plain_drop", col(AttackEvalRow::plain_drop)),
        ],
    )?;
    Ok(rows)
}

/// Trains ADEdgeDrop, then retrains plain GCNs on its learned graph and on a
/// matched random graph.
pub fn retrain_experiment(ds: &Dataset, cfg: &TrainConfig, random_matched: bool) -> Result<(TrainRun, RetrainComparison)> {
    let run = train_once(ds, cfg)?;
    let learned = learned_graph(&run.state, &ds.graph)?;
    let cmp = retrain_on_learned_graph(&learned, random_matched, ds, cfg)?;
    Ok((run, cmp))
}

pub fn retrain_command(spec: &ExperimentSpec) -> Result<Vec<RetrainComparison>> {
    prepare(spec)?;
    let (ds, _) = spec.dataset()?;
    let given = match &spec.learned_edges {
        Some(path) => Some(load_graph(path, ds.graph.num_nodes())?.0),
        None => None,
    };
    let rows = run_repeats(&spec.seeds(), |seed| {
        let cfg = with_seed(&spec.train, seed);
        let dir = run_dir(&spec.out, seed, spec.repeats);
        match &given {
            Some(g) => retrain_on_learned_graph(g, spec.random_matched, &ds, &cfg),
            None => {
                let (run, cmp) = retrain_experiment(&ds, &cfg, spec.random_matched)?;
                write_train_run(&run, &ds, &dir, spec.timing)?;
                Ok(cmp)
            }
        }
    })?;
    let col = |f: &dyn Fn(&RetrainComparison) -> Option<f64>| rows.iter().filter_map(f).collect::<Vec<_>>();
    write_summary(
        &spec.out.join("summary.tsv"),
        &[
            ("learned_test_acc", col(&|r| Some(r.learned.test_acc))),
            ("random_test_acc", col(&|r| r.random.map(|a| a.test_acc))),
            ("learned_val_acc", col(&|r| Some(r.learned.val_acc))),
            ("random_val_acc", col(&|r| r.random.map(|a| a.val_acc))),
            ("kept_edges", col(&|r| Some(r.kept_edges as f64))),
            ("deleted_pct", col(&|r| Some(r.deleted_pct))),
        ],
    )?;
    Ok(rows)
}

pub fn gen_sbm_command(spec: &ExperimentSpec) -> Result<()> {
    spec.sbm.validate()?;
    let syn = crate::harness::sbm::gen_sbm(&spec.sbm)?;
    syn.dataset.save(&spec.out)?;
    write_edges(&spec.out.join("noise_edges.tsv"), &syn.noise_edges)
}

pub fn report_command(spec: &ExperimentSpec) -> Result<report::ReportOutput> {
    report::report(&spec.out)
}

pub fn sweep_command(spec: &ExperimentSpec) -> Result<report::ReportOutput> {
    prepare(spec)?;
    let (ds, _) = spec.dataset()?;
    let cells: Vec<(f64, u64)> = spec
        .sweep_mu
        .iter()
        .flat_map(|&mu| spec.seeds().into_iter().map(move |s| (mu, s)))
        .collect();
    let keys: Vec<u64> = (0..cells.len() as u64).collect();
    run_repeats(&keys, |k| {
        let (mu, seed) = cells[k as usize];
        let cfg = TrainConfig {
            mu,
            ..with_seed(&spec.train, seed)
        };
        let ds = attacked(spec, &ds, seed)?;
        let run = train_once(&ds, &cfg)?;
        let dir = spec.out.join(format!("mu_{mu}")).join(format!("seed_{seed}"));
        write_train_run(&run, &ds, &dir, spec.timing)
    })?;
    report::report(&spec.out)
}
