//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use adedgedrop::adversary::{pgd_step, Perturbation};
use adedgedrop::harness::attack::AttackKind;
use adedgedrop::harness::commands::{attack_eval, train_once, TrainRun};
use adedgedrop::harness::retrain::{retrain_on_learned_graph, RetrainComparison};
use adedgedrop::harness::sbm::{gen_sbm, noise_enrichment, NoiseEnrichment, SbmSpec, SyntheticGraph};
use adedgedrop::linegraph::build_line_graph;
use adedgedrop::metrics::running_median;
use adedgedrop::trainer::learned_graph;
use adedgedrop::{Matrix, TrainConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

const GRAD_BUDGET: Duration = Duration::from_secs(10);
const LINEGRAPH_BUDGET: Duration = Duration::from_secs(30);
const ENRICHMENT_BUDGET: Duration = Duration::from_secs(5 * 60);
const RETRAIN_BUDGET: Duration = Duration::from_secs(10 * 60);
const ATTACK_BUDGET: Duration = Duration::from_secs(10 * 60);
const ENRICHED_SEEDS_REQUIRED: usize = 4;
const ATTACK_RATE: f64 = 0.2;
const SMOOTHING_WINDOW: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let backbone = common::backbone_gradient_report(1);
    let predictor = common::predictor_gradient_report(1);
    let took = start.elapsed();
    let worst = backbone.worst_rel.max(predictor.worst_rel);
    let failures = backbone.failures.len() + predictor.failures.len();
    let checked = backbone.checked + predictor.checked;
    outcome(
        failures == 0 && checked > 0 && took < GRAD_BUDGET,
        format!(
            "{checked} entries, {failures} above rel {:e} (step {:e}), worst rel {worst:.2e}, {} (budget {})",
            common::FD_REL_TOL,
            common::FD_STEP,
            secs(took),
            secs(GRAD_BUDGET)
        ),
    )
}

fn line_graph_oracle() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for seed in 0..100u64 {
        let n = 2 + (seed as usize * 7) % 49;
        let p = [0.05, 0.1, 0.2, 0.4][seed as usize % 4];
        let g = common::erdos_renyi(n, p, seed);
        let lg = build_line_graph(&g);
        let expected = common::brute_force_line_graph(&g);
        let sum_sq: usize = g.degrees().iter().map(|d| d * d).sum();
        let ok = common::built_line_graph(&g) == expected
            && lg.num_nodes() == g.num_edges()
            && 2 * lg.num_edges() + 2 * g.num_edges() == sum_sq;
        if !ok {
            mismatches.push(seed);
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches.is_empty() && took < LINEGRAPH_BUDGET,
        format!(
            "100 graphs (n <= 50), mismatched seeds {mismatches:?}, {} (budget {})",
            secs(took),
            secs(LINEGRAPH_BUDGET)
        ),
    )
}

/// Ascent on `f(δ) = −(λ/2)‖δ − c‖²`, whose per-coordinate curvature bound
/// for a sign step is `γ ≤ 2|∂f/∂δ_i| / λ`.
fn quadratic_sign_steps() -> (usize, usize) {
    let mut r = common::rng(99);
    let (mut steps, mut decreases) = (0, 0);
    for _ in 0..200 {
        let eps = r.random_range(0.05..1.0);
        let lambda = r.random_range(0.5..5.0);
        let c = Matrix::from_fn(4, 2, |_, _| r.random_range(-eps..eps));
        let f = |d: &Matrix| -> f64 {
            -0.5 * lambda * d.as_slice().iter().zip(c.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let mut delta = Perturbation {
            values: Matrix::from_fn(4, 2, |_, _| r.random_range(-eps..=eps)),
            epsilon: eps,
        };
        for _ in 0..10 {
            let grad = delta.values.zip_map(&c, |d, ci| -lambda * (d - ci)).unwrap();
            let bound = grad
                .as_slice()
                .iter()
                .filter(|g| **g != 0.0)
                .map(|g| 2.0 * g.abs() / lambda)
                .fold(f64::INFINITY, f64::min);
            if !bound.is_finite() {
                break;
            }
            let gamma = 0.9 * bound.min(eps);
            let next = pgd_step(&delta, &grad, gamma).unwrap();
            steps += 1;
            if f(&next.values) < f(&delta.values) {
                decreases += 1;
            }
            delta = next;
        }
    }
    (steps, decreases)
}

fn pgd_contract(runs: &[TrainRun], cfg: &TrainConfig) -> Outcome {
    let worst = runs.iter().map(|r| r.state.max_delta_linf).fold(0.0, f64::max);
    let epochs: usize = runs.iter().map(|r| r.records.len()).sum();
    let (steps, decreases) = quadratic_sign_steps();
    outcome(
        worst <= cfg.epsilon && decreases == 0 && steps > 0,
        format!(
            "max ||delta||_inf {worst} vs eps {} over {epochs} epochs x {} steps; toy quadratic {decreases}/{steps} steps decreased",
            cfg.epsilon, cfg.eta
        ),
    )
}

fn enrichment(runs: &[TrainRun], sbm: &SyntheticGraph, took: Duration) -> Outcome {
    let noise = sbm.noise_set();
    let g = &sbm.dataset.graph;
    let stats: Vec<NoiseEnrichment> = runs
        .iter()
        .map(|r| {
            let keep = r.state.best_mask().map_or_else(|| vec![true; g.num_edges()], |m| m.keep.clone());
            noise_enrichment(g, &keep, &noise)
        })
        .collect();
    let enriched = stats.iter().filter(|s| s.enriched()).count();
    let fractions: Vec<String> = stats
        .iter()
        .map(|s| match s.dropped_noise_fraction() {
            Some(f) => format!("{f:.3}({} dropped)", s.dropped),
            None => "none dropped".into(),
        })
        .collect();
    let base = stats.first().map_or(0.0, NoiseEnrichment::overall_noise_fraction);
    outcome(
        enriched >= ENRICHED_SEEDS_REQUIRED && took < ENRICHMENT_BUDGET,
        format!(
            "enriched in {enriched}/5 seeds (need >= {ENRICHED_SEEDS_REQUIRED}); dropped-noise fraction [{}] vs base {base:.3}; training {} (budget {})",
            fractions.join(", "),
            secs(took),
            secs(ENRICHMENT_BUDGET)
        ),
    )
}

fn method_vs_random(cmps: &[RetrainComparison], took: Duration) -> Outcome {
    let learned: Vec<f64> = cmps.iter().map(|c| c.learned.test_acc).collect();
    let random: Vec<f64> = cmps.iter().map(|c| c.random.map_or(f64::NAN, |a| a.test_acc)).collect();
    let matched = cmps.iter().all(|c| c.random.is_some());
    let deleted: Vec<f64> = cmps.iter().map(|c| c.deleted_pct).collect();
    outcome(
        matched && mean(&learned) >= mean(&random) && took < RETRAIN_BUDGET,
        format!(
            "mean acc learned {:.4} [{}] vs random {:.4} [{}]; deleted% [{}]; {} (budget {})",
            mean(&learned),
            list(&learned),
            mean(&random),
            list(&random),
            list(&deleted),
            secs(took),
            secs(RETRAIN_BUDGET)
        ),
    )
}

fn robustness(ds: &SyntheticGraph, cfg: &TrainConfig) -> Outcome {
    let start = Instant::now();
    let rows: Vec<_> = SEEDS
        .iter()
        .map(|&seed| attack_eval(&ds.dataset, &TrainConfig { seed, ..cfg.clone() }, AttackKind::Add, ATTACK_RATE, None, false))
        .collect::<Result<_, _>>()
        .expect("attack evaluation runs");
    let took = start.elapsed();
    let method: Vec<f64> = rows.iter().map(|r| r.method_drop()).collect();
    let plain: Vec<f64> = rows.iter().map(|r| r.plain_drop()).collect();
    outcome(
        mean(&method) <= mean(&plain) && took < ATTACK_BUDGET,
        format!(
            "{:.0}% added edges: mean drop adedgedrop {:.4} [{}] vs plain {:.4} [{}]; {} (budget {})",
            ATTACK_RATE * 100.0,
            mean(&method),
            list(&method),
            mean(&plain),
            list(&plain),
            secs(took),
            secs(ATTACK_BUDGET)
        ),
    )
}

fn ablation(runs: &[TrainRun], ds: &SyntheticGraph, cfg: &TrainConfig) -> Outcome {
    let plain_cfg = TrainConfig {
        adversarial: false,
        epsilon: 0.0,
        gamma: 0.0,
        eta: 1,
        ..cfg.clone()
    };
    let without: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| train_once(&ds.dataset, &TrainConfig { seed, ..plain_cfg.clone() }).map(|r| r.test_acc))
        .collect::<Result<_, _>>()
        .expect("ablation runs");
    let with: Vec<f64> = runs.iter().map(|r| r.test_acc).collect();
    outcome(
        mean(&with) >= mean(&without),
        format!(
            "mean test acc adversarial {:.4} [{}] vs eps=0,gamma=0,eta=1 {:.4} [{}]",
            mean(&with),
            list(&with),
            mean(&without),
            list(&without)
        ),
    )
}

fn convergence(runs: &[TrainRun]) -> Outcome {
    let mut below = 0;
    let mut pairs = Vec::new();
    for r in runs {
        let l_ce: Vec<f64> = r.records.iter().map(|m| m.l_ce).collect();
        let smooth = running_median(&l_ce, SMOOTHING_WINDOW);
        let (first, last) = (smooth[0], smooth[smooth.len() - 1]);
        below += usize::from(last < first);
        pairs.push(format!("{first:.3}->{last:.3}"));
    }
    outcome(
        below == runs.len(),
        format!("window-{SMOOTHING_WINDOW} median L_ce first->final [{}]", pairs.join(", ")),
    )
}

fn binary() -> Option<PathBuf> {
    // The test executable lives in target/<profile>/deps.
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let bin = dir.join(format!("adedgedrop{}", std::env::consts::EXE_SUFFIX));
    bin.is_file().then_some(bin)
}

fn collect_outputs(dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>, root: &Path) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_outputs(&path, out, root);
        } else if matches!(
            path.file_name().and_then(|n| n.to_str()),
            Some("metrics.jsonl" | "learned_edges.tsv" | "summary.tsv")
        ) {
            out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
        }
    }
}

fn determinism() -> Outcome {
    let Some(bin) = binary() else {
        return outcome(false, "adedgedrop binary not built; run `cargo build -p adedgedrop` first".into());
    };
    let tmp = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 4] = [
        &["train", "--seed", "3", "--epochs", "150"],
        &["baseline", "--baseline", "dropedge", "--seed", "3", "--epochs", "150"],
        &["retrain", "--seed", "1", "--epochs", "100"],
        &["attack-eval", "--repeats", "2", "--epochs", "60"],
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (k, args) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("cmd{k}_{rep}"));
            let status = Command::new(&bin)
                .args(*args)
                .arg("--out")
                .arg(&out)
                .output()
                .expect("binary runs");
            if !status.status.success() {
                return outcome(false, format!("`{}` failed: {}", args[0], String::from_utf8_lossy(&status.stderr)));
            }
            let mut got = Vec::new();
            collect_outputs(&out, &mut got, &out);
            outputs.push(got);
        }
        files += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            mismatched.push(args[0]);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("train, baseline, retrain, attack-eval each run twice; {files} output files compared, mismatched commands {mismatched:?}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let sbm = gen_sbm(&SbmSpec::default()).expect("default SBM instance");
    let cfg = TrainConfig::default();

    let start = Instant::now();
    let runs: Vec<TrainRun> = SEEDS
        .iter()
        .map(|&seed| train_once(&sbm.dataset, &TrainConfig { seed, ..cfg.clone() }))
        .collect::<Result<_, _>>()
        .expect("training runs");
    let train_time = start.elapsed();

    let retrain_start = Instant::now();
    let cmps: Vec<RetrainComparison> = runs
        .iter()
        .map(|r| {
            let learned = learned_graph(&r.state, &sbm.dataset.graph)?;
            retrain_on_learned_graph(&learned, true, &sbm.dataset, &TrainConfig { seed: r.seed, ..cfg.clone() })
        })
        .collect::<Result<_, _>>()
        .expect("retraining runs");
    let retrain_time = train_time + retrain_start.elapsed();

    let results = [
        ("gradient correctness", guarded(gradient_correctness)),
        ("line-graph oracle", guarded(line_graph_oracle)),
        ("PGD contract", guarded(|| pgd_contract(&runs, &cfg))),
        ("noisy-edge enrichment", guarded(|| enrichment(&runs, &sbm, train_time))),
        ("learned vs random graph", guarded(|| method_vs_random(&cmps, retrain_time))),
        ("robustness under edge addition", guarded(|| robustness(&sbm, &cfg))),
        ("ablation ordering", guarded(|| ablation(&runs, &sbm, &cfg))),
        ("convergence", guarded(|| convergence(&runs))),
        ("CLI determinism", guarded(determinism)),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{name}]: {verdict} - {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
