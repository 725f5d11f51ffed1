//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as failures but do not fail
//! the process; see the README for why they stay red.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use layerprobe::parallel::WallClock;
use layerprobe_core::evaluation::{eval_input_reduce, eval_our_method, evaluate, EvalConfig};
use layerprobe_core::exec::{NoClock, Sequential};
use layerprobe_core::logistic::LogisticObjective;
use layerprobe_core::mi::{entropy, estimate_mi, geometric_bandwidths, plugin_mi, MiEstimatorConfig};
use layerprobe_core::probes::mlp::MlpShape;
use layerprobe_core::probes::ridge::ridge_solve;
use layerprobe_core::probes::RIDGE_ALPHAS;
use layerprobe_core::regularity::regularity;
use layerprobe_core::selection::{characterize, normalized_regularity, select_layer, CharacterizeConfig, DEFAULT_LAMBDA};
use layerprobe_core::synth::{build_fixture, sample_ids, FixtureConfig, SyntheticTask};
use layerprobe_core::{rng, ActivationPack, ConceptTable, LayerSlab, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const KNOWN_RED: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---- shared builders ----

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn balanced_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
    y.shuffle(&mut rng::rng(seed));
    y
}

fn random_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| r.random_range(0..k)).collect()
}

fn pack_of(layers: &[Matrix]) -> ActivationPack {
    let n = layers[0].rows();
    let slabs = layers
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let data = m.as_slice().iter().map(|&v| v as f32).collect();
            LayerSlab::new(i, format!("layer_{i}"), m.rows(), m.cols(), data).unwrap()
        })
        .collect();
    ActivationPack::new("planted", slabs, sample_ids(n)).unwrap()
}

fn single_concept(y: &[usize]) -> ConceptTable {
    let col: Vec<u32> = y.iter().map(|&v| v as u32).collect();
    ConceptTable::from_columns(vec!["c".into()], sample_ids(y.len()), &[col]).unwrap()
}

/// Noise layers; layer `planted` carries the label as coordinate 0.
fn planted_pack(y: &[usize], layers: usize, dim: usize, planted: usize, seed: u64) -> ActivationPack {
    let mats: Vec<Matrix> = (0..layers)
        .map(|l| {
            let mut m = gaussian(y.len(), dim, rng::derive(seed, l as u64));
            if l == planted {
                for (i, &c) in y.iter().enumerate() {
                    m.set(i, 0, c as f64);
                }
            }
            m
        })
        .collect();
    pack_of(&mats)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|j| {
            q[j] = p[j] + h;
            let up = f(&q);
            q[j] = p[j] - h;
            let down = f(&q);
            q[j] = p[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

// ---- criteria ----

fn mi_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = MiEstimatorConfig { bandwidths: geometric_bandwidths(15, 0.05, 0.5), ..MiEstimatorConfig::default() };
    let mut worst: f64 = 0.0;
    let n = 10_000;
    for seed in 0..12u64 {
        let mut r = rng::rng(seed);
        let cols = 1 + seed as usize % 3;
        let values = 2 + seed as usize % 3;
        let k = 2 + seed as usize % 2;
        let table: Vec<Vec<usize>> = (0..cols).map(|_| (0..k).map(|_| r.random_range(0..values)).collect()).collect();
        let flip: Vec<f64> = (0..cols).map(|_| r.random_range(0.0..0.8)).collect();
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut x = Matrix::zeros(n, cols);
        for i in 0..n {
            for j in 0..cols {
                let v = if r.random::<f64>() < flip[j] { r.random_range(0..values) } else { table[j][y[i]] };
                x.set(i, j, v as f64);
            }
        }
        let exact = plugin_mi(&x, &y, k).unwrap();
        let est = estimate_mi(&x, &y, k, &cfg.clone().with_seed(seed)).unwrap().mutual_information_bits;
        worst = worst.max((est - exact).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 0.1 && secs < 30.0, format!("12 distributions, max |estimate - plugin| = {worst:.4} bits, {secs:.1}s"))
}

fn bounds() -> Outcome {
    let cases = 1000u64;
    let mut bad = Vec::new();
    for case in 0..cases {
        let mut r = rng::rng(rng::derive(0xB0_0D5, case));
        let n = r.random_range(50..100);
        let d = r.random_range(1..20);
        let k = r.random_range(2..5);
        let scale: f64 = r.random_range(0.0..3.0);
        let y = balanced_labels(n, k, case);
        let mut x = gaussian(n, d, case + 7);
        for i in 0..n {
            let v = x.get(i, 0) + scale * y[i] as f64;
            x.set(i, 0, v);
        }
        let est = estimate_mi(&x, &y, k, &MiEstimatorConfig::default().with_ensemble_size(3).with_seed(case)).unwrap();
        let h = entropy(&y, k).unwrap();
        let reg = regularity(&x, &y, k, case).unwrap();
        let ok = (0.0..=1.0).contains(&est.uncertainty_coefficient)
            && est.mutual_information_bits >= 0.0
            && est.mutual_information_bits <= h + 1e-12
            && (0.0..=1.0).contains(&reg.r_accuracy)
            && normalized_regularity(1.0 / k as f64, k) == 0.0
            && normalized_regularity(1.0, k) == 1.0;
        if !ok {
            bad.push(case);
        }
    }
    outcome(bad.is_empty(), format!("{cases} randomized cases, {} out of bounds {bad:?}", bad.len()))
}

fn gradients() -> Outcome {
    let configs = 60u64;
    let (mut logistic, mut mlp): (f64, f64) = (0.0, 0.0);
    for cfg in 0..configs {
        let mut r = rng::rng(cfg);
        let n = r.random_range(5..40);
        let d = r.random_range(1..8);
        let k = r.random_range(2..5);
        let x = gaussian(n, d, cfg + 1000);
        let y = random_labels(n, k, cfg + 2000);
        let obj = LogisticObjective::new(&x, &y, k, 0.0);
        let p: Vec<f64> = (0..obj.n_params()).map(|_| StandardNormal.sample(&mut r)).collect();
        let (_, g) = obj.loss_and_grad(&p);
        let fd = central_diff(|q| obj.loss(q), &p, 1e-5);
        logistic = g.iter().zip(&fd).map(|(a, b)| rel_err(*a, *b)).fold(logistic, f64::max);

        let hidden = if cfg % 4 == 0 { None } else { Some(r.random_range(1..8)) };
        let l1 = if cfg % 3 == 0 { 1e-3 } else { 0.0 };
        let x = gaussian(5, d, cfg + 3000);
        let y = random_labels(5, k, cfg + 4000);
        let shape = MlpShape::new(d, hidden, k);
        let p: Vec<f64> = (0..shape.n_params()).map(|_| StandardNormal.sample(&mut r)).collect();
        let batch: Vec<usize> = (0..5).collect();
        let (_, g) = shape.loss_and_grad(&p, &x, &y, &batch, l1);
        let fd = central_diff(|q| shape.loss(q, &x, &y, &batch, l1), &p, 1e-5);
        mlp = g.iter().zip(&fd).map(|(a, b)| rel_err(*a, *b)).fold(mlp, f64::max);
    }
    outcome(
        logistic <= 1e-4 && mlp <= 1e-4,
        format!("{configs} configurations each, max relative error logistic {logistic:.2e}, mlp {mlp:.2e}"),
    )
}

fn ridge() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let x = gaussian(50, 10, seed);
        let y = gaussian(50, 1, seed + 100).into_vec();
        for &alpha in &RIDGE_ALPHAS {
            let w = ridge_solve(&x, &y, alpha).unwrap();
            let lhs = x.gram().mul_vec(&w);
            let xty = x.t_mul_vec(&y);
            let resid = lhs.iter().zip(&w).zip(&xty).map(|((l, wj), r)| (l + alpha * wj - r).abs()).fold(0.0, f64::max);
            worst = worst.max(resid);
        }
    }
    outcome(worst <= 1e-8, format!("10 systems x {} alphas, max residual {worst:.2e}", RIDGE_ALPHAS.len()))
}

fn planted_recovery() -> Outcome {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let mut r = rng::rng(rng::derive(0x91A, seed));
        let layers = r.random_range(3..7);
        let planted = r.random_range(0..layers);
        let y = balanced_labels(600, 2, seed);
        let pack = planted_pack(&y, layers, 2, planted, seed + 50);
        let curve = characterize(&pack, &single_concept(&y), "c", &CharacterizeConfig::default(), DEFAULT_LAMBDA, seed, &Sequential)
            .unwrap();
        if select_layer(&curve).unwrap() == planted {
            hits += 1;
        } else {
            misses.push(seed);
        }
    }
    outcome(hits >= 19, format!("{hits}/20 seeds select the planted layer, misses {misses:?}"))
}

struct FixtureRun {
    seed: u64,
    method: f64,
    layers_avg: f64,
    oracle: f64,
    method_secs: f64,
    best_val_secs: f64,
    total_secs: f64,
}

fn fixture_runs() -> Vec<FixtureRun> {
    (0..3u64)
        .map(|seed| {
            let start = Instant::now();
            let fx = build_fixture(&SyntheticTask::standard(seed), &FixtureConfig::default(), seed, "refnet").unwrap();
            let names = fx.concepts.concept_names().to_vec();
            let (report, _) =
                evaluate(&fx.pack, &fx.concepts, &names, &EvalConfig::default(), seed, &Sequential, &WallClock::new()).unwrap();
            let a = &report.average;
            FixtureRun {
                seed,
                method: a.method_accuracy,
                layers_avg: a.layers_avg_accuracy,
                oracle: a.oracle_accuracy,
                method_secs: a.runtimes.method_seconds,
                best_val_secs: a.runtimes.best_validation_seconds,
                total_secs: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn comparative(runs: &[FixtureRun]) -> Outcome {
    let n = runs.len() as f64;
    let method = runs.iter().map(|r| r.method).sum::<f64>() / n;
    let avg = runs.iter().map(|r| r.layers_avg).sum::<f64>() / n;
    let oracle = runs.iter().map(|r| r.oracle).sum::<f64>() / n;
    let slowest = runs.iter().map(|r| r.total_secs).fold(0.0, f64::max);
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("s{}: gap {:+.3} pct {:.1} {:.0}s", r.seed, r.method - r.layers_avg, 100.0 * r.method / r.oracle, r.total_secs))
        .collect();
    outcome(
        method >= avg + 0.05 && method >= 0.95 * oracle && slowest < 300.0,
        format!(
            "8 concepts, fixture seeds 0-2: method {method:.4}, layers avg {avg:.4} (gap {:+.4}), {:.1}% of oracle [{}]",
            method - avg,
            100.0 * method / oracle,
            per_seed.join("; ")
        ),
    )
}

fn efficiency(runs: &[FixtureRun]) -> Outcome {
    let method: f64 = runs.iter().map(|r| r.method_secs).sum();
    let best: f64 = runs.iter().map(|r| r.best_val_secs).sum();
    let ratio = method / best;
    outcome(ratio <= 0.5, format!("method {method:.2}s vs best validation {best:.2}s per concept (summed over seeds), ratio {ratio:.2}"))
}

fn distractor() -> Outcome {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let task = SyntheticTask::standard(seed);
        let fx = build_fixture(&task, &FixtureConfig::default(), seed, "refnet").unwrap();
        let l = fx.pack.num_layers();
        let late: Vec<usize> = (l / 2..l).collect();
        let pack = fx.pack.sub_pack(&late).unwrap();
        let mut scores: Vec<(String, f64)> = fx
            .concepts
            .concept_names()
            .iter()
            .map(|c| {
                let curve = characterize(&pack, &fx.concepts, c, &CharacterizeConfig::default(), DEFAULT_LAMBDA, seed, &Sequential)
                    .unwrap();
                (c.clone(), curve.layers.iter().map(|x| x.score).sum::<f64>() / curve.layers.len() as f64)
            })
            .collect();
        scores.sort_by(|a, b| a.1.total_cmp(&b.1));
        if scores[0].0 == task.distractor && scores[1].1 > scores[0].1 {
            hits += 1;
        } else {
            misses.push(seed);
        }
    }
    outcome(hits >= 19, format!("{hits}/20 fixture seeds rank the distractor lowest over the final half, misses {misses:?}"))
}

fn early_signal() -> Outcome {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let y = balanced_labels(1200, 2, seed);
        let pack = planted_pack(&y, 4, 4, 0, seed + 70);
        let t = single_concept(&y);
        let cfg = EvalConfig::default();
        let m = eval_our_method(&pack, &t, "c", &cfg, seed, &Sequential, &NoClock).unwrap();
        let r = eval_input_reduce(&pack, &t, "c", &cfg, seed, &NoClock).unwrap();
        if m.test_accuracy >= r.test_accuracy {
            hits += 1;
        } else {
            misses.push(seed);
        }
    }
    outcome(hits >= 19, format!("{hits}/20 seeds with method >= input reduce, misses {misses:?}"))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the whole pipeline in `dir` with relative paths and collects every
/// command's streams and output tree.
fn cli_pipeline(dir: &Path) -> Vec<(String, (Vec<u8>, Vec<u8>), BTreeMap<PathBuf, Vec<u8>>)> {
    let bin = env!("CARGO_BIN_EXE_layerprobe");
    let run = |args: &[&str]| {
        let o = Command::new(bin).current_dir(dir).args(args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        (o.stdout, o.stderr)
    };
    let mut seen = vec![(
        "synth".to_string(),
        run(&["synth", "--out", "fixture", "--seed", "3", "--samples", "1200"]),
        files_under(&dir.join("fixture")),
    )];
    let commands: &[(&str, &[&str])] = &[
        ("characterize", &[]),
        ("select", &[]),
        ("probe", &[]),
        ("evaluate", &[]),
        ("ablate", &["--lambda-step", "0.1"]),
    ];
    for (cmd, extra) in commands {
        let mut args = vec![*cmd, "--pack", "fixture", "--out", cmd, "--max-samples", "400", "--seed", "1"];
        args.extend_from_slice(extra);
        let streams = run(&args);
        seen.push((cmd.to_string(), streams, files_under(&dir.join(cmd))));
    }
    seen
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = (0..2)
        .map(|i| {
            let d = tmp.path().join(format!("run{i}"));
            fs::create_dir_all(&d).unwrap();
            cli_pipeline(&d)
        })
        .collect();
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b || a.2.is_empty())
        .map(|(a, _)| a.0.as_str())
        .collect();
    outcome(differing.is_empty(), format!("synth, characterize, select, probe, evaluate, ablate run twice; differing: {differing:?}"))
}

fn main() -> ExitCode {
    // Panics inside a criterion are reported on its line.
    panic::set_hook(Box::new(|_| {}));
    let guarded = |f: &dyn Fn() -> Outcome| {
        panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        })
    };

    // Criteria 6 and 8 share one set of fixture evaluations.
    let runs: OnceLock<Option<Vec<FixtureRun>>> = OnceLock::new();
    let from_runs = |f: fn(&[FixtureRun]) -> Outcome| match runs.get_or_init(|| panic::catch_unwind(fixture_runs).ok()) {
        Some(r) => f(r),
        None => outcome(false, "fixture evaluation panicked"),
    };
    // `ACCEPTANCE_ONLY=6,8` runs a subset.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("MI oracle equivalence", Box::new(mi_oracle)),
        ("bounds suite", Box::new(bounds)),
        ("gradient checks", Box::new(gradients)),
        ("ridge algebra", Box::new(ridge)),
        ("planted-layer recovery", Box::new(planted_recovery)),
        ("method vs all-layer average", Box::new(|| from_runs(comparative))),
        ("distractor separation", Box::new(distractor)),
        ("efficiency", Box::new(|| from_runs(efficiency))),
        ("input-reduce weakness", Box::new(early_signal)),
        ("CLI determinism", Box::new(cli_determinism)),
    ];

    let mut unexpected = 0;
    let mut known = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let o = guarded(f.as_ref());
        let tag = match (o.pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => {
                known += 1;
                "FAIL (known)"
            }
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag:<12} {name}: {}", o.detail);
    }
    println!("acceptance: {} passed, {known} known failures, {unexpected} unexpected failures", ran - known - unexpected);
    if unexpected == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
