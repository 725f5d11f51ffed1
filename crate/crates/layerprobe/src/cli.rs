//! `layerprobe` subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use layerprobe_core::evaluation::{ablate_lambda, evaluate, ConceptSplit, EvalConfig};
use layerprobe_core::exec::{Clock, Executor, NoClock};
use layerprobe_core::evaluation::layer_seed;
use layerprobe_core::mi::MiEstimatorConfig;
use layerprobe_core::probes::zoo::run_zoo;
use layerprobe_core::selection::{characterize_layers, select_layer, CharacterizationCurve, DEFAULT_LAMBDA};
use layerprobe_core::synth::{build_fixture, FixtureConfig, SyntheticTask};
use layerprobe_core::{ActivationPack, ConceptTable, SPEC_VERSION};
use serde::Serialize;

use crate::curves::{ablation_records, ablation_summary, ablation_svg, curve_svg, write_curve_csv};
use crate::error::{CliError, CliResult};
use crate::pack::{load_pack_and_concepts, write_json};
use crate::parallel::{RayonExecutor, WallClock};
use crate::report::{write_csv, write_report};

#[derive(Debug, Parser)]
#[command(name = "layerprobe", version, about = "Choose which layer of a network to probe for a concept")]
pub struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fixture: activation pack, concepts.csv and fixture.json
    Synth(SynthArgs),
    /// Per-layer information (U), regularity (R) and score curves for each concept
    Characterize(RunArgs),
    /// Report the selected layer for each concept
    Select(RunArgs),
    /// Train the probe zoo on the selected layer (or --layer) and export the probes
    Probe(ProbeArgs),
    /// Compare the selected layer against all-layer, oracle and input-reduce baselines
    Evaluate(EvaluateArgs),
    /// Sweep lambda and probe the layer selected at each value
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the fixture
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples in the exported activation pack
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    #[arg(long, default_value = "refnet")]
    pub model_name: String,
}

#[derive(Debug, Args)]
pub struct MiArgs {
    /// Number of bandwidths in the MI ensemble
    #[arg(long)]
    pub mi_ensemble_size: Option<usize>,
    /// Random projection dimension used by the MI estimator
    #[arg(long)]
    pub mi_projection_dim: Option<usize>,
    /// Hash buckets per sample in the MI estimator
    #[arg(long)]
    pub mi_bucket_factor: Option<f64>,
    /// Quantization smoothness multiplier of the MI estimator
    #[arg(long)]
    pub mi_gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Activation pack directory
    #[arg(long)]
    pub pack: PathBuf,
    /// Concept table [default: <pack>/concepts.csv]
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated concept names [default: every concept]
    #[arg(long, value_delimiter = ',')]
    pub concepts: Vec<String>,
    /// Weight of information against regularity in the layer score
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Size cap of the balanced characterization/training set
    #[arg(long, default_value_t = 1000)]
    pub max_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated output formats
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Svg])]
    pub format: Vec<Format>,
    #[command(flatten)]
    pub mi: MiArgs,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Probe this layer instead of the selected one
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Measure wall-clock runtimes and write runtimes.csv (not reproducible)
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Spacing of the lambda grid over [0, 1]
    #[arg(long, default_value_t = 0.02)]
    pub lambda_step: f64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr as one line.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.trim_start_matches("error:").trim();
            eprintln!("{}", CliError::Usage(format!("{msg} (see --help)")).one_line());
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.one_line());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let exec = RayonExecutor::new(cli.jobs.unwrap_or_else(RayonExecutor::available))?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Characterize(a) => cmd_characterize(&a, &exec),
        Command::Select(a) => cmd_select(&a, &exec),
        Command::Probe(a) => cmd_probe(&a, &exec),
        Command::Evaluate(a) => cmd_evaluate(&a, &exec),
        Command::Ablate(a) => cmd_ablate(&a, &exec),
    }
}

/// Validated inputs shared by every pack-consuming command.
struct Run {
    pack: ActivationPack,
    table: ConceptTable,
    concepts: Vec<String>,
    cfg: EvalConfig,
    seed: u64,
    out: PathBuf,
    formats: Vec<Format>,
}

impl Run {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn prepare(a: &RunArgs) -> CliResult<Run> {
    if !(0.0..=1.0).contains(&a.lambda) {
        return Err(CliError::Usage(format!("--lambda must lie in [0, 1], got {}", a.lambda)));
    }
    if a.max_samples < 20 {
        return Err(CliError::Usage(format!("--max-samples must be at least 20, got {}", a.max_samples)));
    }
    let mut mi = MiEstimatorConfig::default();
    if let Some(t) = a.mi.mi_ensemble_size {
        mi = mi.with_ensemble_size(t);
    }
    if let Some(p) = a.mi.mi_projection_dim {
        mi.projection_dim = p;
    }
    if let Some(f) = a.mi.mi_bucket_factor {
        mi.hash_bucket_factor = f;
    }
    if let Some(g) = a.mi.mi_gamma {
        mi.gamma = g;
    }
    let mut cfg = EvalConfig { lambda: a.lambda, ..EvalConfig::default() };
    cfg.characterize.mi = mi;
    cfg.characterize.max_samples = a.max_samples;
    cfg.validate()?;

    let (pack, table) = load_pack_and_concepts(&a.pack, a.labels.as_deref())?;
    let concepts = if a.concepts.is_empty() { table.concept_names().to_vec() } else { a.concepts.clone() };
    for c in &concepts {
        table.concept_index(c)?;
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut formats = a.format.clone();
    formats.dedup();
    Ok(Run { pack, table, concepts, cfg, seed: a.seed, out: a.out.clone(), formats })
}

/// File-system friendly form of a concept name.
pub fn file_stem(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() { "concept".into() } else { s }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    if a.samples < 100 {
        return Err(CliError::Usage("--samples must be at least 100".into()));
    }
    let task = SyntheticTask::standard(a.seed);
    let cfg = FixtureConfig { n_probe: a.samples, ..FixtureConfig::default() };
    let fx = build_fixture(&task, &cfg, a.seed, &a.model_name)?;
    crate::fixture::write_fixture(&fx, a.seed, &a.out)?;
    let gate = fx.gates.last().expect("accepted fixture has a gate report");
    println!(
        "fixture {}: {} layers, {} samples, {} concepts, task accuracy {:.4}, attempts {}",
        a.out.display(),
        fx.pack.num_layers(),
        fx.pack.num_samples(),
        fx.concepts.concept_names().len(),
        gate.test_accuracy,
        fx.gates.len()
    );
    Ok(())
}

fn curves<E: Executor>(r: &Run, exec: &E) -> CliResult<Vec<CharacterizationCurve>> {
    r.concepts
        .iter()
        .map(|c| {
            let (_, stats) = characterize_layers(&r.pack, &r.table, c, &r.cfg.characterize, r.seed, exec)?;
            Ok(CharacterizationCurve::from_stats(c, &stats, r.cfg.lambda)?)
        })
        .collect()
}

#[derive(Serialize)]
struct CurveDoc<'a> {
    concept: &'a str,
    selected_layer: usize,
    layers: Vec<crate::curves::CurveRecord>,
}

#[derive(Serialize)]
struct CharacterizationDoc<'a> {
    spec_version: &'a str,
    model_name: &'a str,
    lambda: f64,
    seed: u64,
    max_samples: usize,
    curves: Vec<CurveDoc<'a>>,
}

fn cmd_characterize<E: Executor>(a: &RunArgs, exec: &E) -> CliResult<()> {
    let r = prepare(a)?;
    let curves = curves(&r, exec)?;
    let dir = r.out.join("curves");
    if r.wants(Format::Csv) || r.wants(Format::Svg) {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    let mut docs = Vec::new();
    for curve in &curves {
        let stem = file_stem(&curve.concept_name);
        if r.wants(Format::Csv) {
            write_curve_csv(curve, &dir.join(format!("{stem}.csv")))?;
        }
        if r.wants(Format::Svg) {
            write_text(&dir.join(format!("{stem}.svg")), &curve_svg(curve))?;
        }
        let selected = select_layer(curve)?;
        println!("{}\tselected layer {selected}", curve.concept_name);
        docs.push(CurveDoc {
            concept: &curve.concept_name,
            selected_layer: selected,
            layers: crate::curves::curve_records(curve),
        });
    }
    if r.wants(Format::Json) {
        let doc = CharacterizationDoc {
            spec_version: SPEC_VERSION,
            model_name: &r.pack.model_name,
            lambda: r.cfg.lambda,
            seed: r.seed,
            max_samples: r.cfg.characterize.max_samples,
            curves: docs,
        };
        write_json(&r.out.join("characterization.json"), &doc)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct SelectionRecord {
    pub concept: String,
    pub selected_layer: usize,
    pub layer_name: String,
    pub u: f64,
    pub r: f64,
    pub score: f64,
}

#[derive(Serialize)]
struct SelectionDoc<'a> {
    spec_version: &'a str,
    model_name: &'a str,
    lambda: f64,
    seed: u64,
    selections: &'a [SelectionRecord],
}

fn cmd_select<E: Executor>(a: &RunArgs, exec: &E) -> CliResult<()> {
    let r = prepare(a)?;
    let mut records = Vec::new();
    for curve in curves(&r, exec)? {
        let l = select_layer(&curve)?;
        let layer = &curve.layers[l];
        println!("{}\t{}\t{}", curve.concept_name, l, layer.layer_name);
        records.push(SelectionRecord {
            concept: curve.concept_name.clone(),
            selected_layer: l,
            layer_name: layer.layer_name.clone(),
            u: layer.u,
            r: layer.r,
            score: layer.score,
        });
    }
    if r.wants(Format::Json) {
        let doc = SelectionDoc {
            spec_version: SPEC_VERSION,
            model_name: &r.pack.model_name,
            lambda: r.cfg.lambda,
            seed: r.seed,
            selections: &records,
        };
        write_json(&r.out.join("selection.json"), &doc)?;
    }
    if r.wants(Format::Csv) {
        write_csv(&r.out.join("selection.csv"), &records)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ProbeRecord {
    pub concept: String,
    pub layer: usize,
    pub family: String,
    pub val_acc: f64,
    pub test_acc: f64,
    pub best: bool,
    pub file: String,
}

#[derive(Serialize)]
struct ProbeDoc<'a> {
    spec_version: &'a str,
    model_name: &'a str,
    seed: u64,
    probes: &'a [ProbeRecord],
    warnings: &'a [String],
}

fn cmd_probe<E: Executor>(a: &ProbeArgs, exec: &E) -> CliResult<()> {
    let r = prepare(&a.run)?;
    if let Some(l) = a.layer {
        if l >= r.pack.num_layers() {
            return Err(CliError::Usage(format!("--layer {l} out of range; the pack has {} layers", r.pack.num_layers())));
        }
    }
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for c in &r.concepts {
        let layer = match a.layer {
            Some(l) => l,
            None => {
                let (_, stats) = characterize_layers(&r.pack, &r.table, c, &r.cfg.characterize, r.seed, exec)?;
                select_layer(&CharacterizationCurve::from_stats(c, &stats, r.cfg.lambda)?)?
            }
        };
        let split = ConceptSplit::new(&r.table, c, r.cfg.characterize.max_samples, r.seed)?;
        let data = split.layer_data(&r.pack, layer)?;
        let zoo = run_zoo(&data.train, &data.val, &data.test, layer_seed(r.seed, layer), &r.cfg.zoo, &NoClock)?;
        warnings.extend(zoo.warnings.iter().map(|w| format!("{c}: {w}")));
        let dir = r.out.join("probes").join(file_stem(c));
        for (i, p) in zoo.probes.iter().enumerate() {
            let stem = p.family().name();
            crate::probe_io::save_probe(p, &dir, stem)?;
            records.push(ProbeRecord {
                concept: c.clone(),
                layer,
                family: stem.into(),
                val_acc: p.val_accuracy,
                test_acc: p.test_accuracy.unwrap_or(0.0),
                best: i == zoo.best,
                file: format!("probes/{}/{stem}.json", file_stem(c)),
            });
        }
        let best = zoo.best_probe();
        println!(
            "{c}\tlayer {layer}\t{}\tval {:.4}\ttest {:.4}",
            best.family(),
            best.val_accuracy,
            best.test_accuracy.unwrap_or(0.0)
        );
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if r.wants(Format::Csv) {
        write_csv(&r.out.join("probe_summary.csv"), &records)?;
    }
    if r.wants(Format::Json) {
        let doc = ProbeDoc {
            spec_version: SPEC_VERSION,
            model_name: &r.pack.model_name,
            seed: r.seed,
            probes: &records,
            warnings: &warnings,
        };
        write_json(&r.out.join("probe_summary.json"), &doc)?;
    }
    Ok(())
}

fn cmd_evaluate<E: Executor>(a: &EvaluateArgs, exec: &E) -> CliResult<()> {
    let r = prepare(&a.run)?;
    let (report, warnings) = if a.timings {
        evaluate_with(&r, exec, &WallClock::new())?
    } else {
        evaluate_with(&r, exec, &NoClock)?
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_report(&report, &r.out, r.wants(Format::Csv), r.wants(Format::Json), a.timings)?;
    let avg = &report.average;
    println!(
        "{}: method {:.4}  layers avg {:.4}  oracle {:.4}  % oracle {:.2}  best validation {:.4}  input reduce {:.4}",
        report.model_name,
        avg.method_accuracy,
        avg.layers_avg_accuracy,
        avg.oracle_accuracy,
        avg.pct_oracle,
        avg.best_validation_accuracy,
        avg.input_reduce_accuracy
    );
    if a.timings {
        let t = &avg.runtimes;
        eprintln!(
            "runtime (s, mean per concept): method {:.3}  best validation {:.3}  input reduce {:.3}",
            t.method_seconds, t.best_validation_seconds, t.input_reduce_seconds
        );
    }
    Ok(())
}

fn evaluate_with<E: Executor, C: Clock>(
    r: &Run,
    exec: &E,
    clock: &C,
) -> CliResult<(layerprobe_core::evaluation::EvaluationReport, Vec<String>)> {
    Ok(evaluate(&r.pack, &r.table, &r.concepts, &r.cfg, r.seed, exec, clock)?)
}

/// `0, step, 2·step, …, 1`, each value rounded to twelve decimals.
pub fn lambda_grid(step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CliError::Usage(format!("--lambda-step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| ((i as f64 * step) * 1e12).round() / 1e12).collect();
    if grid.last().is_some_and(|&l| l < 1.0 - 1e-12) {
        grid.push(1.0);
    }
    Ok(grid)
}

#[derive(Serialize)]
struct AblationDoc<'a> {
    spec_version: &'a str,
    model_name: &'a str,
    seed: u64,
    summary: Vec<crate::curves::AblationSummary>,
    concepts: &'a [layerprobe_core::evaluation::ConceptAblation],
}

fn cmd_ablate<E: Executor>(a: &AblateArgs, exec: &E) -> CliResult<()> {
    let r = prepare(&a.run)?;
    let grid = lambda_grid(a.lambda_step)?;
    let runs = r
        .concepts
        .iter()
        .map(|c| Ok(ablate_lambda(&r.pack, &r.table, c, &r.cfg, &grid, r.seed, exec, &NoClock)?))
        .collect::<CliResult<Vec<_>>>()?;
    let summary = ablation_summary(&runs);
    if r.wants(Format::Csv) {
        write_csv(&r.out.join("ablation.csv"), &ablation_records(&runs))?;
        write_csv(&r.out.join("ablation_summary.csv"), &summary)?;
    }
    if r.wants(Format::Svg) {
        write_text(&r.out.join("ablation.svg"), &ablation_svg(&runs))?;
    }
    let best = summary.iter().fold(None::<&crate::curves::AblationSummary>, |b, p| match b {
        Some(q) if q.mean_test_acc >= p.mean_test_acc => Some(q),
        _ => Some(p),
    });
    let mean_distinct = runs.iter().map(|a| a.distinct_layers as f64).sum::<f64>() / runs.len().max(1) as f64;
    if let Some(b) = best {
        println!(
            "best lambda {:.2} (mean accuracy {:.4}); {:.2} distinct layers per concept",
            b.lambda, b.mean_test_acc, mean_distinct
        );
    }
    if r.wants(Format::Json) {
        let doc = AblationDoc { spec_version: SPEC_VERSION, model_name: &r.pack.model_name, seed: r.seed, summary, concepts: &runs };
        write_json(&r.out.join("ablation.json"), &doc)?;
    }
    Ok(())
}
