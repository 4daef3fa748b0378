//! Subcommand execution.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use streamcore::anomaly::{run_anomaly_pipeline, QuantileFilter};
use streamcore::evaluation::{prequential_run, EvalRecord, EvalSummary, PrequentialConfig};
use streamcore::fairness::SensitiveSpec;
use streamcore::ClassId;

use crate::args::{AnomalyArgs, ClassifyArgs, Command, CompareArgs};
use crate::config::{parse_sensitive, DataSpec, ModelSpec};
use crate::output::{csv_bytes, ensure_dir, json_bytes, write_atomic};
use crate::{CliError, THREADS_ENV};

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Classify(a) => classify(a, Task::Classify),
        Command::Fairness(a) => classify(a, Task::Fairness),
        Command::Anomaly(a) => anomaly(a),
        Command::Compare(a) => compare(a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Task {
    Classify,
    Fairness,
    Anomaly,
    Compare,
}

#[derive(Debug, Clone, Serialize)]
struct EvalSpec {
    stride: u64,
    rolling_window: usize,
    positive: ClassId,
    sensitive: Option<SensitiveSpec>,
    timing: bool,
}

#[derive(Debug, Clone, Serialize)]
struct ClassifyConfig {
    task: Task,
    model: ModelSpec,
    data: DataSpec,
    eval: EvalSpec,
}

#[derive(Serialize)]
struct ClassifySummary<'a> {
    config: &'a ClassifyConfig,
    model_name: String,
    completed: bool,
    error: Option<String>,
    summary: &'a EvalSummary,
}

fn classify(a: ClassifyArgs, task: Task) -> Result<(), CliError> {
    let positive = ClassId(a.positive);
    let flagged = a
        .sensitive
        .as_deref()
        .map(|f| parse_sensitive(f, positive))
        .transpose()?;
    let data = DataSpec::resolve(
        &a.data,
        default_source(task),
        10_000,
        flagged.as_ref().map(|s| s.feature.as_str()),
    )?;
    let seed = data.model_seed(a.data.seed);
    let default_model = if task == Task::Fairness { "ht-fair" } else { "ht" };
    let model = ModelSpec::classifier(
        a.model.as_deref().unwrap_or(default_model),
        &a.hidden,
        a.lr,
        seed,
        (a.delta_change, a.delta_warning),
    )?;
    let sensitive = flagged.or_else(|| data.default_sensitive(positive));
    let tracks_fairness = task == Task::Fairness || model.needs_sensitive() || a.sensitive.is_some();
    if tracks_fairness && sensitive.is_none() {
        return Err(CliError::Config(format!(
            "{} with {} needs --sensitive",
            task_name(task),
            model.slug()
        )));
    }
    let eval = EvalSpec {
        stride: a.stride,
        rolling_window: a.window,
        positive,
        sensitive: if tracks_fairness { sensitive.clone() } else { None },
        timing: a.timing,
    };
    let config = ClassifyConfig {
        task,
        model,
        data,
        eval,
    };
    ensure_dir(&a.data.out)?;

    let mut estimator = config.model.build(sensitive.as_ref())?;
    let pcfg = PrequentialConfig {
        stride: config.eval.stride,
        rolling_window: config.eval.rolling_window,
        positive: Some(positive),
        sensitive: config.eval.sensitive.clone(),
        timing: config.eval.timing,
        keep_log: false,
    };
    let run = prequential_run(estimator.as_mut(), config.data.open()?, &pcfg)?;

    let fair = config.eval.sensitive.is_some();
    let mut header = vec!["step", "accuracy", "kappa", "rolling_accuracy", "f1"];
    if fair {
        header.extend(["statistical_parity", "equal_opportunity"]);
    }
    header.extend(["learn_time_ns", "predict_time_ns", "memory_bytes"]);
    let rows: Vec<Vec<String>> = run.records.iter().map(|r| eval_row(r, fair)).collect();
    let stem = config.model.slug();
    write_atomic(
        &a.data.out.join(format!("{stem}.csv")),
        &csv_bytes(&config, &header, &rows)?,
    )?;
    let summary = ClassifySummary {
        config: &config,
        model_name: estimator.name().to_string(),
        completed: run.error.is_none(),
        error: run.error.as_ref().map(ToString::to_string),
        summary: &run.summary,
    };
    write_atomic(&a.data.out.join(format!("{stem}.json")), &json_bytes(&summary)?)?;
    match run.error {
        Some(e) => Err(CliError::Incomplete {
            completed: run.summary.steps,
            message: e.to_string(),
        }),
        None => Ok(()),
    }
}

fn eval_row(r: &EvalRecord, fair: bool) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    let mut row = vec![
        r.step.to_string(),
        r.accuracy.to_string(),
        r.kappa.to_string(),
        r.rolling_accuracy.to_string(),
        opt(r.f1),
    ];
    if fair {
        row.push(opt(r.statistical_parity));
        row.push(opt(r.equal_opportunity));
    }
    row.extend([
        r.learn_time_ns.to_string(),
        r.predict_time_ns.to_string(),
        r.memory_bytes.to_string(),
    ]);
    row
}

fn default_source(task: Task) -> &'static str {
    match task {
        Task::Classify | Task::Compare => "synth-abrupt",
        Task::Fairness => "synth-fair",
        Task::Anomaly => "synth-fraud",
    }
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Classify => "classify",
        Task::Fairness => "fairness",
        Task::Anomaly => "anomaly",
        Task::Compare => "compare",
    }
}

#[derive(Debug, Clone, Serialize)]
struct AnomalyConfig {
    task: Task,
    model: ModelSpec,
    data: DataSpec,
}

#[derive(Serialize)]
struct AnomalySummary<'a> {
    config: &'a AnomalyConfig,
    completed: bool,
    error: Option<String>,
    steps: usize,
    anomalies: u64,
    flagged: u64,
    f1: f64,
    precision: f64,
    recall: f64,
}

#[derive(Serialize)]
struct AnomalyComparison {
    task: Task,
    data: DataSpec,
    runs: Vec<ComparisonEntry>,
}

#[derive(Serialize)]
struct ComparisonEntry {
    model: ModelSpec,
    completed: bool,
    f1: f64,
    precision: f64,
    recall: f64,
}

fn anomaly(a: AnomalyArgs) -> Result<(), CliError> {
    let data = DataSpec::resolve(&a.data, default_source(Task::Anomaly), 20_000, None)?;
    let seed = data.model_seed(a.data.seed);
    let models = a
        .model
        .iter()
        .map(|m| ModelSpec::detector(m, a.latent, a.lr, a.q, a.window, seed))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|p| p.slug() == m.slug()) {
            return Err(CliError::Config(format!("detector {} listed twice", m.slug())));
        }
    }
    ensure_dir(&a.data.out)?;

    let mut entries = Vec::new();
    let mut failure = None;
    for model in models {
        let (q, warmup) = model.filter().expect("detector specs carry a filter");
        let mut filter = QuantileFilter::new(q, warmup)?;
        let mut detector = model.build(None)?;
        let run = run_anomaly_pipeline(detector.as_mut(), &mut filter, data.open()?);
        let config = AnomalyConfig {
            task: Task::Anomaly,
            model,
            data: data.clone(),
        };
        let rows: Vec<Vec<String>> = run
            .records
            .iter()
            .map(|r| {
                vec![
                    r.step.to_string(),
                    r.score.to_string(),
                    r.threshold.to_string(),
                    u8::from(r.verdict).to_string(),
                    u8::from(r.truth).to_string(),
                ]
            })
            .collect();
        let stem = config.model.slug();
        write_atomic(
            &a.data.out.join(format!("{stem}.csv")),
            &csv_bytes(&config, &["step", "score", "threshold", "verdict", "truth"], &rows)?,
        )?;
        let summary = AnomalySummary {
            config: &config,
            completed: run.error.is_none(),
            error: run.error.as_ref().map(ToString::to_string),
            steps: run.records.len(),
            anomalies: run.records.iter().filter(|r| r.truth).count() as u64,
            flagged: run.records.iter().filter(|r| r.verdict).count() as u64,
            f1: run.f1,
            precision: run.precision,
            recall: run.recall,
        };
        write_atomic(&a.data.out.join(format!("{stem}.json")), &json_bytes(&summary)?)?;
        if let (Some(e), None) = (&run.error, &failure) {
            failure = Some(CliError::Incomplete {
                completed: run.records.len() as u64,
                message: e.to_string(),
            });
        }
        entries.push(ComparisonEntry {
            model: config.model,
            completed: run.error.is_none(),
            f1: run.f1,
            precision: run.precision,
            recall: run.recall,
        });
    }
    if entries.len() > 1 {
        let cmp = AnomalyComparison {
            task: Task::Anomaly,
            data,
            runs: entries,
        };
        write_atomic(&a.data.out.join("comparison.json"), &json_bytes(&cmp)?)?;
    }
    failure.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, Serialize)]
struct CompareConfig {
    task: Task,
    data: DataSpec,
    layers: Vec<usize>,
    widths: Vec<usize>,
    learning_rate: f64,
    seed: u64,
    eval: EvalSpec,
}

#[derive(Debug, Clone, Serialize)]
struct CompareRow {
    architecture: String,
    hidden_layer_sizes: Vec<usize>,
    completed: bool,
    error: Option<String>,
    steps: u64,
    accuracy: f64,
    mean_rolling_accuracy: f64,
    memory_bytes: u64,
    /// Total wall-clock milliseconds; present with `--timing`.
    runtime_ms: Option<f64>,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    config: &'a CompareConfig,
    runs: Vec<CompareRow>,
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    let data = DataSpec::resolve(&a.data, default_source(Task::Compare), 10_000, None)?;
    let seed = data.model_seed(a.data.seed);
    let grid: Vec<Vec<usize>> = a
        .layers
        .iter()
        .flat_map(|&l| a.widths.iter().map(move |&w| vec![w; l]))
        .collect();
    if grid.len() < 2 {
        return Err(CliError::Config("compare needs at least two architectures".into()));
    }
    let config = CompareConfig {
        task: Task::Compare,
        data,
        layers: a.layers.clone(),
        widths: a.widths.clone(),
        learning_rate: a.lr,
        seed,
        eval: EvalSpec {
            stride: a.stride,
            rolling_window: a.window,
            positive: ClassId(a.positive),
            sensitive: None,
            timing: a.timing,
        },
    };
    let specs = grid
        .iter()
        .map(|h| ModelSpec::classifier("mlp", h, a.lr, seed, (0.002, 0.01)))
        .collect::<Result<Vec<_>, _>>()?;
    ensure_dir(&a.data.out)?;

    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.min(specs.len()))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<CompareRow> = pool.install(|| specs.par_iter().map(|spec| compare_one(spec, &config)).collect());
    let failed = runs.iter().filter(|r| !r.completed).count();
    let total = runs.len();
    let out = CompareOutput { config: &config, runs };
    write_atomic(&a.data.out.join("compare.json"), &json_bytes(&out)?)?;
    if failed > 0 {
        return Err(CliError::RunsFailed { failed, total });
    }
    Ok(())
}

fn compare_one(spec: &ModelSpec, config: &CompareConfig) -> CompareRow {
    let hidden = match spec {
        ModelSpec::Mlp { hidden_layer_sizes, .. } => hidden_layer_sizes.clone(),
        _ => Vec::new(),
    };
    let architecture = format!(
        "MLP[{}]",
        hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    );
    let failed = |e: CliError| CompareRow {
        architecture: architecture.clone(),
        hidden_layer_sizes: hidden.clone(),
        completed: false,
        error: Some(e.to_string()),
        steps: 0,
        accuracy: 0.0,
        mean_rolling_accuracy: 0.0,
        memory_bytes: 0,
        runtime_ms: None,
    };
    let pcfg = PrequentialConfig {
        stride: config.eval.stride,
        rolling_window: config.eval.rolling_window,
        positive: Some(config.eval.positive),
        sensitive: None,
        timing: false,
        keep_log: false,
    };
    let started = Instant::now();
    let outcome = (|| -> Result<_, CliError> {
        let mut estimator = spec.build(None)?;
        let run = prequential_run(estimator.as_mut(), config.data.open()?, &pcfg)?;
        Ok((run, estimator.memory_bytes()))
    })();
    let elapsed = started.elapsed();
    match outcome {
        Ok((run, memory)) => CompareRow {
            architecture: architecture.clone(),
            hidden_layer_sizes: hidden.clone(),
            completed: run.error.is_none(),
            error: run.error.as_ref().map(ToString::to_string),
            steps: run.summary.steps,
            accuracy: run.summary.accuracy,
            mean_rolling_accuracy: run.summary.mean_rolling_accuracy,
            memory_bytes: memory as u64,
            runtime_ms: config.eval.timing.then_some(elapsed.as_secs_f64() * 1e3),
        },
        Err(e) => failed(e),
    }
}
