//! The six subcommands: forward, inverse, synth, gradcheck, compare, sweep.
//!
//! Every run writes into `<out-root>/<run-name>/`; files go through a
//! temp-then-rename path, so failed runs leave nothing under final names.
//! Exit policy: 0 success, 2 invalid config or data, 3 training divergence,
//! 1 for runtime failures such as unwritable outputs.

use crate::config::{InverseSection, RunConfig, SynthSection};
use pinn_rc_core::circuits::{analytical_current, CircuitCase};
use pinn_rc_core::gradcheck::{self, GradcheckOptions};
use pinn_rc_core::inverse::{
    generate_synthetic, train_inverse, Dataset, RecoveredParams, TrainableParams,
};
use pinn_rc_core::net::save_checkpoint;
use pinn_rc_core::report::{
    compare_formulations, domain_sweep, write_history_csv, write_json_atomic,
    write_prediction_csv, ErrorMetrics, TrainedArm, Verdict,
};
use pinn_rc_core::training::{
    predict, sample_collocation, train_forward, FitReport, LossBreakdown, TrainConfig,
    TrainError,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Invalid config, schema violation, or bad input data. Exit 2.
    Config(String),
    /// Training produced a non-finite loss. Exit 3.
    Divergence(String),
    /// Runtime failure (typically io). Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Divergence(m) | CliError::Runtime(m) => m,
        }
    }
}

fn map_train(err: TrainError) -> CliError {
    match err {
        TrainError::Diverged { .. } => CliError::Divergence(err.to_string()),
        _ => CliError::Config(err.to_string()),
    }
}

fn io_err(context: &str, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{context}: {err}"))
}

pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(&args.config).map_err(CliError::Config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run_dir(command: &str, config: &RunConfig, args: &RunArgs) -> PathBuf {
    let root = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("PINN_RC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let name = config
        .run_name
        .clone()
        .unwrap_or_else(|| format!("{command}-{}", unix_seconds()));
    root.join(name)
}

const HISTORY_FILE: &str = "history.csv";
const PREDICTION_FILE: &str = "prediction.csv";
const SUMMARY_FILE: &str = "summary.json";
const CHECKPOINT_FILE: &str = "model.bin";
const DATASET_FILE: &str = "dataset.csv";

#[derive(Serialize)]
struct OutputFiles {
    history: &'static str,
    prediction: &'static str,
    checkpoint: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
}

/// Prediction table + metrics for a trained model, plus the files written
/// into `dir`.
fn write_model_outputs(
    dir: &Path,
    case: &CircuitCase,
    train: &TrainConfig,
    report: &FitReport,
    with_checkpoint: bool,
) -> Result<(ErrorMetrics, bool), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err("creating output directory", e))?;
    let grid =
        sample_collocation(train.domain, train.resolved_n_test()).map_err(map_train)?;
    let pred = predict(
        &report.final_model,
        case,
        train.formulation,
        train.domain,
        &grid,
    );
    let truth: Vec<f64> = grid
        .iter()
        .map(|&t| analytical_current(case, t))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let metrics = ErrorMetrics::compute(&pred.currents, &truth)
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_history_csv(&dir.join(HISTORY_FILE), &report.history)
        .map_err(|e| io_err("writing history.csv", e))?;
    write_prediction_csv(&dir.join(PREDICTION_FILE), &grid, &pred.currents, &truth)
        .map_err(|e| io_err("writing prediction.csv", e))?;
    if with_checkpoint {
        save_checkpoint(&report.final_model, &dir.join(CHECKPOINT_FILE))
            .map_err(|e| CliError::Runtime(format!("writing checkpoint: {e}")))?;
    }
    Ok((metrics, pred.extrapolated))
}

#[derive(Serialize)]
struct ForwardSummary<'a> {
    command: &'static str,
    case: &'a CircuitCase,
    train: &'a TrainConfig,
    final_loss: LossBreakdown,
    l2_relative_error: f64,
    error_metrics: ErrorMetrics,
    extrapolated: bool,
    files: OutputFiles,
    wall_time_seconds: f64,
}

pub fn cmd_forward(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let report = train_forward(&config.case, &config.train).map_err(map_train)?;
    let dir = run_dir("forward", &config, args);
    let (metrics, extrapolated) =
        write_model_outputs(&dir, &config.case, &config.train, &report, true)?;
    let summary = ForwardSummary {
        command: "forward",
        case: &config.case,
        train: &config.train,
        final_loss: report.history.last().expect("non-empty history").loss,
        l2_relative_error: report.l2_relative_error,
        error_metrics: metrics,
        extrapolated,
        files: OutputFiles {
            history: HISTORY_FILE,
            prediction: PREDICTION_FILE,
            checkpoint: Some(CHECKPOINT_FILE),
            dataset: None,
        },
        wall_time_seconds: report.wall_time,
    };
    write_json_atomic(&dir.join(SUMMARY_FILE), &summary)
        .map_err(|e| CliError::Runtime(format!("writing summary.json: {e}")))?;
    println!(
        "forward {}: l2_relative_error {:.6e}, outputs in {}",
        config.case.label,
        report.l2_relative_error,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InverseSummary<'a> {
    command: &'static str,
    case: &'a CircuitCase,
    train: &'a TrainConfig,
    dataset: DatasetInfo,
    recovered: &'a RecoveredParams,
    final_loss: LossBreakdown,
    l2_relative_error: f64,
    error_metrics: ErrorMetrics,
    files: OutputFiles,
    wall_time_seconds: f64,
}

#[derive(Serialize)]
struct DatasetInfo {
    provenance: &'static str,
    n_points: usize,
    noise_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

fn load_inverse_dataset(
    section: &InverseSection,
    config: &RunConfig,
    config_path: &Path,
) -> Result<(Dataset, Option<String>), CliError> {
    if let Some(rel) = &section.dataset {
        let path = if rel.is_absolute() {
            rel.clone()
        } else {
            config_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(rel)
        };
        let file = std::fs::File::open(&path)
            .map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))?;
        let dataset = Dataset::read_csv(std::io::BufReader::new(file))
            .map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))?;
        Ok((dataset, Some(path.display().to_string())))
    } else if let Some(synth) = &section.synthetic {
        let times = sample_collocation(config.train.domain, synth.n_points).map_err(map_train)?;
        let dataset = generate_synthetic(&config.case, &times, synth.noise_sigma, synth.seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((dataset, None))
    } else {
        Err(CliError::Config(
            "inverse section needs either 'dataset' or 'synthetic'".into(),
        ))
    }
}

fn build_init_params(
    section: &InverseSection,
    case: &CircuitCase,
) -> Result<TrainableParams, CliError> {
    let mut params = match &section.init_params {
        Some(init) => {
            let branches: Vec<(f64, f64)> = init.branches.iter().map(|b| (b.r, b.c)).collect();
            TrainableParams::from_values(init.r0, &branches)
                .map_err(|e| CliError::Config(format!("inverse.init_params: {e}")))?
        }
        None => TrainableParams::scaled_guess(case, 0.5),
    };
    if let Some(mask) = &section.mask {
        let mut free_r = Vec::new();
        if case.r0.is_some() {
            free_r.push(mask.r0);
        }
        free_r.extend(mask.branches.iter().map(|b| b.r));
        let free_c: Vec<bool> = mask.branches.iter().map(|b| b.c).collect();
        params = params
            .with_mask(free_r, free_c)
            .map_err(|e| CliError::Config(format!("inverse.mask: {e}")))?;
    }
    params
        .matches_case(case)
        .map_err(|e| CliError::Config(format!("inverse.init_params: {e}")))?;
    Ok(params)
}

pub fn cmd_inverse(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let section = config
        .inverse
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing the 'inverse' section".into()))?;
    let (dataset, source) = load_inverse_dataset(section, &config, &args.config)?;
    dataset
        .check_domain(config.train.domain)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let init = build_init_params(section, &config.case)?;
    let report = train_inverse(&config.case, &dataset, &config.train, &init).map_err(map_train)?;
    let dir = run_dir("inverse", &config, args);
    let fit_view = FitReport {
        history: report.history.clone(),
        final_model: report.final_model.clone(),
        l2_relative_error: report.l2_relative_error,
        wall_time: report.wall_time,
    };
    let (metrics, _) = write_model_outputs(&dir, &config.case, &config.train, &fit_view, true)?;
    let mut dataset_file = None;
    if source.is_none() {
        let mut csv = Vec::new();
        dataset
            .write_csv(&mut csv)
            .map_err(|e| io_err("rendering dataset.csv", e))?;
        pinn_rc_core::report::write_atomic(&dir.join(DATASET_FILE), &csv)
            .map_err(|e| io_err("writing dataset.csv", e))?;
        dataset_file = Some(DATASET_FILE.to_string());
    }
    let summary = InverseSummary {
        command: "inverse",
        case: &config.case,
        train: &config.train,
        dataset: DatasetInfo {
            provenance: match dataset.provenance {
                pinn_rc_core::inverse::Provenance::Synthetic => "synthetic",
                pinn_rc_core::inverse::Provenance::Measured => "measured",
            },
            n_points: dataset.len(),
            noise_sigma: dataset.noise_sigma,
            source,
        },
        recovered: &report.recovered,
        final_loss: report.history.last().expect("non-empty history").loss,
        l2_relative_error: report.l2_relative_error,
        error_metrics: metrics,
        files: OutputFiles {
            history: HISTORY_FILE,
            prediction: PREDICTION_FILE,
            checkpoint: Some(CHECKPOINT_FILE),
            dataset: dataset_file,
        },
        wall_time_seconds: report.wall_time,
    };
    write_json_atomic(&dir.join(SUMMARY_FILE), &summary)
        .map_err(|e| CliError::Runtime(format!("writing summary.json: {e}")))?;
    for (j, b) in report.recovered.branches.iter().enumerate() {
        println!(
            "inverse {}: R{} = {:.6} (rel err {:.3e}), C{} = {:.6} (rel err {:.3e})",
            config.case.label,
            j + 1,
            b.r.estimate,
            b.r.relative_error,
            j + 1,
            b.c.estimate,
            b.c.relative_error
        );
    }
    if let Some(r0) = &report.recovered.r0 {
        println!(
            "inverse {}: R0 = {:.6} (rel err {:.3e})",
            config.case.label, r0.estimate, r0.relative_error
        );
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

pub fn cmd_synth(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let section: &SynthSection = config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing the 'synth' section".into()))?;
    let mut seed = section.seed;
    if let Some(s) = args.seed {
        seed = s;
    }
    let times = sample_collocation(config.train.domain, section.n_points).map_err(map_train)?;
    let dataset = generate_synthetic(&config.case, &times, section.noise_sigma, seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let path = match &section.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => run_dir("synth", &config, args).join(p),
        None => run_dir("synth", &config, args).join(DATASET_FILE),
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err("creating output directory", e))?;
    }
    let mut csv = Vec::new();
    dataset
        .write_csv(&mut csv)
        .map_err(|e| io_err("rendering dataset csv", e))?;
    pinn_rc_core::report::write_atomic(&path, &csv)
        .map_err(|e| io_err("writing dataset csv", e))?;
    println!(
        "synth {}: {} points (noise_sigma {}) -> {}",
        config.case.label,
        dataset.len(),
        section.noise_sigma,
        path.display()
    );
    Ok(())
}

pub fn cmd_gradcheck(seed: Option<u64>) -> Result<(), CliError> {
    let fault_injection = std::env::var("PINN_RC_GRADCHECK_FAULT")
        .ok()
        .map(|v| v.parse::<f64>().unwrap_or(1e-2));
    let options = GradcheckOptions {
        seed: seed.unwrap_or(0),
        fault_injection,
    };
    let started = std::time::Instant::now();
    let report = gradcheck::run(&options).map_err(map_train)?;
    print!("{}", report.render());
    println!(
        "{} comparisons in {:.2}s",
        report.comparisons,
        started.elapsed().as_secs_f64()
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Runtime("gradient check failed".into()))
    }
}

#[derive(Serialize)]
struct ArmSummary<'a> {
    command: &'static str,
    case: &'a CircuitCase,
    formulation: String,
    final_loss: LossBreakdown,
    l2_relative_error: f64,
    error_metrics: ErrorMetrics,
    files: OutputFiles,
    wall_time_seconds: f64,
}

#[derive(Serialize)]
#[serde(untagged)]
enum ArmOutcome {
    Ok {
        l2_relative_error: f64,
        error_metrics: ErrorMetrics,
        dir: String,
    },
    Failed {
        error: String,
    },
}

fn write_arm(
    dir: &Path,
    case: &CircuitCase,
    train: &TrainConfig,
    arm: &TrainedArm,
    label: &str,
) -> Result<ArmOutcome, CliError> {
    let (metrics, _) = write_model_outputs(dir, case, train, &arm.report, false)?;
    let summary = ArmSummary {
        command: "compare-arm",
        case,
        formulation: train.formulation.to_string(),
        final_loss: arm.report.history.last().expect("non-empty history").loss,
        l2_relative_error: arm.report.l2_relative_error,
        error_metrics: metrics,
        files: OutputFiles {
            history: HISTORY_FILE,
            prediction: PREDICTION_FILE,
            checkpoint: None,
            dataset: None,
        },
        wall_time_seconds: arm.report.wall_time,
    };
    write_json_atomic(&dir.join(SUMMARY_FILE), &summary)
        .map_err(|e| CliError::Runtime(format!("writing {label} summary: {e}")))?;
    Ok(ArmOutcome::Ok {
        l2_relative_error: arm.report.l2_relative_error,
        error_metrics: metrics,
        dir: label.to_string(),
    })
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    command: &'static str,
    case: &'a CircuitCase,
    train: &'a TrainConfig,
    raw: ArmOutcome,
    log: ArmOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
}

pub fn cmd_compare(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let record = compare_formulations(&config.case, &config.train);
    let dir = run_dir("compare", &config, args);
    std::fs::create_dir_all(&dir).map_err(|e| io_err("creating output directory", e))?;

    let mut failure: Option<CliError> = None;
    let mut outcome = |arm: &Result<TrainedArm, TrainError>,
                       label: &str,
                       formulation: pinn_rc_core::circuits::Formulation|
     -> Result<ArmOutcome, CliError> {
        match arm {
            Ok(trained) => {
                let arm_config = TrainConfig {
                    formulation,
                    ..config.train.clone()
                };
                write_arm(&dir.join(label), &config.case, &arm_config, trained, label)
            }
            Err(e) => {
                let mapped = map_train_ref(e);
                if failure.is_none() || matches!(mapped, CliError::Divergence(_)) {
                    failure = Some(mapped);
                }
                Ok(ArmOutcome::Failed {
                    error: e.to_string(),
                })
            }
        }
    };
    let raw = outcome(
        &record.raw,
        "raw",
        pinn_rc_core::circuits::Formulation::Raw,
    )?;
    let log = outcome(
        &record.log,
        "log",
        pinn_rc_core::circuits::Formulation::Log,
    )?;

    let summary = CompareSummary {
        command: "compare",
        case: &config.case,
        train: &config.train,
        raw,
        log,
        verdict: record.verdict,
    };
    write_json_atomic(&dir.join(SUMMARY_FILE), &summary)
        .map_err(|e| CliError::Runtime(format!("writing summary.json: {e}")))?;
    match record.verdict {
        Some(v) => println!(
            "compare {}: verdict {:?} (outputs in {})",
            config.case.label,
            v,
            dir.display()
        ),
        None => println!(
            "compare {}: at least one arm failed (outputs in {})",
            config.case.label,
            dir.display()
        ),
    }
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn map_train_ref(err: &TrainError) -> CliError {
    match err {
        TrainError::Diverged { .. } => CliError::Divergence(err.to_string()),
        _ => CliError::Config(err.to_string()),
    }
}

#[derive(Serialize)]
struct SweepArmSummary {
    t_end: f64,
    n_collocation: usize,
    #[serde(flatten)]
    outcome: ArmOutcome,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    case: &'a CircuitCase,
    train: &'a TrainConfig,
    scale_points: bool,
    arms: Vec<SweepArmSummary>,
    /// Whether the recorded per-domain errors degrade monotonically with
    /// domain length (informational; longer domains are expected to be
    /// harder).
    #[serde(skip_serializing_if = "Option::is_none")]
    degradation_monotone: Option<bool>,
}

pub fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let section = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing the 'sweep' section".into()))?;
    let record = domain_sweep(
        &config.case,
        &config.train,
        &section.t_ends,
        section.scale_points,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let dir = run_dir("sweep", &config, args);
    std::fs::create_dir_all(&dir).map_err(|e| io_err("creating output directory", e))?;

    let mut failure: Option<CliError> = None;
    let mut arms = Vec::new();
    let mut errors_in_order = Vec::new();
    for arm in &record.arms {
        let label = format!("t{}", arm.t_end);
        let outcome = match &arm.outcome {
            Ok(trained) => {
                let arm_config = TrainConfig {
                    domain: pinn_rc_core::circuits::TimeDomain::new(arm.t_end)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    n_collocation: arm.n_collocation,
                    n_test: None,
                    ..config.train.clone()
                };
                errors_in_order.push(Some(trained.report.l2_relative_error));
                write_arm(&dir.join(&label), &config.case, &arm_config, trained, &label)?
            }
            Err(e) => {
                let mapped = map_train_ref(e);
                if failure.is_none() || matches!(mapped, CliError::Divergence(_)) {
                    failure = Some(mapped);
                }
                errors_in_order.push(None);
                ArmOutcome::Failed {
                    error: e.to_string(),
                }
            }
        };
        arms.push(SweepArmSummary {
            t_end: arm.t_end,
            n_collocation: arm.n_collocation,
            outcome,
        });
    }
    let degradation_monotone = if errors_in_order.iter().all(|e| e.is_some()) {
        let errs: Vec<f64> = errors_in_order.into_iter().flatten().collect();
        Some(errs.windows(2).all(|w| w[1] >= w[0]))
    } else {
        None
    };

    let summary = SweepSummary {
        command: "sweep",
        case: &config.case,
        train: &config.train,
        scale_points: section.scale_points,
        arms,
        degradation_monotone,
    };
    write_json_atomic(&dir.join(SUMMARY_FILE), &summary)
        .map_err(|e| CliError::Runtime(format!("writing summary.json: {e}")))?;
    println!(
        "sweep {}: {} arm(s), outputs in {}",
        config.case.label,
        record.arms.len(),
        dir.display()
    );
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}
