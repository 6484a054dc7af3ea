//! Error metrics, the raw-vs-log comparison and domain-length sweep
//! experiments, and the CSV/JSON emission shared by the forward and inverse
//! paths.
//!
//! Floats in emitted files use Rust's shortest round-trip formatting, so
//! re-parsing a file recovers the exact values that were computed and a
//! re-run with the same config reproduces files byte for byte.

use crate::circuits::{CircuitCase, Formulation, TimeDomain};
use crate::training::{
    train_forward, FitReport, HistoryEntry, LossWeights, TrainConfig, TrainError,
};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("metric inputs must be non-empty")]
    EmptyInput,
    #[error("metric inputs differ in length: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("truth vector has zero norm; relative error undefined")]
    ZeroNormTruth,
    #[error("sweep needs at least one domain length")]
    EmptySweep,
    #[error("history line {line}: {message}")]
    HistoryFormat { line: usize, message: String },
    #[error(
        "history line {line}: total does not recompose from parts (relative error {relative_error:e})"
    )]
    DecompositionViolation { line: usize, relative_error: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// `||pred - truth||_2 / ||truth||_2`
pub fn l2_relative_error(pred: &[f64], truth: &[f64]) -> Result<f64, ReportError> {
    if pred.len() != truth.len() {
        return Err(ReportError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let diff_sq: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let truth_sq: f64 = truth.iter().map(|t| t * t).sum();
    if truth_sq == 0.0 {
        return Err(ReportError::ZeroNormTruth);
    }
    Ok((diff_sq / truth_sq).sqrt())
}

/// Headline accuracy numbers for one prediction grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub l2_relative: f64,
    pub max_abs: f64,
    pub rmse: f64,
}

impl ErrorMetrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self, ReportError> {
        let l2_relative = l2_relative_error(pred, truth)?;
        let n = pred.len() as f64;
        let mut max_abs = 0.0f64;
        let mut sq_sum = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            let d = (p - t).abs();
            max_abs = max_abs.max(d);
            sq_sum += d * d;
        }
        Ok(Self {
            l2_relative,
            max_abs,
            rmse: (sq_sum / n).sqrt(),
        })
    }
}

/// Write `bytes` to `path` via a temp file in the same directory plus an
/// atomic rename; a failed write leaves no file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "missing file name"))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!("{file_name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub const HISTORY_HEADER: &str = "iter,loss_total,loss_pde,loss_ic,loss_data";

pub fn history_csv_string(history: &[HistoryEntry]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for e in history {
        let l = e.loss;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.iteration, l.total, l.pde, l.ic, l.data
        ));
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[HistoryEntry]) -> std::io::Result<()> {
    write_atomic(path, history_csv_string(history).as_bytes())
}

pub const PREDICTION_HEADER: &str = "t,i_pred,i_true,abs_err";

pub fn prediction_csv_string(times: &[f64], pred: &[f64], truth: &[f64]) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for ((t, p), tr) in times.iter().zip(pred).zip(truth) {
        out.push_str(&format!("{},{},{},{}\n", t, p, tr, (p - tr).abs()));
    }
    out
}

pub fn write_prediction_csv(
    path: &Path,
    times: &[f64],
    pred: &[f64],
    truth: &[f64],
) -> std::io::Result<()> {
    write_atomic(path, prediction_csv_string(times, pred, truth).as_bytes())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Post-hoc check that every history row satisfies
/// `total = w_F pde + w_B ic + w_D data` within 1e-12 relative. Returns the
/// number of data rows validated.
pub fn validate_history_csv(path: &Path, weights: &LossWeights) -> Result<usize, ReportError> {
    let content = std::fs::read_to_string(path)?;
    validate_history_str(&content, weights)
}

pub fn validate_history_str(content: &str, weights: &LossWeights) -> Result<usize, ReportError> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == HISTORY_HEADER => {}
        Some((_, header)) => {
            return Err(ReportError::HistoryFormat {
                line: 1,
                message: format!("bad header '{header}'"),
            })
        }
        None => {
            return Err(ReportError::HistoryFormat {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(ReportError::HistoryFormat {
                line: line_no,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, ReportError> {
            s.parse::<f64>().map_err(|e| ReportError::HistoryFormat {
                line: line_no,
                message: format!("bad float '{s}': {e}"),
            })
        };
        let total = parse(fields[1])?;
        let pde = parse(fields[2])?;
        let ic = parse(fields[3])?;
        let data = parse(fields[4])?;
        let recomposed = weights.pde * pde + weights.boundary * ic + weights.data * data;
        let scale = total.abs().max(recomposed.abs());
        let rel = if scale == 0.0 {
            0.0
        } else {
            (total - recomposed).abs() / scale
        };
        if rel > 1e-12 {
            return Err(ReportError::DecompositionViolation {
                line: line_no,
                relative_error: rel,
            });
        }
        rows += 1;
    }
    Ok(rows)
}

/// Which formulation won a comparison on relative L2 error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Log,
    Raw,
    Tie,
}

/// One trained arm of a comparison or sweep.
#[derive(Debug)]
pub struct TrainedArm {
    pub report: FitReport,
    pub metrics: ErrorMetrics,
}

fn run_arm(case: &CircuitCase, config: &TrainConfig) -> Result<TrainedArm, TrainError> {
    let report = train_forward(case, config)?;
    let grid = crate::training::sample_collocation(config.domain, config.resolved_n_test())?;
    let pred = crate::training::predict(
        &report.final_model,
        case,
        config.formulation,
        config.domain,
        &grid,
    );
    let truth: Vec<f64> = grid
        .iter()
        .map(|&t| crate::circuits::analytical_current(case, t))
        .collect::<Result<_, _>>()?;
    let metrics = ErrorMetrics::compute(&pred.currents, &truth)?;
    Ok(TrainedArm { report, metrics })
}

/// Raw and log runs under the same seed and budget, with the ordering
/// verdict. A failed arm does not abort the other.
#[derive(Debug)]
pub struct ComparisonRecord {
    pub raw: Result<TrainedArm, TrainError>,
    pub log: Result<TrainedArm, TrainError>,
    pub verdict: Option<Verdict>,
}

pub fn compare_formulations(case: &CircuitCase, config: &TrainConfig) -> ComparisonRecord {
    let raw = run_arm(
        case,
        &TrainConfig {
            formulation: Formulation::Raw,
            ..config.clone()
        },
    );
    let log = run_arm(
        case,
        &TrainConfig {
            formulation: Formulation::Log,
            ..config.clone()
        },
    );
    let verdict = match (&raw, &log) {
        (Ok(r), Ok(l)) => Some(if l.metrics.l2_relative < r.metrics.l2_relative {
            Verdict::Log
        } else if l.metrics.l2_relative > r.metrics.l2_relative {
            Verdict::Raw
        } else {
            Verdict::Tie
        }),
        _ => None,
    };
    ComparisonRecord { raw, log, verdict }
}

/// Collocation count for a stretched domain under the proportional-density
/// rule (35 points per 10 s scales to 1050 at 300 s).
pub fn scaled_collocation(base_n: usize, base_t_end: f64, t_end: f64) -> usize {
    (base_n as f64 * t_end / base_t_end).ceil() as usize
}

/// One sweep arm; the config that was attempted plus its outcome.
#[derive(Debug)]
pub struct SweepArm {
    pub t_end: f64,
    pub n_collocation: usize,
    pub outcome: Result<TrainedArm, TrainError>,
}

#[derive(Debug)]
pub struct SweepRecord {
    pub arms: Vec<SweepArm>,
}

/// One training run per domain length. With `scale_points`, the collocation
/// count grows proportionally with the domain; failures are recorded per
/// arm and the sweep continues.
pub fn domain_sweep(
    case: &CircuitCase,
    base_config: &TrainConfig,
    t_ends: &[f64],
    scale_points: bool,
) -> Result<SweepRecord, ReportError> {
    if t_ends.is_empty() {
        return Err(ReportError::EmptySweep);
    }
    let base_t_end = base_config.domain.t_end();
    let arms = t_ends
        .iter()
        .map(|&t_end| {
            let n_collocation = if scale_points {
                scaled_collocation(base_config.n_collocation, base_t_end, t_end)
            } else {
                base_config.n_collocation
            };
            let outcome = TimeDomain::new(t_end)
                .map_err(TrainError::from)
                .and_then(|domain| {
                    let config = TrainConfig {
                        domain,
                        n_collocation,
                        n_test: None,
                        ..base_config.clone()
                    };
                    run_arm(case, &config)
                });
            SweepArm {
                t_end,
                n_collocation,
                outcome,
            }
        })
        .collect();
    Ok(SweepRecord { arms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::CircuitCase;

    #[test]
    fn l2_error_axioms() {
        let x = vec![1.0, 2.0, -3.0, 0.5];
        assert_eq!(l2_relative_error(&x, &x).unwrap(), 0.0);
        let scaled: Vec<f64> = x.iter().map(|v| 1.1 * v).collect();
        let e = l2_relative_error(&scaled, &x).unwrap();
        assert!((e - 0.1).abs() < 1e-12, "{e}");
        let zero = vec![0.0; 4];
        assert_eq!(l2_relative_error(&zero, &x).unwrap(), 1.0);
    }

    #[test]
    fn l2_error_contract_violations() {
        assert!(matches!(
            l2_relative_error(&[1.0], &[1.0, 2.0]),
            Err(ReportError::LengthMismatch { .. })
        ));
        assert!(matches!(
            l2_relative_error(&[], &[]),
            Err(ReportError::EmptyInput)
        ));
        assert!(matches!(
            l2_relative_error(&[1.0], &[0.0]),
            Err(ReportError::ZeroNormTruth)
        ));
    }

    #[test]
    fn error_metrics_values() {
        let truth = vec![1.0, 1.0];
        let pred = vec![1.0, 0.0];
        let m = ErrorMetrics::compute(&pred, &truth).unwrap();
        assert_eq!(m.max_abs, 1.0);
        assert!((m.rmse - (0.5f64).sqrt()).abs() < 1e-15);
        assert!((m.l2_relative - (0.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn history_csv_round_trip_and_validation() {
        use crate::training::LossBreakdown;
        let weights = LossWeights {
            boundary: 2.0,
            pde: 0.5,
            data: 1.0,
        };
        let history: Vec<HistoryEntry> = (0..5)
            .map(|k| {
                let pde = 0.3 / (k + 1) as f64;
                let ic = 0.11 * (k + 1) as f64;
                let data = 0.007;
                HistoryEntry {
                    iteration: k * 100,
                    loss: LossBreakdown::compose(&weights, pde, ic, data),
                }
            })
            .collect();
        let csv = history_csv_string(&history);
        let rows = validate_history_str(&csv, &weights).unwrap();
        assert_eq!(rows, 5);

        // Corrupting one component must trip the validator.
        let corrupted = csv.replace("0.007", "0.008");
        assert!(matches!(
            validate_history_str(&corrupted, &weights),
            Err(ReportError::DecompositionViolation { .. })
        ));

        let bad_header = csv.replace(HISTORY_HEADER, "a,b,c,d,e");
        assert!(matches!(
            validate_history_str(&bad_header, &weights),
            Err(ReportError::HistoryFormat { line: 1, .. })
        ));
    }

    #[test]
    fn atomic_write_failure_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("no-such-dir").join("file.csv");
        assert!(write_atomic(&missing, b"data").is_err());
        assert!(!missing.exists());
        let ok = dir.path().join("file.csv");
        write_atomic(&ok, b"data").unwrap();
        assert_eq!(std::fs::read(&ok).unwrap(), b"data");
        // No temp litter.
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn scaled_collocation_counts() {
        assert_eq!(scaled_collocation(35, 10.0, 10.0), 35);
        assert_eq!(scaled_collocation(35, 10.0, 100.0), 350);
        assert_eq!(scaled_collocation(35, 10.0, 300.0), 1050);
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            iterations: 120,
            log_every: 60,
            hidden_layers: vec![12],
            ..TrainConfig::defaults(
                TimeDomain::new(10.0).unwrap(),
                Formulation::Log,
                8,
                3,
            )
        }
    }

    #[test]
    fn comparison_runs_both_arms_deterministically() {
        let case = CircuitCase::fixture(0);
        let config = tiny_config();
        let a = compare_formulations(&case, &config);
        let b = compare_formulations(&case, &config);
        let (ar, al) = (a.raw.unwrap(), a.log.unwrap());
        let (br, bl) = (b.raw.unwrap(), b.log.unwrap());
        assert_eq!(
            ar.metrics.l2_relative.to_bits(),
            br.metrics.l2_relative.to_bits()
        );
        assert_eq!(
            al.metrics.l2_relative.to_bits(),
            bl.metrics.l2_relative.to_bits()
        );
        assert!(a.verdict.is_some());
        assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn comparison_survives_one_failed_arm() {
        // A learning rate of 1e308 overflows within a couple of steps in
        // both arms; the record reports both failures without panicking.
        let case = CircuitCase::fixture(0);
        let config = TrainConfig {
            learning_rate: 1e308,
            ..tiny_config()
        };
        let record = compare_formulations(&case, &config);
        assert!(record.raw.is_err());
        assert!(record.log.is_err());
        assert!(record.verdict.is_none());
    }

    #[test]
    fn sweep_single_arm_matches_train_forward() {
        let case = CircuitCase::fixture(0);
        let config = tiny_config();
        let sweep = domain_sweep(&case, &config, &[10.0], true).unwrap();
        assert_eq!(sweep.arms.len(), 1);
        let arm = sweep.arms[0].outcome.as_ref().unwrap();
        let direct = train_forward(&case, &config).unwrap();
        assert_eq!(
            arm.report.l2_relative_error.to_bits(),
            direct.l2_relative_error.to_bits()
        );
    }

    #[test]
    fn sweep_records_per_arm_failures_and_continues() {
        let case = CircuitCase::fixture(0);
        let config = tiny_config();
        let sweep = domain_sweep(&case, &config, &[-5.0, 10.0], true).unwrap();
        assert!(sweep.arms[0].outcome.is_err());
        assert!(sweep.arms[1].outcome.is_ok());
    }

    #[test]
    fn sweep_rejects_empty_domain_list() {
        let case = CircuitCase::fixture(0);
        assert!(matches!(
            domain_sweep(&case, &tiny_config(), &[], true),
            Err(ReportError::EmptySweep)
        ));
    }
}
