//! Inverse mode: recover resistances and capacitances from observed current
//! data by optimizing them jointly with the network.
//!
//! Physical parameters are searched in log space, which keeps every
//! candidate strictly positive without clipping or constraints. Their
//! residual gradients are closed forms (the residuals are elementary in R
//! and C), so no numeric differentiation enters the training loop.

use crate::circuits::{analytical_current, CircuitCase, CircuitError, Formulation, TimeDomain};
use crate::net::{backward_accumulate, forward_tangent, init_mlp, GradientSet, Mlp};
use crate::report;
use crate::rng::SeededRng;
use crate::training::{
    sample_collocation, AdamState, HistoryEntry, LossBreakdown, TrainConfig, TrainError,
};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must contain at least one observation")]
    Empty,
    #[error("times and currents differ in length: {times} vs {currents}")]
    LengthMismatch { times: usize, currents: usize },
    #[error("dataset times must be strictly ascending (row {row})")]
    UnsortedTimes { row: usize },
    #[error("dataset time at row {row} is negative: {value}")]
    NegativeTime { row: usize, value: f64 },
    #[error("dataset current at row {row} must be strictly positive and finite, got {value}")]
    NonPositiveCurrent { row: usize, value: f64 },
    #[error("dataset time at row {row} lies outside [0, {t_end}]: {value}")]
    OutOfDomain { row: usize, t_end: f64, value: f64 },
    #[error("expected CSV header 't,i', got '{0}'")]
    BadHeader(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("noise_sigma must be non-negative and finite, got {0}")]
    InvalidNoise(f64),
    #[error("could not draw a positive sample at t = {t} after {attempts} attempts")]
    RedrawExhausted { t: f64, attempts: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Measured,
}

/// Observed `(t, I)` pairs for inverse mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub currents: Vec<f64>,
    pub provenance: Provenance,
    /// Relative noise level used at generation time (zero for measured data).
    pub noise_sigma: f64,
}

impl Dataset {
    pub fn new(
        times: Vec<f64>,
        currents: Vec<f64>,
        provenance: Provenance,
        noise_sigma: f64,
    ) -> Result<Self, DataError> {
        let ds = Self {
            times,
            currents,
            provenance,
            noise_sigma,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Rows are reported 1-based counting the header, matching what a user
    /// sees in the file.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.times.len() != self.currents.len() {
            return Err(DataError::LengthMismatch {
                times: self.times.len(),
                currents: self.currents.len(),
            });
        }
        if self.times.is_empty() {
            return Err(DataError::Empty);
        }
        for (k, (&t, &i)) in self.times.iter().zip(&self.currents).enumerate() {
            let row = k + 2;
            if !t.is_finite() || t < 0.0 {
                return Err(DataError::NegativeTime { row, value: t });
            }
            if !i.is_finite() || i <= 0.0 {
                return Err(DataError::NonPositiveCurrent { row, value: i });
            }
            if k > 0 && self.times[k - 1] >= t {
                return Err(DataError::UnsortedTimes { row });
            }
        }
        Ok(())
    }

    pub fn check_domain(&self, domain: TimeDomain) -> Result<(), DataError> {
        for (k, &t) in self.times.iter().enumerate() {
            if !domain.contains(t) {
                return Err(DataError::OutOfDomain {
                    row: k + 2,
                    t_end: domain.t_end(),
                    value: t,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Parse the `t,i` CSV form. Read data is marked `measured`.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, DataError> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or(DataError::Empty)??;
        if header.trim() != "t,i" {
            return Err(DataError::BadHeader(header));
        }
        let mut times = Vec::new();
        let mut currents = Vec::new();
        for (k, line) in lines.enumerate() {
            let row = k + 2;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut fields = trimmed.split(',');
            let parse = |field: Option<&str>, name: &str| -> Result<f64, DataError> {
                field
                    .ok_or_else(|| DataError::Parse {
                        row,
                        message: format!("missing {name} column"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| DataError::Parse {
                        row,
                        message: format!("bad {name} value: {e}"),
                    })
            };
            times.push(parse(fields.next(), "t")?);
            currents.push(parse(fields.next(), "i")?);
            if fields.next().is_some() {
                return Err(DataError::Parse {
                    row,
                    message: "expected exactly two columns".into(),
                });
            }
        }
        Self::new(times, currents, Provenance::Measured, 0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,i")?;
        for (t, i) in self.times.iter().zip(&self.currents) {
            writeln!(w, "{t},{i}")?;
        }
        Ok(())
    }
}

/// Multiplicative-noise synthetic observations of the analytical solution.
/// Non-positive samples are rejected and redrawn from the same counted
/// stream, so equal seeds give equal datasets.
pub fn generate_synthetic(
    case: &CircuitCase,
    times: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(DataError::InvalidNoise(noise_sigma));
    }
    let mut rng = SeededRng::new(seed);
    let mut currents = Vec::with_capacity(times.len());
    for &t in times {
        let clean = analytical_current(case, t)?;
        let mut accepted = None;
        for _ in 0..10_000 {
            let z = rng.standard_normal();
            let sample = clean * (1.0 + noise_sigma * z);
            if sample > 0.0 {
                accepted = Some(sample);
                break;
            }
        }
        currents.push(accepted.ok_or(DataError::RedrawExhausted {
            t,
            attempts: 10_000,
        })?);
    }
    Dataset::new(times.to_vec(), currents, Provenance::Synthetic, noise_sigma)
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("initial {name} must be strictly positive and finite, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("parameter set shape (r0 {params_r0}, {params_branches} branches) does not match the case (r0 {case_r0}, {case_branches} branches)")]
    ShapeMismatch {
        params_r0: bool,
        case_r0: bool,
        params_branches: usize,
        case_branches: usize,
    },
}

/// Trainable log-resistances and log-capacitances with a free/frozen mask.
///
/// `log_r` holds `r0` first when the case has one, then one entry per RC
/// branch; `log_c` holds one entry per RC branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParams {
    log_r: Vec<f64>,
    log_c: Vec<f64>,
    has_r0: bool,
    free_r: Vec<bool>,
    free_c: Vec<bool>,
}

impl TrainableParams {
    pub fn from_values(r0: Option<f64>, branches: &[(f64, f64)]) -> Result<Self, ParamError> {
        let check = |name: String, v: f64| -> Result<f64, ParamError> {
            if v.is_finite() && v > 0.0 {
                Ok(v.ln())
            } else {
                Err(ParamError::NonPositive { name, value: v })
            }
        };
        let mut log_r = Vec::new();
        if let Some(r0) = r0 {
            log_r.push(check("r0".into(), r0)?);
        }
        let mut log_c = Vec::new();
        for (k, &(r, c)) in branches.iter().enumerate() {
            log_r.push(check(format!("branches[{k}].r"), r)?);
            log_c.push(check(format!("branches[{k}].c"), c)?);
        }
        let has_r0 = r0.is_some();
        Ok(Self {
            free_r: vec![true; log_r.len()],
            free_c: vec![true; log_c.len()],
            log_r,
            log_c,
            has_r0,
        })
    }

    /// Start every parameter at `scale` times its true value in `template`
    /// (the deliberately-wrong same-order default for synthetic studies).
    pub fn scaled_guess(template: &CircuitCase, scale: f64) -> Self {
        let branches: Vec<(f64, f64)> = template
            .branches
            .iter()
            .map(|b| (scale * b.r, scale * b.c))
            .collect();
        Self::from_values(template.r0.map(|r| scale * r), &branches)
            .expect("scaled template values are positive")
    }

    /// Set which parameters stay frozen at their initial values. Mask
    /// layouts follow `log_r` / `log_c`.
    pub fn with_mask(mut self, free_r: Vec<bool>, free_c: Vec<bool>) -> Result<Self, ParamError> {
        if free_r.len() != self.log_r.len() || free_c.len() != self.log_c.len() {
            return Err(ParamError::ShapeMismatch {
                params_r0: self.has_r0,
                case_r0: self.has_r0,
                params_branches: free_c.len(),
                case_branches: self.log_c.len(),
            });
        }
        self.free_r = free_r;
        self.free_c = free_c;
        Ok(self)
    }

    pub fn freeze_all(mut self) -> Self {
        self.free_r.iter_mut().for_each(|f| *f = false);
        self.free_c.iter_mut().for_each(|f| *f = false);
        self
    }

    pub fn matches_case(&self, case: &CircuitCase) -> Result<(), ParamError> {
        if self.has_r0 != case.r0.is_some() || self.log_c.len() != case.branches.len() {
            return Err(ParamError::ShapeMismatch {
                params_r0: self.has_r0,
                case_r0: case.r0.is_some(),
                params_branches: self.log_c.len(),
                case_branches: case.branches.len(),
            });
        }
        Ok(())
    }

    pub fn r0(&self) -> Option<f64> {
        self.has_r0.then(|| self.log_r[0].exp())
    }

    pub fn branch_r(&self, j: usize) -> f64 {
        self.log_r[self.r_offset() + j].exp()
    }

    pub fn branch_c(&self, j: usize) -> f64 {
        self.log_c[j].exp()
    }

    pub fn branch_count(&self) -> usize {
        self.log_c.len()
    }

    fn r_offset(&self) -> usize {
        usize::from(self.has_r0)
    }

    pub fn logs_finite(&self) -> bool {
        self.log_r.iter().chain(self.log_c.iter()).all(|v| v.is_finite())
    }

    pub fn n_log_r(&self) -> usize {
        self.log_r.len()
    }

    pub fn n_log_c(&self) -> usize {
        self.log_c.len()
    }

    pub(crate) fn bump_log_r(&mut self, idx: usize, delta: f64) {
        self.log_r[idx] += delta;
    }

    pub(crate) fn bump_log_c(&mut self, idx: usize, delta: f64) {
        self.log_c[idx] += delta;
    }

    fn zero_frozen(&self, grad_r: &mut [f64], grad_c: &mut [f64]) {
        for (g, &free) in grad_r.iter_mut().zip(&self.free_r) {
            if !free {
                *g = 0.0;
            }
        }
        for (g, &free) in grad_c.iter_mut().zip(&self.free_c) {
            if !free {
                *g = 0.0;
            }
        }
    }
}

/// A component residual with closed-form partial derivatives with respect
/// to the network-side inputs and every log parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamResidual {
    pub residual: f64,
    pub d_value: f64,
    pub d_deriv: f64,
    /// Aligned with `TrainableParams::log_r`.
    pub d_log_r: Vec<f64>,
    /// Aligned with `TrainableParams::log_c`.
    pub d_log_c: Vec<f64>,
}

/// Same functional form as the `circuits` residuals with
/// `R = exp(log_r)`, `C = exp(log_c)` as differentiable inputs.
pub fn residual_with_params(
    params: &TrainableParams,
    u_dc: f64,
    component: usize,
    value: f64,
    deriv: f64,
    formulation: Formulation,
) -> ParamResidual {
    let r_idx = params.r_offset() + component;
    let inv_tau = (-params.log_r[r_idx] - params.log_c[component]).exp();
    let steady = if component == 0 && params.has_r0 {
        u_dc * (-params.log_r[0]).exp()
    } else {
        0.0
    };
    let mut d_log_r = vec![0.0; params.log_r.len()];
    let mut d_log_c = vec![0.0; params.log_c.len()];
    let (residual, d_value, d_deriv);
    match formulation {
        Formulation::Raw => {
            residual = deriv + inv_tau * (value - steady);
            d_value = inv_tau;
            d_deriv = 1.0;
            d_log_r[r_idx] = -inv_tau * (value - steady);
            d_log_c[component] = d_log_r[r_idx];
            if steady != 0.0 {
                d_log_r[0] += inv_tau * steady;
            }
        }
        Formulation::Log => {
            if steady == 0.0 {
                residual = deriv + inv_tau;
                d_value = 0.0;
                d_deriv = 1.0;
                d_log_r[r_idx] = -inv_tau;
                d_log_c[component] = -inv_tau;
            } else {
                let exp_neg_u = (-value).exp();
                let bracket = 1.0 - steady * exp_neg_u;
                residual = deriv + inv_tau * bracket;
                d_value = inv_tau * steady * exp_neg_u;
                d_deriv = 1.0;
                d_log_r[r_idx] = -inv_tau * bracket;
                d_log_c[component] = d_log_r[r_idx];
                d_log_r[0] += inv_tau * steady * exp_neg_u;
            }
        }
    }
    ParamResidual {
        residual,
        d_value,
        d_deriv,
        d_log_r,
        d_log_c,
    }
}

/// Initial-condition targets as functions of the trainable parameters,
/// with their gradients with respect to `log_r` (capacitances never enter
/// the initial current). Returns one `(target, d_target/d_log_r)` per
/// component.
fn ic_targets_with_params(
    params: &TrainableParams,
    u_dc: f64,
    formulation: Formulation,
) -> Vec<(f64, Vec<f64>)> {
    let off = params.r_offset();
    (0..params.branch_count())
        .map(|j| {
            let mut grad = vec![0.0; params.log_r.len()];
            let branch_term = u_dc * (-params.log_r[off + j]).exp();
            let mut target = branch_term;
            grad[off + j] = -branch_term;
            if j == 0 && params.has_r0 {
                let resistive = u_dc * (-params.log_r[0]).exp();
                target += resistive;
                grad[0] -= resistive;
            }
            match formulation {
                Formulation::Raw => (target, grad),
                Formulation::Log => {
                    grad.iter_mut().for_each(|g| *g /= target);
                    (target.ln(), grad)
                }
            }
        })
        .collect()
}

/// Mean squared data mismatch: current space for raw, log space for log.
pub fn data_loss(
    net: &Mlp,
    dataset: &Dataset,
    formulation: Formulation,
    domain: TimeDomain,
) -> Result<(f64, GradientSet), TrainError> {
    dataset
        .validate()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let width = net.output_dim();
    let n = dataset.len() as f64;
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros_like(net);
    let mut seed_u = vec![0.0; width];
    let seed_du = vec![0.0; width];
    for (&t, &observed) in dataset.times.iter().zip(&dataset.currents) {
        let eval = forward_tangent(net, domain.scale(t));
        match formulation {
            Formulation::Raw => {
                let model: f64 = eval.u().iter().sum();
                let d = model - observed;
                loss += d * d;
                seed_u.iter_mut().for_each(|s| *s = 2.0 * d / n);
            }
            Formulation::Log => {
                // log-sum-exp of the components, shifted for safety.
                let mx = eval.u().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = eval.u().iter().map(|u| (u - mx).exp()).sum();
                let model_log = mx + sum.ln();
                let d = model_log - observed.ln();
                loss += d * d;
                for (s, &u) in seed_u.iter_mut().zip(eval.u()) {
                    *s = 2.0 * d / n * ((u - mx).exp() / sum);
                }
            }
        }
        backward_accumulate(net, &eval, &seed_u, &seed_du, &mut grads)?;
    }
    Ok((loss / n, grads))
}

/// A recovered physical parameter next to its true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub estimate: f64,
    pub truth: f64,
    pub relative_error: f64,
    pub trained: bool,
}

impl ParamEstimate {
    fn new(estimate: f64, truth: f64, trained: bool) -> Self {
        Self {
            estimate,
            truth,
            relative_error: (estimate - truth).abs() / truth.abs(),
            trained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchEstimate {
    pub r: ParamEstimate,
    pub c: ParamEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveredParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<ParamEstimate>,
    pub branches: Vec<BranchEstimate>,
}

/// Result of an inverse training run.
#[derive(Debug, Clone)]
pub struct InverseReport {
    pub history: Vec<HistoryEntry>,
    pub final_model: Mlp,
    pub recovered: RecoveredParams,
    /// Relative L2 error of the predicted current against the template's
    /// analytical solution on the test grid.
    pub l2_relative_error: f64,
    pub wall_time: f64,
}

/// Mutable destinations for the weighted total-loss gradients of one
/// inverse-mode evaluation.
pub(crate) struct GradSink<'a> {
    pub(crate) theta: &'a mut GradientSet,
    pub(crate) log_r: &'a mut [f64],
    pub(crate) log_c: &'a mut [f64],
}

/// Evaluate (pde, ic, data) losses for the inverse problem; when `sink` is
/// given, also accumulate the gradients of the weighted total into it.
pub(crate) fn inverse_losses(
    net: &Mlp,
    params: &TrainableParams,
    template: &CircuitCase,
    dataset: &Dataset,
    config: &TrainConfig,
    points: &[f64],
    mut sink: Option<GradSink<'_>>,
) -> Result<(f64, f64, f64), TrainError> {
    let width = template.component_count();
    let weights = config.loss_weights;
    let rate = config.domain.scale_rate();
    let n_points = points.len() as f64;

    let mut pde = 0.0;
    let mut seed_u = vec![0.0; width];
    let mut seed_du = vec![0.0; width];
    for &t in points {
        let eval = forward_tangent(net, config.domain.scale(t));
        for j in 0..width {
            let pr = residual_with_params(
                params,
                template.u_dc,
                j,
                eval.u()[j],
                eval.du_dt()[j] * rate,
                config.formulation,
            );
            pde += pr.residual * pr.residual;
            // PDE weight folded into the seeds; data/IC terms add their own.
            seed_u[j] = 2.0 * pr.residual * pr.d_value * weights.pde / n_points;
            seed_du[j] = 2.0 * pr.residual * pr.d_deriv * rate * weights.pde / n_points;
            if let Some(s) = sink.as_mut() {
                let scale = 2.0 * pr.residual * weights.pde / n_points;
                for (g, d) in s.log_r.iter_mut().zip(&pr.d_log_r) {
                    *g += scale * d;
                }
                for (g, d) in s.log_c.iter_mut().zip(&pr.d_log_c) {
                    *g += scale * d;
                }
            }
        }
        if let Some(s) = sink.as_mut() {
            backward_accumulate(net, &eval, &seed_u, &seed_du, s.theta)?;
        }
    }
    pde /= n_points;

    let mut ic = 0.0;
    if config.ic_in_loss {
        let targets = ic_targets_with_params(params, template.u_dc, config.formulation);
        let eval = forward_tangent(net, -1.0);
        let mut su = vec![0.0; width];
        let sd = vec![0.0; width];
        for (j, (target, target_grad)) in targets.iter().enumerate() {
            let d = eval.u()[j] - target;
            ic += d * d;
            su[j] = 2.0 * d * weights.boundary;
            if let Some(s) = sink.as_mut() {
                for (g, tg) in s.log_r.iter_mut().zip(target_grad) {
                    *g += -2.0 * d * tg * weights.boundary;
                }
            }
        }
        if let Some(s) = sink.as_mut() {
            backward_accumulate(net, &eval, &su, &sd, s.theta)?;
        }
    }

    let (data, data_grads) = data_loss(net, dataset, config.formulation, config.domain)?;
    if let Some(s) = sink.as_mut() {
        s.theta.add_scaled(&data_grads, weights.data);
    }
    Ok((pde, ic, data))
}

/// Joint Adam optimization over network parameters and physical parameters.
///
/// The initial-condition term stays in the loss when `config.ic_in_loss` is
/// set (the default); its target is computed from the *trainable* parameter
/// estimates, which is what couples the observed `I(0)` to the individual
/// resistances.
pub fn train_inverse(
    template: &CircuitCase,
    dataset: &Dataset,
    config: &TrainConfig,
    init_params: &TrainableParams,
) -> Result<InverseReport, TrainError> {
    config.validate()?;
    dataset
        .validate()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    dataset
        .check_domain(config.domain)
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    init_params
        .matches_case(template)
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;

    let started = std::time::Instant::now();
    let width = template.component_count();
    let mut net = init_mlp(&config.layer_sizes(width), config.seed)?;
    let points = config.collocation_points()?;
    let weights = config.loss_weights;
    let lambda_lr = config.lambda_learning_rate.unwrap_or(config.learning_rate);

    let mut params = init_params.clone();
    let mut adam_theta = AdamState::for_net(&net);
    let mut adam_lambda = AdamState::for_shapes(&[params.log_r.len(), params.log_c.len()]);
    let mut history = Vec::new();

    for iter in 0..config.iterations {
        let mut theta_grads = GradientSet::zeros_like(&net);
        let mut grad_r = vec![0.0; params.log_r.len()];
        let mut grad_c = vec![0.0; params.log_c.len()];
        let (pde, ic, data) = inverse_losses(
            &net,
            &params,
            template,
            dataset,
            config,
            &points,
            Some(GradSink {
                theta: &mut theta_grads,
                log_r: &mut grad_r,
                log_c: &mut grad_c,
            }),
        )?;
        let breakdown = LossBreakdown::compose(&weights, pde, ic, data);
        if !breakdown.is_finite() {
            return Err(TrainError::Diverged { iteration: iter });
        }
        if iter % config.log_every == 0 {
            history.push(HistoryEntry {
                iteration: iter,
                loss: breakdown,
            });
        }
        params.zero_frozen(&mut grad_r, &mut grad_c);
        adam_theta.apply(
            &mut net.param_tensors_mut(),
            &theta_grads.tensor_slices(),
            config.learning_rate,
        )?;
        adam_lambda.apply(
            &mut [params.log_r.as_mut_slice(), params.log_c.as_mut_slice()],
            &[grad_r.as_slice(), grad_c.as_slice()],
            lambda_lr,
        )?;
        if !params.logs_finite() {
            return Err(TrainError::Diverged { iteration: iter });
        }
    }

    let (pde, ic, data) =
        inverse_losses(&net, &params, template, dataset, config, &points, None)?;
    let final_loss = LossBreakdown::compose(&weights, pde, ic, data);
    if !final_loss.is_finite() {
        return Err(TrainError::Diverged {
            iteration: config.iterations,
        });
    }
    history.push(HistoryEntry {
        iteration: config.iterations,
        loss: final_loss,
    });

    let recovered = RecoveredParams {
        r0: template
            .r0
            .map(|truth| ParamEstimate::new(params.r0().unwrap(), truth, params.free_r[0])),
        branches: template
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| BranchEstimate {
                r: ParamEstimate::new(
                    params.branch_r(j),
                    b.r,
                    params.free_r[params.r_offset() + j],
                ),
                c: ParamEstimate::new(params.branch_c(j), b.c, params.free_c[j]),
            })
            .collect(),
    };

    let test_grid = sample_collocation(config.domain, config.resolved_n_test())?;
    let pred = crate::training::predict(
        &net,
        template,
        config.formulation,
        config.domain,
        &test_grid,
    );
    let truth: Vec<f64> = test_grid
        .iter()
        .map(|&t| analytical_current(template, t))
        .collect::<Result<_, _>>()?;
    let l2_relative_error = report::l2_relative_error(&pred.currents, &truth)?;

    Ok(InverseReport {
        history,
        final_model: net,
        recovered,
        l2_relative_error,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
