//! Composite PINN loss assembly and the Adam training loop for forward
//! problems.
//!
//! The network consumes the scaled input `t_scaled = 2 t / t_end - 1`; every
//! tangent coming out of the network is chain-ruled by `2 / t_end` before it
//! enters a residual. Training is full batch (all collocation points every
//! step) and single threaded, so a run is bitwise reproducible from its
//! config.

use crate::circuits::{
    self, analytical_current, component_partials, CircuitCase, CircuitError, Formulation,
    TimeDomain,
};
use crate::net::{
    backward_accumulate, forward, forward_tangent, init_mlp, GradientSet, Mlp, NetError,
};
use crate::report::{self, ReportError};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metric(#[from] ReportError),
    #[error("network output width {got} does not match the required {expected} component(s)")]
    WidthMismatch { expected: usize, got: usize },
    #[error("collocation sampling needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("optimizer shape mismatch at tensor {index}: params {params}, grads {grads}, state {state}")]
    ShapeMismatch {
        index: usize,
        params: usize,
        grads: usize,
        state: usize,
    },
    #[error("optimizer called with {params} parameter tensors but {grads} gradient tensors")]
    TensorCountMismatch { params: usize, grads: usize },
    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: u64 },
}

/// Weights `(omega_B, omega_F, omega_D)` applied to the initial-condition,
/// PDE-residual and data terms of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub boundary: f64,
    pub pde: f64,
    pub data: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            boundary: 1.0,
            pde: 1.0,
            data: 1.0,
        }
    }
}

/// Collocation point placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Equispaced,
    Uniform,
}

/// The optimization contract for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::iterations")]
    pub iterations: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    pub n_collocation: usize,
    /// Test-grid size; defaults to ten times the collocation count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    pub formulation: Formulation,
    pub seed: u64,
    #[serde(rename = "t_end")]
    pub domain: TimeDomain,
    #[serde(default = "defaults::log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "defaults::hidden_layers")]
    pub hidden_layers: Vec<usize>,
    /// Whether inverse runs keep the initial-condition term in the loss.
    /// Forward runs always include it (scale it with `loss_weights`).
    #[serde(default = "defaults::ic_in_loss")]
    pub ic_in_loss: bool,
    /// Optional separate learning rate for the physical parameters in
    /// inverse mode; the shared rate applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_learning_rate: Option<f64>,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        0.01
    }
    pub fn iterations() -> u64 {
        15_000
    }
    pub fn log_every() -> u64 {
        100
    }
    pub fn hidden_layers() -> Vec<usize> {
        vec![40, 40, 40]
    }
    pub fn ic_in_loss() -> bool {
        true
    }
}

impl TrainConfig {
    /// Default hyperparameters: learning rate 0.01, 3 hidden layers of
    /// 40 tanh units, 15000 full-batch Adam iterations.
    pub fn defaults(
        domain: TimeDomain,
        formulation: Formulation,
        n_collocation: usize,
        seed: u64,
    ) -> Self {
        Self {
            learning_rate: defaults::learning_rate(),
            iterations: defaults::iterations(),
            loss_weights: LossWeights::default(),
            n_collocation,
            n_test: None,
            formulation,
            seed,
            domain,
            log_every: defaults::log_every(),
            sampling: Sampling::Equispaced,
            hidden_layers: defaults::hidden_layers(),
            ic_in_loss: defaults::ic_in_loss(),
            lambda_learning_rate: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "train.learning_rate must be strictly positive and finite, got {}",
                self.learning_rate
            ));
        }
        if self.iterations == 0 {
            return bad("train.iterations must be at least 1".into());
        }
        if self.n_collocation < 2 {
            return bad(format!(
                "train.n_collocation must be at least 2, got {}",
                self.n_collocation
            ));
        }
        if let Some(n) = self.n_test {
            if n < 2 {
                return bad(format!("train.n_test must be at least 2, got {n}"));
            }
        }
        let w = &self.loss_weights;
        for (name, v) in [
            ("boundary", w.boundary),
            ("pde", w.pde),
            ("data", w.data),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!(
                    "train.loss_weights.{name} must be non-negative and finite, got {v}"
                ));
            }
        }
        if self.log_every == 0 {
            return bad("train.log_every must be at least 1".into());
        }
        if self.hidden_layers.contains(&0) {
            return bad("train.hidden_layers entries must be positive".into());
        }
        if let Some(lr) = self.lambda_learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!(
                    "train.lambda_learning_rate must be strictly positive and finite, got {lr}"
                ));
            }
        }
        Ok(())
    }

    pub fn resolved_n_test(&self) -> usize {
        self.n_test.unwrap_or(10 * self.n_collocation)
    }

    /// Full layer-size list for a network with the given output width.
    pub fn layer_sizes(&self, output_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(1);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(output_dim);
        sizes
    }

    /// Collocation points according to the configured sampling mode.
    pub fn collocation_points(&self) -> Result<Vec<f64>, TrainError> {
        match self.sampling {
            Sampling::Equispaced => sample_collocation(self.domain, self.n_collocation),
            Sampling::Uniform => {
                // Distinct stream from the parameter init.
                sample_collocation_uniform(
                    self.domain,
                    self.n_collocation,
                    self.seed ^ 0x9E37_79B9_7F4A_7C15,
                )
            }
        }
    }
}

/// One evaluation of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pde: f64,
    pub ic: f64,
    pub data: f64,
}

impl LossBreakdown {
    /// Compose the total from its parts; the identity
    /// `total = w_F pde + w_B ic + w_D data` holds exactly because this is
    /// the only place the total is computed.
    pub fn compose(weights: &LossWeights, pde: f64, ic: f64, data: f64) -> Self {
        Self {
            total: weights.pde * pde + weights.boundary * ic + weights.data * data,
            pde,
            ic,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// A `(iteration, loss)` sample of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub loss: LossBreakdown,
}

/// Result of a forward training run.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<HistoryEntry>,
    pub final_model: Mlp,
    /// Relative L2 error of the predicted current against the analytical
    /// solution on the equispaced test grid.
    pub l2_relative_error: f64,
    pub wall_time: f64,
}

/// `n` equispaced points over the domain including both endpoints.
pub fn sample_collocation(domain: TimeDomain, n: usize) -> Result<Vec<f64>, TrainError> {
    if n < 2 {
        return Err(TrainError::TooFewPoints(n));
    }
    let t_end = domain.t_end();
    Ok((0..n)
        .map(|k| t_end * k as f64 / (n - 1) as f64)
        .collect())
}

/// `n` points drawn uniformly over the domain, sorted ascending with no
/// duplicates (duplicate draws are rejected and redrawn).
pub fn sample_collocation_uniform(
    domain: TimeDomain,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, TrainError> {
    if n < 2 {
        return Err(TrainError::TooFewPoints(n));
    }
    let mut rng = SeededRng::new(seed);
    let mut points: Vec<f64> = (0..n).map(|_| rng.uniform() * domain.t_end()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    while points.len() < n {
        let t = rng.uniform() * domain.t_end();
        if let Err(pos) = points.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            points.insert(pos, t);
        }
    }
    Ok(points)
}

fn check_width(net: &Mlp, case: &CircuitCase) -> Result<usize, TrainError> {
    let expected = case.component_count();
    if net.output_dim() != expected {
        return Err(TrainError::WidthMismatch {
            expected,
            got: net.output_dim(),
        });
    }
    Ok(expected)
}

/// Mean squared ODE residual over the collocation points, with its exact
/// parameter gradient.
pub fn pde_loss(
    net: &Mlp,
    case: &CircuitCase,
    domain: TimeDomain,
    points: &[f64],
    formulation: Formulation,
) -> Result<(f64, GradientSet), TrainError> {
    let width = check_width(net, case)?;
    if points.is_empty() {
        return Err(TrainError::TooFewPoints(0));
    }
    let n = points.len() as f64;
    let rate = domain.scale_rate();
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros_like(net);
    let mut seed_u = vec![0.0; width];
    let mut seed_du = vec![0.0; width];
    for &t in points {
        let eval = forward_tangent(net, domain.scale(t));
        for j in 0..width {
            let p = component_partials(case, j, eval.u()[j], eval.du_dt()[j] * rate, formulation);
            loss += p.residual * p.residual;
            seed_u[j] = 2.0 * p.residual * p.d_value / n;
            seed_du[j] = 2.0 * p.residual * p.d_deriv * rate / n;
        }
        backward_accumulate(net, &eval, &seed_u, &seed_du, &mut grads)?;
    }
    Ok((loss / n, grads))
}

/// Squared mismatch between the network at `t = 0` (scaled input -1) and the
/// initial condition, summed over components, with its exact gradient.
pub fn ic_loss(
    net: &Mlp,
    case: &CircuitCase,
    formulation: Formulation,
) -> Result<(f64, GradientSet), TrainError> {
    let width = check_width(net, case)?;
    let targets = ic_targets(case, formulation);
    let eval = forward_tangent(net, -1.0);
    let mut loss = 0.0;
    let mut seed_u = vec![0.0; width];
    let seed_du = vec![0.0; width];
    for j in 0..width {
        let d = eval.u()[j] - targets[j];
        loss += d * d;
        seed_u[j] = 2.0 * d;
    }
    let mut grads = GradientSet::zeros_like(net);
    backward_accumulate(net, &eval, &seed_u, &seed_du, &mut grads)?;
    Ok((loss, grads))
}

/// Per-component initial-condition targets for the given formulation.
pub fn ic_targets(case: &CircuitCase, formulation: Formulation) -> Vec<f64> {
    let raw = circuits::initial_components(case);
    match formulation {
        Formulation::Raw => raw,
        Formulation::Log => raw.iter().map(|v| v.ln()).collect(),
    }
}

/// Adam accumulator state. Moments are shaped like the parameter tensors
/// they track; `step` counts completed updates for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn for_shapes(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_net(net: &Mlp) -> Self {
        Self::for_shapes(&net.tensor_shapes())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias correction applied to every tensor.
    pub fn apply(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        lr: f64,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TrainError::TensorCountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.step as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.step as i32);
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[idx].len() {
                return Err(TrainError::ShapeMismatch {
                    index: idx,
                    params: p.len(),
                    grads: g.len(),
                    state: self.m[idx].len(),
                });
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + Self::EPSILON);
            }
        }
        Ok(())
    }
}

/// Run full-batch Adam on `w_F * pde + w_B * ic` and evaluate the trained
/// model against the analytical solution on the test grid.
pub fn train_forward(case: &CircuitCase, config: &TrainConfig) -> Result<FitReport, TrainError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let width = case.component_count();
    let mut net = init_mlp(&config.layer_sizes(width), config.seed)?;
    let points = config.collocation_points()?;
    let weights = config.loss_weights;
    let mut adam = AdamState::for_net(&net);
    let mut history = Vec::new();

    for iter in 0..config.iterations {
        let (pde, mut grads) = pde_loss(&net, case, config.domain, &points, config.formulation)?;
        let (ic, ic_grads) = ic_loss(&net, case, config.formulation)?;
        let breakdown = LossBreakdown::compose(&weights, pde, ic, 0.0);
        if !breakdown.is_finite() {
            return Err(TrainError::Diverged { iteration: iter });
        }
        if iter % config.log_every == 0 {
            history.push(HistoryEntry {
                iteration: iter,
                loss: breakdown,
            });
        }
        grads.scale(weights.pde);
        grads.add_scaled(&ic_grads, weights.boundary);
        adam.apply(
            &mut net.param_tensors_mut(),
            &grads.tensor_slices(),
            config.learning_rate,
        )?;
    }

    // Final state of the loss after the last update.
    let (pde, _) = pde_loss(&net, case, config.domain, &points, config.formulation)?;
    let (ic, _) = ic_loss(&net, case, config.formulation)?;
    let final_loss = LossBreakdown::compose(&weights, pde, ic, 0.0);
    if !final_loss.is_finite() {
        return Err(TrainError::Diverged {
            iteration: config.iterations,
        });
    }
    history.push(HistoryEntry {
        iteration: config.iterations,
        loss: final_loss,
    });

    let test_grid = sample_collocation(config.domain, config.resolved_n_test())?;
    let pred = predict(&net, case, config.formulation, config.domain, &test_grid);
    let truth: Vec<f64> = test_grid
        .iter()
        .map(|&t| analytical_current(case, t))
        .collect::<Result<_, _>>()?;
    let l2_relative_error = report::l2_relative_error(&pred.currents, &truth)?;

    Ok(FitReport {
        history,
        final_model: net,
        l2_relative_error,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Network outputs mapped to a physical current (identity / component sum
/// for raw, exponential / sum of exponentials for log).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub currents: Vec<f64>,
    /// True when any requested time lies outside `[0, t_end]`.
    pub extrapolated: bool,
}

pub fn predict(
    net: &Mlp,
    case: &CircuitCase,
    formulation: Formulation,
    domain: TimeDomain,
    times: &[f64],
) -> Prediction {
    let _ = case;
    let mut extrapolated = false;
    let currents = times
        .iter()
        .map(|&t| {
            if !domain.contains(t) {
                extrapolated = true;
            }
            let outputs = forward(net, domain.scale(t));
            match formulation {
                Formulation::Raw => outputs.iter().sum(),
                Formulation::Log => outputs.iter().map(|u| u.exp()).sum(),
            }
        })
        .collect();
    Prediction {
        currents,
        extrapolated,
    }
}
