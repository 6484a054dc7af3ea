//! Finite-difference verification of the differentiation machinery: input
//! tangents, parameter gradients of the assembled losses, and the
//! closed-form physical-parameter gradients.
//!
//! Relative discrepancies are guarded by a floor in the denominator so that
//! entries near zero are compared at the finite-difference noise level
//! instead of blowing up the ratio.

use crate::circuits::{CircuitCase, Formulation, TimeDomain};
use crate::inverse::{self, residual_with_params, TrainableParams};
use crate::net::{backward, forward, forward_tangent, init_mlp};
use crate::rng::SeededRng;
use crate::training::{ic_loss, pde_loss, sample_collocation, TrainConfig, TrainError};
use serde::Serialize;

/// Tolerance on input tangents vs central differences (h = 1e-6).
pub const TANGENT_TOL: f64 = 1e-6;
/// Tolerance on loss gradients over network parameters (h = 1e-6).
pub const THETA_TOL: f64 = 1e-5;
/// Tolerance on closed-form physical-parameter residual gradients (h = 1e-5).
pub const LAMBDA_TOL: f64 = 1e-8;
/// Tolerance on physical-parameter gradients of the assembled inverse loss.
pub const LAMBDA_LOSS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Test hook: added to one reverse-mode gradient entry before the
    /// comparison so the check provably detects a corrupted backward pass.
    pub fault_injection: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradcheckReport {
    pub max_tangent_rel: f64,
    pub max_theta_rel: f64,
    pub max_lambda_rel: f64,
    pub max_lambda_loss_rel: f64,
    pub comparisons: usize,
    pub pass: bool,
}

impl GradcheckReport {
    /// One line per checked quantity, `PASS`/`FAIL` style.
    pub fn render(&self) -> String {
        let line = |name: &str, value: f64, tol: f64| {
            format!(
                "[{}] {name}: max relative discrepancy {value:.3e} (tolerance {tol:.0e})\n",
                if value < tol { "PASS" } else { "FAIL" }
            )
        };
        let mut out = String::new();
        out.push_str(&line("tangent du/dt", self.max_tangent_rel, TANGENT_TOL));
        out.push_str(&line("theta loss gradients", self.max_theta_rel, THETA_TOL));
        out.push_str(&line(
            "lambda residual gradients",
            self.max_lambda_rel,
            LAMBDA_TOL,
        ));
        out.push_str(&line(
            "lambda loss gradients",
            self.max_lambda_loss_rel,
            LAMBDA_LOSS_TOL,
        ));
        out
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Tangents of 100 random (net, input) pairs against central differences.
fn check_tangents(seed: u64) -> (f64, usize) {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut count = 0;
    for net_idx in 0..25u64 {
        let net = init_mlp(&[1, 8, 8, 1], seed.wrapping_add(net_idx)).unwrap();
        let mut rng = SeededRng::new(seed.wrapping_add(1000 + net_idx));
        for _ in 0..4 {
            let t = rng.uniform_symmetric(1.0);
            let ad = forward_tangent(&net, t).du_dt()[0];
            let fd = (forward(&net, t + h)[0] - forward(&net, t - h)[0]) / (2.0 * h);
            worst = worst.max(rel(ad, fd, 1e-3));
            count += 1;
        }
    }
    (worst, count)
}

/// Gradients of the assembled forward loss (pde + ic) over every parameter
/// of a 1-8-1 net, both formulations, against central differences; plus the
/// raw backward functional on a deeper net with random seeds.
fn check_theta(seed: u64, fault: Option<f64>) -> Result<(f64, usize), TrainError> {
    let case = CircuitCase::fixture(0);
    let domain = TimeDomain::new(10.0).unwrap();
    let points = sample_collocation(domain, 5)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut count = 0;

    for formulation in [Formulation::Raw, Formulation::Log] {
        let mut net = init_mlp(&[1, 8, 1], seed.wrapping_add(7))?;
        let loss = |net: &crate::net::Mlp| -> Result<f64, TrainError> {
            let (pde, _) = pde_loss(net, &case, domain, &points, formulation)?;
            let (ic, _) = ic_loss(net, &case, formulation)?;
            Ok(pde + ic)
        };
        let (pde, mut grads) = pde_loss(&net, &case, domain, &points, formulation)?;
        let (_ic, ic_grads) = ic_loss(&net, &case, formulation)?;
        let _ = pde;
        grads.add_scaled(&ic_grads, 1.0);
        for idx in 0..net.param_count() {
            let orig = net.param(idx);
            net.set_param(idx, orig + h);
            let lp = loss(&net)?;
            net.set_param(idx, orig - h);
            let lm = loss(&net)?;
            net.set_param(idx, orig);
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max(rel(grads.param(idx), fd, 1e-4));
            count += 1;
        }
    }

    // Functional-level check carrying the mixed second-order term.
    let mut net = init_mlp(&[1, 8, 8, 1], seed.wrapping_add(17))?;
    let mut rng = SeededRng::new(seed.wrapping_add(23));
    for probe in 0..16 {
        let t = rng.uniform_symmetric(1.0);
        let seed_u = vec![rng.uniform_symmetric(1.0)];
        let seed_du = vec![rng.uniform_symmetric(1.0)];
        let eval = forward_tangent(&net, t);
        let grads = backward(&net, &eval, &seed_u, &seed_du)?;
        let phi = |net: &crate::net::Mlp| {
            let e = forward_tangent(net, t);
            seed_u[0] * e.u()[0] + seed_du[0] * e.du_dt()[0]
        };
        for idx in 0..net.param_count() {
            let orig = net.param(idx);
            net.set_param(idx, orig + h);
            let fp = phi(&net);
            net.set_param(idx, orig - h);
            let fm = phi(&net);
            net.set_param(idx, orig);
            let fd = (fp - fm) / (2.0 * h);
            let mut ad = grads.param(idx);
            if probe == 0 && idx == 0 {
                if let Some(delta) = fault {
                    ad += delta;
                }
            }
            worst = worst.max(rel(ad, fd, 1e-4));
            count += 1;
        }
    }
    Ok((worst, count))
}

/// Closed-form residual gradients in log_r / log_c against central
/// differences, across the case fixtures and both formulations.
fn check_lambda_residual(_seed: u64) -> (f64, usize) {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..=2usize {
        let case = CircuitCase::fixture(k);
        let branches: Vec<(f64, f64)> = case
            .branches
            .iter()
            .map(|b| (0.6 * b.r, 1.4 * b.c))
            .collect();
        let params =
            TrainableParams::from_values(case.r0.map(|r| 0.9 * r), &branches).unwrap();
        for formulation in [Formulation::Raw, Formulation::Log] {
            for j in 0..case.component_count() {
                let (value, deriv) = match formulation {
                    Formulation::Raw => (0.8, -0.3),
                    Formulation::Log => (-0.5, -0.1),
                };
                let pr = residual_with_params(&params, case.u_dc, j, value, deriv, formulation);
                for r_idx in 0..params.n_log_r() {
                    let bump = |d: f64| {
                        let mut p = params.clone();
                        p.bump_log_r(r_idx, d);
                        residual_with_params(&p, case.u_dc, j, value, deriv, formulation).residual
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    worst = worst.max(rel(pr.d_log_r[r_idx], fd, 1e-6));
                    count += 1;
                }
                for c_idx in 0..params.n_log_c() {
                    let bump = |d: f64| {
                        let mut p = params.clone();
                        p.bump_log_c(c_idx, d);
                        residual_with_params(&p, case.u_dc, j, value, deriv, formulation).residual
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    worst = worst.max(rel(pr.d_log_c[c_idx], fd, 1e-6));
                    count += 1;
                }
            }
        }
    }
    (worst, count)
}

/// Physical-parameter gradients of the assembled inverse loss (pde + ic +
/// data) against central differences.
fn check_lambda_loss(seed: u64) -> Result<(f64, usize), TrainError> {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..=1usize {
        let case = CircuitCase::fixture(k);
        let domain = TimeDomain::new(10.0).unwrap();
        let times = sample_collocation(domain, 9)?;
        let dataset = inverse::generate_synthetic(&case, &times, 0.0, seed.wrapping_add(3))
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        for formulation in [Formulation::Raw, Formulation::Log] {
            let config = TrainConfig {
                iterations: 1,
                hidden_layers: vec![8],
                ..TrainConfig::defaults(domain, formulation, 7, seed)
            };
            let points = config.collocation_points()?;
            let net = init_mlp(&config.layer_sizes(case.component_count()), seed)?;
            let params = TrainableParams::scaled_guess(&case, 0.7);
            let mut theta = crate::net::GradientSet::zeros_like(&net);
            let mut grad_r = vec![0.0; params.n_log_r()];
            let mut grad_c = vec![0.0; params.n_log_c()];
            let (_, _, _) = inverse::inverse_losses(
                &net,
                &params,
                &case,
                &dataset,
                &config,
                &points,
                Some(inverse::GradSink {
                    theta: &mut theta,
                    log_r: &mut grad_r,
                    log_c: &mut grad_c,
                }),
            )?;
            let total = |p: &TrainableParams| -> Result<f64, TrainError> {
                let (pde, ic, data) =
                    inverse::inverse_losses(&net, p, &case, &dataset, &config, &points, None)?;
                let w = config.loss_weights;
                Ok(w.pde * pde + w.boundary * ic + w.data * data)
            };
            for (r_idx, &ad) in grad_r.iter().enumerate() {
                let mut p = params.clone();
                p.bump_log_r(r_idx, h);
                let lp = total(&p)?;
                let mut p = params.clone();
                p.bump_log_r(r_idx, -h);
                let lm = total(&p)?;
                let fd = (lp - lm) / (2.0 * h);
                worst = worst.max(rel(ad, fd, 1e-4));
                count += 1;
            }
            for (c_idx, &ad) in grad_c.iter().enumerate() {
                let mut p = params.clone();
                p.bump_log_c(c_idx, h);
                let lp = total(&p)?;
                let mut p = params.clone();
                p.bump_log_c(c_idx, -h);
                let lm = total(&p)?;
                let fd = (lp - lm) / (2.0 * h);
                worst = worst.max(rel(ad, fd, 1e-4));
                count += 1;
            }
        }
    }
    Ok((worst, count))
}

/// Run the full suite. Deterministic for a fixed seed.
pub fn run(options: &GradcheckOptions) -> Result<GradcheckReport, TrainError> {
    let (max_tangent_rel, n1) = check_tangents(options.seed);
    let (max_theta_rel, n2) = check_theta(options.seed, options.fault_injection)?;
    let (max_lambda_rel, n3) = check_lambda_residual(options.seed);
    let (max_lambda_loss_rel, n4) = check_lambda_loss(options.seed)?;
    Ok(GradcheckReport {
        max_tangent_rel,
        max_theta_rel,
        max_lambda_rel,
        max_lambda_loss_rel,
        comparisons: n1 + n2 + n3 + n4,
        pass: max_tangent_rel < TANGENT_TOL
            && max_theta_rel < THETA_TOL
            && max_lambda_rel < LAMBDA_TOL
            && max_lambda_loss_rel < LAMBDA_LOSS_TOL,
    })
}
