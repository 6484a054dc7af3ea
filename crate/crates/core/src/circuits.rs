//! Parallel-RC circuit family: analytical current solutions and ODE residuals.
//!
//! A case consists of a DC source `u_dc`, an optional pure-resistive branch
//! `r0`, and one or more series-RC branches in parallel. The total current is
//!
//! ```text
//! I(t) = u_dc/r0 + sum_i (u_dc/r_i) * exp(-t / (r_i * c_i))
//! ```
//!
//! with the `u_dc/r0` term absent when there is no resistive branch. The
//! associated first-order ODEs come in two formulations: `raw` operates on
//! the current itself, `log` on `u = ln(I)` (per branch component for cases
//! with more than one RC branch).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("u_dc must be strictly positive and finite, got {0}")]
    InvalidVoltage(f64),
    #[error("resistance must be strictly positive and finite, got {0}")]
    InvalidResistance(f64),
    #[error("capacitance must be strictly positive and finite, got {0}")]
    InvalidCapacitance(f64),
    #[error("a case without r0 must have exactly one RC branch, got {0}")]
    CaseZeroBranchCount(usize),
    #[error("a case must have at least one RC branch")]
    NoBranches,
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("t_end must be strictly positive and finite, got {0}")]
    InvalidTimeDomain(f64),
    #[error("single-residual raw form only covers cases with one RC branch; case {label} has {branches} (use the per-branch form)")]
    UnsupportedCase { label: String, branches: usize },
    #[error("per-branch form needs at least two RC branches; case {label} has {branches}")]
    TooFewBranches { label: String, branches: usize },
    #[error("expected {expected} branch components, got {got}")]
    ComponentCountMismatch { expected: usize, got: usize },
}

/// One series-RC branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcBranch {
    pub r: f64,
    pub c: f64,
}

impl RcBranch {
    /// Branch time constant `tau = r * c`.
    pub fn tau(&self) -> f64 {
        self.r * self.c
    }
}

/// A parallel-RC circuit driven by a DC source.
///
/// Case 0 has no resistive branch and exactly one RC branch; case `k >= 1`
/// has a resistive branch and `k` RC branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UncheckedCase")]
pub struct CircuitCase {
    pub u_dc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub branches: Vec<RcBranch>,
    pub label: String,
}

/// Unvalidated mirror of [`CircuitCase`] used as the serde entry point so a
/// deserialized case always satisfies the invariants.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UncheckedCase {
    u_dc: f64,
    #[serde(default)]
    r0: Option<f64>,
    branches: Vec<RcBranch>,
    #[serde(default)]
    label: Option<String>,
}

impl TryFrom<UncheckedCase> for CircuitCase {
    type Error = CircuitError;

    fn try_from(raw: UncheckedCase) -> Result<Self, CircuitError> {
        let label = raw
            .label
            .unwrap_or_else(|| default_label(raw.r0.is_some(), raw.branches.len()));
        CircuitCase::new(raw.u_dc, raw.r0, raw.branches, label)
    }
}

fn default_label(has_r0: bool, branches: usize) -> String {
    if has_r0 {
        format!("case{branches}")
    } else {
        "case0".to_string()
    }
}

fn check_positive(x: f64, err: impl Fn(f64) -> CircuitError) -> Result<f64, CircuitError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(err(x))
    }
}

impl CircuitCase {
    pub fn new(
        u_dc: f64,
        r0: Option<f64>,
        branches: Vec<RcBranch>,
        label: impl Into<String>,
    ) -> Result<Self, CircuitError> {
        check_positive(u_dc, CircuitError::InvalidVoltage)?;
        if let Some(r0) = r0 {
            check_positive(r0, CircuitError::InvalidResistance)?;
        }
        if branches.is_empty() {
            return Err(CircuitError::NoBranches);
        }
        if r0.is_none() && branches.len() != 1 {
            return Err(CircuitError::CaseZeroBranchCount(branches.len()));
        }
        for b in &branches {
            check_positive(b.r, CircuitError::InvalidResistance)?;
            check_positive(b.c, CircuitError::InvalidCapacitance)?;
            check_positive(b.tau(), CircuitError::InvalidCapacitance)?;
        }
        Ok(Self {
            u_dc,
            r0,
            branches,
            label: label.into(),
        })
    }

    /// Canonical test fixtures with well-separated time constants (1, 10,
    /// 100 s): case 0 = (1 V, 1 Ohm, 1 F); case 1 adds r0 = 10; case 2 adds
    /// (2 Ohm, 5 F); case 3 adds (5 Ohm, 20 F).
    pub fn fixture(k: usize) -> Self {
        let all = [
            RcBranch { r: 1.0, c: 1.0 },
            RcBranch { r: 2.0, c: 5.0 },
            RcBranch { r: 5.0, c: 20.0 },
        ];
        let (r0, branches) = if k == 0 {
            (None, all[..1].to_vec())
        } else {
            (Some(10.0), all[..k.min(3)].to_vec())
        };
        Self::new(1.0, r0, branches, format!("case{k}")).expect("fixture is valid")
    }

    /// Number of network output components used by both residual
    /// formulations: one scalar for cases 0 and 1, one per RC branch when
    /// there are two or more (the first combines r0 with the first branch).
    pub fn component_count(&self) -> usize {
        self.branches.len().max(1)
    }
}

/// Training/evaluation time domain `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeDomain {
    t_end: f64,
}

impl TimeDomain {
    pub fn new(t_end: f64) -> Result<Self, CircuitError> {
        if t_end.is_finite() && t_end > 0.0 {
            Ok(Self { t_end })
        } else {
            Err(CircuitError::InvalidTimeDomain(t_end))
        }
    }

    pub fn t_start(&self) -> f64 {
        0.0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Map `t` to the network input range `[-1, 1]`.
    pub fn scale(&self, t: f64) -> f64 {
        2.0 * t / self.t_end - 1.0
    }

    /// Chain-rule factor `d(t_scaled)/dt` applied to network tangents.
    pub fn scale_rate(&self) -> f64 {
        2.0 / self.t_end
    }

    pub fn contains(&self, t: f64) -> bool {
        (0.0..=self.t_end).contains(&t)
    }
}

impl TryFrom<f64> for TimeDomain {
    type Error = CircuitError;
    fn try_from(t_end: f64) -> Result<Self, CircuitError> {
        Self::new(t_end)
    }
}

impl From<TimeDomain> for f64 {
    fn from(d: TimeDomain) -> f64 {
        d.t_end
    }
}

/// Residual formulation: `raw` penalizes the ODE in the current itself,
/// `log` in `u = ln(I)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Raw,
    Log,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Raw => write!(f, "raw"),
            Formulation::Log => write!(f, "log"),
        }
    }
}

fn check_time(t: f64) -> Result<(), CircuitError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CircuitError::NegativeTime(t))
    }
}

/// Total current at time `t`: the closed-form solution of the case ODEs.
pub fn analytical_current(case: &CircuitCase, t: f64) -> Result<f64, CircuitError> {
    check_time(t)?;
    let resistive = case.r0.map_or(0.0, |r0| case.u_dc / r0);
    let transient: f64 = case
        .branches
        .iter()
        .map(|b| case.u_dc / b.r * (-t / b.tau()).exp())
        .sum();
    Ok(resistive + transient)
}

/// `ln` of the total current; well-defined because the current is strictly
/// positive for every valid case.
pub fn analytical_log_current(case: &CircuitCase, t: f64) -> Result<f64, CircuitError> {
    Ok(analytical_current(case, t)?.ln())
}

/// Per-component closed forms: component 0 is `u_dc/r0 + (u_dc/r1) e^{-t/tau1}`
/// (the resistive term absent for case 0), component `j >= 1` is the bare
/// branch current `(u_dc/r_{j+1}) e^{-t/tau_{j+1}}`.
pub fn analytical_components(case: &CircuitCase, t: f64) -> Result<Vec<f64>, CircuitError> {
    check_time(t)?;
    let mut out = Vec::with_capacity(case.component_count());
    for (j, b) in case.branches.iter().enumerate() {
        let mut v = case.u_dc / b.r * (-t / b.tau()).exp();
        if j == 0 {
            v += case.r0.map_or(0.0, |r0| case.u_dc / r0);
        }
        out.push(v);
    }
    Ok(out)
}

/// Time derivatives of [`analytical_components`].
pub fn analytical_components_deriv(case: &CircuitCase, t: f64) -> Result<Vec<f64>, CircuitError> {
    check_time(t)?;
    Ok(case
        .branches
        .iter()
        .map(|b| -case.u_dc / (b.r * b.tau()) * (-t / b.tau()).exp())
        .collect())
}

/// Single-residual raw form, valid for cases 0 and 1 only:
/// case 0 `dI/dt + I/(RC)`, case 1 `dI/dt + (I - u_dc/r0)/(R1 C1)`.
pub fn residual_raw(case: &CircuitCase, t: f64, i: f64, di_dt: f64) -> Result<f64, CircuitError> {
    check_time(t)?;
    if case.branches.len() > 1 {
        return Err(CircuitError::UnsupportedCase {
            label: case.label.clone(),
            branches: case.branches.len(),
        });
    }
    Ok(component_partials(case, 0, i, di_dt, Formulation::Raw).residual)
}

/// Per-branch raw residuals for cases with two or more RC branches. The
/// first component carries the case-1 residual (r0 folded in), every later
/// component satisfies its own bare-branch ODE.
pub fn residual_raw_multi(
    case: &CircuitCase,
    t: f64,
    i_components: &[f64],
    di_dt_components: &[f64],
) -> Result<Vec<f64>, CircuitError> {
    check_time(t)?;
    multi_residuals(case, i_components, di_dt_components, Formulation::Raw)
}

/// Log-form residual, valid for cases 0 and 1: case 0 `du/dt + 1/(RC)`,
/// case 1 `du/dt + (1 - (u_dc/r0) e^{-u})/(R1 C1)`. This is the raw residual
/// under `I = e^u`, divided by `e^u`, so both forms share their zero set.
pub fn residual_log(case: &CircuitCase, t: f64, u: f64, du_dt: f64) -> Result<f64, CircuitError> {
    check_time(t)?;
    if case.branches.len() > 1 {
        return Err(CircuitError::UnsupportedCase {
            label: case.label.clone(),
            branches: case.branches.len(),
        });
    }
    Ok(component_partials(case, 0, u, du_dt, Formulation::Log).residual)
}

/// Per-branch log residuals (the log transform applied to each component).
pub fn residual_log_multi(
    case: &CircuitCase,
    t: f64,
    u_components: &[f64],
    du_dt_components: &[f64],
) -> Result<Vec<f64>, CircuitError> {
    check_time(t)?;
    multi_residuals(case, u_components, du_dt_components, Formulation::Log)
}

fn multi_residuals(
    case: &CircuitCase,
    values: &[f64],
    derivs: &[f64],
    formulation: Formulation,
) -> Result<Vec<f64>, CircuitError> {
    let n = case.component_count();
    if case.branches.len() < 2 {
        return Err(CircuitError::TooFewBranches {
            label: case.label.clone(),
            branches: case.branches.len(),
        });
    }
    if values.len() != n || derivs.len() != n {
        return Err(CircuitError::ComponentCountMismatch {
            expected: n,
            got: values.len().max(derivs.len()),
        });
    }
    Ok((0..n)
        .map(|j| component_partials(case, j, values[j], derivs[j], formulation).residual)
        .collect())
}

/// Current at `t = 0`: `u_dc/r0 + sum_i u_dc/r_i`.
pub fn initial_current(case: &CircuitCase) -> f64 {
    case.r0.map_or(0.0, |r0| case.u_dc / r0)
        + case.branches.iter().map(|b| case.u_dc / b.r).sum::<f64>()
}

/// Per-component values at `t = 0` (the IC targets for multi-output nets),
/// in the raw formulation.
pub fn initial_components(case: &CircuitCase) -> Vec<f64> {
    analytical_components(case, 0.0).expect("t = 0 is valid")
}

/// A residual together with its partial derivatives with respect to the
/// component value and its time derivative. These partials are what the
/// training loop chains through the network gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPartials {
    pub residual: f64,
    /// d(residual)/d(value), where value is `I_j` (raw) or `u_j` (log).
    pub d_value: f64,
    /// d(residual)/d(dvalue/dt).
    pub d_deriv: f64,
}

/// Residual of component `j` with partials, for either formulation.
///
/// Component 0 folds in the resistive branch when present; components
/// `j >= 1` are bare RC branches. Callers must pass `j < component_count()`.
pub fn component_partials(
    case: &CircuitCase,
    j: usize,
    value: f64,
    deriv: f64,
    formulation: Formulation,
) -> ResidualPartials {
    let b = &case.branches[j];
    let inv_tau = 1.0 / b.tau();
    let steady = if j == 0 {
        case.r0.map_or(0.0, |r0| case.u_dc / r0)
    } else {
        0.0
    };
    match formulation {
        Formulation::Raw => ResidualPartials {
            residual: deriv + inv_tau * (value - steady),
            d_value: inv_tau,
            d_deriv: 1.0,
        },
        Formulation::Log => {
            if steady == 0.0 {
                ResidualPartials {
                    residual: deriv + inv_tau,
                    d_value: 0.0,
                    d_deriv: 1.0,
                }
            } else {
                let exp_neg_u = (-value).exp();
                ResidualPartials {
                    residual: deriv + inv_tau * (1.0 - steady * exp_neg_u),
                    d_value: inv_tau * steady * exp_neg_u,
                    d_deriv: 1.0,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn case0_current_at_zero_is_udc_over_r() {
        let case = CircuitCase::fixture(0);
        assert_eq!(analytical_current(&case, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn case0_current_at_one_second() {
        let case = CircuitCase::fixture(0);
        let i = analytical_current(&case, 1.0).unwrap();
        assert!((i - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn case1_limit_is_resistive_current() {
        let case = CircuitCase::fixture(1);
        let i = analytical_current(&case, 1e6).unwrap();
        assert!((i - 0.1).abs() < 1e-12);
    }

    #[test]
    fn case2_current_at_zero() {
        let case = CircuitCase::fixture(2);
        let i = analytical_current(&case, 0.0).unwrap();
        assert!((i - 1.6).abs() < 1e-15);
    }

    #[test]
    fn negative_time_is_domain_error() {
        let case = CircuitCase::fixture(0);
        assert!(matches!(
            analytical_current(&case, -0.5),
            Err(CircuitError::NegativeTime(_))
        ));
        assert!(matches!(
            analytical_log_current(&case, -0.5),
            Err(CircuitError::NegativeTime(_))
        ));
    }

    #[test]
    fn log_current_case0() {
        let case = CircuitCase::fixture(0);
        assert_eq!(analytical_log_current(&case, 0.0).unwrap(), 0.0);
        // ln I = -t exactly for the (1,1,1) fixture
        assert!((analytical_log_current(&case, 3.0).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_current_case1_at_zero() {
        let case = CircuitCase::fixture(1);
        let u = analytical_log_current(&case, 0.0).unwrap();
        assert!((u - 1.1f64.ln()).abs() < 1e-15);
        assert!((u - 0.0953102).abs() < 1e-7);
    }

    #[test]
    fn residual_raw_annihilates_analytical_case0() {
        let case = CircuitCase::fixture(0);
        let i = (-1.0f64).exp();
        let r = residual_raw(&case, 1.0, i, -i).unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn residual_raw_constant_current_case0() {
        let case = CircuitCase::fixture(0);
        assert_eq!(residual_raw(&case, 4.2, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn residual_raw_steady_state_case1() {
        let case = CircuitCase::fixture(1);
        assert_eq!(residual_raw(&case, 0.0, 0.1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn residual_raw_rejects_multibranch_cases() {
        let case = CircuitCase::fixture(2);
        assert!(matches!(
            residual_raw(&case, 0.0, 1.0, 0.0),
            Err(CircuitError::UnsupportedCase { .. })
        ));
    }

    #[test]
    fn residual_raw_multi_annihilates_case2_components() {
        // Components of the case-2 fixture at t = 0: I01 = 1.1 with slope -1,
        // I2 = 0.5 with slope -0.05.
        let case = CircuitCase::fixture(2);
        let rs = residual_raw_multi(&case, 0.0, &[1.1, 0.5], &[-1.0, -0.05]).unwrap();
        assert!(rs.iter().all(|r| r.abs() < 1e-15), "{rs:?}");
    }

    #[test]
    fn residual_raw_multi_second_branch_formula() {
        let case = CircuitCase::fixture(2);
        let rs = residual_raw_multi(&case, 0.0, &[1.1, 1.0], &[-1.0, 0.0]).unwrap();
        assert!((rs[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn residual_raw_multi_length_mismatch() {
        let case = CircuitCase::fixture(2);
        assert!(matches!(
            residual_raw_multi(&case, 0.0, &[1.0], &[0.0]),
            Err(CircuitError::ComponentCountMismatch { .. })
        ));
    }

    #[test]
    fn residual_raw_multi_needs_two_branches() {
        let case = CircuitCase::fixture(1);
        assert!(matches!(
            residual_raw_multi(&case, 0.0, &[1.0], &[0.0]),
            Err(CircuitError::TooFewBranches { .. })
        ));
    }

    #[test]
    fn residual_log_case0_ignores_u() {
        let case = CircuitCase::fixture(0);
        for u in [-3.0, 0.0, 7.5] {
            assert_eq!(residual_log(&case, 1.0, u, -1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn residual_log_is_inverse_tau() {
        let case = CircuitCase::new(1.0, None, vec![RcBranch { r: 2.0, c: 3.0 }], "c").unwrap();
        let r = residual_log(&case, 0.0, 0.0, 0.0).unwrap();
        assert!((r - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn residual_log_case1_steady_state() {
        let case = CircuitCase::fixture(1);
        let r = residual_log(&case, 0.0, 0.1f64.ln(), 0.0).unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn initial_current_fixtures() {
        assert_eq!(initial_current(&CircuitCase::fixture(0)), 1.0);
        assert!((initial_current(&CircuitCase::fixture(1)) - 1.1).abs() < 1e-15);
        assert!((initial_current(&CircuitCase::fixture(3)) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn oracle_annihilation_all_fixtures_dense_grid() {
        for k in 0..=3 {
            let case = CircuitCase::fixture(k);
            for &t in &dense_grid(10.0, 257) {
                let comps = analytical_components(&case, t).unwrap();
                let derivs = analytical_components_deriv(&case, t).unwrap();
                if case.branches.len() == 1 {
                    let i = comps[0];
                    let di = derivs[0];
                    assert!(residual_raw(&case, t, i, di).unwrap().abs() < 1e-12);
                    assert!(residual_log(&case, t, i.ln(), di / i).unwrap().abs() < 1e-12);
                } else {
                    let raw = residual_raw_multi(&case, t, &comps, &derivs).unwrap();
                    assert!(raw.iter().all(|r| r.abs() < 1e-12), "case {k} t {t}");
                    let us: Vec<f64> = comps.iter().map(|v| v.ln()).collect();
                    let dus: Vec<f64> = comps.iter().zip(&derivs).map(|(v, d)| d / v).collect();
                    let log = residual_log_multi(&case, t, &us, &dus).unwrap();
                    assert!(log.iter().all(|r| r.abs() < 1e-12), "case {k} t {t}");
                }
            }
        }
    }

    #[test]
    fn sum_of_components_matches_total_current() {
        for k in 0..=3 {
            let case = CircuitCase::fixture(k);
            for &t in &dense_grid(10.0, 101) {
                let total = analytical_current(&case, t).unwrap();
                let sum: f64 = analytical_components(&case, t).unwrap().iter().sum();
                assert!((total - sum).abs() <= 1e-12 * total.abs());
            }
        }
    }

    #[test]
    fn asymptote_above_resistive_floor() {
        let case = CircuitCase::fixture(2);
        for &t in &dense_grid(300.0, 301) {
            assert!(analytical_current(&case, t).unwrap() >= 0.1);
        }
    }

    #[test]
    fn invariants_rejected() {
        assert!(CircuitCase::new(0.0, None, vec![RcBranch { r: 1.0, c: 1.0 }], "x").is_err());
        assert!(CircuitCase::new(1.0, Some(-1.0), vec![RcBranch { r: 1.0, c: 1.0 }], "x").is_err());
        assert!(CircuitCase::new(1.0, None, vec![], "x").is_err());
        assert!(
            CircuitCase::new(1.0, None, vec![RcBranch { r: 1.0, c: 1.0 }; 2], "x").is_err(),
            "no r0 with two branches must be rejected"
        );
        assert!(
            CircuitCase::new(1.0, Some(1.0), vec![RcBranch { r: 1.0, c: f64::NAN }], "x").is_err()
        );
    }

    #[test]
    fn case_json_round_trip() {
        let case = CircuitCase::fixture(1);
        let json = serde_json::to_string(&case).unwrap();
        let back: CircuitCase = serde_json::from_str(&json).unwrap();
        assert_eq!(case, back);
        // r0 omitted means case 0; unknown keys are rejected
        let c0: CircuitCase =
            serde_json::from_str(r#"{"u_dc": 1.0, "branches": [{"r": 1.0, "c": 1.0}]}"#).unwrap();
        assert!(c0.r0.is_none());
        assert_eq!(c0.label, "case0");
        assert!(serde_json::from_str::<CircuitCase>(
            r#"{"u_dc": 1.0, "branches": [{"r": 1.0, "c": 1.0}], "voltage": 2.0}"#
        )
        .is_err());
    }

    #[test]
    fn invalid_json_case_rejected() {
        let err = serde_json::from_str::<CircuitCase>(
            r#"{"u_dc": 1.0, "branches": [{"r": -1.0, "c": 1.0}]}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn time_domain_validation() {
        assert!(TimeDomain::new(10.0).is_ok());
        assert!(TimeDomain::new(0.0).is_err());
        assert!(TimeDomain::new(-3.0).is_err());
        assert!(TimeDomain::new(f64::INFINITY).is_err());
        let d = TimeDomain::new(10.0).unwrap();
        assert_eq!(d.scale(0.0), -1.0);
        assert_eq!(d.scale(10.0), 1.0);
        assert_eq!(d.scale_rate(), 0.2);
    }
}
