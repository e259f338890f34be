//! Datasets, rescaling, standardization, design matrices, and the map from
//! regression coefficients to ZOIB parameters.
//!
//! Both the mediator and the outcome get a four-component ZOIB regression:
//! logit links for the boundary masses `α`, `γ` and the interior mean `μ`,
//! a log link for the precision `φ`. Two model shapes are supported:
//!
//! - **homogeneous**: shared slopes plus a treatment column, linear
//!   predictors of the form `x'β + θ·a` (outcome rows additionally carry
//!   `+ η·m`);
//! - **heterogeneous**: one full coefficient bank per treatment arm; the
//!   design row drops the treatment column and the arm routes to its bank.

use crate::error::{Error, Result};
use crate::special::{expit, logit};
use crate::zoib::ZoibParams;
use serde::{Deserialize, Serialize};

/// Linear predictors are clamped to `[-CLAMP, CLAMP]` before the inverse
/// links: `expit` saturates past ±30 at double precision, and the clamp
/// keeps every predicted parameter strictly inside its admissible range.
pub const LINPRED_CLAMP: f64 = 30.0;

/// Left-to-right dot product.
///
/// Every prediction path in the crate sums in this fixed order, so
/// decomposed evaluations (e.g. a cached partial row plus `m·coef`) are
/// bitwise identical to full-row evaluations.
#[inline]
pub fn dot_lr(row: &[f64], coefs: &[f64]) -> f64 {
    debug_assert_eq!(row.len(), coefs.len());
    let mut s = 0.0;
    for i in 0..row.len() {
        s += row[i] * coefs[i];
    }
    s
}

/// Record of one variable's affine rescale onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleRecord {
    pub variable: String,
    pub lo: f64,
    pub hi: f64,
}

impl RescaleRecord {
    /// Width `hi - lo`; effect estimates transform back to the original
    /// scale by multiplying with this.
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Inverse transform for a *level* (not a difference).
    pub fn to_original(&self, unit_value: f64) -> f64 {
        self.lo + unit_value * self.width()
    }
}

/// Record of one covariate column's standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

/// Rescale values onto the unit interval: `(v - lo) / (hi - lo)`.
///
/// Returns the transformed vector plus the record needed to map reported
/// effects back to the original scale.
pub fn rescale_to_unit(
    values: &[f64],
    lo: f64,
    hi: f64,
    variable: &str,
) -> Result<(Vec<f64>, RescaleRecord)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!(
            "rescale bounds for '{variable}' must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let width = hi - lo;
    let mut out = Vec::with_capacity(values.len());
    for (row, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < lo || v > hi {
            return Err(Error::OutOfRange {
                row,
                message: format!("'{variable}' value {v} outside rescale range [{lo}, {hi}]"),
            });
        }
        out.push((v - lo) / width);
    }
    Ok((out, RescaleRecord { variable: variable.to_string(), lo, hi }))
}

/// Standardize covariate columns to mean 0, sd 1 (n−1 divisor).
///
/// Indicator columns from categorical expansion are standardized exactly
/// like numeric ones, so a single ridge weight treats all slopes
/// comparably.
pub fn standardize_covariates(
    columns: &mut [Vec<f64>],
    names: &[String],
) -> Result<Vec<StandardizeRecord>> {
    assert_eq!(columns.len(), names.len());
    let mut records = Vec::with_capacity(columns.len());
    for (col, name) in columns.iter_mut().zip(names) {
        let n = col.len();
        if n < 2 {
            return Err(Error::Domain(format!(
                "column '{name}' needs at least 2 rows to standardize"
            )));
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if sd == 0.0 || !sd.is_finite() {
            return Err(Error::ZeroVariance { column: name.clone() });
        }
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
        records.push(StandardizeRecord { column: name.clone(), mean, sd });
    }
    Ok(records)
}

/// Model shape: coefficient banks per arm or shared slopes plus a
/// treatment intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// One coefficient bank per treatment arm when true; otherwise shared
    /// slopes plus a treatment column.
    pub heterogeneous: bool,
    /// Optional prior scale τ. When set, fits subtract a ridge penalty
    /// `‖β_slopes‖² / (2τ²)` from the log-likelihood (a Normal(0, τ²) prior
    /// on non-intercept coefficients); when unset, fits are plain maximum
    /// likelihood.
    pub prior_sd: Option<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { heterogeneous: false, prior_sd: None }
    }
}

impl ModelSpec {
    /// The ridge weight `1/τ²` implied by `prior_sd` (0 when unset).
    /// Objectives subtract `penalty/2 · Σ β_j²` over non-intercept
    /// coefficients.
    pub fn ridge_penalty(&self) -> f64 {
        match self.prior_sd {
            Some(tau) => 1.0 / (tau * tau),
            None => 0.0,
        }
    }

    /// Number of coefficient banks per component.
    pub fn n_banks(&self) -> usize {
        if self.heterogeneous {
            2
        } else {
            1
        }
    }

    /// Width of a design row with `p` covariates (mediator rows have no
    /// mediator column; outcome rows do).
    pub fn design_width(&self, p: usize, with_mediator: bool) -> usize {
        // intercept + covariates + (treatment column if homogeneous) + (m)
        1 + p + usize::from(!self.heterogeneous) + usize::from(with_mediator)
    }

    /// Column labels of a design row, in build order.
    pub fn design_names(&self, covariate_names: &[String], with_mediator: bool) -> Vec<String> {
        let mut names = Vec::with_capacity(self.design_width(covariate_names.len(), with_mediator));
        names.push("intercept".to_string());
        names.extend(covariate_names.iter().cloned());
        if !self.heterogeneous {
            names.push("treatment".to_string());
        }
        if with_mediator {
            names.push("mediator".to_string());
        }
        names
    }
}

/// Build one design row: `[1, x..., a, m?]` (homogeneous) or `[1, x..., m?]`
/// (heterogeneous — the caller routes to the arm's coefficient bank
/// instead). Pass `m` exactly when building an outcome-model row.
pub fn build_design(spec: &ModelSpec, x: &[f64], a: u8, m: Option<f64>) -> Vec<f64> {
    let mut row = Vec::with_capacity(spec.design_width(x.len(), m.is_some()));
    row.push(1.0);
    row.extend_from_slice(x);
    if !spec.heterogeneous {
        row.push(f64::from(a));
    }
    if let Some(m) = m {
        row.push(m);
    }
    row
}

/// Coefficients for one ZOIB component: one bank (homogeneous) or two
/// banks indexed by treatment arm (heterogeneous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCoefficients {
    pub banks: Vec<Vec<f64>>,
}

impl ComponentCoefficients {
    pub fn homogeneous(coefs: Vec<f64>) -> Self {
        Self { banks: vec![coefs] }
    }

    pub fn heterogeneous(bank0: Vec<f64>, bank1: Vec<f64>) -> Self {
        Self { banks: vec![bank0, bank1] }
    }

    /// The coefficient bank serving treatment arm `a`.
    #[inline]
    pub fn bank(&self, a: u8) -> &[f64] {
        if self.banks.len() == 1 {
            &self.banks[0]
        } else {
            &self.banks[a as usize]
        }
    }
}

/// The four component coefficient sets of one ZOIB regression (for the
/// mediator model or the outcome model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub alpha: ComponentCoefficients,
    pub gamma: ComponentCoefficients,
    pub mu: ComponentCoefficients,
    pub phi: ComponentCoefficients,
}

impl RegressionCoefficients {
    pub fn components(&self) -> [(&'static str, &ComponentCoefficients); 4] {
        [
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("mu", &self.mu),
            ("phi", &self.phi),
        ]
    }
}

/// Both regressions: the mediator model and the outcome model (whose design
/// rows carry the mediator as a final column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub mediator: RegressionCoefficients,
    pub outcome: RegressionCoefficients,
}

/// Apply the four inverse links to clamped linear predictors.
///
/// Shared by [`predict_zoib_params`] and the cached-predictor fast path in
/// [`crate::gformula`], so the two are bitwise identical.
#[inline]
pub fn params_from_linear_predictors(lp_alpha: f64, lp_gamma: f64, lp_mu: f64, lp_phi: f64) -> ZoibParams {
    let c = LINPRED_CLAMP;
    ZoibParams {
        alpha: expit(lp_alpha.clamp(-c, c)),
        gamma: expit(lp_gamma.clamp(-c, c)),
        mu: expit(lp_mu.clamp(-c, c)),
        phi: lp_phi.clamp(-c, c).exp(),
    }
}

/// Predict the ZOIB parameters for one design row under one regression's
/// coefficients, routing to treatment arm `a`'s bank when heterogeneous.
pub fn predict_zoib_params(
    reg: &RegressionCoefficients,
    row: &[f64],
    a: u8,
) -> Result<ZoibParams> {
    let mut lp = [0.0_f64; 4];
    for (slot, (name, comp)) in lp.iter_mut().zip(reg.components()) {
        let v = dot_lr(row, comp.bank(a));
        if !v.is_finite() {
            return Err(Error::NonFinitePredictor { component: name.to_string() });
        }
        *slot = v;
    }
    Ok(params_from_linear_predictors(lp[0], lp[1], lp[2], lp[3]))
}

/// Observations on the unit scale plus the records needed to report
/// effects on the original scale. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    covariates: Vec<Vec<f64>>, // row-major, N×p
    treatment: Vec<u8>,
    mediator: Vec<f64>,
    outcome: Vec<f64>,
    column_names: Vec<String>,
    rescale_records: Vec<RescaleRecord>,
}

impl Dataset {
    pub fn new(
        covariates: Vec<Vec<f64>>,
        treatment: Vec<u8>,
        mediator: Vec<f64>,
        outcome: Vec<f64>,
        column_names: Vec<String>,
        rescale_records: Vec<RescaleRecord>,
    ) -> Result<Self> {
        let n = treatment.len();
        if covariates.len() != n || mediator.len() != n || outcome.len() != n {
            return Err(Error::Domain(format!(
                "row counts disagree: {} covariate rows, {} treatments, {} mediators, {} outcomes",
                covariates.len(),
                n,
                mediator.len(),
                outcome.len()
            )));
        }
        if n == 0 {
            return Err(Error::Domain("dataset has no rows".into()));
        }
        let p = column_names.len();
        for (row, x) in covariates.iter().enumerate() {
            if x.len() != p {
                return Err(Error::OutOfRange {
                    row,
                    message: format!("covariate row has {} values, expected {p}", x.len()),
                });
            }
            if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::OutOfRange {
                    row,
                    message: format!("non-finite covariate value {bad}"),
                });
            }
        }
        for (row, &a) in treatment.iter().enumerate() {
            if a > 1 {
                return Err(Error::OutOfRange {
                    row,
                    message: format!("treatment must be 0 or 1, got {a}"),
                });
            }
        }
        for (label, vals) in [("mediator", &mediator), ("outcome", &outcome)] {
            for (row, &v) in vals.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        row,
                        message: format!("{label} value {v} outside [0,1]"),
                    });
                }
            }
        }
        let treated = treatment.iter().filter(|&&a| a == 1).count();
        if treated == 0 || treated == n {
            let empty = if treated == 0 { 1 } else { 0 };
            return Err(Error::Ingest(format!(
                "treatment arm {empty} is empty; both treated and control observations are \
                 required (overlap condition)"
            )));
        }
        Ok(Self { covariates, treatment, mediator, outcome, column_names, rescale_records })
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.column_names.len()
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        &self.covariates[i]
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn mediator(&self) -> &[f64] {
        &self.mediator
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rescale_records(&self) -> &[RescaleRecord] {
        &self.rescale_records
    }

    /// The rescale record for a variable, if that variable was rescaled.
    pub fn rescale_for(&self, variable: &str) -> Option<&RescaleRecord> {
        self.rescale_records.iter().find(|r| r.variable == variable)
    }

    /// A new dataset holding the given resampled row indices (with
    /// replacement); rescale records carry over.
    pub fn resample(&self, indices: &[usize]) -> Self {
        Self {
            covariates: indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
            mediator: indices.iter().map(|&i| self.mediator[i]).collect(),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            column_names: self.column_names.clone(),
            rescale_records: self.rescale_records.clone(),
        }
    }
}

/// Observed boundary-mass and interior-moment summary for one variable,
/// split by treatment arm — the numeric stand-in for density-overlay
/// diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub variable: String,
    pub arm: u8,
    pub n: usize,
    pub prop_zero: f64,
    pub prop_one: f64,
    pub interior_mean: f64,
    pub interior_sd: f64,
}

/// Per-arm boundary proportions and interior moments of one variable.
pub fn boundary_summary(variable: &str, values: &[f64], treatment: &[u8]) -> Vec<BoundarySummary> {
    let mut out = Vec::with_capacity(2);
    for arm in 0..2u8 {
        let vals: Vec<f64> = values
            .iter()
            .zip(treatment)
            .filter(|(_, &a)| a == arm)
            .map(|(&v, _)| v)
            .collect();
        let n = vals.len();
        let zeros = vals.iter().filter(|&&v| v == 0.0).count();
        let ones = vals.iter().filter(|&&v| v == 1.0).count();
        let interior: Vec<f64> = vals.iter().copied().filter(|&v| v > 0.0 && v < 1.0).collect();
        let m = interior.len();
        let mean = if m > 0 { interior.iter().sum::<f64>() / m as f64 } else { f64::NAN };
        let sd = if m > 1 {
            (interior.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0))
                .sqrt()
        } else {
            f64::NAN
        };
        out.push(BoundarySummary {
            variable: variable.to_string(),
            arm,
            n,
            prop_zero: zeros as f64 / n.max(1) as f64,
            prop_one: ones as f64 / n.max(1) as f64,
            interior_mean: mean,
            interior_sd: sd,
        });
    }
    out
}

/// Intercept-only coefficient vectors matching a spec's design widths —
/// convenience for tests and the simulation harness.
pub fn intercept_only_regression(
    spec: &ModelSpec,
    p: usize,
    with_mediator: bool,
    alpha: f64,
    gamma: f64,
    mu: f64,
    phi: f64,
) -> RegressionCoefficients {
    let width = spec.design_width(p, with_mediator);
    let make = |value: f64| {
        let mut v = vec![0.0; width];
        v[0] = value;
        ComponentCoefficients { banks: vec![v; spec.n_banks()] }
    };
    RegressionCoefficients {
        alpha: make(logit(alpha)),
        gamma: make(logit(gamma)),
        mu: make(logit(mu)),
        phi: make(phi.ln()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_examples() {
        let (v, rec) = rescale_to_unit(&[1.0, 5.0, 3.0], 1.0, 5.0, "score").unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.5]);
        assert_eq!(rec.width(), 4.0);
        // Out-of-range value rejected with its row index.
        let err = rescale_to_unit(&[1.0, 5.1], 1.0, 5.0, "score").unwrap_err();
        match err {
            Error::OutOfRange { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rescale_roundtrip() {
        let orig = vec![1.0, 2.3, 4.9, 5.0, 3.1415];
        let (unit, rec) = rescale_to_unit(&orig, 1.0, 5.0, "v").unwrap();
        for (u, o) in unit.iter().zip(&orig) {
            assert!((rec.to_original(*u) - o).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_examples() {
        let mut cols = vec![vec![1.0, 2.0, 3.0]];
        let recs = standardize_covariates(&mut cols, &["a".to_string()]).unwrap();
        assert_eq!(cols[0], vec![-1.0, 0.0, 1.0]);
        assert_eq!(recs[0].mean, 2.0);
        assert_eq!(recs[0].sd, 1.0);
        // Already standardized → unchanged (mean exactly 0, sd exactly 1).
        let mut again = cols.clone();
        standardize_covariates(&mut again, &["a".to_string()]).unwrap();
        assert_eq!(again[0], cols[0]);
        // Constant column → error naming the column.
        let mut bad = vec![vec![2.0, 2.0, 2.0]];
        match standardize_covariates(&mut bad, &["flat".to_string()]) {
            Err(Error::ZeroVariance { column }) => assert_eq!(column, "flat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn build_design_examples() {
        let homog = ModelSpec::default();
        assert_eq!(build_design(&homog, &[0.2], 1, Some(0.5)), vec![1.0, 0.2, 1.0, 0.5]);
        assert_eq!(build_design(&homog, &[0.2, -1.0], 0, None), vec![1.0, 0.2, -1.0, 0.0]);
        let het = ModelSpec { heterogeneous: true, prior_sd: None };
        assert_eq!(build_design(&het, &[0.2], 1, Some(0.5)), vec![1.0, 0.2, 0.5]);
    }

    #[test]
    fn predict_examples() {
        let spec = ModelSpec::default();
        // All-zero coefficients → (0.5, 0.5, 0.5, 1.0).
        let zero = intercept_only_regression(&spec, 1, false, 0.5, 0.5, 0.5, 1.0);
        let row = build_design(&spec, &[0.3], 1, None);
        let params = predict_zoib_params(&zero, &row, 1).unwrap();
        assert_eq!(
            (params.alpha, params.gamma, params.mu, params.phi),
            (0.5, 0.5, 0.5, 1.0)
        );
        // Intercept logit(0.3) → α = 0.3; φ intercept ln 3 → φ = 3.
        let reg = intercept_only_regression(&spec, 1, false, 0.3, 0.5, 0.5, 3.0);
        let params = predict_zoib_params(&reg, &row, 1).unwrap();
        assert!((params.alpha - 0.3).abs() < 1e-15);
        assert!((params.phi - 3.0).abs() < 1e-14);
        // Non-finite predictor names the component.
        let mut bad = reg.clone();
        bad.mu.banks[0][1] = f64::NAN;
        match predict_zoib_params(&bad, &row, 1) {
            Err(Error::NonFinitePredictor { component }) => assert_eq!(component, "mu"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heterogeneous_routing_and_equivalence() {
        // Bank routing: arm 1 selects bank 1; bank 0 untouched.
        let het = ModelSpec { heterogeneous: true, prior_sd: None };
        let reg = RegressionCoefficients {
            alpha: ComponentCoefficients::heterogeneous(vec![logit(0.2), 0.0], vec![logit(0.4), 0.0]),
            gamma: ComponentCoefficients::heterogeneous(vec![0.0, 0.0], vec![0.0, 0.0]),
            mu: ComponentCoefficients::heterogeneous(vec![0.0, 0.0], vec![0.0, 0.0]),
            phi: ComponentCoefficients::heterogeneous(vec![0.0, 0.0], vec![0.0, 0.0]),
        };
        let row = build_design(&het, &[0.7], 1, None);
        assert!((predict_zoib_params(&reg, &row, 1).unwrap().alpha - 0.4).abs() < 1e-15);
        assert!((predict_zoib_params(&reg, &row, 0).unwrap().alpha - 0.2).abs() < 1e-15);

        // Homogeneous with zero treatment coefficient == heterogeneous with
        // equal banks, exactly.
        let homog = ModelSpec::default();
        let slopes = vec![0.4, -0.9, 0.0]; // intercept, x, treatment(=0)
        let hom = RegressionCoefficients {
            alpha: ComponentCoefficients::homogeneous(slopes.clone()),
            gamma: ComponentCoefficients::homogeneous(vec![-0.2, 0.3, 0.0]),
            mu: ComponentCoefficients::homogeneous(vec![0.1, 1.2, 0.0]),
            phi: ComponentCoefficients::homogeneous(vec![0.8, -0.5, 0.0]),
        };
        let bank = |v: &[f64]| vec![v[0], v[1]];
        let het_reg = RegressionCoefficients {
            alpha: ComponentCoefficients::heterogeneous(bank(&hom.alpha.banks[0]), bank(&hom.alpha.banks[0])),
            gamma: ComponentCoefficients::heterogeneous(bank(&hom.gamma.banks[0]), bank(&hom.gamma.banks[0])),
            mu: ComponentCoefficients::heterogeneous(bank(&hom.mu.banks[0]), bank(&hom.mu.banks[0])),
            phi: ComponentCoefficients::heterogeneous(bank(&hom.phi.banks[0]), bank(&hom.phi.banks[0])),
        };
        for x in [-1.5, 0.0, 0.73] {
            for a in 0..2u8 {
                let hrow = build_design(&homog, &[x], a, None);
                let erow = build_design(&het, &[x], a, None);
                let ph = predict_zoib_params(&hom, &hrow, a).unwrap();
                let pe = predict_zoib_params(&het_reg, &erow, a).unwrap();
                assert_eq!(ph, pe, "x={x} a={a}");
            }
        }
    }

    #[test]
    fn dataset_validation() {
        let make = |treatment: Vec<u8>, mediator: Vec<f64>| {
            Dataset::new(
                vec![vec![0.0]; treatment.len()],
                treatment,
                mediator.clone(),
                mediator,
                vec!["x".to_string()],
                vec![],
            )
        };
        assert!(make(vec![0, 1], vec![0.5, 0.5]).is_ok());
        // Mediator outside [0,1] → row-indexed rejection.
        match make(vec![0, 1], vec![0.5, 1.2]) {
            Err(Error::OutOfRange { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        // An empty arm is rejected, citing overlap.
        match make(vec![1, 1], vec![0.5, 0.5]) {
            Err(Error::Ingest(msg)) => assert!(msg.contains("overlap"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_summary_counts() {
        let values = vec![0.0, 1.0, 0.5, 0.25, 0.0, 0.75];
        let arms = vec![0, 0, 0, 1, 1, 1];
        let summaries = boundary_summary("m", &values, &arms);
        assert_eq!(summaries[0].n, 3);
        assert!((summaries[0].prop_zero - 1.0 / 3.0).abs() < 1e-15);
        assert!((summaries[0].prop_one - 1.0 / 3.0).abs() < 1e-15);
        assert!((summaries[1].interior_mean - 0.5).abs() < 1e-15);
    }
}
