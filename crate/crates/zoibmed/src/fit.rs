//! Maximum-likelihood estimation of the mediator and outcome ZOIB
//! regressions.
//!
//! The ZOIB likelihood factorizes exactly into three independent pieces
//! (Bernoulli for the zero mass over all rows, Bernoulli for the
//! conditional one mass over nonzero rows, beta regression over interior
//! rows), so each regression is fitted as three logistic components plus a
//! joint `(β_μ, β_φ)` beta-regression component. All fits share one
//! quasi-Newton (BFGS) optimizer with Armijo backtracking and analytic
//! gradients. An optional ridge penalty `‖β_slopes‖²/(2τ²)` stands in for
//! a Normal(0, τ²) prior on non-intercept coefficients.
//!
//! Fit objectives use *unclamped* linear predictors — clamping would break
//! gradient fidelity; prediction paths clamp separately (see
//! [`crate::model::LINPRED_CLAMP`]). Instead, logistic components guard
//! against separation by erroring when any coefficient magnitude exceeds
//! the clamp bound under a zero penalty.

use crate::error::{Error, Result};
use crate::model::{
    build_design, dot_lr, CoefficientSet, ComponentCoefficients, Dataset, ModelSpec,
    RegressionCoefficients, LINPRED_CLAMP,
};
use crate::rngutil::{cell_seed, derive_seed, derived_rng, tags};
use crate::special::{digamma, expit, ln_gamma, logit, softplus, trigamma};
use crate::zoib::INTERIOR_LOG_CLAMP;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gradient sup-norm below which a component fit is declared converged.
pub const GRAD_TOL: f64 = 1e-8;

/// Iteration cap per component fit.
pub const MAX_ITER: usize = 500;

/// Both fitted regressions plus fit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModels {
    pub coefficients: CoefficientSet,
    pub spec: ModelSpec,
    /// Total log-likelihood: the sum over both models of their component
    /// log-likelihoods (exact, by the ZOIB factorization).
    pub loglik: f64,
    pub converged: bool,
    /// Optimizer iteration counts, one entry per component fit.
    pub component_iterations: Vec<(String, usize)>,
    /// Degenerate-class and other non-fatal notices.
    pub warnings: Vec<String>,
}

/// Result of one logistic component fit.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub coefficients: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    /// Gradient sup-norm at the optimum; NaN when the degenerate-class
    /// rule fixed the coefficients instead of optimizing.
    pub grad_norm: f64,
    pub degenerate: bool,
}

/// Result of one joint beta-regression component fit.
#[derive(Debug, Clone)]
pub struct BetaFit {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// A bootstrap ensemble of refitted models.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    /// Successful replicates, in replicate order.
    pub replicates: Vec<FittedModels>,
    /// The seed of every attempted replicate, successful or not.
    pub seeds: Vec<u64>,
    /// Requested replicate count.
    pub b: usize,
    /// Failed replicates: (replicate index, reason). Excluded from
    /// `replicates`.
    pub failures: Vec<(usize, String)>,
}

// ---------------------------------------------------------------------------
// Generic minimizer
// ---------------------------------------------------------------------------

struct Minimized {
    x: DVector<f64>,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    bound_exceeded: bool,
    trace: Vec<f64>,
}

/// Damped Newton with Armijo backtracking.
///
/// `fg` returns the objective and its gradient; `hess` its Hessian
/// (observed information plus any penalty). When the Hessian is not
/// positive definite, a Levenberg shift `τI` is escalated until Cholesky
/// succeeds, which keeps every search direction a descent direction.
/// Accepted steps never increase the objective (monotone trace), and
/// convergence is quadratic near the optimum, comfortably reaching the
/// 1e-8 gradient sup-norm (quasi-Newton updates stall near 1e-7 here:
/// once objective changes drop below one ulp, secant curvature pairs are
/// rounding noise and corrupt the approximation).
///
/// If `coef_bound` is set and any coordinate of an accepted iterate
/// exceeds it in magnitude, iteration stops with `bound_exceeded` (the
/// separation guard for logistic fits).
fn minimize<FG, HS>(x0: DVector<f64>, fg: FG, hess: HS, coef_bound: Option<f64>) -> Minimized
where
    FG: Fn(&DVector<f64>) -> (f64, DVector<f64>),
    HS: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let dim = x0.len();
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    let mut trace = vec![f];

    let sup = |v: &DVector<f64>| v.iter().fold(0.0_f64, |m, t| m.max(t.abs()));

    let mut grad_norm = sup(&g);
    if grad_norm < GRAD_TOL {
        // Already optimal (warm starts hit this) — return the input
        // coefficients bitwise.
        return Minimized { x, grad_norm, iterations: 0, converged: true, bound_exceeded: false, trace };
    }

    for iter in 1..=MAX_ITER {
        let h = hess(&x);
        let scale = (0..dim).map(|j| h[(j, j)].abs()).sum::<f64>() / dim as f64;

        // Newton direction, with escalating Levenberg shift until the
        // (shifted) Hessian is positive definite and yields descent.
        let mut tau = 0.0_f64;
        let mut d: Option<DVector<f64>> = None;
        loop {
            let mut hs = h.clone();
            for j in 0..dim {
                hs[(j, j)] += tau;
            }
            if let Some(chol) = hs.cholesky() {
                let cand = -chol.solve(&g);
                let gd = g.dot(&cand);
                if gd < 0.0 && gd.is_finite() {
                    d = Some(cand);
                    break;
                }
            }
            tau = if tau == 0.0 { scale.max(1e-10) * 1e-8 } else { tau * 100.0 };
            if tau > scale.max(1.0) * 1e6 {
                break; // fall back to steepest descent
            }
        }
        let d = d.unwrap_or_else(|| -g.clone());
        let gd = g.dot(&d);

        // Once the model-predicted decrease −½gᵀd falls below one ulp of
        // the objective, function comparisons are rounding noise; accept
        // on strict gradient decrease instead (the step itself is tiny in
        // that regime, and quadratic convergence finishes in a step or
        // two).
        let flat = -0.5 * gd < 8.0 * f64::EPSILON * (f.abs() + 1.0);

        // Armijo backtracking.
        let mut accepted: Option<(DVector<f64>, f64, DVector<f64>)> = None;
        let mut t = 1.0_f64;
        for _ in 0..60 {
            let xn = &x + t * &d;
            let (fnew, gnew) = fg(&xn);
            if fnew.is_finite() && (fnew <= f + 1e-4 * t * gd || (flat && sup(&gnew) < grad_norm)) {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        let (xn, fnew, gnew) = match accepted {
            Some(a) => a,
            None => {
                return Minimized {
                    x,
                    grad_norm,
                    iterations: iter,
                    converged: false,
                    bound_exceeded: false,
                    trace,
                };
            }
        };

        let stalled = xn == x;
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(f);
        grad_norm = sup(&g);

        if let Some(bound) = coef_bound {
            if sup(&x) > bound {
                return Minimized {
                    x,
                    grad_norm,
                    iterations: iter,
                    converged: false,
                    bound_exceeded: true,
                    trace,
                };
            }
        }
        if grad_norm < GRAD_TOL {
            return Minimized { x, grad_norm, iterations: iter, converged: true, bound_exceeded: false, trace };
        }
        if stalled {
            // The accepted step was too small to move x at double
            // precision; no further progress is possible.
            return Minimized { x, grad_norm, iterations: iter, converged: false, bound_exceeded: false, trace };
        }
    }

    Minimized {
        x,
        grad_norm,
        iterations: MAX_ITER,
        converged: false,
        bound_exceeded: false,
        trace,
    }
}

fn nonconvergence(label: &str, m: &Minimized) -> Error {
    let tail: Vec<f64> = m.trace.iter().rev().take(10).rev().copied().collect();
    Error::NonConvergence {
        component: label.to_string(),
        iterations: m.iterations,
        grad_norm: m.grad_norm,
        trace_tail: tail,
    }
}

// ---------------------------------------------------------------------------
// Logistic component
// ---------------------------------------------------------------------------

/// Penalized logistic log-likelihood and gradient (as a *minimization*
/// objective: negated). `y` may be fractional — the same score equations
/// then define the quasi-likelihood mean regression used by the λ pilot.
fn logistic_objective(beta: &DVector<f64>, y: &[f64], rows: &[Vec<f64>], penalty: f64) -> (f64, DVector<f64>) {
    let w = beta.len();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(w);
    for (yi, row) in y.iter().zip(rows) {
        let eta = dot_lr(row, beta.as_slice());
        ll += yi * eta - softplus(eta);
        let resid = yi - expit(eta);
        for j in 0..w {
            grad[j] += resid * row[j];
        }
    }
    let mut obj = -ll;
    for j in 1..w {
        obj += 0.5 * penalty * beta[j] * beta[j];
        grad[j] -= penalty * beta[j];
    }
    (obj, -grad)
}

/// Hessian of the negated penalized logistic log-likelihood:
/// `Σ pᵢ(1−pᵢ)xᵢxᵢᵀ + penalty·diag(0,1,…,1)`.
fn logistic_hessian(beta: &DVector<f64>, rows: &[Vec<f64>], penalty: f64) -> DMatrix<f64> {
    let w = beta.len();
    let mut h = DMatrix::zeros(w, w);
    for row in rows {
        let p = expit(dot_lr(row, beta.as_slice()));
        let wgt = p * (1.0 - p);
        for j in 0..w {
            for k in j..w {
                h[(j, k)] += wgt * row[j] * row[k];
            }
        }
    }
    for j in 0..w {
        for k in j..w {
            h[(k, j)] = h[(j, k)];
        }
    }
    for j in 1..w {
        h[(j, j)] += penalty;
    }
    h
}

/// The degenerate-class intercept: `logit(0.5/(n+1))` for zero events,
/// its negation for all-events.
fn degenerate_intercept(n: usize, all_ones: bool) -> f64 {
    let p = 0.5 / (n as f64 + 1.0);
    if all_ones {
        -logit(p)
    } else {
        logit(p)
    }
}

/// Fit one logistic component by penalized maximum likelihood.
///
/// `indicator` is 0/1 (fractional responses are legal and yield the
/// quasi-likelihood mean regression). If the indicator is constant, the
/// degenerate-class rule fixes the intercept at `±logit(0.5/(n+1))` with
/// zero slopes and flags the fit instead of optimizing. Under a zero
/// penalty, coefficients exceeding `LINPRED_CLAMP` in magnitude abort with
/// a separation error advising a small ridge penalty.
pub fn fit_component_binary(
    indicator: &[f64],
    rows: &[Vec<f64>],
    penalty: f64,
    label: &str,
    warm: Option<&[f64]>,
) -> Result<BinaryFit> {
    let n = indicator.len();
    assert_eq!(n, rows.len(), "indicator/design length mismatch");
    let w = rows.first().map_or(1, Vec::len);

    let events: f64 = indicator.iter().sum();
    if events == 0.0 || events == n as f64 {
        let mut coefficients = vec![0.0; w];
        coefficients[0] = degenerate_intercept(n, events > 0.0);
        let p = expit(coefficients[0]);
        let loglik: f64 = indicator
            .iter()
            .map(|&yi| yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
            .sum();
        return Ok(BinaryFit { coefficients, loglik, iterations: 0, grad_norm: f64::NAN, degenerate: true });
    }

    let mut x0 = DVector::zeros(w);
    match warm {
        Some(start) => {
            assert_eq!(start.len(), w, "warm start width mismatch");
            for (j, &v) in start.iter().enumerate() {
                x0[j] = v;
            }
        }
        None => {
            let rate = (events / n as f64).clamp(0.5 / (n as f64 + 1.0), 1.0 - 0.5 / (n as f64 + 1.0));
            x0[0] = logit(rate);
        }
    }

    let bound = if penalty == 0.0 { Some(LINPRED_CLAMP) } else { None };
    let m = minimize(
        x0,
        |b| logistic_objective(b, indicator, rows, penalty),
        |b| logistic_hessian(b, rows, penalty),
        bound,
    );
    if m.bound_exceeded {
        return Err(Error::Separation { component: label.to_string(), bound: LINPRED_CLAMP });
    }
    if !m.converged {
        return Err(nonconvergence(label, &m));
    }
    let coefficients: Vec<f64> = m.x.iter().copied().collect();
    // Report the *unpenalized* log-likelihood at the penalized optimum so
    // component log-likelihoods sum to the model log-likelihood.
    let loglik: f64 = indicator
        .iter()
        .zip(rows)
        .map(|(yi, row)| {
            let eta = dot_lr(row, &coefficients);
            yi * eta - softplus(eta)
        })
        .sum();
    Ok(BinaryFit { coefficients, loglik, iterations: m.iterations, grad_norm: m.grad_norm, degenerate: false })
}

// ---------------------------------------------------------------------------
// Beta component
// ---------------------------------------------------------------------------

/// Per-row constants of the interior beta likelihood.
struct BetaData {
    rows: Vec<Vec<f64>>,
    ln_z: Vec<f64>,
    ln_omz: Vec<f64>,
    zstar: Vec<f64>, // ln(z/(1−z))
}

impl BetaData {
    fn new(values: &[f64], rows: &[Vec<f64>]) -> Self {
        let mut ln_z = Vec::with_capacity(values.len());
        let mut ln_omz = Vec::with_capacity(values.len());
        let mut zstar = Vec::with_capacity(values.len());
        for &z in values {
            // Same clamp as the ZOIB interior log-density, so fitted and
            // evaluated likelihoods agree exactly.
            let zc = z.clamp(INTERIOR_LOG_CLAMP, 1.0 - INTERIOR_LOG_CLAMP);
            ln_z.push(zc.ln());
            ln_omz.push((1.0 - zc).ln());
            zstar.push(zc.ln() - (1.0 - zc).ln());
        }
        Self { rows: rows.to_vec(), ln_z, ln_omz, zstar }
    }

    fn n(&self) -> usize {
        self.rows.len()
    }
}

/// Joint `(β_μ, β_φ)` beta-regression objective (negated penalized
/// log-likelihood) with analytic gradient.
fn beta_objective(theta: &DVector<f64>, data: &BetaData, penalty: f64) -> (f64, DVector<f64>) {
    let w = theta.len() / 2;
    let bmu = theta.as_slice()[..w].to_vec();
    let bphi = theta.as_slice()[w..].to_vec();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(2 * w);
    for i in 0..data.n() {
        let row = &data.rows[i];
        let mu = expit(dot_lr(row, &bmu));
        let phi = dot_lr(row, &bphi).exp();
        let a = mu * phi;
        let b = (1.0 - mu) * phi;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return (f64::INFINITY, grad);
        }
        ll += ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            + (a - 1.0) * data.ln_z[i]
            + (b - 1.0) * data.ln_omz[i];
        let mustar = digamma(a) - digamma(b);
        let g_mu = phi * (data.zstar[i] - mustar) * mu * (1.0 - mu);
        let g_phi = phi
            * (digamma(phi) - mu * digamma(a) - (1.0 - mu) * digamma(b)
                + mu * data.ln_z[i]
                + (1.0 - mu) * data.ln_omz[i]);
        for j in 0..w {
            grad[j] += g_mu * row[j];
            grad[w + j] += g_phi * row[j];
        }
    }
    if !ll.is_finite() {
        return (f64::INFINITY, DVector::zeros(2 * w));
    }
    let mut obj = -ll;
    for j in 1..w {
        obj += 0.5 * penalty * (bmu[j] * bmu[j] + bphi[j] * bphi[j]);
        grad[j] -= penalty * bmu[j];
        grad[w + j] -= penalty * bphi[j];
    }
    (obj, -grad)
}

/// Hessian of the negated penalized beta-regression log-likelihood, from
/// the observed information of the joint `(β_μ, β_φ)` likelihood.
///
/// Per-row second derivatives with respect to the linear predictors
/// (`μ' = μ(1−μ)`, `z* = ln z − ln(1−z)`, `μ* = ψ(a) − ψ(b)`):
///
/// ```text
/// ∂²ℓ/∂η_μ²   = φ μ'' (z*−μ*) − φ² μ'² [ψ₁(a) + ψ₁(b)]
/// ∂²ℓ/∂η_μ∂η_φ = φ μ' [(z*−μ*) − a ψ₁(a) + b ψ₁(b)]
/// ∂²ℓ/∂η_φ²   = ∂ℓ/∂η_φ + φ² [ψ₁(φ) − μ² ψ₁(a) − (1−μ)² ψ₁(b)]
/// ```
fn beta_hessian(theta: &DVector<f64>, data: &BetaData, penalty: f64) -> DMatrix<f64> {
    let w = theta.len() / 2;
    let bmu = &theta.as_slice()[..w];
    let bphi = &theta.as_slice()[w..];
    let mut h = DMatrix::zeros(2 * w, 2 * w);
    for i in 0..data.n() {
        let row = &data.rows[i];
        let mu = expit(dot_lr(row, bmu));
        let phi = dot_lr(row, bphi).exp();
        let a = mu * phi;
        let b = (1.0 - mu) * phi;
        let dmu = mu * (1.0 - mu);
        let ddmu = dmu * (1.0 - 2.0 * mu);
        let zstar = data.zstar[i];
        let mustar = digamma(a) - digamma(b);
        let t1a = trigamma(a);
        let t1b = trigamma(b);
        let v = phi
            * (digamma(phi) - mu * digamma(a) - (1.0 - mu) * digamma(b)
                + mu * data.ln_z[i]
                + (1.0 - mu) * data.ln_omz[i]);
        let h_mm = phi * ddmu * (zstar - mustar) - phi * phi * dmu * dmu * (t1a + t1b);
        let h_mp = phi * dmu * ((zstar - mustar) - a * t1a + b * t1b);
        let h_pp = v + phi * phi * (trigamma(phi) - mu * mu * t1a - (1.0 - mu) * (1.0 - mu) * t1b);
        for j in 0..w {
            for k in j..w {
                h[(j, k)] -= h_mm * row[j] * row[k];
                h[(w + j, w + k)] -= h_pp * row[j] * row[k];
            }
            for k in 0..w {
                h[(j, w + k)] -= h_mp * row[j] * row[k];
            }
        }
    }
    // Mirror the within-block upper triangles.
    for j in 0..w {
        for k in j + 1..w {
            h[(k, j)] = h[(j, k)];
            h[(w + k, w + j)] = h[(w + j, w + k)];
        }
    }
    // Mirror the cross block.
    for j in 0..w {
        for k in 0..w {
            h[(w + k, j)] = h[(j, w + k)];
        }
    }
    for j in 1..w {
        h[(j, j)] += penalty;
        h[(w + j, w + j)] += penalty;
    }
    h
}

/// Fit the interior beta-regression component: jointly maximizes the beta
/// log-likelihood over `(β_μ, β_φ)`.
///
/// Requires at least `p + 2` interior observations, where `p` is the
/// design width. Starting values: intercepts at the link-transformed
/// marginal mean and method-of-moments precision, slopes at zero.
pub fn fit_component_beta(
    interior_values: &[f64],
    rows: &[Vec<f64>],
    penalty: f64,
    label: &str,
    warm: Option<(&[f64], &[f64])>,
) -> Result<BetaFit> {
    let n = interior_values.len();
    assert_eq!(n, rows.len(), "values/design length mismatch");
    let w = rows.first().map_or(1, Vec::len);
    if n < w + 2 {
        return Err(Error::InsufficientInteriorData { component: label.to_string(), needed: w + 2, got: n });
    }

    let mut x0 = DVector::zeros(2 * w);
    match warm {
        Some((bmu, bphi)) => {
            assert_eq!(bmu.len(), w);
            assert_eq!(bphi.len(), w);
            for j in 0..w {
                x0[j] = bmu[j];
                x0[w + j] = bphi[j];
            }
        }
        None => {
            let mean = (interior_values.iter().sum::<f64>() / n as f64).clamp(1e-3, 1.0 - 1e-3);
            let var = interior_values.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>()
                / (n as f64 - 1.0);
            // Method-of-moments precision: μ(1−μ)/s² − 1.
            let phi0 = if var > 0.0 {
                (mean * (1.0 - mean) / var - 1.0).clamp(0.5, 1e6)
            } else {
                2.0
            };
            x0[0] = logit(mean);
            x0[w] = phi0.ln();
        }
    }

    let data = BetaData::new(interior_values, rows);
    let m = minimize(
        x0,
        |t| beta_objective(t, &data, penalty),
        |t| beta_hessian(t, &data, penalty),
        None,
    );
    if !m.converged {
        return Err(nonconvergence(label, &m));
    }
    let mu: Vec<f64> = m.x.as_slice()[..w].to_vec();
    let phi: Vec<f64> = m.x.as_slice()[w..].to_vec();
    let loglik = {
        // Unpenalized log-likelihood at the optimum.
        let (obj, _) = beta_objective(&m.x, &data, 0.0);
        -obj
    };
    Ok(BetaFit { mu, phi, loglik, iterations: m.iterations, grad_norm: m.grad_norm })
}

// ---------------------------------------------------------------------------
// Whole-model fitting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Target {
    Mediator,
    Outcome,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Mediator => "mediator",
            Target::Outcome => "outcome",
        }
    }
}

struct RegressionFit {
    coefficients: RegressionCoefficients,
    loglik: f64,
    iterations: Vec<(String, usize)>,
    warnings: Vec<String>,
}

fn fit_regression(
    dataset: &Dataset,
    spec: &ModelSpec,
    target: Target,
    warm: Option<&RegressionCoefficients>,
) -> Result<RegressionFit> {
    let penalty = spec.ridge_penalty();
    let n_banks = spec.n_banks();
    let mut alpha_banks = Vec::with_capacity(n_banks);
    let mut gamma_banks = Vec::with_capacity(n_banks);
    let mut mu_banks = Vec::with_capacity(n_banks);
    let mut phi_banks = Vec::with_capacity(n_banks);
    let mut loglik = 0.0;
    let mut iterations = Vec::new();
    let mut warnings = Vec::new();

    for bank in 0..n_banks {
        let suffix = if n_banks == 2 { format!(" arm {bank}") } else { String::new() };
        // Rows served by this bank.
        let idx: Vec<usize> = (0..dataset.n())
            .filter(|&i| n_banks == 1 || dataset.treatment()[i] as usize == bank)
            .collect();
        let z: Vec<f64> = idx
            .iter()
            .map(|&i| match target {
                Target::Mediator => dataset.mediator()[i],
                Target::Outcome => dataset.outcome()[i],
            })
            .collect();
        let rows: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let m = match target {
                    Target::Mediator => None,
                    Target::Outcome => Some(dataset.mediator()[i]),
                };
                build_design(spec, dataset.covariate_row(i), dataset.treatment()[i], m)
            })
            .collect();

        let label = |comp: &str| format!("{} {comp}{suffix}", target.name());

        // α: zero indicator over all rows of the bank.
        let ind_zero: Vec<f64> = z.iter().map(|&v| f64::from(v == 0.0)).collect();
        let fit_a = fit_component_binary(
            &ind_zero,
            &rows,
            penalty,
            &label("alpha"),
            warm.map(|c| c.alpha.bank(bank as u8)),
        )?;
        if fit_a.degenerate {
            warnings.push(format!(
                "{}: no variation in the zero indicator; degenerate-class intercept applied",
                label("alpha")
            ));
        }
        loglik += fit_a.loglik;
        iterations.push((label("alpha"), fit_a.iterations));
        alpha_banks.push(fit_a.coefficients);

        // γ: one indicator over nonzero rows.
        let nz: Vec<usize> = (0..z.len()).filter(|&j| z[j] != 0.0).collect();
        let ind_one: Vec<f64> = nz.iter().map(|&j| f64::from(z[j] == 1.0)).collect();
        let rows_nz: Vec<Vec<f64>> = nz.iter().map(|&j| rows[j].clone()).collect();
        let fit_g = fit_component_binary(
            &ind_one,
            &rows_nz,
            penalty,
            &label("gamma"),
            warm.map(|c| c.gamma.bank(bank as u8)),
        )?;
        if fit_g.degenerate {
            warnings.push(format!(
                "{}: no variation in the one indicator; degenerate-class intercept applied",
                label("gamma")
            ));
        }
        loglik += fit_g.loglik;
        iterations.push((label("gamma"), fit_g.iterations));
        gamma_banks.push(fit_g.coefficients);

        // Interior beta regression.
        let int_idx: Vec<usize> = (0..z.len()).filter(|&j| z[j] > 0.0 && z[j] < 1.0).collect();
        let vals: Vec<f64> = int_idx.iter().map(|&j| z[j]).collect();
        let rows_int: Vec<Vec<f64>> = int_idx.iter().map(|&j| rows[j].clone()).collect();
        let fit_b = fit_component_beta(
            &vals,
            &rows_int,
            penalty,
            &label("beta"),
            warm.map(|c| (c.mu.bank(bank as u8), c.phi.bank(bank as u8))),
        )?;
        loglik += fit_b.loglik;
        iterations.push((label("beta"), fit_b.iterations));
        mu_banks.push(fit_b.mu);
        phi_banks.push(fit_b.phi);
    }

    Ok(RegressionFit {
        coefficients: RegressionCoefficients {
            alpha: ComponentCoefficients { banks: alpha_banks },
            gamma: ComponentCoefficients { banks: gamma_banks },
            mu: ComponentCoefficients { banks: mu_banks },
            phi: ComponentCoefficients { banks: phi_banks },
        },
        loglik,
        iterations,
        warnings,
    })
}

/// Fit both ZOIB regressions by maximum likelihood (cold start).
pub fn fit_all(dataset: &Dataset, spec: &ModelSpec) -> Result<FittedModels> {
    fit_all_warm(dataset, spec, None)
}

/// Fit both ZOIB regressions, optionally warm-starting each component at
/// previously fitted coefficients (used by bootstrap refits; a warm start
/// already at the optimum returns bitwise-identical coefficients in zero
/// iterations).
pub fn fit_all_warm(
    dataset: &Dataset,
    spec: &ModelSpec,
    warm: Option<&CoefficientSet>,
) -> Result<FittedModels> {
    let med = fit_regression(dataset, spec, Target::Mediator, warm.map(|c| &c.mediator))?;
    let out = fit_regression(dataset, spec, Target::Outcome, warm.map(|c| &c.outcome))?;
    let mut component_iterations = med.iterations;
    component_iterations.extend(out.iterations);
    let mut warnings = med.warnings;
    warnings.extend(out.warnings);
    Ok(FittedModels {
        coefficients: CoefficientSet { mediator: med.coefficients, outcome: out.coefficients },
        spec: *spec,
        loglik: med.loglik + out.loglik,
        converged: true,
        component_iterations,
        warnings,
    })
}

/// Joint log-likelihood of a dataset under given coefficients, evaluated
/// through the prediction path (clamped linear predictors). Matches the
/// fitted `loglik` to high precision whenever no predictor hits the clamp.
pub fn dataset_loglik(dataset: &Dataset, spec: &ModelSpec, coefs: &CoefficientSet) -> Result<f64> {
    let mut ll = 0.0;
    for i in 0..dataset.n() {
        let a = dataset.treatment()[i];
        let x = dataset.covariate_row(i);
        let mrow = build_design(spec, x, a, None);
        let mp = crate::model::predict_zoib_params(&coefs.mediator, &mrow, a)?;
        ll += mp.loglik(dataset.mediator()[i])?;
        let yrow = build_design(spec, x, a, Some(dataset.mediator()[i]));
        let yp = crate::model::predict_zoib_params(&coefs.outcome, &yrow, a)?;
        ll += yp.loglik(dataset.outcome()[i])?;
    }
    Ok(ll)
}

/// Central finite differences of an objective.
fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        g[j] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Worst relative error between the analytic component gradients and
/// central finite differences of the corresponding objectives, probed at
/// `points` random coefficient points per fitted component (alpha, gamma,
/// and joint beta, per bank, for both models). Component data is
/// assembled exactly the way `fit_all` assembles it, so this certifies
/// the gradients production fitting actually uses. Relative error is
/// `|g - fd| / max(|g|, 1)`.
pub fn gradient_fidelity(
    dataset: &Dataset,
    spec: &ModelSpec,
    points: usize,
    seed: u64,
) -> Result<f64> {
    let penalty = spec.ridge_penalty();
    let mut rng = derived_rng(seed, tags::CHECK);
    let mut worst = 0.0_f64;
    let h = 1e-6;

    let probe = |dim: usize, rng: &mut rand_chacha::ChaCha8Rng, fg: &dyn Fn(&DVector<f64>) -> (f64, DVector<f64>)| {
        let mut local = 0.0_f64;
        for _ in 0..points {
            let point = DVector::from_fn(dim, |_, _| 0.6 * (rng.random::<f64>() - 0.5));
            let (_, g) = fg(&point);
            let fd = fd_gradient(&|b| fg(b).0, &point, h);
            for j in 0..dim {
                local = local.max((g[j] - fd[j]).abs() / g[j].abs().max(1.0));
            }
        }
        local
    };

    for target in [Target::Mediator, Target::Outcome] {
        for bank in 0..spec.n_banks() {
            let idx: Vec<usize> = (0..dataset.n())
                .filter(|&i| spec.n_banks() == 1 || dataset.treatment()[i] as usize == bank)
                .collect();
            let z: Vec<f64> = idx
                .iter()
                .map(|&i| match target {
                    Target::Mediator => dataset.mediator()[i],
                    Target::Outcome => dataset.outcome()[i],
                })
                .collect();
            let rows: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let m = match target {
                        Target::Mediator => None,
                        Target::Outcome => Some(dataset.mediator()[i]),
                    };
                    build_design(spec, dataset.covariate_row(i), dataset.treatment()[i], m)
                })
                .collect();
            let w = rows.first().map_or(0, Vec::len);
            if w == 0 {
                return Err(Error::Config("gradient fidelity needs a nonempty dataset".into()));
            }

            let ind_zero: Vec<f64> = z.iter().map(|&v| f64::from(v == 0.0)).collect();
            worst = worst.max(probe(w, &mut rng, &|b| {
                logistic_objective(b, &ind_zero, &rows, penalty)
            }));

            let nz: Vec<usize> = (0..z.len()).filter(|&j| z[j] != 0.0).collect();
            let ind_one: Vec<f64> = nz.iter().map(|&j| f64::from(z[j] == 1.0)).collect();
            let rows_nz: Vec<Vec<f64>> = nz.iter().map(|&j| rows[j].clone()).collect();
            worst = worst.max(probe(w, &mut rng, &|b| {
                logistic_objective(b, &ind_one, &rows_nz, penalty)
            }));

            let int_idx: Vec<usize> = (0..z.len()).filter(|&j| z[j] > 0.0 && z[j] < 1.0).collect();
            let vals: Vec<f64> = int_idx.iter().map(|&j| z[j]).collect();
            let rows_int: Vec<Vec<f64>> = int_idx.iter().map(|&j| rows[j].clone()).collect();
            let data = BetaData::new(&vals, &rows_int);
            worst = worst.max(probe(2 * w, &mut rng, &|t| beta_objective(t, &data, penalty)));
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Refit on an explicit index multiset (the bootstrap's inner step,
/// exposed for tests: the identity permutation reproduces `fit_all_warm`
/// exactly).
pub fn refit_on_indices(
    dataset: &Dataset,
    spec: &ModelSpec,
    indices: &[usize],
    warm: Option<&CoefficientSet>,
) -> Result<FittedModels> {
    let resampled = dataset.resample(indices);
    fit_all_warm(&resampled, spec, warm)
}

/// Draw one with-replacement resample of row indices, optionally
/// stratified by treatment arm (preserving per-arm counts).
fn draw_indices<R: Rng>(rng: &mut R, dataset: &Dataset, stratified: bool) -> Vec<usize> {
    let n = dataset.n();
    if !stratified {
        return (0..n).map(|_| rng.random_range(0..n)).collect();
    }
    let mut by_arm: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &a) in dataset.treatment().iter().enumerate() {
        by_arm[a as usize].push(i);
    }
    let mut out = Vec::with_capacity(n);
    for arm in &by_arm {
        for _ in 0..arm.len() {
            out.push(arm[rng.random_range(0..arm.len())]);
        }
    }
    out
}

/// Nonparametric bootstrap: `b` refits on with-replacement resamples of
/// size N.
///
/// Per-replicate seeds are derived from `master_seed` up front, so results
/// are identical regardless of thread schedule. Refits warm-start at
/// `warm` (pass the full-data fit). Failed replicates are excluded and
/// logged; more than 5% failures is an error.
pub fn bootstrap_fit(
    dataset: &Dataset,
    spec: &ModelSpec,
    b: usize,
    master_seed: u64,
    stratified: bool,
    warm: Option<&CoefficientSet>,
) -> Result<BootstrapEnsemble> {
    assert!(b >= 1, "bootstrap needs B >= 1");
    let boot_seed = derive_seed(master_seed, tags::BOOTSTRAP);
    let seeds: Vec<u64> = (0..b).map(|r| cell_seed(boot_seed, r, 0)).collect();

    let results: Vec<(usize, std::result::Result<FittedModels, String>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let mut rng = crate::rngutil::cell_rng(seed, 0, 0);
            let indices = draw_indices(&mut rng, dataset, stratified);
            let fit = refit_on_indices(dataset, spec, &indices, warm).map_err(|e| e.to_string());
            (r, fit)
        })
        .collect();

    let mut replicates = Vec::with_capacity(b);
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(fit) => replicates.push(fit),
            Err(msg) => failures.push((r, msg)),
        }
    }
    let percent = 100.0 * failures.len() as f64 / b as f64;
    if percent > 5.0 {
        return Err(Error::ReplicateFailures {
            failed: failures.len(),
            total: b,
            percent,
            first: failures.first().map(|(_, m)| m.clone()).unwrap_or_default(),
        });
    }
    Ok(BootstrapEnsemble { replicates, seeds, b, failures })
}

// ---------------------------------------------------------------------------
// λ pilot regressions
// ---------------------------------------------------------------------------

/// Which sensitivity analysis a pilot interval is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityScale {
    /// Logit-scale shift (Gaussian-copula analysis).
    Logit,
    /// Linear-scale shift.
    Linear,
}

/// Calibrate a plausible symmetric range for the sensitivity parameter λ
/// from a pilot regression of `Y` on `(M, A, X)`.
///
/// Logit scale: a quasi-likelihood logistic-mean regression (Bernoulli-type
/// variance), returning `[−2|β̂_M|, 2|β̂_M|]`. Linear scale: ordinary least
/// squares, returning `[−|β̂_M|, |β̂_M|]`.
pub fn pilot_lambda_range(dataset: &Dataset, scale: SensitivityScale) -> Result<(f64, f64)> {
    // Homogeneous outcome design [1, x..., a, m]: the mediator coefficient
    // is the last column.
    let pilot_spec = ModelSpec { heterogeneous: false, prior_sd: None };
    let rows: Vec<Vec<f64>> = (0..dataset.n())
        .map(|i| {
            build_design(
                &pilot_spec,
                dataset.covariate_row(i),
                dataset.treatment()[i],
                Some(dataset.mediator()[i]),
            )
        })
        .collect();
    let y = dataset.outcome();
    let beta_m = match scale {
        SensitivityScale::Logit => {
            let fit = fit_component_binary(y, &rows, 0.0, "lambda pilot (logit)", None)?;
            if fit.degenerate {
                return Err(Error::DegenerateRegression(
                    "lambda pilot: outcome has no variation".into(),
                ));
            }
            *fit.coefficients.last().unwrap()
        }
        SensitivityScale::Linear => {
            let w = rows[0].len();
            let n = rows.len();
            let x = DMatrix::from_fn(n, w, |i, j| rows[i][j]);
            let yv = DVector::from_iterator(n, y.iter().copied());
            let xtx = x.transpose() * &x;
            let xty = x.transpose() * yv;
            let chol = xtx.cholesky().ok_or_else(|| {
                Error::DegenerateRegression("lambda pilot: singular design in OLS".into())
            })?;
            let beta = chol.solve(&xty);
            beta[w - 1]
        }
    };
    let half = match scale {
        SensitivityScale::Logit => 2.0 * beta_m.abs(),
        SensitivityScale::Linear => beta_m.abs(),
    };
    Ok((-half, half))
}
