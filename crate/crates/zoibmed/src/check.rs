//! Runtime self-check battery behind the CLI's `check` subcommand.
//!
//! Each check certifies one load-bearing invariant of the estimator stack —
//! distributional identities, gradient fidelity, effect-decomposition
//! algebra, sensitivity identities, determinism — on small synthetic
//! problems with fixed derived seeds, so a run is deterministic given its
//! seed and finishes in seconds. The battery reports one line per check;
//! any failure turns into a nonzero exit through [`ensure_passed`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::fit::{fit_all, fit_all_warm, gradient_fidelity, FittedModels};
use crate::gformula::{
    estimate_average_effects, estimate_quantile_effects, sample_dirichlet_weights,
    EffectEstimates, MonteCarloConfig,
};
use crate::model::{
    build_design, predict_zoib_params, CoefficientSet, ComponentCoefficients, Dataset, ModelSpec,
    RegressionCoefficients,
};
use crate::rngutil::{derive_seed, derived_rng, tags};
use crate::sensitivity::{
    estimate_effects_linear, estimate_effects_logit, sample_copula_mediators, SensitivityParams,
};
use crate::simharness::{ks_critical_1pct, ks_two_sample};
use crate::special::{beta_ln_pdf, betainc, expit, integrate_unit, logit};
use crate::zoib::ZoibParams;

/// One invariant check's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantities behind the verdict (or the error that aborted
    /// the check).
    pub detail: String,
}

impl CheckOutcome {
    fn judged(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Render the battery as one `PASS`/`FAIL` line per check plus a summary.
pub fn render_report(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{verdict}  {:<38} {}\n", o.name, o.detail));
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    out.push_str(&format!(
        "{} of {} checks passed\n",
        outcomes.len() - failed,
        outcomes.len()
    ));
    out
}

/// `Err(CheckFailed)` when any check failed.
pub fn ensure_passed(outcomes: &[CheckOutcome]) -> Result<()> {
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Error::CheckFailed { failed, total: outcomes.len() });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fixture
// ---------------------------------------------------------------------------

/// Small synthetic problem the model-level checks run on: a two-covariate
/// homogeneous truth, a dataset sampled from it, and its maximum-likelihood
/// fit.
struct Fixture {
    truth: CoefficientSet,
    spec: ModelSpec,
    dataset: Dataset,
    models: FittedModels,
}

fn fixture_truth() -> (CoefficientSet, ModelSpec) {
    let spec = ModelSpec::default();
    let bank = |entries: &[(usize, f64)], w: usize| {
        let mut b = vec![0.0_f64; w];
        for &(i, v) in entries {
            b[i] = v;
        }
        ComponentCoefficients::homogeneous(b)
    };
    // Design [1, x1, x2, a] for the mediator, [1, x1, x2, a, m] for the
    // outcome.
    let mediator = RegressionCoefficients {
        alpha: bank(&[(0, -1.4), (1, 0.4), (3, -0.5)], 4),
        gamma: bank(&[(0, -1.6), (2, 0.3), (3, 0.3)], 4),
        mu: bank(&[(0, 0.2), (1, 0.5), (2, -0.3), (3, 0.6)], 4),
        phi: bank(&[(0, 1.8), (2, 0.2)], 4),
    };
    let outcome = RegressionCoefficients {
        alpha: bank(&[(0, -1.7), (1, 0.3), (3, -0.4), (4, -0.8)], 5),
        gamma: bank(&[(0, -1.8), (2, 0.3), (4, 0.5)], 5),
        mu: bank(&[(0, 0.1), (1, 0.3), (3, 0.4), (4, 1.1)], 5),
        phi: bank(&[(0, 1.6), (3, 0.1)], 5),
    };
    (CoefficientSet { mediator, outcome }, spec)
}

fn fixture(seed: u64) -> Result<Fixture> {
    let (truth, spec) = fixture_truth();
    let mut rng = derived_rng(seed, tags::CHECK);
    let n = 400;
    let mut covariates = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut mediator = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for _ in 0..n {
        let x = vec![rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
        let a: u8 = if rng.random_bool(0.5) { 1 } else { 0 };
        let mrow = build_design(&spec, &x, a, None);
        let m = predict_zoib_params(&truth.mediator, &mrow, a)?.sample(&mut rng);
        let orow = build_design(&spec, &x, a, Some(m));
        let y = predict_zoib_params(&truth.outcome, &orow, a)?.sample(&mut rng);
        covariates.push(x);
        treatment.push(a);
        mediator.push(m);
        outcome.push(y);
    }
    let dataset = Dataset::new(
        covariates,
        treatment,
        mediator,
        outcome,
        vec!["x1".into(), "x2".into()],
        Vec::new(),
    )?;
    let models = fit_all(&dataset, &spec)?;
    Ok(Fixture { truth, spec, dataset, models })
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

fn zoib_mean_quadrature(_: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    let cases = [
        ZoibParams::new(0.15, 0.1, 0.55, 6.0)?,
        ZoibParams::new(0.02, 0.35, 0.2, 2.5)?,
        ZoibParams::new(0.4, 0.05, 0.8, 14.0)?,
    ];
    let mut worst = 0.0_f64;
    for p in cases {
        let (a, b) = (p.shape_a(), p.shape_b());
        let interior = integrate_unit(|x, _| x * beta_ln_pdf(x, a, b).exp(), 1e-12);
        let numeric = (1.0 - p.alpha) * p.gamma + (1.0 - p.alpha) * (1.0 - p.gamma) * interior;
        worst = worst.max((p.mean() - numeric).abs());
    }
    Ok(CheckOutcome::judged(
        "zoib-mean-quadrature",
        worst < 1e-8,
        format!("max |mean - quadrature| = {worst:.2e} (tol 1e-8)"),
    ))
}

fn zoib_quantile_roundtrip(_: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    let cases = [
        ZoibParams::new(0.15, 0.1, 0.55, 6.0)?,
        ZoibParams::new(0.3, 0.25, 0.35, 3.0)?,
    ];
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    for p in cases {
        for i in 1..=19 {
            let u = i as f64 / 20.0;
            let z = p.quantile(u)?;
            let c = p.cdf(z)?;
            // The quantile is the generalized inverse: on boundary atoms
            // the CDF only dominates u; strictly inside it inverts exactly.
            if z > 0.0 && z < 1.0 {
                worst = worst.max((c - u).abs());
                checked += 1;
            } else if c < u - 1e-9 {
                return Ok(CheckOutcome::judged(
                    "zoib-quantile-roundtrip",
                    false,
                    format!("cdf(quantile({u})) = {c} undershoots u"),
                ));
            }
        }
    }
    Ok(CheckOutcome::judged(
        "zoib-quantile-roundtrip",
        worst < 1e-9 && checked > 0,
        format!("max |cdf(quantile(u)) - u| = {worst:.2e} over {checked} interior points (tol 1e-9)"),
    ))
}

fn zoib_sampler_boundary_frequencies(_: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let p = ZoibParams::new(0.2, 0.15, 0.45, 5.0)?;
    let n = 20_000usize;
    let mut rng = derived_rng(derive_seed(seed, tags::CHECK), tags::CHECK);
    let mut zeros = 0usize;
    let mut ones = 0usize;
    for _ in 0..n {
        let z = p.sample(&mut rng);
        if z == 0.0 {
            zeros += 1;
        } else if z == 1.0 {
            ones += 1;
        }
    }
    let nf = n as f64;
    let p0 = p.alpha;
    let p1 = (1.0 - p.alpha) * p.gamma;
    let d0 = (zeros as f64 / nf - p0).abs();
    let d1 = (ones as f64 / nf - p1).abs();
    let tol0 = 4.0 * (p0 * (1.0 - p0) / nf).sqrt();
    let tol1 = 4.0 * (p1 * (1.0 - p1) / nf).sqrt();
    Ok(CheckOutcome::judged(
        "zoib-sampler-boundary-frequencies",
        d0 < tol0 && d1 < tol1,
        format!("|freq0 - alpha| = {d0:.4} (tol {tol0:.4}), |freq1 - (1-alpha)gamma| = {d1:.4} (tol {tol1:.4})"),
    ))
}

fn link_roundtrips(_: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    let mut worst_p = 0.0_f64;
    for i in 1..200 {
        let p = i as f64 / 200.0;
        worst_p = worst_p.max((expit(logit(p)) - p).abs());
    }
    let mut worst_t = 0.0_f64;
    let mut ok = true;
    for i in -30..=30 {
        let t = i as f64;
        let err = (logit(expit(t)) - t).abs();
        // Near the saturation region an f64 probability retains t only to
        // ~eps * e^|t|; the bound tracks that floor.
        let tol = 1e-9 + 4.0 * f64::EPSILON * t.abs().exp();
        ok &= err <= tol;
        worst_t = worst_t.max(err - tol);
    }
    Ok(CheckOutcome::judged(
        "special-link-roundtrips",
        worst_p < 4.0 * f64::EPSILON && ok,
        format!("max |expit(logit(p)) - p| = {worst_p:.2e}; t-direction within floor (worst slack {worst_t:.2e})"),
    ))
}

fn betainc_derivative(_: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    let cases = [(2.0, 3.0, 0.3), (0.7, 1.9, 0.55), (5.0, 2.2, 0.8)];
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for (a, b, x) in cases {
        let fd = (betainc(a, b, x + h) - betainc(a, b, x - h)) / (2.0 * h);
        let analytic = beta_ln_pdf(x, a, b).exp();
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
    }
    Ok(CheckOutcome::judged(
        "special-betainc-derivative",
        worst < 1e-5,
        format!("max rel |dI/dx - beta pdf| = {worst:.2e} (tol 1e-5)"),
    ))
}

fn fit_gradient_fidelity(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let worst = gradient_fidelity(&fx.dataset, &fx.spec, 10, seed)?;
    Ok(CheckOutcome::judged(
        "fit-gradient-fidelity",
        worst < 1e-6,
        format!("max rel |analytic - central FD| = {worst:.2e} over 10 points/component (tol 1e-6)"),
    ))
}

fn fit_warm_start_identity(fx: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    let again = fit_all_warm(&fx.dataset, &fx.spec, Some(&fx.models.coefficients))?;
    let identical = again.coefficients == fx.models.coefficients;
    let iters: usize = again.component_iterations.iter().map(|(_, i)| i).sum();
    Ok(CheckOutcome::judged(
        "fit-warm-start-identity",
        identical && iters == 0,
        format!("refit at optimum: bitwise identical = {identical}, extra iterations = {iters}"),
    ))
}

fn fit_recovers_truth_loglik(fx: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    // The MLE cannot have lower in-sample log-likelihood than the truth.
    let at_fit = crate::fit::dataset_loglik(&fx.dataset, &fx.spec, &fx.models.coefficients)?;
    let at_truth = crate::fit::dataset_loglik(&fx.dataset, &fx.spec, &fx.truth)?;
    Ok(CheckOutcome::judged(
        "fit-dominates-truth-in-sample",
        at_fit >= at_truth - 1e-6,
        format!("loglik at fit = {at_fit:.3}, at truth = {at_truth:.3}"),
    ))
}

fn gformula_decomposition(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let tol = 4.0 * f64::EPSILON;
    let cfg = MonteCarloConfig { k: 20, use_dirichlet_weights: false, master_seed: seed };
    let avg = estimate_average_effects(&fx.models, &fx.dataset, &cfg)?;
    let qnt = estimate_quantile_effects(&fx.models, &fx.dataset, 0.5, &cfg)?;
    let gap = |e: &EffectEstimates| {
        (e.delta1 + e.zeta0 - e.tau)
            .abs()
            .max((e.delta0 + e.zeta1 - e.tau).abs())
    };
    let (ga, gq) = (gap(&avg), gap(&qnt));
    Ok(CheckOutcome::judged(
        "gformula-decomposition",
        ga <= tol && gq <= tol,
        format!("max |delta(a) + zeta(1-a) - tau|: average {ga:.2e}, median {gq:.2e} (tol {tol:.2e})"),
    ))
}

fn gformula_determinism(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let cfg = MonteCarloConfig { k: 8, use_dirichlet_weights: true, master_seed: seed };
    let one = estimate_average_effects(&fx.models, &fx.dataset, &cfg)?;
    let two = estimate_average_effects(&fx.models, &fx.dataset, &cfg)?;
    let other = MonteCarloConfig { master_seed: seed ^ 0x5bd1, ..cfg };
    let three = estimate_average_effects(&fx.models, &fx.dataset, &other)?;
    Ok(CheckOutcome::judged(
        "gformula-determinism",
        one == two && one.as_array() != three.as_array(),
        format!(
            "same seed bitwise equal = {}, different seed differs = {}",
            one == two,
            one.as_array() != three.as_array()
        ),
    ))
}

fn gformula_null_mediator_path(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    // Kill the treatment column in every mediator component: the mediator
    // law no longer depends on the arm, so indirect effects are exactly 0.
    let mut models = fx.models.clone();
    for comp in [
        &mut models.coefficients.mediator.alpha,
        &mut models.coefficients.mediator.gamma,
        &mut models.coefficients.mediator.mu,
        &mut models.coefficients.mediator.phi,
    ] {
        comp.banks[0][3] = 0.0;
    }
    let cfg = MonteCarloConfig { k: 10, use_dirichlet_weights: false, master_seed: seed };
    let est = estimate_average_effects(&models, &fx.dataset, &cfg)?;
    Ok(CheckOutcome::judged(
        "gformula-null-mediator-path",
        est.delta0 == 0.0 && est.delta1 == 0.0,
        format!("delta(0) = {:e}, delta(1) = {:e} (must be exactly 0)", est.delta0, est.delta1),
    ))
}

fn sensitivity_linear_identity(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let cfg = MonteCarloConfig { k: 10, use_dirichlet_weights: true, master_seed: seed };
    let avg = estimate_average_effects(&fx.models, &fx.dataset, &cfg)?;
    let run = estimate_effects_linear(&fx.models, &fx.dataset, 0.0, &cfg)?;
    Ok(CheckOutcome::judged(
        "sensitivity-linear-lambda0-identity",
        run.effects == avg,
        format!("lambda = 0 bitwise equals the average estimator: {}", run.effects == avg),
    ))
}

fn sensitivity_linear_tau_invariance(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let cfg = MonteCarloConfig { k: 10, use_dirichlet_weights: false, master_seed: seed };
    let base = estimate_effects_linear(&fx.models, &fx.dataset, 0.0, &cfg)?;
    let bent = estimate_effects_linear(&fx.models, &fx.dataset, 0.35, &cfg)?;
    let tau_fixed = base.effects.tau == bent.effects.tau;
    // Affine identity: delta_a(lambda) - delta_a(0) = -lambda (Mbar1 - Mbar0).
    let shift = 0.35 * (base.mediator_means[1] - base.mediator_means[0]);
    let affine = (bent.effects.delta0 - base.effects.delta0 + shift).abs();
    Ok(CheckOutcome::judged(
        "sensitivity-linear-tau-invariance",
        tau_fixed && affine < 1e-10,
        format!("tau bitwise invariant = {tau_fixed}, affine-identity residual = {affine:.2e} (tol 1e-10)"),
    ))
}

fn sensitivity_logit_rho_free(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    // At lambda = 0 the copula correlation must not matter (statistically;
    // different rho consume different draws). N*K = 400 * 250 = 1e5.
    let cfg = MonteCarloConfig { k: 250, use_dirichlet_weights: false, master_seed: seed };
    let lo = estimate_effects_logit(
        &fx.models,
        &fx.dataset,
        &SensitivityParams::new(0.0, 0.0)?,
        &cfg,
    )?;
    let hi = estimate_effects_logit(
        &fx.models,
        &fx.dataset,
        &SensitivityParams::new(0.0, 0.95)?,
        &cfg,
    )?;
    let gap = lo
        .effects
        .as_array()
        .into_iter()
        .zip(hi.effects.as_array())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    let clamps = lo.clamped + hi.clamped;
    Ok(CheckOutcome::judged(
        "sensitivity-logit-rho-free-at-lambda0",
        gap < 5e-3 && clamps == 0,
        format!("max |rho=0 - rho=0.95| = {gap:.2e} (tol 5e-3), clamped draws = {clamps}"),
    ))
}

fn copula_marginal_preservation(fx: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let spec = &fx.spec;
    let x = fx.dataset.covariate_row(0);
    let arm0 = predict_zoib_params(&fx.truth.mediator, &build_design(spec, x, 0, None), 0)?;
    let arm1 = predict_zoib_params(&fx.truth.mediator, &build_design(spec, x, 1, None), 1)?;
    let n = 20_000usize;
    let mut rng = derived_rng(derive_seed(seed, tags::QUANTILE), tags::CHECK);
    let mut c0 = Vec::with_capacity(n);
    let mut c1 = Vec::with_capacity(n);
    for _ in 0..n {
        let (m0, m1) = sample_copula_mediators(&arm0, &arm1, 0.6, &mut rng)?;
        c0.push(m0);
        c1.push(m1);
    }
    let d0: Vec<f64> = (0..n).map(|_| arm0.sample(&mut rng)).collect();
    let d1: Vec<f64> = (0..n).map(|_| arm1.sample(&mut rng)).collect();
    let (k0, k1) = (ks_two_sample(&c0, &d0), ks_two_sample(&c1, &d1));
    let crit = ks_critical_1pct(n, n);
    Ok(CheckOutcome::judged(
        "sensitivity-copula-marginals",
        k0 < crit && k1 < crit,
        format!("KS arm0 = {k0:.4}, arm1 = {k1:.4} vs 1% critical {crit:.4}"),
    ))
}

fn metrics_selftest(_: &Fixture, _seed: u64) -> Result<CheckOutcome> {
    use crate::gformula::EffectFlavor;
    use crate::simharness::{aggregate_metrics, RepRecord};
    let truth = EffectEstimates {
        delta0: 0.011,
        delta1: 0.023,
        zeta0: 0.037,
        zeta1: 0.041,
        tau: 0.052,
        flavor: EffectFlavor::Average,
        k: 1,
        seed: 0,
    };
    let perfect = RepRecord {
        est: truth.as_array(),
        lower: truth.as_array(),
        upper: truth.as_array(),
    };
    let rows = aggregate_metrics(&truth, &vec![perfect; 5]);
    let exact = rows.iter().all(|r| {
        r.bias == 0.0 && r.rmse == 0.0 && r.coverage == 1.0 && r.mean_interval_length == 0.0
    });
    Ok(CheckOutcome::judged(
        "simharness-metrics-identity",
        exact,
        format!("perfect-estimator self-test exact = {exact}"),
    ))
}

fn weights_normalization(_: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let mut rng = derived_rng(seed, tags::WEIGHTS);
    let w = sample_dirichlet_weights(64, &mut rng)?;
    let sum: f64 = w.as_slice().iter().sum();
    let positive = w.as_slice().iter().all(|&v| v > 0.0);
    let single = sample_dirichlet_weights(1, &mut rng)?;
    Ok(CheckOutcome::judged(
        "gformula-dirichlet-weights",
        (sum - 1.0).abs() < 1e-12 && positive && single.as_slice() == [1.0],
        format!(
            "|sum - 1| = {:.2e}, all positive = {positive}, n=1 exact = {}",
            (sum - 1.0).abs(),
            single.as_slice() == [1.0]
        ),
    ))
}

fn quantile_monotonicity(_: &Fixture, seed: u64) -> Result<CheckOutcome> {
    let p = ZoibParams::new(0.12, 0.18, 0.6, 4.0)?;
    let mut rng = derived_rng(seed, tags::QUANTILE);
    let mut last = -1.0_f64;
    let mut monotone = true;
    for i in 1..100 {
        let z = p.quantile(i as f64 / 100.0)?;
        monotone &= z >= last;
        last = z;
    }
    let values: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let mut last_q = f64::NEG_INFINITY;
    let mut emp_monotone = true;
    for i in 1..20 {
        let q = crate::gformula::empirical_quantile(&values, i as f64 / 20.0)?;
        emp_monotone &= q >= last_q;
        last_q = q;
    }
    Ok(CheckOutcome::judged(
        "quantile-monotonicity",
        monotone && emp_monotone,
        format!("zoib quantile monotone = {monotone}, empirical quantile monotone = {emp_monotone}"),
    ))
}

// ---------------------------------------------------------------------------
// Battery
// ---------------------------------------------------------------------------

/// Run the full battery. Individual check errors are reported as failures
/// rather than aborting the battery; only fixture construction can error.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let fx = fixture(seed)?;
    let checks: &[(&'static str, fn(&Fixture, u64) -> Result<CheckOutcome>)] = &[
        ("zoib-mean-quadrature", zoib_mean_quadrature),
        ("zoib-quantile-roundtrip", zoib_quantile_roundtrip),
        ("zoib-sampler-boundary-frequencies", zoib_sampler_boundary_frequencies),
        ("special-link-roundtrips", link_roundtrips),
        ("special-betainc-derivative", betainc_derivative),
        ("fit-gradient-fidelity", fit_gradient_fidelity),
        ("fit-warm-start-identity", fit_warm_start_identity),
        ("fit-dominates-truth-in-sample", fit_recovers_truth_loglik),
        ("gformula-decomposition", gformula_decomposition),
        ("gformula-determinism", gformula_determinism),
        ("gformula-null-mediator-path", gformula_null_mediator_path),
        ("sensitivity-linear-lambda0-identity", sensitivity_linear_identity),
        ("sensitivity-linear-tau-invariance", sensitivity_linear_tau_invariance),
        ("sensitivity-logit-rho-free-at-lambda0", sensitivity_logit_rho_free),
        ("sensitivity-copula-marginals", copula_marginal_preservation),
        ("simharness-metrics-identity", metrics_selftest),
        ("gformula-dirichlet-weights", weights_normalization),
        ("quantile-monotonicity", quantile_monotonicity),
    ];
    let mut outcomes = Vec::with_capacity(checks.len());
    for (name, f) in checks {
        let outcome = match f(&fx, seed) {
            Ok(o) => o,
            Err(e) => CheckOutcome::judged(name, false, format!("check aborted: {e}")),
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
