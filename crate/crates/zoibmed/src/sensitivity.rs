//! Sensitivity analysis for unmeasured mediator–outcome confounding.
//!
//! Both estimators perturb the counterfactual outcome of the g-formula grid
//! entry `S[a'][a]` by a confounding shift proportional to the gap between
//! the *natural* mediator `M*(a')` and the *assigned* mediator `M*(a)`:
//!
//! * **Logit scale**: the two mediator arms are coupled through a Gaussian
//!   copula with correlation `rho`, and the shift acts on the log-odds of the
//!   conditional mean outcome `E`:
//!   `Y* = expit{ logit(E) + lambda * (M*(a') - M*(a)) }`.
//! * **Linear scale**: both arms share a single uniform (exactly as in the
//!   average-effect estimator) and the shift acts additively:
//!   `Y* = E + lambda * (M*(a') - M*(a))`, which may leave `[0, 1]`; such
//!   range violations are counted and reported, never clipped, so the
//!   estimates stay exactly affine in `lambda`.
//!
//! Neither `lambda` nor `rho` ever touches model fitting: these functions
//! take the fitted models as immutable inputs, so varying the sensitivity
//! parameters cannot alter the fit of the model to the data.
//!
//! Determinism follows the same contract as [`crate::gformula`]: every cell
//! `(i, k)` consumes its own substream of the master seed, and a grid of
//! `lambda` values shares one weight vector and one seed (common random
//! numbers), so sensitivity curves vary with `lambda` alone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FittedModels, SensitivityScale};
use crate::gformula::{
    reduce_weighted_grid, EffectEstimates, EffectFlavor, Engine, MonteCarloConfig, WeightVector,
};
use crate::model::Dataset;
use crate::rngutil::cell_rng;
use crate::special::{expit, logit, norm_cdf};
use crate::zoib::{draw_open_uniform, ZoibParams};
use rand::Rng;
use rand_distr::StandardNormal;

/// Conditional means are clamped to `[LOGIT_E_CLAMP, 1 - LOGIT_E_CLAMP]`
/// before the logit-scale shift. The GLM links cannot produce exact 0 or 1
/// in exact arithmetic, but float rounding can; each clamp is counted.
const LOGIT_E_CLAMP: f64 = 1e-12;

/// Default copula correlation for the logit scale (a deliberately large
/// value, since the shared-uniform coupling corresponds to `rho = 1`).
pub const DEFAULT_RHO: f64 = 0.95;

/// Sensitivity parameters: the confounding shift `lambda` (in logit- or
/// linear-scale units) and, for the logit scale only, the Gaussian-copula
/// correlation `rho` of the two counterfactual mediators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    pub lambda: f64,
    pub rho: f64,
}

impl SensitivityParams {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {rho}")));
        }
        Ok(Self { lambda, rho })
    }
}

/// One sensitivity estimate: the five effects plus the run's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub effects: EffectEstimates,
    pub lambda: f64,
    /// Copula correlation (logit scale only).
    pub rho: Option<f64>,
    pub scale: SensitivityScale,
    /// Cells whose conditional mean was clamped before the logit (logit
    /// scale only; zero on the linear scale).
    pub clamped: u64,
    /// Counterfactual outcomes that left `[0, 1]` (linear scale only;
    /// reported, never clipped).
    pub range_violations: u64,
    /// Weighted means of the simulated mediators `M*(0)`, `M*(1)`.
    pub mediator_means: [f64; 2],
}

/// Draw one pair of counterfactual mediators whose arms are coupled by a
/// Gaussian copula with correlation `rho`: `(Z0, Z1)` bivariate standard
/// normal, `U_a = Phi(Z_a)`, `M*(a)` the arm-`a` ZOIB quantile at `U_a`.
///
/// At `rho = 1` this reproduces the shared-uniform coupling exactly; the
/// marginal law of each `M*(a)` is the arm's ZOIB law for any `rho`.
pub fn sample_copula_mediators<R: Rng + ?Sized>(
    arm0: &ZoibParams,
    arm1: &ZoibParams,
    rho: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0, 1], got {rho}")));
    }
    let z0: f64 = rng.sample(StandardNormal);
    let w: f64 = rng.sample(StandardNormal);
    let z1 = rho * z0 + (1.0 - rho * rho).sqrt() * w;
    let hi = 1.0 - 0.5 * f64::EPSILON; // largest f64 below 1
    let u0 = norm_cdf(z0).clamp(f64::MIN_POSITIVE, hi);
    let u1 = norm_cdf(z1).clamp(f64::MIN_POSITIVE, hi);
    Ok((arm0.quantile(u0)?, arm1.quantile(u1)?))
}

struct UnitPartial {
    grid: [[f64; 2]; 2],
    med_sum: [f64; 2],
    counter: u64,
}

fn finish(
    per_unit: Vec<UnitPartial>,
    weights: &WeightVector,
    k: usize,
    seed: u64,
    lambda: f64,
    rho: Option<f64>,
    scale: SensitivityScale,
) -> SensitivityRun {
    let grids: Vec<[[f64; 2]; 2]> = per_unit.iter().map(|u| u.grid).collect();
    let grid = reduce_weighted_grid(&grids, weights, k);
    let kf = k as f64;
    let mut med_means = [0.0_f64; 2];
    let mut counter = 0u64;
    for (unit, &w) in per_unit.iter().zip(weights.as_slice()) {
        for (mean, &s) in med_means.iter_mut().zip(&unit.med_sum) {
            *mean += w * (s / kf);
        }
        counter += unit.counter;
    }
    let effects = EffectEstimates::from_grid(grid, EffectFlavor::Average, k, seed);
    SensitivityRun {
        effects,
        lambda,
        rho,
        scale,
        clamped: if scale == SensitivityScale::Logit { counter } else { 0 },
        range_violations: if scale == SensitivityScale::Linear { counter } else { 0 },
        mediator_means: med_means,
    }
}

/// Logit-scale sensitivity estimate under `cfg` (weights and cell streams
/// derived from `cfg.master_seed`).
pub fn estimate_effects_logit(
    models: &FittedModels,
    dataset: &Dataset,
    sens: &SensitivityParams,
    cfg: &MonteCarloConfig,
) -> Result<SensitivityRun> {
    let weights = cfg.weights(dataset.n())?;
    let mut run =
        estimate_effects_logit_with(models, dataset, sens, &weights, cfg.k, cfg.mc_seed())?;
    run.effects.seed = cfg.master_seed;
    Ok(run)
}

/// Logit-scale sensitivity estimate with explicit weights and cell seed.
pub fn estimate_effects_logit_with(
    models: &FittedModels,
    dataset: &Dataset,
    sens: &SensitivityParams,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<SensitivityRun> {
    let sens = SensitivityParams::new(sens.lambda, sens.rho)?; // re-validate
    let engine = Engine::new(models, dataset)?;
    logit_from_engine(&engine, &sens, weights, k, mc_seed)
}

pub(crate) fn logit_from_engine(
    engine: &Engine,
    sens: &SensitivityParams,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<SensitivityRun> {
    check_shape(engine.n(), weights, k)?;
    let (lambda, rho) = (sens.lambda, sens.rho);
    let sqrt_term = (1.0 - rho * rho).sqrt();
    let hi = 1.0 - 0.5 * f64::EPSILON;

    let per_unit: Vec<UnitPartial> = (0..engine.n())
        .into_par_iter()
        .map(|i| -> Result<UnitPartial> {
            let mut grid = [[0.0_f64; 2]; 2];
            let mut med_sum = [0.0_f64; 2];
            let mut clamped = 0u64;
            for kk in 0..k {
                let mut rng = cell_rng(mc_seed, i, kk);
                // Per-cell draw order: Z0, then the independent component W.
                let z0: f64 = rng.sample(StandardNormal);
                let w: f64 = rng.sample(StandardNormal);
                let z1 = rho * z0 + sqrt_term * w;
                let u0 = norm_cdf(z0).clamp(f64::MIN_POSITIVE, hi);
                let u1 = norm_cdf(z1).clamp(f64::MIN_POSITIVE, hi);
                let m = [
                    engine.mediator_params(i, 0).quantile(u0)?,
                    engine.mediator_params(i, 1).quantile(u1)?,
                ];
                med_sum[0] += m[0];
                med_sum[1] += m[1];
                for (a_prime, row) in grid.iter_mut().enumerate() {
                    for (a, slot) in row.iter_mut().enumerate() {
                        let e = engine.outcome_mean(i, a_prime, m[a]);
                        let shift = lambda * (m[a_prime] - m[a]);
                        let y = if shift == 0.0 {
                            // expit(logit(E)) round-trips only approximately;
                            // a zero shift must leave E untouched.
                            e
                        } else {
                            let ec = e.clamp(LOGIT_E_CLAMP, 1.0 - LOGIT_E_CLAMP);
                            if ec != e {
                                clamped += 1;
                            }
                            expit(logit(ec) + shift)
                        };
                        *slot += y;
                    }
                }
            }
            Ok(UnitPartial { grid, med_sum, counter: clamped })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(finish(per_unit, weights, k, mc_seed, lambda, Some(rho), SensitivityScale::Logit))
}

/// Linear-scale sensitivity estimate under `cfg`. At `lambda = 0` this is
/// bit-identical to [`crate::gformula::estimate_average_effects`] under the
/// same configuration: both arms share a single uniform per cell and the
/// zero shift short-circuits to the unperturbed conditional mean.
pub fn estimate_effects_linear(
    models: &FittedModels,
    dataset: &Dataset,
    lambda: f64,
    cfg: &MonteCarloConfig,
) -> Result<SensitivityRun> {
    let weights = cfg.weights(dataset.n())?;
    let mut run = estimate_effects_linear_with(models, dataset, lambda, &weights, cfg.k, cfg.mc_seed())?;
    run.effects.seed = cfg.master_seed;
    Ok(run)
}

/// Linear-scale sensitivity estimate with explicit weights and cell seed.
pub fn estimate_effects_linear_with(
    models: &FittedModels,
    dataset: &Dataset,
    lambda: f64,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<SensitivityRun> {
    if !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite, got {lambda}")));
    }
    let engine = Engine::new(models, dataset)?;
    linear_from_engine(&engine, lambda, weights, k, mc_seed)
}

pub(crate) fn linear_from_engine(
    engine: &Engine,
    lambda: f64,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<SensitivityRun> {
    check_shape(engine.n(), weights, k)?;
    let per_unit: Vec<UnitPartial> = (0..engine.n())
        .into_par_iter()
        .map(|i| -> Result<UnitPartial> {
            let mut grid = [[0.0_f64; 2]; 2];
            let mut med_sum = [0.0_f64; 2];
            let mut violations = 0u64;
            for kk in 0..k {
                // Same substream and same single-uniform draw as the
                // average estimator's cell.
                let mut rng = cell_rng(mc_seed, i, kk);
                let u = draw_open_uniform(&mut rng);
                let m = [
                    engine.mediator_params(i, 0).quantile(u)?,
                    engine.mediator_params(i, 1).quantile(u)?,
                ];
                med_sum[0] += m[0];
                med_sum[1] += m[1];
                for (a_prime, row) in grid.iter_mut().enumerate() {
                    for (a, slot) in row.iter_mut().enumerate() {
                        let e = engine.outcome_mean(i, a_prime, m[a]);
                        let shift = lambda * (m[a_prime] - m[a]);
                        let y = if shift == 0.0 { e } else { e + shift };
                        if !(0.0..=1.0).contains(&y) {
                            violations += 1;
                        }
                        *slot += y;
                    }
                }
            }
            Ok(UnitPartial { grid, med_sum, counter: violations })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(finish(per_unit, weights, k, mc_seed, lambda, None, SensitivityScale::Linear))
}

fn check_shape(n: usize, weights: &WeightVector, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("monte carlo replicate count k must be at least 1".into()));
    }
    if weights.len() != n {
        return Err(Error::Config(format!(
            "weight vector has length {}, dataset has {n} rows",
            weights.len()
        )));
    }
    Ok(())
}

/// Evaluate a whole grid of `lambda` values with common random numbers: one
/// weight vector and one cell-stream seed, both derived from `cfg`, shared
/// by every row, so the curves reflect `lambda` alone. `rho` is used by the
/// logit scale only.
pub fn sensitivity_grid(
    models: &FittedModels,
    dataset: &Dataset,
    lambdas: &[f64],
    rho: f64,
    scale: SensitivityScale,
    cfg: &MonteCarloConfig,
) -> Result<Vec<SensitivityRun>> {
    if lambdas.is_empty() {
        return Err(Error::Config("sensitivity grid needs at least one lambda".into()));
    }
    let weights = cfg.weights(dataset.n())?;
    let mc_seed = cfg.mc_seed();
    let engine = Engine::new(models, dataset)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let mut run = match scale {
                SensitivityScale::Logit => {
                    let sens = SensitivityParams::new(lambda, rho)?;
                    logit_from_engine(&engine, &sens, &weights, cfg.k, mc_seed)?
                }
                SensitivityScale::Linear => {
                    if !lambda.is_finite() {
                        return Err(Error::Config(format!(
                            "lambda must be finite, got {lambda}"
                        )));
                    }
                    linear_from_engine(&engine, lambda, &weights, cfg.k, mc_seed)?
                }
            };
            run.effects.seed = cfg.master_seed;
            Ok(run)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_all;
    use crate::gformula::estimate_average_effects;
    use crate::model::ModelSpec;
    use crate::testutil::{synthetic_dataset, synthetic_truth};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> FittedModels {
        FittedModels {
            coefficients: synthetic_truth(),
            spec: ModelSpec::default(),
            loglik: 0.0,
            converged: true,
            component_iterations: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn assert_decomposition(e: &EffectEstimates) {
        let tol = 4.0 * f64::EPSILON;
        assert!((e.delta1 + e.zeta0 - e.tau).abs() <= tol);
        assert!((e.delta0 + e.zeta1 - e.tau).abs() <= tol);
    }

    #[test]
    fn copula_limits_and_independence() {
        let m = models();
        let data = synthetic_dataset(21, 10);
        let engine = Engine::new(&m, &data).unwrap();
        let arm0 = engine.mediator_params(0, 0);
        let arm1 = engine.mediator_params(0, 1);

        // rho = 1: shared normal, so with equal arm params the two draws
        // coincide bitwise.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (a, b) = sample_copula_mediators(&arm0, &arm0, 1.0, &mut rng).unwrap();
            assert_eq!(a, b);
        }

        // rho = 0: the uniforms driving the two arms are independent.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000usize;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            // Correlate the underlying uniforms, not the mediators (whose
            // atoms would blur the check): reuse the internal construction.
            let z0: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            let u0 = norm_cdf(z0);
            let u1 = norm_cdf(w);
            sx += u0;
            sy += u1;
            sxx += u0 * u0;
            syy += u1 * u1;
            sxy += u0 * u1;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)).sqrt() * (syy / nf - (sy / nf).powi(2)).sqrt());
        assert!(corr.abs() < 0.004, "empirical corr {corr}");

        // Invalid rho rejected.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_copula_mediators(&arm0, &arm1, -0.1, &mut rng).is_err());
        assert!(sample_copula_mediators(&arm0, &arm1, 1.1, &mut rng).is_err());
        assert!(SensitivityParams::new(0.0, 1.5).is_err());
        assert!(SensitivityParams::new(f64::NAN, 0.5).is_err());
    }

    /// Two-sample Kolmogorov-Smirnov distance (ties handled by stepping both
    /// empirical CDFs at shared points).
    fn ks_distance(a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
        while i < a.len() && j < b.len() {
            let t = a[i].min(b[j]);
            while i < a.len() && a[i] <= t {
                i += 1;
            }
            while j < b.len() && b[j] <= t {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn copula_sampling_preserves_mediator_marginals() {
        let m = models();
        let data = synthetic_dataset(22, 10);
        let engine = Engine::new(&m, &data).unwrap();
        let arm0 = engine.mediator_params(0, 0);
        let arm1 = engine.mediator_params(0, 1);

        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut cop0 = Vec::with_capacity(n);
        let mut cop1 = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = sample_copula_mediators(&arm0, &arm1, 0.6, &mut rng).unwrap();
            cop0.push(a);
            cop1.push(b);
        }
        let mut direct0: Vec<f64> = (0..n).map(|_| arm0.sample(&mut rng)).collect();
        let mut direct1: Vec<f64> = (0..n).map(|_| arm1.sample(&mut rng)).collect();

        // 1% critical value for the two-sample KS statistic.
        let crit = 1.628 * ((2 * n) as f64 / (n * n) as f64).sqrt();
        let d0 = ks_distance(&mut cop0, &mut direct0);
        let d1 = ks_distance(&mut cop1, &mut direct1);
        assert!(d0 < crit, "arm 0 KS {d0} vs critical {crit}");
        assert!(d1 < crit, "arm 1 KS {d1} vs critical {crit}");
    }

    #[test]
    fn logit_lambda_zero_is_rho_free_and_matches_average_estimator() {
        let m = models();
        let data = synthetic_dataset(23, 25);
        let cfg = MonteCarloConfig { k: 4000, use_dirichlet_weights: false, master_seed: 11 };
        let avg = estimate_average_effects(&m, &data, &cfg).unwrap();

        // Spread of the estimator over fresh seeds, as a yardstick.
        let mut spread = [0.0_f64; 5];
        let runs: Vec<_> = (0..4)
            .map(|s| {
                let c = MonteCarloConfig { master_seed: 300 + s, ..cfg };
                estimate_average_effects(&m, &data, &c).unwrap().as_array()
            })
            .collect();
        for comp in 0..5 {
            let xs: Vec<f64> = runs.iter().map(|r| r[comp]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            spread[comp] = var.sqrt();
        }

        for rho in [0.0, 0.5, 0.95] {
            let sens = SensitivityParams::new(0.0, rho).unwrap();
            let run = estimate_effects_logit(&m, &data, &sens, &cfg).unwrap();
            assert_eq!(run.clamped, 0, "zero shift never clamps");
            assert_eq!(run.range_violations, 0);
            assert_decomposition(&run.effects);
            for ((got, want), sd) in run
                .effects
                .as_array()
                .into_iter()
                .zip(avg.as_array())
                .zip(spread)
            {
                let tol = (3.0 * 2.0 * sd).max(2e-3);
                assert!(
                    (got - want).abs() < tol,
                    "rho={rho}: {got} vs average {want} (tol {tol})"
                );
            }
        }
    }

    #[test]
    fn logit_decomposition_and_clamp_counter() {
        let m = models();
        let data = synthetic_dataset(24, 30);
        let cfg = MonteCarloConfig { k: 20, use_dirichlet_weights: true, master_seed: 12 };
        for (lambda, rho) in [(0.8, 0.95), (-1.2, 0.3), (2.5, 0.0)] {
            let sens = SensitivityParams::new(lambda, rho).unwrap();
            let run = estimate_effects_logit(&m, &data, &sens, &cfg).unwrap();
            assert_decomposition(&run.effects);
            assert!(run.effects.as_array().iter().all(|v| v.is_finite()));
            assert!(run.mediator_means.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        // Clamp counter: drive the conditional mean below 1e-12 by making
        // the outcome almost surely zero, then shift with lambda != 0.
        let mut extreme = models();
        extreme.coefficients.outcome.alpha.banks[0] = vec![30.0, 0.0, 0.0, 0.0, 0.0];
        let sens = SensitivityParams::new(1.0, 0.5).unwrap();
        let run = estimate_effects_logit(&extreme, &data, &sens, &cfg).unwrap();
        assert!(run.clamped > 0, "expected clamping with E ~ 7e-14");
        assert!(run.effects.as_array().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn linear_lambda_zero_is_bitwise_the_average_estimator() {
        let m = models();
        let data = synthetic_dataset(25, 40);
        for use_dirichlet in [false, true] {
            let cfg = MonteCarloConfig { k: 6, use_dirichlet_weights: use_dirichlet, master_seed: 13 };
            let avg = estimate_average_effects(&m, &data, &cfg).unwrap();
            let run = estimate_effects_linear(&m, &data, 0.0, &cfg).unwrap();
            assert_eq!(run.effects, avg);
            assert_eq!(run.range_violations, 0);
        }
    }

    #[test]
    fn linear_is_exactly_affine_in_lambda() {
        let m = models();
        let data = synthetic_dataset(26, 35);
        let cfg = MonteCarloConfig { k: 8, use_dirichlet_weights: false, master_seed: 14 };
        let base = estimate_effects_linear(&m, &data, 0.0, &cfg).unwrap();
        let diff = base.mediator_means[1] - base.mediator_means[0];
        assert!(diff.abs() > 1e-4, "synthetic truth moves the mediator");

        for lambda in [-0.9, 0.4, 1.7] {
            let run = estimate_effects_linear(&m, &data, lambda, &cfg).unwrap();
            // tau is exactly invariant: the diagonal grid entries carry a
            // zero shift, so their sums are bitwise unchanged.
            assert_eq!(run.effects.tau, base.effects.tau);
            assert_eq!(run.mediator_means, base.mediator_means);
            // delta(a)(lambda) - delta(a)(0) = -lambda * (Mbar1 - Mbar0),
            // zeta(a)(lambda) - zeta(a)(0) = +lambda * (Mbar1 - Mbar0),
            // up to summation rounding across N*K cells.
            let tol = 1e-10;
            assert!((run.effects.delta0 - base.effects.delta0 + lambda * diff).abs() < tol);
            assert!((run.effects.delta1 - base.effects.delta1 + lambda * diff).abs() < tol);
            assert!((run.effects.zeta0 - base.effects.zeta0 - lambda * diff).abs() < tol);
            assert!((run.effects.zeta1 - base.effects.zeta1 - lambda * diff).abs() < tol);
            assert_decomposition(&run.effects);
        }
    }

    #[test]
    fn linear_range_violations_are_counted_not_clipped() {
        let mut m = models();
        // Push conditional means near 1 so positive shifts overflow the range.
        m.coefficients.outcome.mu.banks[0][0] = 3.5;
        let data = synthetic_dataset(27, 30);
        let cfg = MonteCarloConfig { k: 10, use_dirichlet_weights: false, master_seed: 15 };
        let base = estimate_effects_linear(&m, &data, 0.0, &cfg).unwrap();
        assert_eq!(base.range_violations, 0);
        let run = estimate_effects_linear(&m, &data, 5.0, &cfg).unwrap();
        assert!(run.range_violations > 0);
        // Not clipped: tau still bitwise equal, affine structure intact.
        assert_eq!(run.effects.tau, base.effects.tau);
    }

    #[test]
    fn grid_uses_common_random_numbers() {
        let m = models();
        let data = synthetic_dataset(28, 30);
        let cfg = MonteCarloConfig { k: 6, use_dirichlet_weights: true, master_seed: 16 };

        let lambdas = [-0.6, -0.3, 0.0, 0.3, 0.6];
        let grid =
            sensitivity_grid(&m, &data, &lambdas, DEFAULT_RHO, SensitivityScale::Linear, &cfg)
                .unwrap();
        assert_eq!(grid.len(), lambdas.len());

        // lambda = 0 row reproduces the average estimator bitwise.
        let avg = estimate_average_effects(&m, &data, &cfg).unwrap();
        assert_eq!(grid[2].effects, avg);

        // tau column constant bitwise; mediator means shared.
        for row in &grid {
            assert_eq!(row.effects.tau, grid[2].effects.tau);
            assert_eq!(row.mediator_means, grid[2].mediator_means);
        }

        // +/- lambda rows reflect around the lambda = 0 row.
        for (neg, pos) in [(0usize, 4usize), (1, 3)] {
            let up = grid[pos].effects.delta0 - grid[2].effects.delta0;
            let down = grid[neg].effects.delta0 - grid[2].effects.delta0;
            assert!((up + down).abs() < 1e-10, "reflection broke: {up} vs {down}");
        }

        // Logit grid: deterministic, single lambda = 0 point matches the
        // non-grid entry point.
        let lgrid =
            sensitivity_grid(&m, &data, &[0.0], 0.5, SensitivityScale::Logit, &cfg).unwrap();
        let sens = SensitivityParams::new(0.0, 0.5).unwrap();
        let single = estimate_effects_logit(&m, &data, &sens, &cfg).unwrap();
        assert_eq!(lgrid[0], single);

        assert!(sensitivity_grid(&m, &data, &[], 0.5, SensitivityScale::Linear, &cfg).is_err());
    }

    #[test]
    fn sensitivity_never_touches_the_fit() {
        let data = synthetic_dataset(29, 150);
        let spec = ModelSpec::default();
        let fitted = fit_all(&data, &spec).unwrap();
        let before = serde_json::to_string(&fitted.coefficients).unwrap();

        let cfg = MonteCarloConfig { k: 4, use_dirichlet_weights: false, master_seed: 17 };
        let sens = SensitivityParams::new(1.1, 0.9).unwrap();
        estimate_effects_logit(&fitted, &data, &sens, &cfg).unwrap();
        estimate_effects_linear(&fitted, &data, 0.7, &cfg).unwrap();

        let refit = fit_all(&data, &spec).unwrap();
        let after = serde_json::to_string(&refit.coefficients).unwrap();
        assert_eq!(before, after, "sensitivity run must not perturb fitting");
    }
}
