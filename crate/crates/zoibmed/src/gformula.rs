//! Monte Carlo g-formula estimators for natural direct and indirect effects.
//!
//! Every estimator in this module reduces to one grid of four counterfactual
//! summaries `S[a'][a]`, where `a'` is the treatment arm fed to the outcome
//! model and `a` is the arm whose mediator distribution supplies `M*`:
//!
//! ```text
//! delta(a) = S[a][1] - S[a][0]      (natural indirect effect)
//! zeta(a)  = S[1][a] - S[0][a]      (natural direct effect)
//! tau      = S[1][1] - S[0][0]      (total effect)
//! ```
//!
//! so `delta(1) + zeta(0)` and `delta(0) + zeta(1)` telescope to `tau` up to
//! floating-point addition order (at most a few ulps; see
//! [`EffectEstimates`]).
//!
//! For the **average** flavor, `S[a'][a]` is a weighted Monte Carlo average:
//! for each unit `i` and replicate `k < K`, a single uniform `U` is drawn,
//! the counterfactual mediators `M*(0)` and `M*(1)` are its ZOIB quantiles
//! under each arm (comonotone coupling, which cancels mediator noise from the
//! indirect-effect contrast), and the outcome enters through its *conditional
//! mean* — outcomes are never sampled, which removes their Monte Carlo noise
//! entirely.
//!
//! For the **quantile** flavor, `S[a'][a]` is an empirical quantile of a
//! pooled sample of *drawn* outcomes: each cell resamples a covariate row
//! with probability proportional to the weights, draws the mediators from a
//! shared uniform, and draws the outcome from a second shared uniform via the
//! outcome ZOIB quantile, giving `N*K` pooled draws per grid entry.
//!
//! Determinism: cell `(i, k)` consumes an independent substream of the master
//! seed ([`crate::rngutil::cell_seed`]), and per-unit partial sums are
//! collected in unit order before a sequential reduction, so results are
//! bit-identical regardless of thread count or scheduling.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FittedModels;
use crate::model::{build_design, dot_lr, params_from_linear_predictors, Dataset};
use crate::rngutil::{cell_rng, cell_seed, derive_seed, derived_rng, tags};
use crate::zoib::{draw_open_uniform, ZoibParams};

/// Tolerance slack on the sum-to-one check of [`WeightVector::new`], beyond
/// the fixed 1e-12 budget, to absorb sequential-summation rounding at large N.
const WEIGHT_SUM_SLACK_PER_N: f64 = 8.0 * f64::EPSILON;

/// A validated vector of resampling weights: nonnegative, finite, summing to
/// one (within rounding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validate and wrap a weight vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("weight vector must be nonempty".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "weight {i} is {w}; weights must be finite and nonnegative"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        let tol = 1e-12 + WEIGHT_SUM_SLACK_PER_N * weights.len() as f64;
        if (sum - 1.0).abs() > tol {
            return Err(Error::Config(format!(
                "weights sum to {sum}, not 1 (tolerance {tol:.3e})"
            )));
        }
        Ok(Self(weights))
    }

    /// The uniform vector `(1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need n >= 1");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Running-sum vector used for inverse-CDF resampling of covariate rows.
    pub(crate) fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.0
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect()
    }
}

/// Draw `Dirichlet(1, ..., 1)` weights by normalizing unit-exponential draws.
///
/// For `n = 1` the result is exactly `[1.0]` (IEEE division `e / e`).
pub fn sample_dirichlet_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::Config("cannot draw a zero-length weight vector".into()));
    }
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(Error::Config(format!(
            "exponential draws for Dirichlet weights summed to {sum}"
        )));
    }
    WeightVector::new(draws.into_iter().map(|e| e / sum).collect())
}

/// Settings for one Monte Carlo effect run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Mediator replicates per unit (`K`). Default 10; `K = 2` is the cheap
    /// setting for bootstrap-heavy workloads.
    pub k: usize,
    /// Draw a fresh `Dirichlet(1, ..., 1)` weight vector from the master seed
    /// instead of uniform `1/N` weights. Point estimates use uniform weights;
    /// Bayesian-bootstrap replicate runs turn this on.
    pub use_dirichlet_weights: bool,
    /// Master seed; all weight and cell streams derive from it.
    pub master_seed: u64,
}

impl MonteCarloConfig {
    pub fn new(master_seed: u64) -> Self {
        Self { k: 10, use_dirichlet_weights: false, master_seed }
    }

    /// The weight vector this configuration implies for an `n`-row dataset.
    pub fn weights(&self, n: usize) -> Result<WeightVector> {
        if self.use_dirichlet_weights {
            sample_dirichlet_weights(n, &mut derived_rng(self.master_seed, tags::WEIGHTS))
        } else {
            Ok(WeightVector::uniform(n))
        }
    }

    /// Seed of the per-cell stream family for this run.
    pub fn mc_seed(&self) -> u64 {
        derive_seed(self.master_seed, tags::CELLS)
    }
}

/// Which functional of the counterfactual outcome distribution is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectFlavor {
    /// Mean-scale effects via conditional-mean outcomes.
    Average,
    /// Quantile-scale effects at probability `q` via sampled outcomes.
    Quantile { q: f64 },
}

/// How mediator and outcome uniforms are shared across the four grid entries
/// of the quantile estimator. The marginal law of each pooled sample is the
/// same either way; only the joint coupling (and hence Monte Carlo noise of
/// the *contrasts*) changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantileCoupling {
    /// One uniform for both mediator arms and one for all four outcomes
    /// (the estimator's definition; minimizes contrast variance).
    Comonotone,
    /// Fresh uniforms per mediator arm and per grid entry (diagnostic mode).
    Independent,
}

/// Point estimates of the five mediation effects from one Monte Carlo run.
///
/// `delta1 + zeta0` and `delta0 + zeta1` both telescope to `tau`; because all
/// five are differences of the same four grid summaries accumulated in one
/// shared order, the identity holds to within 4 ulps of the grid scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    /// Natural indirect effect `delta(0)`.
    pub delta0: f64,
    /// Natural indirect effect `delta(1)`.
    pub delta1: f64,
    /// Natural direct effect `zeta(0)`.
    pub zeta0: f64,
    /// Natural direct effect `zeta(1)`.
    pub zeta1: f64,
    /// Total effect `tau`.
    pub tau: f64,
    pub flavor: EffectFlavor,
    /// Mediator replicates per unit used by the run.
    pub k: usize,
    /// The seed this run's streams derived from (the master seed when the
    /// run came from a [`MonteCarloConfig`], otherwise the explicit cell
    /// seed handed to the `_with` entry point).
    pub seed: u64,
}

impl EffectEstimates {
    /// Assemble the five effects from the counterfactual grid `s[a'][a]`.
    pub(crate) fn from_grid(s: [[f64; 2]; 2], flavor: EffectFlavor, k: usize, seed: u64) -> Self {
        Self {
            delta0: s[0][1] - s[0][0],
            delta1: s[1][1] - s[1][0],
            zeta0: s[1][0] - s[0][0],
            zeta1: s[1][1] - s[0][1],
            tau: s[1][1] - s[0][0],
            flavor,
            k,
            seed,
        }
    }

    /// The five effects in reporting order.
    pub fn as_array(&self) -> [f64; 5] {
        [self.delta0, self.delta1, self.zeta0, self.zeta1, self.tau]
    }

    /// Names matching [`Self::as_array`] order.
    pub const NAMES: [&'static str; 5] = ["delta0", "delta1", "zeta0", "zeta1", "tau"];
}

/// Monte Carlo standard errors of the five effects, from repeated reruns with
/// fixed weights and fresh cell streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectStandardErrors {
    pub delta0: f64,
    pub delta1: f64,
    pub zeta0: f64,
    pub zeta1: f64,
    pub tau: f64,
    /// Number of reruns the standard deviations were taken over.
    pub runs: usize,
}

impl EffectStandardErrors {
    pub fn as_array(&self) -> [f64; 5] {
        [self.delta0, self.delta1, self.zeta0, self.zeta1, self.tau]
    }
}

/// Precomputed per-unit linear-predictor state for one fitted model pair.
///
/// The mediator design has no mediator column, so its four linear predictors
/// are complete per `(i, arm)` and are stored as ready [`ZoibParams`]. The
/// outcome design carries the mediator in its *last* column, so we store the
/// left-to-right partial dot product over every earlier column plus the
/// mediator coefficient; completing it as `base + m * coef` reproduces
/// [`crate::model::predict_zoib_params`] bit for bit because
/// [`dot_lr`] accumulates left to right.
pub(crate) struct Engine {
    med: Vec<[ZoibParams; 2]>,
    out_base: Vec<[[f64; 4]; 2]>,
    out_mcoef: [[f64; 4]; 2],
}

impl Engine {
    pub(crate) fn new(models: &FittedModels, dataset: &Dataset) -> Result<Self> {
        let rows: Vec<&[f64]> = (0..dataset.n()).map(|i| dataset.covariate_row(i)).collect();
        Self::from_covariates(&models.coefficients, &models.spec, &rows)
    }

    /// Build the engine over raw covariate rows (no mediator/outcome data
    /// needed): used by the simulation harness's ground-truth integration,
    /// which evaluates the estimator over a covariate pool.
    pub(crate) fn from_covariates(
        coefs: &crate::model::CoefficientSet,
        spec: &crate::model::ModelSpec,
        rows: &[&[f64]],
    ) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        let w_med = spec.design_width(p, false);
        let w_out = spec.design_width(p, true);

        for (name, comp) in coefs.mediator.components() {
            for a in 0..2u8 {
                if comp.bank(a).len() != w_med {
                    return Err(Error::Config(format!(
                        "mediator {name} bank for arm {a} has width {}, expected {w_med}",
                        comp.bank(a).len()
                    )));
                }
            }
        }
        let mut out_mcoef = [[0.0_f64; 4]; 2];
        for (c, (name, comp)) in coefs.outcome.components().into_iter().enumerate() {
            for a in 0..2u8 {
                let bank = comp.bank(a);
                if bank.len() != w_out {
                    return Err(Error::Config(format!(
                        "outcome {name} bank for arm {a} has width {}, expected {w_out}",
                        bank.len()
                    )));
                }
                out_mcoef[a as usize][c] = bank[w_out - 1];
            }
        }

        let n = rows.len();
        let mut med = Vec::with_capacity(n);
        let mut out_base = Vec::with_capacity(n);
        for &x in rows {
            let mut med_i = [ZoibParams::new_unchecked(0.5, 0.5, 0.5, 1.0); 2];
            let mut base_i = [[0.0_f64; 4]; 2];
            for a in 0..2u8 {
                // Same row prefix the full outcome design would start with.
                let row = build_design(spec, x, a, None);
                med_i[a as usize] =
                    crate::model::predict_zoib_params(&coefs.mediator, &row, a)?;
                for (c, (name, comp)) in coefs.outcome.components().into_iter().enumerate() {
                    let bank = comp.bank(a);
                    let v = dot_lr(&row, &bank[..w_out - 1]);
                    if !v.is_finite() {
                        return Err(Error::NonFinitePredictor { component: name.to_string() });
                    }
                    base_i[a as usize][c] = v;
                }
            }
            med.push(med_i);
            out_base.push(base_i);
        }
        Ok(Self { med, out_base, out_mcoef })
    }

    pub(crate) fn n(&self) -> usize {
        self.med.len()
    }

    /// Counterfactual mediator distribution for unit `i` under arm `a`.
    #[inline]
    pub(crate) fn mediator_params(&self, i: usize, a: usize) -> ZoibParams {
        self.med[i][a]
    }

    /// Counterfactual outcome distribution for unit `i`, treatment `a_prime`,
    /// and mediator value `m`. Bitwise identical to rebuilding the full
    /// design row and calling [`crate::model::predict_zoib_params`].
    #[inline]
    pub(crate) fn outcome_params(&self, i: usize, a_prime: usize, m: f64) -> ZoibParams {
        let b = &self.out_base[i][a_prime];
        let c = &self.out_mcoef[a_prime];
        params_from_linear_predictors(
            b[0] + m * c[0],
            b[1] + m * c[1],
            b[2] + m * c[2],
            b[3] + m * c[3],
        )
    }

    /// Conditional mean outcome for unit `i`, treatment `a_prime`, mediator `m`.
    #[inline]
    pub(crate) fn outcome_mean(&self, i: usize, a_prime: usize, m: f64) -> f64 {
        self.outcome_params(i, a_prime, m).mean()
    }
}

fn check_run_shape(n: usize, weights: &WeightVector, k: usize) -> Result<()> {
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

/// Estimate average-scale effects under `cfg` (weights and cell streams both
/// derived from `cfg.master_seed`).
pub fn estimate_average_effects(
    models: &FittedModels,
    dataset: &Dataset,
    cfg: &MonteCarloConfig,
) -> Result<EffectEstimates> {
    let weights = cfg.weights(dataset.n())?;
    let mut est = estimate_average_effects_with(models, dataset, &weights, cfg.k, cfg.mc_seed())?;
    est.seed = cfg.master_seed;
    Ok(est)
}

/// Average-scale effects with explicit weights and cell-stream seed. This is
/// the common-random-numbers entry point: reruns that share `mc_seed` share
/// every uniform, and reruns that share `weights` hold the resampling fixed.
pub fn estimate_average_effects_with(
    models: &FittedModels,
    dataset: &Dataset,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<EffectEstimates> {
    check_run_shape(dataset.n(), weights, k)?;
    let engine = Engine::new(models, dataset)?;
    average_from_engine(&engine, weights, k, mc_seed)
}

pub(crate) fn average_from_engine(
    engine: &Engine,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
) -> Result<EffectEstimates> {
    let n = engine.n();
    check_run_shape(n, weights, k)?;
    // Per-unit partial grids, computed in parallel but collected in unit
    // order and reduced sequentially: bit-identical for any thread count.
    let per_unit: Vec<[[f64; 2]; 2]> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<[[f64; 2]; 2]> {
            let mut s = [[0.0_f64; 2]; 2];
            for kk in 0..k {
                let mut rng = cell_rng(mc_seed, i, kk);
                let u = draw_open_uniform(&mut rng);
                let m = [
                    engine.mediator_params(i, 0).quantile(u)?,
                    engine.mediator_params(i, 1).quantile(u)?,
                ];
                for (a_prime, row) in s.iter_mut().enumerate() {
                    for (a, slot) in row.iter_mut().enumerate() {
                        *slot += engine.outcome_mean(i, a_prime, m[a]);
                    }
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let grid = reduce_weighted_grid(&per_unit, weights, k);
    Ok(EffectEstimates::from_grid(grid, EffectFlavor::Average, k, mc_seed))
}

/// Weighted sequential reduction of per-unit partial grids: each unit's
/// K-cell sum is divided by K and scaled by its weight, in unit order.
/// Shared by the average estimator and the sensitivity estimators so that a
/// zero sensitivity shift reproduces the average estimator bit for bit.
pub(crate) fn reduce_weighted_grid(
    per_unit: &[[[f64; 2]; 2]],
    weights: &WeightVector,
    k: usize,
) -> [[f64; 2]; 2] {
    let kf = k as f64;
    let mut grid = [[0.0_f64; 2]; 2];
    for (i, cell) in per_unit.iter().enumerate() {
        let w = weights.as_slice()[i];
        for (a_prime, row) in grid.iter_mut().enumerate() {
            for (a, slot) in row.iter_mut().enumerate() {
                *slot += w * (cell[a_prime][a] / kf);
            }
        }
    }
    grid
}

/// First index `j` with `cum[j] > u`, clamped to the last index (guards the
/// case where rounding leaves the final cumulative weight slightly below 1).
fn pick_index(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Estimate quantile-scale effects at probability `q` under `cfg`, with the
/// estimator's comonotone coupling.
pub fn estimate_quantile_effects(
    models: &FittedModels,
    dataset: &Dataset,
    q: f64,
    cfg: &MonteCarloConfig,
) -> Result<EffectEstimates> {
    let weights = cfg.weights(dataset.n())?;
    let mut est = estimate_quantile_effects_with(
        models,
        dataset,
        q,
        &weights,
        cfg.k,
        cfg.mc_seed(),
        QuantileCoupling::Comonotone,
    )?;
    est.seed = cfg.master_seed;
    Ok(est)
}

/// Quantile-scale effects with explicit weights, cell-stream seed, and
/// coupling choice.
pub fn estimate_quantile_effects_with(
    models: &FittedModels,
    dataset: &Dataset,
    q: f64,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
    coupling: QuantileCoupling,
) -> Result<EffectEstimates> {
    check_run_shape(dataset.n(), weights, k)?;
    let engine = Engine::new(models, dataset)?;
    quantile_from_engine(&engine, q, weights, k, mc_seed, coupling)
}

pub(crate) fn quantile_from_engine(
    engine: &Engine,
    q: f64,
    weights: &WeightVector,
    k: usize,
    mc_seed: u64,
    coupling: QuantileCoupling,
) -> Result<EffectEstimates> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile probability must be in (0, 1), got {q}")));
    }
    let n = engine.n();
    check_run_shape(n, weights, k)?;
    let cum = weights.cumulative();

    // One outcome draw per grid entry per cell, in cell order. Per-cell draw
    // order from the substream is fixed by the coupling:
    //   Comonotone:  x-pick, U, V
    //   Independent: x-pick, U0, U1, V[0][0], V[0][1], V[1][0], V[1][1]
    let cells: Vec<[[f64; 2]; 2]> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<[[f64; 2]; 2]>> {
            let mut out = Vec::with_capacity(k);
            for kk in 0..k {
                let mut rng = cell_rng(mc_seed, i, kk);
                let ux: f64 = rng.random();
                let j = pick_index(&cum, ux);
                let mut y = [[0.0_f64; 2]; 2];
                match coupling {
                    QuantileCoupling::Comonotone => {
                        let u = draw_open_uniform(&mut rng);
                        let v = draw_open_uniform(&mut rng);
                        let m = [
                            engine.mediator_params(j, 0).quantile(u)?,
                            engine.mediator_params(j, 1).quantile(u)?,
                        ];
                        for (a_prime, row) in y.iter_mut().enumerate() {
                            for (a, slot) in row.iter_mut().enumerate() {
                                *slot = engine.outcome_params(j, a_prime, m[a]).quantile(v)?;
                            }
                        }
                    }
                    QuantileCoupling::Independent => {
                        let u0 = draw_open_uniform(&mut rng);
                        let u1 = draw_open_uniform(&mut rng);
                        let m = [
                            engine.mediator_params(j, 0).quantile(u0)?,
                            engine.mediator_params(j, 1).quantile(u1)?,
                        ];
                        for (a_prime, row) in y.iter_mut().enumerate() {
                            for (a, slot) in row.iter_mut().enumerate() {
                                let v = draw_open_uniform(&mut rng);
                                *slot = engine.outcome_params(j, a_prime, m[a]).quantile(v)?;
                            }
                        }
                    }
                }
                out.push(y);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut grid = [[0.0_f64; 2]; 2];
    for (a_prime, row) in grid.iter_mut().enumerate() {
        for (a, slot) in row.iter_mut().enumerate() {
            let mut pool: Vec<f64> = cells.iter().map(|c| c[a_prime][a]).collect();
            pool.sort_unstable_by(f64::total_cmp);
            *slot = empirical_quantile_sorted(&pool, q);
        }
    }
    Ok(EffectEstimates::from_grid(grid, EffectFlavor::Quantile { q }, k, mc_seed))
}

/// Type-1 (inverse-CDF) empirical quantile of an ascending-sorted sample:
/// the order statistic with one-based rank `ceil(n * q)`.
pub(crate) fn empirical_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Type-1 empirical quantile of an arbitrary sample (sorts a copy).
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("empirical quantile of an empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile probability must be in (0, 1), got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("empirical quantile of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(empirical_quantile_sorted(&sorted, q))
}

/// Equal-tailed bootstrap percentile interval over replicate draws, using
/// the (B+1)-rank order-statistic convention: lower endpoint at one-based
/// rank `floor((B+1) * alpha)`, upper at `ceil((B+1) * (1 - alpha))`, both
/// clamped to the sample. Unlike the plain `ceil(B * q)` rule this leaves
/// `alpha` mass outside each tail symmetrically (e.g. B = 200, alpha =
/// 0.025 gives ranks 5 and 196, not 5 and 195), which matters for the
/// coverage of the reported intervals.
pub fn percentile_interval(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::Domain("percentile interval of an empty sample".into()));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Domain(format!(
            "interval tail probability must be in (0, 0.5), got {alpha}"
        )));
    }
    if draws.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("percentile interval of a sample containing NaN".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let lo_rank = (((n + 1) as f64 * alpha).floor() as usize).clamp(1, n);
    let hi_rank = (((n + 1) as f64 * (1.0 - alpha)).ceil() as usize).clamp(1, n);
    Ok((sorted[lo_rank - 1], sorted[hi_rank - 1]))
}

/// Monte Carlo standard errors of the five effects: the sample standard
/// deviation over `runs` independent reruns that share the weight vector
/// implied by `cfg` but draw fresh cell streams.
pub fn mc_error_estimate(
    models: &FittedModels,
    dataset: &Dataset,
    cfg: &MonteCarloConfig,
    flavor: EffectFlavor,
    runs: usize,
) -> Result<EffectStandardErrors> {
    if runs < 2 {
        return Err(Error::Config(format!(
            "monte carlo error estimation needs at least 2 reruns, got {runs}"
        )));
    }
    let weights = cfg.weights(dataset.n())?;
    check_run_shape(dataset.n(), &weights, cfg.k)?;
    let engine = Engine::new(models, dataset)?;
    let rerun_family = derive_seed(cfg.master_seed, tags::MC_ERROR);

    let mut samples: [Vec<f64>; 5] = Default::default();
    for rep in 0..runs {
        let seed = cell_seed(rerun_family, rep, 0);
        let est = match flavor {
            EffectFlavor::Average => average_from_engine(&engine, &weights, cfg.k, seed)?,
            EffectFlavor::Quantile { q } => quantile_from_engine(
                &engine,
                q,
                &weights,
                cfg.k,
                seed,
                QuantileCoupling::Comonotone,
            )?,
        };
        for (bucket, value) in samples.iter_mut().zip(est.as_array()) {
            bucket.push(value);
        }
    }

    let sd = |xs: &[f64]| -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(EffectStandardErrors {
        delta0: sd(&samples[0]),
        delta1: sd(&samples[1]),
        zeta0: sd(&samples[2]),
        zeta1: sd(&samples[3]),
        tau: sd(&samples[4]),
        runs,
    })
}
