//! The zero/one-inflated beta (ZOIB) distribution family.
//!
//! A ZOIB variable `Z` on `[0,1]` has
//!
//! ```text
//! Pr(Z = 0)              = α
//! Pr(Z = 1 | Z ≠ 0)      = γ
//! Z | Z ∉ {0,1}          ~ Beta(μφ, (1−μ)φ)
//! ```
//!
//! so its mean is `(1−α)γ + (1−α)(1−γ)μ`. Boundary masses and the interior
//! beta component are parameterized separately, which is what makes the
//! maximum-likelihood factorization in [`crate::fit`] exact.
//!
//! Sampling is by probability integral transform through the generalized
//! inverse CDF — one shared uniform can then drive several distributions
//! comonotonically, which the g-formula estimators rely on.

use crate::error::{Error, Result};
use crate::special::{beta_ln_pdf, betainc, expit, ln_beta, softplus};
use rand::Rng;

/// Interior values are clamped to `[ZLIM, 1-ZLIM]` before log evaluation so
/// floating-point representation of near-boundary interior values cannot
/// produce spurious infinities. Exact 0/1 are routed to the discrete
/// branches first.
pub const INTERIOR_LOG_CLAMP: f64 = 1e-12;

/// CDF-space tolerance of [`beta_quantile`].
pub const QUANTILE_CDF_TOL: f64 = 1e-10;

/// Iteration cap of [`beta_quantile`].
pub const QUANTILE_MAX_ITER: usize = 200;

/// Parameter quadruple `(α, γ, μ, φ)` of one ZOIB distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoibParams {
    /// Probability of the point mass at 0, in `[0, 1)`.
    pub alpha: f64,
    /// Conditional probability of the point mass at 1 given `Z ≠ 0`, in `[0, 1)`.
    pub gamma: f64,
    /// Mean of the interior beta component, in `(0, 1)`.
    pub mu: f64,
    /// Precision of the interior beta component, `> 0`.
    pub phi: f64,
}

impl ZoibParams {
    /// Validating constructor for production paths.
    ///
    /// The logit/log links that produce these parameters cannot reach the
    /// rejected boundary values, so hitting this error indicates a caller
    /// bug rather than bad data.
    pub fn new(alpha: f64, gamma: f64, mu: f64, phi: f64) -> Result<Self> {
        let ok = (0.0..1.0).contains(&alpha)
            && (0.0..1.0).contains(&gamma)
            && mu > 0.0
            && mu < 1.0
            && phi > 0.0
            && phi.is_finite()
            && alpha.is_finite()
            && gamma.is_finite()
            && mu.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!(
                "alpha={alpha}, gamma={gamma}, mu={mu}, phi={phi} \
                 (need alpha,gamma in [0,1), mu in (0,1), phi > 0)"
            )));
        }
        let p = Self { alpha, gamma, mu, phi };
        debug_assert!(p.alpha + (1.0 - p.alpha) * p.gamma <= 1.0 + 1e-15);
        debug_assert!(p.shape_a() > 0.0 && p.shape_b() > 0.0);
        Ok(p)
    }

    /// Unchecked constructor for test harnesses that need degenerate
    /// parameters (e.g. `α = 1`). Production code must use [`ZoibParams::new`].
    pub fn new_unchecked(alpha: f64, gamma: f64, mu: f64, phi: f64) -> Self {
        Self { alpha, gamma, mu, phi }
    }

    /// First beta shape, `μφ`.
    #[inline]
    pub fn shape_a(&self) -> f64 {
        self.mu * self.phi
    }

    /// Second beta shape, `(1−μ)φ`.
    #[inline]
    pub fn shape_b(&self) -> f64 {
        (1.0 - self.mu) * self.phi
    }

    /// Distribution mean `(1−α)γ + (1−α)(1−γ)μ`.
    ///
    /// This exact expression (term order included) is shared by every
    /// conditional-mean path in the crate so that analytically equal
    /// quantities stay bitwise equal.
    #[inline]
    pub fn mean(&self) -> f64 {
        (1.0 - self.alpha) * self.gamma + (1.0 - self.alpha) * (1.0 - self.gamma) * self.mu
    }

    /// Density/mass readout. Returns the mass `α` at `z = 0`, the mass
    /// `(1−α)γ` at `z = 1`, and the (defective) beta density
    /// `(1−α)(1−γ)·BetaPDF(z; μφ, (1−μ)φ)` in the open interior. Callers
    /// distinguish mass from density by `z`.
    pub fn density(&self, z: f64) -> Result<f64> {
        self.check_z(z)?;
        Ok(if z == 0.0 {
            self.alpha
        } else if z == 1.0 {
            (1.0 - self.alpha) * self.gamma
        } else {
            (1.0 - self.alpha)
                * (1.0 - self.gamma)
                * beta_ln_pdf(z, self.shape_a(), self.shape_b()).exp()
        })
    }

    /// Right-continuous CDF: `F(z) = α + (1−α)(1−γ)·BetaCDF(z)` for
    /// `z ∈ [0,1)` and `F(1) = 1`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        self.check_z(z)?;
        Ok(if z >= 1.0 {
            1.0
        } else {
            self.alpha
                + (1.0 - self.alpha)
                    * (1.0 - self.gamma)
                    * betainc(self.shape_a(), self.shape_b(), z)
        })
    }

    /// Generalized-inverse quantile `F⁻(u) = inf{ m : F(m) ≥ u }`.
    ///
    /// Strict branch comparisons: `u < α` maps to 0, `u > 1 − (1−α)γ` maps
    /// to 1, and the remaining probability is routed through the beta
    /// quantile at `u′ = (u − α) / [(1−α)(1−γ)]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile requires u in (0,1), got {u}")));
        }
        if u < self.alpha {
            return Ok(0.0);
        }
        if u > 1.0 - (1.0 - self.alpha) * self.gamma {
            return Ok(1.0);
        }
        let u_prime = (u - self.alpha) / ((1.0 - self.alpha) * (1.0 - self.gamma));
        // Measure-zero edges where u sits exactly on a branch threshold:
        // the generalized inverse is the corresponding boundary.
        if u_prime <= 0.0 {
            return Ok(0.0);
        }
        if u_prime >= 1.0 {
            return Ok(1.0);
        }
        beta_quantile(u_prime, self.shape_a(), self.shape_b())
    }

    /// Probability-integral-transform sampler: draws one `Uniform(0,1)` and
    /// applies [`ZoibParams::quantile`]. PIT sampling is what makes
    /// comonotone coupling across distributions exact when callers share
    /// the uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = draw_open_uniform(rng);
        // A valid (or harness-degenerate) parameter set cannot make the
        // quantile fail except through beta-quantile non-convergence, which
        // the bracketed iteration precludes for positive shapes.
        self.quantile(u).expect("quantile on open-interval uniform")
    }

    /// Per-observation log-likelihood. Decomposes exactly as
    /// `log-Bernoulli(1{z=0}; α) + [z≠0]·log-Bernoulli(1{z=1}; γ) +
    /// [z interior]·log-BetaPDF(z)`, the factorization [`crate::fit`]
    /// optimizes componentwise. Returns `−∞` (not an error) when a point
    /// mass with zero probability is hit.
    pub fn loglik(&self, z: f64) -> Result<f64> {
        self.check_z(z)?;
        Ok(if z == 0.0 {
            self.alpha.ln()
        } else if z == 1.0 {
            (1.0 - self.alpha).ln() + self.gamma.ln()
        } else {
            let zc = z.clamp(INTERIOR_LOG_CLAMP, 1.0 - INTERIOR_LOG_CLAMP);
            (1.0 - self.alpha).ln()
                + (1.0 - self.gamma).ln()
                + beta_ln_pdf(zc, self.shape_a(), self.shape_b())
        })
    }

    fn check_z(&self, z: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Domain(format!("z must lie in [0,1], got {z}")));
        }
        Ok(())
    }
}

/// Draw a uniform in the open interval `(0, 1)`.
///
/// `rand` yields values in `[0, 1)`; exact zero (probability 2⁻⁵³) is
/// rejected so the draw always satisfies the quantile's domain.
#[inline]
pub fn draw_open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Inverse of the regularized incomplete beta function: the `x ∈ (0,1)` with
/// `I_x(a, b) = u`, to within [`QUANTILE_CDF_TOL`] in CDF space — or to the
/// nearest representable double when the density is so steep near a root
/// that no representable `x` meets the CDF tolerance (possible for shapes
/// well below 1, where a one-ulp move changes the CDF by more than the
/// tolerance). In that case the returned point is the bracket end whose CDF
/// weakly exceeds `u`, so `I_Q(a,b) ≥ u` always holds at the result.
///
/// Root-finding runs in logit space, `y = logit(x)`: tails become linear
/// (a Newton step there advances by ≈ `1/a` or `1/b` per iteration instead
/// of stalling), `dI/dy = x^a (1−x)^b / B(a,b)` is bounded, and bisection of
/// the `y`-bracket reaches one-ulp resolution of `x` in under 60 halvings.
/// Guarded Halley correction accelerates the central region; bisection is
/// the fallback whenever a step leaves the bracket.
pub fn beta_quantile(u: f64, a: f64, b: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) || !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!(
            "beta_quantile requires u in (0,1) and positive shapes, got u={u}, a={a}, b={b}"
        )));
    }

    // expit(±745) spans the entire positive double range, so the root's
    // logit lies inside this bracket whenever any representable x works.
    let mut y_lo = -745.0_f64;
    let mut y_hi = 745.0_f64;
    // Mean start: logit(a/(a+b)) = ln(a/b).
    let mut y = (a / b).ln().clamp(y_lo + 1.0, y_hi - 1.0);
    let ln_b = ln_beta(a, b);

    for _ in 0..QUANTILE_MAX_ITER {
        let x = expit(y);
        let f = betainc(a, b, x) - u;
        if f.abs() < QUANTILE_CDF_TOL {
            return Ok(x);
        }
        if f > 0.0 {
            y_hi = y;
        } else {
            y_lo = y;
        }
        // Collapsed bracket: adjacent y's resolve x below one ulp, so no
        // representable x does better. Return the CDF-≥-u side.
        if y_hi - y_lo <= f64::EPSILON * y_hi.abs().max(y_lo.abs()).max(8.0) {
            return Ok(expit(y_hi));
        }
        // Newton in y:  dI/dy = exp(a·ln x + b·ln(1−x) − ln B)
        // with ln x = −softplus(−y), ln(1−x) = −softplus(y) (both exact).
        let deriv = (-a * softplus(-y) - b * softplus(y) - ln_b).exp();
        let mut next = if deriv > 0.0 && deriv.is_finite() {
            let newton = f / deriv;
            // Halley correction from d(ln dI/dy)/dy = a − (a+b)x.
            let halley = 1.0 - 0.5 * newton * (a - (a + b) * x);
            if halley > 0.5 && halley < 2.0 {
                y - newton / halley
            } else {
                y - newton
            }
        } else {
            f64::NAN
        };
        if !(next > y_lo && next < y_hi) || !next.is_finite() {
            next = 0.5 * (y_lo + y_hi);
        }
        y = next;
    }
    Err(Error::QuantileConvergence { lo: expit(y_lo), hi: expit(y_hi), iterations: QUANTILE_MAX_ITER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(alpha: f64, gamma: f64, mu: f64, phi: f64) -> ZoibParams {
        ZoibParams::new(alpha, gamma, mu, phi).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(p(0.0, 0.0, 0.7, 5.0).mean(), 0.7);
        // Degenerate α=1 accepted only through the test-harness constructor.
        assert_eq!(ZoibParams::new_unchecked(1.0, 0.3, 0.5, 2.0).mean(), 0.0);
        assert!((p(0.1, 0.2, 0.5, 3.0).mean() - 0.54).abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_degenerate() {
        assert!(ZoibParams::new(1.0, 0.2, 0.5, 1.0).is_err());
        assert!(ZoibParams::new(0.2, 1.0, 0.5, 1.0).is_err());
        assert!(ZoibParams::new(0.2, 0.2, 0.0, 1.0).is_err());
        assert!(ZoibParams::new(0.2, 0.2, 1.0, 1.0).is_err());
        assert!(ZoibParams::new(0.2, 0.2, 0.5, 0.0).is_err());
        assert!(ZoibParams::new(-0.1, 0.2, 0.5, 1.0).is_err());
        assert!(ZoibParams::new(0.0, 0.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn density_examples() {
        assert_eq!(p(0.3, 0.2, 0.5, 2.0).density(0.0).unwrap(), 0.3);
        assert!((p(0.0, 0.0, 0.5, 2.0).density(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((p(0.1, 0.25, 0.5, 2.0).density(1.0).unwrap() - 0.225).abs() < 1e-15);
        assert!(p(0.1, 0.25, 0.5, 2.0).density(1.5).is_err());
        assert!(p(0.1, 0.25, 0.5, 2.0).density(-0.1).is_err());
    }

    #[test]
    fn cdf_examples() {
        let q = p(0.1, 0.25, 0.4, 3.0);
        assert_eq!(q.cdf(0.0).unwrap(), 0.1);
        assert_eq!(q.cdf(1.0).unwrap(), 1.0);
        // Limit just below 1 is the complement of the mass at 1.
        let just_below = q.cdf(1.0 - 1e-9).unwrap();
        assert!((just_below - (1.0 - 0.9 * 0.25)).abs() < 1e-6);
        let uni = p(0.0, 0.0, 0.5, 2.0);
        assert!((uni.cdf(0.5).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(p(0.1, 0.2, 0.5, 2.0).quantile(0.05).unwrap(), 0.0);
        assert_eq!(p(0.1, 0.5, 0.5, 2.0).quantile(0.95).unwrap(), 1.0);
        let uni = p(0.0, 0.0, 0.5, 2.0);
        assert!((uni.quantile(0.3).unwrap() - 0.3).abs() < 1e-10);
        assert!(uni.quantile(0.0).is_err());
        assert!(uni.quantile(1.0).is_err());
    }

    #[test]
    fn beta_quantile_examples() {
        assert!((beta_quantile(0.5, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-10);
        // Symmetry for a = b.
        for &q in &[0.05, 0.2, 0.4] {
            let lhs = beta_quantile(q, 3.0, 3.0).unwrap();
            let rhs = 1.0 - beta_quantile(1.0 - q, 3.0, 3.0).unwrap();
            assert!((lhs - rhs).abs() < 1e-9, "q = {q}");
        }
        // Independent oracle: bisection on the closed-form Beta(2,2) CDF.
        let want = {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if 3.0 * mid * mid - 2.0 * mid * mid * mid < 0.25 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let got = beta_quantile(0.25, 2.0, 2.0).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs oracle {want}");
        assert!((got - 0.3264).abs() < 5e-4);
    }

    #[test]
    fn beta_quantile_respects_cdf_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = 0.2 + 8.0 * rng.random::<f64>();
            let b = 0.2 + 8.0 * rng.random::<f64>();
            let u = draw_open_uniform(&mut rng);
            let x = beta_quantile(u, a, b).unwrap();
            assert!(
                (betainc(a, b, x) - u).abs() < QUANTILE_CDF_TOL,
                "a={a} b={b} u={u}"
            );
        }
    }

    #[test]
    fn loglik_examples() {
        assert!((p(0.3, 0.2, 0.5, 2.0).loglik(0.0).unwrap() - 0.3f64.ln()).abs() < 1e-15);
        assert_eq!(
            ZoibParams::new_unchecked(0.0, 0.2, 0.5, 2.0).loglik(0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(p(0.0, 0.0, 0.5, 2.0).loglik(0.5).unwrap().abs() < 1e-12);
        // Decomposition: interior value = ln(1−α) + ln(1−γ) + beta log-pdf.
        let q = p(0.2, 0.3, 0.6, 4.0);
        let z = 0.37;
        let want = (1.0 - 0.2f64).ln()
            + (1.0 - 0.3f64).ln()
            + crate::special::beta_ln_pdf(z, q.shape_a(), q.shape_b());
        assert!((q.loglik(z).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn sampler_degenerate_and_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let degenerate = ZoibParams::new_unchecked(1.0, 0.0, 0.5, 2.0);
        for _ in 0..100 {
            assert_eq!(degenerate.sample(&mut rng), 0.0);
        }
        // Boundary/interior draws all legal values.
        let q = p(0.3, 0.4, 0.5, 2.0);
        for _ in 0..500 {
            let z = q.sample(&mut rng);
            assert!((0.0..=1.0).contains(&z));
        }
    }

    #[test]
    fn quantile_cdf_consistency_small_grid() {
        // Reduced-size version of the acceptance-suite invariant.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let q = p(
                0.4 * rng.random::<f64>(),
                0.4 * rng.random::<f64>(),
                0.1 + 0.8 * rng.random::<f64>(),
                0.5 + 6.0 * rng.random::<f64>(),
            );
            let mut prev = 0.0;
            for j in 1..400 {
                let u = j as f64 / 400.0;
                let z = q.quantile(u).unwrap();
                assert!(z >= prev, "quantile must be nondecreasing");
                prev = z;
                let f = q.cdf(z).unwrap();
                assert!(f >= u - 5.0 * QUANTILE_CDF_TOL, "u={u} z={z} F={f}");
            }
        }
    }
}
