//! Target log-densities for VI experiments, with analytic reference
//! posteriors where conjugacy allows, plus two synthetic heavy-tailed
//! 2-D generators used by the tail diagnostics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand::SeedableRng;

use crate::autodiff::Real;
use crate::dist::studentt_log_prob;
use crate::flows::SupportKind;
use crate::{Error, Result};

/// Conjugate posterior of the 1-covariate Bayesian linear regression with
/// Inv-Gamma(a0, b0) prior on the noise variance and N(0, σ²) prior on the
/// coefficient: σ² | y ~ Inv-Gamma(a_n, b_n), β | σ², y ~ N(μ_n, σ²·Σ_n).
#[derive(Debug, Clone, PartialEq)]
pub struct BlrPosterior {
    pub a_n: f64,
    pub b_n: f64,
    pub mu_n: f64,
    /// posterior covariance factor Σ_n = 1/(Σx² + 1)
    pub sigma_n: f64,
    pub log_marginal: f64,
}

impl BlrPosterior {
    /// Exact posterior draws of (β, σ²).
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        let gamma = Gamma::new(self.a_n, 1.0).expect("a_n > 0");
        (0..n)
            .map(|_| {
                let s2 = self.b_n / gamma.sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                let beta = self.mu_n + z * (s2 * self.sigma_n).sqrt();
                [beta, s2]
            })
            .collect()
    }
}

/// Conjugate posterior of the Normal-Normal location model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPosterior {
    pub mean: f64,
    pub var: f64,
    pub log_marginal: f64,
}

/// A target distribution: unnormalized log density, per-coordinate support,
/// and (where available) its exact posterior.
#[derive(Debug, Clone)]
pub enum TargetModel {
    /// Standard Cauchy, d=1.
    Cauchy,
    /// StudentT(ν=1) ⊗ N(0,1), d=2: fat along coordinate 0 only.
    AnisoProduct,
    /// 1-covariate conjugate Bayesian linear regression over (β, σ²), d=2.
    BlrConjugate {
        xs: Vec<f64>,
        ys: Vec<f64>,
        a0: f64,
        b0: f64,
        posterior: BlrPosterior,
    },
    /// Hierarchical school-effects model over (τ, μ, θ₁..θ₈), d=10.
    EightSchools { y: Vec<f64>, sigma: Vec<f64> },
    /// Conjugate Normal location model over θ, d=1.
    NormalNormal {
        y: Vec<f64>,
        sigma_lik: f64,
        mu0: f64,
        sigma0: f64,
        posterior: NormalPosterior,
    },
    /// Non-conjugate regression over (α, σ, β₁..β_p), d = p+2, with a
    /// StudentT(3, 8, 10) intercept prior and HalfStudentT(3, 0, 10) scale
    /// prior on synthetic standardized covariates.
    SyntheticBlr { x: Vec<Vec<f64>>, y: Vec<f64> },
}

pub fn cauchy_target() -> TargetModel {
    TargetModel::Cauchy
}

pub fn aniso_product_target() -> TargetModel {
    TargetModel::AnisoProduct
}

/// Builds the conjugate regression target and its exact posterior.
pub fn blr_conjugate(xs: &[f64], ys: &[f64], a0: f64, b0: f64) -> Result<(TargetModel, BlrPosterior)> {
    if a0 <= 0.0 || b0 <= 0.0 {
        return Err(Error::Domain(format!(
            "blr_conjugate: hyperparameters must be positive (a0={a0}, b0={b0})"
        )));
    }
    if xs.len() != ys.len() {
        return Err(Error::Usage(format!(
            "blr_conjugate: {} covariates vs {} outcomes",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let lambda_n = sxx + 1.0;
    let mu_n = sxy / lambda_n;
    let a_n = a0 + n / 2.0;
    let b_n = b0 + 0.5 * (syy - sxy * sxy / lambda_n);
    let log_marginal = crate::special::lgamma(a_n) - crate::special::lgamma(a0)
        + a0 * b0.ln()
        - a_n * b_n.ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * lambda_n.ln();
    let posterior = BlrPosterior {
        a_n,
        b_n,
        mu_n,
        sigma_n: 1.0 / lambda_n,
        log_marginal,
    };
    let target = TargetModel::BlrConjugate {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        a0,
        b0,
        posterior: posterior.clone(),
    };
    Ok((target, posterior))
}

/// Classical school-effect estimates and standard errors used as the
/// default dataset.
pub const SCHOOLS_Y: [f64; 8] = [28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0];
pub const SCHOOLS_SIGMA: [f64; 8] = [15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0];

pub fn eight_schools(y: &[f64], sigma: &[f64]) -> Result<TargetModel> {
    if y.len() != 8 || sigma.len() != 8 {
        return Err(Error::Usage(format!(
            "eight_schools: expected 8 effects and 8 errors, got {} and {}",
            y.len(),
            sigma.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|&&s| s <= 0.0) {
        return Err(Error::Domain(format!(
            "eight_schools: standard errors must be positive (got {s})"
        )));
    }
    Ok(TargetModel::EightSchools {
        y: y.to_vec(),
        sigma: sigma.to_vec(),
    })
}

pub fn eight_schools_default() -> TargetModel {
    eight_schools(&SCHOOLS_Y, &SCHOOLS_SIGMA).expect("classical dataset is valid")
}

pub fn normal_normal(y: &[f64], sigma_lik: f64, mu0: f64, sigma0: f64) -> Result<TargetModel> {
    if sigma_lik <= 0.0 || sigma0 <= 0.0 {
        return Err(Error::Domain(format!(
            "normal_normal: scales must be positive (sigma_lik={sigma_lik}, sigma0={sigma0})"
        )));
    }
    // sequential conjugate updates; the one-step-ahead predictive densities
    // multiply to the exact marginal likelihood
    let mut mean = mu0;
    let mut var = sigma0 * sigma0;
    let mut log_marginal = 0.0;
    let lik_var = sigma_lik * sigma_lik;
    for &yi in y {
        let pred_var = var + lik_var;
        log_marginal += -0.5 * ((2.0 * std::f64::consts::PI * pred_var).ln()
            + (yi - mean) * (yi - mean) / pred_var);
        let gain = var / pred_var;
        mean += gain * (yi - mean);
        var *= 1.0 - gain;
    }
    Ok(TargetModel::NormalNormal {
        y: y.to_vec(),
        sigma_lik,
        mu0,
        sigma0,
        posterior: NormalPosterior {
            mean,
            var,
            log_marginal,
        },
    })
}

/// Generates a synthetic regression dataset with standardized covariates
/// and builds the non-conjugate target over (α, σ, β).
pub fn synthetic_blr_nonconjugate(n: usize, p: usize, seed: u64) -> TargetModel {
    assert!(n >= 1 && p >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    // standardize each covariate column
    for j in 0..p {
        let mean: f64 = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for r in &mut x {
            r[j] = (r[j] - mean) / sd.max(1e-12);
        }
    }
    let beta_true: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            8.0 + r.iter().zip(&beta_true).map(|(a, b)| a * b).sum::<f64>() + 2.0 * noise
        })
        .collect();
    TargetModel::SyntheticBlr { x, y }
}

fn normal_lp<R: Real>(x: R, mean: R, sd: R) -> R {
    let z = (x - mean) / sd;
    z * z * (-0.5) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// log StudentT(ν, loc, scale) density.
fn studentt_loc_scale_lp<R: Real>(x: R, nu: f64, loc: f64, scale: f64) -> R {
    let z = (x - loc) / scale;
    studentt_log_prob(z, z.lift(nu)) - scale.ln()
}

impl TargetModel {
    pub fn dim(&self) -> usize {
        match self {
            TargetModel::Cauchy | TargetModel::NormalNormal { .. } => 1,
            TargetModel::AnisoProduct | TargetModel::BlrConjugate { .. } => 2,
            TargetModel::EightSchools { .. } => 10,
            TargetModel::SyntheticBlr { x, .. } => x[0].len() + 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetModel::Cauchy => "cauchy",
            TargetModel::AnisoProduct => "aniso-product",
            TargetModel::BlrConjugate { .. } => "blr-conjugate",
            TargetModel::EightSchools { .. } => "eight-schools",
            TargetModel::NormalNormal { .. } => "normal-normal",
            TargetModel::SyntheticBlr { .. } => "synthetic-blr",
        }
    }

    /// Per-coordinate support kinds, in coordinate order.
    pub fn support(&self) -> Vec<SupportKind> {
        match self {
            TargetModel::Cauchy | TargetModel::NormalNormal { .. } => {
                vec![SupportKind::Identity]
            }
            TargetModel::AnisoProduct => vec![SupportKind::Identity; 2],
            // (β, σ²): noise variance is positive
            TargetModel::BlrConjugate { .. } => {
                vec![SupportKind::Identity, SupportKind::Positive]
            }
            // (τ, μ, θ₁..θ₈): scale τ is positive
            TargetModel::EightSchools { .. } => {
                let mut kinds = vec![SupportKind::Identity; 10];
                kinds[0] = SupportKind::Positive;
                kinds
            }
            // (α, σ, β₁..β_p): noise scale σ is positive
            TargetModel::SyntheticBlr { x, .. } => {
                let mut kinds = vec![SupportKind::Identity; x[0].len() + 2];
                kinds[1] = SupportKind::Positive;
                kinds
            }
        }
    }

    /// Unnormalized log density, generic over the scalar type so the same
    /// code evaluates on f64 and on the autodiff tape. Callers must supply
    /// support-interior points; use [`TargetModel::log_unnorm`] for checks.
    pub fn log_unnorm_r<R: Real>(&self, x: &[R]) -> R {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            TargetModel::Cauchy => {
                let v = x[0];
                -((v * v + 1.0).ln())
            }
            TargetModel::AnisoProduct => {
                let t = studentt_log_prob(x[0], x[0].lift(1.0));
                let one = x[1].lift(1.0);
                t + normal_lp(x[1], x[1].lift(0.0), one)
            }
            TargetModel::BlrConjugate { xs, ys, a0, b0, .. } => {
                let beta = x[0];
                let s2 = x[1];
                let ln_s2 = s2.ln();
                // Inv-Gamma(a0, b0) prior on σ² (unnormalized constants kept
                // so the marginal-likelihood check is exact)
                let mut lp = ln_s2 * (-(a0 + 1.0)) - s2.lift(*b0) / s2
                    + a0 * b0.ln()
                    - crate::special::lgamma(*a0);
                // β | σ² ~ N(0, σ²)
                lp = lp - beta * beta / s2 * 0.5 - ln_s2 * 0.5
                    - 0.5 * (2.0 * std::f64::consts::PI).ln();
                // Gaussian likelihood
                for (&xi, &yi) in xs.iter().zip(ys) {
                    let r = beta * xi - yi;
                    lp = lp - r * r / s2 * 0.5 - ln_s2 * 0.5
                        - 0.5 * (2.0 * std::f64::consts::PI).ln();
                }
                lp
            }
            TargetModel::EightSchools { y, sigma } => {
                let tau = x[0];
                let mu = x[1];
                // HalfCauchy(0, 5) on τ
                let t5 = tau / 5.0;
                let mut lp = -((t5 * t5 + 1.0).ln())
                    + (2.0 / (std::f64::consts::PI * 5.0)).ln();
                // μ ~ N(0, 5)
                lp = lp + normal_lp(mu, mu.lift(0.0), mu.lift(5.0));
                for i in 0..8 {
                    let theta = x[2 + i];
                    lp = lp + normal_lp(theta, mu, tau);
                    lp = lp + normal_lp(theta.lift(y[i]), theta, theta.lift(sigma[i]));
                }
                lp
            }
            TargetModel::NormalNormal {
                y,
                sigma_lik,
                mu0,
                sigma0,
                ..
            } => {
                let theta = x[0];
                let mut lp = normal_lp(theta, theta.lift(*mu0), theta.lift(*sigma0));
                for &yi in y {
                    lp = lp + normal_lp(theta.lift(yi), theta, theta.lift(*sigma_lik));
                }
                lp
            }
            TargetModel::SyntheticBlr { x: xs, y } => {
                let alpha = x[0];
                let sigma = x[1];
                let betas = &x[2..];
                let mut lp = studentt_loc_scale_lp(alpha, 3.0, 8.0, 10.0);
                // HalfStudentT(3, 0, 10) on σ: twice the StudentT density on σ>0
                lp = lp + studentt_loc_scale_lp(sigma, 3.0, 0.0, 10.0) + 2.0f64.ln();
                for &b in betas {
                    lp = lp + normal_lp(b, b.lift(0.0), b.lift(1.0));
                }
                for (row, &yi) in xs.iter().zip(y) {
                    let mut mean = alpha;
                    for (&xij, &bj) in row.iter().zip(betas) {
                        mean = mean + bj * xij;
                    }
                    lp = lp + normal_lp(alpha.lift(yi), mean, sigma);
                }
                lp
            }
        }
    }

    /// Checked f64 evaluation: support violations and non-finite values are
    /// reported as errors rather than silently propagated.
    pub fn log_unnorm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Usage(format!(
                "{}: point has dim {}, target has dim {}",
                self.name(),
                x.len(),
                self.dim()
            )));
        }
        for (i, (&xi, kind)) in x.iter().zip(self.support()).enumerate() {
            let ok = match kind {
                SupportKind::Identity => xi.is_finite(),
                SupportKind::Positive => xi > 0.0 && xi.is_finite(),
                SupportKind::UnitInterval => xi > 0.0 && xi < 1.0,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "{}: coordinate {i} = {xi} outside support",
                    self.name()
                )));
            }
        }
        let v = self.log_unnorm_r(x);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "{}: non-finite log density at {x:?}",
                self.name()
            )));
        }
        Ok(v)
    }

    /// Exact reference posterior, when the model is conjugate.
    pub fn blr_posterior(&self) -> Option<&BlrPosterior> {
        match self {
            TargetModel::BlrConjugate { posterior, .. } => Some(posterior),
            _ => None,
        }
    }

    pub fn normal_posterior(&self) -> Option<&NormalPosterior> {
        match self {
            TargetModel::NormalNormal { posterior, .. } => Some(posterior),
            _ => None,
        }
    }
}

/// Directional tail exponent of the planar heavy-tailed generator.
pub fn radial_alpha(theta: f64) -> f64 {
    2.0 + (2.0 * theta).cos()
}

/// Density (w.r.t. dr dθ / 2π) of the generator: θ uniform on [0, 2π) and
/// r | θ Pareto on (1, ∞) with survival r^{−α(θ)}.
pub fn radial_aniso_density(r: f64, theta: f64) -> Result<f64> {
    if r <= 1.0 {
        return Err(Error::Domain(format!(
            "radial_aniso_density: r = {r} must exceed 1"
        )));
    }
    let a = radial_alpha(theta);
    Ok(a * r.powf(-a - 1.0) / (2.0 * std::f64::consts::PI))
}

/// Samples the generator in Cartesian coordinates.
pub fn radial_aniso_sample(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let u: f64 = rng.random::<f64>().max(1e-300);
            let r = u.powf(-1.0 / radial_alpha(theta));
            [r * theta.cos(), r * theta.sin()]
        })
        .collect()
}

/// Rotates each point's polar angle by its radius: (r, θ) ↦ (r, r + θ).
/// Norms are preserved exactly.
pub fn spiral_transform(samples: &[[f64; 2]]) -> Vec<[f64; 2]> {
    samples
        .iter()
        .map(|&[x, y]| {
            let r = x.hypot(y);
            if r == 0.0 {
                return [0.0, 0.0];
            }
            let theta = y.atan2(x) + r;
            [r * theta.cos(), r * theta.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::studentt_sample;
    use crate::tails::hill_estimator;

    #[test]
    fn cauchy_values_and_normalizer() {
        let t = cauchy_target();
        assert_eq!(t.log_unnorm(&[0.0]).unwrap(), 0.0);
        assert!((t.log_unnorm(&[1.0]).unwrap() + 2.0f64.ln()).abs() < 1e-15);
        // ∫ 1/(1+x²) dx over R via x = tan(s), ds over (−π/2, π/2)
        let n = 20_000;
        let lo = -std::f64::consts::FRAC_PI_2 + 1e-9;
        let hi = std::f64::consts::FRAC_PI_2 - 1e-9;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let s = lo + i as f64 * h;
            let x = s.tan();
            let jac = 1.0 / s.cos().powi(2);
            total += w * t.log_unnorm(&[x]).unwrap().exp() * jac;
        }
        total *= h;
        assert!((total - std::f64::consts::PI).abs() < 1e-6, "{total}");
    }

    #[test]
    fn aniso_product_values_and_symmetry() {
        let t = aniso_product_target();
        let v = t.log_unnorm(&[0.0, 0.0]).unwrap();
        assert!((v - (-1.1447299 - 0.9189385)).abs() < 1e-6, "{v}");
        for (a, b) in [(1.3, -0.4), (5.0, 2.0), (0.01, 7.0)] {
            let base = t.log_unnorm(&[a, b]).unwrap();
            assert_eq!(base, t.log_unnorm(&[-a, b]).unwrap());
            assert_eq!(base, t.log_unnorm(&[a, -b]).unwrap());
        }
    }

    #[test]
    fn blr_no_data_posterior_is_prior() {
        let (_, post) = blr_conjugate(&[], &[], 2.0, 3.0).unwrap();
        assert_eq!(post.a_n, 2.0);
        assert_eq!(post.b_n, 3.0);
        assert_eq!(post.mu_n, 0.0);
        assert_eq!(post.log_marginal, 0.0);
    }

    #[test]
    fn blr_shape_update_rule() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64) / 50.0 - 1.0).collect();
        let ys = xs.clone();
        let (_, post) = blr_conjugate(&xs, &ys, 2.0, 1.0).unwrap();
        assert_eq!(post.a_n, 52.0); // a0 + n/2
    }

    #[test]
    fn blr_rejects_bad_hyperparameters() {
        assert!(blr_conjugate(&[1.0], &[1.0], 0.0, 1.0).is_err());
        assert!(blr_conjugate(&[1.0], &[1.0], 1.0, -2.0).is_err());
    }

    #[test]
    fn blr_log_marginal_matches_quadrature() {
        let xs = [0.5, -1.2, 0.3, 2.0, -0.7];
        let ys = [1.1, -2.0, 0.2, 3.5, -0.9];
        let (t, post) = blr_conjugate(&xs, &ys, 2.0, 1.0).unwrap();
        // 2-D quadrature of the joint over β and s = ln σ² (Jacobian e^s)
        let (b_lo, b_hi, nb) = (-6.0, 6.0, 1200usize);
        let (s_lo, s_hi, ns) = (-9.0, 8.0, 1700usize);
        let hb = (b_hi - b_lo) / nb as f64;
        let hs = (s_hi - s_lo) / ns as f64;
        let mut total = 0.0;
        for i in 0..=nb {
            let wb = if i == 0 || i == nb { 0.5 } else { 1.0 };
            let beta = b_lo + i as f64 * hb;
            for j in 0..=ns {
                let ws = if j == 0 || j == ns { 0.5 } else { 1.0 };
                let s = s_lo + j as f64 * hs;
                let lp = t.log_unnorm(&[beta, s.exp()]).unwrap() + s;
                total += wb * ws * lp.exp();
            }
        }
        total *= hb * hs;
        assert!(
            (total.ln() - post.log_marginal).abs() < 1e-4,
            "quadrature {} vs analytic {}",
            total.ln(),
            post.log_marginal
        );
    }

    #[test]
    fn blr_posterior_sampler_moments() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 100) as f64 / 50.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 0.3).collect();
        let (_, post) = blr_conjugate(&xs, &ys, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = post.sample(200_000, &mut rng);
        let mean_beta: f64 = draws.iter().map(|d| d[0]).sum::<f64>() / draws.len() as f64;
        let mean_s2: f64 = draws.iter().map(|d| d[1]).sum::<f64>() / draws.len() as f64;
        assert!((mean_beta - post.mu_n).abs() < 0.01, "{mean_beta} vs {}", post.mu_n);
        let expect_s2 = post.b_n / (post.a_n - 1.0);
        assert!(
            (mean_s2 - expect_s2).abs() / expect_s2 < 0.02,
            "{mean_s2} vs {expect_s2}"
        );
    }

    #[test]
    fn eight_schools_basics() {
        let t = eight_schools_default();
        assert_eq!(t.dim(), 10);
        let mut x = vec![0.0; 10];
        x[0] = 1.0;
        assert!(t.log_unnorm(&x).unwrap().is_finite());
        // support rejection on τ ≤ 0
        x[0] = -0.5;
        assert!(t.log_unnorm(&x).is_err());
        // density decreases in |μ|
        x[0] = 1.0;
        let mut prev = f64::INFINITY;
        for mu in [0.0, 1.0, 3.0, 10.0] {
            x[1] = mu;
            let v = t.log_unnorm(&x).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn eight_schools_tau_tail_exponent() {
        // with θ = μ = 0 the θ | τ factor contributes exactly −8 ln τ;
        // removing it isolates the τ prior, whose log-log slope must
        // approach −2 (survival exponent 1)
        let y = [0.0; 8];
        let sigma = [1.0; 8];
        let t = eight_schools(&y, &sigma).unwrap();
        let probe = |tau: f64| {
            let mut x = vec![0.0; 10];
            x[0] = tau;
            t.log_unnorm(&x).unwrap() + 8.0 * tau.ln()
        };
        let taus: Vec<f64> = (0..20).map(|i| 1e4 * 1.5f64.powi(i)).collect();
        // least-squares slope of adjusted log density vs ln τ
        let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = taus.iter().map(|&t| probe(t)).collect();
        let mx = lx.iter().sum::<f64>() / lx.len() as f64;
        let my = ly.iter().sum::<f64>() / ly.len() as f64;
        let slope: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / lx.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
        assert!((slope + 2.0).abs() < 1e-3, "slope {slope}");
    }

    #[test]
    fn normal_normal_conjugacy() {
        // no data: posterior equals prior
        let t = normal_normal(&[], 1.0, 0.3, 2.0).unwrap();
        let p = t.normal_posterior().unwrap();
        assert_eq!(p.mean, 0.3);
        assert_eq!(p.var, 4.0);
        assert_eq!(p.log_marginal, 0.0);

        // flat-prior limit: posterior mean → sample mean
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let ybar = y.iter().sum::<f64>() / 10.0;
        let t = normal_normal(&y, 1.0, 0.0, 1e6).unwrap();
        assert!((t.normal_posterior().unwrap().mean - ybar).abs() < 1e-4);

        // closed-form variance, and agreement with 1-D quadrature
        let t = normal_normal(&y, 1.5, 0.4, 2.0).unwrap();
        let p = t.normal_posterior().unwrap();
        let expect_var = 1.0 / (1.0 / 4.0 + 10.0 / 2.25);
        assert!((p.var - expect_var).abs() < 1e-12);
        let (lo, hi, n) = (-10.0f64, 10.0f64, 40_000usize);
        let h = (hi - lo) / n as f64;
        let (mut z0, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let x = lo + i as f64 * h;
            let d = w * t.log_unnorm(&[x]).unwrap().exp();
            z0 += d;
            z1 += d * x;
            z2 += d * x * x;
        }
        let mean_q = z1 / z0;
        let var_q = z2 / z0 - mean_q * mean_q;
        assert!((var_q - p.var).abs() < 1e-8, "{var_q} vs {}", p.var);
        assert!((mean_q - p.mean).abs() < 1e-8);
        // marginal likelihood from the same quadrature
        assert!(((z0 * h).ln() - p.log_marginal).abs() < 1e-8);
    }

    #[test]
    fn synthetic_blr_basics() {
        let t = synthetic_blr_nonconjugate(50, 3, 11);
        assert_eq!(t.dim(), 5);
        assert_eq!(t.support()[1], SupportKind::Positive);
        let x = [8.0, 10.0, 0.0, 0.0, 0.0];
        assert!(t.log_unnorm(&x).unwrap().is_finite());
        // σ-conditional decays as a power law: the HalfStudentT(3) factor
        // has log-log slope −4 once the likelihood contribution (which
        // scales like −n ln σ) is removed
        let n = 50.0;
        let probe = |s: f64| {
            let x = [8.0, s, 0.0, 0.0, 0.0];
            t.log_unnorm(&x).unwrap() + n * s.ln()
        };
        let s_grid: Vec<f64> = (0..20).map(|i| 1e5 * 2f64.powi(i)).collect();
        let lx: Vec<f64> = s_grid.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = s_grid.iter().map(|&s| probe(s)).collect();
        let mx = lx.iter().sum::<f64>() / lx.len() as f64;
        let my = ly.iter().sum::<f64>() / ly.len() as f64;
        let slope: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / lx.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
        assert!((slope + 4.0).abs() < 1e-2, "slope {slope}");
    }

    #[test]
    fn support_interior_probes_are_finite() {
        let targets = vec![
            cauchy_target(),
            aniso_product_target(),
            blr_conjugate(&[0.5, -1.0], &[1.0, 0.0], 2.0, 1.0).unwrap().0,
            eight_schools_default(),
            normal_normal(&[1.0, 2.0], 1.0, 0.0, 2.0).unwrap(),
            synthetic_blr_nonconjugate(30, 2, 5),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in &targets {
            let kinds = t.support();
            for _ in 0..10_000 / targets.len() {
                let x: Vec<f64> = kinds
                    .iter()
                    .map(|k| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        match k {
                            SupportKind::Identity => 5.0 * z,
                            SupportKind::Positive => (2.0 * z).exp(),
                            SupportKind::UnitInterval => 1.0 / (1.0 + (-z).exp()),
                        }
                    })
                    .collect();
                let v = t.log_unnorm(&x);
                assert!(v.is_ok(), "{}: {:?} -> {:?}", t.name(), x, v);
            }
        }
    }

    #[test]
    fn radial_alpha_values() {
        assert_eq!(radial_alpha(0.0), 3.0);
        assert!((radial_alpha(std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert!((radial_alpha(std::f64::consts::FRAC_PI_4) - 2.0).abs() < 1e-15);
        let max = (0..1000)
            .map(|i| radial_alpha(i as f64 * 2.0 * std::f64::consts::PI / 1000.0))
            .fold(f64::MIN, f64::max);
        assert!((max - 3.0).abs() < 1e-4);
        assert!(radial_aniso_density(0.5, 0.0).is_err());
        assert!(radial_aniso_density(2.0, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn radial_sampler_directional_exponent() {
        // window the sample around θ = 0 and Hill-estimate the radii; the
        // per-angle Pareto construction makes the local exponent α(0) = 3
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts = radial_aniso_sample(1_000_000, &mut rng);
        let window = 0.1;
        let radii: Vec<f64> = pts
            .iter()
            .filter(|p| p[1].atan2(p[0]).abs() < window)
            .map(|p| p[0].hypot(p[1]))
            .collect();
        let k = (radii.len() as f64).sqrt() as usize;
        let alpha = hill_estimator(&radii, k).unwrap();
        assert!(
            (alpha - 3.0).abs() / 3.0 < 0.15,
            "windowed Hill {alpha} vs 3.0"
        );
    }

    #[test]
    fn spiral_preserves_norms() {
        assert_eq!(spiral_transform(&[[0.0, 0.0]]), vec![[0.0, 0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..1000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [3.0 * a, 3.0 * b]
            })
            .collect();
        for (p, q) in pts.iter().zip(spiral_transform(&pts)) {
            let rp = p[0].hypot(p[1]);
            let rq = q[0].hypot(q[1]);
            assert!((rp - rq).abs() <= 1e-12 * rp.max(1.0));
        }
    }

    #[test]
    fn spiral_mixes_directional_exponents() {
        // StudentT(1) ⊗ StudentT(2) input: after spinning by radius, the
        // mass arriving near direction e_x at radius r comes from original
        // angle ≈ −r, so phase-locked radius windows (radii congruent mod
        // 2π) see alternately the index-1 and index-2 marginal. The local
        // exponent therefore has no directional limit.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_500_000;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [
                    studentt_sample(1.0, &mut rng).0,
                    studentt_sample(2.0, &mut rng).0,
                ]
            })
            .collect();
        let spun = spiral_transform(&pts);
        let tau = 2.0 * std::f64::consts::PI;
        let angle_w = 0.35;
        let radius_w = 0.35;
        // counts near direction e_x in radius windows of fixed phase
        let count = |center: f64| {
            spun.iter()
                .filter(|p| {
                    let r = p[0].hypot(p[1]);
                    (r - center).abs() < radius_w && p[1].atan2(p[0]).abs() < angle_w
                })
                .count() as f64
        };
        // window-pair exponent: densities at radii r₁ < r₂ of equal phase
        // scale like r^{−(α+1)}, so α̂ = ln(c₁/c₂)/ln(r₂/r₁) − 1
        let est = |phase: f64, m1: f64, m2: f64| {
            let (r1, r2) = (tau * m1 + phase, tau * m2 + phase);
            let (c1, c2) = (count(r1), count(r2));
            assert!(c2 > 30.0, "phase {phase}: window at {r2} too thin ({c2})");
            (c1 / c2).ln() / (r2 / r1).ln() - 1.0
        };
        // phase 0 ↔ original angle ≈ 0 (Cauchy axis): exponent ≈ 1
        let a_phase0 = est(0.0, 1.0, 3.0);
        // phase π/2 ↔ original angle ≈ −π/2 (StudentT(2) axis): ≈ 2
        let a_phase90 = est(std::f64::consts::FRAC_PI_2, 1.0, 3.0);
        assert!(
            a_phase90 - a_phase0 > 0.4,
            "phase-locked exponents {a_phase0:.2} vs {a_phase90:.2} should differ"
        );
        assert!((0.5..=1.5).contains(&a_phase0), "phase-0 exponent {a_phase0}");
        assert!((1.4..=2.8).contains(&a_phase90), "phase-π/2 exponent {a_phase90}");
    }
}
