//! Gaussian and StudentT densities, CDFs, samplers, and the implicit
//! reparameterization gradient with respect to the degrees of freedom.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::special::{inc_beta, norm_quantile, softplus, softplus_inv};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Minimum degrees of freedom; ν = floor + softplus(raw) stays above this.
pub const NU_FLOOR: f64 = 0.1;

/// Default ν at fresh (non-staged) initialization.
pub const NU_INIT: f64 = 2.0;

/// Unconstrained per-dimension tail parameters; ν_i = floor + softplus(raw_i).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailParams {
    pub raw: Vec<f64>,
    pub floor: f64,
}

impl TailParams {
    pub fn with_nu(nu: &[f64]) -> Self {
        let floor = NU_FLOOR;
        let raw = nu.iter().map(|&v| softplus_inv(v - floor)).collect();
        TailParams { raw, floor }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn nu(&self) -> Vec<f64> {
        self.raw
            .iter()
            .map(|&r| self.floor + softplus(r))
            .collect()
    }
}

/// ν from an unconstrained raw value.
pub fn nu_of_raw<R: Real>(raw: R, floor: f64) -> R {
    raw.softplus() + floor
}

/// Raw value that maps to a given ν under `nu_of_raw`.
pub fn raw_of_nu(nu: f64, floor: f64) -> f64 {
    softplus_inv(nu - floor)
}

/// Which base measure a flow stack pushes forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseKind {
    Gaussian,
    StudentTShared,
    StudentTPerDim,
}

/// Structural descriptor of the base distribution. The raw tail values
/// live in the owning flow stack's flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseDistribution {
    pub kind: BaseKind,
    pub dim: usize,
    pub floor: f64,
}

impl BaseDistribution {
    pub fn new(kind: BaseKind, dim: usize) -> Self {
        BaseDistribution {
            kind,
            dim,
            floor: NU_FLOOR,
        }
    }

    /// Number of raw tail parameters: 0 (Gaussian), 1 (shared), d (per-dim).
    pub fn n_tail_params(&self) -> usize {
        match self.kind {
            BaseKind::Gaussian => 0,
            BaseKind::StudentTShared => 1,
            BaseKind::StudentTPerDim => self.dim,
        }
    }

    /// Raw index feeding coordinate `i`, or None for a Gaussian base.
    pub fn tail_index(&self, i: usize) -> Option<usize> {
        match self.kind {
            BaseKind::Gaussian => None,
            BaseKind::StudentTShared => Some(0),
            BaseKind::StudentTPerDim => Some(i),
        }
    }
}

/// Standard normal log density.
pub fn normal_log_prob<R: Real>(x: R) -> R {
    -(x * x) / 2.0 - 0.5 * LN_2PI
}

/// StudentT(ν) log density, differentiable in both x and ν.
///
/// Callers on the hot path guarantee ν > 0 by construction; use
/// [`studentt_log_prob_checked`] at API boundaries.
pub fn studentt_log_prob<R: Real>(x: R, nu: R) -> R {
    let half = ((nu + 1.0) / 2.0).lgamma() - (nu / 2.0).lgamma();
    let norm = (nu.ln() + std::f64::consts::PI.ln()) / 2.0;
    let kernel = ((x * x) / nu + 1.0).ln() * ((nu + 1.0) / 2.0);
    half - norm - kernel
}

/// StudentT log density with domain checking.
pub fn studentt_log_prob_checked(x: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("studentt_log_prob: nu = {nu} <= 0")));
    }
    Ok(studentt_log_prob(x, nu))
}

/// StudentT(ν) CDF via the regularized incomplete beta function.
pub fn studentt_cdf(x: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("studentt_cdf: nu = {nu} <= 0")));
    }
    Ok(t_cdf_unchecked(x, nu))
}

fn t_cdf_unchecked(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let w = nu / (nu + x * x);
    let half_tail = 0.5 * inc_beta(nu / 2.0, 0.5, w);
    if x > 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

fn t_pdf(x: f64, nu: f64) -> f64 {
    studentt_log_prob(x, nu).exp()
}

/// StudentT(ν) quantile: closed forms for ν ∈ {1, 2}, otherwise a bracketed
/// bisection plus Newton polish on the CDF to ~1e-12.
pub fn studentt_quantile(u: f64, nu: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "quantile requires u in (0,1)");
    assert!(nu > 0.0);
    if u == 0.5 {
        return 0.0;
    }
    if u < 0.5 {
        return -studentt_quantile(1.0 - u, nu);
    }
    if nu == 1.0 {
        return (std::f64::consts::PI * (u - 0.5)).tan();
    }
    if nu == 2.0 {
        let a = 2.0 * u - 1.0;
        return a / (2.0 * u * (1.0 - u)).sqrt();
    }
    // initial guess: normal quantile for the bulk, power-law tail otherwise
    let z = norm_quantile(u);
    let mut x = if nu > 2.0 {
        z * (nu / (nu - 2.0)).sqrt()
    } else {
        z
    };
    let p_tail = 1.0 - u;
    if p_tail < 0.05 {
        // P(T > x) ≈ C(ν) x^{-ν} with C from the density's leading term
        let ln_c = crate::special::lgamma((nu + 1.0) / 2.0)
            - crate::special::lgamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI).ln()
            + (nu / 2.0) * nu.ln()
            - nu.ln();
        let x_tail = ((ln_c - p_tail.ln()) / nu).exp();
        if x_tail > x {
            x = x_tail;
        }
    }
    if !x.is_finite() || x <= 0.0 {
        x = 1.0;
    }
    // bracket the root
    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while t_cdf_unchecked(hi, nu) < u {
        lo = hi;
        hi *= 4.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut x = x.clamp(lo, hi);
    // bisection to get close, then Newton
    for _ in 0..8 {
        let mid = 0.5 * (lo + hi);
        if t_cdf_unchecked(mid, nu) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x = x.clamp(lo, hi);
    for _ in 0..40 {
        let f = t_cdf_unchecked(x, nu) - u;
        if f > 0.0 {
            hi = x.min(hi);
        } else {
            lo = x.max(lo);
        }
        let p = t_pdf(x, nu);
        let mut step = f / p;
        if !step.is_finite() {
            step = 0.0;
        }
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-12 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// One StudentT(ν) draw via inverse-CDF of a uniform, plus the pathwise
/// derivative ∂x/∂ν from implicit reparameterization:
/// ∂x/∂ν = −(∂F_ν/∂ν)(x) / pdf_ν(x), with ∂F/∂ν by central differences.
pub fn studentt_sample<R: Rng + ?Sized>(nu: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.random();
    let u = u.clamp(1e-16, 1.0 - 1e-16);
    studentt_sample_from_uniform(u, nu)
}

/// The deterministic part of `studentt_sample`, given the uniform draw.
pub fn studentt_sample_from_uniform(u: f64, nu: f64) -> (f64, f64) {
    let x = studentt_quantile(u, nu);
    (x, studentt_dx_dnu(x, nu))
}

/// ∂x/∂ν at a fixed quantile level, via −(∂F/∂ν)/pdf with h = 1e−4·max(1,ν).
pub fn studentt_dx_dnu(x: f64, nu: f64) -> f64 {
    let h = 1e-4 * nu.max(1.0);
    let df_dnu = (t_cdf_unchecked(x, nu + h) - t_cdf_unchecked(x, (nu - h).max(1e-8)))
        / (nu + h - (nu - h).max(1e-8));
    let pdf = t_pdf(x, nu);
    if pdf <= 0.0 {
        return 0.0;
    }
    -df_dnu / pdf
}

/// Standard normal draw via Box-Muller; deterministic given the RNG stream.
pub fn gaussian_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u1 = u1.max(1e-300);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Tape, Var};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_log_prob_values() {
        assert!((normal_log_prob(0.0) + 0.918_938_5).abs() < 1e-6);
        assert!((normal_log_prob(1.0) + 1.418_938_5).abs() < 1e-6);
        assert_eq!(normal_log_prob(-1.0), normal_log_prob(1.0));
    }

    #[test]
    fn studentt_log_prob_cauchy_values() {
        // StudentT(1) is standard Cauchy
        let v = studentt_log_prob_checked(0.0, 1.0).unwrap();
        assert!((v - (1.0 / std::f64::consts::PI).ln()).abs() < 1e-12);
        let v = studentt_log_prob_checked(1.0, 1.0).unwrap();
        assert!((v - (1.0 / (2.0 * std::f64::consts::PI)).ln()).abs() < 1e-12);
    }

    #[test]
    fn studentt_log_prob_nu3() {
        // closed-form formula evaluated independently
        let nu: f64 = 3.0;
        let x: f64 = 2.0;
        let expect = crate::special::lgamma(2.0) - crate::special::lgamma(1.5)
            - 0.5 * (nu * std::f64::consts::PI).ln()
            - 2.0 * (1.0 + x * x / nu).ln();
        assert!((expect - (-2.695_484_570_397_917)).abs() < 1e-9);
        let v = studentt_log_prob_checked(x, nu).unwrap();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn studentt_log_prob_rejects_bad_nu() {
        assert!(studentt_log_prob_checked(0.0, 0.0).is_err());
        assert!(studentt_log_prob_checked(0.0, -1.0).is_err());
        assert!(studentt_cdf(0.0, -2.0).is_err());
    }

    #[test]
    fn studentt_cdf_values() {
        for &nu in &[0.5, 1.0, 2.0, 4.0, 30.0] {
            assert!((studentt_cdf(0.0, nu).unwrap() - 0.5).abs() < 1e-14);
        }
        // ν=1: F(1) = 1/2 + atan(1)/π = 0.75
        assert!((studentt_cdf(1.0, 1.0).unwrap() - 0.75).abs() < 1e-12);
        // ν=5 at x=2, against quadrature of the density (frozen value)
        assert!((studentt_cdf(2.0, 5.0).unwrap() - 0.949_03).abs() < 1e-4);
    }

    #[test]
    fn studentt_cdf_quadrature_cross_check() {
        // trapezoid quadrature of the density from -50 to x
        let nu = 5.0;
        let x_target = 2.0;
        let n = 400_000;
        let a = -50.0;
        let h = (x_target - a) / n as f64;
        let mut acc = 0.5 * (t_pdf(a, nu) + t_pdf(x_target, nu));
        for i in 1..n {
            acc += t_pdf(a + h * i as f64, nu);
        }
        let quad = acc * h;
        assert!((studentt_cdf(x_target, nu).unwrap() - quad).abs() < 1e-6);
    }

    #[test]
    fn pdf_integrates_to_one() {
        // quadrature on [-50, 50] plus analytic tail mass 2·F(-50)
        for &nu in &[0.5, 1.0, 2.0, 4.0, 30.0] {
            let n = 200_000;
            let (a, b) = (-50.0, 50.0);
            let h = (b - a) / n as f64;
            let mut acc = 0.5 * (t_pdf(a, nu) + t_pdf(b, nu));
            for i in 1..n {
                acc += t_pdf(a + h * i as f64, nu);
            }
            let body = acc * h;
            let tail = 2.0 * t_cdf_unchecked(-50.0, nu);
            assert!(
                (body + tail - 1.0).abs() < 1e-6,
                "nu={nu}: {}",
                body + tail
            );
        }
    }

    #[test]
    fn cdf_quantile_roundtrip() {
        for &nu in &[0.7, 1.0, 2.0, 3.5, 12.0] {
            for i in 0..41 {
                let x = -10.0 + 0.5 * i as f64;
                let u = t_cdf_unchecked(x, nu);
                if u <= 0.0 || u >= 1.0 {
                    continue;
                }
                let back = studentt_quantile(u, nu);
                assert!(
                    (back - x).abs() < 1e-6 * (1.0 + x.abs()),
                    "nu={nu} x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn studentt_log_prob_converges_to_normal() {
        // the true deviation at nu=1e4 peaks at ~1.55e-3 (x = ±3); it halves
        // when nu doubles, so check the rate as well as the magnitude
        let max_diff = |nu: f64| {
            (0..=60)
                .map(|i| {
                    let x = -3.0 + 0.1 * i as f64;
                    (studentt_log_prob(x, nu) - normal_log_prob(x)).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let d4 = max_diff(1e4);
        assert!(d4 < 2e-3, "max diff at nu=1e4: {d4}");
        assert!((d4 - 1.548_988e-3).abs() < 1e-6);
        let d5 = max_diff(1e5);
        assert!(d5 < 2e-4, "max diff at nu=1e5: {d5}");
    }

    #[test]
    fn implicit_gradient_median_is_zero() {
        let (x, dxdnu) = studentt_sample_from_uniform(0.5, 3.0);
        assert_eq!(x, 0.0);
        assert!(dxdnu.abs() < 1e-9);
    }

    #[test]
    fn implicit_gradient_matches_quantile_differences() {
        // across a grid of (u, ν)
        let h = 1e-3;
        for &nu in &[0.8, 2.0, 5.0, 15.0] {
            for &u in &[0.65, 0.9, 0.99] {
                let (_, dxdnu) = studentt_sample_from_uniform(u, nu);
                let fd =
                    (studentt_quantile(u, nu + h) - studentt_quantile(u, nu - h)) / (2.0 * h);
                let rel = (dxdnu - fd).abs() / fd.abs().max(1e-12);
                assert!(rel < 1e-2, "u={u} nu={nu}: ad {dxdnu} fd {fd}");
            }
        }
    }

    #[test]
    fn studentt_sample_empirical_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| studentt_sample(5.0, &mut rng).0).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn gaussian_sample_moments_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| gaussian_sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");

        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            assert_eq!(
                gaussian_sample(&mut r1).to_bits(),
                gaussian_sample(&mut r2).to_bits()
            );
        }
    }

    #[test]
    fn studentt_log_prob_gradient_in_x_and_nu() {
        fn f<'t>(_: &'t Tape, v: &[Var<'t>]) -> Var<'t> {
            studentt_log_prob(v[0], v[1])
        }
        let chk = check_gradient(f, &[0.7, 2.0], 1e-5);
        assert!(chk.max_rel_err < 1e-5, "rel err {}", chk.max_rel_err);
    }

    #[test]
    fn tail_params_roundtrip() {
        let tp = TailParams::with_nu(&[0.5, 1.0, 7.0, 30.0]);
        let back = tp.nu();
        for (a, b) in back.iter().zip([0.5, 1.0, 7.0, 30.0]) {
            assert!((a - b).abs() < 1e-9);
            assert!(*a > tp.floor);
        }
    }
}
