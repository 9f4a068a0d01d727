//! Inverse autoregressive flow layers with masked dense conditioners,
//! support bijections, composition, and exact log-density by change of
//! variables.
//!
//! All evaluation paths are generic over [`Real`], so the same code runs on
//! plain f64 (sampling, diagnostics) and on the autodiff tape (training).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::dist::{
    normal_log_prob, nu_of_raw, raw_of_nu, studentt_log_prob, BaseDistribution, BaseKind, NU_INIT,
};
use crate::special::norm_quantile;
use crate::{Error, Result};

/// Default bound on the effective log-scale; λ̃ = s·tanh(λ/s) ∈ (−s, s).
pub const SCALE_CLAMP: f64 = 5.0;

/// Per-coordinate map from the unconstrained space onto a target support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportKind {
    Identity,
    /// exp : R → (0, ∞)
    Positive,
    /// sigmoid : R → (0, 1)
    UnitInterval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportBijection {
    pub kinds: Vec<SupportKind>,
}

impl SupportBijection {
    pub fn identity(dim: usize) -> Self {
        SupportBijection {
            kinds: vec![SupportKind::Identity; dim],
        }
    }

    pub fn new(kinds: Vec<SupportKind>) -> Self {
        SupportBijection { kinds }
    }

    /// Maps unconstrained x onto the support; returns (y, log|det dy/dx|).
    pub fn forward<R: Real>(&self, x: &[R]) -> (Vec<R>, R) {
        let mut log_det = x[0].lift(0.0);
        let y = x
            .iter()
            .zip(&self.kinds)
            .map(|(&xi, kind)| match kind {
                SupportKind::Identity => xi,
                SupportKind::Positive => {
                    log_det = log_det + xi;
                    xi.exp()
                }
                SupportKind::UnitInterval => {
                    // σ(x), contribution log σ(x) + log(1−σ(x)) = −softplus(x) − softplus(−x)
                    log_det = log_det - xi.softplus() - (-xi).softplus();
                    let s = (-(-xi).softplus()).exp();
                    s
                }
            })
            .collect();
        (y, log_det)
    }

    /// Inverse map; errors when a coordinate is outside the support range.
    pub fn inverse(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut x = Vec::with_capacity(y.len());
        let mut log_det = 0.0;
        for (i, (&yi, kind)) in y.iter().zip(&self.kinds).enumerate() {
            match kind {
                SupportKind::Identity => x.push(yi),
                SupportKind::Positive => {
                    if yi <= 0.0 {
                        return Err(Error::Domain(format!(
                            "coordinate {i}: {yi} outside positive support"
                        )));
                    }
                    let xi = yi.ln();
                    log_det -= xi;
                    x.push(xi);
                }
                SupportKind::UnitInterval => {
                    if yi <= 0.0 || yi >= 1.0 {
                        return Err(Error::Domain(format!(
                            "coordinate {i}: {yi} outside unit-interval support"
                        )));
                    }
                    let xi = (yi / (1.0 - yi)).ln();
                    log_det -= (yi * (1.0 - yi)).ln();
                    x.push(xi);
                }
            }
        }
        Ok((x, log_det))
    }
}

/// MADE-style two-hidden-layer dense conditioner with binary autoregressive
/// masks and ELU activations. Outputs (μ_j, λ_j) per coordinate, each
/// depending only on inputs at earlier positions.
///
/// Masks are stored as per-row lists of allowed input columns; parameters
/// for a row are stored contiguously, one per allowed column, so masked-out
/// weights simply do not exist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskedConditioner {
    pub dim: usize,
    pub hidden: usize,
    w1_cols: Vec<Vec<u16>>,
    w2_cols: Vec<Vec<u16>>,
    w3_cols: Vec<Vec<u16>>,
    n_params: usize,
}

impl MaskedConditioner {
    pub fn new(dim: usize, hidden: usize) -> Self {
        // degrees: inputs 1..=d, hidden cycling over 1..=d−1, outputs for
        // coordinate j carry degree j+1 and connect strictly below
        let m_in: Vec<usize> = (1..=dim).collect();
        let m_h: Vec<usize> = (0..hidden)
            .map(|k| {
                if dim >= 2 {
                    1 + (k % (dim - 1))
                } else {
                    usize::MAX // no valid degree: all connections masked out
                }
            })
            .collect();
        let w1_cols: Vec<Vec<u16>> = m_h
            .iter()
            .map(|&mk| {
                (0..dim)
                    .filter(|&i| mk != usize::MAX && m_in[i] <= mk)
                    .map(|i| i as u16)
                    .collect()
            })
            .collect();
        let w2_cols: Vec<Vec<u16>> = m_h
            .iter()
            .map(|&mk| {
                (0..hidden)
                    .filter(|&k| mk != usize::MAX && m_h[k] <= mk)
                    .map(|k| k as u16)
                    .collect()
            })
            .collect();
        // rows 0..d are μ, rows d..2d are λ; output for coordinate j sees
        // hidden units of degree < j+1
        let w3_cols: Vec<Vec<u16>> = (0..2 * dim)
            .map(|row| {
                let j = row % dim;
                (0..hidden)
                    .filter(|&k| m_h[k] != usize::MAX && m_h[k] < j + 1)
                    .map(|k| k as u16)
                    .collect()
            })
            .collect();
        let n_weights: usize = w1_cols.iter().map(Vec::len).sum::<usize>()
            + w2_cols.iter().map(Vec::len).sum::<usize>()
            + w3_cols.iter().map(Vec::len).sum::<usize>();
        let n_params = n_weights + hidden + hidden + 2 * dim;
        MaskedConditioner {
            dim,
            hidden,
            w1_cols,
            w2_cols,
            w3_cols,
            n_params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Evaluates the conditioner on an ordered-space input; returns
    /// (μ, raw λ) per ordered position.
    pub fn eval<R: Real>(&self, params: &[R], z: &[R]) -> (Vec<R>, Vec<R>) {
        debug_assert_eq!(params.len(), self.n_params);
        debug_assert_eq!(z.len(), self.dim);
        let mut off = 0usize;

        let mut h1 = Vec::with_capacity(self.hidden);
        for (k, cols) in self.w1_cols.iter().enumerate() {
            let mut s = params[self.bias1_index(k)];
            for &c in cols {
                s = s + params[off] * z[c as usize];
                off += 1;
            }
            h1.push(s.elu());
        }
        let mut off = self.w2_start();
        let mut h2 = Vec::with_capacity(self.hidden);
        for (k, cols) in self.w2_cols.iter().enumerate() {
            let mut s = params[self.bias2_index(k)];
            for &c in cols {
                s = s + params[off] * h1[c as usize];
                off += 1;
            }
            h2.push(s.elu());
        }
        let mut off = self.w3_start();
        let mut out = Vec::with_capacity(2 * self.dim);
        for (row, cols) in self.w3_cols.iter().enumerate() {
            let mut s = params[self.bias3_index(row)];
            for &c in cols {
                s = s + params[off] * h2[c as usize];
                off += 1;
            }
            out.push(s);
        }
        let lam = out.split_off(self.dim);
        (out, lam)
    }

    fn w1_len(&self) -> usize {
        self.w1_cols.iter().map(Vec::len).sum()
    }
    fn w2_len(&self) -> usize {
        self.w2_cols.iter().map(Vec::len).sum()
    }
    fn w3_len(&self) -> usize {
        self.w3_cols.iter().map(Vec::len).sum()
    }
    fn bias1_index(&self, k: usize) -> usize {
        self.w1_len() + k
    }
    fn w2_start(&self) -> usize {
        self.w1_len() + self.hidden
    }
    fn bias2_index(&self, k: usize) -> usize {
        self.w2_start() + self.w2_len() + k
    }
    fn w3_start(&self) -> usize {
        self.bias2_index(0) + self.hidden
    }
    fn bias3_index(&self, row: usize) -> usize {
        self.w3_start() + self.w3_len() + row
    }

    /// Kaiming-style init: uniform(−1/√fan_in, 1/√fan_in) per row with the
    /// masked fan-in, final layer zeroed so the flow layer starts as the
    /// identity.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0f64; self.n_params];
        let mut off = 0usize;
        for cols in &self.w1_cols {
            let bound = 1.0 / (cols.len().max(1) as f64).sqrt();
            for _ in cols {
                p[off] = rng.random_range(-bound..bound);
                off += 1;
            }
        }
        // b1 stays 0
        let mut off = self.w2_start();
        for cols in &self.w2_cols {
            let bound = 1.0 / (cols.len().max(1) as f64).sqrt();
            for _ in cols {
                p[off] = rng.random_range(-bound..bound);
                off += 1;
            }
        }
        // w3, b3 zeroed: identity at init
        p
    }
}

/// One IAF layer: x_j = z_j·exp(λ̃_j(z_{<j})) + μ_j(z_{<j}) under the
/// layer's ordering, with λ̃ = s·tanh(λ/s) keeping the log-scale bounded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IafLayer {
    pub cond: MaskedConditioner,
    /// ordered position j reads coordinate `ordering[j]`
    pub ordering: Vec<usize>,
    pub clamp: f64,
}

impl IafLayer {
    pub fn new(dim: usize, hidden: usize, ordering: Vec<usize>) -> Self {
        assert_eq!(ordering.len(), dim);
        IafLayer {
            cond: MaskedConditioner::new(dim, hidden),
            ordering,
            clamp: SCALE_CLAMP,
        }
    }

    pub fn n_params(&self) -> usize {
        self.cond.n_params()
    }

    fn clamped<R: Real>(&self, lam: R) -> R {
        (lam / self.clamp).tanh() * self.clamp
    }

    /// One-pass forward; returns (x, Σ_j λ̃_j).
    pub fn forward<R: Real>(&self, params: &[R], z: &[R]) -> (Vec<R>, R) {
        let d = self.cond.dim;
        let z_ord: Vec<R> = self.ordering.iter().map(|&i| z[i]).collect();
        let (mu, lam) = self.cond.eval(params, &z_ord);
        let mut log_det = z[0].lift(0.0);
        let mut x = vec![z[0].lift(0.0); d];
        for j in 0..d {
            let lt = self.clamped(lam[j]);
            log_det = log_det + lt;
            x[self.ordering[j]] = z_ord[j] * lt.exp() + mu[j];
        }
        (x, log_det)
    }

    /// Sequential inverse; returns (z, −Σ_j λ̃_j).
    pub fn inverse<R: Real>(&self, params: &[R], x: &[R]) -> (Vec<R>, R) {
        let d = self.cond.dim;
        let zero = x[0].lift(0.0);
        let x_ord: Vec<R> = self.ordering.iter().map(|&i| x[i]).collect();
        let mut z_ord = vec![zero; d];
        let mut log_det = zero;
        for j in 0..d {
            // outputs at position j only read z_ord[<j], already solved
            let (mu, lam) = self.cond.eval(params, &z_ord);
            let lt = self.clamped(lam[j]);
            z_ord[j] = (x_ord[j] - mu[j]) * (-lt).exp();
            log_det = log_det - lt;
        }
        let mut z = vec![zero; d];
        for j in 0..d {
            z[self.ordering[j]] = z_ord[j];
        }
        (z, log_det)
    }
}

/// Composed IAF layers, support bijection, and base distribution, plus the
/// flat parameter vector (layer weights first, raw tail parameters last).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowStack {
    pub dim: usize,
    pub layers: Vec<IafLayer>,
    pub support: SupportBijection,
    pub base: BaseDistribution,
    pub params: Vec<f64>,
    layer_offsets: Vec<usize>,
    tail_offset: usize,
}

impl FlowStack {
    /// Builds a stack with `n_layers` IAF layers alternating identity and
    /// reversed orderings, identity-initialized, with fresh tail params.
    pub fn new(
        base_kind: BaseKind,
        support: SupportBijection,
        hidden: usize,
        n_layers: usize,
        seed: u64,
    ) -> Self {
        let dim = support.kinds.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(n_layers);
        let mut params = Vec::new();
        let mut layer_offsets = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let ordering: Vec<usize> = if l % 2 == 0 {
                (0..dim).collect()
            } else {
                (0..dim).rev().collect()
            };
            let layer = IafLayer::new(dim, hidden, ordering);
            layer_offsets.push(params.len());
            params.extend(layer.cond.init_params(&mut rng));
            layers.push(layer);
        }
        let base = BaseDistribution::new(base_kind, dim);
        let tail_offset = params.len();
        for _ in 0..base.n_tail_params() {
            params.push(raw_of_nu(NU_INIT, base.floor));
        }
        FlowStack {
            dim,
            layers,
            support,
            base,
            params,
            layer_offsets,
            tail_offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_flow_params(&self) -> usize {
        self.tail_offset
    }

    /// Parameter slice for layer `l` out of a full parameter view.
    pub fn layer_params<'a, R>(&self, all: &'a [R], l: usize) -> &'a [R] {
        let start = self.layer_offsets[l];
        let end = if l + 1 < self.layers.len() {
            self.layer_offsets[l + 1]
        } else {
            self.tail_offset
        };
        &all[start..end]
    }

    /// Raw (unconstrained) tail parameters out of a full parameter view.
    pub fn tail_params<'a, R>(&self, all: &'a [R]) -> &'a [R] {
        &all[self.tail_offset..]
    }

    /// Fitted ν values, when the base is StudentT.
    pub fn nu_values(&self) -> Option<Vec<f64>> {
        if self.base.n_tail_params() == 0 {
            return None;
        }
        Some(
            self.tail_params(&self.params)
                .iter()
                .map(|&r| self.base.floor + crate::special::softplus(r))
                .collect(),
        )
    }

    /// Sets tail parameters to a single shared ν value.
    pub fn set_nu_all(&mut self, nu: f64) {
        let floor = self.base.floor;
        for r in &mut self.params[self.tail_offset..] {
            *r = raw_of_nu(nu, floor);
        }
    }

    /// Copies flow weights (everything except tail params) from another
    /// stack with identical layer structure.
    pub fn copy_flow_params_from(&mut self, other: &FlowStack) {
        assert_eq!(self.tail_offset, other.tail_offset, "layer layouts differ");
        self.params[..self.tail_offset].copy_from_slice(&other.params[..other.tail_offset]);
    }

    /// Base log density at z, given a full parameter view.
    pub fn base_log_prob<R: Real>(&self, all: &[R], z: &[R]) -> R {
        let tails = self.tail_params(all);
        let mut acc = z[0].lift(0.0);
        for (i, &zi) in z.iter().enumerate() {
            acc = acc + match self.base.tail_index(i) {
                None => normal_log_prob(zi),
                Some(t) => {
                    let nu = nu_of_raw(tails[t], self.base.floor);
                    studentt_log_prob(zi, nu)
                }
            };
        }
        acc
    }

    /// Pushes a base point through all layers and the support bijection;
    /// returns (y, total forward log-determinant).
    pub fn push_forward<R: Real>(&self, all: &[R], z: &[R]) -> (Vec<R>, R) {
        let mut x = z.to_vec();
        let mut log_det = z[0].lift(0.0);
        for (l, layer) in self.layers.iter().enumerate() {
            let (next, ld) = layer.forward(self.layer_params(all, l), &x);
            x = next;
            log_det = log_det + ld;
        }
        let (y, ld) = self.support.forward(&x);
        (y, log_det + ld)
    }

    /// Log density of the pushforward at a support point, fully generic
    /// (differentiable when `R` is a tape variable).
    pub fn log_prob_at<R: Real>(&self, all: &[R], x_unconstrained: &[R], support_log_det: f64) -> R {
        // x_unconstrained is the support-inverted point; invert the layers
        let mut z = x_unconstrained.to_vec();
        let mut log_det = z[0].lift(support_log_det);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (prev, ld) = layer.inverse(self.layer_params(all, l), &z);
            z = prev;
            log_det = log_det + ld;
        }
        self.base_log_prob(all, &z) + log_det
    }

    /// Exact log density at a point of the target support (f64 path).
    pub fn log_prob(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::Usage(format!(
                "log_prob: point has dim {}, stack has dim {}",
                y.len(),
                self.dim
            )));
        }
        let (x, support_ld) = self.support.inverse(y)?;
        let v = self.log_prob_at(&self.params, &x, support_ld);
        Ok(v)
    }

    /// Draws one sample (f64 path) from per-coordinate uniforms; returns
    /// (y, log q(y)). The same uniforms drive the ν-derivative during
    /// training, so sampling is inverse-CDF throughout.
    pub fn sample_from_uniforms(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let tails = self.tail_params(&self.params);
        let z: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, &ui)| match self.base.tail_index(i) {
                None => norm_quantile(ui),
                Some(t) => {
                    let nu = self.base.floor + crate::special::softplus(tails[t]);
                    crate::dist::studentt_quantile(ui, nu)
                }
            })
            .collect();
        let base_lp = self.base_log_prob(&self.params, &z);
        let (y, log_det) = self.push_forward(&self.params, &z);
        (y, base_lp - log_det)
    }

    /// n draws with per-sample log q.
    pub fn sample<RND: Rng + ?Sized>(&self, n: usize, rng: &mut RND) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut ys = Vec::with_capacity(n);
        let mut lqs = Vec::with_capacity(n);
        for _ in 0..n {
            let u: Vec<f64> = (0..self.dim)
                .map(|_| rng.random::<f64>().clamp(1e-16, 1.0 - 1e-16))
                .collect();
            let (y, lq) = self.sample_from_uniforms(&u);
            ys.push(y);
            lqs.push(lq);
        }
        (ys, lqs)
    }

    /// Randomizes every parameter (including the identity-initialized final
    /// conditioner layers); used by the closure battery to build arbitrary
    /// Lipschitz-clamped stacks.
    pub fn randomize_params(&mut self, scale: f64, rng: &mut ChaCha8Rng) {
        for p in &mut self.params[..self.tail_offset] {
            *p = rng.random_range(-scale..scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{backward, Tape, Var};
    use rand::SeedableRng;

    fn stack_d2(base: BaseKind) -> FlowStack {
        FlowStack::new(base, SupportBijection::identity(2), 8, 2, 99)
    }

    #[test]
    fn identity_at_init() {
        let s = stack_d2(BaseKind::Gaussian);
        let z = [0.4, -1.7];
        for (l, layer) in s.layers.iter().enumerate() {
            let (x, ld) = layer.forward(s.layer_params(&s.params, l), &z);
            assert_eq!(x, z.to_vec());
            assert_eq!(ld, 0.0);
            let (zz, ldi) = layer.inverse(s.layer_params(&s.params, l), &z);
            assert_eq!(zz, z.to_vec());
            assert_eq!(ldi, 0.0);
        }
    }

    #[test]
    fn d1_layer_is_affine_in_constants() {
        // with d=1 there are no autoregressive inputs; μ and λ are the
        // output biases
        let mut s = FlowStack::new(BaseKind::Gaussian, SupportBijection::identity(1), 8, 1, 3);
        let layer = &s.layers[0];
        let n = layer.n_params();
        // set b3: mu bias then lambda bias are the last two params
        s.params[n - 2] = 0.7; // mu
        s.params[n - 1] = 0.3; // lambda
        let (x, ld) = layer.forward(&s.params[..n], &[2.0]);
        let lt = 5.0 * (0.3f64 / 5.0).tanh();
        assert!((x[0] - (2.0 * lt.exp() + 0.7)).abs() < 1e-14);
        assert!((ld - lt).abs() < 1e-14);
    }

    #[test]
    fn inverse_of_forward_roundtrip() {
        let mut s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        s.randomize_params(0.8, &mut rng);
        for t in 0..50 {
            let z = [
                (t as f64 * 0.37).sin() * 2.0,
                (t as f64 * 0.11).cos() * 3.0,
            ];
            for (l, layer) in s.layers.iter().enumerate() {
                let p = s.layer_params(&s.params, l);
                let (x, ld_f) = layer.forward(p, &z);
                let (back, ld_i) = layer.inverse(p, &x);
                assert!((back[0] - z[0]).abs() < 1e-8);
                assert!((back[1] - z[1]).abs() < 1e-8);
                assert!((ld_f + ld_i).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn autoregressive_jacobian_structure() {
        // finite-difference Jacobian of forward must be triangular under the
        // ordering, and |log det J| must match the returned log_det
        let mut s = FlowStack::new(BaseKind::Gaussian, SupportBijection::identity(3), 16, 2, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        s.randomize_params(0.7, &mut rng);
        let z0 = [0.3, -0.9, 1.4];
        let h = 1e-6;
        for (l, layer) in s.layers.iter().enumerate() {
            let p = s.layer_params(&s.params, l);
            let (_, ld) = layer.forward(p, &z0);
            let mut jac = [[0.0f64; 3]; 3];
            for k in 0..3 {
                let mut zp = z0;
                zp[k] += h;
                let (xp, _) = layer.forward(p, &zp);
                let mut zm = z0;
                zm[k] -= h;
                let (xm, _) = layer.forward(p, &zm);
                for j in 0..3 {
                    jac[j][k] = (xp[j] - xm[j]) / (2.0 * h);
                }
            }
            // position of each coordinate under the ordering
            let mut pos = [0usize; 3];
            for (j, &c) in layer.ordering.iter().enumerate() {
                pos[c] = j;
            }
            let mut log_det_diag = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    if pos[k] > pos[j] {
                        assert!(
                            jac[j][k].abs() < 1e-6,
                            "layer {l}: dx{j}/dz{k} = {} not zero",
                            jac[j][k]
                        );
                    }
                }
                log_det_diag += jac[j][j].ln();
            }
            assert!(
                (log_det_diag - ld).abs() < 1e-6,
                "layer {l}: fd log det {log_det_diag} vs {ld}"
            );
        }
    }

    #[test]
    fn scale_clamp_bound_holds() {
        let mut s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        s.randomize_params(3.0, &mut rng);
        let mut max_abs: f64 = 0.0;
        for t in 0..10_000 {
            let z = [
                ((t * 7919) % 1000) as f64 / 50.0 - 10.0,
                ((t * 104729) % 1000) as f64 / 50.0 - 10.0,
            ];
            for (l, layer) in s.layers.iter().enumerate() {
                let p = s.layer_params(&s.params, l);
                let z_ord: Vec<f64> = layer.ordering.iter().map(|&i| z[i]).collect();
                let (_, lam) = layer.cond.eval(p, &z_ord);
                for &l_raw in &lam {
                    max_abs = max_abs.max(layer.clamped(l_raw).abs());
                }
            }
        }
        assert!(max_abs <= SCALE_CLAMP, "max |lambda~| = {max_abs}");
    }

    #[test]
    fn support_bijections() {
        let sb = SupportBijection::new(vec![
            SupportKind::Positive,
            SupportKind::UnitInterval,
            SupportKind::Identity,
        ]);
        let (y, ld) = sb.forward(&[0.0f64, 0.0, 3.0]);
        assert_eq!(y[0], 1.0);
        assert_eq!(y[1], 0.5);
        assert_eq!(y[2], 3.0);
        // contributions: exp at 0 → 0; sigmoid at 0 → log(1/4)
        assert!((ld - 0.25f64.ln()).abs() < 1e-12);
        let (x, ld_inv) = sb.inverse(&y).unwrap();
        assert!(x[0].abs() < 1e-12 && x[1].abs() < 1e-12);
        assert!((ld + ld_inv).abs() < 1e-12);
        // out of range errors name the coordinate
        let err = sb.inverse(&[-1.0, 0.5, 0.0]).unwrap_err();
        assert!(err.to_string().contains("coordinate 0"));
        let err = sb.inverse(&[1.0, 1.5, 0.0]).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"));
    }

    #[test]
    fn log_prob_identity_stack_is_base_density() {
        let s = stack_d2(BaseKind::Gaussian);
        let y = [0.3, -1.1];
        let lp = s.log_prob(&y).unwrap();
        let expect = normal_log_prob(y[0]) + normal_log_prob(y[1]);
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn log_prob_affine_layer_matches_change_of_variables() {
        // single layer with lambda bias set so x = 2z, mu = 0
        let mut s = FlowStack::new(BaseKind::Gaussian, SupportBijection::identity(1), 8, 1, 3);
        let n = s.layers[0].n_params();
        // solve s·tanh(λ/s) = ln 2 for the raw bias
        let target = 2.0f64.ln();
        let raw = 5.0 * (target / 5.0).atanh();
        s.params[n - 1] = raw;
        let y = 1.3;
        let lp = s.log_prob(&[y]).unwrap();
        let expect = normal_log_prob(y / 2.0) - 2.0f64.ln();
        assert!((lp - expect).abs() < 1e-12, "{lp} vs {expect}");
    }

    #[test]
    fn sampling_path_log_q_matches_log_prob() {
        for base in [BaseKind::Gaussian, BaseKind::StudentTPerDim] {
            let mut s = stack_d2(base);
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            s.randomize_params(0.6, &mut rng);
            let (ys, lqs) = s.sample(100, &mut rng);
            for (y, lq) in ys.iter().zip(&lqs) {
                let lp = s.log_prob(y).unwrap();
                assert!((lp - lq).abs() < 1e-8, "{lp} vs {lq}");
            }
        }
    }

    #[test]
    fn identity_stack_sample_covariance_is_identity() {
        let s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let (ys, _) = s.sample(n, &mut rng);
        let mut m = [0.0f64; 2];
        for y in &ys {
            m[0] += y[0];
            m[1] += y[1];
        }
        m[0] /= n as f64;
        m[1] /= n as f64;
        let mut c = [[0.0f64; 2]; 2];
        for y in &ys {
            for a in 0..2 {
                for b in 0..2 {
                    c[a][b] += (y[a] - m[a]) * (y[b] - m[b]);
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] /= n as f64;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((c[a][b] - expect).abs() < 0.05, "cov[{a}][{b}] = {}", c[a][b]);
            }
        }
    }

    #[test]
    fn stacked_log_det_additivity() {
        let mut s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        s.randomize_params(0.9, &mut rng);
        let z = [0.7, -0.2];
        let (x1, ld1) = s.layers[0].forward(s.layer_params(&s.params, 0), &z);
        let (_, ld2) = s.layers[1].forward(s.layer_params(&s.params, 1), &x1);
        let (_, total) = s.push_forward(&s.params, &z);
        assert_eq!(total, ld1 + ld2);
    }

    #[test]
    fn randomized_density_integrates_to_one() {
        let mut s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        s.randomize_params(0.8, &mut rng);
        let lo = -20.0;
        let hi = 20.0;
        let n = 400usize;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for a in 0..=n {
            let wa = if a == 0 || a == n { 0.5 } else { 1.0 };
            let ya = lo + a as f64 * h;
            for b in 0..=n {
                let wb = if b == 0 || b == n { 0.5 } else { 1.0 };
                let yb = lo + b as f64 * h;
                total += wa * wb * s.log_prob(&[ya, yb]).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 2e-2, "integral = {total}");
    }

    #[test]
    fn forward_gradients_flow_through_layer() {
        // gradient of sum of forward outputs wrt a conditioner weight
        // matches finite differences
        let mut s = stack_d2(BaseKind::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        s.randomize_params(0.5, &mut rng);
        let z0 = [0.9, -0.4];
        let run = |params: &[f64]| -> f64 {
            let (x, ld) = s.layers[0].forward(&params[..s.layers[0].n_params()], &z0);
            x[0] + x[1] * 2.0 + ld
        };
        let tape = Tape::new();
        let pv: Vec<Var> = s.params.iter().map(|&p| tape.input(p)).collect();
        let zv: Vec<Var> = z0.iter().map(|&z| tape.constant(z)).collect();
        let (x, ld) = s.layers[0].forward(&pv[..s.layers[0].n_params()], &zv);
        let out = x[0] + x[1] * 2.0 + ld;
        let adj = backward(out).unwrap();
        let h = 1e-6;
        for idx in [0usize, 3, 10, s.layers[0].n_params() - 1] {
            let mut p = s.params.clone();
            p[idx] += h;
            let hi = run(&p);
            p[idx] -= 2.0 * h;
            let lo = run(&p);
            let fd = (hi - lo) / (2.0 * h);
            let ad = adj[pv[idx].index()];
            assert!(
                (ad - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                "param {idx}: ad {ad} fd {fd}"
            );
        }
    }
}
