//! RBF kernel pooling over a row of term similarities.
//!
//! For kernel `k` the pooled value is `log Σ_j exp(-(c_j - μ_k)² / (2σ_k²))`,
//! evaluated as a log-sum-exp so that long rows cannot underflow to `log 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every kernel width at inference and training time.
pub const SIGMA_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl KernelBank {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Config("kernel bank needs at least one kernel".into()));
        }
        if mu.len() != sigma.len() {
            return Err(Error::Config(format!(
                "kernel bank has {} means but {} widths",
                mu.len(),
                sigma.len()
            )));
        }
        if mu.iter().chain(&sigma).any(|x| !x.is_finite()) {
            return Err(Error::Config("kernel parameters must be finite".into()));
        }
        Ok(Self {
            mu,
            sigma: sigma.into_iter().map(|s| s.max(SIGMA_MIN)).collect(),
        })
    }

    /// `k` means evenly spaced over [-0.9, 1.0], all widths 0.1.
    pub fn evenly_spaced(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("kernel bank needs at least one kernel".into()));
        }
        let mu = if k == 1 {
            vec![1.0]
        } else {
            (0..k)
                .map(|i| -0.9 + 1.9 * i as f64 / (k - 1) as f64)
                .collect()
        };
        Self::new(mu, vec![0.1; k])
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    #[inline]
    pub fn effective_sigma(&self, k: usize) -> f64 {
        self.sigma[k].max(SIGMA_MIN)
    }

    pub fn clamp_sigma(&mut self) {
        for s in &mut self.sigma {
            *s = s.max(SIGMA_MIN);
        }
    }
}

/// Pooled kernel values, one per kernel.
pub fn kernel_pool(similarities: &[f64], kernels: &KernelBank) -> Result<Vec<f64>> {
    if similarities.is_empty() {
        return Err(Error::EmptySimilarities);
    }
    let mut out = vec![0.0; kernels.len()];
    pool_into(similarities, kernels, &mut out);
    Ok(out)
}

/// Writes pooled values into `out`. `similarities` must be non-empty and
/// already clamped to [-1, 1].
pub(crate) fn pool_into(similarities: &[f64], kernels: &KernelBank, out: &mut [f64]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mu = kernels.mu[k];
        let scale = -0.5 / kernels.effective_sigma(k).powi(2);
        let sum = gaussian_terms(similarities, mu, scale, 0.0, None);
        // Unshifted sums only lose precision once every term is near underflow.
        *slot = if sum > 1e-280 {
            sum.ln()
        } else {
            let shift = largest_exponent(similarities, mu, scale);
            shift + gaussian_terms(similarities, mu, scale, shift, None).ln()
        };
    }
}

fn largest_exponent(similarities: &[f64], mu: f64, scale: f64) -> f64 {
    let closest = similarities.iter().map(|&c| (c - mu).abs()).fold(f64::INFINITY, f64::min);
    scale * closest * closest
}

/// Sums `exp(scale·(c - μ)² - shift)` over the row, optionally storing each term.
fn gaussian_terms(similarities: &[f64], mu: f64, scale: f64, shift: f64, terms: Option<&mut [f64]>) -> f64 {
    let term = |c: f64| {
        let d = c - mu;
        (scale * d * d - shift).exp()
    };
    match terms {
        Some(out) => out
            .iter_mut()
            .zip(similarities)
            .map(|(slot, &c)| {
                *slot = term(c);
                *slot
            })
            .sum(),
        None => similarities.iter().map(|&c| term(c)).sum(),
    }
}

/// Pooled values together with their partial derivatives with respect to
/// `μ_k` and `σ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledWithGrad {
    pub values: Vec<f64>,
    pub d_mu: Vec<f64>,
    pub d_sigma: Vec<f64>,
}

pub fn kernel_pool_with_grad(similarities: &[f64], kernels: &KernelBank) -> Result<PooledWithGrad> {
    if similarities.is_empty() {
        return Err(Error::EmptySimilarities);
    }
    let k_count = kernels.len();
    let mut values = vec![0.0; k_count];
    let mut d_mu = vec![0.0; k_count];
    let mut d_sigma = vec![0.0; k_count];
    let mut exps = vec![0.0; similarities.len()];
    for k in 0..k_count {
        let mu = kernels.mu[k];
        let sigma = kernels.effective_sigma(k);
        let s2 = sigma * sigma;
        let scale = -0.5 / s2;
        let mut shift = 0.0;
        let mut sum = gaussian_terms(similarities, mu, scale, shift, Some(&mut exps));
        if sum <= 1e-280 {
            shift = largest_exponent(similarities, mu, scale);
            sum = gaussian_terms(similarities, mu, scale, shift, Some(&mut exps));
        }
        values[k] = shift + sum.ln();
        // softmax-weighted averages of ∂a_j/∂μ and ∂a_j/∂σ
        let (mut gm, mut gs) = (0.0, 0.0);
        for (&e, &c) in exps.iter().zip(similarities) {
            let d = c - mu;
            gm += e * d;
            gs += e * d * d;
        }
        d_mu[k] = gm / (sum * s2);
        d_sigma[k] = gs / (sum * s2 * sigma);
    }
    Ok(PooledWithGrad {
        values,
        d_mu,
        d_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank(mu: f64, sigma: f64) -> KernelBank {
        KernelBank::new(vec![mu], vec![sigma]).unwrap()
    }

    #[test]
    fn single_similarity_at_mean_is_zero() {
        let out = kernel_pool(&[0.4], &bank(0.4, 0.1)).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn m_copies_at_mean_give_log_m() {
        let out = kernel_pool(&[0.4; 37], &bank(0.4, 0.1)).unwrap();
        assert!((out[0] - 37f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_pair() {
        // log(e^-0.5 + e^-0.5) = ln 2 - 0.5
        let out = kernel_pool(&[0.2, 0.8], &bank(0.5, 0.3)).unwrap();
        assert!((out[0] - (2f64.ln() - 0.5)).abs() < 1e-12);
        assert!((out[0] - 0.193_147).abs() < 1e-6);
    }

    #[test]
    fn empty_row_is_error() {
        assert!(matches!(kernel_pool(&[], &bank(0.0, 0.1)), Err(Error::EmptySimilarities)));
    }

    #[test]
    fn long_row_stays_finite() {
        let row = vec![-1.0; 10_000];
        let out = kernel_pool(&row, &KernelBank::evenly_spaced(11).unwrap()).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        // far kernel at 1.0: every exponent is -(2.0)^2/0.02 = -200
        assert!((out[10] - (10_000f64.ln() - 200.0)).abs() < 1e-9);
    }

    #[test]
    fn tiny_sigma_is_clamped() {
        let b = KernelBank::new(vec![0.0], vec![1e-9]).unwrap();
        assert_eq!(b.sigma[0], SIGMA_MIN);
    }

    #[test]
    fn evenly_spaced_bank() {
        let b = KernelBank::evenly_spaced(11).unwrap();
        assert_eq!(b.len(), 11);
        assert!((b.mu[0] + 0.9).abs() < 1e-12);
        assert!((b.mu[10] - 1.0).abs() < 1e-12);
        assert!(b.sigma.iter().all(|&s| s == 0.1));
        assert!(KernelBank::evenly_spaced(0).is_err());
    }

    #[test]
    fn gradient_matches_central_difference() {
        let row = [0.13, -0.4, 0.77, 0.9, 0.05];
        let base = KernelBank::new(vec![0.3, -0.2], vec![0.25, 0.4]).unwrap();
        let g = kernel_pool_with_grad(&row, &base).unwrap();
        assert_eq!(g.values, kernel_pool(&row, &base).unwrap());
        let h = 1e-6;
        for k in 0..2 {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus.mu[k] += h;
            minus.mu[k] -= h;
            let fd = (kernel_pool(&row, &plus).unwrap()[k] - kernel_pool(&row, &minus).unwrap()[k]) / (2.0 * h);
            assert!((fd - g.d_mu[k]).abs() < 1e-6 * fd.abs().max(1.0));
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus.sigma[k] += h;
            minus.sigma[k] -= h;
            let fd = (kernel_pool(&row, &plus).unwrap()[k] - kernel_pool(&row, &minus).unwrap()[k]) / (2.0 * h);
            assert!((fd - g.d_sigma[k]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn duplicate_never_decreases(row in proptest::collection::vec(-1.0f64..=1.0, 1..40),
                                     pick in any::<prop::sample::Index>()) {
            let bank = KernelBank::evenly_spaced(11).unwrap();
            let before = kernel_pool(&row, &bank).unwrap();
            let mut longer = row.clone();
            longer.push(row[pick.index(row.len())]);
            let after = kernel_pool(&longer, &bank).unwrap();
            for (a, b) in after.iter().zip(&before) {
                prop_assert!(a >= b);
            }
        }
    }
}
