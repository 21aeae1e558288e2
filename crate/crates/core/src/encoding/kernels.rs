use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters a kernel was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Difference of Gaussians; `sigma1 < sigma2` gives an on-center kernel.
    Dog { size: usize, sigma1: f64, sigma2: f64 },
    Gabor {
        size: usize,
        lambda: f64,
        theta: f64,
        sigma: f64,
        gamma: f64,
    },
}

impl KernelSpec {
    pub fn size(&self) -> usize {
        match *self {
            KernelSpec::Dog { size, .. } | KernelSpec::Gabor { size, .. } => size,
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<FilterKernel<T>> {
        match *self {
            KernelSpec::Dog { size, sigma1, sigma2 } => make_dog_kernel(size, sigma1, sigma2),
            KernelSpec::Gabor {
                size,
                lambda,
                theta,
                sigma,
                gamma,
            } => make_gabor_kernel(size, lambda, theta, sigma, gamma),
        }
    }
}

/// Square, odd-sized, zero-mean kernel scaled to a maximum magnitude of one.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel<T> {
    values: Array2<T>,
    spec: KernelSpec,
}

impl<T: Scalar> FilterKernel<T> {
    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Zero-pads the kernel symmetrically to `size`.
    fn padded_to(&self, size: usize) -> Array2<T> {
        let off = (size - self.size()) / 2;
        let mut out = Array2::zeros([size, size]);
        for ((r, c), &v) in self.values.indexed_iter() {
            out[[r + off, c + off]] = v;
        }
        out
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel size must be odd and at least 3, got {size}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Evaluates `f(x, y)` over the centered grid, with `x` the column offset and
/// `y` the row offset.
fn sample_grid(size: usize, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let half = (size / 2) as f64;
    Array2::from_shape_fn([size, size], |(r, c)| f(c as f64 - half, r as f64 - half))
}

/// Subtracts the mean and scales so the largest magnitude is one. A kernel
/// that is identically zero after centering is returned as zeros.
fn normalize<T: Scalar>(mut k: Array2<f64>, spec: KernelSpec) -> FilterKernel<T> {
    let mean = k.mean().unwrap_or(0.0);
    k.mapv_inplace(|v| v - mean);
    let peak = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        k.mapv_inplace(|v| v / peak);
    } else {
        log::warn!("degenerate filter kernel {spec:?}: all entries cancel");
        k.fill(0.0);
    }
    FilterKernel {
        values: k.mapv(T::from_f64_lossy),
        spec,
    }
}

pub fn dog_value(x: f64, y: f64, sigma1: f64, sigma2: f64) -> f64 {
    let r2 = x * x + y * y;
    let g = |s: f64| (-r2 / (2.0 * s * s)).exp() / (s * s);
    (g(sigma1) - g(sigma2)) / (2.0 * PI)
}

pub fn gabor_value(x: f64, y: f64, lambda: f64, theta: f64, sigma: f64, gamma: f64) -> f64 {
    let xr = x * theta.cos() + y * theta.sin();
    let yr = -x * theta.sin() + y * theta.cos();
    (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp()
        * (2.0 * PI * xr / lambda).cos()
}

pub fn make_dog_kernel<T: Scalar>(size: usize, sigma1: f64, sigma2: f64) -> Result<FilterKernel<T>> {
    check_size(size)?;
    check_positive("sigma1", sigma1)?;
    check_positive("sigma2", sigma2)?;
    let raw = sample_grid(size, |x, y| dog_value(x, y, sigma1, sigma2));
    Ok(normalize(raw, KernelSpec::Dog { size, sigma1, sigma2 }))
}

pub fn make_gabor_kernel<T: Scalar>(
    size: usize,
    lambda: f64,
    theta: f64,
    sigma: f64,
    gamma: f64,
) -> Result<FilterKernel<T>> {
    check_size(size)?;
    check_positive("lambda", lambda)?;
    check_positive("sigma", sigma)?;
    check_positive("gamma", gamma)?;
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    let raw = sample_grid(size, |x, y| gabor_value(x, y, lambda, theta, sigma, gamma));
    Ok(normalize(
        raw,
        KernelSpec::Gabor {
            size,
            lambda,
            theta,
            sigma,
            gamma,
        },
    ))
}

/// A stack of equally sized kernels applied together, with zero padding and
/// an activation threshold.
///
/// Kernels of different sizes are zero-padded to the largest one, which
/// leaves them zero-mean and unit-peak.
#[derive(Debug, Clone)]
pub struct FilterBank<T> {
    kernels: Vec<FilterKernel<T>>,
    weights: Array3<T>,
    padding: usize,
    threshold: T,
}

impl<T: Scalar> FilterBank<T> {
    pub fn new(kernels: Vec<FilterKernel<T>>, padding: usize, threshold: T) -> Result<Self> {
        let size = kernels
            .iter()
            .map(FilterKernel::size)
            .max()
            .ok_or_else(|| Error::invalid("filter bank needs at least one kernel"))?;
        let mut weights = Array3::zeros([kernels.len(), size, size]);
        for (f, k) in kernels.iter().enumerate() {
            weights
                .index_axis_mut(ndarray::Axis(0), f)
                .assign(&k.padded_to(size));
        }
        Ok(Self {
            kernels,
            weights,
            padding,
            threshold,
        })
    }

    pub fn from_specs(specs: &[KernelSpec], padding: usize, threshold: T) -> Result<Self> {
        let kernels = specs.iter().map(KernelSpec::build).collect::<Result<Vec<_>>>()?;
        Self::new(kernels, padding, threshold)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernels(&self) -> &[FilterKernel<T>] {
        &self.kernels
    }

    /// Kernels after padding to a common size, `(F, K, K)`.
    pub fn weights(&self) -> &Array3<T> {
        &self.weights
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }
}

/// Cross-correlates `image` with every kernel of `bank` and zeroes
/// responses below the bank threshold. Output is `(F, H', W')` with
/// `H' = H + 2·padding − K + 1`.
pub fn apply_filter_bank<T: Scalar>(image: ArrayView2<T>, bank: &FilterBank<T>) -> Result<Array3<T>> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::invalid("image is empty"));
    }
    let k = bank.kernel_size();
    let p = bank.padding;
    if k > h + 2 * p || k > w + 2 * p {
        return Err(Error::invalid(format!(
            "kernel {k}x{k} larger than padded image {}x{}",
            h + 2 * p,
            w + 2 * p
        )));
    }
    let (oh, ow) = (h + 2 * p - k + 1, w + 2 * p - k + 1);
    let mut out = Array3::zeros([bank.len(), oh, ow]);
    for f in 0..bank.len() {
        let kern = bank.weights.index_axis(ndarray::Axis(0), f);
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = T::zero();
                for i in 0..k {
                    let y = r + i;
                    if y < p || y - p >= h {
                        continue;
                    }
                    for j in 0..k {
                        let x = c + j;
                        if x < p || x - p >= w {
                            continue;
                        }
                        acc += kern[[i, j]] * image[[y - p, x - p]];
                    }
                }
                out[[f, r, c]] = if acc < bank.threshold { T::zero() } else { acc };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn even_size_rejected() {
        assert!(make_dog_kernel::<f64>(4, 1.0, 2.0).is_err());
        assert!(make_gabor_kernel::<f64>(6, 3.0, 0.0, 1.0, 1.0).is_err());
        assert!(make_dog_kernel::<f64>(1, 1.0, 2.0).is_err());
        assert!(make_dog_kernel::<f64>(5, 0.0, 2.0).is_err());
    }

    #[test]
    fn equal_sigmas_give_zero_kernel() {
        let k = make_dog_kernel::<f64>(5, 1.5, 1.5).unwrap();
        assert!(k.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dog_matches_direct_formula() {
        let k = make_dog_kernel::<f64>(7, 1.0, 2.0).unwrap();
        // oracle: evaluate the Gaussian difference pointwise, then normalize
        let mut raw = vec![];
        for r in -3i32..=3 {
            for c in -3i32..=3 {
                let d2 = (r * r + c * c) as f64;
                let g1 = (-d2 / 2.0).exp();
                let g2 = (-d2 / 8.0).exp() / 4.0;
                raw.push((g1 - g2) / (2.0 * PI));
            }
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let peak = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (got, want) in k.values().iter().zip(&centered) {
            assert_abs_diff_eq!(*got, want / peak, epsilon = 1e-12);
        }
        let center = k.values()[[3, 3]];
        assert_eq!(center, 1.0);
        assert!(k.values().iter().all(|&v| v <= center));
        assert_abs_diff_eq!(k.values().sum(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn gabor_half_turn_symmetry() {
        let a = make_gabor_kernel::<f64>(9, 4.0, 0.3, 2.0, 0.5).unwrap();
        let b = make_gabor_kernel::<f64>(9, 4.0, 0.3 + PI, 2.0, 0.5).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn gabor_quarter_turn_is_transpose() {
        let a = make_gabor_kernel::<f64>(7, 3.0, 0.0, 1.5, 1.0).unwrap();
        let b = make_gabor_kernel::<f64>(7, 3.0, PI / 2.0, 1.5, 1.0).unwrap();
        for r in 0..7 {
            for c in 0..7 {
                assert_abs_diff_eq!(a.values()[[r, c]], b.values()[[c, r]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gabor_matches_scalar_evaluation() {
        let (lambda, theta, sigma, gamma) = (2.5, 0.7, 1.2, 0.8);
        let k = make_gabor_kernel::<f64>(5, lambda, theta, sigma, gamma).unwrap();
        let mut raw = [[0.0; 5]; 5];
        for (r, row) in raw.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let (x, y) = (c as f64 - 2.0, r as f64 - 2.0);
                let xr = x * theta.cos() + y * theta.sin();
                let yr = -x * theta.sin() + y * theta.cos();
                *v = (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp()
                    * (2.0 * PI * xr / lambda).cos();
            }
        }
        let flat: Vec<f64> = raw.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / 25.0;
        let peak = flat.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        for (got, want) in k.values().iter().zip(&flat) {
            assert_abs_diff_eq!(*got, (want - mean) / peak, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_kernels_are_zero_mean_unit_peak() {
        for spec in [
            KernelSpec::Dog { size: 3, sigma1: 0.33, sigma2: 0.66 },
            KernelSpec::Dog { size: 13, sigma1: 2.9, sigma2: 1.4 },
            KernelSpec::Gabor { size: 11, lambda: 5.0, theta: 1.0, sigma: 2.8, gamma: 0.3 },
        ] {
            let k: FilterKernel<f32> = spec.build().unwrap();
            let sum: f64 = k.values().iter().map(|&v| v as f64).sum();
            assert!(sum.abs() < 1e-6, "{spec:?} sum {sum}");
            let peak = k.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert_eq!(peak, 1.0);
        }
    }

    fn single_bank(k: Array2<f64>, padding: usize, threshold: f64) -> FilterBank<f64> {
        let kernel = FilterKernel {
            values: k,
            spec: KernelSpec::Dog { size: 3, sigma1: 1.0, sigma2: 2.0 },
        };
        FilterBank::new(vec![kernel], padding, threshold).unwrap()
    }

    #[test]
    fn impulse_response_is_unflipped_kernel() {
        let k = Array2::from_shape_fn([3, 3], |(r, c)| (r * 3 + c) as f64 + 1.0);
        let bank = single_bank(k.clone(), 1, f64::NEG_INFINITY);
        let mut img = Array2::zeros([7, 7]);
        img[[3, 3]] = 1.0;
        let out = apply_filter_bank(img.view(), &bank).unwrap();
        // cross-correlation: out[3+dr][3+dc] = k[1-dr][1-dc]
        for dr in -1i32..=1 {
            for dc in -1i32..=1 {
                let got = out[[0, (3 + dr) as usize, (3 + dc) as usize]];
                assert_eq!(got, k[[(1 - dr) as usize, (1 - dc) as usize]]);
            }
        }
        assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 9);
    }

    #[test]
    fn zero_image_and_shapes() {
        let specs: Vec<KernelSpec> = (0..6)
            .map(|i| KernelSpec::Dog { size: 7, sigma1: 1.0 + i as f64 * 0.1, sigma2: 2.0 })
            .collect();
        let bank = FilterBank::<f32>::from_specs(&specs, 3, 0.0).unwrap();
        let out = apply_filter_bank(Array2::zeros([28, 28]).view(), &bank).unwrap();
        assert_eq!(out.shape(), &[6, 28, 28]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_sizes_padded_to_largest() {
        let specs = [
            KernelSpec::Dog { size: 3, sigma1: 0.33, sigma2: 0.66 },
            KernelSpec::Dog { size: 13, sigma1: 1.4, sigma2: 2.9 },
        ];
        let bank = FilterBank::<f64>::from_specs(&specs, 6, 0.0).unwrap();
        assert_eq!(bank.kernel_size(), 13);
        assert_eq!(bank.weights()[[0, 6, 6]], bank.kernels()[0].values()[[1, 1]]);
        assert_eq!(bank.weights()[[0, 0, 0]], 0.0);
    }

    #[test]
    fn threshold_clears_weak_responses() {
        let k = Array2::from_elem([3, 3], 1.0);
        let bank = single_bank(k, 1, 2.5);
        let img = Array2::from_shape_fn([5, 5], |(r, c)| ((r * 7 + c * 3) % 5) as f64 / 4.0);
        let out = apply_filter_bank(img.view(), &bank).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v >= 2.5));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let bank = single_bank(Array2::ones([3, 3]), 0, 0.0);
        assert!(apply_filter_bank(Array2::zeros([2, 5]).view(), &bank).is_err());
        assert!(apply_filter_bank(Array2::<f64>::zeros([0, 0]).view(), &bank).is_err());
    }
}
