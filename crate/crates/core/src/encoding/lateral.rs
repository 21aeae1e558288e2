//! Intensity-domain lateral inhibition and local normalization.

use ndarray::{Array2, Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square kernel of per-ring inhibition factors; the center is one.
#[derive(Debug, Clone, PartialEq)]
pub struct InhibitionKernel<T> {
    values: Array2<T>,
}

impl<T: Scalar> InhibitionKernel<T> {
    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn radius(&self) -> usize {
        self.values.nrows() / 2
    }
}

/// Builds a `(2n+1)²` kernel whose ring at Chebyshev distance `d` holds
/// `factors[d-1]`.
pub fn generate_inhibition_kernel<T: Scalar>(factors: &[f64]) -> Result<InhibitionKernel<T>> {
    if factors.is_empty() {
        return Err(Error::invalid("inhibition kernel needs at least one factor"));
    }
    if let Some(bad) = factors.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::invalid(format!(
            "inhibition factor {bad} outside (0, 1]"
        )));
    }
    let n = factors.len() as isize;
    let side = (2 * n + 1) as usize;
    let values = Array2::from_shape_fn([side, side], |(r, c)| {
        let d = (r as isize - n).abs().max((c as isize - n).abs());
        if d == 0 {
            T::one()
        } else {
            T::from_f64_lossy(factors[d as usize - 1])
        }
    });
    Ok(InhibitionKernel { values })
}

/// Scales every location down by the kernel factor of each strictly stronger
/// neighbor in the same channel.
///
/// Strength is judged on the input values, so the result does not depend on
/// the order in which salient points are visited.
pub fn intensity_lateral_inhibition<T: Scalar>(
    intensities: ArrayView3<T>,
    kernel: &InhibitionKernel<T>,
) -> Array3<T> {
    let (nf, h, w) = intensities.dim();
    let rad = kernel.radius() as isize;
    let mut out = intensities.to_owned();
    for f in 0..nf {
        for r in 0..h {
            for c in 0..w {
                let v = intensities[[f, r, c]];
                let mut scale = T::one();
                for dr in -rad..=rad {
                    let y = r as isize + dr;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for dc in -rad..=rad {
                        let x = c as isize + dc;
                        if x < 0 || x >= w as isize || (dr == 0 && dc == 0) {
                            continue;
                        }
                        if intensities[[f, y as usize, x as usize]] > v {
                            scale = scale * kernel.values[[(dr + rad) as usize, (dc + rad) as usize]];
                        }
                    }
                }
                out[[f, r, c]] = v * scale;
            }
        }
    }
    out
}

/// Default lower clamp on the regional mean.
pub const DEFAULT_NORM_EPSILON: f64 = 1e-12;

/// Divides each value by the mean of its `(2·radius+1)²` window in the same
/// channel. Windows are truncated at the borders; the mean is clamped below
/// by `epsilon`.
pub fn local_normalization<T: Scalar>(
    intensities: ArrayView3<T>,
    radius: usize,
    epsilon: f64,
) -> Result<Array3<T>> {
    if radius == 0 {
        return Err(Error::invalid("normalization radius must be positive"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("normalization epsilon must be positive"));
    }
    let (nf, h, w) = intensities.dim();
    let mut out = Array3::zeros([nf, h, w]);
    // summed-area table per channel, in f64
    let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
    for f in 0..nf {
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += intensities[[f, r, c]].to_f64_lossy();
                sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row;
            }
        }
        for r in 0..h {
            let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
            for c in 0..w {
                let (c0, c1) = (c.saturating_sub(radius), (c + radius + 1).min(w));
                let sum = sat[r1 * (w + 1) + c1] - sat[r0 * (w + 1) + c1] - sat[r1 * (w + 1) + c0]
                    + sat[r0 * (w + 1) + c0];
                let mean = sum / ((r1 - r0) * (c1 - c0)) as f64;
                let v = intensities[[f, r, c]].to_f64_lossy();
                out[[f, r, c]] = T::from_f64_lossy(v / mean.max(epsilon));
            }
        }
    }
    Ok(out)
}
