use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::TimeTensor;

/// Max-pooling geometry. Stride defaults to the window, padding to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub window: (usize, usize),
    #[serde(default)]
    stride: Option<(usize, usize)>,
    #[serde(default)]
    pub padding: (usize, usize),
}

impl PoolSpec {
    pub fn new(window: (usize, usize)) -> Self {
        Self {
            window,
            stride: None,
            padding: (0, 0),
        }
    }

    pub fn square(window: usize, stride: usize, padding: usize) -> Self {
        Self {
            window: (window, window),
            stride: Some((stride, stride)),
            padding: (padding, padding),
        }
    }

    pub fn with_stride(mut self, stride: (usize, usize)) -> Self {
        self.stride = Some(stride);
        self
    }

    pub fn with_padding(mut self, padding: (usize, usize)) -> Self {
        self.padding = padding;
        self
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride.unwrap_or(self.window)
    }

    /// `(⌊(H + 2·D_h) / R_h⌋, ⌊(W + 2·D_w) / R_w⌋)`.
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let (rh, rw) = self.stride();
        ((h + 2 * self.padding.0) / rh, (w + 2 * self.padding.1) / rw)
    }
}

/// Per-time-step 2-D max pooling over zero-padded input.
///
/// On a spike-wave this keeps the earliest spike of each window; on
/// potentials, the largest potential. A window that runs past the padded
/// border only sees zeros there.
pub fn pool<T: Scalar, X: TimeTensor<T>>(x: &X, spec: &PoolSpec) -> Result<X> {
    let [nt, nf, h, w] = x.dims();
    let (ph, pw) = spec.window;
    let (rh, rw) = spec.stride();
    let (dh, dw) = spec.padding;
    if ph == 0 || pw == 0 || rh == 0 || rw == 0 {
        return Err(Error::invalid("pooling window and stride must be positive"));
    }
    if ph > h + 2 * dh || pw > w + 2 * dw {
        return Err(Error::invalid(format!(
            "pooling window {ph}x{pw} larger than padded input {}x{}",
            h + 2 * dh,
            w + 2 * dw
        )));
    }
    let (oh, ow) = spec.output_size(h, w);
    if oh * ow * nt * nf == 0 {
        return Ok(X::from_preserving(Array4::zeros([nt, nf, oh, ow])));
    }
    let a = x.array().as_standard_layout();
    let src = a.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); nt * nf * oh * ow];
    // clipped window bounds per output row / column, and whether the window
    // reaches into padding
    let span = |o: usize, r: usize, d: usize, p: usize, n: usize| {
        let lo = (o * r) as isize - d as isize;
        let hi = lo + p as isize;
        let (a, b) = (lo.clamp(0, n as isize) as usize, hi.clamp(0, n as isize) as usize);
        (a, b.max(a), lo < 0 || hi > n as isize)
    };
    let rows: Vec<_> = (0..oh).map(|i| span(i, rh, dh, ph, h)).collect();
    let cols: Vec<_> = (0..ow).map(|j| span(j, rw, dw, pw, w)).collect();
    for (plane, dst) in src.chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        for (i, &(y0, y1, py)) in rows.iter().enumerate() {
            for (j, &(x0, x1, px)) in cols.iter().enumerate() {
                let mut best: Option<T> = None;
                for y in y0..y1 {
                    for &val in &plane[y * w + x0..y * w + x1] {
                        best = Some(best.map_or(val, |b| if val > b { val } else { b }));
                    }
                }
                dst[i * ow + j] = match best {
                    Some(b) if (py || px) && b < T::zero() => T::zero(),
                    Some(b) => b,
                    None => T::zero(),
                };
            }
        }
    }
    let out = Array4::from_shape_vec([nt, nf, oh, ow], out).expect("sized above");
    Ok(X::from_preserving(out))
}
