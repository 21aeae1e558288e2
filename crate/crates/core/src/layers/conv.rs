use ndarray::{Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Potentials, SpikeWave, TimeTensor};

/// Mean and standard deviation of the normal weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightInit {
    #[serde(default = "WeightInit::default_mean")]
    pub mean: f64,
    #[serde(default = "WeightInit::default_std")]
    pub std: f64,
}

impl WeightInit {
    fn default_mean() -> f64 {
        0.8
    }

    fn default_std() -> f64 {
        0.05
    }
}

impl Default for WeightInit {
    fn default() -> Self {
        Self {
            mean: Self::default_mean(),
            std: Self::default_std(),
        }
    }
}

/// Stride-1, valid-mode spiking convolution.
///
/// Weights are kept in two layouts: the canonical `(F_out, F_in, K_h, K_w)`
/// tensor and a `(F_in, K_h, K_w, F_out)` copy that the event-driven forward
/// pass scatters from. All writes go through methods that keep both in sync.
#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    weights: Array4<T>,
    scatter: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        in_features: usize,
        out_features: usize,
        kernel: (usize, usize),
        init: WeightInit,
        rng: &mut R,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::invalid("convolution dimensions must be positive"));
        }
        let normal = Normal::new(init.mean, init.std)
            .map_err(|e| Error::invalid(format!("weight init: {e}")))?;
        let shape = [out_features, in_features, kernel.0, kernel.1];
        let n = shape.iter().product();
        let values: Vec<T> = (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
        Self::from_weights(Array4::from_shape_vec(shape, values).expect("sized above"))
    }

    pub fn from_weights(weights: Array4<T>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        if weights.is_empty() {
            return Err(Error::invalid("weight tensor is empty"));
        }
        let scatter = weights
            .view()
            .permuted_axes([1, 2, 3, 0])
            .iter()
            .copied()
            .collect();
        Ok(Self { weights, scatter })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    pub fn weights(&self) -> &Array4<T> {
        &self.weights
    }

    /// Overwrites the kernel of output feature `f`.
    pub fn set_feature(&mut self, f: usize, kernel: ArrayView3<T>) -> Result<()> {
        let [fo, fi, kh, kw] = self.dims();
        if f >= fo {
            return Err(Error::invalid(format!("feature {f} out of range (< {fo})")));
        }
        if kernel.shape() != [fi, kh, kw] {
            return Err(Error::ShapeMismatch {
                expected: vec![fi, kh, kw],
                actual: kernel.shape().to_vec(),
            });
        }
        self.weights.index_axis_mut(Axis(0), f).assign(&kernel);
        for ((i, r, c), &w) in kernel.indexed_iter() {
            self.scatter[((i * kh + r) * kw + c) * fo + f] = w;
        }
        Ok(())
    }

    pub fn feature(&self, f: usize) -> Array3<T> {
        self.weights.index_axis(Axis(0), f).to_owned()
    }

    fn dims(&self) -> [usize; 4] {
        let s = self.weights.shape();
        [s[0], s[1], s[2], s[3]]
    }
}

/// Output spatial size of a valid convolution: `H − K + 1`.
pub fn conv_output_size(input: usize, kernel: usize) -> Option<usize> {
    (input >= kernel).then(|| input - kernel + 1)
}

/// Convolves every time-step of `s` with the layer's kernels at once.
///
/// Each input neuron fires once, so the pass scatters one weight column per
/// first spike into a per-time-step increment and then prefix-sums along
/// time. The result equals an independent per-time-step convolution of the
/// cumulative spikes, and is accumulative whenever the weights are
/// non-negative.
pub fn conv_forward<T: Scalar>(layer: &ConvLayer<T>, s: &SpikeWave<T>) -> Result<Potentials<T>> {
    let [nt, nf, h, w] = s.shape();
    let [fo, fi, kh, kw] = layer.dims();
    if nf != fi {
        return Err(Error::invalid(format!(
            "input has {nf} features, layer expects {fi}"
        )));
    }
    let (oh, ow) = match (conv_output_size(h, kh), conv_output_size(w, kw)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::invalid(format!(
                "input {h}x{w} smaller than kernel {kh}x{kw}"
            )))
        }
    };

    let step = oh * ow * fo;
    let mut acc = vec![T::zero(); nt * step];
    let first = super::competition::first_nonzero(s.array(), nf * h * w);
    for (idx, t) in first.iter().enumerate() {
        let Some(t) = t.get() else { continue };
        let (f, y, x) = (idx / (h * w), (idx / w) % h, idx % w);
        let slab = &mut acc[t * step..(t + 1) * step];
        for kr in y.saturating_sub(oh - 1)..kh.min(y + 1) {
            let r = y - kr;
            for kc in x.saturating_sub(ow - 1)..kw.min(x + 1) {
                let c = x - kc;
                let src = &layer.scatter[((f * kh + kr) * kw + kc) * fo..][..fo];
                let dst = &mut slab[(r * ow + c) * fo..][..fo];
                for (d, &wv) in dst.iter_mut().zip(src) {
                    *d += wv;
                }
            }
        }
    }
    for t in 1..nt {
        let (done, rest) = acc.split_at_mut(t * step);
        let prev = &done[(t - 1) * step..];
        for (d, &p) in rest[..step].iter_mut().zip(prev) {
            *d += p;
        }
    }
    let out = Array4::from_shape_vec([nt, oh, ow, fo], acc)
        .expect("sized above")
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned();
    Ok(Potentials::new(out))
}

/// Spatial zero padding (`top`, `bottom`, `left`, `right`); padded cells
/// never spike.
pub fn pad_spikewave<T: Scalar>(s: &SpikeWave<T>, pad: (usize, usize, usize, usize)) -> SpikeWave<T> {
    let (top, bottom, left, right) = pad;
    let [nt, nf, h, w] = s.shape();
    let mut out = Array4::zeros([nt, nf, h + top + bottom, w + left + right]);
    out.slice_mut(ndarray::s![.., .., top..top + h, left..left + w])
        .assign(s.as_array());
    SpikeWave::from_array_unchecked(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{latencies_to_spikewave, validate, LatencyGrid, SpikeTime, TimeConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, shape: [usize; 4], p: f64) -> SpikeWave<f64> {
        let [nt, nf, h, w] = shape;
        let times = ndarray::Array3::from_shape_fn([nf, h, w], |_| {
            if rng.random_bool(p) {
                SpikeTime::at(rng.random_range(0..nt))
            } else {
                SpikeTime::NO_SPIKE
            }
        });
        latencies_to_spikewave(&LatencyGrid::new(times), TimeConfig::new(nt).unwrap()).unwrap()
    }

    fn scalar_conv(layer: &ConvLayer<f64>, s: &SpikeWave<f64>) -> Array4<f64> {
        let [nt, nf, h, w] = s.shape();
        let wts = layer.weights();
        let [fo, _, kh, kw] = layer.dims();
        let mut out = Array4::zeros([nt, fo, h - kh + 1, w - kw + 1]);
        for t in 0..nt {
            for o in 0..fo {
                for r in 0..h - kh + 1 {
                    for c in 0..w - kw + 1 {
                        let mut acc = 0.0;
                        for i in 0..nf {
                            for a in 0..kh {
                                for b in 0..kw {
                                    acc += wts[[o, i, a, b]] * s.as_array()[[t, i, r + a, c + b]];
                                }
                            }
                        }
                        out[[t, o, r, c]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn output_shape_follows_valid_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvLayer::<f64>::new(1, 4, (3, 3), WeightInit::default(), &mut rng).unwrap();
        let s = random_wave(&mut rng, [3, 1, 5, 5], 0.5);
        assert_eq!(conv_forward(&layer, &s).unwrap().shape(), [3, 4, 3, 3]);
    }

    #[test]
    fn zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = ConvLayer::<f32>::new(2, 3, (2, 3), WeightInit::default(), &mut rng).unwrap();
        let p = conv_forward(&layer, &SpikeWave::zeros([4, 2, 6, 6])).unwrap();
        assert!(p.as_array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let init = WeightInit { mean: 0.0, std: 1.0 };
            let layer = ConvLayer::<f64>::new(3, 4, (3, 2), init, &mut rng).unwrap();
            let s = random_wave(&mut rng, [5, 3, 7, 6], 0.4);
            let got = conv_forward(&layer, &s).unwrap();
            let want = scalar_conv(&layer, &s);
            for (a, b) in got.as_array().iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nonnegative_weights_give_accumulative_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = ConvLayer::<f32>::new(2, 2, (3, 3), WeightInit::default(), &mut rng).unwrap();
        let s: SpikeWave<f64> = random_wave(&mut rng, [6, 2, 8, 8], 0.5);
        let s = SpikeWave::from_array(s.as_array().mapv(|v| v as f32)).unwrap();
        let p = conv_forward(&layer, &s).unwrap();
        let a = p.as_array();
        for t in 1..6 {
            for (now, before) in a.index_axis(Axis(0), t).iter().zip(a.index_axis(Axis(0), t - 1)) {
                assert!(now >= before);
            }
        }
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = ConvLayer::<f32>::new(2, 2, (3, 3), WeightInit::default(), &mut rng).unwrap();
        assert!(conv_forward(&layer, &SpikeWave::zeros([2, 2, 2, 5])).is_err());
        assert!(conv_forward(&layer, &SpikeWave::zeros([2, 3, 5, 5])).is_err());
        let bad = Array4::from_elem([1, 1, 1, 1], f32::NAN);
        assert!(ConvLayer::from_weights(bad).is_err());
    }

    #[test]
    fn set_feature_keeps_layouts_in_sync() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut layer = ConvLayer::<f64>::new(2, 3, (2, 2), WeightInit::default(), &mut rng).unwrap();
        layer
            .set_feature(1, Array3::from_elem([2, 2, 2], 0.25).view())
            .unwrap();
        let rebuilt = ConvLayer::from_weights(layer.weights().clone()).unwrap();
        assert_eq!(rebuilt.scatter, layer.scatter);
        assert!(layer.set_feature(3, Array3::zeros([2, 2, 2]).view()).is_err());
        assert!(layer.set_feature(0, Array3::zeros([2, 2, 3]).view()).is_err());
    }

    #[test]
    fn init_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = ConvLayer::<f64>::new(10, 50, (5, 5), WeightInit::default(), &mut rng).unwrap();
        let n = layer.weights().len() as f64;
        let mean = layer.weights().sum() / n;
        let var = layer.weights().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 0.8).abs() < 0.005);
        assert!((var.sqrt() - 0.05).abs() < 0.005);
    }

    #[test]
    fn padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_wave(&mut rng, [3, 2, 2, 2], 0.7);
        assert_eq!(pad_spikewave(&s, (0, 0, 0, 0)), s);
        let p = pad_spikewave(&s, (1, 1, 1, 1));
        assert_eq!(p.shape(), [3, 2, 4, 4]);
        assert_eq!(p.as_array().slice(ndarray::s![.., .., 1..3, 1..3]), s.as_array());
        assert_eq!(p.spike_count(), s.spike_count());
        for _ in 0..500 {
            let s = random_wave(&mut rng, [4, 2, 3, 5], 0.5);
            let pad = (
                rng.random_range(0..3),
                rng.random_range(0..3),
                rng.random_range(0..3),
                rng.random_range(0..3),
            );
            assert!(validate(&pad_spikewave(&s, pad).as_array().view()));
        }
    }
}
