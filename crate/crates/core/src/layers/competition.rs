//! Lateral inhibition across features and winners-take-all selection.

use std::cmp::Ordering;

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Potentials, SpikeTime, SpikeWave, TimeTensor};

/// Location of a selected neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Winner {
    pub feature: usize,
    pub row: usize,
    pub column: usize,
}

impl Winner {
    pub fn new(feature: usize, row: usize, column: usize) -> Self {
        Self {
            feature,
            row,
            column,
        }
    }

    pub fn chebyshev(&self, other: &Winner) -> usize {
        self.row
            .abs_diff(other.row)
            .max(self.column.abs_diff(other.column))
    }
}

/// Flat `(F, H, W)` index → first time-step with a nonzero entry.
pub(crate) fn first_nonzero<T: Scalar>(a: &Array4<T>, plane: usize) -> Vec<SpikeTime> {
    let a = a.as_standard_layout();
    let src = a.as_slice().expect("standard layout");
    let mut first = vec![SpikeTime::NO_SPIKE; plane];
    for (t, slab) in src.chunks_exact(plane.max(1)).enumerate().rev() {
        for (v, out) in slab.iter().zip(first.iter_mut()) {
            if !v.is_zero() {
                *out = SpikeTime::at(t);
            }
        }
    }
    first
}

/// Earlier spike first, then larger potential.
fn salience<T: Scalar>(a: (SpikeTime, T), b: (SpikeTime, T)) -> Ordering {
    a.0.cmp(&b.0)
        .then_with(|| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
}

/// Keeps, at every location, only the most salient feature: the earliest
/// spike, then the highest final potential, then the lowest index. All other
/// features at that location are zeroed in both tensors.
pub fn pointwise_inhibition<T: Scalar>(
    p: &Potentials<T>,
    s: &SpikeWave<T>,
) -> Result<(Potentials<T>, SpikeWave<T>)> {
    if p.shape() != s.shape() {
        return Err(Error::ShapeMismatch {
            expected: s.shape().to_vec(),
            actual: p.shape().to_vec(),
        });
    }
    let [nt, nf, h, w] = s.shape();
    if nt == 0 || nf <= 1 {
        return Ok((p.clone(), s.clone()));
    }
    let hw = h * w;
    let first = first_nonzero(s.as_array(), nf * hw);
    let pot_in = p.as_array().as_standard_layout();
    let pot_in = pot_in.as_slice().expect("standard layout");
    let last = &pot_in[(nt - 1) * nf * hw..];
    let mut keep = vec![0usize; hw];
    for (loc, best) in keep.iter_mut().enumerate() {
        *best = (0..nf)
            .min_by(|&a, &b| {
                salience(
                    (first[a * hw + loc], last[a * hw + loc]),
                    (first[b * hw + loc], last[b * hw + loc]),
                )
            })
            .expect("nf > 1");
    }
    let spk_in = s.as_array().as_standard_layout();
    let spk_in = spk_in.as_slice().expect("standard layout");
    let mut pot = vec![T::zero(); pot_in.len()];
    let mut spk = vec![T::zero(); spk_in.len()];
    for t in 0..nt {
        for (loc, &f) in keep.iter().enumerate() {
            let i = (t * nf + f) * hw + loc;
            pot[i] = pot_in[i];
            spk[i] = spk_in[i];
        }
    }
    let pot = Array4::from_shape_vec([nt, nf, h, w], pot).expect("sized");
    let spk = Array4::from_shape_vec([nt, nf, h, w], spk).expect("sized");
    Ok((Potentials::new(pot), SpikeWave::from_array_unchecked(spk)))
}

/// Silences the listed feature maps at every time-step.
pub fn feature_inhibition<T: Scalar, X: TimeTensor<T>>(x: &X, features: &[usize]) -> Result<X> {
    let nf = x.dims()[1];
    if let Some(&bad) = features.iter().find(|&&f| f >= nf) {
        return Err(Error::invalid(format!("feature {bad} out of range (< {nf})")));
    }
    let mut a = x.array().clone();
    for &f in features {
        a.index_axis_mut(Axis(1), f).fill(T::zero());
    }
    Ok(X::from_preserving(a))
}

/// Picks up to `k` winners from thresholded potentials.
///
/// Candidates are neurons with a nonzero thresholded potential at some
/// time-step. They are ranked by earliest nonzero time, then by largest
/// final potential, then by feature index and row-major position. After each
/// pick the winner's whole feature map is excluded, as is the square of
/// Chebyshev radius `inhibition_radius` around it in every feature map.
///
/// Excluding the winner's own feature map goes beyond spatial inhibition; it
/// keeps one update per feature per stimulus so different features learn
/// different patterns.
pub fn get_k_winners<T: Scalar>(
    thresholded: &Potentials<T>,
    k: usize,
    inhibition_radius: usize,
) -> Vec<Winner> {
    let [nt, nf, h, w] = thresholded.shape();
    if nt == 0 || k == 0 {
        return Vec::new();
    }
    let hw = h * w;
    let first = first_nonzero(thresholded.as_array(), nf * hw);
    let a = thresholded.as_array().as_standard_layout();
    let last = &a.as_slice().expect("standard layout")[(nt - 1) * nf * hw..];
    let mut candidates: Vec<(SpikeTime, T, Winner)> = first
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_spike())
        .map(|(i, &t)| (t, last[i], Winner::new(i / hw, (i / w) % h, i % w)))
        .collect();
    // Stable: ties keep (feature, row, column) order from indexed_iter.
    candidates.sort_by(|x, y| salience((x.0, x.1), (y.0, y.1)));

    let mut winners: Vec<Winner> = Vec::with_capacity(k);
    for (_, _, cand) in candidates {
        if winners.len() == k {
            break;
        }
        let blocked = winners
            .iter()
            .any(|wn| wn.feature == cand.feature || wn.chebyshev(&cand) <= inhibition_radius);
        if !blocked {
            winners.push(cand);
        }
    }
    winners
}
