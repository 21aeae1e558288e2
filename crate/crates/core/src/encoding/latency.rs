use ndarray::{Array3, ArrayView3};

use crate::scalar::Scalar;
use crate::tensor::{LatencyGrid, SpikeTime, SpikeWave, TimeConfig};

/// Rank-order latency code.
///
/// Positive intensities are sorted in descending order (ties broken by
/// row-major position) and split into `t_max` consecutive bins of near-equal
/// size, earlier bins taking the remainder. The bin index is the spike time.
/// Non-positive intensities never spike.
pub fn intensity_to_latency_grid<T: Scalar>(intensities: ArrayView3<T>, cfg: TimeConfig) -> LatencyGrid {
    let dim = intensities.dim();
    let mut order: Vec<(usize, T)> = intensities
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v > T::zero())
        .collect();
    // stable sort keeps row-major order among ties
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));

    let n = order.len();
    let bins = cfg.t_max();
    let (base, extra) = (n / bins, n % bins);
    let mut flat = vec![SpikeTime::NO_SPIKE; dim.0 * dim.1 * dim.2];
    let mut pos = 0;
    for bin in 0..bins {
        let size = base + usize::from(bin < extra);
        for &(idx, _) in &order[pos..pos + size] {
            flat[idx] = SpikeTime::at(bin);
        }
        pos += size;
    }
    LatencyGrid::new(Array3::from_shape_vec(dim, flat).expect("shape matches input"))
}

pub fn intensity_to_latency<T: Scalar>(intensities: ArrayView3<T>, cfg: TimeConfig) -> SpikeWave<T> {
    let grid = intensity_to_latency_grid(intensities, cfg);
    SpikeWave::from_latencies(&grid, cfg).expect("bins lie below t_max")
}
