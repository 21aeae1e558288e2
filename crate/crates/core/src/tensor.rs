//! Spike-wave and potentials tensors.
//!
//! Both are 4-D tensors laid out as `(time, feature, row, column)` with time
//! the slowest axis, so one time-step is one contiguous slab. A spike-wave is
//! accumulative: once a neuron has fired, its entry stays at one for every
//! later time-step. That lets a layer process all time-steps at once, since
//! any linear operation applied to the spikes yields accumulative output.

use ndarray::{Array3, Array4, ArrayView4, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of time-steps (spike bins) per stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TimeConfig {
    t_max: usize,
}

impl TimeConfig {
    pub fn new(t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        if t_max >= SpikeTime::NO_SPIKE.0 as usize {
            return Err(Error::invalid(format!("t_max {t_max} is too large")));
        }
        Ok(Self { t_max })
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Time-step of the final bin.
    pub fn last(&self) -> usize {
        self.t_max - 1
    }
}

impl TryFrom<usize> for TimeConfig {
    type Error = Error;

    fn try_from(t_max: usize) -> Result<Self> {
        Self::new(t_max)
    }
}

impl From<TimeConfig> for usize {
    fn from(cfg: TimeConfig) -> usize {
        cfg.t_max
    }
}

/// First-spike time of a neuron, or [`SpikeTime::NO_SPIKE`].
///
/// Orders "never" after every real time-step, so `min` picks the earliest
/// spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SpikeTime(u32);

impl SpikeTime {
    pub const NO_SPIKE: SpikeTime = SpikeTime(u32::MAX);

    pub fn at(t: usize) -> Self {
        assert!(t < u32::MAX as usize, "spike time out of range");
        SpikeTime(t as u32)
    }

    pub fn get(self) -> Option<usize> {
        (self != Self::NO_SPIKE).then_some(self.0 as usize)
    }

    pub fn is_spike(self) -> bool {
        self != Self::NO_SPIKE
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_max: 15 }
    }
}

/// First-spike times over a `(feature, row, column)` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyGrid {
    times: Array3<SpikeTime>,
}

impl LatencyGrid {
    pub fn new(times: Array3<SpikeTime>) -> Self {
        Self { times }
    }

    pub fn silent(shape: [usize; 3]) -> Self {
        Self {
            times: Array3::from_elem(shape, SpikeTime::NO_SPIKE),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.times.shape();
        [s[0], s[1], s[2]]
    }

    pub fn times(&self) -> &Array3<SpikeTime> {
        &self.times
    }

    pub fn times_mut(&mut self) -> &mut Array3<SpikeTime> {
        &mut self.times
    }

    pub fn get(&self, f: usize, r: usize, c: usize) -> SpikeTime {
        self.times[[f, r, c]]
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().filter(|t| t.is_spike()).count()
    }

    /// Checks every spike lies inside `cfg`'s time window.
    pub fn check(&self, cfg: TimeConfig) -> Result<()> {
        for (index, t) in self.times.iter().enumerate() {
            if let Some(t) = t.get() {
                if t >= cfg.t_max() {
                    return Err(Error::InvalidLatency {
                        index,
                        latency: t as u32,
                        t_max: cfg.t_max(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Binary accumulative spike tensor `S[t, f, r, c]`.
///
/// Always satisfies [`validate`]; constructors reject anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeWave<T> {
    data: Array4<T>,
}

/// Real-valued membrane potentials `P[t, f, r, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials<T> {
    data: Array4<T>,
}

/// Shared view over the two 4-D tensor kinds, for operations (pooling,
/// feature inhibition) that preserve whichever kind they receive.
pub trait TimeTensor<T: Scalar>: Sized + sealed::Sealed {
    fn array(&self) -> &Array4<T>;

    #[doc(hidden)]
    fn from_preserving(data: Array4<T>) -> Self;

    fn dims(&self) -> [usize; 4] {
        let s = self.array().shape();
        [s[0], s[1], s[2], s[3]]
    }
}

mod sealed {
    pub trait Sealed {}
    impl<T> Sealed for super::SpikeWave<T> {}
    impl<T> Sealed for super::Potentials<T> {}
}

impl<T: Scalar> TimeTensor<T> for SpikeWave<T> {
    fn array(&self) -> &Array4<T> {
        &self.data
    }

    fn from_preserving(data: Array4<T>) -> Self {
        debug_assert!(validate(&data.view()));
        Self { data }
    }
}

impl<T: Scalar> TimeTensor<T> for Potentials<T> {
    fn array(&self) -> &Array4<T> {
        &self.data
    }

    fn from_preserving(data: Array4<T>) -> Self {
        Self { data }
    }
}

impl<T: Scalar> SpikeWave<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            data: Array4::zeros(shape),
        }
    }

    /// Wraps `data` after checking the binary and accumulative invariants.
    pub fn from_array(data: Array4<T>) -> Result<Self> {
        check_spikewave(&data.view())?;
        Ok(Self { data })
    }

    /// Caller guarantees the invariants hold.
    pub(crate) fn from_array_unchecked(data: Array4<T>) -> Self {
        debug_assert!(validate(&data.view()));
        Self { data }
    }

    pub fn from_latencies(lat: &LatencyGrid, cfg: TimeConfig) -> Result<Self> {
        latencies_to_spikewave(lat, cfg)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.dims()
    }

    pub fn t_max(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn as_array(&self) -> &Array4<T> {
        &self.data
    }

    pub fn into_array(self) -> Array4<T> {
        self.data
    }

    pub fn latencies(&self) -> LatencyGrid {
        first_spike_times(&self.data.view())
    }

    /// Reinterprets the spikes as 0/1 potentials.
    pub fn to_potentials(&self) -> Potentials<T> {
        Potentials::new(self.data.clone())
    }

    pub fn spike_count(&self) -> usize {
        match self.t_max() {
            0 => 0,
            t => self
                .data
                .index_axis(Axis(0), t - 1)
                .iter()
                .filter(|v| !v.is_zero())
                .count(),
        }
    }
}

impl<T: Scalar> Potentials<T> {
    pub fn new(data: Array4<T>) -> Self {
        Self { data }
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            data: Array4::zeros(shape),
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.dims()
    }

    pub fn t_max(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn as_array(&self) -> &Array4<T> {
        &self.data
    }

    pub fn as_array_mut(&mut self) -> &mut Array4<T> {
        &mut self.data
    }

    pub fn into_array(self) -> Array4<T> {
        self.data
    }
}

/// Builds the accumulative spike-wave: `S[t,f,r,c] = 1` iff `t >= T[f,r,c]`.
pub fn latencies_to_spikewave<T: Scalar>(lat: &LatencyGrid, cfg: TimeConfig) -> Result<SpikeWave<T>> {
    lat.check(cfg)?;
    let [nf, nh, nw] = lat.shape();
    let mut data = Array4::<T>::zeros([cfg.t_max(), nf, nh, nw]);
    for ((f, r, c), t) in lat.times.indexed_iter() {
        if let Some(t0) = t.get() {
            for t in t0..cfg.t_max() {
                data[[t, f, r, c]] = T::one();
            }
        }
    }
    Ok(SpikeWave::from_array_unchecked(data))
}

/// Inverse of [`latencies_to_spikewave`].
pub fn spikewave_to_latencies<T: Scalar>(s: &ArrayView4<T>) -> Result<LatencyGrid> {
    check_spikewave(s)?;
    Ok(first_spike_times(s))
}

fn first_spike_times<T: Scalar>(s: &ArrayView4<T>) -> LatencyGrid {
    let sh = s.shape();
    let (nt, nf, nh, nw) = (sh[0], sh[1], sh[2], sh[3]);
    let mut times = Array3::from_elem([nf, nh, nw], SpikeTime::NO_SPIKE);
    // Walk backwards so the final write is the earliest spike.
    for t in (0..nt).rev() {
        let slab = s.index_axis(Axis(0), t);
        for (v, out) in slab.iter().zip(times.iter_mut()) {
            if !v.is_zero() {
                *out = SpikeTime::at(t);
            }
        }
    }
    LatencyGrid { times }
}

/// True iff every entry is 0 or 1 and every neuron's column is
/// non-decreasing along time.
pub fn validate<T: Scalar>(s: &ArrayView4<T>) -> bool {
    check_spikewave(s).is_ok()
}

fn check_spikewave<T: Scalar>(s: &ArrayView4<T>) -> Result<()> {
    let sh = s.shape();
    let nt = sh[0];
    let per_step = sh[1] * sh[2] * sh[3];
    let mut prev: Option<Vec<bool>> = None;
    for t in 0..nt {
        let slab = s.index_axis(Axis(0), t);
        let mut cur = Vec::with_capacity(per_step);
        for v in slab.iter() {
            let on = if v.is_zero() {
                false
            } else if *v == T::one() {
                true
            } else {
                return Err(Error::MalformedSpikeWave(format!(
                    "non-binary value {v} at time-step {t}"
                )));
            };
            cur.push(on);
        }
        if let Some(prev) = &prev {
            if let Some(i) = prev.iter().zip(&cur).position(|(&p, &c)| p && !c) {
                return Err(Error::MalformedSpikeWave(format!(
                    "spike at neuron {i} disappears at time-step {t}"
                )));
            }
        }
        prev = Some(cur);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn grid(shape: [usize; 3], v: &[Option<usize>]) -> LatencyGrid {
        let times = v
            .iter()
            .map(|t| t.map_or(SpikeTime::NO_SPIKE, SpikeTime::at))
            .collect();
        LatencyGrid::new(Array3::from_shape_vec(shape, times).unwrap())
    }

    #[test]
    fn single_neuron_columns() {
        let cfg = TimeConfig::new(4).unwrap();
        let mut v = vec![None; 12];
        v[0] = Some(1);
        let s = latencies_to_spikewave::<f32>(&grid([3, 2, 2], &v), cfg).unwrap();
        let col: Vec<f32> = (0..4).map(|t| s.as_array()[[t, 0, 0, 0]]).collect();
        assert_eq!(col, vec![0.0, 1.0, 1.0, 1.0]);
        let silent: Vec<f32> = (0..4).map(|t| s.as_array()[[t, 1, 0, 0]]).collect();
        assert_eq!(silent, vec![0.0; 4]);
    }

    #[test]
    fn all_zero_latencies_saturate() {
        let cfg = TimeConfig::new(3).unwrap();
        let s = latencies_to_spikewave::<f64>(&grid([1, 2, 2], &[Some(0); 4]), cfg).unwrap();
        assert!(s.as_array().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn latency_out_of_range_rejected() {
        let cfg = TimeConfig::new(3).unwrap();
        let err = latencies_to_spikewave::<f32>(&grid([1, 1, 1], &[Some(3)]), cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidLatency { latency: 3, .. }));
    }

    #[test]
    fn zero_t_max_rejected() {
        assert!(TimeConfig::new(0).is_err());
    }

    #[test]
    fn validate_examples() {
        let bad = Array4::from_shape_vec([4, 1, 1, 1], vec![0.0f32, 1.0, 0.0, 1.0]).unwrap();
        let good = Array4::from_shape_vec([4, 1, 1, 1], vec![0.0f32, 0.0, 1.0, 1.0]).unwrap();
        assert!(!validate(&bad.view()));
        assert!(validate(&good.view()));
        let nonbinary = Array4::from_elem([2, 1, 1, 1], 0.5f32);
        assert!(!validate(&nonbinary.view()));
        assert!(matches!(
            spikewave_to_latencies(&bad.view()),
            Err(Error::MalformedSpikeWave(_))
        ));
    }

    #[test]
    fn all_zero_is_silent() {
        let z = Array4::<f32>::zeros([3, 2, 2, 2]);
        let lat = spikewave_to_latencies(&z.view()).unwrap();
        assert!(lat.times().iter().all(|t| !t.is_spike()));
    }

    #[test]
    fn spike_time_orders_never_last() {
        assert!(SpikeTime::at(100) < SpikeTime::NO_SPIKE);
        assert_eq!(SpikeTime::NO_SPIKE.get(), None);
        let m = [SpikeTime::NO_SPIKE, SpikeTime::at(2), SpikeTime::at(1)];
        assert_eq!(m.iter().min(), Some(&SpikeTime::at(1)));
    }

    #[test]
    fn spike_count_reads_last_step() {
        let a = array![[[[0.0f32, 0.0]]], [[[1.0, 0.0]]]];
        let s = SpikeWave::from_array(a).unwrap();
        assert_eq!(s.spike_count(), 1);
    }

    fn arb_grid() -> impl Strategy<Value = (LatencyGrid, TimeConfig)> {
        (1usize..6, 1usize..5, 1usize..5, 1usize..8).prop_flat_map(|(f, h, w, t_max)| {
            proptest::collection::vec(proptest::option::of(0..t_max), f * h * w).prop_map(
                move |v| (grid([f, h, w], &v), TimeConfig::new(t_max).unwrap()),
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip((lat, cfg) in arb_grid()) {
            let s = latencies_to_spikewave::<f32>(&lat, cfg).unwrap();
            prop_assert!(validate(&s.as_array().view()));
            prop_assert_eq!(spikewave_to_latencies(&s.as_array().view()).unwrap(), lat.clone());
            // time-axis sum equals t_max - T for spiking neurons, 0 otherwise
            let sums = s.as_array().sum_axis(Axis(0));
            for (t, sum) in lat.times().iter().zip(sums.iter()) {
                let expect = t.get().map_or(0, |t| cfg.t_max() - t);
                prop_assert_eq!(*sum as usize, expect);
            }
        }

        #[test]
        fn validate_agrees_with_scalar_checker(bits in proptest::collection::vec(0u8..3, 24)) {
            let vals: Vec<f64> = bits.iter().map(|&b| if b == 2 { 1.0 } else { b as f64 }).collect();
            let a = Array4::from_shape_vec([4, 2, 3, 1], vals).unwrap();
            let mut ok = true;
            for f in 0..2 { for r in 0..3 {
                for t in 1..4 {
                    if a[[t - 1, f, r, 0]] == 1.0 && a[[t, f, r, 0]] == 0.0 { ok = false; }
                }
            }}
            prop_assert_eq!(validate(&a.view()), ok);
        }
    }
}
