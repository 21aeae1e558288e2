use ndarray::{Array4, Axis, Zip};

use crate::scalar::Scalar;
use crate::tensor::{Potentials, SpikeWave};

/// Emits a spike wherever the potential exceeds `threshold`.
///
/// Comparisons are OR-accumulated along time, so the output is a valid
/// spike-wave even for potentials that are not accumulative.
pub fn fire<T: Scalar>(p: &Potentials<T>, threshold: T) -> SpikeWave<T> {
    let a = p.as_array();
    let mut out = Array4::zeros(a.raw_dim());
    let nt = a.shape()[0];
    for t in 0..nt {
        let (mut done, mut rest) = out.view_mut().split_at(Axis(0), t);
        let mut cur = rest.index_axis_mut(Axis(0), 0);
        let src = a.index_axis(Axis(0), t);
        if t == 0 {
            Zip::from(&mut cur).and(&src).for_each(|o, &v| {
                if v > threshold {
                    *o = T::one();
                }
            });
        } else {
            let prev = done.index_axis_mut(Axis(0), t - 1);
            Zip::from(&mut cur).and(&src).and(&prev).for_each(|o, &v, &was| {
                if v > threshold || !was.is_zero() {
                    *o = T::one();
                }
            });
        }
    }
    SpikeWave::from_array_unchecked(out)
}

/// Infinite-threshold firing for decision layers.
///
/// Every time-step except the last is zeroed; at the last step any nonzero
/// potential counts as a spike.
pub fn fire_infinite<T: Scalar>(p: &Potentials<T>) -> (SpikeWave<T>, Potentials<T>) {
    let a = p.as_array();
    let nt = a.shape()[0];
    let mut pot = Array4::zeros(a.raw_dim());
    let mut spk = Array4::zeros(a.raw_dim());
    if nt > 0 {
        let last = a.index_axis(Axis(0), nt - 1);
        pot.index_axis_mut(Axis(0), nt - 1).assign(&last);
        Zip::from(spk.index_axis_mut(Axis(0), nt - 1))
            .and(&last)
            .for_each(|s, &v| {
                if !v.is_zero() {
                    *s = T::one();
                }
            });
    }
    (SpikeWave::from_array_unchecked(spk), Potentials::new(pot))
}

/// Zeroes every potential below `threshold`.
pub fn threshold_cut<T: Scalar>(p: &Potentials<T>, threshold: T) -> Potentials<T> {
    Potentials::new(
        p.as_array()
            .mapv(|v| if v < threshold { T::zero() } else { v }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::validate;
    use proptest::prelude::*;

    fn pots(nt: usize, vals: Vec<f64>) -> Potentials<f64> {
        let n = vals.len() / nt;
        Potentials::new(Array4::from_shape_vec([nt, 1, 1, n], vals).unwrap())
    }

    #[test]
    fn extremes() {
        let p = pots(3, vec![0.0, 1.0, 2.0, 2.0, 3.0, 4.0]);
        assert!(fire(&p, 10.0).as_array().iter().all(|&v| v == 0.0));
        assert!(fire(&p, -1.0).as_array().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn accumulative_fire() {
        let p = pots(4, vec![0.1, 0.6, 0.9, 1.2]);
        let s = fire(&p, 0.5);
        assert_eq!(s.as_array().iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 1.0]);
        // non-accumulative input still gives a valid wave
        let p = pots(4, vec![0.1, 0.6, 0.2, 0.3]);
        let s = fire(&p, 0.5);
        assert_eq!(s.as_array().iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn infinite_threshold_keeps_last_step() {
        let p = pots(3, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let (s, kept) = fire_infinite(&p);
        assert_eq!(kept.as_array().iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        assert_eq!(s.as_array().iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let (s, kept) = fire_infinite(&pots(2, vec![0.0; 4]));
        assert_eq!(s.spike_count(), 0);
        assert!(kept.as_array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cut() {
        let p = pots(1, vec![-1.0, 0.5, 1.0, 2.0]);
        assert_eq!(threshold_cut(&p, f64::NEG_INFINITY), p);
        assert!(threshold_cut(&p, f64::INFINITY).as_array().iter().all(|&v| v == 0.0));
        let c = threshold_cut(&p, 1.0);
        assert_eq!(c.as_array().iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn fire_matches_scalar_oracle(v in proptest::collection::vec(-2.0f64..2.0, 20), thr in -1.0f64..1.0) {
            let p = pots(5, v.clone());
            let s = fire(&p, thr);
            prop_assert!(validate(&s.as_array().view()));
            for n in 0..4 {
                let mut seen = false;
                for t in 0..5 {
                    seen |= v[t * 4 + n] > thr;
                    prop_assert_eq!(s.as_array()[[t, 0, 0, n]], if seen { 1.0 } else { 0.0 });
                }
            }
        }

        #[test]
        fn fire_infinite_matches_scalar_oracle(v in proptest::collection::vec(0.0f64..2.0, 12)) {
            let p = pots(3, v.clone());
            let (s, kept) = fire_infinite(&p);
            for t in 0..3 { for n in 0..4 {
                let want = if t == 2 { v[t * 4 + n] } else { 0.0 };
                prop_assert_eq!(kept.as_array()[[t, 0, 0, n]], want);
                prop_assert_eq!(s.as_array()[[t, 0, 0, n]], if want != 0.0 { 1.0 } else { 0.0 });
            }}
        }

        #[test]
        fn cut_matches_elementwise(v in proptest::collection::vec(-2.0f64..2.0, 8), thr in -1.0f64..1.0) {
            let c = threshold_cut(&pots(2, v.clone()), thr);
            for (got, x) in c.as_array().iter().zip(&v) {
                prop_assert_eq!(*got, if *x < thr { 0.0 } else { *x });
            }
        }
    }
}
