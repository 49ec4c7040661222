use std::collections::BTreeMap;

use proptest::prelude::*;

use nstar::frontier::{
    extract_record_breaking, fit_nstar_sigmoid, fit_sigmoid, frontier_envelope, log_grid, moving_average,
    reward_bin, RewardPoint, SigmoidFit,
};
use nstar::Error;

fn series() -> impl Strategy<Value = Vec<RewardPoint>> {
    proptest::collection::vec((1u32..50, 0.0..1.0f64), 1..60).prop_map(|steps| {
        let mut compute = 0.0;
        steps
            .into_iter()
            .map(|(dc, reward)| {
                compute += dc as f64;
                RewardPoint { compute, reward }
            })
            .collect()
    })
}

fn fit_strategy() -> impl Strategy<Value = SigmoidFit> {
    (0.0..0.5f64, 0.0..0.5f64, 0.0..3.0f64, 10.0..24.0f64, 8.0..14.0f64, 16.0..26.0f64).prop_map(
        |(lo, gap, k, c0, start, end)| SigmoidFit {
            lo,
            hi: lo + gap,
            k,
            c0,
            rmse: 0.0,
            domain: [start.exp2(), end.exp2()],
            points: 8,
            low_confidence: false,
        },
    )
}

proptest! {
    #[test]
    fn record_breaking_is_a_strict_idempotent_subsequence(points in series(), width in 0.001..0.1f64) {
        let kept = extract_record_breaking(&points, width).unwrap();
        prop_assert_eq!(kept[0].compute, points[0].compute);
        for w in kept.windows(2) {
            prop_assert!(w[1].compute > w[0].compute);
            prop_assert!(w[1].bin_index > w[0].bin_index);
        }
        for k in &kept {
            prop_assert!(points.iter().any(|p| p.compute == k.compute && p.reward == k.reward));
            prop_assert_eq!(k.bin_index, reward_bin(k.reward, width));
        }
        let again: Vec<RewardPoint> = kept.iter().map(|k| RewardPoint { compute: k.compute, reward: k.reward }).collect();
        prop_assert_eq!(extract_record_breaking(&again, width).unwrap(), kept);
    }

    #[test]
    fn fits_are_monotone_bounded_and_deterministic(ys in proptest::collection::vec(0.0..1.0f64, 2..25)) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| ((8.0 + i as f64).exp2(), y)).collect();
        let fit = fit_sigmoid(&pts, 0.0, 1.0).unwrap();
        prop_assert_eq!(&fit, &fit_sigmoid(&pts, 0.0, 1.0).unwrap());
        prop_assert!(fit.k >= 0.0 && fit.k <= 20.0);
        prop_assert!(0.0 <= fit.lo && fit.lo <= fit.hi && fit.hi <= 1.0);
        prop_assert_eq!(fit.low_confidence, pts.len() < 4);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..80 {
            let v = fit.predict((6.0 + i as f64 * 0.3).exp2());
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
        prop_assert_eq!(fit.predict(fit.domain[1]), fit.predict(fit.domain[1] * 64.0));
    }

    #[test]
    fn envelope_ignores_duplicates_under_larger_labels(
        fits in proptest::collection::vec(fit_strategy(), 1..6),
        dup in 0usize..6,
    ) {
        let map: BTreeMap<usize, SigmoidFit> = fits.iter().cloned().enumerate().map(|(i, f)| (8usize << i, f)).collect();
        let start = map.values().map(|f| f.domain[0]).fold(f64::INFINITY, f64::min);
        let grid = log_grid(start, 26f64.exp2(), 48);
        let base = frontier_envelope(&map, &grid).unwrap();
        let mut extended = map.clone();
        extended.insert(1 << 20, fits[dup % fits.len()].clone());
        let with_dup = frontier_envelope(&extended, &grid).unwrap();
        prop_assert_eq!(&base.frontier_n, &with_dup.frontier_n);
        prop_assert_eq!(&base.envelope_reward, &with_dup.envelope_reward);
        for w in base.envelope_reward.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let pts = [RewardPoint { compute: 2.0, reward: 0.1 }, RewardPoint { compute: 1.0, reward: 0.2 }];
    assert!(matches!(extract_record_breaking(&pts, 0.005), Err(Error::Unsorted(1))));
    assert!(extract_record_breaking(&pts[..1], 0.0).is_err());
    assert!(matches!(fit_sigmoid(&[(4.0, 0.3)], 0.0, 1.0), Err(Error::InsufficientPoints { .. })));
    assert!(fit_sigmoid(&[(0.0, 0.3), (4.0, 0.4)], 0.0, 1.0).is_err());
    assert!(moving_average(&[1.0, 2.0], 2).is_err());
    assert!(frontier_envelope(&BTreeMap::new(), &[1.0]).is_err());
}

#[test]
fn spec_fit_recovery_example() {
    let (lo, hi, k, c0) = (0.3, 0.7, 1.2, 20.0);
    // Deterministic pseudo-noise of amplitude ~0.003.
    let pts: Vec<(f64, f64)> = (0..30)
        .map(|i| {
            let x = 12.0 + 16.0 * i as f64 / 29.0;
            let noise = 0.003 * ((i * 7919 % 13) as f64 / 6.0 - 1.0);
            (x.exp2(), lo + (hi - lo) / (1.0 + (-k * (x - c0)).exp()) + noise)
        })
        .collect();
    let fit = fit_sigmoid(&pts, 0.0, 1.0).unwrap();
    assert!((fit.lo - lo).abs() <= 0.02 && (fit.hi - hi).abs() <= 0.02, "{fit:?}");
    assert!((fit.c0 - c0).abs() <= 0.5, "{fit:?}");
}

#[test]
fn nstar_sigmoid_recovers_bounds() {
    let grid = log_grid(2f64.powi(10), 2f64.powi(24), 64);
    for (lo, hi, k, c0) in [(3.0, 7.0, 0.8, 17.0), (2.0, 9.0, 1.5, 15.0), (4.0, 6.0, 0.5, 18.0)] {
        let series: Vec<f64> = grid
            .iter()
            .map(|c| lo + (hi - lo) / (1.0 + (-k * (c.log2() - c0)).exp()))
            .collect();
        let fit = fit_nstar_sigmoid(&grid, &series, 9.0).unwrap();
        assert!((fit.lo - lo).abs() <= 0.02 && (fit.hi - hi).abs() <= 0.02, "{fit:?}");
        assert!(fit.rmse < 1e-3);
    }
}
