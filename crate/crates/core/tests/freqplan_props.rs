use mmqubit_core::freqplan::{assign_features, harmonics, sidebands, direct_conversion_spurs, ChainSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn harmonics_increasing_and_cutoff_monotone(f in 1.0f64..150.0, n_max in 1u32..12, c1 in 0.0f64..200.0, c2 in 0.0f64..200.0) {
        let h = harmonics(f, 6, n_max, 0.0).unwrap();
        prop_assert!(h.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
        let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
        prop_assert!(harmonics(f, 6, n_max, hi).unwrap().len() <= harmonics(f, 6, n_max, lo).unwrap().len());
    }

    #[test]
    fn sideband_midpoints(lo in 1.0f64..200.0, frac in 0.0f64..0.99) {
        let i = lo * frac;
        let (usb, lsb) = sidebands(lo, i).unwrap();
        prop_assert!(((usb + lsb) / 2.0 - lo).abs() <= 2.0 * f64::EPSILON * lo);
        prop_assert!(((usb - lsb) / 2.0 - i).abs() <= 2.0 * f64::EPSILON * lo);
    }

    #[test]
    fn spur_tolerance_monotone(start in 60.0f64..120.0, tol in 1e-4f64..0.05) {
        let chain = ChainSpec {
            multiplier_order: 6,
            f_generator_ghz: 72.0,
            f_rlo_ghz: 91.0,
            f_rif_ghz: 0.5,
            waveguide_cutoff_ghz: 59.0,
        };
        let grid: Vec<f64> = (0..200).map(|k| start + 0.013 * k as f64).collect();
        let narrow = direct_conversion_spurs(&grid, &chain, 8, tol).unwrap();
        let wide = direct_conversion_spurs(&grid, &chain, 8, 2.0 * tol).unwrap();
        prop_assert!(narrow.iter().all(|f| wide.contains(f)));
    }

    #[test]
    fn assignment_permutation_equivariant(
        observed in prop::collection::vec(55.0f64..110.0, 1..12),
        seed in any::<u64>(),
    ) {
        let res = [90.8, 91.151, 91.6];
        let q = [72.137];
        let mut obs = observed.clone();
        // Snap a few features onto exact predictions so both paths are exercised.
        for (k, o) in obs.iter_mut().enumerate().step_by(2) {
            let n = 5 + (k as u32 % 3);
            *o = 6.0 / n as f64 * if k % 4 == 0 { res[k % 3] } else { q[0] };
        }
        let base = assign_features(&obs, &res, &q, 6, 5..=7, 1e-3).unwrap();
        let mut perm: Vec<usize> = (0..obs.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<f64> = perm.iter().map(|&i| obs[i]).collect();
        let other = assign_features(&shuffled, &res, &q, 6, 5..=7, 1e-3).unwrap();
        let find = |set: &mmqubit_core::freqplan::Assignments, f: f64| {
            set.matched.iter().find(|a| a.observed_ghz == f).copied()
        };
        for &f in &obs {
            prop_assert_eq!(find(&base, f), find(&other, f));
        }
        prop_assert_eq!(base.matched.len(), other.matched.len());
        prop_assert_eq!(base.unmatched.len(), other.unmatched.len());
    }
}
