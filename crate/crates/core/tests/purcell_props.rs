use mmqubit_core::purcell::{mode_frequencies, purcell_time, CircuitNetwork, JunctionBranch};
use proptest::prelude::*;

proptest! {
    #[test]
    fn junction_only_root_is_plasma(l_ph in 10.0f64..500.0, c_ff in 5.0f64..200.0) {
        let j = JunctionBranch::new(l_ph * 1e-12, c_ff * 1e-15).unwrap();
        let w0 = j.plasma_omega();
        let roots = mode_frequencies(&CircuitNetwork::capacitor(0.0), &j, (0.37 * w0, 2.9 * w0)).unwrap();
        prop_assert_eq!(roots.len(), 1);
        prop_assert!((roots[0] / w0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn purcell_invariant_under_admittance_scaling(
        c in 0.1f64..10.0,
        r in 100.0f64..1e5,
        cc_ff in 0.5f64..20.0,
        detune in 0.8f64..1.2,
    ) {
        let j = JunctionBranch::new(56.9e-12, 45e-15).unwrap();
        let net = |k: f64| CircuitNetwork::series(vec![
            CircuitNetwork::capacitor(k * cc_ff * 1e-15),
            CircuitNetwork::resistor(r / k),
        ]);
        let js = JunctionBranch::new(j.l_j_h / c, j.c_j_f * c).unwrap();
        let w = detune * j.plasma_omega();
        let a = purcell_time(&net(1.0), &j, w).unwrap();
        let b = purcell_time(&net(c), &js, w).unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-6);
    }
}
