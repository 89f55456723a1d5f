use proptest::prelude::*;

use deficiency::weyl::{weyl_classify_numeric, EndpointClass, RadialProblem, Spectral, WeylOptions};

fn classify(q0: f64, z: Spectral) -> EndpointClass {
    weyl_classify_numeric(&RadialProblem::inverse_square(q0), z, &WeylOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn limit_point_persists_upward(q0 in -5.0f64..5.0, dq in 0.0f64..3.0) {
        if classify(q0, Spectral::PlusI) == EndpointClass::LimitPoint {
            prop_assert_eq!(classify(q0 + dq, Spectral::PlusI), EndpointClass::LimitPoint);
        }
    }

    #[test]
    fn conjugate_parameters_agree(q0 in -5.0f64..5.0, c1 in -2.0f64..2.0) {
        let p = RadialProblem::at_zero(move |r| q0 / (r * r) + c1 / r, 1.0);
        let opts = WeylOptions::default();
        prop_assert_eq!(
            weyl_classify_numeric(&p, Spectral::PlusI, &opts).unwrap(),
            weyl_classify_numeric(&p, Spectral::MinusI, &opts).unwrap()
        );
    }

    #[test]
    fn repeated_runs_are_identical(q0 in -5.0f64..5.0) {
        prop_assert_eq!(classify(q0, Spectral::MinusI), classify(q0, Spectral::MinusI));
    }
}
