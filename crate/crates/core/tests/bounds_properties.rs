use proptest::prelude::*;

use deficiency::bounds::{
    defect_invariance_gate, hardy_constant, hardy_form_bound, morgan_form_bound, PartitionData,
    RelativeBound,
};

proptest! {
    #[test]
    fn morgan_is_monotone(
        a in 0.0f64..2.0, b in 0.0f64..10.0, c in 0.1f64..3.0, d in 0.1f64..3.0, e in 0.0f64..10.0,
        which in 0usize..5, bump in 0.0f64..1.0,
    ) {
        let mut args = [a, b, c, d, e];
        let base = morgan_form_bound(
            RelativeBound::form(args[0], args[1]).unwrap(),
            PartitionData::new(args[2], args[3], args[4]).unwrap(),
        ).unwrap();
        args[which] += bump;
        let up = morgan_form_bound(
            RelativeBound::form(args[0], args[1]).unwrap(),
            PartitionData::new(args[2], args[3], args[4]).unwrap(),
        ).unwrap();
        prop_assert!(up.a >= base.a && up.b >= base.b);
    }

    #[test]
    fn hardy_through_morgan_stays_below_one(n in 3usize..=8, frac in 0.0f64..0.999, e0 in 0.0f64..1e6) {
        let local = hardy_form_bound(n, frac * hardy_constant(n)).unwrap();
        let global = morgan_form_bound(local, PartitionData::new(1.0, 1.0, e0).unwrap()).unwrap();
        prop_assert!(global.a < 1.0);
        prop_assert!(defect_invariance_gate(&global));
    }
}
