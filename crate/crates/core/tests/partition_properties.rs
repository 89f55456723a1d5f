use proptest::prelude::*;

use deficiency::partition::{build_cutoff, build_family, region_distance, verify_cutoff, RegionSpec};
use deficiency::{validate_config, PotentialSpec, SingularityConfig};

fn pair(n: usize) -> impl Strategy<Value = (RegionSpec, RegionSpec)> {
    let c = proptest::collection::vec(-2.0f64..2.0, n);
    prop_oneof![
        (c.clone(), 0.2f64..2.0, 0.1f64..2.0).prop_map(|(c, r, gap)| (
            RegionSpec::complement_of_ball(c.clone(), r + gap),
            RegionSpec::ball(c, r),
        )),
        (c.clone(), 0.2f64..2.0, 0.1f64..2.0).prop_map(|(c, r, gap)| (
            RegionSpec::ball(c.clone(), r),
            RegionSpec::complement_of_ball(c, r + gap),
        )),
        (proptest::collection::vec(-1.0f64..1.0, n), 0.1f64..2.0).prop_filter_map(
            "zero normal",
            move |(w, gap)| {
                let len = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                (len > 0.1).then(|| {
                    let neg: Vec<f64> = w.iter().map(|x| -x).collect();
                    (RegionSpec::half_space(w, 0.0), RegionSpec::half_space(neg, gap * len))
                })
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cutoffs_stay_in_range(
        (n, (f0, f1)) in (1usize..=3).prop_flat_map(|n| (Just(n), pair(n))),
        frac in 0.1f64..1.0,
    ) {
        let eps = frac * region_distance(&f0, &f1);
        let phi = build_cutoff(f0, f1, eps, n).unwrap();
        let r = verify_cutoff(&phi, 24);
        prop_assert!(r.range_violation <= 1e-8, "{:?}", r);
        prop_assert!(r.f0_violation <= 1e-8, "{:?}", r);
        prop_assert!(r.f1_violation <= 1e-8, "{:?}", r);
    }

    #[test]
    fn family_members_do_not_overlap(
        cells in proptest::collection::btree_set((0i32..5, 0i32..5), 2..8),
        delta in 0.2f64..1.0,
    ) {
        let cfg = cells.iter().fold(SingularityConfig::new(2), |c, &(a, b)| {
            c.with_point(
                vec![3.0 * a as f64, 3.0 * b as f64],
                PotentialSpec::InverseSquarePoint { coupling: 1.0, cutoff: delta, perturbation: None },
            )
        });
        let fam = build_family(&validate_config(&cfg).unwrap()).unwrap();
        let chk = fam.check(400, 11);
        prop_assert!(chk.max_overlap <= 1);
        prop_assert!(chk.phi_gap > 0.0 && chk.phi_tilde_gap > 0.0);
        prop_assert!(chk.pass, "{:?}", chk);
    }
}
