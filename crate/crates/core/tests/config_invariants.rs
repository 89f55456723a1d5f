use proptest::prelude::*;

use deficiency::config::{LatticeGenerator, LatticeRegion};
use deficiency::{validate_config, PotentialSpec, SingularityConfig};

fn point(c: f64, delta: f64) -> PotentialSpec {
    PotentialSpec::InverseSquarePoint {
        coupling: c,
        cutoff: delta,
        perturbation: None,
    }
}

fn sorted_positions(cfg: &SingularityConfig) -> Vec<Vec<u64>> {
    let v = validate_config(cfg).unwrap();
    let mut out: Vec<Vec<u64>> = v
        .sites()
        .iter()
        .map(|s| s.position.iter().map(|x| x.to_bits()).collect())
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_ignores_site_order(
        cells in proptest::collection::btree_set((0i32..6, 0i32..6), 2..12),
        seed in any::<u64>(),
    ) {
        let sites: Vec<(Vec<f64>, PotentialSpec)> = cells
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                (vec![3.0 * a as f64, 3.0 * b as f64, 0.0], point(i as f64 - 4.0, 0.5 + 0.05 * i as f64))
            })
            .collect();
        let mut shuffled = sites.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let build = |xs: &[(Vec<f64>, PotentialSpec)]| {
            xs.iter()
                .fold(SingularityConfig::new(3), |c, (p, v)| c.with_point(p.clone(), v.clone()))
        };
        let (a, b) = (build(&sites), build(&shuffled));
        let (va, vb) = (validate_config(&a).unwrap(), validate_config(&b).unwrap());
        prop_assert_eq!(va.epsilon(), vb.epsilon());
        prop_assert_eq!(sorted_positions(&a), sorted_positions(&b));
    }

    #[test]
    fn truncations_approach_the_lattice_separation(
        len0 in 1.0f64..3.0,
        len1 in 1.0f64..3.0,
        shear in -0.4f64..0.4,
        delta in 0.05f64..0.3,
    ) {
        let lattice = LatticeGenerator {
            basis: vec![vec![len0, 0.0, 0.0], vec![shear, len1, 0.0]],
            origin: Vec::new(),
            region: LatticeRegion::Infinite,
            potential: point(1.0, delta),
        };
        let eps = |g: LatticeGenerator| {
            validate_config(&SingularityConfig::new(3).with_lattice(g)).unwrap().epsilon()
        };
        let limit = eps(lattice.clone());
        let mut prev = f64::INFINITY;
        for radius in 1..=4 {
            let e = eps(lattice.truncated(radius));
            prop_assert!(e <= prev);
            prop_assert!(e >= limit - 1e-12);
            prev = e;
        }
        prop_assert!((prev - limit).abs() < 1e-12, "{} vs {}", prev, limit);
    }
}
