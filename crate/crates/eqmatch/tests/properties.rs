//! Property tests for order, metric, bracket matching, and level bracketing.

use proptest::prelude::*;

use eqmatch::clumping::cutter_radius;
use eqmatch::events::level_for_radius;
use eqmatch::lattice::{lex_compare, linf_distance, Geometry, Site};
use eqmatch::meshalkin::{
    match_line_positions, meshalkin_match_line, naive_bracket_oracle, LineTopology,
};

fn site_strategy(d: usize) -> impl Strategy<Value = Site> {
    prop::collection::vec(-1000i64..1000, d).prop_map(Site::new)
}

proptest! {
    #[test]
    fn lex_is_a_translation_invariant_total_order(
        a in site_strategy(3),
        b in site_strategy(3),
        c in site_strategy(3),
        z in prop::collection::vec(-500i64..500, 3),
    ) {
        use std::cmp::Ordering;
        let ab = lex_compare(&a, &b).unwrap();
        let ba = lex_compare(&b, &a).unwrap();
        prop_assert_eq!(ab, ba.reverse());
        // Transitivity.
        let bc = lex_compare(&b, &c).unwrap();
        if ab == Ordering::Less && bc == Ordering::Less {
            prop_assert_eq!(lex_compare(&a, &c).unwrap(), Ordering::Less);
        }
        // Translation invariance.
        prop_assert_eq!(
            lex_compare(&a.translate(&z), &b.translate(&z)).unwrap(),
            ab
        );
    }

    #[test]
    fn torus_distance_satisfies_metric_axioms(
        xs in prop::collection::vec(-50i64..50, 2),
        ys in prop::collection::vec(-50i64..50, 2),
        zs in prop::collection::vec(-50i64..50, 2),
    ) {
        let g = Geometry::torus(vec![12, 20]).unwrap();
        let d_xy = g.distance(&xs, &ys).unwrap();
        let d_yx = g.distance(&ys, &xs).unwrap();
        prop_assert_eq!(d_xy, d_yx);
        prop_assert_eq!(g.distance(&xs, &xs).unwrap(), 0);
        let d_xz = g.distance(&xs, &zs).unwrap();
        let d_zy = g.distance(&zs, &ys).unwrap();
        prop_assert!(d_xy <= d_xz + d_zy);
    }

    #[test]
    fn plain_linf_matches_manual(a in site_strategy(2), b in site_strategy(2)) {
        let expect = a
            .coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| x.abs_diff(*y))
            .max()
            .unwrap();
        prop_assert_eq!(linf_distance(&a, &b).unwrap(), expect);
    }

    #[test]
    fn bracket_pairs_never_cross_and_join_opposite_bits(
        bits in prop::collection::vec(any::<bool>(), 1..200),
        cycle in any::<bool>(),
    ) {
        let topology = if cycle { LineTopology::Cycle } else { LineTopology::Line };
        let pairs = match_line_positions(&bits, topology);
        for &(zero, one) in &pairs {
            prop_assert!(!bits[zero as usize]);
            prop_assert!(bits[one as usize]);
        }
        if !cycle {
            for (i, &(a0, a1)) in pairs.iter().enumerate() {
                let (lo_a, hi_a) = (a0.min(a1), a0.max(a1));
                for &(b0, b1) in &pairs[i + 1..] {
                    let (lo_b, hi_b) = (b0.min(b1), b0.max(b1));
                    let crossing = (lo_a < lo_b && lo_b < hi_a && hi_a < hi_b)
                        || (lo_b < lo_a && lo_a < hi_b && hi_b < hi_a);
                    prop_assert!(!crossing);
                }
            }
        }
    }

    #[test]
    fn stack_and_oracle_agree_on_random_strings(
        bits in prop::collection::vec(any::<bool>(), 0..60),
        cycle in any::<bool>(),
    ) {
        let topology = if cycle { LineTopology::Cycle } else { LineTopology::Line };
        let a = meshalkin_match_line(&bits, topology);
        let b = naive_bracket_oracle(&bits, topology);
        let mut pa: Vec<_> = a.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
        let mut pb: Vec<_> = b.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
        pa.sort_unstable();
        pb.sort_unstable();
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn level_bracket_inverts_radius_sequence(r in 10.0f64..1.0e6, d in 1u32..4) {
        let r2 = cutter_radius(2, d).unwrap();
        prop_assume!(r > r2);
        let k = level_for_radius(r, d).unwrap();
        prop_assert!(cutter_radius(k + 1, d).unwrap() < r);
        prop_assert!(r <= cutter_radius(k + 2, d).unwrap());
    }
}
