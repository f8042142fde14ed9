//! Event frequency checks beyond the acceptance thresholds: tail-event
//! scaling against the analytic annulus count, and the tail-union detector.

use eqmatch::clumping::{annulus_site_count, cutter_radius};
use eqmatch::events::{detect_cutter_tail, detect_cutter_tail_field, EventKind};
use eqmatch::lattice::{derive_seed, BitField, Configuration, Geometry};

/// The tail-event probability scales like `c3 * s * k^2 / r_k`; the fitted
/// prefactor must be stable (within a factor of two) across levels. The
/// scaling only holds once the union is unsaturated, so probe levels where
/// the expected hit count is well below one.
#[test]
fn cutter_tail_prefactor_is_stable_across_levels() {
    let s = 4.0f64;
    let trials = 1500u64;
    let mut prefactors = Vec::new();
    for k in [30u32, 32, 34] {
        let mut hits = 0u64;
        for t in 0..trials {
            let seed = derive_seed(5150, "c3-trial", t * 100 + k as u64);
            let field = BitField::new(seed, 0.5).unwrap();
            let report =
                detect_cutter_tail_field(&field, 2, k, s, k + 20, 1.0e5, seed).unwrap();
            if report.occurred {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        let r = cutter_radius(k, 2).unwrap();
        let scale = s * (k as f64).powi(2) / r;
        prefactors.push(p / scale);
        // The single-level union bound also caps the union tail's first term.
        let bound: f64 = (k..=k + 20)
            .map(|j| annulus_site_count(j, 2, s).unwrap() * 0.5f64.powi(j as i32))
            .sum();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(p <= bound + 3.0 * se, "k={k}: {p} above union bound {bound}");
    }
    let lo = prefactors.iter().cloned().fold(f64::MAX, f64::min);
    let hi = prefactors.iter().cloned().fold(f64::MIN, f64::max);
    assert!(
        hi / lo <= 2.0,
        "prefactor drifts more than 2x across levels: {prefactors:?}"
    );
}

#[test]
fn configuration_tail_detector_reports_residual() {
    // Small torus region: no seeds of the probed levels fit, so the union
    // never occurs and the residual is reported.
    let g = Geometry::window(vec![-2000, -16], vec![4000, 32]).unwrap();
    let c = Configuration::from_bits(
        g.clone(),
        eqmatch::lattice::PackedBits::zeros(g.site_count()),
        0,
        0.5,
    );
    let report = detect_cutter_tail(&c, 2, 2.0, 3).unwrap();
    assert_eq!(report.kind, EventKind::CutterHitsTail);
    assert!(!report.occurred);
    let residual = report.truncation_residual.unwrap();
    assert!(residual > 0.0);
    // An explicit level-2 seed at -s_2 makes the union fire at level 2.
    let mut bits = eqmatch::lattice::PackedBits::zeros(g.site_count());
    bits.set(g.index_of(&[-450, 0]).unwrap(), true);
    let c = Configuration::from_bits(g, bits, 0, 0.5);
    let report = detect_cutter_tail(&c, 2, 4.6, 3).unwrap();
    assert!(report.occurred);
    assert_eq!(report.level, 2);
}
