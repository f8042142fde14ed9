//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test -p eqmatch-cli --test acceptance -- --nocapture`.

use std::process::Command;

use num_traits::ToPrimitive;

use eqmatch::clumping::{find_seeds, truncation_bias};
use eqmatch::events::{
    biased_unmatched_fraction, detect_cutter_hits_field, detect_enclosed_field,
    generate_balanced_torus, verify_kbad_identity, verify_mass_transport, matching_transport,
};
use eqmatch::lattice::{derive_seed, BitField, Configuration, Geometry, SeedStream};
use eqmatch::meshalkin::{meshalkin_lift, meshalkin_match_line, naive_bracket_oracle, LineTopology};
use eqmatch::pipeline::{build_torus, build_window, WindowParams};
use eqmatch::stats::{estimate_tail, fit_exponent, parse_radii, RuleKind, TailParams};

fn report(num: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {num:2} ({name}): {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {num} ({name}) failed: {detail}");
}

/// Criterion 1: over 1000 random torus configurations (d in {1,2}, sides up
/// to 64, fair coin) the staged rule yields an involution on opposite bits
/// and leaves exactly |#ones - #zeros| sites unmatched.
#[test]
fn acceptance_01_matching_validity() {
    let mut checked = 0u64;
    let d1_sides = [8u64, 16, 24, 32, 48, 64];
    let d2_sides = [8u64, 12, 16, 24, 32, 48, 64];
    for trial in 0..1000u64 {
        let seed = derive_seed(1001, "accept-validity", trial);
        let (d, sides) = if trial % 2 == 0 {
            (1u32, vec![d1_sides[(trial / 2) as usize % d1_sides.len()]])
        } else {
            let s = d2_sides[(trial / 2) as usize % d2_sides.len()];
            (2u32, vec![s, s])
        };
        let c = Configuration::generate(d as usize, Geometry::torus(sides).unwrap(), seed, 0.5)
            .unwrap();
        let build = build_torus(&c, None).unwrap();
        let m = build.matching().unwrap();
        m.matching().validate(&c).unwrap();
        let ones = c.count_ones() as i64;
        let zeros = c.site_count() as i64 - ones;
        assert_eq!(
            m.unmatched_count(),
            (ones - zeros).unsigned_abs(),
            "trial {trial}: unmatched != |#1 - #0|"
        );
        checked += 1;
    }
    report(1, "matching validity", checked == 1000, &format!("{checked} configurations"));
}

/// Criterion 2: on a 32^2 torus, translating the configuration translates
/// the matching bitwise, for both rules, over 100 random shifts.
#[test]
fn acceptance_02_equivariance() {
    let g = Geometry::torus(vec![32, 32]).unwrap();
    let base = Configuration::generate(2, g.clone(), 2002, 0.5).unwrap();
    let clump_base = build_torus(&base, None).unwrap().matching().unwrap();
    let mesh_base = meshalkin_lift(&base, 2).unwrap();
    let mut stream = SeedStream::new(derive_seed(2002, "accept-shift", 0));
    let mut shifts_ok = 0u32;
    for _ in 0..100 {
        let z = vec![stream.next_below(32) as i64, stream.next_below(32) as i64];
        let shifted = base.translate(&z).unwrap();
        let clump_shift = build_torus(&shifted, None).unwrap().matching().unwrap();
        let mesh_shift = meshalkin_lift(&shifted, 2).unwrap();
        for index in 0..base.site_count() {
            let coords = g.coords_of(index);
            let moved: Vec<i64> = coords.iter().zip(&z).map(|(c, dz)| c + dz).collect();
            let moved_idx = g.index_of(&moved).unwrap();
            let translate_partner = |m: &eqmatch::meshalkin::Matching, i: u64| {
                m.partner_index(i).map(|p| {
                    let pc = g.coords_of(p);
                    let e: Vec<i64> = pc.iter().zip(&z).map(|(c, dz)| c + dz).collect();
                    g.index_of(&e).unwrap()
                })
            };
            assert_eq!(
                translate_partner(clump_base.matching(), index),
                clump_shift.matching().partner_index(moved_idx),
                "clump rule shift {z:?}"
            );
            assert_eq!(
                clump_base.matching().stage(index),
                clump_shift.matching().stage(moved_idx),
                "clump stages shift {z:?}"
            );
            assert_eq!(
                translate_partner(&mesh_base, index),
                mesh_shift.partner_index(moved_idx),
                "bracket rule shift {z:?}"
            );
        }
        shifts_ok += 1;
    }
    report(2, "equivariance", shifts_ok == 100, "100 shifts, both rules, bitwise");
}

/// Criterion 3: stack matcher and quadratic reduction oracle agree on every
/// binary string of length <= 14, on the line and on the cycle.
#[test]
fn acceptance_03_meshalkin_oracle() {
    let mut strings = 0u64;
    for len in 0..=14usize {
        for mask in 0u32..(1u32 << len) {
            let bits: Vec<bool> = (0..len).map(|i| (mask >> i) & 1 == 1).collect();
            for topology in [LineTopology::Line, LineTopology::Cycle] {
                let a = meshalkin_match_line(&bits, topology);
                let b = naive_bracket_oracle(&bits, topology);
                let mut pa: Vec<_> = a.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
                let mut pb: Vec<_> = b.pairs().map(|(x, y, _)| (x.min(y), x.max(y))).collect();
                pa.sort_unstable();
                pb.sort_unstable();
                assert_eq!(pa, pb, "bits {bits:?} {topology:?}");
            }
            strings += 1;
        }
    }
    report(3, "bracket oracle equivalence", strings == 32767, &format!("{strings} strings, both topologies"));
}

/// Criterion 4: one-dimensional bracket rule on 10^7 pooled sites has
/// log-log survival slope -0.50 +/- 0.05 over r in [4, 512].
#[test]
fn acceptance_04_meshalkin_tail() {
    let radii = parse_radii("4..512").unwrap();
    let params = TailParams {
        trials: 1,
        rng_seed: 4004,
        sides: vec![10_000_000],
        ..TailParams::new(RuleKind::Meshalkin, 1, vec![10_000_000], radii)
    };
    let curve = estimate_tail(&params).unwrap();
    let fit = fit_exponent(&curve, 4, 512).unwrap();
    let pass = (fit.slope + 0.50).abs() <= 0.05;
    report(
        4,
        "bracket tail slope",
        pass,
        &format!("slope {:.4} +/- {:.4} on 10^7 sites", fit.slope, fit.stderr),
    );
}

/// Criterion 5: on a 1024^2 torus the level-k seed density is 2^{-k} within
/// four binomial standard deviations for k = 1..8.
#[test]
fn acceptance_05_seed_density() {
    let g = Geometry::torus(vec![1024, 1024]).unwrap();
    let c = Configuration::generate(2, g, 5005, 0.5).unwrap();
    let n = c.site_count() as f64;
    let mut detail = String::new();
    let mut pass = true;
    for k in 1..=8u32 {
        let count = find_seeds(&c, k).len() as f64;
        let p = 0.5f64.powi(k as i32);
        let sigma = (p * (1.0 - p) / n).sqrt();
        let dev = (count / n - p).abs();
        if dev > 4.0 * sigma {
            pass = false;
        }
        detail.push_str(&format!("k={k}:{:.2}s ", dev / sigma));
    }
    report(5, "seed density", pass, detail.trim());
}

/// Criterion 6: the k-bad identity holds with exact rational equality on 100
/// random 64^2 tori at every level, and the matching transport on balanced
/// tori sends exactly one unit per site and receives exactly
/// 2 * ones-density per site.
#[test]
fn acceptance_06_mass_transport() {
    for trial in 0..100u64 {
        let seed = derive_seed(6006, "accept-kbad", trial);
        let c = Configuration::generate(2, Geometry::torus(vec![64, 64]).unwrap(), seed, 0.5)
            .unwrap();
        let build = build_torus(&c, None).unwrap();
        let m = build.matching().unwrap();
        for k in 1..=build.hierarchy.k_max() {
            let (lhs, rhs) = verify_kbad_identity(&c, &build.hierarchy, &m, k).unwrap();
            assert_eq!(lhs, rhs, "trial {trial} level {k}");
        }
    }
    // Matching transport: balance makes both per-site averages exact.
    for trial in 0..6u64 {
        let c = generate_balanced_torus(2, &[24, 24], derive_seed(6006, "accept-mt", trial))
            .unwrap();
        let build = build_torus(&c, None).unwrap();
        let m = build.matching().unwrap();
        assert_eq!(m.unmatched_count(), 0, "balanced torus must match perfectly");
        let (out_mass, in_mass) = verify_mass_transport(&c, matching_transport(&m)).unwrap();
        let n = c.site_count() as f64;
        let ones = c.count_ones() as f64;
        let out_avg = out_mass.to_f64().unwrap() / n;
        let in_avg = in_mass.to_f64().unwrap() / n;
        assert_eq!(out_avg, 1.0, "out mass per site");
        assert_eq!(in_avg, 2.0 * (ones / n), "in mass per site");
    }
    report(6, "mass transport identities", true, "100 tori, all levels, exact; transport averages exact");
}

/// Criterion 7: over 10^4 trials in d=2, enclosure failures stay under
/// e^{-k} + 3 se for k in 4..7 and cutter hits stay under the annulus union
/// bound for k in 2..6, s in {4, 16}.
#[test]
fn acceptance_07_event_bounds() {
    let trials = 10_000u64;
    let mut detail = String::new();
    let mut pass = true;
    for k in 4..=7u32 {
        let mut misses = 0u64;
        for t in 0..trials {
            let field =
                BitField::new(derive_seed(7007, "accept-enclosed", t * 8 + k as u64), 0.5)
                    .unwrap();
            if !detect_enclosed_field(&field, 2, k, &[0, 0]).unwrap().occurred {
                misses += 1;
            }
        }
        let p = misses as f64 / trials as f64;
        let bound = (-(k as f64)).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        if p > bound + 3.0 * se {
            pass = false;
        }
        detail.push_str(&format!("E{k}c={p:.1e}<={bound:.1e} "));
    }
    for k in 2..=6u32 {
        for s in [4.0f64, 16.0] {
            let mut hits = 0u64;
            for t in 0..trials {
                let field = BitField::new(
                    derive_seed(7007, "accept-hits", (t * 16 + k as u64) * 2 + s as u64),
                    0.5,
                )
                .unwrap();
                if detect_cutter_hits_field(&field, 2, k, s).unwrap().occurred {
                    hits += 1;
                }
            }
            let p = hits as f64 / trials as f64;
            let bound = eqmatch::clumping::annulus_site_count(k, 2, s).unwrap()
                * 0.5f64.powi(k as i32);
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            if p > bound + 3.0 * se {
                pass = false;
                detail.push_str(&format!("U{k}({s})={p:.3}>{bound:.3}! "));
            }
        }
    }
    report(7, "event bounds", pass, detail.trim());
}

/// Criterion 8: on 1024^2 windows with truncation residual below 1e-3, the
/// empirical survival over r in [8, 128] is dominated by the main bound
/// shape anchored at r = 8, with fitted slope in [-1.1, -0.5].
#[test]
fn acceptance_08_window_tail_domination() {
    let radii = vec![8u64, 11, 16, 23, 32, 45, 64, 91, 128];
    let params = TailParams {
        torus: false,
        trials: 4,
        rng_seed: 777,
        ..TailParams::new(RuleKind::Clump, 2, vec![1024, 1024], radii.clone())
    };
    let residual = truncation_bias(2, eqmatch::clumping::k_max_for_residual(2, 512.0, 1e-3), 512.0);
    assert!(residual < 1e-3, "truncation residual {residual}");
    let curve = estimate_tail(&params).unwrap();
    // Anchor the main bound at r = 8; the anchor point saturates the bound
    // by construction, so tolerate pure rounding there (1e-12 relative).
    let p8 = curve.p_hat[0];
    let shape = |r: f64| (r.ln()).powi(4) * r.powf(-2.0 / 3.0);
    let c = p8 / shape(8.0);
    let mut dominated = true;
    for (i, &r) in radii.iter().enumerate() {
        let bound = c * shape(r as f64);
        if curve.p_hat[i] > bound * (1.0 + 1e-12) {
            dominated = false;
        }
    }
    let fit = fit_exponent(&curve, 8, 128).unwrap();
    let slope_ok = fit.slope <= -0.5 && fit.slope >= -1.1;
    report(
        8,
        "window tail domination",
        dominated && slope_ok,
        &format!(
            "residual {residual:.2e}, slope {:.4} +/- {:.4}, dominated {dominated}",
            fit.slope, fit.stderr
        ),
    );
}

/// Criterion 9: union-find clump partitions equal independent per-level BFS
/// recomputation on 50 random 64^2 windows at every level.
#[test]
fn acceptance_09_hierarchy_oracle() {
    use std::collections::{HashMap, VecDeque};
    let bfs_partition = |cuts: &eqmatch::clumping::EdgeCutLevels, k: u32| -> Vec<u32> {
        let geometry = cuts.geometry();
        let n = geometry.site_count();
        let d = geometry.dimension();
        let mut label = vec![u32::MAX; n as usize];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start as usize] != u32::MAX {
                continue;
            }
            label[start as usize] = next;
            queue.push_back(start);
            while let Some(site) = queue.pop_front() {
                let coords = geometry.coords_of(site);
                for axis in 0..d {
                    if cuts.edge_exists(site, axis) {
                        let other = cuts.neighbor(site, axis);
                        let lvl = cuts.level(site, axis) as u32;
                        if (lvl == 0 || lvl <= k) && label[other as usize] == u32::MAX {
                            label[other as usize] = next;
                            queue.push_back(other);
                        }
                    }
                    let mut prev = coords.clone();
                    prev[axis] -= 1;
                    if let Some(p) = geometry.index_of(&prev) {
                        if cuts.edge_exists(p, axis) {
                            let lvl = cuts.level(p, axis) as u32;
                            if (lvl == 0 || lvl <= k) && label[p as usize] == u32::MAX {
                                label[p as usize] = next;
                                queue.push_back(p);
                            }
                        }
                    }
                }
            }
            next += 1;
        }
        label
    };
    let agree = |a: &[u32], b: &[u32]| -> bool {
        let mut fwd: HashMap<u32, u32> = HashMap::new();
        let mut bwd: HashMap<u32, u32> = HashMap::new();
        for (&x, &y) in a.iter().zip(b) {
            if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
                return false;
            }
        }
        true
    };
    for trial in 0..50u64 {
        let params = WindowParams {
            k_max: Some(12),
            // Half the windows exercise the sampled-annulus path.
            enum_budget: if trial % 2 == 0 { 2.0e8 } else { 2.0e4 },
            ..WindowParams::new(2, vec![64, 64], derive_seed(9009, "accept-bfs", trial), 0.5)
        };
        let build = build_window(&params).unwrap();
        for k in 1..=build.hierarchy.k_max() {
            let uf = build.hierarchy.partition_at_level(k);
            let bfs = bfs_partition(&build.cuts, k);
            assert!(agree(&uf, &bfs), "trial {trial} level {k}");
        }
    }
    report(9, "hierarchy oracle", true, "50 windows, all levels, partitions equal");
}

/// Criterion 10: at p = 0.6 on a 256^2 torus the mean unmatched fraction is
/// 0.200 +/- 0.010 over 100 trials.
#[test]
fn acceptance_10_biased_impossibility() {
    let f = biased_unmatched_fraction(0.6, 2, &[256, 256], 100, 1010).unwrap();
    let pass = (f - 0.2).abs() <= 0.010;
    report(10, "biased-coin impossibility", pass, &format!("mean unmatched fraction {f:.5}"));
}

/// Criterion 11: repeated CLI runs with identical specs produce byte
/// identical data payloads.
#[test]
fn acceptance_11_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_eqmatch");
    let base = std::env::temp_dir().join(format!("eqmatch-accept-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let run = |out: &std::path::Path, extra: &[&str]| {
        let status = Command::new(bin)
            .args(extra)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "command {extra:?} failed");
    };
    let cases: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "gen",
            vec!["gen", "--dim", "2", "--side", "24", "--geometry", "torus", "--seed", "11"],
            vec![".eqmz", ".json"],
        ),
        (
            "match",
            vec!["match", "--dim", "2", "--side", "32", "--geometry", "torus", "--rule", "clump", "--seed", "7"],
            vec![".matching.csv", ".summary.json"],
        ),
        (
            "tail",
            vec![
                "tail", "--rule", "meshalkin", "--dim", "1", "--side", "100000",
                "--geometry", "torus", "--seed", "3", "--radii", "4..64", "--trials", "2",
                "--format", "svg",
            ],
            vec![".survival.csv", ".fit.json", ".svg"],
        ),
    ];
    for (name, args, suffixes) in &cases {
        let out_a = base.join(format!("{name}-a"));
        let out_b = base.join(format!("{name}-b"));
        run(&out_a, args);
        run(&out_b, args);
        for suffix in suffixes {
            let a = std::fs::read(std::path::PathBuf::from(format!("{}{suffix}", out_a.display()))).unwrap();
            let b = std::fs::read(std::path::PathBuf::from(format!("{}{suffix}", out_b.display()))).unwrap();
            assert_eq!(a, b, "{name}{suffix} differs between runs");
        }
    }
    // Events command twice, comparing the JSON report.
    let ev_a = base.join("events-a");
    let ev_b = base.join("events-b");
    for out in [&ev_a, &ev_b] {
        let status = Command::new(bin)
            .args([
                "events", "--dim", "2", "--k", "4,5", "--s", "4", "--trials", "200",
                "--seed", "2",
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(format!("{}.events.json", ev_a.display())).unwrap();
    let b = std::fs::read(format!("{}.events.json", ev_b.display())).unwrap();
    assert_eq!(a, b, "events report differs between runs");
    report(11, "cli determinism", true, "gen/match/tail/events byte-identical");
}
