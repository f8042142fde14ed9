//! End-to-end hierarchy construction over windows and tori.
//!
//! A torus carries cutters up to the level whose radius still fits inside
//! half the minimal side; everything is enumerated from the materialized
//! bits and wraps.
//!
//! A window is handled level by level. Every cutter of level `j` that can
//! reach the core has its seed inside a square annulus of width about twice
//! the window radius, at distance about `100 r_j` along the first axis. At
//! low levels the annulus is small enough to scan against the lazily
//! evaluated bit field; at high levels it is sampled exactly (see
//! `sampler`). Sampled annuli are pairwise disjoint and disjoint from the
//! core and every enumerated region, so the joint law of all cutters
//! reaching the core is that of the infinite construction truncated at
//! `k_max`; the omission of levels above `k_max` is what the truncation
//! residual bounds.

use rayon::prelude::*;

use crate::clumping::{
    self, build_hierarchy, cutter_radius, cutter_shift, k_max_for_residual, torus_max_level,
    ClumpHierarchy, Cutter, EdgeCutLevels, SeedRecord,
};
use crate::error::{Error, Result};
use crate::lattice::{derive_seed, BitField, Configuration, Geometry, SeedStream};
use crate::matching::{build_matching, StagedMatching};
use crate::sampler::{enum_annulus_seeds, sample_annulus_seeds};

/// Default residual target for automatic `k_max` selection.
pub const DEFAULT_RESIDUAL_TARGET: f64 = 1e-3;

/// Annulus site budget under which a level is enumerated instead of sampled.
pub const DEFAULT_ENUM_BUDGET: f64 = 2.0e8;

#[derive(Clone, Debug)]
pub struct WindowParams {
    pub dimension: u32,
    pub sides: Vec<u64>,
    pub rng_seed: u64,
    pub bias: f64,
    /// Truncation level; defaults to the smallest level meeting
    /// `residual_target`.
    pub k_max: Option<u32>,
    pub residual_target: f64,
    pub enum_budget: f64,
}

impl WindowParams {
    pub fn new(dimension: u32, sides: Vec<u64>, rng_seed: u64, bias: f64) -> Self {
        WindowParams {
            dimension,
            sides,
            rng_seed,
            bias,
            k_max: None,
            residual_target: DEFAULT_RESIDUAL_TARGET,
            enum_budget: DEFAULT_ENUM_BUDGET,
        }
    }
}

/// A built hierarchy with its inputs, ready for matching.
#[derive(Clone, Debug)]
pub struct HierarchyBuild {
    pub config: Configuration,
    pub cuts: EdgeCutLevels,
    pub hierarchy: ClumpHierarchy,
    /// (level, cutters reaching the core) diagnostics.
    pub level_counts: Vec<(u32, u64)>,
    /// First level whose seeds were sampled rather than enumerated, if any.
    pub sampled_from: Option<u32>,
}

impl HierarchyBuild {
    pub fn matching(&self) -> Result<StagedMatching> {
        build_matching(&self.config, &self.hierarchy)
    }
}

/// Core box center and l-infinity radius of a window geometry.
fn window_center_radius(geometry: &Geometry) -> (Vec<i64>, u64) {
    let lower = geometry.lower_corner();
    let sides = geometry.sides();
    let center: Vec<i64> = lower
        .iter()
        .zip(sides)
        .map(|(lo, s)| lo + (*s as i64) / 2)
        .collect();
    let radius = lower
        .iter()
        .zip(sides)
        .zip(&center)
        .map(|((lo, s), c)| {
            let hi = lo + *s as i64 - 1;
            ((c - lo) as u64).max((hi - c) as u64)
        })
        .max()
        .unwrap_or(0);
    (center, radius)
}

/// Seeds of one level whose cutters can reach the core, scanned or sampled
/// on the capture annulus.
fn level_seeds(
    field: &BitField,
    level: u32,
    d: u32,
    core_center: &[i64],
    capture: u64,
    enum_budget: f64,
    rng_seed: u64,
) -> Result<(Vec<SeedRecord>, bool)> {
    let r = cutter_radius(level, d)?;
    let shift = cutter_shift(level, d)?;
    let annulus_center: Vec<i64> = core_center
        .iter()
        .zip(&shift)
        .map(|(c, s)| c - s)
        .collect();
    let w = capture as f64;
    let inner = r - w;
    let outer = r + w;
    let size = clumping::ball_site_count(outer, d) - clumping::ball_site_count(inner, d);
    // Sampling demands annuli pairwise disjoint and disjoint from the core
    // and every enumerated region; the binding gap between consecutive
    // annuli is (99 * 2^{1/d} - 101) * r.
    let gap_factor = 99.0 * 2f64.powf(1.0 / d as f64) - 101.0;
    let samplable = d <= 2
        && inner > 2.0 * (level as f64)
        && gap_factor * r > 2.0 * (w + level as f64 + 2.0);
    if size <= enum_budget || !samplable {
        if size > 4.0 * enum_budget {
            return Err(Error::Undecidable(format!(
                "level {level} annulus has {size:.3e} sites and cannot be sampled in dimension {d}"
            )));
        }
        Ok((
            enum_annulus_seeds(field, level, &annulus_center, inner, outer),
            false,
        ))
    } else {
        let mut stream = SeedStream::new(derive_seed(rng_seed, "annulus-level", level as u64));
        Ok((
            sample_annulus_seeds(level, &annulus_center, inner, outer, &mut stream)?,
            true,
        ))
    }
}

/// Build configuration, cut levels, and hierarchy for a centered window.
pub fn build_window(params: &WindowParams) -> Result<HierarchyBuild> {
    let d = params.dimension;
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if params.sides.len() != d as usize {
        return Err(Error::DimensionMismatch {
            expected: d as usize,
            got: params.sides.len(),
        });
    }
    let geometry = Geometry::centered_window(params.sides.clone())?;
    let (core_center, core_radius) = window_center_radius(&geometry);
    let s = *params.sides.iter().max().unwrap() as f64 / 2.0;
    let k_max = params
        .k_max
        .unwrap_or_else(|| k_max_for_residual(d, s, params.residual_target));
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }

    let field = BitField::new(params.rng_seed, params.bias)?;
    let config = Configuration::generate(d as usize, geometry.clone(), params.rng_seed, params.bias)?;
    let capture = core_radius + 2;

    // Seeds per level; levels are independent regions, so scan in parallel.
    let levels: Vec<u32> = (2..=k_max).collect();
    let results: Vec<Result<(Vec<SeedRecord>, bool)>> = levels
        .par_iter()
        .map(|&level| {
            level_seeds(
                &field,
                level,
                d,
                &core_center,
                capture,
                params.enum_budget,
                params.rng_seed,
            )
        })
        .collect();

    let mut cuts = EdgeCutLevels::new(geometry.clone(), k_max);
    let mut level_counts = Vec::new();
    let mut sampled_from = None;
    for (level, outcome) in levels.iter().zip(results) {
        let (seeds, sampled) = outcome?;
        if sampled && sampled_from.is_none() {
            sampled_from = Some(*level);
        }
        level_counts.push((*level, seeds.len() as u64));
        for seed in &seeds {
            let cutter = Cutter::from_seed(seed, d)?;
            cuts.mark_cutter(&cutter);
        }
    }

    let mut hierarchy = build_hierarchy(&cuts);
    hierarchy.truncation.residual_bound = clumping::truncation_bias(d, k_max, s);
    hierarchy.truncation.halo_margin =
        (cutter_shift(k_max, d)?[0] as u64) + cutter_radius(k_max, d)?.ceil() as u64 + capture;
    Ok(HierarchyBuild {
        config,
        cuts,
        hierarchy,
        level_counts,
        sampled_from,
    })
}

/// Build cut levels and hierarchy over a torus configuration. `k_max`
/// defaults to (and is capped by) the largest level that fits.
pub fn build_torus(c: &Configuration, k_max: Option<u32>) -> Result<HierarchyBuild> {
    if !c.geometry().is_torus() {
        return Err(Error::UnsupportedGeometry(
            "build_torus needs torus geometry".into(),
        ));
    }
    let limit = torus_max_level(c.geometry().sides());
    let k_max = match k_max {
        Some(k) => {
            if k > limit {
                return Err(Error::invalid(format!(
                    "torus of sides {:?} supports k_max <= {limit}, requested {k}",
                    c.geometry().sides()
                )));
            }
            k
        }
        None => limit,
    };
    let cuts = if k_max >= 2 {
        let (center, radius) = match c.geometry() {
            Geometry::Torus { sides } => (
                vec![0i64; sides.len()],
                *sides.iter().max().unwrap() as f64,
            ),
            _ => unreachable!(),
        };
        let core = crate::lattice::BoxRegion::new(crate::lattice::Site::new(center), radius);
        clumping::compute_edge_cutlevels(c, k_max, &core)?
    } else {
        EdgeCutLevels::new(c.geometry().clone(), k_max)
    };
    let mut hierarchy = build_hierarchy(&cuts);
    // The torus is its own finite universe; the residual records what the
    // level cap omits relative to the unbounded construction.
    hierarchy.truncation.residual_bound = clumping::truncation_bias(
        c.dimension() as u32,
        k_max,
        c.geometry().sides().iter().max().copied().unwrap_or(1) as f64 / 2.0,
    );
    let level_counts = (2..=k_max)
        .map(|k| {
            let core = crate::lattice::BoxRegion::new(
                crate::lattice::Site::origin(c.dimension()),
                c.geometry().diameter() as f64,
            );
            let n = clumping::cutters_for_level(c, k, &core)
                .map(|v| v.len() as u64)
                .unwrap_or(0);
            (k, n)
        })
        .collect();
    Ok(HierarchyBuild {
        config: c.clone(),
        cuts,
        hierarchy,
        level_counts,
        sampled_from: None,
    })
}

/// Convenience: generate a torus configuration and build everything.
pub fn build_torus_from_seed(
    d: u32,
    sides: Vec<u64>,
    rng_seed: u64,
    bias: f64,
    k_max: Option<u32>,
) -> Result<HierarchyBuild> {
    let c = Configuration::generate(d as usize, Geometry::torus(sides)?, rng_seed, bias)?;
    build_torus(&c, k_max)
}
