//! Displacement-tail estimation and exponent fitting.
//!
//! Translation invariance makes sites exchangeable, so the harness samples
//! the displacement at every eligible site of every trial configuration
//! (spatial pooling) instead of only at the origin; correlations between
//! nearby sites make the pooled counts conservative rather than wrong, and
//! the trial count still controls the error. Sites within `r` of a window
//! edge leave the at-risk set for radius `r`, and censored sites (cleanup
//! pairs or truncation leftovers) are excluded by default.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{derive_seed, Configuration, Geometry};
use crate::matching::Displacement;
use crate::meshalkin::meshalkin_lift;
use crate::pipeline::{build_torus, build_window, WindowParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Meshalkin,
    Clump,
}

impl std::str::FromStr for RuleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meshalkin" => Ok(RuleKind::Meshalkin),
            "clump" => Ok(RuleKind::Clump),
            other => Err(Error::invalid(format!("unknown rule {other}"))),
        }
    }
}

/// Empirical survival of the displacement with per-radius at-risk counts and
/// Wilson 95% intervals.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SurvivalCurve {
    pub radii: Vec<u64>,
    pub survivors: Vec<u64>,
    pub at_risk: Vec<u64>,
    pub trials: u64,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Sites excluded from the tail for being censored.
    pub censored: u64,
    /// Sites that entered the pool.
    pub pooled_sites: u64,
}

impl SurvivalCurve {
    fn from_counts(
        radii: Vec<u64>,
        survivors: Vec<u64>,
        at_risk: Vec<u64>,
        trials: u64,
        censored: u64,
        pooled_sites: u64,
    ) -> Self {
        let mut p_hat = Vec::with_capacity(radii.len());
        let mut ci_lo = Vec::with_capacity(radii.len());
        let mut ci_hi = Vec::with_capacity(radii.len());
        for (&s, &n) in survivors.iter().zip(&at_risk) {
            if n == 0 {
                p_hat.push(f64::NAN);
                ci_lo.push(f64::NAN);
                ci_hi.push(f64::NAN);
            } else {
                p_hat.push(s as f64 / n as f64);
                let (lo, hi) = wilson_interval(s, n, 1.959963984540054);
                ci_lo.push(lo);
                ci_hi.push(hi);
            }
        }
        SurvivalCurve {
            radii,
            survivors,
            at_risk,
            trials,
            p_hat,
            ci_lo,
            ci_hi,
            censored,
            pooled_sites,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,survivors,at_risk,p_hat,ci_lo,ci_hi")?;
        for i in 0..self.radii.len() {
            writeln!(
                w,
                "{},{},{},{:.12e},{:.12e},{:.12e}",
                self.radii[i],
                self.survivors[i],
                self.at_risk[i],
                self.p_hat[i],
                self.ci_lo[i],
                self.ci_hi[i]
            )?;
        }
        Ok(())
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug)]
pub struct TailParams {
    pub rule: RuleKind,
    pub dimension: u32,
    pub sides: Vec<u64>,
    pub torus: bool,
    pub trials: u64,
    pub rng_seed: u64,
    pub bias: f64,
    pub radii: Vec<u64>,
    pub axis: usize,
    pub k_max: Option<u32>,
    pub residual_target: f64,
    /// Count cleanup pairs as real displacements instead of censoring them.
    pub include_cleanup: bool,
}

impl TailParams {
    pub fn new(rule: RuleKind, dimension: u32, sides: Vec<u64>, radii: Vec<u64>) -> Self {
        TailParams {
            rule,
            dimension,
            sides,
            torus: true,
            trials: 1,
            rng_seed: 1,
            bias: 0.5,
            radii,
            axis: dimension as usize,
            k_max: None,
            residual_target: crate::pipeline::DEFAULT_RESIDUAL_TARGET,
            include_cleanup: false,
        }
    }
}

struct TrialCounts {
    survivors: Vec<u64>,
    at_risk: Vec<u64>,
    censored: u64,
    pooled: u64,
}

fn pool_displacements(
    radii: &[u64],
    geometry: &Geometry,
    displacement: impl Fn(u64) -> Option<u64>,
    n: u64,
) -> TrialCounts {
    let mut survivors = vec![0u64; radii.len()];
    let mut at_risk = vec![0u64; radii.len()];
    let mut censored = 0u64;
    for index in 0..n {
        let coords = geometry.coords_of(index);
        let boundary = geometry.boundary_distance(&coords);
        match displacement(index) {
            Some(z) => {
                for (slot, &r) in radii.iter().enumerate() {
                    if boundary >= r {
                        at_risk[slot] += 1;
                        if z > r {
                            survivors[slot] += 1;
                        }
                    }
                }
            }
            None => censored += 1,
        }
    }
    TrialCounts {
        survivors,
        at_risk,
        censored,
        pooled: n,
    }
}

fn run_trial(params: &TailParams, trial: u64) -> Result<TrialCounts> {
    let seed = derive_seed(params.rng_seed, "tail-trial", trial);
    let geometry = if params.torus {
        Geometry::torus(params.sides.clone())?
    } else {
        Geometry::centered_window(params.sides.clone())?
    };
    match params.rule {
        RuleKind::Meshalkin => {
            let c = Configuration::generate(params.dimension as usize, geometry, seed, params.bias)?;
            let m = meshalkin_lift(&c, params.axis)?;
            Ok(pool_displacements(
                &params.radii,
                c.geometry(),
                |i| m.partner_index(i).map(|_| m.displacement_of(i).unwrap()),
                c.site_count(),
            ))
        }
        RuleKind::Clump => {
            let build = if params.torus {
                let c = Configuration::generate(
                    params.dimension as usize,
                    geometry,
                    seed,
                    params.bias,
                )?;
                build_torus(&c, params.k_max)?
            } else {
                let mut wp = WindowParams::new(
                    params.dimension,
                    params.sides.clone(),
                    seed,
                    params.bias,
                );
                wp.k_max = params.k_max;
                wp.residual_target = params.residual_target;
                build_window(&wp)?
            };
            let m = build.matching()?;
            let include_cleanup = params.include_cleanup;
            Ok(pool_displacements(
                &params.radii,
                build.config.geometry(),
                |i| match m.displacement_by_index(i).unwrap() {
                    Displacement::Matched(z) => Some(z),
                    Displacement::Censored { lower_bound } => {
                        if include_cleanup && m.matching().partner_index(i).is_some() {
                            Some(lower_bound.max(m.matching().displacement_of(i).unwrap()))
                        } else {
                            None
                        }
                    }
                },
                build.config.site_count(),
            ))
        }
    }
}

/// Pooled empirical survival of the displacement over independent trials.
pub fn estimate_tail(params: &TailParams) -> Result<SurvivalCurve> {
    if params.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if params.radii.is_empty() || params.radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let counts: Vec<Result<TrialCounts>> = (0..params.trials)
        .into_par_iter()
        .map(|t| run_trial(params, t))
        .collect();
    let mut survivors = vec![0u64; params.radii.len()];
    let mut at_risk = vec![0u64; params.radii.len()];
    let mut censored = 0u64;
    let mut pooled = 0u64;
    for c in counts {
        let c = c?;
        for (slot, (s, n)) in c.survivors.iter().zip(&c.at_risk).enumerate() {
            survivors[slot] += s;
            at_risk[slot] += n;
        }
        censored += c.censored;
        pooled += c.pooled;
    }
    if at_risk.iter().all(|&n| n == 0) {
        return Err(Error::DegenerateSample(
            "no eligible sites at any radius".into(),
        ));
    }
    Ok(SurvivalCurve::from_counts(
        params.radii.clone(),
        survivors,
        at_risk,
        params.trials,
        censored,
        pooled,
    ))
}

/// Least-squares slope of log survival against log radius.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    pub r_lo: u64,
    pub r_hi: u64,
}

pub fn fit_exponent(curve: &SurvivalCurve, r_lo: u64, r_hi: u64) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..curve.radii.len() {
        let r = curve.radii[i];
        if r < r_lo || r > r_hi {
            continue;
        }
        if curve.survivors[i] == 0 || curve.at_risk[i] == 0 {
            continue;
        }
        xs.push((r as f64).ln());
        ys.push(curve.p_hat[i].ln());
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::DegenerateFit(format!(
            "{n} usable radii in [{r_lo}, {r_hi}], need at least 3"
        )));
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all radii identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let stderr = if n > 2 {
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ExponentFit {
        slope,
        stderr,
        intercept,
        points: n,
        r_lo,
        r_hi,
    })
}

/// Parse a radii specification: either a comma list `4,8,16` or a range
/// `4..512` expanded on a half-octave ladder.
pub fn parse_radii(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    let radii: Vec<u64> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad radius {lo}")))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad radius {hi}")))?;
        if lo == 0 || lo >= hi {
            return Err(Error::invalid("radius range needs 0 < lo < hi"));
        }
        let mut out = vec![lo];
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut next = lo as f64;
        loop {
            next *= sqrt2;
            let r = next.round() as u64;
            let r = r.max(out.last().unwrap() + 1);
            if r >= hi {
                break;
            }
            out.push(r);
            next = r as f64;
        }
        out.push(hi);
        out
    } else {
        let mut out = Vec::new();
        for part in spec.split(',') {
            out.push(
                part.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad radius {part}")))?,
            );
        }
        out
    };
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    Ok(radii)
}
