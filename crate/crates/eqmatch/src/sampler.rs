//! Exact seed sampling on faraway annuli.
//!
//! Cutters of level `j` that can reach a window of radius `s` have their
//! seeds inside a thin square annulus at distance about `100 r_j` along the
//! first axis. For large `j` that annulus holds far more sites than can be
//! enumerated, yet the expected seed count is tiny. This module samples the
//! seed point process on such an annulus exactly (up to f64 rounding of the
//! probabilities involved):
//!
//! * a seed starting at `x` needs bit 1 at `x` and `j-1` zeros after it along
//!   the first axis, so seeds on different `e_1`-lines are independent;
//! * within one line the no-seed probability over a length-`n` start window
//!   obeys `u_n = u_{n-1} - 2^{-j} u_{n-j}` (the pattern cannot overlap
//!   itself), and `P(first start = t) = u_t - u_{t+1}`, which gives exact
//!   position sampling by inversion with renewal after each seed;
//! * the annulus decomposes into two classes of equal-length line intervals
//!   (side crossings and caps), so the number of intervals containing a seed
//!   is Binomial(interval count, per-interval hit probability).
//!
//! Annuli of successive levels are disjoint and far apart, so per-level
//! sampling is jointly exact, and results are deterministic given the seed.

use std::collections::HashMap;
use std::collections::HashSet;

use crate::clumping::SeedRecord;
use crate::error::{Error, Result};
use crate::lattice::{BitField, SeedStream};

/// DP horizon; beyond it the dominant-root asymptotic form of `u_n` is used
/// (transients from subdominant roots are dead long before).
const DP_LIMIT: u64 = 1 << 22;
const ASYMPTOTIC_HORIZON: u64 = 8192;

/// No-seed probabilities and position sampling for one (level, window length)
/// pair.
#[derive(Clone, Debug)]
pub struct IntervalLaw {
    level: u32,
    len: u64,
    /// u[n] for n 0..=min(len, horizon).
    u: Vec<f64>,
    /// ln of the dominant root lambda = 1 - delta.
    ln_lambda: f64,
    /// u_n ~ coeff * lambda^n beyond the table.
    ln_coeff: f64,
    /// P(at least one seed start in the window).
    q: f64,
}

impl IntervalLaw {
    pub fn new(level: u32, len: u64) -> Self {
        assert!(level >= 1);
        let pi = 0.5f64.powi(level as i32);
        let horizon = if len <= DP_LIMIT {
            len
        } else {
            ASYMPTOTIC_HORIZON + level as u64
        };
        let j = level as usize;
        let mut u = Vec::with_capacity(horizon as usize + 1);
        u.push(1.0f64);
        for n in 1..=horizon {
            let tail = if n >= level as u64 {
                u[(n - level as u64) as usize]
            } else {
                1.0
            };
            let next = u[(n - 1) as usize] - pi * tail;
            u.push(next.max(0.0));
        }
        // Dominant root 1 - delta of x^j = x^{j-1} - pi via fixed point
        // delta = pi / (1 - delta)^{j-1}.
        let mut delta = pi;
        for _ in 0..64 {
            let next = pi / (1.0 - delta).powi(j as i32 - 1);
            if (next - delta).abs() <= f64::EPSILON * delta.abs() {
                delta = next;
                break;
            }
            delta = next;
        }
        let ln_lambda = (-delta).ln_1p();
        let anchor = horizon.min(ASYMPTOTIC_HORIZON);
        let ln_coeff = u[anchor as usize].ln() - anchor as f64 * ln_lambda;
        let q = if len <= horizon {
            1.0 - u[len as usize]
        } else {
            -(ln_coeff + len as f64 * ln_lambda).exp_m1()
        };
        IntervalLaw {
            level,
            len,
            u,
            ln_lambda,
            ln_coeff,
            q: q.clamp(0.0, 1.0),
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// P(no seed start within the first `n` positions).
    pub fn no_seed_prob(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        if (n as usize) < self.u.len() {
            self.u[n as usize]
        } else {
            (self.ln_coeff + n as f64 * self.ln_lambda).exp()
        }
    }

    /// P(at least one seed start in the whole window).
    pub fn hit_prob(&self) -> f64 {
        self.q
    }

    /// Sample all seed start offsets in a window of length `len`,
    /// conditioned on at least one being present.
    pub fn sample_positions_hit(&self, stream: &mut SeedStream) -> Vec<u64> {
        let mut out = Vec::new();
        let mut base = 0u64;
        let mut remaining = self.len;
        // First seed conditioned on >= 1 in [0, remaining).
        let q_here = 1.0 - self.no_seed_prob(remaining);
        let v = stream.next_f64() * q_here;
        let t = self.invert_first(remaining, v);
        out.push(base + t);
        base += t + self.level as u64;
        remaining = self.len.saturating_sub(base);
        // Renewal: subsequent stretches are unconditioned.
        while remaining > 0 {
            let q = 1.0 - self.no_seed_prob(remaining);
            if stream.next_f64() >= q {
                break;
            }
            let v = stream.next_f64() * q;
            let t = self.invert_first(remaining, v);
            out.push(base + t);
            base += t + self.level as u64;
            remaining = self.len.saturating_sub(base);
        }
        out
    }

    /// Smallest t with 1 - u_{t+1} > v, i.e. the first-seed position whose
    /// CDF exceeds v; u is monotone decreasing so binary search applies.
    fn invert_first(&self, window: u64, v: f64) -> u64 {
        let target = 1.0 - v;
        let mut lo = 0u64; // invariant: u_{lo} >= target was not yet violated
        let mut hi = window - 1;
        // find smallest t in [0, window) with u_{t+1} < target
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.no_seed_prob(mid + 1) < target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// Binomial(n, p) sampling by inversion around the mode. Tails further than
/// ~12 sigma from the mode carry negligible mass and are skipped.
pub fn binomial_sample(n: u64, p: f64, stream: &mut SeedStream) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mean = nf * p;
    let sd = (mean * (1.0 - p)).sqrt();
    let k_lo = if mean > 700.0 {
        ((mean - 12.0 * sd - 5.0).floor().max(0.0)) as u64
    } else {
        0
    };
    let u = stream.next_f64();
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut k = k_lo;
    let mut ln_pmf =
        ln_choose(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q;
    let mut pmf = ln_pmf.exp();
    let mut cum = pmf;
    while cum <= u && k < n {
        // pmf(k+1) = pmf(k) * (n-k)/(k+1) * p/q
        let ratio = ((n - k) as f64 / (k + 1) as f64) * (p / (1.0 - p));
        pmf *= ratio;
        if !pmf.is_finite() || pmf == 0.0 {
            // Re-anchor against drift on very long walks.
            k += 1;
            ln_pmf = ln_choose(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q;
            pmf = ln_pmf.exp();
            cum += pmf;
            continue;
        }
        k += 1;
        cum += pmf;
    }
    k
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln(n!) by table below 1024 and a Stirling series above (error < 1e-13).
fn ln_factorial(n: u64) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![0.0f64; 1024];
        for i in 2..1024usize {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    if n < 1024 {
        return table[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + inv / 12.0
        - inv.powi(3) / 360.0
        + inv.powi(5) / 1260.0
}

/// Square annulus `A <= max_i |x_i - center_i| <= B` decomposed into
/// `e_1`-line intervals of two length classes. `A` and `B` are fractional so
/// boundary sites are unambiguous; `A` may be negative (no hole).
#[derive(Clone, Debug)]
pub struct AnnulusClasses {
    /// (interval count, interval length) for each class.
    pub classes: Vec<ClassSpec>,
}

#[derive(Clone, Debug)]
pub struct ClassSpec {
    pub intervals: u64,
    pub len: u64,
    kind: ClassKind,
}

#[derive(Clone, Debug, Copy)]
enum ClassKind {
    /// d = 1 or side lines in d = 2: two intervals per line.
    Side,
    /// Cap lines in d = 2: one full-width interval per line.
    Cap,
    /// No hole: a single full box treated as stacked full-width lines.
    Full,
}

impl AnnulusClasses {
    pub fn new(d: u32, inner: f64, outer: f64) -> Result<Self> {
        if outer <= 0.0 {
            return Ok(AnnulusClasses { classes: Vec::new() });
        }
        let bo = outer.floor() as i64;
        let ai = if inner >= 0.0 { inner.floor() as i64 } else { -1 };
        let side_len = (bo - ai) as u64;
        let cap_len = (2 * bo + 1) as u64;
        let classes = match d {
            1 => {
                if ai < 0 {
                    vec![ClassSpec { intervals: 1, len: cap_len, kind: ClassKind::Full }]
                } else {
                    vec![ClassSpec { intervals: 2, len: side_len, kind: ClassKind::Side }]
                }
            }
            2 => {
                if ai < 0 {
                    vec![ClassSpec {
                        intervals: cap_len,
                        len: cap_len,
                        kind: ClassKind::Full,
                    }]
                } else {
                    vec![
                        ClassSpec {
                            intervals: 2 * (2 * ai + 1) as u64,
                            len: side_len,
                            kind: ClassKind::Side,
                        },
                        ClassSpec {
                            intervals: 2 * side_len,
                            len: cap_len,
                            kind: ClassKind::Cap,
                        },
                    ]
                }
            }
            other => {
                return Err(Error::invalid(format!(
                    "annulus seed sampling supports d <= 2, got {other}"
                )))
            }
        };
        Ok(AnnulusClasses { classes })
    }

    pub fn total_sites(&self) -> u64 {
        self.classes.iter().map(|c| c.intervals * c.len).sum()
    }

    /// Start coordinates (relative to the annulus center) of interval `index`
    /// in the class. Positions within the interval increase along `e_1`.
    fn interval_start(&self, spec: &ClassSpec, d: u32, inner: f64, outer: f64, index: u64) -> Vec<i64> {
        let bo = outer.floor() as i64;
        let ai = if inner >= 0.0 { inner.floor() as i64 } else { -1 };
        match (spec.kind, d) {
            (ClassKind::Full, 1) => vec![-bo],
            (ClassKind::Full, 2) => vec![-bo, -bo + index as i64],
            (ClassKind::Side, 1) => {
                if index == 0 {
                    vec![-bo]
                } else {
                    vec![ai + 1]
                }
            }
            (ClassKind::Side, 2) => {
                let line = (index >> 1) as i64;
                let x1 = if index & 1 == 0 { -bo } else { ai + 1 };
                vec![x1, -ai + line]
            }
            (ClassKind::Cap, 2) => {
                let half = (bo - ai) as u64;
                let x2 = if index < half {
                    -bo + index as i64
                } else {
                    ai + 1 + (index - half) as i64
                };
                vec![-bo, x2]
            }
            _ => unreachable!("class kind / dimension mismatch"),
        }
    }
}

/// Sample every level-`level` seed whose start lies in the annulus
/// `inner <= max_i |x_i - center_i| <= outer`, without evaluating bits.
/// Exact in law; deterministic in the stream.
pub fn sample_annulus_seeds(
    level: u32,
    center: &[i64],
    inner: f64,
    outer: f64,
    stream: &mut SeedStream,
) -> Result<Vec<SeedRecord>> {
    let d = center.len() as u32;
    let ann = AnnulusClasses::new(d, inner, outer)?;
    // Shells from the left interval of a line must not reach its right
    // interval, else the intervals would share bits.
    if inner >= 0.0 && (level as f64) >= 2.0 * inner + 2.0 {
        return Err(Error::invalid(
            "annulus too thin for independent interval sampling",
        ));
    }
    let mut laws: HashMap<u64, IntervalLaw> = HashMap::new();
    let mut seeds = Vec::new();
    for spec in &ann.classes {
        if spec.intervals == 0 || spec.len == 0 {
            continue;
        }
        let law = laws
            .entry(spec.len)
            .or_insert_with(|| IntervalLaw::new(level, spec.len));
        let hits = binomial_sample(spec.intervals, law.hit_prob(), stream);
        let mut chosen: Vec<u64> = if hits * 2 >= spec.intervals {
            // Dense: choose the complement instead.
            let skip = sample_distinct(spec.intervals, spec.intervals - hits, stream);
            (0..spec.intervals).filter(|i| !skip.contains(i)).collect()
        } else {
            let mut v: Vec<u64> =
                sample_distinct(spec.intervals, hits, stream).into_iter().collect();
            v.sort_unstable();
            v
        };
        chosen.sort_unstable();
        for interval in chosen {
            let start = ann.interval_start(spec, d, inner, outer, interval);
            for offset in law.sample_positions_hit(stream) {
                let mut position: Vec<i64> = center.to_vec();
                for (axis, s) in start.iter().enumerate() {
                    position[axis] += s;
                }
                position[0] += offset as i64;
                seeds.push(SeedRecord { position, level });
            }
        }
    }
    seeds.sort_unstable_by(|a, b| a.position.cmp(&b.position));
    Ok(seeds)
}

fn sample_distinct(n: u64, k: u64, stream: &mut SeedStream) -> HashSet<u64> {
    let mut set = HashSet::with_capacity(k as usize);
    while (set.len() as u64) < k {
        set.insert(stream.next_below(n));
    }
    set
}

/// Enumerate every level-`level` seed with start in the annulus by scanning
/// bits; the oracle twin of `sample_annulus_seeds` (any dimension).
pub fn enum_annulus_seeds(
    field: &BitField,
    level: u32,
    center: &[i64],
    inner: f64,
    outer: f64,
) -> Vec<SeedRecord> {
    let d = center.len();
    if outer <= 0.0 {
        return Vec::new();
    }
    let bo = outer.floor() as i64;
    let ai = if inner >= 0.0 { inner.floor() as i64 } else { -1 };

    // Box-minus-box slab decomposition: per axis two slabs where that axis is
    // outside the hole, earlier axes confined to the hole, later axes free.
    let mut slabs: Vec<(Vec<i64>, Vec<i64>)> = Vec::new();
    if ai < 0 {
        slabs.push((vec![-bo; d], vec![bo; d]));
    } else {
        for axis in 0..d {
            for (lo_a, hi_a) in [(-bo, -ai - 1), (ai + 1, bo)] {
                if lo_a > hi_a {
                    continue;
                }
                let mut lo = vec![0i64; d];
                let mut hi = vec![0i64; d];
                for t in 0..d {
                    if t < axis {
                        lo[t] = -ai;
                        hi[t] = ai;
                    } else if t == axis {
                        lo[t] = lo_a;
                        hi[t] = hi_a;
                    } else {
                        lo[t] = -bo;
                        hi[t] = bo;
                    }
                }
                slabs.push((lo, hi));
            }
        }
    }

    let mut seeds = Vec::new();
    let mut probe = vec![0i64; d];
    for (lo, hi) in slabs {
        let mut rel = lo.clone();
        'slab: loop {
            for t in 0..d {
                probe[t] = center[t] + rel[t];
            }
            if field.bit(&probe) {
                let mut is_seed = true;
                let x1 = probe[0];
                for off in 1..level as i64 {
                    probe[0] = x1 + off;
                    if field.bit(&probe) {
                        is_seed = false;
                        break;
                    }
                }
                probe[0] = x1;
                if is_seed {
                    seeds.push(SeedRecord {
                        position: probe.clone(),
                        level,
                    });
                }
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'slab;
                }
                axis -= 1;
                rel[axis] += 1;
                if rel[axis] <= hi[axis] {
                    break;
                }
                rel[axis] = lo[axis];
            }
        }
    }
    seeds.sort_unstable_by(|a, b| a.position.cmp(&b.position));
    seeds
}
