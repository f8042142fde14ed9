//! Sites, boxes, and finite coin-flip configurations on window or torus
//! geometry, with reproducible counter-based randomness.
//!
//! A configuration assigns an independent Bernoulli bit to every site of a
//! finite region. Bits are derived by hashing the site coordinates together
//! with the generator seed, so regeneration is deterministic and independent
//! of evaluation order or thread count, and the same field can be evaluated
//! lazily at arbitrary lattice sites.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the integer lattice `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Site {
    coords: Vec<i64>,
}

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "site needs at least one coordinate");
        Site { coords }
    }

    pub fn origin(d: usize) -> Self {
        Site { coords: vec![0; d] }
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn translate(&self, z: &[i64]) -> Site {
        Site {
            coords: self
                .coords
                .iter()
                .zip(z)
                .map(|(a, b)| a.wrapping_add(*b))
                .collect(),
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<&[i64]> for Site {
    fn from(coords: &[i64]) -> Self {
        Site::new(coords.to_vec())
    }
}

/// An l-infinity ball: membership is `max_i |x_i - center_i| <= radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub center: Site,
    pub radius: f64,
}

impl BoxRegion {
    pub fn new(center: Site, radius: f64) -> Self {
        assert!(radius >= 0.0, "box radius must be nonnegative");
        BoxRegion { center, radius }
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.coords()
            .iter()
            .zip(self.center.coords())
            .all(|(a, c)| ((a - c).unsigned_abs() as f64) <= self.radius)
    }
}

/// Finite lattice region: an axis-aligned window or a periodic torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Window { corner: Vec<i64>, sides: Vec<u64> },
    Torus { sides: Vec<u64> },
}

impl Geometry {
    pub fn window(corner: Vec<i64>, sides: Vec<u64>) -> Result<Self> {
        check_sides(&sides)?;
        if corner.len() != sides.len() {
            return Err(Error::DimensionMismatch {
                expected: sides.len(),
                got: corner.len(),
            });
        }
        Ok(Geometry::Window { corner, sides })
    }

    /// Window of the given sides centered on the origin.
    pub fn centered_window(sides: Vec<u64>) -> Result<Self> {
        check_sides(&sides)?;
        let corner = sides.iter().map(|&s| -((s / 2) as i64)).collect();
        Ok(Geometry::Window { corner, sides })
    }

    pub fn torus(sides: Vec<u64>) -> Result<Self> {
        check_sides(&sides)?;
        Ok(Geometry::Torus { sides })
    }

    pub fn dimension(&self) -> usize {
        self.sides().len()
    }

    pub fn sides(&self) -> &[u64] {
        match self {
            Geometry::Window { sides, .. } | Geometry::Torus { sides } => sides,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Geometry::Torus { .. })
    }

    pub fn site_count(&self) -> u64 {
        self.sides().iter().product()
    }

    /// Smallest window coordinate per axis (for the torus the canonical range
    /// is `[0, side)`).
    pub fn lower_corner(&self) -> Vec<i64> {
        match self {
            Geometry::Window { corner, .. } => corner.clone(),
            Geometry::Torus { sides } => vec![0; sides.len()],
        }
    }

    /// Reduce coordinates to the canonical representative. Window coordinates
    /// are left untouched; torus coordinates wrap into `[0, side)`.
    pub fn canonical(&self, coords: &[i64]) -> Vec<i64> {
        match self {
            Geometry::Window { .. } => coords.to_vec(),
            Geometry::Torus { sides } => coords
                .iter()
                .zip(sides)
                .map(|(&c, &s)| c.rem_euclid(s as i64))
                .collect(),
        }
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        if coords.len() != self.dimension() {
            return false;
        }
        match self {
            Geometry::Window { corner, sides } => coords
                .iter()
                .zip(corner.iter().zip(sides))
                .all(|(&c, (&lo, &s))| c >= lo && c < lo + s as i64),
            Geometry::Torus { .. } => true,
        }
    }

    /// Row-major index of a contained site; coords[0] is the most significant
    /// axis. Torus coordinates are canonicalized first.
    pub fn index_of(&self, coords: &[i64]) -> Option<u64> {
        if !self.contains(coords) {
            return None;
        }
        let lower = self.lower_corner();
        let canon = self.canonical(coords);
        let mut idx: u64 = 0;
        for ((c, lo), s) in canon.iter().zip(lower).zip(self.sides()) {
            let rel = (c - lo) as u64;
            debug_assert!(rel < *s);
            idx = idx * s + rel;
        }
        Some(idx)
    }

    pub fn coords_of(&self, index: u64) -> Vec<i64> {
        let sides = self.sides();
        let lower = self.lower_corner();
        let mut rem = index;
        let mut out = vec![0i64; sides.len()];
        for axis in (0..sides.len()).rev() {
            let s = sides[axis];
            out[axis] = lower[axis] + (rem % s) as i64;
            rem /= s;
        }
        debug_assert_eq!(rem, 0, "index out of range");
        out
    }

    /// l-infinity distance respecting geometry: torus axes reduce differences
    /// to the minimal absolute residue.
    pub fn distance(&self, a: &[i64], b: &[i64]) -> Result<u64> {
        if a.len() != self.dimension() || b.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: if a.len() != self.dimension() { a.len() } else { b.len() },
            });
        }
        let mut best = 0u64;
        match self {
            Geometry::Window { .. } => {
                for (x, y) in a.iter().zip(b) {
                    best = best.max(x.abs_diff(*y));
                }
            }
            Geometry::Torus { sides } => {
                for ((x, y), &s) in a.iter().zip(b).zip(sides) {
                    let diff = (x - y).rem_euclid(s as i64) as u64;
                    best = best.max(diff.min(s - diff));
                }
            }
        }
        Ok(best)
    }

    /// Distance from a site to the outside of the region; `u64::MAX` on a
    /// torus, which has no boundary.
    pub fn boundary_distance(&self, coords: &[i64]) -> u64 {
        match self {
            Geometry::Window { corner, sides } => {
                let mut best = u64::MAX;
                for ((&c, &lo), &s) in coords.iter().zip(corner).zip(sides) {
                    let hi = lo + s as i64 - 1;
                    best = best.min((c - lo) as u64).min((hi - c) as u64);
                }
                best
            }
            Geometry::Torus { .. } => u64::MAX,
        }
    }

    /// Largest attainable l-infinity distance between two sites.
    pub fn diameter(&self) -> u64 {
        match self {
            Geometry::Window { sides, .. } => {
                sides.iter().map(|&s| s - 1).max().unwrap_or(0)
            }
            Geometry::Torus { sides } => sides.iter().map(|&s| s / 2).max().unwrap_or(0),
        }
    }
}

fn check_sides(sides: &[u64]) -> Result<()> {
    if sides.is_empty() {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if sides.contains(&0) {
        return Err(Error::invalid("all side lengths must be at least 1"));
    }
    let mut total: u64 = 1;
    for &s in sides {
        total = total
            .checked_mul(s)
            .ok_or_else(|| Error::invalid("region site count overflows u64"))?;
    }
    // Keep indices addressable and packed storage allocatable.
    if total > (1u64 << 40) {
        return Err(Error::invalid(format!(
            "region with {total} sites is too large to materialize"
        )));
    }
    Ok(())
}

/// l-infinity distance on the plain lattice (no wraparound).
pub fn linf_distance(x: &Site, y: &Site) -> Result<u64> {
    if x.dimension() != y.dimension() {
        return Err(Error::DimensionMismatch {
            expected: x.dimension(),
            got: y.dimension(),
        });
    }
    Ok(x.coords()
        .iter()
        .zip(y.coords())
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0))
}

/// Coordinatewise lexicographic comparison; a translation-invariant total
/// order on the plain lattice.
pub fn lex_compare(x: &Site, y: &Site) -> Result<Ordering> {
    if x.dimension() != y.dimension() {
        return Err(Error::DimensionMismatch {
            expected: x.dimension(),
            got: y.dimension(),
        });
    }
    Ok(x.coords().cmp(y.coords()))
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const COORD_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Keyed hash of (seed, site coordinates); the per-site randomness source.
#[inline]
pub(crate) fn site_hash(seed: u64, coords: &[i64]) -> u64 {
    let mut h = mix64(seed ^ GAMMA);
    for &c in coords {
        h = mix64(h.wrapping_add(GAMMA).wrapping_add(zigzag(c).wrapping_mul(COORD_SALT)));
    }
    h
}

/// Derive an independent stream seed from a root seed and a labelled index,
/// e.g. one sub-seed per Monte Carlo trial.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = mix64(seed ^ GAMMA);
    for b in label.as_bytes() {
        h = mix64(h.wrapping_add(GAMMA).wrapping_add(*b as u64));
    }
    mix64(h.wrapping_add(GAMMA).wrapping_add(index.wrapping_mul(COORD_SALT)))
}

/// Sequential deterministic random stream (counter construction).
#[derive(Clone, Debug)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform f64 in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Rejection to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

fn bias_threshold(bias: f64) -> u128 {
    debug_assert!((0.0..=1.0).contains(&bias));
    let t = bias * 18_446_744_073_709_551_616.0; // 2^64
    if t >= 18_446_744_073_709_551_616.0 {
        1u128 << 64
    } else if t <= 0.0 {
        0
    } else {
        t as u128
    }
}

/// Unbounded lazily-evaluated coin-flip field on `Z^d`. Window configurations
/// sample the same function, so bits agree wherever regions overlap.
#[derive(Clone, Debug)]
pub struct BitField {
    seed: u64,
    threshold: u128,
    bias: f64,
}

impl BitField {
    pub fn new(seed: u64, bias: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&bias) {
            return Err(Error::invalid(format!("bias {bias} outside [0, 1]")));
        }
        Ok(BitField {
            seed,
            threshold: bias_threshold(bias),
            bias,
        })
    }

    #[inline]
    pub fn bit(&self, coords: &[i64]) -> bool {
        (site_hash(self.seed, coords) as u128) < self.threshold
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

/// Packed bit storage, one bit per site, row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedBits {
    words: Vec<u64>,
    len: u64,
}

impl PackedBits {
    pub fn zeros(len: u64) -> Self {
        PackedBits {
            words: vec![0; len.div_ceil(64) as usize],
            len,
        }
    }

    #[inline]
    pub fn get(&self, index: u64) -> bool {
        (self.words[(index >> 6) as usize] >> (index & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, index: u64, value: bool) {
        let w = &mut self.words[(index >> 6) as usize];
        let mask = 1u64 << (index & 63);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub(crate) fn from_words(words: Vec<u64>, len: u64) -> Self {
        assert_eq!(words.len() as u64, len.div_ceil(64));
        PackedBits { words, len }
    }
}

/// A finite realization of the coin-flip field on a window or torus.
#[derive(Clone, Debug)]
pub struct Configuration {
    geometry: Geometry,
    bits: PackedBits,
    rng_seed: u64,
    bias: f64,
}

impl Configuration {
    /// Sample every site of the region independently with `P(bit = 1) = bias`.
    /// Deterministic in all inputs; generation order does not matter because
    /// each bit is a pure hash of (seed, site coordinates).
    pub fn generate(d: usize, geometry: Geometry, rng_seed: u64, bias: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if geometry.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: geometry.dimension(),
            });
        }
        check_sides(geometry.sides())?;
        let field = BitField::new(rng_seed, bias)?;
        let n = geometry.site_count();
        let n_words = n.div_ceil(64) as usize;
        let mut words = vec![0u64; n_words];
        words
            .par_iter_mut()
            .enumerate()
            .for_each(|(w, word)| {
                let base = (w as u64) << 6;
                let top = (base + 64).min(n);
                let mut acc = 0u64;
                for index in base..top {
                    let coords = geometry.coords_of(index);
                    if field.bit(&coords) {
                        acc |= 1u64 << (index - base);
                    }
                }
                *word = acc;
            });
        Ok(Configuration {
            geometry,
            bits: PackedBits::from_words(words, n),
            rng_seed,
            bias,
        })
    }

    /// Wrap externally produced bits (translated copies, balanced fixtures).
    pub fn from_bits(geometry: Geometry, bits: PackedBits, rng_seed: u64, bias: f64) -> Self {
        assert_eq!(geometry.site_count(), bits.len());
        Configuration {
            geometry,
            bits,
            rng_seed,
            bias,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn site_count(&self) -> u64 {
        self.bits.len()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    #[inline]
    pub fn bit(&self, index: u64) -> bool {
        self.bits.get(index)
    }

    pub fn bit_at(&self, coords: &[i64]) -> Option<bool> {
        self.geometry.index_of(coords).map(|i| self.bits.get(i))
    }

    pub fn bits(&self) -> &PackedBits {
        &self.bits
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.count_ones()
    }

    pub fn ones_density(&self) -> f64 {
        self.count_ones() as f64 / self.site_count() as f64
    }

    /// Shift the configuration by `z`: the bit at `x` in the result equals the
    /// bit at `x - z` in the input. Exact translation needs periodicity, so
    /// windows are rejected.
    pub fn translate(&self, z: &[i64]) -> Result<Configuration> {
        if !self.geometry.is_torus() {
            return Err(Error::UnsupportedGeometry(
                "translate requires torus geometry".into(),
            ));
        }
        if z.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: z.len(),
            });
        }
        let n = self.site_count();
        let mut out = PackedBits::zeros(n);
        for index in 0..n {
            let coords = self.geometry.coords_of(index);
            let src: Vec<i64> = coords.iter().zip(z).map(|(c, dz)| c - dz).collect();
            let src_idx = self
                .geometry
                .index_of(&src)
                .expect("torus contains every site");
            out.set(index, self.bits.get(src_idx));
        }
        Ok(Configuration {
            geometry: self.geometry.clone(),
            bits: out,
            rng_seed: self.rng_seed,
            bias: self.bias,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_generation_is_reproducible() {
        let g = Geometry::torus(vec![8]).unwrap();
        let a = Configuration::generate(1, g.clone(), 42, 0.5).unwrap();
        let b = Configuration::generate(1, g, 42, 0.5).unwrap();
        assert_eq!(a.bits(), b.bits());
    }

    #[test]
    fn degenerate_bias_gives_constant_bits() {
        let g = Geometry::torus(vec![4]).unwrap();
        let c = Configuration::generate(1, g, 7, 1.0).unwrap();
        assert_eq!(c.count_ones(), 4);
        let g = Geometry::torus(vec![4]).unwrap();
        let c = Configuration::generate(1, g, 7, 0.0).unwrap();
        assert_eq!(c.count_ones(), 0);
    }

    #[test]
    fn ones_density_is_within_binomial_bounds() {
        let g = Geometry::torus(vec![1024, 1024]).unwrap();
        let c = Configuration::generate(2, g, 2024, 0.5).unwrap();
        let n = c.site_count() as f64;
        let sigma = (0.25 / n).sqrt();
        let density = c.ones_density();
        assert!(
            (density - 0.5).abs() <= 4.0 * sigma,
            "density {density} outside 0.5 +/- {}",
            4.0 * sigma
        );
    }

    #[test]
    fn window_and_field_bits_agree() {
        let field = BitField::new(99, 0.5).unwrap();
        let g = Geometry::window(vec![-3, 5], vec![7, 4]).unwrap();
        let c = Configuration::generate(2, g.clone(), 99, 0.5).unwrap();
        for index in 0..c.site_count() {
            let coords = g.coords_of(index);
            assert_eq!(c.bit(index), field.bit(&coords));
        }
    }

    #[test]
    fn linf_examples() {
        let x = Site::new(vec![3, -1]);
        let y = Site::new(vec![0, 4]);
        assert_eq!(linf_distance(&x, &y).unwrap(), 5);
        assert_eq!(linf_distance(&x, &x).unwrap(), 0);
        let t = Geometry::torus(vec![10]).unwrap();
        assert_eq!(t.distance(&[9], &[0]).unwrap(), 1);
    }

    #[test]
    fn lex_examples() {
        let a = Site::new(vec![0, 5]);
        let b = Site::new(vec![1, -9]);
        assert_eq!(lex_compare(&a, &b).unwrap(), Ordering::Less);
        assert_eq!(lex_compare(&b, &b).unwrap(), Ordering::Equal);
        let shift = [7, 7];
        assert_eq!(
            lex_compare(&a.translate(&shift), &b.translate(&shift)).unwrap(),
            Ordering::Less
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Site::new(vec![0, 5]);
        let b = Site::new(vec![1]);
        assert!(lex_compare(&a, &b).is_err());
        assert!(linf_distance(&a, &b).is_err());
    }

    #[test]
    fn translate_shifts_bits() {
        let g = Geometry::torus(vec![4]).unwrap();
        let mut bits = PackedBits::zeros(4);
        bits.set(0, true); // 1000
        let c = Configuration::from_bits(g, bits, 0, 0.5);
        let t = c.translate(&[1]).unwrap();
        let got: Vec<bool> = (0..4).map(|i| t.bit(i)).collect();
        assert_eq!(got, vec![false, true, false, false]); // 0100

        let id = c.translate(&[0]).unwrap();
        assert_eq!(id.bits(), c.bits());
        let full = c.translate(&[4]).unwrap();
        assert_eq!(full.bits(), c.bits());
    }

    #[test]
    fn window_translate_is_rejected() {
        let g = Geometry::window(vec![0], vec![4]).unwrap();
        let c = Configuration::generate(1, g, 1, 0.5).unwrap();
        assert!(matches!(
            c.translate(&[1]),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn row_major_index_round_trip() {
        let g = Geometry::window(vec![-2, 3, 0], vec![3, 4, 5]).unwrap();
        for index in 0..g.site_count() {
            let coords = g.coords_of(index);
            assert_eq!(g.index_of(&coords), Some(index));
        }
        let t = Geometry::torus(vec![3, 5]).unwrap();
        assert_eq!(t.index_of(&[-1, 7]), t.index_of(&[2, 2]));
    }

    #[test]
    fn boundary_distance_window() {
        let g = Geometry::window(vec![0, 0], vec![10, 10]).unwrap();
        assert_eq!(g.boundary_distance(&[0, 5]), 0);
        assert_eq!(g.boundary_distance(&[5, 4]), 4);
        assert_eq!(g.boundary_distance(&[9, 9]), 0);
    }
}
