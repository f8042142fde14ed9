//! Meshalkin bracket matching in one dimension and its lift to `Z^d`.
//!
//! The one-dimensional rule repeatedly matches a zero immediately to the left
//! of a one and removes the pair; the fixed point is the classical balanced
//! bracket matching with `0` as an opening and `1` as a closing bracket. The
//! reduction is confluent, so the pair set does not depend on reduction
//! order. Lifting to `d` dimensions applies the rule independently to every
//! line parallel to a chosen axis, which leaves the displacement law
//! unchanged.
//!
//! A site's displacement has the law of the first passage to -1 of a simple
//! symmetric walk over the following bits, so its survival decays like
//! `r^{-1/2}`; the tail harness targets that exponent.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Geometry, Site};

/// Stage label for pairs formed by the one-dimensional bracket rule.
pub const MESHALKIN_STAGE: u16 = 0;

/// Sentinel in `partner` for an unmatched site.
const NONE: i64 = -1;

/// Line topology for the one-dimensional rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineTopology {
    Line,
    Cycle,
}

/// A partial involution pairing heads (bit 1) with tails (bit 0).
///
/// Storage is index-based over the sites of one region. Sites without a
/// partner were left unmatched by finite truncation and are the censored set.
#[derive(Clone, Debug)]
pub struct Matching {
    geometry: Geometry,
    partner: Vec<i64>,
    stage: Vec<u16>,
}

impl Matching {
    pub fn unmatched(geometry: Geometry) -> Self {
        let n = geometry.site_count() as usize;
        Matching {
            geometry,
            partner: vec![NONE; n],
            stage: vec![0; n],
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn site_count(&self) -> u64 {
        self.partner.len() as u64
    }

    /// Record a pair formed at the given stage. Both sites must be unmatched.
    pub fn pair(&mut self, a: u64, b: u64, stage: u16) {
        debug_assert_ne!(a, b);
        debug_assert_eq!(self.partner[a as usize], NONE, "site already matched");
        debug_assert_eq!(self.partner[b as usize], NONE, "site already matched");
        self.partner[a as usize] = b as i64;
        self.partner[b as usize] = a as i64;
        self.stage[a as usize] = stage;
        self.stage[b as usize] = stage;
    }

    pub fn partner_index(&self, index: u64) -> Option<u64> {
        let p = self.partner[index as usize];
        (p >= 0).then_some(p as u64)
    }

    pub fn partner_site(&self, x: &Site) -> Option<Site> {
        let index = self.geometry.index_of(x.coords())?;
        self.partner_index(index)
            .map(|p| Site::new(self.geometry.coords_of(p)))
    }

    /// Stage at which the site was paired; meaningless for unmatched sites.
    pub fn stage(&self, index: u64) -> u16 {
        self.stage[index as usize]
    }

    /// A site is censored when finite truncation left it unmatched.
    pub fn is_censored(&self, index: u64) -> bool {
        self.partner[index as usize] == NONE
    }

    pub fn censored_count(&self) -> u64 {
        self.partner.iter().filter(|&&p| p == NONE).count() as u64
    }

    pub fn pair_count(&self) -> u64 {
        (self.partner.len() as u64 - self.censored_count()) / 2
    }

    /// Matched pairs as (smaller index, larger index, stage).
    pub fn pairs(&self) -> impl Iterator<Item = (u64, u64, u16)> + '_ {
        self.partner.iter().enumerate().filter_map(|(i, &p)| {
            if p >= 0 && (i as u64) < p as u64 {
                Some((i as u64, p as u64, self.stage[i]))
            } else {
                None
            }
        })
    }

    /// l-infinity displacement from a matched site to its partner, respecting
    /// the geometry.
    pub fn displacement_of(&self, index: u64) -> Option<u64> {
        let p = self.partner_index(index)?;
        let a = self.geometry.coords_of(index);
        let b = self.geometry.coords_of(p);
        Some(self.geometry.distance(&a, &b).expect("same geometry"))
    }

    /// Check the involution and opposite-bits invariants against bits.
    pub fn validate(&self, c: &Configuration) -> Result<()> {
        if c.site_count() != self.site_count() {
            return Err(Error::invalid("matching/configuration size mismatch"));
        }
        for (i, &p) in self.partner.iter().enumerate() {
            if p < 0 {
                continue;
            }
            let p = p as usize;
            if self.partner[p] != i as i64 {
                return Err(Error::InternalConsistency(format!(
                    "partner map is not an involution at index {i}"
                )));
            }
            if c.bit(i as u64) == c.bit(p as u64) {
                return Err(Error::InternalConsistency(format!(
                    "pair ({i}, {p}) does not join opposite bits"
                )));
            }
        }
        Ok(())
    }

    /// CSV dump: site coordinates, partner coordinates (empty when censored),
    /// stage, censored flag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dimension();
        let mut header = Vec::new();
        for axis in 1..=d {
            header.push(format!("x{axis}"));
        }
        for axis in 1..=d {
            header.push(format!("px{axis}"));
        }
        header.push("stage".into());
        header.push("censored".into());
        writeln!(w, "{}", header.join(","))?;
        for index in 0..self.site_count() {
            let coords = self.geometry.coords_of(index);
            let mut row: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
            match self.partner_index(index) {
                Some(p) => {
                    let pc = self.geometry.coords_of(p);
                    row.extend(pc.iter().map(|c| c.to_string()));
                    row.push(self.stage[index as usize].to_string());
                    row.push("0".into());
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), d));
                    row.push(String::new());
                    row.push("1".into());
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn line_geometry(len: usize, topology: LineTopology) -> Geometry {
    // An empty input degenerates to a single unmatched site.
    let len = len.max(1) as u64;
    match topology {
        LineTopology::Line => Geometry::window(vec![0], vec![len]).unwrap(),
        LineTopology::Cycle => Geometry::torus(vec![len]).unwrap(),
    }
}

/// Pair positions of one line by the bracket rule; `bits[i]` is the coin at
/// position `i`. Returns (tail position, head position) pairs.
pub fn match_line_positions(bits: &[bool], topology: LineTopology) -> Vec<(u32, u32)> {
    let n = bits.len();
    if n == 0 {
        return Vec::new();
    }
    let start = match topology {
        LineTopology::Line => 0,
        LineTopology::Cycle => {
            // Cut the cycle where the (+1 for 0, -1 for 1) prefix walk first
            // attains its minimum; the linear reduction of that rotation is
            // the cyclic fixed point.
            let mut walk = 0i64;
            let mut min = 0i64;
            let mut arg = 0usize;
            for (i, &b) in bits.iter().enumerate() {
                walk += if b { -1 } else { 1 };
                if walk < min {
                    min = walk;
                    arg = i + 1;
                }
            }
            arg % n
        }
    };
    let mut pairs = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    for offset in 0..n {
        let pos = match topology {
            LineTopology::Line => offset,
            LineTopology::Cycle => (start + offset) % n,
        };
        if bits[pos] {
            if let Some(zero) = stack.pop() {
                pairs.push((zero, pos as u32));
            }
        } else {
            stack.push(pos as u32);
        }
    }
    pairs
}

/// One-dimensional Meshalkin matching of a finite 0/1 line or cycle.
pub fn meshalkin_match_line(bits: &[bool], topology: LineTopology) -> Matching {
    let mut m = Matching::unmatched(line_geometry(bits.len(), topology));
    for (a, b) in match_line_positions(bits, topology) {
        m.pair(a as u64, b as u64, MESHALKIN_STAGE);
    }
    m
}

/// Independent quadratic oracle: repeatedly scan the surviving sequence for a
/// zero immediately left of a one, match and delete, until a full pass finds
/// nothing. Implemented over a doubly linked list, deliberately unlike the
/// stack reduction.
pub fn naive_bracket_oracle(bits: &[bool], topology: LineTopology) -> Matching {
    let n = bits.len();
    let mut m = Matching::unmatched(line_geometry(n, topology));
    if n == 0 {
        return m;
    }
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut alive = vec![true; n];
    let mut head = 0usize;
    let mut alive_count = n;

    loop {
        let mut matched_any = false;
        if alive_count < 2 {
            break;
        }
        let mut i = head;
        let mut steps = 0usize;
        while steps < alive_count {
            let j = next[i];
            let wraps = j <= i;
            let adjacency_ok = match topology {
                LineTopology::Line => !wraps,
                LineTopology::Cycle => alive_count >= 2,
            };
            if adjacency_ok && !bits[i] && bits[j] && i != j {
                m.pair(i as u64, j as u64, MESHALKIN_STAGE);
                alive[i] = false;
                alive[j] = false;
                alive_count -= 2;
                let before = prev[i];
                let after = next[j];
                next[before] = after;
                prev[after] = before;
                if head == i || head == j {
                    head = after;
                }
                matched_any = true;
                if alive_count == 0 {
                    break;
                }
                i = after;
                // Restart step counting; the sequence changed.
                steps = 0;
                continue;
            }
            i = j;
            steps += 1;
        }
        if !matched_any {
            break;
        }
    }
    m
}

/// Lift the one-dimensional rule to `Z^d` by matching every line parallel to
/// the given axis independently. `axis` is 1-based; lines are cycles on a
/// torus and open lines on a window.
pub fn meshalkin_lift(c: &Configuration, axis: usize) -> Result<Matching> {
    let d = c.dimension();
    if axis == 0 || axis > d {
        return Err(Error::invalid(format!(
            "axis {axis} out of range 1..={d}"
        )));
    }
    let axis = axis - 1;
    let geometry = c.geometry().clone();
    let topology = if geometry.is_torus() {
        LineTopology::Cycle
    } else {
        LineTopology::Line
    };
    let sides = geometry.sides().to_vec();
    let len = sides[axis] as usize;
    let lower = geometry.lower_corner();

    let mut m = Matching::unmatched(geometry.clone());
    // Enumerate lines by the transverse coordinates.
    let mut transverse_axes: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
    transverse_axes.sort_unstable();
    let line_count: u64 = transverse_axes.iter().map(|&a| sides[a]).product();

    let mut bits = vec![false; len];
    let mut indices = vec![0u64; len];
    for line in 0..line_count {
        let mut rem = line;
        let mut base = lower.clone();
        for &a in transverse_axes.iter().rev() {
            base[a] = lower[a] + (rem % sides[a]) as i64;
            rem /= sides[a];
        }
        for (pos, (bit, slot)) in bits.iter_mut().zip(indices.iter_mut()).enumerate() {
            let mut coords = base.clone();
            coords[axis] = lower[axis] + pos as i64;
            let index = geometry.index_of(&coords).expect("line inside region");
            *bit = c.bit(index);
            *slot = index;
        }
        for (a, b) in match_line_positions(&bits, topology) {
            m.pair(indices[a as usize], indices[b as usize], MESHALKIN_STAGE);
        }
    }
    Ok(m)
}
