//! Translation-equivariant total orders on sites.
//!
//! Window matchings sort sites by plain lexicographic order, which is
//! invariant under lattice shifts. On a torus plain lex order is *not*
//! shift-invariant (coordinates wrap), so the order is anchored: a canonical
//! anchor site is chosen from the configuration by minimizing the bit string
//! read in row-major offset order, and sites compare by their offset from
//! that anchor. Shifting the configuration shifts the anchor with it, so the
//! induced order is exactly equivariant whenever the configuration is
//! aperiodic (ties are broken by smallest anchor coordinates; at bias 1/2 a
//! periodic configuration has vanishing probability).

use crate::lattice::{Configuration, Geometry};

/// A total order on the sites of one region, queried through integer keys:
/// sorting sites by `key` sorts them in the order.
#[derive(Clone, Debug)]
pub struct SiteOrder {
    kind: OrderKind,
}

#[derive(Clone, Debug)]
enum OrderKind {
    /// Row-major index order == lexicographic coordinate order.
    Lex,
    /// Lex order of (site - anchor) mod sides.
    Anchored { anchor: Vec<i64> },
}

impl SiteOrder {
    /// Plain lexicographic order (windows).
    pub fn lex() -> Self {
        SiteOrder { kind: OrderKind::Lex }
    }

    /// Order adapted to the configuration's geometry: lex on windows,
    /// anchored lex on tori.
    pub fn for_configuration(c: &Configuration) -> Self {
        match c.geometry() {
            Geometry::Window { .. } => SiteOrder::lex(),
            Geometry::Torus { .. } => SiteOrder {
                kind: OrderKind::Anchored {
                    anchor: canonical_anchor(c),
                },
            },
        }
    }

    /// Sort key for the site with the given row-major index. Smaller key
    /// means earlier in the order.
    pub fn key(&self, geometry: &Geometry, index: u64) -> u64 {
        match &self.kind {
            OrderKind::Lex => index,
            OrderKind::Anchored { anchor } => {
                let coords = geometry.coords_of(index);
                let rel: Vec<i64> = coords.iter().zip(anchor).map(|(c, a)| c - a).collect();
                geometry
                    .index_of(&rel)
                    .expect("torus contains every site")
            }
        }
    }

    pub fn anchor(&self) -> Option<&[i64]> {
        match &self.kind {
            OrderKind::Lex => None,
            OrderKind::Anchored { anchor } => Some(anchor),
        }
    }
}

/// Find the anchor site minimizing the configuration bits read in row-major
/// offset order starting from that site (wrapping). Candidates are refined
/// offset by offset; random configurations resolve after a few rounds.
fn canonical_anchor(c: &Configuration) -> Vec<i64> {
    let geometry = c.geometry();
    let n = c.site_count();
    let mut candidates: Vec<u64> = (0..n).collect();
    for offset_index in 0..n {
        if candidates.len() == 1 {
            break;
        }
        let offset = geometry.coords_of(offset_index);
        let mut any_zero = false;
        let mut bits = Vec::with_capacity(candidates.len());
        for &cand in &candidates {
            let base = geometry.coords_of(cand);
            let shifted: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            let idx = geometry
                .index_of(&shifted)
                .expect("torus contains every site");
            let bit = c.bit(idx);
            any_zero |= !bit;
            bits.push(bit);
        }
        if any_zero {
            let mut keep = Vec::with_capacity(candidates.len());
            for (cand, bit) in candidates.iter().zip(&bits) {
                if !bit {
                    keep.push(*cand);
                }
            }
            candidates = keep;
        }
    }
    // Remaining ties mean the configuration is periodic; take the smallest
    // representative.
    let best = *candidates.iter().min().expect("at least one candidate");
    geometry.coords_of(best)
}
