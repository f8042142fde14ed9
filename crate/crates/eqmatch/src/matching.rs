//! The staged matching rule built from a clump hierarchy.
//!
//! Stage `k` pairs, inside every level-`k` clump, the not-yet-matched heads
//! with the not-yet-matched tails: both groups are sorted by a
//! translation-equivariant site order and paired index by index, so each
//! stage is maximal and pairs never change later. After the top level a
//! cleanup stage pairs survivors across the whole region; those pairs exist
//! only because of finite truncation and are censored for tail statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clumping::ClumpHierarchy;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site};
use crate::meshalkin::Matching;
use crate::order::SiteOrder;

/// `bad_level` value for sites only matched at cleanup (or never): the site
/// stays `k`-bad for every real level `k`.
pub const NEVER_MATCHED: u16 = u16::MAX;

/// A matching together with the stage bookkeeping of the staged rule.
#[derive(Clone, Debug)]
pub struct StagedMatching {
    matching: Matching,
    /// Smallest level at which the site was matched; `NEVER_MATCHED` when the
    /// site was only paired by cleanup or left unmatched.
    bad_level: Vec<u16>,
    k_max: u32,
    stage_pairs: Vec<u64>,
    cleanup_pairs: u64,
}

/// Displacement of a site under the rule; cleanup pairs and unmatched sites
/// carry only a lower bound (distance to the recorded partner or to the
/// window boundary, whichever is smaller).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Displacement {
    Matched(u64),
    Censored { lower_bound: u64 },
}

impl StagedMatching {
    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn cleanup_stage(&self) -> u16 {
        (self.k_max + 1) as u16
    }

    pub fn bad_level(&self, index: u64) -> u16 {
        self.bad_level[index as usize]
    }

    /// A site is `k`-bad when it was not matched within its level-`k` clump.
    pub fn k_bad(&self, index: u64, k: u32) -> bool {
        self.bad_level[index as usize] as u32 > k
    }

    pub fn k_bad_count(&self, k: u32) -> u64 {
        (0..self.matching.site_count())
            .filter(|&i| self.k_bad(i, k))
            .count() as u64
    }

    /// Pairs formed at each stage 1..=k_max.
    pub fn stage_pair_counts(&self) -> &[u64] {
        &self.stage_pairs
    }

    pub fn cleanup_pair_count(&self) -> u64 {
        self.cleanup_pairs
    }

    pub fn unmatched_count(&self) -> u64 {
        self.matching.censored_count()
    }

    pub fn displacement(&self, x: &Site) -> Result<Displacement> {
        let geometry = self.matching.geometry();
        let index = geometry
            .index_of(x.coords())
            .ok_or_else(|| Error::invalid(format!("site {x} outside region")))?;
        self.displacement_by_index(index)
    }

    pub fn displacement_by_index(&self, index: u64) -> Result<Displacement> {
        let geometry = self.matching.geometry();
        let coords = geometry.coords_of(index);
        let boundary = geometry.boundary_distance(&coords);
        match self.matching.partner_index(index) {
            Some(_) if self.matching.stage(index) <= self.k_max as u16 => Ok(
                Displacement::Matched(self.matching.displacement_of(index).unwrap()),
            ),
            Some(_) => {
                let to_partner = self.matching.displacement_of(index).unwrap();
                Ok(Displacement::Censored {
                    lower_bound: to_partner.min(boundary),
                })
            }
            None => {
                if self.bad_level[index as usize] != NEVER_MATCHED {
                    return Err(Error::InternalConsistency(format!(
                        "site index {index} unmatched but has bad level {}",
                        self.bad_level[index as usize]
                    )));
                }
                Ok(Displacement::Censored {
                    lower_bound: boundary.min(geometry.diameter()),
                })
            }
        }
    }

    /// Summary payload for reports.
    pub fn summary(&self) -> MatchSummary {
        MatchSummary {
            n_sites: self.matching.site_count(),
            n_pairs: self.matching.pair_count(),
            stage_pairs: self.stage_pairs.clone(),
            cleanup_pairs: self.cleanup_pairs,
            censored: self.unmatched_count() + 2 * self.cleanup_pairs,
            unmatched: self.unmatched_count(),
        }
    }

    /// CSV dump with the extra bad_level column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let geometry = self.matching.geometry();
        let d = geometry.dimension();
        let mut header = Vec::new();
        for axis in 1..=d {
            header.push(format!("x{axis}"));
        }
        for axis in 1..=d {
            header.push(format!("px{axis}"));
        }
        header.push("stage".into());
        header.push("censored".into());
        header.push("bad_level".into());
        writeln!(w, "{}", header.join(","))?;
        for index in 0..self.matching.site_count() {
            let coords = geometry.coords_of(index);
            let mut row: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
            match self.matching.partner_index(index) {
                Some(p) => {
                    row.extend(geometry.coords_of(p).iter().map(|c| c.to_string()));
                    row.push(self.matching.stage(index).to_string());
                    let cleanup = self.matching.stage(index) > self.k_max as u16;
                    row.push(if cleanup { "1" } else { "0" }.into());
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), d));
                    row.push(String::new());
                    row.push("1".into());
                }
            }
            let bl = self.bad_level[index as usize];
            row.push(if bl == NEVER_MATCHED {
                "inf".into()
            } else {
                bl.to_string()
            });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatchSummary {
    pub n_sites: u64,
    pub n_pairs: u64,
    pub stage_pairs: Vec<u64>,
    pub cleanup_pairs: u64,
    /// Sites excluded from tail statistics: cleanup-paired plus unmatched.
    pub censored: u64,
    pub unmatched: u64,
}

/// Head/tail imbalance of one clump: `zeta` sums `2 bit - 1` over members.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClumpDiscrepancy {
    pub clump: u32,
    pub size: u64,
    pub zeta: i64,
}

struct Replay {
    parent: Vec<u32>,
}

impl Replay {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Run the staged rule over the hierarchy. Pairs are deterministic and, on a
/// torus, exactly equivariant: the site order is anchored to the
/// configuration itself.
pub fn build_matching(c: &Configuration, h: &ClumpHierarchy) -> Result<StagedMatching> {
    if c.site_count() != h.site_count() {
        return Err(Error::invalid(
            "hierarchy was built over a different site set",
        ));
    }
    let geometry = c.geometry().clone();
    let order = SiteOrder::for_configuration(c);
    let n = c.site_count();
    let k_max = h.k_max();
    let cleanup_stage = (k_max + 1) as u16;

    let mut matching = Matching::unmatched(geometry.clone());
    let mut bad_level = vec![NEVER_MATCHED; n as usize];
    let mut stage_pairs = vec![0u64; k_max as usize];
    let mut cleanup_pairs = 0u64;

    // (order key, site) for every still-unmatched site.
    let mut unmatched: Vec<(u64, u32)> = (0..n)
        .map(|i| (order.key(&geometry, i), i as u32))
        .collect();

    let mut replay = Replay {
        parent: (0..n as u32).collect(),
    };
    let merges = h.merges();
    let mut cursor = 0usize;

    let mut scratch: Vec<(u32, u64, u32)> = Vec::new(); // (root, key, site)
    for stage in 1..=cleanup_stage {
        while cursor < merges.len() && merges[cursor].0 <= stage {
            let (_, a, b) = merges[cursor];
            replay.union(a, b);
            cursor += 1;
        }
        scratch.clear();
        scratch.extend(
            unmatched
                .iter()
                .map(|&(key, site)| (replay.find(site), key, site)),
        );
        scratch.sort_unstable();

        let mut start = 0usize;
        while start < scratch.len() {
            let root = scratch[start].0;
            let mut end = start;
            while end < scratch.len() && scratch[end].0 == root {
                end += 1;
            }
            // Heads and tails in order; scratch is sorted by key within the
            // clump already.
            let mut heads: Vec<u32> = Vec::new();
            let mut tails: Vec<u32> = Vec::new();
            for &(_, _, site) in &scratch[start..end] {
                if c.bit(site as u64) {
                    heads.push(site);
                } else {
                    tails.push(site);
                }
            }
            let pairs = heads.len().min(tails.len());
            for i in 0..pairs {
                matching.pair(heads[i] as u64, tails[i] as u64, stage);
                if stage < cleanup_stage {
                    bad_level[heads[i] as usize] = stage;
                    bad_level[tails[i] as usize] = stage;
                    stage_pairs[stage as usize - 1] += 1;
                } else {
                    cleanup_pairs += 1;
                }
            }
            start = end;
        }
        unmatched.retain(|&(_, site)| matching.partner_index(site as u64).is_none());
    }

    Ok(StagedMatching {
        matching,
        bad_level,
        k_max,
        stage_pairs,
        cleanup_pairs,
    })
}

/// Per-clump head/tail imbalances at one level, computed from the bits alone
/// (no matching data).
pub fn clump_discrepancies(
    c: &Configuration,
    h: &ClumpHierarchy,
    k: u32,
) -> Result<Vec<ClumpDiscrepancy>> {
    if c.site_count() != h.site_count() {
        return Err(Error::invalid(
            "hierarchy was built over a different site set",
        ));
    }
    if k < 1 || k > h.k_max() {
        return Err(Error::invalid(format!(
            "level {k} outside 1..={}",
            h.k_max()
        )));
    }
    let part = h.partition_at_level(k);
    let mut acc: std::collections::HashMap<u32, (u64, i64)> = std::collections::HashMap::new();
    for (site, &clump) in part.iter().enumerate() {
        let entry = acc.entry(clump).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += if c.bit(site as u64) { 1 } else { -1 };
    }
    let mut out: Vec<ClumpDiscrepancy> = acc
        .into_iter()
        .map(|(clump, (size, zeta))| ClumpDiscrepancy { clump, size, zeta })
        .collect();
    out.sort_unstable_by_key(|d| d.clump);
    Ok(out)
}
