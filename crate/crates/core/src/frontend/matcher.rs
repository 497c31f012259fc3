//! Mutual-best Hamming matching with a two-sided ratio test.

use super::{Descriptor, FeatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Copy)]
struct Best {
    index: usize,
    distance: u32,
    second: u32,
}

impl Best {
    const EMPTY: Best = Best {
        index: usize::MAX,
        distance: u32::MAX,
        second: u32::MAX,
    };

    /// Candidates arrive in increasing index order, so strict comparison
    /// keeps the lowest index among equal distances.
    fn offer(&mut self, index: usize, d: u32) {
        if d < self.distance {
            self.second = self.distance;
            self.distance = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes_ratio(&self, ratio: f64) -> bool {
        self.second == u32::MAX || f64::from(self.distance) < ratio * f64::from(self.second)
    }
}

/// Pairs `(i, j)` where `j` is the nearest neighbour of `i` and vice versa,
/// the distance is at most `max_distance`, and the nearest is below
/// `ratio ×` the second nearest in both directions. Sorted by `a`.
///
/// Checking the ratio from both sides makes `match(a, b)` and `match(b, a)`
/// produce the same pairs.
pub fn match_features(a: &FeatureSet, b: &FeatureSet, max_distance: u32, ratio: f64) -> Vec<Match> {
    match_descriptors(&a.descriptors, &b.descriptors, max_distance, ratio)
}

pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], max_distance: u32, ratio: f64) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut rows = vec![Best::EMPTY; a.len()];
    let mut cols = vec![Best::EMPTY; b.len()];
    for (i, da) in a.iter().enumerate() {
        for (j, db) in b.iter().enumerate() {
            let d = da.distance(db);
            rows[i].offer(j, d);
            cols[j].offer(i, d);
        }
    }
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let c = &cols[r.index];
            (c.index == i && r.distance <= max_distance && r.passes_ratio(ratio) && c.passes_ratio(ratio))
                .then_some(Match {
                    a: i,
                    b: r.index,
                    distance: r.distance,
                })
        })
        .collect()
}
