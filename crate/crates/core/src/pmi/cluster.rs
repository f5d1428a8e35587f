//! Bottom-up single-linkage clustering and the outlier rule applied to its
//! final split.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Square, symmetric, non-negative matrix of pairwise distances with a zero
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    size: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps a row-major `size x size` buffer.
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::invalid(format!(
                "distance buffer holds {} entries, expected {}",
                data.len(),
                size * size
            )));
        }
        for i in 0..size {
            if data[i * size + i] != 0.0 {
                return Err(Error::invalid(format!(
                    "diagonal entry ({i}, {i}) is not zero"
                )));
            }
            for j in 0..size {
                let v = data[i * size + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) = {v} is not a finite non-negative distance"
                    )));
                }
                if v != data[j * size + i] {
                    return Err(Error::invalid(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(Self { size, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::invalid(format!(
                "row of length {} in a {size}x{size} matrix",
                r.len()
            )));
        }
        Self::new(size, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.size)
    }
}

/// One agglomeration step. `left` is the cluster with the smaller minimum
/// member; both member lists are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    leaves: usize,
    merges: Vec<Merge>,
}

impl ClusterTree {
    /// Checks that `merges` is a complete agglomeration of `leaves` leaves.
    pub fn new(leaves: usize, merges: Vec<Merge>) -> Result<Self> {
        if leaves < 2 || merges.len() != leaves - 1 {
            return Err(Error::invalid(format!(
                "{} merges cannot join {leaves} leaves",
                merges.len()
            )));
        }
        let last = merges.last().expect("at least one merge");
        let mut seen = vec![false; leaves];
        for &leaf in last.left.iter().chain(&last.right) {
            if leaf >= leaves || std::mem::replace(&mut seen[leaf], true) {
                return Err(Error::invalid("final clusters do not partition the leaves"));
            }
        }
        if seen.contains(&false) {
            return Err(Error::invalid("final clusters do not cover every leaf"));
        }
        Ok(Self { leaves, merges })
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// `(G1*, G2*)`: the two clusters joined by the last merge.
    pub fn final_clusters(&self) -> (&[usize], &[usize]) {
        let last = self.merges.last().expect("tree has m - 1 >= 1 merges");
        (&last.left, &last.right)
    }

    /// Height of the first merge that absorbs `leaf`. Under single linkage
    /// this is the leaf's nearest-neighbour distance.
    pub fn isolation(&self, leaf: usize) -> f64 {
        self.merges
            .iter()
            .find(|m| m.left.contains(&leaf) || m.right.contains(&leaf))
            .map_or(0.0, |m| m.distance)
    }
}

/// Single-linkage agglomeration over a distance matrix.
///
/// Each step merges the closest pair of active clusters, where the distance
/// between clusters is the minimum distance across their members. Ties go to
/// the pair with the lexicographically smallest
/// `(min member of A, min member of B)`.
pub fn agglomerative_cluster(dist: &DistanceMatrix) -> Result<ClusterTree> {
    let m = dist.size();
    if m < 2 {
        return Err(Error::invalid(format!(
            "clustering needs at least 2 objects, got {m}"
        )));
    }
    // Active clusters are kept ordered by their minimum member, so scanning
    // (a, b) with a < b visits candidate pairs in tie-break order.
    let mut clusters: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let mut link: Vec<Vec<f64>> = dist.rows().map(<[f64]>::to_vec).collect();
    let mut merges = Vec::with_capacity(m - 1);

    while clusters.len() > 1 {
        let (mut best_a, mut best_b) = (0, 1);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if link[a][b] < link[best_a][best_b] {
                    best_a = a;
                    best_b = b;
                }
            }
        }
        let distance = link[best_a][best_b];
        let right = clusters.remove(best_b);
        let left = clusters[best_a].clone();
        merges.push(Merge {
            left: left.clone(),
            right: right.clone(),
            distance,
        });

        // Single-linkage update: D(A u B, C) = min(D(A, C), D(B, C)).
        for c in 0..link.len() {
            if c != best_a && c != best_b {
                let merged = link[best_a][c].min(link[best_b][c]);
                link[best_a][c] = merged;
                link[c][best_a] = merged;
            }
        }
        link.remove(best_b);
        for row in &mut link {
            row.remove(best_b);
        }

        let cluster = &mut clusters[best_a];
        cluster.extend(right);
        cluster.sort_unstable();
    }
    ClusterTree::new(m, merges)
}

/// Picks the mini-dataset judged to be the training member.
///
/// The smaller of the two final clusters is abnormal. When both have the
/// same size, the abnormal one is the cluster holding the most isolated leaf
/// (largest [`ClusterTree::isolation`]); if that also ties, `G1*` is used.
/// A singleton abnormal cluster yields its member; a larger one yields a
/// member drawn uniformly with `seed`.
pub fn select_outlier(tree: &ClusterTree, seed: u64) -> usize {
    let (g1, g2) = tree.final_clusters();
    let abnormal = match g1.len().cmp(&g2.len()) {
        std::cmp::Ordering::Less => g1,
        std::cmp::Ordering::Greater => g2,
        std::cmp::Ordering::Equal => {
            let most_isolated = |g: &[usize]| {
                g.iter()
                    .map(|&leaf| tree.isolation(leaf))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            if most_isolated(g2) > most_isolated(g1) {
                g2
            } else {
                g1
            }
        }
    };
    match abnormal {
        [only] => *only,
        many => many[seeded_rng(seed).random_range(0..many.len())],
    }
}
