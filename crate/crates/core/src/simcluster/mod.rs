//! Candidate-pair scoring, the sparse distance matrix and threshold-bounded
//! complete-linkage clustering.

mod agglomerate;
mod distance;
mod scores;

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::corpus::{ResponseId, ResponseRecord};
use crate::error::{Error, Result};

pub use agglomerate::agglomerate;
pub use distance::DistanceMatrix;
pub use scores::{jaccard, jaccard_scores, load_scores, write_scores_tsv, SimilarityScore};

pub const DEFAULT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Cluster {
    pub cluster_id: u32,
    /// Most frequent member; ties go to the lexicographically smallest text.
    pub centroid_id: ResponseId,
    pub members: Vec<ResponseId>,
}

impl Cluster {
    /// Total occurrences of all members.
    pub fn occurrences(&self, records: &[ResponseRecord]) -> u64 {
        self.members.iter().map(|&m| records[m as usize].count()).sum()
    }
}

/// Attach ids and centroids to a partition from [`agglomerate`]; cluster ids
/// follow the partition order.
pub fn build_clusters(
    partition: Vec<Vec<ResponseId>>,
    records: &[ResponseRecord],
) -> Result<Vec<Cluster>> {
    partition
        .into_iter()
        .enumerate()
        .map(|(i, members)| {
            let centroid = members
                .iter()
                .map(|&m| {
                    records
                        .get(m as usize)
                        .ok_or_else(|| Error::validation(format!("unknown response id {m}")))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .min_by_key(|r| (Reverse(r.count()), r.text()))
                .ok_or_else(|| Error::validation(format!("cluster {i} is empty")))?
                .id;
            Ok(Cluster {
                cluster_id: i as u32,
                centroid_id: centroid,
                members,
            })
        })
        .collect()
}

pub fn write_clusters_json<W: std::io::Write>(w: W, clusters: &[Cluster]) -> Result<()> {
    serde_json::to_writer(w, clusters)?;
    Ok(())
}

/// Parse `clusters.json`, checking that clusters are non-empty and disjoint.
pub fn read_clusters_json<R: std::io::Read>(r: R) -> Result<Vec<Cluster>> {
    let clusters: Vec<Cluster> = serde_json::from_reader(r)?;
    let mut seen = std::collections::HashSet::new();
    for c in &clusters {
        if c.members.is_empty() {
            return Err(Error::validation(format!("cluster {} has no members", c.cluster_id)));
        }
        if !c.members.contains(&c.centroid_id) {
            return Err(Error::validation(format!(
                "cluster {} centroid {} is not a member",
                c.cluster_id, c.centroid_id
            )));
        }
        for &m in &c.members {
            if !seen.insert(m) {
                return Err(Error::validation(format!("response {m} in more than one cluster")));
            }
        }
    }
    Ok(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterStats {
    pub num_clusters: usize,
    pub singleton_fraction: f64,
    pub largest_cluster_size: usize,
    /// `k` after clamping to the number of clusters.
    pub top_k: usize,
    /// Occurrences covered by the `top_k` most frequent clusters, over all
    /// doctor turns.
    pub coverage_of_top_k: f64,
}

pub fn cluster_stats(
    clusters: &[Cluster],
    records: &[ResponseRecord],
    total_doctor_turns: u64,
    k: usize,
) -> ClusterStats {
    let num_clusters = clusters.len();
    let singletons = clusters.iter().filter(|c| c.members.len() == 1).count();
    let mut occurrences: Vec<u64> = clusters.iter().map(|c| c.occurrences(records)).collect();
    occurrences.sort_unstable_by(|a, b| b.cmp(a));
    let top_k = k.min(num_clusters);
    let covered: u64 = occurrences[..top_k].iter().sum();
    ClusterStats {
        num_clusters,
        singleton_fraction: if num_clusters == 0 {
            0.0
        } else {
            singletons as f64 / num_clusters as f64
        },
        largest_cluster_size: clusters.iter().map(|c| c.members.len()).max().unwrap_or(0),
        top_k,
        coverage_of_top_k: if total_doctor_turns == 0 {
            0.0
        } else {
            covered as f64 / total_doctor_turns as f64
        },
    }
}
