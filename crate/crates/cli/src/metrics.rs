use std::collections::{BTreeMap, HashMap};

use replybank_core::corpus::ResponseRecord;
use replybank_core::simcluster::Cluster;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Responses that have a ground-truth label.
    pub labeled_responses: usize,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise precision, recall and F1 of a clustering against ground-truth
/// labels keyed by normalized text. Responses without a label are ignored.
pub fn pairwise_f1(clusters: &[Cluster], records: &[ResponseRecord], truth: &BTreeMap<String, u32>) -> PairwiseScores {
    let mut by_cell: HashMap<(u32, u32), u64> = HashMap::new();
    let mut by_cluster: HashMap<u32, u64> = HashMap::new();
    let mut by_label: HashMap<u32, u64> = HashMap::new();
    let mut labeled = 0;
    for c in clusters {
        for &m in &c.members {
            let Some(&label) = records.get(m as usize).and_then(|r| truth.get(r.text())) else { continue };
            labeled += 1;
            *by_cell.entry((c.cluster_id, label)).or_default() += 1;
            *by_cluster.entry(c.cluster_id).or_default() += 1;
            *by_label.entry(label).or_default() += 1;
        }
    }
    let together: u64 = by_cell.values().map(|&n| pairs(n)).sum();
    let predicted: u64 = by_cluster.values().map(|&n| pairs(n)).sum();
    let actual: u64 = by_label.values().map(|&n| pairs(n)).sum();
    let ratio = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let precision = ratio(together, predicted);
    let recall = ratio(together, actual);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PairwiseScores {
        precision,
        recall,
        f1,
        labeled_responses: labeled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use replybank_core::corpus::PreprocessedResponse;

    fn records(texts: &[&str]) -> Vec<ResponseRecord> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| ResponseRecord {
                id: i as u32,
                response: PreprocessedResponse {
                    normalized_text: t.to_string(),
                    source_texts: Default::default(),
                    count: 2,
                },
            })
            .collect()
    }

    fn cluster(id: u32, members: &[u32]) -> Cluster {
        Cluster {
            cluster_id: id,
            centroid_id: members[0],
            members: members.to_vec(),
        }
    }

    #[test]
    fn perfect_and_split() {
        let recs = records(&["a", "b", "c", "d", "noise"]);
        let truth: BTreeMap<String, u32> = [("a", 0), ("b", 0), ("c", 1), ("d", 1)]
            .into_iter()
            .map(|(t, l)| (t.to_string(), l))
            .collect();
        let s = pairwise_f1(&[cluster(0, &[0, 1]), cluster(1, &[2, 3, 4])], &recs, &truth);
        assert_eq!((s.precision, s.recall, s.f1, s.labeled_responses), (1.0, 1.0, 1.0, 4));
        // a and b split apart: recall 1/2, precision 1
        let s = pairwise_f1(&[cluster(0, &[0]), cluster(1, &[1]), cluster(2, &[2, 3])], &recs, &truth);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        // everything merged: 2 of 6 pairs correct
        let s = pairwise_f1(&[cluster(0, &[0, 1, 2, 3])], &recs, &truth);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
    }
}
