use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use super::DistanceMatrix;
use crate::corpus::ResponseId;
use crate::error::{Error, Result};

/// Cross-cluster linkage summary: the largest stored distance and how many
/// of the `|A|·|B|` cross pairs are stored at or below the threshold.
#[derive(Debug, Clone, Copy)]
struct Link {
    max: f64,
    count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    a: ResponseId,
    b: ResponseId,
    gen_a: u32,
    gen_b: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
            .then(self.gen_a.cmp(&other.gen_a))
            .then(self.gen_b.cmp(&other.gen_b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Threshold-constrained complete-linkage agglomerative clustering.
///
/// Starting from singletons, repeatedly merges the pair of clusters with the
/// smallest complete-linkage distance (max cross-pair `D`) among pairs whose
/// linkage is `<= threshold`. Ties go to the smallest `(minId(A), minId(B))`.
/// Stops when nothing can be merged.
///
/// Returns member lists (ascending) ordered by size descending, then by
/// smallest member.
pub fn agglomerate(d: &DistanceMatrix, threshold: f64) -> Result<Vec<Vec<ResponseId>>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::validation(format!(
            "threshold {threshold} must lie strictly between 0 and 1"
        )));
    }
    let n = d.len();
    let mut members: Vec<Vec<ResponseId>> = (0..n as ResponseId).map(|i| vec![i]).collect();
    let mut alive = vec![true; n];
    let mut generation = vec![0u32; n];
    // A cluster is keyed by its smallest member. Only links whose every
    // stored cross pair is within the threshold are kept; any pair above the
    // threshold (or unstored, i.e. at distance 1) blocks the merge forever.
    let mut links: Vec<BTreeMap<ResponseId, Link>> = vec![BTreeMap::new(); n];
    for (pair, dist) in d.entries() {
        if dist <= threshold {
            let link = Link {
                max: dist,
                count: 1,
            };
            links[pair.a as usize].insert(pair.b, link);
            links[pair.b as usize].insert(pair.a, link);
        }
    }

    let mut heap = BinaryHeap::new();
    for a in 0..n {
        for (&b, link) in &links[a] {
            if (a as ResponseId) < b {
                heap.push(Reverse(Candidate {
                    dist: link.max,
                    a: a as ResponseId,
                    b,
                    gen_a: 0,
                    gen_b: 0,
                }));
            }
        }
    }

    while let Some(Reverse(c)) = heap.pop() {
        let (a, b) = (c.a as usize, c.b as usize);
        if !alive[a] || !alive[b] || generation[a] != c.gen_a || generation[b] != c.gen_b {
            continue;
        }
        // merge b into a (a < b, so a stays the smallest member)
        alive[b] = false;
        generation[a] += 1;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        let links_b = std::mem::take(&mut links[b]);
        links[a].remove(&c.b);
        let links_a = std::mem::take(&mut links[a]);

        let mut merged: BTreeMap<ResponseId, Link> = BTreeMap::new();
        for (x, la) in &links_a {
            let combined = match links_b.get(x) {
                Some(lb) => Link {
                    max: la.max.max(lb.max),
                    count: la.count + lb.count,
                },
                None => *la,
            };
            merged.insert(*x, combined);
        }
        for (x, lb) in &links_b {
            if *x != c.a && !links_a.contains_key(x) {
                merged.insert(*x, *lb);
            }
        }

        let size_a = members[a].len() as u64;
        let mut kept = BTreeMap::new();
        for (x, link) in merged {
            let xi = x as usize;
            links[xi].remove(&c.b);
            links[xi].remove(&c.a);
            if link.count == size_a * members[xi].len() as u64 {
                links[xi].insert(c.a, link);
                kept.insert(x, link);
                let (lo, hi) = if c.a < x { (c.a, x) } else { (x, c.a) };
                heap.push(Reverse(Candidate {
                    dist: link.max,
                    a: lo,
                    b: hi,
                    gen_a: generation[lo as usize],
                    gen_b: generation[hi as usize],
                }));
            }
        }
        links[a] = kept;
    }

    let mut clusters: Vec<Vec<ResponseId>> = members
        .into_iter()
        .zip(alive)
        .filter_map(|(mut m, live)| {
            live.then(|| {
                m.sort_unstable();
                m
            })
        })
        .collect();
    clusters.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));
    Ok(clusters)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::encode::CandidatePair;
    use proptest::prelude::*;

    /// Naive complete linkage: rescans every cluster pair and every cross
    /// pair at each step.
    pub(crate) fn naive(d: &DistanceMatrix, threshold: f64) -> Vec<Vec<ResponseId>> {
        let mut clusters: Vec<Vec<ResponseId>> = (0..d.len() as ResponseId).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(f64, ResponseId, ResponseId, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in 0..clusters.len() {
                    if i == j {
                        continue;
                    }
                    let (mi, mj) = (clusters[i][0], clusters[j][0]);
                    if mi > mj {
                        continue;
                    }
                    let mut link = 0.0f64;
                    for &x in &clusters[i] {
                        for &y in &clusters[j] {
                            link = link.max(d.get(x, y));
                        }
                    }
                    if link > threshold {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, ba, bb, _, _)) => (link, mi, mj) < (bd, ba, bb),
                    };
                    if better {
                        best = Some((link, mi, mj, i, j));
                    }
                }
            }
            let Some((_, _, _, i, j)) = best else { break };
            let moved = clusters[j].clone();
            clusters[i].extend(moved);
            clusters[i].sort_unstable();
            clusters.remove(j);
        }
        clusters.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));
        clusters
    }

    fn matrix(n: usize, entries: &[(u32, u32, f64)]) -> DistanceMatrix {
        let mut d = DistanceMatrix::new(n);
        for &(a, b, v) in entries {
            d.insert(CandidatePair::new(a, b).unwrap(), v).unwrap();
        }
        d
    }

    #[test]
    fn no_entries_gives_singletons() {
        let c = agglomerate(&DistanceMatrix::new(4), 0.25).unwrap();
        assert_eq!(c, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn complete_linkage_blocks_chain() {
        let d = matrix(3, &[(0, 1, 0.1), (1, 2, 0.1)]);
        assert_eq!(agglomerate(&d, 0.25).unwrap(), vec![vec![0, 1], vec![2]]);
        // brute force over both possible first merges: {0,1} first wins the
        // (minA, minB) tie; {1,2} would leave {0}
        assert_eq!(naive(&d, 0.25), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let d = matrix(2, &[(0, 1, 1.0 - 0.75)]);
        assert_eq!(agglomerate(&d, 0.25).unwrap(), vec![vec![0, 1]]);
    }

    #[test]
    fn nearest_pair_merges_first() {
        // 1-2 is closest; 0 is within threshold of 1 but not of 2
        let d = matrix(3, &[(0, 1, 0.2), (1, 2, 0.05), (0, 2, 0.3)]);
        assert_eq!(agglomerate(&d, 0.25).unwrap(), vec![vec![1, 2], vec![0]]);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(agglomerate(&DistanceMatrix::new(2), 0.0).is_err());
        assert!(agglomerate(&DistanceMatrix::new(2), 1.0).is_err());
    }

    pub(crate) fn matrix_strategy() -> impl Strategy<Value = DistanceMatrix> {
        (1usize..25).prop_flat_map(|n| {
            let pairs: Vec<(u32, u32)> = (0..n as u32)
                .flat_map(|a| ((a + 1)..n as u32).map(move |b| (a, b)))
                .collect();
            let m = pairs.len();
            (
                Just(pairs),
                prop::collection::vec(
                    prop::option::weighted(0.5, prop_oneof![(0u8..=8).prop_map(|x| f64::from(x) / 20.0), 0.0f64..1.0]),
                    m,
                ),
            )
                .prop_map(move |(pairs, vals)| {
                    let mut d = DistanceMatrix::new(n);
                    for ((a, b), v) in pairs.into_iter().zip(vals) {
                        if let Some(v) = v {
                            d.insert(CandidatePair { a, b }, v).unwrap();
                        }
                    }
                    d
                })
        })
    }

    proptest! {
        #[test]
        fn matches_naive_and_is_sound(d in matrix_strategy(), t in prop_oneof![Just(0.25), 0.05f64..0.95]) {
            let got = agglomerate(&d, t).unwrap();
            prop_assert_eq!(&got, &naive(&d, t));
            // partition
            let mut all: Vec<u32> = got.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.len() as u32).collect::<Vec<_>>());
            // soundness
            for c in &got {
                for &x in c {
                    for &y in c {
                        prop_assert!(x == y || d.get(x, y) <= t);
                    }
                }
            }
            // maximality
            for i in 0..got.len() {
                for j in (i + 1)..got.len() {
                    let link = got[i].iter().flat_map(|&x| got[j].iter().map(move |&y| (x, y)))
                        .map(|(x, y)| d.get(x, y)).fold(0.0, f64::max);
                    prop_assert!(link > t);
                }
            }
        }

        #[test]
        fn raising_threshold_never_adds_clusters(d in matrix_strategy(), t in 0.05f64..0.5, dt in 0.0f64..0.4) {
            let low = agglomerate(&d, t).unwrap().len();
            let high = agglomerate(&d, t + dt).unwrap().len();
            prop_assert!(high <= low);
        }
    }
}
