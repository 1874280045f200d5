use serde::{Deserialize, Serialize};

use crate::analysis::correlation::CorrelationMatrix;
use crate::error::{Error, Result};

pub enum ClusterInput<'a> {
    /// Distance `1 - r`.
    Correlation(&'a CorrelationMatrix),
    /// Euclidean distance between rows.
    Features { labels: &'a [String], rows: &'a [Vec<f64>] },
}

/// One agglomeration step. Clusters are numbered like a linkage matrix:
/// items are `0..n`, the cluster formed at step `s` is `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub items: Vec<String>,
    /// Cluster index per item, numbered by first appearance.
    pub labels: Vec<usize>,
    pub merges: Vec<Merge>,
}

impl ClusterAssignment {
    /// Member indices per cluster, in cluster order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn cluster_names(&self) -> Vec<Vec<&str>> {
        self.clusters()
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.items[i].as_str()).collect())
            .collect()
    }
}

fn distances(input: &ClusterInput<'_>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    match input {
        ClusterInput::Correlation(m) => {
            let d = m
                .values
                .iter()
                .map(|row| row.iter().map(|r| (1.0 - r).max(0.0)).collect())
                .collect();
            Ok((m.labels.clone(), d))
        }
        ClusterInput::Features { labels, rows } => {
            if labels.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    label: "labels".into(),
                    len: labels.len(),
                    expected: rows.len(),
                });
            }
            let dim = rows.first().map_or(0, Vec::len);
            for (l, r) in labels.iter().zip(*rows) {
                if r.len() != dim {
                    return Err(Error::LengthMismatch {
                        label: l.clone(),
                        len: r.len(),
                        expected: dim,
                    });
                }
                if r.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Invalid(format!("feature row {l:?} is not finite")));
                }
            }
            let d = rows
                .iter()
                .map(|a| {
                    rows.iter()
                        .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                        .collect()
                })
                .collect();
            Ok((labels.to_vec(), d))
        }
    }
}

/// Agglomerative Ward clustering, stopped at `k` clusters.
///
/// Cluster distances are updated with the Lance-Williams recurrence for
/// Ward linkage. Equal distances are resolved by the smallest pair of
/// lowest member indices.
pub fn ward_cluster(input: ClusterInput<'_>, k: usize) -> Result<ClusterAssignment> {
    let (items, mut d) = distances(&input)?;
    let n = items.len();
    if k == 0 || k > n {
        return Err(Error::ClusterCount { k, items: n });
    }
    // per active slot: (linkage id, size, lowest member)
    let mut active: Vec<Option<(usize, usize, usize)>> = (0..n).map(|i| Some((i, 1, i))).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - k);
    for step in 0..n - k {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            let Some((_, _, mi)) = active[i] else { continue };
            for j in i + 1..n {
                let Some((_, _, mj)) = active[j] else { continue };
                let key = (d[i][j], mi.min(mj), mi.max(mj));
                let better = match best {
                    None => true,
                    Some((bd, bl, bh, _, _)) => key.0 < bd || (key.0 == bd && (key.1, key.2) < (bl, bh)),
                };
                if better {
                    best = Some((key.0, key.1, key.2, i, j));
                }
            }
        }
        let (height, _, _, a, b) = best.expect("at least two active clusters");
        let (ida, na, ma) = active[a].unwrap();
        let (idb, nb, mb) = active[b].unwrap();
        for c in 0..n {
            if c == a || c == b {
                continue;
            }
            let Some((_, nc, _)) = active[c] else { continue };
            let t = (na + nb + nc) as f64;
            let sq = ((na + nc) as f64 * d[a][c].powi(2) + (nb + nc) as f64 * d[b][c].powi(2)
                - nc as f64 * height.powi(2))
                / t;
            let v = sq.max(0.0).sqrt();
            d[a][c] = v;
            d[c][a] = v;
        }
        active[a] = Some((n + step, na + nb, ma.min(mb)));
        active[b] = None;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        merges.push(Merge {
            left: ida.min(idb),
            right: ida.max(idb),
            height,
            size: na + nb,
        });
    }
    let mut labels = vec![usize::MAX; n];
    let mut slot_label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        let slot = owner[i];
        if slot_label[slot] == usize::MAX {
            slot_label[slot] = next;
            next += 1;
        }
        labels[i] = slot_label[slot];
    }
    Ok(ClusterAssignment { k, items, labels, merges })
}

/// Within-cluster sum of squared distances to centroids.
pub fn ward_objective(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let dim = rows.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows.iter().zip(labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; dim];
        for r in &members {
            for (c, x) in centroid.iter_mut().zip(r.iter()) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        for r in &members {
            total += r.iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum::<f64>();
        }
    }
    total
}

/// Exhaustive search over all partitions into `k` non-empty clusters,
/// labelled by first appearance. Only for small inputs.
pub fn ward_exhaustive(rows: &[Vec<f64>], k: usize) -> Result<(Vec<usize>, f64)> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(Error::ClusterCount { k, items: n });
    }
    if n > 10 {
        return Err(Error::Invalid(format!("exhaustive partition search over {n} items is too large")));
    }
    fn walk(i: usize, used: usize, k: usize, rows: &[Vec<f64>], cur: &mut Vec<usize>, best: &mut Option<(Vec<usize>, f64)>) {
        let n = rows.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            let obj = ward_objective(rows, cur);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                *best = Some((cur.clone(), obj));
            }
            return;
        }
        for c in 0..=used.min(k - 1) {
            cur.push(c);
            walk(i + 1, used.max(c + 1), k, rows, cur, best);
            cur.pop();
        }
    }
    let mut best = None;
    walk(0, 0, k, rows, &mut Vec::with_capacity(n), &mut best);
    Ok(best.expect("k <= n admits a partition"))
}
