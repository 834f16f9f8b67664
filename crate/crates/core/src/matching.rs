//! Distances between persistence diagrams.
//!
//! Both distances search over matchings in which any off-diagonal point may
//! instead be sent to its diagonal projection `((b+d)/2, (b+d)/2)`. The
//! Wasserstein value is the minimum sum of `q`-th powers of matched
//! distances (no root is taken); the bottleneck value is the minimum over
//! matchings of the largest matched distance. Essential classes are never
//! matched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rips::{PersistenceDiagram, PersistencePair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GroundMetric {
    #[default]
    #[serde(rename = "linf")]
    LInf,
    #[serde(rename = "l2")]
    L2,
}

impl GroundMetric {
    pub fn between(self, a: &PersistencePair, b: &PersistencePair) -> f64 {
        let db = (a.birth - b.birth).abs();
        let dd = (a.death - b.death).abs();
        match self {
            GroundMetric::LInf => db.max(dd),
            GroundMetric::L2 => (db * db + dd * dd).sqrt(),
        }
    }

    /// Distance from a point to its diagonal projection.
    pub fn to_diagonal(self, p: &PersistencePair) -> f64 {
        let half = (p.death - p.birth) / 2.0;
        match self {
            GroundMetric::LInf => half,
            GroundMetric::L2 => half * std::f64::consts::SQRT_2,
        }
    }
}

/// One edge of a diagram matching. `None` stands for the diagonal. Indices
/// refer to positions in the diagram's `pairs()`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: Option<usize>,
    pub b: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramDistanceReport {
    pub value: f64,
    /// Power in the cost sum; `None` for the bottleneck distance.
    pub order_q: Option<f64>,
    pub ground_metric: GroundMetric,
    pub matching: Vec<MatchedPair>,
}

/// Finite points of a diagram with their original indices.
type Indexed = Vec<(usize, PersistencePair)>;

/// Finite points of `a` and `b` after the degree and essential-count checks.
fn finite_points(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<(Indexed, Indexed)> {
    if a.degree() != b.degree() {
        return Err(Error::DegreeMismatch(a.degree(), b.degree()));
    }
    if a.essential_count() != b.essential_count() {
        return Err(Error::EssentialMismatch(
            a.essential_count(),
            b.essential_count(),
        ));
    }
    let pick = |d: &PersistenceDiagram| {
        d.pairs()
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| !p.is_essential())
            .collect::<Vec<_>>()
    };
    Ok((pick(a), pick(b)))
}

/// Pairwise ground distances on the diagonal-augmented square layout.
///
/// Rows are the points of `a` followed by one diagonal slot per point of
/// `b`; columns are the points of `b` followed by one diagonal slot per
/// point of `a`. Every diagonal slot is interchangeable, so a point's cost
/// to any slot on the other side is its own distance to the diagonal.
fn augmented_distances(
    a: &[(usize, PersistencePair)],
    b: &[(usize, PersistencePair)],
    metric: GroundMetric,
) -> Vec<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    let mut dist = vec![vec![0.0; n + m]; n + m];
    for (i, (_, p)) in a.iter().enumerate() {
        for (j, (_, q)) in b.iter().enumerate() {
            dist[i][j] = metric.between(p, q);
        }
        let diag = metric.to_diagonal(p);
        for slot in &mut dist[i][m..] {
            *slot = diag;
        }
    }
    for (j, (_, q)) in b.iter().enumerate() {
        let diag = metric.to_diagonal(q);
        for row in &mut dist[n..] {
            row[j] = diag;
        }
    }
    dist
}

fn matching_from_assignment(
    a: &[(usize, PersistencePair)],
    b: &[(usize, PersistencePair)],
    assignment: &[usize],
) -> Vec<MatchedPair> {
    let (n, m) = (a.len(), b.len());
    let mut matching = Vec::new();
    for (row, &col) in assignment.iter().enumerate() {
        let a_idx = (row < n).then(|| a[row].0);
        let b_idx = (col < m).then(|| b[col].0);
        if a_idx.is_some() || b_idx.is_some() {
            matching.push(MatchedPair { a: a_idx, b: b_idx });
        }
    }
    matching
}

/// Sum of non-negative terms in ascending order, so the value depends only
/// on the multiset of terms.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// `q`-Wasserstein cost between two diagrams: the minimal sum of `q`-th
/// powers of matched ground distances, without the final `1/q` root.
pub fn wasserstein(
    a: &PersistenceDiagram,
    b: &PersistenceDiagram,
    q: f64,
    metric: GroundMetric,
) -> Result<DiagramDistanceReport> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Wasserstein power must be positive and finite, got {q}"
        )));
    }
    let (fa, fb) = finite_points(a, b)?;
    let (n, m) = (fa.len(), fb.len());
    let to_a: Vec<f64> = fa
        .iter()
        .map(|(_, p)| metric.to_diagonal(p).powf(q))
        .collect();
    let to_b: Vec<f64> = fb
        .iter()
        .map(|(_, p)| metric.to_diagonal(p).powf(q))
        .collect();
    let pair: Vec<Vec<f64>> = fa
        .iter()
        .map(|(_, p)| {
            fb.iter()
                .map(|(_, r)| metric.between(p, r).powf(q))
                .collect()
        })
        .collect();

    // Square layout of side max(n, m). A real cell costs the cheaper of the
    // matched pair and sending both points to the diagonal; padding cells
    // send the lone real point to the diagonal. Same optimum as the
    // (n + m) layout with one diagonal slot per point, at an eighth of the work.
    let k = n.max(m);
    let mut cost = vec![vec![0.0; k]; k];
    for (r, row) in cost.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = match (r < n, c < m) {
                (true, true) => pair[r][c].min(to_a[r] + to_b[c]),
                (true, false) => to_a[r],
                (false, true) => to_b[c],
                (false, false) => 0.0,
            };
        }
    }
    let (assignment, _) = solve_assignment(&cost)?;

    let mut terms = Vec::with_capacity(n + m);
    let mut matched = Vec::new();
    let mut a_alone = Vec::new();
    let mut b_alone = Vec::new();
    for (r, &c) in assignment.iter().enumerate() {
        match (r < n, c < m) {
            (true, true) if pair[r][c] <= to_a[r] + to_b[c] => {
                terms.push(pair[r][c]);
                matched.push(MatchedPair {
                    a: Some(fa[r].0),
                    b: Some(fb[c].0),
                });
            }
            (ra, cb) => {
                if ra {
                    terms.push(to_a[r]);
                    a_alone.push(fa[r].0);
                }
                if cb {
                    terms.push(to_b[c]);
                    b_alone.push(fb[c].0);
                }
            }
        }
    }
    a_alone.sort_unstable();
    b_alone.sort_unstable();
    matched.extend(a_alone.into_iter().map(|i| MatchedPair {
        a: Some(i),
        b: None,
    }));
    matched.extend(b_alone.into_iter().map(|j| MatchedPair {
        a: None,
        b: Some(j),
    }));
    Ok(DiagramDistanceReport {
        value: canonical_sum(terms),
        order_q: Some(q),
        ground_metric: metric,
        matching: matched,
    })
}

/// Bottleneck distance under the L-infinity ground metric.
pub fn bottleneck(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<DiagramDistanceReport> {
    let metric = GroundMetric::LInf;
    let (fa, fb) = finite_points(a, b)?;
    let dist = augmented_distances(&fa, &fb, metric);

    let mut candidates: Vec<f64> = dist.iter().flatten().copied().collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // The largest candidate always admits a perfect matching.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    let mut best = perfect_matching_within(&dist, candidates[hi]).unwrap_or_default();
    while lo < hi {
        let mid = (lo + hi) / 2;
        match perfect_matching_within(&dist, candidates[mid]) {
            Some(assignment) => {
                best = assignment;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let value = best
        .iter()
        .enumerate()
        .map(|(r, &c)| dist[r][c])
        .fold(0.0, f64::max);
    Ok(DiagramDistanceReport {
        value,
        order_q: None,
        ground_metric: metric,
        matching: matching_from_assignment(&fa, &fb, &best),
    })
}

/// Perfect matching using only entries `<= threshold`, by augmenting paths.
fn perfect_matching_within(dist: &[Vec<f64>], threshold: f64) -> Option<Vec<usize>> {
    let n = dist.len();
    let mut col_owner: Vec<Option<usize>> = vec![None; n];

    fn augment(
        row: usize,
        dist: &[Vec<f64>],
        threshold: f64,
        seen: &mut [bool],
        col_owner: &mut [Option<usize>],
    ) -> bool {
        for col in 0..dist.len() {
            if dist[row][col] <= threshold && !seen[col] {
                seen[col] = true;
                let free = match col_owner[col] {
                    None => true,
                    Some(other) => augment(other, dist, threshold, seen, col_owner),
                };
                if free {
                    col_owner[col] = Some(row);
                    return true;
                }
            }
        }
        false
    }

    for row in 0..n {
        let mut seen = vec![false; n];
        if !augment(row, dist, threshold, &mut seen, &mut col_owner) {
            return None;
        }
    }
    let mut assignment = vec![0; n];
    for (col, owner) in col_owner.iter().enumerate() {
        assignment[owner.expect("perfect matching")] = col;
    }
    Some(assignment)
}

/// Minimum-cost perfect matching on a square matrix of non-negative costs.
///
/// Returns `assignment[row] = col` and the total cost. This is the
/// shortest-augmenting-path form of the Hungarian method with row and
/// column potentials, `O(n^3)`.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    for (r, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidCostMatrix(format!(
                "row {r} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(c) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidCostMatrix(format!(
                "entry ({r}, {c}) = {} is not a finite non-negative number",
                row[c]
            )));
        }
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }

    let flat: Vec<f64> = cost.iter().flatten().copied().collect();
    // 1-based internally; column 0 is a virtual start column.
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let row_cost = &flat[(r0 - 1) * n..r0 * n];
            let ur = u[r0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = row_cost[col - 1] - ur - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r][c])
        .sum();
    Ok((assignment, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagram(pairs: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram::new(
            1,
            pairs
                .iter()
                .map(|&(b, d)| PersistencePair::new(b, d).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn assignment_examples() {
        let (perm, cost) = solve_assignment(&[vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        assert_eq!((perm, cost), (vec![0, 1], 0.0));
        let (_, cost) = solve_assignment(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(cost, 2.0);
        assert_eq!(solve_assignment(&[vec![4.0]]).unwrap(), (vec![0], 4.0));
    }

    #[test]
    fn assignment_rejects_bad_input() {
        assert!(solve_assignment(&[vec![1.0, 2.0]]).is_err());
        assert!(solve_assignment(&[vec![-1.0]]).is_err());
        assert!(solve_assignment(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let a = diagram(&[(0.0, 2.0)]);
        let empty = diagram(&[]);
        let w = wasserstein(&a, &empty, 1.0, GroundMetric::LInf).unwrap();
        assert_eq!(w.value, 1.0);
        assert_eq!(
            w.matching,
            vec![MatchedPair {
                a: Some(0),
                b: None
            }]
        );
        assert_eq!(
            wasserstein(&a, &empty, 2.0, GroundMetric::LInf)
                .unwrap()
                .value,
            1.0
        );
        let b = diagram(&[(0.0, 4.0)]);
        assert_eq!(
            wasserstein(&a, &b, 1.0, GroundMetric::LInf).unwrap().value,
            2.0
        );
        assert_eq!(
            wasserstein(&a, &a, 2.0, GroundMetric::L2).unwrap().value,
            0.0
        );
        assert_eq!(
            wasserstein(&empty, &empty, 2.0, GroundMetric::LInf)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn l2_diagonal_distance() {
        let a = diagram(&[(0.0, 2.0)]);
        let w = wasserstein(&a, &diagram(&[]), 2.0, GroundMetric::L2).unwrap();
        assert!((w.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bottleneck_examples() {
        let a = diagram(&[(0.0, 2.0), (0.0, 4.0)]);
        let b = diagram(&[(0.0, 4.0)]);
        assert_eq!(bottleneck(&a, &a).unwrap().value, 0.0);
        assert_eq!(bottleneck(&a, &b).unwrap().value, 1.0);
        let r = bottleneck(&diagram(&[(0.0, 2.0)]), &diagram(&[(0.0, 2.1)])).unwrap();
        assert!((r.value - 0.1).abs() < 1e-12);
        assert_eq!(
            r.matching,
            vec![MatchedPair {
                a: Some(0),
                b: Some(0)
            }]
        );
        assert_eq!(bottleneck(&diagram(&[]), &diagram(&[])).unwrap().value, 0.0);
    }

    #[test]
    fn mismatches_are_errors() {
        let h0 = PersistenceDiagram::new(0, vec![PersistencePair::new(0.0, 1.0).unwrap()]).unwrap();
        let h1 = diagram(&[(0.0, 1.0)]);
        assert!(matches!(
            wasserstein(&h0, &h1, 2.0, GroundMetric::LInf),
            Err(Error::DegreeMismatch(0, 1))
        ));
        let ess =
            PersistenceDiagram::new(0, vec![PersistencePair::new(0.0, f64::INFINITY).unwrap()])
                .unwrap();
        assert!(matches!(
            bottleneck(&ess, &h0),
            Err(Error::EssentialMismatch(1, 0))
        ));
        assert!(wasserstein(&h1, &h1, 0.0, GroundMetric::LInf).is_err());
    }

    #[test]
    fn essential_pairs_are_skipped_in_matching() {
        let a = PersistenceDiagram::new(
            0,
            vec![
                PersistencePair::new(0.0, 3.0).unwrap(),
                PersistencePair::new(0.0, f64::INFINITY).unwrap(),
            ],
        )
        .unwrap();
        let b = PersistenceDiagram::new(0, vec![PersistencePair::new(0.0, f64::INFINITY).unwrap()])
            .unwrap();
        let w = wasserstein(&a, &b, 1.0, GroundMetric::LInf).unwrap();
        assert_eq!(w.value, 1.5);
        assert_eq!(
            w.matching,
            vec![MatchedPair {
                a: Some(0),
                b: None
            }]
        );
    }
}
