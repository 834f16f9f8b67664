//! Brute-force oracles, independent of the library's algorithms.
#![allow(dead_code)]

use rand::Rng;
use topoloss::{ConventionScale, PersistenceDiagram, PersistencePair, PointCloud};

pub const ORACLE_MAX_POINTS: usize = 10;

/// Rank over GF(2) of rows packed as bit vectors.
pub fn gf2_rank(mut rows: Vec<Vec<u64>>) -> usize {
    let words = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..words * 64 {
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn bits(len: usize, set: &[usize]) -> Vec<u64> {
    let mut v = vec![0u64; len.div_ceil(64).max(1)];
    for &i in set {
        v[i / 64] |= 1 << (i % 64);
    }
    v
}

/// Betti number of the full flag complex at filtration value `t`, from
/// boundary-matrix ranks. Edge `{u, v}` enters at `scale * |u - v|`.
pub fn oracle_betti(
    cloud: &PointCloud,
    degree: u8,
    t: f64,
    scale: ConventionScale,
) -> Result<usize, String> {
    let pts = cloud.points();
    let n = pts.len();
    if n > ORACLE_MAX_POINTS {
        return Err(format!(
            "oracle accepts at most {ORACLE_MAX_POINTS} points, got {n}"
        ));
    }
    let present = |u: usize, v: usize| scale.factor() * pts[u].dist(&pts[v]) <= t.max(0.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if present(u, v) {
                edges.push((u, v));
            }
        }
    }
    let edge_id = |u: usize, v: usize| edges.iter().position(|&e| e == (u, v)).unwrap();
    let mut triangles = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                if present(a, b) && present(a, c) && present(b, c) {
                    triangles.push((a, b, c));
                }
            }
        }
    }
    // Rows are simplices, columns their facets.
    let d1: Vec<Vec<u64>> = edges.iter().map(|&(u, v)| bits(n, &[u, v])).collect();
    let d2: Vec<Vec<u64>> = triangles
        .iter()
        .map(|&(a, b, c)| bits(edges.len(), &[edge_id(a, b), edge_id(a, c), edge_id(b, c)]))
        .collect();
    let r1 = gf2_rank(d1);
    let r2 = gf2_rank(d2);
    Ok(match degree {
        0 => n - r1,
        1 => edges.len() - r1 - r2,
        d => return Err(format!("degree {d} not supported")),
    })
}

/// Random cloud of `n` points with coordinates in `[0, 100]^2`.
pub fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..=100.0), rng.random_range(0.0..=100.0)))
        .collect();
    PointCloud::from_xy(&coords).unwrap()
}

/// Random finite diagram with birth and death on a grid of `step`, so that
/// distances and their squares are exact in binary floating point.
pub fn random_grid_diagram(rng: &mut impl Rng, max_len: usize, step: f64) -> PersistenceDiagram {
    let len = rng.random_range(0..=max_len);
    let pairs = (0..len)
        .map(|_| {
            let birth = rng.random_range(0..40) as f64 * step;
            let death = birth + rng.random_range(1..40) as f64 * step;
            PersistencePair::new(birth, death).unwrap()
        })
        .collect();
    PersistenceDiagram::new(1, pairs).unwrap()
}

/// Random finite diagram with arbitrary real coordinates.
pub fn random_diagram(rng: &mut impl Rng, max_len: usize) -> PersistenceDiagram {
    let len = rng.random_range(0..=max_len);
    let pairs = (0..len)
        .map(|_| {
            let birth = rng.random_range(0.0..10.0);
            let death = birth + rng.random_range(0.001..10.0);
            PersistencePair::new(birth, death).unwrap()
        })
        .collect();
    PersistenceDiagram::new(1, pairs).unwrap()
}

fn linf(a: &PersistencePair, b: &PersistencePair) -> f64 {
    (a.birth - b.birth).abs().max((a.death - b.death).abs())
}

fn linf_to_diagonal(p: &PersistencePair) -> f64 {
    (p.death - p.birth) / 2.0
}

/// Every partial matching of `a` into `b`: `assign[i]` is the partner of
/// point `i`, or `None` for the diagonal. Calls `visit` once per matching.
fn for_each_matching(n: usize, m: usize, visit: &mut impl FnMut(&[Option<usize>])) {
    fn go(
        i: usize,
        n: usize,
        used: &mut Vec<bool>,
        assign: &mut Vec<Option<usize>>,
        visit: &mut impl FnMut(&[Option<usize>]),
    ) {
        if i == n {
            visit(assign);
            return;
        }
        assign[i] = None;
        go(i + 1, n, used, assign, visit);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                assign[i] = Some(j);
                go(i + 1, n, used, assign, visit);
                used[j] = false;
            }
        }
        assign[i] = None;
    }
    go(0, n, &mut vec![false; m], &mut vec![None; n], visit);
}

fn sum_ascending(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Minimum over all partial matchings of the sum of `q`-th powers of
/// L-infinity distances, unmatched points paying their diagonal distance.
pub fn brute_force_wasserstein(a: &PersistenceDiagram, b: &PersistenceDiagram, q: f64) -> f64 {
    let (pa, pb) = (a.pairs(), b.pairs());
    let mut best = f64::INFINITY;
    for_each_matching(pa.len(), pb.len(), &mut |assign| {
        let mut terms = Vec::new();
        let mut taken = vec![false; pb.len()];
        for (i, partner) in assign.iter().enumerate() {
            match partner {
                Some(j) => {
                    taken[*j] = true;
                    terms.push(linf(&pa[i], &pb[*j]).powf(q));
                }
                None => terms.push(linf_to_diagonal(&pa[i]).powf(q)),
            }
        }
        for (j, p) in pb.iter().enumerate() {
            if !taken[j] {
                terms.push(linf_to_diagonal(p).powf(q));
            }
        }
        best = best.min(sum_ascending(terms));
    });
    best
}

/// Minimum over all partial matchings of the largest L-infinity distance.
pub fn brute_force_bottleneck(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let (pa, pb) = (a.pairs(), b.pairs());
    let mut best = f64::INFINITY;
    for_each_matching(pa.len(), pb.len(), &mut |assign| {
        let mut worst = 0.0f64;
        let mut taken = vec![false; pb.len()];
        for (i, partner) in assign.iter().enumerate() {
            worst = worst.max(match partner {
                Some(j) => {
                    taken[*j] = true;
                    linf(&pa[i], &pb[*j])
                }
                None => linf_to_diagonal(&pa[i]),
            });
        }
        for (j, p) in pb.iter().enumerate() {
            if !taken[j] {
                worst = worst.max(linf_to_diagonal(p));
            }
        }
        best = best.min(worst);
    });
    best
}

/// Minimum-cost perfect assignment by trying every permutation.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(row: usize, cost: &[Vec<f64>], used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..cost.len() {
            if !used[c] {
                used[c] = true;
                go(row + 1, cost, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, cost, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
