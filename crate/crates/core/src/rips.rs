//! Vietoris-Rips persistent homology of planar point clouds in degrees 0
//! and 1, with coefficients in the two-element field.
//!
//! An edge `(p, q)` enters the filtration at `scale * |p - q|`; a triangle
//! enters with its longest edge. Degree 0 is computed with Kruskal's
//! algorithm over a union-find. Degree 1 is computed by reducing the
//! coboundary matrix of the positive edges in reverse filtration order.
//! Edges that merge components (the spanning-tree edges) never carry a
//! degree-1 class and are skipped outright, and a positive edge whose
//! earliest cofacet has that edge as its diameter is paired immediately.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, PointCloud};

/// One bar of a barcode. `death` is `+inf` for an essential class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    pub fn new(birth: f64, death: f64) -> Result<Self> {
        let reason = if birth.is_nan() || death.is_nan() {
            Some("NaN endpoint")
        } else if !birth.is_finite() {
            Some("birth must be finite")
        } else if birth < 0.0 {
            Some("birth must be non-negative")
        } else if death <= birth {
            Some("death must exceed birth")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidPair {
                birth,
                death,
                reason,
            }),
            None => Ok(Self { birth, death }),
        }
    }

    pub fn is_essential(&self) -> bool {
        self.death == f64::INFINITY
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.birth
            .total_cmp(&other.birth)
            .then_with(|| self.death.total_cmp(&other.death))
    }
}

/// Multiset of persistence pairs of one homology degree, sorted by
/// `(birth, death)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    degree: u8,
    pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(degree: u8, mut pairs: Vec<PersistencePair>) -> Result<Self> {
        if degree > 1 {
            return Err(Error::InvalidConfig(format!(
                "homology degree must be 0 or 1, got {degree}"
            )));
        }
        for p in &pairs {
            PersistencePair::new(p.birth, p.death)?;
        }
        pairs.sort_by(PersistencePair::cmp_key);
        Ok(Self { degree, pairs })
    }

    pub fn empty(degree: u8) -> Self {
        Self {
            degree: degree.min(1),
            pairs: Vec::new(),
        }
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn pairs(&self) -> &[PersistencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_essential()).count()
    }

    /// Copy of the diagram without its essential classes.
    pub fn finite_part(&self) -> PersistenceDiagram {
        PersistenceDiagram {
            degree: self.degree,
            pairs: self
                .pairs
                .iter()
                .copied()
                .filter(|p| !p.is_essential())
                .collect(),
        }
    }

    /// Number of bars alive at filtration value `t` (`birth <= t < death`).
    pub fn betti_at(&self, t: f64) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.birth <= t && t < p.death)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub enum EdgeCap {
    /// Keep every edge: the filtration runs to the cloud diameter.
    #[default]
    Diameter,
    /// Drop edges whose filtration value exceeds the cap. Classes still
    /// alive at the cap are reported as essential.
    Finite(f64),
}

/// Multiplier applied to Euclidean distances to obtain filtration values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConventionScale {
    /// Edge enters at the distance between its endpoints.
    #[default]
    Distance,
    /// Edge enters at half the distance (union-of-balls radius).
    HalfDistance,
}

impl ConventionScale {
    pub fn factor(self) -> f64 {
        match self {
            ConventionScale::Distance => 1.0,
            ConventionScale::HalfDistance => 0.5,
        }
    }

    pub fn from_factor(factor: f64) -> Result<Self> {
        if factor == 1.0 {
            Ok(ConventionScale::Distance)
        } else if factor == 0.5 {
            Ok(ConventionScale::HalfDistance)
        } else {
            Err(Error::InvalidConfig(format!(
                "convention scale must be 1 or 0.5, got {factor}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipsConfig {
    /// Clouds larger than this are reduced by farthest-point sampling.
    pub max_points: usize,
    pub edge_cap: EdgeCap,
    pub convention_scale: ConventionScale,
}

impl Default for RipsConfig {
    fn default() -> Self {
        Self {
            max_points: 128,
            edge_cap: EdgeCap::Diameter,
            convention_scale: ConventionScale::Distance,
        }
    }
}

impl RipsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "max_points must be at least 3, got {}",
                self.max_points
            )));
        }
        if let EdgeCap::Finite(cap) = self.edge_cap {
            if cap.is_nan() || cap <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "edge cap must be positive, got {cap}"
                )));
            }
        }
        Ok(())
    }
}

/// Persistence diagram of `cloud` in the requested degree.
pub fn rips_diagram(
    cloud: &PointCloud,
    degree: u8,
    config: &RipsConfig,
) -> Result<PersistenceDiagram> {
    if degree > 1 {
        return Err(Error::InvalidConfig(format!(
            "homology degree must be 0 or 1, got {degree}"
        )));
    }
    let [h0, h1] = compute(cloud, config, degree == 1)?;
    Ok(if degree == 0 { h0 } else { h1 })
}

/// Degree-0 and degree-1 diagrams from one shared edge filtration.
pub fn rips_diagrams(cloud: &PointCloud, config: &RipsConfig) -> Result<[PersistenceDiagram; 2]> {
    compute(cloud, config, true)
}

fn compute(
    cloud: &PointCloud,
    config: &RipsConfig,
    with_h1: bool,
) -> Result<[PersistenceDiagram; 2]> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud(
            "degree-0 persistence needs at least one point",
        ));
    }
    let sampled;
    let points = if cloud.len() > config.max_points {
        sampled = farthest_point_subsample(cloud, config.max_points);
        sampled.points()
    } else {
        cloud.points()
    };
    let filtration = EdgeFiltration::build(points, config);
    let (h0, positive) = filtration.degree0();
    let h1 = if with_h1 {
        filtration.degree1(&positive)
    } else {
        Vec::new()
    };
    Ok([
        PersistenceDiagram::new(0, h0)?,
        PersistenceDiagram::new(1, h1)?,
    ])
}

/// Number of degree-`degree` classes alive at filtration value `t`.
pub fn betti_at(cloud: &PointCloud, degree: u8, t: f64, config: &RipsConfig) -> Result<usize> {
    Ok(rips_diagram(cloud, degree, config)?.betti_at(t))
}

/// Deterministic farthest-point sampling seeded at the first point of the
/// cloud (the smallest in row-major order). Ties go to the lower index.
pub fn farthest_point_subsample(cloud: &PointCloud, count: usize) -> PointCloud {
    let points = cloud.points();
    if points.len() <= count {
        return cloud.clone();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut current = 0;
    while chosen.len() < count {
        chosen.push(points[current]);
        let mut next = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = p.dist(&points[current]);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best {
                best = nearest[i];
                next = i;
            }
        }
        current = next;
    }
    PointCloud::new(chosen).expect("subsample of a valid cloud")
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    weight: f64,
    u: u32,
    v: u32,
}

/// Triangle identified by its position in the filtration: the order of its
/// longest edge, then its vertices lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct TriangleKey {
    diameter_edge: u32,
    vertices: [u32; 3],
}

struct EdgeFiltration {
    n: usize,
    edges: Vec<Edge>,
    /// `order[u * n + v]` is the filtration index of edge `{u, v}`, or `NONE`.
    order: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl EdgeFiltration {
    fn build(points: &[Point2], config: &RipsConfig) -> Self {
        let n = points.len();
        let scale = config.convention_scale.factor();
        let mut weights = vec![0.0; n * n];
        for u in 0..n {
            for v in u + 1..n {
                let w = scale * points[u].dist(&points[v]);
                weights[u * n + v] = w;
                weights[v * n + u] = w;
            }
        }
        // Past the enclosing radius the complex is a cone, so every later
        // class has zero persistence and those edges can be dropped.
        let enclosing = (0..n)
            .map(|u| {
                weights[u * n..(u + 1) * n]
                    .iter()
                    .copied()
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let threshold = match config.edge_cap {
            EdgeCap::Finite(cap) => cap.min(enclosing),
            EdgeCap::Diameter => enclosing,
        };
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let weight = weights[u * n + v];
                if weight <= threshold {
                    edges.push(Edge {
                        weight,
                        u: u as u32,
                        v: v as u32,
                    });
                }
            }
        }
        edges.sort_by(|a, b| {
            a.weight
                .total_cmp(&b.weight)
                .then_with(|| (a.u, a.v).cmp(&(b.u, b.v)))
        });
        let mut order = vec![NONE; n * n];
        for (idx, e) in edges.iter().enumerate() {
            order[e.u as usize * n + e.v as usize] = idx as u32;
            order[e.v as usize * n + e.u as usize] = idx as u32;
        }
        Self { n, edges, order }
    }

    fn edge_order(&self, u: u32, v: u32) -> u32 {
        self.order[u as usize * self.n + v as usize]
    }

    /// Degree-0 pairs, plus the filtration indices of the edges that do not
    /// merge components.
    fn degree0(&self) -> (Vec<PersistencePair>, Vec<u32>) {
        let mut uf = UnionFind::new(self.n);
        let mut pairs = Vec::with_capacity(self.n);
        let mut positive = Vec::new();
        for (idx, e) in self.edges.iter().enumerate() {
            if uf.union(e.u as usize, e.v as usize) {
                if e.weight > 0.0 {
                    pairs.push(PersistencePair {
                        birth: 0.0,
                        death: e.weight,
                    });
                }
            } else {
                positive.push(idx as u32);
            }
        }
        for _ in 0..uf.components {
            pairs.push(PersistencePair {
                birth: 0.0,
                death: f64::INFINITY,
            });
        }
        (pairs, positive)
    }

    fn triangle(&self, a: u32, b: u32, c: u32) -> Option<TriangleKey> {
        let ab = self.edge_order(a, b);
        let ac = self.edge_order(a, c);
        let bc = self.edge_order(b, c);
        if ab == NONE || ac == NONE || bc == NONE {
            return None;
        }
        let mut vertices = [a, b, c];
        vertices.sort_unstable();
        Some(TriangleKey {
            diameter_edge: ab.max(ac).max(bc),
            vertices,
        })
    }

    /// Cofacets of edge `idx`, sorted by filtration order.
    fn coboundary(&self, idx: u32) -> Vec<TriangleKey> {
        let e = self.edges[idx as usize];
        let mut col: Vec<TriangleKey> = (0..self.n as u32)
            .filter(|&k| k != e.u && k != e.v)
            .filter_map(|k| self.triangle(e.u, e.v, k))
            .collect();
        col.sort_unstable();
        col
    }

    /// Earliest cofacet of edge `idx`.
    fn first_cofacet(&self, idx: u32) -> Option<TriangleKey> {
        let e = self.edges[idx as usize];
        (0..self.n as u32)
            .filter(|&k| k != e.u && k != e.v)
            .filter_map(|k| self.triangle(e.u, e.v, k))
            .min()
    }

    fn degree1(&self, positive: &[u32]) -> Vec<PersistencePair> {
        let mut pairs = Vec::new();
        // Columns that claimed a pivot. Apparent pairs keep only their edge
        // and rebuild the coboundary when another column needs it.
        let mut pivots: HashMap<TriangleKey, Reduced> = HashMap::new();
        for &idx in positive.iter().rev() {
            let birth = self.edges[idx as usize].weight;
            // Apparent pair: the earliest cofacet has this edge as its diameter,
            // and no later edge can have reached it.
            let first = self.first_cofacet(idx);
            if let Some(first) = first {
                if first.diameter_edge == idx {
                    pivots.insert(first, Reduced::Coboundary(idx));
                    continue;
                }
            }
            // Working column as a lazy min-heap; entries cancel in pairs.
            let mut col: BinaryHeap<Reverse<TriangleKey>> =
                self.coboundary(idx).into_iter().map(Reverse).collect();
            let mut low = pop_pivot(&mut col);
            while let Some(pivot) = low {
                match pivots.get(&pivot) {
                    Some(Reduced::Coboundary(other)) => {
                        col.extend(self.coboundary(*other).into_iter().skip(1).map(Reverse))
                    }
                    Some(Reduced::Column(other)) => {
                        col.extend(other[1..].iter().copied().map(Reverse))
                    }
                    None => break,
                }
                low = pop_pivot(&mut col);
            }
            match low {
                Some(low) => {
                    let death = self.edges[low.diameter_edge as usize].weight;
                    if death > birth {
                        pairs.push(PersistencePair { birth, death });
                    }
                    let mut reduced = vec![low];
                    while let Some(next) = pop_pivot(&mut col) {
                        reduced.push(next);
                    }
                    pivots.insert(low, Reduced::Column(reduced));
                }
                None => pairs.push(PersistencePair {
                    birth,
                    death: f64::INFINITY,
                }),
            }
        }
        pairs
    }
}

/// Removes and returns the smallest entry with odd multiplicity.
fn pop_pivot(heap: &mut BinaryHeap<Reverse<TriangleKey>>) -> Option<TriangleKey> {
    while let Some(Reverse(top)) = heap.pop() {
        let mut odd = true;
        while heap.peek() == Some(&Reverse(top)) {
            heap.pop();
            odd = !odd;
        }
        if odd {
            return Some(top);
        }
    }
    None
}

enum Reduced {
    Coboundary(u32),
    Column(Vec<TriangleKey>),
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(xy: &[(f64, f64)]) -> PointCloud {
        PointCloud::from_xy(xy).unwrap()
    }

    fn bars(d: &PersistenceDiagram) -> Vec<(f64, f64)> {
        d.pairs().iter().map(|p| (p.birth, p.death)).collect()
    }

    const SQUARE: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

    #[test]
    fn two_points_degree0() {
        let d = rips_diagram(&cloud(&[(0.0, 0.0), (3.0, 4.0)]), 0, &RipsConfig::default()).unwrap();
        assert_eq!(bars(&d), vec![(0.0, 5.0), (0.0, f64::INFINITY)]);
    }

    #[test]
    fn collinear_degree0_follows_spanning_tree() {
        let d = rips_diagram(
            &cloud(&[(0.0, 0.0), (3.0, 0.0), (10.0, 0.0)]),
            0,
            &RipsConfig::default(),
        )
        .unwrap();
        assert_eq!(bars(&d), vec![(0.0, 3.0), (0.0, 7.0), (0.0, f64::INFINITY)]);
    }

    #[test]
    fn unit_square_has_one_loop() {
        let d = rips_diagram(&cloud(&SQUARE), 1, &RipsConfig::default()).unwrap();
        assert_eq!(bars(&d), vec![(1.0, 2.0f64.sqrt())]);
        assert_eq!(d.betti_at(1.2), 1);
        assert_eq!(d.betti_at(1.5), 0);
    }

    #[test]
    fn equilateral_triangle_has_no_loop() {
        let h = 3.0f64.sqrt() / 2.0;
        let d = rips_diagram(
            &cloud(&[(0.0, 0.0), (1.0, 0.0), (0.5, h)]),
            1,
            &RipsConfig::default(),
        )
        .unwrap();
        assert!(d.is_empty(), "{:?}", d);
    }

    #[test]
    fn small_clouds_have_empty_h1() {
        let d = rips_diagram(&cloud(&[(0.0, 0.0), (1.0, 0.0)]), 1, &RipsConfig::default()).unwrap();
        assert!(d.is_empty());
        let d = rips_diagram(&cloud(&[(0.0, 0.0)]), 0, &RipsConfig::default()).unwrap();
        assert_eq!(bars(&d), vec![(0.0, f64::INFINITY)]);
    }

    #[test]
    fn betti_two_points() {
        let c = cloud(&[(0.0, 0.0), (5.0, 0.0)]);
        let cfg = RipsConfig::default();
        assert_eq!(betti_at(&c, 0, 2.0, &cfg).unwrap(), 2);
        assert_eq!(betti_at(&c, 0, 6.0, &cfg).unwrap(), 1);
    }

    #[test]
    fn half_distance_convention_halves_everything() {
        let cfg = RipsConfig {
            convention_scale: ConventionScale::HalfDistance,
            ..RipsConfig::default()
        };
        let d = rips_diagram(&cloud(&SQUARE), 1, &cfg).unwrap();
        assert_eq!(bars(&d), vec![(0.5, 2.0f64.sqrt() / 2.0)]);
    }

    #[test]
    fn finite_cap_leaves_essential_classes() {
        let cfg = RipsConfig {
            edge_cap: EdgeCap::Finite(1.2),
            ..RipsConfig::default()
        };
        let h1 = rips_diagram(&cloud(&SQUARE), 1, &cfg).unwrap();
        assert_eq!(bars(&h1), vec![(1.0, f64::INFINITY)]);
        let h0 = rips_diagram(&cloud(&[(0.0, 0.0), (5.0, 0.0)]), 0, &cfg).unwrap();
        assert_eq!(h0.essential_count(), 2);
    }

    #[test]
    fn errors() {
        assert!(rips_diagram(&PointCloud::default(), 0, &RipsConfig::default()).is_err());
        assert!(rips_diagram(&cloud(&SQUARE), 2, &RipsConfig::default()).is_err());
        let bad = RipsConfig {
            max_points: 2,
            ..RipsConfig::default()
        };
        assert!(rips_diagram(&cloud(&SQUARE), 0, &bad).is_err());
        let bad = RipsConfig {
            edge_cap: EdgeCap::Finite(0.0),
            ..RipsConfig::default()
        };
        assert!(rips_diagram(&cloud(&SQUARE), 0, &bad).is_err());
    }

    #[test]
    fn subsample_is_deterministic_and_spread() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 0.0)).collect();
        let c = cloud(&pts);
        let s = farthest_point_subsample(&c, 3);
        let xs: Vec<f64> = s.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 24.0, 49.0]);
        assert_eq!(s, farthest_point_subsample(&c, 3));
    }

    #[test]
    fn pair_validation() {
        assert!(PersistencePair::new(1.0, 1.0).is_err());
        assert!(PersistencePair::new(-1.0, 1.0).is_err());
        assert!(PersistencePair::new(0.0, f64::INFINITY).is_ok());
    }
}
