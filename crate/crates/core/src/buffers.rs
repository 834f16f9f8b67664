//! Entry points over flat row-major buffers, for callers in other
//! languages. Shapes are `(height, width)`. Inputs are read in place and
//! results are identical to the typed API.

use crate::error::{Error, Result};
use crate::geometry::{check_dims, BinaryMask, PointCloud};
use crate::matching::{bottleneck, wasserstein, GroundMetric};
use crate::rips::{rips_diagram, PersistenceDiagram, PersistencePair, RipsConfig};
use crate::toploss::{topo_weight as typed_topo_weight, LossConfig, ProbabilityMap, TopoWeight};

/// Topological weight of a posterior buffer against a 0/1 mask buffer.
pub fn topo_weight(
    gt: &[u8],
    gt_shape: (usize, usize),
    pred: &[f64],
    pred_shape: (usize, usize),
    config: &LossConfig,
) -> Result<TopoWeight> {
    let (gt_h, gt_w) = gt_shape;
    let (pred_h, pred_w) = pred_shape;
    check_dims((gt_w, gt_h), (pred_w, pred_h))?;
    let gt = BinaryMask::new(gt_w, gt_h, gt.to_vec())?;
    let pred = ProbabilityMap::new(pred_w, pred_h, pred.to_vec())?;
    typed_topo_weight(&gt, &pred, config)
}

/// Diagram of an `N x 2` coordinate buffer as a flat `[birth, death, ...]`
/// buffer in the diagram's order. Essential classes have death `inf`.
pub fn rips_pairs(xy: &[f64], degree: u8, config: &RipsConfig) -> Result<Vec<f64>> {
    if !xy.len().is_multiple_of(2) {
        return Err(Error::InvalidPoint(format!(
            "coordinate buffer has odd length {}",
            xy.len()
        )));
    }
    let coords: Vec<(f64, f64)> = xy.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let diagram = rips_diagram(&PointCloud::from_xy(&coords)?, degree, config)?;
    Ok(diagram
        .pairs()
        .iter()
        .flat_map(|p| [p.birth, p.death])
        .collect())
}

fn diagram(pairs: &[f64]) -> Result<PersistenceDiagram> {
    if !pairs.len().is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "pair buffer has odd length {}",
            pairs.len()
        )));
    }
    let pairs = pairs
        .chunks_exact(2)
        .map(|c| PersistencePair::new(c[0], c[1]))
        .collect::<Result<_>>()?;
    PersistenceDiagram::new(0, pairs)
}

/// Wasserstein value between two flat `[birth, death, ...]` buffers.
pub fn wasserstein_distance(a: &[f64], b: &[f64], q: f64, metric: GroundMetric) -> Result<f64> {
    Ok(wasserstein(&diagram(a)?, &diagram(b)?, q, metric)?.value)
}

/// Bottleneck distance between two flat `[birth, death, ...]` buffers.
pub fn bottleneck_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(bottleneck(&diagram(a)?, &diagram(b)?)?.value)
}
