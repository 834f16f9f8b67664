//! Topology-aware loss weighting for vessel segmentation.
//!
//! The pipeline runs from binary masks to contour point clouds, from point
//! clouds to Vietoris-Rips persistence diagrams in degrees 0 and 1, and from
//! pairs of diagrams to Wasserstein costs. Those costs become a per-image
//! weight `omega = 1 + alpha * d0 + beta * d1` on the image's cross-entropy.
//!
//! ```
//! use topoloss::{extract_contour, rips_diagram, BinaryMask, RipsConfig};
//!
//! // The boundary of a filled 5x5 square is one loop.
//! let mask = BinaryMask::from_fn(7, 7, |x, y| (1..=5).contains(&x) && (1..=5).contains(&y))?;
//! let cloud = extract_contour(&mask);
//! let h1 = rips_diagram(&cloud, 1, &RipsConfig::default())?;
//! assert_eq!(h1.len(), 1);
//! # Ok::<(), topoloss::Error>(())
//! ```
//!
//! The guide in `book/` walks through each stage; its code samples are
//! compiled and run as doc-tests of this crate.

pub mod buffers;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod rips;
pub mod synth;
pub mod toploss;

pub use error::{Error, Result};
pub use geometry::{
    extract_contour, hausdorff, label_components, BinaryMask, ComponentLabeling, Connectivity,
    Point2, PointCloud,
};
pub use matching::{
    bottleneck, solve_assignment, wasserstein, DiagramDistanceReport, GroundMetric, MatchedPair,
};
pub use metrics::{
    pixel_metrics, vessel_metrics, weighted_hausdorff, PixelMetrics, VesselMatchReport,
};
pub use rips::{
    betti_at, rips_diagram, rips_diagrams, ConventionScale, EdgeCap, PersistenceDiagram,
    PersistencePair, RipsConfig,
};
pub use toploss::{
    classify_branch, cross_entropy, cross_entropy_gradient, topo_weight, topology_aware_loss,
    Branch, LossConfig, ProbabilityMap, TopoWeight,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/masks-and-contours.md")]
    mod masks_and_contours {}
    #[doc = include_str!("../../../book/src/persistence.md")]
    mod persistence {}
    #[doc = include_str!("../../../book/src/diagram-distances.md")]
    mod diagram_distances {}
    #[doc = include_str!("../../../book/src/topology-aware-loss.md")]
    mod topology_aware_loss {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/toy-training.md")]
    mod toy_training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reference-configuration.md")]
    mod reference_configuration {}
}
