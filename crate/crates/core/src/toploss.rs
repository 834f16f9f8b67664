//! Topology-aware cross-entropy.
//!
//! Each image contributes `omega * CE`, where `CE` is the summed binary
//! cross-entropy over its pixels and
//! `omega = 1 + alpha * d0 + beta * d1` grows with the Wasserstein cost
//! between the Rips persistence diagrams of the ground-truth contour and
//! the thresholded prediction's contour. Images whose ground truth contains
//! a small (great-vessel) component are compared in degree 0; images with
//! only large (aortic) components in degree 1.
//!
//! `omega` is a constant with respect to the prediction: only the
//! cross-entropy term carries gradient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dims, extract_contour, label_components, BinaryMask, Connectivity};
use crate::matching::{wasserstein, GroundMetric};
use crate::rips::{rips_diagram, PersistenceDiagram, RipsConfig};

/// Per-pixel foreground posteriors in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, probs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || probs.len() != width * height {
            return Err(Error::InvalidProbabilityMap(format!(
                "{} values for a {width}x{height} map",
                probs.len()
            )));
        }
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidProbabilityMap(format!(
                "value {} at pixel {i} is outside [0, 1]",
                probs[i]
            )));
        }
        Ok(Self {
            width,
            height,
            probs,
        })
    }

    /// A map that is exactly 1 on the foreground and 0 elsewhere.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            probs: mask.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Foreground wherever the posterior is at least `threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        let data = self
            .probs
            .iter()
            .map(|&p| u8::from(p >= threshold))
            .collect();
        BinaryMask::new(self.width, self.height, data).expect("valid dimensions")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    /// At least one component smaller than the great-vessel area threshold.
    GreatVessel,
    /// Only components at or above the threshold.
    AortaOnly,
    /// No foreground at all.
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha_gv: f64,
    pub beta_gv: f64,
    pub alpha_ao: f64,
    pub beta_ao: f64,
    /// Posterior level at which the prediction is binarised.
    pub prob_threshold: f64,
    /// Components smaller than this many pixels count as great vessels.
    pub gv_area_threshold: usize,
    pub clip_epsilon: f64,
    pub wasserstein_q: f64,
    pub ground_metric: GroundMetric,
    pub connectivity: Connectivity,
    pub rips: RipsConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha_gv: 5.0e-6,
            beta_gv: 0.0,
            alpha_ao: 0.0,
            beta_ao: 1.0e-4,
            prob_threshold: 0.5,
            gv_area_threshold: 1500,
            clip_epsilon: 1e-7,
            wasserstein_q: 2.0,
            ground_metric: GroundMetric::LInf,
            connectivity: Connectivity::Eight,
            rips: RipsConfig::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("alpha_gv", self.alpha_gv),
            ("beta_gv", self.beta_gv),
            ("alpha_ao", self.alpha_ao),
            ("beta_ao", self.beta_ao),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return bad(format!(
                "prob_threshold must lie in (0, 1), got {}",
                self.prob_threshold
            ));
        }
        if self.gv_area_threshold == 0 {
            return bad("gv_area_threshold must be positive".into());
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return bad(format!(
                "clip_epsilon must lie in (0, 0.5), got {}",
                self.clip_epsilon
            ));
        }
        if !(self.wasserstein_q.is_finite() && self.wasserstein_q > 0.0) {
            return bad(format!(
                "wasserstein_q must be positive, got {}",
                self.wasserstein_q
            ));
        }
        self.rips.validate()
    }

    /// `(alpha, beta)` used for images of the given branch.
    pub fn constants(&self, branch: Branch) -> (f64, f64) {
        match branch {
            Branch::GreatVessel => (self.alpha_gv, self.beta_gv),
            Branch::AortaOnly => (self.alpha_ao, self.beta_ao),
            Branch::Empty => (0.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopoWeight {
    pub omega: f64,
    pub d0: f64,
    pub d1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub branch: Branch,
}

impl TopoWeight {
    /// `1 + alpha * d0 + beta * d1` with the branch's constants.
    pub fn from_distances(branch: Branch, d0: f64, d1: f64, config: &LossConfig) -> Self {
        let (alpha, beta) = config.constants(branch);
        Self {
            omega: 1.0 + alpha * d0 + beta * d1,
            d0,
            d1,
            alpha,
            beta,
            branch,
        }
    }

    pub fn unit(branch: Branch) -> Self {
        Self {
            omega: 1.0,
            d0: 0.0,
            d1: 0.0,
            alpha: 0.0,
            beta: 0.0,
            branch,
        }
    }
}

/// Summed binary cross-entropy with posteriors clamped to
/// `[clip_epsilon, 1 - clip_epsilon]`.
pub fn cross_entropy(gt: &BinaryMask, pred: &ProbabilityMap, clip_epsilon: f64) -> Result<f64> {
    check_dims((gt.width(), gt.height()), (pred.width, pred.height))?;
    let hi = 1.0 - clip_epsilon;
    Ok(gt
        .data()
        .iter()
        .zip(&pred.probs)
        .map(|(&p, &q)| {
            let q = q.clamp(clip_epsilon, hi);
            if p == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum())
}

/// Derivative of [`cross_entropy`] with respect to each posterior. Zero
/// where the posterior is clamped.
pub fn cross_entropy_gradient(
    gt: &BinaryMask,
    pred: &ProbabilityMap,
    clip_epsilon: f64,
) -> Result<Vec<f64>> {
    check_dims((gt.width(), gt.height()), (pred.width, pred.height))?;
    let hi = 1.0 - clip_epsilon;
    Ok(gt
        .data()
        .iter()
        .zip(&pred.probs)
        .map(|(&p, &q)| {
            if q < clip_epsilon || q > hi {
                0.0
            } else if p == 1 {
                -1.0 / q
            } else {
                1.0 / (1.0 - q)
            }
        })
        .collect())
}

pub fn classify_branch(gt: &BinaryMask, config: &LossConfig) -> Branch {
    let labels = label_components(gt, config.connectivity);
    if labels.component_count == 0 {
        Branch::Empty
    } else if labels
        .component_areas
        .iter()
        .any(|&a| a < config.gv_area_threshold)
    {
        Branch::GreatVessel
    } else {
        Branch::AortaOnly
    }
}

/// Ground-truth side of the weight computation, reusable across epochs.
#[derive(Clone, Debug)]
pub struct TopoReference {
    width: usize,
    height: usize,
    branch: Branch,
    config: LossConfig,
    h0: Option<PersistenceDiagram>,
    h1: Option<PersistenceDiagram>,
}

impl TopoReference {
    pub fn new(gt: &BinaryMask, config: &LossConfig) -> Result<Self> {
        config.validate()?;
        let branch = classify_branch(gt, config);
        let (alpha, beta) = config.constants(branch);
        let contour = extract_contour(gt);
        let diagram = |degree: u8, used: bool| -> Result<Option<PersistenceDiagram>> {
            if !used || contour.is_empty() {
                return Ok(None);
            }
            Ok(Some(
                rips_diagram(&contour, degree, &config.rips)?.finite_part(),
            ))
        };
        Ok(Self {
            width: gt.width(),
            height: gt.height(),
            branch,
            config: *config,
            h0: diagram(0, alpha != 0.0)?,
            h1: diagram(1, beta != 0.0)?,
        })
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// Weight for an already binarised prediction.
    pub fn weight(&self, pred_mask: &BinaryMask) -> Result<TopoWeight> {
        check_dims(
            (self.width, self.height),
            (pred_mask.width(), pred_mask.height()),
        )?;
        if self.branch == Branch::Empty {
            return Ok(TopoWeight::unit(Branch::Empty));
        }
        let contour = extract_contour(pred_mask);
        let distance = |reference: &Option<PersistenceDiagram>, degree: u8| -> Result<f64> {
            let Some(reference) = reference else {
                return Ok(0.0);
            };
            let predicted = if contour.is_empty() {
                PersistenceDiagram::empty(degree)
            } else {
                rips_diagram(&contour, degree, &self.config.rips)?.finite_part()
            };
            Ok(wasserstein(
                reference,
                &predicted,
                self.config.wasserstein_q,
                self.config.ground_metric,
            )?
            .value)
        };
        let d0 = distance(&self.h0, 0)?;
        let d1 = distance(&self.h1, 1)?;
        Ok(TopoWeight::from_distances(
            self.branch,
            d0,
            d1,
            &self.config,
        ))
    }
}

pub fn topo_weight(
    gt: &BinaryMask,
    pred: &ProbabilityMap,
    config: &LossConfig,
) -> Result<TopoWeight> {
    check_dims((gt.width(), gt.height()), (pred.width, pred.height))?;
    TopoReference::new(gt, config)?.weight(&pred.threshold(config.prob_threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageLoss {
    pub omega: f64,
    pub ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_image: Vec<ImageLoss>,
}

/// `sum_I omega_I * CE_I` over a batch. During warm-up every weight is 1.
/// Weights are computed in parallel; the sum runs in batch order.
pub fn topology_aware_loss(
    batch: &[(BinaryMask, ProbabilityMap)],
    config: &LossConfig,
    warmup_active: bool,
) -> Result<LossBreakdown> {
    config.validate()?;
    let per_image = batch
        .par_iter()
        .map(|(gt, pred)| {
            let ce = cross_entropy(gt, pred, config.clip_epsilon)?;
            let omega = if warmup_active {
                1.0
            } else {
                topo_weight(gt, pred, config)?.omega
            };
            Ok(ImageLoss { omega, ce })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per_image.iter().map(|l| l.omega * l.ce).sum();
    Ok(LossBreakdown { total, per_image })
}
