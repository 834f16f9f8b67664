//! Synthetic vessel scenes and a small logistic segmenter trained with the
//! topology-aware loss.
//!
//! Scenes are drawn on a 64x64 canvas by default: an elliptic aortic
//! cross-section, a handful of small round great vessels, or both. The
//! input image is the mask, lightly blurred, plus Gaussian noise.
//!
//! The segmenter is a per-pixel logistic regression over the raw
//! intensities of a 5x5 neighbourhood. It is convex in its parameters, so
//! its loss curves are easy to reason about, and its gradients are written
//! out by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BinaryMask;
use crate::metrics::{
    pixel_metrics, vessel_metrics, weighted_hausdorff, HausdorffSummary, PixelMetrics,
    PixelSummary, VesselSummary,
};
use crate::toploss::{cross_entropy, LossConfig, ProbabilityMap, TopoReference};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    AortaOnly,
    GreatVessels,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub image_size: usize,
    pub scenario: Scenario,
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise, in `[0, 1]`.
    pub noise_level: f64,
}

impl SceneSpec {
    pub fn new(scenario: Scenario, seed: u64, noise_level: f64) -> Self {
        Self {
            image_size: 64,
            scenario,
            seed,
            noise_level,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    /// Input intensities in `[0, 1]`.
    pub image: ProbabilityMap,
    pub gt: BinaryMask,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Disk {
    cx: f64,
    cy: f64,
    r: f64,
}

impl Disk {
    fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.r * self.r
    }
}

/// Places `count` non-overlapping disks in the box `[x0, x1] x [y0, y1]`
/// (centre coordinates), each pair separated by at least `gap` pixels.
fn place_disks(
    rng: &mut ChaCha8Rng,
    count: usize,
    radius: (f64, f64),
    x: (f64, f64),
    y: (f64, f64),
    gap: f64,
) -> Vec<Disk> {
    let mut disks: Vec<Disk> = Vec::with_capacity(count);
    let mut attempts = 0;
    while disks.len() < count && attempts < 10_000 {
        attempts += 1;
        let r = rng.random_range(radius.0..=radius.1);
        let cx = rng.random_range(x.0..=x.1);
        let cy = rng.random_range((y.0 + r)..=(y.1 - r));
        let candidate = Disk { cx, cy, r };
        let clear = disks
            .iter()
            .all(|d| ((d.cx - cx).powi(2) + (d.cy - cy).powi(2)).sqrt() >= d.r + r + gap);
        if clear {
            disks.push(candidate);
        }
    }
    disks
}

/// Draws a scene deterministically from its spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.image_size < 32 {
        return Err(Error::InvalidConfig(format!(
            "image_size must be at least 32, got {}",
            spec.image_size
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise_level) {
        return Err(Error::InvalidConfig(format!(
            "noise_level must lie in [0, 1], got {}",
            spec.noise_level
        )));
    }
    let size = spec.image_size;
    let s = size as f64 / 64.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ellipses = Vec::new();
    let mut disks = Vec::new();
    match spec.scenario {
        Scenario::AortaOnly => {
            ellipses.push(Ellipse {
                cx: 32.0 * s + rng.random_range(-2.0..=2.0) * s,
                cy: 32.0 * s + rng.random_range(-2.0..=2.0) * s,
                rx: rng.random_range(21.0..=25.0) * s,
                ry: rng.random_range(24.0..=27.0) * s,
                angle: rng.random_range(-0.3..=0.3),
            });
        }
        Scenario::GreatVessels => {
            let count = rng.random_range(2..=5);
            disks = place_disks(
                &mut rng,
                count,
                (3.0 * s, 6.0 * s),
                (9.0 * s, 54.0 * s),
                (2.0 * s, 61.0 * s),
                4.0 * s,
            );
        }
        Scenario::Mixed => {
            ellipses.push(Ellipse {
                cx: 22.0 * s,
                cy: 32.0 * s + rng.random_range(-2.0..=2.0) * s,
                rx: rng.random_range(18.0..=19.0) * s,
                ry: rng.random_range(28.0..=29.0) * s,
                angle: 0.0,
            });
            let count = rng.random_range(2..=3);
            disks = place_disks(
                &mut rng,
                count,
                (3.0 * s, 5.0 * s),
                (48.0 * s, 57.0 * s),
                (2.0 * s, 61.0 * s),
                4.0 * s,
            );
        }
    }
    let gt = BinaryMask::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        ellipses.iter().any(|e| e.contains(fx, fy)) || disks.iter().any(|d| d.contains(fx, fy))
    })?;

    // 0.7 * mask + 0.3 * 3x3 box blur keeps foreground >= 0.7 and
    // background <= 0.3 before noise.
    let blur = box_blur3(&gt);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let image: Vec<f64> = gt
        .data()
        .iter()
        .zip(&blur)
        .map(|(&m, &b)| {
            let clean = 0.7 * f64::from(m) + 0.3 * b;
            let n = if spec.noise_level > 0.0 {
                spec.noise_level * noise.sample(&mut rng)
            } else {
                0.0
            };
            (clean + n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Scene {
        spec: *spec,
        image: ProbabilityMap::new(size, size, image)?,
        gt,
    })
}

fn box_blur3(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    sum += u32::from(mask.get(nx, ny));
                }
            }
            out[y * w + x] = f64::from(sum) / 9.0;
        }
    }
    out
}

/// `count` scenes with seeds `seed, seed + 1, ...`. `scenarios` is cycled.
pub fn synthetic_dataset(
    count: usize,
    scenarios: &[Scenario],
    seed: u64,
    noise_level: f64,
) -> Result<Vec<Scene>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidConfig("no scenarios given".into()));
    }
    (0..count)
        .map(|i| {
            let scenario = scenarios[i % scenarios.len()];
            generate_scene(&SceneSpec::new(
                scenario,
                seed.wrapping_add(i as u64),
                noise_level,
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossMode {
    CeOnly,
    Topo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRefresh {
    /// Weights from one forward pass over the training set at the start of
    /// each epoch.
    PerEpoch,
    /// Weights recomputed for each image right before its update.
    PerForward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_refresh: WeightRefresh,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            warmup_epochs: 25,
            patience: 40,
            learning_rate: 128.0,
            batch_size: 1,
            weight_refresh: WeightRefresh::PerEpoch,
        }
    }
}

impl ToyTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

const STENCIL: usize = 5;
pub const FEATURES: usize = STENCIL * STENCIL;

/// Logistic model over a 5x5 intensity stencil (zero padded), plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Default for LogisticModel {
    fn default() -> Self {
        Self {
            weights: vec![0.0; FEATURES],
            bias: 0.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stencil features of every pixel, row-major, `FEATURES` values each.
fn stencil_features(image: &ProbabilityMap) -> Vec<f64> {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let half = (STENCIL / 2) as isize;
    let probs = image.probs();
    let mut out = Vec::with_capacity(probs.len() * FEATURES);
    for y in 0..h {
        for x in 0..w {
            for dy in -half..=half {
                for dx in -half..=half {
                    let (nx, ny) = (x + dx, y + dy);
                    let v = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        0.0
                    } else {
                        probs[(ny * w + nx) as usize]
                    };
                    out.push(v);
                }
            }
        }
    }
    out
}

impl LogisticModel {
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn predict_features(
        &self,
        features: &[f64],
        width: usize,
        height: usize,
    ) -> Result<ProbabilityMap> {
        let probs = features
            .chunks_exact(FEATURES)
            .map(|x| {
                let z: f64 =
                    self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
                sigmoid(z)
            })
            .collect();
        ProbabilityMap::new(width, height, probs)
            .map_err(|_| Error::Training("model produced a non-finite posterior".into()))
    }

    pub fn predict(&self, image: &ProbabilityMap) -> Result<ProbabilityMap> {
        self.predict_features(&stencil_features(image), image.width(), image.height())
    }
}

/// Scene with its stencil features precomputed.
struct Prepared<'a> {
    scene: &'a Scene,
    features: Vec<f64>,
}

impl Prepared<'_> {
    fn predict(&self, model: &LogisticModel) -> Result<ProbabilityMap> {
        model.predict_features(
            &self.features,
            self.scene.gt.width(),
            self.scene.gt.height(),
        )
    }

    fn pixels(&self) -> f64 {
        self.scene.gt.data().len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over training images of `omega * CE / pixels`.
    pub train_loss: f64,
    /// Mean per-pixel cross-entropy on the validation split.
    pub val_loss: f64,
    pub warmup: bool,
    /// Weight applied to each training image in this epoch.
    pub omegas: Vec<f64>,
    /// Whether each training prediction that produced the weight matched
    /// its ground truth exactly.
    pub exact: Vec<bool>,
    /// Model parameters (weights, then bias) at the end of the epoch.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub pixel: PixelSummary,
    pub vessel: VesselSummary,
    pub hausdorff: HausdorffSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_mode: LossMode,
    pub config: ToyTrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
    /// Parameters from the best validation epoch.
    pub model: LogisticModel,
    pub train_metrics: SplitMetrics,
    pub val_metrics: SplitMetrics,
    pub test_metrics: Option<SplitMetrics>,
}

#[derive(Clone, Copy, Debug)]
pub struct Splits<'a> {
    pub train: &'a [Scene],
    pub val: &'a [Scene],
    pub test: &'a [Scene],
}

fn evaluate(
    model: &LogisticModel,
    scenes: &[Prepared<'_>],
    threshold: f64,
) -> Result<SplitMetrics> {
    let preds: Vec<BinaryMask> = scenes
        .iter()
        .map(|s| Ok(s.predict(model)?.threshold(threshold)))
        .collect::<Result<_>>()?;
    let pixel = PixelSummary::from_images(scenes.iter().map(|s| &s.scene.gt).zip(&preds))?;
    let reports = scenes
        .iter()
        .zip(&preds)
        .map(|(s, p)| vessel_metrics(&s.scene.gt, p))
        .collect::<Result<Vec<_>>>()?;
    let hausdorff = scenes
        .iter()
        .zip(&preds)
        .map(|(s, p)| weighted_hausdorff(&s.scene.gt, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitMetrics {
        pixel,
        vessel: VesselSummary::from_reports(&reports),
        hausdorff: HausdorffSummary::from_values(hausdorff),
    })
}

fn mean_ce(model: &LogisticModel, scenes: &[Prepared<'_>], clip: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in scenes {
        total += cross_entropy(&s.scene.gt, &s.predict(model)?, clip)? / s.pixels();
    }
    Ok(total / scenes.len() as f64)
}

/// Weight and exact-match flag for one training image under `model`.
fn image_weight(
    model: &LogisticModel,
    scene: &Prepared<'_>,
    reference: &TopoReference,
    threshold: f64,
) -> Result<(f64, bool)> {
    let mask = scene.predict(model)?.threshold(threshold);
    let exact = mask == scene.scene.gt;
    Ok((reference.weight(&mask)?.omega, exact))
}

fn prepare(scenes: &[Scene]) -> Vec<Prepared<'_>> {
    scenes
        .iter()
        .map(|scene| Prepared {
            scene,
            features: stencil_features(&scene.image),
        })
        .collect()
}

fn diverged(epoch: usize, what: &str, config: &ToyTrainConfig) -> Error {
    Error::Training(format!(
        "diverged at epoch {epoch}: {what}; try a smaller learning rate (currently {})",
        config.learning_rate
    ))
}

/// Trains a [`LogisticModel`] by mini-batch gradient descent on
/// `sum_I omega_I * CE_I` (normalised per pixel), with a cross-entropy-only
/// warm-up and early stopping on the validation cross-entropy.
pub fn toy_train(
    splits: Splits<'_>,
    loss_mode: LossMode,
    config: &ToyTrainConfig,
    loss_config: &LossConfig,
) -> Result<TrainReport> {
    config.validate()?;
    loss_config.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Training(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let train = prepare(splits.train);
    let val = prepare(splits.val);
    let test = prepare(splits.test);
    let references = match loss_mode {
        LossMode::CeOnly => Vec::new(),
        LossMode::Topo => train
            .par_iter()
            .map(|s| TopoReference::new(&s.scene.gt, loss_config))
            .collect::<Result<Vec<_>>>()?,
    };
    let threshold = loss_config.prob_threshold;
    let clip = loss_config.clip_epsilon;

    let mut model = LogisticModel::default();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let warmup = loss_mode == LossMode::CeOnly || epoch < config.warmup_epochs;
        let mut omegas = vec![1.0; train.len()];
        let mut exact = vec![false; train.len()];
        if !warmup && config.weight_refresh == WeightRefresh::PerEpoch {
            let weights = train
                .par_iter()
                .zip(&references)
                .map(|(s, r)| image_weight(&model, s, r, threshold))
                .collect::<Result<Vec<_>>>()?;
            for (i, (w, e)) in weights.into_iter().enumerate() {
                omegas[i] = w;
                exact[i] = e;
            }
        }

        for batch_start in (0..train.len()).step_by(config.batch_size) {
            let batch_end = (batch_start + config.batch_size).min(train.len());
            let mut grad_w = vec![0.0; FEATURES];
            let mut grad_b = 0.0;
            let mut pixels = 0.0;
            for i in batch_start..batch_end {
                let scene = &train[i];
                if !warmup && config.weight_refresh == WeightRefresh::PerForward {
                    let (w, e) = image_weight(&model, scene, &references[i], threshold)?;
                    omegas[i] = w;
                    exact[i] = e;
                }
                let omega = omegas[i];
                let probs = scene.predict(&model)?;
                // d(omega * CE)/dz = omega * (p - y) for each pixel logit z.
                for ((x, &p), &y) in scene
                    .features
                    .chunks_exact(FEATURES)
                    .zip(probs.probs())
                    .zip(scene.scene.gt.data())
                {
                    let g = omega * (p - f64::from(y));
                    for (gw, xi) in grad_w.iter_mut().zip(x) {
                        *gw += g * xi;
                    }
                    grad_b += g;
                }
                pixels += scene.pixels();
            }
            let step = config.learning_rate / pixels;
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= step * g;
            }
            model.bias -= step * grad_b;
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(diverged(epoch, "non-finite parameters", config));
            }
        }

        let mut train_loss = 0.0;
        for (s, &omega) in train.iter().zip(&omegas) {
            train_loss +=
                omega * cross_entropy(&s.scene.gt, &s.predict(&model)?, clip)? / s.pixels();
        }
        train_loss /= train.len() as f64;
        let val_loss = mean_ce(&model, &val, clip)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            let what = format!("train loss {train_loss}, validation loss {val_loss}");
            return Err(diverged(epoch, &what, config));
        }
        let params = model.params();
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            warmup,
            omegas,
            exact,
            params,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
        if epoch - best.1 >= config.patience {
            stopped_early = true;
            break;
        }
    }

    let (best_val_loss, best_epoch, best_model) = best;
    Ok(TrainReport {
        loss_mode,
        config: *config,
        epochs_run: history.len(),
        best_epoch,
        best_val_loss,
        stopped_early,
        history,
        train_metrics: evaluate(&best_model, &train, threshold)?,
        val_metrics: evaluate(&best_model, &val, threshold)?,
        test_metrics: if test.is_empty() {
            None
        } else {
            Some(evaluate(&best_model, &test, threshold)?)
        },
        model: best_model,
    })
}

/// Pixel metrics of `model` on a single scene.
pub fn scene_pixel_metrics(
    model: &LogisticModel,
    scene: &Scene,
    threshold: f64,
) -> Result<PixelMetrics> {
    pixel_metrics(
        &scene.gt,
        &model.predict(&scene.image)?.threshold(threshold),
    )
}

/// One line per epoch: `epoch,train_loss,val_loss,warmup,mean_omega,max_omega`.
pub fn history_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,warmup,mean_omega,max_omega\n");
    for r in &report.history {
        let mean = r.omegas.iter().sum::<f64>() / r.omegas.len() as f64;
        let max = r.omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            crate::io::format_float(r.train_loss),
            crate::io::format_float(r.val_loss),
            u8::from(r.warmup),
            crate::io::format_float(mean),
            crate::io::format_float(max),
        ));
    }
    out
}
