mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use topoloss::metrics::{pixel_metrics, weighted_hausdorff};
use topoloss::toploss::{cross_entropy, cross_entropy_gradient, topology_aware_loss};
use topoloss::*;

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::bool::weighted(0.4), w * h).prop_map(move |bits| {
            BinaryMask::new(w, h, bits.into_iter().map(u8::from).collect()).unwrap()
        })
    })
}

fn mask_pair(max_side: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let bits = || prop::collection::vec(prop::bool::weighted(0.4), w * h);
        (bits(), bits()).prop_map(move |(a, b)| {
            let m = |v: Vec<bool>| {
                BinaryMask::new(w, h, v.into_iter().map(u8::from).collect()).unwrap()
            };
            (m(a), m(b))
        })
    })
}

fn cloud_strategy(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..=max_len)
}

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

fn diagram_strategy(max_len: usize) -> impl Strategy<Value = PersistenceDiagram> {
    prop::collection::vec((0.0f64..10.0, 0.01f64..10.0), 0..=max_len)
        .prop_map(|v| diagram(&v.into_iter().map(|(b, p)| (b, b + p)).collect::<Vec<_>>()))
}

fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
    })
    .unwrap()
}

fn ring(w: usize, h: usize, cx: f64, cy: f64, r_out: f64, r_in: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        d2 <= r_out * r_out && d2 > r_in * r_in
    })
    .unwrap()
}

// Geometry

proptest! {
    #[test]
    fn contour_lies_in_foreground(mask in mask_strategy(16)) {
        let contour = extract_contour(&mask);
        for p in contour.points() {
            prop_assert!(mask.get(p.x as usize, p.y as usize));
        }
        let fg = mask.foreground_points();
        prop_assert_eq!(contour.is_empty(), fg.is_empty());
        let reach = mask.width().max(mask.height()) as f64;
        for q in &fg {
            let near = contour
                .points()
                .iter()
                .any(|p| (p.x - q.x).abs().max((p.y - q.y).abs()) <= reach);
            prop_assert!(near);
        }
    }

    #[test]
    fn each_component_has_contour_points(mask in mask_strategy(16)) {
        let labels = label_components(&mask, Connectivity::Four);
        let contour = extract_contour(&mask);
        for id in labels.ids() {
            let on_contour = contour.points().iter().any(|p| {
                labels.labels[p.y as usize * mask.width() + p.x as usize] == id
            });
            prop_assert!(on_contour, "component {} has no contour point", id);
        }
    }

    #[test]
    fn hausdorff_axioms(a in cloud_strategy(20), b in cloud_strategy(20)) {
        let (ca, cb) = (PointCloud::from_xy(&a).unwrap(), PointCloud::from_xy(&b).unwrap());
        let ab = hausdorff(&ca, &cb).unwrap();
        prop_assert_eq!(ab, hausdorff(&cb, &ca).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(hausdorff(&ca, &ca).unwrap(), 0.0);
        prop_assert_eq!(ab == 0.0, ca == cb);
    }

    #[test]
    fn labeling_is_deterministic(mask in mask_strategy(16)) {
        let copy = BinaryMask::new(mask.width(), mask.height(), mask.data().to_vec()).unwrap();
        for c in [Connectivity::Four, Connectivity::Eight] {
            prop_assert_eq!(label_components(&mask, c), label_components(&copy, c));
        }
    }
}

// Rips

proptest! {
    #[test]
    fn degree0_pair_count_is_point_count(xy in cloud_strategy(30)) {
        let c = PointCloud::from_xy(&xy).unwrap();
        let h0 = rips_diagram(&c, 0, &RipsConfig::default()).unwrap();
        // Zero-length merges only happen for duplicate points, which the cloud removes.
        prop_assert_eq!(h0.len(), c.len());
        prop_assert_eq!(h0.essential_count(), 1);
    }

    #[test]
    fn diagrams_ignore_point_order(xy in cloud_strategy(30), seed in any::<u64>()) {
        let mut shuffled = xy.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let config = RipsConfig::default();
        let a = rips_diagrams(&PointCloud::from_xy(&xy).unwrap(), &config).unwrap();
        let b = rips_diagrams(&PointCloud::from_xy(&shuffled).unwrap(), &config).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn diagrams_scale_with_the_cloud(xy in cloud_strategy(25), c in 0.1f64..10.0) {
        let config = RipsConfig::default();
        let base = rips_diagrams(&PointCloud::from_xy(&xy).unwrap(), &config).unwrap();
        let doubled: Vec<_> = xy.iter().map(|&(x, y)| (2.0 * x, 2.0 * y)).collect();
        let twice = rips_diagrams(&PointCloud::from_xy(&doubled).unwrap(), &config).unwrap();
        let scaled: Vec<_> = xy.iter().map(|&(x, y)| (c * x, c * y)).collect();
        let by_c = rips_diagrams(&PointCloud::from_xy(&scaled).unwrap(), &config).unwrap();
        for degree in 0..2 {
            // Doubling is exact in binary floating point.
            let expected: Vec<(f64, f64)> =
                base[degree].pairs().iter().map(|p| (2.0 * p.birth, 2.0 * p.death)).collect();
            let got: Vec<(f64, f64)> = twice[degree].pairs().iter().map(|p| (p.birth, p.death)).collect();
            prop_assert_eq!(got, expected);
            // A general factor may reorder near-ties, so compare bar counts
            // and the sorted multiset of deaths within rounding.
            prop_assert_eq!(base[degree].len(), by_c[degree].len());
            let mut lhs: Vec<f64> = base[degree].pairs().iter().map(|p| c * p.death).collect();
            let mut rhs: Vec<f64> = by_c[degree].pairs().iter().map(|p| p.death).collect();
            lhs.sort_by(f64::total_cmp);
            rhs.sort_by(f64::total_cmp);
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!(l == r || (l - r).abs() <= 1e-9 * l.abs(), "{} vs {}", l, r);
            }
        }
    }
}

#[test]
fn gap_orders_merge_deaths() {
    let two_clusters = |gap: f64| {
        let mut xy = Vec::new();
        for i in 0..4 {
            xy.push((i as f64, 0.0));
            xy.push((3.0 + gap + i as f64, 0.0));
        }
        PointCloud::from_xy(&xy).unwrap()
    };
    let merge = |gap: f64| {
        rips_diagram(&two_clusters(gap), 0, &RipsConfig::default())
            .unwrap()
            .finite_part()
            .pairs()
            .iter()
            .map(|p| p.death)
            .fold(0.0, f64::max)
    };
    assert_eq!(merge(5.0), 5.0);
    assert_eq!(merge(15.0), 15.0);
}

// Matching

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wasserstein_is_a_metric(a in diagram_strategy(6), b in diagram_strategy(6), c in diagram_strategy(6)) {
        let w = |x: &PersistenceDiagram, y: &PersistenceDiagram| {
            wasserstein(x, y, 1.0, GroundMetric::LInf).unwrap().value
        };
        prop_assert_eq!(w(&a, &b), w(&b, &a));
        prop_assert_eq!(w(&a, &a), 0.0);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-9);
        if a != b {
            prop_assert!(w(&a, &b) > 0.0);
        }
    }

    #[test]
    fn far_point_increases_wasserstein(a in diagram_strategy(5), b in diagram_strategy(5), q in 1.0f64..3.0) {
        let before = wasserstein(&a, &b, q, GroundMetric::LInf).unwrap().value;
        let mut pairs = a.pairs().to_vec();
        pairs.push(PersistencePair::new(0.0, 100.0).unwrap());
        let a2 = PersistenceDiagram::new(1, pairs).unwrap();
        let after = wasserstein(&a2, &b, q, GroundMetric::LInf).unwrap().value;
        prop_assert!(after > before, "{} -> {}", before, after);
    }

    #[test]
    fn bottleneck_below_w1(a in diagram_strategy(6), b in diagram_strategy(6)) {
        let bn = bottleneck(&a, &b).unwrap().value;
        let w1 = wasserstein(&a, &b, 1.0, GroundMetric::LInf).unwrap().value;
        prop_assert!(bn <= w1 + 1e-12, "{} > {}", bn, w1);
    }

    #[test]
    fn l2_ground_metric_dominates_linf(a in diagram_strategy(5), b in diagram_strategy(5)) {
        let linf = wasserstein(&a, &b, 1.0, GroundMetric::LInf).unwrap().value;
        let l2 = wasserstein(&a, &b, 1.0, GroundMetric::L2).unwrap().value;
        prop_assert!(l2 + 1e-12 >= linf);
    }
}

// Weight and loss

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omega_at_least_one((gt, pred) in mask_pair(14)) {
        let probs = ProbabilityMap::from_mask(&pred);
        let config = LossConfig::default();
        let w = topo_weight(&gt, &probs, &config).unwrap();
        prop_assert!(w.omega >= 1.0);
        prop_assert!(w.d0 >= 0.0 && w.d1 >= 0.0);
        let same = topo_weight(&gt, &ProbabilityMap::from_mask(&gt), &config).unwrap();
        prop_assert_eq!(same.omega, 1.0);
    }

    #[test]
    fn loss_ignores_batch_order(
        masks in prop::collection::vec(mask_strategy(10), 1..5),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<(BinaryMask, ProbabilityMap)> = masks
            .into_iter()
            .map(|m| {
                let probs = m
                    .data()
                    .iter()
                    .map(|&v| {
                        let jitter: f64 = rand::Rng::random_range(&mut rng, 0.0..0.45);
                        if v == 1 { 1.0 - jitter } else { jitter }
                    })
                    .collect();
                let p = ProbabilityMap::new(m.width(), m.height(), probs).unwrap();
                (m, p)
            })
            .collect();
        let mut shuffled = batch.clone();
        shuffled.shuffle(&mut rng);
        let config = LossConfig::default();
        for warmup in [true, false] {
            let a = topology_aware_loss(&batch, &config, warmup).unwrap().total;
            let b = topology_aware_loss(&shuffled, &config, warmup).unwrap().total;
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn weighted_ce_gradient_matches_differences(
        gt in prop::collection::vec(any::<bool>(), 64),
        p in prop::collection::vec(0.02f64..0.98, 64),
        omega in 1.0f64..3.0,
    ) {
        let gt = BinaryMask::new(8, 8, gt.into_iter().map(u8::from).collect()).unwrap();
        let eps = LossConfig::default().clip_epsilon;
        let f = |x: &[f64]| omega * cross_entropy(&gt, &ProbabilityMap::new(8, 8, x.to_vec()).unwrap(), eps).unwrap();
        let grad = cross_entropy_gradient(&gt, &ProbabilityMap::new(8, 8, p.clone()).unwrap(), eps).unwrap();
        for (i, g) in grad.iter().enumerate() {
            let analytic = omega * g;
            let numeric = central_difference(f, &p, i, 1e-6);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            prop_assert!(rel < 1e-5, "pixel {}: {} vs {}", i, analytic, numeric);
        }
    }
}

#[test]
fn branch_constants_match_the_reference_configuration() {
    let c = LossConfig::default();
    assert_eq!(c.constants(Branch::GreatVessel), (5.0e-6, 0.0));
    assert_eq!(c.constants(Branch::AortaOnly), (0.0, 1.0e-4));
}

#[test]
fn omega_grows_as_prediction_moves_away() {
    let config = LossConfig::default();
    // Aorta-like ring; the shifted copy leaves the frame, so its contour
    // changes shape while the ground truth stays put.
    let gt = ring(64, 64, 32.0, 32.0, 30.0, 18.0);
    assert_eq!(classify_branch(&gt, &config), Branch::AortaOnly);
    let mut last = 0.0;
    for delta in [0.0, 2.0, 4.0, 8.0] {
        let pred = ring(64, 64, 32.0 + delta, 32.0, 30.0, 18.0);
        let w = topo_weight(&gt, &ProbabilityMap::from_mask(&pred), &config).unwrap();
        assert!(w.omega >= last, "delta {delta}: {} < {last}", w.omega);
        last = w.omega;
    }
    assert!(last > 1.0);

    // Great-vessel image: two small disks, prediction pulls one away.
    let gv = |shift: f64| {
        let a = disk(48, 48, 12.0, 24.0, 5.0);
        let b = disk(48, 48, 26.0 + shift, 24.0, 5.0);
        BinaryMask::from_fn(48, 48, |x, y| a.get(x, y) || b.get(x, y)).unwrap()
    };
    let gt = gv(0.0);
    assert_eq!(classify_branch(&gt, &config), Branch::GreatVessel);
    let mut last = 0.0;
    for delta in [0.0, 2.0, 4.0, 8.0] {
        let w = topo_weight(&gt, &ProbabilityMap::from_mask(&gv(delta)), &config).unwrap();
        assert!(w.omega >= last, "delta {delta}: {} < {last}", w.omega);
        last = w.omega;
    }
    assert!(last > 1.0);
}

// Metrics

proptest! {
    #[test]
    fn fscore_symmetric_under_swap((a, b) in mask_pair(12)) {
        if let (Ok(ab), Ok(ba)) = (pixel_metrics(&a, &b), pixel_metrics(&b, &a)) {
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            prop_assert!((ab.fscore - ba.fscore).abs() <= 1e-15);
        }
    }

    #[test]
    fn vessel_tp_bounded((gt, pred) in mask_pair(12)) {
        let r = vessel_metrics(&gt, &pred).unwrap();
        prop_assert!(r.tp <= r.gt_count.min(r.pred_count));
        prop_assert_eq!(r, vessel_metrics(&gt, &pred).unwrap());
    }

    #[test]
    fn self_hausdorff_is_zero(m in mask_strategy(14)) {
        let h = weighted_hausdorff(&m, &m).unwrap();
        if m.is_empty() {
            prop_assert_eq!(h, None);
        } else {
            prop_assert_eq!(h, Some(0.0));
        }
    }
}
