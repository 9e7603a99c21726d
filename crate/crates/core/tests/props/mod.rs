//! Property suites shared by the `properties` tests and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestError, TestRunner};

use groupdet::classifier::{parse_answer_strict, HeuristicBackend, Judgment};
use groupdet::cluster::{agreement_score, exhaustive_cluster, greedy_cluster, greedy_cluster_traced, AgreementWeights, Partition};
use groupdet::depth::{lower_median, median_depth, DepthMap};
use groupdet::evaluation::{match_groups, Counts};
use groupdet::geometry::{bbox_union, center_distance, enclosing_bbox, iou, pad_bbox, BBox, ImageGeometry};
use groupdet::pair_filter::{apply_filter, build_unfiltered_matrix, FilterParams, PairFeatures, Provenance, RelationMatrix};
use groupdet::scene_io::{PersonDetection, Scene};

pub const SUITES: [&str; 6] = ["geometry", "depth", "clustering", "evaluation", "filter", "answer parsing"];

pub fn run_suite(name: &str, cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let r = match name {
        "geometry" => geometry(&mut runner),
        "depth" => depth(&mut runner),
        "clustering" => clustering(&mut runner),
        "evaluation" => evaluation(&mut runner),
        "filter" => filter(&mut runner),
        "answer parsing" => answers(&mut runner),
        other => return Err(format!("unknown suite {other}")),
    };
    r.map_err(|e| e.to_string())
}

type Outcome = Result<(), TestError<String>>;

fn wrap<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Outcome {
    r.map_err(|e| match e {
        TestError::Abort(m) => TestError::Abort(m),
        TestError::Fail(m, v) => TestError::Fail(m, format!("{v:?}")),
    })
}

pub fn bbox_in(w: f64, h: f64) -> impl Strategy<Value = BBox> {
    (0.0..w - 1.0, 0.0..h - 1.0, 0.5..w, 0.5..h).prop_map(move |(x, y, bw, bh)| {
        let x2 = (x + bw).min(w).max(x + 0.5);
        let y2 = (y + bh).min(h).max(y + 0.5);
        BBox::new(x, y, x2, y2).unwrap()
    })
}

fn judgment() -> impl Strategy<Value = Judgment> {
    prop_oneof![Just(Judgment::Yes), Just(Judgment::No), Just(Judgment::NotSure)]
}

fn weights() -> impl Strategy<Value = AgreementWeights> {
    (0.1f64..3.0, -3.0f64..=0.0, -3.0f64..=0.0).prop_map(|(y, n, s)| AgreementWeights::new(y, n, s).unwrap())
}

/// Random classified matrix over a shuffled id set of size 2..=7.
pub fn matrix(max_n: usize) -> impl Strategy<Value = RelationMatrix> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let ids = Just((1..=n as u32).map(|k| k * 3).collect::<Vec<_>>()).prop_shuffle();
            (ids, prop::collection::vec(judgment(), n * (n - 1) / 2))
        })
        .prop_map(|(ids, js)| {
            let mut m = RelationMatrix::new(ids);
            let pairs: Vec<_> = m.pairs().collect();
            for ((i, j), v) in pairs.into_iter().zip(js) {
                m.set(i, j, v, Provenance::Classified);
            }
            m
        })
}

fn geometry(runner: &mut TestRunner) -> Outcome {
    let img = ImageGeometry::new(640, 480).unwrap();
    let b = || bbox_in(640.0, 480.0);
    wrap(runner.run(&(b(), b(), b(), 0.0f64..1.0), |(a, b, c, pad)| {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        let u = bbox_union(&a, &b);
        prop_assert!(u.contains(&a) && u.contains(&b));
        prop_assert!(u.area() + 1e-9 >= a.area().max(b.area()));
        prop_assert_eq!(u, bbox_union(&b, &a));
        prop_assert_eq!(bbox_union(&a, &a), a);
        prop_assert_eq!(bbox_union(&u, &c), bbox_union(&a, &bbox_union(&b, &c)));
        prop_assert_eq!(enclosing_bbox([&a, &b, &c]).unwrap(), bbox_union(&u, &c));
        prop_assert_eq!(pad_bbox(&a, 0.0, img), a);
        let p = pad_bbox(&a, pad, img);
        prop_assert!(p.contains(&a));
        prop_assert!(p.within_image(img));
        let d = center_distance(&a, &b, img);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, center_distance(&b, &a, img));
        prop_assert!(d <= center_distance(&a, &c, img) + center_distance(&c, &b, img) + 1e-12);
        Ok(())
    }))
}

fn depth(runner: &mut TestRunner) -> Outcome {
    let values = prop::collection::vec(any::<u8>(), 1..200).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()));
    wrap(runner.run(&(values, bbox_in(32.0, 24.0), prop::collection::vec(any::<u8>(), 32 * 24)), |((v, shuffled), b, map)| {
        let mut sorted = v.clone();
        sorted.sort_unstable();
        let mut work = v.clone();
        let m = lower_median(&mut work);
        prop_assert_eq!(m, Some(sorted[(sorted.len() - 1) / 2]));
        prop_assert_eq!(lower_median(&mut shuffled.clone()), m);

        let d = DepthMap::from_values(32, 24, map.clone());
        let z = median_depth(&d, &b).unwrap();
        let r = b.pixel_region(d.geometry()).unwrap();
        let mut region = Vec::new();
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                region.push(map[(y * 32 + x) as usize]);
            }
        }
        let k = (region.len() - 1) / 2;
        prop_assert!(region.iter().filter(|&&p| p < z).count() <= k);
        prop_assert!(region.iter().filter(|&&p| p <= z).count() > k);
        Ok(())
    }))
}

fn clustering(runner: &mut TestRunner) -> Outcome {
    let planted = (2usize..=7).prop_flat_map(|n| prop::collection::vec(0usize..4, n));
    wrap(runner.run(&(matrix(7), weights(), planted), |(m, w, labels)| {
        let (p, trace) = greedy_cluster_traced(&m, &w);
        let mut covered: Vec<u32> = p.members().into_iter().collect();
        let mut ids = m.ids().to_vec();
        covered.sort_unstable();
        ids.sort_unstable();
        prop_assert_eq!(covered, ids);

        let mut prev = 0.0;
        for step in &trace {
            prop_assert!(step.gain > 0.0);
            prop_assert!(step.score_after > prev);
            prev = step.score_after;
        }
        let greedy_score = agreement_score(&p, &m, &w).unwrap();
        prop_assert!((greedy_score - prev).abs() < 1e-9);
        let (_, best) = exhaustive_cluster(&m, &w).unwrap();
        prop_assert!(greedy_score <= best + 1e-9);

        // Judgments consistent with a planted partition are recovered exactly.
        let n = labels.len();
        let ids: Vec<u32> = (1..=n as u32).collect();
        let mut oracle = RelationMatrix::new(ids.clone());
        for (i, j) in oracle.pairs().collect::<Vec<_>>() {
            let v = if labels[i] == labels[j] { Judgment::Yes } else { Judgment::No };
            oracle.set(i, j, v, Provenance::Classified);
        }
        let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); 4];
        for (k, &l) in labels.iter().enumerate() {
            clusters[l].push(ids[k]);
        }
        clusters.retain(|c| !c.is_empty());
        let expected = Partition::new(clusters).unwrap();
        prop_assert_eq!(greedy_cluster(&oracle, &AgreementWeights::default()), expected);
        Ok(())
    }))
}

fn evaluation(runner: &mut TestRunner) -> Outcome {
    let boxes = || {
        prop::collection::vec(bbox_in(200.0, 200.0), 0..8).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    };
    wrap(runner.run(&(boxes(), boxes(), 0.05f64..=1.0), |((pred, pred_perm), (gt, gt_perm), thr)| {
        let ms = match_groups(&pred, &gt);
        let mut seen_p = vec![false; pred.len()];
        let mut seen_g = vec![false; gt.len()];
        for m in &ms {
            prop_assert!(m.iou > 0.0);
            prop_assert!(!seen_p[m.pred_idx] && !seen_g[m.gt_idx]);
            seen_p[m.pred_idx] = true;
            seen_g[m.gt_idx] = true;
        }
        let c = Counts::from_scene(&pred, &gt, thr);
        prop_assert!(c.tp <= c.n_matched && c.n_matched <= pred.len().min(gt.len()));
        for v in [c.precision(), c.recall(), c.f1(), c.miou()] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(c.miou() <= c.miou_matched() + 1e-12);
        prop_assert!(c.f1() <= c.precision().max(c.recall()) + 1e-12);
        let p = Counts::from_scene(&pred_perm, &gt_perm, thr);
        prop_assert_eq!((p.n_matched, p.tp), (c.n_matched, c.tp));
        prop_assert!((p.iou_sum - c.iou_sum).abs() < 1e-9);

        let same = Counts::from_scene(&gt, &gt, thr);
        if !gt.is_empty() {
            prop_assert_eq!((same.precision(), same.recall(), same.f1()), (1.0, 1.0, 1.0));
            prop_assert!((same.miou() - 1.0).abs() < 1e-12);
        }
        Ok(())
    }))
}

fn scene_strategy() -> impl Strategy<Value = Scene> {
    prop::collection::vec((bbox_in(320.0, 240.0), any::<u8>()), 0..7).prop_map(|ps| Scene {
        scene_id: "p".into(),
        image: ImageGeometry::new(320, 240).unwrap(),
        rgb_path: String::new(),
        depth_path: String::new(),
        persons: ps
            .into_iter()
            .enumerate()
            .map(|(k, (bbox, z))| PersonDetection {
                person_id: k as u32 + 1,
                bbox,
                confidence: 1.0,
                median_depth: Some(z),
            })
            .collect(),
        gt_groups: None,
    })
}

fn filter(runner: &mut TestRunner) -> Outcome {
    let backend = HeuristicBackend::new(Default::default());
    wrap(runner.run(&(scene_strategy(), 0.0f64..=1.0, any::<u8>(), 0.0f64..=1.0, any::<u8>()), |(scene, d1, z1, d2, z2)| {
        let unfiltered = build_unfiltered_matrix(&scene, &backend, None).unwrap().matrix;
        let features = PairFeatures::compute(&scene).unwrap();
        let n = scene.persons.len();
        let lo = FilterParams::new(d1.min(d2), z1.min(z2)).unwrap();
        let hi = FilterParams::new(d1.max(d2), z1.max(z2)).unwrap();
        let a = apply_filter(&unfiltered, &features, &lo);
        let b = apply_filter(&unfiltered, &features, &hi);
        for built in [&a, &b] {
            let c = built.counts;
            prop_assert_eq!(c.filtered_distance + c.filtered_depth + c.classified, n * n.saturating_sub(1) / 2);
            prop_assert!(built.matrix.is_symmetric());
        }
        prop_assert!(a.counts.classified <= b.counts.classified);
        prop_assert_eq!(&apply_filter(&unfiltered, &features, &FilterParams::disabled()).matrix, &unfiltered);
        Ok(())
    }))
}

fn answers(runner: &mut TestRunner) -> Outcome {
    let noise = "[ ,.!?]{0,4}";
    let word = prop_oneof![
        Just(("yes", Some(Judgment::Yes))),
        Just(("Yes", Some(Judgment::Yes))),
        Just(("NO", Some(Judgment::No))),
        Just(("no", Some(Judgment::No))),
        Just(("banana", None)),
    ];
    wrap(runner.run(&(noise, word, noise), |(pre, (w, expected), post)| {
        prop_assert_eq!(parse_answer_strict(&format!("{pre}{w}{post}")), expected);
        prop_assert_eq!(parse_answer_strict(&format!("{pre}{w}, not  sure{post}")), Some(Judgment::NotSure));
        prop_assert_eq!(parse_answer_strict(&format!("{pre}NOT SURE{post} {w}")), Some(Judgment::NotSure));
        Ok(())
    }))
}
