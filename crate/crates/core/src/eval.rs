//! Evaluation: per-class precision/recall curves and AUC over probabilistic
//! outputs, argmax labeling, confusion accumulation and pixel metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::{LabelMap, ProbabilityMap};
use crate::{Error, Result};

/// Upper bound on PR points written to a report; AUC always uses the full curve.
pub const REPORT_PR_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall pairs ordered by decreasing threshold, hence
/// non-decreasing recall.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Sweeps every distinct score plus the endpoints 0 and 1 as threshold;
/// pixels scoring `>= threshold` are predicted positive. Thresholds that
/// predict nothing have undefined precision and yield no point.
pub fn pr_curve(scores: &[f32], gt: &[bool]) -> Result<PrCurve> {
    if scores.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            gt.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvariantViolation("NaN score".into()));
    }
    let positives = gt.iter().filter(|&&g| g).count() as u64;
    if positives == 0 {
        return Err(Error::NoPositives);
    }

    let mut order: Vec<(f32, bool)> = scores.iter().copied().zip(gt.iter().copied()).collect();
    order.par_sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let mut thresholds: Vec<f32> = order.iter().map(|o| o.0).collect();
    thresholds.extend([0.0, 1.0]);
    thresholds.sort_unstable_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (mut tp, mut fp) = (0u64, 0u64);
    let mut next = 0;
    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        while next < order.len() && order[next].0 >= t {
            if order[next].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        if tp + fp == 0 {
            continue;
        }
        points.push(PrPoint {
            threshold: t as f64,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(PrCurve { points })
}

/// Trapezoidal area under the PR curve over recall. The first precision is
/// extended back to recall 0, and `(1, 1)` is appended when the curve stops
/// short of full recall.
pub fn auc(curve: &PrCurve) -> f64 {
    let Some(first) = curve.points.first() else {
        return 0.0;
    };
    let mut area = first.recall * first.precision;
    let mut prev = (first.recall, first.precision);
    let mut max_recall = first.recall;
    for p in &curve.points[1..] {
        area += (p.recall - prev.0) * (p.precision + prev.1) / 2.0;
        prev = (p.recall, p.precision);
        max_recall = max_recall.max(p.recall);
    }
    if max_recall < 1.0 {
        area += (1.0 - prev.0) * (1.0 + prev.1) / 2.0;
    }
    area.clamp(0.0, 1.0)
}

/// Per-pixel most probable class; ties go to the lowest class id.
pub fn argmax_labels(map: &ProbabilityMap) -> LabelMap {
    let n = map.width() * map.height();
    let planes = map.planes();
    let labels: Vec<u8> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = 0;
            for c in 1..planes.len() {
                if planes[c].data()[i] > planes[best].data()[i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(map.width(), map.height(), labels, map.class_count())
        .expect("argmax labels are valid class ids")
}

/// `counts[g * C + p]`: pixels of ground-truth class `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            counts: vec![0; class_count * class_count],
        }
    }

    pub fn from_counts(class_count: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != class_count * class_count {
            return Err(Error::DimensionMismatch("confusion counts".into()));
        }
        Ok(Self {
            class_count,
            counts,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn add(&mut self, gt: u8, pred: u8) {
        self.counts[gt as usize * self.class_count + pred as usize] += 1;
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.class_count + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        (0..self.class_count).map(|p| self.get(gt, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.class_count).map(|g| self.get(g, pred)).sum()
    }

    /// Entrywise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.class_count, other.class_count, "class count mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn merged(mut self, other: &ConfusionMatrix) -> Self {
        self.merge(other);
        self
    }
}

/// Accumulates `pred` against `gt`, in parallel over pixel blocks.
pub fn confusion(pred: &LabelMap, gt: &LabelMap, class_count: usize) -> Result<ConfusionMatrix> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if let Some(&bad) = pred.labels().iter().chain(gt.labels()).find(|&&l| l as usize >= class_count) {
        return Err(Error::InvariantViolation(format!("label {bad} outside 0..{class_count}")));
    }
    Ok(pred
        .labels()
        .par_chunks(1 << 16)
        .zip(gt.labels().par_chunks(1 << 16))
        .fold(
            || ConfusionMatrix::new(class_count),
            |mut cm, (p, g)| {
                for (&p, &g) in p.iter().zip(g) {
                    cm.add(g, p);
                }
                cm
            },
        )
        .reduce(|| ConfusionMatrix::new(class_count), |a, b| a.merged(&b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub pa: f64,
    pub mpa: f64,
    pub miou: f64,
    pub fwiou: f64,
}

/// PA, MPA, MIoU and FWIoU. Class means run over classes present in the
/// ground truth.
pub fn pixel_metrics(cm: &ConfusionMatrix) -> Result<PixelMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = cm.class_count();
    let trace: u64 = (0..n).map(|c| cm.get(c, c)).sum();
    let (mut acc_sum, mut iou_sum, mut fw, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..n {
        let row = cm.row_sum(c);
        if row == 0 {
            continue;
        }
        let tp = cm.get(c, c) as f64;
        let union = (row + cm.col_sum(c)) as f64 - tp;
        let iou = tp / union;
        present += 1;
        acc_sum += tp / row as f64;
        iou_sum += iou;
        fw += row as f64 / total as f64 * iou;
    }
    Ok(PixelMetrics {
        pa: trace as f64 / total as f64,
        mpa: acc_sum / present as f64,
        miou: iou_sum / present as f64,
        fwiou: fw,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    /// `None` when the class has no ground-truth pixels.
    pub auc: Option<f64>,
    /// `[recall, precision]` pairs, thinned to at most [`REPORT_PR_POINTS`].
    pub pr: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub classes: Vec<ClassReport>,
    pub pa: f64,
    pub mpa: f64,
    pub miou: f64,
    pub fwiou: f64,
    pub pixels: u64,
}

fn thin(points: &[PrPoint], max: usize) -> Vec<[f64; 2]> {
    let pick = |p: &PrPoint| [p.recall, p.precision];
    if points.len() <= max {
        return points.iter().map(pick).collect();
    }
    let last = points.len() - 1;
    (0..max)
        .map(|k| pick(&points[(k * last + (max - 1) / 2) / (max - 1)]))
        .collect()
}

/// Full evaluation of a probability map against ground truth.
pub fn evaluate_map(pred: &ProbabilityMap, gt: &LabelMap, class_names: &[&str]) -> Result<Report> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if class_names.len() != pred.class_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} class names for {} classes",
            class_names.len(),
            pred.class_count()
        )));
    }
    let mut classes = Vec::with_capacity(class_names.len());
    for (c, name) in class_names.iter().enumerate() {
        let mask: Vec<bool> = gt.labels().iter().map(|&l| l as usize == c).collect();
        let (auc_value, pr) = match pr_curve(pred.plane(c).data(), &mask) {
            Ok(curve) => (Some(auc(&curve)), thin(&curve.points, REPORT_PR_POINTS)),
            Err(Error::NoPositives) => (None, Vec::new()),
            Err(e) => return Err(e),
        };
        classes.push(ClassReport {
            name: name.to_string(),
            auc: auc_value,
            pr,
        });
    }
    let labels = argmax_labels(pred);
    let cm = confusion(&labels, gt, pred.class_count())?;
    let m = pixel_metrics(&cm)?;
    Ok(Report {
        classes,
        pa: m.pa,
        mpa: m.mpa,
        miou: m.miou,
        fwiou: m.fwiou,
        pixels: cm.total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Plane;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn point(recall: f64, precision: f64) -> PrPoint {
        PrPoint {
            threshold: 0.5,
            recall,
            precision,
        }
    }

    #[test]
    fn perfect_scores() {
        let gt = [true, false, true, false, false];
        let scores: Vec<f32> = gt.iter().map(|&g| g as u8 as f32).collect();
        let c = pr_curve(&scores, &gt).unwrap();
        assert!(c.points.iter().any(|p| p.recall == 1.0 && p.precision == 1.0));
        assert_eq!(auc(&c), 1.0);
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let gt = [true, false, true, false];
        let c = pr_curve(&[0.5; 4], &gt).unwrap();
        assert!(c.points.iter().all(|p| p.precision == 0.5));
        assert_eq!(auc(&c), 0.5);
    }

    #[test]
    fn no_positives() {
        assert!(matches!(pr_curve(&[0.2, 0.3], &[false, false]), Err(Error::NoPositives)));
    }

    #[test]
    fn single_point_closure() {
        // Leading [0, 0.5] at 0.5, then trapezoid to (1, 1).
        let c = PrCurve {
            points: vec![point(0.5, 0.5)],
        };
        assert!((auc(&c) - (0.25 + 0.375)).abs() < 1e-15);
    }

    #[test]
    fn argmax_examples() {
        let mk = |v: [f32; 3]| {
            ProbabilityMap::new(v.iter().map(|&p| Plane::filled(1, 1, p)).collect()).unwrap()
        };
        assert_eq!(argmax_labels(&mk([0.1, 0.7, 0.2])).labels(), &[1]);
        assert_eq!(argmax_labels(&mk([0.4, 0.4, 0.2])).labels(), &[0]);
        assert_eq!(argmax_labels(&mk([0.05, 0.35, 0.1])).labels(), &[1]);
    }

    #[test]
    fn confusion_hand_example() {
        let gt = LabelMap::new(2, 2, vec![0, 1, 2, 2], 3).unwrap();
        let pred = LabelMap::new(2, 2, vec![0, 2, 2, 1], 3).unwrap();
        let cm = confusion(&pred, &gt, 3).unwrap();
        let mut expected = vec![0u64; 9];
        expected[0] = 1; // (0,0)
        expected[3 + 2] = 1; // (1,2)
        expected[6 + 2] = 1; // (2,2)
        expected[6 + 1] = 1; // (2,1)
        assert_eq!(cm.counts(), expected.as_slice());
    }

    #[test]
    fn identity_confusion() {
        let gt = LabelMap::new(3, 1, vec![0, 1, 2], 3).unwrap();
        let cm = confusion(&gt, &gt, 3).unwrap();
        assert_eq!((0..3).map(|c| cm.get(c, c)).sum::<u64>(), 3);
        let m = pixel_metrics(&cm).unwrap();
        assert_eq!((m.pa, m.mpa, m.miou, m.fwiou), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn uniform_two_class_confusion() {
        let cm = ConfusionMatrix::from_counts(2, vec![1, 1, 1, 1]).unwrap();
        let m = pixel_metrics(&cm).unwrap();
        assert_eq!(m.pa, 0.5);
        assert!((m.miou - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix() {
        assert!(matches!(pixel_metrics(&ConfusionMatrix::new(3)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn confusion_dimension_mismatch() {
        let a = LabelMap::filled(2, 2, 0);
        let b = LabelMap::filled(3, 2, 0);
        assert!(matches!(confusion(&a, &b, 3), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn one_hot_prediction_is_perfect() {
        let gt = LabelMap::new(4, 2, vec![0, 1, 2, 0, 1, 1, 2, 0], 3).unwrap();
        let planes = (0..3)
            .map(|c| Plane::from_fn(4, 2, |x, y| (gt.get(x, y) == c as u8) as u8 as f32))
            .collect();
        let r = evaluate_map(&ProbabilityMap::new(planes).unwrap(), &gt, &crate::CLASS_NAMES).unwrap();
        assert!(r.classes.iter().all(|c| c.auc == Some(1.0)));
        assert_eq!(r.pa, 1.0);
        assert_eq!(r.pixels, 8);
    }

    #[test]
    fn uniform_prediction_gives_prevalence() {
        let gt = LabelMap::new(4, 1, vec![0, 0, 1, 2], 3).unwrap();
        let third = 1.0f32 / 3.0;
        let map = ProbabilityMap::new(vec![Plane::filled(4, 1, third); 3]).unwrap();
        let r = evaluate_map(&map, &gt, &crate::CLASS_NAMES).unwrap();
        let prevalence = [0.5, 0.25, 0.25];
        for (c, report) in r.classes.iter().enumerate() {
            assert!(report.pr.iter().all(|p| p[1] == prevalence[c]));
            assert_eq!(report.auc, Some(prevalence[c]));
        }
    }

    #[test]
    fn report_json_lists_classes_in_order() {
        let gt = LabelMap::new(3, 1, vec![0, 1, 2], 3).unwrap();
        let map = ProbabilityMap::new(vec![Plane::filled(3, 1, 0.2); 3]).unwrap();
        let r = evaluate_map(&map, &gt, &crate::CLASS_NAMES).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let names: Vec<&str> = back.classes.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["bg", "crop", "weed"]);
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let pts: Vec<PrPoint> = (0..5000).map(|i| point(i as f64 / 4999.0, 1.0)).collect();
        let t = thin(&pts, 1000);
        assert_eq!(t.len(), 1000);
        assert_eq!(t[0][0], 0.0);
        assert_eq!(t[999][0], 1.0);
    }

    /// Exhaustive threshold enumeration, written independently of the sweep.
    fn brute_curve(scores: &[f32], gt: &[bool]) -> Vec<(f64, f64)> {
        let mut ts: Vec<f32> = scores.to_vec();
        ts.push(0.0);
        ts.push(1.0);
        ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ts.dedup();
        let pos = gt.iter().filter(|&&g| g).count() as f64;
        let mut out = Vec::new();
        for t in ts {
            let tp = scores.iter().zip(gt).filter(|(s, g)| **s >= t && **g).count() as f64;
            let fp = scores.iter().zip(gt).filter(|(s, g)| **s >= t && !**g).count() as f64;
            if tp + fp > 0.0 {
                out.push((tp / pos, tp / (tp + fp)));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn curve_matches_brute_force(seed in any::<u64>(), w in 1usize..17, h in 1usize..17, levels in 1u32..50) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = w * h;
            let scores: Vec<f32> = (0..n).map(|_| rng.random_range(0..=levels) as f32 / levels as f32).collect();
            let mut gt: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            gt[0] = true;
            let c = pr_curve(&scores, &gt).unwrap();
            let brute = brute_curve(&scores, &gt);
            prop_assert_eq!(c.points.len(), brute.len());
            for (p, b) in c.points.iter().zip(&brute) {
                prop_assert!((p.recall - b.0).abs() < 1e-12 && (p.precision - b.1).abs() < 1e-12);
            }
            let a = auc(&c);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn closure_never_decreases_auc(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.99)).collect();
            r.sort_by(f64::total_cmp);
            let points: Vec<PrPoint> = r.iter().map(|&r| point(r, rng.random_range(0.0..=1.0))).collect();
            let open = PrCurve { points: points.clone() };
            let mut closed_points = points;
            closed_points.push(point(1.0, 1.0));
            // Area without closure: same integral stopping at the last point.
            let mut area = open.points[0].recall * open.points[0].precision;
            for w in open.points.windows(2) {
                area += (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0;
            }
            prop_assert!(auc(&open) >= area - 1e-12);
            let closed = PrCurve { points: closed_points };
            prop_assert!((auc(&open) - auc(&closed)).abs() < 1e-12);
        }

        #[test]
        fn argmax_scale_invariant(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let planes: Vec<Plane> = (0..3).map(|_| Plane::from_fn(6, 5, |_, _| rng.random_range(0.0..0.5f32))).collect();
            let doubled: Vec<Plane> = planes.iter().map(|p| Plane::from_fn(6, 5, |x, y| 2.0 * p.get(x, y))).collect();
            prop_assert_eq!(
                argmax_labels(&ProbabilityMap::new(planes).unwrap()),
                argmax_labels(&ProbabilityMap::new(doubled).unwrap())
            );
        }

        #[test]
        fn metrics_match_scalar_reference(counts in prop::collection::vec(0u64..50, 9)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let cm = ConfusionMatrix::from_counts(3, counts.clone()).unwrap();
            let m = pixel_metrics(&cm).unwrap();
            let at = |g: usize, p: usize| counts[g * 3 + p] as f64;
            let total: f64 = counts.iter().sum::<u64>() as f64;
            let mut ious = Vec::new();
            let mut accs = Vec::new();
            let mut fw = 0.0;
            for c in 0..3 {
                let row: f64 = (0..3).map(|p| at(c, p)).sum();
                let col: f64 = (0..3).map(|g| at(g, c)).sum();
                if row > 0.0 {
                    let iou = at(c, c) / (row + col - at(c, c));
                    ious.push(iou);
                    accs.push(at(c, c) / row);
                    fw += row / total * iou;
                }
            }
            let pa = (0..3).map(|c| at(c, c)).sum::<f64>() / total;
            prop_assert!((m.pa - pa).abs() < 1e-12);
            prop_assert!((m.mpa - accs.iter().sum::<f64>() / accs.len() as f64).abs() < 1e-12);
            prop_assert!((m.miou - ious.iter().sum::<f64>() / ious.len() as f64).abs() < 1e-12);
            prop_assert!((m.fwiou - fw).abs() < 1e-12);
        }

        #[test]
        fn split_merge_equals_whole(seed in any::<u64>(), split in 0usize..64) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<u8> = (0..64).map(|_| rng.random_range(0..3)).collect();
            let pred: Vec<u8> = (0..64).map(|_| rng.random_range(0..3)).collect();
            let whole = confusion(&LabelMap::new(64, 1, pred.clone(), 3).unwrap(), &LabelMap::new(64, 1, gt.clone(), 3).unwrap(), 3).unwrap();
            let part = |r: std::ops::Range<usize>| confusion(
                &LabelMap::new(r.len(), 1, pred[r.clone()].to_vec(), 3).unwrap(),
                &LabelMap::new(r.len(), 1, gt[r].to_vec(), 3).unwrap(), 3).unwrap();
            let merged = part(0..split).merged(&part(split..64));
            prop_assert_eq!(merged, whole);
        }
    }
}
