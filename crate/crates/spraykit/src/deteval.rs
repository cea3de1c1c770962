//! Detection scoring: one-to-one matching of predictions to ground truth and
//! the derived Recall / Precision / mean-IoU / recall-binned mAP metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_obb, AxisAlignedBox, OrientedBox};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("annotations span multiple image ids: {0:?}")]
    MixedImageIds(Vec<String>),
    #[error("mean IoU undefined: no matched pairs")]
    NoMatches,
    #[error("mAP undefined: no image contains ground-truth objects")]
    NoGroundTruth,
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
    #[error("image id sets differ; missing from predictions: {missing_pred:?}, missing from ground truth: {missing_gt:?}")]
    ImageIdMismatch {
        missing_pred: Vec<String>,
        missing_gt: Vec<String>,
    },
}

/// Closed set of object classes: the five liquid-structure features plus the
/// two synthetic-scene primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    AttachedLigament,
    DetachedLigament,
    Lobe,
    Bag,
    Rim,
    Ellipse,
    Droplet,
}

impl ObjectClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::AttachedLigament => "attached_ligament",
            ObjectClass::DetachedLigament => "detached_ligament",
            ObjectClass::Lobe => "lobe",
            ObjectClass::Bag => "bag",
            ObjectClass::Rim => "rim",
            ObjectClass::Ellipse => "ellipse",
            ObjectClass::Droplet => "droplet",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        Ok(match s {
            "attached_ligament" => ObjectClass::AttachedLigament,
            "detached_ligament" => ObjectClass::DetachedLigament,
            "lobe" => ObjectClass::Lobe,
            "bag" => ObjectClass::Bag,
            "rim" => ObjectClass::Rim,
            "ellipse" => ObjectClass::Ellipse,
            "droplet" => ObjectClass::Droplet,
            other => return Err(EvalError::UnknownClass(other.to_string())),
        })
    }
}

/// One ground-truth object or one prediction. Boxes are stored in oriented
/// form; axis-aligned boxes carry angle 0 so both detector styles share one
/// IoU code path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub class: ObjectClass,
    pub bbox: OrientedBox,
    /// Present for predictions, absent for ground truth.
    pub confidence: Option<f64>,
}

impl Annotation {
    pub fn ground_truth(image_id: impl Into<String>, class: ObjectClass, bbox: OrientedBox) -> Self {
        Self {
            image_id: image_id.into(),
            class,
            bbox,
            confidence: None,
        }
    }

    pub fn prediction(
        image_id: impl Into<String>,
        class: ObjectClass,
        bbox: OrientedBox,
        confidence: f64,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            class,
            bbox,
            confidence: Some(confidence),
        }
    }

    pub fn from_axis_aligned(
        image_id: impl Into<String>,
        class: ObjectClass,
        bbox: AxisAlignedBox,
        confidence: Option<f64>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            class,
            bbox: bbox.to_oriented(),
            confidence,
        }
    }
}

/// Outcome of one image's matching: TP pairs plus leftover FN / FP indices.
#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub image_id: String,
    /// (gt index, pred index, IoU) per true positive.
    pub pairs: Vec<(usize, usize, f64)>,
    /// false negatives
    pub unmatched_gt: Vec<usize>,
    /// false positives
    pub unmatched_pred: Vec<usize>,
    pub n_gt: usize,
    pub n_pred: usize,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }
    pub fn fp(&self) -> usize {
        self.unmatched_pred.len()
    }
    pub fn fn_(&self) -> usize {
        self.unmatched_gt.len()
    }
}

/// Greedy one-to-one matching in descending prediction confidence (ties by
/// descending best IoU). Each prediction takes the unmatched same-class GT
/// with the highest IoU, provided that IoU reaches the threshold.
pub fn match_annotations(
    gt: &[Annotation],
    pred: &[Annotation],
    iou_threshold: f64,
    class_aware: bool,
) -> Result<MatchResult, EvalError> {
    let mut ids: Vec<&str> = gt
        .iter()
        .chain(pred.iter())
        .map(|a| a.image_id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() > 1 {
        return Err(EvalError::MixedImageIds(
            ids.into_iter().map(String::from).collect(),
        ));
    }
    let image_id = ids.first().map(|s| s.to_string()).unwrap_or_default();

    let best_iou = |p: &Annotation, taken: &[bool]| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] || (class_aware && g.class != p.class) {
                continue;
            }
            let iou = iou_obb(&g.bbox, &p.bbox);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        best
    };

    let no_taken = vec![false; gt.len()];
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&i, &j| {
        let ci = pred[i].confidence.unwrap_or(1.0);
        let cj = pred[j].confidence.unwrap_or(1.0);
        cj.total_cmp(&ci).then_with(|| {
            let bi = best_iou(&pred[i], &no_taken).map_or(0.0, |(_, v)| v);
            let bj = best_iou(&pred[j], &no_taken).map_or(0.0, |(_, v)| v);
            bj.total_cmp(&bi)
        })
    });

    let mut taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    let mut unmatched_pred = Vec::new();
    for pi in order {
        match best_iou(&pred[pi], &taken) {
            Some((gi, iou)) if iou >= iou_threshold => {
                taken[gi] = true;
                pairs.push((gi, pi, iou));
            }
            _ => unmatched_pred.push(pi),
        }
    }
    unmatched_pred.sort_unstable();
    let unmatched_gt: Vec<usize> = (0..gt.len()).filter(|&i| !taken[i]).collect();
    Ok(MatchResult {
        image_id,
        pairs,
        unmatched_gt,
        unmatched_pred,
        n_gt: gt.len(),
        n_pred: pred.len(),
    })
}

/// Recall = TP/(TP+FN), Precision = TP/(TP+FP). A vacuous denominator
/// (nothing to detect / nothing detected) scores 1 by convention so that
/// empty images do not poison aggregates; the convention is recorded in
/// [`EvalReport::matching_policy`].
pub fn recall_precision(m: &MatchResult) -> (f64, f64) {
    let tp = m.tp() as f64;
    let recall = if m.tp() + m.fn_() == 0 {
        1.0
    } else {
        tp / (tp + m.fn_() as f64)
    };
    let precision = if m.tp() + m.fp() == 0 {
        1.0
    } else {
        tp / (tp + m.fp() as f64)
    };
    (recall, precision)
}

/// Arithmetic mean of matched-pair IoUs; errors when nothing matched.
pub fn mean_iou(m: &MatchResult) -> Result<f64, EvalError> {
    if m.pairs.is_empty() {
        return Err(EvalError::NoMatches);
    }
    Ok(m.pairs.iter().map(|&(_, _, iou)| iou).sum::<f64>() / m.pairs.len() as f64)
}

/// Per-image scores feeding the aggregate report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    pub mean_iou: Option<f64>,
}

impl ImageEval {
    pub fn from_match(m: &MatchResult) -> Self {
        let (recall, precision) = recall_precision(m);
        Self {
            image_id: m.image_id.clone(),
            n_gt: m.n_gt,
            n_pred: m.n_pred,
            tp: m.tp(),
            fp: m.fp(),
            fn_: m.fn_(),
            recall,
            precision,
            mean_iou: mean_iou(m).ok(),
        }
    }
}

/// Image-binned mAP: images (with at least one GT object) are partitioned
/// into 10 recall bins [0,0.1), ..., [0.9,1.0]; the Precision is averaged
/// within each nonempty bin and the mAP is the mean over nonempty bins.
pub fn mean_ap(per_image: &[ImageEval]) -> Result<f64, EvalError> {
    let mut bin_sum = [0.0f64; 10];
    let mut bin_n = [0usize; 10];
    let mut any = false;
    for img in per_image.iter().filter(|i| i.n_gt > 0) {
        any = true;
        let bin = ((img.recall * 10.0).floor() as usize).min(9);
        bin_sum[bin] += img.precision;
        bin_n[bin] += 1;
    }
    if !any {
        return Err(EvalError::NoGroundTruth);
    }
    let (mut total, mut nonempty) = (0.0, 0usize);
    for b in 0..10 {
        if bin_n[b] > 0 {
            total += bin_sum[b] / bin_n[b] as f64;
            nonempty += 1;
        }
    }
    Ok(total / nonempty as f64)
}

/// Conventional area-under-PR-curve Average Precision from pooled
/// detections. `items` is (confidence, is_true_positive) per prediction.
/// Emitted alongside the image-binned mAP for cross-tool comparison.
pub fn pr_curve_ap(items: &mut Vec<(f64, bool)>, total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(_, is_tp)) in items.iter().enumerate() {
        if is_tp {
            tp += 1;
            let recall = tp as f64 / total_gt as f64;
            let precision = tp as f64 / (i + 1) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Some(ap)
}

/// Aggregate evaluation across a corpus of images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub class_aware: bool,
    /// how matches were formed and how edge cases are scored
    pub matching_policy: String,
    pub per_image: Vec<ImageEval>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    /// mean IoU over matched pairs only
    pub mean_iou: Option<f64>,
    /// the recall-binned mAP (primary definition)
    pub map: f64,
    /// conventional PR-curve AP over pooled detections, for comparison
    pub ap_pr_curve: Option<f64>,
}

impl EvalReport {
    pub fn from_matches(
        matches: &[MatchResult],
        pred_confidences: &[Vec<f64>],
        iou_threshold: f64,
        class_aware: bool,
    ) -> Result<Self, EvalError> {
        let per_image: Vec<ImageEval> = matches.iter().map(ImageEval::from_match).collect();
        let tp: usize = per_image.iter().map(|i| i.tp).sum();
        let fp: usize = per_image.iter().map(|i| i.fp).sum();
        let fn_: usize = per_image.iter().map(|i| i.fn_).sum();
        let recall = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let mut iou_sum = 0.0;
        let mut iou_n = 0usize;
        for m in matches {
            for &(_, _, iou) in &m.pairs {
                iou_sum += iou;
                iou_n += 1;
            }
        }
        let mean_iou = (iou_n > 0).then(|| iou_sum / iou_n as f64);
        let map = mean_ap(&per_image)?;
        let total_gt: usize = matches.iter().map(|m| m.n_gt).sum();
        let mut items: Vec<(f64, bool)> = Vec::new();
        for (m, confs) in matches.iter().zip(pred_confidences) {
            let matched: std::collections::HashSet<usize> =
                m.pairs.iter().map(|&(_, pi, _)| pi).collect();
            for pi in 0..m.n_pred {
                let conf = confs.get(pi).copied().unwrap_or(1.0);
                items.push((conf, matched.contains(&pi)));
            }
        }
        let ap_pr_curve = pr_curve_ap(&mut items, total_gt);
        Ok(Self {
            iou_threshold,
            class_aware,
            matching_policy: "greedy by descending confidence; one-to-one; vacuous images score \
                              recall=precision=1 and are excluded from mAP bins; mean IoU over \
                              matched pairs; 10 half-open recall bins"
                .to_string(),
            per_image,
            tp,
            fp,
            fn_,
            recall,
            precision,
            mean_iou,
            map,
            ap_pr_curve,
        })
    }

    /// Summary table in the Recall / Precision / mAP / mean-IoU layout.
    pub fn summary_table(&self, label: &str) -> String {
        let miou = self
            .mean_iou
            .map_or("   n/a".to_string(), |v| format!("{v:6.3}"));
        let ap = self
            .ap_pr_curve
            .map_or("   n/a".to_string(), |v| format!("{v:6.3}"));
        format!(
            "{:<12} {:>7} {:>9} {:>7} {:>9} {:>11}\n{:<12} {:>7.3} {:>9.3} {:>7.3} {:>9} {:>11}\n",
            "", "Recall", "Precision", "mAP", "mean IoU", "AP(PR curve)",
            label, self.recall, self.precision, self.map, miou, ap,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou_aabb;

    fn obb(x: f64, y: f64, w: f64, h: f64) -> OrientedBox {
        OrientedBox::new(x, y, w, h, 0.0).unwrap()
    }

    fn gt_set(n: usize) -> Vec<Annotation> {
        (0..n)
            .map(|i| {
                Annotation::ground_truth("img0", ObjectClass::Ellipse, obb(10.0 * i as f64, 5.0, 4.0, 2.0))
            })
            .collect()
    }

    fn as_pred(gt: &[Annotation]) -> Vec<Annotation> {
        gt.iter()
            .map(|g| Annotation::prediction(&g.image_id, g.class, g.bbox, 1.0))
            .collect()
    }

    #[test]
    fn perfect_predictions_all_tp() {
        let gt = gt_set(5);
        let m = match_annotations(&gt, &as_pred(&gt), 0.2, true).unwrap();
        assert_eq!(m.tp(), 5);
        assert_eq!(m.fp(), 0);
        assert_eq!(m.fn_(), 0);
        assert!((mean_iou(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_all_fn() {
        let gt = gt_set(5);
        let m = match_annotations(&gt, &[], 0.2, true).unwrap();
        assert_eq!((m.tp(), m.fn_()), (0, 5));
        let (recall, precision) = recall_precision(&m);
        assert_eq!(recall, 0.0);
        assert_eq!(precision, 1.0); // nothing detected: no false alarms
    }

    #[test]
    fn coincident_duplicate_is_fp() {
        let gt = gt_set(1);
        let mut pred = as_pred(&gt);
        pred.push(pred[0].clone());
        let m = match_annotations(&gt, &pred, 0.2, true).unwrap();
        assert_eq!((m.tp(), m.fp(), m.fn_()), (1, 1, 0));
    }

    #[test]
    fn mixed_image_ids_rejected() {
        let gt = gt_set(1);
        let mut pred = as_pred(&gt);
        pred[0].image_id = "other".into();
        assert!(matches!(
            match_annotations(&gt, &pred, 0.2, true),
            Err(EvalError::MixedImageIds(_))
        ));
    }

    #[test]
    fn class_aware_matching_respects_classes() {
        let gt = gt_set(1);
        let mut pred = as_pred(&gt);
        pred[0].class = ObjectClass::Bag;
        let m = match_annotations(&gt, &pred, 0.2, true).unwrap();
        assert_eq!((m.tp(), m.fp(), m.fn_()), (0, 1, 1));
        let m = match_annotations(&gt, &pred, 0.2, false).unwrap();
        assert_eq!(m.tp(), 1);
    }

    #[test]
    fn recall_precision_formula() {
        let m = MatchResult {
            image_id: "img0".into(),
            pairs: vec![(0, 0, 0.9), (1, 1, 0.8), (2, 2, 0.7)],
            unmatched_gt: vec![3],
            unmatched_pred: vec![],
            n_gt: 4,
            n_pred: 3,
        };
        let (recall, precision) = recall_precision(&m);
        assert!((recall - 0.75).abs() < 1e-12);
        assert!((precision - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuous_image_scores_one() {
        let m = match_annotations(&[], &[], 0.2, true).unwrap();
        assert_eq!(recall_precision(&m), (1.0, 1.0));
    }

    #[test]
    fn mean_iou_of_known_pairs() {
        let m = MatchResult {
            image_id: "i".into(),
            pairs: vec![(0, 0, 1.0 / 3.0), (1, 1, 2.0 / 3.0)],
            unmatched_gt: vec![],
            unmatched_pred: vec![],
            n_gt: 2,
            n_pred: 2,
        };
        assert!((mean_iou(&m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mean_iou_matches_aabb_oracle_under_jitter() {
        // per-pair oracle via iou_aabb on the same axis-aligned extents
        let gt = gt_set(6);
        let pred: Vec<Annotation> = gt
            .iter()
            .map(|g| {
                let mut b = g.bbox;
                b.center_x += 0.5;
                Annotation::prediction(&g.image_id, g.class, b, 1.0)
            })
            .collect();
        let m = match_annotations(&gt, &pred, 0.1, true).unwrap();
        assert_eq!(m.tp(), 6);
        let expected: f64 = gt
            .iter()
            .zip(&pred)
            .map(|(g, p)| iou_aabb(&g.bbox.aabb(), &p.bbox.aabb()))
            .sum::<f64>()
            / 6.0;
        assert!((mean_iou(&m).unwrap() - expected).abs() < 1e-9);
    }

    fn eval(recall: f64, precision: f64) -> ImageEval {
        ImageEval {
            image_id: String::new(),
            n_gt: 10,
            n_pred: 10,
            tp: 0,
            fp: 0,
            fn_: 0,
            recall,
            precision,
            mean_iou: None,
        }
    }

    #[test]
    fn map_all_perfect_is_one() {
        let imgs: Vec<ImageEval> = (0..5).map(|_| eval(1.0, 1.0)).collect();
        assert_eq!(mean_ap(&imgs).unwrap(), 1.0);
    }

    #[test]
    fn map_single_bin_average() {
        let imgs = vec![eval(0.35, 0.8), eval(0.32, 0.6)];
        assert!((mean_ap(&imgs).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn map_mean_of_bin_means() {
        let imgs = vec![eval(0.35, 0.7), eval(0.95, 1.0)];
        assert!((mean_ap(&imgs).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn map_without_gt_errors() {
        let mut img = eval(1.0, 1.0);
        img.n_gt = 0;
        assert!(matches!(mean_ap(&[img]), Err(EvalError::NoGroundTruth)));
    }

    #[test]
    fn map_invariant_under_image_order() {
        let mut imgs = vec![eval(0.15, 0.5), eval(0.55, 0.9), eval(0.12, 0.7)];
        let a = mean_ap(&imgs).unwrap();
        imgs.reverse();
        assert_eq!(mean_ap(&imgs).unwrap(), a);
    }

    #[test]
    fn matching_is_one_to_one_and_threshold_monotone() {
        let gt = gt_set(8);
        let mut pred = as_pred(&gt);
        for (i, p) in pred.iter_mut().enumerate() {
            p.bbox.center_x += 0.3 * i as f64;
        }
        let mut prev_tp = usize::MAX;
        for thr in [0.1, 0.3, 0.5, 0.8] {
            let m = match_annotations(&gt, &pred, thr, true).unwrap();
            assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
            assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
            assert!(m.tp() <= prev_tp);
            prev_tp = m.tp();
        }
    }
}
