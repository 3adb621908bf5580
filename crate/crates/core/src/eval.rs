//! Localization metrics: map-to-box extraction, box overlap ratios, top-k and
//! GT-known localization error, peak mask IoU over 8-bit thresholds, and the
//! five-way error taxonomy.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaError};
use crate::tensor::{read_tensor, BinaryMask, Map2D};

/// IoU needed for a localization to count as correct (inclusive).
pub const CORRECT_IOU: f64 = 0.5;
pub const MULTI_INSTANCE_IOG: f64 = 0.3;
pub const PART_IOP: f64 = 0.5;
pub const MORE_IOG: f64 = 0.7;
pub const DEFAULT_THETA: f64 = 0.2;

/// Axis-aligned box in half-open pixel coordinates `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(SpaError::Shape(format!(
                "box [{x0}, {y0}, {x1}, {y1}] has no area"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> u64 {
        (self.x1 - self.x0) as u64 * (self.y1 - self.y0) as u64
    }

    pub fn intersection(&self, other: &BBox) -> u64 {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        w as u64 * h as u64
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Result<BBox> {
        let shift = |v: u32, d: i64| -> Result<u32> {
            u32::try_from(v as i64 + d)
                .map_err(|_| SpaError::Shape(format!("box shift moves {v} out of range")))
        };
        BBox::new(
            shift(self.x0, dx)?,
            shift(self.y0, dy)?,
            shift(self.x1, dx)?,
            shift(self.y1, dy)?,
        )
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = SpaError;

    fn try_from(v: [u32; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    inter as f64 / (a.area() + b.area() - inter) as f64
}

/// Intersection over the ground-truth box.
pub fn iog(pred: &BBox, gt: &BBox) -> f64 {
    pred.intersection(gt) as f64 / gt.area() as f64
}

/// Intersection over the predicted box.
pub fn iop(pred: &BBox, gt: &BBox) -> f64 {
    pred.intersection(gt) as f64 / pred.area() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxExtraction {
    pub bbox: BBox,
    /// The binarized map was empty and the full image was returned.
    pub fallback: bool,
}

/// Resize to the image, normalize, keep pixels above `theta`, and box the
/// largest 8-connected component.
pub fn extract_bbox(map: &Map2D, theta: f64, img_w: u32, img_h: u32) -> Result<BoxExtraction> {
    if img_w == 0 || img_h == 0 {
        return Err(SpaError::Shape(format!("image extent {img_w}x{img_h}")));
    }
    let resized = map.resize_bilinear(img_h as usize, img_w as usize)?;
    let norm = resized.minmax_normalize();
    let fg = BinaryMask::from_fn(norm.height(), norm.width(), |y, x| {
        norm.get(y, x) as f64 > theta
    });
    Ok(match largest_component_box(&fg) {
        Some(bbox) => BoxExtraction {
            bbox,
            fallback: false,
        },
        None => BoxExtraction {
            bbox: BBox::new(0, 0, img_w, img_h)?,
            fallback: true,
        },
    })
}

/// Tight box of the largest 8-connected foreground component. Ties go to the
/// component reached first in raster order.
pub fn largest_component_box(mask: &BinaryMask) -> Option<BBox> {
    let (h, w) = (mask.height(), mask.width());
    let bits = mask.bits();
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    let mut best: Option<(usize, BBox)> = None;
    for start in 0..h * w {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut size, mut x0, mut y0, mut x1, mut y1) = (0usize, w, h, 0, 0);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            size += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let q = ny * w + nx;
                    if bits[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|(s, _)| size > *s) {
            let bbox = BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32)
                .expect("component is non-empty");
            best = Some((size, bbox));
        }
    }
    best.map(|(_, b)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakIou {
    pub peak_iou: f64,
    pub peak_t: u8,
}

/// Best mask IoU over all thresholds `t` in `0..=255` with foreground
/// `quantized > t`. The map must already lie in `[0, 1]`; ties keep the
/// smallest threshold.
pub fn peak_iou(map: &Map2D, gt: &BinaryMask) -> Result<PeakIou> {
    if map.height() != gt.height() || map.width() != gt.width() {
        return Err(SpaError::Shape(format!(
            "{}x{} map vs {}x{} mask",
            map.height(),
            map.width(),
            gt.height(),
            gt.width()
        )));
    }
    let gt_area = gt.count() as u64;
    if gt_area == 0 {
        return Err(SpaError::EmptyMask);
    }
    let q = map.quantize_u8()?;
    let mut inside = [0u64; 256];
    let mut outside = [0u64; 256];
    for (&v, &g) in q.values.iter().zip(gt.bits()) {
        if g {
            inside[v as usize] += 1;
        } else {
            outside[v as usize] += 1;
        }
    }
    // Walk thresholds downwards: foreground at t counts values in t+1..=255.
    let mut ious = [0.0f64; 256];
    let (mut tp, mut fp) = (0u64, 0u64);
    for t in (0..256usize).rev() {
        ious[t] = tp as f64 / (gt_area + fp) as f64;
        tp += inside[t];
        fp += outside[t];
    }
    let mut best = PeakIou {
        peak_iou: ious[0],
        peak_t: 0,
    };
    for (t, &v) in ious.iter().enumerate().skip(1) {
        if v > best.peak_iou {
            best = PeakIou {
                peak_iou: v,
                peak_t: t as u8,
            };
        }
    }
    Ok(best)
}

/// One image's annotation and prediction, as stored in the annotation JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub gt_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_top1: Option<usize>,
    pub pred_top5: Vec<usize>,
    pub gt_boxes: Vec<BBox>,
    #[serde(default)]
    pub gt_mask: Option<String>,
    pub map: String,
}

impl ImageRecord {
    pub fn top1(&self) -> usize {
        self.pred_top1.unwrap_or(self.pred_top5[0])
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SpaError::Annotation(format!("{}: {msg}", self.image_id)));
        if self.width == 0 || self.height == 0 {
            return fail(format!("image extent {}x{}", self.width, self.height));
        }
        if self.pred_top5.is_empty() || self.pred_top5.len() > 5 {
            return fail(format!("pred_top5 has {} entries", self.pred_top5.len()));
        }
        if let Some(top1) = self.pred_top1 {
            if top1 != self.pred_top5[0] {
                return fail(format!(
                    "pred_top1 {top1} differs from pred_top5[0] {}",
                    self.pred_top5[0]
                ));
            }
        }
        if self.gt_boxes.is_empty() {
            return fail("no ground-truth boxes".into());
        }
        for b in &self.gt_boxes {
            if b.x1 > self.width || b.y1 > self.height {
                return fail(format!("box {:?} exceeds the image", <[u32; 4]>::from(*b)));
            }
        }
        Ok(())
    }
}

pub fn parse_annotations(json: &str) -> Result<Vec<ImageRecord>> {
    let records: Vec<ImageRecord> =
        serde_json::from_str(json).map_err(|e| SpaError::Annotation(e.to_string()))?;
    if records.is_empty() {
        return Err(SpaError::Annotation("annotation file lists no images".into()));
    }
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SpaError::io(path, e))?;
    parse_annotations(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LocOutcome {
    pub top1_ok: bool,
    pub top5_ok: bool,
    pub gtknown_ok: bool,
}

fn best_gt(record: &ImageRecord, pred: &BBox) -> (usize, f64) {
    record
        .gt_boxes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, gt)| {
            let v = iou(pred, gt);
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

pub fn loc_outcome(record: &ImageRecord, pred: &BBox) -> LocOutcome {
    let gtknown_ok = best_gt(record, pred).1 >= CORRECT_IOU;
    LocOutcome {
        top1_ok: gtknown_ok && record.top1() == record.gt_class,
        top5_ok: gtknown_ok && record.pred_top5.contains(&record.gt_class),
        gtknown_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCase {
    Correct,
    Cls,
    #[serde(rename = "M-Ins")]
    MultiInstance,
    Part,
    More,
    #[serde(rename = "OT")]
    Other,
}

impl ErrorCase {
    pub fn label(self) -> &'static str {
        match self {
            ErrorCase::Correct => "Correct",
            ErrorCase::Cls => "Cls",
            ErrorCase::MultiInstance => "M-Ins",
            ErrorCase::Part => "Part",
            ErrorCase::More => "More",
            ErrorCase::Other => "OT",
        }
    }
}

impl fmt::Display for ErrorCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Precedence: classification, correct, multi-instance, part, more, other.
pub fn classify_error(record: &ImageRecord, pred: &BBox) -> ErrorCase {
    if record.top1() != record.gt_class {
        return ErrorCase::Cls;
    }
    let (best, best_iou) = best_gt(record, pred);
    if best_iou >= CORRECT_IOU {
        return ErrorCase::Correct;
    }
    let touched: Vec<&BBox> = record
        .gt_boxes
        .iter()
        .filter(|gt| pred.intersection(gt) > 0)
        .collect();
    if touched.len() >= 2 {
        let max_iog = touched.iter().map(|gt| iog(pred, gt)).fold(0.0, f64::max);
        if max_iog > MULTI_INSTANCE_IOG {
            return ErrorCase::MultiInstance;
        }
    }
    let gt = &record.gt_boxes[best];
    if iop(pred, gt) > PART_IOP {
        return ErrorCase::Part;
    }
    if iog(pred, gt) > MORE_IOG {
        return ErrorCase::More;
    }
    ErrorCase::Other
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Box,
    Mask,
}

impl std::str::FromStr for EvalMode {
    type Err = SpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(EvalMode::Box),
            "mask" => Ok(EvalMode::Mask),
            other => Err(SpaError::Config(format!("unknown eval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageEval {
    pub image_id: String,
    pub bbox: BBox,
    pub bbox_fallback: bool,
    pub iou: f64,
    pub outcome: LocOutcome,
    pub case: ErrorCase,
    pub peak: Option<PeakIou>,
}

/// Scores one image from in-memory inputs.
pub fn evaluate_image(
    record: &ImageRecord,
    map: &Map2D,
    gt_mask: Option<&BinaryMask>,
    mode: EvalMode,
    theta: f64,
) -> Result<ImageEval> {
    let extraction = extract_bbox(map, theta, record.width, record.height)?;
    let pred = extraction.bbox;
    let peak = match (mode, gt_mask) {
        (EvalMode::Box, _) => None,
        (EvalMode::Mask, None) => {
            return Err(SpaError::Annotation(format!(
                "{}: mask mode needs gt_mask",
                record.image_id
            )))
        }
        (EvalMode::Mask, Some(gt)) => {
            let resized = map.resize_bilinear(gt.height(), gt.width())?;
            Some(peak_iou(&resized.minmax_normalize(), gt)?)
        }
    };
    Ok(ImageEval {
        image_id: record.image_id.clone(),
        bbox: pred,
        bbox_fallback: extraction.fallback,
        iou: best_gt(record, &pred).1,
        outcome: loc_outcome(record, &pred),
        case: classify_error(record, &pred),
        peak,
    })
}

/// Loads the map (and mask when needed) referenced by `record`, relative to `base`.
pub fn evaluate_record(
    record: &ImageRecord,
    base: &Path,
    mode: EvalMode,
    theta: f64,
) -> Result<ImageEval> {
    let map = Map2D::from_tensor(&read_tensor(base.join(&record.map))?)?;
    let mask = match (&record.gt_mask, mode) {
        (Some(p), EvalMode::Mask) => Some(BinaryMask::from_tensor(&read_tensor(base.join(p))?)?),
        _ => None,
    };
    evaluate_image(record, &map, mask.as_ref(), mode, theta)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    #[serde(rename = "Cls")]
    pub cls: usize,
    #[serde(rename = "M-Ins")]
    pub multi_instance: usize,
    #[serde(rename = "Part")]
    pub part: usize,
    #[serde(rename = "More")]
    pub more: usize,
    #[serde(rename = "OT")]
    pub other: usize,
    #[serde(rename = "Correct")]
    pub correct: usize,
}

impl ErrorBreakdown {
    pub fn add(&mut self, case: ErrorCase) {
        match case {
            ErrorCase::Correct => self.correct += 1,
            ErrorCase::Cls => self.cls += 1,
            ErrorCase::MultiInstance => self.multi_instance += 1,
            ErrorCase::Part => self.part += 1,
            ErrorCase::More => self.more += 1,
            ErrorCase::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.cls + self.multi_instance + self.part + self.more + self.other + self.correct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub theta: f64,
    pub num_images: usize,
    pub num_failed: usize,
    pub top1_loc_err: f64,
    pub top5_loc_err: f64,
    pub gtknown_loc_err: f64,
    pub mean_peak_iou: Option<f64>,
    pub mean_peak_t: Option<f64>,
    pub error_breakdown: ErrorBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageFailure {
    pub image_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub images: Vec<ImageEval>,
    pub failures: Vec<ImageFailure>,
}

/// Folds per-image results in record order. Failed images are excluded from
/// the rates and counted in `num_failed`.
pub fn aggregate(
    results: Vec<std::result::Result<ImageEval, ImageFailure>>,
    mode: EvalMode,
    theta: f64,
) -> Result<EvalRun> {
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(img) => images.push(img),
            Err(f) => failures.push(f),
        }
    }
    if images.is_empty() {
        return Err(SpaError::Annotation("no image could be evaluated".into()));
    }
    let n = images.len();
    let (mut top1, mut top5, mut known) = (0usize, 0usize, 0usize);
    let mut breakdown = ErrorBreakdown::default();
    let (mut peak_sum, mut t_sum, mut peaks) = (0.0f64, 0u64, 0usize);
    for img in &images {
        top1 += !img.outcome.top1_ok as usize;
        top5 += !img.outcome.top5_ok as usize;
        known += !img.outcome.gtknown_ok as usize;
        breakdown.add(img.case);
        if let Some(p) = img.peak {
            peak_sum += p.peak_iou;
            t_sum += p.peak_t as u64;
            peaks += 1;
        }
    }
    let pct = |errors: usize| 100.0 * errors as f64 / n as f64;
    let report = EvalReport {
        mode,
        theta,
        num_images: n,
        num_failed: failures.len(),
        top1_loc_err: pct(top1),
        top5_loc_err: pct(top5),
        gtknown_loc_err: pct(known),
        mean_peak_iou: (peaks > 0).then(|| peak_sum / peaks as f64),
        mean_peak_t: (peaks > 0).then(|| t_sum as f64 / peaks as f64),
        error_breakdown: breakdown,
    };
    Ok(EvalRun {
        report,
        images,
        failures,
    })
}

/// Evaluates every record on the current rayon pool. Output does not depend
/// on the pool size.
pub fn evaluate_dataset(
    records: &[ImageRecord],
    base: &Path,
    mode: EvalMode,
    theta: f64,
) -> Result<EvalRun> {
    if records.is_empty() {
        return Err(SpaError::Annotation("no records to evaluate".into()));
    }
    let results: Vec<_> = records
        .par_iter()
        .map(|r| {
            evaluate_record(r, base, mode, theta).map_err(|e| ImageFailure {
                image_id: r.image_id.clone(),
                code: e.code().to_string(),
                message: e.to_string(),
            })
        })
        .collect();
    aggregate(results, mode, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn record(gt_class: usize, top5: Vec<usize>, boxes: Vec<BBox>) -> ImageRecord {
        ImageRecord {
            image_id: "img".into(),
            width: 100,
            height: 100,
            gt_class,
            pred_top1: None,
            pred_top5: top5,
            gt_boxes: boxes,
            gt_mask: None,
            map: "m.spt".into(),
        }
    }

    #[test]
    fn overlap_ratios() {
        let a = b(0, 0, 10, 10);
        assert_eq!((iou(&a, &a), iog(&a, &a), iop(&a, &a)), (1.0, 1.0, 1.0));
        let far = b(20, 20, 30, 30);
        assert_eq!((iou(&a, &far), iog(&a, &far), iop(&a, &far)), (0.0, 0.0, 0.0));
        let c = b(5, 5, 15, 15);
        assert_eq!(iou(&a, &c), 25.0 / 175.0);
        assert_eq!(iog(&a, &c), 0.25);
        assert_eq!(iop(&a, &c), 0.25);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BBox::new(3, 3, 3, 9).is_err());
        assert!(serde_json::from_str::<BBox>("[5, 5, 4, 9]").is_err());
        assert_eq!(serde_json::from_str::<BBox>("[1, 2, 3, 4]").unwrap(), b(1, 2, 3, 4));
    }

    #[test]
    fn bright_block_box() {
        let map = Map2D::from_fn(40, 40, |y, x| {
            if (12..22).contains(&y) && (5..15).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        let e = extract_bbox(&map, 0.2, 40, 40).unwrap();
        assert_eq!(e.bbox, b(5, 12, 15, 22));
        assert!(!e.fallback);
    }

    #[test]
    fn largest_component_wins() {
        let map = Map2D::from_fn(30, 30, |y, x| {
            let big = (2..12).contains(&y) && (2..12).contains(&x);
            let small = (20..24).contains(&y) && (20..25).contains(&x);
            if big || small {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(extract_bbox(&map, 0.5, 30, 30).unwrap().bbox, b(2, 2, 12, 12));
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let mask = BinaryMask::from_fn(4, 4, |y, x| y == x);
        assert_eq!(largest_component_box(&mask), Some(b(0, 0, 4, 4)));
    }

    #[test]
    fn zero_map_falls_back_to_full_image() {
        let e = extract_bbox(&Map2D::zeros(5, 5), 0.2, 20, 10).unwrap();
        assert!(e.fallback);
        assert_eq!(e.bbox, b(0, 0, 20, 10));
    }

    #[test]
    fn outcome_cases() {
        let gt = b(0, 0, 10, 10);
        // wrong class, IoU 0.9
        let r = record(1, vec![2, 1, 3, 4, 5], vec![gt]);
        let o = loc_outcome(&r, &b(0, 0, 10, 9));
        assert!(!o.top1_ok && o.top5_ok && o.gtknown_ok);
        // right class, IoU 0.4
        let r = record(1, vec![1, 2, 3, 4, 5], vec![gt]);
        let o = loc_outcome(&r, &b(0, 0, 4, 10));
        assert!(!o.top1_ok && !o.top5_ok && !o.gtknown_ok);
        // right class, IoU exactly 0.5
        let o = loc_outcome(&r, &b(0, 0, 5, 10));
        assert!(o.top1_ok && o.top5_ok && o.gtknown_ok);
    }

    #[test]
    fn taxonomy_cases() {
        let gt = b(0, 0, 10, 10);
        let wrong = record(1, vec![2, 1, 3, 4, 5], vec![gt]);
        assert_eq!(classify_error(&wrong, &gt), ErrorCase::Cls);

        let r = record(1, vec![1, 2, 3, 4, 5], vec![gt]);
        assert_eq!(classify_error(&r, &gt), ErrorCase::Correct);
        // inside, 30% of gt
        assert_eq!(classify_error(&r, &b(0, 0, 3, 10)), ErrorCase::Part);
        // gt is 40% of pred
        let big = record(1, vec![1], vec![b(0, 0, 4, 10)]);
        assert_eq!(classify_error(&big, &b(0, 0, 10, 10)), ErrorCase::More);
        // two instances side by side, prediction spans both
        let two = record(1, vec![1], vec![b(0, 0, 10, 10), b(12, 0, 22, 10)]);
        assert_eq!(classify_error(&two, &b(0, 0, 22, 10)), ErrorCase::MultiInstance);
        // off target
        assert_eq!(classify_error(&r, &b(8, 8, 30, 30)), ErrorCase::Other);
    }

    #[test]
    fn peak_constant_one_map() {
        let map = Map2D::filled(10, 10, 1.0);
        let gt = BinaryMask::from_fn(10, 10, |y, _| y < 4);
        let p = peak_iou(&map, &gt).unwrap();
        assert_eq!(p.peak_t, 0);
        assert!((p.peak_iou - 0.4).abs() < 1e-12);
    }

    #[test]
    fn peak_recovers_constructed_level_set() {
        let gt = BinaryMask::from_fn(8, 8, |y, x| (2..6).contains(&y) && (1..7).contains(&x));
        let map = Map2D::from_fn(8, 8, |y, x| {
            if gt.get(y, x) {
                0.6 + 0.05 * (x as f32 / 8.0)
            } else {
                0.4 * ((y * 8 + x) as f32 / 64.0)
            }
        });
        let p = peak_iou(&map, &gt).unwrap();
        assert_eq!(p.peak_iou, 1.0);
        let at_127 = {
            let fg = map.quantize_u8().unwrap();
            fg.values.iter().zip(gt.bits()).all(|(&v, &g)| (v > 127) == g)
        };
        assert!(at_127);
    }

    #[test]
    fn peak_rejects_empty_mask() {
        let gt = BinaryMask::from_fn(3, 3, |_, _| false);
        assert!(matches!(
            peak_iou(&Map2D::zeros(3, 3), &gt),
            Err(SpaError::EmptyMask)
        ));
    }

    #[test]
    fn aggregate_two_records() {
        let mk = |case, ok| {
            Ok(ImageEval {
                image_id: "x".into(),
                bbox: b(0, 0, 1, 1),
                bbox_fallback: false,
                iou: 1.0,
                outcome: LocOutcome {
                    top1_ok: ok,
                    top5_ok: true,
                    gtknown_ok: true,
                },
                case,
                peak: None,
            })
        };
        let run = aggregate(
            vec![mk(ErrorCase::Cls, false), mk(ErrorCase::Correct, true)],
            EvalMode::Box,
            0.2,
        )
        .unwrap();
        assert_eq!(run.report.top1_loc_err, 50.0);
        assert_eq!(run.report.top5_loc_err, 0.0);
        assert_eq!(run.report.error_breakdown.cls, 1);
        assert_eq!(run.report.error_breakdown.correct, 1);
        assert_eq!(run.report.mean_peak_iou, None);
    }

    #[test]
    fn annotation_validation() {
        let ok = r#"[{"image_id":"a","width":10,"height":10,"gt_class":3,
            "pred_top5":[3,1,2,4,5],"gt_boxes":[[0,0,5,5]],"gt_mask":null,"map":"a.spt"}]"#;
        assert_eq!(parse_annotations(ok).unwrap()[0].top1(), 3);
        let outside = ok.replace("[0,0,5,5]", "[0,0,11,5]");
        assert!(parse_annotations(&outside).is_err());
        let no_boxes = ok.replace("[[0,0,5,5]]", "[]");
        assert!(parse_annotations(&no_boxes).is_err());
        let mismatch = ok.replace("\"gt_class\":3,", "\"gt_class\":3,\"pred_top1\":1,");
        assert!(parse_annotations(&mismatch).is_err());
    }
}
