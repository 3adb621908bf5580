//! Restricted activation: pseudo-masks from the per-pixel spread of class
//! probabilities, a sigmoid-bounded activation penalty, and the combined
//! training objective with its gradient w.r.t. the class score map.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaError};
use crate::tensor::{BinaryMask, DenseTensor, Map2D};

/// Class score map `F` with shape `[H, W, C]`, stored in 64-bit so that
/// finite-difference checks are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    classes: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SpaError::Shape(format!("score map extent {height}x{width}")));
        }
        if classes < 2 {
            return Err(SpaError::Shape(format!("score map needs >= 2 classes, got {classes}")));
        }
        if values.len() != height * width * classes {
            return Err(SpaError::Shape(format!(
                "{height}x{width}x{classes} score map needs {} values, got {}",
                height * width * classes,
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            classes,
            values,
        })
    }

    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        match *t.dims() {
            [h, w, c] | [1, h, w, c] => {
                Self::new(h, w, c, t.data().iter().map(|&v| v as f64).collect())
            }
            ref dims => Err(SpaError::Shape(format!(
                "expected [H, W, C] scores, got dims {dims:?}"
            ))),
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::new(
            vec![self.height, self.width, self.classes],
            self.values.iter().map(|&v| v as f32).collect(),
        )
        .expect("finite scores")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.classes..(p + 1) * self.classes]
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(SpaError::ClassOutOfRange {
                class,
                classes: self.classes,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamConfig {
    /// Background threshold on the per-pixel probability spread.
    pub tau: f64,
    /// Gap between the background and object thresholds.
    pub sigma: f64,
    /// Weight of the restricted-activation term.
    pub alpha: f64,
}

impl Default for RamConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            sigma: 0.1,
            alpha: 1.0,
        }
    }
}

impl RamConfig {
    pub fn new(tau: f64, sigma: f64, alpha: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(SpaError::Config(format!("tau must be > 0, got {tau}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SpaError::Config(format!("sigma must be > 0, got {sigma}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SpaError::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(Self { tau, sigma, alpha })
    }

    /// The object threshold must be reachable: a one-hot distribution over
    /// `classes` has standard deviation `sqrt(C - 1) / C`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        let c = classes as f64;
        let bound = (c - 1.0).sqrt() / c;
        if self.tau + self.sigma >= bound {
            return Err(SpaError::Config(format!(
                "tau + sigma = {} is unreachable for {classes} classes (max spread {bound:.6})",
                self.tau + self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_ce: f64,
    pub l_ra: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMasks {
    pub background: BinaryMask,
    pub object: BinaryMask,
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-pixel softmax over the class channel.
pub fn channel_softmax(scores: &ScoreMap) -> ScoreMap {
    let c = scores.classes;
    let mut values = vec![0.0; scores.values.len()];
    for (logits, out) in scores.values.chunks_exact(c).zip(values.chunks_exact_mut(c)) {
        softmax_into(logits, out);
    }
    ScoreMap {
        values,
        ..scores.clone()
    }
}

fn stddev_values(probs: &ScoreMap) -> Vec<f64> {
    probs
        .values
        .chunks_exact(probs.classes)
        .map(population_std)
        .collect()
}

/// Population standard deviation over the channel values at each pixel.
pub fn channel_stddev(probs: &ScoreMap) -> Map2D {
    let values = stddev_values(probs).into_iter().map(|v| v as f32).collect();
    Map2D::new(probs.height, probs.width, values).expect("extents preserved")
}

/// Background where the probability spread is below `tau`, object where it
/// exceeds `tau + sigma`; the band in between belongs to neither.
pub fn pseudo_masks(scores: &ScoreMap, cfg: &RamConfig) -> Result<PseudoMasks> {
    cfg.check_classes(scores.classes)?;
    let spread = stddev_values(&channel_softmax(scores));
    let (h, w) = (scores.height, scores.width);
    Ok(PseudoMasks {
        background: BinaryMask::new(h, w, spread.iter().map(|&s| s < cfg.tau).collect())?,
        object: BinaryMask::new(
            h,
            w,
            spread.iter().map(|&s| s > cfg.tau + cfg.sigma).collect(),
        )?,
    })
}

/// `sigmoid(F_t)` per pixel.
pub fn sigmoid_suppress(scores: &ScoreMap, class: usize) -> Result<Map2D> {
    scores.check_class(class)?;
    let values = (0..scores.pixels())
        .map(|p| sigmoid(scores.pixel(p)[class]) as f32)
        .collect();
    Map2D::new(scores.height, scores.width, values)
}

pub fn restricted_activation_loss(scores: &ScoreMap, class: usize, cfg: &RamConfig) -> Result<f64> {
    scores.check_class(class)?;
    let masks = pseudo_masks(scores, cfg)?;
    restricted_activation_loss_with_masks(scores, class, &masks)
}

/// Mean over pixels of `bg * sigmoid(F_t) + obj * (1 - sigmoid(F_t))` for
/// fixed masks.
pub fn restricted_activation_loss_with_masks(
    scores: &ScoreMap,
    class: usize,
    masks: &PseudoMasks,
) -> Result<f64> {
    scores.check_class(class)?;
    let n = scores.pixels();
    if masks.background.bits().len() != n || masks.object.bits().len() != n {
        return Err(SpaError::Shape("pseudo-mask extents differ from score map".into()));
    }
    let mut acc = 0.0;
    for p in 0..n {
        let s = sigmoid(scores.pixel(p)[class]);
        if masks.background.bits()[p] {
            acc += s;
        }
        if masks.object.bits()[p] {
            acc += 1.0 - s;
        }
    }
    Ok(acc / n as f64)
}

/// Spatial mean of each channel (global average pooling).
fn pooled_scores(scores: &ScoreMap) -> Vec<f64> {
    let c = scores.classes;
    let mut pooled = vec![0.0; c];
    for px in scores.values.chunks_exact(c) {
        for (acc, &v) in pooled.iter_mut().zip(px) {
            *acc += v;
        }
    }
    let n = scores.pixels() as f64;
    pooled.iter_mut().for_each(|v| *v /= n);
    pooled
}

/// Cross entropy of the softmax over pooled class scores.
pub fn classification_loss(scores: &ScoreMap, class: usize) -> Result<f64> {
    scores.check_class(class)?;
    let pooled = pooled_scores(scores);
    let max = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + pooled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - pooled[class])
}

pub fn total_loss(scores: &ScoreMap, class: usize, cfg: &RamConfig) -> Result<LossReport> {
    let l_ce = classification_loss(scores, class)?;
    let l_ra = restricted_activation_loss(scores, class, cfg)?;
    Ok(LossReport {
        l_ce,
        l_ra,
        total: l_ce + cfg.alpha * l_ra,
    })
}

/// `dL/dF` with the pseudo-masks held constant.
pub fn loss_gradient(scores: &ScoreMap, class: usize, cfg: &RamConfig) -> Result<DenseTensor> {
    let masks = pseudo_masks(scores, cfg)?;
    let grad = loss_gradient_with_masks(scores, class, cfg.alpha, &masks)?;
    DenseTensor::new(
        vec![scores.height, scores.width, scores.classes],
        grad.into_iter().map(|v| v as f32).collect(),
    )
}

/// 64-bit gradient for explicit masks.
pub fn loss_gradient_with_masks(
    scores: &ScoreMap,
    class: usize,
    alpha: f64,
    masks: &PseudoMasks,
) -> Result<Vec<f64>> {
    scores.check_class(class)?;
    let c = scores.classes;
    let n = scores.pixels();
    let inv_n = 1.0 / n as f64;

    let pooled = pooled_scores(scores);
    let mut probs = vec![0.0; c];
    softmax_into(&pooled, &mut probs);
    let mut ce = probs;
    ce[class] -= 1.0;

    let mut grad = Vec::with_capacity(n * c);
    for p in 0..n {
        for (k, &g) in ce.iter().enumerate() {
            let mut v = g * inv_n;
            if k == class && alpha != 0.0 {
                let sign = masks.background.bits()[p] as i32 - masks.object.bits()[p] as i32;
                if sign != 0 {
                    let s = sigmoid(scores.pixel(p)[class]);
                    v += alpha * inv_n * sign as f64 * s * (1.0 - s);
                }
            }
            grad.push(v);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(h: usize, w: usize, c: usize, v: &[f64]) -> ScoreMap {
        ScoreMap::new(h, w, c, v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_cases() {
        let p = channel_softmax(&scores(1, 1, 2, &[0.0, 0.0]));
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = channel_softmax(&scores(1, 1, 2, &[1000.0, 0.0]));
        assert_eq!(p.values()[0], 1.0);
        assert!(p.values()[1] < 1e-300);
        let p = channel_softmax(&scores(1, 1, 3, &[1.0, 2.0, 3.0]));
        for (got, want) in p.values().iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 1e-5);
        }
    }

    #[test]
    fn stddev_cases() {
        let u = channel_stddev(&scores(1, 1, 4, &[0.25; 4]));
        assert_eq!(u.values(), &[0.0]);
        let s = channel_stddev(&scores(1, 1, 2, &[1.0, 0.0]));
        assert_eq!(s.values(), &[0.5]);
        let mut logits = vec![0.0; 10];
        logits[0] = 10.0;
        let s = channel_stddev(&channel_softmax(&scores(1, 1, 10, &logits)));
        assert!((s.values()[0] - 0.2999).abs() < 1e-3);
    }

    #[test]
    fn masks_uniform_and_confident() {
        let cfg = RamConfig::new(0.1, 0.1, 1.0).unwrap();
        let m = pseudo_masks(&scores(2, 2, 3, &[0.5; 12]), &cfg).unwrap();
        assert_eq!(m.background.count(), 4);
        assert_eq!(m.object.count(), 0);

        let m = pseudo_masks(&scores(1, 2, 2, &[1000.0, 0.0, 0.0, 0.0]), &cfg).unwrap();
        assert_eq!(m.object.bits(), &[true, false]);
        assert_eq!(m.background.bits(), &[false, true]);
    }

    #[test]
    fn unreachable_thresholds_rejected() {
        let cfg = RamConfig::new(0.3, 0.25, 1.0).unwrap();
        assert!(pseudo_masks(&scores(1, 1, 2, &[0.0, 1.0]), &cfg).is_err());
        assert!(RamConfig::new(0.0, 0.1, 1.0).is_err());
        assert!(RamConfig::new(0.1, 0.0, 1.0).is_err());
        assert!(RamConfig::new(0.1, 0.1, -1.0).is_err());
    }

    #[test]
    fn sigmoid_cases() {
        let m = sigmoid_suppress(&scores(1, 3, 2, &[0.0, 9.0, -100.0, 0.0, 3f64.ln(), 0.0]), 0)
            .unwrap();
        assert_eq!(m.values()[0], 0.5);
        assert!(m.values()[1] < 1e-40 && m.values()[1] >= 0.0);
        assert!((m.values()[2] - 0.75).abs() < 1e-7);
        assert!(sigmoid_suppress(&scores(1, 1, 2, &[0.0, 0.0]), 2).is_err());
    }

    #[test]
    fn restricted_loss_saturated_cases() {
        let cfg = RamConfig::default();
        // uniform over the two classes after softmax: all background
        let s = scores(2, 2, 2, &[-100.0, -100.0, -100.0, -100.0, -100.0, -100.0, -100.0, -100.0]);
        assert!(restricted_activation_loss(&s, 0, &cfg).unwrap() < 1e-6);

        // confident class 0 everywhere: all object
        let s = scores(2, 2, 2, &[100.0, 0.0, 100.0, 0.0, 100.0, 0.0, 100.0, 0.0]);
        let masks = pseudo_masks(&s, &cfg).unwrap();
        assert_eq!(masks.object.count(), 4);
        assert!(restricted_activation_loss(&s, 0, &cfg).unwrap() < 1e-6);
    }

    #[test]
    fn classification_loss_cases() {
        let s = scores(1, 2, 2, &[0.0, 0.0, 0.0, 0.0]);
        assert!((classification_loss(&s, 0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let s = scores(1, 1, 2, &[100.0, 0.0]);
        assert!(classification_loss(&s, 0).unwrap() < 1e-40);
        assert!(classification_loss(&s, 5).is_err());
    }

    #[test]
    fn total_loss_definition() {
        let s = scores(1, 2, 3, &[0.3, -1.2, 2.0, 0.7, 0.1, -0.4]);
        let zero = RamConfig::new(0.1, 0.1, 0.0).unwrap();
        let r = total_loss(&s, 1, &zero).unwrap();
        assert_eq!(r.total, r.l_ce);
        let half = RamConfig::new(0.1, 0.1, 0.5).unwrap();
        let r = total_loss(&s, 1, &half).unwrap();
        assert_eq!(r.total, r.l_ce + 0.5 * r.l_ra);
    }

    #[test]
    fn gradient_uniform_ce_case() {
        let s = scores(2, 2, 2, &[0.0; 8]);
        let cfg = RamConfig::new(0.1, 0.1, 0.0).unwrap();
        let g = loss_gradient(&s, 1, &cfg).unwrap();
        for p in 0..4 {
            assert!((g.data()[p * 2 + 1] as f64 - (-0.5 / 4.0)).abs() < 1e-7);
            assert!((g.data()[p * 2] as f64 - 0.5 / 4.0).abs() < 1e-7);
        }
    }

    #[test]
    fn neither_mask_pixels_get_only_ce_gradient() {
        let s = scores(1, 2, 2, &[0.0, 0.0, 0.3, 0.0]);
        let masks = PseudoMasks {
            background: BinaryMask::new(1, 2, vec![false, false]).unwrap(),
            object: BinaryMask::new(1, 2, vec![false, false]).unwrap(),
        };
        let with = loss_gradient_with_masks(&s, 0, 1.0, &masks).unwrap();
        let without = loss_gradient_with_masks(&s, 0, 0.0, &masks).unwrap();
        assert_eq!(with, without);
    }
}
