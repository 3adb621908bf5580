//! Synthetic planted-object fixtures.
//!
//! Object pixels carry the feature direction `u + noise`, background pixels
//! `v + noise` with `v` rotated `angle` degrees away from `u`. The CAM fires
//! strongly on a compact sub-region covering `coverage` of the object, with a
//! soft halo around it, weakly on the remainder of the object, and with
//! clutter on part of the background, so thresholding the CAM alone cannot
//! recover the object.
//!
//! Random draws come from ChaCha8 (`rand_chacha` 0.9) seeded by
//! `seed_from_u64`, which is stable across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaError};
use crate::eval::{largest_component_box, BBox};
use crate::selfcorr::FeatureGrid;
use crate::tensor::{BinaryMask, Map2D};

pub const PRNG_NAME: &str = "chacha8/rand_chacha-0.9";

/// CAM level on the object outside the strong sub-region.
const WEAK_OBJECT: (f64, f64) = (0.15, 0.35);
/// Fraction of background pixels with clutter, and its level.
const CLUTTER_RATE: f64 = 0.5;
const CLUTTER: (f64, f64) = (0.15, 0.4);
const NUM_CLASSES: usize = 200;
const TOP1_ACCURACY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectShape {
    Rect,
    Blob,
}

impl std::str::FromStr for ObjectShape {
    type Err = SpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(ObjectShape::Rect),
            "blob" => Ok(ObjectShape::Blob),
            other => Err(SpaError::Config(format!("unknown object shape {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub shape: ObjectShape,
    /// Share of the grid occupied by the object.
    pub object_fraction: f64,
    /// Share of the object covered by the strong CAM sub-region.
    pub coverage: f64,
    /// Angle between object and background feature directions, degrees.
    pub angle_deg: f64,
    pub noise: f64,
    /// Upsampling factor from feature grid to image pixels.
    pub scale: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            height: 20,
            width: 20,
            channels: 16,
            shape: ObjectShape::Rect,
            object_fraction: 0.3,
            coverage: 0.25,
            angle_deg: 90.0,
            noise: 0.05,
            scale: 1,
            seed: 0,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SpaError::Config(format!("fixture: {m}")));
        if self.height < 4 || self.width < 4 {
            return fail("grid must be at least 4x4");
        }
        if self.channels < 2 {
            return fail("need at least 2 channels");
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return fail("coverage must lie in (0, 1)");
        }
        if !(self.object_fraction > 0.0 && self.object_fraction < 0.9) {
            return fail("object_fraction must lie in (0, 0.9)");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail("noise must be >= 0");
        }
        if !(self.angle_deg > 0.0 && self.angle_deg <= 180.0) {
            return fail("angle must lie in (0, 180]");
        }
        if self.scale == 0 {
            return fail("scale must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureBundle {
    pub spec: FixtureSpec,
    pub features: FeatureGrid,
    pub cam: Map2D,
    /// Object indicator on the feature grid.
    pub object: BinaryMask,
    /// Object indicator at image resolution.
    pub gt_mask: BinaryMask,
    /// Tight object box at image resolution.
    pub gt_box: BBox,
    pub gt_class: usize,
    pub pred_top5: Vec<usize>,
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<FixtureBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w) = (spec.height, spec.width);

    let object = plant_object(spec, &mut rng);
    let object_px = object.indices();
    if object_px.is_empty() || object_px.len() == h * w {
        return Err(SpaError::Config("fixture: degenerate object".into()));
    }
    let strong_count = ((spec.coverage * object_px.len() as f64).round() as usize).max(1);
    let anchor = object_px[rng.random_range(0..object_px.len())];
    let strong = nearest_pixels(&object_px, anchor, w, strong_count);
    let mut strong_mask = vec![false; h * w];
    strong.iter().for_each(|&p| strong_mask[p] = true);

    let features = plant_features(spec, &object, &mut rng)?;

    let dist = chebyshev_distance(&strong_mask, h, w);
    let mut cam = Vec::with_capacity(h * w);
    for (&d, &inside) in dist.iter().zip(object.bits()) {
        let halo = 0.5f64.powi(d as i32);
        let base = if inside {
            rng.random_range(WEAK_OBJECT.0..WEAK_OBJECT.1)
        } else if rng.random_bool(CLUTTER_RATE) {
            rng.random_range(CLUTTER.0..CLUTTER.1)
        } else {
            0.0
        };
        cam.push(halo.max(base) as f32);
    }
    let cam = Map2D::new(h, w, cam)?;

    let s = spec.scale as usize;
    let gt_mask = BinaryMask::from_fn(h * s, w * s, |y, x| object.get(y / s, x / s));
    let gt_box = largest_component_box(&gt_mask).expect("object is non-empty");

    let gt_class = rng.random_range(0..NUM_CLASSES);
    let pred_top5 = predictions(gt_class, &mut rng);

    Ok(FixtureBundle {
        spec: spec.clone(),
        features,
        cam,
        object,
        gt_mask,
        gt_box,
        gt_class,
        pred_top5,
    })
}

fn plant_object(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> BinaryMask {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let area = spec.object_fraction * h * w;
    let aspect: f64 = rng.random_range(0.6..1.6);
    match spec.shape {
        ObjectShape::Rect => {
            let oh = ((area * aspect).sqrt().round() as usize).clamp(1, spec.height - 2);
            let ow = ((area / oh as f64).round() as usize).clamp(1, spec.width - 2);
            let y0 = rng.random_range(1..=spec.height - 1 - oh);
            let x0 = rng.random_range(1..=spec.width - 1 - ow);
            BinaryMask::from_fn(spec.height, spec.width, |y, x| {
                (y0..y0 + oh).contains(&y) && (x0..x0 + ow).contains(&x)
            })
        }
        ObjectShape::Blob => {
            // ellipse area = pi * a * b
            let ry = (area * aspect / std::f64::consts::PI).sqrt().min(h / 2.0 - 1.0);
            let rx = (area / (std::f64::consts::PI * ry)).min(w / 2.0 - 1.0);
            let cy = rng.random_range(ry + 0.5..h - ry - 0.5);
            let cx = rng.random_range(rx + 0.5..w - rx - 0.5);
            BinaryMask::from_fn(spec.height, spec.width, |y, x| {
                let dy = (y as f64 + 0.5 - cy) / ry;
                let dx = (x as f64 + 0.5 - cx) / rx;
                dy * dy + dx * dx <= 1.0
            })
        }
    }
}

fn plant_features(spec: &FixtureSpec, object: &BinaryMask, rng: &mut ChaCha8Rng) -> Result<FeatureGrid> {
    let c = spec.channels;
    let theta = spec.angle_deg.to_radians();
    let mut u = vec![0.0f64; c];
    u[0] = 1.0;
    let mut v = vec![0.0f64; c];
    v[0] = theta.cos();
    v[1] = theta.sin();
    let mut data = Vec::with_capacity(object.bits().len() * c);
    for &is_object in object.bits() {
        let dir = if is_object { &u } else { &v };
        for &d in dir {
            let z: f64 = StandardNormal.sample(rng);
            data.push((d + spec.noise * z) as f32);
        }
    }
    FeatureGrid::new(spec.height, spec.width, c, data)
}

/// `count` entries of `pixels` closest to `anchor`, ties broken by index.
fn nearest_pixels(pixels: &[usize], anchor: usize, width: usize, count: usize) -> Vec<usize> {
    let (ay, ax) = ((anchor / width) as i64, (anchor % width) as i64);
    let mut ranked: Vec<(i64, usize)> = pixels
        .iter()
        .map(|&p| {
            let (y, x) = ((p / width) as i64, (p % width) as i64);
            ((y - ay).pow(2) + (x - ax).pow(2), p)
        })
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().take(count).map(|(_, p)| p).collect()
}

fn chebyshev_distance(set: &[bool], h: usize, w: usize) -> Vec<usize> {
    let members: Vec<(usize, usize)> = (0..h * w)
        .filter(|&p| set[p])
        .map(|p| (p / w, p % w))
        .collect();
    (0..h * w)
        .map(|p| {
            let (y, x) = (p / w, p % w);
            members
                .iter()
                .map(|&(my, mx)| y.abs_diff(my).max(x.abs_diff(mx)))
                .min()
                .unwrap_or(usize::MAX)
        })
        .collect()
}

fn predictions(gt_class: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let top1_right = rng.random_bool(TOP1_ACCURACY);
    let in_top5 = top1_right || rng.random_bool(0.5);
    let mut preds = Vec::with_capacity(5);
    if top1_right {
        preds.push(gt_class);
    }
    while preds.len() < 5 {
        let c = rng.random_range(0..NUM_CLASSES);
        if c != gt_class && !preds.contains(&c) {
            preds.push(c);
        }
    }
    if in_top5 && !top1_right {
        let slot = rng.random_range(1..5);
        preds[slot] = gt_class;
    }
    preds
}
