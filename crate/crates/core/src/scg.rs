//! Self-correlation map generation.
//!
//! Seeds are read off the normalized CAM: confident pixels (`> delta_h`) and
//! confidently-empty pixels (`< delta_l`). The HSC rows of each seed set are
//! averaged into an object map and a background map, and the final map is
//! `max(object - background, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpaError};
use crate::selfcorr::{layered_hsc, CorrelationMatrix, FeatureGrid};
use crate::tensor::{BinaryMask, Map2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgConfig {
    pub delta_h: f64,
    pub delta_l: f64,
    pub orders: Vec<usize>,
}

impl Default for ScgConfig {
    fn default() -> Self {
        Self {
            delta_h: 0.7,
            delta_l: 0.1,
            orders: vec![1, 2],
        }
    }
}

impl ScgConfig {
    pub fn new(delta_h: f64, delta_l: f64, orders: Vec<usize>) -> Result<Self> {
        let cfg = Self {
            delta_h,
            delta_l,
            orders,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta_h", self.delta_h), ("delta_l", self.delta_l)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(SpaError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.delta_l >= self.delta_h {
            return Err(SpaError::Config(format!(
                "delta_l ({}) must be below delta_h ({})",
                self.delta_l, self.delta_h
            )));
        }
        if !self.orders.contains(&1) || self.orders.contains(&0) {
            return Err(SpaError::Config(format!(
                "orders {:?} must include 1 and no 0",
                self.orders
            )));
        }
        Ok(())
    }
}

/// HSC rows of the selected pixels, each an `H x W` map.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSet {
    height: usize,
    width: usize,
    pixels: Vec<usize>,
    rows: Vec<f64>,
}

impl RowSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Source pixel (flat index) of each row.
    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.rows[k * n..(k + 1) * n]
    }
}

/// `cam > delta_h`.
pub fn object_seed(cam: &Map2D, delta_h: f64) -> BinaryMask {
    BinaryMask::from_fn(cam.height(), cam.width(), |y, x| cam.get(y, x) as f64 > delta_h)
}

/// `cam < delta_l`.
pub fn background_seed(cam: &Map2D, delta_l: f64) -> BinaryMask {
    BinaryMask::from_fn(cam.height(), cam.width(), |y, x| (cam.get(y, x) as f64) < delta_l)
}

pub fn gather_rows(hsc: &CorrelationMatrix, mask: &BinaryMask) -> Result<RowSet> {
    let n = hsc.n();
    if mask.height() * mask.width() != n {
        return Err(SpaError::Shape(format!(
            "{}x{} seed mask does not index a {n}x{n} correlation",
            mask.height(),
            mask.width()
        )));
    }
    let pixels = mask.indices();
    if pixels.is_empty() {
        return Err(SpaError::EmptySeed);
    }
    let mut rows = Vec::with_capacity(pixels.len() * n);
    for &p in &pixels {
        rows.extend_from_slice(hsc.row(p));
    }
    Ok(RowSet {
        height: mask.height(),
        width: mask.width(),
        pixels,
        rows,
    })
}

fn mean_row(rows: &RowSet) -> Vec<f64> {
    let n = rows.height * rows.width;
    let mut acc = vec![0.0f64; n];
    for k in 0..rows.len() {
        for (a, &v) in acc.iter_mut().zip(rows.row(k)) {
            *a += v;
        }
    }
    let count = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

/// Elementwise mean of the gathered rows.
pub fn aggregate_rows(rows: &RowSet) -> Map2D {
    let values = mean_row(rows).into_iter().map(|v| v as f32).collect();
    Map2D::new(rows.height, rows.width, values).expect("row extents")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgOutput {
    pub map: Map2D,
    /// No CAM pixel exceeded `delta_h`; `map` is the normalized CAM.
    pub fallback_to_cam: bool,
    pub object_seeds: usize,
    pub background_seeds: usize,
}

/// Localization map from a precomputed HSC on the CAM grid.
pub fn scg_map(hsc: &CorrelationMatrix, cam: &Map2D, cfg: &ScgConfig) -> Result<ScgOutput> {
    cfg.validate()?;
    if cam.len() != hsc.n() {
        return Err(SpaError::Shape(format!(
            "{}x{} CAM does not match a {n}x{n} correlation",
            cam.height(),
            cam.width(),
            n = hsc.n()
        )));
    }
    let cam = cam.minmax_normalize();
    let obj_mask = object_seed(&cam, cfg.delta_h);
    let bg_mask = background_seed(&cam, cfg.delta_l);
    let object_seeds = obj_mask.count();
    let background_seeds = bg_mask.count();

    if object_seeds == 0 {
        return Ok(ScgOutput {
            map: cam,
            fallback_to_cam: true,
            object_seeds,
            background_seeds,
        });
    }
    let object = mean_row(&gather_rows(hsc, &obj_mask)?);
    let values: Vec<f32> = if background_seeds == 0 {
        object.iter().map(|&v| v.max(0.0) as f32).collect()
    } else {
        let background = mean_row(&gather_rows(hsc, &bg_mask)?);
        object
            .iter()
            .zip(&background)
            .map(|(&o, &b)| (o - b).max(0.0) as f32)
            .collect()
    };
    Ok(ScgOutput {
        map: Map2D::new(cam.height(), cam.width(), values)?,
        fallback_to_cam: false,
        object_seeds,
        background_seeds,
    })
}

/// Full pipeline from one or more feature layers. Layers are resampled to the
/// CAM grid before correlation.
pub fn scg_from_features(grids: &[FeatureGrid], cam: &Map2D, cfg: &ScgConfig) -> Result<ScgOutput> {
    cfg.validate()?;
    let hsc = layered_hsc(grids, &cfg.orders, cam.height(), cam.width())?;
    scg_map(&hsc, cam, cfg)
}
