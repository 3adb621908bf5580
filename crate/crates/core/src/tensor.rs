//! Dense arrays, the SPT file format, and single-channel map utilities.
//!
//! SPT layout (little-endian, no padding):
//!
//! ```text
//! "SPT1" | dtype: u8 (0 = f32) | ndim: u8 | ndim x u32 extents | f32 payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Result, SpaError};

pub const SPT_MAGIC_PREFIX: &[u8; 3] = b"SPT";
pub const SPT_VERSION: u8 = b'1';
pub const DTYPE_F32: u8 = 0;

/// Row-major n-dimensional array with 32-bit storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(SpaError::Shape(format!(
                "dims {:?} need {} values, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpaError::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Serialize to the SPT byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(SPT_MAGIC_PREFIX);
        out.push(SPT_VERSION);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(SpaError::Truncated {
                expected: 6,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if &magic[..3] != SPT_MAGIC_PREFIX {
            return Err(SpaError::BadMagic { found: magic });
        }
        if magic[3] != SPT_VERSION {
            return Err(SpaError::UnsupportedVersion(magic[3]));
        }
        if bytes.len() < 6 {
            return Err(SpaError::Truncated {
                expected: 6,
                found: bytes.len(),
            });
        }
        if bytes[4] != DTYPE_F32 {
            return Err(SpaError::UnsupportedDtype(bytes[4]));
        }
        let ndim = bytes[5] as usize;
        let header = 6 + 4 * ndim;
        if bytes.len() < header {
            return Err(SpaError::Truncated {
                expected: header,
                found: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[6..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        check_dims(&dims)?;
        let count: usize = dims.iter().product();
        let expected = header + 4 * count;
        if bytes.len() != expected {
            if bytes.len() < expected {
                return Err(SpaError::Truncated {
                    expected,
                    found: bytes.len(),
                });
            }
            return Err(SpaError::Shape(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dims, data)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(SpaError::Shape("tensor needs at least one dimension".into()));
    }
    if dims.len() > u8::MAX as usize {
        return Err(SpaError::Shape(format!("{} dimensions exceed 255", dims.len())));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > u32::MAX as usize) {
        return Err(SpaError::Shape(format!("extent {d} is not a positive u32")));
    }
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SpaError::io(path, e))?;
    DenseTensor::from_bytes(&bytes)
}

pub fn write_tensor(tensor: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| SpaError::io(path, e))
}

/// Single-channel spatial map (CAM, localization map, suppressed scores).
#[derive(Debug, Clone, PartialEq)]
pub struct Map2D {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Map2D {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SpaError::Shape(format!("map extent {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(SpaError::Shape(format!(
                "{height}x{width} map needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0, "map extents must be positive");
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0, "map extents must be positive");
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    /// Accepts `[H, W]` or `[1, H, W]` tensors.
    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        match *t.dims() {
            [h, w] | [1, h, w] => Self::new(h, w, t.data().to_vec()),
            ref dims => Err(SpaError::Shape(format!(
                "expected a [H, W] map tensor, got dims {dims:?}"
            ))),
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor {
            dims: vec![self.height, self.width],
            data: self.values.clone(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// `(v - min) / (max - min)`; a constant map becomes all zeros.
    pub fn minmax_normalize(&self) -> Map2D {
        let (lo, hi) = self.min_max();
        let values = if hi > lo {
            let lo = lo as f64;
            let range = hi as f64 - lo;
            self.values
                .iter()
                .map(|&v| ((v as f64 - lo) / range) as f32)
                .collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Map2D {
            height: self.height,
            width: self.width,
            values,
        }
    }

    /// Bilinear resampling with the align-corners-false convention.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Map2D> {
        if out_h == 0 || out_w == 0 {
            return Err(SpaError::Shape(format!("resize target {out_h}x{out_w}")));
        }
        let values = resize_channels(&self.values, self.height, self.width, 1, out_h, out_w);
        Ok(Map2D {
            height: out_h,
            width: out_w,
            values,
        })
    }

    /// `round_half_up(v * 255)` for every pixel; values must lie in `[0, 1]`.
    pub fn quantize_u8(&self) -> Result<ByteMap> {
        let mut values = Vec::with_capacity(self.values.len());
        for (index, &v) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpaError::OutOfRange {
                    index,
                    value: v as f64,
                });
            }
            values.push((v as f64 * 255.0 + 0.5).floor() as u8);
        }
        Ok(ByteMap {
            height: self.height,
            width: self.width,
            values,
        })
    }

    /// `(v > threshold)` per pixel.
    pub fn threshold(&self, threshold: f32) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.values.iter().map(|&v| v > threshold).collect(),
        }
    }
}

/// 8-bit quantized map; thresholds for peak metrics live on this scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(SpaError::Shape(format!(
                "{height}x{width} mask with {} entries",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(height > 0 && width > 0, "mask extents must be positive");
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    /// Accepts `[H, W]` or `[1, H, W]` tensors holding only 0 and 1.
    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        let map = Map2D::from_tensor(t)?;
        let mut bits = Vec::with_capacity(map.len());
        for (index, &v) in map.values().iter().enumerate() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                v => {
                    return Err(SpaError::OutOfRange {
                        index,
                        value: v as f64,
                    })
                }
            }
        }
        Self::new(map.height(), map.width(), bits)
    }

    pub fn to_map(&self) -> Map2D {
        Map2D {
            height: self.height,
            width: self.width,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        self.to_map().to_tensor()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_clear(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Flat indices of set pixels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Source taps for one output coordinate: `(lo, hi, frac)` so that the
/// sample is `(1 - frac) * src[lo] + frac * src[hi]`.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            (lo, hi, frac)
        })
        .collect()
}

/// Bilinear resize of an `[H, W, C]` row-major buffer, each channel independently.
pub(crate) fn resize_channels(
    src: &[f32],
    in_h: usize,
    in_w: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    if in_h == out_h && in_w == out_w {
        return src.to_vec();
    }
    let ys = axis_taps(in_h, out_h);
    let xs = axis_taps(in_w, out_w);
    let at = |y: usize, x: usize, c: usize| src[(y * in_w + x) * channels + c] as f64;
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let top = at(y0, x0, c) * (1.0 - fx) + at(y0, x1, c) * fx;
                let bottom = at(y1, x0, c) * (1.0 - fx) + at(y1, x1, c) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    out
}
