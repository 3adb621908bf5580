//! Pixel-to-pixel self-correlation of a feature grid.
//!
//! Raw cosine similarity `S` is the base. First-order correlation clips it at
//! zero. Order `h >= 2` follows chains of `h` similarity hops between pixel
//! `i` and pixel `j`, averaged over `(HW)^(h-1)`, where the first hop may not
//! stay on `i` and the last hop may not start on `j`. With `S'` the cosine
//! matrix with a zeroed diagonal that is exactly
//!
//! ```text
//! S^h = S' · S^(h-2) · S' / (HW)^(h-1)
//! ```
//!
//! which is what the kernels evaluate. Every matrix product reduces to row dot
//! products because the right-hand factor is always symmetric.

use crate::error::{Result, SpaError};
use crate::kernel;
use crate::tensor::{resize_channels, DenseTensor};

/// `[H, W, C]` feature map viewed as `HW` feature vectors of length `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(SpaError::Shape(format!(
                "feature grid {height}x{width}x{channels}"
            )));
        }
        if height * width < 2 {
            return Err(SpaError::Shape("feature grid needs at least two pixels".into()));
        }
        if data.len() != height * width * channels {
            return Err(SpaError::Shape(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(SpaError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Accepts `[H, W, C]` or `[1, H, W, C]` tensors.
    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        match *t.dims() {
            [h, w, c] | [1, h, w, c] => Self::new(h, w, c, t.data().to_vec()),
            ref dims => Err(SpaError::Shape(format!(
                "expected [H, W, C] features, got dims {dims:?}"
            ))),
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::new(
            vec![self.height, self.width, self.channels],
            self.data.clone(),
        )
        .expect("grid invariants imply a valid tensor")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn feature(&self, pixel: usize) -> &[f32] {
        &self.data[pixel * self.channels..(pixel + 1) * self.channels]
    }

    /// Channelwise bilinear resize to a new spatial grid.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<FeatureGrid> {
        if height == 0 || width == 0 {
            return Err(SpaError::Shape(format!("resize target {height}x{width}")));
        }
        let data = resize_channels(
            &self.data,
            self.height,
            self.width,
            self.channels,
            height,
            width,
        );
        FeatureGrid::new(height, width, self.channels, data)
    }
}

/// Dense `n x n` pairwise-affinity matrix, `n = HW`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    data: Vec<f64>,
    order: usize,
    normalized: bool,
}

impl CorrelationMatrix {
    pub fn new(n: usize, data: Vec<f64>, order: usize, normalized: bool) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(SpaError::Shape(format!(
                "{n}x{n} correlation matrix with {} entries",
                data.len()
            )));
        }
        Ok(Self {
            n,
            data,
            order,
            normalized,
        })
    }

    pub fn from_tensor(t: &DenseTensor, order: usize, normalized: bool) -> Result<Self> {
        match *t.dims() {
            [a, b] if a == b => Self::new(
                a,
                t.data().iter().map(|&v| v as f64).collect(),
                order,
                normalized,
            ),
            ref dims => Err(SpaError::Shape(format!(
                "expected a square [n, n] tensor, got {dims:?}"
            ))),
        }
    }

    /// `[n, n]` f32 tensor for the SPT format.
    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::new(
            vec![self.n, self.n],
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("finite entries")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Raw cosine similarity between every pair of pixel features.
pub fn cosine_similarity_matrix(grid: &FeatureGrid) -> Result<CorrelationMatrix> {
    let n = grid.pixels();
    let c = grid.channels();
    let mut unit = vec![0.0f64; n * c];
    for (pixel, out) in unit.chunks_exact_mut(c).enumerate() {
        let f = grid.feature(pixel);
        let norm = f.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SpaError::ZeroNorm { pixel });
        }
        for (o, &v) in out.iter_mut().zip(f) {
            *o = v as f64 / norm;
        }
    }
    let mut s = kernel::gram(&unit, n, c);
    for i in 0..n {
        for j in 0..n {
            let v = &mut s[i * n + j];
            *v = if i == j { 1.0 } else { v.clamp(-1.0, 1.0) };
        }
    }
    CorrelationMatrix::new(n, s, 1, false)
}

/// `max(S, 0)`.
pub fn first_order_sc(grid: &FeatureGrid) -> Result<CorrelationMatrix> {
    Ok(relu(&cosine_similarity_matrix(grid)?))
}

fn relu(cosine: &CorrelationMatrix) -> CorrelationMatrix {
    CorrelationMatrix {
        n: cosine.n,
        data: cosine.data.iter().map(|&v| v.max(0.0)).collect(),
        order: 1,
        normalized: false,
    }
}

/// Raw (unnormalized) order-`h` similarity, `h >= 2`.
pub fn high_order_similarity(grid: &FeatureGrid, order: usize) -> Result<CorrelationMatrix> {
    if order < 2 {
        return Err(SpaError::InvalidOrder(order));
    }
    let cosine = cosine_similarity_matrix(grid)?;
    high_order_from_cosine(&cosine, order)
}

/// Order-`h` similarity from a precomputed raw cosine matrix.
pub fn high_order_from_cosine(cosine: &CorrelationMatrix, order: usize) -> Result<CorrelationMatrix> {
    if order < 2 {
        return Err(SpaError::InvalidOrder(order));
    }
    let n = cosine.n;
    let mut hollow = cosine.data.clone();
    for i in 0..n {
        hollow[i * n + i] = 0.0;
    }
    let mut chain = if order == 2 {
        kernel::gram(&hollow, n, n)
    } else {
        let mut p = hollow.clone();
        for _ in 0..order - 2 {
            p = kernel::mul_symmetric(&p, &cosine.data, n);
        }
        kernel::mul_symmetric(&p, &hollow, n)
    };
    let scale = (n as f64).powi(order as i32 - 1);
    chain.iter_mut().for_each(|v| *v /= scale);
    CorrelationMatrix::new(n, chain, order, false)
}

/// Per-row min-max rescale to `[0, 1]`; a constant row becomes zeros.
pub fn row_minmax_normalize(m: &CorrelationMatrix) -> CorrelationMatrix {
    let n = m.n;
    let mut data = m.data.clone();
    for row in data.chunks_exact_mut(n) {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi > lo {
            let range = hi - lo;
            row.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            row.fill(0.0);
        }
    }
    CorrelationMatrix {
        n,
        data,
        order: m.order,
        normalized: true,
    }
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if !orders.contains(&1) {
        return Err(SpaError::Config(format!(
            "HSC orders {orders:?} must include first order"
        )));
    }
    if orders.contains(&0) {
        return Err(SpaError::InvalidOrder(0));
    }
    Ok(())
}

/// Elementwise max of `SC^1` and the row-normalized `SC^h` for each requested order.
pub fn hsc(grid: &FeatureGrid, orders: &[usize]) -> Result<CorrelationMatrix> {
    check_orders(orders)?;
    let cosine = cosine_similarity_matrix(grid)?;
    hsc_from_cosine(&cosine, orders)
}

pub fn hsc_from_cosine(cosine: &CorrelationMatrix, orders: &[usize]) -> Result<CorrelationMatrix> {
    check_orders(orders)?;
    let mut out = relu(cosine);
    let mut highest = 1;
    let mut higher: Vec<usize> = orders.iter().copied().filter(|&h| h >= 2).collect();
    higher.sort_unstable();
    higher.dedup();
    for h in higher {
        let sc = row_minmax_normalize(&high_order_from_cosine(cosine, h)?);
        for (o, &v) in out.data.iter_mut().zip(&sc.data) {
            *o = o.max(v);
        }
        highest = h;
    }
    out.order = highest;
    out.normalized = true;
    Ok(out)
}

/// Elementwise sum of per-layer HSC matrices, row-normalized afterwards.
pub fn fuse_layers(layers: &[CorrelationMatrix]) -> Result<CorrelationMatrix> {
    let first = layers
        .first()
        .ok_or_else(|| SpaError::Config("no correlation matrices to fuse".into()))?;
    let n = first.n;
    let mut sum = vec![0.0f64; n * n];
    for m in layers {
        if m.n != n {
            return Err(SpaError::Shape(format!(
                "cannot fuse {}x{} with {n}x{n} correlation",
                m.n, m.n
            )));
        }
        for (s, &v) in sum.iter_mut().zip(&m.data) {
            *s += v;
        }
    }
    let order = layers.iter().map(|m| m.order).max().unwrap_or(1);
    Ok(row_minmax_normalize(&CorrelationMatrix {
        n,
        data: sum,
        order,
        normalized: false,
    }))
}

/// HSC over one or more feature layers resampled to a common `height x width`
/// grid. A single layer is returned as-is; several are fused.
pub fn layered_hsc(
    grids: &[FeatureGrid],
    orders: &[usize],
    height: usize,
    width: usize,
) -> Result<CorrelationMatrix> {
    if grids.is_empty() {
        return Err(SpaError::Config("no feature layers given".into()));
    }
    let per_layer = grids
        .iter()
        .map(|g| {
            if g.height() == height && g.width() == width {
                hsc(g, orders)
            } else {
                hsc(&g.resize_bilinear(height, width)?, orders)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if per_layer.len() == 1 {
        Ok(per_layer.into_iter().next().unwrap())
    } else {
        fuse_layers(&per_layer)
    }
}

/// Straight nested-loop evaluation, kept as the performance baseline.
pub mod reference {
    use super::CorrelationMatrix;

    /// Order-2 similarity by summing over every admissible intermediate pixel.
    pub fn second_order(cosine: &CorrelationMatrix) -> Vec<f64> {
        let n = cosine.n();
        let s = cosine.data();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    if k != i && k != j {
                        acc += s[i * n + k] * s[k * n + j];
                    }
                }
                out[i * n + j] = acc / n as f64;
            }
        }
        out
    }
}
