//! Deterministic inputs shared by the benchmarks under `benches/`.

use spa_core::{FeatureGrid, Map2D};

/// splitmix64 stream mapped to `[-1, 1)`.
fn stream(seed: u64) -> impl FnMut() -> f32 {
    let mut state = seed;
    move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    }
}

pub fn grid(height: usize, width: usize, channels: usize, seed: u64) -> FeatureGrid {
    let mut next = stream(seed);
    let data = (0..height * width * channels).map(|_| next()).collect();
    FeatureGrid::new(height, width, channels, data).expect("valid grid")
}

/// Smooth single-peak map, as a CAM would look.
pub fn blob(height: usize, width: usize) -> Map2D {
    let (cy, cx) = (height as f32 * 0.4, width as f32 * 0.55);
    let s = (height.min(width) as f32 / 5.0).powi(2);
    Map2D::from_fn(height, width, |y, x| {
        let (dy, dx) = (y as f32 - cy, x as f32 - cx);
        (-(dy * dy + dx * dx) / s).exp()
    })
}
