//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the kernels under test.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spa_core::FeatureGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureGrid {
    let data = (0..h * w * c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureGrid::new(h, w, c, data).unwrap()
}

/// Per-pair cosine straight from the definition.
pub fn cosine(grid: &FeatureGrid) -> Vec<Vec<f64>> {
    let n = grid.pixels();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (fi, fj) = (grid.feature(i), grid.feature(j));
            let mut dot = 0.0f64;
            let mut ni = 0.0f64;
            let mut nj = 0.0f64;
            for k in 0..fi.len() {
                dot += fi[k] as f64 * fj[k] as f64;
                ni += fi[k] as f64 * fi[k] as f64;
                nj += fj[k] as f64 * fj[k] as f64;
            }
            s[i][j] = dot / (ni.sqrt() * nj.sqrt());
        }
    }
    s
}

/// Second-order similarity: sum over every k with i != k != j.
pub fn second_order(s: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = s.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                acc += s[i][k] * s[k][j];
            }
            out[i][j] = acc / n as f64;
        }
    }
    out
}

/// Third-order similarity: chains i -> k0 -> k1 -> j with k0 != i and k1 != j.
pub fn third_order(s: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = s.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k0 in 0..n {
                if k0 == i {
                    continue;
                }
                for k1 in 0..n {
                    if k1 == j {
                        continue;
                    }
                    acc += s[i][k0] * s[k0][k1] * s[k1][j];
                }
            }
            out[i][j] = acc / (n * n) as f64;
        }
    }
    out
}

pub fn normalize_rows(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                row.iter().map(|v| (v - lo) / (hi - lo)).collect()
            } else {
                vec![0.0; row.len()]
            }
        })
        .collect()
}

/// max(relu(S), normalized S^2).
pub fn hsc12(grid: &FeatureGrid) -> Vec<Vec<f64>> {
    let s = cosine(grid);
    let sc2 = normalize_rows(&second_order(&s));
    let n = s.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = s[i][j].max(0.0).max(sc2[i][j]);
        }
    }
    out
}

/// Straight-line localization map: normalize CAM, seed, mean rows, subtract, relu.
pub fn scg_reference(grid: &FeatureGrid, cam: &[f32], delta_h: f64, delta_l: f64) -> Vec<f64> {
    let hsc = hsc12(grid);
    let n = hsc.len();
    let lo = cam.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = cam.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let norm: Vec<f64> = cam
        .iter()
        .map(|&v| (v as f64 - lo) / (hi - lo))
        .collect();
    let mean_rows = |sel: &dyn Fn(f64) -> bool| -> Vec<f64> {
        let mut acc = vec![0.0; n];
        let mut count = 0usize;
        for p in 0..n {
            if sel(norm[p]) {
                count += 1;
                for q in 0..n {
                    acc[q] += hsc[p][q];
                }
            }
        }
        if count == 0 {
            return acc;
        }
        acc.iter().map(|v| v / count as f64).collect()
    };
    let obj = mean_rows(&|v| v > delta_h);
    let bg = mean_rows(&|v| v < delta_l);
    obj.iter().zip(&bg).map(|(o, b)| (o - b).max(0.0)).collect()
}
