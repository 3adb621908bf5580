//! Dense dot-product kernels behind the correlation matrices.
//!
//! Every output entry is one dot product `<a_i, b_j>` evaluated with a fixed
//! lane layout and reduction order, independent of where the entry sits in a
//! tile or which thread computes it. Outputs are therefore bit-identical for
//! any thread count, and `<a_i, a_j> == <a_j, a_i>` exactly.

use rayon::prelude::*;

const ROW_BLOCK: usize = 16;
const COL_TILE: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Isa {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Fma,
}

/// Chosen once per process.
fn isa() -> Isa {
    static ISA: std::sync::OnceLock<Isa> = std::sync::OnceLock::new();
    *ISA.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            return Isa::Fma;
        }
        Isa::Portable
    })
}

/// `<a, b>` with the same arithmetic the tiled kernels use.
#[cfg(test)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match isa() {
        Isa::Portable => portable::dot(a, b),
        // SAFETY: Fma is only selected after runtime feature detection.
        #[cfg(target_arch = "x86_64")]
        Isa::Fma => unsafe { fma::dot(a, b) },
    }
}

/// Writes `out[(i - rows.start) * stride + (j - cols.start)] = <a_i, b_j>`.
fn dots_block(
    a: &[f64],
    b: &[f64],
    len: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    out: &mut [f64],
    stride: usize,
) {
    match isa() {
        Isa::Portable => portable::dots_block(a, b, len, rows, cols, out, stride),
        // SAFETY: as above.
        #[cfg(target_arch = "x86_64")]
        Isa::Fma => unsafe { fma::dots_block(a, b, len, rows, cols, out, stride) },
    }
}

/// `A · Aᵀ` for a row-major `rows x cols` matrix. Only tiles on or above the
/// diagonal are evaluated and the result is mirrored.
pub(crate) fn gram(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let starts: Vec<usize> = (0..rows).step_by(ROW_BLOCK).collect();
    let blocks: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + ROW_BLOCK).min(rows);
            // block rows x (start..rows)
            let width = rows - start;
            let mut buf = vec![0.0; (end - start) * width];
            let mut tile = start;
            while tile < rows {
                let tile_end = (tile + COL_TILE).min(rows);
                dots_block(
                    a,
                    a,
                    cols,
                    start..end,
                    tile..tile_end,
                    &mut buf[tile - start..],
                    width,
                );
                tile = tile_end;
            }
            buf
        })
        .collect();
    let mut g = vec![0.0; rows * rows];
    for (&start, buf) in starts.iter().zip(&blocks) {
        let end = (start + ROW_BLOCK).min(rows);
        let width = rows - start;
        for i in start..end {
            let row = &buf[(i - start) * width..(i - start + 1) * width];
            for j in i..rows {
                let v = row[j - start];
                g[i * rows + j] = v;
                g[j * rows + i] = v;
            }
        }
    }
    g
}

/// `A · B` for square `n x n` matrices with `B` symmetric, so that
/// `(A·B)_ij = <row_i(A), row_j(B)>`.
pub(crate) fn mul_symmetric(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n * ROW_BLOCK)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let start = blk * ROW_BLOCK;
            let end = start + chunk.len() / n;
            let mut tile = 0;
            while tile < n {
                let tile_end = (tile + COL_TILE).min(n);
                dots_block(a, b, n, start..end, tile..tile_end, &mut chunk[tile..], n);
                tile = tile_end;
            }
        });
    out
}

mod portable {
    use std::ops::Range;

    pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; 4];
        let ca = a.chunks_exact(4);
        let cb = b.chunks_exact(4);
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for l in 0..4 {
                acc[l] += x[l] * y[l];
            }
        }
        let mut tail = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            tail += x * y;
        }
        (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
    }

    pub(super) fn dots_block(
        a: &[f64],
        b: &[f64],
        len: usize,
        rows: Range<usize>,
        cols: Range<usize>,
        out: &mut [f64],
        stride: usize,
    ) {
        for i in rows.clone() {
            let ai = &a[i * len..(i + 1) * len];
            for j in cols.clone() {
                out[(i - rows.start) * stride + (j - cols.start)] =
                    dot(ai, &b[j * len..(j + 1) * len]);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod fma {
    use std::arch::x86_64::*;
    use std::ops::Range;

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn hsum(v: __m256d) -> f64 {
        let mut lanes = [0.0f64; 4];
        _mm256_storeu_pd(lanes.as_mut_ptr(), v);
        (lanes[0] + lanes[2]) + (lanes[1] + lanes[3])
    }

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn tail(a: &[f64], b: &[f64], from: usize) -> f64 {
        let mut t = 0.0f64;
        for k in from..a.len() {
            t = a[k].mul_add(b[k], t);
        }
        t
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let len = a.len();
        let body = len - len % 4;
        let mut acc = _mm256_setzero_pd();
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mut k = 0;
        while k < body {
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(k)), _mm256_loadu_pd(pb.add(k)), acc);
            k += 4;
        }
        hsum(acc) + tail(a, b, body)
    }

    /// Two rows of `a` against four rows of `b`; each of the eight entries
    /// keeps its own accumulator, so the arithmetic matches `dot`.
    #[inline]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn micro_2x4(a: [&[f64]; 2], b: [&[f64]; 4]) -> [[f64; 4]; 2] {
        let len = a[0].len();
        let body = len - len % 4;
        let mut acc = [[_mm256_setzero_pd(); 4]; 2];
        let mut k = 0;
        while k < body {
            let a0 = _mm256_loadu_pd(a[0].as_ptr().add(k));
            let a1 = _mm256_loadu_pd(a[1].as_ptr().add(k));
            for c in 0..4 {
                let bv = _mm256_loadu_pd(b[c].as_ptr().add(k));
                acc[0][c] = _mm256_fmadd_pd(a0, bv, acc[0][c]);
                acc[1][c] = _mm256_fmadd_pd(a1, bv, acc[1][c]);
            }
            k += 4;
        }
        let mut out = [[0.0; 4]; 2];
        for r in 0..2 {
            for c in 0..4 {
                out[r][c] = hsum(acc[r][c]) + tail(a[r], b[c], body);
            }
        }
        out
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn dots_block(
        a: &[f64],
        b: &[f64],
        len: usize,
        rows: Range<usize>,
        cols: Range<usize>,
        out: &mut [f64],
        stride: usize,
    ) {
        fn row(m: &[f64], len: usize, i: usize) -> &[f64] {
            &m[i * len..(i + 1) * len]
        }
        let mut i = rows.start;
        while i < rows.end {
            let oi = i - rows.start;
            if i + 1 < rows.end {
                let ar = [row(a, len, i), row(a, len, i + 1)];
                let mut j = cols.start;
                while j + 4 <= cols.end {
                    let br = [row(b, len, j), row(b, len, j + 1), row(b, len, j + 2), row(b, len, j + 3)];
                    let v = micro_2x4(ar, br);
                    for r in 0..2 {
                        for c in 0..4 {
                            out[(oi + r) * stride + (j - cols.start) + c] = v[r][c];
                        }
                    }
                    j += 4;
                }
                for j in j..cols.end {
                    for r in 0..2 {
                        out[(oi + r) * stride + (j - cols.start)] = dot(ar[r], row(b, len, j));
                    }
                }
                i += 2;
            } else {
                let ai = row(a, len, i);
                for j in cols.clone() {
                    out[oi * stride + (j - cols.start)] = dot(ai, row(b, len, j));
                }
                i += 1;
            }
        }
    }
}
