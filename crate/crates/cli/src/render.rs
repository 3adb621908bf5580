use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use spa_core::{Map2D, Result, SpaError};

use crate::args::ColormapArg;

/// Piecewise-linear jet ramp on an 8-bit level.
fn jet(level: u8) -> [u8; 3] {
    let t = level as f64 / 255.0;
    let ch = |center: f64| ((1.5 - (4.0 * t - center).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Min-max normalizes, optionally upsamples, and writes an 8-bit PNG.
pub fn write_png(map: &Map2D, scale: usize, colormap: ColormapArg, path: &Path) -> Result<()> {
    let norm = map.minmax_normalize();
    let sized = if scale > 1 {
        norm.resize_bilinear(norm.height() * scale, norm.width() * scale)?
            .minmax_normalize()
    } else {
        norm
    };
    let levels = sized.quantize_u8()?.values;
    let (color, pixels) = match colormap {
        ColormapArg::Gray => (png::ColorType::Grayscale, levels),
        ColormapArg::Jet => (
            png::ColorType::Rgb,
            levels.iter().flat_map(|&l| jet(l)).collect(),
        ),
    };
    let io = |source| SpaError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), sized.width() as u32, sized.height() as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| SpaError::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e),
    };
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_endpoints() {
        assert_eq!(jet(0), [0, 0, 128]);
        assert_eq!(jet(255), [128, 0, 0]);
        let mid = jet(128);
        assert!(mid[1] == 255);
    }
}
