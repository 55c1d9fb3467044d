use std::io::Write;

use super::layer::Landmark;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default splat width, in feature cells.
pub const DEFAULT_SIGMA_CELLS: f64 = 1.0 / 3.0;

/// Sum of isotropic Gaussians centred on each landmark's cell centre in image
/// space, normalised so the peak is 1. Pixel `(y, x)` is sampled at its centre
/// `(y + ½, x + ½)`; `σ = sigma_cells · stride` pixels.
pub fn splat_heatmap(
    landmarks: &[Landmark],
    h_img: usize,
    w_img: usize,
    stride: usize,
    sigma_cells: f64,
) -> Result<Tensor<f64>> {
    if !(sigma_cells > 0.0) {
        return Err(Error::Contract(format!("sigma must be positive, got {sigma_cells}")));
    }
    let mut out = Tensor::zeros(&[h_img, w_img]);
    if landmarks.is_empty() {
        return Ok(out);
    }
    let sigma = sigma_cells * stride as f64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let centres: Vec<(f64, f64)> = landmarks
        .iter()
        .map(|l| ((l.row as f64 + 0.5) * stride as f64, (l.col as f64 + 0.5) * stride as f64))
        .collect();
    let data = out.data_mut();
    for y in 0..h_img {
        for x in 0..w_img {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            data[y * w_img + x] = centres
                .iter()
                .map(|&(cy, cx)| (-((py - cy).powi(2) + (px - cx).powi(2)) * inv).exp())
                .sum();
        }
    }
    let peak = data.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        data.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(out)
}

/// Binary (P5) 8-bit PGM of a `[H, W]` map with values in `[0, 1]`.
pub fn write_pgm(w: &mut impl Write, map: &Tensor<f64>) -> Result<()> {
    let (h, wd) = match map.shape() {
        &[h, w] => (h, w),
        s => return Err(Error::Dimension(format!("PGM needs a [H,W] map, got {s:?}"))),
    };
    write!(w, "P5\n{wd} {h}\n255\n")?;
    let bytes: Vec<u8> = map
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}
