//! Separable bicubic resampling with the a = −0.5 kernel, half-pixel
//! center alignment, edge clamping, and kernel widening on downscale
//! (antialiasing) — the convention under which published super-resolution
//! numbers are comparable.

use super::ImageRGB;

/// Cubic convolution kernel, a = −0.5.
fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index contributions along one axis: clamped source indices
/// and weights normalized to sum 1.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = out_len as f64 / in_len as f64;
    // widen the kernel by 1/scale when shrinking
    let kscale = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / kscale;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).ceil() as isize;
            let hi = (center + support).floor() as isize;
            let mut sum = 0.0;
            let weights: Vec<f64> = (lo..=hi)
                .map(|j| {
                    let w = cubic((center - j as f64) * kscale);
                    sum += w;
                    w
                })
                .collect();
            // fold out-of-range taps onto the clamped edge pixels;
            // lo <= center < in_len and hi >= center >= 0 keep the folded
            // range non-empty
            let start = lo.max(0) as usize;
            let end = (hi.min(in_len as isize - 1)) as usize;
            let mut folded = vec![0.0; end - start + 1];
            for (idx, &w) in weights.iter().enumerate() {
                let src = (lo + idx as isize).clamp(0, in_len as isize - 1) as usize;
                folded[src - start] += w / sum;
            }
            (start, folded)
        })
        .collect()
}

/// Resamples a single plane of f64 values to `out_len` along 1-D rows.
fn resample_rows(data: &[f64], h: usize, w: usize, taps: &[(usize, Vec<f64>)]) -> Vec<f64> {
    let ow = taps.len();
    let mut out = vec![0.0; h * ow];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for (o, (start, weights)) in taps.iter().enumerate() {
            let mut acc = 0.0;
            for (i, &wt) in weights.iter().enumerate() {
                acc += wt * row[start + i];
            }
            out[y * ow + o] = acc;
        }
    }
    out
}

fn transpose(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

/// Full separable resize of one plane (f64 in, f64 out).
pub fn bicubic_resize_plane(
    data: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert!(out_h >= 1 && out_w >= 1);
    let taps_x = axis_taps(w, out_w);
    let horiz = resample_rows(data, h, w, &taps_x);
    let t = transpose(&horiz, h, out_w);
    let taps_y = axis_taps(h, out_h);
    let vert = resample_rows(&t, out_w, h, &taps_y);
    transpose(&vert, out_w, out_h)
}

/// Resizes an RGB image plane by plane.
pub fn bicubic_resize(img: &ImageRGB, out_h: usize, out_w: usize) -> ImageRGB {
    let mut out = ImageRGB::new(out_h, out_w);
    for (p, plane) in img.planes.iter().enumerate() {
        let wide: Vec<f64> = plane.iter().map(|&v| v as f64).collect();
        let resized = bicubic_resize_plane(&wide, img.h, img.w, out_h, out_w);
        out.planes[p] = resized.into_iter().map(|v| v as f32).collect();
    }
    out
}
