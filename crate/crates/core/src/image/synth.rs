//! Synthetic desk-scale datasets: class-conditional colored patterns for
//! classification and procedural textures with bicubic ÷4 degradation for
//! super-resolution. Fully determined by the seed.

use super::{ImageRGB, LabeledSample, PairedSample};
use crate::rng::Pcg32;
use crate::tensor::{Shape, Tensor};

fn class_color(class: usize) -> [f32; 3] {
    // well-separated hues around the color wheel
    let hue = class as f32 * 0.618_034 % 1.0;
    let h6 = hue * 6.0;
    let f = h6 - h6.floor();
    let (r, g, b) = match h6 as usize % 6 {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        3 => (0.0, 1.0 - f, 1.0),
        4 => (f, 0.0, 1.0),
        _ => (1.0, 0.0, 1.0 - f),
    };
    [0.15 + 0.7 * r, 0.15 + 0.7 * g, 0.15 + 0.7 * b]
}

/// Class-conditional geometric patterns: each class owns a color and a
/// motif (stripes, checker, disc), jittered per sample. Separable by a
/// small CNN but not by a single pixel.
pub fn synth_classification(
    n: usize,
    classes: usize,
    size: usize,
    seed: u64,
) -> Vec<LabeledSample> {
    let mut rng = Pcg32::new(seed);
    let shape = Shape::new(1, 3, size, size).unwrap();
    (0..n)
        .map(|i| {
            let class = i % classes;
            let fg = class_color(class);
            let bg = class_color(class + classes);
            let motif = class % 4;
            let freq = 2 + (class / 4) % 3;
            let phase_y = rng.below(size);
            let phase_x = rng.below(size);
            let mut data = vec![0.0f32; shape.count()];
            for y in 0..size {
                for x in 0..size {
                    let yy = (y + phase_y) % size;
                    let xx = (x + phase_x) % size;
                    let on = match motif {
                        0 => (yy * freq / size) % 2 == 0,
                        1 => (xx * freq / size) % 2 == 0,
                        2 => ((yy * freq / size) + (xx * freq / size)) % 2 == 0,
                        _ => {
                            let dy = y as f32 - size as f32 / 2.0;
                            let dx = x as f32 - size as f32 / 2.0;
                            dy * dy + dx * dx < (size as f32 / 3.0).powi(2)
                        }
                    };
                    let base = if on { fg } else { bg };
                    for (p, &v) in base.iter().enumerate() {
                        let noise = (rng.uniform() as f32 - 0.5) * 0.08;
                        data[(p * size + y) * size + x] = (v + noise).clamp(0.0, 1.0);
                    }
                }
            }
            LabeledSample {
                image: Tensor::from_vec(shape, data).expect("sized by shape"),
                fine: class,
                coarse: None,
            }
        })
        .collect()
}

fn smooth_field(rng: &mut Pcg32, h: usize, w: usize) -> Vec<f32> {
    // coarse random grid upsampled bilinearly: a band-limited field
    let gh = (h / 8).max(2);
    let gw = (w / 8).max(2);
    let grid: Vec<f32> = (0..gh * gw).map(|_| rng.uniform() as f32).collect();
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let fy = y as f32 * (gh - 1) as f32 / (h - 1).max(1) as f32;
        let y0 = fy as usize;
        let y1 = (y0 + 1).min(gh - 1);
        let wy = fy - y0 as f32;
        for x in 0..w {
            let fx = x as f32 * (gw - 1) as f32 / (w - 1).max(1) as f32;
            let x0 = fx as usize;
            let x1 = (x0 + 1).min(gw - 1);
            let wx = fx - x0 as f32;
            out[y * w + x] = grid[y0 * gw + x0] * (1.0 - wy) * (1.0 - wx)
                + grid[y0 * gw + x1] * (1.0 - wy) * wx
                + grid[y1 * gw + x0] * wy * (1.0 - wx)
                + grid[y1 * gw + x1] * wy * wx;
        }
    }
    out
}

/// Procedural HR textures with LR produced by bicubic ÷4. The families are
/// hard-edged periodic patterns (square-wave stripes, checkerboards) whose
/// fundamentals survive the ÷4 decimation but whose sharp transitions do
/// not — the regime where a learned texture prior beats interpolation —
/// plus smooth low-pass fields for dynamic range.
pub fn synth_sr(n: usize, hr_size: usize, seed: u64) -> Vec<PairedSample> {
    assert!(hr_size % 4 == 0, "hr_size must divide by 4");
    let mut rng = Pcg32::new(seed);
    (0..n)
        .map(|i| {
            let mut hr = ImageRGB::new(hr_size, hr_size);
            match i % 3 {
                0 => {
                    // oriented square-wave stripes, period 10..=16 HR px:
                    // representable after decimation, edges are not
                    let angle = rng.uniform() * std::f64::consts::PI;
                    let (ca, sa) = (angle.cos() as f32, angle.sin() as f32);
                    let period = 10.0 + rng.below(7) as f32;
                    let phase = rng.uniform() as f32 * period;
                    let c1 = class_color(rng.below(16));
                    let c2 = class_color(rng.below(16) + 16);
                    for y in 0..hr_size {
                        for x in 0..hr_size {
                            let t = (x as f32 * ca + y as f32 * sa + phase) / period;
                            let on = (t - t.floor()) < 0.5;
                            let c = if on { c1 } else { c2 };
                            for (p, &v) in c.iter().enumerate() {
                                hr.set(p, y, x, v);
                            }
                        }
                    }
                }
                1 => {
                    // two-color checkerboard, cell size 6/8/12
                    let cell = [6usize, 8, 12][rng.below(3)];
                    let c1 = class_color(rng.below(16));
                    let c2 = class_color(rng.below(16) + 16);
                    for y in 0..hr_size {
                        for x in 0..hr_size {
                            let on = ((y / cell) + (x / cell)) % 2 == 0;
                            let c = if on { c1 } else { c2 };
                            for (p, &v) in c.iter().enumerate() {
                                hr.set(p, y, x, v);
                            }
                        }
                    }
                }
                _ => {
                    // random low-pass field, tinted per channel, with a few
                    // hard-edged discs so interpolation cannot saturate it
                    let base = smooth_field(&mut rng, hr_size, hr_size);
                    for p in 0..3 {
                        let tint = 0.5 + 0.5 * rng.uniform() as f32;
                        for (i, &v) in base.iter().enumerate() {
                            hr.planes[p][i] = (v * tint).clamp(0.0, 1.0);
                        }
                    }
                    for _ in 0..4 {
                        let cy = rng.below(hr_size) as f32;
                        let cx = rng.below(hr_size) as f32;
                        let radius = (hr_size / 10 + rng.below(hr_size / 8)) as f32;
                        let color = class_color(rng.below(32));
                        for y in 0..hr_size {
                            for x in 0..hr_size {
                                let (dy, dx) = (y as f32 - cy, x as f32 - cx);
                                if dy * dy + dx * dx < radius * radius {
                                    for (p, &v) in color.iter().enumerate() {
                                        hr.set(p, y, x, v);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            PairedSample::from_hr(hr).expect("hr_size divides by 4")
        })
        .collect()
}
