//! Image-quality and classification metrics: PSNR and SSIM on a single
//! plane (the Y channel for super-resolution, BT.601 studio swing), and
//! top-k accuracy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Single image plane with values documented on the [0, 255] scale.
#[derive(Debug, Clone)]
pub struct ImagePlane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<ImagePlane> {
        if data.len() != h * w {
            return Err(Error::InvalidShape(format!(
                "plane data length {} != {h}x{w}",
                data.len()
            )));
        }
        Ok(ImagePlane { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: f64) -> ImagePlane {
        ImagePlane {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Drops a border of `b` pixels on every side (the standard benchmark
    /// crop of `scale` pixels before scoring).
    pub fn crop_border(&self, b: usize) -> Result<ImagePlane> {
        if 2 * b >= self.h || 2 * b >= self.w {
            return Err(Error::InvalidShape(format!(
                "border {b} too large for {}x{}",
                self.h, self.w
            )));
        }
        let (h, w) = (self.h - 2 * b, self.w - 2 * b);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(y + b, x + b));
            }
        }
        Ok(ImagePlane { h, w, data })
    }
}

fn check_dims(a: &ImagePlane, b: &ImagePlane) -> Result<()> {
    if a.h != b.h || a.w != b.w {
        return Err(Error::ShapeMismatch(format!(
            "planes {}x{} vs {}x{}",
            a.h, a.w, b.h, b.w
        )));
    }
    Ok(())
}

/// 10·log10(peak² / MSE) in dB; +∞ when the planes are identical.
pub fn psnr(a: &ImagePlane, b: &ImagePlane, peak: f64) -> Result<f64> {
    check_dims(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Valid-region separable Gaussian filter: output is (h−10)×(w−10).
fn filter_valid(p: &ImagePlane, k: &[f64; SSIM_WINDOW]) -> ImagePlane {
    let oh = p.h - SSIM_WINDOW + 1;
    let ww = p.w;
    // horizontal pass
    let ow = p.w - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; p.h * ow];
    for y in 0..p.h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * p.data[y * ww + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    ImagePlane {
        h: oh,
        w: ow,
        data: out,
    }
}

/// Mean local structural similarity over an 11×11 Gaussian window
/// (σ = 1.5, K1 = 0.01, K2 = 0.03), computed on the valid region.
pub fn ssim(a: &ImagePlane, b: &ImagePlane, peak: f64) -> Result<f64> {
    check_dims(a, b)?;
    if a.h < SSIM_WINDOW || a.w < SSIM_WINDOW {
        return Err(Error::InvalidShape(format!(
            "image {}x{} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.h, a.w
        )));
    }
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let k = gaussian_kernel();

    let sq = |p: &ImagePlane| ImagePlane {
        h: p.h,
        w: p.w,
        data: p.data.iter().map(|&v| v * v).collect(),
    };
    let prod = ImagePlane {
        h: a.h,
        w: a.w,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect(),
    };

    let mu_a = filter_valid(a, &k);
    let mu_b = filter_valid(b, &k);
    let ex2 = filter_valid(&sq(a), &k);
    let ey2 = filter_valid(&sq(b), &k);
    let exy = filter_valid(&prod, &k);

    let mut acc = 0.0;
    for i in 0..mu_a.data.len() {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = ex2.data[i] - ma * ma;
        let vb = ey2.data[i] - mb * mb;
        let cov = exy.data[i] - ma * mb;
        let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        acc += s;
    }
    Ok(acc / mu_a.data.len() as f64)
}

/// Fraction of samples whose label is among the k largest logits; ties are
/// broken toward the lower index. Logits are N×K×1×1.
pub fn topk_accuracy(logits: &Tensor<f32>, labels: &[usize], k: usize) -> Result<f64> {
    let s = logits.shape();
    if !s.is_channel_vector() || labels.len() != s.n {
        return Err(Error::ShapeMismatch(format!(
            "logits {s} against {} labels",
            labels.len()
        )));
    }
    let classes = s.c;
    if k > classes {
        return Err(Error::InvalidShape(format!(
            "k = {k} exceeds {classes} classes"
        )));
    }
    let mut hits = 0usize;
    for (n, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let row = &logits.data()[n * classes..(n + 1) * classes];
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&i, &j| row[j].partial_cmp(&row[i]).unwrap().then(i.cmp(&j)));
        if order[..k].contains(&label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// BT.601 studio-swing luma from [0,255] RGB planes:
/// Y = (65.481 R + 128.553 G + 24.966 B) / 255 + 16.
pub fn rgb_to_y(r: &ImagePlane, g: &ImagePlane, b: &ImagePlane) -> Result<ImagePlane> {
    check_dims(r, g)?;
    check_dims(r, b)?;
    let data = r
        .data
        .iter()
        .zip(&g.data)
        .zip(&b.data)
        .map(|((&r, &g), &b)| (65.481 * r + 128.553 * g + 24.966 * b) / 255.0 + 16.0)
        .collect();
    ImagePlane::new(r.h, r.w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = ImagePlane::filled(8, 8, 100.0);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);

        let b = ImagePlane::filled(8, 8, 101.0);
        let db = psnr(&a, &b, 255.0).unwrap();
        assert!((db - 48.130803608679344).abs() < 1e-9, "{db}");

        let c = ImagePlane::filled(8, 8, 100.0 + 255.0);
        assert!(psnr(&a, &c, 255.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_rejects_dim_mismatch() {
        let a = ImagePlane::filled(4, 4, 0.0);
        let b = ImagePlane::filled(4, 5, 0.0);
        assert!(psnr(&a, &b, 255.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = crate::rng::Pcg32::new(1);
        let data: Vec<f64> = (0..256).map(|_| rng.uniform() * 255.0).collect();
        let a = ImagePlane::new(16, 16, data).unwrap();
        assert!((ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_black_vs_white_closed_form() {
        let a = ImagePlane::filled(16, 16, 0.0);
        let b = ImagePlane::filled(16, 16, 255.0);
        let c1 = 6.5025;
        let expect = c1 / (255.0 * 255.0 + c1);
        let got = ssim(&a, &b, 255.0).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!((got - 9.999e-5).abs() < 1e-7);
    }

    #[test]
    fn ssim_is_symmetric_and_needs_window() {
        let mut rng = crate::rng::Pcg32::new(2);
        let da: Vec<f64> = (0..400).map(|_| rng.uniform() * 255.0).collect();
        let db: Vec<f64> = (0..400).map(|_| rng.uniform() * 255.0).collect();
        let a = ImagePlane::new(20, 20, da).unwrap();
        let b = ImagePlane::new(20, 20, db).unwrap();
        let ab = ssim(&a, &b, 255.0).unwrap();
        let ba = ssim(&b, &a, 255.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));

        let tiny = ImagePlane::filled(8, 8, 0.0);
        assert!(ssim(&tiny, &tiny, 255.0).is_err());
    }

    #[test]
    fn topk_examples() {
        use crate::tensor::Shape;
        // perfect one-hot logits
        let logits = Tensor::from_vec(
            Shape::vector(2, 3),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(topk_accuracy(&logits, &[0, 2], 1).unwrap(), 1.0);

        // label always second-largest
        let logits = Tensor::from_vec(
            Shape::vector(2, 5),
            vec![
                9.0, 5.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 5.0, 9.0, 0.0,
            ],
        )
        .unwrap();
        assert_eq!(topk_accuracy(&logits, &[1, 2], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&logits, &[1, 2], 5).unwrap(), 1.0);

        // ties break toward the lower index
        let logits =
            Tensor::from_vec(Shape::vector(1, 3), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(topk_accuracy(&logits, &[0], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&logits, &[2], 1).unwrap(), 0.0);

        assert!(topk_accuracy(&logits, &[5], 1).is_err());
    }

    #[test]
    fn rgb_to_y_reference_points() {
        let one = |v: f64| ImagePlane::filled(2, 2, v);
        let white = rgb_to_y(&one(255.0), &one(255.0), &one(255.0)).unwrap();
        assert!((white.data[0] - 235.0).abs() < 1e-9);
        let black = rgb_to_y(&one(0.0), &one(0.0), &one(0.0)).unwrap();
        assert!((black.data[0] - 16.0).abs() < 1e-9);
        let green = rgb_to_y(&one(0.0), &one(255.0), &one(0.0)).unwrap();
        assert!((green.data[0] - 144.553).abs() < 1e-9);
    }

    #[test]
    fn crop_border_drops_frame() {
        let mut data = vec![0.0; 36];
        for (i, v) in data.iter_mut().enumerate() {
            *v = i as f64;
        }
        let p = ImagePlane::new(6, 6, data).unwrap();
        let c = p.crop_border(2).unwrap();
        assert_eq!((c.h, c.w), (2, 2));
        assert_eq!(c.data, vec![14.0, 15.0, 20.0, 21.0]);
        assert!(p.crop_border(3).is_err());
    }
}
