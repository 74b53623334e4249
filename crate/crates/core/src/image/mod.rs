//! Dataset ingestion, bicubic degradation, patch sampling, and synthetic
//! desk-scale data generators. The pipeline is float throughout; 8-bit
//! quantization happens only at PNG boundaries.

mod bicubic;
mod cifar;
mod patch;
mod png_io;
mod synth;

pub use bicubic::{bicubic_resize, bicubic_resize_plane};
pub use cifar::{load_cifar100, CifarSplit};
pub use patch::sample_patch;
pub use png_io::{load_png, save_png};
pub use synth::{synth_classification, synth_sr};

use crate::error::{Error, Result};
use crate::metrics::ImagePlane;
use crate::tensor::{Shape, Tensor};

/// Decoded RGB image: three planes of f32 samples in [0, 1].
#[derive(Debug, Clone)]
pub struct ImageRGB {
    pub h: usize,
    pub w: usize,
    pub planes: [Vec<f32>; 3],
}

impl ImageRGB {
    pub fn new(h: usize, w: usize) -> ImageRGB {
        ImageRGB {
            h,
            w,
            planes: [vec![0.0; h * w], vec![0.0; h * w], vec![0.0; h * w]],
        }
    }

    pub fn from_planes(h: usize, w: usize, planes: [Vec<f32>; 3]) -> Result<ImageRGB> {
        for p in &planes {
            if p.len() != h * w {
                return Err(Error::InvalidShape(format!(
                    "plane length {} != {h}x{w}",
                    p.len()
                )));
            }
        }
        Ok(ImageRGB { h, w, planes })
    }

    #[inline]
    pub fn at(&self, plane: usize, y: usize, x: usize) -> f32 {
        self.planes[plane][y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, plane: usize, y: usize, x: usize, v: f32) {
        self.planes[plane][y * self.w + x] = v;
    }

    /// N=1 model input tensor in N,C,H,W order.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        let shape = Shape::new(1, 3, self.h, self.w)?;
        let mut data = Vec::with_capacity(shape.count());
        for p in &self.planes {
            data.extend_from_slice(p);
        }
        Tensor::from_vec(shape, data)
    }

    /// Reads sample `n` of an N,3,H,W tensor back into image form,
    /// clamped to [0, 1].
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<ImageRGB> {
        let s = t.shape();
        if s.c != 3 {
            return Err(Error::ChannelMismatch { expected: 3, got: s.c });
        }
        let mut img = ImageRGB::new(s.h, s.w);
        for c in 0..3 {
            for y in 0..s.h {
                for x in 0..s.w {
                    img.set(c, y, x, t.at(n, c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Ok(img)
    }

    /// Luma plane on the [0,255] scale (BT.601 studio swing).
    pub fn to_y_plane(&self) -> ImagePlane {
        let to_255 = |p: &Vec<f32>| ImagePlane {
            h: self.h,
            w: self.w,
            data: p.iter().map(|&v| v as f64 * 255.0).collect(),
        };
        let r = to_255(&self.planes[0]);
        let g = to_255(&self.planes[1]);
        let b = to_255(&self.planes[2]);
        crate::metrics::rgb_to_y(&r, &g, &b).expect("planes share dimensions")
    }
}

/// Aligned high/low-resolution pair; HR dimensions are 4× the LR ones.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub hr: ImageRGB,
    pub lr: ImageRGB,
}

impl PairedSample {
    /// Degrades an HR image by bicubic ÷4 (dimensions must divide by 4).
    pub fn from_hr(hr: ImageRGB) -> Result<PairedSample> {
        if hr.h % 4 != 0 || hr.w % 4 != 0 {
            return Err(Error::Data(format!(
                "HR dimensions {}x{} not divisible by 4",
                hr.h, hr.w
            )));
        }
        let lr = bicubic_resize(&hr, hr.h / 4, hr.w / 4);
        Ok(PairedSample { hr, lr })
    }
}

/// One classification sample: an N=1 image tensor plus labels.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub image: Tensor<f32>,
    pub fine: usize,
    pub coarse: Option<usize>,
}
