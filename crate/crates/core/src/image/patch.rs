//! Aligned HR/LR patch sampling with optional flip/rotation augmentation.

use super::{ImageRGB, PairedSample};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

fn crop(img: &ImageRGB, y0: usize, x0: usize, size: usize) -> ImageRGB {
    let mut out = ImageRGB::new(size, size);
    for p in 0..3 {
        for y in 0..size {
            for x in 0..size {
                out.set(p, y, x, img.at(p, y0 + y, x0 + x));
            }
        }
    }
    out
}

fn hflip(img: &ImageRGB) -> ImageRGB {
    let mut out = ImageRGB::new(img.h, img.w);
    for p in 0..3 {
        for y in 0..img.h {
            for x in 0..img.w {
                out.set(p, y, x, img.at(p, y, img.w - 1 - x));
            }
        }
    }
    out
}

fn rot90(img: &ImageRGB) -> ImageRGB {
    let mut out = ImageRGB::new(img.w, img.h);
    for p in 0..3 {
        for y in 0..img.h {
            for x in 0..img.w {
                out.set(p, x, img.h - 1 - y, img.at(p, y, x));
            }
        }
    }
    out
}

/// Crops an aligned (HR, LR) square pair; the LR patch is `hr_patch / 4`.
/// With `augment`, a horizontal flip and a 90° rotation are each applied
/// with probability ½, identically to both members.
pub fn sample_patch(
    pair: &PairedSample,
    hr_patch: usize,
    rng: &mut Pcg32,
    augment: bool,
) -> Result<PairedSample> {
    if hr_patch % 4 != 0 {
        return Err(Error::Data(format!(
            "HR patch size {hr_patch} must divide by 4"
        )));
    }
    if hr_patch > pair.hr.h || hr_patch > pair.hr.w {
        return Err(Error::Data(format!(
            "patch {hr_patch} larger than HR image {}x{}",
            pair.hr.h, pair.hr.w
        )));
    }
    let lr_patch = hr_patch / 4;
    let ly = rng.below(pair.lr.h - lr_patch + 1);
    let lx = rng.below(pair.lr.w - lr_patch + 1);
    let mut hr = crop(&pair.hr, 4 * ly, 4 * lx, hr_patch);
    let mut lr = crop(&pair.lr, ly, lx, lr_patch);
    if augment {
        if rng.coin() {
            hr = hflip(&hr);
            lr = hflip(&lr);
        }
        if rng.coin() {
            hr = rot90(&hr);
            lr = rot90(&lr);
        }
    }
    Ok(PairedSample { hr, lr })
}
