//! 8-bit RGB and grayscale PNG load/save. Grayscale promotes to three
//! identical planes; the RGB round trip is bit-exact.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::ImageRGB;
use crate::error::{Error, Result};

pub fn load_png(path: &Path) -> Result<ImageRGB> {
    let decoder = png::Decoder::new(File::open(path)?);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("unsupported bit depth {:?}", info.bit_depth),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut img = ImageRGB::new(h, w);
    match info.color_type {
        png::ColorType::Rgb => {
            for (i, px) in buf[..info.buffer_size()].chunks_exact(3).enumerate() {
                img.planes[0][i] = px[0] as f32 / 255.0;
                img.planes[1][i] = px[1] as f32 / 255.0;
                img.planes[2][i] = px[2] as f32 / 255.0;
            }
        }
        png::ColorType::Grayscale => {
            for (i, &v) in buf[..info.buffer_size()].iter().enumerate() {
                let f = v as f32 / 255.0;
                img.planes[0][i] = f;
                img.planes[1][i] = f;
                img.planes[2][i] = f;
            }
        }
        other => {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("unsupported color type {other:?} (need RGB or grayscale)"),
            });
        }
    }
    Ok(img)
}

pub fn save_png(path: &Path, img: &ImageRGB) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.w as u32, img.h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    let mut data = Vec::with_capacity(img.h * img.w * 3);
    for i in 0..img.h * img.w {
        for plane in &img.planes {
            data.push((plane[i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    writer.write_image_data(&data)?;
    Ok(())
}
