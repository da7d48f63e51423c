//! PPM previews of intensity slices and noise-corrupted copies of one image.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use streamnet::io::write_atomic;
use streamnet::slicing::{corrupt_indexed, slice_image};
use streamnet::{make_slice_spec, NoiseMode, NoiseSpec, Shape, Tensor};

pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = f64::from(px[c]) / 255.0;
        }
    }
    Ok(Tensor::from_vec(Shape::new(1, 3, h, w), data)?)
}

pub fn to_rgb(t: &Tensor) -> RgbImage {
    let s = t.shape();
    let d = t.data();
    let channel = |c: usize, x: u32, y: u32| {
        let c = c.min(s.c - 1);
        (d[(c * s.h + y as usize) * s.w + x as usize].clamp(0.0, 1.0) * 255.0).round() as u8
    };
    RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| image::Rgb([channel(0, x, y), channel(1, x, y), channel(2, x, y)]))
}

pub fn write_ppm(path: &Path, t: &Tensor) -> Result<()> {
    let img = to_rgb(t);
    let mut buf = Cursor::new(Vec::new());
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .with_context(|| format!("cannot encode {}", path.display()))?;
    write_atomic(path, buf.get_ref())?;
    Ok(())
}

/// Writes `slice_XX.ppm` per slice, `reconstruction.ppm` and `noise_RR.ppm` per ratio.
pub fn slice_preview(image: &Path, n_slices: usize, ratios: &[f64], seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let img = read_image(image)?;
    let spec = make_slice_spec(n_slices)?;
    let mut written = Vec::new();
    let slices = slice_image(&img, &spec)?;
    let mut sum = Tensor::zeros(img.shape());
    for (i, s) in slices.iter().enumerate() {
        sum.data_mut().iter_mut().zip(s.data()).for_each(|(a, b)| *a += b);
        let p = out.join(format!("slice_{i:02}.ppm"));
        write_ppm(&p, s)?;
        written.push(p);
    }
    let p = out.join("reconstruction.ppm");
    write_ppm(&p, &sum)?;
    written.push(p);
    for &r in ratios {
        let noisy = corrupt_indexed(&img, &NoiseSpec::new(r, seed)?, NoiseMode::Location, 0);
        let p = out.join(format!("noise_{:02}.ppm", (r * 10.0).round() as u32));
        write_ppm(&p, &noisy)?;
        written.push(p);
    }
    Ok(written)
}
