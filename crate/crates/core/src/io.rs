//! Reading and writing PNG and PNM (PGM/PPM) images at 8 or 16 bits.
//!
//! Loaded samples are scaled to `[0, 1]` (8-bit by 255, 16-bit by 65535);
//! saving quantizes with round-half-up after clamping. PNG goes through the
//! `image` crate; the PNM formats are parsed directly (binary P5/P6).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ColorImage, Image};
use crate::Real;

/// Output sample depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// What a file turned out to contain.
pub enum LoadedImage<T> {
    Gray(Image<T>),
    Rgb(ColorImage<T>),
}

impl<T: Real> LoadedImage<T> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            LoadedImage::Gray(img) => img.dims(),
            LoadedImage::Rgb(img) => (img.width(), img.height()),
        }
    }
}

fn scale8<T: Real>(v: u8) -> T {
    T::from_u8(v).unwrap() / T::from_f64(255.0).unwrap()
}

fn scale16<T: Real>(v: u16) -> T {
    T::from_u16(v).unwrap() / T::from_f64(65535.0).unwrap()
}

/// Round-half-up quantization of a clamped intensity.
fn quantize<T: Real>(v: T, max: f64) -> u16 {
    let clamped = v.max(T::zero()).min(T::one()).to_f64().unwrap();
    ((clamped * max + 0.5).floor() as u16).min(max as u16)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Loads a PNG, PGM or PPM file, reporting whether it carried color.
pub fn load_image<T: Real>(path: &Path) -> Result<LoadedImage<T>> {
    match extension(path).as_str() {
        "png" => load_png(path),
        "pgm" | "ppm" | "pnm" => parse_pnm(&fs::read(path)?),
        other => Err(Error::Format(format!(
            "unsupported image extension {:?} (expected png, pgm or ppm)",
            other
        ))),
    }
}

fn load_png<T: Real>(path: &Path) -> Result<LoadedImage<T>> {
    use image::DynamicImage;
    let decoded = image::ImageReader::open(path)?.decode()?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray_from = |data: Vec<T>| -> Result<LoadedImage<T>> {
        Ok(LoadedImage::Gray(Image::new(w, h, data)?))
    };
    match decoded {
        DynamicImage::ImageLuma8(buf) => gray_from(buf.pixels().map(|p| scale8(p.0[0])).collect()),
        DynamicImage::ImageLumaA8(buf) => gray_from(buf.pixels().map(|p| scale8(p.0[0])).collect()),
        DynamicImage::ImageLuma16(buf) => gray_from(buf.pixels().map(|p| scale16(p.0[0])).collect()),
        DynamicImage::ImageLumaA16(buf) => gray_from(buf.pixels().map(|p| scale16(p.0[0])).collect()),
        DynamicImage::ImageRgb8(buf) => {
            rgb_planes(w, h, buf.pixels().map(|p| [scale8(p.0[0]), scale8(p.0[1]), scale8(p.0[2])]))
        }
        DynamicImage::ImageRgba8(buf) => {
            rgb_planes(w, h, buf.pixels().map(|p| [scale8(p.0[0]), scale8(p.0[1]), scale8(p.0[2])]))
        }
        DynamicImage::ImageRgb16(buf) => rgb_planes(
            w,
            h,
            buf.pixels().map(|p| [scale16(p.0[0]), scale16(p.0[1]), scale16(p.0[2])]),
        ),
        DynamicImage::ImageRgba16(buf) => rgb_planes(
            w,
            h,
            buf.pixels().map(|p| [scale16(p.0[0]), scale16(p.0[1]), scale16(p.0[2])]),
        ),
        other => {
            let buf = other.to_rgb16();
            rgb_planes(
                w,
                h,
                buf.pixels().map(|p| [scale16(p.0[0]), scale16(p.0[1]), scale16(p.0[2])]),
            )
        }
    }
}

fn rgb_planes<T: Real>(
    w: usize,
    h: usize,
    pixels: impl Iterator<Item = [T; 3]>,
) -> Result<LoadedImage<T>> {
    let mut r = Vec::with_capacity(w * h);
    let mut g = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for p in pixels {
        r.push(p[0]);
        g.push(p[1]);
        b.push(p[2]);
    }
    Ok(LoadedImage::Rgb(ColorImage::new(
        Image::new(w, h, r)?,
        Image::new(w, h, g)?,
        Image::new(w, h, b)?,
    )?))
}

/// Pulls the next ASCII integer out of a PNM header, skipping whitespace and
/// `#` comments.
fn next_pnm_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("pnm header ended early".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad integer in pnm header".into()))
}

fn parse_pnm<T: Real>(bytes: &[u8]) -> Result<LoadedImage<T>> {
    if bytes.len() < 2 {
        return Err(Error::Format("pnm file too short".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::Format("expected binary pnm magic P5 or P6".into())),
    };
    let mut pos = 2;
    let width = next_pnm_token(bytes, &mut pos)?;
    let height = next_pnm_token(bytes, &mut pos)?;
    let maxval = next_pnm_token(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(Error::Format("pnm dimensions must be positive".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("pnm maxval {} out of range", maxval)));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing raster separator".into()));
    }
    pos += 1;
    let wide = maxval > 255;
    let samples = width * height * channels;
    let expected = samples * if wide { 2 } else { 1 };
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::Format(format!(
            "pnm raster has {} bytes, expected {}",
            raster.len(),
            expected
        )));
    }
    let max = T::from_usize(maxval).unwrap();
    let sample = |i: usize| -> T {
        if wide {
            let v = u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]);
            T::from_u16(v).unwrap() / max
        } else {
            T::from_u8(raster[i]).unwrap() / max
        }
    };
    if channels == 1 {
        let data: Vec<T> = (0..samples).map(sample).collect();
        Ok(LoadedImage::Gray(Image::new(width, height, data)?))
    } else {
        rgb_planes(
            width,
            height,
            (0..width * height).map(|i| [sample(3 * i), sample(3 * i + 1), sample(3 * i + 2)]),
        )
    }
}

fn pnm_header(magic: &str, w: usize, h: usize, maxval: usize) -> Vec<u8> {
    format!("{}\n{} {}\n{}\n", magic, w, h, maxval).into_bytes()
}

fn push_sample(out: &mut Vec<u8>, q: u16, wide: bool) {
    if wide {
        out.extend_from_slice(&q.to_be_bytes());
    } else {
        out.push(q as u8);
    }
}

/// Writes a grayscale image. PNG and PGM keep one channel; PPM replicates it.
pub fn save_gray<T: Real>(img: &Image<T>, path: &Path, depth: BitDepth) -> Result<()> {
    let (w, h) = img.dims();
    match extension(path).as_str() {
        "png" => match depth {
            BitDepth::Eight => {
                let buf: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
                let buf = image::GrayImage::from_raw(w as u32, h as u32, buf)
                    .ok_or_else(|| Error::Format("buffer size mismatch".into()))?;
                buf.save(path)?;
                Ok(())
            }
            BitDepth::Sixteen => {
                let buf: Vec<u16> = img.data().iter().map(|&v| quantize(v, 65535.0)).collect();
                let buf =
                    image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, buf)
                        .ok_or_else(|| Error::Format("buffer size mismatch".into()))?;
                buf.save(path)?;
                Ok(())
            }
        },
        "pgm" => {
            let (maxval, wide) = match depth {
                BitDepth::Eight => (255usize, false),
                BitDepth::Sixteen => (65535usize, true),
            };
            let mut out = pnm_header("P5", w, h, maxval);
            for &v in img.data() {
                push_sample(&mut out, quantize(v, maxval as f64), wide);
            }
            fs::write(path, out)?;
            Ok(())
        }
        "ppm" => {
            let gray = ColorImage::new(img.clone(), img.clone(), img.clone())?;
            save_rgb(&gray, path, depth)
        }
        other => Err(Error::Format(format!(
            "unsupported output extension {:?} (expected png, pgm or ppm)",
            other
        ))),
    }
}

/// Writes a color image as PNG or PPM.
pub fn save_rgb<T: Real>(img: &ColorImage<T>, path: &Path, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    let interleave = |max: f64| -> Vec<u16> {
        let mut out = Vec::with_capacity(3 * w * h);
        for i in 0..w * h {
            out.push(quantize(img.r().data()[i], max));
            out.push(quantize(img.g().data()[i], max));
            out.push(quantize(img.b().data()[i], max));
        }
        out
    };
    match extension(path).as_str() {
        "png" => match depth {
            BitDepth::Eight => {
                let buf: Vec<u8> = interleave(255.0).into_iter().map(|v| v as u8).collect();
                let buf = image::RgbImage::from_raw(w as u32, h as u32, buf)
                    .ok_or_else(|| Error::Format("buffer size mismatch".into()))?;
                buf.save(path)?;
                Ok(())
            }
            BitDepth::Sixteen => {
                let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_raw(
                    w as u32,
                    h as u32,
                    interleave(65535.0),
                )
                .ok_or_else(|| Error::Format("buffer size mismatch".into()))?;
                buf.save(path)?;
                Ok(())
            }
        },
        "ppm" => {
            let (maxval, wide) = match depth {
                BitDepth::Eight => (255usize, false),
                BitDepth::Sixteen => (65535usize, true),
            };
            let mut out = pnm_header("P6", w, h, maxval);
            for q in interleave(maxval as f64) {
                push_sample(&mut out, q, wide);
            }
            fs::write(path, out)?;
            Ok(())
        }
        other => Err(Error::Format(format!(
            "unsupported color output extension {:?} (expected png or ppm)",
            other
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn ramp(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |x, y| (y * w + x) as f64 / (w * h - 1) as f64)
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.0f64, 255.0), 0);
        assert_eq!(quantize(1.0f64, 255.0), 255);
        assert_eq!(quantize(0.5f64 / 255.0, 255.0), 1); // exactly half rounds up
        assert_eq!(quantize(1.2f64, 255.0), 255);
        assert_eq!(quantize(-0.3f64, 255.0), 0);
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let dir = tempdir().unwrap();
        let img = ramp(9, 5);
        for (depth, tol) in [(BitDepth::Eight, 1.0 / 255.0), (BitDepth::Sixteen, 1.0 / 65535.0)] {
            let path = dir.path().join("t.pgm");
            save_gray(&img, &path, depth).unwrap();
            match load_image::<f64>(&path).unwrap() {
                LoadedImage::Gray(back) => {
                    assert_eq!(back.dims(), img.dims());
                    assert!(back.max_abs_diff(&img).unwrap() <= 0.5 * tol + 1e-12);
                }
                _ => panic!("pgm should load as gray"),
            }
        }
    }

    #[test]
    fn ppm_color_round_trip() {
        let dir = tempdir().unwrap();
        let c = ColorImage::new(ramp(6, 4), ramp(6, 4).map(|v| 1.0 - v), ramp(6, 4)).unwrap();
        let path = dir.path().join("t.ppm");
        save_rgb(&c, &path, BitDepth::Sixteen).unwrap();
        match load_image::<f64>(&path).unwrap() {
            LoadedImage::Rgb(back) => {
                assert!(back.r().max_abs_diff(c.r()).unwrap() < 1e-4);
                assert!(back.g().max_abs_diff(c.g()).unwrap() < 1e-4);
            }
            _ => panic!("ppm should load as color"),
        }
    }

    #[test]
    fn png_round_trip_gray_and_color() {
        let dir = tempdir().unwrap();
        let img = ramp(8, 8);
        let p8 = dir.path().join("g8.png");
        save_gray(&img, &p8, BitDepth::Eight).unwrap();
        match load_image::<f64>(&p8).unwrap() {
            LoadedImage::Gray(back) => {
                assert!(back.max_abs_diff(&img).unwrap() <= 0.5 / 255.0 + 1e-12)
            }
            _ => panic!("expected gray png"),
        }

        let p16 = dir.path().join("g16.png");
        save_gray(&img, &p16, BitDepth::Sixteen).unwrap();
        match load_image::<f64>(&p16).unwrap() {
            LoadedImage::Gray(back) => {
                assert!(back.max_abs_diff(&img).unwrap() <= 0.5 / 65535.0 + 1e-12)
            }
            _ => panic!("expected gray png"),
        }

        let c = ColorImage::new(ramp(8, 8), ramp(8, 8).map(|v| v * 0.5), ramp(8, 8)).unwrap();
        let pc = dir.path().join("c.png");
        save_rgb(&c, &pc, BitDepth::Eight).unwrap();
        match load_image::<f64>(&pc).unwrap() {
            LoadedImage::Rgb(back) => {
                assert!(back.g().max_abs_diff(c.g()).unwrap() <= 0.5 / 255.0 + 1e-12)
            }
            _ => panic!("expected color png"),
        }
    }

    #[test]
    fn pnm_header_comments_are_skipped() {
        let mut bytes = b"P5\n# a comment\n3 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 10, 20, 30]);
        match parse_pnm::<f64>(&bytes).unwrap() {
            LoadedImage::Gray(img) => {
                assert_eq!(img.dims(), (3, 2));
                assert!((img.get(1, 0) - 128.0 / 255.0).abs() < 1e-12);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn malformed_pnm_is_rejected() {
        assert!(parse_pnm::<f64>(b"P4\n1 1\n255\n\x00").is_err());
        assert!(parse_pnm::<f64>(b"P5\n2 2\n255\n\x00\x00").is_err()); // short raster
        assert!(parse_pnm::<f64>(b"P5\n2 2\n0\n\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let dir = tempdir().unwrap();
        let img = ramp(2, 2);
        assert!(save_gray(&img, &dir.path().join("x.bmp"), BitDepth::Eight).is_err());
        assert!(load_image::<f64>(&dir.path().join("x.tif")).is_err());
    }
}
