//! Image containers, color-space conversion, and boundary padding.
//!
//! Intensities are kept in the nominal range `[0, 1]`; the containers only
//! enforce finiteness so that intermediate results (residuals, chroma planes)
//! can live outside that range.

use crate::error::{Error, Result};
use crate::Real;

/// A real-valued 2-D pixel grid stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    /// Builds an image from row-major data, checking length and finiteness.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("image contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![T::zero(); width * height] }
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn check_same_dims(&self, other: &Self, context: &str) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::Dimension(format!(
                "{}: {}x{} vs {}x{}",
                context, self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_dims(other, "zip_map")?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self { width: self.width, height: self.height, data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product, used to apply per-pixel gain fields.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn clamped01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_dims(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn norm_l2_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn norm_l2(&self) -> T {
        self.norm_l2_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_dims(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn mean_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_dims(other, "mean_abs_diff")?;
        let sum: T = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        Ok(sum / T::from_usize(self.data.len()).unwrap())
    }

    /// Reflective (edge-not-repeated) extension to `target_w` x `target_h`,
    /// keeping the original content at the top-left corner.
    pub fn pad_symmetric(&self, target_w: usize, target_h: usize) -> Result<Self> {
        if target_w < self.width || target_h < self.height {
            return Err(Error::Argument(format!(
                "pad target {}x{} smaller than source {}x{}",
                target_w, target_h, self.width, self.height
            )));
        }
        if target_w == self.width && target_h == self.height {
            return Ok(self.clone());
        }
        let mut out = Vec::with_capacity(target_w * target_h);
        for y in 0..target_h {
            let sy = mirror_index(y as isize, self.height);
            for x in 0..target_w {
                let sx = mirror_index(x as isize, self.width);
                out.push(self.data[sy * self.width + sx]);
            }
        }
        Ok(Self { width: target_w, height: target_h, data: out })
    }

    /// Extracts the `w` x `h` rectangle anchored at the top-left corner.
    pub fn crop_top_left(&self, w: usize, h: usize) -> Result<Self> {
        if w > self.width || h > self.height {
            return Err(Error::Argument(format!(
                "crop {}x{} exceeds source {}x{}",
                w, h, self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = &self.data[y * self.width..y * self.width + w];
            out.extend_from_slice(row);
        }
        Ok(Self { width: w, height: h, data: out })
    }

    /// Extracts a centered `w` x `h` rectangle.
    pub fn crop_center(&self, w: usize, h: usize) -> Result<Self> {
        if w > self.width || h > self.height {
            return Err(Error::Argument(format!(
                "crop {}x{} exceeds source {}x{}",
                w, h, self.width, self.height
            )));
        }
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let start = (y0 + y) * self.width + x0;
            out.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Self { width: w, height: h, data: out })
    }
}

/// Whole-sample mirror of an arbitrary (possibly negative) index onto
/// `[0, n)`. For n = 3 the extension of `[a, b, c]` reads `... c b a b c b a b c ...`.
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Half-sample (edge-repeated) reflection onto `[0, n)`. For n = 3 the
/// extension of `[a, b, c]` reads `... b a a b c c b ...`. Filtering uses
/// this convention: a symmetric kernel then acts as a symmetric matrix, so
/// normalized blurs cannot amplify.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Three same-sized channel planes (R, G, B).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage<T> {
    r: Image<T>,
    g: Image<T>,
    b: Image<T>,
}

impl<T: Real> ColorImage<T> {
    pub fn new(r: Image<T>, g: Image<T>, b: Image<T>) -> Result<Self> {
        if !r.same_dims(&g) || !r.same_dims(&b) {
            return Err(Error::Dimension(format!(
                "color planes differ: r {}x{}, g {}x{}, b {}x{}",
                r.width(),
                r.height(),
                g.width(),
                g.height(),
                b.width(),
                b.height()
            )));
        }
        Ok(Self { r, g, b })
    }

    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }

    pub fn r(&self) -> &Image<T> {
        &self.r
    }

    pub fn g(&self) -> &Image<T> {
        &self.g
    }

    pub fn b(&self) -> &Image<T> {
        &self.b
    }

    pub fn into_planes(self) -> (Image<T>, Image<T>, Image<T>) {
        (self.r, self.g, self.b)
    }
}

/// ITU-R BT.601 full-range conversion. Y lands in `[0, 1]`, Cb and Cr in
/// `[-0.5, 0.5]`.
pub fn rgb_to_ycbcr<T: Real>(img: &ColorImage<T>) -> (Image<T>, Image<T>, Image<T>) {
    let kr = T::from_f64(0.299).unwrap();
    let kg = T::from_f64(0.587).unwrap();
    let kb = T::from_f64(0.114).unwrap();
    let cb_den = T::from_f64(1.772).unwrap(); // 2 (1 - kb)
    let cr_den = T::from_f64(1.402).unwrap(); // 2 (1 - kr)

    let n = img.width() * img.height();
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let (r, g, b) = (img.r.data()[i], img.g.data()[i], img.b.data()[i]);
        let luma = kr * r + kg * g + kb * b;
        y.push(luma);
        cb.push((b - luma) / cb_den);
        cr.push((r - luma) / cr_den);
    }
    let (w, h) = (img.width(), img.height());
    (
        Image { width: w, height: h, data: y },
        Image { width: w, height: h, data: cb },
        Image { width: w, height: h, data: cr },
    )
}

/// Inverse of [`rgb_to_ycbcr`]; output channels are clamped to `[0, 1]`.
pub fn ycbcr_to_rgb<T: Real>(y: &Image<T>, cb: &Image<T>, cr: &Image<T>) -> Result<ColorImage<T>> {
    if !y.same_dims(cb) || !y.same_dims(cr) {
        return Err(Error::Dimension(format!(
            "ycbcr planes differ: y {}x{}, cb {}x{}, cr {}x{}",
            y.width(),
            y.height(),
            cb.width(),
            cb.height(),
            cr.width(),
            cr.height()
        )));
    }
    let kr = T::from_f64(0.299).unwrap();
    let kg = T::from_f64(0.587).unwrap();
    let kb = T::from_f64(0.114).unwrap();
    let cb_den = T::from_f64(1.772).unwrap();
    let cr_den = T::from_f64(1.402).unwrap();

    let clamp01 = |v: T| v.max(T::zero()).min(T::one());
    let n = y.width() * y.height();
    let mut r = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let (luma, u, v) = (y.data()[i], cb.data()[i], cr.data()[i]);
        let red = luma + cr_den * v;
        let blue = luma + cb_den * u;
        let green = (luma - kr * red - kb * blue) / kg;
        r.push(clamp01(red));
        g.push(clamp01(green));
        b.push(clamp01(blue));
    }
    let (w, h) = (y.width(), y.height());
    ColorImage::new(
        Image { width: w, height: h, data: r },
        Image { width: w, height: h, data: g },
        Image { width: w, height: h, data: b },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: f64) -> Image<f64> {
        Image::constant(w, h, v)
    }

    #[test]
    fn new_rejects_wrong_length_and_non_finite() {
        assert!(Image::new(2, 2, vec![0.0f64; 3]).is_err());
        assert!(Image::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(Image::new(2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn gray_pixels_have_no_chroma() {
        let c = ColorImage::new(gray(4, 3, 0.5), gray(4, 3, 0.5), gray(4, 3, 0.5)).unwrap();
        let (y, cb, cr) = rgb_to_ycbcr(&c);
        for i in 0..12 {
            assert!((y.data()[i] - 0.5).abs() < 1e-12);
            assert!(cb.data()[i].abs() < 1e-12);
            assert!(cr.data()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn pure_red_matches_bt601_matrix() {
        let c = ColorImage::new(gray(1, 1, 1.0), gray(1, 1, 0.0), gray(1, 1, 0.0)).unwrap();
        let (y, cb, cr) = rgb_to_ycbcr(&c);
        assert!((y.data()[0] - 0.299).abs() < 1e-12);
        assert!((cb.data()[0] - (-0.299 / 1.772)).abs() < 1e-12);
        assert!((cr.data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn color_round_trip_is_identity() {
        let mut seed = 1234u64;
        let mut next = move || {
            // xorshift; plenty for test pixels
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let r = Image::from_fn(13, 7, |_, _| next());
        let g = Image::from_fn(13, 7, |_, _| next());
        let b = Image::from_fn(13, 7, |_, _| next());
        let c = ColorImage::new(r.clone(), g.clone(), b.clone()).unwrap();
        let (y, cb, cr) = rgb_to_ycbcr(&c);
        let back = ycbcr_to_rgb(&y, &cb, &cr).unwrap();
        assert!(back.r().max_abs_diff(&r).unwrap() < 1e-12);
        assert!(back.g().max_abs_diff(&g).unwrap() < 1e-12);
        assert!(back.b().max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn ycbcr_to_rgb_clamps_out_of_gamut() {
        let y = gray(2, 2, 1.0);
        let cb = gray(2, 2, 0.5);
        let cr = gray(2, 2, 0.5);
        let c = ycbcr_to_rgb(&y, &cb, &cr).unwrap();
        for i in 0..4 {
            for v in [c.r().data()[i], c.g().data()[i], c.b().data()[i]] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn ycbcr_gray_round_trip() {
        let c = ycbcr_to_rgb(&gray(2, 2, 0.5), &gray(2, 2, 0.0), &gray(2, 2, 0.0)).unwrap();
        for i in 0..4 {
            assert!((c.r().data()[i] - 0.5).abs() < 1e-12);
            assert!((c.g().data()[i] - 0.5).abs() < 1e-12);
            assert!((c.b().data()[i] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_planes_rejected() {
        assert!(ColorImage::new(gray(2, 2, 0.0), gray(2, 3, 0.0), gray(2, 2, 0.0)).is_err());
        assert!(ycbcr_to_rgb(&gray(2, 2, 0.0), &gray(3, 2, 0.0), &gray(2, 2, 0.0)).is_err());
    }

    #[test]
    fn pad_to_same_size_is_identity() {
        let img = Image::from_fn(4, 4, |x, y| (x * 4 + y) as f64);
        let padded = img.pad_symmetric(4, 4).unwrap();
        assert_eq!(img, padded);
    }

    #[test]
    fn pad_reflects_without_repeating_edge() {
        let img = Image::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let padded = img.pad_symmetric(5, 1).unwrap();
        assert_eq!(padded.data(), &[1.0, 2.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn pad_127_to_128_then_crop_is_identity() {
        let img = Image::from_fn(127, 127, |x, y| ((x * 31 + y * 17) % 11) as f64 / 11.0);
        let padded = img.pad_symmetric(128, 128).unwrap();
        assert_eq!(padded.dims(), (128, 128));
        let cropped = padded.crop_top_left(127, 127).unwrap();
        assert_eq!(img, cropped);
    }

    #[test]
    fn pad_smaller_than_source_is_error() {
        let img = Image::<f64>::zeros(4, 4);
        assert!(img.pad_symmetric(3, 4).is_err());
    }

    #[test]
    fn pad_far_beyond_double_width_wraps_mirror() {
        let img = Image::new(2, 1, vec![5.0, 7.0]).unwrap();
        // period 2: 5 7 5 7 5 ...
        let padded = img.pad_symmetric(5, 1).unwrap();
        assert_eq!(padded.data(), &[5.0, 7.0, 5.0, 7.0, 5.0]);
    }

    #[test]
    fn crop_center_takes_middle() {
        let img = Image::from_fn(4, 4, |x, y| (y * 4 + x) as f64);
        let c = img.crop_center(2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
    }
}
