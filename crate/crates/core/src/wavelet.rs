//! Orthonormal multilevel 2-D Haar transform and its exact inverse.
//!
//! The filter pair is normalized by 1/sqrt(2), so analysis and synthesis are
//! transposes of each other and coefficient energy equals pixel energy. This
//! is what keeps the solver's step-size bound valid with a unit operator
//! norm when no blur is present.
//!
//! Images whose sides are not divisible by 2^levels are extended by
//! reflection before analysis; the pyramid remembers the original size and
//! synthesis crops back to it. The exact adjoint of that synthesis
//! (zero-extension followed by analysis) is provided separately as
//! [`dwt2_inverse_adjoint`] because the reflective forward transform is not
//! the transpose of the cropped inverse on padded sizes.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::Real;

/// Detail orientation; the first word names the filter applied along x,
/// the second the filter applied along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetailBand {
    /// Highpass along x, lowpass along y (top-right quadrant).
    HighLow,
    /// Lowpass along x, highpass along y (bottom-left quadrant).
    LowHigh,
    /// Highpass along both axes (bottom-right quadrant).
    HighHigh,
}

/// Multilevel Haar coefficient set in the usual packed quadrant layout.
///
/// The flat coefficient buffer covers the padded canvas, so its length is
/// always `padded_w * padded_h`; the solver treats it as one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid<T> {
    levels: usize,
    padded_w: usize,
    padded_h: usize,
    original_w: usize,
    original_h: usize,
    coeffs: Vec<T>,
}

/// Largest decomposition depth accepted for a `w` x `h` image: at least one
/// level is always allowed, beyond that every band must keep at least one
/// sample of original content.
pub fn max_levels(w: usize, h: usize) -> usize {
    let m = w.min(h).max(1);
    (m.ilog2() as usize).max(1)
}

/// Default decomposition depth: four levels when the image is large enough,
/// shallower for small inputs.
pub fn default_levels(w: usize, h: usize) -> usize {
    let m = w.min(h).max(1);
    let suggested = (m.ilog2() as isize - 2).min(4);
    (suggested.max(1) as usize).min(max_levels(w, h))
}

/// Canvas size after rounding both sides up to a multiple of 2^levels.
pub fn padded_dims(w: usize, h: usize, levels: usize) -> (usize, usize) {
    let m = 1usize << levels;
    (w.div_ceil(m) * m, h.div_ceil(m) * m)
}

fn check_levels(w: usize, h: usize, levels: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::Argument("image must be at least 1x1".into()));
    }
    if levels > max_levels(w, h) {
        return Err(Error::Argument(format!(
            "{} decomposition levels leave no content in the bands of a {}x{} image",
            levels, w, h
        )));
    }
    Ok(())
}

impl<T: Real> WaveletPyramid<T> {
    /// All-zero pyramid for an image of the given original size.
    pub fn zeros(original_w: usize, original_h: usize, levels: usize) -> Result<Self> {
        check_levels(original_w, original_h, levels)?;
        let (pw, ph) = padded_dims(original_w, original_h, levels);
        Ok(Self {
            levels,
            padded_w: pw,
            padded_h: ph,
            original_w,
            original_h,
            coeffs: vec![T::zero(); pw * ph],
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn original_dims(&self) -> (usize, usize) {
        (self.original_w, self.original_h)
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        (self.padded_w, self.padded_h)
    }

    /// The flat coefficient vector (length = padded width x padded height).
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.levels == other.levels
            && self.padded_w == other.padded_w
            && self.padded_h == other.padded_h
            && self.original_w == other.original_w
            && self.original_h == other.original_h
    }

    /// Clone carrying a different coefficient vector of the same length.
    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != self.coeffs.len() {
            return Err(Error::Structure(format!(
                "coefficient vector length {} does not match pyramid size {}",
                coeffs.len(),
                self.coeffs.len()
            )));
        }
        Ok(Self { coeffs, ..*self })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            coeffs: vec![T::zero(); self.coeffs.len()],
            ..*self
        }
    }

    fn approx_rect(&self) -> (usize, usize, usize, usize) {
        (0, 0, self.padded_w >> self.levels, self.padded_h >> self.levels)
    }

    fn detail_rect(&self, level: usize, band: DetailBand) -> Result<(usize, usize, usize, usize)> {
        if level == 0 || level > self.levels {
            return Err(Error::Structure(format!(
                "detail level {} outside 1..={}",
                level, self.levels
            )));
        }
        let w = self.padded_w >> level;
        let h = self.padded_h >> level;
        Ok(match band {
            DetailBand::HighLow => (w, 0, w, h),
            DetailBand::LowHigh => (0, h, w, h),
            DetailBand::HighHigh => (w, h, w, h),
        })
    }

    fn extract(&self, (x0, y0, w, h): (usize, usize, usize, usize)) -> Image<T> {
        Image::from_fn(w, h, |x, y| self.coeffs[(y0 + y) * self.padded_w + (x0 + x)])
    }

    fn insert(&mut self, (x0, y0, w, h): (usize, usize, usize, usize), img: &Image<T>) -> Result<()> {
        if img.dims() != (w, h) {
            return Err(Error::Structure(format!(
                "band is {}x{}, got {}x{}",
                w,
                h,
                img.width(),
                img.height()
            )));
        }
        for y in 0..h {
            for x in 0..w {
                self.coeffs[(y0 + y) * self.padded_w + (x0 + x)] = img.get(x, y);
            }
        }
        Ok(())
    }

    /// Deepest-level approximation band.
    pub fn top_approx(&self) -> Image<T> {
        self.extract(self.approx_rect())
    }

    pub fn set_top_approx(&mut self, img: &Image<T>) -> Result<()> {
        let rect = self.approx_rect();
        self.insert(rect, img)
    }

    /// Detail band at `level` (1 = finest).
    pub fn detail(&self, level: usize, band: DetailBand) -> Result<Image<T>> {
        Ok(self.extract(self.detail_rect(level, band)?))
    }

    pub fn set_detail(&mut self, level: usize, band: DetailBand, img: &Image<T>) -> Result<()> {
        let rect = self.detail_rect(level, band)?;
        self.insert(rect, img)
    }

    pub fn norm_l2_sq(&self) -> T {
        self.coeffs.iter().map(|&v| v * v).sum()
    }

    pub fn norm_l2(&self) -> T {
        self.norm_l2_sq().sqrt()
    }

    pub fn norm_l1(&self) -> T {
        self.coeffs.iter().map(|&v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_structure(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_structure(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn check_same_structure(&self, other: &Self) -> Result<()> {
        if !self.same_structure(other) {
            return Err(Error::Structure(format!(
                "pyramids differ: {} levels {}x{} (orig {}x{}) vs {} levels {}x{} (orig {}x{})",
                self.levels,
                self.padded_w,
                self.padded_h,
                self.original_w,
                self.original_h,
                other.levels,
                other.padded_w,
                other.padded_h,
                other.original_w,
                other.original_h
            )));
        }
        Ok(())
    }
}

#[inline]
fn inv_sqrt2<T: Real>() -> T {
    T::from_f64(std::f64::consts::FRAC_1_SQRT_2).unwrap()
}

/// One analysis level over the top-left `w` x `h` rectangle of `data`.
fn analysis_level<T: Real>(data: &mut [T], stride: usize, w: usize, h: usize, scratch: &mut [T]) {
    let c = inv_sqrt2::<T>();
    // Rows: pairs along x go to lowpass (left half) and highpass (right half).
    for y in 0..h {
        let row = &data[y * stride..y * stride + w];
        let out = &mut scratch[y * w..(y + 1) * w];
        for j in 0..w / 2 {
            let a = row[2 * j];
            let b = row[2 * j + 1];
            out[j] = (a + b) * c;
            out[w / 2 + j] = (a - b) * c;
        }
    }
    // Columns: pairs of rows go to the top and bottom halves.
    for i in 0..h / 2 {
        for x in 0..w {
            let a = scratch[2 * i * w + x];
            let b = scratch[(2 * i + 1) * w + x];
            data[i * stride + x] = (a + b) * c;
            data[(h / 2 + i) * stride + x] = (a - b) * c;
        }
    }
}

/// One synthesis level, the exact inverse (and transpose) of [`analysis_level`].
fn synthesis_level<T: Real>(data: &mut [T], stride: usize, w: usize, h: usize, scratch: &mut [T]) {
    let c = inv_sqrt2::<T>();
    for i in 0..h / 2 {
        for x in 0..w {
            let lo = data[i * stride + x];
            let hi = data[(h / 2 + i) * stride + x];
            scratch[2 * i * w + x] = (lo + hi) * c;
            scratch[(2 * i + 1) * w + x] = (lo - hi) * c;
        }
    }
    for y in 0..h {
        let row = &scratch[y * w..(y + 1) * w];
        let out = &mut data[y * stride..y * stride + w];
        for j in 0..w / 2 {
            let lo = row[j];
            let hi = row[w / 2 + j];
            out[2 * j] = (lo + hi) * c;
            out[2 * j + 1] = (lo - hi) * c;
        }
    }
}

fn analyze_in_place<T: Real>(data: &mut [T], pw: usize, ph: usize, levels: usize) {
    let mut scratch = vec![T::zero(); pw * ph];
    for l in 0..levels {
        let w = pw >> l;
        let h = ph >> l;
        analysis_level(data, pw, w, h, &mut scratch);
    }
}

fn synthesize_in_place<T: Real>(data: &mut [T], pw: usize, ph: usize, levels: usize) {
    let mut scratch = vec![T::zero(); pw * ph];
    for l in (0..levels).rev() {
        let w = pw >> l;
        let h = ph >> l;
        synthesis_level(data, pw, w, h, &mut scratch);
    }
}

/// Multilevel Haar analysis. Sides not divisible by 2^levels are extended by
/// reflection first; the original size is recorded for later cropping.
pub fn dwt2_forward<T: Real>(img: &Image<T>, levels: usize) -> Result<WaveletPyramid<T>> {
    check_levels(img.width(), img.height(), levels)?;
    let (pw, ph) = padded_dims(img.width(), img.height(), levels);
    let padded = img.pad_symmetric(pw, ph)?;
    let mut coeffs = padded.into_data();
    analyze_in_place(&mut coeffs, pw, ph, levels);
    Ok(WaveletPyramid {
        levels,
        padded_w: pw,
        padded_h: ph,
        original_w: img.width(),
        original_h: img.height(),
        coeffs,
    })
}

/// Exact synthesis, cropped to the pyramid's original size.
pub fn dwt2_inverse<T: Real>(pyr: &WaveletPyramid<T>) -> Result<Image<T>> {
    if pyr.coeffs.len() != pyr.padded_w * pyr.padded_h {
        return Err(Error::Structure(format!(
            "coefficient count {} does not cover the {}x{} canvas",
            pyr.coeffs.len(),
            pyr.padded_w,
            pyr.padded_h
        )));
    }
    let mut data = pyr.coeffs.clone();
    synthesize_in_place(&mut data, pyr.padded_w, pyr.padded_h, pyr.levels);
    let full = Image::new(pyr.padded_w, pyr.padded_h, data)?;
    full.crop_top_left(pyr.original_w, pyr.original_h)
}

/// Transpose of [`dwt2_inverse`]: the image is embedded in the padded canvas
/// with zeros (not reflection) and then analyzed. On sizes divisible by
/// 2^levels this coincides with [`dwt2_forward`].
pub fn dwt2_inverse_adjoint<T: Real>(img: &Image<T>, levels: usize) -> Result<WaveletPyramid<T>> {
    check_levels(img.width(), img.height(), levels)?;
    let (pw, ph) = padded_dims(img.width(), img.height(), levels);
    let mut coeffs = vec![T::zero(); pw * ph];
    for y in 0..img.height() {
        for x in 0..img.width() {
            coeffs[y * pw + x] = img.get(x, y);
        }
    }
    analyze_in_place(&mut coeffs, pw, ph, levels);
    Ok(WaveletPyramid {
        levels,
        padded_w: pw,
        padded_h: ph,
        original_w: img.width(),
        original_h: img.height(),
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_image(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        Image::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn constant_block_concentrates_in_approx() {
        let img = Image::constant(2, 2, 1.0f64);
        let pyr = dwt2_forward(&img, 1).unwrap();
        let ll = pyr.top_approx();
        assert!((ll.get(0, 0) - 2.0).abs() < 1e-12);
        for band in [DetailBand::HighLow, DetailBand::LowHigh, DetailBand::HighHigh] {
            assert!(pyr.detail(1, band).unwrap().get(0, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_splits_evenly_across_bands() {
        let mut img = Image::zeros(2, 2);
        img.set(0, 0, 1.0f64);
        let pyr = dwt2_forward(&img, 1).unwrap();
        assert!((pyr.top_approx().get(0, 0) - 0.5).abs() < 1e-12);
        for band in [DetailBand::HighLow, DetailBand::LowHigh, DetailBand::HighHigh] {
            assert!((pyr.detail(1, band).unwrap().get(0, 0) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_is_preserved_on_divisible_sizes() {
        let img = rng_image(64, 64, 7);
        let pyr = dwt2_forward(&img, 3).unwrap();
        let a = img.norm_l2();
        let b = pyr.norm_l2();
        assert!((a - b).abs() / a < 1e-10, "{} vs {}", a, b);
    }

    #[test]
    fn round_trip_is_identity_for_levels_1_to_4() {
        let img = rng_image(128, 128, 9);
        for levels in 1..=4 {
            let pyr = dwt2_forward(&img, levels).unwrap();
            let back = dwt2_inverse(&pyr).unwrap();
            assert!(back.max_abs_diff(&img).unwrap() < 1e-10, "levels {}", levels);
        }
    }

    #[test]
    fn round_trip_with_padding() {
        for (w, h, levels) in [(31, 47, 3), (127, 127, 4), (5, 9, 2)] {
            let img = rng_image(w, h, (w * h) as u64);
            let pyr = dwt2_forward(&img, levels).unwrap();
            let back = dwt2_inverse(&pyr).unwrap();
            assert!(back.max_abs_diff(&img).unwrap() < 1e-10, "{}x{} L{}", w, h, levels);
        }
    }

    #[test]
    fn only_top_approx_reconstructs_constant() {
        let mut pyr = WaveletPyramid::<f64>::zeros(8, 8, 2).unwrap();
        // Approximation value that synthesizes to 1.0 after two levels.
        let approx = Image::constant(2, 2, 4.0);
        pyr.set_top_approx(&approx).unwrap();
        let img = dwt2_inverse(&pyr).unwrap();
        assert!(img.max_abs_diff(&Image::constant(8, 8, 1.0)).unwrap() < 1e-12);
    }

    #[test]
    fn adjoint_identity_holds_with_padding() {
        // <W a, b> == <a, W^T b> with W = cropped synthesis.
        let b = rng_image(30, 21, 3);
        let mut a = WaveletPyramid::<f64>::zeros(30, 21, 3).unwrap();
        let noise = rng_image(a.padded_dims().0, a.padded_dims().1, 4);
        a.coeffs_mut().copy_from_slice(noise.data());
        let wa = dwt2_inverse(&a).unwrap();
        let wtb = dwt2_inverse_adjoint(&b, 3).unwrap();
        let lhs = wa.dot(&b).unwrap();
        let rhs = a.dot(&wtb).unwrap();
        assert!((lhs - rhs).abs() / lhs.abs().max(1.0) < 1e-10);
    }

    #[test]
    fn forward_is_linear() {
        let a = rng_image(32, 32, 11);
        let b = rng_image(32, 32, 12);
        let (alpha, beta) = (0.7, -1.3);
        let combo = a.scaled(alpha).add(&b.scaled(beta)).unwrap();
        let lhs = dwt2_forward(&combo, 3).unwrap();
        let pa = dwt2_forward(&a, 3).unwrap();
        let pb = dwt2_forward(&b, 3).unwrap();
        let rhs: Vec<f64> = pa
            .coeffs()
            .iter()
            .zip(pb.coeffs())
            .map(|(&x, &y)| alpha * x + beta * y)
            .collect();
        let rhs = pa.with_coeffs(rhs).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn excessive_levels_are_rejected() {
        let img = Image::<f64>::zeros(8, 8);
        assert!(dwt2_forward(&img, 10).is_err());
        assert!(dwt2_forward(&img, 3).is_ok());
    }

    #[test]
    fn zero_levels_is_the_identity_transform() {
        let img = rng_image(5, 4, 2);
        let pyr = dwt2_forward(&img, 0).unwrap();
        assert_eq!(pyr.padded_dims(), (5, 4));
        assert_eq!(pyr.coeffs(), img.data());
        let back = dwt2_inverse(&pyr).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() == 0.0);
    }

    #[test]
    fn band_insert_rejects_wrong_size() {
        let mut pyr = WaveletPyramid::<f64>::zeros(8, 8, 2).unwrap();
        let wrong = Image::zeros(3, 2);
        assert!(pyr.set_top_approx(&wrong).is_err());
        assert!(pyr.set_detail(1, DetailBand::HighHigh, &wrong).is_err());
        assert!(pyr.set_detail(5, DetailBand::HighLow, &Image::zeros(1, 1)).is_err());
    }

    #[test]
    fn padding_rounds_up_to_the_level_multiple() {
        assert_eq!(padded_dims(127, 127, 4), (128, 128));
        assert_eq!(padded_dims(128, 128, 4), (128, 128));
        assert_eq!(padded_dims(31, 47, 3), (32, 48));
        assert_eq!(padded_dims(5, 4, 0), (5, 4));
    }

    #[test]
    fn default_levels_follows_size() {
        assert_eq!(default_levels(512, 512), 4);
        assert_eq!(default_levels(16, 16), 2);
        assert_eq!(default_levels(8, 8), 1);
        assert_eq!(default_levels(4, 4), 1);
        assert_eq!(default_levels(1, 1), 1);
    }

    #[test]
    fn f32_round_trip_within_single_precision() {
        let img = Image::<f32>::from_fn(33, 17, |x, y| ((x * 7 + y * 3) % 13) as f32 / 13.0);
        let pyr = dwt2_forward(&img, 2).unwrap();
        let back = dwt2_inverse(&pyr).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() < 1e-5);
    }
}
