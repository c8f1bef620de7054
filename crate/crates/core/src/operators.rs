//! Linear degradation machinery: convolution by a point spread function,
//! per-pixel sensor gains, their composition with the wavelet synthesis, and
//! power-iteration estimation of the composed operator norm.
//!
//! Every operator here comes with its exact adjoint (transpose), including
//! the boundary handling: the adjoint of reading a reflected sample is
//! accumulating back into the mirrored position. Dot-product tests therefore
//! hold to machine precision, which the solver's step-size bound relies on.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{reflect_index, Image};
use crate::wavelet::{self, WaveletPyramid};
use crate::Real;

/// Normalized convolution kernel with odd sides, anchored at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf<T> {
    width: usize,
    height: usize,
    taps: Vec<T>,
}

impl<T: Real> Psf<T> {
    /// Builds a kernel from row-major taps, normalizing them to unit sum.
    pub fn new(width: usize, height: usize, taps: Vec<T>) -> Result<Self> {
        if width % 2 == 0 || height % 2 == 0 || width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "kernel sides must be odd, got {}x{}",
                width, height
            )));
        }
        if taps.len() != width * height {
            return Err(Error::Dimension(format!(
                "kernel data length {} does not match {}x{}",
                taps.len(),
                width,
                height
            )));
        }
        if taps.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Argument(
                "kernel entries must be finite and nonnegative".into(),
            ));
        }
        let sum: T = taps.iter().copied().sum();
        if sum <= T::zero() {
            return Err(Error::Argument("kernel sums to zero".into()));
        }
        let taps = taps.into_iter().map(|v| v / sum).collect();
        Ok(Self { width, height, taps })
    }

    /// The 1x1 kernel, i.e. no blur.
    pub fn identity() -> Self {
        Self { width: 1, height: 1, taps: vec![T::one()] }
    }

    /// Gaussian truncated at three standard deviations. `sigma <= 0` gives
    /// the identity kernel.
    pub fn gaussian(sigma: T) -> Self {
        if sigma <= T::zero() {
            return Self::identity();
        }
        let r = (sigma.to_f64().unwrap() * 3.0).ceil() as usize;
        let side = 2 * r + 1;
        let two = T::from_f64(2.0).unwrap();
        let mut taps = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let dx = T::from_isize(x as isize - r as isize).unwrap();
                let dy = T::from_isize(y as isize - r as isize).unwrap();
                taps.push((-(dx * dx + dy * dy) / (two * sigma * sigma)).exp());
            }
        }
        Self::new(side, side, taps).expect("gaussian taps are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn is_identity(&self) -> bool {
        self.width == 1 && self.height == 1
    }

    /// Parses the plain-text kernel format: a `rows cols` header line
    /// followed by row-major whitespace-separated reals.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let rows: usize = tokens
            .next()
            .ok_or_else(|| Error::Format("psf file is empty".into()))?
            .parse()
            .map_err(|_| Error::Format("psf header must start with rows".into()))?;
        let cols: usize = tokens
            .next()
            .ok_or_else(|| Error::Format("psf header is missing cols".into()))?
            .parse()
            .map_err(|_| Error::Format("psf header cols is not an integer".into()))?;
        let mut taps = Vec::with_capacity(rows * cols);
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad psf tap {:?}", tok)))?;
            taps.push(T::from_f64(v).unwrap());
        }
        if taps.len() != rows * cols {
            return Err(Error::Format(format!(
                "psf body has {} taps, header says {}x{}",
                taps.len(),
                rows,
                cols
            )));
        }
        Psf::new(cols, rows, taps)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.height, self.width);
        for row in self.taps.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.to_f64().unwrap())).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn check_kernel_fits<T: Real>(img: &Image<T>, psf: &Psf<T>) -> Result<()> {
    if psf.width > 2 * img.width() || psf.height > 2 * img.height() {
        return Err(Error::Argument(format!(
            "kernel {}x{} too large for a {}x{} image",
            psf.width,
            psf.height,
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Convolution (correlation orientation) with edge-repeated symmetric
/// boundary handling; the output has the size of the input.
pub fn conv2_apply<T: Real>(img: &Image<T>, psf: &Psf<T>) -> Result<Image<T>> {
    check_kernel_fits(img, psf)?;
    if psf.is_identity() {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let (kw, kh) = (psf.width, psf.height);
    let (rx, ry) = (kw as isize / 2, kh as isize / 2);
    let src = img.data();
    let mut out = vec![T::zero(); w * h];
    let interior = w as isize > 2 * rx && h as isize > 2 * ry;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = T::zero();
            if interior && x >= rx && x < w as isize - rx && y >= ry && y < h as isize - ry {
                for ky in 0..kh as isize {
                    let row = ((y + ky - ry) as usize) * w;
                    let krow = (ky as usize) * kw;
                    for kx in 0..kw as isize {
                        acc += psf.taps[krow + kx as usize] * src[row + (x + kx - rx) as usize];
                    }
                }
            } else {
                for ky in 0..kh as isize {
                    let sy = reflect_index(y + ky - ry, h);
                    let krow = (ky as usize) * kw;
                    for kx in 0..kw as isize {
                        let sx = reflect_index(x + kx - rx, w);
                        acc += psf.taps[krow + kx as usize] * src[sy * w + sx];
                    }
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    Image::new(w, h, out)
}

/// Exact transpose of [`conv2_apply`], realized by scattering each tap back
/// through the same reflected indices the forward pass read from.
pub fn conv2_adjoint<T: Real>(img: &Image<T>, psf: &Psf<T>) -> Result<Image<T>> {
    check_kernel_fits(img, psf)?;
    if psf.is_identity() {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let (kw, kh) = (psf.width, psf.height);
    let (rx, ry) = (kw as isize / 2, kh as isize / 2);
    let src = img.data();
    let mut out = vec![T::zero(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let v = src[y as usize * w + x as usize];
            for ky in 0..kh as isize {
                let sy = reflect_index(y + ky - ry, h);
                let krow = (ky as usize) * kw;
                for kx in 0..kw as isize {
                    let sx = reflect_index(x + kx - rx, w);
                    out[sy * w + sx] += psf.taps[krow + kx as usize] * v;
                }
            }
        }
    }
    Image::new(w, h, out)
}

/// Per-pixel sensor gains for the two inputs, normalized so that
/// `beta1^2 + beta2^2 = 1` at every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap<T> {
    beta1: Image<T>,
    beta2: Image<T>,
}

impl<T: Real> GainMap<T> {
    pub fn new(beta1: Image<T>, beta2: Image<T>) -> Result<Self> {
        if !beta1.same_dims(&beta2) {
            return Err(Error::Dimension(format!(
                "gain fields differ: {}x{} vs {}x{}",
                beta1.width(),
                beta1.height(),
                beta2.width(),
                beta2.height()
            )));
        }
        let tol = T::from_f64(1e-12).unwrap();
        for (&a, &b) in beta1.data().iter().zip(beta2.data()) {
            if a < T::zero() || b < T::zero() {
                return Err(Error::Argument("gains must be nonnegative".into()));
            }
            if ((a * a + b * b) - T::one()).abs() > tol {
                return Err(Error::Argument(format!(
                    "gain pair ({}, {}) is not unit-normalized",
                    a, b
                )));
            }
        }
        Ok(Self { beta1, beta2 })
    }

    /// Spatially uniform gain pair; `(b1, b2)` must be unit-normalized.
    pub fn uniform(width: usize, height: usize, b1: T, b2: T) -> Result<Self> {
        Self::new(
            Image::constant(width, height, b1),
            Image::constant(width, height, b2),
        )
    }

    pub fn beta1(&self) -> &Image<T> {
        &self.beta1
    }

    pub fn beta2(&self) -> &Image<T> {
        &self.beta2
    }

    pub fn dims(&self) -> (usize, usize) {
        self.beta1.dims()
    }

    /// Pointwise `beta1 + beta2`, the brightness the generative model assigns
    /// to a unit scene; used to normalize reconstructions for display.
    pub fn sum_field(&self) -> Image<T> {
        self.beta1.add(&self.beta2).expect("same dims by construction")
    }
}

/// One sensor's measurement operator: wavelet synthesis, then optional
/// blur, then the pointwise gain.
#[derive(Debug, Clone)]
pub struct ForwardOp<T> {
    psf: Option<Psf<T>>,
    gain: Image<T>,
    levels: usize,
}

impl<T: Real> ForwardOp<T> {
    /// `psf = None` means no blur. `gain` fixes the image-domain size.
    pub fn new(psf: Option<Psf<T>>, gain: Image<T>, levels: usize) -> Result<Self> {
        // Validate levels against the image size up front.
        let _ = WaveletPyramid::<T>::zeros(gain.width(), gain.height(), levels)?;
        if let Some(ref k) = psf {
            check_kernel_fits(&gain, k)?;
        }
        if gain.data().iter().any(|v| *v < T::zero()) {
            return Err(Error::Argument("gain field must be nonnegative".into()));
        }
        Ok(Self { psf, gain, levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.gain.dims()
    }

    pub fn gain(&self) -> &Image<T> {
        &self.gain
    }

    pub fn psf(&self) -> Option<&Psf<T>> {
        self.psf.as_ref()
    }

    /// Zero coefficient vector with the structure this operator expects.
    pub fn empty_pyramid(&self) -> WaveletPyramid<T> {
        WaveletPyramid::zeros(self.gain.width(), self.gain.height(), self.levels)
            .expect("validated at construction")
    }

    fn check_coeffs(&self, coeffs: &WaveletPyramid<T>) -> Result<()> {
        let template = self.empty_pyramid();
        template.check_same_structure(coeffs)
    }

    /// `gain .* H(W coeffs)`.
    pub fn apply(&self, coeffs: &WaveletPyramid<T>) -> Result<Image<T>> {
        self.check_coeffs(coeffs)?;
        let mut img = wavelet::dwt2_inverse(coeffs)?;
        if let Some(ref k) = self.psf {
            img = conv2_apply(&img, k)?;
        }
        img.hadamard(&self.gain)
    }

    /// Exact transpose of [`ForwardOp::apply`]:
    /// `W^T H^T (gain .* residual)`.
    pub fn adjoint(&self, residual: &Image<T>) -> Result<WaveletPyramid<T>> {
        if residual.dims() != self.gain.dims() {
            return Err(Error::Dimension(format!(
                "residual {}x{} vs operator {}x{}",
                residual.width(),
                residual.height(),
                self.gain.width(),
                self.gain.height()
            )));
        }
        let mut img = residual.hadamard(&self.gain)?;
        if let Some(ref k) = self.psf {
            img = conv2_adjoint(&img, k)?;
        }
        wavelet::dwt2_inverse_adjoint(&img, self.levels)
    }

    /// `A^T A` applied to a coefficient vector.
    pub fn normal_apply(&self, coeffs: &WaveletPyramid<T>) -> Result<WaveletPyramid<T>> {
        self.adjoint(&self.apply(coeffs)?)
    }
}

/// Power-iteration estimate of the largest eigenvalue of
/// `A1^T A1 + A2^T A2`, seeded with the all-ones coefficient vector so the
/// result is deterministic. The Rayleigh quotient sequence is nondecreasing
/// for this symmetric positive-semidefinite operator.
///
/// Panics if the two operators do not share image dimensions and depth.
pub fn operator_norm_sq<T: Real>(op1: &ForwardOp<T>, op2: &ForwardOp<T>, iterations: usize) -> T {
    let template = op1.empty_pyramid();
    template
        .check_same_structure(&op2.empty_pyramid())
        .expect("operators must share dimensions and levels");
    let ones = vec![T::one(); template.coeffs().len()];
    let mut z = template.with_coeffs(ones).unwrap();
    let mut estimate = T::zero();
    for _ in 0..iterations.max(1) {
        let m1 = op1.normal_apply(&z).expect("structure validated");
        let m2 = op2.normal_apply(&z).expect("structure validated");
        let mz: Vec<T> = m1
            .coeffs()
            .iter()
            .zip(m2.coeffs())
            .map(|(&a, &b)| a + b)
            .collect();
        let mz = template.with_coeffs(mz).unwrap();
        let zz = z.norm_l2_sq();
        let zmz = z.dot(&mz).unwrap();
        if zz <= T::zero() {
            return T::zero();
        }
        estimate = zmz / zz;
        let norm = mz.norm_l2();
        if norm <= T::zero() {
            return T::zero();
        }
        let scaled: Vec<T> = mz.coeffs().iter().map(|&v| v / norm).collect();
        z = template.with_coeffs(scaled).unwrap();
    }
    estimate
}
