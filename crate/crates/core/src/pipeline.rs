//! End-to-end fusion jobs: loading, gain estimation, solving, metric
//! computation and report writing, plus the synthetic-pair generator the
//! test suites run on.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{rgb_to_ycbcr, ycbcr_to_rgb, Image};
use crate::io::{load_image, save_gray, save_rgb, BitDepth, LoadedImage};
use crate::metrics::{metrics_report, MetricsReport};
use crate::operators::{conv2_apply, ForwardOp, GainMap, Psf};
use crate::sensorgain::{build_gain_map, build_gain_map_smoothed};
use crate::solver::{solve, FusionResult, SolverConfig};
use crate::wavelet::{self, default_levels, dwt2_forward, dwt2_inverse};
use crate::Real;

/// Regularization weight for clean inputs.
pub const DEFAULT_LAMBDA_CLEAN: f64 = 0.005;
/// Regularization weight for noisy or blurred inputs.
pub const DEFAULT_LAMBDA_NOISY: f64 = 0.5;
/// Default convexity parameter.
pub const DEFAULT_GAMMA: f64 = 0.8;
/// Default gain-estimation patch side.
pub const DEFAULT_PATCH: usize = 16;
/// Default iteration budget.
pub const DEFAULT_MAX_ITERS: usize = 300;
/// Default relative-change stopping threshold.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Window used for the quality metrics.
pub const METRICS_WINDOW: usize = 8;

/// Which fusion rule a job runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Convex cost with the GMC penalty.
    Gmc,
    /// Same cost with the plain l1 penalty (gamma forced to zero).
    L1,
    /// Coefficient averaging in the wavelet domain, no solver.
    WaveletWa,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmc" => Ok(Method::Gmc),
            "l1" => Ok(Method::L1),
            "wavelet-wa" | "wavelet_wa" | "waveletwa" => Ok(Method::WaveletWa),
            other => Err(Error::Argument(format!(
                "unknown method {:?} (expected gmc, l1 or wavelet-wa)",
                other
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gmc => write!(f, "gmc"),
            Method::L1 => write!(f, "l1"),
            Method::WaveletWa => write!(f, "wavelet-wa"),
        }
    }
}

/// One fusion run described by file paths and parameters.
#[derive(Debug, Clone)]
pub struct FusionJob<T> {
    pub input1: PathBuf,
    pub input2: PathBuf,
    pub psf1: Option<PathBuf>,
    pub psf2: Option<PathBuf>,
    pub method: Method,
    pub lambda: T,
    pub gamma: T,
    pub mu: Option<T>,
    /// Decomposition depth; `None` derives it from the image size.
    pub levels: Option<usize>,
    pub patch_size: usize,
    pub max_iters: usize,
    pub tol: T,
    pub smooth_gains: bool,
    /// Center-crop mismatched inputs to their common size instead of failing.
    pub crop: bool,
    pub output: PathBuf,
    /// Compute quality metrics against the two inputs.
    pub metrics: bool,
    /// Row label for reports; defaults to the first input's file stem.
    pub dataset: Option<String>,
}

impl<T: Real> FusionJob<T> {
    pub fn new(input1: impl Into<PathBuf>, input2: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            input1: input1.into(),
            input2: input2.into(),
            psf1: None,
            psf2: None,
            method: Method::Gmc,
            lambda: T::from_f64(DEFAULT_LAMBDA_CLEAN).unwrap(),
            gamma: T::from_f64(DEFAULT_GAMMA).unwrap(),
            mu: None,
            levels: None,
            patch_size: DEFAULT_PATCH,
            max_iters: DEFAULT_MAX_ITERS,
            tol: T::from_f64(DEFAULT_TOL).unwrap(),
            smooth_gains: false,
            crop: false,
            output: output.into(),
            metrics: false,
            dataset: None,
        }
    }

    pub fn dataset_label(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.input1
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

/// Everything a finished job hands back.
pub struct PipelineOutput<T> {
    pub fused: Image<T>,
    pub metrics: Option<MetricsReport<T>>,
    pub diagnostics: Option<FusionResult<T>>,
    /// Solver wall-clock time; excludes loading, gain estimation and metrics.
    pub solver_seconds: f64,
    pub dataset: String,
    pub method: Method,
}

/// Classical wavelet-averaging baseline. By linearity of the transform this
/// equals the pixel average; it is kept in the wavelet form it is named
/// after.
pub fn baseline_wavelet_wa<T: Real>(y1: &Image<T>, y2: &Image<T>, levels: usize) -> Result<Image<T>> {
    if !y1.same_dims(y2) {
        return Err(Error::Dimension(format!(
            "inputs differ: {}x{} vs {}x{}",
            y1.width(),
            y1.height(),
            y2.width(),
            y2.height()
        )));
    }
    let half = T::from_f64(0.5).unwrap();
    let p1 = dwt2_forward(y1, levels)?;
    let p2 = dwt2_forward(y2, levels)?;
    let avg: Vec<T> = p1
        .coeffs()
        .iter()
        .zip(p2.coeffs())
        .map(|(&a, &b)| half * (a + b))
        .collect();
    dwt2_inverse(&p1.with_coeffs(avg)?)
}

/// In-memory fusion of two grayscale planes. Returns the fused image and,
/// for the solver-backed methods, the solver diagnostics.
pub fn fuse_images<T: Real>(
    y1: &Image<T>,
    y2: &Image<T>,
    psf1: Option<&Psf<T>>,
    psf2: Option<&Psf<T>>,
    method: Method,
    cfg: &SolverConfig<T>,
    patch_size: usize,
    smooth_gains: bool,
) -> Result<(Image<T>, Option<FusionResult<T>>)> {
    if method == Method::WaveletWa {
        return Ok((baseline_wavelet_wa(y1, y2, cfg.levels)?.clamped01(), None));
    }
    let cfg = SolverConfig {
        gamma: if method == Method::L1 { T::zero() } else { cfg.gamma },
        ..cfg.clone()
    };
    let gains = if smooth_gains {
        build_gain_map_smoothed(y1, y2, patch_size)?
    } else {
        build_gain_map(y1, y2, patch_size)?
    };
    let op1 = ForwardOp::new(psf1.cloned(), gains.beta1().clone(), cfg.levels)?;
    let op2 = ForwardOp::new(psf2.cloned(), gains.beta2().clone(), cfg.levels)?;
    let result = solve(y1, y2, &op1, &op2, &cfg)?;
    let fused = reconstruct_display(&result, &gains)?;
    Ok((fused, Some(result)))
}

/// Maps the solver's coefficients back to display brightness. The generative
/// model scales the scene by the local gain sum (between 1 and sqrt(2)), so
/// the synthesis is divided by `beta1 + beta2` before clamping.
fn reconstruct_display<T: Real>(result: &FusionResult<T>, gains: &GainMap<T>) -> Result<Image<T>> {
    let raw = dwt2_inverse(&result.state.x)?;
    let sum = gains.sum_field();
    Ok(raw.zip_map(&sum, |v, s| v / s)?.clamped01())
}

struct LoadedPlane<T> {
    luma: Image<T>,
    chroma: Option<(Image<T>, Image<T>)>,
}

fn load_plane<T: Real>(path: &Path) -> Result<LoadedPlane<T>> {
    match load_image(path)? {
        LoadedImage::Gray(img) => Ok(LoadedPlane { luma: img, chroma: None }),
        LoadedImage::Rgb(color) => {
            let (y, cb, cr) = rgb_to_ycbcr(&color);
            Ok(LoadedPlane { luma: y, chroma: Some((cb, cr)) })
        }
    }
}

fn crop_plane<T: Real>(plane: &LoadedPlane<T>, w: usize, h: usize) -> Result<LoadedPlane<T>> {
    Ok(LoadedPlane {
        luma: plane.luma.crop_center(w, h)?,
        chroma: match &plane.chroma {
            Some((cb, cr)) => Some((cb.crop_center(w, h)?, cr.crop_center(w, h)?)),
            None => None,
        },
    })
}

/// Runs a complete job: load, estimate gains, solve, write the fused image,
/// and compute metrics when asked to.
pub fn fuse_pipeline<T: Real>(job: &FusionJob<T>) -> Result<PipelineOutput<T>> {
    let mut p1 = load_plane::<T>(&job.input1)?;
    let mut p2 = load_plane::<T>(&job.input2)?;
    if p1.luma.dims() != p2.luma.dims() {
        if !job.crop {
            return Err(Error::Dimension(format!(
                "inputs are {}x{} and {}x{}; pass the crop option to center-crop",
                p1.luma.width(),
                p1.luma.height(),
                p2.luma.width(),
                p2.luma.height()
            )));
        }
        let w = p1.luma.width().min(p2.luma.width());
        let h = p1.luma.height().min(p2.luma.height());
        p1 = crop_plane(&p1, w, h)?;
        p2 = crop_plane(&p2, w, h)?;
    }

    let psf1 = job.psf1.as_deref().map(Psf::from_file).transpose()?;
    let psf2 = job.psf2.as_deref().map(Psf::from_file).transpose()?;

    let (w, h) = p1.luma.dims();
    let levels = match job.levels {
        Some(l) => {
            if l == 0 || l > wavelet::max_levels(w, h) {
                return Err(Error::Argument(format!(
                    "levels {} invalid for a {}x{} image",
                    l, w, h
                )));
            }
            l
        }
        None => default_levels(w, h),
    };
    let cfg = SolverConfig {
        lambda: job.lambda,
        gamma: job.gamma,
        mu: job.mu,
        max_iters: job.max_iters,
        tol: job.tol,
        levels,
    };

    let started = Instant::now();
    let (fused, diagnostics) = fuse_images(
        &p1.luma,
        &p2.luma,
        psf1.as_ref(),
        psf2.as_ref(),
        job.method,
        &cfg,
        job.patch_size,
        job.smooth_gains,
    )?;
    let solver_seconds = started.elapsed().as_secs_f64();

    let metrics = if job.metrics {
        Some(metrics_report(&p1.luma, &p2.luma, &fused, METRICS_WINDOW)?)
    } else {
        None
    };

    write_output(&fused, &p1.chroma, &p2.chroma, &job.output)?;

    Ok(PipelineOutput {
        fused,
        metrics,
        diagnostics,
        solver_seconds,
        dataset: job.dataset_label(),
        method: job.method,
    })
}

/// Chroma comes from the color input; when both inputs carry color the
/// planes are averaged. Grayscale-only targets drop chroma.
fn write_output<T: Real>(
    fused: &Image<T>,
    chroma1: &Option<(Image<T>, Image<T>)>,
    chroma2: &Option<(Image<T>, Image<T>)>,
    path: &Path,
) -> Result<()> {
    let half = T::from_f64(0.5).unwrap();
    let chroma = match (chroma1, chroma2) {
        (Some((cb1, cr1)), Some((cb2, cr2))) => Some((
            cb1.zip_map(cb2, |a, b| half * (a + b))?,
            cr1.zip_map(cr2, |a, b| half * (a + b))?,
        )),
        (Some(c), None) | (None, Some(c)) => Some(c.clone()),
        (None, None) => None,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let color_capable = ext == "png" || ext == "ppm";
    match chroma {
        Some((cb, cr)) if color_capable => {
            let rgb = ycbcr_to_rgb(fused, &cb, &cr)?;
            save_rgb(&rgb, path, BitDepth::Eight)
        }
        _ => save_gray(fused, path, BitDepth::Eight),
    }
}

/// Additive Gaussian noise request for [`synth_pair`].
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec<T> {
    pub sigma: T,
    pub seed: u64,
}

/// Builds a complementary-blur pair from a ground-truth image: the first
/// output is blurred on its left half, the second on its right half, with a
/// linear 8-pixel seam between the regimes. Optional additive Gaussian noise
/// models the noisy regime. The truncated-Gaussian kernels used are
/// returned.
/// The two degraded views and the kernels that produced them.
pub type SynthPair<T> = (Image<T>, Image<T>, Psf<T>, Psf<T>);

pub fn synth_pair<T: Real>(
    ground_truth: &Image<T>,
    sigma_left: T,
    sigma_right: T,
    noise: Option<NoiseSpec<T>>,
) -> Result<SynthPair<T>> {
    if sigma_left < T::zero() || sigma_right < T::zero() {
        return Err(Error::Argument("blur sigmas must be nonnegative".into()));
    }
    let psf1 = Psf::gaussian(sigma_left);
    let psf2 = Psf::gaussian(sigma_right);
    let w = ground_truth.width();
    let seam = 8.0;
    let half_w = w as f64 / 2.0;

    let blend = |blurred: &Image<T>, blur_on_left: bool| -> Image<T> {
        Image::from_fn(w, ground_truth.height(), |x, y| {
            // 0 well left of center, 1 well right, linear across the seam.
            let t = ((x as f64 - (half_w - seam / 2.0)) / seam).clamp(0.0, 1.0);
            let blur_weight = if blur_on_left { 1.0 - t } else { t };
            let bw = T::from_f64(blur_weight).unwrap();
            bw * blurred.get(x, y) + (T::one() - bw) * ground_truth.get(x, y)
        })
    };

    let mut y1 = if psf1.is_identity() {
        ground_truth.clone()
    } else {
        blend(&conv2_apply(ground_truth, &psf1)?, true)
    };
    let mut y2 = if psf2.is_identity() {
        ground_truth.clone()
    } else {
        blend(&conv2_apply(ground_truth, &psf2)?, false)
    };

    if let Some(spec) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut add_noise = |img: &mut Image<T>| {
            for v in img.data_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *v = (*v + spec.sigma * T::from_f64(n).unwrap())
                    .max(T::zero())
                    .min(T::one());
            }
        };
        add_noise(&mut y1);
        add_noise(&mut y2);
    }
    Ok((y1, y2, psf1, psf2))
}

/// Procedural test scene: a smooth gradient with rectangles, disks and a
/// sinusoidal texture band, deterministic in the seed.
pub fn synth_scene<T: Real>(width: usize, height: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corners: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..0.8)).collect();
    let mut img = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 / (width - 1).max(1) as f64;
            let v = y as f64 / (height - 1).max(1) as f64;
            let top = corners[0] * (1.0 - u) + corners[1] * u;
            let bottom = corners[2] * (1.0 - u) + corners[3] * u;
            img[y * width + x] = top * (1.0 - v) + bottom * v;
        }
    }
    for _ in 0..6 {
        let x0 = rng.gen_range(0..width);
        let y0 = rng.gen_range(0..height);
        let rw = rng.gen_range(width / 8..width / 2).max(2);
        let rh = rng.gen_range(height / 8..height / 2).max(2);
        let delta = rng.gen_range(-0.35..0.35);
        for y in y0..(y0 + rh).min(height) {
            for x in x0..(x0 + rw).min(width) {
                img[y * width + x] += delta;
            }
        }
    }
    for _ in 0..3 {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let radius = rng.gen_range(width.min(height) as f64 / 12.0..width.min(height) as f64 / 4.0);
        let delta = rng.gen_range(-0.3..0.3);
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < radius {
                    img[y * width + x] += delta;
                }
            }
        }
    }
    let fx = rng.gen_range(0.05..0.2);
    let fy = rng.gen_range(0.05..0.2);
    let band_top = rng.gen_range(0..height / 2);
    let band_h = (height / 4).max(1);
    for y in band_top..(band_top + band_h).min(height) {
        for x in 0..width {
            let phase = 2.0 * std::f64::consts::PI * (fx * x as f64 + fy * y as f64);
            img[y * width + x] += 0.12 * phase.sin();
        }
    }
    Image::from_fn(width, height, |x, y| {
        T::from_f64(img[y * width + x].clamp(0.02, 0.98)).unwrap()
    })
}

/// Peak signal-to-noise ratio against a unit-range reference, in dB.
pub fn psnr<T: Real>(img: &Image<T>, reference: &Image<T>) -> Result<T> {
    let diff = img.sub(reference)?;
    let n = T::from_usize(diff.data().len()).unwrap();
    let mse = diff.norm_l2_sq() / n;
    if mse <= T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::from_f64(-10.0).unwrap() * mse.log10())
}

/// One line of a fusion report.
#[derive(Debug, Clone)]
pub struct ReportRow<T> {
    pub dataset: String,
    pub method: Method,
    pub metrics: Option<MetricsReport<T>>,
    pub seconds: f64,
}

impl<T: Real> From<&PipelineOutput<T>> for ReportRow<T> {
    fn from(out: &PipelineOutput<T>) -> Self {
        Self {
            dataset: out.dataset.clone(),
            method: out.method,
            metrics: out.metrics,
            seconds: out.solver_seconds,
        }
    }
}

fn metric_cell<T: Real>(v: Option<T>) -> String {
    match v {
        Some(x) => format!("{:.6}", x.to_f64().unwrap()),
        None => "NA".into(),
    }
}

/// Renders job results as CSV (columns `dataset,method,pe,q0,q,seconds`)
/// and as a human-readable table. A final row carries the per-metric
/// arithmetic means over the rows that reported metrics.
pub fn report<T: Real>(rows: &[ReportRow<T>]) -> (String, String) {
    let mut csv = String::from("dataset,method,pe,q0,q,seconds\n");
    let mut table = String::new();
    table.push_str("fusion report (seconds column covers solver time only)\n");
    table.push_str(&format!(
        "{:<20} {:<12} {:>10} {:>10} {:>10} {:>10}\n",
        "dataset", "method", "pe", "q0", "q", "seconds"
    ));

    let mut sums = [0.0f64; 3];
    let mut metric_rows = 0usize;
    let mut seconds_sum = 0.0f64;
    for row in rows {
        let (pe, q0, q) = match row.metrics {
            Some(m) => {
                sums[0] += m.pe.to_f64().unwrap();
                sums[1] += m.q0.to_f64().unwrap();
                sums[2] += m.q.to_f64().unwrap();
                metric_rows += 1;
                (Some(m.pe), Some(m.q0), Some(m.q))
            }
            None => (None, None, None),
        };
        seconds_sum += row.seconds;
        let cells = [
            metric_cell(pe),
            metric_cell(q0),
            metric_cell(q),
            format!("{:.3}", row.seconds),
        ];
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.dataset, row.method, cells[0], cells[1], cells[2], cells[3]
        ));
        table.push_str(&format!(
            "{:<20} {:<12} {:>10} {:>10} {:>10} {:>10}\n",
            row.dataset, row.method.to_string(), cells[0], cells[1], cells[2], cells[3]
        ));
    }

    let avg = |i: usize| -> String {
        if metric_rows == 0 {
            "NA".into()
        } else {
            format!("{:.6}", sums[i] / metric_rows as f64)
        }
    };
    let avg_seconds = if rows.is_empty() {
        0.0
    } else {
        seconds_sum / rows.len() as f64
    };
    csv.push_str(&format!(
        "Average,all,{},{},{},{:.3}\n",
        avg(0),
        avg(1),
        avg(2),
        avg_seconds
    ));
    table.push_str(&format!(
        "{:<20} {:<12} {:>10} {:>10} {:>10} {:>10}\n",
        "Average",
        "all",
        avg(0),
        avg(1),
        avg(2),
        format!("{:.3}", avg_seconds)
    ));
    (csv, table)
}
