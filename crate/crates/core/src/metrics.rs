//! Fusion quality measures: the universal-quality-index fusion score, its
//! saliency-weighted variant, and the gradient-preservation measure.
//!
//! The sigmoid constants of the gradient measure are frozen here so scores
//! stay comparable across runs of this crate.

use crate::error::{Error, Result};
use crate::image::{reflect_index, Image};
use crate::Real;

/// Amplitude of the edge-strength sigmoid.
pub const PE_STRENGTH_GAMMA: f64 = 0.9994;
/// Slope of the edge-strength sigmoid.
pub const PE_STRENGTH_KAPPA: f64 = -15.0;
/// Center of the edge-strength sigmoid.
pub const PE_STRENGTH_SIGMA: f64 = 0.5;
/// Amplitude of the orientation sigmoid.
pub const PE_ORIENT_GAMMA: f64 = 0.9879;
/// Slope of the orientation sigmoid.
pub const PE_ORIENT_KAPPA: f64 = -22.0;
/// Center of the orientation sigmoid.
pub const PE_ORIENT_SIGMA: f64 = 0.8;

/// Window variance below this is treated as constant.
const VAR_EPS: f64 = 1e-15;
/// Constant windows with means closer than this count as equal.
const MEAN_EPS: f64 = 1e-12;

/// Scores of one fused image against its two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<T> {
    /// Gradient-preservation score in `[0, 1]`.
    pub pe: T,
    /// Universal-quality-index fusion score in `[-1, 1]`.
    pub q0: T,
    /// Saliency-weighted quality score in `[-1, 1]`.
    pub q: T,
    pub window: usize,
}

fn check_metric_inputs<T: Real>(a: &Image<T>, b: &Image<T>, f: &Image<T>) -> Result<()> {
    if !a.same_dims(b) || !a.same_dims(f) {
        return Err(Error::Dimension(format!(
            "metric inputs differ: a {}x{}, b {}x{}, f {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height(),
            f.width(),
            f.height()
        )));
    }
    Ok(())
}

fn check_window<T: Real>(a: &Image<T>, window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::Argument("metric window must be at least 2".into()));
    }
    if window > a.width() || window > a.height() {
        return Err(Error::Argument(format!(
            "window {} larger than the {}x{} image",
            window,
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

struct WindowStats<T> {
    mean_x: T,
    mean_y: T,
    var_x: T,
    var_y: T,
    cov: T,
}

fn window_stats<T: Real>(
    x: &Image<T>,
    y: &Image<T>,
    x0: usize,
    y0: usize,
    window: usize,
) -> WindowStats<T> {
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for dy in 0..window {
        for dx in 0..window {
            let a = x.get(x0 + dx, y0 + dy);
            let b = y.get(x0 + dx, y0 + dy);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let n = T::from_usize(window * window).unwrap();
    let mean_x = sx / n;
    let mean_y = sy / n;
    WindowStats {
        mean_x,
        mean_y,
        var_x: sxx / n - mean_x * mean_x,
        var_y: syy / n - mean_y * mean_y,
        cov: sxy / n - mean_x * mean_y,
    }
}

/// Universal quality index of one window pair, with the degenerate cases
/// pinned: constant and equal windows score 1, any other vanishing
/// denominator scores 0.
fn uqi<T: Real>(s: &WindowStats<T>) -> T {
    let var_eps = T::from_f64(VAR_EPS).unwrap();
    let mean_eps = T::from_f64(MEAN_EPS).unwrap();
    let var_sum = s.var_x + s.var_y;
    if var_sum.abs() <= var_eps {
        return if (s.mean_x - s.mean_y).abs() <= mean_eps {
            T::one()
        } else {
            T::zero()
        };
    }
    let mean_term = s.mean_x * s.mean_x + s.mean_y * s.mean_y;
    let den = var_sum * mean_term;
    if den == T::zero() {
        return T::zero();
    }
    let four = T::from_f64(4.0).unwrap();
    four * (s.cov * (s.mean_x * s.mean_y)) / den
}

/// Mean over all sliding windows of the average of `q(a, f)` and `q(b, f)`.
pub fn q0_fusion<T: Real>(a: &Image<T>, b: &Image<T>, f: &Image<T>, window: usize) -> Result<T> {
    check_metric_inputs(a, b, f)?;
    check_window(a, window)?;
    let half = T::from_f64(0.5).unwrap();
    let mut sum = T::zero();
    let mut count = T::zero();
    for y0 in 0..=a.height() - window {
        for x0 in 0..=a.width() - window {
            let qaf = uqi(&window_stats(a, f, x0, y0, window));
            let qbf = uqi(&window_stats(b, f, x0, y0, window));
            sum += half * (qaf + qbf);
            count += T::one();
        }
    }
    Ok(sum / count)
}

/// Saliency-weighted variant: each window mixes `q(a, f)` and `q(b, f)` by
/// the share of local variance the first source carries.
pub fn piella_q<T: Real>(a: &Image<T>, b: &Image<T>, f: &Image<T>, window: usize) -> Result<T> {
    check_metric_inputs(a, b, f)?;
    check_window(a, window)?;
    let var_eps = T::from_f64(VAR_EPS).unwrap();
    let half = T::from_f64(0.5).unwrap();
    let mut sum = T::zero();
    let mut count = T::zero();
    for y0 in 0..=a.height() - window {
        for x0 in 0..=a.width() - window {
            let saf = window_stats(a, f, x0, y0, window);
            let sbf = window_stats(b, f, x0, y0, window);
            let qaf = uqi(&saf);
            let qbf = uqi(&sbf);
            let sal_a = saf.var_x.max(T::zero());
            let sal_b = sbf.var_x.max(T::zero());
            let weight = if sal_a + sal_b <= var_eps {
                half
            } else {
                sal_a / (sal_a + sal_b)
            };
            sum += weight * qaf + (T::one() - weight) * qbf;
            count += T::one();
        }
    }
    Ok(sum / count)
}

/// Per-pixel gradient magnitude and orientation from 3x3 Sobel filters with
/// edge-repeated symmetric boundary handling. Orientation is folded into
/// (-pi/2, pi/2].
fn sobel<T: Real>(img: &Image<T>) -> (Vec<T>, Vec<T>) {
    let (w, h) = img.dims();
    let mut mag = Vec::with_capacity(w * h);
    let mut ang = Vec::with_capacity(w * h);
    let two = T::from_f64(2.0).unwrap();
    let pi = T::from_f64(std::f64::consts::PI).unwrap();
    let half_pi = T::from_f64(std::f64::consts::FRAC_PI_2).unwrap();
    let at = |x: isize, y: isize| img.get(reflect_index(x, w), reflect_index(y, h));
    for y in 0..h as isize {
        for x in 0..w as isize {
            let tl = at(x - 1, y - 1);
            let tc = at(x, y - 1);
            let tr = at(x + 1, y - 1);
            let ml = at(x - 1, y);
            let mr = at(x + 1, y);
            let bl = at(x - 1, y + 1);
            let bc = at(x, y + 1);
            let br = at(x + 1, y + 1);
            let gx = (tr + two * mr + br) - (tl + two * ml + bl);
            let gy = (bl + two * bc + br) - (tl + two * tc + tr);
            mag.push((gx * gx + gy * gy).sqrt());
            let mut angle = gy.atan2(gx);
            if angle > half_pi {
                angle -= pi;
            } else if angle <= -half_pi {
                angle += pi;
            }
            ang.push(angle);
        }
    }
    (mag, ang)
}

fn sigmoid_pair<T: Real>(strength_ratio: T, orient_match: T) -> T {
    let gg = T::from_f64(PE_STRENGTH_GAMMA).unwrap();
    let kg = T::from_f64(PE_STRENGTH_KAPPA).unwrap();
    let sg = T::from_f64(PE_STRENGTH_SIGMA).unwrap();
    let ga = T::from_f64(PE_ORIENT_GAMMA).unwrap();
    let ka = T::from_f64(PE_ORIENT_KAPPA).unwrap();
    let sa = T::from_f64(PE_ORIENT_SIGMA).unwrap();
    let qg = gg / (T::one() + (kg * (strength_ratio - sg)).exp());
    let qa = ga / (T::one() + (ka * (orient_match - sa)).exp());
    qg * qa
}

fn preservation<T: Real>(g_src: T, a_src: T, g_f: T, a_f: T) -> T {
    let strength = if g_src == T::zero() && g_f == T::zero() {
        T::one()
    } else if g_src == T::zero() || g_f == T::zero() {
        T::zero()
    } else {
        (g_f / g_src).min(g_src / g_f)
    };
    let half_pi = T::from_f64(std::f64::consts::FRAC_PI_2).unwrap();
    let pi = T::from_f64(std::f64::consts::PI).unwrap();
    let mut delta = (a_src - a_f).abs();
    if delta > half_pi {
        delta = pi - delta;
    }
    let orient = T::one() - delta / half_pi;
    sigmoid_pair(strength, orient)
}

/// Gradient-preservation score: how much of each source's edge strength and
/// orientation survives into the fused image, weighted by source edge
/// strength. Inputs with no edges at all score as perfectly preserved.
pub fn petrovic_pe<T: Real>(a: &Image<T>, b: &Image<T>, f: &Image<T>) -> Result<T> {
    check_metric_inputs(a, b, f)?;
    if a.width() < 3 || a.height() < 3 {
        return Err(Error::Argument("gradient metric needs at least 3x3 inputs".into()));
    }
    let (ga, aa) = sobel(a);
    let (gb, ab) = sobel(b);
    let (gf, af) = sobel(f);
    let mut num = T::zero();
    let mut den = T::zero();
    for i in 0..ga.len() {
        let qaf = preservation(ga[i], aa[i], gf[i], af[i]);
        let qbf = preservation(gb[i], ab[i], gf[i], af[i]);
        num += qaf * ga[i] + qbf * gb[i];
        den += ga[i] + gb[i];
    }
    if den <= T::zero() {
        return Ok(sigmoid_pair(T::one(), T::one()));
    }
    Ok(num / den)
}

/// All three scores against the two sources.
pub fn metrics_report<T: Real>(
    a: &Image<T>,
    b: &Image<T>,
    f: &Image<T>,
    window: usize,
) -> Result<MetricsReport<T>> {
    Ok(MetricsReport {
        pe: petrovic_pe(a, b, f)?,
        q0: q0_fusion(a, b, f, window)?,
        q: piella_q(a, b, f, window)?,
        window,
    })
}
