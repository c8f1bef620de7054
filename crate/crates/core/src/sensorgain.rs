//! PCA estimation of per-patch sensor gains.
//!
//! Each pair of co-located patches is treated as two samples of an n-variate
//! random variable; the principal eigenvector of their 2x2 second-moment
//! matrix (computed on zero-meaned samples) gives the relative gain of the
//! two sensors, normalized so the squared gains sum to one.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::GainMap;
use crate::Real;

/// Gain pair for one patch: the componentwise-absolute principal eigenvector
/// of the zero-meaned 2x2 second-moment matrix, unit-normalized.
///
/// Degenerate cases: a matrix with trace below 1e-12 (both patches flat)
/// returns the symmetric pair, and a patch with no variance at all gets
/// gain zero while the other sensor takes everything.
pub fn estimate_patch_gains<T: Real>(p1: &[T], p2: &[T]) -> Result<(T, T)> {
    if p1.len() != p2.len() {
        return Err(Error::Argument(format!(
            "patch lengths differ: {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    if p1.len() < 2 {
        return Err(Error::Argument("patches need at least 2 samples".into()));
    }
    let n = T::from_usize(p1.len()).unwrap();
    let m1 = p1.iter().copied().sum::<T>() / n;
    let m2 = p2.iter().copied().sum::<T>() / n;
    let mut c11 = T::zero();
    let mut c22 = T::zero();
    let mut c12 = T::zero();
    for (&a, &b) in p1.iter().zip(p2) {
        let da = a - m1;
        let db = b - m2;
        c11 += da * da;
        c22 += db * db;
        c12 += da * db;
    }

    let sym = T::from_f64(std::f64::consts::FRAC_1_SQRT_2).unwrap();
    if c11 + c22 < T::from_f64(1e-12).unwrap() {
        return Ok((sym, sym));
    }

    // Principal eigenvector of [[c11, c12], [c12, c22]].
    let half = T::from_f64(0.5).unwrap();
    let mean = (c11 + c22) * half;
    let diff = (c11 - c22) * half;
    let top = mean + (diff * diff + c12 * c12).sqrt();
    // Two algebraically equivalent eigenvector expressions; pick the better
    // conditioned one.
    let (v1, v2) = {
        let a = (top - c22, c12);
        let b = (c12, top - c11);
        if (a.0 * a.0 + a.1 * a.1) >= (b.0 * b.0 + b.1 * b.1) {
            a
        } else {
            b
        }
    };
    let norm = (v1 * v1 + v2 * v2).sqrt();
    if norm <= T::zero() {
        return Ok((sym, sym));
    }
    Ok((v1.abs() / norm, v2.abs() / norm))
}

fn patch_ranges(extent: usize, patch: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < extent {
        let len = patch.min(extent - start);
        out.push((start, len));
        start += len;
    }
    out
}

/// Per-patch gain pairs plus the column and row tilings that produced them.
type GainGrid<T> = (Vec<(T, T)>, Vec<(usize, usize)>, Vec<(usize, usize)>);

fn gain_grid<T: Real>(y1: &Image<T>, y2: &Image<T>, patch_size: usize) -> Result<GainGrid<T>> {
    if !y1.same_dims(y2) {
        return Err(Error::Dimension(format!(
            "inputs differ: {}x{} vs {}x{}",
            y1.width(),
            y1.height(),
            y2.width(),
            y2.height()
        )));
    }
    if patch_size < 2 {
        return Err(Error::Argument("patch size must be at least 2".into()));
    }
    let cols = patch_ranges(y1.width(), patch_size);
    let rows = patch_ranges(y1.height(), patch_size);
    let mut grid = Vec::with_capacity(cols.len() * rows.len());
    let mut p1 = Vec::with_capacity(patch_size * patch_size);
    let mut p2 = Vec::with_capacity(patch_size * patch_size);
    let sym = T::from_f64(std::f64::consts::FRAC_1_SQRT_2).unwrap();
    for &(ry, rh) in &rows {
        for &(cx, cw) in &cols {
            p1.clear();
            p2.clear();
            for y in ry..ry + rh {
                for x in cx..cx + cw {
                    p1.push(y1.get(x, y));
                    p2.push(y2.get(x, y));
                }
            }
            if p1.len() < 2 {
                // A single-pixel corner patch carries no direction.
                grid.push((sym, sym));
            } else {
                grid.push(estimate_patch_gains(&p1, &p2)?);
            }
        }
    }
    Ok((grid, cols, rows))
}

fn broadcast<T: Real>(
    grid: &[(T, T)],
    cols: &[(usize, usize)],
    rows: &[(usize, usize)],
    width: usize,
    height: usize,
) -> Result<GainMap<T>> {
    let mut b1 = Image::zeros(width, height);
    let mut b2 = Image::zeros(width, height);
    for (j, &(ry, rh)) in rows.iter().enumerate() {
        for (i, &(cx, cw)) in cols.iter().enumerate() {
            let (g1, g2) = grid[j * cols.len() + i];
            for y in ry..ry + rh {
                for x in cx..cx + cw {
                    b1.set(x, y, g1);
                    b2.set(x, y, g2);
                }
            }
        }
    }
    GainMap::new(b1, b2)
}

/// Per-patch gains broadcast to every pixel of the patch. Edge patches may
/// be smaller than `patch_size` so the tiling covers each pixel exactly once.
pub fn build_gain_map<T: Real>(
    y1: &Image<T>,
    y2: &Image<T>,
    patch_size: usize,
) -> Result<GainMap<T>> {
    let (grid, cols, rows) = gain_grid(y1, y2, patch_size)?;
    broadcast(&grid, &cols, &rows, y1.width(), y1.height())
}

/// Like [`build_gain_map`] but with a 3x3 mean filter over the patch grid
/// (renormalized per patch) to soften blocking between patches.
pub fn build_gain_map_smoothed<T: Real>(
    y1: &Image<T>,
    y2: &Image<T>,
    patch_size: usize,
) -> Result<GainMap<T>> {
    let (grid, cols, rows) = gain_grid(y1, y2, patch_size)?;
    let (gw, gh) = (cols.len(), rows.len());
    let mut smoothed = Vec::with_capacity(grid.len());
    for j in 0..gh {
        for i in 0..gw {
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            let mut count = T::zero();
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let jj = j as i64 + dj;
                    let ii = i as i64 + di;
                    if jj < 0 || ii < 0 || jj >= gh as i64 || ii >= gw as i64 {
                        continue;
                    }
                    let (g1, g2) = grid[jj as usize * gw + ii as usize];
                    s1 += g1;
                    s2 += g2;
                    count += T::one();
                }
            }
            let norm = ((s1 / count).powi(2) + (s2 / count).powi(2)).sqrt();
            smoothed.push((s1 / count / norm, s2 / count / norm));
        }
    }
    broadcast(&smoothed, &cols, &rows, y1.width(), y1.height())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{conv2_apply, Psf};

    const SYM: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn rng_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    /// Independent route to the principal direction: long power iteration on
    /// the explicit 2x2 matrix.
    fn power_iteration_gains(p1: &[f64], p2: &[f64]) -> (f64, f64) {
        let n = p1.len() as f64;
        let m1 = p1.iter().sum::<f64>() / n;
        let m2 = p2.iter().sum::<f64>() / n;
        let (mut c11, mut c22, mut c12) = (0.0, 0.0, 0.0);
        for (a, b) in p1.iter().zip(p2) {
            c11 += (a - m1) * (a - m1);
            c22 += (b - m2) * (b - m2);
            c12 += (a - m1) * (b - m2);
        }
        let (mut v1, mut v2) = (0.6, 0.8);
        for _ in 0..20_000 {
            let (w1, w2) = (c11 * v1 + c12 * v2, c12 * v1 + c22 * v2);
            let norm = (w1 * w1 + w2 * w2).sqrt();
            if norm == 0.0 {
                break;
            }
            v1 = w1 / norm;
            v2 = w2 / norm;
        }
        (v1.abs(), v2.abs())
    }

    #[test]
    fn identical_patches_split_evenly() {
        let p = rng_vec(64, 5);
        let (b1, b2) = estimate_patch_gains(&p, &p).unwrap();
        assert!((b1 - SYM).abs() < 1e-12);
        assert!((b2 - SYM).abs() < 1e-12);
    }

    #[test]
    fn doubled_patch_tilts_two_to_one() {
        let p1 = vec![1.0, 0.0, 1.0, 0.0];
        let p2 = vec![2.0, 0.0, 2.0, 0.0];
        let (b1, b2) = estimate_patch_gains(&p1, &p2).unwrap();
        assert!((b1 - 1.0 / 5f64.sqrt()).abs() < 1e-10);
        assert!((b2 - 2.0 / 5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn flat_second_patch_gets_zero_gain() {
        let p1 = rng_vec(32, 9);
        let p2 = vec![0.25; 32];
        let (b1, b2) = estimate_patch_gains(&p1, &p2).unwrap();
        assert!((b1 - 1.0).abs() < 1e-12);
        assert!(b2.abs() < 1e-12);
    }

    #[test]
    fn gains_match_power_iteration_oracle() {
        for seed in 0..20u64 {
            let p1 = rng_vec(48, 2 * seed + 1);
            let p2: Vec<f64> = rng_vec(48, 3 * seed + 2)
                .iter()
                .zip(&p1)
                .map(|(r, a)| 0.5 * a + 0.8 * r)
                .collect();
            let (b1, b2) = estimate_patch_gains(&p1, &p2).unwrap();
            let (o1, o2) = power_iteration_gains(&p1, &p2);
            assert!((b1 - o1).abs() < 1e-10, "seed {}", seed);
            assert!((b2 - o2).abs() < 1e-10, "seed {}", seed);
        }
    }

    #[test]
    fn swap_symmetry() {
        let p1 = rng_vec(40, 1);
        let p2 = rng_vec(40, 2);
        let (a1, a2) = estimate_patch_gains(&p1, &p2).unwrap();
        let (b2, b1) = estimate_patch_gains(&p2, &p1).unwrap();
        assert!((a1 - b1).abs() < 1e-12);
        assert!((a2 - b2).abs() < 1e-12);
    }

    #[test]
    fn scaling_one_sensor_never_lowers_its_share() {
        let base1 = rng_vec(64, 13);
        let base2 = rng_vec(64, 14);
        let mut prev_ratio = 0.0;
        for k in 0..6 {
            let c = 1.0 + 0.5 * k as f64;
            let scaled: Vec<f64> = base1.iter().map(|v| c * v).collect();
            let (b1, b2) = estimate_patch_gains(&scaled, &base2).unwrap();
            let ratio = b1 / b2;
            assert!(ratio >= prev_ratio - 1e-9, "c = {}: {} < {}", c, ratio, prev_ratio);
            prev_ratio = ratio;
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(estimate_patch_gains(&[1.0, 2.0], &[1.0]).is_err());
        assert!(estimate_patch_gains(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn identical_images_give_symmetric_map() {
        let img = Image::new(20, 20, rng_vec(400, 3)).unwrap();
        let map = build_gain_map(&img, &img, 8).unwrap();
        for i in 0..400 {
            assert!((map.beta1().data()[i] - SYM).abs() < 1e-12);
            assert!((map.beta2().data()[i] - SYM).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_images_fall_back_to_symmetric() {
        let a = Image::constant(17, 9, 0.3f64);
        let b = Image::constant(17, 9, 0.8f64);
        let map = build_gain_map(&a, &b, 4).unwrap();
        for i in 0..17 * 9 {
            assert!((map.beta1().data()[i] - SYM).abs() < 1e-12);
        }
    }

    #[test]
    fn sharp_side_wins_over_blurred_side() {
        // y1 sharp on the left, blurred on the right; y2 reversed.
        let texture = Image::new(64, 32, rng_vec(64 * 32, 77)).unwrap();
        let blurred = conv2_apply(&texture, &Psf::gaussian(2.0)).unwrap();
        let mut y1 = texture.clone();
        let mut y2 = texture.clone();
        for y in 0..32 {
            for x in 0..64 {
                if x >= 32 {
                    y1.set(x, y, blurred.get(x, y));
                } else {
                    y2.set(x, y, blurred.get(x, y));
                }
            }
        }
        let map = build_gain_map(&y1, &y2, 16).unwrap();
        for y in (0..32).step_by(16) {
            for x in (0..64).step_by(16) {
                let b1 = map.beta1().get(x + 8, y + 8);
                let b2 = map.beta2().get(x + 8, y + 8);
                if x < 32 {
                    assert!(b1 > b2, "left patch ({}, {}): {} <= {}", x, y, b1, b2);
                } else {
                    assert!(b2 > b1, "right patch ({}, {}): {} <= {}", x, y, b2, b1);
                }
            }
        }
    }

    #[test]
    fn normalization_holds_everywhere_with_edge_patches() {
        let y1 = Image::new(37, 23, rng_vec(37 * 23, 4)).unwrap();
        let y2 = Image::new(37, 23, rng_vec(37 * 23, 5)).unwrap();
        for map in [
            build_gain_map(&y1, &y2, 16).unwrap(),
            build_gain_map_smoothed(&y1, &y2, 16).unwrap(),
        ] {
            for (&a, &b) in map.beta1().data().iter().zip(map.beta2().data()) {
                assert!((a * a + b * b - 1.0).abs() < 1e-12);
                assert!(a >= 0.0 && b >= 0.0);
            }
        }
    }

    #[test]
    fn patch_size_below_two_rejected() {
        let img = Image::<f64>::zeros(8, 8);
        assert!(build_gain_map(&img, &img, 1).is_err());
    }
}
