//! Cost evaluation and the forward-backward splitting solver.
//!
//! The fused image's wavelet coefficients minimize
//!
//! ```text
//!   J(x) = 1/2 ||y1 - A1 x||^2 + 1/2 ||y2 - A2 x||^2 + lambda psi_B(x)
//! ```
//!
//! where `A_i` is one sensor's forward operator and `psi_B` is the
//! generalized minimax concave penalty `||x||_1 - S_B(x)`, built from the
//! generalized Huber function `S_B` (an infimal convolution of the l1 norm
//! with a quadratic). With the coupling `B^T B = (gamma / lambda)
//! (A1^T A1 + A2^T A2)`, `gamma` in `[0, 1]`, the penalty is non-convex but
//! the total cost stays convex, and the minimization is solved as a
//! saddle-point problem in `(x, v)` by forward-backward splitting with soft
//! thresholding. `gamma = 0` collapses the penalty to the plain l1 norm and
//! the iteration to ISTA.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::{operator_norm_sq, ForwardOp};
use crate::wavelet::{self, WaveletPyramid};
use crate::Real;

/// Power-iteration count used when estimating operator norms for step sizes.
const NORM_POWER_ITERS: usize = 50;

/// Parameters of one solver run.
#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// Regularization weight, strictly positive.
    pub lambda: T,
    /// Convexity parameter of the penalty, in `[0, 1]`. Zero gives the
    /// plain l1 penalty; the solver itself requires `gamma < 1`.
    pub gamma: T,
    /// Explicit step size; `None` selects `1.9 / rho` automatically.
    pub mu: Option<T>,
    /// Iteration budget.
    pub max_iters: usize,
    /// Relative-change stopping threshold (0 disables early stopping).
    pub tol: T,
    /// Wavelet decomposition depth; must match the operators.
    pub levels: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::from_f64(0.005).unwrap(),
            gamma: T::from_f64(0.8).unwrap(),
            mu: None,
            max_iters: 300,
            tol: T::from_f64(1e-6).unwrap(),
            levels: 4,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.gamma < T::zero() || self.gamma > T::one() || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.tol < T::zero() || !self.tol.is_finite() {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Shrinkage `sign(x) * max(|x| - threshold, 0)`.
pub fn soft_threshold<T: Real>(x: T, threshold: T) -> Result<T> {
    if threshold < T::zero() {
        return Err(Error::Argument(format!(
            "soft threshold must be nonnegative, got {}",
            threshold
        )));
    }
    Ok(soft(x, threshold))
}

#[inline]
fn soft<T: Real>(x: T, threshold: T) -> T {
    let m = x.abs() - threshold;
    if m > T::zero() {
        m * x.signum()
    } else {
        T::zero()
    }
}

fn soft_slice<T: Real>(src: &[T], threshold: T) -> Vec<T> {
    src.iter().map(|&v| soft(v, threshold)).collect()
}

fn l1_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).sum()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// How the matrix `B` of the generalized Huber function is realized.
pub enum BSpec<'a, T: Real> {
    /// `B = b * I`; the generalized Huber reduces to the classic scalar
    /// Huber function applied componentwise.
    Scalar(T),
    /// `B^T B = (gamma / lambda) (A1^T A1 + A2^T A2)`, the coupling that
    /// keeps the fusion cost convex. The coefficient vector must have the
    /// operators' padded layout.
    Coupled {
        gamma: T,
        lambda: T,
        op1: &'a ForwardOp<T>,
        op2: &'a ForwardOp<T>,
    },
}

impl<'a, T: Real> BSpec<'a, T> {
    fn template(&self) -> Option<WaveletPyramid<T>> {
        match self {
            BSpec::Scalar(_) => None,
            BSpec::Coupled { op1, .. } => Some(op1.empty_pyramid()),
        }
    }

    fn lipschitz(&self) -> T {
        match self {
            BSpec::Scalar(b) => *b * *b,
            BSpec::Coupled { gamma, lambda, op1, op2 } => {
                *gamma / *lambda * operator_norm_sq(op1, op2, 150)
            }
        }
    }

    /// `B^T B` applied to a vector.
    fn btb_apply(&self, d: &[T], template: &Option<WaveletPyramid<T>>) -> Result<Vec<T>> {
        match self {
            BSpec::Scalar(b) => Ok(d.iter().map(|&v| *b * *b * v).collect()),
            BSpec::Coupled { gamma, lambda, op1, op2 } => {
                let template = template.as_ref().expect("coupled spec has a template");
                let p = template.with_coeffs(d.to_vec())?;
                let m1 = op1.normal_apply(&p)?;
                let m2 = op2.normal_apply(&p)?;
                let s = *gamma / *lambda;
                Ok(m1
                    .coeffs()
                    .iter()
                    .zip(m2.coeffs())
                    .map(|(&a, &b)| s * (a + b))
                    .collect())
            }
        }
    }
}

/// Inner-minimization controls for [`generalized_huber`].
#[derive(Debug, Clone)]
pub struct HuberOptions<T> {
    /// Fixed-point residual tolerance on the auxiliary variable.
    pub tol: T,
    /// Iteration budget before reporting a diagnostic failure.
    pub max_iters: usize,
}

impl<T: Real> Default for HuberOptions<T> {
    fn default() -> Self {
        Self { tol: T::from_f64(1e-10).unwrap(), max_iters: 200_000 }
    }
}

/// Generalized Huber value `S_B(x) = inf_v ||v||_1 + 1/2 ||B(x - v)||^2`,
/// computed by proximal gradient descent on `v`. Intended for diagnostics
/// and small instances; for scalar `B = b` it equals the classic Huber
/// function (`b^2 x^2 / 2` below the knee `1/b^2`, `|x| - 1/(2 b^2)` above).
pub fn generalized_huber<T: Real>(x: &[T], b: &BSpec<T>, opts: &HuberOptions<T>) -> Result<T> {
    generalized_huber_full(x, b, opts, None).map(|(value, _)| value)
}

/// As [`generalized_huber`] but returns the minimizing `v` as well and
/// accepts a warm start for it.
pub fn generalized_huber_full<T: Real>(
    x: &[T],
    b: &BSpec<T>,
    opts: &HuberOptions<T>,
    warm: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    let template = b.template();
    if let Some(ref t) = template {
        if x.len() != t.coeffs().len() {
            return Err(Error::Dimension(format!(
                "coefficient vector length {} does not match the operators' layout {}",
                x.len(),
                t.coeffs().len()
            )));
        }
    }
    let lip = b.lipschitz();
    if lip <= T::from_f64(1e-300).unwrap() {
        // B = 0: the infimum is attained at v = 0 with value 0.
        return Ok((T::zero(), vec![T::zero(); x.len()]));
    }
    let step = T::one() / lip;
    let mut v: Vec<T> = match warm {
        Some(w) if w.len() == x.len() => w.to_vec(),
        _ => x.to_vec(),
    };
    let mut residual = T::infinity();
    for _ in 0..opts.max_iters {
        let d: Vec<T> = v.iter().zip(x).map(|(&vi, &xi)| vi - xi).collect();
        let m = b.btb_apply(&d, &template)?;
        let mut max_change = T::zero();
        let mut v_inf = T::zero();
        for i in 0..v.len() {
            let next = soft(v[i] - step * m[i], step);
            max_change = max_change.max((next - v[i]).abs());
            v_inf = v_inf.max(next.abs());
            v[i] = next;
        }
        residual = max_change;
        if max_change <= opts.tol * T::one().max(v_inf) {
            let d: Vec<T> = v.iter().zip(x).map(|(&vi, &xi)| vi - xi).collect();
            let m = b.btb_apply(&d, &template)?;
            let value = l1_norm(&v) + T::from_f64(0.5).unwrap() * dot(&d, &m);
            return Ok((value, v));
        }
    }
    Err(Error::InnerLoop {
        iters: opts.max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// GMC penalty `psi_B(x) = ||x||_1 - S_B(x)`; always in `[0, ||x||_1]`.
pub fn gmc_penalty<T: Real>(x: &[T], b: &BSpec<T>, opts: &HuberOptions<T>) -> Result<T> {
    let l1 = l1_norm(x);
    let huber = generalized_huber(x, b, opts)?;
    Ok((l1 - huber).max(T::zero()).min(l1))
}

/// Cost breakdown returned by [`cost_value`].
#[derive(Debug, Clone)]
pub struct CostParts<T> {
    pub data1: T,
    pub data2: T,
    pub penalty: T,
    pub total: T,
    /// True when the penalty column holds `lambda ||x||_1`, which upper
    /// bounds the GMC penalty. Exact evaluation runs the inner minimization
    /// and is only affordable on small instances.
    pub penalty_is_l1_bound: bool,
}

/// Evaluates the fusion cost at `x`. With `exact_penalty` the GMC penalty is
/// computed through the inner minimization; otherwise `lambda ||x||_1` is
/// reported (exact for `gamma = 0`, an upper bound otherwise).
pub fn cost_value<T: Real>(
    x: &WaveletPyramid<T>,
    y1: &Image<T>,
    y2: &Image<T>,
    op1: &ForwardOp<T>,
    op2: &ForwardOp<T>,
    cfg: &SolverConfig<T>,
    exact_penalty: bool,
) -> Result<CostParts<T>> {
    cfg.validate()?;
    let half = T::from_f64(0.5).unwrap();
    let r1 = op1.apply(x)?.sub(y1)?;
    let r2 = op2.apply(x)?.sub(y2)?;
    let data1 = half * r1.norm_l2_sq();
    let data2 = half * r2.norm_l2_sq();
    let (penalty, is_bound) = if exact_penalty && cfg.gamma > T::zero() {
        let b = BSpec::Coupled { gamma: cfg.gamma, lambda: cfg.lambda, op1, op2 };
        let psi = gmc_penalty(x.coeffs(), &b, &HuberOptions::default())?;
        (cfg.lambda * psi, false)
    } else {
        (cfg.lambda * l1_norm(x.coeffs()), cfg.gamma > T::zero())
    };
    Ok(CostParts {
        data1,
        data2,
        penalty,
        total: data1 + data2 + penalty,
        penalty_is_l1_bound: is_bound,
    })
}

/// Automatic step size: `rho = max(1, gamma / (1 - gamma)) * max(1, |A|^2)`
/// and `mu = 1.9 / rho`, strictly inside the stability region `(0, 2 / rho)`.
pub fn step_size_auto<T: Real>(op1: &ForwardOp<T>, op2: &ForwardOp<T>, gamma: T) -> Result<(T, T)> {
    if gamma < T::zero() || gamma >= T::one() {
        return Err(Error::Argument(format!(
            "automatic step size needs gamma in [0, 1), got {}",
            gamma
        )));
    }
    let rho_penalty = T::one().max(gamma / (T::one() - gamma));
    let norm = operator_norm_sq(op1, op2, NORM_POWER_ITERS);
    let rho = rho_penalty * T::one().max(norm);
    Ok((T::from_f64(1.9).unwrap() / rho, rho))
}

/// Primal and auxiliary coefficient vectors of the saddle-point iteration.
#[derive(Debug, Clone)]
pub struct SolverState<T> {
    pub x: WaveletPyramid<T>,
    pub v: WaveletPyramid<T>,
}

/// Outcome of a solver run.
#[derive(Debug, Clone)]
pub struct FusionResult<T> {
    /// Synthesized image from the final coefficients, clamped to `[0, 1]`.
    pub fused: Image<T>,
    pub iters_used: usize,
    /// Cost at the initial point and after each iteration
    /// (`iters_used + 1` entries). The penalty column uses the l1 upper
    /// bound when `cost_is_l1_bound` is set.
    pub cost_trace: Vec<T>,
    /// Relative iterate change at the last step.
    pub final_residual: T,
    /// Step size actually used.
    pub mu: T,
    /// Stability constant the step size was checked against.
    pub rho: T,
    pub cost_is_l1_bound: bool,
    pub state: SolverState<T>,
}

/// Per-iteration snapshot passed to the observer of [`solve_observed`].
pub struct IterView<'a, T> {
    pub iter: usize,
    /// Gradient-step point the x-update thresholds.
    pub w: &'a [T],
    /// Gradient-step point the v-update thresholds.
    pub u: &'a [T],
    pub x_next: &'a [T],
    pub v_next: &'a [T],
    pub residual: T,
}

/// Runs the saddle-point forward-backward iteration. Starting from
/// `x0 = v0 = W^T (beta1 y1 + beta2 y2)`, each step takes an explicit
/// gradient step on the smooth coupling and soft-thresholds both variables:
///
/// ```text
///   w = x - mu [A1^T (A1 x - y1) + A2^T (A2 x - y2) + gamma M (v - x)]
///   u = v - mu gamma M (v - x)           with  M = A1^T A1 + A2^T A2
///   x+ = soft(w, mu lambda),  v+ = soft(u, mu lambda)
/// ```
///
/// Stops at `max_iters` or when the relative iterate change drops below
/// `tol`.
pub fn solve<T: Real>(
    y1: &Image<T>,
    y2: &Image<T>,
    op1: &ForwardOp<T>,
    op2: &ForwardOp<T>,
    cfg: &SolverConfig<T>,
) -> Result<FusionResult<T>> {
    solve_observed(y1, y2, op1, op2, cfg, |_| {})
}

/// [`solve`] with a per-iteration observer, used by diagnostics and tests.
pub fn solve_observed<T: Real, F: FnMut(IterView<'_, T>)>(
    y1: &Image<T>,
    y2: &Image<T>,
    op1: &ForwardOp<T>,
    op2: &ForwardOp<T>,
    cfg: &SolverConfig<T>,
    mut observer: F,
) -> Result<FusionResult<T>> {
    cfg.validate()?;
    if !y1.same_dims(y2) {
        return Err(Error::Dimension(format!(
            "source images differ: {}x{} vs {}x{}",
            y1.width(),
            y1.height(),
            y2.width(),
            y2.height()
        )));
    }
    if op1.image_dims() != y1.dims() || op2.image_dims() != y2.dims() {
        return Err(Error::Dimension("operators do not match the source images".into()));
    }
    if op1.levels() != cfg.levels || op2.levels() != cfg.levels {
        return Err(Error::Config(format!(
            "config levels {} do not match operators ({}, {})",
            cfg.levels,
            op1.levels(),
            op2.levels()
        )));
    }
    let gamma = cfg.gamma;
    let one = T::one();
    if cfg.mu.is_none() && gamma == one {
        return Err(Error::Config(
            "gamma = 1 leaves no admissible step size; the automatic rule needs gamma < 1".into(),
        ));
    }
    let rho_penalty = if gamma == one {
        T::infinity()
    } else {
        one.max(gamma / (one - gamma))
    };
    let norm = operator_norm_sq(op1, op2, NORM_POWER_ITERS);
    let rho = rho_penalty * one.max(norm);
    let mu = match cfg.mu {
        Some(m) => m,
        None => T::from_f64(1.9).unwrap() / rho,
    };
    if !(mu > T::zero()) || !(mu < T::from_f64(2.0).unwrap() / rho) {
        return Err(Error::Config(format!(
            "step size {} outside the stability region (0, {})",
            mu,
            T::from_f64(2.0).unwrap() / rho
        )));
    }

    let threshold = mu * cfg.lambda;
    let half = T::from_f64(0.5).unwrap();

    // Warm start at the gain-weighted average of the inputs.
    let weighted = y1.hadamard(op1.gain())?.add(&y2.hadamard(op2.gain())?)?;
    let mut x = wavelet::dwt2_inverse_adjoint(&weighted, cfg.levels)?;
    let mut v = x.clone();

    let mut cost_trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut iters_used = 0;
    let mut final_residual = T::infinity();
    let tiny = T::from_f64(1e-12).unwrap();

    for iter in 0..cfg.max_iters {
        let r1 = op1.apply(&x)?.sub(y1)?;
        let r2 = op2.apply(&x)?.sub(y2)?;
        cost_trace.push(
            half * (r1.norm_l2_sq() + r2.norm_l2_sq()) + cfg.lambda * l1_norm(x.coeffs()),
        );

        let g1 = op1.adjoint(&r1)?;
        let g2 = op2.adjoint(&r2)?;
        let n = x.coeffs().len();
        let mut w = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        if gamma > T::zero() {
            let d: Vec<T> = v
                .coeffs()
                .iter()
                .zip(x.coeffs())
                .map(|(&vi, &xi)| vi - xi)
                .collect();
            let d = x.with_coeffs(d)?;
            let t1 = op1.normal_apply(&d)?;
            let t2 = op2.normal_apply(&d)?;
            for i in 0..n {
                let grad = g1.coeffs()[i] + g2.coeffs()[i];
                let coupling = t1.coeffs()[i] + t2.coeffs()[i];
                w.push(x.coeffs()[i] - mu * (grad + gamma * coupling));
                u.push(v.coeffs()[i] - mu * gamma * coupling);
            }
        } else {
            for i in 0..n {
                let grad = g1.coeffs()[i] + g2.coeffs()[i];
                w.push(x.coeffs()[i] - mu * grad);
                u.push(v.coeffs()[i]);
            }
        }
        let x_next = soft_slice(&w, threshold);
        let v_next = soft_slice(&u, threshold);

        let mut diff_sq = T::zero();
        let mut x_norm_sq = T::zero();
        for (&xn, &xc) in x_next.iter().zip(x.coeffs()) {
            let d = xn - xc;
            diff_sq += d * d;
            x_norm_sq += xc * xc;
        }
        if !diff_sq.is_finite() || !x_norm_sq.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite iterate at iteration {}",
                iter
            )));
        }
        let residual = diff_sq.sqrt() / x_norm_sq.sqrt().max(tiny);
        observer(IterView {
            iter,
            w: &w,
            u: &u,
            x_next: &x_next,
            v_next: &v_next,
            residual,
        });

        x = x.with_coeffs(x_next)?;
        v = v.with_coeffs(v_next)?;
        iters_used = iter + 1;
        final_residual = residual;
        if residual < cfg.tol {
            break;
        }
    }

    let r1 = op1.apply(&x)?.sub(y1)?;
    let r2 = op2.apply(&x)?.sub(y2)?;
    cost_trace.push(half * (r1.norm_l2_sq() + r2.norm_l2_sq()) + cfg.lambda * l1_norm(x.coeffs()));

    let fused = wavelet::dwt2_inverse(&x)?.clamped01();
    Ok(FusionResult {
        fused,
        iters_used,
        cost_trace,
        final_residual,
        mu,
        rho,
        cost_is_l1_bound: gamma > T::zero(),
        state: SolverState { x, v },
    })
}
