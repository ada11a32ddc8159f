//! Ordinality and monotonicity hinge losses on the TS block, measured in
//! a 3-D PCA subspace of the block.
//!
//! Rows are projected as `y_i = Pᵀ(e_i − μ)` with `μ` the current block
//! mean and `P` held fixed between refreshes. Gradients flow through `μ`
//! but not through `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::principal_axes_min_rank;

/// Step of the local metric/loss preset.
pub const LOCAL_STEP: usize = 1;
/// Step of the global metric/loss preset.
pub const GLOBAL_STEP: usize = 100;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizerConfig {
    /// Token-index step `k`; requires `2k < N`.
    pub step: usize,
    pub margin_ord: f64,
    pub margin_mono: f64,
    pub lambda_ord: f64,
    pub lambda_mono: f64,
    /// Refit the projection every this many optimizer steps.
    pub refresh_interval: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            step: LOCAL_STEP,
            margin_ord: 0.0,
            margin_mono: 0.0,
            lambda_ord: 0.0,
            lambda_mono: 0.0,
            refresh_interval: 1,
        }
    }
}

impl RegularizerConfig {
    pub fn is_active(&self) -> bool {
        self.lambda_ord > 0.0 || self.lambda_mono > 0.0
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.step == 0 {
            return Err(Error::config("regularizer step must be ≥ 1"));
        }
        if self.refresh_interval == 0 {
            return Err(Error::config("refresh interval must be ≥ 1"));
        }
        if !(self.lambda_ord >= 0.0 && self.lambda_mono >= 0.0) {
            return Err(Error::config("regularizer weights must be ≥ 0"));
        }
        check_step(self.step, n)
    }
}

fn check_step(k: usize, n: usize) -> Result<()> {
    if k == 0 || 2 * k >= n {
        return Err(Error::config(format!(
            "step k={k} needs 2k < N, but N={n}"
        )));
    }
    Ok(())
}

/// A fixed 3-D projection of the TS block.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryContext {
    pub dim: usize,
    /// Columns of `P` as three orthonormal `D`-vectors.
    pub axes: [Vec<f64>; 3],
    /// Block mean at fit time.
    pub mean: Vec<f64>,
}

/// Fit `P` to the block. A block of rank 1 or 2 (e.g. an exact line) gets
/// completion axes it has no extent along; rank 0 is a geometry error.
pub fn fit_projection(block: &[f64], dim: usize) -> Result<GeometryContext> {
    let n = block.len() / dim;
    if n < 4 || dim < 3 {
        return Err(Error::config(format!(
            "projection needs N ≥ 4 and D ≥ 3, got N={n}, D={dim}"
        )));
    }
    let pa = principal_axes_min_rank(block, n, dim, 3, 1)?;
    let [a, b, c]: [Vec<f64>; 3] = pa.axes.try_into().expect("three axes");
    Ok(GeometryContext {
        dim,
        axes: [a, b, c],
        mean: pa.mean,
    })
}

impl GeometryContext {
    /// `y_i = Pᵀ(e_i − μ)` with `μ` the mean of `block`.
    pub fn project(&self, block: &[f64]) -> Vec<[f64; 3]> {
        let d = self.dim;
        let n = block.len() / d;
        let mut mean = vec![0.0; d];
        for r in block.chunks_exact(d) {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        block
            .chunks_exact(d)
            .map(|r| {
                let mut y = [0.0; 3];
                for (c, axis) in self.axes.iter().enumerate() {
                    y[c] = r
                        .iter()
                        .zip(&mean)
                        .zip(axis)
                        .map(|((x, m), a)| (x - m) * a)
                        .sum();
                }
                y
            })
            .collect()
    }

    /// Pull a gradient on the projected rows back to the block:
    /// `∂/∂e_j = P (g_j − ḡ)`.
    pub fn backproject(&self, grad_y: &[[f64; 3]]) -> Vec<f64> {
        let d = self.dim;
        let n = grad_y.len();
        let mut gbar = [0.0; 3];
        for g in grad_y {
            for c in 0..3 {
                gbar[c] += g[c];
            }
        }
        gbar.iter_mut().for_each(|x| *x /= n as f64);
        let mut out = vec![0.0; n * d];
        for (row, g) in out.chunks_exact_mut(d).zip(grad_y) {
            for (c, axis) in self.axes.iter().enumerate() {
                let w = g[c] - gbar[c];
                if w != 0.0 {
                    row.iter_mut().zip(axis).for_each(|(o, a)| *o += w * a);
                }
            }
        }
        out
    }
}

#[inline]
fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
fn add_scaled(g: &mut [f64; 3], s: f64, v: &[f64; 3]) {
    for c in 0..3 {
        g[c] += s * v[c];
    }
}

/// `v/‖v‖`, or zero below the norm floor.
#[inline]
fn unit_or_zero(v: &[f64; 3]) -> [f64; 3] {
    let n = norm3(v);
    if n < NORM_FLOOR {
        [0.0; 3]
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

/// Ordinality hinge on projected rows; returns the mean and its gradient.
pub fn ord_projected(y: &[[f64; 3]], k: usize, margin: f64) -> Result<(f64, Vec<[f64; 3]>)> {
    let n = y.len();
    check_step(k, n)?;
    let count = (n - 2 * k) as f64;
    let mut grad = vec![[0.0; 3]; n];
    let mut total = 0.0;
    for i in 2 * k..n {
        let near = sub(&y[i], &y[i - k]);
        let far = sub(&y[i], &y[i - 2 * k]);
        let h = norm3(&near) - norm3(&far) - margin;
        if h > 0.0 {
            total += h;
            let un = unit_or_zero(&near);
            let uf = unit_or_zero(&far);
            add_scaled(&mut grad[i], 1.0 / count, &un);
            add_scaled(&mut grad[i], -1.0 / count, &uf);
            add_scaled(&mut grad[i - k], -1.0 / count, &un);
            add_scaled(&mut grad[i - 2 * k], 1.0 / count, &uf);
        }
    }
    Ok((total / count, grad))
}

/// Monotonicity hinge on projected rows; returns the mean and its gradient.
pub fn mono_projected(y: &[[f64; 3]], k: usize, margin: f64) -> Result<(f64, Vec<[f64; 3]>)> {
    let n = y.len();
    check_step(k, n)?;
    let count = (n - 2 * k) as f64;
    let mut grad = vec![[0.0; 3]; n];
    let mut total = 0.0;
    for i in k..n - k {
        let a = sub(&y[i], &y[i - k]);
        let b = sub(&y[i + k], &y[i]);
        let na = norm3(&a);
        let nb = norm3(&b);
        let (fa, fb) = (na.max(NORM_FLOOR), nb.max(NORM_FLOOR));
        let cos = dot3(&a, &b) / (fa * fb);
        let h = -cos - margin;
        if h > 0.0 {
            total += h;
            // d cos / da and d cos / db; the floored norm is constant.
            let mut da = [0.0; 3];
            let mut db = [0.0; 3];
            add_scaled(&mut da, 1.0 / (fa * fb), &b);
            add_scaled(&mut db, 1.0 / (fa * fb), &a);
            if na >= NORM_FLOOR {
                add_scaled(&mut da, -cos / (na * na), &a);
            }
            if nb >= NORM_FLOOR {
                add_scaled(&mut db, -cos / (nb * nb), &b);
            }
            // term = −cos; a = y_i − y_{i−k}, b = y_{i+k} − y_i.
            let s = -1.0 / count;
            add_scaled(&mut grad[i], s, &da);
            add_scaled(&mut grad[i - k], -s, &da);
            add_scaled(&mut grad[i + k], s, &db);
            add_scaled(&mut grad[i], -s, &db);
        }
    }
    Ok((total / count, grad))
}

/// Ordinality loss and its gradient with respect to the block (P fixed).
pub fn loss_ord(ctx: &GeometryContext, block: &[f64], k: usize, margin: f64) -> Result<(f64, Vec<f64>)> {
    let y = ctx.project(block);
    let (v, g) = ord_projected(&y, k, margin)?;
    Ok((v, ctx.backproject(&g)))
}

/// Monotonicity loss and its gradient with respect to the block (P fixed).
pub fn loss_mono(ctx: &GeometryContext, block: &[f64], k: usize, margin: f64) -> Result<(f64, Vec<f64>)> {
    let y = ctx.project(block);
    let (v, g) = mono_projected(&y, k, margin)?;
    Ok((v, ctx.backproject(&g)))
}

/// Components of the weighted regularizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegularizerValue {
    pub total: f64,
    pub l_ord: f64,
    pub l_mono: f64,
    pub grad: Vec<f64>,
}

/// `λ_ord·L_ord + λ_mono·L_mono` on one projection, with summed gradients.
pub fn total_regularizer(
    ctx: &GeometryContext,
    block: &[f64],
    cfg: &RegularizerConfig,
) -> Result<RegularizerValue> {
    let n = block.len() / ctx.dim;
    cfg.validate(n)?;
    let y = ctx.project(block);
    let mut gy = vec![[0.0; 3]; n];
    let mut out = RegularizerValue::default();
    if cfg.lambda_ord > 0.0 {
        let (v, g) = ord_projected(&y, cfg.step, cfg.margin_ord)?;
        out.l_ord = v;
        for (acc, gi) in gy.iter_mut().zip(&g) {
            add_scaled(acc, cfg.lambda_ord, gi);
        }
    }
    if cfg.lambda_mono > 0.0 {
        let (v, g) = mono_projected(&y, cfg.step, cfg.margin_mono)?;
        out.l_mono = v;
        for (acc, gi) in gy.iter_mut().zip(&g) {
            add_scaled(acc, cfg.lambda_mono, gi);
        }
    }
    out.total = cfg.lambda_ord * out.l_ord + cfg.lambda_mono * out.l_mono;
    out.grad = if cfg.is_active() {
        ctx.backproject(&gy)
    } else {
        vec![0.0; block.len()]
    };
    Ok(out)
}

/// Zero-margin geometry metrics plus the losses at configured margins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub r_ord_local: f64,
    pub r_ord_global: f64,
    pub r_mono_local: f64,
    pub r_mono_global: f64,
    pub l_ord: f64,
    pub l_mono: f64,
}

impl GeometryReport {
    /// Combined geometry error used for the accuracy regression.
    pub fn sum(&self) -> f64 {
        self.r_ord_local + self.r_ord_global + self.r_mono_local + self.r_mono_global
    }
}

/// Metrics at `k ∈ {1, 100}` with margins 0, on a freshly fitted projection.
pub fn measure(block: &[f64], dim: usize) -> Result<GeometryReport> {
    measure_with(block, dim, &RegularizerConfig::default())
}

pub fn measure_with(block: &[f64], dim: usize, cfg: &RegularizerConfig) -> Result<GeometryReport> {
    measure_steps(block, dim, LOCAL_STEP, GLOBAL_STEP, cfg)
}

/// As [`measure_with`] with explicit local and global step sizes.
pub fn measure_steps(
    block: &[f64],
    dim: usize,
    k_local: usize,
    k_global: usize,
    cfg: &RegularizerConfig,
) -> Result<GeometryReport> {
    let n = block.len() / dim;
    for k in [k_local, k_global, cfg.step] {
        check_step(k, n)?;
    }
    let ctx = fit_projection(block, dim)?;
    let y = ctx.project(block);
    Ok(GeometryReport {
        r_ord_local: ord_projected(&y, k_local, 0.0)?.0,
        r_ord_global: ord_projected(&y, k_global, 0.0)?.0,
        r_mono_local: mono_projected(&y, k_local, 0.0)?.0,
        r_mono_global: mono_projected(&y, k_global, 0.0)?.0,
        l_ord: ord_projected(&y, cfg.step, cfg.margin_ord)?.0,
        l_mono: mono_projected(&y, cfg.step, cfg.margin_mono)?.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, c: f64) -> Vec<[f64; 3]> {
        (0..n).map(|i| [i as f64 * c, 0.0, 0.0]).collect()
    }

    #[test]
    fn straight_line_has_zero_losses() {
        let y = line(10, 0.3);
        for k in 1..5 {
            let (v, g) = ord_projected(&y, k, 0.0).unwrap();
            assert_eq!(v, 0.0);
            assert!(g.iter().flatten().all(|&x| x == 0.0));
            let (v, _) = mono_projected(&y, k, 0.0).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn zig_zag_mono_is_one_minus_margin() {
        let y: Vec<[f64; 3]> = (0..9).map(|i| [(i % 2) as f64, 0.0, 0.0]).collect();
        for m in [0.0, 0.25, 1.0] {
            let (v, _) = mono_projected(&y, 1, m).unwrap();
            assert!((v - (1.0 - m)).abs() < 1e-15);
        }
    }

    #[test]
    fn step_too_large_is_config_error() {
        let y = line(6, 1.0);
        assert!(matches!(ord_projected(&y, 3, 0.0), Err(Error::Config(_))));
        assert!(ord_projected(&y, 2, 0.0).is_ok());
    }

    #[test]
    fn zero_weights_give_zero() {
        let block: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64).collect();
        let ctx = fit_projection(&block, 4).unwrap();
        let r = total_regularizer(&ctx, &block, &RegularizerConfig::default()).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }
}
