//! Small dense helpers on row-major `f64` buffers, plus PCA.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scale `a` to unit length; returns the original norm.
pub fn normalize_in_place(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `a -= (a·u) u` for unit `u`.
pub fn remove_component(a: &mut [f64], u: &[f64]) {
    let c = dot(a, u);
    a.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniformly distributed unit vector in `R^d`.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        if normalize_in_place(&mut v) > 1e-12 {
            return v;
        }
    }
}

/// Column means of an `n × d` row-major matrix.
pub fn column_mean(rows: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for r in rows.chunks_exact(d).take(n) {
        axpy(1.0, r, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Leading principal directions of a row set.
#[derive(Debug, Clone)]
pub struct PrincipalAxes {
    pub mean: Vec<f64>,
    /// Unit axes, strongest first, each with its largest-magnitude
    /// coordinate positive.
    pub axes: Vec<Vec<f64>>,
    /// All singular values of the centered matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Flip `v` so that its largest-magnitude coordinate (first on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-`k` right singular vectors of the centered `n × d` matrix.
///
/// Fails with a geometry error when fewer than `k` singular values are
/// numerically nonzero.
pub fn principal_axes(rows: &[f64], n: usize, d: usize, k: usize) -> Result<PrincipalAxes> {
    principal_axes_min_rank(rows, n, d, k, k)
}

/// As [`principal_axes`], but only `min_rank ≤ k` singular values must be
/// nonzero. Axes beyond the numerical rank are still orthonormal; the
/// data has no extent along them.
pub fn principal_axes_min_rank(rows: &[f64], n: usize, d: usize, k: usize, min_rank: usize) -> Result<PrincipalAxes> {
    assert!((1..=k).contains(&min_rank), "min_rank must lie in 1..=k");
    assert_eq!(rows.len(), n * d, "row buffer does not match n × d");
    if k > d || k > n {
        return Err(Error::geometry(format!(
            "cannot extract {k} components from a {n}×{d} matrix"
        )));
    }
    let mean = column_mean(rows, n, d);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i * d + j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    let tol = (n.max(d) as f64) * f64::EPSILON * top;
    if top <= 0.0 || singular_values[min_rank - 1] <= tol.max(1e-300) {
        return Err(Error::geometry(format!(
            "rank deficient: need {min_rank} nonzero singular values, got {:?}",
            &singular_values[..k.min(singular_values.len())]
        )));
    }
    let axes = order[..k]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
            normalize_in_place(&mut v);
            canonical_sign(&mut v);
            v
        })
        .collect();
    Ok(PrincipalAxes {
        mean,
        axes,
        singular_values,
    })
}

/// One Gram–Schmidt pass: orthonormalize each vector against its predecessors.
pub fn gram_schmidt(vectors: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            remove_component(v, u);
        }
        if normalize_in_place(v) < 1e-12 {
            return Err(Error::geometry("linearly dependent axes"));
        }
    }
    Ok(())
}

/// A Haar-random orthogonal `d × d` matrix (row-major) via QR of a Gaussian.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column signs so the distribution is Haar.
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = q[(i, j)];
        }
    }
    out
}
