use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{vmf, BaseStats, InitSpec};
use crate::error::{Error, Result};
use crate::linalg::{dot, gaussian_vec, normalize_in_place, random_unit, remove_component};
use crate::rng;

/// Spherical interpolation between two vectors at parameter `t`.
///
/// The angle ω is measured between the directions of `a` and `b`; the
/// result is `sin((1−t)ω)/sin ω · a + sin(tω)/sin ω · b`. Returns `None`
/// when `sin ω < 1e−8` (identical or antipodal endpoints).
pub fn slerp(a: &[f64], b: &[f64], t: f64) -> Option<Vec<f64>> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    let s = omega.sin();
    if s < 1e-8 {
        return None;
    }
    let wa = ((1.0 - t) * omega).sin() / s;
    let wb = (t * omega).sin() / s;
    Some(a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect())
}

/// Gaussian noise of expected norm ≈ `scale`, orthogonal to unit `dir`.
pub fn tangential_noise<R: Rng + ?Sized>(rng: &mut R, dir: &[f64], scale: f64) -> Vec<f64> {
    let d = dir.len();
    let mut v = gaussian_vec(rng, d);
    let s = scale / (d as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    remove_component(&mut v, dir);
    v
}

fn dim_of(stats: &BaseStats) -> usize {
    stats.mean_embed.len()
}

/// Place a centered point `r·dir` with radial and tangential noise, then shift.
fn place<R: Rng + ?Sized>(
    rng: &mut R,
    out: &mut Vec<f64>,
    stats: &BaseStats,
    dir: &[f64],
    radial_sd: f64,
    tangential: f64,
) {
    let dr = if radial_sd > 0.0 {
        radial_sd * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let r = stats.avg_radius + dr;
    let noise = if tangential > 0.0 {
        tangential_noise(rng, dir, tangential)
    } else {
        vec![0.0; dir.len()]
    };
    for j in 0..dir.len() {
        out.push(stats.mean_embed[j] + r * dir[j] + noise[j]);
    }
}

pub fn init_default(n: usize, stats: &BaseStats, seed: u64) -> Vec<f64> {
    let d = dim_of(stats);
    let sd = stats.avg_radius / (d as f64).sqrt();
    let base = rng::derive(seed, "default");
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut r = rng::stream(base, i as u64);
        for j in 0..d {
            out.push(stats.mean_embed[j] + sd * r.sample::<f64, _>(StandardNormal));
        }
    }
    out
}

pub fn init_slerp(n: usize, stats: &BaseStats, spec: &InitSpec) -> Result<Vec<f64>> {
    require_radius(stats)?;
    let d = dim_of(stats);
    let mut ends = rng::seeded(rng::derive(spec.seed, "slerp-ends"));
    let (start, end) = loop {
        let a = random_unit(&mut ends, d);
        let b = random_unit(&mut ends, d);
        if slerp(&a, &b, 0.5).is_some() {
            break (a, b);
        }
    };
    let noise_base = rng::derive(spec.seed, "slerp-noise");
    let radial = spec.noise_scale * stats.avg_radius;
    let tangential = spec.noise_scale * stats.avg_radius / 10.0;
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let mut dir = slerp(&start, &end, t).expect("endpoints checked");
        normalize_in_place(&mut dir);
        let mut r = rng::stream(noise_base, i as u64);
        place(&mut r, &mut out, stats, &dir, radial, tangential);
    }
    Ok(out)
}

pub fn init_pca_main(n: usize, stats: &BaseStats, spec: &InitSpec) -> Result<Vec<f64>> {
    let d = dim_of(stats);
    let (lo, hi) = stats.axis1_range;
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::geometry("degenerate projection span along axis1"));
    }
    let margin = span * spec.margin_frac;
    let (lo, hi) = (lo - margin, hi + margin);
    let axis = &stats.axes[0];
    let noise_base = rng::derive(spec.seed, "pca-noise");
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let pos = lo + t * (hi - lo);
        let noise = if spec.noise_scale > 0.0 {
            tangential_noise(&mut rng::stream(noise_base, i as u64), axis, spec.noise_scale)
        } else {
            vec![0.0; d]
        };
        for j in 0..d {
            out.push(stats.mean_embed[j] + pos * axis[j] + noise[j]);
        }
    }
    Ok(out)
}

/// Unit direction on the helix at parameter `t ∈ [0, 1]`.
pub fn helix_direction(stats: &BaseStats, turns: u32, t: f64) -> Vec<f64> {
    let theta = (t - 0.5) * PI;
    let phi = t * f64::from(turns) * 2.0 * PI;
    let (c1, c2, c3) = (theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin());
    let [a1, a2, a3] = &stats.axes;
    (0..a1.len())
        .map(|j| c1 * a1[j] + c2 * a2[j] + c3 * a3[j])
        .collect()
}

pub fn init_helix(n: usize, stats: &BaseStats, spec: &InitSpec) -> Result<Vec<f64>> {
    require_radius(stats)?;
    let d = dim_of(stats);
    let noise_base = rng::derive(spec.seed, "helix-noise");
    let amp = spec.noise_scale * stats.avg_radius;
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let dir = helix_direction(stats, spec.num_turns, t);
        let mut r = rng::stream(noise_base, i as u64);
        place(&mut r, &mut out, stats, &dir, amp, amp);
    }
    Ok(out)
}

pub fn init_vmf(n: usize, stats: &BaseStats, spec: &InitSpec) -> Result<Vec<f64>> {
    if !(spec.concentration > 0.0) {
        return Err(Error::config("vMF concentration must be > 0"));
    }
    require_radius(stats)?;
    let d = dim_of(stats);
    let start = stats.axes[0].clone();
    let mut end: Vec<f64> = stats.axes[0]
        .iter()
        .zip(&stats.axes[1])
        .map(|(a, b)| a + b)
        .collect();
    normalize_in_place(&mut end);
    let base = rng::derive(spec.seed, "vmf");
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let mut mu = slerp(&start, &end, t).expect("axes are orthogonal");
        normalize_in_place(&mut mu);
        let mut r = rng::stream(base, i as u64);
        let dir = vmf::sample(&mut r, &mu, spec.concentration);
        let radius = loop {
            let x = stats.avg_radius + stats.radius_std * r.sample::<f64, _>(StandardNormal);
            if x > 0.0 {
                break x;
            }
        };
        for j in 0..d {
            out.push(stats.mean_embed[j] + radius * dir[j]);
        }
    }
    Ok(out)
}

fn require_radius(stats: &BaseStats) -> Result<()> {
    if stats.avg_radius > 0.0 {
        Ok(())
    } else {
        Err(Error::geometry("avg_radius must be positive"))
    }
}
