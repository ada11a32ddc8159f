//! Von Mises–Fisher sampling on the unit sphere `S^{p−1}` (Wood's rejection scheme).

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::linalg::{dot, gaussian_vec, normalize_in_place, remove_component};

/// One unit vector drawn from vMF(μ, κ). `mu` must be unit length, `p ≥ 2`, κ > 0.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mu: &[f64], kappa: f64) -> Vec<f64> {
    let p = mu.len();
    assert!(p >= 2, "vMF needs dimension ≥ 2");
    assert!(kappa > 0.0, "vMF needs κ > 0");
    let w = sample_w(rng, p, kappa);
    let v = orthogonal_unit(rng, mu);
    let s = (1.0 - w * w).max(0.0).sqrt();
    let mut out: Vec<f64> = mu.iter().zip(&v).map(|(m, t)| w * m + s * t).collect();
    normalize_in_place(&mut out);
    out
}

/// The cosine `w = x·μ` of a vMF draw.
pub fn sample_w<R: Rng + ?Sized>(rng: &mut R, p: usize, kappa: f64) -> f64 {
    let pm1 = (p - 1) as f64;
    // b = (p−1) / (2κ + sqrt(4κ² + (p−1)²)); stable for large κ.
    let b = pm1 / (2.0 * kappa + (4.0 * kappa * kappa + pm1 * pm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + pm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(pm1 / 2.0, pm1 / 2.0).expect("valid beta shape");
    loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + pm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w;
        }
    }
}

fn orthogonal_unit<R: Rng + ?Sized>(rng: &mut R, mu: &[f64]) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, mu.len());
        remove_component(&mut v, mu);
        // Second pass removes rounding residue along μ.
        let c = dot(&v, mu);
        v.iter_mut().zip(mu).for_each(|(x, m)| *x -= c * m);
        if normalize_in_place(&mut v) > 1e-12 {
            return v;
        }
    }
}

/// `E[x·μ]` for vMF(μ, κ) on `S^{p−1}`, by Simpson quadrature of the
/// marginal density of `w`, proportional to `(1−w²)^{(p−3)/2} e^{κw}`.
pub fn mean_resultant_length(p: usize, kappa: f64) -> f64 {
    assert!(p >= 2);
    // Substitute w = cos θ to keep the integrand smooth at the endpoints:
    // density in θ ∝ sin^{p−2} θ · e^{κ cos θ}.
    let m = 20_000usize;
    let h = std::f64::consts::PI / m as f64;
    let log_f = |theta: f64| -> f64 {
        let s = theta.sin();
        if s <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (p as f64 - 2.0) * s.ln() + kappa * (theta.cos() - 1.0)
        }
    };
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=m {
        let theta = i as f64 * h;
        let wgt = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = if p == 2 {
            (kappa * (theta.cos() - 1.0)).exp()
        } else {
            log_f(theta).exp()
        };
        num += wgt * f * theta.cos();
        den += wgt * f;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn samples_are_unit() {
        let mut r = seeded(2);
        let mut mu = vec![0.0; 10];
        mu[3] = 1.0;
        for _ in 0..100 {
            let x = sample(&mut r, &mu, 5.0);
            assert!((dot(&x, &x).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_resultant_length_circle() {
        // On S^1 the answer is I1(κ)/I0(κ); at κ = 1 that is 0.44638996589653...
        let a = mean_resultant_length(2, 1.0);
        assert!((a - 0.446_389_965_896_534_5).abs() < 1e-12, "{a}");
    }

    #[test]
    fn mean_resultant_length_sphere() {
        // On S^2 the answer is coth κ − 1/κ.
        for kappa in [0.5f64, 3.0, 20.0] {
            let exact = 1.0 / kappa.tanh() - 1.0 / kappa;
            assert!((mean_resultant_length(3, kappa) - exact).abs() < 1e-9);
        }
    }
}
