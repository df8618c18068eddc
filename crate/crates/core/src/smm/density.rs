//! Bivariate densities with isotropic covariance `sigma * I`.

use nalgebra::Vector2;
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

/// Log of the normalizing constant `G((nu+2)/2) / (pi nu G(nu/2) sigma)` of
/// the bivariate t-density with covariance `sigma * I`.
pub(crate) fn t_log_normalizer(sigma: f64, nu: f64) -> f64 {
    ln_gamma((nu + 2.0) / 2.0) - ln_gamma(nu / 2.0) - (std::f64::consts::PI * nu).ln() - sigma.ln()
}

/// Bivariate Student t-density with scale `sigma * I` and `nu` degrees of
/// freedom, using the Mahalanobis distance with the inverse scale matrix.
pub fn student_t_pdf(x: &Vector2<f64>, mean: &Vector2<f64>, sigma: f64, nu: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("nu", nu)?;
    let delta = (x - mean).norm_squared() / sigma;
    Ok((t_log_normalizer(sigma, nu) - 0.5 * (nu + 2.0) * (delta / nu).ln_1p()).exp())
}

/// Bivariate normal density with covariance `sigma * I`.
pub fn gaussian_pdf(x: &Vector2<f64>, mean: &Vector2<f64>, sigma: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    let delta = (x - mean).norm_squared() / sigma;
    Ok((-0.5 * delta).exp() / (2.0 * std::f64::consts::PI * sigma))
}

/// Degrees of freedom tied to a component variance, `nu = 2 sigma / (sigma - 1)`.
pub fn nu_from_sigma(sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 1.0 {
        return Err(Error::DegenerateSigma(sigma));
    }
    Ok(2.0 * sigma / (sigma - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    #[test]
    fn t_at_mean() {
        let p = student_t_pdf(&v(0.3, -0.2), &v(0.3, -0.2), 1.0, 2.0).unwrap();
        assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn t_rejects_bad_parameters() {
        assert!(student_t_pdf(&v(0., 0.), &v(0., 0.), 0.0, 2.0).is_err());
        assert!(student_t_pdf(&v(0., 0.), &v(0., 0.), 1.0, -1.0).is_err());
        assert!(gaussian_pdf(&v(0., 0.), &v(0., 0.), -1.0).is_err());
    }

    #[test]
    fn gaussian_values() {
        let o = v(0.0, 0.0);
        assert!((gaussian_pdf(&o, &o, 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let p = gaussian_pdf(&v(1.0, 0.0), &o, 1.0).unwrap();
        assert!((p - (-0.5f64).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!((p - 0.0965).abs() < 1e-4);
    }

    fn riemann(f: impl Fn(&Vector2<f64>) -> f64, half: f64, h: f64) -> f64 {
        let n = (2.0 * half / h).round() as i64;
        let mut acc = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                acc += f(&v(-half + i as f64 * h, -half + j as f64 * h));
            }
        }
        acc * h * h
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let o = v(0.0, 0.0);
        let total = riemann(|x| gaussian_pdf(x, &o, 1.0).unwrap(), 8.0, 0.05);
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn t_integrates_to_one_for_light_tails() {
        // nu = 30 keeps the mass outside the box far below the tolerance
        let o = v(0.0, 0.0);
        let total = riemann(|x| student_t_pdf(x, &o, 1.0, 30.0).unwrap(), 25.0, 0.05);
        assert!((total - 1.0).abs() < 2e-3, "{total}");
    }

    fn sup_distance(nu: f64) -> f64 {
        let o = v(0.0, 0.0);
        let mut sup = 0.0f64;
        for i in -2..=2 {
            for j in -2..=2 {
                let x = v(i as f64, j as f64);
                let d = (student_t_pdf(&x, &o, 1.0, nu).unwrap() - gaussian_pdf(&x, &o, 1.0).unwrap()).abs();
                sup = sup.max(d);
            }
        }
        sup
    }

    #[test]
    fn gaussian_limit() {
        assert!(sup_distance(1e6) < 1e-4);
        let seq: Vec<f64> = [5.0, 50.0, 500.0, 5000.0].iter().map(|&n| sup_distance(n)).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
    }

    #[test]
    fn heavier_tail_than_gaussian() {
        let o = v(0.0, 0.0);
        let x = v(4.0, 0.0);
        assert!(student_t_pdf(&x, &o, 1.0, 3.0).unwrap() > gaussian_pdf(&x, &o, 1.0).unwrap());
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_from_sigma(2.0).unwrap(), 4.0);
        assert_eq!(nu_from_sigma(3.0).unwrap(), 3.0);
        assert!((nu_from_sigma(1.01).unwrap() - 202.0).abs() < 1e-9);
        assert!(matches!(nu_from_sigma(1.0), Err(Error::DegenerateSigma(_))));
        assert!(nu_from_sigma(0.5).is_err());
    }

    proptest! {
        #[test]
        fn t_symmetric(ax in -3.0f64..3.0, ay in -3.0f64..3.0, s in 0.1f64..5.0, nu in 2.1f64..50.0) {
            let m = v(0.2, -0.4);
            let a = v(ax, ay);
            let p = student_t_pdf(&(m + a), &m, s, nu).unwrap();
            let q = student_t_pdf(&(m - a), &m, s, nu).unwrap();
            prop_assert!((p - q).abs() <= 1e-12 * p.max(q));
        }

        #[test]
        fn t_monotone_tail(r1 in 0.0f64..20.0, dr in 1e-3f64..20.0, s in 0.1f64..5.0, nu in 2.1f64..50.0) {
            let o = v(0.0, 0.0);
            let p = student_t_pdf(&v(r1, 0.0), &o, s, nu).unwrap();
            let q = student_t_pdf(&v(r1 + dr, 0.0), &o, s, nu).unwrap();
            prop_assert!(q < p && q > 0.0);
        }

        #[test]
        fn nu_decreasing(s in 1.001f64..100.0, ds in 1e-3f64..10.0) {
            let a = nu_from_sigma(s).unwrap();
            let b = nu_from_sigma(s + ds).unwrap();
            prop_assert!(b < a && b > 2.0);
        }
    }
}
