//! Closed-form outcome distributions used by the Monte Carlo harness and
//! the population-level oracles: standardized normal, double exponential
//! (Laplace), Cauchy, and the extended Huber family.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::{big_phi, big_phi_inv, phi};
use crate::huber::ExtendedHuber;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Normal,
    Laplace,
    Cauchy,
    Huber(ExtendedHuber),
}

impl Law {
    /// Parse a law name; `k1`, `k2` are required for `huber`.
    pub fn parse(name: &str, k1: Option<f64>, k2: Option<f64>) -> Result<Law> {
        match name.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Law::Normal),
            "laplace" | "double-exponential" | "double_exponential" => Ok(Law::Laplace),
            "cauchy" => Ok(Law::Cauchy),
            "huber" => {
                let (k1, k2) = match (k1, k2) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::BadLaw(
                            "huber law needs k1 and k2 parameters".into(),
                        ))
                    }
                };
                Ok(Law::Huber(ExtendedHuber::new(k1, k2)?))
            }
            other => Err(Error::BadLaw(format!("unknown law `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Law::Normal => "normal".into(),
            Law::Laplace => "laplace".into(),
            Law::Cauchy => "cauchy".into(),
            Law::Huber(h) => format!("huber({}, {})", h.k1(), h.k2()),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Law::Normal => phi(x),
            Law::Laplace => 0.5 * (-x.abs()).exp(),
            Law::Cauchy => 1.0 / (std::f64::consts::PI * (1.0 + x * x)),
            Law::Huber(h) => h.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Law::Normal => big_phi(x),
            Law::Laplace => {
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
            Law::Cauchy => 0.5 + x.atan() / std::f64::consts::PI,
            Law::Huber(h) => h.cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::BadQuantile { u });
        }
        Ok(match self {
            Law::Normal => big_phi_inv(u),
            Law::Laplace => {
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Law::Cauchy => (std::f64::consts::PI * (u - 0.5)).tan(),
            Law::Huber(h) => h.quantile(u)?,
        })
    }

    /// `1 / f(F^{-1}(u))`, in a numerically stable form per law.
    pub fn inv_pdf_at_quantile(&self, u: f64) -> Result<f64> {
        match self {
            // 1/f(F^{-1}(u)) = pi / sin^2(pi u) for the Cauchy law.
            Law::Cauchy => {
                let s = (std::f64::consts::PI * u).sin();
                Ok(std::f64::consts::PI / (s * s))
            }
            Law::Laplace => Ok(if u < 0.5 { 1.0 / u } else { 1.0 / (1.0 - u) }),
            _ => Ok(1.0 / self.pdf(self.quantile(u)?)),
        }
    }

    /// Fisher information for location.
    pub fn fisher_info(&self) -> f64 {
        match self {
            Law::Normal => 1.0,
            Law::Laplace => 1.0,
            Law::Cauchy => 0.5,
            Law::Huber(h) => h.fisher_info(),
        }
    }

    /// First derivative of the log density.
    pub fn lpsi1(&self, x: f64) -> f64 {
        match self {
            Law::Normal => -x,
            Law::Laplace => -x.signum(),
            Law::Cauchy => -2.0 * x / (1.0 + x * x),
            Law::Huber(h) => h.lpsi1(x),
        }
    }

    /// Second derivative of the log density (a.e. for Laplace).
    pub fn lpsi2(&self, x: f64) -> f64 {
        match self {
            Law::Normal => -1.0,
            Law::Laplace => 0.0,
            Law::Cauchy => {
                let d = 1.0 + x * x;
                -2.0 * (1.0 - x * x) / (d * d)
            }
            Law::Huber(h) => h.lpsi2(x),
        }
    }

    /// Interior quantile levels where `f(F^{-1}(u))` has kinks; quadrature
    /// routines split integration intervals there.
    pub fn quantile_kinks(&self) -> Vec<f64> {
        match self {
            Law::Laplace => vec![0.5],
            Law::Huber(h) => vec![h.alpha(), 1.0 - h.beta()],
            _ => Vec::new(),
        }
    }

    /// Inverse-CDF sampling (the Cauchy draw is `tan(pi (u - 1/2))`).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                self.quantile(u).expect("u in (0,1)")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn quantile_inverts_cdf_all_laws() {
        let laws = [
            Law::Normal,
            Law::Laplace,
            Law::Cauchy,
            Law::Huber(ExtendedHuber::new(0.5, 2.0).unwrap()),
        ];
        for law in laws {
            for i in 1..100 {
                let u = i as f64 / 100.0;
                let x = law.quantile(u).unwrap();
                assert_abs_diff_eq!(law.cdf(x), u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn inv_pdf_matches_direct_form() {
        for law in [Law::Normal, Law::Laplace, Law::Cauchy] {
            for i in 1..40 {
                let u = i as f64 / 40.0;
                let direct = 1.0 / law.pdf(law.quantile(u).unwrap());
                let stable = law.inv_pdf_at_quantile(u).unwrap();
                assert_abs_diff_eq!(stable / direct, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fisher_info_matches_quadrature() {
        // I(f) = int (f'/f)^2 f over the support.
        for law in [
            Law::Normal,
            Law::Cauchy,
            Law::Huber(ExtendedHuber::new(1.0, 3.0).unwrap()),
        ] {
            let integrand = |x: f64| {
                let s = law.lpsi1(x);
                s * s * law.pdf(x)
            };
            // Clamp heavy-tail domains (the Cauchy integrand decays like
            // x^-4, so +-1e3 leaves ~1e-9 outside) and seed split points so
            // the adaptive pass finds the central mass.
            let lo = law.quantile(1e-10).unwrap().max(-1e3);
            let hi = law.quantile(1.0 - 1e-10).unwrap().min(1e3);
            let mut splits: Vec<f64> = match law {
                Law::Huber(h) => vec![-h.k1(), h.k2()],
                _ => vec![0.0],
            };
            splits.extend([-100.0, -10.0, -3.0, -1.0, 1.0, 3.0, 10.0, 100.0]);
            let v = crate::quad::integrate_split(&integrand, lo, hi, &splits, 1e-9).unwrap();
            assert_abs_diff_eq!(v, law.fisher_info(), epsilon = 1e-5);
        }
    }

    #[test]
    fn cauchy_sampler_median_and_spread() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut xs = Law::Cauchy.sample(100_000, &mut rng);
        xs.sort_by(f64::total_cmp);
        let med = xs[xs.len() / 2];
        assert!(med.abs() < 0.02, "median {med}");
        // Quartiles of the standard Cauchy are +-1.
        let q1 = xs[xs.len() / 4];
        let q3 = xs[3 * xs.len() / 4];
        assert!((q1 + 1.0).abs() < 0.03 && (q3 - 1.0).abs() < 0.03);
    }

    #[test]
    fn parse_names() {
        assert_eq!(Law::parse("normal", None, None).unwrap(), Law::Normal);
        assert_eq!(
            Law::parse("double-exponential", None, None).unwrap(),
            Law::Laplace
        );
        assert!(matches!(Law::parse("huber", Some(1.0), Some(2.0)), Ok(Law::Huber(_))));
        assert!(Law::parse("huber", None, None).is_err());
        assert!(Law::parse("weird", None, None).is_err());
    }
}
