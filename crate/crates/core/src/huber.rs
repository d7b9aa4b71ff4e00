//! Extended Huber family: Gaussian middle with exponential tails of
//! possibly different decay rates on each side, symmetric iff `k1 == k2`.
//!
//! Standardized log-density (location 0, scale 1):
//!
//! ```text
//! ln f(x) = k1*x + k1^2/2 - c      for x < -k1
//!         = -x^2/2        - c      for -k1 <= x <= k2
//!         = -k2*x + k2^2/2 - c     for x > k2
//! ```
//!
//! with `c = ln( e^{-k1^2/2}/k1 + e^{-k2^2/2}/k2 + sqrt(2 pi) (Phi(k2) - Phi(-k1)) )`.
//!
//! The tails are continued with the Gaussian log-slope at the junctions, so
//! the score f'/f is continuous and the family satisfies
//! `F(-k1) = f(-k1)/k1` and `1 - F(k2) = f(k2)/k2` exactly. Those identities
//! make the (alpha, beta)-trimmed mean with `alpha = F(-k1)`,
//! `beta = 1 - F(k2)` efficient, with Fisher information `1 - alpha - beta`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::{big_phi, big_phi_inv, SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedHuber {
    k1: f64,
    k2: f64,
    mu: f64,
    sigma: f64,
    /// Log of the normalizing constant of the standardized density.
    c: f64,
}

impl ExtendedHuber {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        Self::with_location_scale(k1, k2, 0.0, 1.0)
    }

    pub fn with_location_scale(k1: f64, k2: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0 && sigma > 0.0 && k1.is_finite() && k2.is_finite()) {
            return Err(Error::BadParams(format!(
                "extended Huber needs k1, k2, sigma > 0 (got {k1}, {k2}, {sigma})"
            )));
        }
        let mass = (-0.5 * k1 * k1).exp() / k1
            + (-0.5 * k2 * k2).exp() / k2
            + SQRT_2PI * (big_phi(k2) - big_phi(-k1));
        Ok(ExtendedHuber {
            k1,
            k2,
            mu,
            sigma,
            c: mass.ln(),
        })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// Log normalizing constant `c(k1, k2)` of the standardized density.
    pub fn normalizer(&self) -> f64 {
        self.c
    }

    /// Mass of the left exponential tail, `alpha = F(-k1) = f(-k1)/k1`.
    pub fn alpha(&self) -> f64 {
        (-0.5 * self.k1 * self.k1 - self.c).exp() / self.k1
    }

    /// Mass of the right exponential tail, `beta = 1 - F(k2) = f(k2)/k2`.
    pub fn beta(&self) -> f64 {
        (-0.5 * self.k2 * self.k2 - self.c).exp() / self.k2
    }

    /// Fisher information for location of the standardized member.
    pub fn fisher_info(&self) -> f64 {
        1.0 - self.alpha() - self.beta()
    }

    fn std_log_pdf(&self, x: f64) -> f64 {
        let t = if x < -self.k1 {
            self.k1 * x + 0.5 * self.k1 * self.k1
        } else if x > self.k2 {
            -self.k2 * x + 0.5 * self.k2 * self.k2
        } else {
            -0.5 * x * x
        };
        t - self.c
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        self.std_log_pdf((y - self.mu) / self.sigma) - self.sigma.ln()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.log_pdf(y).exp()
    }

    fn std_cdf(&self, x: f64) -> f64 {
        if x < -self.k1 {
            (self.k1 * x + 0.5 * self.k1 * self.k1 - self.c).exp() / self.k1
        } else if x <= self.k2 {
            self.alpha() + (-self.c).exp() * SQRT_2PI * (big_phi(x) - big_phi(-self.k1))
        } else {
            1.0 - (-self.k2 * x + 0.5 * self.k2 * self.k2 - self.c).exp() / self.k2
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.std_cdf((y - self.mu) / self.sigma)
    }

    fn std_quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::BadQuantile { u });
        }
        let alpha = self.alpha();
        let beta = self.beta();
        let x = if u <= alpha {
            ((self.k1 * u).ln() + self.c) / self.k1 - 0.5 * self.k1
        } else if u < 1.0 - beta {
            let target = big_phi(-self.k1) + (u - alpha) * self.c.exp() / SQRT_2PI;
            let x0 = big_phi_inv(target.clamp(1e-300, 1.0 - 1e-16));
            // Newton polish against the family's own CDF.
            let f = self.std_log_pdf(x0).exp();
            if f > 0.0 {
                x0 - (self.std_cdf(x0) - u) / f
            } else {
                x0
            }
        } else {
            -(((1.0 - u) * self.k2).ln() + self.c) / self.k2 + 0.5 * self.k2
        };
        Ok(x)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.mu + self.sigma * self.std_quantile(u)?)
    }

    /// First derivative of the standardized log-density (the score in x).
    pub fn lpsi1(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        let s = if z < -self.k1 {
            self.k1
        } else if z > self.k2 {
            -self.k2
        } else {
            -z
        };
        s / self.sigma
    }

    /// Second derivative of the log-density: -1 on the Gaussian middle,
    /// 0 on the exponential tails.
    pub fn lpsi2(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        if (-self.k1..=self.k2).contains(&z) {
            -1.0 / (self.sigma * self.sigma)
        } else {
            0.0
        }
    }

    /// Inverse-CDF sampler.
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
