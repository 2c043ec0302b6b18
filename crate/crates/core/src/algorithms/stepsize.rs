//! Theoretical stepsizes and Byzantine-fraction tolerances.
//!
//! Every rule has the shape `γ = 1/(L + √η)` (capped further under PŁ). All
//! products `c·δ` are taken as 0 when `δ = 0`, so an infinite `c` is harmless
//! in the Byzantine-free case.

use serde::{Deserialize, Serialize};

use super::Algorithm;
use crate::error::{Error, Result};
use crate::objective::SmoothnessConstants;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeInputs {
    pub l: f64,
    pub l_pm: f64,
    pub cal_l_pm: f64,
    pub mu: f64,
    /// Variance of the uplink compressor (unbiased methods).
    pub omega: f64,
    /// Contraction of the uplink compressor (error-feedback methods).
    pub alpha_d: f64,
    /// Contraction of the downlink compressor.
    pub alpha_p: f64,
    pub c: f64,
    pub delta: f64,
    /// Number of good workers.
    pub g: usize,
    pub b: usize,
    pub m: usize,
    pub p: f64,
    pub a: f64,
    /// Heterogeneity multiplier `B`; 0 unless supplied.
    pub big_b: f64,
}

impl StepsizeInputs {
    pub fn from_constants(consts: &SmoothnessConstants) -> Self {
        StepsizeInputs {
            l: consts.l,
            l_pm: consts.l_pm,
            cal_l_pm: consts.cal_l_pm,
            mu: consts.mu,
            omega: 0.0,
            alpha_d: 1.0,
            alpha_p: 1.0,
            c: 1.0,
            delta: 0.0,
            g: 1,
            b: 1,
            m: 1,
            p: 1.0,
            a: 1.0,
            big_b: 0.0,
        }
    }

    fn c_delta(&self) -> f64 {
        if self.delta == 0.0 {
            0.0
        } else {
            self.c * self.delta
        }
    }

    /// `(√(1/G) + √(8cδ))²`
    fn robust_factor(&self) -> f64 {
        let v = (1.0 / self.g as f64).sqrt() + (8.0 * self.c_delta()).sqrt();
        v * v
    }

    fn validate(&self) -> Result<()> {
        let checks = [
            (self.l > 0.0 && self.l.is_finite(), "L must be positive"),
            (self.l_pm >= 0.0 && self.cal_l_pm >= 0.0, "Hessian variances must be >= 0"),
            (self.p > 0.0 && self.p <= 1.0, "p must lie in (0, 1]"),
            (self.a > 0.0 && self.a <= 1.0, "a must lie in (0, 1]"),
            (self.omega >= 0.0, "omega must be >= 0"),
            (self.alpha_d > 0.0 && self.alpha_d <= 1.0, "alpha_D must lie in (0, 1]"),
            (self.alpha_p > 0.0 && self.alpha_p <= 1.0, "alpha_P must lie in (0, 1]"),
            (self.g >= 1 && self.b >= 1, "G and b must be >= 1"),
            ((0.0..0.5).contains(&self.delta), "delta must lie in [0, 0.5)"),
            (self.big_b >= 0.0, "B must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        Ok(())
    }

    fn check_delta(&self, alg: Algorithm) -> Result<()> {
        let max = delta_tolerance(alg, self.c, self.big_b, self.p);
        if self.delta > 0.0 && self.delta >= max {
            return Err(Error::Domain {
                msg: format!("delta = {} exceeds the admissible bound {max}", self.delta),
                max_delta: Some(max),
            });
        }
        Ok(())
    }
}

fn from_eta(l: f64, eta: f64) -> f64 {
    1.0 / (l + eta.sqrt())
}

/// Largest admissible Byzantine fraction; `+∞` when `B = 0`.
pub fn delta_tolerance(alg: Algorithm, c: f64, big_b: f64, p: f64) -> f64 {
    if big_b == 0.0 {
        return f64::INFINITY;
    }
    match alg {
        Algorithm::Marina => p / (48.0 * c * big_b),
        Algorithm::Marina2 | Algorithm::Dasha => 1.0 / ((8.0 * c + 4.0 * c.sqrt()) * big_b),
        Algorithm::Ef21 | Algorithm::Ef21Bc => {
            let s = big_b.sqrt() + big_b;
            1.0 / (8.0 * c * s * s)
        }
    }
}

/// Baseline rule:
/// `A = (6(1−p)/p)(4cδ/p + 1/(2G))(ωL² + (1+ω)𝓛²/b)`, `γ = 1/(L + √A)`.
pub fn stepsize_marina(inp: &StepsizeInputs) -> Result<f64> {
    inp.validate()?;
    inp.check_delta(Algorithm::Marina)?;
    let p = inp.p;
    let w = inp.omega;
    let a = 6.0 * (1.0 - p) / p
        * (4.0 * inp.c_delta() / p + 1.0 / (2.0 * inp.g as f64))
        * (w * inp.l * inp.l + (1.0 + w) * inp.cal_l_pm.powi(2) / inp.b as f64);
    Ok(from_eta(inp.l, a))
}

fn eta_marina2(inp: &StepsizeInputs) -> f64 {
    let p = inp.p;
    let cal = inp.cal_l_pm.powi(2) / inp.b as f64;
    (1.0 - p) / p * (inp.omega * (cal + inp.l_pm.powi(2) + inp.l.powi(2)) + cal) * inp.robust_factor()
}

pub fn stepsize_marina2(inp: &StepsizeInputs) -> Result<f64> {
    inp.validate()?;
    inp.check_delta(Algorithm::Marina2)?;
    Ok(from_eta(inp.l, eta_marina2(inp)))
}

fn eta_dasha(inp: &StepsizeInputs) -> f64 {
    let (w, p) = (inp.omega, inp.p);
    let q = w * (2.0 * w + 1.0);
    (8.0 * q * (inp.l_pm.powi(2) + inp.l.powi(2))
        + (1.0 - p) / inp.b as f64 * (12.0 * q + 2.0 / p) * inp.cal_l_pm.powi(2))
        * inp.robust_factor()
}

pub fn stepsize_dasha(inp: &StepsizeInputs) -> Result<f64> {
    inp.validate()?;
    inp.check_delta(Algorithm::Dasha)?;
    Ok(from_eta(inp.l, eta_dasha(inp)))
}

fn eta_ef21bc(inp: &StepsizeInputs) -> f64 {
    let r = 1.0 + (8.0 * inp.c_delta()).sqrt();
    32.0 / inp.alpha_d.powi(2) * (1.0 + 5.0 / inp.alpha_p.powi(2)) * r * r * (inp.l_pm.powi(2) + inp.l.powi(2))
}

/// Error-feedback rule; with `alpha_p = 1` it covers the uplink-only variant.
pub fn stepsize_ef21bc(inp: &StepsizeInputs) -> Result<f64> {
    inp.validate()?;
    inp.check_delta(Algorithm::Ef21Bc)?;
    Ok(from_eta(inp.l, eta_ef21bc(inp)))
}

/// Non-convex theoretical stepsize for any algorithm.
pub fn stepsize(alg: Algorithm, inp: &StepsizeInputs) -> Result<f64> {
    match alg {
        Algorithm::Marina => stepsize_marina(inp),
        Algorithm::Marina2 => stepsize_marina2(inp),
        Algorithm::Dasha => stepsize_dasha(inp),
        Algorithm::Ef21 => stepsize_ef21bc(&StepsizeInputs { alpha_p: 1.0, ..inp.clone() }),
        Algorithm::Ef21Bc => stepsize_ef21bc(inp),
    }
}

/// PŁ stepsize. Needs `μ > 0`.
pub fn stepsize_pl(alg: Algorithm, inp: &StepsizeInputs) -> Result<f64> {
    inp.validate()?;
    if !(inp.mu > 0.0) {
        return Err(Error::Domain {
            msg: "PL stepsize needs mu > 0; use the non-convex stepsize".into(),
            max_delta: None,
        });
    }
    let mu = inp.mu;
    let cd = inp.c_delta();
    match alg {
        Algorithm::Marina => Err(Error::InvalidArgument("no PL stepsize rule for the baseline".into())),
        Algorithm::Marina2 => {
            inp.check_delta(alg)?;
            let eta = 2.0 * eta_marina2(inp);
            Ok(from_eta(inp.l, eta).min(inp.p / (2.0 * mu)))
        }
        Algorithm::Dasha => {
            inp.check_delta(alg)?;
            let (w, a, p) = (inp.omega, inp.a, inp.p);
            if a > 1.0 / (2.0 * w + 1.0) * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!("momentum a = {a} exceeds 1/(2ω+1)")));
            }
            let den = 1.0 - 2.0 * w * a * a - (1.0 - a).powi(2) - a / 2.0;
            if !(den > 0.0) {
                return Err(Error::Domain {
                    msg: format!("momentum a = {a} leaves no contraction margin"),
                    max_delta: None,
                });
            }
            let eta = (8.0 * w * (inp.l_pm.powi(2) + inp.l.powi(2)) / den
                + (1.0 - p) / inp.b as f64 * inp.cal_l_pm.powi(2) * (20.0 * w / den + 4.0 / p))
                * inp.robust_factor();
            let kappa = kappa(inp.big_b, 8.0 * cd + (8.0 * cd / inp.g as f64).sqrt())?;
            Ok(from_eta(inp.l, eta)
                .min(p / (2.0 * mu * kappa))
                .min(a / (2.0 * mu * kappa)))
        }
        Algorithm::Ef21 | Algorithm::Ef21Bc => {
            inp.check_delta(alg)?;
            let alpha_p = if alg == Algorithm::Ef21 { 1.0 } else { inp.alpha_p };
            let r = 1.0 + (8.0 * cd).sqrt();
            let eta = 64.0 / inp.alpha_d.powi(2)
                * (1.0 + 10.0 / alpha_p.powi(2) * (1.0 - alpha_p / 4.0))
                * r
                * r
                * (inp.l_pm.powi(2) + inp.l.powi(2));
            let kappa = kappa(inp.big_b, 8.0 * cd + (8.0 * cd).sqrt())?;
            Ok(from_eta(inp.l, eta)
                .min(inp.alpha_d / (8.0 * kappa * mu))
                .min(alpha_p / (4.0 * kappa * mu)))
        }
    }
}

fn kappa(big_b: f64, term: f64) -> Result<f64> {
    let k = 1.0 - big_b * term;
    if k > 0.0 {
        Ok(k)
    } else {
        Err(Error::Domain {
            msg: "heterogeneity bound leaves no descent (kappa <= 0)".into(),
            max_delta: None,
        })
    }
}
