//! Scalar Young's-modulus interpolation laws.

use crate::error::{Error, Result};

/// Material constants shared by the state and adversary problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub e0: f64,
    pub e_d: f64,
    pub nu: f64,
    /// SIMP exponent on the filtered density.
    pub p: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            e0: 1.0,
            e_d: 0.7,
            nu: 0.3,
            p: 4.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.e0 > 0.0) {
            return Err(Error::param("E0", self.e0, "positive and finite"));
        }
        if !(self.e_d > 0.0 && self.e_d < self.e0) {
            return Err(Error::param("E_D", self.e_d, "in (0, E0)"));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::param("nu", self.nu, "in [0, 0.5)"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::param("p", self.p, "at least 1"));
        }
        Ok(())
    }

    /// `1/E_D - 1/E0`, the slope of the compliance-like quantity `1/E(δ)`.
    pub fn softening(&self) -> f64 {
        1.0 / self.e_d - 1.0 / self.e0
    }

    /// RAMP parameter for which the RAMP law coincides with the inverse law.
    pub fn q_inverse(&self) -> f64 {
        (self.e0 - self.e_d) / self.e_d
    }

    pub fn simp(&self, rho_tilde: f64) -> f64 {
        rho_tilde.powf(self.p)
    }

    pub fn simp_derivative(&self, rho_tilde: f64) -> f64 {
        self.p * rho_tilde.powf(self.p - 1.0)
    }
}

/// Interpolation between `E0` at `δ = 0` and `E_D` at `δ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialLaw {
    /// Harmonic mean `((1-δ)/E0 + δ/E_D)^-1`.
    Inverse,
    /// `E_D + (1-δ)/(1+qδ) (E0 - E_D)`; `q = 0` is linear.
    Ramp(f64),
}

impl MaterialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MaterialLaw::Inverse => Ok(()),
            MaterialLaw::Ramp(q) if q >= 0.0 && q.is_finite() => Ok(()),
            MaterialLaw::Ramp(q) => Err(Error::param("q", q, "nonnegative")),
        }
    }

    /// True when the inner problem is known to be concave under this law.
    pub fn is_concave(&self, params: &MaterialParams) -> bool {
        match *self {
            MaterialLaw::Inverse => true,
            MaterialLaw::Ramp(q) => q >= params.q_inverse() * (1.0 - 1e-12),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::param("delta", delta, "in [0, 1]"));
    }
    Ok(())
}

pub fn young_inverse(delta: f64, params: &MaterialParams) -> Result<f64> {
    check_delta(delta)?;
    Ok(inverse_unchecked(delta, params))
}

pub fn young_ramp(delta: f64, q: f64, params: &MaterialParams) -> Result<f64> {
    check_delta(delta)?;
    MaterialLaw::Ramp(q).validate()?;
    Ok(ramp_unchecked(delta, q, params))
}

fn inverse_unchecked(delta: f64, params: &MaterialParams) -> f64 {
    if delta == 0.0 {
        return params.e0;
    }
    if delta == 1.0 {
        return params.e_d;
    }
    1.0 / ((1.0 - delta) / params.e0 + delta / params.e_d)
}

fn ramp_unchecked(delta: f64, q: f64, params: &MaterialParams) -> f64 {
    params.e_d + (1.0 - delta) / (1.0 + q * delta) * (params.e0 - params.e_d)
}

/// `(E, dE/dδ, d²E/dδ²)` at `δ`.
///
/// No range check; callers inside the barrier keep `δ` in `(0, 1)`.
pub fn young_derivs(delta: f64, law: MaterialLaw, params: &MaterialParams) -> (f64, f64, f64) {
    match law {
        MaterialLaw::Inverse => {
            let e = inverse_unchecked(delta, params);
            let c = params.softening();
            (e, -e * e * c, 2.0 * e * e * e * c * c)
        }
        MaterialLaw::Ramp(q) => {
            let span = params.e0 - params.e_d;
            let s = 1.0 + q * delta;
            (
                ramp_unchecked(delta, q, params),
                -(1.0 + q) * span / (s * s),
                2.0 * q * (1.0 + q) * span / (s * s * s),
            )
        }
    }
}

pub fn young(delta: f64, law: MaterialLaw, params: &MaterialParams) -> f64 {
    match law {
        MaterialLaw::Inverse => inverse_unchecked(delta, params),
        MaterialLaw::Ramp(q) => ramp_unchecked(delta, q, params),
    }
}

/// `ρ̃^p E_law(δ)`.
pub fn effective_modulus(
    rho_tilde: f64,
    delta: f64,
    params: &MaterialParams,
    law: MaterialLaw,
) -> f64 {
    params.simp(rho_tilde) * young(delta, law, params)
}

/// Compliance increase in percent when a budget `D` is spread uniformly
/// over a solid design of volume fraction `V`: the material is the series
/// mix of a share `D/V` of fully degraded and `1 − D/V` of intact material.
///
/// For a black-and-white design this is a lower bound on the worst case.
pub fn uniform_spread_increase(budget: f64, volume_fraction: f64, params: &MaterialParams) -> Result<f64> {
    if !(volume_fraction > 0.0 && volume_fraction <= 1.0) {
        return Err(Error::param("V", volume_fraction, "in (0, 1]"));
    }
    let share = budget / volume_fraction;
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::param("D", budget, "in [0, V]"));
    }
    let compliance_factor = params.e0 * ((1.0 - share) / params.e0 + share / params.e_d);
    Ok(100.0 * (compliance_factor - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p07() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn inverse_oracles() {
        let p = p07();
        assert_eq!(young_inverse(0.0, &p).unwrap(), 1.0);
        assert_eq!(young_inverse(1.0, &p).unwrap(), 0.7);
        assert!((young_inverse(0.5, &p).unwrap() - 0.7 / 0.85).abs() < 1e-15);
        assert!((young_inverse(0.4, &p).unwrap() - 0.8537).abs() < 5e-5);
        assert!(young_inverse(1.1, &p).is_err());
        assert!(young_inverse(-0.1, &p).is_err());
    }

    #[test]
    fn ramp_oracles() {
        let p = p07();
        assert!((young_ramp(0.25, 0.0, &p).unwrap() - 0.925).abs() < 1e-15);
        let q = p.q_inverse();
        let a = young_ramp(0.3, q, &p).unwrap();
        let b = young_inverse(0.3, &p).unwrap();
        assert!((a - b).abs() <= 1e-14);
        for q in [0.0, 0.3, 7.0] {
            assert_eq!(young_ramp(0.0, q, &p).unwrap(), 1.0);
        }
        assert!(young_ramp(0.5, -0.1, &p).is_err());
    }

    #[test]
    fn effective_modulus_oracles() {
        let p = p07();
        assert_eq!(effective_modulus(1.0, 0.0, &p, MaterialLaw::Inverse), 1.0);
        assert_eq!(effective_modulus(0.5, 0.0, &p, MaterialLaw::Inverse), 1.0 / 16.0);
        let e = effective_modulus(0.8, 0.5, &p, MaterialLaw::Inverse);
        assert!((e - 0.4096 * 0.7 / 0.85).abs() < 1e-15);
        assert!((e - 0.337318).abs() < 5e-7);
    }

    #[test]
    fn linear_law_has_zero_curvature() {
        let p = p07();
        for i in 0..=10 {
            let (_, _, d2) = young_derivs(i as f64 / 10.0, MaterialLaw::Ramp(0.0), &p);
            assert_eq!(d2, 0.0);
        }
    }

    #[test]
    fn inverse_law_is_convex() {
        let p = MaterialParams { e_d: 0.01, ..p07() };
        for i in 0..50 {
            let d = (i as f64 + 0.5) / 50.0;
            let (_, d1, d2) = young_derivs(d, MaterialLaw::Inverse, &p);
            assert!(d1 < 0.0 && d2 > 0.0);
        }
    }

    #[test]
    fn derivative_at_reference_point() {
        let p = p07();
        let h = 1e-6;
        let d = 0.37;
        let (_, d1, d2) = young_derivs(d, MaterialLaw::Inverse, &p);
        let fd1 = (young(d + h, MaterialLaw::Inverse, &p) - young(d - h, MaterialLaw::Inverse, &p)) / (2.0 * h);
        assert!((fd1 - d1).abs() / d1.abs() <= 1e-6);
        let h = 1e-4;
        let fd2 = (young(d + h, MaterialLaw::Inverse, &p) - 2.0 * young(d, MaterialLaw::Inverse, &p)
            + young(d - h, MaterialLaw::Inverse, &p))
            / (h * h);
        assert!((fd2 - d2).abs() / d2.abs() <= 1e-5);
    }

    #[test]
    fn params_validation() {
        assert!(p07().validate().is_ok());
        assert!(MaterialParams { e_d: 1.2, ..p07() }.validate().is_err());
        assert!(MaterialParams { nu: 0.5, ..p07() }.validate().is_err());
        assert!(MaterialParams { p: 0.5, ..p07() }.validate().is_err());
    }

    #[test]
    fn uniform_spread_limits() {
        assert_eq!(uniform_spread_increase(0.0, 0.5, &p07()).unwrap(), 0.0);
        let full = uniform_spread_increase(0.5, 0.5, &p07()).unwrap();
        assert!((full - 100.0 * (1.0 / 0.7 - 1.0)).abs() < 1e-12);
        assert!(uniform_spread_increase(0.6, 0.5, &p07()).is_err());
    }
}
