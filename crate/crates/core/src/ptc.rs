//! Electrical model of the PTC heating film.
//!
//! Resistance follows two exponential branches joined at the Curie
//! temperature; above it the resistance climbs steeply and the film limits
//! its own power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtcParameters {
    /// Resistance at the nominal temperature, ohm.
    pub r0: f64,
    /// Nominal temperature, K.
    pub t0: f64,
    /// Resistance at the reference temperature, ohm.
    pub r1: f64,
    /// Reference temperature, K.
    pub t1: f64,
    /// 1/K
    pub alpha0: f64,
    /// 1/K
    pub alpha1: f64,
    /// Largest drive voltage, V.
    pub v_max: f64,
}

impl Default for PtcParameters {
    fn default() -> Self {
        let (r0, t0, t1, alpha0) = (0.367, 298.15, 393.0, -0.0044);
        Self {
            r0,
            t0,
            // places the Curie point exactly at t1
            r1: r0 * (alpha0 * (t1 - t0)).exp(),
            t1,
            alpha0,
            alpha1: 0.937,
            v_max: 10.0,
        }
    }
}

impl PtcParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r1 > 0.0 && self.t0 > 0.0 && self.t1 > 0.0 && self.v_max > 0.0) {
            return Err(Error::InvalidParameters(
                "PTC resistances, temperatures and v_max must be > 0".into(),
            ));
        }
        let tc = self.curie_temperature()?;
        if !tc.is_finite() {
            return Err(Error::DegenerateParameters("Curie temperature not finite".into()));
        }
        Ok(())
    }

    /// Temperature where the two resistance branches meet.
    pub fn curie_temperature(&self) -> Result<f64> {
        if self.alpha0 == self.alpha1 {
            return Err(Error::DegenerateParameters("alpha0 == alpha1".into()));
        }
        Ok((self.r1.ln() - self.r0.ln() + self.alpha0 * self.t0 - self.alpha1 * self.t1)
            / (self.alpha0 - self.alpha1))
    }

    pub fn resistance(&self, t_film: f64) -> f64 {
        let tc = self.curie_temperature().unwrap_or(f64::INFINITY);
        if t_film < tc {
            self.r0 * (self.alpha0 * (t_film - self.t0)).exp()
        } else {
            self.r1 * (self.alpha1 * (t_film - self.t1)).exp()
        }
    }

    /// Joule power of the films for drive voltage `v`, W.
    pub fn power(&self, v: f64, t_film: f64) -> Result<f64> {
        if !(0.0..=self.v_max).contains(&v) {
            return Err(Error::CommandRange(format!(
                "PTC voltage {v} outside [0, {}]",
                self.v_max
            )));
        }
        Ok(v * v / self.resistance(t_film))
    }
}

pub fn curie_temperature(ptc: &PtcParameters) -> Result<f64> {
    ptc.curie_temperature()
}

pub fn ptc_resistance(ptc: &PtcParameters, t_film: f64) -> f64 {
    ptc.resistance(t_film)
}

pub fn ptc_power(ptc: &PtcParameters, v: f64, t_film: f64) -> Result<f64> {
    ptc.power(v, t_film)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curie_point_sits_at_reference_by_construction() {
        let p = PtcParameters::default();
        assert!((p.curie_temperature().unwrap() - p.t1).abs() < 1e-9);
    }

    #[test]
    fn tabulated_values_give_393_kelvin() {
        let p = PtcParameters {
            r1: 0.2418,
            ..PtcParameters::default()
        };
        let tc = p.curie_temperature().unwrap();
        assert!((tc - 393.0).abs() < 0.1, "{tc}");
    }

    #[test]
    fn equal_coefficients_are_degenerate() {
        let p = PtcParameters {
            alpha1: -0.0044,
            ..PtcParameters::default()
        };
        assert!(matches!(p.curie_temperature(), Err(Error::DegenerateParameters(_))));
        assert!(p.validate().is_err());
    }

    #[test]
    fn resistance_examples() {
        let p = PtcParameters::default();
        assert_eq!(p.resistance(298.15), 0.367);
        let r = p.resistance(253.15);
        let expected = 0.367 * (0.0044f64 * 45.0).exp();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.4474).abs() < 5e-5);
    }

    #[test]
    fn continuous_at_curie_point() {
        let p = PtcParameters {
            r1: 0.25,
            ..PtcParameters::default()
        };
        let tc = p.curie_temperature().unwrap();
        let below = p.r0 * (p.alpha0 * (tc - p.t0)).exp();
        let above = p.r1 * (p.alpha1 * (tc - p.t1)).exp();
        assert!((below - above).abs() / above < 1e-9);
        let eps = 1e-9;
        assert!((p.resistance(tc - eps) - p.resistance(tc + eps)).abs() / above < 1e-7);
    }

    #[test]
    fn power_examples() {
        let p = PtcParameters::default();
        assert_eq!(p.power(0.0, 253.15).unwrap(), 0.0);
        let q = p.power(10.0, 253.15).unwrap();
        assert!((q - 223.5).abs() < 0.1, "{q}");
        assert!(p.power(10.5, 253.15).is_err());
        assert!(p.power(-0.1, 253.15).is_err());
    }

    #[test]
    fn self_limiting_above_curie() {
        let p = PtcParameters::default();
        let mut prev = p.power(10.0, 393.0).unwrap();
        for t in [400.0, 410.0, 430.0] {
            let q = p.power(10.0, t).unwrap();
            assert!(q < prev);
            prev = q;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn power_nondecreasing_in_voltage_below_curie() {
        let p = PtcParameters::default();
        for t in [240.0, 273.15, 350.0] {
            let mut prev = 0.0;
            for k in 0..=100 {
                let q = p.power(0.1 * k as f64, t).unwrap();
                assert!(q >= prev);
                prev = q;
            }
        }
    }
}
