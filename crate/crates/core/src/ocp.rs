//! Open-circuit potential curves.
//!
//! Curves are selected by name from the parameter file. The two built-in fits
//! are the Dualfoil graphite (MCMB 2528) and LiCoO2 curves that ship with the
//! PyBaMM `Marquis2019` parameter set; a tabulated curve with linear
//! interpolation covers any other chemistry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcpCurve {
    GraphiteMcmb2528,
    LicoO2Dualfoil,
    Table {
        stoichiometry: Vec<f64>,
        voltage: Vec<f64>,
    },
}

impl OcpCurve {
    /// Evaluates the curve, rejecting stoichiometries outside [0, 1].
    pub fn evaluate(&self, sto: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&sto) || !sto.is_finite() {
            return Err(Error::Domain(format!(
                "stoichiometry {sto} outside [0, 1]"
            )));
        }
        Ok(self.evaluate_unchecked(sto))
    }

    /// Evaluates without the domain check. Newton iterates may leave [0, 1]
    /// transiently; the fits are smooth there.
    pub fn evaluate_unchecked(&self, sto: f64) -> f64 {
        match self {
            OcpCurve::GraphiteMcmb2528 => graphite_mcmb2528(sto),
            OcpCurve::LicoO2Dualfoil => lico2_dualfoil(sto),
            OcpCurve::Table {
                stoichiometry,
                voltage,
            } => interpolate(stoichiometry, voltage, sto),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OcpCurve::Table {
            stoichiometry,
            voltage,
        } = self
        {
            if stoichiometry.len() < 2 || stoichiometry.len() != voltage.len() {
                return Err(Error::InvalidParameters(
                    "ocp table needs >= 2 points and matching lengths".into(),
                ));
            }
            if stoichiometry.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameters(
                    "ocp table stoichiometry must be strictly increasing".into(),
                ));
            }
            if voltage.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameters("ocp table voltage not finite".into()));
            }
        }
        Ok(())
    }
}

fn graphite_mcmb2528(x: f64) -> f64 {
    0.194 + 1.5 * (-120.0 * x).exp() + 0.0351 * ((x - 0.286) / 0.083).tanh()
        - 0.0045 * ((x - 0.849) / 0.119).tanh()
        - 0.035 * ((x - 0.9233) / 0.05).tanh()
        - 0.0147 * ((x - 0.5) / 0.034).tanh()
        - 0.102 * ((x - 0.194) / 0.142).tanh()
        - 0.022 * ((x - 0.9) / 0.0164).tanh()
        - 0.011 * ((x - 0.124) / 0.0226).tanh()
        + 0.0155 * ((x - 0.105) / 0.029).tanh()
}

fn lico2_dualfoil(y: f64) -> f64 {
    let s = 1.062 * y;
    2.16216 + 0.07645 * (30.834 - 54.4806 * s).tanh() + 2.1581 * (52.294 - 50.294 * s).tanh()
        - 0.14169 * (11.0923 - 19.8543 * s).tanh()
        + 0.2051 * (1.4684 - 5.4888 * s).tanh()
        + 0.2531 * ((-s + 0.56478) / 0.1316).tanh()
        - 0.02167 * ((s - 0.525) / 0.006).tanh()
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}
