//! Electrochemical parameter sets.
//!
//! A parameter set is a TOML file with one table per region plus an
//! `[electrolyte]` and a `[cell]` table. The shipped LiPF6 / graphite / LiCoO2
//! set lives in `data/marquis2019.toml`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::OcpCurve;

const MARQUIS2019: &str = include_str!("../data/marquis2019.toml");

/// Which porous electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electrode {
    Negative,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeParameters {
    /// m
    pub thickness: f64,
    /// m
    pub particle_radius: f64,
    /// Solid diffusivity at the reference temperature, m^2/s.
    pub solid_diffusivity: f64,
    /// J/mol
    pub solid_diffusivity_activation: f64,
    /// Active material volume fraction.
    pub active_fraction: f64,
    /// Electrolyte volume fraction.
    pub porosity: f64,
    /// Bulk solid conductivity, S/m.
    pub conductivity: f64,
    /// Reaction rate constant k0 at the reference temperature.
    pub rate_constant: f64,
    /// J/mol
    pub rate_activation: f64,
    /// mol/m^3
    pub max_concentration: f64,
    /// Stoichiometry at 0 % SOC.
    pub stoichiometry_0: f64,
    /// Stoichiometry at 100 % SOC.
    pub stoichiometry_100: f64,
    pub ocp: OcpCurve,
    /// dU/dT, V/K.
    pub entropic_coefficient: f64,
    #[serde(default = "default_bruggeman")]
    pub bruggeman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorParameters {
    pub thickness: f64,
    pub porosity: f64,
    #[serde(default = "default_bruggeman")]
    pub bruggeman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrolyteParameters {
    /// mol/m^3
    pub initial_concentration: f64,
    pub transference_number: f64,
    /// D_e(c) = diffusivity * exp(diffusivity_concentration_coefficient * c), m^2/s.
    pub diffusivity: f64,
    /// 1/(mol/m^3)
    pub diffusivity_concentration_coefficient: f64,
    pub diffusivity_activation: f64,
    /// kappa(c) = sum_i a_i (c / 1000)^i, S/m.
    pub conductivity_polynomial: Vec<f64>,
    pub conductivity_activation: f64,
    /// d ln f / d ln c_e; zero means no activity correction.
    #[serde(default)]
    pub activity_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParameters {
    pub charge_transfer_coefficient: f64,
    pub reference_temperature: f64,
    pub faraday: f64,
    pub gas_constant: f64,
    pub lower_cutoff: f64,
    pub upper_cutoff: f64,
    pub capacity_ah: f64,
    pub units_per_cell: u32,
    /// Electrode area of one unit, m^2.
    pub unit_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfnParameters {
    pub negative: ElectrodeParameters,
    pub separator: SeparatorParameters,
    pub positive: ElectrodeParameters,
    pub electrolyte: ElectrolyteParameters,
    pub cell: CellParameters,
}

fn default_bruggeman() -> f64 {
    1.5
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("{name} must be > 0, got {v}")))
    }
}

impl ElectrodeParameters {
    fn validate(&self, label: &str) -> Result<()> {
        positive(&format!("{label}.thickness"), self.thickness)?;
        positive(&format!("{label}.particle_radius"), self.particle_radius)?;
        positive(&format!("{label}.solid_diffusivity"), self.solid_diffusivity)?;
        positive(&format!("{label}.active_fraction"), self.active_fraction)?;
        positive(&format!("{label}.porosity"), self.porosity)?;
        positive(&format!("{label}.conductivity"), self.conductivity)?;
        positive(&format!("{label}.rate_constant"), self.rate_constant)?;
        positive(&format!("{label}.max_concentration"), self.max_concentration)?;
        if self.active_fraction + self.porosity > 1.0 + 1e-12 {
            return Err(Error::InvalidParameters(format!(
                "{label}: active_fraction + porosity exceeds 1"
            )));
        }
        for s in [self.stoichiometry_0, self.stoichiometry_100] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameters(format!(
                    "{label}: stoichiometry window outside [0, 1]"
                )));
            }
        }
        if self.stoichiometry_0 == self.stoichiometry_100 {
            return Err(Error::InvalidParameters(format!(
                "{label}: empty stoichiometry window"
            )));
        }
        self.ocp.validate()
    }

    /// Specific interfacial area of spherical particles, 1/m.
    pub fn surface_area_density(&self) -> f64 {
        3.0 * self.active_fraction / self.particle_radius
    }

    pub fn effective_conductivity(&self) -> f64 {
        self.conductivity * self.active_fraction.powf(self.bruggeman)
    }

    pub fn stoichiometry_at_soc(&self, soc: f64) -> f64 {
        self.stoichiometry_0 + soc * (self.stoichiometry_100 - self.stoichiometry_0)
    }
}

impl DfnParameters {
    /// The shipped LiPF6 / graphite / LiCoO2 parameter set.
    pub fn marquis2019() -> Self {
        Self::from_toml_str(MARQUIS2019).expect("shipped parameter set is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: DfnParameters = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.negative.validate("negative")?;
        self.positive.validate("positive")?;
        if self.negative.stoichiometry_0 >= self.negative.stoichiometry_100 {
            return Err(Error::InvalidParameters(
                "negative: stoichiometry_0 must be below stoichiometry_100".into(),
            ));
        }
        positive("separator.thickness", self.separator.thickness)?;
        positive("separator.porosity", self.separator.porosity)?;
        if self.separator.porosity > 1.0 {
            return Err(Error::InvalidParameters("separator porosity > 1".into()));
        }
        let e = &self.electrolyte;
        positive("electrolyte.initial_concentration", e.initial_concentration)?;
        positive("electrolyte.diffusivity", e.diffusivity)?;
        if !(0.0 < e.transference_number && e.transference_number < 1.0) {
            return Err(Error::InvalidParameters(
                "transference number must lie in (0, 1)".into(),
            ));
        }
        if e.conductivity_polynomial.is_empty() {
            return Err(Error::InvalidParameters("empty conductivity polynomial".into()));
        }
        let c = &self.cell;
        if !(0.0 < c.charge_transfer_coefficient && c.charge_transfer_coefficient < 1.0) {
            return Err(Error::InvalidParameters(
                "charge transfer coefficient must lie in (0, 1)".into(),
            ));
        }
        positive("cell.reference_temperature", c.reference_temperature)?;
        positive("cell.faraday", c.faraday)?;
        positive("cell.gas_constant", c.gas_constant)?;
        positive("cell.capacity_ah", c.capacity_ah)?;
        positive("cell.unit_area", c.unit_area)?;
        if c.units_per_cell == 0 {
            return Err(Error::InvalidParameters("units_per_cell must be >= 1".into()));
        }
        if c.lower_cutoff >= c.upper_cutoff {
            return Err(Error::InvalidParameters("lower_cutoff must be below upper_cutoff".into()));
        }
        Ok(())
    }

    pub fn electrode(&self, side: Electrode) -> &ElectrodeParameters {
        match side {
            Electrode::Negative => &self.negative,
            Electrode::Positive => &self.positive,
        }
    }

    /// Arrhenius factor exp(E/R (1/T_ref - 1/T)).
    pub fn arrhenius(&self, activation: f64, temperature: f64) -> f64 {
        (activation / self.cell.gas_constant
            * (1.0 / self.cell.reference_temperature - 1.0 / temperature))
            .exp()
    }

    pub fn solid_diffusivity(&self, side: Electrode, temperature: f64) -> f64 {
        let e = self.electrode(side);
        e.solid_diffusivity * self.arrhenius(e.solid_diffusivity_activation, temperature)
    }

    pub fn rate_constant(&self, side: Electrode, temperature: f64) -> f64 {
        let e = self.electrode(side);
        e.rate_constant * self.arrhenius(e.rate_activation, temperature)
    }

    /// Bulk electrolyte diffusivity D_e(c, T), m^2/s.
    pub fn electrolyte_diffusivity(&self, c: f64, temperature: f64) -> f64 {
        let e = &self.electrolyte;
        e.diffusivity
            * (e.diffusivity_concentration_coefficient * c).exp()
            * self.arrhenius(e.diffusivity_activation, temperature)
    }

    /// Bulk ionic conductivity kappa(c, T), S/m.
    pub fn electrolyte_conductivity(&self, c: f64, temperature: f64) -> f64 {
        let e = &self.electrolyte;
        let m = c / 1000.0;
        let poly = e
            .conductivity_polynomial
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * m + a);
        poly * self.arrhenius(e.conductivity_activation, temperature)
    }

    /// Ratio k_D,eff / k_eff = (2RT/F)(t+ - 1)(1 + d ln f / d ln c).
    pub fn diffusional_conductivity_ratio(&self, temperature: f64) -> f64 {
        let c = &self.cell;
        2.0 * c.gas_constant * temperature / c.faraday
            * (self.electrolyte.transference_number - 1.0)
            * (1.0 + self.electrolyte.activity_slope)
    }

    /// Thickness of the electrochemically active part of one unit, m.
    pub fn unit_thickness(&self) -> f64 {
        self.negative.thickness + self.separator.thickness + self.positive.thickness
    }

    /// Electrode area carrying the cell current, summed over parallel units.
    pub fn cell_area(&self) -> f64 {
        self.cell.unit_area * self.cell.units_per_cell as f64
    }

    /// Current density (A/m^2) for a cell current (A); units share current equally.
    pub fn current_density(&self, cell_current: f64) -> f64 {
        cell_current / self.cell_area()
    }

    /// Charge (A h) held in the negative electrode stoichiometry window, whole cell.
    pub fn negative_window_capacity_ah(&self) -> f64 {
        let n = &self.negative;
        self.cell.faraday
            * n.max_concentration
            * n.active_fraction
            * n.thickness
            * self.cell_area()
            * (n.stoichiometry_100 - n.stoichiometry_0)
            / 3600.0
    }

    /// Rest voltage at 100 % SOC from the window endpoints.
    pub fn full_charge_voltage(&self) -> f64 {
        self.positive
            .ocp
            .evaluate_unchecked(self.positive.stoichiometry_100)
            - self
                .negative
                .ocp
                .evaluate_unchecked(self.negative.stoichiometry_100)
    }

    /// Rest voltage at a given SOC with uniform stoichiometry.
    pub fn rest_voltage(&self, soc: f64) -> f64 {
        self.positive
            .ocp
            .evaluate_unchecked(self.positive.stoichiometry_at_soc(soc))
            - self
                .negative
                .ocp
                .evaluate_unchecked(self.negative.stoichiometry_at_soc(soc))
    }

    /// Current (A) of a given C-rate for the whole cell.
    pub fn c_rate_current(&self, c_rate: f64) -> f64 {
        c_rate * self.cell.capacity_ah
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_set_loads() {
        let p = DfnParameters::marquis2019();
        assert_eq!(p.cell.units_per_cell, 34);
        assert!((p.cell_area() - 0.137 * 0.207).abs() < 1e-9);
    }

    #[test]
    fn window_capacity_matches_rating() {
        let p = DfnParameters::marquis2019();
        let cap = p.negative_window_capacity_ah();
        assert!((cap - p.cell.capacity_ah).abs() / p.cell.capacity_ah < 1e-3, "{cap}");
    }

    #[test]
    fn full_charge_voltage_is_window_difference() {
        let p = DfnParameters::marquis2019();
        let up = p.positive.ocp.evaluate(p.positive.stoichiometry_100).unwrap();
        let un = p.negative.ocp.evaluate(p.negative.stoichiometry_100).unwrap();
        assert!((p.full_charge_voltage() - (up - un)).abs() < 1e-15);
        assert!(p.full_charge_voltage() < p.cell.upper_cutoff);
        assert!(p.rest_voltage(0.0) > p.cell.lower_cutoff);
    }

    #[test]
    fn rejects_bad_sets() {
        let mut p = DfnParameters::marquis2019();
        p.cell.charge_transfer_coefficient = 1.0;
        assert!(p.validate().is_err());
        let mut p = DfnParameters::marquis2019();
        p.negative.porosity = 0.5;
        assert!(p.validate().is_err());
        let mut p = DfnParameters::marquis2019();
        p.cell.lower_cutoff = 5.0;
        assert!(p.validate().is_err());
        let mut p = DfnParameters::marquis2019();
        p.separator.thickness = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn arrhenius_is_one_at_reference() {
        let p = DfnParameters::marquis2019();
        assert_eq!(p.arrhenius(40_000.0, p.cell.reference_temperature), 1.0);
        assert!(p.arrhenius(40_000.0, 253.15) < 0.1);
    }
}
