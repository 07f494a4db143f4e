//! Electrochemical models of one representative unit.

pub mod banded;
pub mod dfn;
pub mod kinetics;
pub mod particle;
pub mod reduced;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dfn::{DfnModel, ElectrochemState, HeatTerms, MeshSpec, NewtonOptions};
pub use reduced::{ReducedModel, ReducedState};

use crate::error::Result;
use crate::params::DfnParameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    #[default]
    Dfn,
    Reduced,
}

impl std::str::FromStr for Fidelity {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dfn" => Ok(Fidelity::Dfn),
            "reduced" => Ok(Fidelity::Reduced),
            other => Err(crate::error::Error::Config(format!(
                "unknown fidelity {other:?}, expected dfn or reduced"
            ))),
        }
    }
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fidelity::Dfn => "dfn",
            Fidelity::Reduced => "reduced",
        })
    }
}

/// Either electrochemical model behind one interface.
#[derive(Debug, Clone)]
pub enum CellModel {
    Dfn(DfnModel),
    Reduced(ReducedModel),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            CellModel::Dfn($m) => $e,
            CellModel::Reduced($m) => $e,
        }
    };
}

impl CellModel {
    pub fn new(
        fidelity: Fidelity,
        params: Arc<DfnParameters>,
        mesh: MeshSpec,
        soc: f64,
        temperature: f64,
    ) -> Result<Self> {
        Ok(match fidelity {
            Fidelity::Dfn => CellModel::Dfn(DfnModel::new(params, mesh, soc, temperature)?),
            Fidelity::Reduced => CellModel::Reduced(ReducedModel::new(params, mesh, soc, temperature)?),
        })
    }

    pub fn fidelity(&self) -> Fidelity {
        match self {
            CellModel::Dfn(_) => Fidelity::Dfn,
            CellModel::Reduced(_) => Fidelity::Reduced,
        }
    }

    pub fn params(&self) -> &DfnParameters {
        delegate!(self, m => m.params())
    }

    pub fn mesh(&self) -> &MeshSpec {
        delegate!(self, m => m.mesh())
    }

    pub fn step(&mut self, current: f64, temperature: f64, dt: f64) -> Result<()> {
        delegate!(self, m => m.step(current, temperature, dt))
    }

    pub fn terminal_voltage(&self) -> f64 {
        delegate!(self, m => m.terminal_voltage())
    }

    pub fn heat_generation(&self, temperature: f64) -> f64 {
        delegate!(self, m => m.heat_generation(temperature))
    }

    pub fn soc(&self) -> f64 {
        delegate!(self, m => m.soc())
    }

    pub fn total_lithium(&self) -> f64 {
        delegate!(self, m => m.total_lithium())
    }

    pub fn plating_margin(&self) -> f64 {
        delegate!(self, m => m.plating_margin())
    }

    pub fn current_density(&self) -> f64 {
        match self {
            CellModel::Dfn(m) => m.state().current_density,
            CellModel::Reduced(m) => m.state().current_density,
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            CellModel::Dfn(m) => m.state().time,
            CellModel::Reduced(m) => m.state().time,
        }
    }
}
