//! Through-thickness heat conduction in one half of the cell.
//!
//! The domain is [0, L_th] with a symmetry plane at x = 0 and the heated
//! aluminium plate at x = L_th. Edge convection enters as a volumetric sink
//! scaled by the perimeter-to-area ratio of the cross section.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParameters {
    /// Through-thickness conductivity, W/(m K).
    pub conductivity: f64,
    /// Conductivity used in the heated-boundary condition, W/(m K).
    pub boundary_conductivity: f64,
    /// Edge convection coefficient, W/(m^2 K).
    pub convection: f64,
    /// Volumetric heat capacity, J/(m^3 K).
    pub heat_capacity: f64,
    /// Half of the cell thickness, m.
    pub half_thickness: f64,
    pub l_y: f64,
    pub l_z: f64,
    /// Aluminium plate thickness, m. Treated as a perfect conductor.
    pub plate_thickness: f64,
    pub n_x: usize,
    /// s
    pub dt: f64,
}

impl Default for ThermalParameters {
    fn default() -> Self {
        Self {
            conductivity: 2.0,
            boundary_conductivity: 2.0,
            convection: 10.0,
            heat_capacity: 1.8e6,
            half_thickness: 5.3e-3,
            l_y: 0.137,
            l_z: 0.207,
            plate_thickness: 1e-3,
            n_x: 40,
            dt: 0.05,
        }
    }
}

impl ThermalParameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.conductivity,
            self.boundary_conductivity,
            self.convection,
            self.heat_capacity,
            self.half_thickness,
            self.l_y,
            self.l_z,
            self.plate_thickness,
            self.dt,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameters(
                "thermal parameters must be finite and > 0".into(),
            ));
        }
        if self.n_x < 5 {
            return Err(Error::InvalidParameters("thermal mesh needs n_x >= 5".into()));
        }
        Ok(())
    }

    /// Cross-sectional area A_yz, m^2.
    pub fn area(&self) -> f64 {
        self.l_y * self.l_z
    }

    /// Perimeter over area of the cross section, 1/m.
    pub fn edge_factor(&self) -> f64 {
        2.0 * (self.l_y + self.l_z) / (self.l_y * self.l_z)
    }

    /// Volume of the whole cell (both halves), m^3.
    pub fn cell_volume(&self) -> f64 {
        2.0 * self.half_thickness * self.area()
    }

    pub fn dx(&self) -> f64 {
        self.half_thickness / self.n_x as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureStats {
    pub t_avg: f64,
    pub t_m: f64,
    pub t_out: f64,
    pub t_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Cell-centred temperatures, K.
    pub temperatures: Vec<f64>,
    /// s
    pub time: f64,
    pub stats: TemperatureStats,
}

impl ThermalState {
    pub fn uniform(params: &ThermalParameters, temperature: f64) -> Result<Self> {
        Self::from_profile(vec![temperature; params.n_x], 0.0)
    }

    pub fn from_profile(temperatures: Vec<f64>, time: f64) -> Result<Self> {
        if temperatures.len() < 2 || temperatures.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Domain("temperatures must be finite and > 0 K".into()));
        }
        let stats = temperature_stats(&temperatures);
        Ok(Self {
            temperatures,
            time,
            stats,
        })
    }

    /// Stored heat of the whole cell relative to 0 K, J.
    pub fn stored_energy(&self, params: &ThermalParameters) -> f64 {
        let sum: f64 = self.temperatures.iter().sum();
        2.0 * params.area() * params.heat_capacity * params.dx() * sum
    }
}

/// Volume mean plus readouts at the symmetry plane and the heated face.
/// The centre value comes from a fit even in x; the face value is a linear
/// extrapolation of the last two cells.
pub fn temperature_stats(t: &[f64]) -> TemperatureStats {
    let n = t.len();
    let t_avg = t.iter().sum::<f64>() / n as f64;
    let t_m = t[0] - (t[1] - t[0]) / 8.0;
    let t_out = 1.5 * t[n - 1] - 0.5 * t[n - 2];
    TemperatureStats {
        t_avg,
        t_m,
        t_out,
        t_range: t_out - t_m,
    }
}

/// One implicit step with uniform source `q_gen` (W/m^3) and total film
/// power `q_ptc` (W, both films), against ambient `ambient` (K).
pub fn step_thermal(
    state: &ThermalState,
    q_gen: f64,
    q_ptc: f64,
    ambient: f64,
    params: &ThermalParameters,
    dt: f64,
) -> Result<ThermalState> {
    if !(q_gen.is_finite() && q_ptc.is_finite() && dt > 0.0 && ambient > 0.0) {
        return Err(Error::Domain(format!(
            "invalid thermal inputs q_gen = {q_gen}, q_ptc = {q_ptc}, dt = {dt}"
        )));
    }
    let n = state.temperatures.len();
    let dx = params.half_thickness / n as f64;
    let g = params.conductivity / dx;
    let sink = params.edge_factor() * params.convection * dx;
    let inflow = 0.5 * q_ptc / params.area() * params.conductivity / params.boundary_conductivity;
    let cap = params.heat_capacity * dx / dt;

    // solved for the increment so that equilibrium is reproduced exactly
    let t0 = &state.temperatures;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        diag[k] = cap + sink;
        rhs[k] += q_gen * dx + sink * (ambient - t0[k]);
        if k > 0 {
            diag[k] += g;
            lower[k] = -g;
        }
        if k + 1 < n {
            diag[k] += g;
            upper[k] = -g;
            let flux = g * (t0[k + 1] - t0[k]);
            rhs[k] += flux;
            rhs[k + 1] -= flux;
        }
    }
    rhs[n - 1] += inflow;
    let delta = solve_tridiagonal(&lower, &diag, &upper, rhs)?;
    let t = t0.iter().zip(delta).map(|(a, d)| a + d).collect();
    ThermalState::from_profile(t, state.time + dt)
}

fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    for k in 0..n {
        if k > 0 {
            d = diag[k] - lower[k] * c[k - 1];
        }
        if d == 0.0 || !d.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot in thermal solve at {k}")));
        }
        c[k] = upper[k] / d;
        rhs[k] = if k > 0 { (rhs[k] - lower[k] * rhs[k - 1]) / d } else { rhs[k] / d };
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptc::PtcParameters;

    #[test]
    fn equilibrium_is_unchanged() {
        let p = ThermalParameters::default();
        let s = ThermalState::uniform(&p, 263.15).unwrap();
        let next = step_thermal(&s, 0.0, 0.0, 263.15, &p, 0.05).unwrap();
        for t in &next.temperatures {
            assert!((t - 263.15).abs() < 1e-12);
        }
        assert_eq!(next.stats.t_range, 0.0);
    }

    #[test]
    fn adiabatic_energy_balance() {
        let p = ThermalParameters {
            convection: 1e-300,
            ..ThermalParameters::default()
        };
        let mut s = ThermalState::uniform(&p, 253.15).unwrap();
        for (q_gen, q_ptc, dt) in [(1e4, 200.0, 0.05), (0.0, 50.0, 1.0), (3e5, 0.0, 0.5)] {
            let before = s.stored_energy(&p);
            s = step_thermal(&s, q_gen, q_ptc, 253.15, &p, dt).unwrap();
            let gained = s.stored_energy(&p) - before;
            let input = (q_gen * p.cell_volume() + q_ptc) * dt;
            assert!((gained - input).abs() / input < 1e-9, "{gained} vs {input}");
        }
    }

    #[test]
    fn steady_state_flux_balance() {
        let p = ThermalParameters::default();
        let mut s = ThermalState::uniform(&p, 253.15).unwrap();
        for _ in 0..200 {
            s = step_thermal(&s, 0.0, 80.0, 253.15, &p, 1e5).unwrap();
        }
        let inflow = 0.5 * 80.0 / p.area();
        let loss: f64 = s
            .temperatures
            .iter()
            .map(|t| p.edge_factor() * p.convection * p.dx() * (t - 253.15))
            .sum();
        assert!((inflow - loss).abs() / inflow < 1e-6, "{inflow} vs {loss}");
    }

    #[test]
    fn decays_monotonically_to_ambient() {
        let p = ThermalParameters::default();
        let profile: Vec<f64> = (0..p.n_x).map(|k| 260.0 + 0.3 * k as f64).collect();
        let mut s = ThermalState::from_profile(profile, 0.0).unwrap();
        let dist = |s: &ThermalState| s.temperatures.iter().map(|t| (t - 253.15).abs()).fold(0.0, f64::max);
        let mut prev = dist(&s);
        for _ in 0..500 {
            s = step_thermal(&s, 0.0, 0.0, 253.15, &p, 50.0).unwrap();
            let d = dist(&s);
            assert!(d <= prev);
            prev = d;
        }
        assert!(prev < 5.0);
    }

    #[test]
    fn mesh_refinement_moves_outer_temperature_little() {
        let ptc = PtcParameters::default();
        let mut outs = Vec::new();
        for n_x in [40, 80] {
            let p = ThermalParameters {
                n_x,
                ..ThermalParameters::default()
            };
            let mut s = ThermalState::uniform(&p, 253.15).unwrap();
            for _ in 0..(600.0 / p.dt) as usize {
                let q = ptc.power(10.0, s.stats.t_out).unwrap();
                s = step_thermal(&s, 0.0, q, 253.15, &p, p.dt).unwrap();
            }
            outs.push(s.stats.t_out);
        }
        assert!((outs[0] - outs[1]).abs() < 0.05, "{outs:?}");
    }

    #[test]
    fn linear_profile_stats() {
        let n = 200;
        let l = 5.3e-3;
        let dx = l / n as f64;
        let t: Vec<f64> = (0..n).map(|k| 253.0 + 2.0 * (k as f64 + 0.5) * dx / l).collect();
        let s = temperature_stats(&t);
        assert!((s.t_avg - 254.0).abs() < 1e-9);
        assert!((s.t_out - 255.0).abs() < 1e-9);
        assert!((s.t_range - 2.0).abs() < 0.01);
    }

    #[test]
    fn heated_face_is_warmest() {
        let p = ThermalParameters::default();
        let ptc = PtcParameters::default();
        let mut s = ThermalState::uniform(&p, 253.15).unwrap();
        for k in 0..4000 {
            let v = if (k / 400) % 2 == 0 { 10.0 } else { 3.0 };
            let q = ptc.power(v, s.stats.t_out).unwrap();
            s = step_thermal(&s, 500.0, q, 253.15, &p, p.dt).unwrap();
            assert!(s.stats.t_range >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ThermalParameters { n_x: 4, ..Default::default() }.validate().is_err());
        assert!(ThermalParameters { convection: 0.0, ..Default::default() }.validate().is_err());
        assert!(ThermalParameters::default().validate().is_ok());
    }
}
