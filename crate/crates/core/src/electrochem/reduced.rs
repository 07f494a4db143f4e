//! Single particle model with electrolyte (reduced fidelity).
//!
//! One particle per electrode carries a uniform interfacial flux. The
//! electrolyte concentration is still resolved on the macroscale mesh and
//! advanced semi-implicitly (diffusivity frozen at the start of the step);
//! its potential follows from the known ionic current profile.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dfn::{Geometry, MeshSpec};
use super::kinetics::inverse_butler_volmer;
use super::particle::{ParticleMesh, ParticleStepper};
use crate::error::{Error, Result};
use crate::params::{DfnParameters, Electrode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub c_s_neg: Vec<f64>,
    pub c_s_pos: Vec<f64>,
    pub c_e: Vec<f64>,
    pub current_density: f64,
    pub temperature: f64,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    params: Arc<DfnParameters>,
    mesh: MeshSpec,
    geo: Geometry,
    particle_neg: ParticleMesh,
    particle_pos: ParticleMesh,
    state: ReducedState,
}

/// Derived electrical quantities of the current state.
#[derive(Debug, Clone, Copy)]
struct Readout {
    u_neg: f64,
    u_pos: f64,
    eta_neg: f64,
    eta_pos: f64,
    /// Electrolyte potential relative to cell 0.
    phi_e_mean_neg: f64,
    phi_e_mean_pos: f64,
    phi_e_interface: f64,
}

impl ReducedModel {
    pub fn new(params: Arc<DfnParameters>, mesh: MeshSpec, soc: f64, temperature: f64) -> Result<Self> {
        params.validate()?;
        mesh.validate()?;
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::Domain(format!("soc {soc} outside [0, 1]")));
        }
        let geo = Geometry::new(&params, &mesh);
        let x = params.negative.stoichiometry_at_soc(soc) * params.negative.max_concentration;
        let y = params.positive.stoichiometry_at_soc(soc) * params.positive.max_concentration;
        let state = ReducedState {
            c_s_neg: vec![x; mesh.n_r],
            c_s_pos: vec![y; mesh.n_r],
            c_e: vec![params.electrolyte.initial_concentration; geo.n_cells],
            current_density: 0.0,
            temperature,
            time: 0.0,
        };
        Ok(Self {
            particle_neg: ParticleMesh::new(params.negative.particle_radius, mesh.n_r),
            particle_pos: ParticleMesh::new(params.positive.particle_radius, mesh.n_r),
            params,
            mesh,
            geo,
            state,
        })
    }

    pub fn params(&self) -> &DfnParameters {
        &self.params
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn state(&self) -> &ReducedState {
        &self.state
    }

    pub fn set_state(&mut self, state: ReducedState) {
        self.state = state;
    }

    /// Uniform molar flux of each electrode for current density `i`.
    fn fluxes(&self, i: f64) -> (f64, f64) {
        let p = &*self.params;
        let f = p.cell.faraday;
        let jn = i / (f * p.negative.surface_area_density() * p.negative.thickness);
        let jp = -i / (f * p.positive.surface_area_density() * p.positive.thickness);
        (jn, jp)
    }

    pub fn step(&mut self, current: f64, temperature: f64, dt: f64) -> Result<()> {
        if !(temperature > 0.0) || !(dt > 0.0) || !current.is_finite() {
            return Err(Error::Domain(format!(
                "invalid step inputs I = {current}, T = {temperature}, dt = {dt}"
            )));
        }
        let p = &*self.params;
        let (jn, jp) = self.fluxes(current);
        let sn = ParticleStepper::new(&self.particle_neg, p.solid_diffusivity(Electrode::Negative, temperature), dt);
        let sp = ParticleStepper::new(&self.particle_pos, p.solid_diffusivity(Electrode::Positive, temperature), dt);
        let c_neg = sn.update(&sn.base(&self.state.c_s_neg), jn);
        let c_pos = sp.update(&sp.base(&self.state.c_s_pos), jp);
        let in_range = |c: &[f64], cmax: f64| c.iter().all(|&v| v > 0.0 && v < cmax);
        if !in_range(&c_neg, p.negative.max_concentration) || !in_range(&c_pos, p.positive.max_concentration) {
            return Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY });
        }

        // electrolyte: backward Euler with face conductances from c^n
        let g = &self.geo;
        let n = g.n_cells;
        let ce = &self.state.c_e;
        let tplus = p.electrolyte.transference_number;
        let f = p.cell.faraday;
        let deff: Vec<f64> = (0..n)
            .map(|k| p.electrolyte_diffusivity(ce[k], temperature) * g.tortuosity_factor[k])
            .collect();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            diag[k] = g.porosity[k] * g.dx[k] / dt;
            let src = match g.region[k] {
                super::dfn::Region::Negative => (1.0 - tplus) * current / (f * p.negative.thickness),
                super::dfn::Region::Separator => 0.0,
                super::dfn::Region::Positive => -(1.0 - tplus) * current / (f * p.positive.thickness),
            };
            rhs[k] = g.dx[k] * src;
        }
        for k in 0..n - 1 {
            let gd = 1.0 / (0.5 * g.dx[k] / deff[k] + 0.5 * g.dx[k + 1] / deff[k + 1]);
            let flux = gd * (ce[k + 1] - ce[k]);
            // solve for the increment so that rest states are exact
            rhs[k] += flux;
            rhs[k + 1] -= flux;
            diag[k] += gd;
            diag[k + 1] += gd;
            upper[k] = -gd;
            lower[k + 1] = -gd;
        }
        let delta = thomas(&lower, &diag, &upper, rhs);
        let c_e: Vec<f64> = ce.iter().zip(&delta).map(|(c, d)| c + d).collect();
        if c_e.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY });
        }
        self.state = ReducedState {
            c_s_neg: c_neg,
            c_s_pos: c_pos,
            c_e,
            current_density: current,
            temperature,
            time: self.state.time + dt,
        };
        Ok(())
    }

    fn surface(&self, side: Electrode, j: f64) -> f64 {
        let p = &*self.params;
        let d = p.solid_diffusivity(side, self.state.temperature);
        match side {
            Electrode::Negative => self.particle_neg.surface(&self.state.c_s_neg, j, d),
            Electrode::Positive => self.particle_pos.surface(&self.state.c_s_pos, j, d),
        }
    }

    fn readout(&self) -> Readout {
        let p = &*self.params;
        let g = &self.geo;
        let s = &self.state;
        let t = s.temperature;
        let i = s.current_density;
        let f = p.cell.faraday;
        let f_rt = f / (p.cell.gas_constant * t);
        let alpha = p.cell.charge_transfer_coefficient;
        let (jn, jp) = self.fluxes(i);

        // electrolyte potential from the piecewise-linear ionic current
        let n = g.n_cells;
        let ratio = p.diffusional_conductivity_ratio(t);
        let kappa: Vec<f64> = (0..n)
            .map(|k| p.electrolyte_conductivity(s.c_e[k], t) * g.tortuosity_factor[k])
            .collect();
        let (ln, ls, lp) = (p.negative.thickness, p.separator.thickness, p.positive.thickness);
        let mut phi = vec![0.0; n];
        let mut x = 0.0;
        for k in 0..n - 1 {
            x += g.dx[k];
            let ie = if x <= ln {
                i * x / ln
            } else if x <= ln + ls {
                i
            } else {
                i * (ln + ls + lp - x) / lp
            };
            let gk = 1.0 / (0.5 * g.dx[k] / kappa[k] + 0.5 * g.dx[k + 1] / kappa[k + 1]);
            phi[k + 1] = phi[k] - ie / gk - ratio * (s.c_e[k + 1].ln() - s.c_e[k].ln());
        }
        let mean = |lo: usize, hi: usize| {
            let (mut a, mut w) = (0.0, 0.0);
            for k in lo..hi {
                a += phi[k] * g.dx[k];
                w += g.dx[k];
            }
            a / w
        };
        let nn = g.n_neg;
        let ce_mean = |lo: usize, hi: usize| s.c_e[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;

        let csn = self.surface(Electrode::Negative, jn);
        let csp = self.surface(Electrode::Positive, jp);
        let cmn = p.negative.max_concentration;
        let cmp = p.positive.max_concentration;
        let k0n = p.rate_constant(Electrode::Negative, t);
        let k0p = p.rate_constant(Electrode::Positive, t);
        let i0 = |k0: f64, c_e: f64, cs: f64, cmax: f64| {
            let cs = cs.clamp(1e-9 * cmax, (1.0 - 1e-9) * cmax);
            f * k0 * c_e.powf(1.0 - alpha) * (cmax - cs).powf(1.0 - alpha) * cs.powf(alpha)
        };
        let i0n = i0(k0n, ce_mean(0, nn), csn, cmn);
        let i0p = i0(k0p, ce_mean(n - g.n_pos, n), csp, cmp);
        Readout {
            u_neg: p.negative.ocp.evaluate_unchecked(csn / cmn),
            u_pos: p.positive.ocp.evaluate_unchecked(csp / cmp),
            eta_neg: inverse_butler_volmer(f * jn, i0n, f_rt, alpha),
            eta_pos: inverse_butler_volmer(f * jp, i0p, f_rt, alpha),
            phi_e_mean_neg: mean(0, nn),
            phi_e_mean_pos: mean(n - g.n_pos, n),
            phi_e_interface: 0.5 * (phi[nn - 1] + phi[nn]),
        }
    }

    fn solid_drop(&self) -> f64 {
        let p = &*self.params;
        self.state.current_density
            * (p.negative.thickness / (3.0 * p.negative.effective_conductivity())
                + p.positive.thickness / (3.0 * p.positive.effective_conductivity()))
    }

    pub fn terminal_voltage(&self) -> f64 {
        let r = self.readout();
        r.u_pos - r.u_neg + r.eta_pos - r.eta_neg + (r.phi_e_mean_pos - r.phi_e_mean_neg) - self.solid_drop()
    }

    pub fn heat_generation(&self, temperature: f64) -> f64 {
        let p = &*self.params;
        let r = self.readout();
        let i = self.state.current_density;
        let v = self.terminal_voltage();
        let q = i * (r.u_pos - r.u_neg - v)
            + i * temperature * (p.negative.entropic_coefficient - p.positive.entropic_coefficient);
        q / p.unit_thickness()
    }

    pub fn soc(&self) -> f64 {
        let n = &self.params.negative;
        let x = self.particle_neg.mean(&self.state.c_s_neg) / n.max_concentration;
        ((x - n.stoichiometry_0) / (n.stoichiometry_100 - n.stoichiometry_0)).clamp(0.0, 1.0)
    }

    pub fn total_lithium(&self) -> f64 {
        let p = &*self.params;
        let g = &self.geo;
        let mut per_area = p.negative.thickness * p.negative.active_fraction * self.particle_neg.mean(&self.state.c_s_neg)
            + p.positive.thickness * p.positive.active_fraction * self.particle_pos.mean(&self.state.c_s_pos);
        for k in 0..g.n_cells {
            per_area += g.dx[k] * g.porosity[k] * self.state.c_e[k];
        }
        per_area * p.cell.unit_area
    }

    /// phi_s - phi_e at the negative electrode/separator interface.
    pub fn plating_margin(&self) -> f64 {
        let p = &*self.params;
        let r = self.readout();
        let i = self.state.current_density;
        let solid = -i * p.negative.thickness / (6.0 * p.negative.effective_conductivity());
        r.u_neg + r.eta_neg + solid - (r.phi_e_interface - r.phi_e_mean_neg)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    c[0] = upper[0] / d;
    rhs[0] /= d;
    for k in 1..n {
        d = diag[k] - lower[k] * c[k - 1];
        c[k] = upper[k] / d;
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / d;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrochem::dfn::DfnModel;

    fn params() -> Arc<DfnParameters> {
        Arc::new(DfnParameters::marquis2019())
    }

    #[test]
    fn rest_is_exact() {
        let p = params();
        let mut m = ReducedModel::new(p.clone(), MeshSpec::default(), 0.4, 260.0).unwrap();
        let v0 = m.terminal_voltage();
        assert!((v0 - p.rest_voltage(0.4)).abs() < 1e-12);
        let s0 = m.state().clone();
        for _ in 0..50 {
            m.step(0.0, 260.0, 0.05).unwrap();
        }
        assert_eq!(m.state().c_e, s0.c_e);
        assert_eq!(m.state().c_s_neg, s0.c_s_neg);
        assert_eq!(m.heat_generation(260.0), 0.0);
    }

    #[test]
    fn conserves_lithium_and_counts_charge() {
        let p = params();
        let i = p.current_density(p.c_rate_current(1.0));
        let mut m = ReducedModel::new(p, MeshSpec::default(), 0.8, 270.0).unwrap();
        let li = m.total_lithium();
        for _ in 0..600 {
            m.step(i, 270.0, 0.5).unwrap();
        }
        assert!((m.total_lithium() - li).abs() / li < 1e-10);
        assert!((m.soc() - (0.8 - 300.0 / 3600.0)).abs() < 1e-9);
    }

    #[test]
    fn tracks_full_model_under_pulses() {
        // (temperature, C-rate, voltage gap, relative heat gap)
        let p = params();
        let i1 = p.current_density(p.c_rate_current(1.0));
        for (t, c, dv_max, dq_max) in [(298.15, 2.0, 5e-3, 0.03), (263.15, 1.0, 0.015, 0.06), (253.15, 2.0, 0.1, 0.2)] {
            let i = c * i1;
            let mut full = DfnModel::new(p.clone(), MeshSpec::default(), 0.5, t).unwrap();
            let mut red = ReducedModel::new(p.clone(), MeshSpec::default(), 0.5, t).unwrap();
            let (mut qf, mut qr) = (0.0, 0.0);
            let (mut pf, mut pr) = (f64::INFINITY, f64::INFINITY);
            for k in 0..200 {
                let amp = if (k / 10) % 2 == 0 { -i } else { 1.05 * i };
                full.step(amp, t, 0.05).unwrap();
                red.step(amp, t, 0.05).unwrap();
                let dv = (full.terminal_voltage() - red.terminal_voltage()).abs();
                assert!(dv < dv_max, "T {t} step {k}: dv {dv}");
                pf = pf.min(full.plating_margin());
                pr = pr.min(red.plating_margin());
                qf += full.heat_generation(t);
                qr += red.heat_generation(t);
            }
            assert!((qr - qf).abs() / qf < dq_max, "T {t}: heat {qr} vs {qf}");
            // worst-case plating margin errs on the safe side
            assert!(pr <= pf, "T {t}: plating {pr} vs {pf}");
        }
    }

    #[test]
    fn plating_margin_shrinks_under_charge() {
        let p = params();
        let i = p.current_density(p.c_rate_current(1.0));
        let mut m = ReducedModel::new(p, MeshSpec::default(), 0.9, 253.15).unwrap();
        let rest = m.plating_margin();
        m.step(-3.0 * i, 253.15, 0.05).unwrap();
        assert!(m.plating_margin() < rest);
    }
}
