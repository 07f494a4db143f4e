//! Finite-volume Doyle-Fuller-Newman model of one representative unit.
//!
//! Macroscale cells run from the negative current collector (x = 0) through
//! the separator to the positive current collector. Electrode cells carry a
//! radial particle mesh. Each step is backward Euler: particle fields are
//! eliminated analytically (they are linear in the surface flux), and the
//! remaining electrolyte concentration, the two potentials and the
//! interfacial current are solved together by Newton's method on a banded
//! Jacobian.
//!
//! Sign convention: applied current density I > 0 is discharge; molar flux
//! j > 0 leaves the particle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::banded::{BandedLu, BandedMatrix};
use super::kinetics::{exchange_current_density_unchecked, inverse_butler_volmer};
use super::particle::{ParticleMesh, ParticleStepper};
use crate::error::{Error, Result};
use crate::params::{DfnParameters, Electrode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub n_neg: usize,
    pub n_sep: usize,
    pub n_pos: usize,
    pub n_r: usize,
    /// Electrochemical time step, s.
    pub dt: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            n_neg: 20,
            n_sep: 20,
            n_pos: 20,
            n_r: 20,
            dt: 0.05,
        }
    }
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_neg < 3 || self.n_sep < 3 || self.n_pos < 3 || self.n_r < 3 {
            return Err(Error::Config("all mesh counts must be >= 3".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Doubles every count and halves the time step.
    pub fn refined(&self) -> Self {
        Self {
            n_neg: 2 * self.n_neg,
            n_sep: 2 * self.n_sep,
            n_pos: 2 * self.n_pos,
            n_r: 2 * self.n_r,
            dt: 0.5 * self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Max-norm tolerance on the scaled residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of times a failed step may be split in half.
    pub max_halvings: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 4,
        }
    }
}

/// Discretized fields of one unit.
///
/// `phi_s`, `j` and `c_s` are indexed over electrode cells only: the
/// negative-electrode cells first, then the positive ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrochemState {
    /// mol/m^3, one per macroscale cell
    pub c_e: Vec<f64>,
    /// V
    pub phi_e: Vec<f64>,
    /// V
    pub phi_s: Vec<f64>,
    /// mol/(m^2 s)
    pub j: Vec<f64>,
    /// mol/m^3, one radial profile per electrode cell
    pub c_s: Vec<Vec<f64>>,
    /// A/m^2
    pub current_density: f64,
    /// K
    pub temperature: f64,
    /// s
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Negative,
    Separator,
    Positive,
}

/// Static per-cell geometry and the unknown layout.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub n_cells: usize,
    pub n_neg: usize,
    pub n_pos: usize,
    pub region: Vec<Region>,
    pub dx: Vec<f64>,
    pub porosity: Vec<f64>,
    /// porosity^bruggeman
    pub tortuosity_factor: Vec<f64>,
    /// Cell index of each electrode cell.
    pub electrode_cells: Vec<usize>,
    /// Electrode index of each cell (None in the separator).
    pub electrode_of_cell: Vec<Option<usize>>,
    offsets: Vec<usize>,
    n_unknowns: usize,
    kl: usize,
    ku: usize,
}

impl Geometry {
    pub fn new(p: &DfnParameters, mesh: &MeshSpec) -> Self {
        let n_cells = mesh.n_neg + mesh.n_sep + mesh.n_pos;
        let mut region = Vec::with_capacity(n_cells);
        let mut dx = Vec::with_capacity(n_cells);
        let mut porosity = Vec::with_capacity(n_cells);
        let mut tortuosity_factor = Vec::with_capacity(n_cells);
        let push = |r, n: usize, l: f64, eps: f64, b: f64, region: &mut Vec<Region>,
                        dx: &mut Vec<f64>, porosity: &mut Vec<f64>, tf: &mut Vec<f64>| {
            for _ in 0..n {
                region.push(r);
                dx.push(l / n as f64);
                porosity.push(eps);
                tf.push(eps.powf(b));
            }
        };
        push(Region::Negative, mesh.n_neg, p.negative.thickness, p.negative.porosity,
            p.negative.bruggeman, &mut region, &mut dx, &mut porosity, &mut tortuosity_factor);
        push(Region::Separator, mesh.n_sep, p.separator.thickness, p.separator.porosity,
            p.separator.bruggeman, &mut region, &mut dx, &mut porosity, &mut tortuosity_factor);
        push(Region::Positive, mesh.n_pos, p.positive.thickness, p.positive.porosity,
            p.positive.bruggeman, &mut region, &mut dx, &mut porosity, &mut tortuosity_factor);

        let mut electrode_cells = Vec::new();
        let mut electrode_of_cell = vec![None; n_cells];
        let mut offsets = Vec::with_capacity(n_cells + 1);
        let mut off = 0;
        for k in 0..n_cells {
            offsets.push(off);
            if region[k] == Region::Separator {
                off += 2;
            } else {
                electrode_of_cell[k] = Some(electrode_cells.len());
                electrode_cells.push(k);
                off += 4;
            }
        }
        offsets.push(off);
        let (mut kl, mut ku) = (0, 0);
        for k in 0..n_cells {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n_cells - 1);
            for row in offsets[k]..offsets[k + 1] {
                for col in offsets[lo]..offsets[hi + 1] {
                    if col > row {
                        ku = ku.max(col - row);
                    } else {
                        kl = kl.max(row - col);
                    }
                }
            }
        }
        Self {
            n_cells,
            n_neg: mesh.n_neg,
            n_pos: mesh.n_pos,
            region,
            dx,
            porosity,
            tortuosity_factor,
            electrode_cells,
            electrode_of_cell,
            offsets,
            n_unknowns: off,
            kl,
            ku,
        }
    }

    pub fn side_of_electrode(&self, e: usize) -> Electrode {
        if e < self.n_neg {
            Electrode::Negative
        } else {
            Electrode::Positive
        }
    }
}

/// Volume-averaged heat generation split by mechanism, W/m^3.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatTerms {
    pub reaction_irreversible: f64,
    pub reaction_reversible: f64,
    pub solid_ohmic: f64,
    pub electrolyte_ohmic: f64,
}

impl HeatTerms {
    pub fn total(&self) -> f64 {
        self.reaction_irreversible + self.reaction_reversible + self.solid_ohmic + self.electrolyte_ohmic
    }
}

#[derive(Debug, Clone)]
pub struct DfnModel {
    params: Arc<DfnParameters>,
    mesh: MeshSpec,
    geo: Geometry,
    particle_neg: ParticleMesh,
    particle_pos: ParticleMesh,
    newton: NewtonOptions,
    state: ElectrochemState,
    lu_cache: Option<(BandedLu, f64)>,
}

/// Everything fixed during one implicit step.
struct StepContext<'a> {
    p: &'a DfnParameters,
    geo: &'a Geometry,
    prev: &'a ElectrochemState,
    current: f64,
    temperature: f64,
    dt: f64,
    i_ref: f64,
    f_rt: f64,
    ratio_kd: f64,
    c_e0: f64,
    phi_base_pos: f64,
    sigma_eff: [f64; 2],
    a_s: [f64; 2],
    c_max: [f64; 2],
    k0: [f64; 2],
    surf_base: Vec<f64>,
    surf_gain: Vec<f64>,
    bases: Vec<Vec<f64>>,
    steppers: [ParticleStepper; 2],
}

fn side_index(side: Electrode) -> usize {
    match side {
        Electrode::Negative => 0,
        Electrode::Positive => 1,
    }
}

impl DfnModel {
    /// Uniform rest state at the given SOC and temperature.
    pub fn new(params: Arc<DfnParameters>, mesh: MeshSpec, soc: f64, temperature: f64) -> Result<Self> {
        params.validate()?;
        mesh.validate()?;
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::Domain(format!("soc {soc} outside [0, 1]")));
        }
        let geo = Geometry::new(&params, &mesh);
        let x = params.negative.stoichiometry_at_soc(soc);
        let y = params.positive.stoichiometry_at_soc(soc);
        let un = params.negative.ocp.evaluate(x)?;
        let up = params.positive.ocp.evaluate(y)?;
        let n_el = geo.electrode_cells.len();
        let mut phi_s = Vec::with_capacity(n_el);
        let mut c_s = Vec::with_capacity(n_el);
        for e in 0..n_el {
            match geo.side_of_electrode(e) {
                Electrode::Negative => {
                    phi_s.push(0.0);
                    c_s.push(vec![x * params.negative.max_concentration; mesh.n_r]);
                }
                Electrode::Positive => {
                    phi_s.push(up - un);
                    c_s.push(vec![y * params.positive.max_concentration; mesh.n_r]);
                }
            }
        }
        let state = ElectrochemState {
            c_e: vec![params.electrolyte.initial_concentration; geo.n_cells],
            phi_e: vec![-un; geo.n_cells],
            phi_s,
            j: vec![0.0; n_el],
            c_s,
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
            newton: NewtonOptions::default(),
            state,
            lu_cache: None,
        })
    }

    pub fn with_newton(mut self, opts: NewtonOptions) -> Self {
        self.newton = opts;
        self
    }

    pub fn params(&self) -> &DfnParameters {
        &self.params
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geo
    }

    pub fn state(&self) -> &ElectrochemState {
        &self.state
    }

    /// Replaces the fields, e.g. to restore a snapshot.
    pub fn set_state(&mut self, state: ElectrochemState) {
        self.state = state;
        self.lu_cache = None;
    }

    fn particle_mesh(&self, side: Electrode) -> &ParticleMesh {
        match side {
            Electrode::Negative => &self.particle_neg,
            Electrode::Positive => &self.particle_pos,
        }
    }

    /// Advances one backward-Euler step of length `dt` at current density
    /// `current` (A/m^2) and uniform temperature `temperature`.
    pub fn step(&mut self, current: f64, temperature: f64, dt: f64) -> Result<()> {
        if !(temperature > 0.0) || !(dt > 0.0) || !current.is_finite() {
            return Err(Error::Domain(format!(
                "invalid step inputs I = {current}, T = {temperature}, dt = {dt}"
            )));
        }
        self.step_with_halving(current, temperature, dt, self.newton.max_halvings)
    }

    fn step_with_halving(&mut self, current: f64, temperature: f64, dt: f64, budget: u32) -> Result<()> {
        match self.try_step(current, temperature, dt) {
            Ok(()) => Ok(()),
            Err(e @ Error::NewtonDivergence { .. }) | Err(e @ Error::LinearSolve(_)) => {
                if budget == 0 {
                    return Err(e);
                }
                self.lu_cache = None;
                self.step_with_halving(current, temperature, 0.5 * dt, budget - 1)?;
                self.step_with_halving(current, temperature, 0.5 * dt, budget - 1)
            }
            Err(e) => Err(e),
        }
    }

    fn context(&self, current: f64, temperature: f64, dt: f64) -> StepContext<'_> {
        let p = &*self.params;
        let prev = &self.state;
        let steppers = [
            ParticleStepper::new(&self.particle_neg, p.solid_diffusivity(Electrode::Negative, temperature), dt),
            ParticleStepper::new(&self.particle_pos, p.solid_diffusivity(Electrode::Positive, temperature), dt),
        ];
        let n_el = self.geo.electrode_cells.len();
        let mut bases = Vec::with_capacity(n_el);
        let mut surf_base = Vec::with_capacity(n_el);
        let mut surf_gain = Vec::with_capacity(n_el);
        for e in 0..n_el {
            let st = &steppers[side_index(self.geo.side_of_electrode(e))];
            let b = st.base(&prev.c_s[e]);
            let (sb, sg) = st.surface_affine(&b);
            surf_base.push(sb);
            surf_gain.push(sg);
            bases.push(b);
        }
        StepContext {
            p,
            geo: &self.geo,
            prev,
            current,
            temperature,
            dt,
            i_ref: p.current_density(p.c_rate_current(1.0)),
            f_rt: p.cell.faraday / (p.cell.gas_constant * temperature),
            ratio_kd: p.diffusional_conductivity_ratio(temperature),
            c_e0: p.electrolyte.initial_concentration,
            phi_base_pos: prev.phi_s[self.geo.n_neg],
            sigma_eff: [p.negative.effective_conductivity(), p.positive.effective_conductivity()],
            a_s: [p.negative.surface_area_density(), p.positive.surface_area_density()],
            c_max: [p.negative.max_concentration, p.positive.max_concentration],
            k0: [
                p.rate_constant(Electrode::Negative, temperature),
                p.rate_constant(Electrode::Positive, temperature),
            ],
            surf_base,
            surf_gain,
            bases,
            steppers,
        }
    }

    fn try_step(&mut self, current: f64, temperature: f64, dt: f64) -> Result<()> {
        let opts = self.newton;
        let cached = match self.lu_cache.take() {
            Some((lu, cdt)) if cdt == dt => Some(lu),
            _ => None,
        };
        let (u, lu) = {
            let ctx = self.context(current, temperature, dt);
            let u0 = ctx.pack(&self.state);
            ctx.newton_solve(u0, cached, &opts)?
        };
        let ctx = self.context(current, temperature, dt);
        let new_state = ctx.unpack(&u)?;
        drop(ctx);
        self.state = new_state;
        self.lu_cache = Some((lu, dt));
        Ok(())
    }

    /// Cell voltage: solid potential at the positive collector minus that at
    /// the negative collector. Units are in parallel so this is also the
    /// cell voltage.
    pub fn terminal_voltage(&self) -> f64 {
        let p = &*self.params;
        let s = &self.state;
        let i = s.current_density;
        let dxn = self.geo.dx[0];
        let dxp = self.geo.dx[self.geo.n_cells - 1];
        let pos_face = s.phi_s[s.phi_s.len() - 1] - 0.5 * dxp * i / p.positive.effective_conductivity();
        let neg_face = s.phi_s[0] + 0.5 * dxn * i / p.negative.effective_conductivity();
        pos_face - neg_face
    }

    /// Volume-averaged stoichiometry of one electrode.
    pub fn mean_stoichiometry(&self, side: Electrode) -> f64 {
        let mesh = self.particle_mesh(side);
        let (mut num, mut den) = (0.0, 0.0);
        for (e, &k) in self.geo.electrode_cells.iter().enumerate() {
            if self.geo.side_of_electrode(e) == side {
                num += self.geo.dx[k] * mesh.mean(&self.state.c_s[e]);
                den += self.geo.dx[k];
            }
        }
        num / den / self.params.electrode(side).max_concentration
    }

    pub fn soc(&self) -> f64 {
        let n = &self.params.negative;
        let x = self.mean_stoichiometry(Electrode::Negative);
        ((x - n.stoichiometry_0) / (n.stoichiometry_100 - n.stoichiometry_0)).clamp(0.0, 1.0)
    }

    /// Lithium in solid and electrolyte of one unit, mol.
    pub fn total_lithium(&self) -> f64 {
        let p = &*self.params;
        let mut per_area = 0.0;
        for k in 0..self.geo.n_cells {
            per_area += self.geo.dx[k] * self.geo.porosity[k] * self.state.c_e[k];
        }
        for (e, &k) in self.geo.electrode_cells.iter().enumerate() {
            let side = self.geo.side_of_electrode(e);
            let eps_s = p.electrode(side).active_fraction;
            per_area += self.geo.dx[k] * eps_s * self.particle_mesh(side).mean(&self.state.c_s[e]);
        }
        per_area * p.cell.unit_area
    }

    /// Surface concentration of electrode cell `e`.
    pub fn surface_concentration(&self, e: usize) -> f64 {
        let side = self.geo.side_of_electrode(e);
        let d = self.params.solid_diffusivity(side, self.state.temperature);
        self.particle_mesh(side).surface(&self.state.c_s[e], self.state.j[e], d)
    }

    /// Overpotential phi_s - phi_e - U(c_surf) of electrode cell `e`.
    pub fn overpotential(&self, e: usize) -> f64 {
        let side = self.geo.side_of_electrode(e);
        let k = self.geo.electrode_cells[e];
        let ep = self.params.electrode(side);
        let sto = self.surface_concentration(e) / ep.max_concentration;
        self.state.phi_s[e] - self.state.phi_e[k] - ep.ocp.evaluate_unchecked(sto)
    }

    /// Smallest phi_s - phi_e over the negative electrode; a negative value
    /// marks conditions for lithium plating.
    pub fn plating_margin(&self) -> f64 {
        (0..self.geo.n_neg)
            .map(|e| self.state.phi_s[e] - self.state.phi_e[self.geo.electrode_cells[e]])
            .fold(f64::INFINITY, f64::min)
    }

    /// sum over the negative electrode of a_s F j dx, A/m^2.
    pub fn reaction_current(&self, side: Electrode) -> f64 {
        let p = &*self.params;
        let a = p.electrode(side).surface_area_density();
        self.geo
            .electrode_cells
            .iter()
            .enumerate()
            .filter(|(e, _)| self.geo.side_of_electrode(*e) == side)
            .map(|(e, &k)| self.geo.dx[k] * a * p.cell.faraday * self.state.j[e])
            .sum()
    }

    /// Heat generation terms at `temperature`, volume averaged over the unit.
    pub fn heat_terms(&self, temperature: f64) -> HeatTerms {
        let p = &*self.params;
        let g = &self.geo;
        let s = &self.state;
        let f = p.cell.faraday;
        let mut h = HeatTerms::default();
        for (e, &k) in g.electrode_cells.iter().enumerate() {
            let ep = p.electrode(g.side_of_electrode(e));
            let q = ep.surface_area_density() * f * s.j[e] * g.dx[k];
            let eta = self.overpotential(e);
            h.reaction_irreversible += (q * eta).max(0.0);
            h.reaction_reversible += q * temperature * ep.entropic_coefficient;
        }
        // solid phase: interior faces plus the half cells at the collectors
        let i = s.current_density;
        for (lo, hi, sigma) in [
            (0, g.n_neg, p.negative.effective_conductivity()),
            (g.n_neg, g.n_neg + g.n_pos, p.positive.effective_conductivity()),
        ] {
            let dx = g.dx[g.electrode_cells[lo]];
            for e in lo..hi - 1 {
                let d = s.phi_s[e + 1] - s.phi_s[e];
                h.solid_ohmic += sigma / dx * d * d;
            }
            h.solid_ohmic += i * i * 0.5 * dx / sigma;
        }
        let ratio = p.diffusional_conductivity_ratio(temperature);
        let kappa: Vec<f64> = (0..g.n_cells)
            .map(|k| p.electrolyte_conductivity(s.c_e[k], temperature) * g.tortuosity_factor[k])
            .collect();
        for k in 0..g.n_cells - 1 {
            let gk = 1.0 / (0.5 * g.dx[k] / kappa[k] + 0.5 * g.dx[k + 1] / kappa[k + 1]);
            let dphi = s.phi_e[k + 1] - s.phi_e[k];
            let ie = -gk * (dphi + ratio * (s.c_e[k + 1].ln() - s.c_e[k].ln()));
            h.electrolyte_ohmic += -ie * dphi;
        }
        let l = p.unit_thickness();
        h.reaction_irreversible /= l;
        h.reaction_reversible /= l;
        h.solid_ohmic /= l;
        h.electrolyte_ohmic /= l;
        h
    }

    /// Total volumetric heat generation, W/m^3.
    pub fn heat_generation(&self, temperature: f64) -> f64 {
        self.heat_terms(temperature).total()
    }

    /// Largest scaled algebraic residual of the current fields, evaluated as
    /// if they were the solution of a step of length `dt` from themselves.
    /// Useful as a diagnostic for the potential/kinetics equations.
    pub fn algebraic_residual(&self) -> f64 {
        let s = &self.state;
        let ctx = self.context(s.current_density, s.temperature, self.mesh.dt);
        let u = ctx.pack(s);
        let mut r = vec![0.0; u.len()];
        ctx.residual(&u, &mut r);
        let g = &self.geo;
        let mut worst: f64 = 0.0;
        for k in 0..g.n_cells {
            // skip the electrolyte mass rows (they depend on the previous step)
            for row in g.offsets[k] + 1..g.offsets[k + 1] {
                worst = worst.max(r[row].abs());
            }
        }
        worst
    }
}

impl StepContext<'_> {
    fn pack(&self, s: &ElectrochemState) -> Vec<f64> {
        let g = self.geo;
        let mut u = vec![0.0; g.n_unknowns];
        for k in 0..g.n_cells {
            let o = g.offsets[k];
            u[o] = s.c_e[k] / self.c_e0;
            u[o + 1] = s.phi_e[k];
            if let Some(e) = g.electrode_of_cell[k] {
                let base = if e < g.n_neg { 0.0 } else { self.phi_base_pos };
                u[o + 2] = s.phi_s[e] - base;
                u[o + 3] = self.p.cell.faraday * s.j[e];
            }
        }
        u
    }

    fn unpack(&self, u: &[f64]) -> Result<ElectrochemState> {
        let g = self.geo;
        let f = self.p.cell.faraday;
        let n_el = g.electrode_cells.len();
        let mut s = ElectrochemState {
            c_e: vec![0.0; g.n_cells],
            phi_e: vec![0.0; g.n_cells],
            phi_s: vec![0.0; n_el],
            j: vec![0.0; n_el],
            c_s: Vec::with_capacity(n_el),
            current_density: self.current,
            temperature: self.temperature,
            time: self.prev.time + self.dt,
        };
        for k in 0..g.n_cells {
            let o = g.offsets[k];
            s.c_e[k] = u[o] * self.c_e0;
            s.phi_e[k] = u[o + 1];
            if s.c_e[k] <= 0.0 {
                return Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY });
            }
        }
        for (e, &k) in g.electrode_cells.iter().enumerate() {
            let o = g.offsets[k];
            let base = if e < g.n_neg { 0.0 } else { self.phi_base_pos };
            s.phi_s[e] = u[o + 2] + base;
            s.j[e] = u[o + 3] / f;
            let side = side_index(g.side_of_electrode(e));
            let c = self.steppers[side].update(&self.bases[e], s.j[e]);
            let cmax = self.c_max[side];
            if c.iter().any(|&v| !(v > 0.0 && v < cmax)) {
                return Err(Error::NewtonDivergence { iterations: 0, residual: f64::INFINITY });
            }
            s.c_s.push(c);
        }
        Ok(s)
    }

    /// Scaled residual of the coupled step equations.
    fn residual(&self, u: &[f64], r: &mut [f64]) {
        let g = self.geo;
        let p = self.p;
        let n = g.n_cells;
        let t = self.temperature;
        let f = p.cell.faraday;
        let tplus = p.electrolyte.transference_number;
        let alpha = p.cell.charge_transfer_coefficient;

        let mut ce = vec![0.0; n];
        let mut lnce = vec![0.0; n];
        let mut deff = vec![0.0; n];
        let mut keff = vec![0.0; n];
        for k in 0..n {
            let c = (u[g.offsets[k]] * self.c_e0).max(1e-6 * self.c_e0);
            ce[k] = c;
            lnce[k] = c.ln();
            deff[k] = p.electrolyte_diffusivity(c, t) * g.tortuosity_factor[k];
            keff[k] = p.electrolyte_conductivity(c, t).max(1e-12) * g.tortuosity_factor[k];
        }
        // face fluxes, positive toward +x; index k is the face between k and k+1
        let mut n_face = vec![0.0; n + 1];
        let mut ie_face = vec![0.0; n + 1];
        for k in 0..n - 1 {
            let gd = 1.0 / (0.5 * g.dx[k] / deff[k] + 0.5 * g.dx[k + 1] / deff[k + 1]);
            let gk = 1.0 / (0.5 * g.dx[k] / keff[k] + 0.5 * g.dx[k + 1] / keff[k + 1]);
            n_face[k + 1] = -gd * (ce[k + 1] - ce[k]);
            let dphi = u[g.offsets[k + 1] + 1] - u[g.offsets[k] + 1];
            ie_face[k + 1] = -gk * (dphi + self.ratio_kd * (lnce[k + 1] - lnce[k]));
        }

        for k in 0..n {
            let o = g.offsets[k];
            let (fj, a) = match g.electrode_of_cell[k] {
                Some(e) => (u[o + 3], self.a_s[side_index(g.side_of_electrode(e))]),
                None => (0.0, 0.0),
            };
            let mass = g.porosity[k] * g.dx[k] * (ce[k] - self.prev.c_e[k]) / self.dt
                + (n_face[k + 1] - n_face[k])
                - g.dx[k] * a * (1.0 - tplus) * fj / f;
            r[o] = mass * self.dt / (g.dx[k] * self.c_e0);
            r[o + 1] = ((ie_face[k + 1] - ie_face[k]) - g.dx[k] * a * fj) / self.i_ref;
        }

        // solid phase, each electrode separately
        for (side, lo, hi) in [(0usize, 0, g.n_neg), (1usize, g.n_neg, g.n_neg + g.n_pos)] {
            let k_lo = g.electrode_cells[lo];
            let dx = g.dx[k_lo];
            let gs = self.sigma_eff[side] / dx;
            for e in lo..hi {
                let k = g.electrode_cells[e];
                let o = g.offsets[k];
                let phi = u[o + 2];
                let left = if e == lo {
                    if side == 0 { self.current } else { 0.0 }
                } else {
                    -gs * (phi - u[g.offsets[k - 1] + 2])
                };
                let right = if e == hi - 1 {
                    if side == 0 { 0.0 } else { self.current }
                } else {
                    -gs * (u[g.offsets[k + 1] + 2] - phi)
                };
                let fj = u[o + 3];
                r[o + 2] = ((right - left) + dx * self.a_s[side] * fj) / self.i_ref;
            }
            if side == 0 {
                // reference: solid potential at the negative collector is zero
                let o = g.offsets[k_lo];
                let face = u[o + 2] + 0.5 * dx * self.current / self.sigma_eff[0];
                r[o + 2] = face * gs / self.i_ref;
            }
        }

        // kinetics
        for (e, &k) in g.electrode_cells.iter().enumerate() {
            let o = g.offsets[k];
            let side = side_index(g.side_of_electrode(e));
            let sd = g.side_of_electrode(e);
            let fj = u[o + 3];
            let cmax = self.c_max[side];
            let csurf = (self.surf_base[e] + self.surf_gain[e] * fj / f)
                .clamp(1e-9 * cmax, (1.0 - 1e-9) * cmax);
            let base = if side == 0 { 0.0 } else { self.phi_base_pos };
            let phis = u[o + 2] + base;
            let ocp = p.electrode(sd).ocp.evaluate_unchecked(csurf / cmax);
            let eta = phis - u[o + 1] - ocp;
            let i0 = if alpha == 0.5 {
                f * self.k0[side] * (ce[k] * (cmax - csurf) * csurf).sqrt()
            } else {
                exchange_current_density_unchecked(p, sd, ce[k], csurf, t)
            };
            let eta_bv = inverse_butler_volmer(fj, i0, self.f_rt, alpha);
            r[o + 3] = self.f_rt * (eta - eta_bv);
        }
    }

    fn jacobian(&self, u: &[f64], r0: &[f64]) -> BandedMatrix {
        let g = self.geo;
        let n = g.n_cells;
        let mut jac = BandedMatrix::zeros(g.n_unknowns, g.kl, g.ku);
        let mut up = u.to_vec();
        let mut rp = vec![0.0; u.len()];
        for color in 0..3 {
            for slot in 0..4 {
                let mut any = false;
                let mut steps = vec![0.0; n];
                for k in (color..n).step_by(3) {
                    let o = g.offsets[k];
                    if o + slot < g.offsets[k + 1] {
                        let h = 1e-7 * (1.0 + u[o + slot].abs());
                        up[o + slot] = u[o + slot] + h;
                        steps[k] = h;
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                self.residual(&up, &mut rp);
                for k in (color..n).step_by(3) {
                    if steps[k] == 0.0 {
                        continue;
                    }
                    let col = g.offsets[k] + slot;
                    let lo = k.saturating_sub(1);
                    let hi = (k + 1).min(n - 1);
                    for row in g.offsets[lo]..g.offsets[hi + 1] {
                        let d = (rp[row] - r0[row]) / steps[k];
                        if d != 0.0 {
                            jac.set(row, col, d);
                        }
                    }
                    up[col] = u[col];
                }
            }
        }
        jac
    }

    fn newton_solve(
        &self,
        mut u: Vec<f64>,
        cached: Option<BandedLu>,
        opts: &NewtonOptions,
    ) -> Result<(Vec<f64>, BandedLu)> {
        let m = u.len();
        let mut r = vec![0.0; m];
        self.residual(&u, &mut r);
        let mut norm = max_abs(&r);
        let mut lu = cached;
        let mut fresh = false;
        let mut prev_norm = f64::INFINITY;
        for _ in 0..opts.max_iterations {
            if norm < opts.tolerance {
                let lu = match lu {
                    Some(lu) => lu,
                    None => self.jacobian(&u, &r).factor()?,
                };
                return Ok((u, lu));
            }
            if lu.is_none() || (!fresh && norm > 0.1 * prev_norm) {
                lu = Some(self.jacobian(&u, &r).factor()?);
                fresh = true;
            }
            let mut du: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.as_ref().expect("factorized").solve_in_place(&mut du);
            let mut scale = 1.0;
            let mut accepted = false;
            let mut trial = vec![0.0; m];
            let mut rt = vec![0.0; m];
            for _ in 0..10 {
                for i in 0..m {
                    trial[i] = u[i] + scale * du[i];
                }
                self.residual(&trial, &mut rt);
                let nt = max_abs(&rt);
                if nt.is_finite() && nt < norm {
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                if fresh {
                    return Err(Error::NewtonDivergence {
                        iterations: opts.max_iterations,
                        residual: norm,
                    });
                }
                // stale Jacobian; rebuild and retry
                lu = None;
                continue;
            }
            prev_norm = norm;
            u.copy_from_slice(&trial);
            r.copy_from_slice(&rt);
            norm = max_abs(&r);
            fresh = false;
        }
        Err(Error::NewtonDivergence {
            iterations: opts.max_iterations,
            residual: norm,
        })
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}
