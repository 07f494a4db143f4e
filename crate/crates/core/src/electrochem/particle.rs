//! Finite-volume radial diffusion in a spherical particle.
//!
//! Shells of equal thickness; fluxes across shell faces; surface flux `j`
//! (mol/m^2/s, positive out of the particle) enters the outermost shell only.
//! Implicit Euler makes the update linear in `j`, so for a given time step the
//! new field is `c = base - j * response` and the surface concentration is
//! `c_surf = surf_base + j * surf_gain`.

#[derive(Debug, Clone)]
pub struct ParticleMesh {
    pub radius: f64,
    pub shells: usize,
    /// Shell volumes divided by 4 pi.
    pub volumes: Vec<f64>,
    /// Outer face areas divided by 4 pi.
    pub face_areas: Vec<f64>,
}

impl ParticleMesh {
    pub fn new(radius: f64, shells: usize) -> Self {
        let dr = radius / shells as f64;
        let volumes = (0..shells)
            .map(|i| {
                let (a, b) = (i as f64 * dr, (i + 1) as f64 * dr);
                (b * b * b - a * a * a) / 3.0
            })
            .collect();
        let face_areas = (0..shells)
            .map(|i| {
                let r = (i + 1) as f64 * dr;
                r * r
            })
            .collect();
        Self {
            radius,
            shells,
            volumes,
            face_areas,
        }
    }

    pub fn dr(&self) -> f64 {
        self.radius / self.shells as f64
    }

    /// Volume of the whole particle divided by 4 pi.
    pub fn total_volume(&self) -> f64 {
        self.radius.powi(3) / 3.0
    }

    /// Volume-averaged concentration.
    pub fn mean(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.volumes).map(|(c, v)| c * v).sum::<f64>() / self.total_volume()
    }

    /// Surface concentration extrapolated from the outer shell using the
    /// surface flux boundary condition D dc/dr = -j.
    pub fn surface(&self, c: &[f64], j: f64, diffusivity: f64) -> f64 {
        c[self.shells - 1] - 0.5 * self.dr() * j / diffusivity
    }
}

/// Factorized implicit-Euler operator for one (D, dt) pair.
#[derive(Debug, Clone)]
pub struct ParticleStepper {
    mesh: ParticleMesh,
    diffusivity: f64,
    dt: f64,
    // Thomas-algorithm factors
    lower: Vec<f64>,
    diag_inv: Vec<f64>,
    upper: Vec<f64>,
    /// D * (face area) / dr for the n - 1 interior faces.
    conductance: Vec<f64>,
    /// Response of the field to unit surface flux.
    response: Vec<f64>,
}

impl ParticleStepper {
    pub fn new(mesh: &ParticleMesh, diffusivity: f64, dt: f64) -> Self {
        let n = mesh.shells;
        let dr = mesh.dr();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            diag[i] = mesh.volumes[i] / dt;
            if i + 1 < n {
                let g = diffusivity * mesh.face_areas[i] / dr;
                diag[i] += g;
                sup[i] = -g;
            }
            if i > 0 {
                let g = diffusivity * mesh.face_areas[i - 1] / dr;
                diag[i] += g;
                sub[i] = -g;
            }
        }
        // forward elimination factors
        let mut diag_inv = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut d = diag[0];
        diag_inv[0] = 1.0 / d;
        for i in 1..n {
            lower[i] = sub[i] * diag_inv[i - 1];
            d = diag[i] - lower[i] * sup[i - 1];
            diag_inv[i] = 1.0 / d;
        }
        let conductance = (0..n - 1)
            .map(|i| diffusivity * mesh.face_areas[i] / dr)
            .collect();
        let mut stepper = Self {
            mesh: mesh.clone(),
            diffusivity,
            dt,
            lower,
            diag_inv,
            upper: sup,
            conductance,
            response: vec![0.0; n],
        };
        let mut rhs = vec![0.0; n];
        rhs[n - 1] = mesh.face_areas[n - 1];
        stepper.response = stepper.solve(rhs);
        stepper
    }

    fn solve(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.lower[i] * rhs[i - 1];
        }
        rhs[n - 1] *= self.diag_inv[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) * self.diag_inv[i];
        }
        rhs
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Zero-flux update of the field from the previous step. Solved for the
    /// increment so that a uniform field is reproduced bit for bit.
    pub fn base(&self, previous: &[f64]) -> Vec<f64> {
        let n = previous.len();
        let mut rhs = vec![0.0; n];
        for (i, g) in self.conductance.iter().enumerate() {
            let flux = g * (previous[i + 1] - previous[i]);
            rhs[i] += flux;
            rhs[i + 1] -= flux;
        }
        let delta = self.solve(rhs);
        previous.iter().zip(delta).map(|(c, d)| c + d).collect()
    }

    /// Coefficients (surf_base, surf_gain) with c_surf = surf_base + j * surf_gain.
    pub fn surface_affine(&self, base: &[f64]) -> (f64, f64) {
        let n = self.mesh.shells;
        let half = 0.5 * self.mesh.dr() / self.diffusivity;
        (base[n - 1], -self.response[n - 1] - half)
    }

    /// New field for surface flux `j`.
    pub fn update(&self, base: &[f64], j: f64) -> Vec<f64> {
        base.iter()
            .zip(&self.response)
            .map(|(b, r)| b - j * r)
            .collect()
    }
}
