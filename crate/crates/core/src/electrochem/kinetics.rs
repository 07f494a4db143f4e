//! Interfacial kinetics: open-circuit potential, exchange current density and
//! Butler-Volmer flux.

use crate::error::{Error, Result};
use crate::params::{DfnParameters, Electrode};

/// Largest |F eta / (R T)| accepted before the exponentials are considered
/// to overflow.
pub const OVERPOTENTIAL_GUARD: f64 = 500.0;

pub fn open_circuit_potential(params: &DfnParameters, side: Electrode, sto: f64) -> Result<f64> {
    params.electrode(side).ocp.evaluate(sto)
}

/// i0 = F k0 c_e^(1-a) (c_max - c_s)^(1-a) c_s^a, A/m^2.
pub fn exchange_current_density(
    params: &DfnParameters,
    side: Electrode,
    c_e: f64,
    c_s_surf: f64,
    temperature: f64,
) -> Result<f64> {
    let c_max = params.electrode(side).max_concentration;
    if !(c_s_surf > 0.0 && c_s_surf < c_max) {
        return Err(Error::Domain(format!(
            "surface concentration {c_s_surf} outside (0, {c_max})"
        )));
    }
    if c_e <= 0.0 || !c_e.is_finite() {
        return Err(Error::Domain(format!("electrolyte concentration {c_e} must be > 0")));
    }
    if temperature <= 0.0 {
        return Err(Error::Domain(format!("temperature {temperature} must be > 0")));
    }
    Ok(exchange_current_density_unchecked(params, side, c_e, c_s_surf, temperature))
}

pub(crate) fn exchange_current_density_unchecked(
    params: &DfnParameters,
    side: Electrode,
    c_e: f64,
    c_s_surf: f64,
    temperature: f64,
) -> f64 {
    let alpha = params.cell.charge_transfer_coefficient;
    let c_max = params.electrode(side).max_concentration;
    let k0 = params.rate_constant(side, temperature);
    let f = params.cell.faraday;
    if alpha == 0.5 {
        f * k0 * (c_e * (c_max - c_s_surf) * c_s_surf).sqrt()
    } else {
        f * k0
            * c_e.powf(1.0 - alpha)
            * (c_max - c_s_surf).powf(1.0 - alpha)
            * c_s_surf.powf(alpha)
    }
}

/// Molar flux j = (i0/F)[exp((1-a) F eta / RT) - exp(-a F eta / RT)], mol/(m^2 s).
pub fn butler_volmer_flux(
    params: &DfnParameters,
    i0: f64,
    eta: f64,
    temperature: f64,
    alpha: f64,
) -> Result<f64> {
    if i0 < 0.0 || temperature <= 0.0 || !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "invalid Butler-Volmer inputs i0 = {i0}, T = {temperature}, alpha = {alpha}"
        )));
    }
    let x = params.cell.faraday * eta / (params.cell.gas_constant * temperature);
    if !x.is_finite() || x.abs() > OVERPOTENTIAL_GUARD {
        return Err(Error::OverpotentialOverflow(x.abs()));
    }
    Ok(bv_dimensionless(x, alpha) * i0 / params.cell.faraday)
}

/// exp((1-a) x) - exp(-a x), written as 2 sinh(x/2) for a = 1/2 so that
/// the result is exactly odd in x.
pub(crate) fn bv_dimensionless(x: f64, alpha: f64) -> f64 {
    if alpha == 0.5 {
        2.0 * (0.5 * x).sinh()
    } else {
        ((1.0 - alpha) * x).exp() - (-alpha * x).exp()
    }
}

/// Overpotential that carries the interfacial current density `fj` (= F j)
/// at exchange current density `i0`. Closed form for a = 1/2, Newton otherwise.
pub(crate) fn inverse_butler_volmer(fj: f64, i0: f64, f_rt: f64, alpha: f64) -> f64 {
    let target = fj / i0;
    if alpha == 0.5 {
        return 2.0 / f_rt * (0.5 * target).asinh();
    }
    let mut x = 2.0 * (0.5 * target).asinh();
    for _ in 0..50 {
        let g = bv_dimensionless(x, alpha) - target;
        let dg = (1.0 - alpha) * ((1.0 - alpha) * x).exp() + alpha * (-alpha * x).exp();
        let step = g / dg;
        x -= step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    x / f_rt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DfnParameters {
        DfnParameters::marquis2019()
    }

    #[test]
    fn saturation_is_domain_error() {
        let p = params();
        let cmax = p.negative.max_concentration;
        assert!(exchange_current_density(&p, Electrode::Negative, 1000.0, cmax, 298.15).is_err());
        assert!(exchange_current_density(&p, Electrode::Negative, 1000.0, 0.0, 298.15).is_err());
        assert!(exchange_current_density(&p, Electrode::Negative, 0.0, 0.5 * cmax, 298.15).is_err());
    }

    #[test]
    fn electrolyte_scaling_at_half_alpha() {
        let p = params();
        let cs = 0.3 * p.positive.max_concentration;
        let a = exchange_current_density(&p, Electrode::Positive, 500.0, cs, 280.0).unwrap();
        let b = exchange_current_density(&p, Electrode::Positive, 2000.0, cs, 280.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exchange_current_matches_closed_form() {
        // independent evaluation: F * m_ref/F * sqrt(c_e) * sqrt(c_max - c) * sqrt(c)
        // with m_ref = 2e-5 and c = c_max / 2 gives 2e-5 * sqrt(1000) * c_max / 2
        let p = params();
        let cmax = p.negative.max_concentration;
        let i0 = exchange_current_density(&p, Electrode::Negative, 1000.0, 0.5 * cmax, 298.15)
            .unwrap();
        let expected = 2.0e-5 * 1000f64.sqrt() * 0.5 * cmax;
        assert!((i0 - expected).abs() / expected < 1e-12, "{i0} vs {expected}");
    }

    #[test]
    fn zero_overpotential_gives_zero_flux() {
        let p = params();
        assert_eq!(butler_volmer_flux(&p, 3.0, 0.0, 298.15, 0.5).unwrap(), 0.0);
        assert_eq!(butler_volmer_flux(&p, 3.0, 0.0, 260.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn antisymmetric_at_half_alpha() {
        let p = params();
        let t = 270.0;
        let vt = p.cell.gas_constant * t / p.cell.faraday;
        for k in -100..=100 {
            let eta = k as f64 * 0.1 * vt;
            let a = butler_volmer_flux(&p, 2.5, eta, t, 0.5).unwrap();
            let b = butler_volmer_flux(&p, 2.5, -eta, t, 0.5).unwrap();
            assert_eq!(a + b, 0.0, "eta = {eta}");
            if k != 0 {
                assert_eq!(a.signum(), eta.signum());
            }
        }
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let p = params();
        let t = 298.15;
        let i0 = 4.0;
        let h = 1e-7;
        let fd = (butler_volmer_flux(&p, i0, h, t, 0.5).unwrap()
            - butler_volmer_flux(&p, i0, -h, t, 0.5).unwrap())
            / (2.0 * h);
        let lin = i0 / (p.cell.gas_constant * t);
        assert!((fd - lin).abs() / lin < 1e-8);
        let eta = 1e-5;
        let j = butler_volmer_flux(&p, i0, eta, t, 0.5).unwrap();
        assert!((j - lin * eta).abs() / (lin * eta) < 1e-6);
    }

    #[test]
    fn overflow_guard() {
        let p = params();
        assert!(matches!(
            butler_volmer_flux(&p, 1.0, 20.0, 298.15, 0.5),
            Err(Error::OverpotentialOverflow(_))
        ));
    }

    #[test]
    fn inverse_round_trips() {
        let f_rt = 38.9;
        for alpha in [0.5, 0.3, 0.7] {
            for fj in [-40.0, -1.0, 0.0, 0.2, 15.0] {
                let eta = inverse_butler_volmer(fj, 2.0, f_rt, alpha);
                let back = 2.0 * bv_dimensionless(eta * f_rt, alpha);
                assert!((back - fj).abs() < 1e-9 * (1.0 + fj.abs()), "{alpha} {fj} {back}");
            }
        }
    }
}
