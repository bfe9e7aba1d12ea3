//! Mass, Hamiltonian and the scaling symmetry `u ↦ λ²u(λ⁴t, λx)`.

use crate::error::{invalid, Result};
use crate::evolution::{evolve_to_end, quartic_integral, EvolutionConfig, Scheme};
use crate::spectral::{to_spectrum, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservedReport {
    pub mass: f64,
    pub hamiltonian: f64,
    /// ½∫|∂ₓ²u|².
    pub kinetic: f64,
    /// ∫|u|⁴.
    pub quartic: f64,
}

/// ∫|u|² dx by grid quadrature.
pub fn mass(f: &Field) -> f64 {
    f.quadrature_mass()
}

/// Conserved quantities of `i∂t u = ∂ₓ⁴u + κ|u|²u`: `H = ½∫|∂ₓ²u|² + (κ/4)∫|u|⁴`.
pub fn hamiltonian(f: &Field, kappa: f64) -> ConservedReport {
    let sp = to_spectrum(f);
    let g = &sp.grid;
    let kinetic = 0.5
        * g.length()
        * sp.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| g.xi(i).powi(4) * c.norm_sqr())
            .sum::<f64>();
    let quartic = quartic_integral(f);
    ConservedReport {
        mass: mass(f),
        hamiltonian: kinetic + 0.25 * kappa * quartic,
        kinetic,
        quartic,
    }
}

/// `λ²u(λx)` on the grid of length `L/λ` with the same number of modes, together with the
/// time factor `λ⁴` (a solution at time `λ⁴t` maps to time `t`).
pub fn scale_transform(f: &Field, lambda: f64) -> Result<(Field, f64)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("scaling factor must be positive, got {lambda}")));
    }
    let grid = Grid::new(f.grid.length() / lambda, f.grid.modes())?;
    let samples = f.samples.iter().map(|z| z * (lambda * lambda)).collect();
    Ok((Field::new(grid, samples)?, lambda.powi(4)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceReport {
    /// ‖S_λ u(λ⁴t) − v(t)‖_{L²} on the rescaled grid.
    pub defect: f64,
    /// Discretization error of the original run, mapped to the rescaled grid.
    pub error_original: f64,
    /// Discretization error of the rescaled run.
    pub error_scaled: f64,
}

impl CovarianceReport {
    /// Combined discretization error: a defect below this is consistent with exact covariance.
    pub fn bound(&self) -> f64 {
        self.error_original + self.error_scaled
    }
}

fn l2_distance(a: &Field, b: &Field) -> f64 {
    mass(&a.sub(b)).sqrt()
}

/// Evolve `u₀` to `λ⁴·cfg.t_end` and `S_λ u₀` to `cfg.t_end` with the same step and compare.
/// Each run's error is measured against an integrating-factor RK4 reference at step `dt/16`.
pub fn check_scaling_covariance(u0: &Field, lambda: f64, cfg: &EvolutionConfig) -> Result<CovarianceReport> {
    let (v0, tf) = scale_transform(u0, lambda)?;
    let long = EvolutionConfig {
        t_end: cfg.t_end * tf,
        ..cfg.clone()
    };
    let u_end = evolve_to_end(u0, &long)?;
    let v_end = evolve_to_end(&v0, cfg)?;
    let (su_end, _) = scale_transform(&u_end, lambda)?;
    let defect = l2_distance(&su_end, &v_end);

    let reference = |c: &EvolutionConfig| EvolutionConfig {
        scheme: Scheme::Ifrk4,
        dt: c.dt / 16.0,
        ..c.clone()
    };
    let u_ref = evolve_to_end(u0, &reference(&long))?;
    let v_ref = evolve_to_end(&v0, &reference(cfg))?;
    let (su_ref, _) = scale_transform(&u_ref, lambda)?;
    Ok(CovarianceReport {
        defect,
        error_original: l2_distance(&su_end, &su_ref),
        error_scaled: l2_distance(&v_end, &v_ref),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::linear_propagate_4nls;
    use crate::spectral::{make_gaussian, sobolev_norm, Weight, C64};
    use std::f64::consts::PI;

    #[test]
    fn mass_of_simple_fields() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let c = Field::from_fn(&g, |_| C64::new(0.0, 2.0));
        assert!((mass(&c) - 4.0 * 2.0 * PI).abs() < 1e-12);
        let e = Field::from_fn(&g, |x| C64::from_polar(1.0, 3.0 * x));
        assert!((mass(&e) - 2.0 * PI).abs() < 1e-12);
        let p = linear_propagate_4nls(&e, 0.37, 1.0);
        assert!((mass(&p) - mass(&e)).abs() < 1e-12);
        assert!((mass(&e) - sobolev_norm(&e, 0.0, Weight::Inhomogeneous).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_of_plane_wave() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let a = C64::new(0.6, 0.3);
        let e = Field::from_fn(&g, |x| a * C64::from_polar(1.0, 2.0 * x));
        let l = 2.0 * PI;
        let r = hamiltonian(&e, 1.0);
        assert!((r.kinetic - 0.5 * 16.0 * a.norm_sqr() * l).abs() < 1e-11);
        assert!((r.quartic - a.norm_sqr().powi(2) * l).abs() < 1e-12);
        let flip = hamiltonian(&e, 1.0).hamiltonian - hamiltonian(&e, -1.0).hamiltonian;
        assert!((flip - 0.5 * r.quartic).abs() < 1e-12);
    }

    #[test]
    fn scaling_identity_and_group_law() {
        let g = Grid::new(60.0, 512).unwrap();
        let u = make_gaussian(&g, 1.0, 2.0, 0.3, 0.0).unwrap();
        let (same, tf) = scale_transform(&u, 1.0).unwrap();
        assert_eq!(same, u);
        assert_eq!(tf, 1.0);
        let (a, _) = scale_transform(&u, 2.0).unwrap();
        let (b, _) = scale_transform(&a, 1.5).unwrap();
        let (c, _) = scale_transform(&u, 3.0).unwrap();
        assert!((b.grid.length() - c.grid.length()).abs() < 1e-12);
        assert!(b.sub(&Field::new(b.grid.clone(), c.samples.clone()).unwrap()).max_abs() < 1e-12);
        assert!(scale_transform(&u, 0.0).is_err());
    }

    #[test]
    fn covariance_defect_is_within_discretization_error() {
        let g = Grid::new(60.0, 512).unwrap();
        let u = make_gaussian(&g, 1.0, 2.0, 0.3, 0.0).unwrap();
        let cfg = crate::evolution::EvolutionConfig::quartic(1.0, 1e-3, 0.05);
        let r = check_scaling_covariance(&u, 2.0, &cfg).unwrap();
        assert!(r.defect <= r.bound(), "{r:?}");
        assert!(r.error_scaled > 0.0 && r.bound() < 1e-3, "{r:?}");
        // Without the λ⁴ time factor the two runs disagree at order one.
        let (v0, _) = scale_transform(&u, 2.0).unwrap();
        let wrong = evolve_to_end(&v0, &crate::evolution::EvolutionConfig { t_end: 0.05 * 2.0, ..cfg }).unwrap();
        let (su, _) = scale_transform(
            &evolve_to_end(&u, &crate::evolution::EvolutionConfig::quartic(1.0, 1e-3, 0.8)).unwrap(),
            2.0,
        )
        .unwrap();
        assert!(l2_distance(&su, &wrong) > 100.0 * r.bound());
    }

    #[test]
    fn homogeneous_norm_exponent() {
        let g = Grid::new(60.0, 512).unwrap();
        let u = make_gaussian(&g, 1.0, 2.0, 0.0, 0.0).unwrap();
        for s in [-1.5, -1.0, -0.5, 0.0, 0.5] {
            let base = sobolev_norm(&u, s, Weight::Homogeneous);
            for lam in [0.5, 2.0, 3.0] {
                let (v, _) = scale_transform(&u, lam).unwrap();
                let r = sobolev_norm(&v, s, Weight::Homogeneous) / base;
                assert!((r.ln() / f64::ln(lam) - (s + 1.5)).abs() < 1e-8, "s={s} lam={lam}");
            }
        }
    }
}
