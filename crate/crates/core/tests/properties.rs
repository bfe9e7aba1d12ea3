use std::f64::consts::PI;

use nls4_core::dispersive::{strichartz_admissible, Exponent};
use nls4_core::evolution::{EvolutionConfig, Scheme, Stepper};
use nls4_core::illposed::{build_uap, change_coords, soliton, ApproxParams};
use nls4_core::imethod::{
    energy2, energy4, lambda_n, symbol_m4, symbol_sigma4, Flow, IMethodParams,
};
use nls4_core::resonance::{resonance_factored, resonance_factored_abs, resonance_lhs, HyperplaneSample};
use nls4_core::spectral::{
    apply_symbol, make_gaussian, project_band, sobolev_norm, to_spectrum, ModeSet, SymbolFn, Weight,
};
use nls4_core::symmetries::{mass, scale_transform};
use nls4_core::{fit_loglog, Field, Grid, C64};
use num_rational::Rational64;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(16.0 * PI, 128).unwrap()
}

/// Smooth random field: a few Gaussians with random centers, widths, carriers and phases.
fn smooth_field() -> impl Strategy<Value = Field> {
    prop::collection::vec((-10.0..10.0f64, 1.0..3.0f64, -2.0..2.0f64, 0.1..1.0f64, 0.0..6.3f64), 1..4).prop_map(
        |bumps| {
            Field::from_fn(&grid(), |x| {
                bumps
                    .iter()
                    .map(|&(c, w, k, a, ph)| {
                        C64::from_polar(a * (-((x - c) / w).powi(2) / 2.0).exp(), k * x + ph)
                    })
                    .sum()
            })
        },
    )
}

/// Random state supported on |k| ≤ K with independent coefficients.
fn mode_state(cutoff: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2 * cutoff + 1)
}

fn state_field(grid: &Grid, cutoff: usize, coeffs: &[(f64, f64)], scale: f64) -> Field {
    let mut sp = nls4_core::Spectrum::zeros(grid);
    for (j, &(re, im)) in coeffs.iter().enumerate() {
        sp.set(j as i64 - cutoff as i64, C64::new(re, im) * scale);
    }
    nls4_core::spectral::to_physical(&sp)
}

fn conj_field(f: &Field) -> Field {
    Field::new(f.grid.clone(), f.samples.iter().map(|z| z.conj()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(f in smooth_field()) {
        let quad: f64 = f.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.dx();
        let n0 = sobolev_norm(&f, 0.0, Weight::Inhomogeneous);
        prop_assert!((n0 * n0 - quad).abs() <= 1e-10 * quad);
        prop_assert!((mass(&f) - n0 * n0).abs() <= 1e-10 * quad);
    }

    #[test]
    fn symbol_composition(f in smooth_field(), a in 0.1..2.0f64, b in -1.0..1.0f64) {
        let s1 = SymbolFn::new("s1", move |xi| C64::new(1.0 + a * xi * xi, b * xi));
        let s2 = SymbolFn::real("s2", move |xi| (-(xi * xi) / (1.0 + a)).exp());
        let sp = to_spectrum(&f);
        let two = apply_symbol(&apply_symbol(&sp, &s1).unwrap(), &s2).unwrap();
        let once = apply_symbol(&sp, &s1.product(&s2)).unwrap();
        let scale = sp.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (x, y) in two.coeffs.iter().zip(&once.coeffs) {
            prop_assert!((x - y).norm() <= 1e-13 * scale.max(1e-300) * 10.0);
        }
    }

    #[test]
    fn disjoint_bands_are_orthogonal(f in smooth_field(), j in 0u32..2, gap in 2u32..3) {
        let n = 2f64.powi(j as i32);
        let m = n * 2f64.powi(gap as i32);
        let pm = project_band(&project_band(&f, n).unwrap(), m).unwrap();
        prop_assert!(pm.max_abs() <= 1e-13 * f.max_abs().max(1e-300));
    }

    #[test]
    fn sobolev_norm_is_monotone(f in smooth_field(), s1 in -2.0..2.0f64, ds in 0.0..2.0f64) {
        let lo = sobolev_norm(&f, s1, Weight::Inhomogeneous);
        let hi = sobolev_norm(&f, s1 + ds, Weight::Inhomogeneous);
        prop_assert!(lo <= hi * (1.0 + 1e-14));
    }

    #[test]
    fn scaling_is_a_group_action(f in smooth_field(), a in 0.5..2.0f64, b in 0.5..2.0f64) {
        let (fa, ta) = scale_transform(&f, a).unwrap();
        let (fab, tb) = scale_transform(&fa, b).unwrap();
        let (direct, t) = scale_transform(&f, a * b).unwrap();
        prop_assert!(((fab.grid.length() - direct.grid.length()) / direct.grid.length()).abs() < 1e-14);
        prop_assert!(((ta * tb - t) / t).abs() < 1e-14);
        for (x, y) in fab.samples.iter().zip(&direct.samples) {
            prop_assert!((x - y).norm() <= 1e-13 * direct.max_abs());
        }
    }

    #[test]
    fn strang_step_is_reversible(amp in 0.2..1.5f64, width in 3.0..4.0f64, dt in 1e-4..1e-2f64) {
        let f = make_gaussian(&grid(), amp, width, 0.5, 1.0).unwrap();
        let cfg = EvolutionConfig::quartic(1.0, dt, dt).with_scheme(Scheme::Strang);
        let back = Stepper::new(&f.grid, &cfg, -dt).step(&Stepper::new(&f.grid, &cfg, dt).step(&f));
        let rel = (back.sub(&f).quadrature_mass() / f.quadrature_mass()).sqrt();
        prop_assert!(rel < 1e-11, "relative {}", rel);
    }

    #[test]
    fn sigma4_is_real(a in -40i64..40, b in -40i64..40, c in -40i64..40, n in 2.0..20.0f64) {
        let p = IMethodParams::new(n, -0.5).unwrap();
        let xi = HyperplaneSample::from_three(a as f64, b as f64, c as f64).xi;
        let s = symbol_sigma4(&xi, &p).unwrap();
        prop_assert!(s.im.abs() <= 1e-12 * s.norm().max(1e-300));
        let m4 = symbol_m4(&xi, &p).unwrap();
        prop_assert!(m4.is_finite());
    }

    #[test]
    fn resonance_factorization(a in -1e2..1e2f64, b in -1e2..1e2f64, c in -1e2..1e2f64) {
        let xi = HyperplaneSample::from_three(a, b, c).xi;
        let lhs = resonance_lhs(&xi);
        let scale = xi.iter().map(|x| x.abs()).fold(1.0, f64::max).powi(4);
        prop_assert!((lhs - resonance_factored(&xi)).abs() <= 1e-12 * scale);
        prop_assert!((lhs.abs() - resonance_factored_abs(&xi)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn lambda_conjugate_symmetry(coeffs in mode_state(3), w in -1.0..1.0f64) {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let modes = ModeSet::new(&g, 3).unwrap();
        let f = state_field(&g, 3, &coeffs, 1.0);
        let sp = to_spectrum(&f);
        let spc = to_spectrum(&conj_field(&f));
        let symbol = move |xi: &[f64]| Ok(C64::new(1.0 + xi[0] * xi[1], w * (xi[2] - xi[3]).powi(3)));
        let mirrored = move |xi: &[f64]| {
            let neg: Vec<f64> = xi.iter().map(|x| -x).collect();
            symbol(&neg).map(|z| z.conj())
        };
        let direct = lambda_n(&symbol, &[&sp; 4], &modes).unwrap().value;
        let conj = lambda_n(&mirrored, &[&spc; 4], &modes).unwrap().value;
        prop_assert!((direct.conj() - conj).norm() <= 1e-11 * direct.norm().max(1.0));
        // Linearity in the symbol.
        let doubled = move |xi: &[f64]| symbol(xi).map(|z| z * 2.0 + C64::new(0.0, 1.0));
        let lin = lambda_n(&doubled, &[&sp; 4], &modes).unwrap().value;
        let one = lambda_n(&|_: &[f64]| Ok(C64::new(1.0, 0.0)), &[&sp; 4], &modes).unwrap().value;
        prop_assert!((lin - (2.0 * direct + C64::new(0.0, 1.0) * one)).norm() <= 1e-11 * lin.norm().max(1.0));
    }

    #[test]
    fn low_frequency_energies_agree(coeffs in mode_state(3), n in 8.0..32.0f64) {
        // All modes sit below N, so m ≡ 1 and σ₄ ≡ 0.
        let g = Grid::new(2.0 * PI, 32).unwrap();
        let modes = ModeSet::new(&g, 3).unwrap();
        let f = state_field(&g, 3, &coeffs, 0.3);
        let p = IMethodParams::new(n, -0.5).unwrap();
        let e2 = energy2(&f, &p);
        let e4 = energy4(&f, &p, &modes, Flow::default()).unwrap();
        prop_assert!((e4 - e2).abs() <= 1e-14 * e2.max(1e-300));
    }

    #[test]
    fn endpoint_pair_is_admissible(num in 0i64..=12) {
        let alpha = Rational64::new(num, 12);
        prop_assert!(strichartz_admissible(Exponent::Infinite, Exponent::int(2), alpha));
    }

    #[test]
    fn change_of_variables_is_affine(n in 1.0..100.0f64, t in -1.0..1.0f64, x in -50.0..50.0f64, c in -3.0..3.0f64) {
        let (s, y) = change_coords(n, t, x);
        let (s2, y2) = change_coords(n, c * t, c * x);
        prop_assert_eq!(s, t);
        prop_assert_eq!(s2, c * t);
        prop_assert!((y2 - c * y).abs() <= 1e-9 * (1.0 + y.abs() * c.abs()));
    }

    #[test]
    fn power_laws_are_recovered(p in -3.0..3.0f64, k in 0.1..10.0f64) {
        let pts: Vec<(f64, f64)> = (0..6).map(|j| {
            let x = 2f64.powi(j);
            (x, k * x.powf(p))
        }).collect();
        let fit = fit_loglog(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - k.ln()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lift_preserves_modulus_and_mass(a in 0.5..2.0f64, t in 0.0..0.1f64) {
        let p = ApproxParams::new(8.0, -1.0, 60.0, 512).unwrap();
        let xg = p.x_grid(4096).unwrap();
        let v = soliton(&p.grid, a, t);
        let u = build_uap(&v, &p, t, &xg).unwrap();
        let rel = (u.quadrature_mass() - p.stretch() * v.quadrature_mass()).abs() / u.quadrature_mass();
        prop_assert!(rel < 1e-8, "relative mass mismatch {}", rel);
        let (_, y) = change_coords(p.n, t, xg.x(1000));
        let expect = 2f64.sqrt() * a / (a * y).cosh();
        let y_wrapped = y - p.grid.length() * ((y + p.grid.length() / 2.0) / p.grid.length()).floor();
        let expect_wrapped = 2f64.sqrt() * a / (a * y_wrapped).cosh();
        let got = u.samples[1000].norm();
        prop_assert!((got - expect).abs() < 1e-9 || (got - expect_wrapped).abs() < 1e-9);
    }
}
