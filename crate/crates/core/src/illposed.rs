//! High-frequency approximate solutions built from cubic NLS profiles.
//!
//! A profile `v(s, y)` solving `i∂s v - ∂y²v + κ|v|²v = 0` is lifted to
//!
//! ```text
//! U_ap(t, x) = e^{iN⁴t + iNx} v(t, (x + 4N³t)/(√6 N)),
//! ```
//!
//! which solves `(i∂t + ∂ₓ⁴)U + κ|U|²U = E₁ + E₂` with
//! `E₁ = N⁻⁴/36 · e^{iφ}∂y⁴v` and `E₂ = 4i·6^{-3/2} N⁻² · e^{iφ}∂y³v`.
//!
//! Profiles live on a `y` grid of length `L_y`. The matching `x` box has length
//! `L_x = √6 N L_y`, and `L_y` is nudged so that `N` is a lattice frequency of that box: then
//! the `x` spectrum of `U_ap` is the `y` spectrum shifted by the carrier index, and every
//! `x`-space Sobolev norm can be read off the `y` coefficients without building the huge
//! `x` grid. The true quartic flow is run in the same comoving frame
//! ([`Equation::Modulated`]), where it is the exact equation for the envelope.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::evolution::{evolve, EvolutionConfig, Equation, Scheme, Stepper};
use crate::fit::{fit_loglog, FitResult};
use crate::spectral::{
    bracket, derivative, make_gaussian, tail_report, to_physical, to_spectrum, Field, Grid, Spectrum, C64,
};

/// Smoothness index used for the negative-regularity hypothesis `1 ≤ τ M^{1+s/σ}`.
pub const PROFILE_SMOOTHNESS: f64 = 5.0;

/// Lower end of the range in which the separation mechanism is proved.
pub const SEPARATION_LOWER: f64 = -15.0 / 14.0;

/// `(s, y) = (t, (x + 4N³t)/(√6 N))`.
pub fn change_coords(n: f64, t: f64, x: f64) -> (f64, f64) {
    (t, (x + 4.0 * n.powi(3) * t) / (6f64.sqrt() * n))
}

/// Scaling factor `λ = N^{-(s+1/2)/(s+3/2)}` that puts the rescaled data at unit `H^s` size.
pub fn lambda_for(s: f64, n: f64) -> Result<f64> {
    if !(s > -1.5) || !s.is_finite() {
        return Err(invalid(format!("λ needs s > -3/2, got {s}")));
    }
    Ok(n.powf(-(s + 0.5) / (s + 1.5)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxParams {
    /// Carrier frequency.
    pub n: f64,
    /// Sign of the nonlinearity in both the profile equation and the quartic residual form.
    pub kappa: f64,
    /// Profile grid in the `y` variable.
    pub grid: Grid,
}

impl ApproxParams {
    /// `y_length` is rounded up so that the carrier is a lattice frequency of the `x` box.
    pub fn new(n: f64, kappa: f64, y_length: f64, y_modes: usize) -> Result<ApproxParams> {
        let mut errs = Vec::new();
        if !(n.is_finite() && n >= 8.0) {
            errs.push(format!("carrier N must be ≥ 8, got {n}"));
        }
        if kappa != 1.0 && kappa != -1.0 {
            errs.push(format!("κ must be ±1, got {kappa}"));
        }
        if !(y_length.is_finite() && y_length > 0.0) {
            errs.push(format!("profile length must be positive, got {y_length}"));
        }
        if !errs.is_empty() {
            return Err(invalid(errs.join("; ")));
        }
        let sigma = 6f64.sqrt() * n;
        let cycles = (n * sigma * y_length / (2.0 * PI)).ceil();
        let length = 2.0 * PI * cycles / (n * sigma);
        Ok(ApproxParams {
            n,
            kappa,
            grid: Grid::new(length, y_modes)?,
        })
    }

    /// `√6 N`.
    pub fn stretch(&self) -> f64 {
        6f64.sqrt() * self.n
    }

    pub fn x_length(&self) -> f64 {
        self.stretch() * self.grid.length()
    }

    /// Lattice index of the carrier in the `x` box.
    pub fn carrier_index(&self) -> i64 {
        (self.n * self.x_length() / (2.0 * PI)).round() as i64
    }

    /// An `x` grid of the matching length.
    pub fn x_grid(&self, modes: usize) -> Result<Grid> {
        Grid::new(self.x_length(), modes)
    }

    /// Cubic NLS flow of the profile in solver conventions.
    pub fn profile_config(&self, dt: f64, t_end: f64, stride: usize) -> EvolutionConfig {
        EvolutionConfig {
            equation: Equation::Cubic,
            orientation: 1.0,
            kappa: -self.kappa,
            dt,
            t_end,
            scheme: Scheme::Ifrk4,
            record_stride: stride,
            keep_states: true,
            norm_indices: Vec::new(),
        }
    }

    /// The quartic flow `(i∂t + ∂ₓ⁴)U + κ|U|²U = 0` written for the comoving envelope.
    pub fn modulated_config(&self, dt: f64, t_end: f64, stride: usize) -> EvolutionConfig {
        EvolutionConfig {
            equation: Equation::Modulated { carrier: self.n },
            ..self.profile_config(dt, t_end, stride)
        }
    }

    /// The same flow on the `x` grid, for direct comparison.
    pub fn quartic_config(&self, dt: f64, t_end: f64, stride: usize) -> EvolutionConfig {
        EvolutionConfig {
            equation: Equation::Quartic,
            ..self.profile_config(dt, t_end, stride)
        }
    }
}

/// Cubic NLS profile.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `√2 a sech(a y) e^{-i a² s}`, an exact solution when κ = -1.
    Soliton { a: f64 },
    /// Arbitrary datum on the profile grid, evolved numerically.
    Datum(Field),
}

impl Profile {
    pub fn gaussian(p: &ApproxParams, amplitude: f64, width: f64) -> Result<Profile> {
        Ok(Profile::Datum(make_gaussian(&p.grid, amplitude, width, 0.0, 0.0)?))
    }

    fn check(&self, p: &ApproxParams) -> Result<()> {
        match self {
            Profile::Soliton { a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(invalid(format!("soliton amplitude must be positive, got {a}")));
                }
                if p.kappa != -1.0 {
                    return Err(invalid("the sech soliton solves the profile equation only for κ = -1"));
                }
                let edge = (a * p.grid.length() / 2.0).cosh().recip();
                if edge > 1e-12 {
                    return Err(Error::Resolution(format!(
                        "soliton edge value {edge:.2e} on a profile box of length {}",
                        p.grid.length()
                    )));
                }
                Ok(())
            }
            Profile::Datum(f) => {
                if f.grid != p.grid {
                    return Err(invalid("profile datum is not on the profile grid"));
                }
                Ok(())
            }
        }
    }

    /// Profile at `s = 0`.
    pub fn initial(&self, p: &ApproxParams) -> Result<Field> {
        self.check(p)?;
        Ok(match self {
            Profile::Soliton { a } => soliton(&p.grid, *a, 0.0),
            Profile::Datum(f) => f.clone(),
        })
    }

    /// Profile on the record schedule of [`ApproxParams::profile_config`].
    pub fn trajectory(&self, p: &ApproxParams, dt: f64, t_end: f64, stride: usize) -> Result<Trajectory> {
        self.check(p)?;
        let cfg = p.profile_config(dt, t_end, stride);
        match self {
            Profile::Soliton { a } => {
                cfg.validate(&p.grid)?;
                let times = record_times(&cfg);
                let states = times.iter().map(|&t| soliton(&p.grid, *a, t)).collect();
                Ok(Trajectory { times, states })
            }
            Profile::Datum(f) => {
                let rec = evolve(f, &cfg)?;
                Ok(Trajectory {
                    times: rec.times,
                    states: rec.states,
                })
            }
        }
    }

    /// States at `t + j h` for `j = -2..=2`.
    fn stencil(&self, p: &ApproxParams, t: f64, h: f64, dt: f64) -> Result<Vec<Field>> {
        self.check(p)?;
        match self {
            Profile::Soliton { a } => Ok((-2..=2).map(|j| soliton(&p.grid, *a, t + j as f64 * h)).collect()),
            Profile::Datum(f) => {
                let center = if t > 0.0 {
                    crate::evolution::evolve_to_end(f, &p.profile_config(dt.min(t), t, usize::MAX))?
                } else {
                    f.clone()
                };
                let cfg = p.profile_config(h, h, 1);
                let fwd = Stepper::new(&p.grid, &cfg, h);
                let bwd = Stepper::new(&p.grid, &cfg, -h);
                let p1 = fwd.step(&center);
                let p2 = fwd.step(&p1);
                let m1 = bwd.step(&center);
                let m2 = bwd.step(&m1);
                Ok(vec![m2, m1, center, p1, p2])
            }
        }
    }
}

/// Samples of a profile or envelope run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
}

/// `√2 a sech(a y) e^{-i a² t}` on `grid`.
pub fn soliton(grid: &Grid, a: f64, t: f64) -> Field {
    let phase = C64::from_polar(2f64.sqrt() * a, -a * a * t);
    Field::from_fn(grid, |y| phase * (a * y).cosh().recip())
}

/// Record times of `evolve` under `cfg`.
pub fn record_times(cfg: &EvolutionConfig) -> Vec<f64> {
    let (n, h) = cfg.steps();
    std::iter::once(0.0)
        .chain((1..=n).filter(|k| *k == n || k % cfg.record_stride == 0).map(|k| k as f64 * h))
        .collect()
}

/// `‖U‖_{H^s}` of the `λ`-rescaled lift `λ²U(λx)` of an envelope `w` on the profile grid.
///
/// The `x` frequency of the `y` mode `ζ` is `N + ζ/(√6 N)`, so the norm is
/// `(λ³ L_x Σ ⟨λ(N + ζ/√6N)⟩^{2s} |c_ζ|²)^{1/2}`.
pub fn modulated_norm(w: &Spectrum, p: &ApproxParams, s: f64, lambda: f64) -> f64 {
    let g = &w.grid;
    let sigma = p.stretch();
    let sum: f64 = w
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| bracket(lambda * (p.n + g.xi(i) / sigma)).powf(2.0 * s) * c.norm_sqr())
        .sum();
    (lambda.powi(3) * sigma * g.length() * sum).sqrt()
}

fn modulated_field_norm(w: &Field, p: &ApproxParams, s: f64, lambda: f64) -> f64 {
    modulated_norm(&to_spectrum(w), p, s, lambda)
}

/// `U_ap(t, ·)` on an `x` grid of the matching length, from the profile state `v` at time `t`.
///
/// The lift is exact on band-limited profiles: `y` mode `k` becomes `x` mode `k + k_N`.
pub fn build_uap(v: &Field, p: &ApproxParams, t: f64, x_grid: &Grid) -> Result<Field> {
    if v.grid != p.grid {
        return Err(invalid("profile state is not on the profile grid"));
    }
    let lx = p.x_length();
    if ((x_grid.length() - lx) / lx).abs() > 1e-12 {
        return Err(invalid(format!(
            "x grid length {} does not match √6 N L_y = {lx}",
            x_grid.length()
        )));
    }
    let sp = to_spectrum(v);
    let floor = sp.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max) * 1e-14;
    let kn = p.carrier_index();
    let shift = 4.0 * p.n.powi(3) * t / p.stretch();
    let carrier = C64::from_polar(1.0, p.n.powi(4) * t);
    let mut out = Spectrum::zeros(x_grid);
    for (i, c) in sp.coeffs.iter().enumerate() {
        let k = p.grid.k_of(i);
        match x_grid.index_of(k + kn) {
            Some(j) => out.coeffs[j] = carrier * c * C64::from_polar(1.0, p.grid.xi(i) * shift),
            None if c.norm() > floor => {
                return Err(Error::Resolution(format!(
                    "profile mode {k} lands outside the x band (carrier index {kn}, {} modes)",
                    x_grid.modes()
                )))
            }
            None => {}
        }
    }
    Ok(to_physical(&out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualFields {
    pub e1: Field,
    pub e2: Field,
    /// `(i∂t + ∂ₓ⁴)U_ap + κ|U_ap|²U_ap` with a five-point difference in `t`.
    pub direct: Field,
    /// `‖direct - E₁ - E₂‖ / ‖E₁ + E₂‖` in L².
    pub defect: f64,
}

/// Residual of `U_ap` at time `t`: the two predicted terms and the directly computed one.
///
/// `h` is the difference step in `t`; `dt` is the solver step used to reach `t` for a
/// numerical profile.
pub fn residual_fields(
    profile: &Profile,
    p: &ApproxParams,
    t: f64,
    x_grid: &Grid,
    h: f64,
    dt: f64,
) -> Result<ResidualFields> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("difference step must be positive, got {h}")));
    }
    let vs = profile.stencil(p, t, h, dt)?;
    let v = &vs[2];
    let n = p.n;
    let n4 = n.powi(4);

    let envelopes = vs
        .iter()
        .enumerate()
        .map(|(j, vj)| {
            let tj = t + (j as f64 - 2.0) * h;
            Ok(build_uap(vj, p, tj, x_grid)?.scale(C64::from_polar(1.0, -n4 * tj)))
        })
        .collect::<Result<Vec<_>>>()?;
    let u = build_uap(v, p, t, x_grid)?;
    let dx4 = derivative(&u, 4);
    let carrier = C64::from_polar(1.0, n4 * t);
    let i = C64::i();
    let samples = (0..x_grid.modes())
        .map(|k| {
            let e = |j: usize| envelopes[j].samples[k];
            let dt_env = (e(0) - 8.0 * e(1) + 8.0 * e(3) - e(4)) / (12.0 * h);
            let i_dt_u = carrier * (i * dt_env - n4 * e(2));
            let uk = u.samples[k];
            i_dt_u + dx4.samples[k] + p.kappa * uk.norm_sqr() * uk
        })
        .collect();
    let direct = Field::new(x_grid.clone(), samples)?;

    let e1 = build_uap(&derivative(v, 4), p, t, x_grid)?.scale(C64::from(n.powi(-4) / 36.0));
    let e2 = build_uap(&derivative(v, 3), p, t, x_grid)?.scale(i * 4.0 * 6f64.powf(-1.5) * n.powi(-2));
    let predicted = e1.add(&e2);
    let scale = predicted.quadrature_mass().sqrt();
    let defect = if scale > 0.0 {
        direct.sub(&predicted).quadrature_mass().sqrt() / scale
    } else {
        direct.quadrature_mass().sqrt()
    };
    Ok(ResidualFields {
        e1,
        e2,
        direct,
        defect,
    })
}

/// `(‖E₁‖, ‖E₂‖)` in `H^s` at the profile state `v`, read off the profile grid.
pub fn residual_norms(v: &Field, p: &ApproxParams, s: f64) -> (f64, f64) {
    let sp = to_spectrum(v);
    let n = p.n;
    let scaled = |f: &dyn Fn(f64) -> C64| {
        let mut out = sp.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            *c *= f(sp.grid.xi(i));
        }
        modulated_norm(&out, p, s, 1.0)
    };
    let e1 = scaled(&|z| C64::from(z.powi(4) * n.powi(-4) / 36.0));
    let e2 = scaled(&|z| C64::new(0.0, 4.0 * 6f64.powf(-1.5) * n.powi(-2)) * C64::new(0.0, z).powu(3));
    (e1, e2)
}

// ---------------------------------------------------------------------------------------------
// Modulated bumps.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModulationAxis {
    Amplitude,
    Frequency,
    Width,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationPoint {
    pub amplitude: f64,
    pub frequency: f64,
    pub width: f64,
    pub norm: f64,
    /// Whether the frequency-width hypothesis of the norm estimate holds here.
    pub hypothesis: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationSweep {
    pub axis: ModulationAxis,
    pub s: f64,
    pub points: Vec<ModulationPoint>,
    pub fit: FitResult,
    pub predicted: f64,
}

/// `A e^{iMx} u((x - x₀)/τ)` sampled on `grid`.
pub fn modulated_bump(
    grid: &Grid,
    u: &(dyn Fn(f64) -> C64 + Sync),
    amplitude: f64,
    frequency: f64,
    width: f64,
    x0: f64,
) -> Result<Field> {
    if !(width.is_finite() && width > 0.0) {
        return Err(invalid(format!("width must be positive, got {width}")));
    }
    if frequency.abs() >= 0.75 * grid.nyquist() {
        return Err(Error::Resolution(format!(
            "carrier {frequency} is not resolved below the Nyquist frequency {}",
            grid.nyquist()
        )));
    }
    let f = Field::from_fn(grid, |x| amplitude * C64::from_polar(1.0, frequency * x) * u((x - x0) / width));
    let tails = tail_report(&f);
    if tails.spectral > 1e-10 || tails.boundary > 1e-10 {
        return Err(Error::Resolution(format!(
            "modulated bump (M = {frequency}, τ = {width}) unresolved: spectral tail {:.2e}, boundary tail {:.2e}",
            tails.spectral, tails.boundary
        )));
    }
    Ok(f)
}

/// `‖A e^{iMx} u((x - x₀)/τ)‖_{H^s}` and the hypothesis flag.
pub fn modulation_norm(
    grid: &Grid,
    u: &(dyn Fn(f64) -> C64 + Sync),
    amplitude: f64,
    frequency: f64,
    width: f64,
    x0: f64,
    s: f64,
) -> Result<ModulationPoint> {
    let f = modulated_bump(grid, u, amplitude, frequency, width, x0)?;
    let norm = crate::spectral::sobolev_norm(&f, s, crate::spectral::Weight::Inhomogeneous);
    let hypothesis = if s >= 0.0 {
        frequency * width >= 1.0
    } else {
        width * frequency.powf(1.0 + s / PROFILE_SMOOTHNESS) >= 1.0
    };
    Ok(ModulationPoint {
        amplitude,
        frequency,
        width,
        norm,
        hypothesis,
    })
}

/// Sweep one of `A`, `M`, `τ` with the others held at `base = (A, M, τ)` and fit the exponent.
pub fn modulation_norm_check(
    grid: &Grid,
    u: &(dyn Fn(f64) -> C64 + Sync),
    base: (f64, f64, f64),
    x0: f64,
    s: f64,
    axis: ModulationAxis,
    values: &[f64],
) -> Result<ModulationSweep> {
    let points = values
        .iter()
        .map(|&v| {
            let (a, m, tau) = match axis {
                ModulationAxis::Amplitude => (v, base.1, base.2),
                ModulationAxis::Frequency => (base.0, v, base.2),
                ModulationAxis::Width => (base.0, base.1, v),
            };
            modulation_norm(grid, u, a, m, tau, x0, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .map(|pt| {
            let x = match axis {
                ModulationAxis::Amplitude => pt.amplitude.abs(),
                ModulationAxis::Frequency => pt.frequency,
                ModulationAxis::Width => pt.width,
            };
            (x, pt.norm)
        })
        .collect();
    let fit = fit_loglog(&pairs)?;
    let predicted = match axis {
        ModulationAxis::Amplitude => 1.0,
        ModulationAxis::Frequency => s,
        ModulationAxis::Width => 0.5,
    };
    Ok(ModulationSweep {
        axis,
        s,
        points,
        fit,
        predicted,
    })
}

/// The three default sweeps for a Gaussian profile on one grid.
pub fn modulation_suite(s: f64) -> Result<[ModulationSweep; 3]> {
    let grid = Grid::new(2048.0, 65536)?;
    let u = |x: f64| C64::from((-0.5 * x * x).exp());
    Ok([
        modulation_norm_check(&grid, &u, (1.0, 32.0, 4.0), 0.0, s, ModulationAxis::Amplitude, &[0.25, 0.5, 1.0, 2.0, 4.0])?,
        modulation_norm_check(&grid, &u, (1.0, 32.0, 4.0), 0.0, s, ModulationAxis::Frequency, &[8.0, 16.0, 32.0, 64.0])?,
        modulation_norm_check(&grid, &u, (1.0, 32.0, 4.0), 0.0, s, ModulationAxis::Width, &[2.0, 4.0, 8.0, 16.0, 32.0])?,
    ])
}

// ---------------------------------------------------------------------------------------------
// Tracking error.

/// Sweep description for the tracking-error experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDecaySetup {
    pub ns: Vec<f64>,
    pub s: f64,
    /// End of the window in profile time.
    pub window: f64,
    pub kappa: f64,
    pub profile: ProfileShape,
    pub y_length: f64,
    pub y_modes: usize,
    pub dt: f64,
    pub stride: usize,
}

/// A profile described independently of the carrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileShape {
    Soliton { a: f64 },
    Gaussian { amplitude: f64, width: f64 },
}

impl ProfileShape {
    pub fn build(&self, p: &ApproxParams) -> Result<Profile> {
        match *self {
            ProfileShape::Soliton { a } => Ok(Profile::Soliton { a }),
            ProfileShape::Gaussian { amplitude, width } => Profile::gaussian(p, amplitude, width),
        }
    }
}

impl Default for ErrorDecaySetup {
    fn default() -> Self {
        ErrorDecaySetup {
            ns: vec![8.0, 16.0, 32.0, 64.0],
            s: -0.5,
            window: 1.0,
            kappa: -1.0,
            profile: ProfileShape::Soliton { a: 1.0 },
            y_length: 60.0,
            y_modes: 512,
            dt: 1e-3,
            stride: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDecayRow {
    pub n: f64,
    /// `‖U_ap(0)‖_{H^s}`.
    pub size: f64,
    pub initial_error: f64,
    pub sup_error: f64,
    pub time_of_sup: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDecayReport {
    pub rows: Vec<ErrorDecayRow>,
    pub fit: FitResult,
    pub predicted: f64,
}

/// Envelope of the true quartic flow from `U_ap(0)`, on the profile's record schedule.
pub fn modulated_trajectory(w0: &Field, p: &ApproxParams, dt: f64, t_end: f64, stride: usize) -> Result<Trajectory> {
    let rec = evolve(w0, &p.modulated_config(dt, t_end, stride))?;
    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
    })
}

/// Sup over the window of `‖U(t) - U_ap(t)‖_{H^s}` for one carrier.
pub fn tracking_error(profile: &Profile, p: &ApproxParams, setup: &ErrorDecaySetup) -> Result<ErrorDecayRow> {
    let ap = profile.trajectory(p, setup.dt, setup.window, setup.stride)?;
    let truth = modulated_trajectory(&ap.states[0], p, setup.dt, setup.window, setup.stride)?;
    let errors: Vec<f64> = ap
        .states
        .iter()
        .zip(&truth.states)
        .map(|(a, u)| modulated_field_norm(&u.sub(a), p, setup.s, 1.0))
        .collect();
    let (k, sup) = errors
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (k, &e)| if e > acc.1 { (k, e) } else { acc });
    Ok(ErrorDecayRow {
        n: p.n,
        size: modulated_field_norm(&ap.states[0], p, setup.s, 1.0),
        initial_error: errors[0],
        sup_error: sup,
        time_of_sup: ap.times[k],
    })
}

pub fn error_decay_experiment(setup: &ErrorDecaySetup) -> Result<ErrorDecayReport> {
    use rayon::prelude::*;
    if setup.ns.len() < 2 {
        return Err(invalid("error decay needs at least two carriers"));
    }
    let rows = setup
        .ns
        .par_iter()
        .map(|&n| {
            let p = ApproxParams::new(n, setup.kappa, setup.y_length, setup.y_modes)?;
            let profile = setup.profile.build(&p)?;
            tracking_error(&profile, &p, setup)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_loglog(&rows.iter().map(|r| (r.n, r.sup_error)).collect::<Vec<_>>())?;
    Ok(ErrorDecayReport {
        rows,
        fit,
        predicted: -2.0,
    })
}

// ---------------------------------------------------------------------------------------------
// Two-soliton separation.

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationSetup {
    pub a: f64,
    pub a_prime: f64,
    pub s: f64,
    pub n: f64,
    /// Window in profile time; `None` means 1.5 decoherence times.
    pub window: Option<f64>,
    pub y_length: f64,
    pub y_modes: usize,
    pub dt: f64,
    pub stride: usize,
    /// Keep both envelopes at the time of maximal separation.
    pub keep_snapshots: bool,
}

impl Default for SeparationSetup {
    fn default() -> Self {
        SeparationSetup {
            a: 1.0,
            a_prime: 1.05,
            s: -0.75,
            n: 16.0,
            window: None,
            y_length: 60.0,
            y_modes: 512,
            dt: 2e-3,
            stride: 50,
            keep_snapshots: false,
        }
    }
}

impl SeparationSetup {
    /// `π/|a² - a′²|`, infinite for equal amplitudes.
    pub fn decoherence_time(&self) -> f64 {
        PI / (self.a * self.a - self.a_prime * self.a_prime).abs()
    }

    pub fn profile_window(&self) -> f64 {
        self.window.unwrap_or_else(|| {
            let t = self.decoherence_time();
            if t.is_finite() {
                1.5 * t
            } else {
                1.0
            }
        })
    }
}

/// One record of the separation run; all norms are `H^s` of the rescaled fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationSample {
    /// Time on the rescaled clock, `t_profile / λ⁴`.
    pub t: f64,
    pub t_profile: f64,
    pub distance: f64,
    pub approx_distance: f64,
    pub error1: f64,
    pub error2: f64,
}

impl SeparationSample {
    /// `‖U_ap,1 - U_ap,2‖ - ‖U₁ - U_ap,1‖ - ‖U₂ - U_ap,2‖`, a lower bound for the distance.
    pub fn triangle_bound(&self) -> f64 {
        self.approx_distance - self.error1 - self.error2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub s: f64,
    pub n: f64,
    pub lambda: f64,
    /// Larger of the two initial norms.
    pub epsilon: f64,
    /// Initial distance.
    pub delta: f64,
    pub initial_norms: [f64; 2],
    pub initial_distance: f64,
    pub sup_distance: f64,
    /// Rescaled clock.
    pub time_of_max: f64,
    pub profile_time_of_max: f64,
    pub window: f64,
    pub profile_window: f64,
    pub samples: Vec<SeparationSample>,
    /// Worst slack of the triangle bound, `min(distance - bound)`; nonnegative up to rounding.
    pub triangle_slack: f64,
    pub warnings: Vec<String>,
    pub snapshots: Option<[Field; 2]>,
}

impl SeparationReport {
    pub fn initial_ratio(&self) -> f64 {
        self.initial_distance / self.epsilon
    }

    pub fn sup_ratio(&self) -> f64 {
        self.sup_distance / self.epsilon
    }
}

pub fn separation_experiment(setup: &SeparationSetup) -> Result<SeparationReport> {
    let bad: Vec<String> = [("a", setup.a), ("a′", setup.a_prime)]
        .iter()
        .filter(|(_, a)| !(0.5..=2.0).contains(a))
        .map(|(name, a)| format!("{name} = {a} outside [1/2, 2]"))
        .collect();
    if !bad.is_empty() {
        return Err(invalid(bad.join("; ")));
    }
    let mut warnings = Vec::new();
    if !(setup.s > SEPARATION_LOWER && setup.s < -0.5) {
        warnings.push(format!(
            "s = {} lies outside (-15/14, -1/2); the separation is reported for contrast only",
            setup.s
        ));
    }
    let lambda = lambda_for(setup.s, setup.n)?;
    let p = ApproxParams::new(setup.n, -1.0, setup.y_length, setup.y_modes)?;
    let window = setup.profile_window();
    let profiles = [Profile::Soliton { a: setup.a }, Profile::Soliton { a: setup.a_prime }];

    let run = |profile: &Profile| -> Result<(Trajectory, Trajectory)> {
        let ap = profile.trajectory(&p, setup.dt, window, setup.stride)?;
        let truth = modulated_trajectory(&ap.states[0], &p, setup.dt, window, setup.stride)?;
        Ok((ap, truth))
    };
    let (r1, r2) = rayon::join(|| run(&profiles[0]), || run(&profiles[1]));
    let ((ap1, u1), (ap2, u2)) = (r1?, r2?);

    let norm = |f: &Field| modulated_field_norm(f, &p, setup.s, lambda);
    let l4 = lambda.powi(4);
    let samples: Vec<SeparationSample> = (0..ap1.times.len())
        .map(|k| SeparationSample {
            t: ap1.times[k] / l4,
            t_profile: ap1.times[k],
            distance: norm(&u1.states[k].sub(&u2.states[k])),
            approx_distance: norm(&ap1.states[k].sub(&ap2.states[k])),
            error1: norm(&u1.states[k].sub(&ap1.states[k])),
            error2: norm(&u2.states[k].sub(&ap2.states[k])),
        })
        .collect();
    let initial_norms = [norm(&u1.states[0]), norm(&u2.states[0])];
    let epsilon = initial_norms[0].max(initial_norms[1]);
    let (kmax, sup) = samples
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (k, smp)| if smp.distance > acc.1 { (k, smp.distance) } else { acc });
    let triangle_slack = samples
        .iter()
        .map(|smp| smp.distance - smp.triangle_bound())
        .fold(f64::INFINITY, f64::min);
    let snapshots = setup
        .keep_snapshots
        .then(|| [u1.states[kmax].clone(), u2.states[kmax].clone()]);
    Ok(SeparationReport {
        s: setup.s,
        n: setup.n,
        lambda,
        epsilon,
        delta: samples[0].distance,
        initial_norms,
        initial_distance: samples[0].distance,
        sup_distance: sup,
        time_of_max: samples[kmax].t,
        profile_time_of_max: samples[kmax].t_profile,
        window: window / l4,
        profile_window: window,
        samples,
        triangle_slack,
        warnings,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::evolve_to_end;
    use crate::spectral::evaluate_at;
    use approx::assert_relative_eq;

    fn params8() -> ApproxParams {
        ApproxParams::new(8.0, -1.0, 60.0, 512).unwrap()
    }

    #[test]
    fn coordinates() {
        let n = 8.0;
        let (s, y) = change_coords(n, 0.0, 3.0);
        assert_eq!(s, 0.0);
        assert_relative_eq!(y, 3.0 / (6f64.sqrt() * n), epsilon = 1e-15);
        let t = 0.01;
        assert_relative_eq!(change_coords(n, t, -4.0 * n.powi(3) * t).1, 0.0, epsilon = 1e-14);
        let (a, b) = (change_coords(n, 0.1, 2.0), change_coords(n, 0.3, -1.0));
        let c = change_coords(n, 0.4, 1.0);
        assert_relative_eq!(a.1 + b.1, c.1, epsilon = 1e-12);
        assert_relative_eq!(lambda_for(-0.75, 8.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(lambda_for(-1.5, 8.0).is_err());
    }

    #[test]
    fn params_put_the_carrier_on_the_lattice() {
        for n in [8.0, 13.5, 64.0] {
            let p = ApproxParams::new(n, -1.0, 40.0, 256).unwrap();
            assert!(p.grid.length() >= 40.0);
            let kn = p.carrier_index() as f64;
            assert_relative_eq!(kn * 2.0 * PI / p.x_length(), n, max_relative = 1e-12);
        }
        assert!(ApproxParams::new(4.0, -1.0, 40.0, 256).is_err());
        assert!(ApproxParams::new(8.0, 0.5, 40.0, 256).is_err());
    }

    #[test]
    fn lift_matches_pointwise_interpolation() {
        let p = params8();
        let xg = p.x_grid(4096).unwrap();
        let v = soliton(&p.grid, 1.0, 0.3);
        let t = 0.013;
        let u = build_uap(&v, &p, t, &xg).unwrap();
        let sp = to_spectrum(&v);
        let idx: Vec<usize> = (0..xg.modes()).step_by(97).collect();
        let ys: Vec<f64> = idx.iter().map(|&j| change_coords(p.n, t, xg.x(j)).1).collect();
        let vals = evaluate_at(&sp, &ys);
        for (k, &j) in idx.iter().enumerate() {
            let x = xg.x(j);
            let expect = C64::from_polar(1.0, p.n.powi(4) * t + p.n * x) * vals[k];
            assert!((u.samples[j] - expect).norm() < 1e-9, "x = {x}");
            assert_relative_eq!(u.samples[j].norm(), vals[k].norm(), epsilon = 1e-9);
        }
        // t = 0: U_ap(0, x) = e^{iNx} v(0, x/√6N), compared with the closed form.
        let u0 = build_uap(&soliton(&p.grid, 1.0, 0.0), &p, 0.0, &xg).unwrap();
        for j in (0..xg.modes()).step_by(131) {
            let x = xg.x(j);
            let y = x / p.stretch();
            let expect = C64::from_polar(2f64.sqrt() * y.cosh().recip(), p.n * x);
            assert!((u0.samples[j] - expect).norm() < 1e-10);
        }
        // Jacobian: ‖U_ap‖² = √6N ‖v‖².
        assert_relative_eq!(
            u.quadrature_mass(),
            p.stretch() * v.quadrature_mass(),
            max_relative = 1e-8
        );
        // Same value from the coefficient formula.
        assert_relative_eq!(
            modulated_norm(&sp, &p, 0.0, 1.0),
            u.quadrature_mass().sqrt(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            modulated_norm(&sp, &p, -0.5, 1.0),
            crate::spectral::sobolev_norm(&u, -0.5, crate::spectral::Weight::Inhomogeneous),
            max_relative = 1e-10
        );
        assert!(build_uap(&v, &p, t, &p.x_grid(1024).unwrap()).is_err());
        assert!(build_uap(&v, &p, t, &Grid::new(100.0, 4096).unwrap()).is_err());
    }

    #[test]
    fn rescaled_norm_matches_rescaled_field() {
        // λ²U(λx) on a box of length L_x/λ has the same coefficients as U.
        let p = params8();
        let v = soliton(&p.grid, 1.0, 0.0);
        let lambda = 2.0;
        let xg = Grid::new(p.x_length() / lambda, 4096).unwrap();
        let u = build_uap(&v, &p, 0.0, &p.x_grid(4096).unwrap()).unwrap();
        let scaled = Field::new(xg, u.samples.iter().map(|z| z * lambda * lambda).collect()).unwrap();
        assert_relative_eq!(
            modulated_norm(&to_spectrum(&v), &p, -0.75, lambda),
            crate::spectral::sobolev_norm(&scaled, -0.75, crate::spectral::Weight::Inhomogeneous),
            max_relative = 1e-10
        );
    }

    #[test]
    fn residual_identity() {
        let p = params8();
        let xg = p.x_grid(4096).unwrap();
        let profile = Profile::Soliton { a: 1.0 };
        let fine = residual_fields(&profile, &p, 0.2, &xg, 1e-5, 1e-3).unwrap();
        let coarse = residual_fields(&profile, &p, 0.2, &xg, 1e-3, 1e-3).unwrap();
        assert!(fine.defect < 1e-3, "defect {}", fine.defect);
        assert!(fine.defect < coarse.defect, "{} vs {}", fine.defect, coarse.defect);

        let zero = Profile::Datum(Field::zeros(&p.grid));
        let r = residual_fields(&zero, &p, 0.1, &xg, 1e-4, 1e-3).unwrap();
        assert_eq!(r.e1.max_abs(), 0.0);
        assert_eq!(r.e2.max_abs(), 0.0);
        assert_eq!(r.direct.max_abs(), 0.0);

        let p_plus = ApproxParams::new(8.0, 1.0, 60.0, 512).unwrap();
        assert!(Profile::Soliton { a: 1.0 }.initial(&p_plus).is_err());
    }

    #[test]
    fn residual_identity_for_evolved_profile() {
        for kappa in [-1.0, 1.0] {
            let p = ApproxParams::new(8.0, kappa, 60.0, 512).unwrap();
            let xg = p.x_grid(4096).unwrap();
            let profile = Profile::gaussian(&p, 0.8, 2.0).unwrap();
            let r = residual_fields(&profile, &p, 0.1, &xg, 1e-4, 1e-3).unwrap();
            assert!(r.defect < 1e-3, "κ = {kappa}: defect {}", r.defect);
        }
    }

    #[test]
    fn residual_ratio_scales_like_n_minus_two() {
        let mut pts = Vec::new();
        for n in [8.0, 16.0, 32.0, 64.0] {
            let p = ApproxParams::new(n, -1.0, 60.0, 512).unwrap();
            let (e1, e2) = residual_norms(&soliton(&p.grid, 1.0, 0.0), &p, -0.5);
            pts.push((n, e1 / e2));
        }
        let fit = fit_loglog(&pts).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn comoving_flow_matches_quartic_flow() {
        // The envelope solver and the quartic solver on the x box agree after lifting.
        let p = ApproxParams::new(8.0, -1.0, 40.0, 256).unwrap();
        let xg = p.x_grid(4096).unwrap();
        let w0 = soliton(&p.grid, 1.0, 0.0);
        let t = 0.02;
        let w = evolve_to_end(&w0, &p.modulated_config(1e-4, t, 1)).unwrap();
        let u0 = build_uap(&w0, &p, 0.0, &xg).unwrap();
        let u = evolve_to_end(&u0, &p.quartic_config(1e-4, t, 1)).unwrap();
        let lifted = build_uap(&w, &p, t, &xg).unwrap();
        let rel = (u.sub(&lifted).quadrature_mass() / u.quadrature_mass()).sqrt();
        assert!(rel < 1e-8, "relative mismatch {rel}");
    }

    #[test]
    fn modulation_sweeps() {
        let [amp, freq, width] = modulation_suite(-0.5).unwrap();
        assert!((amp.fit.slope - 1.0).abs() < 1e-9);
        assert!((freq.fit.slope + 0.5).abs() < 0.05, "M slope {}", freq.fit.slope);
        assert!((width.fit.slope - 0.5).abs() < 0.05, "τ slope {}", width.fit.slope);
        assert!(freq.points.iter().all(|p| p.hypothesis));
        let grid = Grid::new(2048.0, 65536).unwrap();
        let u = |x: f64| C64::from((-0.5 * x * x).exp());
        let low = modulation_norm(&grid, &u, 1.0, 0.01, 1.0, 0.0, -0.5).unwrap();
        assert!(!low.hypothesis);
        assert!(modulation_norm(&grid, &u, 1.0, 200.0, 1.0, 0.0, -0.5).is_err());
    }

    #[test]
    fn tracking_error_decays() {
        let report = error_decay_experiment(&ErrorDecaySetup::default()).unwrap();
        for r in &report.rows {
            assert_eq!(r.initial_error, 0.0);
        }
        assert!((report.fit.slope + 2.0).abs() < 0.4, "slope {}", report.fit.slope);
    }

    #[test]
    fn tracking_error_is_linear_in_small_profiles() {
        let setup = |amplitude| ErrorDecaySetup {
            profile: ProfileShape::Gaussian { amplitude, width: 2.0 },
            ..Default::default()
        };
        let big = error_decay_experiment(&setup(0.1)).unwrap();
        let small = error_decay_experiment(&setup(0.05)).unwrap();
        let ratio = (big.fit.intercept - small.fit.intercept).exp();
        assert!((ratio - 2.0).abs() < 0.4, "prefactor ratio {ratio}");
    }

    #[test]
    fn equal_amplitudes_do_not_separate() {
        let r = separation_experiment(&SeparationSetup {
            a_prime: 1.0,
            window: Some(1.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.initial_distance, 0.0);
        assert_eq!(r.sup_distance, 0.0);
        assert!(r.warnings.is_empty());
        assert!(separation_experiment(&SeparationSetup {
            a: 3.0,
            ..Default::default()
        })
        .is_err());
    }
}
