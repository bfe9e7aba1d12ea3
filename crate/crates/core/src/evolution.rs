//! Time integrators.
//!
//! Every solver uses the same sign convention: the linear flow multiplies the mode ξ by
//! `e^{i·o·t·ω(ξ)}` (orientation `o = ±1`), and the nonlinear flow solves `i∂t u = κ|u|²u`.
//! For the quartic equation this is `i∂t u = -o∂ₓ⁴u + κ|u|²u`, so `o = -1` gives
//! `i∂t u = ∂ₓ⁴u + κ|u|²u` and `o = +1` gives `(i∂t + ∂ₓ⁴)u = κ|u|²u`.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::spectral::{
    spectral_tail_fraction, spectrum_sobolev_norm, to_spectrum, Field, Grid, ModeSet, Spectrum, Weight,
    C64, RUN_TAIL_LIMIT, START_TAIL_LIMIT,
};

/// Linear dispersion relation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Equation {
    /// ω(ξ) = ξ⁴.
    Quartic,
    /// ω(ξ) = ξ².
    Cubic,
    /// The quartic equation seen from a frame moving with a carrier `N` and stretched by
    /// `σ = √6 N`, with the carrier phase removed: for `η = ζ/σ`,
    /// `ω(ζ) = (N+η)⁴ - N⁴ - 4N³η = 6N²η² + 4Nη³ + η⁴ = ζ² + 4ζ³/(6^{3/2}N²) + ζ⁴/(36N⁴)`.
    Modulated { carrier: f64 },
}

impl Equation {
    pub fn omega(&self, xi: f64) -> f64 {
        match *self {
            Equation::Quartic => {
                let x2 = xi * xi;
                x2 * x2
            }
            Equation::Cubic => xi * xi,
            Equation::Modulated { carrier } => {
                let eta = xi / (6f64.sqrt() * carrier);
                let n = carrier;
                eta * eta * (6.0 * n * n + 4.0 * n * eta + eta * eta)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Strang,
    Ifrk4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub equation: Equation,
    /// ±1; see the module docs.
    pub orientation: f64,
    /// Nonlinear coefficient κ; zero switches the nonlinearity off.
    pub kappa: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Record diagnostics every `record_stride` steps (and at the final time).
    pub record_stride: usize,
    /// Keep full fields in the record; otherwise only the scalar series.
    pub keep_states: bool,
    /// Sobolev indices whose inhomogeneous norms are recorded at every snapshot.
    pub norm_indices: Vec<f64>,
}

impl EvolutionConfig {
    /// Quartic equation `i∂t u = ∂ₓ⁴u + κ|u|²u` with the split-step scheme.
    pub fn quartic(kappa: f64, dt: f64, t_end: f64) -> EvolutionConfig {
        EvolutionConfig {
            equation: Equation::Quartic,
            orientation: -1.0,
            kappa,
            dt,
            t_end,
            scheme: Scheme::Strang,
            record_stride: 1,
            keep_states: false,
            norm_indices: Vec::new(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn keeping_states(mut self) -> Self {
        self.keep_states = true;
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            errs.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            errs.push(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.orientation != 1.0 && self.orientation != -1.0 {
            errs.push(format!("orientation must be +1 or -1, got {}", self.orientation));
        }
        if !self.kappa.is_finite() {
            errs.push("kappa must be finite".into());
        }
        if self.record_stride == 0 {
            errs.push("record_stride must be positive".into());
        }
        if let Equation::Modulated { carrier } = self.equation {
            if !(carrier.is_finite() && carrier > 0.0) {
                errs.push(format!("carrier must be positive, got {carrier}"));
            }
        }
        let phase = self.dt * self.equation.omega(grid.nyquist());
        if !phase.is_finite() {
            errs.push("linear phase per step is not finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(invalid(errs.join("; ")))
        }
    }

    /// Number of steps and the step actually used (t_end split into equal steps ≤ dt).
    pub fn steps(&self) -> (usize, f64) {
        let n = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub mass: Vec<f64>,
    /// The conserved energy of the configured equation, see [`model_energy`].
    pub hamiltonian: Vec<f64>,
    pub norm_indices: Vec<f64>,
    /// `norms[r][i]` is the H^{s_i} norm at record `r`.
    pub norms: Vec<Vec<f64>>,
    pub spectral_tail: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Field> {
        self.states.last()
    }

    fn push(&mut self, t: f64, f: &Field, sp: &Spectrum, cfg: &EvolutionConfig) {
        self.times.push(t);
        self.mass.push(sp.mass());
        self.hamiltonian
            .push(model_energy_from(f, sp, cfg.equation, cfg.orientation, cfg.kappa));
        self.norms.push(
            cfg.norm_indices
                .iter()
                .map(|&s| spectrum_sobolev_norm(sp, s, Weight::Inhomogeneous))
                .collect(),
        );
        self.spectral_tail.push(spectral_tail_fraction(sp));
        if cfg.keep_states {
            self.states.push(f.clone());
        }
    }
}

/// ∫|u|⁴ dx by grid quadrature.
pub(crate) fn quartic_integral(f: &Field) -> f64 {
    f.samples.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * f.grid.dx()
}

/// Conserved energy `½ L Σ ω(ξ)|c|² - (oκ/4) ∫|u|⁴` of the configured flow.
pub fn model_energy(f: &Field, equation: Equation, orientation: f64, kappa: f64) -> f64 {
    model_energy_from(f, &to_spectrum(f), equation, orientation, kappa)
}

fn model_energy_from(f: &Field, sp: &Spectrum, equation: Equation, orientation: f64, kappa: f64) -> f64 {
    let g = &sp.grid;
    let kinetic: f64 = sp
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| equation.omega(g.xi(i)) * c.norm_sqr())
        .sum::<f64>()
        * 0.5
        * g.length();
    kinetic - 0.25 * orientation * kappa * quartic_integral(f)
}

fn phases(grid: &Grid, equation: Equation, orientation: f64, t: f64) -> Vec<C64> {
    (0..grid.modes())
        .map(|i| {
            let w = equation.omega(grid.xi(i));
            C64::from_polar(1.0, reduce_phase(orientation * t * w))
        })
        .collect()
}

/// Reduce a phase modulo 2π before taking sin/cos.
fn reduce_phase(p: f64) -> f64 {
    p.rem_euclid(2.0 * PI)
}

pub fn linear_propagate(f: &Field, t: f64, orientation: f64, equation: Equation) -> Field {
    let ph = phases(&f.grid, equation, orientation, t);
    let mut buf = f.samples.clone();
    apply_linear(&f.grid, &ph, &mut buf);
    Field {
        grid: f.grid.clone(),
        samples: buf,
    }
}

pub fn linear_propagate_4nls(f: &Field, t: f64, orientation: f64) -> Field {
    linear_propagate(f, t, orientation, Equation::Quartic)
}

pub fn linear_propagate_nls(f: &Field, t: f64, orientation: f64) -> Field {
    linear_propagate(f, t, orientation, Equation::Cubic)
}

/// Exact flow of `i∂t u = κ|u|²u` over `dt`.
pub fn nonlinear_substep(f: &Field, dt: f64, kappa: f64) -> Field {
    let mut out = f.samples.clone();
    nonlinear_in_place(&mut out, dt, kappa);
    Field {
        grid: f.grid.clone(),
        samples: out,
    }
}

fn nonlinear_in_place(u: &mut [C64], dt: f64, kappa: f64) {
    if kappa == 0.0 || dt == 0.0 {
        return;
    }
    for z in u.iter_mut() {
        *z *= C64::from_polar(1.0, -kappa * z.norm_sqr() * dt);
    }
}

// Diagonal multipliers commute with the (-1)^k/M bookkeeping of the coefficient convention,
// so the linear step acts directly on raw transforms.
fn apply_linear(grid: &Grid, ph: &[C64], buf: &mut [C64]) {
    grid.fft_forward(buf);
    let inv = 1.0 / grid.modes() as f64;
    for (c, p) in buf.iter_mut().zip(ph) {
        *c *= p * inv;
    }
    grid.fft_inverse(buf);
}

/// Single-step integrator with cached phase tables; `h` may be negative.
pub struct Stepper {
    grid: Grid,
    scheme: Scheme,
    kappa: f64,
    h: f64,
    half: Vec<C64>,
    full: Vec<C64>,
}

impl Stepper {
    pub fn new(grid: &Grid, cfg: &EvolutionConfig, h: f64) -> Stepper {
        Stepper {
            grid: grid.clone(),
            scheme: cfg.scheme,
            kappa: cfg.kappa,
            h,
            half: phases(grid, cfg.equation, cfg.orientation, 0.5 * h),
            full: phases(grid, cfg.equation, cfg.orientation, h),
        }
    }

    pub fn step(&self, f: &Field) -> Field {
        let mut u = f.samples.clone();
        match self.scheme {
            Scheme::Strang => {
                apply_linear(&self.grid, &self.half, &mut u);
                nonlinear_in_place(&mut u, self.h, self.kappa);
                apply_linear(&self.grid, &self.half, &mut u);
            }
            Scheme::Ifrk4 => self.ifrk4_in_place(&mut u),
        }
        Field {
            grid: self.grid.clone(),
            samples: u,
        }
    }

    // Nonlinear term -iκ|u|²u in raw transform space; `v` holds a raw transform.
    fn nonlinear_raw(&self, v: &[C64]) -> Vec<C64> {
        let mut u = v.to_vec();
        self.grid.fft_inverse(&mut u);
        let inv = 1.0 / self.grid.modes() as f64;
        for z in u.iter_mut() {
            let w = *z * inv;
            *z = C64::new(0.0, -self.kappa) * w.norm_sqr() * w;
        }
        self.grid.fft_forward(&mut u);
        u
    }

    // Lawson (integrating-factor) RK4.
    fn ifrk4_in_place(&self, u: &mut [C64]) {
        let h = self.h;
        let mut v = u.to_vec();
        self.grid.fft_forward(&mut v);
        let (eh, e) = (&self.half, &self.full);
        let k1 = self.nonlinear_raw(&v);
        let a: Vec<C64> = (0..v.len()).map(|i| eh[i] * (v[i] + 0.5 * h * k1[i])).collect();
        let k2 = self.nonlinear_raw(&a);
        let b: Vec<C64> = (0..v.len()).map(|i| eh[i] * v[i] + 0.5 * h * k2[i]).collect();
        let k3 = self.nonlinear_raw(&b);
        let c: Vec<C64> = (0..v.len()).map(|i| e[i] * v[i] + h * eh[i] * k3[i]).collect();
        let k4 = self.nonlinear_raw(&c);
        for i in 0..v.len() {
            v[i] = e[i] * v[i] + h / 6.0 * (e[i] * k1[i] + 2.0 * eh[i] * (k2[i] + k3[i]) + k4[i]);
        }
        self.grid.fft_inverse(&mut v);
        let inv = 1.0 / self.grid.modes() as f64;
        for (dst, src) in u.iter_mut().zip(v) {
            *dst = src * inv;
        }
    }
}

pub fn strang_step(f: &Field, cfg: &EvolutionConfig) -> Result<Field> {
    cfg.validate(&f.grid)?;
    let cfg = EvolutionConfig {
        scheme: Scheme::Strang,
        ..cfg.clone()
    };
    Ok(Stepper::new(&f.grid, &cfg, cfg.dt).step(f))
}

pub fn ifrk4_step(f: &Field, cfg: &EvolutionConfig) -> Result<Field> {
    cfg.validate(&f.grid)?;
    let cfg = EvolutionConfig {
        scheme: Scheme::Ifrk4,
        ..cfg.clone()
    };
    Ok(Stepper::new(&f.grid, &cfg, cfg.dt).step(f))
}

fn start_guard(f: &Field) -> Result<()> {
    crate::spectral::check_tails(f, START_TAIL_LIMIT).map(|_| ())
}

/// Evolve from `f0` to `cfg.t_end`, recording at t = 0, every `record_stride` steps and at the end.
pub fn evolve(f0: &Field, cfg: &EvolutionConfig) -> Result<TrajectoryRecord> {
    evolve_with(f0, cfg, |_, _| {})
}

/// As [`evolve`], calling `observe(t, state)` at every record point.
pub fn evolve_with(
    f0: &Field,
    cfg: &EvolutionConfig,
    mut observe: impl FnMut(f64, &Field),
) -> Result<TrajectoryRecord> {
    cfg.validate(&f0.grid)?;
    start_guard(f0)?;
    let grid = &f0.grid;
    let (n, h) = cfg.steps();
    let stepper = Stepper::new(grid, cfg, h);
    let mut rec = TrajectoryRecord {
        norm_indices: cfg.norm_indices.clone(),
        ..Default::default()
    };
    rec.push(0.0, f0, &to_spectrum(f0), cfg);
    observe(0.0, f0);

    let mut u = f0.clone();
    match cfg.scheme {
        Scheme::Strang => {
            // Adjacent half steps are fused into one full linear step between record points.
            apply_linear(grid, &stepper.half, &mut u.samples);
            for step in 1..=n {
                nonlinear_in_place(&mut u.samples, h, cfg.kappa);
                if step == n || step % cfg.record_stride == 0 {
                    apply_linear(grid, &stepper.half, &mut u.samples);
                    let t = step as f64 * h;
                    record_point(&mut rec, t, &u, cfg)?;
                    observe(t, &u);
                    if step < n {
                        apply_linear(grid, &stepper.half, &mut u.samples);
                    }
                } else {
                    apply_linear(grid, &stepper.full, &mut u.samples);
                }
            }
        }
        Scheme::Ifrk4 => {
            for step in 1..=n {
                stepper.ifrk4_in_place(&mut u.samples);
                if step == n || step % cfg.record_stride == 0 {
                    let t = step as f64 * h;
                    record_point(&mut rec, t, &u, cfg)?;
                    observe(t, &u);
                }
            }
        }
    }
    if !cfg.keep_states {
        rec.states.push(u);
    }
    Ok(rec)
}

fn record_point(rec: &mut TrajectoryRecord, t: f64, u: &Field, cfg: &EvolutionConfig) -> Result<()> {
    if u.samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(abort(rec, t, u, "non-finite state".into()));
    }
    let sp = to_spectrum(u);
    let tail = spectral_tail_fraction(&sp);
    if tail > RUN_TAIL_LIMIT {
        return Err(abort(
            rec,
            t,
            u,
            format!("spectral tail fraction {tail:.3e} exceeds {RUN_TAIL_LIMIT:.0e}"),
        ));
    }
    rec.push(t, u, &sp, cfg);
    Ok(())
}

fn abort(rec: &TrajectoryRecord, t: f64, u: &Field, reason: String) -> Error {
    let mut partial = rec.clone();
    partial.states.push(u.clone());
    Error::Aborted {
        time: t,
        reason,
        record: Box::new(partial),
    }
}

/// Final state of [`evolve`] without recording intermediate diagnostics.
pub fn evolve_to_end(f0: &Field, cfg: &EvolutionConfig) -> Result<Field> {
    let cfg = EvolutionConfig {
        record_stride: usize::MAX,
        keep_states: false,
        norm_indices: Vec::new(),
        ..cfg.clone()
    };
    let rec = evolve(f0, &cfg)?;
    Ok(rec.states.into_iter().last().expect("final state is always stored"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeAgreement {
    /// ‖Strang − IFRK4‖_{L²} at the final time, both at step `dt`.
    pub difference: f64,
    /// Step-doubling error estimate of the Strang run (order 2).
    pub strang_error: f64,
    /// Step-doubling error estimate of the IFRK4 run (order 4).
    pub ifrk4_error: f64,
}

impl SchemeAgreement {
    pub fn agrees(&self) -> bool {
        self.difference <= self.strang_error + self.ifrk4_error
    }
}

/// Runs both schemes at `cfg.dt` and `cfg.dt/2` and compares their final states.
pub fn cross_validate(f0: &Field, cfg: &EvolutionConfig) -> Result<SchemeAgreement> {
    let run = |scheme: Scheme, dt: f64| {
        evolve_to_end(
            f0,
            &EvolutionConfig {
                scheme,
                dt,
                ..cfg.clone()
            },
        )
    };
    let dist = |a: &Field, b: &Field| a.sub(b).quadrature_mass().sqrt();
    let s1 = run(Scheme::Strang, cfg.dt)?;
    let s2 = run(Scheme::Strang, cfg.dt / 2.0)?;
    let r1 = run(Scheme::Ifrk4, cfg.dt)?;
    let r2 = run(Scheme::Ifrk4, cfg.dt / 2.0)?;
    Ok(SchemeAgreement {
        difference: dist(&s1, &r1),
        strang_error: dist(&s1, &s2) * 4.0 / 3.0,
        ifrk4_error: dist(&r1, &r2) * 16.0 / 15.0,
    })
}

/// The Fourier–Galerkin truncation of the flow to modes |k| ≤ K:
/// `ċ_k = i·o·ω(ξ_k) c_k - iκ Σ_{k₁-k₂+k₃=k} c_{k₁} conj(c_{k₂}) c_{k₃}` with all |kᵢ| ≤ K.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    pub modes: ModeSet,
    linear: Vec<f64>,
    kappa: f64,
}

impl GalerkinSystem {
    pub fn new(modes: &ModeSet, cfg: &EvolutionConfig) -> GalerkinSystem {
        let linear = modes
            .freqs()
            .iter()
            .map(|&xi| cfg.orientation * cfg.equation.omega(xi))
            .collect();
        GalerkinSystem {
            modes: modes.clone(),
            linear,
            kappa: cfg.kappa,
        }
    }

    /// Cubic convolution Σ_{k₁-k₂+k₃=k} c_{k₁} conj(c_{k₂}) c_{k₃} restricted to |k|, |kᵢ| ≤ K.
    pub fn cubic(&self, c: &[C64]) -> Vec<C64> {
        let k = self.modes.cutoff as i64;
        let width = 2 * k + 1;
        let mut out = vec![C64::new(0.0, 0.0); width as usize];
        for (o, slot) in out.iter_mut().enumerate() {
            let kk = o as i64 - k;
            let mut acc = C64::new(0.0, 0.0);
            for k1 in -k..=k {
                let a = c[(k1 + k) as usize];
                for k2 in -k..=k {
                    let k3 = kk - k1 + k2;
                    if k3.abs() <= k {
                        acc += a * c[(k2 + k) as usize].conj() * c[(k3 + k) as usize];
                    }
                }
            }
            *slot = acc;
        }
        out
    }

    pub fn rhs(&self, c: &[C64]) -> Vec<C64> {
        let mut out = if self.kappa != 0.0 {
            self.cubic(c)
        } else {
            vec![C64::new(0.0, 0.0); c.len()]
        };
        for ((o, ci), w) in out.iter_mut().zip(c).zip(&self.linear) {
            *o = C64::new(0.0, *w) * ci - C64::new(0.0, self.kappa) * *o;
        }
        out
    }

    pub fn rk4_step(&self, c: &[C64], h: f64) -> Vec<C64> {
        let add = |a: &[C64], b: &[C64], s: f64| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let k1 = self.rhs(c);
        let k2 = self.rhs(&add(c, &k1, 0.5 * h));
        let k3 = self.rhs(&add(c, &k2, 0.5 * h));
        let k4 = self.rhs(&add(c, &k3, h));
        (0..c.len())
            .map(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    pub fn integrate(&self, c: &[C64], t: f64, steps: usize) -> Vec<C64> {
        let h = t / steps as f64;
        let mut x = c.to_vec();
        for _ in 0..steps {
            x = self.rk4_step(&x, h);
        }
        x
    }
}

/// Right-hand side of the truncated system as a full spectrum (zero outside |k| ≤ K).
pub fn galerkin_rhs(s: &Spectrum, cfg: &EvolutionConfig, cutoff: usize) -> Result<Spectrum> {
    let modes = ModeSet::new(&s.grid, cutoff)?;
    let sys = GalerkinSystem::new(&modes, cfg);
    Ok(modes.scatter(&sys.rhs(&modes.gather(s))))
}
