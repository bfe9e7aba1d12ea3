//! Periodic grid, Fourier transform pair, multipliers, norms and frequency projections.
//!
//! Convention: `c_k = (1/M) Σ_j u(x_j) e^{-i ξ_k x_j}` and `u(x_j) = Σ_k c_k e^{i ξ_k x_j}`
//! with `x_j = -L/2 + j dx` and `ξ_k = 2πk/L`, `k ∈ [-M/2, M/2)`. Parseval reads
//! `Σ_j |u(x_j)|² dx = L Σ_k |c_k|²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Tail thresholds used by the resolution guards.
pub const START_TAIL_LIMIT: f64 = 1e-8;
pub const RUN_TAIL_LIMIT: f64 = 1e-6;

#[derive(Clone)]
pub struct Grid {
    length: f64,
    modes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("modes", &self.modes)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.length == other.length && self.modes == other.modes
    }
}

pub fn make_grid(length: f64, modes: usize) -> Result<Grid> {
    Grid::new(length, modes)
}

impl Grid {
    pub fn new(length: f64, modes: usize) -> Result<Grid> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(format!("grid length must be positive, got {length}")));
        }
        if modes < 8 || !modes.is_multiple_of(2) {
            return Err(invalid(format!("grid modes must be even and >= 8, got {modes}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            length,
            modes,
            forward: planner.plan_fft_forward(modes),
            inverse: planner.plan_fft_inverse(modes),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dx(&self) -> f64 {
        self.length / self.modes as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.modes).map(|j| self.x(j)).collect()
    }

    /// Frequency spacing 2π/L.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Integer wavenumber stored at storage index `idx` (FFT order).
    pub fn k_of(&self, idx: usize) -> i64 {
        let m = self.modes as i64;
        let i = idx as i64;
        if i < m / 2 {
            i
        } else {
            i - m
        }
    }

    /// Storage index of integer wavenumber `k`, if it is on the lattice.
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let m = self.modes as i64;
        if k < -m / 2 || k >= m / 2 {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + m) as usize)
        }
    }

    pub fn xi(&self, idx: usize) -> f64 {
        self.k_of(idx) as f64 * self.dxi()
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.modes).map(|j| self.xi(j)).collect()
    }

    /// |ξ| of the Nyquist mode, π M / L.
    pub fn nyquist(&self) -> f64 {
        PI * self.modes as f64 / self.length
    }

    pub(crate) fn fft_forward(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
    }

    /// True when storage index `idx` lies in the outer quarter of the lattice, |k| ≥ 3M/8.
    pub fn in_spectral_tail(&self, idx: usize) -> bool {
        self.k_of(idx).unsigned_abs() as usize * 8 >= 3 * self.modes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub samples: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    /// Coefficients in FFT storage order; see [`Grid::k_of`].
    pub coeffs: Vec<C64>,
}

impl Field {
    pub fn new(grid: Grid, samples: Vec<C64>) -> Result<Field> {
        if samples.len() != grid.modes() {
            return Err(invalid(format!(
                "field has {} samples but grid has {} modes",
                samples.len(),
                grid.modes()
            )));
        }
        if samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NumericDomain("field contains non-finite samples".into()));
        }
        Ok(Field { grid, samples })
    }

    pub fn zeros(grid: &Grid) -> Field {
        Field {
            grid: grid.clone(),
            samples: vec![C64::new(0.0, 0.0); grid.modes()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> C64) -> Field {
        let samples = (0..grid.modes()).map(|j| f(grid.x(j))).collect();
        Field {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn scale(&self, a: C64) -> Field {
        Field {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|z| z * a).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field {
            grid: self.grid.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field {
            grid: self.grid.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Σ |u_j|² dx.
    pub fn quadrature_mass(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }
}

impl Spectrum {
    pub fn zeros(grid: &Grid) -> Spectrum {
        Spectrum {
            grid: grid.clone(),
            coeffs: vec![C64::new(0.0, 0.0); grid.modes()],
        }
    }

    /// Coefficient for integer wavenumber `k`, zero off the lattice.
    pub fn coeff(&self, k: i64) -> C64 {
        self.grid
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn set(&mut self, k: i64, c: C64) {
        let i = self
            .grid
            .index_of(k)
            .unwrap_or_else(|| panic!("wavenumber {k} is off the lattice"));
        self.coeffs[i] = c;
    }

    /// L Σ |c_k|².
    pub fn mass(&self) -> f64 {
        self.grid.length() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

fn alternate(buf: &mut [C64]) {
    // (-1)^k with M even equals (-1)^idx.
    for c in buf.iter_mut().skip(1).step_by(2) {
        *c = -*c;
    }
}

pub fn to_spectrum(f: &Field) -> Spectrum {
    let mut buf = f.samples.clone();
    f.grid.fft_forward(&mut buf);
    let inv = 1.0 / f.grid.modes() as f64;
    for c in buf.iter_mut() {
        *c *= inv;
    }
    alternate(&mut buf);
    Spectrum {
        grid: f.grid.clone(),
        coeffs: buf,
    }
}

pub fn to_physical(s: &Spectrum) -> Field {
    let mut buf = s.coeffs.clone();
    alternate(&mut buf);
    s.grid.fft_inverse(&mut buf);
    Field {
        grid: s.grid.clone(),
        samples: buf,
    }
}

/// A Fourier multiplier ξ ↦ σ(ξ) with a readable tag.
#[derive(Clone)]
pub struct SymbolFn {
    pub tag: String,
    f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
}

impl fmt::Debug for SymbolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymbolFn({})", self.tag)
    }
}

impl SymbolFn {
    pub fn new(tag: impl Into<String>, f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> SymbolFn {
        SymbolFn {
            tag: tag.into(),
            f: Arc::new(f),
        }
    }

    pub fn real(tag: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SymbolFn {
        SymbolFn::new(tag, move |xi| C64::new(f(xi), 0.0))
    }

    pub fn eval(&self, xi: f64) -> C64 {
        (self.f)(xi)
    }

    /// Pointwise product σ₁σ₂.
    pub fn product(&self, other: &SymbolFn) -> SymbolFn {
        let (a, b) = (self.clone(), other.clone());
        SymbolFn::new(format!("({})*({})", a.tag, b.tag), move |xi| a.eval(xi) * b.eval(xi))
    }

    /// |ξ|^α with the convention |0|^α = 0 for α > 0.
    pub fn abs_power(alpha: f64) -> SymbolFn {
        SymbolFn::real(format!("|xi|^{alpha}"), move |xi| abs_pow(xi, alpha))
    }
}

pub(crate) fn abs_pow(xi: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if xi == 0.0 {
        0.0
    } else {
        xi.abs().powf(alpha)
    }
}

pub fn apply_symbol(s: &Spectrum, sigma: &SymbolFn) -> Result<Spectrum> {
    let mut out = s.clone();
    for (i, c) in out.coeffs.iter_mut().enumerate() {
        let xi = s.grid.xi(i);
        let m = sigma.eval(xi);
        if !(m.re.is_finite() && m.im.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "symbol {} is not finite at xi = {xi}",
                sigma.tag
            )));
        }
        *c *= m;
    }
    Ok(out)
}

/// Multiply coefficients by a real function of ξ without the finiteness bookkeeping.
pub(crate) fn scale_modes(s: &mut Spectrum, f: impl Fn(f64) -> C64) {
    let g = s.grid.clone();
    for (i, c) in s.coeffs.iter_mut().enumerate() {
        *c *= f(g.xi(i));
    }
}

pub fn apply_symbol_field(f: &Field, sigma: &SymbolFn) -> Result<Field> {
    Ok(to_physical(&apply_symbol(&to_spectrum(f), sigma)?))
}

pub fn fractional_derivative(f: &Field, alpha: f64) -> Result<Field> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("derivative order must be >= 0, got {alpha}")));
    }
    apply_symbol_field(f, &SymbolFn::abs_power(alpha))
}

/// Integer-order spectral derivative (iξ)^n.
pub fn derivative(f: &Field, n: u32) -> Field {
    let mut s = to_spectrum(f);
    scale_modes(&mut s, |xi| C64::new(0.0, xi).powu(n));
    to_physical(&s)
}

/// Weight used in Sobolev norms: ⟨ξ⟩^s (inhomogeneous) or |ξ|^s (homogeneous).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Inhomogeneous,
    /// The ξ = 0 mode is dropped for s < 0 and kept with weight 1 for s = 0.
    Homogeneous,
}

pub fn bracket(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

pub fn sobolev_weight(xi: f64, s: f64, weight: Weight) -> f64 {
    match weight {
        Weight::Inhomogeneous => (1.0 + xi * xi).powf(s),
        Weight::Homogeneous => {
            if xi == 0.0 {
                if s == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                xi.abs().powf(2.0 * s)
            }
        }
    }
}

/// ‖u‖_{H^s} with ‖u‖² = L Σ_k w(ξ_k) |c_k|², w = ⟨ξ⟩^{2s} or |ξ|^{2s}.
pub fn sobolev_norm(f: &Field, s: f64, weight: Weight) -> f64 {
    spectrum_sobolev_norm(&to_spectrum(f), s, weight)
}

pub fn spectrum_sobolev_norm(sp: &Spectrum, s: f64, weight: Weight) -> f64 {
    let g = &sp.grid;
    let sum: f64 = sp
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| sobolev_weight(g.xi(i), s, weight) * c.norm_sqr())
        .sum();
    (g.length() * sum).sqrt()
}

pub fn lebesgue_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid(format!("Lebesgue exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let sum: f64 = f.samples.iter().map(|z| z.norm().powf(p)).sum();
    Ok((sum * f.grid.dx()).powf(1.0 / p))
}

/// Smooth bump: 1 on [0,1], 0 beyond 2, C^∞ in between (argument is |ξ|/N).
pub fn lp_bump(r: f64) -> f64 {
    let r = r.abs();
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let h = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = h(2.0 - r);
    let b = h(r - 1.0);
    a / (a + b)
}

pub fn is_dyadic(n: f64) -> bool {
    n >= 1.0 && n.is_finite() && n.log2().fract() == 0.0
}

/// Littlewood–Paley multiplier φ_N.
pub fn lp_multiplier(n: f64, xi: f64) -> f64 {
    if n == 1.0 {
        lp_bump(xi)
    } else {
        lp_bump(xi / n) - lp_bump(2.0 * xi / n)
    }
}

pub fn project_band(f: &Field, n: f64) -> Result<Field> {
    if !is_dyadic(n) {
        return Err(invalid(format!("band index must be a power of two >= 1, got {n}")));
    }
    let mut s = to_spectrum(f);
    scale_modes(&mut s, |xi| C64::new(lp_multiplier(n, xi), 0.0));
    Ok(to_physical(&s))
}

/// Dyadic band indices 1, 2, 4, … whose projections sum to the identity on the grid.
pub fn dyadic_bands(grid: &Grid) -> Vec<f64> {
    let mut out = vec![1.0];
    while *out.last().unwrap() < grid.nyquist() {
        let next = out.last().unwrap() * 2.0;
        out.push(next);
    }
    out
}

/// Fraction of the mass carried by modes with |k| ≥ 3M/8.
pub fn spectral_tail_fraction(sp: &Spectrum) -> f64 {
    let total: f64 = sp.coeffs.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = sp
        .coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| sp.grid.in_spectral_tail(*i))
        .map(|(_, c)| c.norm_sqr())
        .sum();
    tail / total
}

/// Fraction of the mass sitting at |x| ≥ 3L/8.
pub fn boundary_tail_fraction(f: &Field) -> f64 {
    let total: f64 = f.samples.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let edge = 0.375 * f.grid.length();
    let tail: f64 = f
        .samples
        .iter()
        .enumerate()
        .filter(|(j, _)| f.grid.x(*j).abs() >= edge)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    tail / total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailReport {
    pub spectral: f64,
    pub boundary: f64,
}

pub fn tail_report(f: &Field) -> TailReport {
    TailReport {
        spectral: spectral_tail_fraction(&to_spectrum(f)),
        boundary: boundary_tail_fraction(f),
    }
}

pub fn check_tails(f: &Field, limit: f64) -> Result<TailReport> {
    let r = tail_report(f);
    if r.spectral > limit {
        return Err(Error::TailGuard {
            kind: "spectral",
            fraction: r.spectral,
            threshold: limit,
        });
    }
    if r.boundary > limit {
        return Err(Error::TailGuard {
            kind: "boundary",
            fraction: r.boundary,
            threshold: limit,
        });
    }
    Ok(r)
}

/// A e^{i k₀ x} exp(-((x - x₀)/w)²).
pub fn make_gaussian(grid: &Grid, amplitude: f64, width: f64, carrier: f64, center: f64) -> Result<Field> {
    if !(width.is_finite() && width > 0.0) {
        return Err(invalid(format!("gaussian width must be positive, got {width}")));
    }
    if carrier.abs() >= grid.nyquist() {
        return Err(Error::Resolution(format!(
            "carrier {carrier} is not below the Nyquist frequency {}",
            grid.nyquist()
        )));
    }
    let f = Field::from_fn(grid, |x| {
        let y = (x - center) / width;
        C64::from_polar(amplitude * (-y * y).exp(), carrier * x)
    });
    let sp = to_spectrum(&f);
    let peak = sp.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let edge = sp
        .coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.in_spectral_tail(*i))
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    if peak > 0.0 && edge > 1e-12 * peak {
        return Err(Error::Resolution(format!(
            "gaussian is under-resolved: edge/peak spectral ratio {:.3e}",
            edge / peak
        )));
    }
    Ok(f)
}

/// The truncated lattice {k : |k| ≤ K} used by direct hyperplane sums and the Galerkin oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    pub grid: Grid,
    pub cutoff: usize,
}

impl ModeSet {
    pub fn new(grid: &Grid, cutoff: usize) -> Result<ModeSet> {
        if cutoff == 0 || cutoff >= grid.modes() / 2 {
            return Err(invalid(format!(
                "mode cutoff {cutoff} must satisfy 1 <= K < M/2 = {}",
                grid.modes() / 2
            )));
        }
        Ok(ModeSet {
            grid: grid.clone(),
            cutoff,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequencies ξ_k for k = -K..=K.
    pub fn freqs(&self) -> Vec<f64> {
        let k = self.cutoff as i64;
        (-k..=k).map(|j| j as f64 * self.grid.dxi()).collect()
    }

    /// Coefficients c_{-K..=K}.
    pub fn gather(&self, s: &Spectrum) -> Vec<C64> {
        let k = self.cutoff as i64;
        (-k..=k).map(|j| s.coeff(j)).collect()
    }

    pub fn scatter(&self, c: &[C64]) -> Spectrum {
        assert_eq!(c.len(), self.len());
        let mut s = Spectrum::zeros(&self.grid);
        let k = self.cutoff as i64;
        for (j, v) in (-k..=k).zip(c) {
            s.set(j, *v);
        }
        s
    }

    /// True when every coefficient outside |k| ≤ K is below `tol` times the largest one.
    pub fn contains(&self, s: &Spectrum, tol: f64) -> bool {
        let peak = s.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        s.coeffs.iter().enumerate().all(|(i, c)| {
            s.grid.k_of(i).unsigned_abs() as usize <= self.cutoff || c.norm() <= tol * peak
        })
    }
}

/// Evaluate the band-limited interpolant Σ c_k e^{iξ_k x} at arbitrary points.
pub fn evaluate_at(sp: &Spectrum, points: &[f64]) -> Vec<C64> {
    let g = &sp.grid;
    let active: Vec<(f64, C64)> = sp
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() > 0.0)
        .map(|(i, c)| (g.xi(i), *c))
        .collect();
    points
        .iter()
        .map(|&x| {
            active
                .iter()
                .map(|(xi, c)| c * C64::from_polar(1.0, xi * x))
                .sum()
        })
        .collect()
}

/// Translate a field by `shift` (u(x) ↦ u(x - shift)) exactly on the band-limited interpolant.
pub fn translate(f: &Field, shift: f64) -> Field {
    let mut s = to_spectrum(f);
    scale_modes(&mut s, |xi| C64::from_polar(1.0, -xi * shift));
    to_physical(&s)
}
