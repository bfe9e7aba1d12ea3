//! The smoothing multiplier `m`, modified energies, multilinear forms over frequency
//! hyperplanes, and the bookkeeping for the global argument.
//!
//! Multilinear forms use the discrete measure
//! `Λₙ(M; u₁,…,uₙ) = L Σ_{k₁+…+kₙ=0} M(ξ) Π_j a_j(k_j)` with `a_j = c_{u_j}(k)` in odd slots and
//! `a_j = conj(c_{u_j}(−k))` (the coefficient of `ū_j`) in even slots, so that `Λ₄(1; u) = ∫|u|⁴`
//! for band-limited `u`.

// The convolution sums index several coefficient arrays by the same running mode.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::LN_2;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::evolution::{evolve_with, EvolutionConfig, GalerkinSystem};
use crate::fit::{fit_loglog, FitResult};
use crate::resonance::{check_hyperplane, dyadic, resonance_factored};
use crate::spectral::{scale_modes, to_physical, to_spectrum, Field, ModeSet, Spectrum, SymbolFn, C64};

/// Term budget for direct hyperplane sums.
pub const TERM_BUDGET: u128 = 100_000_000;

/// Shape of `m` on the window N ≤ |ξ| ≤ 2N.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Cubic in log|ξ| matching values and first derivatives of both branches (C¹, monotone).
    #[default]
    LogCubic,
    /// `ln m = s·ln(|ξ|/N)·χ(t)` with a C^∞ step χ; smooth at both junctions.
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IMethodParams {
    pub n: f64,
    pub s: f64,
    pub interp: Interpolation,
}

impl IMethodParams {
    pub fn new(n: f64, s: f64) -> Result<IMethodParams> {
        if !(n.is_finite() && n >= 1.0) {
            return Err(invalid(format!("threshold N must be >= 1, got {n}")));
        }
        if !(s.is_finite() && s <= 0.0) {
            return Err(invalid(format!("regularity s must be <= 0, got {s}")));
        }
        Ok(IMethodParams {
            n,
            s,
            interp: Interpolation::LogCubic,
        })
    }

    pub fn with_interp(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    pub fn m(&self, xi: f64) -> f64 {
        self.log_m(xi).exp()
    }

    pub fn m2(&self, xi: f64) -> f64 {
        (2.0 * self.log_m(xi)).exp()
    }

    fn log_m(&self, xi: f64) -> f64 {
        let r = xi.abs();
        if r <= self.n || self.s == 0.0 {
            return 0.0;
        }
        let u = (r / self.n).ln();
        if r >= 2.0 * self.n {
            return self.s * u;
        }
        let t = u / LN_2;
        match self.interp {
            Interpolation::LogCubic => self.s * LN_2 * t * t * (2.0 - t),
            Interpolation::Smooth => self.s * u * smooth_step(t),
        }
    }
}

fn smooth_step(t: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = h(t);
    let b = h(1.0 - t);
    a / (a + b)
}

pub fn i_multiplier(p: &IMethodParams) -> SymbolFn {
    let q = *p;
    SymbolFn::real(format!("m[N={}, s={}]", p.n, p.s), move |xi| q.m(xi))
}

pub fn apply_i(f: &Field, p: &IMethodParams) -> Field {
    let mut s = to_spectrum(f);
    scale_modes(&mut s, |xi| C64::new(p.m(xi), 0.0));
    to_physical(&s)
}

/// ‖Iu‖²_{L²} = L Σ m²(ξ)|c|².
pub fn energy2(f: &Field, p: &IMethodParams) -> f64 {
    spectrum_energy2(&to_spectrum(f), p)
}

pub fn spectrum_energy2(sp: &Spectrum, p: &IMethodParams) -> f64 {
    let g = &sp.grid;
    g.length()
        * sp.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| p.m2(g.xi(i)) * c.norm_sqr())
            .sum::<f64>()
}

/// Orientation and nonlinear coefficient of the flow the modified energies are built for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub orientation: f64,
    pub kappa: f64,
}

impl Default for Flow {
    /// `i∂t u = ∂ₓ⁴u + |u|²u`.
    fn default() -> Self {
        Flow {
            orientation: -1.0,
            kappa: 1.0,
        }
    }
}

impl Flow {
    pub fn of(cfg: &EvolutionConfig) -> Flow {
        Flow {
            orientation: cfg.orientation,
            kappa: cfg.kappa,
        }
    }

    /// Sign ς with `E_I⁴ = E_I² + Λ₄(ς σ₄)`: the linear part of `d/dt Λ₄(ςσ₄)` is
    /// `Λ₄(ςσ₄·i·o·(ξ₁⁴−ξ₂⁴+ξ₃⁴−ξ₄⁴))`, which cancels `dE_I²/dt = iκΛ₄(M₄)` when ς = −κ·o.
    pub fn correction_sign(&self) -> f64 {
        -self.kappa * self.orientation
    }
}

/// α₄ = i(ξ₁⁴ − ξ₂⁴ + ξ₃⁴ − ξ₄⁴).
pub fn symbol_alpha4(xi: &[f64; 4]) -> Result<C64> {
    check_hyperplane(xi)?;
    Ok(C64::new(0.0, resonance_factored(xi)))
}

/// M₄ = ½(m²(ξ₁) − m²(ξ₂) + m²(ξ₃) − m²(ξ₄)).
pub fn symbol_m4(xi: &[f64; 4], p: &IMethodParams) -> Result<f64> {
    check_hyperplane(xi)?;
    Ok(m4_from(&[p.m2(xi[0]), p.m2(xi[1]), p.m2(xi[2]), p.m2(xi[3])]))
}

fn m4_from(m2: &[f64; 4]) -> f64 {
    0.5 * (m2[0] - m2[1] + m2[2] - m2[3])
}

/// σ₄ = −M₄/(iα₄) = M₄ / ((ξ₁+ξ₂)(ξ₁+ξ₄)(ξ₁²+ξ₂²+ξ₃²+ξ₄²+2(ξ₁+ξ₃)²)).
///
/// On resonant tuples the value is 0 when M₄ vanishes as well and an error otherwise.
pub fn symbol_sigma4(xi: &[f64; 4], p: &IMethodParams) -> Result<C64> {
    check_hyperplane(xi)?;
    let m2 = [p.m2(xi[0]), p.m2(xi[1]), p.m2(xi[2]), p.m2(xi[3])];
    let alpha = C64::new(0.0, resonance_factored(xi));
    let m4 = m4_from(&m2);
    if resonant(xi, alpha.im) {
        return removable(xi, m4).map(|_| C64::new(0.0, 0.0));
    }
    Ok(-m4 / (C64::new(0.0, 1.0) * alpha))
}

fn resonant(xi: &[f64; 4], beta: f64) -> bool {
    let scale = xi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    beta.abs() <= 1e-9 * scale.powi(4)
}

fn removable(xi: &[f64; 4], m4: f64) -> Result<()> {
    if m4.abs() <= 1e-12 {
        Ok(())
    } else {
        Err(Error::ResonantSingularity(xi.to_vec()))
    }
}

/// Real σ₄ from precomputed m² values; the fast path for lattice sums.
#[inline]
fn sigma4_real(xi: &[f64; 4], m2: &[f64; 4]) -> Result<f64> {
    let m4 = m4_from(m2);
    if m4 == 0.0 {
        return Ok(0.0);
    }
    let beta = resonance_factored(xi);
    if resonant(xi, beta) {
        return removable(xi, m4).map(|_| 0.0);
    }
    Ok(m4 / beta)
}

/// M₆ = iσ₄(ξ₁, ξ₂, ξ₃, ξ₄+ξ₅+ξ₆).
pub fn symbol_m6(xi: &[f64; 6], p: &IMethodParams) -> Result<C64> {
    check_hyperplane(xi)?;
    let s = symbol_sigma4(&[xi[0], xi[1], xi[2], xi[3] + xi[4] + xi[5]], p)?;
    Ok(C64::new(0.0, 1.0) * s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultilinearResult {
    pub value: C64,
    /// Enumerated hyperplane tuples, (2K+1)^{n−1}.
    pub terms: u128,
}

fn term_count(n: usize, modes: &ModeSet) -> Result<u128> {
    let terms = (modes.len() as u128).pow(n as u32 - 1);
    if terms > TERM_BUDGET {
        return Err(Error::TermBudget {
            terms,
            limit: TERM_BUDGET,
        });
    }
    Ok(terms)
}

/// Slot coefficient tables: odd slots carry c(k), even slots conj(c(−k)), both indexed by k+K.
fn slot_tables(fields: &[&Spectrum], modes: &ModeSet) -> Vec<Vec<C64>> {
    let k = modes.cutoff as i64;
    fields
        .iter()
        .enumerate()
        .map(|(j, s)| {
            (-k..=k)
                .map(|q| if j % 2 == 0 { s.coeff(q) } else { s.coeff(-q).conj() })
                .collect()
        })
        .collect()
}

/// Direct sum of `Λₙ(M; u₁,…,uₙ)` over the truncated hyperplane.
pub fn lambda_n(
    symbol: &(dyn Fn(&[f64]) -> Result<C64> + Sync),
    fields: &[&Spectrum],
    modes: &ModeSet,
) -> Result<MultilinearResult> {
    let n = fields.len();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(invalid(format!("multilinear forms need an even number of slots, got {n}")));
    }
    let terms = term_count(n, modes)?;
    let tables = slot_tables(fields, modes);
    let k = modes.cutoff as i64;
    let w = modes.len();
    let dxi = modes.grid.dxi();
    let partials: Vec<C64> = (0..w)
        .into_par_iter()
        .map(|first| -> Result<C64> {
            let mut idx = vec![0usize; n - 1];
            idx[0] = first;
            let mut acc = C64::new(0.0, 0.0);
            let mut xi = vec![0.0; n];
            loop {
                let partial: i64 = idx.iter().map(|&i| i as i64 - k).sum();
                let last = -partial;
                if last.abs() <= k {
                    let mut prod = tables[n - 1][(last + k) as usize];
                    for (j, &i) in idx.iter().enumerate() {
                        prod *= tables[j][i];
                    }
                    if prod != C64::new(0.0, 0.0) {
                        for (j, &i) in idx.iter().enumerate() {
                            xi[j] = (i as i64 - k) as f64 * dxi;
                        }
                        xi[n - 1] = last as f64 * dxi;
                        acc += symbol(&xi)? * prod;
                    }
                }
                // Odometer over slots 2..n-1.
                let mut j = n - 2;
                loop {
                    if j == 0 {
                        return Ok(acc);
                    }
                    idx[j] += 1;
                    if idx[j] < w {
                        break;
                    }
                    idx[j] = 0;
                    j -= 1;
                }
            }
        })
        .collect::<Result<_>>()?;
    let value = partials.iter().sum::<C64>() * modes.grid.length();
    Ok(MultilinearResult { value, terms })
}

/// `Λₙ(M; u, ū, u, ū, …)`.
pub fn lambda_n_single(
    symbol: &(dyn Fn(&[f64]) -> Result<C64> + Sync),
    n: usize,
    u: &Spectrum,
    modes: &ModeSet,
) -> Result<MultilinearResult> {
    let fields: Vec<&Spectrum> = vec![u; n];
    lambda_n(symbol, &fields, modes)
}

/// Quadrilinear sum over k₁+k₂+k₃+k₄ = 0 with a real table-driven symbol, for a single state.
fn lambda4_table(
    c: &[C64],
    modes: &ModeSet,
    symbol: impl Fn([usize; 4]) -> Result<f64> + Sync,
) -> Result<C64> {
    let w = c.len();
    let k = modes.cutoff;
    let a = c;
    let b: Vec<C64> = (0..w).map(|i| c[w - 1 - i].conj()).collect();
    let partials: Vec<C64> = (0..w)
        .into_par_iter()
        .map(|i1| -> Result<C64> {
            let mut acc = C64::new(0.0, 0.0);
            if a[i1] == C64::new(0.0, 0.0) {
                return Ok(acc);
            }
            for i2 in 0..w {
                let ab = a[i1] * b[i2];
                let rest = 4 * k - i1 - i2;
                for i3 in rest.saturating_sub(w - 1)..=rest.min(w - 1) {
                    let i4 = rest - i3;
                    let sym = symbol([i1, i2, i3, i4])?;
                    if sym != 0.0 {
                        acc += sym * ab * a[i3] * b[i4];
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(partials.iter().sum::<C64>() * modes.grid.length())
}

struct ModeTables {
    xi: Vec<f64>,
    m2: Vec<f64>,
}

impl ModeTables {
    fn new(modes: &ModeSet, p: &IMethodParams, reach: usize) -> ModeTables {
        // Index i covers k = i - reach·K for grouped frequencies up to reach·K in magnitude.
        let k = (reach * modes.cutoff) as i64;
        let xi: Vec<f64> = (-k..=k).map(|q| q as f64 * modes.grid.dxi()).collect();
        let m2 = xi.iter().map(|&x| p.m2(x)).collect();
        ModeTables { xi, m2 }
    }
}

/// `Λ₄(ς σ₄; u)` for a state gathered on `modes` (coefficients c_{-K..=K}).
pub fn lambda4_sigma4(c: &[C64], modes: &ModeSet, p: &IMethodParams, sign: f64) -> Result<C64> {
    term_count(4, modes)?;
    let t = ModeTables::new(modes, p, 1);
    lambda4_table(c, modes, |i| {
        let xi = [t.xi[i[0]], t.xi[i[1]], t.xi[i[2]], t.xi[i[3]]];
        let m2 = [t.m2[i[0]], t.m2[i[1]], t.m2[i[2]], t.m2[i[3]]];
        Ok(sign * sigma4_real(&xi, &m2)?)
    })
}

/// `Λ₄(M₄; u)`.
pub fn lambda4_m4(c: &[C64], modes: &ModeSet, p: &IMethodParams) -> Result<C64> {
    term_count(4, modes)?;
    let t = ModeTables::new(modes, p, 1);
    lambda4_table(c, modes, |i| Ok(m4_from(&[t.m2[i[0]], t.m2[i[1]], t.m2[i[2]], t.m2[i[3]]])))
}

/// `Λ₆(M₆; u)` with the grouped frequency ξ₄+ξ₅+ξ₆ restricted to |k| ≤ K, which is the form
/// that appears in the derivative of E_I⁴ along the Galerkin truncation.
///
/// Grouping the last three slots, `Λ₆ = L Σ_{k₁,k₂,k₃} iσ₄(ξ₁,ξ₂,ξ₃,ξ_q) a(k₁)b(k₂)a(k₃) S(q)` with
/// `q = −(k₁+k₂+k₃)` and `S(q) = Σ_{k₄+k₅+k₆=q} b(k₄)a(k₅)b(k₆)`.
pub fn lambda6_m6(c: &[C64], modes: &ModeSet, p: &IMethodParams) -> Result<C64> {
    term_count(6, modes)?;
    let w = c.len();
    let k = modes.cutoff as i64;
    let t = ModeTables::new(modes, p, 1);
    let a = c;
    let b: Vec<C64> = (0..w).map(|i| c[w - 1 - i].conj()).collect();
    let mut grouped = vec![C64::new(0.0, 0.0); w];
    for i4 in 0..w {
        for i5 in 0..w {
            let ba = b[i4] * a[i5];
            for i6 in 0..w {
                let q = (i4 + i5 + i6) as i64 - 2 * k;
                if (0..w as i64).contains(&q) {
                    grouped[q as usize] += ba * b[i6];
                }
            }
        }
    }
    let partials: Vec<C64> = (0..w)
        .into_par_iter()
        .map(|i1| -> Result<C64> {
            let mut acc = C64::new(0.0, 0.0);
            for i2 in 0..w {
                let ab = a[i1] * b[i2];
                for i3 in 0..w {
                    let iq = (4 * k) - (i1 + i2 + i3) as i64;
                    if iq < 0 || iq >= w as i64 {
                        continue;
                    }
                    let iq = iq as usize;
                    let xi = [t.xi[i1], t.xi[i2], t.xi[i3], t.xi[iq]];
                    let m2 = [t.m2[i1], t.m2[i2], t.m2[i3], t.m2[iq]];
                    let s = sigma4_real(&xi, &m2)?;
                    if s != 0.0 {
                        acc += s * ab * a[i3] * grouped[iq];
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(C64::new(0.0, 1.0) * partials.iter().sum::<C64>() * modes.grid.length())
}

/// Symbol for [`lambda_n`] reproducing [`lambda6_m6`] term by term.
pub fn m6_truncated(p: &IMethodParams, modes: &ModeSet) -> impl Fn(&[f64]) -> Result<C64> + Sync {
    let p = *p;
    let reach = (modes.cutoff as f64 + 0.5) * modes.grid.dxi();
    move |xi: &[f64]| {
        let q = xi[3] + xi[4] + xi[5];
        if q.abs() > reach {
            return Ok(C64::new(0.0, 0.0));
        }
        symbol_m6(&[xi[0], xi[1], xi[2], xi[3], xi[4], xi[5]], &p)
    }
}

fn galerkin_energy2(c: &[C64], modes: &ModeSet, p: &IMethodParams) -> f64 {
    let freqs = modes.freqs();
    modes.grid.length()
        * c.iter()
            .zip(&freqs)
            .map(|(z, &xi)| p.m2(xi) * z.norm_sqr())
            .sum::<f64>()
}

/// Relative size of the imaginary part of Λ₄(ςσ₄) that energy4 tolerates.
pub const IMAG_TOL: f64 = 1e-10;

fn energy4_modes(c: &[C64], modes: &ModeSet, p: &IMethodParams, flow: Flow) -> Result<(f64, f64)> {
    let e2 = galerkin_energy2(c, modes, p);
    let corr = lambda4_sigma4(c, modes, p, flow.correction_sign())?;
    if corr.im.abs() > IMAG_TOL * corr.re.abs().max(e2) {
        return Err(Error::NumericDomain(format!(
            "correction term has imaginary part {:.3e}",
            corr.im
        )));
    }
    Ok((e2, e2 + corr.re))
}

/// E_I⁴ = E_I² + Re Λ₄(ςσ₄) for a state whose spectrum lies inside `modes`.
pub fn energy4(f: &Field, p: &IMethodParams, modes: &ModeSet, flow: Flow) -> Result<f64> {
    let sp = to_spectrum(f);
    let outside: f64 = sp
        .coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| sp.grid.k_of(*i).unsigned_abs() as usize > modes.cutoff)
        .map(|(_, c)| c.norm_sqr())
        .sum();
    let total: f64 = sp.coeffs.iter().map(|c| c.norm_sqr()).sum();
    if outside > 1e-10 * total {
        return Err(Error::Resolution(format!(
            "state carries {:.3e} of its mass outside |k| <= {}",
            outside / total.max(f64::MIN_POSITIVE),
            modes.cutoff
        )));
    }
    Ok(energy4_modes(&modes.gather(&sp), modes, p, flow)?.1)
}

/// One state of the derivative-identity check along the Galerkin flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeSample {
    pub e2: f64,
    pub e4: f64,
    /// Finite-difference dE_I²/dt.
    pub de2_fd: f64,
    /// iκΛ₄(M₄).
    pub de2_pred: f64,
    pub defect2: f64,
    /// Finite-difference dE_I⁴/dt.
    pub de4_fd: f64,
    /// Re Λ₆(M₆).
    pub re_lambda6: f64,
    /// Residual imaginary part of iκΛ₄(M₄) (zero in exact arithmetic).
    pub imag2: f64,
}

impl DerivativeSample {
    /// `de4_fd / ReΛ₆(M₆)`, the constant for this state.
    pub fn ratio(&self) -> f64 {
        self.de4_fd / self.re_lambda6
    }

    /// Relative defect of dE_I⁴/dt = c·ReΛ₆(M₆) for a given constant.
    pub fn defect4(&self, c: f64) -> f64 {
        relative_defect(self.de4_fd, c * self.re_lambda6, self.e4)
    }
}

// Relative to the larger of the two rates, or to the energy when both rates are negligible.
fn relative_defect(a: f64, b: f64, scale: f64) -> f64 {
    let r = a.abs().max(b.abs());
    if r < 1e-8 * scale.abs() {
        (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
    } else {
        (a - b).abs() / r
    }
}

/// Compare finite-difference derivatives of E_I² and E_I⁴ along the Galerkin flow with the
/// multilinear predictions. Uses the fourth-order central difference with step `h`.
pub fn derivative_identity_check(
    state: &Spectrum,
    p: &IMethodParams,
    cfg: &EvolutionConfig,
    modes: &ModeSet,
    h: f64,
) -> Result<DerivativeSample> {
    if modes.cutoff > 16 {
        return Err(invalid(format!("derivative check needs K <= 16, got {}", modes.cutoff)));
    }
    let sys = GalerkinSystem::new(modes, cfg);
    let flow = Flow::of(cfg);
    let c0 = modes.gather(state);
    let steps = [-2.0, -1.0, 1.0, 2.0];
    let mut e2s = [0.0; 4];
    let mut e4s = [0.0; 4];
    for (j, &s) in steps.iter().enumerate() {
        let c = sys.integrate(&c0, s * h, s.abs() as usize * 4);
        let (e2, e4) = energy4_modes(&c, modes, p, flow)?;
        e2s[j] = e2;
        e4s[j] = e4;
    }
    let fd = |e: &[f64; 4]| (e[0] - 8.0 * e[1] + 8.0 * e[2] - e[3]) / (12.0 * h);
    let (e2, e4) = energy4_modes(&c0, modes, p, flow)?;
    let l4 = lambda4_m4(&c0, modes, p)?;
    let pred = C64::new(0.0, cfg.kappa) * l4;
    let de2_fd = fd(&e2s);
    let re_lambda6 = lambda6_m6(&c0, modes, p)?.re;
    Ok(DerivativeSample {
        e2,
        e4,
        de2_fd,
        de2_pred: pred.re,
        defect2: relative_defect(de2_fd, pred.re, e2),
        de4_fd: fd(&e4s),
        re_lambda6,
        imag2: pred.im,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantFit {
    pub c: f64,
    /// max over states of |cᵢ − c|/|c| for the per-state ratios cᵢ.
    pub spread: f64,
    pub max_defect4: f64,
    pub ratios: Vec<f64>,
}

/// Least-squares constant in dE_I⁴/dt = c·ReΛ₆(M₆).
pub fn fit_derivative_constant(samples: &[DerivativeSample]) -> Result<ConstantFit> {
    let num: f64 = samples.iter().map(|s| s.de4_fd * s.re_lambda6).sum();
    let den: f64 = samples.iter().map(|s| s.re_lambda6 * s.re_lambda6).sum();
    if samples.is_empty() || den == 0.0 {
        return Err(Error::Fit("no state with a non-zero six-linear form".into()));
    }
    let c = num / den;
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio()).collect();
    let spread = ratios.iter().map(|r| ((r - c) / c).abs()).fold(0.0, f64::max);
    let max_defect4 = samples.iter().map(|s| s.defect4(c)).fold(0.0, f64::max);
    Ok(ConstantFit {
        c,
        spread,
        max_defect4,
        ratios,
    })
}

/// Random state on `modes` with coefficients of modulus ≤ `amplitude`, zero outside |k| ≤ K.
pub fn random_state(modes: &ModeSet, active: usize, amplitude: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Spectrum::zeros(&modes.grid);
    let k = modes.cutoff as i64;
    let mut chosen = Vec::new();
    while chosen.len() < active.min(modes.len()) {
        let q = rng.random_range(-k..=k);
        if !chosen.contains(&q) {
            chosen.push(q);
        }
    }
    chosen.sort_unstable();
    for q in chosen {
        let r = amplitude * rng.random_range(0.2..1.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        s.set(q, C64::from_polar(r, phase));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiplierBound {
    pub n: f64,
    /// max |σ₄| · Π(N+Nᵢ) / m²(min Nᵢ).
    pub constant: f64,
    pub samples: usize,
    pub worst: [f64; 4],
}

/// Sample |σ₄| against `m²(min Nᵢ)/Π(N+Nᵢ)` over random hyperplane tuples at scale N, with
/// a quarter of the samples placed near the resonant set ξ₁+ξ₂ = 0.
pub fn multiplier_bound(p: &IMethodParams, samples: usize, seed: u64) -> Result<MultiplierBound> {
    const CHUNK: usize = 4096;
    let n = p.n;
    let chunks = samples.div_ceil(CHUNK);
    let results: Vec<(f64, [f64; 4])> = (0..chunks)
        .into_par_iter()
        .map(|ci| -> Result<(f64, [f64; 4])> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64 * 0x51_7CC1_B727_220A));
            let count = CHUNK.min(samples - ci * CHUNK);
            let mut best = (0.0, [0.0; 4]);
            for j in 0..count {
                let draw = |rng: &mut ChaCha8Rng| {
                    let mag = n * 64f64.powf(rng.random_range(-1.0..1.0));
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                };
                let a = draw(&mut rng);
                let c = draw(&mut rng);
                let b = if j % 4 == 0 {
                    -a + a.abs() * 10f64.powf(rng.random_range(-6.0..-1.0))
                } else {
                    draw(&mut rng)
                };
                let xi = [a, b, c, -a - b - c];
                let s = symbol_sigma4(&xi, p)?.norm();
                let dy = xi.map(dyadic);
                let min_n = dy.iter().cloned().fold(f64::INFINITY, f64::min);
                let bound = p.m2(min_n) / dy.iter().map(|d| n + d).product::<f64>();
                let r = s / bound;
                if r > best.0 {
                    best = (r, xi);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (constant, worst) = results
        .into_iter()
        .fold((0.0, [0.0; 4]), |acc, r| if r.0 > acc.0 { r } else { acc });
    Ok(MultiplierBound {
        n,
        constant,
        samples,
        worst,
    })
}

/// Constants of ‖u‖_{H^s} ≤ A·‖Iu‖_{L²} and ‖Iu‖_{L²} ≤ B·N^{−s}‖u‖_{H^s}, i.e. the sup over modes of
/// ⟨ξ⟩^s/m(ξ) and m(ξ)N^s/⟨ξ⟩^s on the given grid.
pub fn norm_sandwich_constants(grid: &crate::spectral::Grid, p: &IMethodParams) -> (f64, f64) {
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    for i in 0..grid.modes() {
        let xi = grid.xi(i);
        let w = (1.0 + xi * xi).powf(p.s / 2.0);
        let m = p.m(xi);
        a = a.max(w / m);
        b = b.max(m * p.n.powf(p.s) / w);
    }
    (a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmostConservationRow {
    pub n: f64,
    pub e2_initial: f64,
    pub e4_initial: f64,
    /// sup_t |E_I⁴(t) − E_I⁴(0)|.
    pub increment4: f64,
    /// sup_t |E_I²(t) − E_I²(0)|.
    pub increment2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmostConservationReport {
    pub rows: Vec<AlmostConservationRow>,
    /// Largest fraction of ∫|u|² carried outside the mode window along the run.
    pub max_outside_fraction: f64,
    pub fit4: FitResult,
    pub fit2: FitResult,
    pub times: Vec<f64>,
}

/// Smallest increment that is distinguishable from round-off, relative to E_I².
pub const INCREMENT_FLOOR: f64 = 1e-13;

/// Evolve `u0` once with the full solver and, for every N in the sweep, track E_I² and E_I⁴ at
/// the record times (the flow does not depend on N, only the functionals do).
pub fn almost_conservation_experiment(
    u0: &Field,
    ns: &[f64],
    s: f64,
    interp: Interpolation,
    cfg: &EvolutionConfig,
    cutoff: usize,
) -> Result<AlmostConservationReport> {
    if ns.len() < 5 {
        return Err(invalid("almost-conservation sweep needs at least 5 values of N"));
    }
    let params: Vec<IMethodParams> = ns
        .iter()
        .map(|&n| IMethodParams::new(n, s).map(|p| p.with_interp(interp)))
        .collect::<Result<_>>()?;
    let modes = ModeSet::new(&u0.grid, cutoff)?;
    let flow = Flow::of(cfg);
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); ns.len()];
    let mut times = Vec::new();
    let mut failure: Option<Error> = None;
    let mut outside = 0.0f64;
    evolve_with(u0, cfg, |t, f| {
        if failure.is_some() {
            return;
        }
        times.push(t);
        let sp = to_spectrum(f);
        let c = modes.gather(&sp);
        let inside: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        let total: f64 = sp.coeffs.iter().map(|z| z.norm_sqr()).sum();
        outside = outside.max(1.0 - inside / total);
        for (j, p) in params.iter().enumerate() {
            match energy4_modes(&c, &modes, p, flow) {
                Ok(v) => series[j].push(v),
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let rows: Vec<AlmostConservationRow> = ns
        .iter()
        .zip(&series)
        .map(|(&n, ser)| {
            let (e20, e40) = ser[0];
            AlmostConservationRow {
                n,
                e2_initial: e20,
                e4_initial: e40,
                increment4: ser.iter().map(|v| (v.1 - e40).abs()).fold(0.0, f64::max),
                increment2: ser.iter().map(|v| (v.0 - e20).abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    for r in &rows {
        if r.increment4 <= INCREMENT_FLOOR * r.e2_initial || r.increment2 <= INCREMENT_FLOOR * r.e2_initial {
            return Err(Error::Inconclusive(format!(
                "increments at N = {} are at the round-off floor; use larger or rougher data",
                r.n
            )));
        }
    }
    let fit4 = fit_loglog(&rows.iter().map(|r| (r.n, r.increment4)).collect::<Vec<_>>())?;
    let fit2 = fit_loglog(&rows.iter().map(|r| (r.n, r.increment2)).collect::<Vec<_>>())?;
    Ok(AlmostConservationReport {
        rows,
        max_outside_fraction: outside,
        fit4,
        fit2,
        times,
    })
}

/// A resolved configuration for the almost-conservation sweep.
///
/// The time step has to resolve the quartic resonance frequencies |α₄| ≲ 16ξ⁴ of the datum's
/// band, and the mode window has to hold the cubic products of that band; otherwise the
/// increments of E_I⁴ are dominated by discretization error at quartic order in the amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct AlmostConservationSetup {
    pub length: f64,
    pub modes: usize,
    pub cutoff: usize,
    pub amplitude: f64,
    pub width: f64,
    pub decay: f64,
    pub kmax: f64,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub seed: u64,
    pub ns: Vec<f64>,
    pub s: f64,
    pub interp: Interpolation,
}

impl Default for AlmostConservationSetup {
    fn default() -> Self {
        AlmostConservationSetup {
            length: std::f64::consts::PI,
            modes: 512,
            cutoff: 127,
            amplitude: 2.0,
            width: 0.25,
            decay: 0.75,
            kmax: 80.0,
            dt: 6e-9,
            t_end: 1e-4,
            stride: 800,
            seed: 7,
            ns: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            s: -0.5,
            interp: Interpolation::LogCubic,
        }
    }
}

impl AlmostConservationSetup {
    pub fn datum(&self) -> Result<Field> {
        let grid = crate::spectral::Grid::new(self.length, self.modes)?;
        rough_datum(&grid, self.amplitude, self.width, self.decay, self.kmax, self.seed)
    }

    pub fn config(&self) -> EvolutionConfig {
        EvolutionConfig::quartic(1.0, self.dt, self.t_end)
            .with_scheme(crate::evolution::Scheme::Ifrk4)
            .with_stride(self.stride)
    }

    pub fn run(&self) -> Result<AlmostConservationReport> {
        almost_conservation_experiment(&self.datum()?, &self.ns, self.s, self.interp, &self.config(), self.cutoff)
    }
}

/// Localized rough datum: a Gaussian envelope of width `width` times a random-phase series with
/// |c_k| ∝ (1+|ξ_k|)^{−decay} for 1 ≤ |ξ_k| ≤ `kmax`, scaled to mass `amplitude²`.
pub fn rough_datum(
    grid: &crate::spectral::Grid,
    amplitude: f64,
    width: f64,
    decay: f64,
    kmax: f64,
    seed: u64,
) -> Result<Field> {
    if kmax >= 0.5 * grid.nyquist() {
        return Err(Error::Resolution(format!(
            "kmax = {kmax} leaves no spectral margin on a grid with Nyquist {}",
            grid.nyquist()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sp = Spectrum::zeros(grid);
    for i in 0..grid.modes() {
        let xi = grid.xi(i);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        if xi.abs() <= kmax {
            let taper = crate::spectral::lp_bump(2.0 * xi.abs() / kmax);
            sp.coeffs[i] = C64::from_polar(taper * (1.0 + xi.abs()).powf(-decay), phase);
        }
    }
    let series = to_physical(&sp);
    let env = Field::from_fn(grid, |x| C64::new((-(x / width).powi(2)).exp(), 0.0));
    let mut f = Field {
        grid: grid.clone(),
        samples: series.samples.iter().zip(&env.samples).map(|(a, b)| a * b).collect(),
    };
    let m = f.quadrature_mass();
    if m == 0.0 {
        return Err(invalid("rough datum has zero mass"));
    }
    f = f.scale(C64::new(amplitude / m.sqrt(), 0.0));
    Ok(f)
}

/// Exact exponents of the global argument as powers of N:
/// `λ ∼ N^{lambda}`, `T ∼ N^{time}`, and `‖u(t)‖_{H^s} ≲ t^{growth}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GwpExponents {
    pub lambda: Rational64,
    pub time: Rational64,
    pub growth: Rational64,
}

/// From `λ^{−3/2−s}N^{−s}‖u₀‖ = ε₀` (λ ∼ N^{−2s/(3+2s)}) and `N³ = λ⁴T` (T ∼ N^{(14s+9)/(3+2s)}),
/// the growth `‖u(T)‖ ≲ N^{−s} ∼ T^{γ}` with γ = −s(3+2s)/(14s+9).
pub fn gwp_exponents(s: Rational64) -> Result<GwpExponents> {
    let zero = Rational64::from_integer(0);
    let three = Rational64::from_integer(3);
    let two = Rational64::from_integer(2);
    let denom = three + two * s;
    let time_num = Rational64::from_integer(14) * s + Rational64::from_integer(9);
    if s > zero || denom <= zero {
        return Err(invalid(format!("regularity must satisfy -3/2 < s <= 0, got {s}")));
    }
    if time_num <= zero {
        return Err(invalid(format!(
            "14s + 9 = {time_num} is not positive: the iteration time does not grow with N"
        )));
    }
    Ok(GwpExponents {
        lambda: -two * s / denom,
        time: time_num / denom,
        growth: -s * denom / time_num,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GwpParameters {
    pub lambda: f64,
    pub n: f64,
    pub growth: f64,
}

/// Numeric λ and N solving both relations for a target time T.
pub fn gwp_parameters(s: f64, t: f64, norm: f64, eps0: f64) -> Result<GwpParameters> {
    if !(t.is_finite() && t > 0.0 && norm > 0.0 && eps0 > 0.0) {
        return Err(invalid("T, the data norm and eps0 must be positive"));
    }
    if !(s > -1.5 && s <= 0.0) || 14.0 * s + 9.0 <= 0.0 {
        return Err(invalid(format!("regularity {s} outside (-9/14, 0]")));
    }
    let d = 3.0 + 2.0 * s;
    let r = (norm / eps0).powf(2.0 / d);
    let n = (r.powi(4) * t).powf(d / (9.0 + 14.0 * s));
    let lambda = r * n.powf(-2.0 * s / d);
    if !(n.is_finite() && lambda.is_finite()) {
        return Err(Error::NumericDomain(format!("parameters overflow at s = {s}")));
    }
    Ok(GwpParameters {
        lambda,
        n,
        growth: -s * d / (14.0 * s + 9.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid, Weight};
    use std::f64::consts::PI;

    fn p(n: f64) -> IMethodParams {
        IMethodParams::new(n, -0.5).unwrap()
    }

    #[test]
    fn multiplier_values() {
        let q = p(4.0);
        assert_eq!(q.m(0.0), 1.0);
        assert!((q.m(16.0) - 0.5).abs() < 1e-15);
        assert!(IMethodParams::new(4.0, 0.1).is_err());
        for interp in [Interpolation::LogCubic, Interpolation::Smooth] {
            let q = q.with_interp(interp);
            let mut prev = 1.0;
            for j in 0..10_000 {
                let v = q.m(j as f64 * 0.002);
                assert!(v <= prev + 1e-15 && v > 0.0 && v <= 1.0);
                prev = v;
            }
        }
    }

    #[test]
    fn log_cubic_is_c1() {
        let q = p(3.0);
        let h = 1e-6;
        for x in [3.0, 6.0] {
            let left = (q.m(x) - q.m(x - h)) / h;
            let right = (q.m(x + h) - q.m(x)) / h;
            assert!((left - right).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn energy2_examples() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let e = Field::from_fn(&g, |x| C64::from_polar(1.0, 12.0 * x));
        assert!((energy2(&e, &p(2.0)) - 2.0 / 12.0 * 2.0 * PI).abs() < 1e-12);
        let big = p(1e6);
        assert!((energy2(&e, &big) - e.quadrature_mass()).abs() < 1e-12);
        let twice = apply_i(&apply_i(&e, &p(2.0)), &p(2.0));
        let sq = crate::spectral::apply_symbol_field(
            &e,
            &SymbolFn::real("m2", move |xi| p(2.0).m2(xi)),
        )
        .unwrap();
        assert!(twice.sub(&sq).max_abs() < 1e-14);
        let _ = Weight::Inhomogeneous;
    }

    #[test]
    fn symbols() {
        let q = p(4.0);
        assert_eq!(symbol_alpha4(&[1.0, 1.0, 0.0, -2.0]).unwrap(), C64::new(0.0, -16.0));
        assert_eq!(symbol_sigma4(&[3.0, 3.0, -3.0, -3.0], &q).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(symbol_sigma4(&[1.0, 0.5, -2.0, 0.5], &q).unwrap(), C64::new(0.0, 0.0));
        assert!(symbol_m4(&[1.0, 1.0, 1.0, 0.0], &q).is_err());
        let s = symbol_sigma4(&[10.0, 3.0, -20.0, 7.0], &q).unwrap();
        assert!(s.im.abs() <= 1e-12 * s.norm());
        assert!(symbol_m6(&[0.1, 0.2, -0.1, 0.05, -0.2, -0.05], &p(8.0)).unwrap() == C64::new(0.0, 0.0));
    }

    #[test]
    fn gwp_at_minus_half() {
        let e = gwp_exponents(Rational64::new(-1, 2)).unwrap();
        assert_eq!(e.lambda, Rational64::new(1, 2));
        assert_eq!(e.time, Rational64::from_integer(1));
        assert_eq!(e.growth, Rational64::new(1, 2));
        let z = gwp_exponents(Rational64::from_integer(0)).unwrap();
        assert_eq!(z.lambda, Rational64::from_integer(0));
        assert_eq!(z.growth, Rational64::from_integer(0));
        assert!(gwp_exponents(Rational64::new(-3, 2)).is_err());
        assert!(gwp_exponents(Rational64::new(-2, 3)).is_err());
        assert!(gwp_exponents(Rational64::new(1, 2)).is_err());
        let g = gwp_parameters(-0.5, 1e4, 2.0, 1.0).unwrap();
        assert!((g.growth - 0.5).abs() < 1e-15);
        assert!(gwp_parameters(-1.49, 1.0, 1.0, 1.0).is_err());
    }

    fn small_state(k: usize, seed: u64) -> (ModeSet, Spectrum) {
        let g = Grid::new(4.0 * PI, 64).unwrap();
        let modes = ModeSet::new(&g, k).unwrap();
        let st = random_state(&modes, 2 * k + 1, 0.3, seed);
        (modes, st)
    }

    #[test]
    fn lambda_calibration() {
        let g = Grid::new(2.0 * PI, 32).unwrap();
        let modes = ModeSet::new(&g, 6).unwrap();
        let a = C64::new(0.7, -0.4);
        let e = Field::from_fn(&g, |x| a * C64::from_polar(1.0, 3.0 * x));
        let sp = to_spectrum(&e);
        let one = |_: &[f64]| Ok(C64::new(1.0, 0.0));
        let r = lambda_n_single(&one, 4, &sp, &modes).unwrap();
        assert!((r.value.re - a.norm_sqr().powi(2) * 2.0 * PI).abs() < 1e-12);
        assert_eq!(r.terms, 13u128.pow(3));

        let (modes, st) = small_state(5, 3);
        let u = to_physical(&st);
        let r = lambda_n_single(&one, 4, &st, &modes).unwrap();
        let q = crate::evolution::quartic_integral(&u);
        assert!((r.value.re - q).abs() < 1e-12 * q && r.value.im.abs() < 1e-12 * q);
        let pp = p(1.0);
        let mm = move |xi: &[f64]| Ok(C64::new(pp.m(xi[0]) * pp.m(xi[1]), 0.0));
        let l2 = lambda_n_single(&mm, 2, &st, &modes).unwrap();
        assert!((l2.value.re - energy2(&u, &pp)).abs() < 1e-12 * l2.value.re);
        assert!(lambda_n_single(&one, 3, &st, &modes).is_err());
    }

    #[test]
    fn fast_kernels_match_direct_sums() {
        let (modes, st) = small_state(5, 11);
        let c = modes.gather(&st);
        let q = p(1.2);
        let s4 = move |xi: &[f64]| symbol_sigma4(&[xi[0], xi[1], xi[2], xi[3]], &q);
        let direct = lambda_n_single(&s4, 4, &st, &modes).unwrap().value;
        let fast = lambda4_sigma4(&c, &modes, &q, 1.0).unwrap();
        assert!((direct - fast).norm() < 1e-12 * direct.norm(), "{direct} {fast}");
        let m4 = move |xi: &[f64]| symbol_m4(&[xi[0], xi[1], xi[2], xi[3]], &q).map(|v| C64::new(v, 0.0));
        let direct = lambda_n_single(&m4, 4, &st, &modes).unwrap().value;
        let fast = lambda4_m4(&c, &modes, &q).unwrap();
        assert!((direct - fast).norm() < 1e-12 * direct.norm());
        let m6 = m6_truncated(&q, &modes);
        let direct = lambda_n_single(&m6, 6, &st, &modes).unwrap().value;
        let fast = lambda6_m6(&c, &modes, &q).unwrap();
        assert!((direct - fast).norm() < 1e-11 * direct.norm(), "{direct} {fast}");
    }

    #[test]
    fn energy4_low_modes_and_reality() {
        let (modes, st) = small_state(5, 5);
        let u = to_physical(&st);
        let high = p(10.0);
        assert_eq!(energy4(&u, &high, &modes, Flow::default()).unwrap(), energy2(&u, &high));
        let e = energy4(&u, &p(1.0), &modes, Flow::default()).unwrap();
        assert!(e.is_finite());
        let wide = Field::from_fn(&u.grid, |x| C64::from_polar(1.0, 10.0 * x));
        assert!(matches!(energy4(&wide, &p(1.0), &modes, Flow::default()), Err(Error::Resolution(_))));
    }

    #[test]
    fn derivative_identities_on_galerkin_oracle() {
        let q = p(1.0);
        let mut samples = Vec::new();
        for seed in 0..4 {
            let (modes, st) = small_state(8, 100 + seed);
            let cfg = EvolutionConfig::quartic(1.0, 1e-3, 1.0);
            let d = derivative_identity_check(&st, &q, &cfg, &modes, 1e-5).unwrap();
            assert!(d.defect2 < 1e-6, "{d:?}");
            samples.push(d);
        }
        let fit = fit_derivative_constant(&samples).unwrap();
        assert!((fit.c - 4.0).abs() < 1e-3, "{fit:?}");
        assert!(fit.spread < 1e-3, "{fit:?}");
    }
}
