//! Quartic resonance algebra on the hyperplane ξ₁+ξ₂+ξ₃+ξ₄ = 0, mean-value bounds for m²,
//! and the trilinear counterexample.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, FitResult};
use crate::imethod::IMethodParams;
use crate::quadrature::gauss_legendre;
use crate::spectral::{bracket, Grid, C64};

/// Relative tolerance for membership in the hyperplane.
pub const HYPERPLANE_TOL: f64 = 1e-9;

pub fn check_hyperplane(xi: &[f64]) -> Result<()> {
    let sum: f64 = xi.iter().sum();
    let scale = xi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sum.abs() > HYPERPLANE_TOL * scale.max(f64::MIN_POSITIVE) && sum != 0.0 {
        return Err(Error::OffHyperplane(xi.to_vec()));
    }
    Ok(())
}

/// Dyadic magnitude 2^⌊log₂ max(|ξ|, 1)⌋.
pub fn dyadic(xi: f64) -> f64 {
    let a = xi.abs().max(1.0);
    2f64.powi(a.log2().floor() as i32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperplaneSample {
    pub xi: [f64; 4],
    pub dyadic: [f64; 4],
}

impl HyperplaneSample {
    pub fn new(xi: [f64; 4]) -> Result<HyperplaneSample> {
        check_hyperplane(&xi)?;
        Ok(HyperplaneSample {
            xi,
            dyadic: xi.map(dyadic),
        })
    }

    /// ξ₁, ξ₂, ξ₃ free and ξ₄ = −ξ₁−ξ₂−ξ₃.
    pub fn from_three(a: f64, b: f64, c: f64) -> HyperplaneSample {
        let xi = [a, b, c, -a - b - c];
        HyperplaneSample {
            xi,
            dyadic: xi.map(dyadic),
        }
    }
}

/// ξ₁⁴ − ξ₂⁴ + ξ₃⁴ − ξ₄⁴.
pub fn resonance_lhs(xi: &[f64; 4]) -> f64 {
    let p = |x: f64| (x * x) * (x * x);
    p(xi[0]) - p(xi[1]) + p(xi[2]) - p(xi[3])
}

/// (ξ₁+ξ₂)(ξ₁+ξ₄)(ξ₁²+ξ₂²+ξ₃²+ξ₄²+2(ξ₁+ξ₃)²), equal to [`resonance_lhs`] on the hyperplane.
pub fn resonance_factored(xi: &[f64; 4]) -> f64 {
    let [a, b, c, d] = *xi;
    (a + b) * (a + d) * (a * a + b * b + c * c + d * d + 2.0 * (a + c) * (a + c))
}

/// |(ξ₁+ξ₂)(ξ₂+ξ₃)(ξ₁²+ξ₂²+ξ₃²+(ξ₁+ξ₂+ξ₃)²+2(ξ₁+ξ₃)²)|; matches |LHS| but not its sign.
pub fn resonance_factored_abs(xi: &[f64; 4]) -> f64 {
    let [a, b, c, _] = *xi;
    let s = a + b + c;
    ((a + b) * (b + c) * (a * a + b * b + c * c + s * s + 2.0 * (a + c) * (a + c))).abs()
}

pub fn factorization_residual(xi: &[f64; 4]) -> Result<f64> {
    check_hyperplane(xi)?;
    Ok((resonance_lhs(xi) - resonance_factored(xi)).abs())
}

/// Exact multivariate polynomial with integer coefficients in the variables (ξ₁, ξ₂, ξ₃).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly(BTreeMap<[u32; 3], i128>);

impl Poly {
    pub fn constant(c: i128) -> Poly {
        let mut m = BTreeMap::new();
        if c != 0 {
            m.insert([0, 0, 0], c);
        }
        Poly(m)
    }

    pub fn var(i: usize) -> Poly {
        let mut e = [0; 3];
        e[i] = 1;
        Poly(BTreeMap::from([(e, 1)]))
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut m = self.0.clone();
        for (e, c) in &o.0 {
            let v = m.entry(*e).or_insert(0);
            *v += c;
            if *v == 0 {
                m.remove(e);
            }
        }
        Poly(m)
    }

    pub fn scale(&self, k: i128) -> Poly {
        if k == 0 {
            return Poly::default();
        }
        Poly(self.0.iter().map(|(e, c)| (*e, c * k)).collect())
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1))
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::default();
        for (e1, c1) in &self.0 {
            for (e2, c2) in &o.0 {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]];
                out = out.add(&Poly(BTreeMap::from([(e, c1 * c2)])));
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Poly {
        (0..n).fold(Poly::constant(1), |acc, _| acc.mul(self))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 3], &i128)> {
        self.0.iter()
    }

    pub fn eval_i128(&self, x: [i128; 3]) -> i128 {
        self.0
            .iter()
            .map(|(e, c)| c * x[0].pow(e[0]) * x[1].pow(e[1]) * x[2].pow(e[2]))
            .sum()
    }
}

fn hyperplane_vars() -> [Poly; 4] {
    let (a, b, c) = (Poly::var(0), Poly::var(1), Poly::var(2));
    let d = Poly::default().sub(&a).sub(&b).sub(&c);
    [a, b, c, d]
}

/// LHS − signed factored RHS as an exact polynomial after eliminating ξ₄; identically zero.
pub fn symbolic_signed_residual() -> Poly {
    let [a, b, c, d] = hyperplane_vars();
    let lhs = a.pow(4).sub(&b.pow(4)).add(&c.pow(4)).sub(&d.pow(4));
    let sq = a
        .pow(2)
        .add(&b.pow(2))
        .add(&c.pow(2))
        .add(&d.pow(2))
        .add(&a.add(&c).pow(2).scale(2));
    let rhs = a.add(&b).mul(&a.add(&d)).mul(&sq);
    lhs.sub(&rhs)
}

/// LHS + (ξ₁+ξ₂)(ξ₂+ξ₃)(…) as an exact polynomial: the (ξ₂+ξ₃) pairing carries the opposite sign.
pub fn symbolic_abs_form_residual() -> Poly {
    let [a, b, c, d] = hyperplane_vars();
    let lhs = a.pow(4).sub(&b.pow(4)).add(&c.pow(4)).sub(&d.pow(4));
    let s = a.add(&b).add(&c);
    let sq = a
        .pow(2)
        .add(&b.pow(2))
        .add(&c.pow(2))
        .add(&s.pow(2))
        .add(&a.add(&c).pow(2).scale(2));
    lhs.add(&a.add(&b).mul(&b.add(&c)).mul(&sq))
}

/// Maximum of |LHS − RHS| / max|ξ|⁴ over `samples` random hyperplane tuples.
pub fn random_residual_sweep(samples: usize, seed: u64) -> f64 {
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ci as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = CHUNK.min(samples - ci * CHUNK);
            let mut worst = 0.0f64;
            for _ in 0..n {
                let scale = 10f64.powf(rng.random_range(-3.0..3.0));
                let t = HyperplaneSample::from_three(
                    scale * rng.random_range(-1.0..1.0),
                    scale * rng.random_range(-1.0..1.0),
                    scale * rng.random_range(-1.0..1.0),
                );
                let m = t.xi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                let r = (resonance_lhs(&t.xi) - resonance_factored(&t.xi)).abs() / m.powi(4);
                worst = worst.max(r);
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Which part of the multiplier the mean-value samples probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// |ξ| well below N, where m² ≡ 1.
    Constant,
    /// |ξ| above 2N, where m² = (|ξ|/N)^{2s}.
    Power,
    /// |ξ| straddling the interpolation window [N, 2N].
    Junction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanValueReport {
    /// max |a(ξ+η)−a(ξ)|·|ξ| / (|η|·a(ξ)).
    pub first: f64,
    /// max |a(ξ+η+λ)−a(ξ+η)−a(ξ+λ)+a(ξ)|·|ξ|² / (|η||λ|·a(ξ)).
    pub second: f64,
    pub samples: usize,
}

/// Sample both mean-value quotients of `a = m²` with |η|, |λ| ≤ `max_ratio`·|ξ|.
pub fn mean_value_bound_check(
    p: &IMethodParams,
    region: Region,
    samples: usize,
    max_ratio: f64,
    seed: u64,
) -> Result<MeanValueReport> {
    if !(max_ratio > 0.0 && max_ratio <= 0.125) {
        return Err(invalid(format!("shift ratio must lie in (0, 1/8], got {max_ratio}")));
    }
    let n = p.n;
    let (lo, hi) = match region {
        Region::Constant => (0.05 * n, 0.5 * n),
        Region::Power => (4.0 * n, 64.0 * n),
        Region::Junction => (0.7 * n, 2.6 * n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = |x: f64| p.m2(x);
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for _ in 0..samples {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let xi = sign * (lo * (hi / lo).powf(rng.random_range(0.0..1.0)));
        let shift = |rng: &mut ChaCha8Rng| {
            let m = max_ratio * xi.abs() * rng.random_range(1e-3..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let eta = shift(&mut rng);
        let lam = shift(&mut rng);
        let base = a(xi);
        let d1 = (a(xi + eta) - base).abs() * xi.abs() / (eta.abs() * base);
        let d2 = (a(xi + eta + lam) - a(xi + eta) - a(xi + lam) + base).abs() * xi * xi
            / (eta.abs() * lam.abs() * base);
        first = first.max(d1);
        second = second.max(d2);
    }
    Ok(MeanValueReport {
        first,
        second,
        samples,
    })
}

/// Analytic values of both quotients in the power region as the shift ratio tends to zero:
/// for a = |ξ|^{2s}, |a′|·|ξ|/a = 2|s| and |a″|·|ξ|²/a = 2|s|(2|s|+1).
pub fn power_region_constants(s: f64) -> (f64, f64) {
    let q = 2.0 * s.abs();
    (q, q * (q + 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrilinearRow {
    pub n: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrilinearReport {
    pub s: f64,
    pub rows: Vec<TrilinearRow>,
    pub fit: FitResult,
    /// Predicted exponent −2s−1.
    pub predicted: f64,
    /// Largest relative change of the ratio when the band is refined to twice the modes.
    pub refinement_defect: f64,
}

/// Options for the band discretization of the counterexample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrilinearOptions {
    /// Fourier modes across the band [N, N + 1/N].
    pub band_modes: usize,
    /// Gauss–Legendre nodes on the time window [−1, 1].
    pub time_nodes: usize,
}

impl Default for TrilinearOptions {
    fn default() -> Self {
        TrilinearOptions {
            band_modes: 64,
            time_nodes: 24,
        }
    }
}

/// (left, right) for one frequency N.
///
/// The datum has û = 1 on A = [N, N + 1/N] and evolves freely for |t| ≤ 1, which keeps its
/// space-time Fourier support inside a unit-width strip around the dispersion curve. In the frame
/// moving with the group velocity and with the carrier removed, the solution is
/// `U(t,y) = ∫₀^{1/N} e^{iηy + itψ(η)} dη` with `ψ(η) = (N+η)⁴ − N⁴ − 4N³η`, sampled by `J`
/// midpoint modes of spacing `1/(NJ)`, which is exactly a Fourier series on a box of length 2πNJ.
/// Left is `(∫‖⟨ξ⟩^s (|u|²u)‖²_{L²} dt)^{1/2}`, right is the product of the three factors
/// `(∫‖⟨ξ⟩^s u‖²_{L²} dt)^{1/2}`; the modulation weights equal one on the strip.
pub fn trilinear_norms(n: f64, s: f64, opts: TrilinearOptions) -> Result<(f64, f64)> {
    let j = opts.band_modes;
    if n < 1.0 || j < 4 {
        return Err(Error::Resolution(format!("band [N, N+1/N] unresolved for N = {n}, J = {j}")));
    }
    let modes = (8 * j).next_power_of_two();
    let length = 2.0 * std::f64::consts::PI * n * j as f64;
    let grid = Grid::new(length, modes)?;
    let d = 1.0 / (n * j as f64);
    // Midpoint modes sit d/2 off the lattice; storing them on the lattice multiplies U by the
    // unimodular factor e^{-iyd/2}, which |U|²U inherits once.
    let etas: Vec<f64> = (0..j).map(|k| (k as f64 + 0.5) * d).collect();
    let psi = |eta: f64| eta * eta * (6.0 * n * n + 4.0 * n * eta + eta * eta);
    let weight = |eta: f64| bracket(n + eta).powf(2.0 * s);

    let rule = gauss_legendre(opts.time_nodes);
    let mut left2 = 0.0;
    let mut right2 = 0.0;
    for &(tau, w) in &rule {
        let mut spec = crate::spectral::Spectrum::zeros(&grid);
        for (k, &eta) in etas.iter().enumerate() {
            spec.set(k as i64, C64::from_polar(d, tau * psi(eta)));
        }
        let lin: f64 = etas
            .iter()
            .map(|&eta| weight(eta) * d * d)
            .sum::<f64>()
            * length;
        right2 += w * lin;
        let u = crate::spectral::to_physical(&spec);
        let cube = crate::spectral::Field {
            grid: grid.clone(),
            samples: u.samples.iter().map(|z| z.norm_sqr() * z).collect(),
        };
        let cs = crate::spectral::to_spectrum(&cube);
        // Lattice mode k of the cube sits at frequency k·d + d/2.
        let nl: f64 = cs
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| weight(grid.k_of(i) as f64 * d + 0.5 * d) * c.norm_sqr())
            .sum::<f64>()
            * length;
        left2 += w * nl;
    }
    Ok((left2.sqrt(), right2.sqrt().powi(3)))
}

pub fn trilinear_counterexample(s: f64, ns: &[f64], opts: TrilinearOptions) -> Result<TrilinearReport> {
    if ns.len() < 4 {
        return Err(invalid("trilinear sweep needs at least 4 values of N"));
    }
    let rows: Vec<TrilinearRow> = ns
        .par_iter()
        .map(|&n| {
            let (lhs, rhs) = trilinear_norms(n, s, opts)?;
            Ok(TrilinearRow {
                n,
                lhs,
                rhs,
                ratio: lhs / rhs,
            })
        })
        .collect::<Result<_>>()?;
    let fit = fit_loglog(&rows.iter().map(|r| (r.n, r.ratio)).collect::<Vec<_>>())?;
    let fine = TrilinearOptions {
        band_modes: 2 * opts.band_modes,
        ..opts
    };
    let mut refinement_defect = 0.0f64;
    for r in &rows {
        let (l, rr) = trilinear_norms(r.n, s, fine)?;
        refinement_defect = refinement_defect.max(((l / rr) / r.ratio - 1.0).abs());
    }
    Ok(TrilinearReport {
        s,
        rows,
        fit,
        predicted: -2.0 * s - 1.0,
        refinement_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let xi = [1.0, 2.0, 3.0, -6.0];
        assert_eq!(resonance_lhs(&xi), -1230.0);
        assert_eq!(resonance_factored(&xi), -1230.0);
        assert_eq!(factorization_residual(&xi).unwrap(), 0.0);
        assert_eq!(resonance_factored_abs(&xi), 1230.0);
    }

    #[test]
    fn paired_tuples_vanish() {
        let xi = [2.5, -2.5, 1.0, -1.0];
        assert_eq!(resonance_lhs(&xi), 0.0);
        assert_eq!(resonance_factored(&xi), 0.0);
    }

    #[test]
    fn abs_pairing_has_opposite_sign() {
        let xi = [1.0, 1.0, 0.0, -2.0];
        let signed_alt = {
            let [a, b, c, _] = xi;
            let s: f64 = a + b + c;
            (a + b) * (b + c) * (a * a + b * b + c * c + s * s + 2.0 * (a + c) * (a + c))
        };
        assert_eq!(resonance_lhs(&xi), -16.0);
        assert_eq!(signed_alt, -resonance_lhs(&xi));
        assert_eq!(resonance_factored_abs(&xi), resonance_lhs(&xi).abs());
    }

    #[test]
    fn off_hyperplane_rejected() {
        assert!(matches!(
            factorization_residual(&[1.0, 1.0, 1.0, 1.0]),
            Err(Error::OffHyperplane(_))
        ));
    }

    #[test]
    fn polynomial_arithmetic() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let p = x.add(&y).pow(2);
        assert_eq!(p.eval_i128([3, 4, 0]), 49);
        assert!(p.sub(&p).is_zero());
        assert_eq!(p.terms().count(), 3);
    }

    #[test]
    fn dyadic_magnitudes() {
        assert_eq!(dyadic(0.3), 1.0);
        assert_eq!(dyadic(-5.0), 4.0);
        assert_eq!(dyadic(64.0), 64.0);
    }
}
