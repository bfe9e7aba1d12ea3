//! Dispersive estimates for `e^{it∂ₓ⁴}`: the oscillatory kernel, L∞ decay, Strichartz
//! admissibility, bilinear refinement and local smoothing.
//!
//! Free evolutions here use the multiplier `e^{itξ⁴}` (orientation +1).

use std::f64::consts::PI;

use num_rational::Rational64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, FitResult};
use crate::quadrature::{gauss_legendre, mapped};
use crate::spectral::{make_gaussian, Field, Grid, C64};

const PANEL_NODES: usize = 20;
const TAIL_ANGLE: f64 = PI / 6.0;

/// Kernel of `D^α e^{it∂ₓ⁴}`: `K_t(x) = (1/2π)∫|ξ|^α e^{itξ⁴+ixξ} dξ`.
///
/// The half-line integral is taken along the real axis up to a radius R beyond the stationary
/// point and then along the ray `R + ρe^{iπ/6}`, where `e^{itξ⁴}` decays faster than `e^{±ixξ}`
/// grows. Panels are doubled until successive values agree to `tol`.
pub fn kernel(t: f64, x: f64, alpha: f64) -> Result<C64> {
    kernel_tol(t, x, alpha, 1e-11)
}

pub fn kernel_tol(t: f64, x: f64, alpha: f64, tol: f64) -> Result<C64> {
    if t == 0.0 || !t.is_finite() || !x.is_finite() {
        return Err(invalid(format!("kernel needs finite t != 0, got t = {t}, x = {x}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("kernel exponent must lie in [0, 1], got {alpha}")));
    }
    if t < 0.0 {
        return kernel_tol(-t, x, alpha, tol).map(|z| z.conj());
    }
    let r = (2.0 * (x.abs() / (4.0 * t)).cbrt()).max(2.0 * t.powf(-0.25));
    let f = |xi: C64| -> C64 {
        let p = if alpha == 0.0 { C64::new(1.0, 0.0) } else { xi.powf(alpha) };
        let ph = C64::new(0.0, t) * xi.powi(4);
        p * ph.exp() * (x * xi).cos()
    };
    let rule = gauss_legendre(PANEL_NODES);

    // Real segment [0, R]; the first panel uses ξ = h v² to absorb the |ξ|^α endpoint.
    let omega = 4.0 * t * r.powi(3) + x.abs();
    let mut panels = ((r * omega / (2.0 * PI)).ceil() as usize).max(4);
    let real = |panels: usize| -> C64 {
        let h = r / panels as f64;
        let mut acc: C64 = mapped(&rule, 0.0, 1.0)
            .map(|(v, w)| w * 2.0 * h * v * f(C64::new(h * v * v, 0.0)))
            .sum();
        for p in 1..panels {
            let a = p as f64 * h;
            acc += mapped(&rule, a, a + h).map(|(s, w)| w * f(C64::new(s, 0.0))).sum::<C64>();
        }
        acc
    };
    let seg = refine(&mut panels, real, tol, "real segment")?;

    // Ray R + ρe^{iθ}: |e^{itξ⁴}e^{±ixξ}| ≤ exp(−(4tR³ − |x|)ρ sinθ − tρ⁴ sin4θ).
    let dir = C64::from_polar(1.0, TAIL_ANGLE);
    let lin = (4.0 * t * r.powi(3) - x.abs()) * TAIL_ANGLE.sin();
    let rho_max = (45.0 / lin).min((45.0 / (t * (4.0 * TAIL_ANGLE).sin())).powf(0.25));
    let osc = 4.0 * t * r.powi(3) * TAIL_ANGLE.cos() + x.abs();
    let mut tail_panels = ((rho_max * osc / (2.0 * PI)).ceil() as usize).max(4);
    let ray = |panels: usize| -> C64 {
        let h = rho_max / panels as f64;
        (0..panels)
            .map(|p| {
                let a = p as f64 * h;
                mapped(&rule, a, a + h)
                    .map(|(s, w)| w * f(C64::new(r, 0.0) + s * dir))
                    .sum::<C64>()
            })
            .sum::<C64>()
            * dir
    };
    let tail = refine(&mut tail_panels, ray, tol, "complex ray")?;
    Ok((seg + tail) / PI)
}

fn refine(panels: &mut usize, eval: impl Fn(usize) -> C64, tol: f64, what: &str) -> Result<C64> {
    let mut prev = eval(*panels);
    let mut change = f64::INFINITY;
    for _ in 0..10 {
        *panels *= 2;
        let next = eval(*panels);
        change = (next - prev).norm();
        if change <= tol * (1.0 + next.norm()) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "{what} did not converge to {tol:.1e} with {panels} panels (last change {change:.3e})"
    )))
}

/// max over the (t, x) grid of |K_t(x) − t^{−(α+1)/4}K₁(x t^{−1/4})|.
pub fn kernel_self_similarity(alpha: f64, ts: &[f64], xs: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).collect();
    let defects: Vec<f64> = pairs
        .par_iter()
        .map(|&(t, x)| -> Result<f64> {
            let direct = kernel(t, x, alpha)?;
            let scaled = kernel(1.0, x * t.abs().powf(-0.25), alpha)?;
            let scaled = if t < 0.0 { scaled.conj() } else { scaled };
            Ok((direct - t.abs().powf(-(alpha + 1.0) / 4.0) * scaled).norm())
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// (argmax, max) of |K₁(x)| over `samples` equally spaced points of [−xmax, xmax].
pub fn kernel_sup(alpha: f64, xmax: f64, samples: usize) -> Result<(f64, f64)> {
    let xs: Vec<f64> = (0..samples)
        .map(|j| -xmax + 2.0 * xmax * j as f64 / (samples - 1).max(1) as f64)
        .collect();
    let vals: Vec<f64> = xs
        .par_iter()
        .map(|&x| kernel(1.0, x, alpha).map(|z| z.norm()))
        .collect::<Result<_>>()?;
    Ok(xs
        .into_iter()
        .zip(vals)
        .fold((0.0, 0.0), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc }))
}

/// Free evolution with an extra real multiplier: `F⁻¹[w(ξ) e^{itξ⁴} û₀]`.
fn free_with_weight(hat: &[C64], grid: &Grid, t: f64, weight: &[f64]) -> Vec<C64> {
    let inv = 1.0 / grid.modes() as f64;
    let mut buf: Vec<C64> = hat
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let xi = grid.xi(i);
            let ph = (t * xi.powi(4)).rem_euclid(2.0 * PI);
            c * C64::from_polar(weight[i] * inv, ph)
        })
        .collect();
    grid.fft_inverse(&mut buf);
    buf
}

fn raw_forward(f: &Field) -> Vec<C64> {
    let mut buf = f.samples.clone();
    f.grid.fft_forward(&mut buf);
    buf
}

/// Fraction of ∫|v|² outside |x − center| < L/4.
fn outside_quarter(v: &[C64], grid: &Grid, center: f64) -> f64 {
    let quarter = grid.length() / 4.0;
    let mut inner = 0.0;
    let mut total = 0.0;
    for (j, z) in v.iter().enumerate() {
        let n = z.norm_sqr();
        total += n;
        let mut d = (grid.x(j) - center).abs();
        d = d.min(grid.length() - d);
        if d < quarter {
            inner += n;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        1.0 - inner / total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub alpha: f64,
    /// (t, ‖D^α e^{it∂ₓ⁴}u₀‖_{L∞}) for every requested time.
    pub series: Vec<(f64, f64)>,
    /// Times dropped as lying before the dispersive regime.
    pub excluded: Vec<f64>,
    pub fit: FitResult,
    pub predicted: f64,
}

/// Largest fraction of the evolved mass allowed outside the central half of the box.
pub const WRAP_LIMIT: f64 = 1e-6;

/// Fit ‖D^α e^{it∂ₓ⁴}u₀‖_{L∞} against t. Times below `w⁴`, with `w` twice the RMS width of
/// u₀, are excluded: before that the phase has not yet dispersed the datum.
pub fn decay_fit(alpha: f64, u0: &Field, ts: &[f64]) -> Result<DecayReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("decay exponent must lie in [0, 1], got {alpha}")));
    }
    let grid = &u0.grid;
    let (center, width) = rms_width(u0);
    let t_min = (2.0 * width).powi(4);
    let hat = raw_forward(u0);
    let ones = vec![1.0; grid.modes()];
    let dw: Vec<f64> = (0..grid.modes()).map(|i| grid.xi(i).abs().powf(alpha)).collect();
    let mut series = Vec::new();
    let mut excluded = Vec::new();
    for &t in ts {
        if t.abs() < t_min {
            excluded.push(t);
            continue;
        }
        let plain = free_with_weight(&hat, grid, t, &ones);
        let frac = outside_quarter(&plain, grid, center);
        if frac > WRAP_LIMIT {
            return Err(Error::WrapAround(format!(
                "at t = {t}, {frac:.2e} of the mass left the central half of the box"
            )));
        }
        let v = free_with_weight(&hat, grid, t, &dw);
        let sup = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        series.push((t.abs(), sup));
    }
    let fit = fit_loglog(&series)?;
    Ok(DecayReport {
        alpha,
        series,
        excluded,
        fit,
        predicted: -(alpha + 1.0) / 4.0,
    })
}

fn rms_width(f: &Field) -> (f64, f64) {
    let g = &f.grid;
    let w: Vec<f64> = f.samples.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = w.iter().sum();
    let mean = (0..g.modes()).map(|j| g.x(j) * w[j]).sum::<f64>() / total;
    let var = (0..g.modes()).map(|j| (g.x(j) - mean).powi(2) * w[j]).sum::<f64>() / total;
    (mean, var.sqrt())
}

/// Decay experiment defaults: a Gaussian of width 3 on a box of length 2²¹ with 2²² points,
/// sampled at t = 100·2^j.
pub fn default_decay_setup() -> Result<(Field, Vec<f64>)> {
    let grid = Grid::new(2f64.powi(21), 1 << 22)?;
    let u0 = make_gaussian(&grid, 1.0, 3.0, 0.0, 0.0)?;
    let ts = (0..6).map(|j| 100.0 * 2f64.powi(j)).collect();
    Ok((u0, ts))
}

/// Lebesgue exponent that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
}

impl Exponent {
    pub fn int(n: i64) -> Exponent {
        Exponent::Finite(Rational64::from_integer(n))
    }

    fn reciprocal(self) -> Rational64 {
        match self {
            Exponent::Finite(q) => q.recip(),
            Exponent::Infinite => Rational64::from_integer(0),
        }
    }
}

/// `r ≥ 2`, `q ≥ 8/(1+α)` and `4/q + (1+α)/r = (1+α)/2`, all in exact arithmetic.
pub fn strichartz_admissible(q: Exponent, r: Exponent, alpha: Rational64) -> bool {
    let one = Rational64::from_integer(1);
    let two = Rational64::from_integer(2);
    let valid = |e: Exponent| match e {
        Exponent::Finite(v) => v >= one,
        Exponent::Infinite => true,
    };
    if !valid(q) || !valid(r) || alpha < Rational64::from_integer(0) || alpha > one {
        return false;
    }
    let r_ok = match r {
        Exponent::Finite(v) => v >= two,
        Exponent::Infinite => true,
    };
    // q ≥ 8/(1+α) ⇔ 1/q ≤ (1+α)/8.
    let q_ok = q.reciprocal() <= (one + alpha) / Rational64::from_integer(8);
    let relation = Rational64::from_integer(4) * q.reciprocal() + (one + alpha) * r.reciprocal() == (one + alpha) / two;
    r_ok && q_ok && relation
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearPoint {
    pub n1: f64,
    pub n2: f64,
    /// ‖e^{it∂ₓ⁴}φ₁ · e^{it∂ₓ⁴}φ₂‖_{L²_{t,x}} over the crossing window.
    pub norm: f64,
    pub window: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilinearReport {
    pub points: Vec<BilinearPoint>,
    pub fit: FitResult,
    pub predicted: f64,
}

/// Geometry of the bilinear experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearOptions {
    pub length: f64,
    pub modes: usize,
    /// Gaussian envelope width of both packets.
    pub width: f64,
    pub snapshots: usize,
    /// Require N₁ ≤ N₂/8.
    pub enforce_separation: bool,
}

impl Default for BilinearOptions {
    fn default() -> Self {
        BilinearOptions {
            length: 128.0,
            modes: 32768,
            width: 4.0,
            snapshots: 401,
            enforce_separation: true,
        }
    }
}

/// Unit-L² packet at frequency `n`, centred at `x0`.
pub fn packet(grid: &Grid, n: f64, width: f64, x0: f64) -> Result<Field> {
    let raw = make_gaussian(grid, 1.0, width, n, x0)?;
    let m = raw.quadrature_mass();
    Ok(raw.scale(C64::new(1.0 / m.sqrt(), 0.0)))
}

/// One bilinear product norm. The high packet starts a quarter box away from the low one and
/// the window is the time it needs, at the relative group velocity `4(N₂³ − N₁³)`, to cross a
/// half box, so the whole interaction lies inside it.
pub fn bilinear_norm(n1: f64, n2: f64, opts: &BilinearOptions) -> Result<BilinearPoint> {
    let (lo, hi) = if n1.abs() <= n2.abs() { (n1, n2) } else { (n2, n1) };
    if opts.enforce_separation && lo.abs() > hi.abs() / 8.0 {
        return Err(invalid(format!("frequencies {lo} and {hi} violate N1 <= N2/8")));
    }
    let grid = Grid::new(opts.length, opts.modes)?;
    let top = hi.abs() + 8.0 / opts.width;
    if top >= 0.75 * grid.nyquist() {
        return Err(Error::Resolution(format!(
            "packet at frequency {hi} needs a Nyquist frequency above {:.1}, grid has {:.1}",
            top / 0.75,
            grid.nyquist()
        )));
    }
    let speed = 4.0 * (hi.powi(3) - lo.powi(3)).abs().max(hi.powi(3).abs());
    let d = opts.length / 4.0;
    let window = 2.0 * d / speed;
    // Group velocity of e^{itξ⁴} is −4ξ³: the faster packet starts on the right.
    let sign = if hi.powi(3) - lo.powi(3) >= 0.0 { 1.0 } else { -1.0 };
    let a = packet(&grid, lo, opts.width, 0.0)?;
    let b = packet(&grid, hi, opts.width, sign * d)?;
    let (ha, hb) = (raw_forward(&a), raw_forward(&b));
    let ones = vec![1.0; grid.modes()];
    let n = opts.snapshots.max(3);
    let dt = window / (n - 1) as f64;
    let slices: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 * dt;
            let ua = free_with_weight(&ha, &grid, t, &ones);
            let ub = free_with_weight(&hb, &grid, t, &ones);
            ua.iter().zip(&ub).map(|(p, q)| (p * q).norm_sqr()).sum::<f64>() * grid.dx()
        })
        .collect();
    let integral = dt * (slices.iter().sum::<f64>() - 0.5 * (slices[0] + slices[n - 1]));
    Ok(BilinearPoint {
        n1,
        n2,
        norm: integral.sqrt(),
        window,
    })
}

pub fn bilinear_fit(n1: f64, n2s: &[f64], opts: &BilinearOptions) -> Result<BilinearReport> {
    let points: Vec<BilinearPoint> = n2s
        .iter()
        .map(|&n2| bilinear_norm(n1, n2, opts))
        .collect::<Result<_>>()?;
    let fit = fit_loglog(&points.iter().map(|p| (p.n2, p.norm)).collect::<Vec<_>>())?;
    Ok(BilinearReport {
        points,
        fit,
        predicted: -1.5,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingPoint {
    pub lambda: f64,
    /// sup_x (∫|D^β e^{it∂ₓ⁴}φ_λ(x)|²dt)^{1/2} / ‖φ_λ‖_{L²}.
    pub ratio: f64,
    pub snapshots: usize,
}

/// sup over grid points with |x| < L/4 of (∫_{t0}^{t1}|D^β e^{it∂ₓ⁴}φ(x)|²dt)^{1/2} / ‖φ‖_{L²}.
/// The trapezoidal rule is refined by doubling until the value moves by less than 0.1%.
pub fn local_smoothing_check(phi: &Field, beta: f64, window: (f64, f64)) -> Result<(f64, usize)> {
    let grid = &phi.grid;
    let mass = phi.quadrature_mass();
    if mass == 0.0 {
        return Ok((0.0, 0));
    }
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(invalid(format!("empty time window [{t0}, {t1}]")));
    }
    let hat = raw_forward(phi);
    let weight: Vec<f64> = (0..grid.modes()).map(|i| grid.xi(i).abs().powf(beta)).collect();
    let inner: Vec<usize> = (0..grid.modes()).filter(|&j| grid.x(j).abs() < grid.length() / 4.0).collect();
    let sample = |t: f64| -> Vec<f64> {
        let v = free_with_weight(&hat, grid, t, &weight);
        inner.iter().map(|&j| v[j].norm_sqr()).collect()
    };
    // Collected before summing so the result does not depend on how rayon splits the work.
    let accumulate = |ts: &[f64]| -> Vec<f64> {
        let rows: Vec<Vec<f64>> = ts.par_iter().map(|&t| sample(t)).collect();
        rows.iter().fold(vec![0.0; inner.len()], |mut acc, r| {
            acc.iter_mut().zip(r).for_each(|(a, b)| *a += b);
            acc
        })
    };
    // Trapezoid on n = 2^j + 1 nodes; each refinement only evaluates the new midpoints.
    let mut n = 256usize;
    let mut h = (t1 - t0) / n as f64;
    let ends: Vec<f64> = sample(t0).iter().zip(sample(t1)).map(|(a, b)| 0.5 * (a + b)).collect();
    let interior: Vec<f64> = (1..n).map(|j| t0 + j as f64 * h).collect();
    let mut sums: Vec<f64> = ends.iter().zip(accumulate(&interior)).map(|(a, b)| a + b).collect();
    let value = |sums: &[f64], h: f64| (sums.iter().cloned().fold(0.0, f64::max) * h / mass).sqrt();
    let mut prev = value(&sums, h);
    for _ in 0..8 {
        let mids: Vec<f64> = (0..n).map(|j| t0 + (j as f64 + 0.5) * h).collect();
        for (s, m) in sums.iter_mut().zip(accumulate(&mids)) {
            *s += m;
        }
        n *= 2;
        h *= 0.5;
        let next = value(&sums, h);
        if (next - prev).abs() <= 1e-3 * next {
            return Ok((next, n + 1));
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "local smoothing time integral not converged with {} nodes",
        n + 1
    )))
}

/// Frequency-rescaled family `φ_λ(x) = λ^{1/2}φ(λx)` with `φ` a unit Gaussian packet at frequency 1;
/// each member is observed over `|t| ≤ 1/λ⁴`, the image of a fixed window under the scaling.
pub fn local_smoothing_family(lambdas: &[f64], beta: f64, grid: &Grid) -> Result<Vec<SmoothingPoint>> {
    lambdas
        .iter()
        .map(|&lam| {
            let phi = Field::from_fn(grid, |x| {
                let y = lam * x;
                C64::from_polar(lam.sqrt() * (-0.5 * y * y).exp(), y)
            });
            let top = lam * 8.0;
            if top >= 0.75 * grid.nyquist() {
                return Err(Error::Resolution(format!(
                    "scale {lam} needs a Nyquist frequency above {:.1}",
                    top / 0.75
                )));
            }
            let t = lam.powi(-4);
            let (ratio, snapshots) = local_smoothing_check(&phi, beta, (-t, t))?;
            Ok(SmoothingPoint {
                lambda: lam,
                ratio,
                snapshots,
            })
        })
        .collect()
}

/// Grid for the smoothing family: length 40 with 8192 points.
pub fn default_smoothing_grid() -> Result<Grid> {
    Grid::new(40.0, 8192)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Entire-series oracle: K_t(x) = (1/4π) Σ_n (−x²)^n/(2n)! Γ((2n+α+1)/4) e^{iπ(2n+α+1)/8} t^{−(2n+α+1)/4}.
    fn series_kernel(t: f64, x: f64, alpha: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..200 {
            let a = (2 * n) as f64 + alpha + 1.0;
            let log_mag = libm::lgamma(a / 4.0) - libm::lgamma((2 * n) as f64 + 1.0) - a / 4.0 * t.ln()
                + if x == 0.0 { if n == 0 { 0.0 } else { f64::NEG_INFINITY } } else { (2 * n) as f64 * x.abs().ln() };
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * C64::from_polar(log_mag.exp(), PI * a / 8.0);
        }
        acc / (4.0 * PI)
    }

    #[test]
    fn kernel_matches_power_series() {
        for alpha in [0.0, 0.5, 1.0] {
            for (t, x) in [(1.0, 0.0), (1.0, 0.8), (0.5, -2.0), (2.0, 3.0), (1.0, 4.5)] {
                let k = kernel(t, x, alpha).unwrap();
                let s = series_kernel(t, x, alpha);
                assert!((k - s).norm() < 1e-9, "alpha={alpha} t={t} x={x}: {k} vs {s}");
            }
        }
        let gamma_quarter = 3.625_609_908_221_908;
        let exact = C64::from_polar(gamma_quarter / (4.0 * PI), PI / 8.0);
        assert!((kernel(1.0, 0.0, 0.0).unwrap() - exact).norm() < 1e-10);
        assert_eq!(kernel(-1.0, 0.3, 0.0).unwrap(), kernel(1.0, 0.3, 0.0).unwrap().conj());
        assert!(kernel(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn self_similarity_small_grid() {
        let d = kernel_self_similarity(0.0, &[0.1, 3.0], &[0.0, 1.5, -4.0]).unwrap();
        assert!(d < 1e-8, "{d}");
        let d = kernel_self_similarity(1.0, &[0.5, 20.0], &[0.2, 7.0]).unwrap();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn admissibility_examples() {
        let r = |a, b| Rational64::new(a, b);
        assert!(strichartz_admissible(Exponent::int(4), Exponent::Infinite, r(1, 1)));
        assert!(strichartz_admissible(Exponent::int(8), Exponent::Infinite, r(0, 1)));
        for a in [r(0, 1), r(1, 3), r(1, 1)] {
            assert!(strichartz_admissible(Exponent::Infinite, Exponent::int(2), a));
        }
        assert!(!strichartz_admissible(Exponent::int(2), Exponent::Infinite, r(0, 1)));
        assert!(!strichartz_admissible(Exponent::int(8), Exponent::int(1), r(0, 1)));
        // 4/q + 1/r = 1/2 with q = 16, r = 4: admissible.
        assert!(strichartz_admissible(Exponent::int(16), Exponent::int(4), r(0, 1)));
        assert!(!strichartz_admissible(Exponent::int(16), Exponent::int(5), r(0, 1)));
    }

    #[test]
    fn bilinear_commutes_and_scales() {
        let opts = BilinearOptions {
            length: 128.0,
            modes: 4096,
            snapshots: 201,
            ..BilinearOptions::default()
        };
        let a = bilinear_norm(2.0, 32.0, &opts).unwrap();
        let b = bilinear_norm(32.0, 2.0, &opts).unwrap();
        assert_eq!(a.norm, b.norm);
        // Rigid crossing: ‖u₁u₂‖² ≈ 1/(relative speed).
        let predicted = (4.0 * (32f64.powi(3) - 8.0)).powf(-0.5);
        assert!((a.norm / predicted - 1.0).abs() < 0.05, "{} vs {predicted}", a.norm);
        assert!(bilinear_norm(8.0, 32.0, &opts).is_err());
    }

    #[test]
    fn smoothing_zero_datum() {
        let g = Grid::new(10.0, 64).unwrap();
        assert_eq!(local_smoothing_check(&Field::zeros(&g), 1.5, (0.0, 1.0)).unwrap().0, 0.0);
    }
}
