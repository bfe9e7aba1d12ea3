//! Dispatch of a validated spec to the owning module.

use std::io;
use std::path::Path;

use nls4_core::dispersive::{
    bilinear_fit, decay_fit, kernel_self_similarity, local_smoothing_family,
};
use nls4_core::evolution::{evolve, Equation, EvolutionConfig, Scheme, TrajectoryRecord};
use nls4_core::illposed::{
    error_decay_experiment, modulation_norm_check, residual_fields, separation_experiment, ApproxParams,
    ModulationAxis,
};
use nls4_core::imethod::{
    derivative_identity_check, fit_derivative_constant, gwp_exponents, gwp_parameters, random_state,
    AlmostConservationSetup, IMethodParams,
};
use nls4_core::resonance::{random_residual_sweep, symbolic_abs_form_residual, symbolic_signed_residual, trilinear_counterexample};
use nls4_core::spectral::{make_gaussian, ModeSet};
use nls4_core::{fit_loglog, FitResult, Grid, C64};
use serde_json::{json, Value};

use crate::report::{num, sha256_hex, Artifacts, Check, Manifest, ReportDocument, RunResult, Status};
use crate::spec::{ExperimentSpec, Params};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub strict: bool,
    /// Progress lines on stderr.
    pub progress: bool,
}

#[derive(Debug)]
enum Failure {
    Core(nls4_core::Error),
    Io(io::Error),
}

impl From<nls4_core::Error> for Failure {
    fn from(e: nls4_core::Error) -> Failure {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::Io(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    summary: Value,
    /// Set when the run stopped early but left partial data behind.
    incomplete: Option<String>,
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    out: Artifacts,
    progress: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: impl std::fmt::Display) {
        if self.progress {
            eprintln!("[{}] {msg}", self.spec.kind);
        }
    }

    fn tol(&self, name: &str) -> f64 {
        self.spec.tolerance(name)
    }
}

/// Run `spec`, writing CSV artifacts and `report.json` into `out`.
///
/// Module errors are recorded in the report rather than returned; only failing to create the
/// output directory or to write the report itself is an `Err`.
pub fn run(spec: &ExperimentSpec, out: &Path, opts: &RunOptions) -> io::Result<ReportDocument> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(io::Error::other)?;
    let threads = pool.current_num_threads();
    let mut ctx = Ctx {
        spec,
        out: Artifacts::new(out)?,
        progress: opts.progress,
    };
    ctx.say(format!("output in {} with {threads} threads", out.display()));
    let outcome = pool.install(|| dispatch(&mut ctx));

    let result = match outcome {
        Ok(o) => {
            let status = if o.incomplete.is_some() {
                Status::Incomplete
            } else if o.checks.iter().all(|c| c.pass) {
                Status::Pass
            } else {
                Status::Fail
            };
            RunResult {
                status,
                checks: o.checks,
                summary: o.summary,
                error: o.incomplete,
            }
        }
        Err(e) => RunResult {
            status: Status::Error,
            checks: Vec::new(),
            summary: Value::Null,
            error: Some(e.to_string()),
        },
    };
    let canonical = serde_json::to_string(&spec.resolved).expect("spec serializes");
    let doc = ReportDocument {
        manifest: Manifest {
            tool: "4nls-lab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: spec.kind.name().into(),
            spec: spec.resolved.clone(),
            spec_sha256: sha256_hex(canonical.as_bytes()),
            seed: spec.seed,
            threads,
            strict: opts.strict,
            warnings: spec.warnings.clone(),
        },
        result,
        files: ctx.out.files.clone(),
    };
    std::fs::write(out.join("report.json"), doc.to_json())?;
    ctx.say(format!("status {}", doc.result.status));
    Ok(doc)
}

fn dispatch(ctx: &mut Ctx) -> Result<Outcome, Failure> {
    match &ctx.spec.params {
        Params::Evolve(p) => run_evolve(ctx, p),
        Params::ImethodAlmost(p) => run_almost(ctx, p),
        Params::DerivativeIdentity(p) => run_derivative(ctx, p),
        Params::ResonanceCheck { samples } => run_resonance(ctx, *samples),
        Params::TrilinearCounterexample(p) => run_trilinear(ctx, p),
        Params::DispersiveDecay(p) => run_decay(ctx, p),
        Params::BilinearFit(p) => run_bilinear(ctx, p),
        Params::LocalSmoothing(p) => run_smoothing(ctx, p),
        Params::ModulationCheck(p) => run_modulation(ctx, p),
        Params::IllposedError(p) => run_illposed_error(ctx, p),
        Params::IllposedSeparation(p) => run_separation(ctx, p),
        Params::GwpParameters(p) => run_gwp(ctx, p),
    }
}

fn fit_json(f: &FitResult) -> Value {
    json!({"slope": f.slope, "intercept": f.intercept, "residual_rms": f.residual_rms})
}

fn max_relative_drift(series: &[f64]) -> f64 {
    let base = series.first().copied().unwrap_or(0.0);
    let scale = base.abs().max(f64::MIN_POSITIVE);
    series.iter().map(|v| (v - base).abs() / scale).fold(0.0, f64::max)
}

fn run_evolve(ctx: &mut Ctx, p: &crate::spec::EvolveParams) -> Result<Outcome, Failure> {
    let grid = Grid::new(p.length, p.modes)?;
    let u0 = make_gaussian(&grid, p.amplitude, p.width, p.carrier, p.center)?;
    let cfg = EvolutionConfig {
        equation: if p.quartic { Equation::Quartic } else { Equation::Cubic },
        orientation: p.orientation,
        kappa: p.kappa,
        dt: p.dt,
        t_end: p.t_end,
        scheme: if p.ifrk4 { Scheme::Ifrk4 } else { Scheme::Strang },
        record_stride: p.stride,
        keep_states: false,
        norm_indices: p.norms.clone(),
    };
    ctx.say(format!("{} steps", cfg.steps().0));
    let (rec, incomplete) = match evolve(&u0, &cfg) {
        Ok(rec) => (rec, None),
        Err(nls4_core::Error::Aborted { time, reason, record }) => {
            (*record, Some(format!("run aborted at t = {time}: {reason}")))
        }
        Err(e) => return Err(e.into()),
    };
    write_trajectory(&mut ctx.out, &rec)?;
    let mass = max_relative_drift(&rec.mass);
    let energy = max_relative_drift(&rec.hamiltonian);
    Ok(Outcome {
        checks: vec![
            Check::at_most("mass_drift", mass, ctx.tol("mass_drift")),
            Check::at_most("energy_drift", energy, ctx.tol("energy_drift")),
        ],
        summary: json!({
            "records": rec.len(),
            "t_final": rec.times.last(),
            "mass_drift": mass,
            "energy_drift": energy,
            "max_spectral_tail": rec.spectral_tail.iter().cloned().fold(0.0, f64::max),
        }),
        incomplete,
    })
}

fn write_trajectory(out: &mut Artifacts, rec: &TrajectoryRecord) -> io::Result<()> {
    let mut header = vec!["t".to_string(), "mass".into(), "energy".into()];
    header.extend(rec.norm_indices.iter().map(|s| format!("norm_h{s}")));
    header.push("spectral_tail".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..rec.len()).map(|r| {
        let mut row = vec![num(rec.times[r]), num(rec.mass[r]), num(rec.hamiltonian[r])];
        row.extend(rec.norms[r].iter().map(|&v| num(v)));
        row.push(num(rec.spectral_tail[r]));
        row
    });
    out.csv("trajectory.csv", &header, rows)
}

fn run_almost(ctx: &mut Ctx, setup: &AlmostConservationSetup) -> Result<Outcome, Failure> {
    let setup = AlmostConservationSetup {
        seed: ctx.spec.seed,
        ..setup.clone()
    };
    ctx.say(format!("{} steps, N = {:?}", setup.config().steps().0, setup.ns));
    let r = setup.run()?;
    ctx.out.csv(
        "almost.csv",
        &["n", "e2_initial", "e4_initial", "increment4", "increment2"],
        r.rows
            .iter()
            .map(|row| [row.n, row.e2_initial, row.e4_initial, row.increment4, row.increment2].map(num)),
    )?;
    let gap = r.fit2.slope - r.fit4.slope;
    Ok(Outcome {
        checks: vec![
            Check::within("slope4", r.fit4.slope, -ctx.tol("slope4_target"), ctx.tol("slope4")),
            Check::at_least("slope_gap", gap, ctx.tol("min_gap")),
        ],
        summary: json!({
            "slope": r.fit4.slope,
            "fit4": fit_json(&r.fit4),
            "fit2": fit_json(&r.fit2),
            "gap": gap,
            "max_outside_fraction": r.max_outside_fraction,
        }),
        incomplete: None,
    })
}

fn run_derivative(ctx: &mut Ctx, p: &crate::spec::DerivativeParams) -> Result<Outcome, Failure> {
    let grid = Grid::new(p.length, p.modes)?;
    let modes = ModeSet::new(&grid, p.cutoff)?;
    let params = IMethodParams::new(p.n, p.s)?;
    let cfg = EvolutionConfig {
        orientation: p.orientation,
        ..EvolutionConfig::quartic(p.kappa, 1e-3, 1.0)
    };
    let seed = ctx.spec.seed;
    let samples = (0..p.states)
        .map(|j| {
            let state = random_state(&modes, p.active, p.amplitude, seed.wrapping_add(j as u64));
            derivative_identity_check(&state, &params, &cfg, &modes, p.h)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_derivative_constant(&samples)?;
    ctx.out.csv(
        "derivative.csv",
        &["state", "e2", "e4", "de2_fd", "de2_pred", "defect2", "de4_fd", "re_lambda6", "ratio"],
        samples.iter().enumerate().map(|(j, s)| {
            let mut row = vec![j.to_string()];
            row.extend([s.e2, s.e4, s.de2_fd, s.de2_pred, s.defect2, s.de4_fd, s.re_lambda6, s.ratio()].map(num));
            row
        }),
    )?;
    let defect2 = samples.iter().map(|s| s.defect2).fold(0.0, f64::max);
    Ok(Outcome {
        checks: vec![
            Check::at_most("defect2", defect2, ctx.tol("defect2")),
            Check::at_most("constant_spread", fit.spread, ctx.tol("constant_spread")),
        ],
        summary: json!({
            "constant": fit.c,
            "spread": fit.spread,
            "max_defect4": fit.max_defect4,
            "max_defect2": defect2,
            "states": samples.len(),
        }),
        incomplete: None,
    })
}

fn run_resonance(ctx: &mut Ctx, samples: usize) -> Result<Outcome, Failure> {
    let signed = symbolic_signed_residual().is_zero();
    let abs_form = symbolic_abs_form_residual().is_zero();
    ctx.say(format!("{samples} random samples"));
    let worst = random_residual_sweep(samples, ctx.spec.seed);
    Ok(Outcome {
        checks: vec![
            Check::holds("symbolic_signed_zero", signed),
            Check::holds("symbolic_abs_form_zero", abs_form),
            Check::at_most("sampled_residual", worst, ctx.tol("residual")),
        ],
        summary: json!({"samples": samples, "worst_relative_residual": worst}),
        incomplete: None,
    })
}

fn run_trilinear(ctx: &mut Ctx, p: &crate::spec::TrilinearParams) -> Result<Outcome, Failure> {
    let tol = ctx.tol("slope");
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &s in &p.s {
        ctx.say(format!("s = {s}"));
        let r = trilinear_counterexample(s, &p.n, p.options)?;
        checks.push(Check::within(&format!("slope_s{s}"), r.fit.slope, r.predicted, tol));
        rows.extend(r.rows.iter().map(|row| [s, row.n, row.lhs, row.rhs, row.ratio].map(num)));
        fits.push(json!({"s": s, "fit": fit_json(&r.fit), "predicted": r.predicted,
                         "refinement_defect": r.refinement_defect}));
    }
    // Exponent −2s−1 changes sign at s = −1/2.
    let slopes: Vec<(f64, f64)> = p.s.iter().zip(&fits).map(|(&s, f)| (s, f["fit"]["slope"].as_f64().unwrap_or(f64::NAN))).collect();
    let above = slopes.iter().filter(|(s, _)| *s > -0.5).collect::<Vec<_>>();
    let below = slopes.iter().filter(|(s, _)| *s < -0.5).collect::<Vec<_>>();
    if !above.is_empty() && !below.is_empty() {
        let flip = above.iter().all(|(_, m)| *m < 0.0) && below.iter().all(|(_, m)| *m > 0.0);
        checks.push(Check::holds("sign_flip", flip));
    }
    ctx.out.csv("trilinear.csv", &["s", "n", "lhs", "rhs", "ratio"], rows)?;
    Ok(Outcome {
        checks,
        summary: json!({"fits": fits}),
        incomplete: None,
    })
}

fn run_decay(ctx: &mut Ctx, p: &crate::spec::DecayParams) -> Result<Outcome, Failure> {
    let grid = Grid::new(p.length, p.modes)?;
    let u0 = make_gaussian(&grid, 1.0, p.width, 0.0, 0.0)?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &alpha in &p.alpha {
        ctx.say(format!("alpha = {alpha}"));
        let sim = kernel_self_similarity(alpha, &p.kernel_t, &p.kernel_x)?;
        let r = decay_fit(alpha, &u0, &p.times)?;
        let tol = if alpha == 0.0 { ctx.tol("slope_alpha0") } else { ctx.tol("slope_alpha1") };
        checks.push(Check::within(&format!("slope_alpha{alpha}"), r.fit.slope, r.predicted, tol));
        checks.push(Check::at_most(&format!("residual_rms_alpha{alpha}"), r.fit.residual_rms, ctx.tol("residual_rms")));
        checks.push(Check::at_most(&format!("self_similarity_alpha{alpha}"), sim, ctx.tol("self_similarity")));
        rows.extend(r.series.iter().map(|&(t, v)| [alpha, t, v].map(num)));
        fits.push(json!({"alpha": alpha, "fit": fit_json(&r.fit), "predicted": r.predicted,
                         "excluded_times": r.excluded, "self_similarity": sim}));
    }
    ctx.out.csv("decay.csv", &["alpha", "t", "sup"], rows)?;
    Ok(Outcome {
        checks,
        summary: json!({"fits": fits}),
        incomplete: None,
    })
}

fn run_bilinear(ctx: &mut Ctx, p: &crate::spec::BilinearParams) -> Result<Outcome, Failure> {
    let r = bilinear_fit(p.n1, &p.n2, &p.options)?;
    ctx.out.csv(
        "bilinear.csv",
        &["n1", "n2", "norm", "window"],
        r.points.iter().map(|q| [q.n1, q.n2, q.norm, q.window].map(num)),
    )?;
    Ok(Outcome {
        checks: vec![
            Check::within("slope", r.fit.slope, r.predicted, ctx.tol("slope")),
            Check::at_most("residual_rms", r.fit.residual_rms, ctx.tol("residual_rms")),
        ],
        summary: json!({"fit": fit_json(&r.fit), "predicted": r.predicted}),
        incomplete: None,
    })
}

fn run_smoothing(ctx: &mut Ctx, p: &crate::spec::SmoothingParams) -> Result<Outcome, Failure> {
    let grid = Grid::new(p.length, p.modes)?;
    let points = local_smoothing_family(&p.lambdas, p.beta, &grid)?;
    ctx.out.csv(
        "smoothing.csv",
        &["lambda", "ratio", "snapshots"],
        points.iter().map(|q| vec![num(q.lambda), num(q.ratio), q.snapshots.to_string()]),
    )?;
    // The ratio is invariant for β = 3/2 and scales like λ^{β-3/2} otherwise.
    let predicted = p.beta - 1.5;
    let fit = fit_loglog(&points.iter().map(|q| (q.lambda, q.ratio)).collect::<Vec<_>>())?;
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q.ratio), hi.max(q.ratio)));
    Ok(Outcome {
        checks: vec![Check::within("slope", fit.slope, predicted, ctx.tol("slope"))],
        summary: json!({"fit": fit_json(&fit), "predicted": predicted, "min_ratio": lo, "max_ratio": hi}),
        incomplete: None,
    })
}

fn run_modulation(ctx: &mut Ctx, p: &crate::spec::ModulationParams) -> Result<Outcome, Failure> {
    let grid = Grid::new(p.length, p.modes)?;
    let u = |x: f64| C64::from((-0.5 * x * x).exp());
    let base = (p.amplitude, p.frequency, p.width);
    let tol = ctx.tol("slope");
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (axis, name, values) in [
        (ModulationAxis::Amplitude, "amplitude", &p.amplitudes),
        (ModulationAxis::Frequency, "frequency", &p.frequencies),
        (ModulationAxis::Width, "width", &p.widths),
    ] {
        let sw = modulation_norm_check(&grid, &u, base, p.center, p.s, axis, values)?;
        checks.push(Check::within(&format!("slope_{name}"), sw.fit.slope, sw.predicted, tol));
        rows.extend(sw.points.iter().map(|q| {
            vec![
                name.to_string(),
                num(q.amplitude),
                num(q.frequency),
                num(q.width),
                num(q.norm),
                q.hypothesis.to_string(),
            ]
        }));
        fits.push(json!({"axis": name, "fit": fit_json(&sw.fit), "predicted": sw.predicted}));
    }
    ctx.out.csv("modulation.csv", &["axis", "amplitude", "frequency", "width", "norm", "hypothesis"], rows)?;
    Ok(Outcome {
        checks,
        summary: json!({"s": p.s, "fits": fits}),
        incomplete: None,
    })
}

fn run_illposed_error(ctx: &mut Ctx, p: &crate::spec::IllposedErrorParams) -> Result<Outcome, Failure> {
    let setup = &p.setup;
    let rp = ApproxParams::new(p.residual_n, setup.kappa, setup.y_length, setup.y_modes)?;
    let profile = setup.profile.build(&rp)?;
    let xg = rp.x_grid(p.x_modes)?;
    ctx.say(format!("residual identity at N = {}", p.residual_n));
    let defects = p
        .residual_steps
        .iter()
        .map(|&h| residual_fields(&profile, &rp, p.residual_time, &xg, h, setup.dt).map(|r| r.defect))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.say(format!("tracking error for N = {:?}", setup.ns));
    let r = error_decay_experiment(setup)?;
    ctx.out.csv(
        "illposed_error.csv",
        &["n", "size", "initial_error", "sup_error", "time_of_sup"],
        r.rows
            .iter()
            .map(|row| [row.n, row.size, row.initial_error, row.sup_error, row.time_of_sup].map(num)),
    )?;
    ctx.out.csv(
        "residual.csv",
        &["h", "defect"],
        p.residual_steps.iter().zip(&defects).map(|(&h, &d)| [h, d].map(num)),
    )?;
    let last = *defects.last().expect("at least two steps");
    Ok(Outcome {
        checks: vec![
            Check::within("slope", r.fit.slope, r.predicted, ctx.tol("slope")),
            Check::at_most("residual_defect", last, ctx.tol("residual_defect")),
            Check::holds("residual_improves", last < defects[0]),
        ],
        summary: json!({"fit": fit_json(&r.fit), "predicted": r.predicted, "residual_defects": defects}),
        incomplete: None,
    })
}

fn run_separation(ctx: &mut Ctx, setup: &nls4_core::illposed::SeparationSetup) -> Result<Outcome, Failure> {
    ctx.say(format!("window {} in profile time", setup.profile_window()));
    let r = separation_experiment(setup)?;
    ctx.out.csv(
        "separation.csv",
        &["t", "t_profile", "distance", "approx_distance", "error1", "error2"],
        r.samples
            .iter()
            .map(|q| [q.t, q.t_profile, q.distance, q.approx_distance, q.error1, q.error2].map(num)),
    )?;
    if let Some([u1, u2]) = &r.snapshots {
        let g = &u1.grid;
        ctx.out.csv(
            "snapshots.csv",
            &["y", "re_u1", "im_u1", "re_u2", "im_u2"],
            (0..g.modes()).map(|j| {
                let (a, b) = (u1.samples[j], u2.samples[j]);
                [g.x(j), a.re, a.im, b.re, b.im].map(num)
            }),
        )?;
    }
    for w in &r.warnings {
        ctx.say(format!("warning: {w}"));
    }
    Ok(Outcome {
        checks: vec![
            Check::at_most("initial_ratio", r.initial_ratio(), ctx.tol("initial_ratio")),
            Check::at_least("sup_ratio", r.sup_ratio(), ctx.tol("sup_ratio")),
        ],
        summary: json!({
            "s": r.s, "n": r.n, "lambda": r.lambda, "epsilon": r.epsilon, "delta": r.delta,
            "initial_norms": r.initial_norms, "sup_distance": r.sup_distance,
            "time_of_max": r.time_of_max, "profile_time_of_max": r.profile_time_of_max,
            "window": r.window, "profile_window": r.profile_window,
            "triangle_slack": r.triangle_slack, "warnings": r.warnings,
        }),
        incomplete: None,
    })
}

fn run_gwp(ctx: &mut Ctx, p: &crate::spec::GwpParams) -> Result<Outcome, Failure> {
    let e = gwp_exponents(p.s)?;
    let s = *p.s.numer() as f64 / *p.s.denom() as f64;
    let q = gwp_parameters(s, p.t, p.norm, p.eps0)?;
    ctx.say(format!("s = {}", p.s));
    // Recheck the numeric solution against both defining relations.
    let d = 3.0 + 2.0 * s;
    let r = (p.norm / p.eps0).powf(2.0 / d);
    let lambda_exp = *e.lambda.numer() as f64 / *e.lambda.denom() as f64;
    let growth_exp = *e.growth.numer() as f64 / *e.growth.denom() as f64;
    let lambda_rel = (q.lambda / (r * q.n.powf(lambda_exp)) - 1.0).abs();
    let time_rel = (q.n.powi(3) / (q.lambda.powi(4) * p.t) - 1.0).abs();
    Ok(Outcome {
        checks: vec![
            Check::at_most("lambda_relation", lambda_rel, 1e-9),
            Check::at_most("time_relation", time_rel, 1e-9),
            Check::at_most("growth_agrees", (q.growth - growth_exp).abs(), 1e-12),
        ],
        summary: json!({
            "s": p.s.to_string(),
            "lambda_exponent": e.lambda.to_string(),
            "time_exponent": e.time.to_string(),
            "growth_exponent": e.growth.to_string(),
            "lambda": q.lambda,
            "n": q.n,
        }),
        incomplete: None,
    })
}
