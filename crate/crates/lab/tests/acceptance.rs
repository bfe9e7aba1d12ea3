//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria that have a harness kind run through the harness with the default spec, so the
//! tolerances applied are exactly the defaults a user gets. The rest call the core directly.
//! `cargo test --test acceptance -- <substring>` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nls4_core::dispersive::{strichartz_admissible, Exponent};
use nls4_core::evolution::{cross_validate, EvolutionConfig};
use nls4_core::imethod::gwp_exponents;
use nls4_core::spectral::{make_gaussian, sobolev_norm};
use nls4_core::symmetries::{check_scaling_covariance, scale_transform};
use nls4_core::{Grid, Weight};
use nls4_lab::{parse_str, run, Kind, ReportDocument, RunOptions, Status};
use num_rational::Rational64;

struct Line {
    ok: bool,
    text: String,
}

fn line(ok: bool, text: impl Into<String>) -> Line {
    Line { ok, text: text.into() }
}

fn harness(doc: &str) -> (ReportDocument, Vec<Line>) {
    let spec = parse_str(doc, false, None, true).expect("acceptance spec is valid");
    let dir = tempfile::tempdir().unwrap();
    let report = run(
        &spec,
        dir.path(),
        &RunOptions {
            threads: None,
            strict: true,
            progress: false,
        },
    )
    .expect("output directory is writable");
    let mut lines: Vec<Line> = report.result.checks.iter().map(|c| line(c.pass, format!("{}", c))).collect();
    if let Some(e) = &report.result.error {
        lines.push(line(false, format!("run error: {e}")));
    }
    if report.result.checks.is_empty() {
        lines.push(line(false, "no checks were evaluated"));
    }
    lines.push(line(report.status() == Status::Pass, format!("{} status {}", spec.kind, report.status())));
    (report, lines)
}

fn default_run(kind: Kind) -> Vec<Line> {
    harness(&format!(r#"{{"kind": "{kind}"}}"#)).1
}

fn c1_conservation() -> Vec<Line> {
    let (report, mut lines) = harness(r#"{"kind": "evolve"}"#);
    // The two schemes on the same datum and step, over the first unit of time.
    let p = &report.manifest.spec["params"];
    let f = |k: &str| p[k].as_f64().unwrap_or(f64::NAN);
    let g = Grid::new(f("length"), f("modes") as usize).unwrap();
    let u = make_gaussian(&g, f("amplitude"), f("width"), f("carrier"), f("center")).unwrap();
    let cfg = EvolutionConfig {
        orientation: f("orientation"),
        ..EvolutionConfig::quartic(f("kappa"), f("dt"), 1.0)
    };
    let a = cross_validate(&u, &cfg).unwrap();
    lines.push(line(
        a.agrees(),
        format!(
            "Strang vs IFRK4 difference {:.3e} <= combined error {:.3e}",
            a.difference,
            a.strang_error + a.ifrk4_error
        ),
    ));
    lines
}

fn c2_scaling() -> Vec<Line> {
    let mut out = Vec::new();
    let g = Grid::new(60.0, 512).unwrap();
    let u = make_gaussian(&g, 1.0, 2.0, 0.3, 0.0).unwrap();
    let cfg = EvolutionConfig::quartic(1.0, 1e-3, 0.05);
    let r = check_scaling_covariance(&u, 2.0, &cfg).unwrap();
    out.push(line(
        r.defect <= r.bound(),
        format!("covariance defect {:.3e} <= discretization error {:.3e}", r.defect, r.bound()),
    ));
    let local = make_gaussian(&g, 1.0, 2.0, 0.0, 0.0).unwrap();
    let mut worst = 0.0f64;
    for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let base = sobolev_norm(&local, s, Weight::Homogeneous);
        for lam in [0.5, 2.0, 3.0] {
            let (v, _) = scale_transform(&local, lam).unwrap();
            let e = (sobolev_norm(&v, s, Weight::Homogeneous) / base).ln() / f64::ln(lam);
            worst = worst.max((e - (s + 1.5)).abs());
        }
    }
    out.push(line(worst <= 1e-6, format!("homogeneous exponent s + 3/2, worst error {worst:.2e} (want <= 1e-6)")));
    let base = sobolev_norm(&local, -1.5, Weight::Homogeneous);
    let worst_c = [0.5, 2.0, 3.0, 10.0]
        .iter()
        .map(|&lam| {
            let (v, _) = scale_transform(&local, lam).unwrap();
            (sobolev_norm(&v, -1.5, Weight::Homogeneous) / base - 1.0).abs()
        })
        .fold(0.0, f64::max);
    out.push(line(worst_c <= 1e-8, format!("critical s = -3/2 ratio off 1 by {worst_c:.2e} (want <= 1e-8)")));
    out
}

fn c3_resonance() -> Vec<Line> {
    default_run(Kind::ResonanceCheck)
}

fn c4_derivative() -> Vec<Line> {
    let (report, mut lines) = harness(r#"{"kind": "derivative-identity"}"#);
    let c = report.result.summary["constant"].as_f64().unwrap_or(f64::NAN);
    let states = report.result.summary["states"].as_u64().unwrap_or(0);
    lines.push(line(states >= 10, format!("{states} random states (want >= 10)")));
    lines.push(line(((c - 4.0) / 4.0).abs() <= 1e-3, format!("fitted constant c = {c:.9} (expected 4)")));
    lines
}

fn c5_almost_conservation() -> Vec<Line> {
    let (report, mut lines) = harness(r#"{"kind": "imethod-almost"}"#);
    let ns = report.manifest.spec["params"]["n"].as_array().map_or(0, Vec::len);
    lines.push(line(ns >= 5, format!("{ns} dyadic values of N (want >= 5)")));
    lines
}

fn c6_trilinear() -> Vec<Line> {
    default_run(Kind::TrilinearCounterexample)
}

fn c7_decay() -> Vec<Line> {
    default_run(Kind::DispersiveDecay)
}

fn c8_bilinear() -> Vec<Line> {
    default_run(Kind::BilinearFit)
}

fn c9_admissibility() -> Vec<Line> {
    let r = |n: i64, d: i64| Rational64::new(n, d);
    let fin = |n: i64| Exponent::int(n);
    let inf = Exponent::Infinite;
    let mut out = vec![
        line(strichartz_admissible(fin(4), inf, r(1, 1)), "(4, ∞, α = 1) admissible"),
        line(strichartz_admissible(fin(8), inf, r(0, 1)), "(8, ∞, α = 0) admissible"),
    ];
    let endpoint = (0..=12).all(|k| strichartz_admissible(inf, fin(2), r(k, 12)));
    out.push(line(endpoint, "(∞, 2, α) admissible for every α in [0, 1] on a 1/12 grid"));
    let rejected = [
        (fin(4), inf, r(0, 1)),
        (fin(8), inf, r(1, 1)),
        (fin(8), fin(2), r(0, 1)),
        (fin(6), fin(6), r(1, 2)),
        (inf, fin(4), r(1, 1)),
        (fin(3), fin(6), r(1, 1)),
    ];
    let all_rejected = rejected.iter().all(|&(q, rr, a)| !strichartz_admissible(q, rr, a));
    out.push(line(all_rejected, format!("{} pairs violating the relation rejected", rejected.len())));
    let q16 = strichartz_admissible(fin(16), fin(4), r(0, 1));
    out.push(line(q16, "(16, 4, α = 0) on the relation is admissible"));
    out
}

fn c10_illposedness() -> Vec<Line> {
    let mut lines = default_run(Kind::IllposedError);
    let (report, sep) = harness(r#"{"kind": "illposed-separation"}"#);
    lines.extend(sep);
    let s = report.manifest.spec["params"]["s"].as_f64().unwrap_or(f64::NAN);
    lines.push(line(s == -0.75, format!("separation run at s = {s}")));
    lines
}

fn c11_modulation() -> Vec<Line> {
    default_run(Kind::ModulationCheck)
}

fn c12_gwp() -> Vec<Line> {
    let e = gwp_exponents(Rational64::new(-1, 2)).unwrap();
    let mut lines = vec![
        line(e.lambda == Rational64::new(1, 2), format!("λ ~ N^{} (want N^1/2)", e.lambda)),
        line(e.time == Rational64::new(1, 1), format!("T ~ N^{} (want N)", e.time)),
        line(e.growth == Rational64::new(1, 2), format!("growth t^{} (want t^1/2)", e.growth)),
    ];
    let (report, harness_lines) = harness(r#"{"kind": "gwp-parameters", "params": {"s": "-1/2"}}"#);
    lines.extend(harness_lines);
    let g = report.result.summary["growth_exponent"].as_str().unwrap_or("").to_string();
    lines.push(line(g == "1/2", format!("report growth exponent \"{g}\"")));
    lines
}

fn c13_determinism() -> Vec<Line> {
    let doc = r#"{"kind": "derivative-identity", "seed": 11, "params": {"cutoff": 6, "active": 13, "states": 4}}"#;
    let runs: Vec<ReportDocument> = (0..2).map(|_| harness(doc).0).collect();
    let evolve = r#"{"kind": "evolve", "params": {"length": 80, "modes": 512, "dt": 1e-3, "t_end": 1, "stride": 50}}"#;
    let ev: Vec<ReportDocument> = (0..2).map(|_| harness(evolve).0).collect();
    let same = runs[0].files == runs[1].files && ev[0].files == ev[1].files;
    let mut lines = vec![line(
        same && !runs[0].files.is_empty(),
        format!(
            "CSV digests identical across runs ({} / {})",
            &runs[0].files[0].sha256[..12],
            &ev[0].files[0].sha256[..12]
        ),
    )];
    let bad = r#"{"kind": "evolve", "seed": "x", "params": {"modes": 4095, "dt": 0, "scheme": "euler",
                  "orientation": 2, "typo": 1}, "tolerances": {"mass_drift": -1}}"#;
    let errs = parse_str(bad, false, None, true).unwrap_err().0;
    let want = ["seed", "params.modes", "params.dt", "params.scheme", "params.orientation", "params.typo", "tolerances.mass_drift"];
    let all = want.iter().all(|w| errs.iter().any(|e| e.starts_with(w)));
    lines.push(line(all, format!("{} validation errors reported in one pass (want {})", errs.len(), want.len())));
    lines
}

type Criterion = (u32, &'static str, fn() -> Vec<Line>);

const CRITERIA: [Criterion; 13] = [
    (1, "conservation", c1_conservation),
    (2, "scaling covariance", c2_scaling),
    (3, "resonance algebra", c3_resonance),
    (4, "I-method derivative identities", c4_derivative),
    (5, "almost conservation", c5_almost_conservation),
    (6, "trilinear counterexample", c6_trilinear),
    (7, "dispersive decay", c7_decay),
    (8, "bilinear Strichartz", c8_bilinear),
    (9, "Strichartz admissibility", c9_admissibility),
    (10, "ill-posedness construction", c10_illposedness),
    (11, "modulation norms", c11_modulation),
    (12, "GWP arithmetic", c12_gwp),
    (13, "harness determinism", c13_determinism),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(id, name, _)| {
            filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()) || id.to_string() == *f)
        })
        .collect();
    let mut failed = Vec::new();
    for &(id, name, f) in &selected {
        let start = Instant::now();
        let lines = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![line(false, format!("panicked: {msg}"))]
        });
        let ok = !lines.is_empty() && lines.iter().all(|l| l.ok);
        println!(
            "{} criterion {id:>2}: {name} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for l in &lines {
            println!("       {} {}", if l.ok { " " } else { "!" }, l.text);
        }
        if !ok {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        selected.len() - failed.len(),
        selected.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
