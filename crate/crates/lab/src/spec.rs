//! Experiment specifications: JSON or TOML documents with a kind, a seed, a `params` table and
//! a `tolerances` table.
//!
//! ```toml
//! kind = "bilinear-fit"
//! seed = 0
//! [params]
//! n1 = 2.0
//! n2 = [32.0, 64.0, 128.0, 256.0, 512.0]
//! [tolerances]
//! slope = 0.15
//! ```
//!
//! Every missing key takes its default and is echoed back in [`ExperimentSpec::resolved`],
//! so a resolved document reproduces the run on its own. Validation collects every problem
//! before giving up.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nls4_core::dispersive::BilinearOptions;
use nls4_core::illposed::{ErrorDecaySetup, ProfileShape, SeparationSetup};
use nls4_core::imethod::{AlmostConservationSetup, Interpolation};
use nls4_core::resonance::TrilinearOptions;
use nls4_core::Grid;
use num_rational::Rational64;
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Evolve,
    ImethodAlmost,
    DerivativeIdentity,
    ResonanceCheck,
    TrilinearCounterexample,
    DispersiveDecay,
    BilinearFit,
    LocalSmoothing,
    ModulationCheck,
    IllposedError,
    IllposedSeparation,
    GwpParameters,
}

impl Kind {
    pub const ALL: [Kind; 12] = [
        Kind::Evolve,
        Kind::ImethodAlmost,
        Kind::DerivativeIdentity,
        Kind::ResonanceCheck,
        Kind::TrilinearCounterexample,
        Kind::DispersiveDecay,
        Kind::BilinearFit,
        Kind::LocalSmoothing,
        Kind::ModulationCheck,
        Kind::IllposedError,
        Kind::IllposedSeparation,
        Kind::GwpParameters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::ImethodAlmost => "imethod-almost",
            Kind::DerivativeIdentity => "derivative-identity",
            Kind::ResonanceCheck => "resonance-check",
            Kind::TrilinearCounterexample => "trilinear-counterexample",
            Kind::DispersiveDecay => "dispersive-decay",
            Kind::BilinearFit => "bilinear-fit",
            Kind::LocalSmoothing => "local-smoothing",
            Kind::ModulationCheck => "modulation-check",
            Kind::IllposedError => "illposed-error",
            Kind::IllposedSeparation => "illposed-separation",
            Kind::GwpParameters => "gwp-parameters",
        }
    }

    pub fn valid_names() -> String {
        Kind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Kind, String> {
        Kind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`; valid kinds: {}", Kind::valid_names()))
    }
}

/// Seed used when a document does not name one.
pub const DEFAULT_SEED: u64 = 7;

/// All problems found in a document.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecErrors(pub Vec<String>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveParams {
    pub length: f64,
    pub modes: usize,
    pub quartic: bool,
    pub orientation: f64,
    pub kappa: f64,
    pub dt: f64,
    pub t_end: f64,
    pub ifrk4: bool,
    pub stride: usize,
    pub norms: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
    pub carrier: f64,
    pub center: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeParams {
    pub length: f64,
    pub modes: usize,
    pub cutoff: usize,
    pub n: f64,
    pub s: f64,
    pub states: usize,
    pub active: usize,
    pub amplitude: f64,
    pub h: f64,
    pub orientation: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrilinearParams {
    pub s: Vec<f64>,
    pub n: Vec<f64>,
    pub options: TrilinearOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayParams {
    pub alpha: Vec<f64>,
    pub length: f64,
    pub modes: usize,
    pub width: f64,
    pub times: Vec<f64>,
    pub kernel_t: Vec<f64>,
    pub kernel_x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilinearParams {
    pub n1: f64,
    pub n2: Vec<f64>,
    pub options: BilinearOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingParams {
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub length: f64,
    pub modes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationParams {
    pub s: f64,
    pub length: f64,
    pub modes: usize,
    pub amplitude: f64,
    pub frequency: f64,
    pub width: f64,
    pub center: f64,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub widths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IllposedErrorParams {
    pub setup: ErrorDecaySetup,
    pub residual_n: f64,
    pub residual_time: f64,
    pub residual_steps: Vec<f64>,
    pub x_modes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GwpParams {
    pub s: Rational64,
    pub t: f64,
    pub norm: f64,
    pub eps0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Evolve(EvolveParams),
    ImethodAlmost(AlmostConservationSetup),
    DerivativeIdentity(DerivativeParams),
    ResonanceCheck { samples: usize },
    TrilinearCounterexample(TrilinearParams),
    DispersiveDecay(DecayParams),
    BilinearFit(BilinearParams),
    LocalSmoothing(SmoothingParams),
    ModulationCheck(ModulationParams),
    IllposedError(IllposedErrorParams),
    IllposedSeparation(SeparationSetup),
    GwpParameters(GwpParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub seed: u64,
    pub output: Option<String>,
    pub params: Params,
    /// Pass/fail limits by name.
    pub tolerances: Map<String, Value>,
    /// The full document with defaults filled in.
    pub resolved: Value,
    /// Unknown keys found outside strict mode.
    pub warnings: Vec<String>,
}

impl ExperimentSpec {
    /// Apply command-line overrides, keeping the resolved echo in step.
    pub fn with_overrides(mut self, seed: Option<u64>, emit_snapshots: bool) -> ExperimentSpec {
        if let Some(seed) = seed {
            self.seed = seed;
            self.resolved["seed"] = json!(seed);
        }
        if emit_snapshots {
            if let Params::IllposedSeparation(setup) = &mut self.params {
                setup.keep_snapshots = true;
                self.resolved["params"]["emit_snapshots"] = json!(true);
            }
        }
        self
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .and_then(Value::as_f64)
            .unwrap_or_else(|| panic!("tolerance `{name}` is declared by the schema"))
    }
}

/// Read a spec file; the format follows the extension (`.toml`, otherwise JSON).
pub fn parse_spec(path: &Path, kind: Option<Kind>, strict: bool) -> Result<ExperimentSpec, SpecErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SpecErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    parse_str(&text, toml, kind, strict)
}

pub fn parse_str(text: &str, toml: bool, kind: Option<Kind>, strict: bool) -> Result<ExperimentSpec, SpecErrors> {
    let doc: Value = if toml {
        let t: toml::Table = toml::from_str(text).map_err(|e| SpecErrors(vec![format!("TOML syntax: {e}")]))?;
        serde_json::to_value(t).map_err(|e| SpecErrors(vec![format!("TOML conversion: {e}")]))?
    } else {
        serde_json::from_str(text).map_err(|e| SpecErrors(vec![format!("JSON syntax: {e}")]))?
    };
    from_value(&doc, kind, strict)
}

/// Validate a parsed document. `kind` (from the command line) wins over a missing `kind` key
/// and must agree with a present one.
pub fn from_value(doc: &Value, kind: Option<Kind>, strict: bool) -> Result<ExperimentSpec, SpecErrors> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let Some(mut top) = doc.as_object() else {
        return Err(SpecErrors(vec!["the document must be a table".into()]));
    };
    // A report is accepted in place of the spec file that produced it.
    if let Some(spec) = top.get("manifest").and_then(|m| m.get("spec")).and_then(Value::as_object) {
        top = spec;
    }
    let declared = match top.get("kind") {
        None => None,
        Some(Value::String(s)) => match s.parse::<Kind>() {
            Ok(k) => Some(k),
            Err(e) => {
                errors.push(format!("kind: {e}"));
                None
            }
        },
        Some(_) => {
            errors.push("kind: must be a string".into());
            None
        }
    };
    let kind = match (kind, declared) {
        (Some(a), Some(b)) if a != b => {
            errors.push(format!("kind: document declares `{b}` but `{a}` was requested"));
            a
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            if !errors.iter().any(|e| e.starts_with("kind:")) {
                errors.push(format!("kind: missing; valid kinds: {}", Kind::valid_names()));
            }
            return Err(SpecErrors(errors));
        }
    };
    let seed = match top.get("seed") {
        None => DEFAULT_SEED,
        Some(v) => v.as_u64().unwrap_or_else(|| {
            errors.push(format!("seed: must be a non-negative integer, got {v}"));
            0
        }),
    };
    let output = match top.get("output") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(v) => {
            errors.push(format!("output: must be a string, got {v}"));
            None
        }
    };
    for key in top.keys() {
        if !["kind", "seed", "output", "params", "tolerances"].contains(&key.as_str()) {
            report_unknown(&mut errors, &mut warnings, strict, key.clone());
        }
    }

    let mut params = Reader::new("params", top.get("params"), &mut errors);
    let parsed = read_params(kind, &mut params);
    let params_resolved = params.finish(strict, &mut warnings);
    let mut tol = Reader::new("tolerances", top.get("tolerances"), &mut errors);
    read_tolerances(kind, &mut tol);
    let tol_resolved = tol.finish(strict, &mut warnings);

    if !errors.is_empty() {
        return Err(SpecErrors(errors));
    }
    let mut resolved = json!({
        "kind": kind.name(),
        "seed": seed,
        "params": Value::Object(params_resolved),
        "tolerances": Value::Object(tol_resolved.clone()),
    });
    if let Some(o) = &output {
        resolved["output"] = Value::String(o.clone());
    }
    Ok(ExperimentSpec {
        kind,
        seed,
        output,
        params: parsed,
        tolerances: tol_resolved,
        resolved,
        warnings,
    })
}

fn report_unknown(errors: &mut Vec<String>, warnings: &mut Vec<String>, strict: bool, key: String) {
    let msg = format!("{key}: unknown key");
    if strict {
        errors.push(msg);
    } else {
        warnings.push(msg);
    }
}

/// Typed access to one table; records the resolved value of every key it reads.
struct Reader<'a> {
    section: &'static str,
    table: Map<String, Value>,
    used: BTreeSet<String>,
    resolved: Map<String, Value>,
    errors: &'a mut Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(section: &'static str, v: Option<&Value>, errors: &'a mut Vec<String>) -> Reader<'a> {
        let table = match v {
            None => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(other) => {
                errors.push(format!("{section}: must be a table, got {other}"));
                Map::new()
            }
        };
        Reader {
            section,
            table,
            used: BTreeSet::new(),
            resolved: Map::new(),
            errors,
        }
    }

    fn err(&mut self, key: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{}.{key}: {msg}", self.section));
    }

    fn raw(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_string());
        self.table.get(key).cloned()
    }

    fn f64_with(&mut self, key: &str, default: f64, check: impl Fn(f64) -> Option<String>) -> f64 {
        let v = match self.raw(key) {
            None => default,
            Some(v) => match v.as_f64() {
                Some(x) => x,
                None => {
                    self.err(key, format!("expected a number, got {v}"));
                    default
                }
            },
        };
        if let Some(msg) = check(v) {
            self.err(key, msg);
        }
        self.resolved.insert(key.into(), json!(v));
        v
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.f64_with(key, default, |x| (!x.is_finite()).then(|| format!("must be finite, got {x}")))
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        self.f64_with(key, default, |x| {
            (!(x.is_finite() && x > 0.0)).then(|| format!("must be positive, got {x}"))
        })
    }

    fn sign(&mut self, key: &str, default: f64) -> f64 {
        self.f64_with(key, default, |x| (x != 1.0 && x != -1.0).then(|| format!("must be +1 or -1, got {x}")))
    }

    fn usize_with(&mut self, key: &str, default: usize, check: impl Fn(usize) -> Option<String>) -> usize {
        let v = match self.raw(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(x) => x as usize,
                None => {
                    self.err(key, format!("expected a non-negative integer, got {v}"));
                    default
                }
            },
        };
        if let Some(msg) = check(v) {
            self.err(key, msg);
        }
        self.resolved.insert(key.into(), json!(v));
        v
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        self.usize_with(key, default, |x| (x == 0).then(|| "must be positive".to_string()))
    }

    fn list_with(&mut self, key: &str, default: &[f64], check: impl Fn(&[f64]) -> Option<String>) -> Vec<f64> {
        let v = match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(items)) => {
                let parsed: Option<Vec<f64>> = items.iter().map(Value::as_f64).collect();
                parsed.unwrap_or_else(|| {
                    self.err(key, "expected a list of numbers");
                    default.to_vec()
                })
            }
            Some(other) => {
                self.err(key, format!("expected a list of numbers, got {other}"));
                default.to_vec()
            }
        };
        if let Some(msg) = check(&v) {
            self.err(key, msg);
        }
        self.resolved.insert(key.into(), json!(v));
        v
    }

    fn positive_list(&mut self, key: &str, default: &[f64], min_len: usize) -> Vec<f64> {
        self.list_with(key, default, |v| {
            if v.len() < min_len {
                Some(format!("needs at least {min_len} entries, got {}", v.len()))
            } else if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                Some("entries must be positive".into())
            } else {
                None
            }
        })
    }

    fn choice(&mut self, key: &str, default: &str, choices: &[&str]) -> String {
        let v = match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s,
            Some(other) => {
                self.err(key, format!("expected a string, got {other}"));
                default.to_string()
            }
        };
        if !choices.contains(&v.as_str()) {
            self.err(key, format!("`{v}` is not one of {}", choices.join(", ")));
        }
        self.resolved.insert(key.into(), json!(v));
        v
    }

    fn flag(&mut self, key: &str, default: bool) -> bool {
        let v = match self.raw(key) {
            None => default,
            Some(Value::Bool(b)) => b,
            Some(other) => {
                self.err(key, format!("expected true or false, got {other}"));
                default
            }
        };
        self.resolved.insert(key.into(), json!(v));
        v
    }

    /// Grid length and mode count, checked together.
    fn grid(&mut self, length_default: f64, modes_default: usize) -> (f64, usize) {
        let length = self.positive("length", length_default);
        let modes = self.usize_with("modes", modes_default, |_| None);
        if let Err(e) = Grid::new(length.max(f64::MIN_POSITIVE), modes) {
            self.err("modes", e);
        }
        (length, modes)
    }

    fn finish(self, strict: bool, warnings: &mut Vec<String>) -> Map<String, Value> {
        let unknown: Vec<String> = self
            .table
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(|k| format!("{}.{k}", self.section))
            .collect();
        for k in unknown {
            report_unknown(self.errors, warnings, strict, k);
        }
        self.resolved
    }
}

fn read_params(kind: Kind, r: &mut Reader) -> Params {
    match kind {
        Kind::Evolve => {
            let (length, modes) = r.grid(200.0, 4096);
            let equation = r.choice("equation", "quartic", &["quartic", "cubic"]);
            let scheme = r.choice("scheme", "strang", &["strang", "ifrk4"]);
            let dt = r.positive("dt", 1e-4);
            let t_end = r.positive("t_end", 10.0);
            if dt > t_end {
                r.err("dt", format!("exceeds t_end = {t_end}"));
            }
            Params::Evolve(EvolveParams {
                length,
                modes,
                quartic: equation == "quartic",
                orientation: r.sign("orientation", -1.0),
                kappa: r.f64("kappa", 1.0),
                dt,
                t_end,
                ifrk4: scheme == "ifrk4",
                stride: r.count("stride", 1000),
                norms: r.list_with("norms", &[0.0, -0.5], |v| {
                    v.iter().any(|x| !x.is_finite()).then(|| "entries must be finite".into())
                }),
                amplitude: r.positive("amplitude", 1.0),
                width: r.positive("width", 4.0),
                carrier: r.f64("carrier", 0.0),
                center: r.f64("center", 0.0),
            })
        }
        Kind::ImethodAlmost => {
            let d = AlmostConservationSetup::default();
            let (length, modes) = r.grid(d.length, d.modes);
            let cutoff = r.usize_with("cutoff", d.cutoff, |k| {
                (2 * k + 1 > modes).then(|| format!("window 2K+1 = {} exceeds the {modes} grid modes", 2 * k + 1))
            });
            let dt = r.positive("dt", d.dt);
            let t_end = r.positive("t_end", d.t_end);
            let s = r.f64_with("s", d.s, |s| (s > 0.0).then(|| format!("must be ≤ 0, got {s}")));
            let interp = r.choice("interpolation", "log-cubic", &["log-cubic", "smooth"]);
            Params::ImethodAlmost(AlmostConservationSetup {
                length,
                modes,
                cutoff,
                amplitude: r.positive("amplitude", d.amplitude),
                width: r.positive("width", d.width),
                decay: r.f64("decay", d.decay),
                kmax: r.positive("kmax", d.kmax),
                dt,
                t_end,
                stride: r.count("stride", d.stride),
                seed: 0,
                ns: r.list_with("n", &d.ns, |v| {
                    if v.len() < 5 {
                        Some(format!("needs at least 5 values of N, got {}", v.len()))
                    } else if v.iter().any(|x| !(*x >= 1.0)) {
                        Some("every N must be ≥ 1".into())
                    } else {
                        None
                    }
                }),
                s,
                interp: if interp == "smooth" {
                    Interpolation::Smooth
                } else {
                    Interpolation::LogCubic
                },
            })
        }
        Kind::DerivativeIdentity => {
            let (length, modes) = r.grid(4.0 * std::f64::consts::PI, 64);
            let cutoff = r.usize_with("cutoff", 12, |k| {
                (!(1..=12).contains(&k)).then(|| format!("must lie in 1..=12, got {k}"))
            });
            if 2 * cutoff + 1 > modes {
                r.err("cutoff", format!("window 2K+1 exceeds the {modes} grid modes"));
            }
            Params::DerivativeIdentity(DerivativeParams {
                length,
                modes,
                cutoff,
                n: r.f64_with("n", 1.0, |n| (!(n >= 1.0)).then(|| format!("must be ≥ 1, got {n}"))),
                s: r.f64_with("s", -0.5, |s| (s > 0.0).then(|| format!("must be ≤ 0, got {s}"))),
                states: r.usize_with("states", 10, |n| (n < 2).then(|| "needs at least 2 states".into())),
                active: r.count("active", 25),
                amplitude: r.positive("amplitude", 0.3),
                h: r.positive("h", 1e-5),
                orientation: r.sign("orientation", -1.0),
                kappa: r.sign("kappa", 1.0),
            })
        }
        Kind::ResonanceCheck => Params::ResonanceCheck {
            samples: r.count("samples", 1_000_000),
        },
        Kind::TrilinearCounterexample => {
            let d = TrilinearOptions::default();
            Params::TrilinearCounterexample(TrilinearParams {
                s: r.list_with("s", &[0.0, -0.5, -1.0], |v| v.is_empty().then(|| "needs at least one s".into())),
                n: r.list_with("n", &[8.0, 16.0, 32.0, 64.0, 128.0], |v| {
                    if v.len() < 4 {
                        Some(format!("needs at least 4 values of N, got {}", v.len()))
                    } else if v.iter().any(|x| !(*x >= 1.0)) {
                        Some("every N must be ≥ 1".into())
                    } else {
                        None
                    }
                }),
                options: TrilinearOptions {
                    band_modes: r.usize_with("band_modes", d.band_modes, |j| {
                        (j < 4).then(|| format!("must be ≥ 4, got {j}"))
                    }),
                    time_nodes: r.count("time_nodes", d.time_nodes),
                },
            })
        }
        Kind::DispersiveDecay => {
            let (length, modes) = r.grid(2f64.powi(21), 1 << 22);
            Params::DispersiveDecay(DecayParams {
                alpha: r.list_with("alpha", &[0.0, 1.0], |v| {
                    if v.is_empty() {
                        Some("needs at least one α".into())
                    } else if v.iter().any(|a| !(0.0..=1.0).contains(a)) {
                        Some("α must lie in [0, 1]".into())
                    } else {
                        None
                    }
                }),
                length,
                modes,
                width: r.positive("width", 3.0),
                times: r.positive_list(
                    "times",
                    &(0..6).map(|j| 100.0 * 2f64.powi(j)).collect::<Vec<_>>(),
                    4,
                ),
                kernel_t: r.positive_list("kernel_t", &[0.01, 0.1, 1.0, 10.0, 100.0], 1),
                kernel_x: r.list_with("kernel_x", &[-3.0, -1.0, -0.3, 0.0, 0.5, 2.0, 5.0], |v| {
                    v.is_empty().then(|| "needs at least one point".into())
                }),
            })
        }
        Kind::BilinearFit => {
            let d = BilinearOptions::default();
            let (length, modes) = r.grid(d.length, d.modes);
            Params::BilinearFit(BilinearParams {
                n1: r.positive("n1", 2.0),
                n2: r.positive_list("n2", &[32.0, 64.0, 128.0, 256.0, 512.0], 4),
                options: BilinearOptions {
                    length,
                    modes,
                    width: r.positive("width", d.width),
                    snapshots: r.usize_with("snapshots", d.snapshots, |n| {
                        (n < 3).then(|| format!("needs at least 3 snapshots, got {n}"))
                    }),
                    enforce_separation: r.flag("enforce_separation", d.enforce_separation),
                },
            })
        }
        Kind::LocalSmoothing => {
            let (length, modes) = r.grid(40.0, 8192);
            Params::LocalSmoothing(SmoothingParams {
                beta: r.f64_with("beta", 1.5, |b| (!(b >= 0.0)).then(|| format!("must be ≥ 0, got {b}"))),
                lambdas: r.positive_list("lambdas", &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0], 2),
                length,
                modes,
            })
        }
        Kind::ModulationCheck => {
            let (length, modes) = r.grid(2048.0, 65536);
            Params::ModulationCheck(ModulationParams {
                s: r.f64("s", -0.5),
                length,
                modes,
                amplitude: r.positive("amplitude", 1.0),
                frequency: r.positive("frequency", 32.0),
                width: r.positive("width", 4.0),
                center: r.f64("center", 0.0),
                amplitudes: r.positive_list("amplitudes", &[0.25, 0.5, 1.0, 2.0, 4.0], 4),
                frequencies: r.positive_list("frequencies", &[8.0, 16.0, 32.0, 64.0], 4),
                widths: r.positive_list("widths", &[2.0, 4.0, 8.0, 16.0, 32.0], 4),
            })
        }
        Kind::IllposedError => {
            let d = ErrorDecaySetup::default();
            let profile = r.choice("profile", "soliton", &["soliton", "gaussian"]);
            let a = r.positive("a", 1.0);
            let gauss_amp = r.positive("gaussian_amplitude", 0.1);
            let gauss_width = r.positive("gaussian_width", 2.0);
            let kappa = r.sign("kappa", d.kappa);
            if profile == "soliton" && kappa != -1.0 {
                r.err("kappa", "the soliton profile needs κ = -1");
            }
            let window = r.positive("window", d.window);
            let dt = r.positive("dt", d.dt);
            if dt > window {
                r.err("dt", format!("exceeds the window {window}"));
            }
            let ns = r.list_with("n", &d.ns, |v| {
                if v.len() < 4 {
                    Some(format!("needs at least 4 carriers, got {}", v.len()))
                } else if v.iter().any(|x| !(*x >= 8.0)) {
                    Some("every carrier N must be ≥ 8".into())
                } else {
                    None
                }
            });
            let (y_length, y_modes) = {
                let l = r.positive("y_length", d.y_length);
                let m = r.usize_with("y_modes", d.y_modes, |_| None);
                if let Err(e) = Grid::new(l.max(f64::MIN_POSITIVE), m) {
                    r.err("y_modes", e);
                }
                (l, m)
            };
            let setup = ErrorDecaySetup {
                ns,
                s: r.f64("s", d.s),
                window,
                kappa,
                profile: if profile == "gaussian" {
                    ProfileShape::Gaussian {
                        amplitude: gauss_amp,
                        width: gauss_width,
                    }
                } else {
                    ProfileShape::Soliton { a }
                },
                y_length,
                y_modes,
                dt,
                stride: r.count("stride", d.stride),
            };
            Params::IllposedError(IllposedErrorParams {
                setup,
                residual_n: r.f64_with("residual_n", 8.0, |n| (!(n >= 8.0)).then(|| format!("must be ≥ 8, got {n}"))),
                residual_time: r.f64_with("residual_time", 0.2, |t| (!(t >= 0.0)).then(|| format!("must be ≥ 0, got {t}"))),
                residual_steps: r.positive_list("residual_steps", &[1e-3, 1e-4, 1e-5], 2),
                x_modes: r.usize_with("x_modes", 4096, |m| {
                    Grid::new(1.0, m).err().map(|e| e.to_string())
                }),
            })
        }
        Kind::IllposedSeparation => {
            let d = SeparationSetup::default();
            let amp = |r: &mut Reader, key: &str, default: f64| {
                r.f64_with(key, default, |a| (!(0.5..=2.0).contains(&a)).then(|| format!("must lie in [1/2, 2], got {a}")))
            };
            let a = amp(r, "a", d.a);
            let a_prime = amp(r, "a_prime", d.a_prime);
            let window = match r.raw("window") {
                None | Some(Value::Null) => None,
                Some(v) => match v.as_f64() {
                    Some(w) if w > 0.0 => Some(w),
                    _ => {
                        r.err("window", format!("must be a positive number, got {v}"));
                        None
                    }
                },
            };
            r.resolved.insert("window".into(), json!(window));
            let y_length = r.positive("y_length", d.y_length);
            let y_modes = r.usize_with("y_modes", d.y_modes, |_| None);
            if let Err(e) = Grid::new(y_length.max(f64::MIN_POSITIVE), y_modes) {
                r.err("y_modes", e);
            }
            Params::IllposedSeparation(SeparationSetup {
                a,
                a_prime,
                s: r.f64_with("s", d.s, |s| (!(s > -1.5)).then(|| format!("must exceed -3/2, got {s}"))),
                n: r.f64_with("n", d.n, |n| (!(n >= 8.0)).then(|| format!("must be ≥ 8, got {n}"))),
                window,
                y_length,
                y_modes,
                dt: r.positive("dt", d.dt),
                stride: r.count("stride", d.stride),
                keep_snapshots: r.flag("emit_snapshots", false),
            })
        }
        Kind::GwpParameters => {
            let s = match r.raw("s") {
                None => Rational64::new(-1, 2),
                Some(Value::String(txt)) => txt.trim().parse::<Rational64>().unwrap_or_else(|e| {
                    r.err("s", format!("expected a fraction like \"-1/2\": {e}"));
                    Rational64::new(-1, 2)
                }),
                Some(Value::Number(n)) if n.is_i64() => Rational64::from_integer(n.as_i64().unwrap_or(0)),
                Some(other) => {
                    r.err("s", format!("expected a fraction string like \"-1/2\", got {other}"));
                    Rational64::new(-1, 2)
                }
            };
            r.resolved.insert("s".into(), json!(s.to_string()));
            Params::GwpParameters(GwpParams {
                s,
                t: r.positive("t", 1e4),
                norm: r.positive("norm", 1.0),
                eps0: r.positive("eps0", 0.5),
            })
        }
    }
}

fn read_tolerances(kind: Kind, r: &mut Reader) {
    let mut tol = |key: &str, default: f64| {
        r.f64_with(key, default, |x| (!(x.is_finite() && x >= 0.0)).then(|| format!("must be ≥ 0, got {x}")));
    };
    match kind {
        Kind::Evolve => {
            tol("mass_drift", 1e-8);
            tol("energy_drift", 1e-6);
        }
        Kind::ImethodAlmost => {
            tol("slope4_target", 3.0);
            tol("slope4", 1.0);
            tol("min_gap", 1.5);
        }
        Kind::DerivativeIdentity => {
            tol("defect2", 1e-6);
            tol("constant_spread", 1e-3);
        }
        Kind::ResonanceCheck => tol("residual", 1e-6),
        Kind::TrilinearCounterexample => tol("slope", 0.15),
        Kind::DispersiveDecay => {
            tol("slope_alpha0", 0.03);
            tol("slope_alpha1", 0.05);
            tol("self_similarity", 1e-5);
            tol("residual_rms", 0.05);
        }
        Kind::BilinearFit => {
            tol("slope", 0.15);
            tol("residual_rms", 0.05);
        }
        Kind::LocalSmoothing => tol("slope", 0.05),
        Kind::ModulationCheck => tol("slope", 0.05),
        Kind::IllposedError => {
            tol("slope", 0.4);
            tol("residual_defect", 1e-3);
        }
        Kind::IllposedSeparation => {
            tol("initial_ratio", 0.1);
            tol("sup_ratio", 0.5);
        }
        Kind::GwpParameters => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = parse_str(r#"{"kind": "evolve"}"#, false, None, true).unwrap();
        assert_eq!(s.kind, Kind::Evolve);
        assert_eq!(s.resolved["params"]["modes"], json!(4096));
        assert_eq!(s.resolved["tolerances"]["mass_drift"], json!(1e-8));
        // The resolved document parses to the same spec.
        let again = from_value(&s.resolved, None, true).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn all_errors_in_one_pass() {
        let doc = r#"{"kind": "evolve", "params": {"modes": 4095, "dt": -1, "scheme": "euler", "bogus": 1},
                      "extra": true}"#;
        let e = parse_str(doc, false, None, true).unwrap_err();
        let text = e.to_string();
        for needle in ["params.modes", "params.dt", "params.scheme", "params.bogus", "extra"] {
            assert!(text.contains(needle), "missing {needle} in {text}");
        }
        // Outside strict mode unknown keys are only warnings.
        let e = parse_str(doc, false, None, false).unwrap_err();
        assert!(!e.to_string().contains("bogus"));
        let ok = parse_str(r#"{"kind": "evolve", "params": {"bogus": 1}}"#, false, None, false).unwrap();
        assert_eq!(ok.warnings, vec!["params.bogus: unknown key".to_string()]);
    }

    #[test]
    fn unknown_kind_lists_valid_kinds() {
        let e = parse_str(r#"{"kind": "teleport"}"#, false, None, true).unwrap_err();
        assert!(e.to_string().contains("illposed-separation"));
        let e = parse_str("{}", false, None, true).unwrap_err();
        assert!(e.to_string().contains("valid kinds"));
        let e = parse_str(r#"{"kind": "evolve"}"#, false, Some(Kind::BilinearFit), true).unwrap_err();
        assert!(e.to_string().contains("requested"));
    }

    #[test]
    fn toml_documents() {
        let doc = "kind = \"gwp-parameters\"\n[params]\ns = \"-1/2\"\nt = 100.0\n";
        let s = parse_str(doc, true, None, true).unwrap();
        match s.params {
            Params::GwpParameters(g) => assert_eq!(g.s, Rational64::new(-1, 2)),
            other => panic!("{other:?}"),
        }
        for k in Kind::ALL {
            let s = parse_str(&format!("kind = \"{k}\""), true, None, true).unwrap();
            assert_eq!(s.kind, k);
            assert_eq!(from_value(&s.resolved, None, true).unwrap(), s);
        }
    }
}
