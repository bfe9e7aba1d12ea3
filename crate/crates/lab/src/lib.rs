//! Experiment harness for `nls4-core`: spec parsing, dispatch, CSV artifacts and the report
//! document. The `4nls-lab` binary is a thin command-line layer over [`run::run`].

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod report;
pub mod run;
pub mod spec;

pub use report::{Check, ReportDocument, Status};
pub use run::{run, RunOptions};
pub use spec::{parse_spec, parse_str, ExperimentSpec, Kind, SpecErrors};

use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "NLS4_LAB_OUT";

/// `--out` if given, then the spec file's `output`, then `$NLS4_LAB_OUT/<kind>`, then `4nls-out/<kind>`.
pub fn output_dir(cli: Option<&Path>, spec: &ExperimentSpec) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(o) = &spec.output {
        return PathBuf::from(o);
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("4nls-out"));
    root.join(spec.kind.name())
}
