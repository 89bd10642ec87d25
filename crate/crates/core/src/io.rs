//! On-disk formats: instance JSON and the outer-trace CSV.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::ProblemInstance;
use crate::prox::{LossBlock, SeparableLoss};
use crate::solver::OuterTrace;

pub const SCHEMA_VERSION: &str = "1.0";

/// Accept `major.minor` strings whose major matches ours.
pub fn check_schema_version(found: &str) -> Result<()> {
    let ours = SCHEMA_VERSION.split('.').next().unwrap_or("1");
    match found.split('.').next() {
        Some(major) if major == ours => Ok(()),
        _ => Err(Error::Format(format!(
            "unsupported schema version {found:?} (this build reads {ours}.x)"
        ))),
    }
}

/// Wire form of an instance: `A` is stored flat in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: String,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub loss_blocks: Vec<LossBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(inst: &ProblemInstance) -> Self {
        let a = inst.a();
        let mut flat = Vec::with_capacity(a.len());
        for row in a.row_iter() {
            flat.extend(row.iter().copied());
        }
        InstanceFile {
            version: SCHEMA_VERSION.into(),
            n: inst.n(),
            r: inst.r(),
            a: flat,
            b: inst.b().as_slice().to_vec(),
            loss_blocks: inst.loss().blocks().to_vec(),
            label: inst.label().map(str::to_owned),
        }
    }
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        check_schema_version(&f.version)?;
        if f.a.len() != f.n * f.r {
            return Err(Error::Format(format!(
                "field A has {} entries, expected r*n = {}*{} = {}",
                f.a.len(),
                f.r,
                f.n,
                f.r * f.n
            )));
        }
        if f.b.len() != f.r {
            return Err(Error::Format(format!(
                "field b has {} entries, expected r = {}",
                f.b.len(),
                f.r
            )));
        }
        let a = DMatrix::from_row_slice(f.r, f.n, &f.a);
        let loss = SeparableLoss::new(f.loss_blocks)?;
        ProblemInstance::new(a, DVector::from_vec(f.b), loss, f.label)
    }
}

pub fn instance_to_json(inst: &ProblemInstance) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from(inst))
        .expect("instance serialization cannot fail");
    s.push('\n');
    s
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| {
        Error::Format(format!("instance JSON, line {} column {}: {e}", e.line(), e.column()))
    })?;
    ProblemInstance::try_from(file)
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    instance_from_json(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_instance(path: &Path, inst: &ProblemInstance) -> Result<()> {
    std::fs::write(path, instance_to_json(inst))
        .map_err(|e| Error::Format(format!("cannot write {}: {e}", path.display())))
}

pub const TRACE_CSV_HEADER: &str = "k,l_total,rho,gap,phi,surrogate,seconds";

/// One row per outer iteration; `seconds` is written as 0 when `omit_timing`.
pub fn trace_csv(trace: &OuterTrace, omit_timing: bool) -> String {
    let mut out = format!("# dcra outer trace, schema {SCHEMA_VERSION}\n{TRACE_CSV_HEADER}\n");
    for r in &trace.records {
        let secs = if omit_timing { 0.0 } else { r.seconds };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k, r.l_total, r.rho, r.output.gap, r.phi, r.surrogate, secs
        )
        .expect("writing to a String cannot fail");
    }
    out
}
