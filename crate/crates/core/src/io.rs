//! Serialization: traces as JSON Lines (header line, then one record per
//! iterate) and problems as single JSON documents with seed provenance.
//!
//! Vectors serialize as flat arrays, matrices as row-major nested arrays.
//! Floats round-trip exactly through serde_json, so a loaded trace passes
//! the same bit-for-bit integrity check as the in-memory original.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{AdmmTrace, LinkingConstraint, QuadraticProblem, Termination, TraceEntry};

fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_to_mat(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    n: usize,
    m: usize,
    p: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c_link: Vec<f64>,
    rho: f64,
    termination: Termination,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    k: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    s: Vec<f64>,
    r_norm: f64,
    s_norm: f64,
    attacked: bool,
    mitigated: bool,
}

/// Writes a trace as JSON Lines: one header object, then the records in
/// iterate order.
pub fn write_trace(trace: &AdmmTrace, out: &mut impl Write) -> Result<()> {
    let header = TraceHeader {
        n: trace.n,
        m: trace.m,
        p: trace.link.p(),
        a: mat_to_rows(&trace.link.a),
        b: mat_to_rows(&trace.link.b),
        c_link: trace.link.c_link.iter().copied().collect(),
        rho: trace.rho,
        termination: trace.termination,
    };
    serde_json::to_writer(&mut *out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for e in &trace.entries {
        let record = TraceRecord {
            k: e.k,
            x: e.x.iter().copied().collect(),
            z: e.z.iter().copied().collect(),
            u: e.u.iter().copied().collect(),
            r: e.r.iter().copied().collect(),
            s: e.s.iter().copied().collect(),
            r_norm: e.r_norm(),
            s_norm: e.s_norm(),
            attacked: e.attacked,
            mitigated: e.mitigated,
        };
        serde_json::to_writer(&mut *out, &record).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<AdmmTrace> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty trace stream".into()))??;
    let header: TraceHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Format(e.to_string()))?;
    let link = LinkingConstraint::new(
        rows_to_mat(&header.a)?,
        rows_to_mat(&header.b)?,
        DVector::from_vec(header.c_link.clone()),
    )?;
    link.check_dims(header.n, header.m)?;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
        entries.push(TraceEntry {
            k: rec.k,
            x: DVector::from_vec(rec.x),
            z: DVector::from_vec(rec.z),
            u: DVector::from_vec(rec.u),
            r: DVector::from_vec(rec.r),
            s: DVector::from_vec(rec.s),
            attacked: rec.attacked,
            mitigated: rec.mitigated,
            x_honest: None,
            x_received: None,
        });
    }
    let trace = AdmmTrace {
        n: header.n,
        m: header.m,
        rho: header.rho,
        link,
        entries,
        termination: header.termination,
    };
    trace.check_integrity()?;
    Ok(trace)
}

pub fn save_trace(trace: &AdmmTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<AdmmTrace> {
    read_trace(BufReader::new(File::open(path)?))
}

/// Where a stored problem came from, so any instance can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub instance: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemDoc {
    n: usize,
    m: usize,
    p: usize,
    p_cost: Vec<Vec<f64>>,
    c_cost: Vec<f64>,
    q_cost: Vec<Vec<f64>>,
    d_cost: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c_link: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn problem_to_json(
    problem: &QuadraticProblem,
    provenance: Option<Provenance>,
) -> Result<String> {
    let doc = ProblemDoc {
        n: problem.n(),
        m: problem.m(),
        p: problem.p(),
        p_cost: mat_to_rows(&problem.p_cost),
        c_cost: problem.c_cost.iter().copied().collect(),
        q_cost: mat_to_rows(&problem.q_cost),
        d_cost: problem.d_cost.iter().copied().collect(),
        a: mat_to_rows(&problem.link.a),
        b: mat_to_rows(&problem.link.b),
        c_link: problem.link.c_link.iter().copied().collect(),
        provenance,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn problem_from_json(json: &str) -> Result<(QuadraticProblem, Option<Provenance>)> {
    let doc: ProblemDoc = serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))?;
    let link = LinkingConstraint::new(
        rows_to_mat(&doc.a)?,
        rows_to_mat(&doc.b)?,
        DVector::from_vec(doc.c_link.clone()),
    )?;
    let problem = QuadraticProblem::new(
        rows_to_mat(&doc.p_cost)?,
        DVector::from_vec(doc.c_cost.clone()),
        rows_to_mat(&doc.q_cost)?,
        DVector::from_vec(doc.d_cost.clone()),
        link,
    )?;
    if (problem.n(), problem.m(), problem.p()) != (doc.n, doc.m, doc.p) {
        return Err(Error::Format(
            "declared dimensions disagree with matrix shapes".into(),
        ));
    }
    Ok((problem, doc.provenance))
}

pub fn save_problem(
    problem: &QuadraticProblem,
    provenance: Option<Provenance>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, problem_to_json(problem, provenance)?)?;
    Ok(())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<(QuadraticProblem, Option<Provenance>)> {
    problem_from_json(&std::fs::read_to_string(path)?)
}
