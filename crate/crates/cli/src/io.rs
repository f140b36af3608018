use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use qnbar::{Estimate, HeavyTrafficFamily, NetworkFile, ValidatedNetwork};

/// `estimator,value,std_error,batches`
#[derive(Debug, Serialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub batches: usize,
}

impl EstimateRow {
    pub fn new(estimator: impl Into<String>, e: &Estimate) -> Self {
        Self { estimator: estimator.into(), value: e.value, std_error: e.std_error, batches: e.batches }
    }

    pub fn exact(estimator: impl Into<String>, value: f64) -> Self {
        Self { estimator: estimator.into(), value, std_error: 0.0, batches: 0 }
    }
}

pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_csv<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(out)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<NetworkFile> {
    NetworkFile::load(path).with_context(|| format!("reading network file {}", path.display()))
}

pub fn load_family(path: &Path) -> Result<HeavyTrafficFamily> {
    Ok(load_file(path)?.require_family()?)
}

/// The file's network, or its heavy-traffic family at `r`.
pub fn load_network(path: &Path, r: Option<f64>) -> Result<ValidatedNetwork> {
    let file = load_file(path)?;
    Ok(match r {
        Some(r) => file.require_family()?.instantiate_at(r)?,
        None => file.network()?,
    })
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            match x {
                "inf" | "∞" => Ok(f64::INFINITY),
                _ => x.parse::<f64>().with_context(|| format!("bad number {x:?}")),
            }
        })
        .collect()
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_>>()?;
    to_matrix(&rows)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        bail!("matrix rows have unequal lengths");
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// One θ per non-empty line, comma separated; `#` starts a comment.
pub fn read_theta_grid(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_list(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if v.len() != dim {
            bail!("{}:{}: expected {dim} values, found {}", path.display(), i + 1, v.len());
        }
        out.push(v);
    }
    Ok(out)
}

/// What `analyze --save` writes and `srbm --from` reads.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisFile {
    pub r: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// One-based lowest-priority classes, the SRBM coordinates.
    #[serde(default)]
    pub lowest: Vec<usize>,
    #[serde(default)]
    pub verified: Vec<String>,
}

impl AnalysisFile {
    pub fn load(path: &PathBuf) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

pub fn fmt_matrix(m: &DMatrix<f64>) -> String {
    (0..m.nrows()).map(|i| format!("  [{}]", fmt_vec(&m.row(i).iter().copied().collect::<Vec<_>>()))).collect::<Vec<_>>().join("\n")
}

pub fn one_based(v: &[usize]) -> String {
    v.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(" ")
}
