use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};

use mmlasso::Dataset;

/// A numeric table read from CSV: carriers, response and column names.
pub struct Table {
    pub data: Dataset,
    pub names: Vec<String>,
    pub response: String,
}

/// Reads a comma-separated file with a header row. The response is the last
/// column unless `response_col` names another one.
pub fn read_csv(path: &Path, response_col: Option<&str>, intercept: bool) -> Result<Table> {
    if !path.is_file() {
        bail!("input file not found: {}", path.display());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        bail!("{}: need at least two columns (carriers and response)", path.display());
    }
    let resp = match response_col {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: no column named '{name}'", path.display()))?,
        None => header.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("{}:{line}: malformed CSV record: {e}", path.display())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            bail!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                rec.len()
            );
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                anyhow!(
                    "{}:{line}: column '{}': cannot parse '{cell}' as a number",
                    path.display(),
                    header[j]
                )
            })?;
            if !v.is_finite() {
                bail!("{}:{line}: column '{}': non-finite value", path.display(), header[j]);
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let n = rows.len();
    let carriers: Vec<usize> = (0..header.len()).filter(|&j| j != resp).collect();
    let x = DMatrix::from_fn(n, carriers.len(), |i, k| rows[i][carriers[k]]);
    let y = DVector::from_fn(n, |i, _| rows[i][resp]);
    Ok(Table {
        data: Dataset::new(x, y, intercept)?,
        names: carriers.iter().map(|&j| header[j].clone()).collect(),
        response: header[resp].clone(),
    })
}
