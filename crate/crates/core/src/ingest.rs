//! Expression-matrix ingestion for gene screening.
//!
//! Each gene row is (optionally) log-transformed, standardised with the mean
//! and standard deviation of the normal-tissue samples, and mapped through
//! the standard normal CDF, giving values in `[0, 1]` with mean ½ under the
//! null of no differential expression. The first two tumour samples are held
//! out to pick each gene's bet size; the rest form the test sequence.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::fmt17;
use crate::stats::normal_cdf;

/// Bet-size grid for the plug-in estimate.
pub const DEFAULT_LAMBDA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Number of tumour samples held out for λ estimation.
pub const HELD_OUT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleGroup {
    Normal,
    Tumor,
}

/// Column-label prefixes identifying each group (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabels {
    pub normal: String,
    pub tumor: String,
}

impl Default for GroupLabels {
    fn default() -> Self {
        Self {
            normal: "normal".into(),
            tumor: "tumor".into(),
        }
    }
}

impl GroupLabels {
    fn classify(&self, label: &str) -> Result<SampleGroup> {
        let l = label.trim().to_lowercase();
        if l.starts_with(&self.normal.to_lowercase()) {
            Ok(SampleGroup::Normal)
        } else if l.starts_with(&self.tumor.to_lowercase()) {
            Ok(SampleGroup::Tumor)
        } else {
            Err(Error::Malformed(format!(
                "column {label:?} matches neither {:?} nor {:?}",
                self.normal, self.tumor
            )))
        }
    }
}

/// Genes × samples matrix of raw expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub gene_ids: Vec<String>,
    pub sample_labels: Vec<String>,
    pub groups: Vec<SampleGroup>,
    pub rows: Vec<Vec<f64>>,
}

impl ExpressionMatrix {
    /// Reads a delimited file whose header row holds sample labels after a
    /// gene-id column. Tab or comma delimiters are detected from the header.
    pub fn read(mut input: impl Read, labels: &GroupLabels) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let first = text.lines().next().unwrap_or_default();
        let delimiter = if first.contains('\t') { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::Malformed(
                "header needs a gene column and samples".into(),
            ));
        }
        let sample_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let groups = sample_labels
            .iter()
            .map(|l| labels.classify(l))
            .collect::<Result<Vec<_>>>()?;
        let mut gene_ids = Vec::new();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let id = record.get(0).unwrap_or_default().to_string();
            let row = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| {
                            Error::Malformed(format!(
                                "gene {id:?} (row {}): bad value {v:?}",
                                line + 1
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            gene_ids.push(id);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Malformed("no gene rows".into()));
        }
        let matrix = Self {
            gene_ids,
            sample_labels,
            groups,
            rows,
        };
        matrix.check_groups()?;
        Ok(matrix)
    }

    pub fn from_path(path: impl AsRef<Path>, labels: &GroupLabels) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        Self::read(file, labels)
    }

    fn check_groups(&self) -> Result<()> {
        let normals = self
            .groups
            .iter()
            .filter(|&&g| g == SampleGroup::Normal)
            .count();
        let tumors = self.groups.len() - normals;
        if normals < 2 {
            return Err(Error::Malformed("need at least two normal samples".into()));
        }
        if tumors <= HELD_OUT {
            return Err(Error::Malformed(format!(
                "need more than {HELD_OUT} tumor samples"
            )));
        }
        Ok(())
    }
}

/// Options for the per-gene transform.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    /// Take natural logs before standardising; values must then be positive.
    pub log: bool,
}

/// Maps one gene's values to `[0, 1]` with the normal-group mean and sample
/// standard deviation.
pub fn transform_gene(
    gene: &str,
    values: &[f64],
    groups: &[SampleGroup],
    options: TransformOptions,
) -> Result<Vec<f64>> {
    assert_eq!(values.len(), groups.len());
    let xs = if options.log {
        values
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::Malformed(format!(
                        "gene {gene:?}: log transform needs positive values, got {v}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        values.to_vec()
    };
    let normal: Vec<f64> = xs
        .iter()
        .zip(groups)
        .filter(|(_, &g)| g == SampleGroup::Normal)
        .map(|(&x, _)| x)
        .collect();
    let n = normal.len() as f64;
    let mean = normal.iter().sum::<f64>() / n;
    let var = normal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance {
            gene: gene.to_string(),
        });
    }
    Ok(xs.iter().map(|x| normal_cdf((x - mean) / sd)).collect())
}

/// Transformed matrix with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    pub gene_ids: Vec<String>,
    pub groups: Vec<SampleGroup>,
    pub rows: Vec<Vec<f64>>,
    /// Genes dropped because their normal samples have no spread.
    pub skipped: Vec<String>,
}

pub fn transform_to_uniform(
    matrix: &ExpressionMatrix,
    options: TransformOptions,
) -> Result<TransformedMatrix> {
    let mut out = TransformedMatrix {
        gene_ids: Vec::new(),
        groups: matrix.groups.clone(),
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    let results: Vec<Result<Vec<f64>>> = matrix
        .gene_ids
        .par_iter()
        .zip(&matrix.rows)
        .map(|(id, row)| transform_gene(id, row, &matrix.groups, options))
        .collect();
    for (id, result) in matrix.gene_ids.iter().zip(results) {
        match result {
            Ok(u) => {
                out.gene_ids.push(id.clone());
                out.rows.push(u);
            }
            Err(Error::ZeroVariance { gene }) => {
                log::warn!("skipping gene {gene:?}: zero variance in the normal group");
                out.skipped.push(gene);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Plug-in bet size `4·|mean(held_out) − ½|`, snapped to the nearest grid
/// point (ties go to the smaller value).
pub fn estimate_lambda(held_out: &[f64], grid: &[f64]) -> Result<f64> {
    if held_out.len() != HELD_OUT {
        return Err(Error::Malformed(format!(
            "need exactly {HELD_OUT} held-out tumor samples, got {}",
            held_out.len()
        )));
    }
    if grid.is_empty() || grid.iter().any(|&g| !(0.0..=2.0).contains(&g)) {
        return Err(Error::Config(
            "λ grid must be non-empty and inside [0, 2]".into(),
        ));
    }
    let mean = held_out.iter().sum::<f64>() / held_out.len() as f64;
    let raw = 4.0 * (mean - 0.5).abs();
    let mut best = grid[0];
    for &g in grid {
        let (d, db) = ((g - raw).abs(), (best - raw).abs());
        if d < db || (d == db && g < best) {
            best = g;
        }
    }
    Ok(best)
}

/// One gene's test sequence and its bet size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSequence {
    pub id: String,
    pub lambda: f64,
    pub sequence: Vec<f64>,
}

/// Splits off the first two tumour columns to estimate λ and keeps every
/// other column, in file order, as the test sequence.
pub fn prepare_screening(matrix: &TransformedMatrix, grid: &[f64]) -> Result<Vec<GeneSequence>> {
    let held: Vec<usize> = matrix
        .groups
        .iter()
        .enumerate()
        .filter(|(_, &g)| g == SampleGroup::Tumor)
        .map(|(i, _)| i)
        .take(HELD_OUT)
        .collect();
    if held.len() < HELD_OUT {
        return Err(Error::Malformed(format!(
            "need {HELD_OUT} tumor samples to hold out"
        )));
    }
    matrix
        .gene_ids
        .iter()
        .zip(&matrix.rows)
        .map(|(id, row)| {
            let held_out: Vec<f64> = held.iter().map(|&i| row[i]).collect();
            let sequence: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|(i, _)| !held.contains(i))
                .map(|(_, &v)| v)
                .collect();
            Ok(GeneSequence {
                id: id.clone(),
                lambda: estimate_lambda(&held_out, grid)?,
                sequence,
            })
        })
        .collect()
}

/// Writes `gene_id,lambda,y_1,...,y_T`.
pub fn write_sequences_csv<W: Write>(genes: &[GeneSequence], out: W) -> Result<()> {
    let len = genes.iter().map(|g| g.sequence.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["gene_id".to_string(), "lambda".to_string()];
    header.extend((1..=len).map(|t| format!("y_{t}")));
    w.write_record(&header)?;
    for g in genes {
        let mut rec = vec![g.id.clone(), fmt17(g.lambda)];
        rec.extend(g.sequence.iter().map(|&y| fmt17(y)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences_csv(input: impl Read) -> Result<Vec<GeneSequence>> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("gene_id") || header.get(1) != Some("lambda") {
        return Err(Error::Malformed(
            "expected gene_id,lambda,y_1,... header".into(),
        ));
    }
    let mut genes = Vec::new();
    for record in r.records() {
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        let nums = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("gene {id:?}: bad value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if nums.is_empty() {
            return Err(Error::Malformed(format!("gene {id:?}: missing lambda")));
        }
        if let Some(&y) = nums[1..].iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::Malformed(format!(
                "gene {id:?}: value {y} outside [0, 1]"
            )));
        }
        genes.push(GeneSequence {
            id,
            lambda: nums[0],
            sequence: nums[1..].to_vec(),
        });
    }
    Ok(genes)
}
