//! Synthetic benchmark datasets and CSV ingestion.
//!
//! All generators draw from ChaCha20 seeded with `seed_from_u64`, so output
//! depends only on the parameters and the seed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, Mat};

/// Name, parameters and seed of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub d: usize,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    /// Generating component of every observation, when known.
    pub labels: Option<Vec<usize>>,
    pub descriptor: DatasetDescriptor,
    /// Non-fatal notes, e.g. coordinates that could not be rescaled.
    pub warnings: Vec<String>,
}

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative standard deviation")
}

/// Two interlocking half circles in the plane. The upper arc is the unit
/// semicircle `(cos t, sin t)`, the lower one `(1 - cos t, 1/2 - sin t)`,
/// `t` evenly spaced on `[0, pi]`. The upper arc takes the extra point when
/// `n` is odd. Isotropic Gaussian noise of standard deviation `noise_sd` is
/// added to every coordinate.
pub fn two_half_moons(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::Parameter("two_half_moons needs n >= 2".into()));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::Parameter(format!("noise_sd = {noise_sd} must be >= 0")));
    }
    let n_lower = n / 2;
    let n_upper = n - n_lower;
    let angles = |m: usize| -> Vec<f64> {
        if m == 1 {
            vec![0.0]
        } else {
            (0..m).map(|i| PI * i as f64 / (m - 1) as f64).collect()
        }
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = gaussian(noise_sd);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for t in angles(n_upper) {
        data.extend_from_slice(&[t.cos(), t.sin()]);
        labels.push(0);
    }
    for t in angles(n_lower) {
        data.extend_from_slice(&[1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise_sd > 0.0 {
        for v in data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    let mut params = BTreeMap::new();
    params.insert("noise_sd".to_string(), noise_sd);
    Ok(LabeledDataset {
        data: Mat::from_col_major(2, n, data)?,
        labels: Some(labels),
        descriptor: DatasetDescriptor { name: "halfmoon".into(), seed: Some(seed), n, d: 2, params },
        warnings: Vec::new(),
    })
}

/// One isotropic Gaussian component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianComponent {
    pub size: usize,
    pub mean: Vec<f64>,
    pub sd: f64,
}

/// Eight planar components: three dense clusters of 2000 points and five
/// sparse clusters of 100 points, 6500 in total.
pub fn default_unbalanced_components() -> Vec<GaussianComponent> {
    let dense = [(20.0, 20.0), (20.0, 50.0), (40.0, 35.0)];
    let sparse = [(75.0, 15.0), (90.0, 40.0), (80.0, 65.0), (60.0, 85.0), (90.0, 90.0)];
    dense
        .iter()
        .map(|&(x, y)| GaussianComponent { size: 2000, mean: vec![x, y], sd: 2.0 })
        .chain(sparse.iter().map(|&(x, y)| GaussianComponent { size: 100, mean: vec![x, y], sd: 3.5 }))
        .collect()
}

/// The default mixture with every component size divided by `factor`
/// (at least one point each).
pub fn scaled_unbalanced_components(factor: usize) -> Vec<GaussianComponent> {
    default_unbalanced_components()
        .into_iter()
        .map(|mut c| {
            c.size = (c.size / factor.max(1)).max(1);
            c
        })
        .collect()
}

/// Samples a Gaussian mixture (components in order) and min-max scales
/// every coordinate into `[0, 1]`. `None` selects
/// [`default_unbalanced_components`].
pub fn unbalanced_gaussian(seed: u64, components: Option<&[GaussianComponent]>) -> Result<LabeledDataset> {
    let defaults;
    let comps = match components {
        Some(c) => c,
        None => {
            defaults = default_unbalanced_components();
            &defaults
        }
    };
    let d = comps.first().map_or(0, |c| c.mean.len());
    if comps.is_empty() || d == 0 {
        return Err(Error::Parameter("need at least one component of positive dimension".into()));
    }
    if comps.iter().any(|c| c.mean.len() != d || c.size == 0 || !(c.sd >= 0.0)) {
        return Err(Error::Parameter("components must share a dimension and have size > 0, sd >= 0".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n: usize = comps.iter().map(|c| c.size).sum();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (label, c) in comps.iter().enumerate() {
        let noise = gaussian(c.sd);
        for _ in 0..c.size {
            for m in &c.mean {
                data.push(m + noise.sample(&mut rng));
            }
            labels.push(label);
        }
    }
    let raw = Mat::from_col_major(d, n, data)?;
    let degenerate = degenerate_coordinates(&raw);
    let warnings = degenerate.iter().map(|r| format!("coordinate {r} is constant; set to 0.5")).collect();

    let mut params = BTreeMap::new();
    params.insert("components".to_string(), comps.len() as f64);
    Ok(LabeledDataset {
        data: scale_unit(&raw),
        labels: Some(labels),
        descriptor: DatasetDescriptor { name: "ugauss".into(), seed: Some(seed), n, d, params },
        warnings,
    })
}

fn coordinate_ranges(a: &Mat) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); a.rows()];
    for col in a.columns() {
        for (r, &v) in ranges.iter_mut().zip(col) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    ranges
}

/// Coordinates (rows) that take a single value.
pub fn degenerate_coordinates(a: &Mat) -> Vec<usize> {
    coordinate_ranges(a).iter().enumerate().filter(|(_, (lo, hi))| hi <= lo).map(|(r, _)| r).collect()
}

/// Affine per-coordinate map onto `[0, 1]`; constant coordinates become 0.5.
pub fn scale_unit(a: &Mat) -> DataMatrix {
    let ranges = coordinate_ranges(a);
    let mut out = a.clone();
    for j in 0..out.cols() {
        for (v, &(lo, hi)) in out.col_mut(j).iter_mut().zip(&ranges) {
            *v = if hi > lo {
                if *v == hi {
                    1.0
                } else {
                    (*v - lo) / (hi - lo)
                }
            } else {
                0.5
            };
        }
    }
    out
}

/// How observations are laid out in a CSV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Orientation {
    /// One observation per row (the usual table layout).
    RowsAreObservations,
    /// One observation per column.
    ColumnsAreObservations,
}

/// Reads a rectangular numeric CSV.
pub fn read_csv<R: Read>(reader: R, orientation: Orientation, has_header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("non-numeric cell {cell:?}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: format!("non-finite value {bad}") });
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(match orientation {
        Orientation::RowsAreObservations => Mat::from_columns(&rows)?,
        Orientation::ColumnsAreObservations => Mat::from_fn(r, c, |i, j| rows[i][j]),
    })
}

/// Reads a CSV file; see [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, orientation: Orientation, has_header: bool) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), orientation, has_header)
}

/// Writes `a` as CSV with shortest round-trip float formatting.
pub fn write_csv<W: Write>(writer: W, a: &Mat, orientation: Orientation) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    match orientation {
        Orientation::RowsAreObservations => {
            for col in a.columns() {
                wtr.write_record(col.iter().map(|v| v.to_string())).map_err(to_io)?;
            }
        }
        Orientation::ColumnsAreObservations => {
            for i in 0..a.rows() {
                wtr.write_record((0..a.cols()).map(|j| a[(i, j)].to_string())).map_err(to_io)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
