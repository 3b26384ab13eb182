//! Datasets with partially labeled concepts, CSV IO and IDX image files.
//!
//! CSV layout: header `x1,…,xa,<concept 0>,…,<concept m>`; labels are
//! 1-based outcome indices or `-1` for unknown.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::ConceptSchema;

pub const UNLABELED: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    /// `n × a` features.
    pub features: Array2<S>,
    /// `n × (m+1)` labels, 1-based or [`UNLABELED`].
    pub labels: Array2<i32>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Array2<S>, labels: Array2<i32>) -> Result<Self> {
        if features.nrows() != labels.nrows() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} label rows",
                features.nrows(),
                labels.nrows()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn concept_count(&self) -> usize {
        self.labels.ncols()
    }

    pub fn labeled_count(&self, concept: usize) -> usize {
        self.labels.column(concept).iter().filter(|&&l| l != UNLABELED).count()
    }

    /// Labels in range for `schema` and at least one labeled entry.
    pub fn validate(&self, schema: &ConceptSchema) -> Result<()> {
        if self.concept_count() != schema.len() {
            return Err(Error::Dimension(format!(
                "dataset has {} label columns, schema has {} concepts",
                self.concept_count(),
                schema.len()
            )));
        }
        for (i, col) in self.labels.axis_iter(Axis(1)).enumerate() {
            let n = schema.outcome_count(i) as i32;
            if let Some((row, &bad)) = col
                .iter()
                .enumerate()
                .find(|(_, &l)| l != UNLABELED && !(1..=n).contains(&l))
            {
                return Err(Error::Dataset(format!(
                    "row {row}: label {bad} for concept `{}` outside 1..={n}",
                    schema.concept(i).name
                )));
            }
        }
        if !self.labels.iter().any(|&l| l != UNLABELED) {
            return Err(Error::Dataset("no labeled entries".into()));
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            features: self.features.mapv(|x| T::of(x.to_f64_lossy())),
            labels: self.labels.clone(),
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &ConceptSchema) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        let m = schema.len();
        if header.len() < m {
            return Err(Error::Dimension(format!(
                "header has {} columns, need at least the {m} concept columns",
                header.len()
            )));
        }
        let a = header.len() - m;
        for (i, name) in header.iter().skip(a).enumerate() {
            if name != schema.concept(i).name {
                return Err(Error::Dataset(format!(
                    "label column {} is `{name}`, schema expects `{}`",
                    a + i + 1,
                    schema.concept(i).name
                )));
            }
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut n = 0;
        for record in reader.records() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let field = field.trim();
                let bad = || Error::Dataset(format!("row {}: cannot parse `{field}`", n + 1));
                if j < a {
                    features.push(S::of(field.parse::<f64>().map_err(|_| bad())?));
                } else {
                    labels.push(field.parse::<i32>().map_err(|_| bad())?);
                }
            }
            n += 1;
        }
        let data = Self::new(
            Array2::from_shape_vec((n, a), features).map_err(|e| Error::Dataset(e.to_string()))?,
            Array2::from_shape_vec((n, m), labels).map_err(|e| Error::Dataset(e.to_string()))?,
        )?;
        data.validate(schema)?;
        Ok(data)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, schema: &ConceptSchema) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (1..=self.feature_dim())
            .map(|j| format!("x{j}"))
            .chain(schema.concepts().iter().map(|c| c.name.clone()))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.features.outer_iter().zip(self.labels.outer_iter()) {
            let row: Vec<String> = x
                .iter()
                .map(|v| v.to_f64_lossy().to_string())
                .chain(y.iter().map(|l| l.to_string()))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Images from an IDX file: `count × rows × cols` bytes, row-major.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, k: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[k * size..(k + 1) * size]
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| idx_error(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn idx_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn idx_body(path: &Path, magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = read_maybe_gz(path)?;
    let be = |o: usize| -> Result<u32> {
        bytes
            .get(o..o + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| idx_error(path, "truncated header"))
    };
    let found = be(0)?;
    if found != magic {
        return Err(idx_error(path, format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim).map(|k| be(4 + 4 * k).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let expected: usize = dims.iter().product();
    if bytes.len() - start != expected {
        return Err(idx_error(
            path,
            format!("shape {dims:?} needs {expected} bytes, file has {}", bytes.len() - start),
        ));
    }
    Ok((dims, bytes[start..].to_vec()))
}

/// Reads an unsigned-byte image file (magic `0x00000803`), optionally gzipped.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let (dims, pixels) = idx_body(path.as_ref(), 0x0803)?;
    Ok(IdxImages {
        count: dims[0],
        rows: dims[1],
        cols: dims[2],
        pixels,
    })
}

/// Reads an unsigned-byte label file (magic `0x00000801`), optionally gzipped.
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(idx_body(path.as_ref(), 0x0801)?.1)
}
