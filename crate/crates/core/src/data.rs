//! Point sets, datasets, and CSV ingestion.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Configured upper bound on input dimension.
pub const MAX_DIM: usize = 64;

/// Row-major `n x d` point storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl PointMatrix {
    pub fn new(data: Vec<f64>, n: usize, dim: usize) -> Self {
        assert_eq!(data.len(), n * dim);
        PointMatrix { data, n, dim }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * dim);
        for r in &rows {
            assert_eq!(r.len(), dim, "ragged rows");
            data.extend_from_slice(r);
        }
        PointMatrix { data, n, dim }
    }

    pub fn random_unit_cube(n: usize, dim: usize, rng: &mut Stream) -> Self {
        let data = (0..n * dim).map(|_| rng::uniform01(rng)).collect();
        PointMatrix { data, n, dim }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Copy of the selected rows, in the given order.
    pub fn gather(&self, indices: &[usize]) -> PointMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointMatrix {
            data,
            n: indices.len(),
            dim: self.dim,
        }
    }

    /// Coordinates divided per-dimension by `beta`.
    pub fn scale_by(&self, beta: &[f64]) -> PointMatrix {
        assert_eq!(beta.len(), self.dim);
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            for (v, b) in row.iter().zip(beta) {
                data.push(v / b);
            }
        }
        PointMatrix {
            data,
            n: self.n,
            dim: self.dim,
        }
    }
}

/// Inputs with responses and stable per-point integer identities.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: PointMatrix,
    pub responses: Vec<f64>,
    pub global_ids: Vec<usize>,
}

impl Dataset {
    /// Build and validate: finite values, unique ids, dimension within bounds.
    pub fn new(points: PointMatrix, responses: Vec<f64>, global_ids: Vec<usize>) -> Result<Self> {
        if points.len() != responses.len() || points.len() != global_ids.len() {
            return Err(Error::invalid(format!(
                "dataset length mismatch: {} points, {} responses, {} ids",
                points.len(),
                responses.len(),
                global_ids.len()
            )));
        }
        if points.dim() < 1 || points.dim() > MAX_DIM {
            return Err(Error::invalid(format!(
                "input dimension {} outside 1..={MAX_DIM}",
                points.dim()
            )));
        }
        if points.rows().any(|r| r.iter().any(|v| !v.is_finite()))
            || responses.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("dataset contains NaN or infinite values"));
        }
        let mut ids = global_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("global ids must be unique"));
        }
        Ok(Dataset {
            points,
            responses,
            global_ids,
        })
    }

    /// Fresh dataset with ids `0..n`.
    pub fn from_parts(points: PointMatrix, responses: Vec<f64>) -> Result<Self> {
        let ids = (0..points.len()).collect();
        Dataset::new(points, responses, ids)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Uniform subsample of `k` points without replacement; ids are
    /// renumbered `0..k` in draw order.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Dataset> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "subsample size {k} outside 1..={}",
                self.len()
            )));
        }
        let mut rng = rng::stream(seed);
        let picked = rng::sample_without_replacement(&mut rng, self.len(), k);
        let points = self.points.gather(&picked);
        let responses = picked.iter().map(|&i| self.responses[i]).collect();
        Dataset::from_parts(points, responses)
    }

    /// Read `x1,...,xd,y` CSV with a required header row; `d` is inferred
    /// from the header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::parse(1, "empty file; expected a header row")),
        };
        let ncols = header.split(',').count();
        if ncols < 2 {
            return Err(Error::parse(
                1,
                format!("header must have at least 2 columns, found {ncols}"),
            ));
        }
        let d = ncols - 1;
        let mut rows: Vec<f64> = Vec::new();
        let mut responses = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncols {
                return Err(Error::parse(
                    lineno,
                    format!("expected {ncols} fields, found {}", fields.len()),
                ));
            }
            for (c, f) in fields.iter().enumerate() {
                let v: f64 = f.trim().parse().map_err(|_| {
                    Error::parse(lineno, format!("column {}: cannot parse '{f}' as number", c + 1))
                })?;
                if c < d {
                    rows.push(v);
                } else {
                    responses.push(v);
                }
            }
        }
        let n = responses.len();
        if n == 0 {
            return Err(Error::parse(2, "no data rows"));
        }
        Dataset::from_parts(PointMatrix::new(rows, n, d), responses)
    }

    /// Write `x1,...,xd,y` with 17 significant digits, so a read-back
    /// reproduces every value bit-exactly.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for i in 0..self.len() {
            let mut fields: Vec<String> =
                self.points.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            fields.push(format!("{:.16e}", self.responses[i]));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Min-max normalize inputs to the unit cube; constant dimensions map
    /// to zero. Returns the map so test inputs can be transformed alike.
    pub fn normalize_unit_cube(&self) -> (Dataset, Normalization) {
        let d = self.dim();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for row in self.points.rows() {
            for (j, v) in row.iter().enumerate() {
                mins[j] = mins[j].min(*v);
                maxs[j] = maxs[j].max(*v);
            }
        }
        let norm = Normalization { mins, maxs };
        let points = norm.apply(&self.points);
        let ds = Dataset {
            points,
            responses: self.responses.clone(),
            global_ids: self.global_ids.clone(),
        };
        (ds, norm)
    }

    /// Rescale responses to mean one (used before percentage errors).
    /// Fails when the mean is too close to zero.
    pub fn normalize_response_mean_one(&mut self) -> Result<f64> {
        let m = crate::stats::mean(&self.responses);
        if m.abs() < 1e-12 {
            return Err(Error::invalid(
                "response mean too close to zero for mean-one normalization",
            ));
        }
        for y in &mut self.responses {
            *y /= m;
        }
        Ok(m)
    }
}

/// Per-dimension affine map onto `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Normalization {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, points: &PointMatrix) -> PointMatrix {
        let d = points.dim();
        assert_eq!(d, self.mins.len());
        let mut data = Vec::with_capacity(points.len() * d);
        for row in points.rows() {
            for j in 0..d {
                let span = self.maxs[j] - self.mins[j];
                if span > 0.0 {
                    data.push((row[j] - self.mins[j]) / span);
                } else {
                    data.push(0.0);
                }
            }
        }
        PointMatrix::new(data, points.len(), d)
    }
}
