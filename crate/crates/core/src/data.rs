//! Feature-vector datasets: the core [`Dataset`] type, synthetic shifted
//! generators, and the CSV interchange format.
//!
//! CSV layout: header `x0,...,x{d-1},label,domain`, one sample per row.
//! Features are written with 17 significant digits so double precision
//! values survive a round trip. The label cell is empty for unlabeled rows.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{DacError, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
    domain: String,
}

impl Dataset {
    /// Builds a dataset, validating that `d >= 1`, that labels (if any) cover
    /// every class in `0..C` and that `n >= C`.
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
        domain: impl Into<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(DacError::invalid("dataset has no rows"));
        }
        if features.cols() == 0 {
            return Err(DacError::invalid("feature dimension must be >= 1"));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DacError::invalid(format!("{} labels for {} rows", labels.len(), n)));
            }
        }
        let num_classes = match (&labels, num_classes) {
            (Some(labels), declared) => {
                let inferred = labels.iter().max().map_or(0, |m| m + 1);
                let c = declared.unwrap_or(inferred);
                if inferred > c {
                    return Err(DacError::invalid(format!("label {} outside 0..{}", inferred - 1, c)));
                }
                let mut counts = vec![0usize; c];
                for &l in labels {
                    counts[l] += 1;
                }
                if let Some(empty) = counts.iter().position(|&k| k == 0) {
                    return Err(DacError::invalid(format!("class {} has no samples", empty)));
                }
                Some(c)
            }
            (None, declared) => declared,
        };
        if let Some(c) = num_classes {
            if n < c {
                return Err(DacError::invalid(format!("n = {} smaller than C = {}", n, c)));
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            domain: domain.into(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Same samples with the labels dropped, as a target domain would be seen.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: None,
            num_classes: self.num_classes,
            domain: self.domain.clone(),
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Dataset {
        self.domain = domain.into();
        self
    }

    /// Subset by row index. Class count is carried over, so a subset may
    /// legitimately miss some classes.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
            domain: self.domain.clone(),
        }
    }
}

/// Rotates every 2-D point by `degrees` counter-clockwise about the origin.
pub fn rotate_2d(points: &Matrix, degrees: f64) -> Result<Matrix> {
    if points.cols() != 2 {
        return Err(DacError::invalid("rotation needs 2-D points"));
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = points.clone();
    for i in 0..points.rows() {
        let (x, y) = (points.get(i, 0), points.get(i, 1));
        out.set(i, 0, c * x - s * y);
        out.set(i, 1, s * x + c * y);
    }
    Ok(out)
}

/// Adds `shift` to every row, keeping labels and domain.
pub fn translate(ds: &Dataset, shift: &[f64]) -> Result<Dataset> {
    if shift.len() != ds.dim() {
        return Err(DacError::invalid(format!(
            "shift has length {}, expected {}",
            shift.len(),
            ds.dim()
        )));
    }
    let mut features = ds.features.clone();
    for i in 0..features.rows() {
        for (v, s) in features.row_mut(i).iter_mut().zip(shift) {
            *v += s;
        }
    }
    Ok(Dataset { features, ..ds.clone() })
}

/// Rotates a 2-D dataset about the origin, keeping labels and domain.
pub fn rotate(ds: &Dataset, degrees: f64) -> Result<Dataset> {
    Ok(Dataset {
        features: rotate_2d(&ds.features, degrees)?,
        ..ds.clone()
    })
}

/// Two interleaved half circles, `n/2` points each, with isotropic Gaussian
/// noise and a final rotation about the origin.
///
/// Class 0 lies on `(cos t, sin t)`, class 1 on `(1 - cos t, 0.5 - sin t)`,
/// with `t` evenly spaced over `[0, pi]`.
pub fn gen_two_moons(n: usize, noise: f64, rotation_deg: f64, seed: u64) -> Result<Dataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(DacError::invalid(format!("two moons needs an even n >= 4, got {}", n)));
    }
    if !(noise >= 0.0) {
        return Err(DacError::invalid("noise must be >= 0"));
    }
    let half = n / 2;
    let mut rng = stream(seed, Stream::Data);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for k in 0..half {
            let t = PI * k as f64 / (half - 1) as f64;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            rows.push([x + noise * ex, y + noise * ey]);
            labels.push(class);
        }
    }
    let points = rotate_2d(&Matrix::from_rows(&rows)?, rotation_deg)?;
    Dataset::new(points, Some(labels), Some(2), "source")
}

/// Cluster centers used by [`gen_gauss_blobs`]: evenly spaced on a circle of
/// radius 3 in the first two coordinates, or on a line for `d = 1`.
pub fn blob_means(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim == 1 {
                m[0] = 3.0 * c as f64;
            } else {
                let a = 2.0 * PI * c as f64 / classes as f64;
                m[0] = 3.0 * a.cos();
                m[1] = 3.0 * a.sin();
            }
            m
        })
        .collect()
}

/// Isotropic Gaussian clusters; sample `i` belongs to class `i mod C`, and
/// every point is translated by `shift`.
pub fn gen_gauss_blobs(n: usize, classes: usize, dim: usize, shift: &[f64], spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || n < classes || dim == 0 {
        return Err(DacError::invalid(format!(
            "blobs need n >= C >= 2 and d >= 1, got n={} C={} d={}",
            n, classes, dim
        )));
    }
    if shift.len() != dim {
        return Err(DacError::invalid(format!(
            "shift has length {}, expected {}",
            shift.len(),
            dim
        )));
    }
    if !(spread >= 0.0) {
        return Err(DacError::invalid("spread must be >= 0"));
    }
    let means = blob_means(classes, dim);
    let mut rng = stream(seed, Stream::Data);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for j in 0..dim {
            let e: f64 = rng.sample(StandardNormal);
            data.push(means[c][j] + spread * e + shift[j]);
        }
        labels.push(c);
    }
    Dataset::new(Matrix::from_vec(n, dim, data)?, Some(labels), Some(classes), "source")
}

pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Serializes a dataset to the CSV interchange format.
pub fn to_csv_string(ds: &Dataset) -> String {
    let d = ds.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|j| format!("x{}", j)).collect();
    out.push_str(&header.join(","));
    out.push_str(",label,domain\n");
    for i in 0..ds.len() {
        for v in ds.sample(i) {
            out.push_str(&format_f64(*v));
            out.push(',');
        }
        if let Some(l) = ds.labels() {
            out.push_str(&l[i].to_string());
        }
        out.push(',');
        out.push_str(ds.domain());
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)).map_err(|e| DacError::io(path, e))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DacError::io(path, e))?;
    parse_csv(&text)
}

/// Parses the CSV interchange format. Row numbers in errors count the header
/// as row 0 and the first sample as row 1.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| DacError::parse(0, e.to_string()))?,
        None => return Err(DacError::parse(0, "empty file")),
    };
    let width = header.len();
    if width < 3 {
        return Err(DacError::parse(0, "header needs at least x0,label,domain"));
    }
    let dim = width - 2;
    for (j, name) in header.iter().take(dim).enumerate() {
        if name.trim() != format!("x{}", j) {
            return Err(DacError::parse(0, format!("expected column x{}, found '{}'", j, name)));
        }
    }
    if header[dim].trim() != "label" || header[dim + 1].trim() != "domain" {
        return Err(DacError::parse(0, "last two columns must be label,domain"));
    }

    let mut data = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut domain: Option<String> = None;
    for (k, rec) in records.enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| DacError::parse(row, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(DacError::parse(
                row,
                format!("{} columns, header declares {}", rec.len(), width),
            ));
        }
        for j in 0..dim {
            let cell = rec[j].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| DacError::parse(row, format!("non-numeric feature '{}'", cell)))?;
            data.push(v);
        }
        let label_cell = rec[dim].trim();
        labels.push(if label_cell.is_empty() {
            None
        } else {
            Some(
                label_cell
                    .parse()
                    .map_err(|_| DacError::parse(row, format!("label '{}' is not a class id", label_cell)))?,
            )
        });
        let dom = rec[dim + 1].trim();
        match &domain {
            None => domain = Some(dom.to_string()),
            Some(prev) if prev != dom => {
                return Err(DacError::parse(
                    row,
                    format!("domain '{}' differs from '{}'", dom, prev),
                ))
            }
            _ => {}
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(DacError::parse(1, "no data rows"));
    }
    let labels = if labels.iter().all(Option::is_none) {
        None
    } else if let Some(row) = labels.iter().position(Option::is_none) {
        return Err(DacError::parse(row + 1, "missing label in a labeled file"));
    } else {
        Some(labels.into_iter().map(Option::unwrap).collect::<Vec<_>>())
    };
    let features = Matrix::from_vec(n, dim, data)?;
    Dataset::new(features, labels, None, domain.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_moons_lie_on_half_circles() {
        let ds = gen_two_moons(4, 0.0, 0.0, 0).unwrap();
        let expect = [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5], [2.0, 0.5]];
        for (i, e) in expect.iter().enumerate() {
            let row = ds.sample(i);
            assert!(
                (row[0] - e[0]).abs() < 1e-15 && (row[1] - e[1]).abs() < 1e-15,
                "{:?}",
                row
            );
        }
        assert_eq!(ds.labels().unwrap(), &[0, 0, 1, 1]);
    }

    #[test]
    fn moons_reject_bad_sizes() {
        assert!(matches!(
            gen_two_moons(5, 0.1, 0.0, 0),
            Err(DacError::InvalidArgument(_))
        ));
        assert!(gen_two_moons(2, 0.1, 0.0, 0).is_err());
    }

    #[test]
    fn moons_are_deterministic() {
        let a = gen_two_moons(1000, 0.1, 0.0, 7).unwrap();
        let b = gen_two_moons(1000, 0.1, 0.0, 7).unwrap();
        assert_eq!(a.features().as_slice(), b.features().as_slice());
        let c = gen_two_moons(1000, 0.1, 0.0, 8).unwrap();
        assert_ne!(a.features().as_slice(), c.features().as_slice());
    }

    #[test]
    fn moons_rotation_matches_external_rotation() {
        let base = gen_two_moons(2000, 0.1, 0.0, 0).unwrap();
        let rotated = gen_two_moons(2000, 0.1, 35.0, 0).unwrap();
        let (s, c) = 35f64.to_radians().sin_cos();
        for i in 0..base.len() {
            let (x, y) = (base.sample(i)[0], base.sample(i)[1]);
            let r = rotated.sample(i);
            assert!((c * x - s * y - r[0]).abs() < 1e-12);
            assert!((s * x + c * y - r[1]).abs() < 1e-12);
        }
        let back = rotate_2d(rotated.features(), -35.0).unwrap();
        for (a, b) in back.as_slice().iter().zip(base.features().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spread_blobs_sit_on_means() {
        let ds = gen_gauss_blobs(3, 3, 2, &[0.0, 0.0], 0.0, 0).unwrap();
        let means = blob_means(3, 2);
        for c in 0..3 {
            assert_eq!(ds.sample(c), means[c].as_slice());
        }
    }

    #[test]
    fn blob_shift_is_pure_translation() {
        let a = gen_gauss_blobs(50, 3, 2, &[0.0, 0.0], 0.4, 3).unwrap();
        let b = gen_gauss_blobs(50, 3, 2, &[5.0, 0.0], 0.4, 3).unwrap();
        for i in 0..50 {
            let (ra, rb) = (a.sample(i), b.sample(i));
            assert!((rb[0] - ra[0] - 5.0).abs() < 1e-12);
            assert_eq!(rb[1], ra[1]);
        }
    }

    #[test]
    fn blob_sample_means_match_configuration() {
        let ds = gen_gauss_blobs(600, 3, 2, &[0.0, 0.0], 0.3, 1).unwrap();
        let means = blob_means(3, 2);
        let labels = ds.labels().unwrap();
        let mut counts = [0usize; 3];
        for c in 0..3 {
            let rows: Vec<&[f64]> = (0..ds.len())
                .filter(|&i| labels[i] == c)
                .map(|i| ds.sample(i))
                .collect();
            counts[c] = rows.len();
            let m = crate::linalg::mean_of(rows, 2).unwrap();
            // sample-mean oracle: stddev of the mean is 0.3/sqrt(200) ≈ 0.02
            assert!((m[0] - means[c][0]).abs() < 0.1 && (m[1] - means[c][1]).abs() < 0.1);
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = gen_gauss_blobs(31, 3, 4, &[0.1, -0.2, 0.3, 1e-7], 0.7, 11).unwrap();
        let back = parse_csv(&to_csv_string(&ds)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_short_row_reports_row_one() {
        let text = "x0,x1,label,domain\n0.5,1,source\n";
        match parse_csv(text) {
            Err(DacError::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn csv_non_numeric_cell_is_rejected() {
        let text = "x0,label,domain\n1.0,0,source\nabc,1,source\n";
        match parse_csv(text) {
            Err(DacError::Parse { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn csv_empty_labels_mean_unlabeled() {
        let text = "x0,x1,label,domain\n0.5,1.5,,target\n-1,2,,target\n";
        let ds = parse_csv(text).unwrap();
        assert!(ds.labels().is_none());
        assert_eq!(ds.domain(), "target");
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn dataset_rejects_missing_class() {
        let m = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert!(Dataset::new(m, Some(vec![0, 2, 2]), Some(3), "source").is_err());
    }
}
