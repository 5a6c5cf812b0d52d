//! Datasets: MNIST-style IDX files, the Bianchini planar functions, delimited
//! text, and linear-target generators with their exact empirical moments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Matrix,
    pub kind: DatasetKind,
}

impl Dataset {
    /// Checks row counts and, for classification, that every target row is
    /// one-hot (several columns) or a single 0/1 value.
    pub fn new(features: Matrix, targets: Matrix, kind: DatasetKind) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("dataset has no examples".into()));
        }
        if features.rows() != targets.rows() {
            return Err(Error::Data(format!(
                "{} feature rows but {} target rows",
                features.rows(),
                targets.rows()
            )));
        }
        if !features.is_finite() || !targets.is_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        if kind == DatasetKind::Classification {
            for r in 0..targets.rows() {
                let row = targets.row(r);
                let binary = row.iter().all(|&v| v == 0.0 || v == 1.0);
                let ok = binary && (row.len() == 1 || row.iter().filter(|&&v| v == 1.0).count() == 1);
                if !ok {
                    return Err(Error::Data(format!(
                        "classification target row {r} is neither one-hot nor 0/1"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            targets,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            targets: self.targets.select_rows(indices),
            kind: self.kind,
        }
    }

    pub fn rows(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            features: self.features.row_range(start, end),
            targets: self.targets.row_range(start, end),
            kind: self.kind,
        }
    }

    /// First `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Data(format!(
                "cannot split {} examples at {n}",
                self.len()
            )));
        }
        Ok((self.rows(0, n), self.rows(n, self.len())))
    }
}

// ---------------------------------------------------------------- IDX

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an unsigned-byte IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let head = file.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Reads an IDX file with unsigned-byte payload; gzip is detected by its
/// magic bytes.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let mut bytes = Vec::new();
    open_maybe_gz(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|msg| Error::Data(format!("{}: {msg}", path.display())))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, String> {
    if bytes.len() < 4 {
        return Err("truncated header".into());
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x} (expected unsigned-byte IDX)",
            bytes[0], bytes[1], bytes[2], bytes[3]
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err("IDX file declares zero dimensions".into());
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let b = &bytes[4 + 4 * i..8 + 4 * i];
            u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
        })
        .collect();
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(format!(
            "truncated payload: {} bytes, header promises {expected}",
            payload.len()
        ));
    }
    if payload.len() > expected {
        return Err(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Writes an IDX file, gzip-compressed when the path ends in `.gz`.
pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let bytes = encode_idx(array);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let result = if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes).and_then(|_| enc.finish().map(|_| ()))
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush())
    };
    result.map_err(|e| Error::io(path, e))
}

/// Loads an image/label IDX pair. Pixels are scaled by 1/255 and labels
/// become one-hot rows over 10 classes.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    idx_pair_to_dataset(&img, &lab)
        .map_err(|msg| Error::Data(format!("{} / {}: {msg}", images.display(), labels.display())))
}

pub fn idx_pair_to_dataset(img: &IdxArray, lab: &IdxArray) -> Result<Dataset, String> {
    if img.dims.len() < 2 {
        return Err("image file must have at least two dimensions".into());
    }
    if lab.dims.len() != 1 {
        return Err("label file must be one-dimensional".into());
    }
    let n = img.dims[0];
    if n != lab.dims[0] {
        return Err(format!("{n} images but {} labels", lab.dims[0]));
    }
    if n == 0 {
        return Err("no examples".into());
    }
    let width: usize = img.dims[1..].iter().product();
    let features = img.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let features = Matrix::new(n, width, features).map_err(|e| e.to_string())?;
    let mut targets = Matrix::zeros(n, 10);
    for (i, &l) in lab.data.iter().enumerate() {
        if l > 9 {
            return Err(format!("label {l} at index {i} is outside 0..=9"));
        }
        targets.set(i, l as usize, 1.0);
    }
    Dataset::new(features, targets, DatasetKind::Classification).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- Bianchini

pub const BIANCHINI_MAX_K: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BianchiniSpec {
    pub k: u32,
    pub n_samples: usize,
    pub seed: u64,
}

/// `t_k(x)`: `k` applications of `t(x) = (1 − 2x₁², 1 − 2x₂²)`.
pub fn bianchini_map(k: u32, x: [f64; 2]) -> [f64; 2] {
    let mut y = x;
    for _ in 0..k {
        y = [1.0 - 2.0 * y[0] * y[0], 1.0 - 2.0 * y[1] * y[1]];
    }
    y
}

/// `f_k(x) = g(t_k(x))` with `g(y) = 1` iff `1 − ‖y‖² > 0`.
pub fn bianchini_label(k: u32, x: [f64; 2]) -> f64 {
    let y = bianchini_map(k, x);
    if 1.0 - (y[0] * y[0] + y[1] * y[1]) > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Uniform samples on `[−1, 1]²` labelled by `f_k`.
pub fn gen_bianchini(spec: &BianchiniSpec) -> Result<Dataset> {
    if spec.k > BIANCHINI_MAX_K {
        return Err(Error::config(format!(
            "bianchini k={} exceeds the supported maximum {BIANCHINI_MAX_K}",
            spec.k
        )));
    }
    if spec.n_samples == 0 {
        return Err(Error::config("bianchini n_samples must be at least 1"));
    }
    let mut rng = RngStream::new(spec.seed);
    let mut features = Matrix::zeros(spec.n_samples, 2);
    let mut targets = Matrix::zeros(spec.n_samples, 1);
    for i in 0..spec.n_samples {
        let x = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        features.row_mut(i).copy_from_slice(&x);
        targets.set(i, 0, bianchini_label(spec.k, x));
    }
    Dataset::new(features, targets, DatasetKind::Classification)
}

// ---------------------------------------------------------------- delimited text

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelimitedSpec {
    /// 0-based column holding the target.
    pub target_column: usize,
    /// 0-based feature columns; every non-target column when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<usize>>,
    #[serde(default)]
    pub header: bool,
    #[serde(default = "default_separator")]
    pub separator: char,
    /// Keep only the first `limit` data rows.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default = "default_delimited_kind")]
    pub kind: DatasetKind,
}

fn default_separator() -> char {
    ','
}

fn default_delimited_kind() -> DatasetKind {
    DatasetKind::Classification
}

impl DelimitedSpec {
    pub fn new(target_column: usize) -> Self {
        Self {
            target_column,
            feature_columns: None,
            header: false,
            separator: ',',
            limit: None,
            kind: DatasetKind::Classification,
        }
    }
}

fn binary_target(v: f64) -> Option<f64> {
    if v == 1.0 {
        Some(1.0)
    } else if v == 0.0 || v == -1.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Reads one example per line. For classification the target column must be
/// binary (`0/1` or `−1/1`) and is mapped to `{0, 1}`.
pub fn load_delimited(path: &Path, spec: &DelimitedSpec) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if (spec.header && i == 0) || line.trim().is_empty() {
            continue;
        }
        if spec.limit.is_some_and(|n| rows >= n) {
            break;
        }
        let fields: Vec<&str> = line.split(spec.separator).map(str::trim).collect();
        let values = fields
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("column {c}: cannot parse {f:?} as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if spec.target_column >= values.len() {
            return Err(parse_err(
                lineno,
                format!("target column {} missing ({} columns)", spec.target_column, values.len()),
            ));
        }
        let cols: Vec<usize> = match &spec.feature_columns {
            Some(c) => c.clone(),
            None => (0..values.len()).filter(|&c| c != spec.target_column).collect(),
        };
        if let Some(&bad) = cols.iter().find(|&&c| c >= values.len()) {
            return Err(parse_err(lineno, format!("feature column {bad} missing")));
        }
        match width {
            None => width = Some(cols.len()),
            Some(w) if w != cols.len() => {
                return Err(parse_err(lineno, format!("expected {w} features, found {}", cols.len())))
            }
            _ => {}
        }
        features.extend(cols.iter().map(|&c| values[c]));
        let t = values[spec.target_column];
        targets.push(match spec.kind {
            DatasetKind::Classification => binary_target(t)
                .ok_or_else(|| parse_err(lineno, format!("target {t} is not binary")))?,
            DatasetKind::Regression => t,
        });
        rows += 1;
    }
    let Some(width) = width else {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    };
    Dataset::new(
        Matrix::new(rows, width, features)?,
        Matrix::new(rows, 1, targets)?,
        spec.kind,
    )
}

/// Writes feature columns followed by target columns, one example per line.
pub fn export_delimited(data: &Dataset, path: &Path, separator: char) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let sep = separator.to_string();
    for r in 0..data.len() {
        let line: Vec<String> = data
            .features
            .row(r)
            .iter()
            .chain(data.targets.row(r))
            .map(|v| format!("{v:?}"))
            .collect();
        writeln!(w, "{}", line.join(&sep)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- linear statistics

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputDistribution {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std_dev: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetRule {
    /// Every target component equals the constant.
    Constant(f64),
    /// `T = s·I`; needs equal input and output widths.
    Scaled(f64),
    /// `T = M·I + noise` with `M` drawn entrywise from `N(0, 1)`, or as a
    /// product of two Gaussian factors when `rank` is given.
    RandomLinear {
        noise_std_dev: f64,
        #[serde(default)]
        rank: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearStatsSpec {
    pub n: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub input: InputDistribution,
    pub target: TargetRule,
    pub seed: u64,
}

/// A regression set and the moments the averaged dynamics depend on.
#[derive(Clone, Debug)]
pub struct LinearStats {
    pub dataset: Dataset,
    /// `E(IT)`, the (0,0) entry of `Σ_TI`.
    pub alpha: f64,
    /// `E(I²)`, the (0,0) entry of `Σ_II`.
    pub beta: f64,
    /// `E(T²)` summed over output components.
    pub target_energy: f64,
    /// `E(IIᵗ)`, `N_0 × N_0`.
    pub sigma_ii: Matrix,
    /// `E(TIᵗ)`, `N_L × N_0`.
    pub sigma_ti: Matrix,
    /// Some input component has zero second moment.
    pub degenerate: bool,
}

impl LinearStats {
    /// Computes the moments of an existing regression set.
    pub fn from_dataset(dataset: Dataset) -> Result<Self> {
        let n = dataset.len() as f64;
        let sigma_ii = dataset.features.matmul_tn(&dataset.features)?.scale(1.0 / n);
        let sigma_ti = dataset.targets.matmul_tn(&dataset.features)?.scale(1.0 / n);
        let target_energy = dataset.targets.data().iter().map(|t| t * t).sum::<f64>() / n;
        let degenerate = (0..sigma_ii.rows()).any(|i| sigma_ii.get(i, i) == 0.0);
        Ok(Self {
            alpha: sigma_ti.get(0, 0),
            beta: sigma_ii.get(0, 0),
            target_energy,
            sigma_ii,
            sigma_ti,
            degenerate,
            dataset,
        })
    }

    /// `P* = α/β`, or `None` when `β = 0`.
    pub fn fixed_point_product(&self) -> Option<f64> {
        (self.beta != 0.0).then(|| self.alpha / self.beta)
    }
}

pub fn gen_linear_stats(spec: &LinearStatsSpec) -> Result<LinearStats> {
    if spec.n == 0 || spec.input_dim == 0 || spec.output_dim == 0 {
        return Err(Error::config("linear stats need n, input_dim, output_dim ≥ 1"));
    }
    let mut rng = RngStream::new(spec.seed);
    let draw = |rng: &mut RngStream| match spec.input {
        InputDistribution::Constant(v) => v,
        InputDistribution::Uniform { lo, hi } => rng.uniform_range(lo, hi),
        InputDistribution::Normal { mean, std_dev } => rng.normal(mean, std_dev),
    };
    let features = Matrix::from_fn(spec.n, spec.input_dim, |_, _| draw(&mut rng));
    let targets = match spec.target {
        TargetRule::Constant(v) => Matrix::filled(spec.n, spec.output_dim, v),
        TargetRule::Scaled(s) => {
            if spec.input_dim != spec.output_dim {
                return Err(Error::config("scaled target rule needs input_dim = output_dim"));
            }
            features.scale(s)
        }
        TargetRule::RandomLinear { noise_std_dev, rank } => {
            let m = match rank {
                Some(0) => return Err(Error::config("teacher rank must be at least 1")),
                Some(r) => {
                    let u = Matrix::from_fn(spec.output_dim, r, |_, _| rng.standard_normal());
                    let v = Matrix::from_fn(r, spec.input_dim, |_, _| rng.standard_normal() / (r as f64).sqrt());
                    u.matmul(&v)?
                }
                None => Matrix::from_fn(spec.output_dim, spec.input_dim, |_, _| rng.standard_normal()),
            };
            let mut t = features.matmul_nt(&m)?;
            if noise_std_dev > 0.0 {
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v += noise_std_dev * rng.standard_normal());
            }
            t
        }
    };
    LinearStats::from_dataset(Dataset::new(features, targets, DatasetKind::Regression)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_header_decodes() {
        let mut bytes = vec![0, 0, 8, 3];
        for d in [2u32, 28, 28] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend(std::iter::repeat_n(255u8, 2 * 784));
        let img = parse_idx(&bytes).unwrap();
        assert_eq!(img.dims, vec![2, 28, 28]);
        let lab = IdxArray {
            dims: vec![2],
            data: vec![3, 0],
        };
        let ds = idx_pair_to_dataset(&img, &lab).unwrap();
        assert_eq!(ds.features.shape(), (2, 784));
        assert_eq!(ds.features.get(0, 0), 1.0);
        assert_eq!(ds.targets.row(0), &[0., 0., 0., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn idx_errors() {
        assert!(parse_idx(&[0, 0, 9, 3]).unwrap_err().contains("magic"));
        let mut short = vec![0, 0, 8, 1];
        short.extend_from_slice(&5u32.to_be_bytes());
        short.extend_from_slice(&[1, 2]);
        assert!(parse_idx(&short).unwrap_err().contains("truncated"));
        let img = IdxArray {
            dims: vec![2, 1, 1],
            data: vec![0, 0],
        };
        let lab = IdxArray {
            dims: vec![3],
            data: vec![0, 0, 0],
        };
        assert!(idx_pair_to_dataset(&img, &lab).is_err());
    }

    #[test]
    fn bianchini_hand_values() {
        assert_eq!(bianchini_label(0, [0.0, 0.0]), 1.0);
        assert_eq!(bianchini_label(0, [2.0, 0.0]), 0.0);
        assert_eq!(bianchini_map(1, [0.0, 0.0]), [1.0, 1.0]);
        assert_eq!(bianchini_label(1, [0.0, 0.0]), 0.0);
    }

    #[test]
    fn bianchini_k_cap() {
        let spec = BianchiniSpec {
            k: 7,
            n_samples: 10,
            seed: 0,
        };
        assert!(gen_bianchini(&spec).is_err());
    }

    #[test]
    fn linear_stats_examples() {
        let spec = LinearStatsSpec {
            n: 50,
            input_dim: 1,
            output_dim: 1,
            input: InputDistribution::Constant(1.0),
            target: TargetRule::Constant(2.0),
            seed: 0,
        };
        let s = gen_linear_stats(&spec).unwrap();
        assert_eq!((s.alpha, s.beta), (2.0, 1.0));
        assert_eq!(s.fixed_point_product(), Some(2.0));

        let spec = LinearStatsSpec {
            input: InputDistribution::Normal { mean: 0.0, std_dev: 1.5 },
            target: TargetRule::Scaled(3.0),
            n: 200,
            ..spec
        };
        let s = gen_linear_stats(&spec).unwrap();
        assert!((s.alpha - 3.0 * s.beta).abs() < 1e-12);
        assert!((s.fixed_point_product().unwrap() - 3.0).abs() < 1e-12);

        let spec = LinearStatsSpec {
            input: InputDistribution::Constant(0.0),
            ..spec
        };
        let s = gen_linear_stats(&spec).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.fixed_point_product(), None);
    }
}
