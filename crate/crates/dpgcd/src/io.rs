//! Dataset files: CSV, libsvm and the dataset manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dpgcd_core::synth::LabelMode;
use dpgcd_core::Dataset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: dpgcd_core::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

pub type IoResult<T> = std::result::Result<T, IoError>;

/// Where the label lives in a CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    First,
    Last,
    Index(usize),
}

impl LabelColumn {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" => Some(LabelColumn::First),
            "last" => Some(LabelColumn::Last),
            _ => s.parse().ok().map(LabelColumn::Index),
        }
    }

    fn resolve(self, width: usize) -> Option<usize> {
        match self {
            LabelColumn::First => Some(0),
            LabelColumn::Last => width.checked_sub(1),
            LabelColumn::Index(i) if i < width => Some(i),
            LabelColumn::Index(_) => None,
        }
    }
}

/// How labels are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Any finite value.
    Regression,
    /// Values in `{-1, +1}`; with `map_binary`, `{0, 1}` is mapped to
    /// `{-1, +1}`.
    Classification { map_binary: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub header: bool,
    pub labels: LabelKind,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::Last,
            header: false,
            labels: LabelKind::Regression,
        }
    }
}

pub(crate) fn map_label(value: f64, kind: LabelKind) -> Option<f64> {
    match kind {
        LabelKind::Regression => Some(value),
        LabelKind::Classification { map_binary } => match value {
            v if v == 1.0 => Some(1.0),
            v if v == -1.0 => Some(-1.0),
            v if v == 0.0 && map_binary => Some(-1.0),
            _ => None,
        },
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> IoResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_csv(&text, path, options)
}

/// Parses CSV text; `path` is only used in error messages.
pub fn parse_csv(text: &str, path: &Path, options: &CsvOptions) -> IoResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut width = None;
    let mut label_at = 0;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            IoError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => {
                if record.len() < 2 {
                    return Err(IoError::parse(path, line, "need at least one feature and a label"));
                }
                label_at = options
                    .label_column
                    .resolve(record.len())
                    .ok_or_else(|| IoError::parse(path, line, "label column out of range"))?;
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(IoError::parse(
                    path,
                    line,
                    format!("expected {w} fields, found {}", record.len()),
                ));
            }
            Some(_) => {}
        }
        for (k, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| IoError::parse(path, line, format!("field {}: not a number: {cell:?}", k + 1)))?;
            if !value.is_finite() {
                return Err(IoError::parse(path, line, format!("field {}: not finite", k + 1)));
            }
            if k == label_at {
                let label = map_label(value, options.labels)
                    .ok_or_else(|| IoError::parse(path, line, format!("unknown class label {cell:?}")))?;
                labels.push(label);
            } else {
                features.push(value);
            }
        }
    }
    let width = width.ok_or_else(|| IoError::parse(path, 0, "no data rows"))?;
    let n = labels.len();
    Dataset::from_rows(dataset_name(path), n, width - 1, features, labels).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV text with the label in the last column. Floats use the shortest
/// representation that parses back to the same value.
pub fn format_csv(data: &Dataset, header: bool) -> String {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
        out.push_str(&names.join(","));
        out.push_str(",y\n");
    }
    for i in 0..data.n() {
        for x in data.row(i) {
            out.push_str(&format!("{x:?},"));
        }
        out.push_str(&format!("{:?}\n", data.labels()[i]));
    }
    out
}

pub fn save_csv(data: &Dataset, path: &Path, header: bool) -> IoResult<()> {
    write_file(path, format_csv(data, header).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> IoResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    f.write_all(bytes).map_err(|e| IoError::io(path, e))
}

/// Loads `<label> <index>:<value> ...` rows with 1-based indices. Columns
/// beyond `dimension` grow the dataset.
pub fn load_libsvm(path: &Path, dimension: usize) -> IoResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_libsvm(&text, path, dimension)
}

pub fn parse_libsvm(text: &str, path: &Path, dimension: usize) -> IoResult<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut p = dimension;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| IoError::parse(path, line, format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| IoError::parse(path, line, format!("malformed token {tok:?}")))?;
            let idx: i64 = idx
                .parse()
                .map_err(|_| IoError::parse(path, line, format!("bad index in {tok:?}")))?;
            if idx <= 0 {
                return Err(IoError::parse(path, line, format!("index must be positive in {tok:?}")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| IoError::parse(path, line, format!("bad value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(IoError::parse(path, line, format!("value not finite in {tok:?}")));
            }
            let j = idx as usize - 1;
            p = p.max(j + 1);
            row.push((j, val));
        }
        rows.push(row);
        labels.push(label);
    }
    let n = rows.len();
    let mut features = vec![0.0; n * p];
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row {
            features[i * p + j] = *v;
        }
    }
    Dataset::from_rows(dataset_name(path), n, p, features, labels).map_err(|source| IoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

/// SHA-256 over `n`, `p`, the features and the labels (little-endian bit
/// patterns).
pub fn dataset_checksum(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.p() as u64).to_le_bytes());
    for x in data.features() {
        h.update(x.to_bits().to_le_bytes());
    }
    for y in data.labels() {
        h.update(y.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub source: Source,
    pub checksum: String,
    pub label_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizationRecord {
    pub mode: String,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Records and features of the public datasets the loaders are meant for.
pub const KNOWN_DIMENSIONS: [(&str, usize, usize); 7] = [
    ("log1", 1000, 100),
    ("log2", 1000, 100),
    ("sparse", 1000, 1000),
    ("california", 20640, 8),
    ("mtp", 4450, 202),
    ("madelon", 2000, 500),
    ("dexter", 600, 20000),
];

impl DatasetManifest {
    pub fn for_dataset(data: &Dataset, source: Source, label_mode: LabelMode) -> Self {
        Self {
            name: data.name().to_string(),
            n: data.n(),
            p: data.p(),
            source,
            checksum: dataset_checksum(data),
            label_mode: label_mode.name().into(),
            seed: None,
            data_file: None,
            standardization: None,
        }
    }

    /// Checks the manifest against loaded data, including the known
    /// dimensions of named public datasets.
    pub fn verify(&self, data: &Dataset) -> std::result::Result<(), String> {
        if self.n != data.n() || self.p != data.p() {
            return Err(format!(
                "dimensions {}x{} do not match the data ({}x{})",
                self.n,
                self.p,
                data.n(),
                data.p()
            ));
        }
        if let Some((_, n, p)) = KNOWN_DIMENSIONS.iter().find(|(name, _, _)| *name == self.name) {
            if self.source == Source::File && (self.n, self.p) != (*n, *p) {
                return Err(format!("{} should have {} records and {} features", self.name, n, p));
            }
        }
        let sum = dataset_checksum(data);
        if sum != self.checksum {
            return Err(format!("checksum mismatch: manifest {}, data {}", self.checksum, sum));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> IoResult<()> {
        write_file(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        toml::from_str(&text).map_err(|e| IoError::Manifest {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }
}
