//! On-disk formats: dataset directories, model files, PGM heatmaps and reports.
//!
//! A dataset directory holds `manifest.json` next to either `data.csv`
//! (long format, one row per observation) or `data.lsvd` (raw little-endian
//! doubles). Everything is written deterministically so that loading and
//! saving again reproduces the same bytes.

use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BenchmarkTable;
use crate::model::{
    DatasetError, DualArtifacts, FeatureScaling, Label, LongitudinalDataset, Observation, Subject,
    TrainedClassifier, TrainingMeta,
};
use crate::stats::PermutationReport;
use crate::synth::SynthConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_DATA_FILE: &str = "data.csv";
pub const RAW_DATA_FILE: &str = "data.lsvd";
pub const RAW_MAGIC: &[u8; 4] = b"LSVD";
pub const RAW_VERSION: u32 = 1;
const RAW_HEADER_LEN: usize = 8;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("checksum mismatch: manifest records {expected}, data hashes to {found}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("unexpected end of file: need {expected} bytes, found {found}")]
    UnexpectedEof { expected: usize, found: usize },
    #[error("raw data does not start with the LSVD magic bytes")]
    BadMagic,
    #[error("unsupported raw format version {0}")]
    UnsupportedVersion(u32),
    #[error("manifest disagrees with data: {0}")]
    ManifestMismatch(String),
    #[error("dims describe {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingInput(path.to_path_buf()),
        _ => IoError::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest text that parses back to the same double.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn hex64(v: u64) -> String {
    format!("{v:016x}")
}

/// FNV-1a over ids, labels, times and features, independent of file format.
pub fn dataset_fingerprint(ds: &LongitudinalDataset<f64>) -> String {
    let mut h = FnvHasher::default();
    h.write(&(ds.p() as u64).to_le_bytes());
    for s in ds.subjects() {
        h.write(s.id.as_bytes());
        h.write(&[0, i8::from(s.label) as u8]);
        h.write(&(s.observations.len() as u64).to_le_bytes());
        for o in &s.observations {
            h.write(&o.time.to_le_bytes());
            for v in &o.features {
                h.write(&v.to_le_bytes());
            }
        }
    }
    hex64(h.finish())
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "raw-f64")]
    RawF64,
}

impl DataFormat {
    pub fn default_file(self) -> &'static str {
        match self {
            DataFormat::Csv => CSV_DATA_FILE,
            DataFormat::RawF64 => RAW_DATA_FILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub label: Label,
    pub observations: usize,
    /// Index of the subject's first data row.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub p: usize,
    pub format: DataFormat,
    pub data_file: String,
    pub subjects: Vec<SubjectEntry>,
    /// FNV-1a of the raw data file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    /// Image shape of the feature vector, fastest axis first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SynthConfig>,
}

impl DatasetManifest {
    pub fn describe(
        ds: &LongitudinalDataset<f64>,
        name: impl Into<String>,
        format: DataFormat,
    ) -> Self {
        let mut offset = 0;
        let subjects = ds
            .subjects()
            .iter()
            .map(|s| {
                let e = SubjectEntry {
                    id: s.id.clone(),
                    label: s.label,
                    observations: s.observations.len(),
                    offset,
                };
                offset += s.observations.len();
                e
            })
            .collect();
        Self {
            name: name.into(),
            p: ds.p(),
            format,
            data_file: format.default_file().to_owned(),
            subjects,
            checksum: None,
            shape: None,
            seed: None,
            generator: None,
        }
    }

    pub fn with_generator(mut self, generator: SynthConfig) -> Self {
        self.seed = Some(generator.seed());
        self.generator = Some(generator);
        self
    }

    pub fn with_shape(mut self, shape: Vec<usize>) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn total_rows(&self) -> usize {
        self.subjects.iter().map(|s| s.observations).sum()
    }

    fn check_against(&self, ds: &LongitudinalDataset<f64>) -> Result<()> {
        if ds.p() != self.p {
            return Err(IoError::ManifestMismatch(format!(
                "p is {} in the manifest but {} in the data",
                self.p,
                ds.p()
            )));
        }
        if ds.len() != self.subjects.len() {
            return Err(IoError::ManifestMismatch(format!(
                "{} subjects listed, {} in the data",
                self.subjects.len(),
                ds.len()
            )));
        }
        let mut offset = 0;
        for (e, s) in self.subjects.iter().zip(ds.subjects()) {
            if e.id != s.id
                || e.label != s.label
                || e.observations != s.observations.len()
                || e.offset != offset
            {
                return Err(IoError::ManifestMismatch(format!("entry for subject {}", e.id)));
            }
            offset += e.observations;
        }
        Ok(())
    }
}

/// A dataset together with the manifest it was loaded from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: LongitudinalDataset<f64>,
    pub manifest: Option<DatasetManifest>,
}

impl LoadedDataset {
    /// Image shape from the manifest, else a square when `p` is one, else a single row.
    pub fn shape(&self) -> Vec<usize> {
        if let Some(shape) = self.manifest.as_ref().and_then(|m| m.shape.clone()) {
            return shape;
        }
        default_shape(self.dataset.p())
    }
}

pub fn default_shape(p: usize) -> Vec<usize> {
    let side = (p as f64).sqrt().round() as usize;
    if side * side == p {
        vec![side, side]
    } else {
        vec![p, 1]
    }
}

pub fn csv_header(p: usize) -> Vec<String> {
    let mut h: Vec<String> = ["subject", "label", "time"].map(String::from).to_vec();
    h.extend((0..p).map(|j| format!("f{j}")));
    h
}

pub fn dataset_to_csv(ds: &LongitudinalDataset<f64>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(csv_header(ds.p())).expect("in-memory write");
    let mut row = Vec::with_capacity(ds.p() + 3);
    for s in ds.subjects() {
        let label = i8::from(s.label).to_string();
        for o in &s.observations {
            row.clear();
            row.push(s.id.clone());
            row.push(label.clone());
            row.push(format_f64(o.time));
            row.extend(o.features.iter().map(|&v| format_f64(v)));
            w.write_record(&row).expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

fn parse_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses long-format CSV; rows of a subject must be contiguous and sorted by time.
pub fn dataset_from_csv(bytes: &[u8]) -> Result<LongitudinalDataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 4 {
        return Err(parse_err(1, "expected header subject,label,time,f0,..."));
    }
    let p = header.len() - 3;
    if header.iter().ne(csv_header(p).iter().map(String::as_str)) {
        return Err(parse_err(1, "expected header subject,label,time,f0,..."));
    }

    let mut subjects: Vec<Subject<f64>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[0];
        let label = rec[1]
            .trim_start_matches('+')
            .parse::<i8>()
            .ok()
            .and_then(|v| Label::try_from(v).ok())
            .ok_or_else(|| parse_err(line, format!("label must be +1 or -1, got {:?}", &rec[1])))?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} is not a number: {:?}", header[k].to_owned(), &rec[k])))
        };
        let time = num(2)?;
        let features = (3..rec.len()).map(num).collect::<Result<Vec<_>>>()?;

        match subjects.last_mut() {
            Some(s) if s.id == id => {
                if s.label != label {
                    return Err(parse_err(line, format!("subject {id} changes label")));
                }
                if s.observations.last().is_some_and(|o| time < o.time) {
                    return Err(parse_err(line, format!("rows of subject {id} are not sorted by time")));
                }
                s.observations.push(Observation::new(time, features));
            }
            _ => {
                if !seen.insert(id.to_owned()) {
                    return Err(parse_err(line, format!("rows of subject {id} are not contiguous")));
                }
                subjects.push(Subject::new(id, label, vec![Observation::new(time, features)]));
            }
        }
    }
    Ok(LongitudinalDataset::new(subjects)?)
}

pub fn dataset_to_raw(ds: &LongitudinalDataset<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + ds.total_obs() * (ds.p() + 1) * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    for fo in ds.flat_observations() {
        out.extend_from_slice(&fo.observation.time.to_le_bytes());
        for v in &fo.observation.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes raw rows `[time, f0, ..]` laid out in manifest order.
pub fn dataset_from_raw(bytes: &[u8], manifest: &DatasetManifest) -> Result<LongitudinalDataset<f64>> {
    if let Some(expected) = &manifest.checksum {
        let found = hex64(fnv1a(bytes));
        if &found != expected {
            return Err(IoError::ChecksumMismatch {
                expected: expected.clone(),
                found,
            });
        }
    }
    if bytes.len() < RAW_HEADER_LEN {
        return Err(IoError::UnexpectedEof {
            expected: RAW_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != RAW_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let row = (manifest.p + 1) * 8;
    let expected = RAW_HEADER_LEN + manifest.total_rows() * row;
    if bytes.len() < expected {
        return Err(IoError::UnexpectedEof {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::ManifestMismatch(format!(
            "{} trailing bytes after the last row",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[RAW_HEADER_LEN..];
    let value = |k: usize| f64::from_le_bytes(payload[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    let subjects = manifest
        .subjects
        .iter()
        .map(|e| {
            let observations = (e.offset..e.offset + e.observations)
                .map(|r| {
                    let base = r * (manifest.p + 1);
                    Observation::new(value(base), (1..=manifest.p).map(|j| value(base + j)).collect())
                })
                .collect();
            Subject::new(e.id.clone(), e.label, observations)
        })
        .collect();
    Ok(LongitudinalDataset::new(subjects)?)
}

/// Writes `manifest.json` and the data file into `dir`; the manifest's
/// subject table and checksum are filled in from the dataset.
pub fn save_dataset(
    ds: &LongitudinalDataset<f64>,
    dir: &Path,
    mut manifest: DatasetManifest,
) -> Result<DatasetManifest> {
    let described = DatasetManifest::describe(ds, manifest.name.clone(), manifest.format);
    manifest.p = described.p;
    manifest.subjects = described.subjects;
    let bytes = match manifest.format {
        DataFormat::Csv => {
            manifest.checksum = None;
            dataset_to_csv(ds)
        }
        DataFormat::RawF64 => {
            let bytes = dataset_to_raw(ds);
            manifest.checksum = Some(hex64(fnv1a(&bytes)));
            bytes
        }
    };
    write_bytes(&dir.join(&manifest.data_file), &bytes)?;
    save_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads a dataset directory, its `manifest.json`, or a bare CSV file.
pub fn load_dataset(path: &Path) -> Result<LoadedDataset> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        path.to_path_buf()
    } else {
        let dataset = dataset_from_csv(&read_bytes(path)?)?;
        return Ok(LoadedDataset {
            dataset,
            manifest: None,
        });
    };
    let manifest: DatasetManifest = load_json(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bytes = read_bytes(&dir.join(&manifest.data_file))?;
    let dataset = match manifest.format {
        DataFormat::Csv => dataset_from_csv(&bytes)?,
        DataFormat::RawF64 => dataset_from_raw(&bytes, &manifest)?,
    };
    manifest.check_against(&dataset)?;
    Ok(LoadedDataset {
        dataset,
        manifest: Some(manifest),
    })
}

// ------------------------------------------------------------ json helpers

pub fn to_json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_bytes(path, &to_json_bytes(value)?)
}

pub fn load_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

// ------------------------------------------------------------------ models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub tool_version: String,
    /// Fingerprint of the training data, see [`dataset_fingerprint`].
    pub fingerprint: String,
    /// Box bound; `None` for the hard-margin problem.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub tol: f64,
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub v: Vec<f64>,
    pub a_prime: f64,
    pub b_prime: f64,
    pub v_norm: f64,
    pub t_bar: f64,
    pub alphas: Vec<f64>,
    pub support: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<FeatureScaling>,
    pub meta: TrainingMeta,
}

impl ModelFile {
    pub fn from_classifier(
        clf: &TrainedClassifier<f64>,
        fingerprint: String,
        scaling: Option<FeatureScaling>,
    ) -> Self {
        let raw = &clf.raw;
        Self {
            tool_version: TOOL_VERSION.to_owned(),
            fingerprint,
            c: raw.c.is_finite().then_some(raw.c),
            tol: clf.meta.tol,
            w: clf.w.clone(),
            a: clf.a,
            b: clf.b,
            d: clf.d,
            v: raw.v.clone(),
            a_prime: raw.a_prime,
            b_prime: raw.b_prime,
            v_norm: raw.v_norm,
            t_bar: raw.t_bar,
            alphas: raw.alphas.clone(),
            support: raw.support.iter().map(|&(i, j)| [i, j]).collect(),
            scaling,
            meta: clf.meta.clone(),
        }
    }

    pub fn classifier(&self) -> TrainedClassifier<f64> {
        TrainedClassifier {
            w: self.w.clone(),
            a: self.a,
            b: self.b,
            d: self.d,
            raw: DualArtifacts {
                v: self.v.clone(),
                a_prime: self.a_prime,
                b_prime: self.b_prime,
                v_norm: self.v_norm,
                alphas: self.alphas.clone(),
                support: self.support.iter().map(|&[i, j]| (i, j)).collect(),
                t_bar: self.t_bar,
                c: self.c.unwrap_or(f64::INFINITY),
            },
            meta: self.meta.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

// ---------------------------------------------------------------- heatmaps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapMode {
    Weights,
    Pvalues,
}

fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Grey levels for `values` and, in weights mode, the `(min, max)` range used.
pub fn heatmap_levels(values: &[f64], mode: HeatmapMode) -> (Vec<u8>, Option<(f64, f64)>) {
    match mode {
        HeatmapMode::Pvalues => (
            values.iter().map(|&p| round_half_up(255.0 * (1.0 - p))).collect(),
            None,
        ),
        HeatmapMode::Weights => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            let levels = if span > 0.0 {
                values.iter().map(|&v| round_half_up(255.0 * (v - lo) / span)).collect()
            } else {
                vec![0; values.len()]
            };
            (levels, Some((lo, hi)))
        }
    }
}

/// `dims` lists the axes fastest first; the image is `dims[0]` wide and the
/// remaining axes are stacked vertically.
pub fn image_size(dims: &[usize]) -> (usize, usize) {
    match dims.split_first() {
        Some((&w, rest)) => (w, rest.iter().product()),
        None => (0, 0),
    }
}

pub fn pgm_bytes(width: usize, height: usize, levels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapFiles {
    pub pgm: PathBuf,
    pub csv: PathBuf,
    pub scale: Option<PathBuf>,
}

/// Writes `path` as a binary PGM, `path.csv` with the raw values in image
/// layout and, in weights mode, `path.scale.txt` with the mapped range.
pub fn emit_heatmap(values: &[f64], dims: &[usize], path: &Path, mode: HeatmapMode) -> Result<HeatmapFiles> {
    let expected: usize = dims.iter().product();
    if dims.is_empty() || expected != values.len() {
        return Err(IoError::DimensionMismatch {
            expected,
            found: values.len(),
        });
    }
    let (width, height) = image_size(dims);
    let (levels, range) = heatmap_levels(values, mode);
    write_bytes(path, &pgm_bytes(width, height, &levels))?;

    let mut csv = String::new();
    for row in values.chunks(width) {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    let csv_path = path.with_extension("csv");
    write_bytes(&csv_path, csv.as_bytes())?;

    let scale = match range {
        Some((lo, hi)) => {
            let line = if hi > lo {
                format!("weights scale: 0 -> {}, 255 -> {}\n", format_f64(lo), format_f64(hi))
            } else {
                format!("weights scale: degenerate, min = max = {}, all pixels 0\n", format_f64(lo))
            };
            let p = path.with_extension("scale.txt");
            write_bytes(&p, line.as_bytes())?;
            Some(p)
        }
        None => None,
    };
    Ok(HeatmapFiles {
        pgm: path.to_path_buf(),
        csv: csv_path,
        scale,
    })
}

// ----------------------------------------------------------------- reports

/// Everything needed to rerun a permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermtestConfig {
    pub data: String,
    pub dataset_fingerprint: String,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub tol: f64,
    #[serde(rename = "B")]
    pub permutations: usize,
    pub seed: u64,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermtestReport {
    pub tool_version: String,
    pub config: PermtestConfig,
    pub shape: Vec<usize>,
    pub result: PermutationReport<f64>,
}

pub const REPORT_FILE: &str = "report.json";

/// Writes the JSON report plus raw, BH-adjusted and weight heatmaps into `dir`.
pub fn write_permtest_report(dir: &Path, report: &PermtestReport) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join(REPORT_FILE)];
    save_json(&written[0], report)?;
    let maps = [
        ("raw_p.pgm", &report.result.raw_p, HeatmapMode::Pvalues),
        ("bh_p.pgm", &report.result.adjusted_p, HeatmapMode::Pvalues),
        ("weights.pgm", &report.result.observed_w, HeatmapMode::Weights),
    ];
    for (name, values, mode) in maps {
        let files = emit_heatmap(values, &report.shape, &dir.join(name), mode)?;
        written.push(files.pgm);
        written.push(files.csv);
        written.extend(files.scale);
    }
    Ok(written)
}

/// Accuracy table, one row per trial; the header comments carry the config.
pub fn benchmark_csv(table: &BenchmarkTable) -> Result<String> {
    let cfg = &table.config;
    let mut out = format!("# config: {}\n", serde_json::to_string(cfg)?);
    out.push_str(&format!(
        "# C={} svm_C={} lda_shrinkage={} tol={} seed={}\n",
        format_f64(cfg.c),
        format_f64(cfg.svm_c),
        format_f64(cfg.lda_shrinkage),
        format_f64(cfg.tol),
        cfg.seed
    ));
    out.push_str("trial");
    for m in &table.methods {
        out.push(',');
        out.push_str(m.name());
    }
    out.push('\n');
    for (t, row) in table.accuracies.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in row {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out.push_str("mean");
    for v in &table.means {
        out.push(',');
        out.push_str(&format_f64(*v));
    }
    out.push('\n');
    Ok(out)
}
