//! Labeled configuration datasets: sampling, splitting, target scaling and files.
//!
//! Two on-disk formats are supported. The CSV form has a `q0,..,q{J-1},y`
//! header and writes every angle with 17 significant digits so that reading
//! it back is bit-exact. The binary form starts with the magic `CSL1`,
//! followed by the row count (`u64`), the joint count (`u32`) and then, per
//! row, the angles as little-endian `f64` and the label as an `i8`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{CollisionChecker, CollisionLabel, Environment};
use crate::kinematics;
use crate::rng::substream;
use crate::{Error, Result, TOOL_VERSION};

pub const BINARY_MAGIC: &[u8; 4] = b"CSL1";

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    configurations: Array2<f64>,
    labels: Vec<CollisionLabel>,
    env_ref: String,
    features: OnceLock<Array2<f64>>,
}

impl PartialEq for LabeledDataset {
    fn eq(&self, other: &Self) -> bool {
        self.configurations == other.configurations
            && self.labels == other.labels
            && self.env_ref == other.env_ref
    }
}

impl LabeledDataset {
    pub fn new(
        configurations: Array2<f64>,
        labels: Vec<CollisionLabel>,
        env_ref: impl Into<String>,
    ) -> Result<Self> {
        if configurations.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: configurations.nrows(),
                got: labels.len(),
            });
        }
        Ok(Self {
            configurations,
            labels,
            env_ref: env_ref.into(),
            features: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.configurations.ncols()
    }

    pub fn configurations(&self) -> &Array2<f64> {
        &self.configurations
    }

    pub fn labels(&self) -> &[CollisionLabel] {
        &self.labels
    }

    pub fn env_ref(&self) -> &str {
        &self.env_ref
    }

    pub fn collision_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|l| l.is_collision()).count() as f64 / self.len() as f64
    }

    /// FK features of every row, computed on first use and cached.
    pub fn fk_features(&self, env: &Environment) -> Result<&Array2<f64>> {
        if !self.env_ref.is_empty() && self.env_ref != env.reference() {
            return Err(Error::InvalidInput(format!(
                "dataset was sampled from environment {} but {} was supplied",
                self.env_ref,
                env.reference()
            )));
        }
        if env.dof() != self.dof() {
            return Err(Error::DimensionMismatch {
                context: "dataset vs environment DoF",
                expected: env.dof(),
                got: self.dof(),
            });
        }
        if let Some(features) = self.features.get() {
            return Ok(features);
        }
        let features = compute_features(env, &self.configurations)?;
        Ok(self.features.get_or_init(|| features))
    }

    /// Hex SHA-256 of the row-major configurations and labels.
    pub fn content_reference(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dof() as u64).to_le_bytes());
        for v in self.configurations.iter() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update([l.value() as u8]);
        }
        hex::encode(h.finalize())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let configurations = self.configurations.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let features = OnceLock::new();
        if let Some(cached) = self.features.get() {
            let _ = features.set(cached.select(Axis(0), indices));
        }
        Self {
            configurations,
            labels,
            env_ref: self.env_ref.clone(),
            features,
        }
    }
}

/// FK feature matrix (`n × 3·links`) for a batch of configurations.
pub fn compute_features(env: &Environment, configurations: &Array2<f64>) -> Result<Array2<f64>> {
    env.validate()?;
    if configurations.ncols() != env.dof() {
        return Err(Error::DimensionMismatch {
            context: "FK features",
            expected: env.dof(),
            got: configurations.ncols(),
        });
    }
    let d = env.feature_dim();
    let n = configurations.nrows();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let q = configurations.row(i).to_vec();
            let mut row = vec![0.0; d];
            kinematics::fk_features_unchecked(&env.robots, &q, &mut row);
            row
        })
        .collect();
    let out = Array2::from_shape_vec((n, d), values).expect("feature rows have width d");
    Ok(out)
}

/// `n` configurations drawn uniformly within joint limits, labeled by the oracle.
pub fn sample_dataset(env: &Environment, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let checker = CollisionChecker::new(env)?;
    let dof = env.dof();
    let rows: Vec<(Vec<f64>, CollisionLabel)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "sample", i as u64);
            let q = kinematics::sample_uniform(&env.robots, &mut rng);
            let label = checker.check(&q)?;
            Ok((q, label))
        })
        .collect::<Result<_>>()?;
    let mut configurations = Array2::zeros((n, dof));
    let mut labels = Vec::with_capacity(n);
    for (mut dst, (q, label)) in configurations.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(&q));
        labels.push(label);
    }
    LabeledDataset::new(configurations, labels, env.reference())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub shuffle_seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, shuffle_seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train fraction {train_fraction} must lie strictly between 0 and 1"
            )));
        }
        Ok(Self {
            train_fraction,
            shuffle_seed,
        })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.95,
            shuffle_seed: 0,
        }
    }
}

/// Index partition used by [`split`]: seeded shuffle, then prefix split.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    SplitSpec::new(spec.train_fraction, spec.shuffle_seed)?;
    if n == 0 {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    // Guard against products like 0.95 * n landing a hair above an integer.
    let n_train = (spec.train_fraction * n as f64 - 1e-9).ceil() as usize;
    if n_train >= n {
        return Err(Error::InvalidInput(format!(
            "train fraction {} leaves no validation rows out of {n}",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(spec.shuffle_seed, "split", 0));
    let validation = order.split_off(n_train);
    Ok((order, validation))
}

pub fn split(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, validation) = split_indices(dataset.len(), spec)?;
    Ok((dataset.select(&train), dataset.select(&validation)))
}

/// Regression targets: free stays `-1`, collision becomes `+beta`.
pub fn scale_targets(labels: &[CollisionLabel], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("bias beta {beta} must be positive")));
    }
    Ok(labels
        .iter()
        .map(|l| match l {
            CollisionLabel::Free => -1.0,
            CollisionLabel::Collision => beta,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub env_ref: String,
    pub n: usize,
    pub seed: u64,
    /// Fraction of rows labeled as collisions.
    pub density_estimate: f64,
    pub tool_version: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl DatasetMetadata {
    pub fn describe(dataset: &LabeledDataset, seed: u64) -> Self {
        Self {
            env_ref: dataset.env_ref.clone(),
            n: dataset.len(),
            seed,
            density_estimate: dataset.collision_fraction(),
            tool_version: TOOL_VERSION.to_string(),
            config: serde_json::Value::Null,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Binary,
}

pub fn write_csv<W: Write>(dataset: &LabeledDataset, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dataset.dof()).map(|j| format!("q{j}")).collect();
    header.push("y".into());
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(dataset.dof() + 1);
    for (row, label) in dataset.configurations.axis_iter(Axis(0)).zip(&dataset.labels) {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v:.16e}")));
        record.push(label.to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a CSV dataset. The header must be `q0..q{J-1},y`.
pub fn read_csv<R: Read>(reader: R, env_ref: impl Into<String>) -> Result<LabeledDataset> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    let dof = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
        Error::Format("dataset header needs at least one joint column and `y`".into())
    })?;
    for (j, name) in header.iter().take(dof).enumerate() {
        if name != format!("q{j}") {
            return Err(Error::Format(format!("expected column q{j}, found `{name}`")));
        }
    }
    if &header[dof] != "y" {
        return Err(Error::Format("last column must be `y`".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in input.records() {
        let record = record?;
        for field in record.iter().take(dof) {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad angle `{field}`: {e}")))?,
            );
        }
        let y = record[dof]
            .trim()
            .parse::<i64>()
            .map_err(|e| Error::Format(format!("bad label `{}`: {e}", &record[dof])))?;
        labels.push(CollisionLabel::from_value(y)?);
    }
    let configurations = Array2::from_shape_vec((labels.len(), dof), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    LabeledDataset::new(configurations, labels, env_ref)
}

pub fn write_binary<W: Write>(dataset: &LabeledDataset, mut writer: W) -> Result<()> {
    writer.write_all(BINARY_MAGIC)?;
    writer.write_all(&(dataset.len() as u64).to_le_bytes())?;
    writer.write_all(&(dataset.dof() as u32).to_le_bytes())?;
    for (row, label) in dataset.configurations.axis_iter(Axis(0)).zip(&dataset.labels) {
        for v in row {
            writer.write_all(&v.to_le_bytes())?;
        }
        writer.write_all(&label.value().to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R, env_ref: impl Into<String>) -> Result<LabeledDataset> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("missing CSL1 magic".into()));
    }
    let mut n = [0u8; 8];
    reader.read_exact(&mut n)?;
    let mut dof = [0u8; 4];
    reader.read_exact(&mut dof)?;
    let n = u64::from_le_bytes(n) as usize;
    let dof = u32::from_le_bytes(dof) as usize;
    let mut values = Vec::with_capacity(n * dof);
    let mut labels = Vec::with_capacity(n);
    let mut word = [0u8; 8];
    for _ in 0..n {
        for _ in 0..dof {
            reader.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        let mut label = [0u8; 1];
        reader.read_exact(&mut label)?;
        labels.push(CollisionLabel::from_value(i8::from_le_bytes(label).into())?);
    }
    let configurations =
        Array2::from_shape_vec((n, dof), values).map_err(|e| Error::Format(e.to_string()))?;
    LabeledDataset::new(configurations, labels, env_ref)
}

pub fn save(dataset: &LabeledDataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        DatasetFormat::Csv => write_csv(dataset, file),
        DatasetFormat::Binary => write_binary(dataset, file),
    }
}

/// Loads either format, detected from the leading bytes.
pub fn load(path: &Path, env_ref: impl Into<String>) -> Result<LabeledDataset> {
    let mut file = BufReader::new(File::open(path)?);
    let mut head = [0u8; 4];
    let is_binary = file.read_exact(&mut head).is_ok() && &head == BINARY_MAGIC;
    let file = BufReader::new(File::open(path)?);
    if is_binary {
        read_binary(file, env_ref)
    } else {
        read_csv(file, env_ref)
    }
}

/// FK feature matrix as CSV with an `f0..f{d-1}` header.
pub fn write_features_csv<W: Write>(features: &Array2<f64>, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record((0..features.ncols()).map(|j| format!("f{j}")))?;
    for row in features.axis_iter(Axis(0)) {
        out.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    out.flush()?;
    Ok(())
}
