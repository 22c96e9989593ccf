//! Classifiers: k-means, random forest, MLP and 1x1 CNN, plus the model file
//! container.
//!
//! Model files are `"LKM1"`, a kind byte (1 k-means, 2 forest, 3 MLP, 4 CNN),
//! a little-endian `u16` version, a `u64` blob length, the blob, and the
//! SHA-256 of the blob. The blob starts with chip size, channel count,
//! optional normalization and class names, followed by the model parameters.

mod codec;
pub mod forest;
pub mod kmeans;
pub mod nn;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{ChipDataset, NormStats};
use crate::error::{LulcError, Result};
use codec::{Reader, Writer};

pub use forest::{
    forest_fit, forest_grid_search, majority, ForestGrid, ForestModel, ForestParams, GridRow, GridSearchResult,
    MaxFeatures, Node, Tree,
};
pub use kmeans::{kmeans_fit, KMeansConfig, KMeansFit, KMeansModel};
pub use nn::{
    cross_entropy, evaluate_network, gradient_check, nn_fit, softmax, CnnModel, CnnSpec, EpochRecord, LearningCurve,
    MlpModel, Network, NeuralModel, TrainConfig,
};

pub const MODEL_MAGIC: &[u8; 4] = b"LKM1";
pub const MODEL_VERSION: u16 = 1;

/// Index of the largest value; ties → lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Row-major feature vectors with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub data: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn new(data: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || data.len() != labels.len() * dim {
            return Err(LulcError::Shape(format!(
                "{} values for {} labels of dimension {dim}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Samples { data, dim, labels })
    }

    /// Flattens each chip in (y, x, channel) order.
    pub fn from_chips(ds: &ChipDataset) -> Result<Self> {
        let labels = ds.labels()?;
        let mut data = Vec::with_capacity(ds.len() * ds.input_dim());
        for c in &ds.chips {
            data.extend_from_slice(&c.data);
        }
        Samples::new(data, ds.input_dim(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Samples {
            data,
            dim: self.dim,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    KMeans,
    Forest,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub const SUPERVISED: [ModelKind; 3] = [ModelKind::Cnn, ModelKind::Forest, ModelKind::Mlp];

    fn tag(self) -> u8 {
        match self {
            ModelKind::KMeans => 1,
            ModelKind::Forest => 2,
            ModelKind::Mlp => 3,
            ModelKind::Cnn => 4,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(ModelKind::KMeans),
            2 => Some(ModelKind::Forest),
            3 => Some(ModelKind::Mlp),
            4 => Some(ModelKind::Cnn),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::KMeans => "kmeans",
            ModelKind::Forest => "rf",
            ModelKind::Mlp => "ann",
            ModelKind::Cnn => "cnn",
        }
    }

    /// Column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::KMeans => "KMeans",
            ModelKind::Forest => "RF",
            ModelKind::Mlp => "ANN",
            ModelKind::Cnn => "CNN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = LulcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(ModelKind::KMeans),
            "rf" | "forest" | "random_forest" => Ok(ModelKind::Forest),
            "ann" | "mlp" => Ok(ModelKind::Mlp),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(LulcError::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    KMeans(KMeansModel),
    Forest(ForestModel),
    Mlp(MlpModel),
    Cnn(CnnModel),
}

/// A fitted model with the chip geometry and normalization it expects.
/// Inputs to the prediction methods are raw (unnormalized) flattened chips.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub body: ModelBody,
    pub chip_size: usize,
    pub channels: usize,
    pub normalization: Option<NormStats>,
    pub class_names: Vec<String>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.body {
            ModelBody::KMeans(_) => ModelKind::KMeans,
            ModelBody::Forest(_) => ModelKind::Forest,
            ModelBody::Mlp(_) => ModelKind::Mlp,
            ModelBody::Cnn(_) => ModelKind::Cnn,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.chip_size * self.chip_size * self.channels
    }

    pub fn n_outputs(&self) -> usize {
        match &self.body {
            ModelBody::KMeans(m) => m.k,
            ModelBody::Forest(m) => m.n_classes,
            ModelBody::Mlp(m) => m.network().n_classes(),
            ModelBody::Cnn(m) => m.network().n_classes(),
        }
    }

    fn normalized<'a>(&self, x: &'a [f64], buf: &'a mut Vec<f64>) -> &'a [f64] {
        match &self.normalization {
            Some(n) => {
                buf.clear();
                buf.extend_from_slice(x);
                n.apply_in_place(buf);
                buf
            }
            None => x,
        }
    }

    /// Class scores for one raw chip: softmax for networks, vote shares for
    /// forests, one-hot nearest centroid for k-means.
    pub fn predict_proba_one(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = Vec::new();
        let x = self.normalized(x, &mut buf);
        match &self.body {
            ModelBody::KMeans(m) => {
                let mut p = vec![0.0; m.k];
                p[m.predict_one(x)] = 1.0;
                p
            }
            ModelBody::Forest(m) => m.predict_proba(x),
            ModelBody::Mlp(m) => m.network().predict_proba(x),
            ModelBody::Cnn(m) => m.network().predict_proba(x),
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        let mut buf = Vec::new();
        let xn = self.normalized(x, &mut buf);
        match &self.body {
            ModelBody::KMeans(m) => m.predict_one(xn),
            ModelBody::Forest(m) => m.predict_one(xn),
            ModelBody::Mlp(m) => argmax(&m.network().logits(xn)),
            ModelBody::Cnn(m) => argmax(&m.network().logits(xn)),
        }
    }

    fn check_rows(&self, data: &[f64]) -> Result<()> {
        if data.len() % self.input_dim() != 0 {
            return Err(LulcError::Shape(format!(
                "{} values do not form rows of {}",
                data.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, data: &[f64]) -> Result<Vec<usize>> {
        self.check_rows(data)?;
        Ok(data
            .par_chunks_exact(self.input_dim())
            .map(|x| self.predict_one(x))
            .collect())
    }

    pub fn predict_proba(&self, data: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_rows(data)?;
        Ok(data
            .par_chunks_exact(self.input_dim())
            .map(|x| self.predict_proba_one(x))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.usize(self.chip_size);
        w.usize(self.channels);
        match &self.normalization {
            Some(n) => {
                w.u8(1);
                w.f64s(&n.mean);
                w.f64s(&n.std);
            }
            None => w.u8(0),
        }
        w.usize(self.class_names.len());
        for name in &self.class_names {
            w.str(name);
        }
        match &self.body {
            ModelBody::KMeans(m) => m.encode(&mut w),
            ModelBody::Forest(m) => m.encode(&mut w),
            ModelBody::Mlp(m) => m.network().encode(&mut w),
            ModelBody::Cnn(m) => m.network().encode(&mut w),
        }
        let blob = w.buf;
        let mut out = Vec::with_capacity(blob.len() + 47);
        out.extend_from_slice(MODEL_MAGIC);
        out.push(self.kind().tag());
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        out.extend_from_slice(&Sha256::digest(&blob));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| LulcError::Format(m.to_string());
        if bytes.len() < 15 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("not a model file"));
        }
        let kind = ModelKind::from_tag(bytes[4]).ok_or_else(|| bad("unknown model kind"))?;
        let version = u16::from_le_bytes([bytes[5], bytes[6]]);
        if version != MODEL_VERSION {
            return Err(LulcError::Format(format!(
                "model version {version}, expected {MODEL_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
        if bytes.len() != 15usize.saturating_add(len).saturating_add(32) {
            return Err(bad("model file length does not match its header"));
        }
        let blob = &bytes[15..15 + len];
        if Sha256::digest(blob).as_slice() != &bytes[15 + len..] {
            return Err(bad("model checksum mismatch"));
        }
        let mut r = Reader::new(blob);
        let chip_size = r.usize()?;
        let channels = r.usize()?;
        let normalization = match r.u8()? {
            0 => None,
            1 => Some(NormStats {
                mean: r.f64s()?,
                std: r.f64s()?,
            }),
            _ => return Err(bad("bad normalization flag")),
        };
        let n_names = r.usize()?;
        let class_names = (0..n_names).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let body = match kind {
            ModelKind::KMeans => ModelBody::KMeans(KMeansModel::decode(&mut r)?),
            ModelKind::Forest => ModelBody::Forest(ForestModel::decode(&mut r)?),
            ModelKind::Mlp => ModelBody::Mlp(MlpModel::from_network(Network::decode(&mut r)?)?),
            ModelKind::Cnn => ModelBody::Cnn(CnnModel::from_network(Network::decode(&mut r)?, chip_size, channels)?),
        };
        r.finish()?;
        let model = TrainedModel {
            body,
            chip_size,
            channels,
            normalization,
            class_names,
        };
        let dim = match &model.body {
            ModelBody::KMeans(m) => m.dim,
            ModelBody::Forest(m) => m.dim,
            ModelBody::Mlp(m) => m.network().input_dim(),
            ModelBody::Cnn(m) => m.network().input_dim(),
        };
        if dim != model.input_dim() {
            return Err(bad("model input size disagrees with its chip geometry"));
        }
        Ok(model)
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_bytes()).map_err(|e| LulcError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LulcError::io(path, e))?;
    TrainedModel::from_bytes(&bytes)
}

/// Loads a model and rejects files of any other kind.
pub fn load_model_as(path: impl AsRef<Path>, kind: ModelKind) -> Result<TrainedModel> {
    let m = load_model(path)?;
    if m.kind() != kind {
        return Err(LulcError::Format(format!(
            "expected a {kind} model, found {}",
            m.kind()
        )));
    }
    Ok(m)
}
