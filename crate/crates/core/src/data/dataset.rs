use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::idx::{load_idx_images, load_idx_labels, normalize, RawImages};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const TRAIN_SIZE: usize = 50_000;
pub const VALIDATION_SIZE: usize = 10_000;
pub const EVAL_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    InDistribution,
    OutOfDistribution,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::InDistribution => "in_distribution",
            Provenance::OutOfDistribution => "out_of_distribution",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
    Evaluation,
}

/// Normalized images `[n, rows, cols, 1]` with optional labels and per-sample provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    images: Tensor<T>,
    labels: Option<Vec<u8>>,
    provenance: Vec<Provenance>,
    role: Role,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Tensor<T>, labels: Option<Vec<u8>>, provenance: Provenance, role: Role) -> Result<Self> {
        let n = images.batch();
        Self::with_provenance(images, labels, vec![provenance; n], role)
    }

    fn with_provenance(
        images: Tensor<T>,
        labels: Option<Vec<u8>>,
        provenance: Vec<Provenance>,
        role: Role,
    ) -> Result<Self> {
        if images.shape().len() != 4 || images.shape()[3] != 1 {
            return Err(Error::Shape(format!("dataset images must be [n, rows, cols, 1], got {:?}", images.shape())));
        }
        let n = images.batch();
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::DatasetSize(format!("{} images but {} labels", n, labels.len())));
            }
            if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 9) {
                return Err(Error::LabelRange { index, value });
            }
        }
        if images.data().iter().any(|v| !(T::zero()..=T::one()).contains(v)) {
            return Err(Error::Shape("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { images, labels, provenance, role })
    }

    pub fn from_raw(raw: &RawImages, labels: Option<Vec<u8>>, provenance: Provenance, role: Role) -> Result<Self> {
        Self::new(normalize(raw), labels, provenance, role)
    }

    /// Loads an IDX image file and (optionally) its label file.
    pub fn load(images: impl AsRef<Path>, labels: Option<&Path>, provenance: Provenance, role: Role) -> Result<Self> {
        let raw = load_idx_images(images)?;
        let labels = labels.map(load_idx_labels).transpose()?;
        Self::from_raw(&raw, labels, provenance, role)
    }

    pub fn len(&self) -> usize {
        self.images.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// The provenance shared by every sample, if there is one.
    pub fn uniform_provenance(&self) -> Option<Provenance> {
        let first = *self.provenance.first()?;
        self.provenance.iter().all(|&p| p == first).then_some(first)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            role: self.role,
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn filter_provenance(&self, provenance: Provenance) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.provenance[i] == provenance).collect();
        self.subset(&idx)
    }

    /// Concatenation that keeps each sample's provenance.
    pub fn concat(parts: &[&Self], role: Role) -> Result<Self> {
        let images = Tensor::concat(&parts.iter().map(|d| &d.images).collect::<Vec<_>>())?;
        let labels = parts.iter().map(|d| d.labels.clone()).collect::<Option<Vec<_>>>().map(|ls| ls.concat());
        let provenance = parts.iter().flat_map(|d| d.provenance.iter().copied()).collect();
        Self::with_provenance(images, labels, provenance, role)
    }

    /// One-hot `[n, classes]` targets.
    pub fn one_hot(&self, classes: usize) -> Result<Tensor<T>> {
        let labels = self.labels.as_ref().ok_or(Error::Empty("dataset has no labels"))?;
        Ok(one_hot(labels, classes))
    }
}

pub fn one_hot<T: Scalar>(labels: &[u8], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(vec![labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * classes + l as usize] = T::one();
    }
    t
}

/// Seeded shuffle of `0..n`, cut into `(first n_first, rest)`.
pub fn split_indices(n: usize, n_first: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rest = idx.split_off(n_first.min(n));
    (idx, rest)
}

/// Seeded disjoint split into `n_train` training and the remaining validation samples.
pub fn split<T: Scalar>(full: &Dataset<T>, n_train: usize, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if n_train > full.len() {
        return Err(Error::DatasetSize(format!("cannot take {n_train} training samples from {}", full.len())));
    }
    let (train, val) = split_indices(full.len(), n_train, seed);
    Ok((full.subset(&train).with_role(Role::Train), full.subset(&val).with_role(Role::Validation)))
}

/// The 50,000 / 10,000 train/validation split of a 60,000-image training set.
pub fn make_train_split<T: Scalar>(full: &Dataset<T>, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    if full.len() != TRAIN_SIZE + VALIDATION_SIZE {
        return Err(Error::DatasetSize(format!(
            "training set must hold {} images, got {}",
            TRAIN_SIZE + VALIDATION_SIZE,
            full.len()
        )));
    }
    split(full, TRAIN_SIZE, seed)
}

/// In-distribution, out-of-distribution and mixed evaluation sets.
#[derive(Debug, Clone)]
pub struct EvalSuite<T> {
    pub in_dist: Dataset<T>,
    pub out_dist: Dataset<T>,
    pub mixed: Dataset<T>,
}

impl<T: Scalar> EvalSuite<T> {
    /// Builds a suite from sets of any size; provenance tags must be uniform and correct.
    pub fn from_parts(in_dist: Dataset<T>, out_dist: Dataset<T>) -> Result<Self> {
        if in_dist.is_empty() || out_dist.is_empty() {
            return Err(Error::Empty("evaluation sets must be nonempty"));
        }
        if in_dist.uniform_provenance() != Some(Provenance::InDistribution)
            || out_dist.uniform_provenance() != Some(Provenance::OutOfDistribution)
        {
            return Err(Error::DatasetSize("evaluation sets carry the wrong provenance tags".into()));
        }
        let in_dist = in_dist.with_role(Role::Evaluation);
        let out_dist = out_dist.with_role(Role::Evaluation);
        let mixed = Dataset::concat(&[&in_dist, &out_dist], Role::Evaluation)?;
        Ok(Self { in_dist, out_dist, mixed })
    }
}

/// The canonical suite: 10,000 digit and 10,000 fashion test images, 20,000 mixed.
pub fn build_eval_suite<T: Scalar>(digit_test: Dataset<T>, fashion_test: Dataset<T>) -> Result<EvalSuite<T>> {
    for (name, d) in [("digit", &digit_test), ("fashion", &fashion_test)] {
        if d.len() != EVAL_SIZE {
            return Err(Error::DatasetSize(format!("{name} test set must hold {EVAL_SIZE} images, got {}", d.len())));
        }
    }
    EvalSuite::from_parts(digit_test, fashion_test)
}
