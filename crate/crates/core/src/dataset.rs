//! Per-image records, datasets and train/test split assignments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use thiserror::Error;

use crate::rng::RngExt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("view must be 1 or 2, got {0}")]
    InvalidView(u32),
    #[error("{what} has dimension {found}, expected {expected}")]
    InconsistentDimension { what: &'static str, expected: usize, found: usize },
    #[error("identity {0:?} listed more than once")]
    DuplicateIdentity(String),
    #[error("identity {0:?} is not present in the dataset")]
    UnknownIdentity(String),
    #[error("dataset is empty")]
    Empty,
}

/// Camera view. Galleries come from view 1, probes from view 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum View {
    One,
    Two,
}

impl View {
    pub fn from_index(v: u32) -> Result<Self, DatasetError> {
        match v {
            1 => Ok(View::One),
            2 => Ok(View::Two),
            other => Err(DatasetError::InvalidView(other)),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            View::One => 1,
            View::Two => 2,
        }
    }
}

/// One image of one identity with whatever modalities are available for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub identity: String,
    pub view: View,
    pub vision: Option<Vec<f64>>,
    /// Language feature vector, e.g. text-CNN FC1 activations.
    pub language: Option<Vec<f64>>,
    pub tokens: Option<Vec<String>>,
    pub attributes: Option<Vec<bool>>,
}

impl Sample {
    pub fn new(identity: impl Into<String>, view: View) -> Self {
        Self { identity: identity.into(), view, vision: None, language: None, tokens: None, attributes: None }
    }

    pub fn with_vision(mut self, v: Vec<f64>) -> Self {
        self.vision = Some(v);
        self
    }

    pub fn with_language(mut self, v: Vec<f64>) -> Self {
        self.language = Some(v);
        self
    }

    pub fn with_attributes(mut self, bits: Vec<bool>) -> Self {
        self.attributes = Some(bits);
        self
    }
}

/// A validated collection of samples: every present modality has one
/// dimensionality across the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::Empty);
        }
        check_dim(&samples, "vision vector", |s| s.vision.as_ref().map(Vec::len))?;
        check_dim(&samples, "language vector", |s| s.language.as_ref().map(Vec::len))?;
        check_dim(&samples, "attribute vector", |s| s.attributes.as_ref().map(Vec::len))?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted distinct identity labels.
    pub fn identities(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.samples.iter().map(|s| s.identity.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn vision_dim(&self) -> Option<usize> {
        self.samples.iter().find_map(|s| s.vision.as_ref().map(Vec::len))
    }

    pub fn language_dim(&self) -> Option<usize> {
        self.samples.iter().find_map(|s| s.language.as_ref().map(Vec::len))
    }

    pub fn attribute_len(&self) -> Option<usize> {
        self.samples.iter().find_map(|s| s.attributes.as_ref().map(Vec::len))
    }

    pub fn all_have_vision(&self) -> bool {
        self.samples.iter().all(|s| s.vision.is_some())
    }

    pub fn all_have_language(&self) -> bool {
        self.samples.iter().all(|s| s.language.is_some())
    }

    pub fn all_have_attributes(&self) -> bool {
        self.samples.iter().all(|s| s.attributes.is_some())
    }
}

fn check_dim(
    samples: &[Sample],
    what: &'static str,
    dim: impl Fn(&Sample) -> Option<usize>,
) -> Result<(), DatasetError> {
    let mut expected = None;
    for s in samples {
        if let Some(d) = dim(s) {
            match expected {
                None => expected = Some(d),
                Some(e) if e != d => {
                    return Err(DatasetError::InconsistentDimension { what, expected: e, found: d })
                }
                _ => {}
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// Train/test role of every identity in one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub index: usize,
    roles: BTreeMap<String, Role>,
}

impl SplitAssignment {
    pub fn new<I, S>(index: usize, entries: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = (S, Role)>,
        S: Into<String>,
    {
        let mut roles = BTreeMap::new();
        for (id, role) in entries {
            let id = id.into();
            if roles.contains_key(&id) {
                return Err(DatasetError::DuplicateIdentity(id));
            }
            roles.insert(id, role);
        }
        Ok(Self { index, roles })
    }

    pub fn role(&self, identity: &str) -> Option<Role> {
        self.roles.get(identity).copied()
    }

    pub fn is_train(&self, identity: &str) -> bool {
        self.role(identity) == Some(Role::Train)
    }

    pub fn is_test(&self, identity: &str) -> bool {
        self.role(identity) == Some(Role::Test)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Role)> {
        self.roles.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn train_ids(&self) -> Vec<&str> {
        self.entries().filter(|(_, r)| *r == Role::Train).map(|(k, _)| k).collect()
    }

    pub fn test_ids(&self) -> Vec<&str> {
        self.entries().filter(|(_, r)| *r == Role::Test).map(|(k, _)| k).collect()
    }

    /// Every identity named by the split must exist in `known`.
    pub fn check_identities(&self, known: &BTreeSet<String>) -> Result<(), DatasetError> {
        match self.roles.keys().find(|id| !known.contains(*id)) {
            Some(id) => Err(DatasetError::UnknownIdentity(id.clone())),
            None => Ok(()),
        }
    }
}

/// `count` random splits with `train_count` training identities each.
pub fn random_splits<R: RngCore>(
    identities: &[String],
    count: usize,
    train_count: usize,
    rng: &mut R,
) -> Vec<SplitAssignment> {
    assert!(train_count <= identities.len());
    (0..count)
        .map(|index| {
            let mut order: Vec<usize> = (0..identities.len()).collect();
            rng.shuffle(&mut order);
            let entries = order.iter().enumerate().map(|(rank, &i)| {
                let role = if rank < train_count { Role::Train } else { Role::Test };
                (identities[i].clone(), role)
            });
            SplitAssignment::new(index, entries).expect("identities are distinct")
        })
        .collect()
}
