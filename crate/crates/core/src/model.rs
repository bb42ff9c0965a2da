//! Subjects, datasets, the margin function and the aggregate-margin prediction rule.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, Scalar};

/// Scores strictly inside `(-TIE_TOLERANCE, TIE_TOLERANCE)` are labelled `+1`
/// but flagged as inconclusive.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("subject {subject} has no observations")]
    EmptySubject { subject: String },
    #[error("feature dimension mismatch in subject {subject}: expected {expected}, found {found}")]
    DimensionMismatch {
        subject: String,
        expected: usize,
        found: usize,
    },
    #[error("observation times of subject {subject} are not sorted")]
    UnsortedTimes { subject: String },
    #[error("non-finite value in subject {subject}")]
    NonFiniteValue { subject: String },
    #[error("training needs both classes, found only {0}")]
    SingleClass(Label),
    #[error("feature dimension must be positive")]
    ZeroDimension,
}

/// Binary class label, serialized as `+1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn from_score<T: Scalar>(score: T) -> Self {
        if score >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("+1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

/// One measurement of a subject: a time stamp and a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub time: T,
    pub features: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    pub fn new(time: T, features: Vec<T>) -> Self {
        Self { time, features }
    }
}

/// A labelled trajectory, e.g. one breeding line followed over generations.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject<T> {
    pub id: String,
    pub label: Label,
    pub observations: Vec<Observation<T>>,
}

impl<T: Scalar> Subject<T> {
    pub fn new(id: impl Into<String>, label: Label, observations: Vec<Observation<T>>) -> Self {
        Self {
            id: id.into(),
            label,
            observations,
        }
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.observations.iter().map(|o| o.time)
    }
}

/// A validated collection of subjects sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset<T> {
    p: usize,
    subjects: Vec<Subject<T>>,
    total_obs: usize,
}

/// Checks every dataset invariant and caches the total observation count.
///
/// A dataset holding a single class is valid here; training rejects it
/// through [`LongitudinalDataset::require_both_classes`].
pub fn validate_dataset<T: Scalar>(
    subjects: Vec<Subject<T>>,
) -> Result<LongitudinalDataset<T>, DatasetError> {
    let first = subjects.first().ok_or(DatasetError::EmptyDataset)?;
    let p = first
        .observations
        .first()
        .ok_or_else(|| DatasetError::EmptySubject {
            subject: first.id.clone(),
        })?
        .features
        .len();
    if p == 0 {
        return Err(DatasetError::ZeroDimension);
    }
    let mut total_obs = 0;
    for s in &subjects {
        if s.observations.is_empty() {
            return Err(DatasetError::EmptySubject {
                subject: s.id.clone(),
            });
        }
        let mut prev = T::neg_infinity();
        for o in &s.observations {
            if o.features.len() != p {
                return Err(DatasetError::DimensionMismatch {
                    subject: s.id.clone(),
                    expected: p,
                    found: o.features.len(),
                });
            }
            if !o.time.is_finite() || o.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFiniteValue {
                    subject: s.id.clone(),
                });
            }
            if o.time < prev {
                return Err(DatasetError::UnsortedTimes {
                    subject: s.id.clone(),
                });
            }
            prev = o.time;
        }
        total_obs += s.observations.len();
    }
    Ok(LongitudinalDataset {
        p,
        subjects,
        total_obs,
    })
}

impl<T: Scalar> LongitudinalDataset<T> {
    pub fn new(subjects: Vec<Subject<T>>) -> Result<Self, DatasetError> {
        validate_dataset(subjects)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn subjects(&self) -> &[Subject<T>] {
        &self.subjects
    }

    pub fn into_subjects(self) -> Vec<Subject<T>> {
        self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn total_obs(&self) -> usize {
        self.total_obs
    }

    /// Observations in `(subject, observation)` lexicographic order.
    pub fn flat_observations(&self) -> impl Iterator<Item = FlatObservation<'_, T>> + '_ {
        self.subjects.iter().enumerate().flat_map(|(i, s)| {
            s.observations
                .iter()
                .enumerate()
                .map(move |(j, o)| FlatObservation {
                    subject: i,
                    index: j,
                    label: s.label,
                    observation: o,
                })
        })
    }

    /// `(positive, negative)` subject counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self
            .subjects
            .iter()
            .filter(|s| s.label == Label::Positive)
            .count();
        (pos, self.subjects.len() - pos)
    }

    pub fn require_both_classes(&self) -> Result<(), DatasetError> {
        match self.class_counts() {
            (0, _) => Err(DatasetError::SingleClass(Label::Negative)),
            (_, 0) => Err(DatasetError::SingleClass(Label::Positive)),
            _ => Ok(()),
        }
    }

    /// Same observations, labels replaced subject by subject.
    pub fn relabeled(&self, labels: &[Label]) -> Self {
        assert_eq!(labels.len(), self.subjects.len());
        let subjects = self
            .subjects
            .iter()
            .zip(labels)
            .map(|(s, &label)| Subject {
                label,
                ..s.clone()
            })
            .collect();
        Self {
            p: self.p,
            subjects,
            total_obs: self.total_obs,
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// Converts the element type, e.g. `f64` data into an `f32` dataset.
    pub fn cast<U: Scalar>(&self) -> LongitudinalDataset<U> {
        let conv = |v: T| U::of(v.as_f64());
        LongitudinalDataset {
            p: self.p,
            total_obs: self.total_obs,
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject {
                    id: s.id.clone(),
                    label: s.label,
                    observations: s
                        .observations
                        .iter()
                        .map(|o| Observation {
                            time: conv(o.time),
                            features: o.features.iter().map(|&v| conv(v)).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Per-feature centering and scaling fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features keep scale `1`.
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    pub fn fit<T: Scalar>(ds: &LongitudinalDataset<T>) -> Self {
        let p = ds.p();
        let n = ds.total_obs() as f64;
        let mut mean = vec![0.0; p];
        for fo in ds.flat_observations() {
            for (m, v) in mean.iter_mut().zip(&fo.observation.features) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for fo in ds.flat_observations() {
            for ((s, v), m) in var.iter_mut().zip(&fo.observation.features).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_features<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| T::of((v.as_f64() - m) / s))
            .collect()
    }

    pub fn apply_observations<T: Scalar>(&self, obs: &[Observation<T>]) -> Vec<Observation<T>> {
        obs.iter()
            .map(|o| Observation::new(o.time, self.apply_features(&o.features)))
            .collect()
    }

    pub fn apply<T: Scalar>(&self, ds: &LongitudinalDataset<T>) -> LongitudinalDataset<T> {
        let subjects = ds
            .subjects()
            .iter()
            .map(|s| Subject {
                id: s.id.clone(),
                label: s.label,
                observations: self.apply_observations(&s.observations),
            })
            .collect();
        LongitudinalDataset {
            p: ds.p,
            subjects,
            total_obs: ds.total_obs,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlatObservation<'a, T> {
    pub subject: usize,
    pub index: usize,
    pub label: Label,
    pub observation: &'a Observation<T>,
}

/// Linear margin model `m(t) = a·t + d`. Negative values are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginFunction<T> {
    pub a: T,
    pub d: T,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("average margin needs at least one time point")]
pub struct EmptyTimes;

impl<T: Scalar> MarginFunction<T> {
    pub fn new(a: T, d: T) -> Self {
        Self { a, d }
    }

    pub fn evaluate(&self, t: T) -> T {
        self.a * t + self.d
    }

    /// `(2a/n)·Σtⱼ + 2d`: twice the mean margin over the given times.
    pub fn average(&self, times: &[T]) -> Result<T, EmptyTimes> {
        if times.is_empty() {
            return Err(EmptyTimes);
        }
        let n = T::of(times.len() as f64);
        let sum: T = times.iter().copied().sum();
        Ok((self.a + self.a) / n * sum + self.d + self.d)
    }
}

pub fn evaluate_margin<T: Scalar>(m: &MarginFunction<T>, t: T) -> T {
    m.evaluate(t)
}

pub fn average_margin<T: Scalar>(m: &MarginFunction<T>, times: &[T]) -> Result<T, EmptyTimes> {
    m.average(times)
}

/// Dual-side quantities kept with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct DualArtifacts<T> {
    pub v: Vec<T>,
    pub a_prime: T,
    pub b_prime: T,
    pub v_norm: T,
    /// One multiplier per observation, in flat `(subject, observation)` order.
    pub alphas: Vec<T>,
    pub support: Vec<(usize, usize)>,
    pub t_bar: T,
    /// Box bound on the multipliers; infinite for the hard-margin problem.
    pub c: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: Option<u64>,
    pub tol: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    /// Residuals of the two dual equality constraints at the returned multipliers.
    pub label_balance_residual: f64,
    pub time_balance_residual: f64,
}

/// A trained longitudinal classifier in margin form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier<T> {
    /// Unit-norm weight vector.
    pub w: Vec<T>,
    pub a: T,
    pub b: T,
    pub d: T,
    pub raw: DualArtifacts<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> TrainedClassifier<T> {
    pub fn p(&self) -> usize {
        self.w.len()
    }

    pub fn margin(&self) -> MarginFunction<T> {
        MarginFunction::new(self.a, self.d)
    }

    pub fn decision_value(&self, x: &[T]) -> T {
        dot(&self.w, x) + self.b
    }

    pub fn predict(&self, trajectory: &[Observation<T>]) -> Result<PredictionOutcome<T>, DatasetError> {
        predict(self, trajectory)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutcome<T> {
    pub label: Label,
    pub score: T,
    pub conclusive: bool,
    pub per_time_values: Vec<T>,
}

/// Aggregate rule: the label is the sign of `Σⱼ (w·X(tⱼ) + b)`, ties going to `+1`.
pub fn predict<T: Scalar>(
    c: &TrainedClassifier<T>,
    trajectory: &[Observation<T>],
) -> Result<PredictionOutcome<T>, DatasetError> {
    aggregate_rule(&c.w, c.b, trajectory)
}

pub(crate) fn aggregate_rule<T: Scalar>(
    w: &[T],
    b: T,
    trajectory: &[Observation<T>],
) -> Result<PredictionOutcome<T>, DatasetError> {
    if trajectory.is_empty() {
        return Err(DatasetError::EmptySubject {
            subject: "<trajectory>".into(),
        });
    }
    let mut per_time_values = Vec::with_capacity(trajectory.len());
    for o in trajectory {
        if o.features.len() != w.len() {
            return Err(DatasetError::DimensionMismatch {
                subject: "<trajectory>".into(),
                expected: w.len(),
                found: o.features.len(),
            });
        }
        per_time_values.push(dot(w, &o.features) + b);
    }
    let score: T = per_time_values.iter().copied().sum();
    Ok(PredictionOutcome {
        label: Label::from_score(score),
        score,
        conclusive: score.abs() >= T::of(TIE_TOLERANCE),
        per_time_values,
    })
}
