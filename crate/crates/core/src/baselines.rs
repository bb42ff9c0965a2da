//! Comparison classifiers over stacked trajectories and the accuracy benchmark.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, Matrix};
use crate::model::{DatasetError, Label, LongitudinalDataset, Observation, Subject, TrainedClassifier};
use crate::scalar::{axpy, dot, norm2, Scalar};
use crate::stats::{signed_rank_test, SignRankResult, StatsError};
use crate::synth::{line_rng, SynthConfig, SynthError};
use crate::trainer::{self, DualSvm, TrainError, TrainOptions, DEGENERATE_NORM};

/// Default shrinkage intensity for [`train_lda`].
pub const DEFAULT_SHRINKAGE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("subject {subject} is not observed on the common time grid")]
    IrregularSampling { subject: String },
    #[error("pooled covariance is singular; use a positive shrinkage")]
    SingularCovariance,
    #[error("shrinkage must lie in [0, 1], got {0}")]
    InvalidShrinkage(f64),
    #[error("benchmark needs at least 5 trials, got {0}")]
    TooFewTrials(usize),
    #[error("classifier expects {expected} stacked features, subject has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("could not start a worker pool: {0}")]
    ThreadPool(String),
}

/// Concatenation `(X(t₁), …, X(tₙ))` of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVector<T> {
    pub x: Vec<T>,
}

/// Common time grid of a regularly sampled dataset.
pub fn common_grid<T: Scalar>(ds: &LongitudinalDataset<T>) -> Result<Vec<T>, BaselineError> {
    let grid: Vec<T> = ds.subjects()[0].times().collect();
    for s in ds.subjects() {
        check_grid(s, &grid)?;
    }
    Ok(grid)
}

fn check_grid<T: Scalar>(s: &Subject<T>, grid: &[T]) -> Result<(), BaselineError> {
    if s.observations.len() != grid.len() || !s.times().eq(grid.iter().copied()) {
        return Err(BaselineError::IrregularSampling { subject: s.id.clone() });
    }
    Ok(())
}

pub fn stack_subject<T: Scalar>(s: &Subject<T>) -> StackedVector<T> {
    StackedVector {
        x: s.observations.iter().flat_map(|o| o.features.iter().copied()).collect(),
    }
}

pub fn stack<T: Scalar>(ds: &LongitudinalDataset<T>) -> Result<Vec<(StackedVector<T>, Label)>, BaselineError> {
    common_grid(ds)?;
    Ok(ds.subjects().iter().map(|s| (stack_subject(s), s.label)).collect())
}

/// Splits a stacked vector back into observations at `times`.
pub fn unstack<T: Scalar>(v: &StackedVector<T>, times: &[T]) -> Result<Vec<Observation<T>>, BaselineError> {
    if times.is_empty() || !v.x.len().is_multiple_of(times.len()) {
        return Err(BaselineError::DimensionMismatch {
            expected: times.len(),
            found: v.x.len(),
        });
    }
    let p = v.x.len() / times.len();
    Ok(times
        .iter()
        .zip(v.x.chunks(p))
        .map(|(&t, x)| Observation::new(t, x.to_vec()))
        .collect())
}

fn stacked_matrix<T: Scalar>(rows: &[(StackedVector<T>, Label)]) -> Matrix<T> {
    let cols = rows[0].0.x.len();
    let data = rows.iter().flat_map(|(v, _)| v.x.iter().copied()).collect();
    Matrix::from_vec(rows.len(), cols, data).expect("stacked vectors share one length")
}

/// Linear rule `sign(w·x̃ + b)` on stacked trajectories, ties going to +1.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedClassifier<T> {
    pub w: Vec<T>,
    pub b: T,
    pub times: Vec<T>,
}

impl<T: Scalar> StackedClassifier<T> {
    pub fn decision_value(&self, x: &StackedVector<T>) -> Result<T, BaselineError> {
        if x.x.len() != self.w.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.w.len(),
                found: x.x.len(),
            });
        }
        Ok(dot(&self.w, &x.x) + self.b)
    }

    pub fn predict(&self, x: &StackedVector<T>) -> Result<Label, BaselineError> {
        Ok(Label::from_score(self.decision_value(x)?))
    }
}

/// Classical soft-margin SVM on stacked trajectories, solved through the same
/// dual machinery as the longitudinal model (without the time-balance row).
pub fn train_stacked_svm<T: Scalar>(ds: &LongitudinalDataset<T>, c: T) -> Result<StackedClassifier<T>, BaselineError> {
    train_stacked_svm_with(ds, &TrainOptions::new(c))
}

pub fn train_stacked_svm_with<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    opts: &TrainOptions<T>,
) -> Result<StackedClassifier<T>, BaselineError> {
    ds.require_both_classes()?;
    let times = common_grid(ds)?;
    let rows = stack(ds)?;
    let labels: Vec<T> = rows.iter().map(|(_, l)| l.sign()).collect();
    let svm = DualSvm::classical(stacked_matrix(&rows), labels.clone());
    let fit = svm.solve(&labels, opts)?;
    let form = trainer::normalize_to_margin_form(&fit.v, T::zero(), fit.b_prime, T::zero())?;
    Ok(StackedClassifier {
        w: form.w,
        b: form.b,
        times,
    })
}

/// Shrinkage LDA on stacked trajectories.
///
/// The pooled covariance `S` is regularized to `(1−γ)S + γ·(tr S / dim)·I`;
/// the direction solves `S_γ w = μ₊ − μ₋` and the threshold sits at the
/// projected midpoint of the class means.
pub fn train_lda<T: Scalar>(ds: &LongitudinalDataset<T>, gamma: f64) -> Result<StackedClassifier<T>, BaselineError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(BaselineError::InvalidShrinkage(gamma));
    }
    ds.require_both_classes()?;
    let times = common_grid(ds)?;
    let rows = stack(ds)?;
    let dim = rows[0].0.x.len();
    let mean_of = |label: Label| -> Vec<T> {
        let members: Vec<&StackedVector<T>> = rows.iter().filter(|(_, l)| *l == label).map(|(v, _)| v).collect();
        let mut mu = vec![T::zero(); dim];
        for v in &members {
            axpy(T::one(), &v.x, &mut mu);
        }
        let k = T::of(members.len() as f64);
        mu.iter().map(|&x| x / k).collect()
    };
    let (mu_pos, mu_neg) = (mean_of(Label::Positive), mean_of(Label::Negative));
    let centered = Matrix::from_fn(rows.len(), dim, |i, j| {
        let mu = if rows[i].1 == Label::Positive { &mu_pos } else { &mu_neg };
        rows[i].0.x[j] - mu[j]
    });
    let dof = T::of(rows.len().saturating_sub(2).max(1) as f64);
    let trace = dot(centered.as_slice(), centered.as_slice()) / dof;
    let nu = T::of(gamma) * trace / T::of(dim as f64);
    let kappa = T::of(1.0 - gamma) / dof;
    let diff: Vec<T> = mu_pos.iter().zip(&mu_neg).map(|(a, b)| *a - *b).collect();

    let w = if dim <= rows.len() {
        // S_γ = ν I + κ ZᵀZ formed explicitly
        let mut s = centered.weighted_gram_cols(&vec![kappa; rows.len()]);
        s.add_to_diagonal(nu);
        let floor = T::of(1e-12) * (T::one() + trace);
        Cholesky::factor(s, floor)
            .map_err(|_| BaselineError::SingularCovariance)?
            .solve(&diff)
    } else {
        if !(nu > T::zero()) {
            return Err(BaselineError::SingularCovariance);
        }
        // (νI + κZᵀZ)⁻¹ r = (r − Zᵀ(ν/κ·I + ZZᵀ)⁻¹ Z r) / ν
        if kappa > T::zero() {
            let mut cap = centered.gram_rows();
            cap.add_to_diagonal(nu / kappa);
            let cap = Cholesky::factor(cap, T::zero()).map_err(|_| BaselineError::SingularCovariance)?;
            let zr = cap.solve(&centered.mul_vec(&diff));
            let correction = centered.tr_mul_vec(&zr);
            diff.iter().zip(&correction).map(|(&r, &c)| (r - c) / nu).collect()
        } else {
            diff.iter().map(|&r| r / nu).collect()
        }
    };
    let norm = norm2(&w);
    if !(norm > T::of(DEGENERATE_NORM)) || !norm.is_finite() {
        return Err(BaselineError::SingularCovariance);
    }
    let w: Vec<T> = w.iter().map(|&x| x / norm).collect();
    let midpoint: Vec<T> = mu_pos.iter().zip(&mu_neg).map(|(a, b)| (*a + *b) * T::of(0.5)).collect();
    let b = -dot(&w, &midpoint);
    Ok(StackedClassifier { w, b, times })
}

/// Anything that assigns a label to a whole trajectory.
pub trait SubjectClassifier<T: Scalar>: Sync {
    fn classify(&self, subject: &Subject<T>) -> Result<Label, BaselineError>;
}

impl<T: Scalar> SubjectClassifier<T> for TrainedClassifier<T> {
    fn classify(&self, subject: &Subject<T>) -> Result<Label, BaselineError> {
        Ok(self.predict(&subject.observations)?.label)
    }
}

impl<T: Scalar> SubjectClassifier<T> for StackedClassifier<T> {
    fn classify(&self, subject: &Subject<T>) -> Result<Label, BaselineError> {
        check_grid(subject, &self.times)?;
        self.predict(&stack_subject(subject))
    }
}

/// Fraction of subjects in `test` whose predicted label is correct.
pub fn evaluate_accuracy<T: Scalar>(
    classifier: &impl SubjectClassifier<T>,
    test: &LongitudinalDataset<T>,
) -> Result<f64, BaselineError> {
    let mut correct = 0usize;
    for s in test.subjects() {
        if classifier.classify(s)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lsvm,
    StackedSvm,
    Lda,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lsvm => "lsvm",
            Method::StackedSvm => "svm",
            Method::Lda => "lda",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "lsvm" => Some(Method::Lsvm),
            "svm" | "stacked_svm" => Some(Method::StackedSvm),
            "lda" => Some(Method::Lda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Generator for the training sets; its seed is replaced per trial.
    pub generator: SynthConfig,
    pub test_lines_per_class: usize,
    /// Box bound of the longitudinal model.
    pub c: f64,
    /// Box bound of the stacked SVM.
    pub svm_c: f64,
    pub lda_shrinkage: f64,
    pub tol: f64,
    pub seed: u64,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl BenchmarkConfig {
    pub fn new(methods: Vec<Method>, trials: usize, generator: SynthConfig) -> Self {
        let seed = generator.seed();
        let test_lines_per_class = generator.lines_per_class();
        Self {
            methods,
            trials,
            generator,
            test_lines_per_class,
            c: 0.001,
            svm_c: 0.001,
            lda_shrinkage: DEFAULT_SHRINKAGE,
            tol: crate::qp::DEFAULT_TOL,
            seed,
            jobs: None,
        }
    }

    /// Generator seeds `(train, test)` of one trial.
    pub fn trial_seeds(&self, trial: usize) -> (u64, u64) {
        let mut rng = line_rng(self.seed, trial);
        (rng.next_u64(), rng.next_u64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: Method,
    pub second: Method,
    /// `None` when every trial tied.
    pub test: Option<SignRankResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub methods: Vec<Method>,
    /// `accuracies[trial][method]`.
    pub accuracies: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub pairwise: Vec<PairwiseComparison>,
    pub config: BenchmarkConfig,
}

impl BenchmarkTable {
    pub fn column(&self, method: Method) -> Option<Vec<f64>> {
        let k = self.methods.iter().position(|&m| m == method)?;
        Some(self.accuracies.iter().map(|row| row[k]).collect())
    }

    pub fn mean(&self, method: Method) -> Option<f64> {
        let k = self.methods.iter().position(|&m| m == method)?;
        Some(self.means[k])
    }

    pub fn comparison(&self, first: Method, second: Method) -> Option<&PairwiseComparison> {
        self.pairwise.iter().find(|c| c.first == first && c.second == second)
    }
}

pub fn benchmark(methods: &[Method], trials: usize, generator: &SynthConfig) -> Result<BenchmarkTable, BaselineError> {
    benchmark_with(&BenchmarkConfig::new(methods.to_vec(), trials, generator.clone()))
}

fn run_trial(cfg: &BenchmarkConfig, trial: usize) -> Result<Vec<f64>, BaselineError> {
    let (train_seed, test_seed) = cfg.trial_seeds(trial);
    let train: LongitudinalDataset<f64> = cfg.generator.with_seed(train_seed).generate()?;
    let test: LongitudinalDataset<f64> = cfg
        .generator
        .with_seed(test_seed)
        .with_lines_per_class(cfg.test_lines_per_class)
        .generate()?;
    cfg.methods
        .iter()
        .map(|m| match m {
            Method::Lsvm => {
                let opts = TrainOptions::new(cfg.c).with_tol(cfg.tol);
                evaluate_accuracy(&trainer::train_with(&train, &opts)?, &test)
            }
            Method::StackedSvm => {
                let opts = TrainOptions::new(cfg.svm_c).with_tol(cfg.tol);
                evaluate_accuracy(&train_stacked_svm_with(&train, &opts)?, &test)
            }
            Method::Lda => evaluate_accuracy(&train_lda(&train, cfg.lda_shrinkage)?, &test),
        })
        .collect()
}

/// Runs every method on `trials` fresh train/test pairs and compares them pairwise.
pub fn benchmark_with(cfg: &BenchmarkConfig) -> Result<BenchmarkTable, BaselineError> {
    if cfg.trials < 5 {
        return Err(BaselineError::TooFewTrials(cfg.trials));
    }
    let run = || -> Result<Vec<Vec<f64>>, BaselineError> {
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect()
    };
    let accuracies = match cfg.jobs {
        None => run()?,
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| BaselineError::ThreadPool(e.to_string()))?
            .install(run)?,
    };
    let k = cfg.methods.len();
    let column = |j: usize| -> Vec<f64> { accuracies.iter().map(|row| row[j]).collect() };
    let means = (0..k).map(|j| column(j).iter().sum::<f64>() / cfg.trials as f64).collect();
    let mut pairwise = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let test = match signed_rank_test(&column(i), &column(j)) {
                Ok(r) => Some(r),
                Err(StatsError::TooFewPairs { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            pairwise.push(PairwiseComparison {
                first: cfg.methods[i],
                second: cfg.methods[j],
                test,
            });
        }
    }
    Ok(BenchmarkTable {
        methods: cfg.methods.clone(),
        accuracies,
        means,
        pairwise,
        config: cfg.clone(),
    })
}
