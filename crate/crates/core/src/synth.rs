//! Seeded generators for synthetic breeding experiments.
//!
//! Every generator draws line `k` from its own ChaCha stream `(seed, k)`, so
//! the output depends only on the configuration. Selection lines (label +1)
//! come first, followed by control lines (label −1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatasetError, Label, LongitudinalDataset, Observation, Subject};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig(msg.into())
}

pub(crate) fn line_rng(seed: u64, line: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(line as u64);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn line_id(k: usize) -> String {
    format!("line-{k:03}")
}

/// `(line index, label)` in generation order.
fn lines(per_class: usize) -> impl Iterator<Item = (usize, Label)> {
    (0..2 * per_class).map(move |k| {
        let label = if k < per_class { Label::Positive } else { Label::Negative };
        (k, label)
    })
}

/// Random walk with optional drift: `s(t+1) = s(t) + scale·U (+ drift)`, reported at `t = 1..T`.
fn walk(rng: &mut impl Rng, start: &[f64], scale: f64, drift: Option<&[f64]>, generations: usize) -> Vec<Vec<f64>> {
    let mut state = start.to_vec();
    let mut out = Vec::with_capacity(generations);
    for _ in 0..generations {
        for (k, s) in state.iter_mut().enumerate() {
            *s += scale * normal(rng) + drift.map_or(0.0, |d| d[k]);
        }
        out.push(state.clone());
    }
    out
}

fn subject<T: Scalar>(k: usize, label: Label, frames: Vec<Vec<f64>>) -> Subject<T> {
    let obs = frames
        .into_iter()
        .enumerate()
        .map(|(t, x)| Observation::new(T::of((t + 1) as f64), x.into_iter().map(T::of).collect()))
        .collect();
    Subject::new(line_id(k), label, obs)
}

/// Drifting random walk: selection lines gain `drift` every generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleCaseConfig {
    pub p: usize,
    pub lines_per_class: usize,
    /// Number of generations; observations are taken at `t = 1..generations`.
    pub generations: usize,
    pub sigma: f64,
    pub drift: Vec<f64>,
    pub seed: u64,
}

impl SimpleCaseConfig {
    /// Drift `(2, 2, 0, …, 0)`.
    pub fn new(p: usize, lines_per_class: usize, generations: usize, sigma: f64, seed: u64) -> Self {
        let drift = (0..p).map(|k| if k < 2 { 2.0 } else { 0.0 }).collect();
        Self {
            p,
            lines_per_class,
            generations,
            sigma,
            drift,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.p < 2 {
            return Err(invalid("p must be at least 2"));
        }
        if self.generations < 1 || self.lines_per_class < 1 {
            return Err(invalid("need at least one generation and one line per class"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be a finite non-negative number"));
        }
        if self.drift.len() != self.p || self.drift.iter().any(|d| !d.is_finite()) {
            return Err(invalid(format!("drift must hold {} finite values", self.p)));
        }
        Ok(())
    }
}

impl Default for SimpleCaseConfig {
    fn default() -> Self {
        Self::new(36, 10, 10, 0.5, 0)
    }
}

/// Per-line starting point `X(0)` and the observed `X(1..=T)`.
pub fn simulate_simple_line(cfg: &SimpleCaseConfig, line: usize, label: Label) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = line_rng(cfg.seed, line);
    let x0: Vec<f64> = (0..cfg.p).map(|_| normal(&mut rng)).collect();
    let drift = (label == Label::Positive).then_some(cfg.drift.as_slice());
    let frames = walk(&mut rng, &x0, cfg.sigma, drift, cfg.generations);
    (x0, frames)
}

pub fn generate_simple<T: Scalar>(cfg: &SimpleCaseConfig) -> Result<LongitudinalDataset<T>, SynthError> {
    cfg.validate()?;
    let subjects = lines(cfg.lines_per_class)
        .map(|(k, label)| subject(k, label, simulate_simple_line(cfg, k, label).1))
        .collect();
    Ok(LongitudinalDataset::new(subjects)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Zeros,
    /// Flattened volume of length `nx·ny·nz`, index `(z·ny + y)·nx + x`.
    Volume(Vec<f64>),
}

/// Axis-aligned ellipsoid artefact growing along X and Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidConfig {
    pub grid: (usize, usize, usize),
    /// Initial semi-axes as fractions of the half-extent.
    pub s0x: f64,
    pub s0z: f64,
    pub a0: f64,
    pub lambda: f64,
    pub intensity_offset: f64,
    /// Fixed Y semi-axis as a fraction of the half-extent.
    pub y_fraction: f64,
    pub background: Background,
    pub lines_per_class: usize,
    pub generations: usize,
    pub seed: u64,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        Self {
            grid: (24, 24, 24),
            s0x: 0.15,
            s0z: 0.15,
            a0: 0.04,
            lambda: 0.01,
            intensity_offset: 10.0,
            y_fraction: 0.2,
            background: Background::Zeros,
            lines_per_class: 2,
            generations: 5,
            seed: 0,
        }
    }
}

impl EllipsoidConfig {
    pub fn voxels(&self) -> usize {
        self.grid.0 * self.grid.1 * self.grid.2
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (nx, ny, nz) = self.grid;
        if nx < 4 || ny < 4 || nz < 4 {
            return Err(invalid("grid dimensions must be at least 4"));
        }
        let finite = [self.s0x, self.s0z, self.a0, self.lambda, self.intensity_offset, self.y_fraction];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("ellipsoid parameters must be finite"));
        }
        if self.a0 < 0.0 || self.lambda < 0.0 {
            return Err(invalid("a0 and lambda must be non-negative"));
        }
        if self.generations < 1 || self.lines_per_class < 1 {
            return Err(invalid("need at least one generation and one line per class"));
        }
        if let Background::Volume(v) = &self.background {
            if v.len() != self.voxels() {
                return Err(invalid(format!(
                    "background holds {} voxels, grid has {}",
                    v.len(),
                    self.voxels()
                )));
            }
        }
        Ok(())
    }

    /// Semi-axis fractions `(sx, sz)` at `t = 1..T` for one line.
    pub fn axis_trajectory(&self, line: usize, label: Label) -> Vec<(f64, f64)> {
        let mut rng = line_rng(self.seed, line);
        let drift = [self.a0, self.a0];
        let drift = (label == Label::Positive).then_some(&drift[..]);
        walk(&mut rng, &[self.s0x, self.s0z], self.lambda, drift, self.generations)
            .into_iter()
            .map(|s| (s[0], s[1]))
            .collect()
    }

    /// Semi-axes in voxels for the given fractions.
    pub fn semi_axes(&self, sx: f64, sz: f64) -> (f64, f64, f64) {
        let (nx, ny, nz) = self.grid;
        (
            sx.max(0.0) * nx as f64 / 2.0,
            self.y_fraction.max(0.0) * ny as f64 / 2.0,
            sz.max(0.0) * nz as f64 / 2.0,
        )
    }

    pub fn render(&self, sx: f64, sz: f64) -> Vec<f64> {
        let mut vol = match &self.background {
            Background::Zeros => vec![0.0; self.voxels()],
            Background::Volume(v) => v.clone(),
        };
        let (nx, ny, nz) = self.grid;
        let (a, b, c) = self.semi_axes(sx, sz);
        let (cx, cy, cz) = ((nx / 2) as f64, (ny / 2) as f64, (nz / 2) as f64);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if inside_ellipsoid((x as f64 - cx, y as f64 - cy, z as f64 - cz), (a, b, c)) {
                        vol[(z * ny + y) * nx + x] += self.intensity_offset;
                    }
                }
            }
        }
        vol
    }
}

/// `(x/a)² + (y/b)² + (z/c)² ≤ 1`; an ellipsoid with a zero semi-axis is empty.
pub fn inside_ellipsoid((x, y, z): (f64, f64, f64), (a, b, c): (f64, f64, f64)) -> bool {
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return false;
    }
    (x / a).powi(2) + (y / b).powi(2) + (z / c).powi(2) <= 1.0
}

pub fn generate_ellipsoid_volumes<T: Scalar>(cfg: &EllipsoidConfig) -> Result<LongitudinalDataset<T>, SynthError> {
    cfg.validate()?;
    let subjects = lines(cfg.lines_per_class)
        .map(|(k, label)| {
            let frames = cfg
                .axis_trajectory(k, label)
                .into_iter()
                .map(|(sx, sz)| cfg.render(sx, sz))
                .collect();
            subject(k, label, frames)
        })
        .collect();
    Ok(LongitudinalDataset::new(subjects)?)
}

/// One ellipse of the phantom: additive intensity, semi-axes, center, rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if self.a <= 0.0 || self.b <= 0.0 {
            return false;
        }
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomIntensities {
    /// Contrast-enhanced intensities, the usual choice for display.
    #[default]
    Modified,
    Original,
}

/// Index of the ellipse whose short axis evolves in the phantom series.
pub const VARIED_ELLIPSE: usize = 3;

const GEOMETRY: [(f64, f64, f64, f64, f64); 10] = [
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0),
    (0.11, 0.31, 0.22, 0.0, -18.0),
    (0.16, 0.41, -0.22, 0.0, 18.0),
    (0.21, 0.25, 0.0, 0.35, 0.0),
    (0.046, 0.046, 0.0, 0.1, 0.0),
    (0.046, 0.046, 0.0, -0.1, 0.0),
    (0.046, 0.023, -0.08, -0.605, 0.0),
    (0.023, 0.023, 0.0, -0.606, 0.0),
    (0.023, 0.046, 0.06, -0.605, 0.0),
];

const MODIFIED: [f64; 10] = [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
const ORIGINAL: [f64; 10] = [2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];

pub fn phantom_ellipses(kind: PhantomIntensities) -> [Ellipse; 10] {
    let intensities = match kind {
        PhantomIntensities::Modified => MODIFIED,
        PhantomIntensities::Original => ORIGINAL,
    };
    std::array::from_fn(|k| {
        let (a, b, x0, y0, phi_deg) = GEOMETRY[k];
        Ellipse {
            intensity: intensities[k],
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    })
}

/// Pixel-center coordinates in `[-1, 1]²`; row 0 is the top of the image.
pub fn pixel_center(side: usize, row: usize, col: usize) -> (f64, f64) {
    let s = side as f64;
    (-1.0 + (2 * col + 1) as f64 / s, 1.0 - (2 * row + 1) as f64 / s)
}

/// Sums the intensities of the ellipses covering each pixel center (row-major).
pub fn rasterize(side: usize, ellipses: &[Ellipse]) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    for row in 0..side {
        for col in 0..side {
            let (x, y) = pixel_center(side, row, col);
            img[row * side + col] = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
        }
    }
    img
}

/// The standard 10-ellipse head phantom with the modified intensities.
pub fn shepp_logan(side: usize) -> Vec<f64> {
    rasterize(side, &phantom_ellipses(PhantomIntensities::Modified))
}

/// Phantom series in which the short axis of one ellipse follows the artefact rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub side: usize,
    pub lines_per_class: usize,
    pub generations: usize,
    pub seed: u64,
    /// Starting short semi-axis in image units; the standard table has 0.16.
    pub s0: f64,
    pub a0: f64,
    pub lambda: f64,
    pub intensities: PhantomIntensities,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            side: 64,
            lines_per_class: 10,
            generations: 10,
            seed: 0,
            s0: GEOMETRY[VARIED_ELLIPSE].0,
            a0: 0.04,
            lambda: 0.01,
            intensities: PhantomIntensities::Modified,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.side < 16 {
            return Err(invalid("phantom side must be at least 16"));
        }
        if ![self.s0, self.a0, self.lambda].iter().all(|v| v.is_finite()) || self.a0 < 0.0 || self.lambda < 0.0 {
            return Err(invalid("s0 must be finite; a0 and lambda finite and non-negative"));
        }
        if self.generations < 1 || self.lines_per_class < 1 {
            return Err(invalid("need at least one generation and one line per class"));
        }
        Ok(())
    }

    pub fn axis_trajectory(&self, line: usize, label: Label) -> Vec<f64> {
        let mut rng = line_rng(self.seed, line);
        let drift = [self.a0];
        let drift = (label == Label::Positive).then_some(&drift[..]);
        walk(&mut rng, &[self.s0], self.lambda, drift, self.generations)
            .into_iter()
            .map(|s| s[0])
            .collect()
    }

    pub fn render(&self, short_axis: f64) -> Vec<f64> {
        let mut ellipses = phantom_ellipses(self.intensities);
        ellipses[VARIED_ELLIPSE].a = short_axis.max(0.0);
        rasterize(self.side, &ellipses)
    }
}

pub fn generate_phantom_series<T: Scalar>(cfg: &PhantomConfig) -> Result<LongitudinalDataset<T>, SynthError> {
    cfg.validate()?;
    let subjects = lines(cfg.lines_per_class)
        .map(|(k, label)| {
            let frames = cfg.axis_trajectory(k, label).into_iter().map(|s| cfg.render(s)).collect();
            subject(k, label, frames)
        })
        .collect();
    Ok(LongitudinalDataset::new(subjects)?)
}

/// Any of the three generators, tagged for manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthConfig {
    Simple(SimpleCaseConfig),
    Ellipsoid(EllipsoidConfig),
    Phantom(PhantomConfig),
}

impl SynthConfig {
    pub fn generate<T: Scalar>(&self) -> Result<LongitudinalDataset<T>, SynthError> {
        match self {
            Self::Simple(c) => generate_simple(c),
            Self::Ellipsoid(c) => generate_ellipsoid_volumes(c),
            Self::Phantom(c) => generate_phantom_series(c),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Simple(c) => c.seed,
            Self::Ellipsoid(c) => c.seed,
            Self::Phantom(c) => c.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Simple(c) => c.seed = seed,
            Self::Ellipsoid(c) => c.seed = seed,
            Self::Phantom(c) => c.seed = seed,
        }
        out
    }

    pub fn with_lines_per_class(&self, lines: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Simple(c) => c.lines_per_class = lines,
            Self::Ellipsoid(c) => c.lines_per_class = lines,
            Self::Phantom(c) => c.lines_per_class = lines,
        }
        out
    }

    pub fn lines_per_class(&self) -> usize {
        match self {
            Self::Simple(c) => c.lines_per_class,
            Self::Ellipsoid(c) => c.lines_per_class,
            Self::Phantom(c) => c.lines_per_class,
        }
    }
}
