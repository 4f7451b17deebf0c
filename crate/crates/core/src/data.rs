//! Labelled datasets, imbalance implantation, re-sampling and the synthetic
//! Gaussian-mixture generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An in-memory labelled sample collection with flat row-major inputs.
///
/// `class_counts` is always the label histogram; it is recomputed on every
/// construction rather than trusted from the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
    class_counts: Vec<usize>,
    split: Split,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::invalid(format!(
                "{} input values do not form {} samples of length {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        crate::numerics::ensure_finite(&inputs)?;
        let mut class_counts = vec![0; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::invalid(format!(
                    "label {y} out of range for {num_classes} classes"
                )));
            }
            class_counts[y] += 1;
        }
        Ok(Dataset {
            inputs,
            labels,
            input_dim,
            num_classes,
            class_counts,
            split,
        })
    }

    /// An empty dataset with the given shape.
    pub fn empty(input_dim: usize, num_classes: usize, split: Split) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), input_dim, num_classes, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.inputs
            .chunks_exact(self.input_dim)
            .zip(self.labels.iter().copied())
    }

    /// Indices of the samples labelled `class`, in dataset order.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == class).then_some(i))
            .collect()
    }

    /// Samples at `indices` (repeats allowed), in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        let mut class_counts = vec![0; self.num_classes];
        labels.iter().for_each(|&y| class_counts[y] += 1);
        Dataset {
            inputs,
            labels,
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            class_counts,
            split: self.split,
        }
    }

    /// The subset `D_j` of samples labelled `class`.
    pub fn class_subset(&self, class: usize) -> Dataset {
        self.select(&self.indices_of(class))
    }

    /// Applies a class relabeling (`map[old] = new`), e.g. the one returned by
    /// an implantation, so the test split agrees with the train split.
    pub fn relabel(&self, map: &Relabeling) -> Result<Dataset> {
        if map.0.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "relabeling covers {} classes, dataset has {}",
                map.0.len(),
                self.num_classes
            )));
        }
        let labels = self.labels.iter().map(|&y| map.0[y]).collect();
        Dataset::new(
            self.inputs.clone(),
            labels,
            self.input_dim,
            self.num_classes,
            self.split,
        )
    }

    /// `n_max / n_min` over the classes; infinite when a class is empty.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = self.class_counts.iter().copied().max().unwrap_or(0);
        let min = self.class_counts.iter().copied().min().unwrap_or(0);
        max as f64 / min as f64
    }

    /// True when counts are non-increasing in class index.
    pub fn is_canonically_ordered(&self) -> bool {
        self.class_counts.windows(2).all(|w| w[0] >= w[1])
    }
}

/// A class permutation, `map[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling(pub Vec<usize>);

impl Relabeling {
    pub fn identity(num_classes: usize) -> Self {
        Relabeling((0..num_classes).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Result of an implantation: the reduced train split and the relabeling
/// that must also be applied to the matching test split.
#[derive(Debug, Clone)]
pub struct Implanted {
    pub dataset: Dataset,
    pub relabeling: Relabeling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ImbalanceKind {
    LongTailed,
    Step,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImbalanceSpec {
    pub kind: ImbalanceKind,
    pub ratio: f64,
    pub seed: u64,
}

impl ImbalanceSpec {
    pub fn none() -> Self {
        ImbalanceSpec {
            kind: ImbalanceKind::None,
            ratio: 1.0,
            seed: 0,
        }
    }

    pub fn apply(&self, train: &Dataset) -> Result<Implanted> {
        match self.kind {
            ImbalanceKind::LongTailed => implant_long_tail(train, self.ratio, self.seed),
            ImbalanceKind::Step => implant_step(train, self.ratio, self.seed),
            ImbalanceKind::None => Ok(Implanted {
                dataset: train.clone(),
                relabeling: Relabeling::identity(train.num_classes()),
            }),
        }
    }
}

fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5) as usize
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio >= 1.0) || !ratio.is_finite() {
        return Err(Error::invalid(format!(
            "imbalance ratio must be finite and >= 1, got {ratio}"
        )));
    }
    Ok(())
}

fn check_feasible(counts: &[usize], per_class: usize, ratio: f64) -> Result<()> {
    match counts.iter().position(|&c| c == 0) {
        Some(class) => Err(Error::InfeasibleImbalance {
            class,
            count: 0,
            per_class,
            ratio,
        }),
        None => Ok(()),
    }
}

/// Per-class counts of the exponential profile
/// `n_j = round(n · ratio^(-j / (K - 1)))`, `j = 0..K`.
pub fn long_tail_counts(per_class: usize, num_classes: usize, ratio: f64) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    let counts: Vec<usize> = (0..num_classes)
        .map(|j| {
            if num_classes == 1 {
                return per_class;
            }
            let exponent = -(j as f64) / (num_classes - 1) as f64;
            round_half_up(per_class as f64 * libm::pow(ratio, exponent))
        })
        .collect();
    check_feasible(&counts, per_class, ratio)?;
    Ok(counts)
}

/// Two-level profile: the first `ceil(K/2)` classes keep `n`, the rest keep
/// `round(n / ratio)`.
pub fn step_counts(per_class: usize, num_classes: usize, ratio: f64) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    let majority = num_classes.div_ceil(2);
    let minority = round_half_up(per_class as f64 / ratio);
    let counts: Vec<usize> = (0..num_classes)
        .map(|j| if j < majority { per_class } else { minority })
        .collect();
    check_feasible(&counts, per_class, ratio)?;
    Ok(counts)
}

/// Keeps `targets[new_label]` samples of each class, chosen uniformly without
/// replacement, preserving the original sample order.
fn subsample_classes(
    d: &Dataset,
    relabeling: &Relabeling,
    targets: &[usize],
    rng: &mut rng::Rng,
) -> Result<Dataset> {
    let mut keep = vec![false; d.len()];
    for old in 0..d.num_classes() {
        let members = d.indices_of(old);
        let target = targets[relabeling.0[old]];
        if target > members.len() {
            return Err(Error::invalid(format!(
                "class {old} has {} samples, cannot keep {target}",
                members.len()
            )));
        }
        for pick in index::sample(rng, members.len(), target) {
            keep[members[pick]] = true;
        }
    }
    let selected: Vec<usize> = (0..d.len()).filter(|&i| keep[i]).collect();
    d.select(&selected).relabel(relabeling)
}

fn base_count(d: &Dataset) -> Result<usize> {
    let n = d.class_counts().iter().copied().min().unwrap_or(0);
    if n == 0 {
        return Err(Error::invalid("every class needs at least one sample"));
    }
    if d.class_counts().iter().any(|&c| c != n) {
        log::warn!("implanting imbalance into an unbalanced dataset; using n = min class count = {n}");
    }
    Ok(n)
}

/// Long-tailed implantation. Class `j` keeps `n · ratio^(-j/(K-1))` samples
/// (rounded half-up), where `n` is the per-class count of the balanced input.
pub fn implant_long_tail(d: &Dataset, ratio: f64, seed: u64) -> Result<Implanted> {
    check_ratio(ratio)?;
    let n = base_count(d)?;
    let targets = long_tail_counts(n, d.num_classes(), ratio)?;
    let relabeling = Relabeling::identity(d.num_classes());
    let mut rng = rng::stream(seed, "implant");
    let dataset = subsample_classes(d, &relabeling, &targets, &mut rng)?;
    Ok(Implanted {
        dataset,
        relabeling,
    })
}

/// Step implantation. A seeded shuffle picks which original classes form the
/// minority; classes are then relabeled so the majority comes first.
pub fn implant_step(d: &Dataset, ratio: f64, seed: u64) -> Result<Implanted> {
    check_ratio(ratio)?;
    let n = base_count(d)?;
    let targets = step_counts(n, d.num_classes(), ratio)?;
    let mut rng = rng::stream(seed, "implant");
    let mut order: Vec<usize> = (0..d.num_classes()).collect();
    order.shuffle(&mut rng);
    let mut map = vec![0; d.num_classes()];
    for (new, &old) in order.iter().enumerate() {
        map[old] = new;
    }
    let relabeling = Relabeling(map);
    let dataset = subsample_classes(d, &relabeling, &targets, &mut rng)?;
    Ok(Implanted {
        dataset,
        relabeling,
    })
}

fn require_nonempty_classes(d: &Dataset) -> Result<()> {
    match d.class_counts().iter().position(|&c| c == 0) {
        Some(j) => Err(Error::invalid(format!("class {j} is empty"))),
        None => Ok(()),
    }
}

/// Raises every class to the largest class count by drawing extra samples
/// with replacement from that class. Original samples are all kept.
pub fn oversample(d: &Dataset, seed: u64) -> Result<Dataset> {
    require_nonempty_classes(d)?;
    let target = d.class_counts().iter().copied().max().unwrap_or(0);
    let mut rng = rng::stream(seed, "oversample");
    let mut picks: Vec<usize> = (0..d.len()).collect();
    for class in 0..d.num_classes() {
        let members = d.indices_of(class);
        for _ in members.len()..target {
            picks.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(d.select(&picks))
}

/// Reduces every class to the smallest class count, uniformly without
/// replacement.
pub fn undersample(d: &Dataset, seed: u64) -> Result<Dataset> {
    require_nonempty_classes(d)?;
    let target = d.class_counts().iter().copied().min().unwrap_or(0);
    let mut rng = rng::stream(seed, "undersample");
    let mut keep = vec![false; d.len()];
    for class in 0..d.num_classes() {
        let members = d.indices_of(class);
        for pick in index::sample(&mut rng, members.len(), target) {
            keep[members[pick]] = true;
        }
    }
    let selected: Vec<usize> = (0..d.len()).filter(|&i| keep[i]).collect();
    Ok(d.select(&selected))
}

/// Isotropic Gaussian mixture: one random unit direction per class, scaled by
/// `class_separation`, plus `noise_scale`-scaled standard normal noise.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    /// Test samples per class; the test split is always balanced.
    pub test_per_class: usize,
    pub input_dim: usize,
    pub class_separation: f64,
    pub noise_scale: f64,
    /// Sub-clusters per class. Each class mean gets this many offsets of
    /// length `mode_spread`, and samples cycle through them.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub modes_per_class: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub mode_spread: f64,
    pub seed: u64,
}

#[cfg(feature = "serde")]
fn one() -> usize {
    1
}

/// Draws the class means of `spec`.
pub fn synthetic_means(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(spec.seed, "synthetic-means");
    (0..spec.num_classes)
        .map(|_| loop {
            let dir: Vec<f64> = (0..spec.input_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let len = crate::numerics::norm(&dir);
            if len > 1e-12 {
                break dir.iter().map(|v| v / len * spec.class_separation).collect();
            }
        })
        .collect()
}

/// Sub-cluster centers, `[class][mode]`. With one mode these are the class
/// means.
pub fn synthetic_mode_centers(spec: &SyntheticSpec) -> Vec<Vec<Vec<f64>>> {
    let means = synthetic_means(spec);
    if spec.modes_per_class <= 1 {
        return means.into_iter().map(|m| vec![m]).collect();
    }
    let mut rng = rng::stream(spec.seed, "synthetic-modes");
    means
        .into_iter()
        .map(|mean| {
            (0..spec.modes_per_class)
                .map(|_| {
                    let dir: Vec<f64> = (0..spec.input_dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let len = crate::numerics::norm(&dir).max(1e-12);
                    mean.iter()
                        .zip(&dir)
                        .map(|(m, d)| m + d / len * spec.mode_spread)
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.input_dim < 2 || spec.num_classes < 2 {
        return Err(Error::invalid(
            "synthetic data needs input_dim >= 2 and num_classes >= 2",
        ));
    }
    if !(spec.noise_scale >= 0.0) || !spec.class_separation.is_finite() {
        return Err(Error::invalid("noise_scale must be >= 0 and separation finite"));
    }
    if spec.modes_per_class == 0 || !(spec.mode_spread >= 0.0) || !spec.mode_spread.is_finite() {
        return Err(Error::invalid("modes_per_class must be >= 1 and mode_spread finite and >= 0"));
    }
    let centers = synthetic_mode_centers(spec);
    let draw = |count: usize, split: Split, tag: &str| {
        let mut rng = rng::stream(spec.seed, tag);
        let mut inputs = Vec::with_capacity(count * spec.num_classes * spec.input_dim);
        let mut labels = Vec::with_capacity(count * spec.num_classes);
        for (class, modes) in centers.iter().enumerate() {
            for i in 0..count {
                let mean = &modes[i % modes.len()];
                inputs.extend(mean.iter().map(|m| {
                    m + spec.noise_scale * rng.sample::<f64, _>(StandardNormal)
                }));
                labels.push(class);
            }
        }
        Dataset::new(inputs, labels, spec.input_dim, spec.num_classes, split)
    };
    Ok((
        draw(spec.per_class, Split::Train, "synthetic-train")?,
        draw(spec.test_per_class, Split::Test, "synthetic-test")?,
    ))
}
