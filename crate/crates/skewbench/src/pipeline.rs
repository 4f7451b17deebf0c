//! Data preparation and training as described by an [`ExperimentConfig`].

use skewbench_core::boundary::rescale;
use skewbench_core::data::{generate_synthetic, oversample, undersample, Dataset, Relabeling};
use skewbench_core::model::Model;
use skewbench_core::optim::{self, TrainTrace};

use crate::checkpoint::Checkpoint;
use crate::config::{DataSource, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::idx::load_idx_splits;
use crate::tables::load_csv_splits;

/// Train and test splits as read or generated, before implantation.
pub fn load_source(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic(_) => {
            let spec = cfg.synthetic_spec().expect("synthetic source");
            Ok(generate_synthetic(&spec)?)
        }
        DataSource::Idx(s) => load_idx_splits(&s.train_images, &s.train_labels, &s.test_images, &s.test_labels),
        DataSource::Csv(s) => load_csv_splits(&s.train, &s.test),
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    /// The set the model trains on: implanted, then re-sampled for the
    /// sampling methods.
    pub train: Dataset,
    /// Implanted but not re-sampled.
    pub implanted: Dataset,
    /// Relabeled to match the implanted classes; never subsampled.
    pub test: Dataset,
    pub relabeling: Relabeling,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (train, test) = load_source(cfg)?;
    let imp = cfg.imbalance_spec().apply(&train)?;
    let test = test.relabel(&imp.relabeling)?;
    let fit = match cfg.method {
        Method::Oversample => oversample(&imp.dataset, cfg.seed)?,
        Method::Undersample => undersample(&imp.dataset, cfg.seed)?,
        _ => imp.dataset.clone(),
    };
    Ok(Prepared {
        train: fit,
        implanted: imp.dataset,
        test,
        relabeling: imp.relabeling,
    })
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub trace: TrainTrace,
    pub class_counts: Vec<usize>,
    /// Re-scaling exponent already applied to the classifier.
    pub gamma: f64,
}

impl Trained {
    pub fn checkpoint(&self, cfg: &ExperimentConfig) -> Checkpoint {
        Checkpoint::new(&self.model, &self.class_counts, self.gamma, cfg)
    }
}

/// Initializes and trains a model, ending with the re-scaling step for the
/// `*_rs` methods.
pub fn train(cfg: &ExperimentConfig, data: &Prepared) -> Result<Trained> {
    if data.train.is_empty() {
        return Err(Error::Mismatch("empty training set".into()));
    }
    let mut model = Model::init(
        data.train.input_dim(),
        &cfg.model.hidden,
        cfg.model.feature_dim,
        data.train.num_classes(),
        cfg.seed,
    )?;
    let trace = optim::train(&mut model, &data.train, &cfg.loss_spec(), &cfg.train_config())?;
    let class_counts = data.train.class_counts().to_vec();
    let gamma = if cfg.method.rescales() {
        cfg.gamma.unwrap_or(0.0)
    } else {
        0.0
    };
    if gamma != 0.0 {
        let w = rescale(model.classifier(), &class_counts, gamma)?;
        model.set_classifier(w)?;
    }
    log::info!(
        "trained {} for {} epochs; final loss {:.4}",
        cfg.method,
        trace.epochs.len(),
        trace.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    );
    Ok(Trained {
        model,
        trace,
        class_counts,
        gamma,
    })
}

/// `prepare` followed by `train`.
pub fn run(cfg: &ExperimentConfig) -> Result<(Prepared, Trained)> {
    let data = prepare(cfg)?;
    let trained = train(cfg, &data)?;
    Ok((data, trained))
}

/// Fails unless `model` accepts samples of `data`.
pub fn check_compatible(model: &Model, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.input_dim() || model.num_classes() != data.num_classes() {
        return Err(Error::Mismatch(format!(
            "model takes {} inputs and {} classes, dataset has {} and {}",
            model.input_dim(),
            model.num_classes(),
            data.input_dim(),
            data.num_classes()
        )));
    }
    Ok(())
}
