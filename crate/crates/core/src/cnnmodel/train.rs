//! Mini-batch Adadelta training with validation-based model selection.
//!
//! No early stopping: the loop always runs the full epoch budget and keeps
//! the weights of the epoch that scored best on the validation set
//! (ties keep the earlier epoch).

use super::{Checkpoint, Model};
use crate::error::{Error, Result};
use crate::metrics::{f1_scores, ConfusionMatrix};
use crate::nncore::{adadelta_step, DropoutMode, Rng, DEFAULT_EPS, DEFAULT_RHO};
use crate::textprep::EncodedReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    F1Micro,
    F1Macro,
    /// Mean validation loss; lower is better.
    Loss,
}

impl SelectionMetric {
    /// Is `candidate` strictly better than `best` under this metric?
    fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            SelectionMetric::Loss => candidate < best,
            _ => candidate > best,
        }
    }

    fn worst(self) -> f64 {
        match self {
            SelectionMetric::Loss => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        }
    }
}

impl std::fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionMetric::F1Micro => write!(f, "f1_micro"),
            SelectionMetric::F1Macro => write!(f, "f1_macro"),
            SelectionMetric::Loss => write!(f, "loss"),
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1_micro" => Ok(SelectionMetric::F1Micro),
            "f1_macro" => Ok(SelectionMetric::F1Macro),
            "loss" => Ok(SelectionMetric::Loss),
            other => Err(Error::invalid(format!("unknown selection metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStat {
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStat>,
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_metric\n");
        for (i, e) in self.epochs.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i, e.train_loss, e.val_metric));
        }
        s
    }
}

fn check_labels(set: &[EncodedReport], what: &str, num_classes: usize) -> Result<()> {
    for r in set {
        match r.label_index {
            None => {
                return Err(Error::invalid(format!(
                    "{what} report {} has no label",
                    r.id
                )))
            }
            Some(c) if c >= num_classes => {
                return Err(Error::invalid(format!(
                    "{what} report {}: class index {c} out of range ({num_classes} classes)",
                    r.id
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Train, selecting the best epoch on the validation set.
///
/// Every epoch shuffles the training set with the seeded stream, walks
/// batches of `batch_size` (the last batch may be smaller), applies the mean
/// batch gradient via Adadelta, then scores the validation set with dropout
/// off. Returns the best-epoch checkpoint and the per-epoch report.
pub fn train(
    model: Model,
    train_set: &[EncodedReport],
    val_set: &[EncodedReport],
    classes: &[String],
    vocab_digest: &str,
) -> Result<(Checkpoint, TrainReport)> {
    let config = model.config.clone();
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::invalid(
            "validation set is empty; model selection needs one",
        ));
    }
    if classes.len() != config.num_classes {
        return Err(Error::invalid(format!(
            "{} class codes supplied for a {}-class model",
            classes.len(),
            config.num_classes
        )));
    }
    check_labels(train_set, "train", config.num_classes)?;
    check_labels(val_set, "validation", config.num_classes)?;

    let mut model = model;
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let metric = config.selection_metric;
    let mut best_value = metric.worst();
    let mut best_epoch = 0usize;
    let mut best_values: Vec<_> = model.param_values().into_iter().cloned().collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let mut batch_loss = 0.0;
            for &i in batch {
                let r = &train_set[i];
                let true_class = r.label_index.expect("checked above");
                let (loss, cache) =
                    model.loss_forward(&r.indices, true_class, DropoutMode::Train, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {batch_no}, report {}",
                        r.id
                    )));
                }
                batch_loss += loss;
                model.backward(&r.indices, &cache, true_class);
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, p) in model.params_mut() {
                p.scale_grad(scale);
                adadelta_step(p, DEFAULT_RHO, DEFAULT_EPS)?;
            }
            epoch_loss += batch_loss;
        }

        let val_value = evaluate_selection(&model, val_set, classes, metric)?;
        report.epochs.push(EpochStat {
            train_loss: epoch_loss / train_set.len() as f64,
            val_metric: val_value,
        });
        if metric.improves(val_value, best_value) {
            best_value = val_value;
            best_epoch = epoch;
            best_values = model.param_values().into_iter().cloned().collect();
        }
    }

    report.best_epoch = best_epoch;
    let best_model = Model::from_values(&config, model.vocab_rows, best_values)?;
    Ok((
        Checkpoint {
            model: best_model,
            classes: classes.to_vec(),
            vocab_digest: vocab_digest.to_string(),
            best_epoch,
            best_metric: best_value,
        },
        report,
    ))
}

fn evaluate_selection(
    model: &Model,
    val_set: &[EncodedReport],
    classes: &[String],
    metric: SelectionMetric,
) -> Result<f64> {
    match metric {
        SelectionMetric::Loss => {
            let mut total = 0.0;
            for r in val_set {
                let (loss, _) = model.loss_forward(
                    &r.indices,
                    r.label_index.expect("checked"),
                    DropoutMode::Infer,
                    &mut Rng::new(0),
                )?;
                total += loss;
            }
            Ok(total / val_set.len() as f64)
        }
        SelectionMetric::F1Micro | SelectionMetric::F1Macro => {
            let mut truths = Vec::with_capacity(val_set.len());
            let mut preds = Vec::with_capacity(val_set.len());
            for r in val_set {
                truths.push(r.label_index.expect("checked"));
                preds.push(model.predict(&r.indices)?.0);
            }
            let cm = ConfusionMatrix::from_indices(&truths, &preds, classes)?;
            let scores = f1_scores(&cm)?;
            Ok(match metric {
                SelectionMetric::F1Micro => scores.f1_micro,
                SelectionMetric::F1Macro => scores.f1_macro,
                SelectionMetric::Loss => unreachable!(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnnmodel::{build_model, CnnConfig};
    use crate::nncore::Activation;

    /// Two linearly separable synthetic classes: tokens {2,3} vs {4,5}.
    fn separable_set(n_per_class: usize, max_len: usize) -> Vec<EncodedReport> {
        let mut out = Vec::new();
        for i in 0..n_per_class {
            let mut a = vec![2, 3, 2, 3];
            a.resize(max_len, 0);
            out.push(EncodedReport {
                id: format!("a{i}"),
                indices: a,
                label_index: Some(0),
            });
            let mut b = vec![4, 5, 4, 5];
            b.resize(max_len, 0);
            out.push(EncodedReport {
                id: format!("b{i}"),
                indices: b,
                label_index: Some(1),
            });
        }
        out
    }

    fn tiny_config(epochs: usize) -> CnnConfig {
        CnnConfig {
            embed_dim: 8,
            window_sizes: vec![2],
            maps_per_window: 4,
            hidden_dim: 8,
            dropout_p: 0.0,
            activation: Activation::Relu,
            num_classes: 2,
            epochs,
            batch_size: 4,
            seed: 13,
            selection_metric: SelectionMetric::F1Micro,
        }
    }

    fn two_codes() -> Vec<String> {
        vec!["C50.8".to_string(), "C50.9".to_string()]
    }

    #[test]
    fn overfits_separable_data() {
        let data = separable_set(8, 8);
        let cfg = tiny_config(30);
        let model = build_model(&cfg, 6, &mut Rng::new(cfg.seed)).unwrap();
        let (ckpt, _) = train(model, &data, &data, &two_codes(), "digest").unwrap();
        let correct = data
            .iter()
            .filter(|r| ckpt.model.predict(&r.indices).unwrap().0 == r.label_index.unwrap())
            .count();
        assert_eq!(correct, data.len(), "training accuracy must reach 1.0");
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_set(4, 8);
        let cfg = tiny_config(5);
        let m1 = build_model(&cfg, 6, &mut Rng::new(cfg.seed)).unwrap();
        let m2 = build_model(&cfg, 6, &mut Rng::new(cfg.seed)).unwrap();
        let (c1, r1) = train(m1, &data, &data, &two_codes(), "d").unwrap();
        let (c2, r2) = train(m2, &data, &data, &two_codes(), "d").unwrap();
        assert_eq!(r1, r2);
        for (a, b) in c1.model.param_values().iter().zip(c2.model.param_values()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn best_epoch_value_is_max_over_report() {
        let data = separable_set(4, 8);
        let cfg = tiny_config(10);
        let model = build_model(&cfg, 6, &mut Rng::new(cfg.seed)).unwrap();
        let (ckpt, report) = train(model, &data, &data, &two_codes(), "d").unwrap();
        let max = report
            .epochs
            .iter()
            .map(|e| e.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(ckpt.best_metric, max);
        assert_eq!(report.epochs[report.best_epoch].val_metric, max);
        // Ties keep the earliest epoch.
        let first_at_max = report
            .epochs
            .iter()
            .position(|e| e.val_metric == max)
            .unwrap();
        assert_eq!(report.best_epoch, first_at_max);
    }

    #[test]
    fn empty_validation_is_rejected() {
        let data = separable_set(4, 8);
        let cfg = tiny_config(2);
        let model = build_model(&cfg, 6, &mut Rng::new(0)).unwrap();
        assert!(train(model, &data, &[], &two_codes(), "d").is_err());
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let mut data = separable_set(2, 8);
        data[0].label_index = Some(7);
        let cfg = tiny_config(2);
        let model = build_model(&cfg, 6, &mut Rng::new(0)).unwrap();
        let err = train(model, &data, &data, &two_codes(), "d")
            .unwrap_err()
            .to_string();
        assert!(err.contains("out of range"), "{err}");
    }

    #[test]
    fn report_length_matches_epoch_budget() {
        let data = separable_set(3, 8);
        let cfg = tiny_config(7);
        let model = build_model(&cfg, 6, &mut Rng::new(1)).unwrap();
        let (_, report) = train(model, &data, &data, &two_codes(), "d").unwrap();
        assert_eq!(report.epochs.len(), 7);
        let csv = report.to_csv();
        assert!(csv.starts_with("epoch,train_loss,val_metric\n"));
        assert_eq!(csv.lines().count(), 8);
    }
}
