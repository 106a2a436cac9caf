//! Surrogate-gradient training of weights and axonal delays, with a
//! spike-count loss, class weighting and leave-one-user-out evaluation.

mod bptt;
mod network;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use bptt::{
    backward_from_counts, forward_with_trace, Gradients, LayerTrace, SpikeMode, SurrogateShape, SurrogateSpec,
    Trace,
};
pub use network::RealNetwork;

use crate::encoder::SpikeTensor;
use crate::error::{Error, Result};
use crate::snn::{classify, run_event_driven, NetworkModel, MAX_DELAY};

/// Squared-error loss on output spike counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    /// Desired spike count of the labelled class over the window.
    pub target_true: f64,
    /// Desired spike count of every other class.
    pub target_false: f64,
    pub class_weights: Vec<f64>,
}

impl LossSpec {
    /// Conventional targets for a window of `timesteps` steps: 30% and 1% of
    /// the steps, unit class weights.
    pub fn for_window(timesteps: usize, classes: usize) -> Self {
        Self {
            target_true: 0.3 * timesteps as f64,
            target_false: 0.01 * timesteps as f64,
            class_weights: vec![1.0; classes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_true > self.target_false && self.target_false >= 0.0) {
            return Err(Error::config(format!(
                "need target_true > target_false >= 0, got {} / {}",
                self.target_true, self.target_false
            )));
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("class weights must be finite and non-negative"));
        }
        Ok(())
    }

    fn target(&self, class: usize, label: usize) -> f64 {
        if class == label {
            self.target_true
        } else {
            self.target_false
        }
    }
}

/// `weight[label] * 1/2 * sum_c (counts_c - target_c)^2`
pub fn loss_count(counts: &[f64], label: usize, spec: &LossSpec) -> Result<f64> {
    let weight = *spec
        .class_weights
        .get(label)
        .filter(|_| label < counts.len())
        .ok_or_else(|| Error::config(format!("label {label} out of range")))?;
    let sum: f64 = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| (n - spec.target(c, label)).powi(2))
        .sum();
    Ok(weight * 0.5 * sum)
}

fn loss_count_gradient(counts: &[f64], label: usize, spec: &LossSpec) -> Vec<f64> {
    let weight = spec.class_weights[label];
    counts
        .iter()
        .enumerate()
        .map(|(c, &n)| weight * (n - spec.target(c, label)))
        .collect()
}

/// Loss of a traced sample and its gradient with respect to every weight and delay.
pub fn backward(
    net: &RealNetwork,
    trace: &Trace,
    label: usize,
    surrogate: &SurrogateSpec,
    loss: &LossSpec,
) -> Result<(f64, Gradients)> {
    let value = loss_count(&trace.counts, label, loss)?;
    let grad = loss_count_gradient(&trace.counts, label, loss);
    Ok((value, backward_from_counts(net, trace, &grad, surrogate)?))
}

/// `N / (classes * N_c)` for every present class; absent classes get 0.
pub fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l < classes {
            counts[l] += 1;
        }
    }
    let total = labels.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if n == 0 {
                log::warn!("class {c} has no samples; weight set to 0");
                0.0
            } else {
                total / (classes as f64 * n as f64)
            }
        })
        .collect()
}

/// One encoded window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Stable identifier; training order is derived from it, not from input order.
    pub id: String,
    pub subject: String,
    pub label: usize,
    pub spikes: SpikeTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step size for delays; `None` reuses `learning_rate`.
    pub delay_learning_rate: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_delays: bool,
    pub delay_cap: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            delay_learning_rate: None,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            train_delays: true,
            delay_cap: MAX_DELAY,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if self.delay_cap > MAX_DELAY {
            return Err(Error::config(format!("delay cap above {MAX_DELAY}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: RealNetwork,
    /// Mean sample loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Plain mini-batch SGD. Per-sample gradients are computed in parallel and
/// summed in batch order, so results depend only on the seed.
pub fn train(
    init: &RealNetwork,
    data: &[Sample],
    config: &TrainConfig,
    surrogate: &SurrogateSpec,
    loss: &LossSpec,
) -> Result<TrainOutcome> {
    config.validate()?;
    surrogate.validate()?;
    loss.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let classes = init.specs.last().map_or(0, |s| s.output_size());
    if let Some(bad) = data.iter().find(|s| s.label >= classes || s.label >= loss.class_weights.len()) {
        return Err(Error::config(format!("sample {} has label {} outside the model's classes", bad.id, bad.label)));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].id.cmp(&data[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = init.clone();
    let delay_lr = config.delay_learning_rate.unwrap_or(config.learning_rate);
    let cap = config.delay_cap as f64;
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .map(|&i| {
                    let trace = forward_with_trace(&net, &data[i].spikes, surrogate)?;
                    backward(&net, &trace, data[i].label, surrogate, loss)
                })
                .collect();
            let mut total = Gradients::zeros_like(&net);
            for r in results {
                let (value, g) = r?;
                epoch_loss += value;
                total.add_assign(&g);
            }
            total.scale(1.0 / batch.len() as f64);
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, message: "non-finite gradient".into() });
            }
            for (w, g) in net.weights.iter_mut().zip(&total.weights) {
                w.iter_mut().zip(g).for_each(|(w, g)| *w -= config.learning_rate * g);
            }
            if config.train_delays {
                for (d, g) in net.delays.iter_mut().zip(&total.delays) {
                    d.iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d = (*d - delay_lr * g).clamp(0.0, cap));
                }
            }
        }
        for d in net.delays.iter_mut().flatten() {
            *d = network::round_delay(*d, cap);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, message: format!("loss is {mean}") });
        }
        log::debug!("epoch {epoch}: loss {mean:.4}");
        curve.push(mean);
    }
    Ok(TrainOutcome { network: net, loss_curve: curve })
}

/// Fraction of samples whose predicted class (event-driven backend) matches the label.
pub fn evaluate(model: &NetworkModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    let hits: Vec<Result<bool>> = data
        .par_iter()
        .map(|s| Ok(classify(&run_event_driven(model, &s.spikes)?.counts)? == s.label))
        .collect();
    let mut correct = 0;
    for h in hits {
        correct += h? as usize;
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, in sorted subject order.
pub fn louo_folds<S: AsRef<str>>(subjects: &[S]) -> Result<Vec<Fold>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        groups.entry(s.as_ref()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::config(format!(
            "leave-one-user-out needs at least 2 subjects, found {}",
            groups.len()
        )));
    }
    Ok(groups
        .iter()
        .map(|(&subject, test)| Fold {
            subject: subject.to_string(),
            train: (0..subjects.len()).filter(|i| subjects[*i].as_ref() != subject).collect(),
            test: test.clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub subject: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub accuracy: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    /// Unweighted mean of the fold accuracies.
    pub mean_accuracy: f64,
}

/// Leave-one-user-out: each fold starts from `init`, trains on every other
/// subject, quantizes, and is scored on the held-out subject. With
/// `weight_classes` the loss weights are recomputed from each fold's labels.
pub fn cross_validate(
    init: &RealNetwork,
    data: &[Sample],
    config: &TrainConfig,
    surrogate: &SurrogateSpec,
    loss: &LossSpec,
    weight_classes: bool,
) -> Result<CrossValidation> {
    let subjects: Vec<&str> = data.iter().map(|s| s.subject.as_str()).collect();
    let folds = louo_folds(&subjects)?;
    let classes = loss.class_weights.len();
    let mut results = Vec::with_capacity(folds.len());
    for fold in &folds {
        let train_set: Vec<Sample> = fold.train.iter().map(|&i| data[i].clone()).collect();
        let test_set: Vec<Sample> = fold.test.iter().map(|&i| data[i].clone()).collect();
        let mut fold_loss = loss.clone();
        if weight_classes {
            let labels: Vec<usize> = train_set.iter().map(|s| s.label).collect();
            fold_loss.class_weights = class_weights(&labels, classes);
        }
        let outcome = train(init, &train_set, config, surrogate, &fold_loss)?;
        let model = outcome.network.to_model()?;
        let accuracy = evaluate(&model, &test_set)?;
        log::info!("fold {}: accuracy {:.3}", fold.subject, accuracy);
        results.push(FoldResult {
            subject: fold.subject.clone(),
            train_samples: train_set.len(),
            test_samples: test_set.len(),
            accuracy,
            final_loss: outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        });
    }
    let mean_accuracy = results.iter().map(|f| f.accuracy).sum::<f64>() / results.len() as f64;
    Ok(CrossValidation {
        folds: results,
        mean_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec12() -> LossSpec {
        LossSpec {
            target_true: 10.0,
            target_false: 1.0,
            class_weights: vec![1.0; 12],
        }
    }

    #[test]
    fn loss_zero_at_target() {
        let mut counts = vec![1.0; 12];
        counts[4] = 10.0;
        assert_eq!(loss_count(&counts, 4, &spec12()).unwrap(), 0.0);
        counts[7] = 2.0;
        assert_eq!(loss_count(&counts, 4, &spec12()).unwrap(), 0.5);
        assert!(loss_count(&counts, 12, &spec12()).is_err());
    }

    #[test]
    fn balanced_and_skewed_weights() {
        assert_eq!(class_weights(&[0, 1, 2, 0, 1, 2], 3), vec![1.0; 3]);
        let w = class_weights(&[0, 0, 1, 2], 3);
        assert_eq!(w[0] * 2.0, w[1]);
        assert_eq!(w[1], w[2]);
        assert_eq!(class_weights(&[0, 0], 2), vec![0.5, 0.0]);
    }

    #[test]
    fn folds_hold_out_each_subject() {
        let subjects = ["b", "a", "b", "c", "a"];
        let folds = louo_folds(&subjects).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds[0].subject, "a");
        assert_eq!(folds[0].test, vec![1, 4]);
        assert_eq!(folds[0].train, vec![0, 2, 3]);
        assert!(louo_folds(&["x", "x"]).is_err());
    }

    #[test]
    fn bad_configs() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(LossSpec { target_true: 1.0, target_false: 1.0, class_weights: vec![1.0] }.validate().is_err());
        assert!(SurrogateSpec { alpha: 0.0, ..SurrogateSpec::default() }.validate().is_err());
    }
}
