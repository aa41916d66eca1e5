//! Minibatch steps and evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autograd::{adam_step, clip_global_norm, AdamState, Gradients, Graph};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::instance::QuestionInstance;
use crate::paths::{extract_paths, ExtractionConfig, Path};
use crate::rng::Rng;
use crate::scorer::{forward_instance, instance_loss, score_instance, InstanceScores, Model};

/// An instance with its extracted paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub instance: QuestionInstance,
    pub paths: Vec<Path>,
}

impl Prepared {
    pub fn new(instance: QuestionInstance, config: &ExtractionConfig) -> Self {
        let paths = extract_paths(&instance, config);
        Self { instance, paths }
    }

    /// True when some path reaches the gold answer.
    pub fn trainable(&self) -> bool {
        self.instance
            .answer_index
            .is_some_and(|a| self.paths.iter().any(|p| p.candidate_index == a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    /// Mean loss over the instances that contributed.
    pub loss: f64,
    pub instances: usize,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Adds the mean loss gradient of `batch` into `grads`, in batch order.
/// Instances without a path to their answer are skipped. Returns the summed
/// loss and the number of instances used.
pub fn accumulate_gradients(
    model: &Model,
    table: &EmbeddingTable,
    batch: &[&Prepared],
    grads: &mut Gradients,
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, usize)> {
    let used: Vec<&&Prepared> = batch.iter().filter(|p| p.trainable()).collect();
    if used.is_empty() {
        return Ok((0.0, 0));
    }
    let scale = 1.0 / used.len() as f64;
    let mut rng = dropout_rng;
    let mut total = 0.0;
    for p in &used {
        let answer = p.instance.answer_index.expect("trainable");
        let mut g = Graph::new();
        let vars = forward_instance(&mut g, model, table, &p.instance, &p.paths, rng.as_deref_mut())?;
        let loss = instance_loss(&mut g, &vars, &p.paths, answer, model.config.normalization)?.expect("trainable");
        total += g.scalar(loss);
        let scaled = g.scale(loss, scale);
        g.backward(scaled, grads)?;
    }
    Ok((total, used.len()))
}

/// One optimiser step: mean-loss gradients, global-norm clipping, Adam.
/// A batch with nothing trainable leaves the model and optimiser untouched.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    table: &EmbeddingTable,
    batch: &[&Prepared],
    optim: &OptimConfig,
    dropout_rng: Option<&mut Rng>,
) -> Result<StepStats> {
    let mut grads = Gradients::zeros_like(&model.store);
    let (total, n) = accumulate_gradients(model, table, batch, &mut grads, dropout_rng)?;
    if n == 0 {
        return Ok(StepStats::default());
    }
    let grad_norm = clip_global_norm(&mut grads, optim.clip_norm);
    adam_step(&mut model.store, &grads, adam, optim.learning_rate)?;
    Ok(StepStats {
        loss: total / n as f64,
        instances: n,
        grad_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: Option<usize>,
    pub answer: Option<usize>,
    pub candidate_probs: Vec<f64>,
    pub num_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Instances without any path.
    pub unanswerable: usize,
    /// Mean `−ln p(answer)` over instances whose answer has a path.
    pub mean_loss: f64,
    pub predictions: Vec<Prediction>,
}

/// Builds a report from per-instance scores aligned with `data`. Instances
/// without a gold answer count in `total` but can never be correct.
pub fn build_report(data: &[Prepared], scores: Vec<InstanceScores>) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0;
    let mut unanswerable = 0;
    let mut loss = 0.0;
    let mut loss_n = 0;
    let mut predictions = Vec::with_capacity(data.len());
    for (p, s) in data.iter().zip(scores) {
        let predicted = s.prediction();
        let answer = p.instance.answer_index;
        if predicted.is_none() {
            unanswerable += 1;
        }
        if predicted.is_some() && predicted == answer {
            correct += 1;
        }
        if let Some(a) = answer {
            if s.candidate_probs[a] > 0.0 {
                loss -= libm::log(s.candidate_probs[a]);
                loss_n += 1;
            }
        }
        predictions.push(Prediction {
            id: p.instance.id.clone(),
            predicted,
            answer,
            candidate_probs: s.candidate_probs,
            num_paths: p.paths.len(),
        });
    }
    let total = data.len();
    Ok(EvalReport {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        unanswerable,
        mean_loss: if loss_n == 0 { 0.0 } else { loss / loss_n as f64 },
        predictions,
    })
}

/// Sequential evaluation in inference mode.
pub fn evaluate(model: &Model, table: &EmbeddingTable, data: &[Prepared]) -> Result<EvalReport> {
    let scores = data
        .iter()
        .map(|p| score_instance(model, table, &p.instance, &p.paths))
        .collect::<Result<Vec<_>>>()?;
    build_report(data, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{Composition, ModelConfig};
    use crate::text::Passage;
    use alloc::string::ToString;
    use alloc::vec;

    fn instance(id: &str, answer: usize) -> QuestionInstance {
        QuestionInstance::new(
            id,
            "where is alma rook",
            vec!["Alma Rook".to_string()],
            &["Dunmore".to_string(), "Quell".to_string()],
            vec![
                Passage::new(0, "Alma Rook lives in Dunmore."),
                Passage::new(1, "Alma Rook once saw Quell."),
            ],
            Some(answer),
        )
        .unwrap()
    }

    fn setup() -> (Model, EmbeddingTable, Vec<Prepared>) {
        let config = ModelConfig {
            embedding_dim: 8,
            hidden_per_direction: 4,
            composition: Composition::Ffl,
            ..ModelConfig::default()
        };
        let model = Model::new(config, 3).unwrap();
        let data: Vec<Prepared> = vec![instance("a", 0), instance("b", 1)]
            .into_iter()
            .map(|i| Prepared::new(i, &ExtractionConfig::default()))
            .collect();
        let mut words = Vec::new();
        for p in &data {
            words.extend(p.instance.passages.iter().flat_map(|q| q.tokens.iter().map(|t| t.lowercase.clone())));
        }
        (model, EmbeddingTable::random(8, words, 1), data)
    }

    #[test]
    fn fitting_one_instance_raises_its_probability() {
        let (mut model, table, data) = setup();
        let mut adam = AdamState::new(&model.store);
        let before = evaluate(&model, &table, &data[..1]).unwrap();
        let optim = OptimConfig {
            learning_rate: 0.01,
            ..OptimConfig::default()
        };
        for _ in 0..30 {
            let stats = train_step(&mut model, &mut adam, &table, &[&data[0]], &optim, None).unwrap();
            assert_eq!(stats.instances, 1);
        }
        let after = evaluate(&model, &table, &data[..1]).unwrap();
        assert!(after.mean_loss < before.mean_loss);
        assert_eq!(after.correct, 1);
    }

    #[test]
    fn untrainable_batches_are_skipped() {
        let (mut model, table, mut data) = setup();
        data[0].paths.retain(|p| p.candidate_index != 0);
        assert!(!data[0].trainable());
        let mut adam = AdamState::new(&model.store);
        let snapshot = model.store.clone();
        let stats = train_step(&mut model, &mut adam, &table, &[&data[0]], &OptimConfig::default(), None).unwrap();
        assert_eq!(stats, StepStats::default());
        assert_eq!(model.store, snapshot);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn batch_gradient_is_mean_of_instance_gradients() {
        let (model, table, data) = setup();
        let mut both = Gradients::zeros_like(&model.store);
        accumulate_gradients(&model, &table, &[&data[0], &data[1]], &mut both, None).unwrap();
        let mut a = Gradients::zeros_like(&model.store);
        let mut b = Gradients::zeros_like(&model.store);
        accumulate_gradients(&model, &table, &[&data[0]], &mut a, None).unwrap();
        accumulate_gradients(&model, &table, &[&data[1]], &mut b, None).unwrap();
        for ((_, x), ((_, y), (_, z))) in both.iter().zip(a.iter().zip(b.iter())) {
            for ((p, q), r) in x.data().iter().zip(y.data()).zip(z.data()) {
                assert!((p - 0.5 * (q + r)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn report_counts() {
        let (model, table, mut data) = setup();
        data[1].paths.clear();
        let report = evaluate(&model, &table, &data).unwrap();
        assert_eq!(report.total, 2);
        assert_eq!(report.unanswerable, 1);
        assert_eq!(report.predictions[1].predicted, None);
        assert!(report.correct <= 1);
        assert_eq!(report.accuracy, report.correct as f64 / 2.0);
        assert_eq!(evaluate(&model, &table, &[]), Err(Error::EmptyDataset));
    }

    #[test]
    fn only_the_answer_reachable_gives_perfect_accuracy() {
        let (model, table, mut data) = setup();
        for p in &mut data {
            let a = p.instance.answer_index.unwrap();
            p.paths.retain(|q| q.candidate_index == a);
        }
        let report = evaluate(&model, &table, &data).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert!(report.mean_loss.abs() < 1e-12);
    }
}
