//! RMSProp, padded mini-batches, the epoch loop, and best-on-dev selection.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{denormalize_score, normalize_score, EssayRecord, FoldSplit, Partition};
use crate::error::{Error, Result};
use crate::eval::qwk;
use crate::layers::{mse_loss, Mode};
use crate::model::{EssayInput, ModelConfig, ModelGraph};
use crate::tensor::{Float, Gradients, Graph, ParamStore};
use crate::text::{build_vocab, encode_essay, EncodedEssay, Vocabulary, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    Qwk,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Float,
    /// Decay of the squared-gradient average.
    pub rms_decay: Float,
    pub epsilon: Float,
    /// Classical momentum on top of RMSProp; 0 disables it.
    pub momentum: Float,
    pub dropout: Float,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 0.001,
            rms_decay: 0.9,
            epsilon: 1e-7,
            momentum: 0.0,
            dropout: 0.5,
            seed: 42,
            selection_metric: SelectionMetric::Qwk,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || self.epsilon.is_nan()
            || self.epsilon <= 0.0
        {
            return bad(format!(
                "learning_rate {} / epsilon {} out of range",
                self.learning_rate, self.epsilon
            ));
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(0.0..1.0).contains(&self.momentum) {
            return bad("rms_decay and momentum must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// One RMSProp update of a parameter array in place.
///
/// `s <- rho*s + (1-rho)*g^2`, then `p <- p - lr*g/sqrt(s+eps)`. With
/// nonzero `momentum` the step goes through a velocity buffer:
/// `v <- mu*v + lr*g/sqrt(s+eps)`, `p <- p - v`.
pub fn rmsprop_update(
    param: &mut [Float],
    grad: &[Float],
    sq: &mut [Float],
    velocity: &mut [Float],
    config: &TrainConfig,
) -> Result<()> {
    if grad.len() != param.len() || sq.len() != param.len() || velocity.len() != param.len() {
        return Err(Error::Shape {
            op: "rmsprop_update",
            left: vec![param.len()],
            right: vec![grad.len(), sq.len(), velocity.len()],
        });
    }
    let rho = config.rms_decay;
    for i in 0..param.len() {
        let g = grad[i];
        sq[i] = rho * sq[i] + (1.0 - rho) * g * g;
        let step = config.learning_rate * g / (sq[i] + config.epsilon).sqrt();
        if config.momentum > 0.0 {
            velocity[i] = config.momentum * velocity[i] + step;
            param[i] -= velocity[i];
        } else {
            param[i] -= step;
        }
    }
    Ok(())
}

/// Optimizer state for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    config: TrainConfig,
    sq: Vec<Vec<Float>>,
    velocity: Vec<Vec<Float>>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, config: &TrainConfig) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        RmsProp {
            config: config.clone(),
            sq: zeros(),
            velocity: if config.momentum > 0.0 {
                zeros()
            } else {
                vec![Vec::new(); store.len()]
            },
        }
    }

    pub fn mean_square(&self, index: usize) -> &[Float] {
        &self.sq[index]
    }

    /// Applies `grads`. Trainable parameters without a gradient are
    /// treated as having zero gradient; frozen ones are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if store.len() != self.sq.len() {
            return Err(Error::arg(
                "optimizer state was built for a different store",
            ));
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let t = store.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let i = id.index();
            let zero;
            let g = match grads.get(id) {
                Some(g) => g,
                None => {
                    zero = vec![0.0; t.numel()];
                    &zero
                }
            };
            let vel = &mut self.velocity[i];
            if vel.is_empty() {
                vel.resize(t.numel(), 0.0);
            }
            rmsprop_update(t.data_mut(), g, &mut self.sq[i], vel, &self.config)?;
        }
        Ok(())
    }
}

/// An encoded essay with normalized targets and integer gold scores, one
/// per model head.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub essay_id: u64,
    pub essay: EncodedEssay,
    pub targets: Vec<Float>,
    pub gold: Vec<i64>,
}

pub fn prepare_examples(
    records: &[&EssayRecord],
    vocab: &Vocabulary,
    config: &ModelConfig,
) -> Result<Vec<Example>> {
    let heads = config.heads();
    records
        .iter()
        .map(|r| {
            let mut targets = Vec::with_capacity(heads.len());
            let mut gold = Vec::with_capacity(heads.len());
            for h in &heads {
                let s = r
                    .score(h)
                    .ok_or_else(|| Error::arg(format!("essay {} has no {h} score", r.essay_id)))?;
                targets.push(normalize_score(s, config.head_range(h)?)?);
                gold.push(s);
            }
            Ok(Example {
                essay_id: r.essay_id,
                essay: encode_essay(r, vocab)?,
                targets,
                gold,
            })
        })
        .collect()
}

/// Essays padded to the batch's longest essay and longest sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// Positions of the batch members in the source slice.
    pub indices: Vec<usize>,
    pub sentences: Vec<Vec<Vec<usize>>>,
    pub token_masks: Vec<Vec<Vec<bool>>>,
    pub sentence_masks: Vec<Vec<bool>>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn input(&self, i: usize) -> EssayInput<'_> {
        EssayInput {
            sentences: &self.sentences[i],
            token_mask: Some(&self.token_masks[i]),
            sentence_mask: Some(&self.sentence_masks[i]),
        }
    }
}

pub fn pad_batch(essays: &[EncodedEssay], indices: Vec<usize>) -> PaddedBatch {
    let max_s = indices
        .iter()
        .map(|i| essays[*i].sentences.len())
        .max()
        .unwrap_or(0);
    let max_t = indices
        .iter()
        .flat_map(|i| essays[*i].sentences.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut batch = PaddedBatch {
        indices: Vec::with_capacity(indices.len()),
        sentences: Vec::with_capacity(indices.len()),
        token_masks: Vec::with_capacity(indices.len()),
        sentence_masks: Vec::with_capacity(indices.len()),
    };
    for i in indices {
        let e = &essays[i];
        let mut sents = Vec::with_capacity(max_s);
        let mut tmask = Vec::with_capacity(max_s);
        for s in 0..max_s {
            let real = e.sentences.get(s).map_or(&[][..], Vec::as_slice);
            let mut ids = real.to_vec();
            ids.resize(max_t, PAD);
            let mut m = vec![true; real.len()];
            m.resize(max_t, false);
            sents.push(ids);
            tmask.push(m);
        }
        batch
            .sentence_masks
            .push((0..max_s).map(|s| s < e.sentences.len()).collect());
        batch.sentences.push(sents);
        batch.token_masks.push(tmask);
        batch.indices.push(i);
    }
    batch
}

/// Shuffles with `seed` and cuts into padded batches of `batch_size`
/// (the last one may be short).
pub fn make_batches(
    essays: &[EncodedEssay],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<PaddedBatch>> {
    if batch_size == 0 {
        return Err(Error::arg("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..essays.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .map(|c| pad_batch(essays, c.to_vec()))
        .collect())
}

/// Tracks the best score seen so far. Ties keep the earlier epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestTracker {
    pub metric: SelectionMetric,
    pub best: Option<(usize, f64)>,
}

impl BestTracker {
    pub fn new(metric: SelectionMetric) -> Self {
        BestTracker { metric, best: None }
    }

    /// Records `score` for `epoch`; true when it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        let better = match self.best {
            None => true,
            Some((_, b)) => match self.metric {
                SelectionMetric::Qwk => score > b,
                SelectionMetric::Mse => score < b,
            },
        };
        if better {
            self.best = Some((epoch, score));
        }
        better
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

/// Predictions and agreement on a set of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub mse: f64,
    /// QWK per head, in head order.
    pub qwk: Vec<f64>,
    /// Integer predictions per example, in head order.
    pub predictions: Vec<Vec<i64>>,
}

pub fn evaluate(model: &ModelGraph, examples: &[Example]) -> Result<Scores> {
    let heads = model.config.heads();
    let ranges = heads
        .iter()
        .map(|h| model.config.head_range(h))
        .collect::<Result<Vec<_>>>()?;
    let mut se = 0.0;
    let mut predictions = Vec::with_capacity(examples.len());
    for ex in examples {
        let out = model.predict(&EssayInput::from(&ex.essay))?;
        for (p, t) in out.iter().zip(&ex.targets) {
            se += ((p - t) as f64).powi(2);
        }
        predictions.push(
            out.iter()
                .zip(&ranges)
                .map(|(p, r)| denormalize_score(*p, *r))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let n = examples.len().max(1) as f64;
    let mut per_head = Vec::with_capacity(heads.len());
    for (k, range) in ranges.iter().enumerate() {
        let pred: Vec<i64> = predictions.iter().map(|p| p[k]).collect();
        let gold: Vec<i64> = examples.iter().map(|e| e.gold[k]).collect();
        per_head.push(if examples.len() < 2 {
            0.0
        } else {
            qwk(&pred, &gold, *range)?
        });
    }
    Ok(Scores {
        mse: se / (n * heads.len() as f64),
        qwk: per_head,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_mse: f64,
    pub dev_qwk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub heads: Vec<String>,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,dev_mse");
        for h in &self.heads {
            let _ = write!(s, ",dev_qwk_{h}");
        }
        s.push('\n');
        for e in &self.epochs {
            let _ = write!(s, "{},{},{}", e.epoch, e.train_loss, e.dev_mse);
            for q in &e.dev_qwk {
                let _ = write!(s, ",{q}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model restored to its best dev epoch.
    pub model: ModelGraph,
    pub best_epoch: usize,
    pub history: History,
    pub seconds: f64,
}

/// Index of the head whose dev score drives selection: the overall head in
/// MTL mode, the only head in STL mode.
fn selection_head(model: &ModelGraph) -> usize {
    model.heads.len() - 1
}

/// Mean loss over one padded batch; gradients of that mean land in `grads`.
pub fn batch_gradients(
    model: &ModelGraph,
    batch: &PaddedBatch,
    examples: &[Example],
    rng: &mut ChaCha8Rng,
    grads: &mut Gradients,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as Float;
    let mut total = 0.0;
    for (slot, idx) in batch.indices.iter().enumerate() {
        let mut g = Graph::new(&model.params);
        let outs = model.forward(&mut g, &batch.input(slot), Mode::Train, rng)?;
        let loss = mse_loss(&mut g, &outs, &examples[*idx].targets)?;
        let scaled = g.scale(loss, scale);
        total += g.scalar(scaled) as f64;
        g.backward_into(scaled, grads)?;
    }
    Ok(total)
}

/// Runs `config.epochs` epochs, evaluating on `dev` after each, and
/// returns the parameters of the best dev epoch.
pub fn train(
    mut model: ModelGraph,
    train_set: &[Example],
    dev: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    model.config.dropout = config.dropout;
    let start = Instant::now();
    let essays: Vec<EncodedEssay> = train_set.iter().map(|e| e.essay.clone()).collect();
    let mut opt = RmsProp::new(&model.params, config);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d50f);
    let mut tracker = BestTracker::new(config.selection_metric);
    let mut best_params = model.params.clone();
    let heads = model.config.heads();
    let sel = selection_head(&model);
    let mut history = History {
        heads: heads.clone(),
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 1..=config.epochs {
        let batches = make_batches(
            &essays,
            config.batch_size,
            config.seed.wrapping_add(epoch as u64),
        )?;
        let mut epoch_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let mut grads = Gradients::new();
            let loss = batch_gradients(&model, batch, train_set, &mut dropout_rng, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut model.params, &grads)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (dev_mse, dev_qwk) = if dev.is_empty() {
            (f64::NAN, vec![f64::NAN; heads.len()])
        } else {
            let s = evaluate(&model, dev)?;
            (s.mse, s.qwk)
        };
        let score = match config.selection_metric {
            SelectionMetric::Qwk => dev_qwk[sel],
            SelectionMetric::Mse => dev_mse,
        };
        // without a dev set the last epoch wins
        if dev.is_empty() || tracker.observe(epoch, score) {
            best_params = model.params.clone();
            if dev.is_empty() {
                tracker.best = Some((epoch, score));
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_mse,
            dev_qwk,
        });
    }
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        best_epoch: tracker.best_epoch().unwrap_or(config.epochs),
        history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// A trained fold with its test-set results.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold_id: usize,
    pub vocab: Vocabulary,
    pub trained: TrainOutcome,
    pub test: Scores,
    pub test_ids: Vec<u64>,
}

impl FoldOutcome {
    pub fn heads(&self) -> Vec<String> {
        self.trained.model.config.heads()
    }

    pub fn test_qwk(&self, head: &str) -> Result<f64> {
        let k = self
            .heads()
            .iter()
            .position(|h| h == head)
            .ok_or_else(|| Error::arg(format!("model has no head {head}")))?;
        Ok(self.test.qwk[k])
    }
}

/// Builds the fold's vocabulary from its training essays, trains, selects
/// on dev, and scores the test partition.
pub fn run_fold(
    records: &[EssayRecord],
    fold: &FoldSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<FoldOutcome> {
    let train_recs = fold.select(records, Partition::Train)?;
    let dev_recs = fold.select(records, Partition::Dev)?;
    let test_recs = fold.select(records, Partition::Test)?;
    let vocab = build_vocab(&train_recs.iter().map(|r| (*r).clone()).collect::<Vec<_>>())?;
    let mut mc = model_config.clone();
    mc.vocab_size = vocab.len();
    mc.dropout = config.dropout;
    let model = ModelGraph::build(mc)?;
    run_fold_with(
        model,
        vocab,
        &train_recs,
        &dev_recs,
        &test_recs,
        fold.fold_id,
        config,
    )
}

/// Like [`run_fold`] with a prebuilt model and vocabulary (e.g. with
/// pretrained embeddings already applied).
pub fn run_fold_with(
    model: ModelGraph,
    vocab: Vocabulary,
    train_recs: &[&EssayRecord],
    dev_recs: &[&EssayRecord],
    test_recs: &[&EssayRecord],
    fold_id: usize,
    config: &TrainConfig,
) -> Result<FoldOutcome> {
    let train_ex = prepare_examples(train_recs, &vocab, &model.config)?;
    let dev_ex = prepare_examples(dev_recs, &vocab, &model.config)?;
    let test_ex = prepare_examples(test_recs, &vocab, &model.config)?;
    let trained = train(model, &train_ex, &dev_ex, config)?;
    let test = evaluate(&trained.model, &test_ex)?;
    Ok(FoldOutcome {
        fold_id,
        vocab,
        trained,
        test,
        test_ids: test_ex.iter().map(|e| e.essay_id).collect(),
    })
}

/// STL-over-MTL training time ratio: the summed time of one STL run per
/// head (every trait plus overall) divided by the single MTL run time.
pub fn speedup_ratio(stl_seconds: &[f64], mtl_seconds: f64) -> Result<f64> {
    if stl_seconds.is_empty() || mtl_seconds.is_nan() || mtl_seconds <= 0.0 {
        return Err(Error::arg(
            "speed-up needs STL times and a positive MTL time",
        ));
    }
    Ok(stl_seconds.iter().sum::<f64>() / mtl_seconds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub prompt: u8,
    pub fold: usize,
    pub config: String,
    pub seconds: f64,
}

/// Totals per config and the STL/MTL speed-up for one recurrent type.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub stl_total: f64,
    pub mtl_total: f64,
    pub speedup: f64,
}

/// Sums timings whose config starts with `stl-<rec>` and equals
/// `mtl-<rec>`, for `rec` in {lstm, bilstm}.
pub fn measure_runtime(timings: &[RunTiming], recurrent: &str) -> Result<TimingReport> {
    let stl_prefix = format!("stl-{recurrent}");
    let mtl_name = format!("mtl-{recurrent}");
    let stl: Vec<f64> = timings
        .iter()
        .filter(|t| t.config == stl_prefix || t.config.starts_with(&format!("{stl_prefix}-")))
        .map(|t| t.seconds)
        .collect();
    let mtl_total: f64 = timings
        .iter()
        .filter(|t| t.config == mtl_name)
        .map(|t| t.seconds)
        .sum();
    let speedup = speedup_ratio(&stl, mtl_total)?;
    Ok(TimingReport {
        stl_total: stl.iter().sum(),
        mtl_total,
        speedup,
    })
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;
    use crate::dataset::PromptSpec;
    use crate::layers::Dims;
    use crate::model::{Recurrent, TaskMode};

    #[test]
    fn rmsprop_first_step_magnitude() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        rmsprop_update(&mut p, &[1.0, 1.0], &mut s, &mut v, &cfg).unwrap();
        let expected = 0.001 / (0.1f64 + 1e-7).sqrt();
        assert!((1.0 - p[0] - expected).abs() < 1e-12);
        assert!((expected - 0.003162).abs() < 1e-6);
        assert!((s[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_zero_gradient_and_sign() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.5, 0.5, 0.5];
        let mut s = vec![1.0, 2.0, 4.0];
        let mut v = vec![0.0; 3];
        rmsprop_update(&mut p, &[0.0; 3], &mut s, &mut v, &cfg).unwrap();
        assert_eq!(p, vec![0.5; 3]);
        assert_eq!(s, vec![0.9, 1.8, 3.6]);
        let before = p.clone();
        rmsprop_update(&mut p, &[3.0, -0.01, 0.2], &mut s, &mut v, &cfg).unwrap();
        assert!(p[0] < before[0] && p[1] > before[1] && p[2] < before[2]);
        assert!(rmsprop_update(&mut p, &[1.0], &mut s, &mut v, &cfg).is_err());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let mut p = vec![0.25, -1.0];
        let mut s = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        rmsprop_update(&mut p, &[5.0, -7.0], &mut s, &mut v, &cfg).unwrap();
        assert_eq!(p, vec![0.25, -1.0]);
    }

    fn toy_essays(n: usize) -> Vec<EncodedEssay> {
        (0..n)
            .map(|i| {
                let sents = (0..1 + i % 3)
                    .map(|s| (0..2 + (i + s) % 4).map(|t| 2 + (i + t) % 7).collect())
                    .collect();
                EncodedEssay::new(sents).unwrap()
            })
            .collect()
    }

    #[test]
    fn batches_sizes_padding_and_seed() {
        let essays = toy_essays(250);
        let b = make_batches(&essays, 100, 7).unwrap();
        assert_eq!(
            b.iter().map(PaddedBatch::len).collect::<Vec<_>>(),
            vec![100, 100, 50]
        );
        assert_eq!(b, make_batches(&essays, 100, 7).unwrap());
        assert_ne!(
            b[0].indices,
            make_batches(&essays, 100, 8).unwrap()[0].indices
        );
        let mut seen: Vec<usize> = b.iter().flat_map(|x| x.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..250).collect::<Vec<_>>());
        for batch in &b {
            let ms = batch.sentences.iter().map(Vec::len).max().unwrap();
            for (k, i) in batch.indices.iter().enumerate() {
                assert_eq!(batch.sentences[k].len(), ms);
                let real: usize = batch.token_masks[k]
                    .iter()
                    .flatten()
                    .filter(|m| **m)
                    .count();
                assert_eq!(real, essays[*i].num_tokens());
            }
        }
        assert!(make_batches(&essays, 0, 1).is_err());
    }

    #[test]
    fn best_tracker_keeps_peak_epoch() {
        let mut t = BestTracker::new(SelectionMetric::Qwk);
        for (e, q) in [0.3, 0.5, 0.71, 0.69, 0.71, 0.4].iter().enumerate() {
            t.observe(e + 1, *q);
        }
        assert_eq!(t.best_epoch(), Some(3));
        let mut t = BestTracker::new(SelectionMetric::Mse);
        for (e, q) in [0.3, 0.2, 0.25].iter().enumerate() {
            t.observe(e + 1, *q);
        }
        assert_eq!(t.best_epoch(), Some(2));
    }

    #[test]
    fn speedup_of_equal_times_is_head_count() {
        for m in 1..=6 {
            let stl = vec![3.5; m + 1];
            assert_eq!(speedup_ratio(&stl, 3.5).unwrap(), (m + 1) as f64);
        }
        assert!(speedup_ratio(&[], 1.0).is_err());
        let timings = vec![
            RunTiming {
                prompt: 1,
                fold: 0,
                config: "stl-lstm".into(),
                seconds: 2.0,
            },
            RunTiming {
                prompt: 1,
                fold: 0,
                config: "stl-lstm-content".into(),
                seconds: 2.0,
            },
            RunTiming {
                prompt: 1,
                fold: 0,
                config: "stl-bilstm".into(),
                seconds: 9.0,
            },
            RunTiming {
                prompt: 1,
                fold: 0,
                config: "mtl-lstm".into(),
                seconds: 2.0,
            },
        ];
        let r = measure_runtime(&timings, "lstm").unwrap();
        assert_eq!((r.stl_total, r.mtl_total, r.speedup), (4.0, 2.0, 2.0));
    }

    fn tiny_config(mode: TaskMode) -> ModelConfig {
        let mut c = ModelConfig::new(mode, Recurrent::Lstm, PromptSpec::new(3).unwrap());
        c.dims = Dims {
            embed_dim: 6,
            window: 3,
            filters: 6,
            hidden: 5,
        };
        c.vocab_size = 12;
        c
    }

    fn tiny_examples(config: &ModelConfig, n: usize) -> Vec<Example> {
        toy_essays(n)
            .into_iter()
            .enumerate()
            .map(|(i, essay)| {
                let len = essay.num_tokens();
                let gold: Vec<i64> = config.heads().iter().map(|_| (len % 4) as i64).collect();
                let targets = gold.iter().map(|g| *g as Float / 3.0).collect();
                Example {
                    essay_id: i as u64,
                    essay,
                    targets,
                    gold,
                }
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic_and_history_complete() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mc = tiny_config(TaskMode::Mtl);
        let ex = tiny_examples(&mc, 12);
        let a = train(
            ModelGraph::build(mc.clone()).unwrap(),
            &ex[..8],
            &ex[8..],
            &cfg,
        )
        .unwrap();
        let b = train(ModelGraph::build(mc).unwrap(), &ex[..8], &ex[8..], &cfg).unwrap();
        assert_eq!(a.history.epochs.len(), 3);
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history, b.history);
        assert!(a
            .history
            .to_csv()
            .starts_with("epoch,train_loss,dev_mse,dev_qwk_content"));
    }

    #[test]
    fn loss_falls_over_first_steps() {
        let cfg = TrainConfig {
            dropout: 0.0,
            learning_rate: 0.005,
            ..TrainConfig::default()
        };
        let mc = tiny_config(TaskMode::Stl);
        let ex = tiny_examples(&mc, 16);
        let mut model = ModelGraph::build(mc).unwrap();
        model.config.dropout = 0.0;
        let essays: Vec<EncodedEssay> = ex.iter().map(|e| e.essay.clone()).collect();
        let batch = pad_batch(&essays, (0..16).collect());
        let mut opt = RmsProp::new(&model.params, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut losses = Vec::new();
        for _ in 0..6 {
            let mut grads = Gradients::new();
            losses.push(batch_gradients(&model, &batch, &ex, &mut rng, &mut grads).unwrap());
            opt.step(&mut model.params, &grads).unwrap();
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mc = tiny_config(TaskMode::Stl);
        let mut ex = tiny_examples(&mc, 4);
        ex[0].targets[0] = Float::NAN;
        ex[1].targets[0] = Float::NAN;
        ex[2].targets[0] = Float::NAN;
        let err = train(ModelGraph::build(mc).unwrap(), &ex, &[], &cfg).unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, batch, .. } => assert_eq!((epoch, batch), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
