use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PipelineError, Record, RunConfig};
use crate::encoders::{encode_molecule, encode_text, BoundParams, ParamGroup, Vocab};
use crate::loss::batch_loss;
use crate::model::{Example, Model};
use crate::retrieval::{run_retrieval, Direction, MetricReport};
use crate::tensor::{Adam, AdamState, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub valid_hits1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch (the last epoch when there
    /// is no validation data).
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn group_state(model: &Model, group: ParamGroup, lr: f64) -> AdamState {
    let shapes: Vec<&[usize]> = model
        .params
        .iter()
        .filter(|p| p.group == group)
        .map(|p| p.value.shape())
        .collect();
    AdamState::new(lr, &shapes)
}

/// One forward/backward pass and optimizer step; returns the batch loss.
fn step(
    model: &mut Model,
    examples: &[&Example],
    adam: &Adam,
    states: &mut [AdamState; 2],
) -> Result<f64, PipelineError> {
    let cls = model.vocab.cls_id();
    let loss_cfg = model.config.loss_config();
    let mut tape = Tape::new();
    let p = BoundParams::bind(&mut tape, &model.params, true)?;
    let mut texts = Vec::with_capacity(examples.len());
    let mut mols = Vec::with_capacity(examples.len());
    for e in examples {
        texts.push(encode_text(&mut tape, &p, &e.token_ids, cls)?);
        mols.push(encode_molecule(&mut tape, &p, &e.molecule)?);
    }
    let loss = batch_loss(&mut tape, &texts, &mols, &loss_cfg)?;
    let value = tape.value(loss.total).item();
    let grads = tape.backward(loss.total)?;

    for (g, group) in [ParamGroup::Text, ParamGroup::Rest].into_iter().enumerate() {
        let mut grad_list: Vec<Tensor> = Vec::new();
        let mut params: Vec<&mut Tensor> = Vec::new();
        for (k, param) in model.params.iter_mut().enumerate() {
            if param.group == group {
                grad_list.push(grads.get_or_zeros(p.vars[k], param.value.shape()));
                params.push(&mut param.value);
            }
        }
        let grad_refs: Vec<&Tensor> = grad_list.iter().collect();
        adam.step(&mut params, &grad_refs, &mut states[g])?;
    }
    Ok(value)
}

/// Retrieval metrics for `queries` ranked against `pool`; both index into
/// `examples`.
pub fn evaluate(
    model: &Model,
    examples: &[Example],
    queries: &[usize],
    pool: &[usize],
    direction: Direction,
    ks: &[usize],
) -> Result<MetricReport, PipelineError> {
    let corpus = model.encode_corpus(examples)?;
    let (_, report) = run_retrieval(direction, &corpus, queries, pool, &model.config.inference_config(), ks)?;
    Ok(report)
}

/// Trains from scratch. The vocabulary comes from the training texts.
pub fn train(config: &RunConfig, train: &[Record], valid: &[Record]) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    if train.is_empty() {
        return Err(PipelineError::Input("training split is empty".into()));
    }
    let vocab = Vocab::build(train.iter().map(|r| r.description.as_str()), config.min_freq);
    let mut model = Model::init(config.clone(), vocab);
    let train_ex = model.prepare_all(train)?;
    let valid_ex = model.prepare_all(valid)?;
    info!(
        "training on {} pairs ({} validation), vocabulary {}, {} parameter values",
        train_ex.len(),
        valid_ex.len(),
        model.vocab.len(),
        model.params.total_values()
    );

    let adam = Adam::default();
    let mut states = [
        group_state(&model, ParamGroup::Text, config.lr_text),
        group_state(&model, ParamGroup::Rest, config.lr_rest),
    ];
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let valid_all: Vec<usize> = (0..valid_ex.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // A lone sample has no negatives.
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let l = step(&mut model, &batch, &adam, &mut states)?;
            debug!("epoch {} batch {} loss {:.6}", epoch, batches, l);
            total += l;
            batches += 1;
        }
        let loss = if batches > 0 { total / batches as f64 } else { 0.0 };

        let valid_hits1 = if valid_ex.is_empty() {
            None
        } else {
            Some(evaluate(&model, &valid_ex, &valid_all, &valid_all, Direction::TextToMol, &[1])?.hits_at[&1])
        };
        match valid_hits1 {
            Some(h) => info!("epoch {:>3} loss {:.6} valid hits@1 {:.4}", epoch, loss, h),
            None => info!("epoch {:>3} loss {:.6}", epoch, loss),
        }
        let score = valid_hits1.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score >= *s) {
            best = Some((score, epoch, model.clone()));
        }
        log.push(EpochLog {
            epoch,
            loss,
            valid_hits1,
        });
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, log })
}
