use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::datagen::{PathGraphDataset, PathGraphInstance};
use crate::error::{Error, Result};
use crate::harness::linkpred::check_dims;
use crate::harness::metrics::accuracy;
use crate::harness::{bce_value, EpochMetrics, MetricsSink, Task, TrainConfig};
use crate::model::layers::bce_with_logit;
use crate::model::{CtanConfig, CtanModel, Memory, Session};
use crate::tensor::Tensor;

/// Outcome of one sequence-classification run.
#[derive(Clone, Debug)]
pub struct SequenceRun {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: CtanModel,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

pub(crate) fn new_adam(model: &CtanModel, cfg: &TrainConfig) -> Adam {
    let shapes: Vec<&[usize]> = model.params.tensors().iter().map(|t| t.shape()).collect();
    Adam::new(cfg.adam(), &shapes)
}

pub(crate) fn optimizer_step(adam: &mut Adam, model: &mut CtanModel, grads: &[Tensor]) -> Result<()> {
    adam.step(&mut model.params.tensors_mut(), grads).map_err(|e| match e {
        Error::Numeric(m) => Error::Divergence(m),
        e => e,
    })?;
    if model.params.tensors().iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence("non-finite parameters after an update".into()));
    }
    Ok(())
}

/// Replays one instance and returns the target's logit together with the
/// session that recorded it.
fn forward<'m, R: Rng + ?Sized>(
    model: &'m CtanModel,
    inst: &PathGraphInstance,
    rng: &mut R,
) -> Result<(Session<'m>, crate::tape::Var)> {
    let mut mem = Memory::for_model(model);
    let mut sess = Session::new(model)?;
    let mut last = 0.0;
    for e in inst.stream.iter() {
        sess.process_event(&mut mem, &e, rng)?;
        last = e.time;
    }
    let z = sess.sequence_logit(&mem, inst.target(), last)?;
    Ok((sess, z))
}

/// Mean loss, accuracy and logits of `model` on `instances`.
pub fn evaluate_sequence(
    model: &CtanModel,
    instances: &[PathGraphInstance],
    seed: u64,
) -> Result<(f64, f64, Vec<f64>)> {
    for inst in instances.iter().take(1) {
        check_dims(&model.config, &inst.stream)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = Vec::with_capacity(instances.len());
    let mut loss = 0.0;
    for inst in instances {
        let (sess, z) = forward(model, inst, &mut rng)?;
        let z = sess.tape.value(z).item();
        if !z.is_finite() {
            return Err(Error::Divergence("non-finite logit".into()));
        }
        loss += bce_value(z, inst.label > 0);
        logits.push(z);
    }
    let labels: Vec<i8> = instances.iter().map(|g| g.label).collect();
    Ok((loss / instances.len() as f64, accuracy(&logits, &labels)?, logits))
}

/// Trains on the training instances, one optimizer step per instance,
/// halving the learning rate when the validation loss plateaus, and scores
/// the test instances with the best-validation parameters.
pub fn train_sequence(
    data: &PathGraphDataset,
    model_cfg: &CtanConfig,
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<SequenceRun> {
    cfg.validate()?;
    if cfg.task != Task::SequenceCls {
        return Err(Error::Contract(
            "train_sequence needs a sequence_cls configuration".into(),
        ));
    }
    let model_cfg = cfg.ablation.apply(model_cfg);
    if let Some(inst) = data.instances.first() {
        check_dims(&model_cfg, &inst.stream)?;
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CtanModel::new(model_cfg, 1.0, &mut init_rng)?;
    let mut adam = new_adam(&model, cfg);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);

    let split = data.split;
    let train = &data.instances[split.range(crate::ctdg::Phase::Train)];
    let val = &data.instances[split.range(crate::ctdg::Phase::Val)];
    let test = &data.instances[split.range(crate::ctdg::Phase::Test)];
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::Split("every split needs at least one instance".into()));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, f64, CtanModel)> = None;
    let mut plateau = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut logits = Vec::with_capacity(train.len());
        let mut labels = Vec::with_capacity(train.len());
        for &i in &order {
            let inst = &train[i];
            let grads = {
                let (mut sess, z) = forward(&model, inst, &mut sampler_rng)?;
                let loss = bce_with_logit(&mut sess.tape, z, inst.label > 0)?;
                let l = sess.tape.value(loss).item();
                if !l.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss in epoch {epoch}")));
                }
                loss_sum += l;
                logits.push(sess.tape.value(z).item());
                labels.push(inst.label);
                sess.gradients(loss)?
            };
            optimizer_step(&mut adam, &mut model, &grads)?;
        }
        let lr = adam.lr();
        sink.record(&EpochMetrics {
            epoch,
            split: "train".into(),
            loss: loss_sum / train.len() as f64,
            acc: Some(accuracy(&logits, &labels)?),
            auc: None,
            lr,
        })?;
        let (val_loss, val_acc, _) = evaluate_sequence(&model, val, seed)?;
        sink.record(&EpochMetrics {
            epoch,
            split: "val".into(),
            loss: val_loss,
            acc: Some(val_acc),
            auc: None,
            lr,
        })?;
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, val_acc, model.clone()));
            plateau = 0;
        } else {
            plateau += 1;
            if plateau > cfg.lr_halving_patience {
                adam.set_lr(adam.lr() * 0.5);
                plateau = 0;
            }
        }
    }
    let (best_epoch, best_val_loss, val_acc, model) = best.expect("at least one epoch");
    let (test_loss, test_acc, _) = evaluate_sequence(&model, test, seed)?;
    sink.record(&EpochMetrics {
        epoch: best_epoch,
        split: "test".into(),
        loss: test_loss,
        acc: Some(test_acc),
        auc: None,
        lr: adam.lr(),
    })?;
    Ok(SequenceRun {
        model,
        best_epoch,
        best_val_loss,
        val_acc,
        test_loss,
        test_acc,
    })
}
