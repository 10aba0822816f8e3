use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::ctdg::{EventStream, NodeId, Phase, SplitSpec};
use crate::error::{dim_err, Error, Result};
use crate::harness::metrics::auc;
use crate::harness::sequence::{new_adam, optimizer_step};
use crate::harness::{bce_value, EpochMetrics, MetricsSink, Task, TrainConfig};
use crate::model::layers::bce_with_logit;
use crate::model::{CtanConfig, CtanModel, Memory, Session};

/// Outcome of one link-prediction run.
#[derive(Clone, Debug)]
pub struct LinkRun {
    /// Parameters of the epoch with the highest validation AUC.
    pub model: CtanModel,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_auc: f64,
    pub test_auc: f64,
    pub test_loss: f64,
}

/// Mean gap between consecutive training events, used to normalize
/// elapsed times. Falls back to 1 for a degenerate training span.
pub fn train_time_scale(stream: &EventStream, split: &SplitSpec) -> f64 {
    let ev = stream.events();
    if split.train_end < 2 {
        return 1.0;
    }
    let s = (ev[split.train_end - 1].time - ev[0].time) / (split.train_end - 1) as f64;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

enum Mode<'a> {
    Train(&'a mut Adam),
    Score,
    Absorb,
}

#[derive(Default)]
struct PassOut {
    loss: f64,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl PassOut {
    fn auc(&self) -> Result<f64> {
        auc(&self.pos, &self.neg)
    }
}

/// Runs the events of `range` through the model in batches of consecutive
/// events that never split a timestamp. Within a timestamp every event is
/// scored from the memory before any of them is absorbed.
#[allow(clippy::too_many_arguments)]
fn run_pass<R: Rng + ?Sized>(
    model: &mut CtanModel,
    mem: &mut Memory,
    stream: &EventStream,
    range: Range<usize>,
    negatives: &[Option<NodeId>],
    batch: usize,
    mut mode: Mode,
    rng: &mut R,
) -> Result<PassOut> {
    let events = stream.events();
    let mut out = PassOut::default();
    let mut loss_sum = 0.0;
    let mut i = range.start;
    while i < range.end {
        let mut end = (i + batch).min(range.end);
        while end < range.end && events[end].time == events[end - 1].time {
            end += 1;
        }
        let grads = {
            let mut sess = Session::new(model)?;
            let mut terms = Vec::new();
            let mut g = i;
            while g < end {
                let t = events[g].time;
                let mut h = g;
                while h < end && events[h].time == t {
                    h += 1;
                }
                if !matches!(mode, Mode::Absorb) {
                    let scored: Vec<(NodeId, NodeId, NodeId)> = (g..h)
                        .filter_map(|k| Some((events[k].src, events[k].dst?, negatives[k]?)))
                        .collect();
                    if !scored.is_empty() {
                        let mut seeds: Vec<NodeId> = scored.iter().flat_map(|&(a, b, c)| [a, b, c]).collect();
                        seeds.sort();
                        seeds.dedup();
                        let hs = sess.embed(mem, &seeds, t, rng)?;
                        let emb: HashMap<NodeId, _> = seeds.into_iter().zip(hs).collect();
                        for (s, d, n) in scored {
                            let zp = sess.link_logit(emb[&s], emb[&d])?;
                            let zn = sess.link_logit(emb[&s], emb[&n])?;
                            let (vp, vn) = (sess.tape.value(zp).item(), sess.tape.value(zn).item());
                            if !(vp.is_finite() && vn.is_finite()) {
                                return Err(Error::Divergence(format!("non-finite score at time {t}")));
                            }
                            out.pos.push(vp);
                            out.neg.push(vn);
                            loss_sum += bce_value(vp, true) + bce_value(vn, false);
                            if matches!(mode, Mode::Train(_)) {
                                terms.push(bce_with_logit(&mut sess.tape, zp, true)?);
                                terms.push(bce_with_logit(&mut sess.tape, zn, false)?);
                            }
                        }
                    }
                }
                for k in g..h {
                    sess.process_event(mem, &stream.get(k), rng)?;
                }
                g = h;
            }
            let grads = if terms.is_empty() {
                None
            } else {
                let total = terms[1..].iter().try_fold(terms[0], |acc, &v| sess.tape.add(acc, v))?;
                let mean = sess.tape.scale(total, 1.0 / terms.len() as f64);
                Some(sess.gradients(mean)?)
            };
            sess.commit(mem)?;
            grads
        };
        if let (Mode::Train(adam), Some(grads)) = (&mut mode, grads) {
            optimizer_step(adam, model, &grads)?;
        }
        i = end;
    }
    if !out.pos.is_empty() {
        out.loss = loss_sum / (2 * out.pos.len()) as f64;
    }
    Ok(out)
}

pub(crate) fn check_dims(cfg: &CtanConfig, stream: &EventStream) -> Result<()> {
    if cfg.node_dim != stream.node_dim() || cfg.edge_dim != stream.edge_dim() {
        return Err(dim_err(
            "feature_dims",
            format!(
                "model expects node/edge features of width {}/{}, stream has {}/{}",
                cfg.node_dim,
                cfg.edge_dim,
                stream.node_dim(),
                stream.edge_dim()
            ),
        ));
    }
    Ok(())
}

/// Trains on the training events with memory reset every epoch, validates
/// by continuing from the memory left by training, stops early on the
/// validation AUC and scores the test events by continuing from the memory
/// of the best epoch. `negatives` holds one negative destination per edge
/// event.
#[allow(clippy::too_many_arguments)]
pub fn train_linkpred(
    stream: &EventStream,
    split: &SplitSpec,
    negatives: &[Option<NodeId>],
    model_cfg: &CtanConfig,
    cfg: &TrainConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<LinkRun> {
    cfg.validate()?;
    if cfg.task != Task::LinkPred {
        return Err(Error::Contract("train_linkpred needs a link_pred configuration".into()));
    }
    if negatives.len() != stream.len() || split.len != stream.len() {
        return Err(Error::Contract("split and negatives must cover the stream".into()));
    }
    let model_cfg = cfg.ablation.apply(model_cfg);
    check_dims(&model_cfg, stream)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CtanModel::new(model_cfg, train_time_scale(stream, split), &mut init_rng)?;
    let mut adam = new_adam(&model, cfg);
    let mut mem = Memory::for_model(&model);

    let mut best: Option<(usize, f64, CtanModel, Memory)> = None;
    let mut stale = 0usize;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        mem.reset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let tr = run_pass(
            &mut model,
            &mut mem,
            stream,
            split.range(Phase::Train),
            negatives,
            cfg.batch_size,
            Mode::Train(&mut adam),
            &mut rng,
        )?;
        let lr = adam.lr();
        sink.record(&EpochMetrics {
            epoch,
            split: "train".into(),
            loss: tr.loss,
            acc: None,
            auc: Some(tr.auc()?),
            lr,
        })?;
        let va = run_pass(
            &mut model,
            &mut mem,
            stream,
            split.range(Phase::Val),
            negatives,
            cfg.batch_size,
            Mode::Score,
            &mut rng,
        )?;
        let val_auc = va.auc()?;
        sink.record(&EpochMetrics {
            epoch,
            split: "val".into(),
            loss: va.loss,
            acc: None,
            auc: Some(val_auc),
            lr,
        })?;
        if best.as_ref().is_none_or(|b| val_auc > b.1) {
            best = Some((epoch, val_auc, model.clone(), mem.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (best_epoch, val_auc, mut model, mut mem) = best.expect("at least one epoch");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let te = run_pass(
        &mut model,
        &mut mem,
        stream,
        split.range(Phase::Test),
        negatives,
        cfg.batch_size,
        Mode::Score,
        &mut rng,
    )?;
    let test_auc = te.auc()?;
    sink.record(&EpochMetrics {
        epoch: best_epoch,
        split: "test".into(),
        loss: te.loss,
        acc: None,
        auc: Some(test_auc),
        lr: adam.lr(),
    })?;
    Ok(LinkRun {
        model,
        best_epoch,
        epochs_run,
        val_auc,
        test_auc,
        test_loss: te.loss,
    })
}

/// Scores of one evaluation replay.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkEval {
    pub val_pos: Vec<f64>,
    pub val_neg: Vec<f64>,
    pub test_pos: Vec<f64>,
    pub test_neg: Vec<f64>,
}

impl LinkEval {
    pub fn val_auc(&self) -> Result<f64> {
        auc(&self.val_pos, &self.val_neg)
    }

    pub fn test_auc(&self) -> Result<f64> {
        auc(&self.test_pos, &self.test_neg)
    }
}

/// Replays `stream` through a trained model: the training events are
/// absorbed without scoring, then the validation and test events are
/// scored in order.
pub fn evaluate_linkpred(
    model: &CtanModel,
    stream: &EventStream,
    split: &SplitSpec,
    negatives: &[Option<NodeId>],
    batch_size: usize,
    seed: u64,
) -> Result<LinkEval> {
    check_dims(&model.config, stream)?;
    if batch_size == 0 || negatives.len() != stream.len() || split.len != stream.len() {
        return Err(Error::Contract("split and negatives must cover the stream".into()));
    }
    let mut model = model.clone();
    let mut mem = Memory::for_model(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = batch_size;
    run_pass(
        &mut model,
        &mut mem,
        stream,
        split.range(Phase::Train),
        negatives,
        b,
        Mode::Absorb,
        &mut rng,
    )?;
    let va = run_pass(
        &mut model,
        &mut mem,
        stream,
        split.range(Phase::Val),
        negatives,
        b,
        Mode::Score,
        &mut rng,
    )?;
    let te = run_pass(
        &mut model,
        &mut mem,
        stream,
        split.range(Phase::Test),
        negatives,
        b,
        Mode::Score,
        &mut rng,
    )?;
    Ok(LinkEval {
        val_pos: va.pos,
        val_neg: va.neg,
        test_pos: te.pos,
        test_neg: te.neg,
    })
}
