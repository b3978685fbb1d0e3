use std::time::Instant;

use crate::autodiff::Tape;
use crate::backbone::Model;
use crate::data::{epoch_batches, Dataset};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::train::metrics::{EpochMetrics, Split, Tally};
use crate::train::optim::Optimizer;

/// Outcome of one training epoch.
#[derive(Clone, Debug)]
pub struct EpochReport {
    pub metrics: EpochMetrics,
    /// Mean loss of every batch, in order.
    pub batch_losses: Vec<f64>,
}

/// One forward/backward/step per batch. Metrics use the logits of each
/// batch before its parameter update.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    optim: &mut Optimizer<T>,
    data: &Dataset<T>,
    batches: &[Vec<usize>],
    epoch: usize,
) -> Result<EpochReport> {
    let start = Instant::now();
    let mut tally = Tally::default();
    let mut batch_losses = Vec::with_capacity(batches.len());
    for idx in batches {
        let (images, labels) = data.gather(idx)?;
        let mut tape = Tape::new();
        let p = model.params.bind(&mut tape);
        let x = tape.constant(images);
        let logits = model.forward(&mut tape, &p, x)?;
        let loss = tape.cross_entropy(logits, &labels)?;
        let loss_value = tape.value(loss).item().as_f64();
        tally.add_batch(tape.value(logits), &labels, loss_value)?;
        batch_losses.push(loss_value);
        let grads = tape.backward(loss)?;
        let grads = p.gradients(&tape, &grads);
        drop(tape);
        optim.step(&mut model.params, &grads)?;
    }
    Ok(EpochReport {
        metrics: tally.finish(epoch, Split::Train, start.elapsed().as_secs_f64()),
        batch_losses,
    })
}

/// Forward-only pass over `data` in order.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>, batch_size: usize, epoch: usize) -> Result<EpochMetrics> {
    let start = Instant::now();
    let mut tally = Tally::default();
    let order: Vec<usize> = (0..data.len()).collect();
    for idx in order.chunks(batch_size.max(1)) {
        let (images, labels) = data.gather(idx)?;
        let mut tape = Tape::new();
        let p = model.params.bind_frozen(&mut tape);
        let x = tape.constant(images);
        let logits = model.forward(&mut tape, &p, x)?;
        let loss = tape.cross_entropy(logits, &labels)?;
        tally.add_batch(tape.value(logits), &labels, tape.value(loss).item().as_f64())?;
    }
    Ok(tally.finish(epoch, Split::Test, start.elapsed().as_secs_f64()))
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Per epoch: a train row, then a test row. `on_epoch` sees each pair as
/// soon as it is available.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    optim: &mut Optimizer<T>,
    train: &Dataset<T>,
    subset: &[usize],
    test: &Dataset<T>,
    opts: &FitOptions,
    mut on_epoch: impl FnMut(&EpochReport, &EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    let mut rows = Vec::new();
    for epoch in 1..=opts.epochs {
        let batches = epoch_batches(subset, opts.batch_size, opts.seed, epoch)?;
        let report = train_epoch(model, optim, train, &batches, epoch)?;
        let test_row = evaluate(model, test, opts.batch_size, epoch)?;
        on_epoch(&report, &test_row);
        rows.push(report.metrics);
        rows.push(test_row);
    }
    Ok(rows)
}
