//! Adam training loop with warmup/inverse-sqrt schedule, best-dev selection and
//! checkpoint averaging.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::transformer::{forward_loss, loss_and_grad, Example};
use super::Parameters;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Upper bound on source + target tokens per batch (a single longer
    /// example still forms its own batch).
    pub batch_tokens: usize,
    pub max_steps: usize,
    pub checkpoint_avg_n: usize,
    /// Steps between dev evaluations / checkpoints.
    pub eval_every: usize,
    /// Stop after this many evaluations without dev improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 3e-3,
            warmup_steps: 200,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-9,
            batch_tokens: 512,
            max_steps: 5000,
            checkpoint_avg_n: 5,
            eval_every: 250,
            patience: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.warmup_steps < 1 {
            return bad("warmup_steps must be at least 1");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(&format!("{name} must lie in (0, 1)"));
            }
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if self.batch_tokens == 0 || self.checkpoint_avg_n == 0 || self.eval_every == 0 {
            return bad("batch_tokens, checkpoint_avg_n and eval_every must be positive");
        }
        Ok(())
    }
}

/// Learning rate at 1-based step `t`: linear warmup, then inverse-sqrt decay.
pub fn lr_at(config: &TrainConfig, t: usize) -> f64 {
    let t = t.max(1) as f64;
    let w = config.warmup_steps as f64;
    config.peak_lr * (t / w).min((w / t).sqrt())
}

/// Deterministic batch stream: each epoch is a fresh seeded shuffle, packed
/// greedily into batches of at most `batch_tokens` tokens.
#[derive(Debug, Clone)]
pub struct DataStream {
    examples: Vec<Example>,
    batch_tokens: usize,
    rng: rng::StreamRng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl DataStream {
    pub fn new(examples: Vec<Example>, batch_tokens: usize, seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("training data".into()));
        }
        Ok(Self {
            order: (0..examples.len()).collect(),
            cursor: examples.len(),
            examples,
            batch_tokens: batch_tokens.max(1),
            rng: rng::stream(seed, "shuffle"),
            epoch: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    fn cost(ex: &Example) -> usize {
        ex.source.len() + ex.target.len()
    }

    pub fn next_batch(&mut self) -> Vec<&Example> {
        let mut batch = Vec::new();
        let mut tokens = 0;
        loop {
            if self.cursor == self.order.len() {
                if !batch.is_empty() {
                    break;
                }
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
                self.epoch += 1;
            }
            let ex = &self.examples[self.order[self.cursor]];
            let c = Self::cost(ex);
            if !batch.is_empty() && tokens + c > self.batch_tokens {
                break;
            }
            tokens += c;
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch.into_iter().map(|i| &self.examples[i]).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    /// `(step, smoothed loss, nll)` for every update.
    pub train: Vec<(usize, f64, f64)>,
    /// `(step, dev nll)` at every evaluation, starting at step 0.
    pub dev: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Average of the checkpoints ending at the best dev evaluation, or that
    /// checkpoint alone when the average scores worse on dev.
    pub params: Parameters,
    pub log: LossLog,
    pub best_step: usize,
    pub best_dev_nll: f64,
    /// Dev nll of the averaged parameters.
    pub final_dev_nll: f64,
    pub steps: usize,
}

/// Token-weighted mean nll over `examples`, computed in chunks.
pub fn dev_nll(params: &Parameters, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for chunk in examples.chunks(32) {
        let fp = forward_loss(params, chunk)?;
        total += fp.stats.nll * fp.stats.tokens as f64;
        tokens += fp.stats.tokens;
    }
    if tokens == 0 {
        return Err(Error::Empty("dev set has no target tokens".into()));
    }
    Ok(total / tokens as f64)
}

/// Element-wise mean of checkpoints sharing one layout, as a running mean so
/// that identical inputs reproduce themselves exactly.
pub fn average_parameters(checkpoints: &[Parameters]) -> Result<Parameters> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::Empty("no checkpoints to average".into()))?;
    let mut out = first.clone();
    for (k, p) in checkpoints.iter().enumerate().skip(1) {
        if p.config != first.config || p.shape != first.shape {
            return Err(Error::Config("checkpoints differ in architecture".into()));
        }
        let inv = 1.0 / (k + 1) as f64;
        out.values.iter_mut().zip(&p.values).for_each(|(m, x)| *m += (x - *m) * inv);
    }
    Ok(out)
}

/// Trains `params` on `data`, evaluating on `dev` every `eval_every` steps.
pub fn train(mut params: Parameters, data: &mut DataStream, dev: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut dropout_rng = rng::stream(config.seed, "train");
    let mut log = LossLog::default();

    let mut window: VecDeque<Parameters> = VecDeque::with_capacity(config.checkpoint_avg_n);
    let mut best_window: Vec<Parameters> = vec![params.clone()];
    let mut best = dev_nll(&params, dev)?;
    let mut best_step = 0;
    log.dev.push((0, best));
    let mut stale = 0;

    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let mut step = 0;
    while step < config.max_steps {
        step += 1;
        let batch: Vec<Example> = data.next_batch().into_iter().cloned().collect();
        let (stats, grad) = loss_and_grad(&params, &batch, Some(&mut dropout_rng))?;
        if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "training diverged at step {step}: loss {}",
                stats.loss
            )));
        }
        log.train.push((step, stats.loss, stats.nll));

        let lr = lr_at(config, step);
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for i in 0..n {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            params.values[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.adam_eps);
        }

        if step % config.eval_every == 0 || step == config.max_steps {
            let d = dev_nll(&params, dev)?;
            if !d.is_finite() {
                return Err(Error::Numeric(format!("dev loss is {d} at step {step}")));
            }
            log.dev.push((step, d));
            if window.len() == config.checkpoint_avg_n {
                window.pop_front();
            }
            window.push_back(params.clone());
            if d < best {
                best = d;
                best_step = step;
                best_window = window.iter().cloned().collect();
                stale = 0;
            } else {
                stale += 1;
                if config.patience.is_some_and(|p| stale >= p) {
                    log::debug!("early stop at step {step}");
                    break;
                }
            }
        }
    }

    let mut params = average_parameters(&best_window)?;
    let mut final_dev_nll = dev_nll(&params, dev)?;
    if final_dev_nll > best {
        log::debug!("checkpoint average is worse on dev ({final_dev_nll:.4} > {best:.4}); keeping step {best_step}");
        params = best_window.pop().expect("window is nonempty");
        final_dev_nll = best;
    }
    Ok(TrainOutcome {
        params,
        log,
        best_step,
        best_dev_nll: best,
        final_dev_nll,
        steps: step,
    })
}
