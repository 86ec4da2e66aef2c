//! Head training: decoupled-weight-decay Adam, linear warmup/decay, gradient
//! accumulation and the epoch loop over BM25-sampled triples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{batch_loss_gradient, sample_negatives, HeadGradient, ProjectionHead, TrainTriple};
use crate::config::KeyValues;
use crate::corpus::{ContextEmbeddingStore, Qrels};
use crate::error::{Error, Result};
use crate::ranking::Ranking;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub pool_depth: usize,
    pub filter_n: usize,
    pub repr_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            batch_size: 6,
            accumulation_steps: 100,
            learning_rate: 2e-6,
            warmup_steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-6,
            weight_decay: 0.1,
            epochs: 10,
            pool_depth: 100,
            filter_n: 8,
            repr_dim: 128,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "margin",
        "batch_size",
        "accumulation_steps",
        "learning_rate",
        "warmup_steps",
        "beta1",
        "beta2",
        "adam_eps",
        "weight_decay",
        "epochs",
        "pool_depth",
        "filter_n",
        "repr_dim",
        "seed",
    ];

    /// Applies every key of `kv` that names a field; other keys are ignored.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read_into("margin", &mut self.margin)?;
        kv.read_into("batch_size", &mut self.batch_size)?;
        kv.read_into("accumulation_steps", &mut self.accumulation_steps)?;
        kv.read_into("learning_rate", &mut self.learning_rate)?;
        kv.read_into("warmup_steps", &mut self.warmup_steps)?;
        kv.read_into("beta1", &mut self.beta1)?;
        kv.read_into("beta2", &mut self.beta2)?;
        kv.read_into("adam_eps", &mut self.adam_eps)?;
        kv.read_into("weight_decay", &mut self.weight_decay)?;
        kv.read_into("epochs", &mut self.epochs)?;
        kv.read_into("pool_depth", &mut self.pool_depth)?;
        kv.read_into("filter_n", &mut self.filter_n)?;
        kv.read_into("repr_dim", &mut self.repr_dim)?;
        kv.read_into("seed", &mut self.seed)?;
        self.validate()
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "margin={}\nbatch_size={}\naccumulation_steps={}\nlearning_rate={}\nwarmup_steps={}\n\
             beta1={}\nbeta2={}\nadam_eps={}\nweight_decay={}\nepochs={}\npool_depth={}\n\
             filter_n={}\nrepr_dim={}\nseed={}\n",
            self.margin,
            self.batch_size,
            self.accumulation_steps,
            self.learning_rate,
            self.warmup_steps,
            self.beta1,
            self.beta2,
            self.adam_eps,
            self.weight_decay,
            self.epochs,
            self.pool_depth,
            self.filter_n,
            self.repr_dim,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::invalid(format!("margin {} outside (0, 1)", self.margin)));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 || self.repr_dim == 0 {
            return Err(Error::invalid("batch size, accumulation steps and repr_dim must be positive"));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.filter_n >= self.pool_depth {
            return Err(Error::invalid("filter_n must be smaller than pool_depth"));
        }
        Ok(())
    }
}

/// Linear warmup to the peak rate, then linear decay to zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    /// Rate for the 0-based update `step`.
    pub fn rate(&self, step: usize) -> f64 {
        let t = step + 1;
        if t <= self.warmup_steps {
            return self.peak * t as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.peak;
        }
        let remaining = self.total_steps.saturating_sub(step) as f64;
        self.peak * (remaining / (self.total_steps - self.warmup_steps) as f64).min(1.0)
    }
}

/// Adam with decoupled weight decay. Decay applies to the weight matrix only.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: HeadGradient,
    v: HeadGradient,
}

impl AdamW {
    pub fn new(head: &ProjectionHead, config: &TrainConfig) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            step: 0,
            m: HeadGradient::zeros_like(head),
            v: HeadGradient::zeros_like(head),
        }
    }

    pub fn step(&mut self, head: &mut ProjectionHead, grad: &HeadGradient, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (weights, bias) = head.params_mut();
        let groups = [
            (weights, &grad.weights, &mut self.m.weights, &mut self.v.weights, self.weight_decay),
            (bias, &grad.bias, &mut self.m.bias, &mut self.v.bias, 0.0),
        ];
        for (params, g, m, v, decay) in groups {
            for i in 0..params.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                params[i] -= lr * (update + decay * params[i]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub updates: usize,
    pub triples_per_epoch: usize,
    pub skipped_queries: usize,
}

/// Fits `head` on triples `(query, random positive, BM25-sampled negative)`.
///
/// Each epoch visits every query that has a labelled positive and a
/// non-empty negative pool once, in a seeded shuffled order. Gradients of
/// `accumulation_steps` consecutive batches are averaged before one update;
/// a partial group at the end of an epoch is flushed.
pub fn train(
    mut head: ProjectionHead,
    queries: &ContextEmbeddingStore,
    passages: &ContextEmbeddingStore,
    qrels: &Qrels,
    bm25_rankings: &[Ranking],
    config: &TrainConfig,
) -> Result<(ProjectionHead, TrainReport)> {
    config.validate()?;
    for store in [queries, passages] {
        if store.dim() != head.context_dim() {
            return Err(Error::DimensionMismatch {
                expected: head.context_dim(),
                got: store.dim(),
            });
        }
    }
    let mut sampler = sample_negatives(qrels, bm25_rankings, config.pool_depth, config.filter_n, config.seed)?;
    let mut skipped = sampler.skipped().len();

    let mut plan: Vec<(u32, Vec<u32>)> = Vec::new();
    for q in sampler.queries() {
        let Some(qi) = queries.ids().internal(q) else {
            skipped += 1;
            continue;
        };
        let positives: Vec<u32> = qrels
            .relevant(q, 1)
            .filter_map(|d| passages.ids().internal(d))
            .collect();
        if positives.is_empty() {
            skipped += 1;
            continue;
        }
        plan.push((qi, positives));
    }
    if plan.is_empty() {
        return Err(Error::invalid("no trainable queries"));
    }

    let batches_per_epoch = plan.len().div_ceil(config.batch_size);
    let updates_per_epoch = batches_per_epoch.div_ceil(config.accumulation_steps);
    let schedule = LrSchedule {
        peak: config.learning_rate,
        warmup_steps: config.warmup_steps,
        total_steps: updates_per_epoch * config.epochs,
    };
    let mut optimizer = AdamW::new(&head, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut updates = 0;

    for epoch in 0..config.epochs {
        plan.shuffle(&mut rng);
        let mut triples = Vec::with_capacity(plan.len());
        for (qi, positives) in &plan {
            let pos = *positives.choose(&mut rng).expect("non-empty positives");
            let q_ext = queries.ids().external(*qi);
            let neg_ext = sampler.draw(q_ext).expect("pooled query");
            let neg = passages
                .ids()
                .internal(neg_ext)
                .ok_or_else(|| Error::UnknownId(neg_ext.to_owned()))?;
            triples.push((*qi, pos, neg));
        }

        let mut epoch_loss = 0.0;
        let mut acc = HeadGradient::zeros_like(&head);
        let mut pending = 0usize;
        for (b, chunk) in triples.chunks(config.batch_size).enumerate() {
            let batch: Vec<TrainTriple<'_>> = chunk
                .iter()
                .map(|&(q, p, n)| TrainTriple {
                    query: queries.row(q),
                    positive: passages.row(p),
                    negative: passages.row(n),
                })
                .collect();
            let (loss, grad) = batch_loss_gradient(&head, &batch, config.margin)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: updates,
                    loss,
                });
            }
            epoch_loss += loss;
            acc.add_scaled(&grad, 1.0);
            pending += 1;
            if pending == config.accumulation_steps || b + 1 == batches_per_epoch {
                let mut mean = HeadGradient::zeros_like(&head);
                mean.add_scaled(&acc, 1.0 / pending as f64);
                optimizer.step(&mut head, &mean, schedule.rate(updates));
                updates += 1;
                acc = HeadGradient::zeros_like(&head);
                pending = 0;
                if head.weights().iter().chain(head.bias()).any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        epoch,
                        step: updates,
                        loss: f64::NAN,
                    });
                }
            }
        }
        let mean_loss = epoch_loss / batches_per_epoch as f64;
        log::info!("epoch {epoch}: mean batch loss {mean_loss:.6}");
        epoch_losses.push(mean_loss);
    }

    Ok((
        head,
        TrainReport {
            epoch_losses,
            updates,
            triples_per_epoch: plan.len(),
            skipped_queries: skipped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 10);
        assert_eq!(c.batch_size, 6);
        assert_eq!(c.accumulation_steps, 100);
        assert_eq!(c.learning_rate, 2e-6);
        assert_eq!(c.warmup_steps, 2000);
        assert_eq!(c.margin, 0.1);
        assert_eq!((c.pool_depth, c.filter_n), (100, 8));
        assert_eq!((c.beta1, c.beta2, c.adam_eps, c.weight_decay), (0.9, 0.999, 1e-6, 0.1));
    }

    #[test]
    fn config_round_trips_through_key_values() {
        let mut c = TrainConfig {
            margin: 0.05,
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let text = c.to_key_values();
        let mut back = TrainConfig::default();
        back.apply(&KeyValues::parse(&text).unwrap()).unwrap();
        assert_eq!(back, c);
        c.margin = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let s = LrSchedule {
            peak: 1.0,
            warmup_steps: 4,
            total_steps: 12,
        };
        let rates: Vec<f64> = (0..12).map(|t| s.rate(t)).collect();
        assert_eq!(&rates[..4], &[0.25, 0.5, 0.75, 1.0]);
        assert!(rates[4..].windows(2).all(|w| w[1] < w[0]));
        assert!(rates[11] > 0.0);
        let flat = LrSchedule {
            peak: 0.5,
            warmup_steps: 0,
            total_steps: 2,
        };
        assert_eq!(flat.rate(0), 0.5);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut head = ProjectionHead::new(1, 1, vec![1.0], vec![0.0]).unwrap();
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut opt = AdamW::new(&head, &cfg);
        let grad = HeadGradient {
            weights: vec![3.0],
            bias: vec![-2.0],
        };
        opt.step(&mut head, &grad, 0.01);
        assert!((head.weights()[0] - 0.99).abs() < 1e-6);
        assert!((head.bias()[0] - 0.01).abs() < 1e-6);
    }
}
