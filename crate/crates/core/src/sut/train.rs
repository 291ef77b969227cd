//! Mini-batch SGD training of the built-in classifier on generator samples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::latent::ClassLabel;
use crate::par::Execution;
use crate::raster::Image;
use crate::sut::network::{softmax, BuiltinSut, DenseLayer, NetworkWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub samples_per_class: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub min_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples_per_class: 2000,
            epochs: 60,
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 32,
            hidden: 64,
            holdout_fraction: 0.2,
            seed: 1,
            min_accuracy: 0.90,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "samples_per_class, batch_size and hidden must be positive".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must be in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("invalid learning_rate or momentum".into()));
        }
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return Err(Error::Config("min_accuracy must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    pub holdout_accuracy: f64,
    pub train_accuracy: f64,
    pub train_samples: usize,
    pub holdout_samples: usize,
}

/// Trains without enforcing the accuracy floor.
pub fn train_network(gen: &Generator, cfg: &TrainConfig, execution: Execution) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = gen.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut jobs = Vec::with_capacity(spec.classes * cfg.samples_per_class);
    for class in 0..spec.classes {
        for _ in 0..cfg.samples_per_class {
            jobs.push((ClassLabel(class), rng.random::<u64>()));
        }
    }
    let images: Vec<Image> = execution
        .map(&jobs, |(label, id)| {
            let seed = gen.seed_from_id(*label, *id)?;
            gen.synthesize(&seed.latent)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = jobs.iter().map(|(l, _)| l.index()).collect();

    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut rng);
    let holdout_len = ((images.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (holdout, train) = order.split_at(holdout_len.min(images.len() - 1));
    let mut train = train.to_vec();

    let inputs = spec.pixels();
    let mut net = Mlp::init(&mut rng, inputs, cfg.hidden, spec.classes);
    let mut velocity = Mlp::zeros(inputs, cfg.hidden, spec.classes);
    let mut grad = Mlp::zeros(inputs, cfg.hidden, spec.classes);

    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                net.accumulate_gradient(images[i].pixels(), labels[i], &mut grad);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            velocity.momentum_step(&grad, cfg.momentum, step);
            net.add(&velocity);
        }
    }

    let weights = net.quantize()?;
    let sut = BuiltinSut::new(weights.clone(), spec.height, spec.width)?.with_execution(execution);
    let accuracy = |idx: &[usize]| -> Result<f64> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let hits = execution
            .map(idx, |&i| sut.predict_one(&images[i]).map(|p| p.argmax().index() == labels[i]))
            .into_iter()
            .collect::<Result<Vec<bool>>>()?;
        Ok(hits.iter().filter(|h| **h).count() as f64 / idx.len() as f64)
    };
    Ok(TrainOutcome {
        holdout_accuracy: accuracy(holdout)?,
        train_accuracy: accuracy(&train)?,
        train_samples: train.len(),
        holdout_samples: holdout.len(),
        weights,
    })
}

/// Trains and fails with [`Error::TrainingQuality`] below `cfg.min_accuracy`.
pub fn train_builtin(gen: &Generator, cfg: &TrainConfig, execution: Execution) -> Result<TrainOutcome> {
    let outcome = train_network(gen, cfg, execution)?;
    if outcome.holdout_accuracy < cfg.min_accuracy {
        return Err(Error::TrainingQuality {
            accuracy: outcome.holdout_accuracy,
            threshold: cfg.min_accuracy,
        });
    }
    Ok(outcome)
}

/// Double-precision working copy of a one-hidden-layer network.
struct Mlp {
    inputs: usize,
    hidden: usize,
    classes: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Mlp {
    fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Mlp {
            inputs,
            hidden,
            classes,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * hidden],
            b2: vec![0.0; classes],
        }
    }

    fn init<R: Rng>(rng: &mut R, inputs: usize, hidden: usize, classes: usize) -> Self {
        let mut m = Self::zeros(inputs, hidden, classes);
        let he = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("valid normal");
        let xavier = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid normal");
        m.w1.iter_mut().for_each(|w| *w = he.sample(rng));
        m.w2.iter_mut().for_each(|w| *w = xavier.sample(rng));
        m
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn buffers(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn fill(&mut self, v: f64) {
        for buf in self.buffers_mut() {
            buf.iter_mut().for_each(|x| *x = v);
        }
    }

    fn momentum_step(&mut self, grad: &Mlp, momentum: f64, step: f64) {
        for (v, g) in self.buffers_mut().into_iter().zip(grad.buffers()) {
            for (v, g) in v.iter_mut().zip(g) {
                *v = momentum * *v - step * g;
            }
        }
    }

    fn add(&mut self, delta: &Mlp) {
        for (w, d) in self.buffers_mut().into_iter().zip(delta.buffers()) {
            for (w, d) in w.iter_mut().zip(d) {
                *w += d;
            }
        }
    }

    /// Adds the softmax cross-entropy gradient of one sample to `grad`.
    fn accumulate_gradient(&self, x: &[f64], label: usize, grad: &mut Mlp) {
        let mut pre = vec![0.0; self.hidden];
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            *p = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
        }
        let h: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.b2[k]
            })
            .collect();
        let mut dz = softmax(&logits);
        dz[label] -= 1.0;

        let mut dh = vec![0.0; self.hidden];
        for (k, d) in dz.iter().enumerate() {
            grad.b2[k] += d;
            let row = k * self.hidden;
            for j in 0..self.hidden {
                grad.w2[row + j] += d * h[j];
                dh[j] += d * self.w2[row + j];
            }
        }
        for j in 0..self.hidden {
            if pre[j] <= 0.0 {
                continue;
            }
            let d = dh[j];
            grad.b1[j] += d;
            let row = &mut grad.w1[j * self.inputs..(j + 1) * self.inputs];
            for (g, v) in row.iter_mut().zip(x) {
                *g += d * v;
            }
        }
    }

    fn quantize(&self) -> Result<NetworkWeights> {
        let f = |v: &Vec<f64>| v.iter().map(|x| *x as f32).collect::<Vec<f32>>();
        NetworkWeights::new(vec![
            DenseLayer {
                inputs: self.inputs,
                outputs: self.hidden,
                weights: f(&self.w1),
                bias: f(&self.b1),
            },
            DenseLayer {
                inputs: self.hidden,
                outputs: self.classes,
                weights: f(&self.w2),
                bias: f(&self.b2),
            },
        ])
    }
}
