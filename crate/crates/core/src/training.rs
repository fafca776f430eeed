//! Alternating discriminator and generator updates over shuffled mini-batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{ContextBatch, WindowNeighbours};
use crate::bundle::{ModelBundle, Variant};
use crate::error::{Error, Result};
use crate::generators::ModelDims;
use crate::losses::{d_loss_graph, fde_graph, g_loss_graph, l2_graph, resistance_graph, DEFAULT_D_SAFE};
use crate::nn::points_matrix;
use crate::optim::{clip_grad_norm, Adam};
use crate::scene::{FrameConfig, TrainingSample};
use crate::tape::{Graph, Matrix, Var};

// Independent ChaCha streams derived from one seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_G_NOISE: u64 = 2;
const STREAM_D_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_l2: f64,
    pub w_fde: f64,
    pub w_resist: f64,
    pub w_adv: f64,
    pub d_safe: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_l2: 1.0,
            w_fde: 1.0,
            w_resist: 1.0,
            w_adv: 1.0,
            d_safe: DEFAULT_D_SAFE,
        }
    }
}

impl LossWeights {
    /// Zeroes the terms a variant does not train with.
    pub fn for_variant(self, variant: Variant) -> LossWeights {
        LossWeights {
            w_fde: if variant.has_forces() { self.w_fde } else { 0.0 },
            w_adv: if variant.adversarial() { self.w_adv } else { 0.0 },
            w_resist: if variant.uses_resistance() { self.w_resist } else { 0.0 },
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.w_l2, self.w_fde, self.w_resist, self.w_adv];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        if !(self.d_safe.is_finite() && self.d_safe > 0.0) {
            return Err(Error::InvalidConfig(format!("d_safe must be positive, got {}", self.d_safe)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub seed: u64,
    /// When false the discriminator keeps its initial weights.
    pub discriminator_updates: bool,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::NaviganR,
            batch_size: 32,
            epochs: 500,
            learning_rate: 1e-3,
            grad_clip: 10.0,
            seed: 0,
            discriminator_updates: true,
            dims: ModelDims::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::InvalidConfig("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Sample-weighted epoch means of each logged loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    pub l2: f64,
    pub fde: Option<f64>,
    pub resist: Option<f64>,
}

impl EpochLog {
    pub fn csv_header(variant: Variant) -> &'static str {
        match variant {
            Variant::GoalSocial => "epoch,l2",
            Variant::NaviL2 => "epoch,l2,fde",
            Variant::Navigan => "epoch,d_loss,g_loss,l2,fde",
            Variant::NaviganR => "epoch,d_loss,g_loss,l2,fde,resist",
        }
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.epoch.to_string()];
        let mut push = |v: Option<f64>| {
            if let Some(v) = v {
                cols.push(format!("{v}"));
            }
        };
        push(self.d_loss);
        push(self.g_loss);
        push(Some(self.l2));
        push(self.fde);
        push(self.resist);
        cols.join(",")
    }
}

/// Batch means from one generator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorStepLosses {
    pub g_loss: Option<f64>,
    pub l2: f64,
    pub fde: Option<f64>,
    pub resist: Option<f64>,
}

pub struct Trainer<'a> {
    samples: &'a [TrainingSample],
    cfg: TrainConfig,
    weights: LossWeights,
    bundle: ModelBundle,
    g_opt: Adam,
    d_opt: Option<Adam>,
    shuffle_rng: ChaCha8Rng,
    g_noise_rng: ChaCha8Rng,
    d_noise_rng: ChaCha8Rng,
    epoch: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Trainer<'a> {
    pub fn new(samples: &'a [TrainingSample], cfg: TrainConfig, weights: LossWeights) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        let first = samples.first().ok_or(Error::EmptySet)?;
        let frame = FrameConfig::new(first.t_obs(), first.t_pred())?;
        if let Some(s) = samples
            .iter()
            .find(|s| s.t_obs() != frame.t_obs || s.t_pred() != frame.t_pred)
        {
            return Err(Error::InvalidConfig(format!(
                "mixed window lengths: ({}, {}) and ({}, {})",
                frame.t_obs,
                frame.t_pred,
                s.t_obs(),
                s.t_pred()
            )));
        }
        let bundle = ModelBundle::new(cfg.variant, frame, cfg.dims, cfg.seed);
        Ok(Self::with_bundle(samples, cfg, weights, bundle))
    }

    /// Continues from existing parameters (optimizer state starts fresh).
    pub fn with_bundle(
        samples: &'a [TrainingSample],
        cfg: TrainConfig,
        weights: LossWeights,
        bundle: ModelBundle,
    ) -> Self {
        let g_opt = Adam::new(bundle.generator.store(), cfg.learning_rate);
        let d_opt = bundle
            .discriminator
            .as_ref()
            .map(|d| Adam::new(&d.store, cfg.learning_rate));
        Trainer {
            samples,
            weights: weights.for_variant(bundle.variant),
            cfg: TrainConfig {
                variant: bundle.variant,
                ..cfg
            },
            bundle,
            g_opt,
            d_opt,
            shuffle_rng: stream(cfg.seed, STREAM_SHUFFLE),
            g_noise_rng: stream(cfg.seed, STREAM_G_NOISE),
            d_noise_rng: stream(cfg.seed, STREAM_D_NOISE),
            epoch: 0,
        }
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> ModelBundle {
        self.bundle
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// One pass over the shuffled samples. The last batch may be partial.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut sums = [0.0f64; 5];
        let mut seen = [false; 5];
        for (batch_no, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let w = idx.len() as f64;
            let mut acc = |k: usize, v: Option<f64>| {
                if let Some(v) = v {
                    sums[k] += w * v;
                    seen[k] = true;
                }
            };
            let d = if self.cfg.variant.adversarial() {
                let d = self.discriminator_step(idx);
                Some(self.check(d, batch_no, "discriminator loss")?)
            } else {
                None
            };
            acc(0, d);
            let g = self.generator_step(idx);
            let g = match g {
                Ok(g) => g,
                Err(Error::DivergenceDetected { detail, .. }) => {
                    return Err(Error::DivergenceDetected {
                        epoch: self.epoch,
                        batch: batch_no,
                        detail,
                    })
                }
                Err(e) => return Err(e),
            };
            acc(1, g.g_loss);
            acc(2, Some(g.l2));
            acc(3, g.fde);
            acc(4, g.resist);
        }
        let n = self.samples.len() as f64;
        let mean = |k: usize| seen[k].then(|| sums[k] / n);
        let log = EpochLog {
            epoch: self.epoch,
            d_loss: mean(0),
            g_loss: mean(1),
            l2: sums[2] / n,
            fde: mean(3),
            resist: mean(4),
        };
        self.epoch += 1;
        Ok(log)
    }

    fn check(&self, v: Result<f64>, batch: usize, what: &str) -> Result<f64> {
        let v = v?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::DivergenceDetected {
                epoch: self.epoch,
                batch,
                detail: format!("{what} is {v}"),
            })
        }
    }

    fn batch_refs(&self, idx: &[usize]) -> Vec<&'a TrainingSample> {
        idx.iter().map(|&i| &self.samples[i]).collect()
    }

    fn noise(&mut self, rows: usize, for_discriminator: bool) -> Matrix {
        let dim = self.cfg.dims.noise_dim;
        if !self.cfg.variant.uses_noise() {
            return Matrix::zeros(rows, dim);
        }
        let rng = if for_discriminator {
            &mut self.d_noise_rng
        } else {
            &mut self.g_noise_rng
        };
        let data = (0..rows * dim).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::from_vec(rows, dim, data)
    }

    /// One discriminator update on the samples at `idx`: recorded windows
    /// against windows completed by the current generator. Returns the
    /// batch-mean loss. A no-op returning the loss when updates are disabled.
    pub fn discriminator_step(&mut self, idx: &[usize]) -> Result<f64> {
        let refs = self.batch_refs(idx);
        let b = refs.len();
        let noise = self.noise(b, true);
        let ctx = ContextBatch::new(&refs);
        let t_pred = self.bundle.frame.t_pred;

        let fakes: Vec<Matrix> = {
            let mut g = Graph::new();
            g.freeze(self.bundle.generator.store().tag());
            let r = self.bundle.generator.forward(&mut g, &ctx, &noise, t_pred, false);
            r.waypoints.iter().map(|&v| g.value(v).clone()).collect()
        };
        let Some(disc) = self.bundle.discriminator.as_mut() else {
            return Err(Error::InvalidConfig(format!(
                "variant {} has no discriminator",
                self.cfg.variant
            )));
        };
        let doubled: Vec<&TrainingSample> = refs.iter().chain(&refs).copied().collect();
        let neighbours = WindowNeighbours::from_samples(&doubled);
        let mut g = Graph::new();
        let mut seq = Vec::with_capacity(neighbours.steps.len());
        for t in 0..ctx.t_obs {
            let m = &ctx.target_obs[t];
            seq.push(g.constant(stack(m, m)));
        }
        for (t, fake) in fakes.iter().enumerate() {
            let real: Vec<_> = refs.iter().map(|s| s.future_truth[t]).collect();
            seq.push(g.constant(stack(&points_matrix(&real), fake)));
        }
        let logits = disc.forward(&mut g, &seq, &neighbours);
        let real_rows: Vec<usize> = (0..b).collect();
        let fake_rows: Vec<usize> = (b..2 * b).collect();
        let real = g.gather_rows(logits, &real_rows);
        let fake = g.gather_rows(logits, &fake_rows);
        let per = d_loss_graph(&mut g, real, fake);
        let loss = g.mean(per);
        let value = g.value(loss).scalar();
        if !value.is_finite() {
            return Ok(value);
        }
        if self.cfg.discriminator_updates {
            let mut grads = g.backward(loss).take_store(&disc.store);
            clip_grad_norm(&mut grads, self.cfg.grad_clip);
            let opt = self.d_opt.as_mut().expect("discriminator optimizer");
            opt.step(&mut disc.store, &grads);
        }
        Ok(value)
    }

    /// One generator update on the samples at `idx`; the discriminator is
    /// held fixed.
    pub fn generator_step(&mut self, idx: &[usize]) -> Result<GeneratorStepLosses> {
        let refs = self.batch_refs(idx);
        let b = refs.len();
        let noise = self.noise(b, false);
        let ctx = ContextBatch::new(&refs);
        let frame = self.bundle.frame;
        let variant = self.cfg.variant;
        let wts = self.weights;

        let mut g = Graph::new();
        if let Some(d) = &self.bundle.discriminator {
            g.freeze(d.store.tag());
        }
        let r = self
            .bundle
            .generator
            .forward(&mut g, &ctx, &noise, frame.t_pred, false);
        let truth: Vec<Matrix> = (0..frame.t_pred)
            .map(|t| points_matrix(&refs.iter().map(|s| s.future_truth[t]).collect::<Vec<_>>()))
            .collect();

        let mut terms: Vec<(f64, Var)> = Vec::new();
        let l2_per = l2_graph(&mut g, &truth, &r.waypoints);
        let l2 = g.mean(l2_per);
        terms.push((wts.w_l2, l2));

        let fde = variant.has_forces().then(|| {
            let last = *r.intention.last().expect("t_pred >= 1");
            let per = fde_graph(&mut g, &truth[frame.t_pred - 1], last);
            g.mean(per)
        });
        if let Some(v) = fde {
            terms.push((wts.w_fde, v));
        }

        let full_neighbours = (variant.uses_resistance() || variant.adversarial())
            .then(|| WindowNeighbours::from_samples(&refs));
        let resist = variant.uses_resistance().then(|| {
            let future = full_neighbours.as_ref().unwrap().tail(frame.t_obs);
            let per = resistance_graph(&mut g, &r.waypoints, &future, wts.d_safe);
            g.mean(per)
        });
        if let Some(v) = resist {
            terms.push((wts.w_resist, v));
        }

        let adv = match (&self.bundle.discriminator, &full_neighbours) {
            (Some(disc), Some(nb)) => {
                let mut seq: Vec<Var> = ctx.target_obs.iter().map(|m| g.constant(m.clone())).collect();
                seq.extend(r.waypoints.iter().copied());
                let logits = disc.forward(&mut g, &seq, nb);
                let per = g_loss_graph(&mut g, logits);
                Some(g.mean(per))
            }
            _ => None,
        };
        if let Some(v) = adv {
            terms.push((wts.w_adv, v));
        }

        let mut total: Option<Var> = None;
        for (w, v) in terms {
            if w == 0.0 {
                continue;
            }
            let scaled = g.scale(v, w);
            total = Some(match total {
                Some(t) => g.add(t, scaled),
                None => scaled,
            });
        }
        let read = |v: Var| g.value(v).scalar();
        let losses = GeneratorStepLosses {
            g_loss: adv.map(read),
            l2: read(l2),
            fde: fde.map(read),
            resist: resist.map(read),
        };
        let all = [Some(losses.l2), losses.g_loss, losses.fde, losses.resist];
        if let Some(bad) = all.into_iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::DivergenceDetected {
                epoch: self.epoch,
                batch: 0,
                detail: format!("generator loss is {bad}"),
            });
        }
        if let Some(total) = total {
            let store = self.bundle.generator.store_mut();
            let mut grads = g.backward(total).take_store(store);
            clip_grad_norm(&mut grads, self.cfg.grad_clip);
            self.g_opt.step(store, &grads);
        }
        Ok(losses)
    }
}

fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    assert_eq!(top.cols, bottom.cols);
    let mut data = top.data.clone();
    data.extend_from_slice(&bottom.data);
    Matrix::from_vec(top.rows + bottom.rows, top.cols, data)
}

/// Trains for `cfg.epochs` epochs and returns the model with its per-epoch log.
pub fn train(
    samples: &[TrainingSample],
    cfg: TrainConfig,
    weights: LossWeights,
) -> Result<(ModelBundle, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(samples, cfg, weights)?;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        logs.push(trainer.run_epoch()?);
    }
    Ok((trainer.into_bundle(), logs))
}
