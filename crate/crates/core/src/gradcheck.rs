//! Finite-difference checks of every training loss against the tape's
//! reverse-mode gradients, through the full generator and discriminator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::batch::{ContextBatch, WindowNeighbours};
use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generators::{GeneratorParams, ModelDims};
use crate::losses::{d_loss_graph, fde_graph, g_loss_graph, l2_graph, resistance_graph};
use crate::nn::{points_matrix, ParamStore};
use crate::scene::TrainingSample;
use crate::tape::{Graph, Matrix, Var};

/// Central-difference half step.
pub const FD_STEP: f64 = 1e-6;
/// Coordinates whose analytic gradient is below this are not sampled:
/// their finite difference is dominated by rounding.
pub const MIN_GRAD: f64 = 1e-5;
/// Safety radius used for the resistance check; wide so many terms are active.
pub const CHECK_D_SAFE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLoss {
    L2,
    Fde,
    Resistance,
    GeneratorAdversarial,
    DiscriminatorAdversarial,
}

impl CheckedLoss {
    pub const ALL: [CheckedLoss; 5] = [
        CheckedLoss::L2,
        CheckedLoss::Fde,
        CheckedLoss::Resistance,
        CheckedLoss::GeneratorAdversarial,
        CheckedLoss::DiscriminatorAdversarial,
    ];

    fn discriminator_side(self) -> bool {
        self == CheckedLoss::DiscriminatorAdversarial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordinateCheck {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub loss: CheckedLoss,
    pub value: f64,
    pub coordinates: Vec<CoordinateCheck>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.coordinates.iter().map(CoordinateCheck::relative_error).fold(0.0, f64::max)
    }
}

struct Setup<'a> {
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    samples: Vec<&'a TrainingSample>,
    noise: Matrix,
    t_obs: usize,
    t_pred: usize,
}

impl Setup<'_> {
    fn truth(&self, t: usize) -> Matrix {
        points_matrix(&self.samples.iter().map(|s| s.future_truth[t]).collect::<Vec<_>>())
    }

    fn store(&mut self, disc: bool) -> &mut ParamStore {
        if disc {
            &mut self.disc.store
        } else {
            &mut self.gen.store
        }
    }

    fn build(&self, loss: CheckedLoss, g: &mut Graph) -> Var {
        let batch = ContextBatch::new(&self.samples);
        let nb = WindowNeighbours::from_samples(&self.samples);
        let tp = self.t_pred;
        let per = match loss {
            CheckedLoss::L2 => {
                let r = self.gen.forward(g, &batch, &self.noise, tp, false);
                let truth: Vec<Matrix> = (0..tp).map(|t| self.truth(t)).collect();
                l2_graph(g, &truth, &r.waypoints)
            }
            CheckedLoss::Fde => {
                let r = self.gen.forward(g, &batch, &self.noise, tp, false);
                fde_graph(g, &self.truth(tp - 1), r.intention[tp - 1])
            }
            CheckedLoss::Resistance => {
                let r = self.gen.forward(g, &batch, &self.noise, tp, false);
                resistance_graph(g, &r.waypoints, &nb.tail(self.t_obs), CHECK_D_SAFE)
            }
            CheckedLoss::GeneratorAdversarial => {
                let r = self.gen.forward(g, &batch, &self.noise, tp, false);
                let mut seq: Vec<Var> = batch.target_obs.iter().map(|m| g.constant(m.clone())).collect();
                seq.extend(r.waypoints);
                let logits = self.disc.forward(g, &seq, &nb);
                g_loss_graph(g, logits)
            }
            CheckedLoss::DiscriminatorAdversarial => {
                let fakes: Vec<Matrix> = {
                    let mut fg = Graph::new();
                    fg.freeze(self.gen.store.tag());
                    let r = self.gen.forward(&mut fg, &batch, &self.noise, tp, false);
                    r.waypoints.iter().map(|&v| fg.value(v).clone()).collect()
                };
                let obs = |g: &mut Graph, t: usize| g.constant(batch.target_obs[t].clone());
                let mut real: Vec<Var> = (0..self.t_obs).map(|t| obs(g, t)).collect();
                let mut fake: Vec<Var> = (0..self.t_obs).map(|t| obs(g, t)).collect();
                for (t, f) in fakes.iter().enumerate() {
                    real.push(g.constant(self.truth(t)));
                    fake.push(g.constant(f.clone()));
                }
                let lr = self.disc.forward(g, &real, &nb);
                let lf = self.disc.forward(g, &fake, &nb);
                d_loss_graph(g, lr, lf)
            }
        };
        g.mean(per)
    }

    fn value(&self, loss: CheckedLoss) -> f64 {
        let mut g = Graph::new();
        let v = self.build(loss, &mut g);
        g.value(v).scalar()
    }
}

/// Compares analytic and central-difference gradients of `loss` on
/// `coordinates` randomly chosen parameters of freshly initialized models.
/// The generator-side losses perturb generator parameters; the
/// discriminator loss perturbs discriminator parameters.
pub fn check_loss(
    loss: CheckedLoss,
    samples: &[TrainingSample],
    coordinates: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let first = samples.first().ok_or(Error::EmptySet)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims::default();
    let gen = GeneratorParams::new(dims, &mut rng);
    let disc = DiscriminatorParams::new(dims, &mut rng);
    let data = (0..samples.len() * dims.noise_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut s = Setup {
        gen,
        disc,
        samples: samples.iter().collect(),
        noise: Matrix::from_vec(samples.len(), dims.noise_dim, data),
        t_obs: first.t_obs(),
        t_pred: first.t_pred(),
    };

    let mut g = Graph::new();
    let out = s.build(loss, &mut g);
    let value = g.value(out).scalar();
    let side = loss.discriminator_side();
    let grads = g.backward(out).for_store(s.store(side));
    drop(g);

    let store = s.store(side);
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    let mut candidates: Vec<(usize, usize, f64)> = store
        .coordinates()
        .filter_map(|(id, e)| {
            let a = grads[id.0].as_ref().map_or(0.0, |m| m.data[e]);
            (a.abs() > MIN_GRAD).then_some((id.0, e, a))
        })
        .collect();
    if candidates.len() < coordinates {
        return Err(Error::InvalidConfig(format!(
            "{loss:?}: only {} parameters carry gradient, {coordinates} requested",
            candidates.len()
        )));
    }
    candidates.shuffle(&mut rng);

    let mut checks = Vec::with_capacity(coordinates);
    for &(p, e, analytic) in &candidates[..coordinates] {
        let id = ids[p];
        let orig = s.store(side).get(id).data[e];
        s.store(side).get_mut(id).data[e] = orig + FD_STEP;
        let up = s.value(loss);
        s.store(side).get_mut(id).data[e] = orig - FD_STEP;
        let down = s.value(loss);
        s.store(side).get_mut(id).data[e] = orig;
        checks.push(CoordinateCheck {
            param: s.store(side).name(id).to_string(),
            element: e,
            analytic,
            numeric: (up - down) / (2.0 * FD_STEP),
        });
    }
    Ok(GradientCheck {
        loss,
        value,
        coordinates: checks,
    })
}
