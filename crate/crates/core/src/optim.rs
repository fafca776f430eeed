use crate::nn::{ParamId, ParamStore};
use crate::tape::Matrix;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Matrix> = store
            .iter()
            .map(|(_, _, m)| Matrix::zeros(m.rows, m.cols))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Matrix>]) {
        assert_eq!(grads.len(), store.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.get_mut(ParamId(i));
            for k in 0..grad.data.len() {
                let gk = grad.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m.data[k] / bc1;
                let vh = v.data[k] / bc2;
                p.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Matrix>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(Matrix::sum_squares)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for v in &mut g.data {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new(1);
        store.add("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]));
        let mut opt = Adam::new(&store, 0.001);
        opt.step(&mut store, &[Some(Matrix::from_vec(1, 2, vec![0.5, -2.0]))]);
        let w = &store.get(ParamId(0)).data;
        assert!((w[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 0.001)).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut store = ParamStore::new(1);
        store.add("w", Matrix::from_vec(1, 1, vec![3.0]));
        let mut opt = Adam::new(&store, 0.05);
        for _ in 0..2000 {
            let w = store.get(ParamId(0)).data[0];
            opt.step(&mut store, &[Some(Matrix::from_vec(1, 1, vec![2.0 * (w - 0.5)]))]);
        }
        assert!((store.get(ParamId(0)).data[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn clipping_caps_the_joint_norm() {
        let mut g = vec![Some(Matrix::from_vec(1, 2, vec![3.0, 0.0])), None, Some(Matrix::from_vec(1, 1, vec![4.0]))];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        let after: f64 = g.iter().flatten().map(Matrix::sum_squares).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        let mut small = vec![Some(Matrix::from_vec(1, 1, vec![0.5]))];
        clip_grad_norm(&mut small, 10.0);
        assert_eq!(small[0].as_ref().unwrap().data[0], 0.5);
    }
}
