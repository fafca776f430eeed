//! Training objectives, each in a plain form over points and a batched form
//! over graph nodes. The batched forms return one value per sample as a
//! `batch x 1` column.

use crate::batch::WindowNeighbours;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scene::AgentWindow;
use crate::tape::{softplus, Graph, Matrix, Var};

/// Safety distance of the resistance loss, meters.
pub const DEFAULT_D_SAFE: f64 = 0.5;

/// Euclidean norm of the stacked residual between two paths.
pub fn l2_loss(truth: &[Point], pred: &[Point]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let sq: f64 = truth
        .iter()
        .zip(pred)
        .map(|(a, b)| {
            let d = *a - *b;
            d.x * d.x + d.y * d.y
        })
        .sum();
    Ok(sq.sqrt())
}

/// Distance between the recorded final position and the intention path's final point.
pub fn fde_loss(truth_final: Point, intention_final: Point) -> f64 {
    truth_final.distance(intention_final)
}

/// `|| max(d_safe - d_o, 0) ||_2` over every (step, recorded neighbour) pair.
/// `others_future[j].positions[t]` is neighbour `j` at the time of `waypoints[t]`.
pub fn resistance_loss(waypoints: &[Point], others_future: &[AgentWindow], d_safe: f64) -> Result<f64> {
    let mut sq = 0.0;
    for w in others_future {
        if w.positions.len() != waypoints.len() {
            return Err(Error::LengthMismatch {
                left: waypoints.len(),
                right: w.positions.len(),
            });
        }
        for (wp, p) in waypoints.iter().zip(&w.positions) {
            if let Some(p) = p {
                let term = (d_safe - wp.distance(*p)).max(0.0);
                sq += term * term;
            }
        }
    }
    Ok(sq.sqrt())
}

/// Non-saturating logistic losses `(discriminator, generator)`.
pub fn adversarial_losses(logit_real: f64, logit_fake: f64) -> (f64, f64) {
    // -ln σ(x) = softplus(-x), -ln(1 - σ(x)) = softplus(x)
    let d = softplus(-logit_real) + softplus(logit_fake);
    let g = softplus(-logit_fake);
    (d, g)
}

/// Per-sample L2 over per-step `batch x 2` predictions.
pub fn l2_graph(g: &mut Graph, truth: &[Matrix], pred: &[Var]) -> Var {
    assert_eq!(truth.len(), pred.len());
    let diffs: Vec<Var> = truth
        .iter()
        .zip(pred)
        .map(|(t, &p)| {
            let t = g.constant(t.clone());
            g.sub(p, t)
        })
        .collect();
    let stacked = g.concat_cols(&diffs);
    g.row_norms(stacked)
}

pub fn fde_graph(g: &mut Graph, truth_final: &Matrix, pred_final: Var) -> Var {
    let t = g.constant(truth_final.clone());
    let d = g.sub(pred_final, t);
    g.row_norms(d)
}

/// Per-sample resistance loss; `neighbours.steps[t]` pairs with `waypoints[t]`.
pub fn resistance_graph(g: &mut Graph, waypoints: &[Var], neighbours: &WindowNeighbours, d_safe: f64) -> Var {
    assert_eq!(waypoints.len(), neighbours.steps.len());
    let b = neighbours.size;
    let mut terms = Vec::new();
    let mut groups = vec![Vec::new(); b];
    let mut offset = 0;
    for (wp, step) in waypoints.iter().zip(&neighbours.steps) {
        if step.owner.is_empty() {
            continue;
        }
        let anchor = g.gather_rows(*wp, &step.owner);
        let others = g.constant(step.positions.clone());
        let diff = g.sub(anchor, others);
        let dist = g.row_norms(diff);
        let gap = g.affine(dist, -1.0, d_safe);
        let active = g.relu(gap);
        terms.push(g.mul(active, active));
        for (r, &k) in step.owner.iter().enumerate() {
            groups[k].push(offset + r);
        }
        offset += step.owner.len();
    }
    if terms.is_empty() {
        return g.constant(Matrix::zeros(b, 1));
    }
    let all = g.concat_rows(&terms);
    let per_sample = g.group_sum(all, &groups);
    g.sqrt(per_sample)
}

/// Per-sample discriminator loss on paired real and fake logits.
pub fn d_loss_graph(g: &mut Graph, real: Var, fake: Var) -> Var {
    let neg_real = g.scale(real, -1.0);
    let a = g.softplus(neg_real);
    let b = g.softplus(fake);
    g.add(a, b)
}

pub fn g_loss_graph(g: &mut Graph, fake: Var) -> Var {
    let neg = g.scale(fake, -1.0);
    g.softplus(neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn l2_values() {
        let a = pts(&[(0.0, 0.0), (1.0, 2.0)]);
        assert_eq!(l2_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(l2_loss(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)])).unwrap(), 5.0);
        let b = pts(&[(0.5, -1.0), (2.0, 2.5)]);
        let doubled: Vec<Point> = a.iter().zip(&b).map(|(x, y)| *x + (*y - *x) * 2.0).collect();
        let base = l2_loss(&a, &b).unwrap();
        assert!((l2_loss(&a, &doubled).unwrap() - 2.0 * base).abs() < 1e-12);
        assert!(matches!(l2_loss(&a, &b[..1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn fde_values() {
        let p = Point::new(1.25, -3.0);
        assert_eq!(fde_loss(p, p), 0.0);
        assert_eq!(fde_loss(Point::ZERO, Point::new(1.0, 0.0)), 1.0);
        let off = Point::new(7.0, -2.0);
        let q = Point::new(0.0, 4.0);
        assert!((fde_loss(p + off, q + off) - fde_loss(p, q)).abs() < 1e-12);
    }

    fn window(positions: Vec<Option<Point>>) -> AgentWindow {
        AgentWindow { id: 9, positions }
    }

    #[test]
    fn resistance_values() {
        let wp = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let far = window(vec![Some(Point::new(0.0, 0.6)), Some(Point::new(1.0, 0.5))]);
        assert_eq!(resistance_loss(&wp, &[far], 0.5).unwrap(), 0.0);

        let one = window(vec![Some(Point::new(0.3, 0.0)), None]);
        assert!((resistance_loss(&wp, &[one], 0.5).unwrap() - 0.2).abs() < 1e-12);

        let two = window(vec![Some(Point::new(0.0, 0.3)), Some(Point::new(1.4, 0.0))]);
        let expected = (0.2f64 * 0.2 + 0.1 * 0.1).sqrt();
        let got = resistance_loss(&wp, &[two], 0.5).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.2236).abs() < 1e-4);
    }

    #[test]
    fn adversarial_closed_forms() {
        let (d, g) = adversarial_losses(0.0, 0.0);
        assert!((d - 2.0 * LN_2).abs() < 1e-15);
        assert!((g - LN_2).abs() < 1e-15);
        let (d, _) = adversarial_losses(800.0, -800.0);
        assert_eq!(d, 0.0);
        let mut prev = f64::INFINITY;
        for k in -40..=40 {
            let (_, g) = adversarial_losses(0.0, k as f64 * 0.5);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn batched_forms_match_plain_forms() {
        let truth = pts(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.75)]);
        let pred = pts(&[(0.1, 0.0), (0.8, 0.7), (2.5, 0.0)]);
        let others = vec![
            window(vec![Some(Point::new(0.2, 0.1)), None, Some(Point::new(2.3, 0.2))]),
            window(vec![None, Some(Point::new(0.8, 0.9)), None]),
        ];
        let mut g = Graph::new();
        let truth_m: Vec<Matrix> = truth.iter().map(|p| crate::nn::points_matrix(&[*p])).collect();
        let pred_v: Vec<Var> = pred.iter().map(|p| g.constant(crate::nn::points_matrix(&[*p]))).collect();
        let l2 = l2_graph(&mut g, &truth_m, &pred_v);
        assert_eq!(g.value(l2).scalar(), l2_loss(&truth, &pred).unwrap());
        let fde = fde_graph(&mut g, &truth_m[2], pred_v[2]);
        assert!((g.value(fde).scalar() - fde_loss(truth[2], pred[2])).abs() < 1e-15);
        let nb = WindowNeighbours::new(&[others.as_slice()], 3);
        let r = resistance_graph(&mut g, &pred_v, &nb, 0.5);
        let plain = resistance_loss(&pred, &others, 0.5).unwrap();
        assert!(plain > 0.0);
        assert!((g.value(r).scalar() - plain).abs() < 1e-15);

        let real = g.constant(Matrix::from_vec(1, 1, vec![0.7]));
        let fake = g.constant(Matrix::from_vec(1, 1, vec![-1.3]));
        let dl = d_loss_graph(&mut g, real, fake);
        let gl = g_loss_graph(&mut g, fake);
        let (d, gg) = adversarial_losses(0.7, -1.3);
        assert_eq!(g.value(dl).scalar(), d);
        assert_eq!(g.value(gl).scalar(), gg);
    }
}
