use navigan_core::losses::{adversarial_losses, l2_loss, resistance_loss};
use navigan_core::metrics::{ade_fde, step_reward};
use navigan_core::scene::AgentWindow;
use navigan_core::Point;
use proptest::prelude::*;

#[test]
fn reward_table() {
    let cases = [
        (-0.01, false, -0.25),
        (0.0, true, -0.25),
        (-3.0, true, -0.25),
        (0.1, false, -0.05),
        (0.1, true, -0.05),
        (0.3, true, 1.0),
        (0.2, true, 1.0),
        (0.2, false, 0.0),
        (5.0, false, 0.0),
        (f64::INFINITY, true, 1.0),
    ];
    for (d, goal, want) in cases {
        assert_eq!(step_reward(d, goal), want, "d = {d}, goal = {goal}");
    }
    // Interior of the linear branch.
    for k in 1..20 {
        let d = k as f64 * 0.01;
        assert_eq!(step_reward(d, k % 2 == 0), -0.1 + d / 2.0);
    }
}

#[test]
fn resistance_hand_values() {
    let at = |x: f64| AgentWindow {
        id: 9,
        positions: vec![Some(Point::new(x, 0.0))],
    };
    let wp = [Point::ZERO];
    assert_eq!(resistance_loss(&wp, &[at(0.7)], 0.5).unwrap(), 0.0);
    assert!((resistance_loss(&wp, &[at(0.3)], 0.5).unwrap() - 0.2).abs() < 1e-12);
    let two = resistance_loss(&wp, &[at(0.3), at(-0.4)], 0.5).unwrap();
    assert!((two - (0.2f64.powi(2) + 0.1f64.powi(2)).sqrt()).abs() < 1e-12);
}

#[test]
fn adversarial_limits() {
    let (d, g) = adversarial_losses(0.0, 0.0);
    assert!((d - 2.0 * 2f64.ln()).abs() < 1e-15);
    assert!((g - 2f64.ln()).abs() < 1e-15);
    let (d, _) = adversarial_losses(60.0, -60.0);
    assert!(d < 1e-20);
    let mut prev = f64::INFINITY;
    for k in -50..50 {
        let (_, g) = adversarial_losses(0.0, k as f64 * 0.5);
        assert!(g < prev);
        prev = g;
    }
}

fn points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point::new(x, y)), n)
}

proptest! {
    #[test]
    fn displacement_errors_match_direct_sums((truth, pred) in (1usize..30).prop_flat_map(|n| (points(n), points(n)))) {
        let (ade, fde) = ade_fde(&truth, &pred).unwrap();
        let mut sum = 0.0;
        let mut last = 0.0;
        for i in 0..truth.len() {
            let (dx, dy) = (truth[i].x - pred[i].x, truth[i].y - pred[i].y);
            last = (dx * dx + dy * dy).sqrt();
            sum += last;
        }
        prop_assert!((ade - sum / truth.len() as f64).abs() <= 1e-12);
        prop_assert!((fde - last).abs() <= 1e-12);
    }

    #[test]
    fn l2_is_homogeneous(truth in points(12), pred in points(12)) {
        let doubled: Vec<Point> = truth.iter().zip(&pred).map(|(t, p)| *t + (*p - *t) * 2.0).collect();
        let a = l2_loss(&truth, &pred).unwrap();
        let b = l2_loss(&truth, &doubled).unwrap();
        prop_assert!((b - 2.0 * a).abs() <= 1e-9 * (1.0 + a));
    }
}
