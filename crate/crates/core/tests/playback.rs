mod common;

use std::sync::Arc;

use common::{line, scene_from, toy_scene};
use navigan_core::metrics::{arrival_rate, comfort_rate, report, social_score};
use navigan_core::playback::{
    build_episode_set, read_episode_dump, rollout_all, rollout_episode, write_episode_dump, EpisodeParams,
    EpisodeSpec, FrameIndex, ModelPolicy, PolicyKind, StationaryPolicy,
};
use navigan_core::{Error, FrameConfig, ModelBundle, Point, Variant};

fn specs(split: &str) -> Vec<EpisodeSpec> {
    build_episode_set(&Arc::new(toy_scene(split)), FrameConfig::default(), &EpisodeParams::default())
}

#[test]
fn goal_at_the_start_is_reached_immediately() {
    let mut spec = specs("test").remove(0);
    spec.goal = spec.history().unwrap()[7];
    let index = FrameIndex::new(&spec.scene);
    let ep = rollout_episode(&mut StationaryPolicy, &spec, &index, false).unwrap();
    assert!(ep.success);
    assert_eq!(ep.steps_used, 0);
    assert!(ep.executed.is_empty());
    assert_eq!(social_score(&[ep]).unwrap(), 1.0);
}

#[test]
fn standing_still_fails_at_the_cutoff() {
    let far: Vec<EpisodeSpec> = specs("test")
        .into_iter()
        .filter(|s| s.history().unwrap()[7].distance(s.goal) > 1.0)
        .collect();
    assert!(!far.is_empty());
    let eps = rollout_all(PolicyKind::Stationary, &far, false).unwrap();
    for ep in &eps {
        assert!(!ep.success);
        assert_eq!(ep.steps_used, 60);
        assert_eq!(ep.executed.len(), 60);
        assert_eq!(ep.min_separations.len(), 60);
    }
    assert_eq!(arrival_rate(&eps).unwrap(), 0.0);
}

#[test]
fn replaying_the_recording_always_arrives() {
    for split in ["train", "test"] {
        let all = specs(split);
        let eps = rollout_all(PolicyKind::Human, &all, false).unwrap();
        assert_eq!(eps.len(), all.len());
        assert_eq!(arrival_rate(&eps).unwrap(), 1.0);
        let r = report(&eps, 0.2).unwrap();
        assert!((0.0..=1.0).contains(&r.comfort_rate));
        assert_eq!((r.ade, r.fde), (0.0, 0.0));
        for ep in &eps {
            assert!(ep.steps_used <= 36);
        }
    }
}

#[test]
fn replay_of_a_lone_walker() {
    let n = 8 + 36;
    let scene = scene_from(&[(1, 0, &line(Point::new(0.0, 0.0), Point::new(0.4, 0.0), n))]);
    let all = build_episode_set(&Arc::new(scene), FrameConfig::default(), &EpisodeParams::default());
    assert_eq!(all.len(), 1);
    let ep = &rollout_all(PolicyKind::Human, &all, true).unwrap()[0];
    // Goal is 36 steps of 0.4 m ahead; within 0.5 m after 35 steps.
    assert_eq!(ep.steps_used, 35);
    assert!(ep.min_separations.iter().all(Option::is_none));
    assert_eq!(comfort_rate(std::slice::from_ref(ep), 0.2).unwrap(), 1.0);
    assert_eq!(ep.path.as_ref().unwrap().len(), 36);
}

#[test]
fn model_rollouts_are_reproducible_and_dump_round_trips() {
    let bundle = ModelBundle::new(Variant::NaviganR, FrameConfig::default(), Default::default(), 4);
    let some: Vec<EpisodeSpec> = specs("test").into_iter().step_by(40).collect();
    let kind = PolicyKind::Model {
        bundle: &bundle,
        intention_only: false,
        seed: 1,
    };
    let a = rollout_all(kind, &some, true).unwrap();
    let b = rollout_all(kind, &some, true).unwrap();
    assert_eq!(a, b);
    for ep in &a {
        assert_eq!(ep.first_plan.len(), 12);
        assert!(ep.executed.iter().all(|p| p.is_finite()));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.jsonl");
    write_episode_dump(&path, &a).unwrap();
    assert_eq!(read_episode_dump(&path).unwrap(), a);
}

#[test]
fn bundle_with_other_window_is_rejected() {
    let bundle = ModelBundle::new(Variant::NaviL2, FrameConfig::new(6, 12).unwrap(), Default::default(), 0);
    let spec = specs("test").remove(0);
    let mut policy = ModelPolicy::new(&bundle, false, 0);
    let err = rollout_episode(&mut policy, &spec, &FrameIndex::new(&spec.scene), false).unwrap_err();
    assert!(matches!(err, Error::ModelDimensionMismatch(_)), "{err}");
}

#[test]
fn missing_history_is_reported() {
    let mut spec = specs("test").remove(0);
    spec.start_frame -= 1000;
    assert!(matches!(spec.history(), Err(Error::InsufficientHistory { .. })));
}
